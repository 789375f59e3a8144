import torch.nn as nn
import torch.nn.functional as F


class DownBlock(nn.Module):
    """Strided 3D convolution halving every spatial axis, then BN and ReLU."""

    def __init__(self, input_channel, output_channel, kernel_size=4, stride=2, padding=1, norm=True):
        super(DownBlock, self).__init__()
        self.conv = nn.Conv3d(input_channel, output_channel, kernel_size=kernel_size, stride=stride,
                              padding=padding, bias=not norm)
        self.bn = nn.BatchNorm3d(output_channel) if norm else nn.Identity()

    def forward(self, inputs):
        return F.relu(self.bn(self.conv(inputs)), inplace=True)


class UpBlock(nn.Module):
    """3D up-convolution doubling every spatial axis.

    final: no normalization on the last layer; the output is rectified so the
    prediction stays a nonnegative distance field.
    """

    def __init__(self, input_channel, output_channel, kernel_size=4, stride=2, padding=1, final=False):
        super(UpBlock, self).__init__()
        self.final = final
        self.deconv = nn.ConvTranspose3d(input_channel, output_channel, kernel_size=kernel_size, stride=stride,
                                         padding=padding, bias=final)
        self.bn = nn.Identity() if final else nn.BatchNorm3d(output_channel)

    def forward(self, inputs):
        x = self.bn(self.deconv(inputs))
        # not in place: the final activation feeds the loss directly
        return F.relu(x) if self.final else F.relu(x, inplace=True)
