# encoding: utf-8
import math
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.errors import ShapeError
from src.models.blocks import DownBlock, UpBlock


class EncoderPredictor(nn.Module):
    """Encoder-predictor network completing a partial volume into a distance field.

    Four strided conv stages compress the input, two fully connected layers
    form the latent code, the class vector is appended, two more fully
    connected layers expand back and four up-convolutions grow the volume to
    full size. With ``use_skips`` every encoder stage is concatenated onto the
    predictor stage of equal resolution.
    """

    def __init__(self, num_classes, in_channels=2, channels: Sequence[int] = (8, 16, 32, 64), latent_dim=512,
                 resolution=32, use_skips=True, use_class_vector=True):
        super(EncoderPredictor, self).__init__()
        if resolution % (2 ** len(channels)):
            raise ShapeError(f"resolution {resolution} is not divisible by 2^{len(channels)}")
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.channels = tuple(int(c) for c in channels)
        self.latent_dim = latent_dim
        self.resolution = resolution
        self.use_skips = use_skips
        self.use_class_vector = use_class_vector
        self.bottleneck = resolution // 2 ** len(channels)
        flat = self.channels[-1] * self.bottleneck ** 3

        widths = (in_channels,) + self.channels
        self.encoder = nn.ModuleList(DownBlock(widths[i], widths[i + 1]) for i in range(len(self.channels)))

        self.fc_encode = nn.Sequential(
            nn.Linear(flat, latent_dim), nn.ReLU(inplace=True),
            nn.Linear(latent_dim, latent_dim), nn.ReLU(inplace=True),
        )
        class_width = num_classes if use_class_vector else 0
        self.fc_decode = nn.Sequential(
            nn.Linear(latent_dim + class_width, latent_dim), nn.ReLU(inplace=True),
            nn.Linear(latent_dim, flat), nn.ReLU(inplace=True),
        )

        skip = 2 if use_skips else 1
        out_widths = self.channels[-2::-1] + (1,)
        in_widths = self.channels[::-1]
        self.predictor = nn.ModuleList(
            UpBlock(skip * in_widths[i], out_widths[i], final=(i == len(self.channels) - 1))
            for i in range(len(self.channels))
        )

        self.weights_init()

    def weights_init(self):
        for m in self.modules():
            if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
                n = m.kernel_size[0] * m.kernel_size[1] * m.kernel_size[2] * m.out_channels
                m.weight.data.normal_(0, math.sqrt(2. / n))
                if m.bias is not None:
                    m.bias.data.zero_()

            elif isinstance(m, nn.BatchNorm3d):
                m.weight.data.fill_(1)
                m.bias.data.zero_()

    def architecture(self):
        return {
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
            "channels": list(self.channels),
            "latent_dim": self.latent_dim,
            "resolution": self.resolution,
            "use_skips": self.use_skips,
            "use_class_vector": self.use_class_vector,
        }

    def forward(self, inputs, class_probs=None, zero_skips=False):
        if inputs.dim() != 5 or inputs.shape[1] != self.in_channels or tuple(inputs.shape[2:]) != (self.resolution,) * 3:
            raise ShapeError(
                f"expected input (N, {self.in_channels}, {self.resolution}, {self.resolution}, {self.resolution}), "
                f"got {tuple(inputs.shape)}"
            )

        skips = []
        x = inputs
        for block in self.encoder:
            x = block(x)
            skips.append(x)

        x = self.fc_encode(x.flatten(1))
        if self.use_class_vector:
            if class_probs is None:
                class_probs = x.new_full((x.shape[0], self.num_classes), 1.0 / self.num_classes)
            # the class vector is context, never a training target
            x = torch.cat([x, class_probs.detach().to(x.dtype)], dim=1)
        x = self.fc_decode(x)
        x = x.view(x.shape[0], self.channels[-1], self.bottleneck, self.bottleneck, self.bottleneck)

        for block, skip in zip(self.predictor, reversed(skips)):
            if self.use_skips:
                x = torch.cat([x, torch.zeros_like(skip) if zero_skips else skip], dim=1)
            x = block(x)
        return x


class ShapeClassifier(nn.Module):
    """Small volumetric CNN over complete distance fields.

    The penultimate fully connected activations double as the retrieval
    descriptor.
    """

    def __init__(self, num_classes, feature_dim=128, resolution=32):
        super(ShapeClassifier, self).__init__()
        if resolution % 8:
            raise ShapeError(f"classifier resolution must be a multiple of 8, got {resolution}")
        self.num_classes = num_classes
        self.feature_dim = feature_dim
        self.resolution = resolution

        self.conv0 = nn.Conv3d(1, 16, kernel_size=5, stride=2, padding=2, bias=False)
        self.bn0 = nn.BatchNorm3d(16)
        self.conv1 = nn.Conv3d(16, 32, kernel_size=3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(32)
        self.conv2 = nn.Conv3d(32, 64, kernel_size=3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(64)
        self.fc_feature = nn.Linear(64 * (resolution // 8) ** 3, feature_dim)
        self.fc = nn.Linear(feature_dim, num_classes)

        self.weights_init()

    def weights_init(self):
        for m in self.modules():
            if isinstance(m, nn.Conv3d):
                n = m.kernel_size[0] * m.kernel_size[1] * m.kernel_size[2] * m.out_channels
                m.weight.data.normal_(0, math.sqrt(2. / n))

            elif isinstance(m, nn.BatchNorm3d):
                m.weight.data.fill_(1)
                m.bias.data.zero_()

    def architecture(self):
        return {"num_classes": self.num_classes, "feature_dim": self.feature_dim, "resolution": self.resolution}

    def embed(self, inputs):
        """Penultimate layer output before rectification."""
        if inputs.dim() != 5 or inputs.shape[1] != 1 or tuple(inputs.shape[2:]) != (self.resolution,) * 3:
            raise ShapeError(f"expected input (N, 1, {self.resolution}, {self.resolution}, {self.resolution}), "
                             f"got {tuple(inputs.shape)}")
        x = F.relu(self.bn0(self.conv0(inputs)), inplace=True)
        x = F.max_pool3d(F.relu(self.bn1(self.conv1(x)), inplace=True), 2)
        x = F.max_pool3d(F.relu(self.bn2(self.conv2(x)), inplace=True), 2)
        return self.fc_feature(x.flatten(1))

    def features(self, inputs):
        return F.normalize(self.embed(inputs), dim=1)

    def forward(self, inputs):
        return self.fc(F.relu(self.embed(inputs)))
