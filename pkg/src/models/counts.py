from functools import reduce
import operator

import torch
import torch.nn as nn

count_ops = 0
count_params = 0

MEASURED = (nn.Conv3d, nn.ConvTranspose3d, nn.Linear, nn.BatchNorm3d)
PASSIVE = (nn.ReLU, nn.Identity, nn.Dropout, nn.MaxPool3d)


def get_num_gen(gen):
    return sum(1 for x in gen)


def is_leaf(model):
    return get_num_gen(model.children()) == 0


def get_layer_param(model):
    return sum([reduce(operator.mul, i.size(), 1) for i in model.parameters()])


def count_parameters(model, trainable_only=True):
    return sum(p.numel() for p in model.parameters() if p.requires_grad or not trainable_only)


def measure_layer(layer, x, y):
    """Accumulate multiply-adds and parameters of one leaf layer given its input and output."""
    global count_ops, count_params
    delta_ops = 0
    delta_params = 0

    if isinstance(layer, nn.Conv3d):
        k = reduce(operator.mul, layer.kernel_size, 1)
        delta_ops = layer.in_channels * layer.out_channels * k * y[0, 0].numel() / layer.groups
        delta_params = get_layer_param(layer)

    elif isinstance(layer, nn.ConvTranspose3d):
        # every input voxel scatters a full kernel
        k = reduce(operator.mul, layer.kernel_size, 1)
        delta_ops = layer.in_channels * layer.out_channels * k * x[0, 0].numel() / layer.groups
        delta_params = get_layer_param(layer)

    elif isinstance(layer, nn.Linear):
        weight_ops = layer.weight.numel()
        bias_ops = layer.bias.numel() if layer.bias is not None else 0
        delta_ops = weight_ops + bias_ops
        delta_params = get_layer_param(layer)

    elif isinstance(layer, nn.BatchNorm3d):
        delta_params = get_layer_param(layer)

    elif not isinstance(layer, PASSIVE):
        raise TypeError(f'Unknown layer type: {type(layer).__name__}')

    count_ops += delta_ops
    count_params += delta_params


def measure_model(model, input_shape, *extra_inputs):
    """Multiply-adds and parameter count of one forward pass at batch size 1.

    ``input_shape`` excludes the batch dimension; ``extra_inputs`` are passed
    through to ``forward`` (e.g. a class vector).
    """
    global count_ops, count_params
    count_ops = 0
    count_params = 0
    param = next(model.parameters())
    data = torch.zeros((1,) + tuple(input_shape), device=param.device, dtype=param.dtype)

    hooks = [m.register_forward_hook(lambda m, inp, out: measure_layer(m, inp[0], out))
             for m in model.modules() if is_leaf(m)]
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            model(data, *extra_inputs)
    finally:
        for h in hooks:
            h.remove()
        model.train(was_training)

    return count_ops, count_params
