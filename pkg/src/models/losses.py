"""Masked L1 loss over the unknown region of a partial scan."""
from typing import Tuple

import torch

from src.errors import ShapeError
from src.grid.voxel_grid import DEFAULT_TRUNCATION


def masked_l1_loss(pred: torch.Tensor, target: torch.Tensor, known: torch.Tensor,
                   truncation: float = DEFAULT_TRUNCATION) -> torch.Tensor:
    """Mean ``|pred - target|`` over voxels with ``known == 0``, both clamped at ``truncation``.

    An empty unknown set gives a zero loss with zero gradient. The subgradient
    at an exact match is zero (``torch.abs`` convention).
    """
    if pred.shape != target.shape or pred.shape != known.shape:
        raise ShapeError(f"shape mismatch: pred {tuple(pred.shape)}, target {tuple(target.shape)}, known {tuple(known.shape)}")
    unknown = (known == 0).to(pred.dtype)
    count = unknown.sum()
    diff = torch.abs(torch.clamp(pred, max=truncation) - torch.clamp(target, max=truncation))
    return (diff * unknown).sum() / torch.clamp(count, min=1.0)


def masked_l1_loss_with_grad(pred: torch.Tensor, target: torch.Tensor, known: torch.Tensor,
                             truncation: float = DEFAULT_TRUNCATION) -> Tuple[torch.Tensor, torch.Tensor]:
    pred = pred.detach().requires_grad_(True)
    loss = masked_l1_loss(pred, target, known, truncation)
    (grad,) = torch.autograd.grad(loss, pred)
    return loss.detach(), grad
