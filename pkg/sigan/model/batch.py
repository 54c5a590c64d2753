"""Conversion of SixTuples into batched torch tensors."""
from typing import List, NamedTuple

import numpy as np
import torch

__all__ = ['TensorBatch', 'collate', 'as_mask_tensor']


class TensorBatch(NamedTuple):
    """Batched six-tuples; masks carry a singleton channel axis."""
    composite: torch.Tensor
    object_mask: torch.Tensor
    background_mask: torch.Tensor
    object_illum: torch.Tensor
    background_illum: torch.Tensor
    gt_harmonized: torch.Tensor
    sample_ids: List[str]

    def to(self, device=None, dtype=None):
        tensors = {k: v.to(device=device, dtype=dtype) for k, v in self._asdict().items() if k != 'sample_ids'}
        return self._replace(**tensors)

    def __len__(self):
        return len(self.sample_ids)


def _stack(arrays):
    return torch.from_numpy(np.stack([np.asarray(a, dtype=np.float32) for a in arrays]))


def collate(tuples):
    """Stacks a list of SixTuples into a TensorBatch (float32, CPU)."""

    tuples = list(tuples)
    return TensorBatch(
        composite=_stack([t.composite for t in tuples]),
        object_mask=_stack([t.object_mask for t in tuples]).unsqueeze(1),
        background_mask=_stack([t.background_mask for t in tuples]).unsqueeze(1),
        object_illum=_stack([t.object_illum for t in tuples]),
        background_illum=_stack([t.background_illum for t in tuples]),
        gt_harmonized=_stack([t.gt_harmonized for t in tuples]),
        sample_ids=[t.sample_id for t in tuples])


def as_mask_tensor(mask):
    """Brings a mask tensor to (B, 1, H, W)."""

    if mask.dim() == 2:
        return mask[None, None]
    if mask.dim() == 3:
        return mask.unsqueeze(1)
    return mask
