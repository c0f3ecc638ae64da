"""
Byte-level parameter freezing checks
"""

from typing import Dict, Iterable

import torch.nn as nn

from ..utils.errors import FreezeViolation


def parameter_bytes(model: nn.Module) -> Dict[str, bytes]:
    """Raw byte image of every named parameter"""
    return {name: p.detach().cpu().contiguous().numpy().tobytes() for name, p in model.named_parameters()}


def assert_frozen(before: Dict[str, bytes], model: nn.Module, trainable: Iterable[str], label: str = "run") -> None:
    """Raise FreezeViolation when a parameter outside `trainable` changed"""
    allowed = set(trainable)
    after = parameter_bytes(model)
    changed = [name for name, raw in before.items() if name not in allowed and after.get(name) != raw]
    if changed:
        raise FreezeViolation(f"{label}: frozen parameters changed: {changed}", parameters=changed)
