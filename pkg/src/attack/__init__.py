"""
对抗攻击模块

CAAT (cross-attention co-training + PGD) and the static, separated and
subset-variant baselines.
"""

from .attacker import (
    ATTACKS, caat_attack, clip_delta, run_attack, separated_attack, static_pgd_attack, subset_variant_attack,
)
from .models import (
    ATTACK_PRESETS, CO_TRAIN_SUBSETS, AttackConfig, AttackMode, AttackResult, AttackTrace, Perturbation,
)

__all__ = [
    "ATTACKS", "caat_attack", "clip_delta", "run_attack", "separated_attack", "static_pgd_attack",
    "subset_variant_attack",
    "ATTACK_PRESETS", "CO_TRAIN_SUBSETS", "AttackConfig", "AttackMode", "AttackResult", "AttackTrace",
    "Perturbation",
]
