"""
定制化微调模块

Full, kv-only and embedding-only fine-tuning of the denoiser on subject photos.
"""

from .finetuner import finetune, generate_subject
from .models import METHOD_DEFAULTS, METHOD_SUBSETS, FineTuneConfig, FineTuneMethod, FineTuneResult

__all__ = [
    "finetune", "generate_subject",
    "METHOD_DEFAULTS", "METHOD_SUBSETS", "FineTuneConfig", "FineTuneMethod", "FineTuneResult",
]
