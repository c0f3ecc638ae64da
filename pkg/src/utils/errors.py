"""
Error hierarchy

Every failure raised by the lab derives from CAATError so the CLI can turn it
into a machine-readable record.
"""

from typing import Any, Dict, List, Optional


class CAATError(Exception):
    """Base class for all lab errors"""

    kind = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable error record"""
        return {"error": self.kind, "message": self.message, **self.details}


class ConfigError(CAATError, ValueError):
    """Invalid or missing configuration"""

    kind = "config_error"

    def __init__(self, message: str, missing: Optional[List[str]] = None, **details: Any):
        if missing:
            details["missing"] = list(missing)
        super().__init__(message, **details)
        self.missing = list(missing or [])


class UsageError(CAATError):
    """Conflicting or incomplete command-line flags"""

    kind = "usage_error"


class ShapeError(CAATError, ValueError):
    """Operand dimensions do not agree"""

    kind = "shape_error"


class ContractViolation(CAATError):
    """A caller broke an operation pre-condition"""

    kind = "contract_violation"


class TimestepError(CAATError, IndexError):
    """Diffusion timestep outside [0, T)"""

    kind = "index_error"


class VocabularyError(CAATError, KeyError):
    """Token not present in the vocabulary"""

    kind = "vocabulary_error"

    def __str__(self) -> str:
        return self.message


class TrainingError(CAATError):
    """Optimization diverged"""

    kind = "training_error"

    def __init__(self, message: str, step: int, **details: Any):
        super().__init__(message, step=step, **details)
        self.step = step


class AttackFailure(TrainingError):
    """Attack loop produced a non-finite loss"""

    kind = "attack_failure"


class FreezeViolation(CAATError):
    """A parameter outside the trainable subset changed"""

    kind = "freeze_violation"


class IngestionError(CAATError):
    """An input image folder could not be read"""

    kind = "ingestion_error"


class ArtifactError(CAATError, OSError):
    """An output artifact could not be written"""

    kind = "io_error"


class MetricError(CAATError):
    """A metric is undefined for the given inputs"""

    kind = "metric_error"


class ExtractorQualityError(MetricError):
    """Feature extractor too weak for the metrics to mean anything"""

    kind = "extractor_quality_error"


class ReportError(CAATError):
    """Run manifests are missing or inconsistent"""

    kind = "report_error"
