"""Exception hierarchy for DeepEnvelope.

Every error carries a stable ``code`` so the CLI can print a single
machine-parsable line.
"""


class DeepEnvelopeError(Exception):
    """Base class for all pipeline errors."""

    code = "deep_envelope_error"


class DatasetFormatError(DeepEnvelopeError):
    """Input file is missing, ragged, non-numeric or empty."""

    code = "dataset_format"


class ConflictingLabelsError(DeepEnvelopeError):
    """One subject carries more than one class label."""

    code = "conflicting_labels"


class RaggedEnvelopesError(DeepEnvelopeError):
    """Envelopes have unequal segment counts where equal counts are required."""

    code = "ragged_envelopes"


class SingleClassError(DeepEnvelopeError):
    """Only one class is present where both are required."""

    code = "single_class"


class DegenerateClassError(DeepEnvelopeError):
    """Nearest hit or nearest miss does not exist for a row."""

    code = "degenerate_class"


class CutoffError(DeepEnvelopeError):
    """Pruning would remove every segment of an envelope."""

    code = "cutoff_exhausts_envelope"


class ClusterCountError(DeepEnvelopeError):
    """Requested cluster count is outside 1..N."""

    code = "cluster_count"


class DegenerateClusterError(DeepEnvelopeError):
    """Coupled center system is singular or not positive definite."""

    code = "degenerate_cluster_mass"


class LayerExhaustedError(DeepEnvelopeError):
    """Deep space cannot grow another layer."""

    code = "layer_exhausted"


class DimensionMismatchError(DeepEnvelopeError):
    """Prediction input does not match the training dimension."""

    code = "dimension_mismatch"


class FoldError(DeepEnvelopeError):
    """Cross-validation folds cannot keep both classes in training."""

    code = "fold"


class ConfigError(DeepEnvelopeError):
    """Configuration is malformed or infeasible for the dataset."""

    code = "config"


class PipelineError(DeepEnvelopeError):
    """A module error raised inside a named fold and stage."""

    code = "pipeline"

    def __init__(self, message: str, cause: DeepEnvelopeError):
        super().__init__(message)
        self.cause = cause
        self.code = cause.code
