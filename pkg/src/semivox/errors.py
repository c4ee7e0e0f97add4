"""Exception hierarchy. Every error carries a short machine-readable `kind`
used by the CLI to print one-line `error: <kind>: <detail>` messages."""


class SemivoxError(Exception):
    kind = "error"


class FormatError(SemivoxError):
    """Malformed file header or magic."""
    kind = "format"


class LengthMismatchError(SemivoxError):
    """Declared dims disagree with the payload size."""
    kind = "length-mismatch"


class ValidationError(SemivoxError):
    """Data violates a type invariant (NaN payload, bad range, bad shape)."""
    kind = "validation"


class WriteError(SemivoxError):
    kind = "io"


class ReadError(SemivoxError):
    kind = "io"


class ConfigError(SemivoxError):
    kind = "config"


class GeometryError(SemivoxError):
    """Dimension/axis mismatch between volumes that must agree."""
    kind = "geometry"


class UnsupportedSizeError(SemivoxError):
    """FFT path restricted to power-of-two dims."""
    kind = "unsupported-size"


class DegenerateInputError(SemivoxError):
    """Operation undefined for this input (e.g. distance transform of an
    all-foreground mask)."""
    kind = "degenerate-input"


class UndefinedMetricError(SemivoxError):
    """Surface metrics need nonempty masks on both sides."""
    kind = "undefined-metric"


class GraphError(SemivoxError):
    """Autodiff graph construction failure (shape mismatch)."""
    kind = "graph"


class ContractError(SemivoxError):
    """API misuse, e.g. backward on a non-scalar."""
    kind = "contract"


class LifecycleError(SemivoxError):
    """Use of a resource past its lifetime, e.g. double backward."""
    kind = "lifecycle"
