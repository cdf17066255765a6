"""Exception types shared across the package."""


class MetricMeshError(Exception):
    """Base class for all errors raised by this package."""


class MeshError(MetricMeshError):
    """Base class for mesh construction and file parsing errors."""


class OFFParseError(MeshError):
    """Malformed OFF stream: bad header, counts, or vertex/face line."""


class FaceIndexError(MeshError):
    """Face references a vertex index outside the valid range."""


class NonTriangleFaceError(MeshError):
    """Face record is not a triangle (vertex count != 3 or repeated vertex)."""


class NonManifoldEdgeError(MeshError):
    """An edge in a loaded file borders more than two faces."""


class InfeasibleMetricError(MetricMeshError):
    """Edge lengths violate the strict triangle inequality on some face."""

    def __init__(self, message: str, faces: tuple = ()):
        super().__init__(message)
        self.faces = tuple(faces)


class TapeError(MetricMeshError):
    """Base class for recording/evaluation failures in the autodiff tape."""


class TapeDomainError(TapeError):
    """An operation was applied outside its domain (sqrt of a negative, ...)."""


class TapeNonFiniteError(TapeError):
    """An operation produced a NaN or infinity; names the offending node."""


class FeasibilityProjectionError(MetricMeshError):
    """Cyclic feasibility sweeps did not converge within the sweep budget."""

    def __init__(self, message: str, faces: tuple = ()):
        super().__init__(message)
        self.faces = tuple(faces)


class DatasetError(MetricMeshError):
    """Malformed dataset file or dimension mismatch with the embedding."""


class ConfigError(MetricMeshError):
    """Invalid run configuration; carries the offending line number if known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
