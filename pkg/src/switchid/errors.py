"""Exception types shared across the pipeline stages."""


class SwitchIdError(Exception):
    """Base class for all pipeline errors."""


class NumericalError(SwitchIdError):
    """A numerical routine failed (CLI exit code 4)."""


class NonFinite(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class EmptyComponent(NumericalError):
    pass


class DegenerateData(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class EmptyNode(SwitchIdError, ValueError):
    pass


class DegenerateSplit(SwitchIdError, ValueError):
    pass


class EmptyClass(SwitchIdError, ValueError):
    pass


class ConfigError(SwitchIdError, ValueError):
    """Invalid configuration (CLI exit code 2)."""


class MissingArtifact(SwitchIdError, FileNotFoundError):
    """An upstream artifact is absent (CLI exit code 3)."""


class SchemaMismatch(SwitchIdError, ValueError):
    """An artifact does not have the expected structure (CLI exit code 3)."""
