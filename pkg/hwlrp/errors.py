"""Exception hierarchy shared by every hwlrp module."""
from typing import Optional


class HwlrpError(Exception):
    """Base class for all toolkit errors."""


class InstanceParseError(HwlrpError):
    """The instance document is not well-formed text."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class SchemaViolationError(HwlrpError):
    """The document parsed but does not match the instance schema."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DuplicateNodeError(SchemaViolationError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__("nodes", f"duplicate node id '{node_id}'")


class InstanceError(HwlrpError):
    """An instance cannot be generated or transformed as requested."""


class ModelError(HwlrpError):
    """Misuse of a LinearModel (unknown variable, missing value, bad coefficient)."""


class LpExportError(ModelError):
    pass


class FormulationError(HwlrpError):
    """The instance cannot be translated into a model."""


class RouteReconstructionError(FormulationError):
    """Routing arcs in an assignment do not form depot-rooted walks."""


class MooError(HwlrpError):
    pass


class OracleIntractableError(HwlrpError):
    """The brute-force search space exceeds the configured guard."""

    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(
            f"oracle search space has {size} configurations, above the limit of {limit}"
        )


class OracleInfeasibleError(HwlrpError):
    """No enumerated configuration is feasible."""
