from typing import Any, Optional


class FedCoreError(Exception):
    """Root of every error raised by the simulator."""


class ParameterError(FedCoreError, ValueError):
    pass


class SchemaError(ParameterError):
    pass


class CsvParseError(ParameterError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class CapabilityError(FedCoreError):
    """An exponential path was asked for beyond its cap."""


class MissingCoalitionError(FedCoreError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing coalition"


class MechanismError(FedCoreError):
    def __init__(self, message: str, solution: Any = None, round_index: Optional[int] = None):
        super().__init__(message)
        self.solution = solution
        self.round_index = round_index


class ConfigError(FedCoreError):
    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key
