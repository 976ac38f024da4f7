class SimulationError(Exception):
    """Base class for all simulator errors"""


class SchedulingError(SimulationError):
    """Raised when an event is scheduled before the current clock"""


class ConfigError(SimulationError):
    """Raised for invalid scenario configuration"""


class TraceFormatError(SimulationError):
    """Raised when a frame-size trace cannot be parsed"""

    def __init__(self, message: str, path: str = "", line_number: int = 0):
        self.path = path
        self.line_number = line_number
        if line_number:
            message = f"{path}:{line_number}: {message}"
        super().__init__(message)


class ChannelModelError(SimulationError):
    """Raised for channel inputs outside a model's valid domain"""
