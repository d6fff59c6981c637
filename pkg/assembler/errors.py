# --- errors.py ---


class AssemblerError(Exception):
    """Base class for every error raised by the simulator and its tooling"""


class InvalidConfig(AssemblerError):
    """Configuration cannot produce a valid world or run"""


class MalformedActionSet(AssemblerError):
    """An action set handed to the engine is not one request per entity"""


class UnknownAgent(AssemblerError):
    """Agent name is not part of the simulation"""


class Unplannable(AssemblerError):
    """Task requirements violate the server generation rules"""


class InconsistentUpdate(AssemblerError):
    """Attachment model asked to apply an impossible change"""


class MalformedTrace(AssemblerError):
    """Replay trace is missing records or fields"""


class StepOutOfRange(AssemblerError):
    """Requested step is not covered by the trace"""


class ReplayMismatch(AssemblerError):
    """Re-simulated records differ from the recorded ones"""

    def __init__(self, step, field, expected, actual):
        super().__init__(f"step {step}: {field} differs (recorded {expected!r}, replayed {actual!r})")
        self.step = step
        self.field = field
