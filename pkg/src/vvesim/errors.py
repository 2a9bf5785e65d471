"""Exception hierarchy shared across the simulator, agent and link layers."""


class VveError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(VveError, ValueError):
    pass


class SingularityError(VveError, ArithmeticError):
    """Raised when a speed-normalised equation is evaluated below its floor."""


class SimulationFault(VveError):
    """Integrator produced a non-finite state.

    ``last_state`` holds the final finite state vector and ``time`` the
    simulation time at which it was valid.
    """

    def __init__(self, message, last_state=None, time=None):
        super().__init__(message)
        self.last_state = last_state
        self.time = time


class ConfigError(VveError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ModelIncompatibleError(VveError):
    pass


# -- link layer -------------------------------------------------------------

class ProtocolError(VveError, ValueError):
    """Typed failure while decoding a datagram."""


class BadMagicError(ProtocolError):
    pass


class TruncatedError(ProtocolError):
    pass


class UnsupportedTypeError(ProtocolError):
    pass


class MalformedPayloadError(ProtocolError):
    pass


class HandshakeFailure(VveError):
    pass


class IncompatiblePeerError(HandshakeFailure):
    pass


class PeerLostError(VveError):
    """No traffic from the peer within the heartbeat timeout."""


class TraceIngestError(VveError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
