"""Exception types shared across the package."""


class SplitGnnError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SplitGnnError):
    """Operand shapes do not conform."""


class DomainError(SplitGnnError):
    """An input value is outside the operation's domain."""


class ContractError(SplitGnnError):
    """A caller violated an operation's contract (wrong usage, not bad data)."""


class ParseError(SplitGnnError):
    """A dataset file could not be parsed; message carries file and line."""


class ConfigError(SplitGnnError):
    """An invalid configuration value or combination."""


class GraphSchemaError(SplitGnnError):
    """A graph element is inconsistent with the graph's schema."""


class ProtocolError(SplitGnnError):
    """A split-session message or state transition broke the protocol."""


class RoleError(SplitGnnError):
    """An operation was attempted by a party lacking the required role."""


class NumericError(SplitGnnError):
    """A numeric failure (NaN/Inf) that must abort the current round."""


class CryptoError(SplitGnnError):
    """Key generation or ciphertext handling failed."""
