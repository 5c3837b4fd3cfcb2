"""Exception hierarchy shared by every layer of the package."""


class TrustFLError(Exception):
    """Base class for all errors raised by trustfl."""


# crypto
class InvalidSeedError(TrustFLError, ValueError):
    pass


class DecryptionError(TrustFLError):
    pass


# identity / envelopes
class EncodingError(TrustFLError, ValueError):
    pass


class IntegrityError(TrustFLError):
    """Envelope signature does not verify under the sender's key."""


class ConfidentialityError(TrustFLError):
    """Envelope ciphertext cannot be opened by the recipient."""


class UnsupportedTypeError(TrustFLError):
    pass


class NotFoundError(TrustFLError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class CorruptDocumentError(TrustFLError):
    pass


# registry
class ConflictError(TrustFLError):
    pass


# credentials
class SchemaViolationError(TrustFLError, ValueError):
    pass


class CannotSatisfyError(TrustFLError):
    pass


# fedlearn
class ShapeError(TrustFLError, ValueError):
    pass


class DivergenceError(TrustFLError, ArithmeticError):
    pass


# agents / harness
class DeliveryError(TrustFLError):
    pass


class InvitationError(TrustFLError):
    pass


class UntrustedConnectionError(TrustFLError):
    pass


class HospitalTimeoutError(TrustFLError):
    def __init__(self, hospital: str, budget: int):
        super().__init__(f"no train_result from {hospital!r} within {budget} dispatch steps")
        self.hospital = hospital
        self.budget = budget


class ConfigError(TrustFLError, ValueError):
    pass
