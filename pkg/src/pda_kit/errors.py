"""Exception types shared across the package."""


class ProtocolError(Exception):
    """Base class for every failure raised by this package."""


# --- parameter generation -------------------------------------------------

class StrictChainNotFound(ProtocolError):
    """Strict safe-semiprime search exhausted its candidate budget."""


class NotInvertible(ProtocolError):
    """Modular inverse requested for a non-unit."""


class NotInSubgroup(ProtocolError):
    """Value is not of the form (1+M)^x, so the subgroup dlog is undefined."""


class DuplicateId(ProtocolError):
    """Participant IDs must be distinct."""


# --- homomorphic encryption -----------------------------------------------

class MessageTooLarge(ProtocolError):
    """Plaintext does not fit below the encryption modulus."""


class InvalidCiphertext(ProtocolError):
    """Ciphertext shares a factor with the modulus or is out of range."""


# --- ceremonies ------------------------------------------------------------

class PartyMissing(ProtocolError):
    """A required participant produced no message in its round."""


class NonInvertibleBroadcast(ProtocolError):
    """A ring-share broadcast is not a unit of the working group."""


class ExtractionFailed(ProtocolError):
    """Key-share product was not a power of (1+M); master keys are corrupt."""


class RingTooSmall(ProtocolError):
    """Hardened ring exchange needs more participants than supplied."""


# --- encryption / aggregation ----------------------------------------------

class GroupTooSmall(ProtocolError):
    """Participant set is below the minimum threshold."""


class GroupBelowThreshold(GroupTooSmall):
    """Group size (or usable key degree) violates the active threshold."""


class KeyMissing(ProtocolError):
    """No key share exists for the requested group size."""


class MixedKinds(ProtocolError):
    """Additive and multiplicative ciphertexts cannot be combined."""


class IncompleteGroup(ProtocolError):
    """Decryption needs exactly one ciphertext per group member."""


class IncompleteBroadcast(ProtocolError):
    """A broadcast round is missing expected ciphertexts."""


class ResultOverflow(ProtocolError):
    """Aggregate exceeds the plaintext bound, so the modular result wrapped."""


class MissingEncoding(ProtocolError):
    """User 1 did not receive every encoded value for the window."""


class SlotReused(ProtocolError):
    """Requested time window overlaps an already-consumed window."""


class SingularSystem(ProtocolError):
    """Interpolation system is singular (repeated or degenerate IDs)."""


class SingularNormalEquations(ProtocolError):
    """Normal equations of the regression are singular."""


class FixedPointOverflow(ProtocolError):
    """Real value does not fit the fixed-point range for the modulus."""
