"""Exception hierarchy shared by every layer of the pool."""


class PoolError(Exception):
    """Base class for all protocol and simulation errors."""


# -- crypto ------------------------------------------------------------

class InvalidArity(PoolError):
    pass


class NonCanonicalElement(PoolError):
    pass


class DecryptionFailure(PoolError):
    """Ciphertext is not addressed to this key or was tampered with."""


# -- trees -------------------------------------------------------------

class TreeFull(PoolError):
    pass


class IndexOutOfRange(PoolError):
    pass


class KeyConflict(PoolError):
    """Sparse-tree key already bound to a different value."""


# -- bloom -------------------------------------------------------------

class ParamMismatch(PoolError):
    pass


class MalformedTarget(PoolError):
    """Exclusion target does not encode a single element."""


# -- utxo / transactions ------------------------------------------------

class AmountOutOfRange(PoolError):
    pass


class KeyMismatch(PoolError):
    pass


class ValueImbalance(PoolError):
    pass


class ArityViolation(PoolError):
    pass


class DummyWithValue(PoolError):
    """Input without a membership path carries a nonzero amount."""


class ChainStateMismatch(PoolError):
    """Output chain states disagree with the inputs' union."""


# -- statements ----------------------------------------------------------

class WitnessUnsatisfied(PoolError):
    """Refusing to attest a statement the witness does not satisfy."""


# -- ledger --------------------------------------------------------------

class BadSignature(PoolError):
    pass


class NonceReplay(PoolError):
    pass


class StepBudgetExceeded(PoolError):
    pass


class AlreadyRegistered(PoolError):
    pass


class RepeatBootstrap(PoolError):
    pass


class MissingBootstrap(PoolError):
    """Deposit references an unregistered bootstrap digest."""


class InvalidProof(PoolError):
    pass


class DoubleSpend(PoolError):
    pass


class StaleRoot(PoolError):
    pass


class ContextMismatch(PoolError):
    pass


class MissingCoverage(PoolError):
    """Transfer lacks an ancestry proof for a flagged commitment."""


class ComplianceHookUnavailable(PoolError):
    pass


class EpochLimitExceeded(PoolError):
    pass


class UnknownAccount(PoolError):
    pass


class NotAuthorized(PoolError):
    pass


# -- authority -------------------------------------------------------------

class SanctionsParseError(PoolError):
    pass


class GraphParseError(PoolError):
    pass


class UnknownAddress(PoolError):
    pass


class UnknownDeposit(PoolError):
    """No mask record exists for the referenced deposit commitment."""


# -- wallet ------------------------------------------------------------------

class InsufficientFunds(PoolError):
    pass


class TaintedLineage(PoolError):
    """A flagged commitment is (probably) among the inputs' ancestors."""


class IllicitInput(PoolError):
    pass


class PendingCompliance(PoolError):
    pass


class CapacityExceeded(PoolError):
    """Merged chain state exceeds the current rate-limit budget."""


class LinkAlreadyRedeemed(PoolError):
    pass


class InvalidLink(PoolError):
    pass


class BootstrapTimeout(PoolError):
    pass
