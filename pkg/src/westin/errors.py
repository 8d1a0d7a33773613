"""Exception hierarchy for model operations.

Every failure of an operation's precondition raises a ModelError subclass;
the replay engine converts these into structural-error step results instead
of letting them escape a run.
"""

from __future__ import annotations


class ModelError(Exception):
    """Base class for all domain errors."""


class DuplicateId(ModelError):
    pass


class UnknownEntity(ModelError):
    pass


class UnknownAspect(ModelError):
    pass


class UnknownContext(ModelError):
    pass


class UnknownRole(ModelError):
    pass


class UnknownWarrant(ModelError):
    pass


class UnknownTemplate(ModelError):
    pass


class UnknownOwner(ModelError):
    pass


class AntiSlaveryViolation(ModelError):
    """A natural person may have no owner other than itself."""


class OwnershipNotPermitted(ModelError):
    """The named owner's kind is not allowed to own entities."""


class AspectIdLeak(ModelError):
    """An aspect identifier would textually embed its entity's identifier."""


class LinkageDenied(ModelError):
    """Gated registry query refused: wrong requester or no valid warrant."""


class NotAJudicialAuthority(ModelError):
    pass


class InvalidWarrantScope(ModelError):
    pass


class AlreadyEmbodied(ModelError):
    pass


class RuleError(ModelError):
    """Malformed deontic rule (bad verb, scope, or stereotype usage)."""


class IllegalDerogationPair(RuleError):
    pass


class DerogationCycle(RuleError):
    pass


class RoleNotInContext(ModelError):
    pass


class IncapableActor(ModelError):
    """Inert entities can neither surveil nor compel."""


class MultiplicityViolation(ModelError):
    pass


class ParamError(ModelError):
    pass


class RoleBindingError(ModelError):
    """Role cannot be bound this way (reserved role type or wrong enactor)."""


class LegalActorRequired(ModelError):
    pass


class NoGuarantor(ModelError):
    pass


class NoGovernor(ModelError):
    pass


class NotAnIntimate(ModelError):
    pass


class NotAPublicFigure(ModelError):
    pass


class SecretNotOwnedByIntimate(ModelError):
    pass


class SequenceGap(ModelError):
    pass


class InvalidInitialModel(ModelError):
    def __init__(self, violations):
        self.violations = list(violations)
        summary = "; ".join(str(v) for v in self.violations[:5])
        super().__init__(f"initial model is not structurally sound: {summary}")
