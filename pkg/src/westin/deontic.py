"""Derogable deontic rules and the verdict calculus.

The stereotypes carry a fixed modal reading: a forbiddance names actions
that SHALL NOT be performed, an allowance actions that MAY, an obligation
actions that SHALL, an exemption actions that MAY NOT.  Rules refine each
other through derogation edges restricted to the legal pairs
(allowance <-> forbiddance, exemption <-> obligation); the edge graph is
kept acyclic.

Evaluation is a pure function: capability default-deny first, then the
most specific, most deeply derogating matching rule wins, with ties broken
by lexicographic rule id.  The winning rule's stereotype fixes the
outcome.  Requirement callouts are never evaluated here; they compile to
structural checks in ``model.validate_structure``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import (
    DerogationCycle,
    DuplicateId,
    IllegalDerogationPair,
    RoleNotInContext,
    RuleError,
)
from .model import (
    SCOPE_KIND_NAMES,
    ContextInstance,
    EntityKind,
    RoleInstance,
    Violation,
    World,
    kind_is,
)

# Closed event-verb vocabulary shared by rules, traces and the engine.
VERBS = (
    "create-entity",
    "display-aspect",
    "enact",
    "relinquish",
    "instantiate",
    "destroy-context",
    "introspect",
    "intrude",
    "claim-solitude",
    "invite",
    "join",
    "deposit-secret",
    "reveal",
    "create-anon",
    "publish",
    "sanction",
    "appeal",
    "authenticate-anonym",
    "access-asset",
    "disclose",
    "observe",
    "control",
    "surveil",
    "compel",
    "resolve-entity",
    "grant-warrant",
)

VERB_SET = frozenset(VERBS)

PERMIT = "Permit"
FORBID = "Forbid"
STRUCTURAL_ERROR = "StructuralError"


class Stereotype(str, Enum):
    REQUIREMENT = "requirement"  # structural; never a runtime rule
    FORBIDDANCE = "forbiddance"
    ALLOWANCE = "allowance"
    OBLIGATION = "obligation"
    EXEMPTION = "exemption"


LEGAL_DEROGATIONS = frozenset(
    {
        (Stereotype.ALLOWANCE, Stereotype.FORBIDDANCE),
        (Stereotype.FORBIDDANCE, Stereotype.ALLOWANCE),
        (Stereotype.EXEMPTION, Stereotype.OBLIGATION),
        (Stereotype.OBLIGATION, Stereotype.EXEMPTION),
    }
)

# Winning stereotype -> verdict outcome.  An obligation that wins permits
# the act and records the obligation as triggered.
_OUTCOME = {
    Stereotype.FORBIDDANCE: FORBID,
    Stereotype.EXEMPTION: FORBID,
    Stereotype.ALLOWANCE: PERMIT,
    Stereotype.OBLIGATION: PERMIT,
}


@dataclass(frozen=True)
class ActionPattern:
    """Machine form of a rule's text: which actions it speaks about."""

    verb: str = "*"
    actor_scope: str = "*"
    target: Optional[str] = None  # role-type name
    template: Optional[str] = None

    def specificity(self) -> int:
        return (
            (self.verb != "*")
            + (self.actor_scope != "*")
            + (self.target is not None)
            + (self.template is not None)
        )

    def matches(
        self,
        world: World,
        verb: str,
        actor_role: RoleInstance,
        target_role: Optional[RoleInstance],
        context: ContextInstance,
    ) -> bool:
        if self.verb != "*" and self.verb != verb:
            return False
        if not self._matches_actor(world, actor_role):
            return False
        if self.target is not None:
            if target_role is None or target_role.role_type != self.target:
                return False
        if self.template is not None and context.template != self.template:
            return False
        return True

    def _matches_actor(self, world: World, actor_role: RoleInstance) -> bool:
        if self.actor_scope == "*":
            return True
        if self.actor_scope == actor_role.role_type:
            return True
        if self.actor_scope in SCOPE_KIND_NAMES:
            kind = entity_kind_of_role(world, actor_role)
            return kind is not None and kind_is(kind, self.actor_scope)
        return False


def entity_kind_of_role(world: World, role: RoleInstance) -> Optional[EntityKind]:
    """Kind of the entity behind a role's enacting aspect (trusted path)."""
    if role.enactor is None or not world.linkage.has(role.enactor):
        return None
    entity = world.entities.get(world.linkage.entity_of(role.enactor))
    return entity.kind if entity else None


@dataclass
class DeonticRule:
    id: str
    stereotype: Stereotype
    scope: str  # role-type name, entity kind, or "*"
    action: ActionPattern
    derogates: Optional[str] = None
    deadline: Optional[int] = None  # event-count, obligations only
    text: str = ""
    origin: str = "user"  # user | core | bundled | warrant


def make_rule(
    rule_id: str,
    stereotype: Stereotype | str,
    scope: str,
    verb: str,
    target: Optional[str] = None,
    template: Optional[str] = None,
    derogates: Optional[str] = None,
    deadline: Optional[int] = None,
    text: str = "",
    origin: str = "user",
) -> DeonticRule:
    stereotype = Stereotype(stereotype)
    action = ActionPattern(verb=verb, actor_scope=scope, target=target, template=template)
    return DeonticRule(
        id=rule_id,
        stereotype=stereotype,
        scope=scope,
        action=action,
        derogates=derogates,
        deadline=deadline,
        text=text,
        origin=origin,
    )


def _check_rule_shape(rule: DeonticRule) -> None:
    if not rule.id:
        raise RuleError("rule id must be non-empty")
    if rule.stereotype is Stereotype.REQUIREMENT:
        raise RuleError("requirement callouts are structural, not runtime rules")
    if rule.action.verb != "*" and rule.action.verb not in VERB_SET:
        raise RuleError(f"unknown verb {rule.action.verb!r}")
    if rule.deadline is not None and rule.stereotype is not Stereotype.OBLIGATION:
        raise RuleError("deadline is only meaningful on obligations")
    if not rule.scope:
        raise RuleError("rule scope must be non-empty")


def add_rule(world: World, rule: DeonticRule) -> str:
    """Register a rule after validating shape, derogation pair and acyclicity."""
    _check_rule_shape(rule)
    if rule.id in world.rules:
        raise DuplicateId(f"rule {rule.id!r} already exists")
    if rule.derogates is not None:
        target = world.rules.get(rule.derogates)
        if target is None:
            raise RuleError(f"derogation target {rule.derogates!r} does not exist")
        if (rule.stereotype, target.stereotype) not in LEGAL_DEROGATIONS:
            raise IllegalDerogationPair(
                f"{rule.stereotype.value} may not derogate {target.stereotype.value}"
            )
    world.rules[rule.id] = rule
    cycle = find_derogation_cycle(world.rules)
    if cycle is not None:
        del world.rules[rule.id]
        raise DerogationCycle(" -> ".join(cycle))
    return rule.id


def find_derogation_cycle(rules: dict[str, DeonticRule]) -> Optional[list[str]]:
    """DFS over derogation edges; returns one cycle if any exists."""
    state: dict[str, int] = {}  # 1 = in progress, 2 = done

    def visit(rid: str, path: list[str]) -> Optional[list[str]]:
        state[rid] = 1
        path.append(rid)
        nxt = rules[rid].derogates
        if nxt is not None and nxt in rules:
            if state.get(nxt) == 1:
                return path[path.index(nxt):] + [nxt]
            if state.get(nxt) != 2:
                found = visit(nxt, path)
                if found:
                    return found
        state[rid] = 2
        path.pop()
        return None

    for rid in sorted(rules):
        if state.get(rid) is None:
            found = visit(rid, [])
            if found:
                return found
    return None


def validate_rules(world: World) -> list[Violation]:
    """Structural checks over the rule graph; total, never raises."""
    out: list[Violation] = []
    for rule in world.rules.values():
        if rule.derogates is None:
            continue
        target = world.rules.get(rule.derogates)
        if target is None:
            out.append(
                Violation("DanglingDerogation", rule.id, f"target {rule.derogates!r}")
            )
        elif (rule.stereotype, target.stereotype) not in LEGAL_DEROGATIONS:
            out.append(
                Violation(
                    "IllegalDerogationPair",
                    rule.id,
                    f"{rule.stereotype.value} -> {target.stereotype.value}",
                )
            )
    cycle = find_derogation_cycle(world.rules)
    if cycle is not None:
        out.append(Violation("DerogationCycle", cycle[0], " -> ".join(cycle)))
    return sorted(out, key=lambda v: (v.kind, v.subject, v.detail))


# ---------------------------------------------------------------------------
# Verdicts


@dataclass
class Verdict:
    outcome: str
    chain: list[str] = field(default_factory=list)
    obligations_triggered: list[tuple[str, Optional[int]]] = field(default_factory=list)

    @property
    def permitted(self) -> bool:
        return self.outcome == PERMIT


def derogation_depth(rule: DeonticRule, index: dict[str, DeonticRule]) -> int:
    return len(ancestry(rule, index)) - 1


def ancestry(rule: DeonticRule, index: dict[str, DeonticRule]) -> list[DeonticRule]:
    """Path from the most general rule down to ``rule`` along derogation
    edges present in ``index``; stops at missing targets and guards cycles."""
    path = [rule]
    seen = {rule.id}
    current = rule
    while current.derogates is not None and current.derogates in index:
        current = index[current.derogates]
        if current.id in seen:
            break
        path.append(current)
        seen.add(current.id)
    path.reverse()
    return path


def evaluate(
    world: World,
    verb: str,
    actor_role: RoleInstance,
    target: Optional[RoleInstance],
    context: ContextInstance,
    rules: Iterable[DeonticRule],
) -> Verdict:
    """Deterministic verdict for one candidate action.

    Resolution order: capability default-deny, then most-specific deepest
    derogation among matching rules, ties broken by lexicographic rule id.
    No matching rule means the capability table's grant stands.
    """
    if actor_role.context != context.id:
        raise RoleNotInContext(
            f"role {actor_role.id!r} belongs to {actor_role.context!r}, not {context.id!r}"
        )
    from .patterns import capability_verbs  # local import to avoid a module cycle

    if verb not in capability_verbs(context, actor_role.role_type):
        return Verdict(FORBID, [])

    pool = list(rules)
    index = {r.id: r for r in pool}
    matching = [
        r
        for r in pool
        if r.stereotype is not Stereotype.REQUIREMENT
        and r.action.matches(world, verb, actor_role, target, context)
    ]
    if not matching:
        return Verdict(PERMIT, [])

    winner = min(
        matching,
        key=lambda r: (-r.action.specificity(), -derogation_depth(r, index), r.id),
    )
    chain = [r.id for r in ancestry(winner, index)]
    outcome = _OUTCOME[winner.stereotype]
    triggered: list[tuple[str, Optional[int]]] = []
    if winner.stereotype is Stereotype.OBLIGATION:
        triggered.append((winner.id, winner.deadline))
    return Verdict(outcome, chain, triggered)


# ---------------------------------------------------------------------------
# Obligation ledger


@dataclass
class ObligationEntry:
    rule: str
    obligor: str  # role id
    deadline: Optional[int]  # absolute event seq; None never auto-breaches
    triggered_at: int

    def key(self) -> tuple[str, str]:
        return (self.rule, self.obligor)


@dataclass
class ObligationLedger:
    pending: list[ObligationEntry] = field(default_factory=list)
    discharged: list[ObligationEntry] = field(default_factory=list)
    breached: list[ObligationEntry] = field(default_factory=list)

    def is_partition(self) -> bool:
        keyed = [
            (e.rule, e.obligor, e.triggered_at)
            for bucket in (self.pending, self.discharged, self.breached)
            for e in bucket
        ]
        return len(keyed) == len(set(keyed))


def trigger_obligation(
    ledger: ObligationLedger,
    rule: DeonticRule,
    obligor: str,
    seq: int,
    relative_deadline: Optional[int] = None,
) -> None:
    """Add a pending obligation, or refresh the deadline of an existing one."""
    rel = relative_deadline if relative_deadline is not None else rule.deadline
    deadline = seq + rel if rel is not None else None
    for entry in ledger.pending:
        if entry.key() == (rule.id, obligor):
            entry.deadline = deadline
            return
    ledger.pending.append(
        ObligationEntry(rule=rule.id, obligor=obligor, deadline=deadline, triggered_at=seq)
    )


def discharge_matching(
    world: World,
    ledger: ObligationLedger,
    verb: str,
    actor_role: RoleInstance,
    target: Optional[RoleInstance],
    context: ContextInstance,
) -> list[ObligationEntry]:
    """Move pending obligations fulfilled by this action to discharged."""
    done: list[ObligationEntry] = []
    kept: list[ObligationEntry] = []
    for entry in ledger.pending:
        rule = world.rules.get(entry.rule)
        if (
            entry.obligor == actor_role.id
            and rule is not None
            and rule.action.matches(world, verb, actor_role, target, context)
        ):
            done.append(entry)
        else:
            kept.append(entry)
    ledger.pending = kept
    ledger.discharged.extend(done)
    return done


def breach_for_role(ledger: ObligationLedger, role_id: str) -> list[ObligationEntry]:
    """Breach every pending obligation held by a collected or retired role."""
    gone = [e for e in ledger.pending if e.obligor == role_id]
    ledger.pending = [e for e in ledger.pending if e.obligor != role_id]
    ledger.breached.extend(gone)
    return gone


def tick_obligations(
    ledger: ObligationLedger, current_event: int
) -> tuple[ObligationLedger, list[ObligationEntry]]:
    """Breach every pending obligation whose deadline lies strictly before
    the current event."""
    newly = [
        e for e in ledger.pending if e.deadline is not None and e.deadline < current_event
    ]
    if newly:
        ledger.pending = [e for e in ledger.pending if e not in newly]
        ledger.breached.extend(newly)
    return ledger, newly


def binding_obligations(world: World, role: RoleInstance) -> list[DeonticRule]:
    """Obligation rules that arm when a role of this type is bound.

    A freshly bound role immediately owes every obligation scoped to its
    role type in its context's template.
    """
    ctx = world.contexts.get(role.context)
    if ctx is None:
        return []
    out = []
    for rule in sorted(world.rules.values(), key=lambda r: r.id):
        if rule.stereotype is not Stereotype.OBLIGATION:
            continue
        if rule.scope != role.role_type:
            continue
        if rule.action.template is not None and rule.action.template != ctx.template:
            continue
        out.append(rule)
    return out


def seed_core_rules(world: World) -> None:
    """Install the default posture: surveillance and compulsion are
    generally forbidden; warrants derogate these per event."""
    for verb in ("surveil", "compel"):
        rid = f"core-forbid-{verb}"
        if rid not in world.rules:
            world.rules[rid] = make_rule(
                rid,
                Stereotype.FORBIDDANCE,
                "Actor",
                verb,
                text=f"actors shall not {verb} other entities",
                origin="core",
            )


def warrant_allowances(
    world: World,
    verb: str,
    actor_role: RoleInstance,
    context: ContextInstance,
) -> list[DeonticRule]:
    """Per-event allowances synthesized from valid warrants held by the
    acting entity, derogating the core forbiddance for ``verb``."""
    if verb not in ("surveil", "compel"):
        return []
    kind = entity_kind_of_role(world, actor_role)
    if kind is None or actor_role.enactor is None:
        return []
    entity_id = world.linkage.entity_of(actor_role.enactor)
    out = []
    for warrant in sorted(world.warrants.values(), key=lambda w: w.id):
        if warrant.covers(verb, entity_id, world.event_counter, context.id):
            # same specificity as the core forbiddance, one derogation deeper
            out.append(
                make_rule(
                    f"warrant-{warrant.id}",
                    Stereotype.ALLOWANCE,
                    "Actor",
                    verb,
                    derogates=f"core-forbid-{verb}",
                    text=f"warrant {warrant.id} issued by {warrant.issuer}",
                    origin="warrant",
                )
            )
    return out
