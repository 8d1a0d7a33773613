"""Trace replay: per event, structural preconditions, deontic evaluation,
obligation ticking and role garbage collection, accumulated into a report.

The engine is a monitor-and-gate by default: a forbidden event is recorded
but its post-state is not applied, so a Forbid or StructuralError step
never mutates identity state (only the report, the obligation ledger, the
audit log and breach/sanction bookkeeping).  ``monitor=True`` applies
forbidden actions anyway and only records the breaches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from . import model as mm, patterns as pt
from .deontic import (
    FORBID,
    PERMIT,
    STRUCTURAL_ERROR,
    VERB_SET,
    ObligationLedger,
    Verdict,
    binding_obligations,
    breach_for_role,
    discharge_matching,
    entity_kind_of_role,
    evaluate,
    tick_obligations,
    trigger_obligation,
    validate_rules,
)
from .errors import (
    IncapableActor,
    InvalidInitialModel,
    LinkageDenied,
    ModelError,
    RoleNotInContext,
    SequenceGap,
    UnknownAspect,
    UnknownContext,
    UnknownRole,
)
from .model import ContextInstance, RoleInstance, Violation, World, can_surveil_or_compel


@dataclass
class Event:
    seq: int
    actor: str  # aspect id, role id, or "-" for administrative events
    verb: str
    args: dict[str, str] = field(default_factory=dict)


@dataclass
class StepResult:
    seq: int
    verb: str
    actor: str
    verdict: Verdict
    delta: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)


@dataclass
class EngineState:
    world: World
    ledger: ObligationLedger = field(default_factory=ObligationLedger)
    steps: list[StepResult] = field(default_factory=list)
    monitor: bool = False


@dataclass
class RunReport:
    steps: list[StepResult]
    ledger: ObligationLedger
    audit: list[mm.AuditEntry]
    final_violations: list[Violation]
    summary: dict[str, int]
    rules: dict[str, dict]


# Per-verb trace argument shapes: positional names, allowed keyword names,
# and what the actor token must denote.
EVENT_SPECS: dict[str, tuple[tuple[str, ...], frozenset[str], str]] = {
    "create-entity": (("id", "kind"), frozenset({"owner"}), "any"),
    "display-aspect": (("entity", "id"), frozenset({"label"}), "any"),
    "enact": (("context", "roletype"), frozenset({"id"}), "aspect"),
    "relinquish": ((), frozenset(), "role"),
    "instantiate": (("id", "template"), frozenset({"embodied-by"}), "any"),
    "destroy-context": (("context",), frozenset(), "any"),
    "introspect": ((), frozenset(), "role"),
    "intrude": (("target",), frozenset(), "role"),
    "claim-solitude": (("context",), frozenset(), "aspect"),
    "invite": (("invitee",), frozenset(), "role"),
    "join": (("context",), frozenset({"token"}), "aspect"),
    "deposit-secret": (("entity",), frozenset(), "role"),
    "reveal": (("subject", "recipient"), frozenset(), "role"),
    "create-anon": ((), frozenset(), "role"),
    "publish": (("content",), frozenset(), "role"),
    "sanction": (("target",), frozenset(), "role"),
    "appeal": ((), frozenset(), "role"),
    "authenticate-anonym": (("anon",), frozenset({"token"}), "aspect"),
    "access-asset": (("asset",), frozenset(), "role"),
    "disclose": (("asset", "recipient"), frozenset({"consent"}), "role"),
    "observe": (("target",), frozenset(), "role"),
    "control": (("target",), frozenset(), "role"),
    "surveil": (("target",), frozenset(), "role"),
    "compel": (("target",), frozenset(), "role"),
    "resolve-entity": (("aspect", "requester"), frozenset({"warrant", "in"}), "any"),
    "grant-warrant": (("id",), frozenset({"from", "to", "scope", "in", "expires"}), "any"),
}

# instantiate additionally accepts dynamic role:<Role> and param:<key> kwargs
_DYNAMIC_KW_VERBS = {"instantiate"}


@dataclass
class _Outcome:
    verdict: Verdict
    delta: dict = field(default_factory=dict)
    actor_role: Optional[RoleInstance] = None
    target_role: Optional[RoleInstance] = None
    context: Optional[ContextInstance] = None
    bound_roles: list[str] = field(default_factory=list)
    destroyed_context: bool = False


def _arg(event: Event, name: str) -> str:
    try:
        return event.args[name]
    except KeyError:
        raise ModelError(f"{event.verb} requires argument {name!r}") from None


def _opt(event: Event, name: str) -> Optional[str]:
    return event.args.get(name)


def _int_opt(event: Event, name: str) -> Optional[int]:
    raw = event.args.get(name)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ModelError(f"argument {name!r} must be an integer, got {raw!r}") from None


def _actor_role(world: World, event: Event) -> tuple[RoleInstance, ContextInstance]:
    role = world.roles.get(event.actor)
    if role is None:
        raise UnknownRole(f"actor {event.actor!r} is not a live role")
    ctx = world.contexts.get(role.context)
    if ctx is None:
        raise UnknownContext(f"context {role.context!r} of actor {event.actor!r} is gone")
    return role, ctx


def _target_role(world: World, ctx: ContextInstance, role_id: str) -> RoleInstance:
    role = world.roles.get(role_id)
    if role is None:
        raise UnknownRole(f"target {role_id!r} is not a live role")
    if role.context != ctx.id:
        raise RoleNotInContext(f"target {role_id!r} belongs to {role.context!r}, not {ctx.id!r}")
    return role


def _applies(state: EngineState, verdict: Verdict) -> bool:
    return verdict.permitted or (state.monitor and verdict.outcome == FORBID)


# ---------------------------------------------------------------------------
# Handlers


def _h_create_entity(state: EngineState, event: Event) -> _Outcome:
    entity_id = mm.create_entity(
        state.world,
        mm.EntityKind(_arg(event, "kind")),
        owner=_opt(event, "owner"),
        entity_id=_arg(event, "id"),
    )
    return _Outcome(Verdict(PERMIT), {"entity": entity_id})


def _h_display_aspect(state: EngineState, event: Event) -> _Outcome:
    aspect = mm.display_aspect(
        state.world,
        _arg(event, "entity"),
        label=_opt(event, "label") or "",
        aspect_id=_arg(event, "id"),
    )
    return _Outcome(Verdict(PERMIT), {"aspect": aspect})


def _h_grant_warrant(state: EngineState, event: Event) -> _Outcome:
    wid = mm.grant_warrant(
        state.world,
        issuer=_arg(event, "from"),
        grantee=_arg(event, "to"),
        scope=_arg(event, "scope"),
        context=_opt(event, "in"),
        expiry=_int_opt(event, "expires"),
        warrant_id=_arg(event, "id"),
    )
    return _Outcome(Verdict(PERMIT), {"warrant": wid})


def _h_resolve_entity(state: EngineState, event: Event) -> _Outcome:
    try:
        mm.resolve_entity(
            state.world,
            _arg(event, "aspect"),
            _arg(event, "requester"),
            warrant=_opt(event, "warrant"),
            context=_opt(event, "in"),
        )
    except LinkageDenied:
        return _Outcome(Verdict(FORBID), {"resolution": "denied"})
    # one-way hygiene: the report never carries the resolved entity id
    return _Outcome(Verdict(PERMIT), {"resolution": "granted"})


def _h_instantiate(state: EngineState, event: Event) -> _Outcome:
    bindings: dict[str, list[str]] = {}
    params: dict[str, str] = {}
    for key, value in event.args.items():
        if key.startswith("role:"):
            bindings[key[5:]] = [v for v in value.split(",") if v]
        elif key.startswith("param:"):
            params[key[6:]] = value
    ctx_id = pt.instantiate(
        state.world,
        _arg(event, "template"),
        _arg(event, "embodied-by"),
        bindings,
        params,
        context_id=_arg(event, "id"),
    )
    ctx = state.world.contexts[ctx_id]
    return _Outcome(
        Verdict(PERMIT), {"context": ctx_id}, context=ctx, bound_roles=list(ctx.roles)
    )


def _h_destroy_context(state: EngineState, event: Event) -> _Outcome:
    ctx_id = _arg(event, "context")
    pt.destroy_context(state.world, ctx_id)
    return _Outcome(Verdict(PERMIT), {"destroyed": ctx_id}, destroyed_context=True)


def _h_enact(state: EngineState, event: Event) -> _Outcome:
    if event.actor not in state.world.aspects:
        raise UnknownAspect(f"actor {event.actor!r} is not an aspect")
    rid = pt.enact(
        state.world,
        event.actor,
        _arg(event, "context"),
        _arg(event, "roletype"),
        role_id=_opt(event, "id"),
    )
    return _Outcome(Verdict(PERMIT), {"role": rid}, bound_roles=[rid])


def _h_relinquish(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    rules = pt.rules_for(state.world, "relinquish", actor, None, ctx)
    verdict = evaluate(state.world, "relinquish", actor, None, ctx, rules)
    delta: dict = {}
    if _applies(state, verdict):
        breach_for_role(state.ledger, actor.id)
        pt.relinquish(state.world, actor.id)
        delta["relinquished"] = actor.id
    return _Outcome(verdict, delta, actor_role=actor, context=ctx)


def _generic_context_action(state: EngineState, event: Event, verb: str) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    if verb in ("surveil", "compel"):
        kind = entity_kind_of_role(state.world, actor)
        if kind is None or not can_surveil_or_compel(kind):
            raise IncapableActor(f"{event.actor!r} cannot {verb}: kind {kind}")
    target = None
    target_id = event.args.get("target")
    if target_id is not None:
        target = _target_role(state.world, ctx, target_id)
    rules = pt.rules_for(state.world, verb, actor, target, ctx)
    verdict = evaluate(state.world, verb, actor, target, ctx, rules)
    delta = {"target": target_id} if target_id else {}
    if _applies(state, verdict):
        pt.retire_if_unlinkable(state.world, actor, ctx)
    return _Outcome(verdict, delta, actor_role=actor, target_role=target, context=ctx)


def _h_claim_solitude(state: EngineState, event: Event) -> _Outcome:
    if event.actor not in state.world.aspects:
        raise UnknownAspect(f"actor {event.actor!r} is not an aspect")
    ctx_id = pt.claim_solitude(state.world, event.actor, _arg(event, "context"))
    ctx = state.world.contexts[ctx_id]
    return _Outcome(
        Verdict(PERMIT), {"context": ctx_id}, context=ctx, bound_roles=list(ctx.roles)
    )


def _h_invite(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    invitee = _arg(event, "invitee")
    if invitee not in state.world.aspects:
        raise UnknownAspect(f"aspect {invitee!r} does not exist")
    rules = pt.rules_for(state.world, "invite", actor, None, ctx)
    verdict = evaluate(state.world, "invite", actor, None, ctx, rules)
    delta: dict = {}
    if _applies(state, verdict):
        delta["token"] = pt.invite(state.world, actor.id, invitee, ctx.id)
    return _Outcome(verdict, delta, actor_role=actor, context=ctx)


def _h_join(state: EngineState, event: Event) -> _Outcome:
    ctx_id = _arg(event, "context")
    token = _opt(event, "token")
    verdict = pt.eval_join(state.world, event.actor, ctx_id, token)
    outcome = _Outcome(verdict, {}, context=state.world.contexts[ctx_id])
    if _applies(state, verdict):
        rid = pt.apply_join(state.world, event.actor, ctx_id, token)
        outcome.delta["joined"] = rid
        outcome.bound_roles = [rid]
    return outcome


def _h_deposit_secret(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    entity = _arg(event, "entity")
    pt.precheck_secret(state.world, actor.id, entity, ctx.id)
    rules = pt.rules_for(state.world, "deposit-secret", actor, None, ctx)
    verdict = evaluate(state.world, "deposit-secret", actor, None, ctx, rules)
    delta: dict = {}
    bound: list[str] = []
    if _applies(state, verdict):
        rid = pt.deposit_secret(state.world, actor.id, entity, ctx.id)
        delta["secret"] = rid
        bound = [rid]
    return _Outcome(verdict, delta, actor_role=actor, context=ctx, bound_roles=bound)


def _h_reveal(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    subject = _target_role(state.world, ctx, _arg(event, "subject"))
    recipient = _arg(event, "recipient")
    if recipient not in state.world.aspects:
        raise UnknownAspect(f"aspect {recipient!r} does not exist")
    rules = pt.rules_for(state.world, "reveal", actor, subject, ctx, recipient=recipient)
    verdict = evaluate(state.world, "reveal", actor, subject, ctx, rules)
    return _Outcome(
        verdict,
        {"subject": subject.id, "recipient": recipient},
        actor_role=actor,
        target_role=subject,
        context=ctx,
    )


def _h_create_anon(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    rules = pt.rules_for(state.world, "create-anon", actor, None, ctx)
    verdict = evaluate(state.world, "create-anon", actor, None, ctx, rules)
    delta: dict = {}
    bound: list[str] = []
    if _applies(state, verdict):
        rid = pt.create_anon(state.world, actor.id, ctx.id)
        delta["anon"] = rid
        bound = [rid]
    return _Outcome(verdict, delta, actor_role=actor, context=ctx, bound_roles=bound)


def _h_publish(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    content = _arg(event, "content")
    verdict = pt.eval_publish(state.world, actor, content, ctx)
    delta: dict = {}
    if _applies(state, verdict):
        delta["property"] = pt.apply_publish(state.world, actor, content, ctx)
        pt.retire_if_unlinkable(state.world, actor, ctx)
    if verdict.outcome == FORBID and pt.is_offensive(state.world, content, ctx):
        state.world.breach_marks.setdefault(actor.id, []).append(event.seq)
        delta["reserve_breach"] = actor.id
    return _Outcome(verdict, delta, actor_role=actor, context=ctx)


def _h_sanction(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    target = _target_role(state.world, ctx, _arg(event, "target"))
    verdict = pt.eval_sanction(state.world, actor, target, ctx)
    delta: dict = {"target": target.id}
    if _applies(state, verdict):
        state.world.sanction_marks.setdefault(target.id, []).append(event.seq)
        delta["sanctioned"] = target.id
    return _Outcome(verdict, delta, actor_role=actor, target_role=target, context=ctx)


def _h_appeal(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    verdict = pt.appeal(state.world, actor.id, ctx.id)
    return _Outcome(verdict, {}, actor_role=actor, context=ctx)


def _h_authenticate_anonym(state: EngineState, event: Event) -> _Outcome:
    if event.actor not in state.world.aspects:
        raise UnknownAspect(f"actor {event.actor!r} is not an aspect")
    result = pt.authenticate_anonym(
        state.world, _arg(event, "anon"), event.actor, proof=_opt(event, "token")
    )
    return _Outcome(Verdict(PERMIT), {"authenticated": result})


def _h_access_asset(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    asset = _target_role(state.world, ctx, _arg(event, "asset"))
    verdict = pt.access_asset(state.world, actor.id, asset.id, ctx.id)
    return _Outcome(
        verdict, {"asset": asset.id}, actor_role=actor, target_role=asset, context=ctx
    )


def _h_disclose(state: EngineState, event: Event) -> _Outcome:
    actor, ctx = _actor_role(state.world, event)
    asset = _target_role(state.world, ctx, _arg(event, "asset"))
    verdict = pt.disclose(
        state.world, actor.id, asset.id, _arg(event, "recipient"), consent=_opt(event, "consent")
    )
    return _Outcome(
        verdict,
        {"asset": asset.id, "recipient": _arg(event, "recipient")},
        actor_role=actor,
        target_role=asset,
        context=ctx,
    )


_HANDLERS = {
    "create-entity": _h_create_entity,
    "display-aspect": _h_display_aspect,
    "grant-warrant": _h_grant_warrant,
    "resolve-entity": _h_resolve_entity,
    "instantiate": _h_instantiate,
    "destroy-context": _h_destroy_context,
    "enact": _h_enact,
    "relinquish": _h_relinquish,
    "claim-solitude": _h_claim_solitude,
    "invite": _h_invite,
    "join": _h_join,
    "deposit-secret": _h_deposit_secret,
    "reveal": _h_reveal,
    "create-anon": _h_create_anon,
    "publish": _h_publish,
    "sanction": _h_sanction,
    "appeal": _h_appeal,
    "authenticate-anonym": _h_authenticate_anonym,
    "access-asset": _h_access_asset,
    "disclose": _h_disclose,
}
for _verb in ("introspect", "intrude", "observe", "control", "surveil", "compel"):
    _HANDLERS[_verb] = (
        lambda state, event, _v=_verb: _generic_context_action(state, event, _v)
    )


# ---------------------------------------------------------------------------
# Validation and the step pipeline


def full_validation(world: World) -> list[Violation]:
    """Metamodel, rule-graph and template conformance checks combined."""
    out = mm.validate_structure(world) + validate_rules(world) + pt.conformance_all(world)
    return sorted(out, key=lambda v: (v.kind, v.subject, v.detail))


def init(world: World, monitor: bool = False) -> EngineState:
    """Engine state over a structurally sound model.  Does not clone."""
    violations = full_validation(world)
    if violations:
        raise InvalidInitialModel(violations)
    return EngineState(world=world, monitor=monitor)


def step(state: EngineState, event: Event) -> StepResult:
    """Run one event through the pipeline and record its result."""
    if event.seq != state.world.event_counter + 1:
        raise SequenceGap(
            f"event seq {event.seq} after counter {state.world.event_counter}"
        )
    state.world.event_counter = event.seq

    if event.verb not in VERB_SET:
        result = StepResult(
            event.seq, event.verb, event.actor, Verdict(STRUCTURAL_ERROR),
            violations=[f"UnknownVerb: {event.verb!r}"],
        )
        state.steps.append(result)
        return result

    try:
        outcome = _HANDLERS[event.verb](state, event)
        result = StepResult(event.seq, event.verb, event.actor, outcome.verdict, outcome.delta)
    except ModelError as err:
        outcome = _Outcome(Verdict(STRUCTURAL_ERROR))
        result = StepResult(
            event.seq, event.verb, event.actor, outcome.verdict,
            violations=[f"{type(err).__name__}: {err}"],
        )

    applied = _applies(state, outcome.verdict)
    if applied and outcome.actor_role is not None and outcome.context is not None:
        discharge_matching(
            state.world,
            state.ledger,
            event.verb,
            outcome.actor_role,
            outcome.target_role,
            outcome.context,
        )
        for rule_id, rel_deadline in outcome.verdict.obligations_triggered:
            rule = state.world.rules.get(rule_id)
            if rule is not None:
                trigger_obligation(
                    state.ledger, rule, outcome.actor_role.id, event.seq, rel_deadline
                )
    if applied:
        for rid in outcome.bound_roles:
            role = state.world.roles.get(rid)
            if role is None:
                continue
            for rule in binding_obligations(state.world, role):
                trigger_obligation(state.ledger, rule, rid, event.seq)

    tick_obligations(state.ledger, event.seq)

    if outcome.destroyed_context:
        collected = mm.gc_roles(state.world)
        for rid in collected:
            breach_for_role(state.ledger, rid)
        if collected:
            result.delta["collected"] = collected

    state.steps.append(result)
    return result


def run(world: World, trace: list[Event], monitor: bool = False) -> RunReport:
    """Fold ``step`` over a trace against a private clone of the world."""
    state = init(world.clone(), monitor=monitor)
    for event in trace:
        step(state, event)
    return build_report(state)


def build_report(state: EngineState) -> RunReport:
    counts = {"permits": 0, "forbids": 0, "structural_errors": 0}
    for s in state.steps:
        if s.verdict.outcome == PERMIT:
            counts["permits"] += 1
        elif s.verdict.outcome == FORBID:
            counts["forbids"] += 1
        else:
            counts["structural_errors"] += 1
    summary = {**counts, "breaches": len(state.ledger.breached)}

    catalog: dict[str, dict] = {}
    for rid in sorted(state.world.rules):
        rule = state.world.rules[rid]
        catalog[rid] = {
            "stereotype": rule.stereotype.value,
            "scope": rule.scope,
            "verb": rule.action.verb,
            "target": rule.action.target,
            "template": rule.action.template,
            "derogates": rule.derogates,
            "deadline": rule.deadline,
            "text": rule.text,
        }
    for wid in sorted(state.world.warrants):
        warrant = state.world.warrants[wid]
        catalog[f"warrant-{wid}"] = {
            "stereotype": "allowance",
            "scope": "Actor",
            "verb": warrant.scope,
            "target": None,
            "template": None,
            "derogates": f"core-forbid-{warrant.scope}" if warrant.scope != "resolve" else None,
            "deadline": None,
            "text": f"warrant {wid} issued by {warrant.issuer}",
        }

    return RunReport(
        steps=state.steps,
        ledger=state.ledger,
        audit=list(state.world.linkage.audit),
        final_violations=full_validation(state.world),
        summary=summary,
        rules=catalog,
    )


# ---------------------------------------------------------------------------
# Report serialization and explanation


def _ledger_json(ledger: ObligationLedger) -> dict:
    def bucket(entries):
        return [
            {
                "rule": e.rule,
                "obligor": e.obligor,
                "deadline": e.deadline,
                "triggered_at": e.triggered_at,
            }
            for e in sorted(entries, key=lambda e: (e.rule, e.obligor, e.triggered_at))
        ]

    return {
        "pending": bucket(ledger.pending),
        "discharged": bucket(ledger.discharged),
        "breached": bucket(ledger.breached),
    }


def report_to_dict(report: RunReport) -> dict:
    return {
        "events": [
            {
                "seq": s.seq,
                "verb": s.verb,
                "actor": s.actor,
                "outcome": s.verdict.outcome,
                "chain": list(s.verdict.chain),
                "violations": list(s.violations),
            }
            for s in sorted(report.steps, key=lambda s: s.seq)
        ],
        "obligations": _ledger_json(report.ledger),
        "audit": [
            {
                "seq": a.seq,
                "aspect": a.aspect,
                "requester": a.requester,
                "warrant": a.warrant,
                "outcome": a.outcome,
            }
            for a in sorted(report.audit, key=lambda a: a.seq)
        ],
        "summary": dict(report.summary),
        "rules": report.rules,
        "final_violations": [str(v) for v in report.final_violations],
    }


def report_to_json(report: RunReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def explain(report: RunReport, seq: int) -> str:
    return explain_dict(report_to_dict(report), seq)


def explain_dict(doc: dict, seq: int) -> str:
    """Render the verdict chain of one event: rule ids, stereotypes,
    derogation arrows and matched scopes, nothing inferred."""
    event = next((e for e in doc.get("events", []) if e.get("seq") == seq), None)
    if event is None:
        raise KeyError(f"no event with seq {seq} in report")
    lines = [
        f"seq {event['seq']}: {event['verb']} by {event['actor']} -> {event['outcome']}"
    ]
    if event["outcome"] == STRUCTURAL_ERROR:
        for v in event.get("violations", []):
            lines.append(f"  violation: {v}")
        return "\n".join(lines)
    chain = event.get("chain", [])
    if not chain:
        if event["outcome"] == FORBID:
            lines.append("  no rule chain: verb absent from the role's capability table")
        else:
            lines.append("  no rule chain: permitted by the role's capability table")
        return "\n".join(lines)
    rules = doc.get("rules", {})
    for i, rid in enumerate(chain):
        info = rules.get(rid, {})
        bits = [f"{rid} [{info.get('stereotype', '?')}]", f"scope={info.get('scope', '?')}"]
        if info.get("verb") is not None:
            bits.append(f"verb={info['verb']}")
        if info.get("target"):
            bits.append(f"target={info['target']}")
        if info.get("template"):
            bits.append(f"in={info['template']}")
        prefix = "  " if i == 0 else "  " + "  " * i + "<- derogated by "
        lines.append(prefix + " ".join(bits))
    return "\n".join(lines)
