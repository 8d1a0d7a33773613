"""The five privacy-state templates and their context operations.

Each template ships a role vocabulary with multiplicities, a capability
table (which verbs a role can perform at all; everything else is
default-denied), a bundle of deontic rules registered when the template is
first instantiated, and a parameter schema.

Capability tables say what is structurally possible for a role; the
deontic layer then decides whether a possible act is permitted.  The
Trusting capability tables are deliberately asymmetric: only the Trustee
can access the asset, while disclosure consent can only be minted by a
Truster.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from . import model
from .deontic import (
    FORBID,
    PERMIT,
    VERB_SET,
    DeonticRule,
    Stereotype,
    Verdict,
    evaluate,
    make_rule,
    warrant_allowances,
)
from .errors import (
    AlreadyEmbodied,
    DuplicateId,
    LegalActorRequired,
    MultiplicityViolation,
    NoGovernor,
    NoGuarantor,
    NotAPublicFigure,
    NotAnIntimate,
    ParamError,
    RoleBindingError,
    SecretNotOwnedByIntimate,
    UnknownAspect,
    UnknownContext,
    UnknownEntity,
    UnknownRole,
    UnknownTemplate,
)
from .model import (
    ContextInstance,
    EntityKind,
    RoleInstance,
    Token,
    Violation,
    World,
    owner_chain,
)

LEGAL_ACTOR_KINDS = (EntityKind.LEGAL_PERSON, EntityKind.JUDICIAL_AUTHORITY)


@dataclass(frozen=True)
class RoleSpec:
    name: str
    min_count: int
    max_count: Optional[int]  # None = unbounded


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "int" | "choice" | "bool"
    doc: str
    choices: tuple[str, ...] = ()
    minimum: int = 0
    default: Optional[str] = None


@dataclass(frozen=True)
class PatternTemplate:
    name: str
    roles: tuple[RoleSpec, ...]
    capabilities: Mapping[str, frozenset[str]]
    bundled: tuple[DeonticRule, ...]
    params: tuple[ParamSpec, ...]

    def role_spec(self, name: str) -> Optional[RoleSpec]:
        for spec in self.roles:
            if spec.name == name:
                return spec
        return None

    def param_spec(self, name: str) -> Optional[ParamSpec]:
        for spec in self.params:
            if spec.name == name:
                return spec
        return None


def _caps(table: dict[str, str]) -> dict[str, frozenset[str]]:
    return {role: frozenset(verbs.split()) if verbs else frozenset() for role, verbs in table.items()}


ISOLATED = PatternTemplate(
    name="Isolated",
    roles=(
        RoleSpec("Isolate", 1, 1),
        RoleSpec("Intruder", 0, None),
        RoleSpec("Guarantor", 0, 1),
        RoleSpec("Governor", 0, 1),
    ),
    capabilities=_caps(
        {
            "Isolate": "introspect",
            "Intruder": "intrude relinquish",
            "Guarantor": "relinquish",
            "Governor": "intrude relinquish",
        }
    ),
    bundled=(
        make_rule(
            "isolated-forbid-intrude",
            Stereotype.FORBIDDANCE,
            "Intruder",
            "intrude",
            target="Isolate",
            template="Isolated",
            text="intruding on an isolate is forbidden",
            origin="bundled",
        ),
        make_rule(
            "isolated-allow-urgent",
            Stereotype.ALLOWANCE,
            "Governor",
            "intrude",
            target="Isolate",
            template="Isolated",
            derogates="isolated-forbid-intrude",
            text="the governor may perform urgent intrusions",
            origin="bundled",
        ),
    ),
    params=(),
)

SECLUDED = PatternTemplate(
    name="Secluded",
    roles=(
        RoleSpec("Intimate", 2, None),  # upper bound set by max_intimates
        RoleSpec("Secret", 0, None),
    ),
    capabilities=_caps(
        {
            "Intimate": "invite reveal deposit-secret observe relinquish",
            "Secret": "",
        }
    ),
    bundled=(
        make_rule(
            "secluded-forbid-join",
            Stereotype.FORBIDDANCE,
            "Intimate",
            "join",
            template="Secluded",
            text="no one joins an intimacy without an invitation",
            origin="bundled",
        ),
        make_rule(
            "secluded-allow-invited",
            Stereotype.ALLOWANCE,
            "Intimate",
            "join",
            template="Secluded",
            derogates="secluded-forbid-join",
            text="a valid invitation admits its holder",
            origin="bundled",
        ),
        make_rule(
            "secluded-forbid-reveal",
            Stereotype.FORBIDDANCE,
            "Intimate",
            "reveal",
            template="Secluded",
            text="intimates must not reveal anything to outside parties",
            origin="bundled",
        ),
    ),
    params=(
        ParamSpec(
            "max_intimates",
            "int",
            "upper limit on the size of the intimate group",
            minimum=2,
        ),
    ),
)

PUBLIC_SPHERE = PatternTemplate(
    name="PublicSphere",
    roles=(
        RoleSpec("PublicFigure", 0, None),
        RoleSpec("Anon", 0, None),
        RoleSpec("PublicProperty", 0, None),
        RoleSpec("Society", 1, 1),
        RoleSpec("Governor", 0, 1),
    ),
    capabilities=_caps(
        {
            "PublicFigure": "publish appeal create-anon observe surveil compel reveal relinquish",
            "Anon": "publish observe relinquish",
            "PublicProperty": "",
            "Society": "sanction observe publish",
            "Governor": "observe surveil compel",
        }
    ),
    bundled=(
        make_rule(
            "publicsphere-forbid-offense-anon",
            Stereotype.FORBIDDANCE,
            "Anon",
            "publish",
            template="PublicSphere",
            text="offensive publication breaches the society's reserve",
            origin="bundled",
        ),
        make_rule(
            "publicsphere-forbid-offense-figure",
            Stereotype.FORBIDDANCE,
            "PublicFigure",
            "publish",
            template="PublicSphere",
            text="offensive publication breaches the society's reserve",
            origin="bundled",
        ),
        make_rule(
            "publicsphere-allow-unoffensive-anon",
            Stereotype.ALLOWANCE,
            "Anon",
            "publish",
            template="PublicSphere",
            derogates="publicsphere-forbid-offense-anon",
            text="unoffensive publication is welcome",
            origin="bundled",
        ),
        make_rule(
            "publicsphere-allow-unoffensive-figure",
            Stereotype.ALLOWANCE,
            "PublicFigure",
            "publish",
            template="PublicSphere",
            derogates="publicsphere-forbid-offense-figure",
            text="unoffensive publication is welcome",
            origin="bundled",
        ),
        make_rule(
            "publicsphere-forbid-pierce",
            Stereotype.FORBIDDANCE,
            "PublicFigure",
            "reveal",
            target="Anon",
            template="PublicSphere",
            text="no assistance in piercing the veil of anonymity",
            origin="bundled",
        ),
        make_rule(
            "publicsphere-forbid-relink",
            Stereotype.FORBIDDANCE,
            "Anon",
            "*",
            template="PublicSphere",
            text="a spent unlinkable anon acts no further",
            origin="bundled",
        ),
        make_rule(
            "publicsphere-forbid-sanction",
            Stereotype.FORBIDDANCE,
            "Society",
            "sanction",
            template="PublicSphere",
            text="sanctions require a recorded reserve breach",
            origin="bundled",
        ),
    ),
    params=(
        ParamSpec(
            "linkability",
            "choice",
            "persistent anons keep a pseudonymous history; unlinkable anons act at most once",
            choices=("persistent", "unlinkable"),
            default="persistent",
        ),
        ParamSpec(
            "anon_auth",
            "choice",
            "authenticate-anonym policy",
            choices=("always-deny", "prove-on-match"),
            default="always-deny",
        ),
    ),
)

TRUSTING = PatternTemplate(
    name="Trusting",
    roles=(
        RoleSpec("Truster", 1, None),
        RoleSpec("Trustee", 1, None),
        RoleSpec("Asset", 1, None),
    ),
    capabilities=_caps(
        {
            "Truster": "disclose invite observe relinquish",
            "Trustee": "access-asset observe disclose relinquish",
            "Asset": "",
        }
    ),
    bundled=(
        make_rule(
            "trusting-obligation-care",
            Stereotype.OBLIGATION,
            "Trustee",
            "observe",
            target="Asset",
            template="Trusting",
            deadline=10,
            text="a trustee owes a duty of care over the asset",
            origin="bundled",
        ),
        make_rule(
            "trusting-forbid-disclose",
            Stereotype.FORBIDDANCE,
            "Trustee",
            "disclose",
            target="Asset",
            template="Trusting",
            text="asset contents stay inside the trusting context",
            origin="bundled",
        ),
        make_rule(
            "trusting-allow-consent",
            Stereotype.ALLOWANCE,
            "Trustee",
            "disclose",
            target="Asset",
            template="Trusting",
            derogates="trusting-forbid-disclose",
            text="the truster's consent opens the disclosure",
            origin="bundled",
        ),
    ),
    params=(
        ParamSpec(
            "legal_trust",
            "bool",
            "require trustees to be legal actors",
            default="false",
        ),
        ParamSpec(
            "care_deadline",
            "int",
            "events within which the duty of care must be exercised",
            minimum=1,
            default="10",
        ),
    ),
)

GENERIC = PatternTemplate(
    name="Generic",
    roles=(),
    capabilities={},
    bundled=(),
    params=(),
)

TEMPLATES: dict[str, PatternTemplate] = {
    t.name: t for t in (ISOLATED, SECLUDED, PUBLIC_SPHERE, TRUSTING, GENERIC)
}

TEMPLATE_NAMES = tuple(TEMPLATES)


def capability_verbs(context: ContextInstance, role_type: str) -> frozenset[str]:
    """Verbs a role of ``role_type`` can perform in ``context`` at all.

    Generic contexts read their table from ``cap_<Role>`` params; every
    other template ships a fixed table.  Missing entries deny everything.
    """
    template = TEMPLATES.get(context.template)
    if template is None:
        return frozenset()
    if template.name == "Generic":
        raw = context.params.get(f"cap_{role_type}", "")
        return frozenset(v for v in raw.split(",") if v)
    return template.capabilities.get(role_type, frozenset())


def live_roles(world: World, ctx: ContextInstance, role_type: Optional[str] = None) -> list[RoleInstance]:
    out = []
    for rid in ctx.roles:
        role = world.roles.get(rid)
        if role is None or role.context != ctx.id:
            continue
        if role_type is None or role.role_type == role_type:
            out.append(role)
    return out


def _validate_params(template: PatternTemplate, params: Mapping[str, str]) -> None:
    for key, value in params.items():
        if template.name == "Generic":
            if key.startswith("cap_"):
                bad = [v for v in value.split(",") if v and v != "*" and v not in VERB_SET]
                if bad:
                    raise ParamError(f"unknown verbs in {key}: {', '.join(bad)}")
            continue
        spec = template.param_spec(key)
        if spec is None:
            raise ParamError(f"template {template.name} has no param {key!r}")
        if spec.kind == "int":
            try:
                number = int(value)
            except ValueError:
                raise ParamError(f"param {key} must be an integer, got {value!r}") from None
            if number < spec.minimum:
                raise ParamError(f"param {key} must be >= {spec.minimum}")
        elif spec.kind == "choice" and value not in spec.choices:
            raise ParamError(f"param {key} must be one of {', '.join(spec.choices)}")
        elif spec.kind == "bool" and value not in ("true", "false"):
            raise ParamError(f"param {key} must be true or false")


def _int_param(ctx: ContextInstance, name: str, default: Optional[int] = None) -> Optional[int]:
    raw = ctx.params.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


def _intimate_cap(ctx: ContextInstance) -> Optional[int]:
    return _int_param(ctx, "max_intimates")


def register_bundle(world: World, template: PatternTemplate) -> None:
    """Install the template's bundled rules once, under stable ids."""
    for proto in template.bundled:
        if proto.id not in world.rules:
            world.rules[proto.id] = proto


def _entity_behind(world: World, aspect_id: Optional[str]) -> Optional[str]:
    if aspect_id is None or not world.linkage.has(aspect_id):
        return None
    return world.linkage.entity_of(aspect_id)


def _kind_behind(world: World, aspect_id: Optional[str]) -> Optional[EntityKind]:
    entity_id = _entity_behind(world, aspect_id)
    if entity_id is None:
        return None
    record = world.entities.get(entity_id)
    return record.kind if record else None


def _check_secret_ownership(world: World, secret_aspect: str, intimate_entities: set[str]) -> bool:
    entity_id = _entity_behind(world, secret_aspect)
    if entity_id is None:
        return False
    return bool(set(owner_chain(world, entity_id)) & intimate_entities)


def instantiate(
    world: World,
    template_name: str,
    embodied_by: str,
    bindings: Mapping[str, Sequence[str]],
    params: Optional[Mapping[str, str]] = None,
    context_id: Optional[str] = None,
) -> str:
    """Create a context from a template; returns the new context id.

    Bindings map role types to the aspects enacting them.  Bundled rules
    are registered; multiplicities, params and template-specific entity
    checks are enforced so a fresh context always passes conformance.
    """
    template = TEMPLATES.get(template_name)
    if template is None:
        raise UnknownTemplate(f"no template named {template_name!r}")
    entity = world.entities.get(embodied_by)
    if entity is None:
        raise UnknownEntity(f"entity {embodied_by!r} does not exist")
    if entity.embodies is not None:
        raise AlreadyEmbodied(f"entity {embodied_by!r} already embodies {entity.embodies!r}")
    if context_id is None:
        context_id = world.fresh_id("c", world.contexts)
    elif context_id in world.contexts:
        raise DuplicateId(f"context {context_id!r} already exists")
    params = dict(params or {})
    _validate_params(template, params)

    for role_type, aspect_ids in bindings.items():
        if template.name != "Generic" and template.role_spec(role_type) is None:
            raise RoleBindingError(f"template {template.name} has no role {role_type!r}")
        if role_type == "Anon":
            raise RoleBindingError("Anon roles are created through create-anon only")
        for aspect_id in aspect_ids:
            if aspect_id not in world.aspects:
                raise UnknownAspect(f"aspect {aspect_id!r} does not exist")

    if template.name != "Generic":
        for spec in template.roles:
            count = len(bindings.get(spec.name, ()))
            maximum = spec.max_count
            if template.name == "Secluded" and spec.name == "Intimate":
                cap = params.get("max_intimates")
                if cap is not None:
                    maximum = int(cap)
            if count < spec.min_count:
                raise MultiplicityViolation(
                    f"role {spec.name} needs at least {spec.min_count}, got {count}"
                )
            if maximum is not None and count > maximum:
                raise MultiplicityViolation(
                    f"role {spec.name} allows at most {maximum}, got {count}"
                )

    if template.name == "PublicSphere":
        for aspect_id in bindings.get("Society", ()):
            if _entity_behind(world, aspect_id) != embodied_by:
                raise RoleBindingError("the Society role must be enacted by the embodying entity")
        for aspect_id in bindings.get("Governor", ()):
            if _kind_behind(world, aspect_id) is not EntityKind.JUDICIAL_AUTHORITY:
                raise RoleBindingError("the Governor must be a JudicialAuthority")

    if template.name == "Secluded":
        intimate_entities = {
            e for a in bindings.get("Intimate", ()) if (e := _entity_behind(world, a))
        }
        for aspect_id in bindings.get("Secret", ()):
            if not _check_secret_ownership(world, aspect_id, intimate_entities):
                raise SecretNotOwnedByIntimate(
                    f"secret aspect {aspect_id!r} is not owned by an intimate"
                )

    if template.name == "Trusting" and params.get("legal_trust") == "true":
        for aspect_id in bindings.get("Trustee", ()):
            if _kind_behind(world, aspect_id) not in LEGAL_ACTOR_KINDS:
                raise LegalActorRequired(f"trustee aspect {aspect_id!r} is not a legal actor")

    ctx = ContextInstance(
        id=context_id, template=template.name, embodied_by=embodied_by, params=params
    )
    world.contexts[context_id] = ctx
    entity.embodies = context_id
    for role_type in sorted(bindings):
        for aspect_id in bindings[role_type]:
            rid = world.fresh_id("r", world.roles)
            world.roles[rid] = RoleInstance(
                id=rid, role_type=role_type, context=context_id, enactor=aspect_id
            )
            ctx.roles.append(rid)
    register_bundle(world, template)
    return context_id


def enact(
    world: World, aspect_id: str, ctx_id: str, role_type: str, role_id: Optional[str] = None
) -> str:
    """Bind one more role in an existing context."""
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    if aspect_id not in world.aspects:
        raise UnknownAspect(f"aspect {aspect_id!r} does not exist")
    template = TEMPLATES.get(ctx.template)
    if template is None:
        raise UnknownTemplate(ctx.template)
    if role_type == "Anon":
        raise RoleBindingError("Anon roles are created through create-anon only")
    if template.name != "Generic":
        spec = template.role_spec(role_type)
        if spec is None:
            raise RoleBindingError(f"template {template.name} has no role {role_type!r}")
        maximum = spec.max_count
        if template.name == "Secluded" and role_type == "Intimate":
            cap = _intimate_cap(ctx)
            if cap is not None:
                maximum = cap
        if maximum is not None and len(live_roles(world, ctx, role_type)) >= maximum:
            raise MultiplicityViolation(f"role {role_type} is already at its maximum")
    if template.name == "PublicSphere":
        if role_type == "Society" and _entity_behind(world, aspect_id) != ctx.embodied_by:
            raise RoleBindingError("the Society role must be enacted by the embodying entity")
        if role_type == "Governor" and _kind_behind(world, aspect_id) is not EntityKind.JUDICIAL_AUTHORITY:
            raise RoleBindingError("the Governor must be a JudicialAuthority")
    if template.name == "Secluded" and role_type == "Secret":
        intimate_entities = {
            e
            for r in live_roles(world, ctx, "Intimate")
            if (e := _entity_behind(world, r.enactor))
        }
        if not _check_secret_ownership(world, aspect_id, intimate_entities):
            raise SecretNotOwnedByIntimate(
                f"secret aspect {aspect_id!r} is not owned by an intimate"
            )
    if role_id is None:
        role_id = world.fresh_id("r", world.roles)
    elif role_id in world.roles:
        raise DuplicateId(f"role {role_id!r} already exists")
    world.roles[role_id] = RoleInstance(
        id=role_id, role_type=role_type, context=ctx_id, enactor=aspect_id
    )
    ctx.roles.append(role_id)
    return role_id


def relinquish(world: World, role_id: str) -> None:
    role = world.roles.get(role_id)
    if role is None:
        raise UnknownRole(f"role {role_id!r} does not exist")
    ctx = world.contexts.get(role.context)
    if ctx is not None and role_id in ctx.roles:
        ctx.roles.remove(role_id)
    world.roles.pop(role_id, None)
    world.aliases.pop(role_id, None)


def destroy_context(world: World, ctx_id: str) -> None:
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    entity = world.entities.get(ctx.embodied_by)
    if entity is not None and entity.embodies == ctx_id:
        entity.embodies = None
    del world.contexts[ctx_id]


# ---------------------------------------------------------------------------
# Per-event rule selection

_CONDITIONAL = frozenset(
    {
        "publicsphere-allow-unoffensive-anon",
        "publicsphere-allow-unoffensive-figure",
        "publicsphere-forbid-relink",
        "publicsphere-forbid-sanction",
        "secluded-forbid-reveal",
        "trusting-allow-consent",
    }
)


def _consent_valid(
    world: World, ctx: ContextInstance, consent: Optional[str], recipient: Optional[str]
) -> bool:
    if consent is None:
        return False
    token = world.tokens.get(consent)
    if token is None or token.consumed or token.kind != "consent":
        return False
    if token.context != ctx.id or token.holder != recipient:
        return False
    issuer = world.roles.get(token.issuer)
    return issuer is not None and issuer.role_type == "Truster" and issuer.context == ctx.id


def _is_member_aspect(world: World, ctx: ContextInstance, aspect_id: Optional[str]) -> bool:
    return any(r.enactor == aspect_id for r in live_roles(world, ctx, "Intimate"))


def rules_for(
    world: World,
    verb: str,
    actor_role: RoleInstance,
    target_role: Optional[RoleInstance],
    context: ContextInstance,
    *,
    content: Optional[str] = None,
    recipient: Optional[str] = None,
    consent: Optional[str] = None,
) -> list[DeonticRule]:
    """The rule set one evaluation sees: registered rules with the
    condition-bearing bundled rules included or dropped per event, plus
    allowances synthesized from valid warrants.

    A retired (spent) anon additionally loses every allowance scoped to
    Anon, so the relink forbiddance cannot be derogated away.
    """
    spent_anon = actor_role.role_type == "Anon" and actor_role.retired
    active: list[DeonticRule] = []
    for rule in sorted(world.rules.values(), key=lambda r: r.id):
        if spent_anon and rule.stereotype is Stereotype.ALLOWANCE and rule.scope == "Anon":
            continue
        if rule.id not in _CONDITIONAL:
            active.append(rule)
            continue
        if rule.id in ("publicsphere-allow-unoffensive-anon", "publicsphere-allow-unoffensive-figure"):
            if verb != "publish" or not is_offensive(world, content or "", context):
                active.append(rule)
        elif rule.id == "publicsphere-forbid-relink":
            if actor_role.retired:
                active.append(rule)
        elif rule.id == "publicsphere-forbid-sanction":
            if not (target_role is not None and world.breach_marks.get(target_role.id)):
                active.append(rule)
        elif rule.id == "secluded-forbid-reveal":
            if verb != "reveal" or context.template != "Secluded" or not _is_member_aspect(
                world, context, recipient
            ):
                active.append(rule)
        elif rule.id == "trusting-allow-consent":
            if _consent_valid(world, context, consent, recipient):
                active.append(rule)
    active.extend(warrant_allowances(world, verb, actor_role, context))
    return active


# ---------------------------------------------------------------------------
# Pattern operations


def claim_solitude(world: World, claimant: str, surrounding: str) -> str:
    """Spin up a fresh Isolated context for a claimant, granted by a
    guarantor present in the surrounding context."""
    ctx = world.contexts.get(surrounding)
    if ctx is None:
        raise UnknownContext(f"context {surrounding!r} does not exist")
    if claimant not in world.aspects:
        raise UnknownAspect(f"aspect {claimant!r} does not exist")
    guarantors = [r for r in live_roles(world, ctx, "Guarantor") if r.enactor is not None]
    if not guarantors:
        raise NoGuarantor(f"context {surrounding!r} has no enacted Guarantor")
    pod = model.create_entity(
        world, EntityKind.INERT, entity_id=world.fresh_id("iso", world.entities)
    )
    return instantiate(world, "Isolated", pod, {"Isolate": [claimant]})


def invite(world: World, inviter_role: str, invitee: str, ctx_id: str) -> str:
    """Mint a single-use token: an invitation in a Secluded context, a
    disclosure consent in a Trusting one."""
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    role = world.roles.get(inviter_role)
    if role is None or role.context != ctx_id:
        raise NotAnIntimate(f"role {inviter_role!r} is not live in {ctx_id!r}")
    if invitee not in world.aspects:
        raise UnknownAspect(f"aspect {invitee!r} does not exist")
    if ctx.template == "Secluded":
        if role.role_type != "Intimate":
            raise NotAnIntimate(f"role {inviter_role!r} is not an Intimate")
        kind = "invite"
    elif ctx.template == "Trusting":
        if role.role_type != "Truster":
            raise NotAnIntimate(f"only a Truster may issue consent, not {role.role_type}")
        kind = "consent"
    else:
        raise NotAnIntimate(f"template {ctx.template} has no invitations")
    token_id = world.fresh_id("tok", world.tokens)
    world.tokens[token_id] = Token(
        id=token_id, kind=kind, context=ctx_id, issuer=inviter_role, holder=invitee
    )
    return token_id


def _invite_valid(world: World, ctx: ContextInstance, invitee: str, token_id: Optional[str]) -> bool:
    if token_id is None:
        return False
    token = world.tokens.get(token_id)
    if token is None or token.consumed or token.kind != "invite":
        return False
    return token.context == ctx.id and token.holder == invitee


def eval_join(world: World, invitee: str, ctx_id: str, token_id: Optional[str]) -> Verdict:
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    if ctx.template != "Secluded":
        raise RoleBindingError(f"join targets a Secluded context, not {ctx.template}")
    if invitee not in world.aspects:
        raise UnknownAspect(f"aspect {invitee!r} does not exist")
    cap = _intimate_cap(ctx)
    room = cap is None or len(live_roles(world, ctx, "Intimate")) < cap
    if _invite_valid(world, ctx, invitee, token_id) and room:
        return Verdict(PERMIT, ["secluded-forbid-join", "secluded-allow-invited"])
    return Verdict(FORBID, ["secluded-forbid-join"])


def apply_join(world: World, invitee: str, ctx_id: str, token_id: Optional[str]) -> str:
    if token_id is not None and token_id in world.tokens:
        world.tokens[token_id].consumed = True
    ctx = world.contexts[ctx_id]
    rid = world.fresh_id("r", world.roles)
    world.roles[rid] = RoleInstance(id=rid, role_type="Intimate", context=ctx_id, enactor=invitee)
    ctx.roles.append(rid)
    return rid


def join(world: World, invitee: str, ctx_id: str, token_id: Optional[str] = None) -> Verdict:
    verdict = eval_join(world, invitee, ctx_id, token_id)
    if verdict.permitted:
        apply_join(world, invitee, ctx_id, token_id)
    return verdict


def deposit_secret(world: World, owner_role: str, secret_entity: str, ctx_id: str) -> str:
    """Bind a Secret role for an entity owned by one of the intimates."""
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    role = world.roles.get(owner_role)
    if role is None or role.context != ctx_id or role.role_type != "Intimate":
        raise NotAnIntimate(f"role {owner_role!r} is not a live Intimate of {ctx_id!r}")
    if secret_entity not in world.entities:
        raise UnknownEntity(f"entity {secret_entity!r} does not exist")
    intimate_entities = {
        e
        for r in live_roles(world, ctx, "Intimate")
        if (e := _entity_behind(world, r.enactor))
    }
    if not set(owner_chain(world, secret_entity)) & intimate_entities:
        raise SecretNotOwnedByIntimate(
            f"entity {secret_entity!r} is not owned by an intimate of {ctx_id!r}"
        )
    aspect = model.display_aspect(world, secret_entity, label="secret")
    rid = world.fresh_id("r", world.roles)
    world.roles[rid] = RoleInstance(id=rid, role_type="Secret", context=ctx_id, enactor=aspect)
    ctx.roles.append(rid)
    return rid


def create_anon(world: World, figure_role: str, ctx_id: str) -> str:
    """Create an Anon role aliased (in the sealed registry) to a figure.

    The anon's mask is a fresh aspect of the figure's entity, so nothing
    public ties the two together.
    """
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    role = world.roles.get(figure_role)
    if role is None or role.context != ctx_id or role.role_type != "PublicFigure":
        raise NotAPublicFigure(f"role {figure_role!r} is not a live PublicFigure of {ctx_id!r}")
    entity_id = _entity_behind(world, role.enactor)
    if entity_id is None:
        raise NotAPublicFigure(f"role {figure_role!r} has no enacting aspect")
    mask = model.display_aspect(world, entity_id, label="anon")
    rid = world.fresh_id("anon", world.roles)
    world.roles[rid] = RoleInstance(id=rid, role_type="Anon", context=ctx_id, enactor=mask)
    ctx.roles.append(rid)
    proof = world.fresh_id("pf", {})
    world.aliases[rid] = (figure_role, proof)
    return rid


def authenticate_anonym(
    world: World, anon_role: str, challenger: str, proof: Optional[str] = None
) -> bool:
    """Answer an identity challenge against an anon.

    Policy comes from the context's anon_auth param: always-deny refuses
    every challenge; prove-on-match accepts exactly the sealed proof token.
    """
    role = world.roles.get(anon_role)
    if role is None or role.role_type != "Anon":
        raise UnknownRole(f"role {anon_role!r} is not a live Anon")
    if challenger not in world.aspects:
        raise UnknownAspect(f"aspect {challenger!r} does not exist")
    ctx = world.contexts.get(role.context)
    policy = (ctx.params.get("anon_auth") if ctx else None) or "always-deny"
    if policy == "always-deny":
        return False
    alias = world.aliases.get(anon_role)
    return alias is not None and proof is not None and proof == alias[1]


def is_offensive(world: World, content: str, ctx: ContextInstance) -> bool:
    """Deterministic blocklist predicate over lowercased word tokens."""
    if not content or not world.offense_terms:
        return False
    tokens = re.findall(r"[\w']+", content.lower())
    return any(t in world.offense_terms for t in tokens)


def eval_publish(world: World, actor_role: RoleInstance, content: str, ctx: ContextInstance) -> Verdict:
    rules = rules_for(world, "publish", actor_role, None, ctx, content=content)
    return evaluate(world, "publish", actor_role, None, ctx, rules)


def apply_publish(world: World, actor_role: RoleInstance, content: str, ctx: ContextInstance) -> str:
    """Reify the publication as public property administered by the society."""
    embodier = world.entities.get(ctx.embodied_by)
    owner = ctx.embodied_by if embodier and embodier.kind in LEGAL_ACTOR_KINDS else None
    pub = model.create_entity(
        world, EntityKind.INERT, owner=owner, entity_id=world.fresh_id("pub", world.entities)
    )
    aspect = model.display_aspect(world, pub, label="publication")
    world.aspects[aspect].attributes["content"] = content
    rid = world.fresh_id("r", world.roles)
    world.roles[rid] = RoleInstance(id=rid, role_type="PublicProperty", context=ctx.id, enactor=aspect)
    ctx.roles.append(rid)
    return rid


def publish(world: World, actor_role_id: str, content: str, ctx_id: str) -> Verdict:
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    actor = world.roles.get(actor_role_id)
    if actor is None:
        raise UnknownRole(f"role {actor_role_id!r} does not exist")
    verdict = eval_publish(world, actor, content, ctx)
    if verdict.permitted:
        apply_publish(world, actor, content, ctx)
        retire_if_unlinkable(world, actor, ctx)
    elif is_offensive(world, content, ctx):
        world.breach_marks.setdefault(actor_role_id, []).append(world.event_counter)
    return verdict


def retire_if_unlinkable(world: World, actor_role: RoleInstance, ctx: ContextInstance) -> None:
    """Spend a single-action anon after its one permitted act."""
    if (
        actor_role.role_type == "Anon"
        and ctx.params.get("linkability") == "unlinkable"
        and not actor_role.retired
    ):
        actor_role.retired = True


def eval_sanction(
    world: World, society_role: RoleInstance, target: RoleInstance, ctx: ContextInstance
) -> Verdict:
    rules = rules_for(world, "sanction", society_role, target, ctx)
    return evaluate(world, "sanction", society_role, target, ctx, rules)


def sanction(world: World, society_role_id: str, target_role_id: str, ctx_id: str) -> Verdict:
    """Naming and shaming: permitted only against a role with a recorded
    reserve breach; the mark lands on the role, never the entity."""
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    society = world.roles.get(society_role_id)
    target = world.roles.get(target_role_id)
    if society is None or target is None:
        raise UnknownRole("sanction needs live society and target roles")
    verdict = eval_sanction(world, society, target, ctx)
    if verdict.permitted:
        world.sanction_marks.setdefault(target_role_id, []).append(world.event_counter)
    return verdict


def appeal(world: World, figure_role_id: str, ctx_id: str) -> Verdict:
    """Log an appeal for the governor; the engine never adjudicates it."""
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    figure = world.roles.get(figure_role_id)
    if figure is None:
        raise UnknownRole(f"role {figure_role_id!r} does not exist")
    if not live_roles(world, ctx, "Governor"):
        raise NoGovernor(f"context {ctx_id!r} has no Governor bound")
    verdict = evaluate(
        world, "appeal", figure, None, ctx, rules_for(world, "appeal", figure, None, ctx)
    )
    if verdict.permitted:
        world.appeals.append((world.event_counter, figure_role_id, ctx_id))
    return verdict


def access_asset(world: World, trustee_role_id: str, asset_role_id: str, ctx_id: str) -> Verdict:
    """Trustee access to the asset; a permit triggers or refreshes the
    duty-of-care obligation."""
    ctx = world.contexts.get(ctx_id)
    if ctx is None:
        raise UnknownContext(f"context {ctx_id!r} does not exist")
    trustee = world.roles.get(trustee_role_id)
    asset = world.roles.get(asset_role_id)
    if trustee is None or asset is None or asset.context != ctx_id:
        raise UnknownRole("access-asset needs live trustee and asset roles")
    verdict = evaluate(
        world,
        "access-asset",
        trustee,
        asset,
        ctx,
        rules_for(world, "access-asset", trustee, asset, ctx),
    )
    if verdict.permitted and "trusting-obligation-care" in world.rules:
        deadline = _int_param(ctx, "care_deadline", world.rules["trusting-obligation-care"].deadline)
        verdict.obligations_triggered.append(("trusting-obligation-care", deadline))
    return verdict


def disclose(
    world: World,
    actor_role_id: str,
    asset_role_id: str,
    outside: str,
    consent: Optional[str] = None,
) -> Verdict:
    """Disclosure of asset contents outside the context; forbidden for a
    trustee unless truster-issued consent accompanies it."""
    actor = world.roles.get(actor_role_id)
    if actor is None:
        raise UnknownRole(f"role {actor_role_id!r} does not exist")
    ctx = world.contexts.get(actor.context)
    if ctx is None:
        raise UnknownContext(f"context {actor.context!r} does not exist")
    asset = world.roles.get(asset_role_id)
    if asset is None or asset.context != ctx.id:
        raise UnknownRole(f"role {asset_role_id!r} is not live in {ctx.id!r}")
    if outside not in world.aspects:
        raise UnknownAspect(f"aspect {outside!r} does not exist")
    verdict = evaluate(
        world,
        "disclose",
        actor,
        asset,
        ctx,
        rules_for(world, "disclose", actor, asset, ctx, recipient=outside, consent=consent),
    )
    if verdict.permitted and consent is not None and consent in world.tokens:
        token = world.tokens[consent]
        if token.kind == "consent" and not token.consumed:
            token.consumed = True
    return verdict


# ---------------------------------------------------------------------------
# Conformance


def check_conformance(world: World, ctx: ContextInstance) -> list[Violation]:
    """Pattern-vs-instance validation for one context; total."""
    out: list[Violation] = []
    template = TEMPLATES.get(ctx.template)
    if template is None:
        return [Violation("UnknownTemplate", ctx.id, ctx.template)]

    try:
        _validate_params(template, ctx.params)
    except ParamError as err:
        out.append(Violation("ParamSchemaViolation", ctx.id, str(err)))

    roles = live_roles(world, ctx)
    by_type: dict[str, list[RoleInstance]] = {}
    for role in roles:
        by_type.setdefault(role.role_type, []).append(role)

    if template.name != "Generic":
        for role in roles:
            if template.role_spec(role.role_type) is None:
                out.append(Violation("UnknownRoleType", role.id, role.role_type))
        for spec in template.roles:
            count = len(by_type.get(spec.name, []))
            maximum = spec.max_count
            if template.name == "Secluded" and spec.name == "Intimate":
                cap = _intimate_cap(ctx)
                if cap is not None:
                    maximum = cap
            if count < spec.min_count or (maximum is not None and count > maximum):
                out.append(
                    Violation(
                        "MultiplicityViolation",
                        ctx.id,
                        f"{spec.name} count {count} outside [{spec.min_count}, {maximum if maximum is not None else '*'}]",
                    )
                )

    for proto in template.bundled:
        if proto.id not in world.rules:
            out.append(Violation("MissingBundledRule", ctx.id, proto.id))

    if template.name == "Secluded":
        intimate_entities = {
            e for r in by_type.get("Intimate", []) if (e := _entity_behind(world, r.enactor))
        }
        for role in by_type.get("Secret", []):
            if role.enactor is None or not _check_secret_ownership(
                world, role.enactor, intimate_entities
            ):
                out.append(Violation("SecretNotOwnedByIntimate", role.id, ""))

    if template.name == "Trusting" and ctx.params.get("legal_trust") == "true":
        for role in by_type.get("Trustee", []):
            if _kind_behind(world, role.enactor) not in LEGAL_ACTOR_KINDS:
                out.append(Violation("LegalActorRequired", role.id, ""))

    if template.name == "PublicSphere":
        for role in by_type.get("Society", []):
            if _entity_behind(world, role.enactor) != ctx.embodied_by:
                out.append(Violation("SocietyMismatch", role.id, ""))
        for role in by_type.get("Governor", []):
            if _kind_behind(world, role.enactor) is not EntityKind.JUDICIAL_AUTHORITY:
                out.append(Violation("GovernorNotJudicial", role.id, ""))
        figures = {r.id for r in by_type.get("PublicFigure", [])}
        for role in by_type.get("Anon", []):
            alias = world.aliases.get(role.id)
            if alias is None:
                out.append(Violation("AliasMissing", role.id, ""))
            elif alias[0] not in figures:
                out.append(Violation("AliasMismatch", role.id, f"figure {alias[0]!r}"))

    return sorted(out, key=lambda v: (v.kind, v.subject, v.detail))


def conformance_all(world: World) -> list[Violation]:
    out: list[Violation] = []
    for ctx in world.contexts.values():
        out.extend(check_conformance(world, ctx))
    for anon_id in world.aliases:
        if anon_id not in world.roles:
            out.append(Violation("StaleAlias", anon_id, "anon role gone"))
    return sorted(out, key=lambda v: (v.kind, v.subject, v.detail))
