"""Identity metamodel: entities, aspects, roles, contexts and the sealed
one-way linkage registry.

A World is a plain mutable container of records.  Operations mutate it in
place and raise a ModelError when a precondition fails; the replay engine
orders its pipeline so that nothing is applied unless the step is
permitted, and callers that want snapshot semantics use ``World.clone()``.

The linkage registry is the only place the aspect -> entity binding lives.
Aspect records never point back at their entity, so serializing an aspect
cannot reveal who displays it; reverse lookups go through the gated
registry and leave an audit record whether or not they succeed.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterator, Optional

from .errors import (
    AlreadyEmbodied,
    AntiSlaveryViolation,
    AspectIdLeak,
    DuplicateId,
    InvalidWarrantScope,
    LinkageDenied,
    NotAJudicialAuthority,
    OwnershipNotPermitted,
    UnknownAspect,
    UnknownContext,
    UnknownEntity,
    UnknownOwner,
    UnknownWarrant,
)

if TYPE_CHECKING:  # pragma: no cover
    from .deontic import DeonticRule


class EntityKind(str, Enum):
    INERT = "Inert"
    ACTOR = "Actor"
    SENTIENT_ACTOR = "SentientActor"
    NATURAL_PERSON = "NaturalPerson"
    LEGAL_PERSON = "LegalPerson"
    JUDICIAL_AUTHORITY = "JudicialAuthority"


# Subtype lattice, kind -> all ancestors including itself.  "Entity" is the
# abstract root: a valid rule scope, never an instantiable kind.
KIND_ANCESTORS: dict[EntityKind, tuple[str, ...]] = {
    EntityKind.INERT: ("Inert", "Entity"),
    EntityKind.ACTOR: ("Actor", "Entity"),
    EntityKind.SENTIENT_ACTOR: ("SentientActor", "Actor", "Entity"),
    EntityKind.NATURAL_PERSON: ("NaturalPerson", "SentientActor", "Actor", "Entity"),
    EntityKind.LEGAL_PERSON: ("LegalPerson", "Actor", "Entity"),
    EntityKind.JUDICIAL_AUTHORITY: ("JudicialAuthority", "LegalPerson", "Actor", "Entity"),
}

KIND_NAMES = frozenset(k.value for k in EntityKind)
SCOPE_KIND_NAMES = KIND_NAMES | {"Entity"}

WARRANT_SCOPES = ("surveil", "compel", "resolve")

# Kinds that may own other entities.  Natural persons are additionally
# admitted unless the world runs in strict-ownership mode.
LEGAL_OWNER_KINDS = frozenset({EntityKind.LEGAL_PERSON, EntityKind.JUDICIAL_AUTHORITY})


def kind_is(kind: EntityKind, scope: str) -> bool:
    """True when ``kind`` sits at or below ``scope`` in the subtype lattice."""
    return scope in KIND_ANCESTORS[kind]


def can_surveil_or_compel(kind: EntityKind) -> bool:
    return kind_is(kind, "Actor")


@dataclass
class EntityRecord:
    id: str
    kind: EntityKind
    owner: Optional[str] = None
    embodies: Optional[str] = None


@dataclass
class AspectRecord:
    """A displayed mask.

    Deliberately carries no reference to the displaying entity; that
    binding lives only in the linkage registry.
    """

    id: str
    label: str = ""
    attributes: dict[str, str] = field(default_factory=dict)

    def serialize(self) -> str:
        return json.dumps(
            {"id": self.id, "label": self.label, "attributes": self.attributes},
            sort_keys=True,
        )


@dataclass
class Warrant:
    id: str
    issuer: str
    grantee: str
    scope: str
    context: Optional[str] = None
    expiry: Optional[int] = None  # event sequence number, valid through it

    def covers(self, scope: str, grantee: str, seq: int, context: Optional[str] = None) -> bool:
        if self.scope != scope or self.grantee != grantee:
            return False
        if self.expiry is not None and seq > self.expiry:
            return False
        if self.context is not None and self.context != context:
            return False
        return True


@dataclass
class RoleInstance:
    id: str
    role_type: str
    context: str
    enactor: Optional[str] = None  # aspect id
    retired: bool = False  # unlinkable anons are spent after one permitted act


@dataclass
class ContextInstance:
    id: str
    template: str
    embodied_by: str
    roles: list[str] = field(default_factory=list)
    params: dict[str, str] = field(default_factory=dict)


@dataclass
class Token:
    """Single-use opaque token minted by invite(); kind is "invite" for
    seclusion invitations and "consent" for disclosure consent."""

    id: str
    kind: str
    context: str
    issuer: str  # role id of the minting Intimate / Truster
    holder: str  # aspect the token is bound to
    consumed: bool = False


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.kind}({self.subject})"
        return f"{text}: {self.detail}" if self.detail else text


@dataclass
class AuditEntry:
    seq: int
    aspect: str
    requester: str
    warrant: Optional[str]
    outcome: str  # "granted" | "denied"


class LinkageRegistry:
    """Sealed aspect -> entity map plus the audit log of resolution attempts.

    Forward queries (entity -> aspects) are answered only for the entity
    itself or its owner; reverse queries require a warrant and are gated in
    :func:`resolve_entity`.  Code inside this package may use the internal
    accessors, which is the trusted path the one-way pattern allows.
    """

    def __init__(self) -> None:
        self._links: dict[str, str] = {}
        self.audit: list[AuditEntry] = []

    def register(self, aspect_id: str, entity_id: str) -> None:
        self._links[aspect_id] = entity_id

    def drop(self, aspect_id: str) -> None:
        self._links.pop(aspect_id, None)

    def has(self, aspect_id: str) -> bool:
        return aspect_id in self._links

    def entity_of(self, aspect_id: str) -> str:
        """Trusted internal lookup; public callers go via resolve_entity."""
        return self._links[aspect_id]

    def aspects_displayed_by(self, entity_id: str) -> list[str]:
        return sorted(a for a, e in self._links.items() if e == entity_id)

    def entries(self) -> Iterator[tuple[str, str]]:
        return iter(sorted(self._links.items()))

    def record(self, entry: AuditEntry) -> None:
        self.audit.append(entry)

    def clone(self) -> "LinkageRegistry":
        other = LinkageRegistry()
        other._links = dict(self._links)
        other.audit = [copy.copy(a) for a in self.audit]
        return other


@dataclass
class World:
    """Everything the engine knows about one declared world."""

    strict_ownership: bool = False
    entities: dict[str, EntityRecord] = field(default_factory=dict)
    aspects: dict[str, AspectRecord] = field(default_factory=dict)
    contexts: dict[str, ContextInstance] = field(default_factory=dict)
    roles: dict[str, RoleInstance] = field(default_factory=dict)
    warrants: dict[str, Warrant] = field(default_factory=dict)
    rules: dict[str, "DeonticRule"] = field(default_factory=dict)
    tokens: dict[str, Token] = field(default_factory=dict)
    # anon role id -> (public-figure role id, proof token); sealed like linkage
    aliases: dict[str, tuple[str, str]] = field(default_factory=dict)
    linkage: LinkageRegistry = field(default_factory=LinkageRegistry)
    # role id -> event seqs of recorded reserve breaches / sanctions
    breach_marks: dict[str, list[int]] = field(default_factory=dict)
    sanction_marks: dict[str, list[int]] = field(default_factory=dict)
    appeals: list[tuple[int, str, str]] = field(default_factory=list)
    offense_terms: frozenset[str] = frozenset()
    event_counter: int = 0
    counters: dict[str, int] = field(default_factory=dict)
    # statement spans recorded by the parser, (namespace, id) -> SourceSpan
    source_spans: dict = field(default_factory=dict)

    def clone(self) -> "World":
        return copy.deepcopy(self)

    def fresh_id(self, prefix: str, namespace: dict) -> str:
        """Deterministic generated identifier, unique in its namespace."""
        n = self.counters.get(prefix, 0)
        while True:
            n += 1
            candidate = f"{prefix}{n}"
            if candidate not in namespace:
                self.counters[prefix] = n
                return candidate

    def fresh_aspect_id(self) -> str:
        """Generated aspect id that embeds no entity id as a substring."""
        for prefix in ("ax", "mask", "veil", "pz", "qv"):
            n = self.counters.get(prefix, 0)
            for _ in range(64):
                n += 1
                candidate = f"{prefix}{n}"
                if candidate in self.aspects:
                    continue
                if any(eid in candidate for eid in self.entities):
                    continue
                self.counters[prefix] = n
                return candidate
        # pathological id shapes in the entity table; fall back to uniqueness
        return self.fresh_id("ax", self.aspects)

    def core_state(self) -> dict:
        """Canonical picture of identity state for snapshot comparisons.

        Covers entities, aspects, linkage, contexts, roles, aliases and
        tokens; excludes the audit log, breach/sanction bookkeeping and
        counters, which a denied step is allowed to touch.
        """
        return {
            "entities": {
                e.id: (e.kind.value, e.owner, e.embodies) for e in self.entities.values()
            },
            "aspects": {a.id: (a.label, dict(a.attributes)) for a in self.aspects.values()},
            "linkage": dict(self.linkage.entries()),
            "contexts": {
                c.id: (c.template, c.embodied_by, sorted(c.roles), dict(c.params))
                for c in self.contexts.values()
            },
            "roles": {
                r.id: (r.role_type, r.context, r.enactor, r.retired)
                for r in self.roles.values()
            },
            "aliases": dict(self.aliases),
            "tokens": {
                t.id: (t.kind, t.context, t.issuer, t.holder, t.consumed)
                for t in self.tokens.values()
            },
        }


# ---------------------------------------------------------------------------
# Operations


def _owner_kinds(world: World) -> frozenset[EntityKind]:
    if world.strict_ownership:
        return LEGAL_OWNER_KINDS
    return LEGAL_OWNER_KINDS | {EntityKind.NATURAL_PERSON}


def create_entity(
    world: World,
    kind: EntityKind,
    owner: Optional[str] = None,
    entity_id: Optional[str] = None,
) -> str:
    """Register a new entity; returns its id.

    Ownerless entities are legal (theology-neutral roots).  A natural
    person may only be owned by itself; other entities need an owner whose
    kind is allowed to own.
    """
    kind = EntityKind(kind)
    if entity_id is None:
        entity_id = world.fresh_id("e", world.entities)
    if not entity_id:
        raise DuplicateId("entity id must be non-empty")
    if entity_id in world.entities:
        raise DuplicateId(f"entity {entity_id!r} already exists")

    if owner is not None:
        if kind is EntityKind.NATURAL_PERSON and owner != entity_id:
            raise AntiSlaveryViolation(
                f"natural person {entity_id!r} cannot be owned by {owner!r}"
            )
        if owner == entity_id:
            if kind not in (_owner_kinds(world) | {EntityKind.NATURAL_PERSON}):
                raise OwnershipNotPermitted(f"kind {kind.value} cannot own itself")
        else:
            record = world.entities.get(owner)
            if record is None:
                raise UnknownOwner(f"owner {owner!r} does not exist")
            if record.kind not in _owner_kinds(world):
                raise OwnershipNotPermitted(
                    f"kind {record.kind.value} may not own entities"
                )
    world.entities[entity_id] = EntityRecord(id=entity_id, kind=kind, owner=owner)
    return entity_id


def assign_owner(world: World, owner: str, owned: str) -> None:
    """Set the owner of an existing entity, enforcing the same rules as
    create_entity."""
    record = world.entities.get(owned)
    if record is None:
        raise UnknownEntity(f"entity {owned!r} does not exist")
    if record.kind is EntityKind.NATURAL_PERSON and owner != owned:
        raise AntiSlaveryViolation(
            f"natural person {owned!r} cannot be owned by {owner!r}"
        )
    if owner == owned:
        if record.kind not in (_owner_kinds(world) | {EntityKind.NATURAL_PERSON}):
            raise OwnershipNotPermitted(f"kind {record.kind.value} cannot own itself")
    else:
        owner_rec = world.entities.get(owner)
        if owner_rec is None:
            raise UnknownOwner(f"owner {owner!r} does not exist")
        if owner_rec.kind not in _owner_kinds(world):
            raise OwnershipNotPermitted(f"kind {owner_rec.kind.value} may not own entities")
    record.owner = owner


def display_aspect(
    world: World,
    entity: str,
    label: str = "",
    aspect_id: Optional[str] = None,
) -> str:
    """Create an aspect displayed by ``entity`` and register the linkage.

    The aspect record stores no back-reference; an explicit id must not
    embed the displaying entity's id.
    """
    if entity not in world.entities:
        raise UnknownEntity(f"entity {entity!r} does not exist")
    if aspect_id is None:
        aspect_id = world.fresh_aspect_id()
    else:
        if not aspect_id:
            raise DuplicateId("aspect id must be non-empty")
        if aspect_id in world.aspects:
            raise DuplicateId(f"aspect {aspect_id!r} already exists")
        if entity in aspect_id:
            raise AspectIdLeak(
                f"aspect id {aspect_id!r} embeds its entity id {entity!r}"
            )
    world.aspects[aspect_id] = AspectRecord(id=aspect_id, label=label)
    world.linkage.register(aspect_id, entity)
    return aspect_id


def resolve_entity(
    world: World,
    aspect: str,
    requester: str,
    warrant: Optional[str] = None,
    context: Optional[str] = None,
) -> str:
    """Reverse query of the one-way linkage; requires a resolve warrant.

    Every attempt, successful or not, appends exactly one audit record.
    """
    seq = world.event_counter
    w = world.warrants.get(warrant) if warrant is not None else None
    if aspect not in world.aspects or not world.linkage.has(aspect):
        world.linkage.record(AuditEntry(seq, aspect, requester, warrant, "denied"))
        raise UnknownAspect(f"aspect {aspect!r} does not exist")
    if warrant is not None and w is None:
        world.linkage.record(AuditEntry(seq, aspect, requester, warrant, "denied"))
        raise LinkageDenied(f"warrant {warrant!r} does not exist")
    if w is None or not w.covers("resolve", requester, seq, context):
        world.linkage.record(AuditEntry(seq, aspect, requester, warrant, "denied"))
        raise LinkageDenied(f"no valid resolve warrant for {requester!r}")
    world.linkage.record(AuditEntry(seq, aspect, requester, warrant, "granted"))
    return world.linkage.entity_of(aspect)


def aspects_of(world: World, entity: str, requester: str) -> list[str]:
    """Forward query: an entity's aspects, visible to itself or its owner."""
    record = world.entities.get(entity)
    if record is None:
        raise UnknownEntity(f"entity {entity!r} does not exist")
    if requester != entity and record.owner != requester:
        raise LinkageDenied(f"{requester!r} may not enumerate aspects of {entity!r}")
    return world.linkage.aspects_displayed_by(entity)


def grant_warrant(
    world: World,
    issuer: str,
    grantee: str,
    scope: str,
    context: Optional[str] = None,
    expiry: Optional[int] = None,
    warrant_id: Optional[str] = None,
) -> str:
    issuer_rec = world.entities.get(issuer)
    if issuer_rec is None:
        raise UnknownEntity(f"entity {issuer!r} does not exist")
    if issuer_rec.kind is not EntityKind.JUDICIAL_AUTHORITY:
        raise NotAJudicialAuthority(f"{issuer!r} is a {issuer_rec.kind.value}")
    if grantee not in world.entities:
        raise UnknownEntity(f"entity {grantee!r} does not exist")
    if scope not in WARRANT_SCOPES:
        raise InvalidWarrantScope(f"scope must be one of {WARRANT_SCOPES}, got {scope!r}")
    if context is not None and context not in world.contexts:
        raise UnknownContext(f"context {context!r} does not exist")
    if warrant_id is None:
        warrant_id = world.fresh_id("w", world.warrants)
    elif warrant_id in world.warrants:
        raise DuplicateId(f"warrant {warrant_id!r} already exists")
    world.warrants[warrant_id] = Warrant(
        id=warrant_id, issuer=issuer, grantee=grantee, scope=scope,
        context=context, expiry=expiry,
    )
    return warrant_id


def embody_context(world: World, entity: str, context: str) -> None:
    """Record the bidirectional embodiment between an entity and a context."""
    record = world.entities.get(entity)
    if record is None:
        raise UnknownEntity(f"entity {entity!r} does not exist")
    ctx = world.contexts.get(context)
    if ctx is None:
        raise UnknownContext(f"context {context!r} does not exist")
    if ctx.embodied_by and ctx.embodied_by in world.entities:
        raise AlreadyEmbodied(f"context {context!r} is embodied by {ctx.embodied_by!r}")
    if record.embodies is not None:
        raise AlreadyEmbodied(f"entity {entity!r} already embodies {record.embodies!r}")
    ctx.embodied_by = entity
    record.embodies = context


def owner_chain(world: World, entity: str) -> list[str]:
    """Entities reachable by following owner links upward from ``entity``,
    inclusive.  Cycle-safe."""
    chain: list[str] = []
    seen: set[str] = set()
    current: Optional[str] = entity
    while current is not None and current in world.entities and current not in seen:
        chain.append(current)
        seen.add(current)
        current = world.entities[current].owner
    return chain


def gc_roles(world: World) -> list[str]:
    """Remove every role whose context no longer exists; returns their ids.

    Idempotent: a second pass collects nothing.
    """
    collected = sorted(
        rid for rid, role in world.roles.items() if role.context not in world.contexts
    )
    for rid in collected:
        world.roles.pop(rid, None)
        world.aliases.pop(rid, None)
    return collected


# ---------------------------------------------------------------------------
# Structural validation


def validate_structure(world: World) -> list[Violation]:
    """Every violated structural invariant of the identity metamodel.

    Total: never raises.  Rule-graph and template conformance checks live
    in their own modules; ``engine.full_validation`` composes all three.
    """
    out: list[Violation] = []
    links = dict(world.linkage.entries())

    for aspect_id in world.aspects:
        if aspect_id not in links:
            out.append(Violation("OrphanAspect", aspect_id, "no linkage entry"))
    for aspect_id, entity_id in links.items():
        if aspect_id not in world.aspects:
            out.append(Violation("DanglingLinkage", aspect_id, "aspect record missing"))
        elif entity_id not in world.entities:
            out.append(
                Violation("DanglingLinkage", aspect_id, f"entity {entity_id!r} missing")
            )
        elif entity_id in aspect_id:
            out.append(
                Violation("AspectIdLeak", aspect_id, f"embeds entity id {entity_id!r}")
            )

    owner_kinds = _owner_kinds(world)
    for entity in world.entities.values():
        if entity.owner is None:
            continue
        if entity.kind is EntityKind.NATURAL_PERSON and entity.owner != entity.id:
            out.append(
                Violation("AntiSlaveryViolation", entity.id, f"owned by {entity.owner!r}")
            )
            continue
        if entity.owner == entity.id:
            continue
        owner_rec = world.entities.get(entity.owner)
        if owner_rec is None:
            out.append(Violation("UnknownOwner", entity.id, f"owner {entity.owner!r} missing"))
        elif owner_rec.kind not in owner_kinds:
            out.append(
                Violation(
                    "OwnershipKindViolation",
                    entity.id,
                    f"owner {entity.owner!r} is a {owner_rec.kind.value}",
                )
            )

    for role in world.roles.values():
        if role.context not in world.contexts:
            out.append(Violation("OrphanRole", role.id, f"context {role.context!r} gone"))
        if role.enactor is not None and role.enactor not in world.aspects:
            out.append(
                Violation("UnknownEnactor", role.id, f"aspect {role.enactor!r} missing")
            )

    for ctx in world.contexts.values():
        if not ctx.embodied_by or ctx.embodied_by not in world.entities:
            out.append(Violation("MissingEmbodiment", ctx.id, "no embodying entity"))
        for rid in ctx.roles:
            role = world.roles.get(rid)
            if role is None:
                out.append(Violation("DanglingRoleRef", ctx.id, f"role {rid!r} missing"))
            elif role.context != ctx.id:
                out.append(
                    Violation(
                        "RoleContextMismatch", rid, f"member of {ctx.id!r} but references {role.context!r}"
                    )
                )

    for entity in world.entities.values():
        if entity.embodies is None:
            continue
        ctx = world.contexts.get(entity.embodies)
        if ctx is None or ctx.embodied_by != entity.id:
            out.append(
                Violation("EmbodimentMismatch", entity.id, f"embodies {entity.embodies!r}")
            )

    for warrant in world.warrants.values():
        issuer = world.entities.get(warrant.issuer)
        if issuer is None or issuer.kind is not EntityKind.JUDICIAL_AUTHORITY:
            out.append(Violation("BadWarrantIssuer", warrant.id, f"issuer {warrant.issuer!r}"))
        if warrant.grantee not in world.entities:
            out.append(
                Violation("UnknownWarrantParty", warrant.id, f"grantee {warrant.grantee!r}")
            )

    return sorted(out, key=lambda v: (v.kind, v.subject, v.detail))
