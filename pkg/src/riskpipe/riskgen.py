"""Risk model generation: per-skill fault trees wired into an absorbing DTMC.

Every working (non-Idle) segment of a behavioral profile becomes a transient
chain state with two exits: its own absorbing failure state, weighted by the
top-event probability of the segment's fault tree, and the next transient
state (or the single "done" state) with the complementary weight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import CapacityError, FormatError, ModelError, NumericError, TransformError, ValidationError
from .labels import SkillLabel

EXCHANGE_SCHEMA = "openpra-like/1"
ROW_SUM_TOL = 1e-9


# ---------------------------------------------------------------------------
# risk data


@dataclass(frozen=True)
class RiskEntry:
    lambda_per_hour: float
    c_v: float = 0.0
    v_ref: float = 1.0
    redundancy_group: str | None = None
    group_size: int | None = None

    def to_dict(self):
        d = {"lambda_per_hour": self.lambda_per_hour, "c_v": self.c_v, "v_ref": self.v_ref}
        if self.redundancy_group is not None:
            d["redundancy_group"] = self.redundancy_group
        if self.group_size is not None:
            d["group_size"] = self.group_size
        return d


def _entry_from_dict(cid, d):
    if not isinstance(d, dict):
        raise ValidationError(f"risk data for {cid} must be an object")
    extra = set(d) - set(RiskEntry.__dataclass_fields__)
    if extra:
        raise ValidationError(f"risk data for {cid}: unknown fields {sorted(extra)}")
    if "lambda_per_hour" not in d:
        raise ValidationError(f"risk data for {cid}: lambda_per_hour is required")
    for key in ("lambda_per_hour", "c_v", "v_ref"):
        v = d.get(key, 0.0 if key != "v_ref" else 1.0)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            raise ValidationError(f"risk data for {cid}: {key} must be a finite number >= 0")
    if d.get("v_ref", 1.0) <= 0:
        raise ValidationError(f"risk data for {cid}: v_ref must be > 0")
    group = d.get("redundancy_group")
    if group is not None and not isinstance(group, str):
        raise ValidationError(f"risk data for {cid}: redundancy_group must be a string")
    size = d.get("group_size")
    if size is not None and (isinstance(size, bool) or not isinstance(size, int) or size < 2):
        raise ValidationError(f"risk data for {cid}: group_size must be an integer >= 2")
    return RiskEntry(
        float(d["lambda_per_hour"]), float(d.get("c_v", 0.0)), float(d.get("v_ref", 1.0)), group, size
    )


def load_risk_data(source):
    """Parse ``{"components": {id: {...}}}`` into ``{id: RiskEntry}``."""
    if isinstance(source, (bytes, bytearray, str)):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"risk data is not JSON: {exc.msg}") from None
    if not isinstance(source, dict) or set(source) != {"components"} or not isinstance(source["components"], dict):
        raise ValidationError('risk data must be {"components": {...}}')
    data = {cid: _entry_from_dict(cid, d) for cid, d in source["components"].items()}
    sizes = {}
    for cid, e in data.items():
        if e.redundancy_group is None:
            continue
        if e.group_size is not None and sizes.setdefault(e.redundancy_group, e.group_size) != e.group_size:
            raise ValidationError(f"redundancy group {e.redundancy_group!r} has inconsistent group_size")
    return data


def dumps_risk_data(data):
    doc = {"components": {cid: e.to_dict() for cid, e in data.items()}}
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def event_probability(usage, entry):
    """Failure probability of one component over one skill execution.

    Exponential law with the constant rate scaled linearly by velocity stress:
    ``1 - exp(-lambda * (1 + c_v * v_mean / v_ref) * t_active_hours)``.
    """
    rate = entry.lambda_per_hour * (1.0 + entry.c_v * usage.mean_velocity / entry.v_ref)
    return -math.expm1(-rate * usage.active_time / 3600.0)


# ---------------------------------------------------------------------------
# fault trees


class GateKind(str, Enum):
    AND = "and"
    OR = "or"
    ATLEAST = "atleast"


@dataclass(frozen=True)
class Gate:
    id: str
    kind: GateKind
    children: tuple[str, ...]
    k: int | None = None


@dataclass(frozen=True)
class BasicEvent:
    id: str
    probability: float
    component_id: str | None = None


@dataclass(frozen=True)
class FaultTree:
    id: str
    top: str
    gates: tuple[Gate, ...]
    events: tuple[BasicEvent, ...]
    skill: SkillLabel | None = None

    @property
    def gate_map(self):
        return {g.id: g for g in self.gates}

    @property
    def event_map(self):
        return {e.id: e for e in self.events}


def check_tree(tree):
    """Structural checks shared by the solver and the parser; raises ModelError."""
    gates, events = tree.gate_map, tree.event_map
    if len(gates) != len(tree.gates) or len(events) != len(tree.events) or set(gates) & set(events):
        raise ModelError(f"tree {tree.id}: node ids must be unique")
    if tree.top not in gates and tree.top not in events:
        raise ModelError(f"tree {tree.id}: dangling top reference {tree.top!r}")
    for e in tree.events:
        if not 0.0 <= e.probability <= 1.0:
            raise ModelError(f"tree {tree.id}: event {e.id} probability {e.probability} outside [0, 1]")
    for g in tree.gates:
        if not g.children:
            raise ModelError(f"tree {tree.id}: gate {g.id} has no children")
        for c in g.children:
            if c not in gates and c not in events:
                raise ModelError(f"tree {tree.id}: gate {g.id} has dangling child {c!r}")
        if g.kind is GateKind.ATLEAST:
            if g.k is None or not 1 <= g.k <= len(g.children):
                raise ModelError(f"tree {tree.id}: gate {g.id} needs 1 <= k <= {len(g.children)}")
        elif g.k is not None:
            raise ModelError(f"tree {tree.id}: only atleast gates take k")
    # three-colour DFS from every gate
    state = {}
    for root in gates:
        if root in state:
            continue
        stack = [(root, iter(gates[root].children))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            for c in it:
                if c not in gates:
                    continue
                if state.get(c) == 1:
                    raise ModelError(f"tree {tree.id}: cycle through gate {c!r}")
                if c not in state:
                    state[c] = 1
                    stack.append((c, iter(gates[c].children)))
                    break
            else:
                state[node] = 2
                stack.pop()


def segment_tree_id(index, skill):
    return f"seg{index}_{str(skill).lower()}"


def build_fault_tree(segment, risk_data, tree_id=None):
    """Fault tree for one profile segment, or None for Idle.

    Top event is an OR over the segment's active components; members of a
    redundancy group with two or more active units are first joined by AND.
    """
    if segment.skill is SkillLabel.IDLE:
        return None
    tree_id = tree_id or str(segment.skill).lower()
    if not segment.usages:
        raise TransformError(f"{segment.skill} segment at t={segment.t_start:g}s has no active components")
    events, members = [], {}
    for usage in segment.usages:
        entry = risk_data.get(usage.component_id)
        if entry is None:
            raise TransformError(f"no risk data for component {usage.component_id!r} (skill {segment.skill})")
        events.append(BasicEvent(usage.component_id, event_probability(usage, entry), usage.component_id))
        if entry.redundancy_group is not None:
            members.setdefault(entry.redundancy_group, []).append(usage.component_id)

    gates, top_children, placed = [], [], set()
    for usage in segment.usages:
        group = risk_data[usage.component_id].redundancy_group
        if group is None or len(members[group]) < 2:
            top_children.append(usage.component_id)
        elif group not in placed:
            placed.add(group)
            gid = f"gate:redundant:{group}"
            gates.append(Gate(gid, GateKind.AND, tuple(members[group])))
            top_children.append(gid)
    gates.insert(0, Gate("gate:top", GateKind.OR, tuple(top_children)))
    tree = FaultTree(tree_id, "gate:top", tuple(gates), tuple(events), segment.skill)
    try:
        check_tree(tree)
    except ModelError as exc:
        raise TransformError(str(exc)) from None
    return tree


# ---------------------------------------------------------------------------
# hybrid model


class StateKind(str, Enum):
    TRANSIENT = "transient"
    FAIL = "fail"
    DONE = "done"


@dataclass(frozen=True)
class State:
    id: str
    kind: StateKind
    skill: SkillLabel | None = None
    t_start: float | None = None
    t_end: float | None = None
    tree: str | None = None  # fault tree attributed to this transient state, for reporting


@dataclass(frozen=True)
class Transition:
    """Exactly one of ``p`` (numeric), ``tree`` (top-event probability) or
    ``complement`` (one minus a tree's top-event probability) is set."""

    source: str
    target: str
    p: float | None = None
    tree: str | None = None
    complement: str | None = None

    def __post_init__(self):
        if sum(x is not None for x in (self.p, self.tree, self.complement)) != 1:
            raise ValidationError(f"transition {self.source}->{self.target} needs exactly one of p, tree, complement")


@dataclass(frozen=True)
class HybridRiskModel:
    states: tuple[State, ...]
    transitions: tuple[Transition, ...]
    fault_trees: dict = field(default_factory=dict)
    initial: str = "done"

    def state(self, sid):
        for s in self.states:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def outgoing(self, sid):
        return [t for t in self.transitions if t.source == sid]

    @property
    def is_resolved(self):
        return all(t.p is not None for t in self.transitions)


def build_chain(profile, fault_trees):
    """Line-shaped chain over the working segments of ``profile``; Idle segments are skipped."""
    if not profile.segments:
        raise TransformError("profile has no segments")
    working = profile.working_segments
    states, transitions = [], []
    done = State("done", StateKind.DONE)
    run_ids = [f"run:{segment_tree_id(i, s.skill)}" for i, s in working]
    for n, (i, seg) in enumerate(working):
        tid = segment_tree_id(i, seg.skill)
        if tid not in fault_trees:
            raise TransformError(f"no fault tree for {seg.skill} segment {tid}")
        run, fail = run_ids[n], f"fail:{tid}"
        nxt = run_ids[n + 1] if n + 1 < len(working) else done.id
        states.append(State(run, StateKind.TRANSIENT, seg.skill, seg.t_start, seg.t_end, tid))
        states.append(State(fail, StateKind.FAIL, seg.skill))
        transitions.append(Transition(run, fail, tree=tid))
        transitions.append(Transition(run, nxt, complement=tid))
    states.append(done)
    used = {segment_tree_id(i, s.skill) for i, s in working}
    trees = {tid: fault_trees[tid] for tid in sorted(used)}
    return HybridRiskModel(tuple(states), tuple(transitions), trees, run_ids[0] if run_ids else done.id)


def build_fault_trees(profile, risk_data):
    trees = {}
    for i, seg in profile.working_segments:
        tid = segment_tree_id(i, seg.skill)
        trees[tid] = build_fault_tree(seg, risk_data, tid)
    return trees


def transform(profile, risk_data):
    """Behavioral profile + risk data -> hybrid risk model."""
    return build_chain(profile, build_fault_trees(profile, risk_data))


def validate_model(model):
    """Check every model invariant, resolving trees for the row-sum check. Raises ModelError."""
    from .solver import solve_fault_tree

    ids = [s.id for s in model.states]
    if len(set(ids)) != len(ids):
        raise ModelError("state ids must be unique")
    kinds = {s.id: s.kind for s in model.states}
    if sum(k is StateKind.DONE for k in kinds.values()) != 1:
        raise ModelError("model needs exactly one done state")
    if model.initial not in kinds:
        raise ModelError(f"dangling initial state {model.initial!r}")
    for tid, tree in model.fault_trees.items():
        if tree.id != tid:
            raise ModelError(f"fault tree keyed {tid!r} carries id {tree.id!r}")
        check_tree(tree)
    for s in model.states:
        if s.tree is not None and s.tree not in model.fault_trees:
            raise ModelError(f"state {s.id}: dangling tree reference {s.tree!r}")
    q = {}
    rows = {sid: 0.0 for sid, k in kinds.items() if k is StateKind.TRANSIENT}
    for t in model.transitions:
        for end in (t.source, t.target):
            if end not in kinds:
                raise ModelError(f"transition {t.source}->{t.target}: dangling state reference {end!r}")
        if kinds[t.source] is not StateKind.TRANSIENT:
            raise ModelError(f"absorbing state {t.source} has an outgoing transition")
        ref = t.tree or t.complement
        if ref is not None:
            if ref not in model.fault_trees:
                raise ModelError(f"transition {t.source}->{t.target}: dangling tree reference {ref!r}")
            if ref not in q:
                q[ref] = solve_fault_tree(model.fault_trees[ref])
            p = q[ref] if t.tree else 1.0 - q[ref]
        else:
            p = t.p
            if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
                raise ModelError(f"transition {t.source}->{t.target}: probability {p!r} outside [0, 1]")
        rows[t.source] += p
    for sid, total in rows.items():
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise ModelError(f"outgoing probabilities of {sid} sum to {total!r}, not 1")
    return q


# ---------------------------------------------------------------------------
# exchange document


def _tree_to_dict(tree):
    d = {
        "top": tree.top,
        "gates": [
            {"id": g.id, "kind": g.kind.value, "children": list(g.children), **({"k": g.k} if g.k is not None else {})}
            for g in tree.gates
        ],
        "events": [
            {"id": e.id, "p": e.probability, **({"component": e.component_id} if e.component_id is not None else {})}
            for e in tree.events
        ],
    }
    if tree.skill is not None:
        d["skill"] = str(tree.skill)
    return d


def model_to_dict(model):
    states = []
    for s in model.states:
        d = {"id": s.id, "kind": s.kind.value}
        for key in ("t_start", "t_end", "tree"):
            if getattr(s, key) is not None:
                d[key] = getattr(s, key)
        if s.skill is not None:
            d["skill"] = str(s.skill)
        states.append(d)
    transitions = []
    for t in model.transitions:
        d = {"from": t.source, "to": t.target}
        if t.p is not None:
            d["p"] = t.p
        elif t.tree is not None:
            d["tree"] = t.tree
        else:
            d["complement"] = t.complement
        transitions.append(d)
    return {
        "schema": EXCHANGE_SCHEMA,
        "initial": model.initial,
        "states": states,
        "transitions": transitions,
        "fault_trees": {tid: _tree_to_dict(tree) for tid, tree in model.fault_trees.items()},
    }


def serialize_model(model):
    return (json.dumps(model_to_dict(model), indent=1) + "\n").encode("utf-8")


def _keys(obj, required, optional=(), where=""):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    missing = set(required) - set(obj)
    extra = set(obj) - set(required) - set(optional)
    if missing:
        raise FormatError(f"{where}: missing fields {sorted(missing)}")
    if extra:
        raise FormatError(f"{where}: unknown fields {sorted(extra)}")


def _str(v, where):
    if not isinstance(v, str):
        raise FormatError(f"{where}: expected a string, got {v!r}")
    return v


def _prob(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
        raise FormatError(f"{where}: probability {v!r} outside [0, 1]")
    return float(v)


def _skill(d, where):
    return SkillLabel.parse(_str(d["skill"], where)) if "skill" in d else None


def _tree_from_dict(tid, d):
    where = f"fault_trees.{tid}"
    _keys(d, ("top", "gates", "events"), ("skill",), where)
    gates = []
    for g in d["gates"]:
        _keys(g, ("id", "kind", "children"), ("k",), f"{where}.gates")
        try:
            kind = GateKind(g["kind"])
        except ValueError:
            raise FormatError(f"{where}: unknown gate kind {g['kind']!r}") from None
        if not isinstance(g["children"], list):
            raise FormatError(f"{where}: gate children must be a list")
        k = g.get("k")
        if k is not None and (isinstance(k, bool) or not isinstance(k, int)):
            raise FormatError(f"{where}: gate k must be an integer")
        gates.append(Gate(_str(g["id"], where), kind, tuple(_str(c, where) for c in g["children"]), k))
    events = []
    for e in d["events"]:
        _keys(e, ("id", "p"), ("component",), f"{where}.events")
        comp = _str(e["component"], where) if "component" in e else None
        events.append(BasicEvent(_str(e["id"], where), _prob(e["p"], f"{where}.{e['id']}"), comp))
    return FaultTree(tid, _str(d["top"], where), tuple(gates), tuple(events), _skill(d, where))


def parse_model(document):
    """Exchange document (bytes, str or dict) -> validated HybridRiskModel."""
    if isinstance(document, (bytes, bytearray, str)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise FormatError(f"exchange document is not JSON: {exc.msg}") from None
    if not isinstance(document, dict):
        raise FormatError("exchange document must be a JSON object")
    if document.get("schema") != EXCHANGE_SCHEMA:
        raise FormatError(f"unknown schema version {document.get('schema')!r}")
    _keys(document, ("schema", "initial", "states", "transitions", "fault_trees"), (), "document")
    states = []
    for s in document["states"]:
        _keys(s, ("id", "kind"), ("skill", "t_start", "t_end", "tree"), "states")
        try:
            kind = StateKind(s["kind"])
        except ValueError:
            raise FormatError(f"state {s['id']!r}: unknown kind {s['kind']!r}") from None
        times = []
        for key in ("t_start", "t_end"):
            v = s.get(key)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise FormatError(f"state {s['id']!r}: {key} must be a number")
            times.append(v)
        tree = _str(s["tree"], "states") if "tree" in s else None
        states.append(State(_str(s["id"], "states"), kind, _skill(s, "states"), *times, tree))
    transitions = []
    for t in document["transitions"]:
        _keys(t, ("from", "to"), ("p", "tree", "complement"), "transitions")
        where = f"transition {t['from']}->{t['to']}"
        kw = {}
        if "p" in t:
            kw["p"] = _prob(t["p"], where)
        if "tree" in t:
            kw["tree"] = _str(t["tree"], where)
        if "complement" in t:
            kw["complement"] = _str(t["complement"], where)
        try:
            transitions.append(Transition(_str(t["from"], where), _str(t["to"], where), **kw))
        except ValidationError as exc:
            raise FormatError(str(exc)) from None
    if not isinstance(document["fault_trees"], dict):
        raise FormatError("fault_trees must be an object")
    trees = {tid: _tree_from_dict(tid, d) for tid, d in document["fault_trees"].items()}
    model = HybridRiskModel(tuple(states), tuple(transitions), trees, _str(document["initial"], "initial"))
    try:
        validate_model(model)
    except (CapacityError, NumericError):
        raise  # a well-formed document the solver cannot handle
    except ModelError as exc:
        raise FormatError(str(exc)) from None
    return model
