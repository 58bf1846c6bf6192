"""Quantification of hybrid risk models.

Fault trees are solved exactly. Events reachable from the top along a single
path are folded bottom-up; events reachable along several paths (directly
shared, or under a shared gate) are conditioned on, Shannon style. The
conditioning is evaluated for all 2^s assignments at once as numpy vectors,
in chunks, then weighted by the assignment probabilities.

The chain is solved through the fundamental-matrix systems
``(I - Q) B = R`` and ``(I - Q) t = 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import CapacityError, ModelError, NumericError
from .riskgen import GateKind, StateKind, check_tree, validate_model

MAX_SHARED = 20
PIVOT_TOL = 1e-12
ROW_SUM_TOL = 1e-9
REPORT_VERSION = 1
_CHUNK_BITS = 14


def _topo(tree):
    """Nodes reachable from the top, parents before children."""
    gates = tree.gate_map
    seen, post = set(), []
    stack = [(tree.top, False)]
    while stack:
        node, done = stack.pop()
        if done:
            post.append(node)
            continue
        if node in seen:
            continue
        seen.add(node)
        stack.append((node, True))
        if node in gates:
            stack.extend((c, False) for c in reversed(gates[node].children) if c not in seen)
    return post[::-1]


def shared_events(tree):
    """Events reachable from the top by two or more paths, in conditioning order.

    Order: descending path count, ties by id.
    """
    gates, events = tree.gate_map, tree.event_map
    paths = dict.fromkeys(_topo(tree), 0)
    paths[tree.top] = 1
    for node in paths:
        if node in gates:
            for c in gates[node].children:
                paths[c] += paths[node]
    multi = [n for n, k in paths.items() if n in events and k >= 2]
    return sorted(multi, key=lambda n: (-paths[n], n))


def _or(vals):
    if len(vals) == 1:
        return vals[0]
    with np.errstate(divide="ignore"):
        return -np.expm1(sum(np.log1p(-v) for v in vals))


def _and(vals):
    out = vals[0]
    for v in vals[1:]:
        out = out * v
    return out


def _atleast(vals, k):
    dist = [1.0]
    for v in vals:
        nxt = [d * (1.0 - v) for d in dist] + [0.0]
        for j, d in enumerate(dist):
            nxt[j + 1] = nxt[j + 1] + d * v
        dist = nxt
    # the tail can round a hair above 1, which the log1p form of OR cannot take
    return np.minimum(sum(dist[k:]), 1.0)


def solve_fault_tree(tree, max_shared=MAX_SHARED, order=None):
    """Exact top-event probability assuming independent basic events.

    ``order`` overrides the conditioning order; it must be a permutation of
    ``shared_events(tree)``. The result does not depend on it beyond round-off.
    """
    check_tree(tree)
    gates, events = tree.gate_map, tree.event_map
    shared = shared_events(tree)
    if order is not None:
        if sorted(order) != sorted(shared):
            raise ModelError(f"tree {tree.id}: conditioning order must permute {shared}")
        shared = list(order)
    order = _topo(tree)[::-1]  # children first
    if len(shared) > max_shared:
        raise CapacityError(f"tree {tree.id}: {len(shared)} shared events exceed the limit of {max_shared}")
    s = len(shared)
    bits = min(s, _CHUNK_BITS)
    total = 0.0
    for hi in range(1 << (s - bits)):
        idx = (hi << bits) + np.arange(1 << bits)
        weight = np.ones(len(idx))
        values = {}
        for b, eid in enumerate(shared):
            bit = ((idx >> b) & 1).astype(np.float64)
            p = events[eid].probability
            weight *= bit * p + (1.0 - bit) * (1.0 - p)
            values[eid] = bit
        for node in order:
            if node in values:
                continue
            if node in events:
                values[node] = events[node].probability
                continue
            g = gates[node]
            kids = [values[c] for c in g.children]
            if g.kind is GateKind.OR:
                values[node] = _or(kids)
            elif g.kind is GateKind.AND:
                values[node] = _and(kids)
            else:
                values[node] = _atleast(kids, g.k)
        total += float(np.sum(weight * values[tree.top]))
    return min(max(total, 0.0), 1.0)


# ---------------------------------------------------------------------------
# chain


def gauss_solve(A, B, tol=PIVOT_TOL):
    """Solve ``A X = B`` by Gaussian elimination with partial pivoting."""
    A = np.array(A, dtype=np.float64)
    B = np.array(B, dtype=np.float64)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    n = A.shape[0]
    for c in range(n):
        r = c + int(np.argmax(np.abs(A[c:, c])))
        if abs(A[r, c]) < tol:
            raise NumericError(f"singular system: pivot {A[r, c]:.3g} below {tol:g} in column {c}")
        if r != c:
            A[[c, r]] = A[[r, c]]
            B[[c, r]] = B[[r, c]]
        f = A[c + 1 :, c] / A[c, c]
        if np.any(f):
            A[c + 1 :, c:] -= np.outer(f, A[c, c:])
            B[c + 1 :] -= np.outer(f, B[c])
    X = np.zeros_like(B)
    for i in range(n - 1, -1, -1):
        X[i] = (B[i] - A[i, i + 1 :] @ X[i + 1 :]) / A[i, i]
    return X[:, 0] if vector else X


@dataclass(frozen=True)
class ChainSolution:
    absorption: dict  # absorbing state id -> probability from the initial state
    expected_steps: float
    transient: tuple
    absorbing: tuple
    absorption_matrix: np.ndarray  # (transient, absorbing)
    steps: np.ndarray  # expected steps from every transient state


def _chain_arrays(model):
    if not model.is_resolved:
        raise ModelError("chain has unresolved fault-tree transitions; use solve_hybrid")
    transient = tuple(s.id for s in model.states if s.kind is StateKind.TRANSIENT)
    absorbing = tuple(s.id for s in model.states if s.kind is not StateKind.TRANSIENT)
    ti = {sid: i for i, sid in enumerate(transient)}
    ai = {sid: i for i, sid in enumerate(absorbing)}
    Q = np.zeros((len(transient), len(transient)))
    R = np.zeros((len(transient), len(absorbing)))
    for t in model.transitions:
        if t.source not in ti:
            if t.source in ai:
                raise ModelError(f"absorbing state {t.source} has an outgoing transition")
            raise ModelError(f"dangling state reference {t.source!r}")
        if not 0.0 <= t.p <= 1.0:
            raise ModelError(f"transition {t.source}->{t.target}: probability {t.p} outside [0, 1]")
        if t.target in ti:
            Q[ti[t.source], ti[t.target]] += t.p
        elif t.target in ai:
            R[ti[t.source], ai[t.target]] += t.p
        else:
            raise ModelError(f"dangling state reference {t.target!r}")
    rows = Q.sum(axis=1) + R.sum(axis=1)
    for sid, total in zip(transient, rows):
        if abs(total - 1.0) > ROW_SUM_TOL:
            raise ModelError(f"row-sum violation: outgoing probabilities of {sid} sum to {total!r}")
    return transient, absorbing, Q, R


def _check_absorbing(transient, Q, R):
    reach = R.sum(axis=1) > 0
    changed = True
    while changed:
        nxt = reach | ((Q > 0) & reach[None, :]).any(axis=1)
        changed = bool((nxt != reach).any())
        reach = nxt
    if not reach.all():
        stuck = [transient[i] for i in np.flatnonzero(~reach)]
        raise ModelError(f"non-absorbing chain: no absorbing state reachable from {stuck}")


def solve_dtmc(model):
    """Absorption probabilities and expected steps for a chain with numeric transitions."""
    transient, absorbing, Q, R = _chain_arrays(model)
    if model.initial in absorbing:
        absorption = {a: float(a == model.initial) for a in absorbing}
        B = np.zeros((len(transient), len(absorbing)))
        steps = np.zeros(len(transient))
        if transient:
            _check_absorbing(transient, Q, R)
            X = gauss_solve(np.eye(len(transient)) - Q, np.hstack([R, np.ones((len(transient), 1))]))
            B, steps = X[:, :-1], X[:, -1]
        return ChainSolution(absorption, 0.0, transient, absorbing, B, steps)
    _check_absorbing(transient, Q, R)
    X = gauss_solve(np.eye(len(transient)) - Q, np.hstack([R, np.ones((len(transient), 1))]))
    B, steps = X[:, :-1], X[:, -1]
    i0 = transient.index(model.initial)
    absorption = {a: float(B[i0, j]) for j, a in enumerate(absorbing)}
    return ChainSolution(absorption, float(steps[i0]), transient, absorbing, B, steps)


def resolve(model):
    """Replace tree and complement transitions by numbers; returns (resolved model, tree probabilities)."""
    q = validate_model(model)
    transitions = []
    for t in model.transitions:
        if t.tree is not None:
            transitions.append(replace(t, p=q[t.tree], tree=None))
        elif t.complement is not None:
            transitions.append(replace(t, p=1.0 - q[t.complement], complement=None))
        else:
            transitions.append(t)
    return replace(model, transitions=tuple(transitions)), q


def simulate_chain(model, n_runs, seed):
    """Monte Carlo absorption frequencies from ``n_runs`` seeded random walks."""
    transient, absorbing, Q, R = _chain_arrays(model)
    order = transient + absorbing
    P = np.hstack([Q, R])
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = np.inf  # guards against rounding in the row sum
    nt = len(transient)
    pos = np.full(n_runs, order.index(model.initial))
    rng = np.random.Generator(np.random.Philox(seed))
    for _ in range(100_000):
        live = np.flatnonzero(pos < nt)
        if live.size == 0:
            break
        u = rng.random(live.size)
        rows = cum[pos[live]]
        pos[live] = (rows <= u[:, None]).sum(axis=1)
    else:
        raise ModelError("random walks did not absorb within 100000 steps")
    counts = np.bincount(pos - nt, minlength=len(absorbing))
    return {a: counts[j] / n_runs for j, a in enumerate(absorbing)}


# ---------------------------------------------------------------------------
# hybrid


@dataclass(frozen=True)
class ReportRow:
    state: str
    tree: str | None
    skill: str | None
    t_start: float | None
    t_end: float | None
    failure_probability: float
    cumulative_success: float


@dataclass(frozen=True)
class RiskReport:
    rows: tuple[ReportRow, ...]
    success: float
    fail_absorption: dict
    expected_steps: float
    n_states: int
    n_transitions: int

    def to_dict(self):
        return {
            "version": REPORT_VERSION,
            "mission_success": self.success,
            "mission_failure": 1.0 - self.success,
            "expected_steps": self.expected_steps,
            "skills": [
                {
                    "state": r.state,
                    "tree": r.tree,
                    "skill": r.skill,
                    "t_start": r.t_start,
                    "t_end": r.t_end,
                    "failure_probability": r.failure_probability,
                    "cumulative_success": r.cumulative_success,
                }
                for r in self.rows
            ],
            "fail_absorption": self.fail_absorption,
            "model": {"states": self.n_states, "transitions": self.n_transitions},
        }

    def to_json(self):
        return (json.dumps(self.to_dict(), indent=1) + "\n").encode("utf-8")

    def to_text(self):
        head = ("skill", "window [s]", "failure probability", "cumulative success")
        body = []
        for r in self.rows:
            window = f"{r.t_start:.3f}-{r.t_end:.3f}" if r.t_start is not None else "-"
            body.append((r.skill or r.state, window, f"{r.failure_probability:.6e}", f"{r.cumulative_success:.12f}"))
        widths = [max(len(x[i]) for x in [head, *body]) for i in range(4)]
        fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()  # noqa: E731
        lines = [fmt(head), fmt(tuple("-" * w for w in widths)), *map(fmt, body)]
        lines += [
            "",
            f"mission success   {self.success:.12f}",
            f"mission failure   {1.0 - self.success:.6e}",
            f"expected steps    {self.expected_steps:.6f}",
            f"model             {self.n_states} states, {self.n_transitions} transitions",
        ]
        return "\n".join(lines) + "\n"


def solve_hybrid(model):
    """Solve every fault tree, inject the results into the chain, solve the chain."""
    resolved, _ = resolve(model)
    sol = solve_dtmc(resolved)
    kinds = {s.id: s.kind for s in model.states}
    rows, running = [], 1.0
    for s in model.states:
        if s.kind is not StateKind.TRANSIENT:
            continue
        fail = sum(t.p for t in resolved.outgoing(s.id) if kinds[t.target] is StateKind.FAIL)
        running *= 1.0 - fail
        rows.append(
            ReportRow(s.id, s.tree, str(s.skill) if s.skill is not None else None, s.t_start, s.t_end, fail, running)
        )
    done = next(s.id for s in model.states if s.kind is StateKind.DONE)
    fails = {sid: p for sid, p in sol.absorption.items() if kinds[sid] is StateKind.FAIL}
    return RiskReport(
        tuple(rows), sol.absorption[done], fails, sol.expected_steps, len(model.states), len(model.transitions)
    )
