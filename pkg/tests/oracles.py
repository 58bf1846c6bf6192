"""Independent reference computations used by the tests.

Nothing here calls into the solver: fault trees are checked by brute-force
boolean enumeration, chains by a dense numpy solve.
"""

import numpy as np

from riskpipe.labels import SkillLabel
from riskpipe.riskgen import (
    BasicEvent,
    FaultTree,
    Gate,
    GateKind,
    HybridRiskModel,
    State,
    StateKind,
    Transition,
)


def enumerate_top_probability(tree):
    """Sum the weights of all 2^n event outcomes in which the top event occurs."""
    events = list(tree.events)
    n = len(events)
    idx = np.arange(1 << n)
    weight = np.ones(1 << n)
    truth = {}
    for b, e in enumerate(events):
        bit = ((idx >> b) & 1).astype(bool)
        truth[e.id] = bit
        weight *= np.where(bit, e.probability, 1.0 - e.probability)
    gates = tree.gate_map

    def value(node):
        if node in truth:
            return truth[node]
        g = gates[node]
        kids = np.array([value(c) for c in g.children])
        if g.kind is GateKind.OR:
            out = kids.any(axis=0)
        elif g.kind is GateKind.AND:
            out = kids.all(axis=0)
        else:
            out = kids.sum(axis=0) >= g.k
        truth[node] = out
        return out

    return float(weight[value(tree.top)].sum())


def random_tree(rng, max_events=12, max_gates=8, p_extreme=0.1):
    """Random AND/OR/K-of-N DAG over at most ``max_events`` events, with sharing."""
    n_events = int(rng.integers(1, max_events + 1))
    n_gates = int(rng.integers(1, max_gates + 1))
    events = []
    for i in range(n_events):
        r = rng.random()
        p = float(rng.integers(0, 2)) if r < p_extreme else float(rng.random())
        events.append(BasicEvent(f"e{i}", p))
    gates = []
    for g in range(n_gates):
        pool = [e.id for e in events] + [x.id for x in gates]
        k_children = int(rng.integers(1, min(5, len(pool)) + 1))
        children = tuple(str(c) for c in rng.choice(pool, size=k_children, replace=bool(rng.random() < 0.2)))
        kind = GateKind([GateKind.AND, GateKind.OR, GateKind.ATLEAST][int(rng.integers(0, 3))])
        k = int(rng.integers(1, len(children) + 1)) if kind is GateKind.ATLEAST else None
        gates.append(Gate(f"g{g}", kind, children, k))
    return FaultTree("rand", gates[-1].id, tuple(gates), tuple(events))


def random_chain(rng, max_states=50):
    """Random absorbing chain: a forward spine guarantees absorption, extra edges add cycles."""
    n_abs = int(rng.integers(1, 6))
    n_tr = int(rng.integers(1, max_states - n_abs + 1))
    tr = [f"t{i}" for i in range(n_tr)]
    ab = ["done"] + [f"f{i}" for i in range(n_abs - 1)]
    states = [State(s, StateKind.TRANSIENT) for s in tr]
    states += [State("done", StateKind.DONE)] + [State(s, StateKind.FAIL) for s in ab[1:]]
    everything = tr + ab
    transitions = []
    for i, s in enumerate(tr):
        targets = {tr[i + 1] if i + 1 < n_tr else ab[int(rng.integers(0, n_abs))]}
        for _ in range(int(rng.integers(0, 4))):
            targets.add(everything[int(rng.integers(0, len(everything)))])
        targets = sorted(targets)
        w = rng.random(len(targets)) + 0.05
        w /= w.sum()
        transitions += [Transition(s, t, p=float(p)) for t, p in zip(targets, w)]
    return HybridRiskModel(tuple(states), tuple(transitions), {}, tr[0])


def line_chain(qs):
    states, transitions = [], []
    for i, q in enumerate(qs):
        states += [State(f"s{i}", StateKind.TRANSIENT), State(f"f{i}", StateKind.FAIL)]
        nxt = f"s{i + 1}" if i + 1 < len(qs) else "done"
        transitions += [Transition(f"s{i}", f"f{i}", p=q), Transition(f"s{i}", nxt, p=1.0 - q)]
    states.append(State("done", StateKind.DONE))
    return HybridRiskModel(tuple(states), tuple(transitions), {}, "s0" if qs else "done")


def dense_absorption(model):
    """Absorption probabilities by numpy.linalg.solve on the fundamental-matrix system."""
    tr = [s.id for s in model.states if s.kind is StateKind.TRANSIENT]
    ab = [s.id for s in model.states if s.kind is not StateKind.TRANSIENT]
    Q = np.zeros((len(tr), len(tr)))
    R = np.zeros((len(tr), len(ab)))
    for t in model.transitions:
        i = tr.index(t.source)
        if t.target in tr:
            Q[i, tr.index(t.target)] += t.p
        else:
            R[i, ab.index(t.target)] += t.p
    B = np.linalg.solve(np.eye(len(tr)) - Q, R)
    return dict(zip(ab, B[tr.index(model.initial)]))


def random_hybrid(rng, max_skills=5):
    """Random line of skill states, each failing through its own random fault tree,
    with an occasional numeric retry branch."""
    skills = list(SkillLabel)[1:]
    m = int(rng.integers(0, max_skills + 1))
    states, transitions, trees = [], [], {}
    t = 0.0
    for i in range(m):
        tid = f"seg{i}"
        tree = random_tree(rng, max_events=8, max_gates=5)
        trees[tid] = FaultTree(tid, tree.top, tree.gates, tree.events, skills[int(rng.integers(0, 4))])
        dur = float(rng.random() * 10)
        run, nxt = f"run:{tid}", f"run:seg{i + 1}" if i + 1 < m else "done"
        states += [
            State(run, StateKind.TRANSIENT, trees[tid].skill, t, t + dur, tid),
            State(f"fail:{tid}", StateKind.FAIL, trees[tid].skill),
        ]
        t += dur
        transitions += [Transition(run, f"fail:{tid}", tree=tid), Transition(run, nxt, complement=tid)]
        if rng.random() < 0.3:
            p = float(rng.random())
            states.append(State(f"check:{tid}", StateKind.TRANSIENT))
            transitions += [Transition(f"check:{tid}", run, p=p), Transition(f"check:{tid}", "done", p=1.0 - p)]
    states.append(State("done", StateKind.DONE))
    return HybridRiskModel(tuple(states), tuple(transitions), trees, "run:seg0" if m else "done")


def mlp_loss_extended(params, X, y):
    """Mean cross-entropy of a tanh MLP with softmax output, in extended precision.

    Written from scratch so the finite-difference reference shares no code with
    the package, and carried in ``longdouble`` so its round-off stays well below
    the step-size truncation error.
    """
    a = np.asarray(X, dtype=np.longdouble)
    n = len(params) // 2
    for i in range(n):
        z = a @ np.asarray(params[2 * i], dtype=np.longdouble) + np.asarray(params[2 * i + 1], dtype=np.longdouble)
        a = np.tanh(z) if i < n - 1 else z
    z = a - a.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(y)), y].mean()
