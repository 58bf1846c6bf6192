import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from riskpipe.behavior import BehavioralProfile, ComponentUsage, SkillSegment  # noqa: E402
from riskpipe.labels import SkillLabel  # noqa: E402
from riskpipe.skills import MlpModel, TrainConfig, build_dataset, random_scenarios, train  # noqa: E402
from riskpipe.trajectory import (  # noqa: E402
    NoiseSigma,
    ScenarioConfig,
    TrajectoryLog,
    default_hardware,
    generate_episode,
)

QUIET = NoiseSigma(0.0, 0.0, 0.0, 0.0, 0.0)


@pytest.fixture(scope="session")
def quiet_cfg():
    return ScenarioConfig(noise_sigma=QUIET)


@pytest.fixture(scope="session")
def canonical(quiet_cfg):
    return generate_episode(quiet_cfg)


@pytest.fixture(scope="session")
def small_model():
    """A detector good enough for structural tests; the acceptance suite trains the full one."""
    data = build_dataset(random_scenarios(40, seed=11), 20, 10)
    return train(data, TrainConfig(epochs=15, seed=5))


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False, width=64)


@st.composite
def logs(draw, max_samples=25, max_joints=3):
    n = draw(st.integers(1, max_samples))
    j = draw(st.integers(1, max_joints))
    dt = draw(st.floats(min_value=1e-4, max_value=1.0, allow_nan=False))
    arr = lambda shape: np.array(draw(st.lists(finite, min_size=int(np.prod(shape)), max_size=int(np.prod(shape))))).reshape(shape)  # noqa: E731
    hw = default_hardware(j)
    keep = draw(st.lists(st.booleans(), min_size=len(hw), max_size=len(hw)))
    hw = tuple(c for c, k in zip(hw, keep) if k)
    return TrajectoryLog(dt, arr((n, j)), arr((n, j)), arr((n, j)), arr((n,)), arr((n,)), hw)


@st.composite
def models(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    sizes = [draw(st.integers(1, 12)), draw(st.integers(1, 8)), draw(st.integers(1, 8)), 5]
    ws = tuple(rng.normal(size=(a, b)) * 10.0 ** rng.integers(-5, 5) for a, b in zip(sizes[:-1], sizes[1:]))
    bs = tuple(rng.normal(size=b) for b in sizes[1:])
    return MlpModel(ws, bs, rng.normal(size=sizes[0]), rng.random(sizes[0]) + 1e-8, draw(st.integers(1, 50)), draw(st.integers(1, 50)))


@st.composite
def profiles(draw):
    n = draw(st.integers(1, 8))
    cuts = sorted(set(draw(st.lists(st.floats(0.01, 99.99), min_size=n - 1, max_size=n - 1))))
    bounds = [0.0, *cuts, 100.0]
    segs = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        usages = []
        for k in range(draw(st.integers(0, 4))):
            peak = draw(st.floats(0, 10))
            usages.append(
                ComponentUsage(
                    f"c{k}", draw(st.floats(0, 1)) * peak, peak, draw(st.floats(0, 1)) * (b - a), draw(st.floats(-50, 50))
                )
            )
        segs.append(SkillSegment(draw(st.sampled_from(list(SkillLabel))), a, b, tuple(usages)))
    return BehavioralProfile(tuple(segs), 100.0)


def quiet(cfg, **kw):
    return replace(cfg, noise_sigma=QUIET, **kw)


# --- acceptance summary ---------------------------------------------------------
# Tests marked ``acceptance("C<n> title")`` get one PASS/FAIL line each at the end
# of the run; details recorded with ``record_property("detail", ...)`` are appended.

_verdicts = {}
_acceptance_names = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): an acceptance criterion")


def pytest_runtest_logreport(report):
    marker = _acceptance_names.get(report.nodeid)
    if marker is None:
        return
    failed = report.failed
    if report.when == "call" or failed:
        ok, details = _verdicts.get(marker, (True, []))
        detail = dict(report.user_properties).get("detail")
        _verdicts[marker] = (ok and not failed, details + [detail] if detail else details)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            _acceptance_names[item.nodeid] = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_verdicts, key=lambda n: int(n.split()[0][1:])):
        ok, details = _verdicts[name]
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(f"{line}  ({'; '.join(details)})" if details else line)
