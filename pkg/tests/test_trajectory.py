import itertools
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from conftest import QUIET, logs

from riskpipe.errors import FormatError, ParseError, ValidationError
from riskpipe.labels import SkillLabel
from riskpipe.trajectory import (
    ComponentKind,
    HardwareComponent,
    PhaseDurations,
    ScenarioConfig,
    TrajectoryLog,
    default_hardware,
    generate_episode,
    ingest_log,
    read_log,
    serialize_hardware,
    serialize_log,
    write_log,
)


def dedup(labels):
    return [SkillLabel(k) for k, _ in itertools.groupby(labels)]


def test_idle_only_scenario_is_still():
    durs = PhaseDurations(idle_lead=1.0, move=0, pick=0, carry=0, place=0, idle_tail=0.5)
    log, truth = generate_episode(ScenarioConfig(durations=durs, noise_sigma=QUIET))
    assert set(truth) == {SkillLabel.IDLE}
    assert not log.velocity.any()


def test_default_phase_order():
    _, truth = generate_episode(ScenarioConfig())
    assert dedup(truth) == [SkillLabel.IDLE, SkillLabel.MOVE, SkillLabel.PICK, SkillLabel.CARRY, SkillLabel.PLACE, SkillLabel.IDLE]


def test_move_peak_equals_v_max(canonical):
    log, truth = canonical
    peak = np.abs(log.velocity[truth == SkillLabel.MOVE]).max()
    assert abs(peak - 1.0) <= 1e-9


@pytest.mark.parametrize("v_max", [0.2, 0.75, 2.0])
def test_transport_phases_never_exceed_v_max(v_max):
    log, truth = generate_episode(ScenarioConfig(v_max=v_max, noise_sigma=QUIET))
    assert np.abs(log.velocity).max() <= v_max + 1e-12
    assert not log.velocity[(truth != SkillLabel.MOVE) & (truth != SkillLabel.CARRY)].any()


def test_gripper_closes_during_pick_and_opens_during_place(canonical):
    log, truth = canonical
    ap_pick = log.aperture[truth == SkillLabel.PICK]
    f_pick = log.force[truth == SkillLabel.PICK]
    assert np.all(np.diff(ap_pick) <= 0) and ap_pick[-1] == 0.0
    assert np.all(np.diff(f_pick) >= 0)
    ap_place = log.aperture[truth == SkillLabel.PLACE]
    assert np.all(np.diff(ap_place) >= 0) and ap_place[0] == 0.0


def test_generation_is_deterministic():
    cfg = ScenarioConfig(seed=2**64 - 1)
    a, ta = generate_episode(cfg)
    b, tb = generate_episode(cfg)
    assert serialize_log(a) == serialize_log(b)
    assert np.array_equal(ta, tb)
    c, _ = generate_episode(replace(cfg, seed=1))
    assert serialize_log(a) != serialize_log(c)


@pytest.mark.parametrize(
    "durs",
    [
        PhaseDurations(),
        PhaseDurations(0.333, 1.234, 0.5, 2.007, 0.75, 0.1),
        PhaseDurations(0.0, 0.015, 0.0, 0.026, 0.004, 0.0),
    ],
)
def test_ground_truth_boundaries_track_durations(durs):
    cfg = ScenarioConfig(durations=durs, noise_sigma=QUIET)
    log, truth = generate_episode(cfg)
    assert len(truth) == log.n_samples
    cum = np.cumsum([durs.idle_lead, durs.move, durs.pick, durs.carry, durs.place, durs.idle_tail])
    counts = np.cumsum(cfg.phase_counts())
    assert np.all(np.abs(counts * cfg.dt - cum) <= cfg.dt)


@pytest.mark.parametrize(
    "field, change",
    [
        ("durations.move", {"durations": PhaseDurations(move=-1.0)}),
        ("dt", {"dt": 0.0}),
        ("n_joints", {"n_joints": 0}),
        ("noise_sigma.force", {"noise_sigma": replace(QUIET, force=-0.1)}),
        ("v_max", {"v_max": float("nan")}),
        ("seed", {"seed": -1}),
    ],
)
def test_invalid_config_names_field(field, change):
    with pytest.raises(ValidationError, match=field.replace(".", r"\.")):
        generate_episode(replace(ScenarioConfig(), **change))


def test_config_from_dict_rejects_unknown_fields():
    with pytest.raises(ValidationError, match="unknown"):
        ScenarioConfig.from_dict({"n_joints": 2, "speed": 3})
    cfg = ScenarioConfig.from_dict({"n_joints": 2, "durations": {"move": 2.0}})
    assert cfg.durations.move == 2.0 and cfg.durations.pick == 1.5


def test_log_arrays_are_read_only(canonical):
    log, _ = canonical
    with pytest.raises(ValueError):
        log.velocity[0, 0] = 1.0


def test_registry_invariants():
    z = np.zeros((3, 2))
    z1 = np.zeros(3)
    with pytest.raises(ValidationError, match="duplicate"):
        TrajectoryLog(0.1, z, z, z, z1, z1, (HardwareComponent("a", ComponentKind.BASE),) * 2)
    with pytest.raises(ValidationError, match="joint_index"):
        TrajectoryLog(0.1, z, z, z, z1, z1, (HardwareComponent("j", ComponentKind.JOINT),))
    with pytest.raises(ValidationError, match="joint_index"):
        TrajectoryLog(0.1, z, z, z, z1, z1, (HardwareComponent("c", ComponentKind.CAMERA, 0),))
    with pytest.raises(ValidationError, match="out of range"):
        TrajectoryLog(0.1, z, z, z, z1, z1, (HardwareComponent("m", ComponentKind.MOTOR, 2),))


# --- ingestion -----------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(logs())
def test_jsonl_round_trip(log):
    assert ingest_log(serialize_log(log, "jsonl"), "jsonl") == log


@settings(max_examples=100, deadline=None)
@given(logs())
def test_csv_round_trip(log):
    assert ingest_log(serialize_log(log, "csv"), "csv", serialize_hardware(log)) == log


def test_file_round_trip_with_sidecar(tmp_path, canonical):
    log, _ = canonical
    write_log(log, tmp_path / "ep.csv")
    assert (tmp_path / "ep.hw.json").exists()
    assert read_log(tmp_path / "ep.csv") == log
    write_log(log, tmp_path / "ep.jsonl")
    assert read_log(tmp_path / "ep.jsonl") == log


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_empty_stream(fmt):
    with pytest.raises(ParseError):
        ingest_log(b"", fmt, {"type": "hardware", "components": []})


SIDE = {"type": "hardware", "components": [{"id": "joint0", "kind": "Joint", "joint_index": 0}]}
CSV_HEAD = "t,j0_p,j0_v,j0_e,grip_a,grip_f\n"


def test_csv_non_uniform_timestamps():
    body = CSV_HEAD + "0.0,0,0,0,0,0\n0.01,0,0,0,0,0\n0.03,0,0,0,0,0\n"
    with pytest.raises(FormatError, match="non-uniform"):
        ingest_log(body.encode(), "csv", SIDE)


def test_csv_uniform_timestamps_infer_dt():
    body = CSV_HEAD + "0.0,0,0,0,0,0\n0.01,0,0,0,0,0\n0.02,0,0,0,0,0\n"
    log = ingest_log(body.encode(), "csv", SIDE)
    assert log.dt == 0.01 and log.n_samples == 3


def test_csv_without_sidecar_is_rejected():
    with pytest.raises(FormatError, match="hardware"):
        ingest_log((CSV_HEAD + "0.0,0,0,0,0,0\n").encode(), "csv")


def test_jsonl_without_header_is_rejected():
    rec = {"t": 0.0, "joints": [{"p": 0, "v": 0, "e": 0}], "gripper": {"a": 0, "f": 0}}
    with pytest.raises(FormatError, match="hardware header"):
        ingest_log(json.dumps(rec).encode(), "jsonl")


def test_malformed_record_reports_line_number(canonical):
    log, _ = canonical
    lines = serialize_log(log).decode().splitlines()
    lines[2] = lines[2][:-5]
    with pytest.raises(ParseError, match="line 3") as err:
        ingest_log("\n".join(lines).encode(), "jsonl")
    assert err.value.line == 3


def test_csv_bad_number_reports_line_number():
    body = CSV_HEAD + "0.0,0,0,0,0,0\n0.01,0,zero,0,0,0\n"
    with pytest.raises(ParseError) as err:
        ingest_log(body.encode(), "csv", SIDE)
    assert err.value.line == 3


def test_header_only_log_is_rejected():
    header = {"type": "hardware", "dt": 0.01, "components": []}
    with pytest.raises(FormatError, match="no samples"):
        ingest_log(json.dumps(header).encode(), "jsonl")


def test_default_hardware_is_valid_registry():
    hw = default_hardware(4)
    assert len({c.id for c in hw}) == len(hw)
    assert {c.joint_index for c in hw if c.kind is ComponentKind.JOINT} == {0, 1, 2, 3}
