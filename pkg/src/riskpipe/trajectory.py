"""Joint-level trajectory logs: synthetic pick-and-place episodes and file I/O.

A log holds uniformly sampled per-joint position/velocity/effort, a gripper
channel (aperture, force) and the hardware registry the samples refer to.
Two text formats are supported (JSONL with an inline hardware header, CSV
with a ``<name>.hw.json`` sidecar). Floats are written with ``repr`` so a
serialize/ingest round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError, ValidationError
from .labels import SkillLabel

TIME_TOL = 1e-9
LOG_SCHEMA = "riskpipe-log/1"

GRIPPER_OPEN = 0.08  # m
GRIPPER_FORCE = 20.0  # N
RAMP_FRACTION = 0.2

# Joint direction weights for the two transport phases; the first entry of
# each has magnitude 1 so the configured v_max is always reached.
_MOVE_WEIGHTS = (1.0, -0.7, 0.5, -0.35, 0.8, -0.6, 0.4)
_CARRY_WEIGHTS = (-0.6, 1.0, -0.45, 0.7, -0.5, 0.3, -0.8)
_HOME = (0.0, -0.5, 0.3, -1.2, 0.1, 0.8, -0.2)


class ComponentKind(str, Enum):
    JOINT = "Joint"
    MOTOR = "Motor"
    LINK = "Link"
    GRIPPER = "Gripper"
    BASE = "Base"
    CONTROLLER = "Controller"
    CAMERA = "Camera"
    POWER = "Power"
    SOFTWARE = "Software"


JOINT_KINDS = frozenset({ComponentKind.JOINT, ComponentKind.MOTOR})


@dataclass(frozen=True)
class HardwareComponent:
    id: str
    kind: ComponentKind
    joint_index: int | None = None

    def to_dict(self):
        d = {"id": self.id, "kind": self.kind.value}
        if self.joint_index is not None:
            d["joint_index"] = self.joint_index
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise FormatError("hardware component must be an object")
        extra = set(d) - {"id", "kind", "joint_index"}
        if extra:
            raise FormatError(f"unknown hardware fields {sorted(extra)}")
        try:
            kind = ComponentKind(d["kind"])
        except KeyError as exc:
            raise FormatError(f"hardware component missing {exc}") from None
        except ValueError:
            raise FormatError(f"unknown component kind {d['kind']!r}") from None
        if "id" not in d or not isinstance(d["id"], str):
            raise FormatError("hardware component needs a string id")
        idx = d.get("joint_index")
        if idx is not None and (isinstance(idx, bool) or not isinstance(idx, int)):
            raise FormatError(f"{d['id']}: joint_index must be an integer")
        return cls(d["id"], kind, idx)


@dataclass(frozen=True)
class JointSample:
    t: float
    position: float
    velocity: float
    effort: float


def validate_registry(hardware, n_joints):
    seen = set()
    for comp in hardware:
        if comp.id in seen:
            raise ValidationError(f"duplicate hardware id {comp.id!r}")
        seen.add(comp.id)
        idx = comp.joint_index
        if comp.kind in JOINT_KINDS and idx is None:
            raise ValidationError(f"{comp.id}: {comp.kind.value} needs a joint_index")
        if comp.kind not in JOINT_KINDS and comp.kind is not ComponentKind.LINK and idx is not None:
            raise ValidationError(f"{comp.id}: {comp.kind.value} cannot carry a joint_index")
        if idx is not None and not 0 <= idx < n_joints:
            raise ValidationError(f"{comp.id}: joint_index {idx} out of range for {n_joints} joints")


@dataclass(frozen=True, eq=False)
class TrajectoryLog:
    """Uniformly sampled log; arrays are (N, n_joints) or (N,) and read-only."""

    dt: float
    position: np.ndarray
    velocity: np.ndarray
    effort: np.ndarray
    aperture: np.ndarray
    force: np.ndarray
    hardware: tuple[HardwareComponent, ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be finite and > 0, got {self.dt}")
        for name in ("position", "velocity", "effort"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2:
                raise ValidationError(f"{name} must be 2-D (samples, joints)")
            self._freeze(name, arr)
        for name in ("aperture", "force"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValidationError(f"{name} must be 1-D")
            self._freeze(name, arr)
        n, j = self.position.shape
        if n < 1 or j < 1:
            raise ValidationError("log needs at least one sample and one joint")
        if self.velocity.shape != (n, j) or self.effort.shape != (n, j):
            raise ValidationError("joint series must share one shape")
        if self.aperture.shape != (n,) or self.force.shape != (n,):
            raise ValidationError("gripper series length differs from joint series")
        for name in ("position", "velocity", "effort", "aperture", "force"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} contains non-finite values")
        object.__setattr__(self, "hardware", tuple(self.hardware))
        validate_registry(self.hardware, j)

    def _freeze(self, name, arr):
        arr.setflags(write=False)
        object.__setattr__(self, name, arr)

    @property
    def n_samples(self):
        return self.position.shape[0]

    @property
    def n_joints(self):
        return self.position.shape[1]

    @property
    def t(self):
        return np.arange(self.n_samples) * self.dt

    @property
    def duration(self):
        return self.n_samples * self.dt

    def joint_samples(self, j):
        t = self.t
        return [
            JointSample(float(t[k]), float(self.position[k, j]), float(self.velocity[k, j]), float(self.effort[k, j]))
            for k in range(self.n_samples)
        ]

    def component(self, component_id):
        for comp in self.hardware:
            if comp.id == component_id:
                return comp
        raise KeyError(component_id)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryLog):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.hardware == other.hardware
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("position", "velocity", "effort", "aperture", "force")
            )
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# scenario generation


def _check_number(name, value, *, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"{name} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ValidationError(f"{name} must be > 0, got {value}")
    if not positive and value < 0:
        raise ValidationError(f"{name} must be >= 0, got {value}")


def _from_dict(cls, d, where):
    if not isinstance(d, dict):
        raise ValidationError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ValidationError(f"{where}: unknown fields {sorted(extra)}")
    return cls(**d)


@dataclass(frozen=True)
class PhaseDurations:
    idle_lead: float = 1.0
    move: float = 3.0
    pick: float = 1.5
    carry: float = 3.0
    place: float = 1.5
    idle_tail: float = 1.0


@dataclass(frozen=True)
class NoiseSigma:
    position: float = 1e-3
    velocity: float = 5e-3
    effort: float = 0.05
    aperture: float = 2e-4
    force: float = 0.05


PHASES = (
    (SkillLabel.IDLE, "idle_lead"),
    (SkillLabel.MOVE, "move"),
    (SkillLabel.PICK, "pick"),
    (SkillLabel.CARRY, "carry"),
    (SkillLabel.PLACE, "place"),
    (SkillLabel.IDLE, "idle_tail"),
)


@dataclass(frozen=True)
class ScenarioConfig:
    n_joints: int = 6
    v_max: float = 1.0
    durations: PhaseDurations = field(default_factory=PhaseDurations)
    noise_sigma: NoiseSigma = field(default_factory=NoiseSigma)
    dt: float = 0.01
    seed: int = 0

    def validate(self):
        if isinstance(self.n_joints, bool) or not isinstance(self.n_joints, int) or self.n_joints < 1:
            raise ValidationError(f"n_joints must be an integer >= 1, got {self.n_joints!r}")
        _check_number("v_max", self.v_max)
        _check_number("dt", self.dt, positive=True)
        for f in fields(PhaseDurations):
            _check_number(f"durations.{f.name}", getattr(self.durations, f.name))
        for f in fields(NoiseSigma):
            _check_number(f"noise_sigma.{f.name}", getattr(self.noise_sigma, f.name))
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if sum(self.phase_counts()) == 0:
            raise ValidationError("durations: episode would contain no samples")
        return self

    def phase_counts(self):
        return [int(round(getattr(self.durations, name) / self.dt)) for _, name in PHASES]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "durations" in d:
            d["durations"] = _from_dict(PhaseDurations, d["durations"], "durations")
        if "noise_sigma" in d:
            d["noise_sigma"] = _from_dict(NoiseSigma, d["noise_sigma"], "noise_sigma")
        return _from_dict(cls, d, "scenario").validate()


def default_hardware(n_joints):
    comps = []
    for j in range(n_joints):
        comps.append(HardwareComponent(f"joint{j}", ComponentKind.JOINT, j))
        comps.append(HardwareComponent(f"motor{j}", ComponentKind.MOTOR, j))
        comps.append(HardwareComponent(f"link{j}", ComponentKind.LINK, j))
    comps += [
        HardwareComponent("gripper", ComponentKind.GRIPPER),
        HardwareComponent("base", ComponentKind.BASE),
        HardwareComponent("controller", ComponentKind.CONTROLLER),
        HardwareComponent("camera", ComponentKind.CAMERA),
        HardwareComponent("power_a", ComponentKind.POWER),
        HardwareComponent("power_b", ComponentKind.POWER),
        HardwareComponent("software", ComponentKind.SOFTWARE),
    ]
    return tuple(comps)


def _cycled(values, n):
    return np.array([values[j % len(values)] for j in range(n)])


def trapezoid_shape(n):
    """Unit trapezoid sampled at ``n`` points with 20% ramps, plus its slope in 1/sample-time units.

    Slopes are returned per unit phase duration; divide by the duration to get 1/s.
    """
    if n == 0:
        return np.zeros(0), np.zeros(0)
    i = np.arange(n, dtype=np.float64)
    ramp = RAMP_FRACTION * n
    up = i / ramp
    down = (n - i) / ramp
    shape = np.minimum(1.0, np.minimum(up, down))
    slope = np.where((up < 1.0) & (up <= down), 1.0, np.where(down < 1.0, -1.0, 0.0)) / RAMP_FRACTION
    return shape, slope


def generate_episode(cfg: ScenarioConfig):
    """Simulate one pick-and-place episode.

    Returns ``(log, truth)`` where ``truth`` is an int array holding the
    :class:`SkillLabel` of every sample.
    """
    cfg.validate()
    J, dt = cfg.n_joints, cfg.dt
    counts = cfg.phase_counts()
    n = sum(counts)
    truth = np.repeat([int(lbl) for lbl, _ in PHASES], counts).astype(np.int64)

    velocity = np.zeros((n, J))
    accel = np.zeros((n, J))
    aperture = np.full(n, GRIPPER_OPEN)
    force = np.zeros(n)
    move_w = _cycled(_MOVE_WEIGHTS, J)
    carry_w = _cycled(_CARRY_WEIGHTS, J)

    start = 0
    for (label, _), count in zip(PHASES, counts):
        sl = slice(start, start + count)
        if label in (SkillLabel.MOVE, SkillLabel.CARRY) and count:
            shape, slope = trapezoid_shape(count)
            w = move_w if label is SkillLabel.MOVE else carry_w
            velocity[sl] = cfg.v_max * shape[:, None] * w
            accel[sl] = cfg.v_max * (slope / (count * dt))[:, None] * w
        if label in (SkillLabel.PICK, SkillLabel.PLACE) and count:
            s = np.arange(count) / (count - 1) if count > 1 else np.ones(1)
            closing = label is SkillLabel.PICK
            aperture[sl] = GRIPPER_OPEN * (1.0 - s if closing else s)
            force[sl] = GRIPPER_FORCE * (s if closing else 1.0 - s)
        if label is SkillLabel.CARRY:
            aperture[sl] = 0.0
            force[sl] = GRIPPER_FORCE
        start += count

    home = _cycled(_HOME, J)
    position = home + dt * np.vstack([np.zeros((1, J)), np.cumsum(velocity, axis=0)[:-1]])

    jj = np.arange(J)
    gravity = 8.0 / (jj + 1)
    inertia = 0.5 / (jj + 1)
    payload = 1.5 / (jj + 1)
    hold = force / GRIPPER_FORCE
    effort = gravity * np.cos(position) + inertia * accel + 0.3 * velocity + payload * hold[:, None]

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    sig = cfg.noise_sigma
    position = position + sig.position * rng.standard_normal((n, J))
    velocity = velocity + sig.velocity * rng.standard_normal((n, J))
    effort = effort + sig.effort * rng.standard_normal((n, J))
    aperture = aperture + sig.aperture * rng.standard_normal(n)
    force = force + sig.force * rng.standard_normal(n)

    log = TrajectoryLog(dt, position, velocity, effort, aperture, force, default_hardware(J))
    return log, truth


# ---------------------------------------------------------------------------
# serialization


def _num(x):
    return repr(float(x))


def hardware_header(log):
    return {"type": "hardware", "schema": LOG_SCHEMA, "dt": log.dt, "components": [c.to_dict() for c in log.hardware]}


def serialize_log(log: TrajectoryLog, format="jsonl"):
    """Encode ``log`` as bytes. For CSV the hardware registry goes to a sidecar, see :func:`serialize_hardware`."""
    out = io.StringIO()
    t = log.t
    if format == "jsonl":
        out.write(json.dumps(hardware_header(log)) + "\n")
        for k in range(log.n_samples):
            joints = ",".join(
                f'{{"p":{_num(log.position[k, j])},"v":{_num(log.velocity[k, j])},"e":{_num(log.effort[k, j])}}}'
                for j in range(log.n_joints)
            )
            out.write(
                f'{{"t":{_num(t[k])},"joints":[{joints}],'
                f'"gripper":{{"a":{_num(log.aperture[k])},"f":{_num(log.force[k])}}}}}\n'
            )
    elif format == "csv":
        cols = ["t"] + [f"j{j}_{c}" for j in range(log.n_joints) for c in "pve"] + ["grip_a", "grip_f"]
        out.write(",".join(cols) + "\n")
        for k in range(log.n_samples):
            row = [t[k]]
            for j in range(log.n_joints):
                row += [log.position[k, j], log.velocity[k, j], log.effort[k, j]]
            row += [log.aperture[k], log.force[k]]
            out.write(",".join(_num(x) for x in row) + "\n")
    else:
        raise ValidationError(f"unknown log format {format!r}")
    return out.getvalue().encode("utf-8")


def serialize_hardware(log):
    """Sidecar document carrying the hardware registry of a CSV log."""
    return (json.dumps(hardware_header(log), indent=2) + "\n").encode("utf-8")


def _read_bytes(source):
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, str):
        return source.encode("utf-8")
    return source.read()


def _parse_header(doc, line=None):
    if not isinstance(doc, dict) or doc.get("type") != "hardware":
        raise FormatError("missing hardware header")
    extra = set(doc) - {"type", "schema", "dt", "components"}
    if extra:
        raise FormatError(f"unknown header fields {sorted(extra)}")
    if "schema" in doc and doc["schema"] != LOG_SCHEMA:
        raise FormatError(f"unsupported log schema {doc['schema']!r}")
    comps = doc.get("components")
    if not isinstance(comps, list):
        raise FormatError("hardware header needs a components list")
    dt = doc.get("dt")
    if dt is not None and (isinstance(dt, bool) or not isinstance(dt, (int, float))):
        raise FormatError("header dt must be a number")
    return (float(dt) if dt is not None else None), tuple(HardwareComponent.from_dict(c) for c in comps)


def _finite(value, line, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{what} must be a number", line)
    value = float(value)
    if not math.isfinite(value):
        raise ParseError(f"{what} is not finite", line)
    return value


def _build(t, pos, vel, eff, ap, fo, dt, hardware):
    t = np.asarray(t)
    if dt is None:
        if len(t) < 2:
            raise FormatError("cannot infer dt from a single sample; put dt in the hardware header")
        dt = float(t[1] - t[0])
    if not dt > 0:
        raise FormatError(f"dt must be > 0, got {dt}")
    expected = np.arange(len(t)) * dt
    bad = np.flatnonzero(np.abs(t - expected) > TIME_TOL)
    if bad.size:
        k = int(bad[0])
        raise FormatError(f"non-uniform timestamps: sample {k} at t={t[k]!r}, expected {expected[k]!r}")
    try:
        return TrajectoryLog(dt, pos, vel, eff, ap, fo, hardware)
    except ValidationError as exc:
        raise FormatError(str(exc)) from None


def _ingest_jsonl(text):
    lines = text.splitlines()
    if not lines or not any(l.strip() for l in lines):
        raise ParseError("empty stream", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", 1) from None
    dt, hardware = _parse_header(header)
    t, pos, vel, eff, ap, fo = [], [], [], [], [], []
    n_joints = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc.msg}", lineno) from None
        if not isinstance(rec, dict) or set(rec) != {"t", "joints", "gripper"}:
            raise ParseError("sample record needs exactly t, joints, gripper", lineno)
        joints, grip = rec["joints"], rec["gripper"]
        if not isinstance(joints, list) or not joints:
            raise ParseError("joints must be a non-empty list", lineno)
        if n_joints is None:
            n_joints = len(joints)
        elif len(joints) != n_joints:
            raise ParseError(f"expected {n_joints} joints, got {len(joints)}", lineno)
        row_p, row_v, row_e = [], [], []
        for js in joints:
            if not isinstance(js, dict) or set(js) != {"p", "v", "e"}:
                raise ParseError("joint sample needs exactly p, v, e", lineno)
            row_p.append(_finite(js["p"], lineno, "p"))
            row_v.append(_finite(js["v"], lineno, "v"))
            row_e.append(_finite(js["e"], lineno, "e"))
        if not isinstance(grip, dict) or set(grip) != {"a", "f"}:
            raise ParseError("gripper sample needs exactly a, f", lineno)
        t.append(_finite(rec["t"], lineno, "t"))
        pos.append(row_p)
        vel.append(row_v)
        eff.append(row_e)
        ap.append(_finite(grip["a"], lineno, "a"))
        fo.append(_finite(grip["f"], lineno, "f"))
    if not t:
        raise FormatError("log contains no samples")
    return _build(t, pos, vel, eff, ap, fo, dt, hardware)


def _ingest_csv(text, hardware_doc):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty stream", 1)
    if hardware_doc is None:
        raise FormatError("missing hardware header (CSV logs need a .hw.json sidecar)")
    if isinstance(hardware_doc, (bytes, bytearray, str)):
        try:
            hardware_doc = json.loads(hardware_doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed hardware sidecar: {exc.msg}", exc.lineno) from None
    dt, hardware = _parse_header(hardware_doc)
    header = [c.strip() for c in rows[0]]
    if len(header) < 6 or (len(header) - 3) % 3:
        raise ParseError("header must be t, j<k>_p/v/e triples, grip_a, grip_f", 1)
    J = (len(header) - 3) // 3
    expected = ["t"] + [f"j{j}_{c}" for j in range(J) for c in "pve"] + ["grip_a", "grip_f"]
    if header != expected:
        raise ParseError(f"unexpected header columns; expected {','.join(expected)}", 1)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite value", lineno)
        data.append(vals)
    if not data:
        raise FormatError("log contains no samples")
    arr = np.array(data)
    joint = arr[:, 1 : 1 + 3 * J].reshape(-1, J, 3)
    return _build(arr[:, 0], joint[..., 0], joint[..., 1], joint[..., 2], arr[:, -2], arr[:, -1], dt, hardware)


def ingest_log(source, format="jsonl", hardware=None):
    """Parse a log from bytes or a binary stream.

    ``hardware`` is the sidecar document (bytes, str or dict) for CSV input.
    """
    raw = _read_bytes(source)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}") from None
    if format == "jsonl":
        return _ingest_jsonl(text)
    if format == "csv":
        return _ingest_csv(text, hardware)
    raise ValidationError(f"unknown log format {format!r}")


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".hw.json")


def write_log(log, path):
    path = Path(path)
    fmt = "csv" if path.suffix == ".csv" else "jsonl"
    path.write_bytes(serialize_log(log, fmt))
    if fmt == "csv":
        sidecar_path(path).write_bytes(serialize_hardware(log))


def read_log(path):
    path = Path(path)
    if path.suffix == ".csv":
        side = sidecar_path(path)
        hw = side.read_bytes() if side.exists() else None
        return ingest_log(path.read_bytes(), "csv", hw)
    return ingest_log(path.read_bytes(), "jsonl")
