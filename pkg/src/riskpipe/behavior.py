"""Rule-based behavioral analysis: skill segments, active components, usage properties."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError, ValidationError
from .labels import SkillLabel
from .trajectory import ComponentKind

PROFILE_VERSION = 1
TIME_TOL = 1e-9

_WORKING = frozenset(s for s in SkillLabel if s is not SkillLabel.IDLE)


@dataclass(frozen=True)
class ComponentUsage:
    component_id: str
    mean_velocity: float
    peak_velocity: float
    active_time: float
    mean_effort: float

    def to_dict(self):
        return {
            "component_id": self.component_id,
            "mean_velocity": self.mean_velocity,
            "peak_velocity": self.peak_velocity,
            "active_time": self.active_time,
            "mean_effort": self.mean_effort,
        }


@dataclass(frozen=True)
class SkillSegment:
    skill: SkillLabel
    t_start: float
    t_end: float
    usages: tuple[ComponentUsage, ...] = ()

    @property
    def duration(self):
        return self.t_end - self.t_start


def _default_schedule():
    return {
        ComponentKind.BASE: _WORKING,
        ComponentKind.CONTROLLER: _WORKING,
        ComponentKind.POWER: _WORKING,
        ComponentKind.SOFTWARE: _WORKING,
        ComponentKind.CAMERA: frozenset({SkillLabel.MOVE, SkillLabel.CARRY}),
    }


@dataclass(frozen=True)
class ActivityRules:
    """When a component counts as active.

    Joint/Motor/Link activity is kinematic (mean |velocity| > ``v_eps``),
    the gripper follows ``gripper_skills`` or a held force above ``f_eps``,
    and every other kind is active exactly in the skills listed in ``scheduled``.
    """

    v_eps: float = 0.01
    f_eps: float = 0.1
    gripper_skills: frozenset = frozenset({SkillLabel.PICK, SkillLabel.PLACE})
    scheduled: dict = field(default_factory=_default_schedule)

    def to_dict(self):
        return {
            "v_eps": self.v_eps,
            "f_eps": self.f_eps,
            "gripper_skills": sorted(str(s) for s in self.gripper_skills),
            "scheduled": {k.value: sorted(str(s) for s in v) for k, v in self.scheduled.items()},
        }

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - {"v_eps", "f_eps", "gripper_skills", "scheduled"}
        if extra:
            raise ValidationError(f"activity: unknown fields {sorted(extra)}")
        kw = {}
        for key in ("v_eps", "f_eps"):
            if key in d:
                if not isinstance(d[key], (int, float)) or d[key] < 0:
                    raise ValidationError(f"activity.{key} must be a number >= 0")
                kw[key] = float(d[key])
        if "gripper_skills" in d:
            kw["gripper_skills"] = frozenset(SkillLabel.parse(s) for s in d["gripper_skills"])
        if "scheduled" in d:
            try:
                kw["scheduled"] = {
                    ComponentKind(k): frozenset(SkillLabel.parse(s) for s in v) for k, v in d["scheduled"].items()
                }
            except ValueError as exc:
                raise ValidationError(f"activity.scheduled: {exc}") from None
        return cls(**kw)


@dataclass(frozen=True)
class BehavioralProfile:
    segments: tuple[SkillSegment, ...]
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        validate_profile(self)

    @property
    def working_segments(self):
        return [(i, s) for i, s in enumerate(self.segments) if s.skill is not SkillLabel.IDLE]

    def to_dict(self):
        return {
            "version": PROFILE_VERSION,
            "duration": self.duration,
            "segments": [
                {
                    "skill": str(s.skill),
                    "t_start": s.t_start,
                    "t_end": s.t_end,
                    "usages": [u.to_dict() for u in s.usages],
                }
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or d.get("version") != PROFILE_VERSION:
            raise FormatError("unsupported profile version")
        if set(d) != {"version", "duration", "segments"}:
            raise FormatError("profile fields must be version, duration, segments")
        segs = []
        try:
            for s in d["segments"]:
                if set(s) != {"skill", "t_start", "t_end", "usages"}:
                    raise FormatError("segment fields must be skill, t_start, t_end, usages")
                usages = []
                for u in s["usages"]:
                    if set(u) != set(ComponentUsage.__dataclass_fields__):
                        raise FormatError("malformed component usage")
                    usages.append(ComponentUsage(**u))
                segs.append(SkillSegment(SkillLabel.parse(s["skill"]), s["t_start"], s["t_end"], tuple(usages)))
        except (TypeError, KeyError) as exc:
            raise FormatError(f"malformed profile: {exc}") from None
        try:
            return cls(tuple(segs), d["duration"])
        except ValidationError as exc:
            raise FormatError(str(exc)) from None


def dumps_profile(profile):
    return (json.dumps(profile.to_dict(), indent=1) + "\n").encode("utf-8")


def loads_profile(data):
    try:
        return BehavioralProfile.from_dict(json.loads(data))
    except json.JSONDecodeError as exc:
        raise FormatError(f"profile is not JSON: {exc.msg}") from None


def validate_profile(profile):
    segs = profile.segments
    if not segs:
        raise ValidationError("profile has no segments")
    if abs(segs[0].t_start) > TIME_TOL or abs(segs[-1].t_end - profile.duration) > TIME_TOL:
        raise ValidationError("segments must cover [0, duration]")
    for prev, nxt in zip(segs, segs[1:]):
        if abs(nxt.t_start - prev.t_end) > TIME_TOL:
            raise ValidationError(f"segments not contiguous at t={prev.t_end}")
    for s in segs:
        if not s.t_start < s.t_end:
            raise ValidationError(f"empty segment at t={s.t_start}")
        for u in s.usages:
            if not (0 <= u.mean_velocity <= u.peak_velocity + TIME_TOL):
                raise ValidationError(f"{u.component_id}: need 0 <= mean_velocity <= peak_velocity")
            if not (0 <= u.active_time <= s.duration + TIME_TOL):
                raise ValidationError(f"{u.component_id}: active_time outside segment duration")


# ---------------------------------------------------------------------------
# segmentation


def segment_labels(series, dt, min_duration=0.0, duration=None, window=None, stride=None):
    """Merge window labels into contiguous timed segments.

    Window ``k`` spans ``[k*stride*dt, k*stride*dt + window*dt)``; a boundary
    between two disagreeing windows sits halfway between their centres.
    Segments shorter than ``min_duration`` are absorbed into the longer
    neighbour (ties go to the preceding one) until none remain.
    """
    labels = np.asarray(series.labels)
    if len(labels) == 0:
        raise ValidationError("cannot segment an empty label series")
    if min_duration < 0:
        raise ValidationError("min_duration must be >= 0")
    window = series.window if window is None else window
    stride = series.stride if stride is None else stride
    if duration is None:
        duration = ((len(labels) - 1) * stride + window) * dt

    change = np.flatnonzero(labels[1:] != labels[:-1])
    cuts = [float((k + 0.5) * stride * dt + window * dt / 2) for k in change]
    bounds = [0.0, *cuts, float(duration)]
    run_labels = [labels[0], *labels[change + 1]]
    segs = [[SkillLabel(int(l)), a, b] for l, a, b in zip(run_labels, bounds[:-1], bounds[1:])]

    while len(segs) > 1:
        short = [(s[2] - s[1], i) for i, s in enumerate(segs) if s[2] - s[1] < min_duration]
        if not short:
            break
        _, i = min(short)
        prev = segs[i - 1] if i > 0 else None
        nxt = segs[i + 1] if i + 1 < len(segs) else None
        if nxt is None or (prev is not None and prev[2] - prev[1] >= nxt[2] - nxt[1]):
            prev[2] = segs[i][2]
            del segs[i]
            i -= 1
        else:
            nxt[1] = segs[i][1]
            del segs[i]
        # absorbing can make equal labels adjacent
        j = max(i, 0)
        while j + 1 < len(segs) and segs[j][0] == segs[j + 1][0]:
            segs[j][2] = segs[j + 1][2]
            del segs[j + 1]
        if j > 0 and segs[j - 1][0] == segs[j][0]:
            segs[j - 1][2] = segs[j][2]
            del segs[j]
    return [SkillSegment(l, a, b) for l, a, b in segs]


# ---------------------------------------------------------------------------
# component activity


def _sample_range(log, segment):
    if segment.t_start < -TIME_TOL or segment.t_end > log.duration + TIME_TOL:
        raise ValidationError(f"segment [{segment.t_start}, {segment.t_end}] outside log range")
    lo = max(0, math.ceil(segment.t_start / log.dt - TIME_TOL))
    hi = min(log.n_samples, math.ceil(segment.t_end / log.dt - TIME_TOL))
    return slice(lo, max(lo, hi))


def _kinematic_usage(cid, speed, effort, v_eps, duration):
    if speed.size == 0:
        return None
    mean_v = float(speed.mean())
    if not mean_v > v_eps:
        return None
    frac = float(np.mean(speed > v_eps))
    return ComponentUsage(cid, mean_v, float(speed.max()), duration * frac, float(np.abs(effort).mean()))


def map_active_components(log, segment, rules=ActivityRules()):
    """Usage records for the components active during ``segment``, in registry order."""
    if segment.skill is SkillLabel.IDLE:
        return []
    sl = _sample_range(log, segment)
    speed = np.abs(log.velocity[sl])
    effort = log.effort[sl]
    duration = segment.duration
    out = []
    for comp in log.hardware:
        kind = comp.kind
        if kind in (ComponentKind.JOINT, ComponentKind.MOTOR, ComponentKind.LINK):
            j = comp.joint_index
            if j is None:  # link not tied to a joint: follow the fastest joint
                if speed.shape[0] == 0:
                    continue
                j = int(speed.mean(axis=0).argmax())
            usage = _kinematic_usage(comp.id, speed[:, j], effort[:, j], rules.v_eps, duration)
        elif kind is ComponentKind.GRIPPER:
            force = np.abs(log.force[sl])
            held = force.size and force.mean() > rules.f_eps
            if segment.skill in rules.gripper_skills:
                frac = 1.0
            elif held:
                frac = float(np.mean(force > rules.f_eps))
            else:
                continue
            usage = ComponentUsage(comp.id, 0.0, 0.0, duration * frac, float(force.mean()) if force.size else 0.0)
        elif kind in rules.scheduled:
            if segment.skill not in rules.scheduled[kind]:
                continue
            usage = ComponentUsage(comp.id, 0.0, 0.0, duration, 0.0)
        else:
            raise ValidationError(f"no activity rule for component kind {kind.value} ({comp.id})")
        if usage is not None:
            out.append(usage)
    return out


def build_profile(log, series, min_duration=0.3, rules=ActivityRules()):
    segments = segment_labels(series, log.dt, min_duration, duration=log.duration)
    segments = [replace(s, usages=tuple(map_active_components(log, s, rules))) for s in segments]
    known = {c.id for c in log.hardware}
    for s in segments:
        for u in s.usages:
            if u.component_id not in known:
                raise ValidationError(f"usage refers to unknown component {u.component_id}")
    return BehavioralProfile(tuple(segments), log.duration)
