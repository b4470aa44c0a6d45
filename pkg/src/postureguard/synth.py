"""Seeded synthetic UWB scene simulator.

This is a phenomenological model, not a propagation solver. Each RX chain
sees a direct device-to-device path at a fixed early tap plus four body
reflections (arms, torso, head, legs). Posture geometry moves the body
paths in delay and scales their amplitude; dynamic postures modulate one
path over time. Antenna metrics and the ranging record are derived from
the synthesized taps so every side channel stays consistent with the CIR.

Randomness: every stream is a numpy ``Philox`` (Philox4x64-10) generator
keyed by ``(seed << 64) | stream_id``:

* ``stream_id = sample_index`` for dataset samples, where
  ``sample_index = (subject * 19 + label) * samples_per_class + rep``;
* ``SUBJECT_STREAM + subject`` for per-subject geometry;
* ``SESSION_STREAM + segment`` for continuous-session segments.

Numbers are reproducible for a given numpy version; numpy does not promise
identical normal variates across major releases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_INTERVAL_S,
    DEFAULT_N_TAPS,
    SCHEMA_VERSION,
    AntennaFrameMetrics,
    CirCapture,
    Dataset,
    PostureLabel,
    RangingRecord,
    RxId,
    Sample,
    UwbFrame,
)
from .features import TAP_PERIOD_NS

SUBJECT_STREAM = 1 << 40
SESSION_STREAM = 1 << 41

DIRECT_TAP = 8.0
PULSE_WIDTH_TAPS = 0.5
CYCLES_PER_TAP = 8.0  # carrier 7987.2 MHz times the 1.0016 ns tap period
NOISE_SIGMA = 0.012
CM_PER_TAP = 15.0  # round-trip: 1 tap ~ 30 cm of path, i.e. 15 cm of range
NOISE_TAPS = 32
POWER_SCALE = 1e6
RSSI_OFFSET_DB = 80.0

# body path order used in all arrays below
ARMS, TORSO, HEAD, LEGS = range(4)
_BASE_DELAY = np.array([2.2, 3.2, 4.6, 6.6])
_BASE_AMP = np.array([0.16, 0.45, 0.22, 0.24])
_RX_SIGN = np.array([-1.0, 1.0])  # RX1 sits on the user's left


@dataclass(frozen=True)
class PostureProfile:
    """Geometry of one posture as seen by the simulator.

    Beyond the torso/head/limb fields, ``limb_amplitude_cm`` and
    ``limb_offset_cm`` give the leg oscillation amplitude and static leg
    displacement, ``arm_raise`` (0..1) lifts the arms, ``arm_*`` drives hand
    oscillation, ``range_sway_cm``/``range_sway_hz`` move the whole body
    (walking) and ``sway_scale`` scales per-frame postural jitter.
    """

    label: PostureLabel
    torso_pitch_deg: float = 0.0
    torso_roll_deg: float = 0.0
    head_yaw_amplitude_deg: float = 0.0
    head_yaw_hz: float = 0.0
    limb_oscillation_hz: float = 0.0
    limb_oscillation_side: str = "none"
    limb_amplitude_cm: float = 0.0
    limb_offset_cm: float = 0.0
    arm_raise: float = 0.0
    arm_oscillation_hz: float = 0.0
    arm_amplitude_cm: float = 0.0
    range_sway_cm: float = 0.0
    range_sway_hz: float = 0.0
    head_offset_taps: float = 0.0
    body_range_offset_cm: float = 0.0
    body_reflectivity: float = 1.0
    sway_scale: float = 1.0
    presence: bool = True

    def __post_init__(self):
        if self.limb_oscillation_side not in ("none", "left", "right", "both"):
            raise ValueError(f"bad limb_oscillation_side {self.limb_oscillation_side!r}")
        if not 0.0 < self.body_reflectivity <= 2.0:
            raise ValueError("body_reflectivity must lie in (0, 2]")
        for name in ("head_yaw_amplitude_deg", "limb_oscillation_hz", "limb_amplitude_cm",
                     "arm_oscillation_hz", "arm_amplitude_cm", "range_sway_cm", "sway_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def is_dynamic(self) -> bool:
        return (self.head_yaw_amplitude_deg > 0 and self.head_yaw_hz > 0) or \
            (self.limb_amplitude_cm > 0 and self.limb_oscillation_hz > 0) or \
            (self.arm_amplitude_cm > 0 and self.arm_oscillation_hz > 0) or \
            (self.range_sway_cm > 0 and self.range_sway_hz > 0)


L = PostureLabel
PROFILES: dict[PostureLabel, PostureProfile] = {p.label: p for p in (
    PostureProfile(L.Idle, presence=False, sway_scale=0.0),
    PostureProfile(L.Upright),
    PostureProfile(L.LeanForward, torso_pitch_deg=20, body_range_offset_cm=-10, body_reflectivity=1.05),
    PostureProfile(L.LeanBack, torso_pitch_deg=-15, body_range_offset_cm=10, body_reflectivity=0.92),
    PostureProfile(L.LateralLeanLeft, torso_roll_deg=-15),
    PostureProfile(L.CrossLegLeft, torso_roll_deg=-2, limb_oscillation_side="left", limb_offset_cm=8),
    PostureProfile(L.LateralLeanRight, torso_roll_deg=15),
    PostureProfile(L.CrossLegRight, torso_roll_deg=2, limb_oscillation_side="right", limb_offset_cm=8),
    PostureProfile(L.Hunch, torso_pitch_deg=12, body_range_offset_cm=-5, body_reflectivity=0.82,
                   head_offset_taps=-0.4),
    PostureProfile(L.Tense, torso_pitch_deg=2, body_range_offset_cm=-3, body_reflectivity=1.12,
                   arm_raise=0.3, head_offset_taps=-0.15, sway_scale=0.4),
    PostureProfile(L.LieOnTable, torso_pitch_deg=40, body_range_offset_cm=-20, body_reflectivity=0.75,
                   arm_raise=-0.4, head_offset_taps=-0.8, sway_scale=0.5),
    PostureProfile(L.RotateHead, head_yaw_amplitude_deg=70, head_yaw_hz=0.8),
    PostureProfile(L.VertLegShakeLeft, limb_oscillation_hz=3.5, limb_oscillation_side="left",
                   limb_amplitude_cm=9.0),
    PostureProfile(L.VertLegShakeRight, limb_oscillation_hz=3.5, limb_oscillation_side="right",
                   limb_amplitude_cm=9.0),
    PostureProfile(L.HorizLegShake, limb_oscillation_hz=2.0, limb_oscillation_side="both",
                   limb_amplitude_cm=10.0),
    PostureProfile(L.TapFinger, arm_raise=0.2, arm_oscillation_hz=4.0, arm_amplitude_cm=5.0),
    PostureProfile(L.Stretch, torso_pitch_deg=-10, body_range_offset_cm=4, arm_raise=1.0,
                   arm_oscillation_hz=0.5, arm_amplitude_cm=8.0, body_reflectivity=1.1),
    PostureProfile(L.Stand, body_range_offset_cm=25, body_reflectivity=1.2, head_offset_taps=1.2,
                   sway_scale=1.5),
    PostureProfile(L.Walk, body_range_offset_cm=30, body_reflectivity=1.15, head_offset_taps=1.2,
                   range_sway_cm=20, range_sway_hz=0.4, limb_oscillation_hz=0.8,
                   limb_oscillation_side="both", limb_amplitude_cm=10, sway_scale=2.0),
)}
del L

# Out-of-distribution posture for Unknown segments: reclined far past any
# trained pitch, twisted, and pulled back from the desk.
UNKNOWN_PROFILE = PostureProfile(
    PostureLabel.Unknown, torso_pitch_deg=-40, torso_roll_deg=25, body_range_offset_cm=18,
    body_reflectivity=1.6, arm_raise=0.7, head_offset_taps=0.8)


@dataclass(frozen=True)
class ScenarioPerturbation:
    """Environment knobs; the default instance is the baseline setting."""

    obstacle_attenuation_db: float = 0.0
    interference_level: float = 0.0
    clothing_attenuation_db: float = 0.0
    antenna_height_offset_cm: float = 0.0
    antenna_separation_cm: float = 0.0
    noise_floor_scale: float = 1.0

    def __post_init__(self):
        for name in ("obstacle_attenuation_db", "interference_level", "clothing_attenuation_db"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.noise_floor_scale > 0:
            raise ValueError("noise_floor_scale must be > 0")

    def tags(self) -> frozenset[str]:
        default = ScenarioPerturbation()
        changed = {k for k in self.__dataclass_fields__ if getattr(self, k) != getattr(default, k)}
        return frozenset(changed) if changed else frozenset({"default"})


@dataclass(frozen=True)
class SimulatorConfig:
    seed: int = 7
    subjects: int = 10
    samples_per_class: int = 9
    frames_per_sample: int = 100
    n_taps: int = DEFAULT_N_TAPS
    perturbation: ScenarioPerturbation = field(default_factory=ScenarioPerturbation)

    def __post_init__(self):
        for name in ("subjects", "samples_per_class", "frames_per_sample"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_taps < 40:
            raise ValueError("n_taps must be >= 40 to hold the body paths and noise region")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SubjectGeometry:
    """Per-subject offsets (body size, seating, device offsets)."""

    height: float = 0.0          # standardized height; shifts torso/head delays
    build: float = 0.0           # standardized shoulder width; scales reflectivity
    seat_offset_cm: float = 0.0
    cfo_ppm: float = 0.0
    rx_phase: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class PostureInstance:
    """Per-recording deviation from the nominal profile."""

    pitch_deg: float = 0.0
    roll_deg: float = 0.0
    range_cm: float = 0.0
    reflectivity: float = 1.0
    phase: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    rate: float = 1.0


def make_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(stream)))


def draw_subject(seed: int, subject: int) -> SubjectGeometry:
    rng = make_rng(seed, SUBJECT_STREAM + subject)
    height, build = rng.standard_normal(2)
    return SubjectGeometry(
        height=float(height),
        build=float(build),
        seat_offset_cm=float(2.0 * rng.standard_normal()),
        cfo_ppm=float(rng.uniform(-4.0, 4.0)),
        rx_phase=tuple(float(v) for v in rng.uniform(-np.pi, np.pi, 2)),
    )


def draw_instance(rng: np.random.Generator) -> PostureInstance:
    z = rng.standard_normal(4)
    return PostureInstance(
        pitch_deg=float(1.0 * z[0]),
        roll_deg=float(1.0 * z[1]),
        range_cm=float(1.0 * z[2]),
        reflectivity=float(1.0 + 0.03 * z[3]),
        phase=tuple(float(v) for v in rng.uniform(0.0, 2 * np.pi, 4)),
        rate=float(1.0 + 0.05 * rng.standard_normal()),
    )


# ---------------------------------------------------------------------------
# frame synthesis

def _body_paths(profile, geom, inst, pert, t, rng):
    """Delays (n, 2, 4) in taps after the direct path and amplitudes (n, 2, 4)."""
    n = t.shape[0]
    sway = profile.sway_scale
    pitch = profile.torso_pitch_deg + inst.pitch_deg + 0.8 * sway * rng.standard_normal(n)
    roll = profile.torso_roll_deg + inst.roll_deg + 0.8 * sway * rng.standard_normal(n)
    rng_cm = (profile.body_range_offset_cm + inst.range_cm + geom.seat_offset_cm
              + 0.4 * sway * rng.standard_normal(n)
              + 0.4 * np.sin(2 * np.pi * 0.25 * t + inst.phase[3]))  # breathing
    if profile.range_sway_cm > 0:
        rng_cm = rng_cm + profile.range_sway_cm * np.sin(
            2 * np.pi * profile.range_sway_hz * inst.rate * t + inst.phase[0])

    rx = _RX_SIGN[None, :]  # (1, 2)
    pitch2, roll2, r2 = pitch[:, None], roll[:, None], rng_cm[:, None]
    height_shift = 0.12 * geom.height + 0.01 * pert.antenna_height_offset_cm + 0.02 * pert.antenna_separation_cm

    delay = np.empty((n, 2, 4))
    amp = np.empty((n, 2, 4))

    # arms
    arm = np.zeros(n)
    if profile.arm_amplitude_cm > 0:
        arm = profile.arm_amplitude_cm * np.sin(
            2 * np.pi * profile.arm_oscillation_hz * inst.rate * t + inst.phase[1])
    delay[:, :, ARMS] = (_BASE_DELAY[ARMS] + r2 / 25.0 - 0.02 * pitch2 - 0.8 * profile.arm_raise
                         + arm[:, None] / CM_PER_TAP + 0.01 * roll2 * rx)
    amp[:, :, ARMS] = _BASE_AMP[ARMS] * (1.0 + 1.5 * profile.arm_raise) * (1.0 + 0.02 * arm[:, None])

    # torso
    delay[:, :, TORSO] = (_BASE_DELAY[TORSO] + r2 / CM_PER_TAP - 0.04 * pitch2 + 0.035 * roll2 * rx
                          + height_shift)
    amp[:, :, TORSO] = (_BASE_AMP[TORSO] * (1.0 - 0.004 * np.abs(pitch2))
                        * (1.0 + 0.012 * roll2 * rx))

    # head
    yaw = np.zeros(n)
    if profile.head_yaw_amplitude_deg > 0:
        yaw = np.deg2rad(profile.head_yaw_amplitude_deg) * np.sin(
            2 * np.pi * profile.head_yaw_hz * inst.rate * t + inst.phase[2])
    delay[:, :, HEAD] = (_BASE_DELAY[HEAD] + profile.head_offset_taps + r2 / CM_PER_TAP - 0.09 * pitch2
                         + 0.05 * roll2 * rx + 0.6 * np.sin(yaw)[:, None] * rx + 1.3 * height_shift)
    amp[:, :, HEAD] = _BASE_AMP[HEAD] * (0.55 + 0.45 * np.cos(yaw))[:, None] * np.exp(
        -abs(pert.antenna_height_offset_cm) / 60.0)

    # legs; positive displacement of the left leg pulls the path toward RX1
    leg = np.full(n, profile.limb_offset_cm)
    if profile.limb_amplitude_cm > 0:
        leg = leg + profile.limb_amplitude_cm * np.sin(
            2 * np.pi * profile.limb_oscillation_hz * inst.rate * t + inst.phase[0])
    side = {"none": 0.0, "left": -1.0, "right": 1.0, "both": 0.0}[profile.limb_oscillation_side]
    if profile.limb_oscillation_side == "both":
        leg_delay = 2.0 * leg[:, None] / 30.0 + np.zeros((1, 2))
        leg_amp = 1.0 + 0.03 * np.abs(leg)[:, None] + np.zeros((1, 2))
    else:
        leg_delay = 2.0 * leg[:, None] / 30.0 * (side * rx)
        leg_amp = 1.0 + 0.04 * leg[:, None] * (side * rx > 0)
    delay[:, :, LEGS] = _BASE_DELAY[LEGS] + 0.5 * r2 / CM_PER_TAP + leg_delay + 0.02 * roll2 * rx
    amp[:, :, LEGS] = _BASE_AMP[LEGS] * leg_amp

    refl = (profile.body_reflectivity * inst.reflectivity * (1.0 + 0.08 * geom.build)
            * 10.0 ** (-pert.obstacle_attenuation_db / 20.0))
    amp *= refl
    clothing = 10.0 ** (-pert.clothing_attenuation_db / 20.0)
    amp[:, :, TORSO] *= clothing
    amp[:, :, ARMS] *= clothing
    amp *= np.exp(0.08 * rng.standard_normal((n, 2, 4)))  # small-scale fading
    if not profile.presence:
        amp[:] = 0.0
    return delay, amp


def _render_taps(delay, amp, geom, pert, n_taps, rng):
    """Complex taps (n, 2, n_taps) for direct + body paths plus noise."""
    n = delay.shape[0]
    k = np.arange(n_taps)[None, None, None, :]
    d_abs = np.concatenate([np.full((n, 2, 1), DIRECT_TAP), DIRECT_TAP + delay], axis=2)
    a = np.concatenate([np.ones((n, 2, 1)), amp], axis=2)
    rx_phase = np.asarray(geom.rx_phase)[None, :, None]
    phase = -2 * np.pi * CYCLES_PER_TAP * (d_abs - DIRECT_TAP) + rx_phase
    phase[:, :, 1:] += np.pi  # reflection
    pulse = np.exp(-0.5 * ((k - d_abs[..., None]) / PULSE_WIDTH_TAPS) ** 2)
    taps = np.sum(a[..., None] * np.exp(1j * phase)[..., None] * pulse, axis=2)

    sigma = NOISE_SIGMA * pert.noise_floor_scale
    taps = taps + sigma / np.sqrt(2) * (rng.standard_normal(taps.shape) + 1j * rng.standard_normal(taps.shape))
    if pert.interference_level > 0:
        hit = rng.random((n, 2)) < min(1.0, 0.3 * pert.interference_level)
        where = rng.integers(int(DIRECT_TAP) + 1, n_taps - NOISE_TAPS, size=(n, 2))
        burst = 0.1 * pert.interference_level * np.exp(1j * rng.uniform(-np.pi, np.pi, (n, 2)))
        ii, rr = np.nonzero(hit)
        taps[ii, rr, where[ii, rr]] += burst[ii, rr]
    return taps


def _metrics(taps, geom, rng):
    """Antenna metrics derived from the taps; arrays of shape (n, 2)."""
    mag = np.abs(taps)
    n, _, n_taps = mag.shape
    noise_var = np.mean(mag[:, :, n_taps - NOISE_TAPS:] ** 2, axis=2)
    sigma = np.sqrt(noise_var)
    peak_idx = mag.argmax(axis=2)
    peak = np.take_along_axis(mag, peak_idx[..., None], axis=2)[..., 0]
    thr = np.maximum(8.0 * sigma, 0.15 * peak)
    above = mag >= thr[..., None]
    first_idx = above.argmax(axis=2)
    first_mag = np.take_along_axis(mag, first_idx[..., None], axis=2)[..., 0]
    prev_mag = np.take_along_axis(mag, np.maximum(first_idx - 1, 0)[..., None], axis=2)[..., 0]
    denom = first_mag - prev_mag
    frac = np.where((first_idx > 0) & (denom > 0), (first_mag - thr) / np.where(denom > 0, denom, 1.0), 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    fp_ns = np.maximum(first_idx - frac, 0.0) * TAP_PERIOD_NS
    main_ns = peak_idx * TAP_PERIOD_NS
    total = np.sum(mag ** 2, axis=2)
    first_tap = np.take_along_axis(taps, first_idx[..., None], axis=2)[..., 0]

    snr_main = 20 * np.log10(peak / sigma)
    snr_first = 20 * np.log10(first_mag / sigma)
    return {
        "nlos": (snr_main - snr_first > 6.0) & (peak_idx - first_idx >= 3),
        "first_path_index_ns": fp_ns,
        "main_path_index_ns": main_ns,
        "snr_main_db": snr_main,
        "snr_first_db": snr_first,
        "snr_total_db": 10 * np.log10(total / (n_taps * noise_var)),
        "rssi_db": 10 * np.log10(total) - RSSI_OFFSET_DB,
        "cir_main_power": np.minimum(np.rint(peak ** 2 * POWER_SCALE), 2**32 - 1).astype(np.int64),
        "cir_first_path_power": np.minimum(np.rint(first_mag ** 2 * POWER_SCALE), 2**32 - 1).astype(np.int64),
        "noise_variance": noise_var,
        "cfo_ppm": geom.cfo_ppm + 0.05 * rng.standard_normal((n, 2)),
        "aoa_phase_deg": np.rad2deg(np.angle(first_tap)),
        "_first_tap": first_tap,
    }


def _wrap_deg(x):
    w = (np.asarray(x) + 180.0) % 360.0 - 180.0
    return np.where(w == -180.0, 180.0, w)


def synth_frames(profile: PostureProfile, geometry: SubjectGeometry, t, rng: np.random.Generator,
                 perturbation: ScenarioPerturbation | None = None,
                 instance: PostureInstance | None = None,
                 n_taps: int = DEFAULT_N_TAPS) -> list[UwbFrame]:
    """Frames for ``profile`` at times ``t`` (seconds), consuming ``rng``."""
    pert = perturbation or ScenarioPerturbation()
    inst = instance or PostureInstance()
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = t.shape[0]

    delay, amp = _body_paths(profile, geometry, inst, pert, t, rng)
    taps = _render_taps(delay, amp, geometry, pert, n_taps, rng)
    m = _metrics(taps, geometry, rng)

    pdoa = _wrap_deg(np.rad2deg(np.angle(m["_first_tap"][:, 0] * np.conj(m["_first_tap"][:, 1]))
                                - (geometry.rx_phase[0] - geometry.rx_phase[1])))
    azimuth = np.rad2deg(np.arcsin(np.clip(pdoa / 180.0, -1.0, 1.0)))
    body = amp.sum(axis=(1, 2))
    mean_pitch = profile.torso_pitch_deg + inst.pitch_deg if profile.presence else 0.0
    elevation = np.clip(4.0 + 0.15 * mean_pitch + 0.3 * pert.antenna_height_offset_cm
                        + 1.5 * rng.standard_normal(n), -90.0, 90.0)
    distance = np.maximum(100.0 + pert.antenna_separation_cm
                          + 30.0 * (m["first_path_index_ns"].mean(axis=1) - 6.3)
                          + 3.0 * body + 1.0 * rng.standard_normal(n), 0.0)
    fom = np.clip(np.rint(96.0 - 12.0 * body - 8.0 * pert.interference_level
                          + 2.0 * rng.standard_normal(n)), 0, 100).astype(np.int64)

    frames = []
    for i in range(n):
        ranging = RangingRecord(float(distance[i]), float(azimuth[i]), float(elevation[i]),
                                int(fom[i]), float(pdoa[i]))
        metrics = tuple(
            AntennaFrameMetrics(
                nlos=bool(m["nlos"][i, r]),
                first_path_index_ns=float(m["first_path_index_ns"][i, r]),
                main_path_index_ns=float(m["main_path_index_ns"][i, r]),
                snr_main_db=float(m["snr_main_db"][i, r]),
                snr_first_db=float(m["snr_first_db"][i, r]),
                snr_total_db=float(m["snr_total_db"][i, r]),
                rssi_db=float(m["rssi_db"][i, r]),
                cir_main_power=int(m["cir_main_power"][i, r]),
                cir_first_path_power=int(m["cir_first_path_power"][i, r]),
                noise_variance=float(m["noise_variance"][i, r]),
                cfo_ppm=float(m["cfo_ppm"][i, r]),
                aoa_phase_deg=float(_wrap_deg(m["aoa_phase_deg"][i, r])),
            ) for r in range(2))
        caps = (CirCapture(taps[i, 0], RxId.RX1), CirCapture(taps[i, 1], RxId.RX2))
        frames.append(UwbFrame(float(t[i]), ranging, metrics, caps))
    return frames


def synth_frame(profile: PostureProfile, geometry: SubjectGeometry, t: float, rng: np.random.Generator,
                perturbation: ScenarioPerturbation | None = None,
                instance: PostureInstance | None = None,
                n_taps: int = DEFAULT_N_TAPS) -> UwbFrame:
    return synth_frames(profile, geometry, [t], rng, perturbation, instance, n_taps)[0]


def body_path_amplitudes(profile: PostureProfile, geometry: SubjectGeometry, t, rng,
                         perturbation: ScenarioPerturbation | None = None) -> np.ndarray:
    """Body-path amplitudes (n, 2, 4) the renderer would use; for diagnostics."""
    pert = perturbation or ScenarioPerturbation()
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return _body_paths(profile, geometry, PostureInstance(), pert, t, rng)[1]


# ---------------------------------------------------------------------------
# datasets and sessions

def sample_index(config: SimulatorConfig, subject: int, label: int, rep: int) -> int:
    return (subject * 19 + label) * config.samples_per_class + rep


def synth_sample(config: SimulatorConfig, subject: int, label: PostureLabel, rep: int,
                 geometry: SubjectGeometry | None = None) -> Sample:
    geometry = geometry or draw_subject(config.seed, subject)
    rng = make_rng(config.seed, sample_index(config, subject, int(label), rep))
    inst = draw_instance(rng)
    t = np.arange(config.frames_per_sample) * DEFAULT_INTERVAL_S
    frames = synth_frames(PROFILES[label], geometry, t, rng, config.perturbation, inst, config.n_taps)
    return Sample(f"{subject:02d}-{int(label):02d}-{rep:03d}", f"S{subject:02d}", label, tuple(frames),
                  config.perturbation.tags())


def synth_dataset(config: SimulatorConfig, labels: Sequence[PostureLabel] | None = None) -> Dataset:
    """``subjects x 19 x samples_per_class`` samples, ordered by sample id.

    ``labels`` restricts generation to a subset of postures (same values as
    the full dataset for the samples that are kept).
    """
    keep = set(PostureLabel.classes() if labels is None else labels)
    samples = []
    for subject in range(config.subjects):
        geom = draw_subject(config.seed, subject)
        for label in PostureLabel.classes():
            if label not in keep:
                continue
            for rep in range(config.samples_per_class):
                samples.append(synth_sample(config, subject, label, rep, geom))
    return Dataset(tuple(samples), SCHEMA_VERSION, config.n_taps)


@dataclass(frozen=True)
class Session:
    """A contiguous frame stream with per-frame ground truth."""

    frames: tuple[UwbFrame, ...]
    labels: tuple[PostureLabel, ...]

    def __len__(self):
        return len(self.frames)


def synth_ood_session(config: SimulatorConfig, posture_sequence, subject: int = 0) -> Session:
    """Frames at 0.2 s spacing walking through ``(label, duration_s)`` segments.

    ``PostureLabel.Unknown`` segments use :data:`UNKNOWN_PROFILE`.
    """
    geom = draw_subject(config.seed, subject)
    frames: list[UwbFrame] = []
    labels: list[PostureLabel] = []
    start = 0
    for seg, (label, duration) in enumerate(posture_sequence):
        label = PostureLabel(label)
        if not duration > 0:
            raise ValueError("segment durations must be > 0")
        count = int(math.floor(duration / DEFAULT_INTERVAL_S + 0.5))
        rng = make_rng(config.seed, SESSION_STREAM + seg)
        inst = draw_instance(rng)
        profile = UNKNOWN_PROFILE if label is PostureLabel.Unknown else PROFILES[label]
        t = (start + np.arange(count)) * DEFAULT_INTERVAL_S
        frames += synth_frames(profile, geom, t, rng, config.perturbation, inst, config.n_taps)
        labels += [label] * count
        start += count
    return Session(tuple(frames), tuple(labels))


MONITORING_SEQUENCE = (
    (PostureLabel.Hunch, 20.0),
    (PostureLabel.Upright, 20.0),
    (PostureLabel.LeanForward, 20.0),
    (PostureLabel.LateralLeanLeft, 20.0),
    (PostureLabel.RotateHead, 20.0),
)


def with_perturbation(config: SimulatorConfig, **knobs) -> SimulatorConfig:
    return replace(config, perturbation=replace(config.perturbation, **knobs))
