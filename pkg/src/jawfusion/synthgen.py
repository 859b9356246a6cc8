"""Synthetic labeled multimodal segments.

The field recordings behind the published event statistics are not
distributable, so this module generates stand-in segments whose event class
mix and duration statistics follow the annotated dataset's numbers: grazing
segments interleave bites, chew-bites and grazing-chews; rumination segments
contain only rumination-chews.

Rendering is deliberately parametric rather than physical: each event is an
amplitude-modulated noise burst whose envelope shape, gain and IMU signature
are class-specific (chew-bite is a double burst - a chew followed by a bite),
which preserves the discriminative cue a window classifier must learn.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .events import EventLabel
from .signals import AUDIO_RATE, IMU_RATE, MultimodalRecording, write_recording
from .splits import assign_folds


@dataclass(frozen=True)
class EventClassProfile:
    """Duration statistics and rendering gains for one event class."""

    name: str
    duration_mean: float
    duration_sd: float
    duration_min: float
    duration_max: float
    envelope: str               # single-burst | double-burst | low-energy-burst
    audio_gain: float
    imu_gain: float

    def __post_init__(self):
        if not (self.duration_min <= self.duration_mean <= self.duration_max):
            raise ValueError(f"{self.name}: duration bounds must bracket the mean")
        if self.audio_gain <= 0 or self.imu_gain <= 0:
            raise ValueError(f"{self.name}: gains must be positive")


# Annotated-dataset duration statistics per class (mean, sd, min, max seconds)
# and per-class counts used for the grazing mix.
DEFAULT_PROFILES = {
    "bite": EventClassProfile("bite", 0.330, 0.084, 0.115, 0.926,
                              "single-burst", 1.00, 1.0),
    "chew-bite": EventClassProfile("chew-bite", 0.436, 0.087, 0.187, 0.961,
                                   "double-burst", 0.90, 1.0),
    "grazing-chew": EventClassProfile("grazing-chew", 0.323, 0.066, 0.144, 0.665,
                                      "single-burst", 0.55, 0.8),
    "rumination-chew": EventClassProfile("rumination-chew", 0.341, 0.051, 0.167, 0.806,
                                         "low-energy-burst", 0.18, 0.35),
}

GRAZING_COUNTS = {"bite": 2234, "chew-bite": 6605, "grazing-chew": 6905}


@dataclass
class SynthConfig:
    seed: int = 2024
    n_segments: int = 29
    n_test: int = 5
    n_folds: int = 5
    segment_duration: float = 45.0
    activity_mix: float = 6 / 29            # fraction of rumination segments
    inter_event_gap: tuple[float, float] = (0.25, 0.08)   # mean, sd seconds
    noise_snr_db: float | str = 14.0        # or "clean"
    # free parameters: the source data publishes no IMU amplitude statistics
    profiles: dict[str, EventClassProfile] = field(
        default_factory=lambda: dict(DEFAULT_PROFILES))

    def __post_init__(self):
        if not 0 <= self.activity_mix <= 1:
            raise ValueError("activity_mix must be in [0, 1]")
        if self.noise_snr_db != "clean" and not np.isfinite(self.noise_snr_db):
            raise ValueError("noise_snr_db must be finite or 'clean'")

    def config_hash(self) -> str:
        blob = {k: (asdict(v) if isinstance(v, EventClassProfile) else v)
                for k, v in sorted(self.__dict__.items())
                if k != "profiles"}
        blob["profiles"] = {k: asdict(v) for k, v in sorted(self.profiles.items())}
        return hashlib.sha256(json.dumps(blob, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _truncated_normal(rng: np.random.Generator, mean, sd, lo, hi, size=None):
    return np.clip(rng.normal(mean, sd, size=size), lo, hi)


def sample_event_schedule(config: SynthConfig, activity: str,
                          rng: np.random.Generator) -> list[EventLabel]:
    """Draw a non-overlapping, time-ordered quasi-periodic event schedule."""
    if config.segment_duration <= 1.0:
        raise ValueError("segment_duration must exceed 1 s")
    gap_mean, gap_sd = config.inter_event_gap
    min_dur = min(p.duration_min for p in config.profiles.values())
    if gap_mean + min_dur >= config.segment_duration:
        raise ValueError("infeasible config: gap plus minimum duration exceed the segment")

    if activity == "rumination":
        classes = ["rumination-chew"]
        probs = np.array([1.0])
    else:
        classes = list(GRAZING_COUNTS)
        probs = np.array([GRAZING_COUNTS[c] for c in classes], dtype=float)
        probs /= probs.sum()

    events = []
    t = float(max(0.05, rng.normal(gap_mean, gap_sd)))
    while True:
        cls = classes[rng.choice(len(classes), p=probs)]
        prof = config.profiles[cls]
        dur = float(_truncated_normal(rng, prof.duration_mean, prof.duration_sd,
                                      prof.duration_min, prof.duration_max))
        if t + dur > config.segment_duration - 0.05:
            break
        onset = round(t, 6)
        offset = round(t + dur, 6)
        events.append(EventLabel(cls, onset, offset))
        t = offset + max(0.04, rng.normal(gap_mean, gap_sd))
    return events


def _envelope(kind: str, n: int) -> np.ndarray:
    """Class-shaped amplitude envelope over n samples."""
    tt = np.linspace(0.0, np.pi, n)
    hann = np.sin(tt) ** 2
    if kind == "double-burst":
        # a chew followed by a bite inside one jaw closure
        split = int(n * 0.55)
        first = 0.45 * np.sin(np.linspace(0, np.pi, max(split, 2))) ** 2
        second = np.sin(np.linspace(0, np.pi, max(n - split, 2))) ** 2
        return np.concatenate([first, second])[:n]
    if kind == "low-energy-burst":
        return hann
    return hann ** 2 if kind == "single-burst" else hann


def render_segment(schedule: list[EventLabel], config: SynthConfig,
                   rng: np.random.Generator, segment_id: str = "seg",
                   activity: str = "grazing") -> MultimodalRecording:
    """Render a schedule into audio + IMU with additive noise at the configured SNR."""
    n_audio = int(round(config.segment_duration * AUDIO_RATE))
    n_imu = int(round(config.segment_duration * IMU_RATE))
    audio = np.zeros(n_audio, dtype=np.float64)
    imu = np.zeros((n_imu, 6), dtype=np.float64)

    grazing_boost = {"bite": 2.2, "chew-bite": 2.0, "grazing-chew": 1.6,
                     "rumination-chew": 1.0}
    for ev in schedule:
        prof = config.profiles[ev.label]
        a0, a1 = int(round(ev.onset * AUDIO_RATE)), int(round(ev.offset * AUDIO_RATE))
        if a1 <= a0:
            continue
        env = _envelope(prof.envelope, a1 - a0)
        burst = rng.standard_normal(a1 - a0)
        # light smoothing keeps bursts band-limited-ish without a filter design
        burst = np.convolve(burst, np.ones(3) / 3.0, mode="same")
        audio[a0:a1] += 0.55 * prof.audio_gain * env * burst

        m0, m1 = int(round(ev.onset * IMU_RATE)), int(round(ev.offset * IMU_RATE))
        m1 = max(m1, m0 + 2)
        if m1 > n_imu:
            m0, m1 = n_imu - 2, n_imu
        pulse = np.sin(np.linspace(0, np.pi, m1 - m0))
        g = prof.imu_gain * grazing_boost[ev.label]
        imu[m0:m1, 2] += 3.0 * g * pulse              # az: jaw/head vertical motion
        imu[m0:m1, 0] += 1.2 * g * pulse              # ax: fore-aft component
        imu[m0:m1, 3] += 0.9 * g * pulse              # gx: head pitch rate
        imu[m0:m1, 4] -= 0.5 * g * pulse

    if config.noise_snr_db != "clean":
        snr = float(config.noise_snr_db)
        # reference powers: rendered event signal on each modality
        p_audio = float(np.mean(audio ** 2)) or 1e-4
        p_imu = float(np.mean(imu ** 2)) or 1e-4
        audio += np.sqrt(p_audio) * 10 ** (-snr / 20) * rng.standard_normal(n_audio)
        imu += np.sqrt(p_imu) * 10 ** (-snr / 20) * rng.standard_normal(imu.shape)
        # sensor baselines ride along with the noise model: gravity on az,
        # slow head wander on the remaining channels (raw physical units)
        imu[:, 2] += 9.81
        tt = np.arange(n_imu) / IMU_RATE
        for c, (amp, freq) in enumerate([(0.8, 0.11), (0.6, 0.07), (0.5, 0.13),
                                         (0.25, 0.09), (0.2, 0.17), (0.15, 0.05)]):
            imu[:, c] += amp * np.sin(2 * np.pi * freq * tt + rng.uniform(0, 2 * np.pi))

    audio = np.clip(audio, -1.0, 1.0)
    # quantize exactly like the on-disk format so write/load round-trips
    audio = np.round(audio * 32767.0) / 32767.0
    return MultimodalRecording(
        segment_id=segment_id,
        audio=audio.astype(np.float32),
        imu=imu.astype(np.float32),
        labels=list(schedule),
        activity=activity,
    )


def generate_dataset(config: SynthConfig, out_dir: str | Path) -> dict:
    """Write n_segments in the standard layout plus manifest.json.

    Training segments get a 5-fold assignment with one rumination segment per
    fold; the last n_test segments are held out for test. Returns the manifest.
    """
    out_dir = Path(out_dir)
    seg_dir = out_dir / "segments"
    seg_dir.mkdir(parents=True, exist_ok=True)

    n = config.n_segments
    n_train = n - config.n_test
    n_rum = int(round(config.activity_mix * n))
    n_rum_train = min(n_rum, config.n_folds)
    if n_rum_train < config.n_folds:
        raise ValueError(
            f"config yields {n_rum} rumination segments; need at least "
            f"{config.n_folds} among training segments")

    # rumination ids spread deterministically: n_folds into train, rest into test
    activities = {}
    for i in range(n):
        seg_id = f"seg{i:03d}"
        if i < n_train:
            activities[seg_id] = "rumination" if i < n_rum_train else "grazing"
        else:
            k = i - n_train
            activities[seg_id] = "rumination" if k < n_rum - n_rum_train else "grazing"

    children = np.random.SeedSequence(config.seed).spawn(n)
    segments = []
    for i in range(n):
        seg_id = f"seg{i:03d}"
        rng = np.random.default_rng(children[i])
        activity = activities[seg_id]
        schedule = sample_event_schedule(config, activity, rng)
        rec = render_segment(schedule, config, rng, segment_id=seg_id, activity=activity)
        write_recording(rec, seg_dir / seg_id)
        segments.append({"id": seg_id, "activity": activity})

    train_ids = [s["id"] for s in segments[:n_train]]
    fold_of = assign_folds(train_ids, activities, config.n_folds, seed=config.seed)
    for s in segments:
        if s["id"] in fold_of:
            s["fold"] = fold_of[s["id"]]
        else:
            s["test"] = True

    manifest = {"segments": segments, "seed": config.seed,
                "config_hash": config.config_hash()}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(dataset_dir: str | Path) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.json under {dataset_dir}")
    return json.loads(path.read_text())
