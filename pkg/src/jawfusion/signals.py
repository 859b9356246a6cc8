"""Load, window, label, and sequence multimodal recordings.

A recording couples a mono 6 kHz waveform with 100 Hz IMU rows and a list of
labeled jaw-movement events. All operations here are pure; nothing mutates a
recording after construction.

On-disk layout of one segment directory::

    <id>/audio.wav   RIFF WAVE, PCM 16-bit, mono, 6000 Hz
    <id>/imu.csv     header "t,ax,ay,az,gx,gy,gz[,mx,my,mz]", rows at 100 Hz
    <id>/labels.tsv  "onset<TAB>offset<TAB>class"
    <id>/meta.json   {"activity": "grazing"|"rumination"}
"""

from __future__ import annotations

import json
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import ACTIVITIES, EventLabel, check_non_overlapping, read_events_tsv, write_events_tsv

AUDIO_RATE = 6000
IMU_RATE = 100
IMU_BASE_COLUMNS = ("ax", "ay", "az", "gx", "gy", "gz")
IMU_MAG_COLUMNS = ("mx", "my", "mz")

# Audio/IMU stream lengths may disagree by at most one hop of the default grid.
RATE_AGREEMENT_TOL = 0.15


class RecordingError(ValueError):
    """Malformed or inconsistent recording data."""


@dataclass
class MultimodalRecording:
    """One annotated segment: synchronized audio + IMU + event labels."""

    segment_id: str
    audio: np.ndarray          # (n_samples,) float32 in [-1, 1]
    imu: np.ndarray            # (n_rows, 6 or 9) float32, raw physical units
    labels: list[EventLabel]
    activity: str

    def __post_init__(self):
        self.audio = np.asarray(self.audio, dtype=np.float32)
        self.imu = np.asarray(self.imu, dtype=np.float32)
        if self.audio.ndim != 1:
            raise RecordingError("audio must be 1-D")
        if self.imu.ndim != 2 or self.imu.shape[1] not in (6, 9):
            raise RecordingError("imu must be (n, 6) or (n, 9)")
        if self.activity not in ACTIVITIES:
            raise RecordingError(f"unknown activity {self.activity!r}")
        audio_dur = len(self.audio) / AUDIO_RATE
        imu_dur = len(self.imu) / IMU_RATE
        if abs(audio_dur - imu_dur) > RATE_AGREEMENT_TOL:
            raise RecordingError(
                f"audio ({audio_dur:.3f}s) and imu ({imu_dur:.3f}s) durations disagree "
                f"by more than {RATE_AGREEMENT_TOL}s"
            )
        for ev in self.labels:
            if ev.offset > self.duration + 1e-9:
                raise RecordingError(
                    f"label {ev.label} [{ev.onset}, {ev.offset}] outside duration {self.duration:.3f}s"
                )
        check_non_overlapping(self.labels)

    @property
    def duration(self) -> float:
        """Common duration covered by both modalities, in seconds."""
        return min(len(self.audio) / AUDIO_RATE, len(self.imu) / IMU_RATE)

    @property
    def accel(self) -> np.ndarray:
        return self.imu[:, 0:3]

    @property
    def gyro(self) -> np.ndarray:
        return self.imu[:, 3:6]

    @property
    def mag(self) -> np.ndarray | None:
        return self.imu[:, 6:9] if self.imu.shape[1] == 9 else None


def magnitude(x, y, z):
    """Euclidean magnitude sqrt(x^2 + y^2 + z^2); accepts scalars or arrays."""
    return np.sqrt(np.asarray(x) ** 2 + np.asarray(y) ** 2 + np.asarray(z) ** 2)


def resample_linear(series: np.ndarray, from_rate: float, to_rate: float) -> np.ndarray:
    """Resample by linear interpolation onto round(n * to/from) points.

    No low-pass filtering; sample i of the output sits at time i/to_rate and
    interpolates the two neighbouring input samples.
    """
    if from_rate <= 0 or to_rate <= 0:
        raise ValueError("rates must be positive")
    series = np.asarray(series)
    n = series.shape[0]
    if n == 0:
        raise ValueError("cannot resample an empty series")
    if from_rate == to_rate:
        return series.copy()
    m = int(round(n * to_rate / from_rate))
    src = np.arange(m) * (from_rate / to_rate)
    src = np.clip(src, 0, n - 1)
    if series.ndim == 1:
        return np.interp(src, np.arange(n), series).astype(series.dtype)
    cols = [np.interp(src, np.arange(n), series[:, c]) for c in range(series.shape[1])]
    return np.stack(cols, axis=1).astype(series.dtype)


@dataclass
class WindowFrame:
    """One multimodal window: per-modality chunks sliced at each native rate."""

    start: float
    chunks: dict[str, np.ndarray]    # e.g. {"audio": (1800, 1), "accel": (30, 3), "gyro": (30, 3)}


def extract_windows(recording: MultimodalRecording, window: float, overlap: float) -> list[WindowFrame]:
    """Slice a recording into overlapping multimodal windows.

    Window i starts at i*hop with hop = window*(1-overlap);
    count = floor((duration - window)/hop) + 1.
    """
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    duration = recording.duration
    if window > duration + 1e-9:
        raise ValueError(f"window {window}s longer than recording ({duration:.3f}s)")
    hop = window * (1.0 - overlap)
    count = int(np.floor((duration - window) / hop + 1e-9)) + 1

    n_audio = int(round(window * AUDIO_RATE))
    n_imu = int(round(window * IMU_RATE))
    frames = []
    for i in range(count):
        start = i * hop
        a0 = int(round(start * AUDIO_RATE))
        m0 = int(round(start * IMU_RATE))
        chunks = {
            "audio": recording.audio[a0:a0 + n_audio].reshape(-1, 1),
            "accel": recording.accel[m0:m0 + n_imu],
            "gyro": recording.gyro[m0:m0 + n_imu],
        }
        if recording.mag is not None:
            chunks["mag"] = recording.mag[m0:m0 + n_imu]
        frames.append(WindowFrame(start=start, chunks=chunks))
    return frames


def label_windows(frames: list[WindowFrame], labels: list[EventLabel], window: float) -> list[int]:
    """Assign a class id to every window.

    A window takes the class of the event with maximal temporal overlap,
    provided that overlap reaches half the window length; otherwise no-event.
    Ties go to the earlier-onset event.
    """
    from .events import CLASS_TO_ID, NO_EVENT_ID

    ordered = sorted(labels, key=lambda e: e.onset)
    out = []
    for frame in frames:
        lo, hi = frame.start, frame.start + window
        best_ov, best_cls = 0.0, None
        for ev in ordered:
            if ev.onset >= hi:
                break
            ov = ev.overlap(lo, hi)
            if ov > best_ov + 1e-12:      # strict: earlier onset wins ties
                best_ov, best_cls = ov, ev.label
        if best_cls is not None and best_ov >= 0.5 * window - 1e-9:
            out.append(CLASS_TO_ID[best_cls])
        else:
            out.append(NO_EVENT_ID)
    return out


@dataclass
class WindowSequence:
    """A fixed-length run of consecutive windows, zero-padded at the tail.

    ``chunks`` maps modality -> (L, len, ch); padded positions hold zeros,
    carry target no-event, and are masked out.
    """

    chunks: dict[str, np.ndarray]
    targets: np.ndarray          # (L,) int
    mask: np.ndarray             # (L,) bool
    starts: np.ndarray           # (L,) float, padded entries -1
    segment_id: str = ""

    @property
    def length(self) -> int:
        return len(self.targets)


def build_sequences(frames: list[WindowFrame], targets: list[int], L: int,
                    segment_id: str = "") -> list[WindowSequence]:
    """Partition a labeled window stream into consecutive runs of L windows.

    The final short run is zero-padded with mask=False.
    """
    from .events import NO_EVENT_ID

    if L < 1:
        raise ValueError("L must be >= 1")
    if not frames:
        raise ValueError("empty window stream")
    if len(frames) != len(targets):
        raise ValueError("frames and targets length mismatch")

    keys = list(frames[0].chunks.keys())
    sequences = []
    for begin in range(0, len(frames), L):
        run = frames[begin:begin + L]
        run_targets = targets[begin:begin + L]
        n_real = len(run)
        chunks = {}
        for key in keys:
            shape = run[0].chunks[key].shape
            buf = np.zeros((L,) + shape, dtype=np.float32)
            for j, fr in enumerate(run):
                buf[j] = fr.chunks[key]
            chunks[key] = buf
        tg = np.full(L, NO_EVENT_ID, dtype=np.int64)
        tg[:n_real] = run_targets
        mask = np.zeros(L, dtype=bool)
        mask[:n_real] = True
        starts = np.full(L, -1.0)
        starts[:n_real] = [fr.start for fr in run]
        sequences.append(WindowSequence(chunks=chunks, targets=tg, mask=mask,
                                        starts=starts, segment_id=segment_id))
    return sequences


# ---------------------------------------------------------------------------
# segment directory I/O
# ---------------------------------------------------------------------------

def write_recording(recording: MultimodalRecording, directory: str | Path) -> Path:
    """Write one segment in the standard on-disk layout. Returns the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    pcm = np.clip(np.round(recording.audio * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(directory / "audio.wav"), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(AUDIO_RATE)
        wf.writeframes(pcm.tobytes())

    cols = IMU_BASE_COLUMNS + (IMU_MAG_COLUMNS if recording.imu.shape[1] == 9 else ())
    lines = ["t," + ",".join(cols)]
    t = np.arange(len(recording.imu)) / IMU_RATE
    for i, row in enumerate(recording.imu):
        # %.9g round-trips float32 exactly through text
        lines.append(f"{t[i]:.4f}," + ",".join(f"{v:.9g}" for v in row))
    (directory / "imu.csv").write_text("\n".join(lines) + "\n")

    write_events_tsv(recording.labels, directory / "labels.tsv")
    (directory / "meta.json").write_text(
        json.dumps({"activity": recording.activity}, sort_keys=True) + "\n")
    return directory


def _read_wav(path: Path) -> np.ndarray:
    try:
        wf = wave.open(str(path), "rb")
    except (OSError, wave.Error) as exc:
        raise RecordingError(f"cannot read {path}: {exc}") from exc
    with wf:
        if wf.getframerate() != AUDIO_RATE:
            raise RecordingError(
                f"{path}: sample rate {wf.getframerate()} Hz, expected {AUDIO_RATE} Hz")
        if wf.getnchannels() != 1:
            raise RecordingError(f"{path}: expected mono audio")
        if wf.getsampwidth() != 2:
            raise RecordingError(f"{path}: expected 16-bit PCM")
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return (pcm.astype(np.float32) / 32767.0).clip(-1.0, 1.0)


def _read_imu_csv(path: Path) -> np.ndarray:
    text = path.read_text().strip().splitlines()
    if not text:
        raise RecordingError(f"{path}: empty file")
    header = text[0].strip().split(",")
    if header[:7] != ["t"] + list(IMU_BASE_COLUMNS):
        raise RecordingError(f"{path}: unexpected header {text[0]!r}")
    n_cols = len(header)
    if n_cols not in (7, 10):
        raise RecordingError(f"{path}: expected 7 or 10 columns, got {n_cols}")
    rows = []
    times = []
    for lineno, line in enumerate(text[1:], start=2):
        parts = line.split(",")
        if len(parts) != n_cols:
            raise RecordingError(f"{path}:{lineno}: expected {n_cols} fields")
        try:
            times.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise RecordingError(f"{path}:{lineno}: non-numeric value") from exc
    if len(times) >= 2:
        dt = np.diff(times)
        if not np.allclose(dt, 1.0 / IMU_RATE, atol=1e-4):
            raise RecordingError(f"{path}: timestamps not at {IMU_RATE} Hz")
    return np.asarray(rows, dtype=np.float32)


def load_recording(directory: str | Path) -> MultimodalRecording:
    """Load and validate one segment directory."""
    directory = Path(directory)
    for name in ("audio.wav", "imu.csv", "labels.tsv", "meta.json"):
        if not (directory / name).exists():
            raise RecordingError(f"missing file {directory / name}")
    audio = _read_wav(directory / "audio.wav")
    imu = _read_imu_csv(directory / "imu.csv")
    try:
        labels = read_events_tsv(directory / "labels.tsv")
    except ValueError as exc:
        raise RecordingError(f"{directory / 'labels.tsv'}: {exc}") from exc
    meta = json.loads((directory / "meta.json").read_text())
    activity = meta.get("activity")
    return MultimodalRecording(
        segment_id=directory.name, audio=audio, imu=imu,
        labels=labels, activity=activity,
    )
