"""
WAV ingestion, magnitude-based silence trimming and codec round trips.

Frame ``j`` analyzes samples ``[j*hop, j*hop + frame)`` (clipped at the end,
RMS over the samples present) and owns samples ``[j*hop, (j+1)*hop)``. The
trimmed waveform is the concatenation of the owned ranges of active frames.
"""

import io
import logging
import shlex
import struct
import subprocess  # nosec B404
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Union

import numpy as np
import soundfile as sf
from pydantic import (
    BaseModel,
    ConfigDict,
    NonNegativeInt,
    PositiveInt,
    model_validator,
)
from typing_extensions import Self

from . import state
from .errors import CodecError, WavLoadError

logger = logging.getLogger(__name__)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
SUPPORTED = {(WAVE_FORMAT_PCM, 16), (WAVE_FORMAT_IEEE_FLOAT, 32)}
SILENCE_DB = -240.0


class VadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    frame_ms: PositiveInt = 25
    hop_ms: PositiveInt = 10
    threshold_db: float = -40.0
    min_active_frames: NonNegativeInt = 1

    @model_validator(mode="after")
    def _hop_within_frame(self) -> Self:
        if self.hop_ms > self.frame_ms:
            raise ValueError("hop_ms must not exceed frame_ms")
        return self


class CodecCommand(BaseModel):
    """Command templates; placeholders ``{in}``, ``{out}``, ``{bitrate}``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    encode_command: str
    decode_command: str
    extension: str


class CodecConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    codecs: Dict[str, CodecCommand] = {
        "mp3": CodecCommand(
            encode_command="ffmpeg -y -loglevel error -i {in} -b:a {bitrate} {out}",
            decode_command="ffmpeg -y -loglevel error -i {in} {out}",
            extension="mp3",
        ),
        "aac": CodecCommand(
            encode_command=(
                "ffmpeg -y -loglevel error -i {in} -c:a aac -b:a {bitrate} {out}"
            ),
            decode_command="ffmpeg -y -loglevel error -i {in} {out}",
            extension="m4a",
        ),
    }


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise WavLoadError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise WavLoadError("waveform holds non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class TrimResult:
    waveform: Waveform
    all_silent: bool
    kept_frames: int
    total_frames: int


def _chunks(blob: bytes) -> Dict[bytes, bytes]:
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavLoadError("not a RIFF/WAVE file")
    chunks: Dict[bytes, bytes] = {}
    offset = 12
    while offset + 8 <= len(blob):
        chunk_id, size = struct.unpack_from("<4sI", blob, offset)
        offset += 8
        available = len(blob) - offset
        if size > available:
            raise WavLoadError(
                f"truncated '{chunk_id.decode('latin-1')}' chunk: "
                f"expected {size} bytes, got {available}"
            )
        chunks.setdefault(chunk_id, blob[offset : offset + size])
        offset += size + (size & 1)
    for required in (b"fmt ", b"data"):
        if required not in chunks:
            raise WavLoadError(f"missing '{required.decode()}' chunk")
    return chunks


def _check_format(fmt: bytes) -> None:
    if len(fmt) < 16:
        raise WavLoadError(f"malformed fmt chunk of {len(fmt)} bytes")
    tag, channels, _, _, _, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if (tag, bits) not in SUPPORTED:
        raise WavLoadError(
            f"unsupported WAV encoding (format tag {tag:#06x}, {bits} bits); "
            "expected 16-bit PCM or 32-bit float"
        )
    if channels < 1:
        raise WavLoadError("fmt chunk declares no channels")


def read_wav(blob: bytes) -> Waveform:
    """Decode a PCM16 / float32 WAV; multichannel input keeps channel 0."""
    _check_format(_chunks(blob)[b"fmt "])
    try:
        data, rate = sf.read(io.BytesIO(blob), dtype="float64", always_2d=True)
    except RuntimeError as e:
        raise WavLoadError(f"cannot decode WAV: {e}") from None
    samples = np.clip(np.ascontiguousarray(data[:, 0]), -1.0, 1.0)
    return Waveform(samples, int(rate))


def load_wav(path: Union[str, Path]) -> Waveform:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise WavLoadError(f"cannot read {path}: {e}") from None
    return read_wav(blob)


def write_wav(w: Waveform, subtype: Literal["PCM_16", "FLOAT"] = "PCM_16") -> bytes:
    buffer = io.BytesIO()
    sf.write(buffer, w.samples, w.sample_rate, subtype=subtype, format="WAV")
    return buffer.getvalue()


def save_wav(
    w: Waveform, path: Union[str, Path], subtype: Literal["PCM_16", "FLOAT"] = "PCM_16"
) -> None:
    Path(path).write_bytes(write_wav(w, subtype))


def frame_levels(w: Waveform, cfg: VadConfig) -> np.ndarray:
    """RMS level in dBFS of every analysis frame."""
    n = len(w)
    frame = max(1, int(round(w.sample_rate * cfg.frame_ms / 1000)))
    hop = max(1, int(round(w.sample_rate * cfg.hop_ms / 1000)))
    n_frames = -(-n // hop)
    squares = np.concatenate([[0.0], np.cumsum(w.samples**2)])
    starts = np.arange(n_frames) * hop
    ends = np.minimum(starts + frame, n)
    energy = np.maximum(squares[ends] - squares[starts], 0.0)
    rms = np.sqrt(energy / (ends - starts))
    levels = np.full(n_frames, SILENCE_DB)
    loud = rms > 0.0
    levels[loud] = np.maximum(20.0 * np.log10(rms[loud]), SILENCE_DB)
    return levels


def _drop_short_runs(active: np.ndarray, min_run: int) -> np.ndarray:
    if min_run <= 1:
        return active
    out = active.copy()
    start = None
    for j, flag in enumerate(np.append(active, False)):
        if flag and start is None:
            start = j
        elif not flag and start is not None:
            if j - start < min_run:
                out[start:j] = False
            start = None
    return out


def trim_silence(w: Waveform, cfg: VadConfig = VadConfig()) -> TrimResult:
    """
    Drop frames below ``cfg.threshold_db``.

    An all-silent input yields an empty waveform with ``all_silent`` set;
    rejecting such samples is left to the caller.
    """
    if len(w) == 0:
        raise WavLoadError("cannot trim an empty waveform")
    hop = max(1, int(round(w.sample_rate * cfg.hop_ms / 1000)))
    levels = frame_levels(w, cfg)
    active = _drop_short_runs(levels >= cfg.threshold_db, cfg.min_active_frames)
    keep = np.zeros(len(w), dtype=bool)
    for j in np.flatnonzero(active):
        keep[j * hop : (j + 1) * hop] = True
    trimmed = Waveform(w.samples[keep].copy(), w.sample_rate)
    kept = int(active.sum())
    logger.info("VAD kept %d of %d frames", kept, active.shape[0])
    return TrimResult(trimmed, kept == 0, kept, int(active.shape[0]))


def _render(template: str, paths: Dict[str, Path], bitrate: str) -> List[str]:
    # split first so substituted paths stay single arguments
    values = {name: str(path) for name, path in paths.items()}
    return [
        token.format(bitrate=bitrate, **values) for token in shlex.split(template)
    ]


def _run(argv: List[str]) -> None:
    logger.info("Running codec command: %s", shlex.join(argv))
    state.record_command(argv)
    try:
        result = subprocess.run(  # nosec B603
            argv, capture_output=True, text=True, check=False
        )
    except FileNotFoundError:
        raise CodecError(f"codec command not found: '{argv[0]}'") from None
    if result.returncode != 0:
        diagnostic = (result.stderr or result.stdout).strip()[-2000:]
        raise CodecError(
            f"'{shlex.join(argv)}' exited with status {result.returncode}: "
            f"{diagnostic}"
        )


def augment_codec(
    in_path: Union[str, Path],
    codec: str,
    bitrate: str,
    cfg: CodecConfig = CodecConfig(),
    out_dir: Union[str, Path, None] = None,
) -> Path:
    """Encode then decode ``in_path``; returns the decoded WAV path."""
    if codec not in cfg.codecs:
        raise CodecError(
            f"unknown codec '{codec}' (configured: {', '.join(sorted(cfg.codecs))})"
        )
    command = cfg.codecs[codec]
    in_path = Path(in_path)
    target = Path(out_dir) if out_dir is not None else in_path.parent
    target.mkdir(parents=True, exist_ok=True)
    encoded = target / f"{in_path.stem}.{codec}{bitrate}.{command.extension}"
    decoded = target / f"{in_path.stem}.{codec}{bitrate}.wav"
    _run(_render(command.encode_command, {"in": in_path, "out": encoded}, bitrate))
    _run(_render(command.decode_command, {"in": encoded, "out": decoded}, bitrate))
    return decoded
