# tests/test_vad.py
import struct

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import float32_wav, pcm16_wav
from sasv_fuse import state
from sasv_fuse.errors import CodecError, WavLoadError
from sasv_fuse.vad import (
    CodecCommand,
    CodecConfig,
    VadConfig,
    Waveform,
    augment_codec,
    frame_levels,
    read_wav,
    trim_silence,
    write_wav,
)

RATE = 16000


def _speech_in_silence() -> Waveform:
    """One second of silence, a one-second tone, one second of silence."""
    samples = np.zeros(3 * RATE)
    t = np.arange(RATE) / RATE
    samples[RATE : 2 * RATE] = 0.5 * np.sin(2 * np.pi * 440.0 * t)
    return Waveform(samples, RATE)


def test_pcm16_full_scale():
    w = read_wav(pcm16_wav([32767, -32768, 0]))
    assert w.sample_rate == RATE
    assert w.samples.tolist() == pytest.approx([32767 / 32768, -1.0, 0.0])


def test_float_input_is_clipped():
    w = read_wav(float32_wav([0.25, 1.5, -2.0]))
    assert w.samples.tolist() == pytest.approx([0.25, 1.0, -1.0])


def test_multichannel_keeps_the_first_channel():
    w = read_wav(pcm16_wav([16384, -100, -16384, -100], channels=2))
    assert w.samples.tolist() == pytest.approx([0.5, -0.5])


def test_truncated_data_chunk():
    blob = pcm16_wav(np.zeros(100))
    with pytest.raises(WavLoadError, match="expected 200 bytes, got 190"):
        read_wav(blob[:-10])


def test_unsupported_encodings():
    fmt = struct.pack("<HHIIHH", 1, 1, RATE, RATE * 3, 3, 24)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", 6) + bytes(6)
    with pytest.raises(WavLoadError, match="unsupported WAV encoding"):
        read_wav(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(WavLoadError, match="not a RIFF/WAVE"):
        read_wav(b"OggS" + bytes(40))


def test_written_pcm_reads_back():
    w = read_wav(pcm16_wav(np.arange(-50, 50) * 300))
    again = read_wav(write_wav(w))
    assert np.array_equal(again.samples, w.samples), "Quantized samples survive"


def test_trim_keeps_the_tone():
    result = trim_silence(_speech_in_silence())
    assert not result.all_silent
    assert abs(len(result.waveform) - RATE) <= 800, "About one second remains"
    assert result.total_frames == 300
    assert np.max(np.abs(result.waveform.samples)) == pytest.approx(0.5, abs=1e-3)


def test_trim_is_idempotent():
    once = trim_silence(_speech_in_silence()).waveform
    twice = trim_silence(once).waveform
    assert np.array_equal(once.samples, twice.samples)


def test_silence_is_flagged():
    result = trim_silence(Waveform(np.zeros(RATE), RATE))
    assert result.all_silent and len(result.waveform) == 0
    assert np.all(frame_levels(Waveform(np.zeros(800), RATE), VadConfig()) == -240.0)


def test_short_bursts_need_enough_active_frames():
    samples = np.zeros(RATE)
    samples[8000:8020] = 0.5
    click = Waveform(samples, RATE)
    assert not trim_silence(click).all_silent
    assert trim_silence(click, VadConfig(min_active_frames=5)).all_silent


def test_waveform_validation():
    with pytest.raises(WavLoadError):
        Waveform(np.array([0.0, np.nan]), RATE)
    with pytest.raises(WavLoadError):
        Waveform(np.zeros(4), 0)
    with pytest.raises(WavLoadError, match="empty"):
        trim_silence(Waveform(np.zeros(0), RATE))
    with pytest.raises(ValidationError):
        VadConfig(frame_ms=10, hop_ms=20)


def _codecs(encode: str) -> CodecConfig:
    return CodecConfig(
        codecs={
            "copy": CodecCommand(
                encode_command=encode,
                decode_command="cp {in} {out}",
                extension="bin",
            )
        }
    )


def test_codec_round_trip_records_commands(tmp_path):
    source = tmp_path / "a.wav"
    source.write_bytes(pcm16_wav(np.arange(100)))
    decoded = augment_codec(source, "copy", "64k", _codecs("cp {in} {out}"), tmp_path)
    assert decoded.name == "a.copy64k.wav"
    assert decoded.read_bytes() == source.read_bytes()
    commands = state.snapshot()["codec_commands"]
    assert commands[0] == ["cp", str(source), str(tmp_path / "a.copy64k.bin")]
    assert len(commands) == 2


def test_codec_failures(tmp_path):
    source = tmp_path / "a.wav"
    source.write_bytes(pcm16_wav(np.arange(100)))
    with pytest.raises(CodecError, match="not found"):
        augment_codec(source, "copy", "64k", _codecs("no-such-codec-tool {in} {out}"))
    with pytest.raises(CodecError, match="exited with status"):
        augment_codec(source, "copy", "64k", _codecs("false {in}"))
    with pytest.raises(CodecError, match="unknown codec 'opus'"):
        augment_codec(source, "opus", "64k", _codecs("cp {in} {out}"))
