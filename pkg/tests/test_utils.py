# tests/test_utils.py
import math

import sasv_fuse.utils as utils


def test_format_seconds():
    assert utils.format_seconds(0) == "00:00:00", "Should format 0 seconds correctly"
    assert (
        utils.format_seconds(3661) == "01:01:01"
    ), "Should format 3661 seconds correctly"
    assert utils.format_seconds(59.9) == "00:00:59", "Should truncate fractions"


def test_format_percent():
    assert utils.format_percent(0.0123) == "1.23", "Should render two decimals"
    assert utils.format_percent(None) == "-", "Missing values render as a dash"
    assert utils.format_percent(math.nan) == "-", "NaN renders as a dash"


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv(utils.THREADS_ENV, "3")
    assert utils.resolve_threads() == 3, "Should read the environment variable"
    assert utils.resolve_threads(5) == 5, "An explicit value wins"
    assert utils.resolve_threads(0) == 1, "At least one thread"
    monkeypatch.setenv(utils.THREADS_ENV, "many")
    assert utils.resolve_threads() >= 1, "Garbage falls back to the CPU count"


def test_sha256_file(tmp_path):
    path = tmp_path / "blob"
    path.write_bytes(b"abc")
    assert (
        utils.sha256_file(path)
        == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    ), "Should hash the file contents"


def test_finite_or_none():
    assert utils.finite_or_none(1.5) == 1.5
    assert utils.finite_or_none(math.inf) is None, "Infinities are not JSON"
