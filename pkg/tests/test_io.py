import struct

import numpy as np
import pytest
import soundfile as sf
from pydantic import ValidationError

from core.errors import ArchiveError, AudioFormatError
from vocoder.archive import MAGIC, archive_read, archive_write, decode_archive, encode_archive
from vocoder.wav import WavAudio, quantize, wav_read, wav_write


def test_wav_round_trip_within_one_lsb(tmp_path, rng):
    samples = np.clip(rng.standard_normal(22050) * 0.3, -1.0, 1.0)
    path = tmp_path / "x.wav"
    wav_write(path, WavAudio(samples=samples, sample_rate=22050))
    back = wav_read(path)
    assert back.sample_rate == 22050
    assert back.samples.shape == (22050,)
    assert np.max(np.abs(back.samples - samples)) <= 1.0 / 32768
    assert back.seconds == pytest.approx(1.0)


def test_quantize_rounds_half_away_from_zero_and_saturates():
    got = quantize(np.array([0.5 / 32768, -0.5 / 32768, 1.0, -1.0, 2.0, 1.5 / 32768]))
    np.testing.assert_array_equal(got, np.array([1, -1, 32767, -32768, 32767, 2], dtype=np.int16))


def test_empty_wav_reads_back_empty(tmp_path):
    path = tmp_path / "empty.wav"
    wav_write(path, WavAudio(samples=np.zeros(0), sample_rate=22050))
    assert wav_read(path).samples.size == 0


def test_stereo_wav_is_rejected(tmp_path):
    path = tmp_path / "stereo.wav"
    sf.write(str(path), np.zeros((100, 2), dtype=np.int16), 22050, subtype="PCM_16")
    with pytest.raises(AudioFormatError, match="channels"):
        wav_read(path)


def test_float_wav_is_rejected(tmp_path):
    path = tmp_path / "float.wav"
    sf.write(str(path), np.zeros(100, dtype=np.float32), 22050, subtype="FLOAT")
    with pytest.raises(AudioFormatError, match="PCM_16"):
        wav_read(path)


def test_malformed_header_and_missing_file(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"RIFF\x00\x00not a wave file at all")
    with pytest.raises(AudioFormatError, match="malformed"):
        wav_read(path)
    with pytest.raises(AudioFormatError, match="not found"):
        wav_read(tmp_path / "nope.wav")


def test_wav_audio_rejects_multichannel_and_nan():
    with pytest.raises(ValidationError):
        WavAudio(samples=np.zeros((10, 2)))
    with pytest.raises(ValidationError):
        WavAudio(samples=np.array([0.0, np.inf]))


def test_archive_round_trip_is_bit_exact(tmp_path, rng):
    entries = {
        "mel": rng.standard_normal((80, 7)).astype(np.float32),
        "scalar": np.float32(3.25),
        "bias": np.array([np.float32(-0.0), np.float32(1e-38)]),
    }
    path = tmp_path / "a.bmg"
    archive_write(path, entries)
    back = archive_read(path)
    assert list(back) == list(entries)
    for name, value in entries.items():
        want = np.asarray(value, dtype=np.float32)
        assert back[name].shape == want.shape
        assert back[name].tobytes() == want.tobytes()


def test_archive_layout_header():
    buf = encode_archive([("w", np.ones((2, 3), dtype=np.float32))])
    assert buf[:4] == MAGIC
    assert struct.unpack("<I", buf[4:8]) == (1,)
    assert len(buf) == 4 + 4 + 4 + 1 + 2 + 2 * 4 + 6 * 4


def test_truncated_archive_names_expected_and_actual_size():
    buf = encode_archive({"w": np.ones(10, dtype=np.float32)})
    cut = buf[:-3]
    with pytest.raises(ArchiveError, match=f"expected {len(buf)} bytes, got {len(cut)}"):
        decode_archive(cut)


def test_archive_rejects_duplicates_bad_magic_and_trailing_bytes():
    with pytest.raises(ArchiveError, match="duplicate"):
        encode_archive([("a", np.zeros(1)), ("a", np.zeros(2))])
    with pytest.raises(ArchiveError, match="bad magic"):
        decode_archive(b"NOPE" + b"\x00" * 4)
    good = encode_archive({"a": np.zeros(2)})
    with pytest.raises(ArchiveError, match="trailing"):
        decode_archive(good + b"\x00")
    with pytest.raises(ArchiveError, match="not found"):
        archive_read("/nonexistent/archive.bmg")
