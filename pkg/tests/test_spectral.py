import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import ContractError
from vocoder.spectral import (
    MelConfig,
    StftConfig,
    mel_filterbank,
    mel_spectrogram,
    multi_resolution_configs,
    pqmf_synthesis_filters,
    stft_magnitude,
    stft_magnitude_vjp,
)


def naive_stft_magnitude(y, fft_size, hop, win):
    eff = max(len(y), win)
    ext = np.concatenate([y, np.zeros(eff - len(y))])
    padded = np.pad(ext, win // 2, mode="reflect")
    window = np.array([0.5 - 0.5 * math.cos(2 * math.pi * n / win) for n in range(win)])
    n_frames = math.ceil(eff / hop)
    out = np.zeros((fft_size // 2 + 1, n_frames))
    for f in range(n_frames):
        frame = padded[f * hop : f * hop + win] * window
        for k in range(fft_size // 2 + 1):
            acc = sum(frame[n] * complex(math.cos(2 * math.pi * k * n / fft_size), -math.sin(2 * math.pi * k * n / fft_size))
                      for n in range(win))
            out[k, f] = abs(acc)
    return out


@pytest.mark.parametrize("length", [40, 37, 5])
def test_stft_matches_naive_dft(rng, length):
    y = rng.standard_normal(length)
    cfg = StftConfig(fft_size=16, hop_size=4, win_size=12)
    got = stft_magnitude(y, cfg)
    want = naive_stft_magnitude(y, 16, 4, 12)
    assert got.shape == want.shape == (9, cfg.n_frames(length))
    np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-9)


def test_frame_count_is_ceil_of_length_over_hop():
    cfg = StftConfig(fft_size=1024, hop_size=256, win_size=1024)
    assert stft_magnitude(np.ones(22050), cfg).shape == (513, math.ceil(22050 / 256))


def test_stft_config_validation():
    with pytest.raises(ValidationError):
        StftConfig(fft_size=256, hop_size=64, win_size=512)
    with pytest.raises(ValidationError):
        StftConfig(fft_size=512, hop_size=300, win_size=240)


def test_stft_rejects_empty_and_nan():
    cfg = multi_resolution_configs()[0]
    with pytest.raises(ContractError, match="empty"):
        stft_magnitude(np.zeros(0), cfg)
    with pytest.raises(ContractError, match="non-finite"):
        stft_magnitude(np.array([0.0, np.nan, 1.0]), cfg)


@pytest.mark.parametrize("cfg", multi_resolution_configs() + [StftConfig(fft_size=64, hop_size=8, win_size=40)])
def test_stft_vjp_matches_directional_finite_differences(rng, cfg):
    y = rng.standard_normal(700)
    g = rng.standard_normal((cfg.n_bins, cfg.n_frames(700)))
    mag, vjp = stft_magnitude_vjp(y, cfg)
    grad = vjp(g)
    assert grad.shape == y.shape
    for _ in range(3):
        v = rng.standard_normal(700)
        eps = 1e-4
        fd = (np.sum(g * stft_magnitude(y + eps * v, cfg)) - np.sum(g * stft_magnitude(y - eps * v, cfg))) / (2 * eps)
        assert grad @ v == pytest.approx(fd, rel=1e-3)


def test_joint_shift_by_one_hop_shifts_interior_frames(rng):
    for cfg in multi_resolution_configs():
        hop = cfg.hop_size
        y = rng.standard_normal(6000)
        shifted = np.concatenate([rng.standard_normal(hop), y])
        a = stft_magnitude(y, cfg)
        b = stft_magnitude(shifted, cfg)
        margin = math.ceil(cfg.win_size / hop) + 1
        interior = range(margin, a.shape[1] - margin)
        np.testing.assert_allclose(b[:, [k + 1 for k in interior]], a[:, list(interior)], atol=1e-5)


def test_mel_spectrogram_shape_and_floor():
    cfg = MelConfig()
    mel = mel_spectrogram(np.zeros(22050), cfg)
    assert mel.data.shape == (80, 87)
    assert mel.data.dtype == np.float32
    np.testing.assert_allclose(mel.data, np.log(cfg.log_floor), rtol=1e-6)
    assert mel.hop_size == 256 and mel.sample_rate == 22050


def test_mel_spectrogram_rejects_sample_rate_mismatch():
    with pytest.raises(ContractError, match="sample_rate"):
        mel_spectrogram(np.zeros(1000), MelConfig(), sample_rate=16000)


def test_mel_filterbank_covers_band():
    fb = mel_filterbank(MelConfig())
    assert fb.shape == (80, 513)
    assert (fb >= 0).all()
    # fmax=8 kHz: bins above ~8 kHz carry no weight
    top_bin = int(np.ceil(8000 / (22050 / 1024))) + 1
    assert fb[:, top_bin:].sum() == 0.0


def test_pqmf_filters_shape():
    h = pqmf_synthesis_filters()
    assert h.shape == (4, 63)
    assert np.isfinite(h).all()
    with pytest.raises(ContractError):
        pqmf_synthesis_filters(4, 61)


def test_pqmf_analysis_then_synthesis_is_near_identity():
    from vocoder.forward import pqmf_synthesis
    from vocoder.graphs import PqmfSynthesisLayer

    h = pqmf_synthesis_filters()
    x = np.sin(2 * np.pi * 0.03 * np.arange(2048))
    # analysis filters are the time-reversed synthesis filters
    bands = np.stack([np.convolve(x, hk, mode="same")[::4] for hk in h]).astype(np.float32)
    y = pqmf_synthesis(bands, PqmfSynthesisLayer(name="pqmf"))
    assert y.shape == (1, 2048)
    assert np.abs(y[0, 200:-200] - x[200:-200]).max() < 0.05
