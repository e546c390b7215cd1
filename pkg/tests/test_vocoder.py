import numpy as np
import pytest

from core.errors import ConfigError, ContractError
from vocoder.basis import random_basis, synthesize
from vocoder.complexity import analyze, format_report
from vocoder.dsp import count_flops
from vocoder.forward import (
    count_params,
    forward_generator,
    forward_mfd,
    forward_msd,
    instantiate_weights,
    load_weights,
    save_weights,
    validate_weights,
)
from vocoder.graphs import (
    Preset,
    build_discriminator,
    build_preset,
    dump_graph,
    graph_parameter_shapes,
    preset_names,
)

BASIS_PRESETS = ["basis-melgan-large", "basis-melgan-light"]


@pytest.fixture(scope="module")
def basis():
    return random_basis(32, 256, 16, seed=5)


def _mel(frames, seed=0):
    return np.random.default_rng(seed).normal(-5.0, 2.0, (80, frames)).astype(np.float32)


def test_preset_catalogue():
    assert preset_names() == [p.value for p in Preset]
    assert len(preset_names()) == 7
    with pytest.raises(ConfigError, match="unknown preset"):
        build_preset("waveglow")
    with pytest.raises(ConfigError):
        build_discriminator("mpd")


def test_basis_presets_upsample_twice_by_four():
    for name in BASIS_PRESETS:
        g = build_preset(name)
        assert g.is_basis
        assert g.upsampling_factors == [4, 4]
        assert g.synthesis.hop == 16 and g.synthesis.window_len == 32 and g.synthesis.n_basis == 256
    assert build_preset("melgan-reference").upsampling_factors == [8, 8, 2, 2]
    assert build_preset("hifigan-v1-reference").upsampling_factors == [8, 8, 2, 2]
    assert build_preset("hifigan-v3-reference").upsampling_factors == [8, 8, 4]
    assert build_preset("multiband-melgan-reference").upsampling_factors == [8, 4, 2]


@pytest.mark.parametrize("name", BASIS_PRESETS)
def test_one_mel_frame_gives_sixteen_weight_frames_and_256_samples(name, basis):
    g = build_preset(name)
    w = instantiate_weights(g, seed=3)
    out = forward_generator(g, w, _mel(1), basis)
    assert out.weights.shape == (256, 16)
    assert (out.weights >= 0).all()
    assert out.waveform.shape == (256,)
    np.testing.assert_allclose(out.waveform, synthesize(basis, out.weights)[:256].astype(np.float32), rtol=1e-6)


@pytest.mark.parametrize("name", ["melgan-reference", "hifigan-v2-reference"])
def test_conventional_generators_emit_bounded_waveform(name):
    g = build_preset(name)
    out = forward_generator(g, instantiate_weights(g, seed=1), _mel(3))
    assert out.weights is None
    assert out.waveform.shape == (3 * 256,)
    assert np.abs(out.waveform).max() <= 1.0


def test_multiband_melgan_merges_four_bands():
    g = build_preset("multiband-melgan-reference")
    assert g.layers[-1].kind == "pqmf" and not g.is_basis
    out = forward_generator(g, instantiate_weights(g, seed=2), _mel(3))
    assert out.waveform.shape == (3 * 256,)
    assert np.isfinite(out.waveform).all()
    pqmf = analyze(g, 3).layers[-1]
    # 4 bands x 63 taps per output sample, no bias, no parameters
    assert pqmf.flops == 2 * 4 * 63 * 768
    assert pqmf.params == 0 and pqmf.out_length == 768
    assert "pqmf synthesis subbands=4 taps=62" in dump_graph(g)


def test_zero_transform_yields_relu_of_bias(basis):
    g = build_preset("basis-melgan-light")
    w = instantiate_weights(g, seed=2)
    for key in list(w.tensors):
        if key.startswith("transform.linear"):
            w.tensors[key] = np.zeros_like(w.tensors[key])
    bias = np.linspace(-1.0, 1.0, 256).astype(np.float32)
    w.tensors["transform.linear3.bias"] = bias
    out = forward_generator(g, w, _mel(2), basis)
    np.testing.assert_array_equal(out.weights, np.repeat(np.maximum(bias, 0.0)[:, None], 32, axis=1))


def test_basis_preset_without_basis_fails_before_compute():
    g = build_preset("basis-melgan-light")
    with pytest.raises(ContractError, match="requires a basis"):
        forward_generator(g, instantiate_weights(g), _mel(2))


def test_mel_band_mismatch_is_reported():
    g = build_preset("melgan-reference")
    with pytest.raises(ContractError, match="bands"):
        forward_generator(g, instantiate_weights(g), np.zeros((64, 3), dtype=np.float32))


def test_forward_is_deterministic(basis):
    g = build_preset("basis-melgan-light")
    a = forward_generator(g, instantiate_weights(g, seed=9), _mel(3), basis)
    b = forward_generator(g, instantiate_weights(g, seed=9), _mel(3), basis)
    assert np.array_equal(a.waveform, b.waveform)


def test_validate_weights_reports_missing_and_orphans():
    g = build_preset("melgan-reference")
    w = instantiate_weights(g)
    tensors = dict(w.tensors)
    tensors.pop("conv_pre.bias")
    with pytest.raises(ContractError, match="missing weight tensor conv_pre.bias"):
        validate_weights(g, tensors)
    tensors = dict(w.tensors)
    tensors["stray.weight"] = np.zeros(3, dtype=np.float32)
    with pytest.raises(ContractError, match="orphan"):
        validate_weights(g, tensors)
    tensors = dict(w.tensors)
    tensors["conv_post.weight"] = np.zeros((1, 32, 5), dtype=np.float32)
    with pytest.raises(ContractError, match="conv_post.weight"):
        validate_weights(g, tensors)


def test_weight_archive_round_trip(tmp_path):
    g = build_preset("hifigan-v2-reference")
    w = instantiate_weights(g, seed=4)
    save_weights(tmp_path / "w.bmg", w)
    loaded = load_weights(tmp_path / "w.bmg", g)
    assert set(loaded.tensors) == set(w.tensors)
    assert all(np.array_equal(loaded.tensors[k], w.tensors[k]) for k in w.tensors)


@pytest.mark.parametrize("name,published", [("basis-melgan-large", 15.90), ("basis-melgan-light", 3.30),
                                            ("hifigan-v1-reference", 13.92), ("hifigan-v2-reference", 0.92),
                                            ("hifigan-v3-reference", 1.46),
                                            ("multiband-melgan-reference", 2.53)])
def test_parameter_counts_near_published(name, published):
    g = build_preset(name)
    report = analyze(g)
    assert report.params_millions == pytest.approx(published, rel=0.10)
    assert report.reference.params_m == published


def test_light_is_smaller_than_large():
    assert analyze(build_preset("basis-melgan-light")).total_params < analyze(build_preset("basis-melgan-large")).total_params


@pytest.mark.parametrize("name", preset_names())
def test_analyzer_params_equal_instantiated(name):
    g = build_preset(name)
    w = instantiate_weights(g, seed=0)
    assert count_params(g, w) == analyze(g).total_params
    assert set(w.tensors) == set(graph_parameter_shapes(g))


def test_flops_per_second_of_audio():
    """HiFi-GAN V1 is held to its counted rate, not the published 17.74: the
    published V1 configuration counts to about 52.9 GFLOPs per second of audio
    at 2 FLOPs per multiply-add (DESIGN.md, "GFLOPs unit").
    The basis preset band and the reduction ratio floor are unchanged."""
    hifi = analyze(build_preset("hifigan-v1-reference"))
    large = analyze(build_preset("basis-melgan-large"))
    # 307,052,544 multiply-adds per mel frame, plus bias adds
    assert 52.0 <= hifi.gflops_per_second <= 54.0
    assert 6.8 <= large.gflops_per_second <= 9.2
    assert hifi.gflops_per_second / large.gflops_per_second >= 1.9
    assert hifi.reference.gflops == 17.74 and large.reference.gflops == 7.95


def test_flops_rate_does_not_depend_on_length():
    g = build_preset("basis-melgan-large")
    assert analyze(g, 10).gflops_per_second == pytest.approx(analyze(g, 200).gflops_per_second, rel=1e-12)


@pytest.mark.parametrize("name", preset_names())
def test_instrumented_forward_matches_analyzer(name, basis):
    g = build_preset(name)
    w = instantiate_weights(g, seed=1)
    with count_flops() as counter:
        forward_generator(g, w, _mel(2), basis if g.is_basis else None)
    assert counter.flops == analyze(g, 2).total_flops


@pytest.mark.parametrize("kind,runner", [("msd", forward_msd), ("mfd", forward_mfd)])
def test_discriminators_score_maps_and_flops(kind, runner, rng):
    g = build_discriminator(kind)
    w = instantiate_weights(g, seed=0)
    y = (0.1 * rng.standard_normal(2048)).astype(np.float32)
    with count_flops() as counter:
        maps = runner(y, w, g)
    assert len(maps) == 3
    assert all(m.shape[0] == 1 and m.shape[1] >= 1 for m in maps)
    assert counter.flops == analyze(g, 2048).total_flops
    assert count_params(g, w) == analyze(g).total_params


def test_msd_scales_halve_resolution(rng):
    g = build_discriminator("msd")
    assert [s.pool_times for s in g.subs] == [0, 1, 2]
    maps = forward_msd(rng.standard_normal(4096).astype(np.float32), instantiate_weights(g))
    lengths = [m.shape[1] for m in maps]
    assert lengths[0] > lengths[1] > lengths[2]


def test_report_totals_and_text():
    report = analyze(build_preset("melgan-reference"))
    assert report.total_flops == sum(r.flops for r in report.layers)
    text = format_report(report)
    assert "melgan-reference" in text and "GFLOPs/s" in text


def test_dump_graph_lists_layers():
    text = dump_graph(build_preset("basis-melgan-large"))
    assert "conv_transpose1d 1792->576 k=8 s=4" in text
    assert "basis synthesis window=32 n_basis=256 hop=16" in text
    assert "mfd.0" in dump_graph(build_discriminator("mfd"))
