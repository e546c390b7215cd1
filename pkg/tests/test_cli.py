import json

import numpy as np
import pytest

import cli
from vocoder.archive import archive_read, archive_write
from vocoder.basis import load_basis
from vocoder.wav import WavAudio, wav_read, wav_write


def _kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines() if "=" in line)


@pytest.fixture
def basis_path(tmp_path):
    path = tmp_path / "basis.bmg"
    assert cli.main(["init-basis", "--out", str(path), "--seed", "3"]) == 0
    return path


@pytest.fixture
def speech_like(tmp_path, rng):
    t = np.arange(22050) / 22050
    y = 0.3 * np.sin(2 * np.pi * 140 * t) * (1 + 0.5 * np.sin(2 * np.pi * 3 * t)) + 0.01 * rng.standard_normal(t.size)
    path = tmp_path / "in.wav"
    wav_write(path, WavAudio(samples=y))
    return path


def test_flops_json_reports_reduction(capsys):
    assert cli.main(["flops", "--preset", "hifigan-v1-reference", "--preset", "basis-melgan-large", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    names = [p["preset"] for p in payload["presets"]]
    assert names == ["hifigan-v1-reference", "basis-melgan-large"]
    assert payload["reduction_ratio"] >= 1.9
    large = payload["presets"][1]
    assert 6.8 <= large["gflops_per_second"] <= 9.2
    assert large["reference"]["gflops"] == 7.95


def test_flops_text_with_layers_for_discriminator(capsys):
    assert cli.main(["flops", "--preset", "msd", "--layers", "--length", "4096"]) == 0
    out = capsys.readouterr().out
    assert "msd.0.layers.0" in out
    assert "reduction_ratio" not in out


def test_synth_copy_synthesis_keeps_input_length(tmp_path, basis_path, speech_like, capsys):
    out = tmp_path / "out.wav"
    args = ["synth", "--preset", "basis-melgan-light", "--basis", str(basis_path), "--wav-in", str(speech_like),
            "--out", str(out), "--seed", "1"]
    assert cli.main(args) == 0
    fields = _kv(capsys.readouterr().out)
    assert fields["samples"] == "22050"
    audio = wav_read(out)
    assert audio.samples.size == 22050
    assert audio.sample_rate == 22050
    first = out.read_bytes()
    assert cli.main(args) == 0
    assert out.read_bytes() == first


def test_synth_from_mel_archive(tmp_path, rng):
    mel_path = tmp_path / "mel.bmg"
    archive_write(mel_path, {"mel": rng.normal(-5, 2, (80, 4)).astype(np.float32)})
    out = tmp_path / "m.wav"
    assert cli.main(["synth", "--preset", "melgan-reference", "--mel", str(mel_path), "--out", str(out)]) == 0
    assert wav_read(out).samples.size == 4 * 256


def test_synth_basis_preset_without_basis_is_one_error_line(tmp_path, capsys):
    out = tmp_path / "never.wav"
    code = cli.main(["synth", "--preset", "basis-melgan-large", "--mel", str(tmp_path / "missing.bmg"), "--out", str(out)])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err == ["error code=contract detail=basis-melgan-large: basis preset requires --basis"]
    assert not out.exists()


def test_unwritable_output_is_one_error_line(tmp_path, speech_like, capsys):
    out = tmp_path / "missing_dir" / "o.wav"
    code = cli.main(["synth", "--preset", "hifigan-v3-reference", "--wav-in", str(speech_like), "--out", str(out)])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith("error code=audio_format detail=")
    assert "missing_dir" in err[0]


def test_unwritable_weights_archive_is_one_error_line(tmp_path, basis_path, speech_like, capsys):
    out = tmp_path / "missing_dir" / "w.bmg"
    code = cli.main(["decompose", "--basis", str(basis_path), "--wav-in", str(speech_like),
                     "--out-weights", str(out), "--max-iter", "5"])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith("error code=archive detail=")


def test_unknown_preset_exits_2(tmp_path, capsys):
    assert cli.main(["init-model", "--preset", "wavenet", "--out", str(tmp_path / "w.bmg")]) == 2
    assert capsys.readouterr().err.startswith("error code=config detail=unknown preset")


def test_loss_reports_breakdown_keys(tmp_path, speech_like, rng, capsys):
    ref = wav_read(speech_like).samples
    est_path = tmp_path / "est.wav"
    wav_write(est_path, WavAudio(samples=0.8 * ref + 0.01 * rng.standard_normal(ref.size)))
    assert cli.main(["loss", "--ref", str(speech_like), "--est", str(est_path)]) == 0
    fields = _kv(capsys.readouterr().out)
    assert list(fields) == ["sc", "mg", "mr_stft", "total"]
    assert float(fields["total"]) == pytest.approx(float(fields["sc"]) + float(fields["mg"]), rel=1e-6)


def test_loss_trims_small_length_mismatch_and_rejects_large(tmp_path, speech_like):
    ref = wav_read(speech_like).samples
    short = tmp_path / "short.wav"
    wav_write(short, WavAudio(samples=ref[:-100]))
    assert cli.main(["loss", "--ref", str(speech_like), "--est", str(short)]) == 0
    much_shorter = tmp_path / "much.wav"
    wav_write(much_shorter, WavAudio(samples=ref[:-300]))
    assert cli.main(["loss", "--ref", str(speech_like), "--est", str(much_shorter)]) == 2


def test_adversarial_loss_adds_discriminator_terms(tmp_path, rng, capsys):
    y = 0.2 * rng.standard_normal(4096)
    ref, est = tmp_path / "r.wav", tmp_path / "e.wav"
    wav_write(ref, WavAudio(samples=y))
    wav_write(est, WavAudio(samples=0.5 * y))
    assert cli.main(["loss", "--ref", str(ref), "--est", str(est), "--adversarial"]) == 0
    fields = _kv(capsys.readouterr().out)
    assert {"adv_s", "adv_f"} <= set(fields)
    assert "weight_loss" not in fields


def test_learn_basis_from_directory(tmp_path, rng, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(10):
        wav_write(corpus / f"clip{i:02d}.wav", WavAudio(samples=0.2 * rng.standard_normal(2048)))
    out = tmp_path / "learned.bmg"
    assert cli.main(["learn-basis", "--corpus-dir", str(corpus), "--out", str(out), "--iters", "3"]) == 0
    fields = _kv(capsys.readouterr().out)
    assert fields["clips"] == "10"
    assert float(fields["objective_end"]) <= float(fields["objective_start"])
    assert load_basis(out).data.shape == (32, 256)


def test_learn_basis_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert cli.main(["learn-basis", "--corpus-dir", str(tmp_path / "empty"), "--out", str(tmp_path / "b.bmg")]) == 2
    assert "code=degenerate_input" in capsys.readouterr().err


def test_decompose_writes_weights(tmp_path, basis_path, speech_like, capsys):
    out = tmp_path / "w.bmg"
    assert cli.main(["decompose", "--basis", str(basis_path), "--wav-in", str(speech_like),
                     "--out-weights", str(out), "--max-iter", "300"]) == 0
    fields = _kv(capsys.readouterr().out)
    w = archive_read(out)["weights"]
    assert w.shape == (256, int(fields["frames"]))
    assert (w >= 0).all()
    assert float(fields["si_snr_db"]) > 10.0


def test_fit_runs_a_few_steps(tmp_path, basis_path, rng, capsys):
    src = tmp_path / "short.wav"
    wav_write(src, WavAudio(samples=0.2 * rng.standard_normal(512)))
    out = tmp_path / "fit.wav"
    assert cli.main(["fit", "--basis", str(basis_path), "--wav-in", str(src), "--out", str(out), "--steps", "5"]) == 0
    fields = _kv(capsys.readouterr().out)
    assert int(fields["steps"]) <= 5
    assert wav_read(out).samples.size == 512


def test_init_model_and_dump_preset(tmp_path, capsys):
    out = tmp_path / "model.bmg"
    assert cli.main(["init-model", "--preset", "hifigan-v3-reference", "--out", str(out)]) == 0
    fields = _kv(capsys.readouterr().out)
    assert int(fields["tensors"]) == len(archive_read(out))
    assert cli.main(["dump-preset", "--preset", "basis-melgan-light"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("preset basis-melgan-light")
    assert "transform 128->128->128->norm->256" in text


@pytest.mark.slow
def test_bench_prints_rtf(capsys):
    assert cli.main(["bench", "--preset", "basis-melgan-light", "--seconds", "1", "--reps", "3"]) == 0
    fields = _kv(capsys.readouterr().out)
    assert float(fields["rtf"]) > 0
    assert fields["reps"] == "3" and fields["warmup"] == "1"
    assert fields["published_rtf_low"] == "0.146"


def test_loss_of_identical_files_is_zero(speech_like, capsys):
    assert cli.main(["loss", "--ref", str(speech_like), "--est", str(speech_like)]) == 0
    fields = _kv(capsys.readouterr().out)
    assert float(fields["mr_stft"]) == 0.0
    assert float(fields["total"]) == 0.0


def test_decompose_silence_writes_zero_weights(tmp_path, basis_path, capsys):
    silent = tmp_path / "silent.wav"
    wav_write(silent, WavAudio(samples=np.zeros(1024)))
    out = tmp_path / "w.bmg"
    assert cli.main(["decompose", "--basis", str(basis_path), "--wav-in", str(silent), "--out-weights", str(out)]) == 0
    fields = _kv(capsys.readouterr().out)
    assert fields["si_snr_db"] == "null"
    assert not archive_read(out)["weights"].any()


def test_fit_of_constant_signal_reports_null_si_snr(tmp_path, basis_path, capsys):
    dc = tmp_path / "dc.wav"
    wav_write(dc, WavAudio(samples=np.full(512, 0.25)))
    out = tmp_path / "fit.wav"
    assert cli.main(["fit", "--basis", str(basis_path), "--wav-in", str(dc), "--out", str(out), "--steps", "3"]) == 0
    assert _kv(capsys.readouterr().out)["si_snr_db"] == "null"
    assert out.exists()
