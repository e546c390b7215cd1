"""Command-line entry point: ``python -m cli <command> ...``.

Every command prints key=value lines (or JSON where asked) on stdout and exits
0; failures print a single ``error code=<code> detail=<detail>`` line on
stderr and exit 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from core.config import get_settings, resolve_seed
from core.errors import BmgError, ConfigError, ContractError, DegenerateInputError
from core.logs import get_logger, log_event
from vocoder.archive import archive_read, archive_write
from vocoder.basis import decompose_signal, learn_basis, load_basis, random_basis, save_basis, si_snr, synthesize
from vocoder.bench import run_benchmark
from vocoder.complexity import analyze, format_report
from vocoder.forward import forward_generator, instantiate_weights, load_weights, save_weights
from vocoder.graphs import build_discriminator, build_preset, dump_graph, preset_names
from vocoder.objectives import fit_weights, generator_total
from vocoder.spectral import MelConfig, mel_spectrogram
from vocoder.wav import WavAudio, wav_read, wav_write

logger = get_logger("cli")

MEL_ENTRY = "mel"
WEIGHTS_ENTRY = "weights"


def _emit(**fields) -> None:
    for k, v in fields.items():
        print(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")


def _quality(estimate: np.ndarray, target: np.ndarray) -> Optional[float]:
    """SI-SNR, or None for a target with no energy after mean removal."""
    try:
        return si_snr(estimate, target)
    except DegenerateInputError:
        return None


def _db(value: Optional[float]):
    return "null" if value is None else value


def _seed(args) -> int:
    return resolve_seed(getattr(args, "seed", None))


# ---------------------------
# commands
# ---------------------------

def cmd_synth(args) -> None:
    graph = build_preset(args.preset)
    # basis presets fail here, before any file is read or any layer runs
    if graph.is_basis and not args.basis:
        raise ContractError(f"{graph.preset}: basis preset requires --basis")
    if bool(args.mel) == bool(args.wav_in):
        raise ContractError("synth: give exactly one of --mel or --wav-in")

    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    basis = load_basis(args.basis) if graph.is_basis else None
    weights = load_weights(args.model, graph) if args.model else instantiate_weights(graph, _seed(args))
    timings["load_seconds"] = time.perf_counter() - t0

    cfg = MelConfig()
    target_len: Optional[int] = None
    t0 = time.perf_counter()
    if args.wav_in:
        audio = wav_read(args.wav_in)
        mel = mel_spectrogram(audio.samples, cfg, sample_rate=audio.sample_rate)
        target_len = audio.samples.size
    else:
        entries = archive_read(args.mel)
        if MEL_ENTRY not in entries:
            raise ContractError(f"{args.mel}: archive has no {MEL_ENTRY!r} entry")
        mel = entries[MEL_ENTRY]
    timings["mel_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = forward_generator(graph, weights, mel, basis)
    timings["generator_seconds"] = time.perf_counter() - t0

    y = out.waveform if target_len is None else out.waveform[:target_len]
    t0 = time.perf_counter()
    wav_write(args.out, WavAudio(samples=np.clip(y, -1.0, 1.0), sample_rate=cfg.sample_rate))
    timings["write_seconds"] = time.perf_counter() - t0
    _emit(preset=graph.preset, samples=y.size, duration_seconds=y.size / cfg.sample_rate, **timings)


def cmd_flops(args) -> None:
    names = args.preset or preset_names()
    reports = []
    for name in names:
        graph = build_discriminator(name) if name in ("msd", "mfd") else build_preset(name)
        reports.append(analyze(graph, args.length))
    by_name = {r.preset: r for r in reports}
    ratio = None
    if "hifigan-v1-reference" in by_name and "basis-melgan-large" in by_name:
        ratio = by_name["hifigan-v1-reference"].gflops_per_second / by_name["basis-melgan-large"].gflops_per_second
    if args.json:
        payload = {"presets": [r.summary() for r in reports]}
        if args.layers:
            for item, r in zip(payload["presets"], reports):
                item["layers"] = [row.model_dump() for row in r.layers]
        if ratio is not None:
            payload["reduction_ratio"] = ratio
        print(json.dumps(payload, indent=2))
        return
    for r in reports:
        if args.layers:
            print(format_report(r))
        _emit(preset=r.preset, gflops_per_second=r.gflops_per_second, params_millions=r.params_millions,
              published_gflops=r.reference.gflops, published_params_m=r.reference.params_m)
    if ratio is not None:
        _emit(reduction_ratio=ratio)


def cmd_bench(args) -> None:
    if args.seconds < 1:
        raise ContractError("bench: --seconds must be >= 1")
    threads = args.threads or get_settings().threads
    seed = _seed(args)
    result = run_benchmark(args.preset, seconds=args.seconds, threads=threads, reps=args.reps, seed=seed)
    _emit(
        preset=result.preset,
        rtf=result.rtf,
        wall_seconds=result.wall_seconds,
        audio_seconds=result.audio_seconds,
        spread=result.spread,
        reps=result.reps,
        warmup=result.warmup,
        threads=result.threads,
        platform=result.platform,
    )
    ref = build_preset(args.preset).reference
    if ref.rtf_low is not None:
        _emit(published_rtf_low=ref.rtf_low, published_rtf_high=ref.rtf_high)
    if args.record:
        from api.models.base import create_all
        from api.models.bench import record_result
        from core.db import SessionLocal

        create_all()
        with SessionLocal() as db:
            run = record_result(db, result, seed=seed)
            _emit(run_id=run.id)


def cmd_decompose(args) -> None:
    basis = load_basis(args.basis)
    audio = wav_read(args.wav_in)
    w = decompose_signal(basis, audio.samples, max_iter=args.max_iter, workers=args.workers)
    quality = _quality(synthesize(basis, w)[: audio.samples.size], audio.samples)
    archive_write(args.out_weights, {WEIGHTS_ENTRY: w})
    _emit(frames=w.shape[1], si_snr_db=_db(quality))


def _corpus(directory: str) -> List[np.ndarray]:
    root = Path(directory)
    if not root.is_dir():
        raise ConfigError(f"corpus directory not found: {root}")
    clips = [wav_read(p).samples for p in sorted(root.glob("*.wav"))]
    if not clips:
        raise DegenerateInputError(f"corpus directory {root} has no .wav files")
    return clips


def cmd_learn_basis(args) -> None:
    clips = _corpus(args.corpus_dir)
    learned = learn_basis(
        clips, window_len=args.window_len, n_basis=args.n_basis, hop=args.hop, iters=args.iters, seed=_seed(args)
    )
    save_basis(args.out, learned.basis)
    _emit(clips=len(clips), shape=f"{learned.basis.window_len}x{learned.basis.n_basis}",
          objective_start=learned.objective[0], objective_end=learned.objective[-1])


def cmd_loss(args) -> None:
    ref = wav_read(args.ref)
    est = wav_read(args.est)
    if ref.sample_rate != est.sample_rate:
        raise ContractError(f"loss: sample rates differ, ref={ref.sample_rate} est={est.sample_rate}")
    hop = MelConfig().hop_size
    diff = abs(ref.samples.size - est.samples.size)
    if diff > hop:
        raise ContractError(f"loss: lengths differ by {diff} samples (> {hop})")
    n = min(ref.samples.size, est.samples.size)
    if diff:
        log_event(logger, "loss_trimmed", level=logging.WARNING, ref=ref.samples.size, est=est.samples.size, kept=n)
    msd = mfd = None
    if args.adversarial:
        seed = _seed(args)
        msd = instantiate_weights(build_discriminator("msd"), seed)
        mfd = instantiate_weights(build_discriminator("mfd"), seed + 1)
    breakdown = generator_total(
        ref.samples[:n], est.samples[:n],
        adversarial=args.adversarial, msd_weights=msd, mfd_weights=mfd, conventional=args.conventional,
    )
    print("\n".join(breakdown.as_lines()))


def cmd_init_model(args) -> None:
    graph = build_discriminator(args.preset) if args.preset in ("msd", "mfd") else build_preset(args.preset)
    weights = instantiate_weights(graph, _seed(args))
    save_weights(args.out, weights)
    _emit(preset=graph.preset, params=weights.param_count, tensors=len(weights.tensors))


def cmd_init_basis(args) -> None:
    save_basis(args.out, random_basis(args.window_len, args.n_basis, args.hop, _seed(args)))
    _emit(shape=f"{args.window_len}x{args.n_basis}", hop=args.hop)


def cmd_dump_preset(args) -> None:
    graph = build_discriminator(args.preset) if args.preset in ("msd", "mfd") else build_preset(args.preset)
    print(dump_graph(graph))


def cmd_fit(args) -> None:
    basis = load_basis(args.basis)
    audio = wav_read(args.wav_in)
    n = audio.samples.size
    frames = max(1, math.ceil(max(n - basis.window_len, 0) / basis.hop) + 1)
    rng = np.random.default_rng(_seed(args))
    init = rng.uniform(0.0, 0.1, size=(basis.n_basis, frames))
    result = fit_weights(audio.samples, basis, init, steps=args.steps, waveform_weight=args.waveform_weight)
    y = synthesize(basis, result.weights)[:n]
    wav_write(args.out, WavAudio(samples=np.clip(y, -1.0, 1.0), sample_rate=audio.sample_rate))
    _emit(steps=result.steps, loss=result.trace[-1], si_snr_db=_db(result.si_snr))


def cmd_serve(args) -> None:
    from api.main import serve

    serve(args.host, args.port)


# ---------------------------
# parser
# ---------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bmg", description="Basis-MelGAN engine and benchmark toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, fn: Callable, help_: str, seed: bool = False) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="defaults to BMG_SEED, then 0")
        return sp

    sp = add("synth", cmd_synth, "mel or wav (copy-synthesis) -> wav", seed=True)
    sp.add_argument("--preset", default="basis-melgan-large")
    sp.add_argument("--model", help="weight archive; random seeded weights when omitted")
    sp.add_argument("--basis")
    sp.add_argument("--mel")
    sp.add_argument("--wav-in")
    sp.add_argument("--out", required=True)

    sp = add("flops", cmd_flops, "FLOPs / parameter report")
    sp.add_argument("--preset", action="append", help="repeatable; default all generator presets")
    sp.add_argument("--length", type=int, default=None, help="mel frames (generators) or samples (msd/mfd)")
    sp.add_argument("--layers", action="store_true", help="include per-layer rows")
    sp.add_argument("--json", action="store_true")

    sp = add("bench", cmd_bench, "real-time factor benchmark", seed=True)
    sp.add_argument("--preset", required=True)
    sp.add_argument("--seconds", type=float, default=1.0)
    sp.add_argument("--threads", type=int, default=None, help="defaults to BMG_THREADS, then 1")
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--record", action="store_true", help="persist the result to the database")

    sp = add("decompose", cmd_decompose, "wav -> nonnegative basis weights")
    sp.add_argument("--basis", required=True)
    sp.add_argument("--wav-in", required=True)
    sp.add_argument("--out-weights", required=True)
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument("--workers", type=int, default=1)

    sp = add("learn-basis", cmd_learn_basis, "learn a basis from a directory of wavs", seed=True)
    sp.add_argument("--corpus-dir", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--iters", type=int, default=100)
    sp.add_argument("--window-len", type=int, default=32)
    sp.add_argument("--n-basis", type=int, default=256)
    sp.add_argument("--hop", type=int, default=16)

    sp = add("init-basis", cmd_init_basis, "random unit-norm basis archive", seed=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--window-len", type=int, default=32)
    sp.add_argument("--n-basis", type=int, default=256)
    sp.add_argument("--hop", type=int, default=16)

    sp = add("loss", cmd_loss, "loss breakdown between two wavs", seed=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--est", required=True)
    sp.add_argument("--adversarial", action="store_true")
    sp.add_argument("--conventional", action="store_true", help="generator BCE against label 1")

    sp = add("init-model", cmd_init_model, "random weight archive for a preset", seed=True)
    sp.add_argument("--preset", required=True)
    sp.add_argument("--out", required=True)

    sp = add("dump-preset", cmd_dump_preset, "print a preset graph")
    sp.add_argument("--preset", required=True)

    sp = add("fit", cmd_fit, "copy-synthesis by gradient descent on basis weights", seed=True)
    sp.add_argument("--basis", required=True)
    sp.add_argument("--wav-in", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--waveform-weight", type=float, default=0.0, help="adds a normalized squared-error term")

    sp = add("serve", cmd_serve, "run the HTTP API")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BmgError as exc:
        print(exc.one_line(), file=sys.stderr)
        return 2
    except ValidationError as exc:
        detail = "; ".join(e["msg"] for e in exc.errors())
        print(ContractError(detail).one_line(), file=sys.stderr)
        return 2
    except OSError as exc:
        print(ConfigError(f"{exc.filename or args.command}: {exc.strerror or exc}").one_line(), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
