# vocoder/objectives.py
"""Generator and discriminator losses with analytic gradients, plus
copy-synthesis by projected gradient descent on the spectral losses.

Gradients are taken with respect to signals or basis weights only; network
parameters are never differentiated.
"""
from __future__ import annotations

from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from core.errors import ContractError, DegenerateInputError, DivergenceError, expect
from core.logs import get_logger, log_event
from vocoder.basis import BasisMatrix, si_snr, synthesis_length, synthesize, synthesize_adjoint
from vocoder.forward import ModelWeights, forward_mfd, forward_msd
from vocoder.graphs import DiscriminatorGraph, build_discriminator
from vocoder.spectral import LOG_FLOOR, StftConfig, multi_resolution_configs, stft_magnitude, stft_magnitude_vjp

logger = get_logger(__name__)

DIVERGENCE_LIMIT = 1e6

# short names used on the command line
REPORT_KEYS = {"sc_loss": "sc", "mag_loss": "mg", "mr_stft_loss": "mr_stft"}


class StftLoss(NamedTuple):
    sc: float
    mag: float
    grad: np.ndarray  # d(sc + mag) / d(estimate)

    @property
    def total(self) -> float:
        return self.sc + self.mag


class LossBreakdown(BaseModel):
    """Disabled components are None; ``total`` is the plain sum of the rest."""

    model_config = ConfigDict(frozen=True)

    weight_loss: Optional[float] = None
    sc_loss: float
    mag_loss: float
    mr_stft_loss: float
    adv_s: Optional[float] = None
    adv_f: Optional[float] = None
    total: float

    @model_validator(mode="after")
    def _check_total(self) -> "LossBreakdown":
        if self.total != _sum_components(self.weight_loss, self.sc_loss, self.mag_loss, self.adv_s, self.adv_f):
            raise ValueError("total must equal the sum of the enabled components")
        return self

    def as_lines(self) -> List[str]:
        return [f"{REPORT_KEYS.get(k, k)}={v:.9g}" for k, v in self.model_dump(exclude_none=True).items()]


def _sum_components(*parts: Optional[float]) -> float:
    total = 0.0
    for p in parts:
        if p is not None:
            total += p
    return total


# ---------------------------
# weight and spectral losses
# ---------------------------

def weight_loss(target: np.ndarray, estimate: np.ndarray):
    """Mean absolute error and its subgradient ``sign(estimate - target) / n``."""
    t = np.asarray(target, dtype=np.float64)
    e = np.asarray(estimate, dtype=np.float64)
    expect(t.shape == e.shape, f"weight_loss: shape mismatch, target={t.shape} estimate={e.shape}")
    expect(t.size >= 1, "weight_loss: empty weights")
    diff = e - t
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def _equal_length(y: np.ndarray, y_hat: np.ndarray, op: str):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    expect(y.shape == y_hat.shape, f"{op}: length mismatch, reference={y.shape} estimate={y_hat.shape}")
    return y, y_hat


def stft_loss_single(y: np.ndarray, y_hat: np.ndarray, cfg: StftConfig) -> StftLoss:
    """Spectral convergence and log-magnitude L1 at one resolution."""
    y, y_hat = _equal_length(y, y_hat, "stft_loss_single")
    ref = stft_magnitude(y, cfg)
    ref_norm = float(np.linalg.norm(ref))
    if ref_norm == 0.0:
        raise DegenerateInputError("stft_loss_single: reference signal is all zero")
    est, vjp = stft_magnitude_vjp(y_hat, cfg)

    diff = est - ref
    diff_norm = float(np.linalg.norm(diff))
    sc = diff_norm / ref_norm
    g_sc = diff / (diff_norm * ref_norm) if diff_norm > 0.0 else np.zeros_like(est)

    log_ref = np.log(np.maximum(ref, LOG_FLOOR))
    log_est = np.log(np.maximum(est, LOG_FLOOR))
    mag = float(np.mean(np.abs(log_est - log_ref)))
    active = est > LOG_FLOOR
    g_mag = np.zeros_like(est)
    g_mag[active] = np.sign(log_est - log_ref)[active] / (est.size * est[active])

    return StftLoss(sc=sc, mag=mag, grad=vjp(g_sc + g_mag))


def mr_stft_loss(y: np.ndarray, y_hat: np.ndarray, configs: Optional[Sequence[StftConfig]] = None) -> StftLoss:
    configs = list(configs) if configs is not None else multi_resolution_configs()
    expect(len(configs) >= 1, "mr_stft_loss: need at least one resolution")
    parts = [stft_loss_single(y, y_hat, cfg) for cfg in configs]
    m = len(parts)
    return StftLoss(
        sc=sum(p.sc for p in parts) / m,
        mag=sum(p.mag for p in parts) / m,
        grad=sum(p.grad for p in parts) / m,
    )


# ---------------------------
# adversarial losses
# ---------------------------

def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def bce_with_logits(logits: np.ndarray, target: np.ndarray) -> float:
    """Mean of ``-(t log s(z) + (1 - t) log(1 - s(z)))``, written in a stable form."""
    z = np.asarray(logits, dtype=np.float64)
    t = np.broadcast_to(np.asarray(target, dtype=np.float64), z.shape)
    expect(z.size >= 1, "bce_with_logits: empty score map")
    expect(bool(((t >= 0) & (t <= 1)).all()), "bce_with_logits: targets must lie in [0, 1]")
    return float(np.mean(np.logaddexp(0.0, z) - t * z))


def generator_adversarial(real_maps: Sequence[np.ndarray], fake_maps: Sequence[np.ndarray], conventional: bool = False) -> float:
    """Mean over sub-discriminators of BCE(s(D(fake)), target).

    The target is s(D(real)) by default, or 1 with ``conventional=True``.
    """
    expect(len(real_maps) == len(fake_maps) >= 1, "generator_adversarial: score map count mismatch")
    total = 0.0
    for real, fake in zip(real_maps, fake_maps):
        expect(np.shape(real) == np.shape(fake), f"generator_adversarial: score map shapes {np.shape(real)} != {np.shape(fake)}")
        total += bce_with_logits(fake, 1.0 if conventional else sigmoid(real))
    return total / len(fake_maps)


def _run_discriminator(weights: ModelWeights, waveform: np.ndarray, graph: Optional[DiscriminatorGraph]) -> List[np.ndarray]:
    graph = graph or build_discriminator(weights.preset)
    runner = forward_msd if graph.preset == "msd" else forward_mfd
    return runner(waveform, weights, graph)


def adversarial_losses(
    y: np.ndarray,
    y_hat: np.ndarray,
    msd_weights: ModelWeights,
    mfd_weights: ModelWeights,
    conventional: bool = False,
):
    """(adv_s, adv_f) from the waveform and spectrogram discriminators."""
    y, y_hat = _equal_length(y, y_hat, "adversarial_losses")
    out = []
    for weights in (msd_weights, mfd_weights):
        real = _run_discriminator(weights, y, None)
        fake = _run_discriminator(weights, y_hat, None)
        out.append(generator_adversarial(real, fake, conventional))
    return out[0], out[1]


def discriminator_losses(
    y: np.ndarray, y_hat: np.ndarray, weights: ModelWeights, graph: Optional[DiscriminatorGraph] = None
):
    """(real, fake): BCE against label 1 on y and label 0 on y_hat, averaged over sub-discriminators."""
    y, y_hat = _equal_length(y, y_hat, "discriminator_losses")
    real = _run_discriminator(weights, y, graph)
    fake = _run_discriminator(weights, y_hat, graph)
    n = len(real)
    return (
        sum(bce_with_logits(m, 1.0) for m in real) / n,
        sum(bce_with_logits(m, 0.0) for m in fake) / n,
    )


def generator_total(
    y: np.ndarray,
    y_hat: np.ndarray,
    w: Optional[np.ndarray] = None,
    w_hat: Optional[np.ndarray] = None,
    adversarial: bool = False,
    msd_weights: Optional[ModelWeights] = None,
    mfd_weights: Optional[ModelWeights] = None,
    conventional: bool = False,
) -> LossBreakdown:
    """Pre-adversarial: weight loss (when weights are given) + multi-resolution STFT loss.
    Adversarial: multi-resolution STFT loss + both adversarial terms, never the weight loss.
    """
    stft = mr_stft_loss(y, y_hat)
    parts = {"sc_loss": stft.sc, "mag_loss": stft.mag, "mr_stft_loss": stft.total}
    if adversarial:
        if msd_weights is None or mfd_weights is None:
            raise ContractError("generator_total: adversarial mode needs msd and mfd weights")
        parts["adv_s"], parts["adv_f"] = adversarial_losses(y, y_hat, msd_weights, mfd_weights, conventional)
    elif w is not None or w_hat is not None:
        if w is None or w_hat is None:
            raise ContractError("generator_total: weight loss needs both target and predicted weights")
        parts["weight_loss"], _ = weight_loss(w, w_hat)
    total = _sum_components(
        parts.get("weight_loss"), parts["sc_loss"], parts["mag_loss"], parts.get("adv_s"), parts.get("adv_f")
    )
    return LossBreakdown(total=total, **parts)


# ---------------------------
# copy-synthesis
# ---------------------------

class FitResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: np.ndarray
    trace: List[float]
    si_snr: Optional[float] = None  # None when the target is constant
    steps: int


def copy_synthesis_loss(
    target: np.ndarray, basis: BasisMatrix, w: np.ndarray, waveform_weight: float = 0.0
):
    """Loss of ``synthesize(basis, w)`` (cut to the target length) against the target,
    and its gradient with respect to ``w``."""
    t = np.asarray(target, dtype=np.float64)
    n_frames = w.shape[1]
    full = synthesize(basis, w)
    expect(full.size >= t.size, f"copy_synthesis: {n_frames} frames synthesize {full.size} < {t.size} samples")
    est = full[: t.size]
    stft = mr_stft_loss(t, est)
    value, grad_y = stft.total, stft.grad
    if waveform_weight > 0.0:
        energy = float(t @ t)
        err = est - t
        value += waveform_weight * float(err @ err) / energy
        grad_y = grad_y + waveform_weight * 2.0 * err / energy
    padded = np.zeros(synthesis_length(n_frames, basis))
    padded[: t.size] = grad_y
    return value, synthesize_adjoint(basis, padded, n_frames)


def fit_weights(
    target: np.ndarray,
    basis: BasisMatrix,
    init: np.ndarray,
    steps: int = 2000,
    lr: float = 1.0,
    line_search: bool = True,
    waveform_weight: float = 0.0,
    tol: float = 1e-12,
) -> FitResult:
    """Projected gradient descent on the spectral loss of the synthesized waveform.

    With ``line_search`` each step backtracks until the Armijo condition holds
    and the next step starts 1.5x larger, so the trace never increases.
    ``waveform_weight`` adds a normalized squared-error term.
    """
    expect(steps >= 1, "fit_weights: steps must be >= 1")
    expect(lr > 0, "fit_weights: lr must be positive")
    expect(waveform_weight >= 0, "fit_weights: waveform_weight must be >= 0")
    w = np.asarray(init, dtype=np.float64)
    expect(w.ndim == 2 and w.shape[0] == basis.n_basis, f"fit_weights: init must be [{basis.n_basis}, frames]")
    expect(bool((w >= 0).all()), "fit_weights: init must be nonnegative")
    t = np.asarray(target, dtype=np.float64)

    f, g = copy_synthesis_loss(t, basis, w, waveform_weight)
    trace = [f]
    step = lr
    done = 0
    for done in range(1, steps + 1):
        if f <= tol:
            done -= 1
            break
        if line_search:
            while True:
                w_new = np.maximum(w - step * g, 0.0)
                f_new, g_new = copy_synthesis_loss(t, basis, w_new, waveform_weight)
                decrease = float(np.sum(g * (w - w_new)))
                if f_new <= f - 1e-4 * decrease:
                    break
                step *= 0.5
                if step < 1e-14:
                    w_new, f_new, g_new = w, f, g
                    break
            stalled = w_new is w
            w, f, g = w_new, f_new, g_new
            step *= 1.5
        else:
            w = np.maximum(w - step * g, 0.0)
            f, g = copy_synthesis_loss(t, basis, w, waveform_weight)
            stalled = False
        if not np.isfinite(f) or f > DIVERGENCE_LIMIT:
            raise DivergenceError(f"fit_weights: loss {f:.3g} exceeded {DIVERGENCE_LIMIT:.0e} at step {done}")
        trace.append(f)
        if stalled:
            break

    est = synthesize(basis, w)[: t.size]
    try:
        quality: Optional[float] = si_snr(est, t)
    except DegenerateInputError:
        quality = None
    log_event(logger, "fit_weights", steps=done, loss=trace[-1], si_snr=quality)
    return FitResult(weights=w.astype(np.float32), trace=trace, si_snr=quality, steps=done)
