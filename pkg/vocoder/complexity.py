# vocoder/complexity.py
"""Static FLOP and parameter accounting over a graph.

Counted: convolutions, transposed convolutions, the 1x1 transform linears,
the PQMF synthesis filter and the basis matmul, at 2 FLOPs per multiply-add
plus 1 per bias add. Activations, affine norms, pooling, residual adds, branch
means, zero insertion and the overlap-add are free. Discriminator STFTs are not counted.
"""
from __future__ import annotations

from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, model_validator

from core.errors import ContractError, expect
from vocoder.graphs import (
    BasisSynthesisLayer,
    ConvLayer,
    DiscriminatorGraph,
    GeneratorGraph,
    MrfLayer,
    PqmfSynthesisLayer,
    PublishedFigures,
    ResidualLayer,
    TransformLayer,
    layer_convs,
)

DEFAULT_FRAMES = 86  # ~1 s of mel frames at 22.05 kHz / hop 256


class LayerCost(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    kind: str
    flops: int
    params: int
    out_channels: int
    out_length: int


class ComplexityReport(BaseModel):
    preset: str
    layers: List[LayerCost]
    total_flops: int
    total_params: int
    input_length: int
    audio_seconds: float
    reference: PublishedFigures = PublishedFigures()

    @model_validator(mode="after")
    def _totals_match(self) -> "ComplexityReport":
        if self.total_flops != sum(l.flops for l in self.layers):
            raise ValueError("total_flops differs from the per-layer sum")
        if self.total_params != sum(l.params for l in self.layers):
            raise ValueError("total_params differs from the per-layer sum")
        return self

    @property
    def gflops_per_second(self) -> float:
        return self.total_flops / self.audio_seconds / 1e9

    @property
    def params_millions(self) -> float:
        return self.total_params / 1e6

    def summary(self) -> dict:
        return {
            "preset": self.preset,
            "gflops_per_second": round(self.gflops_per_second, 4),
            "params_millions": round(self.params_millions, 4),
            "total_flops": self.total_flops,
            "total_params": self.total_params,
            "audio_seconds": self.audio_seconds,
            "reference": self.reference.model_dump(),
        }


def _layer_cost(layer, channels: int, length: int, prefix: str = "") -> Tuple[LayerCost, int, int]:
    flops = params = 0
    out_ch, out_len = channels, length
    for _, spec in layer_convs(layer):
        flops += spec.flops(length)
        params += spec.param_count()
    if isinstance(layer, ConvLayer):
        expect(
            channels == layer.conv.in_channels,
            f"{prefix}{layer.name}: receives {channels} channels, expects {layer.conv.in_channels}",
        )
        out_ch, out_len = layer.conv.out_channels, layer.conv.output_length(length)
    elif isinstance(layer, TransformLayer):
        params += 2 * layer.hidden
        out_ch = layer.n_basis
    elif isinstance(layer, PqmfSynthesisLayer):
        expect(
            channels == layer.subbands,
            f"{prefix}{layer.name}: receives {channels} channels, expects {layer.subbands} bands",
        )
        out_ch, out_len = 1, length * layer.subbands
        flops = layer.conv().flops(out_len)
    elif isinstance(layer, BasisSynthesisLayer):
        flops = 2 * layer.window_len * layer.n_basis * length
        out_ch, out_len = 1, (length - 1) * layer.hop + layer.window_len
    elif isinstance(layer, (ResidualLayer, MrfLayer)):
        pass
    if out_len < 1:
        raise ContractError(f"{prefix}{layer.name}: input length {length} too short")
    cost = LayerCost(
        name=prefix + layer.name, kind=layer.kind, flops=flops, params=params,
        out_channels=out_ch, out_length=out_len,
    )
    return cost, out_ch, out_len


def analyze(graph: Union[GeneratorGraph, DiscriminatorGraph], length: Optional[int] = None) -> ComplexityReport:
    """Per-layer costs for a generator fed ``length`` mel frames (default ~1 s),
    or a discriminator fed ``length`` samples (default one second)."""
    rows: List[LayerCost] = []
    if isinstance(graph, GeneratorGraph):
        frames = DEFAULT_FRAMES if length is None else length
        expect(frames >= 1, "analyze: need at least one mel frame")
        ch, n = graph.in_channels, frames
        for layer in graph.layers:
            cost, ch, n = _layer_cost(layer, ch, n)
            rows.append(cost)
        seconds = frames * graph.mel_hop / graph.sample_rate
        input_length = frames
        reference = graph.reference
    else:
        samples = graph.sample_rate if length is None else length
        expect(samples >= 1, "analyze: need at least one sample")
        for sub in graph.subs:
            if sub.source == "stft":
                ch, n = sub.stft.n_bins, sub.stft.n_frames(samples)
            else:
                ch, n = 1, samples
                for _ in range(sub.pool_times):
                    n = (n + 2 - 4) // 2 + 1
            for layer in sub.layers:
                cost, ch, n = _layer_cost(layer, ch, n, prefix=f"{sub.name}.")
                rows.append(cost)
        seconds = samples / graph.sample_rate
        input_length = samples
        reference = PublishedFigures()
    return ComplexityReport(
        preset=graph.preset,
        layers=rows,
        total_flops=sum(r.flops for r in rows),
        total_params=sum(r.params for r in rows),
        input_length=input_length,
        audio_seconds=seconds,
        reference=reference,
    )


def format_report(report: ComplexityReport) -> str:
    lines = [f"{'layer':<28} {'kind':<16} {'flops':>16} {'params':>12} {'out':>14}"]
    for r in report.layers:
        lines.append(f"{r.name:<28} {r.kind:<16} {r.flops:>16,} {r.params:>12,} {f'{r.out_channels}x{r.out_length}':>14}")
    ref = report.reference
    lines.append(
        f"{report.preset}: {report.gflops_per_second:.2f} GFLOPs/s, {report.params_millions:.2f} M params"
        f" (published: gflops={ref.gflops}, params_m={ref.params_m})"
    )
    return "\n".join(lines)
