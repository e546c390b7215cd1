# vocoder/graphs.py
"""Declarative model graphs and the named presets.

Preset definitions (channel widths, kernels, dilations) are pinned here and
are the canonical description of each model. Basis presets upsample mel
frames 16x in two 4x stages and predict weights over a 32-sample basis at a
16-sample stride, so one mel frame (256 samples) maps to 16 weight frames.
"""
from __future__ import annotations

from enum import Enum
from typing import Annotated, Iterator, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import ConfigError
from vocoder.dsp import ConvSpec, ResidualSpec
from vocoder.spectral import StftConfig, multi_resolution_configs


# ---------------------------
# layer specs
# ---------------------------

class _Layer(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str


class ConvLayer(_Layer):
    kind: Literal["conv"] = "conv"
    conv: ConvSpec


class ActivationLayer(_Layer):
    kind: Literal["activation"] = "activation"
    fn: Literal["leaky_relu", "relu", "tanh"]
    slope: float = Field(0.0, ge=0.0, lt=1.0)


class ResidualLayer(_Layer):
    """A stack of residual dilated blocks applied in order."""

    kind: Literal["residual"] = "residual"
    blocks: List[ResidualSpec]


class MrfLayer(_Layer):
    """Multi-receptive-field fusion: mean over parallel residual stacks."""

    kind: Literal["mrf"] = "mrf"
    branches: List[List[ResidualSpec]]


class TransformLayer(_Layer):
    """linear -> leaky -> linear -> leaky -> affine norm -> linear."""

    kind: Literal["transform"] = "transform"
    in_channels: int = Field(ge=1)
    hidden: int = Field(ge=1)
    n_basis: int = Field(ge=1)
    slope: float = Field(0.2, ge=0.0, lt=1.0)

    def linears(self) -> List[Tuple[str, ConvSpec]]:
        def lin(cin: int, cout: int) -> ConvSpec:
            return ConvSpec(in_channels=cin, out_channels=cout, kernel_size=1)

        return [
            ("linear1", lin(self.in_channels, self.hidden)),
            ("linear2", lin(self.hidden, self.hidden)),
            ("linear3", lin(self.hidden, self.n_basis)),
        ]


class PqmfSynthesisLayer(_Layer):
    """Sub-band merge: zero-insert each band by ``subbands``, then filter with
    the fixed cosine-modulated synthesis bank (no trainable parameters)."""

    kind: Literal["pqmf"] = "pqmf"
    subbands: int = Field(4, ge=2)
    taps: int = Field(62, ge=2)
    cutoff: float = Field(0.142, gt=0.0, lt=1.0)
    beta: float = Field(9.0, ge=0.0)

    def conv(self) -> ConvSpec:
        return ConvSpec(in_channels=self.subbands, out_channels=1, kernel_size=self.taps + 1,
                        padding=self.taps // 2, bias=False)


class BasisSynthesisLayer(_Layer):
    kind: Literal["basis_synthesis"] = "basis_synthesis"
    window_len: int = 32
    n_basis: int = 256
    hop: int = 16


Layer = Annotated[
    Union[ConvLayer, ActivationLayer, ResidualLayer, MrfLayer, TransformLayer, PqmfSynthesisLayer, BasisSynthesisLayer],
    Field(discriminator="kind"),
]


class PublishedFigures(BaseModel):
    """Published reference numbers, printed next to measured ones."""

    model_config = ConfigDict(frozen=True)

    gflops: Optional[float] = None
    params_m: Optional[float] = None
    rtf_low: Optional[float] = None
    rtf_high: Optional[float] = None


# ---------------------------
# graphs
# ---------------------------

class GeneratorGraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    preset: str
    in_channels: int = 80
    mel_hop: int = 256
    sample_rate: int = 22050
    upsampling_factors: List[int]
    layers: List[Layer]
    reference: PublishedFigures = PublishedFigures()

    @property
    def is_basis(self) -> bool:
        return bool(self.layers) and isinstance(self.layers[-1], BasisSynthesisLayer)

    @property
    def synthesis(self) -> Optional[BasisSynthesisLayer]:
        return self.layers[-1] if self.is_basis else None  # type: ignore[return-value]

    @property
    def transform(self) -> Optional[TransformLayer]:
        return next((l for l in self.layers if isinstance(l, TransformLayer)), None)

    def upsampling_layers(self) -> List[ConvLayer]:
        return [l for l in self.layers if isinstance(l, ConvLayer) and l.conv.transposed]

    @model_validator(mode="after")
    def _check_structure(self) -> "GeneratorGraph":
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.preset}: duplicate layer names")
        strides = [l.conv.stride for l in self.upsampling_layers()]
        if strides != list(self.upsampling_factors):
            raise ValueError(f"{self.preset}: transposed strides {strides} != factors {self.upsampling_factors}")
        total = 1
        for f in self.upsampling_factors:
            total *= f
        if self.is_basis:
            tail = self.layers[-3:]
            if not (
                isinstance(tail[0], TransformLayer)
                and isinstance(tail[1], ActivationLayer)
                and tail[1].fn == "relu"
            ):
                raise ValueError(f"{self.preset}: basis graphs must end in transform -> relu -> basis synthesis")
            total *= self.synthesis.hop
        elif self.layers and isinstance(self.layers[-1], PqmfSynthesisLayer):
            total *= self.layers[-1].subbands
        if total != self.mel_hop:
            raise ValueError(f"{self.preset}: upsampling yields {total} samples per frame, expected {self.mel_hop}")
        return self


class SubDiscriminator(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    source: Literal["waveform", "stft"]
    pool_times: int = 0
    stft: Optional[StftConfig] = None
    layers: List[Layer]


class DiscriminatorGraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    preset: str
    sample_rate: int = 22050
    subs: List[SubDiscriminator]


# ---------------------------
# builders
# ---------------------------

def _conv(name: str, cin: int, cout: int, k: int, stride: int = 1, dilation: int = 1,
          padding: Optional[int] = None, groups: int = 1) -> ConvLayer:
    pad = dilation * (k - 1) // 2 if padding is None else padding
    return ConvLayer(
        name=name,
        conv=ConvSpec(in_channels=cin, out_channels=cout, kernel_size=k, stride=stride,
                      dilation=dilation, padding=pad, groups=groups),
    )


def _up(name: str, cin: int, cout: int, factor: int, kernel: int) -> ConvLayer:
    # (T - 1) * r - 2p + k == T * r  when  p = (k - r) / 2
    return ConvLayer(
        name=name,
        conv=ConvSpec(in_channels=cin, out_channels=cout, kernel_size=kernel, stride=factor,
                      padding=(kernel - factor) // 2, transposed=True),
    )


def _leaky(name: str, slope: float) -> ActivationLayer:
    return ActivationLayer(name=name, fn="leaky_relu", slope=slope)


def _melgan_style(
    preset: str,
    channels: Sequence[int],
    factors: Sequence[int],
    kernels: Sequence[int],
    basis_head: bool,
    transform_hidden: int = 256,
    dilations: Sequence[int] = (1, 3, 9),
    reference: PublishedFigures = PublishedFigures(),
    out_bands: int = 1,
    skip: bool = False,
) -> GeneratorGraph:
    slope = 0.2
    layers: List = [_conv("conv_pre", 80, channels[0], 7)]
    for i, (r, k) in enumerate(zip(factors, kernels)):
        layers.append(_leaky(f"ups.{i}.act", slope))
        layers.append(_up(f"ups.{i}", channels[i], channels[i + 1], r, k))
        layers.append(
            ResidualLayer(
                name=f"res.{i}",
                blocks=[ResidualSpec(channels=channels[i + 1], kernel_size=3, dilation=d, post_kernel=1, slope=slope,
                                     skip=skip)
                        for d in dilations],
            )
        )
    last = channels[len(factors)]
    layers.append(_leaky("head.act", slope))
    if basis_head:
        layers.append(TransformLayer(name="transform", in_channels=last, hidden=transform_hidden, n_basis=256))
        layers.append(ActivationLayer(name="transform.relu", fn="relu"))
        layers.append(BasisSynthesisLayer(name="basis"))
    else:
        layers.append(_conv("conv_post", last, out_bands, 7))
        layers.append(ActivationLayer(name="tanh", fn="tanh"))
        if out_bands > 1:
            layers.append(PqmfSynthesisLayer(name="pqmf", subbands=out_bands))
    return GeneratorGraph(preset=preset, upsampling_factors=list(factors), layers=layers, reference=reference)


def _hifigan_style(
    preset: str,
    initial: int,
    factors: Sequence[int],
    up_kernels: Sequence[int],
    res_kernels: Sequence[int],
    res_dilations: Sequence[Sequence[int]],
    two_conv_units: bool,
    reference: PublishedFigures,
) -> GeneratorGraph:
    layers: List = [_conv("conv_pre", 80, initial, 7)]
    ch = initial
    for i, (r, k) in enumerate(zip(factors, up_kernels)):
        layers.append(_leaky(f"ups.{i}.act", 0.1))
        layers.append(_up(f"ups.{i}", ch, ch // 2, r, k))
        ch //= 2
        branches = [
            [ResidualSpec(channels=ch, kernel_size=rk, dilation=d, post_kernel=rk if two_conv_units else None, slope=0.1)
             for d in dil]
            for rk, dil in zip(res_kernels, res_dilations)
        ]
        layers.append(MrfLayer(name=f"mrf.{i}", branches=branches))
    layers.append(_leaky("head.act", 0.01))
    layers.append(_conv("conv_post", ch, 1, 7))
    layers.append(ActivationLayer(name="tanh", fn="tanh"))
    return GeneratorGraph(preset=preset, upsampling_factors=list(factors), layers=layers, reference=reference)


class Preset(str, Enum):
    basis_melgan_large = "basis-melgan-large"
    basis_melgan_light = "basis-melgan-light"
    melgan_reference = "melgan-reference"
    multiband_melgan_reference = "multiband-melgan-reference"
    hifigan_v1_reference = "hifigan-v1-reference"
    hifigan_v2_reference = "hifigan-v2-reference"
    hifigan_v3_reference = "hifigan-v3-reference"


def preset_names() -> List[str]:
    return [p.value for p in Preset]


def build_preset(name: Union[str, Preset]) -> GeneratorGraph:
    try:
        preset = Preset(name)
    except ValueError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(preset_names())}") from None

    if preset is Preset.basis_melgan_large:
        # wide mel-rate trunk, 4x -> 576 ch, 4x -> 256 ch
        return _melgan_style(
            preset.value, channels=(1792, 576, 256), factors=(4, 4), kernels=(8, 8), basis_head=True,
            transform_hidden=256,
            reference=PublishedFigures(gflops=7.95, params_m=15.90, rtf_low=0.6668, rtf_high=0.0395),
        )
    if preset is Preset.basis_melgan_light:
        return _melgan_style(
            preset.value, channels=(768, 256, 128), factors=(4, 4), kernels=(8, 8), basis_head=True,
            transform_hidden=128,
            reference=PublishedFigures(params_m=3.30, rtf_low=0.1460, rtf_high=0.0100),
        )
    if preset is Preset.melgan_reference:
        return _melgan_style(
            preset.value, channels=(512, 256, 128, 64, 32), factors=(8, 8, 2, 2), kernels=(16, 16, 4, 4),
            basis_head=False,
        )
    if preset is Preset.multiband_melgan_reference:
        # 4 bands at 1/4 rate: 8 x 4 x 2 upsampling, then PQMF synthesis
        return _melgan_style(
            preset.value, channels=(384, 192, 96, 48), factors=(8, 4, 2), kernels=(16, 8, 4), basis_head=False,
            dilations=(1, 3, 9, 27), out_bands=4, skip=True,
            reference=PublishedFigures(params_m=2.53, rtf_low=0.1351, rtf_high=0.0175),
        )
    if preset is Preset.hifigan_v1_reference:
        return _hifigan_style(
            preset.value, 512, (8, 8, 2, 2), (16, 16, 4, 4), (3, 7, 11), [(1, 3, 5)] * 3, True,
            PublishedFigures(gflops=17.74, params_m=13.92, rtf_low=1.8786, rtf_high=0.1033),
        )
    if preset is Preset.hifigan_v2_reference:
        return _hifigan_style(
            preset.value, 128, (8, 8, 2, 2), (16, 16, 4, 4), (3, 7, 11), [(1, 3, 5)] * 3, True,
            PublishedFigures(params_m=0.92, rtf_low=0.1960, rtf_high=0.0303),
        )
    return _hifigan_style(
        preset.value, 256, (8, 8, 4), (16, 16, 8), (3, 5, 7), [(1, 2), (2, 6), (3, 12)], False,
        PublishedFigures(params_m=1.46, rtf_low=0.1977, rtf_high=0.0213),
    )


def _msd_stack(in_channels: int) -> List:
    slope = 0.2
    layers = [_conv("layers.0", in_channels, 16, 15), _leaky("layers.0.act", slope)]
    plan = [(16, 64, 4), (64, 256, 16), (256, 1024, 64), (1024, 1024, 256)]
    for i, (cin, cout, groups) in enumerate(plan, start=1):
        layers.append(_conv(f"layers.{i}", cin, cout, 41, stride=4, padding=20, groups=groups))
        layers.append(_leaky(f"layers.{i}.act", slope))
    layers.append(_conv("layers.5", 1024, 1024, 5))
    layers.append(_leaky("layers.5.act", slope))
    layers.append(_conv("layers.6", 1024, 1, 3))
    return layers


def _mfd_stack(n_bins: int) -> List:
    slope = 0.2
    layers = [_conv("layers.0", n_bins, 128, 7), _leaky("layers.0.act", slope)]
    plan = [(128, 256, 4), (256, 256, 16)]
    for i, (cin, cout, groups) in enumerate(plan, start=1):
        layers.append(_conv(f"layers.{i}", cin, cout, 41, stride=2, padding=20, groups=groups))
        layers.append(_leaky(f"layers.{i}.act", slope))
    layers.append(_conv("layers.3", 256, 256, 5))
    layers.append(_leaky("layers.3.act", slope))
    layers.append(_conv("layers.4", 256, 1, 3))
    return layers


def build_discriminator(name: str) -> DiscriminatorGraph:
    """``msd``: 3 waveform scales (raw, pooled x2, pooled x4); ``mfd``: one stack per STFT resolution."""
    if name == "msd":
        subs = [
            SubDiscriminator(name=f"msd.{i}", source="waveform", pool_times=i, layers=_msd_stack(1))
            for i in range(3)
        ]
        return DiscriminatorGraph(preset="msd", subs=subs)
    if name == "mfd":
        subs = [
            SubDiscriminator(name=f"mfd.{i}", source="stft", stft=cfg, layers=_mfd_stack(cfg.n_bins))
            for i, cfg in enumerate(multi_resolution_configs())
        ]
        return DiscriminatorGraph(preset="mfd", subs=subs)
    raise ConfigError(f"unknown discriminator {name!r}; known: msd, mfd")


# ---------------------------
# parameter layout
# ---------------------------

def layer_convs(layer) -> Iterator[Tuple[str, ConvSpec]]:
    """(parameter prefix, ConvSpec) for every convolution inside a layer."""
    if isinstance(layer, ConvLayer):
        yield layer.name, layer.conv
    elif isinstance(layer, ResidualLayer):
        for i, blk in enumerate(layer.blocks):
            yield from _block_convs(f"{layer.name}.{i}", blk)
    elif isinstance(layer, MrfLayer):
        for b, branch in enumerate(layer.branches):
            for i, blk in enumerate(branch):
                yield from _block_convs(f"{layer.name}.{b}.{i}", blk)
    elif isinstance(layer, TransformLayer):
        for key, spec in layer.linears():
            yield f"{layer.name}.{key}", spec


def _block_convs(prefix: str, blk: ResidualSpec) -> Iterator[Tuple[str, ConvSpec]]:
    yield f"{prefix}.conv1", blk.conv1()
    conv2 = blk.conv2()
    if conv2 is not None:
        yield f"{prefix}.conv2", conv2
    skip = blk.skip_conv()
    if skip is not None:
        yield f"{prefix}.skip", skip


def parameter_shapes(layers: Sequence, prefix: str = "") -> dict:
    shapes: dict = {}
    for layer in layers:
        for name, spec in layer_convs(layer):
            shapes[f"{prefix}{name}.weight"] = spec.weight_shape()
            if spec.bias:
                shapes[f"{prefix}{name}.bias"] = (spec.out_channels,)
        if isinstance(layer, TransformLayer):
            shapes[f"{prefix}{layer.name}.norm.scale"] = (layer.hidden,)
            shapes[f"{prefix}{layer.name}.norm.shift"] = (layer.hidden,)
    return shapes


def graph_parameter_shapes(graph: Union[GeneratorGraph, DiscriminatorGraph]) -> dict:
    if isinstance(graph, GeneratorGraph):
        return parameter_shapes(graph.layers)
    shapes: dict = {}
    for sub in graph.subs:
        shapes.update(parameter_shapes(sub.layers, prefix=f"{sub.name}."))
    return shapes


def dump_graph(graph: Union[GeneratorGraph, DiscriminatorGraph]) -> str:
    """Human-readable listing for audits."""
    lines = [f"preset {graph.preset}"]
    if isinstance(graph, GeneratorGraph):
        lines.append(f"  input mel bands={graph.in_channels} hop={graph.mel_hop} sr={graph.sample_rate}")
        lines.append(f"  upsampling_factors={graph.upsampling_factors}")
        groups = [("", graph.layers)]
    else:
        groups = [(f"{s.name} ({s.source}, pool_times={s.pool_times}, stft={s.stft})", s.layers) for s in graph.subs]
    for title, layers in groups:
        if title:
            lines.append(f"  {title}")
        for layer in layers:
            lines.append(f"    {layer.name}: {_describe(layer)}")
    return "\n".join(lines)


def _describe(layer) -> str:
    if isinstance(layer, ConvLayer):
        c = layer.conv
        kind = "conv_transpose1d" if c.transposed else "conv1d"
        return (f"{kind} {c.in_channels}->{c.out_channels} k={c.kernel_size} s={c.stride} "
                f"d={c.dilation} p={c.padding} g={c.groups}")
    if isinstance(layer, ActivationLayer):
        return f"{layer.fn}" + (f"({layer.slope})" if layer.fn == "leaky_relu" else "")
    if isinstance(layer, ResidualLayer):
        b = layer.blocks
        skip = " skip=1x1" if b[0].skip else ""
        return f"residual x{len(b)} ch={b[0].channels} k={b[0].kernel_size} dilations={[x.dilation for x in b]}{skip}"
    if isinstance(layer, MrfLayer):
        parts = [f"k={br[0].kernel_size} d={[x.dilation for x in br]}" for br in layer.branches]
        return f"mrf ch={layer.branches[0][0].channels} [" + "; ".join(parts) + "]"
    if isinstance(layer, TransformLayer):
        return f"transform {layer.in_channels}->{layer.hidden}->{layer.hidden}->norm->{layer.n_basis}"
    if isinstance(layer, PqmfSynthesisLayer):
        return f"pqmf synthesis subbands={layer.subbands} taps={layer.taps} cutoff={layer.cutoff} beta={layer.beta}"
    return f"basis synthesis window={layer.window_len} n_basis={layer.n_basis} hop={layer.hop}"
