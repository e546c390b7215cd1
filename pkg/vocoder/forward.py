# vocoder/forward.py
"""Weights for a graph and the forward passes of generators and discriminators."""
from __future__ import annotations

import math
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.errors import ContractError, expect
from core.logs import get_logger, log_event
from vocoder.archive import archive_read, archive_write
from vocoder.basis import BasisMatrix, synthesize
from vocoder.dsp import (
    affine_norm,
    as_feature_map,
    avg_pool1d,
    conv1d,
    conv_transpose1d,
    leaky_relu,
    relu,
    residual_dilated_block,
    tanh,
)
from vocoder.graphs import (
    ActivationLayer,
    BasisSynthesisLayer,
    ConvLayer,
    DiscriminatorGraph,
    GeneratorGraph,
    MrfLayer,
    PqmfSynthesisLayer,
    ResidualLayer,
    TransformLayer,
    build_discriminator,
    graph_parameter_shapes,
    layer_convs,
)
from vocoder.spectral import MelSpectrogram, pqmf_synthesis_filters, stft_magnitude

logger = get_logger(__name__)

Graph = Union[GeneratorGraph, DiscriminatorGraph]


class ModelWeights(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    preset: str
    tensors: Dict[str, np.ndarray]

    @property
    def param_count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))


class GeneratorOutput(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    waveform: np.ndarray
    weights: Optional[np.ndarray] = None  # [n_basis, 16 * frames] for basis presets


# ---------------------------
# weights
# ---------------------------

def instantiate_weights(graph: Graph, seed: int = 0) -> ModelWeights:
    """Seeded random weights; convolution kernels use std 1 / sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    specs = {}
    layers = graph.layers if isinstance(graph, GeneratorGraph) else [
        (sub.name + ".", l) for sub in graph.subs for l in sub.layers
    ]
    for item in layers:
        prefix, layer = item if isinstance(item, tuple) else ("", item)
        for name, spec in layer_convs(layer):
            specs[f"{prefix}{name}"] = spec

    tensors: Dict[str, np.ndarray] = {}
    for key, shape in graph_parameter_shapes(graph).items():
        owner, _, leaf = key.rpartition(".")
        if leaf == "weight":
            spec = specs[owner]
            fan_in = (spec.in_channels * spec.kernel_size / spec.stride) if spec.transposed else (
                spec.in_channels // spec.groups * spec.kernel_size
            )
            t = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)
        elif leaf == "bias":
            t = rng.normal(0.0, 0.01, size=shape)
        elif leaf == "scale":
            t = 1.0 + 0.1 * rng.standard_normal(shape)
        else:
            t = 0.1 * rng.standard_normal(shape)
        tensors[key] = t.astype(np.float32)
    return ModelWeights(preset=graph.preset, tensors=tensors)


def validate_weights(graph: Graph, weights: Union[ModelWeights, Mapping[str, np.ndarray]]) -> None:
    tensors = weights.tensors if isinstance(weights, ModelWeights) else weights
    expected = graph_parameter_shapes(graph)
    for key, shape in expected.items():
        if key not in tensors:
            raise ContractError(f"{graph.preset}: missing weight tensor {key}")
        got = tuple(np.shape(tensors[key]))
        if got != tuple(shape):
            raise ContractError(f"{graph.preset}: {key} has shape {got}, expected {tuple(shape)}")
    orphans = sorted(set(tensors) - set(expected))
    if orphans:
        raise ContractError(f"{graph.preset}: orphan weight tensor {orphans[0]}")


def count_params(graph: Graph, weights: ModelWeights) -> int:
    validate_weights(graph, weights)
    return weights.param_count


def save_weights(path, weights: ModelWeights) -> None:
    archive_write(path, weights.tensors)


def load_weights(path, graph: Graph) -> ModelWeights:
    weights = ModelWeights(preset=graph.preset, tensors=archive_read(path))
    validate_weights(graph, weights)
    log_event(logger, "weights_loaded", preset=graph.preset, path=str(path), params=weights.param_count)
    return weights


# ---------------------------
# layer execution
# ---------------------------

def _block_params(tensors: Mapping[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    cut = len(prefix) + 1
    return {k[cut:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}


def _run_layer(layer, x: np.ndarray, tensors: Mapping[str, np.ndarray], prefix: str) -> np.ndarray:
    name = prefix + layer.name
    if isinstance(layer, ConvLayer):
        op = conv_transpose1d if layer.conv.transposed else conv1d
        return op(x, layer.conv, tensors[f"{name}.weight"], tensors.get(f"{name}.bias"))
    if isinstance(layer, ActivationLayer):
        if layer.fn == "leaky_relu":
            return leaky_relu(x, layer.slope)
        return relu(x) if layer.fn == "relu" else tanh(x)
    if isinstance(layer, ResidualLayer):
        for i, blk in enumerate(layer.blocks):
            x = residual_dilated_block(x, blk, _block_params(tensors, f"{name}.{i}"))
        return x
    if isinstance(layer, MrfLayer):
        acc = np.zeros(x.shape, dtype=np.float64)
        for b, branch in enumerate(layer.branches):
            h = x
            for i, blk in enumerate(branch):
                h = residual_dilated_block(h, blk, _block_params(tensors, f"{name}.{b}.{i}"))
            acc += h
        return (acc / len(layer.branches)).astype(np.float32)
    if isinstance(layer, TransformLayer):
        (k1, s1), (k2, s2), (k3, s3) = layer.linears()
        h = conv1d(x, s1, tensors[f"{name}.{k1}.weight"], tensors[f"{name}.{k1}.bias"])
        h = leaky_relu(h, layer.slope)
        h = conv1d(h, s2, tensors[f"{name}.{k2}.weight"], tensors[f"{name}.{k2}.bias"])
        h = leaky_relu(h, layer.slope)
        h = affine_norm(h, tensors[f"{name}.norm.scale"], tensors[f"{name}.norm.shift"])
        return conv1d(h, s3, tensors[f"{name}.{k3}.weight"], tensors[f"{name}.{k3}.bias"])
    if isinstance(layer, PqmfSynthesisLayer):
        return pqmf_synthesis(x, layer)
    raise ContractError(f"layer {name}: {layer.kind} cannot run inside a stack")


def pqmf_synthesis(bands: np.ndarray, layer: PqmfSynthesisLayer) -> np.ndarray:
    """[subbands, T] -> [1, subbands * T]."""
    bands = as_feature_map(bands, "bands")
    n = layer.subbands
    expect(bands.shape[0] == n, f"pqmf: got {bands.shape[0]} bands, expected {n}")
    up = np.zeros((n, bands.shape[1] * n), dtype=np.float32)
    up[:, ::n] = bands * np.float32(n)
    filters = pqmf_synthesis_filters(n, layer.taps, layer.cutoff, layer.beta)
    return conv1d(up, layer.conv(), filters[None, :, :])


def run_layers(layers: Sequence, x: np.ndarray, tensors: Mapping[str, np.ndarray], prefix: str = "") -> np.ndarray:
    for layer in layers:
        try:
            x = _run_layer(layer, x, tensors, prefix)
        except ContractError as exc:
            raise ContractError(f"layer {prefix}{layer.name}: {exc.detail}") from exc
    return x


# ---------------------------
# forward passes
# ---------------------------

def forward_generator(
    graph: GeneratorGraph,
    weights: ModelWeights,
    mel: Union[MelSpectrogram, np.ndarray],
    basis: Optional[BasisMatrix] = None,
) -> GeneratorOutput:
    """mel [n_mels, F] -> waveform of exactly ``F * mel_hop`` samples."""
    validate_weights(graph, weights)
    data = mel.data if isinstance(mel, MelSpectrogram) else mel
    x = as_feature_map(np.asarray(data, dtype=np.float32), "mel")
    expect(
        x.shape[0] == graph.in_channels,
        f"{graph.preset}: mel has {x.shape[0]} bands, graph expects {graph.in_channels}",
    )
    expect(x.shape[1] >= 1, f"{graph.preset}: mel has no frames")
    n_samples = x.shape[1] * graph.mel_hop

    if not graph.is_basis:
        y = run_layers(graph.layers, x, weights.tensors)
        return GeneratorOutput(waveform=y[0, :n_samples])

    synth: BasisSynthesisLayer = graph.synthesis
    if basis is None:
        raise ContractError(f"{graph.preset}: basis preset requires a basis matrix")
    expect(
        (basis.window_len, basis.n_basis, basis.hop) == (synth.window_len, synth.n_basis, synth.hop),
        f"{graph.preset}: basis is {basis.window_len}x{basis.n_basis} hop {basis.hop}, "
        f"graph expects {synth.window_len}x{synth.n_basis} hop {synth.hop}",
    )
    w_hat = run_layers(graph.layers[:-1], x, weights.tensors)
    y = synthesize(basis, w_hat)
    # drop the overlap tail of the last window
    return GeneratorOutput(waveform=y[:n_samples].astype(np.float32), weights=w_hat)


def _score_maps(graph: DiscriminatorGraph, weights: ModelWeights, inputs: List[np.ndarray]) -> List[np.ndarray]:
    validate_weights(graph, weights)
    return [
        run_layers(sub.layers, inp, weights.tensors, prefix=f"{sub.name}.")
        for sub, inp in zip(graph.subs, inputs)
    ]


def _checked_waveform(waveform: np.ndarray) -> np.ndarray:
    y = np.asarray(waveform, dtype=np.float32)
    expect(y.ndim == 1, f"discriminator: expected a mono waveform, got ndim={y.ndim}")
    expect(y.size >= 1, "discriminator: empty waveform")
    return y


def forward_msd(
    waveform: np.ndarray, weights: ModelWeights, graph: Optional[DiscriminatorGraph] = None
) -> List[np.ndarray]:
    """One score map per scale: raw, pooled once, pooled twice."""
    graph = graph or build_discriminator("msd")
    x = _checked_waveform(waveform)[None, :]
    inputs = []
    for sub in graph.subs:
        h = x
        for _ in range(sub.pool_times):
            h = avg_pool1d(h, 4, 2, 1)
        inputs.append(h)
    return _score_maps(graph, weights, inputs)


def forward_mfd(
    waveform: np.ndarray, weights: ModelWeights, graph: Optional[DiscriminatorGraph] = None
) -> List[np.ndarray]:
    """One score map per STFT resolution; frequency bins are the input channels."""
    graph = graph or build_discriminator("mfd")
    y = _checked_waveform(waveform)
    inputs = [stft_magnitude(y, sub.stft).astype(np.float32) for sub in graph.subs]
    return _score_maps(graph, weights, inputs)
