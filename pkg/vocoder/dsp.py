# vocoder/dsp.py
"""Deterministic 1-D kernels every model graph is built from.

Feature maps are ``float32`` arrays shaped ``[channels, time]``. All sums are
accumulated in float64 and stored back as float32, so repeated calls on the
same inputs are bit-identical.
"""
from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import ContractError, expect

FeatureMap = np.ndarray


# ---------------------------
# FLOP accounting
# ---------------------------

@dataclass
class FlopCounter:
    flops: int = 0
    calls: int = 0

    def add(self, n: int) -> None:
        self.flops += int(n)
        self.calls += 1


_ACTIVE_COUNTER: ContextVar[Optional[FlopCounter]] = ContextVar("bmg_flop_counter", default=None)


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    """Collect the FLOPs recorded by every kernel called inside the block."""
    counter = FlopCounter()
    token = _ACTIVE_COUNTER.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE_COUNTER.reset(token)


def record_flops(n: int) -> None:
    counter = _ACTIVE_COUNTER.get()
    if counter is not None:
        counter.add(n)


# ---------------------------
# Specs
# ---------------------------

class ConvSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = Field(ge=1)
    out_channels: int = Field(ge=1)
    kernel_size: int = Field(ge=1)
    stride: int = Field(1, ge=1)
    dilation: int = Field(1, ge=1)
    padding: int = Field(0, ge=0)
    groups: int = Field(1, ge=1)
    transposed: bool = False
    bias: bool = True

    @model_validator(mode="after")
    def _check_groups(self) -> "ConvSpec":
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )
        if self.transposed and self.groups != 1:
            raise ValueError("grouped transposed convolutions are not supported")
        return self

    @property
    def span(self) -> int:
        return self.dilation * (self.kernel_size - 1) + 1

    def output_length(self, length: int) -> int:
        if self.transposed:
            return (length - 1) * self.stride - 2 * self.padding + self.span
        return (length + 2 * self.padding - self.span) // self.stride + 1

    def weight_shape(self) -> Tuple[int, int, int]:
        if self.transposed:
            return (self.in_channels, self.out_channels, self.kernel_size)
        return (self.out_channels, self.in_channels // self.groups, self.kernel_size)

    def param_count(self) -> int:
        n = int(np.prod(self.weight_shape()))
        return n + (self.out_channels if self.bias else 0)

    def flops(self, length: int) -> int:
        """2 FLOPs per multiply-add plus one per bias add."""
        out_len = self.output_length(length)
        if self.transposed:
            macs = length * self.in_channels * self.out_channels * self.kernel_size
        else:
            macs = out_len * self.out_channels * (self.in_channels // self.groups) * self.kernel_size
        return 2 * macs + (out_len * self.out_channels if self.bias else 0)


class ResidualSpec(BaseModel):
    """x + F(x), F = leaky -> dilated conv -> leaky -> post conv.

    ``post_kernel=None`` drops the second conv (single-conv residual units);
    ``skip=True`` replaces the identity path with a 1x1 conv.
    """

    model_config = ConfigDict(frozen=True)

    channels: int = Field(ge=1)
    kernel_size: int = Field(3, ge=1)
    dilation: int = Field(1, ge=1)
    post_kernel: Optional[int] = Field(1, ge=1)
    slope: float = Field(0.2, ge=0.0, lt=1.0)
    skip: bool = False

    @model_validator(mode="after")
    def _odd_kernels(self) -> "ResidualSpec":
        if self.kernel_size % 2 == 0 or (self.post_kernel is not None and self.post_kernel % 2 == 0):
            raise ValueError("residual kernels must be odd to keep the length")
        return self

    def conv1(self) -> ConvSpec:
        return ConvSpec(
            in_channels=self.channels,
            out_channels=self.channels,
            kernel_size=self.kernel_size,
            dilation=self.dilation,
            padding=self.dilation * (self.kernel_size - 1) // 2,
        )

    def conv2(self) -> Optional[ConvSpec]:
        if self.post_kernel is None:
            return None
        return ConvSpec(
            in_channels=self.channels,
            out_channels=self.channels,
            kernel_size=self.post_kernel,
            padding=(self.post_kernel - 1) // 2,
        )

    def skip_conv(self) -> Optional[ConvSpec]:
        if not self.skip:
            return None
        return ConvSpec(in_channels=self.channels, out_channels=self.channels, kernel_size=1)


# ---------------------------
# helpers
# ---------------------------

def as_feature_map(x: np.ndarray, name: str = "x") -> FeatureMap:
    arr = np.asarray(x)
    expect(arr.ndim == 2, f"{name}: expected [channels, time], got ndim={arr.ndim}")
    expect(arr.shape[0] >= 1, f"{name}: channels must be positive")
    return arr


def _store(out: np.ndarray, op: str) -> FeatureMap:
    if not np.isfinite(out).all():
        raise ContractError(f"{op}: non-finite values in output")
    return out.astype(np.float32)


def _check_weights(op: str, spec: ConvSpec, weights: np.ndarray, bias: Optional[np.ndarray]) -> None:
    expect(
        tuple(weights.shape) == spec.weight_shape(),
        f"{op}: weights shape {tuple(weights.shape)} != expected {spec.weight_shape()}",
    )
    if spec.bias:
        expect(bias is not None, f"{op}: spec has bias but no bias vector was given")
        expect(
            np.shape(bias) == (spec.out_channels,),
            f"{op}: bias length {np.shape(bias)} != out_channels {spec.out_channels}",
        )


# ---------------------------
# kernels
# ---------------------------

def conv1d(x: FeatureMap, spec: ConvSpec, weights: np.ndarray, bias: Optional[np.ndarray] = None) -> FeatureMap:
    x = as_feature_map(x)
    expect(not spec.transposed, "conv1d: spec is transposed, use conv_transpose1d")
    expect(
        x.shape[0] == spec.in_channels,
        f"conv1d: in_channels mismatch, x.channels={x.shape[0]} spec.in_channels={spec.in_channels}",
    )
    _check_weights("conv1d", spec, weights, bias)
    length = x.shape[1]
    out_len = spec.output_length(length)
    expect(out_len >= 1, f"conv1d: time={length} too short for span={spec.span} padding={spec.padding}")

    xp = np.pad(x.astype(np.float64), ((0, 0), (spec.padding, spec.padding)))
    # [in, out_len, kernel]
    patches = sliding_window_view(xp, spec.span, axis=1)[:, :: spec.stride, :: spec.dilation][:, :out_len]
    g = spec.groups
    cin_g = spec.in_channels // g
    cout_g = spec.out_channels // g
    w = np.asarray(weights, dtype=np.float64).reshape(g, cout_g, cin_g, spec.kernel_size)
    p = patches.reshape(g, cin_g, out_len, spec.kernel_size)
    out = np.einsum("goik,gitk->got", w, p, optimize=True).reshape(spec.out_channels, out_len)
    if spec.bias:
        out += np.asarray(bias, dtype=np.float64)[:, None]
    # every patch element meets each output channel of its group once
    record_flops(2 * patches.size * cout_g + (out.size if spec.bias else 0))
    return _store(out, "conv1d")


def conv_transpose1d(
    x: FeatureMap, spec: ConvSpec, weights: np.ndarray, bias: Optional[np.ndarray] = None
) -> FeatureMap:
    """Scatter-add form; the exact adjoint of conv1d sharing stride/padding/dilation."""
    x = as_feature_map(x)
    expect(spec.transposed, "conv_transpose1d: spec.transposed must be set")
    expect(
        x.shape[0] == spec.in_channels,
        f"conv_transpose1d: in_channels mismatch, x.channels={x.shape[0]} spec.in_channels={spec.in_channels}",
    )
    _check_weights("conv_transpose1d", spec, weights, bias)
    length = x.shape[1]
    expect(length >= 1, "conv_transpose1d: empty input")
    out_len = spec.output_length(length)
    expect(out_len >= 1, f"conv_transpose1d: padding={spec.padding} crops the whole output")

    s, d = spec.stride, spec.dilation
    full_len = (length - 1) * s + spec.span
    # [out, kernel, time]
    contrib = np.tensordot(np.asarray(weights, dtype=np.float64), x.astype(np.float64), axes=([0], [0]))
    full = np.zeros((spec.out_channels, full_len))
    for k in range(spec.kernel_size):
        start = k * d
        full[:, start : start + (length - 1) * s + 1 : s] += contrib[:, k, :]
    out = full[:, spec.padding : spec.padding + out_len]
    if spec.bias:
        out = out + np.asarray(bias, dtype=np.float64)[:, None]
    # each contrib entry sums over the input channels
    record_flops(2 * contrib.size * x.shape[0] + (out.size if spec.bias else 0))
    return _store(out, "conv_transpose1d")


def leaky_relu(x: FeatureMap, slope: float) -> FeatureMap:
    expect(0.0 <= slope < 1.0, f"leaky_relu: slope={slope} outside [0, 1)")
    x = np.asarray(x, dtype=np.float32)
    return np.maximum(x, np.float32(slope) * x)


def relu(x: FeatureMap) -> FeatureMap:
    return np.maximum(np.asarray(x, dtype=np.float32), np.float32(0.0))


def tanh(x: FeatureMap) -> FeatureMap:
    return np.tanh(np.asarray(x, dtype=np.float32))


def affine_norm(x: FeatureMap, scale: np.ndarray, shift: np.ndarray) -> FeatureMap:
    """Inference-time batch norm: per-channel ``x * scale + shift``."""
    x = as_feature_map(x)
    channels = x.shape[0]
    expect(np.shape(scale) == (channels,), f"affine_norm: scale length {np.shape(scale)} != channels {channels}")
    expect(np.shape(shift) == (channels,), f"affine_norm: shift length {np.shape(shift)} != channels {channels}")
    out = x.astype(np.float64) * np.asarray(scale, np.float64)[:, None] + np.asarray(shift, np.float64)[:, None]
    return _store(out, "affine_norm")


def avg_pool1d(x: FeatureMap, kernel_size: int = 4, stride: int = 2, padding: int = 1) -> FeatureMap:
    """Average pooling; zero-padded positions are excluded from the mean."""
    x = as_feature_map(x)
    expect(kernel_size >= 1 and stride >= 1 and padding >= 0, "avg_pool1d: bad window")
    out_len = (x.shape[1] + 2 * padding - kernel_size) // stride + 1
    expect(out_len >= 1, f"avg_pool1d: time={x.shape[1]} shorter than the window")
    xp = np.pad(x.astype(np.float64), ((0, 0), (padding, padding)))
    ones = np.pad(np.ones(x.shape[1]), (padding, padding))
    sums = sliding_window_view(xp, kernel_size, axis=1)[:, ::stride][:, :out_len].sum(axis=-1)
    counts = sliding_window_view(ones, kernel_size)[::stride][:out_len].sum(axis=-1)
    return _store(sums / counts[None, :], "avg_pool1d")


def residual_dilated_block(x: FeatureMap, spec: ResidualSpec, params: Mapping[str, np.ndarray]) -> FeatureMap:
    """``x + F(x)``; params keys are ``conv1.weight``/``conv1.bias`` (+ ``conv2.*``, ``skip.*``)."""
    x = as_feature_map(x)
    expect(
        x.shape[0] == spec.channels,
        f"residual_dilated_block: channel mismatch, x.channels={x.shape[0]} block.channels={spec.channels}",
    )
    h = leaky_relu(x, spec.slope)
    h = conv1d(h, spec.conv1(), params["conv1.weight"], params.get("conv1.bias"))
    conv2 = spec.conv2()
    if conv2 is not None:
        h = leaky_relu(h, spec.slope)
        h = conv1d(h, conv2, params["conv2.weight"], params.get("conv2.bias"))
    skip = spec.skip_conv()
    base = x if skip is None else conv1d(x, skip, params["skip.weight"], params.get("skip.bias"))
    return _store(base.astype(np.float64) + h.astype(np.float64), "residual_dilated_block")
