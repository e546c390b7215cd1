"""Basis-MelGAN engine: kernels, spectral features, basis decomposition,
model graphs with their FLOP analyzer, losses and the RTF benchmark."""
from vocoder.basis import BasisMatrix, decompose_signal, decompose_window, learn_basis, si_snr, synthesize
from vocoder.complexity import ComplexityReport, analyze
from vocoder.forward import ModelWeights, count_params, forward_generator, instantiate_weights
from vocoder.graphs import build_discriminator, build_preset, preset_names

__all__ = [
    "BasisMatrix",
    "ComplexityReport",
    "ModelWeights",
    "analyze",
    "build_discriminator",
    "build_preset",
    "count_params",
    "decompose_signal",
    "decompose_window",
    "forward_generator",
    "instantiate_weights",
    "learn_basis",
    "preset_names",
    "si_snr",
    "synthesize",
]
