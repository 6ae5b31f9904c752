"""Complex-valued neural networks with trainable kernel activation functions.

The package implements fully complex feedforward networks whose hidden
nonlinearities are kernel expansions over a fixed dictionary in the complex
plane, including the widely linear extension with a pseudo-kernel term, a
CR-calculus backward pass for every building block, an Adagrad trainer with
early stopping, and an FFT-based complexification pipeline for image
classification benchmarks.
"""

__version__ = "0.1.0"

from .kernels import Dictionary, build_dictionary  # noqa: F401
