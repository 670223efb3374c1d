"""Simulated uniform quantization (quantize-dequantize) with per-tensor,
per-token, per-channel and per-head granularities, plus the analytic
relative-error coefficients used by the error model.

Conventions, fixed for reproducibility:
  - symmetric grid is the restricted range +/-(2^(N-1)-1) with zero-point 0
    and scale max|group| / (2^(N-1)-1);
  - asymmetric grid is [0, 2^N-1] with scale (max-min)/(2^N-1), zero-point min;
  - rounding ties go away from zero;
  - clipping is applied after rounding;
  - a group whose dynamic range is zero gets scale 1 (and zero-point 0 when
    the group is all zero), so the output reproduces the constant exactly;
  - the extreme grid levels dequantize to the observed group max/min exactly,
    which makes quantization idempotent bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .linalg import as_matrix

PER_TENSOR = "per-tensor"
PER_TOKEN = "per-token"
PER_CHANNEL = "per-channel"
PER_HEAD = "per-head"
GRANULARITIES = (PER_TENSOR, PER_TOKEN, PER_CHANNEL, PER_HEAD)


@dataclass(frozen=True)
class QuantSpec:
    """Bit-width, symmetry and grouping of one quantizer."""

    bits: int
    symmetric: bool
    granularity: str
    head_dim: int | None = None

    def __post_init__(self):
        if not 2 <= self.bits <= 16:
            raise ValueError(f"bits must be in [2, 16], got {self.bits}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.granularity == PER_HEAD:
            if self.head_dim is None or self.head_dim < 1:
                raise ValueError("per-head granularity requires head_dim >= 1")
        elif self.head_dim is not None:
            raise ValueError("head_dim only applies to per-head granularity")

    def to_json(self) -> dict:
        d = {"bits": self.bits, "symmetric": self.symmetric,
             "granularity": self.granularity}
        if self.head_dim is not None:
            d["head_dim"] = self.head_dim
        return d

    @classmethod
    def from_json(cls, d: dict) -> "QuantSpec":
        return cls(bits=d["bits"], symmetric=d["symmetric"],
                   granularity=d["granularity"], head_dim=d.get("head_dim"))


@dataclass(frozen=True)
class QuantResult:
    dequantized: np.ndarray
    scales: np.ndarray
    zero_points: np.ndarray


def _round_half_away(t: np.ndarray) -> np.ndarray:
    return np.sign(t) * np.floor(np.abs(t) + 0.5)


def _to_groups(x: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """View the matrix as (groups, group_size)."""
    rows, cols = x.shape
    if spec.granularity == PER_TENSOR:
        return x.reshape(1, rows * cols)
    if spec.granularity == PER_TOKEN:
        return x.reshape(rows, cols)
    if spec.granularity == PER_CHANNEL:
        return x.T.reshape(cols, rows)
    # per-head: contiguous blocks of head_dim columns, one group per block
    hd = spec.head_dim
    if cols % hd != 0:
        raise DimensionMismatchError(
            f"head_dim {hd} does not divide column count {cols}")
    heads = cols // hd
    return x.reshape(rows, heads, hd).transpose(1, 0, 2).reshape(heads, rows * hd)


def _from_groups(g: np.ndarray, shape: tuple[int, int], spec: QuantSpec) -> np.ndarray:
    rows, cols = shape
    if spec.granularity == PER_TENSOR:
        return g.reshape(rows, cols)
    if spec.granularity == PER_TOKEN:
        return g.reshape(rows, cols)
    if spec.granularity == PER_CHANNEL:
        return g.reshape(cols, rows).T.copy()
    hd = spec.head_dim
    heads = cols // hd
    return g.reshape(heads, rows, hd).transpose(1, 0, 2).reshape(rows, cols)


def quantize(x: np.ndarray, spec: QuantSpec) -> QuantResult:
    """Group-wise round-to-nearest quantize-dequantize simulation."""
    x = as_matrix(x, "x")
    g = _to_groups(x, spec)
    if spec.symmetric:
        qmax = float(2 ** (spec.bits - 1) - 1)
        amax = np.max(np.abs(g), axis=1, keepdims=True)
        s = np.where(amax > 0, amax / qmax, 1.0)
        q = np.clip(_round_half_away(g / s), -qmax, qmax)
        deq = q * s
        # snap extreme levels to the observed extremes: this is the exact value
        # of qmax*s in real arithmetic and makes requantization a no-op
        deq = np.where(q == qmax, amax, deq)
        deq = np.where(q == -qmax, -amax, deq)
        scales = s[:, 0].copy()
        zps = np.zeros_like(scales)
    else:
        qmax = float(2**spec.bits - 1)
        mn = np.min(g, axis=1, keepdims=True)
        mx = np.max(g, axis=1, keepdims=True)
        rng = mx - mn
        s = np.where(rng > 0, rng / qmax, 1.0)
        z = mn
        q = np.clip(_round_half_away((g - z) / s), 0.0, qmax)
        deq = q * s + z
        deq = np.where(q == 0, mn, deq)
        deq = np.where(q == qmax, mx, deq)
        scales = s[:, 0].copy()
        zps = z[:, 0].copy()
    return QuantResult(
        dequantized=_from_groups(deq, x.shape, spec),
        scales=scales,
        zero_points=zps,
    )


def relative_error_coeff(bits: int) -> float:
    """Relative quantization-noise energy coefficient: 1/(2^(N-1)-1)^2."""
    if bits < 2:
        raise ValueError(f"bits must be >= 2, got {bits}")
    return 1.0 / float(2 ** (bits - 1) - 1) ** 2


def combined_error_coeff(bits: int, subspace_dim: int) -> float:
    """Combined per-subspace coefficient (alpha^2 + beta^2) / d_k."""
    if subspace_dim < 1:
        raise ValueError(f"subspace_dim must be >= 1, got {subspace_dim}")
    return 2.0 * relative_error_coeff(bits) / subspace_dim
