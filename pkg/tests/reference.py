"""Independent straight-line oracles used by the tests.

These deliberately avoid the library's vectorized code paths: quantization is
done element by element in plain Python, and the mixed-precision matmul is
assembled step by step from the oracles. They exist so every optimized path
is checked against a second implementation.
"""

import math

import numpy as np

from subquant.quantizer import QuantSpec


def _round_half_away(t: float) -> float:
    return math.copysign(math.floor(abs(t) + 0.5), t)


def _quantize_group(values, bits, symmetric):
    """Scalar quantize-dequantize of one group; returns (dequantized, s, z)."""
    if symmetric:
        qmax = float(2 ** (bits - 1) - 1)
        amax = max(abs(v) for v in values)
        s = amax / qmax if amax > 0 else 1.0
        out = []
        for v in values:
            q = min(max(_round_half_away(v / s), -qmax), qmax)
            if q == qmax:
                out.append(amax)
            elif q == -qmax:
                out.append(-amax)
            else:
                out.append(q * s)
        return out, s, 0.0
    qmax = float(2**bits - 1)
    mn, mx = min(values), max(values)
    s = (mx - mn) / qmax if mx > mn else 1.0
    z = mn
    out = []
    for v in values:
        q = min(max(_round_half_away((v - z) / s), 0.0), qmax)
        if q == 0.0:
            out.append(mn)
        elif q == qmax:
            out.append(mx)
        else:
            out.append(q * s + z)
    return out, s, z


def _groups(shape, spec):
    """Index groups as lists of (row, col) tuples, matching the library's
    grouping definitions."""
    rows, cols = shape
    if spec.granularity == "per-tensor":
        return [[(i, j) for i in range(rows) for j in range(cols)]]
    if spec.granularity == "per-token":
        return [[(i, j) for j in range(cols)] for i in range(rows)]
    if spec.granularity == "per-channel":
        return [[(i, j) for i in range(rows)] for j in range(cols)]
    hd = spec.head_dim
    heads = cols // hd
    return [[(i, h * hd + j) for i in range(rows) for j in range(hd)]
            for h in range(heads)]


def quantize_reference(x: np.ndarray, spec: QuantSpec):
    """Element-wise reference quantizer; must agree with the library bit-for-bit."""
    out = np.empty_like(x, dtype=np.float64)
    scales, zps = [], []
    for idx in _groups(x.shape, spec):
        vals = [float(x[i, j]) for i, j in idx]
        deq, s, z = _quantize_group(vals, spec.bits, spec.symmetric)
        for (i, j), v in zip(idx, deq):
            out[i, j] = v
        scales.append(s)
        zps.append(z)
    return out, np.array(scales), np.array(zps)


def execute_plan_reference(x, w, plan):
    """Naive mixed-precision matmul built from the reference quantizer."""
    u = plan.partition.u
    d, r = u.shape[0], plan.partition.rank
    u_l, u_h = u[:, : d - r], u[:, d - r:]
    x_l, x_h = x @ u_l, x @ u_h
    w_l, w_h = u_l.T @ w, u_h.T @ w

    def q(m, spec):
        return m if spec is None else quantize_reference(m, spec)[0]

    return (q(x_l, plan.spec_low) @ q(w_l, plan.spec_low_w)
            + q(x_h, plan.spec_high) @ q(w_h, plan.spec_high_w))
