"""Attention activations: exact float forms and their integer LUT forms.

The sigmoid LUT holds 1025 uniformly spaced samples of sigma over
[-16, +16] (grid step 1/32) with Q8.8 outputs; inputs are clamped to the
covered interval and snapped to the nearest grid point.  The exp LUT used
by the integer softmax holds 1025 samples of exp over [-16, 0] (grid step
1/64) with Q1.15 outputs, so exp(0) is exactly 32768.

Integer row normalization (softmax and normalized sigmoid) uses a single
reciprocal per row plus error-feedback rounding: the emitted Q8.8 codes of
a row always sum to 256, i.e. exactly 1.0, while each individual entry
stays within one code of its exact value.
"""

from __future__ import annotations

import enum

import numpy as np

from .fxp import SCALE, quantize, quantize_array, rne_div, rne_shift


class ActivationKind(enum.IntEnum):
    SOFTMAX_FLOAT = 0
    SOFTMAX_INT = 1
    SIGMOID_LUT = 2
    SIGMOID_BIAS_LUT = 3
    SIGMOID_NORM_LUT = 4

    @property
    def is_softmax(self) -> bool:
        return self in (ActivationKind.SOFTMAX_FLOAT, ActivationKind.SOFTMAX_INT)


ACTIVATION_NAMES = {
    ActivationKind.SOFTMAX_FLOAT: "softmax-float",
    ActivationKind.SOFTMAX_INT: "softmax-int",
    ActivationKind.SIGMOID_LUT: "sigmoid",
    ActivationKind.SIGMOID_BIAS_LUT: "sigmoid-bias",
    ActivationKind.SIGMOID_NORM_LUT: "sigmoid-norm",
}


def activation_from_name(name: str) -> ActivationKind:
    for kind, label in ACTIVATION_NAMES.items():
        if label == name:
            return kind
    raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATION_NAMES.values())}")


# --------------------------------------------------------------------------
# Sigmoid LUT: 1025 samples over [-16, +16], step 1/32, Q8.8 outputs.

SIG_RANGE = 16.0
SIG_STEPS_PER_UNIT = 32
SIG_SIZE = 2 * int(SIG_RANGE) * SIG_STEPS_PER_UNIT + 1  # 1025
_SIG_GRID = -SIG_RANGE + np.arange(SIG_SIZE) / SIG_STEPS_PER_UNIT
SIG_TABLE = quantize_array(1.0 / (1.0 + np.exp(-_SIG_GRID)))

# A Q8.8 input code maps to a grid index through code/8 + 512 since the
# grid step is 8 codes wide.
_SIG_CODE_LIMIT = int(SIG_RANGE) * SCALE  # 4096


def sigmoid_lut(codes: np.ndarray) -> np.ndarray:
    """Elementwise LUT sigmoid on Q8.8 codes (any integer dtype)."""
    x = np.clip(np.asarray(codes, dtype=np.int64), -_SIG_CODE_LIMIT, _SIG_CODE_LIMIT)
    idx = rne_shift(x, 3) + (SIG_SIZE // 2)
    return SIG_TABLE[idx]


def sigmoid_lut_eval(code: int) -> int:
    """Scalar LUT lookup, for single Q8.8 values."""
    return int(sigmoid_lut(np.array([code]))[0])


# --------------------------------------------------------------------------
# Exp LUT for the integer softmax: 1025 samples over [-16, 0], step 1/64,
# Q1.15 outputs (exp(0) -> 32768 exactly).

EXP_ONE = 1 << 15
EXP_STEPS_PER_UNIT = 64
EXP_SIZE = int(SIG_RANGE) * EXP_STEPS_PER_UNIT + 1  # 1025
_EXP_GRID = -SIG_RANGE + np.arange(EXP_SIZE) / EXP_STEPS_PER_UNIT
EXP_TABLE = np.rint(np.exp(_EXP_GRID) * EXP_ONE).astype(np.int64)

_EXP_CODE_LIMIT = int(SIG_RANGE) * SCALE  # 4096
_RECIP_BITS = 30


def _normalize_rows(numer: np.ndarray, denom: np.ndarray) -> np.ndarray:
    """Emit Q8.8 codes for numer/denom per row, one reciprocal per row.

    Error-feedback rounding: entry i is the difference of the running
    rounded cumulative sum at i and i-1, so row totals never drift.  Rows
    with a zero denominator emit zeros.
    """
    safe = np.maximum(denom, 1)
    recip = np.where(denom > 0, rne_div(np.int64(1) << _RECIP_BITS, safe), 0)
    cum = np.cumsum(numer * recip, axis=1)
    steps = rne_shift(cum, _RECIP_BITS - 8)
    out = np.diff(steps, axis=1, prepend=0)
    return out.astype(np.int16)


def softmax_int(scores: np.ndarray) -> np.ndarray:
    """Integer-only stable softmax over each row of Q8.8 codes.

    Max subtraction happens on the raw codes, so a constant shift of a row
    changes nothing; the exp LUT then sees only non-positive inputs.
    """
    x = np.asarray(scores, dtype=np.int64)
    if x.size == 0:
        return np.zeros_like(x, dtype=np.int16)
    diff = x - x.max(axis=1, keepdims=True)
    idx = rne_shift(np.maximum(diff, -_EXP_CODE_LIMIT), 2) + (EXP_SIZE - 1)
    e = EXP_TABLE[idx]
    return _normalize_rows(e, e.sum(axis=1, keepdims=True))


def row_normalize_int(codes: np.ndarray) -> np.ndarray:
    """Normalize non-negative Q8.8 rows to unit sum (normalized sigmoid)."""
    q = np.asarray(codes, dtype=np.int64)
    if q.size == 0:
        return np.zeros_like(q, dtype=np.int16)
    return _normalize_rows(q, q.sum(axis=1, keepdims=True))


def sigmoid_bias_code(n: int) -> int:
    """Q8.8 code of the length-compensating bias -ln(n)."""
    return quantize(-float(np.log(n)))


# --------------------------------------------------------------------------
# Float reference forms.


def softmax_rows(s: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over each row."""
    if s.size == 0:
        return s.copy()
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(s: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-s))


def sigmoid_rows_normalized(s: np.ndarray) -> np.ndarray:
    a = sigmoid(s)
    if a.size == 0:
        return a
    return a / a.sum(axis=1, keepdims=True)
