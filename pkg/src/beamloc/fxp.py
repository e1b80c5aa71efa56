"""Q8.8 symmetric fixed-point arithmetic with widened accumulation.

Activations and weights are 16-bit signed codes interpreted as
``value = code / 256``.  Multiply-accumulate runs on exact integers at the
Q16.16 product scale; :func:`requantize` folds an accumulator back to Q8.8
with round-to-nearest-even and saturation.  Real zero maps to code zero,
which is what makes bit-exact zero detection (and therefore row skipping)
possible downstream.

Model parameters fixed here (and documented in the README):

* accumulator width: 40-bit signed, checked, never silently wrapped;
* rounding: round-to-nearest, ties to even, on every requantization;
* overflow policy: saturation to the Q8.8 code range, not wraparound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAC_BITS = 8
SCALE = 1 << FRAC_BITS          # 256
HALF = SCALE >> 1
CODE_MIN = -(1 << 15)           # -32768
CODE_MAX = (1 << 15) - 1        # +32767
VALUE_MIN = CODE_MIN / SCALE    # -128.0
VALUE_MAX = CODE_MAX / SCALE    # +127.99609375
ULP = 1.0 / SCALE               # 0.00390625, the minimum representable step

# Accumulator headroom: a worst-case 128-term dot needs 16+16+7 = 39 bits,
# so 40 signed bits hold every in-contract MAC chain.
ACC_BITS = 40
ACC_MAX = (1 << (ACC_BITS - 1)) - 1
ACC_MIN = -(1 << (ACC_BITS - 1))


class AccumulatorOverflow(ArithmeticError):
    """A MAC chain left the 40-bit accumulator range (contract violation)."""


def quantize(x: float) -> int:
    """Round-to-nearest-even of ``x * 256``, saturated to the int16 range."""
    if not np.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    code = round(x * SCALE)  # Python round() is round-half-even
    return min(max(code, CODE_MIN), CODE_MAX)


def dequantize(code: int) -> float:
    return code / SCALE


def qmac(acc: int, a: int, b: int) -> int:
    """One exact multiply-accumulate step at Q16.16 scale."""
    acc = acc + a * b
    if not ACC_MIN <= acc <= ACC_MAX:
        raise AccumulatorOverflow(f"accumulator {acc} exceeds {ACC_BITS} bits")
    return acc


def requantize(acc: int) -> int:
    """Q16.16 accumulator -> Q8.8 code: shift right 8, RNE, saturate."""
    q, r = divmod(acc, SCALE)  # floor semantics, 0 <= r < 256
    if r > HALF or (r == HALF and q & 1):
        q += 1
    return min(max(q, CODE_MIN), CODE_MAX)


# ---------------------------------------------------------------------------
# Vectorized counterparts used by the integer engine.


def quantize_array(x: np.ndarray) -> np.ndarray:
    """Elementwise quantize; np.rint rounds half to even."""
    codes = np.clip(np.rint(np.asarray(x, dtype=np.float64) * SCALE), CODE_MIN, CODE_MAX)
    return codes.astype(np.int16)


def dequantize_array(codes: np.ndarray) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) / SCALE


def rne_shift(v: np.ndarray, bits: int) -> np.ndarray:
    """Arithmetic right shift with round-to-nearest-even, exact on int64."""
    v = np.asarray(v)
    q = v >> bits
    r = v & ((1 << bits) - 1)
    half = 1 << (bits - 1)
    return q + ((r > half) | ((r == half) & ((q & 1) == 1)))


def rne_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer division with round-to-nearest-even; b must be positive."""
    q = a // b
    r = a - q * b
    twice = 2 * r
    return q + ((twice > b) | ((twice == b) & ((q & 1) == 1)))


def check_headroom(acc: np.ndarray) -> np.ndarray:
    if acc.size and (acc.max() > ACC_MAX or acc.min() < ACC_MIN):
        raise AccumulatorOverflow(
            f"accumulator range [{acc.min()}, {acc.max()}] exceeds {ACC_BITS} bits"
        )
    return acc


def requantize_array(acc: np.ndarray) -> np.ndarray:
    q = rne_shift(acc, FRAC_BITS)
    return np.clip(q, CODE_MIN, CODE_MAX).astype(np.int16)


def qmatmul(a: np.ndarray, b: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Integer matmul of Q8.8 codes, requantized back to Q8.8.

    The int64 product accumulation is exact; the bias (Q8.8) is aligned to
    the Q16.16 accumulator scale before the single requantization.
    """
    acc = a.astype(np.int64) @ b.astype(np.int64)
    if bias is not None:
        acc = acc + (bias.astype(np.int64) << FRAC_BITS)
    check_headroom(acc)
    return requantize_array(acc)


def sat_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Saturating Q8.8 addition (residual connections)."""
    s = a.astype(np.int32) + b.astype(np.int32)
    return np.clip(s, CODE_MIN, CODE_MAX).astype(np.int16)


@dataclass(frozen=True)
class QTensor:
    """Shape-tagged matrix of Q8.8 codes, immutable once constructed."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"QTensor requires a 2-D array, got {self.data.ndim}-D")
        if self.data.dtype != np.int16:
            raise ValueError(f"QTensor requires int16 codes, got {self.data.dtype}")
        self.data.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_real(cls, x: np.ndarray) -> "QTensor":
        return cls(quantize_array(x))

    def to_real(self) -> np.ndarray:
        return dequantize_array(self.data)
