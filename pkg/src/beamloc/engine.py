"""Float-oracle and integer-only Q8.8 inference engines.

Both engines share one structural flow and differ only in their numeric
primitives.  Masked execution contract: a skipped row contributes nothing
as query, key, or value; its layer-1 output is its (thresholded) input
row, carried through the residual path.  The second encoder layer, when a
scenario has one, always processes all rows.

The integer engine requantizes once per matrix product (round-to-nearest-
even, saturating), evaluates sigmoid variants through the Q8.8 LUT, and
folds ``gamma / sqrt(d_k)`` into a single precomputed Q8.8 multiplier
applied after the score dot products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import activations as act
from .activations import ActivationKind
from .fxp import (
    dequantize,
    dequantize_array,
    quantize,
    quantize_array,
    qmatmul,
    requantize_array,
    sat_add,
)
from .router import RouterState, route
from .sparsity import RowMask, SparsityConfig, build_row_mask, threshold_elements
from .weights import ModelBundle, SCENARIOS


@dataclass(frozen=True)
class EngineConfig:
    activation: ActivationKind | None = None     # None: use the bundle's
    sparsity: dict | None = None                 # scenario -> SparsityConfig
    scenario_override: str | None = None
    delay_bin: int | None = None
    ffn_residual: bool = False

    def sparsity_for(self, scenario: str) -> SparsityConfig | None:
        if self.sparsity is None:
            return None
        return self.sparsity.get(scenario)


@dataclass
class InferResult:
    scenario: str
    coords: np.ndarray  # (2,) float
    mask: RowMask
    logits: np.ndarray
    trace: dict = field(default_factory=dict)


class _EngineBase:
    """Structural flow shared by both engines; numeric primitives differ."""

    def __init__(self, bundle: ModelBundle, cfg: EngineConfig | None = None):
        self.cfg = cfg or EngineConfig()
        self.bundle = self._prepare_bundle(bundle)
        self.activation = (
            self.cfg.activation if self.cfg.activation is not None else bundle.activation
        )
        self.delay_bin = (
            self.cfg.delay_bin if self.cfg.delay_bin is not None else bundle.delay_bin
        )

    # -- numeric primitives, provided by subclasses --------------------------

    def _prepare_bundle(self, bundle):
        raise NotImplementedError

    def prepare_input(self, fingerprint):
        raise NotImplementedError

    def matmul(self, x, w, bias=None):
        raise NotImplementedError

    def residual_add(self, a, b):
        raise NotImplementedError

    def relu(self, x):
        raise NotImplementedError

    def leaky_relu(self, x):
        raise NotImplementedError

    def scale_scores(self, raw, gamma, d_k):
        raise NotImplementedError

    def activation_op(self, scores):
        raise NotImplementedError

    def threshold(self, mat, t_elem):
        raise NotImplementedError

    def coords_of(self, out):
        raise NotImplementedError

    # -- operations ----------------------------------------------------------

    def slp_logits(self, x):
        """Class logits from one delay-bin column: W x + b."""
        return self.matmul(x.reshape(1, -1), self.bundle.slp_w.T, self.bundle.slp_b)[0]

    def qkv_project(self, x, seg):
        return (
            self.matmul(x, seg.w_q),
            self.matmul(x, seg.w_k),
            self.matmul(x, seg.w_v),
        )

    def attention_scores(self, qh, kh, gamma):
        raw = self.matmul(qh, kh.T)
        return self.scale_scores(raw, gamma, qh.shape[1])

    def head_output(self, a, vh):
        return self.matmul(a, vh)

    def mha(self, x, seg, mask: RowMask | None = None, trace=None):
        """Multi-head attention over kept rows with residual pass-through.

        Skipped rows bypass every product and emit their input row
        unchanged; kept rows get input + concat(heads) @ w_o.
        """
        kept = np.flatnonzero(~mask.skip) if mask is not None else np.arange(x.shape[0])
        out = x.copy()
        if kept.size == 0:
            return out
        xk = x[kept]
        q, k, v = self.qkv_project(xk, seg)
        d_k = self.bundle.d_k
        heads = []
        for h in range(self.bundle.heads):
            cols = slice(h * d_k, (h + 1) * d_k)
            scores = self.attention_scores(q[:, cols], k[:, cols], seg.gamma)
            weights = self.activation_op(scores)
            heads.append(self.head_output(weights, v[:, cols]))
            if trace is not None:
                trace[f"scores{h}"] = scores
                trace[f"attn{h}"] = weights
                trace[f"head{h}"] = heads[-1]
        proj = self.matmul(np.concatenate(heads, axis=1), seg.w_o)
        out[kept] = self.residual_add(xk, proj)
        if trace is not None:
            trace.update(q=q, k=k, v=v, proj=proj, mha=out.copy(), kept=kept)
        return out

    def ffn(self, x, seg, trace=None):
        h1 = self.relu(self.matmul(x, seg.ffn_w1, seg.ffn_b1))
        out = self.matmul(h1, seg.ffn_w2, seg.ffn_b2)
        if trace is not None:
            trace["ffn_h1"] = h1
            trace["ffn_out"] = out
        return out

    def encoder_layer(self, x, seg, mask: RowMask | None = None, trace=None):
        y = self.mha(x, seg, mask, trace=trace)
        kept = np.flatnonzero(~mask.skip) if mask is not None else np.arange(x.shape[0])
        if kept.size:
            ffn_out = self.ffn(y[kept], seg, trace=trace)
            if self.cfg.ffn_residual:
                ffn_out = self.residual_add(y[kept], ffn_out)
            y = y.copy()
            y[kept] = ffn_out
        if trace is not None:
            trace["layer_out"] = y.copy()
        return y

    def maxpool_flatten(self, x):
        """Per-row zero-pad to d + p, max over width-k windows, flatten."""
        k, p = self.bundle.pool_k, self.bundle.pool_p
        n, d = x.shape
        if (d + p) % k != 0:
            raise ValueError(f"(d + p) = {d + p} not divisible by pool factor {k}")
        padded = np.concatenate([x, np.zeros((n, p), dtype=x.dtype)], axis=1)
        pooled = padded.reshape(n, (d + p) // k, k).max(axis=2)
        return pooled.reshape(-1)

    def fcnn(self, v, params, trace=None):
        h = self.leaky_relu(self.matmul(v.reshape(1, -1), params.w1, params.b1))
        out = self.matmul(h, params.w2, params.b2)[0]
        if trace is not None:
            trace["fcnn_h"] = h[0]
            trace["fcnn_out"] = out
        return out

    def infer(self, fingerprint, state: RouterState | None = None, trace=None) -> InferResult:
        """Route, threshold/mask, run the folded encoder, pool, and regress.

        The row mask gates layer-1 computation only.  With a scenario
        override the router is bypassed: logits are still produced but the
        voting state is untouched.
        """
        mat0 = self.prepare_input(fingerprint)
        logits = self.slp_logits(mat0[:, self.delay_bin])
        if self.cfg.scenario_override is not None:
            scenario = self.cfg.scenario_override
            if scenario not in SCENARIOS:
                raise ValueError(f"unknown scenario {scenario!r}")
        else:
            if state is None:
                state = RouterState.create(self.bundle.router_window)
            scenario = route(state, np.asarray(logits, dtype=np.float64))
        if scenario not in self.bundle.segments:
            raise ValueError(f"bundle has no segments for scenario {scenario}")

        scfg = self.cfg.sparsity_for(scenario)
        if scfg is not None:
            mat = self.threshold(mat0, scfg.t_elem)
            mask = build_row_mask(mat, scfg)
        else:
            mat = mat0
            mask = RowMask.keep_all(mat0.shape[0])

        if trace is not None:
            trace.update(input=mat0, thresholded=mat, mask=mask, logits=logits)

        y = mat
        for i, seg in enumerate(self.bundle.layers(scenario)):
            layer_trace = {} if trace is not None else None
            y = self.encoder_layer(y, seg, mask if i == 0 else None, trace=layer_trace)
            if trace is not None:
                trace[f"layer{i + 1}"] = layer_trace
        vec = self.maxpool_flatten(y)
        out = self.fcnn(vec, self.bundle.fcnn[scenario], trace=trace)
        if trace is not None:
            trace["pooled"] = vec
        return InferResult(
            scenario=scenario,
            coords=self.coords_of(out),
            mask=mask,
            logits=np.asarray(dequantize_array(logits) if self.is_integer else logits),
            trace=trace if trace is not None else {},
        )

    is_integer = False


class FloatEngine(_EngineBase):
    """Float64 oracle; exact activations, unquantized constants."""

    is_integer = False

    def _prepare_bundle(self, bundle):
        return bundle.dequantized()

    def prepare_input(self, fingerprint):
        return np.array(fingerprint, dtype=np.float64)

    def matmul(self, x, w, bias=None):
        out = x @ w
        return out + bias if bias is not None else out

    def residual_add(self, a, b):
        return a + b

    def relu(self, x):
        return np.maximum(x, 0.0)

    def leaky_relu(self, x):
        return np.where(x >= 0.0, x, 0.3 * x)

    def scale_scores(self, raw, gamma, d_k):
        return raw * (gamma / math.sqrt(d_k))

    def activation_op(self, scores):
        kind = self.activation
        if kind.is_softmax:
            return act.softmax_rows(scores)
        if kind == ActivationKind.SIGMOID_LUT:
            return act.sigmoid(scores)
        if kind == ActivationKind.SIGMOID_BIAS_LUT:
            return act.sigmoid(scores - math.log(self.bundle.n))
        return act.sigmoid_rows_normalized(scores)

    def threshold(self, mat, t_elem):
        return threshold_elements(mat, t_elem)

    def coords_of(self, out):
        return np.asarray(out, dtype=np.float64)


class IntEngine(_EngineBase):
    """Integer-only Q8.8 engine; every product requantizes exactly once."""

    is_integer = True

    def _prepare_bundle(self, bundle):
        return bundle.quantized()

    def prepare_input(self, fingerprint):
        return quantize_array(fingerprint)

    def matmul(self, x, w, bias=None):
        return qmatmul(x, w, bias)

    def residual_add(self, a, b):
        return sat_add(a, b)

    def relu(self, x):
        return np.maximum(x, np.int16(0))

    def leaky_relu(self, x):
        # slope 0.3 quantizes to code 77, i.e. an effective 0.30078125
        neg = requantize_array(x.astype(np.int64) * 77)
        return np.where(x >= 0, x, neg)

    def scale_scores(self, raw, gamma, d_k):
        multiplier = quantize(gamma / math.sqrt(d_k))
        return requantize_array(raw.astype(np.int64) * multiplier)

    def activation_op(self, scores):
        kind = self.activation
        if kind.is_softmax:
            return act.softmax_int(scores)
        if kind == ActivationKind.SIGMOID_LUT:
            return act.sigmoid_lut(scores)
        if kind == ActivationKind.SIGMOID_BIAS_LUT:
            biased = scores.astype(np.int32) + act.sigmoid_bias_code(self.bundle.n)
            return act.sigmoid_lut(biased)
        return act.row_normalize_int(act.sigmoid_lut(scores))

    def threshold(self, mat, t_elem):
        t_code = quantize(t_elem)
        return np.where(mat < t_code, np.int16(0), mat)

    def coords_of(self, out):
        return dequantize_array(out)


def make_engine(kind: str, bundle: ModelBundle, cfg: EngineConfig | None = None):
    if kind == "float":
        return FloatEngine(bundle, cfg)
    if kind == "int":
        return IntEngine(bundle, cfg)
    raise ValueError(f"unknown engine kind {kind!r}")
