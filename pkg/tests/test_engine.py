import dataclasses
import math

import numpy as np
import pytest

from beamloc.activations import ActivationKind, sigmoid_bias_code
from beamloc.engine import EngineConfig, FloatEngine, IntEngine, make_engine
from beamloc.fxp import dequantize_array, quantize, quantize_array
from beamloc.router import RouterState
from beamloc.sparsity import RowMask, SparsityConfig
from beamloc.weights import random_bundle
from oracles import masked_dense_layer_int, naive_matmul_float, naive_matmul_q


def _engines(bundle, **cfg):
    ecfg = EngineConfig(**cfg)
    return FloatEngine(bundle, ecfg), IntEngine(bundle, ecfg)


def _mask(bits):
    skip = np.array(bits, dtype=bool)
    return RowMask(skip=skip, zero_counts=np.where(skip, 99, 0).astype(np.int64))


# --- projections -----------------------------------------------------------


def test_qkv_identity_weight(toy_bundle):
    fe, ie = _engines(toy_bundle)
    seg = toy_bundle.segments["S1"][0]
    eye = dataclasses.replace(seg, w_q=np.eye(4), w_k=np.eye(4), w_v=np.eye(4))
    x = np.array([[0.5, -1.25, 3.0, 0.0], [2.0, 0.25, -0.75, 1.0]])
    q, k, v = fe.qkv_project(x, eye)
    assert np.array_equal(q, x) and np.array_equal(k, x) and np.array_equal(v, x)
    eye_q = dataclasses.replace(
        ie.bundle.segments["S1"][0],
        w_q=quantize_array(np.eye(4)), w_k=quantize_array(np.eye(4)), w_v=quantize_array(np.eye(4)),
    )
    xq = quantize_array(x)
    q, k, v = ie.qkv_project(xq, eye_q)
    assert np.array_equal(q, xq) and np.array_equal(k, xq) and np.array_equal(v, xq)


def test_qkv_zero_input(toy_bundle):
    fe, ie = _engines(toy_bundle)
    for eng, x in ((fe, np.zeros((3, 4))), (ie, np.zeros((3, 4), dtype=np.int16))):
        seg = eng.bundle.segments["S1"][0]
        q, k, v = eng.qkv_project(x, seg)
        assert not q.any() and not k.any() and not v.any()


def test_qkv_matches_naive_oracles(rng, toy_bundle):
    fe, ie = _engines(toy_bundle)
    seg_f = toy_bundle.segments["S1"][0]
    seg_q = ie.bundle.segments["S1"][0]
    for _ in range(25):
        x = rng.uniform(-2, 2, size=(4, 4))
        q, _, _ = fe.qkv_project(x, seg_f)
        assert np.max(np.abs(q - naive_matmul_float(x, seg_f.w_q))) < 1e-12
        xq = quantize_array(x)
        qi, _, _ = ie.qkv_project(xq, seg_q)
        assert np.array_equal(qi, naive_matmul_q(xq, seg_q.w_q))


# --- attention scores ------------------------------------------------------


def test_scores_gamma_zero(toy_bundle):
    fe, ie = _engines(toy_bundle)
    qh = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert not fe.attention_scores(qh, qh, 0.0).any()
    assert not ie.attention_scores(quantize_array(qh), quantize_array(qh), 0.0).any()


def test_scores_one_hot_gram(toy_bundle):
    fe, _ = _engines(toy_bundle)
    qh = np.eye(2)
    s = fe.attention_scores(qh, qh, math.sqrt(2))
    assert np.allclose(s, np.eye(2))


def test_scores_match_explicit_form(rng, toy_bundle):
    from beamloc.fxp import requantize

    fe, ie = _engines(toy_bundle)
    for _ in range(25):
        gamma = float(rng.uniform(-1, 1))
        qh = rng.uniform(-2, 2, size=(3, 2))
        kh = rng.uniform(-2, 2, size=(3, 2))
        ref = gamma * naive_matmul_float(qh, kh.T) / math.sqrt(2)
        assert np.max(np.abs(fe.attention_scores(qh, kh, gamma) - ref)) < 1e-12
        # integer path: requantized dot, then one folded Q8.8 multiplier
        qq, kq = quantize_array(qh), quantize_array(kh)
        raw = naive_matmul_q(qq, kq.T)
        m = quantize(gamma / math.sqrt(2))
        expect = np.array([[requantize(int(r) * m) for r in row] for row in raw])
        assert np.array_equal(ie.attention_scores(qq, kq, gamma), expect)


# --- head output and mha ---------------------------------------------------


def test_head_output_identity_and_zero(toy_bundle):
    fe, ie = _engines(toy_bundle)
    vh = np.array([[1.0, -2.0], [0.5, 0.25]])
    assert np.array_equal(fe.head_output(np.eye(2), vh), vh)
    assert not fe.head_output(np.zeros((2, 2)), vh).any()
    vq = quantize_array(vh)
    eye_q = quantize_array(np.eye(2))
    assert np.array_equal(ie.head_output(eye_q, vq), vq)


def test_head_output_matches_oracle(rng, toy_bundle):
    fe, ie = _engines(toy_bundle)
    for _ in range(25):
        a = rng.uniform(0, 1, size=(3, 3))
        vh = rng.uniform(-2, 2, size=(3, 2))
        assert np.max(np.abs(fe.head_output(a, vh) - naive_matmul_float(a, vh))) < 1e-12
        aq, vq = quantize_array(a), quantize_array(vh)
        assert np.array_equal(ie.head_output(aq, vq), naive_matmul_q(aq, vq))


def test_mha_all_rows_skipped_is_pure_residual(toy_bundle):
    fe, ie = _engines(toy_bundle)
    mask = _mask([True] * 8)
    x = np.arange(32, dtype=np.float64).reshape(8, 4) / 16
    assert np.array_equal(fe.mha(x, toy_bundle.segments["S1"][0], mask), x)
    xq = quantize_array(x)
    assert np.array_equal(ie.mha(xq, ie.bundle.segments["S1"][0], mask), xq)


def test_mha_zero_wo_is_residual_only(toy_bundle, rng):
    fe, _ = _engines(toy_bundle)
    seg = dataclasses.replace(toy_bundle.segments["S1"][0], w_o=np.zeros((4, 4)))
    x = rng.uniform(-1, 1, size=(8, 4))
    assert np.allclose(fe.mha(x, seg), x)


# --- ffn and coordinate head ------------------------------------------------


def test_ffn_bias_chase(toy_bundle):
    fe, _ = _engines(toy_bundle)
    seg = toy_bundle.segments["S1"][0]
    zero_in = np.zeros((5, 4))
    expect = np.maximum(seg.ffn_b1, 0.0) @ seg.ffn_w2 + seg.ffn_b2
    assert np.allclose(fe.ffn(zero_in, seg), np.tile(expect, (5, 1)))
    # all-negative pre-activations: layer 1 dies, only b2 remains
    killed = dataclasses.replace(seg, ffn_b1=np.full(6, -50.0))
    assert np.allclose(fe.ffn(zero_in, killed), np.tile(killed.ffn_b2, (5, 1)))


def test_ffn_matches_oracle(rng, toy_bundle):
    fe, ie = _engines(toy_bundle)
    seg_f = toy_bundle.segments["S1"][0]
    seg_q = ie.bundle.segments["S1"][0]
    for _ in range(25):
        x = rng.uniform(-2, 2, size=(3, 4))
        h = np.maximum(naive_matmul_float(x, seg_f.ffn_w1, seg_f.ffn_b1), 0.0)
        ref = naive_matmul_float(h, seg_f.ffn_w2, seg_f.ffn_b2)
        assert np.max(np.abs(fe.ffn(x, seg_f) - ref)) < 1e-12
        xq = quantize_array(x)
        hq = np.maximum(naive_matmul_q(xq, seg_q.ffn_w1, seg_q.ffn_b1), 0)
        refq = naive_matmul_q(hq, seg_q.ffn_w2, seg_q.ffn_b2)
        assert np.array_equal(ie.ffn(xq, seg_q), refq)


def test_leaky_slope_exact():
    bundle = random_bundle(seed=1, n=8, d=4, heads=2, d_ff=6, d_h=5, pool_k=2, pool_p=0)
    fe, ie = _engines(bundle)
    z = np.array([[-1.0, 2.0]])
    assert np.array_equal(fe.leaky_relu(z), np.array([[-0.3, 2.0]]))
    zq = quantize_array(z)
    out = ie.leaky_relu(zq)
    # slope quantizes to 77/256 = 0.30078125: systematic, documented offset
    assert out[0, 0] == -77
    assert dequantize_array(out)[0, 0] == -0.30078125
    assert out[0, 1] == zq[0, 1]


def test_fcnn_affine_when_positive(toy_bundle, rng):
    fe, _ = _engines(toy_bundle)
    head = toy_bundle.fcnn["S1"]
    v = np.abs(rng.uniform(1, 2, size=16))
    lifted = dataclasses.replace(head, b1=np.full(5, 10.0))  # force positive hidden
    ref = (v @ lifted.w1 + lifted.b1) @ lifted.w2 + lifted.b2
    assert np.allclose(fe.fcnn(v, lifted), ref)


def test_fcnn_matches_oracle(rng, toy_bundle):
    from beamloc.fxp import requantize

    fe, ie = _engines(toy_bundle)
    head_f = toy_bundle.fcnn["S1"]
    head_q = ie.bundle.fcnn["S1"]
    for _ in range(25):
        v = rng.uniform(-1, 1, size=16)
        h = naive_matmul_float(v.reshape(1, -1), head_f.w1, head_f.b1)
        h = np.where(h >= 0, h, 0.3 * h)
        ref = naive_matmul_float(h, head_f.w2, head_f.b2)[0]
        assert np.max(np.abs(fe.fcnn(v, head_f) - ref)) < 1e-12
        vq = quantize_array(v.reshape(1, -1))
        hq = naive_matmul_q(vq, head_q.w1, head_q.b1)
        hq = np.array([[c if c >= 0 else requantize(int(c) * 77) for c in hq[0]]], dtype=np.int16)
        refq = naive_matmul_q(hq, head_q.w2, head_q.b2)[0]
        assert np.array_equal(ie.fcnn(vq[0], head_q), refq)


# --- pooling ----------------------------------------------------------------


def test_maxpool_identity_when_k1():
    bundle = random_bundle(seed=2, n=4, d=4, heads=2, d_ff=4, d_h=4, pool_k=1, pool_p=0)
    fe = FloatEngine(bundle)
    x = np.arange(16, dtype=np.float64).reshape(4, 4)
    assert np.array_equal(fe.maxpool_flatten(x), x.reshape(-1))


def test_maxpool_default_geometry(full_bundle):
    fe = FloatEngine(full_bundle)
    x = np.ones((128, 46))
    pooled = fe.maxpool_flatten(x)
    assert pooled.shape == (1536,)  # (46 + 2) / 4 = 12 per row
    # zero padding never beats a positive constant
    assert np.all(pooled == 1.0)


def test_maxpool_rejects_bad_geometry(full_bundle):
    fe = FloatEngine(full_bundle)
    with pytest.raises(ValueError):
        fe.maxpool_flatten(np.ones((128, 45)))


def test_maxpool_windows(rng, toy_bundle):
    fe = FloatEngine(toy_bundle)
    x = rng.uniform(-1, 1, size=(8, 4))
    pooled = fe.maxpool_flatten(x)
    ref = np.concatenate([[max(row[0], row[1]), max(row[2], row[3])] for row in x])
    assert np.array_equal(pooled, ref)


# --- full inference ---------------------------------------------------------


def test_infer_layer_counts(full_bundle, s1_batch):
    for scenario, layers in (("S1", 1), ("S2", 2), ("S3", 2)):
        fe = FloatEngine(full_bundle, EngineConfig(scenario_override=scenario))
        trace = {}
        fe.infer(s1_batch[0], trace=trace)
        assert [k for k in trace if k.startswith("layer")] == [f"layer{i+1}" for i in range(layers)]


def test_infer_unknown_scenario_rejected(full_bundle, s1_batch):
    fe = FloatEngine(full_bundle, EngineConfig(scenario_override="S7"))
    with pytest.raises(ValueError):
        fe.infer(s1_batch[0])


def test_infer_routing_updates_state(full_bundle, s1_batch):
    fe = FloatEngine(full_bundle)
    state = RouterState.create(5)
    res = fe.infer(s1_batch[0], state=state)
    assert len(state.window) == 1
    assert res.scenario in ("S1", "S2", "S3")
    # override bypasses the router entirely
    fe2 = FloatEngine(full_bundle, EngineConfig(scenario_override="S2"))
    state2 = RouterState.create(5)
    res2 = fe2.infer(s1_batch[0], state=state2)
    assert res2.scenario == "S2" and len(state2.window) == 0


def test_zero_fingerprint_bias_chase(full_bundle):
    # Analytic forward pass of an all-zero input with masking disabled:
    # attention contributes nothing anywhere (V = 0), so each encoder layer
    # reduces to the FFN bias chase, then pool + head.
    fe = FloatEngine(full_bundle, EngineConfig(scenario_override="S2"))
    zero = np.zeros((128, 46))
    res = fe.infer(zero)

    x = np.zeros((128, 46))
    for seg in full_bundle.segments["S2"]:
        x = np.tile(np.maximum(x[0] @ seg.ffn_w1 + seg.ffn_b1, 0.0) @ seg.ffn_w2 + seg.ffn_b2,
                    (128, 1))
    pooled = fe.maxpool_flatten(x)
    head = full_bundle.fcnn["S2"]
    h = pooled @ head.w1 + head.b1
    h = np.where(h >= 0, h, 0.3 * h)
    expect = h @ head.w2 + head.b2
    assert np.allclose(res.coords, expect, atol=1e-12)


def test_engine_agreement_without_sparsity(full_bundle, s1_batch):
    fe, ie = _engines(full_bundle, scenario_override="S1")
    for fp in s1_batch[:3]:
        cf = fe.infer(fp).coords
        ci = ie.infer(fp).coords
        assert np.max(np.abs(cf - ci)) < 0.05  # loose sanity; tight bound in acceptance


def test_mask_equivalence_toy_spot_checks(toy_bundle, rng):
    ie = IntEngine(toy_bundle)
    seg = ie.bundle.segments["S1"][0]
    m_code = quantize(toy_bundle.segments["S1"][0].gamma / math.sqrt(2))
    bias_code = sigmoid_bias_code(8)
    for bits in ([0] * 8, [1] * 8, [1, 0, 1, 0, 1, 0, 1, 0], [0, 0, 1, 1, 0, 0, 1, 1]):
        mask = _mask(bits)
        x = quantize_array(rng.uniform(0, 1.5, size=(8, 4)))
        got = ie.encoder_layer(x, seg, mask)
        ref = masked_dense_layer_int(
            x, seg, mask, kind=toy_bundle.activation, bias_code=bias_code,
            m_code=m_code, heads=2,
        )
        assert np.array_equal(got, ref)


def test_encoder_folding_is_bit_exact(full_bundle, s1_batch):
    # one shared engine instance run twice == two fresh instances
    ie_shared = IntEngine(full_bundle, EngineConfig(scenario_override="S2"))
    x = quantize_array(s1_batch[0])
    segs = ie_shared.bundle.segments["S2"]
    once = ie_shared.encoder_layer(ie_shared.encoder_layer(x, segs[0]), segs[1])
    fresh1 = IntEngine(full_bundle).encoder_layer(x, segs[0])
    fresh2 = IntEngine(full_bundle).encoder_layer(fresh1, segs[1])
    assert np.array_equal(once, fresh2)


def test_ffn_residual_flag(toy_bundle, rng):
    x = rng.uniform(0, 1, size=(8, 4))
    plain = FloatEngine(toy_bundle).encoder_layer(x, toy_bundle.segments["S1"][0])
    seg = toy_bundle.segments["S1"][0]
    resid = FloatEngine(toy_bundle, EngineConfig(ffn_residual=True)).encoder_layer(x, seg)
    mha = FloatEngine(toy_bundle).mha(x, seg)
    assert np.allclose(resid, plain + mha)


def test_make_engine(full_bundle):
    assert isinstance(make_engine("float", full_bundle), FloatEngine)
    assert isinstance(make_engine("int", full_bundle), IntEngine)
    with pytest.raises(ValueError):
        make_engine("quantum", full_bundle)


def test_softmax_rows_sum_inside_engine(full_bundle, s1_batch):
    for kind in (ActivationKind.SOFTMAX_INT, ActivationKind.SIGMOID_NORM_LUT):
        ie = IntEngine(full_bundle, EngineConfig(activation=kind, scenario_override="S1"))
        trace = {}
        ie.infer(s1_batch[0], trace=trace)
        attn = trace["layer1"]["attn0"]
        sums = dequantize_array(attn).sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) <= 2**-8
