"""Closed-form cycle model of the mixed-dataflow vector-engine pipeline.

Stage costs follow a one-result-per-cycle discipline: the 46-wide
input-stationary engine retires one length-46 dot product per cycle in
the projections and FFN, the 23-wide score engine one length-23 dot per
cycle, and output-stationary stages (head products, SLP, coordinate head)
retire one operand broadcast per cycle across their lanes.  Sigmoid
variants stream through the activation stage and add only pipeline fill;
softmax serializes two full passes per row plus one division per row, and
normalized sigmoid one accumulation pass plus the divisions.

Beyond the per-stage compute, each encoder layer pays a fixed
control/weight-streaming overhead and the whole pipeline a multiplicative
calibration factor.  Both constants are reported with every result so
calibrated runs are self-describing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .activations import ActivationKind
from .sparsity import RowMask
from .weights import SCENARIOS

STAGES = (
    "slp", "sparsity_detect", "qkv", "scores", "activation",
    "headmul", "wo", "ffn1", "ffn2", "pool", "fcnn",
)

LAYER_STAGES = ("qkv", "scores", "activation", "headmul", "wo", "ffn1", "ffn2")

LAYERS_PER_SCENARIO = {"S1": 1, "S2": 2, "S3": 2}

_ALLOWED_WIDTHS = frozenset({23, 32, 46, 64})


@dataclass(frozen=True)
class EngineSpec:
    width: int
    dataflow: str  # "input_stationary" | "output_stationary"
    pipeline_fill: int = 6  # multiplier stage + log2(46)-deep adder tree

    def __post_init__(self):
        if self.width not in _ALLOWED_WIDTHS:
            raise ValueError(f"PE width must be one of {sorted(_ALLOWED_WIDTHS)}")
        if self.dataflow not in ("input_stationary", "output_stationary"):
            raise ValueError(f"unknown dataflow {self.dataflow!r}")


@dataclass(frozen=True)
class PerfConfig:
    n: int = 128
    d: int = 46
    d_ff: int = 64
    d_h: int = 64
    pool_k: int = 4
    pool_p: int = 2
    div_latency: int = 16          # integer divider latency per row division
    clock_hz: float = 1e8
    # Calibration constants; fitted values are echoed into every report.
    c_overhead: float = 1.0
    layer_overhead: int = 25000    # per-layer weight streaming + FSM control
    proj_engine: EngineSpec = field(default_factory=lambda: EngineSpec(46, "input_stationary"))
    score_engine: EngineSpec = field(default_factory=lambda: EngineSpec(23, "input_stationary"))
    slp_engine: EngineSpec = field(default_factory=lambda: EngineSpec(32, "output_stationary"))
    head_engine: EngineSpec = field(default_factory=lambda: EngineSpec(64, "output_stationary"))

    @property
    def flattened_len(self) -> int:
        return self.n * (self.d + self.pool_p) // self.pool_k


@dataclass(frozen=True)
class CycleReport:
    scenario: str
    activation: ActivationKind
    n_eff: int
    stages: dict
    layer_totals: tuple
    compute_cycles: int
    overhead_cycles: int
    total_cycles: int
    latency_s: float
    speedup_vs_dense: float
    throughput_pos_per_s: float
    calibration: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["activation"] = self.activation.name
        out["layer_totals"] = list(self.layer_totals)
        return out


def _filled(work: int, fill: int) -> int:
    # A stage with no work issues nothing, so it pays no pipeline fill.
    return work + fill if work > 0 else 0


def stage_cycles(stage: str, n_eff: int, cfg: PerfConfig,
                 activation_kind: ActivationKind = ActivationKind.SIGMOID_BIAS_LUT) -> int:
    """Cycles for one stage at the given effective row count."""
    if not 0 <= n_eff <= cfg.n:
        raise ValueError(f"n_eff must be in 0..{cfg.n}")
    fill = cfg.proj_engine.pipeline_fill
    if stage == "slp":
        return (cfg.n * 3) // cfg.slp_engine.width + cfg.slp_engine.pipeline_fill
    if stage == "sparsity_detect":
        return cfg.n  # one row per cycle
    if stage == "qkv":
        return _filled(3 * n_eff * cfg.d, fill)
    if stage == "scores":
        return _filled(2 * n_eff * n_eff, cfg.score_engine.pipeline_fill)
    if stage == "activation":
        if n_eff == 0:
            return 0
        if activation_kind.is_softmax:
            # two buffered passes per row plus one division per row
            return 2 * n_eff * n_eff + cfg.div_latency * n_eff + fill
        if activation_kind == ActivationKind.SIGMOID_NORM_LUT:
            return n_eff * n_eff + cfg.div_latency * n_eff + fill
        return fill  # element-wise sigmoid overlaps with streaming
    if stage == "headmul":
        return _filled(2 * n_eff * n_eff, cfg.score_engine.pipeline_fill)
    if stage == "wo":
        return _filled(n_eff * cfg.d, fill)
    if stage == "ffn1":
        return _filled(n_eff * cfg.d_ff, fill)
    if stage == "ffn2":
        return _filled(n_eff * cfg.d, fill)
    if stage == "pool":
        return 0  # overlapped with the coordinate-head weight streaming
    if stage == "fcnn":
        return ((cfg.flattened_len * cfg.d_h) // cfg.head_engine.width
                + cfg.d_h * 2 + cfg.head_engine.pipeline_fill)
    raise ValueError(f"unknown stage {stage!r}")


def _layer_cycles(n_eff: int, cfg: PerfConfig, kind: ActivationKind) -> dict:
    return {s: stage_cycles(s, n_eff, cfg, kind) for s in LAYER_STAGES}


def pipeline_report(mask: RowMask | int, scenario: str,
                    activation_kind: ActivationKind, cfg: PerfConfig | None = None) -> CycleReport:
    """Full-inference cycle count, latency, speedup, and throughput.

    Layer 1 runs at the mask's effective row count; any second layer runs
    dense.  ``mask`` may be a RowMask or a kept-row count directly.
    """
    cfg = cfg or PerfConfig()
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    n_eff = mask if isinstance(mask, int) else mask.n_kept
    if not 0 <= n_eff <= cfg.n:
        raise ValueError(f"effective rows must be in 0..{cfg.n}")

    def build(first_layer_rows: int):
        stages = {s: 0 for s in STAGES}
        stages["slp"] = stage_cycles("slp", first_layer_rows, cfg, activation_kind)
        stages["sparsity_detect"] = stage_cycles("sparsity_detect", first_layer_rows, cfg, activation_kind)
        layer_totals = []
        n_layers = LAYERS_PER_SCENARIO[scenario]
        for layer in range(n_layers):
            rows = first_layer_rows if layer == 0 else cfg.n
            per = _layer_cycles(rows, cfg, activation_kind)
            for s, c in per.items():
                stages[s] += c
            layer_totals.append(sum(per.values()))
        stages["pool"] = stage_cycles("pool", first_layer_rows, cfg, activation_kind)
        stages["fcnn"] = stage_cycles("fcnn", first_layer_rows, cfg, activation_kind)
        compute = sum(stages.values())
        total = round(compute * cfg.c_overhead) + n_layers * cfg.layer_overhead
        return stages, tuple(layer_totals), compute, total

    stages, layer_totals, compute, total = build(n_eff)
    _, _, _, dense_total = build(cfg.n)
    latency = total / cfg.clock_hz
    return CycleReport(
        scenario=scenario,
        activation=activation_kind,
        n_eff=n_eff,
        stages=stages,
        layer_totals=layer_totals,
        compute_cycles=compute,
        overhead_cycles=total - compute,
        total_cycles=total,
        latency_s=latency,
        speedup_vs_dense=dense_total / total,
        throughput_pos_per_s=1.0 / latency,
        calibration={"c_overhead": cfg.c_overhead, "layer_overhead": cfg.layer_overhead},
    )


def stage_share(report: CycleReport) -> dict:
    """MHA / FFN / FCNN shares of the modeled compute cycles.

    The router and sparsity detection fold into the FCNN bucket; the
    calibration overhead is excluded so the three shares partition the
    compute total exactly.
    """
    s = report.stages
    mha = s["qkv"] + s["scores"] + s["activation"] + s["headmul"] + s["wo"]
    ffn = s["ffn1"] + s["ffn2"]
    fcnn = s["slp"] + s["sparsity_detect"] + s["pool"] + s["fcnn"]
    total = report.compute_cycles
    return {"mha": mha / total, "ffn": ffn / total, "fcnn": fcnn / total}


def mask_for_fraction(fraction: float, n: int = 128) -> RowMask:
    """Synthetic mask with round(fraction * n) rows skipped."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    n_skip = int(round(fraction * n))
    skip = np.zeros(n, dtype=bool)
    skip[:n_skip] = True
    zc = np.where(skip, n, 0).astype(np.int64)
    return RowMask(skip=skip, zero_counts=zc)
