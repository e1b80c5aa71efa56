"""Run configuration: JSON file schema plus CLI flag overrides.

Every output artifact embeds the effective configuration, so a run is
reproducible from its own output.  Default thresholds per scenario follow
the reference operating points of the measured data (the mixed scenario
uses the quantization-constrained threshold with zero count 28).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from .activations import ACTIVATION_NAMES, ActivationKind, activation_from_name
from .perf import PerfConfig
from .sparsity import SparsityConfig


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


DEFAULT_SPARSITY = {
    "S1": SparsityConfig(t_elem=0.039, t_rowcount=41),
    "S2": SparsityConfig(t_elem=0.014, t_rowcount=1),
    "S3": SparsityConfig(t_elem=0.006, t_rowcount=28),
}

_ENGINES = ("float", "int", "both")


@dataclass(frozen=True)
class RunConfig:
    bundle: str | None = None
    fingerprints: str | None = None
    engine: str = "int"
    scenario: str | None = None          # None: auto-route per snapshot
    activation: str | None = None        # None: bundle's activation
    sparsity_enabled: bool = True
    sparsity: dict = field(default_factory=lambda: dict(DEFAULT_SPARSITY))
    router_window: int | None = None
    delay_bin: int | None = None
    ffn_residual: bool = False
    seed: int = 0
    clock_hz: float = 1e8
    div_latency: int = 16
    pipeline_fill: int = 6
    c_overhead: float = 1.0
    layer_overhead: int = 25000

    def __post_init__(self):
        if self.engine not in _ENGINES:
            raise ConfigError(f"engine must be one of {_ENGINES}, got {self.engine!r}")
        if self.scenario is not None and self.scenario not in DEFAULT_SPARSITY:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.activation is not None and self.activation not in ACTIVATION_NAMES.values():
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.clock_hz <= 0:
            raise ConfigError("clock_hz must be positive")

    def activation_kind(self) -> ActivationKind | None:
        return None if self.activation is None else activation_from_name(self.activation)

    def perf_config(self, bundle=None) -> PerfConfig:
        from .perf import EngineSpec

        kwargs = dict(
            div_latency=self.div_latency,
            clock_hz=self.clock_hz,
            c_overhead=self.c_overhead,
            layer_overhead=self.layer_overhead,
            proj_engine=EngineSpec(46, "input_stationary", self.pipeline_fill),
            score_engine=EngineSpec(23, "input_stationary", self.pipeline_fill),
            slp_engine=EngineSpec(32, "output_stationary", self.pipeline_fill),
            head_engine=EngineSpec(64, "output_stationary", self.pipeline_fill),
        )
        if bundle is not None:
            kwargs.update(n=bundle.n, d=bundle.d, d_ff=bundle.d_ff, d_h=bundle.d_h,
                          pool_k=bundle.pool_k, pool_p=bundle.pool_p)
        return PerfConfig(**kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sparsity"] = {
            sc: {"t_elem": c.t_elem, "t_rowcount": c.t_rowcount}
            for sc, c in self.sparsity.items()
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    raw_sparsity = data.pop("sparsity", None)
    cfg = RunConfig(**data)
    if raw_sparsity is not None:
        parsed = {
            sc: SparsityConfig(t_elem=float(v["t_elem"]), t_rowcount=int(v["t_rowcount"]))
            for sc, v in raw_sparsity.items()
        }
        cfg = replace(cfg, sparsity=parsed)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    try:
        return config_from_dict(data)
    except TypeError as e:
        raise ConfigError(f"invalid config field: {e}") from e
