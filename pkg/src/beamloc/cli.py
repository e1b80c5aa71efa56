"""Command-line front end: generate, infer, sweep, ablate, perf, show-config.

Every command is a pure function of (config, input files, seeds): rerunning
with identical inputs produces byte-identical outputs, and each artifact
embeds the configuration that produced it.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 contract violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from . import channel
from .activations import ACTIVATION_NAMES, activation_from_name
from .config import ConfigError, RunConfig, load_config
from .engine import EngineConfig, FloatEngine, IntEngine
from .fxp import AccumulatorOverflow, QTensor, quantize_array
from .perf import mask_for_fraction, pipeline_report, stage_share
from .router import RouterState
from .sparsity import SWEEP_COLUMNS, SparsityConfig, sweep
from .weights import SCENARIOS, load_bundle

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONTRACT = 4


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _engine_cfg(cfg: RunConfig, engine_kind: str, sparsity: bool) -> EngineConfig:
    return EngineConfig(
        activation=cfg.activation_kind(),
        sparsity=dict(cfg.sparsity) if sparsity else None,
        scenario_override=cfg.scenario,
        delay_bin=cfg.delay_bin,
        ffn_residual=cfg.ffn_residual,
    )


def _router_state(cfg: RunConfig, bundle) -> RouterState:
    window = cfg.router_window if cfg.router_window is not None else bundle.router_window
    return RouterState.create(window)


def _load_inputs(cfg: RunConfig):
    if cfg.bundle is None or cfg.fingerprints is None:
        raise ConfigError("this command requires --bundle and --fingerprints")
    bundle = load_bundle(cfg.bundle)
    fps = channel.read_fingerprints(cfg.fingerprints)
    return bundle, fps


# --------------------------------------------------------------------------


def cmd_generate(cfg: RunConfig, args) -> int:
    profile = channel.default_profile(
        args.scenario,
        seed=args.seed,
        **{
            k: v
            for k, v in dict(
                dominant_beams=args.dominant_beams,
                dominant_delays=args.dominant_delays,
                diffuse_floor=args.diffuse_floor,
            ).items()
            if v is not None
        },
    )
    fps = channel.generate_fingerprints(profile, args.count, periodic=args.periodic_hann)
    channel.write_fingerprints(args.out, fps)
    if args.csv:
        channel.export_csv(args.csv, fps)
    print(f"wrote {args.count} {args.scenario} snapshot(s) to {args.out}")
    return EXIT_OK


def _run_batch(engine, bundle, cfg, fps):
    """Sequential pass over the fingerprint file; routing is stateful."""
    state = _router_state(cfg, bundle)
    results = []
    for fp in fps:
        results.append(engine.infer(fp, state=state))
    return results


def cmd_infer(cfg: RunConfig, args) -> int:
    bundle, fps = _load_inputs(cfg)
    kinds = ("int", "float") if cfg.engine == "both" else (cfg.engine,)
    engines = {
        kind: (IntEngine if kind == "int" else FloatEngine)(
            bundle, _engine_cfg(cfg, kind, cfg.sparsity_enabled)
        )
        for kind in kinds
    }
    runs = {kind: _run_batch(engine, bundle, cfg, fps) for kind, engine in engines.items()}
    primary = runs[kinds[0]]

    akind = cfg.activation_kind() or bundle.activation
    perf_cfg = cfg.perf_config(bundle)
    rows = []
    for i, res in enumerate(primary):
        report = pipeline_report(res.mask, res.scenario, akind, perf_cfg)
        row = {
            "index": i,
            "scenario": res.scenario,
            "x": float(res.coords[0]),
            "y": float(res.coords[1]),
            "row_sparsity": res.mask.skip_fraction,
            "cycles": report.total_cycles,
            "latency_s": report.latency_s,
        }
        if cfg.engine == "both":
            other = runs["float"][i]
            row["x_float"] = float(other.coords[0])
            row["y_float"] = float(other.coords[1])
            row["deviation"] = float(np.linalg.norm(res.coords - other.coords))
        rows.append(row)
    _write_json(args.out, {"config": cfg.to_dict(), "results": rows})
    print(f"wrote {len(rows)} result(s) to {args.out}")
    return EXIT_OK


def _coords_runner(bundle, cfg: RunConfig, fps, engine_kind: str):
    """Closure for sweeps: SparsityConfig | None -> (count, 2) coordinates."""

    def run(scfg: SparsityConfig | None):
        ecfg = EngineConfig(
            activation=cfg.activation_kind(),
            sparsity=None if scfg is None else {sc: scfg for sc in SCENARIOS},
            scenario_override=cfg.scenario,
            delay_bin=cfg.delay_bin,
            ffn_residual=cfg.ffn_residual,
        )
        engine = (IntEngine if engine_kind == "int" else FloatEngine)(bundle, ecfg)
        results = _run_batch(engine, bundle, cfg, fps)
        return np.array([r.coords for r in results])

    return run


def cmd_sweep(cfg: RunConfig, args) -> int:
    bundle, fps = _load_inputs(cfg)
    t_elems = [float(v) for v in args.t_elem.split(",") if v]
    t_rowcounts = [int(v) for v in args.t_rowcount.split(",") if v]
    if not t_elems or not t_rowcounts:
        raise ConfigError("sweep grids must be non-empty")
    engine_kind = "int" if cfg.engine == "both" else cfg.engine
    # Sparsity statistics match the executed engine's domain: quantized
    # snapshots for the integer engine, floats for the oracle.
    if engine_kind == "int":
        stat_snapshots = [QTensor(quantize_array(fp)) for fp in fps]
    else:
        stat_snapshots = list(fps)
    rows = sweep(stat_snapshots, t_elems, t_rowcounts,
                 _coords_runner(bundle, cfg, fps, engine_kind))
    with open(args.out, "w", newline="") as f:
        f.write("# config: " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([repr(getattr(row, c)) for c in SWEEP_COLUMNS])
    print(f"wrote {len(rows)} sweep row(s) to {args.out}")
    return EXIT_OK


ABLATION_LADDER = (
    {"engine": "float", "activation": "softmax-float", "sparsity": False},
    {"engine": "float", "activation": "sigmoid-bias", "sparsity": False},
    {"engine": "int", "activation": "sigmoid-bias", "sparsity": False},
    {"engine": "int", "activation": "sigmoid-bias", "sparsity": True},
)


def cmd_ablate(cfg: RunConfig, args) -> int:
    bundle, fps = _load_inputs(cfg)
    rungs = []
    prev_coords = None
    for rung in ABLATION_LADDER:
        ecfg = EngineConfig(
            activation=activation_from_name(rung["activation"]),
            sparsity=dict(cfg.sparsity) if rung["sparsity"] else None,
            scenario_override=cfg.scenario,
            delay_bin=cfg.delay_bin,
            ffn_residual=cfg.ffn_residual,
        )
        engine_cls = IntEngine if rung["engine"] == "int" else FloatEngine
        results = _run_batch(engine_cls(bundle, ecfg), bundle, cfg, fps)
        coords = np.array([r.coords for r in results])
        akind = activation_from_name(rung["activation"])
        perf_cfg = cfg.perf_config(bundle)
        cycles = [
            pipeline_report(r.mask, r.scenario, akind, perf_cfg).total_cycles
            for r in results
        ]
        entry = {
            "engine": rung["engine"],
            "activation": rung["activation"],
            "sparsity": rung["sparsity"],
            "mean_cycles": float(np.mean(cycles)),
            "cycles": cycles,
            "mean_row_sparsity": float(np.mean([r.mask.skip_fraction for r in results])),
        }
        if prev_coords is not None:
            diff = coords - prev_coords
            base = np.sqrt(np.mean(np.square(prev_coords)))
            entry["deviation_vs_previous"] = float(
                np.sqrt(np.mean(np.square(diff))) / base if base > 0 else np.sqrt(np.mean(np.square(diff)))
            )
            entry["cycle_delta_vs_previous"] = entry["mean_cycles"] - rungs[-1]["mean_cycles"]
        prev_coords = coords
        rungs.append(entry)
    _write_json(args.out, {"config": cfg.to_dict(), "rungs": rungs})
    print(f"wrote ablation ladder ({len(rungs)} rungs) to {args.out}")
    return EXIT_OK


def cmd_perf(cfg: RunConfig, args) -> int:
    fractions = [float(v) for v in args.fractions.split(",") if v]
    scenario = cfg.scenario or "S1"
    akind = cfg.activation_kind()
    if akind is None:
        akind = activation_from_name("sigmoid-bias")
    perf_cfg = cfg.perf_config()
    entries = []
    for frac in fractions:
        report = pipeline_report(mask_for_fraction(frac, perf_cfg.n), scenario, akind, perf_cfg)
        entry = report.to_dict()
        entry["mask_fraction"] = frac
        entry["stage_shares"] = stage_share(report)
        entries.append(entry)
    _write_json(args.out, {"config": cfg.to_dict(), "reports": entries})
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["mask_fraction", "n_eff", "total_cycles", "latency_s",
                             "speedup_vs_dense", "throughput_pos_per_s"])
            for e in entries:
                writer.writerow([e["mask_fraction"], e["n_eff"], e["total_cycles"],
                                 repr(e["latency_s"]), repr(e["speedup_vs_dense"]),
                                 repr(e["throughput_pos_per_s"])])
    print(f"wrote {len(entries)} perf report(s) to {args.out}")
    return EXIT_OK


def cmd_show_config(cfg: RunConfig, args) -> int:
    print(cfg.to_json())
    return EXIT_OK


# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run-config file; flags override it")
    p.add_argument("--bundle", help="weight bundle path")
    p.add_argument("--fingerprints", help="fingerprint file path")
    p.add_argument("--engine", choices=("float", "int", "both"))
    p.add_argument("--scenario", choices=SCENARIOS, help="bypass the router")
    p.add_argument("--activation", choices=sorted(ACTIVATION_NAMES.values()))
    p.add_argument("--no-sparsity", action="store_true", help="disable thresholding and masking")
    p.add_argument("--router-window", type=int)
    p.add_argument("--delay-bin", type=int)
    p.add_argument("--ffn-residual", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--clock-hz", type=float)
    p.add_argument("--div-latency", type=int)
    p.add_argument("--pipeline-fill", type=int)
    p.add_argument("--c-overhead", type=float)
    p.add_argument("--layer-overhead", type=int)


_OVERRIDE_FIELDS = (
    "bundle", "fingerprints", "engine", "scenario", "activation", "router_window",
    "delay_bin", "seed", "clock_hz", "div_latency", "pipeline_fill",
    "c_overhead", "layer_overhead",
)


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {}
    for name in _OVERRIDE_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    if getattr(args, "no_sparsity", False):
        updates["sparsity_enabled"] = False
    if getattr(args, "ffn_residual", False):
        updates["ffn_residual"] = True
    try:
        return dataclasses.replace(cfg, **updates)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamloc",
        description="Adaptive sparsity-aware integer Transformer localization model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a fingerprint file")
    p.add_argument("--scenario", choices=SCENARIOS, default="S1")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also export a CSV for inspection")
    p.add_argument("--dominant-beams", type=int)
    p.add_argument("--dominant-delays", type=int)
    p.add_argument("--diffuse-floor", type=float)
    p.add_argument("--periodic-hann", action="store_true")
    p.set_defaults(func=cmd_generate, needs_config=False)

    p = sub.add_parser("infer", help="run inference over a fingerprint file")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer, needs_config=True)

    p = sub.add_parser("sweep", help="threshold/zero-count grid sweep")
    _add_common(p)
    p.add_argument("--t-elem", default="0.001,0.003,0.01,0.03,0.1")
    p.add_argument("--t-rowcount", default="0,8,16,24,32,40,46")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep, needs_config=True)

    p = sub.add_parser("ablate", help="optimization ladder over a batch")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate, needs_config=True)

    p = sub.add_parser("perf", help="cycle-model sweep over mask fractions")
    _add_common(p)
    p.add_argument("--fractions", default="0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write a CSV summary")
    p.set_defaults(func=cmd_perf, needs_config=True)

    p = sub.add_parser("show-config", help="print the effective configuration")
    _add_common(p)
    p.set_defaults(func=cmd_show_config, needs_config=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.needs_config:
            cfg = _build_config(args)
        else:
            cfg = RunConfig()
        return args.func(cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileNotFoundError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (AccumulatorOverflow, ValueError) as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
