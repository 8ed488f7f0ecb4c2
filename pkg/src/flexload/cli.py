"""Command-line entry point: ``flexload <subcommand> ...``.

Each run computes everything in memory first, then writes its outputs and a
``run_manifest.json`` next to them.  Exit codes: 0 ok, 2 invalid input,
3 numerical failure, 4 oracle mismatch.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BudgetExceeded, NumericalError, ValidationError
from .fleet_sim import SessionSpec, SimConfig, run as run_simulation
from .oracle import check_instance, random_instance
from .policy import rollout
from .price_model import Empirical, PointMass, PriceModel, PricePair, StageDistribution
from .threshold_engine import LoadSpec, ThresholdTable, compile_correlated, compile_independent

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_MISMATCH = 0, 2, 3, 4
MANIFEST = "run_manifest.json"


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return format(x, ".12g")


# ---------------------------------------------------------------------------
# readers


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None


def _read_csv(path) -> tuple[list[str], list[dict]]:
    try:
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            rows = list(reader)
            return [h.strip() for h in (reader.fieldnames or [])], rows
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None


def _num(row: dict, key: str, path) -> float:
    try:
        return float(row[key])
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"{path}: bad or missing {key!r} in row {row}") from None


def read_price_path(path) -> list[PricePair]:
    header, rows = _read_csv(path)
    if header[:3] != ["stage", "pi_e", "pi_r"]:
        raise ValidationError(f"{path}: expected header stage,pi_e,pi_r")
    rows = sorted(rows, key=lambda r: int(_num(r, "stage", path)))
    stages = [int(_num(r, "stage", path)) for r in rows]
    if stages != list(range(len(stages))) or not stages:
        raise ValidationError(f"{path}: stages must be 0..T-1 with one row each")
    try:
        return [PricePair(_num(r, "pi_e", path), _num(r, "pi_r", path)) for r in rows]
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def read_price_samples(path) -> PriceModel:
    header, rows = _read_csv(path)
    if header[:5] != ["stage", "sample_idx", "weight", "eps_e", "eps_r"]:
        raise ValidationError(f"{path}: expected header stage,sample_idx,weight,eps_e,eps_r")
    by_stage: dict[int, list] = {}
    for r in rows:
        t = int(_num(r, "stage", path))
        by_stage.setdefault(t, []).append(
            (int(_num(r, "sample_idx", path)), _num(r, "eps_e", path), _num(r, "eps_r", path), _num(r, "weight", path))
        )
    if sorted(by_stage) != list(range(len(by_stage))) or not by_stage:
        raise ValidationError(f"{path}: stages must be 0..T-1")
    try:
        stages = tuple(
            StageDistribution(PointMass(0.0), joint=[s[1:] for s in sorted(by_stage[t])]) for t in range(len(by_stage))
        )
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return PriceModel(stages)


def read_price_model(path) -> PriceModel:
    """Price model from JSON, a sample CSV or a deterministic path CSV."""
    if str(path).endswith(".json"):
        try:
            return PriceModel.from_dict(_read_json(path))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"{path}: bad price model ({exc})") from None
    header, _ = _read_csv(path)
    if "sample_idx" in header:
        return read_price_samples(path)
    return PriceModel.deterministic(read_price_path(path))


def read_load(args) -> LoadSpec:
    if args.load:
        return LoadSpec.from_dict(_read_json(args.load))
    missing = [k for k in ("demand", "capacity", "horizon", "penalty") if getattr(args, k) is None]
    if missing:
        raise ValidationError(f"give --load or all of --demand --capacity --horizon --penalty (missing {missing})")
    return LoadSpec(args.demand, args.capacity, args.horizon, args.penalty)


def read_table(path) -> ThresholdTable:
    header, rows = _read_csv(path)
    if header[:3] != ["t", "i", "m_hat"]:
        raise ValidationError(f"{path}: expected header t,i,m_hat")
    cells = {}
    for r in rows:
        cells[(int(_num(r, "t", path)), int(_num(r, "i", path)))] = _num(r, "m_hat", path)
    n = int(math.isqrt(len(cells)))
    if n * n != len(cells) or set(cells) != {(t, i) for t in range(n) for i in range(n)}:
        raise ValidationError(f"{path}: table must cover every (t, i) of a square grid")
    values = np.empty((n, n))
    for (t, i), v in cells.items():
        values[t, i] = v
    return ThresholdTable(values)


def read_sessions(path, capacity: float) -> list[SessionSpec]:
    header, rows = _read_csv(path)
    if header[:3] != ["arrival", "dwell", "demand"]:
        raise ValidationError(f"{path}: expected header arrival,dwell,demand")
    return [SessionSpec(int(_num(r, "arrival", path)), int(_num(r, "dwell", path)), _num(r, "demand", path), capacity)
            for r in rows]


# ---------------------------------------------------------------------------
# writers


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def table_csv(table: ThresholdTable) -> str:
    T = table.horizon
    return _csv_text(["t", "i", "m_hat"],
                     ([t, i, _fmt(table.values[t, i])] for t in range(T + 1) for i in range(T + 1)))


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _publish(out_dir: Path, files: dict[str, str], manifest: dict) -> None:
    """Write all outputs (via temp files and rename) plus the manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = dict(manifest, outputs=sorted(files), version=__version__)
    files = dict(files)
    files[MANIFEST] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    for name, text in files.items():
        tmp = out_dir / f".{name}.tmp"
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, out_dir / name)


def _manifest(command: str, config: dict, seed) -> dict:
    return {"subcommand": command, "config": config, "config_digest": _digest(config), "seed": seed}


def _out_dir_and_name(out: str) -> tuple[Path, str]:
    p = Path(out)
    return p.parent if str(p.parent) else Path("."), p.name


# ---------------------------------------------------------------------------
# subcommands


def _single_price(stage: StageDistribution) -> bool:
    return all(m.is_discrete and m.atoms()[0].size == 1 for m in (stage.energy, stage.reserve))


def cmd_thresholds(args) -> int:
    spec = read_load(args)
    model = read_price_model(args.prices)
    if model.horizon != spec.horizon:
        raise ValidationError(f"price model has {model.horizon} stages, load horizon is {spec.horizon}")
    mode = args.mode
    if mode == "deterministic":
        if not all(_single_price(s) for s in model.stages):
            raise ValidationError("deterministic mode needs a single known price per stage")
        table = compile_independent(spec, model, workers=args.workers)
    elif mode == "independent":
        table = compile_independent(spec, model, workers=args.workers)
    else:
        table = compile_correlated(spec, model, delta=args.grid_delta, workers=args.workers).thresholds
    out_dir, name = _out_dir_and_name(args.out)
    config = {"load": spec.to_dict(), "prices": model.to_dict(), "mode": mode,
              "grid_delta": args.grid_delta if mode == "correlated" else None}
    _publish(out_dir, {name: table_csv(table)}, _manifest("thresholds", config, None))
    _say(args, f"{mode} table for T={spec.horizon} written to {args.out} (sha256 {table.digest()[:12]})")
    return EXIT_OK


def cmd_policy(args) -> int:
    spec = read_load(args)
    table = read_table(args.table)
    path = read_price_path(args.path)
    if table.horizon != spec.horizon or len(path) != spec.horizon:
        raise ValidationError(f"table ({table.horizon}), path ({len(path)}) and load ({spec.horizon}) horizons differ")
    if table.penalty != spec.shortfall_penalty:
        raise ValidationError("table terminal row does not match the load's shortfall penalty")
    records, total = rollout(table, path, spec)
    text = _csv_text(["t", "pi_e", "pi_r", "d", "e", "r", "stage_cost"],
                     ([r["t"], _fmt(r["pi_e"]), _fmt(r["pi_r"]), _fmt(r["d"]), _fmt(r["e"]), _fmt(r["r"]),
                       _fmt(r["stage_cost"])] for r in records))
    out_dir, name = _out_dir_and_name(args.out)
    config = {"load": spec.to_dict(), "table": [[_fmt(v) for v in row] for row in table.values],
              "path": [[p.energy, p.reserve] for p in path]}
    _publish(out_dir, {name: text}, _manifest("policy", config, None))
    _say(args, f"rollout cost {total:.6g} written to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    raw = _read_json(args.config) if args.config else {}
    config = SimConfig.from_dict(raw)
    if args.seed is not None:
        config.seed = args.seed
    if args.prices:
        config.price_model = read_price_model(args.prices)
    if args.sessions:
        config.sessions = read_sessions(args.sessions, config.capacity)
    config.workers = args.workers
    config.validate()
    result = run_simulation(config)
    files = {}
    with tempfile.TemporaryDirectory() as d:
        for p in result.write(d):
            files[p.name] = p.read_text(encoding="utf-8")
    _publish(Path(args.out_dir), files, _manifest("simulate", config.to_dict(), config.seed))
    if not args.quiet:
        for p in result.policies:
            print(f"{p:>22s}  normalized {result.normalized[p]:.4f} +/- {result.normalized_halfwidth[p]:.4f}"
                  f"  PAR {result.par[p]:.3f}")
        print(f"dominance violations: {result.dominance_violations} / {result.dominance_checked} sessions")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if args.instances < 1 or args.max_horizon < 1:
        raise ValidationError("need --instances >= 1 and --max-horizon >= 1")
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    rows, failed = [], 0
    for k in range(args.instances):
        inst = random_instance(rng, max_horizon=args.max_horizon)
        report = check_instance(inst)
        failed += not report.passed
        rows.append([k, inst.spec.horizon, _fmt(inst.spec.demand), _fmt(inst.spec.capacity),
                     format(report.max_deviation, ".3e"), int(report.all_optimal), report.n_actions,
                     "pass" if report.passed else "fail"])
    text = _csv_text(["instance", "horizon", "demand", "capacity", "max_deviation", "all_actions_optimal",
                      "actions_checked", "status"], rows)
    out_dir, name = _out_dir_and_name(args.out)
    config = {"instances": args.instances, "max_horizon": args.max_horizon}
    _publish(out_dir, {name: text}, _manifest("oracle-check", config, seed))
    _say(args, f"{args.instances - failed}/{args.instances} instances agree with the brute-force DP")
    return EXIT_MISMATCH if failed else EXIT_OK


def bench_model(T: int, atoms: int = 256, seed: int = 0) -> PriceModel:
    """Independent model with ``atoms`` equally likely effective prices per stage."""
    rng = np.random.default_rng(seed)
    vals = rng.normal(40.0, 10.0, size=(T, atoms))
    return PriceModel(tuple(StageDistribution(Empirical(v)) for v in vals))


def fit_exponent(horizons, seconds) -> float:
    return float(np.polyfit(np.log(horizons), np.log(seconds), 1)[0])


def run_bench(max_horizon: int, step: int, repeats: int = 3, workers: int = 1, seed: int = 0):
    if step < 1 or max_horizon < 2 * step:
        raise ValidationError("bench needs step >= 1 and max_horizon >= 2 * step")
    horizons = list(range(step, max_horizon + 1, step))
    seconds, digests = [], []
    for T in horizons:
        spec = LoadSpec(0.0, 1.0, T, 150.0)
        model = bench_model(T, seed=seed)
        for s in model.stages:
            s.effective  # build cached effective laws outside the timer
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            table = compile_independent(spec, model, workers=workers)
            best = min(best, time.perf_counter() - t0)
        seconds.append(best)
        digests.append(table.digest())
    return horizons, seconds, digests


def cmd_bench(args) -> int:
    seed = 0 if args.seed is None else args.seed
    horizons, seconds, digests = run_bench(args.max_horizon, args.step, args.repeats, args.workers, seed)
    exponent = fit_exponent(horizons, seconds) if len(horizons) >= 2 else float("nan")
    timing = _csv_text(["T", "seconds"], ([T, format(s, ".6f")] for T, s in zip(horizons, seconds)))
    # timings vary run to run; the digests file is the reproducible part
    dig = _csv_text(["T", "table_sha256"], zip(horizons, digests))
    out_dir, name = _out_dir_and_name(args.out)
    stem = Path(name).stem
    config = {"max_horizon": args.max_horizon, "step": args.step, "repeats": args.repeats, "atoms": 256}
    _publish(out_dir, {name: timing, f"{stem}_digests.csv": dig}, _manifest("bench", config, seed))
    _say(args, f"fitted growth exponent {exponent:.3f}; T={horizons[-1]} took {seconds[-1]:.3f} s")
    return EXIT_OK


def cmd_replay(args) -> int:
    """Re-run a manifest; outputs land in ``--out-dir`` (default: the manifest's directory)."""
    m = _read_json(args.manifest)
    out_dir = Path(args.out_dir or Path(args.manifest).parent)
    cfg, cmd = m.get("config"), m.get("subcommand")
    if cfg is None or cmd is None or _digest(cfg) != m.get("config_digest"):
        raise ValidationError("manifest is incomplete or its config digest does not match")
    outputs = m.get("outputs", [])
    ns = argparse.Namespace(workers=args.workers, quiet=args.quiet, seed=m.get("seed"))
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        if cmd == "thresholds":
            (tmp / "load.json").write_text(json.dumps(cfg["load"]))
            (tmp / "prices.json").write_text(json.dumps(cfg["prices"]))
            ns.__dict__.update(load=tmp / "load.json", prices=str(tmp / "prices.json"), mode=cfg["mode"],
                               grid_delta=cfg["grid_delta"] or 1e-2, out=str(out_dir / outputs[0]))
            return cmd_thresholds(ns)
        if cmd == "simulate":
            (tmp / "sim.json").write_text(json.dumps(cfg))
            ns.__dict__.update(config=tmp / "sim.json", prices=None, sessions=None, out_dir=str(out_dir))
            return cmd_simulate(ns)
        if cmd == "oracle-check":
            ns.__dict__.update(instances=cfg["instances"], max_horizon=cfg["max_horizon"], out=str(out_dir / outputs[0]))
            return cmd_oracle_check(ns)
        if cmd == "bench":
            name = next(o for o in outputs if not o.endswith("_digests.csv"))
            ns.__dict__.update(max_horizon=cfg["max_horizon"], step=cfg["step"], repeats=cfg["repeats"],
                               out=str(out_dir / name))
            return cmd_bench(ns)
        if cmd == "policy":
            (tmp / "load.json").write_text(json.dumps(cfg["load"]))
            T = len(cfg["table"]) - 1
            (tmp / "table.csv").write_text(_csv_text(
                ["t", "i", "m_hat"], ([t, i, cfg["table"][t][i]] for t in range(T + 1) for i in range(T + 1))))
            (tmp / "path.csv").write_text(_csv_text(
                ["stage", "pi_e", "pi_r"], ([k, repr(e), repr(r)] for k, (e, r) in enumerate(cfg["path"]))))
            ns.__dict__.update(load=tmp / "load.json", table=tmp / "table.csv", path=tmp / "path.csv",
                               out=str(out_dir / outputs[0]))
            return cmd_policy(ns)
    raise ValidationError(f"unknown subcommand {cmd!r} in manifest")


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed for all randomness")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads")
    common.add_argument("--quiet", action="store_true", help="suppress summaries")

    p = argparse.ArgumentParser(prog="flexload", parents=[common], description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def load_flags(sp):
        sp.add_argument("--load", help="LoadSpec JSON")
        sp.add_argument("--demand", type=float)
        sp.add_argument("--capacity", type=float)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--penalty", type=float, help="shortfall penalty per unit energy")

    t = sub.add_parser("thresholds", parents=[common], help="compile a threshold table")
    load_flags(t)
    t.add_argument("--prices", required=True, help="PriceModel JSON, sample CSV or price path CSV")
    t.add_argument("--mode", choices=("independent", "correlated", "deterministic"), default="independent")
    t.add_argument("--grid-delta", type=float, default=1e-2, help="price-state grid step (correlated mode)")
    t.add_argument("--out", default="table.csv")
    t.set_defaults(func=cmd_thresholds)

    po = sub.add_parser("policy", parents=[common], help="roll the optimal policy along a price path")
    load_flags(po)
    po.add_argument("--table", required=True)
    po.add_argument("--path", required=True, help="CSV with header stage,pi_e,pi_r")
    po.add_argument("--out", default="rollout.csv")
    po.set_defaults(func=cmd_policy)

    s = sub.add_parser("simulate", parents=[common], help="fleet Monte Carlo")
    s.add_argument("--config", help="simulation JSON (defaults used when omitted)")
    s.add_argument("--prices", help="full-window price model (JSON or CSV)")
    s.add_argument("--sessions", help="CSV with header arrival,dwell,demand")
    s.add_argument("--out-dir", default="results")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oracle-check", parents=[common], help="compare tables with brute-force DP")
    o.add_argument("--instances", type=int, default=100)
    o.add_argument("--max-horizon", type=int, default=6)
    o.add_argument("--out", default="oracle_report.csv")
    o.set_defaults(func=cmd_oracle_check)

    b = sub.add_parser("bench", parents=[common], help="time table compilation against the horizon")
    b.add_argument("--max-horizon", type=int, default=800)
    b.add_argument("--step", type=int, default=100)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out", default="bench.csv")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("replay", parents=[common], help="re-run the job recorded in a run manifest")
    r.add_argument("manifest")
    r.add_argument("--out-dir")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ValidationError, BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
