"""Command-line front end: analyze a CSV, benchmark a scenario, run a sweep."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .engine import GmjmcmcConfig, analyze
from .glmlik import BINOMIAL, GAUSSIAN, Dataset
from .mjmcmc import JEFFREYS, ROBUST_G
from .scenarios import SCENARIO_CONFIGS, bench, sweep


class IngestionError(ValueError):
    pass


# config-file keys, named after the tuning-parameter symbols
_CONFIG_KEYS = {
    "N_init": ("n_init", int),
    "N_expl": ("n_expl", int),
    "M_fin": ("m_fin", int),
    "T_max": ("t_max", int),
    "rho_min": ("rho_min", float),
    "P_and": ("p_and", float),
    "P_not": ("p_not", float),
    "P_init": ("p_init", float),
    "P_c": ("p_c", float),
    "rho_del": ("rho_del", float),
    "C_max": ("c_max", int),
    "k_max": ("k_max", int),
    "d": ("d", int),
}


def ingest(path: str | Path, response: str) -> Dataset:
    """Read a CSV with a header row into a Dataset.

    Covariate cells must be 0/1 and complete; duplicate covariate columns
    (identical bit patterns) are dropped with a warning.  The family is
    binomial when the response holds only 0/1 values, gaussian otherwise.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = list(reader)
    if response not in header:
        raise IngestionError(f"{path}: no response column {response!r}")
    resp_idx = header.index(response)
    if header.count(response) > 1:
        raise IngestionError(f"{path}: multiple columns named {response!r}")
    if not rows:
        raise IngestionError(f"{path}: no data rows")

    y = np.empty(len(rows))
    cov_names = [h for i, h in enumerate(header) if i != resp_idx]
    X = np.empty((len(rows), len(cov_names)), dtype=np.uint8)
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {r} has {len(row)} cells, "
                                 f"expected {len(header)}")
        c_out = 0
        for c, cell in enumerate(row):
            cell = cell.strip()
            if c == resp_idx:
                try:
                    y[r - 2] = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {r}, column {header[c]!r}: "
                        f"non-numeric response {cell!r}") from None
                continue
            if cell not in ("0", "1"):
                raise IngestionError(
                    f"{path}: row {r}, column {header[c]!r}: "
                    f"covariate cell {cell!r} is not 0/1")
            X[r - 2, c_out] = int(cell)
            c_out += 1

    # drop covariate columns that duplicate an earlier one
    seen: dict[bytes, str] = {}
    keep, names = [], []
    for j, name in enumerate(cov_names):
        sig = X[:, j].tobytes()
        if sig in seen:
            warnings.warn(f"dropping column {name!r}: identical to {seen[sig]!r}")
            continue
        seen[sig] = name
        keep.append(j)
        names.append(name)
    X = X[:, keep]

    family = BINOMIAL if np.isin(y, (0.0, 1.0)).all() else GAUSSIAN
    return Dataset(X=X, y=y, family=family, names=tuple(names))


def load_config_file(path: str | Path) -> dict:
    """Flat key=value config file with the tuning-parameter names as keys."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise IngestionError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise IngestionError(f"{path}:{lineno}: unknown key {key!r}")
        field_name, cast = _CONFIG_KEYS[key]
        out[field_name] = cast(value)
    return out


def _config_echo(cfg: GmjmcmcConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def _build_config(args, base: GmjmcmcConfig | None = None) -> GmjmcmcConfig:
    cfg = base or GmjmcmcConfig()
    if getattr(args, "config", None):
        cfg = replace(cfg, **load_config_file(args.config))
    overrides = {}
    for name in ("seed", "chains"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "prior", None):
        overrides["marglik"] = args.prior
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _n_jobs(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("LOGICREG_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_analyze(args) -> int:
    cfg = _build_config(args)
    data = ingest(args.input, args.response)
    if args.family and args.family != data.family:
        if args.family == BINOMIAL:
            raise IngestionError("response is not 0/1; cannot treat as binomial")
        data = Dataset(X=data.X, y=data.y, family=args.family, names=data.names)
    result = analyze(data, cfg, pi_c=args.threshold, n_jobs=_n_jobs(args))
    out = Path(args.out)
    report = {
        "config": _config_echo(cfg),
        "input": str(args.input),
        "response": args.response,
        "family": data.family,
        "threshold": args.threshold,
        "detections": result["detections"],
        "trees": result["trees"],
        "per_chain": result["per_chain"],
        "weights": result["weights"],
        "models_visited": result["models_visited"],
        "wall_clock_seconds": result["wall_clock_seconds"],
    }
    _write_json(out / "detections.json", report)
    _write_csv(out / "detections.csv", ["tree", "probability"],
               [(d["tree"], d["probability"]) for d in result["detections"]])
    for d in result["detections"]:
        print(f"{d['probability']:.4f}  {d['tree']}")
    return 0


def cmd_bench(args) -> int:
    base = SCENARIO_CONFIGS[args.scenario]
    cfg = _build_config(args, base)
    report = bench(args.scenario, args.replicates, cfg, n=args.n,
                   pi_c=args.threshold, n_jobs=_n_jobs(args))
    payload = {"config": _config_echo(cfg), "metrics": report.to_dict()}
    _write_json(Path(args.out) / "metrics.json", payload)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    base = replace(SCENARIO_CONFIGS[5], k_max=20, d=30)
    cfg = _build_config(args, base)
    lo, hi, steps = args.grid
    grid = list(np.linspace(lo, hi, int(steps)))
    curve = sweep(args.axis, grid, args.replicates, cfg=cfg,
                  n=args.n, n_jobs=_n_jobs(args))
    _write_csv(Path(args.out) / "curve.csv", [args.axis, "power"], curve)
    for value, power in curve:
        print(f"{value:g}\t{power:.3f}")
    return 0


def _parse_grid(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be lo:hi:steps")
    return float(parts[0]), float(parts[1]), int(parts[2])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logicreg",
                                description="Bayesian logic regression")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--chains", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--threshold", type=float, default=0.5,
                        help="detection threshold pi_C")
        sp.add_argument("--prior", choices=[JEFFREYS, ROBUST_G], default=None)
        sp.add_argument("--out", default="out")

    sp = sub.add_parser("analyze", help="analyze a binary-covariate CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--family", choices=[GAUSSIAN, BINOMIAL], default=None)
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("bench", help="run a simulation scenario")
    sp.add_argument("--scenario", type=int, required=True, choices=range(1, 7))
    sp.add_argument("--replicates", type=int, default=20)
    sp.add_argument("--n", type=int, default=1000)
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("sweep", help="sensitivity sweep for the 4-way tree")
    sp.add_argument("--axis", choices=["beta4", "n", "d"], required=True)
    sp.add_argument("--grid", type=_parse_grid, required=True,
                    help="lo:hi:steps")
    sp.add_argument("--replicates", type=int, default=5)
    sp.add_argument("--n", type=int, default=1000)
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IngestionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
