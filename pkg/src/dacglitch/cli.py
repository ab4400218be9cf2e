"""Command-line front end: ``dacglitch <command> [options]``.

Option values resolve as command-line flag, then ``--config`` JSON entry, then
built-in default.  Every written file carries the tool version, the resolved
configuration and the seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import Basis, TransitionModel, mask_to_str
from .errors import DacGlitchError, InfeasibleError
from .mappers import MAPPERS, TableMapper, build_greedy_lut, canonical_mapping, make_mapper, memoryless_solve
from .optimizer import AnnealConfig, anneal, check_feasible
from .representations import (
    MAX_INDEX_LENGTH,
    MetricReport,
    enumerate_reps,
    metric_complete,
    metric_monte_carlo,
    rep_count_stats,
)
from .simulator import EdgeModel, StimulusConfig, run_experiment
from .tables import (
    add_to_catalog,
    atomic_write,
    dump_json,
    load_table,
    resolve_basis,
    save_greedy_lut,
    save_memoryless_csv,
)

DEFAULTS = {
    "optimize-basis": {"n": 8, "l": None, "restarts": 100, "iterations": 20_000, "cooling": 0.995,
                       "samples": 2_000, "initial_temperature": None, "steps": [1, 2, 4],
                       "workers": 1, "output": None, "catalog": None, "no_catalog": False},
    "evaluate-metric": {"n": 8, "basis": ["8T", "2T+6B", "3T+5B", "4T+4B", "opt9", "opt10",
                                          "opt11", "opt12", "opt13"],
                        "mapper": ["viterbi", "greedy", "memoryless"], "method": "auto",
                        "length": 100_000, "restarts": 8, "model": "uniform", "workers": 1,
                        "csv": None, "output": None, "catalog": None},
    "map-sequence": {"n": 8, "basis": "opt12", "mapper": "viterbi", "codes": None, "input": None,
                     "table": None, "restarts": 8, "model": "uniform", "output": None,
                     "catalog": None},
    "simulate": {"n": 8, "basis": ["8T", "4T+4B", "8B"], "mapper": ["viterbi"],
                 "stimulus": "sine", "freq": "31/1024", "samples": 1024, "osr": 64,
                 "amplitude": 1.0, "stimulus_file": None, "tau": 0.05, "sweep_tau": None,
                 "edge_mode": "skewed", "rise_time": 0.0, "reference": "midpoint",
                 "restarts": 8, "model": "uniform", "output": None, "json": None,
                 "waveform": None, "spectrum": None, "catalog": None},
    "export-table": {"n": 8, "basis": "opt12", "mode": "memoryless", "restarts": 8,
                     "model": "uniform", "cap": 1 << 24, "output": None, "catalog": None},
    "enumerate": {"n": 8, "basis": "opt12", "codeword": None, "limit": None, "output": None,
                  "catalog": None},
}

# presets whose comparison rows always use the canonical mapping
REFERENCE_PRESET_CHARS = ("T", "B")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--config", type=Path, default=None, help="JSON file with option values")
    p.add_argument("--n", type=int, default=None, help="DAC bit depth (default 8)")
    p.add_argument("--catalog", default=None, help="bases catalog path (default $DACGLITCH_CATALOG)")


def _model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default=None,
                   help="'uniform' or a text file of codes to estimate transitions from")
    p.add_argument("--restarts", type=int, default=None, help="memoryless solver restarts")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dacglitch", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"dacglitch {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize-basis", help="search a glitch-minimizing basis by annealing")
    _common(p)
    p.add_argument("--l", type=int, default=None, help="number of switches")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--cooling", type=float, default=None)
    p.add_argument("--samples", type=int, default=None, help="objective samples per restart")
    p.add_argument("--initial-temperature", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output", "-o", default=None, help="SearchResult JSON path")
    p.add_argument("--no-catalog", action="store_true", default=None)

    p = sub.add_parser("evaluate-metric", help="normalized glitch metric of bases x mappers")
    _common(p)
    _model_opts(p)
    p.add_argument("--basis", action="append", default=None)
    p.add_argument("--mapper", action="append", default=None, choices=MAPPERS)
    p.add_argument("--method", choices=("auto", "analytic", "monte-carlo"), default=None)
    p.add_argument("--length", type=int, default=None, help="Monte Carlo sequence length")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--csv", default=None, help="append report rows to this CSV")
    p.add_argument("--output", "-o", default=None, help="JSON report path")

    p = sub.add_parser("map-sequence", help="choose representations for a code sequence")
    _common(p)
    _model_opts(p)
    p.add_argument("--basis", default=None)
    p.add_argument("--mapper", default=None, choices=MAPPERS)
    p.add_argument("--codes", default=None, help="comma-separated codewords")
    p.add_argument("--input", default=None, help="text file of codewords")
    p.add_argument("--table", default=None, help="exported memoryless CSV or greedy LUT to replay")
    p.add_argument("--output", "-o", default=None, help="JSON path")

    p = sub.add_parser("simulate", help="behavioral SNDR/SFDR over bases, mappers and skews")
    _common(p)
    _model_opts(p)
    p.add_argument("--basis", action="append", default=None)
    p.add_argument("--mapper", action="append", default=None, choices=MAPPERS)
    p.add_argument("--stimulus", choices=StimulusConfig.KINDS, default=None)
    p.add_argument("--freq", default=None, help="normalized frequency f0/fs, e.g. 31/1024")
    p.add_argument("--samples", type=int, default=None, help="record length M")
    p.add_argument("--osr", type=int, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--stimulus-file", default=None)
    p.add_argument("--tau", type=float, default=None, help="timing error tau/T")
    p.add_argument("--sweep-tau", default=None, help="grid start:step:stop (inclusive)")
    p.add_argument("--edge-mode", choices=("skewed", "symmetric"), default=None)
    p.add_argument("--rise-time", type=float, default=None)
    p.add_argument("--reference", choices=("midpoint", "nominal"), default=None)
    p.add_argument("--output", "-o", default=None, help="CSV with one row per experiment")
    p.add_argument("--json", default=None, help="JSON with all results")
    p.add_argument("--waveform", default=None, help="waveform CSV (single experiment)")
    p.add_argument("--spectrum", default=None, help="spectrum CSV (single experiment)")

    p = sub.add_parser("export-table", help="write a memoryless CSV or greedy LUT blob")
    _common(p)
    _model_opts(p)
    p.add_argument("--basis", default=None)
    p.add_argument("--mode", choices=("memoryless", "canonical", "greedy-lut"), default=None)
    p.add_argument("--cap", type=int, default=None, help="maximum LUT entries")
    p.add_argument("--output", "-o", default=None)

    p = sub.add_parser("enumerate", help="list representations or count statistics")
    _common(p)
    p.add_argument("--basis", default=None)
    p.add_argument("--codeword", type=int, default=None)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--output", "-o", default=None)
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    cfg["seed"] = 0
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = args.command
    return cfg


def _header(cfg: dict) -> dict:
    return {"tool": "dacglitch", "version": __version__, "seed": cfg["seed"], "config": cfg}


def _model(cfg: dict) -> TransitionModel:
    source = cfg.get("model") or "uniform"
    if source == "uniform":
        return TransitionModel.uniform(cfg["n"])
    codes = np.loadtxt(source, dtype=np.int64, ndmin=1)
    return TransitionModel.from_sequence(codes, cfg["n"])


def _basis(text: str, cfg: dict) -> Basis:
    return resolve_basis(str(text), cfg["n"], cfg.get("catalog"))


def _is_reference_preset(text: str) -> bool:
    t = str(text).strip().upper()
    return bool(t) and t[-1] in REFERENCE_PRESET_CHARS and t[0].isdigit()


def _csv_text(rows: list[dict], columns, meta: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    wr = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow(r)
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, str):
        try:
            v = float(v)
        except ValueError:
            return v
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.4f}"
    return str(v)


def _print_table(rows: list[dict], columns) -> None:
    cells = [[_fmt(r[c]) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    for row in cells:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)))


# --- commands -------------------------------------------------------------------


def cmd_optimize(cfg: dict) -> int:
    if cfg["l"] is None:
        raise UsageError("optimize-basis needs --l")
    try:
        check_feasible(cfg["n"], cfg["l"])
    except InfeasibleError as exc:
        raise UsageError(str(exc)) from exc
    conf = AnnealConfig(length=cfg["l"], bit_depth=cfg["n"], iterations=cfg["iterations"],
                        restarts=cfg["restarts"], initial_temperature=cfg["initial_temperature"],
                        cooling=cfg["cooling"], steps=tuple(cfg["steps"]), samples=cfg["samples"],
                        seed=cfg["seed"], workers=cfg["workers"])
    res = anneal(conf)
    body = res.to_json()
    wall = body.pop("wall_time")  # kept out of files so reruns are byte-identical
    doc = {**_header(cfg), "result": body}
    if cfg["output"]:
        atomic_write(cfg["output"], dump_json(doc))
    if not cfg["no_catalog"]:
        entry = {"bit_depth": cfg["n"], "length": cfg["l"], "seed": cfg["seed"],
                 "weights": list(res.basis.weights), "objective": res.objective,
                 "normalized": res.normalized, "version": __version__}
        path = add_to_catalog(entry, cfg["catalog"])
        print(f"catalog: {path}", file=sys.stderr)
    print(f"best basis: {','.join(map(str, res.basis.weights))}")
    print(f"normalized metric: {res.normalized:.6f}")
    print(f"elapsed: {wall:.1f} s", file=sys.stderr)
    return 0


def _report(basis: Basis, name: str, label: str, mapper: str, cfg: dict, model) -> MetricReport:
    method = cfg["method"]
    if mapper in ("memoryless", "canonical"):
        if method == "monte-carlo":
            handle = make_mapper(mapper, basis, model, seed=cfg["seed"], restarts=cfg["restarts"])
            rep = metric_monte_carlo(basis, handle, model, cfg["length"], cfg["seed"],
                                     shards=cfg["workers"], workers=cfg["workers"])
        else:
            if mapper == "canonical":
                table = canonical_mapping(basis)
            else:
                table = memoryless_solve(basis, model, restarts=cfg["restarts"], seed=cfg["seed"])
            rep = metric_complete(basis, table, model, mapper=mapper)
    else:
        if method == "analytic":
            raise UsageError(f"no closed form for the {mapper} mapper; use --method monte-carlo")
        handle = make_mapper(mapper, basis, model, seed=cfg["seed"])
        rep = metric_monte_carlo(basis, handle, model, cfg["length"], cfg["seed"],
                                 shards=cfg["workers"], workers=cfg["workers"])
    rep.basis_id = label
    return rep


def cmd_evaluate(cfg: dict) -> int:
    model = _model(cfg)
    reports = []
    for name in cfg["basis"]:
        basis = _basis(name, cfg)
        mappers = list(cfg["mapper"])
        if _is_reference_preset(name) or basis.length > MAX_INDEX_LENGTH:
            mappers = ["canonical"]
        for m in mappers:
            reports.append(_report(basis, name, str(name), m, cfg, model))
    rows = [r.csv_row() for r in reports]
    _print_table(rows, ("basis_id", "L", "mapper", "method", "normalized", "ci_halfwidth"))
    meta = _header(cfg)
    if cfg["csv"]:
        path = Path(cfg["csv"])
        prior = path.read_text() if path.exists() else ""
        new = _csv_text(rows, MetricReport.CSV_COLUMNS, meta)
        if prior:
            # appended batches keep their own metadata line but no second header
            lines = new.splitlines(keepends=True)
            new = lines[0] + "".join(lines[2:])
        atomic_write(path, prior + new)
    if cfg["output"]:
        atomic_write(cfg["output"], dump_json({**meta, "reports": [r.to_json() for r in reports]}))
    return 0


def _codes(cfg: dict) -> np.ndarray:
    if cfg["codes"] and cfg["input"]:
        raise UsageError("give either --codes or --input")
    if cfg["codes"]:
        try:
            return np.array([int(t) for t in str(cfg["codes"]).split(",") if t.strip()], dtype=np.int64)
        except ValueError as exc:
            raise UsageError(f"cannot parse --codes: {exc}") from exc
    if cfg["input"]:
        return np.loadtxt(cfg["input"], dtype=np.int64, ndmin=1)
    raise UsageError("map-sequence needs --codes or --input")


def cmd_map(cfg: dict) -> int:
    codes = _codes(cfg)
    if cfg["table"]:
        from .mappers import replay_greedy_lut

        table = load_table(cfg["table"])
        path = replay_greedy_lut(table, codes) if table.mode == "greedy-lut" else TableMapper(table)(codes)
    else:
        basis = _basis(cfg["basis"], cfg)
        handle = make_mapper(cfg["mapper"], basis, _model(cfg), seed=cfg["seed"],
                             restarts=cfg["restarts"])
        path = handle(codes)
    doc = {**_header(cfg), "path": path.to_json()}
    text = dump_json(doc)
    if cfg["output"]:
        atomic_write(cfg["output"], text)
    L = path.basis.length
    for c, m in zip(path.codes, path.masks):
        print(f"{int(c):5d}  {mask_to_str(int(m), L)}")
    print(f"total squared glitch: {path.cost}")
    return 0


def parse_grid(text: str) -> list[float]:
    """``start:step:stop`` inclusive of ``stop`` (within rounding)."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"--sweep-tau needs start:step:stop, got {text!r}")
    try:
        a, step, b = (float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"cannot parse --sweep-tau {text!r}") from exc
    if step <= 0 or b < a:
        raise UsageError(f"--sweep-tau {text!r} gives an empty grid")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + k * step, 12) for k in range(count)]


SIM_COLUMNS = ("basis", "L", "mapper", "tau", "sndr_db", "sfdr_db", "glitch_cost")


def cmd_simulate(cfg: dict) -> int:
    taus = parse_grid(cfg["sweep_tau"]) if cfg["sweep_tau"] else [float(cfg["tau"])]
    stim = StimulusConfig(kind=cfg["stimulus"], frequency=cfg["freq"], samples=cfg["samples"],
                          osr=cfg["osr"], amplitude=cfg["amplitude"], path=cfg["stimulus_file"])
    model = _model(cfg)
    rows, results = [], []
    single = len(cfg["basis"]) * len(cfg["mapper"]) * len(taus) == 1
    for name in cfg["basis"]:
        basis = _basis(name, cfg)
        mappers = list(cfg["mapper"])
        if _is_reference_preset(name) or basis.length > MAX_INDEX_LENGTH:
            mappers = ["canonical"]
        for m in mappers:
            handle = make_mapper(m, basis, model, seed=cfg["seed"], restarts=cfg["restarts"])
            for tau in taus:
                kw = {"rise_time": cfg["rise_time"], "reference": cfg["reference"]}
                edges = (EdgeModel.symmetric(tau, **kw) if cfg["edge_mode"] == "symmetric"
                         else EdgeModel.skewed(tau, **kw))
                res = run_experiment(basis, handle, stim, edges, seed=cfg["seed"], model=model)
                rows.append({"basis": str(name), "L": basis.length, "mapper": m, "tau": tau,
                             "sndr_db": res.sndr_db, "sfdr_db": res.sfdr_db,
                             "glitch_cost": res.glitch_cost})
                results.append(res.to_json())
                if single and cfg["waveform"]:
                    res.export_waveform(cfg["waveform"], stim.osr)
                if single and cfg["spectrum"]:
                    res.export_spectrum(cfg["spectrum"])
    if not single and (cfg["waveform"] or cfg["spectrum"]):
        print("note: --waveform/--spectrum need a single experiment; skipped", file=sys.stderr)
    _print_table(rows, SIM_COLUMNS)
    meta = _header(cfg)
    meta["stimulus"] = stim.to_json()
    if cfg["output"]:
        out = [{k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in r.items()}
               for r in rows]
        atomic_write(cfg["output"], _csv_text(out, SIM_COLUMNS, meta))
    if cfg["json"]:
        atomic_write(cfg["json"], dump_json({**meta, "results": results}))
    return 0


def cmd_export(cfg: dict) -> int:
    if not cfg["output"]:
        raise UsageError("export-table needs --output")
    basis = _basis(cfg["basis"], cfg)
    meta = {"tool": "dacglitch", "version": __version__, "seed": cfg["seed"], "config": cfg}
    mode = cfg["mode"]
    if mode == "greedy-lut":
        table = build_greedy_lut(basis, cap=cfg["cap"])
        side = save_greedy_lut(table, cfg["output"], meta)
        print(f"wrote {side['entries']} entries x {side['entry_bytes']} bytes to {cfg['output']}")
        return 0
    if mode == "canonical":
        table = canonical_mapping(basis)
    else:
        table = memoryless_solve(basis, _model(cfg), restarts=cfg["restarts"], seed=cfg["seed"])
        meta["objective"] = table.meta["objective"]
    meta["weights"] = list(basis.weights)
    save_memoryless_csv(table, cfg["output"], meta)
    print(f"wrote {basis.n_codes} rows to {cfg['output']}")
    return 0


def cmd_enumerate(cfg: dict) -> int:
    basis = _basis(cfg["basis"], cfg)
    doc = _header(cfg)
    doc["basis"] = basis.to_json()
    if cfg["codeword"] is not None:
        reps = enumerate_reps(cfg["codeword"], basis, cfg["limit"])
        strs = [mask_to_str(m, basis.length) for m in reps]
        doc.update({"codeword": reps.codeword, "count": len(reps), "reps": strs})
        for s in strs:
            print(s)
        print(f"{len(strs)} representations of {reps.codeword}")
    else:
        st = rep_count_stats(basis)
        doc.update({"average": st.average, "minimum": st.minimum, "maximum": st.maximum})
        print(f"representations per codeword: average {st.average:.3f}, "
              f"min {st.minimum}, max {st.maximum}")
    if cfg["output"]:
        atomic_write(cfg["output"], dump_json(doc))
    return 0


COMMANDS = {
    "optimize-basis": cmd_optimize,
    "evaluate-metric": cmd_evaluate,
    "map-sequence": cmd_map,
    "simulate": cmd_simulate,
    "export-table": cmd_export,
    "enumerate": cmd_enumerate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except (DacGlitchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
