"""Batch front end: simulate, estimate, screen, report.

Every run writes a ``<output>.manifest.json`` with the full
configuration, the seed actually used and the package versions, so any
output can be reproduced bit-exactly.  Outputs are machine-first (JSON
and tidy CSV); figure generation is an external step.

Exit codes: 0 success, 1 configuration error, 2 I/O error,
3 every requested tuple failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, lattice
from .errors import EstimationError, ParseError
from .estimators import (
    SPIN_LOG_DIVISORS,
    TargetSpec,
    additive_interaction,
    coupling_from_interaction,
    multiplicative_interaction,
    multiplicative_via_expectations,
)
from .independence import blanket_screen
from .simulators import (
    HamiltonianConfig,
    ISING_PAIR,
    PLAQUETTE4,
    ising_metropolis,
    plaquette_metropolis,
    regression3_trait_config,
    simulate_trait,
    ukbb_trait_config,
)
from .store import (
    DEFAULT_MIN_BIN_COUNT,
    KIND_BINARY,
    KIND_OUTCOME,
    SampleMatrix,
    VariableMeta,
    load_csv,
)
from .uncertainty import bootstrap, bootstrap_multiplicative


class ConfigError(ValueError):
    pass


class AllTuplesFailed(RuntimeError):
    pass


def _versions():
    import numba
    import scipy

    return {
        "tlim": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": ".".join(map(str, sys.version_info[:3])),
    }


def _resolve_seed(seed):
    if seed is not None:
        return int(seed)
    return int.from_bytes(os.urandom(8), "little") >> 1


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_path, command, config, seed):
    _write_json(f"{out_path}.manifest.json", {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": _versions(),
    })


def _schema_record(m: SampleMatrix):
    cols = [
        {"name": v.name, "kind": v.kind, "categories": v.n_categories,
         "basis": v.basis}
        for v in m.variables
    ]
    cols += [{"name": name, "kind": KIND_OUTCOME, "categories": 0,
              "basis": "zero_one"} for name in m.outcome_names]
    return {"columns": cols}


def _schema_from_record(record):
    metas = []
    for col in record["columns"]:
        kind = col["kind"]
        n_cat = col.get("categories", 2)
        metas.append(VariableMeta(
            col["name"], kind,
            2 if kind in (KIND_BINARY, KIND_OUTCOME) else n_cat,
            col.get("basis", "zero_one"),
        ))
    return metas


def _save_dataset(m: SampleMatrix, path):
    if path.endswith(".csv"):
        m.save_csv(path)
        _write_json(f"{path}.schema.json", _schema_record(m))
    else:
        m.save_packed(path)


def _load_dataset(path, schema_path=None) -> SampleMatrix:
    if path.endswith(".csv"):
        schema_path = schema_path or f"{path}.schema.json"
        if not os.path.exists(schema_path):
            raise ConfigError(
                f"CSV input needs a schema file ({schema_path} not found)"
            )
        with open(schema_path, encoding="utf-8") as fh:
            return load_csv(path, _schema_from_record(json.load(fh)))
    return SampleMatrix.load_packed(path)


def _load_sidecar_manifest(path):
    manifest = f"{path}.manifest.json"
    if os.path.exists(manifest):
        with open(manifest, encoding="utf-8") as fh:
            return json.load(fh)
    return None


# -- simulate -----------------------------------------------------------------

_SIM_CONFIG_KEYS = ("model", "preset", "L", "T", "J", "n", "seed",
                    "burn_in", "thin", "trait_config")


def _merge_sim_config(args):
    """Config-file values fill in whatever the flags left unset."""
    merged = {k: getattr(args, k, None) for k in _SIM_CONFIG_KEYS}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(_SIM_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key, value in file_cfg.items():
            if merged.get(key) is None:
                merged[key] = value
    if merged["burn_in"] is None:
        merged["burn_in"] = 1000
    if merged["thin"] is None:
        merged["thin"] = 10
    if merged["preset"] is None:
        merged["preset"] = "ukbb"
    return merged


def _trait_config_from_mapping(raw, n, seed):
    kwargs = dict(raw)
    for key in ("variant_frequencies", "linear_coeffs", "intercepts",
                "variant_names"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    for key in ("pairwise_coeffs", "triple_coeffs"):
        if key in kwargs:
            kwargs[key] = tuple(tuple(entry) for entry in kwargs[key])
    if n is not None:
        kwargs["n_individuals"] = n
    kwargs.setdefault("seed", seed)
    from .simulators import TraitConfig

    return TraitConfig(**kwargs)


def _cmd_simulate(args):
    opts = _merge_sim_config(args)
    seed = _resolve_seed(opts["seed"])
    model = opts["model"]
    if model is None:
        raise ConfigError("--model (or a config file with one) is required")
    if model in ("ising", "plaquette"):
        if opts["L"] is None or opts["T"] is None:
            raise ConfigError("--L and --T are required for lattice models")
        kind = ISING_PAIR if model == "ising" else PLAQUETTE4
        cfg = HamiltonianConfig(L=opts["L"], T=opts["T"], kind=kind,
                                J=opts["J"])
        sampler = ising_metropolis if kind == ISING_PAIR else plaquette_metropolis
        m = sampler(cfg, opts["n"], seed, opts["burn_in"], opts["thin"])
        summary = (
            f"n_samples={m.n_samples} "
            f"acceptance_rate={m.provenance['acceptance_rate']:.4f} "
            f"energy_mean={m.provenance['energy_mean']:.4f}"
        )
        config = {
            "model": model, "L": opts["L"], "T": opts["T"],
            "J": cfg.coupling, "n": opts["n"],
            "burn_in": opts["burn_in"], "thin": opts["thin"],
            "provenance": {k: v for k, v in m.provenance.items()},
        }
    elif model == "trait":
        if opts["trait_config"]:
            cfg = _trait_config_from_mapping(opts["trait_config"],
                                             opts["n"], seed)
        elif opts["preset"] == "ukbb":
            cfg = ukbb_trait_config(n=opts["n"] or 20000, seed=seed)
        elif opts["preset"] == "regression3":
            cfg = regression3_trait_config(n=opts["n"] or 1000, seed=seed)
        else:
            raise ConfigError(f"unknown trait preset {opts['preset']!r}")
        m = simulate_trait(cfg)
        y = m.outcome(cfg.outcome_name)
        summary = (
            f"n_samples={m.n_samples} outcome_mean={y.mean():.4f} "
            f"outcome_sd={y.std(ddof=1):.4f}"
        )
        config = {"model": "trait", "preset": opts["preset"],
                  "n": m.n_samples, "outcome": cfg.outcome_name}
    else:
        raise ConfigError(f"unknown model {model!r}")

    _save_dataset(m, args.output)
    _write_manifest(args.output, "simulate", config, seed)
    print(f"{args.output}: {summary}")
    return 0


# -- estimate -----------------------------------------------------------------

def _parse_explicit_tuples(text):
    tuples = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        tuples.append(tuple(int(x) for x in part.split(",")))
    if not tuples:
        raise ConfigError("no target tuples given")
    return tuples


def _generate_tuples(name, L):
    if L is None:
        raise ConfigError(f"tuple generator {name!r} needs --L (or a manifest)")
    if name == "nn-pairs":
        return lattice.nn_pairs(L)
    if name == "pairs":
        return lattice.all_pairs(L * L)
    if name == "non-nn-pairs":
        return lattice.non_nn_pairs(L)
    if name == "rep-non-nn-pairs":
        return lattice.representative_non_nn_pairs(L)
    if name == "plaquettes":
        return lattice.plaquettes(L)
    if name == "plaquette-triples":
        return lattice.plaquette_triples(L)
    if name == "sites":
        return [(s,) for s in range(L * L)]
    raise ConfigError(f"unknown tuple generator {name!r}")


_GENERATORS = ("nn-pairs", "pairs", "non-nn-pairs", "rep-non-nn-pairs",
               "plaquettes", "plaquette-triples", "sites")


def _tuples_from_args(args, model_info):
    if args.targets in _GENERATORS:
        L = args.L or model_info.get("L")
        tuples = _generate_tuples(args.targets, L)
    else:
        tuples = _parse_explicit_tuples(args.targets)
    if args.order is not None:
        bad = [t for t in tuples if len(t) != args.order]
        if bad:
            raise ConfigError(
                f"targets of order != {args.order} requested: {bad[:3]}"
            )
    return tuples


def _load_parents_file(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {
        tuple(int(x) for x in key.split(",")): tuple(value)
        for key, value in raw.items()
    }


def _conditioning_for(tup, args, model_info, parents_map):
    if args.condition == "full":
        return None, "full"
    if args.condition == "parents":
        if parents_map is not None:
            key = tuple(sorted(tup))
            if key not in parents_map:
                raise ConfigError(f"parents file lacks tuple {key}")
            return parents_map[key], "parents"
        L = args.L or model_info.get("L")
        model = args.model or model_info.get("model")
        kind = {"ising": ISING_PAIR, "plaquette": PLAQUETTE4}.get(model, model)
        if L is None or kind not in (ISING_PAIR, PLAQUETTE4):
            raise ConfigError(
                "--condition parents needs lattice info (--L/--model, a "
                "manifest sidecar, or --parents-file)"
            )
        return lattice.parents_for(L, tup, kind), "parents"
    # explicit comma-separated list
    return tuple(int(x) for x in args.condition.split(",")), "list"


def _estimate_one(m, tup, args, model_info, parents_map, tuple_seed):
    conditioning, label = _conditioning_for(tup, args, model_info, parents_map)
    spec = TargetSpec(targets=tup, conditioning=conditioning)
    spin_basis = all(
        m.meta(t).basis == "spin_pm1" for t in tup
    )
    try:
        if args.kind == "add":
            est = additive_interaction(m, args.outcome, spec, args.min_bin)
            record = est.to_record(conditioning_label=label)
            if args.boot_B >= 2:
                boot = bootstrap(
                    m,
                    lambda mm: additive_interaction(
                        mm, args.outcome, spec, args.min_bin).value,
                    args.boot_B, tuple_seed,
                )
                record["boot"] = boot.to_record()
        else:
            if args.kind == "expect":
                est = multiplicative_via_expectations(m, spec, args.min_bin)
            else:
                est = multiplicative_interaction(m, spec, args.min_bin)
            record = est.to_record(conditioning_label=label)
            if args.boot_B >= 2:
                _, boot = bootstrap_multiplicative(
                    m, spec, args.boot_B, tuple_seed, args.min_bin,
                    statistic="log",
                )
                record["boot"] = boot.to_record()
                if spin_basis and est.order in SPIN_LOG_DIVISORS:
                    div = SPIN_LOG_DIVISORS[est.order]
                    record["coupling_stderr"] = boot.stderr / abs(div)
            if spin_basis and est.order in SPIN_LOG_DIVISORS:
                record["coupling"] = coupling_from_interaction(
                    est, est.order, strict=False
                )
        return record
    except EstimationError as exc:
        return {
            "targets": list(tup),
            "conditioning": label,
            "error": type(exc).__name__,
            "message": str(exc),
            "cells": [
                [list(p) for p in cell] for cell in getattr(exc, "cells", ())
            ],
        }


def _cmd_estimate(args):
    seed = _resolve_seed(args.seed)
    m = _load_dataset(args.input, args.schema)
    sidecar = _load_sidecar_manifest(args.input)
    model_info = (sidecar or {}).get("config", {})
    tuples = sorted(set(tuple(t) for t in _tuples_from_args(args, model_info)))
    parents_map = (
        _load_parents_file(args.parents_file) if args.parents_file else None
    )

    def job(k):
        tup = tuples[k]
        tuple_seed = int(np.random.SeedSequence(
            entropy=seed, spawn_key=(k,)).generate_state(1, np.uint64)[0])
        return _estimate_one(m, tup, args, model_info, parents_map, tuple_seed)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(job, range(len(tuples))))
    else:
        results = [job(k) for k in range(len(tuples))]

    report = {
        "dataset": args.input,
        "dataset_info": model_info,
        "kind": args.kind,
        "results": results,
    }
    _write_json(args.output, report)
    config = {
        "input": args.input, "targets": args.targets, "kind": args.kind,
        "outcome": args.outcome, "condition": args.condition,
        "boot_B": args.boot_B, "min_bin": args.min_bin,
        "threads": args.threads, "order": args.order,
    }
    _write_manifest(args.output, "estimate", config, seed)
    n_failed = sum(1 for r in results if "error" in r)
    print(f"{args.output}: {len(results) - n_failed}/{len(results)} tuples estimated")
    if results and n_failed == len(results):
        raise AllTuplesFailed("every requested tuple failed")
    return 0


# -- screen ---------------------------------------------------------------------

def _cmd_screen(args):
    m = _load_dataset(args.input, args.schema)
    sidecar = _load_sidecar_manifest(args.input)
    model_info = (sidecar or {}).get("config", {})
    if args.pairs in _GENERATORS:
        L = args.L or model_info.get("L")
        pairs = _generate_tuples(args.pairs, L)
    else:
        pairs = _parse_explicit_tuples(args.pairs)
    for p in pairs:
        if len(p) != 2:
            raise ConfigError("screening requires pairs")

    parents_map = (
        _load_parents_file(args.parents_file) if args.parents_file else None
    )

    def parent_fn(pair):
        if args.condition == "none":
            return ()
        if parents_map is not None:
            return parents_map[tuple(sorted(pair))]
        if args.condition == "parents":
            L = args.L or model_info.get("L")
            model = args.model or model_info.get("model")
            kind = {"ising": ISING_PAIR, "plaquette": PLAQUETTE4}.get(model, model)
            if L is None or kind not in (ISING_PAIR, PLAQUETTE4):
                raise ConfigError("--condition parents needs lattice info")
            return lattice.parents_for(L, pair, kind)
        return tuple(int(x) for x in args.condition.split(","))

    results = blanket_screen(m, pairs, parent_fn, args.threshold)
    records = [r.to_record() for r in results]
    if args.output.endswith(".csv"):
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "parents", "statistic", "dof",
                             "p_value", "verdict"])
            for r in records:
                writer.writerow([
                    r["pair"][0], r["pair"][1],
                    " ".join(map(str, r["parents"])),
                    r["statistic"], r["dof"], r["p_value"], r["verdict"],
                ])
    else:
        _write_json(args.output, {"dataset": args.input, "results": records})
    config = {
        "input": args.input, "pairs": args.pairs,
        "condition": args.condition, "threshold": args.threshold,
    }
    # screening consumes no randomness; record the seed only if given
    _write_manifest(args.output, "screen", config, args.seed)
    n_dep = sum(1 for r in records if r["verdict"] == "dependent")
    print(f"{args.output}: {n_dep}/{len(records)} pairs dependent "
          f"at threshold {args.threshold}")
    return 0


# -- report ---------------------------------------------------------------------

def _load_reports(paths):
    out = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            out.append(json.load(fh))
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cmd_report(args):
    what = args.what
    if what == "coupling-vs-temperature":
        rows = []
        for rep in _load_reports(args.sources):
            T = rep.get("dataset_info", {}).get("T")
            for r in rep["results"]:
                if "error" in r or r.get("coupling") is None:
                    continue
                rows.append([
                    T, " ".join(map(str, r["targets"])), r["coupling"],
                    r.get("coupling_stderr", ""),
                ])
        _write_csv(args.output, ["T", "targets", "coupling", "stderr"], rows)
    elif what == "tuple-scatter":
        rows = []
        for rep in _load_reports(args.sources):
            for idx, r in enumerate(rep["results"]):
                if "error" in r:
                    rows.append([idx, " ".join(map(str, r["targets"])),
                                 "", "", r["error"]])
                    continue
                value = r.get("coupling", r["value"])
                stderr = r.get("coupling_stderr",
                               r.get("boot", {}).get("stderr", ""))
                flags = r["flags"] if isinstance(r["flags"], str) else "low_support"
                rows.append([idx, " ".join(map(str, r["targets"])),
                             value, stderr, flags])
        _write_csv(args.output,
                   ["index", "targets", "value", "stderr", "flags"], rows)
    elif what == "bins":
        rows = []
        for rep in _load_reports(args.sources):
            T = rep.get("dataset_info", {}).get("T")
            for r in rep["results"]:
                if "error" in r:
                    continue
                for cell in r["cells"]:
                    assign = " ".join(f"{i}={v}" for i, v in cell["assignment"])
                    rows.append([T, " ".join(map(str, r["targets"])),
                                 assign, cell["support"]])
        _write_csv(args.output, ["T", "targets", "cell", "count"], rows)
    elif what == "pvalues":
        rows = []
        for rep in _load_reports(args.sources):
            for r in rep["results"]:
                rows.append([r["pair"][0], r["pair"][1], r["p_value"],
                             r["verdict"]])
        _write_csv(args.output, ["i", "j", "p_value", "verdict"], rows)
    elif what == "height-hist":
        m = _load_dataset(args.sources[0])
        outcome = args.outcome or m.outcome_names[0]
        y = m.outcome(outcome)
        lo = float(np.floor(y.min()))
        hi = float(np.ceil(y.max()))
        edges = np.arange(lo, hi + 1.0, 1.0)
        strata = ["all"]
        columns = {"all": np.ones(m.n_samples, bool)}
        names = [v.name for v in m.variables]
        if "sex" in names:
            sex = m.column_bool(names.index("sex"))
            columns["stratum0"] = ~sex
            columns["stratum1"] = sex
            strata += ["stratum0", "stratum1"]
        rows = []
        for name in strata:
            counts, _ = np.histogram(y[columns[name]], bins=edges)
            for k, cnt in enumerate(counts):
                rows.append([name, edges[k], edges[k + 1], int(cnt)])
        _write_csv(args.output,
                   ["stratum", "bin_left", "bin_right", "count"], rows)
    else:
        raise ConfigError(f"unknown report family {what!r}")
    print(f"{args.output}: wrote {what} data")
    return 0


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlim",
        description="simulate discrete equilibrium systems and recover "
                    "their interactions from samples",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a dataset")
    p_sim.add_argument("--model", choices=("ising", "plaquette", "trait"))
    p_sim.add_argument("--config",
                       help="JSON file mirroring the model config; "
                            "explicit flags take precedence")
    p_sim.add_argument("--L", type=int)
    p_sim.add_argument("--T", type=float)
    p_sim.add_argument("--J", type=float)
    p_sim.add_argument("--n", type=int)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--burn-in", type=int, default=None, dest="burn_in")
    p_sim.add_argument("--thin", type=int, default=None)
    p_sim.add_argument("--preset", default=None,
                       choices=("ukbb", "regression3"))
    p_sim.add_argument("-o", "--output", required=True)

    p_est = sub.add_parser("estimate", help="estimate interaction tuples")
    p_est.add_argument("-i", "--input", required=True)
    p_est.add_argument("--schema")
    p_est.add_argument("--targets", required=True,
                       help="generator name or 'i,j;k,l' tuples")
    p_est.add_argument("--order", type=int)
    p_est.add_argument("--kind", default="mult",
                       choices=("mult", "add", "expect"))
    p_est.add_argument("--outcome")
    p_est.add_argument("--condition", default="full",
                       help="full | parents | comma-separated indices")
    p_est.add_argument("--parents-file", dest="parents_file")
    p_est.add_argument("--boot-B", dest="boot_B", type=int, default=100)
    p_est.add_argument("--min-bin", dest="min_bin", type=int,
                       default=DEFAULT_MIN_BIN_COUNT)
    p_est.add_argument("--seed", type=int, default=None)
    p_est.add_argument("--threads", type=int, default=1)
    p_est.add_argument("--L", type=int)
    p_est.add_argument("--model")
    p_est.add_argument("-o", "--output", required=True)

    p_scr = sub.add_parser("screen", help="chi-squared independence screen")
    p_scr.add_argument("-i", "--input", required=True)
    p_scr.add_argument("--schema")
    p_scr.add_argument("--pairs", required=True)
    p_scr.add_argument("--condition", default="parents",
                       help="none | parents | comma-separated indices")
    p_scr.add_argument("--parents-file", dest="parents_file")
    p_scr.add_argument("--threshold", type=float, default=0.1)
    p_scr.add_argument("--seed", type=int, default=None)
    p_scr.add_argument("--L", type=int)
    p_scr.add_argument("--model")
    p_scr.add_argument("-o", "--output", required=True)

    p_rep = sub.add_parser("report", help="emit plot-ready tidy CSVs")
    p_rep.add_argument("--from", dest="sources", nargs="+", required=True)
    p_rep.add_argument("--what", required=True,
                       choices=("coupling-vs-temperature", "tuple-scatter",
                                "bins", "pvalues", "height-hist"))
    p_rep.add_argument("--outcome")
    p_rep.add_argument("-o", "--output", required=True)
    return parser


_HANDLERS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "screen": _cmd_screen,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return _HANDLERS[args.command](args)
    except (OSError, ParseError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AllTuplesFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
