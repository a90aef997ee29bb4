"""Command-line front end.

Every subcommand resolves its settings as defaults < ``--config`` JSON <
explicit flags, validates them, runs one experiment and prints a JSON report.
With ``--out DIR`` the report is also written to ``DIR/report.json`` along
with plot-ready CSV files; the resolved configuration and a timestamp go to
``DIR/run.log`` so that reports stay byte-identical across reruns.

CSV files and their columns:

  build    graph.edgelist     u v w
  resist   profile.csv        n, rho, lo, hi
  walk     summary.csv        n, trials, mean, ci_lo, ci_hi, kind, threshold, frequency
           trials.csv         trial, n, R_n, final_distance
  laws     summary.csv        as for walk (weak, bridge); tail.csv: M, tail, fitted
  fluct    stages.csv         stage, k, estimate, ci_lo, ci_hi, target
  ucheck   sweep.csv          n, gap_or_proxy, analytic_bound
           recurrence.csv     m, partial_sum_inf
           alpha.csv          k, sup_p_k, fitted
  oracle   law.csv            range, endpoint, probability

Exit status: 0 on success, 2 on invalid input, 3 when a budget is exceeded.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .builders import (
    DEFAULT_VERTEX_BUDGET,
    AlternatingTreeSpec,
    AttachedTree,
    ImplicitTree,
    LayeredTree,
    lattice_box,
    pruned_tree_spec,
    regular_tree_spec,
    sierpinski_gasket,
    vicsek_tree,
)
from .errors import BudgetError, BudgetExceeded, ConfigInvalid, RwRangeError, ValidationError
from .graph import WeightedGraph, build_explicit, format_edgelist, load_edgelist

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3

TINY_GRAPHS = {
    "edge": [(0, 1)],
    "path3": [(0, 1), (1, 2)],
    "path5": [(0, 1), (1, 2), (2, 3), (3, 4)],
    "triangle": [(0, 1), (1, 2), (0, 2)],
    "square": [(0, 1), (1, 2), (2, 3), (3, 0)],
    "star": [(0, 1), (0, 2), (0, 3)],
    "k4": [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
    "lollipop": [(0, 1), (1, 2), (0, 2), (2, 3)],
}

DEFAULTS = {
    "family": None,
    "graph": None,
    "N": None,
    "dim": 2,
    "size": 21,
    "level": 3,
    "depth": 6,
    "core": None,
    "radii": None,
    "x": None,
    "n": 1000,
    "n_max": 50,
    "trials": 2000,
    "seed": 0,
    "epsilon": 0.05,
    "slack": 0.05,
    "band": None,
    "density": 0.0,
    "kind": None,
    "grid": None,
    "k_max": 100,
    "n1": 4,
    "n2": 8,
    "k1": 8,
    "stages": 4,
    "out": None,
    "jobs": 1,
    "budget_vertices": DEFAULT_VERTEX_BUDGET,
    "budget_steps": None,
    "trials_csv": False,
}

INT_KEYS = {"N", "dim", "size", "level", "depth", "n", "n_max", "trials", "seed", "k_max",
            "n1", "n2", "k1", "stages", "jobs", "budget_vertices", "budget_steps"}
FLOAT_KEYS = {"epsilon", "slack", "density"}


# ---------------------------------------------------------------------------
# configuration


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", default=S, help="JSON file of settings; flags override it")
    common.add_argument("--family", default=S,
                        help="lattice | tN | t --N N | ttildeN | yn | alt | gasket | vicsek")
    common.add_argument("--graph", default=S, help=f"tiny graph name ({', '.join(TINY_GRAPHS)}) or edge-list file")
    common.add_argument("--N", type=int, default=S, help="tree degree for t, ttilde, yn")
    common.add_argument("--dim", type=int, default=S, help="lattice dimension (1-3)")
    common.add_argument("--size", type=int, default=S, help="lattice side length")
    common.add_argument("--level", type=int, default=S, help="fractal level")
    common.add_argument("--depth", type=int, default=S, help="truncation depth when a tree must be explicit")
    common.add_argument("--core", default=S, help="edge-list file of the core tree for yn (default: a 3-star)")
    common.add_argument("--radii", default=S, help="comma-separated band radii for alt")
    common.add_argument("--x", default=S, help="start vertex: integer id, or comma-separated tree address")
    common.add_argument("--n", type=int, default=S, help="walk length / horizon")
    common.add_argument("--n-max", dest="n_max", type=int, default=S, help="largest ball radius")
    common.add_argument("--trials", type=int, default=S)
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--epsilon", type=float, default=S)
    common.add_argument("--slack", type=float, default=S)
    common.add_argument("--band", default=S, help="density band 'lo,hi' for weak laws")
    common.add_argument("--density", type=float, default=S, help="1 - F_1 for bridge thresholds")
    common.add_argument("--kind", default=S, help="laws: weak|bridge|tail; ucheck: sweep|recurrence|alpha")
    common.add_argument("--grid", default=S, help="comma-separated M values for tail fits")
    common.add_argument("--k-max", dest="k_max", type=int, default=S, help="largest k for alpha fits")
    common.add_argument("--n1", type=int, default=S)
    common.add_argument("--n2", type=int, default=S)
    common.add_argument("--k1", type=int, default=S)
    common.add_argument("--stages", type=int, default=S)
    common.add_argument("--out", default=S, help="directory for report.json, CSV files and run.log")
    common.add_argument("--jobs", type=int, default=S, help="worker threads; results do not depend on it")
    common.add_argument("--budget-vertices", dest="budget_vertices", type=int, default=S)
    common.add_argument("--budget-steps", dest="budget_steps", type=int, default=S,
                        help="fluct: largest radius; laws bridge: total rejection steps")
    common.add_argument("--trials-csv", dest="trials_csv", action="store_true", default=S,
                        help="walk: also write per-trial rows")
    p = argparse.ArgumentParser(
        prog="rwrange",
        description="Ranges of random walks, effective resistance and uniformity diagnostics.",
        epilog=__doc__.split("\n\n", 2)[2],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"rwrange {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("build", "emit an edge list"),
        ("resist", "resistance profile and enclosures"),
        ("walk", "Monte Carlo range report"),
        ("laws", "weak-law, bridge or tail-exponent experiment"),
        ("fluct", "fluctuation search on alternating trees"),
        ("ucheck", "uniformity sweep, recurrence or decay diagnostics"),
        ("oracle", "exact range law on a tiny graph"),
    ]:
        sub.add_parser(name, parents=[common], help=help_, description=help_,
                       epilog=__doc__.split("\n\n", 2)[2], formatter_class=argparse.RawDescriptionHelpFormatter)
    return p


def resolve_config(argv) -> dict:
    """Merge defaults, config file and flags into a validated settings dict."""
    try:
        ns = _parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            raise
        raise ConfigInvalid("invalid command line") from None
    flags = vars(ns)
    cfg = dict(DEFAULTS)
    path = flags.pop("config", None)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigInvalid("config file must hold a JSON object")
        loaded.pop("command", None)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(flags)
    for k in INT_KEYS:
        v = cfg[k]
        if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigInvalid(f"{k} must be an integer, got {v!r}")
    for k in FLOAT_KEYS:
        v = cfg[k]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigInvalid(f"{k} must be a number, got {v!r}")
        cfg[k] = float(v)
    for k in ("trials", "jobs", "budget_vertices"):
        if cfg[k] < 1:
            raise ConfigInvalid(f"{k} must be positive")
    if cfg["seed"] < 0:
        raise ConfigInvalid("seed must be non-negative")
    return cfg


# ---------------------------------------------------------------------------
# objects


def _ints(text, what):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        items = text
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        return [int(t) for t in items]
    except (TypeError, ValueError):
        raise ConfigInvalid(f"{what} must be comma-separated integers, got {text!r}") from None


def _floats(text, what):
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    try:
        return [float(t) for t in items]
    except (TypeError, ValueError):
        raise ConfigInvalid(f"{what} must be comma-separated numbers, got {text!r}") from None


def _tiny(name):
    if name in TINY_GRAPHS:
        return build_explicit(TINY_GRAPHS[name], name=name)
    p = Path(name)
    if not p.exists():
        raise ConfigInvalid(f"unknown graph {name!r}: not a named graph or a file")
    return load_edgelist(p)


def build_object(cfg):
    """The graph or implicit tree named by ``family`` (or ``graph``)."""
    if cfg["graph"] is not None:
        return _tiny(cfg["graph"])
    fam = cfg["family"]
    if fam is None:
        raise ConfigInvalid("give --family or --graph")
    fam = str(fam).lower()
    m = re.fullmatch(r"(t|ttilde)(\d*)", fam)
    if m:
        N = int(m.group(2)) if m.group(2) else cfg["N"]
        if N is None:
            raise ConfigInvalid(f"family {fam} needs a degree (e.g. t4 or --N 4)")
        return regular_tree_spec(N) if m.group(1) == "t" else pruned_tree_spec(N)
    if fam == "alt":
        radii = _ints(cfg["radii"], "radii") or [cfg["k1"]]
        return AlternatingTreeSpec(cfg["n1"], cfg["n2"], tuple(radii)).tree()
    if fam == "yn":
        core = load_edgelist(cfg["core"]) if cfg["core"] else build_explicit(TINY_GRAPHS["star"], name="star")
        return AttachedTree(core, cfg["N"] or 4)
    budget = cfg["budget_vertices"]
    if fam == "lattice":
        return lattice_box(cfg["dim"], cfg["size"], budget)
    if fam == "gasket":
        return sierpinski_gasket(cfg["level"], budget)
    if fam == "vicsek":
        return vicsek_tree(cfg["level"], budget)
    raise ConfigInvalid(f"unknown family {fam!r}")


def _centre(g: WeightedGraph, cfg):
    """Default start: the box centre for lattices, vertex 0 otherwise."""
    if str(cfg["family"]).lower() == "lattice" and cfg["graph"] is None:
        L, d = cfg["size"], cfg["dim"]
        c = L // 2
        return sum(c * L**i for i in range(d))
    return 0


def start_of(obj, cfg):
    x = cfg["x"]
    if isinstance(obj, ImplicitTree):
        if x is None or x == "":
            return ()
        return tuple(_ints(x, "address"))
    if x is None:
        return _centre(obj, cfg)
    try:
        return int(x)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"vertex id must be an integer, got {x!r}") from None


def _explicit(obj, cfg, radius):
    if isinstance(obj, ImplicitTree):
        g, addresses = obj.truncate(radius, cfg["budget_vertices"])
        return g, addresses
    return obj, None


# ---------------------------------------------------------------------------
# commands


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_build(cfg):
    obj = build_object(cfg)
    g, _ = _explicit(obj, cfg, cfg["depth"])
    report = {"name": g.name, "vertices": g.vertex_count, "edges": g.edge_count,
              "max_degree": g.max_degree, "artificial": int(g.artificial.sum())}
    return report, {"graph.edgelist": format_edgelist(g)}


def cmd_resist(cfg):
    from .resistance import escape_probability, rho_profile

    obj = build_object(cfg)
    x = start_of(obj, cfg)
    n_max = cfg["n_max"]
    if isinstance(obj, LayeredTree):
        prof = rho_profile(obj, x, n_max)
        esc = escape_probability(obj, x)
        report = {"profile": prof.to_dict(), "escape": {"lo": esc.lo, "hi": esc.hi, "n_used": esc.n_used},
                  "limit_interval": [prof.rows[-1][2], prof.rows[-1][3]]}
        return report, {"profile.csv": prof.to_csv()}
    g, _ = _explicit(obj, cfg, n_max + 1)
    if isinstance(obj, ImplicitTree):
        x = 0
    prof = rho_profile(g, x, n_max)
    return {"profile": prof.to_dict()}, {"profile.csv": prof.to_csv()}


def cmd_walk(cfg):
    from .ranges import _report
    from .walk import simulate_trials

    obj = build_object(cfg)
    x = start_of(obj, cfg)
    if cfg["trials"] < 100:
        raise ConfigInvalid("walk needs at least 100 trials")
    batch = simulate_trials(obj, x, cfg["n"], cfg["trials"], cfg["seed"], jobs=cfg["jobs"])
    rep = _report(batch.ranges[:, 0], cfg["n"], cfg["seed"])
    files = {"summary.csv": rep.to_csv()}
    if cfg["trials_csv"]:
        files["trials.csv"] = _csv(["trial", "n", "R_n", "final_distance"], batch.rows())
    return rep.to_dict(), files


def _default_band(obj, x):
    from .ranges import f_bounds

    if isinstance(obj, LayeredTree):
        fb = f_bounds(obj, [x])
        n1, n2 = obj.degree_range()
        if n1 == n2:
            return fb.lo, fb.hi
        return fb.band
    raise ConfigInvalid("give --band lo,hi for graphs without certified escape intervals")


def cmd_laws(cfg):
    from .ranges import bridge_experiment, tail_exponent_fit, weak_law_experiment

    kind = cfg["kind"] or "weak"
    obj = build_object(cfg)
    x = start_of(obj, cfg)
    if kind == "weak":
        band = _floats(cfg["band"], "band") if cfg["band"] is not None else _default_band(obj, x)
        if len(band) != 2:
            raise ConfigInvalid("band needs two numbers")
        rep = weak_law_experiment(obj, x, cfg["n"], cfg["epsilon"], cfg["trials"], band, cfg["seed"], jobs=cfg["jobs"])
        return rep.to_dict(), {"summary.csv": rep.to_csv()}
    if kind == "bridge":
        kw = {}
        if cfg["budget_steps"] is not None:
            kw["step_budget"] = cfg["budget_steps"]
        rep = bridge_experiment(obj, x, cfg["n"], cfg["epsilon"], cfg["trials"], cfg["seed"],
                                density=cfg["density"], jobs=cfg["jobs"], **kw)
        return rep.to_dict(), {"summary.csv": rep.to_csv()}
    if kind == "tail":
        grid = _ints(cfg["grid"], "grid") or [2, 4, 8, 16, 32, 64]
        fit = tail_exponent_fit(obj, [x], grid, trials=cfg["trials"], seed=cfg["seed"])
        rows = [(m, repr(t), repr(float(np.exp(fit.intercept) * m**fit.slope))) for m, t in zip(fit.grid, fit.tails)]
        return fit.to_dict(), {"tail.csv": _csv(["M", "tail", "fitted"], rows)}
    raise ConfigInvalid(f"unknown laws kind {kind!r}")


def cmd_fluct(cfg):
    from .ranges import fluctuation_search

    k_max = cfg["budget_steps"] if cfg["budget_steps"] is not None else 100_000
    try:
        rep, spec = fluctuation_search(cfg["n1"], cfg["n2"], cfg["k1"], cfg["stages"], cfg["slack"],
                                       cfg["trials"], cfg["seed"], k_max=k_max, jobs=cfg["jobs"])
    except BudgetExceeded as exc:
        if exc.partial is not None:
            cfg["_partial"] = (exc.partial.to_dict(), {"stages.csv": exc.partial.to_csv()})
        raise
    return rep.to_dict(), {"stages.csv": rep.to_csv()}


def cmd_ucheck(cfg):
    from .uniformity import recurrence_diagnostic, uc_alpha_fit, uniformity_sweep

    kind = cfg["kind"] or "sweep"
    obj = build_object(cfg)
    if kind == "sweep":
        if isinstance(obj, LayeredTree):
            sample = [start_of(obj, cfg)] if cfg["x"] is not None else None
        else:
            obj, _ = _explicit(obj, cfg, cfg["n_max"] + 1)
            sample = [start_of(obj, cfg) if not isinstance(obj, ImplicitTree) else 0]
        rep = uniformity_sweep(obj, sample, cfg["n_max"])
        return rep.to_dict(), {"sweep.csv": rep.to_csv()}
    if isinstance(obj, ImplicitTree):
        raise ConfigInvalid(f"ucheck {kind} needs an explicit graph family")
    x = start_of(obj, cfg)
    if kind == "recurrence":
        d = recurrence_diagnostic(obj, [x], cfg["n"])
        rows = [(m, repr(v)) for m, v in enumerate(d.infimum)]
        return d.to_dict(), {"recurrence.csv": _csv(["m", "partial_sum_inf"], rows)}
    if kind == "alpha":
        fit = uc_alpha_fit(obj, [x], cfg["k_max"], k_min=min(10, cfg["k_max"] // 4 * 2 or 2))
        rows = [(int(k), repr(v), repr(fit.C * k ** fit.slope)) for k, v in zip(fit.ks, fit.values)]
        return fit.to_dict(), {"alpha.csv": _csv(["k", "sup_p_k", "fitted"], rows)}
    raise ConfigInvalid(f"unknown ucheck kind {kind!r}")


def cmd_oracle(cfg):
    from .oracle import enumerate_range_law

    obj = build_object(cfg)
    if not isinstance(obj, WeightedGraph):
        raise ConfigInvalid("oracle needs an explicit graph")
    x = start_of(obj, cfg) if cfg["x"] is not None else 0
    law = enumerate_range_law(obj, x, cfg["n"])
    rows = [(r, y, str(p)) for (r, y), p in sorted(law.law.items())]
    return law.to_dict(), {"law.csv": _csv(["range", "endpoint", "probability"], rows)}


COMMANDS = {
    "build": cmd_build,
    "resist": cmd_resist,
    "walk": cmd_walk,
    "laws": cmd_laws,
    "fluct": cmd_fluct,
    "ucheck": cmd_ucheck,
    "oracle": cmd_oracle,
}


def _dump(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write(out, report, files, cfg):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(_dump(report))
    for name, text in files.items():
        (out / name).write_text(text)
    with open(out / "run.log", "a") as fh:
        fh.write(f"{_dt.datetime.now().isoformat(timespec='seconds')} rwrange {cfg['command']} "
                 f"{json.dumps({k: v for k, v in cfg.items() if not k.startswith('_')}, sort_keys=True)}\n")


def run(argv=None) -> int:
    """Parse ``argv``, run the command and return the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    cfg: dict = {}
    try:
        cfg = resolve_config(argv)
        print(f"rwrange {cfg['command']}: {json.dumps(cfg, sort_keys=True)}", file=sys.stderr)
        result, files = COMMANDS[cfg["command"]](cfg)
        report = {"command": cfg["command"], "config": _public(cfg), "result": result}
        if cfg["command"] == "build":
            sys.stdout.write(files["graph.edgelist"])
        else:
            sys.stdout.write(_dump(report))
        if cfg["out"]:
            _write(Path(cfg["out"]), report, files, cfg)
        return EXIT_OK
    except BudgetError as exc:
        partial = cfg.get("_partial")
        if partial is not None:
            report = {"command": cfg["command"], "config": _public(cfg), "partial": partial[0]}
            sys.stdout.write(_dump(report))
            if cfg["out"]:
                _write(Path(cfg["out"]), report, partial[1], cfg)
        print(f"rwrange: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValidationError as exc:
        print(f"rwrange: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RwRangeError as exc:
        print(f"rwrange: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


# execution details that must not change a report
_UNREPORTED = {"out", "jobs"}


def _public(cfg) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_") and k not in _UNREPORTED}


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
