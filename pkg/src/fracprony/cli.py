"""Command-line harness: ``fracprony <subcommand> [--config FILE] [flags]``.

Config files are flat ``key = value`` lines (``#`` starts a comment). Keys are
the long flag names with dashes or underscores. Flags on the command line win
over the file; unknown keys are an error. Tables go to CSV and parameter sets
to JSON, both written through a temp file and renamed into place.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

log = logging.getLogger("fracprony")


def fmt(x) -> str:
    """Six significant digits, scientific."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.5e}"


def parse_number(s: str) -> float:
    """Float or fraction (``2/3``)."""
    s = s.strip()
    return float(Fraction(s)) if "/" in s else float(s)


def parse_list(s: str, kind=parse_number) -> list:
    return [kind(v) for v in str(s).split(",") if v.strip()]


def parse_refinements(s: str) -> list[int]:
    """``10..320`` doubles from 10 up to 320; ``a,b,c`` is taken literally."""
    s = str(s)
    if ".." in s:
        lo, hi = (int(v) for v in s.split(".."))
        if lo < 1 or hi < lo:
            raise ValueError(f"bad range {s!r}")
        out = [lo]
        while out[-1] * 2 <= hi:
            out.append(out[-1] * 2)
        return out
    return parse_list(s, int)


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    out: str | None = None
    seed: int = 0
    verbosity: int = 0

    @property
    def hash(self) -> str:
        blob = json.dumps({"sub": self.subcommand, "params": self.params, "seed": self.seed},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def read_config_file(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


# ---------------------------------------------------------------------------
# output helpers

def write_text_atomic(path, text: str) -> None:
    from .optimizer import _atomic_write
    _atomic_write(Path(path), text)


def write_csv(path, cfg: ExperimentConfig, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# fracprony {cfg.subcommand} config_hash={cfg.hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool)
                    else ("" if v is None else v) for v in r])
    if path is None or str(path) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        write_text_atomic(path, buf.getvalue())


def read_csv(path):
    """Parse a file written by :func:`write_csv`: returns (header comment, columns, rows)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing header comment")
    rd = list(csv.reader(lines[1:]))
    return lines[0], rd[0], rd[1:]


# ---------------------------------------------------------------------------
# series sources

def series_source(params: str | None, T_problem: float, scale: float):
    """``(alpha, N) -> PronySeries``.

    ``params`` may be a table file, a single-series JSON, or empty for the
    shipped table. Table values on the alpha grid are re-targeted to the
    requested horizon and scale. Off-grid alpha gets a fresh fit (cached).
    """
    from .optimizer import ParameterTable, default_table, series_for
    from .prony import PronySeries

    if params:
        d = json.loads(Path(params).read_text())
        if "header" in d:
            table = ParameterTable.from_json(json.dumps(d))
        else:
            single = PronySeries.from_dict(d)

            def one(alpha, N):
                if abs(single.alpha - alpha) > 1e-12 or single.n_terms != N:
                    raise ValueError(f"{params} holds alpha={single.alpha}, N={single.n_terms}")
                b0, b, t = single.normalized_params()
                return PronySeries.from_normalized(alpha, b0, b, t, 2 * math.pi / (scale * T_problem), scale)
            return one
    else:
        table = default_table()

    def get(alpha, N):
        if any(abs(alpha - a) < 1e-12 for a in table.alpha_grid) and N in table.n_range:
            a = min(table.alpha_grid, key=lambda g: abs(g - alpha))
            return table.lookup(a, N, T_problem=T_problem, scale=scale)
        if params:
            return table.lookup(alpha, N, T_problem=T_problem, scale=scale)
        return series_for(alpha, N, T_problem=T_problem, scale=scale)
    return get


# ---------------------------------------------------------------------------
# subcommands

def cmd_optimize(cfg: ExperimentConfig) -> int:
    from .optimizer import FitConfig, optimize

    p = cfg.params
    fc = FitConfig(p["alpha"], p["terms"], n_modes=p["modes"], scale=p["scale"],
                   T_problem=p["T"], seed=cfg.seed, restarts=p["restarts"])
    rep = optimize(fc)
    text = json.dumps(rep.series.to_dict(), indent=1)
    if cfg.out:
        write_text_atomic(cfg.out, text)
    else:
        print(text)
    print(f"alpha={fmt(fc.alpha)} N={fc.n_terms} residual_rms={fmt(rep.residual_rms)} "
          f"spectral_error={fmt(rep.spectral_error)} iterations={rep.iterations}", file=sys.stderr)
    return 0


def cmd_table(cfg: ExperimentConfig) -> int:
    from .optimizer import parameter_table

    p = cfg.params
    n = int(round((p["alpha_max"] - p["alpha_min"]) / p["alpha_step"])) + 1
    alphas = [round(p["alpha_min"] + i * p["alpha_step"], 10) for i in range(n)]
    out = cfg.out or "prony_table.json"
    parameter_table(alphas, range(p["terms_min"], p["terms_max"] + 1), p["scale"], p["T"], out)
    print(f"wrote {out}", file=sys.stderr)
    return 0


def cmd_poly(cfg: ExperimentConfig) -> int:
    from .poly import poly_study

    p = cfg.params
    src = series_source(p["params"], p["T"], p["scale"])
    rows = poly_study(parse_list(p["alphas"]), parse_list(p["dts"]), parse_list(p["methods"], str.strip),
                      parse_list(p["terms"], int), p["T"], src, continuous_rows=p["continuous"])
    write_csv(cfg.out, cfg, ["alpha", "method", "terms", "dt", "error", "seconds", "ops"],
              [(r.alpha, r.method, r.terms, r.dt, r.error, r.seconds, r.ops) for r in rows])
    return 0


# full-history L1 runs above this many multiply-adds need --long
LONG_BUDGET = 5e9


def cmd_fde(cfg: ExperimentConfig) -> int:
    from .fde import convergence_study

    p = cfg.params
    nx, nt = str(p["nx"]), str(p["nt"])
    if (".." in nx or "," in nx) == (".." in nt or "," in nt):
        raise SystemExit("exactly one of --nx / --nt must be a refinement list")
    axis = "space" if (".." in nx or "," in nx) else "time"
    refs = parse_refinements(nx if axis == "space" else nt)
    fixed = int(nt if axis == "space" else nx)
    method = p["method"]
    rows = []
    for a in parse_list(p["alpha"]):
        if method == "gao":
            cost = max((r if axis == "time" else fixed) ** 2 / 2 * ((fixed if axis == "time" else r) + 1)
                       for r in refs)
            if cost > LONG_BUDGET and not p["long"]:
                raise SystemExit(f"gao run needs ~{cost:.1e} multiply-adds; pass --long to allow it")
            cases = [(None, None)]
        else:
            src = series_source(p["params"], 1.0, p["scale"])
            cases = [(N, src(a, N)) for N in parse_list(p["terms"], int)]
        for N, s in cases:
            tab = convergence_study(axis, method, a, refs, fixed, series=s, norm=p["norm"])
            for r, e, q in tab.rows():
                nxv, ntv = (fixed, r) if axis == "time" else (r, fixed)
                rows.append((a, method, N, nxv, ntv, e, q))
            log.info("alpha=%s N=%s done", a, N)
    write_csv(cfg.out, cfg, ["alpha", "method", "terms", "nx", "nt", "error", "rate"], rows)
    return 0


def cmd_liver(cfg: ExperimentConfig) -> int:
    from .core import UniformGrid
    from .liver import LiverModel, reference_point, stress_history, torque_and_normal

    p = cfg.params
    model = LiverModel(alpha=p["alpha"])
    grid = UniformGrid.over(model.T, p["dt"])
    s = None
    if p["engine"] == "prony":
        s = series_source(p["params"], model.T, p["scale"])(model.alpha, p["terms"])
    h = stress_history(reference_point(model), model, p["engine"], grid, s)
    t, tq, tn = torque_and_normal(model, p["engine"], grid, s, n_quad=p["n_quad"])
    sig = h.sigma[:, 0]
    write_csv(cfg.out, cfg, ["t", "sigma13", "sigma23", "torque", "normal_force"],
              zip(t, sig[:, 0, 2], sig[:, 1, 2], tq, tn))
    return 0


def cmd_stability(cfg: ExperimentConfig) -> int:
    from .optimizer import default_table
    from .stability import check_lemma3, random_trial, run_linear, write_ledger_csv

    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    table = default_table()
    rows = []
    bad = 0
    worst = math.inf
    for trial in range(p["trials"] + p["stiff_probes"]):
        stiff = trial >= p["trials"]
        prm, u0, v0 = random_trial(rng, table.lookup, n_x=p["nx"], steps=p["steps"],
                                   dt=p["stiff_dt"] if stiff else None)
        led = run_linear(prm, u0, v0)
        rep = check_lemma3(led)
        bad += rep.violations
        worst = min(worst, rep.worst_margin)
        for k, (l, r, ok) in enumerate(zip(led.lhs, led.rhs, rep.holds)):
            rows.append((trial, k, l, r, r - l, not ok))
    if cfg.out:
        write_ledger_csv(cfg.out, rows, f"fracprony stability config_hash={cfg.hash}")
    print(f"trials={p['trials']} stiff_probes={p['stiff_probes']} violations={bad} "
          f"worst_margin={fmt(worst)} config_hash={cfg.hash}")
    return 1 if bad else 0


def cmd_bench(cfg: ExperimentConfig) -> int:
    p = cfg.params
    mode = p["mode"]
    if mode == "poly-timing":
        from .poly import timing_table

        src = series_source(p["params"], 0.9, p["scale"])
        rows = timing_table(p["alpha"], parse_list(p["dts"]), parse_list(p["terms"], int), src)
        write_csv(cfg.out, cfg, ["dt", "method", "terms", "seconds", "ops", "error"],
                  [(r.dt, r.method, r.terms, r.seconds, r.ops, r.error) for r in rows])
        dmin = min(r.dt for r in rows)
        mp = next(r.seconds for r in rows if r.dt == dmin and r.method == "mp")
        pr = min(r.seconds for r in rows if r.dt == dmin and r.method == "prony")
        ratio = mp / pr
        print(f"mp/prony wall-time ratio at dt={fmt(dmin)}: {fmt(ratio)}", file=sys.stderr)
        return 0 if ratio >= p["min_ratio"] else 1
    if mode == "liver-timing":
        from .liver import LiverModel, timing_matrix

        model = LiverModel()
        src = series_source(p["params"], model.T, p["scale"])
        rows = timing_matrix(model, parse_list(p["engines"], str.strip), parse_list(p["dts"]),
                             parse_list(p["terms"], int), lambda N: src(model.alpha, N))
        write_csv(cfg.out, cfg, ["engine", "terms", "dt", "seconds", "ops"],
                  [(r["engine"], r["terms"], r["dt"], r["seconds"], r["ops"]) for r in rows])
        return 0
    raise SystemExit(f"unknown bench mode {mode!r}")


# ---------------------------------------------------------------------------
# parser

# name -> (type, default, help); type None marks a boolean switch
OPTIONS = {
    "optimize": {
        "alpha": (parse_number, None, "fractional order"),
        "terms": (int, None, "number of Prony modes N"),
        "modes": (int, None, "number of harmonics M (default 100 N)"),
        "scale": (float, 10.0, "time-scale factor s"),
        "T": (float, 1.0, "problem horizon"),
        "restarts": (int, 0, "extra random insertions per stage"),
    },
    "table": {
        "alpha_min": (float, 0.05, ""), "alpha_max": (float, 0.95, ""), "alpha_step": (float, 0.05, ""),
        "terms_min": (int, 3, ""), "terms_max": (int, 12, ""),
        "scale": (float, 10.0, ""), "T": (float, 1.0, ""),
    },
    "poly": {
        "alphas": (str, "0.1,0.4,0.8", "comma list"),
        "dts": (str, "1e-1,1e-2,1e-3,1e-4", "comma list"),
        "methods": (str, "mp,mp-lagged,gl,prony", "subset of mp, mp-lagged, gl, prony"),
        "terms": (str, "3,6,9,12", "Prony sizes"),
        "T": (float, 0.9, "horizon"),
        "scale": (float, 10.0, "fit time-scale factor"),
        "params": (str, "", "table or series JSON (default: shipped table)"),
        "continuous": (_bool, True, "add dt=0 rows (undiscretized Prony error)"),
    },
    "fde": {
        "alpha": (str, "0.5", "comma list, fractions allowed"),
        "nx": (str, "20000", "elements, or a range like 10..160"),
        "nt": (str, "10..320", "time steps, or a range"),
        "method": (str, "prony", "prony or gao"),
        "terms": (str, "3,6,9,12", "Prony sizes"),
        "params": (str, "", "table or series JSON"),
        "scale": (float, 100.0, "fit time-scale factor"),
        "norm": (str, "max", "max (nodal) or l2 (spatial L2); both maxed over time"),
        "long": (None, False, "allow minutes-scale full-history runs"),
    },
    "liver": {
        "dt": (float, 1e-3, ""), "terms": (int, 9, ""), "engine": (str, "prony", "prony, gl, gl-fft, mp"),
        "params": (str, "", ""), "scale": (float, 10.0, ""), "alpha": (float, 0.2, ""),
        "n_quad": (int, 16, "Gauss points in radius"),
    },
    "stability": {
        "trials": (int, 100, ""), "stiff_probes": (int, 10, "extra trials at dt = stiff_dt"),
        "stiff_dt": (float, 10.0, ""), "nx": (int, 16, ""), "steps": (int, 40, ""),
    },
    "bench": {
        "mode": (str, "poly-timing", "poly-timing or liver-timing"),
        "alpha": (float, 0.4, ""), "dts": (str, "1e-4,5e-5,1e-5", ""), "terms": (str, "3,6,9,12", ""),
        "engines": (str, "prony,gl", "liver-timing engines"),
        "params": (str, "", ""), "scale": (float, 10.0, ""),
        "min_ratio": (float, 50.0, "poly-timing pass threshold"),
    },
}

COMMANDS = {"optimize": cmd_optimize, "table": cmd_table, "poly": cmd_poly, "fde": cmd_fde,
            "liver": cmd_liver, "stability": cmd_stability, "bench": cmd_bench}
DEFAULT_SEED = {"stability": 42}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracprony", description="Prony-series fractional derivative studies")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name, opts in OPTIONS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value file")
        sp.add_argument("--out", default=argparse.SUPPRESS)
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        sp.add_argument("-v", "--verbose", action="count", default=0)
        for key, (typ, _, hlp) in opts.items():
            flag = "--" + key.replace("_", "-")
            if typ is None:
                sp.add_argument(flag, dest=key, action="store_true", default=argparse.SUPPRESS, help=hlp)
            else:
                sp.add_argument(flag, dest=key, type=typ, default=argparse.SUPPRESS, help=hlp)
    return ap


def resolve(argv=None) -> ExperimentConfig:
    ns = vars(build_parser().parse_args(argv))
    name = ns.pop("subcommand")
    opts = OPTIONS[name]
    params = {k: d for k, (_, d, _) in opts.items()}
    extra = {"out": None, "seed": DEFAULT_SEED.get(name, 0)}
    if ns.get("config"):
        for k, v in read_config_file(ns["config"]).items():
            if k in extra:
                extra[k] = int(v) if k == "seed" else v
            elif k in opts:
                typ = opts[k][0] or _bool
                params[k] = typ(v)
            else:
                raise SystemExit(f"unknown config key {k!r} for {name}")
    for k, v in ns.items():
        if k in opts:
            params[k] = v
        elif k in extra:
            extra[k] = v
    missing = [k for k, v in params.items() if v is None and k in ("alpha", "terms")]
    if missing:
        raise SystemExit(f"missing required option(s): {', '.join('--' + m for m in missing)}")
    return ExperimentConfig(name, params, extra["out"], extra["seed"], ns.get("verbose", 0))


def main(argv=None) -> int:
    cfg = resolve(argv)
    logging.basicConfig(level=logging.INFO if cfg.verbosity else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return COMMANDS[cfg.subcommand](cfg)


if __name__ == "__main__":
    sys.exit(main())
