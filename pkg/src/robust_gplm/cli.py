"""Command-line interface: ``gplm fit | cv | test | simulate``.

Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure.
Options may also come from a JSON file given with ``--config``; keys are
the long option names with dashes or underscores (``"grid_step": 0.01``).
Command-line flags take precedence over the file.
"""
import argparse
import csv
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .bandwidth import CvSpec, robust_cv
from .data import Dataset
from .errors import DesignError, DomainError, GplmError
from .families import Binomial, Log, Logit, Poisson, check_pair
from .inference import lambda_test, sandwich, wald_test
from .losses import LOSS_NAMES, make_loss
from .profile import BetaSearchSpec, FitResult, fit_beta
from .simulation import STUDY_STEP, StudySpec, run_monte_carlo
from .smoothing import KernelSpec

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = dict(loss="mod", family="binomial", trials=1, link=None, h=None, kernel="triangular",
                grid_step=None, coarse_step=None, halfwidth=5.0, center=0.0, refine=False,
                seed=None, alpha=0.2, splits=1, jobs=1, reps=None, study=None, contamination=None,
                outliers=0, n=None, restrict=None, null=0.0, method="both", draws=100_000)


class InputError(Exception):
    """Invalid data or options; maps to exit code 2."""


def _fmt(v):
    return format(float(v), ".17g")


# -- data input -----------------------------------------------------------

def read_data(path, family):
    """Read ``y,x1..xp,t`` rows; errors name the offending line."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no observations")
    header = [c.strip() for c in rows[0][1]]
    if len(header) < 3 or header[0] != "y" or header[-1] != "t":
        raise InputError(f"{path}: header must be y,x1,...,xp,t (got {','.join(header)})")
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no observations")
    vals = np.empty((len(body), len(header)))
    for k, (line, r) in enumerate(body):
        if len(r) != len(header):
            raise InputError(f"{path}, line {line}: expected {len(header)} fields, found {len(r)}")
        try:
            vals[k] = [float(c) for c in r]
        except ValueError:
            raise InputError(f"{path}, line {line}: non-numeric field") from None
        if not np.all(np.isfinite(vals[k])):
            raise InputError(f"{path}, line {line}: non-finite value")
    y = vals[:, 0]
    try:
        family.check_support(y)
    except DomainError:
        for k, (line, _) in enumerate(body):
            try:
                family.check_support(y[k:k + 1])
            except DomainError:
                raise InputError(f"{path}, line {line} (row {k + 1}): y={y[k]:g} outside the "
                                 f"support of the response ({family.support_description})") from None
    return Dataset(y, vals[:, 1:-1], vals[:, -1], family)


# -- FitResult CSV ----------------------------------------------------------

def write_fit_csv(fit, path):
    """Long-format CSV ``field,i,j,value`` with full round-trip precision."""
    p = len(fit.beta_hat)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["field", "i", "j", "value"])
        for k in ("loss", "kernel"):
            w.writerow([k, "", "", getattr(fit, k)])
        for k in ("h", "objective", "score_norm"):
            w.writerow([k, "", "", _fmt(getattr(fit, k))])
        for i in range(p):
            w.writerow(["beta_hat", i, "", _fmt(fit.beta_hat[i])])
        if fit.cov_beta is not None:
            for i in range(p):
                w.writerow(["se", i, "", _fmt(math.sqrt(max(fit.cov_beta[i, i], 0.0)))])
            for i in range(p):
                for j in range(p):
                    w.writerow(["cov_beta", i, j, _fmt(fit.cov_beta[i, j])])
        for i, (t, e) in enumerate(zip(fit.t, fit.eta)):
            w.writerow(["t", i, "", _fmt(t)])
            w.writerow(["eta", i, "", _fmt(e)])
        for k in sorted(fit.diagnostics):
            v = fit.diagnostics[k]
            w.writerow([f"diag.{k}", "", "", _fmt(v) if not isinstance(v, bool) else str(v)])


def read_fit_csv(path):
    """Inverse of :func:`write_fit_csv`."""
    vals = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            vals.setdefault(r["field"], []).append(r)

    def vec(name):
        rows = vals.get(name, [])
        out = np.empty(len(rows))
        for r in rows:
            out[int(r["i"])] = float(r["value"])
        return out

    p = len(vals["beta_hat"])
    cov = None
    if "cov_beta" in vals:
        cov = np.empty((p, p))
        for r in vals["cov_beta"]:
            cov[int(r["i"]), int(r["j"])] = float(r["value"])
    diag = {}
    for k, rows in vals.items():
        if k.startswith("diag."):
            v = rows[0]["value"]
            diag[k[5:]] = v == "True" if v in ("True", "False") else float(v)
    one = {k: vals[k][0]["value"] for k in ("loss", "kernel", "h", "objective", "score_norm")}
    return FitResult(beta_hat=vec("beta_hat"), t=vec("t"), eta=vec("eta"),
                     objective=float(one["objective"]), score_norm=float(one["score_norm"]),
                     cov_beta=cov, loss=one["loss"], kernel=one["kernel"], h=float(one["h"]),
                     diagnostics=diag)


def fit_summary(fit, names):
    lines = [f"loss {fit.loss}, kernel {fit.kernel}, h = {fit.h:.3g}",
             f"{'coef':<10}{'estimate':>12}{'se':>12}"]
    se = fit.se
    for i, name in enumerate(names):
        s = f"{se[i]:12.3f}" if se is not None else f"{'-':>12}"
        lines.append(f"{name:<10}{fit.beta_hat[i]:12.3f}{s}")
    lines.append(f"objective {fit.objective:.6g}, score norm {fit.score_norm:.3g}")
    if fit.diagnostics.get("grid_edge"):
        lines.append("warning: beta_hat lies on the edge of the search grid")
    nb = fit.diagnostics.get("local_boundary", 0)
    if nb:
        lines.append(f"warning: {int(nb)} local fit(s) hit the edge of the search bracket")
    return "\n".join(lines)


# -- argument handling --------------------------------------------------------

def _positive(kind):
    def conv(s):
        try:
            v = kind(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
        if not v > 0 or (isinstance(v, float) and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive: {s!r}")
        return v
    return conv


def _loss_name(s):
    if s.lower() not in LOSS_NAMES:
        raise argparse.ArgumentTypeError(f"unknown loss {s!r}; valid names are {', '.join(LOSS_NAMES)}")
    return s.lower()


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values (flags override it)")
    common.add_argument("--loss", type=_loss_name, default=None, help="qal, rql or mod")
    common.add_argument("--family", choices=["binomial", "poisson"], default=None)
    common.add_argument("--trials", type=_positive(int), default=None, help="binomial trials m")
    common.add_argument("--link", choices=["logit", "log"], default=None)
    common.add_argument("--kernel", choices=["triangular", "epanechnikov", "gaussian"], default=None)
    common.add_argument("--grid-step", dest="grid_step", type=_positive(float), default=None)
    common.add_argument("--coarse-step", dest="coarse_step", type=_positive(float), default=None,
                        help="coarse pre-scan spacing (multiple of the grid step)")
    common.add_argument("--halfwidth", type=_positive(float), default=None)
    common.add_argument("--center", type=float, default=None)
    common.add_argument("--refine", action="store_const", const=True, default=None,
                        help="golden-section refinement after the grid")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (fallback: $GPLM_SEED)")
    common.add_argument("--out", default=None, help="output CSV path")

    p = argparse.ArgumentParser(prog="gplm", description="Robust estimation for generalized partially linear models.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit a model to CSV data")
    f.add_argument("input")
    f.add_argument("--h", type=_positive(float), default=None)
    f.add_argument("--cv", action="store_const", const=True, default=None,
                   help="select h by robust cross-validation over --candidates")
    f.add_argument("--candidates", type=_positive(float), nargs="+", default=None)
    f.add_argument("--alpha", type=float, default=None)
    f.add_argument("--splits", type=_positive(int), default=None)

    c = sub.add_parser("cv", parents=[common], help="select the bandwidth by robust cross-validation")
    c.add_argument("input")
    c.add_argument("--h", type=_positive(float), nargs="+", default=None, help="candidate bandwidths")
    c.add_argument("--alpha", type=float, default=None)
    c.add_argument("--splits", type=_positive(int), default=None)

    t = sub.add_parser("test", parents=[common], help="Wald and Lambda tests for a subset of beta")
    t.add_argument("input")
    t.add_argument("--h", type=_positive(float), default=None)
    t.add_argument("--restrict", type=_positive(int), nargs="+", default=None,
                   help="1-based indices of the tested coefficients")
    t.add_argument("--null", type=float, default=None, help="hypothesized value (default 0)")
    t.add_argument("--method", choices=["wald", "lambda", "both"], default=None)
    t.add_argument("--draws", type=_positive(int), default=None)

    s = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    s.add_argument("--study", type=int, choices=[1, 2, 3], default=None)
    s.add_argument("--h", type=_positive(float), nargs="+", default=None)
    s.add_argument("--cv", action="store_const", const=True, default=None,
                   help="choose h per replication by robust cross-validation over --h")
    s.add_argument("--contamination", choices=["none", "C1", "C2", "C3"], default=None)
    s.add_argument("--outliers", type=int, choices=[0, 1, 2, 3], default=None)
    s.add_argument("--reps", type=_positive(int), default=None)
    s.add_argument("--n", type=_positive(int), default=None)
    s.add_argument("--jobs", type=_positive(int), default=None)
    s.add_argument("--raw", default=None, help="also write per-replication records here")
    s.add_argument("--losses", type=_loss_name, nargs="+", default=None,
                   help="estimators to run (default: qal rql mod)")
    return p


def resolve_options(ns):
    """Merge flags over the config file over defaults; validate ranges."""
    opts = dict(DEFAULTS)
    if ns.config:
        try:
            with open(ns.config) as fh:
                cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("config file must hold a JSON object")
        for k, v in cfg.items():
            opts[k.replace("-", "_")] = v
    for k, v in vars(ns).items():
        if v is not None:
            opts[k] = v
    if opts.get("seed") is None:
        env = os.environ.get("GPLM_SEED")
        if env is not None:
            try:
                opts["seed"] = int(env)
            except ValueError:
                raise InputError(f"GPLM_SEED must be an integer, got {env!r}") from None
    if opts.get("seed") is None:
        opts["seed"] = 0
    opts["loss"] = _check_choice("loss", opts["loss"], LOSS_NAMES)
    for k in ("halfwidth",):
        if not float(opts[k]) > 0:
            raise InputError(f"--{k} must be positive")
    if not 0 < float(opts["alpha"]) < 1:
        raise InputError("--alpha must lie in (0, 1)")
    return opts


def _check_choice(name, v, valid):
    v = str(v).lower()
    if v not in valid:
        raise InputError(f"unknown {name} {v!r}; valid values are {', '.join(valid)}")
    return v


def family_of(opts):
    fam = _check_choice("family", opts["family"], ("binomial", "poisson"))
    family = Binomial(int(opts["trials"])) if fam == "binomial" else Poisson()
    if opts.get("link"):
        link = {"logit": Logit(), "log": Log()}[_check_choice("link", opts["link"], ("logit", "log"))]
        try:
            check_pair(family, link)
        except DomainError as exc:
            raise InputError(str(exc)) from None
    return family


def search_of(opts, default_step=0.05):
    step = float(opts["grid_step"] or default_step)
    coarse = opts.get("coarse_step")
    try:
        return BetaSearchSpec(mode="grid_refine" if opts.get("refine") else "grid", step=step,
                              center=float(opts["center"]), halfwidth=float(opts["halfwidth"]),
                              coarse_step=float(coarse) if coarse else None)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _out(opts, default):
    return Path(opts.get("out") or default)


# -- commands -------------------------------------------------------------------

def _h_scalar(opts):
    h = opts.get("h")
    if isinstance(h, (list, tuple)):
        if len(h) != 1:
            raise InputError("give a single --h")
        h = h[0]
    return float(h) if h is not None else 0.2


def cmd_fit(opts):
    family = family_of(opts)
    data = read_data(opts["input"], family)
    loss = make_loss(opts["loss"], family)
    search = search_of(opts)
    cv_note = None
    if opts.get("cv"):
        cands = opts.get("candidates") or [0.1, 0.15, 0.2, 0.25, 0.3]
        res = robust_cv(data, loss, opts["kernel"], _cv_spec(opts, cands), search)
        h = res.h
        cv_note = f"cross-validation selected h = {h:.3g}"
    else:
        h = _h_scalar(opts)
    fit = fit_beta(data, loss, KernelSpec(opts["kernel"], h), search)
    out = _out(opts, "fit.csv")
    write_fit_csv(fit, out)
    if cv_note:
        print(cv_note)
    print(fit_summary(fit, [f"x{j + 1}" for j in range(data.p)]))
    print(f"wrote {out}")
    return EXIT_OK


def _cv_spec(opts, cands):
    try:
        return CvSpec(tuple(float(v) for v in cands), float(opts["alpha"]), int(opts["seed"]),
                      int(opts["splits"]))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_cv(opts):
    family = family_of(opts)
    data = read_data(opts["input"], family)
    loss = make_loss(opts["loss"], family)
    search = search_of(opts)
    cands = opts.get("h") or [0.1, 0.15, 0.2, 0.25, 0.3]
    if not isinstance(cands, (list, tuple)):
        cands = [cands]
    res = robust_cv(data, loss, opts["kernel"], _cv_spec(opts, cands), search)
    out = _out(opts, "cv.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "validation_loss", "selected"])
        for h, v in zip(res.candidate_h, res.losses):
            w.writerow([_fmt(h), _fmt(v), int(h == res.h)])
    fit = fit_beta(data, loss, KernelSpec(opts["kernel"], res.h), search)
    fit_out = out.with_name(out.stem + "_fit" + out.suffix)
    write_fit_csv(fit, fit_out)
    print(f"{'h':>8}{'loss':>14}")
    for h, v in zip(res.candidate_h, res.losses):
        mark = "  <-" if h == res.h else ""
        print(f"{h:8.3g}{v:14.3f}{mark}")
    print(fit_summary(fit, [f"x{j + 1}" for j in range(data.p)]))
    print(f"wrote {out} and {fit_out}")
    return EXIT_OK


def cmd_test(opts):
    family = family_of(opts)
    data = read_data(opts["input"], family)
    loss = make_loss(opts["loss"], family)
    search = search_of(opts)
    kernel = KernelSpec(opts["kernel"], _h_scalar(opts))
    restrict = opts.get("restrict") or list(range(1, data.p + 1))
    idx = [int(i) - 1 for i in restrict]
    if any(i < 0 or i >= data.p for i in idx):
        raise InputError(f"--restrict indices must lie in 1..{data.p}")
    null = float(opts["null"])
    method = _check_choice("method", opts["method"], ("wald", "lambda", "both"))
    full = fit_beta(data, loss, kernel, search)
    results = []
    if method in ("wald", "both"):
        results.append(wald_test(full, full.cov_beta, idx, null))
    if method in ("lambda", "both"):
        centered = BetaSearchSpec(**{**search.__dict__, "center": null})
        results.append(lambda_test(data, loss, kernel, idx, centered, null_value=null,
                                   draws=int(opts["draws"]), seed=int(opts["seed"])))
    out = _out(opts, "test.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "statistic", "p_value", "df", "weights"])
        for r in results:
            wts = "" if r.weights is None else " ".join(_fmt(v) for v in r.weights)
            w.writerow([r.method, _fmt(r.statistic), _fmt(r.p_value), r.df or "", wts])
    print(f"H0: beta[{','.join(str(i) for i in restrict)}] = {null:g}")
    for r in results:
        print(f"{r.method:<8} statistic {r.statistic:.3f}  p-value {r.p_value:.3f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(opts):
    study = opts.get("study")
    if study is None:
        raise InputError("--study is required")
    study = int(study)
    cont = opts.get("contamination")
    outliers = int(opts.get("outliers") or 0)
    if study == 2:
        if cont not in (None, "none"):
            raise InputError("--contamination applies to study 3 only; use --outliers with study 2")
        setting = outliers
    else:
        if outliers:
            raise InputError("--outliers applies to study 2 only")
        if study == 1 and cont not in (None, "none"):
            raise InputError("--contamination applies to study 3 only")
        setting = cont
    try:
        spec = StudySpec(study, opts.get("n"), setting, int(opts["seed"]))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    reps = int(opts.get("reps") or (1 if study == 2 else 100))
    hs = opts.get("h") or [0.1 if study != 1 else 0.2]
    if not isinstance(hs, (list, tuple)):
        hs = [hs]
    hs = [float(v) for v in hs]
    bandwidth = _cv_spec(opts, hs) if opts.get("cv") else hs
    search = search_of(opts, STUDY_STEP[study])
    if search.coarse_step is None:
        search = BetaSearchSpec(**{**search.__dict__, "coarse_step": _coarse_for(search.step)})
    losses = opts.get("losses") or list(LOSS_NAMES)
    res = run_monte_carlo(spec, losses, bandwidth, reps, int(opts.get("jobs") or 1), search)
    out = _out(opts, f"study{study}_summary.csv")
    out.write_text(res.summary_csv())
    if opts.get("raw"):
        Path(opts["raw"]).write_text(res.records_csv())
    print(f"study {study} ({spec.label}), n = {spec.n}, {reps} replication(s), seed {spec.seed}")
    print(res.summary_table())
    if res.failures:
        print(f"{len(res.failures)} failed fit(s) excluded")
    print(f"wrote {out}" + (f" and {opts['raw']}" if opts.get("raw") else ""))
    return EXIT_OK


def _coarse_for(step):
    ratio = max(1, int(round(0.25 / step)))
    return ratio * step


COMMANDS = dict(fit=cmd_fit, cv=cmd_cv, test=cmd_test, simulate=cmd_simulate)


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        opts = resolve_options(ns)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return COMMANDS[ns.command](opts)
    except InputError as exc:
        print(f"gplm: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DesignError, DomainError, ValueError) as exc:
        print(f"gplm: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GplmError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"gplm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
