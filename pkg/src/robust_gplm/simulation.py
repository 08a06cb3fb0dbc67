"""Data generators for the three simulation studies and a Monte Carlo runner.

Every replication draws from its own counter-based stream,
``Philox(SeedSequence(seed, spawn_key=(rep, purpose, attempt)))``, so that
results depend only on ``(seed, rep)`` and never on scheduling.  Normal
variates are produced by the inverse CDF of uniforms.
"""
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .bandwidth import CvSpec, robust_cv
from .data import Dataset
from .errors import GplmError, MonteCarloFailure
from .families import Binomial
from .losses import make_loss
from .profile import BetaSearchSpec, fit_beta
from .smoothing import KernelSpec

BASE, CONTAMINATION = 0, 1
STUDY_N = {1: 100, 2: 100, 3: 200}
STUDY_BETA = {1: 3.0, 2: 2.0, 3: 2.0}
STUDY_STEP = {1: 0.05, 2: 0.01, 3: 0.05}
STUDY2_OUTLIERS = ((10.0, 0.0), (-10.0, 10.0), (-10.0, 10.0))
STUDY3_COV = np.array([[1.0, 1.0 / (6 * math.sqrt(3))], [1.0 / (6 * math.sqrt(3)), 1.0 / 36]])
FAILURE_LIMIT = 0.10


def stream(seed, rep, purpose=BASE, attempt=0):
    """Generator for one replication and purpose."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(rep), int(purpose), int(attempt)))
    return np.random.Generator(np.random.Philox(ss))


def _normal(rng, size):
    u = rng.random(size)
    # random() can return exactly 0; reflect it into the open interval
    u = np.where(u > 0, u, 0.5)
    return special.ndtri(u)


def eta_study1(t):
    return np.exp(2 * t) - 4


def eta_study3(t):
    return 2 * np.sin(4 * np.pi * t)


def gen_study1(n=100, seed=0, rep=0):
    """``x ~ U(-1, 1)``, ``t`` uniform on ``{0.1, ..., 1.0}``, ``y ~ Bi(10, H(3x + exp(2t) - 4))``."""
    rng = stream(seed, rep)
    x = rng.uniform(-1.0, 1.0, n)
    t = np.round((rng.integers(0, 10, n) + 1) / 10.0, 1)
    eta = eta_study1(t)
    y = rng.binomial(10, special.expit(3.0 * x + eta)).astype(float)
    return Dataset(y, x, t, Binomial(10), beta0=3.0, eta0=eta)


def gen_study2(n=100, seed=0, k_outliers=0, rep=0, t_var=1.0 / 6.0):
    """``x ~ N(0, 1)``, ``t ~ N(1/2, t_var)``, ``y ~ Bi(10, H(2x + 0.2))``.

    The first ``k_outliers`` rows get the gross outliers ``(10, 0)``,
    ``(-10, 10)``, ``(-10, 10)`` in ``(x, y)``; their ``t`` is kept.
    """
    if not 0 <= k_outliers <= 3:
        raise ValueError("k_outliers must be 0, 1, 2 or 3")
    if n < k_outliers:
        raise ValueError("n must be at least k_outliers")
    rng = stream(seed, rep)
    x = _normal(rng, n)
    t = 0.5 + math.sqrt(t_var) * _normal(rng, n)
    y = rng.binomial(10, special.expit(2.0 * x + 0.2)).astype(float)
    for i in range(k_outliers):
        x[i], y[i] = STUDY2_OUTLIERS[i]
    return Dataset(y, x, t, Binomial(10), beta0=2.0, eta0=np.full(n, 0.2))


def _study3_design(rng, n):
    """``(x, t)`` bivariate normal, ``t`` truncated to ``[1/4, 3/4]`` by rejection."""
    sd_t = math.sqrt(STUDY3_COV[1, 1])
    corr = STUDY3_COV[0, 1] / sd_t
    xs, ts = [], []
    have = 0
    while have < n:
        m = int(1.2 * (n - have)) + 10
        z1, z2 = _normal(rng, m), _normal(rng, m)
        t = 0.5 + sd_t * (corr * z1 + math.sqrt(1 - corr * corr) * z2)
        keep = (t >= 0.25) & (t <= 0.75)
        xs.append(z1[keep])
        ts.append(t[keep])
        have += int(keep.sum())
    return np.concatenate(xs)[:n], np.concatenate(ts)[:n]


def gen_study3(n=200, seed=0, contamination=None, rep=0, max_attempts=100):
    """Latent-logistic binary responses with ``eta(t) = 2 sin(4 pi t)`` and ``beta = 2``.

    ``contamination`` is ``None``, ``"C1"``, ``"C2"`` or ``"C3"``; it is
    applied with a separate stream to the same base draw.
    """
    cont = _check_contamination(3, contamination)
    for attempt in range(max_attempts):
        rng = stream(seed, rep, BASE, attempt)
        x, t = _study3_design(rng, n)
        eta = eta_study3(t)
        lin = 2.0 * x + eta
        u = rng.random(n)
        eps = special.logit(np.where(u > 0, u, 0.5))
        y = (lin + eps >= 0).astype(float)
        if cont != "C2":
            break
        prob = special.expit(lin)
        if np.sum(prob > 0.99) >= 10:
            break
    else:
        raise GplmError("could not draw ten design points with H > 0.99 for contamination C2")
    info = dict(attempt=attempt)
    if cont is not None:
        crng = stream(seed, rep, CONTAMINATION)
        if cont == "C1":
            hit = crng.random(n) > 0.9
            y[hit] = crng.binomial(1, 0.5, int(hit.sum()))
        elif cont == "C2":
            prob = special.expit(lin)
            order = np.argsort(-prob, kind="stable")[:10]
            hit = np.zeros(n, bool)
            hit[order] = True
            y[order] = crng.binomial(1, 0.5, 10)
        else:
            hit = crng.random(n) > 0.9
            k = int(hit.sum())
            x[hit] = 10.0 + _normal(crng, k)
            y[hit] = crng.binomial(1, 0.05, k)
        info["contaminated"] = hit
    d = Dataset(y, x, t, Binomial(1), beta0=2.0, eta0=eta)
    object.__setattr__(d, "info", info)
    return d


def _check_contamination(study, contamination):
    if contamination in (None, "", "none", "None"):
        return None
    c = str(contamination).upper()
    if study != 3 or c not in ("C1", "C2", "C3"):
        raise ValueError(f"contamination {contamination!r} is only defined for study 3 (C1, C2, C3)")
    return c


@dataclass(frozen=True)
class StudySpec:
    """Which study to simulate and how.

    ``contamination`` is a number of outliers (0 to 3) for study 2 and
    ``None``/``"C1"``/``"C2"``/``"C3"`` for study 3.
    """

    study: int = 1
    n: int = None
    contamination: object = None
    seed: int = 0
    t_var: float = 1.0 / 6.0

    def __post_init__(self):
        if self.study not in (1, 2, 3):
            raise ValueError("study must be 1, 2 or 3")
        if self.n is None:
            object.__setattr__(self, "n", STUDY_N[self.study])
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.study == 2:
            k = 0 if self.contamination in (None, "", "none") else int(self.contamination)
            if not 0 <= k <= 3:
                raise ValueError("study 2 takes 0 to 3 outliers")
            object.__setattr__(self, "contamination", k)
        elif self.study == 3:
            object.__setattr__(self, "contamination", _check_contamination(3, self.contamination))
        elif self.contamination not in (None, "", "none", 0):
            raise ValueError("study 1 has no contamination settings")
        else:
            object.__setattr__(self, "contamination", None)

    @property
    def label(self):
        if self.study == 2:
            return f"outliers={self.contamination}"
        return self.contamination or "none"

    def generate(self, rep=0):
        if self.study == 1:
            return gen_study1(self.n, self.seed, rep)
        if self.study == 2:
            return gen_study2(self.n, self.seed, self.contamination, rep, self.t_var)
        return gen_study3(self.n, self.seed, self.contamination, rep)

    def default_search(self):
        return BetaSearchSpec(step=STUDY_STEP[self.study], coarse_step=0.25)


@dataclass
class McRow:
    """Summary of one estimator (and bandwidth) over replications."""

    estimator: str
    h: object
    reps: int
    failures: int
    mean_beta: float
    bias: float
    sd: float
    mse: float
    mse_eta: float


def metrics(beta_hats, beta0, mse_etas=None, estimator="", h=None, failures=0):
    """Bias, SD (``ddof=1``; ``nan`` for one replication), MSE and mean ``MSE(eta_hat)``."""
    b = np.asarray(beta_hats, dtype=float)
    r = len(b)
    bias = float(np.mean(b) - beta0)
    sd = float(np.std(b, ddof=1)) if r > 1 else float("nan")
    mse = float(np.mean((b - beta0) ** 2))
    me = float(np.mean(mse_etas)) if mse_etas is not None and len(mse_etas) else float("nan")
    return McRow(estimator, h, r, failures, float(np.mean(b)), bias, sd, mse, me)


@dataclass
class McResult:
    """Per-replication records and summary rows of a Monte Carlo run."""

    spec: StudySpec
    records: list
    rows: list
    failures: list = field(default_factory=list)

    def records_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["study", "contamination", "estimator", "h", "rep", "beta_hat", "mse_eta"])
        for r in self.records:
            w.writerow([self.spec.study, self.spec.label, r["estimator"], _fmt(r["h"]), r["rep"],
                        _fmt(r["beta_hat"]), _fmt(r["mse_eta"])])
        return out.getvalue()

    def summary_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["study", "contamination", "estimator", "h", "reps", "failures",
                    "mean_beta", "bias", "sd", "mse", "mse_eta"])
        for r in self.rows:
            w.writerow([self.spec.study, self.spec.label, r.estimator, _fmt(r.h), r.reps, r.failures,
                        _fmt(r.mean_beta), _fmt(r.bias), _fmt(r.sd), _fmt(r.mse), _fmt(r.mse_eta)])
        return out.getvalue()

    def summary_table(self):
        """Rows rounded to three decimals for display."""
        head = f"{'estimator':<10}{'h':>7}{'reps':>6}{'beta':>9}{'bias':>9}{'sd':>9}{'mse':>9}{'mse_eta':>9}"
        lines = [head]
        for r in self.rows:
            h = r.h if isinstance(r.h, str) else f"{r.h:.3g}"
            lines.append(f"{r.estimator:<10}{h:>7}{r.reps:>6}{r.mean_beta:>9.3f}{r.bias:>9.3f}"
                         f"{r.sd:>9.3f}{r.mse:>9.3f}{r.mse_eta:>9.3f}")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _one_rep(args):
    spec, rep, estimators, bandwidths, search, scalar = args
    data = spec.generate(rep)
    out = []
    for slot, name in enumerate(estimators):
        loss = make_loss(name, data.family) if isinstance(name, str) else name
        for h in bandwidths:
            rec = dict(rep=rep, slot=slot, estimator=loss.label, h=h)
            try:
                if isinstance(h, CvSpec):
                    cv = CvSpec(h.candidate_h, h.alpha, h.seed * 1_000_003 + rep, h.splits)
                    chosen = robust_cv(data, loss, "triangular", cv, search, scalar).h
                    rec["h"] = "cv"
                    rec["h_selected"] = chosen
                else:
                    chosen = h
                fit = fit_beta(data, loss, KernelSpec("triangular", chosen), search, scalar,
                               covariance=False, warn=False)
                rec["beta_hat"] = float(fit.beta_hat[0])
                rec["mse_eta"] = float(np.mean((fit.eta - data.eta0) ** 2))
                rec["objective"] = fit.objective
            except (GplmError, FloatingPointError, np.linalg.LinAlgError) as exc:
                rec["error"] = f"{type(exc).__name__}: {exc}"
            out.append(rec)
    return out


def run_monte_carlo(spec, estimators=("qal", "rql", "mod"), h=0.2, reps=100, jobs=1,
                    search=None, scalar=None):
    """Fit every estimator at every bandwidth on ``reps`` replications.

    ``h`` is a bandwidth, a list of bandwidths or a :class:`CvSpec`.
    Replications whose fit fails are excluded and counted; more than 10%
    failures for any estimator raises :class:`MonteCarloFailure`.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    bandwidths = [h] if isinstance(h, (int, float, CvSpec)) else list(h)
    search = search or spec.default_search()
    jobs_args = [(spec, rep, tuple(estimators), bandwidths, search, scalar) for rep in range(reps)]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_one_rep, jobs_args))
    else:
        results = [_one_rep(a) for a in jobs_args]
    records = sorted((r for res in results for r in res), key=lambda r: r["rep"])
    rows, failures = [], []
    for slot, name in enumerate(estimators):
        lab = name.label if not isinstance(name, str) else make_loss(name, Binomial(1)).label
        for hh in bandwidths:
            key = "cv" if isinstance(hh, CvSpec) else hh
            sel = [r for r in records if r["slot"] == slot and r["h"] == key]
            good = [r for r in sel if "error" not in r]
            bad = [r for r in sel if "error" in r]
            failures.extend(bad)
            if len(bad) > FAILURE_LIMIT * len(sel):
                raise MonteCarloFailure(f"{lab} at h={key}: {len(bad)} of {len(sel)} replications failed; "
                                        f"first error: {bad[0]['error']}")
            rows.append(metrics([r["beta_hat"] for r in good], STUDY_BETA[spec.study],
                                [r["mse_eta"] for r in good], lab, key, len(bad)))
    ok = [r for r in records if "error" not in r]
    return McResult(spec, ok, rows, failures)
