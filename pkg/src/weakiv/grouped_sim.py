"""Monte Carlo engine for grouped-data IV designs.

Instruments are mutually exclusive group indicators, so every statistic in the
pipeline reduces to per-group sums: 2SLS and GMMf are weighted averages of the
per-group Wald ratios, the F-statistics are (weighted) means of per-group
F-statistics, and the moment-covariance blocks are diagonal. Replication r
draws from an independent counter-based substream (seed, r), which makes
results invariant to the worker count.
"""

from __future__ import annotations

import dataclasses
import math
import os
import warnings as _pywarnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from types import SimpleNamespace

import numpy as np
import yaml

from .data import Dataset
from .distributions import NoncentralChiSq, RngStream, chisq_quantile
from .errors import InputError, NumericalError, WeakIvError
from .estimators import ResidualCov
from .weak_test import Benchmark, TransformedMomentCov, critical_value, worst_case_bias

__all__ = [
    "DesignComparison",
    "GroupStats",
    "GroupedDesign",
    "RepStats",
    "SimSummary",
    "available_designs",
    "generate",
    "group_stats",
    "load_design",
    "random_design_comparison",
    "run_sim",
    "sweep_scale",
]

_MAX_REDRAWS = 10


def _as_float_vector(value, g, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(g, float(arr))
    if arr.ndim != 1 or arr.size != g:
        raise InputError(f"{name} must be a scalar or a length-{g} sequence")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class GroupedDesign:
    """Grouped IV data-generating process.

    The first-stage coefficients are scale_e * pi0. var_v2 gives the per-group
    first-stage error variances. Designs with var_u and cov_uv2 are structural
    (y is generated); without them only first-stage quantities can be
    simulated. group_probs defaults to equal shares; sizes is "multinomial"
    (random group sizes) or "fixed" (largest-remainder apportionment).
    """

    pi0: np.ndarray
    var_v2: np.ndarray
    scale_e: float = 1.0
    beta: float = 0.0
    n: int = 10000
    var_u: np.ndarray | None = None
    cov_uv2: np.ndarray | None = None
    group_probs: np.ndarray | None = None
    sizes: str = "multinomial"
    name: str = ""

    def __post_init__(self):
        pi0 = np.asarray(self.pi0, dtype=float)
        if pi0.ndim != 1 or pi0.size < 2:
            raise InputError("pi0 must be a 1-d sequence with at least two groups")
        if not np.all(np.isfinite(pi0)):
            raise InputError("pi0 contains non-finite values")
        object.__setattr__(self, "pi0", pi0)
        g = pi0.size
        var_v2 = _as_float_vector(self.var_v2, g, "var_v2")
        if np.any(var_v2 <= 0.0):
            raise InputError("var_v2 entries must be positive")
        object.__setattr__(self, "var_v2", var_v2)
        scale = float(self.scale_e)
        if not math.isfinite(scale) or scale <= 0.0:
            raise InputError(f"scale_e must be a positive number, got {self.scale_e}")
        object.__setattr__(self, "scale_e", scale)
        object.__setattr__(self, "beta", float(self.beta))
        if not math.isfinite(self.beta):
            raise InputError("beta must be finite")
        n = int(self.n)
        if n < g + 2:
            raise InputError(f"n must be at least G + 2 = {g + 2}, got {n}")
        object.__setattr__(self, "n", n)
        if (self.var_u is None) != (self.cov_uv2 is None):
            raise InputError("var_u and cov_uv2 must be given together or not at all")
        if self.var_u is not None:
            var_u = _as_float_vector(self.var_u, g, "var_u")
            cov_uv2 = _as_float_vector(self.cov_uv2, g, "cov_uv2")
            if np.any(var_u <= 0.0):
                raise InputError("var_u entries must be positive")
            det = var_u * var_v2 - cov_uv2 * cov_uv2
            if np.any(det <= 0.0):
                bad = int(np.argmax(det <= 0.0))
                raise InputError(
                    f"group {bad} residual covariance is not positive definite"
                )
            object.__setattr__(self, "var_u", var_u)
            object.__setattr__(self, "cov_uv2", cov_uv2)
        if self.group_probs is None:
            probs = np.full(g, 1.0 / g)
        else:
            probs = _as_float_vector(self.group_probs, g, "group_probs")
            if np.any(probs <= 0.0):
                raise InputError("group_probs entries must be positive")
            total = probs.sum()
            if abs(total - 1.0) > 1e-8:
                raise InputError(f"group_probs must sum to 1, got {total}")
            probs = probs / total
        object.__setattr__(self, "group_probs", probs)
        if self.sizes not in ("multinomial", "fixed"):
            raise InputError(
                f"sizes must be 'multinomial' or 'fixed', got {self.sizes!r}"
            )
        object.__setattr__(self, "name", str(self.name))

    @property
    def G(self):
        return self.pi0.size

    @property
    def pi(self):
        return self.scale_e * self.pi0

    @property
    def has_structural(self):
        return self.var_u is not None


_DESIGN_KEYS = {
    "name",
    "pi0",
    "var_v2",
    "scale_e",
    "beta",
    "n",
    "var_u",
    "cov_uv2",
    "group_probs",
    "sizes",
}


def _design_dir():
    return resources.files("weakiv").joinpath("designs")


def available_designs():
    """Names of the design files shipped with the package."""
    return sorted(
        entry.name[: -len(".yaml")]
        for entry in _design_dir().iterdir()
        if entry.name.endswith(".yaml")
    )


def load_design(source):
    """Load a design from a YAML file path or a shipped design name."""
    source = os.fspath(source)
    if os.path.exists(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
        default_name = os.path.splitext(os.path.basename(source))[0]
    else:
        entry = _design_dir().joinpath(source + ".yaml")
        if not entry.is_file():
            raise InputError(
                f"unknown design {source!r}: not a file and not one of the shipped "
                f"designs ({', '.join(available_designs())})"
            )
        text = entry.read_text(encoding="utf-8")
        default_name = source
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InputError(f"design file is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError("design file must contain a mapping of design fields")
    unknown = sorted(set(raw) - _DESIGN_KEYS)
    if unknown:
        raise InputError(f"unknown design fields: {', '.join(unknown)}")
    for key in ("pi0", "var_v2"):
        if key not in raw:
            raise InputError(f"design file is missing required field {key!r}")
    raw.setdefault("name", default_name)
    return GroupedDesign(**raw)


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(int(rng), 0).generator()


def _fixed_counts(n, probs):
    base = np.floor(n * probs).astype(int)
    rem = n - int(base.sum())
    frac = n * probs - base
    order = np.argsort(-frac, kind="stable")
    base[order[:rem]] += 1
    if np.any(base == 0):
        raise InputError(
            "fixed apportionment leaves a group empty; increase n or its share"
        )
    return base


def _draw_labels(design, gen):
    g = design.G
    if design.sizes == "fixed":
        return np.repeat(np.arange(g), _fixed_counts(design.n, design.group_probs))
    for attempt in range(_MAX_REDRAWS + 1):
        labels = gen.choice(g, size=design.n, p=design.group_probs)
        if np.bincount(labels, minlength=g).min() > 0:
            return labels
        if attempt < _MAX_REDRAWS:
            _pywarnings.warn(
                f"drew an empty group; redrawing ({attempt + 1}/{_MAX_REDRAWS})",
                stacklevel=2,
            )
    raise NumericalError(
        f"a group stayed empty after {_MAX_REDRAWS} redraws; n is too small for "
        "the smallest group share"
    )


def _draw(design, gen):
    labels = _draw_labels(design, gen)
    pi = design.pi
    if design.has_structural:
        l11 = np.sqrt(design.var_u)
        l21 = design.cov_uv2 / l11
        l22 = np.sqrt(design.var_v2 - l21 * l21)
        eps = gen.standard_normal((design.n, 2))
        u = l11[labels] * eps[:, 0]
        v2 = l21[labels] * eps[:, 0] + l22[labels] * eps[:, 1]
        x = pi[labels] + v2
        y = design.beta * x + u
        return labels, x, y
    v2 = np.sqrt(design.var_v2)[labels] * gen.standard_normal(design.n)
    return labels, pi[labels] + v2, None


def generate(design, rng=0):
    """Draw one dataset from a structural design, with indicator instruments
    and the group labels attached as the cluster variable."""
    if not design.has_structural:
        raise InputError(
            "design has no structural covariances (var_u, cov_uv2); it can only "
            "be used for first-stage summaries via run_sim"
        )
    gen = _as_generator(rng)
    labels, x, y = _draw(design, gen)
    z = np.zeros((design.n, design.G))
    z[np.arange(design.n), labels] = 1.0
    return Dataset(y=y, x=x, z=z, cluster=labels)


def _group_moments(labels, g, x, y=None):
    """Per-group sufficient statistics and the closed-form grouped estimators."""
    counts = np.bincount(labels, minlength=g)
    if counts.min() == 0:
        raise InputError(f"group {int(np.argmin(counts))} has no observations")
    m = SimpleNamespace(counts=counts)
    sx = np.bincount(labels, weights=x, minlength=g)
    sxx = np.bincount(labels, weights=x * x, minlength=g)
    m.mean_x = sx / counts
    m.var_x = sxx / counts - m.mean_x * m.mean_x
    if np.any(m.var_x <= 0.0):
        raise NumericalError(
            "zero within-group variance of the endogenous regressor"
        )
    m.nxb2 = counts * m.mean_x * m.mean_x
    m.f_per_group = m.nxb2 / m.var_x
    m.sum_nxb2 = float(m.nxb2.sum())
    m.f_r = float(m.f_per_group.mean())
    m.f_eff = m.sum_nxb2 / float(m.var_x.sum())
    m.pooled_var_x = float((counts * m.var_x).sum()) / labels.size
    m.f_stat = m.sum_nxb2 / (g * m.pooled_var_x)
    m.weights_2sls = m.nxb2 / m.sum_nxb2
    m.weights_gmmf = m.f_per_group / float(m.f_per_group.sum())
    if y is None:
        return m
    sy = np.bincount(labels, weights=y, minlength=g)
    syy = np.bincount(labels, weights=y * y, minlength=g)
    sxy = np.bincount(labels, weights=x * y, minlength=g)
    m.mean_y = sy / counts
    m.var_y = syy / counts - m.mean_y * m.mean_y
    m.cov_xy = sxy / counts - m.mean_x * m.mean_y
    m.sxx, m.syy, m.sxy = sxx, syy, sxy
    m.beta_ols = float(sxy.sum() / sxx.sum())
    m.beta_2sls = float((counts * m.mean_x * m.mean_y).sum() / m.sum_nxb2)
    m.gmmf_den = float((m.nxb2 / m.var_x).sum())
    m.beta_gmmf = float(
        (counts * m.mean_x * m.mean_y / m.var_x).sum() / m.gmmf_den
    )
    return m


@dataclass(frozen=True, eq=False)
class GroupStats:
    """Per-group summaries plus the grouped closed-form estimators.
    beta_per_group is NaN for a group whose mean of x is exactly zero."""

    counts: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray
    cov_xy: np.ndarray
    f_per_group: np.ndarray
    beta_per_group: np.ndarray
    weights_2sls: np.ndarray
    weights_gmmf: np.ndarray
    f_stat: float
    f_eff: float
    f_r: float
    beta_ols: float
    beta_2sls: float
    beta_gmmf: float


def _labels_from_indicators(z):
    if np.any((z != 0.0) & (z != 1.0)) or np.any(z.sum(axis=1) != 1.0):
        raise InputError(
            "instrument matrix is not a one-hot group indicator; pass labels "
            "explicitly"
        )
    return np.argmax(z, axis=1)


def group_stats(data, labels=None):
    """Grouped summaries for a dataset with indicator instruments."""
    y = np.asarray(data.y, dtype=float)
    x = np.asarray(data.x, dtype=float)
    z = np.asarray(data.z, dtype=float)
    if labels is None:
        labels = _labels_from_indicators(z)
    else:
        labels = np.asarray(labels)
        if labels.shape != (y.size,):
            raise InputError("labels must be one integer per observation")
        labels = labels.astype(int)
        if labels.min() < 0 or labels.max() >= z.shape[1]:
            raise InputError("labels must index the instrument columns")
    m = _group_moments(labels, z.shape[1], x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta_g = np.where(m.mean_x != 0.0, m.mean_y / m.mean_x, np.nan)
    return GroupStats(
        counts=m.counts,
        mean_x=m.mean_x,
        mean_y=m.mean_y,
        var_x=m.var_x,
        var_y=m.var_y,
        cov_xy=m.cov_xy,
        f_per_group=m.f_per_group,
        beta_per_group=beta_g,
        weights_2sls=m.weights_2sls,
        weights_gmmf=m.weights_gmmf,
        f_stat=m.f_stat,
        f_eff=m.f_eff,
        f_r=m.f_r,
        beta_ols=m.beta_ols,
        beta_2sls=m.beta_2sls,
        beta_gmmf=m.beta_gmmf,
    )


@dataclass(frozen=True, eq=False)
class RepStats:
    """One replication's statistics; the structural fields are None for
    first-stage-only designs."""

    f_stat: float
    f_eff: float
    f_r: float
    f_per_group: np.ndarray
    weights_2sls: np.ndarray
    weights_gmmf: np.ndarray
    cv_eff: float | None = None
    cv_r: float | None = None
    reject_eff: bool | None = None
    reject_r: bool | None = None
    beta_ols: float | None = None
    beta_2sls: float | None = None
    beta_gmmf: float | None = None
    wald_2sls: bool | None = None
    wald_gmmf: bool | None = None


def _one_rep(design, seed, rep, tau, alpha, benchmark, method, wald_cv):
    gen = RngStream(seed, rep).generator()
    labels, x, y = _draw(design, gen)
    g = design.G
    m = _group_moments(labels, g, x, y)
    if y is None:
        return RepStats(
            f_stat=m.f_stat,
            f_eff=m.f_eff,
            f_r=m.f_r,
            f_per_group=m.f_per_group,
            weights_2sls=m.weights_2sls,
            weights_gmmf=m.weights_gmmf,
        )
    n = labels.size
    if benchmark == "ls":
        bench = Benchmark(
            "ls",
            ResidualCov(
                float((m.counts * m.var_y).sum()) / n,
                float((m.counts * m.cov_xy).sum()) / n,
                m.pooled_var_x,
            ),
        )
    else:
        bench = Benchmark("mop")
    tc_eff = TransformedMomentCov(
        np.diag(m.var_y), np.diag(m.cov_xy), np.diag(m.var_x)
    )
    cv_eff = critical_value(
        tc_eff.v2v2, worst_case_bias(tc_eff, bench).value / tau, alpha, method
    )
    tc_r = TransformedMomentCov(
        np.diag(m.var_y / m.var_x), np.diag(m.cov_xy / m.var_x), np.eye(g)
    )
    cv_r = critical_value(
        tc_r.v2v2, worst_case_bias(tc_r, bench).value / tau, alpha, method
    )
    su_2sls = m.syy - 2.0 * m.beta_2sls * m.sxy + m.beta_2sls**2 * m.sxx
    var_2sls = float((m.mean_x * m.mean_x * su_2sls).sum()) / m.sum_nxb2**2
    su_gmmf = m.syy - 2.0 * m.beta_gmmf * m.sxy + m.beta_gmmf**2 * m.sxx
    var_gmmf = (
        float(((m.mean_x / m.var_x) ** 2 * su_gmmf).sum()) / m.gmmf_den**2
    )
    return RepStats(
        f_stat=m.f_stat,
        f_eff=m.f_eff,
        f_r=m.f_r,
        f_per_group=m.f_per_group,
        weights_2sls=m.weights_2sls,
        weights_gmmf=m.weights_gmmf,
        cv_eff=cv_eff,
        cv_r=cv_r,
        reject_eff=bool(m.f_eff > cv_eff),
        reject_r=bool(m.f_r > cv_r),
        beta_ols=m.beta_ols,
        beta_2sls=m.beta_2sls,
        beta_gmmf=m.beta_gmmf,
        wald_2sls=bool((m.beta_2sls - design.beta) ** 2 / var_2sls > wald_cv),
        wald_gmmf=bool((m.beta_gmmf - design.beta) ** 2 / var_gmmf > wald_cv),
    )


def _sim_chunk(args):
    design, rep_ids, seed, tau, alpha, benchmark, method, wald_cv = args
    out = []
    for rep in rep_ids:
        try:
            out.append(_one_rep(design, seed, rep, tau, alpha, benchmark, method, wald_cv))
        except WeakIvError:
            out.append(None)
    return out


@dataclass(frozen=True, eq=False)
class SimSummary:
    """Monte Carlo summary: means and (when at least two replications
    succeeded) standard deviations of the per-replication statistics,
    rejection rates, and per-group mean vectors."""

    design_name: str
    reps: int
    failed: int
    seed: int
    tau: float
    alpha: float
    benchmark: str
    method: str
    means: dict
    sds: dict | None
    rejection_rates: dict
    group_means: dict


def _resolve_workers(workers):
    if workers is None:
        env = os.environ.get("WEAKIV_WORKERS", "").strip()
        if not env:
            return 1
        try:
            workers = int(env)
        except ValueError:
            raise InputError(
                f"WEAKIV_WORKERS must be an integer, got {env!r}"
            ) from None
    workers = int(workers)
    if workers < 1:
        raise InputError(f"workers must be at least 1, got {workers}")
    return workers


def run_sim(
    design,
    reps,
    tau=0.1,
    alpha=0.05,
    seed=0,
    benchmark="ls",
    method="patnaik",
    workers=None,
):
    """Simulate a grouped design and summarize the replications.

    For structural designs each replication carries the three F-statistics,
    the weak-instruments critical values and rejections for the effective-F
    (2SLS) and robust-F (GMMf) tests, the three estimators, and robust Wald
    rejections of the true coefficient; first-stage-only designs yield the
    F-statistics and weights only. Failed replications are counted in
    `failed` and excluded from the summaries.
    """
    reps = int(reps)
    if reps < 1:
        raise InputError(f"reps must be at least 1, got {reps}")
    if benchmark not in ("mop", "ls"):
        raise InputError(f"unknown benchmark {benchmark!r}")
    if method not in ("patnaik", "mc"):
        raise InputError(f"unknown critical-value method {method!r}")
    if not 0.0 < tau < 1.0:
        raise InputError(f"tau must be in (0, 1), got {tau}")
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    workers = _resolve_workers(workers)
    seed = int(seed)
    wald_cv = chisq_quantile(NoncentralChiSq(1.0), 1.0 - alpha)
    if workers == 1:
        results = _sim_chunk(
            (design, range(reps), seed, tau, alpha, benchmark, method, wald_cv)
        )
    else:
        chunk = max(1, math.ceil(reps / (4 * workers)))
        jobs = [
            (design, range(lo, min(lo + chunk, reps)), seed, tau, alpha,
             benchmark, method, wald_cv)
            for lo in range(0, reps, chunk)
        ]
        results = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_sim_chunk, jobs):
                results.extend(part)
    ok = [r for r in results if r is not None]
    failed = reps - len(ok)
    if not ok:
        raise NumericalError("every replication failed")
    structural = design.has_structural
    scalar_keys = ["f_stat", "f_eff", "f_r"]
    if structural:
        scalar_keys += ["cv_eff", "cv_r", "beta_ols", "beta_2sls", "beta_gmmf"]
    columns = {k: np.array([getattr(r, k) for r in ok]) for k in scalar_keys}
    means = {k: float(v.mean()) for k, v in columns.items()}
    sds = (
        {k: float(v.std(ddof=1)) for k, v in columns.items()}
        if len(ok) >= 2
        else None
    )
    if structural:
        rejection_rates = {
            "weak_eff": float(np.mean([r.reject_eff for r in ok])),
            "weak_r": float(np.mean([r.reject_r for r in ok])),
            "wald_2sls": float(np.mean([r.wald_2sls for r in ok])),
            "wald_gmmf": float(np.mean([r.wald_gmmf for r in ok])),
        }
    else:
        rejection_rates = {}
    group_means = {
        "f_per_group": np.mean([r.f_per_group for r in ok], axis=0),
        "weights_2sls": np.mean([r.weights_2sls for r in ok], axis=0),
        "weights_gmmf": np.mean([r.weights_gmmf for r in ok], axis=0),
    }
    return SimSummary(
        design_name=design.name,
        reps=reps,
        failed=failed,
        seed=seed,
        tau=tau,
        alpha=alpha,
        benchmark=benchmark,
        method=method,
        means=means,
        sds=sds,
        rejection_rates=rejection_rates,
        group_means=group_means,
    )


def sweep_scale(
    design,
    scales,
    reps,
    tau=0.1,
    alpha=0.05,
    seed=0,
    benchmark="ls",
    method="patnaik",
    workers=None,
):
    """Rerun a structural design over first-stage scales with common random
    numbers; biases of 2SLS and GMMf are reported relative to the OLS bias."""
    if not design.has_structural:
        raise InputError("bias curves need a structural design (var_u, cov_uv2)")
    rows = []
    for scale in scales:
        summ = run_sim(
            dataclasses.replace(design, scale_e=float(scale)),
            reps,
            tau=tau,
            alpha=alpha,
            seed=seed,
            benchmark=benchmark,
            method=method,
            workers=workers,
        )
        bias_ols = summ.means["beta_ols"] - design.beta
        def _rel(key):
            if bias_ols == 0.0:
                return math.nan
            return abs(summ.means[key] - design.beta) / abs(bias_ols)
        rows.append(
            {
                "scale": float(scale),
                "mean_f_eff": summ.means["f_eff"],
                "mean_f_r": summ.means["f_r"],
                "rel_bias_2sls": _rel("beta_2sls"),
                "rel_bias_gmmf": _rel("beta_gmmf"),
                "rf_weak_eff": summ.rejection_rates["weak_eff"],
                "rf_weak_r": summ.rejection_rates["weak_r"],
                "rf_wald_2sls": summ.rejection_rates["wald_2sls"],
                "rf_wald_gmmf": summ.rejection_rates["wald_gmmf"],
            }
        )
    return rows


@dataclass(frozen=True, eq=False)
class DesignComparison:
    """Closed-form bias comparison over random grouped designs."""

    count: int
    attempts: int
    seed: int
    fraction_2sls_worse: float
    nagar_2sls: np.ndarray
    nagar_gmmf: np.ndarray
    coefs: np.ndarray
    var_u: np.ndarray
    var_v2: np.ndarray
    cov_uv2: np.ndarray


def random_design_comparison(
    count=1000, seed=0, g=10, batch=20000, max_attempts=5_000_000
):
    """Sample random grouped designs under concentration and endogeneity
    constraints and compare the closed-form approximate biases of 2SLS and
    GMMf.

    Groups have equal shares. Scaled first-stage coefficients are uniform on
    [-40, 40], variances uniform on (0, 10], within-group correlations uniform
    on (-1, 1). A draw is kept when the overall endogeneity correlation
    exceeds 0.2 in absolute value, the 2SLS concentration is in (5, 10), and
    the GMMf concentration is in (40, 45). Reports the fraction of kept
    designs where 2SLS has the larger absolute approximate bias.
    """
    count = int(count)
    if count < 1:
        raise InputError(f"count must be at least 1, got {count}")
    if g < 2:
        raise InputError(f"g must be at least 2, got {g}")
    gen = RngStream(int(seed), 0).generator()
    share = 1.0 / g
    kept = []
    attempts = 0
    n_kept = 0
    while n_kept < count:
        if attempts >= max_attempts:
            raise NumericalError(
                f"constraint satisfaction drew {attempts} designs without "
                f"reaching {count} accepted; constraints are too tight"
            )
        c = gen.uniform(-40.0, 40.0, (batch, g))
        vu = 10.0 * (1.0 - gen.random((batch, g)))
        v2 = 10.0 * (1.0 - gen.random((batch, g)))
        rho = gen.uniform(-1.0, 1.0, (batch, g))
        suv = rho * np.sqrt(vu * v2)
        cf = c * c * share
        mu2_2sls = cf.sum(axis=1) / v2.sum(axis=1)
        mu2_gmmf = (cf / v2).sum(axis=1) / g
        rho_all = suv.mean(axis=1) / np.sqrt(vu.mean(axis=1) * v2.mean(axis=1))
        keep = (
            (np.abs(rho_all) > 0.2)
            & (mu2_2sls > 5.0)
            & (mu2_2sls < 10.0)
            & (mu2_gmmf > 40.0)
            & (mu2_gmmf < 45.0)
        )
        attempts += batch
        idx = np.flatnonzero(keep)
        if idx.size:
            kept.append((c[idx], vu[idx], v2[idx], suv[idx]))
            n_kept += idx.size
    c = np.concatenate([part[0] for part in kept])[:count]
    vu = np.concatenate([part[1] for part in kept])[:count]
    v2 = np.concatenate([part[2] for part in kept])[:count]
    suv = np.concatenate([part[3] for part in kept])[:count]
    cf = c * c * share
    total = cf.sum(axis=1, keepdims=True)
    r = cf / v2
    rtot = r.sum(axis=1, keepdims=True)
    nagar_2sls = ((1.0 - 2.0 * cf / total) * suv).sum(axis=1) / total[:, 0]
    nagar_gmmf = ((1.0 - 2.0 * r / rtot) * (suv / v2)).sum(axis=1) / rtot[:, 0]
    return DesignComparison(
        count=count,
        attempts=attempts,
        seed=int(seed),
        fraction_2sls_worse=float(
            np.mean(np.abs(nagar_2sls) > np.abs(nagar_gmmf))
        ),
        nagar_2sls=nagar_2sls,
        nagar_gmmf=nagar_gmmf,
        coefs=c,
        var_u=vu,
        var_v2=v2,
        cov_uv2=suv,
    )
