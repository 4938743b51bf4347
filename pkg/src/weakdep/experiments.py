"""Config-driven experiment pipelines over the coupling and bounds machinery.

Every pipeline is a pure function of (config, seed): replicates fan out over
counter-based substreams, statistics are reduced in replicate order, and rate
checks are slope regressions against declared targets with declared
tolerances.  Logarithmic factors in the predicted rates are nearly collinear
with the power term at desk scale, so they are folded into the tolerances
rather than fitted (a ``fit_log_correction`` switch exists for diagnosis).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import degenerate_moment_check, path_statistics, series_convergence_check
from .coefficients import sigma2_exact
from .coupling import CouplingSchedule, coupling_errors, make_schedule, _couple_path
from .processes import (FiniteChain, LsvProcess, process_from_config,
                        process_to_config, sample_chain_paths, sample_lsv_ensemble)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run."""

    process: object
    n_list: tuple
    replicates: int = 64
    seed: int = 0
    variant: str = "balanced"
    p: float = 4.0
    epsilon: float = 0.5
    c_fit: float = 1.0
    threads: int = 1
    tolerance: float = 0.08
    fit_log_correction: bool = False
    debug_identity_coupling: bool = False
    surrogate: object | None = None
    alpha: float = 0.75
    series_p: float = 4.0
    series_epsilon: float = 1.0
    moment_q: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not self.n_list:
            raise ValueError("n_list must be nonempty")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be strictly increasing")

    def require_dyadic(self):
        if not all(_is_power_of_two(n) and n >= 8 for n in self.n_list):
            raise ValueError("n_list entries must be powers of two, >= 8")

    def require_rate_replicates(self):
        if self.replicates < 16:
            raise ValueError("rate experiments need at least 16 replicates")

    def to_dict(self) -> dict:
        doc = {
            "process": process_to_config(self.process),
            "n_list": list(self.n_list),
            "replicates": self.replicates,
            "seed": self.seed,
            "variant": self.variant,
            "p": self.p,
            "epsilon": self.epsilon,
            "c_fit": self.c_fit,
            "tolerance": self.tolerance,
            "fit_log_correction": self.fit_log_correction,
            "debug_identity_coupling": self.debug_identity_coupling,
            "alpha": self.alpha,
            "series_p": self.series_p,
            "series_epsilon": self.series_epsilon,
            "moment_q": self.moment_q,
        }
        if self.surrogate is not None:
            doc["surrogate"] = process_to_config(self.surrogate)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in doc.items() if k in known}
        kw["process"] = process_from_config(doc["process"])
        if "surrogate" in doc and doc["surrogate"] is not None:
            kw["surrogate"] = process_from_config(doc["surrogate"])
        kw["n_list"] = tuple(int(n) for n in doc["n_list"])
        return cls(**kw)


@dataclass(frozen=True)
class RateEstimate:
    """Fitted log-log slope against a declared target exponent."""

    exponent: float
    exponent_se: float
    target: float
    tolerance: float
    passed: bool | None
    log_correction: float | None = None
    degenerate: bool = False
    rows: tuple = ()

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "exponent_se": self.exponent_se,
                "target": self.target, "tolerance": self.tolerance,
                "passed": self.passed, "log_correction": self.log_correction,
                "degenerate": self.degenerate}


def fit_power_law(ns, values, with_log_factor: bool = False):
    """OLS fit of log2(values) on log2(n) (optionally plus log2 log n).

    Returns (slope, slope_se, intercept, log_coefficient).  Noiseless power
    law input recovers the exponent to float precision.
    """
    ns = np.asarray(ns, dtype=float)
    y = np.log2(np.asarray(values, dtype=float))
    cols = [np.ones_like(ns), np.log2(ns)]
    if with_log_factor:
        cols.append(np.log2(np.log(ns)))
    design = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    dof = len(ns) - design.shape[1]
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(design.T @ design)
        se = math.sqrt(max(cov[1, 1], 0.0))
    else:
        se = math.inf
    logc = float(beta[2]) if with_log_factor else None
    return float(beta[1]), se, float(beta[0]), logc


def _schedule_for(n: int, config: ExperimentConfig) -> CouplingSchedule:
    big_n = int(math.log2(n)) - 1
    return make_schedule(big_n, config.p, config.variant,
                         epsilon=config.epsilon, c_fit=config.c_fit)


def coupling_sup_errors(chain: FiniteChain, config: ExperimentConfig, n: int,
                        p_override: float | None = None) -> np.ndarray:
    """sup_k |S_k - T_k| per replicate for one n."""
    cfg = config if p_override is None else replace(config, p=p_override)
    schedule = _schedule_for(n, cfg)
    sigma2 = sigma2_exact(chain)
    states, vals = sample_chain_paths(chain, n, cfg.seed, range(cfg.replicates))

    def one(rep: int) -> float:
        if cfg.debug_identity_coupling:
            return 0.0
        path = _couple_path(chain, schedule, sigma2, states[rep], vals[rep],
                            cfg.seed, rep)
        return coupling_errors(path).sup_error

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            errs = list(pool.map(one, range(cfg.replicates)))
    else:
        errs = [one(rep) for rep in range(cfg.replicates)]
    return np.asarray(errs)


def _l2_with_variance(errs: np.ndarray) -> tuple[float, float]:
    """Root mean square of the replicate statistics, plus the Monte Carlo
    variance of its base-2 log (delta method)."""
    sq = errs ** 2
    mean_sq = float(np.mean(sq))
    if mean_sq <= 0.0:
        return 0.0, math.inf
    var_mean = float(np.var(sq, ddof=1)) / len(sq)
    d = 1.0 / (2.0 * math.log(2.0) * mean_sq)
    return math.sqrt(mean_sq), var_mean * d * d


def _rate_estimate(ns, rms, target, tolerance, with_log, extra_rows=None,
                   y_vars=None) -> RateEstimate:
    rows = []
    for i, n in enumerate(ns):
        row = {"n": int(n), "error_l2": float(rms[i])}
        if extra_rows:
            row.update(extra_rows[i])
        rows.append(row)
    arr = np.asarray(rms, dtype=float)
    if np.any(arr <= 0.0) or float(np.max(arr)) < 1e-9:
        return RateEstimate(exponent=0.0, exponent_se=math.inf, target=target,
                            tolerance=tolerance, passed=None, degenerate=True,
                            rows=tuple(rows))
    slope, se, _, logc = fit_power_law(ns, rms, with_log_factor=with_log)
    if y_vars is not None:
        # Monte Carlo error of the slope: propagate per-point log variances
        # through the least-squares weights (replicate noise only; the
        # systematic log-factor curvature is folded into the tolerance).
        cols = [np.ones(len(ns)), np.log2(np.asarray(ns, dtype=float))]
        if with_log:
            cols.append(np.log2(np.log(np.asarray(ns, dtype=float))))
        design = np.column_stack(cols)
        weights = np.linalg.inv(design.T @ design) @ design.T
        se = math.sqrt(float(weights[1] ** 2 @ np.asarray(y_vars)))
    passed = abs(slope - target) <= tolerance
    return RateEstimate(exponent=slope, exponent_se=se, target=target,
                        tolerance=tolerance, passed=passed, log_correction=logc,
                        rows=tuple(rows))


def run_rate_experiment(config: ExperimentConfig) -> RateEstimate:
    """L2 coupling-error growth exponent against the 1/p target.

    For each n the L2 norm of sup_k |S_k - T_k| is the root mean square over
    replicates; the fitted log-log slope is compared with 1/p at the
    configured tolerance.  An identity coupling (debug mode) yields a
    degenerate estimate with ``passed = None``.
    """
    chain = config.process
    if not isinstance(chain, FiniteChain):
        raise ValueError("rate experiments require an exact lattice chain")
    config.require_dyadic()
    config.require_rate_replicates()
    if sigma2_exact(chain) <= 1e-9:
        raise ValueError("degenerate process: use the degenerate pipeline")
    rms, y_vars = [], []
    for n in config.n_list:
        errs = coupling_sup_errors(chain, config, n)
        level, var_y = _l2_with_variance(errs)
        rms.append(level)
        y_vars.append(var_y)
    return _rate_estimate(config.n_list, rms, target=1.0 / config.p,
                          tolerance=config.tolerance,
                          with_log=config.fit_log_correction, y_vars=y_vars)


@dataclass(frozen=True)
class LsvReport:
    """Direct orbit statistics plus, when configured, the surrogate coupled rate."""

    gamma: float
    target: float
    direct_exponent: float
    direct_se: float
    direct_rows: tuple
    surrogate: RateEstimate | None


def run_lsv_experiment(config: ExperimentConfig) -> LsvReport:
    """Intermittent-map rate experiment.

    Orbits admit no exact conditional block law, so the direct measurement is
    the growth exponent of ||S_n^*||_2 (a fluctuation proxy); when a
    finite-chain surrogate is configured, its coupled rate is measured under
    a schedule with p = min(4, 1/gamma) and compared with the
    max(gamma, 1/4) target.
    """
    process = config.process
    if not isinstance(process, LsvProcess):
        raise ValueError("run_lsv_experiment requires an intermittent-map process")
    if not 0.0 < process.gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2) for rate experiments")
    config.require_rate_replicates()
    gamma = process.gamma
    target = max(gamma, 0.25)

    sup_l2 = []
    rows = []
    for n in config.n_list:
        vals = sample_lsv_ensemble(process, n, config.seed, range(config.replicates))
        sums = np.cumsum(vals, axis=1)
        smax = np.max(np.abs(sums), axis=1)
        level = math.sqrt(float(np.mean(smax ** 2)))
        sup_l2.append(level)
        rows.append({"n": int(n), "sup_l2": level})
    direct_slope, direct_se, _, _ = fit_power_law(config.n_list, sup_l2)

    surrogate_estimate = None
    if config.surrogate is not None:
        p_eff = min(4.0, 1.0 / gamma)
        rms, y_vars = [], []
        for n in config.n_list:
            errs = coupling_sup_errors(config.surrogate, config, n, p_override=p_eff)
            level, var_y = _l2_with_variance(errs)
            rms.append(level)
            y_vars.append(var_y)
        surrogate_estimate = _rate_estimate(
            config.n_list, rms, target=target, tolerance=config.tolerance,
            with_log=config.fit_log_correction, y_vars=y_vars)
    return LsvReport(gamma=gamma, target=target, direct_exponent=direct_slope,
                     direct_se=direct_se, direct_rows=tuple(rows),
                     surrogate=surrogate_estimate)


@dataclass(frozen=True)
class WassersteinReport:
    estimate: RateEstimate
    reference_exponent: float = -1.0 / 6.0


def donsker_sup_distance(sup_error: float, n: int) -> float:
    """Uniform distance between the rescaled partial-sum line and the
    piecewise-linear Gaussian partner built from the same increments.

    Both are linear between breakpoints k/n, so the sup over t equals the sup
    over breakpoints: n^{-1/2} sup_k |S_k - T_k| exactly.
    """
    return sup_error / math.sqrt(n)


def donsker_wasserstein(config: ExperimentConfig) -> WassersteinReport:
    """Decay of the quadratic-cost upper bound ||sup_t |B_n - sigma B|||_2.

    Target exponent -1/4; a reference n^{-1/6} line (the Skorohod-embedding
    rate at fourth moments, reported for visual comparison only) is anchored
    at the smallest n.
    """
    chain = config.process
    if not isinstance(chain, FiniteChain):
        raise ValueError("donsker experiments require an exact lattice chain")
    config.require_dyadic()
    config.require_rate_replicates()
    if sigma2_exact(chain) <= 1e-9:
        raise ValueError("degenerate process: use the degenerate pipeline")
    rms, y_vars = [], []
    for n in config.n_list:
        errs = coupling_sup_errors(chain, config, n)
        scaled = np.array([donsker_sup_distance(e, n) for e in errs])
        level, var_y = _l2_with_variance(scaled)
        rms.append(level)
        y_vars.append(var_y)
    anchor_c = rms[0] / config.n_list[0] ** (-1.0 / 6.0)
    extra = [{"reference_n16": anchor_c * n ** (-1.0 / 6.0)} for n in config.n_list]
    tol = max(config.tolerance, 0.10)
    estimate = _rate_estimate(config.n_list, rms, target=-0.25, tolerance=tol,
                              with_log=config.fit_log_correction,
                              extra_rows=extra, y_vars=y_vars)
    return WassersteinReport(estimate=estimate)


@dataclass(frozen=True)
class DegenerateReport:
    sigma2: float
    moment: dict
    series: dict
    sup_growth: RateEstimate
    zero_beyond: int | None
    passed: bool


def run_degenerate_suite(config: ExperimentConfig) -> DegenerateReport:
    """Moment-bound, flat-growth and series checks for telescoping observables.

    Requires a verified sigma2 = 0 process; aggregates the moment bound check
    (E|S_n|^q below the analytic bound at every n), the ||S_n^*||_2 growth
    exponent (target 0, pathwise-bounded sums), and the degenerate series
    summands, which must vanish once eps n^alpha exceeds the pathwise bound.
    """
    chain = config.process
    if not isinstance(chain, FiniteChain):
        raise ValueError("the degenerate suite requires an exact lattice chain")
    moment = degenerate_moment_check(chain, config.moment_q, config.n_list,
                                     config.replicates, config.seed,
                                     threads=config.threads)
    series = series_convergence_check(chain, config.alpha, config.series_p,
                                      config.series_epsilon, config.n_list,
                                      config.replicates, config.seed,
                                      statistic="absmax", threads=config.threads)
    ns = [row["n"] for row in moment["rows"]]
    sups = [row["sup_norm_r"] for row in moment["rows"]]
    sup_growth = _rate_estimate(ns, sups, target=0.0, tolerance=0.05,
                                with_log=False)

    # Telescoping constructions carry their pathwise bound on max_k |S_k|;
    # series summands must be exactly zero once eps n^alpha exceeds it.
    path_bound = chain.sup_path_bound
    zero_beyond = None
    ok_zero = True
    if path_bound is not None:
        for row in series["rows"]:
            if row["x"] > path_bound:
                if zero_beyond is None:
                    zero_beyond = row["n"]
                ok_zero = ok_zero and row["p_hat"] == 0.0
    passed = (all(r["below_bound"] for r in moment["rows"])
              and sup_growth.passed is True and ok_zero)
    return DegenerateReport(sigma2=moment["sigma2"], moment=moment, series=series,
                            sup_growth=sup_growth, zero_beyond=zero_beyond,
                            passed=passed)
