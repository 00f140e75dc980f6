"""Synthetic data generation, baseline estimators, and the replicate benchmark.

The data-generating process draws three covariates (one symmetric binary,
two correlated Gaussians), a binary substitution variable whose propensity
depends on the covariates, a treatment that is either randomized or
confounded (``delta1``), a latent survival class from a monotone
multinomial whose covariate dependence is switched by ``delta2``, and
normal outcomes for the arms in which a unit survives. The true
always-survivor effect is exactly 1 under both outcome variants, so bias
is read off directly. ``er_violation=True`` switches to outcome means that
shift with the substitution variable, breaking the exclusion restriction
on purpose.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, StratumLabel
from .errors import DataError, EstimationError
from .identify import solve_two_point_mixture
from .models import PROP_METHODS, estimate_sace, fit_survival_er, fit_survival_sm
from .numerics import expit, fit_ols, rng_stream

# Fixed DGP constants.
_U = np.array([0.5, 0.5, 0.5])
_X23_MEAN = np.array([1.0, -1.0])
_X23_CHOL = np.linalg.cholesky(np.array([[1.0, 0.5], [0.5, 1.0]]))
_NOISE_SD = 0.5


@dataclass(frozen=True)
class SimulationSetting:
    """Configuration of one synthetic scenario.

    ``delta1`` in {0, 1} switches on confounded treatment assignment;
    ``delta2`` in {0, 1} switches on covariate dependence of the survival
    class; ``er_violation`` selects the outcome-mean variant that violates
    the exclusion restriction.
    """

    n: int
    delta1: int = 0
    delta2: int = 0
    er_violation: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if self.delta1 not in (0, 1) or self.delta2 not in (0, 1):
            raise ValueError("delta1 and delta2 must be 0 or 1")


@dataclass
class OracleTable:
    """Latent truth retained beside a simulated dataset, for tests only.

    Kept out of :class:`Dataset` on purpose: estimators must not be able to
    touch the stratum labels or the unobserved potential outcomes. Arrays
    are aligned with the dataset rows; potential outcomes are NaN in arms
    where the unit does not survive.
    """

    stratum: np.ndarray
    s_treated: np.ndarray
    s_control: np.ndarray
    y_treated: np.ndarray
    y_control: np.ndarray

    def save(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stratum", "s_treated", "s_control", "y_treated", "y_control"])
            for i in range(self.stratum.shape[0]):
                writer.writerow(
                    [
                        self.stratum[i],
                        int(self.s_treated[i]),
                        int(self.s_control[i]),
                        "" if np.isnan(self.y_treated[i]) else repr(float(self.y_treated[i])),
                        "" if np.isnan(self.y_control[i]) else repr(float(self.y_control[i])),
                    ]
                )

    @classmethod
    def load(cls, path):
        strata, s1, s0, y1, y0 = [], [], [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:1] != ["stratum"]:
                raise DataError(f"{path}: not an oracle side-file")
            for row in reader:
                strata.append(row[0])
                s1.append(int(row[1]))
                s0.append(int(row[2]))
                y1.append(float(row[3]) if row[3] != "" else np.nan)
                y0.append(float(row[4]) if row[4] != "" else np.nan)
        return cls(
            stratum=np.array(strata),
            s_treated=np.array(s1),
            s_control=np.array(s0),
            y_treated=np.array(y1),
            y_control=np.array(y0),
        )


def gen_dataset(setting, rng=None):
    """Draw one dataset from the configured process.

    Returns ``(Dataset, OracleTable)``. With the default ``rng`` the draw
    is a pure function of ``setting.seed``; the benchmark passes derived
    per-replicate streams instead.
    """
    if rng is None:
        rng = rng_stream(setting.seed)
    n = setting.n
    d1, d2 = float(setting.delta1), float(setting.delta2)

    x1 = rng.integers(0, 2, size=n) * 2.0 - 1.0
    x23 = _X23_MEAN + rng.standard_normal((n, 2)) @ _X23_CHOL.T
    x = np.column_stack([x1, x23])
    xu = x @ _U
    a = (rng.random(n) < expit(xu)).astype(np.int64)
    z = (rng.random(n) < expit(d1 * xu + d1 * a)).astype(np.int64)

    surv_lin = 2.0 + (d2 / 2.0) * (x[:, 0] + x[:, 1] + x[:, 2]) + a
    ratio_lin = (-1.5 * d2) * x[:, 0] + (d2 / 2.0) * (x[:, 1] + x[:, 2]) + a
    p_surv_treated = expit(surv_lin)
    ratio = expit(ratio_lin)
    pr_always = ratio * p_surv_treated
    pr_protected = (1.0 - ratio) * p_surv_treated

    ug = rng.random(n)
    stratum = np.where(
        ug < pr_always,
        StratumLabel.ALWAYS.value,
        np.where(ug < pr_always + pr_protected, StratumLabel.PROTECTED.value, StratumLabel.NEVER.value),
    )
    s_treated = (stratum != StratumLabel.NEVER.value).astype(np.int64)
    s_control = (stratum == StratumLabel.ALWAYS.value).astype(np.int64)

    if setting.er_violation:
        mean_treated_always = 5.0 + xu + a
        mean_treated_protected = 7.0 + xu + a
        mean_control_always = 4.0 + xu + a
    else:
        mean_treated_always = xu
        mean_treated_protected = 1.0 + xu
        mean_control_always = -1.0 + xu

    eps1 = rng.standard_normal(n)
    eps0 = rng.standard_normal(n)
    mean_treated = np.where(
        stratum == StratumLabel.ALWAYS.value, mean_treated_always, mean_treated_protected
    )
    y_treated = np.where(s_treated == 1, mean_treated + _NOISE_SD * eps1, np.nan)
    y_control = np.where(s_control == 1, mean_control_always + _NOISE_SD * eps0, np.nan)

    s = np.where(z == 1, s_treated, s_control)
    y = np.where(s == 1, np.where(z == 1, y_treated, y_control), np.nan)

    data = Dataset.from_arrays(z, x, a, s, y, covariate_names=("x1", "x2", "x3"))
    oracle = OracleTable(
        stratum=stratum,
        s_treated=s_treated,
        s_control=s_control,
        y_treated=y_treated,
        y_control=y_control,
    )
    return data, oracle


def true_sace(setting):
    """Exact always-survivor effect of the process: 1 for every setting.

    Both outcome variants separate the treated and control always-survivor
    means by exactly 1 at every covariate value, so the stratum-weighted
    average is 1 regardless of the delta switches.
    """
    return 1.0


def naive_estimator(data):
    """Survivor-only regression that ignores the truncation problem.

    OLS of the outcome on (1, X, A, Z) among survivors; returns the Z
    coefficient. Biased whenever treatment changes the composition of the
    surviving population.
    """
    mask = data.survivor_mask()
    zs = data.z[mask]
    if not (zs == 1).any() or not (zs == 0).any():
        raise EstimationError("survivors are required in both arms")
    ys = data.outcomes_at(mask)
    design = np.column_stack([np.ones(ys.size), data.x[mask], data.a[mask], zs])
    names = ("intercept", *data.covariate_names, "a", "z")
    if ys.size < design.shape[1]:
        raise EstimationError(
            f"{ys.size} survivors, fewer than the {design.shape[1]} coefficients"
        )
    coef = fit_ols(design, ys, column_names=names)
    return float(coef[-1])


def dgyz_estimator(data):
    """Covariate-free two-point mixture plug-in baseline.

    Requires a binary substitution variable. At each level, the ratio of
    control-arm to treated-arm survival proportions estimates the
    always-survivor share among treated survivors; the two treated-arm
    survivor means then solve the mixture for the treated always-survivor
    mean, and control survivors average to the control one. The ratios are
    used raw (they may exceed 1 in samples), which is the source of this
    baseline's documented instability when the two shares are close.
    """
    z, s, a = data.z, data.s, data.a
    levels = np.unique(a)
    if levels.size != 2:
        raise EstimationError(
            f"the baseline needs a binary substitution variable, found levels {levels.tolist()}"
        )
    shares = []
    means = []
    for level in levels:
        sel1 = (z == 1) & (a == level)
        sel0 = (z == 0) & (a == level)
        if not sel1.any() or not sel0.any():
            raise EstimationError(f"no units in an arm at substitution level {level}")
        p1 = float(np.mean(s[sel1]))
        p0 = float(np.mean(s[sel0]))
        if p1 <= 0.0:
            raise EstimationError(f"no treated survivors at substitution level {level}")
        surv1 = sel1 & (s == 1)
        means.append(float(np.mean(data.outcomes_at(surv1))))
        shares.append(p0 / p1)
    mask0 = (z == 0) & (s == 1)
    if not mask0.any():
        raise EstimationError("no control-arm survivors")
    mu_treated, _ = solve_two_point_mixture(means[0], means[1], shares[0], shares[1])
    mu_control = float(np.mean(data.outcomes_at(mask0)))
    return mu_treated - mu_control


@dataclass
class BenchCell:
    """Benchmark summary for one (setting, size, method) cell."""

    n: int
    delta1: int
    delta2: int
    er_violation: bool
    method: str
    n_ok: int
    n_failed: int
    mean_bias: float
    mc_se: float

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class BenchReport:
    """Mean bias and Monte Carlo standard error over a simulation grid."""

    cells: list
    reps: int
    seed: int
    methods: tuple
    true_value: float = 1.0
    duration_s: float = 0.0
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "reps": self.reps,
            "seed": self.seed,
            "methods": list(self.methods),
            "true_value": self.true_value,
            "duration_s": self.duration_s,
            "warnings": list(self.warnings),
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def cell(self, n, delta1, delta2, er_violation, method):
        for c in self.cells:
            if (
                c.n == n
                and c.delta1 == delta1
                and c.delta2 == delta2
                and c.er_violation == er_violation
                and c.method == method
            ):
                return c
        raise KeyError((n, delta1, delta2, er_violation, method))

    def format_table(self):
        """Text table, one row per (setting, n), one column pair per method.

        Entries are 100 x mean bias with 100 x MC standard error in
        parentheses, the convention used throughout for readability.
        """
        lines = [
            "entries: 100 x bias (100 x MC standard error), "
            f"{self.reps} replicates, true value {self.true_value:g}",
        ]
        header = f"{'d1':>3} {'d2':>3} {'er':>3} {'n':>6}"
        for m in self.methods:
            header += f" {m:>16}"
        lines.append(header)
        seen = []
        for c in self.cells:
            key = (c.delta1, c.delta2, c.er_violation, c.n)
            if key not in seen:
                seen.append(key)
        for d1, d2, er, n in seen:
            row = f"{d1:>3} {d2:>3} {'y' if er else 'n':>3} {n:>6}"
            for m in self.methods:
                c = self.cell(n, d1, d2, er, m)
                if c.n_ok:
                    entry = f"{100 * c.mean_bias:.1f}({100 * c.mc_se:.2f})"
                else:
                    entry = "all-failed"
                if c.n_failed:
                    entry += f"[{c.n_failed}f]"
                row += f" {entry:>16}"
            lines.append(row)
        return "\n".join(lines)


def run_benchmark(settings, sizes, methods, reps, seed=0, rho=None):
    """Replicate benchmark over a grid of scenarios and sample sizes.

    Parameters
    ----------
    settings : sequence
        ``(delta1, delta2, er_violation)`` triples or SimulationSetting
        instances (their n/seed fields are ignored).
    sizes : sequence of int
    methods : sequence of str
        Any of naive, dgyz, prop-er, prop-ni, prop-sm, prop-sm-ni.
    reps : int
    seed : int
        Master seed; replicate r of grid cell c draws from the derived
        stream (seed, c, r), so cells and replicates are independent and
        individually reproducible.
    rho : float, optional
        Sensitivity level for the stochastic methods, if requested.

    Failed replicates (estimation errors, non-finite estimates, stage-one
    non-convergence) are excluded from a cell's average and counted.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    methods = tuple(methods)
    known = ("naive", "dgyz") + PROP_METHODS
    for m in methods:
        if m not in known:
            raise ValueError(f"unknown method {m!r}")
    if any(m in ("prop-sm", "prop-sm-ni") for m in methods) and rho is None:
        raise ValueError("the stochastic methods require rho")

    norm_settings = []
    for s in settings:
        if isinstance(s, SimulationSetting):
            norm_settings.append((s.delta1, s.delta2, s.er_violation))
        else:
            d1, d2, er = s
            norm_settings.append((int(d1), int(d2), bool(er)))

    started = time.monotonic()
    cells = []
    cell_index = 0
    for d1, d2, er in norm_settings:
        for n in sizes:
            setting = SimulationSetting(
                n=n, delta1=d1, delta2=d2, er_violation=er, seed=0
            )
            estimates = {m: [] for m in methods}
            failures = {m: 0 for m in methods}
            for r in range(reps):
                data, _ = gen_dataset(setting, rng=rng_stream(seed, cell_index, r))
                survival_er = None
                survival_sm = None
                for m in methods:
                    try:
                        if m == "naive":
                            value, ok = naive_estimator(data), True
                        elif m == "dgyz":
                            value, ok = dgyz_estimator(data), True
                        elif m in ("prop-er", "prop-ni"):
                            if survival_er is None:
                                survival_er = fit_survival_er(data)
                            est = estimate_sace(data, m, survival=survival_er)
                            value, ok = est.point, est.converged
                        else:
                            if survival_sm is None:
                                survival_sm = fit_survival_sm(data)
                            est = estimate_sace(
                                data, m, rho=rho, survival=survival_sm
                            )
                            value, ok = est.point, est.converged
                    except EstimationError:
                        failures[m] += 1
                        continue
                    if not np.isfinite(value) or not ok:
                        failures[m] += 1
                        continue
                    estimates[m].append(value)
            for m in methods:
                est = np.array(estimates[m])
                n_ok = est.size
                mean_bias = float(np.mean(est) - true_sace(setting)) if n_ok else float("nan")
                mc_se = (
                    float(np.std(est, ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else float("nan")
                )
                cells.append(
                    BenchCell(
                        n=n,
                        delta1=d1,
                        delta2=d2,
                        er_violation=er,
                        method=m,
                        n_ok=n_ok,
                        n_failed=failures[m],
                        mean_bias=mean_bias,
                        mc_se=mc_se,
                    )
                )
            cell_index += 1

    warnings = [
        f"{c.method} at n={c.n} ({c.delta1},{c.delta2},{'er' if c.er_violation else 'std'}): "
        f"{c.n_failed} failed replicates"
        for c in cells
        if c.n_failed
    ]
    return BenchReport(
        cells=cells,
        reps=reps,
        seed=seed,
        methods=methods,
        duration_s=time.monotonic() - started,
        warnings=warnings,
    )
