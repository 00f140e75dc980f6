"""Nonparametric identification of the survivor average causal effect.

The outcome is truncated by death, so the usual average effect is undefined;
the target is the mean effect inside the always-survivor stratum (units that
would survive under either arm). Within each covariate cell, survival
probabilities under the two arms pin down the stratum shares, and survivor
outcome means across the levels of a substitution variable form two-point
mixtures whose components can be solved for. Three routes are implemented,
differing in the assumption that closes the system:

- :func:`sace_monotone_exclusion`: treatment never kills a unit that would
  survive control, and the substitution variable does not shift outcomes
  inside a stratum.
- :func:`sace_stochastic_monotone`: monotonicity holds only in distribution,
  graded by a sensitivity parameter ``rho`` in [0, 1].
- :func:`sace_no_interaction`: protected units may differ from always
  survivors by an additive shift that the treatment does not interact with.

All three consume a :class:`CellTable`, which stores either exact population
cell probabilities or sample frequencies.
"""

from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EstimationError, MonotonicityError, RelevanceError

# Weight separation below this is treated as exactly singular.
SEPARATION_EPS = 1e-8
# In sample mode, separation below this only warns: the solve is performed
# but its output is noise-amplified.
WEAK_THRESHOLD = 0.02


class IdentificationWarning(UserWarning):
    """Non-fatal identification issues: weak separation, dropped cells."""


@dataclass(frozen=True)
class CellStats:
    """Observable summary of one (covariate value, substitution level) cell.

    ``mass`` is pr(X=x, A=a) in population mode and the cell count in sample
    mode. Probabilities and means are None when the cell has no units (or no
    survivors) in the corresponding arm.
    """

    mass: float
    p_surv_treated: float | None = None
    p_surv_control: float | None = None
    mean_treated: float | None = None
    mean_control: float | None = None
    n_treated: int = 0
    n_control: int = 0
    n_surv_treated: int = 0
    n_surv_control: int = 0


class CellTable:
    """Cell-level observables keyed by (covariate tuple, substitution level).

    Parameters
    ----------
    cells : dict
        ``{(x_tuple, a_code): CellStats}``.
    mode : str
        ``"population"`` (masses are probabilities summing to 1, moments are
        exact) or ``"sample"`` (masses are counts, moments are averages).
    covariate_names : sequence of str
    """

    def __init__(self, cells, mode, covariate_names=()):
        if mode not in ("population", "sample"):
            raise ValueError("mode must be 'population' or 'sample'")
        self.mode = mode
        self.covariate_names = tuple(covariate_names)
        self.cells = {}
        for (xkey, a), stats in cells.items():
            key = (tuple(float(v) for v in xkey), int(a))
            if key in self.cells:
                raise DataError(f"duplicate cell {key}")
            self.cells[key] = stats
        if mode == "population":
            total = sum(c.mass for c in self.cells.values())
            if abs(total - 1.0) > 1e-6:
                raise DataError(f"population cell masses sum to {total}, expected 1")

    @property
    def a_levels(self):
        return sorted({a for (_, a) in self.cells})

    def x_groups(self):
        """Cells grouped by covariate value: ``{x_tuple: {a: CellStats}}``."""
        groups = {}
        for (xkey, a), stats in self.cells.items():
            groups.setdefault(xkey, {})[a] = stats
        return groups

    @classmethod
    def from_dataset(cls, data, use_x=True, x_transform=None):
        """Tabulate a dataset into sample-mode cells.

        ``use_x=False`` collapses all covariates into a single group (the
        substitution variable alone defines the cells). ``x_transform``
        optionally maps each covariate row to a hashable key, e.g. a
        quantile-bin assignment for continuous covariates.
        """
        z, s, a, x = data.z, data.s, data.a, data.x
        n = len(data)
        if n == 0:
            raise DataError("cannot tabulate an empty dataset")
        y = np.full(n, np.nan)
        mask = data.survivor_mask()
        y[mask] = data.outcomes_at(mask)

        rows = {}
        for i in range(n):
            if not use_x:
                xkey = ()
            elif x_transform is not None:
                xkey = tuple(x_transform(x[i]))
            else:
                xkey = tuple(x[i])
            rows.setdefault((xkey, int(a[i])), []).append(i)

        cells = {}
        for key in sorted(rows):
            idx = np.array(rows[key])
            stats = {}
            for arm, tag in ((1, "treated"), (0, "control")):
                sel = idx[z[idx] == arm]
                stats[f"n_{tag}"] = len(sel)
                if len(sel):
                    stats[f"p_surv_{tag}"] = float(np.mean(s[sel]))
                else:
                    stats[f"p_surv_{tag}"] = None
                surv = sel[s[sel] == 1]
                stats[f"n_surv_{tag}"] = len(surv)
                stats[f"mean_{tag}"] = float(np.mean(y[surv])) if len(surv) else None
            cells[key] = CellStats(mass=float(len(idx)), **stats)
        names = data.covariate_names if use_x else ()
        return cls(cells, mode="sample", covariate_names=names)

    @classmethod
    def from_json(cls, source):
        """Build a table from a JSON document (text or parsed dict).

        Expected shape::

            {"mode": "population",
             "covariates": ["x1"],
             "cells": [{"x": [1.0], "a": 0, "mass": 0.25,
                        "p_surv_treated": 0.6, "p_surv_control": 0.3,
                        "mean_treated": 1.5, "mean_control": 1.0}, ...]}

        Optional per-cell count fields (``n_treated`` etc.) are accepted in
        sample mode.
        """
        obj = json.loads(source) if isinstance(source, str) else source
        try:
            mode = obj["mode"]
            raw_cells = obj["cells"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"cell table JSON missing field: {exc}") from None
        cells = {}
        for k, c in enumerate(raw_cells):
            try:
                xkey = tuple(float(v) for v in c.get("x", ()))
                a = int(c["a"])
                stats = CellStats(
                    mass=float(c["mass"]),
                    p_surv_treated=_opt_float(c.get("p_surv_treated")),
                    p_surv_control=_opt_float(c.get("p_surv_control")),
                    mean_treated=_opt_float(c.get("mean_treated")),
                    mean_control=_opt_float(c.get("mean_control")),
                    n_treated=int(c.get("n_treated", 0)),
                    n_control=int(c.get("n_control", 0)),
                    n_surv_treated=int(c.get("n_surv_treated", 0)),
                    n_surv_control=int(c.get("n_surv_control", 0)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"cell {k}: {exc}") from None
            cells[(xkey, a)] = stats
        return cls(cells, mode=mode, covariate_names=obj.get("covariates", ()))

    def to_json(self, indent=2):
        cells = []
        for (xkey, a), c in self.cells.items():
            cells.append(
                {
                    "x": list(xkey),
                    "a": a,
                    "mass": c.mass,
                    "p_surv_treated": c.p_surv_treated,
                    "p_surv_control": c.p_surv_control,
                    "mean_treated": c.mean_treated,
                    "mean_control": c.mean_control,
                    "n_treated": c.n_treated,
                    "n_control": c.n_control,
                    "n_surv_treated": c.n_surv_treated,
                    "n_surv_control": c.n_surv_control,
                }
            )
        return json.dumps(
            {
                "mode": self.mode,
                "covariates": list(self.covariate_names),
                "cells": cells,
            },
            indent=indent,
        )


def _opt_float(v):
    return None if v is None else float(v)


def strata_probs_monotone(p_surv_treated, p_surv_control):
    """Stratum shares under deterministic monotonicity.

    With no harmed units, the always-survivor share equals the control-arm
    survival probability. Returns ``(always, protected, never)``.

    Raises
    ------
    MonotonicityError
        If survival is higher under control than under treatment.
    """
    p1, p0 = float(p_surv_treated), float(p_surv_control)
    for p in (p1, p0):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"survival probability {p} outside [0, 1]")
    if p0 > p1:
        raise MonotonicityError(
            f"control survival {p0} exceeds treated survival {p1}"
        )
    return p0, p1 - p0, 1.0 - p1


def strata_probs_stochastic(p_surv_treated, p_surv_control, rho):
    """Stratum shares under stochastic monotonicity of degree ``rho``.

    ``rho = 0`` makes potential survival statuses independent (always share
    is the product of marginals); ``rho = 1`` gives the maximal coupling
    (always share is the smaller marginal, recovering the deterministic
    case when control survival is the smaller one). Returns
    ``(always, protected, harmed, never)``, which is an exact probability
    vector for every ``rho`` in [0, 1].
    """
    p1, p0 = float(p_surv_treated), float(p_surv_control)
    rho = float(rho)
    for p in (p1, p0):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"survival probability {p} outside [0, 1]")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if p0 <= 0.0:
        always = 0.0
    else:
        cond = p1 + rho * (min(1.0, p1 / p0) - p1)
        always = p0 * cond
    protected = max(0.0, p1 - always)
    harmed = max(0.0, p0 - always)
    never = max(0.0, 1.0 - p1 - p0 + always)
    return always, protected, harmed, never


def solve_two_point_mixture(mean_a, mean_b, weight_a, weight_b, eps=SEPARATION_EPS):
    """Solve a two-component mixture observed at two mixing weights.

    Given ``mean = w * mu_first + (1 - w) * mu_second`` at two weights,
    returns ``(mu_first, mu_second)``.

    Raises
    ------
    RelevanceError
        If the two weights differ by less than ``eps``: the system is
        singular and the substitution variable carries no information.
    """
    wa, wb = float(weight_a), float(weight_b)
    det = wa - wb
    if abs(det) < eps:
        raise RelevanceError(
            f"mixing weights {wa} and {wb} do not separate the mixture components"
        )
    ya, yb = float(mean_a), float(mean_b)
    mu_first = ((1.0 - wb) * ya - (1.0 - wa) * yb) / det
    mu_second = (wa * yb - wb * ya) / det
    return mu_first, mu_second


def gmm_overidentified(means, mix_weights, counts, eps=SEPARATION_EPS):
    """Weighted least-squares fit of the two-point mixture across 3+ levels.

    Minimizes ``sum_k counts[k] * (means[k] - w_k mu_first - (1-w_k)
    mu_second)^2``. Returns ``(mu_first, mu_second, j_stat, df)`` where
    ``j_stat`` is the minimized weighted residual sum of squares and
    ``df = K - 2``. Under a correctly specified mixture with cell counts as
    weights, ``j_stat`` is asymptotically chi-square(df), so a large value
    rejects the common-components restriction. With exactly two levels this
    reduces to :func:`solve_two_point_mixture` and ``j_stat = 0, df = 0``.
    """
    ys = np.asarray(means, dtype=float)
    ws = np.asarray(mix_weights, dtype=float)
    cs = np.asarray(counts, dtype=float)
    if ys.shape != ws.shape or ys.shape != cs.shape or ys.ndim != 1:
        raise ValueError("means, mix_weights, counts must be equal-length vectors")
    k = ys.size
    if k < 2:
        raise ValueError("need at least two levels")
    if np.any(cs <= 0):
        raise ValueError("counts must be positive")
    if float(np.ptp(ws)) < eps:
        raise RelevanceError(
            "mixing weights are numerically constant across levels"
        )
    if k == 2:
        mu1, mu2 = solve_two_point_mixture(ys[0], ys[1], ws[0], ws[1], eps=eps)
        return mu1, mu2, 0.0, 0
    design = np.column_stack([ws, 1.0 - ws])
    sw = np.sqrt(cs)
    coef, _, _, _ = np.linalg.lstsq(design * sw[:, None], ys * sw, rcond=None)
    resid = ys - design @ coef
    j_stat = float(np.sum(cs * resid**2))
    return float(coef[0]), float(coef[1]), j_stat, k - 2


def _cell_label(xkey, a=None):
    parts = []
    if xkey:
        parts.append("x=" + ",".join(f"{v:g}" for v in xkey))
    if a is not None:
        parts.append(f"a={a}")
    return "(" + ("; ".join(parts) if parts else "all") + ")"


def _sample_mode(table):
    return table.mode == "sample"


def _warn(msg):
    _warnings.warn(msg, IdentificationWarning, stacklevel=3)


def _solve_mixture_levels(entries, sample, weak_threshold, what, xkey):
    """Common per-group solve: entries = list of (mean, mix_weight, count).

    Returns the first mixture component (the always-survivor mean), or None
    when the group cannot support a solve (with a warning). Handles the
    degenerate pure case where every weight is 1: the survivors then are a
    pure always-survivor sample and their weighted mean is the answer.
    """
    if len(entries) < 2:
        _warn(
            f"{what} at {_cell_label(xkey)}: fewer than two usable levels, "
            "group dropped"
        )
        return None
    ys = np.array([e[0] for e in entries])
    ws = np.array([e[1] for e in entries])
    cs = np.array([e[2] for e in entries])
    spread = float(np.ptp(ws))
    if spread < SEPARATION_EPS:
        if np.all(np.abs(ws - 1.0) < 1e-6):
            return float(np.average(ys, weights=cs))
        raise RelevanceError(
            f"{what} at {_cell_label(xkey)}: mixing weights constant at "
            f"{ws[0]:.6g}; components are not identified"
        )
    if sample and spread < weak_threshold:
        _warn(
            f"{what} at {_cell_label(xkey)}: mixing-weight spread {spread:.3g} "
            "is weak; the solve is noise-amplified"
        )
    if len(entries) == 2:
        mu, _ = solve_two_point_mixture(ys[0], ys[1], ws[0], ws[1])
        return float(mu)
    mu, _, _, _ = gmm_overidentified(ys, ws, cs)
    return float(mu)


def _annotate(exc, xkey, a):
    raise type(exc)(f"cell {_cell_label(xkey, a)}: {exc}") from None


def sace_monotone_exclusion(table, weak_threshold=WEAK_THRESHOLD):
    """Always-survivor effect under monotonicity plus exclusion restriction.

    Within every covariate group, the treated-arm survivor mean at each
    substitution level is a two-point mixture of the always-survivor and
    protected outcome means with known weights (ratio of control to treated
    survival); the exclusion restriction makes the components constant
    across levels, so two separated levels solve them. Control-arm
    survivors are pure always survivors. Cells lacking the data for a
    contribution are dropped from the final weighted average with a warning.

    Parameters
    ----------
    table : CellTable
    weak_threshold : float
        Sample-mode mixing-weight spread below which a warning is issued.

    Returns
    -------
    float
        The effect, a weighted average of per-cell contrasts with
        always-survivor mass as weights.
    """
    sample = _sample_mode(table)
    num = 0.0
    den = 0.0
    used = 0
    for xkey, group in table.x_groups().items():
        shares = {}
        for a, c in sorted(group.items()):
            if c.p_surv_treated is None or c.p_surv_control is None:
                _warn(
                    f"cell {_cell_label(xkey, a)}: survival unobserved in an arm, "
                    "cell dropped"
                )
                continue
            try:
                always, _, _ = strata_probs_monotone(
                    c.p_surv_treated, c.p_surv_control
                )
            except (MonotonicityError, ValueError) as exc:
                _annotate(exc, xkey, a)
            shares[a] = always

        entries = []
        for a, c in sorted(group.items()):
            if a not in shares or c.mean_treated is None:
                continue
            if c.p_surv_treated <= 0.0:
                continue
            mix = shares[a] / c.p_surv_treated
            count = c.n_surv_treated if sample else c.mass
            if count <= 0:
                count = c.mass
            entries.append((c.mean_treated, mix, count))
        mu_treated = _solve_mixture_levels(
            entries, sample, weak_threshold, "treated-arm mixture", xkey
        )

        for a, c in sorted(group.items()):
            if a not in shares:
                continue
            if mu_treated is None or c.mean_control is None:
                if shares[a] > 0.0:
                    _warn(
                        f"cell {_cell_label(xkey, a)}: incomplete outcome data, "
                        "cell dropped from the effect average"
                    )
                continue
            num += c.mass * shares[a] * (mu_treated - c.mean_control)
            den += c.mass * shares[a]
            used += 1
    if used == 0 or den <= 0.0:
        raise EstimationError(
            "no cell carries always-survivor mass with complete data"
        )
    return num / den


def sace_stochastic_monotone(table, rho, weak_threshold=WEAK_THRESHOLD):
    """Always-survivor effect under stochastic monotonicity of degree ``rho``.

    Both arms now hold two-point mixtures: treated survivors mix always
    survivors with protected units, control survivors mix always survivors
    with harmed units. The always-survivor share in each cell comes from
    :func:`strata_probs_stochastic` at the supplied ``rho``, and each arm's
    components are solved per covariate group across substitution levels.

    Returns the effect as a float; see :func:`sace_monotone_exclusion` for
    the weighting and drop policy.
    """
    sample = _sample_mode(table)
    num = 0.0
    den = 0.0
    used = 0
    for xkey, group in table.x_groups().items():
        shares = {}
        for a, c in sorted(group.items()):
            if c.p_surv_treated is None or c.p_surv_control is None:
                _warn(
                    f"cell {_cell_label(xkey, a)}: survival unobserved in an arm, "
                    "cell dropped"
                )
                continue
            try:
                always, _, _, _ = strata_probs_stochastic(
                    c.p_surv_treated, c.p_surv_control, rho
                )
            except ValueError as exc:
                _annotate(exc, xkey, a)
            shares[a] = always

        mus = {}
        for arm, mean_field, p_field, n_field in (
            (1, "mean_treated", "p_surv_treated", "n_surv_treated"),
            (0, "mean_control", "p_surv_control", "n_surv_control"),
        ):
            entries = []
            for a, c in sorted(group.items()):
                if a not in shares:
                    continue
                mean = getattr(c, mean_field)
                p = getattr(c, p_field)
                if mean is None or p is None or p <= 0.0:
                    continue
                mix = shares[a] / p
                count = getattr(c, n_field) if sample else c.mass
                if count <= 0:
                    count = c.mass
                entries.append((mean, mix, count))
            mus[arm] = _solve_mixture_levels(
                entries,
                sample,
                weak_threshold,
                f"arm-{arm} mixture",
                xkey,
            )

        if mus[1] is None or mus[0] is None:
            continue
        for a, c in sorted(group.items()):
            if a not in shares:
                continue
            num += c.mass * shares[a] * (mus[1] - mus[0])
            den += c.mass * shares[a]
            used += 1
    if used == 0 or den <= 0.0:
        raise EstimationError(
            "no cell carries always-survivor mass with complete data"
        )
    return num / den


def sace_no_interaction(table, weak_threshold=WEAK_THRESHOLD):
    """Always-survivor effect under monotonicity plus additive no-interaction.

    The exclusion restriction is dropped: substitution levels may shift
    outcomes, but by the same additive amount in every stratum and arm.
    Control survivors are pure always survivors, so the between-level shift
    is read off the control arm; subtracting it from the treated-arm means
    restores a solvable two-point system at two reference levels (the first
    two sufficiently separated levels in code order). The per-cell contrast
    is then constant across levels within a covariate group.
    """
    sample = _sample_mode(table)
    num = 0.0
    den = 0.0
    used = 0
    for xkey, group in table.x_groups().items():
        shares = {}
        mixes = {}
        for a, c in sorted(group.items()):
            if c.p_surv_treated is None or c.p_surv_control is None:
                _warn(
                    f"cell {_cell_label(xkey, a)}: survival unobserved in an arm, "
                    "cell dropped"
                )
                continue
            try:
                always, _, _ = strata_probs_monotone(
                    c.p_surv_treated, c.p_surv_control
                )
            except (MonotonicityError, ValueError) as exc:
                _annotate(exc, xkey, a)
            shares[a] = always
            if c.p_surv_treated > 0.0:
                mixes[a] = always / c.p_surv_treated

        candidates = [
            a
            for a, c in sorted(group.items())
            if a in mixes and c.mean_treated is not None and c.mean_control is not None
        ]
        contrast = None
        if len(candidates) >= 2:
            ref = candidates[0]
            other = None
            for a in candidates[1:]:
                if abs(mixes[a] - mixes[ref]) >= SEPARATION_EPS:
                    other = a
                    break
            if other is None:
                raise RelevanceError(
                    f"group {_cell_label(xkey)}: mixing weights constant across "
                    "levels; components are not identified"
                )
            spread = abs(mixes[other] - mixes[ref])
            if sample and spread < weak_threshold:
                _warn(
                    f"group {_cell_label(xkey)}: mixing-weight spread "
                    f"{spread:.3g} is weak; the solve is noise-amplified"
                )
            shift = group[ref].mean_control - group[other].mean_control
            mu_always_ref, _ = solve_two_point_mixture(
                group[ref].mean_treated,
                group[other].mean_treated + shift,
                mixes[ref],
                mixes[other],
            )
            contrast = mu_always_ref - group[ref].mean_control
        else:
            _warn(
                f"group {_cell_label(xkey)}: fewer than two usable levels, "
                "group dropped"
            )

        for a, c in sorted(group.items()):
            if a not in shares:
                continue
            if contrast is None or c.mean_control is None:
                if shares[a] > 0.0:
                    _warn(
                        f"cell {_cell_label(xkey, a)}: incomplete outcome data, "
                        "cell dropped from the effect average"
                    )
                continue
            num += c.mass * shares[a] * contrast
            den += c.mass * shares[a]
            used += 1
    if used == 0 or den <= 0.0:
        raise EstimationError(
            "no cell carries always-survivor mass with complete data"
        )
    return num / den
