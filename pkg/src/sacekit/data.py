"""Data containers and CSV input/output.

A :class:`Dataset` holds one observational row per unit: treatment arm ``z``,
covariates ``x``, substitution variable ``a`` (integer level codes), survival
indicator ``s``, and the outcome ``y`` which exists only for survivors. The
outcome store is survivor-packed: there is no filler value for truncated
units, so their outcomes cannot leak into arithmetic. On disk a truncated
outcome is an empty CSV field.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


class StratumLabel(enum.Enum):
    """Joint survival class: (survives if treated, survives if control)."""

    ALWAYS = "LL"
    PROTECTED = "LD"
    HARMED = "DL"
    NEVER = "DD"

    @property
    def survives_treated(self):
        return self in (StratumLabel.ALWAYS, StratumLabel.PROTECTED)

    @property
    def survives_control(self):
        return self in (StratumLabel.ALWAYS, StratumLabel.HARMED)

    @classmethod
    def from_potential(cls, s_treated, s_control):
        table = {
            (1, 1): cls.ALWAYS,
            (1, 0): cls.PROTECTED,
            (0, 1): cls.HARMED,
            (0, 0): cls.NEVER,
        }
        try:
            return table[(int(s_treated), int(s_control))]
        except KeyError:
            raise ValueError("potential survival indicators must be 0 or 1") from None


@dataclass(frozen=True)
class Unit:
    """Single-row view of a dataset. ``y`` is None for truncated units."""

    z: int
    x: tuple
    a: int
    s: int
    y: float | None


@dataclass(frozen=True)
class Schema:
    """Column mapping for CSV files.

    ``covariates=None`` means: every column other than z/s/y/a, in header
    order. ``a_labels`` optionally names the integer codes of ``a``.
    """

    z: str = "z"
    s: str = "s"
    y: str = "y"
    a: str = "a"
    covariates: tuple | None = None
    a_labels: tuple | None = None


class Dataset:
    """Immutable array-backed container of observational rows.

    Construct with :meth:`from_arrays` (the outcome array must be NaN
    exactly where ``s == 0``) or :func:`load_dataset`. All array accessors
    return read-only views.
    """

    def __init__(self, z, x, a, s, y_packed, covariate_names, a_labels=None):
        self._z = np.asarray(z, dtype=np.int64)
        self._x = np.asarray(x, dtype=float)
        self._a = np.asarray(a, dtype=np.int64)
        self._s = np.asarray(s, dtype=np.int64)
        self._y = np.asarray(y_packed, dtype=float)
        n = self._z.shape[0]
        if self._x.ndim != 2 or self._x.shape[0] != n:
            raise DataError("covariate array must be (n, d)")
        if self._a.shape != (n,) or self._s.shape != (n,):
            raise DataError("z, a, s must all have length n")
        if int(self._s.sum()) != self._y.shape[0]:
            raise DataError("outcome store length must equal the survivor count")
        self._ypos = np.full(n, -1, dtype=np.int64)
        self._ypos[self._s == 1] = np.arange(self._y.shape[0])
        self.covariate_names = tuple(covariate_names)
        if len(self.covariate_names) != self._x.shape[1]:
            raise DataError("covariate_names must match the covariate columns")
        self.a_labels = tuple(a_labels) if a_labels is not None else None
        for arr in (self._z, self._x, self._a, self._s, self._y, self._ypos):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, z, x, a, s, y, covariate_names=None, a_labels=None):
        """Build a dataset from full-length arrays.

        ``y`` must be NaN at every truncated unit (``s == 0``) and finite at
        every survivor; anything else is a :class:`DataError`.
        """
        z = np.asarray(z)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] == 1 and z.shape[0] != 1:
            x = x.T
        a = np.asarray(a)
        s = np.asarray(s)
        y = np.asarray(y, dtype=float)
        if not np.isin(z, (0, 1)).all():
            raise DataError("z must be 0 or 1")
        if not np.isin(s, (0, 1)).all():
            raise DataError("s must be 0 or 1")
        if np.any(a != np.floor(a)) or np.any(np.asarray(a, dtype=float) < 0):
            raise DataError("a must hold non-negative integer level codes")
        surv = s == 1
        if np.any(~np.isfinite(y[surv])):
            raise DataError("outcome missing or non-finite for a survivor")
        if np.any(~np.isnan(y[~surv])):
            raise DataError("outcome present for a truncated unit")
        if covariate_names is None:
            covariate_names = tuple(f"x{j + 1}" for j in range(x.shape[1]))
        return cls(z, x, a, s, y[surv], covariate_names, a_labels)

    def __len__(self):
        return self._z.shape[0]

    @property
    def n(self):
        return self._z.shape[0]

    @property
    def n_covariates(self):
        return self._x.shape[1]

    @property
    def z(self):
        return self._z

    @property
    def x(self):
        return self._x

    @property
    def a(self):
        return self._a

    @property
    def s(self):
        return self._s

    @property
    def a_levels(self):
        """Distinct level codes present, ascending."""
        return np.unique(self._a)

    def survivor_mask(self, arm=None):
        mask = self._s == 1
        if arm is not None:
            mask = mask & (self._z == arm)
        return mask

    def outcomes_at(self, mask):
        """Outcomes for the selected units. Every selected unit must be a survivor."""
        mask = np.asarray(mask)
        if mask.dtype == bool:
            idx = np.flatnonzero(mask)
        else:
            idx = np.asarray(mask, dtype=np.int64)
        pos = self._ypos[idx]
        if np.any(pos < 0):
            raise DataError("requested the outcome of a truncated unit")
        return self._y[pos]

    def survivors(self, arm=None):
        """(x, a, y) arrays for survivors, optionally restricted to one arm."""
        mask = self.survivor_mask(arm)
        return self._x[mask], self._a[mask], self.outcomes_at(mask)

    def unit(self, i):
        i = int(i)
        s = int(self._s[i])
        y = float(self._y[self._ypos[i]]) if s == 1 else None
        return Unit(
            z=int(self._z[i]), x=tuple(self._x[i]), a=int(self._a[i]), s=s, y=y
        )

    def __iter__(self):
        return (self.unit(i) for i in range(len(self)))

    def subset(self, indices):
        """New dataset of the given rows (duplicates allowed, e.g. resampling)."""
        idx = np.asarray(indices, dtype=np.int64)
        s = self._s[idx]
        y = np.full(idx.shape[0], np.nan)
        keep = s == 1
        y[keep] = self._y[self._ypos[idx[keep]]]
        return Dataset.from_arrays(
            self._z[idx],
            self._x[idx],
            self._a[idx],
            s,
            y,
            self.covariate_names,
            self.a_labels,
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.covariate_names == other.covariate_names
            and self.a_labels == other.a_labels
            and np.array_equal(self._z, other._z)
            and np.array_equal(self._x, other._x)
            and np.array_equal(self._a, other._a)
            and np.array_equal(self._s, other._s)
            and np.array_equal(self._y, other._y)
        )


def load_dataset(path, schema=None):
    """Read a dataset from CSV.

    Column positions come from the header via ``schema`` (default column
    names: z, s, y, a; all remaining columns are covariates). Malformed
    rows raise :class:`DataError` with the 1-based row number.
    """
    schema = schema or Schema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in (schema.z, schema.s, schema.y, schema.a):
            if name not in header:
                raise DataError(f"{path}: missing column {name!r}")
        zi, si, yi, ai = (
            header.index(schema.z),
            header.index(schema.s),
            header.index(schema.y),
            header.index(schema.a),
        )
        if schema.covariates is None:
            xcols = [
                (j, name)
                for j, name in enumerate(header)
                if j not in (zi, si, yi, ai)
            ]
        else:
            for name in schema.covariates:
                if name not in header:
                    raise DataError(f"{path}: missing covariate column {name!r}")
            xcols = [(header.index(name), name) for name in schema.covariates]

        z, s, a, x, y = [], [], [], [], []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {rownum}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                zv = _parse_binary(row[zi], schema.z)
                sv = _parse_binary(row[si], schema.s)
                av = _parse_code(row[ai], schema.a)
                xv = [_parse_float(row[j], name) for j, name in xcols]
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            yfield = row[yi].strip()
            if sv == 1:
                if yfield == "":
                    raise DataError(
                        f"{path}: row {rownum}: survivor without an outcome"
                    )
                try:
                    yv = float(yfield)
                except ValueError:
                    raise DataError(
                        f"{path}: row {rownum}: bad outcome value {yfield!r}"
                    ) from None
                if not np.isfinite(yv):
                    raise DataError(f"{path}: row {rownum}: non-finite outcome")
            else:
                if yfield != "":
                    raise DataError(
                        f"{path}: row {rownum}: outcome present for a truncated unit"
                    )
                yv = np.nan
            z.append(zv)
            s.append(sv)
            a.append(av)
            x.append(xv)
            y.append(yv)

    if not z:
        raise DataError(f"{path}: no data rows")
    return Dataset.from_arrays(
        np.array(z),
        np.array(x, dtype=float).reshape(len(z), len(xcols)),
        np.array(a),
        np.array(s),
        np.array(y),
        covariate_names=[name for _, name in xcols],
        a_labels=schema.a_labels,
    )


def save_dataset(data, path, schema=None):
    """Write a dataset to CSV, inverse of :func:`load_dataset`.

    Floats are written with shortest round-trip repr, so save/load is exact
    and repeated saves of the same dataset are byte-identical.
    """
    schema = schema or Schema()
    names = list(schema.covariates) if schema.covariates else list(data.covariate_names)
    header = [schema.z, schema.s, schema.y, schema.a] + names
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for u in data:
            yfield = "" if u.y is None else repr(u.y)
            writer.writerow(
                [u.z, u.s, yfield, u.a] + [repr(float(v)) for v in u.x]
            )


def _parse_binary(text, name):
    v = text.strip()
    if v not in ("0", "1"):
        raise ValueError(f"{name} must be 0 or 1, got {text!r}")
    return int(v)


def _parse_code(text, name):
    v = text.strip()
    try:
        code = int(v)
    except ValueError:
        raise ValueError(f"{name} must be an integer level code, got {text!r}") from None
    if code < 0:
        raise ValueError(f"{name} must be non-negative, got {code}")
    return code


def _parse_float(text, name):
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"{name} must be numeric, got {text!r}") from None
    if not np.isfinite(v):
        raise ValueError(f"{name} must be finite, got {text!r}")
    return v


@dataclass
class ValidationReport:
    """Summary counts and structural warnings for a dataset."""

    n: int
    arm_counts: dict
    survivor_counts: dict
    a_level_counts: dict
    covariate_summary: dict
    flags: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.flags

    def to_dict(self):
        return {
            "n": self.n,
            "arm_counts": self.arm_counts,
            "survivor_counts": self.survivor_counts,
            "a_level_counts": self.a_level_counts,
            "covariate_summary": self.covariate_summary,
            "flags": list(self.flags),
            "ok": self.ok,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


def validate(data):
    """Structural checks ahead of estimation. Never modifies the data.

    Flags (not errors): an empty treatment arm, an arm without survivors,
    no variation in the substitution variable among an arm's survivors,
    and constant covariate columns.
    """
    z, s, a = data.z, data.s, data.a
    arm_counts = {arm: int(np.sum(z == arm)) for arm in (0, 1)}
    survivor_counts = {arm: int(np.sum((z == arm) & (s == 1))) for arm in (0, 1)}
    a_level_counts = {}
    for arm in (0, 1):
        mask = (z == arm) & (s == 1)
        levels, counts = np.unique(a[mask], return_counts=True)
        a_level_counts[arm] = {int(k): int(c) for k, c in zip(levels, counts)}

    flags = []
    for arm in (0, 1):
        if arm_counts[arm] == 0:
            flags.append(f"arm {arm} is empty")
        elif survivor_counts[arm] == 0:
            flags.append(f"arm {arm} has no survivors")
        elif len(a_level_counts[arm]) < 2:
            flags.append(
                f"substitution variable takes a single level among arm {arm} survivors"
            )

    covariate_summary = {}
    for j, name in enumerate(data.covariate_names):
        col = data.x[:, j]
        covariate_summary[name] = {
            "mean": float(np.mean(col)) if len(col) else float("nan"),
            "sd": float(np.std(col)) if len(col) else float("nan"),
            "min": float(np.min(col)) if len(col) else float("nan"),
            "max": float(np.max(col)) if len(col) else float("nan"),
        }
        if len(col) and np.ptp(col) == 0.0:
            flags.append(f"covariate {name} is constant")

    return ValidationReport(
        n=len(data),
        arm_counts=arm_counts,
        survivor_counts=survivor_counts,
        a_level_counts=a_level_counts,
        covariate_summary=covariate_summary,
        flags=flags,
    )
