"""Integer-valued measures on [0, T] x R^d_0, mark regions and cadlag paths.

An :class:`AtomicMeasure` is a finite sum of Dirac atoms ``delta_(t_i, z_i)``.
It is immutable; every operation returns a new measure.
"""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DomainError


class StopMode(enum.Enum):
    CLOSED = "closed"  # j_t: atoms with time <= t
    OPEN = "open"  # j_{t-}: atoms with time < t


@dataclass(frozen=True)
class Atom:
    time: float
    mark: tuple

    def __post_init__(self):
        mark = tuple(float(v) for v in np.atleast_1d(self.mark))
        object.__setattr__(self, "mark", mark)
        if not np.all(np.isfinite(mark)) or not np.isfinite(self.time):
            raise DomainError("atom coordinates must be finite")
        if np.linalg.norm(mark) == 0.0:
            raise DomainError("marks live in R^d_0: zero mark rejected")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class AtomicMeasure:
    """Finite integer-valued measure ``sum_i delta_(t_i, z_i)`` on [0, horizon] x R^d_0.

    Atoms are kept sorted by time; atoms sharing a time keep insertion order.
    """

    __slots__ = ("times", "marks", "horizon")

    def __init__(self, times, marks, horizon: float, dim: int | None = None):
        times = np.asarray(times, dtype=float).reshape(-1)
        marks = np.asarray(marks, dtype=float)
        if dim is None:
            dim = marks.shape[1] if marks.ndim == 2 else 1
        marks = marks.reshape(len(times), dim)
        if not horizon > 0:
            raise DomainError("horizon must be positive")
        if len(times):
            if not (np.all(np.isfinite(times)) and np.all(np.isfinite(marks))):
                raise DomainError("atom coordinates must be finite")
            if times.min() < 0 or times.max() > horizon:
                raise DomainError("atom times must lie in [0, horizon]")
            if np.any(np.linalg.norm(marks, axis=1) == 0):
                raise DomainError("marks live in R^d_0: zero mark rejected")
            order = np.argsort(times, kind="stable")
            times, marks = times[order], marks[order]
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "marks", _frozen(marks))
        object.__setattr__(self, "horizon", float(horizon))

    def __setattr__(self, name, value):
        raise AttributeError("AtomicMeasure is immutable")

    @classmethod
    def empty(cls, horizon: float, dim: int = 1) -> "AtomicMeasure":
        return cls(np.empty(0), np.empty((0, dim)), horizon, dim)

    @classmethod
    def from_atoms(cls, atoms: Iterable, horizon: float, dim: int | None = None) -> "AtomicMeasure":
        """Build from ``(t, z)`` pairs or :class:`Atom` instances."""
        ts, zs = [], []
        for a in atoms:
            if isinstance(a, Atom):
                ts.append(a.time)
                zs.append(a.mark)
            else:
                t, z = a
                ts.append(float(t))
                zs.append(tuple(np.atleast_1d(np.asarray(z, dtype=float))))
        if dim is None:
            dim = len(zs[0]) if zs else 1
        return cls(np.array(ts), np.array(zs, dtype=float).reshape(len(ts), dim), horizon, dim)

    @property
    def dim(self) -> int:
        return self.marks.shape[1]

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[Atom]:
        for t, z in zip(self.times, self.marks):
            yield Atom(float(t), tuple(z))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.marks, other.marks)
        )

    def __hash__(self):
        return hash((self.horizon, self.times.tobytes(), self.marks.tobytes()))

    def __repr__(self) -> str:
        atoms = ", ".join(f"({t:.6g}, {list(z)})" for t, z in zip(self.times, self.marks))
        return f"AtomicMeasure(T={self.horizon:g}, [{atoms}])"

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.marks, axis=1)

    def _subset(self, keep: np.ndarray) -> "AtomicMeasure":
        new = object.__new__(AtomicMeasure)
        object.__setattr__(new, "times", _frozen(self.times[keep]))
        object.__setattr__(new, "marks", _frozen(self.marks[keep]))
        object.__setattr__(new, "horizon", self.horizon)
        return new

    def restrict(self, t: float, mode: StopMode = StopMode.CLOSED) -> "AtomicMeasure":
        return restrict(self, t, mode)

    def add_atom(self, t: float, z) -> "AtomicMeasure":
        return add_atom(self, t, z)

    def count(self, t0: float = 0.0, t1: float | None = None, region: "MarkRegion | None" = None,
              left_closed: bool = True, right_closed: bool = True) -> int:
        """Number of atoms in a time interval times a mark region."""
        t1 = self.horizon if t1 is None else t1
        lo = self.times >= t0 if left_closed else self.times > t0
        hi = self.times <= t1 if right_closed else self.times < t1
        keep = lo & hi
        if region is not None:
            keep &= region.contains(self.marks)
        return int(np.count_nonzero(keep))

    # serialization

    def to_dict(self) -> dict:
        return {"horizon": self.horizon,
                "atoms": [[float(t), [float(v) for v in z]] for t, z in zip(self.times, self.marks)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, dim: int | None = None) -> "AtomicMeasure":
        return cls.from_atoms([(t, z) for t, z in d["atoms"]], d["horizon"], dim)

    @classmethod
    def from_json(cls, s: str) -> "AtomicMeasure":
        return cls.from_dict(json.loads(s))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"] + [f"z{i + 1}" for i in range(self.dim)])
        for t, z in zip(self.times, self.marks):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in z])
        return buf.getvalue()


def _check_time(j: AtomicMeasure, t: float) -> None:
    if not 0.0 <= t <= j.horizon:
        raise DomainError(f"time {t} outside [0, {j.horizon}]")


def restrict(j: AtomicMeasure, t: float, mode: StopMode = StopMode.CLOSED) -> AtomicMeasure:
    """Stopped measure: ``j_t`` (CLOSED) or ``j_{t-}`` (OPEN)."""
    _check_time(j, t)
    keep = j.times <= t if mode is StopMode.CLOSED else j.times < t
    if keep.all():
        return j
    return j._subset(keep)


def add_atom(j: AtomicMeasure, t: float, z) -> AtomicMeasure:
    """Return ``j + delta_(t, z)``; the new atom goes after existing atoms at the same time."""
    _check_time(j, t)
    z = np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, -1)
    if z.shape[1] != j.dim:
        raise DomainError(f"mark dimension {z.shape[1]} != measure dimension {j.dim}")
    if np.linalg.norm(z) == 0.0:
        raise DomainError("marks live in R^d_0: zero mark rejected")
    if not np.all(np.isfinite(z)):
        raise DomainError("mark must be finite")
    pos = int(np.searchsorted(j.times, t, side="right"))
    new = object.__new__(AtomicMeasure)
    object.__setattr__(new, "times", _frozen(np.insert(j.times, pos, t)))
    object.__setattr__(new, "marks", _frozen(np.insert(j.marks, pos, z, axis=0)))
    object.__setattr__(new, "horizon", j.horizon)
    return new


# Mark regions ---------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Signed scalar marks ``lo < z <= hi`` (first coordinate)."""
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError("empty interval")

    def contains(self, marks: np.ndarray) -> np.ndarray:
        z = np.asarray(marks, dtype=float)
        z = z[..., 0] if z.ndim >= 2 else z
        return (z > self.lo) & (z <= self.hi)

    @property
    def away_from_zero(self) -> bool:
        return self.lo >= 0 or self.hi < 0

    def signed_bounds(self) -> list[tuple[float, float]]:
        return [(self.lo, self.hi)]


@dataclass(frozen=True)
class Annulus:
    """Marks with ``r_lo < |z| <= r_hi``."""
    r_lo: float
    r_hi: float

    def __post_init__(self):
        if not 0 <= self.r_lo < self.r_hi:
            raise DomainError("annulus radii must satisfy 0 <= r_lo < r_hi")

    def contains(self, marks: np.ndarray) -> np.ndarray:
        z = np.asarray(marks, dtype=float)
        r = np.linalg.norm(z, axis=-1) if z.ndim >= 2 else np.abs(z)
        return (r > self.r_lo) & (r <= self.r_hi)

    @property
    def away_from_zero(self) -> bool:
        return self.r_lo > 0

    def signed_bounds(self) -> list[tuple[float, float]]:
        # scalar-mark reading, used by 1-d mark laws
        return [(-self.r_hi, -self.r_lo), (self.r_lo, self.r_hi)]


class MarkRegion:
    """Finite union of intervals/annuli. Cells are expected to be disjoint."""

    __slots__ = ("cells",)

    def __init__(self, cells: Sequence[Interval | Annulus] | Interval | Annulus):
        if isinstance(cells, (Interval, Annulus)):
            cells = [cells]
        object.__setattr__(self, "cells", tuple(cells))

    def __setattr__(self, name, value):
        raise AttributeError("MarkRegion is immutable")

    def __repr__(self):
        return f"MarkRegion({list(self.cells)})"

    def __eq__(self, other):
        return isinstance(other, MarkRegion) and self.cells == other.cells

    def __hash__(self):
        return hash(self.cells)

    def contains(self, marks) -> np.ndarray:
        marks = np.asarray(marks, dtype=float)
        out = np.zeros(marks.shape[:-1] if marks.ndim >= 2 else marks.shape, dtype=bool)
        for c in self.cells:
            out |= c.contains(marks)
        return out

    @property
    def away_from_zero(self) -> bool:
        return all(c.away_from_zero for c in self.cells)

    def require_away_from_zero(self) -> None:
        if not self.away_from_zero:
            raise DomainError("mark region must be bounded away from 0")

    def to_dict(self) -> list:
        return [{"interval": [c.lo, c.hi]} if isinstance(c, Interval) else {"annulus": [c.r_lo, c.r_hi]}
                for c in self.cells]

    @classmethod
    def from_dict(cls, cells: list) -> "MarkRegion":
        out = []
        for c in cells:
            if "interval" in c:
                out.append(Interval(*map(float, c["interval"])))
            else:
                out.append(Annulus(*map(float, c["annulus"])))
        return cls(out)


EVERYWHERE = MarkRegion(Annulus(0.0, np.inf))


@dataclass(frozen=True)
class AnnulusSpec:
    alpha: float

    def __post_init__(self):
        if not self.alpha >= 1:
            raise DomainError("alpha must be >= 1")

    @property
    def region(self) -> MarkRegion:
        return MarkRegion(Annulus(1.0 / self.alpha, self.alpha))


def cylinder_count(j: AtomicMeasure, t: float, spec: AnnulusSpec | float, instant: bool = False) -> int:
    """Cylindrical count ``C^alpha_t(j)``.

    By default counts atoms in ``[0, t] x {1/alpha < |z| <= alpha}``. With
    ``instant=True`` only atoms at exactly time ``t`` are counted.
    """
    if not isinstance(spec, AnnulusSpec):
        spec = AnnulusSpec(float(spec))
    _check_time(j, t)
    if spec.alpha == 1.0:
        return 0  # 1 < |z| <= 1 is empty
    region = spec.region
    if instant:
        return j.count(t, t, region)
    return j.count(0.0, t, region)


# Paths ----------------------------------------------------------------------

class CadlagPath:
    """Right-continuous piecewise-constant path given by node times and values.

    ``values`` is ``(n,)`` for scalar paths or ``(n, d)``. Between nodes the
    path keeps the value of the last node at or before ``t``.
    """

    __slots__ = ("times", "values")

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or len(times) < 1 or values.shape[0] != len(times):
            raise DomainError("times and values must have matching leading length")
        if np.any(np.diff(times) < 0):
            raise DomainError("path node times must be non-decreasing")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))

    def __setattr__(self, name, value):
        raise AttributeError("CadlagPath is immutable")

    @classmethod
    def uniform(cls, values, horizon: float) -> "CadlagPath":
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(0.0, horizon, values.shape[0]), values)

    @classmethod
    def constant(cls, value: float, horizon: float) -> "CadlagPath":
        return cls([0.0, horizon], [value, value])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def _index(self, t: float, left: bool = False) -> int:
        side = "left" if left else "right"
        return max(int(np.searchsorted(self.times, t, side=side)) - 1, 0)

    def value_at(self, t: float):
        return self.values[self._index(t)]

    def left_value(self, t: float):
        """``x(t-)``; equals ``x(0)`` at the first node."""
        return self.values[self._index(t, left=True)]

    def stopped(self, t: float) -> "CadlagPath":
        """``x_t``: frozen at ``x(t)`` after ``t``; the result ends with a node at ``t``."""
        k = self._index(t)
        if self.times[k] == t:
            return CadlagPath(self.times[: k + 1], self.values[: k + 1])
        return CadlagPath(np.append(self.times[: k + 1], t),
                          np.concatenate([self.values[: k + 1], self.values[k: k + 1]]))

    def bumped(self, t: float, h: float, axis: int = 0) -> "CadlagPath":
        """Vertical perturbation ``x_t + h 1_[t, inf)`` (along ``axis`` for vector paths)."""
        base = self.stopped(t)
        values = np.array(base.values)
        if values.ndim == 1:
            values[-1] += h
        else:
            values[-1, axis] += h
        return CadlagPath(base.times, values)

    def running_max(self, t: float) -> float:
        k = self._index(t)
        return float(np.max(self.values[: k + 1]))

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CadlagPath":
        return cls(d["times"], d["values"])
