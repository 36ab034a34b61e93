"""Non-anticipative functionals of ``(x, j)`` and their pathwise derivatives.

* ``vertical_jump_derivative`` inserts one atom into ``j_{t-}``;
* ``vertical_diffusion_derivative`` bumps ``x`` on ``[t, inf)`` (one-sided
  differences with Richardson extrapolation);
* ``compensated_integral`` / ``diffusion_integral`` are the pathwise
  Lebesgue-Stieltjes integrals whose integrands these operators recover.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .compensator import CompensatorModel, PathDependent, compensator_mass, hitting_time
from .errors import DomainError, NumericalError
from .measure import (EVERYWHERE, Annulus, AtomicMeasure, CadlagPath, Interval, MarkRegion, StopMode,
                      add_atom, restrict)


@dataclass(frozen=True)
class Functional:
    """``F(t, x, j)``; optional closed-form derivatives are used by the gallery.

    ``jump_derivative(t, z, x, j)`` and ``diffusion_derivative(t, x, j)`` must
    agree with the pathwise operators; tests cross-check them.
    """
    evaluate: Callable
    jump_derivative: Optional[Callable] = None
    diffusion_derivative: Optional[Callable] = None
    name: str = ""

    def __call__(self, t, x, j):
        return self.evaluate(t, x, j)

    def __add__(self, other: "Functional") -> "Functional":
        return linear_combination(1.0, self, 1.0, other)

    def __rmul__(self, c: float) -> "Functional":
        return Functional(lambda t, x, j: c * self.evaluate(t, x, j), name=f"{c}*{self.name}")


def linear_combination(a: float, F: Functional, b: float, G: Functional) -> Functional:
    return Functional(lambda t, x, j: a * F.evaluate(t, x, j) + b * G.evaluate(t, x, j),
                      name=f"{a}*{F.name}+{b}*{G.name}")


@dataclass(frozen=True)
class PredictableField:
    """``psi(t, z, x, j)`` depending on ``(x_{t-}, j_{t-})`` only.

    ``evaluate`` receives marks as an ``(q, d)`` array and returns ``(q,)``;
    it is always handed ``j_{t-}``, so predictability holds by construction.
    ``support`` must be bounded away from 0 for compensated integration.
    ``breakpoints(j)`` lists times where the field may jump in ``t``.
    """
    evaluate: Callable
    support: MarkRegion = EVERYWHERE
    name: str = ""
    breakpoints: Optional[Callable] = None

    def values(self, t: float, z, x, j: AtomicMeasure) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[0] == 1 and z.shape[1] != j.dim:
            z = z.T
        j = restrict(j, t, StopMode.OPEN)
        out = np.asarray(self.evaluate(t, z, x, j), dtype=float)
        if out.shape != (z.shape[0],):
            out = np.array([float(self.evaluate(t, zz[None, :], x, j)) for zz in z])
        return np.where(self.support.contains(z), out, 0.0)

    def __call__(self, t, z, x, j) -> float:
        return float(self.values(t, np.atleast_1d(np.asarray(z, dtype=float))[None, :], x, j)[0])


# Simple fields --------------------------------------------------------------

@dataclass(frozen=True)
class HittingSpec:
    """Stopping time ``inf{t : mu([0, t] x region) >= eps}`` (T if never reached)."""
    region: MarkRegion
    eps: float

    def to_dict(self):
        return {"hitting": {"region": self.region.to_dict(), "eps": self.eps}}


@dataclass(frozen=True)
class Coefficient:
    """Bounded Borel coefficient of cylindrical statistics.

    Each statistic is ``("x", t_l)`` or ``("count", t_l, alpha)``, read at
    ``min(t_l, tau_i)``. The value is ``const + sum w_l s_l``, passed through
    ``tanh`` when ``squash`` is set.
    """
    const: float = 0.0
    stats: tuple = ()
    weights: tuple = ()
    squash: bool = True

    def value(self, x: Optional[CadlagPath], j: AtomicMeasure, tau: float) -> float:
        acc = 0.0
        for stat, w in zip(self.stats, self.weights):
            s = min(float(stat[1]), tau)
            if stat[0] == "x":
                if x is None:
                    raise DomainError("coefficient reads x but no path was supplied")
                acc += w * float(x.value_at(s))
            else:
                alpha = float(stat[2])
                r = np.linalg.norm(j.marks, axis=1)
                acc += w * float(np.count_nonzero((j.times <= s) & (r > 1.0 / alpha) & (r <= alpha)))
        if not self.stats:
            return float(self.const)
        return float(np.tanh(self.const + acc)) if self.squash else float(self.const + acc)

    def to_dict(self):
        return {"const": self.const, "stats": [list(s) for s in self.stats],
                "weights": list(self.weights), "squash": self.squash}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d.get("const", 0.0)), tuple(tuple(s) for s in d.get("stats", [])),
                   tuple(float(w) for w in d.get("weights", [])), bool(d.get("squash", True)))


def _cells_disjoint(cells) -> bool:
    probes = []
    for c in cells:
        for lo, hi in c.signed_bounds():
            lo_f = lo if np.isfinite(lo) else -1e300
            hi_f = hi if np.isfinite(hi) else 1e300
            probes.append((lo_f, hi_f))
    probes.sort()
    return all(b[0] >= a[1] for a, b in zip(probes[:-1], probes[1:]))


@dataclass(frozen=True)
class SimpleField:
    """``psi(t, z) = sum_{i,k} psi_ik(j_{tau_i}) 1_(tau_i, tau_{i+1}](t) 1_{A_k}(z)``.

    ``grid`` entries are constant times or :class:`HittingSpec` stopping times
    (evaluated against ``grid_model``); the running maximum keeps the grid
    sorted. ``coefs[i][k]`` is the :class:`Coefficient` of cell ``(i, k)``.
    Degenerate time cells contribute nothing.
    """
    grid: tuple
    cells: tuple
    coefs: tuple
    grid_model: Optional[CompensatorModel] = None

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "coefs", tuple(tuple(r) for r in self.coefs))
        if len(self.coefs) != len(self.grid) - 1 or any(len(r) != len(self.cells) for r in self.coefs):
            raise DomainError("coefs must be (len(grid) - 1) x len(cells)")
        for c in self.cells:
            if not c.away_from_zero:
                raise DomainError("mark cells must be bounded away from 0")
        if not _cells_disjoint(self.cells):
            raise DomainError("mark cells must be disjoint")
        if any(isinstance(g, HittingSpec) for g in self.grid) and self.grid_model is None:
            raise DomainError("hitting-time grid entries need grid_model")

    @property
    def support(self) -> MarkRegion:
        return MarkRegion(self.cells)

    def taus(self, j: AtomicMeasure) -> np.ndarray:
        out = np.empty(len(self.grid))
        for i, g in enumerate(self.grid):
            out[i] = hitting_time(self.grid_model, j, g.region, g.eps)[0] if isinstance(g, HittingSpec) \
                else min(float(g), j.horizon)
        return np.maximum.accumulate(out)

    def coefficient_table(self, x, j: AtomicMeasure, taus: np.ndarray) -> np.ndarray:
        return np.array([[c.value(x, j, taus[i]) for c in row] for i, row in enumerate(self.coefs)])

    def _cell_index(self, z: np.ndarray) -> np.ndarray:
        k = np.full(z.shape[0], -1)
        for idx, c in enumerate(self.cells):
            k[c.contains(z)] = idx
        return k

    def evaluate(self, t: float, z, x, j: AtomicMeasure) -> np.ndarray:
        jm = restrict(j, t, StopMode.OPEN)
        z = np.atleast_2d(z)
        taus = self.taus(jm)
        i = int(np.searchsorted(taus, t, side="left")) - 1
        k = self._cell_index(z)
        out = np.zeros(z.shape[0])
        if i < 0 or i >= len(self.coefs) or not taus[i] < t <= taus[i + 1]:
            return out
        row = np.array([c.value(x, jm, taus[i]) for c in self.coefs[i]])
        hit = k >= 0
        out[hit] = row[k[hit]]
        return out

    def as_field(self) -> PredictableField:
        return PredictableField(self.evaluate, self.support, "simple", self.taus)

    def _pieces(self, model, x, j, t):
        jt = restrict(j, t, StopMode.CLOSED)
        taus = self.taus(jt)
        c = self.coefficient_table(x, jt, taus)
        lo, hi = np.minimum(taus[:-1], t), np.minimum(taus[1:], t)
        mass = np.zeros_like(c)
        for i in range(len(lo)):
            if hi[i] > lo[i]:
                for k, cell in enumerate(self.cells):
                    mass[i, k] = compensator_mass(model, jt, lo[i], hi[i], MarkRegion(cell))
        return jt, taus, c, mass

    def exact_integral(self, model: CompensatorModel, x, j: AtomicMeasure, t: float) -> float:
        """Pathwise ``int_0^t int psi d(j - mu)`` with exact cell masses."""
        jt, taus, c, mass = self._pieces(model, x, j, t)
        jumps = 0.0
        if len(jt):
            i = np.searchsorted(taus, jt.times, side="left") - 1
            k = self._cell_index(jt.marks)
            ok = (i >= 0) & (i < len(self.coefs)) & (k >= 0)
            if ok.any():
                jumps = float(np.sum(c[i[ok], k[ok]]))
        return jumps - float(np.sum(c * mass))

    def square_integral(self, model: CompensatorModel, x, j: AtomicMeasure, t: float) -> float:
        """``int_0^t int psi^2 dmu`` (cells are disjoint)."""
        _, _, c, mass = self._pieces(model, x, j, t)
        return float(np.sum(c * c * mass))

    def to_dict(self) -> dict:
        return {"grid": [g.to_dict() if isinstance(g, HittingSpec) else float(g) for g in self.grid],
                "cells": MarkRegion(self.cells).to_dict(),
                "coefs": [[c.to_dict() for c in row] for row in self.coefs],
                **({"grid_model": self.grid_model.to_dict()} if self.grid_model is not None else {})}

    @classmethod
    def from_dict(cls, d: dict, horizon: float = 1.0) -> "SimpleField":
        grid = [HittingSpec(MarkRegion.from_dict(g["hitting"]["region"]), float(g["hitting"]["eps"]))
                if isinstance(g, dict) else float(g) for g in d["grid"]]
        model = CompensatorModel.from_dict(d["grid_model"], horizon) if "grid_model" in d else None
        return cls(tuple(grid), MarkRegion.from_dict(d["cells"]).cells,
                   tuple(tuple(Coefficient.from_dict(c) for c in row) for row in d["coefs"]), model)


@dataclass(frozen=True)
class SimplePhi:
    """Diffusion integrand ``phi(t) = sum_i phi_i 1_(t_i, t_{i+1}](t)`` on a sorted constant grid."""
    grid: tuple
    coefs: tuple

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "coefs", tuple(self.coefs))
        if np.any(np.diff(self.grid) < 0):
            raise DomainError("diffusion grid must be sorted")
        if len(self.coefs) != len(self.grid) - 1:
            raise DomainError("need len(grid) - 1 coefficients")

    def value(self, t: float, x, j) -> float:
        i = int(np.searchsorted(self.grid, t, side="left")) - 1
        if i < 0 or i >= len(self.coefs):
            return 0.0
        return self.coefs[i].value(x, j, self.grid[i])


def diffusion_integral(phi: SimplePhi, x: CadlagPath, t: float, j: Optional[AtomicMeasure] = None) -> float:
    """Riemann sum ``sum_i phi_i (x(tau_{i+1} ^ t) - x(tau_i ^ t))``."""
    if np.any(np.diff(phi.grid) < 0):
        raise DomainError("diffusion grid must be sorted")
    total = 0.0
    for i, c in enumerate(phi.coefs):
        a, b = min(phi.grid[i], t), min(phi.grid[i + 1], t)
        if b > a:
            total += c.value(x, j, phi.grid[i]) * float(x.value_at(b) - x.value_at(a))
    return total


def riemann_functional(phi: SimplePhi) -> Functional:
    return Functional(lambda t, x, j: diffusion_integral(phi, x, t, j),
                      diffusion_derivative=lambda t, x, j: phi.value(t, x, j), name="riemann")


# Compensated integrals ------------------------------------------------------

def mu_integral(values, model: CompensatorModel, j: AtomicMeasure, t: float, support: MarkRegion,
                t0: float = 0.0, rtol: float = 1e-8, breaks=()) -> float:
    """``int_t0^t int values(s, z, j_{s-}) mu(ds dz)`` by adaptive quadrature between atoms.

    ``values(s, nodes, j_a)`` returns one value per mark node; ``j_a`` is the
    measure stopped at the left end of the current inter-atom piece.
    ``breaks`` are extra split points (discontinuities of the integrand in time).
    """
    support.require_away_from_zero()
    nodes, w = model.mark_nodes(support)
    if len(w) == 0 or t <= t0:
        return 0.0
    jt = restrict(j, t, StopMode.CLOSED)
    inner = np.concatenate([jt.times, np.asarray(breaks, dtype=float)])
    inner = inner[(inner > t0) & (inner < t)]
    pts = np.unique(np.concatenate([[t0], inner, [t]]))
    lam = model.intensity
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        ja = restrict(jt, a, StopMode.CLOSED)
        if isinstance(lam, PathDependent):
            rate_a = lam.a + lam.b * len(ja)
            rate = lambda s: rate_a  # noqa: E731
        else:
            rate = lambda s: float(lam.rate_at(s, ja))  # noqa: E731

        def g(s):
            tilt = model.tilt_factor(s, nodes) if model.tilts else 1.0
            return rate(s) * float(np.sum(w * tilt * values(s, nodes, ja)))

        val, _ = integrate.quad(g, a, b, epsabs=1e-13, epsrel=rtol, limit=200)
        total += val
    return total


def compensated_integral(psi, model: CompensatorModel, x, j: AtomicMeasure, t: float,
                         rtol: float = 1e-8) -> float:
    """``int_0^t int psi(s, y, x, j_{s-}) (j - mu)(ds dy)``.

    :class:`SimpleField` integrands use exact cell masses; other fields use
    adaptive quadrature between atom times.
    """
    if isinstance(psi, SimpleField):
        return psi.exact_integral(model, x, j, t)
    psi.support.require_away_from_zero()
    jt = restrict(j, t, StopMode.CLOSED)
    jumps = 0.0
    inside = psi.support.contains(jt.marks) if len(jt) else np.zeros(0, bool)
    for s, z in zip(jt.times[inside], jt.marks[inside]):
        jumps += float(psi.values(s, z[None, :], x, restrict(jt, s, StopMode.OPEN))[0])
    breaks = psi.breakpoints(jt) if psi.breakpoints is not None else ()
    comp = mu_integral(lambda s, z, ja: psi.values(s, z, x, ja), model, jt, t, psi.support, rtol=rtol,
                       breaks=breaks)
    return jumps - comp


def integral_functional(psi, model: CompensatorModel) -> Functional:
    """``F(t, x, j)`` = compensated integral of ``psi``; its jump derivative is ``psi``."""
    field_ = psi.as_field() if isinstance(psi, SimpleField) else psi
    return Functional(lambda t, x, j: compensated_integral(psi, model, x, j, t),
                      jump_derivative=lambda t, z, x, j: field_(t, z, x, j),
                      diffusion_derivative=lambda t, x, j: 0.0, name="compensated_integral")


# Vertical derivatives -------------------------------------------------------

def vertical_jump_derivative(F: Functional, t: float, z, x, j: AtomicMeasure, check: bool = False) -> float:
    """``F(t, x, j_{t-} + delta_(t, z)) - F(t, x, j_{t-})``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.linalg.norm(z) == 0:
        raise DomainError("marks live in R^d_0: zero mark rejected")
    base = restrict(j, t, StopMode.OPEN)
    value = float(F.evaluate(t, x, add_atom(base, t, z)) - F.evaluate(t, x, base))
    if check and F.jump_derivative is not None:
        closed = float(F.jump_derivative(t, z, x, base))
        if not np.isclose(value, closed, rtol=1e-9, atol=1e-9):
            raise NumericalError(f"closed jump derivative {closed} != pathwise {value}")
    return value


@dataclass(frozen=True)
class StepSchedule:
    h0: float = 1e-3
    rho: float = 0.5
    levels: int = 6

    def __post_init__(self):
        if not (self.h0 > 0 and 0 < self.rho < 1 and self.levels >= 1):
            raise DomainError("need h0 > 0, 0 < rho < 1, levels >= 1")

    @property
    def steps(self) -> np.ndarray:
        return self.h0 * self.rho ** np.arange(self.levels)


def _richardson(d: np.ndarray, rho: float):
    L = len(d)
    R = np.full((L, L), np.nan)
    R[:, 0] = d
    for k in range(1, L):
        f = rho ** k
        R[k:, k] = (R[k:, k - 1] - f * R[k - 1:-1, k - 1]) / (1.0 - f)
    diag = np.diag(R)
    if L == 1:
        return float(diag[0]), R
    best = 1 + int(np.argmin(np.abs(np.diff(diag))))
    return float(diag[best]), R


def vertical_diffusion_derivative(F: Functional, t: float, x: CadlagPath, j: AtomicMeasure,
                                  sched: StepSchedule = StepSchedule()):
    """One-sided bump derivative ``lim (F(t, x_t^h, j_t) - F(t, x_t, j_t)) / h``, ``h > 0``.

    Returns ``(value, tables)`` where ``tables[i]`` is the Richardson tableau
    for coordinate ``i`` (column 0 holds the raw quotients).
    """
    dims = 1 if x.values.ndim == 1 else x.values.shape[1]
    xt = x.stopped(t)
    f0 = float(F.evaluate(t, xt, j))
    if not np.isfinite(f0):
        raise NumericalError("non-finite functional value at h = 0")
    values, tables = np.empty(dims), []
    for axis in range(dims):
        quotients = []
        for h in sched.steps:
            fh = float(F.evaluate(t, xt.bumped(t, h, axis), j))
            if not np.isfinite(fh):
                raise NumericalError(f"non-finite functional value at h = {h}")
            quotients.append((fh - f0) / h)
        values[axis], tab = _richardson(np.array(quotients), sched.rho)
        tables.append(tab)
    return (float(values[0]) if dims == 1 else values), tables


def nabla_p(F: Functional, support: MarkRegion = EVERYWHERE) -> PredictableField:
    """Predictable field ``(t, z, x, j) -> vertical_jump_derivative(F, t, z, x, j_{t-})``."""

    def evaluate(t, z, x, j):
        z = np.atleast_2d(z)
        return np.array([vertical_jump_derivative(F, t, zz, x, j) for zz in z])

    return PredictableField(evaluate, support, f"nabla_p({F.name})")
