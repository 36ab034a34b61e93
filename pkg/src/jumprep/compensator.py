"""Predictable compensators ``mu(ds dz, j) = theta(s, z) lambda(s, j_{s-}) ds nu(dz)``.

Three intensity families are provided: constant, deterministic in time, and
counting feedback ``a + b * j([0, s) x R^d_0)``. Marks follow a
:class:`PointMasses` or :class:`DensityTable` law. Tilts multiply the
compensator by a bounded positive function.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigurationError, DomainError
from .measure import EVERYWHERE, AtomicMeasure, MarkRegion

GAUSS_NODES = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GAUSS_NODES)


# Mark laws ------------------------------------------------------------------

class PointMasses:
    """``nu = sum_k w_k delta_{z_k}`` with ``w_k > 0`` and ``z_k != 0``."""

    kind = "point_masses"

    def __init__(self, marks, weights):
        weights = np.asarray(weights, dtype=float).reshape(-1)
        marks = np.asarray(marks, dtype=float).reshape(len(weights), -1)
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise DomainError("point-mass weights must be positive and finite")
        if np.any(np.linalg.norm(marks, axis=1) == 0):
            raise DomainError("mark law must not charge 0")
        self.marks = marks
        self.weights = weights

    @property
    def dim(self) -> int:
        return self.marks.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def z_min(self) -> float:
        return float(np.linalg.norm(self.marks, axis=1).min())

    def nodes(self, region: MarkRegion = EVERYWHERE):
        keep = region.contains(self.marks)
        return self.marks[keep], self.weights[keep]

    def mass(self, region: MarkRegion = EVERYWHERE) -> float:
        return float(self.weights[region.contains(self.marks)].sum())

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights / self.total)
        return self.marks[idx]

    def reweighted(self, factor: np.ndarray) -> "PointMasses":
        return PointMasses(self.marks, self.weights * factor)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "marks": self.marks.tolist(), "weights": self.weights.tolist()}

    def __eq__(self, other):
        return (isinstance(other, PointMasses) and np.array_equal(self.marks, other.marks)
                and np.array_equal(self.weights, other.weights))


class DensityTable:
    """Scalar mark law with piecewise-constant density on ``edges``.

    Bins carrying positive density must not touch 0. Mark integrals use
    Gauss-Legendre nodes per bin; sampling uses the inverse CDF.
    """

    kind = "density_table"

    def __init__(self, edges, density):
        edges = np.asarray(edges, dtype=float)
        density = np.asarray(density, dtype=float)
        if edges.ndim != 1 or len(edges) != len(density) + 1 or np.any(np.diff(edges) <= 0):
            raise DomainError("edges must be increasing with len(density) + 1 entries")
        if np.any(density < 0) or not np.all(np.isfinite(edges)):
            raise DomainError("density must be non-negative on a bounded interval")
        touches = (edges[:-1] <= 0) & (edges[1:] >= 0) & (density > 0)
        if np.any(touches):
            raise DomainError("density table must vanish near 0")
        self.edges = edges
        self.density = density
        self._bin_mass = density * np.diff(edges)
        self._cdf = np.concatenate([[0.0], np.cumsum(self._bin_mass)])

    dim = 1

    @property
    def total(self) -> float:
        return float(self._cdf[-1])

    @property
    def z_min(self) -> float:
        lo, hi = self.edges[:-1][self.density > 0], self.edges[1:][self.density > 0]
        return float(np.minimum(np.abs(lo), np.abs(hi)).min())

    def nodes(self, region: MarkRegion = EVERYWHERE, splits=()):
        """Gauss nodes per bin and region piece; ``splits`` adds breakpoints (e.g. tilt edges)."""
        splits = np.asarray(splits, dtype=float)
        zs, ws = [], []
        for a, b, d in zip(self.edges[:-1], self.edges[1:], self.density):
            if d == 0:
                continue
            for cell in region.cells:
                for lo, hi in cell.signed_bounds():
                    u, v = max(a, lo), min(b, hi)
                    if not v > u:
                        continue
                    pts = np.concatenate([[u], np.sort(splits[(splits > u) & (splits < v)]), [v]])
                    for p, q in zip(pts[:-1], pts[1:]):
                        half = 0.5 * (q - p)
                        zs.append(p + half * (_GL_X + 1.0))
                        ws.append(d * half * _GL_W)
        if not zs:
            return np.empty((0, 1)), np.empty(0)
        return np.concatenate(zs)[:, None], np.concatenate(ws)

    def mass(self, region: MarkRegion = EVERYWHERE) -> float:
        _, w = self.nodes(region)
        return float(w.sum())

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n) * self.total
        k = np.clip(np.searchsorted(self._cdf, u, side="right") - 1, 0, len(self.density) - 1)
        frac = (u - self._cdf[k]) / np.where(self._bin_mass[k] > 0, self._bin_mass[k], 1.0)
        z = self.edges[k] + frac * (self.edges[k + 1] - self.edges[k])
        return z[:, None]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "edges": self.edges.tolist(), "density": self.density.tolist()}

    def __eq__(self, other):
        return (isinstance(other, DensityTable) and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.density, other.density))


MarkLaw = PointMasses | DensityTable


def mark_law_from_dict(d: dict) -> MarkLaw:
    if d["kind"] == "point_masses":
        return PointMasses(d["marks"], d["weights"])
    if d["kind"] == "density_table":
        return DensityTable(d["edges"], d["density"])
    raise ConfigurationError(f"unknown mark law kind {d['kind']!r}")


# Intensities ----------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    rate: float
    kind = "constant"

    def __post_init__(self):
        if self.rate < 0:
            raise DomainError("intensity must be non-negative")

    def rate_at(self, s, j: AtomicMeasure):
        return np.full(np.shape(s), self.rate)

    def integral(self, t0: float, t1: float, j: AtomicMeasure) -> float:
        return self.rate * (t1 - t0)

    def bound(self, horizon: float) -> float:
        return self.rate

    def breakpoints(self, t0, t1, j):
        return np.array([t0, t1])

    def scaled(self, c: float) -> "Constant":
        return Constant(self.rate * c)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Deterministic:
    """Time-dependent rate ``lambda(t)``; ``antiderivative`` makes masses exact."""
    fn: Callable
    upper: float
    antiderivative: Optional[Callable] = None
    spec: Optional[dict] = None
    kind = "deterministic"

    def rate_at(self, s, j: AtomicMeasure):
        return np.asarray(self.fn(np.asarray(s, dtype=float)), dtype=float) * np.ones(np.shape(s))

    def integral(self, t0: float, t1: float, j: AtomicMeasure) -> float:
        if t1 <= t0:
            return 0.0
        if self.antiderivative is not None:
            return float(self.antiderivative(t1) - self.antiderivative(t0))
        val, _ = integrate.quad(lambda s: float(self.fn(s)), t0, t1, epsabs=0.0, epsrel=1e-12, limit=200)
        return float(val)

    def bound(self, horizon: float) -> float:
        return self.upper

    def breakpoints(self, t0, t1, j):
        return np.array([t0, t1])

    def scaled(self, c: float) -> "Deterministic":
        fn, anti = self.fn, self.antiderivative
        spec = None if self.spec is None else {**self.spec, "scale": self.spec.get("scale", 1.0) * c}
        return Deterministic(lambda s: c * fn(s), self.upper * c,
                             None if anti is None else (lambda s: c * anti(s)), spec)

    def to_dict(self) -> dict:
        if self.spec is None:
            raise ConfigurationError("callable intensity has no JSON form")
        return dict(self.spec)

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], horizon: float, scale: float = 1.0) -> "Deterministic":
        p = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float) * scale)
        grid = np.linspace(0.0, horizon, 4097)
        vals = p(grid)
        if vals.min() < 0:
            raise DomainError("polynomial intensity must be non-negative on [0, T]")
        crit = [r.real for r in p.deriv().roots() if abs(r.imag) < 1e-12 and 0 <= r.real <= horizon]
        upper = float(max([vals.max()] + [p(c) for c in crit]))
        anti = p.integ()
        return cls(p, upper, anti, {"kind": "polynomial", "coeffs": list(map(float, coeffs)),
                                    "horizon": horizon, "scale": scale})

    @classmethod
    def sinusoid(cls, level: float, amplitude: float, freq: float, scale: float = 1.0) -> "Deterministic":
        if level < abs(amplitude):
            raise DomainError("sinusoid intensity needs level >= |amplitude|")
        a, b, w = level * scale, amplitude * scale, freq
        return cls(lambda s: a + b * np.sin(w * s), a + abs(b),
                   lambda s: a * s - b * np.cos(w * s) / w,
                   {"kind": "sinusoid", "level": level, "amplitude": amplitude, "freq": freq, "scale": scale})


@dataclass(frozen=True)
class PathDependent:
    """Counting feedback ``lambda(s) = a + b * j([0, s) x R^d_0)``."""
    a: float
    b: float
    kind = "path_dependent"

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise DomainError("feedback intensity needs a, b >= 0")

    def rate_at(self, s, j: AtomicMeasure):
        return self.a + self.b * np.searchsorted(j.times, np.asarray(s, dtype=float), side="left")

    def knots(self, j: AtomicMeasure, t_end: float):
        """Knot times, cumulative mass at knots and segment rates of ``int_0^t lambda``."""
        ts = np.unique(j.times[j.times < t_end])
        knots = np.concatenate([[0.0], ts[ts > 0], [t_end]])
        # inside a segment the rate sees exactly the atoms at or before its left knot
        rates = self.a + self.b * np.searchsorted(j.times, knots[:-1], side="right")
        cum = np.concatenate([[0.0], np.cumsum(rates * np.diff(knots))])
        return knots, cum, rates

    def integral(self, t0: float, t1: float, j: AtomicMeasure) -> float:
        if t1 <= t0:
            return 0.0
        ts = j.times[(j.times > t0) & (j.times < t1)]
        pts = np.concatenate([[t0], ts, [t1]])
        rates = self.a + self.b * np.searchsorted(j.times, pts[:-1], side="right")
        return float(np.sum(rates * np.diff(pts)))

    def bound(self, horizon: float) -> float:
        return np.inf if self.b > 0 else self.a

    def breakpoints(self, t0, t1, j):
        ts = j.times[(j.times > t0) & (j.times < t1)]
        return np.unique(np.concatenate([[t0], ts, [t1]]))

    def scaled(self, c: float) -> "PathDependent":
        return PathDependent(self.a * c, self.b * c)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}


Intensity = Constant | Deterministic | PathDependent


def intensity_from_dict(d: dict, horizon: float = 1.0) -> Intensity:
    kind = d["kind"]
    if kind == "constant":
        return Constant(float(d["rate"]))
    if kind == "path_dependent":
        return PathDependent(float(d["a"]), float(d["b"]))
    if kind == "polynomial":
        return Deterministic.polynomial(d["coeffs"], float(d.get("horizon", horizon)), float(d.get("scale", 1.0)))
    if kind == "sinusoid":
        return Deterministic.sinusoid(float(d["level"]), float(d["amplitude"]), float(d["freq"]),
                                      float(d.get("scale", 1.0)))
    raise ConfigurationError(f"unknown intensity kind {kind!r}")


# Tilts ----------------------------------------------------------------------

@dataclass(frozen=True)
class TiltSpec:
    """Bounded multiplier ``theta(t, z)`` with ``0 < lower <= theta <= upper``.

    ``kind`` is ``"constant"`` (``value``), ``"mark_step"`` (piecewise constant
    in the first mark coordinate over ``edges``, 1 outside) or ``"function"``
    (``fn(t, z)`` vectorised; set ``mark_only`` if it ignores ``t``).
    """
    kind: str
    value: float = 1.0
    edges: tuple = ()
    values: tuple = ()
    fn: Optional[Callable] = None
    lower: float = 1.0
    upper: float = 1.0
    mark_only: bool = False

    def __post_init__(self):
        if self.kind == "constant":
            object.__setattr__(self, "lower", self.value)
            object.__setattr__(self, "upper", self.value)
        elif self.kind == "mark_step":
            vals = tuple(float(v) for v in self.values)
            if len(self.edges) != len(vals) + 1:
                raise DomainError("mark_step tilt needs len(edges) == len(values) + 1")
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "lower", min(vals + (1.0,)))
            object.__setattr__(self, "upper", max(vals + (1.0,)))
            object.__setattr__(self, "mark_only", True)
        elif self.kind != "function":
            raise DomainError(f"unknown tilt kind {self.kind!r}")
        if not self.lower > 0:
            raise DomainError("tilt must be bounded away from 0")
        if not np.isfinite(self.upper):
            raise DomainError("tilt must be bounded above")

    @classmethod
    def constant(cls, value: float) -> "TiltSpec":
        return cls("constant", value=float(value))

    @classmethod
    def mark_step(cls, edges, values) -> "TiltSpec":
        return cls("mark_step", edges=tuple(float(e) for e in edges), values=tuple(values))

    @classmethod
    def function(cls, fn, lower, upper, mark_only=False) -> "TiltSpec":
        return cls("function", fn=fn, lower=float(lower), upper=float(upper), mark_only=mark_only)

    def __call__(self, t, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        z1 = z[..., 0] if z.ndim >= 2 else z
        if self.kind == "constant":
            return np.full(np.broadcast(np.asarray(t), z1).shape, self.value)
        if self.kind == "mark_step":
            edges = np.asarray(self.edges)
            k = np.searchsorted(edges, z1, side="left") - 1
            inside = (k >= 0) & (k < len(self.values))
            vals = np.asarray(self.values)[np.clip(k, 0, len(self.values) - 1)]
            out = np.where(inside, vals, 1.0)
            return out * np.ones(np.broadcast(np.asarray(t), z1).shape)
        return np.asarray(self.fn(t, z), dtype=float)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "mark_step":
            return {"kind": "mark_step", "edges": list(self.edges), "values": list(self.values)}
        raise ConfigurationError("function tilt has no JSON form")

    @classmethod
    def from_dict(cls, d: dict) -> "TiltSpec":
        if d["kind"] == "constant":
            return cls.constant(d["value"])
        if d["kind"] == "mark_step":
            return cls.mark_step(d["edges"], d["values"])
        raise ConfigurationError(f"unknown tilt kind {d['kind']!r}")


# Model ----------------------------------------------------------------------

@dataclass(frozen=True)
class CompensatorModel:
    mark_law: MarkLaw
    intensity: Intensity
    mark_tilts: tuple = ()  # mark-only TiltSpecs
    tilts: tuple = ()  # general (t, z) TiltSpecs

    @property
    def dim(self) -> int:
        return self.mark_law.dim

    @property
    def separable(self) -> bool:
        return not self.tilts

    def mark_nodes(self, region: MarkRegion = EVERYWHERE):
        """Quadrature nodes/weights for ``theta_mark(z) nu(dz)`` restricted to ``region``."""
        if isinstance(self.mark_law, DensityTable):
            steps = [e for t in self.mark_tilts + self.tilts if t.kind == "mark_step" for e in t.edges]
            z, w = self.mark_law.nodes(region, steps)
        else:
            z, w = self.mark_law.nodes(region)
        for th in self.mark_tilts:
            w = w * th(0.0, z)
        return z, w

    def mark_mass(self, region: MarkRegion = EVERYWHERE) -> float:
        return float(self.mark_nodes(region)[1].sum())

    def tilt_factor(self, s, z) -> np.ndarray:
        out = 1.0
        for th in self.tilts:
            out = out * th(s, z)
        return out

    def time_pieces(self, j: AtomicMeasure, t0: float, t1: float) -> np.ndarray:
        return self.intensity.breakpoints(t0, t1, j)

    def to_dict(self) -> dict:
        d = {"intensity": self.intensity.to_dict(), "mark_law": self.mark_law.to_dict()}
        tilts = [t.to_dict() for t in self.mark_tilts + self.tilts]
        if tilts:
            d["tilts"] = tilts
        return d

    @classmethod
    def from_dict(cls, d: dict, horizon: float = 1.0) -> "CompensatorModel":
        model = cls(mark_law_from_dict(d["mark_law"]), intensity_from_dict(d["intensity"], horizon))
        for t in d.get("tilts", []):
            model = tilt(model, TiltSpec.from_dict(t))
        return model


def _check_window(j: AtomicMeasure, t0: float, t1: float) -> None:
    if not 0.0 <= t0 <= t1 <= j.horizon + 1e-12:
        raise DomainError(f"invalid window ({t0}, {t1}) for horizon {j.horizon}")


def _general_mass(model: CompensatorModel, j: AtomicMeasure, t0: float, t1: float, region: MarkRegion) -> float:
    z, w = model.mark_nodes(region)
    if len(w) == 0:
        return 0.0
    total = 0.0
    pts = model.time_pieces(j, t0, t1)
    lam = model.intensity
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        if isinstance(lam, PathDependent):
            rate = lam.a + lam.b * np.searchsorted(j.times, a, side="right")
            g = lambda s: rate * float(np.sum(w * model.tilt_factor(s, z)))  # noqa: E731
        else:
            g = lambda s: float(lam.rate_at(s, j)) * float(np.sum(w * model.tilt_factor(s, z)))  # noqa: E731
        val, _ = integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
    return float(total)


def compensator_mass(model: CompensatorModel, j: AtomicMeasure, t0: float, t1: float,
                     region: MarkRegion = EVERYWHERE, x=None) -> float:
    """``mu((t0, t1] x region, j)``; uses only atoms strictly before each time."""
    _check_window(j, t0, t1)
    region.require_away_from_zero() if region is not EVERYWHERE else None
    if t1 == t0:
        return 0.0
    if model.separable:
        nu = model.mark_mass(region)
        if nu == 0.0:
            return 0.0
        return model.intensity.integral(t0, t1, j) * nu
    return _general_mass(model, j, t0, t1, region)


def hitting_time(model: CompensatorModel, j: AtomicMeasure, region: MarkRegion, eps: float):
    """``inf{t : mu([0, t] x region) >= eps}`` as ``(t, reached)``; ``(T, False)`` if never reached."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    t, reached = hitting_times(model, j, region, np.array([eps]))
    return float(t[0]), bool(reached[0])


def hitting_times(model: CompensatorModel, j: AtomicMeasure, region: MarkRegion, levels):
    """Vectorised :func:`hitting_time` over mass ``levels`` (levels <= 0 give t = 0)."""
    region.require_away_from_zero()
    levels = np.asarray(levels, dtype=float)
    T = j.horizon
    total = compensator_mass(model, j, 0.0, T, region)
    reached = levels <= total
    out = np.full(levels.shape, T)
    out[levels <= 0] = 0.0
    todo = reached & (levels > 0)
    if not todo.any():
        return out, reached
    lam = model.intensity
    if model.separable:
        nu = model.mark_mass(region)
        target = levels[todo] / nu
        if isinstance(lam, Constant):
            out[todo] = np.minimum(target / lam.rate, T)
            return out, reached
        if isinstance(lam, PathDependent):
            knots, cum, rates = lam.knots(j, T)
            k = np.searchsorted(cum, target, side="left")
            k = np.clip(k, 1, len(knots) - 1)
            out[todo] = np.minimum(knots[k - 1] + (target - cum[k - 1]) / rates[k - 1], T)
            return out, reached
        f = lambda s, L: lam.integral(0.0, s, j) - L  # noqa: E731
    else:
        f = lambda s, L: _general_mass(model, j, 0.0, s, region) - L  # noqa: E731
        target = levels[todo]
    roots = []
    for L in target:
        if f(0.0, L) >= 0:
            roots.append(0.0)
            continue
        r = optimize.brentq(f, 0.0, T, args=(L,), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        roots.append(r)
    out[todo] = roots
    return out, reached


def tilt(model: CompensatorModel, spec: TiltSpec) -> CompensatorModel:
    """Compensator ``theta(t, z) mu(dt dz)``."""
    if not spec.lower > 0:
        raise DomainError("tilt must be bounded away from 0")
    if spec.kind == "constant":
        if spec.value == 1.0:
            return model
        return replace(model, intensity=model.intensity.scaled(spec.value))
    if spec.mark_only:
        if isinstance(model.mark_law, PointMasses):
            factor = spec(0.0, model.mark_law.marks)
            return replace(model, mark_law=model.mark_law.reweighted(factor))
        return replace(model, mark_tilts=model.mark_tilts + (spec,))
    return replace(model, tilts=model.tilts + (spec,))
