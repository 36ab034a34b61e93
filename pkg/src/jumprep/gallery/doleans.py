"""Stochastic exponential of a truncated compensated pure-jump process.

``X^n(t) = int_0^t int_{|z| > 1/n} z (J - mu)(ds dz)`` and ``E^n`` solves
``dE = E_- dX^n``:

    E^n_t = exp(-int_0^t int_{|z|>1/n} z mu(ds dz)) * prod_{s <= t, |z| > 1/n} (1 + z)

Its jump integrand is ``z E^n_{t-}`` and it has no diffusion part.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..compensator import CompensatorModel
from ..errors import DomainError
from ..functional import Functional, PredictableField
from ..measure import Annulus, AtomicMeasure, MarkRegion, StopMode, restrict


def band(n: float) -> MarkRegion:
    if not n >= 1:
        raise DomainError("truncation level n must be >= 1")
    return MarkRegion(Annulus(1.0 / n if np.isfinite(n) else 0.0, np.inf))


def drift_rate(model: CompensatorModel, n: float) -> float:
    """``int_{|z| > 1/n} z nu(dz)`` (first coordinate)."""
    z, w = model.mark_nodes(band(n))
    return float(np.sum(w * z[:, 0]))


def _retained(j: AtomicMeasure, n: float):
    keep = j.norms > (1.0 / n if np.isfinite(n) else 0.0)
    return j.times[keep], j.marks[keep, 0]


def exponential_value(model: CompensatorModel, j: AtomicMeasure, t: float, n: float = np.inf,
                      m: float | None = None) -> float:
    """Product formula for ``E^n_t``; ``m`` is a precomputed :func:`drift_rate`."""
    m = drift_rate(model, n) if m is None else m
    jt = restrict(j, t, StopMode.CLOSED)
    _, z = _retained(jt, n)
    return float(np.exp(-m * model.intensity.integral(0.0, t, jt)) * np.prod(1.0 + z))


def doleans_functional(model: CompensatorModel, n: float = np.inf) -> Functional:
    m, region = drift_rate(model, n), band(n)
    return Functional(lambda t, x, j: exponential_value(model, j, t, n, m),
                      jump_derivative=lambda t, z, x, j: float(np.atleast_1d(z)[0]) * region.contains(
                          np.atleast_2d(z))[0] * exponential_value(model, restrict(j, t, StopMode.OPEN), t, n, m),
                      diffusion_derivative=lambda t, x, j: 0.0, name=f"doleans_dade(n={n})")


def integrand_field(model: CompensatorModel, n: float = np.inf) -> PredictableField:
    """``(t, z) -> z E^n_{t-}`` on ``|z| > 1/n``."""

    m = drift_rate(model, n)

    def evaluate(t, z, x, j):
        e = exponential_value(model, restrict(j, t, StopMode.OPEN), t, n, m)
        return np.atleast_2d(z)[:, 0] * e

    return PredictableField(evaluate, band(n), "doleans_integrand")


@dataclass(frozen=True)
class DoleansPath:
    times: np.ndarray  # 0, retained atom times, T
    values: np.ndarray  # E^n right after each time
    left_values: np.ndarray  # E^n just before each retained atom
    sde_residual: float
    recursion_gap: float
    sign_change: bool


def doleans_dade(j: AtomicMeasure, model: CompensatorModel, n: float = np.inf) -> DoleansPath:
    """``E^n`` on its event times plus the SDE residual ``E_T - 1 - int E_- dX^n``.

    The SDE integral is assembled from the closed interjump solution
    ``int_a^b E m lambda ds = E(a) (1 - exp(-m Lambda(a, b)))``, computed by
    recursion independently of the product formula.
    """
    T = j.horizon
    m = drift_rate(model, n)
    ts, zs = _retained(j, n)
    lam = model.intensity
    prod = np.cumprod(np.concatenate([[1.0], 1.0 + zs]))
    cum = np.array([lam.integral(0.0, s, j) for s in ts])
    left = np.exp(-m * cum) * prod[:-1]
    final = float(np.exp(-m * lam.integral(0.0, T, j)) * prod[-1])
    # recursion oracle: E_{k+1} = E_k exp(-m Lambda_k) (1 + z_k)
    knots = np.concatenate([[0.0], ts, [T]])
    e, drift_part, rec_left = 1.0, 0.0, []
    for k in range(len(knots) - 1):
        decay = np.exp(-m * lam.integral(knots[k], knots[k + 1], j))
        drift_part += e * (1.0 - decay)
        e *= decay
        if k < len(ts):
            rec_left.append(e)
            e *= 1.0 + zs[k]
    jump_part = float(np.sum(zs * left))
    residual = final - 1.0 - (jump_part - drift_part)
    gap = max(abs(e - final), float(np.max(np.abs(np.asarray(rec_left) - left), initial=0.0)))
    values = np.concatenate([[1.0], left * (1.0 + zs), [final]])
    return DoleansPath(knots, values, left, float(residual), float(gap), bool(np.any(1.0 + zs <= 0)))


def batch_residual(model: CompensatorModel, n: float = np.inf):
    """Residual callback for the representation check (exact, grid-free)."""

    def fn(batch):
        jb = batch.jumps
        R = np.empty(jb.n_paths)
        Y = np.empty(jb.n_paths)
        for i in range(jb.n_paths):
            p = doleans_dade(jb.measure(i), model, n)
            R[i], Y[i] = p.sde_residual, p.values[-1]
        return R, Y

    return fn
