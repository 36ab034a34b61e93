"""Kunita-Watanabe hedge of an exponential claim in a jump-diffusion.

``X = sigma W + int z Jtilde`` with marks ``|z| <= 1`` (so ``X`` is a
martingale), claim ``H = c exp(X_T)`` and ``Y(t) = E[H | F_t] = c exp(X_t + kappa (T - t))``.
The variance-optimal ratio is

    psi(t) = (sigma^2 grad_x Y(t) + int z grad_j Y(t, z) nu(dz)) / (sigma^2 + int z^2 nu(dz)).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..compensator import PointMasses
from ..errors import DomainError
from ..functional import Functional, vertical_diffusion_derivative, vertical_jump_derivative
from ..measure import StopMode, restrict
from ..simulate import LevyParams
from ._paths import grid_view


@dataclass(frozen=True)
class KwCase:
    sigma: float
    mark_law: PointMasses | None = None
    horizon: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.mark_law is not None and np.any(np.abs(self.mark_law.marks[:, 0]) > 1.0):
            raise DomainError("marks must satisfy |z| <= 1 so that X is a martingale")
        if self.denominator <= 0:
            raise DomainError("sigma^2 + int z^2 nu(dz) must be positive")

    def moment(self, fn) -> float:
        if self.mark_law is None:
            return 0.0
        return float(np.sum(self.mark_law.weights * fn(self.mark_law.marks[:, 0])))

    @cached_property
    def denominator(self) -> float:
        return self.sigma ** 2 + self.moment(lambda z: z * z)

    @cached_property
    def kappa(self) -> float:
        return 0.5 * self.sigma ** 2 + self.moment(lambda z: np.expm1(z) - z)

    @cached_property
    def levy(self) -> LevyParams:
        return LevyParams(0.0, self.sigma, self.mark_law)

    @cached_property
    def ratio(self) -> float:
        """``psi(t) / Y(t-)`` for the exponential claim."""
        return (self.sigma ** 2 + self.moment(lambda z: z * np.expm1(z))) / self.denominator

    def levy_value(self, t, x, j) -> float:
        jt = restrict(j, t, StopMode.CLOSED)
        return float(x.value_at(t)) + float(jt.marks[:, 0].sum()) - self.levy.compensator_drift * t

    def value(self, t, x, j) -> float:
        return self.scale * float(np.exp(self.levy_value(t, x, j) + self.kappa * (self.horizon - t)))

    def functional(self) -> Functional:
        def jump(t, z, x, j):
            return self.value(t, x, restrict(j, t, StopMode.OPEN)) * float(np.expm1(np.atleast_1d(z)[0]))

        return Functional(self.value, jump_derivative=jump, diffusion_derivative=self.value, name="kw_claim")


def kw_hedge_ratio(case: KwCase, t: float, x, j, Y: Functional | None = None, numeric: bool = False) -> float:
    """Hedge ratio at ``t`` given path ``(x, j)``; ``numeric`` forces pathwise derivatives."""
    Y = case.functional() if Y is None else Y
    if Y.diffusion_derivative is not None and not numeric:
        gx = float(Y.diffusion_derivative(t, x, j))
    else:
        gx = float(vertical_diffusion_derivative(Y, t, x, j)[0])
    jump_part = 0.0
    if case.mark_law is not None:
        jm = restrict(j, t, StopMode.OPEN)
        for z, w in zip(case.mark_law.marks, case.mark_law.weights):
            if Y.jump_derivative is not None and not numeric:
                gj = float(Y.jump_derivative(t, z, x, jm))
            else:
                gj = vertical_jump_derivative(Y, t, z, x, j)
            jump_part += w * z[0] * gj
    return (case.sigma ** 2 * gx + jump_part) / case.denominator


@dataclass(frozen=True)
class ProbeIntegrand:
    """``xi(s) = a0 + a1 sin(omega s) + a2 tanh(X(s-))``."""
    a0: float
    a1: float
    a2: float
    omega: float

    def __call__(self, s, X_left):
        return self.a0 + self.a1 * np.sin(self.omega * s) + self.a2 * np.tanh(X_left)


def random_integrands(rng: np.random.Generator, k: int = 5):
    return [ProbeIntegrand(*rng.uniform(-1, 1, 3), rng.uniform(0.5, 6.0)) for _ in range(k)]


def _stoch_integral(case: KwCase, gv, batch, h_nodes, h_atoms):
    """``int h dX`` with left-point nodes for ``dx`` and the compensator."""
    n = batch.x.shape[0]
    dx = np.diff(batch.x, axis=1)
    c = case.levy.compensator_drift
    out = np.sum(h_nodes * dx, axis=1) - c * gv.dt * h_nodes.sum(axis=1)
    if len(gv.s):
        out += np.bincount(gv.path, h_atoms * gv.z, minlength=n)
    return out


def orthogonality_batch(case: KwCase, xis):
    """Per path ``(Y_T - Ytilde_T) * int xi dX`` for each test integrand."""

    def fn(batch):
        gv = grid_view(batch)
        grid = batch.grid
        T = case.horizon
        Yn = case.scale * np.exp(gv.X + case.kappa * (T - grid))
        Ya = case.scale * np.exp(gv.X_left + case.kappa * (T - gv.s))
        Y0 = case.scale * np.exp(case.kappa * T)
        hedge = Y0 + _stoch_integral(case, gv, batch, case.ratio * Yn[:, :-1], case.ratio * Ya)
        gap = Yn[:, -1] - hedge
        cols = []
        for xi in xis:
            M = _stoch_integral(case, gv, batch, xi(grid[:-1], gv.X[:, :-1]), xi(gv.s, gv.X_left))
            cols.append(gap * M)
        return np.stack(cols, axis=1)

    return fn


def batch_residual(case: KwCase):
    """``Y_T - Y_0 - int Y dx - int Y_-(e^z - 1) Jtilde`` per path."""

    def fn(batch):
        gv = grid_view(batch)
        grid, n = batch.grid, batch.x.shape[0]
        T = case.horizon
        Yn = case.scale * np.exp(gv.X + case.kappa * (T - grid))
        Ya = case.scale * np.exp(gv.X_left + case.kappa * (T - gv.s))
        Y0 = case.scale * np.exp(case.kappa * T)
        diff = np.sum(Yn[:, :-1] * np.diff(batch.x, axis=1), axis=1)
        c1 = case.moment(np.expm1)
        jumps = np.bincount(gv.path, Ya * np.expm1(gv.z), minlength=n) if len(gv.s) else np.zeros(n)
        comp = c1 * gv.dt * Yn[:, :-1].sum(axis=1)
        R = Yn[:, -1] - Y0 - diff - (jumps - comp)
        return R, Yn[:, -1]

    return fn
