"""Running supremum of a Levy process and its Laplace softsup.

``P(t) = E[Xbar_T | F_t] = Xbar_t + int_{Xbar_t - X_t}^inf S_{T-t}(u) du`` where
``S_tau(u) = P(Xbar_tau > u)`` is the tail of the supremum of a fresh copy
(``S = 1`` for ``u < 0``). Writing ``G_tau(u) = int_u^inf S_tau``,

    grad_x P(t)    = S_{T-t}(Xbar_t - X_t)
    grad_p P(t, z) = G(Xbar - X - z) - G(Xbar - X),  evaluated at t-.

The tail is tabulated from a pilot simulation on the same grid, so the
martingale is the one of the grid-monitored supremum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ..errors import DomainError
from ..measure import CadlagPath
from ..simulate import LevyParams, run_chunks, sample_levy_batch
from ._paths import grid_view


def softsup(path: CadlagPath, a: float, t: float) -> float:
    """``(1/a) log int_0^t exp(a f(s)) ds`` for the step path ``f``; stabilised around ``max f``."""
    if not t > 0:
        raise DomainError("softsup needs t > 0")
    if not a > 0:
        raise DomainError("softsup needs a > 0")
    lo, hi = path.times, np.concatenate([path.times[1:], [np.inf]])
    keep = lo < t
    vals = np.asarray(path.values, dtype=float).reshape(len(path.times), -1)[keep, 0]
    lens = np.minimum(hi[keep], t) - lo[keep]
    top = float(vals.max())
    mass = math.fsum(lens * np.exp(a * (vals - top)))
    # the integrand is at most exp(a * top): rounding cannot push the integral past t
    mass = min(mass, t)
    return top + math.log(mass) / a


def running_sup(path: CadlagPath, t: float) -> float:
    vals = np.asarray(path.values, dtype=float).reshape(len(path.times), -1)[:, 0]
    return float(vals[path.times <= t].max())


def softsup_grid(X: np.ndarray, dt: float, a: float) -> np.ndarray:
    """Row-wise softsup of step paths sampled on a uniform grid over ``[0, N dt]``."""
    v = a * X[:, :-1]
    return special.logsumexp(v, axis=1, b=dt) / a


@dataclass(frozen=True)
class TailTable:
    """``S[k, b] = P(Xbar_{k dt} > b du)``; ``clamped`` counts pilot maxima beyond the grid."""
    S: np.ndarray
    du: float
    dt: float
    clamped: int
    n_pilot: int

    def __post_init__(self):
        # G[k, b] = int_{b du}^inf S_k (piecewise linear S, zero past the table)
        seg = 0.5 * (self.S[:, 1:] + self.S[:, :-1]) * self.du
        G = np.zeros_like(self.S)
        G[:, :-1] = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
        object.__setattr__(self, "G", G)

    @property
    def u_max(self) -> float:
        return self.du * (self.S.shape[1] - 1)

    def _locate(self, u):
        r = np.clip(u, 0.0, self.u_max) / self.du
        b = np.minimum(r.astype(int), self.S.shape[1] - 2)
        return b, r - b

    def tail(self, k, u) -> np.ndarray:
        """``S_{k dt}(u)`` with ``S = 1`` for ``u < 0`` and ``0`` past the table."""
        k, u = np.broadcast_arrays(np.asarray(k), np.asarray(u, dtype=float))
        b, f = self._locate(u)
        s = (1 - f) * self.S[k, b] + f * self.S[k, b + 1]
        return np.where(u < 0, 1.0, np.where(u > self.u_max, 0.0, s))

    def antiderivative(self, k, u) -> np.ndarray:
        """``G_{k dt}(u) = int_u^inf S``."""
        k, u = np.broadcast_arrays(np.asarray(k), np.asarray(u, dtype=float))
        b, f = self._locate(u)
        s0, s1 = self.S[k, b], self.S[k, b + 1]
        # int_{b du}^{u} of the linear piece
        part = self.du * (f * s0 + 0.5 * f * f * (s1 - s0))
        g = self.G[k, b] - part
        return np.where(u < 0, self.G[k, 0] - u, np.where(u > self.u_max, 0.0, g))


@dataclass(frozen=True)
class SupremumCase:
    params: LevyParams
    horizon: float = 1.0
    n_steps: int = 2000
    du: float = 0.005
    u_max: float = 6.0
    reading: str = "running"  # or "terminal" (formula read with the terminal maximum)

    def __post_init__(self):
        if self.reading not in ("running", "terminal"):
            raise DomainError("reading must be 'running' or 'terminal'")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps


def grid_maxima(batch):
    """``(X, Xbar)`` at grid nodes and per-atom running max before the atom."""
    gv = grid_view(batch)
    X = gv.X
    n, N1 = X.shape
    cell_max = X[:, :-1].copy()
    post = gv.X_left + gv.z
    if len(post):
        np.maximum.at(cell_max, (gv.path, gv.cell), post)
    Xbar = np.empty_like(X)
    Xbar[:, 0] = X[:, 0]
    Xbar[:, 1:] = np.maximum(np.maximum.accumulate(cell_max, axis=1), X[:, 1:])
    # running max just before each atom: node max plus earlier atoms in the same cell
    m_left = Xbar[gv.path, gv.cell] if len(post) else np.empty(0)
    for i in np.flatnonzero((gv.path[1:] == gv.path[:-1]) & (gv.cell[1:] == gv.cell[:-1])) + 1:
        m_left[i] = max(m_left[i], m_left[i - 1], post[i - 1])
    return gv, X, Xbar, m_left


def build_tail_table(case: SupremumCase, n_pilot: int, seed: int, workers=None) -> TailTable:
    """Pilot estimate of ``S_tau(u)`` for every grid ``tau``; monotone in ``u`` and ``tau``."""
    N = case.n_steps
    nb = int(round(case.u_max / case.du))

    def chunk(gen, n, offset):
        batch = sample_levy_batch(case.params, N, case.horizon, gen, n)
        _, _, Xbar, _ = grid_maxima(batch)
        zero = Xbar <= 0
        idx = np.ceil(Xbar / case.du).astype(int) - 1
        clamped = int(np.count_nonzero(idx >= nb))
        idx = np.clip(idx, 0, nb)
        k = np.broadcast_to(np.arange(N + 1), Xbar.shape)
        pos = ~zero
        counts = np.bincount((k[pos] * (nb + 1) + idx[pos]), minlength=(N + 1) * (nb + 1))
        return counts.reshape(N + 1, nb + 1), zero.sum(axis=0), clamped

    parts = run_chunks(chunk, n_pilot, seed, workers)
    counts = sum(p[0] for p in parts)
    zeros = sum(p[1] for p in parts)
    clamped = sum(p[2] for p in parts)
    below = zeros[:, None] + np.concatenate([np.zeros((N + 1, 1)), np.cumsum(counts, axis=1)[:, :-1]], axis=1)
    S = 1.0 - below / n_pilot
    S = np.clip(S, 0.0, 1.0)
    S = -np.sort(-S, axis=1)  # monotone rearrangement in u
    S = np.maximum.accumulate(S, axis=0)  # and in tau
    return TailTable(S, case.du, case.dt, int(clamped), n_pilot)


def reflection_tail(u, tau, sigma):
    """``P(sup_{s <= tau} sigma W_s > u) = 2 (1 - Phi(u / (sigma sqrt(tau))))`` for ``u >= 0``."""
    u = np.asarray(u, dtype=float)
    return np.where(u < 0, 1.0, 2.0 * stats.norm.sf(u / (sigma * np.sqrt(tau))))


def batch_residual(case: SupremumCase, table: TailTable):
    """Representation residual of ``P`` per path and ``P(T) = Xbar_T``."""
    law = case.params.mark_law
    N = case.n_steps

    def fn(batch):
        gv, X, Xbar, m_left = grid_maxima(batch)
        n = X.shape[0]
        k = np.arange(N + 1)
        tau = N - k
        ref = Xbar if case.reading == "running" else Xbar[:, -1:]
        u = ref - X
        P0 = float(table.antiderivative(N, 0.0))
        PT = Xbar[:, -1]
        S_nodes = table.tail(tau[None, :-1], u[:, :-1])
        diff = np.sum(S_nodes * np.diff(batch.x, axis=1), axis=1)
        jumps = np.zeros(n)
        comp = np.zeros(n)
        if law is not None:
            if len(gv.s):
                ua = (m_left if case.reading == "running" else Xbar[gv.path, -1]) - gv.X_left
                ta = N - gv.cell
                ga = table.antiderivative(ta, ua - gv.z) - table.antiderivative(ta, ua)
                jumps = np.bincount(gv.path, ga, minlength=n)
            G0 = table.antiderivative(tau[None, :-1], u[:, :-1])
            for z, w in zip(law.nodes()[0][:, 0], law.nodes()[1]):
                comp += w * gv.dt * np.sum(table.antiderivative(tau[None, :-1], u[:, :-1] - z) - G0, axis=1)
        R = PT - P0 - diff - (jumps - comp)
        return R, PT

    return fn


def softsup_errors(case: SupremumCase, a_values, n_paths: int, seed: int, workers=None):
    """``E[(L^a(X, T) - max X)^2]`` over ``a`` on the grid-monitored paths."""

    def chunk(gen, n, offset):
        batch = sample_levy_batch(case.params, case.n_steps, case.horizon, gen, n)
        X = grid_view(batch).X
        top = X[:, :-1].max(axis=1)
        return np.stack([(softsup_grid(X, case.dt, a) - top) ** 2 for a in a_values], axis=1)

    e = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    return e.mean(axis=0), e.std(axis=0, ddof=1) / np.sqrt(len(e))
