"""Kella-Whitt martingale of a spectrally negative Levy process.

``X(t) = gamma t + sum y - t int_{-1 <= y < 0} y nu(dy)`` with marks ``y < 0``,
``Xbar`` its running maximum and ``Z = Xbar - X``. Then

    M(t) = psi(alpha) int_0^t exp(-alpha Z(s)) ds + 1 - exp(-alpha Z(t)) - alpha Xbar(t)

is a zero-mean martingale with jump integrand ``exp(-alpha Z(t-)) (1 - exp(alpha y))``.
Between jumps ``X`` is linear, so every quantity is integrated exactly per event.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from ..compensator import CompensatorModel, Constant, MarkLaw
from ..errors import DomainError, NumericalError
from ..functional import PredictableField
from ..measure import Annulus, MarkRegion, StopMode, restrict
from ..simulate import LevyParams, run_chunks, sample_prm_batch

MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class KellaWhittCase:
    gamma: float
    mark_law: MarkLaw
    alpha: float
    psi: float | None = None  # None: use the exponent formula
    n: float = np.inf  # keep marks with |y| > 1/n
    horizon: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        z, _ = self.mark_law.nodes()
        if np.any(z[:, 0] >= 0):
            raise DomainError("marks must be negative (spectrally negative process)")
        lo = float(z[:, 0].min())
        if 2 * self.alpha * abs(lo) > MAX_EXPONENT:
            raise NumericalError(f"exponential moment overflow: alpha |y| up to {self.alpha * abs(lo)}")

    @cached_property
    def region(self) -> MarkRegion:
        return MarkRegion(Annulus(1.0 / self.n if np.isfinite(self.n) else 0.0, np.inf))

    @cached_property
    def model(self) -> CompensatorModel:
        return CompensatorModel(self.mark_law, Constant(1.0))

    def _moment(self, fn, region=None) -> float:
        z, w = self.mark_law.nodes(self.region if region is None else region)
        return float(np.sum(w * fn(z[:, 0])))

    @cached_property
    def drift(self) -> float:
        """Slope of ``X`` between jumps (small band compensated)."""
        small = MarkRegion(Annulus(1.0 / self.n if np.isfinite(self.n) else 0.0, 1.0))
        return self.gamma - self._moment(lambda y: y, small)

    @cached_property
    def psi_formula(self) -> float:
        """Laplace exponent ``log E exp(alpha X(1))`` of the truncated process."""
        a = self.alpha
        return a * self.drift + self._moment(lambda y: np.expm1(a * y))

    @cached_property
    def psi_value(self) -> float:
        return self.psi_formula if self.psi is None else float(self.psi)

    @cached_property
    def jump_weight(self) -> float:
        """``int (1 - exp(alpha y)) nu(dy)``."""
        return self._moment(lambda y: -np.expm1(self.alpha * y))

    def truncated(self, n: float) -> "KellaWhittCase":
        return replace(self, n=n, psi=None)

    @property
    def levy(self) -> LevyParams:
        return LevyParams(self.gamma, 0.0, self.mark_law)


@dataclass(frozen=True)
class KwPath:
    A: float  # int_0^T exp(-alpha Z) ds
    B: float  # 1 - exp(-alpha Z(T)) - alpha Xbar(T)
    M: float
    jump_sum: float  # sum of integrand over atoms
    weights: np.ndarray  # exp(-alpha Z(s-)) at retained atoms
    bin_A: np.ndarray  # int over each time bin of exp(-alpha Z)

    def residual(self, case: KellaWhittCase) -> float:
        return self.M - (self.jump_sum - case.jump_weight * self.A)


def _segment(z0: float, D: float, g: float, a: float):
    """Integrate ``exp(-a Z)`` over a linear piece; returns (integral, Z_end, Xbar increment)."""
    if D <= 0:
        return 0.0, z0, 0.0
    if g > 0 and z0 <= g * D:
        s = z0 / g
        part = -math.expm1(-a * z0) / (a * g) if z0 > 0 else 0.0
        return part + (D - s), 0.0, g * (D - s)
    if g == 0:
        return D * math.exp(-a * z0), z0, 0.0
    # Z(s) = z0 - g s stays positive on the piece
    return math.exp(-a * z0) * math.expm1(a * g * D) / (a * g), z0 - g * D, 0.0


def kella_whitt_path(case: KellaWhittCase, times, marks, time_edges=None, upto: float | None = None) -> KwPath:
    """Exact event-based evaluation of ``M`` on ``[0, upto]``."""
    T = case.horizon if upto is None else upto
    a, g = case.alpha, case.drift
    psi = case.psi_value
    lo = 1.0 / case.n if np.isfinite(case.n) else 0.0
    keep = (np.abs(marks) > lo) & (times <= T)
    ts, ys = times[keep], marks[keep]
    edges = np.asarray([] if time_edges is None else time_edges, dtype=float)
    events = sorted([(float(s), 0, float(y)) for s, y in zip(ts, ys)] + [(float(e), 1, 0.0) for e in edges if 0 < e < T])
    nb = max(len(edges) - 1, 0)
    bin_A = np.zeros(nb)
    z, xbar, A, t = 0.0, 0.0, 0.0, 0.0
    jump_sum, weights = 0.0, []
    bin_idx = 0

    def advance(t_to):
        nonlocal z, xbar, A, t
        piece, z, dx = _segment(z, t_to - t, g, a)
        A += piece
        xbar += dx
        if nb and bin_idx < nb:
            bin_A[bin_idx] += piece
        t = t_to

    for s, kind, y in events + [(T, 2, 0.0)]:
        advance(s)
        if kind == 1:
            bin_idx += 1
        elif kind == 0:
            w = math.exp(-a * z)
            weights.append(w)
            jump_sum += -w * math.expm1(a * y)
            z -= y
    B = -math.expm1(-a * z) - a * xbar
    return KwPath(A, B, psi * A + B, jump_sum, np.asarray(weights), bin_A)


def integrand_field(case: KellaWhittCase) -> PredictableField:
    """``(t, y) -> exp(-alpha Z(t-)) (1 - exp(alpha y))``."""

    def evaluate(t, z, x, j):
        jm = restrict(j, t, StopMode.OPEN)
        zt = reflected_value(case, jm.times, jm.marks[:, 0], t)
        return -np.exp(-case.alpha * zt) * np.expm1(case.alpha * np.atleast_2d(z)[:, 0])

    return PredictableField(evaluate, case.region, "kella_whitt_integrand")


def reflected_value(case: KellaWhittCase, times, marks, t: float) -> float:
    """``Z(t)`` from atoms at or before ``t``."""
    lo = 1.0 / case.n if np.isfinite(case.n) else 0.0
    keep = (np.abs(marks) > lo) & (times <= t)
    z, s0 = 0.0, 0.0
    for s, y in zip(times[keep], marks[keep]):
        _, z, _ = _segment(z, s - s0, case.drift, case.alpha)
        z -= y
        s0 = s
    return _segment(z, t - s0, case.drift, case.alpha)[1]


def _chunk_paths(case: KellaWhittCase, gen, n, time_edges=None, cases=None):
    jb = sample_prm_batch(case.model, case.horizon, gen, n)
    out = []
    for i in range(n):
        a, b = jb.offsets[i], jb.offsets[i + 1]
        ts, ys = jb.times[a:b], jb.marks[a:b, 0]
        if cases is None:
            out.append(kella_whitt_path(case, ts, ys, time_edges))
        else:
            out.append([kella_whitt_path(c, ts, ys, time_edges) for c in cases])
    return jb, out


def calibrate_psi(case: KellaWhittCase, n_paths: int, seed: int, workers=None) -> float:
    """``psi`` solving ``E[M(T)] = 0``; ``M`` is affine in ``psi`` so one pass suffices."""

    def chunk(gen, n, offset):
        _, paths = _chunk_paths(case, gen, n)
        return np.array([[p.A, p.B] for p in paths])

    ab = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    return float(-ab[:, 1].mean() / ab[:, 0].mean())


def martingale_samples(case: KellaWhittCase, n_paths: int, seed: int, workers=None) -> np.ndarray:
    """``M(T)`` and the representation residual per path."""

    def chunk(gen, n, offset):
        _, paths = _chunk_paths(case, gen, n)
        return np.array([[p.M, p.residual(case)] for p in paths])

    return np.concatenate(run_chunks(chunk, n_paths, seed, workers))


def truncation_ladder(case: KellaWhittCase, levels, reference: float, n_paths: int, seed: int, workers=None):
    """``E[(M^n(T) - M^ref(T))^2]`` and its SE for each ``n`` on common paths."""
    cases = [case.truncated(n) for n in levels] + [case.truncated(reference)]

    def chunk(gen, n, offset):
        _, paths = _chunk_paths(case, gen, n, cases=cases)
        m = np.array([[p.M for p in row] for row in paths])
        return (m[:, :-1] - m[:, -1:]) ** 2

    d2 = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    return d2.mean(axis=0), d2.std(axis=0, ddof=1) / np.sqrt(len(d2))


def batch_residual(case: KellaWhittCase):
    def fn(batch):
        jb = batch.jumps
        R, Y = np.empty(jb.n_paths), np.empty(jb.n_paths)
        for i in range(jb.n_paths):
            a, b = jb.offsets[i], jb.offsets[i + 1]
            p = kella_whitt_path(case, jb.times[a:b], jb.marks[a:b, 0])
            R[i], Y[i] = p.residual(case), p.M
        return R, Y

    return fn


def bin_statistics(case: KellaWhittCase, time_edges, mark_bins):
    """Per-path ``(Y(T) - Y(0), J(b), mu(b), int_b psi dmu)`` for regression bins.

    ``mark_bins`` are :class:`Interval` cells; bins are time bin x mark bin.
    """
    time_edges = np.asarray(time_edges, dtype=float)
    regions = [MarkRegion(c) for c in mark_bins]
    nu_b = np.array([case.mark_law.mass(r) for r in regions])
    wpsi = np.array([case._moment(lambda y: -np.expm1(case.alpha * y), r) for r in regions])
    dt = np.diff(time_edges)

    def fn(gen, n, offset):
        jb, paths = _chunk_paths(case, gen, n, time_edges)
        nt, nm = len(dt), len(regions)
        Y = np.array([p.M for p in paths])
        counts = np.zeros((n, nt, nm))
        for i in range(n):
            a, b = jb.offsets[i], jb.offsets[i + 1]
            ts, ys = jb.times[a:b], jb.marks[a:b]
            ti = np.searchsorted(time_edges, ts, side="left") - 1
            for k, r in enumerate(regions):
                hit = r.contains(ys) & (ti >= 0) & (ti < nt)
                np.add.at(counts[i, :, k], ti[hit], 1)
        mass = np.broadcast_to(dt[:, None] * nu_b[None, :], (n, nt, nm)).copy()
        bin_A = np.array([p.bin_A for p in paths])
        closed = bin_A[:, :, None] * wpsi[None, None, :]
        return Y, counts, mass, closed

    return fn
