"""Approximation of random fields by simple predictable ones on random partitions.

For a mark cell ``K`` the level-``n`` partition is

    t_i = inf{t : mu([0, t] x K) >= i 2^-n} ^ T ^ inf{t : mu([0, t] x K) >= 2^n},

``i = 0 .. 2^(2n)`` (levels past the ``2^n`` cap are pinned). ``A`` averages
``f`` over the previous cell and paints the current one; ``B`` paints the
same cell. Averages are quadratures against the compensator, not Monte Carlo.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .compensator import GAUSS_NODES, CompensatorModel, PathDependent, hitting_times
from .errors import DomainError
from .measure import AtomicMeasure, MarkRegion
from .simulate import run_chunks, sample_prm_batch

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GAUSS_NODES)


@dataclass(frozen=True)
class RandomPartition:
    times: np.ndarray
    level: int
    region: MarkRegion
    saturated: np.ndarray  # pinned at T or at the mass cap

    @property
    def cells(self):
        return list(zip(self.times[:-1], self.times[1:]))


def random_partition(model: CompensatorModel, j: AtomicMeasure, K, n: int) -> RandomPartition:
    if n < 1:
        raise DomainError("partition level n must be >= 1")
    region = K if isinstance(K, MarkRegion) else MarkRegion(K)
    cap = 2.0 ** n
    levels = np.arange(2 ** (2 * n) + 1) * 2.0 ** (-n)
    t, reached = hitting_times(model, j, region, levels)
    t_cap, cap_reached = hitting_times(model, j, region, np.array([cap]))
    t = np.minimum(t, t_cap[0])
    t = np.maximum.accumulate(t)
    saturated = ~reached | (cap_reached[0] & (t >= t_cap[0]) & (levels > cap))
    return RandomPartition(t, n, region, saturated)


@dataclass(frozen=True)
class RandomField:
    """``f(t, z, j)`` vectorised: ``t`` of shape ``(p,)``, ``z`` of shape ``(q, d)`` → ``(p, q)``."""
    evaluate: Callable
    bound: Optional[float] = None

    def __call__(self, t, z, j):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.asarray(self.evaluate(t, z, j), dtype=float) * np.ones((len(t), len(z)))

    def clipped(self, N: float) -> "RandomField":
        """``f 1_{|f| <= N}``."""
        def ev(t, z, j):
            v = self(t, z, j)
            return np.where(np.abs(v) <= N, v, 0.0)
        return RandomField(ev, N)


def _time_grid(model: CompensatorModel, j: AtomicMeasure, knots):
    """Gauss nodes, ``lambda``-weights and owning knot interval over ``[knots[0], knots[-1]]``.

    Pieces are split at the knots and wherever ``lambda`` jumps, so every node
    is interior to a piece on which the rate is smooth.
    """
    knots = np.asarray(knots, dtype=float)
    pts = np.unique(np.concatenate([knots, model.time_pieces(j, knots[0], knots[-1])]))
    u, v = pts[:-1], pts[1:]
    keep = v > u
    u, v = u[keep], v[keep]
    half = 0.5 * (v - u)
    tn = (u[:, None] + half[:, None] * (_GL_X + 1.0)).ravel()
    tw = (half[:, None] * _GL_W).ravel() * model.intensity.rate_at(tn, j)
    owner = np.repeat(np.searchsorted(knots, u, side="right") - 1, len(_GL_X))
    return tn, tw, owner


def _weights(model, tn, tw, region):
    zn, zw = model.mark_nodes(region)
    w = tw[:, None] * zw[None, :]
    if model.tilts and len(tn):
        w = w * model.tilt_factor(tn[:, None], zn[None, :, :])
    return zn, w


def _averages(f: RandomField, model, j, part: RandomPartition):
    """Per time cell: mu-mass, mu-average of f, max |f| at the nodes."""
    n_cells = len(part.times) - 1
    avg, mass, fmax = np.zeros(n_cells), np.zeros(n_cells), np.zeros(n_cells)
    if part.times[-1] <= part.times[0]:
        return avg, mass, fmax
    tn, tw, owner = _time_grid(model, j, part.times)
    zn, w = _weights(model, tn, tw, part.region)
    if not len(zn):
        return avg, mass, fmax
    v = f(tn, zn, j)
    mass = np.bincount(owner, w.sum(axis=1), minlength=n_cells)
    total = np.bincount(owner, (w * v).sum(axis=1), minlength=n_cells)
    np.maximum.at(fmax, owner, np.abs(v).max(axis=1))
    pos = mass > 0
    avg[pos] = total[pos] / mass[pos]  # 0/0 = 0
    fmax[~pos] = 0.0
    return avg, mass, fmax


@dataclass(frozen=True)
class CellField:
    """Piecewise-constant field: ``values[k][i]`` on ``(times[k][i], times[k][i+1]] x cells[k]``."""
    cells: tuple
    times: tuple
    values: tuple

    def __call__(self, t, z) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.zeros((len(t), len(z)))
        for cell, ts, vs in zip(self.cells, self.times, self.values):
            inside = MarkRegion(cell).contains(z) if not isinstance(cell, MarkRegion) else cell.contains(z)
            i = np.searchsorted(ts, t, side="left") - 1
            ok = (i >= 0) & (i < len(vs))
            col = np.where(ok, np.asarray(vs)[np.clip(i, 0, len(vs) - 1)], 0.0)
            out[:, inside] = col[:, None]
        return out


def _as_region(c) -> MarkRegion:
    return c if isinstance(c, MarkRegion) else MarkRegion(c)


def apply_A(f: RandomField, cells, n: int, model: CompensatorModel, j: AtomicMeasure):
    """One-step-lag average: on ``(t_i, t_{i+1}]`` the mu-average of ``f`` over ``(t_{i-1}, t_i]``.

    Returns ``(CellField, sup_ok)``; ``sup_ok`` checks ``|A f| <= max |f|`` at the quadrature nodes.
    """
    times, values, ok = [], [], True
    for c in cells:
        part = random_partition(model, j, _as_region(c), n)
        avg, mass, fmax = _averages(f, model, j, part)
        lagged = np.concatenate([[0.0], avg[:-1]])
        times.append(part.times)
        values.append(lagged)
        ok &= bool(np.all(np.abs(avg) <= fmax * (1 + 1e-12)))
    return CellField(tuple(cells), tuple(times), tuple(values)), ok


def apply_B(f: RandomField, cells, n: int, model: CompensatorModel, j: AtomicMeasure) -> CellField:
    """Same-cell mu-average (anticipative)."""
    times, values = [], []
    for c in cells:
        part = random_partition(model, j, _as_region(c), n)
        avg, _, _ = _averages(f, model, j, part)
        times.append(part.times)
        values.append(avg)
    return CellField(tuple(cells), tuple(times), tuple(values))


def _quadrature_set(cells, model: CompensatorModel, j: AtomicMeasure, breaks=()) -> list:
    """``(t, z, w)`` node sets of ``mu`` over ``[0, T] x cell`` for each cell, split at ``breaks``."""
    T = j.horizon
    knots = np.unique(np.concatenate([[0.0, T], np.asarray(breaks, dtype=float)]))
    knots = knots[(knots >= 0) & (knots <= T)]
    tn, tw, _ = _time_grid(model, j, knots)
    out = []
    for c in cells:
        zn, w = _weights(model, tn, tw, _as_region(c))
        if len(tn) and len(zn):
            out.append((tn, zn, w))
    return out


def l2_mu(g: Callable, cells, model: CompensatorModel, j: AtomicMeasure, breaks=()) -> float:
    """``int_0^T int_{cells} g^2 dmu`` for ``g(t, z) -> (p, q)``; ``breaks`` are extra time knots."""
    return float(sum(np.sum(w * g(tn, zn) ** 2) for tn, zn, w in _quadrature_set(cells, model, j, breaks)))


def _breaks(field: CellField):
    return np.concatenate([np.asarray(t) for t in field.times]) if field.times else np.empty(0)


def path_errors(f: RandomField, cells, n: int, model: CompensatorModel, j: AtomicMeasure):
    """``(||A f - f||^2, ||A f||^2, ||f||^2, sup_ok)`` on one path."""
    A, ok = apply_A(f, cells, n, model, j)
    err = nA = nf = 0.0
    for tn, zn, w in _quadrature_set(cells, model, j, _breaks(A)):
        a, v = A(tn, zn), f(tn, zn, j)
        err += float(np.sum(w * (a - v) ** 2))
        nA += float(np.sum(w * a * a))
        nf += float(np.sum(w * v * v))
    return err, nA, nf, ok


@dataclass
class FieldNormReport:
    levels: list
    l2_error: list
    l2_error_se: list
    norm_A: list
    norm_f: float
    contraction_se: list
    sup_check_pass: list
    l2_contraction_pass: list
    strictly_decreasing: bool
    n_paths: int
    runtime_s: float

    @property
    def passed(self) -> bool:
        return all(self.sup_check_pass) and all(self.l2_contraction_pass) and self.strictly_decreasing

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "l2_error", "sup_check_pass"])
        for n, e, s in zip(self.levels, self.l2_error, self.sup_check_pass):
            w.writerow([n, repr(float(e)), str(bool(s)).lower()])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "l2_error": list(map(float, self.l2_error)),
                "l2_error_se": list(map(float, self.l2_error_se)), "norm_A": list(map(float, self.norm_A)),
                "norm_f": float(self.norm_f), "sup_check_pass": list(map(bool, self.sup_check_pass)),
                "l2_contraction_pass": list(map(bool, self.l2_contraction_pass)),
                "strictly_decreasing": bool(self.strictly_decreasing), "pass": self.passed,
                "n": self.n_paths, "runtime_s": self.runtime_s}


def convergence_sweep(f: RandomField, cells, n_range, model: CompensatorModel, T: float, n_paths: int,
                      seed: int, clip: Optional[float] = None, workers=None) -> FieldNormReport:
    """Monte Carlo ``||A_n f - f||^2`` over ``n_range`` with per-path sup checks and L2 contraction."""
    t0 = time.perf_counter()
    f = f.clipped(clip) if clip is not None else f
    n_range = list(n_range)

    def chunk(gen, n, offset):
        jb = sample_prm_batch(model, T, gen, n)
        out = np.empty((n, len(n_range), 4))
        for i in range(n):
            j = jb.measure(i)
            for li, lv in enumerate(n_range):
                out[i, li] = path_errors(f, cells, lv, model, j)
        return out

    s = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    m = len(s)
    err = s[:, :, 0].mean(axis=0)
    err_se = s[:, :, 0].std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(len(n_range))
    nA = s[:, :, 1].mean(axis=0)
    nf = float(s[:, 0, 2].mean())
    d = s[:, :, 1] - s[:, :, 2]
    d_se = d.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(len(n_range))
    contraction = list(d.mean(axis=0) <= 3 * d_se + 1e-12)
    sup_ok = list(np.all(s[:, :, 3] > 0.5, axis=0))
    dec = bool(np.all(np.diff(err) < 0))
    return FieldNormReport(n_range, list(err), list(err_se), list(nA), nf, list(d_se), sup_ok, contraction, dec,
                           m, time.perf_counter() - t0)
