"""Monte Carlo and pathwise checks of the representation results.

All estimators run over :func:`~jumprep.simulate.run_chunks`, so a report is
a pure function of its inputs and the master seed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .compensator import CompensatorModel, Constant, Deterministic, PathDependent, TiltSpec, tilt
from .errors import DomainError, NumericalError
from .functional import (Functional, PredictableField, SimpleField, compensated_integral, mu_integral,
                         vertical_diffusion_derivative, vertical_jump_derivative)
from .measure import EVERYWHERE, AtomicMeasure, CadlagPath, MarkRegion, StopMode, restrict
from .simulate import LevyParams, run_chunks, sample_levy_batch, sample_prm_batch

RESIDUAL_FLOOR = 1e-12
ROUNDING_FLOOR = 1e-18


@dataclass
class McReport:
    estimate: float
    std_error: float
    n_samples: int
    target: Optional[float] = None
    passed: Optional[bool] = None
    runtime_s: float = 0.0
    case: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"case": self.case, "estimate": self.estimate, "se": self.std_error, "target": self.target,
                "pass": self.passed, "n": self.n_samples, "runtime_s": self.runtime_s, **self.extra}


def mean_se(x) -> tuple:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def zero_mean_report(samples, case: str, t0: float, **extra) -> McReport:
    """Pass iff ``|mean| <= 3 SE`` (target 0)."""
    m, se = mean_se(samples)
    return McReport(m, se, len(samples), 0.0, bool(abs(m) <= 3 * se), time.perf_counter() - t0, case, extra)


# Batch evaluation of simple fields ------------------------------------------

def _deterministic_taus(field_: SimpleField, T: float):
    """Grid times when they do not depend on the path (constant/deterministic intensity)."""
    if field_.grid_model is not None and isinstance(field_.grid_model.intensity, PathDependent):
        return None
    return field_.taus(AtomicMeasure.empty(T, 1))


def simple_field_batch(field_: SimpleField, model: CompensatorModel, jb) -> Optional[tuple]:
    """Vectorised ``(I_psi(T), int psi^2 dmu)`` over a jump batch.

    Supports path-independent grids, deterministic intensities and
    coefficients reading counts only. Returns None otherwise.
    """
    if isinstance(model.intensity, PathDependent) or not model.separable:
        return None
    if any(s[0] == "x" for row in field_.coefs for c in row for s in c.stats):
        return None
    T = jb.horizon
    taus = _deterministic_taus(field_, T)
    if taus is None:
        return None
    n = jb.n_paths
    empty = AtomicMeasure.empty(T, 1)
    I, K = len(field_.coefs), len(field_.cells)
    mass = np.zeros((I, K))
    for i in range(I):
        if taus[i + 1] > taus[i]:
            for k, cell in enumerate(field_.cells):
                mass[i, k] = model.intensity.integral(taus[i], taus[i + 1], empty) * model.mark_mass(MarkRegion(cell))
    path = jb.path_index
    r = np.linalg.norm(jb.marks, axis=1)
    coef = np.empty((n, I, K))
    for i, row in enumerate(field_.coefs):
        for k, c in enumerate(row):
            if not c.stats:
                coef[:, i, k] = c.const
                continue
            acc = np.full(n, c.const, dtype=float)
            for stat, w in zip(c.stats, c.weights):
                s, alpha = min(float(stat[1]), taus[i]), float(stat[2])
                hit = (jb.times <= s) & (r > 1.0 / alpha) & (r <= alpha)
                acc += w * np.bincount(path[hit], minlength=n)
            coef[:, i, k] = np.tanh(acc) if c.squash else acc
    ti = np.searchsorted(taus, jb.times, side="left") - 1
    ki = field_._cell_index(jb.marks)
    ok = (ti >= 0) & (ti < I) & (ki >= 0)
    jumps = np.bincount(path[ok], coef[path[ok], ti[ok], ki[ok]], minlength=n)
    integral = jumps - np.einsum("nik,ik->n", coef, mass)
    square = np.einsum("nik,ik->n", coef * coef, mass)
    return integral, square


def _field_integrals(psi, model, jb, x=None):
    fast = simple_field_batch(psi, model, jb) if isinstance(psi, SimpleField) else None
    if fast is not None:
        return fast
    n = jb.n_paths
    I, Q = np.empty(n), np.empty(n)
    for i in range(n):
        j = jb.measure(i)
        if isinstance(psi, SimpleField):
            I[i] = psi.exact_integral(model, x, j, jb.horizon)
            Q[i] = psi.square_integral(model, x, j, jb.horizon)
        else:
            I[i] = compensated_integral(psi, model, x, j, jb.horizon)
            Q[i] = mu_integral(lambda s, z, ja: psi.values(s, z, x, ja) ** 2, model, j, jb.horizon, psi.support)
    return I, Q


# Isometry -------------------------------------------------------------------

def isometry_check(psi, model: CompensatorModel, T: float, n_paths: int, seed: int, workers=None,
                   exact_rhs: Optional[float] = None) -> McReport:
    """``E[(int psi dJtilde)^2]`` against ``E[int psi^2 dmu]`` via the paired difference.

    With ``exact_rhs`` the left side alone is compared with that value.
    """
    t0 = time.perf_counter()

    def chunk(gen, n, offset):
        jb = sample_prm_batch(model, T, gen, n)
        I, Q = _field_integrals(psi, model, jb)
        return np.stack([I * I, Q], axis=1)

    s = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    lhs, lhs_se = mean_se(s[:, 0])
    rhs, rhs_se = mean_se(s[:, 1])
    if exact_rhs is not None:
        ok = abs(lhs - exact_rhs) <= 3 * lhs_se
        return McReport(lhs, lhs_se, n_paths, float(exact_rhs), bool(ok), time.perf_counter() - t0, "isometry",
                        {"rhs": rhs})
    d, d_se = mean_se(s[:, 0] - s[:, 1])
    ok = abs(d) <= 3 * d_se if d_se > 0 else abs(d) <= 1e-12
    return McReport(lhs, d_se, n_paths, rhs, bool(ok), time.perf_counter() - t0, "isometry",
                    {"rhs_se": rhs_se, "difference": d})


# Representation residual ----------------------------------------------------

@dataclass(frozen=True)
class RepresentationCase:
    """``batch_residual(levy_batch) -> (R, Y_T)`` computes the per-path residual

        R = Y(T) - Y(0) - int grad_x Y dx - int int grad_p Y dJtilde
    """
    label: str
    levy: LevyParams
    horizon: float
    batch_residual: Callable
    Y: Optional[Functional] = None
    model: Optional[CompensatorModel] = None


def grid_allowance(n_steps: int, C: float = 1.0) -> float:
    """``delta(grid) = C / sqrt(N_t)`` on the root-mean-square scale."""
    return C / np.sqrt(n_steps)


def _ratio_se(R2, Y2):
    """Delta-method SE of ``mean(R2) / mean(Y2)``."""
    n = len(R2)
    a, b = R2.mean(), max(Y2.mean(), RESIDUAL_FLOOR)
    cov = np.cov(np.stack([R2, Y2]), ddof=1) / n
    var = cov[0, 0] / b ** 2 - 2 * a * cov[0, 1] / b ** 3 + a * a * cov[1, 1] / b ** 4
    return float(np.sqrt(max(var, 0.0)))


def mrt_residual(case: RepresentationCase, n_paths: int, n_steps: int, seed: int, workers=None,
                 C: float = 1.0, allowance: bool = True) -> McReport:
    """Relative mean-square residual ``E[R^2] / max(E[Y(T)^2], 1e-12)``.

    Pass iff it is at most ``3 SE + delta(grid)^2`` (``delta`` compares root
    mean squares). Non-finite paths are rejected and counted; any rejection
    fails the check.
    """
    t0 = time.perf_counter()

    def chunk(gen, n, offset):
        batch = sample_levy_batch(case.levy, n_steps, case.horizon, gen, n)
        return np.stack(case.batch_residual(batch), axis=1)

    s = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    finite = np.all(np.isfinite(s), axis=1)
    rejected = int(np.count_nonzero(~finite))
    R, Y = s[finite, 0], s[finite, 1]
    R2, Y2 = R * R, Y * Y
    est = float(R2.mean() / max(Y2.mean(), RESIDUAL_FLOOR))
    se = _ratio_se(R2, Y2)
    delta = grid_allowance(n_steps, C) if allowance else 0.0
    bound = 3 * se + delta ** 2 + ROUNDING_FLOOR
    return McReport(est, se, len(R), 0.0, bool(est <= bound and rejected == 0), time.perf_counter() - t0,
                    f"mrt:{case.label}", {"delta": float(delta), "bound": float(bound), "rejected": rejected,
                                          "max_abs_residual": float(np.abs(R).max()), "n_steps": n_steps})


def brownian_identity_case(sigma: float = 1.0, T: float = 1.0) -> RepresentationCase:
    """``Y = x`` with ``grad_x Y = 1``: the residual telescopes to zero."""

    def fn(batch):
        x = batch.x
        return x[:, -1] - x[:, 0] - np.sum(np.diff(x, axis=1), axis=1), x[:, -1]

    return RepresentationCase("brownian_identity", LevyParams(0.0, sigma), T, fn)


def brownian_quadratic_case(sigma: float = 1.0, T: float = 1.0) -> RepresentationCase:
    """``Y = x^2 - sigma^2 t`` with ``grad_x Y = 2 x``; relative RMS residual is ``1/sqrt(N_t)``."""

    def fn(batch):
        x = batch.x
        Y = x[:, -1] ** 2 - sigma ** 2 * T
        return Y - np.sum(2 * x[:, :-1] * np.diff(x, axis=1), axis=1), Y

    return RepresentationCase("brownian_quadratic", LevyParams(0.0, sigma), T, fn)


def calibrate_allowance(n_steps: int, n_paths: int, seed: int, workers=None) -> float:
    """``C`` such that ``delta(N_t)`` equals the Brownian quadratic case's relative RMS residual."""
    rep = mrt_residual(brownian_quadratic_case(), n_paths, n_steps, seed, workers, allowance=False)
    return float(np.sqrt(rep.estimate * n_steps))


def functional_case(label: str, Y: Functional, levy: LevyParams, T: float,
                    psi=None, support: MarkRegion = EVERYWHERE, numeric: bool = False) -> RepresentationCase:
    """Generic per-path residual from a :class:`Functional`.

    ``grad_x Y`` comes from the closed form or the bump derivative at each grid
    node; the jump integral uses ``psi`` (default: the closed jump derivative,
    or ``nabla_p`` numerically).
    """
    model = levy.model

    def field_for():
        if psi is not None:
            return psi
        if Y.jump_derivative is not None and not numeric:
            return PredictableField(lambda t, z, x, j: np.array([Y.jump_derivative(t, zz, x, j)
                                                                 for zz in np.atleast_2d(z)]), support)
        from .functional import nabla_p
        return nabla_p(Y, support)

    jf = field_for()

    def fn(batch):
        n = batch.x.shape[0]
        R, YT = np.empty(n), np.empty(n)
        grid = batch.grid
        for i in range(n):
            sc = batch.scenario(i)
            x, j = sc.x, sc.j
            yT = float(Y(T, x, j))
            y0 = float(Y(0.0, x, restrict(j, 0.0, StopMode.OPEN)))
            diff = 0.0
            if levy.sigma > 0:
                for k in range(len(grid) - 1):
                    t = grid[k]
                    if Y.diffusion_derivative is not None and not numeric:
                        g = float(Y.diffusion_derivative(t, x, j))
                    else:
                        g = float(vertical_diffusion_derivative(Y, t, x, restrict(j, t, StopMode.CLOSED))[0])
                    diff += g * (x.values[k + 1] - x.values[k])
            jump = compensated_integral(jf, model, x, j, T) if model is not None else 0.0
            R[i], YT[i] = yT - y0 - diff - jump, yT
        return R, YT

    return RepresentationCase(label, levy, T, fn, Y, model)


# Adjoint --------------------------------------------------------------------

def adjoint_check(Y: Functional, grad: PredictableField, psi, model: CompensatorModel,
                  T: float, n_paths: int, seed: int, workers=None) -> McReport:
    """``E[Y(T) I(psi)(T)]`` against ``E[int grad_p Y psi dmu]`` (paired difference, pure-jump ``Y``).

    ``psi`` is a :class:`PredictableField` or a :class:`SimpleField` (exact integral).
    """
    t0 = time.perf_counter()
    simple = psi if isinstance(psi, SimpleField) else None
    psi = simple.as_field() if simple is not None else psi
    support = psi.support

    def knots(j):
        out = [np.asarray(f.breakpoints(j), dtype=float) for f in (psi, grad) if f.breakpoints is not None]
        return np.concatenate(out) if out else ()

    def chunk(gen, n, offset):
        jb = sample_prm_batch(model, T, gen, n)
        out = np.empty((n, 2))
        for i in range(n):
            j = jb.measure(i)
            I = simple.exact_integral(model, None, j, T) if simple is not None else \
                compensated_integral(psi, model, None, j, T)
            rhs = mu_integral(lambda s, z, ja: grad.values(s, z, None, ja) * psi.values(s, z, None, ja),
                              model, j, T, support, breaks=knots(j))
            out[i] = (float(Y(T, None, j)) - float(Y(0.0, None, restrict(j, 0.0, StopMode.OPEN)))) * I, rhs
        return out

    s = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    lhs, _ = mean_se(s[:, 0])
    rhs, _ = mean_se(s[:, 1])
    d, d_se = mean_se(s[:, 0] - s[:, 1])
    ok = abs(d) <= 3 * d_se if d_se > 0 else abs(d) <= 1e-12
    return McReport(lhs, d_se, n_paths, rhs, bool(ok), time.perf_counter() - t0, "adjoint", {"difference": d})


# Change of measure ----------------------------------------------------------

def measure_change_invariance(Y: Functional, model: CompensatorModel, spec: TiltSpec, T: float,
                              n_paths: int, seed: int, support: MarkRegion = EVERYWHERE,
                              n_probe_paths: int = 50, probes: int = 20, workers=None,
                              grad: Optional[PredictableField] = None) -> McReport:
    """Invariance of ``grad_p Y`` when the compensator is tilted to ``theta mu``.

    (a) on scenarios drawn under the tilted model the pathwise operator equals
    the closed integrand at random probes (1e-9);
    (b) ``Y(T) - Y(0) - int grad_p Y (theta - 1) dmu`` has zero mean under the
    tilted law, i.e. ``Y - int grad_p Y d(J - theta mu)`` carries no innovation.
    A vectorised ``grad`` (the closed integrand as a field) speeds up (b).
    """
    if Y.jump_derivative is None:
        raise DomainError("closed jump derivative needed for the invariance probe")
    if not spec.lower > 0:
        raise DomainError("tilt must be bounded away from 0")
    t0 = time.perf_counter()
    q_model = tilt(model, spec)
    probe_gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(2 ** 31,))))
    jb = sample_prm_batch(q_model, T, probe_gen, n_probe_paths)
    z_nodes, _ = model.mark_nodes(support)
    worst = 0.0
    for i in range(n_probe_paths):
        j = jb.measure(i)
        for _ in range(probes):
            t = float(probe_gen.uniform(0, T))
            z = z_nodes[probe_gen.integers(len(z_nodes))]
            num = vertical_jump_derivative(Y, t, z, None, j)
            closed = float(Y.jump_derivative(t, z, None, restrict(j, t, StopMode.OPEN)))
            worst = max(worst, abs(num - closed))
    pathwise_ok = worst <= 1e-9

    if grad is not None:
        closed = lambda s, z, ja: grad.values(s, z, None, ja)  # noqa: E731
    else:
        closed = lambda s, z, ja: np.array([Y.jump_derivative(s, zz, None, ja) for zz in z])  # noqa: E731

    def th_minus_one(s, z):
        return np.asarray(spec(s, z), dtype=float) * np.ones(len(z)) - 1.0

    def chunk(gen, n, offset):
        jq = sample_prm_batch(q_model, T, gen, n)
        out = np.empty(n)
        for i in range(n):
            j = jq.measure(i)
            drift = mu_integral(lambda s, z, ja: closed(s, z, ja) * th_minus_one(s, z), model, j, T, support)
            out[i] = float(Y(T, None, j)) - float(Y(0.0, None, AtomicMeasure.empty(T, j.dim))) - drift
        return out

    s = np.concatenate(run_chunks(chunk, n_paths, seed, workers))
    rep = zero_mean_report(s, "measure_change", t0, pathwise_max_gap=worst, pathwise_pass=pathwise_ok)
    rep.passed = bool(rep.passed and pathwise_ok)
    return rep


# Integrand regression oracle -------------------------------------------------

def integrand_regression_oracle(bin_statistics: Callable, n_paths: int, seed: int, workers=None) -> dict:
    """Bin-wise estimate of the predictable integrand from ``E[(Y(T) - Y(0)) Jtilde(b)]``.

    ``bin_statistics(gen, n, offset)`` returns per-path arrays ``(dY, J(b),
    mu(b), int_b psi dmu)`` with bins on the trailing axes. The oracle value is
    ``E[dY Jtilde(b)] / E[mu(b)]``; the closed value is ``E[int_b psi dmu] / E[mu(b)]``.
    Their paired per-path difference gives the SE. Bins with zero mass are
    flagged and excluded.
    """
    t0 = time.perf_counter()
    parts = run_chunks(bin_statistics, n_paths, seed, workers)
    dY = np.concatenate([p[0] for p in parts])
    J = np.concatenate([p[1] for p in parts])
    mu = np.concatenate([p[2] for p in parts])
    closed = np.concatenate([p[3] for p in parts])
    prod = dY.reshape((-1,) + (1,) * (J.ndim - 1)) * (J - mu)
    mass = mu.mean(axis=0)
    empty = mass <= 0
    safe = np.where(empty, 1.0, mass)
    diff = prod - closed
    n = len(dY)
    se = diff.std(axis=0, ddof=1) / np.sqrt(n) / safe
    oracle = prod.mean(axis=0) / safe
    closed_avg = closed.mean(axis=0) / safe
    ok = (np.abs(oracle - closed_avg) <= 3 * se) | empty
    return {"oracle": oracle, "closed": closed_avg, "se": se, "empty": empty, "pass": ok,
            "all_pass": bool(ok.all()), "n": n, "runtime_s": time.perf_counter() - t0}


# Cylindrical density smoke test ----------------------------------------------

def cylindrical_projection(model: CompensatorModel, T: float, target: Callable, levels, n_paths: int,
                           seed: int, alpha: float = 2.0, workers=None) -> list:
    """In-sample empirical ``L^2`` error of ``E[target | counts on a grid]`` for nested grids.

    ``levels`` are grid sizes ``n`` (times ``i T / n``); the conditioning
    statistics are the cumulative annulus counts at those times. Nested grids
    give a monotone non-increasing error.
    """
    def chunk(gen, n, offset):
        jb = sample_prm_batch(model, T, gen, n)
        y = np.array([target(jb.measure(i)) for i in range(n)])
        r = np.linalg.norm(jb.marks, axis=1)
        inside = (r > 1 / alpha) & (r <= alpha)
        feats = []
        for L in levels:
            times = np.linspace(0, T, L + 1)[1:]
            c = np.stack([np.bincount(jb.path_index[inside & (jb.times <= t)], minlength=n) for t in times], axis=1)
            feats.append(c)
        return y, feats

    parts = run_chunks(chunk, n_paths, seed, workers)
    y = np.concatenate([p[0] for p in parts])
    out = []
    for li in range(len(levels)):
        f = np.concatenate([p[1][li] for p in parts])
        _, inv = np.unique(f, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        means = np.bincount(inv, y) / np.bincount(inv)
        out.append(float(np.mean((y - means[inv]) ** 2)))
    return out
