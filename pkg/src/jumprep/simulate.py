"""Scenario generation with counter-based seeding.

Every batch of paths is split into fixed-size chunks; chunk ``c`` draws from
the stream ``(master, c)`` only, so results never depend on how many workers
run the chunks.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .compensator import Constant, CompensatorModel, MarkLaw, PathDependent, mark_law_from_dict
from .errors import ConfigurationError, DomainError
from .measure import AtomicMeasure, CadlagPath, MarkRegion, Annulus

CHUNK = 1000
MAX_ATOMS = 10_000_000


@dataclass(frozen=True)
class RngStream:
    """Stream ``index`` of ``master``: Philox keyed by ``SeedSequence(master, spawn_key=(index,))``."""
    master: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master), spawn_key=(int(self.index),))
        return np.random.Generator(np.random.Philox(ss))


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ConfigurationError("rng must be an RngStream or numpy Generator")


def worker_count(workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("JUMPREP_THREADS", "1")))


def run_chunks(fn: Callable, n_paths: int, master: int, workers: Optional[int] = None,
               chunk: int = CHUNK) -> list:
    """Apply ``fn(generator, n, offset)`` to each chunk in order; returns the per-chunk results."""
    if n_paths < 1:
        raise ConfigurationError("n_paths must be >= 1")
    sizes = [min(chunk, n_paths - s) for s in range(0, n_paths, chunk)]
    tasks = [(RngStream(master, c), n, c * chunk) for c, n in enumerate(sizes)]
    call = lambda task: fn(task[0].generator(), task[1], task[2])  # noqa: E731
    w = worker_count(workers)
    if w == 1:
        return [call(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(call, tasks))


# Jump batches ---------------------------------------------------------------

@dataclass(frozen=True)
class JumpBatch:
    """Ragged atoms of ``n`` paths: path ``i`` owns ``times[offsets[i]:offsets[i+1]]``."""
    offsets: np.ndarray
    times: np.ndarray
    marks: np.ndarray
    horizon: float

    @property
    def n_paths(self) -> int:
        return len(self.offsets) - 1

    @property
    def path_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_paths), np.diff(self.offsets))

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def measure(self, i: int) -> AtomicMeasure:
        a, b = self.offsets[i], self.offsets[i + 1]
        return AtomicMeasure(self.times[a:b], self.marks[a:b], self.horizon, dim=self.marks.shape[1])


def _from_flat(path, times, marks, n, horizon) -> JumpBatch:
    order = np.lexsort((times, path))
    counts = np.bincount(path, minlength=n)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return JumpBatch(offsets, times[order], marks[order], horizon)


def _sample_marks(law: MarkLaw, gen, n: int) -> np.ndarray:
    if n == 0:
        return np.empty((0, law.dim))
    return law.sample(gen, n)


def _accept_prob(model: CompensatorModel, t: np.ndarray, z: np.ndarray, lam_bar: float, th_bar: float):
    p = model.intensity.rate_at(t, None) / lam_bar if lam_bar > 0 else np.zeros(len(t))
    for th in model.mark_tilts + model.tilts:
        p = p * th(t, z)
    return p / th_bar


def _tilt_bound(model: CompensatorModel) -> float:
    out = 1.0
    for th in model.mark_tilts + model.tilts:
        out *= th.upper
    return out


def sample_prm_batch(model: CompensatorModel, T: float, gen: np.random.Generator, n: int) -> JumpBatch:
    """``n`` independent draws of the random measure by thinning."""
    gen = _gen(gen)
    lam = model.intensity
    nu = model.mark_law.total
    if isinstance(lam, PathDependent):
        ms = [_sample_feedback(model, T, gen) for _ in range(n)]
        times = np.concatenate([m[0] for m in ms]) if ms else np.empty(0)
        marks = np.concatenate([m[1] for m in ms]) if ms else np.empty((0, model.dim))
        path = np.repeat(np.arange(n), [len(m[0]) for m in ms])
        offsets = np.concatenate([[0], np.cumsum([len(m[0]) for m in ms])]).astype(int)
        return JumpBatch(offsets, times, marks.reshape(-1, model.dim), T)
    lam_bar = float(lam.bound(T))
    th_bar = _tilt_bound(model)
    rate = lam_bar * nu * th_bar
    if not np.isfinite(rate):
        raise ConfigurationError("dominating rate is not finite")
    if rate * T * n > MAX_ATOMS:
        raise ConfigurationError("dominating rate overflow: too many candidate atoms")
    counts = gen.poisson(rate * T, size=n)
    m = int(counts.sum())
    path = np.repeat(np.arange(n), counts)
    times = gen.random(m) * T
    marks = _sample_marks(model.mark_law, gen, m)
    exact = isinstance(lam, Constant) and th_bar == 1.0 and not (model.mark_tilts or model.tilts)
    if not exact:
        keep = gen.random(m) < _accept_prob(model, times, marks, lam_bar, th_bar)
        path, times, marks = path[keep], times[keep], marks[keep]
    return _from_flat(path, times, marks, n, T)


def _sample_feedback(model: CompensatorModel, T: float, gen) -> tuple:
    """Ogata thinning for ``a + b N(s-)``: the rate is constant between atoms."""
    lam = model.intensity
    nu = model.mark_law.total
    th_bar = _tilt_bound(model)
    times, marks = [], []
    t, k = 0.0, 0
    while True:
        rate = (lam.a + lam.b * k) * nu * th_bar
        if rate <= 0:
            break
        t += gen.exponential(1.0 / rate)
        if t > T:
            break
        z = _sample_marks(model.mark_law, gen, 1)
        p = 1.0
        for th in model.mark_tilts + model.tilts:
            p *= float(np.asarray(th(t, z)).reshape(-1)[0])
        if th_bar > 1.0 or p != 1.0:
            if gen.random() >= p / th_bar:
                continue
        times.append(t)
        marks.append(z[0])
        k += 1
        if k > MAX_ATOMS:
            raise ConfigurationError("feedback intensity exploded")
    return np.asarray(times, dtype=float), np.asarray(marks, dtype=float).reshape(-1, model.dim)


def sample_prm(model: CompensatorModel, T: float, rng) -> AtomicMeasure:
    """One draw of the random measure with compensator ``model`` on ``[0, T]``."""
    return sample_prm_batch(model, T, _gen(rng), 1).measure(0)


def truncate_small_jumps(j: AtomicMeasure, n: float) -> AtomicMeasure:
    """Keep atoms with ``|z| > 1/n``."""
    if not n >= 1:
        raise DomainError("truncation level n must be >= 1")
    return j._subset(j.norms > 1.0 / n) if np.isfinite(n) else j


# Levy scenarios -------------------------------------------------------------

@dataclass(frozen=True)
class LevyParams:
    """``X = gamma t + sigma W + sum z - t * int_{|z| <= 1} z nu(dz)`` (small band compensated).

    The compensating drift is kept in the scenario's model, never in ``x``.
    Set ``compensate_small=False`` to leave every band uncompensated.
    """
    drift: float = 0.0
    sigma: float = 0.0
    mark_law: Optional[MarkLaw] = None
    compensate_small: bool = True
    threshold: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")
        if self.threshold != 1.0:
            raise DomainError("big-jump threshold is fixed at 1")

    @property
    def model(self) -> Optional[CompensatorModel]:
        return None if self.mark_law is None else CompensatorModel(self.mark_law, Constant(1.0))

    def _moment(self, fn, region) -> float:
        if self.mark_law is None:
            return 0.0
        z, w = self.mark_law.nodes(region)
        return float(np.sum(w * fn(z[:, 0])))

    @property
    def compensator_drift(self) -> float:
        """``int_{|z| <= 1} z nu(dz)`` when the small band is compensated."""
        if not self.compensate_small:
            return 0.0
        return self._moment(lambda z: z, MarkRegion(Annulus(0.0, 1.0)))

    @property
    def total_drift(self) -> float:
        return self.drift - self.compensator_drift

    def moment(self, fn) -> float:
        """``int fn(z) nu(dz)`` for scalar marks."""
        return self._moment(fn, MarkRegion(Annulus(0.0, np.inf)))

    def mean(self, t: float) -> float:
        return t * (self.drift + self.moment(lambda z: z) - self.compensator_drift)

    def to_dict(self) -> dict:
        return {"drift": self.drift, "sigma": self.sigma, "compensate_small": self.compensate_small,
                "mark_law": None if self.mark_law is None else self.mark_law.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "LevyParams":
        law = d.get("mark_law")
        return cls(float(d.get("drift", 0.0)), float(d.get("sigma", 0.0)),
                   None if law is None else mark_law_from_dict(law), bool(d.get("compensate_small", True)))


@dataclass(frozen=True)
class Scenario:
    """``x`` holds ``gamma t + sigma W`` on a uniform grid; ``j`` holds the atoms."""
    x: CadlagPath
    j: AtomicMeasure
    model: Optional[CompensatorModel]
    seed: int
    params: Optional[LevyParams] = None

    def levy_value(self, t: float) -> float:
        """``X(t)`` including jumps and the compensating drift."""
        jt = self.j.times <= t
        comp = 0.0 if self.params is None else self.params.compensator_drift * t
        return float(self.x.value_at(t)) + float(self.j.marks[jt, 0].sum()) - comp

    def to_dict(self) -> dict:
        return {"seed": self.seed, "x": self.x.to_dict(), "j": self.j.to_dict(),
                "model": None if self.model is None else self.model.to_dict(),
                "params": None if self.params is None else self.params.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class LevyBatch:
    """``n`` Levy paths: ``x[i, k] = gamma t_k + sigma W(t_k)`` and their jumps."""
    grid: np.ndarray
    x: np.ndarray
    jumps: JumpBatch
    params: LevyParams

    def scenario(self, i: int, seed: int = 0) -> Scenario:
        return Scenario(CadlagPath(self.grid, self.x[i]), self.jumps.measure(i), self.params.model, seed,
                        self.params)


def sample_levy_batch(params: LevyParams, n_steps: int, T: float, gen, n: int) -> LevyBatch:
    if n_steps < 2:
        raise DomainError("need at least 2 grid steps")
    gen = _gen(gen)
    grid = np.linspace(0.0, T, n_steps + 1)
    dt = T / n_steps
    x = np.zeros((n, n_steps + 1))
    if params.sigma > 0:
        x[:, 1:] = np.cumsum(gen.standard_normal((n, n_steps)) * (params.sigma * np.sqrt(dt)), axis=1)
    x += params.drift * grid
    if params.mark_law is None:
        jumps = JumpBatch(np.zeros(n + 1, dtype=int), np.empty(0), np.empty((0, 1)), T)
    else:
        jumps = sample_prm_batch(params.model, T, gen, n)
    return LevyBatch(grid, x, jumps, params)


def sample_levy(params: LevyParams, n_steps: int, rng, T: float = 1.0) -> Scenario:
    seed = rng.master if isinstance(rng, RngStream) else 0
    return sample_levy_batch(params, n_steps, T, _gen(rng), 1).scenario(0, seed)


def export_jsonl(scenarios, path) -> None:
    with open(path, "w") as fh:
        for s in scenarios:
            fh.write(s.to_json() + "\n")
