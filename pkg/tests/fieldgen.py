"""Random simple fields and scenarios shared by the test modules."""
import numpy as np

from jumprep.compensator import CompensatorModel, Constant, Deterministic, PathDependent, PointMasses
from jumprep.functional import Coefficient, HittingSpec, SimpleField
from jumprep.measure import Annulus, AtomicMeasure, CadlagPath, Interval, MarkRegion

MARKS = np.array([[-1.5], [-0.7], [0.4], [0.9], [1.6]])


def random_model(rng, kind=None):
    law = PointMasses(MARKS, rng.uniform(0.2, 1.0, len(MARKS)))
    kind = kind or rng.choice(["constant", "deterministic", "path_dependent"])
    if kind == "constant":
        lam = Constant(float(rng.uniform(0.5, 3.0)))
    elif kind == "deterministic":
        lam = Deterministic.sinusoid(float(rng.uniform(1.5, 3)), float(rng.uniform(0, 1.4)), float(rng.uniform(1, 9)))
    else:
        lam = PathDependent(float(rng.uniform(0.5, 2)), float(rng.uniform(0, 1)))
    return CompensatorModel(law, lam)


def random_cells(rng):
    choices = [Interval(-2.0, -1.0), Interval(-1.0, -0.5), Interval(0.3, 0.6), Interval(0.6, 1.2),
               Annulus(1.2, 2.0)]
    # annulus (1.2, 2] overlaps the negative interval (-2, -1] only if both are chosen
    picks = rng.permutation(4)[: rng.integers(1, 4)]
    cells = [choices[i] for i in sorted(picks)]
    if rng.random() < 0.3 and Interval(-2.0, -1.0) not in cells:
        cells.append(choices[4])
    return tuple(cells)


def random_coefficient(rng, T, with_x=False):
    if rng.random() < 0.3:
        return Coefficient(float(rng.normal()))
    stats, weights = [], []
    for _ in range(rng.integers(1, 4)):
        tl = float(rng.uniform(0, T))
        if with_x and rng.random() < 0.5:
            stats.append(("x", tl))
        else:
            stats.append(("count", tl, float(rng.uniform(1, 3))))
        weights.append(float(rng.normal()))
    return Coefficient(float(rng.normal()), tuple(stats), tuple(weights), bool(rng.random() < 0.7))


def random_simple_field(rng, model=None, T=1.0, with_x=False, hitting=True):
    n_cells = int(rng.integers(1, 5))
    grid = [0.0]
    for t in np.sort(rng.uniform(0, T, n_cells - 1)):
        if hitting and model is not None and rng.random() < 0.3:
            grid.append(HittingSpec(MarkRegion(Annulus(0.3, 2.0)), float(rng.uniform(0.1, 2.0))))
        else:
            grid.append(float(t))
    grid.append(T)
    cells = random_cells(rng)
    coefs = [[random_coefficient(rng, T, with_x) for _ in cells] for _ in range(len(grid) - 1)]
    needs_model = any(isinstance(g, HittingSpec) for g in grid)
    return SimpleField(tuple(grid), cells, tuple(tuple(r) for r in coefs), model if needs_model else None)


def random_measure(rng, T=1.0, n_max=8):
    n = int(rng.integers(0, n_max + 1))
    return AtomicMeasure(np.sort(rng.uniform(0, T, n)), MARKS[rng.integers(0, len(MARKS), n)], T)


def random_path(rng, T=1.0, n=50):
    return CadlagPath.uniform(np.concatenate([[0.0], np.cumsum(rng.normal(0, 0.1, n))]), T)
