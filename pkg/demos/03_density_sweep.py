# %% [markdown]
# Random partitions that cut the compensator into equal masses, and the
# lagged cell averages that turn a random field into a simple predictable one.

# %%
import numpy as np

from jumprep.compensator import CompensatorModel, Constant, PathDependent, PointMasses
from jumprep.density import RandomField, apply_A, convergence_sweep, random_partition
from jumprep.measure import AtomicMeasure, Interval

unit = CompensatorModel(PointMasses([[1.0]], [1.0]), Constant(1.0))
print("level-1 partition, unit mass rate:", random_partition(unit, AtomicMeasure.empty(1.0), Interval(0.5, 1.5), 1).times)

# %%
f = RandomField(lambda t, z, j: np.repeat(t[:, None], len(z), axis=1), 1.0)
A, _ = apply_A(f, [Interval(0.5, 1.5)], 2, unit, AtomicMeasure.empty(1.0))
print("A_2 f on a few times:", A([0.1, 0.3, 0.6, 0.9], [[1.0]])[:, 0])

# %%
model = CompensatorModel(PointMasses([[0.8], [1.2]], [1.0, 0.6]), PathDependent(1.0, 0.5))
rep = convergence_sweep(f, [Interval(0.5, 1.5)], [1, 2, 3, 4], model, 1.0, 500, seed=9)
print(rep.to_csv())
print("contraction:", rep.l2_contraction_pass, "strictly decreasing:", rep.strictly_decreasing)
