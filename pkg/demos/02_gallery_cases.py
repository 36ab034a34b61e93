# %% [markdown]
# The four worked representation cases: hedge ratio of an exponential claim,
# stochastic exponential, Kella-Whitt martingale and the running supremum.

# %%
import numpy as np

from jumprep.gallery import doleans, kella_whitt, kw, presets, supremum
from jumprep.simulate import LevyParams, RngStream, sample_levy, sample_prm_batch
from jumprep.verifier import mrt_residual

case = presets.kw_case()
s = sample_levy(case.levy, 500, RngStream(1, 0))
print("hedge ratio / Y(t-):", case.ratio)
print("hedge ratio at t=0.5, closed:", kw.kw_hedge_ratio(case, 0.5, s.x, s.j),
      "pathwise:", kw.kw_hedge_ratio(case, 0.5, s.x, s.j, numeric=True))

# %%
model, n = presets.doleans_model()
j = sample_prm_batch(model, 1.0, RngStream(2, 0).generator(), 1).measure(0)
path = doleans.doleans_dade(j, model, n)
print("E at event times:", np.round(path.values, 4), "SDE residual:", path.sde_residual)

# %%
kwc = presets.kella_whitt_case()
psi = kella_whitt.calibrate_psi(kwc, 200_000, 3)
print(f"Kella-Whitt psi: calibrated {psi:.5f}, exponent formula {kwc.psi_formula:.5f}")

# %%
bm = supremum.SupremumCase(LevyParams(0.0, 0.5), 1.0, 500, 0.01, 3.0)
table = supremum.build_tail_table(bm, 20_000, 4)
u = np.array([0.1, 0.3, 0.6, 1.0])
print("tail of the sup, pilot:     ", np.round(table.tail(500, u), 3))
print("tail of the sup, reflection:", np.round(supremum.reflection_tail(u, 1.0, 0.5), 3))

# %%
for name in presets.GALLERY_CASES:
    rc = presets.representation_case(name, None, 500, seed=5, n_pilot=20_000)
    rep = mrt_residual(rc, 5000, 500, seed=5)
    print(f"{name:12s} relative residual {rep.estimate:.2e}  bound {rep.extra['bound']:.2e}")
