import numpy as np
import pytest

from fieldgen import random_simple_field
from jumprep import verifier
from jumprep.compensator import CompensatorModel, Constant, PathDependent, PointMasses, TiltSpec
from jumprep.errors import DomainError
from jumprep.functional import Coefficient, Functional, SimpleField, integral_functional
from jumprep.gallery import doleans, kella_whitt, presets
from jumprep.measure import Interval, MarkRegion
from jumprep.simulate import LevyParams, RngStream, run_chunks, sample_levy_batch, sample_prm_batch

unit2 = CompensatorModel(PointMasses([[1.0]], [1.0]), Constant(2.0))
two_marks = CompensatorModel(PointMasses([[1.0], [2.0]], [1.0, 0.5]), Constant(1.5))


def const_field(c, cell=Interval(0.5, 1.5), grid=(0.0, 1.0)):
    return SimpleField(grid, (cell,), tuple((Coefficient(c),) for _ in grid[1:]))


class TestReport:
    def test_mean_se(self):
        m, se = verifier.mean_se([1.0, 2.0, 3.0, 4.0])
        assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)

    def test_schema(self):
        d = verifier.McReport(1.0, 0.1, 10, 0.0, True, 0.5, "x").to_dict()
        assert {"case", "estimate", "se", "target", "pass", "n", "runtime_s"} <= set(d)

    def test_zero_mean(self):
        assert verifier.zero_mean_report(np.array([-1.0, 1.0, -1.0, 1.0]), "z", 0.0).passed


class TestIsometry:
    def test_poisson_constant(self):
        rep = verifier.isometry_check(const_field(1.0), unit2, 1.0, 20_000, 1, exact_rhs=2.0)
        assert rep.passed and rep.extra["rhs"] == pytest.approx(2.0)

    def test_zero_field(self):
        rep = verifier.isometry_check(const_field(0.0), unit2, 1.0, 500, 2)
        assert rep.passed and rep.estimate == 0.0

    def test_random_fields(self):
        rng = np.random.default_rng(3)
        for k in range(4):
            model = CompensatorModel(PointMasses([[-0.7], [0.4], [0.9], [1.6]], rng.uniform(0.2, 1, 4)),
                                     PathDependent(1.0, 0.5) if k % 2 else Constant(1.5))
            psi = random_simple_field(rng, model, 1.0)
            assert verifier.isometry_check(psi, model, 1.0, 4000, 10 + k).passed

    def test_fast_path_matches_loop(self):
        psi = random_simple_field(np.random.default_rng(4), unit2, 1.0, hitting=False)
        jb = sample_prm_batch(unit2, 1.0, RngStream(5, 0).generator(), 50)
        fast = verifier.simple_field_batch(psi, unit2, jb)
        if fast is None:
            pytest.skip("field has path-dependent grid")
        loop = [psi.exact_integral(unit2, None, jb.measure(i), 1.0) for i in range(50)]
        assert np.allclose(fast[0], loop, atol=1e-12)


class TestResidual:
    def test_integral_of_simple_field_pathwise_zero(self):
        law = PointMasses([[0.8], [1.3]], [1.0, 0.7])
        levy = LevyParams(0.0, 0.0, law)
        psi = SimpleField((0.0, 0.4, 1.0), (Interval(0.5, 1.0), Interval(1.0, 1.5)),
                          ((Coefficient(1.0), Coefficient(-2.0)),
                           (Coefficient(0.5, (("count", 0.4, 2.0),), (1.0,)), Coefficient(3.0))))
        case = verifier.functional_case("simple", integral_functional(psi, levy.model), levy, 1.0, psi=psi)
        R, _ = case.batch_residual(sample_levy_batch(levy, 4, 1.0, RngStream(6, 0).generator(), 200))
        assert np.max(np.abs(R)) <= 1e-9

    def test_brownian_identity(self):
        rep = verifier.mrt_residual(verifier.brownian_identity_case(), 5000, 200, 7, allowance=False)
        assert rep.passed and rep.estimate < 1e-28

    def test_quadratic_scales_with_grid(self):
        ests = [verifier.mrt_residual(verifier.brownian_quadratic_case(), 20_000, n, 8).estimate
                for n in (10, 40, 160)]
        # relative mean square is 1 / N_t
        assert np.allclose(np.array(ests) * [10, 40, 160], 1.0, rtol=0.1)

    def test_calibrated_constant(self):
        assert verifier.calibrate_allowance(200, 20_000, 9) == pytest.approx(1.0, rel=0.05)

    @pytest.mark.parametrize("n", [2.0, np.inf])
    def test_doleans_residual(self, n):
        model, _ = presets.doleans_model()
        rc = presets.representation_case("doleans", {"n": None if np.isinf(n) else n})
        for steps in (10, 100):
            rep = verifier.mrt_residual(rc, 2000, steps, 10)
            assert rep.passed and rep.estimate < 1e-20

    def test_nonfinite_rejected(self):
        def fn(batch):
            R = np.zeros(batch.x.shape[0])
            R[0] = np.nan
            return R, np.ones_like(R)

        rc = verifier.RepresentationCase("bad", LevyParams(0.0, 1.0), 1.0, fn)
        rep = verifier.mrt_residual(rc, 100, 4, 11)
        assert rep.extra["rejected"] >= 1 and not rep.passed


class TestAdjoint:
    def test_self_pairing(self):
        psi = const_field(1.5)
        Y = integral_functional(psi, unit2)
        rep = verifier.adjoint_check(Y, psi.as_field(), psi, unit2, 1.0, 3000, 12)
        assert rep.passed and rep.target == pytest.approx(1.5 ** 2 * 2.0)

    def test_disjoint(self):
        a, b = const_field(1.0, Interval(0.5, 1.5)), const_field(1.0, Interval(1.5, 2.5))
        Y = integral_functional(a, two_marks)
        rep = verifier.adjoint_check(Y, a.as_field(), b, two_marks, 1.0, 2000, 13)
        assert rep.passed and rep.target == 0.0

    def test_doleans_pair(self):
        model, n = presets.doleans_model()
        psi = SimpleField((0.0, 0.5, 1.0), (Interval(-1.0, -0.25), Interval(0.25, 1.0)),
                          ((Coefficient(1.0), Coefficient(-0.5)), (Coefficient(0.3), Coefficient(2.0))))
        rep = verifier.adjoint_check(doleans.doleans_functional(model, n), doleans.integrand_field(model, n),
                                     psi, model, 1.0, 2000, 14)
        assert rep.passed


class TestMeasureChange:
    support = MarkRegion([Interval(0.25, 2.0), Interval(-2.0, -0.25)])

    def run(self, spec, n=600, seed=15):
        model, nn = presets.doleans_model()
        return verifier.measure_change_invariance(doleans.doleans_functional(model, nn), model, spec, 1.0, n,
                                                  seed, self.support, n_probe_paths=10, probes=5,
                                                  grad=doleans.integrand_field(model, nn))

    def test_identity_tilt(self):
        rep = self.run(TiltSpec.constant(1.0))
        assert rep.passed and rep.extra["pathwise_max_gap"] <= 1e-9

    def test_constant_tilt(self):
        rep = self.run(TiltSpec.constant(2.0))
        assert rep.extra["pathwise_pass"] and rep.passed

    def test_mark_step_tilt(self):
        assert self.run(TiltSpec.mark_step([-1.0, 0.0, 1.0], [0.5, 2.0])).passed

    def test_wrong_drift_detected(self):
        # dropping the drift term must show up as innovation under a tilt of the positive marks
        model, nn = presets.doleans_model()
        Y = doleans.doleans_functional(model, nn)
        q = verifier.tilt(model, TiltSpec.mark_step([-1.0, 0.0, 1.0], [1.0, 3.0]))

        def chunk(gen, n, offset):
            jb = sample_prm_batch(q, 1.0, gen, n)
            return np.array([Y(1.0, None, jb.measure(i)) - 1.0 for i in range(n)])

        x = np.concatenate(run_chunks(chunk, 2000, 16))
        assert not verifier.zero_mean_report(x, "naive", 0.0).passed

    def test_needs_closed_derivative(self):
        with pytest.raises(DomainError):
            verifier.measure_change_invariance(Functional(lambda t, x, j: 0.0), unit2, TiltSpec.constant(2.0),
                                               1.0, 10, 1)


def poisson_bins(model, c, edges, cells):
    """Bin statistics for ``Y = c * Jtilde((0, T] x K)`` with ``K = (0.5, 1.5]``."""
    edges = np.asarray(edges)
    regions = [MarkRegion(cell) for cell in cells]
    lam = model.intensity.rate
    nu = np.array([model.mark_law.mass(r) for r in regions])
    inK = np.array([1.0] + [0.0] * (len(regions) - 1))  # first cell is K
    dt = np.diff(edges)

    def fn(gen, n, offset):
        jb = sample_prm_batch(model, edges[-1], gen, n)
        ti = np.searchsorted(edges, jb.times, side="left") - 1
        counts = np.zeros((n, len(dt), len(regions)))
        for k, r in enumerate(regions):
            hit = r.contains(jb.marks)
            np.add.at(counts, (jb.path_index[hit], ti[hit], k), 1)
        mass = np.broadcast_to(lam * dt[:, None] * nu[None, :], counts.shape).copy()
        dY = c * (counts[:, :, 0].sum(axis=1) - mass[:, :, 0].sum(axis=1))
        return dY, counts, mass, c * mass * inK
    return fn


class TestOracle:
    def test_constant_cell(self):
        res = verifier.integrand_regression_oracle(
            poisson_bins(two_marks, 2.0, [0, 0.5, 1.0], [Interval(0.5, 1.5), Interval(1.5, 2.5)]), 20_000, 17)
        assert res["all_pass"]
        assert np.allclose(res["oracle"][:, 0], 2.0, atol=4 * res["se"][:, 0].max())
        assert np.allclose(res["oracle"][:, 1], 0.0, atol=4 * res["se"][:, 1].max())

    def test_deterministic_fv(self):
        def fn(gen, n, offset):
            out = poisson_bins(two_marks, 1.0, [0, 1.0], [Interval(0.5, 1.5)])(gen, n, offset)
            return np.full(n, 1.5), out[1][:, :, :1], out[2][:, :, :1], np.zeros_like(out[2][:, :, :1])
        res = verifier.integrand_regression_oracle(fn, 5000, 18)
        assert res["all_pass"] and abs(res["oracle"][0, 0]) <= 3 * res["se"][0, 0]

    def test_empty_bin_flagged(self):
        res = verifier.integrand_regression_oracle(
            poisson_bins(unit2, 1.0, [0, 1.0], [Interval(0.5, 1.5), Interval(3.0, 4.0)]), 1000, 19)
        assert res["empty"][0, 1] and res["pass"][0, 1]

    def test_kella_whitt_bins(self):
        case = presets.kella_whitt_case()
        stats = kella_whitt.bin_statistics(case, [0.0, 0.5, 1.0], [Interval(-1.5, -0.5), Interval(-0.5, -0.03125)])
        res = verifier.integrand_regression_oracle(stats, 20_000, 20)
        assert res["all_pass"]


def test_cylindrical_projection_monotone():
    model = CompensatorModel(PointMasses([[0.8], [1.2], [3.0]], [1.0, 1.0, 0.5]), Constant(1.0))

    def target(j):
        return float(np.sum(np.cos(3 * j.times) * j.marks[:, 0]))

    errs = verifier.cylindrical_projection(model, 1.0, target, [1, 2, 4], 3000, 21)
    assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0]
