import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fieldgen import random_measure, random_model, random_path, random_simple_field
from jumprep.compensator import CompensatorModel, Constant, Deterministic, PathDependent, PointMasses
from jumprep.errors import DomainError
from jumprep.functional import (Coefficient, Functional, HittingSpec, PredictableField, SimpleField, SimplePhi,
                                StepSchedule, compensated_integral, diffusion_integral, integral_functional,
                                linear_combination, mu_integral, nabla_p, riemann_functional,
                                vertical_diffusion_derivative, vertical_jump_derivative)
from jumprep.measure import Annulus, AtomicMeasure, CadlagPath, Interval, MarkRegion, StopMode, add_atom, restrict

Z = MarkRegion(Annulus(0.5, 2.0))
T = 1.0


def count_functional(region=Z):
    return Functional(lambda t, x, j: float(restrict(j, t).count(0.0, t, region)))


def brute_force_integral(field, model, x, j, t):
    """Atom loop plus nested quadrature, independent of the cell-mass path."""
    jt = restrict(j, t)
    jumps = sum(field.evaluate(s, z[None, :], x, jt)[0] for s, z in zip(jt.times, jt.marks))
    nodes, w = model.mark_nodes()
    pts = np.unique(np.concatenate([[0.0], jt.times[jt.times < t], [t]]))
    taus = field.taus(jt)
    pts = np.unique(np.concatenate([pts, taus[(taus > 0) & (taus < t)]]))
    comp = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        g = lambda s: float(model.intensity.rate_at(s, restrict(jt, a)) if not isinstance(
            model.intensity, PathDependent) else model.intensity.rate_at(b, restrict(jt, a))) * float(
            np.sum(w * field.evaluate(s, nodes, x, jt)))
        comp += integrate.quad(g, a, b, epsabs=1e-14, epsrel=1e-12)[0]
    return jumps - comp


class TestJumpDerivative:
    j = AtomicMeasure.from_atoms([(0.2, 1.0), (0.6, -3.0)], T)

    @pytest.mark.parametrize("z, expected", [(1.0, 1.0), (3.0, 0.0), (-0.7, 1.0), (0.1, 0.0)])
    def test_counting(self, z, expected):
        assert vertical_jump_derivative(count_functional(), 0.5, z, None, self.j) == expected

    def test_constant(self):
        assert vertical_jump_derivative(Functional(lambda t, x, j: 4.2), 0.5, 1.0, None, self.j) == 0.0

    def test_zero_mark(self):
        with pytest.raises(DomainError):
            vertical_jump_derivative(count_functional(), 0.5, 0.0, None, self.j)

    def test_square_of_count(self):
        F = Functional(lambda t, x, j: float(restrict(j, t).count(0.0, t, Z)) ** 2)
        for t in (0.1, 0.2, 0.5, 0.9):
            prior = restrict(self.j, t, StopMode.OPEN).count(0.0, t, Z)
            assert nabla_p(F)(t, 1.0, None, self.j) == 2 * prior + 1
            assert nabla_p(F)(t, 5.0, None, self.j) == 0.0

    def test_checked_closed_form(self):
        F = Functional(count_functional().evaluate, jump_derivative=lambda t, z, x, j: float(Z.contains(
            np.atleast_2d(z))[0]))
        assert vertical_jump_derivative(F, 0.5, 1.0, None, self.j, check=True) == 1.0

    def test_linearity(self, rng):
        F = count_functional()
        G = Functional(lambda t, x, j: float(np.sum(restrict(j, t).marks ** 2)))
        H = linear_combination(2.0, F, -3.0, G)
        for _ in range(50):
            t, z = rng.uniform(0, 1), rng.choice([-1.5, 0.7, 1.0, 2.5])
            j = random_measure(rng)
            lhs = vertical_jump_derivative(H, t, z, None, j)
            rhs = 2 * vertical_jump_derivative(F, t, z, None, j) - 3 * vertical_jump_derivative(G, t, z, None, j)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_predictable_fv_functional(self):
        m = CompensatorModel(PointMasses([[1.0]], [1.0]), PathDependent(1.0, 2.0))
        F = Functional(lambda t, x, j: m.intensity.integral(0.0, t, restrict(j, t)))
        for t in (0.1, 0.3, 0.7):
            assert vertical_jump_derivative(F, t, 1.0, None, self.j) == 0.0


class TestNablaP:
    def test_inverse_of_integral(self, rng):
        for _ in range(60):
            m = random_model(rng)
            psi = random_simple_field(rng, m)
            F = integral_functional(psi, m)
            for _ in range(5):
                j = random_measure(rng)
                t, z = float(rng.uniform(0, T)), rng.choice([-1.5, -0.7, 0.4, 0.9, 1.6])[None]
                assert nabla_p(F)(t, z, None, j) == pytest.approx(psi.as_field()(t, z, None, j), abs=1e-9)

    def test_predictability_probe(self, rng):
        F = Functional(lambda t, x, j: float(np.sum(np.exp(restrict(j, t).marks))))
        field = nabla_p(F, Z)
        for _ in range(50):
            j = random_measure(rng)
            t = float(rng.uniform(0, T))
            assert field(t, 1.0, None, j) == field(t, 1.0, None, add_atom(j, t, 0.9))

    def test_regular_field_inverse(self):
        m = CompensatorModel(PointMasses([[0.8], [1.2]], [1.0, 0.5]), Deterministic.sinusoid(2, 1, 4))
        psi = PredictableField(lambda t, z, x, j: np.sin(3 * t) * z[:, 0] + len(j), Z)
        F = integral_functional(psi, m)
        j = AtomicMeasure.from_atoms([(0.3, 0.8), (0.5, 1.2)], T)
        for t in (0.2, 0.4, 0.8):
            assert nabla_p(F)(t, 1.2, None, j) == pytest.approx(psi(t, 1.2, None, j), abs=1e-9)


class TestCompensatedIntegral:
    m = CompensatorModel(PointMasses([[1.0]], [1.0]), Constant(2.0))

    def test_unit_field(self):
        psi = SimpleField((0.0, T), (Annulus(0.5, 2.0),), ((Coefficient(1.0),),))
        j = AtomicMeasure.from_atoms([(0.1, 1.0), (0.4, 1.0), (0.9, 1.0)], T)
        assert compensated_integral(psi, self.m, None, j, 0.5) == pytest.approx(2 - 1.0)

    def test_zero_field(self):
        psi = PredictableField(lambda t, z, x, j: np.zeros(len(z)), Z)
        j = AtomicMeasure.from_atoms([(0.1, 1.0)], T)
        assert compensated_integral(psi, self.m, None, j, 1.0) == 0.0

    def test_support_touching_zero(self):
        psi = PredictableField(lambda t, z, x, j: np.ones(len(z)))
        with pytest.raises(DomainError):
            compensated_integral(psi, self.m, None, AtomicMeasure.empty(T), 1.0)

    def test_generic_matches_exact(self, rng):
        for _ in range(20):
            m = random_model(rng, "deterministic")
            psi = random_simple_field(rng, m, hitting=False)
            j = random_measure(rng)
            exact = compensated_integral(psi, m, None, j, T)
            generic = compensated_integral(psi.as_field(), m, None, j, T)
            assert generic == pytest.approx(exact, abs=1e-7)

    def test_random_fields_vs_brute_force(self, rng):
        for _ in range(40):
            m = random_model(rng)
            psi = random_simple_field(rng, m, with_x=True)
            j, x = random_measure(rng), random_path(rng)
            t = float(rng.uniform(0.3, T))
            assert compensated_integral(psi, m, x, j, t) == pytest.approx(brute_force_integral(psi, m, x, j, t),
                                                                          abs=1e-9)

    def test_degenerate_cell(self):
        psi = SimpleField((0.0, 0.5, 0.5, T), (Annulus(0.5, 2.0),), ((Coefficient(1.0),), (Coefficient(7.0),),
                                                                     (Coefficient(1.0),)))
        j = AtomicMeasure.from_atoms([(0.5, 1.0)], T)
        assert compensated_integral(psi, self.m, None, j, T) == pytest.approx(1 - 2.0)

    def test_hitting_grid(self):
        hs = HittingSpec(MarkRegion(Annulus(0.5, 2.0)), 1.0)  # mass 1 reached at t = 0.5
        psi = SimpleField((0.0, hs, T), (Annulus(0.5, 2.0),), ((Coefficient(0.0),), (Coefficient(1.0),)), self.m)
        assert psi.taus(AtomicMeasure.empty(T))[1] == pytest.approx(0.5)
        j = AtomicMeasure.from_atoms([(0.3, 1.0), (0.7, 1.0)], T)
        assert compensated_integral(psi, self.m, None, j, T) == pytest.approx(1 - 1.0)

    def test_mu_integral_constant(self):
        val = mu_integral(lambda s, z, ja: np.ones(len(z)), self.m, AtomicMeasure.empty(T), 0.75, Z)
        assert val == pytest.approx(1.5, rel=1e-12)


class TestSimpleFieldValidation:
    def test_cells_must_avoid_zero(self):
        with pytest.raises(DomainError):
            SimpleField((0.0, T), (Interval(-1.0, 1.0),), ((Coefficient(1.0),),))

    def test_cells_disjoint(self):
        with pytest.raises(DomainError):
            SimpleField((0.0, T), (Interval(0.5, 1.0), Interval(0.8, 1.5)), ((Coefficient(), Coefficient()),))

    def test_shape(self):
        with pytest.raises(DomainError):
            SimpleField((0.0, 0.5, T), (Interval(0.5, 1.0),), ((Coefficient(),),))

    def test_hitting_needs_model(self):
        with pytest.raises(DomainError):
            SimpleField((0.0, HittingSpec(Z, 0.1), T), (Interval(0.5, 1.0),), ((Coefficient(),), (Coefficient(),)))

    def test_json_round_trip(self, rng):
        for _ in range(20):
            m = random_model(rng)
            psi = random_simple_field(rng, m)
            back = SimpleField.from_dict(psi.to_dict())
            j = random_measure(rng)
            assert compensated_integral(back, m, None, j, T) == pytest.approx(
                compensated_integral(psi, m, None, j, T), abs=1e-12)


class TestDiffusion:
    x = CadlagPath.uniform([0.0, 0.3, -0.2, 0.5, 0.1], T)

    def test_telescoping(self):
        phi = SimplePhi((0.0, T), (Coefficient(1.0),))
        assert diffusion_integral(phi, self.x, T) == pytest.approx(0.1)

    def test_zero(self):
        assert diffusion_integral(SimplePhi((0.0, T), (Coefficient(0.0),)), self.x, T) == 0.0

    def test_unsorted(self):
        with pytest.raises(DomainError):
            SimplePhi((0.0, 0.6, 0.3), (Coefficient(1.0), Coefficient(1.0)))

    def test_random_vs_brute_force(self, rng):
        for _ in range(100):
            grid = np.concatenate([[0.0], np.sort(rng.uniform(0, T, 3)), [T]])
            c = rng.normal(size=4)
            phi = SimplePhi(tuple(grid), tuple(Coefficient(v) for v in c))
            x = random_path(rng)
            t = float(rng.uniform(0, T))
            ref = sum(c[i] * (x.value_at(min(grid[i + 1], t)) - x.value_at(min(grid[i], t))) for i in range(4))
            assert diffusion_integral(phi, x, t) == pytest.approx(ref, abs=1e-12)


class TestDiffusionDerivative:
    def test_quadratic(self):
        x = CadlagPath.uniform(np.linspace(0.0, 1.3, 11), T)
        F = Functional(lambda t, x, j: float(x.value_at(t)) ** 2)
        val, tables = vertical_diffusion_derivative(F, 0.55, x, AtomicMeasure.empty(T),
                                                    StepSchedule(1e-3, 0.5, 6))
        assert val == pytest.approx(2 * float(x.value_at(0.55)), rel=1e-8)
        assert tables[0].shape == (6, 6)

    def test_riemann_integral(self, rng):
        phi = SimplePhi((0.0, 0.4, T), (Coefficient(0.7), Coefficient(0.2, (("x", 0.3),), (1.5,))))
        F = riemann_functional(phi)
        for _ in range(20):
            x, t = random_path(rng), float(rng.uniform(0.05, T))
            num, _ = vertical_diffusion_derivative(F, t, x, AtomicMeasure.empty(T))
            assert num == pytest.approx(phi.value(t, x, None), rel=1e-6, abs=1e-12)

    def test_pure_jump_integral_is_flat(self, rng):
        m = random_model(rng, "constant")
        F = integral_functional(random_simple_field(rng, m), m)
        for _ in range(10):
            j, x = random_measure(rng), random_path(rng)
            assert vertical_diffusion_derivative(F, float(rng.uniform(0, T)), x, j)[0] == 0.0

    def test_riemann_has_no_jump_derivative(self, rng):
        F = riemann_functional(SimplePhi((0.0, T), (Coefficient(0.7, (("x", 0.2),), (1.0,)),)))
        x = random_path(rng)
        for _ in range(10):
            assert vertical_jump_derivative(F, float(rng.uniform(0, T)), 1.0, x, random_measure(rng)) == 0.0

    def test_gradient_matches_closed_form(self, rng):
        F = Functional(lambda t, x, j: float(np.exp(x.value_at(t))) * (1 + len(restrict(j, t))),
                       diffusion_derivative=lambda t, x, j: float(np.exp(x.value_at(t))) * (1 + len(restrict(j, t))))
        for _ in range(20):
            x, j, t = random_path(rng), random_measure(rng), float(rng.uniform(0, T))
            num, _ = vertical_diffusion_derivative(F, t, x, j)
            assert num == pytest.approx(F.diffusion_derivative(t, x, j), rel=1e-6)

    def test_bad_schedule(self):
        with pytest.raises(DomainError):
            StepSchedule(1e-3, 1.5, 6)

    @given(st.floats(-2, 2), st.floats(0.01, 0.99))
    def test_nonanticipative(self, a, t):
        x = CadlagPath.uniform(np.linspace(0.0, a, 21), T)
        F = Functional(lambda s, x, j: float(x.value_at(s)) ** 3)
        assert F(t, x, None) == F(t, x.stopped(t), None)
