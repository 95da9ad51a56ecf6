"""AFAS and LAFAS construction, flow operators and the quantitative estimates."""
import itertools
import math

import numpy as np
import pytest

from mdeflow.afas import (
    AfasConfig,
    Partition,
    PartitionError,
    build_afas,
    build_lafas,
    convergence_study,
    e_flow,
    f_flow,
    particle_distance,
    step_seed,
)
from mdeflow.estimates import (
    e_step_check,
    f_step_check,
    gronwall_rate,
    holder_constant_bound,
    holder_quotients,
    moment_growth_constant,
    moment_lipschitz,
)
from mdeflow.fields import Box, sine_shear
from mdeflow.measure import EmpiricalMeasure, covariance, moment
from mdeflow.scenarios import cube_roots_vfp, drifted_wiener, wiener, wiener_vfp
from mdeflow.scenarios import zero_field as zero_scenario
from mdeflow.transport import curve_sup_distance, wasserstein
from mdeflow.vfp import VectorFieldProbability, VfpMap

CFG = AfasConfig(particle_budget=2000, seed=3)


def exact_1d(a, b, p=2):
    return wasserstein(a, b, p, "Exact1D").cost


class TestPartition:
    def test_uniform(self):
        P = Partition.uniform(2.0, 8)
        assert P.steps == 8 and P.horizon == 2.0 and P.mesh == pytest.approx(0.25)

    @pytest.mark.parametrize("nodes", [[0.0], [0.1, 1.0], [0.0, 0.5, 0.5], [0.0, 1.0, 0.7]])
    def test_invalid(self, nodes):
        with pytest.raises(PartitionError):
            Partition(nodes)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            AfasConfig(particle_budget=0)
        with pytest.raises(ValueError):
            AfasConfig(flow_substeps=0)


class TestOperators:
    def test_e_flow_wiener_identity(self):
        m = EmpiricalMeasure([0.0, 1.0])
        assert e_flow(wiener_vfp(), m, 0.7, CFG) is m

    def test_e_flow_translation(self):
        v = VectorFieldProbability.from_vectors([1.0], [[0.5, -1.0]])
        m = EmpiricalMeasure([[0.0, 0.0], [1.0, 1.0]])
        out = e_flow(v, m, 0.4, CFG)
        np.testing.assert_allclose(out.points, m.points + 0.4 * np.array([0.5, -1.0]))
        assert out.size == m.size

    def test_f_flow_zero_time(self):
        m = EmpiricalMeasure([0.0, 1.0])
        assert f_flow(wiener_vfp(), m, 0.0, CFG) is m

    def test_f_flow_wiener_step(self):
        out = f_flow(wiener_vfp(), EmpiricalMeasure.dirac([0.0]), 0.25, CFG)
        np.testing.assert_allclose(np.sort(out.points[:, 0]), [-0.5, 0.5])
        np.testing.assert_allclose(out.weights, 0.5)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            e_flow(wiener_vfp(), EmpiricalMeasure([0.0]), -1.0, CFG)
        with pytest.raises(ValueError):
            f_flow(wiener_vfp(), EmpiricalMeasure([0.0]), -1.0, CFG)

    @pytest.mark.parametrize("s,t", [(0.0, 0.1), (0.05, 0.3), (0.2, 0.21)])
    def test_step_estimates(self, s, t):
        m = EmpiricalMeasure(np.random.default_rng(0).normal(size=(300, 2)) * 0.5)
        box = Box.cube([0.0, 0.0], 4.0)
        v = VectorFieldProbability([0.4, 0.6], [sine_shear(0.5, 1.0), VectorFieldProbability.from_vectors([1.0], [[0.3, -0.2]]).fields[0]])
        cfg = AfasConfig(particle_budget=600, seed=1)
        dist = lambda a, b: particle_distance(a, b, 2, cap=600)
        assert e_step_check(v, m, s, t, 2, box, cfg, dist).ok
        assert f_step_check(v, m, s, t, 2, box, cfg, dist).ok
        for vv in (wiener_vfp(),):
            m1 = EmpiricalMeasure(np.linspace(-1, 1, 101))
            assert f_step_check(vv, m1, s, t, 2, Box.cube([0.0], 3.0), cfg, exact_1d).ok

    def test_step_seeds_distinct(self):
        seeds = {step_seed(0, l) for l in range(1000)}
        assert len(seeds) == 1000
        assert step_seed(5, 3) == step_seed(5, 3)


class TestAfas:
    def test_single_step_wiener(self):
        sc = wiener()
        c = build_afas(sc.V, sc.mu0, Partition([0.0, 1.0]), CFG)
        end = c.states[-1]
        np.testing.assert_allclose(np.sort(end.points[:, 0]), [-1.0, 1.0])
        np.testing.assert_allclose(end.weights, 0.5)

    def test_half_steps(self):
        sc = drifted_wiener()
        c = build_afas(sc.V, sc.mu0, Partition([0.0, 1.0]), AfasConfig(record_half_steps=True))
        np.testing.assert_array_equal(c.times, [0.0, 0.5, 1.0])
        # midpoint: centered atoms -1.5, +1.5 for time sqrt(1); then drift 0.5
        np.testing.assert_allclose(np.sort(c.states[1].points[:, 0]), [-1.5, 1.5])
        np.testing.assert_allclose(np.sort(c.states[2].points[:, 0]), [-1.0, 2.0])

    def test_zero_field_constant(self):
        sc = zero_scenario(2)
        c = build_afas(sc.V, sc.mu0, Partition.uniform(1.0, 10), CFG)
        for m in c.states:
            np.testing.assert_array_equal(m.points, sc.mu0.points)

    def test_dim_mismatch(self):
        sc = wiener()
        with pytest.raises(ValueError):
            build_afas(sc.V, EmpiricalMeasure.dirac([0.0, 0.0]), Partition.uniform(1.0, 2), CFG)

    def test_deterministic(self):
        sc = wiener()
        P = Partition.uniform(1.0, 32)
        a = build_afas(sc.V, sc.mu0, P, CFG)
        b = build_afas(sc.V, sc.mu0, P, CFG)
        for x, y in zip(a.states, b.states):
            np.testing.assert_array_equal(x.points, y.points)
            np.testing.assert_array_equal(x.weights, y.weights)

    @pytest.mark.parametrize("centered", [True, False])
    def test_clt_identity_without_resampling(self, centered):
        # 3 atoms, 4 steps: 81 paths, below the budget
        xs = np.array([-1.0, 0.5, 2.0])
        w = np.array([0.2, 0.5, 0.3])
        if centered:
            xs = xs - w @ xs
        v = VectorFieldProbability.from_vectors(w, xs)
        N = 4
        c = build_afas(VfpMap.constant(v), EmpiricalMeasure.dirac([0.0]), Partition.uniform(1.0, N), CFG)
        mean = w @ xs
        pts, wts = [], []
        for path in itertools.product(range(3), repeat=N):
            pts.append(sum(xs[k] - mean for k in path) / math.sqrt(N) + mean)
            wts.append(np.prod(w[list(path)]))
        oracle = EmpiricalMeasure(pts, wts)
        assert exact_1d(c.states[-1], oracle, 1) <= 1e-12

    def test_cube_roots_covariance(self):
        v = cube_roots_vfp()
        c = build_afas(VfpMap.constant(v), EmpiricalMeasure.dirac([0.0, 0.0]), Partition.uniform(1.0, 64),
                       AfasConfig(particle_budget=20_000, seed=0))
        # a_c = I / 2 for this VFP, so the exact law at t = 1 is N(0, I / 2)
        assert np.linalg.norm(covariance(c.states[-1]) - 0.5 * np.eye(2)) <= 0.05 * np.linalg.norm(0.5 * np.eye(2))


class TestLafas:
    def test_constant_bit_exact(self):
        sc = wiener()
        P = Partition.uniform(1.0, 20)
        a = build_afas(sc.V, sc.mu0, P, CFG)
        b = build_lafas(lambda t: wiener_vfp(), sc.mu0, P, CFG)
        for x, y in zip(a.states, b.states):
            np.testing.assert_array_equal(x.points, y.points)

    def test_zero_field(self):
        mu0 = EmpiricalMeasure([0.0, 1.0, 3.0])
        c = build_lafas(lambda t: VectorFieldProbability.from_vectors([1.0], [0.0]), mu0, Partition.uniform(1.0, 5), CFG)
        for m in c.states:
            np.testing.assert_array_equal(m.points, mu0.points)

    def test_fixed_point(self):
        # mean-reverting state dependence; LAFAS along the AFAS curve reproduces it
        def rule(mu):
            c = -0.5 * mu.mean()[0]
            return VectorFieldProbability.from_vectors([0.5, 0.5], [c + 1.0, c - 1.0])

        V = VfpMap(rule, 1, lipschitz_bound=0.5)
        P = Partition.uniform(1.0, 32)
        mu0 = EmpiricalMeasure.dirac([1.0])
        afas = build_afas(V, mu0, P, CFG)
        lafas = build_lafas(lambda t: V(afas.at(t)), mu0, P, CFG)
        assert curve_sup_distance(afas, lafas) <= 1e-12


class TestConvergence:
    def test_wiener_decreasing(self):
        sc = wiener(reference_size=5000)
        rep = convergence_study(sc.V, sc.mu0, 1.0, [4, 16, 64], AfasConfig(particle_budget=5000), reference=sc.reference)
        d = [r.distance_to_reference for r in rep.levels]
        assert d[0] > d[1] > d[2]
        assert rep.noise_floor > 0
        csv = rep.to_csv().splitlines()
        assert csv[0] == "level,sup_distance_to_next,distance_to_reference"
        assert csv[-1].startswith("64,,")

    def test_zero_field(self):
        sc = zero_scenario(1)
        rep = convergence_study(sc.V, sc.mu0, 1.0, [2, 4], CFG, reference=sc.reference)
        assert all(r.distance_to_reference == 0.0 for r in rep.levels)
        assert rep.levels[0].sup_distance_to_next == 0.0

    def test_levels_increasing(self):
        sc = wiener()
        with pytest.raises(ValueError):
            convergence_study(sc.V, sc.mu0, 1.0, [8, 4], CFG)


@pytest.fixture(scope="module")
def wiener_curve():
    sc = wiener()
    return build_afas(sc.V, sc.mu0, Partition.uniform(1.0, 64), AfasConfig(particle_budget=4000, seed=11))


class TestEstimates:
    def test_constants(self):
        assert gronwall_rate(2, 0.0, 1.0) == pytest.approx(1.0)
        assert moment_growth_constant(2, 1.0) == pytest.approx(13.0)
        assert holder_constant_bound(1.0) == 8.0

    def test_moment_growth(self, wiener_curve):
        # M_2(t) = t along the Wiener curve, well inside the constant 13
        L = moment_lipschitz(wiener_curve, 2)
        assert L <= moment_growth_constant(2, 1.0)
        assert moment(wiener_curve.states[-1], [0.0], 2) == pytest.approx(1.0, abs=0.02)

    def test_holder(self, wiener_curve):
        Q = holder_quotients(wiener_curve, 2, exact_1d)
        assert Q.max() <= holder_constant_bound(1.0)

    def test_gronwall(self):
        sc = drifted_wiener()
        P = Partition.uniform(1.0, 32)
        mu0 = EmpiricalMeasure(np.linspace(-0.5, 0.5, 11))
        nu0 = EmpiricalMeasure(np.linspace(-0.5, 0.5, 11) ** 3 + 0.2)
        a = build_afas(sc.V, mu0, P, CFG)
        b = build_afas(sc.V, nu0, P, CFG)
        L, R, _ = sc.declared_bounds
        rate = gronwall_rate(2, L, R)
        d0 = exact_1d(mu0, nu0)
        for t, x, y in zip(a.times, a.states, b.states):
            # sampling noise from the independent resamplings of the two runs
            assert exact_1d(x, y) <= d0 * math.exp(rate * t) + 0.02
