"""Unit tests for eigenfunctions, composition-operator action, and averages."""

from __future__ import annotations

import numpy as np
import pytest

import koopcascade as kc
from koopcascade.observables import PERIPHERAL_TOL


@pytest.fixture(scope="module")
def diag_pair():
    """Layer norms 0.5 < 0.9 with an interior eigenvalue 0.2 in layer 2;
    everything about its spectrum is readable off the diagonals."""
    return kc.CascadeSystem.build(
        [np.array([[0.5]]), np.diag([0.9, 0.2])],
        {(2, 1): np.array([[1.0], [1.0]])},
    )


@pytest.fixture(scope="module")
def diag_pair_pd(diag_pair):
    return kc.compute_perturbation(diag_pair)


class TestPrincipalEigenfunction:
    def test_index_zero_constant(self, scalar_pair):
        psi = kc.principal_eigenfunction(scalar_pair, 1, 0)
        assert psi(np.array([123.0])) == 1.0
        assert psi.eigenvalue == 1.0

    def test_scalar_layer(self, scalar_pair):
        psi = kc.principal_eigenfunction(scalar_pair, 2, 1)
        assert psi.eigenvalue == pytest.approx(0.9)
        assert psi(np.array([2.0 + 1.0j])) == pytest.approx(2.0 + 1.0j)

    def test_diag_layer_picks_dominant(self, diag_pair):
        # oracle: check psi(Lx) = 0.9 psi(x) on random x
        psi = kc.principal_eigenfunction(diag_pair, 2, 1)
        assert psi.eigenvalue == pytest.approx(0.9)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2)
            lhs = psi(diag_pair.L[1] @ x)
            assert lhs == pytest.approx(0.9 * psi(x), rel=1e-12, abs=1e-14)

    def test_defining_identity_on_random_systems(self, replica):
        sys_, _, _ = replica
        rng = np.random.default_rng(1)
        for i in range(1, sys_.n + 1):
            for s in range(1, sys_.dims[i - 1] + 1):
                psi = kc.principal_eigenfunction(sys_, i, s)
                for _ in range(100 // sys_.dims[i - 1]):
                    x = rng.uniform(-1, 1, sys_.dims[i - 1]) + 1j * rng.uniform(
                        -1, 1, sys_.dims[i - 1]
                    )
                    diff = abs(psi(sys_.L[i - 1] @ x) - psi.eigenvalue * psi(x))
                    assert diff <= 1e-10 * (1 + abs(psi(x)))

    def test_index_out_of_range(self, scalar_pair):
        with pytest.raises(IndexError):
            kc.principal_eigenfunction(scalar_pair, 1, 2)
        with pytest.raises(IndexError):
            kc.principal_eigenfunction(scalar_pair, 3, 0)


class TestExtendToCascade:
    def test_reads_only_its_layer(self, diag_pair):
        f = kc.extend_to_cascade(kc.principal_eigenfunction(diag_pair, 2, 1), 2)
        a = kc.StateVector.of([[1.0], [2.0, 3.0]])
        b = kc.StateVector.of([[-9.0], [2.0, 3.0]])
        assert f(a) == f(b)
        assert f.multi_index == (0, 1)

    def test_layer1_extension_equals_base(self, scalar_pair):
        base = kc.principal_eigenfunction(scalar_pair, 1, 1)
        f = kc.extend_to_cascade(base, 2)
        x = kc.StateVector.of([[2.5], [7.0]])
        assert f(x) == pytest.approx(base(x.layer(1)))

    def test_all_zero_multi_index_constant(self, scalar_pair):
        f = kc.product_eigenfunction(scalar_pair, [0, 0])
        assert f(kc.StateVector.of([[5.0], [6.0]])) == 1.0
        assert f.eigenvalue == 1.0


class TestProduct:
    def test_constant_is_identity_element(self, scalar_pair):
        a = kc.product_eigenfunction(scalar_pair, [1, 0])
        one = kc.product_eigenfunction(scalar_pair, [0, 0])
        prod = a * one
        assert prod.multi_index == a.multi_index
        assert prod.eigenvalue == a.eigenvalue

    def test_multi_indices_add_eigenvalues_multiply(self, diag_pair):
        a = kc.product_eigenfunction(diag_pair, [1, 0])
        b = kc.product_eigenfunction(diag_pair, [0, 2])
        prod = a * b
        assert prod.multi_index == (1, 2)
        assert prod.eigenvalue == a.eigenvalue * b.eigenvalue
        assert prod.eigenvalue == pytest.approx(0.5 * 0.2)

    def test_pointwise_product(self, diag_pair):
        a = kc.product_eigenfunction(diag_pair, [1, 0])
        b = kc.product_eigenfunction(diag_pair, [0, 1])
        prod = a * b
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = kc.StateVector.of(
                [rng.uniform(-1, 1, 1) + 0j, rng.uniform(-1, 1, 2) + 0j]
            )
            assert prod(x) == pytest.approx(a(x) * b(x), rel=1e-12, abs=1e-12)

    def test_same_layer_rejected(self, diag_pair):
        a = kc.product_eigenfunction(diag_pair, [0, 1])
        b = kc.product_eigenfunction(diag_pair, [0, 2])
        with pytest.raises(kc.SameLayerProductError):
            _ = a * b

    def test_semigroup_eigenvalue_exact(self, replica):
        sys_, _, _ = replica
        a = kc.product_eigenfunction(sys_, [1] + [0] * (sys_.n - 1))
        b = kc.product_eigenfunction(sys_, [0] * (sys_.n - 1) + [1])
        assert (a * b).eigenvalue == a.eigenvalue * b.eigenvalue


class TestKoopmanApply:
    def test_t0_is_evaluation(self, scalar_pair, scalar_pair_pd):
        f = kc.product_eigenfunction(scalar_pair, [0, 1])
        x = kc.StateVector.of([[1.0], [2.0]])
        assert kc.koopman_apply(lambda st: kc.lin_step(scalar_pair, st), f, 0, x) == f(x)

    def test_nominal_eigen_decay(self, replica):
        # (prod lambda_i)^t f(x) under the decoupled dynamics
        sys_, _, _ = replica
        multi = [1] * sys_.n
        f = kc.product_eigenfunction(sys_, multi)
        x = sys_.random_state(np.random.default_rng(3))
        step = lambda st: kc.nom_step(sys_, st)  # noqa: E731
        for t in (1, 3, 7):
            expect = f.eigenvalue**t * f(x)
            assert kc.koopman_apply(step, f, t, x) == pytest.approx(
                expect, rel=1e-9, abs=1e-12
            )

    def test_lin_with_pert_hand_value(self, scalar_pair, scalar_pair_pd):
        # pert-composed eigenfunction under the coupled step: 0.9 * 3.5 = 3.15
        f = kc.compose_with_perturbation(
            kc.product_eigenfunction(scalar_pair, [0, 1]), scalar_pair_pd
        )
        x = kc.StateVector.of([[1.0], [1.0]])
        val = kc.koopman_apply(lambda st: kc.lin_step(scalar_pair, st), f, 1, x)
        assert val == pytest.approx(3.15, abs=1e-12)
        assert f(x) == pytest.approx(3.5, abs=1e-12)


class TestEigenfunctionResidual:
    def test_decoupled_zero(self):
        sys_ = kc.CascadeSystem.build(
            [np.diag([0.4, 0.3]), np.diag([0.9, 0.8])],
            {(2, 1): np.zeros((2, 2))},
        )
        pd = kc.compute_perturbation(sys_)
        samples = [sys_.random_state(np.random.default_rng(4)) for _ in range(5)]
        res = kc.eigenfunction_residuals(sys_, pd, samples, horizon=20)
        assert max(res.values()) < 1e-13

    def test_scalar_pair_tight(self, scalar_pair, scalar_pair_pd):
        samples = [scalar_pair.random_state(np.random.default_rng(5)) for _ in range(10)]
        r = kc.eigenfunction_residual(scalar_pair, scalar_pair_pd, 2, 1, samples, horizon=50)
        assert r < 1e-10

    def test_replica_all_pairs(self, replica):
        sys_, pd, _ = replica
        samples = [sys_.random_state(np.random.default_rng(6)) for _ in range(20)]
        res = kc.eigenfunction_residuals(sys_, pd, samples, horizon=50)
        assert len(res) == sum(sys_.dims)
        assert max(res.values()) < 1e-8

    def test_bad_indices(self, scalar_pair, scalar_pair_pd):
        with pytest.raises(IndexError):
            kc.eigenfunction_residual(scalar_pair, scalar_pair_pd, 1, 0, [], 5)


class TestEigenfunctionBounds:
    def test_replica_bounds_and_decay(self, replica):
        sys_, pd, x0 = replica
        rep = kc.check_eigenfunction_bounds(sys_, pd, x0, 100)
        assert rep.bounds_ok, rep.max_bound_violation
        assert rep.decay_ok
        assert rep.passed
        # ratio decays by >= 1e3 from its max for every coupled layer pair
        assert all(r < 1e-3 for r in rep.decay_ratios.values())

    def test_decoupled_trivially_passes(self):
        sys_ = kc.CascadeSystem.build(
            [np.diag([0.4, 0.3]), np.diag([0.9, 0.8])],
            {(2, 1): np.zeros((2, 2))},
        )
        pd = kc.compute_perturbation(sys_)
        x0 = sys_.random_state(np.random.default_rng(7))
        rep = kc.check_eigenfunction_bounds(sys_, pd, x0, 60)
        assert rep.passed


class TestLaplaceAverage:
    def test_decoupled_exact_every_n(self):
        sys_ = kc.CascadeSystem.build(
            [np.array([[0.5]]), np.diag([0.9, 0.2])],
        )
        pd = kc.compute_perturbation(sys_)
        x = sys_.random_state(np.random.default_rng(8))
        f = kc.product_eigenfunction(sys_, [0, 1])
        for N in (1, 5, 50):
            avg = kc.laplace_average(sys_, pd, 2, 1, x, N)
            assert avg == pytest.approx(f(x), rel=1e-10, abs=1e-12)

    def test_scalar_pair_converges_with_rate(self, scalar_pair, scalar_pair_pd):
        # partial-sum oracle: error at N vs 2N approximately halves
        x = kc.StateVector.of([[1.0], [1.0]])
        target = 3.5
        errs = {
            N: abs(kc.laplace_average(scalar_pair, scalar_pair_pd, 2, 1, x, N) - target)
            for N in (250, 500, 1000, 2000)
        }
        assert errs[1000] < 5e-3 * abs(target)
        for N in (250, 500, 1000):
            assert errs[2 * N] < errs[N]
            assert errs[2 * N] == pytest.approx(errs[N] / 2, rel=0.2)

    def test_layer1_exact_every_n(self, scalar_pair, scalar_pair_pd):
        x = kc.StateVector.of([[0.7], [0.3]])
        psi = kc.principal_eigenfunction(scalar_pair, 1, 1)
        for N in (1, 10, 100):
            avg = kc.laplace_average(scalar_pair, scalar_pair_pd, 1, 1, x, N)
            assert avg == pytest.approx(psi(x.layer(1)), rel=1e-12, abs=1e-14)

    def test_not_peripheral_raises(self, diag_pair, diag_pair_pd):
        x = diag_pair.random_state(np.random.default_rng(9))
        with pytest.raises(kc.NotPeripheralError):
            kc.laplace_average(diag_pair, diag_pair_pd, 2, 2, x, 50)

    def test_convergence_envelope(self, scalar_pair, scalar_pair_pd):
        # |avg(N) - target| is non-increasing and below C/N, C from the
        # first ten terms (with a 1.25 safety factor)
        x = kc.StateVector.of([[1.0], [1.0]])
        target = 3.5
        errs = [
            abs(kc.laplace_average(scalar_pair, scalar_pair_pd, 2, 1, x, N) - target)
            for N in range(1, 81)
        ]
        for k in range(1, len(errs)):
            assert errs[k] <= errs[k - 1] * (1 + 1e-12) + 1e-15
        C = 1.25 * max((k + 1) * e for k, e in enumerate(errs[:10]))
        for k, e in enumerate(errs):
            assert e < C / (k + 1)


class TestDeflatedLaplaceAverage:
    def test_peripheral_matches_plain(self, scalar_pair, scalar_pair_pd):
        x = kc.StateVector.of([[1.0], [1.0]])
        for N in (10, 200):
            plain = kc.laplace_average(scalar_pair, scalar_pair_pd, 2, 1, x, N)
            deflated = kc.deflated_laplace_average(scalar_pair, scalar_pair_pd, 2, 1, x, N)
            assert deflated == pytest.approx(plain, rel=1e-10, abs=1e-12)

    def test_converges_where_raw_average_diverges(self, diag_pair, diag_pair_pd):
        # interior eigenvalue 0.2 sits below the upstream modes (0.5, 0.9):
        # the raw average blows up, the deflated one nails psi o pert
        x = kc.StateVector.of([[1.0], [1.0, 1.0]])
        f = kc.compose_with_perturbation(
            kc.product_eigenfunction(diag_pair, [0, 2]), diag_pair_pd
        )
        target = f(x)
        lam = complex(diag_pair.eig_of(2).eigenvalues[1])
        assert abs(lam) == pytest.approx(0.2, abs=1e-12)

        # raw-average oracle, computed from the public orbit primitives
        raw = kc.product_eigenfunction(diag_pair, [0, 2])
        trace = kc.iterate_lin(diag_pair, x, 20)
        raw_terms = [raw(trace[t]) / lam**t for t in range(21)]
        raw_errs = [
            abs(np.mean(raw_terms[:N]) - target) for N in (5, 10, 15, 20)
        ]
        assert raw_errs[-1] > 100 * abs(target)  # diverging
        assert raw_errs[-1] > raw_errs[0]

        for N in (5, 10, 20):
            avg = kc.deflated_laplace_average(diag_pair, diag_pair_pd, 2, 2, x, N)
            assert avg == pytest.approx(target, rel=1e-6, abs=1e-9)

    def test_decoupled_interior_exact(self):
        sys_ = kc.CascadeSystem.build([np.array([[0.5]]), np.diag([0.9, 0.2])])
        pd = kc.compute_perturbation(sys_)
        x = sys_.random_state(np.random.default_rng(10))
        f = kc.product_eigenfunction(sys_, [0, 2])
        for N in (1, 7, 40):
            avg = kc.deflated_laplace_average(sys_, pd, 2, 2, x, N)
            assert avg == pytest.approx(f(x), rel=1e-10, abs=1e-12)

    def test_noise_takeover_raises(self, diag_pair, diag_pair_pd):
        # rounding noise grows like (0.9 / 0.2)^t; deep averages must refuse
        x = kc.StateVector.of([[1.0], [1.0, 1.0]])
        with pytest.raises(kc.DeflationIncompleteError):
            kc.deflated_laplace_average(diag_pair, diag_pair_pd, 2, 2, x, 400)


class TestPeripheralTolerance:
    def test_scalar_layers_always_peripheral(self, scalar_pair):
        for i in (1, 2):
            lam = complex(scalar_pair.eig_of(i).eigenvalues[0])
            assert abs(abs(lam) - scalar_pair.norms[i - 1]) <= PERIPHERAL_TOL


class TestEigenfunctionJson:
    def test_schema(self, scalar_pair):
        obj = kc.observables.eigenfunction_to_json(scalar_pair, 2, 1, composed_with_pert=True)
        assert set(obj) == {"layer", "index", "eigenvalue", "coeff_row", "composed_with_pert"}
        assert obj["layer"] == 2 and obj["index"] == 1
        assert obj["coeff_row"]["rows"] == 1 and obj["coeff_row"]["cols"] == 1
        assert obj["composed_with_pert"] is True
