import numpy as np
import pytest
from scipy.integrate import trapezoid

from adapters import SuperpotentialAdapter
from lib.errors import NormalizationError, ValidationError
from lib.spatial import SpatialGrid, SuperpotentialField, first_difference, lowest_eigenpairs
from services.susy_service import PhysParams, SusyService

PARAMS = PhysParams(hbar=1.0, mass=0.5)


@pytest.fixture
def service():
    return SusyService()


@pytest.fixture
def grid():
    return SpatialGrid(-10.0, 10.0, 2001)


def linear(grid, scale=1.0):
    return SuperpotentialAdapter('linear', scale).field(grid)


class TestSpatialGrid:
    def test_spacing_and_refinement(self, grid):
        assert grid.dx == pytest.approx(0.01)
        assert grid.box_length == pytest.approx(20.02)
        fine = grid.refine()
        assert fine.n_points == 4001
        assert fine.dx == pytest.approx(0.005)

    def test_rejects_empty_interval(self):
        with pytest.raises(ValidationError):
            SpatialGrid(1.0, 1.0, 11)
        with pytest.raises(ValidationError):
            SpatialGrid(0.0, 1.0, 2)

    def test_interior_needs_points(self):
        with pytest.raises(ValidationError):
            SpatialGrid(0.0, 1.0, 5).interior(3)

    def test_first_difference_is_antisymmetric(self, grid):
        for order in (2, 4, 6):
            d = first_difference(grid, order)
            assert d.symmetry_defect() > 0
            assert np.max(np.abs((d.matrix + d.matrix.T).toarray())) == 0.0
        with pytest.raises(ValidationError):
            first_difference(grid, 3)

    def test_superpotential_prime_fallback(self, grid):
        field = SuperpotentialField(grid, grid.x ** 2)
        assert np.allclose(field.w_prime, 2.0 * grid.x, atol=1e-10)
        assert field.prime_consistency() < 1e-10


def test_phys_params():
    assert PARAMS.c == pytest.approx(1.0)
    assert PhysParams(hbar=1.0, mass=1.0).c == pytest.approx(1.0 / np.sqrt(2.0))
    with pytest.raises(ValidationError):
        PhysParams(hbar=0.0)


def test_partner_potentials(service, grid):
    v_plus, v_minus = service.partner_potentials(linear(grid), PARAMS)
    assert np.allclose(v_plus, grid.x ** 2 + 1.0)
    assert np.allclose(v_minus, grid.x ** 2 - 1.0)

    zero = SuperpotentialAdapter('zero').field(grid)
    v_plus, v_minus = service.partner_potentials(zero, PARAMS)
    assert not v_plus.any() and not v_minus.any()


class TestGroundState:
    def test_linear_superpotential_gives_gaussian(self, service, grid):
        psi = service.ground_state_from_w(linear(grid), grid, PARAMS)
        gaussian = np.exp(-grid.x ** 2 / 2.0)
        gaussian /= np.sqrt(trapezoid(gaussian ** 2, dx=grid.dx))
        mask = gaussian > 1e-3
        assert psi.normalized
        assert psi.norm() == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(psi.samples[mask] / gaussian[mask] - 1.0)) < 1e-10

    def test_constant_superpotential_needs_box(self, service, grid):
        field = SuperpotentialField(grid, np.full(grid.n_points, 0.3), np.zeros(grid.n_points))
        with pytest.raises(NormalizationError):
            service.ground_state_from_w(field, grid, PARAMS, 'decay')
        psi = service.ground_state_from_w(field, grid, PARAMS, 'box')
        assert psi.samples[1] / psi.samples[0] == pytest.approx(np.exp(-0.3 * grid.dx), rel=1e-12)

    def test_free_case_is_flat_on_the_box(self, service, grid):
        zero = SuperpotentialAdapter('zero').field(grid)
        with pytest.raises(NormalizationError):
            service.ground_state_from_w(zero, grid, PARAMS)
        psi = service.ground_state_from_w(zero, grid, PARAMS, 'box')
        assert np.ptp(psi.samples) == 0.0

    def test_unknown_policy(self, service, grid):
        with pytest.raises(ValidationError):
            service.ground_state_from_w(linear(grid), grid, PARAMS, 'periodic')

    def test_grid_mismatch(self, service, grid):
        with pytest.raises(ValidationError):
            service.ground_state_from_w(linear(grid), grid.refine(), PARAMS)


class TestLadder:
    def test_structure(self, service, grid):
        w = linear(grid)
        a, adag = service.ladder_operators(w, grid, PARAMS)
        assert np.array_equal((a.matrix + adag.matrix).diagonal(), 2.0 * w.w)
        assert np.max(np.abs((a.matrix + adag.matrix).toarray() - np.diag(2.0 * w.w))) == 0.0
        assert service.adjointness_defect(a, adag) == 0.0

    def test_free_ladder_is_antisymmetric(self, service, grid):
        a, adag = service.ladder_operators(SuperpotentialAdapter('zero').field(grid), grid, PARAMS)
        assert np.max(np.abs((a.matrix + adag.matrix).toarray())) == 0.0

    def test_annihilation(self, service, grid):
        w = linear(grid)
        a, _ = service.ladder_operators(w, grid, PARAMS)
        psi = service.ground_state_from_w(w, grid, PARAMS)
        assert service.annihilation_defect(a, psi) < 1e-6

    def test_commutator_of_linear_superpotential(self, service, grid):
        w = linear(grid)
        a, adag = service.ladder_operators(w, grid, PARAMS)
        assert service.commutator_defect(a, adag, w.w_prime, PARAMS) < 1e-8

    def test_free_commutator_vanishes(self, service, grid):
        w = SuperpotentialAdapter('zero').field(grid)
        a, adag = service.ladder_operators(w, grid, PARAMS)
        assert service.commutator_defect(a, adag, w.w_prime, PARAMS) == 0.0

    def test_quadratic_commutator_converges_at_second_order(self, grid):
        service = SusyService(stencil_order=2)
        defects = []
        for g in (grid, grid.refine()):
            w = SuperpotentialAdapter('quadratic').field(g)
            a, adag = service.ladder_operators(w, g, PARAMS)
            defects.append(service.commutator_defect(a, adag, w.w_prime, PARAMS))
        assert defects[0] / defects[1] >= 3.5

    def test_fourth_order_stencil_is_more_accurate(self, grid):
        w = SuperpotentialAdapter('quadratic').field(grid)
        defects = {}
        for order in (2, 4):
            service = SusyService(stencil_order=order)
            a, adag = service.ladder_operators(w, grid, PARAMS)
            defects[order] = service.commutator_defect(a, adag, w.w_prime, PARAMS)
        assert defects[4] < defects[2]

    def test_sixth_order_stencil_reaches_roundoff(self, grid):
        service = SusyService(stencil_order=6)
        w = linear(grid)
        a, adag = service.ladder_operators(w, grid, PARAMS)
        assert service.commutator_defect(a, adag, w.w_prime, PARAMS) < 1e-10

    def test_linear_commutator_converges_at_fourth_order(self, service, grid):
        # [D, diag(x)] is a neighbour average, exact only up to the stencil error
        defects = []
        for g in (grid, grid.refine()):
            w = linear(g)
            a, adag = service.ladder_operators(w, g, PARAMS)
            defects.append(service.commutator_defect(a, adag, w.w_prime, PARAMS))
        assert defects[0] / defects[1] >= 12.0


class TestBaseHamiltonian:
    def test_free_box_ground_level(self, service, grid):
        h = service.base_hamiltonian(np.zeros(grid.n_points), grid, PARAMS)
        values, _ = lowest_eigenpairs(h, 1)
        assert values[0] == pytest.approx((np.pi / grid.box_length) ** 2, rel=1e-6)

    def test_harmonic_levels(self, service, grid):
        h = service.base_hamiltonian(grid.x ** 2, grid, PARAMS)
        values, vectors = lowest_eigenpairs(h, 5)
        assert np.allclose(values, [1.0, 3.0, 5.0, 7.0, 9.0], atol=1e-3)
        # each column signed so its largest entry is positive
        assert np.all(vectors[np.argmax(np.abs(vectors), axis=0), np.arange(5)] > 0)

    def test_constant_shift(self, service, grid):
        base = lowest_eigenpairs(service.base_hamiltonian(grid.x ** 2, grid, PARAMS), 3)[0]
        shifted = lowest_eigenpairs(service.base_hamiltonian(grid.x ** 2 + 2.5, grid, PARAMS), 3)[0]
        assert np.allclose(shifted - base, 2.5, atol=1e-9)

    def test_rejects_non_finite_potential(self, service, grid):
        v = np.zeros(grid.n_points)
        v[10] = np.inf
        with pytest.raises(ValidationError):
            service.base_hamiltonian(v, grid, PARAMS)


class TestShiftIdentity:
    def test_harmonic_oscillator(self, service, grid):
        result = service.shift_identity_check(grid.x ** 2, linear(grid), grid, PARAMS)
        assert result.epsilon0 == pytest.approx(1.0, abs=1e-4)
        assert result.matched == 'minus'
        assert result.deviation_minus < 1e-4
        assert result.deviation_plus == pytest.approx(2.0, abs=1e-4)
        assert result.ground_overlap > 1.0 - 1e-6

    def test_converges_at_second_order(self, service, grid):
        deviations = []
        for g in (grid, grid.refine()):
            deviations.append(service.shift_identity_check(g.x ** 2, linear(g), g, PARAMS).matched_deviation)
        assert deviations[0] / deviations[1] >= 3.5

    def test_wrong_ground_state_rejected(self, service, grid):
        # psi0 of W = 2x is narrower than the ground state of x^2
        with pytest.raises(ValidationError):
            service.shift_identity_check(grid.x ** 2, linear(grid, 2.0), grid, PARAMS)

    def test_free_case_waives_overlap(self, service, grid):
        zero = SuperpotentialAdapter('zero').field(grid)
        result = service.shift_identity_check(np.zeros(grid.n_points), zero, grid, PARAMS, 'box')
        assert np.isnan(result.ground_overlap)
        assert result.matched == 'both'
        assert result.box_constant == pytest.approx(result.epsilon0, abs=1e-14)
        assert result.matched_deviation < 1e-12
        assert result.epsilon0 == pytest.approx(PARAMS.kinetic * (np.pi / grid.box_length) ** 2, rel=1e-6)

    def test_free_partners_do_not_match_oscillator(self, service, grid):
        zero = SuperpotentialAdapter('zero').field(grid)
        result = service.shift_identity_check(grid.x ** 2, zero, grid, PARAMS, 'box')
        assert result.matched == 'none'
        assert result.deviation_plus == result.deviation_minus
        assert result.matched_deviation > 1.0


class TestInvariance:
    def test_self_commutator(self, service, grid):
        h = service.base_hamiltonian(grid.x ** 2, grid, PARAMS)
        metrics = service.invariance_check(h, PARAMS, 1.0)
        assert metrics['self_commutator_relative'] <= 1e-12
        assert 'partner_commutator_relative' not in metrics

    def test_free_partner_commutes(self, service, grid):
        zero = SuperpotentialAdapter('zero').field(grid)
        a, adag = service.ladder_operators(zero, grid, PARAMS)
        h_minus, _ = service.partner_hamiltonians(a, adag)
        h = service.base_hamiltonian(np.zeros(grid.n_points), grid, PARAMS)
        metrics = service.invariance_check(h, PARAMS, 0.0, h_minus)
        assert metrics['partner_commutator_relative'] <= 1e-12

    def test_linear_partner_discretization_converges(self, service, grid):
        defects = []
        for g in (grid, grid.refine()):
            w = linear(g)
            a, adag = service.ladder_operators(w, g, PARAMS)
            h_minus, _ = service.partner_hamiltonians(a, adag)
            h = service.base_hamiltonian(g.x ** 2, g, PARAMS)
            epsilon0 = lowest_eigenpairs(h, 1)[0][0]
            defects.append(service.invariance_check(h, PARAMS, epsilon0, h_minus)['discretization_defect'])
        assert defects[0] < 1e-4
        assert defects[0] / defects[1] >= 3.5


class TestPairing:
    def test_harmonic_pairs(self, service, grid):
        w = linear(grid)
        a, adag = service.ladder_operators(w, grid, PARAMS)
        h_minus, h_plus = service.partner_hamiltonians(a, adag)
        report = service.pairing_report(h_minus, h_plus, a, n_pairs=5, threshold=99.0)

        assert report.n_pairs == 5
        assert not report.degenerate_free_case
        assert np.allclose(report.pairing['E_minus'], [2.0, 4.0, 6.0, 8.0, 10.0], atol=1e-3)
        assert report.max_pair_deviation < 1e-3
        assert report.eigenvalues_minus[0] == pytest.approx(0.0, abs=1e-6)
        assert report.defects['intertwining_matrix'] < 1e-10
        assert report.defects['mapped_state_residual'] < 1e-6
        assert list(report.to_frame().columns) == ['n', 'E_minus', 'E_plus', 'pair_deviation']

    def test_threshold_limits_pairs(self, service, grid):
        w = linear(grid)
        a, adag = service.ladder_operators(w, grid, PARAMS)
        h_minus, h_plus = service.partner_hamiltonians(a, adag)
        report = service.pairing_report(h_minus, h_plus, a, n_pairs=5, threshold=7.0)
        # H- levels below 7: 0, 2, 4, 6
        assert report.n_pairs == 3

    def test_free_case_flagged(self, service, grid):
        zero = SuperpotentialAdapter('zero').field(grid)
        a, adag = service.ladder_operators(zero, grid, PARAMS)
        h_minus, h_plus = service.partner_hamiltonians(a, adag)
        report = service.pairing_report(h_minus, h_plus, a, n_pairs=3, boundary_policy='box')
        assert report.degenerate_free_case

    def test_rejects_zero_pairs(self, service, grid):
        a, adag = service.ladder_operators(linear(grid), grid, PARAMS)
        h_minus, h_plus = service.partner_hamiltonians(a, adag)
        with pytest.raises(ValidationError):
            service.pairing_report(h_minus, h_plus, a, n_pairs=0)


class TestBasePotentials:
    def test_kinds(self, grid):
        adapter = SuperpotentialAdapter('linear')
        assert not adapter.base_potential('zero', grid, PARAMS.c).any()
        assert np.allclose(adapter.base_potential('harmonic', grid, PARAMS.c), adapter.harmonic_base(grid))
        shifted = adapter.base_potential('shifted_partner', grid, PARAMS.c, 0.5)
        assert np.allclose(shifted, adapter.shifted_partner_base(grid, PARAMS.c, 0.5))

    def test_unknown_kind(self, grid):
        with pytest.raises(ValidationError):
            SuperpotentialAdapter('linear').base_potential('morse', grid, PARAMS.c)
