import numpy as np
import pytest

from tweezer_ising import (
    YB171,
    SearchSpace,
    TargetSpec,
    TrapConfig,
    run_pipeline,
    solve_equilibrium,
    symmetry_orbits,
)
from tweezer_ising.coupling import max_abs_offdiag
from tweezer_ising.crystal import IonCrystal, make_lattice
from tweezer_ising.errors import InvalidArgumentError
from tweezer_ising.optimizer import (
    PinProblem,
    stage1_geometry,
    stage1_search,
    stage2_refine,
)

from conftest import MHZ


def _space(**kw):
    base = dict(
        omega_scan=(0.25 * MHZ, 0.25 * MHZ),
        mu=(0.60 * MHZ, 0.75 * MHZ),
        pin=(0.0, 0.4 * MHZ),
        pin_axes=("y",),
        scan_axis="z",
        mu_grid=6,
        restarts=3,
    )
    base.update(kw)
    return SearchSpace(**base)


@pytest.fixture(scope="module")
def chain5(species):
    trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=5)
    return solve_equilibrium(trap, species, 5)


class TestSymmetryOrbits:
    def test_no_symmetry(self, chain5):
        cells = symmetry_orbits(chain5, "none")
        assert cells.n_orbits == 5
        assert all(len(o) == 1 for o in cells.orbits)

    def test_chain_reflection(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.6 * MHZ, 0.07 * MHZ, n_ions=12)
        crystal = solve_equilibrium(trap, species, 12)
        cells = symmetry_orbits(crystal, "reflection_z")
        assert cells.n_orbits == 6
        assert all(len(o) == 2 for o in cells.orbits)

    def test_hexagonal_c6_orbit_count(self, species):
        trap = TrapConfig(2.4 * MHZ, 0.16 * MHZ, 0.16 * MHZ, n_ions=19)
        pos = make_lattice("triangular", 19, 12e-6)
        crystal = IonCrystal(trap, species, pos, "planar", (1, 2))
        cells = symmetry_orbits(crystal, "C6")
        assert cells.n_orbits == 4
        assert sorted(len(o) for o in cells.orbits) == [1, 6, 6, 6]

    def test_ladder_two_fold_axis(self, species):
        trap = TrapConfig(0.6 * MHZ, 0.4 * MHZ, 0.14 * MHZ, n_ions=12)
        crystal = solve_equilibrium(trap, species, 12)
        cells = symmetry_orbits(crystal, "ladder_translation")
        assert cells.n_orbits == 6

    def test_missing_symmetry_rejected(self, chain5):
        with pytest.raises(InvalidArgumentError):
            symmetry_orbits(chain5, "C6")
        with pytest.raises(InvalidArgumentError):
            symmetry_orbits(chain5, "dihedral")


class TestObjectiveGradient:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_pin_gradient_matches_fd(self, species, chain5, seed):
        target = TargetSpec("nearest_neighbor", "chain")
        from tweezer_ising.targets import build_target

        t = build_target(target, chain5)
        problem = PinProblem(chain5, t, "y", ("y",))
        problem.set_scales((0.0, (0.4 * MHZ) ** 2), (0.6 * MHZ, 0.75 * MHZ))
        rng = np.random.default_rng(seed)
        k = rng.uniform(0.0, (0.2 * MHZ) ** 2, 5)
        mu = 0.68 * MHZ
        eps, grad_k, grad_mu = problem.epsilon_parts(k, mu, need_grad=True)
        h = 1e-6 * problem.k_scale
        for i in range(5):
            d = np.zeros(5)
            d[i] = h
            fd = (problem.epsilon(k + d, mu) - problem.epsilon(k - d, mu)) / (2 * h)
            assert grad_k[i] == pytest.approx(fd, rel=1e-5, abs=1e-12 / problem.k_scale)
        hmu = 1e-7 * mu
        fd_mu = (problem.epsilon(k, mu + hmu) - problem.epsilon(k, mu - hmu)) / (2 * hmu)
        assert grad_mu == pytest.approx(fd_mu, rel=1e-5)


class TestStage1:
    def test_identity_target_reaches_zero(self, species):
        # the normalized native couplings of one grid cell are trivially
        # attainable with zero pinning
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=4, restarts=2, omega_scan=(0.25 * MHZ, 0.25 * MHZ))
        crystal = stage1_geometry(
            TargetSpec("nearest_neighbor", "chain"), trap, species, 0.25 * MHZ, "z", "fixed_lattice"
        )
        from tweezer_ising import DriveConfig, coupling_matrix
        from tweezer_ising.modes import build_hessian, mode_spectrum

        spec = mode_spectrum(build_hessian(crystal))
        j = None
        for mu_star in np.linspace(space.mu[0], space.mu[1], 4):
            try:
                j = coupling_matrix(spec, DriveConfig(mu=mu_star, drive_axis="y"), species).matrix
                break
            except Exception:
                continue
        assert j is not None
        peak, _ = max_abs_offdiag(j)
        target = TargetSpec("explicit", "chain", matrix=j / peak)
        candidates, cells = stage1_search(target, space, trap, species, seed=0)
        assert candidates, [c.verdict for c in cells]
        best = candidates[0]
        assert best.epsilon < 1e-6
        assert np.abs(best.pin_frequencies).max() < 0.02 * MHZ

    def test_all_cells_reported_when_infeasible(self, species):
        # a sign flip of the single coupling cannot be reached with purely
        # confining pinning far above the band
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=2)
        crystal = stage1_geometry(
            TargetSpec("nearest_neighbor", "chain"), trap, species, 0.25 * MHZ, "z", "fixed_lattice"
        )
        target = TargetSpec("explicit", "chain", matrix=np.array([[0.0, -1.0], [-1.0, 0.0]]))
        space = _space(mu=(2.0 * MHZ, 2.2 * MHZ), mu_grid=5, pin=(0.0, 0.3 * MHZ))
        candidates, cells = stage1_search(target, space, trap, species, seed=0)
        assert candidates == []
        assert len(cells) == 5
        assert {c.verdict for c in cells} <= {"infeasible", "resonant"}
        assert any(c.verdict == "infeasible" for c in cells)

    def test_candidates_sorted_and_bounded(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=5, restarts=2)
        candidates, _ = stage1_search(
            TargetSpec("nearest_neighbor", "chain"), space, trap, species, seed=1
        )
        eps = [c.epsilon for c in candidates]
        assert eps == sorted(eps)
        for c in candidates:
            assert np.all(c.pin_frequencies >= space.pin[0] - 1e-12)
            assert np.all(c.pin_frequencies <= space.pin[1] + 1e-12)
            assert space.mu[0] <= c.mu <= space.mu[1]
            assert all(h2 <= h1 + 1e-15 for h1, h2 in zip(c.history, c.history[1:]))


class TestStage2:
    def test_trivial_orbits_match_direct_refinement(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=4, restarts=2)
        tspec = TargetSpec("nearest_neighbor", "chain")
        candidates, _ = stage1_search(tspec, space, trap, species, seed=2)
        best = candidates[0]
        cells_none = symmetry_orbits(best.crystal, "none")
        refined = stage2_refine(best, cells_none, space, tspec, species)
        # reparametrization identity: same search space, same start point
        assert refined.epsilon <= best.epsilon + 1e-8

    def test_symmetric_orbits_give_symmetric_pattern_and_descent(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=4, restarts=2)
        tspec = TargetSpec("nearest_neighbor", "chain")
        candidates, _ = stage1_search(tspec, space, trap, species, seed=2)
        best = candidates[0]
        cells = symmetry_orbits(best.crystal, "reflection_z")
        refined = stage2_refine(best, cells, space, tspec, species)
        for orbit in cells.orbits:
            vals = refined.pin_curvature[list(orbit)]
            assert np.ptp(vals) == 0.0
        # never worse than the symmetrized start it began from
        assert refined.history[-1] <= refined.history[0] + 1e-15


class TestPipeline:
    def test_determinism(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=4, restarts=2)
        tspec = TargetSpec("nearest_neighbor", "chain")
        r1 = run_pipeline(tspec, space, trap, species, symmetry="reflection_z", seed=5)
        r2 = run_pipeline(tspec, space, trap, species, symmetry="reflection_z", seed=5)
        assert r1.mu == r2.mu
        assert np.array_equal(r1.pin_frequencies, r2.pin_frequencies)
        assert r1.epsilon == r2.epsilon

    def test_threads_do_not_change_result(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=4, restarts=2)
        tspec = TargetSpec("nearest_neighbor", "chain")
        r1 = run_pipeline(tspec, space, trap, species, seed=6, threads=1)
        r2 = run_pipeline(tspec, space, trap, species, seed=6, threads=4)
        assert r1.mu == r2.mu
        assert np.array_equal(r1.pin_frequencies, r2.pin_frequencies)

    def test_result_respects_bounds_and_guard(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=5, restarts=2)
        tspec = TargetSpec("nearest_neighbor", "chain")
        res = run_pipeline(tspec, space, trap, species, symmetry="reflection_z", seed=7)
        assert space.mu[0] <= res.mu <= space.mu[1]
        assert np.all(res.pin_frequencies >= space.pin[0] - 1e-12)
        assert np.all(res.pin_frequencies <= space.pin[1] + 1e-12)
        coupled = res.drive.mask_for(res.spectrum)
        gaps = np.abs(res.mu - res.spectrum.frequencies[coupled])
        assert gaps.min() > space.resonance_guard
        # realized matrix carries the target normalization
        peak_t, _ = max_abs_offdiag(res.target.matrix)
        peak_r, _ = max_abs_offdiag(res.realized.matrix)
        assert peak_r == pytest.approx(peak_t, rel=1e-9)

    def test_symmetric_final_pattern(self, species):
        trap = TrapConfig(2.0 * MHZ, 0.8 * MHZ, 0.25 * MHZ, n_ions=4)
        space = _space(mu_grid=5, restarts=2)
        tspec = TargetSpec("nearest_neighbor", "chain")
        res = run_pipeline(tspec, space, trap, species, symmetry="reflection_z", seed=8)
        cells = symmetry_orbits(res.crystal, "reflection_z")
        assert cells.n_orbits == 2
        for orbit in cells.orbits:
            assert np.ptp(res.pin_frequencies[list(orbit)]) == 0.0


class TestSearchSpaceValidation:
    def test_rejects_reversed_bounds(self):
        with pytest.raises(InvalidArgumentError):
            _space(mu=(0.8 * MHZ, 0.6 * MHZ))

    def test_anticonfinement_needs_flag(self):
        with pytest.raises(InvalidArgumentError):
            _space(pin=(-0.2 * MHZ, 0.4 * MHZ))
        space = _space(pin=(-0.2 * MHZ, 0.4 * MHZ), allow_anticonfinement=True)
        assert space.pinning_sign == "free"
        lo, hi = space.pin_curvature_bounds
        assert lo == pytest.approx(-((0.2 * MHZ) ** 2))
        assert hi == pytest.approx((0.4 * MHZ) ** 2)
