"""Three-stage synthesis of tweezer pinning patterns.

Stage 1 scans a (trap frequency, beatnote) grid over idealized geometry,
prunes cells with the sign-structure feasibility test, and optimizes the
per-ion pinning in each surviving cell.  Stage 2 re-optimizes with one
pinning value per symmetry orbit.  Stage 3 moves to the true
harmonic-trap equilibrium and re-optimizes beatnote and pinning jointly
from the warm start.

Internally the pinning variable is the signed curvature K = sign(w) w^2
(rad^2/s^2) so the objective stays smooth through zero pinning; bounds
and reported values use the signed frequency w.  The beatnote enters the
coupling only through the detuning factors, never the eigenproblem, so
its gradient is analytic as well.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .constants import SpeciesConstants
from .coupling import CouplingMatrix, DriveConfig, DEFAULT_RESONANCE_GUARD, coupling_matrix, coupling_error, max_abs_offdiag
from .crystal import (
    IonCrystal,
    TrapConfig,
    equidistant_spacing,
    length_scale,
    make_lattice,
    solve_equilibrium,
)
from .errors import (
    ConvergenceError,
    InvalidArgumentError,
    ResonanceError,
    UnstableCrystalError,
)
from .feasibility import build_sign_constraints, feasibility_test
from .modes import (
    AXIS_INDEX,
    TOL_PSD_REL,
    ModeSpectrum,
    TweezerPattern,
    axis_vector,
    block_coords,
    mass_scaled_hessian,
    mode_spectrum,
)
from .quasinewton import minimize_box
from .sensitivity import CouplingGradient, all_pairs, coupling_jacobian_diag
from .targets import TargetSpec, build_target, crystal_adjacency

#: positions match under a symmetry operation within this multiple of the length scale
TOL_ORBIT = 1e-6


@dataclass(frozen=True)
class SearchSpace:
    """Box bounds and search controls for the pipeline."""

    omega_scan: tuple[float, float]  # rad/s, bounds of the scanned trap axis
    mu: tuple[float, float]  # rad/s
    pin: tuple[float, float]  # rad/s, signed pinning frequency bounds
    pin_axes: tuple[str, ...] = ("y",)
    scan_axis: str = "z"
    resonance_guard: float = DEFAULT_RESONANCE_GUARD
    omega_grid: int = 12
    mu_grid: int = 24
    restarts: int = 8
    start_fraction: float = 0.1
    allow_anticonfinement: bool = False
    line_search: str = "backtracking"
    max_iter: int = 2000
    tol_df: float = 1e-10
    tol_grad: float = 1e-8
    feasibility_pairs: str = "all"  # or "nearest_neighbor"
    # "sign_mismatch" passes cells whose native sign structure can be
    # corrected; "magnitude" (the strict variant) also demands first-order
    # progress on every magnitude deviation, which rejects almost every
    # cell for sparse targets
    feasibility_rows: str = "sign_mismatch"

    def __post_init__(self):
        for name in ("omega_scan", "mu", "pin"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidArgumentError(f"{name} bounds reversed: {lo} > {hi}")
        if self.omega_scan[0] <= 0 or self.mu[0] <= 0:
            raise InvalidArgumentError("frequency bounds must be positive")
        if self.pin[0] < 0 and not self.allow_anticonfinement:
            raise InvalidArgumentError(
                "negative pinning bound requires allow_anticonfinement"
            )
        if self.restarts < 1 or self.omega_grid < 1 or self.mu_grid < 1:
            raise InvalidArgumentError("grid sizes and restarts must be at least 1")
        for ax in self.pin_axes:
            if ax not in AXIS_INDEX:
                raise InvalidArgumentError(f"unknown pin axis {ax!r}")
        if self.scan_axis not in AXIS_INDEX:
            raise InvalidArgumentError(f"unknown scan axis {self.scan_axis!r}")
        if self.feasibility_pairs not in ("all", "nearest_neighbor"):
            raise InvalidArgumentError("feasibility_pairs must be 'all' or 'nearest_neighbor'")
        if self.feasibility_rows not in ("sign_mismatch", "magnitude"):
            raise InvalidArgumentError("feasibility_rows must be 'sign_mismatch' or 'magnitude'")

    @property
    def pin_curvature_bounds(self) -> tuple[float, float]:
        lo, hi = self.pin
        return (np.sign(lo) * lo**2, np.sign(hi) * hi**2)

    @property
    def pinning_sign(self) -> str:
        return "nonnegative" if self.pin[0] >= 0 else "free"


@dataclass(frozen=True)
class SymmetryCells:
    """Partition of ion indices into orbits of a declared symmetry group."""

    orbits: tuple  # ((i, j, ...), ...)
    representatives: tuple
    group: str

    @property
    def n_orbits(self) -> int:
        return len(self.orbits)


@dataclass
class CellDiagnostics:
    omega_scan: float
    mu: float
    verdict: str  # feasible | infeasible | resonant | unstable
    margin: Optional[float] = None
    epsilon: Optional[float] = None


@dataclass
class Candidate:
    omega_scan: float
    mu: float
    pin_curvature: np.ndarray  # per-ion signed curvature, rad^2/s^2
    epsilon: float
    crystal: IonCrystal
    history: list = field(default_factory=list)
    converged: bool = True

    @property
    def pin_frequencies(self) -> np.ndarray:
        return np.sign(self.pin_curvature) * np.sqrt(np.abs(self.pin_curvature))


@dataclass
class OptimizationResult:
    omega_scan: float
    mu: float
    pin_frequencies: np.ndarray  # per-ion signed pinning frequency, rad/s
    pin_axes: tuple
    epsilon: float
    stage_epsilons: dict
    cells: list
    target: CouplingMatrix
    realized: CouplingMatrix  # normalized to the target scale
    spectrum: ModeSpectrum
    crystal: IonCrystal
    tweezers: TweezerPattern
    drive: DriveConfig
    iterations: dict
    wall_time_s: float
    converged: bool
    histories: dict = field(default_factory=dict)

    @property
    def pattern(self) -> TweezerPattern:
        return self.tweezers


# ---------------------------------------------------------------------------
# symmetry orbits


def symmetry_orbits(crystal: IonCrystal, group: str) -> SymmetryCells:
    """Partition ions into orbits under a declared point symmetry.

    Supported groups: none; reflection_z (z -> -z); C6 (60 degree rotation
    in the crystal plane); ladder_translation, implemented as the two-fold
    axis (p, q) -> (-p, -q) of a finite ladder, the point remnant of its
    translation symmetry.
    """
    n = crystal.n_ions
    if group == "none":
        return SymmetryCells(tuple((i,) for i in range(n)), tuple(range(n)), group)
    pos = crystal.positions
    tol = TOL_ORBIT * crystal.length_scale
    if group == "reflection_z":
        mapped = pos * np.array([1.0, 1.0, -1.0])
        perms = [_match_permutation(pos, mapped, tol, group)]
    elif group == "C6":
        if crystal.dimensionality != "planar":
            raise InvalidArgumentError("C6 orbits need a planar crystal")
        a, b = crystal.extended_axes
        c, s = np.cos(np.pi / 3.0), np.sin(np.pi / 3.0)
        mapped = pos.copy()
        mapped[:, a] = c * pos[:, a] - s * pos[:, b]
        mapped[:, b] = s * pos[:, a] + c * pos[:, b]
        perms = [_match_permutation(pos, mapped, tol, group)]
    elif group == "ladder_translation":
        if crystal.dimensionality != "planar":
            raise InvalidArgumentError("ladder orbits need a planar crystal")
        a, b = crystal.extended_axes
        mapped = pos.copy()
        mapped[:, a] = -pos[:, a]
        mapped[:, b] = -pos[:, b]
        perms = [_match_permutation(pos, mapped, tol, group)]
    else:
        raise InvalidArgumentError(f"unknown symmetry group {group!r}")

    orbits = _orbits_from_permutations(n, perms)
    reps = tuple(min(o) for o in orbits)
    return SymmetryCells(orbits, reps, group)


def _match_permutation(pos, mapped, tol, group):
    n = pos.shape[0]
    perm = np.full(n, -1, dtype=int)
    for i in range(n):
        d = np.linalg.norm(pos - mapped[i], axis=1)
        j = int(np.argmin(d))
        if d[j] > tol:
            raise InvalidArgumentError(
                f"geometry lacks {group} symmetry: ion {i} maps {d[j]:.3e} m from any site"
            )
        perm[i] = j
    if len(set(perm.tolist())) != n:
        raise InvalidArgumentError(f"geometry lacks {group} symmetry: mapping not a permutation")
    return perm


def _orbits_from_permutations(n, perms):
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for perm in perms:
        for i in range(n):
            a, b = find(i), find(int(perm[i]))
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return tuple(tuple(sorted(v)) for _, v in sorted(groups.items()))


# ---------------------------------------------------------------------------
# objective machinery


class PinProblem:
    """Normalized coupling error over pinning curvatures at fixed geometry.

    Precomputes the drive-relevant Hessian block and target quantities;
    evaluations cost one eigendecomposition of the block.
    """

    def __init__(
        self,
        crystal: IonCrystal,
        target: Union[CouplingMatrix, np.ndarray],
        drive_axis,
        pin_axes: Sequence[str],
        orbits: Optional[Sequence[Sequence[int]]] = None,
        resonance_guard: float = DEFAULT_RESONANCE_GUARD,
    ):
        self.crystal = crystal
        n = crystal.n_ions
        self.n_ions = n
        self.axis = axis_vector(drive_axis)
        self.wbar = crystal.trap.omega_bar
        self.guard = resonance_guard
        self.orbits = tuple(tuple(o) for o in (orbits if orbits is not None else [(i,) for i in range(n)]))

        a_full = mass_scaled_hessian(crystal.positions, crystal.trap, crystal.species)
        drive_axes = set(int(i) for i in np.flatnonzero(np.abs(self.axis) > 1e-15))
        pin_axis_idx = set(AXIS_INDEX[a] for a in pin_axes)
        need = sorted(drive_axes | pin_axis_idx)
        coords = block_coords(n, need)
        other = np.setdiff1d(np.arange(3 * n), coords)
        scale = np.abs(a_full).max()
        if other.size and np.abs(a_full[np.ix_(coords, other)]).max() > 1e-9 * scale:
            coords = np.arange(3 * n)  # no block structure; use the full Hessian
        self.coords = coords
        self.a0 = a_full[np.ix_(coords, coords)]
        self.b = coords.size

        ions = coords // 3
        axes = coords % 3
        self.proj = np.zeros((n, self.b))
        self.proj[ions, np.arange(self.b)] = self.axis[axes]

        # block rows touched by each orbit parameter
        self.param_rows = []
        for orbit in self.orbits:
            rows = [
                r
                for r, c in enumerate(coords)
                if (c // 3) in orbit and (c % 3) in pin_axis_idx
            ]
            self.param_rows.append(np.array(rows, dtype=int))
        self.pin_axis_idx = sorted(pin_axis_idx)

        t = target.matrix if isinstance(target, CouplingMatrix) else np.asarray(target, dtype=float)
        self.target = t
        self.t_norm = float(np.linalg.norm(t))
        self.max_t, _ = max_abs_offdiag(t)
        self.floor = TOL_PSD_REL * self.wbar**2
        self.k_scale = self.wbar**2  # overridden by set_scales
        self.mu_scale = self.wbar

    def set_scales(self, k_bounds: tuple[float, float], mu_bounds: tuple[float, float]):
        self.k_scale = max(abs(k_bounds[0]), abs(k_bounds[1]), 1e-12 * self.wbar**2)
        self.mu_scale = max(abs(mu_bounds[0]), abs(mu_bounds[1]))
        self.k_bounds = (k_bounds[0] / self.k_scale, k_bounds[1] / self.k_scale)
        self.mu_bounds = (mu_bounds[0] / self.mu_scale, mu_bounds[1] / self.mu_scale)

    # -- raw evaluation ----------------------------------------------------

    def expand(self, k_params: np.ndarray) -> np.ndarray:
        """Per-ion signed curvature vector from per-orbit parameters."""
        out = np.zeros(self.n_ions)
        for orbit, k in zip(self.orbits, k_params):
            for i in orbit:
                out[i] = k
        return out

    def _decompose(self, k_params):
        diag_add = np.zeros(self.b)
        for rows, k in zip(self.param_rows, k_params):
            diag_add[rows] += k
        a = self.a0.copy()
        a[np.diag_indices_from(a)] += diag_add
        lam, u = np.linalg.eigh(a)
        return lam, u

    def epsilon_parts(self, k_params, mu, need_grad):
        lam, u = self._decompose(k_params)
        if lam[0] < -self.floor:
            return None
        freqs = np.sqrt(np.clip(lam, 0.0, None))
        if np.min(np.abs(mu - freqs)) <= self.guard:
            return None
        theta = 1.0 / (mu**2 - lam)
        w = self.proj @ u
        wt = w * theta
        j = wt @ w.T
        j = 0.5 * (j + j.T)
        np.fill_diagonal(j, 0.0)
        max_j, (p, q) = max_abs_offdiag(j)
        if max_j <= 0.0:
            return None
        s = self.max_t / max_j
        r = self.target - s * j
        eps = float(np.linalg.norm(r) / self.t_norm)
        if not need_grad:
            return eps, None, None
        if eps == 0.0:
            return eps, np.zeros(len(self.orbits)), 0.0
        g_mat = r.copy()
        g_mat[p, q] -= float(np.sum(r * j)) / j[p, q]
        g_mat *= -s / (eps * self.t_norm**2)
        # dJ/dA_bb is the outer product of resolvent rows
        y = wt @ u.T  # (N, B)
        per_row = np.einsum("kb,kl,lb->b", y, g_mat, y, optimize=True)
        grad_k = np.array([per_row[rows].sum() for rows in self.param_rows])
        dtheta = -2.0 * mu * theta**2
        dj_dmu = (w * dtheta) @ w.T
        np.fill_diagonal(dj_dmu, 0.0)
        grad_mu = float(np.sum(g_mat * dj_dmu))
        return eps, grad_k, grad_mu

    # -- objectives over scaled variables -----------------------------------

    def objective_pin(self, mu):
        def fg(x):
            parts = self.epsilon_parts(x * self.k_scale, mu, need_grad=True)
            if parts is None:
                return np.inf, np.zeros_like(x)
            eps, grad_k, _ = parts
            return eps, grad_k * self.k_scale

        return fg

    def objective_pin_mu(self):
        def fg(x):
            mu = x[0] * self.mu_scale
            parts = self.epsilon_parts(x[1:] * self.k_scale, mu, need_grad=True)
            if parts is None:
                return np.inf, np.zeros_like(x)
            eps, grad_k, grad_mu = parts
            g = np.empty_like(x)
            g[0] = grad_mu * self.mu_scale
            g[1:] = grad_k * self.k_scale
            return eps, g

        return fg

    def epsilon(self, k_params, mu) -> float:
        parts = self.epsilon_parts(np.asarray(k_params, dtype=float), mu, need_grad=False)
        return np.inf if parts is None else parts[0]

    def native_spectrum(self) -> ModeSpectrum:
        return mode_spectrum(self.a0, freq_scale=self.wbar, coords=self.coords, n_ions=self.n_ions)


# ---------------------------------------------------------------------------
# stage-1 geometry


def stage1_geometry(
    target_spec: TargetSpec,
    trap_template: TrapConfig,
    species: SpeciesConstants,
    omega_value: float,
    scan_axis: str,
    geometry_mode: str,
) -> IonCrystal:
    """Idealized crystal of the first optimization stage.

    Chains and triangular lattices are laid out exactly equidistant with
    the spacing set by the scanned frequency; geometries without an ideal
    lattice (the ladder) solve the harmonic equilibrium instead.
    """
    n = trap_template.n_ions
    trap = trap_template.replace_axis(scan_axis, omega_value)
    if geometry_mode == "auto":
        geometry_mode = "harmonic" if target_spec.geometry == "ladder" else "fixed_lattice"
    if geometry_mode == "harmonic":
        guess = None
        if target_spec.geometry == "triangular":
            weak = np.argsort(trap.omegas, kind="stable")[:2]
            plane = tuple(sorted(int(a) for a in weak))
            guess = make_lattice("triangular", n, 1.5 * length_scale(omega_value, species), plane=plane)
        return solve_equilibrium(trap, species, n, guess)
    if target_spec.geometry == "chain":
        d0 = equidistant_spacing(omega_value, n, species)
        pos = make_lattice("chain", n, d0)
        return IonCrystal(trap, species, pos, "chain", (2,))
    if target_spec.geometry == "triangular":
        # the chain spacing formula badly misjudges 2D lattices; anchor the
        # idealized lattice constant to the solved crystal's closest pair
        weak = np.argsort(trap.omegas, kind="stable")[:2]
        plane = tuple(sorted(int(a) for a in weak))
        guess = make_lattice("triangular", n, 1.5 * length_scale(omega_value, species), plane=plane)
        solved = solve_equilibrium(trap, species, n, guess, require="planar")
        from .crystal import pairwise_distances

        d = pairwise_distances(solved.positions)
        spacing = float(d[np.triu_indices(n, 1)].min())
        pos = make_lattice("triangular", n, spacing, plane=plane)
        return IonCrystal(trap, species, pos, "planar", plane)
    raise InvalidArgumentError(
        f"no ideal lattice for geometry {target_spec.geometry!r}; use harmonic mode"
    )


def default_drive_axis(pin_axes: Sequence[str]) -> np.ndarray:
    v = np.zeros(3)
    for ax in pin_axes:
        v[AXIS_INDEX[ax]] = 1.0
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# stages


def _grid(bounds: tuple[float, float], n: int) -> np.ndarray:
    if bounds[0] == bounds[1]:
        return np.array([bounds[0]])
    return np.linspace(bounds[0], bounds[1], n)


def stage1_search(
    target_spec: TargetSpec,
    space: SearchSpace,
    trap_template: TrapConfig,
    species: SpeciesConstants,
    drive_axis=None,
    geometry_mode: str = "auto",
    seed: int = 0,
    threads: int = 1,
):
    """Feasibility-filtered grid search; returns (candidates, cell diagnostics).

    Candidates are sorted by (epsilon, omega, mu); an empty list means no
    grid cell passed the feasibility test (see the diagnostics).
    """
    axis = default_drive_axis(space.pin_axes) if drive_axis is None else axis_vector(drive_axis)
    omegas = _grid(space.omega_scan, space.omega_grid)
    mus = _grid(space.mu, space.mu_grid)

    candidates: list[Candidate] = []
    cells: list[CellDiagnostics] = []
    jobs = []
    for omega in omegas:
        crystal = stage1_geometry(target_spec, trap_template, species, omega, space.scan_axis, geometry_mode)
        target = build_target(target_spec, crystal)
        problem = PinProblem(crystal, target, axis, space.pin_axes, None, space.resonance_guard)
        problem.set_scales(space.pin_curvature_bounds, space.mu)
        pairs = _selection_pairs(space, crystal)
        for mu in mus:
            jobs.append((omega, mu, crystal, target, problem, pairs))

    def run_cell(args):
        cell_index, (omega, mu, crystal, target, problem, pairs) = args
        diag = CellDiagnostics(omega, mu, "infeasible")
        try:
            native = problem.native_spectrum()
            drive = DriveConfig(mu=mu, drive_axis=axis, resonance_guard=space.resonance_guard)
            jac = coupling_jacobian_diag(native, drive, species)
            grads = _per_ion_gradient(jac, problem)
            j0 = coupling_matrix(native, drive, species)
            system = build_sign_constraints(
                target, j0, grads, selection=pairs, rows=space.feasibility_rows
            )
            verdict = feasibility_test(system, pinning_sign=space.pinning_sign)
        except ResonanceError:
            diag.verdict = "resonant"
            return diag, None
        except UnstableCrystalError:
            diag.verdict = "unstable"
            return diag, None
        diag.margin = None if np.isinf(verdict.margin) else float(verdict.margin)
        if not verdict.feasible:
            return diag, None
        diag.verdict = "feasible"
        best = None
        for r in range(space.restarts):
            x0 = _random_start(space, len(problem.orbits), seed, cell_index, r) / problem.k_scale
            res = minimize_box(
                problem.objective_pin(mu),
                x0,
                np.full(x0.size, problem.k_bounds[0]),
                np.full(x0.size, problem.k_bounds[1]),
                line_search=space.line_search,
                max_iter=space.max_iter,
                tol_df=space.tol_df,
                tol_grad=space.tol_grad,
            )
            if best is None or res.fun < best.fun:
                best = res
        diag.epsilon = float(best.fun)
        cand = Candidate(
            omega_scan=omega,
            mu=mu,
            pin_curvature=problem.expand(best.x * problem.k_scale),
            epsilon=float(best.fun),
            crystal=crystal,
            history=list(best.history),
            converged=best.converged,
        )
        return diag, cand

    results = _parallel_map(run_cell, list(enumerate(jobs)), threads)
    for diag, cand in results:
        cells.append(diag)
        if cand is not None:
            candidates.append(cand)
    candidates.sort(key=lambda c: (c.epsilon, c.omega_scan, c.mu))
    return candidates, cells


def _selection_pairs(space: SearchSpace, crystal: IonCrystal):
    if space.feasibility_pairs == "all":
        return all_pairs(crystal.n_ions)
    adj = crystal_adjacency(crystal)
    return tuple((k, l) for k, l in all_pairs(crystal.n_ions) if adj[k, l])


def _per_ion_gradient(jac: np.ndarray, problem: PinProblem) -> CouplingGradient:
    """Collapse the per-coordinate Jacobian to one column per ion.

    One pinning value per ion acts on every configured axis, so the
    per-ion derivative sums the touched diagonal coordinates.
    """
    n = problem.n_ions
    cols = np.zeros((n, n, n))
    for i in range(n):
        rows = [
            r
            for r, c in enumerate(problem.coords)
            if c // 3 == i and (c % 3) in problem.pin_axis_idx
        ]
        cols[:, :, i] = jac[:, :, rows].sum(axis=2)
    pairs = all_pairs(n)
    values = np.array([[cols[k, l, i] for i in range(n)] for (k, l) in pairs])
    return CouplingGradient(pairs, np.arange(n), values)


def _random_start(space: SearchSpace, n_params: int, seed: int, cell: int, restart: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(cell, restart))))
    lo, hi = space.pin
    if hi > 0:
        w = rng.uniform(0.0, space.start_fraction * hi, size=n_params)
    else:
        w = rng.uniform(space.start_fraction * lo, 0.0, size=n_params)
    return np.sign(w) * w**2


def _parallel_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def stage2_refine(
    candidate: Candidate,
    cells: SymmetryCells,
    space: SearchSpace,
    target_spec: TargetSpec,
    species: SpeciesConstants,
    drive_axis=None,
) -> Candidate:
    """Pinning-only refinement with one value per symmetry orbit.

    The trap frequency and beatnote stay frozen; the start point is the
    orbit-averaged stage-1 pattern, so the refined error never exceeds the
    symmetrized input error.
    """
    axis = default_drive_axis(space.pin_axes) if drive_axis is None else axis_vector(drive_axis)
    crystal = candidate.crystal
    target = build_target(target_spec, crystal)
    problem = PinProblem(crystal, target, axis, space.pin_axes, cells.orbits, space.resonance_guard)
    problem.set_scales(space.pin_curvature_bounds, space.mu)
    k0 = np.array([np.mean(candidate.pin_curvature[list(o)]) for o in cells.orbits])
    res = minimize_box(
        problem.objective_pin(candidate.mu),
        k0 / problem.k_scale,
        np.full(k0.size, problem.k_bounds[0]),
        np.full(k0.size, problem.k_bounds[1]),
        line_search=space.line_search,
        max_iter=space.max_iter,
        tol_df=space.tol_df,
        tol_grad=space.tol_grad,
    )
    return Candidate(
        omega_scan=candidate.omega_scan,
        mu=candidate.mu,
        pin_curvature=problem.expand(res.x * problem.k_scale),
        epsilon=float(res.fun),
        crystal=crystal,
        history=list(res.history),
        converged=res.converged,
    )


def stage3_finalize(
    candidate: Candidate,
    trap_template: TrapConfig,
    species: SpeciesConstants,
    space: SearchSpace,
    target_spec: TargetSpec,
    symmetry: str = "none",
    drive_axis=None,
    final_geometry: str = "harmonic",
    cells_diagnostics: Optional[list] = None,
    histories: Optional[dict] = None,
) -> OptimizationResult:
    """Re-solve the true equilibrium and re-optimize beatnote and pinning.

    final_geometry "harmonic" solves the actual trap equilibrium at the
    candidate's scanned frequency (warm-started from the stage-1
    geometry); "fixed_lattice" keeps the idealized positions, for crystals
    held equidistant by a segmented trap.
    """
    t0 = time.perf_counter()
    axis = default_drive_axis(space.pin_axes) if drive_axis is None else axis_vector(drive_axis)
    if final_geometry == "harmonic":
        trap = trap_template.replace_axis(space.scan_axis, candidate.omega_scan)
        crystal = solve_equilibrium(trap, species, trap_template.n_ions, candidate.crystal.positions)
    elif final_geometry == "fixed_lattice":
        crystal = candidate.crystal
    else:
        raise InvalidArgumentError(f"unknown final_geometry {final_geometry!r}")
    target = build_target(target_spec, crystal)
    orbits = symmetry_orbits(crystal, symmetry)
    problem = PinProblem(crystal, target, axis, space.pin_axes, orbits.orbits, space.resonance_guard)
    problem.set_scales(space.pin_curvature_bounds, space.mu)

    k0 = np.array([np.mean(candidate.pin_curvature[list(o)]) for o in orbits.orbits])
    x0 = np.concatenate([[candidate.mu / problem.mu_scale], k0 / problem.k_scale])
    lower = np.concatenate([[problem.mu_bounds[0]], np.full(k0.size, problem.k_bounds[0])])
    upper = np.concatenate([[problem.mu_bounds[1]], np.full(k0.size, problem.k_bounds[1])])
    res = minimize_box(
        problem.objective_pin_mu(),
        x0,
        lower,
        upper,
        line_search=space.line_search,
        max_iter=space.max_iter,
        tol_df=space.tol_df,
        tol_grad=space.tol_grad,
    )
    mu_final = float(res.x[0] * problem.mu_scale)
    pin_k = problem.expand(res.x[1:] * problem.k_scale)
    pin_w = np.sign(pin_k) * np.sqrt(np.abs(pin_k))
    pattern = TweezerPattern.from_frequencies(pin_w, axes=space.pin_axes)

    a_full = mass_scaled_hessian(crystal.positions, crystal.trap, species, pattern.curvatures)
    spectrum = mode_spectrum(a_full, freq_scale=crystal.trap.omega_bar)
    # mask out modes orthogonal to the drive so the resonance guard only
    # applies to modes that actually enter the coupling
    from .modes import mode_projections

    coupled = np.any(np.abs(mode_projections(spectrum, axis)) > 1e-10, axis=0)
    drive = DriveConfig(
        mu=mu_final, drive_axis=axis, mode_mask=coupled, resonance_guard=space.resonance_guard
    )
    realized_raw = coupling_matrix(spectrum, drive, species)
    eps, realized = coupling_error(target, realized_raw)

    histories = dict(histories or {})
    histories["stage3"] = list(res.history)
    stage_eps = {"stage2": candidate.epsilon, "stage3": eps}
    return OptimizationResult(
        omega_scan=candidate.omega_scan,
        mu=mu_final,
        pin_frequencies=pin_w,
        pin_axes=tuple(space.pin_axes),
        epsilon=eps,
        stage_epsilons=stage_eps,
        cells=list(cells_diagnostics or []),
        target=target,
        realized=realized,
        spectrum=spectrum,
        crystal=crystal,
        tweezers=pattern,
        drive=drive,
        iterations={"stage3": res.n_iter, "stage3_evals": res.n_eval},
        wall_time_s=time.perf_counter() - t0,
        converged=res.converged,
        histories=histories,
    )


def run_pipeline(
    target_spec: TargetSpec,
    space: SearchSpace,
    trap_template: TrapConfig,
    species: SpeciesConstants,
    symmetry: str = "none",
    drive_axis=None,
    geometry_mode: str = "auto",
    final_geometry: str = "harmonic",
    seed: int = 0,
    threads: int = 1,
) -> OptimizationResult:
    """stage 1 -> stage 2 -> stage 3; deterministic for fixed inputs and seed."""
    t0 = time.perf_counter()
    candidates, cell_diags = stage1_search(
        target_spec, space, trap_template, species, drive_axis, geometry_mode, seed, threads
    )
    if not candidates:
        summary = {}
        for c in cell_diags:
            summary[c.verdict] = summary.get(c.verdict, 0) + 1
        raise ConvergenceError(f"stage1: no feasible grid cell ({summary})")
    best = candidates[0]
    orbits = symmetry_orbits(best.crystal, symmetry)
    refined = stage2_refine(best, orbits, space, target_spec, species, drive_axis)
    histories = {"stage1": best.history, "stage2": refined.history}
    result = stage3_finalize(
        refined,
        trap_template,
        species,
        space,
        target_spec,
        symmetry,
        drive_axis,
        final_geometry,
        cells_diagnostics=cell_diags,
        histories=histories,
    )
    result.stage_epsilons["stage1"] = best.epsilon
    result.stage_epsilons["stage2"] = refined.epsilon
    result.iterations["stage1_cells"] = len(cell_diags)
    result.wall_time_s = time.perf_counter() - t0
    return result


def untweezed_baseline(
    target_spec: TargetSpec,
    trap: TrapConfig,
    species: SpeciesConstants,
    mu_range: tuple[float, float],
    drive_axis=None,
    pin_axes: tuple[str, ...] = ("y",),
    n_scan: int = 400,
    resonance_guard: float = DEFAULT_RESONANCE_GUARD,
    crystal: Optional[IonCrystal] = None,
):
    """Best error reachable by scanning the beatnote only, no tweezers.

    Returns (best_epsilon, best_mu, curve) with curve a list of (mu, eps)
    over the scanned range, resonant points skipped.
    """
    axis = default_drive_axis(pin_axes) if drive_axis is None else axis_vector(drive_axis)
    if crystal is None:
        crystal = solve_equilibrium(trap, species, trap.n_ions)
    target = build_target(target_spec, crystal)
    problem = PinProblem(crystal, target, axis, pin_axes, None, resonance_guard)
    problem.set_scales((0.0, 0.0), mu_range)
    zeros = np.zeros(len(problem.orbits))
    curve = []
    for mu in np.linspace(mu_range[0], mu_range[1], n_scan):
        eps = problem.epsilon(zeros, mu)
        if np.isfinite(eps):
            curve.append((float(mu), float(eps)))
    if not curve:
        raise ResonanceError("every scanned beatnote hit the resonance guard")
    best_mu, best_eps = min(curve, key=lambda p: (p[1], p[0]))
    return best_eps, best_mu, curve
