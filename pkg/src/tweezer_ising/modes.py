"""Mass-scaled Hessian with optical pinning, phonon spectrum, Lamb-Dicke amplitudes.

The Hessian convention follows the small-oscillation Lagrangian: A is the
second derivative of the total potential at equilibrium divided by the ion
mass, so its entries carry rad^2/s^2 and a tweezer adds its curvature
tensor directly on the corresponding ion block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence, Union

import numpy as np

from .constants import SpeciesConstants
from .errors import (
    InvalidArgumentError,
    UnstableCrystalError,
    ZeroFrequencyModeError,
)

if TYPE_CHECKING:  # pragma: no cover
    from .crystal import IonCrystal, TrapConfig

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

#: eigenvalue floor, relative to wbar^2; below it the crystal is unstable
TOL_PSD_REL = 1e-6
#: eigenvalue pairs closer than this (relative to wbar^2) count as degenerate
TOL_DEGENERACY_REL = 1e-9
#: fraction of squared norm on one axis set for direction classification
DIRECTION_PURITY = 0.99


def axis_vector(axis: Union[str, Sequence[float]]) -> np.ndarray:
    """Unit vector from an axis name ('y'), a name list ('yz'), or a 3-vector."""
    if isinstance(axis, str):
        v = np.zeros(3)
        for ch in axis:
            if ch not in AXIS_INDEX:
                raise InvalidArgumentError(f"unknown axis {axis!r}")
            v[AXIS_INDEX[ch]] = 1.0
    else:
        v = np.asarray(axis, dtype=float)
        if v.shape != (3,):
            raise InvalidArgumentError("drive axis must be a 3-vector or axis name")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidArgumentError("drive axis must be nonzero")
    return v / norm


@dataclass(frozen=True)
class TweezerPattern:
    """Per-ion pinning curvature tensors and optional center offsets.

    curvatures[i] is the symmetric 3x3 tensor of the local optical
    potential at ion i in rad^2/s^2 (negative entries = anti-confinement);
    offsets[i] is the tweezer center displacement from the aligned
    equilibrium in meters.
    """

    curvatures: np.ndarray  # (N, 3, 3)
    offsets: np.ndarray = None  # (N, 3)

    def __post_init__(self):
        curv = np.asarray(self.curvatures, dtype=float)
        if curv.ndim != 3 or curv.shape[1:] != (3, 3):
            raise InvalidArgumentError("curvatures must have shape (N, 3, 3)")
        if not np.allclose(curv, np.transpose(curv, (0, 2, 1)), rtol=0, atol=1e-9 * (np.abs(curv).max() + 1.0)):
            raise InvalidArgumentError("curvature tensors must be symmetric")
        off = self.offsets
        off = np.zeros((curv.shape[0], 3)) if off is None else np.asarray(off, dtype=float)
        if off.shape != (curv.shape[0], 3):
            raise InvalidArgumentError("offsets must have shape (N, 3)")
        if not np.all(np.isfinite(off)) or not np.all(np.isfinite(curv)):
            raise InvalidArgumentError("pattern entries must be finite")
        object.__setattr__(self, "curvatures", curv)
        object.__setattr__(self, "offsets", off)

    @property
    def n_ions(self) -> int:
        return self.curvatures.shape[0]

    @property
    def active_axes(self) -> tuple[int, ...]:
        nonzero = np.any(np.abs(self.curvatures) > 0, axis=0)  # (3, 3)
        on = nonzero.any(axis=0) | nonzero.any(axis=1)
        return tuple(int(a) for a in np.flatnonzero(on))

    def with_offsets(self, offsets: np.ndarray) -> "TweezerPattern":
        return TweezerPattern(self.curvatures, np.asarray(offsets, dtype=float))

    @classmethod
    def zero(cls, n_ions: int) -> "TweezerPattern":
        return cls(np.zeros((n_ions, 3, 3)))

    @classmethod
    def from_frequencies(
        cls,
        omegas: np.ndarray,
        axes: Union[str, Sequence[str]] = "y",
        offsets: Optional[np.ndarray] = None,
    ) -> "TweezerPattern":
        """Diagonal pattern from per-ion pinning frequencies (rad/s).

        Negative frequencies encode anti-confinement through a signed
        square: curvature = sign(omega) * omega^2 on each listed axis.
        """
        w = np.asarray(omegas, dtype=float)
        curv = np.zeros((w.size, 3, 3))
        for ax in axes:
            a = AXIS_INDEX[ax] if isinstance(ax, str) else int(ax)
            curv[:, a, a] = np.sign(w) * w**2
        return cls(curv, offsets)


@dataclass(frozen=True)
class HessianMatrix:
    """Mass-scaled Hessian of the total potential at equilibrium."""

    matrix: np.ndarray  # (3N, 3N), rad^2/s^2
    n_ions: int
    freq_scale: float  # wbar (rad/s) used for dimensionless tolerances

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        scale = np.abs(a).max() or 1.0
        if not np.allclose(a, a.T, rtol=0, atol=1e-12 * scale):
            raise InvalidArgumentError("Hessian must be symmetric")
        object.__setattr__(self, "matrix", 0.5 * (a + a.T))


def mass_scaled_hessian(
    positions: np.ndarray,
    trap: "TrapConfig",
    species: SpeciesConstants,
    curvatures: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(1/M) * grad^2 V at the given positions, shape (3N, 3N).

    Valid at any distinct-ion configuration; physical normal modes require
    an equilibrium.  The pinning contribution is block diagonal and does
    not depend on tweezer centers.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    a = np.zeros((n, n, 3, 3))
    if n > 1:
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, 1.0)
        unit = diff / dist[:, :, None]
        ke2_m = species.coulomb_coefficient / species.mass
        t = 3.0 * unit[:, :, :, None] * unit[:, :, None, :] - np.eye(3)
        t *= (ke2_m / dist**3)[:, :, None, None]
        mask = np.eye(n, dtype=bool)
        t[mask] = 0.0
        a -= t
        a[np.arange(n), np.arange(n)] = t.sum(axis=1)
    idx = np.arange(n)
    for ax in range(3):
        a[idx, idx, ax, ax] += trap.omegas[ax] ** 2
    if curvatures is not None:
        a[idx, idx] += curvatures
    return a.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)


def build_hessian(crystal: "IonCrystal", tweezers: Optional[TweezerPattern] = None) -> HessianMatrix:
    """Hessian of the crystal including centered pinning.

    Offset tweezers change the equilibrium first; re-solve and rebuild at
    the shifted positions instead of calling this with nonzero offsets.
    """
    curv = None
    if tweezers is not None:
        if tweezers.n_ions != crystal.n_ions:
            raise InvalidArgumentError("pattern size disagrees with crystal")
        if np.any(tweezers.offsets != 0.0):
            raise InvalidArgumentError(
                "build_hessian expects centered tweezers; re-solve the equilibrium for offset patterns"
            )
        curv = tweezers.curvatures
    a = mass_scaled_hessian(crystal.positions, crystal.trap, crystal.species, curv)
    return HessianMatrix(a, crystal.n_ions, crystal.trap.omega_bar)


@dataclass(frozen=True)
class ModeSpectrum:
    """Sorted phonon frequencies and orthonormal eigenvectors.

    `coords` maps eigenvector rows to flattened coordinate indices
    (3*ion + axis); a full spectrum has coords = arange(3N), a block
    spectrum a subset.
    """

    frequencies: np.ndarray  # (B,) rad/s, ascending
    eigenvalues: np.ndarray  # (B,) rad^2/s^2
    eigenvectors: np.ndarray  # (B, B), columns are modes
    coords: np.ndarray  # (B,) int
    n_ions: int
    freq_scale: float
    direction_weights: np.ndarray = field(default=None)  # (B, 3)

    def __post_init__(self):
        if self.direction_weights is None:
            axes = np.asarray(self.coords) % 3
            w = np.zeros((len(self.frequencies), 3))
            for a in range(3):
                rows = axes == a
                if np.any(rows):
                    w[:, a] = np.sum(self.eigenvectors[rows, :] ** 2, axis=0)
            object.__setattr__(self, "direction_weights", w)

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    def modes_along(self, axis: Union[str, Sequence[float]], purity: float = DIRECTION_PURITY) -> np.ndarray:
        """Boolean mask of modes with >= purity of their norm on the given axes."""
        v = axis_vector(axis)
        on = np.flatnonzero(np.abs(v) > 0)
        return self.direction_weights[:, on].sum(axis=1) >= purity


def mode_spectrum(
    hessian: Union[HessianMatrix, np.ndarray],
    freq_scale: Optional[float] = None,
    coords: Optional[np.ndarray] = None,
    n_ions: Optional[int] = None,
) -> ModeSpectrum:
    """Eigendecomposition with deterministic signs and a stability check.

    Eigenvalues below -TOL_PSD_REL * wbar^2 raise UnstableCrystalError;
    small negatives in the tolerance band are clipped to zero frequency.
    Degenerate groups are re-orthogonalized against the canonical basis so
    repeated runs give identical eigenvectors.
    """
    if isinstance(hessian, HessianMatrix):
        a = hessian.matrix
        freq_scale = freq_scale or hessian.freq_scale
        n_ions = n_ions or hessian.n_ions
    else:
        a = np.asarray(hessian, dtype=float)
        scale = np.abs(a).max() or 1.0
        if not np.allclose(a, a.T, rtol=0, atol=1e-10 * scale):
            raise InvalidArgumentError("Hessian must be symmetric")
        a = 0.5 * (a + a.T)
    if coords is None:
        coords = np.arange(a.shape[0])
        if n_ions is None:
            n_ions = a.shape[0] // 3
    coords = np.asarray(coords, dtype=int)
    if n_ions is None:
        raise InvalidArgumentError("n_ions required for block spectra")
    if freq_scale is None:
        freq_scale = float(np.sqrt(np.mean(np.abs(np.diag(a))))) or 1.0

    lam, vec = np.linalg.eigh(a)
    floor = TOL_PSD_REL * freq_scale**2
    if lam[0] < -floor:
        raise UnstableCrystalError(
            f"lowest eigenvalue {lam[0]:.6e} below stability floor -{floor:.6e} (rad^2/s^2)"
        )
    lam_clipped = np.clip(lam, 0.0, None)
    vec = _deterministic_eigenvectors(lam, vec, TOL_DEGENERACY_REL * freq_scale**2)
    freqs = np.sqrt(lam_clipped)
    return ModeSpectrum(freqs, lam, vec, coords, n_ions, freq_scale)


def _deterministic_eigenvectors(lam, vec, tol):
    vec = vec.copy()
    b = vec.shape[0]
    start = 0
    while start < b:
        stop = start + 1
        while stop < b and lam[stop] - lam[stop - 1] < tol:
            stop += 1
        if stop - start > 1:
            vec[:, start:stop] = _canonical_subspace_basis(vec[:, start:stop])
        start = stop
    # sign convention: the largest-magnitude component of each mode is positive
    pick = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[pick, np.arange(b)])
    signs[signs == 0] = 1.0
    return vec * signs


def _canonical_subspace_basis(basis):
    # project canonical unit vectors into the degenerate subspace in index
    # order and orthonormalize; deterministic regardless of LAPACK's choice
    dim = basis.shape[1]
    proj = basis @ basis.T
    out = []
    for j in range(basis.shape[0]):
        v = proj[:, j].copy()
        for u in out:
            v -= u * (u @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            out.append(v / norm)
            if len(out) == dim:
                break
    if len(out) != dim:  # pragma: no cover - subspace always spans
        return basis
    return np.column_stack(out)


def lamb_dicke(
    spectrum: ModeSpectrum,
    k_eff: float,
    drive_axis: Union[str, Sequence[float]],
    species: SpeciesConstants,
) -> np.ndarray:
    """Lamb-Dicke parameters eta[j, m] = k_eff * b_jm * sqrt(hbar / 2 M w_m).

    b_jm is the drive-axis projection of mode m at ion j.  A zero-frequency
    mode with nonzero projection raises ZeroFrequencyModeError.
    """
    if not k_eff > 0:
        raise InvalidArgumentError("k_eff must be positive")
    proj = mode_projections(spectrum, drive_axis)
    coupled = np.any(np.abs(proj) > 1e-12, axis=0)
    if np.any(coupled & (spectrum.frequencies == 0.0)):
        raise ZeroFrequencyModeError("a zero-frequency mode couples to the drive")
    zp = np.zeros_like(spectrum.frequencies)
    ok = spectrum.frequencies > 0
    hbar = species.fundamental.hbar
    zp[ok] = np.sqrt(hbar / (2.0 * species.mass * spectrum.frequencies[ok]))
    eta = k_eff * proj * zp[None, :]
    eta[:, ~coupled] = 0.0
    return eta


def mode_projections(spectrum: ModeSpectrum, drive_axis: Union[str, Sequence[float]]) -> np.ndarray:
    """Drive-axis amplitude of each mode at each ion, shape (N, B)."""
    v = axis_vector(drive_axis)
    ions = spectrum.coords // 3
    axes = spectrum.coords % 3
    proj = np.zeros((spectrum.n_ions, spectrum.n_modes))
    np.add.at(proj, ions, v[axes][:, None] * spectrum.eigenvectors)
    return proj


def block_coords(n_ions: int, axes: Sequence[Union[str, int]]) -> np.ndarray:
    """Flattened coordinate indices of the given axes for every ion."""
    idx = sorted(AXIS_INDEX[a] if isinstance(a, str) else int(a) for a in axes)
    return np.array([3 * i + a for i in range(n_ions) for a in idx], dtype=int)
