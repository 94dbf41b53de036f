"""Gradients of coupling entries with respect to diagonal Hessian elements.

Two independent routes are provided:

* an adjoint of the eigendecomposition (the fast analytic path), with the
  gradient defined as the first-order eigen-perturbation of the detuned
  mode sum;
* a central finite-difference oracle over a caller-supplied builder.

Because the coupling matrix is a projected resolvent, the summed
mode-pair kernel collapses to Theta_m * Theta_n, so the same derivative is
also available in a form that stays finite for degenerate spectra
(`coupling_jacobian_diag`).  The strict adjoint entry point keeps the
documented refusal on degenerate spectra.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .constants import SpeciesConstants
from .coupling import CouplingMatrix, DriveConfig, check_resonance, coupling_prefactor
from .errors import DegenerateSpectrumError, InvalidArgumentError
from .modes import TOL_DEGENERACY_REL, ModeSpectrum, mode_projections


@dataclass(frozen=True)
class CouplingGradient:
    """d J[k, l] / d A[b, b] for requested pairs over diagonal coordinates."""

    pairs: tuple  # ((k, l), ...)
    coords: np.ndarray  # (P,) flattened coordinate indices differentiated
    values: np.ndarray  # (n_pairs, P)

    def row(self, pair) -> np.ndarray:
        return self.values[self.pairs.index(tuple(pair))]


def all_pairs(n_ions: int) -> tuple:
    return tuple((k, l) for k in range(n_ions) for l in range(k + 1, n_ions))


def _degeneracy_gaps(spectrum: ModeSpectrum) -> np.ndarray:
    return np.diff(spectrum.eigenvalues)


def assert_nondegenerate(spectrum: ModeSpectrum) -> None:
    tol = TOL_DEGENERACY_REL * spectrum.freq_scale**2
    gaps = _degeneracy_gaps(spectrum)
    if gaps.size and np.min(gaps) < tol:
        m = int(np.argmin(gaps))
        raise DegenerateSpectrumError(
            f"eigenvalues {m} and {m + 1} separated by {gaps[m]:.3e} < {tol:.3e} rad^2/s^2; "
            "perturb the pinning by ~1e-6*wbar^2 and retry"
        )


def coupling_jacobian_diag(
    spectrum: ModeSpectrum,
    drive: DriveConfig,
    species: SpeciesConstants,
    coords: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Jacobian d J[k, l] / d A[b, b], shape (N, N, P).

    Uses the resolvent identity, well defined for degenerate spectra when
    all modes are included; masked drives fall back to the per-mode kernel
    and require the mask boundary to be non-degenerate.
    """
    check_resonance(spectrum, drive)
    rows = _coord_rows(spectrum, coords)
    pref = coupling_prefactor(drive, species)
    proj = mode_projections(spectrum, drive.drive_axis)
    mask = drive.mask_for(spectrum)
    theta = np.zeros(spectrum.n_modes)
    theta[mask] = 1.0 / (drive.mu**2 - spectrum.eigenvalues[mask])
    u = spectrum.eigenvectors
    if np.all(mask):
        y = (proj * theta) @ u[rows, :].T  # (N, P) resolvent rows at coords
        return pref * y[:, None, :] * y[None, :, :]
    kernel = _masked_kernel(spectrum, theta, mask)
    ub = u[rows, :]  # (P, B)
    z = np.einsum("km,bm,mn->bkn", proj, ub, kernel, optimize=True)
    d = np.einsum("bkn,bn,ln->klb", z, ub, proj, optimize=True)
    return pref * d


def _masked_kernel(spectrum, theta, mask):
    lam = spectrum.eigenvalues
    tol = TOL_DEGENERACY_REL * spectrum.freq_scale**2
    gap = lam[:, None] - lam[None, :]
    cross = mask[:, None] ^ mask[None, :]
    if np.any(np.abs(gap[cross]) < tol):
        raise DegenerateSpectrumError(
            "mode mask boundary crosses a degenerate pair; gradient undefined"
        )
    # within the mask the divided difference of the resolvent collapses to
    # Theta_m * Theta_n; across the boundary only the included mode carries
    # a Theta factor
    kernel = theta[:, None] * theta[None, :]
    in_out = mask[:, None] & ~mask[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel[in_out] = (theta[:, None] / gap)[in_out]
        kernel[in_out.T] = (theta[None, :] / (-gap))[in_out.T]
    return kernel


def coupling_gradient_adjoint(
    hessian,
    spectrum: ModeSpectrum,
    drive: DriveConfig,
    pairs: Sequence,
    species: SpeciesConstants,
    coords: Optional[np.ndarray] = None,
) -> CouplingGradient:
    """Eigendecomposition-adjoint gradient for the requested pairs.

    Refuses spectra with eigenvalue pairs inside the degeneracy tolerance;
    callers may perturb the pinning slightly and retry, or use
    coupling_jacobian_diag for unmasked drives.
    """
    assert_nondegenerate(spectrum)
    check_resonance(spectrum, drive)
    rows = _coord_rows(spectrum, coords)
    pref = coupling_prefactor(drive, species)
    proj = mode_projections(spectrum, drive.drive_axis)
    mask = drive.mask_for(spectrum)
    lam = spectrum.eigenvalues
    u = spectrum.eigenvectors
    theta = np.zeros(spectrum.n_modes)
    theta[mask] = 1.0 / (drive.mu**2 - lam[mask])

    gap = lam[None, :] - lam[:, None]
    with np.errstate(divide="ignore"):
        f = 1.0 / gap  # antisymmetric; diagonal unused
    np.fill_diagonal(f, 0.0)

    # drive-axis projector rows: p[k, b] = axis component if b belongs to ion k
    p = _projection_matrix(spectrum, drive)
    u_rows = u[rows, :]
    values = np.empty((len(pairs), rows.size))
    for r, (k, l) in enumerate(pairs):
        lam_bar = theta**2 * proj[k] * proj[l]
        # dJ/dU for J = sum_m Theta_m (P U)_km (P U)_lm, consistent with the mode sum
        u_bar = theta[None, :] * (np.outer(p[k], proj[l]) + np.outer(p[l], proj[k]))
        c = f * (u.T @ u_bar)  # C[n, m] = (U^T Ubar)[n, m] / (lam_m - lam_n)
        np.fill_diagonal(c, lam_bar)
        # diag of U C U^T restricted to the requested coordinates
        values[r] = pref * np.sum((u_rows @ c) * u_rows, axis=1)
    return CouplingGradient(tuple(tuple(pq) for pq in pairs), rows, values)


def _projection_matrix(spectrum: ModeSpectrum, drive: DriveConfig) -> np.ndarray:
    axis = drive.drive_axis
    p = np.zeros((spectrum.n_ions, spectrum.n_modes))
    ions = spectrum.coords // 3
    axes = spectrum.coords % 3
    p[ions, np.arange(spectrum.coords.size)] = axis[axes]
    return p


def _coord_rows(spectrum: ModeSpectrum, coords) -> np.ndarray:
    if coords is None:
        return np.arange(spectrum.coords.size)
    coords = np.asarray(coords, dtype=int)
    lookup = {int(c): i for i, c in enumerate(spectrum.coords)}
    try:
        return np.array([lookup[int(c)] for c in coords], dtype=int)
    except KeyError as err:
        raise InvalidArgumentError(f"coordinate {err} not present in spectrum") from None


def coupling_gradient_fd(
    builder: Callable[[np.ndarray], CouplingMatrix],
    base: np.ndarray,
    step: float,
    pairs: Optional[Sequence] = None,
) -> CouplingGradient:
    """Central finite differences of J entries over each pinning coordinate.

    `builder` maps a pinning vector (curvatures, rad^2/s^2) to a coupling
    matrix; builder failures propagate.
    """
    if not step > 0:
        raise InvalidArgumentError("step must be positive")
    base = np.asarray(base, dtype=float)
    j0 = _as_matrix(builder(base))
    n = j0.shape[0]
    if pairs is None:
        pairs = all_pairs(n)
    values = np.empty((len(pairs), base.size))
    for i in range(base.size):
        delta = np.zeros_like(base)
        delta[i] = step
        jp = _as_matrix(builder(base + delta))
        jm = _as_matrix(builder(base - delta))
        d = (jp - jm) / (2.0 * step)
        values[:, i] = [d[k, l] for (k, l) in pairs]
    return CouplingGradient(tuple(tuple(pq) for pq in pairs), np.arange(base.size), values)


def _as_matrix(j) -> np.ndarray:
    return j.matrix if isinstance(j, CouplingMatrix) else np.asarray(j, dtype=float)
