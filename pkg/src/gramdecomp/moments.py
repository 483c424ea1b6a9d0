"""Moment and Vandermonde matrix assembly, numerical rank, flat-extension
detection, structured kernel bases, and point extraction.

Rank decisions are the crux: integer points of size ~100 give degree-8
moments near 1e16, so the raw matrices have singular values spanning 16
orders of magnitude and any fixed relative threshold misreads the rank.
All rank and kernel computations therefore happen on a *balanced* copy
D^-1 A D^-1 (resp. A D^-1) with D = diag(s^|beta|), which is exactly the
moment (Vandermonde) matrix of the points divided by s.  The balancing
is a change of coordinates only; matrices are stored and returned at
native scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .monomials import MonomialBasis
from .polytensor import Decomposition, MomentSequence, moments_from_decomposition


class ExtractionError(RuntimeError):
    """Point extraction failed (complex eigenstructure, negative weight,
    or reconstructed moments off beyond tolerance)."""


class ExtensionMismatchError(ValueError):
    """Shared entries of the two moment matrices disagree."""


@dataclass
class MomentMatrix:
    """Symmetric matrix [m_{beta+beta'}] over MonomialBasis(n, degree)."""

    basis: MonomialBasis
    degree: int
    matrix: np.ndarray
    sequence: MomentSequence

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def size(self) -> int:
        return len(self.basis)

    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def balance_scale(self) -> float:
        return self.sequence.scale()

    def balanced(self) -> np.ndarray:
        """D^-1 M D^-1 with D = diag(s^|beta|); equals the moment matrix of
        the points divided by s."""
        d = _degree_weights(self.basis, self.balance_scale())
        return self.matrix / d[:, None] / d[None, :]

    def correlation_form(self) -> np.ndarray:
        w = correlation_weights(self.sequence, self.basis)
        return self.matrix / w[:, None] / w[None, :]

    def rank(self, rel_tol: float = 1e-9) -> int:
        return numerical_rank(self.correlation_form(), rel_tol)[0]


@dataclass
class VandermondeMatrix:
    """r x dim(R_degree) matrix with entry (t, beta) = z_t^beta."""

    points: np.ndarray
    basis: MonomialBasis
    degree: int
    matrix: np.ndarray

    @property
    def rank_bound(self) -> int:
        return min(self.matrix.shape)

    def balance_scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.points))) if self.points.size else 1.0)

    def balanced(self) -> np.ndarray:
        d = _degree_weights(self.basis, self.balance_scale())
        return self.matrix / d[None, :]


def _degree_weights(basis: MonomialBasis, s: float) -> np.ndarray:
    return np.array([s ** sum(beta) for beta in basis])


def _unit_columns(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=0)
    return a / np.where(norms > 0, norms, 1.0)


def correlation_weights(m: MomentSequence, basis: MonomialBasis) -> np.ndarray:
    """Diagonal congruence weights w_beta = sqrt(m_{2 beta}).

    Normalizing a moment matrix by these weights turns it into a
    correlation matrix: every monomial direction is measured against the
    mass the points actually put on it, which is the data-adaptive
    refinement of the graded s^|beta| balancing.  Directions with zero
    even moment (exactly zero row in any PSD moment matrix) fall back to
    the graded weight so solver noise there is not amplified.
    """
    s = m.scale()
    w = np.empty(len(basis))
    for j, beta in enumerate(basis):
        val = m[tuple(2 * b for b in beta)]
        w[j] = np.sqrt(val) if val > 0 else s ** sum(beta)
    return w


def build_moment_matrix(m: MomentSequence, degree: int) -> MomentMatrix:
    """Entry (beta, beta') = m_{beta+beta'}; requires m up to 2*degree."""
    if m.max_degree < 2 * degree:
        raise ValueError(
            f"moment sequence only reaches degree {m.max_degree}, need {2 * degree}"
        )
    basis = MonomialBasis(m.n, degree)
    size = len(basis)
    mat = np.empty((size, size))
    for i, beta in enumerate(basis):
        for j in range(i, size):
            gamma = basis[j]
            v = m[tuple(b + g for b, g in zip(beta, gamma))]
            mat[i, j] = v
            mat[j, i] = v
    return MomentMatrix(basis, degree, mat, m)


def moment_matrix_from_decomposition(dec: Decomposition, degree: int) -> MomentMatrix:
    return build_moment_matrix(
        moments_from_decomposition(dec, 2 * degree), degree
    )


def build_vandermonde(points, degree: int) -> VandermondeMatrix:
    """Rows are points, columns are monomials of degree <= degree in
    graded-lex order; the beta=0 column is all ones."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    basis = MonomialBasis(pts.shape[1], degree)
    mat = np.empty((pts.shape[0], len(basis)))
    for j, beta in enumerate(basis):
        mat[:, j] = np.prod(pts ** np.array(beta), axis=1)
    return VandermondeMatrix(pts, basis, degree, mat)


def numerical_rank(a: np.ndarray, rel_tol: float = 1e-9) -> tuple[int, np.ndarray]:
    """Count of singular values above rel_tol * sigma_1 (0 for the zero
    matrix), together with the full singular value vector."""
    if not 0 < rel_tol < 1:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0, np.zeros(0)
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0:
        return 0, sv
    return int(np.count_nonzero(sv > rel_tol * sv[0])), sv


@dataclass
class FlatnessVerdict:
    flat: bool
    rank: int | None  # common rank when flat
    rank_low: int
    rank_high: int
    psd_ok: bool
    min_eigenvalue: float

    def __bool__(self) -> bool:
        return self.flat


def check_flat_extension(
    m_low: MomentMatrix, m_high: MomentMatrix, rel_tol: float = 1e-9
) -> FlatnessVerdict:
    """Flat(r) iff rank(M_D) = rank(M_{D+1}) = r at the given relative
    threshold and M_{D+1} is positive semidefinite.

    Raises ExtensionMismatchError when the shared moments disagree.
    """
    if m_high.degree != m_low.degree + 1 or m_high.n != m_low.n:
        raise ValueError("second matrix must extend the first by one degree")
    s = m_high.balance_scale()
    shared = MonomialBasis(m_low.n, 2 * m_low.degree)
    lo = np.array([m_low.sequence[a] / s ** sum(a) for a in shared])
    hi = np.array([m_high.sequence[a] / s ** sum(a) for a in shared])
    scale = 1.0 + max(np.max(np.abs(lo)), np.max(np.abs(hi)))
    if np.max(np.abs(lo - hi)) > rel_tol * scale:
        raise ExtensionMismatchError(
            f"shared moments differ by {np.max(np.abs(lo - hi)):.3e}"
        )

    rank_low, _ = numerical_rank(m_low.correlation_form(), rel_tol)
    bal_high = m_high.correlation_form()
    rank_high, _ = numerical_rank(bal_high, rel_tol)
    eigs = np.linalg.eigvalsh(bal_high)
    min_eig = float(eigs[0])
    psd_ok = min_eig >= -rel_tol * max(float(eigs[-1]), 0.0) - rel_tol
    flat = rank_low == rank_high and psd_ok
    return FlatnessVerdict(
        flat, rank_high if flat else None, rank_low, rank_high, psd_ok, min_eig
    )


@dataclass
class KernelBasis:
    """Structured kernel basis of a flat Vandermonde pair.

    K_d spans Ker(V_d) (orthonormal columns, dim R_d x t with
    t = dim R_d - r).  F solves V_d F = W where W holds the degree d+1
    columns of V_{d+1}, so each column of F lists the coefficients of the
    normal form of a degree d+1 monomial at the points.  The block matrix

        K_{d+1} = [[K_d, -F], [0, I_s]]

    has N - r independent columns spanning Ker(V_{d+1}).
    """

    K_d: np.ndarray
    F: np.ndarray
    K_d1: np.ndarray
    rank: int
    t: int
    s: int


def kernel_extension(
    v_d: VandermondeMatrix, v_d1: VandermondeMatrix, rel_tol: float = 1e-9
) -> KernelBasis:
    """Build the structured kernel basis; requires rank(V_d) = rank(V_{d+1}) = r."""
    if v_d1.degree != v_d.degree + 1:
        raise ValueError("Vandermonde matrices must differ by one degree")
    r = v_d.matrix.shape[0]
    bal_d = v_d.balanced()
    bal_d1 = v_d1.balanced()
    rank_d, _ = numerical_rank(_unit_columns(bal_d), rel_tol)
    rank_d1, _ = numerical_rank(_unit_columns(bal_d1), rel_tol)
    if rank_d < r:
        raise ValueError(f"V_d is rank deficient: rank {rank_d} < r = {r}")
    if rank_d1 != rank_d:
        raise ValueError(f"rank grows from {rank_d} to {rank_d1}; points not flat")

    scale = v_d1.balance_scale()
    dim_d = v_d.matrix.shape[1]
    dim_d1 = v_d1.matrix.shape[1]
    s_cols = dim_d1 - dim_d
    t = dim_d - r

    # Kernel and normal forms in balanced coordinates, mapped back to the
    # native monomial scale afterwards.
    k_bal = scipy.linalg.null_space(bal_d, rcond=rel_tol)
    if k_bal.shape[1] != t:
        raise ValueError(
            f"kernel dimension {k_bal.shape[1]} inconsistent with rank {r}"
        )
    w_bal = bal_d1[:, dim_d:]
    f_bal, *_ = np.linalg.lstsq(bal_d, w_bal, rcond=None)

    d_w = _degree_weights(v_d.basis, scale)
    K_d = k_bal / d_w[:, None]
    if t > 0:
        K_d, _ = np.linalg.qr(K_d)  # re-orthonormalize at native scale
    F = (f_bal / d_w[:, None]) * scale ** (v_d.degree + 1)

    K_d1 = np.zeros((dim_d1, t + s_cols))
    K_d1[:dim_d, :t] = K_d
    K_d1[:dim_d, t:] = -F
    K_d1[dim_d:, t:] = np.eye(s_cols)
    return KernelBasis(K_d, F, K_d1, r, t, s_cols)


def extract_points(
    m_high: MomentMatrix,
    r: int,
    rel_tol: float = 1e-9,
    seed: int = 0,
    verify_tol: float | None = 1e-6,
) -> Decomposition:
    """Recover r distinct real points and positive weights from a flat PSD
    moment matrix of degree d+1 via multiplication-matrix eigenvalues.

    A basis of r monomials of degree <= d is chosen by column-pivoted QR,
    one multiplication matrix per variable is assembled, and coordinates
    are paired through the eigenvectors of a seeded random combination.
    Weights come from the Vandermonde system in least squares.  When
    `verify_tol` is set, the recovered decomposition must reproduce the
    balanced moments to that relative accuracy.
    """
    n = m_high.n
    d = m_high.degree - 1
    dim_d = len(MonomialBasis(n, d))
    if not 1 <= r <= dim_d:
        raise ExtractionError(f"rank {r} outside (0, dim R_d = {dim_d}]")
    scale = m_high.balance_scale()
    bal = m_high.balanced()

    _, _, piv = scipy.linalg.qr(bal[:, :dim_d], pivoting=True)
    basis_cols = np.sort(piv[:r])
    u = bal[:, basis_cols]

    mult = []
    for i in range(n):
        targets = np.empty((bal.shape[0], r))
        for k, col in enumerate(basis_cols):
            beta = m_high.basis[col]
            shifted = tuple(b + (1 if j == i else 0) for j, b in enumerate(beta))
            targets[:, k] = bal[:, m_high.basis.index(shifted)]
        sol, *_ = np.linalg.lstsq(u, targets, rcond=None)
        mult.append(sol)

    rng = np.random.default_rng(seed)
    combo = rng.normal(size=n)
    combo /= np.linalg.norm(combo)
    joint = sum(c * m for c, m in zip(combo, mult))
    eigvals, eigvecs = np.linalg.eig(joint)
    coord_scale = 1.0 + float(np.max(np.abs(eigvals)))
    if np.max(np.abs(eigvals.imag)) > 1e-6 * coord_scale:
        raise ExtractionError(
            "complex eigenvalues in multiplication matrix; moment matrix does "
            "not describe a real (Gramian) decomposition"
        )

    pts_scaled = np.empty((r, n))
    for t_idx in range(r):
        vec = eigvecs[:, t_idx]
        denom = np.vdot(vec, vec)
        for i in range(n):
            z = np.vdot(vec, mult[i] @ vec) / denom
            if abs(z.imag) > 1e-6 * coord_scale:
                raise ExtractionError("complex coordinate recovered")
            pts_scaled[t_idx, i] = z.real

    van = build_vandermonde(pts_scaled, d + 1)
    bal_moments = np.array(
        [m_high.sequence[a] / scale ** sum(a) for a in van.basis]
    )
    weights, *_ = np.linalg.lstsq(van.matrix.T, bal_moments, rcond=None)
    w_tol = 1e-8 * (1.0 + float(np.max(np.abs(weights))))
    if np.any(weights < -w_tol):
        raise ExtractionError(f"negative weight recovered: {weights.min():.3e}")
    weights = np.maximum(weights, w_tol)

    if verify_tol is not None:
        recon = van.matrix.T @ weights
        err = float(np.max(np.abs(recon - bal_moments)))
        if err > verify_tol * (1.0 + float(np.max(np.abs(bal_moments)))):
            raise ExtractionError(
                f"recovered decomposition misses moments by {err:.3e}"
            )

    return Decomposition(points=pts_scaled * scale, weights=weights)


def refine_decomposition(
    target: MomentSequence, dec: Decomposition, max_iter: int = 60, tol: float = 1e-14
) -> Decomposition:
    """Levenberg-Marquardt polish of (points, weights) against a moment
    sequence.

    Residuals are the balanced moments, so the fit is relative across
    degrees.  Used to sharpen extraction output that is contaminated by
    solver-level noise; returns the input unchanged if the iteration does
    not improve the fit.
    """
    n = dec.n
    scale = target.scale()
    basis = target.basis
    weights_vec = _degree_weights(basis, scale)
    goal = target.values / weights_vec
    goal_norm = 1.0 + float(np.linalg.norm(goal))

    def residual(pts, lam):
        van = build_vandermonde(pts / scale, target.max_degree)
        return van.matrix.T @ lam - goal, van

    pts = dec.points.copy()
    lam = dec.weights.copy()
    res, van = residual(pts, lam)
    best = (pts.copy(), lam.copy(), float(np.linalg.norm(res)))
    damping = 1e-10
    for _ in range(max_iter):
        r_count = pts.shape[0]
        jac = np.zeros((len(basis), r_count * (n + 1)))
        for t_idx in range(r_count):
            jac[:, t_idx] = van.matrix[t_idx]  # d/d lambda_t
            for i in range(n):
                col = np.zeros(len(basis))
                for j, beta in enumerate(basis):
                    if beta[i] > 0:
                        lower = tuple(
                            b - (1 if k == i else 0) for k, b in enumerate(beta)
                        )
                        col[j] = (
                            beta[i]
                            * lam[t_idx]
                            * van.matrix[t_idx, basis.index(lower)]
                        )
                jac[:, r_count + t_idx * n + i] = col / scale
        col_scale = np.linalg.norm(jac, axis=0)
        col_scale[col_scale <= 0] = 1.0
        improved = False
        for _ in range(12):
            # Augmented least squares instead of normal equations: the
            # Jacobian turns ill-conditioned near clustered points and
            # J^T J would square that.
            aug = np.vstack([jac, np.sqrt(damping) * np.diag(col_scale)])
            rhs = np.concatenate([-res, np.zeros(jac.shape[1])])
            step, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
            lam_new = lam + step[:r_count]
            pts_new = pts + step[r_count:].reshape(r_count, n)
            if np.any(lam_new <= 0):
                damping *= 10.0
                continue
            res_new, van_new = residual(pts_new, lam_new)
            if float(np.linalg.norm(res_new)) < best[2]:
                improved = True
                break
            damping *= 10.0
        if not improved:
            break
        damping = max(damping / 30.0, 1e-14)
        pts, lam, res, van = pts_new, lam_new, res_new, van_new
        best = (pts.copy(), lam.copy(), float(np.linalg.norm(res)))
        if best[2] <= tol * goal_norm:
            break
    try:
        return Decomposition(points=best[0], weights=best[1])
    except ValueError:
        return dec
