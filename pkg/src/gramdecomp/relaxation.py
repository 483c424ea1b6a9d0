"""Trace-minimizing moment-completion relaxation.

Given p of degree 2d with nonzero constant term, the relaxation seeks a
PSD matrix X indexed by monomials of degree <= d+1 that has moment
structure (entries constant on each support class beta + beta'), matches
the moments of p on degrees <= 2d, and minimizes the trace.

The support-class basis splits the symmetric matrices S_N into one
all-ones "moment pattern" Y_alpha per class plus an orthonormal
complement {Z_alpha_i}; <Z, X> = 0 forces moment structure and
<Y_alpha, X> pins the class value.  With entrywise semantics each entry
of the class equals m_alpha, so the right-hand side of the Y constraint
is c_alpha * m_alpha with c_alpha the class size.

The SDP is solved after an exact change of variables X = D Xt D with
D = diag(s^|beta|): this maps the cost I to the diagonal D^2, moments to
the well-scaled moments of the points divided by s, and is undone on
output.  It is a preconditioner only; the optimization problem itself is
the native-scale trace minimization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .monomials import MonomialBasis, MultiIndex
from .moments import (
    ExtractionError,
    MomentMatrix,
    build_moment_matrix,
    moment_matrix_from_decomposition,
    extract_points,
    numerical_rank,
    refine_decomposition,
)
from .polytensor import (
    Decomposition,
    MomentSequence,
    Polynomial,
    moments_from_poly,
    verify_decomposition,
)
from .sdp import SDPOptions, SDPProblem, SDPSolution, solve_sdp


class OrthBasis:
    """Support-class orthogonal basis of S_N for N = dim R_{d+1}.

    For each alpha with |alpha| <= 2d+2 the class holds the entries
    (beta, beta') with beta + beta' = alpha.  Y[alpha] carries 1 on every
    class entry; Z[alpha] is a deterministic orthonormal basis (built by
    a Householder reflection of the normalized Y coefficient vector) of
    the class subspace orthogonal to Y[alpha].
    """

    def __init__(self, n: int, d: int):
        if n < 1 or d < 1:
            raise ValueError("need n >= 1 and d >= 1")
        self.n = n
        self.d = d
        self.basis = MonomialBasis(n, d + 1)
        N = len(self.basis)
        self.size = N
        self.alpha_basis = MonomialBasis(n, 2 * d + 2)

        pairs: dict[MultiIndex, list[tuple[int, int]]] = {}
        for i, beta in enumerate(self.basis):
            for j in range(i, N):
                gamma = self.basis[j]
                alpha = tuple(b + g for b, g in zip(beta, gamma))
                pairs.setdefault(alpha, []).append((i, j))

        self.class_pairs = {a: sorted(p) for a, p in pairs.items()}
        self.Y: dict[MultiIndex, np.ndarray] = {}
        self.Z: dict[MultiIndex, list[np.ndarray]] = {}
        self.c: dict[MultiIndex, int] = {}
        for alpha in self.alpha_basis:
            plist = self.class_pairs[alpha]
            y = np.zeros((N, N))
            ordered = 0
            for i, j in plist:
                y[i, j] = 1.0
                y[j, i] = 1.0
                ordered += 1 if i == j else 2
            self.Y[alpha] = y
            self.c[alpha] = ordered
            self.Z[alpha] = self._complement(plist, N)

    def _complement(self, plist: list[tuple[int, int]], N: int) -> list[np.ndarray]:
        u = len(plist)
        if u == 1:
            return []
        # Coefficients of Y in the orthonormal unit-pair basis.
        y = np.array([1.0 if i == j else np.sqrt(2.0) for i, j in plist])
        y /= np.linalg.norm(y)
        v = y - np.eye(u)[:, 0]
        nv = np.linalg.norm(v)
        house = np.eye(u) if nv < 1e-14 else np.eye(u) - 2.0 * np.outer(v, v) / nv**2
        out = []
        for k in range(1, u):
            z = np.zeros((N, N))
            for coeff, (i, j) in zip(house[:, k], plist):
                if i == j:
                    z[i, i] = coeff
                else:
                    z[i, j] = coeff / np.sqrt(2.0)
                    z[j, i] = coeff / np.sqrt(2.0)
            out.append(z)
        return out

    def matrices(self):
        """All (Y, Z) basis matrices; spans S_N with N(N+1)/2 elements."""
        for alpha in self.alpha_basis:
            yield self.Y[alpha]
        for alpha in self.alpha_basis:
            yield from self.Z[alpha]

    def coefficient(self, S: np.ndarray, alpha: MultiIndex) -> float:
        """coeff(x^T S x, x^alpha) = sum of the class entries of S."""
        return float(np.tensordot(self.Y[alpha], S))

    def class_values(self, X: np.ndarray, alpha: MultiIndex) -> np.ndarray:
        return np.array([X[i, j] for i, j in self.class_pairs[alpha]])


def build_orth_basis(n: int, d: int) -> OrthBasis:
    return OrthBasis(n, d)


@dataclass
class RelaxationProblem:
    """SDP data plus the bookkeeping needed to interpret its solution."""

    sdp: SDPProblem
    orth: OrthBasis
    y_alphas: list[MultiIndex]
    z_alphas: list[tuple[MultiIndex, int]]
    scale: float
    weights: np.ndarray
    cost_scale: float
    moments: MomentSequence


def _diag_weights(m: MomentSequence, orth: OrthBasis) -> np.ndarray:
    """Congruence weights w with X = diag(w) Xc diag(w): w_beta is the
    square root of the even moment m_{2 beta}, so a feasible moment matrix
    becomes a unit-diagonal correlation matrix.  The degree d+1 moments are
    not determined by the data and are extrapolated by the per-degree
    growth of the known weights; zero moments fall back to the graded
    scale s^|beta|."""
    s = m.scale()
    n, d = orth.n, orth.d
    w = np.zeros(len(orth.basis))
    top_by_degree = [0.0] * (d + 1)
    for j, beta in enumerate(orth.basis):
        deg = sum(beta)
        if deg <= d:
            double = tuple(2 * b for b in beta)
            val = m[double]
            w[j] = np.sqrt(val) if val > 0 else s**deg
            top_by_degree[deg] = max(top_by_degree[deg], w[j])
    growth = s
    if d >= 1 and top_by_degree[d - 1] > 0 and top_by_degree[d] > 0:
        growth = max(1.0, top_by_degree[d] / top_by_degree[d - 1])
    for j, beta in enumerate(orth.basis):
        if sum(beta) == d + 1:
            prev = max(
                (w[orth.basis.index(tuple(b - (1 if k == i else 0) for k, b in enumerate(beta)))]
                 for i in range(n) if beta[i] > 0),
                default=0.0,
            )
            w[j] = growth * prev if prev > 0 else s ** (d + 1)
    return w


def assemble_relaxation(
    m: MomentSequence, orth: OrthBasis, scale: float | None = None
) -> RelaxationProblem:
    """Cost = identity (a diagonal in preconditioned coordinates); one
    constraint per Y_alpha with |alpha| <= 2d and per Z_alpha_i with
    |alpha| <= 2d+2."""
    n, d = orth.n, orth.d
    if m.n != n or m.max_degree < 2 * d:
        raise ValueError(f"need moments of degree 2d = {2 * d} in {n} variables")
    s = m.scale() if scale is None else max(1.0, float(scale))
    weights = _diag_weights(m, orth)
    congr = np.outer(weights, weights)

    amats: list[np.ndarray] = []
    b: list[float] = []
    y_alphas: list[MultiIndex] = []
    z_alphas: list[tuple[MultiIndex, int]] = []
    for alpha in MonomialBasis(n, 2 * d):
        amats.append(orth.Y[alpha] * congr)
        b.append(orth.c[alpha] * m[alpha])
        y_alphas.append(alpha)
    for alpha in orth.alpha_basis:
        for i, z in enumerate(orth.Z[alpha]):
            amats.append(z * congr)
            b.append(0.0)
            z_alphas.append((alpha, i))
    # Divide the cost by its largest entry so the solver starts at a sane
    # dual scale; a positive scalar on the objective is exact and is undone
    # when reporting the trace.
    cost_scale = float(np.max(weights**2))
    cost = np.diag(weights**2) / cost_scale
    return RelaxationProblem(
        sdp=SDPProblem(C=cost, A=amats, b=np.array(b)),
        orth=orth,
        y_alphas=y_alphas,
        z_alphas=z_alphas,
        scale=s,
        weights=weights,
        cost_scale=cost_scale,
        moments=m,
    )


@dataclass
class RelaxationOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 200
    rank_tol: float = 1e-6
    extraction_seed: int = 0
    refine: bool = True
    verify_tol: float = 1e-8


@dataclass
class RelaxationReport:
    n: int
    d: int
    size: int
    status: str
    optimal_trace: float
    rank: int
    rank_low_degree: int
    flat: bool
    moment_spread: float
    X: np.ndarray = field(repr=False)
    dual_y: dict = field(repr=False)
    dual_z: dict = field(repr=False)
    dual_S: np.ndarray = field(repr=False)
    sdp: SDPSolution = field(repr=False)
    decomposition: Decomposition | None = None
    verified: bool | None = None
    verify_residual: float | None = None
    extraction_error: str | None = None
    reference_trace: float | None = None
    solver_trace: float | None = None
    purified: bool = False
    extraction_rank: int | None = None

    @property
    def trace_vs_reference(self) -> float | None:
        if self.reference_trace is None:
            return None
        return (self.optimal_trace - self.reference_trace) / (1.0 + abs(self.reference_trace))


def solve_relaxation(
    p: Polynomial,
    options: RelaxationOptions | None = None,
    reference: Decomposition | None = None,
) -> RelaxationReport:
    """Solve the relaxation for p and interpret the optimum.

    The optimum is inspected for moment structure and numerical rank in
    balanced coordinates; when the rank of the degree <= d block matches
    the full rank r, points are extracted, polished against the input
    moments, and verified against p coefficientwise.
    """
    opts = options or RelaxationOptions()
    if p.degree % 2 != 0 or p.degree < 2:
        raise ValueError("polynomial degree bound must be even and >= 2")
    if p.constant_term == 0.0:
        raise ValueError("constant term must be nonzero (dehomogenization assumption)")
    n, d = p.n, p.degree // 2
    m = moments_from_poly(p, d)
    orth = build_orth_basis(n, d)
    prob = assemble_relaxation(m, orth)
    sdp_opts = SDPOptions(gap_tol=opts.gap_tol, feas_tol=opts.feas_tol, max_iter=opts.max_iter)
    sol = solve_sdp(prob.sdp, sdp_opts)

    s = prob.scale
    kappa = prob.cost_scale
    w = prob.weights
    X_native = sol.X * w[:, None] * w[None, :]
    S_native = kappa * sol.S / w[:, None] / w[None, :]
    dual_y = {alpha: kappa * yv for alpha, yv in zip(prob.y_alphas, sol.y)}
    dual_z = {
        (alpha, i): kappa * zv
        for (alpha, i), zv in zip(prob.z_alphas, sol.y[len(prob.y_alphas):])
    }

    # Moment structure: class entries of X must agree; measured on the
    # graded-balanced copy where every class is O(1).
    graded = np.array([s ** sum(beta) for beta in orth.basis])
    X_graded = X_native / graded[:, None] / graded[None, :]
    spread = 0.0
    class_scale = 1.0
    for alpha in orth.alpha_basis:
        vals = orth.class_values(X_graded, alpha)
        class_scale = max(class_scale, float(np.max(np.abs(vals))))
        if len(vals) > 1:
            spread = max(spread, float(np.max(vals) - np.min(vals)))
    spread /= class_scale

    # Rank decisions happen on the solver variable itself: it already sits
    # in correlation coordinates, with graded fallbacks for zero-moment
    # directions fixed from the input data rather than the noisy solution.
    rank, _ = numerical_rank(sol.X, opts.rank_tol)
    dim_d = len(MonomialBasis(n, d))
    rank_low, _ = numerical_rank(sol.X[:dim_d, :dim_d], opts.rank_tol)
    usable = sol.optimal or (
        np.isfinite(sol.gap)
        and sol.primal_residual <= 10 * opts.feas_tol
        and sol.dual_residual <= 10 * opts.feas_tol
        and sol.gap <= 10 * opts.gap_tol * (1.0 + abs(sol.primal_objective))
    )
    flat = usable and rank_low == rank

    report = RelaxationReport(
        n=n,
        d=d,
        size=orth.size,
        status=sol.status,
        optimal_trace=float(np.trace(X_native)),
        rank=rank,
        rank_low_degree=rank_low,
        flat=flat,
        moment_spread=spread,
        X=X_native,
        dual_y=dual_y,
        dual_z=dual_z,
        dual_S=S_native,
        sdp=sol,
    )
    if reference is not None:
        report.reference_trace = moment_matrix_from_decomposition(reference, d + 1).trace()

    # Extraction candidates: the solver noise floor can straddle the rank
    # threshold on hard instances, so flat readings at a ladder of
    # tolerances are all tried.  Coefficientwise verification against p is
    # the arbiter; a wrong rank cannot produce a verifying decomposition.
    candidates: list[int] = []
    if np.all(np.isfinite(sol.X)):
        fallback: list[int] = []
        for mult in (1.0, 10.0, 100.0):
            r_full, _ = numerical_rank(sol.X, opts.rank_tol * mult)
            r_low, _ = numerical_rank(sol.X[:dim_d, :dim_d], opts.rank_tol * mult)
            if r_full == r_low and 1 <= r_full <= dim_d and r_full not in candidates:
                candidates.append(r_full)
            elif 1 <= r_low <= dim_d:
                # Noise in the degree d+1 block can mask flatness; the low
                # block is pure data, so its rank is a trustworthy guess.
                fallback.append(r_low)
        for r_low in fallback:
            if r_low not in candidates:
                candidates.append(r_low)
    last_error: str | None = None
    attempts = [
        (r_c, opts.extraction_seed + k) for r_c in candidates for k in range(3)
    ]
    for r_c, seed in attempts:
        try:
            extracted = _extract_from_solution(X_graded, orth, s, r_c, seed, m)
            if opts.refine:
                extracted = refine_decomposition(m, extracted)
            ok, resid = verify_decomposition(p, extracted, opts.verify_tol)
        except (ExtractionError, ValueError) as exc:
            last_error = str(exc)
            continue
        if ok:
            report.decomposition = extracted
            report.verified = True
            report.verify_residual = resid
            report.extraction_rank = r_c
            _purify_trace(report, extracted, d, kappa * sol.dual_objective)
            break
        if report.verify_residual is None or resid < report.verify_residual:
            report.decomposition = extracted
            report.verified = False
            report.verify_residual = resid
            report.extraction_rank = r_c
    if report.decomposition is None:
        report.extraction_error = last_error
    return report


def _purify_trace(
    report: RelaxationReport, dec: Decomposition, d: int, dual_bound: float
) -> None:
    """Crossover: the rank-r flat optimizer is known exactly once its
    decomposition is recovered and verified, so its trace can be evaluated
    directly instead of reading the solver objective (which carries the
    residual infeasibility of the final iterate).  Rejected when it moves
    the objective by more than the solver could plausibly be off, or when
    it drops below the dual lower bound."""
    exact = moment_matrix_from_decomposition(dec, d + 1).trace()
    scale = 1.0 + abs(report.optimal_trace)
    # exact >= p* >= dual objective, so a small exact - dual_bound interval
    # proves near-optimality of the evaluated flat point by weak duality.
    enclosure_ok = exact - dual_bound <= 1e-3 * scale
    if abs(exact - report.optimal_trace) <= 1e-3 * scale and enclosure_ok:
        report.solver_trace = report.optimal_trace
        report.optimal_trace = exact
        report.purified = True


def _extract_from_solution(
    X_scaled: np.ndarray,
    orth: OrthBasis,
    scale: float,
    rank: int,
    seed: int,
    exact: MomentSequence | None = None,
) -> Decomposition:
    """Average the solution over support classes into a clean moment
    sequence for the scaled points, extract, then undo the scaling.

    Moments of degree <= 2d are input data, so when `exact` is given they
    are taken from it verbatim; only the extension degrees carry solver
    noise."""
    values = np.zeros(len(orth.alpha_basis))
    for k, alpha in enumerate(orth.alpha_basis):
        if exact is not None and sum(alpha) <= 2 * orth.d:
            values[k] = exact[alpha] / scale ** sum(alpha)
        else:
            values[k] = float(np.mean(orth.class_values(X_scaled, alpha)))
    seq = MomentSequence(orth.n, 2 * orth.d + 2, values)
    mm = build_moment_matrix(seq, orth.d + 1)
    dec = extract_points(mm, rank, seed=seed, verify_tol=None)
    return Decomposition(points=dec.points * scale, weights=dec.weights)
