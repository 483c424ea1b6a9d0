"""Dense primal-dual interior-point solver for small standard-form
semidefinite programs.

    (P)  min <C, X>   s.t.  <A_i, X> = b_i (i = 1..m),  X >= 0
    (D)  max b^T y    s.t.  sum_i y_i A_i + S = C,      S >= 0

The implementation is a path-following method with Nesterov-Todd scaling
and a Mehrotra predictor-corrector, solving the dense Schur-complement
normal equations at every step.  Problem sizes here are tiny (matrix
order <= ~50, constraints <= ~200), so everything is dense and exact
factorizations are cheap.

Per iteration, with W the NT scaling point (W S W = X) factored as
W = G G^T where G^-1 X G^-T = G^T S G = diag(sigma):

    A_i . dX                   = b_i - <A_i, X>
    sum_j dy_j A_j + dS        = C - A^T y - S  =: Rd
    dX + W dS W                = G Rtilde G^T   =: Rc

with the scaled residual Rtilde solving the diagonal Lyapunov system
(sigma_i + sigma_j)/2 * Rtilde_ij = rhs_ij, rhs = sigma*mu*I - Sigma^2
minus the Mehrotra second-order term.  Eliminating dX and dS yields the
m x m positive definite system

    M dy = rp + A(W Rd W) - A(Rc),    M_ij = <A_i, W A_j W>.

Infeasibility is not certified: following the documented heuristic, the
primal is declared infeasible when the dual objective diverges past a
configurable bound while the primal residual stalls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class SDPError(RuntimeError):
    pass


@dataclass
class SDPProblem:
    """Standard-form data: symmetric cost C, symmetric constraint matrices
    A_i with right-hand sides b_i."""

    C: np.ndarray
    A: list[np.ndarray]
    b: np.ndarray

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        self.A = [np.asarray(a, dtype=float) for a in self.A]
        self.b = np.asarray(self.b, dtype=float).ravel()
        size = self.C.shape[0]
        if self.C.shape != (size, size):
            raise ValueError("cost matrix must be square")
        if len(self.A) != self.b.shape[0]:
            raise ValueError("need one right-hand side per constraint matrix")
        if len(self.A) < 1:
            raise ValueError("need at least one constraint")
        for i, a in enumerate(self.A):
            if a.shape != (size, size):
                raise ValueError(f"constraint {i} has shape {a.shape}, expected {self.C.shape}")
        atol = 1e-12
        for name, mat in [("C", self.C)] + [(f"A[{i}]", a) for i, a in enumerate(self.A)]:
            scale = max(1.0, float(np.max(np.abs(mat))))
            if np.max(np.abs(mat - mat.T)) > atol * scale:
                raise ValueError(f"{name} is not symmetric")

    @property
    def size(self) -> int:
        return self.C.shape[0]

    @property
    def num_constraints(self) -> int:
        return len(self.A)


@dataclass
class SDPOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 200
    initial_scale: float | None = None  # default 1 + max|b_i|
    step_fraction: float = 0.98
    divergence_bound: float = 1e9  # dual-objective blowup => infeasibility heuristic
    verbose: bool = False


@dataclass
class SDPSolution:
    status: str  # optimal | primal_infeasible | numerical_failure
    X: np.ndarray
    y: np.ndarray
    S: np.ndarray
    gap: float
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _svec(a: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    v = a[rows, cols].copy()
    v[rows != cols] *= np.sqrt(2.0)
    return v


def _independent_constraints(
    problem: SDPProblem, feas_tol: float
) -> tuple[list[int], list[int], bool]:
    """Split constraints into an independent subset and dependent rest.

    Returns (kept, dropped, consistent); consistent is False when a
    dependent row contradicts the span of the kept rows.
    """
    size = problem.size
    iu = np.triu_indices(size)
    vecs = np.array([_svec(a, iu[0], iu[1]) for a in problem.A])
    m = vecs.shape[0]
    norms = np.linalg.norm(vecs, axis=1)
    zero_rows = [i for i in range(m) if norms[i] == 0.0]
    for i in zero_rows:
        if abs(problem.b[i]) > feas_tol:
            return [j for j in range(m) if j not in zero_rows], zero_rows, False
    unit = vecs / np.where(norms > 0, norms, 1.0)[:, None]
    _, _, piv = scipy.linalg.qr(unit.T, pivoting=True, mode="economic")
    sv = np.linalg.svd(unit, compute_uv=False)
    rank = int(np.count_nonzero(sv > max(unit.shape) * np.finfo(float).eps * sv[0])) if sv[0] > 0 else 0
    kept = sorted(i for i in piv[:rank] if norms[i] > 0)
    dropped = sorted(set(range(m)) - set(kept))
    consistent = True
    if dropped:
        # A dependent row must carry the matching right-hand side; scale-free
        # comparison in the normalized row space.
        coeff, *_ = np.linalg.lstsq(unit[kept].T, unit[dropped].T, rcond=None)
        b_unit = problem.b / np.where(norms > 0, norms, 1.0)
        predicted = coeff.T @ b_unit[kept]
        for j, pred in zip(dropped, predicted):
            if abs(b_unit[j] - pred) > feas_tol * (1.0 + abs(b_unit[j])):
                consistent = False
    return kept, dropped, consistent


def _max_step(chol_lower: np.ndarray, delta: np.ndarray) -> float:
    """sup {alpha : P + alpha * delta >= 0} given P = L L^T."""
    half = scipy.linalg.solve_triangular(chol_lower, delta, lower=True)
    sym = scipy.linalg.solve_triangular(chol_lower, half.T, lower=True)
    lam_min = float(np.linalg.eigvalsh(0.5 * (sym + sym.T))[0])
    if lam_min >= 0.0:
        return np.inf
    return -1.0 / lam_min


def solve_sdp(problem: SDPProblem, options: SDPOptions | None = None) -> SDPSolution:
    """Solve the SDP; deterministic given (problem, options)."""
    opts = options or SDPOptions()
    size = problem.size

    kept, dropped, consistent = _independent_constraints(problem, opts.feas_tol)
    if not consistent:
        return _failure(problem, "primal_infeasible", "inconsistent dependent constraint rows")
    amats = [problem.A[i] for i in kept]
    b = problem.b[kept]
    # Unit Frobenius row scaling keeps the Schur system balanced; undone on y.
    row_scales = np.array([max(np.linalg.norm(a), 1e-300) for a in amats])
    amats = [a / s for a, s in zip(amats, row_scales)]
    b = b / row_scales
    m = len(amats)
    C = problem.C

    eta = opts.initial_scale if opts.initial_scale is not None else 1.0 + float(np.max(np.abs(b)))
    X = eta * np.eye(size)
    S = eta * np.eye(size)
    y = np.zeros(m)

    astack = np.stack(amats)

    def a_op(mat: np.ndarray) -> np.ndarray:
        return np.tensordot(astack, mat, axes=([1, 2], [0, 1]))

    def at_op(vec: np.ndarray) -> np.ndarray:
        return np.tensordot(vec, astack, axes=(0, 0))

    b_norm = 1.0 + float(np.linalg.norm(b))
    c_norm = 1.0 + float(np.linalg.norm(C))
    best: SDPSolution | None = None
    best_score = np.inf
    since_improve = 0
    status, message = "numerical_failure", "iteration limit reached"
    pinf_history: list[float] = []

    iteration = 0
    rel_b = 1.0 + np.abs(b)
    for iteration in range(1, opts.max_iter + 1):
        rp = b - a_op(X)
        Rd = C - at_op(y) - S
        gap = float(np.tensordot(X, S))
        mu = gap / size
        pobj = float(np.tensordot(C, X))
        dobj = float(b @ y)
        # Per-constraint primal feasibility: an aggregate norm can hide a
        # violation that a large dual multiplier turns into objective error.
        pinf = float(np.max(np.abs(rp) / rel_b))
        dinf = float(np.linalg.norm(Rd)) / c_norm
        rel_gap = gap / (1.0 + abs(pobj))
        # Residual infeasibility perturbs the objective by about y . rp.
        obj_perturb = abs(float(y @ rp)) / (1.0 + abs(pobj))
        pinf_history.append(pinf)

        if opts.verbose:
            print(
                f"iter {iteration:3d}  pobj {pobj: .6e}  dobj {dobj: .6e}  "
                f"gap {rel_gap:.2e}  pinf {pinf:.2e}  dinf {dinf:.2e}"
            )

        current = SDPSolution(
            status="numerical_failure",
            X=X.copy(),
            y=_expand_y(y / row_scales, kept, problem.num_constraints),
            S=S.copy(),
            gap=gap,
            primal_objective=pobj,
            dual_objective=dobj,
            primal_residual=pinf,
            dual_residual=dinf,
            iterations=iteration - 1,
        )
        score = pinf + dinf + rel_gap + obj_perturb
        if best is None or score < best_score * (1.0 - 1e-3):
            best, best_score, since_improve = current, score, 0
        else:
            # Plateaus are normal early on; only give up once the iterate
            # is already deep in the endgame and nothing moves.
            since_improve += 1
        if since_improve >= 25 and best_score < 1e-4:
            status, message = "numerical_failure", "progress stalled"
            break
        if since_improve >= 60:
            status, message = "numerical_failure", "progress stalled"
            break

        if (
            rel_gap <= opts.gap_tol
            and pinf <= opts.feas_tol
            and dinf <= opts.feas_tol
            and obj_perturb <= 100.0 * opts.gap_tol
        ):
            current.status = "optimal"
            current.message = "converged"
            return current

        # Infeasibility heuristic: dual objective diverging while the primal
        # residual has stopped improving.
        stalled = (
            len(pinf_history) > 10
            and pinf_history[-1] > 0.5 * pinf_history[-10]
            and pinf_history[-1] > opts.feas_tol * 10
        )
        if dobj > opts.divergence_bound * b_norm and stalled:
            current.status = "primal_infeasible"
            current.message = (
                "dual objective diverged while primal residual stalled "
                "(heuristic, not a certified infeasibility proof)"
            )
            return current

        try:
            Lx = np.linalg.cholesky(X)
            Ls = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            status, message = "numerical_failure", "iterate left the PSD cone"
            break

        # NT scaling: W = G G^T with G^-1 X G^-T = G^T S G = diag(sig).
        u_m, sig, vt_m = np.linalg.svd(Ls.T @ Lx)
        if sig[-1] <= 0 or not np.all(np.isfinite(sig)):
            status, message = "numerical_failure", "singular NT scaling"
            break
        G = Lx @ vt_m.T / np.sqrt(sig)
        Ginv = (vt_m.T * np.sqrt(sig)).T @ scipy.linalg.solve_triangular(
            Lx, np.eye(size), lower=True
        )
        W = G @ G.T

        WAW = np.array([W @ a @ W for a in amats])
        schur = np.tensordot(astack, WAW, axes=([1, 2], [1, 2]))
        schur = 0.5 * (schur + schur.T)
        try:
            schur_fact = scipy.linalg.cho_factor(schur + np.eye(m) * 1e-14 * np.trace(schur) / m)
        except scipy.linalg.LinAlgError:
            status, message = "numerical_failure", "singular Schur complement"
            break

        WRdW = W @ Rd @ W

        schur_ld = schur.astype(np.longdouble)

        def schur_solve(rhs: np.ndarray) -> np.ndarray:
            # Iterative refinement with extended-precision residuals; the
            # Schur complement turns ill-conditioned near the optimum.
            dy = scipy.linalg.cho_solve(schur_fact, rhs)
            rhs_ld = rhs.astype(np.longdouble)
            err = np.inf
            for _ in range(4):
                resid = np.asarray(rhs_ld - schur_ld @ dy.astype(np.longdouble), dtype=float)
                new_err = float(np.linalg.norm(resid))
                if not new_err < err:
                    break
                err = new_err
                dy = dy + scipy.linalg.cho_solve(schur_fact, resid)
            return dy

        def newton(Rc: np.ndarray):
            rhs = rp + a_op(WRdW - Rc)
            dy = schur_solve(rhs)
            dS = Rd - at_op(dy)
            dX = Rc - WRdW + np.tensordot(dy, WAW, axes=(0, 0))
            return 0.5 * (dX + dX.T), dy, 0.5 * (dS + dS.T)

        sig_sum = 0.5 * (sig[:, None] + sig[None, :])

        def combine(rhs_tilde: np.ndarray) -> np.ndarray:
            Rt = rhs_tilde / sig_sum
            Rc = G @ Rt @ G.T
            return 0.5 * (Rc + Rc.T)

        tau = opts.step_fraction

        # Predictor (affine scaling direction).
        sigma2 = np.diag(sig**2)
        dX_a, dy_a, dS_a = newton(-X)
        ap_a = min(1.0, tau * _max_step(Lx, dX_a))
        ad_a = min(1.0, tau * _max_step(Ls, dS_a))
        gap_aff = float(np.tensordot(X + ap_a * dX_a, S + ad_a * dS_a))
        mu_aff = max(gap_aff, 0.0) / size
        sigma = min(0.99, max((mu_aff / mu) ** 3, 1e-10)) if mu > 0 else 0.1

        # Corrector with Mehrotra second-order term in scaled space.
        dXt = Ginv @ dX_a @ Ginv.T
        dSt = G.T @ dS_a @ G
        cross = dXt @ dSt
        rhs_t = sigma * mu * np.eye(size) - sigma2 - 0.5 * (cross + cross.T)
        dX, dy, dS = newton(combine(rhs_t))
        ap = min(1.0, tau * _max_step(Lx, dX))
        ad = min(1.0, tau * _max_step(Ls, dS))
        if ap < 1e-8 and ad < 1e-8:
            # Second-order term can overshoot far from the path; retry
            # with the plain centering step.
            rhs_t = sigma * mu * np.eye(size) - sigma2
            dX, dy, dS = newton(combine(rhs_t))
            ap = min(1.0, tau * _max_step(Lx, dX))
            ad = min(1.0, tau * _max_step(Ls, dS))
            if ap < 1e-10 and ad < 1e-10:
                status, message = "numerical_failure", "step length collapsed"
                break

        # Backtrack if roundoff pushed the step across the cone boundary.
        accepted = False
        for _ in range(12):
            X_new = X + ap * dX
            S_new = S + ad * dS
            try:
                np.linalg.cholesky(X_new)
                np.linalg.cholesky(S_new)
                accepted = True
                break
            except np.linalg.LinAlgError:
                ap *= 0.9
                ad *= 0.9
        if not accepted:
            status, message = "numerical_failure", "could not stay inside the PSD cone"
            break
        X = X_new
        y = y + ad * dy
        S = S_new
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(S)) and np.all(np.isfinite(y))):
            status, message = "numerical_failure", "non-finite iterate"
            break

    assert best is not None
    best.status = status
    best.message = message
    best.iterations = iteration
    return best


def _expand_y(y: np.ndarray, kept: list[int], m_total: int) -> np.ndarray:
    full = np.zeros(m_total)
    full[kept] = y
    return full


def _failure(problem: SDPProblem, status: str, message: str) -> SDPSolution:
    size = problem.size
    return SDPSolution(
        status=status,
        X=np.zeros((size, size)),
        y=np.zeros(problem.num_constraints),
        S=np.zeros((size, size)),
        gap=np.inf,
        primal_objective=np.nan,
        dual_objective=np.nan,
        primal_residual=np.inf,
        dual_residual=np.inf,
        iterations=0,
        message=message,
    )


@dataclass
class OptimalityReport:
    primal_residual: float
    dual_residual: float
    complementarity: float
    min_eig_X: float
    min_eig_S: float
    optimal_pair: bool
    per_constraint: np.ndarray = field(repr=False, default=None)


def check_optimality_pair(
    X: np.ndarray,
    y: np.ndarray,
    S: np.ndarray,
    problem: SDPProblem,
    tol: float = 1e-8,
) -> OptimalityReport:
    """Feasibility residuals and complementarity <X, S> for a candidate
    primal-dual pair; verdict optimal_pair iff both are feasible within
    tol and <X, S> <= tol * (1 + trace X)."""
    X = np.asarray(X, dtype=float)
    S = np.asarray(S, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape != problem.C.shape or S.shape != problem.C.shape:
        raise ValueError("matrix shape mismatch with problem data")
    if y.shape[0] != problem.num_constraints:
        raise ValueError("dual vector length mismatch")
    per = np.array(
        [abs(float(np.tensordot(a, X)) - bi) / (1.0 + abs(bi)) for a, bi in zip(problem.A, problem.b)]
    )
    dual_res = float(
        np.linalg.norm(problem.C - sum(yi * a for yi, a in zip(y, problem.A)) - S)
    ) / (1.0 + float(np.linalg.norm(problem.C)))
    comp = float(np.tensordot(X, S))
    eig_x = float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])
    eig_s = float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])
    scale_x = 1.0 + float(np.abs(X).max(initial=0.0))
    scale_s = 1.0 + float(np.abs(S).max(initial=0.0))
    ok = (
        float(per.max(initial=0.0)) <= tol
        and dual_res <= tol
        and comp <= tol * (1.0 + abs(float(np.trace(X))))
        and eig_x >= -tol * scale_x
        and eig_s >= -tol * scale_s
    )
    return OptimalityReport(
        primal_residual=float(per.max(initial=0.0)),
        dual_residual=dual_res,
        complementarity=comp,
        min_eig_X=eig_x,
        min_eig_S=eig_s,
        optimal_pair=ok,
        per_constraint=per,
    )
