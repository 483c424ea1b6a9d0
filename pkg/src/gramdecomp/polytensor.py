"""Conversions between symmetric tensors, polynomials, weighted point
decompositions, and moment sequences.

A real symmetric tensor of order D in dimension n+1 corresponds to a
polynomial of degree <= D in n variables: contracting the tensor with
(1, x_1, ..., x_n) along every mode collects, for each exponent vector
beta, `multinomial(D, beta)` equal entries.  Moments, polynomials and
decompositions are three views of the same object and each conversion
here is implemented on an independent code path so they can be cross
checked against one another.

Arithmetic stays in exact Python integers whenever the inputs are
integral (point coordinates near 100 push degree-8 moments to ~1e16,
the edge of exact double precision), and converts to float once at the
end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .monomials import MonomialBasis, MultiIndex, multinomial, validate_multi_index

CoeffMap = dict[MultiIndex, float]


def _is_integral(x: np.ndarray) -> bool:
    return bool(np.all(np.equal(np.mod(x, 1), 0)))


def _poly_mul(a: dict, b: dict) -> dict:
    """Convolution product of two coefficient dicts (exponent tuple -> number)."""
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return out


def poly_pow(base: dict, k: int, n: int) -> dict:
    """k-th power of a coefficient dict in n variables."""
    out: dict = {(0,) * n: 1}
    for _ in range(k):
        out = _poly_mul(out, base)
    return out


class Polynomial:
    """Dense polynomial over the graded monomial basis of degree <= degree."""

    def __init__(self, n: int, degree: int, coeffs: CoeffMap | None = None):
        self.basis = MonomialBasis(n, degree)
        self.n = n
        self.degree = degree
        self.coeffs = np.zeros(len(self.basis))
        if coeffs:
            for beta, c in coeffs.items():
                beta = validate_multi_index(beta, n)
                if sum(beta) > degree:
                    raise ValueError(f"term {beta} exceeds degree bound {degree}")
                self.coeffs[self.basis.index(beta)] = float(c)

    def coefficient(self, beta: MultiIndex) -> float:
        beta = tuple(beta)
        if beta in self.basis:
            return float(self.coeffs[self.basis.index(beta)])
        return 0.0

    @property
    def constant_term(self) -> float:
        return float(self.coeffs[0])

    def as_dict(self, drop_zero: bool = True) -> CoeffMap:
        return {
            beta: float(c)
            for beta, c in zip(self.basis.exponents, self.coeffs)
            if c != 0.0 or not drop_zero
        }

    def __call__(self, point) -> float:
        z = np.asarray(point, dtype=float)
        total = 0.0
        for beta, c in zip(self.basis.exponents, self.coeffs):
            if c != 0.0:
                total += c * float(np.prod(z**np.array(beta)))
        return total

    def __repr__(self) -> str:
        return f"Polynomial(n={self.n}, degree={self.degree}, terms={np.count_nonzero(self.coeffs)})"


class SymmetricTensor:
    """Order-D symmetric tensor of dimension n+1, stored up to symmetry.

    Entries are keyed by the sorted index tuple; index values run over
    0..n where slot 0 is the homogenizing coordinate.
    """

    def __init__(self, order: int, dim: int, entries: dict[tuple[int, ...], float]):
        self.order = order
        self.dim = dim
        self.entries: dict[tuple[int, ...], float] = {}
        for idx, v in entries.items():
            if len(idx) != order or any(i < 0 or i >= dim for i in idx):
                raise ValueError(f"bad index {idx} for order {order}, dim {dim}")
            self.entries[tuple(sorted(idx))] = float(v)

    @classmethod
    def from_dense(cls, array, atol: float = 0.0) -> "SymmetricTensor":
        """Build from a dense ndarray, rejecting non-symmetric input."""
        a = np.asarray(array, dtype=float)
        dim = a.shape[0]
        if any(s != dim for s in a.shape):
            raise ValueError(f"tensor must be hypercubic, got shape {a.shape}")
        order = a.ndim
        entries: dict[tuple[int, ...], float] = {}
        scale = float(np.max(np.abs(a))) if a.size else 0.0
        for idx in np.ndindex(a.shape):
            key = tuple(sorted(idx))
            v = float(a[idx])
            if key in entries:
                if abs(entries[key] - v) > atol * max(1.0, scale):
                    raise ValueError(f"tensor not symmetric at index {idx}")
            else:
                entries[key] = v
        return cls(order, dim, entries)

    def entry(self, idx: tuple[int, ...]) -> float:
        return self.entries.get(tuple(sorted(idx)), 0.0)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.dim,) * self.order)
        for idx in np.ndindex(a.shape):
            a[idx] = self.entry(idx)
        return a

    def __repr__(self) -> str:
        return f"SymmetricTensor(order={self.order}, dim={self.dim})"


def _index_tuple(beta: MultiIndex, order: int) -> tuple[int, ...]:
    """Sorted tensor index realizing exponent beta: |beta| slots of each
    variable and order-|beta| slots of the homogenizing coordinate 0."""
    idx = [0] * (order - sum(beta))
    for var, e in enumerate(beta, start=1):
        idx.extend([var] * e)
    return tuple(idx)


@dataclass
class Decomposition:
    """Weighted real points: p = sum_t weights[t] * (1 + points[t] . x)^(2d)."""

    points: np.ndarray  # (r, n)
    weights: np.ndarray  # (r,)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights length mismatch")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be strictly positive")
        for s in range(self.rank):
            for t in range(s + 1, self.rank):
                if np.array_equal(self.points[s], self.points[t]):
                    raise ValueError(f"points {s} and {t} coincide")

    @property
    def rank(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def is_integral(self) -> bool:
        return _is_integral(self.points) and _is_integral(self.weights)


class MomentSequence:
    """Map alpha -> m_alpha for all |alpha| <= max_degree."""

    def __init__(self, n: int, max_degree: int, values):
        self.basis = MonomialBasis(n, max_degree)
        self.n = n
        self.max_degree = max_degree
        self.values = np.asarray(values, dtype=float).ravel()
        if self.values.shape[0] != len(self.basis):
            raise ValueError(
                f"expected {len(self.basis)} moments, got {self.values.shape[0]}"
            )

    def __getitem__(self, alpha: MultiIndex) -> float:
        return float(self.values[self.basis.index(alpha)])

    def __contains__(self, alpha: MultiIndex) -> bool:
        return tuple(alpha) in self.basis

    def scale(self) -> float:
        """Geometric per-degree magnitude of the sequence, used to balance
        moment matrices before rank decisions.  Always >= 1."""
        s = 1.0
        for alpha, v in zip(self.basis.exponents, self.values):
            deg = sum(alpha)
            if deg > 0 and v != 0.0:
                s = max(s, abs(v) ** (1.0 / deg))
        return s

    def __repr__(self) -> str:
        return f"MomentSequence(n={self.n}, max_degree={self.max_degree})"


def tensor_to_poly(tensor: SymmetricTensor) -> Polynomial:
    """Contract the tensor with (1, x_1, ..., x_n) along every mode.

    The coefficient of x^beta collects multinomial(D, beta) equal tensor
    entries, one per ordered index tuple realizing beta.
    """
    D = tensor.order
    n = tensor.dim - 1
    coeffs: CoeffMap = {}
    for beta in MonomialBasis(n, D):
        v = tensor.entry(_index_tuple(beta, D))
        if v != 0.0:
            coeffs[beta] = multinomial(D, beta) * v
    return Polynomial(n, D, coeffs)


def poly_to_tensor(p: Polynomial, order: int | None = None) -> SymmetricTensor:
    """Inverse of `tensor_to_poly`; round-trip is the identity."""
    D = p.degree if order is None else order
    if D < p.degree:
        raise ValueError(f"order {D} below polynomial degree bound {p.degree}")
    entries: dict[tuple[int, ...], float] = {}
    for beta in p.basis:
        c = p.coefficient(beta)
        if c != 0.0:
            entries[_index_tuple(beta, D)] = c / multinomial(D, beta)
    return SymmetricTensor(D, p.n + 1, entries)


def poly_from_decomposition(dec: Decomposition, d: int) -> Polynomial:
    """Expand sum_t lambda_t (1 + z_t . x)^(2d) by explicit polynomial
    multiplication (independent of the moment route, for cross checks)."""
    n = dec.n
    D = 2 * d
    exact = dec.is_integral()
    total: dict = {}
    for t in range(dec.rank):
        lin: dict = {(0,) * n: 1}
        for i in range(n):
            zi = dec.points[t, i]
            if zi != 0.0:
                e = tuple(1 if j == i else 0 for j in range(n))
                lin[e] = int(zi) if exact else float(zi)
        lam = int(dec.weights[t]) if exact else float(dec.weights[t])
        for e, c in poly_pow(lin, D, n).items():
            total[e] = total.get(e, 0) + lam * c
    return Polynomial(n, D, {e: float(c) for e, c in total.items()})


def moments_from_poly(p: Polynomial, d: int) -> MomentSequence:
    """m_alpha = coeff(p, x^alpha) / multinomial(2d, alpha), |alpha| <= 2d.

    Coefficients of p only determine moments up to degree 2d; higher
    moments must come from a decomposition.
    """
    D = 2 * d
    if p.degree > D:
        raise ValueError(f"polynomial degree {p.degree} exceeds 2d={D}")
    basis = MonomialBasis(p.n, D)
    values = [p.coefficient(alpha) / multinomial(D, alpha) for alpha in basis]
    return MomentSequence(p.n, D, values)


def moments_from_decomposition(dec: Decomposition, max_degree: int) -> MomentSequence:
    """m_alpha = sum_t lambda_t * z_t^alpha for all |alpha| <= max_degree."""
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    basis = MonomialBasis(dec.n, max_degree)
    if dec.is_integral():
        pts = [[int(x) for x in row] for row in dec.points]
        lams = [int(w) for w in dec.weights]
        values = [
            float(
                sum(
                    lam * _int_power_product(z, alpha)
                    for z, lam in zip(pts, lams)
                )
            )
            for alpha in basis
        ]
    else:
        values = [
            float(np.sum(dec.weights * np.prod(dec.points ** np.array(alpha), axis=1)))
            for alpha in basis
        ]
    return MomentSequence(dec.n, max_degree, values)


def _int_power_product(z: list[int], alpha: MultiIndex) -> int:
    out = 1
    for zi, a in zip(z, alpha):
        out *= zi**a
    return out


def verify_decomposition(
    p: Polynomial, dec: Decomposition, tol: float = 1e-12
) -> tuple[bool, float]:
    """Compare p against the expansion of dec coefficientwise.

    Returns (ok, max residual); ok iff the residual is at most
    tol * (1 + max |coeff(p)|).
    """
    if dec.n != p.n:
        raise ValueError(f"dimension mismatch: polynomial n={p.n}, points n={dec.n}")
    if p.degree % 2 != 0:
        raise ValueError("degree bound must be even")
    q = poly_from_decomposition(dec, p.degree // 2)
    resid = float(np.max(np.abs(p.coeffs - q.coeffs)))
    scale = 1.0 + float(np.max(np.abs(p.coeffs)))
    return resid <= tol * scale, resid
