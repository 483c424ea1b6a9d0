"""Multi-index combinatorics and the canonical graded-lex monomial order.

Every matrix in this package (moment matrices, Vandermonde matrices,
subresultant matrices, SDP data) is indexed by the monomial list produced
here, so the order must be deterministic and degree-major: restricting a
basis to a lower degree yields a prefix of the full list.
"""

from __future__ import annotations

from math import comb, factorial, prod

MultiIndex = tuple[int, ...]


def _compositions(total: int, parts: int):
    """Yield all weak compositions of `total` into `parts` non-negative ints."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class MonomialBasis:
    """All exponent vectors in n variables of total degree <= max_degree.

    The list is graded (degree-major) with lexicographic ascending order
    inside each degree block, so ``MonomialBasis(n, d - 1).exponents`` is a
    prefix of ``MonomialBasis(n, d).exponents``.
    """

    def __init__(self, n: int, max_degree: int):
        if n < 1:
            raise ValueError(f"need at least one variable, got n={n}")
        if max_degree < 0:
            raise ValueError(f"max_degree must be >= 0, got {max_degree}")
        self.n = n
        self.max_degree = max_degree
        exps: list[MultiIndex] = []
        for deg in range(max_degree + 1):
            exps.extend(sorted(_compositions(deg, n)))
        self.exponents: tuple[MultiIndex, ...] = tuple(exps)
        self._index = {beta: i for i, beta in enumerate(self.exponents)}

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.exponents[i]

    def index(self, beta: MultiIndex) -> int:
        """Position of `beta` in the list; inverse of ``__getitem__``."""
        try:
            return self._index[tuple(beta)]
        except KeyError:
            raise KeyError(
                f"{tuple(beta)} not in basis (n={self.n}, max_degree={self.max_degree})"
            ) from None

    def __contains__(self, beta: MultiIndex) -> bool:
        return tuple(beta) in self._index

    def degree_start(self, deg: int) -> int:
        """Index of the first monomial of total degree `deg`."""
        return comb(self.n + deg - 1, self.n)  # == len of basis up to deg-1

    def of_degree(self, deg: int) -> tuple[MultiIndex, ...]:
        """The block of monomials of total degree exactly `deg`."""
        lo = self.degree_start(deg)
        hi = self.degree_start(deg + 1)
        return self.exponents[lo:hi]

    def __repr__(self) -> str:
        return f"MonomialBasis(n={self.n}, max_degree={self.max_degree}, size={len(self)})"


def enumerate_basis(n: int, deg: int) -> MonomialBasis:
    """All multi-indices with |beta| <= deg, graded-lex ordered.

    The result has C(n + deg, n) elements.
    """
    return MonomialBasis(n, deg)


def validate_multi_index(beta: MultiIndex, n: int | None = None) -> MultiIndex:
    """Check that `beta` is a valid exponent vector, optionally of length n."""
    beta = tuple(int(b) for b in beta)
    if any(b < 0 for b in beta):
        raise ValueError(f"exponents must be non-negative, got {beta}")
    if n is not None and len(beta) != n:
        raise ValueError(f"expected {n} exponents, got {len(beta)}")
    return beta


def multinomial(D: int, alpha: MultiIndex) -> int:
    """Multinomial coefficient D! / ((D - |alpha|)! * alpha_1! * ... * alpha_n!).

    Exact integer arithmetic; rejects |alpha| > D.
    """
    alpha = validate_multi_index(alpha)
    total = sum(alpha)
    if total > D:
        raise ValueError(f"|alpha|={total} exceeds D={D}")
    return factorial(D) // (factorial(D - total) * prod(factorial(a) for a in alpha))
