"""Sparse multivariate polynomial arithmetic.

Polynomials are stored as a dict mapping exponent tuples to float
coefficients.  All SOS machinery, the recast power-system dynamics and the
Lyapunov certificates are built on this representation.  Variables are
rendered as z1..zN.
"""

from __future__ import annotations

from itertools import combinations_with_replacement
from math import comb

# Coefficients whose magnitude falls below this after arithmetic are dropped,
# so floating-point products do not accumulate phantom terms.
COEFF_TOL = 1e-12


class Monomial:
    """An exponent vector; total degree is the sum of the exponents."""

    __slots__ = ("exponents",)

    def __init__(self, exponents):
        self.exponents = tuple(int(e) for e in exponents)
        if any(e < 0 for e in self.exponents):
            raise ValueError("negative exponent")

    @property
    def nvars(self):
        return len(self.exponents)

    @property
    def degree(self):
        return sum(self.exponents)

    def __mul__(self, other):
        if len(self.exponents) != len(other.exponents):
            raise ValueError("variable-count mismatch")
        return Monomial(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __eq__(self, other):
        return isinstance(other, Monomial) and self.exponents == other.exponents

    def __hash__(self):
        return hash(self.exponents)

    def __repr__(self):
        return f"Monomial{self.exponents}"

    def grlex_key(self):
        # Graded order first, then z1 > z2 > ... within a degree.
        return (self.degree, tuple(-e for e in self.exponents))

    def as_polynomial(self):
        return Polynomial({self.exponents: 1.0}, len(self.exponents))


class Polynomial:
    """Sparse polynomial over the reals in a fixed number of variables.

    Immutable by convention: operations return new instances and never
    mutate their arguments, so values are safe to share.
    """

    __slots__ = ("terms", "nvars")

    def __init__(self, terms, nvars):
        self.nvars = int(nvars)
        clean = {}
        for exps, c in terms.items():
            if len(exps) != self.nvars:
                raise ValueError("exponent length != nvars")
            c = float(c)
            if abs(c) > COEFF_TOL:
                clean[tuple(exps)] = c
        self.terms = clean

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero(nvars):
        return Polynomial({}, nvars)

    @staticmethod
    def constant(c, nvars):
        return Polynomial({(0,) * nvars: c}, nvars)

    @staticmethod
    def variable(i, nvars):
        if not 0 <= i < nvars:
            raise ValueError("variable index out of range")
        e = [0] * nvars
        e[i] = 1
        return Polynomial({tuple(e): 1.0}, nvars)

    @staticmethod
    def from_terms(pairs, nvars):
        """Build from (exponent-tuple, coeff) pairs, summing duplicates."""
        acc = {}
        for exps, c in pairs:
            exps = tuple(exps)
            acc[exps] = acc.get(exps, 0.0) + c
        return Polynomial(acc, nvars)

    # -- queries ------------------------------------------------------

    @property
    def degree(self):
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def min_degree(self):
        if not self.terms:
            return 0
        return max(0, min(sum(e) for e in self.terms))

    def coeff(self, exps):
        return self.terms.get(tuple(exps), 0.0)

    def is_zero(self):
        return not self.terms

    def max_abs_coeff(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    # -- arithmetic ---------------------------------------------------

    def _check(self, other):
        if self.nvars != other.nvars:
            raise ValueError("variable-count mismatch")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        acc = dict(self.terms)
        for e, c in other.terms.items():
            acc[e] = acc.get(e, 0.0) + c
        return Polynomial(acc, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        acc = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                acc[e] = acc.get(e, 0.0) + c1 * c2
        return Polynomial(acc, self.nvars)

    __rmul__ = __mul__

    def scale(self, k):
        return Polynomial({e: c * k for e, c in self.terms.items()}, self.nvars)

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("exponent must be a non-negative int")
        out = Polynomial.constant(1.0, self.nvars)
        for _ in range(n):
            out = out * self
        return out

    # -- calculus and evaluation --------------------------------------

    def evaluate(self, x):
        if len(x) != self.nvars:
            raise ValueError("point dimension != nvars")
        total = 0.0
        for exps, c in self.terms.items():
            v = c
            for xi, e in zip(x, exps):
                if e:
                    v *= xi ** e
            total += v
        return total

    def differentiate(self, var):
        if not 0 <= var < self.nvars:
            raise ValueError("variable index out of range")
        acc = {}
        for exps, c in self.terms.items():
            e = exps[var]
            if e == 0:
                continue
            new = list(exps)
            new[var] = e - 1
            acc[tuple(new)] = c * e
        return Polynomial(acc, self.nvars)

    def gradient(self):
        return [self.differentiate(i) for i in range(self.nvars)]

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        return f"Polynomial({render(self)!r})"


def lie_derivative(V, f):
    """Directional derivative of V along the vector field f (one Polynomial
    per state)."""
    if len(f) != V.nvars:
        raise ValueError("vector field dimension != nvars")
    out = Polynomial.zero(V.nvars)
    for i, fi in enumerate(f):
        out = out + V.differentiate(i) * fi
    return out


def monomial_basis(nvars, min_deg, max_deg):
    """All monomials with total degree in [min_deg, max_deg], graded-lex
    ordered (deterministic, duplicate-free)."""
    if not 0 <= min_deg <= max_deg:
        raise ValueError("need 0 <= min_deg <= max_deg")
    out = []
    for d in range(min_deg, max_deg + 1):
        batch = []
        for combo in combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for idx in combo:
                e[idx] += 1
            batch.append(Monomial(e))
        batch.sort(key=Monomial.grlex_key)
        out.extend(batch)
    return out


def basis_size(nvars, min_deg, max_deg):
    """Count of monomial_basis(nvars, min_deg, max_deg) without enumerating."""
    return sum(comb(nvars + d - 1, d) for d in range(min_deg, max_deg + 1))


def render(p, var_prefix="z"):
    """Text form 'c*z1^2*z3 + ...' with terms in graded-lex order."""
    if p.is_zero():
        return "0"
    parts = []
    for exps in sorted(p.terms, key=lambda e: Monomial(e).grlex_key()):
        c = p.terms[exps]
        factors = [f"{c:.12g}"]
        for i, e in enumerate(exps):
            if e == 1:
                factors.append(f"{var_prefix}{i + 1}")
            elif e > 1:
                factors.append(f"{var_prefix}{i + 1}^{e}")
        parts.append("*".join(factors))
    return " + ".join(parts)


def poly_from_coeff_list(entries, nvars):
    """Inverse of the JSON term-list serialization: [[exps, coeff], ...]."""
    return Polynomial.from_terms(((tuple(e), c) for e, c in entries), nvars)


def poly_to_coeff_list(p):
    return [
        [list(exps), p.terms[exps]]
        for exps in sorted(p.terms, key=lambda e: Monomial(e).grlex_key())
    ]
