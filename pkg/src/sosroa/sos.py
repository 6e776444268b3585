"""SOS feasibility programs and their reduction to semidefinite form.

A program holds polynomial templates with unknown coefficients: free
templates (arbitrary sign, e.g. Lyapunov candidates and equality-constraint
multipliers) and SOS templates (Gram-parameterized, e.g. S-procedure
multipliers).  Constraint expressions must be affine in the unknowns;
bilinear scalars (level values, expansion radii) are fixed by the caller and
searched by bisection outside this module.

compile() produces one PSD block per SOS constraint and per SOS template,
plus one scalar equality per matched monomial.  Compilation is deterministic:
identical programs yield identical problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from . import sdp
from .poly import Monomial, Polynomial, monomial_basis

GRAM_RECOMPOSE_TOL = 1e-6
EXTRACT_PRUNE_REL = 1e-9

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"


class SosProgramError(Exception):
    pass


class FreeTemplate:
    """Polynomial with one unknown coefficient per basis monomial."""

    def __init__(self, prog, basis, first_id, tag=""):
        if len({m.exponents for m in basis}) != len(basis):
            raise SosProgramError("duplicate basis monomials")
        self.prog = prog
        self.basis = list(basis)
        self.coeff_ids = list(range(first_id, first_id + len(basis)))
        self.tag = tag

    def expr(self):
        e = PolyExpr(self.prog.nvars)
        e.free_terms[id(self)] = (self, [m.as_polynomial() for m in self.basis])
        return e

    def lie(self, f):
        """Expression for the Lie derivative of this template along f."""
        from .poly import lie_derivative
        e = PolyExpr(self.prog.nvars)
        e.free_terms[id(self)] = (
            self, [lie_derivative(m.as_polynomial(), f) for m in self.basis])
        return e

    def __mul__(self, other):
        return self.expr() * other

    __rmul__ = __mul__

    def __add__(self, other):
        return self.expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr() - other

    def __rsub__(self, other):
        return (-self.expr()) + other

    def __neg__(self):
        return -self.expr()


class SosTemplate:
    """Unknown SOS polynomial basis^T Q basis with Q >= 0."""

    def __init__(self, prog, gram_basis, tag=""):
        if len({m.exponents for m in gram_basis}) != len(gram_basis):
            raise SosProgramError("duplicate gram basis monomials")
        self.prog = prog
        self.gram_basis = list(gram_basis)
        self.tag = tag

    def expr(self):
        e = PolyExpr(self.prog.nvars)
        e.sos_terms[id(self)] = (self, Polynomial.constant(1.0, self.prog.nvars))
        return e

    def __mul__(self, other):
        return self.expr() * other

    __rmul__ = __mul__

    def __add__(self, other):
        return self.expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr() - other

    def __rsub__(self, other):
        return (-self.expr()) + other

    def __neg__(self):
        return -self.expr()


class PolyExpr:
    """Polynomial expression affine in template unknowns."""

    def __init__(self, nvars, const=None):
        self.nvars = nvars
        self.const = const if const is not None else Polynomial.zero(nvars)
        # id(template) -> (template, weights per basis element)
        self.free_terms = {}
        # id(template) -> (template, multiplier polynomial)
        self.sos_terms = {}

    def has_unknowns(self):
        return bool(self.free_terms) or bool(self.sos_terms)

    @staticmethod
    def _coerce(other, nvars):
        if isinstance(other, PolyExpr):
            return other
        if isinstance(other, (FreeTemplate, SosTemplate)):
            return other.expr()
        if isinstance(other, Polynomial):
            return PolyExpr(nvars, other)
        return PolyExpr(nvars, Polynomial.constant(float(other), nvars))

    def copy(self):
        e = PolyExpr(self.nvars, self.const)
        e.free_terms = {k: (t, list(w)) for k, (t, w) in self.free_terms.items()}
        e.sos_terms = dict(self.sos_terms)
        return e

    def __add__(self, other):
        other = self._coerce(other, self.nvars)
        e = self.copy()
        e.const = e.const + other.const
        for k, (t, w) in other.free_terms.items():
            if k in e.free_terms:
                _, w0 = e.free_terms[k]
                e.free_terms[k] = (t, [a + b for a, b in zip(w0, w)])
            else:
                e.free_terms[k] = (t, list(w))
        for k, (t, mult) in other.sos_terms.items():
            if k in e.sos_terms:
                _, m0 = e.sos_terms[k]
                e.sos_terms[k] = (t, m0 + mult)
            else:
                e.sos_terms[k] = (t, mult)
        return e

    __radd__ = __add__

    def __neg__(self):
        e = PolyExpr(self.nvars, -self.const)
        e.free_terms = {k: (t, [-p for p in w]) for k, (t, w) in self.free_terms.items()}
        e.sos_terms = {k: (t, -m) for k, (t, m) in self.sos_terms.items()}
        return e

    def __sub__(self, other):
        return self + (-self._coerce(other, self.nvars))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (FreeTemplate, SosTemplate)):
            other = other.expr()
        if isinstance(other, PolyExpr):
            if other.has_unknowns() and self.has_unknowns():
                raise SosProgramError(
                    "product of two unknown-bearing expressions is not affine; "
                    "fix one side (bisection) before building the program")
            if other.has_unknowns():
                return other * self.const
            other = other.const
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(float(other), self.nvars)
        e = PolyExpr(self.nvars, self.const * other)
        e.free_terms = {k: (t, [p * other for p in w])
                        for k, (t, w) in self.free_terms.items()}
        e.sos_terms = {k: (t, m * other) for k, (t, m) in self.sos_terms.items()}
        return e

    __rmul__ = __mul__

    def support(self):
        """All monomial exponent tuples whose coefficient can be nonzero."""
        mons = set(self.const.terms)
        for _, (t, weights) in self.free_terms.items():
            for w in weights:
                mons.update(w.terms)
        for _, (t, mult) in self.sos_terms.items():
            for i, mi in enumerate(t.gram_basis):
                for mj in t.gram_basis[i:]:
                    pair = tuple(a + b for a, b in zip(mi.exponents, mj.exponents))
                    for em in mult.terms:
                        mons.add(tuple(a + b for a, b in zip(em, pair)))
        return mons

    def value(self, sol):
        """Numeric Polynomial at a solution (templates replaced by values)."""
        out = self.const
        for _, (t, weights) in self.free_terms.items():
            coeffs = sol.template_coeffs(t)
            for c, w in zip(coeffs, weights):
                out = out + w * c
        for _, (t, mult) in self.sos_terms.items():
            out = out + mult * sol.sos_template_poly(t)
        return out


class SosProgram:
    def __init__(self, nvars):
        self.nvars = nvars
        self.free_templates = []
        self.sos_templates = []
        self.constraints = []
        self.constraint_min_gram_deg = []
        self._next_free_id = 0

    def free_poly(self, basis, tag=""):
        t = FreeTemplate(self, basis, self._next_free_id, tag)
        self._next_free_id += len(basis)
        self.free_templates.append(t)
        return t

    def free_poly_deg(self, max_deg, min_deg=0, tag=""):
        return self.free_poly(monomial_basis(self.nvars, min_deg, max_deg), tag)

    def sos_poly(self, gram_basis, tag=""):
        t = SosTemplate(self, gram_basis, tag)
        self.sos_templates.append(t)
        return t

    def sos_poly_deg(self, half_deg, tag="", min_deg=0):
        """min_deg > 0 gives an SOS template vanishing to that order at the
        origin (same strict-feasibility rationale as in
        add_sos_constraint)."""
        return self.sos_poly(monomial_basis(self.nvars, min_deg, half_deg), tag)

    def add_sos_constraint(self, expr, min_gram_deg=0):
        """min_gram_deg > 0 drops low-degree monomials from the constraint's
        Gram basis.  Use it when the expression provably vanishes (to the
        stated order) at the origin: the dropped rows are forced to zero at
        every feasible point anyway, and keeping them pins Gram diagonal
        entries to the PSD boundary, which destroys strict feasibility and
        stalls the interior-point solver."""
        expr = PolyExpr._coerce(expr, self.nvars)
        if expr.nvars != self.nvars:
            raise SosProgramError("variable-count mismatch")
        self.constraints.append(expr)
        self.constraint_min_gram_deg.append(int(min_gram_deg))
        return len(self.constraints) - 1


def _gram_basis_for(nvars, support):
    """Graded basis up to half-degree, pruned by the even box filter on the
    constraint's support: drop monomials whose double exceeds the per-variable
    or total degree range seen in the support."""
    if not support:
        return [Monomial((0,) * nvars)]
    max_total = max(sum(e) for e in support)
    min_total = min(sum(e) for e in support)
    var_max = [max(e[i] for e in support) for i in range(nvars)]
    half = ceil(max_total / 2)
    out = []
    for m in monomial_basis(nvars, 0, half):
        d = m.degree
        if 2 * d > max_total or 2 * d < min_total:
            continue
        if any(2 * ei > var_max[i] for i, ei in enumerate(m.exponents)):
            continue
        out.append(m)
    return out


@dataclass
class Compilation:
    problem: sdp.SdpProblem
    sos_block_of: dict = field(default_factory=dict)     # id(template) -> block
    constraint_block: list = field(default_factory=list)  # constraint -> block
    constraint_basis: list = field(default_factory=list)  # constraint -> gram basis


def compile(prog: SosProgram):
    """Reduce to block-diagonal SDP standard form (feasibility)."""
    if not prog.constraints:
        raise SosProgramError("empty program")
    comp = Compilation(problem=sdp.SdpProblem(block_dims=[], nfree=prog._next_free_id))
    p = comp.problem

    for t in prog.sos_templates:
        comp.sos_block_of[id(t)] = len(p.block_dims)
        p.block_dims.append(len(t.gram_basis))

    bases = []
    for cidx, expr in enumerate(prog.constraints):
        basis = _gram_basis_for(prog.nvars, expr.support())
        min_deg = prog.constraint_min_gram_deg[cidx]
        if min_deg:
            basis = [m for m in basis if m.degree >= min_deg]
        if not basis:
            basis = [Monomial((0,) * prog.nvars)]
        comp.constraint_block.append(len(p.block_dims))
        comp.constraint_basis.append(basis)
        p.block_dims.append(len(basis))
        bases.append(basis)

    for cidx, expr in enumerate(prog.constraints):
        basis = bases[cidx]
        cblock = comp.constraint_block[cidx]
        support = set(expr.support())
        pair_index = {}
        for i, mi in enumerate(basis):
            for j in range(i, len(basis)):
                prod = tuple(a + b for a, b in
                             zip(mi.exponents, basis[j].exponents))
                support.add(prod)
                pair_index.setdefault(prod, []).append((i, j))

        for alpha in sorted(support, key=lambda e: Monomial(e).grlex_key()):
            eq = p.new_equality(rhs=-expr.const.coeff(alpha))
            for _, (t, weights) in expr.free_terms.items():
                for cid, w in zip(t.coeff_ids, weights):
                    cv = w.coeff(alpha)
                    if cv:
                        eq.add_free(cid, cv)
            for _, (t, mult) in expr.sos_terms.items():
                b = comp.sos_block_of[id(t)]
                gb = t.gram_basis
                for i, mi in enumerate(gb):
                    for j in range(i, len(gb)):
                        rem = tuple(a - bi - bj for a, bi, bj in zip(
                            alpha, mi.exponents, gb[j].exponents))
                        if any(r < 0 for r in rem):
                            continue
                        cv = mult.coeff(rem)
                        if cv:
                            eq.add_block(b, i, j, cv)
            for (i, j) in pair_index.get(alpha, ()):
                eq.add_block(cblock, i, j, -1.0)

    # Feasibility with a zero objective is degenerate for interior-point
    # solvers (the trivial point sits on the cone boundary and there is no
    # strictly interior iterate on the solver's side).  Minimizing the total
    # Gram trace removes the degeneracy and picks the smallest certificate.
    for b, d in enumerate(p.block_dims):
        for i in range(d):
            p.objective_blocks[(b, i, i)] = 1.0
    return comp


class SosSolution:
    """Solved program: template coefficient values and Gram certificates."""

    def __init__(self, prog, comp, sdp_sol):
        self.prog = prog
        self.comp = comp
        self.sdp_solution = sdp_sol
        if sdp_sol.status == sdp.OPTIMAL:
            self.status = FEASIBLE
        elif sdp_sol.status == sdp.INFEASIBLE:
            self.status = INFEASIBLE
        else:
            self.status = NUMERICAL_FAILURE

    def template_coeffs(self, t):
        if self.status != FEASIBLE:
            raise SosProgramError(f"solution status is {self.status}")
        return [float(self.sdp_solution.free[cid]) for cid in t.coeff_ids]

    def extract(self, t) -> Polynomial:
        """Numeric polynomial for a free template, small coefficients pruned."""
        coeffs = self.template_coeffs(t)
        top = max((abs(c) for c in coeffs), default=0.0)
        out = Polynomial.zero(self.prog.nvars)
        for c, m in zip(coeffs, t.basis):
            if abs(c) > EXTRACT_PRUNE_REL * top:
                out = out + m.as_polynomial() * c
        return out

    def gram(self, t: SosTemplate):
        if self.status != FEASIBLE:
            raise SosProgramError(f"solution status is {self.status}")
        return self.sdp_solution.blocks[self.comp.sos_block_of[id(t)]]

    def constraint_gram(self, cidx):
        if self.status != FEASIBLE:
            raise SosProgramError(f"solution status is {self.status}")
        return (self.comp.constraint_basis[cidx],
                self.sdp_solution.blocks[self.comp.constraint_block[cidx]])

    def sos_template_poly(self, t) -> Polynomial:
        return gram_to_poly(t.gram_basis, self.gram(t))

    def recompose_errors(self):
        """Certificate soundness: per constraint, the coefficient-wise gap
        between the expression at the solution and basis^T Q basis."""
        errs = []
        for cidx, expr in enumerate(self.prog.constraints):
            target = expr.value(self)
            basis, Q = self.constraint_gram(cidx)
            diff = target - gram_to_poly(basis, Q)
            errs.append(diff.max_abs_coeff())
        return errs

    def min_gram_eigenvalues(self):
        out = []
        for X in self.sdp_solution.blocks:
            out.append(float(np.linalg.eigvalsh(X)[0]) if X.size else 0.0)
        return out


def gram_to_poly(basis, Q) -> Polynomial:
    nvars = basis[0].nvars if basis else 0
    pairs = []
    for i, mi in enumerate(basis):
        for j, mj in enumerate(basis):
            e = tuple(a + b for a, b in zip(mi.exponents, mj.exponents))
            pairs.append((e, Q[i, j]))
    return Polynomial.from_terms(pairs, nvars)


def solve(prog: SosProgram, tol=sdp.DEFAULT_TOL) -> SosSolution:
    comp = compile(prog)
    sol = sdp.solve(comp.problem, tol=tol)
    if sol.status == sdp.NUMERICAL_FAILURE:
        # The min-trace regularization removes the zero-objective degeneracy
        # on most programs but stalls on some tightly-margined ones; the two
        # regimes cover for each other, so retry as pure feasibility.
        comp.problem.objective_blocks.clear()
        sol = sdp.solve(comp.problem, tol=tol)
    return SosSolution(prog, comp, sol)


def check_sos(p: Polynomial, tol=sdp.DEFAULT_TOL):
    """Feasibility oracle: (SosSolution, gram basis, Q) if p is SOS within
    solver tolerance, else a solution with status infeasible."""
    if p.degree % 2 == 1:
        prog = SosProgram(p.nvars)
        prog.add_sos_constraint(Polynomial.zero(p.nvars))
        comp = compile(prog)
        sol = SosSolution(prog, comp, sdp.SdpSolution(status=sdp.INFEASIBLE))
        return sol
    prog = SosProgram(p.nvars)
    prog.add_sos_constraint(PolyExpr(p.nvars, p))
    return solve(prog, tol=tol)
