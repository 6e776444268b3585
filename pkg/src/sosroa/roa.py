"""Stability-region estimation pipeline.

Three certificate stages, each a family of SOS feasibility programs whose
scalar level is found by bisection (the products level*multiplier would
otherwise be bilinear):

1. initial_lyapunov: find V with V positive definite and Vdot negative on
   {p1 <= beta1}, maximizing beta1.
2. max_level_set: largest c with {V <= c} inside {p1 <= beta1}; V is then
   rescaled so the working level is 1.
3. expand_interior: grow beta with {p <= beta} contained in {V <= 1} and V
   decreasing on {V <= 1}, alternating between the multiplier step (V fixed)
   and the V step (decrease multipliers fixed).

The outer loop replaces p by the current V and repeats stages 2-3 until the
relative beta gain stalls.  All certificates act modulo the recast circle
constraints g(z) = 0 via free polynomial multipliers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import sos
from .poly import (Polynomial, lie_derivative, monomial_basis,
                   poly_from_coeff_list, poly_to_coeff_list)
from .shaping import EllipsoidShape, shape_to_polynomial


class RoaError(Exception):
    pass


@dataclass
class RoaOptions:
    deg_V: int = 2
    deg_s: int = 2
    deg_lambda: int = None        # None: matched to the constraint degree
    eps_l: float = 1e-6           # l(z) = eps_l * sum z_i^2
    beta_rel_tol: float = 1e-3
    c_rel_tol: float = 1e-3
    max_alternations: int = 20
    alternation_rel_tol: float = 1e-2
    max_outer: int = 5
    outer_rel_tol: float = 1e-2
    beta_cap: float = 1e3
    sdp_tol: float = 1e-7
    # The initial stage's positivity constraint is global by default:
    # V - l1 must be nonnegative everywhere (modulo g), which keeps every
    # sublevel set of the certificate positively bounded and the rescaling
    # stage feasible.  localized_positivity=True instead restricts the
    # requirement to {p1 <= beta1} via an extra multiplier; the resulting V
    # can dip negative outside that set, in which case the {V <= c} level
    # sets acquire far-away components and the rescaling stage is
    # structurally infeasible at every c.
    localized_positivity: bool = False
    # Literal rendering of the expansion stage's positivity constraint uses
    # an extra SOS factor on V; the default drops it (see module sos's open
    # question), a flag restores it for comparison.
    literal_positivity_multiplier: bool = False
    include_decrease_margin: bool = True

    def validate(self):
        if self.deg_V % 2 or self.deg_s % 2:
            raise RoaError("Gram-represented degrees must be even")
        for name in ("beta_rel_tol", "c_rel_tol", "outer_rel_tol", "eps_l"):
            if getattr(self, name) <= 0:
                raise RoaError(f"{name} must be positive")


@dataclass
class RoaEstimate:
    V: Polynomial                 # certified level normalized to 1
    p: Polynomial                 # final shape polynomial
    beta: float
    history: list
    options: RoaOptions
    certificate: object = None    # SosSolution of the final expansion step


@dataclass
class CctReport:
    cct_lyapunov: float
    crossing_index: int
    v_trace: np.ndarray           # (t, V) rows on the fault capture grid
    lower_bound_only: bool = False
    started_outside: bool = False


def _l_poly(nvars, eps):
    out = Polynomial.zero(nvars)
    for i in range(nvars):
        v = Polynomial.variable(i, nvars)
        out = out + v * v
    return out * eps


def _lambda_templates(prog, g, base_deg, opts):
    """One free multiplier per equality constraint, degree matched so that
    lambda^T g reaches the constraint degree (or the user override)."""
    if not g:
        return []
    deg = opts.deg_lambda
    if deg is None:
        deg = max(0, base_deg - max(gi.degree for gi in g))
    return [prog.free_poly_deg(deg, tag=f"lam{i}") for i in range(len(g))]


def _subtract_lambda_g(expr, lams, g):
    for lam, gi in zip(lams, g):
        expr = expr - lam * gi
    return expr


def bisect_max(feasible, seed=1.0, rel_tol=1e-3, cap=1e3, floor=1e-9,
               grow=10.0):
    """Largest t with feasible(t) truthy, via decade scan + bisection.

    Returns (t, payload) for the last feasible t, or (None, None) when even
    the smallest trial fails.  feasible() returns a payload or None.
    """
    t = min(seed, cap)
    pay = feasible(t)
    while pay is None:
        t /= grow
        if t < floor:
            return None, None
        pay = feasible(t)
    lo, lo_pay = t, pay
    hi = None
    while hi is None:
        if lo >= cap:
            return lo, lo_pay
        t = min(lo * grow, cap)
        p2 = feasible(t)
        if p2 is not None:
            lo, lo_pay = t, p2
            if t >= cap:
                return lo, lo_pay
        else:
            hi = t
    while hi - lo > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        p2 = feasible(mid)
        if p2 is not None:
            lo, lo_pay = mid, p2
        else:
            hi = mid
    return lo, lo_pay


def _strip_low_order_noise(V, rel=1e-6):
    """Drop coefficients far below the leading one, and any constant/linear
    residue (V must vanish with zero gradient at the origin).

    Solver noise of order tol in high-degree terms is poisonous: a stray
    negative top-degree crumb makes the homogeneous leading form indefinite
    and later containment certificates structurally infeasible.  Pruning is a
    heuristic choice of candidate, not a soundness step: everything
    downstream re-certifies against the pruned V and fails honestly if the
    pruning broke it."""
    top = V.max_abs_coeff()
    keep = [(e, c) for e, c in V.terms.items()
            if sum(e) >= 2 and abs(c) > rel * top]
    return Polynomial.from_terms(keep, V.nvars)


def initial_lyapunov(system, p1, opts=None):
    """Maximize beta1 such that a V exists with V - l1 >= 0 and
    Vdot <= -l2 on {p1 <= beta1} (modulo g); returns (V, beta1)."""
    opts = opts or RoaOptions()
    opts.validate()
    n = system.nvars
    l1 = _l_poly(n, opts.eps_l)
    l2 = _l_poly(n, opts.eps_l)
    v_basis = monomial_basis(n, 2, opts.deg_V)
    fdeg = max(fi.degree for fi in system.f)

    def build(beta):
        prog = sos.SosProgram(n)
        V = prog.free_poly(v_basis, tag="V")
        # Both constraints vanish at the origin, so the localizing
        # multipliers and the Gram bases are restricted to vanish there too
        # (otherwise the forced-zero diagonal entries leave the SDP without
        # a strictly feasible point).
        s6 = prog.sos_poly_deg(opts.deg_s // 2, tag="s6", min_deg=1)
        gap = Polynomial.constant(beta, n) - p1
        d1 = max(opts.deg_s + p1.degree, opts.deg_V, 2)
        d2 = max(opts.deg_s + p1.degree, opts.deg_V - 1 + fdeg, 2)
        lam1 = _lambda_templates(prog, system.g, d1, opts)
        lam2 = _lambda_templates(prog, system.g, d2, opts)
        if opts.localized_positivity:
            s2 = prog.sos_poly_deg(opts.deg_s // 2, tag="s2", min_deg=1)
            c1 = -(s2 * gap) + V - l1
        else:
            s2 = None
            c1 = V - l1
        c1 = _subtract_lambda_g(c1, lam1, system.g)
        c2 = _subtract_lambda_g(-(s6 * gap) - V.lie(system.f) - l2,
                                lam2, system.g)
        prog.add_sos_constraint(c1, min_gram_deg=1)
        prog.add_sos_constraint(c2, min_gram_deg=1)
        sol = sos.solve(prog, tol=opts.sdp_tol)
        if sol.status != sos.FEASIBLE:
            return None
        # Rebuild V from the positivity certificate instead of the raw
        # coefficient vector: the raw extraction carries O(tol) noise, and a
        # stray negative high-order coefficient makes every sublevel set
        # unbounded, which the rescaling stage then correctly rejects.  The
        # recomposed V satisfies its positivity identity exactly (modulo the
        # clipped Gram eigenvalues).
        basis, Q = sol.constraint_gram(0)
        w, E = np.linalg.eigh(0.5 * (Q + Q.T))
        Qc = E @ np.diag(np.clip(w, 0.0, None)) @ E.T
        Vc = sos.gram_to_poly(basis, Qc) + l1
        for lam, gi in zip(lam1, system.g):
            Vc = Vc + sol.extract(lam) * gi
        if s2 is not None:
            Vc = Vc + sol.sos_template_poly(s2) * gap
        Vc = _strip_low_order_noise(Vc)
        # The trace-regularized solve returns the smallest certificate, whose
        # coefficients sit near the eps_l scale; scaling V up by k >= 1 keeps
        # both constraints valid (k*V - l1 = k*(V - l1) + (k-1)*l1) and keeps
        # the later stages well conditioned.
        top = Vc.max_abs_coeff()
        if 0 < top < 1.0:
            Vc = Vc.scale(1.0 / top)
        return Vc

    beta1, V = bisect_max(build, seed=1.0, rel_tol=opts.beta_rel_tol,
                          cap=opts.beta_cap)
    if beta1 is None:
        raise RoaError("no local certificate at the configured degrees")
    return V, beta1


def max_level_set(V, p1, beta1, system, opts=None):
    """Largest c such that {V <= c} sits inside {p1 <= beta1} (modulo g)."""
    opts = opts or RoaOptions()
    opts.validate()
    n = system.nvars
    gap = p1 - Polynomial.constant(beta1, n)

    # The containment multipliers must reach degree deg(V): with the default
    # deg_s they are too short for quartic V and the identity is infeasible
    # at every level even though the containment itself holds.
    s_half = max(opts.deg_s, V.degree + (V.degree % 2)) // 2

    def build(c):
        prog = sos.SosProgram(n)
        s1 = prog.sos_poly_deg(s_half, tag="s1")
        s2 = prog.sos_poly_deg(s_half, tag="s2")
        s3 = prog.sos_poly_deg(0, tag="s3")
        vc = V - Polynomial.constant(c, n)
        base = max(2 * s_half + max(V.degree, p1.degree),
                   V.degree + p1.degree, 2 * p1.degree)
        lam = _lambda_templates(prog, system.g, base, opts)
        expr = -(s1 * vc) - (s2 * gap) + s3 * (vc * gap) - gap * gap
        expr = _subtract_lambda_g(expr, lam, system.g)
        prog.add_sos_constraint(expr)
        sol = sos.solve(prog, tol=opts.sdp_tol)
        return sol if sol.status == sos.FEASIBLE else None

    c, _ = bisect_max(build, seed=max(beta1, 1e-6), rel_tol=opts.c_rel_tol,
                      cap=opts.beta_cap)
    if c is None:
        raise RoaError("level-set rescaling infeasible; V looks degenerate "
                       "(raise eps_l or the template degrees)")
    return c


def _expansion_step_multipliers(system, p, V, beta, opts, l1, l2):
    """Multiplier step: V fixed, solve for s6/s8/s9 and the g multipliers."""
    n = system.nvars
    prog = sos.SosProgram(n)
    f = system.f
    Vdot = lie_derivative(V, f)
    s6 = prog.sos_poly_deg(opts.deg_s // 2, tag="s6")
    # The decrease constraint vanishes at the origin, forcing s8(0) = 0;
    # bake that into the template so the SDP stays strictly feasible.
    s8 = prog.sos_poly_deg(opts.deg_s // 2, tag="s8", min_deg=1)
    s9 = prog.sos_poly_deg(opts.deg_s // 2, tag="s9")
    one = Polynomial.constant(1.0, n)
    gap = Polynomial.constant(beta, n) - p

    d1 = max(V.degree, 2) + (opts.deg_s if opts.literal_positivity_multiplier else 0)
    d2 = max(opts.deg_s + p.degree, V.degree)
    d3 = opts.deg_s + max(V.degree, Vdot.degree)

    lam1 = _lambda_templates(prog, system.g, d1, opts)
    lam2 = _lambda_templates(prog, system.g, d2, opts)
    lam3 = _lambda_templates(prog, system.g, d3, opts)

    if opts.literal_positivity_multiplier:
        s2 = prog.sos_poly_deg(opts.deg_s // 2, tag="s2")
        c1 = s2 * V - l1
    else:
        s2 = None
        c1 = sos.PolyExpr(n, V - l1)
    c1 = _subtract_lambda_g(c1, lam1, system.g)
    c2 = _subtract_lambda_g(-(s6 * gap) - (V - one), lam2, system.g)
    c3 = -(s8 * (one - V)) - (s9 * Vdot)
    if opts.include_decrease_margin:
        c3 = c3 - l2
    c3 = _subtract_lambda_g(c3, lam3, system.g)
    prog.add_sos_constraint(c1)
    prog.add_sos_constraint(c2)
    prog.add_sos_constraint(c3)
    sol = sos.solve(prog, tol=opts.sdp_tol)
    if sol.status != sos.FEASIBLE:
        return None
    return {
        "sol": sol,
        "s8": sol.sos_template_poly(s8),
        "s9": sol.sos_template_poly(s9),
        "s2": sol.sos_template_poly(s2) if s2 is not None else None,
    }


def _expansion_step_lyapunov(system, p, beta, s8, s9, s2, opts, l1, l2,
                             v_basis):
    """V step: decrease multipliers fixed, V and the containment multiplier
    free."""
    n = system.nvars
    prog = sos.SosProgram(n)
    V = prog.free_poly(v_basis, tag="V")
    s6 = prog.sos_poly_deg(opts.deg_s // 2, tag="s6")
    one = Polynomial.constant(1.0, n)
    gap = Polynomial.constant(beta, n) - p
    Vdot_expr = V.lie(system.f)

    d1 = max(opts.deg_V, 2) + (opts.deg_s if s2 is not None else 0)
    d2 = max(opts.deg_s + p.degree, opts.deg_V)
    fdeg = max(fi.degree for fi in system.f)
    d3 = opts.deg_s + max(opts.deg_V, opts.deg_V - 1 + fdeg)

    lam1 = _lambda_templates(prog, system.g, d1, opts)
    lam2 = _lambda_templates(prog, system.g, d2, opts)
    lam3 = _lambda_templates(prog, system.g, d3, opts)

    if s2 is not None:
        c1 = V * s2 - l1
    else:
        c1 = V - l1
    c1 = _subtract_lambda_g(c1, lam1, system.g)
    c2 = _subtract_lambda_g(-(s6 * gap) - (V - one), lam2, system.g)
    c3 = -(s8 * one) + V * s8 - Vdot_expr * s9
    if opts.include_decrease_margin:
        c3 = c3 - l2
    c3 = _subtract_lambda_g(c3, lam3, system.g)
    prog.add_sos_constraint(c1)
    prog.add_sos_constraint(c2)
    prog.add_sos_constraint(c3)
    sol = sos.solve(prog, tol=opts.sdp_tol)
    if sol.status != sos.FEASIBLE:
        return None
    if s2 is None:
        # Same certificate recomposition as in the initial stage: make the
        # positivity identity exact so the next multiplier step accepts V.
        basis, Q = sol.constraint_gram(0)
        w, E = np.linalg.eigh(0.5 * (Q + Q.T))
        Qc = E @ np.diag(np.clip(w, 0.0, None)) @ E.T
        Vc = sos.gram_to_poly(basis, Qc) + l1
        for lam, gi in zip(lam1, system.g):
            Vc = Vc + sol.extract(lam) * gi
        Vc = _strip_low_order_noise(Vc)
    else:
        Vc = sol.extract(V)
    return {"sol": sol, "V": Vc}


def expand_interior(system, p, V0, opts=None):
    """Alternating expansion of {p <= beta} inside {V <= 1}.

    Returns (V, beta, info): the beta sequence never regresses; on a stalled
    multiplier step the previous iterate is returned with a diagnostic.
    """
    opts = opts or RoaOptions()
    opts.validate()
    n = system.nvars
    l1 = _l_poly(n, opts.eps_l)
    l2 = _l_poly(n, opts.eps_l)
    v_basis = monomial_basis(n, 2, opts.deg_V)

    V = V0
    beta = None
    cert = None
    info = {"alternations": 0, "stalled": False, "beta_history": []}

    for it in range(opts.max_alternations):
        # Step A: multipliers at fixed V, pushing beta upward.
        def feas_a(b):
            return _expansion_step_multipliers(system, p, V, b, opts, l1, l2)

        seed = beta if beta is not None else 1.0
        beta_a, pay_a = bisect_max(feas_a, seed=seed,
                                   rel_tol=opts.beta_rel_tol,
                                   cap=opts.beta_cap)
        if beta_a is None or (beta is not None and beta_a < beta):
            info["stalled"] = True
            break
        beta, cert = beta_a, pay_a["sol"]
        info["beta_history"].append(beta)

        # Step B: refit V at fixed decrease multipliers, re-bisecting upward.
        # The multipliers are taken from a strictly interior re-solve: the
        # bisection endpoint is marginal by construction, and multipliers
        # extracted from an edge-of-feasibility solution can make the V step
        # infeasible at every level.
        back = beta * (1.0 - 3.0 * opts.beta_rel_tol)
        pay_in = _expansion_step_multipliers(system, p, V, back, opts, l1, l2)
        if pay_in is not None:
            pay_a = pay_in
            seed_b = back
        else:
            seed_b = beta
        s8, s9, s2 = pay_a["s8"], pay_a["s9"], pay_a["s2"]

        def feas_b(b):
            return _expansion_step_lyapunov(system, p, b, s8, s9, s2, opts,
                                            l1, l2, v_basis)

        beta_b, pay_b = bisect_max(feas_b, seed=seed_b,
                                   rel_tol=opts.beta_rel_tol,
                                   cap=opts.beta_cap)
        info["alternations"] = it + 1
        if beta_b is None or beta_b < beta:
            break
        gain = (beta_b - beta) / beta
        V = pay_b["V"]
        beta = beta_b
        cert = pay_b["sol"]
        info["beta_history"].append(beta)
        if gain < opts.alternation_rel_tol:
            break

    if beta is None:
        raise RoaError("expansion infeasible at every trial level")
    return V, beta, {"certificate": cert, **info}


def estimate_roa(system, shape: EllipsoidShape, opts=None) -> RoaEstimate:
    """Full pipeline: initial certificate, rescale, expansion, and the outer
    shape-replacement loop."""
    opts = opts or RoaOptions()
    opts.validate()
    p = shape_to_polynomial(shape)
    history = []

    V, beta1 = initial_lyapunov(system, p, opts)
    c = max_level_set(V, p, beta1, system, opts)
    V = V.scale(1.0 / c)
    history.append({"stage": "initial", "beta": beta1, "c": c})

    beta_prev = None
    cert = None
    for k in range(opts.max_outer):
        V, beta, info = expand_interior(system, p, V, opts)
        cert = info["certificate"]
        history.append({"stage": f"outer{k}", "beta": beta,
                        "alternations": info["alternations"],
                        "stalled": info["stalled"],
                        "beta_history": info["beta_history"]})
        # After the first shape replacement, p is the previous V normalized
        # to level 1, so {p <= 1} is exactly the previous estimate: the level
        # beta measures this iteration's growth directly, and beta staying at
        # 1 means the estimate has stopped expanding.  (Raw beta values from
        # different outer iterations are measured against different shape
        # polynomials and are not comparable to each other.)
        converged = k > 0 and beta - 1.0 < opts.outer_rel_tol
        beta_prev = beta
        if converged or k == opts.max_outer - 1:
            break
        # Replace the shape by the current V; its certified level is 1, so
        # the rescaling stage is re-run against that level (it returns c
        # near 1 unless V has degenerated, which it then flags).
        p = V
        c = max_level_set(V, p, 1.0, system, opts)
        V = V.scale(1.0 / c)
        history[-1]["c"] = c

    return RoaEstimate(V=V, p=p, beta=beta_prev, history=history,
                       options=opts, certificate=cert)


def lyapunov_cct(estimate: RoaEstimate, fault_traj_z) -> CctReport:
    """First crossing of V = 1 along the fault trajectory in z coordinates.

    fault_traj_z: object with .times and .states (z-space samples)."""
    times = np.asarray(fault_traj_z.times, dtype=float)
    V = estimate.V
    vals = np.array([V.evaluate(z) for z in np.asarray(fault_traj_z.states)])
    trace = np.column_stack([times, vals])
    if vals[0] > 1.0:
        return CctReport(cct_lyapunov=0.0, crossing_index=0, v_trace=trace,
                         started_outside=True)
    above = np.nonzero(vals > 1.0)[0]
    if len(above) == 0:
        return CctReport(cct_lyapunov=float(times[-1]),
                         crossing_index=len(times) - 1, v_trace=trace,
                         lower_bound_only=True)
    i = int(above[0])
    t0, t1 = times[i - 1], times[i]
    v0, v1 = vals[i - 1], vals[i]
    t_cross = t0 + (t1 - t0) * (1.0 - v0) / (v1 - v0)
    return CctReport(cct_lyapunov=float(t_cross), crossing_index=i,
                     v_trace=trace)


# -- estimate persistence ---------------------------------------------

def save_estimate(est: RoaEstimate, path):
    nvars = est.V.nvars
    data = {
        "nvars": nvars,
        "V": poly_to_coeff_list(est.V),
        "p": poly_to_coeff_list(est.p),
        "beta": est.beta,
        "history": est.history,
        "options": {k: v for k, v in asdict(est.options).items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)


def load_estimate(path) -> RoaEstimate:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    opts = RoaOptions(**data["options"])
    return RoaEstimate(
        V=poly_from_coeff_list(data["V"], data["nvars"]),
        p=poly_from_coeff_list(data["p"], data["nvars"]),
        beta=data["beta"], history=data["history"], options=opts)
