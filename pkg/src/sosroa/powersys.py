"""Classical multi-machine model in a single-machine reference frame.

State layout for an n-machine network with reference machine r:
``x = [delta_1r, ..., delta_(n-1)r, omega_1r, ..., omega_(n-1)r]`` over the
non-reference machines in index order (angles in radians, speeds in rad/s,
everything per-unit).

The polynomial recasting replaces each relative angle offset
``theta_k = delta_kr - delta_kr_sep`` with the pair (sin theta_k,
1 - cos theta_k), giving a polynomial DAE ``zdot = f(z)``, ``0 = g(z)`` with
``g_k = zs_k^2 + zc_k^2 - 2 zc_k``.  Variable order: the n-1 relative speeds
first, then (zs_k, zc_k) pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .poly import Polynomial

SEP_RESIDUAL_TOL = 1e-10
UNIFORM_DAMPING_TOL = 1e-9


class PowerSystemError(Exception):
    pass


@dataclass
class NetworkData:
    M: np.ndarray
    D: np.ndarray
    E: np.ndarray
    Pm: np.ndarray
    G: np.ndarray
    B: np.ndarray
    reference: int = -1

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.D = np.asarray(self.D, dtype=float)
        self.E = np.asarray(self.E, dtype=float)
        self.Pm = np.asarray(self.Pm, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        n = self.n_machines
        if self.reference < 0:
            self.reference = n - 1
        if not 0 <= self.reference < n:
            raise PowerSystemError("reference index out of range")
        for name, mat in (("G", self.G), ("B", self.B)):
            if mat.shape != (n, n):
                raise PowerSystemError(f"{name} must be {n}x{n}")
            bad = np.argwhere(np.abs(mat - mat.T) > 1e-10)
            if bad.size:
                i, j = bad[0]
                raise PowerSystemError(
                    f"{name} is not symmetric: entry ({i},{j})={mat[i, j]!r} "
                    f"vs ({j},{i})={mat[j, i]!r}")
        if np.any(self.M <= 0):
            raise PowerSystemError("inertias must be positive")
        ratios = self.D / self.M
        if np.max(ratios) - np.min(ratios) > UNIFORM_DAMPING_TOL * (1 + np.max(np.abs(ratios))):
            raise PowerSystemError(
                f"non-uniform damping D_i/M_i = {ratios.tolist()}; the "
                "single-machine reference reduction requires a uniform ratio")

    @property
    def n_machines(self):
        return len(self.M)

    @property
    def others(self):
        return [i for i in range(self.n_machines) if i != self.reference]

    @property
    def damping_ratio(self):
        return float(self.D[0] / self.M[0])


# MachineState is a plain ndarray of length 2*(n-1):
# relative angles first, then relative speeds.


def _absolute_angles(nd, delta_rel):
    delta = np.zeros(nd.n_machines)
    for k, i in enumerate(nd.others):
        delta[i] = delta_rel[k]
    return delta


def electrical_power(nd, delta):
    """P_e per machine at absolute angles delta (reference angle 0)."""
    n = nd.n_machines
    Pe = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            dij = delta[i] - delta[j]
            acc += nd.E[i] * nd.E[j] * (nd.G[i, j] * math.cos(dij)
                                        + nd.B[i, j] * math.sin(dij))
        Pe[i] = acc
    return Pe


def swing_rhs(x, nd):
    """Relative-frame swing dynamics with uniform damping."""
    m = nd.n_machines - 1
    delta_rel = np.asarray(x[:m], dtype=float)
    omega_rel = np.asarray(x[m:], dtype=float)
    delta = _absolute_angles(nd, delta_rel)
    Pe = electrical_power(nd, delta)
    accel = (nd.Pm - Pe) / nd.M
    d = nd.damping_ratio
    out = np.empty(2 * m)
    out[:m] = omega_rel
    for k, i in enumerate(nd.others):
        out[m + k] = accel[i] - accel[nd.reference] - d * omega_rel[k]
    return out


def find_sep(nd, guess=None, max_iter=50):
    """Newton solve for the stable equilibrium of the relative dynamics.

    Returns a state with zero speed components and infinity-norm residual
    below SEP_RESIDUAL_TOL; raises if Newton stalls or the converged point
    is not asymptotically stable (wrong basin of the guess).
    """
    m = nd.n_machines - 1
    delta = np.zeros(m) if guess is None else np.asarray(guess[:m], dtype=float).copy()
    if not np.all(np.isfinite(delta)):
        raise PowerSystemError("guess must be finite")

    def mismatch(d_rel):
        dall = _absolute_angles(nd, d_rel)
        Pe = electrical_power(nd, dall)
        accel = (nd.Pm - Pe) / nd.M
        return np.array([accel[i] - accel[nd.reference] for i in nd.others])

    h = 1e-7
    for _ in range(max_iter):
        F = mismatch(delta)
        if np.max(np.abs(F)) < SEP_RESIDUAL_TOL:
            break
        J = np.empty((m, m))
        for k in range(m):
            dp = delta.copy(); dp[k] += h
            dm = delta.copy(); dm[k] -= h
            J[:, k] = (mismatch(dp) - mismatch(dm)) / (2 * h)
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise PowerSystemError("singular Jacobian in SEP Newton") from exc
        delta -= step
    else:
        raise PowerSystemError(
            f"SEP Newton did not converge in {max_iter} iterations "
            f"(residual {np.max(np.abs(mismatch(delta))):.3e})")

    sep = np.concatenate([delta, np.zeros(m)])
    lam = np.linalg.eigvals(dynamics_jacobian(nd, sep))
    if np.max(lam.real) >= 0:
        raise PowerSystemError(
            f"converged equilibrium is not asymptotically stable "
            f"(max Re eig = {np.max(lam.real):.3e}); adjust the guess")
    return sep


def dynamics_jacobian(nd, x, h=1e-6):
    n2 = len(x)
    J = np.empty((n2, n2))
    for k in range(n2):
        xp = np.asarray(x, dtype=float).copy(); xp[k] += h
        xm = np.asarray(x, dtype=float).copy(); xm[k] -= h
        J[:, k] = (swing_rhs(xp, nd) - swing_rhs(xm, nd)) / (2 * h)
    return J


@dataclass
class PolySystem:
    nvars: int
    f: list
    g: list
    sep: np.ndarray
    network: NetworkData = None

    @property
    def n_rel(self):
        return self.nvars // 3


def _pair_indices(m, k):
    """z-vector indices of (sin, 1-cos) for relative machine k."""
    return m + 2 * k, m + 2 * k + 1


def _cos_sin_poly(nvars, m, k_i, k_j, sep_delta):
    """(cos, sin) of delta_ir - delta_jr as degree-2 polynomials in z.

    k_i / k_j are positions in the non-reference list, or None for the
    reference machine itself.
    """
    one = Polynomial.constant(1.0, nvars)
    zero = Polynomial.zero(nvars)

    def cs(k):
        if k is None:
            return one, zero, 0.0
        si, ci = _pair_indices(m, k)
        S = Polynomial.variable(si, nvars)
        C = one - Polynomial.variable(ci, nvars)
        return C, S, sep_delta[k]

    Ci, Si, ai = cs(k_i)
    Cj, Sj, aj = cs(k_j)
    # cos/sin of (theta_i - theta_j), then rotate by the SEP offset a = ai - aj.
    cosd = Ci * Cj + Si * Sj
    sind = Si * Cj - Sj * Ci
    a = ai - aj
    return (cosd * math.cos(a) - sind * math.sin(a),
            sind * math.cos(a) + cosd * math.sin(a))


def to_polynomial_system(nd, sep):
    """Recast the relative swing dynamics around `sep` as a polynomial DAE."""
    m = nd.n_machines - 1
    res = np.max(np.abs(swing_rhs(sep, nd)))
    if res > 1e-8:
        raise PowerSystemError(f"sep residual {res:.3e} too large")
    nvars = 3 * m
    sep_delta = np.asarray(sep[:m], dtype=float)

    pos = {i: k for k, i in enumerate(nd.others)}

    def kpos(i):
        return None if i == nd.reference else pos[i]

    # Electrical power of each machine as a degree-2 polynomial in z.
    Pe = []
    for i in range(nd.n_machines):
        acc = Polynomial.zero(nvars)
        for j in range(nd.n_machines):
            cos_ij, sin_ij = _cos_sin_poly(nvars, m, kpos(i), kpos(j), sep_delta)
            acc = acc + (cos_ij * nd.G[i, j] + sin_ij * nd.B[i, j]) \
                * (nd.E[i] * nd.E[j])
        Pe.append(acc)

    d = nd.damping_ratio
    f = [Polynomial.zero(nvars)] * nvars
    for k, i in enumerate(nd.others):
        w = Polynomial.variable(k, nvars)
        acc_i = (Polynomial.constant(nd.Pm[i], nvars) - Pe[i]) * (1.0 / nd.M[i])
        acc_r = (Polynomial.constant(nd.Pm[nd.reference], nvars)
                 - Pe[nd.reference]) * (1.0 / nd.M[nd.reference])
        fw = acc_i - acc_r - w * d
        # The SEP residual shows up as a tiny constant term; strip it so the
        # origin is an exact equilibrium of the polynomial system.
        c0 = fw.coeff((0,) * nvars)
        if abs(c0) > 1e-8:
            raise PowerSystemError(f"equilibrium constant {c0:.3e} too large")
        fw = fw - Polynomial.constant(c0, nvars)
        si, ci = _pair_indices(m, k)
        f[k] = fw
        f[si] = (Polynomial.constant(1.0, nvars) - Polynomial.variable(ci, nvars)) * w
        f[ci] = Polynomial.variable(si, nvars) * w

    g = []
    for k in range(m):
        si, ci = _pair_indices(m, k)
        zs = Polynomial.variable(si, nvars)
        zc = Polynomial.variable(ci, nvars)
        g.append(zs * zs + zc * zc - zc * 2.0)

    return PolySystem(nvars=nvars, f=f, g=g, sep=np.asarray(sep, dtype=float),
                      network=nd)


def transform(x, sep):
    """Machine state -> polynomial state z per the angle/speed recasting."""
    x = np.asarray(x, dtype=float)
    sep = np.asarray(sep, dtype=float)
    m = len(x) // 2
    z = np.empty(3 * m)
    z[:m] = x[m:]
    for k in range(m):
        th = x[k] - sep[k]
        z[m + 2 * k] = math.sin(th)
        z[m + 2 * k + 1] = 1.0 - math.cos(th)
    return z


def inverse_transform(z, sep):
    """Recover the machine state; requires g(z) = 0 within 1e-8."""
    z = np.asarray(z, dtype=float)
    sep = np.asarray(sep, dtype=float)
    m = len(z) // 3
    x = np.empty(2 * m)
    x[m:] = z[:m]
    for k in range(m):
        zs = z[m + 2 * k]
        zc = z[m + 2 * k + 1]
        gk = zs * zs + zc * zc - 2 * zc
        if abs(gk) > 1e-8:
            raise PowerSystemError(
                f"z violates the circle constraint for machine pair {k}: "
                f"g={gk:.3e}")
        x[k] = sep[k] + math.atan2(zs, 1.0 - zc)
    return x


def transform_trajectory(states, sep):
    return np.array([transform(x, sep) for x in states])


# -- config loading ----------------------------------------------------

def load_config(path):
    """Read the JSON system config: machine parameters plus per-phase reduced
    G/B matrices.  Returns (dict phase -> NetworkData, raw config dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PowerSystemError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("machines", "phases"):
        if key not in cfg:
            raise PowerSystemError(f"{path}: missing '{key}' section")
    machines = cfg["machines"]
    for idx, mach in enumerate(machines):
        for fld in ("M", "D", "E", "Pm"):
            if fld not in mach:
                raise PowerSystemError(
                    f"{path}: machines[{idx}] missing field '{fld}'")
    reference = cfg.get("reference", len(machines) - 1)
    nets = {}
    for phase, data in cfg["phases"].items():
        if phase not in ("prefault", "fault", "postfault"):
            raise PowerSystemError(f"{path}: unknown phase '{phase}'")
        for fld in ("G", "B"):
            if fld not in data:
                raise PowerSystemError(f"{path}: phases.{phase} missing '{fld}'")
        try:
            nets[phase] = NetworkData(
                M=[mm["M"] for mm in machines],
                D=[mm["D"] for mm in machines],
                E=[mm["E"] for mm in machines],
                Pm=[mm["Pm"] for mm in machines],
                G=np.array(data["G"], dtype=float),
                B=np.array(data["B"], dtype=float),
                reference=reference)
        except PowerSystemError as exc:
            raise PowerSystemError(f"{path}: phases.{phase}: {exc}") from exc
    return nets, cfg
