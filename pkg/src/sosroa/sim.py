"""Time-domain machinery: integration, fault scenarios and the ground-truth
critical-clearing-time oracle.

Default integrator is an adaptive embedded RK45 (scipy) with local tolerance
1e-8; a fixed-step classical RK4 is available for order-of-accuracy checks.
Captured trajectories are resampled on a uniform grid (default 0.01 s).
Divergence (state norm above 1e6) is a classification, not an exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import powersys

DIVERGENCE_NORM = 1e6
DEFAULT_TOL = 1e-8
DEFAULT_CAPTURE = 0.01


class SimError(Exception):
    pass


class CctUpperBoundError(SimError):
    """No unstable clearing time found below the scan bound."""

    def __init__(self, bound):
        super().__init__(f"CCT > {bound} s (no unstable clearing found)")
        self.bound = bound


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    phase: str = ""
    diverged: bool = False
    stopped: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise SimError("times must be strictly increasing")


def integrate(rhs, x0, t_span, mode="adaptive", tol=DEFAULT_TOL,
              step=None, capture=DEFAULT_CAPTURE, phase="",
              stop_condition=None):
    """Integrate dx/dt = rhs(x) over t_span and resample on the capture grid.

    mode 'adaptive': embedded RK45 with per-step error below tol.
    mode 'fixed': classical RK4 with the given step.
    stop_condition: optional scalar function of the state; integration halts
    (adaptive mode, Trajectory.stopped set) on its first upward zero crossing.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise SimError("initial state must be finite")
    t0, t1 = float(t_span[0]), float(t_span[1])
    n_out = int(math.floor((t1 - t0) / capture + 1e-9)) + 1
    t_out = t0 + capture * np.arange(n_out)

    if t1 <= t0:
        return Trajectory(times=np.array([t0]), states=x0[None, :], phase=phase)

    if mode == "fixed":
        if step is None:
            raise SimError("fixed mode needs a step")
        ts = [t0]
        xs = [x0]
        x = x0
        t = t0
        nsteps = int(round((t1 - t0) / step))
        diverged = False
        for _ in range(nsteps):
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * step * k1)
            k3 = rhs(x + 0.5 * step * k2)
            k4 = rhs(x + step * k3)
            x = x + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += step
            ts.append(t)
            xs.append(x)
            if np.linalg.norm(x) > DIVERGENCE_NORM:
                diverged = True
                break
        ts = np.array(ts)
        xs = np.array(xs)
        keep = t_out <= ts[-1] + 1e-12
        states = np.array([xs[np.argmin(np.abs(ts - tv))] for tv in t_out[keep]])
        return Trajectory(times=t_out[keep], states=states, phase=phase,
                          diverged=diverged)

    def fun(t, x):
        return rhs(x)

    def blowup(t, x):
        return np.linalg.norm(x) - DIVERGENCE_NORM
    blowup.terminal = True
    blowup.direction = 1
    events = [blowup]

    if stop_condition is not None:
        def stopper(t, x):
            return stop_condition(x)
        stopper.terminal = True
        stopper.direction = 1
        events.append(stopper)

    sol = solve_ivp(fun, (t0, t1), x0, method="RK45", rtol=tol,
                    atol=tol, dense_output=True, events=events,
                    max_step=max((t1 - t0) / 10.0, capture))
    stopped = sol.status == 1
    diverged = stopped and len(sol.t_events[0]) > 0
    t_end = sol.t[-1]
    keep = t_out <= t_end + 1e-12
    states = sol.sol(np.clip(t_out[keep], t0, t_end)).T
    return Trajectory(times=t_out[keep], states=states, phase=phase,
                      diverged=diverged, stopped=stopped)


@dataclass
class FaultScenario:
    prefault: powersys.NetworkData
    fault: powersys.NetworkData
    postfault: powersys.NetworkData
    fault_duration: float
    t_max_post: float = 20.0
    eps_converge: float = 1e-3
    capture_interval: float = DEFAULT_CAPTURE
    tol: float = DEFAULT_TOL
    escape_angle: float = None

    def __post_init__(self):
        if self.fault_duration < 0 or self.t_max_post <= 0:
            raise SimError("durations must be positive")


def run_scenario(sc: FaultScenario):
    """Fault-on trajectory from the pre-fault SEP, then the post-fault
    trajectory from the clearing state."""
    sep_pre = powersys.find_sep(sc.prefault)
    fault_traj = integrate(lambda x: powersys.swing_rhs(x, sc.fault),
                           sep_pre, (0.0, sc.fault_duration),
                           tol=sc.tol, capture=sc.capture_interval,
                           phase="fault")
    x_clear = fault_traj.states[-1]
    post_traj = integrate(lambda x: powersys.swing_rhs(x, sc.postfault),
                          x_clear, (0.0, sc.t_max_post),
                          tol=sc.tol, capture=sc.capture_interval,
                          phase="postfault")
    return fault_traj, post_traj


def _sep_distance(x, sep):
    """Distance to the SEP with relative angles wrapped modulo 2 pi."""
    x = np.asarray(x, dtype=float)
    m = len(x) // 2
    dd = np.mod(x[:m] - sep[:m] + math.pi, 2 * math.pi) - math.pi
    return math.hypot(np.linalg.norm(dd), np.linalg.norm(x[m:] - sep[m:]))


def converges_to_sep(x0, nd, sep, t_max=20.0, eps=1e-3, tol=DEFAULT_TOL,
                     capture=None, escape_angle=None):
    """True iff the trajectory sits inside the eps ball around the SEP for
    the final 10% of [0, t_max].

    escape_angle, when set, declares the state unstable as soon as any
    relative angle drifts that far (wrap-free) from the SEP.  Off by default:
    wrapped relocking then still counts as convergence.  Use it only where
    re-capture after that excursion is physically ruled out (e.g. very light
    damping); it exists to short-circuit long pole-slipping integrations.
    """
    if capture is None:
        # Coarsen the capture grid on long windows; the verdict only needs
        # the tail samples, not a dense plot.
        capture = max(DEFAULT_CAPTURE, t_max / 2000.0)
    stop = None
    if escape_angle is not None:
        m = len(x0) // 2

        def stop(x):
            return float(np.max(np.abs(x[:m] - sep[:m]))) - escape_angle
    traj = integrate(lambda x: powersys.swing_rhs(x, nd), x0, (0.0, t_max),
                     tol=tol, capture=capture, stop_condition=stop)
    if traj.diverged or traj.stopped or traj.times[-1] < 0.9 * t_max:
        return False
    tail = traj.states[traj.times >= 0.9 * t_max]
    m = tail.shape[1] // 2
    dd = np.mod(tail[:, :m] - sep[:m] + math.pi, 2 * math.pi) - math.pi
    dist = np.sqrt(np.sum(dd ** 2, axis=1) + np.sum((tail[:, m:] - sep[m:]) ** 2, axis=1))
    return bool(np.all(dist < eps))


def true_cct(sc: FaultScenario, tol_t=1e-3, t_upper=5.0, scan_step=0.25):
    """Ground-truth CCT by bisection over the clearing time.

    Integrates the fault-on dynamics once with dense output, then classifies
    post-fault convergence of each candidate clearing state.  Returns the
    lower end of the final bracket (last verified-stable clearing time).
    """
    sep_pre = powersys.find_sep(sc.prefault)
    sep_post = powersys.find_sep(sc.postfault, guess=sep_pre)

    sol = solve_ivp(lambda t, x: powersys.swing_rhs(x, sc.fault),
                    (0.0, t_upper), sep_pre, method="RK45",
                    rtol=sc.tol, atol=sc.tol, dense_output=True)
    t_reach = sol.t[-1]

    def stable(t_clear):
        if t_clear > t_reach:
            return False
        return converges_to_sep(sol.sol(t_clear), sc.postfault, sep_post,
                                t_max=sc.t_max_post, eps=sc.eps_converge,
                                tol=sc.tol, escape_angle=sc.escape_angle)

    if not stable(0.0):
        raise SimError("clearing at t=0 is not stable; post-fault SEP "
                       "unreachable from the pre-fault operating point")

    lo = 0.0
    hi = None
    t = scan_step
    while t <= t_upper + 1e-12:
        if stable(t):
            lo = t
        else:
            hi = t
            break
        t += scan_step
    if hi is None:
        raise CctUpperBoundError(min(t_upper, t_reach))

    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo
