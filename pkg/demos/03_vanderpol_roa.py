"""Expanding-interior estimation on the reversed Van der Pol oscillator.

The reversed Van der Pol system has a bounded basin of attraction whose
boundary is the (unstable) limit cycle — a standard benchmark where the true
region is known by simulation.  The pipeline: find an initial Lyapunov
certificate, rescale its level set, then alternately grow a shape set
{p <= beta} inside {V <= 1} while refitting V.

Run:  python3 demos/03_vanderpol_roa.py        (about a minute)
"""

import numpy as np

from sosroa import sim
from sosroa.poly import Polynomial, lie_derivative, render
from sosroa.powersys import PolySystem
from sosroa.roa import (RoaOptions, expand_interior, initial_lyapunov,
                        max_level_set)


def reversed_vdp():
    n = 2
    x1, x2 = Polynomial.variable(0, n), Polynomial.variable(1, n)
    f1 = -x2
    f2 = x1 + (x1 * x1 - Polynomial.constant(1.0, n)) * x2
    return PolySystem(nvars=n, f=[f1, f2], g=[], sep=np.zeros(2))


def sampled_area(V, level, rng, n=20000, box=3.0):
    pts = rng.uniform(-box, box, size=(n, 2))
    inside = sum(1 for x in pts if V.evaluate(x) <= level)
    return inside / n * (2 * box) ** 2


def main():
    system = reversed_vdp()
    p = Polynomial.variable(0, 2) ** 2 + Polynomial.variable(1, 2) ** 2
    opts = RoaOptions()

    V, beta1 = initial_lyapunov(system, p, opts)
    print(f"initial certificate: beta1 = {beta1:.4f}")
    print(f"  V = {render(V)}")

    c = max_level_set(V, p, beta1, system, opts)
    V = V.scale(1.0 / c)
    print(f"level rescale: c = {c:.4f}; working level set is {{V <= 1}}")

    rng = np.random.default_rng(2)
    area0 = sampled_area(V, 1.0, rng)
    Vf, beta, info = expand_interior(system, p, V, opts)
    areaf = sampled_area(Vf, 1.0, rng)
    print(f"\nexpansion: beta history {np.round(info['beta_history'], 4)}")
    print(f"sampled area of {{V <= 1}}: {area0:.3f} -> {areaf:.3f}")

    # Every sampled point of the final estimate converges to the origin.
    def rhs(x):
        return np.array([fi.evaluate(x) for fi in system.f])

    checked = bad = 0
    while checked < 200:
        x = rng.uniform(-3, 3, size=2)
        if Vf.evaluate(x) > 1.0:
            continue
        checked += 1
        traj = sim.integrate(rhs, x, (0.0, 20.0), capture=0.5)
        if traj.diverged or np.linalg.norm(traj.states[-1]) > 1e-2:
            bad += 1
    print(f"\nMonte Carlo: {checked - bad}/{checked} sampled interior points "
          "converge to the origin")

    Vdot = lie_derivative(Vf, system.f)
    xs = rng.uniform(-3, 3, size=(5000, 2))
    viol = sum(1 for x in xs
               if Vf.evaluate(x) <= 1.0 and Vdot.evaluate(x) > 1e-8)
    print(f"decrease-condition violations inside the estimate: {viol}/5000")


if __name__ == "__main__":
    main()
