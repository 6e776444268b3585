"""Sum-of-squares certificates and their limits.

A polynomial that is a sum of squares is globally nonnegative, and the fact
is checkable: a positive semidefinite Gram matrix over a monomial basis is a
certificate anyone can re-verify by recomposition.  The converse fails —
nonnegative polynomials need not be SOS — and the canonical witness is the
Motzkin polynomial.

Run:  python3 demos/02_sos_certificates.py
"""

import numpy as np

from sosroa import sos
from sosroa.poly import Polynomial, render
from sosroa.sos import check_sos, gram_to_poly


def var(i, n=2):
    return Polynomial.variable(i, n)


def main():
    x, y = var(0), var(1)

    p = (x + y) ** 2 + (x * y - 1) ** 2
    sol = check_sos(p)
    print(f"p = {render(p)}")
    print(f"  SOS? {sol.status}")
    basis, Q = sol.constraint_gram(0)
    w = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    print(f"  Gram eigenvalues: {np.round(w, 6)}  (all >= 0)")
    err = (p - gram_to_poly(basis, Q)).max_abs_coeff()
    print(f"  recomposition error: {err:.2e}")

    motzkin = x ** 4 * y ** 2 + x ** 2 * y ** 4 - 3 * x ** 2 * y ** 2 \
        + Polynomial.constant(1.0, 2)
    sol = check_sos(motzkin)
    print(f"\nMotzkin polynomial = {render(motzkin)}")
    print(f"  nonnegative everywhere (AM-GM), yet SOS? {sol.status}")

    neg = -(x ** 2)
    print(f"\nq = {render(neg)}")
    print(f"  SOS? {check_sos(neg).status}")

    # A degree-6 random sum of squares round-trips through the certifier.
    rng = np.random.default_rng(1)
    q = Polynomial.zero(2)
    for _ in range(3):
        s = Polynomial.zero(2)
        for e in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0)]:
            s = s + Polynomial.from_terms([(e, float(rng.normal()))], 2)
        q = q + s * s
    sol = check_sos(q)
    print(f"\nrandom sum of 3 squared cubics: SOS? {sol.status}, "
          f"recomposition error {max(sol.recompose_errors()):.2e}")


if __name__ == "__main__":
    main()
