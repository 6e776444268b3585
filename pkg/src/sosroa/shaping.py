"""Data-driven quadratic shape for the expanding-interior search.

The shape matrix comes from uncentered, unnormalized PCA of fault-trajectory
samples in the polynomial coordinates: eigendecomposition of the raw second
moment about the origin (the post-fault SEP), with axis weights 1/sqrt(eig)
(default) or 1/eig (the deliberately over-eccentric comparison variant).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .poly import Polynomial

DEFAULT_FLOOR_RATIO = 1e-4


class ShapingError(Exception):
    pass


@dataclass
class EigenSpectrum:
    eigenvalues: np.ndarray   # descending, >= 0
    eigenvectors: np.ndarray  # columns, orthonormal, aligned with eigenvalues


@dataclass
class EllipsoidShape:
    A: np.ndarray
    provenance: str = "file"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if np.max(np.abs(A - A.T)) > 1e-10:
            raise ShapingError("shape matrix must be symmetric")
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise ShapingError("shape matrix must be positive definite")
        self.A = 0.5 * (A + A.T)

    @property
    def dim(self):
        return self.A.shape[0]


def pca_raw(samples) -> EigenSpectrum:
    """Uncentered PCA: eigendecomposition of S = (1/m) sum z z^T.

    Sign convention: the largest-magnitude component of each eigenvector is
    made positive, so results are deterministic.
    """
    Z = np.asarray(samples, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ShapingError("need at least 2 samples of consistent dimension")
    S = Z.T @ Z / Z.shape[0]
    lam, E = np.linalg.eigh(S)
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, None)
    E = E[:, order]
    for k in range(E.shape[1]):
        j = int(np.argmax(np.abs(E[:, k])))
        if E[j, k] < 0:
            E[:, k] = -E[:, k]
    return EigenSpectrum(eigenvalues=lam, eigenvectors=E)


def assemble_shape_matrix(spec: EigenSpectrum, mode="sqrt",
                          floor_ratio=DEFAULT_FLOOR_RATIO) -> EllipsoidShape:
    """A = E diag(1/sqrt(lam)) E^T (sqrt mode) or E diag(1/lam) E^T (linear).

    Eigenvalues are clamped below at floor_ratio * lam_max; the data spectrum
    can span many decades and unclamped quiescent directions would make A
    numerically singular.
    """
    lam = np.asarray(spec.eigenvalues, dtype=float)
    if lam[0] <= 0:
        raise ShapingError("all-zero spectrum")
    lam = np.clip(lam, floor_ratio * lam[0], None)
    if mode == "sqrt":
        w = 1.0 / np.sqrt(lam)
    elif mode == "linear":
        w = 1.0 / lam
    else:
        raise ShapingError(f"unknown mode {mode!r}")
    E = spec.eigenvectors
    A = E @ np.diag(w) @ E.T
    return EllipsoidShape(A=A, provenance=f"pca_{mode}")


def sphere_shape(N) -> EllipsoidShape:
    if N < 1:
        raise ShapingError("dimension must be >= 1")
    return EllipsoidShape(A=np.eye(N), provenance="sphere")


def shape_to_polynomial(s: EllipsoidShape) -> Polynomial:
    """z^T A z as a degree-2 polynomial."""
    N = s.dim
    pairs = []
    for i in range(N):
        for j in range(i, N):
            e = [0] * N
            e[i] += 1
            e[j] += 1
            c = s.A[i, i] if i == j else 2.0 * s.A[i, j]
            pairs.append((tuple(e), c))
    return Polynomial.from_terms(pairs, N)


def shape_from_trajectory(traj_z, mode="sqrt",
                          floor_ratio=DEFAULT_FLOOR_RATIO) -> EllipsoidShape:
    return assemble_shape_matrix(pca_raw(traj_z), mode=mode,
                                 floor_ratio=floor_ratio)


def save_shape(shape: EllipsoidShape, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"A": shape.A.tolist()}, fh, indent=1)


def load_shape(path) -> EllipsoidShape:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "A" not in data:
        raise ShapingError(f"{path}: missing 'A'")
    return EllipsoidShape(A=np.array(data["A"], dtype=float), provenance="file")
