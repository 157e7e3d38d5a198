"""Dense linear-algebra kernels used throughout the package.

All factorizations are deterministic: the sign ambiguity of SVD and
eigenvector columns is resolved by making the largest-magnitude entry of
each left-factor column nonnegative, and QR is normalized to a nonnegative
R diagonal.  Singular/eigen values are treated as zero when they fall below
``ZERO_RTOL`` times the largest value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInputError

# Relative cutoff below which a singular/eigen value counts as zero.
ZERO_RTOL = 1e-9


def _require_finite(a: np.ndarray, name: str = "input") -> None:
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")


def fix_column_signs(u: np.ndarray, *coupled: np.ndarray) -> tuple[np.ndarray, ...]:
    """Flip column signs so each column of ``u`` has a nonnegative largest-magnitude entry.

    Any ``coupled`` matrices get the same per-column flips (e.g. the matching
    V factor of an SVD).
    """
    u = u.copy()
    coupled = tuple(c.copy() for c in coupled)
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
            for c in coupled:
                c[:, j] = -c[:, j]
    return (u, *coupled)


@dataclass(frozen=True)
class SvdTriple:
    """Compact SVD factors U, s, V with ``A = U @ diag(s) @ V.T``."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T

    @property
    def rank(self) -> int:
        if self.s.size == 0 or self.s[0] <= 0.0:
            return 0
        return int(np.sum(self.s > ZERO_RTOL * self.s[0]))


def thin_svd(a: np.ndarray) -> SvdTriple:
    """Thin SVD with deterministic signs; k = min(rows, cols)."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInputError("thin_svd expects a nonempty 2-D array")
    _require_finite(a, "thin_svd input")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    v = vt.T
    u, v = fix_column_signs(u, v)
    return SvdTriple(u, s, v)


def truncate_rank(a: np.ndarray, r: int) -> SvdTriple:
    """Leading-r SVD factors of ``a`` (the Frobenius-nearest rank-<=r matrix)."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise InvalidInputError("truncate_rank expects a 2-D array")
    if not 1 <= r <= min(a.shape):
        raise InvalidInputError(f"rank {r} out of range for shape {a.shape}")
    full = thin_svd(a)
    return SvdTriple(full.u[:, :r], full.s[:r], full.v[:, :r])


def qr_thin(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR with nonnegative diagonal of R; requires rows >= cols."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise InvalidInputError("qr_thin expects rows >= cols")
    _require_finite(a, "qr_thin input")
    q, r = np.linalg.qr(a)
    d = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * d, d[:, None] * r


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix, values descending.

    Returns ``(values, vectors)`` with ``a @ vectors = vectors @ diag(values)``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("sym_eig expects a square matrix")
    _require_finite(a, "sym_eig input")
    scale = max(1.0, float(np.linalg.norm(a)))
    if np.linalg.norm(a - a.T) > 1e-10 * scale:
        raise InvalidInputError("sym_eig input is not symmetric within tolerance")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    (v,) = fix_column_signs(v)
    return w, v


class PowerEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def power_spectral_radius(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    iters: int = 5000,
    tol: float = 1e-8,
    seed: int = 0,
) -> PowerEstimate:
    """Estimate the largest eigenvalue modulus of a linear map.

    Uses norm ratios over a lag-2 window, so the moduli of complex-conjugate
    leading pairs are captured (a single-step Rayleigh quotient would
    oscillate for such maps).  Returns the best estimate with ``converged``
    False if the tolerance was not reached within ``iters`` applications.
    """
    if dim < 1:
        raise InvalidInputError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for k in range(0, iters, 2):
        w = apply(apply(v))
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return PowerEstimate(0.0, True, k + 2)
        new_estimate = np.sqrt(norm)
        v = w / norm
        if abs(new_estimate - estimate) <= tol * max(1.0, new_estimate):
            return PowerEstimate(new_estimate, True, k + 2)
        estimate = new_estimate
    return PowerEstimate(estimate, False, iters)
