"""Geometry of the fixed-rank matrix manifold.

Points are kept in compact SVD form (U, s, V) and tangent vectors in the
factored form (M, Up, Vp) with Up'U = Vp'V = 0.  Retractions are computed
through QR factorizations of tall-skinny blocks plus a small SVD, so no
operation here densifies beyond n-by-2r products; dense embeddings exist
for validation and measurement only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import linalg
from .errors import InvalidInputError, RankDeficiencyError, SingularCoreError


@dataclass(frozen=True)
class FixedRankPoint:
    """Rank-r matrix in compact SVD form: U @ diag(s) @ V.T."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    @property
    def sigma_min(self) -> float:
        return float(self.s[-1])

    def dense(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T

    def norm(self) -> float:
        return float(np.linalg.norm(self.s))

    @classmethod
    def from_matrix(cls, a: np.ndarray, r: int) -> "FixedRankPoint":
        """Rank-r truncation of a dense matrix, as a manifold point."""
        triple = linalg.truncate_rank(a, r)
        if triple.s[0] <= 0.0 or triple.s[-1] <= linalg.ZERO_RTOL * triple.s[0]:
            raise RankDeficiencyError(
                f"matrix has numerical rank below {r}; cannot place it on the manifold"
            )
        return cls(triple.u, triple.s, triple.v)

    @classmethod
    def from_triple(cls, triple: linalg.SvdTriple) -> "FixedRankPoint":
        return cls(triple.u, triple.s, triple.v)

    def check_valid(self, tol: float = 1e-10) -> None:
        r = self.rank
        if np.linalg.norm(self.u.T @ self.u - np.eye(r)) > tol:
            raise InvalidInputError("U factor is not column-orthonormal")
        if np.linalg.norm(self.v.T @ self.v - np.eye(r)) > tol:
            raise InvalidInputError("V factor is not column-orthonormal")
        if np.any(self.s <= 0.0) or np.any(np.diff(self.s) > 0.0):
            raise InvalidInputError("singular values must be positive and descending")


@dataclass(frozen=True)
class TangentVector:
    """Element of the tangent space at ``base``: U M V' + Up V' + U Vp'."""

    base: FixedRankPoint
    m: np.ndarray
    up: np.ndarray
    vp: np.ndarray

    def dense(self) -> np.ndarray:
        x = self.base
        return x.u @ (self.m @ x.v.T + self.vp.T) + self.up @ x.v.T

    def norm2(self) -> float:
        # The three terms are mutually Frobenius-orthogonal.
        return float(
            np.sum(self.m**2) + np.sum(self.up**2) + np.sum(self.vp**2)
        )

    def norm(self) -> float:
        return float(np.sqrt(self.norm2()))

    def scale(self, c: float) -> "TangentVector":
        return TangentVector(self.base, c * self.m, c * self.up, c * self.vp)

    def add(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(
            self.base, self.m + other.m, self.up + other.up, self.vp + other.vp
        )

    def inner(self, other: "TangentVector") -> float:
        return float(
            np.sum(self.m * other.m)
            + np.sum(self.up * other.up)
            + np.sum(self.vp * other.vp)
        )

    def factored_pair(self) -> tuple[np.ndarray, np.ndarray]:
        """(W1, W2) with dense embedding W1 @ W2.T, each n-by-2r."""
        x = self.base
        w1 = np.hstack([x.u @ self.m + self.up, x.u])
        w2 = np.hstack([x.v, self.vp])
        return w1, w2

    @classmethod
    def zero(cls, base: FixedRankPoint) -> "TangentVector":
        n1, n2 = base.shape
        r = base.rank
        return cls(base, np.zeros((r, r)), np.zeros((n1, r)), np.zeros((n2, r)))


def embed(t: TangentVector) -> np.ndarray:
    """Dense matrix represented by a factored tangent vector."""
    return t.dense()


def tangent_project(x: FixedRankPoint, z: np.ndarray) -> TangentVector:
    """Orthogonal projection of a dense matrix onto the tangent space at x."""
    z = np.asarray(z, dtype=float)
    if z.shape != x.shape:
        raise InvalidInputError(f"shape mismatch: point {x.shape}, matrix {z.shape}")
    zv = z @ x.v
    m = x.u.T @ zv
    up = zv - x.u @ m
    ztu = z.T @ x.u
    vp = ztu - x.v @ m.T
    return TangentVector(x, m, up, vp)


def riemannian_gradient(x: FixedRankPoint, g: np.ndarray) -> TangentVector:
    """Tangent-space projection of the Euclidean gradient at x."""
    return tangent_project(x, g)


def retract_projective(x: FixedRankPoint, t: TangentVector) -> FixedRankPoint:
    """Rank-r truncation of x + t without forming a large SVD.

    QR-factors the out-of-subspace blocks and truncates the SVD of the
    2r-by-2r core, which matches the dense truncated SVD of the sum.
    """
    if t.base is not x and t.base.shape != x.shape:
        raise InvalidInputError("tangent vector is not based at the given point")
    r = x.rank
    qu, ru = linalg.qr_thin(t.up)
    qv, rv = linalg.qr_thin(t.vp)
    core = np.zeros((2 * r, 2 * r))
    core[:r, :r] = np.diag(x.s) + t.m
    core[:r, r:] = rv.T
    core[r:, :r] = ru
    cu, cs, cvt = np.linalg.svd(core)
    if cs[r - 1] <= linalg.ZERO_RTOL * cs[0]:
        raise RankDeficiencyError("projective retraction left the rank-r manifold")
    u_new = np.hstack([x.u, qu]) @ cu[:, :r]
    v_new = np.hstack([x.v, qv]) @ cvt[:r, :].T
    u_new, v_new = linalg.fix_column_signs(u_new, v_new)
    return FixedRankPoint(u_new, cs[:r], v_new)


def retract_orthographic(x: FixedRankPoint, t: TangentVector) -> FixedRankPoint:
    """Orthographic retraction: move along the normal space back to the manifold.

    Computed in SVD form from two QR factorizations and an r-by-r SVD.  The
    r-by-r core here is Sigma + M; a numerically singular core means the
    step left the retraction's chart and raises rather than regularizing.
    """
    r = x.rank
    core = np.diag(x.s) + t.m
    core_s = np.linalg.svd(core, compute_uv=False)
    if core_s[0] <= 0.0 or core_s[-1] <= linalg.ZERO_RTOL * core_s[0]:
        raise SingularCoreError("orthographic retraction core is numerically singular")
    a1 = x.u @ core + t.up            # (x + t) @ V
    a2 = x.v @ core.T + t.vp          # (x + t).T @ U
    q1, r1 = linalg.qr_thin(a1)
    q2, r2 = linalg.qr_thin(a2)
    # b = r1 @ inv(core) @ r2.T, via QR of the core for conditioning
    qc, rc = np.linalg.qr(core)
    b = r1 @ solve_triangular(rc, qc.T @ r2.T)
    bu, bs, bvt = np.linalg.svd(b)
    if bs[0] <= 0.0 or bs[-1] <= linalg.ZERO_RTOL * bs[0]:
        raise SingularCoreError("orthographic retraction produced a rank-deficient point")
    u_new = q1 @ bu
    v_new = q2 @ bvt.T
    u_new, v_new = linalg.fix_column_signs(u_new, v_new)
    return FixedRankPoint(u_new, bs, v_new)


def inverse_orthographic(x: FixedRankPoint, y: FixedRankPoint) -> TangentVector:
    """Tangent projection of y - x: the closed-form inverse of the orthographic retraction."""
    if y.shape != x.shape:
        raise InvalidInputError(f"shape mismatch: {x.shape} vs {y.shape}")
    # (y - x) @ V and (y - x).T @ U without densifying: the x terms drop
    # out of the orthogonal complements.
    w1 = y.u * y.s
    yv = w1 @ (y.v.T @ x.v)
    m = x.u.T @ yv - np.diag(x.s)
    up = yv - x.u @ (x.u.T @ yv)
    ytu = y.v @ (w1.T @ x.u)
    vp = ytu - x.v @ (x.v.T @ ytu)
    return TangentVector(x, m, up, vp)
