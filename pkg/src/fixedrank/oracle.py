"""Brute-force reference implementations used only by tests.

Everything here trades speed for directness: explicit projector matrices,
literal retraction formulas with explicit inverses, a Jacobi eigensolver,
classical Gram-Schmidt, and hard size guards so an accidental production
use fails fast.  None of these share code with the production modules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ResourceLimitError, SingularCoreError
from .operators import ProblemInstance

EIG_SIZE_LIMIT = 2048
FD_SIZE_LIMIT = 1024


@dataclass(frozen=True)
class DenseProjectors:
    """Explicit projection matrices for a pair of orthonormal factors."""

    p_u: np.ndarray
    p_v: np.ndarray
    p_u_perp: np.ndarray
    p_v_perp: np.ndarray
    kron_projector: np.ndarray

    @classmethod
    def from_factors(cls, u: np.ndarray, v: np.ndarray) -> "DenseProjectors":
        p_u = u @ u.T
        p_v = v @ v.T
        p_u_perp = np.eye(u.shape[0]) - p_u
        p_v_perp = np.eye(v.shape[0]) - p_v
        kron = np.eye(u.shape[0] * v.shape[0]) - np.kron(p_v_perp, p_u_perp)
        return cls(p_u, p_v, p_u_perp, p_v_perp, kron)


def naive_tangent_project(proj: DenseProjectors, z: np.ndarray) -> np.ndarray:
    """Literal dense evaluation of P_U Z + Z P_V - P_U Z P_V."""
    return proj.p_u @ z + z @ proj.p_v - proj.p_u @ z @ proj.p_v


def naive_orthographic(
    x_dense: np.ndarray,
    u: np.ndarray,
    s: np.ndarray,
    v: np.ndarray,
    n_dense: np.ndarray,
) -> np.ndarray:
    """Literal orthographic retraction with an explicit r-by-r inverse."""
    moved = x_dense + n_dense
    core = u.T @ moved @ v
    core_s = np.linalg.svd(core, compute_uv=False)
    if core_s[-1] <= 1e-12 * max(core_s[0], 1.0):
        raise SingularCoreError("reference retraction core is singular")
    return moved @ v @ np.linalg.inv(core) @ u.T @ moved


def dense_eig_general(a: np.ndarray) -> np.ndarray:
    """All eigenvalues of a general square matrix, sorted by descending modulus."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("expected a square matrix")
    if a.shape[0] > EIG_SIZE_LIMIT:
        raise ResourceLimitError(f"reference eigensolver limited to {EIG_SIZE_LIMIT}")
    values = np.linalg.eigvals(a)
    return values[np.argsort(-np.abs(values))]


def momentum_radius_via_spectrum(h: np.ndarray, eta: float) -> float:
    """Spectral radius of the two-step momentum matrix built on a one-step matrix h.

    Eigensolves h densely and maximizes the root moduli of
    x^2 - (1+eta) lam x + eta lam over the complete spectrum, so it checks
    both the spectrum and the extreme-eigenvalue reduction used in
    production.
    """
    radius = 0.0
    for lam in dense_eig_general(h):
        b = (1.0 + eta) * lam
        sq = np.sqrt(b * b - 4.0 * eta * lam + 0j)
        radius = max(radius, abs((b + sq) / 2.0), abs((b - sq) / 2.0))
    return radius


def fd_gradient_check(inst: ProblemInstance, x: np.ndarray, h: float) -> float:
    """Max deviation between central finite differences and the analytic gradient.

    The deviation is scaled by max(1, largest analytic entry), so it reads
    as absolute at a stationary point and relative elsewhere.
    """
    if not 1e-8 <= h <= 1e-3:
        raise InvalidInputError("finite-difference step must be in [1e-8, 1e-3]")
    n1, n2 = inst.shape
    if n1 * n2 > FD_SIZE_LIMIT:
        raise ResourceLimitError(f"finite-difference check limited to {FD_SIZE_LIMIT} entries")
    x = np.asarray(x, dtype=float)
    analytic = inst.gradient(x)
    scale = max(1.0, float(np.max(np.abs(analytic))))
    worst = 0.0
    for i in range(n1):
        for j in range(n2):
            bump = np.zeros((n1, n2))
            bump[i, j] = h
            fd = (inst.loss(x + bump) - inst.loss(x - bump)) / (2.0 * h)
            worst = max(worst, abs(fd - analytic[i, j]) / scale)
    return worst


def jacobi_sym_eig(
    a: np.ndarray, sweeps: int = 50, tol: float = 1e-14
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (values descending, vectors as columns).  Independent of the
    LAPACK-backed production path.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise InvalidInputError("expected a square matrix")
    if n > 64:
        raise ResourceLimitError("Jacobi reference limited to n <= 64")
    m = 0.5 * (a + a.T)
    vecs = np.eye(n)
    norm = np.linalg.norm(m)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(m**2) - np.sum(np.diag(m) ** 2))
        if off <= tol * max(norm, 1.0):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(m[p, q]) <= 1e-300:
                    continue
                theta = 0.5 * (m[q, q] - m[p, p]) / m[p, q]
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                m = rot.T @ m @ rot
                vecs = vecs @ rot
    values = np.diag(m).copy()
    order = np.argsort(values)[::-1]
    return values[order], vecs[:, order]


def gram_schmidt_qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt thin QR with a nonnegative R diagonal.

    Full column rank required; a collapsing column raises rather than
    producing a meaningless basis.
    """
    a = np.asarray(a, dtype=float)
    n, k = a.shape
    if n < k:
        raise InvalidInputError("Gram-Schmidt reference expects rows >= cols")
    q = np.zeros((n, k))
    r = np.zeros((k, k))
    scale = max(np.linalg.norm(a), 1.0)
    for j in range(k):
        w = a[:, j].copy()
        for i in range(j):
            r[i, j] = q[:, i] @ w
            w = w - r[i, j] * q[:, i]
        # second orthogonalization pass for numerical robustness
        for i in range(j):
            corr = q[:, i] @ w
            r[i, j] += corr
            w = w - corr * q[:, i]
        r[j, j] = np.linalg.norm(w)
        if r[j, j] <= 1e-12 * scale:
            raise InvalidInputError("Gram-Schmidt reference needs full column rank")
        q[:, j] = w / r[j, j]
    return q, r


def selection_matrices(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Explicit selection matrices splitting vectorized entries into observed
    and unobserved columns (column-major vec enumeration)."""
    mask = np.asarray(mask, dtype=bool)
    flat = mask.ravel(order="F")
    n = flat.size
    eye = np.eye(n)
    return eye[:, flat], eye[:, ~flat]
