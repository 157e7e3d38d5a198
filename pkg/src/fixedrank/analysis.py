"""Closed-form local convergence rates from the projected measurement spectrum.

Near a rank-r solution the error obeys a linear recursion whose one-step
matrix is P (I - mu Theta), with P the Kronecker projector onto the
vectorized tangent space at the solution.  Everything here derives from
the extreme nonzero eigenvalues of P Theta P: optimal and limiting
stepsizes, exact-line-search rates, and the two-step momentum iteration
whose root moduli give the accelerated rates and the damping landscape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .errors import DegenerateSpectrumError, InvalidInputError, ResourceLimitError
from .manifold import FixedRankPoint

MOMENTUM_MATRIX_SIZE_LIMIT = 1024


@dataclass(frozen=True)
class SpectralReport:
    """Extreme projected eigenvalues and every rate parameter derived from them."""

    lam_max: float
    lam_min: float              # smallest nonzero eigenvalue
    kappa: float                # lam_max / lam_min
    step_opt: float             # 2 / (lam_max + lam_min): best constant stepsize
    step_limit: float           # 2 / lam_max: divergence boundary
    accel_step: float           # 4 / (lam_min + 3 lam_max)
    accel_momentum: float       # critical momentum paired with accel_step
    accel_rate: float           # 1 - sqrt(4 lam_min / (lam_min + 3 lam_max))
    theta_lam_max: float        # largest eigenvalue of the unprojected Theta
    spectrum: np.ndarray        # full descending spectrum of P Theta P
    nonzero_count: int
    shape: tuple[int, int]
    rank: int

    @property
    def rate_constant_opt(self) -> float:
        """(kappa - 1) / (kappa + 1): the best constant-stepsize contraction."""
        return (self.kappa - 1.0) / (self.kappa + 1.0)

    def stepsize_condition_ok(self, mu: float, tol: float = 1e-9) -> bool:
        """Whether ||I - mu Theta|| <= 1 holds for the unprojected operator."""
        return mu * self.theta_lam_max - 1.0 <= 1.0 + tol

    def predicted_rates(self) -> dict[str, float]:
        return {
            "iht_opt_step": self.rate_constant_opt,
            "grad_els_worst": self.rate_constant_opt,
            "accelerated_opt": self.accel_rate,
            "accelerated_restart": self.accel_rate,
        }

    def to_json(self) -> str:
        doc = {
            "lam_max": self.lam_max,
            "lam_min": self.lam_min,
            "kappa": self.kappa,
            "step_opt": self.step_opt,
            "step_limit": self.step_limit,
            "accel_step": self.accel_step,
            "accel_momentum": self.accel_momentum,
            "accel_rate": self.accel_rate,
            "theta_lam_max": self.theta_lam_max,
            "nonzero_count": self.nonzero_count,
            "shape": list(self.shape),
            "rank": self.rank,
            "predicted_rates": self.predicted_rates(),
            "spectrum": self.spectrum.tolist(),
        }
        return json.dumps(doc, indent=2)


@dataclass(frozen=True)
class LandscapePoint:
    mu: float
    eta: float
    rho: float
    regime: str  # overdamped | critical | underdamped | divergent


def kron_projector(xstar: FixedRankPoint) -> np.ndarray:
    """Projector onto the vectorized tangent space at xstar (column-major vec)."""
    pu_perp = np.eye(xstar.shape[0]) - xstar.u @ xstar.u.T
    pv_perp = np.eye(xstar.shape[1]) - xstar.v @ xstar.v.T
    n = xstar.shape[0] * xstar.shape[1]
    return np.eye(n) - np.kron(pv_perp, pu_perp)


def projected_theta_spectrum(
    theta: np.ndarray, xstar: FixedRankPoint, zero_rtol: float = linalg.ZERO_RTOL
) -> SpectralReport:
    """Extreme nonzero eigenvalues of the projected measurement matrix.

    P Theta shares its nonzero spectrum with the symmetric P Theta P
    (P is an orthogonal projector), so a symmetric eigensolve suffices.
    The projector contributes an exact null space that floating point
    blurs; eigenvalues below zero_rtol times the largest count as zero.
    """
    theta = np.asarray(theta, dtype=float)
    n1, n2 = xstar.shape
    if theta.shape != (n1 * n2, n1 * n2):
        raise InvalidInputError(
            f"theta shape {theta.shape} does not match instance size {n1 * n2}"
        )
    proj = kron_projector(xstar)
    sym = proj @ theta @ proj
    values, _ = linalg.sym_eig(0.5 * (sym + sym.T))
    lam_max = float(values[0])
    if lam_max <= 0.0 or not np.isfinite(lam_max):
        raise DegenerateSpectrumError("projected measurement matrix has no positive spectrum")
    nonzero = values[values > zero_rtol * lam_max]
    lam_min = float(nonzero[-1])
    kappa = lam_max / lam_min
    accel_step = 4.0 / (lam_min + 3.0 * lam_max)
    root = np.sqrt(accel_step * lam_min)
    theta_lam_max = float(np.linalg.eigvalsh(0.5 * (theta + theta.T))[-1])
    return SpectralReport(
        lam_max=lam_max,
        lam_min=lam_min,
        kappa=kappa,
        step_opt=2.0 / (lam_max + lam_min),
        step_limit=2.0 / lam_max,
        accel_step=accel_step,
        accel_momentum=(1.0 - root) / (1.0 + root),
        accel_rate=1.0 - root,
        theta_lam_max=theta_lam_max,
        spectrum=values,
        nonzero_count=int(nonzero.size),
        shape=(n1, n2),
        rank=xstar.rank,
    )


def rate_constant_step(report: SpectralReport, mu: float) -> float:
    """Contraction factor of the constant-stepsize hard-thresholded iteration."""
    if mu <= 0:
        raise InvalidInputError("stepsize must be positive")
    return max(1.0 - mu * report.lam_min, mu * report.lam_max - 1.0)


def _els_rate(lam_max: float, lam_min: float, mu: float) -> float:
    lo, hi = 1.0 / lam_max, 1.0 / lam_min
    slack = 1e-9 * (hi - lo + 1.0)
    if not lo - slack <= mu <= hi + slack:
        raise InvalidInputError(
            f"stepsize {mu} outside the line-search bracket [{lo}, {hi}]"
        )
    value = 1.0 - mu * mu * lam_max * lam_min / (mu * (lam_max + lam_min) - 1.0)
    return float(np.sqrt(max(value, 0.0)))


def rate_exact_line_search(report: SpectralReport, mu_tilde: float) -> float:
    """Asymptotic rate of exact-line-search descent for a measured stepsize.

    Always at most (kappa-1)/(kappa+1); the bound is attained when the
    stepsize sits at the midpoint 2/(lam_max+lam_min).
    """
    return _els_rate(report.lam_max, report.lam_min, mu_tilde)


def quadratic_line_search_rate(
    q_spectrum: tuple[float, float], mu_tilde: float
) -> float:
    """Same two-step rate formula for an unconstrained quadratic's spectrum."""
    lam_max, lam_min = q_spectrum
    if lam_max < lam_min:
        raise InvalidInputError("spectrum must be (lam_max, lam_min) with lam_max >= lam_min")
    return _els_rate(lam_max, lam_min, mu_tilde)


def momentum_root_moduli(lam: float, mu: float, eta: float) -> tuple[complex, complex]:
    """Roots of the per-mode quadratic of the two-step momentum iteration.

    The block for eigenvalue lam has characteristic polynomial
    x^2 - (1+eta)(1-mu lam) x + eta (1-mu lam); complex roots share the
    modulus sqrt(eta (1 - mu lam)).
    """
    h = 1.0 - mu * lam
    b = (1.0 + eta) * h
    disc = b * b - 4.0 * eta * h
    sq = np.sqrt(complex(disc))
    return ((b + sq) / 2.0, (b - sq) / 2.0)


def critical_momentum(mu_lam: float) -> float:
    """Momentum at which the mode with mu*lam switches between real and complex roots."""
    if mu_lam < 0:
        raise InvalidInputError("mu * lam must be nonnegative")
    if mu_lam > 1.0:
        return 0.0
    root = np.sqrt(mu_lam)
    return (1.0 - root) / (1.0 + root)


def rate_momentum(report: SpectralReport, mu: float, eta: float) -> LandscapePoint:
    """Spectral radius of the momentum iteration at (mu, eta), with damping regime.

    The radius over the whole spectrum is attained at the extreme
    eigenvalues, so only the two boundary modes are evaluated.
    """
    if mu <= 0:
        raise InvalidInputError("stepsize must be positive")
    if eta < 0:
        raise InvalidInputError("momentum must be nonnegative")
    roots = momentum_root_moduli(report.lam_min, mu, eta) + momentum_root_moduli(
        report.lam_max, mu, eta
    )
    rho = float(max(abs(r) for r in roots))
    boundary = critical_momentum(mu * report.lam_min)
    if rho > 1.0 + 1e-12:
        regime = "divergent"
    elif abs(eta - boundary) <= 1e-9 * max(1.0, boundary):
        regime = "critical"
    elif eta < boundary:
        regime = "overdamped"
    else:
        regime = "underdamped"
    return LandscapePoint(mu=mu, eta=eta, rho=rho, regime=regime)


def optimal_accelerated_params(report: SpectralReport) -> tuple[float, float, float]:
    """Closed-form optimal (stepsize, momentum, rate) of the momentum iteration."""
    return report.accel_step, report.accel_momentum, report.accel_rate


def lazy_momentum_average_rate(
    report: SpectralReport, t0: int, tn: int, d: int
) -> float:
    """Average contraction over iterations [t0, tn] for the (t-1)/(t+d) schedule.

    The geometric mean of the per-iteration factors sqrt(eta_t (1 - mu lam_min))
    telescopes into a finite product of d+1 boundary terms.
    """
    if not 1 < t0 < tn:
        raise InvalidInputError("need 1 < t0 < tn")
    if d < 0:
        raise InvalidInputError("d must be >= 0")
    product = 1.0
    for i in range(d + 1):
        product *= (t0 + i - 1.0) / (tn + i - 1.0)
    base = 1.0 - report.accel_step * report.lam_min
    return product ** (1.0 / (2.0 * (tn - t0 + 1.0))) * np.sqrt(base)


def momentum_boundary_crossing(report: SpectralReport, mu: float, tol: float = 1e-12) -> float:
    """Momentum where the slow-mode and fast-mode root moduli tie, for
    stepsizes between the accelerated and the constant-step optimum.

    Found by bisection on the modulus difference rather than by a printed
    closed form; the defining equation is explicit and better conditioned.
    """
    if not report.accel_step <= mu <= report.step_opt:
        raise InvalidInputError("crossing is defined for mu between accel_step and step_opt")

    def gap(eta: float) -> float:
        slow = max(abs(r) for r in momentum_root_moduli(report.lam_min, mu, eta))
        fast = max(abs(r) for r in momentum_root_moduli(report.lam_max, mu, eta))
        return slow - fast

    lo, hi = 0.0, critical_momentum(mu * report.lam_min)
    if gap(lo) < 0:
        return lo
    if gap(hi) > 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def assemble_gradient_matrix(
    theta: np.ndarray, xstar: FixedRankPoint, mu: float
) -> np.ndarray:
    """Dense one-step error matrix P (I - mu Theta) for oracle comparisons."""
    theta = np.asarray(theta, dtype=float)
    proj = kron_projector(xstar)
    return proj @ (np.eye(theta.shape[0]) - mu * theta)


def assemble_momentum_matrix(
    theta: np.ndarray, xstar: FixedRankPoint, mu: float, eta: float
) -> np.ndarray:
    """Dense two-step block matrix [[(1+eta)H, -eta H], [I, 0]] for oracle checks."""
    n = theta.shape[0]
    if n > MOMENTUM_MATRIX_SIZE_LIMIT:
        raise ResourceLimitError(
            f"momentum matrix assembly limited to {MOMENTUM_MATRIX_SIZE_LIMIT} unknowns"
        )
    h = assemble_gradient_matrix(theta, xstar, mu)
    top = np.hstack([(1.0 + eta) * h, -eta * h])
    bottom = np.hstack([np.eye(n), np.zeros((n, n))])
    return np.vstack([top, bottom])


def landscape_sweep(
    report: SpectralReport, mus: np.ndarray, etas: np.ndarray
) -> list[LandscapePoint]:
    """Evaluate the momentum-rate landscape over a (mu, eta) grid, mu-major order."""
    return [rate_momentum(report, float(m), float(e)) for m in mus for e in etas]


def landscape_to_csv(points: list[LandscapePoint], path: str | Path) -> None:
    lines = ["mu,eta,rho,regime"]
    for p in points:
        lines.append(f"{p.mu!r},{p.eta!r},{p.rho!r},{p.regime}")
    Path(path).write_text("\n".join(lines) + "\n")
