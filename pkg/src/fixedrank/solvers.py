"""Iterative solvers for rank-constrained least squares.

Seven algorithms share one runner: hard-thresholded gradient descent with
constant or normalized stepsizes, projected gradient with exact line
search, its Nesterov-accelerated variant (two-SVD and one-SVD orderings),
and the Riemannian versions built on tangent-space projection plus
retraction, including the momentum scheme with adaptive restart.  Each run
produces an iteration trace (residual, loss, stepsize, momentum, restart
flags, wall time) that downstream analysis consumes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import linalg
from .errors import (
    FixedRankError,
    InvalidInputError,
    UnmeasuredDirectionError,
)
from .manifold import (
    FixedRankPoint,
    TangentVector,
    inverse_orthographic,
    retract_orthographic,
    retract_projective,
    tangent_project,
)
from .operators import ProblemInstance, SensingOperator

ALGORITHMS = (
    "iht",
    "grad",
    "nag",
    "nag_one_svd",
    "rgrad",
    "rnag",
    "rnag_restart",
)
RIEMANNIAN = ("rgrad", "rnag", "rnag_restart")

TRACE_COLUMNS = ("t", "residual", "loss", "mu", "eta", "restart", "wall_time_ns")


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str
    retraction: str = "orthographic"  # projective | orthographic (Riemannian only)
    stepsize: str = "els"  # constant | els | niht_u | niht_v | niht_uv
    mu: float | None = None  # value for the constant stepsize
    momentum: str = "lazy"  # lazy | constant | restart
    lazy_d: int = 2
    momentum_q: float | None = None  # constant momentum: eta = (1-sqrt q)/(1+sqrt q)
    max_iters: int = 500
    stop_tol_resid: float = 1e-8
    stop_tol_grad: float = 0.0
    divergence_factor: float = 1e6
    warm_restart: bool = True

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm in RIEMANNIAN and self.retraction not in (
            "projective",
            "orthographic",
        ):
            raise InvalidInputError(f"unknown retraction {self.retraction!r}")
        if self.algorithm in ("rnag", "rnag_restart") and self.retraction != "orthographic":
            raise InvalidInputError(
                "momentum on the manifold needs the orthographic retraction "
                "(its inverse has a closed form)"
            )
        if self.stepsize not in ("constant", "els", "niht_u", "niht_v", "niht_uv"):
            raise InvalidInputError(f"unknown stepsize rule {self.stepsize!r}")
        if self.stepsize == "constant" and (self.mu is None or self.mu <= 0):
            raise InvalidInputError("constant stepsize needs mu > 0")
        if self.momentum not in ("lazy", "constant", "restart"):
            raise InvalidInputError(f"unknown momentum rule {self.momentum!r}")
        if self.lazy_d < 0:
            raise InvalidInputError("lazy momentum parameter d must be >= 0")
        if self.momentum == "constant":
            if self.momentum_q is None or not 0.0 < self.momentum_q <= 1.0:
                raise InvalidInputError("constant momentum needs q in (0, 1]")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    residual: float
    loss: float
    mu: float
    eta: float
    restart: bool
    wall_time_ns: int


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "max-iters"  # converged | max-iters | diverged | error
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([rec.residual for rec in self.records])

    @property
    def losses(self) -> np.ndarray:
        return np.array([rec.loss for rec in self.records])

    @property
    def stepsizes(self) -> np.ndarray:
        return np.array([rec.mu for rec in self.records])

    @property
    def iterations(self) -> int:
        return self.records[-1].t if self.records else 0

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual if self.records else float("nan")

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        lines = [",".join(TRACE_COLUMNS)]
        for rec in self.records:
            lines.append(
                f"{rec.t},{rec.residual!r},{rec.loss!r},{rec.mu!r},"
                f"{rec.eta!r},{int(rec.restart)},{rec.wall_time_ns}"
            )
        path.write_text("\n".join(lines) + "\n")
        sidecar = {
            "status": self.status,
            "message": self.message,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
        }
        Path(str(path) + ".meta.json").write_text(json.dumps(sidecar, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "IterationTrace":
        path = Path(path)
        lines = path.read_text().strip().splitlines()
        if lines[0] != ",".join(TRACE_COLUMNS):
            raise InvalidInputError(f"unexpected trace header in {path}")
        records = []
        for line in lines[1:]:
            t, residual, loss, mu, eta, restart, wall = line.split(",")
            records.append(
                IterationRecord(
                    int(t), float(residual), float(loss), float(mu),
                    float(eta), bool(int(restart)), int(wall),
                )
            )
        trace = cls(records=records)
        meta_path = Path(str(path) + ".meta.json")
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            trace.status = meta.get("status", trace.status)
            trace.message = meta.get("message", "")
        return trace


def momentum_schedule(
    kind: str, t: int, tau: int = 1, q: float = 1.0, d: int = 2
) -> float:
    """Momentum weight for iteration t, clamped to [0, 1].

    lazy: (t-1)/(t+d); constant: (1-sqrt(q))/(1+sqrt(q)); restart:
    (tau-1)/(tau+2) where tau counts iterations since the last reset.
    """
    if kind == "lazy":
        value = (t - 1.0) / (t + d) if t + d > 0 else 0.0
    elif kind == "constant":
        if not 0.0 < q <= 1.0:
            raise InvalidInputError("constant momentum needs q in (0, 1]")
        root = np.sqrt(q)
        value = (1.0 - root) / (1.0 + root)
    elif kind == "restart":
        if tau < 1:
            raise InvalidInputError("restart counter tau must be >= 1")
        value = (tau - 1.0) / (tau + 2.0)
    else:
        raise InvalidInputError(f"unknown momentum rule {kind!r}")
    return float(min(max(value, 0.0), 1.0))


def exact_line_search(g_riem: np.ndarray, op: SensingOperator) -> float:
    """Stepsize minimizing the quadratic loss along a projected gradient.

    Returns ||g||_F^2 / ||A(g)||_2^2.  A nonzero direction that the
    operator cannot see has no finite minimizer and raises.
    """
    num = float(np.sum(g_riem * g_riem))
    if num == 0.0:
        raise InvalidInputError("exact line search needs a nonzero direction")
    measured = op.apply(g_riem)
    den = float(measured @ measured)
    if den == 0.0:
        raise UnmeasuredDirectionError("search direction lies in the operator null space")
    return num / den


def _els_factored(grad: TangentVector, op: SensingOperator) -> float:
    num = grad.norm2()
    if num == 0.0:
        raise InvalidInputError("exact line search needs a nonzero direction")
    w1, w2 = grad.factored_pair()
    measured = op.apply_factored(w1, w2)
    den = float(measured @ measured)
    if den == 0.0:
        raise UnmeasuredDirectionError("search direction lies in the operator null space")
    return num / den


def niht_stepsize(
    g: np.ndarray, u: np.ndarray, v: np.ndarray, op: SensingOperator, variant: str
) -> float:
    """Normalized stepsizes restricted to the leading singular subspaces."""
    if variant == "niht_u":
        d = u @ (u.T @ g)
    elif variant == "niht_v":
        d = (g @ v) @ v.T
    elif variant == "niht_uv":
        d = u @ ((u.T @ g) @ v) @ v.T
    else:
        raise InvalidInputError(f"unknown normalized-stepsize variant {variant!r}")
    num = float(np.sum(d * d))
    if num == 0.0:
        raise InvalidInputError("normalized stepsize needs a nonzero restricted gradient")
    measured = op.apply(d)
    den = float(measured @ measured)
    if den == 0.0:
        raise UnmeasuredDirectionError("restricted gradient is unmeasured")
    return num / den


def projected_gradient(g: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """P_U g + g P_V - P_U g P_V for the subspaces spanned by u and v."""
    ug = u.T @ g
    gv = g @ v
    return u @ ug + gv @ v.T - u @ (ug @ v) @ v.T


def point_distance(x: FixedRankPoint, y: FixedRankPoint) -> float:
    """Frobenius distance between two factored points, without densifying.

    Stacks the scaled factors and reduces through two thin QRs, so the
    subtraction happens in a 2r-by-2r product and small distances are not
    lost to cancellation of large norms.
    """
    w1 = np.hstack([x.u * x.s, y.u * y.s])
    w2 = np.hstack([x.v, -y.v])
    r1 = np.linalg.qr(w1, mode="r")
    r2 = np.linalg.qr(w2, mode="r")
    return float(np.linalg.norm(r1 @ r2.T))


def _factored_loss(x: FixedRankPoint, inst: ProblemInstance) -> tuple[np.ndarray, float]:
    meas = inst.operator.apply_factored(x.u * x.s, x.v)
    rv = meas - inst.observations
    return rv, 0.5 * float(rv @ rv)


class _Recorder:
    """Accumulates trace rows and applies the stop/divergence policy."""

    def __init__(self, inst: ProblemInstance, cfg: SolverConfig):
        self.inst = inst
        self.cfg = cfg
        self.trace = IterationTrace()
        self.t0 = time.perf_counter_ns()
        self.initial_residual: float | None = None

    def record(
        self,
        t: int,
        residual: float,
        loss: float,
        mu: float = 0.0,
        eta: float = 0.0,
        restart: bool = False,
    ) -> str | None:
        """Append a row; return a terminal status if the run should stop."""
        self.trace.records.append(
            IterationRecord(
                t, residual, loss, mu, eta, restart,
                time.perf_counter_ns() - self.t0,
            )
        )
        if self.initial_residual is None:
            self.initial_residual = residual
        if not np.isfinite(residual) or not np.isfinite(loss):
            return "diverged"
        if residual > self.cfg.divergence_factor * max(self.initial_residual, 1e-300):
            return "diverged"
        if self.cfg.stop_tol_resid > 0 and residual <= self.cfg.stop_tol_resid:
            return "converged"
        return None

    def finish(self, status: str, message: str = "") -> IterationTrace:
        self.trace.status = status
        self.trace.message = message
        return self.trace


def _momentum_for(cfg: SolverConfig, t: int) -> float:
    if cfg.momentum == "constant":
        return momentum_schedule("constant", t, q=cfg.momentum_q)
    return momentum_schedule("lazy", t, d=cfg.lazy_d)


def run(inst: ProblemInstance, cfg: SolverConfig, x0: np.ndarray) -> IterationTrace:
    """Run the configured algorithm from x0 (truncated to the target rank).

    Stops on the residual threshold, the gradient threshold, divergence
    (residual beyond divergence_factor times the initial one, or
    non-finite values), or max_iters.  Step-level numerical failures are
    recorded in the trace status instead of being raised.
    """
    cfg.validate()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != inst.shape:
        raise InvalidInputError(f"x0 shape {x0.shape} != instance shape {inst.shape}")
    rec = _Recorder(inst, cfg)
    try:
        start = FixedRankPoint.from_matrix(x0, inst.rank)
    except FixedRankError as exc:
        rec.record(0, float("nan"), float("nan"))
        return rec.finish("error", f"initial truncation failed: {exc}")

    try:
        if cfg.algorithm in ("iht", "grad"):
            return _run_euclidean_simple(inst, cfg, start, rec)
        if cfg.algorithm == "nag":
            return _run_nag(inst, cfg, start, rec)
        if cfg.algorithm == "nag_one_svd":
            return _run_nag_one_svd(inst, cfg, start, rec)
        if cfg.algorithm == "rgrad":
            return _run_rgrad(inst, cfg, start, rec)
        return _run_rnag(inst, cfg, start, rec)
    except FixedRankError as exc:
        t = len(rec.trace.records)
        return rec.finish("error", f"iteration {t}: {exc}")


def _run_euclidean_simple(
    inst: ProblemInstance, cfg: SolverConfig, x: FixedRankPoint, rec: _Recorder
) -> IterationTrace:
    xd = x.dense()
    status = rec.record(0, inst.residual_norm(xd), inst.loss(xd))
    if status:
        return rec.finish(status)
    for t in range(1, cfg.max_iters + 1):
        g = inst.gradient(xd)
        if cfg.algorithm == "grad":
            direction = projected_gradient(g, x.u, x.v)
        else:
            direction = g
        dnorm = float(np.linalg.norm(direction))
        if cfg.stop_tol_grad > 0 and dnorm <= cfg.stop_tol_grad:
            return rec.finish("converged")
        if dnorm == 0.0:
            mu = 0.0
        elif cfg.stepsize == "constant":
            mu = float(cfg.mu)
        elif cfg.stepsize.startswith("niht"):
            mu = niht_stepsize(g, x.u, x.v, inst.operator, cfg.stepsize)
        else:
            mu = exact_line_search(direction, inst.operator)
        x = FixedRankPoint.from_matrix(xd - mu * direction, inst.rank)
        xd = x.dense()
        status = rec.record(t, inst.residual_norm(xd), inst.loss(xd), mu=mu)
        if status:
            return rec.finish(status)
    return rec.finish("max-iters")


def _run_nag(
    inst: ProblemInstance, cfg: SolverConfig, start: FixedRankPoint, rec: _Recorder
) -> IterationTrace:
    xc = start.dense()
    xp = xc
    status = rec.record(0, inst.residual_norm(xc), inst.loss(xc))
    if status:
        return rec.finish(status)
    for t in range(cfg.max_iters):
        eta = _momentum_for(cfg, t)
        y = xc + eta * (xc - xp) if eta != 0.0 else xc
        y_tri = linalg.truncate_rank(y, inst.rank)
        g = inst.gradient(y)
        gr = projected_gradient(g, y_tri.u, y_tri.v)
        gnorm = float(np.linalg.norm(gr))
        if cfg.stop_tol_grad > 0 and gnorm <= cfg.stop_tol_grad:
            return rec.finish("converged")
        mu = exact_line_search(gr, inst.operator) if gnorm > 0 else 0.0
        x_next = linalg.truncate_rank(y - mu * gr, inst.rank).reconstruct()
        xp, xc = xc, x_next
        status = rec.record(
            t + 1, inst.residual_norm(xc), inst.loss(xc), mu=mu, eta=eta
        )
        if status:
            return rec.finish(status)
    return rec.finish("max-iters")


def _run_nag_one_svd(
    inst: ProblemInstance, cfg: SolverConfig, start: FixedRankPoint, rec: _Recorder
) -> IterationTrace:
    # Reordered momentum iteration: truncate the extrapolated point first,
    # take the (untruncated) gradient step, then extrapolate.  One SVD per
    # iteration instead of two.
    z = start.dense()
    xc = start.dense()
    status = rec.record(0, inst.residual_norm(xc), inst.loss(xc))
    if status:
        return rec.finish(status)
    for t in range(cfg.max_iters):
        y_tri = linalg.truncate_rank(z, inst.rank)
        y = y_tri.reconstruct()
        g = inst.gradient(y)
        gr = projected_gradient(g, y_tri.u, y_tri.v)
        gnorm = float(np.linalg.norm(gr))
        if cfg.stop_tol_grad > 0 and gnorm <= cfg.stop_tol_grad:
            return rec.finish("converged")
        mu = exact_line_search(gr, inst.operator) if gnorm > 0 else 0.0
        x_next = y - mu * gr
        eta = _momentum_for(cfg, t)
        z = x_next + eta * (x_next - xc)
        xc = x_next
        status = rec.record(
            t + 1, inst.residual_norm(xc), inst.loss(xc), mu=mu, eta=eta
        )
        if status:
            return rec.finish(status)
    return rec.finish("max-iters")


def _riemannian_gradient_step(
    x: FixedRankPoint, inst: ProblemInstance, retraction: str
) -> tuple[FixedRankPoint, float, TangentVector, np.ndarray]:
    """One exact-line-search gradient step at x; returns (next, mu, grad, dense grad)."""
    rv, _ = _factored_loss(x, inst)
    z = inst.operator.adjoint(rv)
    grad = tangent_project(x, z)
    if grad.norm2() == 0.0:
        return x, 0.0, grad, z
    mu = _els_factored(grad, inst.operator)
    step = grad.scale(-mu)
    if retraction == "projective":
        return retract_projective(x, step), mu, grad, z
    return retract_orthographic(x, step), mu, grad, z


def _run_rgrad(
    inst: ProblemInstance, cfg: SolverConfig, x: FixedRankPoint, rec: _Recorder
) -> IterationTrace:
    _, loss = _factored_loss(x, inst)
    status = rec.record(0, point_distance(x, inst.ground_truth), loss)
    if status:
        return rec.finish(status)
    for t in range(1, cfg.max_iters + 1):
        rv, _ = _factored_loss(x, inst)
        z = inst.operator.adjoint(rv)
        grad = tangent_project(x, z)
        gnorm = grad.norm()
        if cfg.stop_tol_grad > 0 and gnorm <= cfg.stop_tol_grad:
            return rec.finish("converged")
        if gnorm == 0.0:
            mu = 0.0
        else:
            mu = _els_factored(grad, inst.operator)
            step = grad.scale(-mu)
            if cfg.retraction == "projective":
                x = retract_projective(x, step)
            else:
                x = retract_orthographic(x, step)
        _, loss = _factored_loss(x, inst)
        status = rec.record(t, point_distance(x, inst.ground_truth), loss, mu=mu)
        if status:
            return rec.finish(status)
    return rec.finish("max-iters")


def _run_rnag(
    inst: ProblemInstance, cfg: SolverConfig, start: FixedRankPoint, rec: _Recorder
) -> IterationTrace:
    adaptive = cfg.algorithm == "rnag_restart"
    xc = start
    xp = start
    prev_y: FixedRankPoint | None = None
    prev_grad_dense: np.ndarray | None = None
    prev_grad: TangentVector | None = None
    tau = 1
    warm_done = False
    euclid_ips: list[float] = []
    tangent_ips: list[float] = []
    _, loss = _factored_loss(xc, inst)
    residual = point_distance(xc, inst.ground_truth)
    status = rec.record(0, residual, loss)
    if status:
        return rec.finish(status)
    for t in range(cfg.max_iters):
        restart_flag = False
        if adaptive:
            if prev_y is not None:
                e_ip = _inner_grad_with_difference(prev_grad_dense, xc, xp)
                tv_curr = inverse_orthographic(prev_y, xc)
                tv_prev = inverse_orthographic(prev_y, xp)
                t_ip = prev_grad.inner(tv_curr) - prev_grad.inner(tv_prev)
                euclid_ips.append(e_ip)
                tangent_ips.append(t_ip)
                if e_ip > 0:
                    tau = 1
                    restart_flag = True
                else:
                    tau += 1
            if (
                cfg.warm_restart
                and not warm_done
                and residual <= 0.5 * inst.sigma_min_truth
            ):
                tau = 1
                warm_done = True
                restart_flag = True
            eta = momentum_schedule("restart", t, tau=tau)
        else:
            eta = _momentum_for(cfg, t)

        if eta == 0.0:
            y = xc
        else:
            back = inverse_orthographic(xc, xp)
            y = retract_orthographic(xc, back.scale(-eta))

        rv, _ = _factored_loss(y, inst)
        z = inst.operator.adjoint(rv)
        grad = tangent_project(y, z)
        gnorm = grad.norm()
        if cfg.stop_tol_grad > 0 and gnorm <= cfg.stop_tol_grad:
            return rec.finish("converged")
        if gnorm == 0.0:
            mu = 0.0
            x_next = y
        else:
            mu = _els_factored(grad, inst.operator)
            x_next = retract_orthographic(y, grad.scale(-mu))
        prev_y, prev_grad_dense, prev_grad = y, z, grad
        xp, xc = xc, x_next
        _, loss = _factored_loss(xc, inst)
        residual = point_distance(xc, inst.ground_truth)
        status = rec.record(t + 1, residual, loss, mu=mu, eta=eta, restart=restart_flag)
        if status:
            break
    else:
        status = "max-iters"
    if adaptive:
        rec.trace.extras["restart_euclid_ip"] = np.array(euclid_ips)
        rec.trace.extras["restart_tangent_ip"] = np.array(tangent_ips)
    return rec.finish(status)


def _inner_grad_with_difference(
    z: np.ndarray, x_curr: FixedRankPoint, x_prev: FixedRankPoint
) -> float:
    """<z, x_curr - x_prev> for a dense matrix z and factored points."""

    def inner(x: FixedRankPoint) -> float:
        zv = z @ x.v
        return float(np.sum(x.u * zv * x.s[None, :]))

    return inner(x_curr) - inner(x_prev)


def fitted_rate(
    trace: IterationTrace,
    window: int = 20,
    skip_restarts: bool = False,
    max_residual: float | None = None,
    floor: float = 0.0,
) -> float:
    """Geometric-mean contraction factor over the last recorded iterations.

    The asymptotic rate is a spectral radius, so transients are excluded by
    fitting only the last `window` residual ratios (optionally restricted
    to residuals below `max_residual`, e.g. a basin radius, and skipping
    restart iterations whose momentum reset perturbs the local slope).
    """
    res = trace.residuals
    restart = [rec.restart for rec in trace.records]
    ratios = []
    for i in range(len(res) - 1):
        if res[i] <= floor or res[i + 1] <= 0.0:
            continue
        if max_residual is not None and res[i] > max_residual:
            continue
        if skip_restarts and (restart[i + 1] or restart[i]):
            continue
        ratios.append(res[i + 1] / res[i])
    if len(ratios) < 3:
        return float("nan")
    tail = np.array(ratios[-window:])
    return float(np.exp(np.mean(np.log(tail))))
