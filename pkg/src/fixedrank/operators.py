"""Measurement operators and synthetic problem instances.

Two sampling models are supported: entrywise masks (matrix completion) and
ensembles of dense sensing matrices (matrix sensing).  Vectorized work uses
column-major (Fortran) vec so that vec(A X B') = kron(B, A) vec(X); the
observation vector itself enumerates mask entries in row-major order, which
is an independent, fixed bookkeeping choice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from . import linalg
from .errors import InvalidInputError, ResourceLimitError
from .manifold import FixedRankPoint

THETA_SIZE_LIMIT = 4096


def vec(x: np.ndarray) -> np.ndarray:
    """Column-major vectorization (matches the Kronecker identities used here)."""
    return x.ravel(order="F")


def unvec(x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return x.reshape(shape, order="F")


class MaskOperator:
    """Entrywise sampling operator: keep the entries flagged by a boolean mask."""

    kind = "mc"

    def __init__(self, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise InvalidInputError("mask must be a 2-D boolean array")
        if not mask.any():
            raise InvalidInputError("mask selects no entries")
        self.mask = mask
        # row-major enumeration of observed positions, fixed for reproducibility
        self.rows, self.cols = np.nonzero(mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def num_measurements(self) -> int:
        return int(self.rows.size)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise InvalidInputError(f"operand shape {x.shape} != {self.shape}")
        return x[self.rows, self.cols]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.num_measurements,):
            raise InvalidInputError(
                f"measurement length {y.shape} != ({self.num_measurements},)"
            )
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = y
        return out

    def apply_factored(self, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
        """Measurements of the product w1 @ w2.T without densifying it."""
        return np.einsum("ik,ik->i", w1[self.rows], w2[self.cols])


class EnsembleOperator:
    """Inner products against a stack of dense sensing matrices."""

    kind = "ms"

    def __init__(self, matrices: np.ndarray):
        matrices = np.asarray(matrices, dtype=float)
        if matrices.ndim != 3 or matrices.shape[0] < 1:
            raise InvalidInputError("expected a (m, n1, n2) stack of sensing matrices")
        if not np.all(np.isfinite(matrices)):
            raise InvalidInputError("sensing matrices contain non-finite entries")
        self.matrices = matrices

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrices.shape[1:]

    @property
    def num_measurements(self) -> int:
        return int(self.matrices.shape[0])

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise InvalidInputError(f"operand shape {x.shape} != {self.shape}")
        return np.tensordot(self.matrices, x, axes=([1, 2], [0, 1]))

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.num_measurements,):
            raise InvalidInputError(
                f"measurement length {y.shape} != ({self.num_measurements},)"
            )
        return np.tensordot(y, self.matrices, axes=(0, 0))

    def apply_factored(self, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
        return self.apply(w1 @ w2.T)


SensingOperator = Union[MaskOperator, EnsembleOperator]


def build_theta(op: SensingOperator) -> np.ndarray:
    """Explicit n1*n2 square matrix representing vec(adjoint(apply(.)))."""
    n1, n2 = op.shape
    if n1 * n2 > THETA_SIZE_LIMIT:
        raise ResourceLimitError(
            f"explicit assembly limited to {THETA_SIZE_LIMIT} unknowns, got {n1 * n2}"
        )
    if op.kind == "mc":
        return np.diag(vec(op.mask).astype(float))
    rows = op.matrices.transpose(0, 2, 1).reshape(op.num_measurements, n1 * n2)
    return rows.T @ rows


@dataclass(eq=False)
class ProblemInstance:
    """Ground truth, measurement operator, and exact observations."""

    operator: SensingOperator
    ground_truth: FixedRankPoint
    observations: np.ndarray
    rank: int
    seed: int
    sampling: float = field(default=0.0)  # p for masks, m for ensembles

    @property
    def kind(self) -> str:
        return self.operator.kind

    @property
    def shape(self) -> tuple[int, int]:
        return self.operator.shape

    @cached_property
    def truth_dense(self) -> np.ndarray:
        return self.ground_truth.dense()

    @property
    def sigma_min_truth(self) -> float:
        return self.ground_truth.sigma_min

    def loss(self, x: np.ndarray) -> float:
        rv = self.operator.apply(x) - self.observations
        return 0.5 * float(rv @ rv)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.operator.adjoint(self.operator.apply(x) - self.observations)

    def residual_norm(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.truth_dense))


def _random_rank_r(
    rng: np.random.Generator, n1: int, n2: int, r: int, cond_kappa: float | None
) -> FixedRankPoint:
    g1 = rng.standard_normal((n1, r))
    g2 = rng.standard_normal((n2, r))
    point = FixedRankPoint.from_matrix(g1 @ g2.T, r)
    if cond_kappa is not None:
        if cond_kappa < 1.0:
            raise InvalidInputError("cond_kappa must be >= 1")
        spectrum = np.geomspace(cond_kappa, 1.0, r)
        point = FixedRankPoint(point.u, spectrum, point.v)
    return point


def generate_instance(
    kind: str,
    n1: int,
    n2: int,
    r: int,
    sampling: float,
    seed: int,
    cond_kappa: float | None = None,
) -> ProblemInstance:
    """Random instance: Gaussian rank-r ground truth plus exact measurements.

    For masks each entry is observed independently with probability
    ``sampling``; for ensembles ``sampling`` is the measurement count m and
    entries are N(0, 1/m) so the normal operator is an approximate identity.
    Deterministic for a fixed seed.
    """
    if kind not in ("mc", "ms"):
        raise InvalidInputError(f"unknown instance kind {kind!r}")
    if not 1 <= r <= min(n1, n2):
        raise InvalidInputError(f"rank {r} out of range for {n1}x{n2}")
    rng = np.random.default_rng(seed)
    truth = _random_rank_r(rng, n1, n2, r, cond_kappa)
    if kind == "mc":
        p = float(sampling)
        if not 0.0 < p <= 1.0:
            raise InvalidInputError("mask sampling rate must be in (0, 1]")
        mask = None
        for _ in range(10):
            candidate = rng.random((n1, n2)) < p
            if candidate.any():
                mask = candidate
                break
        if mask is None:
            raise InvalidInputError("sampling produced an empty mask 10 times in a row")
        op: SensingOperator = MaskOperator(mask)
    else:
        m = int(sampling)
        if m < 1:
            raise InvalidInputError("measurement count must be >= 1")
        mats = rng.standard_normal((m, n1, n2)) / np.sqrt(m)
        op = EnsembleOperator(mats)
    observations = op.apply(truth.dense())
    return ProblemInstance(op, truth, observations, r, seed, float(sampling))


def spectral_init(inst: ProblemInstance) -> np.ndarray:
    """Rank-r truncation of the (rescaled) adjoint image of the observations."""
    if inst.kind == "mc":
        backprojected = inst.operator.adjoint(inst.observations) / inst.sampling
    else:
        backprojected = inst.operator.adjoint(inst.observations)
    return linalg.truncate_rank(backprojected, inst.rank).reconstruct()


def random_init(inst: ProblemInstance, sigma: float, seed: int = 0) -> np.ndarray:
    """Spectral initialization perturbed by Gaussian noise of scale sigma.

    For masks the noise fills the unobserved entries; for ensembles it is
    added to the measurements before backprojection.  sigma = 0 reproduces
    spectral_init exactly.
    """
    if sigma < 0:
        raise InvalidInputError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    if inst.kind == "mc":
        filled = inst.operator.adjoint(inst.observations) / inst.sampling
        noise = sigma * rng.standard_normal(inst.shape)
        noise[inst.operator.mask] = 0.0
        return linalg.truncate_rank(filled + noise, inst.rank).reconstruct()
    noisy = inst.observations + sigma * rng.standard_normal(
        inst.operator.num_measurements
    )
    return linalg.truncate_rank(inst.operator.adjoint(noisy), inst.rank).reconstruct()


def instance_to_json(inst: ProblemInstance) -> str:
    """Serialize an instance; floats round-trip exactly through JSON."""
    doc = {
        "kind": inst.kind,
        "n1": inst.shape[0],
        "n2": inst.shape[1],
        "r": inst.rank,
        "seed": inst.seed,
        "sampling": inst.sampling,
        "ground_truth": {
            "u": inst.ground_truth.u.tolist(),
            "s": inst.ground_truth.s.tolist(),
            "v": inst.ground_truth.v.tolist(),
        },
        "observations": inst.observations.tolist(),
    }
    if inst.kind == "mc":
        doc["mask"] = inst.operator.mask.astype(int).tolist()
    else:
        doc["matrices"] = inst.operator.matrices.tolist()
    return json.dumps(doc)


def instance_from_json(text: str) -> ProblemInstance:
    doc = json.loads(text)
    truth = FixedRankPoint(
        np.asarray(doc["ground_truth"]["u"], dtype=float),
        np.asarray(doc["ground_truth"]["s"], dtype=float),
        np.asarray(doc["ground_truth"]["v"], dtype=float),
    )
    if doc["kind"] == "mc":
        op: SensingOperator = MaskOperator(np.asarray(doc["mask"], dtype=bool))
    else:
        op = EnsembleOperator(np.asarray(doc["matrices"], dtype=float))
    return ProblemInstance(
        op,
        truth,
        np.asarray(doc["observations"], dtype=float),
        int(doc["r"]),
        int(doc["seed"]),
        float(doc["sampling"]),
    )
