"""Seeded parametric noise on linear systems and probability reads.

Each :class:`NoiseSpec` owns its own ``numpy`` generator, so two specs with the
same seed replay the same stream and distinct specs never interfere. A spec
with all sigmas zero and no shot count passes data through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


# relative sigma for matrix and right-hand side in the noisy-controller study
STUDY_SIGMA = 1e-3


@dataclass
class NoiseSpec:
    seed: int = 0
    matrix_rel_sigma: float = 0.0
    rhs_rel_sigma: float = 0.0
    expectation_sigma: float = 0.0
    shots: Optional[int] = None
    rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("matrix_rel_sigma", "rhs_rel_sigma", "expectation_sigma"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {value}")
        if self.shots is not None and int(self.shots) < 1:
            raise ValueError(f"shots must be >= 1, got {self.shots}")
        self.reset()

    def reset(self) -> None:
        """Rewind the generator to the start of the seeded stream."""
        self.rng = np.random.default_rng(self.seed)

    @property
    def perturbs_system(self) -> bool:
        return self.matrix_rel_sigma > 0 or self.rhs_rel_sigma > 0

    @property
    def exact_reads(self) -> bool:
        """True when probability reads are returned unchanged."""
        return self.shots is None and self.expectation_sigma == 0


def symmetric_gaussian(dim: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """``(G + G^T) / 2`` with ``G_ij ~ N(0, sigma^2)``; exactly symmetric."""
    g = rng.normal(0.0, sigma, size=(dim, dim))
    return 0.5 * (g + g.T)


def perturb_system(M: np.ndarray, rhs: np.ndarray, spec: NoiseSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Add symmetric Gaussian noise scaled by ``max|M_ij|`` and Gaussian noise scaled by ``max|rhs_i|``.

    A zero sigma leaves the corresponding operand as the very same array.
    """
    M = np.asarray(M)
    rhs = np.asarray(rhs)
    if spec.matrix_rel_sigma > 0:
        scale = spec.matrix_rel_sigma * float(np.max(np.abs(M)))
        M = M + symmetric_gaussian(M.shape[0], scale, spec.rng)
    if spec.rhs_rel_sigma > 0:
        scale = spec.rhs_rel_sigma * float(np.max(np.abs(rhs)))
        rhs = rhs + spec.rng.normal(0.0, scale, size=rhs.shape)
    return M, rhs


def sample_probability(p: float, spec: NoiseSpec) -> float:
    """Finite-shot or Gaussian-perturbed estimate of probability ``p``."""
    p = min(max(float(p), 0.0), 1.0)
    if spec.shots is not None:
        return float(spec.rng.binomial(int(spec.shots), p)) / int(spec.shots)
    if spec.expectation_sigma > 0:
        return min(max(p + float(spec.rng.normal(0.0, spec.expectation_sigma)), 0.0), 1.0)
    return p


def expected_frobenius_norm(dim: int, sigma: float) -> float:
    """Mean of ``||(G + G^T)/2||_F`` for ``G_ij ~ N(0, sigma^2)``.

    The diagonal entries have variance ``sigma^2`` and each of the
    ``dim(dim-1)/2`` off-diagonal pairs contributes ``2 * sigma^2 / 2``, so
    ``||E||_F / sigma`` is chi-distributed with ``k = dim(dim+1)/2`` degrees
    of freedom.
    """
    k = dim * (dim + 1) / 2
    return sigma * math.sqrt(2.0) * math.exp(math.lgamma((k + 1) / 2) - math.lgamma(k / 2))
