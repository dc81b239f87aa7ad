"""Trace bounds for merged vs. concatenated token features and a Monte-Carlo
Rademacher estimator for norm-bounded linear classes.

Three feature blocks ``u1, u2, u3`` (each with covariance trace ``T`` and
pairwise cross-trace at most ``rho * T``) are either concatenated
(separated tokens) or fused as ``z = sum_i w_i u_i`` with ``sum_i w_i = 1``
(unified token). With ``s = ||w||^2``::

    Tr Cov(z)        <= T * (rho + (1 - rho) * s)
    Tr Cov([u1;u2;u3]) = 3T
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError

WEIGHT_TOL = 1e-12


def weights_for_s(s: float) -> np.ndarray:
    """Non-negative ``(a, b, b)`` with ``a + 2b = 1`` and ``a^2 + 2b^2 = s``."""
    if not 1.0 / 3.0 - 1e-15 <= s <= 1.0 + 1e-15:
        raise ConfigError(f"s must lie in [1/3, 1] for non-negative weights, got {s}")
    r = math.sqrt(max(6.0 * s - 2.0, 0.0))
    a, b = (1.0 + r) / 3.0, (2.0 - r) / 6.0  # b from r directly keeps s = 1/3 exactly uniform
    return np.array([a, b, b])


@dataclass
class CovSpec:
    T: float
    rho: float
    w: np.ndarray = field(default_factory=lambda: np.full(3, 1.0 / 3.0))

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        if self.w.shape != (3,):
            raise ConfigError(f"expected 3 weights, got shape {self.w.shape}")
        if abs(self.w.sum() - 1.0) >= WEIGHT_TOL:
            raise ConfigError(f"weights must sum to 1, got {self.w.sum()!r}")

    @classmethod
    def from_s(cls, T: float, rho: float, s: float) -> "CovSpec":
        return cls(T, rho, weights_for_s(s))

    @property
    def s(self) -> float:
        return float(self.w @ self.w)


def trace_bound_merged(spec: CovSpec) -> float:
    return spec.T * (spec.rho + (1.0 - spec.rho) * spec.s)


def trace_bound_separated(spec: CovSpec) -> float:
    return 3.0 * spec.T


def rademacher_ratio_bound(spec: CovSpec) -> float:
    return math.sqrt((spec.rho + (1.0 - spec.rho) * spec.s) / 3.0)


# -- Monte-Carlo estimator --------------------------------------------------------------
@dataclass(frozen=True)
class RademacherQuery:
    B: float = 1.0   # weight-norm budget
    n: int = 0       # 0: take the sample count from the data
    m: int = 200     # sign-vector draws

    def __post_init__(self):
        if not self.B > 0 or self.m < 1 or self.n < 0:
            raise ConfigError(f"need B > 0, m >= 1, n >= 1; got {self}")


def empirical_rademacher_linear(X, query: RademacherQuery = RademacherQuery(),
                                rng: np.random.Generator | None = None,
                                chunk: int = 16) -> tuple[float, float]:
    """Estimate of ``E_sigma sup_{||v|| <= B} (1/n) sum_i sigma_i v.x_i``.

    The supremum is ``(B/n) ||sum_i sigma_i x_i||``, so only the sign draws
    are random. Returns ``(estimate, standard error over draws)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ConfigError(f"data must be [n, d] with n >= 1, got {X.shape}")
    n = X.shape[0]
    if query.n and query.n != n:
        raise ConfigError(f"query expects n={query.n} samples, data has {n}")
    if not np.any(X):
        return 0.0, 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    norms = np.empty(query.m)
    for start in range(0, query.m, chunk):
        k = min(chunk, query.m - start)
        sigma = rng.integers(0, 2, size=(k, n)).astype(np.float64) * 2.0 - 1.0
        norms[start:start + k] = np.linalg.norm(sigma @ X, axis=1)
    scale = query.B / n
    est = scale * norms.mean()
    se = scale * norms.std(ddof=1) / math.sqrt(query.m) if query.m > 1 else 0.0
    return float(est), float(se)


def chi_mean(d: int) -> float:
    """``E||g||`` for ``g ~ N(0, I_d)``."""
    return math.sqrt(2.0) * math.exp(gammaln((d + 1) / 2.0) - gammaln(d / 2.0))


def linear_trace_bound(X, B: float = 1.0) -> float:
    """``B * sqrt(Tr(Cov) / n)`` with the uncentered empirical second moment."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    return B * math.sqrt(float(np.einsum("ij,ij->", X, X)) / n / n)


# -- synthetic blocks ---------------------------------------------------------------
def correlated_blocks(n: int, d: int, spec: CovSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Three ``[n, d]`` Gaussian blocks with ``Tr Cov_ii = T`` and ``Tr Cov_ij = rho T``.

    A shared latent factor carries the cross-block correlation:
    ``u_i = sqrt(T/d) (sqrt(rho) z + sqrt(1 - rho) e_i)``.
    """
    scale = math.sqrt(spec.T / d)
    z = rng.standard_normal((n, d))
    return [scale * (math.sqrt(spec.rho) * z + math.sqrt(1.0 - spec.rho) * rng.standard_normal((n, d)))
            for _ in range(3)]


def empirical_trace(X) -> float:
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    return float(np.einsum("ij,ij->", Xc, Xc) / (X.shape[0] - 1))


@dataclass
class MergedSeparated:
    merged: np.ndarray     # [n, d]
    separated: np.ndarray  # [n, 3d]
    trace_merged: float
    trace_separated: float


def build_merged_and_separated_samples(u1, u2, u3, w) -> MergedSeparated:
    blocks = [np.asarray(u, dtype=np.float64) for u in (u1, u2, u3)]
    if len({b.shape for b in blocks}) != 1 or blocks[0].ndim != 2:
        raise ConfigError(f"blocks must share one [n, d] shape, got {[b.shape for b in blocks]}")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (3,) or abs(w.sum() - 1.0) >= WEIGHT_TOL:
        raise ConfigError(f"need three weights summing to 1, got {w}")
    merged = w[0] * blocks[0] + w[1] * blocks[1] + w[2] * blocks[2]
    separated = np.concatenate(blocks, axis=1)
    return MergedSeparated(merged, separated, empirical_trace(merged), empirical_trace(separated))


def generalization_bound(emp_risk: float, rademacher: float, n: int, delta: float) -> float:
    """High-probability risk bound ``emp + 2 R + 4 sqrt(2 ln(4/delta) / n)``."""
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 <= emp_risk <= 1.0:
        raise ConfigError(f"empirical risk must be scaled to [0, 1], got {emp_risk}")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    return emp_risk + 2.0 * rademacher + 4.0 * math.sqrt(2.0 * math.log(4.0 / delta) / n)


# -- report -------------------------------------------------------------------------
RADEMACHER_FIELDS = ("rho", "s", "trace_merged", "trace_sep", "emp_merged", "emp_sep", "ratio_bound",
                     "emp_merged_se", "emp_sep_se", "bound_merged", "bound_sep")


def rademacher_row(rho: float, s: float, n: int = 100_000, d: int = 4, T: float = 1.0,
                   B: float = 1.0, m: int = 200, seed: int = 0) -> dict:
    spec = CovSpec.from_s(T, rho, s)
    rng = np.random.default_rng(seed)
    samples = build_merged_and_separated_samples(*correlated_blocks(n, d, spec, rng), spec.w)
    q = RademacherQuery(B, n, m)
    # common sign draws for both feature maps
    em, em_se = empirical_rademacher_linear(samples.merged, q, np.random.default_rng(seed + 1))
    es, es_se = empirical_rademacher_linear(samples.separated, q, np.random.default_rng(seed + 1))
    return {"rho": rho, "s": spec.s, "trace_merged": samples.trace_merged,
            "trace_sep": samples.trace_separated, "emp_merged": em, "emp_sep": es,
            "ratio_bound": rademacher_ratio_bound(spec), "emp_merged_se": em_se, "emp_sep_se": es_se,
            "bound_merged": trace_bound_merged(spec), "bound_sep": trace_bound_separated(spec)}


def write_rademacher_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RADEMACHER_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(r[k])) for k in RADEMACHER_FIELDS})
