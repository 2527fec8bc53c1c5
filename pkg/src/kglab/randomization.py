"""
Microlocal randomization of Cauchy data and empirical verification of the
sub-Gaussian toolbox (Khinchin moments, expected maxima, tail exponents).

Randomized data takes the form

    f^w = sum_{k,l} X_k P_k(Y_l phi_l f),   g^w likewise with the same draws,

with independent mean-zero unit-variance draws ``X_k`` (frequency cells) and
``Y_l`` (spatial cells).  Real output is enforced by drawing one sign per
``+-k`` pair (``X_{-k} = X_k``), never by randomizing half the spectrum
independently.

Seed derivation is splittable and order independent: the draw for index ``i``
under tag ``t`` uses ``numpy.random.SeedSequence((base, tag_code, zigzag(i)...))``,
so identical plans give bit-identical data regardless of iteration order or
thread count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .grid import RealField, StatePair, TorusGrid
from .decomposition import (
    OutOfBandError,
    _PARTITION,
    _axis_spatial_window,
    _require_integer_extent,
)

__all__ = [
    "SubGaussianFamily",
    "RADEMACHER",
    "STANDARD_GAUSSIAN",
    "UNIFORM_SYMMETRIC",
    "RandomSeedPlan",
    "randomize_data",
    "verify_khinchin",
    "verify_max_inequality",
    "tail_statistics",
    "gaussian_lp_norm",
    "expected_abs_max_gaussian",
]

_TAG_CODES = {"X": 0x58, "Y": 0x59, "MC": 0x4D}


@dataclass(frozen=True)
class SubGaussianFamily:
    """Mean-zero, unit-variance sub-Gaussian draw family.

    ``psi_bound`` is the known value of ``sup_p p^{-1/2} ||X||_{L^p}`` over
    ``p >= 1`` (attained at p = 1 for all three kinds).
    """

    kind: str
    psi_bound: float

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        if self.kind == "rademacher":
            return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
        if self.kind == "gaussian":
            return rng.standard_normal(size=size)
        if self.kind == "uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=size)
        raise ValueError(f"unknown family kind {self.kind!r}")


RADEMACHER = SubGaussianFamily("rademacher", 1.0)
STANDARD_GAUSSIAN = SubGaussianFamily("gaussian", math.sqrt(2.0 / math.pi))
UNIFORM_SYMMETRIC = SubGaussianFamily("uniform", math.sqrt(3.0) / 2.0)

_FAMILIES = {f.kind: f for f in (RADEMACHER, STANDARD_GAUSSIAN, UNIFORM_SYMMETRIC)}


def family_by_name(name: str) -> SubGaussianFamily:
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(_FAMILIES)}")


def _zigzag(v: int) -> int:
    return 2 * v if v >= 0 else -2 * v - 1


@dataclass(frozen=True)
class RandomSeedPlan:
    """Deterministic derivation of per-index draws from one base seed."""

    base_seed: int
    family: SubGaussianFamily = RADEMACHER
    force_unit: bool = False  # test hook: all draws forced to +1

    def rng_for(self, tag: str, index) -> np.random.Generator:
        code = _TAG_CODES[tag]
        idx = tuple(_zigzag(int(v)) for v in np.atleast_1d(np.asarray(index, dtype=int)))
        seq = np.random.SeedSequence((int(self.base_seed), code) + idx)
        return np.random.default_rng(seq)

    def draw(self, tag: str, index) -> float:
        if self.force_unit:
            return 1.0
        return float(self.family.sample(self.rng_for(tag, index)))

    def to_json(self) -> str:
        return json.dumps({"base_seed": int(self.base_seed), "family": self.family.kind})

    @staticmethod
    def from_json(text: str) -> "RandomSeedPlan":
        obj = json.loads(text)
        return RandomSeedPlan(int(obj["base_seed"]), family_by_name(obj["family"]))


def _canonical_pair_index(k: np.ndarray) -> tuple:
    """Representative of the +-k pair: first nonzero component positive."""
    for v in k:
        if v > 0:
            return tuple(int(x) for x in k)
        if v < 0:
            return tuple(int(-x) for x in k)
    return tuple(int(x) for x in k)


def frequency_draws(plan: RandomSeedPlan, K: int, d: int) -> np.ndarray:
    """Symmetric table ``X_k`` for all ``|k|_inf <= K`` (X_{-k} = X_k)."""
    shape = (2 * K + 1,) * d
    out = np.empty(shape)
    for flat, idx in enumerate(np.ndindex(shape)):
        k = np.asarray(idx, dtype=int) - K
        out[idx] = plan.draw("X", _canonical_pair_index(k))
    return out


def spatial_draws(plan: RandomSeedPlan, grid: TorusGrid) -> np.ndarray:
    Lint = _require_integer_extent(grid)
    shape = (Lint,) * grid.d
    out = np.empty(shape)
    for idx in np.ndindex(shape):
        out[idx] = plan.draw("Y", idx)
    return out


def spatial_weight_field(grid: TorusGrid, draws: np.ndarray) -> np.ndarray:
    """``w(x) = sum_l Y_l phi_l(x)`` via per-axis window matrices."""
    Lint = _require_integer_extent(grid)
    mats = []
    for _ in range(grid.d):
        mats.append(
            np.stack([_axis_spatial_window(grid, l) for l in range(Lint)], axis=0)
        )
    out = draws
    for axis in range(grid.d):
        out = np.tensordot(out, mats[axis], axes=([0], [0]))
    return out


def frequency_multiplier(grid: TorusGrid, K: int, draws: np.ndarray) -> np.ndarray:
    """``m(xi) = sum_{|k|_inf<=K} X_k phi(xi - k)`` via per-axis windows."""
    from .decomposition import _axis_window

    mats = []
    for _ in range(grid.d):
        mats.append(
            np.stack(
                [_axis_window(grid, k) for k in range(-K, K + 1)], axis=0
            )
        )
    out = draws
    for axis in range(grid.d):
        out = np.tensordot(out, mats[axis], axes=([0], [0]))
    return out


def randomize_data(
    f: RealField,
    g: RealField,
    plan: RandomSeedPlan,
    K: int,
    family: SubGaussianFamily | None = None,
) -> StatePair:
    """Randomized Cauchy data with the double sum truncated to ``|k|_inf <= K``.

    The k-sum and l-sum factor exactly: with ``w = sum_l Y_l phi_l`` and
    ``m = sum_k X_k phi(.-k)`` the result is ``ifft(m * fft(w f))`` (same
    draws for both components).  Determinism, linearity in ``(f, g)`` and the
    mean-zero property follow from the construction.
    """
    if f.grid != g.grid:
        raise ValueError("f and g must share a grid")
    grid = f.grid
    if K + 1 >= grid.nyquist:
        raise OutOfBandError(f"cutoff K={K} beyond Nyquist margin {grid.nyquist:.3f}")
    if family is not None and family != plan.family:
        plan = RandomSeedPlan(plan.base_seed, family, plan.force_unit)
    X = frequency_draws(plan, K, grid.d)
    Y = spatial_draws(plan, grid)
    w = spatial_weight_field(grid, Y)
    m = frequency_multiplier(grid, K, X)

    def apply(values: np.ndarray) -> np.ndarray:
        spec = np.fft.fftn(w * values) * m
        out = np.fft.ifftn(spec)
        scale = float(np.max(np.abs(out))) or 1.0
        if float(np.max(np.abs(out.imag))) > 1e-9 * scale:
            raise AssertionError("paired draws should produce a real field")
        return out.real

    return StatePair(RealField(grid, apply(f.values)), RealField(grid, apply(g.values)))


def _draw_matrix(
    plan: RandomSeedPlan, family: SubGaussianFamily, count: int, j: int, chunk: int = 1 << 22
):
    """Yield (draws x J) blocks with per-draw sub-seeds."""
    rows_per_block = max(1, min(count, chunk // max(j, 1)))
    start = 0
    while start < count:
        stop = min(count, start + rows_per_block)
        block = np.empty((stop - start, j))
        for i in range(start, stop):
            rng = plan.rng_for("MC", (i,))
            block[i - start] = family.sample(rng, size=j)
        yield block
        start = stop


def gaussian_lp_norm(p: float) -> float:
    """Exact ``L^p`` norm of a standard Gaussian: 2^{1/2}(Gamma((p+1)/2)/sqrt(pi))^{1/p}."""
    return math.sqrt(2.0) * math.exp(
        (math.lgamma((p + 1.0) / 2.0) - 0.5 * math.log(math.pi)) / p
    )


def expected_abs_max_gaussian(J: int, grid_points: int = 200_001, x_max: float = 12.0) -> float:
    """Exact ``E[max_{j<=J} |Z_j|]`` by integrating the survival function."""
    xs = np.linspace(0.0, x_max, grid_points)
    with np.errstate(over="ignore"):
        cdf = np.array([(math.erf(x / math.sqrt(2.0))) ** J for x in xs])
    return float(np.trapezoid(1.0 - cdf, xs))


@dataclass(frozen=True)
class KhinchinTable:
    family: str
    coefficients: np.ndarray
    p_grid: tuple
    draws: int
    empirical: np.ndarray   # L^p norms of sum a_j X_j
    bounds: np.ndarray      # p^{1/2} ||a||_2
    fitted_constant: float  # max_p empirical / bound


def verify_khinchin(
    family: SubGaussianFamily, coefficients, p_grid, draws: int, plan: RandomSeedPlan | None = None
) -> KhinchinTable:
    """Empirical moments of ``|sum a_j X_j|`` against the ``p^{1/2} ||a||_2`` law."""
    a = np.asarray(coefficients, dtype=float)
    if a.size == 0 or not np.any(a != 0):
        raise ValueError("coefficient vector must be nonzero")
    p_grid = tuple(float(p) for p in p_grid)
    if any(p < 1 or p > 16 for p in p_grid):
        raise ValueError("moment grid must lie in [1, 16]")
    if plan is None:
        plan = RandomSeedPlan(0, family)
    moments = np.zeros(len(p_grid))
    total = 0
    for block in _draw_matrix(plan, family, draws, a.size):
        s = np.abs(block @ a)
        for i, p in enumerate(p_grid):
            moments[i] += float(np.sum(s**p))
        total += block.shape[0]
    empirical = np.array([(m / total) ** (1.0 / p) for m, p in zip(moments, p_grid)])
    l2 = float(np.linalg.norm(a))
    bounds = np.array([math.sqrt(p) * l2 for p in p_grid])
    return KhinchinTable(
        family.kind, a, p_grid, draws, empirical, bounds, float(np.max(empirical / bounds))
    )


@dataclass(frozen=True)
class MaxInequalityTable:
    family: str
    J_grid: tuple
    draws: int
    empirical: np.ndarray  # E max_j |X_j|
    bounds: np.ndarray     # log<J> * psi bound
    ratios: np.ndarray


def verify_max_inequality(
    family: SubGaussianFamily, J_grid, draws: int, plan: RandomSeedPlan | None = None
) -> MaxInequalityTable:
    """Empirical ``E[max_j |X_j|]`` against ``log<J> max_j ||X_j||_Psi``."""
    J_grid = tuple(int(J) for J in J_grid)
    if any(J < 1 or J > 10**5 for J in J_grid):
        raise ValueError("J grid must lie in [1, 1e5]")
    if plan is None:
        plan = RandomSeedPlan(0, family)
    emp = []
    for J in J_grid:
        acc = 0.0
        total = 0
        for block in _draw_matrix(plan, family, draws, J):
            acc += float(np.sum(np.max(np.abs(block), axis=1)))
            total += block.shape[0]
        emp.append(acc / total)
    emp = np.asarray(emp)
    bounds = np.array(
        [math.log(math.hypot(1.0, J)) * family.psi_bound for J in J_grid]
    )
    # <J> >= sqrt(2) so the bound never vanishes
    return MaxInequalityTable(family.kind, J_grid, draws, emp, bounds, emp / bounds)


@dataclass(frozen=True)
class TailReport:
    c_hat: float            # fitted Gaussian-tail exponent
    psi_hat: float          # sup_p p^{-1/2} (empirical L^p), p in {1,2,4,8}
    sample_count: int


def tail_statistics(samples) -> TailReport:
    """Fit ``|{|X| > lam}| <= 2 exp(-c lam^2)`` from the empirical survival."""
    x = np.abs(np.asarray(samples, dtype=float))
    if x.size < 10**3:
        raise ValueError("need at least 1e3 samples for a tail fit")
    psi = max(
        float(np.mean(x**p)) ** (1.0 / p) / math.sqrt(p) for p in (1.0, 2.0, 4.0, 8.0)
    )
    if not np.any(x > 0):
        return TailReport(math.inf, 0.0, x.size)
    levels = np.quantile(x, np.linspace(0.5, 0.999, 40))
    levels = np.unique(levels[levels > 0])
    surv = np.array([np.mean(x > lam) for lam in levels])
    keep = surv > 0
    if np.count_nonzero(keep) < 3:
        return TailReport(math.inf, psi, x.size)
    lam2 = levels[keep] ** 2
    logs = np.log(surv[keep] / 2.0)
    c_hat = float(np.polyfit(lam2, -logs, 1)[0])
    return TailReport(c_hat, psi, x.size)
