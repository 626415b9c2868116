"""Core types and measurement-plan construction.

A plan describes d >= 2 subsampling stages over an nx-by-ny grid. Stage i
keeps every (sub_x, sub_y)-th sample, so its small spectrum has
bins_x * bins_y aliased bins. Bin counts follow a co-prime factor list
f_0..f_{d-1} with prod(f_i) == nx*ny:

  less-sparse regime: stage i has B_i = n / f_i bins (all factors but f_i),
  very-sparse regime: stage i has B_i = f_i bins.

Each stage also carries a list of circular shifts (delay chains); chain c
observes every spectral coefficient (u, v) aliased into its bin with phase
weight exp(2j*pi*(u*s1/nx + v*s2/ny)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

MODE_NOISELESS = "noiseless"
MODE_ROBUST = "robust"
REGIME_LESS_SPARSE = "less-sparse"
REGIME_VERY_SPARSE = "very-sparse"


class FfastError(Exception):
    """Base class for all library errors."""


class PlanError(FfastError, ValueError):
    """A measurement plan could not be built or validated."""


class NotCoprime(PlanError):
    """Factor list is not pairwise co-prime."""


class ProductMismatch(PlanError):
    """Factor product does not equal nx * ny."""


class NoValidSplit(PlanError):
    """Factors cannot be apportioned to the two dimensions."""


@dataclass(frozen=True)
class Dims:
    """Grid extents. n is the total number of samples."""

    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise PlanError("dims must be positive, got (%r, %r)" % (self.nx, self.ny))

    @property
    def n(self) -> int:
        return self.nx * self.ny


@dataclass(frozen=True)
class Constellation:
    """Value model with quantized magnitudes and phases.

    Magnitudes are sqrt(rho)/2 + j*sqrt(rho)/m1 for j = 0..m1, phases are
    2*pi*j/m2 for j = 0..m2-1. rho is the target per-coefficient power
    relative to unit per-sample noise variance.
    """

    rho: float
    m1: int
    m2: int

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("m1 and m2 must be positive integers")

    def magnitudes(self) -> list[float]:
        r = math.sqrt(self.rho)
        return [r / 2 + j * r / self.m1 for j in range(self.m1 + 1)]

    def phases(self) -> list[float]:
        return [2 * math.pi * j / self.m2 for j in range(self.m2)]

    def mean_power(self) -> float:
        # average |value|^2 over the magnitude levels (phases are unit modulus)
        return self.rho * sum((0.5 + j / self.m1) ** 2 for j in range(self.m1 + 1)) / (self.m1 + 1)


@dataclass(frozen=True)
class RobustParams:
    """Delay-chain design and thresholds for decoding in noise.

    chains_per_dim and reps multiply the number of random-offset shift pairs
    per bit level; noise_var is the per-sample complex noise variance;
    gamma_zero and gamma_single are the relative slacks of the zero-ton
    energy test and the singleton residual test. seed fixes the shift design.
    """

    chains_per_dim: int = 1
    reps: int = 1
    noise_var: float = 0.0
    gamma_zero: float = 0.5
    gamma_single: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.chains_per_dim < 1:
            raise ValueError("chains_per_dim must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")
        if self.gamma_zero <= 0 or self.gamma_single <= 0:
            raise ValueError("gamma_zero and gamma_single must be positive")


def bit_levels(n: int) -> int:
    """Number of shift-pair bit levels needed to resolve an index in [0, n)."""
    return 0 if n <= 1 else (n - 1).bit_length()


def robust_chain_count(dims: Dims, params: RobustParams) -> int:
    """Anchor plus one (offset, offset + 2^j) pair per chain, level and rep."""
    levels = bit_levels(dims.nx) + bit_levels(dims.ny)
    return 1 + 2 * params.chains_per_dim * params.reps * levels


def noiseless_shifts(dims: Dims) -> tuple[tuple[int, int], ...]:
    """Anchor plus one unit shift per nontrivial dimension."""
    shifts = [(0, 0)]
    if dims.nx > 1:
        shifts.append((1, 0))
    if dims.ny > 1:
        shifts.append((0, 1))
    return tuple(shifts)


@dataclass(frozen=True)
class StageConfig:
    """One subsampling stage: periods, bin grid and delay-chain shifts."""

    sub_x: int
    sub_y: int
    bins_x: int
    bins_y: int
    shifts: tuple[tuple[int, int], ...]

    @classmethod
    def from_subsampling(cls, dims: Dims, sub_x: int, sub_y: int,
                         shifts) -> "StageConfig":
        if sub_x < 1 or sub_y < 1 or dims.nx % sub_x or dims.ny % sub_y:
            raise NoValidSplit(
                "subsampling (%d, %d) does not divide dims (%d, %d)"
                % (sub_x, sub_y, dims.nx, dims.ny))
        return cls(sub_x, sub_y, dims.nx // sub_x, dims.ny // sub_y,
                   tuple((int(s1), int(s2)) for s1, s2 in shifts))

    @property
    def bin_count(self) -> int:
        return self.bins_x * self.bins_y


@dataclass(frozen=True)
class FfastPlan:
    """Validated measurement plan: dims, stages and decode mode."""

    dims: Dims
    stages: tuple[StageConfig, ...]
    mode: str = MODE_NOISELESS
    robust_params: RobustParams | None = None

    @property
    def bin_counts(self) -> list[int]:
        return [s.bin_count for s in self.stages]

    def validate(self) -> None:
        if len(self.stages) < 2:
            raise PlanError("a plan needs at least 2 stages, got %d" % len(self.stages))
        if self.mode not in (MODE_NOISELESS, MODE_ROBUST):
            raise PlanError("unknown mode %r" % (self.mode,))
        dims = self.dims
        for s in self.stages:
            if s.sub_x * s.bins_x != dims.nx or s.sub_y * s.bins_y != dims.ny:
                raise NoValidSplit(
                    "stage periods (%d, %d) do not tile dims (%d, %d)"
                    % (s.sub_x, s.sub_y, dims.nx, dims.ny))
            self._check_shifts(s)
        self._check_factor_structure()

    def _check_shifts(self, s: StageConfig) -> None:
        dims = self.dims
        if not s.shifts or s.shifts[0] != (0, 0):
            raise PlanError("first shift must be (0, 0), got %r" % (s.shifts[:1],))
        for s1, s2 in s.shifts:
            if not (0 <= s1 < dims.nx and 0 <= s2 < dims.ny):
                raise PlanError("shift (%d, %d) not reduced mod (%d, %d)"
                                % (s1, s2, dims.nx, dims.ny))
        if self.mode == MODE_NOISELESS:
            if s.shifts != noiseless_shifts(dims):
                raise PlanError("noiseless stages use the shift list %r, got %r"
                                % (noiseless_shifts(dims), s.shifts))
            if len(set(s.shifts)) != len(s.shifts):
                raise PlanError("duplicate shifts in %r" % (s.shifts,))
        else:
            if self.robust_params is not None:
                want = robust_chain_count(dims, self.robust_params)
                if len(s.shifts) != want:
                    raise PlanError("robust stage has %d shifts, expected %d"
                                    % (len(s.shifts), want))
            if len(s.shifts) < 3:
                raise PlanError("robust stages need at least 3 shifts")

    def _check_factor_structure(self) -> None:
        """Bin counts must realize a co-prime factor list in either regime."""
        n = self.dims.n
        candidates = []
        very = self.bin_counts
        if all(b >= 2 for b in very):
            candidates.append(very)
        if all(b >= 1 and n % b == 0 and n // b >= 2 for b in very):
            candidates.append([n // b for b in very])
        for factors in candidates:
            if _factor_list_ok(factors, n):
                return
        raise NoValidSplit(
            "stage bin counts %r do not realize a co-prime factor split of %d"
            % (self.bin_counts, n))


def _factor_list_ok(factors: list[int], n: int) -> bool:
    if any(f < 2 for f in factors):
        return False
    prod = 1
    for f in factors:
        prod *= f
    if prod != n:
        return False
    for i in range(len(factors)):
        for j in range(i + 1, len(factors)):
            if math.gcd(factors[i], factors[j]) != 1:
                return False
    return True


@dataclass
class SparseSpectrum:
    """Sparse set of DFT coefficients; entries with value exactly 0 are dropped."""

    dims: Dims
    entries: dict[tuple[int, int], complex] = field(default_factory=dict)

    @classmethod
    def from_entries(cls, dims: Dims, items) -> "SparseSpectrum":
        out: dict[tuple[int, int], complex] = {}
        for (u, v), val in dict(items).items():
            u, v = int(u), int(v)
            if not (0 <= u < dims.nx and 0 <= v < dims.ny):
                raise ValueError("location (%d, %d) outside dims (%d, %d)"
                                 % (u, v, dims.nx, dims.ny))
            val = complex(val)
            if val != 0:
                out[(u, v)] = val
        return cls(dims, out)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, u: int, v: int) -> complex:
        return self.entries.get((u, v), 0j)

    def items(self):
        return sorted(self.entries.items())


STATUS_SUCCESS = "success"
STATUS_RESIDUAL_LEFT = "residual-left"
STATUS_NOT_A_SINGLETON_LOOP = "not-a-singleton-loop"


@dataclass
class DecodeReport:
    """Decode outcome: recovered spectrum plus accounting."""

    spectrum: SparseSpectrum
    samples_touched: int
    peel_iterations: int
    status: str
    bin_stats: list[dict[str, int]]

    @property
    def oversampling_ratio(self) -> float | None:
        k = len(self.spectrum)
        return None if k == 0 else self.samples_touched / k


def build_plan(dims: Dims, factors, regime: str = REGIME_LESS_SPARSE,
               mode: str = MODE_NOISELESS,
               robust_params: RobustParams | None = None) -> FfastPlan:
    """Build a validated plan from a pairwise co-prime factor list.

    Stage i is derived from factors[i]: in the less-sparse regime it
    subsamples by factors[i] (bin count n / factors[i]); in the very-sparse
    regime its bin count is factors[i]. A stage must actually subsample
    every dimension of size > 1, otherwise the split is rejected.
    """
    factors = [int(f) for f in factors]
    if len(factors) < 2:
        raise PlanError("need at least 2 factors, got %r" % (factors,))
    if any(f < 2 for f in factors):
        raise NoValidSplit("factors must all be >= 2, got %r" % (factors,))
    for i in range(len(factors)):
        for j in range(i + 1, len(factors)):
            if math.gcd(factors[i], factors[j]) != 1:
                raise NotCoprime("factors %d and %d share a divisor"
                                 % (factors[i], factors[j]))
    prod = 1
    for f in factors:
        prod *= f
    if prod != dims.n:
        raise ProductMismatch("factor product %d != nx*ny = %d" % (prod, dims.n))
    if regime not in (REGIME_LESS_SPARSE, REGIME_VERY_SPARSE):
        raise PlanError("unknown regime %r" % (regime,))
    if mode == MODE_ROBUST:
        if robust_params is None:
            robust_params = RobustParams()
        from .robust import design_shifts  # local import, robust builds on core
    elif robust_params is not None:
        raise PlanError("robust_params given but mode is %r" % (mode,))

    stages = []
    for i, f in enumerate(factors):
        bin_count = dims.n // f if regime == REGIME_LESS_SPARSE else f
        split = _split_bins(dims, bin_count)
        if split is None:
            raise NoValidSplit(
                "factor %d: no bin grid of size %d divides dims (%d, %d) "
                "while subsampling every nontrivial dimension"
                % (f, bin_count, dims.nx, dims.ny))
        bins_x, bins_y = split
        if mode == MODE_ROBUST:
            shifts = design_shifts(dims, robust_params, robust_params.seed + i)
        else:
            shifts = noiseless_shifts(dims)
        stages.append(StageConfig.from_subsampling(
            dims, dims.nx // bins_x, dims.ny // bins_y, shifts))

    plan = FfastPlan(dims, tuple(stages), mode, robust_params)
    plan.validate()
    return plan


def _split_bins(dims: Dims, bin_count: int) -> tuple[int, int] | None:
    """First valid (bins_x, bins_y) with bins_x ascending.

    A valid split has bins_x * bins_y == bin_count with bins_x | nx and
    bins_y | ny, and leaves no dimension of size > 1 fully sampled
    (bins == dim means the stage does not subsample it at all).
    """
    for bins_x in range(1, bin_count + 1):
        if bin_count % bins_x or dims.nx % bins_x:
            continue
        bins_y = bin_count // bins_x
        if dims.ny % bins_y:
            continue
        if dims.nx > 1 and bins_x == dims.nx:
            continue
        if dims.ny > 1 and bins_y == dims.ny:
            continue
        return bins_x, bins_y
    return None


def plan_sample_budget(plan: FfastPlan) -> int:
    """Total accessor calls the front end makes: sum over stages and chains."""
    return sum(len(s.shifts) * s.bin_count for s in plan.stages)


def plan_eta(plan: FfastPlan, k: int) -> float:
    """Average bins per stage divided by the sparsity k."""
    if k <= 0:
        raise ValueError("k must be positive")
    return sum(plan.bin_counts) / len(plan.stages) / k


def plan_to_json(plan: FfastPlan, indent: int | None = None) -> str:
    doc = {
        "nx": plan.dims.nx,
        "ny": plan.dims.ny,
        "mode": plan.mode,
        "stages": [
            {"sub_x": s.sub_x, "sub_y": s.sub_y,
             "shifts": [[s1, s2] for s1, s2 in s.shifts]}
            for s in plan.stages
        ],
    }
    if plan.robust_params is not None:
        rp = plan.robust_params
        doc["robust"] = {
            "chains_per_dim": rp.chains_per_dim,
            "reps": rp.reps,
            "noise_var": rp.noise_var,
            "gamma_zero": rp.gamma_zero,
            "gamma_single": rp.gamma_single,
            "seed": rp.seed,
        }
    return json.dumps(doc, indent=indent, sort_keys=True)


def plan_from_json(text: str) -> FfastPlan:
    try:
        doc = json.loads(text)
        dims = Dims(int(doc["nx"]), int(doc["ny"]))
        mode = doc.get("mode", MODE_NOISELESS)
        params = None
        if "robust" in doc:
            r = doc["robust"]
            params = RobustParams(
                chains_per_dim=int(r["chains_per_dim"]), reps=int(r["reps"]),
                noise_var=float(r["noise_var"]), gamma_zero=float(r["gamma_zero"]),
                gamma_single=float(r["gamma_single"]), seed=int(r.get("seed", 0)))
        stages = tuple(
            StageConfig.from_subsampling(
                dims, int(s["sub_x"]), int(s["sub_y"]),
                [(int(a), int(b)) for a, b in s["shifts"]])
            for s in doc["stages"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise PlanError("malformed plan document: %s" % exc) from exc
    plan = FfastPlan(dims, stages, mode, params)
    plan.validate()
    return plan
