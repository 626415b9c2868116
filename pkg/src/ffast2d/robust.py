"""Noise-robust chain design and decoding.

The noiseless ratio test breaks down once observations carry noise, so
robust stages use many chains: an anchor plus, per dimension and per bit
level j, repeated shift pairs (r, r + 2^j) with fresh random offsets r.
The phase difference of a pair's two observations isolates
frac(2^j * u / n) for a lone contributor at index u, independent of r, so
a dyadic unwrapping ladder rebuilds u level by level. Repetitions are
combined by a median over the per-repetition integer estimates, which
equals the majority answer whenever a strict majority agrees.

Energy thresholds against the per-bin noise variance sigma2/B replace the
exact zero test, and the value estimate is least squares across all
chains rather than the anchor alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (Dims, FfastError, FfastPlan, MODE_ROBUST, DecodeReport,
                   RobustParams, SparseSpectrum, STATUS_NOT_A_SINGLETON_LOOP,
                   STATUS_RESIDUAL_LEFT, STATUS_SUCCESS, bit_levels,
                   robust_chain_count)
from .frontend import BinObservation, chain_weights, run_frontend
from .peeler import (BinClass, KIND_MULTI_TON, KIND_SINGLETON, KIND_ZERO_TON,
                     WrongShiftLayout, observation_zero_threshold)

__all__ = ["RobustParams", "design_shifts", "robust_classify", "robust_decode",
           "estimate_noise_variance"]


def design_shifts(dims: Dims, params: RobustParams, seed: int):
    """Anchor plus per-dimension dyadic offset pairs; deterministic in seed.

    Offsets are rejection-sampled for distinctness against all shifts so
    far; tiny grids that cannot avoid repeats fall back to duplicates.
    """
    rng = np.random.default_rng(seed)
    shifts = [(0, 0)]
    used = {(0, 0)}
    reps = params.chains_per_dim * params.reps
    for n, along_x in ((dims.nx, True), (dims.ny, False)):
        for j in range(bit_levels(n)):
            step = 1 << j
            for _ in range(reps):
                pair = None
                for _ in range(64):
                    r = int(rng.integers(n))
                    a, b = r, (r + step) % n
                    cand = ((a, 0), (b, 0)) if along_x else ((0, a), (0, b))
                    if cand[0] not in used and cand[1] not in used:
                        pair = cand
                        break
                    pair = pair or cand
                used.update(pair)
                shifts.extend(pair)
    return tuple(shifts)


@dataclass(frozen=True)
class _DimLadder:
    """Chain bookkeeping for one dimension: pairs[j*reps + rep] = (c1, c2)."""

    n: int
    levels: int
    reps: int
    pairs: tuple[tuple[int, int], ...]


def _parse_layout(shifts, dims: Dims, params: RobustParams):
    """Validates the design_shifts structure and indexes its pairs."""
    if len(shifts) != robust_chain_count(dims, params):
        raise WrongShiftLayout("expected %d chains, got %d"
                               % (robust_chain_count(dims, params), len(shifts)))
    if tuple(shifts[0]) != (0, 0):
        raise WrongShiftLayout("first chain must be the unshifted anchor")
    reps = params.chains_per_dim * params.reps
    ladders = []
    c = 1
    for n, along_x in ((dims.nx, True), (dims.ny, False)):
        pairs = []
        for j in range(bit_levels(n)):
            step = 1 << j
            for _ in range(reps):
                (a1, a2), (b1, b2) = shifts[c], shifts[c + 1]
                on, off = ((a1, b1), (a2, b2)) if along_x else ((a2, b2), (a1, b1))
                if off != (0, 0) or (on[1] - on[0]) % n != step:
                    raise WrongShiftLayout(
                        "chains %d,%d do not form a level-%d pair in %s"
                        % (c, c + 1, j, "x" if along_x else "y"))
                pairs.append((c, c + 1))
                c += 2
        ladders.append(_DimLadder(n, bit_levels(n), reps, tuple(pairs)))
    return ladders


def _ladder_decode(ys: np.ndarray, ladder: _DimLadder) -> np.ndarray:
    """Integer indices from pair phase differences, shape (m,) for (C, m) ys."""
    m = ys.shape[1]
    if ladder.levels == 0:
        return np.zeros(m, dtype=np.int64)
    frac = np.empty((ladder.levels, ladder.reps, m))
    for p, (c1, c2) in enumerate(ladder.pairs):
        j, rep = divmod(p, ladder.reps)
        frac[j, rep] = np.angle(ys[c2] * np.conj(ys[c1])) / (2 * np.pi) % 1.0
    est = frac[0]
    for j in range(1, ladder.levels):
        whole = np.rint(est * (1 << j) - frac[j])
        est = (whole + frac[j]) / (1 << j)
    ints = np.rint(est * ladder.n).astype(np.int64) % ladder.n
    return np.sort(ints, axis=0)[ladder.reps // 2]


def _estimate_bins(ys: np.ndarray, shifts_arr: np.ndarray, ladders,
                   dims: Dims):
    """Location, least-squares value and residual energy per column of ys."""
    uu = _ladder_decode(ys, ladders[0])
    vv = _ladder_decode(ys, ladders[1])
    ph = (uu[None, :] * shifts_arr[:, :1] / dims.nx
          + vv[None, :] * shifts_arr[:, 1:] / dims.ny)
    w = np.exp(2j * np.pi * ph)
    vals = (np.conj(w) * ys).sum(axis=0) / ys.shape[0]
    resid = (np.abs(ys - vals[None, :] * w) ** 2).sum(axis=0)
    return uu, vv, vals, resid


def robust_classify(obs: BinObservation, dims: Dims, params: RobustParams,
                    noise_var: float | None = None,
                    zero_thresh: float | None = None) -> BinClass:
    """Classifies one robust-layout observation vector."""
    ladders = _parse_layout(obs.shifts, dims, params)
    ys = np.asarray(obs.values, dtype=np.complex128)[:, None]
    if ys.shape[0] != len(obs.shifts):
        raise WrongShiftLayout("expected %d chain values, got %d"
                               % (len(obs.shifts), ys.shape[0]))
    sigma2 = params.noise_var if noise_var is None else noise_var
    if zero_thresh is None:
        zero_thresh = 1e-9 * (1.0 + float(np.abs(ys).max()))
    chains = ys.shape[0]
    floor = chains * zero_thresh ** 2
    energy = float((np.abs(ys) ** 2).sum())
    if energy <= (1 + params.gamma_zero) * chains * sigma2 + floor:
        return BinClass.zero_ton()
    shifts_arr = np.asarray(obs.shifts, dtype=np.float64)
    uu, vv, vals, resid = _estimate_bins(ys, shifts_arr, ladders, dims)
    if abs(vals[0]) <= zero_thresh:
        return BinClass.multi_ton()
    if resid[0] > (1 + params.gamma_single) * chains * sigma2 + floor:
        return BinClass.multi_ton()
    return BinClass.singleton((int(uu[0]), int(vv[0])), complex(vals[0]))


def _robust_stage_scan(stack, stage, dims, params, sigma2_obs, zero_thresh,
                       ladders, shifts_arr):
    """Vectorized pass over one stage: nonzero mask plus verified candidates."""
    chains = stack.shape[0]
    floor = chains * zero_thresh ** 2
    energy = (np.abs(stack) ** 2).sum(axis=0)
    nonzero = energy > (1 + params.gamma_zero) * chains * sigma2_obs + floor
    idx = np.argwhere(nonzero)
    if len(idx) == 0:
        return nonzero, []
    ys = stack[:, nonzero]
    uu, vv, vals, resid = _estimate_bins(ys, shifts_arr, ladders, dims)
    ok = (resid <= (1 + params.gamma_single) * chains * sigma2_obs + floor)
    ok &= np.abs(vals) > zero_thresh
    ok &= (uu % stage.bins_x == idx[:, 0]) & (vv % stage.bins_y == idx[:, 1])
    cands = [(int(i), int(j), int(u), int(v))
             for (i, j), u, v, good in zip(idx, uu, vv, ok) if good]
    return nonzero, cands


def robust_decode(source, plan: FfastPlan, params: RobustParams | None = None,
                  min_magnitude: float = 0.0, max_rounds: int | None = None,
                  trace=None) -> DecodeReport:
    """Front end plus peeling with the robust classifier."""
    if plan.mode != MODE_ROBUST:
        raise FfastError("robust_decode() needs a robust-mode plan")
    if params is None:
        params = plan.robust_params
    if params is None:
        raise FfastError("no robust parameters on the plan or the call")
    plan.validate()
    dims = plan.dims
    ladders = [_parse_layout(s.shifts, dims, params) for s in plan.stages]
    shift_arrs = [np.asarray(s.shifts, dtype=np.float64) for s in plan.stages]
    sigma2_obs = [params.noise_var / s.bin_count for s in plan.stages]

    before = source.access_count
    stacks = run_frontend(plan, source)
    touched = source.access_count - before
    zero_thresh = observation_zero_threshold(stacks)

    def scan(si):
        return _robust_stage_scan(stacks[si], plan.stages[si], dims, params,
                                  sigma2_obs[si], zero_thresh, ladders[si],
                                  shift_arrs[si])

    bin_stats = []
    for si, stage in enumerate(plan.stages):
        nonzero, cands = scan(si)
        live = int(nonzero.sum())
        bin_stats.append({KIND_ZERO_TON: int(nonzero.size - live),
                          KIND_SINGLETON: len(cands),
                          KIND_MULTI_TON: live - len(cands)})

    if max_rounds is None:
        max_rounds = sum(plan.bin_counts) + len(plan.stages)
    recovered: dict[tuple[int, int], complex] = {}
    events = 0
    rounds = 0
    deadlock = False
    prev_live = float("inf")
    while rounds < max_rounds:
        rounds += 1
        progressed = False
        for si, stage in enumerate(plan.stages):
            _, cands = scan(si)
            for i, j, _, _ in cands:
                obs = BinObservation(si, (i, j), stacks[si][:, i, j].copy(),
                                     stage.shifts)
                cls = robust_classify(obs, dims, params,
                                      noise_var=sigma2_obs[si],
                                      zero_thresh=zero_thresh)
                if cls.kind != KIND_SINGLETON:
                    continue
                u, v = cls.location
                if (u % stage.bins_x, v % stage.bins_y) != (i, j):
                    continue
                recovered[(u, v)] = recovered.get((u, v), 0j) + cls.value
                events += 1
                progressed = True
                if trace is not None:
                    trace({"round": rounds, "stage": si, "bin": (i, j),
                           "location": (u, v), "value": cls.value})
                for t, st in enumerate(plan.stages):
                    bi, bj = u % st.bins_x, v % st.bins_y
                    stacks[t][:, bi, bj] -= cls.value * chain_weights(dims, st, u, v)
        # a real peel quiets the bin it was detected in; a round that fails
        # to shrink the live-bin count is noise-driven churn, not progress
        live = sum(int(scan(si)[0].sum()) for si in range(len(plan.stages)))
        if not progressed or live >= prev_live:
            deadlock = True
            break
        prev_live = live

    residual = any(scan(si)[0].any() for si in range(len(plan.stages)))
    cut = max(min_magnitude, zero_thresh)
    entries = {loc: val for loc, val in recovered.items() if abs(val) > cut}
    if not residual and len(entries) == events:
        status = STATUS_SUCCESS
    elif deadlock and residual:
        status = STATUS_NOT_A_SINGLETON_LOOP
    else:
        status = STATUS_RESIDUAL_LEFT
    return DecodeReport(SparseSpectrum.from_entries(dims, entries),
                        touched, rounds, status, bin_stats)


def estimate_noise_variance(source, plan: FfastPlan) -> float:
    """Bootstrap per-sample noise variance from mostly-empty bins.

    Most bins hold no coefficient, so the median per-chain bin energy is a
    robust estimate of sigma2 / B; bins below 1.5x the median are averaged
    for the final figure and rescaled by B.
    """
    stacks = run_frontend(plan, source)
    per_stage = []
    for stack, stage in zip(stacks, plan.stages):
        e = (np.abs(stack) ** 2).mean(axis=0)
        med = float(np.median(e))
        quiet = e[e <= 1.5 * med] if med > 0 else e
        per_stage.append(float(quiet.mean()) * stage.bin_count)
    return float(np.mean(per_stage))
