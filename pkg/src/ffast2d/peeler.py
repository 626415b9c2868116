"""Bin classification via phase ratios and the iterative peeling decoder.

A bin's observation vector y has one entry per delay chain:
y[c] = sum of X[u][v] * exp(2j*pi*(u*s1_c/nx + v*s2_c/ny)) over the
coefficients aliased into the bin. Under the noiseless chain layout
[(0,0), (1,0), (0,1)] a lone contributor betrays its location through

    u = (nx / 2pi) * angle(y[1] * conj(y[0])) mod nx
    v = (ny / 2pi) * angle(y[2] * conj(y[0])) mod ny

and its value is y[0] itself. The decoder repeatedly scans all stages,
verifies suspected single contributors against every chain, records them,
and subtracts their weighted contribution from the bin they occupy in
every stage, until the observations are exhausted or no progress is made.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .core import (Dims, FfastError, FfastPlan, MODE_NOISELESS, DecodeReport,
                   SparseSpectrum, STATUS_NOT_A_SINGLETON_LOOP,
                   STATUS_RESIDUAL_LEFT, STATUS_SUCCESS, noiseless_shifts)
from .frontend import BinObservation, chain_weights, run_frontend

KIND_ZERO_TON = "zero-ton"
KIND_SINGLETON = "singleton"
KIND_MULTI_TON = "multi-ton"

DEFAULT_TOL_ANGLE = 0.05
DEFAULT_TOL_RESIDUAL = 1e-6


class WrongShiftLayout(FfastError, ValueError):
    """Observation chains do not follow the expected shift layout."""


@dataclass(frozen=True)
class BinClass:
    """Classification of one bin: how many coefficients it holds."""

    kind: str
    location: tuple[int, int] | None = None
    value: complex = 0j

    @classmethod
    def zero_ton(cls) -> "BinClass":
        return cls(KIND_ZERO_TON)

    @classmethod
    def singleton(cls, location, value) -> "BinClass":
        return cls(KIND_SINGLETON, (int(location[0]), int(location[1])),
                   complex(value))

    @classmethod
    def multi_ton(cls) -> "BinClass":
        return cls(KIND_MULTI_TON)


def observation_zero_threshold(stacks) -> float:
    """Global scale-aware floor separating empty bins from live ones."""
    scale = 0.0
    for stack in stacks:
        if stack.size:
            scale = max(scale, float(np.abs(stack[0]).max()))
    return 1e-9 * (1.0 + scale)


def ratio_estimates(values, dims: Dims) -> tuple[float, float]:
    """Raw (pre-rounding) location estimates from the observation phases."""
    values = np.asarray(values)
    est_u, est_v = 0.0, 0.0
    idx = 1
    if dims.nx > 1:
        est_u = float(np.angle(values[1] * np.conj(values[0]))
                      * dims.nx / (2 * np.pi) % dims.nx)
        idx = 2
    if dims.ny > 1:
        est_v = float(np.angle(values[idx] * np.conj(values[0]))
                      * dims.ny / (2 * np.pi) % dims.ny)
    return est_u, est_v


def _classify_values(values, shifts, dims: Dims, tol_angle: float,
                     tol_residual: float, zero_thresh: float) -> BinClass:
    amax = max(abs(y) for y in values)
    if amax <= zero_thresh:
        return BinClass.zero_ton()
    anchor = values[0]
    if abs(anchor) <= zero_thresh:
        return BinClass.multi_ton()
    est_u, est_v = ratio_estimates(values, dims)
    u = int(round(est_u)) % dims.nx
    v = int(round(est_v)) % dims.ny
    if abs(est_u - round(est_u)) > tol_angle or abs(est_v - round(est_v)) > tol_angle:
        return BinClass.multi_ton()
    for (s1, s2), y in zip(shifts, values):
        w = cmath.exp(2j * cmath.pi * (u * s1 / dims.nx + v * s2 / dims.ny))
        if abs(y - anchor * w) > tol_residual * abs(anchor):
            return BinClass.multi_ton()
    return BinClass.singleton((u, v), anchor)


def ratio_test(obs: BinObservation, dims: Dims,
               tol_angle: float = DEFAULT_TOL_ANGLE,
               tol_residual: float = DEFAULT_TOL_RESIDUAL,
               zero_thresh: float = 0.0) -> BinClass:
    """Classifies one noiseless-layout observation."""
    expected = noiseless_shifts(dims)
    if tuple(obs.shifts) != expected:
        raise WrongShiftLayout("expected chain shifts %r, got %r"
                               % (expected, tuple(obs.shifts)))
    if len(obs.values) != len(expected):
        raise WrongShiftLayout("expected %d chain values, got %d"
                               % (len(expected), len(obs.values)))
    return _classify_values(obs.values, expected, dims,
                            tol_angle, tol_residual, zero_thresh)


def _stage_scan(stack: np.ndarray, stage, dims: Dims, tol_angle: float,
                tol_residual: float, zero_thresh: float):
    """Vectorized snapshot classification of every bin in one stage.

    Returns (nonzero mask, verified-singleton mask). Candidates still get
    a scalar re-check before peeling because earlier subtractions in the
    same round can invalidate the snapshot.
    """
    anchor = stack[0]
    nonzero = np.abs(stack).max(axis=0) > zero_thresh
    ok = nonzero & (np.abs(anchor) > zero_thresh)
    uu = np.zeros(anchor.shape, dtype=np.int64)
    vv = np.zeros(anchor.shape, dtype=np.int64)
    idx = 1
    if dims.nx > 1:
        est = np.angle(stack[1] * np.conj(anchor)) * dims.nx / (2 * np.pi) % dims.nx
        snapped = np.rint(est)
        ok &= np.abs(est - snapped) <= tol_angle
        uu = snapped.astype(np.int64) % dims.nx
        idx = 2
    if dims.ny > 1:
        est = np.angle(stack[idx] * np.conj(anchor)) * dims.ny / (2 * np.pi) % dims.ny
        snapped = np.rint(est)
        ok &= np.abs(est - snapped) <= tol_angle
        vv = snapped.astype(np.int64) % dims.ny
    # recovered location must alias back into the bin it was observed in
    ok &= (uu % stage.bins_x == np.arange(stage.bins_x)[:, None])
    ok &= (vv % stage.bins_y == np.arange(stage.bins_y)[None, :])
    resid = np.zeros(anchor.shape)
    for c, (s1, s2) in enumerate(stage.shifts):
        w = np.exp(2j * np.pi * (uu * s1 / dims.nx + vv * s2 / dims.ny))
        resid = np.maximum(resid, np.abs(stack[c] - anchor * w))
    ok &= resid <= tol_residual * np.abs(anchor)
    return nonzero, ok


def _subtract(stacks, plan: FfastPlan, u: int, v: int, value: complex) -> None:
    for t, stage in enumerate(plan.stages):
        i, j = u % stage.bins_x, v % stage.bins_y
        stacks[t][:, i, j] -= value * chain_weights(plan.dims, stage, u, v)


def _first_pass_stats(stacks, plan, tol_angle, tol_residual, zero_thresh):
    stats = []
    for stack, stage in zip(stacks, plan.stages):
        nonzero, ok = _stage_scan(stack, stage, plan.dims, tol_angle,
                                  tol_residual, zero_thresh)
        stats.append({KIND_ZERO_TON: int(stack[0].size - nonzero.sum()),
                      KIND_SINGLETON: int(ok.sum()),
                      KIND_MULTI_TON: int((nonzero & ~ok).sum())})
    return stats


def _peel_stacks(stacks, plan: FfastPlan, samples_touched: int,
                 max_rounds: int | None, tol_angle: float,
                 tol_residual: float, trace=None) -> DecodeReport:
    dims = plan.dims
    zero_thresh = observation_zero_threshold(stacks)
    bin_stats = _first_pass_stats(stacks, plan, tol_angle, tol_residual,
                                  zero_thresh)
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
            _, ok = _stage_scan(stacks[si], stage, dims, tol_angle,
                                tol_residual, zero_thresh)
            for i, j in np.argwhere(ok):
                cls = _classify_values(stacks[si][:, i, j], stage.shifts, dims,
                                       tol_angle, tol_residual, zero_thresh)
                if cls.kind != KIND_SINGLETON:
                    continue
                u, v = cls.location
                if (u % stage.bins_x, v % stage.bins_y) != (i, j):
                    continue
                recovered[(u, v)] = recovered.get((u, v), 0j) + cls.value
                events += 1
                progressed = True
                if trace is not None:
                    trace({"round": rounds, "stage": si, "bin": (int(i), int(j)),
                           "location": (u, v), "value": cls.value})
                _subtract(stacks, plan, u, v, cls.value)
        # a real peel drains the bin it was detected in, so genuine progress
        # strictly shrinks the live-bin count; a flat round is churn
        live = sum(int((np.abs(stack).max(axis=0) > zero_thresh).sum())
                   for stack in stacks)
        if not progressed or live >= prev_live:
            deadlock = True
            break
        prev_live = live
    residual = any(np.abs(stack).max() > zero_thresh for stack in stacks
                   if stack.size)
    entries = {loc: val for loc, val in recovered.items()
               if abs(val) > zero_thresh}
    if not residual and len(entries) == events:
        status = STATUS_SUCCESS
    elif deadlock and residual:
        status = STATUS_NOT_A_SINGLETON_LOOP
    else:
        status = STATUS_RESIDUAL_LEFT
    return DecodeReport(SparseSpectrum.from_entries(dims, entries),
                        samples_touched, rounds, status, bin_stats)


def peel(bins, plan: FfastPlan, max_rounds: int | None = None,
         tol_angle: float = DEFAULT_TOL_ANGLE,
         tol_residual: float = DEFAULT_TOL_RESIDUAL,
         samples_touched: int = 0, trace=None) -> DecodeReport:
    """Runs the peeling loop on pre-assembled bin observations."""
    stacks = [np.zeros((len(s.shifts), s.bins_x, s.bins_y), dtype=np.complex128)
              for s in plan.stages]
    filled = [np.zeros((s.bins_x, s.bins_y), dtype=bool) for s in plan.stages]
    for obs in bins:
        stage = plan.stages[obs.stage]
        if len(obs.values) != len(stage.shifts):
            raise WrongShiftLayout("observation has %d chain values, stage has %d"
                                   % (len(obs.values), len(stage.shifts)))
        i, j = obs.bin
        stacks[obs.stage][:, i, j] = obs.values
        filled[obs.stage][i, j] = True
    for si, mask in enumerate(filled):
        if not mask.all():
            raise ValueError("stage %d is missing %d bin observations"
                             % (si, int((~mask).sum())))
    return _peel_stacks(stacks, plan, samples_touched, max_rounds,
                        tol_angle, tol_residual, trace)


def decode(source, plan: FfastPlan, max_rounds: int | None = None,
           tol_angle: float = DEFAULT_TOL_ANGLE,
           tol_residual: float = DEFAULT_TOL_RESIDUAL,
           trace=None) -> DecodeReport:
    """Front end plus peeling: the full sparse transform, noiseless mode."""
    if plan.mode != MODE_NOISELESS:
        raise FfastError("decode() handles noiseless plans; "
                         "robust plans go through robust_decode()")
    plan.validate()
    before = source.access_count
    stacks = run_frontend(plan, source)
    touched = source.access_count - before
    return _peel_stacks(stacks, plan, touched, max_rounds,
                        tol_angle, tol_residual, trace)
