"""Block-wise auxiliary color evolutions.

The plus variant anticipates all color flips of a block to the block start
(positions frozen there), the minus variant postpones them to the block end.
Both run on the SAME stored walk realization and event log as the true
trajectory, so the species counts agree with the true run at every block
boundary.  The pathwise tail-mass sandwich against the true run is realized
by the coupling module, which builds these evolutions jointly with the true
one and may re-attach colors among same-site particles (an
occupation-preserving move) along the way.
"""
from __future__ import annotations

import numpy as np

from .lattice import (EventLog, ParticleState, PositionRealization,
                      SimulationError, apply_H)

PLUS = "plus"
MINUS = "minus"


def _apply_marks(colors: np.ndarray, positions: np.ndarray,
                 log: EventLog) -> np.ndarray:
    """Apply the log's marks in order as a product at frozen positions."""
    state = ParticleState(positions, colors)
    for mark in log.marks:
        state = apply_H(state, mark)
    return state.colors


def run_block_plus(ps: ParticleState, log: EventLog,
                   realization: PositionRealization,
                   t_lo: float, t_hi: float) -> ParticleState:
    """Anticipate the block's flips at t_lo, then transport to t_hi."""
    if abs(ps.time - t_lo) > 1e-9:
        raise SimulationError(f"state time {ps.time} != block start {t_lo}")
    block = log.restrict(t_lo, t_hi)
    colors = _apply_marks(ps.colors, realization.positions_at(t_lo), block)
    return ParticleState(realization.positions_at(t_hi), colors, time=t_hi)


def run_block_minus(ps: ParticleState, log: EventLog,
                    realization: PositionRealization,
                    t_lo: float, t_hi: float) -> ParticleState:
    """Transport to t_hi first, then apply the block's flips there."""
    if abs(ps.time - t_lo) > 1e-9:
        raise SimulationError(f"state time {ps.time} != block start {t_lo}")
    block = log.restrict(t_lo, t_hi)
    positions = realization.positions_at(t_hi)
    colors = _apply_marks(ps.colors, positions, block)
    return ParticleState(positions, colors, time=t_hi)


def run_aux(initial: ParticleState, log: EventLog,
            realization: PositionRealization, block_len: float, K: int,
            variant: str) -> list[ParticleState]:
    """Iterate the block operation over K blocks of microscopic length
    block_len; returns states at the block boundaries t_k, k = 0..K.

    The returned state at t_k carries the flips of blocks 0..k-1, matching
    the one-sided continuity convention of each variant.
    """
    if variant not in (PLUS, MINUS):
        raise SimulationError(f"variant must be 'plus' or 'minus', got {variant!r}")
    if initial.time != 0:
        raise SimulationError("auxiliary runs start at time 0")
    step = run_block_plus if variant == PLUS else run_block_minus
    states = [initial.copy()]
    cur = initial
    for k in range(K):
        cur = step(cur, log, realization, k * block_len, (k + 1) * block_len)
        states.append(cur)
    return states
