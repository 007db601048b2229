"""Free-boundary reference solution and Monte Carlo validation.

The reference pair (u, v) solves two coupled heat equations with absorption
at moving boundaries and point sources riding on them: u is absorbed at its
right edge U_t and fed at v's left edge V_t at rate kappa, and v is the
mirror image.  The solver reuses the deterministic barrier iterations at a
fine time step; the bracket between the lower and upper variants bounds the
scheme error.  Monte Carlo validation checks the probabilistic
representation of u (absorbed Brownian paths plus a boundary source) and the
global absorbed-mass identity.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .macro import (GridSpec, ProfileError, ProfilePair, iterate_barriers,
                    l1_distance_u, node_weights, resample, tail_integral)


class FbpError(ProfileError):
    pass


# ---------------------------------------------------------------------------
# boundary curves


@dataclass
class BoundaryCurves:
    """Sampled free boundaries: U (right edge of u), V (left edge of v)."""

    times: np.ndarray
    U: np.ndarray
    V: np.ndarray

    def U_at(self, t):
        return np.interp(t, self.times, self.U)

    def V_at(self, t):
        return np.interp(t, self.times, self.V)


def _right_edge(f: np.ndarray, grid: GridSpec, thr: float) -> float:
    """Rightmost threshold crossing of f, linearly interpolated."""
    idx = np.nonzero(f > thr)[0]
    if len(idx) == 0:
        raise FbpError("empty support while extracting a boundary")
    j = int(idx[-1])
    nodes = grid.nodes()
    if j == grid.n_nodes - 1:
        return float(nodes[j])
    lam = (f[j] - thr) / max(f[j] - f[j + 1], 1e-300)
    return float(nodes[j] + lam * grid.h)


def _left_edge(f: np.ndarray, grid: GridSpec, thr: float) -> float:
    idx = np.nonzero(f > thr)[0]
    if len(idx) == 0:
        raise FbpError("empty support while extracting a boundary")
    j = int(idx[0])
    nodes = grid.nodes()
    if j == 0:
        return float(nodes[0])
    lam = (f[j] - thr) / max(f[j] - f[j - 1], 1e-300)
    return float(nodes[j] - lam * grid.h)


def extract_boundaries(profiles: list[ProfilePair], times: np.ndarray,
                       thr_frac: float = 1e-6) -> BoundaryCurves:
    """Support edges of the sharp (lower-variant) profiles at each time.

    U_t is where u last exceeds thr_frac times the pair's peak, V_t where v
    first does.  The overlap ordering V_t < U_t is enforced.
    """
    U = np.empty(len(profiles))
    V = np.empty(len(profiles))
    for k, p in enumerate(profiles):
        peak = max(float(p.u.max(initial=0.0)), float(p.v.max(initial=0.0)))
        thr = thr_frac * peak
        U[k] = _right_edge(p.u, p.grid, thr)
        V[k] = _left_edge(p.v, p.grid, thr)
        if not V[k] < U[k]:
            raise FbpError(f"boundaries crossed at t={times[k]}: "
                           f"V={V[k]} >= U={U[k]}")
    return BoundaryCurves(np.asarray(times, float), U, V)


# ---------------------------------------------------------------------------
# reference solution


@dataclass
class FbpSolution:
    kappa: float
    delta: float
    times: np.ndarray
    minus: list[ProfilePair]
    plus: list[ProfilePair] | None
    boundaries: BoundaryCurves
    bracket_widths: np.ndarray | None
    annihilated: bool = False

    def index_at(self, t: float) -> int:
        k = int(round(t / self.delta))
        if not 0 <= k < len(self.minus) or abs(k * self.delta - t) > 1e-9:
            raise FbpError(f"time {t} is not a stored step (delta={self.delta})")
        return k

    def profile_at(self, t: float) -> ProfilePair:
        """Midpoint of the two variants when both are stored, else the lower."""
        k = self.index_at(t)
        lo = self.minus[k]
        if self.plus is None:
            return lo
        hi = resample(self.plus[k], lo.grid)
        return ProfilePair(lo.grid, 0.5 * (lo.u + hi.u), 0.5 * (lo.v + hi.v))


def solve_reference(initial: ProfilePair, kappa: float, T: float, delta: float,
                    both_variants: bool = True) -> FbpSolution:
    """Run the barrier iterations up to T in steps of delta and package the
    lower-variant boundaries and (optionally) the two-sided bracket.

    Stops early with `annihilated` set if a transfer would exhaust a species.
    """
    from .macro import AnnihilationError, barrier_step

    n = int(round(T / delta))
    if abs(n * delta - T) > 1e-9 * max(T, 1.0):
        raise FbpError(f"T={T} is not a multiple of delta={delta}")
    annihilated = False
    minus = [initial]
    try:
        for _ in range(n):
            minus.append(barrier_step(minus[-1], delta, kappa, "minus"))
    except AnnihilationError:
        annihilated = True
    times = delta * np.arange(len(minus))
    plus = None
    widths = None
    if both_variants:
        try:
            plus = iterate_barriers(initial, delta, kappa, len(minus) - 1, "plus")
        except AnnihilationError:
            annihilated = True
            plus = None
        if plus is not None:
            widths = np.array([l1_distance_u(lo, hi)
                               for lo, hi in zip(minus, plus)])
    boundaries = extract_boundaries(minus, times)
    return FbpSolution(kappa, delta, times, minus, plus, boundaries, widths,
                       annihilated)


# ---------------------------------------------------------------------------
# boundary flux


def boundary_flux_u(p: ProfilePair, U_r: float, n_fit: int = 5,
                    skip: int = 2) -> float:
    """Outward flux -u_r/2 at the right edge of u, from a least-squares line
    through n_fit+1 nodes ending `skip` cells inside the boundary."""
    grid = p.grid
    j = int(math.floor((U_r - grid.r_min) / grid.h))
    hi = j - skip
    lo = hi - n_fit
    if lo < 0:
        raise FbpError("not enough interior nodes for the flux fit")
    rs = grid.nodes()[lo:hi + 1]
    slope = np.polyfit(rs, p.u[lo:hi + 1], 1)[0]
    return -0.5 * float(slope)


def boundary_flux_v(p: ProfilePair, V_r: float, n_fit: int = 5,
                    skip: int = 2) -> float:
    """Outward flux v_r/2 at the left edge of v (mirror of boundary_flux_u)."""
    grid = p.grid
    j = int(math.ceil((V_r - grid.r_min) / grid.h))
    lo = j + skip
    hi = lo + n_fit
    if hi >= grid.n_nodes:
        raise FbpError("not enough interior nodes for the flux fit")
    rs = grid.nodes()[lo:hi + 1]
    slope = np.polyfit(rs, p.v[lo:hi + 1], 1)[0]
    return 0.5 * float(slope)


def flux_series(sol: FbpSolution, t_lo: float, t_hi: float
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary fluxes of u and v from the lower-variant profiles at every
    stored step in [t_lo, t_hi]."""
    sel = (sol.times >= t_lo - 1e-12) & (sol.times <= t_hi + 1e-12)
    ts = sol.times[sel]
    fu = np.empty(len(ts))
    fv = np.empty(len(ts))
    for out_i, k in enumerate(np.nonzero(sel)[0]):
        fu[out_i] = boundary_flux_u(sol.minus[k], sol.boundaries.U[k])
        fv[out_i] = boundary_flux_v(sol.minus[k], sol.boundaries.V[k])
    return ts, fu, fv


def _extrapolated_right_zero(f: np.ndarray, grid: GridSpec, edge: float,
                             n_fit: int = 5, skip: int = 2) -> float:
    """Zero crossing of the near-edge least-squares line, clamped to lie at
    or beyond the support edge."""
    j = int(math.floor((edge - grid.r_min) / grid.h))
    hi = j - skip
    lo = hi - n_fit
    if lo < 0:
        return edge
    rs = grid.nodes()[lo:hi + 1]
    slope, icept = np.polyfit(rs, f[lo:hi + 1], 1)
    if slope >= 0:
        return edge
    return min(max(edge, float(-icept / slope)), edge + 0.5)


def refined_boundary_curves(sol: FbpSolution) -> BoundaryCurves:
    """Absorption boundaries corrected for the cut-off strip.

    The support edge of a sharp-cut profile sits about sqrt(2*kappa*delta /
    slope) inside the limiting free boundary, because the cut removes the
    tail chunk that the limit profile still carries.  Extrapolating the
    near-edge linear piece to zero cancels that offset, so the refined
    curves converge at rate delta instead of sqrt(delta)."""
    bd = sol.boundaries
    U = np.empty_like(bd.U)
    V = np.empty_like(bd.V)
    for k, p in enumerate(sol.minus):
        U[k] = _extrapolated_right_zero(p.u, p.grid, bd.U[k])
        mg = GridSpec(-p.grid.r_max, -p.grid.r_min, p.grid.n_cells)
        V[k] = -_extrapolated_right_zero(p.v[::-1], mg, -bd.V[k])
    return BoundaryCurves(bd.times.copy(), U, V)


# ---------------------------------------------------------------------------
# absorbed Brownian paths


def simulate_absorbed(starts_x: np.ndarray, starts_t: np.ndarray, t_end: float,
                      upper, dt: float, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Euler paths with absorption at a moving upper boundary.

    `upper` maps (an array of) times to boundary values.  Paths activate at
    their start times; between grid points the crossing probability of the
    Brownian bridge, exp(-2(a1-x1)(a2-x2)/dt), catches excursions the
    endpoints miss.  Returns (final positions, absorbed flags).
    """
    x = np.asarray(starts_x, dtype=float).copy()
    starts_t = np.asarray(starts_t, dtype=float)
    n_steps = int(round(t_end / dt))
    grid_t = dt * np.arange(n_steps + 1)
    bvals = np.asarray(upper(grid_t), dtype=float)
    start_idx = np.clip(np.ceil(starts_t / dt - 1e-12).astype(int), 0, n_steps)
    absorbed = np.zeros(len(x), dtype=bool)
    for k in range(n_steps):
        active = np.nonzero((start_idx <= k) & ~absorbed)[0]
        if len(active) == 0:
            continue
        a1, a2 = bvals[k], bvals[k + 1]
        x1 = x[active]
        x2 = x1 + math.sqrt(dt) * rng.standard_normal(len(active))
        hit = x2 >= a2
        safe = ~hit
        if np.any(safe):
            p = np.exp(-2.0 * (a1 - x1[safe]) * (a2 - x2[safe]) / dt)
            hit[safe] = rng.random(np.count_nonzero(safe)) < p
        absorbed[active[hit]] = True
        x[active] = x2
    return x, absorbed


def absorption_prob_const(r0: float, a: float, t: float) -> float:
    """Reflection-principle hitting probability of a constant level a > r0."""
    return 2.0 * (1.0 - 0.5 * (1.0 + math.erf((a - r0) / math.sqrt(2.0 * t))))


def constant_boundary_check(r0: float, a: float, t: float, n_paths: int,
                            dt: float, rng: np.random.Generator
                            ) -> tuple[float, float, float]:
    """(MC estimate, exact value, standard error) of the hitting probability;
    used as a correctness gate before trusting moving-boundary runs."""
    _, absorbed = simulate_absorbed(np.full(n_paths, r0), np.zeros(n_paths),
                                    t, lambda ts: np.full_like(ts, a), dt, rng)
    p = float(np.mean(absorbed))
    se = math.sqrt(max(p * (1 - p), 1e-12) / n_paths)
    return p, absorption_prob_const(r0, a, t), se


# ---------------------------------------------------------------------------
# Monte Carlo validation of the representation


def _sample_from_density(f: np.ndarray, grid: GridSpec, n: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw n points with density proportional to the node-sampled f, uniform
    within each node's weight cell."""
    w = node_weights(grid) * np.asarray(f, float)
    w = np.clip(w, 0.0, None)
    idx = rng.choice(grid.n_nodes, size=n, p=w / w.sum())
    return grid.nodes()[idx] + grid.h * (rng.random(n) - 0.5)


@dataclass
class IntervalCheck:
    r_lo: float
    r_hi: float
    reference: float
    estimate: float
    se: float

    @property
    def z(self) -> float:
        return (self.estimate - self.reference) / max(self.se, 1e-300)


@dataclass
class MassIdentityCheck:
    t: float
    target: float
    estimate: float
    se: float

    @property
    def z(self) -> float:
        return (self.estimate - self.target) / max(self.se, 1e-300)


@dataclass
class McReport:
    side: str
    t: float
    intervals: list[IntervalCheck]
    mass: MassIdentityCheck
    max_abs_z: float = field(init=False)

    def __post_init__(self):
        self.max_abs_z = max(abs(iv.z) for iv in self.intervals)

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "t": self.t,
            "max_abs_z": self.max_abs_z,
            "mass": vars(self.mass) | {"z": self.mass.z},
            "intervals": [vars(iv) | {"z": iv.z} for iv in self.intervals],
        }


def _side_data(sol: FbpSolution, side: str):
    """Geometry for one species in the 'upper absorbing boundary' frame.

    The v side is handled by reflecting space, which turns its left-edge
    absorption into a right-edge one.
    """
    p0 = sol.minus[0]
    bd = refined_boundary_curves(sol)
    if side == "u":
        f0, grid0 = p0.u, p0.grid
        upper = lambda ts: bd.U_at(ts)
        source = lambda ts: bd.V_at(ts)
        flip = 1.0
    elif side == "v":
        f0, grid0 = p0.v[::-1].copy(), GridSpec(-p0.grid.r_max, -p0.grid.r_min,
                                                p0.grid.n_cells)
        upper = lambda ts: -bd.V_at(ts)
        source = lambda ts: -bd.U_at(ts)
        flip = -1.0
    else:
        raise FbpError(f"side must be 'u' or 'v', got {side!r}")
    return f0, grid0, upper, source, flip


def mc_validate(sol: FbpSolution, t: float, n_paths: int,
                rng: np.random.Generator, side: str = "u",
                n_intervals: int = 10, dt: float = 1e-4) -> McReport:
    """Compare interval masses of the reference profile at time t with the
    path representation: surviving paths from the initial datum plus
    surviving paths injected at the partner's boundary at uniform times
    (Fubini weight kappa*t).  Also checks the absorbed-mass identity."""
    f0, grid0, upper, source, flip = _side_data(sol, side)
    mass0 = float(node_weights(grid0) @ f0)
    kappa_t = sol.kappa * t

    n0 = n_paths
    ns = max(n_paths // 2, 1)
    x0 = _sample_from_density(f0, grid0, n0, rng)
    xf0, ab0 = simulate_absorbed(x0, np.zeros(n0), t, upper, dt, rng)
    s = t * rng.random(ns)
    xfs, abs_ = simulate_absorbed(source(s), s, t, upper, dt, rng)

    # reference interval masses on the midpoint profile; the intervals carry
    # equal reference mass so no bin is starved of paths
    ref = sol.profile_at(t)
    f_ref = ref.u if side == "u" else ref.v[::-1]
    grid_ref = ref.grid if side == "u" else GridSpec(-ref.grid.r_max,
                                                    -ref.grid.r_min,
                                                    ref.grid.n_cells)
    peak = float(np.max(f_ref))
    supp = np.nonzero(f_ref > 1e-6 * peak)[0]
    r_lo = float(grid_ref.nodes()[supp[0]])
    r_hi = float(upper(np.asarray([t]))[0])
    nodes = grid_ref.nodes()
    inside = (nodes > r_lo) & (nodes < r_hi)
    knots = np.concatenate([[r_lo], nodes[inside], [r_hi]])
    cum = np.asarray(tail_integral(f_ref, grid_ref, r_lo)
                     - tail_integral(f_ref, grid_ref, knots))
    cum[-1] = max(cum[-1], cum[-2])
    levels = cum[-1] * np.arange(n_intervals + 1) / n_intervals
    edges = np.interp(levels, cum, knots)
    edges[0], edges[-1] = r_lo, r_hi

    w0 = mass0 / n0
    ws = kappa_t / ns
    intervals = []
    for a, b in zip(edges[:-1], edges[1:]):
        ref_mass = float(tail_integral(f_ref, grid_ref, a)
                         - tail_integral(f_ref, grid_ref, b))
        c0 = int(np.count_nonzero(~ab0 & (xf0 >= a) & (xf0 < b)))
        cs = int(np.count_nonzero(~abs_ & (xfs >= a) & (xfs < b)))
        est = w0 * c0 + ws * cs
        p0_hat, ps_hat = c0 / n0, cs / ns
        var = (mass0**2 * p0_hat * (1 - p0_hat) / n0
               + kappa_t**2 * ps_hat * (1 - ps_hat) / ns)
        intervals.append(IntervalCheck(flip * a if flip > 0 else -b,
                                       flip * b if flip > 0 else -a,
                                       ref_mass, est, math.sqrt(max(var, 1e-300))))

    pa0 = float(np.mean(ab0))
    pas = float(np.mean(abs_))
    est_mass = mass0 * pa0 + kappa_t * pas
    var_mass = (mass0**2 * pa0 * (1 - pa0) / n0
                + kappa_t**2 * pas * (1 - pas) / ns)
    mass = MassIdentityCheck(t, kappa_t, est_mass,
                             math.sqrt(max(var_mass, 1e-300)))
    return McReport(side, t, intervals, mass)


def mass_identity_check(sol: FbpSolution, t: float, n_paths: int,
                        rng: np.random.Generator, side: str = "u",
                        dt: float = 1e-4) -> MassIdentityCheck:
    """Absorbed mass from both path families should equal kappa*t."""
    f0, grid0, upper, source, _ = _side_data(sol, side)
    mass0 = float(node_weights(grid0) @ f0)
    kappa_t = sol.kappa * t
    n0 = n_paths
    ns = max(n_paths // 2, 1)
    x0 = _sample_from_density(f0, grid0, n0, rng)
    _, ab0 = simulate_absorbed(x0, np.zeros(n0), t, upper, dt, rng)
    s = t * rng.random(ns)
    _, abs_ = simulate_absorbed(source(s), s, t, upper, dt, rng)
    pa0 = float(np.mean(ab0))
    pas = float(np.mean(abs_))
    est = mass0 * pa0 + kappa_t * pas
    var = (mass0**2 * pa0 * (1 - pa0) / n0
           + kappa_t**2 * pas * (1 - pas) / ns)
    return MassIdentityCheck(t, kappa_t, est, math.sqrt(max(var, 1e-300)))


# ---------------------------------------------------------------------------
# export


def boundaries_to_csv(bd: BoundaryCurves, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "U", "V"])
        for t, u_, v_ in zip(bd.times, bd.U, bd.V):
            wr.writerow([f"{t:.12g}", f"{u_:.12g}", f"{v_:.12g}"])


def solution_summary(sol: FbpSolution) -> dict:
    return {
        "kappa": sol.kappa,
        "delta": sol.delta,
        "n_steps": len(sol.minus) - 1,
        "annihilated": sol.annihilated,
        "final_bracket_width": (None if sol.bracket_widths is None
                                 else float(sol.bracket_widths[-1])),
        "U_final": float(sol.boundaries.U[-1]),
        "V_final": float(sol.boundaries.V[-1]),
    }


def solution_summary_json(sol: FbpSolution, path) -> None:
    with open(path, "w") as fh:
        json.dump(solution_summary(sol), fh, indent=2)
