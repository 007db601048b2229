"""Deterministic macroscopic machinery on uniform grids.

Profiles are node-sampled nonnegative densities integrated with the
trapezoid rule.  The central objects are the mass-transfer (cut) operator,
the mass-preserving Gaussian smoothing step, and their alternating
compositions (the upper/lower barrier iterations).  All operators preserve
per-species mass exactly at the discrete level: partial transfers are
realized by giving a single boundary node a fractional weight, so the
transferred chunk carries exactly the requested mass.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ProfileError(ValueError):
    """Invalid profile data or operation preconditions."""


class AnnihilationError(ProfileError):
    """A transfer step would remove more mass than a species has."""


class RepairError(ProfileError):
    """Repair construction infeasible (transfer regions overlap)."""


# ---------------------------------------------------------------------------
# grids and profiles


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [r_min, r_max] with n_cells cells (n_cells+1 nodes)."""

    r_min: float
    r_max: float
    n_cells: int

    def __post_init__(self):
        if not self.r_min < self.r_max:
            raise ProfileError(f"need r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if self.n_cells < 1:
            raise ProfileError("n_cells must be positive")

    @property
    def h(self) -> float:
        return (self.r_max - self.r_min) / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    def nodes(self) -> np.ndarray:
        return self.r_min + self.h * np.arange(self.n_nodes)

    def extended(self, n_left: int, n_right: int) -> "GridSpec":
        """Append cells on either side; spacing and node alignment unchanged."""
        h = self.h
        return GridSpec(self.r_min - n_left * h, self.r_max + n_right * h,
                        self.n_cells + n_left + n_right)


def node_weights(grid: GridSpec) -> np.ndarray:
    w = np.full(grid.n_nodes, grid.h)
    w[0] = w[-1] = grid.h / 2
    return w


@dataclass
class ProfilePair:
    """A pair of node-sampled densities (u, v) on a shared grid."""

    grid: GridSpec
    u: np.ndarray
    v: np.ndarray
    mass_u: float = field(default=None)  # type: ignore[assignment]
    mass_v: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != (self.grid.n_nodes,) or self.v.shape != (self.grid.n_nodes,):
            raise ProfileError("u, v must have one sample per grid node")
        if np.any(self.u < 0) or np.any(self.v < 0):
            raise ProfileError("profile samples must be nonnegative")
        w = node_weights(self.grid)
        if self.mass_u is None:
            self.mass_u = float(w @ self.u)
        if self.mass_v is None:
            self.mass_v = float(w @ self.v)

    def recompute_masses(self) -> tuple[float, float]:
        w = node_weights(self.grid)
        return float(w @ self.u), float(w @ self.v)

    def masses_consistent(self, rtol: float = 1e-12) -> bool:
        mu, mv = self.recompute_masses()
        scale = max(abs(mu), abs(mv), 1e-300)
        return abs(mu - self.mass_u) <= rtol * scale and abs(mv - self.mass_v) <= rtol * scale

    @property
    def total_mass(self) -> float:
        return self.mass_u + self.mass_v

    def copy(self) -> "ProfilePair":
        return ProfilePair(self.grid, self.u.copy(), self.v.copy())


@dataclass(frozen=True)
class CutPoints:
    """Transfer locations: rightmost u-mass boundary and leftmost v-mass boundary."""

    R_delta: float
    D_delta: float


# ---------------------------------------------------------------------------
# quadrature


def tail_integral(f: np.ndarray, grid: GridSpec, r) -> float | np.ndarray:
    """Integral of f over [r, r_max], trapezoid with linear interpolation at r.

    Continuous and nonincreasing in r; zero for r >= r_max, full mass for
    r <= r_min.
    """
    f = np.asarray(f, dtype=float)
    nodes = grid.nodes()
    h = grid.h
    # nodewise tails: T[j] = integral from node j to the end
    cell = 0.5 * h * (f[:-1] + f[1:])
    tails = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])

    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    rc = np.clip(r_arr, nodes[0], nodes[-1])
    i = np.clip(((rc - grid.r_min) / h).astype(int), 0, grid.n_cells - 1)
    lam = (rc - nodes[i]) / h
    fr = (1 - lam) * f[i] + lam * f[i + 1]
    out = tails[i + 1] + 0.5 * (nodes[i + 1] - rc) * (fr + f[i + 1])
    out = np.where(r_arr >= nodes[-1], 0.0, out)
    out = np.where(r_arr <= nodes[0], tails[0], out)
    return out if np.ndim(r) else float(out[0])


def head_integral(f: np.ndarray, grid: GridSpec, r) -> float | np.ndarray:
    """Integral of f over (-inf, r] (grid-supported part)."""
    total = float(node_weights(grid) @ np.asarray(f, dtype=float))
    return total - tail_integral(f, grid, r)


def tail_curve(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Nodewise tail integrals F(r_j) = integral_{r_j}^{r_max} f."""
    h = grid.h
    cell = 0.5 * h * (np.asarray(f, float)[:-1] + np.asarray(f, float)[1:])
    return np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])


def _invert_tail(f: np.ndarray, grid: GridSpec, target: float) -> float:
    """Solve tail_integral(f, r) = target by bisection; tail is monotone."""
    lo, hi = grid.r_min, grid.r_max
    total = tail_integral(f, grid, lo)
    if not 0.0 <= target <= total:
        raise ProfileError(f"tail target {target} outside [0, {total}]")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if tail_integral(f, grid, mid) >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _invert_head(f: np.ndarray, grid: GridSpec, target: float) -> float:
    lo, hi = grid.r_min, grid.r_max
    total = head_integral(f, grid, hi)
    if not 0.0 <= target <= total:
        raise ProfileError(f"head target {target} outside [0, {total}]")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if head_integral(f, grid, mid) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# exact node-level mass splitting


def split_tail(f: np.ndarray, grid: GridSpec, mass: float) -> tuple[np.ndarray, np.ndarray]:
    """Split f = kept + removed with the removed part carrying exactly `mass`,
    taken from the right.  At most one node gets a fractional share, so both
    parts are nonnegative and sum to f nodewise.
    """
    f = np.asarray(f, dtype=float)
    w = node_weights(grid)
    node_mass = w * f
    total = float(node_mass.sum())
    if mass < 0 or mass > total + 1e-12 * max(total, 1.0):
        raise ProfileError(f"cannot remove mass {mass} from total {total}")
    removed = np.zeros_like(f)
    acc = 0.0
    for j in range(len(f) - 1, -1, -1):
        if acc >= mass:
            break
        take = min(node_mass[j], mass - acc)
        if node_mass[j] > 0:
            removed[j] = f[j] * (take / node_mass[j])
        acc += take
    kept = f - removed
    np.clip(kept, 0.0, None, out=kept)
    return kept, removed


def split_head(f: np.ndarray, grid: GridSpec, mass: float) -> tuple[np.ndarray, np.ndarray]:
    """Mirror of split_tail: the removed mass is taken from the left."""
    kept_r, removed_r = split_tail(f[::-1], _mirror(grid), mass)
    return kept_r[::-1], removed_r[::-1]


def _mirror(grid: GridSpec) -> GridSpec:
    return GridSpec(-grid.r_max, -grid.r_min, grid.n_cells)


# ---------------------------------------------------------------------------
# class-U validation


@dataclass
class ClassUReport:
    valid: bool
    violations: list[str]
    L: float | None = None
    R: float | None = None
    D: float | None = None
    E: float | None = None


def _support_interval(f: np.ndarray, grid: GridSpec, thr: float) -> tuple[int, int] | None:
    idx = np.nonzero(f > thr)[0]
    if len(idx) == 0:
        return None
    return int(idx[0]), int(idx[-1])


def validate_class_U(p: ProfilePair) -> ClassUReport:
    """Check interval supports with the overlap ordering L < D < R < E and
    positivity inside each support (no isolated interior zeros)."""
    peak = max(float(p.u.max(initial=0.0)), float(p.v.max(initial=0.0)))
    thr = 1e-12 * peak
    violations: list[str] = []
    nodes = p.grid.nodes()

    su = _support_interval(p.u, p.grid, thr)
    sv = _support_interval(p.v, p.grid, thr)
    if su is None:
        violations.append("u has empty support")
    if sv is None:
        violations.append("v has empty support")
    L = R = D = E = None
    if su is not None:
        i0, i1 = su
        if np.any(p.u[i0:i1 + 1] <= thr):
            violations.append("u vanishes inside its support interval")
        L, R = float(nodes[max(i0 - 1, 0)]), float(nodes[min(i1 + 1, len(nodes) - 1)])
    if sv is not None:
        j0, j1 = sv
        if np.any(p.v[j0:j1 + 1] <= thr):
            violations.append("v vanishes inside its support interval")
        D, E = float(nodes[max(j0 - 1, 0)]), float(nodes[min(j1 + 1, len(nodes) - 1)])
    if su is not None and sv is not None:
        if not (L < D < R < E):
            violations.append(
                f"support ordering violated: L={L}, D={D}, R={R}, E={E}")
    return ClassUReport(valid=not violations, violations=violations, L=L, R=R, D=D, E=E)


# ---------------------------------------------------------------------------
# cut operator


def cut_points(p: ProfilePair, kappa_delta: float) -> CutPoints:
    """Locations where u's rightmost and v's leftmost `kappa_delta` mass start."""
    if kappa_delta >= min(p.mass_u, p.mass_v):
        raise AnnihilationError(
            f"transfer {kappa_delta} >= species mass "
            f"(mass_u={p.mass_u}, mass_v={p.mass_v})")
    R = _invert_tail(p.u, p.grid, kappa_delta)
    D = _invert_head(p.v, p.grid, kappa_delta)
    return CutPoints(R_delta=R, D_delta=D)


def apply_cut(p: ProfilePair, kappa_delta: float) -> ProfilePair:
    """Exchange u's rightmost and v's leftmost `kappa_delta` mass.

    Exactly mass preserving per species and pointwise sum preserving:
    u' + v' = u + v at every node.
    """
    if kappa_delta >= min(p.mass_u, p.mass_v):
        raise AnnihilationError(
            f"transfer {kappa_delta} >= species mass "
            f"(mass_u={p.mass_u}, mass_v={p.mass_v})")
    u_head, u_tail = split_tail(p.u, p.grid, kappa_delta)
    v_tail, v_head = split_head(p.v, p.grid, kappa_delta)
    return ProfilePair(p.grid, u_head + v_head, v_tail + u_tail)


# ---------------------------------------------------------------------------
# heat convolution


def gauss_kernel(h: float, t: float) -> np.ndarray:
    """Discrete Gaussian kernel of variance t on spacing h, truncated at
    8*sqrt(t) and renormalized to unit discrete mass."""
    if t <= 0:
        raise ProfileError("convolution time must be positive")
    radius = max(int(math.ceil(8.0 * math.sqrt(t) / h)), 1)
    x = h * np.arange(-radius, radius + 1)
    k = np.exp(-x * x / (2.0 * t))
    return k / k.sum()


def gauss_convolve_samples(f: np.ndarray, grid: GridSpec, t: float
                           ) -> tuple[np.ndarray, GridSpec]:
    """Convolve node samples with the heat kernel; the grid gains the kernel
    radius on each side (appended cells, alignment preserved)."""
    k = gauss_kernel(grid.h, t)
    radius = (len(k) - 1) // 2
    out = np.convolve(np.asarray(f, dtype=float), k, mode="full")
    return out, grid.extended(radius, radius)


def _trim(u: np.ndarray, v: np.ndarray, grid: GridSpec, lo_limit: int, hi_limit: int
          ) -> tuple[np.ndarray, np.ndarray, GridSpec]:
    """Drop appended nodes that stayed numerically zero; never trims inside
    [lo_limit, hi_limit] (indices of the pre-extension extent)."""
    peak = max(float(u.max(initial=0.0)), float(v.max(initial=0.0)), 1e-300)
    keep = np.nonzero((u > 1e-15 * peak) | (v > 1e-15 * peak))[0]
    if len(keep) == 0:
        lo, hi = lo_limit, hi_limit
    else:
        lo = min(int(keep[0]) - 2, lo_limit)
        hi = max(int(keep[-1]) + 2, hi_limit)
    lo = max(lo, 0)
    hi = min(hi, len(u) - 1)
    h = grid.h
    new_grid = GridSpec(grid.r_min + lo * h, grid.r_min + hi * h, hi - lo)
    return u[lo:hi + 1].copy(), v[lo:hi + 1].copy(), new_grid


def gauss_convolve(p: ProfilePair, t: float) -> ProfilePair:
    """Heat-smooth both components on a common auto-extended grid."""
    u_ext, grid_ext = gauss_convolve_samples(p.u, p.grid, t)
    v_ext, _ = gauss_convolve_samples(p.v, p.grid, t)
    radius = grid_ext.n_cells - p.grid.n_cells
    lo_limit, hi_limit = radius // 2, radius // 2 + p.grid.n_cells
    np.clip(u_ext, 0.0, None, out=u_ext)
    np.clip(v_ext, 0.0, None, out=v_ext)
    u2, v2, grid2 = _trim(u_ext, v_ext, grid_ext, lo_limit, hi_limit)
    return ProfilePair(grid2, u2, v2)


# ---------------------------------------------------------------------------
# barriers


def barrier_step(p: ProfilePair, delta: float, kappa: float, variant: str) -> ProfilePair:
    """One step of the upper ('plus': transfer then smooth) or lower
    ('minus': smooth then transfer) iteration."""
    if variant == "plus":
        return gauss_convolve(apply_cut(p, kappa * delta), delta)
    if variant == "minus":
        return apply_cut(gauss_convolve(p, delta), kappa * delta)
    raise ProfileError(f"variant must be 'plus' or 'minus', got {variant!r}")


def iterate_barriers(p0: ProfilePair, delta: float, kappa: float, n: int,
                     variant: str) -> list[ProfilePair]:
    """n-fold barrier step; returns [p0, p1, ..., pn]."""
    out = [p0]
    for _ in range(n):
        out.append(barrier_step(out[-1], delta, kappa, variant))
    return out


# ---------------------------------------------------------------------------
# order relation


def order_gap(p1: ProfilePair, p2: ProfilePair) -> tuple[float, float]:
    """sup_r [F(r; u1) - F(r; u2)] over the union node set, with its argmax."""
    rs = np.union1d(p1.grid.nodes(), p2.grid.nodes())
    f1 = np.asarray(tail_integral(p1.u, p1.grid, rs))
    f2 = np.asarray(tail_integral(p2.u, p2.grid, rs))
    gaps = f1 - f2
    i = int(np.argmax(gaps))
    return float(gaps[i]), float(rs[i])


def order_mod_m(p1: ProfilePair, p2: ProfilePair, m: float) -> bool:
    """True iff the u-tail of p1 never exceeds that of p2 by more than m."""
    gap, _ = order_gap(p1, p2)
    return gap <= m


def dominated_by(p1: ProfilePair, p2: ProfilePair, tol: float = 0.0) -> bool:
    return order_mod_m(p1, p2, tol)


# ---------------------------------------------------------------------------
# repair operators


def default_m0(p: ProfilePair) -> float:
    return 0.1 * min(p.mass_u, p.mass_v)


def repair_upper(p: ProfilePair, m: float, m0: float | None = None) -> ProfilePair:
    """Dominating pair: hand u's leftmost m mass to v and take v's rightmost
    m mass into u.  Raises the u-tails by at most m everywhere."""
    if m0 is None:
        m0 = default_m0(p)
    if not 0 <= m < m0:
        raise RepairError(f"need 0 <= m < m0 = {m0}, got m = {m}")
    if m == 0:
        return p.copy()
    H = _invert_head(p.u, p.grid, m)
    Z = _invert_tail(p.v, p.grid, m)
    if H >= Z:
        raise RepairError(f"transfer regions overlap: H = {H} >= Z = {Z}")
    u_tail, u_head = split_head(p.u, p.grid, m)
    v_head, v_tail = split_tail(p.v, p.grid, m)
    return ProfilePair(p.grid, u_tail + v_tail, v_head + u_head)


def repair_lower(p: ProfilePair, m: float, m0: float | None = None) -> ProfilePair:
    """Dominated pair: hand u's rightmost m mass to v and take v's leftmost
    m mass into u."""
    if m0 is None:
        m0 = default_m0(p)
    if not 0 <= m < m0:
        raise RepairError(f"need 0 <= m < m0 = {m0}, got m = {m}")
    if m == 0:
        return p.copy()
    Hp = _invert_tail(p.u, p.grid, m)
    Zp = _invert_head(p.v, p.grid, m)
    if Zp >= Hp:
        raise RepairError(f"transfer regions overlap: Z' = {Zp} >= H' = {Hp}")
    u_head, u_tail = split_tail(p.u, p.grid, m)
    v_tail, v_head = split_head(p.v, p.grid, m)
    return ProfilePair(p.grid, u_head + v_head, v_tail + u_tail)


# ---------------------------------------------------------------------------
# helpers: construction, resampling, export


def tent(grid: GridSpec, left: float, right: float, mass: float = 1.0) -> np.ndarray:
    """Triangle bump supported on (left, right), scaled to the given mass."""
    if not left < right:
        raise ProfileError("need left < right for a tent")
    r = grid.nodes()
    mid = 0.5 * (left + right)
    half = 0.5 * (right - left)
    f = np.maximum(0.0, 1.0 - np.abs(r - mid) / half)
    w = node_weights(grid)
    cur = float(w @ f)
    if cur <= 0:
        raise ProfileError("tent support does not meet the grid")
    return f * (mass / cur)


def tent_pair(grid: GridSpec | None = None, mass_u: float = 1.0, mass_v: float = 1.0
              ) -> ProfilePair:
    """Default overlapping-tent initial datum: u on (-1, 0.5), v on (0, 1.5)."""
    if grid is None:
        grid = GridSpec(-2.5, 3.0, 1100)
    return ProfilePair(grid, tent(grid, -1.0, 0.5, mass_u), tent(grid, 0.0, 1.5, mass_v))


def resample(p: ProfilePair, grid: GridSpec) -> ProfilePair:
    """Linear-interpolation resample onto another grid (for comparisons)."""
    r_old = p.grid.nodes()
    r_new = grid.nodes()
    u = np.interp(r_new, r_old, p.u, left=0.0, right=0.0)
    v = np.interp(r_new, r_old, p.v, left=0.0, right=0.0)
    return ProfilePair(grid, u, v)


def l1_distance_u(p1: ProfilePair, p2: ProfilePair) -> float:
    """L1 distance between the u components on a common grid."""
    lo = min(p1.grid.r_min, p2.grid.r_min)
    hi = max(p1.grid.r_max, p2.grid.r_max)
    h = min(p1.grid.h, p2.grid.h)
    grid = GridSpec(lo, hi, max(int(round((hi - lo) / h)), 1))
    a = resample(p1, grid)
    b = resample(p2, grid)
    return float(node_weights(grid) @ np.abs(a.u - b.u))


def profile_to_csv(p: ProfilePair, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "u", "v"])
        for r, uu, vv in zip(p.grid.nodes(), p.u, p.v):
            wr.writerow([f"{r:.12g}", f"{uu:.12g}", f"{vv:.12g}"])


def profile_header(p: ProfilePair, **extra) -> dict:
    head = {
        "grid": {"r_min": p.grid.r_min, "r_max": p.grid.r_max, "n_cells": p.grid.n_cells},
        "mass_u": p.mass_u,
        "mass_v": p.mass_v,
    }
    head.update(extra)
    return head


def profile_header_json(p: ProfilePair, path, **extra) -> None:
    with open(path, "w") as fh:
        json.dump(profile_header(p, **extra), fh, indent=2)
