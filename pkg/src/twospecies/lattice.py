"""Event-driven simulation of the two-species random-walk system.

Particles perform independent continuous-time nearest-neighbor walks on the
integers; an independent marked Poisson clock flips the rightmost a-particle
to b (mark 'right') or the leftmost b-particle to a (mark 'left').  Labels
are 1-based and stable along a trajectory.
"""
from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .macro import GridSpec, ProfilePair, validate_class_U

RIGHT = "right"
LEFT = "left"
A = "a"
B = "b"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Scaling parameters of one microscopic run.

    The microscopic horizon is epsilon**-2 * horizon_T and the clock
    intensity is 2 * epsilon * kappa.
    """

    epsilon: float
    kappa: float
    horizon_T: float
    seed: int
    walk_rate: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise SimulationError("epsilon must be in (0, 1)")
        if self.kappa < 0:
            raise SimulationError("kappa must be nonnegative")
        if self.horizon_T <= 0:
            raise SimulationError("horizon_T must be positive")
        if self.walk_rate <= 0:
            raise SimulationError("walk_rate must be positive")

    @property
    def micro_horizon(self) -> float:
        return self.horizon_T / self.epsilon**2

    @property
    def clock_intensity(self) -> float:
        return 2.0 * self.epsilon * self.kappa

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed))


@dataclass
class ParticleState:
    """Labeled particle positions and colors at one time instant."""

    positions: np.ndarray
    colors: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.colors = np.asarray(self.colors, dtype="<U1")
        if self.positions.shape != self.colors.shape or self.positions.ndim != 1:
            raise SimulationError("positions and colors must be 1-d of equal length")
        if len(self.positions) < 1:
            raise SimulationError("need at least one particle")
        if not np.all(np.isin(self.colors, [A, B])):
            raise SimulationError("colors must be 'a' or 'b'")

    @property
    def M(self) -> int:
        return len(self.positions)

    def copy(self) -> "ParticleState":
        return ParticleState(self.positions.copy(), self.colors.copy(), self.time)


@dataclass
class EventLog:
    """Marked clock realization: strictly increasing ring times with marks."""

    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.marks = np.asarray(self.marks, dtype="<U5")
        if self.times.shape != self.marks.shape:
            raise SimulationError("times and marks must have the same length")
        if len(self.times) and not np.all(np.diff(self.times) > 0):
            raise SimulationError("ring times must be strictly increasing")
        if not np.all(np.isin(self.marks, [RIGHT, LEFT])):
            raise SimulationError("marks must be 'right' or 'left'")

    def __len__(self) -> int:
        return len(self.times)

    def restrict(self, t_lo: float, t_hi: float) -> "EventLog":
        """Rings with t_lo < s <= t_hi."""
        sel = (self.times > t_lo) & (self.times <= t_hi)
        return EventLog(self.times[sel], self.marks[sel])


@dataclass
class OccupationPair:
    """Per-site counts by color; xi counts a-particles, eta b-particles."""

    xi: dict[int, int]
    eta: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.xi.values()) + sum(self.eta.values())


# ---------------------------------------------------------------------------
# sampling


def sample_initial(profile: ProfilePair, cfg: SimConfig,
                   rng: np.random.Generator) -> ParticleState:
    """Draw floor(eps^-1 * total mass) particles with site weights
    u(eps*x) + v(eps*x) and independent colors a w.p. u/(u+v)."""
    report = validate_class_U(profile)
    if not report.valid:
        raise SimulationError("initial profile is invalid: " + "; ".join(report.violations))
    eps = cfg.epsilon
    M = int(np.floor(profile.total_mass / eps))
    if M < 1:
        raise SimulationError("zero particles: epsilon too large for the total mass")

    x_lo = int(np.floor(profile.grid.r_min / eps))
    x_hi = int(np.ceil(profile.grid.r_max / eps))
    sites = np.arange(x_lo, x_hi + 1)
    r = eps * sites
    nodes = profile.grid.nodes()
    u_site = np.interp(r, nodes, profile.u, left=0.0, right=0.0)
    v_site = np.interp(r, nodes, profile.v, left=0.0, right=0.0)
    wts = u_site + v_site
    keep = wts > 0
    sites, u_site, wts = sites[keep], u_site[keep], wts[keep]
    idx = rng.choice(len(sites), size=M, p=wts / wts.sum())
    positions = sites[idx]
    p_a = u_site[idx] / wts[idx]
    colors = np.where(rng.random(M) < p_a, A, B)
    return ParticleState(positions, colors, time=0.0)


def sample_clock(cfg: SimConfig, rng: np.random.Generator) -> EventLog:
    """Homogeneous Poisson rings of intensity 2*eps*kappa on (0, eps^-2 T]
    with fair independent right/left marks."""
    lam = cfg.clock_intensity
    horizon = cfg.micro_horizon
    times: list[float] = []
    if lam > 0:
        t = 0.0
        while True:
            block = rng.exponential(1.0 / lam, size=64)
            for dt in block:
                t += dt
                if t > horizon:
                    break
                times.append(t)
            if t > horizon:
                break
    times_arr = np.asarray(times)
    marks = np.where(rng.random(len(times_arr)) < 0.5, RIGHT, LEFT)
    return EventLog(times_arr, marks)


# ---------------------------------------------------------------------------
# walks


class PositionRealization:
    """A stored realization of the independent walks on [0, t_end].

    Keeping the whole realization lets the true and auxiliary color
    evolutions (and coupled copies) run on identical positions.
    """

    def __init__(self, x0: np.ndarray, jump_times: list[np.ndarray],
                 steps: list[np.ndarray], t_end: float, rate: float = 1.0):
        self.x0 = np.asarray(x0, dtype=np.int64)
        self.jump_times = jump_times
        self.steps = steps
        self.t_end = float(t_end)
        self.rate = float(rate)
        # path[i][k] = position of particle i after k jumps
        self.paths = [
            np.concatenate([[self.x0[i]], self.x0[i] + np.cumsum(steps[i])])
            for i in range(len(self.x0))
        ]

    @classmethod
    def sample(cls, x0: np.ndarray, t_end: float, rate: float,
               rng: np.random.Generator) -> "PositionRealization":
        x0 = np.asarray(x0, dtype=np.int64)
        jump_times: list[np.ndarray] = []
        steps: list[np.ndarray] = []
        expected = max(int(rate * t_end * 1.3) + 16, 16)
        for _ in range(len(x0)):
            ts: list[np.ndarray] = []
            t_acc = 0.0
            while t_acc <= t_end:
                chunk = np.cumsum(rng.exponential(1.0 / rate, size=expected)) + t_acc
                ts.append(chunk)
                t_acc = chunk[-1]
            all_t = np.concatenate(ts)
            all_t = all_t[all_t <= t_end]
            jump_times.append(all_t)
            steps.append(np.where(rng.random(len(all_t)) < 0.5, 1, -1).astype(np.int64))
        return cls(x0, jump_times, steps, t_end, rate)

    @property
    def M(self) -> int:
        return len(self.x0)

    def positions_at(self, t: float) -> np.ndarray:
        if t < 0 or t > self.t_end + 1e-9:
            raise SimulationError(f"query time {t} outside [0, {self.t_end}]")
        out = np.empty(self.M, dtype=np.int64)
        for i in range(self.M):
            k = np.searchsorted(self.jump_times[i], t, side="right")
            out[i] = self.paths[i][k]
        return out

    def all_jump_events(self) -> list[tuple[float, int]]:
        """All (time, particle index) jump events, time ordered."""
        ev = [(float(t), i) for i in range(self.M) for t in self.jump_times[i]]
        ev.sort()
        return ev


def evolve_positions(ps: ParticleState, t0: float, t1: float,
                     rng: np.random.Generator, walk_rate: float = 1.0) -> ParticleState:
    """Transport positions over [t0, t1]; colors untouched.

    Samples the net displacement directly: jump counts are Poisson with mean
    walk_rate*(t1-t0) and each jump is +-1 with probability 1/2.
    """
    if abs(ps.time - t0) > 1e-9:
        raise SimulationError(f"state time {ps.time} != t0 = {t0}")
    if t1 < t0:
        raise SimulationError("t1 < t0")
    tau = t1 - t0
    if tau == 0:
        return replace(ps.copy(), time=t1)
    n = rng.poisson(walk_rate * tau, size=ps.M)
    disp = 2 * rng.binomial(n, 0.5) - n
    return ParticleState(ps.positions + disp, ps.colors.copy(), time=t1)


# ---------------------------------------------------------------------------
# rank selection and color flips


def rightmost_a(ps: ParticleState) -> int | None:
    """Label of the rightmost a-particle (largest label among ties), 1-based."""
    best = None
    for i in range(ps.M):
        if ps.colors[i] != A:
            continue
        if best is None or (ps.positions[i], i) > (ps.positions[best], best):
            best = i
    return None if best is None else best + 1


def leftmost_b(ps: ParticleState) -> int | None:
    """Label of the leftmost b-particle (largest label among ties), 1-based."""
    best = None
    for i in range(ps.M):
        if ps.colors[i] != B:
            continue
        if best is None or (ps.positions[i], -i) < (ps.positions[best], -best):
            best = i
    return None if best is None else best + 1


def apply_H(ps: ParticleState, mark: str) -> ParticleState:
    """Flip the rank-selected particle's color; no-op if the species is absent."""
    out = ps.copy()
    if mark == RIGHT:
        lab = rightmost_a(ps)
        if lab is not None:
            out.colors[lab - 1] = B
    elif mark == LEFT:
        lab = leftmost_b(ps)
        if lab is not None:
            out.colors[lab - 1] = A
    else:
        raise SimulationError(f"unknown mark {mark!r}")
    return out


# ---------------------------------------------------------------------------
# the true trajectory


class TrueTrajectory:
    """Cadlag color trajectory driven by a stored walk realization and log.

    At t = s_k the flip has been applied.  Runs where a flip fired on an
    absent species are flagged via `absent_flip_count`.
    """

    def __init__(self, initial: ParticleState, log: EventLog,
                 realization: PositionRealization, t_end: float):
        if initial.time != 0:
            raise SimulationError("initial state must be at time 0")
        if len(log) and log.times[-1] > realization.t_end + 1e-9:
            raise SimulationError("log extends past the stored realization")
        self.initial = initial.copy()
        self.log = log
        self.realization = realization
        self.t_end = float(t_end)
        self.absent_flip_count = 0
        self._colors_after: list[np.ndarray] = [initial.colors.copy()]
        colors = initial.colors.copy()
        for s, mark in zip(log.times, log.marks):
            if s > t_end:
                break
            state = ParticleState(realization.positions_at(s), colors, time=s)
            flipped = apply_H(state, mark)
            if np.array_equal(flipped.colors, colors):
                self.absent_flip_count += 1
            colors = flipped.colors
            self._colors_after.append(colors.copy())

    def state_at(self, t: float) -> ParticleState:
        if t < 0 or t > self.t_end + 1e-9:
            raise SimulationError(f"query time {t} outside [0, {self.t_end}]")
        k = int(np.searchsorted(self.log.times, min(t, self.t_end), side="right"))
        k = min(k, len(self._colors_after) - 1)
        return ParticleState(self.realization.positions_at(t),
                             self._colors_after[k].copy(), time=t)


def run_true(ps: ParticleState, log: EventLog, t_end: float,
             rng: np.random.Generator | None = None,
             realization: PositionRealization | None = None,
             walk_rate: float = 1.0) -> TrueTrajectory:
    """Build the trajectory sampler; pass a realization to reuse positions."""
    if realization is None:
        if rng is None:
            raise SimulationError("need either an rng or a stored realization")
        realization = PositionRealization.sample(ps.positions, t_end, walk_rate, rng)
    return TrueTrajectory(ps, log, realization, t_end)


# ---------------------------------------------------------------------------
# occupation bookkeeping


def occupation(ps: ParticleState) -> OccupationPair:
    xi = Counter(int(x) for x, c in zip(ps.positions, ps.colors) if c == A)
    eta = Counter(int(x) for x, c in zip(ps.positions, ps.colors) if c == B)
    return OccupationPair(dict(xi), dict(eta))


def tail_mass(counts: Mapping[int, int], x: int) -> int:
    """Sum of counts over sites >= x."""
    return sum(c for y, c in counts.items() if y >= x)


def color_counts_from_log(h_a0: int, M: int, log: EventLog, t: float) -> tuple[int, int]:
    """(N_a, N_b) at time t from the signed tally of rings up to t."""
    sel = log.times <= t
    delta = int(np.sum(log.marks[sel] == LEFT)) - int(np.sum(log.marks[sel] == RIGHT))
    n_a = h_a0 + delta
    return n_a, M - n_a


def in_X(h_a0: int, M: int, log: EventLog, t_end: float) -> bool:
    """True iff both species stay present up to t_end (tally never hits 0 or M)."""
    sel = log.times <= t_end
    signs = np.where(log.marks[sel] == LEFT, 1, -1)
    tally = h_a0 + np.concatenate([[0], np.cumsum(signs)])
    return bool(np.all((tally > 0) & (tally < M)))


# ---------------------------------------------------------------------------
# empirical profiles


def empirical_profile(ps: ParticleState, cfg: SimConfig, grid: GridSpec) -> ProfilePair:
    """Bin eps-scaled occupation counts into grid cells as densities."""
    eps = cfg.epsilon
    r = eps * ps.positions.astype(float)
    if r.min() < grid.r_min or r.max() > grid.r_max:
        h = grid.h
        n_left = max(int(np.ceil((grid.r_min - r.min()) / h)) + 1, 0)
        n_right = max(int(np.ceil((r.max() - grid.r_max) / h)) + 1, 0)
        grid = grid.extended(n_left, n_right)
        warnings.warn("grid extended to cover the particle range")
    h = grid.h
    edges = grid.r_min - h / 2 + h * np.arange(grid.n_nodes + 1)
    u = np.histogram(r[ps.colors == A], bins=edges)[0] * (eps / h)
    v = np.histogram(r[ps.colors == B], bins=edges)[0] * (eps / h)
    return ProfilePair(grid, u, v)


def scaled_tail(occ_counts: Mapping[int, int], r: float, eps: float) -> float:
    """eps * (number of counted particles at sites y >= r/eps)."""
    x = int(np.ceil(r / eps - 1e-12))
    return eps * tail_mass(occ_counts, x)


def scaled_tail_curve(ps: ParticleState, color: str, rs: np.ndarray, eps: float
                      ) -> np.ndarray:
    """eps-scaled tail masses of one color evaluated at macroscopic points."""
    pos = np.sort(eps * ps.positions[ps.colors == color].astype(float))
    n = len(pos)
    idx = np.searchsorted(pos, np.asarray(rs) - 1e-12, side="left")
    return eps * (n - idx)


# ---------------------------------------------------------------------------
# CSV export


def state_to_csv_rows(ps: ParticleState) -> list[list]:
    return [[ps.time, i + 1, int(x), c]
            for i, (x, c) in enumerate(zip(ps.positions, ps.colors))]


def write_trajectory_csv(path, states: Sequence[ParticleState]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time", "label", "position", "color"])
        for st in states:
            wr.writerows(state_to_csv_rows(st))


def write_occupation_csv(path, occ: OccupationPair) -> None:
    sites = sorted(set(occ.xi) | set(occ.eta))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["site", "xi", "eta"])
        for s in sites:
            wr.writerow([s, occ.xi.get(s, 0), occ.eta.get(s, 0)])
