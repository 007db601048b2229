"""Order-and-coupling calculus for two coupled color copies.

Two color assignments sigma (copy 1) and sigma' (copy 2) ride on one set of
positions.  Labels are split into married pairs P, singletons S and
discrepancy sets I, J; flips on either copy update the splitting through the
C-map case tables, walk collisions dissolve pairs, and the balance
identities tie the discrepancy counts to the mark tallies.  Labels are
1-based throughout, matching the lattice module.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import auxiliary
from .lattice import (A, B, LEFT, RIGHT, EventLog, ParticleState,
                      PositionRealization, SimConfig, in_X, occupation,
                      run_true, sample_clock, sample_initial)
from .macro import ProfilePair


class CouplingError(ValueError):
    pass


class SplittingFault(RuntimeError):
    """Splitting/state inconsistency that the case tables rule out."""


# ---------------------------------------------------------------------------
# coupled state and splitting


@dataclass
class CoupledState:
    """Positions shared by two color copies; arrays indexed by label-1."""

    positions: np.ndarray
    sigma: np.ndarray
    sigma_prime: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64).copy()
        self.sigma = np.asarray(self.sigma, dtype="<U1").copy()
        self.sigma_prime = np.asarray(self.sigma_prime, dtype="<U1").copy()
        if not (len(self.positions) == len(self.sigma) == len(self.sigma_prime)):
            raise CouplingError("positions and both color arrays must align")

    @property
    def M(self) -> int:
        return len(self.positions)

    def x(self, label: int) -> int:
        return int(self.positions[label - 1])

    def spec(self, label: int) -> tuple[str, str]:
        return str(self.sigma[label - 1]), str(self.sigma_prime[label - 1])


@dataclass
class Splitting:
    """Quadruple (P, S, I, J): pairs, tagged singletons, discrepancies."""

    pairs: set[tuple[int, int]] = field(default_factory=set)
    singles: dict[int, str] = field(default_factory=dict)
    disc_I: set[int] = field(default_factory=set)
    disc_J: set[int] = field(default_factory=set)

    def copy(self) -> "Splitting":
        return Splitting(set(self.pairs), dict(self.singles),
                         set(self.disc_I), set(self.disc_J))

    def members(self) -> list[int]:
        out = [lab for pr in self.pairs for lab in pr]
        out += list(self.singles) + list(self.disc_I) + list(self.disc_J)
        return out


def check_splitting(spl: Splitting, cs: CoupledState) -> None:
    """Assert the partition, pair-position and tag-consistency invariants."""
    members = spl.members()
    if sorted(members) != list(range(1, cs.M + 1)):
        raise SplittingFault(f"not a partition of labels 1..{cs.M}: {sorted(members)}")
    for i, j in spl.pairs:
        if cs.spec(i) != (A, B) or cs.spec(j) != (B, A):
            raise SplittingFault(f"pair ({i},{j}) has specs {cs.spec(i)}, {cs.spec(j)}")
        if not cs.x(i) > cs.x(j):
            raise SplittingFault(f"pair ({i},{j}) violates x_{i} > x_{j}")
    for lab, tag in spl.singles.items():
        if cs.spec(lab) != (tag, tag):
            raise SplittingFault(f"singleton {lab}:{tag} has spec {cs.spec(lab)}")
    for lab in spl.disc_I:
        if cs.spec(lab) != (B, A):
            raise SplittingFault(f"I-discrepancy {lab} has spec {cs.spec(lab)}")
    for lab in spl.disc_J:
        if cs.spec(lab) != (A, B):
            raise SplittingFault(f"J-discrepancy {lab} has spec {cs.spec(lab)}")


# ---------------------------------------------------------------------------
# tail-mass order on site counts


def site_counts(positions: np.ndarray, colors: np.ndarray, color: str = A
                ) -> dict[int, int]:
    out: dict[int, int] = {}
    for x, c in zip(positions, colors):
        if c == color:
            out[int(x)] = out.get(int(x), 0) + 1
    return out


def dominates(xi_prime: dict[int, int], xi: dict[int, int]) -> bool:
    """True iff the tail masses of xi_prime never exceed those of xi."""
    gap, _ = order_witness(xi_prime, xi)
    return gap <= 0


def order_witness(xi_prime: dict[int, int], xi: dict[int, int]
                  ) -> tuple[int, int | None]:
    """Max over sites of F(x; xi') - F(x; xi) with an attaining site."""
    sites = sorted(set(xi_prime) | set(xi))
    best, best_site = 0, None
    t_p = sum(xi_prime.values())
    t = sum(xi.values())
    for x in sites:
        if t_p - t > best:
            best, best_site = t_p - t, x
        t_p -= xi_prime.get(x, 0)
        t -= xi.get(x, 0)
    return best, best_site


# ---------------------------------------------------------------------------
# splitting construction (same-site color exchanges allowed)


def build_splitting(cs: CoupledState, exchange_copy: int = 2) -> Splitting:
    """Construct a discrepancy-free splitting for an ordered coupled state.

    Requires matched a-counts and sigma' dominated by sigma.  May exchange
    colors between same-site particles (an occupation-preserving move) to
    turn opposite discrepancies into singletons; `exchange_copy` selects
    which copy's colors absorb the exchange and cs is normalized in place.
    """
    if exchange_copy not in (1, 2):
        raise CouplingError("exchange_copy must be 1 or 2")
    h_a = int(np.sum(cs.sigma == A))
    h_a_p = int(np.sum(cs.sigma_prime == A))
    if h_a != h_a_p:
        raise CouplingError(f"a-counts differ: {h_a} vs {h_a_p}")
    xi = site_counts(cs.positions, cs.sigma)
    xi_p = site_counts(cs.positions, cs.sigma_prime)
    gap, site = order_witness(xi_p, xi)
    if gap > 0:
        raise CouplingError(f"order hypothesis fails at site {site} (excess {gap})")

    spl = Splitting()
    ab: dict[int, list[int]] = {}
    ba: dict[int, list[int]] = {}
    for lab in range(1, cs.M + 1):
        sp = cs.spec(lab)
        if sp[0] == sp[1]:
            spl.singles[lab] = sp[0]
        elif sp == (A, B):
            ab.setdefault(cs.x(lab), []).append(lab)
        else:
            ba.setdefault(cs.x(lab), []).append(lab)

    # cancel opposite discrepancies sharing a site by a same-site color swap
    for x in list(ab):
        while ab.get(x) and ba.get(x):
            i = ab[x].pop()
            k = ba[x].pop()
            if exchange_copy == 2:
                cs.sigma_prime[i - 1], cs.sigma_prime[k - 1] = A, B
                spl.singles[i] = A
                spl.singles[k] = B
            else:
                cs.sigma[i - 1], cs.sigma[k - 1] = B, A
                spl.singles[i] = B
                spl.singles[k] = A

    # marry the rest scanning sites from the right; the order hypothesis
    # guarantees an unmatched (a,b) label strictly to the right of each (b,a)
    stack: list[int] = []
    for x in sorted(set(ab) | set(ba), reverse=True):
        stack.extend(ab.get(x, []))
        for k in ba.get(x, []):
            if not stack:
                raise CouplingError(f"no (a,b) label available right of site {x}")
            spl.pairs.add((stack.pop(), k))
    if stack:
        raise CouplingError("unmatched (a,b) labels remain; a-counts inconsistent")
    check_splitting(spl, cs)
    return spl


# ---------------------------------------------------------------------------
# R-maps: collision-driven pair dissolution (plus the identity)


def _dissolve_pair(spl: Splitting, cs: CoupledState, pr: tuple[int, int],
                   exchange_copy: int) -> None:
    """Turn one same-site pair into two singletons by a color swap in the
    chosen copy; mutates spl in place.  I, J untouched."""
    i, j = pr
    spl.pairs.discard(pr)
    if exchange_copy == 2:
        cs.sigma_prime[i - 1], cs.sigma_prime[j - 1] = A, B
        spl.singles[i] = A
        spl.singles[j] = B
    else:
        cs.sigma[i - 1], cs.sigma[j - 1] = B, A
        spl.singles[i] = B
        spl.singles[j] = A


def dissolve_collisions(spl: Splitting, cs: CoupledState,
                        exchange_copy: int = 2) -> Splitting:
    """Dissolve every pair whose members sit on the same site into two
    singletons via a same-site color swap.  I, J unchanged."""
    out = spl.copy()
    for pr in list(out.pairs):
        if cs.x(pr[0]) == cs.x(pr[1]):
            _dissolve_pair(out, cs, pr, exchange_copy)
    return out


# ---------------------------------------------------------------------------
# rank selection on one copy


def _rightmost_a(cs: CoupledState, colors: np.ndarray) -> int | None:
    best = None
    for i in range(cs.M):
        if colors[i] != A:
            continue
        if best is None or (cs.positions[i], i) > (cs.positions[best], best):
            best = i
    return None if best is None else best + 1


def _leftmost_b(cs: CoupledState, colors: np.ndarray) -> int | None:
    best = None
    for i in range(cs.M):
        if colors[i] != B:
            continue
        if best is None or (cs.positions[i], -i) < (cs.positions[best], -best):
            best = i
    return None if best is None else best + 1


def _pair_with_first(spl: Splitting, lab: int) -> tuple[int, int] | None:
    for pr in spl.pairs:
        if pr[0] == lab:
            return pr
    return None


def _pair_with_second(spl: Splitting, lab: int) -> tuple[int, int] | None:
    for pr in spl.pairs:
        if pr[1] == lab:
            return pr
    return None


# ---------------------------------------------------------------------------
# C-maps.  Each applies the flip to its copy and updates the splitting.


def apply_C1(spl: Splitting, cs: CoupledState, mark: str) -> Splitting:
    """Flip on copy 1 (may create a discrepancy)."""
    out = spl.copy()
    if mark == RIGHT:
        lab = _rightmost_a(cs, cs.sigma)
        if lab is None:
            raise CouplingError("right flip with no a-particle in copy 1")
        cs.sigma[lab - 1] = B
        pr = _pair_with_first(out, lab)
        if pr is not None:                       # case (a): lab leaves its pair
            out.pairs.discard(pr)
            out.singles[lab] = B
            out.disc_I.add(pr[1])
        elif lab in out.singles:                 # case (b): singleton becomes I
            del out.singles[lab]
            out.disc_I.add(lab)
        elif lab in out.disc_J:                  # case (c): J-discrepancy resolves
            out.disc_J.discard(lab)
            out.singles[lab] = B
        else:
            raise SplittingFault(f"no C1-right case matches label {lab}")
    elif mark == LEFT:
        lab = _leftmost_b(cs, cs.sigma)
        if lab is None:
            raise CouplingError("left flip with no b-particle in copy 1")
        cs.sigma[lab - 1] = A
        pr = _pair_with_second(out, lab)
        if pr is not None:                       # case (a)
            out.pairs.discard(pr)
            out.singles[lab] = A
            out.disc_J.add(pr[0])
        elif lab in out.singles:                 # case (b)
            del out.singles[lab]
            out.disc_J.add(lab)
        elif lab in out.disc_I:                  # case (c)
            out.disc_I.discard(lab)
            out.singles[lab] = A
        else:
            raise SplittingFault(f"no C1-left case matches label {lab}")
    else:
        raise CouplingError(f"unknown mark {mark!r}")
    return out


def apply_C2(spl: Splitting, cs: CoupledState, mark: str,
             exchange_copy: int = 1) -> Splitting:
    """Flip on copy 2 (recovers discrepancies when I resp. J is nonempty).

    When a recovery marriage would put both partners on one site, the pair is
    realized as two singletons through a same-site color swap in the copy
    chosen by `exchange_copy`; the discrepancy counts change exactly as in
    the tabled case.
    """
    out = spl.copy()
    if mark == RIGHT:
        lab = _rightmost_a(cs, cs.sigma_prime)
        if lab is None:
            raise CouplingError("right flip with no a-particle in copy 2")
        cs.sigma_prime[lab - 1] = B
        pr = _pair_with_second(out, lab)
        if pr is not None:                       # case (a)
            j = pr[0]
            out.pairs.discard(pr)
            out.singles[lab] = B
            if out.disc_I:
                k = max(out.disc_I)
                out.disc_I.discard(k)
                out.pairs.add((j, k))
            else:
                out.disc_J.add(j)
        elif lab in out.singles:                 # case (b)
            del out.singles[lab]
            if out.disc_I:
                k = max(out.disc_I)
                out.disc_I.discard(k)
                if cs.x(lab) > cs.x(k):
                    out.pairs.add((lab, k))
                elif exchange_copy == 1:  # same site: swap and keep singletons
                    cs.sigma[lab - 1], cs.sigma[k - 1] = B, A
                    out.singles[lab] = B
                    out.singles[k] = A
                else:
                    cs.sigma_prime[lab - 1], cs.sigma_prime[k - 1] = A, B
                    out.singles[lab] = A
                    out.singles[k] = B
            else:
                out.disc_J.add(lab)
        elif lab in out.disc_I:                  # case (c)
            out.disc_I.discard(lab)
            out.singles[lab] = B
        else:
            raise SplittingFault(f"no C2-right case matches label {lab}")
    elif mark == LEFT:
        lab = _leftmost_b(cs, cs.sigma_prime)
        if lab is None:
            raise CouplingError("left flip with no b-particle in copy 2")
        cs.sigma_prime[lab - 1] = A
        pr = _pair_with_first(out, lab)
        if pr is not None:                       # case (a)
            j = pr[1]
            out.pairs.discard(pr)
            out.singles[lab] = A
            if out.disc_J:
                k = max(out.disc_J)
                out.disc_J.discard(k)
                out.pairs.add((k, j))
            else:
                out.disc_I.add(j)
        elif lab in out.singles:                 # case (b)
            del out.singles[lab]
            if out.disc_J:
                k = max(out.disc_J)
                out.disc_J.discard(k)
                if cs.x(k) > cs.x(lab):
                    out.pairs.add((k, lab))
                elif exchange_copy == 1:
                    cs.sigma[lab - 1], cs.sigma[k - 1] = A, B
                    out.singles[lab] = A
                    out.singles[k] = B
                else:
                    cs.sigma_prime[lab - 1], cs.sigma_prime[k - 1] = B, A
                    out.singles[lab] = B
                    out.singles[k] = A
            else:
                out.disc_I.add(lab)
        elif lab in out.disc_J:                  # case (c)
            out.disc_J.discard(lab)
            out.singles[lab] = A
        else:
            raise SplittingFault(f"no C2-left case matches label {lab}")
    else:
        raise CouplingError(f"unknown mark {mark!r}")
    return out


# ---------------------------------------------------------------------------
# balance identities


@dataclass
class BalanceStep:
    phase: str
    q: int
    mark: str
    n_pairs: int
    n_singles: int
    n_I: int
    n_J: int
    lhs: int
    rhs: int
    ok: bool


@dataclass
class BalanceReport:
    ok: bool
    steps: list[BalanceStep]
    final_I: int
    final_J: int
    final_order_ok: bool
    failure: str | None = None

    def to_json(self) -> str:
        return json.dumps({
            "ok": self.ok,
            "final_I": self.final_I,
            "final_J": self.final_J,
            "final_order_ok": self.final_order_ok,
            "failure": self.failure,
            "steps": [vars(s) for s in self.steps],
        }, indent=2)


def marks_stay_in_X(h_a0: int, M: int, marks) -> bool:
    """Both species survive every flip of the sequence."""
    n_a = h_a0
    for mark in marks:
        n_a += 1 if mark == LEFT else -1
        if not 0 < n_a < M:
            return False
    return True


def run_balance_history(cs: CoupledState, marks, mover=None,
                        check_invariants: bool = True) -> BalanceReport:
    """Run m copy-1 flips then m copy-2 flips from a discrepancy-free
    splitting, checking the balance identity after every step and the final
    emptiness of both discrepancy sets.

    `mover`, if given, is called as mover(cs, spl, slot) between flips
    (slot = 0..m) and must return the new splitting; it models the walk
    transport with collision dissolutions.
    """
    m = len(marks)
    spl = build_splitting(cs)
    steps: list[BalanceStep] = []

    def record(phase: str, q: int, mark: str, lhs: int, rhs: int) -> bool:
        ok = lhs == rhs and lhs >= 0
        steps.append(BalanceStep(phase, q, mark, len(spl.pairs), len(spl.singles),
                                 len(spl.disc_I), len(spl.disc_J), lhs, rhs, ok))
        return ok

    try:
        for q in range(1, m + 1):
            if mover is not None:
                spl = mover(cs, spl, q - 1)
            spl = apply_C1(spl, cs, marks[q - 1])
            if check_invariants:
                check_splitting(spl, cs)
            n_r = sum(1 for mk in marks[:q] if mk == RIGHT)
            n_l = q - n_r
            if not record("C1", q, marks[q - 1], n_r - len(spl.disc_I),
                          n_l - len(spl.disc_J)):
                return BalanceReport(False, steps, len(spl.disc_I), len(spl.disc_J),
                                     False, f"identity fails after C1 step {q}")
        if mover is not None:
            spl = mover(cs, spl, m)
        for q in range(1, m + 1):
            spl = apply_C2(spl, cs, marks[q - 1])
            if check_invariants:
                check_splitting(spl, cs)
            n_r = sum(1 for mk in marks[q:] if mk == RIGHT)
            n_l = sum(1 for mk in marks[q:] if mk == LEFT)
            if not record("C2", m + q, marks[q - 1], n_r - len(spl.disc_I),
                          n_l - len(spl.disc_J)):
                return BalanceReport(False, steps, len(spl.disc_I), len(spl.disc_J),
                                     False, f"identity fails after C2 step {q}")
    except (CouplingError, SplittingFault) as exc:
        return BalanceReport(False, steps, len(spl.disc_I), len(spl.disc_J),
                             False, str(exc))

    final_order = dominates(site_counts(cs.positions, cs.sigma_prime),
                            site_counts(cs.positions, cs.sigma))
    ok = not spl.disc_I and not spl.disc_J and final_order
    failure = None
    if spl.disc_I or spl.disc_J:
        failure = "discrepancies remain at the end"
    elif not final_order:
        failure = "final states not ordered"
    return BalanceReport(ok, steps, len(spl.disc_I), len(spl.disc_J),
                         final_order, failure)


# ---------------------------------------------------------------------------
# exhaustive small-instance enumeration


@dataclass
class ExhaustiveReport:
    ok: bool
    n_instances: int
    n_runs: int
    n_skipped_depleting: int
    first_failure: str | None = None


def _mark_sequences(max_marks: int):
    for m in range(max_marks + 1):
        for bits in range(1 << m):
            yield tuple(RIGHT if (bits >> p) & 1 else LEFT for p in range(m))


def exhaustive_balance_check(max_particles: int = 4, n_sites: int = 4,
                             max_marks: int = 3) -> ExhaustiveReport:
    """Check the balance identities on every ordered coupled pair with
    matched a-counts (positions sorted WLOG: labels at equal sites are
    exchangeable) and every mark sequence, positions frozen.

    Mark sequences that would flip an absent species are skipped, matching
    the survival conditioning of the stochastic setting.
    """
    from itertools import combinations_with_replacement, product

    n_instances = n_runs = n_skipped = 0
    for M in range(1, max_particles + 1):
        for xs in combinations_with_replacement(range(n_sites), M):
            positions = np.array(xs, dtype=np.int64)
            for sigma in product((A, B), repeat=M):
                h_a = sigma.count(A)
                for sigma_p in product((A, B), repeat=M):
                    if sigma_p.count(A) != h_a:
                        continue
                    xi = site_counts(positions, np.array(sigma))
                    xi_p = site_counts(positions, np.array(sigma_p))
                    if not dominates(xi_p, xi):
                        continue
                    n_instances += 1
                    for marks in _mark_sequences(max_marks):
                        if not marks_stay_in_X(h_a, M, marks):
                            n_skipped += 1
                            continue
                        cs = CoupledState(positions, np.array(sigma),
                                          np.array(sigma_p))
                        rep = run_balance_history(cs, list(marks),
                                                  check_invariants=True)
                        n_runs += 1
                        if not rep.ok:
                            msg = (f"x={xs} sigma={sigma} sigma'={sigma_p} "
                                   f"marks={marks}: {rep.failure}")
                            return ExhaustiveReport(False, n_instances, n_runs,
                                                    n_skipped, msg)
    return ExhaustiveReport(True, n_instances, n_runs, n_skipped)


# ---------------------------------------------------------------------------
# pathwise sandwich verification


@dataclass
class SandwichReport:
    n_seeds: int
    n_excluded: int
    n_violations: int
    violations: list[str]
    counts_mismatch: int

    @property
    def exclusion_rate(self) -> float:
        return self.n_excluded / self.n_seeds if self.n_seeds else 0.0

    @property
    def ok(self) -> bool:
        return self.n_violations == 0 and self.counts_mismatch == 0

    def to_json(self) -> str:
        return json.dumps({
            "n_seeds": self.n_seeds,
            "n_excluded": self.n_excluded,
            "exclusion_rate": self.exclusion_rate,
            "n_violations": self.n_violations,
            "counts_mismatch": self.counts_mismatch,
            "violations": self.violations[:50],
        }, indent=2)


def _block_jump_events(real: PositionRealization, t_lo: float, t_hi: float
                       ) -> list[tuple[float, int, int]]:
    """(time, 1-based label, step) for every walk jump in (t_lo, t_hi]."""
    ev: list[tuple[float, int, int]] = []
    for i in range(real.M):
        jt = real.jump_times[i]
        lo = int(np.searchsorted(jt, t_lo, side="right"))
        hi = int(np.searchsorted(jt, t_hi, side="right"))
        st = real.steps[i]
        for k in range(lo, hi):
            ev.append((float(jt[k]), i + 1, int(st[k])))
    ev.sort()
    return ev


def couple_block(cs: CoupledState, real: PositionRealization, block: EventLog,
                 t_lo: float, t_hi: float, protocol: str,
                 exchange_copy: int) -> Splitting:
    """Run one block of the two-copy protocol on shared walks.

    'early' gives all of the block's flips to copy 1 at the block start
    (frozen positions) and lets copy 2 flip at the ring times during the
    motion; 'late' lets copy 1 flip at the ring times and gives copy 2 all
    flips at the block end.  Pairs whose members collide are dissolved at the
    collision jump via a same-site color swap in the chosen copy.

    cs must hold both copies at t_lo with copy 2 dominated by copy 1; it is
    advanced to t_hi in place.
    """
    if protocol not in ("early", "late"):
        raise CouplingError(f"protocol must be 'early' or 'late', got {protocol!r}")
    spl = build_splitting(cs, exchange_copy=exchange_copy)
    rings = list(zip(block.times, block.marks))
    if protocol == "early":
        for _, mark in rings:
            spl = apply_C1(spl, cs, mark)

    events = _block_jump_events(real, t_lo, t_hi)
    pair_of: dict[int, tuple[int, int]] = {}

    def rebuild() -> None:
        pair_of.clear()
        for pr in spl.pairs:
            pair_of[pr[0]] = pr
            pair_of[pr[1]] = pr

    rebuild()
    ei = ri = 0
    while ei < len(events) or ri < len(rings):
        ring_next = (ri < len(rings)
                     and (ei >= len(events) or rings[ri][0] < events[ei][0]))
        if ring_next:
            mark = rings[ri][1]
            ri += 1
            if protocol == "early":
                spl = apply_C2(spl, cs, mark, exchange_copy=exchange_copy)
            else:
                spl = apply_C1(spl, cs, mark)
            rebuild()
        else:
            _, lab, step = events[ei]
            ei += 1
            cs.positions[lab - 1] += step
            pr = pair_of.get(lab)
            if pr is not None and cs.positions[pr[0] - 1] == cs.positions[pr[1] - 1]:
                _dissolve_pair(spl, cs, pr, exchange_copy)
                del pair_of[pr[0]], pair_of[pr[1]]

    if protocol == "late":
        for _, mark in rings:
            spl = apply_C2(spl, cs, mark, exchange_copy=exchange_copy)
    if not np.array_equal(cs.positions, real.positions_at(t_hi)):
        raise SplittingFault("positions drifted from the stored realization")
    return spl


def verify_sandwich(cfg: SimConfig, profile: ProfilePair, delta: float,
                    seeds: int) -> SandwichReport:
    """For each seed, run the true evolution plus coupled realizations of the
    anticipated and postponed block evolutions on shared positions and log,
    and check the tail-mass sandwich at every block time and site.

    The comparison copies are built blockwise through the two-copy protocol,
    with every same-site exchange directed at the comparison copy, so the
    true run stays untouched and the sandwich is deterministic per seed.
    Runs leaving the survival set are excluded and counted.
    """
    block_len = delta / cfg.epsilon**2
    K = int(np.ceil(cfg.horizon_T / delta - 1e-12))
    t_end = K * block_len

    n_excluded = 0
    n_violations = 0
    counts_mismatch = 0
    violations: list[str] = []
    for rep in range(seeds):
        ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(rep,))
        rng_init, rng_clock, rng_walk = map(np.random.default_rng, ss.spawn(3))
        ps0 = sample_initial(profile, cfg, rng_init)
        log = sample_clock(cfg, rng_clock)
        h_a0 = int(np.sum(ps0.colors == A))
        if not in_X(h_a0, ps0.M, log, t_end):
            n_excluded += 1
            continue
        real = PositionRealization.sample(ps0.positions, t_end, cfg.walk_rate,
                                         rng_walk)
        traj = run_true(ps0, log, t_end, realization=real)
        plus_colors = ps0.colors.copy()
        minus_colors = ps0.colors.copy()
        for k in range(K + 1):
            t_k = k * block_len
            true_k = traj.state_at(t_k)
            xi_true = site_counts(true_k.positions, true_k.colors)
            xi_plus = site_counts(true_k.positions, plus_colors)
            xi_minus = site_counts(true_k.positions, minus_colors)
            n_a = sum(xi_true.values())
            if (sum(xi_plus.values()) != n_a or sum(xi_minus.values()) != n_a):
                counts_mismatch += 1
            for lo, hi, tag in ((xi_minus, xi_true, "postponed<=true"),
                                (xi_true, xi_plus, "true<=anticipated")):
                gap, site = order_witness(lo, hi)
                if gap > 0:
                    n_violations += 1
                    violations.append(
                        f"seed {rep}, block {k}, {tag} fails at site {site}")
            if k == K:
                break
            t_next = (k + 1) * block_len
            block = log.restrict(t_k, t_next)
            try:
                cs_p = CoupledState(true_k.positions, plus_colors,
                                    true_k.colors)
                spl_p = couple_block(cs_p, real, block, t_k, t_next,
                                     "early", exchange_copy=1)
                cs_m = CoupledState(true_k.positions, true_k.colors,
                                    minus_colors)
                spl_m = couple_block(cs_m, real, block, t_k, t_next,
                                     "late", exchange_copy=2)
            except (CouplingError, SplittingFault) as exc:
                n_violations += 1
                violations.append(f"seed {rep}, block {k}: {exc}")
                break
            true_next = traj.state_at(t_next).colors
            if (spl_p.disc_I or spl_p.disc_J or spl_m.disc_I or spl_m.disc_J
                    or not np.array_equal(cs_p.sigma_prime, true_next)
                    or not np.array_equal(cs_m.sigma, true_next)):
                n_violations += 1
                violations.append(
                    f"seed {rep}, block {k}: protocol left discrepancies "
                    "or lost track of the true run")
                break
            plus_colors = cs_p.sigma.copy()
            minus_colors = cs_m.sigma_prime.copy()
    return SandwichReport(seeds, n_excluded, n_violations, violations,
                          counts_mismatch)
