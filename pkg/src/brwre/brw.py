"""Event-driven simulation of branching random walk in a fixed environment.

Particles jump to each neighbour at rate 1/2 and split in two at rate xi(x).
The state is an occupancy count per site; one global exponential clock drives
the dynamics (total rate = population + sum of branching rates) and the event
is then assigned to a site, a particle type and a move.

Pruning removes particles that fall ``prune_window`` or more behind the running
maximum.  For the window-doubling check a single run carries two nested systems
with windows ``W`` and ``2W`` on the same randomness: type 0 particles belong to
both, type 1 only to the wide system, type 2 only to the narrow one.  Each
system prunes against its own running maximum, so each is exactly the pruned
process for its window.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .env import Environment, ParameterError, WindowError

RUN_FORMAT_VERSION = 1
NO_PRUNE = 1 << 40

OK, POP_CAP, RIGHT_EDGE, EXTINCT = 0, 1, 2, 3
_STATUS = {OK: "ok", POP_CAP: "population cap exceeded", RIGHT_EDGE: "particle left the environment window on the right",
           EXTINCT: "pruned system died out"}


class SimulationAborted(RuntimeError):
    def __init__(self, msg, record=None):
        super().__init__(msg)
        self.record = record


@dataclass
class SimConfig:
    prune_window: int = 60
    pop_cap: int = 5_000_000
    seed: int = 0
    n_target: int = -1
    t_end: float = 0.0
    t_grid: list = field(default_factory=list)
    coupled: bool = False
    record_pruned: bool = False
    prune_bin: float = 0.5

    def __post_init__(self):
        if self.prune_window < 1:
            raise ParameterError("prune_window must be >= 1")

    @property
    def outer_window(self) -> int:
        if self.prune_window >= NO_PRUNE:
            return NO_PRUNE
        return 2 * self.prune_window if self.coupled else self.prune_window

    def required_left(self) -> int:
        """Leftmost site the environment must cover for pruning to act before the window ends."""
        w = self.outer_window
        return -w + 1 if w < NO_PRUNE else 0


@numba.njit(cache=True)
def _prune_site(c, i, x, m_in, m_out, w_in, w_out, stats):
    inner = x <= m_in - w_in
    outer = x <= m_out - w_out
    if inner and outer:
        stats[0] += c[0, i] + c[2, i]
        stats[1] += c[0, i] + c[1, i]
        removed = c[0, i] + c[1, i] + c[2, i]
        c[0, i] = 0
        c[1, i] = 0
        c[2, i] = 0
        return removed
    if inner:
        stats[0] += c[0, i] + c[2, i]
        removed = c[2, i]
        c[1, i] += c[0, i]
        c[0, i] = 0
        c[2, i] = 0
        return removed
    if outer:
        stats[1] += c[0, i] + c[1, i]
        removed = c[1, i]
        c[2, i] += c[0, i]
        c[0, i] = 0
        c[1, i] = 0
        return removed
    return 0


@numba.njit(cache=True)
def _log_pruned(plog, dtb, t, i, count):
    """Add ``count`` pruned particles at site index i to the bin containing t."""
    b = int(t / dtb)
    if b >= plog.shape[1]:
        grown = np.zeros((plog.shape[0], max(2 * plog.shape[1], b + 1)))
        grown[:, : plog.shape[1]] = plog
        plog = grown
    plog[i, b] += count
    return plog


@numba.njit(cache=True)
def _alive(c, lo, hi, other):
    for j in range(lo, hi + 1):
        if c[0, j] + c[other, j] > 0:
            return True
    return False


@numba.njit(cache=True)
def _brw_kernel(xi, x_min, n_target, t_end, grid, w_in, w_out, pop_cap, dtb, rng):
    S = xi.size
    c = np.zeros((3, S), dtype=np.int64)
    i0 = -x_min
    c[0, i0] = 1
    pop = 1
    branch_sum = xi[i0]
    t = 0.0
    m_in = 0
    m_out = 0
    lo = i0
    hi = i0
    nh = max(n_target, 0) + 1
    H_in = np.full(nh, np.inf)
    H_out = np.full(nh, np.inf)
    H_in[0] = 0.0
    H_out[0] = 0.0
    done_in = n_target <= 0
    done_out = n_target <= 0
    G = grid.size
    g_max = np.zeros(G, dtype=np.int64)
    g_n0 = np.zeros(G, dtype=np.int64)
    g_pop = np.zeros(G, dtype=np.int64)
    g_max_out = np.zeros(G, dtype=np.int64)
    gi = 0
    # pruned-from-inner mass per (site, time bin), for the catch-up bound
    plog = np.zeros((S, 64))
    # stats: pruned from inner, pruned from outer, left-window exits, events, max pop
    stats = np.zeros(5, dtype=np.int64)
    stats[4] = 1
    status = 0
    lost = 0
    while True:
        rate = pop + branch_sum
        t_new = t - math.log(1.0 - rng.random()) / rate
        # the state is constant until the next event: record grid points before it
        while gi < G and grid[gi] < t_new:
            top = -1
            topo = -1
            for j in range(hi, lo - 1, -1):
                if top < 0 and c[0, j] + c[2, j] > 0:
                    top = j
                if topo < 0 and c[0, j] + c[1, j] > 0:
                    topo = j
                if top >= 0 and topo >= 0:
                    break
            g_max[gi] = top + x_min if top >= 0 else -(1 << 40)
            g_max_out[gi] = topo + x_min if topo >= 0 else -(1 << 40)
            g_n0[gi] = c[0, i0] + c[2, i0]
            g_pop[gi] = pop
            gi += 1
        if done_in and done_out and gi >= G and t_new > t_end:
            break
        t = t_new
        stats[3] += 1
        # one uniform picks the site, the particle within it and the move
        u = rng.random() * rate
        acc = 0.0
        i = -1
        for j in range(lo, hi + 1):
            r_j = (c[0, j] + c[1, j] + c[2, j]) * (1.0 + xi[j])
            if acc + r_j > u:
                i = j
                break
            acc += r_j
        if i < 0:  # rounding at the top end
            i = hi
            while c[0, i] + c[1, i] + c[2, i] == 0:
                i -= 1
            acc = u - 1e-12
        tot = c[0, i] + c[1, i] + c[2, i]
        w = (u - acc) / (1.0 + xi[i])
        pidx = int(w)
        if pidx >= tot:
            pidx = tot - 1
        f = (w - pidx) * (1.0 + xi[i])
        if pidx < c[0, i]:
            ty = 0
        elif pidx < c[0, i] + c[1, i]:
            ty = 1
        else:
            ty = 2
        if f < xi[i]:
            c[ty, i] += 1
            pop += 1
            branch_sum += xi[i]
            if pop > stats[4]:
                stats[4] = pop
            if pop > pop_cap:
                status = 1
                break
            continue
        step = 1 if f - xi[i] < 0.5 else -1
        c[ty, i] -= 1
        branch_sum -= xi[i]
        j = i + step
        if j < 0:
            stats[2] += 1
            pop -= 1
        elif j >= S:
            status = 2
            break
        else:
            c[ty, j] += 1
            branch_sum += xi[j]
            if j > hi:
                hi = j
            if j < lo:
                lo = j
            x = j + x_min
            if step == 1:
                if ty != 1 and x > m_in:
                    m_in = x
                    if m_in < nh and H_in[m_in] == np.inf:
                        H_in[m_in] = t
                    if m_in >= n_target:
                        done_in = True
                    k = m_in - w_in - x_min
                    if 0 <= k < S:
                        before = stats[0]
                        removed = _prune_site(c, k, k + x_min, m_in, m_out, w_in, w_out, stats)
                        if stats[0] > before:
                            plog = _log_pruned(plog, dtb, t, k, stats[0] - before)
                        pop -= removed
                        branch_sum -= removed * xi[k]
                if ty != 2 and x > m_out:
                    m_out = x
                    if m_out < nh and H_out[m_out] == np.inf:
                        H_out[m_out] = t
                    if m_out >= n_target:
                        done_out = True
                    k = m_out - w_out - x_min
                    if 0 <= k < S:
                        before = stats[0]
                        removed = _prune_site(c, k, k + x_min, m_in, m_out, w_in, w_out, stats)
                        if stats[0] > before:
                            plog = _log_pruned(plog, dtb, t, k, stats[0] - before)
                        pop -= removed
                        branch_sum -= removed * xi[k]
            else:
                before = stats[0]
                removed = _prune_site(c, j, x, m_in, m_out, w_in, w_out, stats)
                if stats[0] > before:
                    plog = _log_pruned(plog, dtb, t, j, stats[0] - before)
                pop -= removed
                branch_sum -= removed * xi[j]
        # a system can only die through pruning or the left edge
        if stats[0] + stats[1] + stats[2] > lost:
            lost = stats[0] + stats[1] + stats[2]
            timed = gi < G or t < t_end
            if ((not done_in or timed) and not _alive(c, lo, hi, 2)) or \
                    ((not done_out or timed) and not _alive(c, lo, hi, 1)):
                status = 3
                break
        if pop == 0:
            break
        while hi > lo and c[0, hi] + c[1, hi] + c[2, hi] == 0:
            hi -= 1
        while lo < hi and c[0, lo] + c[1, lo] + c[2, lo] == 0:
            lo += 1
        if stats[3] % 65536 == 0:
            branch_sum = 0.0
            for j in range(lo, hi + 1):
                branch_sum += (c[0, j] + c[1, j] + c[2, j]) * xi[j]
    return H_in, H_out, g_max, g_n0, g_pop, g_max_out, t, stats, status, m_in, m_out, plog


@dataclass
class RunRecord:
    env_seed: int
    sim_seed: int
    n_target: int
    prune_window: int
    outer_window: int
    H: list  # first-hit time of each level 0..n_target by the (narrow) system
    H_outer: list
    t_grid: list
    M_t: list
    M_t_outer: list
    N0_t: list
    pop_t: list
    t_final: float
    events: int
    pruned_inner: int
    pruned_outer: int
    window_exits: int
    max_pop: int
    max_reached: int
    status: str = "ok"
    prune_log: dict | None = None  # sparse pruned mass: bin width, site, bin index, count
    version: int = RUN_FORMAT_VERSION

    @property
    def H_bold(self) -> np.ndarray:
        return np.array([math.inf if h is None else h for h in self.H])

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("H", "H_outer"):
            d[key] = [None if (h is None or math.isinf(h)) else h for h in d[key]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        if d.get("version") != RUN_FORMAT_VERSION:
            raise ValueError(f"unsupported run record version {d.get('version')!r}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _run(env: Environment, cfg: SimConfig, n_target: int, t_end: float, grid, rng) -> RunRecord:
    w_in = min(cfg.prune_window, NO_PRUNE)
    w_out = cfg.outer_window
    if w_out < NO_PRUNE and env.x_min > cfg.required_left():
        raise WindowError(f"prune window {w_out} needs the environment to reach site {cfg.required_left()}, "
                          f"it starts at {env.x_min}")
    if n_target > env.x_max:
        raise WindowError(f"target level {n_target} beyond the environment window (x_max={env.x_max})")
    grid = np.asarray(sorted(grid), dtype=float)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0xB2A]))
    H_in, H_out, g_max, g_n0, g_pop, g_max_out, t, stats, status, m_in, m_out, plog = _brw_kernel(
        np.ascontiguousarray(env.rates), env.x_min, int(n_target), float(t_end), grid,
        int(w_in), int(w_out), int(cfg.pop_cap), float(cfg.prune_bin), rng)
    prune_log = None
    if cfg.record_pruned:
        si, bi = np.nonzero(plog)
        prune_log = {"bin": float(cfg.prune_bin), "site": (si + env.x_min).tolist(), "bin_index": bi.tolist(),
                     "count": plog[si, bi].tolist()}
    rec = RunRecord(
        env_seed=env.seed, sim_seed=int(cfg.seed), n_target=int(n_target), prune_window=int(w_in),
        outer_window=int(w_out), H=H_in.tolist(), H_outer=H_out.tolist(), t_grid=grid.tolist(),
        M_t=g_max.tolist(), M_t_outer=g_max_out.tolist(), N0_t=g_n0.tolist(), pop_t=g_pop.tolist(),
        t_final=float(t), events=int(stats[3]), pruned_inner=int(stats[0]), pruned_outer=int(stats[1]),
        window_exits=int(stats[2]), max_pop=int(stats[4]), max_reached=int(max(m_in, m_out)),
        status=_STATUS[int(status)], prune_log=prune_log,
    )
    rec = RunRecord.from_dict(rec.to_dict())
    if status != OK:
        raise SimulationAborted(f"simulation aborted: {rec.status} (t={t:.3f}, max pop {rec.max_pop})", rec)
    return rec


def simulate_hitting(env: Environment, n_target: int, cfg: SimConfig, rng=None) -> RunRecord:
    """Run until some particle hits ``n_target`` (in both systems when coupled).

    ``rec.H[k]`` is the first time any particle reached level k.
    """
    if n_target < 1:
        raise ParameterError("n_target must be >= 1")
    return _run(env, cfg, n_target, 0.0, cfg.t_grid, rng)


def simulate_until(env: Environment, t_end: float, cfg: SimConfig, rng=None, t_grid=None,
                   n_target: int = 0) -> RunRecord:
    """Run to time ``t_end``, recording the maximum, N(t, 0) and the population on ``t_grid``.

    With ``n_target > 0`` the run continues past ``t_end`` until that level is hit,
    so one run serves both hitting-time and maximum observables.
    """
    if t_end < 0:
        raise ParameterError("t_end must be >= 0")
    grid = list(cfg.t_grid if t_grid is None else t_grid)
    if not grid:
        grid = [t_end]
    if max(grid) > t_end:
        raise ParameterError("t_grid extends beyond t_end")
    return _run(env, cfg, n_target, t_end, grid, rng)


# --- genealogy-tracking simulator for the many-to-one check ----------------------------


@numba.njit(cache=True)
def _tracked_kernel(xi, x_min, t_end, n, c_lo, c_hi, reps, cap, rng):
    """Per replicate, the number of particles alive at t_end whose ancestral first
    hitting times of levels 0..n all lie in their boxes."""
    out = np.zeros(reps)
    pos = np.zeros(cap, dtype=np.int64)
    hits = np.full((cap, n + 1), np.inf)
    S = xi.size
    overflow = 0
    for r in range(reps):
        pop = 1
        pos[0] = 0
        hits[0, :] = np.inf
        hits[0, 0] = 0.0
        t = 0.0
        while True:
            rate = 0.0
            for p in range(pop):
                rate += 1.0 + xi[pos[p] - x_min]
            t += -math.log(1.0 - rng.random()) / rate
            if t > t_end:
                break
            u = rng.random() * rate
            acc = 0.0
            p = pop - 1
            for q in range(pop):
                acc += 1.0 + xi[pos[q] - x_min]
                if acc >= u:
                    p = q
                    break
            x = pos[p]
            rx = xi[x - x_min]
            v = rng.random() * (1.0 + rx)
            if v < rx:
                if pop >= cap:
                    overflow += 1
                    break
                pos[pop] = x
                hits[pop, :] = hits[p, :]
                pop += 1
            else:
                x += 1 if v < rx + 0.5 else -1
                if x - x_min < 0 or x - x_min >= S:
                    overflow += 1
                    break
                pos[p] = x
                if 0 <= x <= n and hits[p, x] == np.inf:
                    hits[p, x] = t
        cnt = 0
        for p in range(pop):
            ok = True
            for k in range(n + 1):
                h = hits[p, k]
                if not (c_lo[k] <= h <= c_hi[k]):
                    ok = False
                    break
            if ok:
                cnt += 1
        out[r] = cnt
    return out, overflow


def constrained_particle_counts(env: Environment, t: float, c_lo, c_hi, reps: int, rng,
                                cap: int = 4096) -> np.ndarray:
    """Per-run counts of particles at time t with ``c_lo[k] <= H_k(Y) <= c_hi[k]`` for k = 0..n."""
    c_lo = np.asarray(c_lo, dtype=float)
    c_hi = np.asarray(c_hi, dtype=float)
    n = c_lo.size - 1
    counts, overflow = _tracked_kernel(np.ascontiguousarray(env.rates), env.x_min, float(t), n,
                                       c_lo, c_hi, int(reps), int(cap), rng)
    if overflow:
        raise SimulationAborted(f"{overflow} tracked runs exceeded the particle cap or the window")
    return counts


# --- first-moment bound on the pruning error --------------------------------------------
#
# The unpruned system is the pruned one plus the untouched subtrees of every pruned
# particle, and those subtrees evolve independently.  By many-to-one, the expected
# number of lineages from a particle at x that reach level n within time r is
#
#     g(x, r) = E_x[exp(int_0^{H_n} xi(X_s) ds); H_n <= r],
#
# which solves dg/dr = g(x+1)/2 + g(x-1)/2 - g(x) + xi(x) g(x) with g(n, .) = 1.
# Summing g over the pruned mass bounds the chance that the unpruned system hits n
# earlier.


def catch_up_table(env: Environment, n: int, r_max: float, dr: float = 0.25):
    """``(r_grid, g)`` with ``g[x - env.x_min, j] = g(x, r_grid[j])`` for sites below n."""
    from scipy.sparse import diags
    from scipy.sparse.linalg import expm_multiply

    if n > env.x_max:
        raise WindowError("level n beyond the environment window")
    xi = env.rates_on(env.x_min, n - 1)
    m = xi.size
    # sites x_min..n-1 plus a constant slot feeding the boundary value g(n) = 1
    main = np.concatenate([xi - 1.0, [0.0]])
    upper = np.concatenate([np.full(m - 1, 0.5), [0.5]])
    lower = np.concatenate([np.full(m - 1, 0.5), [0.0]])
    A = diags([lower, main, upper], [-1, 0, 1], format="csc")
    v0 = np.zeros(m + 1)
    v0[-1] = 1.0
    steps = int(math.ceil(r_max / dr))
    out = expm_multiply(A, v0, start=0.0, stop=steps * dr, num=steps + 1, endpoint=True)
    r = np.linspace(0.0, steps * dr, steps + 1)
    g = np.clip(out[:, :m].T, 0.0, None)
    return r, g


def catch_up_bound(rec: RunRecord, x_min: int, r_grid, g, a_grid) -> np.ndarray:
    """Upper bound on P[unpruned system hits n before H_n - a | this run] for each a.

    Each pruned particle is placed at the start of its time bin and g is read at the
    next grid point up, both of which only enlarge the bound.
    """
    if rec.prune_log is None:
        raise ParameterError("run was made without record_pruned")
    T = rec.H[rec.n_target]
    pl = rec.prune_log
    site = np.asarray(pl["site"], dtype=np.int64)
    s = np.asarray(pl["bin_index"], dtype=float) * pl["bin"]
    cnt = np.asarray(pl["count"], dtype=float)
    dr = r_grid[1] - r_grid[0]
    out = np.empty(len(a_grid))
    for j, a in enumerate(a_grid):
        r = T - a - s
        ok = r > 0
        idx = np.minimum(np.ceil(r[ok] / dr).astype(np.int64), r_grid.size - 1)
        out[j] = min(1.0, float(np.sum(cnt[ok] * g[site[ok] - x_min, idx])))
    return out


def quantile_shift_bound(H, bounds, a_grid, qs=(0.1, 0.9)) -> dict:
    """Bound on how far the quantiles of H_n move when pruning is removed.

    ``H[k]`` are pruned-run hitting times and ``bounds[k]`` the catch-up bounds
    on ``a_grid``.  The unpruned CDF is at most the pruned one plus the averaged
    catch-up mass; the quantiles of the two curves (order statistics joined
    linearly) give the shift.
    """
    H = np.asarray(H, dtype=float)
    order = np.argsort(H)
    Hs = H[order]
    R = Hs.size
    x = np.linspace(Hs[0] - a_grid[-1], Hs[-1], 4001)
    F = np.interp(x, Hs, np.arange(R) / (R - 1), left=0.0, right=1.0)
    extra = np.zeros_like(x)
    for k in range(R):
        gap = H[k] - x
        m = gap > 0
        extra[m] += np.interp(gap[m], a_grid, bounds[k], right=bounds[k][-1])
    F_up = np.minimum(F + extra / R, 1.0)
    out = {}
    for q in qs:
        q_pruned = float(np.quantile(Hs, q))
        q_up = float(x[np.argmax(F_up >= q)])
        out[q] = max(q_pruned - q_up, 0.0)
    return out
