"""Sampling the tilted single walk level by level.

Under the tilt at ``eta`` the walk heading from k-1 to k is the Doob h-transform
with jump rates ``1/(2 phi_{x+1})`` to the right and ``phi_x / 2`` to the left.
Their sum is ``1 - V(x)``, so holding times are exponential with that rate and
each tau_k is an independent excursion ending at the first visit to k.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .barrier import BarrierEvent, ProbEstimate
from .env import Environment, ParameterError
from .tilt import PhiProfile, TiltSolution, TruncationError, tilted_profile

log = logging.getLogger(__name__)
_BATCH = 1 << 14  # paths per batch in clearance_samples


@dataclass
class TruncationStats:
    """Counts of excursions that left the phi window and were continued in a wider one."""

    draws: int = 0
    truncations: int = 0
    max_M: int = 0

    def rate(self) -> float:
        return self.truncations / self.draws if self.draws else 0.0


@dataclass(frozen=True)
class HittingPath:
    H: np.ndarray  # H[k-1] is the hitting time of level k
    tau: np.ndarray

    def __post_init__(self):
        if np.any(self.tau <= 0):
            raise ValueError("increments must be positive")

    @property
    def n(self) -> int:
        return self.tau.size

    @classmethod
    def from_tau(cls, tau) -> "HittingPath":
        tau = np.asarray(tau, dtype=float)
        return cls(np.cumsum(tau), tau)

    def centered(self, mean_tau) -> np.ndarray:
        """H_k minus its tilted mean, for k = 1..n."""
        return self.H - np.cumsum(np.asarray(mean_tau, dtype=float)[: self.n])


@numba.njit(cache=True)
def _excursion(phi, V, first, k, x, t, rng):
    """Run the walk from (x, t) until it reaches k; returns (time, exited).

    On exit the walk sits at first - 1 and the returned time is the elapsed
    time, so the excursion can be resumed in a wider window.
    """
    while True:
        i = x - first
        right = 0.5 / phi[i + 1]
        total = 1.0 - V[i + 1]
        t += -math.log(1.0 - rng.random()) / total
        if rng.random() * total < right:
            x += 1
            if x == k:
                return t, False
        else:
            x -= 1
            if x < first:
                return t, True


@numba.njit(cache=True)
def _tau_kernel(phi, V, first, k, size, rng):
    out = np.empty(size)
    flag = np.zeros(size, dtype=np.bool_)
    for r in range(size):
        out[r], flag[r] = _excursion(phi, V, first, k, k - 1, 0.0, rng)
    return out, flag


@numba.njit(cache=True)
def _path_kernel(phi, V, first, n, reps, rng):
    tau = np.empty((reps, n))
    flag = np.zeros((reps, n), dtype=np.bool_)
    for r in range(reps):
        for k in range(1, n + 1):
            tau[r, k - 1], flag[r, k - 1] = _excursion(phi, V, first, k, k - 1, 0.0, rng)
    return tau, flag


@numba.njit(cache=True)
def _resume_kernel(phi, V, first, ks, x, t0, rng):
    out = np.empty(ks.size)
    flag = np.zeros(ks.size, dtype=np.bool_)
    for r in range(ks.size):
        out[r], flag[r] = _excursion(phi, V, first, ks[r], x, t0[r], rng)
    return out, flag


def _finish(env: Environment, phi: PhiProfile, ks, t0, rng):
    """Resume exited excursions in doubled windows until each reaches its level.

    By the strong Markov property at the exit time this gives the exact law,
    up to the phi truncation error of the wider window.
    """
    prof = phi
    t = np.array(t0, dtype=float)
    todo = np.arange(t.size)
    ks = np.asarray(ks, dtype=np.int64)
    while todo.size:
        x = prof.first - 1
        prof = _bigger(env, prof)
        out, flag = _resume_kernel(*_args(prof), ks[todo], x, t[todo], rng)
        t[todo] = out
        todo = todo[flag]
    return t, prof


def _check_profile(phi: PhiProfile, tilt: TiltSolution | None, need_n: int):
    if tilt is not None and not math.isclose(phi.eta, tilt.eta_bar, rel_tol=0, abs_tol=1e-14):
        raise ParameterError(f"phi profile was built at eta={phi.eta}, tilt has eta_bar={tilt.eta_bar}")
    if need_n > phi.n:
        raise ParameterError(f"phi profile covers levels up to {phi.n}, need {need_n}")


def _bigger(env: Environment, phi: PhiProfile) -> PhiProfile:
    M = 2 * phi.M
    if not env.covers(-M, phi.n - 1):
        raise TruncationError(f"excursion left the phi window and the environment cannot cover M={M}")
    return tilted_profile(env, phi.eta, phi.n, M, tol=math.inf)


def _args(phi: PhiProfile):
    return np.ascontiguousarray(phi.phi), np.ascontiguousarray(phi.V), int(phi.first)


def sample_tau(env: Environment, tilt: TiltSolution | None, phi: PhiProfile, k: int,
               rng: np.random.Generator, size: int | None = None, stats: TruncationStats | None = None):
    """Draw tau_k (the time to go from k-1 to k) under the tilted law.

    An excursion that leaves the phi window is continued from the exit point
    with the window doubled, as often as needed.
    """
    if not 1 <= k <= phi.n:
        raise ParameterError(f"level k must be in 1..{phi.n}")
    _check_profile(phi, tilt, k)
    m = 1 if size is None else int(size)
    out, flag = _tau_kernel(*_args(phi), int(k), m, rng)
    prof = phi
    nt = int(flag.sum())
    if nt:
        out[flag], prof = _finish(env, phi, np.full(nt, k), out[flag], rng)
        log.info("%d excursions left the phi window (M=%d) and were continued", nt, phi.M)
    if stats is not None:
        stats.draws += m
        stats.truncations += nt
        stats.max_M = max(stats.max_M, prof.M)
    return float(out[0]) if size is None else out


def sample_hitting_paths(env: Environment, tilt: TiltSolution | None, phi: PhiProfile, n: int, reps: int,
                         rng: np.random.Generator, stats: TruncationStats | None = None) -> np.ndarray:
    """Array of shape (reps, n) of independent increments tau_1..tau_n."""
    if n < 1 or reps < 1:
        raise ParameterError("n and reps must be positive")
    _check_profile(phi, tilt, n)
    tau, flag = _path_kernel(*_args(phi), int(n), int(reps), rng)
    nt = int(flag.sum())
    prof = phi
    if nt:
        rows, cols = np.nonzero(flag)
        tau[rows, cols], prof = _finish(env, phi, cols + 1, tau[rows, cols], rng)
        log.info("%d excursions left the phi window and were continued", nt)
    if stats is not None:
        stats.draws += reps * n
        stats.truncations += nt
        stats.max_M = max(stats.max_M, prof.M)
    return tau


def sample_hitting_path(env: Environment, tilt: TiltSolution | None, phi: PhiProfile, n: int,
                        rng: np.random.Generator) -> HittingPath:
    return HittingPath.from_tau(sample_hitting_paths(env, tilt, phi, n, 1, rng)[0])


def time_barrier(phi: PhiProfile, tilt: TiltSolution, profile_values) -> np.ndarray:
    """``K_k / theta* + profile(k)`` for k = 0..n, the curve H_k is compared with."""
    b = np.asarray(profile_values, dtype=float)
    n = b.size - 1
    K = np.concatenate([[0.0], np.cumsum(-phi.L[:n])])
    return K / tilt.theta_star + b


def clearance_samples(env: Environment, tilt: TiltSolution, phi: PhiProfile, profile_values, reps: int,
                      rng: np.random.Generator):
    """Per path, ``min_k (H_k - barrier_k)`` and ``H_n - barrier_n``.

    A barrier event with start y holds iff ``y + min >= 0`` and ``y + end`` lies
    in J, so one batch of paths answers every y.
    """
    b = time_barrier(phi, tilt, profile_values)
    n = b.size - 1
    _check_profile(phi, tilt, n)
    cmin = np.empty(reps)
    end = np.empty(reps)
    for lo in range(0, reps, _BATCH):
        m = min(_BATCH, reps - lo)
        H = np.cumsum(sample_hitting_paths(env, tilt, phi, n, m, rng), axis=1) - b[None, 1:]
        cmin[lo:lo + m] = np.minimum(H.min(axis=1), -b[0])
        end[lo:lo + m] = H[:, -1]
    return cmin, end


def barrier_indicator(cmin, end, y, J) -> np.ndarray:
    return (y + cmin >= 0) & (y + end >= J[0]) & (y + end <= J[1])


def estimate_barrier_prob_rw(env: Environment, tilt: TiltSolution, phi: PhiProfile, event: BarrierEvent,
                             reps: int, rng: np.random.Generator) -> ProbEstimate:
    """Fraction of tilted paths with ``y + H_k - K_k/theta* - profile(k) >= 0`` for
    k = 0..n and the end clearance in J."""
    if reps <= 0:
        raise ParameterError("reps must be positive")
    cmin, end = clearance_samples(env, tilt, phi, event.profile.values, reps, rng)
    hit = barrier_indicator(cmin, end, event.start_y, event.J)
    p = float(hit.mean())
    return ProbEstimate(p, math.sqrt(p * (1 - p) / max(reps - 1, 1)), int(reps))


# --- direct oracle for phi ---------------------------------------------------------


@dataclass(frozen=True)
class OracleEstimate:
    mean: float
    se: float
    reps: int
    truncated: int
    bias_bound: float  # truncated paths contribute at most this much extra mass in total


@numba.njit(cache=True)
def _oracle_kernel(V, x_min, k, reps, max_steps, log_cut, rng):
    s1 = 0.0
    s2 = 0.0
    ntrunc = 0
    bias = 0.0
    S = V.size
    for _ in range(reps):
        x = k - 1
        lw = 0.0
        steps = 0
        w = 0.0
        while True:
            i = x - x_min
            if i < 0 or i >= S or steps >= max_steps or lw < log_cut:
                w = math.exp(lw)
                ntrunc += 1
                bias += w
                break
            lw += V[i] * (-math.log(1.0 - rng.random()))
            steps += 1
            if rng.random() < 0.5:
                x += 1
                if x == k:
                    w = math.exp(lw)
                    break
            else:
                x -= 1
        s1 += w
        s2 += w * w
    return s1, s2, ntrunc, bias


def mc_phi_oracle(env: Environment, eta: float, k: int, reps: int, rng: np.random.Generator,
                  max_steps: int = 100_000, log_weight_cut: float = -40.0) -> OracleEstimate:
    """Plain Monte Carlo for ``E_{k-1}[exp(int_0^{H_k} V(X_s) ds)]`` with the rate-1 walk.

    Paths that exhaust the step budget, drop below the log-weight cutoff or leave the
    environment window contribute their weight so far and are counted in
    ``truncated``; since the weight only decreases, the estimate overshoots by at
    most ``bias_bound``.
    """
    if eta > 0:
        raise ParameterError("eta must be <= 0")
    if not 1 <= k <= 3:
        raise ParameterError("the direct oracle is for k in 1..3")
    if reps < 2:
        raise ParameterError("reps must be at least 2")
    V = np.ascontiguousarray(env.zeta + eta)
    s1, s2, nt, bias = _oracle_kernel(V, env.x_min, int(k), int(reps), int(max_steps), float(log_weight_cut), rng)
    mean = s1 / reps
    var = max(s2 / reps - mean * mean, 0.0) * reps / (reps - 1)
    return OracleEstimate(float(mean), math.sqrt(var / reps), int(reps), int(nt), float(bias / reps))
