"""Barrier probabilities for the Gaussian process with piecewise-constant variance.

``B`` has independent increments ``B_k - B_{k-1} ~ N(0, xi2[k])`` and is a
Brownian motion with variance rate ``xi2[k]`` on ``[k-1, k]``.  A barrier event
asks the clearance ``d(s) = y + B_s - b(s)`` to stay nonnegative on ``[0, n]`` and
to end in ``J``.  Between integer times the barrier is the chord of its integer
values, so a path that is above it at both ends of a segment survives the
segment with probability ``1 - exp(-2 d_{k-1} d_k / xi2[k])``.  Paths carry the
product of these factors as a weight instead of being rejected.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import log_ndtr

from .env import ParameterError
from .tilt import CenteringTable

INTERP_MODES = ("linear", "variance_adapted")


@dataclass(frozen=True)
class GaussLaw:
    """Local variances ``xi2[k]`` of B on ``[k-1, k]``; entry 0 is unused."""

    xi2: np.ndarray

    def __post_init__(self):
        xi2 = np.asarray(self.xi2, dtype=float)
        if xi2.ndim != 1 or xi2.size < 1 or np.any(xi2[1:] <= 0) or not np.all(np.isfinite(xi2)):
            raise ParameterError("xi2 must be finite with xi2[k] > 0 for k >= 1")
        object.__setattr__(self, "xi2", xi2)

    @property
    def n(self) -> int:
        return self.xi2.size - 1

    @classmethod
    def from_table(cls, table: CenteringTable) -> "GaussLaw":
        return cls(table.xi2)


def adapted_interpolation(t1: int, t2: int, x1: float, x2: float, xi2, s):
    """Interpolate from ``x1`` at ``t1`` to ``x2`` at ``t2`` in proportion to accumulated variance.

    ``s`` may be an array of real times in ``[t1, t2]``.
    """
    xi2 = np.asarray(xi2, dtype=float)
    s = np.asarray(s, dtype=float)
    if t2 <= t1 or xi2.size <= t2:
        raise ParameterError("need t1 < t2 <= len(xi2) - 1")
    cum = np.concatenate([[0.0], np.cumsum(xi2[1:])])  # cum[k] = sum_{j<=k} xi2[j]
    total = cum[t2] - cum[t1]
    fl = np.floor(s).astype(int)
    ce = np.ceil(s).astype(int)
    w1 = (cum[t2] - cum[ce] + (ce - s) * xi2[ce]) / total
    w2 = ((s - fl) * xi2[ce] + cum[fl] - cum[t1]) / total
    return x1 * w1 + x2 * w2


@dataclass(frozen=True)
class BarrierProfile:
    """Barrier values at integer times 0..n.

    Inside a unit segment both interpolation modes are the straight chord, since
    the local variance is constant there; ``variance_adapted`` additionally
    records ``xi2`` so that :meth:`between` can span several segments.
    """

    values: np.ndarray
    interp: str = "linear"
    label: str = ""
    xi2: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ParameterError("barrier values must be a finite 1-d array")
        object.__setattr__(self, "values", v)
        if self.interp not in INTERP_MODES:
            raise ParameterError(f"interp must be one of {INTERP_MODES}")
        if self.interp == "variance_adapted":
            if self.xi2 is None or np.asarray(self.xi2).size != v.size:
                raise ParameterError("variance_adapted interpolation needs xi2 with one entry per level")
            object.__setattr__(self, "xi2", np.asarray(self.xi2, dtype=float))

    @property
    def n(self) -> int:
        return self.values.size - 1

    def at(self, s):
        """Barrier at real times ``s`` in [0, n]."""
        return np.interp(s, np.arange(self.n + 1), self.values)

    def between(self, t1: int, t2: int, s):
        """Interpolate between the values at ``t1`` and ``t2`` using the profile's rule."""
        if self.interp == "linear":
            x1, x2 = self.values[t1], self.values[t2]
            return x1 + (x2 - x1) * (np.asarray(s, dtype=float) - t1) / (t2 - t1)
        return adapted_interpolation(t1, t2, self.values[t1], self.values[t2], self.xi2, s)

    @classmethod
    def flat(cls, n: int, level: float = 0.0, label: str = "flat") -> "BarrierProfile":
        return cls(np.full(n + 1, float(level)), label=label)


@dataclass(frozen=True)
class BarrierEvent:
    """Clearance ``y + Z_s - barrier(s) >= 0`` for all s and ``y + Z_n - barrier(n)`` in ``J``."""

    start_y: float
    profile: BarrierProfile
    J: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        a, b = self.J
        if not a <= b:
            raise ParameterError(f"end interval {self.J} is empty")


@dataclass(frozen=True)
class ProbEstimate:
    p_hat: float
    se: float
    reps: int
    seed: int | None = None

    @property
    def rel_se(self) -> float:
        return self.se / self.p_hat if self.p_hat > 0 else math.inf

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat, "se": self.se, "reps": self.reps, "seed": self.seed}


# --- bananas and the t_{n;y} family -------------------------------------------------


def _banana(n: int, delta: float, xi2, sign: float) -> np.ndarray:
    if n < 3:
        raise ParameterError("banana profiles need n >= 3")
    if delta < 0:
        raise ParameterError("delta must be >= 0")
    xi2 = np.asarray(xi2, dtype=float)
    if xi2.size < n + 1:
        raise ParameterError(f"need xi2 for levels 1..{n}")
    k = np.arange(n + 1)
    g = sign * delta * (np.minimum((1.0 + k) ** (1 / 6), (1.0 + n - k) ** (1 / 6)) - 1.0)
    h = np.zeros(n + 1)
    a = n // 3
    b = n - a
    for j in range(a):
        h[j + 1] = h[j] + xi2[j + 1] * (g[j + 1] - g[j])
    for j in range(n, b, -1):
        h[j - 1] = h[j] - xi2[j] * (g[j] - g[j - 1])
    if b - a > 1:
        mid = np.arange(a + 1, b)
        h[mid] = adapted_interpolation(a, b, h[a], h[b], xi2[: n + 1], mid)
    return h


def banana_up(n: int, delta: float, xi2) -> BarrierProfile:
    """Downward-bulging 1/6-power banana with variance-scaled increments, zero at both ends."""
    return BarrierProfile(_banana(n, delta, xi2, -1.0), "variance_adapted", "banana_up",
                          np.asarray(xi2, dtype=float)[: n + 1])


def banana_down(n: int, delta: float, xi2) -> BarrierProfile:
    """Mirror image of :func:`banana_up`."""
    return BarrierProfile(_banana(n, delta, xi2, 1.0), "variance_adapted", "banana_down",
                          np.asarray(xi2, dtype=float)[: n + 1])


def log_p_interpolation(table: CenteringTable, p_hat_n: float, theta_star: float) -> np.ndarray:
    """``-(sigma_k^2 / (theta* sigma_n^2)) log p_n`` for k = 0..n."""
    if not p_hat_n > 0:
        raise ParameterError(f"p_hat_n must be positive, got {p_hat_n}")
    return -table.sigma2 / (theta_star * table.sigma2[-1]) * math.log(p_hat_n)


def profile_t_ny(table: CenteringTable, p_hat_n: float, theta_star: float, y: float, x: float = 0.0,
                 banana: BarrierProfile | None = None) -> BarrierProfile:
    """Time barrier ``K_k/theta* + x - y + h(k) - sigma_k^2 log(p_n)/(theta* sigma_n^2)``."""
    h = np.zeros(table.n + 1) if banana is None else banana.values
    if h.size != table.n + 1:
        raise ParameterError("banana length does not match the table")
    vals = table.K / theta_star + x - y + h + log_p_interpolation(table, p_hat_n, theta_star)
    label = "t_ny" if banana is None else f"t_ny[{banana.label}]"
    return BarrierProfile(vals, "variance_adapted", label, table.xi2)


def m_profile(table: CenteringTable, p_hat_n: float, theta_star: float,
              banana: BarrierProfile | None = None) -> BarrierProfile:
    """Barrier ``h(k) - sigma_k^2 log(p_n)/(theta* sigma_n^2)`` for the centred hitting times."""
    h = np.zeros(table.n + 1) if banana is None else banana.values
    vals = h + log_p_interpolation(table, p_hat_n, theta_star)
    return BarrierProfile(vals, "variance_adapted", "m" if banana is None else f"m[{banana.label}]", table.xi2)


def choose_delta(table: CenteringTable, p_hat_n: float, theta_star: float, start: float = 0.1,
                 min_delta: float = 1e-6) -> float:
    """Largest ``start / 2**j`` for which both banana-shifted t_{n;y} are increasing in k."""
    delta = start
    while delta >= min_delta:
        ok = all(
            np.all(np.diff(profile_t_ny(table, p_hat_n, theta_star, 0.0, 0.0,
                                        f(table.n, delta, table.xi2)).values) > 0)
            for f in (banana_up, banana_down)
        )
        if ok:
            return delta
        delta /= 2
    raise RuntimeError("no admissible banana delta found")


# --- estimators ----------------------------------------------------------------------


def _log_gauss_mass(lo, hi):
    """log P[lo <= N(0,1) <= hi], accurate in both tails."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    # reflect so that the interval sits in the lower tail
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lb + np.log1p(-np.exp(la - lb))
    return np.where(b > a, out, -np.inf)


def killed_segment_mass(d, drift, var, a, b):
    """P[clearance ends in [a, b] and stays positive] over one unit segment.

    The clearance is a Brownian motion started at ``d > 0`` with the given drift and
    variance rate, killed at 0.  Image formula:
    ``phi(z - d - mu) - exp(-2 mu d / v) phi(z + d - mu)``.
    """
    d = np.asarray(d, dtype=float)
    a = max(a, 0.0)
    if b <= a:
        return np.zeros_like(d)
    sd = math.sqrt(var)
    direct = np.exp(_log_gauss_mass((a - d - drift) / sd, (b - d - drift) / sd))
    image = np.exp(-2.0 * drift * d / var + _log_gauss_mass((a + d - drift) / sd, (b + d - drift) / sd))
    return np.clip(direct - image, 0.0, None)


def _segment_survival(d0, d1, var):
    with np.errstate(over="ignore"):
        s = -np.expm1(-2.0 * d0 * d1 / var)
    return np.where((d0 > 0) & (d1 > 0), s, 0.0)


def _path_weights(law: GaussLaw, event: BarrierEvent, reps: int, rng: np.random.Generator,
                  endpoint: str, record_all: bool = False, J_all=None):
    """Weights of ``reps`` paths; optionally the weight for every horizon k <= n."""
    n = event.profile.n
    b = event.profile.values
    a_J, b_J = event.J
    d = np.full(reps, event.start_y - b[0])
    alive = np.ones(reps)
    per_k = np.zeros((n + 1, reps)) if record_all else None
    if record_all:
        per_k[0] = ((d >= 0) & (d >= J_all[0]) & (d <= J_all[1])).astype(float)
    if np.any(d < 0):
        alive[:] = 0.0
    pinned = a_J == b_J and endpoint == "pinned"
    if pinned:
        # Gaussian bridge: B_k - (sigma_k^2/sigma_n^2)(B_n - target)
        sig = np.concatenate([[0.0], np.cumsum(law.xi2[1 : n + 1])])
        incr = rng.standard_normal((n, reps)) * np.sqrt(law.xi2[1 : n + 1])[:, None]
        B = np.vstack([np.zeros(reps), np.cumsum(incr, axis=0)])
        target = a_J + b[n] - event.start_y
        B = B - (sig / sig[n])[:, None] * (B[n] - target)[None, :]
        clear = event.start_y + B - b[:, None]
        for k in range(1, n + 1):
            alive *= _segment_survival(clear[k - 1], clear[k], law.xi2[k])
        return alive, None
    for k in range(1, n + 1):
        var = law.xi2[k]
        drift = -(b[k] - b[k - 1])
        if record_all:
            per_k[k] = alive * killed_segment_mass(np.maximum(d, 0.0), drift, var, *J_all) * (d > 0)
        if k == n and endpoint == "integrated" and not record_all:
            return alive * killed_segment_mass(np.maximum(d, 0.0), drift, var, a_J, b_J) * (d > 0), None
        d_new = d + drift + math.sqrt(var) * rng.standard_normal(reps)
        alive = alive * _segment_survival(d, d_new, var)
        d = d_new
    if record_all:
        return None, per_k
    return alive * ((d >= a_J) & (d <= b_J)), None


def estimate_barrier_prob_gauss(law: GaussLaw, event: BarrierEvent, reps: int, seed: int,
                                endpoint: str = "indicator", batch: int = 20000) -> ProbEstimate:
    """Weighted Monte Carlo estimate of a Gaussian barrier probability.

    ``endpoint`` selects how the end interval enters:

    * ``"indicator"``: the weight is multiplied by 1{d_n in J};
    * ``"integrated"``: the last segment is integrated in closed form (same
      expectation, lower variance);
    * ``"pinned"``: for a one-point ``J`` the path is a bridge to that clearance and
      the estimate is the conditional survival probability.
    """
    if reps <= 0:
        raise ParameterError("reps must be positive")
    if endpoint not in ("indicator", "integrated", "pinned"):
        raise ParameterError(f"unknown endpoint mode {endpoint!r}")
    if event.profile.n != law.n:
        raise ParameterError(f"profile has {event.profile.n} segments, law has {law.n}")
    if event.profile.interp == "variance_adapted" and not np.allclose(event.profile.xi2[1:], law.xi2[1:]):
        raise ParameterError("variance-adapted profile was built with a different xi2")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA]))
    s1 = s2 = 0.0
    done = 0
    while done < reps:
        m = min(batch, reps - done)
        w, _ = _path_weights(law, event, m, rng, endpoint)
        s1 += w.sum()
        s2 += (w * w).sum()
        done += m
    mean = s1 / reps
    var = max(s2 / reps - mean * mean, 0.0) * reps / max(reps - 1, 1)
    return ProbEstimate(float(mean), float(math.sqrt(var / reps)), reps, int(seed))


def p_n_event(table: CenteringTable, y0: int, n: int | None = None) -> tuple[GaussLaw, BarrierEvent]:
    """Law and event of p_n: start at y0 above the chord barrier W, end within [y0-1, y0] of it."""
    n = table.n if n is None else n
    t = table.truncated(n)
    return GaussLaw(t.xi2), BarrierEvent(float(y0), BarrierProfile(t.W, "linear", "W"), (y0 - 1.0, float(y0)))


def _check_y0(y0):
    if y0 < math.e + 1 or int(y0) != y0:
        raise ParameterError(f"y0 must be an integer >= e + 1, got {y0}")


def estimate_p_n(table: CenteringTable, y0: int = 4, n: int | None = None, reps: int = 20000,
                 seed: int = 0, rel_se_target: float | None = None,
                 endpoint: str = "integrated", max_reps: int = 5_000_000) -> ProbEstimate:
    """Estimate p_n for the environment behind ``table``.

    With ``rel_se_target`` set, the replicate count grows until the relative standard
    error meets the target or ``max_reps`` is reached (then a warning names the count
    needed).
    """
    _check_y0(y0)
    n = table.n if n is None else n
    if n == 0:
        return ProbEstimate(1.0, 0.0, reps, seed)
    law, event = p_n_event(table, y0, n)
    est = estimate_barrier_prob_gauss(law, event, reps, seed, endpoint)
    if rel_se_target is None:
        return est
    while est.rel_se > rel_se_target:
        need = int(math.ceil(est.reps * (est.rel_se / rel_se_target) ** 2 * 1.1))
        if need > max_reps:
            warnings.warn(f"p_n relative se {est.rel_se:.3f} needs about {need} reps (> max_reps={max_reps})")
            return est
        est = estimate_barrier_prob_gauss(law, event, need, seed, endpoint)
    return est


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@numba.njit(cache=True)
def _log_ndtr_nb(x):
    if x > -20.0:
        return math.log(0.5 * math.erfc(-x / math.sqrt(2.0)))
    x2 = x * x
    return -0.5 * x2 - math.log(-x) - _LOG_SQRT_2PI + math.log1p(-1.0 / x2 + 3.0 / (x2 * x2))


@numba.njit(cache=True)
def _log_mass_nb(lo, hi):
    if hi <= lo:
        return -np.inf
    if lo > 0.0:
        lo, hi = -hi, -lo
    la = _log_ndtr_nb(lo)
    lb = _log_ndtr_nb(hi)
    return lb + math.log1p(-math.exp(la - lb))


@numba.njit(cache=True)
def _killed_mass_nb(d, drift, var, a, b):
    sd = math.sqrt(var)
    direct = math.exp(_log_mass_nb((a - d - drift) / sd, (b - d - drift) / sd))
    image = math.exp(-2.0 * drift * d / var + _log_mass_nb((a + d - drift) / sd, (b + d - drift) / sd))
    out = direct - image
    return out if out > 0.0 else 0.0


@numba.njit(cache=True)
def _p_all_kernel(W, xi2, y0, reps, rng):
    n = W.size - 1
    a = max(y0 - 1.0, 0.0)
    b = y0
    s1 = np.zeros(n + 1)
    s2 = np.zeros(n + 1)
    s1[0] = reps
    s2[0] = reps
    for _ in range(reps):
        d = y0 - W[0]
        w = 1.0
        for k in range(1, n + 1):
            var = xi2[k]
            sd = math.sqrt(var)
            drift = -(W[k] - W[k - 1])
            if (a - d - drift) / sd < 12.0:
                c = w * _killed_mass_nb(d, drift, var, a, b)
                s1[k] += c
                s2[k] += c * c
            d_new = d + drift + sd * rng.standard_normal()
            if d_new <= 0.0:
                break
            w *= -math.expm1(-2.0 * d * d_new / var)
            d = d_new
    return s1, s2


def estimate_p_all(table: CenteringTable, y0: int = 4, reps: int = 50000, seed: int = 0):
    """p_k estimates for every k = 0..n from one batch of paths.

    The barrier for horizon k is W on [0, k], so prefixes of the same paths serve
    every horizon; the last segment of each horizon is integrated in closed form.
    Returns ``(p_hat, se)`` arrays of length n + 1.
    """
    _check_y0(y0)
    if reps <= 1:
        raise ParameterError("reps must be at least 2")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA11]))
    s1, s2 = _p_all_kernel(np.ascontiguousarray(table.W), np.ascontiguousarray(table.xi2),
                           float(y0), int(reps), rng)
    mean = s1 / reps
    var = np.maximum(s2 / reps - mean**2, 0.0) * reps / (reps - 1)
    return mean, np.sqrt(var / reps)


def p_all_to_target(table: CenteringTable, y0: int = 4, rel_se: float = 0.05, seed: int = 0,
                    pilot: int = 20000, max_reps: int = 2_000_000, k: int | None = None):
    """:func:`estimate_p_all` with replicates sized so p_k meets ``rel_se`` (default k = n).

    Returns ``(p_hat, se, reps)``.
    """
    k = table.n if k is None else int(k)
    p, se = estimate_p_all(table, y0, pilot, seed)
    if p[k] > 0 and se[k] / p[k] <= rel_se:
        return p, se, pilot
    ratio = (se[k] / p[k]) if p[k] > 0 else 10.0
    reps = int(min(max_reps, math.ceil(pilot * (ratio / rel_se) ** 2 * 1.1)))
    p, se = estimate_p_all(table, y0, reps, seed)
    if p[k] <= 0 or se[k] / p[k] > rel_se:
        warnings.warn(f"p_{k} relative se {se[k] / max(p[k], 1e-300):.3f} above target {rel_se} "
                      f"with {reps} reps")
    return p, se, reps


# --- centering ---------------------------------------------------------------------


@dataclass(eq=False)
class Centering:
    """m_k for k = 0..n and the inverse lookup m~_t = max{k : m_k < t}."""

    m: np.ndarray
    K: np.ndarray
    W: np.ndarray
    p_hat: np.ndarray
    theta_star: float
    monotone: bool

    def __post_init__(self):
        # suffix minimum turns max{k : m_k < t} into a sorted search
        self._suffix_min = np.minimum.accumulate(self.m[::-1])[::-1]

    @property
    def n(self) -> int:
        return self.m.size - 1

    def m_tilde(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.m[-1]):
            raise ValueError(f"t beyond the last tabulated m_n = {self.m[-1]:.4g}; extend the table")
        k = np.searchsorted(self._suffix_min, t, side="left") - 1
        return np.maximum(k, 0)

    def rows(self):
        for k in range(self.n + 1):
            yield {"k": k, "K_k": self.K[k], "W_k": self.W[k], "p_hat_k": self.p_hat[k], "m_k": self.m[k]}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["k", "K_k", "W_k", "p_hat_k", "m_k"])
            w.writeheader()
            for r in self.rows():
                w.writerow({k: (repr(float(v)) if k != "k" else v) for k, v in r.items()})


def assemble_centering(table: CenteringTable, p_hat, theta_star: float) -> Centering:
    """m_k = (K_k - log p_k)/theta* for every tabulated k."""
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.size != table.n + 1:
        raise ParameterError(f"need p_hat for k = 0..{table.n}")
    if np.any(p_hat <= 0):
        bad = int(np.argmax(p_hat <= 0))
        raise ParameterError(f"p_hat[{bad}] = 0; more replicates are needed")
    m = (table.K - np.log(p_hat)) / theta_star
    monotone = bool(np.all(np.diff(m) > 0))
    if not monotone:
        k = int(np.argmax(np.diff(m) <= 0))
        warnings.warn(f"m_k not increasing at k={k} (likely Monte Carlo noise in p_hat; add reps)")
    return Centering(m, table.K.copy(), table.W.copy(), p_hat, theta_star, monotone)


# --- fine-grid oracle ----------------------------------------------------------------


@numba.njit(cache=True)
def _grid_kernel(b, xi2, start, a, bJ, substeps, shift, reps, rng):
    n = b.size - 1
    hits = 0
    for _ in range(reps):
        d = start - b[0]
        if d < 0.0:
            continue
        alive = True
        for k in range(1, n + 1):
            step_drift = -(b[k] - b[k - 1]) / substeps
            step_sd = math.sqrt(xi2[k] / substeps)
            floor = shift * step_sd
            for _s in range(substeps):
                d += step_drift + step_sd * rng.standard_normal()
                if d < floor:
                    alive = False
                    break
            if not alive:
                break
        if alive and a <= d <= bJ:
            hits += 1
    return hits


# -zeta(1/2) / sqrt(2 pi)
MONITORING_SHIFT = 0.5825971579390107


def estimate_barrier_prob_grid(law: GaussLaw, event: BarrierEvent, reps: int, seed: int,
                               substeps: int = 128, shift: bool = True) -> ProbEstimate:
    """Plain Monte Carlo on a time grid of mesh ``1/substeps`` with the barrier checked at
    grid points only.  A reference for the weighted estimators.

    Discrete monitoring misses crossings between grid points and is biased upwards
    by O(substeps^-1/2).  With ``shift`` the barrier is raised by
    ``MONITORING_SHIFT`` step standard deviations, which cancels the leading term
    and leaves an O(1/substeps) error.
    """
    if reps <= 1 or substeps < 1:
        raise ParameterError("need reps >= 2 and substeps >= 1")
    if event.profile.n != law.n:
        raise ParameterError(f"profile has {event.profile.n} segments, law has {law.n}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6D1]))
    hits = _grid_kernel(np.ascontiguousarray(event.profile.values), np.ascontiguousarray(law.xi2),
                        float(event.start_y), float(event.J[0]), float(event.J[1]), int(substeps),
                        MONITORING_SHIFT if shift else 0.0, int(reps), rng)
    p = hits / reps
    return ProbEstimate(float(p), math.sqrt(p * (1 - p) / (reps - 1)), int(reps), int(seed))
