"""Tilted hitting-time quantities of the single walk.

For a potential ``V(x) = zeta(x) + eta <= 0`` let

    phi_k = E_{k-1}[exp(int_0^{H_k} V(X_s) ds)],   L_k(eta) = log(phi_k).

Decomposing over the first step from ``k - 1`` gives

    phi_k = 1/2 / (1 - V(k-1) - phi_{k-1}/2),

a continued fraction running in from the far left.  It is truncated at site
``-M`` and run from two seeds: 0 (lower bracket) and the fixed point for the
constant worst-case potential ``V = eta`` (upper bracket).  First and second
eta-derivatives are carried forward through the same recursion.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy.optimize import brentq

from .env import EnvDistribution, Environment, ParameterError

log = logging.getLogger(__name__)


class TruncationError(RuntimeError):
    """Left truncation too shallow for the requested bracket tolerance."""


class TiltRangeError(ValueError):
    """eta outside the range where the recursion stays positive."""


class TiltSolveError(RuntimeError):
    """Root bracketing or Monte Carlo precision failure in :func:`solve_tilt`."""


def homogeneous_phi(eta):
    """Fixed point ``a - sqrt(a^2 - 1)``, ``a = 1 - eta``, for constant potential eta."""
    a = 1.0 - np.asarray(eta, dtype=float)
    return a - np.sqrt(a * a - 1.0)


def _homogeneous_seed(eta: float) -> tuple[float, float, float]:
    a = 1.0 - eta
    s = math.sqrt(a * a - 1.0)
    phi = a - s
    if s == 0.0:
        return phi, math.inf, math.inf
    d1 = phi / s
    d2 = phi * (1.0 + a / s) / (s * s)
    return phi, d1, d2


@numba.njit(cache=True)
def _sweep(V, phi0, d10, d20):
    """Run the recursion along the last axis of V (batch, sites).

    Column j of the outputs is phi at site (first site of V) + j + 1.  Returns
    negative phi where a denominator is nonpositive.
    """
    b, m = V.shape
    phi = np.empty((b, m))
    d1 = np.empty((b, m))
    d2 = np.empty((b, m))
    for i in range(b):
        p, q, r = phi0[i], d10[i], d20[i]
        for j in range(m):
            den = 1.0 - V[i, j] - 0.5 * p
            if den <= 0.0:
                phi[i, j:] = -1.0
                d1[i, j:] = np.nan
                d2[i, j:] = np.nan
                break
            g = 1.0 + 0.5 * q
            r = 0.25 * r / (den * den) + g * g / (den * den * den)
            q = g / (2.0 * den * den)
            p = 0.5 / den
            phi[i, j] = p
            d1[i, j] = q
            d2[i, j] = r
    return phi, d1, d2


def _run_brackets(V: np.ndarray, eta: float, derivatives: bool):
    """Both bracket sweeps for a (batch, sites) potential."""
    b = V.shape[0]
    zero = np.zeros(b)
    lo = _sweep(V, zero, zero, zero)
    p, d1, d2 = _homogeneous_seed(eta)
    if not derivatives:
        d1 = d2 = 0.0
    hi = _sweep(V, np.full(b, p), np.full(b, d1), np.full(b, d2))
    if np.any(lo[0] < 0) or np.any(hi[0] < 0):
        raise TiltRangeError(f"eta={eta} makes the recursion denominator nonpositive")
    return lo, hi


@dataclass(eq=False)
class PhiProfile:
    """Bracketed phi values for sites ``first..n``.

    ``phi`` is the upper-seeded sequence; it satisfies the recursion exactly, which
    keeps the h-transform rates consistent.  ``dL``/``d2L`` are the eta-derivatives
    of ``log phi`` (NaN if derivatives were not requested).
    """

    eta: float
    n: int
    M: int
    first: int
    phi_lo: np.ndarray
    phi_hi: np.ndarray
    dL: np.ndarray
    d2L: np.ndarray
    V: np.ndarray  # potential at sites first-1 .. n-1
    bracket_width: float
    dL_width: float = math.nan

    @property
    def phi(self) -> np.ndarray:
        return self.phi_hi

    def _idx(self, k):
        k = np.asarray(k)
        if np.any(k < self.first) or np.any(k > self.n):
            raise IndexError(f"phi is available for sites {self.first}..{self.n}")
        return k - self.first

    def at(self, k):
        return self.phi_hi[self._idx(k)]

    def potential(self, x):
        """V(x) for x in first-1 .. n-1."""
        x = np.asarray(x)
        return self.V[x - self.first + 1]

    @property
    def L(self) -> np.ndarray:
        """L_k for k = 1..n."""
        return np.log(self.phi_hi[1 - self.first :])

    @property
    def mean_tau(self) -> np.ndarray:
        return self.dL[1 - self.first :]

    @property
    def var_tau(self) -> np.ndarray:
        return self.d2L[1 - self.first :]


def _profile_once(env: Environment, eta: float, n: int, M: int, derivatives: bool) -> PhiProfile:
    env.require(-M, n - 1, f"phi recursion (M={M}, n={n})")
    V = (env.zeta_on(-M, n - 1) + eta)[None, :]
    lo, hi = _run_brackets(V, eta, derivatives)
    plo, phi_ = lo[0][0], hi[0][0]
    width = float(np.max(phi_[M:] - plo[M:]))
    if derivatives:
        dL_lo = lo[1][0] / plo
        dL = hi[1][0] / phi_
        d2L = hi[2][0] / phi_ - dL**2
        # the zero seed has no meaningful derivative at the first few sites
        tail = slice(M, None)
        dL_width = float(np.max(np.abs(dL[tail] - dL_lo[tail]) / np.abs(dL[tail])))
    else:
        dL = d2L = np.full_like(phi_, np.nan)
        dL_width = math.nan
    return PhiProfile(eta, n, M, -M + 1, plo, phi_, dL, d2L, V[0], width, dL_width)


def _checked_profile(env, eta, n, M, tol, derivatives):
    if eta > 0:
        raise ParameterError(f"eta must be <= 0, got {eta}")
    if n < 1:
        raise ParameterError("n must be >= 1")
    if M is not None:
        prof = _profile_once(env, eta, n, M, derivatives)
        if prof.bracket_width > tol or (derivatives and prof.dL_width > math.sqrt(tol)):
            raise TruncationError(
                f"bracket width {prof.bracket_width:.3g} (derivative gap {prof.dL_width:.3g}) "
                f"exceeds tol={tol:g} at M={M}; use a larger M"
            )
        return prof
    M = 32
    while True:
        if not env.covers(-M, n - 1):
            raise TruncationError(
                f"bracket tolerance {tol:g} not reached before M={M} leaves the environment window "
                f"[{env.x_min}, {env.x_max}]; extend the window to the left"
            )
        prof = _profile_once(env, eta, n, M, derivatives)
        if prof.bracket_width <= tol and (not derivatives or prof.dL_width <= math.sqrt(tol)):
            return prof
        M *= 2


def phi_profile(env: Environment, eta: float, n: int, M: int | None = None, tol: float = 1e-10) -> PhiProfile:
    """Bracketed phi_k for the sites left of and up to ``n``.

    With ``M=None`` the truncation depth doubles from 32 until the bracket is
    below ``tol``.
    """
    return _checked_profile(env, eta, n, M, tol, derivatives=False)


def phi_derivatives(env: Environment, eta: float, n: int, M: int | None = None, tol: float = 1e-10):
    """Arrays ``(L_k', L_k'')`` for k = 1..n, the mean and variance of tau_k under the tilt.

    eta = 0 is rejected: without killing the walk is recurrent and the mean hitting
    time is infinite.
    """
    if eta == 0.0:
        raise ParameterError("derivatives of L_k diverge at eta = 0 (recurrent walk); use eta < 0")
    prof = _checked_profile(env, eta, n, M, tol, derivatives=True)
    return prof.mean_tau.copy(), prof.var_tau.copy()


def tilted_profile(env: Environment, eta: float, n: int, M: int | None = None, tol: float = 1e-10) -> PhiProfile:
    """:func:`phi_profile` with derivatives filled in."""
    if eta == 0.0:
        raise ParameterError("derivatives of L_k diverge at eta = 0 (recurrent walk); use eta < 0")
    return _checked_profile(env, eta, n, M, tol, derivatives=True)


def h_transform_rates(phi: PhiProfile, x):
    """Jump rates (right, left) at site x of the walk tilted towards the next level.

    Valid for ``phi.first <= x < phi.n``.  Their sum is ``1 - V(x)``.
    """
    right = 0.5 / phi.at(np.asarray(x) + 1)
    left = 0.5 * phi.at(x)
    if np.any(phi.at(x) <= 0) or np.any(phi.at(x) > 1):
        raise RuntimeError("phi outside (0, 1]")
    return right, left


# --- annealed log-MGF ----------------------------------------------------------------


def _left_env_stats(dist: EnvDistribution, etas, M: int, env_samples: int, seed: int, tol: float):
    """Per-sample E[L_1 | sites < 0] and its eta-derivatives, for each eta.

    Site 0 is integrated out against the atoms of the distribution (Gauss-Legendre
    nodes for uniform), so only the left environment is sampled.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7117]))
    es = dist.support_bounds()[1]
    zeta = dist.sample(rng, (env_samples, M)) - es
    vals, wts = dist.atoms()
    out = []
    for eta in np.atleast_1d(etas):
        eta = float(eta)
        if eta >= 0:
            raise ParameterError(f"mean_log_mgf needs eta < 0, got {eta}")
        lo, hi = _run_brackets(zeta + eta, eta, derivatives=True)
        phi0, d10, d20 = hi[0][:, -1], hi[1][:, -1], hi[2][:, -1]
        width = float(np.max(hi[0][:, -1] - lo[0][:, -1]))
        if width > tol:
            raise TruncationError(f"left truncation M={M} leaves bracket {width:.3g} > {tol:g} at eta={eta}")
        L = np.zeros(env_samples)
        dL = np.zeros(env_samples)
        d2L = np.zeros(env_samples)
        for v, w in zip(vals, wts):
            den = 1.0 - (v - es) - eta - 0.5 * phi0
            g = 1.0 + 0.5 * d10
            p = 0.5 / den
            q = g / (2.0 * den * den)
            r = 0.25 * d20 / (den * den) + g * g / den**3
            L += w * np.log(p)
            dL += w * q / p
            d2L += w * (r / p - (q / p) ** 2)
        out.append((L, dL, d2L))
    return out


def mean_log_mgf(dist: EnvDistribution, eta: float, M: int = 256, env_samples: int = 20000,
                 seed: int = 0, tol: float = 1e-10) -> tuple[float, float]:
    """Monte Carlo estimate of L(eta) = E[L_1(eta)] and its standard error."""
    (L, _, _), = _left_env_stats(dist, [eta], M, env_samples, seed, tol)
    se = float(L.std(ddof=1) / math.sqrt(env_samples)) if env_samples > 1 else 0.0
    return float(L.mean()), se


def mean_log_mgf_derivs(dist, eta, M=256, env_samples=20000, seed=0, tol=1e-10):
    """(L, L', L'') at eta with common random numbers."""
    (L, dL, d2L), = _left_env_stats(dist, [eta], M, env_samples, seed, tol)
    return float(L.mean()), float(dL.mean()), float(d2L.mean())


@dataclass
class TiltSolution:
    eta_bar: float
    v0: float
    theta_star: float
    es: float
    L_curve: dict = field(default_factory=dict)
    env_samples: int = 0
    M: int = 0
    seed: int = 0
    residual: float = math.nan
    eta_se: float = 0.0
    argmax_ok: bool = False
    tol: float = 1e-10
    dist: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TiltSolution":
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "TiltSolution":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _closure(L, dL, es, eta):
    return -L - (es - eta) * dL


def solve_tilt(dist: EnvDistribution, M: int = 256, env_samples: int = 20000, tol: float = 1e-12,
               seed: int = 0, eta_lo: float = -5.0, eta_hi: float = -1e-3,
               noise_tol: float = 1e-4, phi_tol: float = 1e-10, grid_points: int = 41) -> TiltSolution:
    """Tilt parameter, speed and theta* for an environment law.

    Solves ``-L(eta) = (es - eta) L'(eta)`` on ``[eta_lo, eta_hi]`` with common random
    numbers across eta, then sets ``v0 = 1/L'(eta_bar)`` and ``theta* = es - eta_bar``.
    The root is cross-checked as the maximiser of ``eta/v0 - L(eta)`` on a grid.
    """
    es = dist.support_bounds()[1]

    def F(eta):
        (L, dL, _), = _left_env_stats(dist, [eta], M, env_samples, seed, phi_tol)
        return _closure(L.mean(), dL.mean(), es, eta)

    f_lo, f_hi = F(eta_lo), F(eta_hi)
    if not (f_lo > 0 > f_hi):
        raise TiltSolveError(
            f"no sign change of the closure on [{eta_lo}, {eta_hi}] (values {f_lo:.3g}, {f_hi:.3g}); "
            "widen the bracket"
        )
    eta_bar = brentq(F, eta_lo, eta_hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    (L, dL, d2L), = _left_env_stats(dist, [eta_bar], M, env_samples, seed, phi_tol)
    Lm, dLm, d2Lm = L.mean(), dL.mean(), d2L.mean()
    residual = _closure(Lm, dLm, es, eta_bar)
    v0 = 1.0 / dLm
    # sensitivity of the root to the environment sample
    Fi = _closure(L, dL, es, eta_bar)
    slope = -(es - eta_bar) * d2Lm  # dF/deta = -L' + L' - (es - eta) L''
    eta_se = float(Fi.std(ddof=1) / math.sqrt(env_samples) / abs(slope)) if env_samples > 1 else 0.0
    if eta_se > noise_tol:
        raise TiltSolveError(f"Monte Carlo error on eta_bar is {eta_se:.2g} > {noise_tol:g}; "
                             f"increase env_samples (now {env_samples})")

    half = min(0.5 * abs(eta_bar), 0.25)
    grid = eta_bar + np.linspace(-half, half, grid_points)
    grid = grid[grid < 0]
    stats = _left_env_stats(dist, grid, M, env_samples, seed, phi_tol)
    Lg = np.array([s[0].mean() for s in stats])
    dLg = np.array([s[1].mean() for s in stats])
    objective = grid / v0 - Lg
    step = grid[1] - grid[0]
    argmax_ok = bool(abs(grid[np.argmax(objective)] - eta_bar) <= step)
    if not argmax_ok:
        log.warning("grid maximiser of eta/v0 - L(eta) is %.4g, root is %.4g",
                    grid[np.argmax(objective)], eta_bar)
    return TiltSolution(
        eta_bar=float(eta_bar), v0=float(v0), theta_star=float(es - eta_bar), es=float(es),
        L_curve={"eta": grid.tolist(), "L": Lg.tolist(), "dL": dLg.tolist()},
        env_samples=env_samples, M=M, seed=seed, residual=float(residual), eta_se=eta_se,
        argmax_ok=argmax_ok, tol=tol, dist=dist.to_dict(),
    )


# --- centering arrays --------------------------------------------------------------


@dataclass(eq=False)
class CenteringTable:
    """Per-level arrays indexed by level k = 0..n.

    Increment quantities (``xi2``, ``mean_tau``) have a placeholder 0 at k = 0.
    """

    n: int
    K: np.ndarray
    W: np.ndarray
    xi2: np.ndarray
    sigma2: np.ndarray
    mean_tau: np.ndarray
    theta_star: float
    eta_bar: float

    def to_dict(self) -> dict:
        return {
            "n": self.n, "theta_star": self.theta_star, "eta_bar": self.eta_bar,
            "K": self.K.tolist(), "W": self.W.tolist(), "xi2": self.xi2.tolist(),
            "sigma2": self.sigma2.tolist(), "mean_tau": self.mean_tau.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CenteringTable":
        arr = {k: np.asarray(d[k], dtype=float) for k in ("K", "W", "xi2", "sigma2", "mean_tau")}
        return cls(n=int(d["n"]), theta_star=float(d["theta_star"]), eta_bar=float(d["eta_bar"]), **arr)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "CenteringTable":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def truncated(self, n: int) -> "CenteringTable":
        s = slice(0, n + 1)
        return CenteringTable(n, self.K[s], self.W[s], self.xi2[s], self.sigma2[s], self.mean_tau[s],
                              self.theta_star, self.eta_bar)


def centering_table(env: Environment, tilt: TiltSolution, n: int, M: int | None = None,
                    tol: float = 1e-10, profile: PhiProfile | None = None) -> CenteringTable:
    """K_k, W_k, xi_k^2, sigma_k^2 and E[tau_k] for levels up to n in a fixed environment."""
    prof = profile if profile is not None else tilted_profile(env, tilt.eta_bar, n, M, tol)
    L = prof.L[:n]
    mean_tau = prof.mean_tau[:n]
    xi2 = prof.var_tau[:n]
    inc = -L
    if np.any(inc <= 0) or not np.all(np.isfinite(inc)):
        raise RuntimeError("K increments must be positive and finite")
    if np.any(xi2 <= 0):
        raise RuntimeError("tau variances must be positive")
    K = np.concatenate([[0.0], np.cumsum(inc)])
    cum_mean = np.concatenate([[0.0], np.cumsum(mean_tau)])
    W = K / tilt.theta_star - cum_mean
    return CenteringTable(
        n=n, K=K, W=W,
        xi2=np.concatenate([[0.0], xi2]),
        sigma2=np.concatenate([[0.0], np.cumsum(xi2)]),
        mean_tau=np.concatenate([[0.0], mean_tau]),
        theta_star=tilt.theta_star, eta_bar=tilt.eta_bar,
    )
