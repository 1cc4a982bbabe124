"""I.i.d. random environments of branching rates on a finite window of Z.

Rates are drawn from a counter-based generator (Philox) whose counter is the
site index, so the value at a site depends only on ``(seed, site)``.  Growing
or shifting the window never reshuffles sites that were already drawn.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

# Philox block index of site x is x + _SITE_ORIGIN; keeps counters nonnegative.
_SITE_ORIGIN = 1 << 62
_ENV_STREAM = 0xE1


class ParameterError(ValueError):
    """Invalid model or algorithm parameters."""


class EnvFormatError(ValueError):
    """Malformed environment file."""


class WindowError(ValueError):
    """A computation needs sites outside the stored environment window."""


@dataclass(frozen=True)
class EnvDistribution:
    """Law of a single branching rate xi(0).

    ``two_point(p, lo, hi)`` puts mass ``p`` on ``hi`` and ``1 - p`` on ``lo``.
    """

    kind: str
    values: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    lo: float = 0.0
    hi: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind == "two_point":
            if not (0.0 < self.lo < self.hi < np.inf):
                raise ParameterError(f"two_point needs 0 < lo < hi < inf, got lo={self.lo}, hi={self.hi}")
            if not (0.0 <= self.p <= 1.0):
                raise ParameterError(f"two_point weight p={self.p} not in [0, 1]")
        elif self.kind == "uniform":
            if not (0.0 < self.lo < self.hi < np.inf):
                raise ParameterError(f"uniform needs 0 < lo < hi < inf, got lo={self.lo}, hi={self.hi}")
        elif self.kind == "discrete":
            v = np.asarray(self.values, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if v.size == 0 or v.shape != w.shape:
                raise ParameterError("discrete needs equally many values and weights")
            if np.any(v <= 0) or not np.all(np.isfinite(v)):
                raise ParameterError("discrete rates must be positive and finite")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ParameterError("discrete weights must be nonnegative and sum to 1")
        else:
            raise ParameterError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def two_point(cls, p: float, lo: float, hi: float) -> "EnvDistribution":
        return cls("two_point", lo=float(lo), hi=float(hi), p=float(p))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "EnvDistribution":
        return cls("uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def discrete(cls, values, weights) -> "EnvDistribution":
        return cls("discrete", values=tuple(float(v) for v in values),
                   weights=tuple(float(w) for w in weights))

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Support points and weights; uniform is discretised by Gauss-Legendre nodes."""
        if self.kind == "two_point":
            v, w = np.array([self.lo, self.hi]), np.array([1.0 - self.p, self.p])
        elif self.kind == "discrete":
            v, w = np.array(self.values), np.array(self.weights)
        else:
            x, gw = np.polynomial.legendre.leggauss(24)
            v = self.lo + (self.hi - self.lo) * (x + 1.0) / 2.0
            w = gw / 2.0
        keep = w > 0
        return v[keep], w[keep]

    def support_bounds(self) -> tuple[float, float]:
        """(ess inf, ess sup) of xi(0)."""
        if self.kind == "uniform":
            return self.lo, self.hi
        v, _ = self.atoms()
        return float(v.min()), float(v.max())

    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        v, w = self.atoms()
        return float(np.dot(v, w))

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to rates by inverse CDF."""
        u = np.asarray(u, dtype=float)
        if self.kind == "two_point":
            return np.where(u < self.p, self.hi, self.lo)
        if self.kind == "uniform":
            return self.lo + (self.hi - self.lo) * u
        v, w = np.array(self.values), np.array(self.weights)
        idx = np.searchsorted(np.cumsum(w), u, side="right")
        return v[np.minimum(idx, v.size - 1)]

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.from_uniforms(rng.random(size))

    def to_dict(self) -> dict:
        if self.kind == "two_point":
            return {"kind": "two_point", "p": self.p, "lo": self.lo, "hi": self.hi}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        return {"kind": "discrete", "values": list(self.values), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "EnvDistribution":
        kind = d.get("kind")
        try:
            if kind == "two_point":
                return cls.two_point(d["p"], d["lo"], d["hi"])
            if kind == "uniform":
                return cls.uniform(d["lo"], d["hi"])
            if kind == "discrete":
                return cls.discrete(d["values"], d["weights"])
        except KeyError as e:
            raise ParameterError(f"distribution {kind!r} is missing field {e.args[0]!r}") from None
        raise ParameterError(f"unknown distribution kind {kind!r}")

    @classmethod
    def parse(cls, text: str) -> "EnvDistribution":
        """Parse ``two_point:0.5,0.1,0.2``, ``uniform:0.1,0.3`` or ``discrete:v1/w1,v2/w2``."""
        kind, _, args = text.partition(":")
        if kind == "discrete":
            pairs = [a.split("/") for a in args.split(",")]
            return cls.discrete([float(v) for v, _ in pairs], [float(w) for _, w in pairs])
        nums = [float(a) for a in args.split(",")] if args else []
        if kind == "two_point" and len(nums) == 3:
            return cls.two_point(*nums)
        if kind == "uniform" and len(nums) == 2:
            return cls.uniform(*nums)
        raise ParameterError(f"cannot parse distribution {text!r}")


DEFAULT_DIST = EnvDistribution.two_point(0.5, 0.1, 0.2)


def site_uniforms(seed: int, x_min: int, x_max: int) -> np.ndarray:
    """One uniform per site in ``[x_min, x_max]``, keyed by ``(seed, site)``."""
    count = x_max - x_min + 1
    bg = np.random.Philox(key=(int(seed) & 0xFFFFFFFFFFFFFFFF) | (_ENV_STREAM << 64))
    bg.advance(x_min + _SITE_ORIGIN)
    raw = bg.random_raw(4 * count)[::4]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True, eq=False)
class Environment:
    """Branching rates ``rates[x - x_min]`` for sites ``x_min..x_max``.

    ``ei``/``es`` are the bounds of the distribution, not of the sample.
    ``shift`` records how far the window was relabelled by :func:`shift_environment`.
    """

    x_min: int
    x_max: int
    rates: np.ndarray
    ei: float
    es: float
    seed: int
    dist: EnvDistribution | None = None
    shift: int = 0
    _zeta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rates = np.array(self.rates, dtype=np.float64)
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        if rates.shape != (self.x_max - self.x_min + 1,):
            raise ParameterError(f"expected {self.x_max - self.x_min + 1} rates, got {rates.shape}")
        if not (0.0 < self.ei <= self.es < np.inf):
            raise ParameterError(f"need 0 < ei <= es < inf, got ei={self.ei}, es={self.es}")
        if np.any(rates < self.ei) or np.any(rates > self.es):
            raise ParameterError("rates outside [ei, es]")
        zeta = rates - self.es
        zeta.setflags(write=False)
        object.__setattr__(self, "_zeta", zeta)

    @property
    def zeta(self) -> np.ndarray:
        """xi(x) - es over the window; always <= 0."""
        return self._zeta

    def __len__(self):
        return self.rates.size

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return (self.x_min, self.x_max, self.ei, self.es, self.seed, self.dist, self.shift) == (
            other.x_min, other.x_max, other.ei, other.es, other.seed, other.dist, other.shift
        ) and np.array_equal(self.rates, other.rates)

    def covers(self, a: int, b: int) -> bool:
        return self.x_min <= a and b <= self.x_max

    def require(self, a: int, b: int, what: str = "computation") -> None:
        if not self.covers(a, b):
            raise WindowError(
                f"{what} needs sites [{a}, {b}] but the environment covers [{self.x_min}, {self.x_max}]"
            )

    def rates_on(self, a: int, b: int) -> np.ndarray:
        """Rates at sites ``a..b`` inclusive."""
        self.require(a, b)
        return self.rates[a - self.x_min : b - self.x_min + 1]

    def zeta_on(self, a: int, b: int) -> np.ndarray:
        self.require(a, b)
        return self._zeta[a - self.x_min : b - self.x_min + 1]


def sample_environment(dist: EnvDistribution, x_min: int, x_max: int, seed: int) -> Environment:
    """Draw an i.i.d. environment on ``[x_min, x_max]``."""
    if not (x_min <= 0 <= x_max):
        raise ParameterError(f"window [{x_min}, {x_max}] must contain the origin")
    rates = dist.from_uniforms(site_uniforms(seed, x_min, x_max))
    ei, es = dist.support_bounds()
    return Environment(x_min, x_max, rates, ei, es, int(seed), dist)


def constant_environment(rate: float, x_min: int, x_max: int) -> Environment:
    """Homogeneous environment; zeta is identically zero."""
    return Environment(x_min, x_max, np.full(x_max - x_min + 1, float(rate)), rate, rate, 0,
                       EnvDistribution.two_point(1.0, rate / 2, rate))


def shift_environment(env: Environment, k: int, window: tuple[int, int] | None = None) -> Environment:
    """Relabel sites so that ``new.rates[x] == env.rates[x + k]``.

    ``window`` restricts the result to new-coordinate sites ``[a, b]``; it must lie
    inside the shifted stored range.
    """
    a, b = (env.x_min - k, env.x_max - k) if window is None else window
    if not (env.x_min <= a + k and b + k <= env.x_max) or a > b:
        raise WindowError(
            f"shifted window [{a}, {b}] by {k} needs sites [{a + k}, {b + k}], "
            f"stored range is [{env.x_min}, {env.x_max}]"
        )
    rates = env.rates[a + k - env.x_min : b + k - env.x_min + 1]
    return Environment(a, b, rates, env.ei, env.es, env.seed, env.dist, env.shift + k)


def save_environment(env: Environment, path) -> None:
    head = {
        "version": FORMAT_VERSION,
        "dist": env.dist.to_dict() if env.dist is not None else None,
        "x_min": env.x_min,
        "x_max": env.x_max,
        "seed": env.seed,
        "shift": env.shift,
        "ei": env.ei,
        "es": env.es,
    }
    body = json.dumps(head, indent=1)[:-2]
    rates = ",\n  ".join(f"{r:.17g}" for r in env.rates)
    Path(path).write_text(f'{body},\n "rates": [\n  {rates}\n ]\n}}\n')


def load_environment(path) -> Environment:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise EnvFormatError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(d, dict):
        raise EnvFormatError(f"{path}: top level must be an object")
    for key in ("version", "x_min", "x_max", "seed", "ei", "es", "rates"):
        if key not in d:
            raise EnvFormatError(f"{path}: missing field {key!r}")
    if d["version"] != FORMAT_VERSION:
        raise EnvFormatError(f"{path}: unsupported version {d['version']!r}")
    rates = d["rates"]
    if not isinstance(rates, list) or len(rates) != d["x_max"] - d["x_min"] + 1:
        raise EnvFormatError(f"{path}: field 'rates' must list one rate per site in [x_min, x_max]")
    ei, es = float(d["ei"]), float(d["es"])
    for i, r in enumerate(rates):
        if not isinstance(r, (int, float)) or not (r > 0) or not (ei <= r <= es):
            raise EnvFormatError(
                f"{path}: rates[{i}] (site {d['x_min'] + i}) = {r!r} must be positive and in [ei, es]"
            )
    dist = None
    if d.get("dist") is not None:
        try:
            dist = EnvDistribution.from_dict(d["dist"])
        except ParameterError as e:
            raise EnvFormatError(f"{path}: field 'dist': {e}") from None
    try:
        return Environment(int(d["x_min"]), int(d["x_max"]), np.array(rates, dtype=float), ei, es,
                           int(d["seed"]), dist, int(d.get("shift", 0)))
    except ParameterError as e:
        raise EnvFormatError(f"{path}: {e}") from None
