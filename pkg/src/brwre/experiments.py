"""Annealed experiments: tightness of the centred hitting times and maxima, the
many-to-one check, decay of p_n and the barrier-ratio study.

Every replicate is a pure function of the config and its index.  Replicates may
run in worker processes, but results are folded in index order, so outputs do
not depend on the worker count.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import multiprocessing
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .barrier import (assemble_centering, banana_down, banana_up, choose_delta, estimate_p_all,
                      m_profile, p_all_to_target)
from .brw import (SimConfig, SimulationAborted, catch_up_bound, catch_up_table, constrained_particle_counts,
                  quantile_shift_bound, simulate_hitting, simulate_until)
from .env import EnvDistribution, Environment, ParameterError, sample_environment
from .tilt import TiltSolution, centering_table, solve_tilt, tilted_profile
from .walker import barrier_indicator, clearance_samples

log = logging.getLogger(__name__)

KINDS = ("tightness-h", "tightness-m", "tightness", "mt1", "pn-decay", "barrier-ratio", "prune-check")
ENV_LEFT = -512
PRUNE_BOUND_SPAN = 40.0


class ExperimentAborted(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "tightness"
    dist: str = "two_point:0.5,0.1,0.2"
    n_list: list = field(default_factory=lambda: [32, 64, 128, 256])
    t_list: list | None = None  # default: n / v0 for n in n_list
    replicates: int = 200
    master_seed: int = 20240611
    y0: int = 4
    pn_rel_se: float = 0.05
    pn_pilot: int = 20000
    pn_max_reps: int = 3_000_000
    jensen_correction: bool = False
    prune_window: int = 24
    prune_bound: bool = True
    pop_cap: int = 5_000_000
    tilt_env_samples: int = 100_000
    tilt_M: int = 128
    tilt_seed: int = 0
    tilt_path: str | None = None
    check_pair: list = field(default_factory=lambda: [64, 256])
    iqr_band: list = field(default_factory=lambda: [0.6, 1.67])
    drift_k: float = 3.0
    bootstrap: int = 2000
    left_tail_C: float | None = None
    max_failure_frac: float = 0.1
    workers: int = 1
    output: str | None = None
    format: str = "csv"
    # barrier-ratio and many-to-one
    y_list: list = field(default_factory=lambda: list(range(4, 17)))
    rw_reps: int = 1_000_000
    slope_k: float = 3.0
    mt1_cases: int = 5
    mt1_reps_brw: int = 100_000
    mt1_reps_rw: int = 400_000
    # p_n decay
    decay_ratio_max: float = 2.0
    # pruning soundness
    prune_n: int = 64
    prune_tol: float = 0.1
    prune_validate_window: int = 12
    prune_validate_reps: int = 20

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}")
        if self.replicates < 2:
            raise ParameterError("replicates must be >= 2")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ParameterError("n_list must be strictly increasing")
        if self.format not in ("csv", "jsonl"):
            raise ParameterError("format must be csv or jsonl")
        EnvDistribution.parse(self.dist)

    @property
    def distribution(self) -> EnvDistribution:
        return EnvDistribution.parse(self.dist)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# --- statistics ----------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalDistribution:
    samples: np.ndarray

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float))
        if s.size == 0:
            raise ParameterError("empty sample")
        object.__setattr__(self, "samples", s)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    def quantile(self, q):
        return quantile(self, q)


def quantile(dist: EmpiricalDistribution | np.ndarray, q):
    """Linear interpolation between order statistics at position ``q (n - 1)``."""
    s = dist.samples if isinstance(dist, EmpiricalDistribution) else np.sort(np.asarray(dist, float))
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ParameterError("q must lie in [0, 1]")
    out = np.quantile(s, q, method="linear")
    return float(out) if out.ndim == 0 else out


def _summary(values: np.ndarray) -> dict:
    v = values[np.isfinite(values)]
    q01, q10, q25, q50, q75, q90 = np.quantile(v, [0.01, 0.1, 0.25, 0.5, 0.75, 0.9])
    return {"count": int(v.size), "q01": q01, "q10": q10, "q25": q25, "q50": q50, "q75": q75, "q90": q90,
            "iqr": q75 - q25, "mean": float(v.mean())}


def _paired_median_drift(a: np.ndarray, b: np.ndarray, reps: int, rng) -> tuple[float, float]:
    """Median difference and its bootstrap se, resampling replicates jointly."""
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    idx = rng.integers(0, a.size, size=(reps, a.size))
    d = np.median(b[idx], axis=1) - np.median(a[idx], axis=1)
    return float(np.median(b) - np.median(a)), float(d.std(ddof=1))


def _iqr_ratio_se(a, b, reps, rng):
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    idx = rng.integers(0, a.size, size=(reps, a.size))
    qa = np.quantile(a[idx], [0.25, 0.75], axis=1)
    qb = np.quantile(b[idx], [0.25, 0.75], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (qb[1] - qb[0]) / (qa[1] - qa[0])
    # resamples with a zero IQR carry no information about the ratio
    return float(np.std(r[np.isfinite(r)], ddof=1))


# --- results -------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    summary: dict
    checks: dict  # name -> {"pass": bool, ...}

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def write(self, path, fmt: str = "csv") -> None:
        emit_results(self.rows, fmt, path)
        Path(str(path) + ".summary.json").write_text(
            json.dumps({"kind": self.kind, "summary": self.summary, "checks": self.checks},
                       indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def emit_results(table: list, fmt: str, path) -> None:
    """Write rows (dicts sharing one key order) as CSV or JSON lines."""
    if fmt not in ("csv", "jsonl"):
        raise ParameterError("format must be csv or jsonl")
    cols = list(table[0].keys()) if table else []
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.DictWriter(fh, cols, lineterminator="\n")
            w.writeheader()
            for r in table:
                w.writerow({k: _fmt(r.get(k)) for k in cols})
        else:
            for r in table:
                fh.write(json.dumps({k: r.get(k) for k in cols}, default=_json_default) + "\n")


def _parse_cell(s: str):
    if s == "":
        return None
    if s in ("True", "False"):
        return s == "True"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def load_results(path, fmt: str | None = None) -> list:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    with open(path, newline="") as fh:
        if fmt == "jsonl":
            return [json.loads(line) for line in fh if line.strip()]
        return [{k: _parse_cell(v) for k, v in r.items()} for r in csv.DictReader(fh)]


# --- shared setup ----------------------------------------------------------------------

_TILT_CACHE: dict = {}


def get_tilt(cfg: ExperimentConfig) -> TiltSolution:
    """Solve (or load) the tilt for the config's distribution; solved once per process."""
    key = (cfg.dist, cfg.tilt_M, cfg.tilt_env_samples, cfg.tilt_seed)
    if key in _TILT_CACHE:
        return _TILT_CACHE[key]
    dist = cfg.distribution
    if cfg.tilt_path and Path(cfg.tilt_path).exists():
        tilt = TiltSolution.load(cfg.tilt_path)
        if tilt.dist is not None and EnvDistribution.from_dict(tilt.dist) != dist:
            raise ParameterError(f"tilt file {cfg.tilt_path} was solved for a different distribution")
    else:
        tilt = solve_tilt(dist, M=cfg.tilt_M, env_samples=cfg.tilt_env_samples, seed=cfg.tilt_seed)
        if cfg.tilt_path:
            tilt.save(cfg.tilt_path)
    _TILT_CACHE[key] = tilt
    return tilt


def replicate_seeds(master_seed: int, index: int) -> tuple[int, int, int]:
    """(env_seed, sim_seed, pn_seed) for replicate ``index``."""
    s = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(3, np.uint64)
    return tuple(int(x >> np.uint64(1)) for x in s)


def _map(fn, args, workers: int):
    if workers <= 1:
        return [fn(a) for a in args]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        return list(ex.map(fn, args))


def t_list_for(cfg: ExperimentConfig, tilt: TiltSolution) -> list:
    return list(cfg.t_list) if cfg.t_list is not None else [n / tilt.v0 for n in cfg.n_list]


# --- tightness -----------------------------------------------------------------------


def _tightness_replicate(args) -> dict:
    cfg_d, tilt_d, i, want_h, want_m = args
    cfg = ExperimentConfig.from_dict(cfg_d)
    tilt = TiltSolution.from_dict(tilt_d)
    env_seed, sim_seed, pn_seed = replicate_seeds(cfg.master_seed, i)
    n_max = max(cfg.n_list)
    t_list = t_list_for(cfg, tilt)
    n_tab = n_max + 64 if want_m else n_max
    prov = {"replicate": i, "env_seed": env_seed, "sim_seed": sim_seed}
    try:
        env = sample_environment(cfg.distribution, ENV_LEFT, n_tab + 96, env_seed)
        table = centering_table(env, tilt, n_tab)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p, se, reps = p_all_to_target(table, cfg.y0, cfg.pn_rel_se, pn_seed, cfg.pn_pilot,
                                          cfg.pn_max_reps, k=n_max)
        if np.any(p <= 0):
            raise RuntimeError(f"p_hat vanished at k={int(np.argmax(p <= 0))}")
        p_used = p * np.exp(0.5 * (se / p) ** 2) if cfg.jensen_correction else p
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cen = assemble_centering(table, p_used, tilt.theta_star)
        sim = SimConfig(prune_window=cfg.prune_window, pop_cap=cfg.pop_cap, seed=sim_seed,
                        record_pruned=cfg.prune_bound and want_h)
        if want_m:
            rec = simulate_until(env, max(t_list), sim, t_grid=t_list, n_target=n_max if want_h else 0)
        else:
            rec = simulate_hitting(env, n_max, sim)
        bound = math.nan
        if sim.record_pruned:
            r_grid, g = catch_up_table(env, n_max, rec.H[n_max] + 1.0, 0.5)
            a_grid = np.linspace(0.0, PRUNE_BOUND_SPAN, 161)
            bound = float(np.trapezoid(catch_up_bound(rec, env.x_min, r_grid, g, a_grid), a_grid))
    except (SimulationAborted, RuntimeError, ValueError) as e:
        return {"ok": False, "error": f"{type(e).__name__}: {e}", **prov}
    prov.update(pruned=rec.pruned_inner, max_pop=rec.max_pop, prune_window=cfg.prune_window, pn_reps=reps,
                prune_gap_bound=bound)
    h_rows, m_rows = [], []
    if want_h:
        for n in cfg.n_list:
            h_rows.append({"n": n, **prov, "H_n": rec.H[n], "m_hat_n": float(cen.m[n]),
                           "residual": rec.H[n] - float(cen.m[n]), "p_hat_n": float(p[n]),
                           "p_se_n": float(se[n])})
    if want_m:
        for j, t in enumerate(t_list):
            if t >= cen.m[-1]:
                return {"ok": False, "error": f"t={t:.4g} beyond tabulated m_n={cen.m[-1]:.4g}", **prov}
            mt = int(cen.m_tilde(t))
            m_rows.append({"t": float(t), **prov, "M_t": rec.M_t[j], "m_tilde_t": mt,
                           "residual": rec.M_t[j] - mt, "p_hat_k": float(p[mt]), "p_se_k": float(se[mt])})
    return {"ok": True, "h_rows": h_rows, "m_rows": m_rows, **prov}


def _tightness_checks(cfg: ExperimentConfig, rows: list, key: str, pair_vals: list, rng) -> tuple[dict, dict]:
    by = {}
    reps_order = sorted({r["replicate"] for r in rows})
    pos = {rep: j for j, rep in enumerate(reps_order)}
    for r in rows:
        by.setdefault(r[key], np.full(len(reps_order), np.nan))[pos[r["replicate"]]] = r["residual"]
    summary = {str(k): _summary(v) for k, v in by.items()}
    a, b = by[pair_vals[0]], by[pair_vals[1]]
    ia, ib = summary[str(pair_vals[0])]["iqr"], summary[str(pair_vals[1])]["iqr"]
    ratio = ib / ia
    lo, hi = cfg.iqr_band
    drift, drift_se = _paired_median_drift(a, b, cfg.bootstrap, rng)
    checks = {
        "iqr_ratio": {"pass": bool(lo <= ratio <= hi), "value": ratio, "band": [lo, hi],
                      "bootstrap_se": _iqr_ratio_se(a, b, cfg.bootstrap, rng),
                      "at": [pair_vals[0], pair_vals[1]]},
        "median_drift": {"pass": bool(abs(drift) <= cfg.drift_k * drift_se), "value": drift,
                         "bootstrap_se": drift_se, "k": cfg.drift_k},
        "finite_iqr": {"pass": bool(all(np.isfinite(s["iqr"]) and s["iqr"] > 0 for s in summary.values()))},
    }
    return summary, checks


def run_tightness(cfg: ExperimentConfig, want_h: bool = True, want_m: bool = True,
                  tilt: TiltSolution | None = None) -> dict:
    """One BRW run per replicate serving both observables.  Returns results keyed "H" / "M"."""
    tilt = tilt or get_tilt(cfg)
    for n in cfg.check_pair:
        if n not in cfg.n_list:
            raise ParameterError(f"check_pair level {n} not in n_list")
    args = [(cfg.to_dict(), tilt.to_dict(), i, want_h, want_m) for i in range(cfg.replicates)]
    results = _map(_tightness_replicate, args, cfg.workers)
    failed = [r for r in results if not r["ok"]]
    for r in failed:
        log.warning("replicate %d failed: %s", r["replicate"], r["error"])
    if len(failed) > cfg.max_failure_frac * cfg.replicates:
        raise ExperimentAborted(f"{len(failed)} of {cfg.replicates} replicates failed; first: {failed[0]['error']}")
    good = [r for r in results if r["ok"]]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0xB007]))
    out = {}
    fail_info = {"failed": len(failed), "errors": [f"{r['replicate']}: {r['error']}" for r in failed]}
    if want_h:
        rows = [row for r in good for row in r["h_rows"]]
        summary, checks = _tightness_checks(cfg, rows, "n", cfg.check_pair, rng)
        summary["failures"] = fail_info
        out["H"] = ExperimentResult("tightness-h", rows, summary, checks)
    if want_m:
        t_list = t_list_for(cfg, tilt)
        pair_t = [t_list[cfg.n_list.index(n)] for n in cfg.check_pair] if cfg.t_list is None else \
            [t_list[0], t_list[-1]]
        rows = [row for r in good for row in r["m_rows"]]
        summary, checks = _tightness_checks(cfg, rows, "t", pair_t, rng)
        summary["failures"] = fail_info
        if cfg.left_tail_C is not None:
            q01 = min(s["q01"] for k, s in summary.items() if k != "failures")
            checks["left_tail"] = {"pass": bool(q01 >= -cfg.left_tail_C), "value": q01, "C": cfg.left_tail_C}
        out["M"] = ExperimentResult("tightness-m", rows, summary, checks)
    return out


def run_tightness_hitting(cfg: ExperimentConfig, tilt: TiltSolution | None = None) -> ExperimentResult:
    """Rows (n, replicate, H_n, m_hat_n, residual) with provenance; checks on the residual spread."""
    return run_tightness(cfg, True, False, tilt)["H"]


def run_tightness_max(cfg: ExperimentConfig, tilt: TiltSolution | None = None) -> ExperimentResult:
    """Rows (t, replicate, M_t, m~_t, residual) with provenance."""
    return run_tightness(cfg, False, True, tilt)["M"]


# --- many-to-one -----------------------------------------------------------------------


@numba.njit(cache=True)
def _mt1_rhs_kernel(xi, x_min, t_end, n, c_lo, c_hi, reps, rng):
    S = xi.size
    s1 = 0.0
    s2 = 0.0
    hits = np.empty(n + 1)
    for _ in range(reps):
        hits[:] = np.inf
        hits[0] = 0.0
        x = 0
        t = 0.0
        lw = 0.0
        while True:
            dt = -math.log(1.0 - rng.random())
            i = x - x_min
            if t + dt >= t_end:
                lw += xi[i] * (t_end - t)
                break
            lw += xi[i] * dt
            t += dt
            x += 1 if rng.random() < 0.5 else -1
            if x - x_min < 0 or x - x_min >= S:
                lw = np.nan
                break
            if 0 <= x <= n and hits[x] == np.inf:
                hits[x] = t
        ok = True
        for k in range(n + 1):
            if not (c_lo[k] <= hits[k] <= c_hi[k]):
                ok = False
                break
        w = math.exp(lw) if ok else 0.0
        s1 += w
        s2 += w * w
    return s1, s2


def verify_many_to_one(env: Environment, c_lo, c_hi, t: float, reps_brw: int, reps_rw: int,
                       rng: np.random.Generator) -> dict:
    """Both sides of the many-to-one identity for box constraints on H_0..H_n.

    ``lhs`` averages, over full branching runs, the number of particles at time t
    whose ancestral first hitting times of levels 0..n lie in the boxes; ``rhs``
    averages ``exp(int_0^t xi(X_r) dr)`` times the same indicator over single walks.
    An unreached level has hitting time +inf.
    """
    c_lo = np.asarray(c_lo, dtype=float)
    c_hi = np.asarray(c_hi, dtype=float)
    n = c_lo.size - 1
    if c_hi.size != n + 1:
        raise ParameterError("c_lo and c_hi must have the same length")
    if n > 4 or t > 3 or np.max(env.rates) > 0.3:
        raise ParameterError("keep n <= 4, t <= 3 and rates <= 0.3 so both sides stay estimable")
    if np.any(c_lo > c_hi):
        return {"lhs": 0.0, "rhs": 0.0, "lhs_se": 0.0, "rhs_se": 0.0, "z": 0.0}
    reach = int(math.ceil(8 * t + 40))
    if not env.covers(-reach, reach):
        raise ParameterError(f"environment must cover [-{reach}, {reach}]")
    counts = constrained_particle_counts(env, t, c_lo, c_hi, reps_brw, rng)
    lhs = float(counts.mean())
    lhs_se = float(counts.std(ddof=1) / math.sqrt(reps_brw))
    s1, s2 = _mt1_rhs_kernel(np.ascontiguousarray(env.rates), env.x_min, float(t), n, c_lo, c_hi,
                             int(reps_rw), rng)
    rhs = s1 / reps_rw
    rhs_se = math.sqrt(max(s2 / reps_rw - rhs * rhs, 0.0) * reps_rw / (reps_rw - 1) / reps_rw)
    comb = math.hypot(lhs_se, rhs_se)
    z = abs(lhs - rhs) / comb if comb > 0 else (0.0 if lhs == rhs else math.inf)
    return {"lhs": lhs, "rhs": float(rhs), "lhs_se": lhs_se, "rhs_se": rhs_se, "z": z}


def pilot_boxes(env: Environment, n: int, t: float, width: float, rng: np.random.Generator,
                max_tries: int = 100_000):
    """Boxes ``[H_k - width, H_k + width]`` around a rate-1 walk that reaches n before t."""
    for _ in range(max_tries):
        x, s = 0, 0.0
        hits = [0.0] + [math.inf] * n
        while True:
            s += rng.exponential()
            if s >= t:
                break
            x += 1 if rng.random() < 0.5 else -1
            if 0 < x <= n and math.isinf(hits[x]):
                hits[x] = s
        if all(math.isfinite(h) for h in hits):
            h = np.array(hits)
            lo = np.maximum(h - width, 0.0)
            lo[0] = 0.0
            hi = h + width
            hi[0] = 0.0
            return lo, hi
    raise RuntimeError("no pilot path reached level n; increase t")


def run_mt1(cfg: ExperimentConfig) -> ExperimentResult:
    """Pinned cases: one unconstrained constant-rate case plus random environments with pilot boxes."""
    from .env import constant_environment

    rows = []
    ss = np.random.SeedSequence([cfg.master_seed, 0x3171])
    rng = np.random.default_rng(ss)
    env = constant_environment(0.2, -64, 64)
    lo, hi = np.zeros(1), np.zeros(1)
    r = verify_many_to_one(env, lo, hi, 3.0, cfg.mt1_reps_brw, cfg.mt1_reps_rw, rng)
    rows.append({"case": "yule", "env_seed": -1, "n": 0, "t": 3.0, **r, "exact": math.exp(0.6)})
    dist = cfg.distribution
    for c in range(cfg.mt1_cases):
        env_seed = replicate_seeds(cfg.master_seed, 10_000 + c)[0]
        env = sample_environment(dist, -64, 64, env_seed)
        n = 1 + c % 3
        lo, hi = pilot_boxes(env, n, 3.0, 0.75, rng)
        r = verify_many_to_one(env, lo, hi, 3.0, cfg.mt1_reps_brw, cfg.mt1_reps_rw, rng)
        rows.append({"case": f"env{c}", "env_seed": env_seed, "n": n, "t": 3.0, **r, "exact": math.nan})
    zmax = max(r["z"] for r in rows)
    checks = {"z_max": {"pass": bool(zmax <= 3.0), "value": zmax}}
    return ExperimentResult("mt1", rows, {"cases": len(rows)}, checks)


# --- p_n decay -----------------------------------------------------------------------


@dataclass
class PnDecayResult:
    n_list: list
    log_p: np.ndarray  # (envs, len(n_list))
    log_p_se: np.ndarray
    env_seeds: list
    slope: float
    intercept: float
    residual: float
    ratio: float  # max/min over n of |mean log p_n| / log n

    def rows(self) -> list:
        out = []
        for e, s in enumerate(self.env_seeds):
            for j, n in enumerate(self.n_list):
                out.append({"env": e, "env_seed": s, "n": n, "log_p_hat": float(self.log_p[e, j]),
                            "log_p_se": float(self.log_p_se[e, j])})
        return out


def pn_decay_study(dist: EnvDistribution, n_list, tilt: TiltSolution, seeds, y0: int = 4,
                   rel_se: float = 0.2, pilot: int = 20000, max_reps: int = 3_000_000) -> PnDecayResult:
    """Least-squares slope of the environment-averaged log p_n against log n."""
    n_list = [int(n) for n in n_list]
    if math.log2(max(n_list) / min(n_list)) < 3:
        raise ParameterError("n_list must span at least three octaves")
    n_max = max(n_list)
    logp, logse = [], []
    for s in seeds:
        env = sample_environment(dist, ENV_LEFT, n_max + 8, int(s))
        table = centering_table(env, tilt, n_max)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p, se, _ = p_all_to_target(table, y0, rel_se, int(s), pilot, max_reps)
        reps = max_reps
        while np.any(p[n_list] <= 0) and reps < 8 * max_reps:
            reps *= 2
            p, se = estimate_p_all(table, y0, reps, int(s))
        if np.any(p[n_list] <= 0):
            raise RuntimeError(f"p_hat = 0 for env seed {s}; more reps required")
        logp.append(np.log(p[n_list]))
        logse.append(se[n_list] / p[n_list])
    logp = np.array(logp)
    mean = logp.mean(axis=0)
    x = np.log(n_list)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, mean, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - mean) ** 2)))
    r = np.abs(mean) / x
    return PnDecayResult(n_list, logp, np.array(logse), [int(s) for s in seeds], float(coef[0]),
                         float(coef[1]), resid, float(r.max() / r.min()))


def run_pn_decay(cfg: ExperimentConfig) -> ExperimentResult:
    tilt = get_tilt(cfg)
    seeds = [replicate_seeds(cfg.master_seed, i)[0] for i in range(cfg.replicates)]
    res = pn_decay_study(cfg.distribution, cfg.n_list, tilt, seeds, cfg.y0, cfg.pn_rel_se,
                         cfg.pn_pilot, cfg.pn_max_reps)
    summary = {"slope": res.slope, "intercept": res.intercept, "residual": res.residual, "ratio": res.ratio,
               "mean_log_p": res.log_p.mean(axis=0).tolist(), "n_list": res.n_list}
    checks = {"negative_slope": {"pass": bool(res.slope < 0 and np.isfinite(res.slope)), "value": res.slope},
              "ratio": {"pass": bool(res.ratio <= cfg.decay_ratio_max), "value": res.ratio,
                        "max": cfg.decay_ratio_max}}
    return ExperimentResult("pn-decay", res.rows(), summary, checks)


# --- barrier ratios --------------------------------------------------------------------


@dataclass
class BarrierRatioResult:
    n: int
    y_list: list
    p_hat_n: float
    p_se_n: float
    delta: float
    ratio_lb: np.ndarray  # frown (lower-bound) event over p_hat_n
    ratio_lb_se: np.ndarray
    ratio_ub: np.ndarray  # smile (upper-bound) event over p_hat_n
    ratio_ub_se: np.ndarray
    slope_lb: float
    slope_lb_se: float
    slope_ub: float
    slope_ub_se: float

    def rows(self) -> list:
        return [{"n": self.n, "y": y, "ratio_lb": float(self.ratio_lb[j]), "ratio_lb_se": float(self.ratio_lb_se[j]),
                 "ratio_ub": float(self.ratio_ub[j]), "ratio_ub_se": float(self.ratio_ub_se[j]),
                 "p_hat_n": self.p_hat_n, "p_se_n": self.p_se_n, "delta": self.delta}
                for j, y in enumerate(self.y_list)]


def _slope(y, r):
    ok = r > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(np.asarray(y)[ok]), np.log(r[ok]), 1)[0])


def _ratio_curve(cmin, end, y_list, J):
    return np.array([barrier_indicator(cmin, end, y, J).mean() for y in y_list])


def barrier_ratio_study(env: Environment, tilt: TiltSolution, n: int, y_list, reps: int, seed: int,
                        y0: int = 4, pn_rel_se: float = 0.03, bootstrap: int = 200) -> BarrierRatioResult:
    """Random-walk barrier probabilities with banana-shifted barriers, relative to p_hat_n.

    Both events end in ``[y0 - 1, y0]``; the lower-bound one uses the downward
    banana, the upper-bound one the upward banana.  Slopes are least-squares fits of
    log ratio on log y, with bootstrap se over paths.
    """
    y_list = [float(y) for y in y_list]
    if min(y_list) < 4 or max(y_list) > math.log(n) ** 2:
        raise ParameterError(f"y values must lie in [4, log(n)^2] = [4, {math.log(n) ** 2:.1f}]")
    prof = tilted_profile(env, tilt.eta_bar, n)
    table = centering_table(env, tilt, n, profile=prof)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p, se, _ = p_all_to_target(table, y0, pn_rel_se, seed)
    p_n, se_n = float(p[n]), float(se[n])
    delta = choose_delta(table, p_n, tilt.theta_star)
    J = (y0 - 1.0, float(y0))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB1]))
    boot_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB2]))
    out = {}
    for name, banana in (("lb", banana_down), ("ub", banana_up)):
        prof_b = m_profile(table, p_n, tilt.theta_star, banana(n, delta, table.xi2))
        cmin, end = clearance_samples(env, tilt, prof, prof_b.values, reps, rng)
        q = _ratio_curve(cmin, end, y_list, J)
        q_se = np.sqrt(q * (1 - q) / (reps - 1))
        slopes = []
        for _ in range(bootstrap):
            idx = boot_rng.integers(0, reps, reps)
            slopes.append(_slope(y_list, _ratio_curve(cmin[idx], end[idx], y_list, J)))
        out[name] = (q / p_n, np.hypot(q_se / p_n, q * se_n / p_n**2), _slope(y_list, q),
                     float(np.nanstd(slopes, ddof=1)))
    return BarrierRatioResult(n, y_list, p_n, se_n, delta, *out["lb"][:2], *out["ub"][:2],
                              out["lb"][2], out["lb"][3], out["ub"][2], out["ub"][3])


def run_barrier_ratio(cfg: ExperimentConfig) -> ExperimentResult:
    """Slope agreement of the lower-bound ratio between the two largest n in n_list."""
    tilt = get_tilt(cfg)
    env_seed = replicate_seeds(cfg.master_seed, 0)[0]
    n_a, n_b = cfg.n_list[-2], cfg.n_list[-1]
    env = sample_environment(cfg.distribution, ENV_LEFT, n_b + 8, env_seed)
    res = [barrier_ratio_study(env, tilt, n, cfg.y_list, cfg.rw_reps, cfg.master_seed + j, cfg.y0)
           for j, n in enumerate((n_a, n_b))]
    rows = [dict(r, env_seed=env_seed) for x in res for r in x.rows()]
    a, b = res
    diff = a.slope_lb - b.slope_lb
    comb = math.hypot(a.slope_lb_se, b.slope_lb_se)
    positive = all(np.all(np.isfinite(x.ratio_lb)) and np.all(x.ratio_lb > 0) for x in res)
    checks = {"slope_agreement": {"pass": bool(abs(diff) <= cfg.slope_k * comb), "slopes": [a.slope_lb, b.slope_lb],
                                  "ses": [a.slope_lb_se, b.slope_lb_se], "k": cfg.slope_k},
              "ratios_positive": {"pass": bool(positive)}}
    summary = {"n": [n_a, n_b], "slope_lb": [a.slope_lb, b.slope_lb], "slope_ub": [a.slope_ub, b.slope_ub],
               "delta": [a.delta, b.delta]}
    return ExperimentResult("barrier-ratio", rows, summary, checks)


# --- pruning soundness -------------------------------------------------------------------


def _prune_replicate(args) -> dict:
    cfg_d, i, window, coupled = args
    cfg = ExperimentConfig.from_dict(cfg_d)
    env_seed, sim_seed, _ = replicate_seeds(cfg.master_seed, i)
    n = cfg.prune_n
    env = sample_environment(cfg.distribution, ENV_LEFT, n + 8, env_seed)
    sim = SimConfig(prune_window=window, pop_cap=cfg.pop_cap, seed=sim_seed, coupled=coupled, record_pruned=True)
    try:
        rec = simulate_hitting(env, n, sim)
    except SimulationAborted as e:
        return {"replicate": i, "env_seed": env_seed, "sim_seed": sim_seed, "window": window, "ok": False,
                "error": str(e)}
    r_grid, g = catch_up_table(env, n, rec.H[n] + 1.0, 0.5)
    a_grid = np.linspace(0.0, PRUNE_BOUND_SPAN, 161)
    b = catch_up_bound(rec, env.x_min, r_grid, g, a_grid)
    return {"replicate": i, "env_seed": env_seed, "sim_seed": sim_seed, "window": window, "ok": True, "H_n": rec.H[n],
            "H_n_doubled": rec.H_outer[n] if coupled else math.nan, "pruned": rec.pruned_inner,
            "max_pop": rec.max_pop, "gap_bound": float(np.trapezoid(b, a_grid)), "bound": b}


def _shift_summary(rows):
    a_grid = np.linspace(0.0, PRUNE_BOUND_SPAN, 161)
    H = np.array([r["H_n"] for r in rows])
    shift = quantile_shift_bound(H, [r["bound"] for r in rows], a_grid)
    return {"q10": shift[0.1], "q90": shift[0.9]}


def run_prune_check(cfg: ExperimentConfig) -> ExperimentResult:
    """Bound on how much removing the pruning moves the (q10, q90) of H_n.

    Doubling the window can move the quantiles by no more than removing it, and
    the latter is bounded by the catch-up mass of the pruned particles.  The bound
    is validated against an explicit coupled doubling at a small window where the
    doubled system is affordable.
    """
    args = [(cfg.to_dict(), i, cfg.prune_window, False) for i in range(cfg.replicates)]
    all_rows = _map(_prune_replicate, args, cfg.workers)
    rows = [r for r in all_rows if r["ok"]]
    failed = len(all_rows) - len(rows)
    if failed > cfg.max_failure_frac * cfg.replicates:
        raise ExperimentAborted(f"{failed} of {cfg.replicates} pruning runs failed")
    shift = _shift_summary(rows)
    checks = {"quantile_shift": {"pass": bool(max(shift.values()) < cfg.prune_tol), "bound": shift,
                                 "tol": cfg.prune_tol, "window": cfg.prune_window, "n": cfg.prune_n}}
    summary = {"shift_bound": shift, "mean_gap_bound": float(np.mean([r["gap_bound"] for r in rows])),
               "failed": failed}
    if cfg.prune_validate_reps > 0:
        w = cfg.prune_validate_window
        vargs = [(cfg.to_dict(), 100_000 + i, w, True) for i in range(cfg.prune_validate_reps)]
        vall = _map(_prune_replicate, vargs, cfg.workers)
        # runs whose narrow system died out have no H_n; they are reported, not used
        vrows = [r for r in vall if r["ok"]]
        H_in = np.array([r["H_n"] for r in vrows])
        H_out = np.array([r["H_n_doubled"] for r in vrows])
        observed = {q: float(np.quantile(H_in, q) - np.quantile(H_out, q)) for q in (0.1, 0.9)}
        rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0x9C]))
        idx = rng.integers(0, H_in.size, size=(cfg.bootstrap, H_in.size))
        obs_se = {q: float((np.quantile(H_in[idx], q, axis=1) - np.quantile(H_out[idx], q, axis=1)).std(ddof=1))
                  for q in (0.1, 0.9)}
        vbound = _shift_summary(vrows)
        mean_gap = float(np.mean(H_in - H_out))
        mean_bound = float(np.mean([r["gap_bound"] for r in vrows]))
        checks["bound_dominates"] = {"pass": bool(mean_gap <= mean_bound), "window": w,
                                     "mean_gap": mean_gap, "mean_gap_bound": mean_bound}
        summary["validation"] = {"window": w, "observed_shift": {"q10": observed[0.1], "q90": observed[0.9]},
                                 "observed_shift_se": {"q10": obs_se[0.1], "q90": obs_se[0.9]},
                                 "shift_bound": vbound, "mean_gap": mean_gap, "mean_gap_bound": mean_bound,
                                 "died_out": len(vall) - len(vrows)}
        rows = rows + vall
    out = [{k: v for k, v in r.items() if k != "bound"} for r in rows]
    return ExperimentResult("prune-check", out, summary, checks)


def run_experiment(cfg: ExperimentConfig) -> list[ExperimentResult]:
    if cfg.kind in ("tightness-h", "tightness-m", "tightness"):
        res = run_tightness(cfg, cfg.kind != "tightness-m", cfg.kind != "tightness-h")
        results = [res[k] for k in ("H", "M") if k in res]
    elif cfg.kind == "mt1":
        results = [run_mt1(cfg)]
    elif cfg.kind == "pn-decay":
        results = [run_pn_decay(cfg)]
    elif cfg.kind == "prune-check":
        results = [run_prune_check(cfg)]
    else:
        results = [run_barrier_ratio(cfg)]
    if cfg.output:
        for r in results:
            path = cfg.output if len(results) == 1 else f"{cfg.output}.{r.kind}"
            r.write(path, cfg.format)
    return results
