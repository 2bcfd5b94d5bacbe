"""Experiment configuration, the weak-order study and CSV reports."""

from __future__ import annotations

import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._backend import BACKEND
from .averaging import ErgodicParams
from .errors import ConfigError, EstimationError, InconclusiveResultError
from .integrators import SimParams, simulate_pair, step_grid
from .models import (
    CosinePhi,
    ModelSpec,
    TestFunction,
    _check_keys,
    benchmark_spec,
    phi_from_dict,
    validate_hypotheses,
)
from .oracle import (
    gaussian_moments_averaged,
    gaussian_moments_coupled,
    slow_independent_of_fast,
    weak_value_gaussian,
)

SCHEMA_VERSION = 1
CHUNK = 1000  # samples per task; fixed so results do not depend on the thread count
MODES = ("mc", "gaussian")


def fmt(value: float) -> str:
    """Round-trippable 17-significant-digit rendering used in every CSV."""
    return format(float(value), ".17g")


def write_csv(header: tuple[str, ...], rows, path: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join("" if v is None else (v if isinstance(v, str) else fmt(v)) for v in row) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# -- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class MixingConfig:
    t_grid: tuple[float, ...] = tuple(0.25 * i for i in range(1, 25))
    M: int = 2000
    h: float = 0.01

    def to_dict(self) -> dict:
        return {"t_grid": [float(t) for t in self.t_grid], "M": self.M, "h": self.h}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    sim: SimParams
    eps_grid: tuple[float, ...]
    mode: str = "gaussian"
    phi: TestFunction | None = None
    x0: tuple[float, ...] | None = None
    y0: tuple[float, ...] | None = None
    output: str | None = None
    ergodic: ErgodicParams = ErgodicParams()
    mixing: MixingConfig = MixingConfig()

    def __post_init__(self):
        n = self.sim.n
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {list(MODES)}, got '{self.mode}'")
        if self.mode == "gaussian" and not self.model.is_linear:
            raise ConfigError("mode: gaussian mode requires the linear drift family")
        eps = np.asarray(self.eps_grid, dtype=float)
        if eps.size == 0 or np.any(eps <= 0) or np.any(eps > 1) or np.any(np.diff(eps) >= 0):
            raise ConfigError("eps_grid: must be strictly decreasing values in (0, 1]")
        for name in ("x0", "y0"):
            v = getattr(self, name)
            if v is None:
                object.__setattr__(self, name, (0.0,) * n)
            elif len(v) != n:
                raise ConfigError(f"{name}: expected {n} entries, got {len(v)}")
        if self.phi is None:
            object.__setattr__(self, "phi", CosinePhi(np.eye(n)[0]))

    @property
    def x0_array(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=float)

    @property
    def y0_array(self) -> np.ndarray:
        return np.asarray(self.y0, dtype=float)

    def to_dict(self) -> dict:
        s = self.sim
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model.to_dict(),
            "sim": {
                "epsilon": s.epsilon,
                "T": s.T,
                "h_macro": s.h_macro,
                "h_coupled": s.h_coupled,
                "n": s.n,
                "M": s.M,
                "seed": s.seed,
            },
            "eps_grid": [float(e) for e in self.eps_grid],
            "mode": self.mode,
            "phi": self.phi.to_dict(),
            "x0": [float(v) for v in self.x0],
            "y0": [float(v) for v in self.y0],
            "output": self.output,
            "ergodic": self.ergodic.to_dict(),
            "mixing": self.mixing.to_dict(),
        }

    def with_overrides(self, seed=None, mode=None, output=None) -> ExperimentConfig:
        cfg = self
        if seed is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=seed))
        if mode is not None:
            cfg = replace(cfg, mode=mode)
        if output is not None:
            cfg = replace(cfg, output=output)
        return cfg


_TOP_KEYS = {"schema_version", "model", "sim", "eps_grid", "mode", "phi", "x0", "y0", "output", "ergodic", "mixing"}
_SIM_KEYS = {"epsilon", "T", "h_macro", "h_coupled", "n", "M", "seed"}


def _section(fn, where: str):
    try:
        return fn()
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(d: dict) -> ExperimentConfig:
    _check_keys(d, _TOP_KEYS, "config")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    if "model" not in d:
        raise ConfigError("config: missing required key 'model'")
    model = ModelSpec.from_dict(d["model"], "model")
    sd = d.get("sim", {})
    _check_keys(sd, _SIM_KEYS, "sim")
    sim = _section(lambda: SimParams(**{k: sd[k] for k in sd}), "sim")
    for key in ("n", "M", "seed"):
        if not isinstance(getattr(sim, key), int) or isinstance(getattr(sim, key), bool):
            raise ConfigError(f"sim.{key}: expected an integer")
    if "eps_grid" not in d:
        raise ConfigError("config: missing required key 'eps_grid'")
    eps = _section(lambda: tuple(float(e) for e in d["eps_grid"]), "eps_grid")
    phi = phi_from_dict(d["phi"], sim.n, "phi") if "phi" in d else None

    def vec(key):
        if d.get(key) is None:
            return None
        return _section(lambda: tuple(float(v) for v in d[key]), key)

    ed = d.get("ergodic", {})
    _check_keys(ed, {"t_burn", "t_avg", "h", "replicas"}, "ergodic")
    ergodic = _section(lambda: ErgodicParams(**ed), "ergodic")
    md = d.get("mixing", {})
    _check_keys(md, {"t_grid", "M", "h"}, "mixing")
    mixing = _section(
        lambda: MixingConfig(
            tuple(float(t) for t in md.get("t_grid", MixingConfig.t_grid)),
            int(md.get("M", MixingConfig.M)),
            float(md.get("h", MixingConfig.h)),
        ),
        "mixing",
    )
    output = d.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output: expected a path string or null")
    return ExperimentConfig(
        model=model,
        sim=sim,
        eps_grid=eps,
        mode=d.get("mode", "gaussian"),
        phi=phi,
        x0=vec("x0"),
        y0=vec("y0"),
        output=output,
        ergodic=ergodic,
        mixing=mixing,
    )


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(d)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file '{path}': {exc.strerror}") from exc
    return parse_config(text, str(path))


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def benchmark_config(mode: str = "gaussian", M: int = 10_000, seed: int = 0, b: float = 1.0) -> ExperimentConfig:
    """The linear benchmark weak-order study over ``eps = 2^-3 .. 2^-9``."""
    n = 8
    x0 = [0.0] * n
    x0[0] = 1.0
    return ExperimentConfig(
        model=benchmark_spec(b),
        sim=SimParams(epsilon=2.0**-6, T=0.5, h_macro=0.01, n=n, M=M, seed=seed),
        eps_grid=tuple(2.0**-j for j in range(3, 10)),
        mode=mode,
        phi=CosinePhi(np.eye(n)[0]),
        x0=tuple(x0),
        y0=(0.0,) * n,
    )


def resolve_threads(flag: int | None) -> int:
    """``--threads`` wins; otherwise ``AVGSPDE_THREADS``; otherwise 1."""
    if flag is not None:
        value, source = flag, "--threads"
    elif os.environ.get("AVGSPDE_THREADS"):
        raw = os.environ["AVGSPDE_THREADS"]
        try:
            value = int(raw)
        except ValueError as exc:
            raise ConfigError(f"AVGSPDE_THREADS: expected a positive integer, got '{raw}'") from exc
        source = "AVGSPDE_THREADS"
    else:
        return 1
    if value < 1:
        raise ConfigError(f"{source}: thread count must be >= 1, got {value}")
    return value


# -- weak-order study ------------------------------------------------------


@dataclass(frozen=True)
class WeakOrderRow:
    eps: float
    weak_err: float
    stderr: float


@dataclass
class WeakOrderReport:
    rows: list[WeakOrderRow]
    fitted_order: float | None
    order_stderr: float | None
    flags: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def conclusive(self) -> bool:
        return self.fitted_order is not None

    def require_conclusive(self) -> WeakOrderReport:
        if not self.conclusive:
            raise InconclusiveResultError("fewer than 3 rows rise above the noise floor; no order can be fitted", self)
        return self

    def csv(self) -> str:
        return write_csv(("eps", "weak_err", "stderr"), [(r.eps, r.weak_err, r.stderr) for r in self.rows])

    def summary(self) -> str:
        if not self.conclusive:
            return "order=inconclusive" + (f" [{', '.join(self.flags)}]" if self.flags else "")
        return f"order={self.fitted_order:.2f} ({self.order_stderr:.2f})"


def fit_order(rows) -> tuple[float, float]:
    """OLS slope of ``log err`` against ``log eps`` with its residual-based standard error."""
    pts = [(r.eps, r.weak_err) if isinstance(r, WeakOrderRow) else (r[0], r[1]) for r in rows]
    pts = [(e, w) for e, w in pts if e > 0 and w > 0 and math.isfinite(w)]
    if len(pts) < 3:
        raise EstimationError(f"need at least 3 rows with positive error, got {len(pts)}")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    xm = lx - lx.mean()
    sxx = float(xm @ xm)
    if sxx == 0:
        raise EstimationError("all eps values coincide")
    slope = float(xm @ (ly - ly.mean()) / sxx)
    resid = ly - ly.mean() - slope * xm
    se = math.sqrt(float(resid @ resid) / (len(pts) - 2) / sxx)
    return slope, se


def _mc_chunk(spec, params, lo, hi, x0, y0, phi):
    res = simulate_pair(spec, params, np.arange(lo, hi), x0, y0)
    return phi.value(res.x) - phi.value(res.xbar)


def mc_differences(cfg: ExperimentConfig, eps: float, threads: int = 1) -> tuple[np.ndarray, int]:
    """Per-sample ``phi(X^eps_T) - phi(Xbar_T)`` for sample indices ``0 .. M-1`` in order."""
    params = cfg.sim.with_epsilon(eps)
    bounds = [(lo, min(lo + CHUNK, params.M)) for lo in range(0, params.M, CHUNK)]
    args = (cfg.model, params)
    tail = (cfg.x0_array, cfg.y0_array, cfg.phi)
    if threads == 1:
        parts = [_mc_chunk(*args, lo, hi, *tail) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _mc_chunk(*args, b[0], b[1], *tail), bounds))
    steps, _ = step_grid(params.T, params.coupled_step)
    return np.concatenate(parts), steps


def run_weak_order(cfg: ExperimentConfig, threads: int = 1, progress=None) -> WeakOrderReport:
    spec, sim = cfg.model, cfg.sim
    validate_hypotheses(spec, sim.n).require()
    t0 = time.perf_counter()
    rows, steps = [], []
    degenerate = slow_independent_of_fast(spec)
    if cfg.mode == "gaussian":
        ubar = weak_value_gaussian(gaussian_moments_averaged(spec, sim.T, cfg.x0_array), cfg.phi)
        for eps in cfg.eps_grid:
            if degenerate:
                err = 0.0  # the slow equation does not see the fast variable: identical laws
            else:
                m = gaussian_moments_coupled(spec, eps, sim.T, cfg.x0_array, cfg.y0_array, n=sim.n)
                err = abs(weak_value_gaussian(m, cfg.phi) - ubar)
            rows.append(WeakOrderRow(eps, err, 0.0))
            steps.append(0)
            if progress:
                progress(rows[-1])
    else:
        for eps in cfg.eps_grid:
            d, nsteps = mc_differences(cfg, eps, threads)
            se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
            rows.append(WeakOrderRow(eps, abs(float(d.mean())), se))
            steps.append(nsteps)
            if progress:
                progress(rows[-1])
    flags = []
    if all(r.weak_err == 0 for r in rows):
        flags.append("degenerate-zero")
    usable = [r for r in rows if r.weak_err > 5 * r.stderr and r.weak_err > 0]
    fitted = se = None
    try:
        fitted, se = fit_order(usable)
    except EstimationError:
        flags.append("inconclusive")
    meta = {
        "mode": cfg.mode,
        "seed": sim.seed,
        "M": sim.M if cfg.mode == "mc" else 0,
        "steps": steps,
        "usable_rows": len(usable),
        "threads": threads,
        "backend": BACKEND,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    return WeakOrderReport(rows, fitted, se, flags, meta)

