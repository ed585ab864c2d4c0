"""Command-line driver: ``ctrwkit --config run.yaml [--seed N] [--workers N] [--out DIR]``.

The config is YAML (JSON is accepted as a subset) with a ``command`` and the
blocks ``model``, ``problem``, ``grid``, ``ensemble``, ``output`` and, for
``validate``, ``checks``.  Unknown keys are fatal unless ``--lenient`` is
given.  Every CSV starts with the config hash so artifacts can be matched to
the run that produced them.

Example::

    command: simulate
    model: {preset: subdiffusion, beta: 0.5}
    problem: {x0: 0.0, s0: 0.0, horizon: 1.0}
    ensemble: {n_paths: 10000, seed: 7}
    output: {directory: runs/sub}
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
import warnings
from pathlib import Path
from typing import Annotated, Callable, Literal, Optional, Union

import numpy as np
import scipy
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy.special import gamma as gamma_fn

from . import __version__
from .backward_solver import backward_grid, bump, solve_backward
from .ctrw_chain import chain_ensemble
from .errors import ConfigurationError, CtrwError
from .forward_solver import forward_grid, point_mass, solution_moments, solve_fpe
from .grids import GridField, SpaceTimeGrid
from .io import config_hash, write_csv, write_json
from .limit_sampler import simulate_limit
from .model import Constant, ModelSpec, Tanh, Well, levy_walk_preset, subdiffusion_preset, variable_order_preset
from .validation import compare_ctrw_octrw, fit_power_exponent, ks_distance, mc_law_estimate, mc_pairing

log = logging.getLogger("ctrwkit")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


# --------------------------------------------------------------------------
# schema


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstantField(_Block):
    kind: Literal["constant"]
    value: float

    def build(self):
        return Constant(self.value)


class TanhField(_Block):
    kind: Literal["tanh"]
    base: float = 0.0
    amplitude: float = 1.0
    center: float = 0.0
    scale: float = Field(1.0, gt=0)

    def build(self):
        return Tanh(self.base, self.amplitude, self.center, self.scale)


class WellField(_Block):
    kind: Literal["well"]
    floor: float
    ceiling: float
    center: float = 0.0
    width: float = Field(1.0, gt=0)

    def build(self):
        return Well(self.floor, self.ceiling, self.center, self.width)


FieldConfig = Annotated[Union[ConstantField, TanhField, WellField], Field(discriminator="kind")]


def _build_field(value):
    return value.build() if isinstance(value, BaseModel) else float(value)


class ModelConfig(_Block):
    preset: Literal["subdiffusion", "variable_order", "levy_walk"]
    beta: Optional[float] = None
    beta_field: Optional[FieldConfig] = None
    drift: Union[float, FieldConfig] = 0.0
    epsilon: float = Field(0.05, gt=0, lt=0.5)
    jumps: Literal["lattice", "gaussian"] = "lattice"
    direction_weights: tuple[float, float] = (0.5, 0.5)

    @field_validator("beta")
    @classmethod
    def _beta_range(cls, v):
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError(f"beta must lie in the open interval (0, 1), got {v}")
        return v

    @model_validator(mode="after")
    def _preset_fields(self):
        if self.preset in ("subdiffusion", "levy_walk") and self.beta is None:
            raise ValueError(f"preset {self.preset!r} requires 'beta' in (0, 1)")
        if self.preset == "variable_order":
            if self.beta_field is None:
                raise ValueError("preset 'variable_order' requires 'beta_field'")
            if self.beta is not None:
                raise ValueError("preset 'variable_order' takes 'beta_field', not 'beta'")
            if not (isinstance(self.drift, float) and self.drift == 0.0):
                raise ValueError("preset 'variable_order' is unbiased; 'drift' must be 0")
        elif self.beta_field is not None:
            raise ValueError(f"'beta_field' is only valid for preset 'variable_order', not {self.preset!r}")
        return self

    def build(self) -> ModelSpec:
        if self.preset == "subdiffusion":
            return subdiffusion_preset(self.beta, _build_field(self.drift), jumps=self.jumps)
        if self.preset == "levy_walk":
            return levy_walk_preset(self.beta, _build_field(self.drift), self.direction_weights)
        return variable_order_preset(self.beta_field.build(), epsilon=self.epsilon)


class GaussianTest(_Block):
    kind: Literal["gaussian"] = "gaussian"
    center: float = 0.0
    scale: float = Field(1.0, gt=0)

    def build(self) -> Callable:
        c, w = self.center, self.scale
        return lambda x: np.exp(-(((np.asarray(x) - c) / w) ** 2))


class ConstantTest(_Block):
    kind: Literal["constant"]
    value: float = 1.0

    def build(self) -> Callable:
        v = self.value
        return lambda x: np.full(np.shape(x), v)


class BumpWeight(_Block):
    kind: Literal["bump"] = "bump"
    start: float
    width: float = Field(gt=0)


class ProblemConfig(_Block):
    x0: float = 0.0
    s0: float = 0.0
    horizon: float
    times: Optional[list[float]] = None
    f: Annotated[Union[GaussianTest, ConstantTest], Field(discriminator="kind")] = GaussianTest()
    g: Optional[BumpWeight] = None

    @model_validator(mode="after")
    def _order(self):
        if not self.horizon > self.s0:
            raise ValueError(f"horizon ({self.horizon}) must exceed s0 ({self.s0})")
        for t in self.times or ():
            if not self.s0 <= t <= self.horizon:
                raise ValueError(f"probe time {t} must lie in [s0, horizon]")
        if self.times is not None and list(self.times) != sorted(self.times):
            raise ValueError("probe times must be sorted")
        if self.g is not None and not (self.s0 < self.g.start and self.g.start + self.g.width <= self.horizon):
            raise ValueError("the support of g must lie inside (s0, horizon]")
        return self

    @property
    def probe_times(self) -> list[float]:
        return list(self.times) if self.times else [self.horizon]


class GridConfig(_Block):
    dx: Optional[float] = Field(None, gt=0)
    dt: float = Field(5e-4, gt=0)
    extent: Optional[tuple[float, float]] = None
    window: Optional[tuple[float, float]] = None
    padding: float = Field(0.1, ge=0)
    dr: float = Field(1e-3, gt=0)
    scheme: Literal["renewal", "grunwald"] = "renewal"

    @field_validator("extent")
    @classmethod
    def _extent(cls, v):
        if v is not None and not v[0] < v[1]:
            raise ValueError("extent must be an increasing pair [x_min, x_max]")
        return v


class EnsembleConfig(_Block):
    n_paths: int = Field(10_000, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    workers: int = Field(1, ge=1)
    engine: Literal["limit", "chain"] = "limit"
    c: Optional[float] = Field(None, gt=0)
    octrw: bool = True
    block_size: int = Field(16384, ge=1)


class OutputConfig(_Block):
    directory: str = "ctrwkit-out"
    formats: tuple[Literal["csv", "json"], ...] = ("csv", "json")
    field: Literal["slices", "full"] = "slices"


CHECK_IDS = ("variance", "variance_exponent", "forward_ks", "mass_balance", "ctrw_octrw", "backward_duality")


class RunConfig(_Block):
    command: Literal["simulate", "solve-forward", "solve-backward", "validate"]
    model: ModelConfig
    problem: ProblemConfig
    grid: GridConfig = GridConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    output: OutputConfig = OutputConfig()
    checks: Optional[list[Literal[CHECK_IDS]]] = None  # type: ignore[valid-type]

    @model_validator(mode="after")
    def _contract(self):
        p = self.problem
        if self.command in ("simulate", "validate") and self.ensemble.seed is None:
            raise ValueError(f"command {self.command!r} is stochastic and requires ensemble.seed")
        if self.ensemble.engine == "chain" and self.ensemble.c is None:
            raise ValueError("engine 'chain' requires ensemble.c")
        a, b = self.window
        if not a < p.s0 < p.horizon < b:
            raise ValueError(f"window [{a}, {b}) must satisfy a < s0 < horizon < b")
        if self.command == "solve-backward" and p.g is None:
            raise ValueError("solve-backward requires problem.g")
        if self.checks is not None and self.command != "validate":
            raise ValueError("'checks' is only valid for command 'validate'")
        return self

    @property
    def window(self) -> tuple[float, float]:
        if self.grid.window is not None:
            return self.grid.window
        pad = self.grid.padding * (self.problem.horizon - self.problem.s0)
        return (self.problem.s0 - pad, self.problem.horizon + pad)

    def hash_payload(self) -> dict:
        data = self.model_dump(mode="json")
        data["ensemble"].pop("workers")
        data["output"].pop("directory")
        return data


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def _drop(data, loc) -> None:
    node = data
    for key in loc[:-1]:
        node = node[key]
    node.pop(loc[-1], None)


def load_config(data: dict, *, lenient: bool = False) -> RunConfig:
    """Validate a config mapping; ``lenient`` discards unknown keys with a warning."""
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        extra = [e["loc"] for e in err.errors() if e["type"] == "extra_forbidden"]
        if not lenient or not extra or len(extra) != len(err.errors()):
            raise ConfigurationError(_format_errors(err)) from None
        for loc in extra:
            log.warning("ignoring unknown key %s", ".".join(map(str, loc)))
            _drop(data, loc)
        try:
            return RunConfig.model_validate(data)
        except ValidationError as err2:
            raise ConfigurationError(_format_errors(err2)) from None


def parse_config(text: str, *, lenient: bool = False, overrides: dict | None = None) -> RunConfig:
    """Parse YAML/JSON ``text`` into a validated :class:`RunConfig`.

    ``overrides`` maps dotted keys (``"ensemble.seed"``) to values applied
    before validation.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigurationError(f"config is not valid YAML: {err}") from None
    data = data if data is not None else {}
    for key, value in (overrides or {}).items():
        node = data
        *head, last = key.split(".")
        for part in head:
            node = node.setdefault(part, {})
        node[last] = value
    return load_config(data, lenient=lenient)


# --------------------------------------------------------------------------
# commands


def _slice_rows(fld: GridField, times) -> dict:
    cols = {"x": [], "t": [], "value": []}
    dt = fld.t[1] - fld.t[0]
    for t in times:
        j = int(round((t - fld.t[0]) / dt))
        cols["x"].append(fld.x)
        cols["t"].append(np.full(fld.x.size, fld.t[j]))
        cols["value"].append(fld.values[:, j])
    return {k: np.concatenate(v) for k, v in cols.items()}


def _full_rows(fld: GridField) -> dict:
    xx, tt = np.meshgrid(fld.x, fld.t, indexing="ij")
    return {"x": xx.ravel(), "t": tt.ravel(), "value": fld.values.ravel()}


def _grid_times(cfg: RunConfig, grid: SpaceTimeGrid) -> list[float]:
    # snap probes to nodes
    return [grid.t_min + round((t - grid.t_min) / grid.dt) * grid.dt for t in cfg.problem.probe_times]


def _forward_grid(cfg: RunConfig, spec: ModelSpec) -> SpaceTimeGrid:
    p, g = cfg.problem, cfg.grid
    _, b = cfg.window
    nt = int(math.ceil((b - p.s0) / g.dt)) + 1
    top = p.s0 + (nt - 1) * g.dt
    if g.extent is not None:
        lo, hi = g.extent
    else:
        auto = forward_grid(spec, p.x0, p.s0, top)
        lo, hi = auto.x_min, auto.x_max
    dx = g.dx if g.dx is not None else (hi - lo) / 400
    nx = int(round((hi - lo) / dx)) + 1
    return SpaceTimeGrid(lo, lo + (nx - 1) * dx, nx, p.s0, top, nt)


def cmd_simulate(cfg: RunConfig, spec: ModelSpec, workers: int) -> tuple[dict, dict]:
    p, e = cfg.problem, cfg.ensemble
    times = np.asarray(p.probe_times)
    if e.engine == "chain":
        x, dropped = chain_ensemble(spec, e.c, p.x0, p.s0, times, e.n_paths, seed=e.seed,
                                    block_size=e.block_size, workers=workers)
        xs, ys = x[..., 0], None
    else:
        ens = simulate_limit(spec, p.x0, p.s0, times, e.n_paths, seed=e.seed, dr=cfg.grid.dr,
                             block_size=e.block_size, workers=workers, octrw=e.octrw)
        xs = ens.x[..., 0]
        ys = ens.y[..., 0] if ens.y is not None else None
        dropped = ens.dropped
    n, k = xs.shape
    cols = {"path_id": np.repeat(np.arange(n), k), "t": np.tile(times, n), "x": xs.ravel()}
    if ys is not None:
        cols["y_octrw"] = ys.ravel()
    summary = {"dropped": int(dropped), "mean": np.nanmean(xs, axis=0).tolist(),
               "var": np.nanvar(xs, axis=0).tolist()}
    return {"simulate.csv": cols}, summary


def cmd_solve_forward(cfg: RunConfig, spec: ModelSpec, workers: int) -> tuple[dict, dict]:
    grid = _forward_grid(cfg, spec)
    fld = solve_fpe(spec, point_mass(grid.x, cfg.problem.x0), cfg.problem.s0, grid, scheme=cfg.grid.scheme)
    times = [t for t in _grid_times(cfg, grid) if t > grid.t_min]
    rows = _full_rows(fld) if cfg.output.field == "full" else _slice_rows(fld, times)
    moments = np.array([solution_moments(fld, t) for t in times])
    mcols = {"t": times, "mean": moments[:, 0], "var": moments[:, 1], "mass": moments[:, 2]}
    summary = {"grid": {"nx": grid.nx, "nt": grid.nt, "dx": grid.dx, "dt": grid.dt,
                        "x": [grid.x_min, grid.x_max], "t": [grid.t_min, grid.t_max]},
               "final_leakage": float(fld.meta["leakage"][-1])}
    return {"field.csv": rows, "moments.csv": mcols}, summary


def cmd_solve_backward(cfg: RunConfig, spec: ModelSpec, workers: int) -> tuple[dict, dict]:
    p, g = cfg.problem, cfg.grid
    _, b = cfg.window
    pad = (b - p.horizon) / (p.horizon - p.s0)
    if spec.coupled:
        grid = backward_grid(spec, p.x0, p.s0, p.horizon, ds=g.dt, padding=pad)
    else:
        fg = _forward_grid(cfg, spec)
        grid = SpaceTimeGrid(fg.x_min, fg.x_max, fg.nx, fg.t_min, fg.t_max, fg.nt)
    fld = solve_backward(spec, p.f.build(), bump(p.g.start, p.g.width), grid)
    rows = _full_rows(fld) if cfg.output.field == "full" else _slice_rows(fld, [grid.t_min])
    summary = {"value_at_start": fld.at(p.x0, p.s0),
               "grid": {"nx": grid.nx, "nt": grid.nt, "dx": grid.dx, "dt": grid.dt,
                        "x": [grid.x_min, grid.x_max], "t": [grid.t_min, grid.t_max]}}
    return {"field.csv": rows}, summary


# validate: each check returns (statistic, threshold, passed)


def _check_variance(cfg, spec, workers):
    p, e = cfg.problem, cfg.ensemble
    if spec.name != "subdiffusion" or spec.coeffs.drift.bound != 0:
        raise ConfigurationError("check 'variance' needs the unbiased subdiffusion preset")
    beta = spec.params["beta"]
    t = p.horizon - p.s0
    oracle = t**beta / gamma_fn(1 + beta)
    xs = mc_law_estimate(spec, p.x0, p.s0, p.horizon, e.n_paths, seed=e.seed, dr=cfg.grid.dr, workers=workers)
    rel = abs(xs.var() - oracle) / oracle
    return rel, 0.03, rel <= 0.03


def _check_variance_exponent(cfg, spec, workers):
    p, e = cfg.problem, cfg.ensemble
    times = np.asarray(p.probe_times)
    if times.size < 3:
        raise ConfigurationError("check 'variance_exponent' needs at least three probe times")
    ens = simulate_limit(spec, p.x0, p.s0, times, e.n_paths, seed=e.seed, dr=cfg.grid.dr, workers=workers,
                         octrw=False)
    var = np.nanvar(ens.x[..., 0], axis=0)
    fit = fit_power_exponent(times - p.s0, var)
    expected = 2.0 if spec.coupled else spec.params["beta"]
    tol = 0.1 if spec.coupled else 0.05
    err = abs(fit.slope - expected)
    return err, tol, err <= tol


def _check_forward_ks(cfg, spec, workers):
    p, e = cfg.problem, cfg.ensemble
    grid = _forward_grid(cfg, spec)
    fld = solve_fpe(spec, point_mass(grid.x, p.x0), p.s0, grid, scheme=cfg.grid.scheme)
    t = _grid_times(cfg, grid)[-1]
    xs = mc_law_estimate(spec, p.x0, p.s0, t, e.n_paths, seed=e.seed, dr=cfg.grid.dr, workers=workers)
    d = ks_distance(xs, fld, t=t)
    return d, 0.02, d <= 0.02


def _check_mass_balance(cfg, spec, workers):
    grid = _forward_grid(cfg, spec)
    fld = solve_fpe(spec, point_mass(grid.x, cfg.problem.x0), cfg.problem.s0, grid, scheme=cfg.grid.scheme)
    total = fld.values.sum(axis=0) * grid.dx + fld.meta["leakage"]
    err = float(np.max(np.abs(total[1:] - fld.meta["mass"])))
    return err, 1e-9, err <= 1e-9


def _check_ctrw_octrw(cfg, spec, workers):
    p, e = cfg.problem, cfg.ensemble
    cmp = compare_ctrw_octrw(spec, p.x0, p.s0, p.horizon, e.n_paths, seed=e.seed, dr=cfg.grid.dr, workers=workers)
    # coupled models must be told apart, uncoupled ones must not
    return cmp.statistic, cmp.threshold, cmp.rejects == spec.coupled


def _check_backward_duality(cfg, spec, workers):
    p, e = cfg.problem, cfg.ensemble
    if p.g is None:
        raise ConfigurationError("check 'backward_duality' needs problem.g")
    _, summary = cmd_solve_backward(cfg, spec, workers)
    v = summary["value_at_start"]
    probes = np.linspace(p.g.start, p.g.start + p.g.width, 51)
    mean, se = mc_pairing(spec, p.f.build(), bump(p.g.start, p.g.width), p.x0, p.s0, probes, e.n_paths,
                          seed=e.seed, dr=cfg.grid.dr, workers=workers)
    z = abs(v - mean) / se if se > 0 else math.inf
    return z, 3.0, z <= 3.0


CHECKS: dict[str, Callable] = {
    "variance": _check_variance,
    "variance_exponent": _check_variance_exponent,
    "forward_ks": _check_forward_ks,
    "mass_balance": _check_mass_balance,
    "ctrw_octrw": _check_ctrw_octrw,
    "backward_duality": _check_backward_duality,
}


def default_checks(spec: ModelSpec, cfg: RunConfig) -> list[str]:
    if spec.coupled:
        out = ["ctrw_octrw"]
    elif spec.name == "subdiffusion" and spec.coeffs.drift.bound == 0:
        out = ["variance", "forward_ks", "mass_balance", "ctrw_octrw"]
    else:
        out = ["forward_ks", "mass_balance", "ctrw_octrw"]
    if len(cfg.problem.probe_times) >= 3:
        out.append("variance_exponent")
    if cfg.problem.g is not None:
        out.append("backward_duality")
    return out


def cmd_validate(cfg: RunConfig, spec: ModelSpec, workers: int) -> tuple[dict, dict]:
    ids = cfg.checks or default_checks(spec, cfg)
    cols = {"check_id": [], "statistic": [], "threshold": [], "verdict": []}
    verdicts = {}
    for cid in ids:
        stat, thr, ok = CHECKS[cid](cfg, spec, workers)
        cols["check_id"].append(cid)
        cols["statistic"].append(float(stat))
        cols["threshold"].append(float(thr))
        cols["verdict"].append("pass" if ok else "fail")
        verdicts[cid] = {"statistic": float(stat), "threshold": float(thr), "pass": bool(ok)}
    return {"validate.csv": cols}, {"verdicts": verdicts, "all_pass": all(v["pass"] for v in verdicts.values())}


COMMANDS = {
    "simulate": cmd_simulate,
    "solve-forward": cmd_solve_forward,
    "solve-backward": cmd_solve_backward,
    "validate": cmd_validate,
}


# --------------------------------------------------------------------------
# orchestration


def _versions() -> dict:
    return {"ctrwkit": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def run(cfg: RunConfig, *, out: Path | None = None, workers: int | None = None) -> int:
    """Execute ``cfg`` and write its artifacts; returns the process exit status."""
    out = Path(out if out is not None else cfg.output.directory)
    workers = workers or cfg.ensemble.workers
    digest = config_hash(cfg.hash_payload())
    started = time.time()
    meta = {"config": cfg.model_dump(mode="json"), "config_hash": digest, "versions": _versions(),
            "seed": cfg.ensemble.seed, "workers": workers}
    try:
        spec = cfg.model.build()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tables, summary = COMMANDS[cfg.command](cfg, spec, workers)
    except (CtrwError, ValueError) as err:
        meta["timing"] = {"seconds": time.time() - started}
        write_json(out / "error.json", {"error": type(err).__name__, "message": str(err), "config_hash": digest,
                                        "command": cfg.command})
        write_json(out / "run.json", meta)
        log.error("%s: %s", type(err).__name__, err)
        return EXIT_FAILED
    if "csv" in cfg.output.formats:
        for name, cols in tables.items():
            write_csv(out / name, cols, digest)
    meta["summary"] = summary
    meta["warnings"] = [f"{w.category.__name__}: {w.message}" for w in caught]
    meta["timing"] = {"seconds": time.time() - started}
    if "json" in cfg.output.formats:
        write_json(out / "run.json", meta)
        if cfg.command == "validate":
            write_json(out / "verdicts.json", {"config_hash": digest, **summary})
    if cfg.command == "validate" and not summary["all_pass"]:
        return EXIT_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctrwkit", description="CTRW limit simulation and fractional PDE solvers")
    ap.add_argument("--config", required=True, type=Path, help="YAML or JSON run configuration")
    ap.add_argument("--seed", type=int, help="override ensemble.seed")
    ap.add_argument("--workers", type=int, help="worker processes (does not change results)")
    ap.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="lenient", action="store_false", help="unknown keys are errors (default)")
    mode.add_argument("--lenient", dest="lenient", action="store_true", help="ignore unknown keys with a warning")
    ap.set_defaults(lenient=False)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {}
    if args.seed is not None:
        overrides["ensemble.seed"] = args.seed
    if args.workers is not None:
        overrides["ensemble.workers"] = args.workers
    try:
        text = args.config.read_text(encoding="utf-8")
        cfg = parse_config(text, lenient=args.lenient, overrides=overrides)
    except (OSError, ConfigurationError) as err:
        out = args.out or Path("ctrwkit-out")
        write_json(out / "error.json", {"error": type(err).__name__, "message": str(err)})
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, out=args.out, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
