"""Experiment configuration: an INI file layered over ``data/default.ini``."""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .pde import ProblemSpec
from .prior import LinkFunction, PriorConfig, RegularityParams
from .sampler import SamplerConfig
from .spectral import TimeGrid, TorusField, TorusGrid


class ConfigError(ValueError):
    pass


_TERM = re.compile(
    r"""\s*([+-])?\s*
        (?:(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)\s*\*?\s*)?
        (?:(cos|sin)\s*\(\s*([-\d\s,]+)\)|(?=\s*(?:[+-]|$)))
    """,
    re.VERBOSE,
)


def parse_trig(expr: str, dim: int) -> list[tuple[float, str, tuple[int, ...]]]:
    """Parse ``"2 + 0.5 cos(1) - 0.3 sin(2)"`` into ``(amplitude, kind, mode)`` terms.

    ``cos(k)`` stands for ``cos(2 pi k x)``; in 2d the mode is ``(k1, k2)``.
    A bare number is a constant term (kind ``"const"``).
    """
    s = expr.strip()
    if not s:
        raise ConfigError("empty trigonometric expression")
    terms = []
    pos = 0
    while pos < len(s):
        m = _TERM.match(s, pos)
        if m is None or m.end() == pos:
            raise ConfigError(f"cannot parse {expr!r} near {s[pos:]!r}")
        sign, amp, kind, modes = m.groups()
        if terms and sign is None:
            raise ConfigError(f"missing + or - between terms in {expr!r}")
        a = float(amp) if amp is not None else 1.0
        if amp is None and kind is None:
            raise ConfigError(f"cannot parse {expr!r} near {s[pos:]!r}")
        if sign == "-":
            a = -a
        if kind is None:
            terms.append((a, "const", (0,) * dim))
        else:
            k = tuple(int(v) for v in modes.split(","))
            if len(k) != dim:
                raise ConfigError(f"{kind}({modes.strip()}) needs {dim} mode index(es) in dimension {dim}")
            terms.append((a, kind, k))
        pos = m.end()
    return terms


def trig_field(expr: str, grid: TorusGrid) -> TorusField:
    terms = parse_trig(expr, grid.dim)

    def func(*x):
        out = np.zeros(grid.shape)
        for a, kind, k in terms:
            if kind == "const":
                out = out + a
                continue
            phase = 2.0 * np.pi * sum(ki * xi for ki, xi in zip(k, x))
            out = out + a * (np.cos(phase) if kind == "cos" else np.sin(phase))
        return out

    return TorusField.from_function(grid, func)


@dataclass(frozen=True)
class InfoSettings:
    cg_tol: float = 1e-8
    max_iters: int = 500
    precondition: bool = False
    identifiability_tol: float = 1e-6


@dataclass(frozen=True)
class FKSettings:
    n_paths: int = 100000
    steps: int = 512
    probes: int = 20
    antithetic: bool = True


@dataclass(frozen=True)
class LanSettings:
    s: float = 1.0
    n_values: tuple = (100.0, 1000.0, 10000.0, 100000.0)
    direction: str = "0"


@dataclass(frozen=True)
class StabilitySettings:
    scales: tuple = (0.1, 0.03, 0.01, 0.003, 0.001)
    directions: int = 5


@dataclass
class ExperimentConfig:
    grid: TorusGrid
    time: TimeGrid
    theta0: float
    F0_expr: str
    u0_expr: str
    link: LinkFunction
    prior: PriorConfig
    regularity: RegularityParams
    sampler: SamplerConfig
    obs_n: float
    j_space: int | None
    j_time: int | None
    n_grid: tuple
    replicates: int
    seed: int
    output_dir: str
    info: InfoSettings = field(default_factory=InfoSettings)
    fk: FKSettings = field(default_factory=FKSettings)
    lan: LanSettings = field(default_factory=LanSettings)
    stability: StabilitySettings = field(default_factory=StabilitySettings)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def F0(self) -> TorusField:
        return trig_field(self.F0_expr, self.grid)

    @property
    def u0(self) -> TorusField:
        return trig_field(self.u0_expr, self.grid)

    def truth(self) -> ProblemSpec:
        return ProblemSpec(self.theta0, self.F0, self.u0, self.time, self.link)

    def with_seed(self, seed: int) -> ExperimentConfig:
        raw = {k: dict(v) for k, v in self.raw.items()}
        raw["experiment"]["seed"] = str(int(seed))
        return config_from_dict(raw)

    def to_dict(self) -> dict:
        """The fully resolved configuration, section by section, as strings."""
        return {k: dict(v) for k, v in self.raw.items()}


def _default_parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(resources.files("heatbvm").joinpath("data/default.ini").read_text())
    return cp


def _merge(cp: configparser.ConfigParser, other: configparser.ConfigParser | dict, origin: str):
    items = other.items() if isinstance(other, dict) else ((s, other[s]) for s in other.sections())
    for sec, body in items:
        if not cp.has_section(sec):
            raise ConfigError(f"{origin}: unknown section [{sec}]")
        for key, val in dict(body).items():
            if not cp.has_option(sec, key):
                raise ConfigError(f"{origin}: unknown key '{key}' in [{sec}]")
            cp.set(sec, key, str(val))


class _Reader:
    def __init__(self, cp):
        self.cp = cp

    def _get(self, sec, key):
        return self.cp.get(sec, key).strip()

    def float(self, sec, key, lo=None, hi=None, lo_open=False):
        raw = self._get(sec, key)
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected a number, got {raw!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"[{sec}] {key}: must be finite, got {raw!r}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ConfigError(f"[{sec}] {key}: must be {'>' if lo_open else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigError(f"[{sec}] {key}: must be <= {hi}, got {v}")
        return v

    def int(self, sec, key, lo=None, optional=False):
        raw = self._get(sec, key)
        if optional and raw == "":
            return None
        try:
            v = int(raw)
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected an integer, got {raw!r}") from None
        if lo is not None and v < lo:
            raise ConfigError(f"[{sec}] {key}: must be >= {lo}, got {v}")
        return v

    def bool(self, sec, key):
        try:
            return self.cp.getboolean(sec, key)
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected true/false, got {self._get(sec, key)!r}") from None

    def floats(self, sec, key):
        raw = self._get(sec, key)
        try:
            vals = tuple(float(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected a comma separated list of numbers, got {raw!r}") from None
        if not vals:
            raise ConfigError(f"[{sec}] {key}: empty list")
        return vals

    def str(self, sec, key):
        return self._get(sec, key)


def _build(cp: configparser.ConfigParser) -> ExperimentConfig:
    r = _Reader(cp)
    dim = r.int("grid", "dim")
    if dim not in (1, 2):
        raise ConfigError(f"[grid] dim: must be 1 or 2, got {dim}")
    nx = r.int("grid", "nx", lo=8)
    if nx % 2:
        raise ConfigError(f"[grid] nx: must be even, got {nx}")
    grid = TorusGrid(dim, nx)
    time = TimeGrid(r.float("grid", "horizon", lo=0, lo_open=True), r.int("grid", "nt", lo=16))

    try:
        prior = PriorConfig(
            alpha=r.float("prior", "alpha"),
            theta_min=r.float("prior", "theta_min"),
            theta_max=r.float("prior", "theta_max"),
            mode_cutoff=r.int("prior", "mode_cutoff", lo=1, optional=True),
        )
        prior.n_modes(grid)
    except ValueError as exc:
        raise ConfigError(f"[prior] {exc}") from None
    try:
        reg = RegularityParams(r.float("regularity", "beta"), prior.alpha, r.float("regularity", "xi"), dim)
    except ValueError as exc:
        raise ConfigError(f"[regularity] {exc}") from None

    theta0 = r.float("problem", "theta0")
    if not prior.theta_min < theta0 < prior.theta_max:
        raise ConfigError(f"[problem] theta0: must lie inside ({prior.theta_min}, {prior.theta_max}), got {theta0}")
    try:
        link = LinkFunction(r.float("problem", "f_min"))
    except ValueError as exc:
        raise ConfigError(f"[problem] {exc}") from None
    F0_expr = r.str("problem", "F0")
    u0_expr = r.str("problem", "u0")
    trig_field(F0_expr, grid)
    u0 = trig_field(u0_expr, grid)
    if np.min(u0.values) <= 0:
        raise ConfigError(f"[problem] u0: must be strictly positive on the grid (min {np.min(u0.values):.3g})")

    try:
        sampler = SamplerConfig(
            pcn_step=r.float("sampler", "pcn_step"),
            theta_step=r.float("sampler", "theta_step"),
            burn_in=r.int("sampler", "burn_in", lo=0),
            n_samples=r.int("sampler", "n_samples", lo=1),
            thin=r.int("sampler", "thin", lo=1),
            adapt=r.bool("sampler", "adapt"),
            n_chains=r.int("sampler", "chains", lo=1),
            seed=r.int("experiment", "seed", lo=0),
            record_modes=r.int("sampler", "record_modes", lo=1),
            init=r.str("sampler", "init"),
        )
    except ValueError as exc:
        raise ConfigError(f"[sampler] {exc}") from None

    n_grid = r.floats("experiment", "n_grid")
    if any(n < 1 for n in n_grid):
        raise ConfigError("[experiment] n_grid: noise levels must be >= 1")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError(f"[experiment] n_grid: must be strictly increasing, got {n_grid}")

    j_space = r.int("observation", "j_space", lo=1, optional=True)
    j_time = r.int("observation", "j_time", lo=1, optional=True)
    if j_space is not None and j_space > grid.size:
        raise ConfigError(f"[observation] j_space: at most {grid.size} spatial modes")
    if j_time is not None and j_time > time.steps + 1:
        raise ConfigError(f"[observation] j_time: at most {time.steps + 1} time modes")

    lan_n = r.floats("lan", "n_values")
    if any(n <= 0 for n in lan_n):
        raise ConfigError("[lan] n_values: must be positive")
    direction = r.str("lan", "direction")
    trig_field(direction, grid)
    scales = r.floats("stability", "scales")
    if any(s <= 0 for s in scales):
        raise ConfigError("[stability] scales: must be positive")
    fk_paths = r.int("fk", "n_paths", lo=1000)
    antithetic = r.bool("fk", "antithetic")
    if antithetic and fk_paths % 2:
        raise ConfigError("[fk] n_paths: must be even with antithetic sampling")

    return ExperimentConfig(
        grid=grid,
        time=time,
        theta0=theta0,
        F0_expr=F0_expr,
        u0_expr=u0_expr,
        link=link,
        prior=prior,
        regularity=reg,
        sampler=sampler,
        obs_n=r.float("observation", "n", lo=1),
        j_space=j_space,
        j_time=j_time,
        n_grid=n_grid,
        replicates=r.int("experiment", "replicates", lo=1),
        seed=sampler.seed,
        output_dir=r.str("experiment", "output_dir"),
        info=InfoSettings(
            r.float("info", "cg_tol", lo=0, lo_open=True),
            r.int("info", "max_iters", lo=1),
            r.bool("info", "precondition"),
            r.float("info", "identifiability_tol", lo=0, lo_open=True),
        ),
        fk=FKSettings(fk_paths, r.int("fk", "steps", lo=1), r.int("fk", "probes", lo=1), antithetic),
        lan=LanSettings(r.float("lan", "s"), lan_n, direction),
        stability=StabilitySettings(scales, r.int("stability", "directions", lo=1)),
        raw={s: dict(cp[s]) for s in cp.sections()},
    )


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read defaults, then ``path`` (an INI file or a JSON result manifest), then overrides."""
    cp = _default_parser()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        if p.suffix == ".json":
            try:
                manifest = json.loads(p.read_text())
                _merge(cp, manifest["config"], str(p))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ConfigError(f"{p}: not a result manifest ({exc})") from None
        else:
            user = configparser.ConfigParser(interpolation=None)
            user.optionxform = str
            try:
                user.read_string(p.read_text(), source=str(p))
            except configparser.Error as exc:
                raise ConfigError(f"{p}: {exc}") from None
            _merge(cp, user, str(p))
    if overrides:
        _merge(cp, overrides, "overrides")
    return _build(cp)


def config_from_dict(d: dict) -> ExperimentConfig:
    return load_config(None, d)


def default_config() -> ExperimentConfig:
    return load_config()


def settings_dict(obj) -> dict:
    return asdict(obj)
