"""
JSON run configuration: parsing, validation and construction of model objects.

Everything is validated before any solve so that a bad configuration never
leaves partial outputs behind.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import EigenBasis, OperatorSpec, SpatialGrid, dirichlet_laplacian_basis, solve_operator_eigenproblem
from .errors import ValidationError
from .galerkin import Forcing, Perturbation, TimeGrid
from .io import read_matrix_csv
from .periodic import DEFAULT_MU_TARGET

SCHEMA_VERSION = 1
THREADS_ENV = "PERIPARAB_THREADS"


def _section(raw: dict, name: str, default=None) -> dict:
    val = raw.get(name, default if default is not None else {})
    if not isinstance(val, dict):
        raise ValidationError(f"config section '{name}' must be an object")
    return val


def _number(d: dict, key: str, default=None, *, positive=False, integer=False, minimum=None):
    if key not in d or d[key] is None:
        if default is None:
            raise ValidationError(f"missing required config value '{key}'")
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"config value '{key}' must be a number, got {val!r}")
    if integer and int(val) != val:
        raise ValidationError(f"config value '{key}' must be an integer")
    if not np.isfinite(val):
        raise ValidationError(f"config value '{key}' must be finite")
    if positive and val <= 0:
        raise ValidationError(f"config value '{key}' must be positive")
    if minimum is not None and val < minimum:
        raise ValidationError(f"config value '{key}' must be >= {minimum}")
    return int(val) if integer else float(val)


def _vector(val, name: str, length: int | None = None) -> np.ndarray:
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise ValidationError(f"'{name}' must be a list of numbers")
    arr = np.asarray(val, dtype=float)
    if length is not None and arr.size != length:
        raise ValidationError(f"'{name}' must have {length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"'{name}' has non-finite entries")
    return arr


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    seed: int
    length: float
    n_nodes: int
    basis_kind: str
    coefficients: dict
    lambda_floor: float
    horizon: float
    n_steps: int
    modes: int
    split_k: int | None
    mu_target: float
    k_max: int | None
    perturbation: dict
    forcing: dict
    solve: dict = field(default_factory=dict)
    identify: dict = field(default_factory=dict)
    example34: dict = field(default_factory=dict)

    # ---- builders -------------------------------------------------------------------------

    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.length, self.n_nodes)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.n_steps)

    def _coefficient(self, spec, grid: SpatialGrid, name: str) -> np.ndarray:
        if isinstance(spec, dict):
            return _vector(spec.get("table"), f"operator.{name}.table", grid.n_nodes)
        return np.full(grid.n_nodes, float(spec))

    def basis(self, grid: SpatialGrid | None = None) -> EigenBasis:
        grid = grid or self.grid()
        if self.basis_kind == "sine":
            return dirichlet_laplacian_basis(self.modes, grid, potential=float(self.coefficients["c"]))
        a, b, c = (self._coefficient(self.coefficients[n], grid, n) for n in "abc")
        return solve_operator_eigenproblem(OperatorSpec(a, b, c, self.lambda_floor), grid, self.modes)

    def _file_field(self, rel: str, grid: SpatialGrid, tg: TimeGrid, what: str) -> np.ndarray:
        path = self.resolve(rel)
        _, data = read_matrix_csv(path, header=False)
        if data.shape != (grid.n_nodes, tg.n_nodes):
            raise ValidationError(
                f"{what} file {path} must hold a {grid.n_nodes} x {tg.n_nodes} table, got {data.shape}"
            )
        return data

    def build_perturbation(self, spec: dict, grid: SpatialGrid, tg: TimeGrid) -> Perturbation:
        q = float(spec.get("q", 2.0))
        bound = float(spec.get("bound_M", np.inf))
        kind = spec.get("kind", "zero")
        if kind == "zero":
            return Perturbation.zero(grid, tg, q, bound)
        if kind == "constant":
            return Perturbation.constant(spec["value"], grid, tg, q, bound)
        if kind == "file":
            return Perturbation(self._file_field(spec["path"], grid, tg, "perturbation"), q, bound)
        raise ValidationError(f"unknown perturbation kind {kind!r}")

    def build_forcing(self, spec: dict, grid: SpatialGrid, tg: TimeGrid) -> Forcing:
        kind = spec.get("kind", "zero")
        if kind == "zero":
            return Forcing.zero(grid, tg)
        if kind == "constant":
            return Forcing(np.full((grid.n_nodes, tg.n_nodes), float(spec["value"])))
        if kind == "sine":
            k = int(spec["mode"])
            amp = float(spec.get("amplitude", 1.0))
            power = int(spec.get("time_power", 0))
            profile_x = np.sin(k * np.pi * grid.nodes / grid.length)
            profile_x[[0, -1]] = 0.0
            return Forcing.separable(amp * profile_x, tg.times**power)
        if kind == "separable":
            px = self._coefficient(spec["x"], grid, "forcing.x")
            t_spec = spec["t"]
            pt = (
                _vector(t_spec.get("table"), "forcing.t.table", tg.n_nodes)
                if isinstance(t_spec, dict)
                else np.full(tg.n_nodes, float(t_spec))
            )
            return Forcing.separable(px, pt)
        if kind == "file":
            return Forcing(self._file_field(spec["path"], grid, tg, "forcing"))
        raise ValidationError(f"unknown forcing kind {kind!r}")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


def _check_source(spec: dict, kinds: tuple, name: str, cfg_dir: Path):
    if not isinstance(spec, dict):
        raise ValidationError(f"'{name}' must be an object")
    kind = spec.get("kind", "zero")
    if kind not in kinds:
        raise ValidationError(f"'{name}.kind' must be one of {kinds}, got {kind!r}")
    if kind == "constant":
        _number(spec, "value")
    if kind == "file":
        path = spec.get("path")
        if not isinstance(path, str):
            raise ValidationError(f"'{name}.path' must be a string")
        full = Path(path) if Path(path).is_absolute() else cfg_dir / path
        if not full.is_file():
            raise ValidationError(f"file referenced by '{name}' does not exist: {full}")
    if kind == "sine":
        _number(spec, "mode", integer=True, minimum=1)
        _number(spec, "time_power", 0, integer=True, minimum=0)
        _number(spec, "amplitude", 1.0)


def _check_perturbation(spec: dict, name: str, cfg_dir: Path):
    _check_source(spec, ("zero", "constant", "file"), name, cfg_dir)
    _number(spec, "q", 2.0, minimum=1.5)
    if spec.get("bound_M") is not None:
        _number(spec, "bound_M", positive=True)


FORCING_KINDS = ("zero", "constant", "sine", "separable", "file")


def parse_config(raw: dict, base_dir: Path) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")

    grid = _section(raw, "grid")
    op = _section(raw, "operator")
    tm = _section(raw, "time")
    split = _section(raw, "split")

    basis_kind = op.get("basis", "fd")
    if basis_kind not in ("fd", "sine"):
        raise ValidationError("operator.basis must be 'fd' or 'sine'")
    coeffs = {n: op.get(n, 1.0 if n == "a" else 0.0) for n in "abc"}
    for n, v in coeffs.items():
        if isinstance(v, dict):
            if "table" not in v:
                raise ValidationError(f"operator.{n} must be a number or {{'table': [...]}}")
        elif isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"operator.{n} must be a number or a table")
    if basis_kind == "sine" and (coeffs["a"] != 1.0 or coeffs["b"] != 0.0 or isinstance(coeffs["c"], dict)):
        raise ValidationError("the analytic sine basis needs a = 1, b = 0 and a constant c")

    k = split.get("k", "auto")
    if k != "auto":
        k = _number(split, "k", integer=True, minimum=0)
    k_max = split.get("k_max")
    if k_max is not None:
        k_max = _number(split, "k_max", integer=True, minimum=0)
    mu_target = _number(split, "mu_target", DEFAULT_MU_TARGET, positive=True)
    if mu_target >= 1:
        raise ValidationError("split.mu_target must lie in (0, 1)")

    cfg = RunConfig(
        raw=raw,
        base_dir=base_dir,
        seed=_number(raw, "seed", 0, integer=True, minimum=0),
        length=_number(grid, "length", 1.0, positive=True),
        n_nodes=_number(grid, "n_nodes", 201, integer=True, minimum=3),
        basis_kind=basis_kind,
        coefficients=coeffs,
        lambda_floor=_number(op, "lambda_floor", 1e-12, positive=True),
        horizon=_number(tm, "horizon", 1.0, positive=True),
        n_steps=_number(tm, "n_steps", 200, integer=True, minimum=1),
        modes=_number(raw, "modes", 16, integer=True, minimum=1),
        split_k=None if k == "auto" else k,
        mu_target=mu_target,
        k_max=k_max,
        perturbation=_section(raw, "perturbation"),
        forcing=_section(raw, "forcing"),
        solve=_section(raw, "solve"),
        identify=_section(raw, "identify"),
        example34=_section(raw, "example34"),
    )
    if cfg.split_k is not None and cfg.split_k >= cfg.modes:
        raise ValidationError("split.k must be smaller than the number of modes")
    _check_perturbation(cfg.perturbation, "perturbation", base_dir)
    _check_source(cfg.forcing, FORCING_KINDS, "forcing", base_dir)

    s = cfg.solve
    if s.get("method", "fixed_point") not in ("fixed_point", "direct"):
        raise ValidationError("solve.method must be 'fixed_point' or 'direct'")
    _number(s, "tol", 1e-9, positive=True)
    _number(s, "max_iter", 500, integer=True, minimum=1)
    if s.get("head") is not None:
        _vector(s["head"], "solve.head")

    if cfg.identify:
        _check_identify(cfg.identify, base_dir)
    if cfg.example34:
        ex = cfg.example34
        _number(ex, "K", integer=True, minimum=1)
        if "forcing" in ex:
            _check_source(ex["forcing"], FORCING_KINDS, "example34.forcing", base_dir)
        if ex.get("head") is not None:
            _vector(ex["head"], "example34.head")
    return cfg


def _check_identify(idf: dict, base_dir: Path):
    win = _section(idf, "window", {"x_min": None})
    if win.get("x_min") is not None or win.get("x_max") is not None:
        _number(win, "x_min")
        _number(win, "x_max")
    for key in ("n_ex", "n_et"):
        _number(idf, key, 5, integer=True, minimum=1)
    _number(idf, "q", 2.0, minimum=1.5)
    _number(idf, "bound_M", 1.0, positive=True)
    _number(idf, "step", 1.0, positive=True)
    _number(idf, "max_iter", 50, integer=True, minimum=1)
    _number(idf, "fd_step", 1e-4, positive=True)
    _number(idf, "tol", 1e-14, positive=True)
    _number(idf, "tikhonov", 0.0, minimum=0)
    init = idf.get("initial_e", 0.0)
    if isinstance(init, list):
        _vector(init, "identify.initial_e")
    elif isinstance(init, bool) or not isinstance(init, (int, float)):
        raise ValidationError("identify.initial_e must be a number or a list")
    if idf.get("fixed_head") is not None:
        _vector(idf["fixed_head"], "identify.fixed_head")
    has_target = "target" in idf
    has_twin = "twin" in idf
    if has_target == has_twin:
        raise ValidationError("identify needs exactly one of 'target' (data file) or 'twin'")
    if has_target:
        path = _section(idf, "target").get("path")
        if not isinstance(path, str):
            raise ValidationError("identify.target.path must be a string")
        full = Path(path) if Path(path).is_absolute() else base_dir / path
        if not full.is_file():
            raise ValidationError(f"target data file does not exist: {full}")
    else:
        twin = _section(idf, "twin")
        _check_perturbation(twin.get("e", {"kind": "zero"}), "identify.twin.e", base_dir)
        if twin.get("head") is not None:
            _vector(twin["head"], "identify.twin.head")
        _number(twin, "noise", 0.0, minimum=0)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(raw, path.resolve().parent)


def worker_count() -> int:
    val = os.environ.get(THREADS_ENV)
    if not val:
        return 1
    try:
        n = int(val)
    except ValueError as exc:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {val!r}") from exc
    if n < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {val!r}")
    return n
