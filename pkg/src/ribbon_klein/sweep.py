"""Run configuration, parameter sweeps and CSV output."""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .barrier import BarrierSpec
from .device import Device
from .errors import ConfigError, NumericalFailure
from .observables import ThermalSpec, conductance
from .ribbon import DEFAULT_CONSTANTS, RibbonGeometry, enumerate_modes

log = logging.getLogger(__name__)

A0 = DEFAULT_CONSTANTS.a0
LEAD_MARGIN_ROWS = 5


@dataclass(frozen=True)
class RunConfig:
    """All knobs of one simulation. Lengths marked ``_a0`` are multiples of the lattice constant."""

    N: int = 198
    n_modes: int = 100
    delta_A: float = 2.0
    total_length_a0: float = 260.0
    D_a0: float = 60.0
    d_a0: float = 30.0
    V0_eV: float = 0.5
    theta_deg: float = 0.0
    eta_eV: float = 0.0
    E_min_eV: float = 0.0
    E_max_eV: float = 0.4
    E_steps: int = 400
    mu_eV: float = 0.05
    temperature_K: float = 0.0
    quad_pts_per_a0: int = 4
    workers: int = 0

    @property
    def theta(self) -> float:
        return math.radians(self.theta_deg)

    def energies(self) -> np.ndarray:
        return np.linspace(self.E_min_eV, self.E_max_eV, self.E_steps)

    def barrier(self) -> BarrierSpec:
        return BarrierSpec(V0=self.V0_eV, D=self.D_a0 * A0, d=self.d_a0 * A0, theta=self.theta)

    def geometry(self) -> RibbonGeometry:
        return RibbonGeometry.from_length(self.N, self.delta_A, self.total_length_a0 * A0)

    def thermal(self) -> ThermalSpec:
        return ThermalSpec(mu=self.mu_eV, temperature=self.temperature_K)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str, line: int | None):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        value = float(raw)
    except ValueError:
        raise ConfigError(f"cannot read {key} = {raw!r} as {kind}", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite", line)
    return value


def parse_config(text: str, validate: bool = True) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, missing keys keep defaults."""
    values = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key or not raw:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", lineno)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        values[key] = (_convert(key, raw, lineno), lineno)
    try:
        config = RunConfig(**{k: v for k, (v, _) in values.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if validate:
        validate_config(config, lines={k: ln for k, (_, ln) in values.items()})
    return config


def read_config(path: str | os.PathLike) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def validate_config(config: RunConfig, lines: dict[str, int] | None = None) -> None:
    """Raise ``ConfigError`` unless the configuration describes a solvable device."""
    lines = lines or {}

    def fail(key, message):
        raise ConfigError(message, lines.get(key))

    if config.N < 1:
        fail("N", "N must be >= 1")
    if not 1 <= config.n_modes <= config.N:
        fail("n_modes", f"n_modes must lie in [1, N={config.N}]")
    if config.delta_A <= 0:
        fail("delta_A", "delta_A must be > 0")
    if config.D_a0 < 0 or config.d_a0 < 0:
        fail("D_a0" if config.D_a0 < 0 else "d_a0", "barrier lengths must be >= 0")
    if not abs(config.theta_deg) < 90:
        fail("theta_deg", "|theta_deg| must be below 90")
    if config.eta_eV < 0:
        fail("eta_eV", "eta_eV must be >= 0")
    if config.E_steps < 2:
        fail("E_steps", "E_steps must be >= 2")
    if config.E_max_eV <= config.E_min_eV:
        fail("E_max_eV", "E_max_eV must exceed E_min_eV")
    if config.temperature_K < 0:
        fail("temperature_K", "temperature_K must be >= 0")
    if config.quad_pts_per_a0 < 2:
        fail("quad_pts_per_a0", "quad_pts_per_a0 must be >= 2")
    if config.workers < 0:
        fail("workers", "workers must be >= 0")
    M = int(round(config.total_length_a0 * A0 / config.delta_A))
    if M < 3:
        fail("total_length_a0", "device needs at least 3 grid rows")
    check_footprint(config)


def check_footprint(config: RunConfig) -> None:
    """The tilted barrier must leave ``LEAD_MARGIN_ROWS`` pristine rows next to each lead."""
    geom = config.geometry()
    reach = config.barrier().reach(geom)
    limit = geom.total_length / 2.0 - LEAD_MARGIN_ROWS * geom.delta
    if reach > limit:
        raise ConfigError(
            f"barrier reaches |y| = {reach:.2f} A but the device only allows {limit:.2f} A "
            f"with {LEAD_MARGIN_ROWS} pristine rows per lead; increase total_length_a0"
        )


def format_config(config: RunConfig) -> list[str]:
    """``key = value`` lines in field order; floats use ``repr`` so they parse back exactly."""
    return [f"{f.name} = {getattr(config, f.name)!r}" for f in fields(RunConfig)]


def config_from_csv_header(text: str) -> RunConfig:
    """Recover the configuration echoed in the comment header of an output CSV."""
    body = []
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        entry = line[1:].strip()
        if "=" in entry:
            body.append(entry)
    return parse_config("\n".join(body), validate=False)


# --- energy evaluation -----------------------------------------------------

_worker_device: Device | None = None


def build_device(config: RunConfig) -> Device:
    geom = config.geometry()
    space = enumerate_modes(config.N, config.n_modes, geom.constants)
    return Device(geom, space, config.barrier(), config.quad_pts_per_a0)


def _init_worker(config: RunConfig):
    global _worker_device
    threadpool_limits(1)
    _worker_device = build_device(config)


def _evaluate(device: Device, E: float, eta: float, with_ldos: bool):
    try:
        point = device.solve(E, eta, with_ldos=with_ldos)
    except NumericalFailure as exc:
        return E, None, None, str(exc)
    return E, point.transmission, point.ldos, None


def _evaluate_in_worker(args):
    return _evaluate(_worker_device, *args)


def resolve_workers(workers: int) -> int:
    return workers if workers > 0 else (os.cpu_count() or 1)


@dataclass
class SweepPoint:
    """Transmission (and optionally LDOS) over the energy grid for one parameter value."""

    config: RunConfig
    energies: np.ndarray
    transmission: np.ndarray
    ldos: np.ndarray | None
    errors: dict[int, str]

    @property
    def failed(self) -> bool:
        return bool(self.errors)

    def conductance(self) -> float | None:
        if self.failed:
            return None
        try:
            return conductance(self.energies, self.transmission, self.config.thermal())
        except ValueError:
            return None


def evaluate_energies(config: RunConfig, with_ldos: bool = False, workers: int | None = None) -> SweepPoint:
    """Solve every energy of ``config``; results are ordered by energy index.

    Energies are independent tasks. With more than one worker they run in a
    process pool whose workers each build the device once.
    """
    energies = config.energies()
    n_workers = resolve_workers(config.workers if workers is None else workers)
    tasks = [(float(E), config.eta_eV, with_ldos) for E in energies]
    if n_workers == 1:
        device = build_device(config)
        results = [_evaluate(device, *t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * n_workers))
        with ProcessPoolExecutor(n_workers, initializer=_init_worker, initargs=(config,)) as pool:
            results = list(pool.map(_evaluate_in_worker, tasks, chunksize=chunk))

    T = np.full(len(energies), np.nan)
    ldos = np.full((config.geometry().M, len(energies)), np.nan) if with_ldos else None
    errors = {}
    for j, (_, t, rho, err) in enumerate(results):
        if err is not None:
            errors[j] = err
            log.error("E = %.9g eV failed: %s", energies[j], err)
            continue
        T[j] = t
        if with_ldos:
            ldos[:, j] = rho
    return SweepPoint(config, energies, T, ldos, errors)


# --- CSV output --------------------------------------------------------------

ERROR_MARKER = "error"


def _header(config: RunConfig) -> list[str]:
    return [f"# ribbon-klein v{__version__}"] + [f"# {line}" for line in format_config(config)]


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _fmt_energy(value: float) -> str:
    return f"{value:.9g}"


def _write_lines(path: Path, lines: Iterable[str]) -> Path:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_transmission_csv(point: SweepPoint, path: str | os.PathLike) -> Path:
    rows = ["E_eV,T"]
    for j, E in enumerate(point.energies):
        value = ERROR_MARKER if j in point.errors else _fmt(point.transmission[j])
        rows.append(f"{_fmt_energy(E)},{value}")
    return _write_lines(Path(path), _header(point.config) + rows)


def write_ldos_csv(point: SweepPoint, path: str | os.PathLike) -> Path:
    rows = ["m," + ",".join(f"E={_fmt_energy(E)}" for E in point.energies)]
    for m, row in enumerate(point.ldos):
        cells = [ERROR_MARKER if j in point.errors else _fmt(v) for j, v in enumerate(row)]
        rows.append(f"{m}," + ",".join(cells))
    return _write_lines(Path(path), _header(point.config) + rows)


def write_ldos_row_csv(point: SweepPoint, m: int, path: str | os.PathLike) -> Path:
    rows = ["E_eV,ldos"]
    for j, E in enumerate(point.energies):
        value = ERROR_MARKER if j in point.errors else _fmt(point.ldos[m, j])
        rows.append(f"{_fmt_energy(E)},{value}")
    return _write_lines(Path(path), _header(point.config) + rows)


def write_csv(data: SweepPoint, path: str | os.PathLike, kind: str = "transmission") -> Path:
    """Write a transmission curve (``E_eV,T``) or an LDOS map (``m,E=...``)."""
    if kind == "transmission":
        return write_transmission_csv(data, path)
    if kind == "ldos":
        if data.ldos is None:
            raise ValueError("sweep point carries no LDOS")
        return write_ldos_csv(data, path)
    raise ValueError(f"unknown CSV kind {kind!r}")


# --- sweeps ------------------------------------------------------------------

SWEEP_KINDS = ("energy", "angle", "length", "broadening", "ldos")
SWEEP_FIELD = {"energy": "theta_deg", "angle": "theta_deg", "length": "D_a0", "broadening": "eta_eV", "ldos": "theta_deg"}
DEFAULT_VALUES = {
    "angle": (0.0, 15.0, 45.0),
    "length": (40.0, 60.0, 80.0),
    "broadening": (0.0, 1e-4, 1e-3, 1e-2),
}


@dataclass
class SweepResult:
    manifest: Path
    files: list[Path]
    points: list[SweepPoint]

    @property
    def failed(self) -> bool:
        return any(p.failed for p in self.points)


def _label(value: float) -> str:
    return format(value, "g").replace("-", "m").replace(".", "p")


def run_sweep(
    config: RunConfig,
    kind: str,
    out_dir: str | os.PathLike,
    values: Sequence[float] | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Run one of the sweep kinds and write its CSV files plus ``manifest.csv``.

    ``energy`` and ``ldos`` use the configuration as is. ``angle`` (degrees),
    ``length`` (multiples of a0) and ``broadening`` (eV) repeat the energy
    sweep for each entry of ``values``. ``length`` additionally records the
    LDOS at the barrier midpoint row; ``ldos`` records the full LDOS map.
    """
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")
    field_name = SWEEP_FIELD[kind]
    if kind in ("energy", "ldos"):
        if values is not None:
            raise ValueError(f"{kind} sweeps take no value list")
        values = [getattr(config, field_name)]
    else:
        values = list(DEFAULT_VALUES[kind] if values is None else values)
        if not values:
            raise ValueError("sweep value list must not be empty")

    point_configs = [config.replace(**{field_name: type(getattr(config, field_name))(v)}) for v in values]
    for pc in point_configs:
        validate_config(pc)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    points: list[SweepPoint] = []
    manifest = [f"{field_name},file,conductance_2e2_h"]
    for pc in point_configs:
        value = getattr(pc, field_name)
        with_ldos = kind in ("ldos", "length")
        point = evaluate_energies(pc, with_ldos=with_ldos, workers=workers)
        points.append(point)
        stem = "transmission" if kind in ("energy", "ldos") else f"transmission_{field_name}_{_label(value)}"
        path = write_transmission_csv(point, out / f"{stem}.csv")
        files.append(path)
        if kind == "ldos":
            files.append(write_ldos_csv(point, out / "ldos.csv"))
        elif kind == "length":
            mid = pc.geometry().M // 2
            files.append(write_ldos_row_csv(point, mid, out / f"ldos_mid_{field_name}_{_label(value)}.csv"))
        g = point.conductance()
        manifest.append(f"{value!r},{path.name},{'' if g is None else _fmt(g)}")
    manifest_path = _write_lines(out / "manifest.csv", _header(config) + manifest)
    return SweepResult(manifest_path, files, points)
