"""CSV logs and the flat ``key = value`` configuration file.

Floats are written with ``repr`` so a write/parse round trip is exact.
"""

from __future__ import annotations

import configparser
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingDataError, ParseError
from .models import GpsFix, ImuSample, NoiseSpec, SensorGeometry

IMU_HEADER = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
GPS_HEADER = ["t", "p1x", "p1y", "p1z", "v1", "p2x", "p2y", "p2z", "v2"]
TRUTH_HEADER = ["t", "qx", "qy", "qz", "qw", "rx", "ry", "rz", "vx", "vy", "vz", "bx", "by", "bz"]
EPOCH_HEADER = (
    ["t", "qx", "qy", "qz", "qw", "rx", "ry", "rz", "vx", "vy", "vz", "bx", "by", "bz"]
    + [f"res{i}" for i in range(1, 7)]
    + ["trace_P"]
    + [f"R{i}{i}" for i in range(1, 7)]
    + ["theta", "rank", "valid1", "valid2", "att_err", "pos_err", "vel_err", "bias_err", "nees"]
)


def _fmt(x) -> str:
    return repr(float(x))


def _open_for_read(path):
    path = Path(path)
    if not path.is_file():
        raise MissingDataError(f"no such file: {path}")
    return path, path.open("r", encoding="utf-8", newline="")


def _write_rows(path, header, rows):
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path, header):
    """Yield ``(line_number, floats)`` for every data row after checking the header."""
    path, fh = _open_for_read(path)
    with fh:
        reader = csv.reader(fh)
        try:
            got = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ParseError("file is empty", path, 1) from None
        for i, want in enumerate(header):
            if i >= len(got) or got[i] != want:
                found = got[i] if i < len(got) else "<missing>"
                raise ParseError(f"header column {i + 1} should be {want!r}, found {found!r}", path, 1)
        if len(got) > len(header):
            raise ParseError(f"unexpected extra header column {got[len(header)]!r}", path, 1)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, line)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"malformed number: {exc}", path, line) from None
            rows.append((line, vals))
    return path, rows


def _check_time(path, line, t, t_prev):
    if not np.isfinite(t):
        raise ParseError("timestamp is not finite", path, line)
    if t_prev is not None and t <= t_prev:
        raise ParseError(f"timestamps must increase strictly ({t!r} after {t_prev!r})", path, line)


def parse_imu_log(path) -> list[ImuSample]:
    path, rows = _read_rows(path, IMU_HEADER)
    out = []
    t_prev = None
    for line, v in rows:
        _check_time(path, line, v[0], t_prev)
        if not all(np.isfinite(v[1:])):
            raise ParseError("IMU values must be finite", path, line)
        out.append(ImuSample(v[0], v[1:4], v[4:7]))
        t_prev = v[0]
    return out


def _flag(path, line, x, name):
    if x not in (0.0, 1.0):
        raise ParseError(f"{name} must be 0 or 1, got {x!r}", path, line)
    return x == 1.0


def parse_gps_log(path) -> list[GpsFix]:
    path, rows = _read_rows(path, GPS_HEADER)
    out = []
    t_prev = None
    for line, v in rows:
        _check_time(path, line, v[0], t_prev)
        v1 = _flag(path, line, v[4], "v1")
        v2 = _flag(path, line, v[8], "v2")
        # positions of an invalid antenna are ignored
        p1 = np.array(v[1:4]) if v1 else np.full(3, np.nan)
        p2 = np.array(v[5:8]) if v2 else np.full(3, np.nan)
        if (v1 and not np.all(np.isfinite(p1))) or (v2 and not np.all(np.isfinite(p2))):
            raise ParseError("valid antenna position is not finite", path, line)
        out.append(GpsFix(v[0], p1, p2, v1, v2))
        t_prev = v[0]
    return out


def write_imu_log(path, samples) -> None:
    _write_rows(path, IMU_HEADER, ([_fmt(s.t), *map(_fmt, s.u_g), *map(_fmt, s.u_a)] for s in samples))


def write_gps_log(path, fixes) -> None:
    def row(f):
        p1 = f.p1 if f.valid1 else np.zeros(3)
        p2 = f.p2 if f.valid2 else np.zeros(3)
        return [_fmt(f.t), *map(_fmt, p1), str(int(f.valid1)), *map(_fmt, p2), str(int(f.valid2))]

    _write_rows(path, GPS_HEADER, (row(f) for f in fixes))


@dataclass
class TruthLog:
    t: np.ndarray
    q: np.ndarray
    r: np.ndarray
    v: np.ndarray
    b: np.ndarray


def write_truth_log(path, truth, bias_true) -> None:
    b = [_fmt(x) for x in np.broadcast_to(np.asarray(bias_true, dtype=float), 3)]
    _write_rows(
        path,
        TRUTH_HEADER,
        (
            [_fmt(truth.t[i]), *map(_fmt, truth.q[i]), *map(_fmt, truth.r[i]), *map(_fmt, truth.v[i]), *b]
            for i in range(len(truth))
        ),
    )


def parse_truth_log(path) -> TruthLog:
    path, rows = _read_rows(path, TRUTH_HEADER)
    if not rows:
        raise ParseError("truth log has no rows", path)
    a = np.array([v for _, v in rows])
    return TruthLog(a[:, 0], a[:, 1:5], a[:, 5:8], a[:, 8:11], a[:, 11:14])


def write_epoch_log(path, epochs) -> None:
    def row(e):
        x = e.x
        vals = [e.t, *x.q, *x.r, *x.v, *x.b, *e.residual, e.trace_P, *e.R_diag, e.theta]
        tail = [e.att_err, e.pos_err, e.vel_err, e.bias_err, e.nees]
        return [*map(_fmt, vals), str(e.rank), str(int(e.valid1)), str(int(e.valid2)), *map(_fmt, tail)]

    _write_rows(path, EPOCH_HEADER, (row(e) for e in epochs))


def parse_epoch_log(path) -> dict[str, np.ndarray]:
    """Column name to array; the closure check for :func:`write_epoch_log`."""
    _, rows = _read_rows(path, EPOCH_HEADER)
    a = np.array([v for _, v in rows]).reshape(-1, len(EPOCH_HEADER))
    return {name: a[:, i] for i, name in enumerate(EPOCH_HEADER)}


def write_json(path, obj) -> None:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(f"not serializable: {type(o).__name__}")

    text = json.dumps(obj, indent=2, sort_keys=True, default=default)
    Path(path).write_text(text + "\n", encoding="utf-8")


# -- configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a config file can set. Unknown keys are rejected."""

    sigma_g: float = 1e-3
    sigma_a: float = 1e-2
    sigma_b: float = 1e-5
    e1: tuple = (0.5, 0.0, 0.0)
    e2: tuple = (-0.5, 0.0, 0.0)
    gravity: float = 9.81
    window_w: int = 30
    r_floor: float = 1e-6
    adapt: bool = True
    seed: int = 0
    r_init: float = 0.02**2
    min_adapt_samples: int = 30
    r_estimator: str = "residual"
    process_noise: str = "exact"
    imu_rate: float = 100.0
    gps_rate: float = 5.0
    gps_sigma: float = 0.02
    trajectory: str = "figure8"
    duration: float = 120.0
    bias: tuple = (0.01, 0.01, 0.01)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.sigma_g, self.sigma_a, self.sigma_b)

    def geometry(self) -> SensorGeometry:
        return SensorGeometry(np.array(self.e1), np.array(self.e2), np.array([0.0, 0.0, self.gravity]))


_FIELD_TYPES = {
    "sigma_g": float,
    "sigma_a": float,
    "sigma_b": float,
    "e1": "vec3",
    "e2": "vec3",
    "gravity": float,
    "window_w": int,
    "r_floor": float,
    "adapt": bool,
    "seed": int,
    "r_init": float,
    "min_adapt_samples": int,
    "r_estimator": str,
    "process_noise": str,
    "imu_rate": float,
    "gps_rate": float,
    "gps_sigma": float,
    "trajectory": str,
    "duration": float,
    "bias": "vec3",
}

_SECTION = "config"


def _convert(path, key, raw, kind, parser):
    try:
        if kind == "vec3":
            parts = [p for p in raw.replace(",", " ").split() if p]
            if len(parts) != 3:
                raise ValueError(f"expected 3 components, got {len(parts)}")
            return tuple(float(p) for p in parts)
        if kind is bool:
            return parser.getboolean(_SECTION, key)
        return kind(raw)
    except ValueError as exc:
        raise ParseError(f"bad value for {key!r}: {exc}", path) from None


def load_config(path) -> RunConfig:
    """Read a flat ``key = value`` file (``#`` comments, no sections)."""
    path, fh = _open_for_read(path)
    with fh:
        text = fh.read()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(f"[{_SECTION}]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ParseError(str(exc).splitlines()[0], path) from None
    cfg = RunConfig()
    for key, raw in parser.items(_SECTION):
        if key not in _FIELD_TYPES:
            raise ParseError(f"unknown config key {key!r}", path)
        setattr(cfg, key, _convert(path, key, raw, _FIELD_TYPES[key], parser))
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, kind in _FIELD_TYPES.items():
        val = getattr(cfg, key)
        if kind == "vec3":
            val = ", ".join(repr(float(x)) for x in val)
        elif kind is bool:
            val = "true" if val else "false"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
