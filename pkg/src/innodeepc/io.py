"""Plain-text serialization for trajectories, models, reports, and configs.

Everything here is deliberately boring: CSV with a header row for tabular
data, ``key = value`` lines for configuration, and commented block text for
matrices.  Floats are written with ``repr`` so every file round-trips to the
exact ``float64`` it came from.
"""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np

from .descriptor import DescriptorSystem
from .errors import InputError
from .varx import VarxModel

__all__ = [
    "load_config",
    "load_report_csv",
    "load_system",
    "load_trajectory",
    "load_varx",
    "save_config",
    "save_innovations",
    "save_rank_report",
    "save_report_csv",
    "save_system",
    "save_trajectory",
    "save_varx",
]


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        return header, list(reader)


# ---------------------------------------------------------------------------
# trajectories


def save_trajectory(path, u: np.ndarray, y: np.ndarray,
                    h: float | None = None) -> None:
    """Write an input/output record as CSV.

    Columns are ``k, u1..um, y1..yp``, with a ``t_seconds`` column inserted
    after ``k`` when the sampling period ``h`` is given.

    Args:
        path: Destination file.
        u: Inputs ``(T, m)``.
        y: Outputs ``(T, p)``.
        h: Optional sampling period used to emit wall-clock time stamps.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if u.shape[0] != y.shape[0]:
        raise InputError(
            f"u has {u.shape[0]} rows but y has {y.shape[0]}")
    m, p = u.shape[1], y.shape[1]
    header = ["k"]
    if h is not None:
        header.append("t_seconds")
    header += [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)]
    rows = []
    for k in range(u.shape[0]):
        row = [k]
        if h is not None:
            row.append(_fmt(k * h))
        row += [_fmt(v) for v in u[k]] + [_fmt(v) for v in y[k]]
        rows.append(row)
    _write_rows(path, header, rows)


def load_trajectory(path):
    """Read a trajectory CSV written by :func:`save_trajectory`.

    Returns:
        Tuple ``(u, y, t)`` where ``t`` is the time-stamp column or ``None``
        when the file has none.
    """
    header, rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: no data rows")
    has_t = len(header) > 1 and header[1] == "t_seconds"
    m = sum(1 for name in header if name.startswith("u"))
    p = sum(1 for name in header if name.startswith("y"))
    if m == 0 or p == 0:
        raise InputError(f"{path}: header {header} has no u/y columns")
    base = 2 if has_t else 1
    data = np.asarray([[float(v) for v in row] for row in rows])
    t = data[:, 1] if has_t else None
    return data[:, base:base + m], data[:, base + m:base + m + p], t


def save_innovations(path, e: np.ndarray, y_tilde: np.ndarray | None = None,
                     d: np.ndarray | None = None) -> None:
    """Write an innovation series (optionally with its companion splits).

    Columns: ``k, e1..ep`` plus ``ytilde1..p`` / ``d1..p`` for the stochastic
    output part and the deterministic feedthrough compensation when given.
    """
    e = np.atleast_2d(np.asarray(e, dtype=float))
    p = e.shape[1]
    header = ["k"] + [f"e{i + 1}" for i in range(p)]
    blocks = [e]
    for tag, arr in (("ytilde", y_tilde), ("d", d)):
        if arr is None:
            continue
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        if arr.shape != e.shape:
            raise InputError(f"{tag} shape {arr.shape} != e shape {e.shape}")
        header += [f"{tag}{i + 1}" for i in range(p)]
        blocks.append(arr)
    rows = [[k] + [_fmt(v) for b in blocks for v in b[k]]
            for k in range(e.shape[0])]
    _write_rows(path, header, rows)


# ---------------------------------------------------------------------------
# descriptor systems (plain-text matrix blocks)

_SYSTEM_BLOCKS = ("E", "A", "B", "C", "D", "Q_noise", "R_noise")


def save_system(path, sys: DescriptorSystem) -> None:
    """Write a descriptor system as commented plain text.

    The header records the dimensions ``n, m, p``; each matrix follows as a
    named block of row-major rows.
    """
    lines = [
        "# descriptor system: E x+ = A x + B u + w, y = C x + D u + v",
        "# blocks are row-major; Q_noise/R_noise are the noise covariances",
        f"n {sys.n}", f"m {sys.m}", f"p {sys.p}",
    ]
    for name in _SYSTEM_BLOCKS:
        M = np.atleast_2d(getattr(sys, name))
        lines.append(name)
        lines += [" ".join(_fmt(v) for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def load_system(path) -> DescriptorSystem:
    """Read a descriptor system written by :func:`save_system`."""
    dims: dict[str, int] = {}
    blocks: dict[str, list[list[float]]] = {}
    current: list[list[float]] | None = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] in ("n", "m", "p") and len(parts) == 2:
            dims[parts[0]] = int(parts[1])
        elif parts[0] in _SYSTEM_BLOCKS and len(parts) == 1:
            current = blocks.setdefault(parts[0], [])
        else:
            if current is None:
                raise InputError(f"{path}: data row before any block name")
            current.append([float(v) for v in parts])
    missing = [k for k in ("n", "m", "p") if k not in dims]
    missing += [b for b in _SYSTEM_BLOCKS if b not in blocks]
    if missing:
        raise InputError(f"{path}: missing {missing}")
    mats = {name: np.asarray(blocks[name]) for name in _SYSTEM_BLOCKS}
    return DescriptorSystem(
        E=mats["E"], A=mats["A"], B=mats["B"], C=mats["C"], D=mats["D"],
        Q_noise=mats["Q_noise"], R_noise=mats["R_noise"])


# ---------------------------------------------------------------------------
# fitted predictors


def save_varx(path, model: VarxModel) -> None:
    """Write a fitted lagged predictor: commented header plus theta rows."""
    lines = [
        "# lagged output predictor coefficients, one row per output channel",
        f"# ell {model.ell}",
        f"# anticipation {model.anticipation}",
        f"# m {model.m}",
        f"# p {model.p}",
        f"# ridge {_fmt(model.ridge)}",
        f"# n_samples {model.n_samples}",
        f"# residual_rms {_fmt(model.residual_rms)}",
    ]
    lines += [" ".join(_fmt(v) for v in row) for row in model.theta]
    Path(path).write_text("\n".join(lines) + "\n")


def load_varx(path) -> VarxModel:
    """Read a fitted predictor written by :func:`save_varx`."""
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
            continue
        rows.append([float(v) for v in line.split()])
    needed = ("ell", "anticipation", "m", "p", "ridge", "n_samples",
              "residual_rms")
    missing = [k for k in needed if k not in meta]
    if missing or not rows:
        raise InputError(f"{path}: missing {missing or 'theta rows'}")
    return VarxModel(
        theta=np.asarray(rows), ell=int(meta["ell"]),
        anticipation=int(meta["anticipation"]), m=int(meta["m"]),
        p=int(meta["p"]), ridge=float(meta["ridge"]),
        n_samples=int(meta["n_samples"]),
        residual_rms=float(meta["residual_rms"]))


# ---------------------------------------------------------------------------
# verification artifacts


def save_rank_report(path, report) -> None:
    """Write a pencil rank certificate as CSV.

    One row per sampled pencil point: ``lambda_real, lambda_imag, rank,
    expected_rank``.
    """
    header = ["lambda_real", "lambda_imag", "rank", "expected_rank"]
    rows = [[_fmt(lam.real), _fmt(lam.imag), int(rank), report.expected_rank]
            for lam, rank in zip(report.lambdas, report.ranks)]
    _write_rows(path, header, rows)


# ---------------------------------------------------------------------------
# experiment reports

_REPORT_PREFIXES = ("u", "y", "r", "yhat", "e")


def save_report_csv(path, report) -> None:
    """Write per-step closed-loop records for every controller in a report.

    Columns: ``controller, k, t, u1..um, y1..yp, r1..rp, yhat1..yhatp,
    e1..ep``.  One-step predictions only exist for the control region, so
    ``yhat`` is ``nan`` during warmup.
    """
    first = report.runs[0]
    m = first.u.shape[1]
    p = first.y.shape[1]
    header = ["controller", "k", "t"]
    for prefix, width in zip(_REPORT_PREFIXES, (m, p, p, p, p)):
        header += [f"{prefix}{i + 1}" for i in range(width)]
    rows = []
    for run in report.runs:
        n_steps = run.y.shape[0]
        yhat = np.full((n_steps, p), np.nan)
        yhat[report.warmup:] = run.y_pred
        for k in range(n_steps):
            row = [run.name, k, _fmt(k * report.h)]
            for arr in (run.u[k], run.y[k], run.references[k], yhat[k],
                        run.e_hat[k]):
                row += [_fmt(v) for v in arr]
            rows.append(row)
    _write_rows(path, header, rows)


def load_report_csv(path):
    """Read a report CSV back as ``{controller: {column: array}}``.

    Vector-valued columns come back stacked: ``out[name]["u"]`` has shape
    ``(n_steps, m)`` and so on for ``y``, ``r``, ``yhat``, ``e``; ``k`` and
    ``t`` are 1-D.
    """
    header, rows = _read_rows(path)
    if header[:3] != ["controller", "k", "t"]:
        raise InputError(f"{path}: unexpected header {header[:3]}")
    groups: dict[str, list[list[str]]] = {}
    for row in rows:
        groups.setdefault(row[0], []).append(row[1:])
    widths = {prefix: sum(1 for name in header[3:]
                          if name.rstrip("0123456789") == prefix)
              for prefix in _REPORT_PREFIXES}
    out = {}
    for name, recs in groups.items():
        data = np.asarray([[float(v) for v in rec] for rec in recs])
        cols = {"k": data[:, 0], "t": data[:, 1]}
        at = 2
        for prefix in _REPORT_PREFIXES:
            w = widths[prefix]
            cols[prefix] = data[:, at:at + w]
            at += w
        out[name] = cols
    return out


# ---------------------------------------------------------------------------
# experiment configuration files


def save_config(path, cfg) -> None:
    """Write an experiment configuration as flat ``key = value`` lines.

    Tuples become comma-separated lists; everything else is written with
    ``repr`` so the file reads back without loss.
    """
    lines = ["# experiment configuration"]
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = _fmt(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_like(text: str, default):
    """Parse ``text`` with the type of the field's default value."""
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low not in ("true", "false", "0", "1"):
            raise InputError(f"expected a boolean, got {text!r}")
        return low in ("true", "1")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        if not text:
            return ()
        elem = default[0] if default else 0.0
        cast = int if isinstance(elem, int) else float
        return tuple(cast(v) for v in text.split(","))
    return text


def load_config(path=None, overrides: dict | None = None,
                config_cls=None):
    """Build an experiment configuration from a file plus overrides.

    Args:
        path: Optional ``key = value`` file; unknown keys are rejected.
        overrides: Mapping applied on top of the file (command-line flags
            win over file values).  String values are parsed like file
            entries; already-typed values pass through.
        config_cls: Configuration dataclass; defaults to the microgrid
            experiment configuration.

    Returns:
        A validated configuration instance.
    """
    if config_cls is None:
        from .microgrid import ExperimentConfig
        config_cls = ExperimentConfig
    defaults = {f.name: f.default_factory() if callable(f.default_factory)
                else f.default for f in dataclasses.fields(config_cls)}
    values: dict = {}
    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, text = (part.strip() for part in line.split("=", 1))
            if key not in defaults:
                raise InputError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_like(text, defaults[key])
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise InputError(f"unknown configuration key {key!r}")
        values[key] = (_parse_like(value, defaults[key])
                       if isinstance(value, str) else value)
    return config_cls(**values)
