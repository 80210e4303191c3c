"""Dataset CSV files, run manifests and scenario config files."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import os
import re
import tempfile
import warnings
from importlib import resources

import numpy as np

from . import __version__
from .em import EmConfig
from .mcmc import McmcConfig, PriorSpec
from .model import ObservedDataset
from .simulation import METHODS, ScenarioConfig, preset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class DataFormatError(ValueError):
    """A dataset file does not follow the expected layout."""


class ConfigError(ValueError):
    """A scenario config file is invalid."""


_COL = re.compile(r"^([xz])(\d+)$")


def write_dataset_csv(path, data: ObservedDataset, y_true=None):
    """Write ``ystar, x1.., z1.. [, y_true]`` with round-trip float text."""
    header = ["ystar"] + [f"x{i}" for i in range(1, data.px + 1)] \
        + [f"z{i}" for i in range(1, data.pz + 1)]
    if y_true is not None:
        header.append("y_true")
    lines = [",".join(header)]
    X, Z = data.x_matrix[:, 1:], data.z_matrix[:, 1:]
    for i in range(data.n):
        cells = [str(int(data.ystar[i]))]
        cells += [repr(float(v)) for v in X[i]]
        cells += [repr(float(v)) for v in Z[i]]
        if y_true is not None:
            cells.append(str(int(y_true[i])))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset_csv(path):
    """Read a dataset CSV; returns ``(ObservedDataset, y_true or None)``.

    Rows with empty fields are dropped with a warning.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    if "ystar" not in header:
        raise DataFormatError(f"{path}: missing 'ystar' column")
    xs, zs = [], []
    for pos, name in enumerate(header):
        m = _COL.match(name)
        if m:
            (xs if m.group(1) == "x" else zs).append((int(m.group(2)), pos, name))
        elif name not in ("ystar", "y_true"):
            raise DataFormatError(f"{path}: unexpected column {name!r}")
    xs.sort()
    zs.sort()
    keep, dropped = [], 0
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(f"{path} line {lineno}: expected {len(header)} fields, "
                                  f"got {len(row)}")
        if any(not c.strip() for c in row):
            dropped += 1
            continue
        try:
            keep.append([float(c) for c in row])
        except ValueError as exc:
            raise DataFormatError(f"{path} line {lineno}: {exc}") from None
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing fields", stacklevel=2)
    if not keep:
        raise DataFormatError(f"{path}: no complete rows")
    arr = np.array(keep)
    ystar = arr[:, header.index("ystar")]
    if not np.all((ystar == 1) | (ystar == 2)):
        raise DataFormatError(f"{path}: ystar must be 1 or 2")
    x = arr[:, [p for _, p, _ in xs]] if xs else None
    z = arr[:, [p for _, p, _ in zs]] if zs else None
    data = ObservedDataset.from_arrays(ystar.astype(int), x, z,
                                       [nm for *_, nm in xs], [nm for *_, nm in zs])
    y_true = arr[:, header.index("y_true")].astype(int) if "y_true" in header else None
    return data, y_true


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(path, command, config, seed, outputs, started, elapsed):
    manifest = {
        "schema_version": "1.0",
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "software_version": __version__,
        "started_at": started.isoformat(timespec="seconds"),
        "wall_clock_seconds": round(float(elapsed), 3),
        "outputs": [os.path.abspath(p) for p in outputs],
    }
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    return manifest


def now():
    return _dt.datetime.now(_dt.timezone.utc)


def load_schema(name: str) -> dict:
    """Shipped JSON schema: ``fit_result``, ``study_report`` or ``manifest``."""
    text = resources.files("binmisclass").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


_SCENARIO_KEYS = {"name", "n_realizations", "n", "x_mean", "z_mean", "covariance",
                  "beta_true", "gamma1_true", "gamma2_true", "estimators", "seed", "base"}
_PRIOR_KEYS = {"family", "loc", "scale", "lower", "upper", "df"}
_EM_KEYS = {"max_iter", "loglik_tol", "param_tol", "init", "n_starts"}
_MCMC_KEYS = {"chains", "iterations", "burn_in", "thin", "adapt_window", "target_accept",
              "init_jitter"}


def _line_of(text, key, section=None):
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("["):
            current = s.strip("[] ")
            continue
        if current == section and re.match(rf"{re.escape(key)}\s*=", s):
            return lineno
    return None


def _fail(path, text, key, msg, section=None):
    lineno = _line_of(text, key, section)
    where = f"{path} line {lineno}" if lineno else str(path)
    label = f"{section}.{key}" if section else key
    raise ConfigError(f"{where}: field '{label}' {msg}")


def load_scenario_config(path) -> ScenarioConfig:
    """Read a TOML scenario file whose keys mirror :class:`ScenarioConfig`.

    An optional ``base = "setting2"`` starts from a preset; ``[prior]``,
    ``[em]`` and ``[mcmc]`` tables set the estimator options.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode()
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    sections = {"prior": _PRIOR_KEYS, "em": _EM_KEYS, "mcmc": _MCMC_KEYS}
    for key, value in cfg.items():
        if key in sections:
            if not isinstance(value, dict):
                _fail(path, text, key, "must be a table")
            for sub in value:
                if sub not in sections[key]:
                    _fail(path, text, sub, "is not a recognised option", key)
        elif key not in _SCENARIO_KEYS:
            _fail(path, text, key, "is not a recognised option")

    base = preset(cfg["base"]) if "base" in cfg else ScenarioConfig()
    changes = {}
    for key in ("n_realizations", "n", "seed"):
        if key in cfg:
            v = cfg[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "seed" else 1):
                _fail(path, text, key, "must be a positive integer" if key != "seed"
                      else "must be a nonnegative integer")
            changes[key] = v
    for key in ("x_mean", "z_mean", "covariance"):
        if key in cfg:
            if not isinstance(cfg[key], (int, float)) or isinstance(cfg[key], bool):
                _fail(path, text, key, "must be a number")
            changes[key] = float(cfg[key])
    if "covariance" in changes and not -1 < changes["covariance"] < 1:
        _fail(path, text, "covariance", "must lie strictly between -1 and 1")
    for key in ("beta_true", "gamma1_true", "gamma2_true"):
        if key in cfg:
            v = cfg[key]
            if (not isinstance(v, list) or len(v) != 2
                    or not all(isinstance(e, (int, float)) for e in v)):
                _fail(path, text, key, "must be a list of two numbers")
            changes[key] = tuple(float(e) for e in v)
    if "estimators" in cfg:
        v = cfg["estimators"]
        if not isinstance(v, list) or not v or any(e not in METHODS for e in v):
            _fail(path, text, "estimators", f"must be a non-empty list drawn from {list(METHODS)}")
        changes["estimators"] = tuple(v)
    if "name" in cfg:
        changes["name"] = str(cfg["name"])

    if "prior" in cfg:
        try:
            changes["prior"] = PriorSpec(**cfg["prior"])
        except (TypeError, ValueError) as exc:
            _fail(path, text, next(iter(cfg["prior"]), "family"), f"is invalid: {exc}", "prior")
    for sect, cls, attr in (("em", EmConfig, "em"), ("mcmc", McmcConfig, "mcmc")):
        if sect in cfg:
            try:
                changes[attr] = dataclasses.replace(getattr(base, attr), **cfg[sect])
            except (TypeError, ValueError) as exc:
                key = next(iter(cfg[sect]), sect)
                _fail(path, text, key, f"is invalid: {exc}", sect)
    try:
        return base.replace(**changes)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
