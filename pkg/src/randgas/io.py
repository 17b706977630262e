"""Config loading and reproducible output files.

Every text output starts with comment lines naming the package version and
the sha256 digest of the canonicalised config, so outputs can be traced back
to the run that made them. A manifest.json lists each file with its digest.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import subprocess
from pathlib import Path

import numpy as np
import yaml


class ConfigError(ValueError):
    """Unreadable or invalid configuration (CLI exit code 2)."""


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def version_string() -> str:
    """git-describe output when run from a checkout, else the package version."""
    from . import __version__

    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def header_lines(digest: str, extra=()) -> list[str]:
    from . import __version__

    lines = [f"randgas {__version__}", f"config-sha256 {digest}"]
    lines.extend(extra)
    return [f"# {s}" for s in lines]


def write_table(path, columns, data, digest, extra_header=(), fmt="%.17g"):
    """Comma-separated table with commented header. data is (n_rows, n_cols)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.size == 0:
        data = np.empty((0, len(columns)))
    with open(path, "w") as fh:
        for line in header_lines(digest, extra_header):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt=fmt)
    return Path(path)


def read_table(path):
    """(columns, array) from a file written by write_table."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no header row")
    cols = lines[0].strip().split(",")
    if len(lines) == 1:
        return cols, np.empty((0, len(cols)))
    arr = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return cols, arr


def write_json(path, obj, digest=None):
    payload = dict(obj)
    if digest is not None:
        from . import __version__

        payload = {"randgas_version": __version__, "config_sha256": digest, **payload}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return Path(path)


def write_jsonl(path, lines, digest):
    with open(path, "w") as fh:
        for line in header_lines(digest):
            fh.write(line + "\n")
        for ln in lines:
            fh.write(ln + "\n")
    return Path(path)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def now_iso():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Collects output files; write() records each with its sha256 digest."""

    def __init__(self, command, config_path, seed, output_dir, config):
        self.command = command
        self.config_path = str(config_path) if config_path is not None else None
        self.seed = seed
        self.output_dir = Path(output_dir)
        self.config = config
        self.digest = config_digest(config)
        self.started = now_iso()
        self.files: list[Path] = []

    def add(self, path):
        self.files.append(Path(path))
        return Path(path)

    def write(self, status="ok", extra=None):
        entries = {os.path.relpath(p, self.output_dir): file_digest(p) for p in self.files}
        doc = {
            "command": self.command,
            "config_path": self.config_path,
            "config_sha256": self.digest,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "version": version_string(),
            "started": self.started,
            "finished": now_iso(),
            "status": status,
            "files": entries,
        }
        if extra:
            doc.update(extra)
        path = self.output_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path
