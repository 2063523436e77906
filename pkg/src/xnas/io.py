"""Deterministic CSV/JSON writers and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from . import __version__


class ConfigError(Exception):
    """Malformed or missing configuration."""


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # repr is the shortest string that round-trips; fold -0.0 into 0.0
        return repr(value + 0.0)
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def load_json_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must hold a JSON object")
    return data


class Manifest:
    def __init__(self, subcommand: str, config: dict, seed=None):
        self.subcommand = subcommand
        self.config = config
        self.seed = seed
        self.outputs: list[str] = []

    def identity(self) -> dict:
        return {"subcommand": self.subcommand, "config": self.config, "seed": self.seed, "version": __version__}

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.identity()).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {**self.identity(), "manifest_sha256": self.digest, "outputs": list(self.outputs)}


class OutputDir:
    """Collects outputs of one run; removes them all if the run fails."""

    def __init__(self, root, manifest: Manifest):
        self.root = Path(root)
        self.manifest = manifest
        self.written: list[Path] = []

    def __enter__(self):
        self.root.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.written:
                if p.exists():
                    p.unlink()
            return False
        self._write_text("manifest.json", json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n",
                         record=False)
        return False

    def _write_text(self, name: str, text: str, record: bool = True) -> Path:
        path = self.root / name
        tmp = path.with_name(path.name + ".tmp")
        self.written.append(tmp)
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
        self.written.append(path)
        if record:
            self.manifest.outputs.append(name)
        return path

    def csv(self, name: str, header, rows, comments=()) -> Path:
        lines = [f"# manifest_sha256={self.manifest.digest}"]
        lines += [f"# {c}" for c in comments]
        lines.append(",".join(header))
        lines += [",".join(fmt(v) for v in row) for row in rows]
        return self._write_text(name, "\n".join(lines) + "\n")

    def json(self, name: str, obj) -> Path:
        body = {"manifest_sha256": self.manifest.digest, **obj}
        return self._write_text(name, json.dumps(body, indent=2, sort_keys=True) + "\n")
