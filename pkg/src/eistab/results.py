"""Result persistence: CSV tables and the run manifest."""
from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> Path:
    """Header row, 17-significant-digit floats, UNIX line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float body of a file written by :func:`write_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, body


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    wall_clock_seconds: float = 0.0
    started: str = ""
    seeds: list = field(default_factory=list)  # [{"trial": .., "purpose": .., "key": ..}]
    checksums: dict = field(default_factory=dict)  # file name -> sha256
    exit_code: int = 0
    host: dict = field(default_factory=lambda: {"python": platform.python_version(),
                                                "numpy": np.__version__})

    def record_outputs(self, out_dir, names):
        out_dir = Path(out_dir)
        self.checksums = {name: sha256_file(out_dir / name) for name in sorted(names)}

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            data = json.load(fh)
        return cls(**data)

    def compare(self, out_dir) -> dict:
        """File name -> (expected, actual) for every checksum that differs."""
        out_dir = Path(out_dir)
        bad = {}
        for name, expected in self.checksums.items():
            target = out_dir / name
            actual = sha256_file(target) if target.exists() else None
            if actual != expected:
                bad[name] = (expected, actual)
        return bad
