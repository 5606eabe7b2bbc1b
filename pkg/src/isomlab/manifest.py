"""Run manifests: every output table is tied to (command, config, seed).

Two runs with equal command, config digest, and master seed produce
byte-identical result tables; the manifest file is append-only JSON
lines so successive runs in the same directory never rewrite history.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

from . import __version__


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int
    workers: int = 1
    version: str = __version__
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.time)

    @property
    def run_id(self) -> str:
        return "%s-%s-%d" % (self.command, self.config_digest, self.seed)

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def finish(self) -> None:
        self.wall_time = time.time() - self.started


def append_manifest(path, manifest: RunManifest) -> None:
    rec = asdict(manifest)
    rec["run_id"] = manifest.run_id
    with open(path, "a") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifests(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
