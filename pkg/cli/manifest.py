"""
Run manifests: what a command produced, with which config, and how long
each phase took. The manifest lists every file in the output directory,
itself included.
"""

import hashlib
import json
import sys
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.events import EventEmitter

SOFTWARE_VERSION = "1.0.0"
MANIFEST_NAME = "manifest.json"


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    output_dir: str
    software_version: str = SOFTWARE_VERSION
    phase_seconds: Dict[str, float] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    checksums: Dict[str, str] = field(default_factory=dict)
    event_counts: Dict[str, int] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    emitter: Optional[EventEmitter] = field(default=None, repr=False, compare=False)

    @contextmanager
    def phase(self, name: str):
        """Time a phase; with an emitter attached, report its start and end as one step."""
        if self.emitter is not None:
            self.emitter.phase_start("manifest", name)
        start = time.perf_counter()
        try:
            yield
        finally:
            seconds = time.perf_counter() - start
            self.phase_seconds[name] = self.phase_seconds.get(name, 0.0) + seconds
            if self.emitter is not None:
                self.emitter.phase_complete("manifest", name, seconds)
                self.emitter.increment_step()

    def record_events(self):
        """Copy per-type event counts and warning descriptions from the attached emitter."""
        if self.emitter is None:
            return
        self.event_counts = self.emitter.get_event_summary()
        self.warnings = [event.description for event in self.emitter.get_warnings()]

    def add(self, path: str):
        rel = os.path.relpath(path, self.output_dir)
        if rel not in self.artifacts:
            self.artifacts.append(rel)

    def _scan(self) -> List[str]:
        found = []
        for root, _, files in os.walk(self.output_dir):
            for name in files:
                found.append(os.path.relpath(os.path.join(root, name), self.output_dir))
        return found

    def to_dict(self) -> Dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "software_version": self.software_version,
            "event_counts": dict(sorted(self.event_counts.items())),
            "warnings": list(self.warnings),
            "phase_seconds": dict(self.phase_seconds),
            "artifacts": sorted(self.artifacts),
            "checksums": dict(sorted(self.checksums.items())),
        }

    def write(self) -> str:
        """Record every file in the output directory and write the manifest there."""
        os.makedirs(self.output_dir, exist_ok=True)
        for rel in self._scan():
            if rel not in self.artifacts:
                self.artifacts.append(rel)
        self.add(os.path.join(self.output_dir, MANIFEST_NAME))
        self.checksums = {rel: file_sha256(os.path.join(self.output_dir, rel))
                          for rel in self.artifacts if rel != MANIFEST_NAME
                          and os.path.exists(os.path.join(self.output_dir, rel))}
        path = os.path.join(self.output_dir, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path


def load_manifest(output_dir: str) -> Optional[Dict]:
    path = os.path.join(output_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)
