"""Run manifest: every output file with its content hash, plus per-station status."""

import hashlib
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest:
    """Tracks station outcomes and output files of one run."""

    def __init__(self, output_dir: Path):
        """Initialize manifest.

        Args:
            output_dir: Run output directory; file entries are stored relative to it
        """
        self.output_dir = Path(output_dir)
        self.manifest_file = self.output_dir / MANIFEST_NAME
        self.stations: dict[str, dict] = {}
        self.files: dict[str, str] = {}

    def record_station(
        self, station_id: str, status: str, files: list[Path], error: str | None = None
    ) -> None:
        entry = {"status": status, "files": sorted(self._relative(p) for p in files)}
        if error is not None:
            entry["error"] = error
        self.stations[station_id] = entry
        for path in files:
            self.add_file(path)

    def add_file(self, path: Path) -> None:
        self.files[self._relative(path)] = file_sha256(Path(path))

    def _relative(self, path: Path) -> str:
        path = Path(path)
        try:
            return path.relative_to(self.output_dir).as_posix()
        except ValueError:
            return path.as_posix()

    @property
    def succeeded(self) -> list[str]:
        return sorted(s for s, e in self.stations.items() if e["status"] == "ok")

    @property
    def failed(self) -> list[str]:
        return sorted(s for s, e in self.stations.items() if e["status"] != "ok")

    def to_dict(self) -> dict:
        return {
            "stations": {k: self.stations[k] for k in sorted(self.stations)},
            "files": [{"path": k, "sha256": self.files[k]} for k in sorted(self.files)],
            "counts": {"ok": len(self.succeeded), "failed": len(self.failed)},
        }

    def save(self) -> Path:
        """Write the manifest; it lists every recorded file except itself."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        with open(self.manifest_file, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(
            f"Saved manifest: {len(self.succeeded)} stations ok, {len(self.failed)} failed, "
            f"{len(self.files)} files"
        )
        return self.manifest_file

    @classmethod
    def load(cls, manifest_file: Path) -> "RunManifest":
        """Read a saved manifest; a missing or corrupt file yields an empty one."""
        manifest = cls(Path(manifest_file).parent)
        if not manifest.manifest_file.exists():
            return manifest
        try:
            with open(manifest.manifest_file, encoding="utf-8") as f:
                data = json.load(f)
            manifest.stations = data.get("stations", {})
            manifest.files = {e["path"]: e["sha256"] for e in data.get("files", [])}
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            logger.error(f"Error loading manifest {manifest.manifest_file}: {e}")
        return manifest

    def diff(self, previous: "RunManifest") -> dict[str, list[str]]:
        """Files added, changed or no longer written compared with an earlier manifest."""
        return {
            "added": sorted(set(self.files) - set(previous.files)),
            "changed": sorted(
                p for p in self.files if p in previous.files and previous.files[p] != self.files[p]
            ),
            "stale": sorted(set(previous.files) - set(self.files)),
        }
