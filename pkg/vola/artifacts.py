"""
CSV artifacts with a metadata comment line.

Every file starts with `# seed=..., config_hash=sha256:..., version=...`
followed by a pandas-written CSV body. Files are written through a temporary
sibling and os.replace, and an ArtifactWriter removes everything it wrote when
the run fails.
"""

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Tuple, Union

import pandas as pd

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "vola-rl/1"
FLOAT_FORMAT = "%.17g"


def config_hash(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


def metadata_line(metadata: Dict) -> str:
    fields = {"version": ARTIFACT_VERSION, **metadata}
    return "# " + ", ".join(f"{key}={value}" for key, value in fields.items())


def _atomic_write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(frame: pd.DataFrame, path: Union[str, Path], metadata: Dict) -> Path:
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return _atomic_write(Path(path), metadata_line(metadata) + "\n" + body)


def read_csv(path: Union[str, Path]) -> Tuple[Dict[str, str], pd.DataFrame]:
    """Metadata fields and the CSV body of an artifact"""
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        first = f.readline()
    metadata: Dict[str, str] = {}
    skip = 0
    if first.startswith("#"):
        skip = 1
        for field in first[1:].strip().split(", "):
            key, _, value = field.partition("=")
            metadata[key.strip()] = value.strip()
    return metadata, pd.read_csv(path, skiprows=skip)


class ArtifactWriter:
    """Writes the artifacts of one run under `out_dir` and removes them all if the run fails"""

    def __init__(self, out_dir: Union[str, Path], metadata: Dict):
        self.out_dir = Path(out_dir)
        self.metadata = dict(metadata)
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = write_csv(frame, self.path(name), self.metadata)
        self.written.append(path)
        logger.info("wrote %s (%d rows)", path, len(frame))
        return path

    def track(self, path: Union[str, Path]) -> Path:
        """Register a file written by other code (checkpoints) for cleanup"""
        path = Path(path)
        self.written.append(path)
        return path

    def cleanup(self) -> None:
        for path in reversed(self.written):
            try:
                path.unlink()
                logger.info("removed partial artifact %s", path)
            except FileNotFoundError:
                pass
        self.written.clear()

    def __enter__(self) -> "ArtifactWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            self.cleanup()
        return False
