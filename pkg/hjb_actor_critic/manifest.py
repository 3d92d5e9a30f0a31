"""Run manifests: enough information to reproduce every CSV written by a command."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from hjb_actor_critic import __version__
from hjb_actor_critic.errors import ConfigurationError

logger = logging.getLogger(__name__)

MANIFEST_FILENAME = "manifest.json"
MANIFEST_FORMAT_VERSION = 1

# Bumped whenever a column is added, removed or reordered in a CSV output.
CSV_SCHEMA_VERSION = 1


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Record of one command invocation.

    ``options`` holds the parsed command options, so ``hjbac replay`` can run the same
    command again. ``config`` is the fully resolved configuration that was used.
    """

    command: str
    options: Dict[str, Any]
    config: Dict[str, Any]
    seed: Optional[int]
    out_dir: str
    version: str = __version__
    csv_schema_version: int = CSV_SCHEMA_VERSION
    outputs: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    exit_code: Optional[int] = None
    format_version: int = MANIFEST_FORMAT_VERSION

    def finish(self, exit_code: int, outputs=None, **summary):
        """Stamp the finish time, exit code, the files written and any headline numbers."""
        self.finished_at = _now()
        self.exit_code = exit_code
        # JSON has no NaN; unavailable numbers are stored as null.
        self.summary.update(
            {key: None if isinstance(value, float) and math.isnan(value) else value for key, value in summary.items()}
        )
        if outputs is not None:
            self.outputs = sorted(str(output) for output in outputs)

    def write(self, out_dir=None) -> Path:
        """Write manifest.json into the output directory and return its path."""
        path = Path(out_dir or self.out_dir) / MANIFEST_FILENAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="UTF-8")
        logger.debug("Wrote manifest %s", path)
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        """Read a manifest file, or the manifest.json inside a directory.

        Raises:
            ConfigurationError: when the file is missing, unreadable or of another format version.
        """
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_FILENAME
        try:
            document = json.loads(path.read_text(encoding="UTF-8"))
        except (OSError, ValueError) as ex:
            raise ConfigurationError(f"cannot read manifest {path}: {ex}") from ex
        if document.get("format_version") != MANIFEST_FORMAT_VERSION:
            raise ConfigurationError(f"unsupported manifest format version {document.get('format_version')!r}")
        if document.get("csv_schema_version") != CSV_SCHEMA_VERSION:
            logger.warning(
                "Manifest %s was written with CSV schema %s, this version writes %s",
                path,
                document.get("csv_schema_version"),
                CSV_SCHEMA_VERSION,
            )
        try:
            return cls(**document)
        except TypeError as ex:
            raise ConfigurationError(f"malformed manifest {path}: {ex}") from ex
