from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from typing import Any, Dict, List, Optional

from util.utils import to_json, write_text

PACKAGE_NAME = 'ehsim'


def tool_version() -> str:
    try:
        return version(PACKAGE_NAME)
    except PackageNotFoundError:
        return '0.0.0+local'


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


@dataclass
class RunManifest:
    """Provenance written next to every command's outputs."""

    command: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    tool_version: str = field(default_factory=tool_version)
    started_at: str = field(default_factory=utc_now)
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)

    def add_output(self, file_path: str) -> None:
        self.outputs.append(file_path)

    def finish(self, file_path: str) -> None:
        self.finished_at = utc_now()
        write_text(file_path, to_json(asdict(self)))
