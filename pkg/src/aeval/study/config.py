"""Study-service configuration file handling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import DataError

DEFAULT_ADMIN_SECRET_ENV = "AEVAL_ADMIN_SECRET"


@dataclass(frozen=True)
class ServiceConfig:
    manifest_path: Path
    state_dir: Path
    host: str = "127.0.0.1"
    port: int = 8765
    admin_secret_env: str = DEFAULT_ADMIN_SECRET_ENV
    # None means: take the value from the manifest's settings block.
    trials_per_session: int | None = None
    midi_min: int | None = None
    midi_max: int | None = None
    screening_threshold: float | None = None
    static_dir: Path | None = None


def load_config(path) -> ServiceConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config is not valid JSON: {exc}") from exc
    if "manifest" not in doc:
        raise DataError("config must name a 'manifest' path")
    base = path.parent
    bind = str(doc.get("bind", "127.0.0.1:8765"))
    host, _, port_s = bind.rpartition(":")
    if not host or not port_s.isdigit():
        raise DataError(f"bind must look like host:port, got {bind!r}")
    static = doc.get("static_dir")
    return ServiceConfig(
        manifest_path=base / doc["manifest"],
        state_dir=base / doc.get("state_dir", "study-state"),
        host=host,
        port=int(port_s),
        admin_secret_env=str(doc.get("admin_secret_env", DEFAULT_ADMIN_SECRET_ENV)),
        trials_per_session=doc.get("trials_per_session"),
        midi_min=doc.get("midi_min"),
        midi_max=doc.get("midi_max"),
        screening_threshold=doc.get("screening_threshold"),
        static_dir=(base / static) if static else None,
    )
