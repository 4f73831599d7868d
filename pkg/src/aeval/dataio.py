"""File formats shared across the workbench.

AEMB is the binary container for embedding and probability matrices:

    magic "AEMB" | version u32 LE | kind u8 (0 embedding, 1 probability)
    | rows u64 LE | cols u64 LE | float32 LE row-major payload

CSV with a "c0,c1,..." header is accepted as an alternate matrix input.
The study manifest is a JSON document describing the stimulus corpus.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .metrics import EmbeddingSet, ProbabilityMatrix

AEMB_MAGIC = b"AEMB"
AEMB_VERSION = 1
KIND_EMBEDDING = 0
KIND_PROBABILITY = 1
_HEADER = struct.Struct("<4sIBQQ")


def write_embedding_file(matrix, kind: str, path) -> None:
    """Write a matrix as AEMB. kind is "embedding" or "probability"."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DataError("matrix must be non-empty and 2-D")
    if not np.all(np.isfinite(m)):
        raise DataError("refusing to write non-finite values")
    if kind == "embedding":
        kind_byte = KIND_EMBEDDING
    elif kind == "probability":
        kind_byte = KIND_PROBABILITY
        ProbabilityMatrix(m)  # row-stochastic check before touching disk
    else:
        raise DataError(f"unknown kind {kind!r}")
    payload = m.astype("<f4").tobytes(order="C")
    header = _HEADER.pack(AEMB_MAGIC, AEMB_VERSION, kind_byte, m.shape[0], m.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_embedding_file(path):
    """Read an AEMB file. Returns an EmbeddingSet or a ProbabilityMatrix."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != AEMB_MAGIC:
        raise DataError(f"not an AEMB file: {path}")
    magic, version, kind_byte, rows, cols = _HEADER.unpack_from(raw)
    if version != AEMB_VERSION:
        raise DataError(f"unsupported AEMB version {version} in {path}")
    if kind_byte not in (KIND_EMBEDDING, KIND_PROBABILITY):
        raise DataError(f"unknown AEMB kind byte {kind_byte} in {path}")
    expect = rows * cols * 4
    payload = raw[_HEADER.size:]
    if rows < 1 or cols < 1 or len(payload) != expect:
        raise DataError(f"truncated AEMB payload in {path}")
    m = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float64)
    if kind_byte == KIND_PROBABILITY:
        return ProbabilityMatrix(m)
    return EmbeddingSet(m, label=Path(path).stem)


def read_csv_matrix(path) -> np.ndarray:
    """Read the CSV alternate form: header "c0,c1,...", float rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty CSV: {path}") from None
        if [h.strip() for h in header] != [f"c{i}" for i in range(len(header))]:
            raise DataError(f"CSV header must be c0,c1,... in {path}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} columns in {path}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc} in {path}") from None
    if not rows:
        raise DataError(f"no data rows in {path}")
    m = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise DataError(f"non-finite values in {path}")
    return m


# ---------------------------------------------------------------------------
# Study manifest


@dataclass(frozen=True)
class ManifestItem:
    id: str
    midi_note: int
    instrument_family: str
    reference: Path
    conditions: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StudySettings:
    trials_per_session: int = 10
    midi_min: int = 22
    midi_max: int = 84
    screening_threshold: float = 85.0


@dataclass(frozen=True)
class StudyManifest:
    items: tuple
    settings: StudySettings
    condition_names: tuple

    def eligible_items(self, midi_min=None, midi_max=None):
        lo = self.settings.midi_min if midi_min is None else midi_min
        hi = self.settings.midi_max if midi_max is None else midi_max
        return [it for it in self.items if lo <= it.midi_note <= hi]


def load_manifest(path) -> StudyManifest:
    """Load and validate a manifest; relative paths resolve against it."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("items"), list):
        raise DataError("manifest must be an object with an 'items' list")
    if not doc["items"]:
        raise DataError("manifest has no items")

    raw_settings = doc.get("settings", {})
    defaults = StudySettings()
    settings = StudySettings(
        trials_per_session=int(raw_settings.get("trials_per_session",
                                                defaults.trials_per_session)),
        midi_min=int(raw_settings.get("midi_min", defaults.midi_min)),
        midi_max=int(raw_settings.get("midi_max", defaults.midi_max)),
        screening_threshold=float(raw_settings.get("screening_threshold",
                                                   defaults.screening_threshold)),
    )
    if settings.midi_min > settings.midi_max:
        raise DataError("midi_min > midi_max")
    if not 0 <= settings.screening_threshold <= 100:
        raise DataError("screening_threshold must lie in [0, 100]")
    if settings.trials_per_session < 1:
        raise DataError("trials_per_session must be >= 1")

    base = path.parent
    items = []
    seen = set()
    condition_names = None
    for idx, raw in enumerate(doc["items"]):
        try:
            item_id = str(raw["id"])
            midi_note = int(raw["midi_note"])
            family = str(raw.get("instrument_family", ""))
            reference = base / raw["reference"]
            conditions = {str(k): base / v for k, v in raw["conditions"].items()}
        except (KeyError, TypeError) as exc:
            raise DataError(f"item {idx}: missing field {exc}") from None
        if item_id in seen:
            raise DataError(f"duplicate id: {item_id}")
        seen.add(item_id)
        names = tuple(sorted(conditions))
        if condition_names is None:
            condition_names = names
        elif names != condition_names:
            raise DataError(
                f"inconsistent conditions: item {item_id} has {list(names)}, "
                f"expected {list(condition_names)}"
            )
        for label, p in [("reference", reference), *conditions.items()]:
            if not p.is_file():
                raise DataError(f"item {item_id}: missing audio file for "
                                f"{label!r}: {p}")
        items.append(ManifestItem(item_id, midi_note, family, reference, conditions))
    return StudyManifest(tuple(items), settings, condition_names)
