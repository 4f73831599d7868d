"""Run a model over a corpus manifest and write the AEMB container."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .aemb import write_aemb
from .models import get_model


@dataclass(frozen=True)
class ExtractorSpec:
    model: str = "builtin:spectral-stats"
    layer: str = "stats"
    batch_size: int = 8


def load_manifest_items(path):
    """Items from the corpus manifest JSON, in manifest order."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    items = []
    for raw in doc["items"]:
        items.append({
            "id": str(raw["id"]),
            "reference": path.parent / raw["reference"],
            "conditions": {k: path.parent / v
                           for k, v in raw.get("conditions", {}).items()},
        })
    if not items:
        raise ValueError("manifest has no items")
    return items


def _read_clip(path, item_id):
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise ValueError(f"item {item_id}: cannot decode {path}: {exc}") from exc
    data = np.asarray(data)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"item {item_id}: unsupported sample format "
                         f"{data.dtype} in {path}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise ValueError(f"item {item_id}: empty audio in {path}")
    return samples, int(rate)


def extract(manifest_path, condition, spec: ExtractorSpec, out_path):
    """One feature row per manifest item for the chosen audio condition.

    `condition` is "reference" or a condition name from the manifest.
    Rows follow manifest order; the result is written as AEMB and the
    output path is returned.
    """
    items = load_manifest_items(manifest_path)
    fn, kind = get_model(spec.model)
    if spec.batch_size < 1:
        raise ValueError("batch_size must be >= 1")

    clips = []
    for item in items:
        if condition == "reference":
            audio_path = item["reference"]
        else:
            try:
                audio_path = item["conditions"][condition]
            except KeyError:
                raise ValueError(f"item {item['id']}: no condition "
                                 f"{condition!r}") from None
        clips.append(_read_clip(audio_path, item["id"]))

    rows = []
    width = None
    for start in range(0, len(clips), spec.batch_size):
        batch = fn(clips[start:start + spec.batch_size], spec.layer)
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[0] != len(clips[start:start + spec.batch_size]):
            raise ValueError(f"model {spec.model!r} returned a bad batch shape "
                             f"{batch.shape}")
        if width is None:
            width = batch.shape[1]
        elif batch.shape[1] != width:
            raise ValueError(f"dimension drift between batches: {width} then "
                             f"{batch.shape[1]}")
        rows.append(batch)

    matrix = np.vstack(rows)
    write_aemb(matrix, kind, out_path)
    return out_path
