import json

import numpy as np
import pytest

from aeval.audio import AudioClip, write_wav

SAMPLE_RATE = 16000


def sine_clip(freq, duration=1.0, amplitude=0.99, sample_rate=SAMPLE_RATE):
    t = np.arange(int(duration * sample_rate)) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), sample_rate)


def noise_clip(seed, duration=0.1, amplitude=0.5, sample_rate=SAMPLE_RATE):
    rng = np.random.default_rng(seed)
    n = int(duration * sample_rate)
    return AudioClip(amplitude * rng.uniform(-1, 1, n), sample_rate)


def bit_crush(clip, bits):
    """Requantize to the given bit depth (midtread)."""
    levels = 2 ** (bits - 1) - 1
    q = np.clip(np.round(clip.samples * levels), -levels, levels) / levels
    return AudioClip(q, clip.sample_rate)


def build_corpus(root, n_items=3, conditions=("sysA", "sysB", "sysC"),
                 midi_notes=None, settings=None, duration=0.1):
    """Write a small synthetic corpus and its manifest; returns manifest path.

    Every audio file gets distinct content so tests can identify stimuli
    by their bytes.
    """
    root.mkdir(parents=True, exist_ok=True)
    items = []
    for i in range(n_items):
        item_id = f"item-{i:02d}"
        ref = noise_clip(seed=1000 + i, duration=duration)
        write_wav(root / f"{item_id}-ref.wav", ref)
        cond_map = {}
        for j, cond in enumerate(conditions):
            clip = noise_clip(seed=5000 + i * 100 + j, duration=duration)
            name = f"{item_id}-{cond}.wav"
            write_wav(root / name, clip)
            cond_map[cond] = name
        midi = midi_notes[i] if midi_notes else 40 + i
        items.append({
            "id": item_id,
            "midi_note": midi,
            "instrument_family": "synthetic",
            "reference": f"{item_id}-ref.wav",
            "conditions": cond_map,
        })
    doc = {"items": items}
    if settings is not None:
        doc["settings"] = settings
    path = root / "manifest.json"
    path.write_text(json.dumps(doc, indent=1))
    return path


@pytest.fixture()
def corpus(tmp_path):
    return build_corpus(tmp_path / "corpus")
