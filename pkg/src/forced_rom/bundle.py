"""Surrogate bundles on disk: ``surrogate.json`` plus one raw real64 file per parameter array.

The JSON document records the family, latent layout, stack layouts, normalization
statistics, propagator description and provenance; the training log sits next to
it as JSON lines. Arrays use the same little-endian row-major convention as
dataset bundles, so a save/load round trip reproduces every parameter bit for bit.
"""
import json
import shutil
from pathlib import Path

import numpy as np

from .autoencoders import AutoencoderStack
from .data import NormStats, atomic_directory, dump_json, read_raw, write_raw
from .errors import ConfigError
from .propagators import propagator_from_arrays
from .rollout import Surrogate

FORMAT_VERSION = 1


def _write_arrays(tmp, prefix, arrays, index):
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype=np.float64)
        fname = f"{prefix}__{name}.bin"
        write_raw(tmp / fname, arr)
        index.append({"name": f"{prefix}/{name}", "file": fname, "shape": list(arr.shape)})


def surrogate_document(s):
    state_doc, _ = s.state_stack.to_json()
    forcing_doc, _ = s.forcing_stack.to_json()
    return {
        "format_version": FORMAT_VERSION,
        "family": s.family,
        "latent": {"state_dim": s.propagator.state_dim, "forcing_dim": s.propagator.forcing_dim},
        "normalization": s.norm.to_json(),
        "state_stack": state_doc,
        "forcing_stack": forcing_doc,
        "propagator": s.propagator.describe(),
        "provenance": s.provenance,
    }


def log_lines(entries):
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries)


def save_surrogate(s, path, force=False):
    """Write ``s`` to the directory ``path`` atomically (temp dir then rename)."""
    tmp, commit = atomic_directory(path, force)
    try:
        index = []
        _write_arrays(tmp, "state", s.state_stack.to_json()[1], index)
        _write_arrays(tmp, "forcing", s.forcing_stack.to_json()[1], index)
        _write_arrays(tmp, "propagator", s.propagator.to_arrays(), index)
        doc = surrogate_document(s)
        doc["arrays"] = index
        doc["log"] = "train_log.jsonl"
        dump_json(tmp / "surrogate.json", doc)
        with open(tmp / "train_log.jsonl", "w") as fh:
            fh.write(log_lines(s.log))
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    commit()
    return Path(path)


def load_surrogate(path):
    path = Path(path)
    try:
        with open(path / "surrogate.json") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"no surrogate.json in {path}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported surrogate format {doc.get('format_version')}")
    parts = {"state": {}, "forcing": {}, "propagator": {}}
    for entry in doc["arrays"]:
        prefix, name = entry["name"].split("/", 1)
        parts[prefix][name] = read_raw(path / entry["file"], tuple(entry["shape"]))
    state = AutoencoderStack.from_json(doc["state_stack"], parts["state"])
    forcing = AutoencoderStack.from_json(doc["forcing_stack"], parts["forcing"])
    prop = propagator_from_arrays(doc["propagator"], parts["propagator"])
    log = []
    log_path = path / doc.get("log", "train_log.jsonl")
    if log_path.exists():
        with open(log_path) as fh:
            log = [json.loads(line) for line in fh if line.strip()]
    return Surrogate(doc["family"], NormStats.from_json(doc["normalization"]), state, forcing, prop,
                     doc.get("provenance", {}), log)
