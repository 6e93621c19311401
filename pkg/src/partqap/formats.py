"""On-disk formats.

Descriptor files (``.pqap``) are little-endian binary::

    magic "PQAP" | version u32 = 1 | d u32 | count u32
    count x d float32   (region-major: all d values of region 0, then region 1, ...)
    count x 4 float32   (x, y, w, h per region)

A corpus is a JSON manifest listing one descriptor file per image.
Part models, solver reports and evaluation reports are JSON.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import BACKGROUND, ImageRecord, PartModel, TrainingCorpus

MAGIC = b"PQAP"
VERSION = 1
SCHEMA_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    pass


def write_descriptors(path, descriptors, rects) -> None:
    descriptors = np.asarray(descriptors)
    rects = np.asarray(rects).reshape(-1, 4)
    d, count = descriptors.shape
    if rects.shape[0] != count:
        raise FormatError(f"{count} descriptors but {rects.shape[0]} rects")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, d, count))
        fh.write(np.ascontiguousarray(descriptors.T, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(rects, dtype="<f4").tobytes())


def read_descriptors(path) -> tuple[np.ndarray, np.ndarray]:
    """Return (d x count descriptors, count x 4 rects) as float64."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header: expected {_HEADER.size} bytes,"
                          f" got {len(raw)}")
    magic, version, d, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}, expected {VERSION}")
    expected = _HEADER.size + 4 * count * (d + 4)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for d={d}, count={count},"
                          f" got {len(raw)}")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    desc = body[:count * d].reshape(count, d).T.astype(np.float64)
    rects = body[count * d:].reshape(count, 4).astype(np.float64)
    return desc, rects


def quantize(a) -> np.ndarray:
    """Round to float32 precision so values survive a file round trip."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def preprocess(descriptors: np.ndarray, sqrt: bool = True, l2: bool = True) -> np.ndarray:
    """Signed square root then unit l2 norm per region (column)."""
    X = np.asarray(descriptors, dtype=float)
    if sqrt:
        X = np.sign(X) * np.sqrt(np.abs(X))
    if l2:
        nrm = np.linalg.norm(X, axis=0, keepdims=True)
        X = X / np.where(nrm > 0, nrm, 1.0)
    return quantize(X)


def write_corpus(corpus: TrainingCorpus, directory, manifest_name: str = "manifest.json") -> Path:
    directory = Path(directory)
    (directory / "descriptors").mkdir(parents=True, exist_ok=True)
    entries = []
    for im in corpus.images:
        rel = f"descriptors/{im.image_id}.pqap"
        write_descriptors(directory / rel, im.descriptors, im.rects)
        entries.append({
            "image_id": im.image_id,
            "category": None if im.label == BACKGROUND else corpus.categories[im.label],
            "split": im.split,
            "path": rel,
        })
    prep = {"sqrt": False, "l2": False, "applied": False}
    prep.update(corpus.preprocessing)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "d": corpus.d,
        "n_regions": corpus.n_regions,
        "categories": list(corpus.categories),
        "preprocessing": prep,
        "images": entries,
    }
    path = directory / manifest_name
    write_json(path, manifest)
    return path


def read_corpus(manifest_path) -> TrainingCorpus:
    """Load a corpus; pending preprocessing flags are applied here."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"{manifest_path}: schema version {manifest.get('schema_version')!r},"
                          f" expected {SCHEMA_VERSION}")
    d, n_regions = int(manifest["d"]), int(manifest["n_regions"])
    categories = list(manifest["categories"])
    prep = {"sqrt": False, "l2": False, "applied": False}
    prep.update(manifest.get("preprocessing", {}))
    apply = not prep["applied"] and (prep["sqrt"] or prep["l2"])
    images = []
    for entry in manifest["images"]:
        path = manifest_path.parent / entry["path"]
        if not path.exists():
            raise FormatError(f"{manifest_path}: missing descriptor file {path}")
        desc, rects = read_descriptors(path)
        if desc.shape != (d, n_regions):
            raise FormatError(f"{path}: header says d={desc.shape[0]}, count={desc.shape[1]};"
                              f" manifest expects d={d}, count={n_regions}")
        if apply:
            desc = preprocess(desc, prep["sqrt"], prep["l2"])
        cat = entry.get("category")
        label = BACKGROUND if cat is None else categories.index(cat)
        images.append(ImageRecord(entry["image_id"], label, entry["split"], desc, rects))
    if apply:
        prep["applied"] = True
    return TrainingCorpus(tuple(images), d, n_regions, tuple(categories), prep)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_part_model(path, model: PartModel, category_name: str, extra: dict | None = None):
    obj = {"category": category_name, "category_index": model.category,
           "d": model.d, "n_parts": model.n_parts, "W": model.W.T.tolist()}
    if extra:
        obj.update(extra)
    write_json(path, obj)


def read_part_model(path) -> PartModel:
    obj = read_json(path)
    W = np.asarray(obj["W"], dtype=float).T
    if W.shape != (obj["d"], obj["n_parts"]):
        raise FormatError(f"{path}: W has shape {W.shape}, expected"
                          f" ({obj['d']}, {obj['n_parts']})")
    return PartModel(W=W, category=int(obj["category_index"]))


def write_solver_report(path, report, timing: bool = True) -> None:
    write_json(path, report.to_dict(timing=timing))


def write_delimited(path, header, rows) -> None:
    """Comma-separated table; floats in shortest round-trip form."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)
    lines = [",".join(header)]
    lines += [",".join(cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_delimited(path) -> tuple[list, list]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:] if ln]
