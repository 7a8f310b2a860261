"""On-disk formats: light field directories, weight files, JSON configs.

A light field directory holds one PNG per view, named ``view_{u}_{v}.png``
(zero-based), plus a ``lf.json`` manifest recording the dimensions, bit
depth and provenance. Weights go into a single binary container with a
JSON header and a checksummed float64 payload. All writes are atomic
(temp file + rename) so an interrupted run never leaves a file that both
exists and validates.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional, Tuple

import cv2
import numpy as np
import torch

from .errors import DatasetError, ValueRangeError, WeightFormatError
from .lightfield import LightField4D, make_lightfield
from .unfold import ModelConfig, UnfoldEnhancer, make_model

MANIFEST_NAME = "lf.json"
WEIGHT_MAGIC = b"LFWT"
WEIGHT_VERSION = 1


def _atomic_write_bytes(path: Path, payload: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_png(img: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", img)
    if not ok:
        raise DatasetError("PNG encoding failed")
    return buf.tobytes()


def save_lf_dir(lf: LightField4D, path, bit_depth: int = 8, extra: Optional[dict] = None) -> dict:
    """Write a light field directory; returns the manifest written.

    Views are quantized to the requested bit depth (8 or 16); byte output
    is deterministic for identical inputs. ``extra`` entries (seeds,
    simulation settings) are merged into the manifest.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    if lf.data.min() < 0.0 or lf.data.max() > 1.0:
        raise ValueRangeError("light field must be image-valued in [0,1] to save")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    U, V, S, T, C = lf.data.shape
    peak = (1 << bit_depth) - 1
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    for u in range(U):
        for v in range(V):
            img = np.rint(lf.data[u, v] * peak).astype(dtype)
            if C == 3:
                img = img[:, :, ::-1]  # cv2 writes BGR
            else:
                img = img[:, :, 0]
            _atomic_write_bytes(path / f"view_{u}_{v}.png", _encode_png(img))
    manifest = {
        "format": "lf-dir-v1",
        "U": U,
        "V": V,
        "S": S,
        "T": T,
        "C": C,
        "bit_depth": bit_depth,
        "provenance": lf.meta,
    }
    if extra:
        manifest.update(extra)
    _atomic_write_bytes(
        path / MANIFEST_NAME,
        json.dumps(manifest, indent=2, sort_keys=True).encode() + b"\n",
    )
    return manifest


def load_lf_dir(path) -> Tuple[LightField4D, dict]:
    """Read a light field directory written by save_lf_dir."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetError(f"no {MANIFEST_NAME} manifest in {path}")
    manifest = json.loads(manifest_path.read_text())
    try:
        U, V, S, T, C = (int(manifest[k]) for k in "UVSTC")
        bit_depth = int(manifest["bit_depth"])
    except KeyError as e:
        raise DatasetError(f"manifest missing key {e}") from e
    n_found = len(list(path.glob("view_*_*.png")))
    if n_found != U * V:
        raise DatasetError(
            f"manifest says {U}x{V}={U * V} views but {n_found} view files present"
        )
    peak = (1 << bit_depth) - 1
    data = np.empty((U, V, S, T, C), dtype=np.float64)
    for u in range(U):
        for v in range(V):
            f = path / f"view_{u}_{v}.png"
            if not f.is_file():
                raise DatasetError(f"missing view image {f.name}")
            img = cv2.imread(str(f), cv2.IMREAD_UNCHANGED)
            if img is None:
                raise DatasetError(f"unreadable image {f}")
            if img.ndim == 2:
                img = img[:, :, None]
            elif img.shape[2] == 3:
                img = img[:, :, ::-1]  # BGR -> RGB
            if img.shape != (S, T, C):
                raise DatasetError(
                    f"{f.name} has shape {img.shape}, manifest says {(S, T, C)}"
                )
            data[u, v] = img.astype(np.float64) / peak
    return make_lightfield(data, meta=manifest.get("provenance")), manifest


def is_lf_dir(path) -> bool:
    return (Path(path) / MANIFEST_NAME).is_file()


def find_lf_dirs(spec: str):
    """Resolve an LF directory, a parent of LF directories, or a glob."""
    import glob as globmod

    p = Path(spec)
    if p.is_dir():
        if is_lf_dir(p):
            return [p]
        subs = sorted(d for d in p.iterdir() if d.is_dir() and is_lf_dir(d))
        if subs:
            return subs
        raise DatasetError(f"{spec} contains no light field directories")
    matches = sorted(Path(m) for m in globmod.glob(spec) if is_lf_dir(m))
    if not matches:
        raise DatasetError(f"no light field directories match {spec!r}")
    return matches


def save_weights(model: UnfoldEnhancer, path) -> str:
    """Serialize model parameters; returns the payload checksum.

    Every parameter is stored once as row-major little-endian float64
    under its module path, with the model configuration echoed in the
    header. load(save(m)) reproduces parameters bit-exactly.
    """
    path = Path(path)
    entries = []
    chunks = []
    offset = 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.detach().cpu().numpy().astype("<f8")).tobytes()
        entries.append(
            {"name": name, "shape": list(p.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    checksum = hashlib.sha256(payload).hexdigest()
    header = json.dumps(
        {
            "config": model.config.to_dict(),
            "entries": entries,
            "checksum": checksum,
            "dtype": "<f8",
        },
        sort_keys=True,
    ).encode()
    blob = WEIGHT_MAGIC + struct.pack("<IQ", WEIGHT_VERSION, len(header)) + header + payload
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(path, blob)
    return checksum


def load_weights(
    path, config: Optional[ModelConfig] = None, dtype=torch.float32
) -> Tuple[UnfoldEnhancer, ModelConfig]:
    """Rebuild a model from a weight file.

    When ``config`` is given it must match the configuration echoed in
    the file; otherwise the embedded one is used. Raises
    WeightFormatError on checksum, version, or shape problems.
    """
    blob = Path(path).read_bytes()
    if blob[:4] != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path} is not a weight file")
    version, header_len = struct.unpack("<IQ", blob[4:16])
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"unknown weight format version {version}")
    try:
        header = json.loads(blob[16 : 16 + header_len])
    except (ValueError, UnicodeDecodeError) as e:
        raise WeightFormatError(f"corrupt weight header: {e}") from e
    payload = blob[16 + header_len :]
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise WeightFormatError("payload checksum mismatch (truncated or corrupted file)")
    stored = ModelConfig.from_dict(header["config"])
    if config is not None and config.to_dict() != stored.to_dict():
        raise WeightFormatError(
            f"config mismatch: file has {stored.to_dict()}, caller wants {config.to_dict()}"
        )
    model = make_model(stored, dtype=dtype)
    params = dict(model.named_parameters())
    names_in_file = {e["name"] for e in header["entries"]}
    if names_in_file != set(params):
        raise WeightFormatError(
            f"parameter set mismatch: missing {set(params) - names_in_file}, "
            f"unexpected {names_in_file - set(params)}"
        )
    with torch.no_grad():
        for e in header["entries"]:
            p = params[e["name"]]
            if list(p.shape) != e["shape"]:
                raise WeightFormatError(
                    f"shape mismatch for {e['name']}: file {e['shape']}, model {list(p.shape)}"
                )
            raw = payload[e["offset"] : e["offset"] + e["nbytes"]]
            arr = np.frombuffer(raw, dtype="<f8").reshape(e["shape"])
            p.copy_(torch.from_numpy(arr.copy()).to(p.dtype))
    return model, stored


def read_config_file(path) -> dict:
    """Read the JSON experiment config (model/noise/train/loss sections)."""
    with open(path) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise DatasetError(f"config file {path} must hold a JSON object")
    return cfg


def write_jsonl(path, records):
    """Line-delimited records (training logs, metric dumps)."""
    lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    _atomic_write_bytes(Path(path), lines.encode())
