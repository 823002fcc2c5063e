"""File formats: PGM images, dataset directories, model checkpoints, CSV.

Every writer/reader pair round-trips exactly: checkpoints bitwise, PGM up to
its 8-bit quantization. Errors are typed exceptions; library code never
exits the process.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .network import Network, NetworkConfig

CHECKPOINT_VERSION = 1


class DataIOError(Exception):
    """Base class for file-format failures."""


class PGMFormatError(DataIOError):
    pass


class CheckpointError(DataIOError):
    pass


# ---------------------------------------------------------------------------
# PGM (binary 8-bit grayscale, magic P5, maxval 255)


def write_pgm(tensor, path, comment: str | None = None) -> None:
    """Write a (1,H,W) [0,1] tensor as binary P5; values round to 8 bits."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 1:
        raise PGMFormatError(f"expected a (1,H,W) tensor, got shape {arr.shape}")
    _, h, w = arr.shape
    data = np.clip(np.round(arr[0] * 255.0), 0, 255).astype(np.uint8)
    header = b"P5\n"
    if comment:
        for line in comment.splitlines():
            header += b"# " + line.encode("ascii", "replace") + b"\n"
    header += f"{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 file into a (1,H,W) float64 tensor in [0,1]."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise PGMFormatError(f"{path}: not a binary PGM (magic {raw[:2]!r})")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(raw):
            raise PGMFormatError(f"{path}: truncated header")
        ch = raw[pos:pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        elif ch.isdigit():
            end = pos
            while end < len(raw) and raw[end:end + 1].isdigit():
                end += 1
            fields.append(int(raw[pos:end]))
            pos = end
        else:
            raise PGMFormatError(f"{path}: malformed header near byte {pos}")
    w, h, maxval = fields
    if maxval != 255:
        raise PGMFormatError(f"{path}: unsupported maxval {maxval} (only 255)")
    if w < 1 or h < 1:
        raise PGMFormatError(f"{path}: invalid dimensions {w}x{h}")
    pos += 1  # single whitespace byte after maxval
    payload = raw[pos:pos + w * h]
    if len(payload) < w * h:
        raise PGMFormatError(f"{path}: truncated payload "
                             f"({len(payload)} of {w * h} bytes)")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return (img.astype(np.float64) / 255.0)[None]


def rgb_to_gray(rgb) -> np.ndarray:
    """Luma conversion of a (3,H,W) tensor with weights 0.299/0.587/0.114."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected a (3,H,W) tensor, got shape {arr.shape}")
    gray = 0.299 * arr[0] + 0.587 * arr[1] + 0.114 * arr[2]
    return gray[None]


# ---------------------------------------------------------------------------
# dataset directories: one PGM per patch plus an index.csv manifest


def save_dataset(dataset, out_dir, comment: str | None = None) -> Path:
    """Write every patch as PGM plus an index.csv of (file, label, split)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for split, samples in (("train", dataset.train), ("test", dataset.test)):
        for i, (patch, label) in enumerate(samples):
            name = f"{split}_{i:04d}.pgm"
            write_pgm(patch, out_dir / name, comment=comment)
            rows.append([name, label, split])
    extra = f"classes {dataset.classes}"
    write_csv(out_dir / "index.csv", ["file", "label", "split"], rows,
              comment=(comment + "\n" + extra) if comment else extra)
    return out_dir


def load_dataset(in_dir):
    """Rebuild a Dataset from a directory written by save_dataset."""
    from .pipeline import Dataset

    in_dir = Path(in_dir)
    header, rows = read_csv(in_dir / "index.csv")
    if header != ["file", "label", "split"]:
        raise DataIOError(f"{in_dir}: unexpected index.csv header {header}")
    train, test, labels = [], [], set()
    for name, label, split in rows:
        sample = (read_pgm(in_dir / name), int(label))
        labels.add(int(label))
        (train if split == "train" else test).append(sample)
    classes = max(labels) + 1 if labels else 2
    return Dataset(train=train, test=test, classes=classes, provenance="files")


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + little-endian float64 payload at <path>.bin


def save_checkpoint(net: Network, path, run_config: dict | None = None) -> None:
    """Write manifest (human-readable JSON) and raw parameter payload."""
    path = Path(path)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": _config_dict(net.config),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in net.params.items()],
        "param_count": net.param_count,
    }
    if run_config is not None:
        manifest["run_config"] = run_config
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes()
                       for v in net.params.values())
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    Path(str(path) + ".bin").write_bytes(payload)


def load_checkpoint(path) -> Network:
    """Rebuild a Network bitwise-identically from manifest + payload."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest ({exc})") from exc
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {version} "
                              f"(expected {CHECKPOINT_VERSION})")
    try:
        config = NetworkConfig(**manifest["config"])
        entries = manifest["params"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid manifest ({exc})") from exc
    try:
        payload = Path(str(path) + ".bin").read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: missing payload ({exc})") from exc
    expected = sum(int(np.prod(e["shape"])) for e in entries)
    if len(payload) != expected * 8:
        raise CheckpointError(f"{path}: payload holds {len(payload)} bytes, "
                              f"manifest expects {expected * 8}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    params, offset = {}, 0
    for e in entries:
        shape = tuple(e["shape"])
        size = int(np.prod(shape))
        params[e["name"]] = flat[offset:offset + size].reshape(shape).copy()
        offset += size
    net = Network(config=config, params=params)
    if net.param_count != manifest.get("param_count", net.param_count):
        raise CheckpointError(f"{path}: parameter count mismatch")
    return net


def _config_dict(config: NetworkConfig) -> dict:
    from dataclasses import asdict
    return asdict(config)


# ---------------------------------------------------------------------------
# CSV (comma separator, '.' decimal point, header row, '#' comment lines)


def format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, header: list, rows: list, comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.extend(f"# {line}" for line in comment.splitlines())
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Return (header, rows-of-strings), skipping '#' comment lines."""
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln and not ln.startswith("#")]
    if not lines:
        raise DataIOError(f"{path}: no CSV content")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows
