"""Image and metadata file handling.

Images are 8-bit grayscale PNG or PGM (both binary P5 and ASCII P2).
Written intensities are quantized by round-half-away-from-zero after
clamping to [0, 255], so PSNR against 8-bit references is well defined,
and reading back an 8-bit source is bit exact.  Every CLI output gets a
JSON sidecar recording the full configuration and seeds.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GrayImage, PixelMask, ValidationError

ARTIFACT_VERSION = "0.1.0"


def quantize_u8(arr: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] then round half away from zero to uint8."""
    clipped = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 255.0)
    return np.floor(clipped + 0.5).astype(np.uint8)


def read_image(path) -> GrayImage:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return GrayImage.from_array(_read_pgm(path).astype(np.float64))
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise ValidationError(
                    f"{path}: expected 8-bit grayscale, got mode '{im.mode}'")
            arr = np.asarray(im, dtype=np.float64)
    except FileNotFoundError:
        raise
    except ValidationError:
        raise
    except Exception as exc:
        raise ValidationError(f"{path}: cannot read image ({exc})") from exc
    return GrayImage.from_array(arr)


def write_image(img: GrayImage, path, pgm_format: str = "P5") -> None:
    path = Path(path)
    data = quantize_u8(np.asarray(img.data))
    if path.suffix.lower() == ".pgm":
        _write_pgm(data, path, pgm_format)
    else:
        Image.fromarray(data, mode="L").save(path)


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:2] not in (b"P2", b"P5"):
        raise ValidationError(f"{path}: not a P2/P5 PGM file")
    binary = raw[:2] == b"P5"
    # strip comments, then parse the three header integers
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.match(rb"(\s+(#[^\n]*\n)*)*\s*(\d+)", raw[pos:])
        if m is None:
            raise ValidationError(f"{path}: malformed PGM header")
        fields.append(int(m.group(3)))
        pos += m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit PGM supported, maxval {maxval}")
    if binary:
        body = raw[pos + 1: pos + 1 + width * height]  # single whitespace byte
        if len(body) != width * height:
            raise ValidationError(f"{path}: truncated PGM body")
        arr = np.frombuffer(body, dtype=np.uint8)
    else:
        values = raw[pos:].split()
        if len(values) != width * height:
            raise ValidationError(
                f"{path}: expected {width * height} samples, got {len(values)}")
        arr = np.asarray([int(v) for v in values], dtype=np.uint8)
    return arr.reshape(height, width)


def _write_pgm(data: np.ndarray, path: Path, pgm_format: str) -> None:
    h, w = data.shape
    if pgm_format == "P5":
        path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())
    elif pgm_format == "P2":
        lines = [f"P2\n{w} {h}\n255"]
        lines += [" ".join(str(v) for v in row) for row in data]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValidationError(f"unknown PGM format '{pgm_format}'")


def write_mask(mask: PixelMask, path) -> None:
    """Masks serialize as images: kept pixels white, killed black."""
    arr = np.where(mask.kept, 255.0, 0.0)
    write_image(GrayImage.from_array(arr), path)


def read_mask(path) -> PixelMask:
    img = read_image(path)
    return PixelMask.from_array(np.asarray(img.data) >= 128.0)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_sidecar(path, payload: dict) -> None:
    """Provenance metadata next to an output file; keys are sorted so the
    sidecar is byte-stable for identical runs."""
    body = dict(payload)
    body.setdefault("artifact_version", ARTIFACT_VERSION)
    sidecar_path(path).write_text(
        json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")


def read_sidecar(path) -> dict:
    return json.loads(sidecar_path(path).read_text())


def parse_config_file(path) -> dict[str, str]:
    """Flat key=value configuration; '#' starts a comment, blank lines are
    ignored, keys mirror CLI flag names (without the leading dashes)."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(
                f"{path}:{lineno}: expected key=value, got '{stripped}'")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out
