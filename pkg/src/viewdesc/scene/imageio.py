"""Minimal PFM (float) and PGM (8-bit) readers and writers."""

from pathlib import Path

import numpy as np


def write_pfm(path, image):
    """Single-channel little-endian PFM; rows are stored bottom to top."""
    image = np.asarray(image, dtype="<f4")
    if image.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    h, w = image.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(image[::-1]).tobytes())


def read_pfm(path):
    data = Path(path).read_bytes()
    lines, pos = [], 0
    while len(lines) < 3:
        end = data.index(b"\n", pos)
        lines.append(data[pos:end].decode("ascii").strip())
        pos = end + 1
    if lines[0] != "Pf":
        raise ValueError(f"{path}: only single-channel PFM is supported")
    w, h = map(int, lines[1].split())
    scale = float(lines[2])
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr[::-1].astype(np.float32)


def write_pgm(path, image):
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValueError("PGM writer expects uint8")
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    pos += 1  # single whitespace after maxval
    if tokens[0] != "P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: only 8-bit binary PGM is supported")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w).copy()


def to_u8(image):
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
