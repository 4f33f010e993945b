"""PNG images and the binary checkpoint format.

Checkpoint layout (little-endian)::

    b"MZSR"                      magic
    u16 version                  currently 1
    u32 depth, features, kernel_size, in_channels, out_channels
    u32 tensor count, then per tensor: u8 ndim, ndim x u32 extents
    f32 payload                  all tensors, in layer order
    u32 CRC32                    of every preceding byte
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image

from mzsr.autograd import Tensor
from mzsr.network import ArchDescriptor, ModelParams

MAGIC = b"MZSR"
VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(params: ModelParams) -> bytes:
    a = params.arch
    head = [MAGIC, struct.pack("<H", VERSION)]
    head.append(struct.pack("<5I", a.depth, a.features, a.kernel_size, a.in_channels, a.out_channels))
    head.append(struct.pack("<I", len(params)))
    for t in params:
        head.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
    payload = b"".join(t.data.astype("<f4").tobytes() for t in params)
    body = b"".join(head) + payload
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(params: ModelParams, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(params))


def parse_checkpoint(blob: bytes) -> ModelParams:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic bytes)")
    if len(blob) < 10:
        raise CheckpointError("checkpoint truncated (CRC mismatch)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint CRC mismatch (truncated or corrupted file)")
    try:
        (version,) = struct.unpack_from("<H", body, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
        off = 6
        arch = ArchDescriptor(*struct.unpack_from("<5I", body, off))
        off += 20
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<B", body, off)
            off += 1
            shapes.append(struct.unpack_from(f"<{ndim}I", body, off))
            off += 4 * ndim
    except struct.error as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from None
    need = sum(int(np.prod(s)) for s in shapes) * 4
    if len(body) - off != need:
        raise CheckpointError(f"payload holds {len(body) - off} bytes, shapes declare {need}")
    tensors = []
    for s in shapes:
        n = int(np.prod(s))
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=off).astype(np.float64).reshape(s)
        off += 4 * n
        tensors.append(Tensor(arr, requires_grad=True))
    try:
        return ModelParams(arch, tuple(tensors))
    except ValueError as exc:
        raise CheckpointError(f"checkpoint shapes disagree with its architecture: {exc}") from None


def load_checkpoint(path) -> ModelParams:
    return parse_checkpoint(Path(path).read_bytes())


PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def png_bit_depth(path) -> int:
    with open(path, "rb") as f:
        head = f.read(26)
    if len(head) < 26 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise ValueError(f"{path}: not a PNG file")
    return head[24]


def read_png(path) -> np.ndarray:
    """8-bit RGB or grayscale PNG as float64 (H, W, 3) in [0, 1]."""
    # Pillow silently narrows 16-bit RGB, so check the header directly
    depth = png_bit_depth(path)
    if depth > 8:
        raise ValueError(f"{path}: unsupported bit depth {depth}; only 8-bit PNG is supported")
    with Image.open(path) as im:
        mode = im.mode
        if mode in ("L", "LA"):
            g = np.asarray(im.convert("L"), dtype=np.float64)
            arr = np.repeat(g[:, :, None], 3, axis=2)
        elif mode in ("RGB", "RGBA", "P", "1"):
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
        else:
            raise ValueError(f"{path}: unsupported PNG mode {mode}")
    return arr / 255.0


def to_bytes_image(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(img: np.ndarray, path) -> None:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    Image.fromarray(to_bytes_image(img)).save(path, format="PNG")
