"""Binary artifact formats: ``.hsc`` scene cubes and P6 PPM class maps.

``.hsc`` layout (all little-endian): magic ``HSC1``, u16 version, u32 H, W, D,
C (num classes), H*W*D float32 cube values (row-major, band index fastest),
H*W u16 labels (row-major), u32 CRC32 over everything between the magic and
the checksum. Malformed files raise FormatError with the failing byte offset.
"""

import struct
import zlib

import numpy as np

from .data import HsiScene
from .errors import ConfigError, FormatError

CUBE_MAGIC = b"HSC1"
CUBE_VERSION = 1

# default render palette, indexed by class label
DEFAULT_PALETTE = (
    (30, 30, 30),      # background / canvas: dark grey
    (70, 160, 70),     # green
    (210, 60, 60),     # red
    (70, 90, 210),     # blue
    (220, 200, 70),    # yellow
    (170, 80, 200),    # purple
    (80, 200, 200),    # cyan
    (230, 140, 60),    # orange
)


def write_cube(scene, path, class_names=None):
    """Serialize an HsiScene (class names live in the run manifest, not here)."""
    h, w, d = scene.cube.shape
    c = scene.num_classes
    payload = bytearray()
    payload += struct.pack("<H", CUBE_VERSION)
    payload += struct.pack("<IIII", h, w, d, c)
    payload += np.ascontiguousarray(scene.cube, dtype="<f4").tobytes()
    payload += np.ascontiguousarray(scene.labels, dtype="<u2").tobytes()
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC + bytes(payload) + struct.pack("<I", crc))


def read_cube(path, class_names=None):
    """Parse a ``.hsc`` file back into an HsiScene.

    ``class_names`` supplies names for the C classes declared in the header;
    defaults to ``class_0`` … ``class_{C-1}``.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != CUBE_MAGIC:
        raise FormatError(f"bad cube magic {blob[:4]!r}, expected {CUBE_MAGIC!r}", offset=0)
    if len(blob) < 26:
        raise FormatError("cube file truncated inside header", offset=len(blob))
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    payload = blob[4:-4]
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise FormatError(
            f"cube checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}",
            offset=len(blob) - 4)
    (version,) = struct.unpack_from("<H", payload, 0)
    if version != CUBE_VERSION:
        raise FormatError(f"unsupported cube version {version}", offset=4)
    h, w, d, c = struct.unpack_from("<IIII", payload, 2)
    cube_bytes = h * w * d * 4
    label_bytes = h * w * 2
    expected = 18 + cube_bytes + label_bytes
    if len(payload) != expected:
        raise FormatError(
            f"cube payload is {len(payload)} bytes, header implies {expected}",
            offset=4 + min(len(payload), expected))
    cube = np.frombuffer(payload, dtype="<f4", count=h * w * d, offset=18)
    labels = np.frombuffer(payload, dtype="<u2", count=h * w, offset=18 + cube_bytes)
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(c))
    elif len(class_names) != c:
        raise ConfigError(f"{len(class_names)} class names for {c} classes in header")
    return HsiScene(cube.reshape(h, w, d).copy(),
                    labels.reshape(h, w).astype(np.int64),
                    tuple(class_names))


def write_class_map(labels, path, palette=None):
    """Render an (H, W) label map as a binary P6 PPM with one color per class."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ConfigError(f"class map must be 2-D, got shape {labels.shape}")
    palette = DEFAULT_PALETTE if palette is None else tuple(palette)
    top = int(labels.max()) if labels.size else 0
    if top >= len(palette):
        raise ConfigError(f"palette has {len(palette)} colors but labels reach {top}")
    lut = np.asarray(palette, dtype=np.uint8)
    pixels = lut[labels]
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def read_class_map(path, palette=None):
    """Inverse of write_class_map (used by tests and verification)."""
    palette = DEFAULT_PALETTE if palette is None else tuple(palette)
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6":
        raise FormatError("not a binary P6 PPM", offset=0)
    w, h = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3).reshape(h, w, 3)
    labels = np.full((h, w), -1, dtype=np.int64)
    for cls, color in enumerate(palette):
        labels[np.all(pixels == np.asarray(color, dtype=np.uint8), axis=-1)] = cls
    if (labels < 0).any():
        raise FormatError("class map contains colors outside the palette", offset=15)
    return labels
