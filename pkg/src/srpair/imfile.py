"""Image file I/O: 16-bit PNG and the raw float ``.drtif`` format.

PNG values map linearly between [0, 1] and [0, 65535] (clamped on write).
The raw format is a one-line ASCII header ``DRTIF width height channels\\n``
followed by little-endian float32 samples in row-major, channel-last order.
"""
from pathlib import Path

import cv2
import numpy as np

from .raster import as_image

RAW_MAGIC = "DRTIF"


def write_png16(path, img):
    img = as_image(img)
    q = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if q.ndim == 3:
        q = q[:, :, ::-1]  # OpenCV stores BGR
    if not cv2.imwrite(str(path), q):
        raise OSError(f"could not write {path}")


def read_png(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such image: {path}")
    q = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if q is None:
        raise OSError(f"could not read {path}")
    scale = 65535.0 if q.dtype == np.uint16 else 255.0
    img = q.astype(np.float64) / scale
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[:, :, :3]
        img = img[:, :, ::-1]
    return np.ascontiguousarray(img)


def write_raw(path, img):
    img = as_image(img)
    h, w = img.shape[:2]
    c = 1 if img.ndim == 2 else img.shape[2]
    with open(path, "wb") as fh:
        fh.write(f"{RAW_MAGIC} {w} {h} {c}\n".encode("ascii"))
        fh.write(img.astype("<f4").tobytes(order="C"))


def read_raw(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != RAW_MAGIC:
            raise ValueError(f"{path}: not a {RAW_MAGIC} file")
        w, h, c = map(int, header[1:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != w * h * c:
        raise ValueError(f"{path}: expected {w * h * c} samples, found {data.size}")
    img = data.astype(np.float64).reshape((h, w, c) if c > 1 else (h, w))
    return img


def read_image(path):
    if Path(path).suffix.lower() == ".png":
        return read_png(path)
    return read_raw(path)


def write_image(path, img):
    if Path(path).suffix.lower() == ".png":
        write_png16(path, img)
    else:
        write_raw(path, img)
