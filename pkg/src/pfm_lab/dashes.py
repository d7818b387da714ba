"""Oriented-dashes toy dataset.

48x48 binary images holding 5x1 horizontal and 1x5 vertical dashes; the label
says which orientation is more frequent. Dashes keep a 1-pixel clearance
from the border and their 1-pixel-dilated bounding boxes never overlap, so no
3x3 window ever sees two dashes. That makes the closed-form line-detector
score exactly additive over dashes.

Binary file layout (little-endian)::

    b"ODCD" | u32 version=1 | u32 count | u32 height=48 | u32 width=48
    per image: u8 label (0=vertical, 1=horizontal) | u8 n_horizontal
               | u8 n_vertical | height*width u8 pixels, row-major
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .filters import HORIZONTAL_LINE, VERTICAL_LINE
from .rng import Xoshiro256

VERTICAL = 0
HORIZONTAL = 1
LABEL_NAMES = {VERTICAL: "vertical", HORIZONTAL: "horizontal"}

SIZE = 48
DASH_LENGTH = 5
MIN_DASHES = 2
MAX_DASHES = 12
MAX_ATTEMPTS = 1000
MAGIC = b"ODCD"
FORMAT_VERSION = 1
GENERATOR_VERSION = 1

_HEADER = struct.Struct("<4sIIII")
_RECORD = struct.Struct("<BBB")


@dataclass(eq=False)
class DashImage:
    pixels: np.ndarray
    n_horizontal: int
    n_vertical: int

    @property
    def label(self):
        return HORIZONTAL if self.n_horizontal > self.n_vertical else VERTICAL


@dataclass(eq=False)
class DashDataset:
    images: list
    seed: int = None

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        return self.images[i]

    def __iter__(self):
        return iter(self.images)

    @property
    def labels(self):
        return np.array([img.label for img in self.images], dtype=np.int64)

    def to_arrays(self):
        """``X`` as float64 ``(N, 1, 48, 48)`` and integer labels ``y``."""
        X = np.stack([img.pixels for img in self.images]).astype(np.float64)[:, None]
        return X, self.labels

    def __eq__(self, other):
        if not isinstance(other, DashDataset) or len(self) != len(other):
            return NotImplemented
        return all(
            a.n_horizontal == b.n_horizontal and a.n_vertical == b.n_vertical
            and np.array_equal(a.pixels, b.pixels)
            for a, b in zip(self.images, other.images)
        )


def _try_place(rng, n_horizontal, n_vertical):
    pixels = np.zeros((SIZE, SIZE), dtype=np.uint8)
    blocked = np.zeros((SIZE, SIZE), dtype=bool)
    attempts = 0
    for horizontal in [True] * n_horizontal + [False] * n_vertical:
        h, w = (1, DASH_LENGTH) if horizontal else (DASH_LENGTH, 1)
        while True:
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                return None
            # 1-pixel clearance to the border on every side
            r = rng.randint(1, SIZE - 1 - h)
            c = rng.randint(1, SIZE - 1 - w)
            box = (slice(r - 1, r + h + 1), slice(c - 1, c + w + 1))
            if not blocked[box].any():
                blocked[box] = True
                pixels[r:r + h, c:c + w] = 1
                break
    return pixels


def generate_image(rng, target):
    """Draw one image whose label equals ``target``."""
    while True:
        total = rng.randint(MIN_DASHES, MAX_DASHES)
        while True:
            n_h = rng.randint(0, total)
            n_v = total - n_h
            if n_h != n_v and (n_h > n_v) == (target == HORIZONTAL):
                break
        pixels = _try_place(rng, n_h, n_v)
        if pixels is not None:
            return DashImage(pixels, n_h, n_v)


def generate(seed, count=1024):
    """Deterministic dataset; image ``i`` uses its own stream seeded by ``seed ^ i``.

    Target labels alternate horizontal/vertical, so classes are balanced.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    images = []
    for i in range(count):
        rng = Xoshiro256(seed ^ i)
        images.append(generate_image(rng, HORIZONTAL if i % 2 == 0 else VERTICAL))
    return DashDataset(images, seed)


def _correlate_same(x, kernel):
    # zero-padded 3x3 cross-correlation as a sum of shifted copies
    xp = np.pad(x.astype(np.float64), 1)
    h, w = x.shape
    out = np.zeros((h, w))
    for i in range(3):
        for j in range(3):
            out += kernel[i, j] * xp[i:i + h, j:j + w]
    return out


def oracle_score(pixels):
    pixels = np.asarray(getattr(pixels, "pixels", pixels))
    h_resp = np.maximum(_correlate_same(pixels, HORIZONTAL_LINE), 0.0)
    v_resp = np.maximum(_correlate_same(pixels, VERTICAL_LINE), 0.0)
    return float((h_resp - v_resp).sum())


def oracle_classify(img):
    """Closed-form line-detector classifier: ``(label, score)``.

    A non-negative score means horizontal.
    """
    score = oracle_score(img)
    return (HORIZONTAL if score >= 0 else VERTICAL), score


def oracle_accuracy(dataset):
    images = list(dataset)
    if not images:
        return float("nan")
    hits = sum(oracle_classify(img)[0] == img.label for img in images)
    return hits / len(images)


def save(dataset, path, write_manifest=True):
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(dataset), SIZE, SIZE))
        for img in dataset:
            fh.write(_RECORD.pack(img.label, img.n_horizontal, img.n_vertical))
            fh.write(np.ascontiguousarray(img.pixels, dtype=np.uint8).tobytes())
    if write_manifest:
        manifest = path.with_name(path.name + ".manifest")
        manifest.write_text(
            f"seed={dataset.seed}\ncount={len(dataset)}\ngenerator_version={GENERATOR_VERSION}\n"
            f"format_version={FORMAT_VERSION}\n"
        )
    return path


def load(path):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: too short for an ODCD header")
    magic, version, count, height, width = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    record = _RECORD.size + height * width
    if len(raw) != _HEADER.size + count * record:
        raise ValueError(f"{path}: expected {count} records, size mismatch")
    images = []
    offset = _HEADER.size
    for _ in range(count):
        label, n_h, n_v = _RECORD.unpack_from(raw, offset)
        pixels = np.frombuffer(raw, np.uint8, height * width, offset + _RECORD.size)
        img = DashImage(pixels.reshape(height, width).copy(), n_h, n_v)
        if img.label != label:
            raise ValueError(f"{path}: stored label {label} disagrees with dash counts")
        images.append(img)
        offset += record
    seed = None
    manifest = path.with_name(path.name + ".manifest")
    if manifest.exists():
        fields = dict(ln.split("=", 1) for ln in manifest.read_text().splitlines() if "=" in ln)
        if fields.get("seed", "None") != "None":
            seed = int(fields["seed"])
    return DashDataset(images, seed)
