"""Dataset ingestion and construction: IDX files, biased target sets,
procedural non-target images and the condition vocabulary."""

import gzip
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, matmul
from .errors import ContractError, DataError, IdxFormatError
from .validation import IMAGE_SIDE

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

NEUTRAL_NAME = "A number"
NON_TARGET_NAME = "Not a number"


# ---------------------------------------------------------------------------
# IDX byte format


def parse_idx(data):
    """Parse an IDX byte stream into ('images', arr) or ('labels', arr).

    Image payloads are rescaled from unsigned bytes to floats in [-1, 1].
    """
    if len(data) < 4:
        raise IdxFormatError(f"IDX stream too short for a magic number ({len(data)} bytes)")
    (magic,) = struct.unpack(">i", data[:4])
    if magic == IDX_IMAGE_MAGIC:
        if len(data) < 16:
            raise IdxFormatError("image IDX header truncated")
        count, rows, cols = struct.unpack(">iii", data[4:16])
        if count < 0 or rows <= 0 or cols <= 0:
            raise IdxFormatError(f"image IDX header has invalid dimensions ({count}, {rows}, {cols})")
        expected = count * rows * cols
        payload = data[16:]
        if len(payload) != expected:
            raise IdxFormatError(f"image IDX payload length {len(payload)} != {expected}")
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)
        return "images", (pixels.astype(np.float32) / 127.5) - 1.0
    if magic == IDX_LABEL_MAGIC:
        if len(data) < 8:
            raise IdxFormatError("label IDX header truncated")
        (count,) = struct.unpack(">i", data[4:8])
        if count < 0:
            raise IdxFormatError(f"label IDX header has negative count {count}")
        payload = data[8:]
        if len(payload) != count:
            raise IdxFormatError(f"label IDX payload length {len(payload)} != {count}")
        return "labels", np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    raise IdxFormatError(f"unknown IDX magic 0x{magic & 0xffffffff:08x}")


def images_to_idx_bytes(images):
    """Serialize float images in [-1, 1] (or uint8) back to IDX bytes."""
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ContractError(f"expected [n, rows, cols] images, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    header = struct.pack(">iiii", IDX_IMAGE_MAGIC, arr.shape[0], arr.shape[1], arr.shape[2])
    return header + arr.tobytes()


def labels_to_idx_bytes(labels):
    arr = np.asarray(labels)
    if arr.ndim != 1 or np.any(arr < 0) or np.any(arr > 255):
        raise ContractError("labels must be a 1-d array of bytes")
    return struct.pack(">ii", IDX_LABEL_MAGIC, arr.size) + arr.astype(np.uint8).tobytes()


def load_idx_file(path):
    """Read a raw or gzip-compressed IDX file."""
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        raw = f.read()
    if head == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def load_mnist_split(images_path, labels_path):
    """Load one images/labels pair, cross-checking the example counts."""
    kind_i, images = load_idx_file(images_path)
    kind_l, labels = load_idx_file(labels_path)
    if kind_i != "images":
        raise IdxFormatError(f"{images_path} is not an image IDX file")
    if kind_l != "labels":
        raise IdxFormatError(f"{labels_path} is not a label IDX file")
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    return images, labels


# ---------------------------------------------------------------------------
# conditions


class ConditionVocab:
    """Ordered condition names with a trainable embedding row per id.

    Id 0 is the neutral condition, ids 1..10 the per-digit conditions and
    the last id marks non-target images.
    """

    def __init__(self, embed_width=16, seed=0, dtype=np.float32):
        self.names = [NEUTRAL_NAME] + [f"A number {d}" for d in range(10)] + [NON_TARGET_NAME]
        self.embed_width = int(embed_width)
        self._name_to_id = {name: i for i, name in enumerate(self.names)}
        rng = np.random.default_rng(seed)
        init = rng.standard_normal((len(self.names), self.embed_width)) / np.sqrt(self.embed_width)
        self.table = Tensor(init.astype(dtype), requires_grad=True)

    @property
    def size(self):
        return len(self.names)

    @property
    def neutral_id(self):
        return 0

    @property
    def non_target_id(self):
        return len(self.names) - 1

    def digit_id(self, digit):
        if not 0 <= int(digit) <= 9:
            raise ContractError(f"digit conditions cover 0..9, got {digit}")
        return 1 + int(digit)

    def check_id(self, condition_id):
        cid = int(condition_id)
        if not 0 <= cid < self.size:
            raise ContractError(f"unknown condition id {condition_id}; vocabulary has {self.size} entries")
        return cid

    def resolve(self, name):
        if name not in self._name_to_id:
            raise ContractError(f"unknown condition {name!r}; choose one of {self.names}")
        return self._name_to_id[name]


def condition_embedding(vocab, condition_id):
    """Trainable embedding row [1, width] for one condition id."""
    return condition_embeddings(vocab, [condition_id])


def condition_embeddings(vocab, condition_ids):
    """Batched embedding lookup [n, width]; gradients flow into the table
    through a one-hot matmul."""
    ids = [vocab.check_id(c) for c in condition_ids]
    onehot = np.zeros((len(ids), vocab.size), dtype=vocab.table.dtype)
    onehot[np.arange(len(ids)), ids] = 1.0
    return matmul(Tensor(onehot, dtype=vocab.table.dtype), vocab.table)


# ---------------------------------------------------------------------------
# dataset construction


@dataclass
class LabeledExample:
    image: np.ndarray  # [28, 28] float32 in [-1, 1]
    y: int  # 1 = target, 0 = non-target
    condition_id: int
    source_class: Optional[int] = None


@dataclass
class DatasetSpec:
    d1: int
    d2: int
    n1: int = 80
    n2: int = 20
    scenario: str = "spd"
    nontarget_count: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.d1 == self.d2:
            raise DataError("d1 and d2 must differ")
        if self.n1 <= 0 or self.n2 <= 0 or self.nontarget_count <= 0:
            raise DataError("all counts must be positive")
        if self.scenario not in ("fd", "spd"):
            raise DataError(f"scenario must be 'fd' or 'spd', got {self.scenario!r}")


def build_target_set(spec, images, labels, vocab):
    """Biased target set: n1 images of d1 plus n2 of d2, sampled without
    replacement. All examples carry y = 1; conditions are neutral in the
    fd scenario and per-digit in the spd scenario."""
    rng = np.random.default_rng(spec.seed)
    out = []
    for digit, want in ((spec.d1, spec.n1), (spec.d2, spec.n2)):
        pool = np.flatnonzero(labels == digit)
        if pool.size < want:
            raise DataError(f"pool has {pool.size} images of digit {digit}, need {want}")
        chosen = rng.choice(pool, size=want, replace=False)
        cid = vocab.neutral_id if spec.scenario == "fd" else vocab.digit_id(digit)
        for idx in chosen:
            out.append(LabeledExample(image=images[idx], y=1, condition_id=cid, source_class=int(digit)))
    return out


def generate_nontarget(n, seed, vocab):
    """Seeded procedural non-digit images: filled rectangles, ellipses and
    stripe patterns at random gray levels, labeled 0."""
    if n < 1:
        raise DataError(f"nontarget count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:IMAGE_SIDE, 0:IMAGE_SIDE]
    out = []
    for _ in range(n):
        img = np.full((IMAGE_SIDE, IMAGE_SIDE), rng.uniform(-1.0, 0.0), dtype=np.float32)
        for _ in range(int(rng.integers(1, 4))):
            gray = np.float32(rng.uniform(-1.0, 1.0))
            kind = int(rng.integers(0, 3))
            if kind == 0:  # rectangle
                r0, r1 = np.sort(rng.integers(0, IMAGE_SIDE, size=2))
                c0, c1 = np.sort(rng.integers(0, IMAGE_SIDE, size=2))
                img[r0:r1 + 1, c0:c1 + 1] = gray
            elif kind == 1:  # ellipse
                cy, cx = rng.uniform(6, IMAGE_SIDE - 6, size=2)
                ry, rx = rng.uniform(2.0, 9.0, size=2)
                mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
                img[mask] = gray
            else:  # stripes
                period = int(rng.integers(2, 7))
                phase = int(rng.integers(0, period))
                axis = yy if rng.integers(0, 2) == 0 else xx
                img[((axis + phase) // period) % 2 == 0] = gray
        out.append(LabeledExample(image=img, y=0, condition_id=vocab.non_target_id, source_class=None))
    return out


def stack_images(examples):
    """Flatten a list of examples into a [n, 784] float32 matrix."""
    return np.stack([ex.image.reshape(-1) for ex in examples]).astype(np.float32)
