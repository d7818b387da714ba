"""Pre-defined 3x3 filter banks.

Index layout of the 18-kernel edge/line bank (1-based, as used by the
subset names below):

====  ==========================================================
1-4   first-derivative (edge) kernels at 0, 45, 90, 135 degrees
5-8   second-derivative (line) kernels at 0, 45, 90, 135 degrees
9     uniform low-pass kernel (all elements 1/9)
10-18 elementwise negatives of 1-9
====  ==========================================================

Edge kernels are Sobel kernels scaled to unit L1 norm, line kernels are the
``[-1, 2, -1]`` family scaled by 1/12. Kernel 5 responds to horizontal
lines, kernel 7 to vertical lines; kernels 1 and 3 respond to horizontal
and vertical edges.
"""

from dataclasses import dataclass, field

import numpy as np

from .rng import Xoshiro256

TAGS = ("edge", "line", "lowpass", "random", "translating", "derived")

# Sobel kernels; 0 degrees responds to a horizontal edge (intensity change along rows)
_SOBEL = (
    [[1, 2, 1], [0, 0, 0], [-1, -2, -1]],
    [[0, 1, 2], [-1, 0, 1], [-2, -1, 0]],
    [[1, 0, -1], [2, 0, -2], [1, 0, -1]],
    [[2, 1, 0], [1, 0, -1], [0, -1, -2]],
)

# second-derivative kernels; 0 degrees is a horizontal line detector
_LINES = (
    [[-1, -1, -1], [2, 2, 2], [-1, -1, -1]],
    [[-1, -1, 2], [-1, 2, -1], [2, -1, -1]],
    [[-1, 2, -1], [-1, 2, -1], [-1, 2, -1]],
    [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]],
)

HORIZONTAL_LINE = np.array(_LINES[0], dtype=np.float64)
VERTICAL_LINE = np.array(_LINES[2], dtype=np.float64)

SUBSETS = {
    "even2": [5, 7],
    "even4": [5, 7, 14, 16],
    "even8": [5, 6, 7, 8, 14, 15, 16, 17],
    "uneven2": [1, 3],
    "uneven4": [1, 3, 10, 12],
    "uneven8": [1, 2, 3, 4, 10, 11, 12, 13],
    "eu9": list(range(1, 10)),
    "eu13": list(range(1, 10)) + [11, 13, 15, 17],
    "eu18": list(range(1, 19)),
    "rank4": [1, 3, 5, 7, 10, 12, 14, 16],
}

# bank size -> subset of the 18-bank with that many kernels
SUBSET_FOR_SIZE = {2: "even2", 4: "even4", 8: "even8", 9: "eu9", 13: "eu13", 18: "eu18"}


@dataclass(frozen=True, eq=False)
class Kernel3x3:
    values: np.ndarray
    tag: str
    index: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (3, 3):
            raise ValueError(f"kernel must be 3x3, got {values.shape}")
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __neg__(self):
        return Kernel3x3(-self.values, self.tag, self.index)


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Ordered, immutable set of 3x3 kernels."""

    kernels: tuple
    kind: str = "custom"
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if not kernels:
            raise ValueError("a filter bank needs at least one kernel")
        object.__setattr__(self, "kernels", kernels)
        arr = np.stack([k.values for k in kernels])
        arr.setflags(write=False)
        object.__setattr__(self, "_array", arr)

    @classmethod
    def from_array(cls, values, tag="derived", kind="custom"):
        values = np.asarray(values, dtype=np.float64).reshape(-1, 3, 3)
        return cls(tuple(Kernel3x3(v, tag, i + 1) for i, v in enumerate(values)), kind)

    @property
    def values(self):
        """Read-only ``(F, 3, 3)`` array of kernel values."""
        return self._array

    @property
    def tags(self):
        return tuple(k.tag for k in self.kernels)

    def __len__(self):
        return len(self.kernels)

    def __getitem__(self, i):
        return self.kernels[i]

    def __iter__(self):
        return iter(self.kernels)

    def kernel(self, index):
        """Kernel by its 1-based bank index."""
        if not 1 <= index <= len(self):
            raise IndexError(f"index {index} outside 1..{len(self)}")
        return self.kernels[index - 1]


def make_edge_line_bank(count=18):
    if count not in (9, 18):
        raise ValueError(f"edge/line bank has 9 or 18 kernels, not {count}")
    base = [np.array(k, dtype=np.float64) / 8.0 for k in _SOBEL]
    base += [np.array(k, dtype=np.float64) / 12.0 for k in _LINES]
    base.append(np.full((3, 3), 1.0 / 9.0))
    tags = ["edge"] * 4 + ["line"] * 4 + ["lowpass"]
    kernels = [Kernel3x3(v, t, i + 1) for i, (v, t) in enumerate(zip(base, tags))]
    if count == 18:
        kernels += [Kernel3x3(-k.values, k.tag, k.index + 9) for k in kernels[:9]]
    return FilterBank(tuple(kernels), "edge_line")


def make_random_bank(count, seed):
    """Kernels with i.i.d. uniform [-1, 1] elements, not normalized."""
    if count < 1:
        raise ValueError("count must be >= 1")
    values = Xoshiro256(seed).uniform_array((count, 3, 3), -1.0, 1.0)
    return FilterBank(tuple(Kernel3x3(v, "random", i + 1) for i, v in enumerate(values)), "random")


def make_translating_bank():
    kernels = []
    for i in range(9):
        v = np.zeros((3, 3))
        v[divmod(i, 3)] = 1.0
        kernels.append(Kernel3x3(v, "translating", i + 1))
    return FilterBank(tuple(kernels), "translating")


def select_subset(bank, name):
    """Pick a named subset of an edge/line bank (1-based indices)."""
    if name not in SUBSETS:
        raise ValueError(f"unknown subset {name!r}; choose from {sorted(SUBSETS)}")
    indices = SUBSETS[name]
    if max(indices) > len(bank):
        raise ValueError(f"subset {name!r} needs an 18-kernel bank, got {len(bank)}")
    kernels = [bank.kernel(i) for i in indices]
    if name == "rank4":
        summed = bank.kernel(14).values + bank.kernel(16).values
        kernels.append(Kernel3x3(summed, "derived", len(bank) + 1))
    return FilterBank(tuple(kernels), bank.kind)


def row_reduce_rank(matrix, tol=1e-9):
    """Rank by Gaussian elimination with partial pivoting.

    Rows are scaled to unit max-norm first so the result does not depend on
    the magnitude of individual rows.
    """
    a = np.array(matrix, dtype=np.float64)
    scale = np.abs(a).max(axis=1, keepdims=True)
    a = a[scale[:, 0] > 0] / scale[scale[:, 0] > 0]
    rank = 0
    rows, cols = a.shape
    for col in range(cols):
        if rank == rows:
            break
        pivot = rank + int(np.argmax(np.abs(a[rank:, col])))
        if abs(a[pivot, col]) <= tol:
            continue
        a[[rank, pivot]] = a[[pivot, rank]]
        a[rank + 1:] -= np.outer(a[rank + 1:, col] / a[rank, col], a[rank])
        rank += 1
    return rank


def spanned_dimensions(bank):
    """How many of the nine kernel dimensions the bank spans."""
    return row_reduce_rank(bank.values.reshape(len(bank), 9))


def gaussian_kernel():
    """3x3 binomial blur, ``[1, 2, 1]^T [1, 2, 1] / 16``."""
    b = np.array([1.0, 2.0, 1.0])
    return np.outer(b, b) / 16.0


def format_bank(bank):
    """Plain-text dump: ``# index tag`` then 3 rows of 3 values (17 sig. digits)."""
    lines = []
    for k in bank:
        lines.append(f"# {k.index} {k.tag}")
        for row in k.values:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_bank(text, kind="custom"):
    kernels = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    for start in range(0, len(lines), 4):
        _, index, tag = lines[start].split()
        rows = [[float(v) for v in ln.split()] for ln in lines[start + 1:start + 4]]
        kernels.append(Kernel3x3(np.array(rows), tag, int(index)))
    return FilterBank(tuple(kernels), kind)


def bank_from_spec(spec):
    """Parse a bank name: ``edge_line9``, ``edge_line18``, ``translating``,
    ``random:<seed>[:<count>]``, ``subset:<name>`` or ``toy_lines``."""
    if spec == "edge_line9":
        return make_edge_line_bank(9)
    if spec == "edge_line18":
        return make_edge_line_bank(18)
    if spec == "translating":
        return make_translating_bank()
    if spec == "toy_lines":
        return FilterBank((Kernel3x3(HORIZONTAL_LINE, "derived", 1),
                           Kernel3x3(VERTICAL_LINE, "derived", 2)), "custom")
    kind, _, rest = spec.partition(":")
    if kind == "random" and rest:
        seed, _, count = rest.partition(":")
        try:
            return make_random_bank(int(count) if count else 9, int(seed))
        except ValueError:
            pass
    elif kind == "subset" and rest in SUBSETS:
        return select_subset(make_edge_line_bank(18), rest)
    raise ValueError(f"unknown filter bank {spec!r}")
