"""Partitions of the torus, symbolic dynamics and classical entropies.

Cells are unions of half-open rectangles ``[x0, x1) x [xi0, xi1)``.  Symbols
are 0-based integers; a word is a tuple of symbols.  Logarithms are natural.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .classical import MapSpec, wrap

Rect = tuple[float, float, float, float]
Word = tuple[int, ...]


class ResolutionWarning(UserWarning):
    """Monte-Carlo sample count is too small for the requested depth."""


@dataclass(frozen=True)
class PartitionSpec:
    cells: tuple[tuple[Rect, ...], ...]
    _grid: tuple[int, int] | None = field(default=None, repr=False)

    def __post_init__(self):
        cells = tuple(tuple(tuple(float(v) for v in r) for r in cell) for cell in self.cells)
        object.__setattr__(self, "cells", cells)
        for cell in cells:
            if not cell:
                raise ValueError("empty cell")
            for x0, x1, y0, y1 in cell:
                if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
                    raise ValueError(f"bad rectangle {(x0, x1, y0, y1)}")
        area = sum((x1 - x0) * (y1 - y0) for cell in cells for x0, x1, y0, y1 in cell)
        if abs(area - 1.0) > 1e-12:
            raise ValueError(f"cells cover area {area}, expected 1")
        test = (np.arange(64) + 0.5) / 64
        pts = np.stack(np.meshgrid(test, test, indexing="ij"), -1).reshape(-1, 2)
        hits = sum(self._mask(k, pts).astype(int) for k in range(len(cells)))
        if np.any(hits != 1):
            raise ValueError("cells overlap or leave gaps")

    @classmethod
    def grid(cls, nx: int, nxi: int = 1) -> "PartitionSpec":
        """``nx * nxi`` equal rectangles; cell index ``i * nxi + j``."""
        cells = [
            ((i / nx, (i + 1) / nx, j / nxi, (j + 1) / nxi),)
            for i in range(nx)
            for j in range(nxi)
        ]
        return cls(tuple(cells), _grid=(nx, nxi))

    @classmethod
    def vertical_strips(cls, edges: Sequence[float]) -> "PartitionSpec":
        """Strips ``[edges[k], edges[k+1]) x [0, 1)``; edges run 0 to 1."""
        edges = list(edges)
        if edges[0] != 0 or edges[-1] != 1:
            raise ValueError("strip edges must start at 0 and end at 1")
        return cls(tuple(((a, b, 0.0, 1.0),) for a, b in zip(edges, edges[1:])))

    @classmethod
    def halves(cls) -> "PartitionSpec":
        return cls.grid(2, 1)

    @property
    def K(self) -> int:
        return len(self.cells)

    @property
    def diameter(self) -> float:
        return max(
            math.hypot(max(r[1] for r in c) - min(r[0] for r in c), max(r[3] for r in c) - min(r[2] for r in c))
            for c in self.cells
        )

    @property
    def is_position_strips(self) -> bool:
        return all(y0 == 0.0 and y1 == 1.0 for cell in self.cells for _, _, y0, y1 in cell)

    def _mask(self, k: int, pts: np.ndarray) -> np.ndarray:
        mask = np.zeros(pts.shape[:-1], dtype=bool)
        for x0, x1, y0, y1 in self.cells[k]:
            mask |= (pts[..., 0] >= x0) & (pts[..., 0] < x1) & (pts[..., 1] >= y0) & (pts[..., 1] < y1)
        return mask

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        pts = wrap(np.asarray(points, dtype=float))
        if self._grid is not None:
            nx, nxi = self._grid
            i = np.minimum((pts[..., 0] * nx).astype(np.int64), nx - 1)
            j = np.minimum((pts[..., 1] * nxi).astype(np.int64), nxi - 1)
            return i * nxi + j
        idx = np.full(pts.shape[:-1], -1, dtype=np.int64)
        for k in range(self.K):
            idx[self._mask(k, pts)] = k
        return idx

    def cell_grid(self, k: int, size: int = 32) -> np.ndarray:
        """Deterministic ``size x size`` sample grid inside each rectangle of cell k."""
        out = []
        for x0, x1, y0, y1 in self.cells[k]:
            xs = x0 + (np.arange(size) + 0.5) * (x1 - x0) / size
            ys = y0 + (np.arange(size) + 0.5) * (y1 - y0) / size
            out.append(np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2))
        return np.concatenate(out)

    def indicator_grid(self, size: int) -> np.ndarray:
        """Array ``(K, size, size)`` of cell indicators at points ``i/size``."""
        pts = np.arange(size) / size
        grid = np.stack(np.meshgrid(pts, pts, indexing="ij"), -1)
        idx = self.cell_index(grid)
        return np.stack([(idx == k).astype(float) for k in range(self.K)])

    def to_config(self) -> list[list[list[float]]]:
        return [[list(r) for r in cell] for cell in self.cells]


# -- words and cylinder measures ---------------------------------------------------


def symbol_sequences(partition: PartitionSpec, spec: MapSpec, points: np.ndarray, n: int) -> np.ndarray:
    """Integer array ``(..., n)`` of cell indices of ``kappa^j(points)``."""
    pts = wrap(np.asarray(points, dtype=float))
    out = np.empty(pts.shape[:-1] + (n,), dtype=np.int64)
    for j in range(n):
        out[..., j] = partition.cell_index(pts)
        if j < n - 1:
            pts = spec.apply(pts)
    return out


def word_of_point(partition: PartitionSpec, spec: MapSpec, p, n: int) -> Word:
    if n < 1:
        raise ValueError("n must be at least 1")
    if hasattr(p, "as_array"):
        p = p.as_array()
    return tuple(int(s) for s in symbol_sequences(partition, spec, np.asarray(p, dtype=float), n))


def encode_words(symbols: np.ndarray, K: int) -> np.ndarray:
    codes = np.zeros(symbols.shape[:-1], dtype=np.int64)
    for j in range(symbols.shape[-1]):
        codes = codes * K + symbols[..., j]
    return codes


def decode_word(code: int, K: int, n: int) -> Word:
    out = []
    for _ in range(n):
        code, s = divmod(int(code), K)
        out.append(s)
    return tuple(reversed(out))


@dataclass
class ClassicalSymbolicMeasure:
    depth: int
    K: int
    weights: dict[Word, float]
    count: int
    seed: int | None = None
    flagged: bool = False

    def standard_error(self, word: Word) -> float:
        p = self.weights.get(tuple(word), 0.0)
        return math.sqrt(max(p * (1 - p), 0.0) / self.count)

    def marginal(self, n: int) -> "ClassicalSymbolicMeasure":
        """Measure of the first ``n`` symbols (prefix sums)."""
        if n > self.depth:
            raise ValueError("cannot extend a measure beyond its depth")
        out: dict[Word, float] = {}
        for w, p in self.weights.items():
            out[w[:n]] = out.get(w[:n], 0.0) + p
        return ClassicalSymbolicMeasure(n, self.K, out, self.count, self.seed, self.flagged)

    def shifted(self, shift: int, n: int) -> "ClassicalSymbolicMeasure":
        """Distribution of symbols ``shift .. shift+n-1``."""
        if shift + n > self.depth:
            raise ValueError("window exceeds depth")
        out: dict[Word, float] = {}
        for w, p in self.weights.items():
            key = w[shift : shift + n]
            out[key] = out.get(key, 0.0) + p
        return ClassicalSymbolicMeasure(n, self.K, out, self.count, self.seed, self.flagged)

    def total(self) -> float:
        return float(sum(self.weights.values()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["word", "weight", "standard_error"])
            for w in sorted(self.weights):
                writer.writerow([".".join(map(str, w)), repr(self.weights[w]), repr(self.standard_error(w))])


def cylinder_measures(
    points: np.ndarray, partition: PartitionSpec, spec: MapSpec, n: int, seed: int | None = None
) -> ClassicalSymbolicMeasure:
    """Empirical masses of the cylinders ``E_alpha`` for words of length ``n``."""
    pts = np.asarray(points, dtype=float)
    count = len(pts)
    if count < 10_000:
        raise ValueError("need at least 10^4 samples")
    K = partition.K
    if n == 0:
        return ClassicalSymbolicMeasure(0, K, {(): 1.0}, count, seed)
    flagged = n * math.log(K) > math.log(count)
    if flagged:
        warnings.warn(
            f"depth {n} with K={K} exceeds the resolution of {count} samples", ResolutionWarning, stacklevel=2
        )
    if K ** n >= 2**62:
        raise ValueError("word space too large to encode")
    codes = encode_words(symbol_sequences(partition, spec, pts, n), K)
    uniq, counts = np.unique(codes, return_counts=True)
    weights = {decode_word(c, K, n): k / count for c, k in zip(uniq, counts)}
    return ClassicalSymbolicMeasure(n, K, weights, count, seed, flagged)


# -- entropies and pressures -----------------------------------------------------


def eta(s):
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, -s * np.log(np.where(s > 0, s, 1.0)), 0.0)
    return out


def shannon_entropy(distribution: Iterable[float]) -> float:
    p = np.asarray(list(distribution), dtype=float)
    if np.any(p < 0):
        raise ValueError("negative probability")
    if p.sum() > 1 + 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()} > 1")
    return float(np.sum(eta(p)))


def classical_entropy(m: ClassicalSymbolicMeasure) -> float:
    return shannon_entropy(m.weights.values())


def entropy_standard_error(m: ClassicalSymbolicMeasure) -> float:
    """Delta-method standard error of the plug-in entropy."""
    p = np.array(list(m.weights.values()))
    p = p[p > 0]
    logp = np.log(p)
    var = np.sum(p * logp**2) - np.sum(p * logp) ** 2
    return float(math.sqrt(max(var, 0.0) / m.count))


def word_log_weight(word: Word, log_cell_weights: np.ndarray) -> float:
    return float(np.sum(log_cell_weights[list(word)])) if word else 0.0


def classical_pressure(m: ClassicalSymbolicMeasure, weights: Sequence[float]) -> float:
    """``H - 2 sum mu(E_alpha) log w_alpha`` with ``w_alpha = prod w_{alpha_j}``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    logw = np.log(w)
    potential = sum(p * word_log_weight(word, logw) for word, p in m.weights.items())
    return classical_entropy(m) - 2.0 * potential


class EntropyRate(NamedTuple):
    n: int
    block_rate: float  # H_n / n
    conditional_rate: float  # H_n - H_{n-1}
    entropy: float
    standard_error: float
    flagged: bool


class SubadditivityCheck(NamedTuple):
    n: int
    m: int
    violation: float  # H_{n+m} - H_n - H_m
    tolerance: float  # 3 standard errors

    @property
    def ok(self) -> bool:
        return self.violation <= self.tolerance


@dataclass
class EntropyRateReport:
    rates: list[EntropyRate]
    subadditivity: list[SubadditivityCheck]
    truncated: bool = False


def ks_entropy_rate(
    spec: MapSpec, partition: PartitionSpec, points: np.ndarray, n_list: Sequence[int]
) -> EntropyRateReport:
    """Finite-depth entropy rates of the measure sampled by ``points``.

    Reports the block rate ``H_n / n`` and the conditional rate
    ``H_n - H_{n-1}``; both converge to the KS entropy of the partition.
    Depths are truncated once distinct words exceed half the sample count.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    top = max(n_list)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        deepest = cylinder_measures(points, partition, spec, top)
    entropies = {0: 0.0}
    errors = {0: 0.0}
    truncated = False
    for n in range(1, top + 1):
        m = deepest.marginal(n)
        # once most samples sit in distinct words the plug-in entropy only counts samples
        if 2 * len(m.weights) > m.count:
            truncated = True
            break
        entropies[n] = classical_entropy(m)
        errors[n] = entropy_standard_error(m)
    rates = []
    for n in n_list:
        if n not in entropies or n == 0:
            continue
        rates.append(
            EntropyRate(
                n,
                entropies[n] / n,
                entropies[n] - entropies[n - 1],
                entropies[n],
                errors[n],
                n * math.log(partition.K) > math.log(deepest.count),
            )
        )
    checks = []
    depths = sorted(entropies)
    for a in depths[1:]:
        for b in depths[1:]:
            if b < a or a + b not in entropies:
                continue
            tol = 3.0 * (errors[a] + errors[b] + errors[a + b])
            checks.append(SubadditivityCheck(a, b, entropies[a + b] - entropies[a] - entropies[b], tol))
    return EntropyRateReport(rates, checks, truncated)


# -- smooth partitions -------------------------------------------------------------


def _bump(size: int, width: float) -> np.ndarray:
    """Periodic C-infinity bump of radius ``width`` on a ``size`` grid, summing to 1."""
    d = np.arange(size) / size
    d = np.minimum(d, 1 - d) / width
    with np.errstate(divide="ignore", over="ignore"):
        b = np.where(d < 1, np.exp(-1.0 / np.maximum(1 - d**2, 1e-300)), 0.0)
    return b / b.sum()


@dataclass(frozen=True)
class SmoothPartition:
    """Smoothed indicators ``pi_k`` sampled on a ``size x size`` grid.

    The grid values define trigonometric interpolants, so the Fourier
    coefficients are exact for the stored functions.
    """

    partition: PartitionSpec
    width: float
    values: np.ndarray = field(repr=False)  # (K, size, size)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def size(self) -> int:
        return self.values.shape[-1]

    def coefficients(self, k: int, sqrt: bool = False) -> np.ndarray:
        """Centered Fourier coefficients of ``pi_k`` (or its square root)."""
        f = np.sqrt(self.values[k]) if sqrt else self.values[k]
        c = np.fft.fft2(f) / f.size
        return np.fft.fftshift(c)

    def evaluate(self, k: int, points: np.ndarray) -> np.ndarray:
        """Nearest-grid-point evaluation."""
        pts = wrap(np.asarray(points, dtype=float))
        i = np.rint(pts * self.size).astype(int) % self.size
        return self.values[k][i[..., 0], i[..., 1]]


def smooth_partition(partition: PartitionSpec, width: float, size: int = 256) -> SmoothPartition:
    """Mollify the cell indicators with a compactly supported bump of radius ``width``.

    The result is renormalized so that the functions sum to one exactly on
    the grid; ``width = 0`` returns the indicators themselves.
    """
    if width < 0:
        raise ValueError("width must be nonnegative")
    min_side = min(min(r[1] - r[0], r[3] - r[2]) for cell in partition.cells for r in cell)
    if width >= min_side / 4:
        raise ValueError(f"width {width} too large for cells of side {min_side}")
    ind = partition.indicator_grid(size)
    if width * size < 1:
        values = ind
    else:
        b = _bump(size, width)
        kernel = np.fft.fft2(np.outer(b, b))
        values = np.real(np.fft.ifft2(np.fft.fft2(ind, axes=(1, 2)) * kernel, axes=(1, 2)))
        values[values < 1e-15] = 0.0
        values /= values.sum(axis=0, keepdims=True)
    return SmoothPartition(partition, float(width), values)
