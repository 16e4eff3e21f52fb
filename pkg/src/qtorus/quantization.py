"""Weyl quantization on the N-dimensional torus Hilbert space H_N.

Conventions: ``hbar = 1/(2 pi N)``; the position basis ``e_j`` is indexed by
``j in Z/NZ``; and the Weyl translation for frequency ``(m, n)`` acts as

    Op_N(e^{2i pi (m x + n xi)}) e_j = e^{i pi m n / N} e^{2i pi m (j - n) / N} e_{j-n}.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np
from scipy.signal import convolve2d

UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class HilbertSpace:
    N: int

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def two_pi_hbar(self) -> Fraction:
        """``2 pi hbar = 1/N`` held exactly."""
        return Fraction(1, self.N)

    @property
    def hbar(self) -> float:
        return 1.0 / (2.0 * math.pi * self.N)


def _as_space(space) -> HilbertSpace:
    return space if isinstance(space, HilbertSpace) else HilbertSpace(int(space))


@dataclass(frozen=True)
class TorusOperator:
    """Dense operator on H_N in the position basis.

    ``hermitian`` and ``unitary`` are claims checked at construction.
    """

    matrix: np.ndarray = field(repr=False)
    hermitian: bool = False
    unitary: bool = False

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        object.__setattr__(self, "matrix", a)
        if self.hermitian and hermitian_defect(a) >= UNITARY_TOL:
            raise ValueError(f"operator is not hermitian (defect {hermitian_defect(a):.2e})")
        if self.unitary and unitarity_defect(a) >= UNITARY_TOL:
            raise ValueError(f"operator is not unitary (defect {unitarity_defect(a):.2e})")

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def H(self) -> "TorusOperator":
        return TorusOperator(self.matrix.conj().T, self.hermitian, self.unitary)

    def __matmul__(self, other):
        if isinstance(other, TorusOperator):
            return TorusOperator(
                self.matrix @ other.matrix, unitary=self.unitary and other.unitary
            )
        return self.matrix @ other

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def hermitian_defect(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - a.conj().T, 2))


def unitarity_defect(a: np.ndarray) -> float:
    return float(np.linalg.norm(a.conj().T @ a - np.eye(a.shape[0]), 2))


@dataclass(frozen=True)
class TrigSymbol:
    """Trigonometric polynomial with centered coefficient array.

    ``coeffs[m + M, n + M]`` multiplies ``exp(2i pi (m x + n xi))`` for
    ``|m|, |n| <= M``.
    """

    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 == 0:
            raise ValueError("coefficient array must be square with odd side")
        object.__setattr__(self, "coeffs", c)

    @property
    def cutoff(self) -> int:
        return self.coeffs.shape[0] // 2

    @classmethod
    def from_dict(cls, table: Mapping[tuple[int, int], complex], cutoff: int | None = None) -> "TrigSymbol":
        if cutoff is None:
            cutoff = max((max(abs(m), abs(n)) for m, n in table), default=0)
        c = np.zeros((2 * cutoff + 1, 2 * cutoff + 1), dtype=complex)
        for (m, n), v in table.items():
            if max(abs(m), abs(n)) > cutoff:
                raise ValueError(f"frequency {(m, n)} beyond cutoff {cutoff}")
            c[m + cutoff, n + cutoff] += v
        return cls(c)

    @classmethod
    def from_kick(cls, kick) -> "TrigSymbol":
        return cls.from_dict(kick.table())

    @classmethod
    def from_grid(cls, values: np.ndarray, cutoff: int | None = None) -> "TrigSymbol":
        """Interpolating symbol of samples at ``(i/G, j/G)``, truncated to ``cutoff``."""
        G = values.shape[0]
        c = np.fft.fftshift(np.fft.fft2(values) / values.size)
        if G % 2 == 0:
            # split the Nyquist row/column symmetrically so real data stays real
            c = np.pad(c, ((0, 1), (0, 1)))
            c[-1, :] = c[0, :] / 2
            c[0, :] /= 2
            c[:, -1] = c[:, 0] / 2
            c[:, 0] /= 2
        sym = cls(c)
        return sym if cutoff is None else sym.truncate(cutoff)[0]

    @classmethod
    def constant(cls, value: complex = 1.0) -> "TrigSymbol":
        return cls(np.array([[value]], dtype=complex))

    def items(self):
        M = self.cutoff
        for i, j in zip(*np.nonzero(self.coeffs)):
            yield (int(i) - M, int(j) - M), complex(self.coeffs[i, j])

    def to_dict(self) -> dict[tuple[int, int], complex]:
        return dict(self.items())

    @property
    def is_real(self) -> bool:
        return bool(np.allclose(self.coeffs, np.conj(self.coeffs[::-1, ::-1]), atol=1e-14, rtol=0))

    def conj(self) -> "TrigSymbol":
        return TrigSymbol(np.conj(self.coeffs[::-1, ::-1]))

    def l1(self) -> float:
        return float(np.abs(self.coeffs).sum())

    def pad(self, cutoff: int) -> "TrigSymbol":
        extra = cutoff - self.cutoff
        if extra < 0:
            raise ValueError("pad cannot shrink")
        return TrigSymbol(np.pad(self.coeffs, extra))

    def truncate(self, cutoff: int) -> tuple["TrigSymbol", float]:
        """Drop modes beyond ``cutoff``; also return the l1 mass dropped."""
        if cutoff >= self.cutoff:
            return self.pad(cutoff), 0.0
        s = self.cutoff - cutoff
        kept = self.coeffs[s:-s, s:-s]
        return TrigSymbol(kept.copy()), float(np.abs(self.coeffs).sum() - np.abs(kept).sum())

    def __add__(self, other: "TrigSymbol") -> "TrigSymbol":
        M = max(self.cutoff, other.cutoff)
        return TrigSymbol(self.pad(M).coeffs + other.pad(M).coeffs)

    def __mul__(self, other):
        if isinstance(other, TrigSymbol):
            return TrigSymbol(convolve2d(self.coeffs, other.coeffs))
        return TrigSymbol(self.coeffs * other)

    __rmul__ = __mul__

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        M = self.cutoff
        k = np.arange(-M, M + 1)
        ex = np.exp(2j * np.pi * pts[..., 0, None] * k)
        ey = np.exp(2j * np.pi * pts[..., 1, None] * k)
        return np.einsum("...i,ij,...j->...", ex, self.coeffs, ey)

    def linear_pullback(self, matrix: np.ndarray) -> "TrigSymbol":
        """Exact ``f o S`` for an integer matrix ``S``: frequency ``k -> S^T k``."""
        st = np.asarray(matrix, dtype=np.int64).T
        table: dict[tuple[int, int], complex] = {}
        for (m, n), c in self.items():
            k = st @ np.array([m, n])
            key = (int(k[0]), int(k[1]))
            table[key] = table.get(key, 0) + c
        return TrigSymbol.from_dict(table)


def translation_operator(space, m: int, n: int) -> TorusOperator:
    N = _as_space(space).N
    j = np.arange(N)
    a = np.zeros((N, N), dtype=complex)
    a[(j - n) % N, j] = np.exp(1j * np.pi * m * n / N) * np.exp(2j * np.pi * m * (j - n) / N)
    return TorusOperator(a, unitary=True)


def weyl_matrix(N: int, f: TrigSymbol) -> np.ndarray:
    """Dense ``Op_N(f)``.

    Column ``j`` of the frequency-``n`` slice is the partial sum
    ``g_n(x) = sum_m c_{m,n} e^{2i pi m x}`` at the midpoint ``x = (j - n/2)/N``.
    """
    M = f.cutoff
    ks = np.arange(-M, M + 1)
    j = np.arange(N)
    a = np.zeros((N, N), dtype=complex)
    for col, n in enumerate(ks):
        c = f.coeffs[:, col]
        nz = np.nonzero(c)[0]
        if nz.size == 0:
            continue
        x = (j - n / 2) / N
        g = np.exp(2j * np.pi * np.outer(x, ks[nz])) @ c[nz]
        a[(j - n) % N, j] += g
    return a


def op_N(space, f: TrigSymbol) -> TorusOperator:
    a = weyl_matrix(_as_space(space).N, f)
    return TorusOperator(a, hermitian=f.is_real)


def dft(space) -> TorusOperator:
    N = _as_space(space).N
    j = np.arange(N)
    return TorusOperator(np.exp(-2j * np.pi * np.outer(j, j) / N) / math.sqrt(N), unitary=True)


def expectation(psi: np.ndarray, A) -> complex:
    a = A.matrix if isinstance(A, TorusOperator) else np.asarray(A)
    psi = np.asarray(psi)
    if psi.shape[0] != a.shape[0]:
        raise ValueError(f"state of dimension {psi.shape[0]} vs operator of dimension {a.shape[0]}")
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("state is not normalized")
    return complex(np.vdot(psi, a @ psi))


def position_state(space, j: int) -> np.ndarray:
    N = _as_space(space).N
    psi = np.zeros(N, dtype=complex)
    psi[j % N] = 1.0
    return psi


def uniform_state(space) -> np.ndarray:
    N = _as_space(space).N
    return np.full(N, 1 / math.sqrt(N), dtype=complex)


IMAGES = 5


def coherent_state(space, q: float, p: float) -> np.ndarray:
    """Periodized Gaussian of width sqrt(hbar) centered at ``(q, p)``, normalized."""
    N = _as_space(space).N
    x = np.arange(N) / N
    psi = np.zeros(N, dtype=complex)
    for nu in range(-IMAGES, IMAGES + 1):
        d = x - q - nu
        psi += np.exp(-math.pi * N * d**2 + 2j * math.pi * N * p * d)
    return psi / np.linalg.norm(psi)


def husimi(psi: np.ndarray, resolution: int) -> np.ndarray:
    """Husimi density ``|<coherent(q_a, p_b), psi>|^2`` on a ``resolution^2`` grid.

    Row ``a`` is position ``q = a/resolution``, column ``b`` momentum
    ``p = b/resolution``.  The grid is normalized to sum to one.
    """
    psi = np.asarray(psi, dtype=complex)
    N = psi.shape[0]
    R = int(resolution)
    if R < N:
        raise ValueError("resolution must be at least N")
    x = np.arange(N) / N
    p = np.arange(R) / R
    nus = np.arange(-IMAGES, IMAGES + 1)
    out = np.empty((R, R))
    for a in range(R):
        q = a / R
        gauss = np.exp(-math.pi * N * (x[None, :] - q - nus[:, None]) ** 2)  # (images, N)
        # sum_j gauss * psi * e^{-2i pi b j / R} is a zero-padded FFT
        spectra = np.fft.fft(gauss * psi[None, :], n=R, axis=1)
        overlap = np.sum(np.exp(2j * math.pi * N * np.outer(p, q + nus)) * spectra.T, axis=1)
        amp = np.exp(2j * math.pi * N * np.outer(p, nus)) @ gauss
        out[a] = np.abs(overlap) ** 2 / np.sum(np.abs(amp) ** 2, axis=1)
    return out / out.sum()


def write_grid_csv(path, grid: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in grid])


def write_grid_binary(path, grid: np.ndarray, N: int) -> None:
    """Header: two little-endian int64 (N, resolution); then float64 row-major."""
    grid = np.ascontiguousarray(grid, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.array([N, grid.shape[0]], dtype="<i8").tobytes())
        fh.write(grid.tobytes())


def read_grid_binary(path) -> tuple[int, np.ndarray]:
    raw = open(path, "rb").read()
    N, R = np.frombuffer(raw[:16], dtype="<i8")
    return int(N), np.frombuffer(raw[16:], dtype="<f8").reshape(R, R).copy()


def write_state_csv(path, psi: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "re", "im"])
        for j, v in enumerate(psi):
            writer.writerow([j, repr(float(v.real)), repr(float(v.imag))])
