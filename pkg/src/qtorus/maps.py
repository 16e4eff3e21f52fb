"""Quantum propagators on H_N: metaplectic cat maps, kicks, spectra, Egorov residuals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import schur

from .classical import KickHamiltonian, MapSpec, SymplecticMatrix
from .quantization import (
    HilbertSpace,
    TorusOperator,
    TrigSymbol,
    _as_space,
    unitarity_defect,
    weyl_matrix,
)


class CheckerboardError(ValueError):
    """The matrix does not quantize consistently on H_N."""


class UnsupportedKernelError(ValueError):
    """gcd(b, N) > 1: the single-kernel formula does not apply."""


class EigenResidualError(RuntimeError):
    pass


@dataclass(frozen=True)
class Propagator:
    space: HilbertSpace
    U: TorusOperator = field(repr=False)
    matrix_spec: SymplecticMatrix | None = None
    kick: KickHamiltonian | None = None

    def __post_init__(self):
        if not self.U.unitary:
            raise ValueError("propagator must be tagged unitary")

    @property
    def matrix(self) -> np.ndarray:
        return self.U.matrix

    @property
    def N(self) -> int:
        return self.space.N

    def power(self, t: int) -> np.ndarray:
        base = self.matrix if t >= 0 else self.matrix.conj().T
        return np.linalg.matrix_power(base, abs(t))


def metaplectic_matrix(N: int, S: SymplecticMatrix) -> np.ndarray:
    """Kernel of the quantized linear map ``S`` on H_N.

    ``U[k, j] = (N |b|)^{-1/2} sum_{nu < |b|} exp(i pi (d k_nu^2 - 2 k_nu j + a j^2) / (N b))``
    with ``k_nu = k + nu N``.  For ``|b| = 1`` this is a single Gaussian
    kernel; ``S = [[0, 1], [-1, 0]]`` gives the DFT exactly.
    """
    a, b, d = S.a, S.b, S.d
    if b == 0:
        raise UnsupportedKernelError("b = 0 has no position-space kernel")
    if math.gcd(abs(b), N) != 1:
        raise UnsupportedKernelError(f"gcd(b={b}, N={N}) > 1 is not supported")
    k = np.arange(N, dtype=np.int64)[:, None]
    j = np.arange(N, dtype=np.int64)[None, :]
    out = np.zeros((N, N), dtype=complex)
    period = 2 * N * abs(b)
    for nu in range(abs(b)):
        kk = k + nu * N
        # exact integer phase numerator, reduced mod 2 N b before the exponential
        num = (d * kk * kk - 2 * kk * j + a * j * j) % period
        out += np.exp(1j * np.pi * num / (N * b))
    return out / math.sqrt(N * abs(b))


def metaplectic(space, S: SymplecticMatrix) -> Propagator:
    space = _as_space(space)
    if not S.checkerboard:
        raise CheckerboardError(
            f"{S.rows()} violates the checkerboard condition: a*b={S.a * S.b} and c*d={S.c * S.d} must be even"
        )
    if abs(S.trace) == 2:
        raise ValueError("parabolic matrices are not supported")
    U = metaplectic_matrix(space.N, S)
    return Propagator(space, TorusOperator(U, unitary=True), S, None)


def kick_operator(space, kick: KickHamiltonian) -> TorusOperator:
    """``exp(-2 i pi N Op_N(p))``; closed form for position-only kicks."""
    N = _as_space(space).N
    if kick.form == "position":
        x = np.stack([np.arange(N) / N, np.zeros(N)], axis=1)
        return TorusOperator(np.diag(np.exp(-2j * np.pi * N * kick.value(x))), unitary=True)
    P = weyl_matrix(N, TrigSymbol.from_kick(kick))
    P = (P + P.conj().T) / 2
    w, V = np.linalg.eigh(P)
    return TorusOperator((V * np.exp(-2j * np.pi * N * w)) @ V.conj().T, unitary=True)


def propagator(space, spec: MapSpec) -> Propagator:
    """``U_N(kappa) = exp(-2 i pi N Op_N(p)) U_N(kappa0)``."""
    space = _as_space(space)
    base = metaplectic(space, spec.linear)
    if spec.is_linear:
        return base
    K = kick_operator(space, spec.kick)
    U = K.matrix @ base.matrix
    return Propagator(space, TorusOperator(U, unitary=True), spec.linear, spec.kick)


@dataclass(frozen=True)
class Spectrum:
    eigenphases: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)  # columns
    residuals: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.eigenphases)

    def state(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, k]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "eigenphase", "residual"])
            for i, (t, r) in enumerate(zip(self.eigenphases, self.residuals)):
                writer.writerow([i, f"{t:.15e}", f"{r:.6e}"])


def _clusters(phases: np.ndarray, tol: float) -> list[np.ndarray]:
    order = np.argsort(phases)
    groups, current = [], [order[0]]
    for a, b in zip(order, order[1:]):
        if phases[b] - phases[a] <= tol:
            current.append(b)
        else:
            groups.append(np.array(current))
            current = [b]
    groups.append(np.array(current))
    if len(groups) > 1 and phases[order[0]] + 2 * np.pi - phases[order[-1]] <= tol:
        groups[0] = np.concatenate([groups.pop(), groups[0]])
    return groups


def eigensystem(prop: Propagator, cluster_tol: float = 1e-8, residual_tol: float = 1e-8) -> Spectrum:
    """Eigenphases in [0, 2 pi), sorted, with orthonormal eigenvectors.

    Uses the complex Schur form (diagonal for a normal matrix) and
    re-orthonormalizes each cluster of nearly degenerate phases.
    """
    U = prop.matrix
    T, Z = schur(U, output="complex")
    lam = np.diag(T)
    phases = np.mod(np.angle(lam), 2 * np.pi)
    phases[phases >= 2 * np.pi] = 0.0
    for group in _clusters(phases, cluster_tol):
        if len(group) > 1:
            q, _ = np.linalg.qr(Z[:, group])
            Z[:, group] = q
    order = np.argsort(phases, kind="stable")
    phases, Z = phases[order], Z[:, order]
    resid = np.linalg.norm(U @ Z - Z * np.exp(1j * phases)[None, :], axis=0)
    worst = int(np.argmax(resid))
    if resid[worst] > residual_tol:
        raise EigenResidualError(f"eigenvector {worst} has residual {resid[worst]:.2e}")
    return Spectrum(phases, Z, resid)


def quantum_period(prop: Propagator, max_period: int = 1000, tol: float = 1e-9) -> tuple[int, complex]:
    """Smallest ``P`` with ``U^P = phase * Id``; returns ``(P, phase)``."""
    U = prop.matrix
    N = U.shape[0]
    W = np.eye(N, dtype=complex)
    for P in range(1, max_period + 1):
        W = W @ U
        phase = W[0, 0]
        if abs(abs(phase) - 1) < tol and np.abs(W - phase * np.eye(N)).max() < tol:
            return P, complex(phase)
    raise RuntimeError(f"no quantum period up to {max_period}")


# -- Egorov -------------------------------------------------------------------------


class EgorovResidual(NamedTuple):
    residual: float
    tail_mass: float
    truncated: bool


def pullback_symbol(
    spec: MapSpec, f: TrigSymbol, t: int, cutoff: int = 64, grid: int = 256
) -> tuple[TrigSymbol, float]:
    """``f o kappa^t`` as a trigonometric polynomial plus the dropped l1 mass.

    Exact frequency reindexing for linear maps; otherwise ``f o kappa^t`` is
    sampled on a ``grid x grid`` lattice, transformed and truncated.
    """
    if spec.is_linear:
        return f.linear_pullback(spec.linear.power(t).array), 0.0
    xs = np.arange(grid) / grid
    pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), -1)
    values = f.evaluate(spec.iterate(pts, t))
    full = TrigSymbol.from_grid(values)
    kept, tail = full.truncate(min(cutoff, full.cutoff))
    return kept, tail


def egorov_residual(
    space, spec: MapSpec, f: TrigSymbol, t: int, n_max: int = 64, cutoff: int = 64, grid: int = 256,
    prop: Propagator | None = None,
) -> EgorovResidual:
    """``|| U^{-t} Op_N(f) U^t - Op_N(f o kappa^t) ||`` in operator norm."""
    if abs(t) > n_max:
        raise ValueError(f"|t|={abs(t)} exceeds n_max={n_max}")
    space = _as_space(space)
    if prop is None:
        prop = propagator(space, spec)
    Ut = prop.power(t)
    A = weyl_matrix(space.N, f)
    lhs = Ut.conj().T @ A @ Ut
    g, tail = pullback_symbol(spec, f, t, cutoff, grid)
    R = lhs - weyl_matrix(space.N, g)
    return EgorovResidual(float(np.linalg.norm(R, 2)), tail, tail > 1e-12)


def unitarity_residual(prop: Propagator) -> float:
    return unitarity_defect(prop.matrix)
