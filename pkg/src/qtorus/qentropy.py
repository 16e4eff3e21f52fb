"""Quantum partitions, symbolic measures, entropies, pressures and uncertainty bounds.

Words are tuples of 0-based symbols.  For a word ``alpha`` of length ``n``
the refined operator is ``Pi_alpha = U^{-n+1} Pi_{alpha_{n-1}} U ... U Pi_{alpha_0}``;
its leading unitary factor never changes a norm and is dropped when norms
are computed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Literal, NamedTuple, Sequence

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .classical import MapSpec, cell_jacobians, lyapunov_max
from .maps import Propagator, Spectrum
from .partitions import PartitionSpec, SmoothPartition, Word, eta
from .quantization import TorusOperator, TrigSymbol, _as_space, weyl_matrix

Mode = Literal["sharp", "smooth"]


class PartitionModeError(ValueError):
    pass


# -- quantum partitions -------------------------------------------------------------


@dataclass(frozen=True)
class QuantumPartition:
    """Hermitian ``Pi_1..Pi_K`` with ``sum Pi_k^2 = Id`` up to ``residual``.

    Sharp partitions keep only the diagonal of each projector (``masks``);
    smooth ones keep dense matrices.
    """

    mode: Mode
    N: int
    residual: float
    masks: np.ndarray | None = field(default=None, repr=False)  # (K, N) float 0/1
    matrices: np.ndarray | None = field(default=None, repr=False)  # (K, N, N)

    @property
    def K(self) -> int:
        return len(self.masks) if self.mode == "sharp" else len(self.matrices)

    def apply(self, k: int, v: np.ndarray) -> np.ndarray:
        """``Pi_k v`` for a vector or a stack of row vectors ``(..., N)``."""
        if self.mode == "sharp":
            return v * self.masks[k]
        return v @ self.matrices[k].T

    def operator(self, k: int) -> TorusOperator:
        if self.mode == "sharp":
            return TorusOperator(np.diag(self.masks[k]).astype(complex), hermitian=True)
        return TorusOperator(self.matrices[k], hermitian=True)

    def factor(self, k: int) -> np.ndarray:
        return self.masks[k] if self.mode == "sharp" else self.matrices[k]


def _sharp_partition(N: int, partition: PartitionSpec) -> QuantumPartition:
    if not partition.is_position_strips:
        raise PartitionModeError(
            "sharp mode needs cells that are position strips; use mode='smooth' with a SmoothPartition"
        )
    pts = np.stack([np.arange(N) / N, np.zeros(N)], axis=1)
    idx = partition.cell_index(pts)
    masks = np.stack([(idx == k).astype(float) for k in range(partition.K)])
    residual = float(np.abs(masks.sum(axis=0) - 1).max())
    return QuantumPartition("sharp", N, residual, masks=masks)


def _smooth_partition(N: int, smooth: SmoothPartition) -> QuantumPartition:
    mats = []
    for k in range(smooth.K):
        root = TrigSymbol.from_grid(np.sqrt(smooth.values[k]))
        a = weyl_matrix(N, root)
        mats.append((a + a.conj().T) / 2)
    mats = np.array(mats)
    total = np.einsum("kij,kjl->il", mats, mats)
    residual = float(np.linalg.norm(total - np.eye(N), 2))
    return QuantumPartition("smooth", N, residual, matrices=mats)


def quantize_partition(space, partition: PartitionSpec | SmoothPartition, mode: Mode = "sharp") -> QuantumPartition:
    N = _as_space(space).N
    if mode == "sharp":
        if isinstance(partition, SmoothPartition):
            partition = partition.partition
        return _sharp_partition(N, partition)
    if mode == "smooth":
        if not isinstance(partition, SmoothPartition):
            raise PartitionModeError("smooth mode takes a SmoothPartition")
        return _smooth_partition(N, partition)
    raise ValueError(f"unknown mode {mode!r}")


# -- symbolic measures --------------------------------------------------------------


@dataclass
class QuantumSymbolicMeasure:
    """Weights ``||Pi_alpha psi||^2`` for all words up to length ``depth``.

    ``levels[l]`` maps each unpruned word of length ``l`` to its weight.
    ``compatibility[l]`` is ``max |w(alpha) - sum_k w(alpha k)|`` over the
    parents at level ``l - 1`` (before pruning).
    """

    depth: int
    K: int
    levels: list[dict[Word, float]]
    prune: float
    pruned_mass: float
    direction: Literal["forward", "backward"]
    partition_residual: float
    compatibility: list[float]

    @property
    def weights(self) -> dict[Word, float]:
        return self.levels[self.depth]

    def level(self, n: int) -> dict[Word, float]:
        return self.levels[n]

    def total(self, n: int | None = None) -> float:
        return float(sum(self.levels[self.depth if n is None else n].values()))

    def mass_bounds(self) -> tuple[float, float]:
        slack = self.partition_residual * self.depth + 1e-9
        return 1.0 - slack, 1.0 + slack

    def marginal(self, n: int) -> "QuantumSymbolicMeasure":
        return QuantumSymbolicMeasure(
            n, self.K, self.levels[: n + 1], self.prune, self.pruned_mass,
            self.direction, self.partition_residual, self.compatibility[: n + 1],
        )

    def to_csv(self, path, jacobians: np.ndarray | None = None) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["word", "weight"]
            if jacobians is not None:
                header += ["log_jacobian", "pressure_term"]
            writer.writerow(header)
            for w in sorted(self.weights):
                p = self.weights[w]
                row = [".".join(map(str, w)), f"{p:.15e}"]
                if jacobians is not None:
                    lj = float(np.sum(np.log(jacobians[list(w)])))
                    row += [f"{lj:.15e}", f"{float(eta(p)) - p * lj:.15e}"]
                writer.writerow(row)

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "K": self.K,
            "direction": self.direction,
            "prune": self.prune,
            "pruned_mass": self.pruned_mass,
            "partition_residual": self.partition_residual,
            "compatibility": self.compatibility,
            "weights": {".".join(map(str, w)): p for w, p in sorted(self.weights.items())},
        }


def _grow_tree(
    psi: np.ndarray, qp: QuantumPartition, step: np.ndarray, n: int, prune: float, first_step: bool, direction
) -> QuantumSymbolicMeasure:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (qp.N,):
        raise ValueError(f"state has shape {psi.shape}, expected ({qp.N},)")
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("state must be normalized")
    if n < 0:
        raise ValueError("depth must be nonnegative")
    if prune >= 1.0 / qp.K:
        raise ValueError(f"prune threshold {prune} >= 1/K would empty the tree")
    K = qp.K
    words: list[Word] = [()]
    vecs = psi[None, :]
    weights = np.array([1.0])
    levels: list[dict[Word, float]] = [{(): 1.0}]
    compat = [0.0]
    pruned = 0.0
    for level in range(n):
        moved = vecs @ step.T if (level > 0 or first_step) else vecs
        children = np.stack([qp.apply(k, moved) for k in range(K)], axis=1)  # (M, K, N)
        cw = np.sum(np.abs(children) ** 2, axis=-1)
        compat.append(float(np.abs(cw.sum(axis=1) - weights).max()) if len(weights) else 0.0)
        keep = cw >= prune
        pruned += float(cw[~keep].sum())
        idx_parent, idx_k = np.nonzero(keep)
        words = [words[i] + (int(k),) for i, k in zip(idx_parent, idx_k)]
        vecs = children[idx_parent, idx_k]
        weights = cw[idx_parent, idx_k]
        levels.append(dict(zip(words, weights.tolist())))
    return QuantumSymbolicMeasure(n, K, levels, prune, pruned, direction, qp.residual, compat)


def _unitary(U) -> np.ndarray:
    if isinstance(U, Propagator):
        return U.matrix
    if isinstance(U, TorusOperator):
        return U.matrix
    return np.asarray(U)


def refined_measure(psi, qp: QuantumPartition, U, n: int, prune: float = 1e-12) -> QuantumSymbolicMeasure:
    """Forward tree: ``v_{alpha_0} = Pi_{alpha_0} psi``, ``v_{alpha k} = Pi_k U v_alpha``."""
    return _grow_tree(psi, qp, _unitary(U), n, prune, first_step=False, direction="forward")


def backward_refined_measure(psi, qp: QuantumPartition, U, n: int, prune: float = 1e-12) -> QuantumSymbolicMeasure:
    """Backward tree: ``w_beta = Pi_{beta_{n-1}}(-n) ... Pi_{beta_0}(-1) psi``.

    With ``Pi(t) = U^{-t} Pi U^t`` this has the norm of
    ``Pi_{beta_{n-1}} U^{-1} ... Pi_{beta_0} U^{-1} psi``.
    """
    return _grow_tree(psi, qp, _unitary(U).conj().T, n, prune, first_step=True, direction="backward")


def quantum_entropy(m: QuantumSymbolicMeasure) -> float:
    return float(np.sum(eta(np.fromiter(m.weights.values(), float))))


def entropy_correction(m: QuantumSymbolicMeasure) -> float:
    """Upper bound on the entropy hidden in pruned branches."""
    return float(eta(m.pruned_mass)) + m.pruned_mass * m.depth * math.log(m.K)


def _level_entropy(weights: dict[Word, float]) -> float:
    return float(np.sum(eta(np.fromiter(weights.values(), float)))) if weights else 0.0


def _jacobian_mean(weights: dict[Word, float], log_j: np.ndarray) -> float:
    return float(sum(p * np.sum(log_j[list(w)]) for w, p in weights.items()))


@dataclass(frozen=True)
class PressureReport:
    n: int
    entropy: float
    pressure: float
    jacobian_mean: float  # per step: sum mu(alpha) log J_n(alpha) / n
    lambda_max: float
    weight_scheme: str = "sqrt-unstable-jacobian"
    pruned_mass: float = 0.0
    correction: float = 0.0
    label: str = ""

    @property
    def entropy_rate(self) -> float:
        return self.entropy / self.n if self.n else 0.0

    @property
    def bound(self) -> float:
        return self.jacobian_mean - self.lambda_max / 2

    @property
    def slack(self) -> float:
        return self.entropy_rate - self.bound

    def as_row(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "entropy": self.entropy,
            "entropy_rate": self.entropy_rate,
            "pressure": self.pressure,
            "jacobian_mean": self.jacobian_mean,
            "bound": self.bound,
            "slack": self.slack,
            "pruned_mass": self.pruned_mass,
            "correction": self.correction,
        }


def quantum_pressure(
    m: QuantumSymbolicMeasure,
    spec: MapSpec | None,
    partition: PartitionSpec | None,
    cell_values: np.ndarray | None = None,
    lambda_max: float | None = None,
    label: str = "",
) -> PressureReport:
    """``H - sum mu(alpha) log J_n^u(alpha)`` (weights ``J^{1/2}``).

    ``cell_values`` overrides the per-cell Jacobians; all ones gives the
    unit-weight pressure, which equals the entropy.
    """
    if cell_values is None:
        if spec is None or partition is None:
            raise ValueError("Jacobians need a map and a partition")
        cell_values = cell_jacobians(spec, partition)
    cell_values = np.asarray(cell_values, dtype=float)
    if len(cell_values) != m.K or np.any(~np.isfinite(cell_values)) or np.any(cell_values <= 0):
        raise ValueError("missing or invalid Jacobian for some cell")
    if lambda_max is None:
        lambda_max = lyapunov_max(spec).lambda_max if spec is not None else 0.0
    log_j = np.log(cell_values)
    H = quantum_entropy(m)
    potential = _jacobian_mean(m.weights, log_j)
    return PressureReport(
        n=m.depth,
        entropy=H,
        pressure=H - potential,
        jacobian_mean=potential / m.depth if m.depth else 0.0,
        lambda_max=float(lambda_max),
        pruned_mass=m.pruned_mass,
        correction=entropy_correction(m),
        label=label,
    )


def shift_invariance_residual(psi, qp: QuantumPartition, U, n: int, n0: int, prune: float = 0.0) -> float:
    """``max_beta |mu(sigma^{-n}[beta]) - mu([beta])|`` over words of length ``n0``.

    ``mu(sigma^{-n}[beta]) = sum_alpha mu([alpha beta])`` with ``|alpha| = n``.
    """
    if n == 0 or n0 == 0:
        return 0.0
    m = refined_measure(psi, qp, U, n + n0, prune)
    shifted: dict[Word, float] = {}
    for w, p in m.weights.items():
        shifted[w[n:]] = shifted.get(w[n:], 0.0) + p
    base = m.level(n0)
    keys = set(shifted) | set(base)
    return float(max(abs(shifted.get(b, 0.0) - base.get(b, 0.0)) for b in keys))


def pressure_subadditivity_residual(m, spec, partition, n: int, n0: int, cell_values=None) -> float:
    """``p_0^{n+n0-1} - p_0^{n-1} - p_0^{n0-1}`` from the level marginals of ``m``.

    Works for quantum and classical symbolic measures.  Pass
    ``cell_values = np.ones(K)`` for unit weights.
    """
    if n + n0 > m.depth:
        raise ValueError("n + n0 exceeds the depth of the measure")
    if cell_values is None:
        cell_values = cell_jacobians(spec, partition)
    log_j = np.log(np.asarray(cell_values, dtype=float))

    def pressure(k: int) -> float:
        w = m.level(k) if hasattr(m, "level") else m.marginal(k).weights
        return _level_entropy(w) - _jacobian_mean(w, log_j)

    return pressure(n + n0) - pressure(n) - pressure(n0)


# -- operator chains and norms ------------------------------------------------------


class ChainNorm(NamedTuple):
    value: float
    converged: bool
    iterations: int
    last_two: tuple[float, float]


def _apply_chain(factors: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """Apply ``F_m ... F_1`` (factors listed in application order)."""
    for f in factors:
        v = f * v if f.ndim == 1 else f @ v
    return v


def _apply_chain_adjoint(factors: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    for f in reversed(factors):
        v = np.conj(f) * v if f.ndim == 1 else f.conj().T @ v
    return v


def chain_norm(
    factors: Sequence[np.ndarray],
    N: int,
    method: Literal["power", "lanczos"] = "power",
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 0,
) -> ChainNorm:
    """Operator norm of a product of factors without forming the product.

    ``power`` iterates on ``A^dagger A``; ``lanczos`` uses ARPACK on the same
    operator and falls back to ``power`` if it does not converge.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(N) + 1j * rng.standard_normal(N)

    def gram(x):
        return _apply_chain_adjoint(factors, _apply_chain(factors, x))

    if method == "lanczos" and N > 2:
        op = LinearOperator((N, N), matvec=gram, dtype=complex)
        try:
            val = eigsh(op, k=1, which="LA", v0=v, tol=tol, maxiter=max_iter * N, ncv=min(N - 1, 24),
                        return_eigenvectors=False)
            lam = float(max(val[0], 0.0))
            return ChainNorm(math.sqrt(lam), True, 0, (math.sqrt(lam), math.sqrt(lam)))
        except ArpackNoConvergence:
            pass
    v /= np.linalg.norm(v)
    prev = 0.0
    est = 0.0
    for it in range(1, max_iter + 1):
        w = gram(v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return ChainNorm(0.0, True, it, (prev, 0.0))
        v = w / est
        if abs(est - prev) <= tol * est:
            return ChainNorm(math.sqrt(est), True, it, (math.sqrt(prev), math.sqrt(est)))
        prev = est
    return ChainNorm(math.sqrt(est), False, max_iter, (math.sqrt(prev), math.sqrt(est)))


def word_factors(qp: QuantumPartition, U: np.ndarray, word: Word) -> list[np.ndarray]:
    """Factors of ``Pi_{alpha_{n-1}} U ... U Pi_{alpha_0}`` in application order."""
    out: list[np.ndarray] = []
    for i, s in enumerate(word):
        if i:
            out.append(U)
        out.append(qp.factor(s))
    return out


def dispersive_norm(qp: QuantumPartition, U, word: Word, method="power", tol: float = 1e-8,
                    max_iter: int = 500) -> ChainNorm:
    """``||Pi_alpha||`` by matrix-free power iteration."""
    if len(word) == 0:
        return ChainNorm(1.0, True, 0, (1.0, 1.0))
    return chain_norm(word_factors(qp, _unitary(U), tuple(word)), qp.N, method, tol, max_iter)


@dataclass(frozen=True)
class DispersiveRow:
    N: int
    n: int
    word: Word
    norm: float
    log_jacobian: float
    ratio: float  # ||Pi_alpha|| J_n^u(alpha)^{1/2} N^{-1/2}
    converged: bool


def dispersive_sweep(
    qp: QuantumPartition, U, cell_values: np.ndarray, n: int, words: Sequence[Word] | None = None,
    max_words: int = 256, seed: int = 0, method="power",
) -> list[DispersiveRow]:
    """Dispersive ratios for all words of length ``n`` (or a seeded sample)."""
    K = qp.K
    if words is None:
        if K**n <= max_words:
            words = list(product(range(K), repeat=n))
        else:
            rng = np.random.default_rng(seed)
            words = [tuple(int(s) for s in rng.integers(0, K, n)) for _ in range(max_words)]
    log_j = np.log(np.asarray(cell_values, dtype=float))
    rows = []
    for w in words:
        res = dispersive_norm(qp, U, w, method=method)
        lj = float(np.sum(log_j[list(w)]))
        ratio = res.value * math.exp(lj / 2) / math.sqrt(qp.N)
        rows.append(DispersiveRow(qp.N, n, tuple(w), res.value, lj, ratio, res.converged))
    return rows


# -- entropic uncertainty ----------------------------------------------------------------


class EUPReport(NamedTuple):
    lhs: float
    rhs: float
    slack: float


def _shannon(p: np.ndarray) -> float:
    return float(np.sum(eta(p)))


def eup_level1(psi, basis_a: TorusOperator, basis_b: TorusOperator) -> EUPReport:
    """``H(|<a_i,psi>|^2) + H(|<b_j,psi>|^2) >= -2 log max |<a_i,b_j>|``."""
    for op in (basis_a, basis_b):
        if not op.unitary:
            raise ValueError("both bases must be given as unitary operators")
    psi = np.asarray(psi, dtype=complex)
    A, B = basis_a.matrix, basis_b.matrix
    lhs = _shannon(np.abs(A.conj().T @ psi) ** 2) + _shannon(np.abs(B.conj().T @ psi) ** 2)
    rhs = -2.0 * math.log(float(np.abs(A.conj().T @ B).max()))
    return EUPReport(lhs, rhs, lhs - rhs)


@dataclass(frozen=True)
class OperatorFamily:
    """Operators ``rho_i``, each a product of factors (application order).

    ``exact`` records that ``sum rho_i^dagger rho_i = Id`` holds exactly.
    """

    N: int
    labels: tuple
    chains: tuple
    exact: bool = True

    def __len__(self) -> int:
        return len(self.chains)

    def apply(self, i: int, psi: np.ndarray) -> np.ndarray:
        return _apply_chain(self.chains[i], psi)

    def adjoint_chain(self, i: int) -> list[np.ndarray]:
        return [np.conj(f) if f.ndim == 1 else f.conj().T for f in reversed(self.chains[i])]

    @classmethod
    def from_partition(cls, qp: QuantumPartition) -> "OperatorFamily":
        return cls(qp.N, tuple((k,) for k in range(qp.K)), tuple((qp.factor(k),) for k in range(qp.K)),
                   qp.mode == "sharp")

    @classmethod
    def from_basis(cls, basis: TorusOperator) -> "OperatorFamily":
        """Rank-one projectors onto the columns of a unitary."""
        B = basis.matrix
        chains = tuple((np.outer(B[:, j], B[:, j].conj()),) for j in range(B.shape[1]))
        return cls(B.shape[0], tuple((j,) for j in range(B.shape[1])), chains, True)


def forward_family(qp: QuantumPartition, U, n: int) -> OperatorFamily:
    """``tau_alpha = U^{-n+1} Pi_{alpha_{n-1}} U ... U Pi_{alpha_0}``."""
    U = _unitary(U)
    lead = np.linalg.matrix_power(U.conj().T, n - 1) if n > 1 else None
    words = list(product(range(qp.K), repeat=n))
    chains = []
    for w in words:
        f = word_factors(qp, U, w)
        if lead is not None:
            f.append(lead)
        chains.append(tuple(f))
    return OperatorFamily(qp.N, tuple(words), tuple(chains), qp.mode == "sharp")


def backward_family(qp: QuantumPartition, U, n: int) -> OperatorFamily:
    """``rho_beta = Pi_{beta_{n-1}}(-n) ... Pi_{beta_0}(-1)`` with ``Pi(t) = U^{-t} Pi U^t``.

    As a chain: ``U^n Pi_{beta_{n-1}} U^{-1} ... Pi_{beta_0} U^{-1}``.
    """
    U = _unitary(U)
    Ui = U.conj().T
    lead = np.linalg.matrix_power(U, n)
    words = list(product(range(qp.K), repeat=n))
    chains = []
    for w in words:
        f: list[np.ndarray] = []
        for s in w:
            f += [Ui, qp.factor(s)]
        f.append(lead)
        chains.append(tuple(f))
    return OperatorFamily(qp.N, tuple(words), tuple(chains), qp.mode == "sharp")


def family_pressure(psi, family: OperatorFamily, weights: Sequence[float]) -> float:
    """``p(psi, rho, v) = -sum ||rho_i psi||^2 log(v_i^2 ||rho_i psi||^2)``."""
    psi = np.asarray(psi, dtype=complex)
    total = 0.0
    for i in range(len(family)):
        p = float(np.linalg.norm(family.apply(i, psi)) ** 2)
        if p > 0:
            total -= p * math.log(weights[i] ** 2 * p)
    return total


@dataclass(frozen=True)
class CrossNorms:
    """``max_{i,j} v_i w_j ||tau_j rho_i^dagger||`` and where it is attained."""

    value: float
    argmax: tuple[int, int]
    norms: np.ndarray = field(repr=False)  # (len(rho), len(tau))
    converged: bool


def cross_norm_bound(
    rho: OperatorFamily, tau: OperatorFamily, v: Sequence[float], w: Sequence[float],
    method="lanczos", tol: float = 1e-13,
) -> CrossNorms:
    norms = np.empty((len(rho), len(tau)))
    ok = True
    for i in range(len(rho)):
        adj = rho.adjoint_chain(i)
        for j in range(len(tau)):
            res = chain_norm(adj + list(tau.chains[j]), rho.N, method, tol, max_iter=2000)
            norms[i, j] = res.value
            ok &= res.converged
    scaled = np.asarray(v)[:, None] * np.asarray(w)[None, :] * norms
    i, j = np.unravel_index(int(np.argmax(scaled)), scaled.shape)
    return CrossNorms(float(scaled[i, j]), (int(i), int(j)), norms, bool(ok))


class EUP2Report(NamedTuple):
    pressure_rho: float
    pressure_tau: float
    log_term: float  # 2 log max v_i w_j ||tau_j rho_i^dagger||
    slack: float


def eup_level2(
    psi, rho: OperatorFamily, tau: OperatorFamily, v: Sequence[float], w: Sequence[float],
    cross: CrossNorms | None = None, allow_inexact: bool = False,
) -> EUP2Report:
    """``p(psi, rho, v) + p(psi, tau, w) + 2 log max v_i w_j ||tau_j rho_i^dagger|| >= 0``.

    ``cross`` can be passed to reuse the state-independent maximum.
    """
    if not (rho.exact and tau.exact) and not allow_inexact:
        raise PartitionModeError("level-2 EUP needs exact partitions (sharp mode)")
    if cross is None:
        cross = cross_norm_bound(rho, tau, v, w)
    pr = family_pressure(psi, rho, v)
    pt = family_pressure(psi, tau, w)
    log_term = 2.0 * math.log(cross.value)
    return EUP2Report(pr, pt, log_term, pr + pt + log_term)


# -- Ehrenfest time and entropy bound ---------------------------------------------------


@dataclass(frozen=True)
class EhrenfestClock:
    """``T = floor((1 - eps) L / (2 lambda_eps))`` with ``lambda_eps = (1 + eps) lambda_max``.

    ``L = log N`` by default; ``log_scale="log2piN"`` uses ``|log hbar| = log(2 pi N)``.
    """

    N: int
    epsilon: float
    lambda_eps: float
    n_max: int = 64
    log_scale: Literal["logN", "log2piN"] = "logN"

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.log_scale not in ("logN", "log2piN"):
            raise ValueError(f"unknown log scale {self.log_scale!r}")
        if self.T > self.n_max:
            raise ValueError(f"Ehrenfest time {self.T} exceeds n_max={self.n_max}")

    @classmethod
    def from_lyapunov(
        cls, N: int, lambda_max: float, epsilon: float = 0.1, n_max: int = 64, log_scale: str = "logN"
    ) -> "EhrenfestClock":
        return cls(N, epsilon, (1 + epsilon) * lambda_max, n_max, log_scale)

    @property
    def time(self) -> float:
        scale = math.log(self.N) if self.log_scale == "logN" else math.log(2 * math.pi * self.N)
        return (1 - self.epsilon) * scale / (2 * self.lambda_eps)

    @property
    def T(self) -> int:
        return int(math.floor(self.time))

    @property
    def depth(self) -> int:
        """Word length used for entropy rates; at least one step."""
        return max(1, self.T)

    @property
    def eup_depth(self) -> int:
        return max(1, int(math.floor(2 * self.time)))


def entropy_bound_report(
    spectrum: Spectrum,
    spec: MapSpec,
    partition: PartitionSpec,
    clock: EhrenfestClock,
    prop: Propagator,
    qp: QuantumPartition | None = None,
    lambda_max: float | None = None,
    cell_values: np.ndarray | None = None,
    control: np.ndarray | None = None,
    prune: float = 1e-12,
) -> list[PressureReport]:
    """One ``PressureReport`` per eigenstate at ``n = clock.depth``, sorted by slack.

    ``control`` is an optional trial state (not an eigenstate) reported with
    the label ``control``.
    """
    if qp is None:
        qp = quantize_partition(prop.N, partition)
    if cell_values is None:
        cell_values = cell_jacobians(spec, partition)
    if lambda_max is None:
        lambda_max = lyapunov_max(spec).lambda_max
    n = clock.depth
    rows = []
    for k in range(len(spectrum)):
        m = refined_measure(spectrum.state(k), qp, prop, n, prune)
        rows.append(quantum_pressure(m, spec, partition, cell_values, lambda_max, label=f"eigen{k}"))
    rows.sort(key=lambda r: (r.slack, int(r.label[5:])))
    if control is not None:
        m = refined_measure(control, qp, prop, n, prune)
        rows.append(quantum_pressure(m, spec, partition, cell_values, lambda_max, label="control"))
    return rows


def median_slack_row(rows: Sequence[PressureReport]) -> PressureReport:
    """Upper-median eigenstate row of a report sorted by slack (control rows ignored)."""
    eigen = [r for r in rows if r.label.startswith("eigen")]
    return eigen[len(eigen) // 2]


def eigen_index(row: PressureReport) -> int:
    return int(row.label[5:])


def write_reports_csv(path, rows: Sequence[PressureReport], extra: dict | None = None) -> None:
    fields = list(PressureReport(1, 0, 0, 0, 0).as_row())
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(extra) + fields)
        for r in rows:
            row = r.as_row()
            writer.writerow(list(extra.values()) + [_fmt(row[f]) for f in fields])


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12e}"
    return str(x)


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
