"""Classical Anosov maps of the 2-torus.

A map is ``kappa = g1 o kappa0`` where ``kappa0`` is a hyperbolic matrix in
SL(2, Z) acting mod 1 and ``g1`` is the time-one Hamiltonian flow of a small
trigonometric kick ``p``.  Points are arrays of shape ``(..., 2)`` holding
``(x, xi)``; every public function reduces its output mod 1.

Hamilton's equations use ``dx/dt = dp/dxi`` and ``dxi/dt = -dp/dx``, which is
the convention under which ``exp(-2i pi N Op_N(p))`` quantizes ``g1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Literal, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.integrate import solve_ivp

TWO_PI = 2.0 * math.pi

KickForm = Literal["position", "momentum", "general"]


class HyperbolicityError(ValueError):
    """Raised when an operation needs a hyperbolic map and did not get one."""


class IntegrationError(RuntimeError):
    """Raised when the flow of a general kick cannot be integrated."""


class PeriodError(ValueError):
    """Raised when a claimed periodic point is not periodic."""


def wrap(points: np.ndarray) -> np.ndarray:
    """Reduce coordinates into [0, 1)."""
    out = np.mod(points, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(out >= 1.0, 0.0, out)


def torus_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)) % 1.0
    d = np.minimum(d, 1.0 - d)
    return np.sqrt(np.sum(d**2, axis=-1))


@dataclass(frozen=True)
class TorusPoint:
    x: float
    xi: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(wrap(float(self.x))))
        object.__setattr__(self, "xi", float(wrap(float(self.xi))))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.xi])


@dataclass(frozen=True)
class SymplecticMatrix:
    """Integer matrix [[a, b], [c, d]] with determinant one."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in "abcd":
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise TypeError(f"entry {name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        det = self.a * self.d - self.b * self.c
        if det != 1:
            raise ValueError(f"determinant must be 1, got {det}")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "SymplecticMatrix":
        (a, b), (c, d) = rows
        return cls(a, b, c, d)

    @property
    def array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=np.int64)

    @property
    def trace(self) -> int:
        return self.a + self.d

    @property
    def is_hyperbolic(self) -> bool:
        return abs(self.trace) > 2

    @property
    def checkerboard(self) -> bool:
        """Parity condition under which the matrix quantizes on every H_N."""
        return (self.a * self.b) % 2 == 0 and (self.c * self.d) % 2 == 0

    def inverse(self) -> "SymplecticMatrix":
        return SymplecticMatrix(self.d, -self.b, -self.c, self.a)

    def __matmul__(self, other: "SymplecticMatrix") -> "SymplecticMatrix":
        m = self.array @ other.array
        return SymplecticMatrix(*(int(v) for v in m.ravel()))

    def power(self, t: int) -> "SymplecticMatrix":
        base = self if t >= 0 else self.inverse()
        result = SymplecticMatrix(1, 0, 0, 1)
        for _ in range(abs(t)):
            result = result @ base
        return result

    def expansion_rate(self) -> float:
        """Modulus of the eigenvalue of largest modulus."""
        tr = abs(self.trace)
        if tr <= 2:
            return 1.0
        return (tr + math.sqrt(tr * tr - 4)) / 2.0

    def rows(self) -> list[list[int]]:
        return [[self.a, self.b], [self.c, self.d]]


@dataclass(frozen=True)
class KickHamiltonian:
    """Real trigonometric polynomial ``p = amplitude * sum c_k e(k . rho)``.

    ``coefficients`` maps integer frequency pairs ``(m, n)`` to complex
    coefficients of ``exp(2i pi (m x + n xi))``.
    """

    coefficients: Mapping[tuple[int, int], complex]
    form: KickForm = "position"
    amplitude: float = 1.0
    modes: np.ndarray = field(init=False, repr=False, compare=False)
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.form not in ("position", "momentum", "general"):
            raise ValueError(f"unknown kick form {self.form!r}")
        if isinstance(self.amplitude, bool) or not isinstance(self.amplitude, (int, float)):
            raise TypeError(f"amplitude must be a real number, got {self.amplitude!r}")
        coeffs = {}
        for (m, n), c in dict(self.coefficients).items():
            if int(m) != m or int(n) != n:
                raise ValueError(f"frequencies must be integers, got {(m, n)}")
            if c != 0:
                coeffs[(int(m), int(n))] = complex(c)
        for (m, n), c in coeffs.items():
            partner = coeffs.get((-m, -n), 0.0)
            if abs(partner - np.conj(c)) > 1e-12 * max(1.0, abs(c)):
                raise ValueError(f"kick is not real: c{(-m, -n)} != conj(c{(m, n)})")
            if self.form == "position" and n != 0:
                raise ValueError("position-only kick has a mode with nonzero xi-frequency")
            if self.form == "momentum" and m != 0:
                raise ValueError("momentum-only kick has a mode with nonzero x-frequency")
        object.__setattr__(self, "coefficients", coeffs)
        keys = sorted(coeffs)
        object.__setattr__(self, "modes", np.array(keys, dtype=float).reshape(-1, 2))
        object.__setattr__(
            self, "values", float(self.amplitude) * np.array([coeffs[k] for k in keys], dtype=complex)
        )

    @classmethod
    def cosine(cls, amplitude: float, form: KickForm = "position") -> "KickHamiltonian":
        """``amplitude * cos(2 pi x)`` (or ``cos(2 pi xi)`` for momentum kicks)."""
        if form == "momentum":
            table = {(0, 1): 0.5, (0, -1): 0.5}
        elif form == "position":
            table = {(1, 0): 0.5, (-1, 0): 0.5}
        else:
            table = {(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25}
        return cls(table, form=form, amplitude=amplitude)

    def _phases(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.exp(1j * TWO_PI * (pts @ self.modes.T))

    def value(self, points: np.ndarray) -> np.ndarray:
        return np.real(self._phases(points) @ self.values)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """``(dp/dx, dp/dxi)`` at each point."""
        e = self._phases(points) * self.values
        return np.real(1j * TWO_PI * (e @ self.modes))

    def hessian(self, points: np.ndarray) -> np.ndarray:
        """Array ``(..., 2, 2)`` of second derivatives."""
        e = self._phases(points) * self.values
        outer = self.modes[:, :, None] * self.modes[:, None, :]
        return np.real(-(TWO_PI**2) * np.einsum("...k,kij->...ij", e, outer))

    def c2_norm(self) -> float:
        """Crude bound on the C^2 norm: sum of |c| (1 + |2 pi k|)^2."""
        k = np.linalg.norm(self.modes, axis=1) * TWO_PI
        return float(np.sum(np.abs(self.values) * (1 + k) ** 2))

    def table(self) -> dict[tuple[int, int], complex]:
        """Fourier coefficients including the amplitude."""
        return {tuple(int(v) for v in k): c for k, c in zip(self.modes, self.values)}


@dataclass(frozen=True)
class MapSpec:
    linear: SymplecticMatrix
    kick: KickHamiltonian | None = None
    flow_tol: float = 1e-12

    def __post_init__(self):
        if not self.linear.is_hyperbolic:
            raise HyperbolicityError(f"linear part {self.linear.rows()} is not hyperbolic")

    @property
    def experimental(self) -> bool:
        return self.kick is not None and self.kick.form == "general"

    @property
    def is_linear(self) -> bool:
        return self.kick is None or not self.kick.coefficients

    # -- maps --------------------------------------------------------------

    def _flow(self, points: np.ndarray, sign: float, tangent: bool = False):
        """Time-one flow of the kick (sign=-1 gives the inverse flow)."""
        kick = self.kick
        pts = np.asarray(points, dtype=float)
        if kick.form == "position":
            grad = kick.gradient(pts)
            out = pts.copy()
            out[..., 1] -= sign * grad[..., 0]
            if not tangent:
                return out
            jac = np.zeros(pts.shape[:-1] + (2, 2))
            jac[..., 0, 0] = jac[..., 1, 1] = 1.0
            jac[..., 1, 0] = -sign * kick.hessian(pts)[..., 0, 0]
            return out, jac
        if kick.form == "momentum":
            grad = kick.gradient(pts)
            out = pts.copy()
            out[..., 0] += sign * grad[..., 1]
            if not tangent:
                return out
            jac = np.zeros(pts.shape[:-1] + (2, 2))
            jac[..., 0, 0] = jac[..., 1, 1] = 1.0
            jac[..., 0, 1] = sign * kick.hessian(pts)[..., 1, 1]
            return out, jac
        return self._integrate(pts, sign, tangent)

    def _integrate(self, pts: np.ndarray, sign: float, tangent: bool):
        kick = self.kick
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 2)
        count = flat.shape[0]

        def rhs(_t, y):
            y = y.reshape(count, -1)
            q = y[:, :2]
            g = kick.gradient(q)
            dy = np.empty_like(y)
            dy[:, 0] = sign * g[:, 1]
            dy[:, 1] = -sign * g[:, 0]
            if tangent:
                h = kick.hessian(q)
                field = sign * np.stack([h[:, 1, :], -h[:, 0, :]], axis=1)
                m = y[:, 2:].reshape(count, 2, 2)
                dy[:, 2:] = (field @ m).reshape(count, 4)
            return dy.ravel()

        y0 = flat
        if tangent:
            y0 = np.hstack([flat, np.tile(np.eye(2).ravel(), (count, 1))])
        sol = solve_ivp(
            rhs, (0.0, 1.0), y0.ravel(), method="DOP853", rtol=self.flow_tol, atol=self.flow_tol
        )
        if not sol.success:
            raise IntegrationError(sol.message)
        y = sol.y[:, -1].reshape(count, -1)
        out = y[:, :2].reshape(shape + (2,))
        if not tangent:
            return out
        return out, y[:, 2:].reshape(shape + (2, 2))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """``kappa(points)`` reduced mod 1."""
        pts = np.asarray(points, dtype=float)
        out = pts @ self.linear.array.T.astype(float)
        if not self.is_linear:
            out = self._flow(wrap(out), 1.0)
        return wrap(out)

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if not self.is_linear:
            pts = wrap(self._flow(pts, -1.0))
        return wrap(pts @ self.linear.inverse().array.T.astype(float))

    def iterate(self, points: np.ndarray, t: int) -> np.ndarray:
        pts = wrap(np.asarray(points, dtype=float))
        step = self.apply if t >= 0 else self.apply_inverse
        for _ in range(abs(t)):
            pts = step(pts)
        return pts

    def tangent(self, points: np.ndarray) -> np.ndarray:
        """Jacobian matrices ``D kappa`` at each point, shape ``(..., 2, 2)``."""
        pts = np.asarray(points, dtype=float)
        s = self.linear.array.astype(float)
        if self.is_linear:
            return np.broadcast_to(s, pts.shape[:-1] + (2, 2)).copy()
        _, jac = self._flow(wrap(pts @ s.T), 1.0, tangent=True)
        return jac @ s


def apply_map(spec: MapSpec, p) -> TorusPoint | np.ndarray:
    if isinstance(p, TorusPoint):
        return TorusPoint(*spec.apply(p.as_array()))
    return spec.apply(p)


def tangent_map(spec: MapSpec, p) -> np.ndarray:
    if isinstance(p, TorusPoint):
        p = p.as_array()
    return spec.tangent(p)


# -- Lyapunov data ----------------------------------------------------------


class UnstableDirection(NamedTuple):
    vectors: np.ndarray
    residual: np.ndarray


class UnstableJacobian(NamedTuple):
    value: np.ndarray | float
    residual: np.ndarray | float
    converged: bool


@dataclass(frozen=True)
class LyapunovData:
    lambda_max: float
    residual: float
    n_iter: int
    spec: MapSpec = field(repr=False)

    def unstable_direction(self, points: np.ndarray, cone_iters: int = 50) -> UnstableDirection:
        return unstable_direction(self.spec, points, cone_iters)


def lyapunov_max(spec: MapSpec, n_iter: int = 2000, seed: int = 0) -> LyapunovData:
    """Largest Lyapunov exponent (nats per iteration) by cocycle iteration.

    The first 10% of iterations (at least 50) align the tangent vector and are
    discarded; the residual is the change of the running average over the
    last 10% of the retained iterations.
    """
    if n_iter < 100:
        raise ValueError("n_iter must be at least 100")
    if not spec.linear.is_hyperbolic:
        raise HyperbolicityError("lyapunov_max needs a hyperbolic map")
    rng = np.random.default_rng(seed)
    point = rng.random(2)
    vec = np.array([1.0, math.sqrt(2.0) - 1.0])
    vec /= np.linalg.norm(vec)
    burn = max(50, n_iter // 10)
    logs = np.empty(n_iter)
    for i in range(burn + n_iter):
        vec = spec.tangent(point) @ vec
        norm = np.linalg.norm(vec)
        vec /= norm
        point = spec.apply(point)
        if i >= burn:
            logs[i - burn] = math.log(norm)
    running = np.cumsum(logs) / np.arange(1, n_iter + 1)
    cut = int(0.9 * n_iter) - 1
    return LyapunovData(
        lambda_max=float(running[-1]),
        residual=float(abs(running[-1] - running[cut])),
        n_iter=n_iter,
        spec=spec,
    )


def _push_forward(spec: MapSpec, history: list[np.ndarray], start: int) -> np.ndarray:
    """Push a generic vector along ``history[start:]`` (oldest first)."""
    shape = history[0].shape[:-1]
    vec = np.broadcast_to(np.array([1.0, 0.3819660112501051]), shape + (2,)).copy()
    for pts in history[start:]:
        vec = np.einsum("...ij,...j->...i", spec.tangent(pts), vec)
        vec /= np.linalg.norm(vec, axis=-1, keepdims=True)
    return vec


def unstable_direction(spec: MapSpec, points: np.ndarray, cone_iters: int = 50) -> UnstableDirection:
    """Unit unstable vectors at ``points``.

    The backward orbit of each point is stored and a generic vector is pushed
    forward along it.  The residual is ``|sin|`` of the angle between the
    directions obtained from the full history and from half of it.
    """
    if cone_iters < 20:
        raise ValueError("cone_iters must be at least 20")
    pts = wrap(np.asarray(points, dtype=float))
    history = [pts]
    for _ in range(cone_iters):
        history.append(spec.apply_inverse(history[-1]))
    history = history[::-1][:-1]  # rho_{-m}, ..., rho_{-1}
    full = _push_forward(spec, history, 0)
    half = _push_forward(spec, history, cone_iters // 2)
    residual = np.abs(full[..., 0] * half[..., 1] - full[..., 1] * half[..., 0])
    return UnstableDirection(full, residual)


def unstable_jacobian(
    spec: MapSpec, p, cone_iters: int = 50, tol: float = 1e-8
) -> UnstableJacobian:
    """Expansion factor of ``D kappa`` along the unstable direction."""
    scalar = isinstance(p, TorusPoint)
    pts = p.as_array() if scalar else np.asarray(p, dtype=float)
    direction = unstable_direction(spec, pts, cone_iters)
    image = np.einsum("...ij,...j->...i", spec.tangent(pts), direction.vectors)
    value = np.linalg.norm(image, axis=-1)
    residual = direction.residual
    converged = bool(np.all(residual <= tol))
    if np.ndim(value) == 0:
        value, residual = float(value), float(residual)
    return UnstableJacobian(value, residual, converged)


def cell_jacobians(spec: MapSpec, partition, grid: int = 32, cone_iters: int = 50) -> np.ndarray:
    """``J^u(k)``: minimum of the unstable Jacobian over a grid in each cell."""
    out = np.empty(partition.K)
    for k in range(partition.K):
        pts = partition.cell_grid(k, grid)
        if len(pts) == 0:
            raise ValueError(f"cell {k} is empty")
        out[k] = np.min(unstable_jacobian(spec, pts, cone_iters).value)
    return out


def coarse_grained_jacobian(
    spec: MapSpec, partition, word: Sequence[int], cell_values: np.ndarray | None = None
) -> float:
    """Product of per-cell minimal unstable Jacobians along ``word``."""
    if cell_values is None:
        cell_values = cell_jacobians(spec, partition)
    word = list(word)
    if any(s < 0 or s >= partition.K for s in word):
        raise ValueError(f"word {word} has symbols outside 0..{partition.K - 1}")
    return float(np.prod(cell_values[word])) if word else 1.0


# -- invariant measures ---------------------------------------------------------


def periodic_points(matrix: SymplecticMatrix, period: int) -> list[tuple[Fraction, Fraction]]:
    """All points with ``S^period v = v mod 1``, in exact arithmetic.

    Solutions are ``(S^p - I)^{-1} m`` for integer ``m``; there are
    ``|det(S^p - I)|`` of them.
    """
    m = matrix.power(period).array - np.eye(2, dtype=np.int64)
    det = int(round(np.linalg.det(m)))
    if det == 0:
        raise HyperbolicityError("S^period - I is singular")
    adj = [[int(m[1, 1]), -int(m[0, 1])], [-int(m[1, 0]), int(m[0, 0])]]
    found = set()
    size = abs(det)
    for i, j in product(range(size), repeat=2):
        v = (
            Fraction(adj[0][0] * i + adj[0][1] * j, det) % 1,
            Fraction(adj[1][0] * i + adj[1][1] * j, det) % 1,
        )
        found.add(v)
        if len(found) == size:
            break
    return sorted(found)


def minimal_period(spec: MapSpec, point: np.ndarray, max_period: int = 64, tol: float = 1e-9) -> int:
    p = wrap(np.asarray(point, dtype=float))
    q = p
    for t in range(1, max_period + 1):
        q = spec.apply(q)
        if torus_distance(p, q) < tol:
            return t
    raise PeriodError(f"no period up to {max_period}")


def refine_periodic_point(
    spec: MapSpec, guess: np.ndarray, period: int, tol: float = 1e-13, max_iter: int = 50
) -> np.ndarray:
    """Newton refinement of a periodic point of a kicked map."""
    p = wrap(np.asarray(guess, dtype=float))
    for _ in range(max_iter):
        q, jac = p, np.eye(2)
        for _ in range(period):
            jac = spec.tangent(q) @ jac
            q = spec.apply(q)
        diff = (q - p + 0.5) % 1.0 - 0.5
        if np.linalg.norm(diff) < tol:
            return p
        p = wrap(p - np.linalg.solve(jac - np.eye(2), diff))
    raise PeriodError("Newton refinement did not converge")


def find_periodic_orbit(spec: MapSpec, period: int) -> np.ndarray:
    """A point of minimal period ``period``.

    Linear maps use exact integer linear algebra; kicked maps continue a
    point of the linear part with Newton's method.
    """
    for v in periodic_points(spec.linear, period):
        guess = np.array([float(v[0]), float(v[1])])
        lin = MapSpec(spec.linear)
        if minimal_period(lin, guess, period) != period:
            continue
        if spec.is_linear:
            return guess
        try:
            p = refine_periodic_point(spec, guess, period)
        except PeriodError:
            continue
        if minimal_period(spec, p, period) == period:
            return p
    raise PeriodError(f"no orbit of minimal period {period} found")


def sample_invariant_measure(
    kind: str,
    spec: MapSpec,
    count: int,
    seed: int = 0,
    point: Iterable[float] | None = None,
    period: int | None = None,
) -> np.ndarray:
    """Samples of Lebesgue measure or of the uniform measure on a periodic orbit.

    Returns an array of shape ``(count, 2)``.
    """
    rng = np.random.default_rng(seed)
    if kind == "lebesgue":
        return rng.random((count, 2))
    if kind != "periodic":
        raise ValueError(f"unknown measure kind {kind!r}")
    if point is None or period is None or period < 1:
        raise ValueError("periodic-orbit sampling needs a point and a period >= 1")
    orbit = [wrap(np.asarray(point, dtype=float))]
    for _ in range(period - 1):
        orbit.append(spec.apply(orbit[-1]))
    if torus_distance(spec.apply(orbit[-1]), orbit[0]) > 1e-9:
        raise PeriodError(f"{tuple(orbit[0])} is not a point of period {period}")
    orbit = np.array(orbit)
    return orbit[rng.integers(0, period, size=count)]
