"""Acceptance criteria 1-12.

Each test prints one ``criterion k: PASS|FAIL`` line with the measured
numbers, then asserts the criterion at its stated tolerance.  Run directly
(``python3 tests/test_acceptance.py``) to get just the twelve lines.
"""

import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from qtorus.classical import (
    KickHamiltonian,
    MapSpec,
    SymplecticMatrix,
    cell_jacobians,
    find_periodic_orbit,
    lyapunov_max,
    sample_invariant_measure,
)
from qtorus.maps import egorov_residual, eigensystem, metaplectic_matrix, propagator, unitarity_residual
from qtorus.partitions import PartitionSpec, ks_entropy_rate
from qtorus.qentropy import (
    EhrenfestClock,
    backward_family,
    cross_norm_bound,
    dispersive_sweep,
    entropy_bound_report,
    eup_level1,
    eup_level2,
    forward_family,
    median_slack_row,
    eigen_index,
    quantize_partition,
    refined_measure,
    shift_invariance_residual,
)
from qtorus.quantization import TorusOperator, TrigSymbol, dft, position_state, weyl_matrix

CAT = SymplecticMatrix(2, 1, 3, 2)
LINEAR = MapSpec(CAT)
KICKED = MapSpec(CAT, KickHamiltonian.cosine(0.05))
HALVES = PartitionSpec.halves()
LAMBDA = math.log(2 + math.sqrt(3))  # 1.316958
COS_X = TrigSymbol.from_dict({(1, 0): 1.0, (-1, 0): 1.0})


_capsys = None


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    global _capsys
    _capsys = capsys
    yield
    _capsys = None


def report(k, ok, detail):
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    if _capsys is None:
        print(line)
    else:
        with _capsys.disabled():
            print("\n" + line)
    return ok


@lru_cache(maxsize=None)
def kicked_lambda():
    return lyapunov_max(KICKED).lambda_max


@lru_cache(maxsize=None)
def kicked_cells():
    return cell_jacobians(KICKED, HALVES)


@lru_cache(maxsize=None)
def kicked(N):
    P = propagator(N, KICKED)
    return P, eigensystem(P), quantize_partition(N, HALVES)


@lru_cache(maxsize=None)
def bound_rows(N):
    P, sp, qp = kicked(N)
    clock = EhrenfestClock.from_lyapunov(N, kicked_lambda())
    rows = entropy_bound_report(sp, KICKED, HALVES, clock, P, qp, kicked_lambda(), kicked_cells())
    return clock, rows


def test_criterion_01_unitarity():
    t0 = time.perf_counter()
    worst = 0.0
    for N in [32, 64, 128, 256, 512]:
        for spec in (LINEAR, KICKED):
            worst = max(worst, unitarity_residual(propagator(N, spec)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 120
    assert report(1, ok, f"max ||U*U - Id|| = {worst:.2e}, {elapsed:.1f} s")


def _phase_aligned_error(A, B):
    k = np.unravel_index(np.argmax(np.abs(B)), B.shape)
    phase = (B[k] / A[k]) / abs(B[k] / A[k])
    return float(np.abs(A * phase - B).max())


def test_criterion_02_metaplectic_anchor():
    quarter = SymplecticMatrix(0, -1, 1, 0)
    worst, worst_N, to_inverse = 0.0, None, 0.0
    for N in range(1, 513):
        U = metaplectic_matrix(N, quarter)
        F = dft(N).matrix
        err = _phase_aligned_error(U, F)
        if err > worst:
            worst, worst_N = err, N
        to_inverse = max(to_inverse, _phase_aligned_error(U, F.conj().T))
    ok = worst < 1e-10
    assert report(
        2, ok, f"max error vs DFT = {worst:.2e} (N={worst_N}); vs inverse DFT = {to_inverse:.2e}"
    )


def test_criterion_03_exact_egorov():
    rng = np.random.default_rng(3)
    worst = 0.0
    for N in [64, 128, 256]:
        P = propagator(N, LINEAR)
        for t in range(0, 6):
            # monomials span every symbol with |m|, |n| <= 5
            for m in range(-5, 6):
                for n in range(-5, 6):
                    f = TrigSymbol.from_dict({(m, n): 1.0})
                    worst = max(worst, egorov_residual(N, LINEAR, f, t, prop=P).residual)
            coeffs = rng.standard_normal((11, 11)) + 1j * rng.standard_normal((11, 11))
            f = TrigSymbol.from_dict({(m, n): coeffs[m + 5, n + 5] for m in range(-5, 6) for n in range(-5, 6)})
            worst = max(worst, egorov_residual(N, LINEAR, f, t, prop=P).residual)
    ok = worst < 1e-9
    assert report(3, ok, f"max residual = {worst:.2e}")


def _decay_slope(Ns, res):
    res = np.asarray(res)
    if np.any(res <= 0):
        return math.nan
    return float(np.polyfit(np.log(Ns), np.log(res), 1)[0])


def test_criterion_04_perturbed_egorov():
    Ns = [64, 128, 256, 512]
    res = [egorov_residual(N, KICKED, COS_X, 1).residual for N in Ns]
    slope = _decay_slope(Ns, res)
    momentum = MapSpec(CAT, KickHamiltonian.cosine(0.05, "momentum"))
    res_p = [egorov_residual(N, momentum, COS_X, 1).residual for N in Ns]
    slope_p = _decay_slope(Ns, res_p)
    # the criterion is a decay rate ~ 1/N, i.e. slope -1
    ok = math.isfinite(slope) and 0.8 <= -slope <= 1.2
    assert report(
        4, ok,
        f"position kick: residuals {', '.join(f'{r:.1e}' for r in res)} (decay exponent {-slope:.2f}); "
        f"momentum kick: decay exponent {-slope_p:.2f}",
    )


def test_criterion_05_maassen_uffink():
    N = 128
    pos = TorusOperator(np.eye(N, dtype=complex), unitary=True)
    F = dft(N)
    rng = np.random.default_rng(5)
    worst, rhs_err = math.inf, 0.0
    for _ in range(1000):
        z = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        r = eup_level1(z / np.linalg.norm(z), pos, F)
        worst = min(worst, r.slack)
        rhs_err = max(rhs_err, abs(r.rhs - math.log(N)))
    sat = eup_level1(position_state(N, 0), pos, F)
    ok = rhs_err < 1e-12 and worst >= -1e-9 and abs(sat.slack) < 1e-10
    assert report(5, ok, f"|rhs - log N| = {rhs_err:.1e}, min slack = {worst:.3f}, e_0 slack = {sat.slack:.1e}")


def test_criterion_06_weighted_eup():
    t0 = time.perf_counter()
    N = 128
    P, sp, qp = kicked(N)
    clock = EhrenfestClock.from_lyapunov(N, kicked_lambda())
    n = clock.eup_depth
    cv = kicked_cells()
    tau, rho = forward_family(qp, P, n), backward_family(qp, P, n)
    v = [math.sqrt(float(np.prod(cv[list(b)]))) for b in rho.labels]
    w = [math.sqrt(float(np.prod(cv[list(a)]))) for a in tau.labels]
    cross = cross_norm_bound(rho, tau, v, w)
    worst = min(eup_level2(sp.state(k), rho, tau, v, w, cross).slack for k in range(N))
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-8 and elapsed < 1800
    assert report(6, ok, f"n = {n}, cross bound = {cross.value:.4f}, min slack = {worst:.3f}, {elapsed:.1f} s")


def test_criterion_07_dispersive_trend():
    maxima = []
    for N in [64, 128, 256]:
        n = int(2 * math.log(N) / LAMBDA)
        qp = quantize_partition(N, HALVES)
        rows = dispersive_sweep(qp, propagator(N, LINEAR), np.full(2, 2 + math.sqrt(3)), n, method="lanczos")
        maxima.append((N, n, max(r.ratio for r in rows)))
    growth = [b[2] / a[2] - 1 for a, b in zip(maxima, maxima[1:])]
    ok = all(g <= 0.25 for g in growth)
    detail = ", ".join(f"N={N} n={n}: {r:.3f}" for N, n, r in maxima)
    assert report(7, ok, f"{detail}; growth {', '.join(f'{100 * g:.0f}%' for g in growth)}")


def test_criterion_08_classical_entropy():
    grid = PartitionSpec.grid(4, 4)
    pts = sample_invariant_measure("lebesgue", LINEAR, 1_000_000, seed=0)
    leb = ks_entropy_rate(LINEAR, grid, pts, [7, 8])
    r8 = [r for r in leb.rates if r.n == 8]
    rate = r8[0].conditional_rate if r8 else math.nan
    ks_ok = abs(rate - LAMBDA) <= 0.1 * LAMBDA
    # the map is linear, so the unstable Jacobian is the same in every cell
    ruelle_leb = LAMBDA - rate
    orbit = find_periodic_orbit(LINEAR, 2)
    per = sample_invariant_measure("periodic", LINEAR, 1_000_000, seed=0, point=orbit, period=2)
    rp = ks_entropy_rate(LINEAR, grid, per, [8]).rates[-1]
    per_rate = rp.conditional_rate
    ruelle_per = LAMBDA - per_rate
    ok = ks_ok and ruelle_leb >= -0.05 and ruelle_per >= -0.05 and per_rate <= 0.1
    assert report(
        8, ok,
        f"Lebesgue rate(n=8) = {rate:.4f} ({100 * (rate / LAMBDA - 1):+.1f}%, block {r8[0].block_rate:.4f}); "
        f"Ruelle slack Lebesgue {ruelle_leb:.3f}, period-2 {ruelle_per:.3f} (rate {per_rate:.3f})",
    )


def test_criterion_09_compatibility_and_mass():
    N, n = 128, 8
    P, sp, qp = kicked(N)
    mass_err, compat, bounds_ok = 0.0, 0.0, True
    for k in range(N):
        m = refined_measure(sp.state(k), qp, P, n)
        lo, hi = m.mass_bounds()
        bounds_ok &= lo - 1e-10 <= m.total() + m.pruned_mass <= hi + 1e-10
        mass_err = max(mass_err, abs(m.total() + m.pruned_mass - 1))
        compat = max(compat, max(m.compatibility))
    ok = mass_err < 1e-10 and compat < 1e-10 and bounds_ok
    assert report(9, ok, f"max mass error = {mass_err:.1e}, max compatibility = {compat:.1e}")


def test_criterion_10_entropy_bound_trend():
    mins = []
    for N in [128, 256, 512]:
        clock, rows = bound_rows(N)
        eigen = [r for r in rows if r.label.startswith("eigen")]
        mins.append((N, clock.depth, min(r.slack for r in eigen)))
    floors = all(m >= -0.15 for _, _, m in mins)
    monotone = all(b[2] >= a[2] for a, b in zip(mins, mins[1:]))
    ok = floors and monotone
    detail = ", ".join(f"N={N} n={n}: {m:.4f}" for N, n, m in mins)
    assert report(10, ok, f"min slack {detail}; floor {'ok' if floors else 'violated'}, "
                          f"{'non-decreasing' if monotone else 'not non-decreasing'}")


def test_criterion_11_quantum_ergodicity():
    variances = []
    for N in [64, 128, 256]:
        _, sp, _ = kicked(N)
        A = weyl_matrix(N, COS_X)
        V = sp.eigenvectors
        values = np.real(np.einsum("ik,ij,jk->k", V.conj(), A, V))
        variances.append(float(values.var()))
    ok = all(b < a for a, b in zip(variances, variances[1:]))
    assert report(11, ok, "variance " + ", ".join(f"{v:.4f}" for v in variances))


SHIFT_N, SHIFT_N0 = 4, 2


def test_criterion_12_shift_invariance():
    residuals = []
    for N in [64, 128, 256]:
        P, sp, qp = kicked(N)
        _, rows = bound_rows(N)
        k = eigen_index(median_slack_row(rows))
        residuals.append((N, k, shift_invariance_residual(sp.state(k), qp, P, SHIFT_N, SHIFT_N0)))
    ok = all(b[2] < a[2] for a, b in zip(residuals, residuals[1:]))
    detail = ", ".join(f"N={N} (eigenstate {k}): {r:.4f}" for N, k, r in residuals)
    assert report(12, ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
