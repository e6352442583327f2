"""Ringdown modal identification with total-least-squares ESPRIT.

Feed a uniformly sampled signal; get back oscillatory modes (frequency,
damping ratio, amplitude, phase, relative energy) sorted by energy. The
estimator is subspace-based: an SVD of the Hankel data matrix isolates the
signal subspace, a second SVD solves the shift-invariance relation in the
total-least-squares sense, and the rotation eigenvalues are the discrete
poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hankel


class ModalError(RuntimeError):
    pass


class OrderError(ModalError):
    """Model order or Hankel shape is unusable for the given samples."""


class TargetModeMissing(ModalError):
    """No estimated mode falls inside the requested frequency band."""


@dataclass(frozen=True)
class Mode:
    freq_hz: float
    zeta: float        # damping ratio, negative for a growing mode
    amplitude: float
    phase: float       # radians
    energy: float      # fraction of reconstructed signal energy


@dataclass(frozen=True)
class EspritConfig:
    window_start: float = 1.0     # seconds discarded from the front
    model_order: int | None = None  # fixed even order; None selects by energy
    hankel_rows: int | None = None  # None -> half the windowed samples
    sv_threshold: float = 1e-3    # relative singular value cutoff (auto order)
    max_order: int = 20           # cap for the automatic order


def damping_ratio(sigma: float, omega: float) -> float:
    """Damping ratio of the continuous pole sigma + j*omega."""
    if sigma == 0.0 and omega == 0.0:
        raise ValueError("damping ratio undefined for the zero pole")
    return -sigma / math.hypot(sigma, omega)


def estimate_modes(signal, dt: float, cfg: EspritConfig | None = None) -> list[Mode]:
    """Identify oscillatory modes in a uniformly sampled real signal.

    The mean is removed before analysis. Conjugate pole pairs are reported
    once with positive frequency; non-oscillatory (real) poles support the
    amplitude fit but are not returned. Result is sorted by energy, largest
    first.
    """
    cfg = cfg or EspritConfig()
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = np.asarray(signal, dtype=float).ravel()
    start = int(round(cfg.window_start / dt))
    if start < 0 or start >= y.size - 3:
        raise OrderError(f"window_start {cfg.window_start} leaves too few samples")
    y = y[start:]
    y = y - y.mean()
    n = y.size

    rows = cfg.hankel_rows if cfg.hankel_rows is not None else n // 2
    cols = n - rows + 1
    if rows < 3 or cols < 3:
        raise OrderError(f"hankel_rows {rows} leaves a degenerate matrix "
                         f"({rows}x{cols} from {n} samples)")

    h = hankel(y[:rows], y[rows - 1:])
    u, s, _ = np.linalg.svd(h, full_matrices=False)
    if s[0] == 0.0:
        return []

    max_even = 2 * ((min(rows - 1, cols) // 2))
    if cfg.model_order is not None:
        order = cfg.model_order
        if order < 2 or order % 2:
            raise OrderError(f"model_order must be a positive even number, got {order}")
        if order >= rows:
            raise OrderError(f"model_order {order} needs hankel_rows > {order}, have {rows}")
    else:
        kept = int(np.sum(s >= cfg.sv_threshold * s[0]))
        order = min(kept + (kept % 2), cfg.max_order, max_even)
    if order < 2:
        raise OrderError("too few samples for a second-order model")

    # shift-invariance of the signal subspace, solved in the TLS sense
    u_sig = u[:, :order]
    stacked = np.hstack([u_sig[:-1, :], u_sig[1:, :]])
    _, _, vh = np.linalg.svd(stacked, full_matrices=True)
    v = vh.T
    v12 = v[:order, order:]
    v22 = v[order:, order:]
    try:
        psi = -v12 @ np.linalg.inv(v22)
    except np.linalg.LinAlgError as exc:
        raise OrderError(f"degenerate signal subspace: {exc}") from exc
    z = np.linalg.eigvals(psi)

    z = z[np.abs(z) > 1e-12]
    lam = np.log(z.astype(complex)) / dt
    oscillatory = lam[lam.imag > 1e-8]
    real_poles = z[np.abs(lam.imag) <= 1e-8].real

    if oscillatory.size == 0:
        return []

    amps, phases, energies = _fit_components(y, dt, oscillatory, real_poles)
    modes = []
    for lam_i, a, ph, en in zip(oscillatory, amps, phases, energies):
        freq = lam_i.imag / (2.0 * math.pi)
        zeta = damping_ratio(lam_i.real, lam_i.imag)
        modes.append(Mode(freq_hz=float(freq), zeta=float(zeta),
                          amplitude=float(a), phase=float(ph),
                          energy=float(en)))
    modes.sort(key=lambda m: m.energy, reverse=True)
    return modes


def _fit_components(y, dt, lam_osc, real_poles):
    """Least-squares amplitudes/phases plus per-mode energy fractions."""
    n = y.size
    k = np.arange(n)
    cols = []
    with np.errstate(over="ignore", invalid="ignore"):
        zk = [np.exp(lam * dt * k) for lam in lam_osc]
        for z_pow in zk:
            cols.append(np.nan_to_num(z_pow.real, posinf=0.0, neginf=0.0))
            cols.append(np.nan_to_num(-z_pow.imag, posinf=0.0, neginf=0.0))
        for rho in real_poles:
            z_pow = np.power(rho, k) if rho != 0 else np.zeros(n)
            cols.append(np.nan_to_num(z_pow, posinf=0.0, neginf=0.0))
    basis = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)

    amps, phases, energies = [], [], []
    for j in range(lam_osc.size):
        a, b = coef[2 * j], coef[2 * j + 1]
        c = complex(a, b)
        amps.append(abs(c))
        phases.append(math.atan2(b, a))
        component = basis[:, 2 * j] * a + basis[:, 2 * j + 1] * b
        energies.append(float(np.sum(component ** 2)))
    total = sum(energies)
    if total > 0:
        energies = [e / total for e in energies]
    return amps, phases, energies


def select_target_mode(modes, band) -> Mode:
    """Highest-energy mode inside the [lo, hi] frequency band."""
    lo, hi = band
    inside = [m for m in modes if lo <= m.freq_hz <= hi]
    if not inside:
        raise TargetModeMissing(f"no mode found in the {lo}-{hi} Hz band")
    return max(inside, key=lambda m: m.energy)


def match_modes(baseline, estimated, f_tol: float = 0.1):
    """Pair baseline modes with their nearest-frequency counterparts.

    Greedy pass in descending baseline energy; each estimated mode can be
    claimed once; misses pair with None. Returns [(baseline, match|None)].
    """
    order = sorted(baseline, key=lambda m: m.energy, reverse=True)
    free = list(estimated)
    pairs = []
    for base in order:
        best, best_df = None, f_tol
        for cand in free:
            df = abs(cand.freq_hz - base.freq_hz)
            if df <= best_df:
                best, best_df = cand, df
        if best is not None:
            free.remove(best)
        pairs.append((base, best))
    return pairs
