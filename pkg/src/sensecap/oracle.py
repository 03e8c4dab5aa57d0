"""Brute-force and first-order reference solvers.

These are slow on purpose. Each one evaluates the rate objective directly so
that the closed forms in :mod:`sensecap.bounds` and the water-level solver in
:mod:`sensecap.sense_opt` can be checked against them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from sensecap.bounds import superposition_rate
from sensecap.model import (
    ChannelParams,
    DerivedLimits,
    OracleError,
    SensingModel,
    TrafficModel,
    cap,
    derive_limits,
    long_run_on_fraction,
)
from sensecap.sense_opt import PowerProfile, gradient_arrays, noise_weights

_log = logging.getLogger(__name__)

GRID_CHUNK = 256  # Layer-2 grid rows evaluated per batch
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class GridSpec:
    """Resolution and stopping rules for the reference solvers."""

    step: float = 0.02
    alpha_step: float = 1e-4
    max_iters: int = 100_000
    ascent_step: float = 1.0
    tol: float = 1e-8
    grad_tol: float = 1e-9

    def __post_init__(self) -> None:
        for name in ("step", "alpha_step", "ascent_step", "tol", "grad_tol"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"GridSpec.{name} must be > 0, got {value!r}")
        if self.max_iters < 1:
            raise ValueError(f"GridSpec.max_iters must be >= 1, got {self.max_iters!r}")


# ---------------------------------------------------------------------------
# Genie grid
# ---------------------------------------------------------------------------


def _axis(upper: float, step: float, extra: list[float]) -> np.ndarray:
    """Grid on [0, upper] at *step*, plus any breakpoints that fall inside."""
    if upper <= 0:
        return np.zeros(1)
    base = np.arange(0.0, upper, step)
    points = [p for p in extra if 0.0 <= p <= upper]
    return np.unique(np.concatenate([base, [upper], points]))


def grid_genie(
    limits: DerivedLimits, snr2: float, beta: float, settings: GridSpec | None = None
) -> tuple[tuple[float, float, float], float]:
    """Exhaustive search for the genie-aided allocation.

    The on-state powers (rho1N, rho1S) are gridded; rho0 is set to the value
    that makes the average power constraint tight. The grid is augmented
    with the constraint breakpoints and with the INR line rho1N + rho1S = cap.

    Returns:
        ((rho0, rho1N, rho1S), rate) for the best feasible grid point.
    """
    settings = settings or GridSpec()
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"grid_genie: beta must lie in [0, 1], got {beta!r}")
    if snr2 <= 0:
        return (0.0, 0.0, 0.0), 0.0
    if beta == 0:
        return (snr2, 0.0, 0.0), cap(snr2)

    beta_bar = 1.0 - beta
    on_cap = min(limits.inr_c, snr2 / beta)
    sic = min(limits.sic_plus, on_cap)
    breaks = [limits.sic_plus, limits.inr_c, snr2, on_cap]

    s_axis = _axis(sic, settings.step, breaks)
    n_axis = _axis(on_cap, settings.step, breaks + [on_cap - s for s in s_axis])

    def objective(n: np.ndarray, s: np.ndarray) -> np.ndarray:
        on = cap(n / (1.0 + limits.inr2 + s)) + cap(s)
        if beta_bar == 0:
            return on
        rho0 = np.maximum(snr2 - beta * (n + s), 0.0) / beta_bar
        return beta_bar * cap(rho0) + beta * on

    best_rate = -math.inf
    best: tuple[float, float, float] | None = None
    for start in range(0, s_axis.size, GRID_CHUNK):
        s = s_axis[start : start + GRID_CHUNK, None]
        n = n_axis[None, :]
        feasible = n + s <= on_cap * (1.0 + 1e-12)
        if not feasible.any():
            continue
        values = np.where(feasible, objective(n, s), -math.inf)
        i, j = np.unravel_index(int(np.argmax(values)), values.shape)
        if values[i, j] > best_rate:
            best_rate = float(values[i, j])
            n_best, s_best = float(n_axis[j]), float(s[i, 0])
            rho0 = 0.0 if beta_bar == 0 else max(snr2 - beta * (n_best + s_best), 0.0) / beta_bar
            best = (rho0, n_best, s_best)

    if best is None:
        raise OracleError("grid_genie: feasible set is empty")
    _log.debug("grid_genie: %d x %d grid, best rate %.9g", s_axis.size, n_axis.size, best_rate)
    return best, best_rate


# ---------------------------------------------------------------------------
# Superposition fraction grid
# ---------------------------------------------------------------------------


def grid_alpha(
    limits: DerivedLimits,
    snr1: float,
    snr2: float,
    inr_gap: float,
    settings: GridSpec | None = None,
) -> tuple[float, float]:
    """1-D exhaustive search over the superposition fraction.

    The grid covers [0, min(1, SIC_C / P)] with P = min(SNR2, INR_C), the
    right end point always included.
    """
    settings = settings or GridSpec()
    power = min(snr2, limits.inr_c)
    if inr_gap <= 0 or power <= 0:
        return 0.0, 0.0
    a_max = min(max(limits.sic_c / power, 0.0), 1.0)
    alphas = np.unique(np.append(np.arange(0.0, a_max, settings.alpha_step), a_max))
    rates = np.asarray(superposition_rate(alphas, power, limits.inr2))
    k = int(np.argmax(rates))
    return float(alphas[k]), float(rates[k])


# ---------------------------------------------------------------------------
# Projected gradient ascent over power profiles
# ---------------------------------------------------------------------------


def _segment_projection(
    pn: np.ndarray, ps: np.ndarray, a: tuple[float, float], b: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dn, ds = b[0] - a[0], b[1] - a[1]
    length_sq = dn * dn + ds * ds
    if length_sq == 0:
        t = np.zeros_like(pn)
    else:
        t = np.clip(((pn - a[0]) * dn + (ps - a[1]) * ds) / length_sq, 0.0, 1.0)
    qn, qs = a[0] + t * dn, a[1] + t * ds
    return qn, qs, (pn - qn) ** 2 + (ps - qs) ** 2


def project_pairs(
    rho_n: np.ndarray, rho_s: np.ndarray, sic: float, inr_c: float
) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean projection of each (rho_N, rho_S) pair onto its per-slot polygon.

    The polygon is rho_N >= 0, 0 <= rho_S <= min(sic, inr_c), rho_N + rho_S <= inr_c.
    """
    m = min(sic, inr_c)
    inside = (rho_n >= 0) & (rho_s >= 0) & (rho_s <= m) & (rho_n + rho_s <= inr_c)
    corners = [(0.0, 0.0), (inr_c, 0.0), (inr_c - m, m), (0.0, m)]
    best_n = np.zeros_like(rho_n)
    best_s = np.zeros_like(rho_s)
    best_d = np.full(rho_n.shape, np.inf)
    for k in range(4):
        qn, qs, d = _segment_projection(rho_n, rho_s, corners[k], corners[(k + 1) % 4])
        closer = d < best_d
        best_n = np.where(closer, qn, best_n)
        best_s = np.where(closer, qs, best_s)
        best_d = np.where(closer, d, best_d)
    out_n = np.where(inside, rho_n, best_n)
    out_s = np.where(inside, rho_s, best_s)
    return np.maximum(out_n, 0.0), np.maximum(out_s, 0.0)


def project_feasible(
    rho_n: np.ndarray,
    rho_s: np.ndarray,
    weights: np.ndarray,
    budget: float,
    sic: float,
    inr_c: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact projection onto the per-slot polygons intersected with the power budget.

    *weights* has one entry per sensed state. The budget constraint is
    enforced by shifting both powers of a pair down by nu * weight and
    bisecting on nu.
    """
    w = weights[:, None]

    def at(nu: float) -> tuple[np.ndarray, np.ndarray]:
        return project_pairs(rho_n - nu * w, rho_s - nu * w, sic, inr_c)

    def spend(pair: tuple[np.ndarray, np.ndarray]) -> float:
        return float((w * (pair[0] + pair[1])).sum())

    pair = at(0.0)
    if spend(pair) <= budget:
        return pair
    active = weights > 0
    lo = 0.0
    hi = max(float(rho_n.max()), float(rho_s.max()), 0.0) / float(weights[active].min()) + 1.0
    pair = at(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        trial = at(mid)
        if spend(trial) > budget:
            lo = mid
        else:
            hi, pair = mid, trial
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return pair


def projected_gradient_profile(
    params: ChannelParams,
    traffic: TrafficModel,
    sensing: SensingModel,
    settings: GridSpec | None = None,
    start: PowerProfile | None = None,
) -> tuple[PowerProfile, float]:
    """Maximise the average secondary rate over all 4T powers by projected gradient ascent.

    Accelerated with momentum, backtracking on the step size and restart
    whenever the objective drops. Stops once the rate improves by less than
    ``settings.tol`` and the gradient mapping is below ``settings.grad_tol``.

    Raises:
        OracleError: At the iteration cap; the best iterate is attached.
    """
    settings = settings or GridSpec()
    t_len = traffic.t_len
    limits = derive_limits(params, long_run_on_fraction(traffic))
    budget = (t_len + 1) * params.snr2
    inr_c, sic, inr2 = limits.inr_c, limits.sic_plus, limits.inr2
    if budget <= 0 or inr_c <= 0:
        return PowerProfile.zeros(t_len), 0.0

    q = sensing.joint(traffic).sum(axis=0)
    g, h = noise_weights(traffic, sensing)
    norm = 1.0 / (t_len + 1)

    def value(z: np.ndarray) -> float:
        n, s = z[0], z[1]
        total = n + s
        on = cap(total + inr2) - cap(s + inr2) + cap(s)
        return norm * float((g * cap(total) + h * on).sum())

    def grad(z: np.ndarray) -> np.ndarray:
        return np.stack(gradient_arrays(z[0], z[1], g, h, inr2, t_len))

    def project(z: np.ndarray) -> np.ndarray:
        return np.stack(project_feasible(z[0], z[1], q, budget, sic, inr_c))

    lipschitz = 2.0 / _LN2 * float(q.max()) * norm
    step = settings.ascent_step / lipschitz

    if start is None:
        x = np.zeros((2, 2, t_len))
    else:
        x = project(np.stack([start.rho_n, start.rho_s]))
    f_x = value(x)
    y = x.copy()
    theta = 1.0

    for it in range(settings.max_iters):
        gy = grad(y)
        f_y = value(y)
        while True:
            x_new = project(y + step * gy)
            d = x_new - y
            f_new = value(x_new)
            if f_new >= f_y + float((gy * d).sum()) - float((d * d).sum()) / (2.0 * step) - 1e-15:
                break
            step *= 0.5

        if f_new < f_x and theta > 1.0:
            # momentum overshot; restart from the last accepted point
            y, theta = x.copy(), 1.0
            continue

        mapping = float(np.abs(d).max()) / step
        improvement = f_new - f_x
        theta_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        y = x_new + ((theta - 1.0) / theta_next) * (x_new - x)
        x, f_x, theta = x_new, f_new, theta_next

        if abs(improvement) < settings.tol and mapping <= settings.grad_tol:
            _log.debug("projected gradient converged after %d iterations, rate %.12g", it + 1, f_x)
            return PowerProfile(x[0], x[1]), value(x)

    best = PowerProfile(x[0], x[1])
    raise OracleError(
        f"projected gradient hit the iteration cap ({settings.max_iters})", best=best, rate=value(x)
    )
