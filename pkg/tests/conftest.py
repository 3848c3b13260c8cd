"""Shared fixtures and independent reference oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from oastats import (
    AvailabilityModel,
    NoiseModel,
    ObservationPanel,
    TruthSeries,
    estimate_moments,
)

DEFAULT_NOISE = NoiseModel(0.2)


def rainfall_panel(n: int = 24, n_time: int = 120, seed: int = 11):
    """Rainfall-like fixture: positive site means from dry to wet tails with a
    flat center, a common signal with deviation-growing sensitivity mismatch,
    and idiosyncratic volatility growing with the climatological offset."""
    rng = np.random.default_rng(seed)
    v = 2.0 * (np.arange(n) + 0.5) / n - 1.0
    mu = 11.0 * np.exp(1.2 * v**3)
    mu_bar = mu.mean()
    sigma_c = 2.0
    common = rng.standard_normal(n_time)
    gamma = 1.0 + 0.5 * (mu / mu_bar - 1.0)
    f = (mu - mu_bar) ** 2
    sigma_w = np.sqrt(1.0 + 0.5 * f)
    idio = rng.standard_normal((n, n_time)) * sigma_w[:, None]
    values = mu[:, None] + gamma[:, None] * sigma_c * common[None, :] + idio
    truth = TruthSeries(mu_bar + sigma_c * common)
    panel = ObservationPanel(values, tuple(f"s{j:02d}" for j in range(n)))
    return panel, truth


def wavy_weights(n: int, phase: float, amp: float = 0.3) -> np.ndarray:
    """Deterministic mildly non-uniform simplex weights."""
    w = 1.0 + amp * np.sin(2.0 * np.pi * (np.arange(n) + 1) / n + phase)
    return w / w.sum()


@pytest.fixture(scope="session")
def rainfall():
    """The standard fixture: rainfall-like panel + truth + moments at alpha=1."""
    panel, truth = rainfall_panel()
    m = estimate_moments(panel, truth, DEFAULT_NOISE, AvailabilityModel(1.0))
    return panel, truth, m


# ---------------------------------------------------------------------------
# independent QP reference: fine simplex-grid minimization refined by
# projected gradient (no shared code with the active-set solver)
# ---------------------------------------------------------------------------


def project_to_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {b >= 0, sum b = 1} (sort-based)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, y.size + 1) > (css - 1.0))[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(y - tau, 0.0)


def _simplex_grid(n: int, resolution: int) -> np.ndarray:
    """All points of the simplex lattice {k/resolution} with n parts."""
    points = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            points.append(prefix + [remaining])
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], resolution, n)
    return np.array(points, dtype=float) / resolution


def reference_qp_min(q: np.ndarray, resolution: int = 8, iters: int = 20000) -> tuple[np.ndarray, float]:
    """Brute-force reference minimizer of b'Qb on the simplex.

    Coarse lattice search picks the best start; accelerated projected
    gradient (FISTA with gradient restart) refines it.  Independent of the
    active-set path.
    """
    n = q.shape[0]
    grid = _simplex_grid(n, resolution)
    vals = np.einsum("ij,jk,ik->i", grid, q, grid)
    x = grid[int(np.argmin(vals))].copy()
    lip = 2.0 * max(float(np.linalg.eigvalsh(q).max()), 1e-12)
    step = 1.0 / lip
    q2 = 2.0 * q
    y = x.copy()
    t = 1.0
    best = float(x @ q @ x)
    best_x = x.copy()
    stale = 0
    for _ in range(iters):
        grad = q2 @ y
        x_new = project_to_simplex(y - step * grad)
        if float(grad @ (x_new - x)) > 0.0:  # gradient restart
            y = x.copy()
            t = 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t**2))
        y = x_new + (t - 1.0) / t_new * (x_new - x)
        f_new = float(x_new @ q @ x_new)
        if f_new < best - 1e-15 * (1.0 + abs(best)):
            best, best_x, stale = f_new, x_new.copy(), 0
        else:
            stale += 1
        if np.abs(x_new - x).max() < 1e-15 or stale >= 200:
            x = x_new
            break
        x, t = x_new, t_new
    if float(x @ q @ x) > best:
        x = best_x
    return x, float(x @ q @ x)


def random_psd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    """Random PSD matrix from an outer product, optionally rank-deficient."""
    r = rank if rank is not None else n
    a = rng.standard_normal((n, r))
    return a @ a.T
