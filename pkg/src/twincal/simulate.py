"""Synthetic data generation for the two studies.

Toy study: reality y(x) = 3.5 exp(-u x) + b + eps against the misspecified
mean 5 exp(-u x), for M individuals with u_m = 0.7 + 0.1 m.

Cardiovascular study: pressure traces generated from the three-element
Windkessel (WK3) with a half-sine systolic inflow, observed with noise on
unaligned pressure/flow grids; the fitted model is the two-element WK2, so
R1 controls the model discrepancy and the evaluation truth is R = R1 + R2.

All generators are deterministic given the seed (Philox counter-based RNG).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gp_core import IndividualDataset

# inflow waveform constants (seconds, mL/s)
CYCLE_PERIOD = 0.8
SYSTOLE_DURATION = 0.3
PEAK_FLOW = 425.0

TOY_NOISE_SD = 0.3
CARDIO_SIGMA_P = 4.0
CARDIO_SIGMA_Q = 10.0

RK4_STEP = 1e-4
PERIODICITY_TOL = 0.1  # mmHg across one cycle at steady state


@dataclass
class ToyTruth:
    u: np.ndarray          # true physical parameter per individual
    b: np.ndarray          # per-individual offset
    noise_sd: float = TOY_NOISE_SD


@dataclass
class WK3Truth:
    R1: np.ndarray
    R2: np.ndarray
    C: np.ndarray
    sigma_P: float = CARDIO_SIGMA_P
    sigma_Q: float = CARDIO_SIGMA_Q

    @property
    def R(self) -> np.ndarray:
        """WK2-equivalent total resistance, the evaluation truth."""
        return self.R1 + self.R2


def _rng(seed, *key):
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key)))


def toy_reality(x, u, b):
    return 3.5 * np.exp(-u * np.asarray(x, dtype=float)) + b


def gen_toy(M: int, seed: int, n_points: int = 20, x_max: float = 2.0):
    """Toy population: M datasets on an equally spaced grid over [0, x_max].

    The training grid (n=20 on [0, 2]) and the extrapolation split at x = 2
    used downstream are choices not fixed by the study description.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    # (7 + m) / 10 rather than 0.7 + 0.1 m so u_1 is exactly 0.8 in floats
    u = (7.0 + np.arange(1, M + 1)) / 10.0
    rng = _rng(seed, 0)
    b = rng.uniform(0.5, 5.0, size=M)
    x = np.linspace(0.0, x_max, n_points)
    datasets = []
    for m in range(M):
        eps = rng.normal(0.0, TOY_NOISE_SD, size=n_points)
        y = toy_reality(x, u[m], b[m]) + eps
        datasets.append(IndividualDataset(id=m + 1, x_u=x.copy(), y_u=y))
    return datasets, ToyTruth(u=u, b=b)


def inflow(t):
    """Half-sine systolic inflow, periodic with period CYCLE_PERIOD."""
    t = np.asarray(t, dtype=float)
    tt = np.mod(t, CYCLE_PERIOD)
    q = np.where(tt < SYSTOLE_DURATION,
                 PEAK_FLOW * np.sin(np.pi * tt / SYSTOLE_DURATION), 0.0)
    return q if q.ndim else float(q)


def inflow_rate(t):
    """dQ/dt of the half-sine inflow (discontinuous at the systole edges)."""
    t = np.asarray(t, dtype=float)
    tt = np.mod(t, CYCLE_PERIOD)
    dq = np.where(
        tt < SYSTOLE_DURATION,
        PEAK_FLOW * np.pi / SYSTOLE_DURATION
        * np.cos(np.pi * tt / SYSTOLE_DURATION), 0.0)
    return dq if dq.ndim else float(dq)


def wk3_solve(R1, R2, C, t_grid, P0: float = 80.0,
              n_cycles_burnin: int = 10, max_cycles: int = 30,
              step: float = RK4_STEP, q=None, dq=None,
              periodic_tol: float = PERIODICITY_TOL):
    """Steady-state WK3 pressure at t_grid (times within one cycle).

    Classical fixed-step RK4; burn-in cycles are integrated until the cycle
    is periodic (|P(0) - P(T)| < periodic_tol), then the requested cycle
    is integrated once more and sampled by linear interpolation.  The inflow
    waveform (and its rate of change) default to :func:`inflow` but can be
    overridden with any period-CYCLE_PERIOD callables.
    """
    q = q if q is not None else inflow
    dq = dq if dq is not None else (inflow_rate if q is inflow
                                    else (lambda t: np.zeros_like(t)))

    if min(R1, R2, C) < 0 or R2 <= 0 or C <= 0:
        raise ValueError("WK3 parameters must be positive (R1 >= 0)")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0) or np.any(t_grid > CYCLE_PERIOD):
        raise ValueError("t_grid must lie within one cycle [0, T]")

    n_steps = int(round(CYCLE_PERIOD / step))

    # the forcing term is time-only, so sample it once on the full and
    # half-step grids and keep the RK4 loop in scalar float arithmetic.
    # dQ/dt jumps at the systole edges and the cycle wrap; the step start
    # must see the right-limit and the step end the left-limit, otherwise
    # the discontinuity degrades RK4 to first order
    a = -1.0 / (R2 * C)
    t_full = np.arange(n_steps + 1) * step
    t_half = t_full[:-1] + step / 2.0
    forcing = lambda t: np.asarray(q(t)) / C * (1.0 + R1 / R2) \
        + R1 * np.asarray(dq(t))
    f_start = forcing(t_full[:-1]).tolist()
    f_end = forcing(t_full[1:] - 1e-9 * step).tolist()
    f_half = forcing(t_half).tolist()

    def integrate_cycle(P):
        trace = np.empty(n_steps + 1)
        trace[0] = P
        h = step
        for i in range(n_steps):
            k1 = a * P + f_start[i]
            k2 = a * (P + h / 2 * k1) + f_half[i]
            k3 = a * (P + h / 2 * k2) + f_half[i]
            k4 = a * (P + h * k3) + f_end[i]
            P = P + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            trace[i + 1] = P
        return trace

    P = P0
    trace = None
    for cycle in range(max_cycles):
        trace = integrate_cycle(P)
        drift = abs(trace[-1] - trace[0])
        P = trace[-1]
        if cycle + 1 >= n_cycles_burnin and drift < periodic_tol:
            break
    else:
        raise RuntimeError(
            f"WK3 did not reach a periodic cycle in {max_cycles} cycles "
            f"(last drift {drift:.3g} mmHg)")

    t_dense = np.arange(n_steps + 1) * step
    return np.interp(t_grid, t_dense, trace)


def wk2_solve(R, C, t_grid, **kwargs):
    """WK2 reference pressure: the R1 = 0 special case of WK3 with R2 = R."""
    return wk3_solve(0.0, R, C, t_grid, **kwargs)


def cardio_grids(n_P: int = 20, n_Q: int = 15):
    """Unaligned observation grids over one cycle.

    The flow grid is offset by a third of its spacing; a half-step offset
    would still collide with the pressure grid for the default sizes.
    """
    t_P = np.arange(n_P) * (CYCLE_PERIOD / n_P)
    step_Q = CYCLE_PERIOD / n_Q
    t_Q = np.arange(n_Q) * step_Q + step_Q / 3.0
    return t_P, t_Q


def gen_cardio(seed: int, n_P: int = 20, n_Q: int = 15,
               sigma_P: float = CARDIO_SIGMA_P,
               sigma_Q: float = CARDIO_SIGMA_Q):
    """Nine individuals on the 3x3 grid of (R2, C), R1 ~ U[0.02, 0.1]."""
    R2_vals = np.array([1.0, 1.15, 1.3])
    C_vals = np.array([0.95, 1.1, 1.25])
    R2, C = (a.ravel() for a in np.meshgrid(R2_vals, C_vals, indexing="ij"))
    rng = _rng(seed, 1)
    R1 = rng.uniform(0.02, 0.1, size=9)

    t_P, t_Q = cardio_grids(n_P, n_Q)
    datasets = []
    for m in range(9):
        pressure = wk3_solve(R1[m], R2[m], C[m], t_P)
        if np.any(pressure <= 20.0) or np.any(pressure >= 250.0):
            raise RuntimeError(
                f"pressure trace outside (20, 250) mmHg for individual {m+1}")
        y_P = pressure + rng.normal(0.0, sigma_P, size=n_P)
        y_Q = inflow(t_Q) + rng.normal(0.0, sigma_Q, size=n_Q)
        datasets.append(IndividualDataset(
            id=m + 1, x_u=t_P.copy(), y_u=y_P, x_f=t_Q.copy(), y_f=y_Q))
    return datasets, WK3Truth(R1=R1, R2=R2, C=C,
                              sigma_P=sigma_P, sigma_Q=sigma_Q)
