"""
Nonlinear Klein-Gordon integration and the accompanying bookkeeping: Strang
splitting with exact linear flow, energy accounting, the Duhamel fixed-point
solver, the energy differential inequality audit, and greedy interval
partitioning by Strichartz mass.

The model equation is ``u_tt - Delta u + u + |u|^(p-1) u = 0`` (defocusing,
odd nonlinearity); with a forcing field the nonlinear term reads
``|u + F|^(p-1) (u + F)``.  At the critical coupling ``p = (d+2)/(d-2)`` all
exponents below reduce to the classical critical-case values; they are kept
symbolic in ``(d, p)`` so that desk-scale runs in low dimension exercise the
same bookkeeping:

* Strichartz norm ``S(I) = L^p_t(I, L^{2p}_x)``;
* energy density ``u_t^2/2 + |grad u|^2/2 + u^2/2 + |u|^(p+1)/(p+1)``;
* energy-derivative bound ``|e'(t)| <= C (e^a ||F||_m + e^(1/2) ||F||_{2p}^p)``
  with ``a = (3p-1)/(2(p+1))`` and ``m = 2(p+1)/(3-p)`` (the potential-term
  Hoelder route; ``m = inf`` at ``p = 3``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    RealField,
    StatePair,
    TorusGrid,
    lp_norm,
    mixed_norm,
)

__all__ = [
    "NonlinearModel",
    "Trajectory",
    "EnergyRecord",
    "step_strang",
    "integrate",
    "energy",
    "energy_density",
    "local_solve_contraction",
    "duhamel_residual",
    "duhamel_force_response",
    "gronwall_bound",
    "gronwall_differential_check",
    "partition_by_strichartz",
    "StepSizeError",
    "DivergenceError",
    "IntervalTooLargeError",
    "ContractionReport",
]


class StepSizeError(ValueError):
    """dt exceeds the splitting-accuracy bound for the current state."""


class DivergenceError(RuntimeError):
    """Non-finite samples appeared, or an iteration failed to converge."""


class IntervalTooLargeError(RuntimeError):
    """The contraction smallness check failed; shrink the interval."""


@dataclass(frozen=True)
class NonlinearModel:
    """Defocusing power nonlinearity ``|u|^(p-1) u`` in dimension ``d``."""

    d: int
    p: float | None = None

    def __post_init__(self) -> None:
        if self.p is None:
            if self.d <= 2:
                raise ValueError(
                    "the critical power (d+2)/(d-2) is undefined for d <= 2; "
                    "pass p explicitly"
                )
            object.__setattr__(self, "p", (self.d + 2.0) / (self.d - 2.0))
        if self.p < 1:
            raise ValueError("nonlinearity power must be >= 1")

    def nonlinearity(self, u: np.ndarray) -> np.ndarray:
        if self.p == 3.0:
            return u * u * u
        if self.p == 1.0:
            return u
        return np.abs(u) ** (self.p - 1.0) * u

    @property
    def s_exponents(self) -> tuple[float, float]:
        """(q, r) of the Strichartz norm ``S = L^q_t L^r_x``; q = p, r = 2p."""
        return (self.p, 2.0 * self.p)

    def s_norm(self, times, fields, window=None) -> float:
        q, r = self.s_exponents
        return mixed_norm(times, fields, q, r, window)

    @property
    def gronwall_exponents(self) -> tuple[float, float]:
        """(a, m): energy power and forcing Lebesgue exponent of the e' bound."""
        a = (3.0 * self.p - 1.0) / (2.0 * (self.p + 1.0))
        if self.p < 3.0:
            m = 2.0 * (self.p + 1.0) / (3.0 - self.p)
        elif self.p == 3.0:
            m = math.inf
        else:
            if self.d <= 2:
                # H^1 controls every finite Lebesgue norm in d <= 2
                a = self.p / 2.0
                m = math.inf
            else:
                raise ValueError("energy bound for p > 3 implemented only for d <= 2")
        return a, m


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    value: float


@dataclass
class Trajectory:
    """Uniformly spaced state snapshots plus the model that produced them."""

    times: np.ndarray
    states: list
    model: NonlinearModel
    forcing: object | None = None

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.states):
            raise ValueError("times and states must align")
        if len(self.times) >= 2:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
                raise ValueError("snapshots must be uniformly spaced in time")

    @property
    def grid(self) -> TorusGrid:
        return self.states[0].grid

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def u_fields(self) -> list:
        return [s.u for s in self.states]

    def energies(self) -> list:
        return [EnergyRecord(float(t), energy(s, self.model))
                for t, s in zip(self.times, self.states)]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a stored snapshot")
        return i


def _pair_multipliers(grid: TorusGrid, t: float):
    br = grid.bracket()
    return np.cos(t * br), np.sin(t * br), br


def _linear_flow(u_hat, v_hat, grid: TorusGrid, t: float):
    c, s, br = _pair_multipliers(grid, t)
    return c * u_hat + (s / br) * v_hat, -br * s * u_hat + c * v_hat


def step_strang(
    state: StatePair,
    dt: float,
    model: NonlinearModel,
    forcing=None,
    t: float = 0.0,
) -> StatePair:
    """One Strang step: half linear flow, nonlinear kick, half linear flow.

    The kick applies ``u_t -= dt * |u + F|^(p-1) (u + F)`` with the forcing
    evaluated at the midpoint time.  ``forcing`` is a callable ``t -> field``
    (RealField or array) or None.  Enforces the splitting-accuracy bound
    ``dt <= 0.1 / (1 + ||u||_inf^(p-1))``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    umax = float(np.max(np.abs(state.u.values)))
    if dt > 0.1 / (1.0 + umax ** (model.p - 1.0)) + 1e-15:
        raise StepSizeError(
            f"dt={dt} exceeds 0.1/(1+||u||_inf^(p-1)) = "
            f"{0.1 / (1.0 + umax ** (model.p - 1.0)):.3e}"
        )
    u_hat = np.fft.fftn(state.u.values)
    v_hat = np.fft.fftn(state.ut.values)
    u_hat, v_hat = _linear_flow(u_hat, v_hat, grid, dt / 2.0)
    u_mid = np.fft.ifftn(u_hat).real
    arg = u_mid
    if forcing is not None:
        f_mid = forcing(t + dt / 2.0)
        f_vals = f_mid.values if isinstance(f_mid, RealField) else np.asarray(f_mid)
        arg = u_mid + f_vals
    kick = model.nonlinearity(arg)
    if not np.all(np.isfinite(kick)):
        raise DivergenceError("non-finite samples in the nonlinear kick")
    v_hat = v_hat - dt * np.fft.fftn(kick)
    u_hat, v_hat = _linear_flow(u_hat, v_hat, grid, dt / 2.0)
    u = np.fft.ifftn(u_hat).real
    v = np.fft.ifftn(v_hat).real
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DivergenceError("solution lost finiteness during a step")
    return StatePair(RealField(grid, u), RealField(grid, v))


def integrate(
    state: StatePair,
    dt: float,
    n_steps: int,
    model: NonlinearModel,
    forcing=None,
    t0: float = 0.0,
    record_every: int = 1,
) -> Trajectory:
    times = [t0]
    states = [state]
    current = state
    t = t0
    for n in range(n_steps):
        current = step_strang(current, dt, model, forcing, t)
        t = t0 + (n + 1) * dt
        if (n + 1) % record_every == 0:
            times.append(t)
            states.append(current)
    return Trajectory(np.asarray(times), states, model, forcing)


def energy_density(state: StatePair, model: NonlinearModel) -> np.ndarray:
    """Pointwise energy density including the defocusing potential term."""
    grid = state.grid
    u_hat = np.fft.fftn(state.u.values)
    mesh = grid.frequency_mesh()
    grad2 = np.zeros(grid.shape)
    for ax in mesh:
        du = np.fft.ifftn(1j * ax * u_hat).real
        grad2 += du**2
    p = model.p
    return (
        0.5 * state.ut.values**2
        + 0.5 * grad2
        + 0.5 * state.u.values**2
        + np.abs(state.u.values) ** (p + 1.0) / (p + 1.0)
    )


def energy(state: StatePair, model: NonlinearModel) -> float:
    grid = state.grid
    return float(np.sum(energy_density(state, model)) * grid.dx**grid.d)


def duhamel_force_response(grid: TorusGrid, times, source_fields) -> list:
    """Pair trajectory ``-int_0^t K(t-s)(0, G(s)) ds`` by stepwise trapezoid.

    Exact composition of the group makes the stepwise accumulation equal to
    the global trapezoidal Duhamel sum with kernel ``sin((t-s)<D>)/<D>``.
    Returns the list of ``(w, w_t)`` spectral pairs as StatePairs.
    """
    times = np.asarray(times, dtype=float)
    w_hat = np.zeros(grid.shape, dtype=complex)
    wt_hat = np.zeros(grid.shape, dtype=complex)
    out = [StatePair.zeros(grid)]
    g_prev = np.fft.fftn(np.asarray(source_fields[0], dtype=float))
    for i in range(1, len(times)):
        dt = times[i] - times[i - 1]
        g_next = np.fft.fftn(np.asarray(source_fields[i], dtype=float))
        w_hat, wt_hat = _linear_flow(w_hat, wt_hat, grid, dt)
        c, s, br = _pair_multipliers(grid, dt)
        # trapezoid: half weight on the transported left endpoint, half on the right
        w_hat += -0.5 * dt * (s / br) * g_prev
        wt_hat += -0.5 * dt * (c * g_prev + g_next)
        out.append(
            StatePair(
                RealField(grid, np.fft.ifftn(w_hat).real),
                RealField(grid, np.fft.ifftn(wt_hat).real),
            )
        )
        g_prev = g_next
    return out


def _duhamel_apply(
    data: StatePair, times, arg_fields, model: NonlinearModel
) -> list:
    """One Picard application: free flow of ``data`` minus the force response
    of ``|arg|^(p-1) arg`` along the stored time grid."""
    grid = data.grid
    sources = [model.nonlinearity(np.asarray(a, dtype=float)) for a in arg_fields]
    response = duhamel_force_response(grid, times, sources)
    out = []
    u0_hat = np.fft.fftn(data.u.values)
    v0_hat = np.fft.fftn(data.ut.values)
    for i, t in enumerate(times):
        uh, vh = _linear_flow(u0_hat, v0_hat, grid, float(t) - float(times[0]))
        out.append(
            StatePair(
                RealField(grid, np.fft.ifftn(uh).real + response[i].u.values),
                RealField(grid, np.fft.ifftn(vh).real + response[i].ut.values),
            )
        )
    return out


@dataclass(frozen=True)
class ContractionReport:
    iterations: int
    distances: list          # successive S(I)-distances
    factors: list            # contraction factors (ratios of distances)
    first_iterate_norm: float
    converged: bool


def local_solve_contraction(
    data: StatePair,
    forcing_traj,
    times,
    eta: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> tuple[Trajectory, ContractionReport]:
    """Picard iteration of the Duhamel map on a stored time grid.

    ``forcing_traj`` is a Trajectory of forcing fields aligned with ``times``.
    Iterates until the successive ``S(I)`` distance drops below ``tol``.  The
    smallness condition is checked, not assumed: the measured one-iteration
    Lipschitz factor stands in for the abstract constant and must be at most
    ``eta`` (default 1/2, the proof's threshold), otherwise the interval is
    too large.
    """
    times = np.asarray(times, dtype=float)
    grid = data.grid
    model = forcing_traj.model if isinstance(forcing_traj, Trajectory) else None
    if model is None:
        raise ValueError("forcing_traj must be a Trajectory carrying the model")
    if len(forcing_traj.times) != len(times) or np.max(
        np.abs(forcing_traj.times - times)
    ) > 1e-9:
        raise ValueError("forcing trajectory must be stored on the same grid of times")
    f_vals = [f.values for f in forcing_traj.u_fields()]

    def arg_fields(states):
        return [s.u.values + fv for s, fv in zip(states, f_vals)]

    # first iterate: free evolution of the data
    current = _duhamel_apply(data, times, [np.zeros(grid.shape)] * len(times), model)
    # note: zero source => pure free flow
    distances = []
    factors = []
    first_norm = model.s_norm(times, [s.u for s in current])
    converged = False
    for it in range(max_iter):
        nxt = _duhamel_apply(data, times, arg_fields(current), model)
        diff = [
            RealField(grid, a.u.values - b.u.values) for a, b in zip(nxt, current)
        ]
        dist = model.s_norm(times, diff)
        distances.append(dist)
        if len(distances) >= 2 and distances[-2] > 0:
            factors.append(distances[-1] / distances[-2])
        if it == 1 and factors and factors[-1] > eta:
            raise IntervalTooLargeError(
                f"measured contraction factor {factors[-1]:.3f} > {eta}; "
                "shrink the interval or the data"
            )
        current = nxt
        if dist < tol:
            converged = True
            break
    if not converged:
        raise DivergenceError(f"no contraction fixed point in {max_iter} iterations")
    traj = Trajectory(times, current, model, forcing_traj)
    return traj, ContractionReport(
        len(distances), distances, factors, first_norm, converged
    )


def duhamel_residual(traj: Trajectory, model: NonlinearModel, forcing=None,
                     checkpoints=None) -> float:
    """Sup over checkpoints of ``||u(t) - Duhamel(u)(t)||_2``."""
    times = traj.times
    if forcing is not None:
        f_vals = [f.values if isinstance(f, RealField) else np.asarray(f)
                  for f in forcing]
        args = [s.u.values + fv for s, fv in zip(traj.states, f_vals)]
    else:
        args = [s.u.values for s in traj.states]
    mapped = _duhamel_apply(traj.states[0], times, args, model)
    if checkpoints is None:
        checkpoints = range(len(times))
    worst = 0.0
    for i in checkpoints:
        diff = RealField(traj.grid, mapped[i].u.values - traj.states[i].u.values)
        worst = max(worst, lp_norm(diff, 2))
    return worst


@dataclass(frozen=True)
class GronwallReport:
    times: np.ndarray
    energies: np.ndarray
    bound: np.ndarray
    fitted_constant: float
    branch: str


def gronwall_bound(
    times, energies, forcing_sup_series, forcing_s_series, model: NonlinearModel
) -> GronwallReport:
    """Pointwise energy bound series for the critical dimensions.

    For ``d = 4``: ``(e(0) + ||F||_S^6)(1 + ||F||_{L1 Linf} exp(...))``;
    for ``d = 5``: ``e(0) + ||F||_S^{14/3} + ||F||_{L1 L10}^{10}``.
    ``forcing_sup_series`` holds ``||F(t)||_inf`` (d=4) or ``||F(t)||_10``
    (d=5); ``forcing_s_series`` holds ``||F(t)||_{L^{2p}_x}`` for the running
    S-norm.  The fitted constant is ``max_t e(t)/bound(t)``.
    """
    times = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    sup_series = np.asarray(forcing_sup_series, dtype=float)
    s_series = np.asarray(forcing_s_series, dtype=float)
    q = model.p  # S-norm time exponent
    bound = np.empty_like(e)
    if model.d == 4:
        for i in range(len(times)):
            tt, ss, ll = times[: i + 1], s_series[: i + 1], sup_series[: i + 1]
            s_cum = np.trapezoid(ss**q, tt) ** (1.0 / q) if i else 0.0
            l1 = np.trapezoid(ll, tt) if i else 0.0
            bound[i] = (e[0] + s_cum**6) * (1.0 + l1 * math.exp(l1))
        branch = "d4"
    elif model.d == 5:
        for i in range(len(times)):
            tt, ss, ll = times[: i + 1], s_series[: i + 1], sup_series[: i + 1]
            s_cum = np.trapezoid(ss**q, tt) ** (1.0 / q) if i else 0.0
            l1 = np.trapezoid(ll, tt) if i else 0.0
            bound[i] = e[0] + s_cum ** (14.0 / 3.0) + l1**10
        branch = "d5"
    else:
        raise ValueError("integral bound implemented for d in {4, 5}; "
                         "use gronwall_differential_check for other d")
    ratio = float(np.max(e / np.maximum(bound, 1e-300)))
    return GronwallReport(times, e, bound, ratio, branch)


@dataclass(frozen=True)
class DifferentialCheck:
    times: np.ndarray
    derivative: np.ndarray
    rhs: np.ndarray
    fitted_constant: float   # max over checkpoints of |e'| / rhs


def gronwall_differential_check(
    times, energies, forcing_fields, model: NonlinearModel
) -> DifferentialCheck:
    """Audit ``|e'(t)| <= C (e^a ||F(t)||_m + e^(1/2) ||F(t)||_{2p}^p)``.

    ``e'`` is estimated by centered finite differences at interior
    checkpoints; the report carries the smallest admissible constant.
    """
    times = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    a, m = model.gronwall_exponents
    grid = forcing_fields[0].grid
    f_m = np.array([lp_norm(f, m, grid=grid) for f in forcing_fields])
    f_2p = np.array([lp_norm(f, 2.0 * model.p, grid=grid) for f in forcing_fields])
    de = (e[2:] - e[:-2]) / (times[2:] - times[:-2])
    rhs = (e[1:-1] ** a) * f_m[1:-1] + np.sqrt(e[1:-1]) * f_2p[1:-1] ** model.p
    fitted = float(np.max(np.abs(de) / np.maximum(rhs, 1e-300)))
    return DifferentialCheck(times[1:-1], de, rhs, fitted)


def partition_by_strichartz(times, fields, horizon, eta: float, model: NonlinearModel):
    """Greedy left-to-right maximal intervals with ``S``-norm at most eta.

    Returns a list of ``(t_start, t_end)`` covering ``[times[0], horizon]``.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    times = np.asarray(times, dtype=float)
    mask = times <= horizon + 1e-12
    times = times[mask]
    q, r = model.s_exponents
    space_q = np.array(
        [lp_norm(f, r, grid=f.grid if isinstance(f, RealField) else fields[0].grid) ** q
         for f, keep in zip(fields, mask) if keep]
    )
    intervals = []
    start = 0
    acc = 0.0
    target = eta**q
    for i in range(1, len(times)):
        inc = 0.5 * (space_q[i - 1] + space_q[i]) * (times[i] - times[i - 1])
        if acc + inc > target and i - 1 > start:
            intervals.append((float(times[start]), float(times[i - 1])))
            start = i - 1
            acc = 0.0
        acc += inc
    intervals.append((float(times[start]), float(times[-1])))
    return intervals
