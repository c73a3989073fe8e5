"""Numerical evolution of the three-level optical system and of classical
rate-equation models.

The three-level system is the ground state |g> and the orbital excited
branches |x>, |y> in the rotating frame of a resonant (or detuned) optical
drive on g-x. Dissipation enters through Lindblad jump operators:

* radiative decay     |g><x| at gamma_rad_x, |g><y| at gamma_rad_y
* orbital mixing      |y><x| at gamma_mix_xy, |x><y| at gamma_mix_yx
* pure dephasing      sqrt(gamma_t2/2) (|x><x| - |g><g|), which damps the
  g-x coherence at gamma_t2 on top of the population contribution
* crossing loss       |dark><x| at gamma_isc_x; in that mode the third
  level is a non-radiative sink and mixing must be zero

Both evolvers use a classical fixed-step 4th-order Runge-Kutta scheme.
For the time-independent linear generator M the RK4 update is exactly the
degree-4 Taylor propagator P(hM) = I + hM + (hM)^2/2 + (hM)^3/6 +
(hM)^4/24, which is applied stepwise. Requested sample times are hit
exactly by subdividing each inter-sample interval into steps no longer
than dt. An adaptive mode backed by scipy's embedded Runge-Kutta pair is
available for cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import AngularRate, TimeTrace, ValidationError, rate_value


class IntegrationError(ValidationError):
    """Raised when the integrator cannot take a valid step."""


_LABELS_DEFAULT = ("g", "x", "y")
_LABELS_SINK = ("g", "x", "dark")


def _as_rate(value, fitted=False):
    if isinstance(value, AngularRate):
        return value
    return AngularRate(float(value), fitted=fitted)


@dataclass(frozen=True)
class ThreeLevelModel:
    """Drive and dissipation rates of the g/x/y system (all in rad/ns).

    rabi is the on-resonance Rabi frequency of the g-x drive and detuning
    its (signed) detuning; both default to zero drive. When gamma_isc_x
    is nonzero the third level acts as a dark sink fed from |x> and
    gamma_rad_y, gamma_mix_xy, gamma_mix_yx must all be zero.
    """

    gamma_rad_x: AngularRate = AngularRate(0.0)
    gamma_rad_y: AngularRate = AngularRate(0.0)
    gamma_mix_xy: AngularRate = AngularRate(0.0)
    gamma_mix_yx: AngularRate = AngularRate(0.0)
    gamma_t2: AngularRate = AngularRate(0.0)
    gamma_isc_x: AngularRate = AngularRate(0.0)
    rabi: AngularRate = AngularRate(0.0)
    detuning: float = 0.0

    def __post_init__(self):
        for name in ("gamma_rad_x", "gamma_rad_y", "gamma_mix_xy",
                     "gamma_mix_yx", "gamma_t2", "gamma_isc_x", "rabi"):
            object.__setattr__(self, name, _as_rate(getattr(self, name)))
        object.__setattr__(self, "detuning", float(self.detuning))
        if not np.isfinite(self.detuning):
            raise ValidationError("detuning must be finite")
        if self.gamma_isc_x.value > 0.0:
            if (self.gamma_mix_xy.value != 0.0 or self.gamma_mix_yx.value != 0.0
                    or self.gamma_rad_y.value != 0.0):
                raise ValidationError(
                    "with crossing loss enabled the third level is a dark sink: "
                    "gamma_rad_y, gamma_mix_xy and gamma_mix_yx must be zero"
                )

    @property
    def labels(self):
        return _LABELS_SINK if self.gamma_isc_x.value > 0.0 else _LABELS_DEFAULT


@dataclass(frozen=True)
class DensityMatrix3:
    """A validated 3x3 density matrix in the (g, x, y) basis."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        if rho.shape != (3, 3):
            raise ValidationError("density matrix must be 3x3")
        if not np.all(np.isfinite(rho.real)) or not np.all(np.isfinite(rho.imag)):
            raise ValidationError("density matrix must be finite")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValidationError("density matrix must be hermitian")
        if abs(np.trace(rho).real - 1.0) > 1e-9:
            raise ValidationError("density matrix trace must be 1")
        diag = np.diag(rho).real
        if np.any(diag < -1e-9) or np.any(diag > 1.0 + 1e-9):
            raise ValidationError("populations must lie in [0, 1]")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def pure(cls, level):
        """Pure state in level index 0..2 or label 'g'/'x'/'y'."""
        if isinstance(level, str):
            try:
                level = {"g": 0, "x": 1, "y": 2, "dark": 2}[level]
            except KeyError:
                raise ValidationError(
                    f"unknown level label {level!r}") from None
        rho = np.zeros((3, 3), dtype=complex)
        rho[level, level] = 1.0
        return cls(rho)

    @classmethod
    def from_populations(cls, p_g, p_x, p_y):
        return cls(np.diag([p_g, p_x, p_y]).astype(complex))


@dataclass(frozen=True)
class EvolutionResult:
    """Populations per level and the g-x coherence magnitude over time."""

    times: np.ndarray
    populations: dict
    coherence: TimeTrace


def _validate_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValidationError("times must be a nonempty 1-d array")
    if not np.all(np.isfinite(times)):
        raise ValidationError("times must be finite")
    if times[0] < 0.0:
        raise ValidationError("times must start at or after 0")
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise ValidationError("times must be strictly increasing")
    return times


def _taylor_propagator(matrix, h):
    n = matrix.shape[0]
    eye = np.eye(n, dtype=matrix.dtype)
    hm = h * matrix
    # Horner form of I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24
    prop = eye + hm @ (eye + hm @ (eye + hm @ (eye + hm / 4.0) / 3.0) / 2.0)
    return prop


def _propagate_fixed(matrix, y0, times, dt):
    """Apply the RK4 propagator segment-by-segment through `times`."""
    if dt <= 0.0:
        raise ValidationError("dt must be > 0")
    out = np.empty((len(times), len(y0)), dtype=matrix.dtype)
    y = np.array(y0, dtype=matrix.dtype)
    t_prev = 0.0
    prev_h = None
    prop = None
    for i, t in enumerate(times):
        span = t - t_prev
        if span > 0.0:
            n_steps = max(1, int(np.ceil(span / dt - 1e-12)))
            h = span / n_steps
            if t_prev + h == t_prev:
                raise IntegrationError(
                    f"step size underflow at t = {t_prev} ns (step {h} ns)"
                )
            if prev_h is None or h != prev_h:
                prop = _taylor_propagator(matrix, h)
                prev_h = h
            for _ in range(n_steps):
                y = prop @ y
        out[i] = y
        t_prev = t
    return out


def _propagate_adaptive(matrix, y0, times, atol=1e-10):
    t_span = (0.0, float(times[-1]) if times[-1] > 0 else 0.0)
    if t_span[1] == 0.0:
        return np.tile(np.asarray(y0), (len(times), 1))
    sol = solve_ivp(
        lambda t, y: matrix @ y,
        t_span,
        np.asarray(y0),
        t_eval=times,
        method="RK45",
        rtol=1e-10,
        atol=atol,
    )
    if not sol.success:
        raise IntegrationError(f"adaptive integrator failed: {sol.message}")
    return sol.y.T


def _lindblad_superoperator(model):
    """Build the 9x9 generator acting on the row-stacked density matrix."""
    omega = model.rabi.value
    delta = model.detuning
    ham = np.zeros((3, 3), dtype=complex)
    ham[1, 1] = -delta
    ham[0, 1] = 0.5 * omega
    ham[1, 0] = 0.5 * omega

    jumps = []
    basis = np.zeros((3, 3), dtype=complex)

    def op(i, j):
        out = basis.copy()
        out[i, j] = 1.0
        return out

    if model.gamma_rad_x.value > 0:
        jumps.append(np.sqrt(model.gamma_rad_x.value) * op(0, 1))
    if model.gamma_rad_y.value > 0:
        jumps.append(np.sqrt(model.gamma_rad_y.value) * op(0, 2))
    if model.gamma_mix_xy.value > 0:
        jumps.append(np.sqrt(model.gamma_mix_xy.value) * op(2, 1))
    if model.gamma_mix_yx.value > 0:
        jumps.append(np.sqrt(model.gamma_mix_yx.value) * op(1, 2))
    if model.gamma_isc_x.value > 0:
        jumps.append(np.sqrt(model.gamma_isc_x.value) * op(2, 1))
    if model.gamma_t2.value > 0:
        deph = op(1, 1) - op(0, 0)
        jumps.append(np.sqrt(0.5 * model.gamma_t2.value) * deph)

    eye = np.eye(3, dtype=complex)
    # row-stacked vec: vec(A rho B) = (A kron B^T) vec(rho)
    gen = -1j * (np.kron(ham, eye) - np.kron(eye, ham.T))
    for jump in jumps:
        jj = jump.conj().T @ jump
        gen += np.kron(jump, jump.conj())
        gen -= 0.5 * (np.kron(jj, eye) + np.kron(eye, jj.T))
    return gen


def evolve_lindblad(model, rho0, times, dt=0.01, method="rk4"):
    """Evolve the three-level master equation and report populations.

    Parameters
    ----------
    model : ThreeLevelModel
    rho0 : DensityMatrix3 or 3x3 array
    times : array of sample times in ns, strictly increasing, >= 0
    dt : maximum integrator step in ns (fixed-step mode)
    method : "rk4" (fixed step) or "adaptive"

    Returns
    -------
    EvolutionResult with one population TimeTrace per level label and a
    TimeTrace of the g-x coherence magnitude.
    """
    times = _validate_times(times)
    if not isinstance(rho0, DensityMatrix3):
        rho0 = DensityMatrix3(rho0)
    gen = _lindblad_superoperator(model)
    y0 = rho0.matrix.reshape(9)
    if method == "rk4":
        states = _propagate_fixed(gen, y0, times, dt)
    elif method == "adaptive":
        states = _propagate_adaptive(gen, y0, times)
    else:
        raise ValidationError(f"unknown integration method {method!r}")
    rho_t = states.reshape(len(times), 3, 3)
    populations = {}
    for idx, label in enumerate(model.labels):
        pop = rho_t[:, idx, idx].real
        if np.min(pop) < -1e-9:
            raise IntegrationError("population went significantly negative")
        populations[label] = TimeTrace(times, np.clip(pop, 0.0, None))
    coherence = TimeTrace(times, np.abs(rho_t[:, 0, 1]))
    return EvolutionResult(times=times, populations=populations, coherence=coherence)


@dataclass(frozen=True)
class RateMatrixModel:
    """A classical rate-equation generator dp/dt = M p.

    Off-diagonal entries are transfer rates (>= 0); loss channels sit on
    the diagonal, so every column sums to <= 0.
    """

    matrix: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("rate matrix must be square")
        if not np.all(np.isfinite(m)):
            raise ValidationError("rate matrix must be finite")
        off = m - np.diag(np.diag(m))
        if np.any(off < -1e-12):
            raise ValidationError("off-diagonal transfer rates must be >= 0")
        col_sums = m.sum(axis=0)
        if np.any(col_sums > 1e-9):
            raise ValidationError("columns must sum to <= 0 (no probability gain)")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        labels = tuple(self.labels) if self.labels else tuple(
            f"s{i}" for i in range(m.shape[0])
        )
        if len(labels) != m.shape[0]:
            raise ValidationError("one label per level required")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.matrix.shape[0]


def build_a12_model(gamma_rad, gamma_mix, gamma_isc):
    """Two-branch model: shared radiative decay, symmetric mixing, and
    crossing loss from the first branch only."""
    gr = rate_value(gamma_rad)
    gm = rate_value(gamma_mix)
    gi = rate_value(gamma_isc)
    matrix = np.array([
        [-(gr + gi + gm), gm],
        [gm, -(gr + gm)],
    ])
    return RateMatrixModel(matrix, labels=("A1", "A2"))


def evolve_rates(model, p0, times, dt=0.01, method="rk4"):
    """Integrate dp/dt = M p and return one population TimeTrace per level."""
    times = _validate_times(times)
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (model.n,):
        raise ValidationError(f"p0 must have shape ({model.n},)")
    if not np.all(np.isfinite(p0)) or np.any(p0 < 0):
        raise ValidationError("initial populations must be finite and >= 0")
    if method == "rk4":
        pops = _propagate_fixed(model.matrix, p0, times, dt)
    elif method == "adaptive":
        pops = _propagate_adaptive(model.matrix, p0, times)
    else:
        raise ValidationError(f"unknown integration method {method!r}")
    out = {}
    for idx, label in enumerate(model.labels):
        values = pops[:, idx]
        if np.min(values) < -1e-9:
            raise IntegrationError("population went significantly negative")
        out[label] = TimeTrace(times, np.clip(values, 0.0, None))
    return out
