"""Closed-form solutions for the driven and undriven excited-state manifold.

All expressions describe a ground state |g> and the two orbital excited
branches |x>, |y> with radiative decay Gamma_rad, phonon-induced orbital
mixing Gamma_mix (x->y and y->x), pure orbital dephasing Gamma_t2, and
intersystem crossing into the dark singlet manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AngularRate, ValidationError, rate_value


@dataclass(frozen=True)
class EnvelopeParams:
    """Rates entering the strong-drive oscillation envelope of a g-x drive.

    gamma_rad_x, gamma_rad_y: radiative decay of the two branches.
    gamma_mix_xy: mixing out of the driven branch (x -> y).
    gamma_mix_yx: mixing back (y -> x).
    gamma_t2: pure orbital dephasing of the driven transition.
    """

    gamma_rad_x: AngularRate
    gamma_rad_y: AngularRate
    gamma_mix_xy: AngularRate
    gamma_mix_yx: AngularRate
    gamma_t2: AngularRate


def envelope_timescales(params):
    """Return (tau_rabi, tau_2, A, B) for the strong-drive envelope.

    tau_rabi is the decay time of the oscillating term, tau_2 the decay
    time of the transient offset, and A, B the transient and steady
    offset amplitudes (A + B = 1).
    """
    gr_x = rate_value(params.gamma_rad_x)
    gr_y = rate_value(params.gamma_rad_y)
    m_xy = rate_value(params.gamma_mix_xy)
    m_yx = rate_value(params.gamma_mix_yx)
    gt2 = rate_value(params.gamma_t2)

    inv_tau_rabi = 0.75 * gr_x + 0.5 * (m_xy + gt2)
    denom = 2.0 * gr_y + m_xy + 2.0 * m_yx
    if denom <= 0.0:
        raise ValidationError(
            "envelope offset amplitudes are undefined when "
            "2*gamma_rad_y + gamma_mix_xy + 2*gamma_mix_yx = 0"
        )
    inv_tau_2 = 0.5 * (2.0 * gr_y + m_xy + 2.0 * m_yx)
    amp_transient = -m_xy / denom
    amp_steady = 2.0 * (gr_y + m_xy + m_yx) / denom
    return 1.0 / inv_tau_rabi, 1.0 / inv_tau_2, amp_transient, amp_steady


def rabi_envelope(params, t):
    """Oscillation envelope g(t) = (exp(-t/tau_rabi) + A exp(-t/tau_2) + B)/2.

    Normalized so g(0) = 1; the fluorescence extrema of a strongly driven
    g-x transition follow this curve.
    """
    tau_rabi, tau_2, amp_a, amp_b = envelope_timescales(params)
    t = np.asarray(t, dtype=float)
    return 0.5 * (np.exp(-t / tau_rabi) + amp_a * np.exp(-t / tau_2) + amp_b)


def additional_decoherence(tau_rabi, gamma_rad):
    """Decoherence beyond radiative decay from a fitted envelope time.

    Gamma_add = Gamma_mix + Gamma_t2 = 2 (1/tau_rabi - 3/4 Gamma_rad).
    The result is a fitted quantity and may be negative within noise.
    """
    tau_rabi = float(tau_rabi)
    if tau_rabi <= 0.0:
        raise ValidationError("tau_rabi must be > 0")
    return AngularRate(2.0 * (1.0 / tau_rabi - 0.75 * rate_value(gamma_rad)), fitted=True)


def depolarization_populations(gamma_rad, gamma_mix, t):
    """Populations (rho_b, rho_d) after polarized excitation of one branch.

    rho_b is the initially populated (bright) branch, rho_d the other:
    rho_b = exp(-Gamma_rad t) (1 + exp(-2 Gamma_mix t)) / 2,
    rho_d = exp(-Gamma_rad t) (1 - exp(-2 Gamma_mix t)) / 2.
    Symmetric mixing at equal radiative rates is assumed.
    """
    gr = rate_value(gamma_rad)
    gm = rate_value(gamma_mix)
    t = np.asarray(t, dtype=float)
    decay = np.exp(-gr * t)
    swap = np.exp(-2.0 * gm * t)
    return 0.5 * decay * (1.0 + swap), 0.5 * decay * (1.0 - swap)


def observed_polarized_intensity(amplitude, epsilon, t0, gamma_rad, gamma_mix, t):
    """Observed (bright, dark) channel intensities with polarization leakage.

    A fraction epsilon of each channel's light is detected in the other
    channel; t0 shifts the time origin to the excitation pulse:
    I_bright = amplitude [(1-eps) rho_b(t-t0) + eps rho_d(t-t0)] and the
    dark channel with the roles swapped. Their sum is a pure radiative
    exponential regardless of mixing. The closed forms are evaluated as
    written even for t < t0; callers window or clamp the pre-pulse
    region themselves.
    """
    epsilon = float(epsilon)
    if not 0.0 <= epsilon <= 0.5:
        raise ValidationError("leakage fraction must lie in [0, 1/2]")
    amplitude = float(amplitude)
    if amplitude <= 0.0:
        raise ValidationError("amplitude must be > 0")
    tau = np.asarray(t, dtype=float) - float(t0)
    rho_b, rho_d = depolarization_populations(gamma_rad, gamma_mix, tau)
    bright = amplitude * ((1.0 - epsilon) * rho_b + epsilon * rho_d)
    dark = amplitude * ((1.0 - epsilon) * rho_d + epsilon * rho_b)
    return bright, dark


def isc_envelope_ex(tau_rabi, gamma_isc_x, t):
    """Strong-drive envelope with crossing loss from the driven branch.

    g(t) = (exp(-t/tau_rabi) + 1)/2 * exp(-Gamma_isc_x t / 2); the factor
    1/2 in the exponent reflects that the drive keeps half the population
    in the state subject to crossing.
    """
    tau_rabi = float(tau_rabi)
    if tau_rabi <= 0.0:
        raise ValidationError("tau_rabi must be > 0")
    gi = rate_value(gamma_isc_x)
    t = np.asarray(t, dtype=float)
    return 0.5 * (np.exp(-t / tau_rabi) + 1.0) * np.exp(-0.5 * gi * t)


def rabi_fit_model(t, amplitude, omega, phi, t0, tau_rabi, gamma_isc_x):
    """Fit form for a driven fluorescence trace.

    f(t) = amplitude [cos(omega t - phi) exp(-(t - t0)/tau_rabi) + 1]
           * exp(-gamma_isc_x t / 2)
    """
    t = np.asarray(t, dtype=float)
    osc = np.cos(omega * t - phi) * np.exp(-(t - t0) / tau_rabi)
    return amplitude * (osc + 1.0) * np.exp(-0.5 * gamma_isc_x * t)


def fluorescence_a12(gamma_rad, gamma_mix, gamma_isc, branch, t):
    """Fluorescence after populating one orbital branch, with crossing
    from only the first branch.

    I(t) = exp(-(Gamma_rad + Gamma_mix + Gamma_isc/2) t)
           [ (2 Gamma_mix -/+ Gamma_isc)/Gamma' sinh(Gamma' t / 2)
             + cosh(Gamma' t / 2) ],
    Gamma' = sqrt(Gamma_isc^2 + 4 Gamma_mix^2); the minus sign applies to
    the branch that crosses ("A1"), the plus sign to the other ("A2").

    Evaluated as the equivalent pair of exponentials
    w_slow exp(-(m - Gamma'/2) t) + w_fast exp(-(m + Gamma'/2) t) with
    m = Gamma_rad + Gamma_mix + Gamma_isc/2 and w = (1 +/- c)/2,
    c = (2 Gamma_mix -/+ Gamma_isc)/Gamma'. The naive sinh/cosh form
    cancels catastrophically at large Gamma' t; here the near-zero
    weight is instead computed from Gamma'^2 - (2 Gamma_mix -/+
    Gamma_isc)^2 = +/- 4 Gamma_mix Gamma_isc, so the single-exponential
    reductions at Gamma_mix = 0 or Gamma_isc = 0 are exact and the
    Gamma' -> 0 limit needs no series switch.
    """
    if branch not in ("A1", "A2"):
        raise ValidationError(f"branch must be 'A1' or 'A2', got {branch!r}")
    gr = rate_value(gamma_rad)
    gm = rate_value(gamma_mix)
    gi = rate_value(gamma_isc)
    t = np.asarray(t, dtype=float)
    gamma_prime = np.hypot(gi, 2.0 * gm)
    mid = gr + gm + 0.5 * gi
    if gamma_prime == 0.0:
        return np.exp(-mid * t)
    if branch == "A1":
        if 2.0 * gm >= gi:
            w_slow = (gamma_prime + 2.0 * gm - gi) / (2.0 * gamma_prime)
            w_fast = 2.0 * gm * gi / (gamma_prime * (gamma_prime + 2.0 * gm - gi))
        else:
            w_slow = 2.0 * gm * gi / (gamma_prime * (gamma_prime + gi - 2.0 * gm))
            w_fast = (gamma_prime + gi - 2.0 * gm) / (2.0 * gamma_prime)
    else:
        w_slow = (gamma_prime + 2.0 * gm + gi) / (2.0 * gamma_prime)
        w_fast = -2.0 * gm * gi / (gamma_prime * (gamma_prime + 2.0 * gm + gi))
    slow = np.exp(-(mid - 0.5 * gamma_prime) * t)
    fast = np.exp(-(mid + 0.5 * gamma_prime) * t)
    return w_slow * slow + w_fast * fast


def isc_rate_from_lifetime(tau, gamma_rad):
    """Crossing rate from a fitted fluorescence lifetime: 1/tau - Gamma_rad."""
    tau = float(tau)
    if tau <= 0.0:
        raise ValidationError("lifetime must be > 0")
    return AngularRate(1.0 / tau - rate_value(gamma_rad), fitted=True)
