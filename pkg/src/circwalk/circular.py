"""Circular statistics kernel.

Bessel functions, the consensus resultant vector, von Mises densities and
sampling, and resultant-based summaries of angle samples. All angles are in
radians; functions accept any real angle and normalize to [-pi, pi) where a
canonical value is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

LOG_2PI = math.log(2.0 * math.pi)
TWO_PI = 2.0 * math.pi


def wrap(angle):
    """Wrap angles to [-pi, pi)."""
    return np.mod(np.asarray(angle, dtype=float) + math.pi, TWO_PI) - math.pi


def _check_nonnegative(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("Bessel argument must be nonnegative")
    return x


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero.

    Overflows to ``inf`` beyond x ~ 713; use :func:`log_bessel_i0` for
    concentrations of that size.
    """
    x = _check_nonnegative(x)
    return _scalar_or_array(x, special.i0(x))


def log_bessel_i0(x):
    """log I_0(x), finite for any representable nonnegative x."""
    x = _check_nonnegative(x)
    return _scalar_or_array(x, np.log(special.i0e(x)) + x)


def bessel_ratio_a(x):
    """A(x) = I_1(x) / I_0(x), the mean resultant length of VM(., x)."""
    x = _check_nonnegative(x)
    return _scalar_or_array(x, special.i1e(x) / special.i0e(x))


def _ratio_over_x(ell):
    """A(ell) / ell with its limit 1/2 at ell = 0."""
    ell = np.asarray(ell, dtype=float)
    small = ell < 1e-4
    safe = np.where(small, 1.0, ell)
    out = special.i1e(safe) / special.i0e(safe) / safe
    return np.where(small, 0.5 - ell * ell / 16.0, out)


@dataclass(frozen=True)
class ConsensusVector:
    """Resultant of the persistence and target unit vectors."""

    vx: float
    vy: float

    def length(self) -> float:
        return math.hypot(self.vx, self.vy)

    def direction(self) -> float:
        if self.length() == 0.0:
            raise ValueError("direction of a zero-length consensus vector is undefined")
        return float(wrap(math.atan2(self.vy, self.vx)))


@dataclass(frozen=True)
class CircularSummary:
    mean_direction: float
    resultant_length: float
    n: int


def consensus_vector(prev_direction, kappa, target_angles=(), target_weights=()):
    """Combine the previous heading and the target bearings into one vector.

    ``kappa[0]`` weights the unit vector of ``prev_direction``; ``kappa[i]``
    weights ``target_weights[i-1]`` times the unit vector of
    ``target_angles[i-1]``.
    """
    kappa = np.asarray(kappa, dtype=float).ravel()
    x = np.asarray(target_angles, dtype=float).ravel()
    z = np.asarray(target_weights, dtype=float).ravel()
    if x.shape != z.shape or kappa.size != x.size + 1:
        raise ValueError(
            f"length mismatch: kappa has {kappa.size} entries, "
            f"{x.size} target angles, {z.size} target weights"
        )
    vx = kappa[0] * math.cos(prev_direction) + np.sum(kappa[1:] * z * np.cos(x))
    vy = kappa[0] * math.sin(prev_direction) + np.sum(kappa[1:] * z * np.sin(x))
    return ConsensusVector(float(vx), float(vy))


def von_mises_log_density(y, v: ConsensusVector):
    """Log density of the consensus von Mises law at direction ``y``.

    Written in canonical form ``v . (cos y, sin y) - log(2 pi I0(|v|))`` so a
    zero-length vector gives the uniform density without needing a mean.
    """
    y = np.asarray(y, dtype=float)
    out = v.vx * np.cos(y) + v.vy * np.sin(y) - LOG_2PI - log_bessel_i0(v.length())
    return _scalar_or_array(y, out)


def sample_von_mises(mu, ell, rng: np.random.Generator, size=None):
    """Draw from VM(mu, ell) with the Best-Fisher rejection sampler.

    Returns angles wrapped to [-pi, pi). ``ell == 0`` gives uniform draws.
    """
    if ell < 0:
        raise ValueError("concentration must be nonnegative")
    n = 1 if size is None else int(np.prod(size))
    if ell < 1e-8:
        out = rng.uniform(-math.pi, math.pi, n)
    else:
        tau = 1.0 + math.sqrt(1.0 + 4.0 * ell * ell)
        rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * ell)
        r = (1.0 + rho * rho) / (2.0 * rho)
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(2 * (n - filled), 8)
            u1, u2, u3 = rng.random(m), rng.random(m), rng.random(m)
            zz = np.cos(math.pi * u1)
            f = (1.0 + r * zz) / (r + zz)
            c = ell * (r - f)
            with np.errstate(divide="ignore"):
                ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
            theta = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
            take = min(theta.size, n - filled)
            out[filled:filled + take] = theta[:take]
            filled += take
        out = wrap(out + mu)
    if size is None:
        return float(out[0])
    return out.reshape(size)


def circular_summary(angles) -> CircularSummary:
    """Mean direction and mean resultant length of a nonempty sample."""
    angles = np.asarray(angles, dtype=float).ravel()
    if angles.size == 0:
        raise ValueError("circular_summary needs at least one angle")
    s, c = np.sin(angles).sum(), np.cos(angles).sum()
    rbar = min(math.hypot(s, c) / angles.size, 1.0)
    return CircularSummary(float(wrap(math.atan2(s, c))), rbar, int(angles.size))
