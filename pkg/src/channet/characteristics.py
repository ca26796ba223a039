"""Characteristic structure of the linearized flow around a steady profile.

Around a subcritical steady state (H*, V*) the deviation fields (h, v) decouple
into characteristic variables

    y1 = v + h sqrt(g / H*),      y2 = v - h sqrt(g / H*),

travelling with speeds lambda1 = V* + sqrt(g H*) (downstream) and
-lambda2 = V* - sqrt(g H*) (upstream). Friction couples the two families
through four non-negative zero-order coefficients gamma1, delta1, gamma2,
delta2. Two algebraically equivalent expressions exist for them: one written
with the friction term g C V*^2 / H*^p, one with the steady depth gradient.
Both are computed and cross-checked; the friction form is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormMismatch, ReflectionPole
from .steady import SteadyProfile, steady_rhs

DUAL_FORM_TOL = 1e-10


def eigenvalues(depth, velocity, gravity=9.81):
    """Characteristic speeds (lambda1, lambda2), both positive when subcritical."""
    c = np.sqrt(gravity * np.asarray(depth, dtype=float))
    v = np.asarray(velocity, dtype=float)
    lam1 = v + c
    lam2 = c - v
    if lam1.ndim == 0:
        return float(lam1), float(lam2)
    return lam1, lam2


def _bracket_terms(depth, velocity, friction_exponent, gravity):
    c = np.sqrt(gravity * depth)
    lam1 = velocity + c
    lam2 = c - velocity
    inv_v = 1.0 / velocity
    half_p = friction_exponent / (2.0 * c)
    b_g1 = -3.0 / (4.0 * lam1) + inv_v - half_p
    b_d1 = -1.0 / (4.0 * lam1) + inv_v + half_p
    b_g2 = 1.0 / (4.0 * lam2) + inv_v - half_p
    b_d2 = 3.0 / (4.0 * lam2) + inv_v + half_p
    return b_g1, b_d1, b_g2, b_d2


def coupling_coefficients(
    depth,
    flux,
    friction,
    friction_exponent=1.0,
    gravity=9.81,
    check=True,
    tol=DUAL_FORM_TOL,
):
    """Zero-order coupling coefficients (gamma1, delta1, gamma2, delta2).

    Evaluated from the friction form; when ``check`` is set the steady-gradient
    form (with the depth slope taken analytically from the profile equation)
    is evaluated as well and FormMismatch is raised if any coefficient
    disagrees beyond ``tol`` relative.
    """
    H = np.atleast_1d(np.asarray(depth, dtype=float))
    scalar = np.ndim(depth) == 0
    if flux == 0.0 or friction == 0.0:
        if scalar:
            return (0.0, 0.0, 0.0, 0.0)
        zeros = np.zeros_like(H)
        return (zeros, zeros.copy(), zeros.copy(), zeros.copy())

    V = flux / H
    b = _bracket_terms(H, V, friction_exponent, gravity)
    K = gravity * friction * V**2 / H**friction_exponent
    friction_form = tuple(K * bi for bi in b)

    if check:
        H_x = steady_rhs(H, flux, friction, friction_exponent, gravity)
        c = np.sqrt(gravity * H)
        P = -(H_x / H) * (V + c) * (c - V)
        gradient_form = tuple(P * bi for bi in b)
        for name, a_f, a_g in zip(
            ("gamma1", "delta1", "gamma2", "delta2"), friction_form, gradient_form
        ):
            scale = np.maximum(np.abs(a_f), np.abs(a_g))
            gap = np.abs(a_f - a_g)
            bad = gap > tol * np.maximum(scale, 1e-300)
            if np.any(bad & (scale > 0.0)):
                worst = float(np.max(gap / np.maximum(scale, 1e-300)))
                raise FormMismatch(
                    f"{name}: friction and gradient forms disagree "
                    f"(worst relative gap {worst:.3e})"
                )

    if scalar:
        return tuple(float(a[0]) for a in friction_form)
    return friction_form


def riemann_forward(h, v, depth_star, gravity=9.81):
    """Deviation fields to characteristic variables (y1, y2)."""
    s = np.sqrt(gravity / np.asarray(depth_star, dtype=float))
    return v + h * s, v - h * s


def riemann_inverse(y1, y2, depth_star, gravity=9.81):
    """Characteristic variables back to deviation fields (h, v)."""
    s = np.sqrt(gravity / np.asarray(depth_star, dtype=float))
    return (y1 - y2) / (2.0 * s), 0.5 * (y1 + y2)


def nonlinear_change(H, V, depth_star, velocity_star, gravity=9.81):
    """Exact characteristic coordinates of the full flow state.

    y1/y2 agree with the linear transform to second order in the deviation and
    vanish exactly on the steady state.
    """
    d = 2.0 * (np.sqrt(gravity * np.asarray(H, dtype=float)) - np.sqrt(gravity * np.asarray(depth_star, dtype=float)))
    w = np.asarray(V, dtype=float) - velocity_star
    return w + d, w - d


def nonlinear_inverse(y1, y2, depth_star, velocity_star, gravity=9.81):
    """Invert nonlinear_change back to (H, V)."""
    s = np.sqrt(gravity * np.asarray(depth_star, dtype=float)) + (np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)) / 4.0
    H = s**2 / gravity
    V = np.asarray(velocity_star, dtype=float) + (np.asarray(y1, dtype=float) + np.asarray(y2, dtype=float)) / 2.0
    return H, V


def reflection_coefficient(gain, outlet_depth, gravity=9.81):
    """Ratio c of outgoing to incoming characteristic at a feedback outlet.

    The affine outlet law v = k h ties the characteristic traces together as
    y1 = c y2 with c = (1 + k sqrt(H/g)) / (k sqrt(H/g) - 1). The ratio has a
    pole at k = sqrt(g/H), where the law pins the incoming characteristic to
    zero; that gain is rejected.
    """
    r = gain * math.sqrt(outlet_depth / gravity)
    den = r - 1.0
    if abs(den) <= 1e-12 * max(1.0, abs(r)):
        raise ReflectionPole(
            f"gain {gain:g} sits at the reflection pole sqrt(g/H) for depth {outlet_depth:g}"
        )
    return (1.0 + r) / den


@dataclass(frozen=True, eq=False)
class CharCoeffs:
    """Characteristic speeds and couplings sampled on a profile's fine grid."""

    profile: SteadyProfile
    lambda1: np.ndarray
    lambda2: np.ndarray
    gamma1: np.ndarray
    delta1: np.ndarray
    gamma2: np.ndarray
    delta2: np.ndarray

    @classmethod
    def from_profile(cls, profile: SteadyProfile, check=True) -> "CharCoeffs":
        H = profile.H_fine
        lam1, lam2 = eigenvalues(H, profile.velocity_of(H), profile.gravity)
        g1, d1, g2, d2 = coupling_coefficients(
            H,
            profile.flux,
            profile.spec.friction,
            profile.spec.friction_exponent,
            profile.gravity,
            check=check,
        )
        return cls(
            profile=profile,
            lambda1=lam1,
            lambda2=lam2,
            gamma1=np.broadcast_to(g1, H.shape).copy() if np.ndim(g1) == 0 else g1,
            delta1=np.broadcast_to(d1, H.shape).copy() if np.ndim(d1) == 0 else d1,
            gamma2=np.broadcast_to(g2, H.shape).copy() if np.ndim(g2) == 0 else g2,
            delta2=np.broadcast_to(d2, H.shape).copy() if np.ndim(d2) == 0 else d2,
        )

    def speeds_at(self, x):
        H = self.profile.depth(x)
        return eigenvalues(H, self.profile.velocity_of(H), self.profile.gravity)

    def couplings_at(self, x):
        return coupling_coefficients(
            self.profile.depth(x),
            self.profile.flux,
            self.profile.spec.friction,
            self.profile.spec.friction_exponent,
            self.profile.gravity,
            check=False,
        )
