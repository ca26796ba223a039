"""Admissible boundary feedback gains at terminal nodes.

A terminal channel is closed by the affine law V = V*(L) + k (H - H*(L)).
Exponential stability of the network holds for every gain k outside one
explicit closed interval

    [a, b] = [ -sqrt(g/H*(L)) (lam+ + m_L lam-) / (lam+ - m_L lam-),
               -sqrt(g/H*(L)) (lam+ - m_L lam-) / (lam+ + m_L lam-) ],

built from the outlet characteristic speeds lam+- and the closed-form weight
ratio m_L = m(L). Both endpoints are negative, their product is g/H*(L), and
as friction vanishes the interval degenerates to the half-line (-inf, 0].
The interval criterion is equivalent to c^2 > eta_bar(L)^2 / phi(L)^2 for the
boundary reflection coefficient c, and that equivalence is re-asserted on
every admissibility query as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .characteristics import reflection_coefficient
from .errors import DegenerateFlux, ReflectionPole
from .steady import SteadyProfile
from .weights import eta_bar_closed, m_profile, phi_profiles

HALF_LINE_TOL = 1e-12
CROSS_CHECK_DEADBAND = 1e-9


@dataclass(frozen=True)
class GainRecord:
    """Admissibility verdict for one terminal gain."""

    channel: int
    k: float
    lambda_plus: float
    lambda_minus: float
    m_L: float
    forbidden: tuple[float, float]
    half_line: bool
    c: float
    admissible: bool
    pole: bool
    eta_bar_L: float
    phi_L: float

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "k": self.k,
            "lambda_plus": self.lambda_plus,
            "lambda_minus": self.lambda_minus,
            "m_L": None if math.isnan(self.m_L) else self.m_L,
            "a": None if math.isinf(self.forbidden[0]) else self.forbidden[0],
            "b": self.forbidden[1],
            "half_line": self.half_line,
            "k_pole": self.pole,
            "c": None if math.isnan(self.c) else self.c,
            "admissible": self.admissible,
            "eta_bar_L": self.eta_bar_L,
            "phi_L": self.phi_L,
        }


def boundary_constants(profile: SteadyProfile) -> tuple[float, float, float]:
    """Outlet characteristic speeds and weight ratio (lam+, lam-, m_L)."""
    if profile.flux == 0.0:
        raise DegenerateFlux(
            f"channel {profile.channel}: boundary constants need positive flux"
        )
    HL = profile.outlet_depth
    VL = profile.outlet_velocity
    cL = math.sqrt(profile.gravity * HL)
    m_L = float(m_profile(profile, profile.length))
    return cL + VL, cL - VL, m_L


def forbidden_interval(
    lambda_plus: float,
    lambda_minus: float,
    m_L: float,
    outlet_depth: float,
    gravity: float = 9.81,
) -> tuple[float, float, bool]:
    """Closed forbidden gain interval (a, b, half_line).

    When lam+ - m_L lam- vanishes to within 1e-12 relative, a runs off to
    -infinity and the forbidden set is the half-line (-inf, b].
    """
    s = math.sqrt(gravity / outlet_depth)
    den = lambda_plus - m_L * lambda_minus
    num = lambda_plus + m_L * lambda_minus
    if abs(den) <= HALF_LINE_TOL * lambda_plus:
        # degenerate family: the interval closes at exactly zero gain
        return -math.inf, 0.0, True
    b = -s * den / num + 0.0
    a = -s * num / den
    if a > b:
        a, b = b, a
    return a, b, False


def is_admissible(
    profile: SteadyProfile,
    gain: float,
    eta_bar_L: float | None = None,
    phi_L: float | None = None,
) -> GainRecord:
    """Full admissibility record for one terminal gain.

    The verdict is the interval criterion (gain strictly outside the closed
    forbidden interval; for zero-flux terminals the forbidden set is
    (-inf, 0]). Unless the gain sits at the reflection pole, the verdict is
    re-derived from c^2 > eta_bar(L)^2 / phi(L)^2 and any disagreement beyond
    floating-point dead-band raises.

    eta_bar_L and phi_L may be supplied to avoid recomputing them; both are
    evaluated from the closed forms otherwise.
    """
    k = float(gain)
    HL = profile.outlet_depth
    g = profile.gravity
    if profile.flux == 0.0:
        cL = math.sqrt(g * HL)
        lam_p = lam_m = cL
        m_L = math.nan
        a, b, half = -math.inf, 0.0, True
        eta_bar_L = 1.0
        phi_L = 1.0
    else:
        lam_p, lam_m, m_L = boundary_constants(profile)
        a, b, half = forbidden_interval(lam_p, lam_m, m_L, HL, g)
        if eta_bar_L is None or phi_L is None:
            phi = phi_profiles(profile)
            eta_bar_L = float(eta_bar_closed(phi, profile.length))
            phi_L = float(phi.phi(profile.length))

    admissible = k > b if half else not (a <= k <= b)
    try:
        c = reflection_coefficient(k, HL, g)
        pole = False
    except ReflectionPole:
        c = math.nan
        pole = True
        admissible = False

    if not pole:
        ratio = (eta_bar_L / phi_L) ** 2
        gap = c * c - ratio
        if abs(gap) > CROSS_CHECK_DEADBAND * (1.0 + ratio) and (gap > 0.0) != admissible:
            raise AssertionError(
                f"channel {profile.channel}: interval verdict and reflection "
                f"criterion disagree for gain {k:g} (c^2 - ratio = {gap:.3e})"
            )

    return GainRecord(
        channel=profile.channel,
        k=k,
        lambda_plus=lam_p,
        lambda_minus=lam_m,
        m_L=m_L,
        forbidden=(a, b),
        half_line=half,
        c=c,
        admissible=admissible,
        pole=pole,
        eta_bar_L=eta_bar_L,
        phi_L=phi_L,
    )


def inlet_reflection(gain: float, inlet_depth: float, gravity: float = 9.81) -> float:
    """Inlet reflection coefficient c0 = (k0 H0 + sqrt(g H0)) / (k0 H0 - sqrt(g H0)).

    |c0| <= 1 exactly when k0 <= 0.
    """
    num = gain * inlet_depth + math.sqrt(gravity * inlet_depth)
    den = gain * inlet_depth - math.sqrt(gravity * inlet_depth)
    if abs(den) <= 1e-300:
        raise ReflectionPole(f"inlet gain {gain:g} pins the outgoing characteristic")
    return num / den


def single_channel_conditions(profile: SteadyProfile, k0: float, kL: float) -> bool:
    """Verdict for a single channel controlled at both ends.

    True iff the inlet gain lies in (-inf, 0] and the outlet gain avoids the
    closed forbidden interval. The inlet condition is cross-checked against
    |c0| <= 1 for the inlet reflection coefficient.
    """
    inlet_ok = k0 <= 0.0
    try:
        c0 = inlet_reflection(k0, profile.inlet_depth, profile.gravity)
    except ReflectionPole:
        c0 = None
    if c0 is not None:
        gap = c0 * c0 - 1.0
        if abs(gap) > CROSS_CHECK_DEADBAND and (gap <= 0.0) != inlet_ok:
            raise AssertionError(
                f"inlet verdict and reflection criterion disagree for k0 = {k0:g}"
            )
    return inlet_ok and is_admissible(profile, kL).admissible
