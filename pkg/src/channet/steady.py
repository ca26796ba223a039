"""Steady subcritical profiles along channels and through junctions.

For a prismatic channel of unit width carrying constant flux Q, the steady
depth profile H*(x) obeys

    dH*/dx = - g C V*^2 / ( H*^(p-1) (g H* - V*^2) ),     V* = Q / H*,

with friction coefficient C >= 0 and friction exponent p >= 0 (p = 1 is the
Chezy law, p = 4/3 Manning-Strickler). With C > 0 and Q > 0 the depth strictly
decreases and the velocity strictly increases downstream, and the profile
ceases to exist at a finite abscissa where the flow reaches the critical
depth (Q / sqrt(g))^(2/3). Profiles are integrated with adaptive
Runge-Kutta stepping and certified subcritical by an event on the margin
g H - V^2; the event location is a rigorous lower bound for the blow-up point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    NegativeFlux,
    SteadyStateBlowup,
    SupercriticalStart,
    SupercriticalState,
)
from .topology import ChannelSpec, NetworkTopology, traversal_order, validate_topology

MARGIN_TOL = 1e-6
FINE_REFINEMENT = 4
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14


def critical_depth(flux: float, gravity: float = 9.81) -> float:
    """Depth at which the flow with flux Q becomes critical: g H^3 = Q^2."""
    if flux < 0.0:
        raise NegativeFlux(f"flux must be >= 0, got {flux!r}")
    return (flux / math.sqrt(gravity)) ** (2.0 / 3.0)


def steady_rhs(depth, flux, friction=0.0, friction_exponent=1.0, gravity=9.81):
    """Right-hand side dH*/dx of the steady depth equation.

    Accepts scalar or array depth. Raises SupercriticalState if any depth is
    at or below critical (the subcritical profile equation is not defined
    there).
    """
    H = np.asarray(depth, dtype=float)
    if np.any(H <= 0.0):
        raise SupercriticalState("depth must be positive")
    V2 = np.zeros_like(H) if flux == 0.0 else (flux / H) ** 2
    margin = gravity * H - V2
    if np.any(margin <= 0.0):
        raise SupercriticalState(
            "flow is critical or supercritical (g H - V^2 <= 0)"
        )
    rhs = -gravity * friction * V2 / (H ** (friction_exponent - 1.0) * margin)
    return float(rhs) if rhs.ndim == 0 else rhs


class _ConstantDepth:
    """Depth evaluator for frictionless or zero-flux channels."""

    def __init__(self, value: float):
        self.value = value

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.value)
        return float(out) if out.ndim == 0 else out


class _DenseDepth:
    """Clamped evaluator over the dense ODE solution."""

    def __init__(self, interpolant, x_end: float):
        self.interpolant = interpolant
        self.x_end = x_end

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        clipped = np.clip(x, 0.0, self.x_end)
        out = self.interpolant(clipped)[0]
        return float(out) if np.ndim(x) == 0 else np.asarray(out, dtype=float)


@dataclass(frozen=True, eq=False)
class SteadyProfile:
    """Steady state of one channel, sampled on the simulation grids.

    Depth/velocity samples are provided at cell centers, cell interfaces and
    on a finer uniform grid used for coefficient quadratures and positivity
    scans. ``depth`` evaluates the profile anywhere in [0, L] from the dense
    integrator output; velocities are always flux / depth so the flux identity
    holds to round-off.
    """

    spec: ChannelSpec
    flux: float
    inlet_depth: float
    critical_depth: float
    blowup_bound: float
    margin_tol: float
    x_faces: np.ndarray
    x_centers: np.ndarray
    x_fine: np.ndarray
    H_faces: np.ndarray
    H_centers: np.ndarray
    H_fine: np.ndarray
    depth: Callable

    @property
    def channel(self) -> int:
        return self.spec.id

    @property
    def length(self) -> float:
        return self.spec.length

    @property
    def gravity(self) -> float:
        return self.spec.gravity

    @property
    def V_faces(self) -> np.ndarray:
        return self.velocity_of(self.H_faces)

    @property
    def V_centers(self) -> np.ndarray:
        return self.velocity_of(self.H_centers)

    @property
    def V_fine(self) -> np.ndarray:
        return self.velocity_of(self.H_fine)

    @property
    def outlet_depth(self) -> float:
        return float(self.H_faces[-1])

    @property
    def outlet_velocity(self) -> float:
        return self.flux / self.outlet_depth if self.flux != 0.0 else 0.0

    @property
    def depth_ratio(self) -> float:
        """d = H*(L) / H*(0)."""
        return self.outlet_depth / self.inlet_depth

    def velocity_of(self, H):
        if self.flux == 0.0:
            out = np.zeros_like(np.asarray(H, dtype=float))
            return float(out) if out.ndim == 0 else out
        return self.flux / H

    def velocity(self, x):
        return self.velocity_of(self.depth(x))

    def depth_slope(self, x):
        """Analytic dH*/dx evaluated through the profile equation."""
        return steady_rhs(
            self.depth(x),
            self.flux,
            self.spec.friction,
            self.spec.friction_exponent,
            self.gravity,
        )

    def velocity_slope(self, x):
        """Analytic dV*/dx = -(V*/H*) dH*/dx."""
        H = self.depth(x)
        return -self.velocity_of(H) / H * self.depth_slope(x)

    def subcritical_margin(self, x):
        H = self.depth(x)
        return self.gravity * H - self.velocity_of(H) ** 2


def integrate_channel_steady(
    spec: ChannelSpec,
    inlet_depth: float,
    flux: float,
    margin_tol: float = MARGIN_TOL,
) -> SteadyProfile:
    """Integrate the steady profile over [0, L] and certify subcriticality.

    Raises SupercriticalStart if the inlet margin g H - V^2 is already within
    margin_tol * g * H0 of zero, and SteadyStateBlowup if the margin event
    fires at or before the channel end. The returned blow-up bound is the
    event abscissa (+inf for frictionless or zero-flux channels).
    """
    if flux < 0.0:
        raise NegativeFlux(f"channel {spec.id}: flux must be >= 0, got {flux!r}")
    g = spec.gravity
    H0 = float(inlet_depth)
    if H0 <= 0.0:
        raise SupercriticalStart(f"channel {spec.id}: inlet depth must be positive")
    Hc = critical_depth(flux, g)
    threshold = margin_tol * g * H0
    inlet_margin = g * H0 - (0.0 if flux == 0.0 else (flux / H0) ** 2)
    if inlet_margin <= threshold:
        raise SupercriticalStart(
            f"channel {spec.id}: inlet margin {inlet_margin:.3e} is within "
            f"{margin_tol:g} * g * H0 of critical"
        )

    if flux == 0.0 or spec.friction == 0.0:
        depth_fn: Callable = _ConstantDepth(H0)
        blowup = math.inf
    else:
        p = spec.friction_exponent
        # H decreases at least at rate C Q^2 / H0^(p+2), so the critical depth
        # is reached no later than this abscissa; the margin event must fire
        # strictly before it.
        x_upper = (H0 - Hc) * H0 ** (p + 2.0) / (spec.friction * flux**2)
        x_upper = 1.05 * x_upper + spec.length
        H_floor = 0.5 * Hc
        margin_floor = 0.25 * threshold

        def rhs(x, y):
            # Guarded for trial evaluations beyond the terminal event; the
            # accepted solution never enters the guarded region.
            H = max(y[0], H_floor)
            margin = max(g * H - (flux / H) ** 2, margin_floor)
            return (-g * spec.friction * (flux / H) ** 2 / (H ** (p - 1.0) * margin),)

        def margin_event(x, y):
            H = max(y[0], 1e-12 * H0)
            return g * H - (flux / H) ** 2 - threshold

        margin_event.terminal = True
        margin_event.direction = -1

        sol = solve_ivp(
            rhs,
            (0.0, spec.length),
            (H0,),
            method="RK45",
            dense_output=True,
            rtol=ODE_RTOL,
            atol=ODE_ATOL,
            events=margin_event,
        )
        if sol.t_events[0].size:
            raise SteadyStateBlowup(spec.id, x_reached=float(sol.t_events[0][0]))
        if not sol.success:
            # Step-size underflow before the event resolves: the profile is
            # collapsing onto the critical depth inside the channel.
            if sol.t[-1] < spec.length:
                raise SteadyStateBlowup(spec.id, x_reached=float(sol.t[-1]))
            raise SupercriticalState(f"channel {spec.id}: steady integration failed: {sol.message}")
        depth_fn = _DenseDepth(sol.sol, spec.length)
        # Locate the blow-up abscissa by continuing past the channel end at a
        # tolerance loose enough to step up to the near-critical region even
        # when it lies many channel lengths downstream.
        tail = solve_ivp(
            rhs,
            (spec.length, x_upper),
            (depth_fn(spec.length),),
            method="RK45",
            rtol=1e-8,
            atol=1e-10,
            events=margin_event,
        )
        blowup = float(tail.t_events[0][0]) if tail.t_events[0].size else float(tail.t[-1])

    N = spec.cells
    x_faces = np.linspace(0.0, spec.length, N + 1)
    x_centers = 0.5 * (x_faces[:-1] + x_faces[1:])
    x_fine = np.linspace(0.0, spec.length, FINE_REFINEMENT * N + 1)
    return SteadyProfile(
        spec=spec,
        flux=float(flux),
        inlet_depth=H0,
        critical_depth=Hc,
        blowup_bound=blowup,
        margin_tol=margin_tol,
        x_faces=x_faces,
        x_centers=x_centers,
        x_fine=x_fine,
        H_faces=np.asarray(depth_fn(x_faces), dtype=float),
        H_centers=np.asarray(depth_fn(x_centers), dtype=float),
        H_fine=np.asarray(depth_fn(x_fine), dtype=float),
        depth=depth_fn,
    )


def solve_network_steady(
    topo: NetworkTopology,
    root_depth: float,
    root_flux: float,
    margin_tol: float = MARGIN_TOL,
) -> dict[int, SteadyProfile]:
    """Propagate the steady state root-first through the tree.

    At a junction the water depth is continuous (every outgoing channel starts
    at the incoming channel's end depth) and the flux splits according to the
    prescribed fractions.
    """
    validate_topology(topo)
    if root_flux <= 0.0:
        raise NegativeFlux(f"root flux must be positive, got {root_flux!r}")
    profiles: dict[int, SteadyProfile] = {}
    for i in traversal_order(topo):
        spec = topo.channels[i]
        if i == topo.root_channel:
            H0, Q = root_depth, root_flux
        else:
            parent = topo.parent_of(i)
            upstream = profiles[parent]
            H0 = upstream.outlet_depth
            Q = topo.split_of(parent, i) * upstream.flux
        profiles[i] = integrate_channel_steady(spec, H0, Q, margin_tol)
    return profiles


@dataclass(frozen=True)
class FeedbackLaw:
    """Affine outlet control V = V*(L) + k (H - H*(L))."""

    gain: float
    depth_ref: float
    velocity_ref: float

    def __call__(self, depth):
        out = self.velocity_ref + self.gain * (np.asarray(depth, dtype=float) - self.depth_ref)
        return float(out) if out.ndim == 0 else out


def feedback_law(profile: SteadyProfile, gain: float) -> FeedbackLaw:
    """Terminal feedback law anchored at the channel's steady outlet state."""
    return FeedbackLaw(
        gain=float(gain),
        depth_ref=profile.outlet_depth,
        velocity_ref=profile.outlet_velocity,
    )
