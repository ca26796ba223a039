"""Lyapunov weight profiles and network stability certificates.

The linearized network is dissipative in a weighted characteristic norm

    V = sum_i int_0^L ( f1_i y1_i^2 + f2_i y2_i^2 ) dx,

with per-channel weights built from three ingredients:

* exponential factors phi1 = exp(int gamma1/lambda1), phi2 = exp(-int
  delta2/lambda2), phi = phi1/phi2, which absorb the zero-order coupling,
* a comparison function eta(x) solving the scalar Riccati inequality
  eta' = |delta1 phi / lambda1 + (gamma2 / (lambda2 phi)) eta^2| + epsilon,
  started strictly inside (0, phi) at the inlet, and
* per-channel scale factors alpha chosen so that the weighted norm is
  continuous across junctions.

With eta in hand the weights are f1 = alpha phi1^2 / (lambda1 eta) and
f2 = alpha phi2^2 eta / lambda2, and the boundary/junction terms of dV/dt are
controlled by the signs of Z = lambda1 f1 - lambda2 f2 and by small symmetric
matrices assembled from Z and W = lambda1 f1 + lambda2 f2. The epsilon = 0
comparison solution with unit inlet value has the closed form
eta_bar = m(x) eta0(x) with eta0 = (lambda2/lambda1) phi and m an explicit
rational function of the steady depth; an independent Riccati integration of
the same equation serves as the verification oracle for it.

All cumulative integrals are computed by adaptive Runge-Kutta integration of
their derivative alongside the steady depth (closed-form right-hand sides,
relative tolerance ~1e-12), so certificate accuracy does not depend on the
simulation grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .characteristics import CharCoeffs, eigenvalues, reflection_coefficient
from .errors import (
    DegenerateFlux,
    EpsilonTooLarge,
    MissingGain,
    RiccatiBlowup,
    WeightError,
    ZeroW,
)
from .steady import SteadyProfile
from .topology import NetworkTopology, traversal_order, validate_topology

ETA_BLOWUP = 1e12
INTEGRAL_RTOL = 1e-12
INTEGRAL_ATOL = 1e-14
ETA_RTOL = 1e-11
ETA_ATOL = 1e-13
ORACLE_TOL = 1e-11
POSITIVITY_REL_TOL = 1e-12
DEFAULT_EPSILON = 1e-3
MAX_HALVINGS = 20


def _closed_form_terms(profile: SteadyProfile):
    """Bundle the channel constants used by every augmented ODE."""
    spec = profile.spec
    return profile.flux, spec.friction, spec.friction_exponent, spec.gravity


def _speeds_couplings(H, flux, friction, p, g):
    """Scalar/array characteristic speeds and couplings as functions of depth."""
    c = math.sqrt(g * H) if np.ndim(H) == 0 else np.sqrt(g * H)
    V = flux / H
    lam1 = V + c
    lam2 = c - V
    K = g * friction * V * V / H**p
    half_p = p / (2.0 * c)
    inv_v = 1.0 / V
    g1 = K * (-3.0 / (4.0 * lam1) + inv_v - half_p)
    d1 = K * (-1.0 / (4.0 * lam1) + inv_v + half_p)
    g2 = K * (1.0 / (4.0 * lam2) + inv_v - half_p)
    d2 = K * (3.0 / (4.0 * lam2) + inv_v + half_p)
    return lam1, lam2, g1, d1, g2, d2


def _depth_rhs_guarded(H, flux, friction, p, g, H_floor, margin_floor):
    H = max(H, H_floor)
    V2 = (flux / H) ** 2
    margin = max(g * H - V2, margin_floor)
    return -g * friction * V2 / (H ** (p - 1.0) * margin)


def _guards(profile: SteadyProfile):
    g = profile.gravity
    H_floor = 0.5 * profile.critical_depth if profile.critical_depth > 0 else 1e-12
    margin_floor = 0.25 * profile.margin_tol * g * profile.inlet_depth
    return H_floor, margin_floor


class _ZeroCouplingIntegrals:
    """Frictionless or zero-flux channel: all coefficient integrals vanish."""

    def __init__(self, profile: SteadyProfile):
        self.profile = profile

    def state(self, x):
        x = np.asarray(x, dtype=float)
        H = self.profile.depth(x)
        zeros = np.zeros_like(np.asarray(H, dtype=float))
        return np.stack([np.broadcast_to(H, zeros.shape), zeros, zeros, zeros, zeros])


class _DenseIntegrals:
    def __init__(self, dense, x_end):
        self.dense = dense
        self.x_end = x_end

    def state(self, x):
        x = np.asarray(x, dtype=float)
        return self.dense(np.clip(x, 0.0, self.x_end))


@dataclass(frozen=True, eq=False)
class PhiProfiles:
    """Cumulative coefficient integrals of one channel.

    The underlying state is (H, I1, I2, I3, I4) with

        I1 = int gamma1/lambda1,    I2 = int delta2/lambda2,
        I3 = int 2 gamma2/lambda1,  I4 = int exp(I3) gamma2/(lambda2 phi),

    so phi1 = exp(I1), phi2 = exp(-I2), phi = exp(I1 + I2), and I4 is the
    integral whose smallness guarantees the comparison solution exists.
    """

    profile: SteadyProfile
    _integrals: object

    def state(self, x):
        return self._integrals.state(x)

    def depth(self, x):
        return self.state(x)[0]

    def phi1(self, x):
        return np.exp(self.state(x)[1])

    def phi2(self, x):
        return np.exp(-self.state(x)[2])

    def phi(self, x):
        s = self.state(x)
        return np.exp(s[1] + s[2])

    def growth_factor(self, x):
        """exp(I3), the squared-coupling growth factor."""
        return np.exp(self.state(x)[3])

    def existence_integral(self, x):
        return self.state(x)[4]


def phi_profiles(profile: SteadyProfile) -> PhiProfiles:
    """Integrate the cumulative coefficient integrals over the channel."""
    flux, friction, p, g = _closed_form_terms(profile)
    if flux == 0.0 or friction == 0.0:
        return PhiProfiles(profile=profile, _integrals=_ZeroCouplingIntegrals(profile))

    H_floor, margin_floor = _guards(profile)

    def rhs(x, y):
        H = max(y[0], H_floor)
        lam1, lam2, g1, d1, g2, d2 = _speeds_couplings(H, flux, friction, p, g)
        dH = _depth_rhs_guarded(H, flux, friction, p, g, H_floor, margin_floor)
        phi = math.exp(y[1] + y[2])
        return (
            dH,
            g1 / lam1,
            d2 / lam2,
            2.0 * g2 / lam1,
            math.exp(y[3]) * g2 / (lam2 * phi),
        )

    sol = solve_ivp(
        rhs,
        (0.0, profile.length),
        (profile.inlet_depth, 0.0, 0.0, 0.0, 0.0),
        method="RK45",
        dense_output=True,
        rtol=INTEGRAL_RTOL,
        atol=INTEGRAL_ATOL,
    )
    if not sol.success:
        raise WeightError(
            f"channel {profile.channel}: coefficient integrals failed: {sol.message}"
        )
    return PhiProfiles(
        profile=profile, _integrals=_DenseIntegrals(sol.sol, float(sol.t[-1]))
    )


def eta_zero(phi: PhiProfiles, x):
    """eta0 = (lambda2/lambda1) phi, the epsilon = 0 trunk comparison solution."""
    H = phi.depth(x)
    lam1, lam2 = eigenvalues(H, phi.profile.velocity_of(H), phi.profile.gravity)
    return (lam2 / lam1) * phi.phi(x)


def m_value(H, inlet_depth, flux, friction_exponent, gravity):
    """Closed-form ratio m = eta_bar / eta0 as a function of the local depth."""
    if flux == 0.0:
        raise DegenerateFlux("m is undefined for a zero-flux channel")
    H = np.asarray(H, dtype=float)
    p = friction_exponent
    sg = math.sqrt(gravity)
    s = (3.0 + 2.0 * p) / 2.0
    shared = (
        (sg / ((3.0 + p) * flux)) * H ** (3.0 + p)
        + ((1.0 + p) * sg / (2.0 * (3.0 + p) * flux)) * inlet_depth ** (3.0 + p)
        + (flux / (2.0 * sg)) * (H**p - inlet_depth**p)
    )
    half = 0.5 * H**s
    num = half + shared
    den = shared - half
    if np.any(den <= 0.0):
        raise WeightError("m denominator vanished: depth beyond the subcritical range")
    out = num / den
    return float(out) if out.ndim == 0 else out


def m_profile(profile: SteadyProfile, x):
    """m(x) along the channel; raises DegenerateFlux for zero-flux channels."""
    return m_value(
        profile.depth(x),
        profile.inlet_depth,
        profile.flux,
        profile.spec.friction_exponent,
        profile.gravity,
    )


def eta_bar_closed(phi: PhiProfiles, x):
    """Closed-form eta_bar = m(x) eta0(x) (unit inlet value)."""
    H = phi.depth(x)
    prof = phi.profile
    m = m_value(H, prof.inlet_depth, prof.flux, prof.spec.friction_exponent, prof.gravity)
    lam1, lam2 = eigenvalues(H, prof.velocity_of(H), prof.gravity)
    return m * (lam2 / lam1) * phi.phi(x)


def riccati_existence_margin(phi: PhiProfiles, x):
    """Positive margin certifying the unit-inlet comparison solution up to x.

    margin(x) = lambda1(0) / (lambda1(0) - lambda2(0)) - I4(x); the comparison
    solution eta_bar exists on [0, x] while the margin stays positive.
    """
    prof = phi.profile
    if prof.flux == 0.0:
        raise DegenerateFlux("existence margin is undefined for a zero-flux channel")
    lam1_0, lam2_0 = eigenvalues(prof.inlet_depth, prof.velocity(0.0), prof.gravity)
    return lam1_0 / (lam1_0 - lam2_0) - phi.existence_integral(x)


class _AffineEta:
    """eta for channels with zero coupling: eta' = epsilon exactly."""

    def __init__(self, profile, init, epsilon):
        self.profile = profile
        self.init = init
        self.epsilon = epsilon

    def eta(self, x):
        return self.init + self.epsilon * np.asarray(x, dtype=float)

    def state(self, x):
        x = np.asarray(x, dtype=float)
        H = np.broadcast_to(self.profile.depth(x), x.shape if x.ndim else ())
        zeros = np.zeros_like(np.asarray(H, dtype=float))
        return np.stack([np.asarray(H, dtype=float), zeros, zeros, self.eta(x)])

    def slope(self, x, eta=None):
        return np.full_like(np.asarray(x, dtype=float), self.epsilon)


class _DenseEta:
    """Dense eta evaluator backed by the scaled integration state (H, I1, I2, u).

    The stored fourth component is u = eta / phi; ``state`` converts back so
    callers always see (H, I1, I2, eta).
    """

    def __init__(self, profile, dense, x_end, init, epsilon, rhs_fn):
        self.profile = profile
        self.dense = dense
        self.x_end = x_end
        self.init = init
        self.epsilon = epsilon
        self._rhs = rhs_fn

    def eta(self, x):
        return self.state(x)[3]

    def state(self, x):
        x = np.asarray(x, dtype=float)
        s = np.array(self.dense(np.clip(x, 0.0, self.x_end)))
        s[3] = s[3] * np.exp(s[1] + s[2])
        return s

    def slope(self, x, eta=None):
        """eta'(x) through the Riccati right-hand side (vectorized)."""
        s = self.state(x)
        return self._rhs(s[0], s[1], s[2], s[3])


def eta_eps(
    profile: SteadyProfile,
    epsilon: float,
    trunk_inlet: bool = False,
) -> object:
    """Strictly increasing comparison solution with slope margin epsilon.

    Solves eta' = |delta1 phi / lambda1 + (gamma2/(lambda2 phi)) eta^2| +
    epsilon with inlet value lambda2(0)/lambda1(0) + epsilon on the trunk and
    1 + epsilon on branch channels, advanced in the scaled variable
    u = eta / phi (see eta_bar_by_ode for the conditioning rationale).
    Raises EpsilonTooLarge if the solution leaves [0, 1e12] before the
    channel end.
    """
    flux, friction, p, g = _closed_form_terms(profile)
    if trunk_inlet:
        if flux == 0.0:
            raise DegenerateFlux("trunk channels carry positive flux")
        lam1_0, lam2_0 = eigenvalues(profile.inlet_depth, profile.velocity(0.0), g)
        init = lam2_0 / lam1_0 + epsilon
    else:
        init = 1.0 + epsilon

    if flux == 0.0 or friction == 0.0:
        return _AffineEta(profile, init, epsilon)

    H_floor, margin_floor = _guards(profile)

    def vec_rhs(H, I1, I2, eta):
        lam1, lam2, g1, d1, g2, d2 = _speeds_couplings(
            np.maximum(H, H_floor), flux, friction, p, g
        )
        phi = np.exp(I1 + I2)
        return np.abs(d1 * phi / lam1 + g2 / (lam2 * phi) * eta**2) + epsilon

    def rhs(x, y):
        H = max(y[0], H_floor)
        lam1, lam2, g1, d1, g2, d2 = _speeds_couplings(H, flux, friction, p, g)
        dH = _depth_rhs_guarded(H, flux, friction, p, g, H_floor, margin_floor)
        u = y[3]
        du = (
            abs(d1 / lam1 + g2 / lam2 * u * u)
            - u * (g1 / lam1 + d2 / lam2)
            + epsilon * math.exp(-(y[1] + y[2]))
        )
        return (dH, g1 / lam1, d2 / lam2, du)

    def blowup(x, y):
        return y[3] - ETA_BLOWUP

    blowup.terminal = True
    blowup.direction = 1

    sol = solve_ivp(
        rhs,
        (0.0, profile.length),
        (profile.inlet_depth, 0.0, 0.0, init),
        method="RK45",
        dense_output=True,
        rtol=ETA_RTOL,
        atol=ETA_ATOL,
        events=blowup,
    )
    if sol.t_events[0].size or not sol.success or sol.t[-1] < profile.length:
        raise EpsilonTooLarge(
            f"channel {profile.channel}: comparison solution with epsilon={epsilon:g} "
            f"does not exist on the whole channel"
        )
    return _DenseEta(profile, sol.sol, float(sol.t[-1]), init, epsilon, vec_rhs)


def eta_bar_by_ode(profile: SteadyProfile, rtol: float = ORACLE_TOL, atol: float = ORACLE_TOL):
    """Independent Riccati integration of the unit-inlet comparison solution.

    Re-integrates the steady depth and the phi exponents alongside the Riccati
    solution in a single adaptive solve (closed-form right-hand sides; no
    reuse of cached profiles), so it can serve as a verification oracle for
    the closed form. The Riccati equation is advanced in the scaled variable
    u = eta_bar / phi, whose equation u' = delta1/lambda1 + (gamma2/lambda2)
    u^2 - u (gamma1/lambda1 + delta2/lambda2) has the neutral exponential
    drift removed: the raw eta_bar equation amplifies truncation error by
    exp(int 2 gamma2 eta_bar / (lambda2 phi)), which overwhelms any tolerance
    on channels approaching the blow-up length, while the scaled form stays
    well conditioned. Returns a callable evaluating eta_bar(x).
    """
    flux, friction, p, g = _closed_form_terms(profile)
    if flux == 0.0 or friction == 0.0:
        return lambda x: np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    H_floor, margin_floor = _guards(profile)

    def rhs(x, y):
        H = max(y[0], H_floor)
        lam1, lam2, g1, d1, g2, d2 = _speeds_couplings(H, flux, friction, p, g)
        dH = _depth_rhs_guarded(H, flux, friction, p, g, H_floor, margin_floor)
        u = y[3]
        du = abs(d1 / lam1 + g2 / lam2 * u * u) - u * (g1 / lam1 + d2 / lam2)
        return (dH, g1 / lam1, d2 / lam2, du)

    def blowup(x, y):
        return y[3] - ETA_BLOWUP

    blowup.terminal = True
    blowup.direction = 1

    sol = solve_ivp(
        rhs,
        (0.0, profile.length),
        (profile.inlet_depth, 0.0, 0.0, 1.0),
        method="RK45",
        dense_output=True,
        rtol=rtol,
        atol=atol,
        events=blowup,
    )
    if sol.t_events[0].size:
        raise RiccatiBlowup(profile.channel, float(sol.t_events[0][0]))
    if not sol.success:
        raise WeightError(f"channel {profile.channel}: Riccati integration failed: {sol.message}")
    dense, x_end = sol.sol, float(sol.t[-1])

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        s = dense(np.clip(x, 0.0, x_end))
        out = s[3] * np.exp(s[1] + s[2])
        return float(out) if x.ndim == 0 else out

    return evaluate


@dataclass(frozen=True, eq=False)
class ChannelWeights:
    """Weight profiles of one channel, sampled on its fine grid."""

    coeffs: CharCoeffs
    phi_integrals: PhiProfiles
    eta_solution: object
    alpha: float
    epsilon: float
    phi1: np.ndarray
    phi2: np.ndarray
    phi: np.ndarray
    eta0: np.ndarray
    m: np.ndarray | None
    eta_bar: np.ndarray | None
    eta_eps: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    Z_tilde: np.ndarray
    W_tilde: np.ndarray

    @property
    def profile(self) -> SteadyProfile:
        return self.coeffs.profile

    @property
    def channel(self) -> int:
        return self.profile.channel

    def _pieces_at(self, x):
        s = self.eta_solution.state(x)
        H, I1, I2, eta = s[0], s[1], s[2], s[3]
        lam1, lam2 = eigenvalues(H, self.profile.velocity_of(H), self.profile.gravity)
        phi1 = np.exp(I1)
        phi2 = np.exp(-I2)
        return H, lam1, lam2, phi1, phi2, eta

    def f_at(self, x):
        """(f1, f2) at arbitrary abscissae."""
        H, lam1, lam2, phi1, phi2, eta = self._pieces_at(x)
        return (
            self.alpha * phi1**2 / (lam1 * eta),
            self.alpha * phi2**2 * eta / lam2,
        )

    def zw_at(self, x):
        """(Z, W) = (lambda1 f1 -/+ lambda2 f2) at arbitrary abscissae."""
        H, lam1, lam2, phi1, phi2, eta = self._pieces_at(x)
        a = phi1**2 / eta
        b = phi2**2 * eta
        return self.alpha * (a - b), self.alpha * (a + b)

    def w_tilde_at(self, x):
        H, lam1, lam2, phi1, phi2, eta = self._pieces_at(x)
        return phi1**2 / eta + phi2**2 * eta


def _build_channel_weights(
    coeffs: CharCoeffs,
    phi: PhiProfiles,
    eta_sol,
    alpha: float,
) -> ChannelWeights:
    profile = coeffs.profile
    x = profile.x_fine
    s = eta_sol.state(x)
    H, I1, I2, eta = s[0], s[1], s[2], s[3]
    lam1, lam2 = coeffs.lambda1, coeffs.lambda2
    phi1 = np.exp(I1)
    phi2 = np.exp(-I2)
    phiv = phi1 / phi2
    eta0 = (lam2 / lam1) * phiv
    if profile.flux > 0.0:
        m = m_value(
            profile.H_fine,
            profile.inlet_depth,
            profile.flux,
            profile.spec.friction_exponent,
            profile.gravity,
        )
        m = np.broadcast_to(np.asarray(m, dtype=float), x.shape).copy()
        eta_bar = m * eta0
    else:
        m = None
        eta_bar = None
    f1 = alpha * phi1**2 / (lam1 * eta)
    f2 = alpha * phi2**2 * eta / lam2
    z_t = phi1**2 / eta - phi2**2 * eta
    w_t = phi1**2 / eta + phi2**2 * eta
    return ChannelWeights(
        coeffs=coeffs,
        phi_integrals=phi,
        eta_solution=eta_sol,
        alpha=alpha,
        epsilon=eta_sol.epsilon,
        phi1=phi1,
        phi2=phi2,
        phi=phiv,
        eta0=eta0,
        m=m,
        eta_bar=eta_bar,
        eta_eps=np.asarray(eta, dtype=float),
        f1=f1,
        f2=f2,
        Z=alpha * z_t,
        W=alpha * w_t,
        Z_tilde=z_t,
        W_tilde=w_t,
    )


def alpha_select(
    topo: NetworkTopology,
    w_tilde_start: dict[int, float],
    w_tilde_end: dict[int, float],
    root_alpha: float = 1.0,
) -> dict[int, float]:
    """Per-channel scales making W continuous across every junction.

    alpha_child = alpha_parent * W~_parent(L) / W~_child(0); the root scale is
    free (default 1) and an overall rescale leaves every certificate verdict
    unchanged.
    """
    alphas: dict[int, float] = {}
    for i in traversal_order(topo):
        if i == topo.root_channel:
            alphas[i] = root_alpha
            continue
        parent = topo.parent_of(i)
        denom = w_tilde_start[i]
        if abs(denom) < 1e-300:
            raise ZeroW(f"channel {i}: W vanishes at the inlet")
        alphas[i] = alphas[parent] * w_tilde_end[parent] / denom
    return alphas


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Weight profiles for every channel of a network at a common epsilon."""

    topo: NetworkTopology
    epsilon: float
    channels: dict[int, ChannelWeights]


def network_weights(
    topo: NetworkTopology,
    profiles: dict[int, SteadyProfile],
    epsilon: float,
    phi_cache: dict[int, PhiProfiles] | None = None,
    coeffs_cache: dict[int, CharCoeffs] | None = None,
    root_alpha: float = 1.0,
) -> WeightSet:
    """Assemble junction-matched weights for the whole tree at one epsilon."""
    order = traversal_order(topo)
    coeffs = coeffs_cache if coeffs_cache is not None else {}
    phis = phi_cache if phi_cache is not None else {}
    for i in order:
        if i not in coeffs:
            coeffs[i] = CharCoeffs.from_profile(profiles[i])
        if i not in phis:
            phis[i] = phi_profiles(profiles[i])

    etas = {
        i: eta_eps(profiles[i], epsilon, trunk_inlet=(i == topo.root_channel))
        for i in order
    }
    w_start = {}
    w_end = {}
    for i in order:
        s0 = etas[i].state(0.0)
        sL = etas[i].state(profiles[i].length)
        w_start[i] = float(np.exp(2.0 * s0[1]) / s0[3] + np.exp(-2.0 * s0[2]) * s0[3])
        w_end[i] = float(np.exp(2.0 * sL[1]) / sL[3] + np.exp(-2.0 * sL[2]) * sL[3])
    alphas = alpha_select(topo, w_start, w_end, root_alpha)
    channels = {
        i: _build_channel_weights(coeffs[i], phis[i], etas[i], alphas[i]) for i in order
    }
    return WeightSet(topo=topo, epsilon=epsilon, channels=channels)


def junction_matrix(ws: WeightSet, incoming: int):
    """Symmetric junction matrices (M, M_bar) for the junction fed by ``incoming``.

    Rows/columns 0..m-1 correspond to the outgoing channels' velocity traces,
    the last row/column to the shared depth trace. M_bar is M with the
    depth-velocity couplings removed, which is exact once the alpha scales
    match W across the junction.
    """
    topo = ws.topo
    children = topo.junctions[incoming]
    cw_in = ws.channels[incoming]
    prof = cw_in.profile
    H_B = prof.outlet_depth
    g = prof.gravity
    L = prof.length
    Z_in, W_in = (float(v) for v in cw_in.zw_at(L))
    Z0 = [float(ws.channels[c].zw_at(0.0)[0]) for c in children]
    W0 = [float(ws.channels[c].zw_at(0.0)[1]) for c in children]
    m = len(children)
    M = np.full((m + 1, m + 1), Z_in)
    for l in range(m):
        M[l, l] = Z_in - Z0[l]
    s = math.sqrt(g * H_B) / H_B
    for l in range(m):
        M[l, m] = M[m, l] = s * (W_in - W0[l])
    M[m, m] = (g / H_B) * (Z_in - sum(Z0))
    M_bar = M.copy()
    M_bar[:m, m] = 0.0
    M_bar[m, :m] = 0.0
    return M, M_bar


def junction_reduction(z_in_end: float, z_out_starts) -> np.ndarray:
    """Determinant-preserving diagonal of the junction velocity block.

    Row/column elimination turns the m x m velocity block into a diagonal
    matrix whose entries are all positive exactly when the block is positive
    definite; the product of the entries equals the block determinant.
    """
    z0 = [float(z) for z in z_out_starts]
    if not z0:
        raise ValueError("junction has no outgoing channels")
    theta2 = z_in_end - z0[0] + sum(z0[0] * z_in_end / z for z in z0[1:])
    return np.array([theta2] + [-z for z in z0[1:]])


def trunk_inlet_coefficient(ws: WeightSet) -> float:
    """Dissipation coefficient of the imposed-flux inlet at the trunk."""
    cw = ws.channels[ws.topo.root_channel]
    prof = cw.profile
    V0 = prof.velocity(0.0)
    H0 = prof.inlet_depth
    lam1, lam2 = eigenvalues(H0, V0, prof.gravity)
    f1_0, f2_0 = (float(v) for v in cw.f_at(0.0))
    return (lam2 * lam1**2 * f2_0 - lam1 * lam2**2 * f1_0) / V0**2


def interior_matrix(cw: ChannelWeights):
    """Symmetric interior dissipation matrix N(x) on the fine grid.

    Entries: N11 = -(f1 lambda1)' + 2 f1 gamma1, N22 = (f2 lambda2)' +
    2 f2 delta2, N12 = f1 delta1 + f2 gamma2, with the spatial derivatives
    taken analytically through the weight definitions and the eta equation.
    Returns (N11, N12, N22) arrays.
    """
    x = cw.profile.x_fine
    lam1, lam2 = cw.coeffs.lambda1, cw.coeffs.lambda2
    g1, d1 = cw.coeffs.gamma1, cw.coeffs.delta1
    g2, d2 = cw.coeffs.gamma2, cw.coeffs.delta2
    eta = cw.eta_eps
    eta_slope = cw.eta_solution.slope(x)
    f1l1 = cw.f1 * lam1
    f2l2 = cw.f2 * lam2
    d_f1l1 = f1l1 * (2.0 * g1 / lam1 - eta_slope / eta)
    d_f2l2 = f2l2 * (eta_slope / eta - 2.0 * d2 / lam2)
    N11 = -d_f1l1 + 2.0 * cw.f1 * g1
    N22 = d_f2l2 + 2.0 * cw.f2 * d2
    N12 = cw.f1 * d1 + cw.f2 * g2
    return N11, N12, N22


def _sym2x2_eig_bounds(a11, a12, a22):
    mid = 0.5 * (a11 + a22)
    rad = np.sqrt((0.5 * (a11 - a22)) ** 2 + a12**2)
    low = mid - rad
    high = mid + rad
    norm = np.maximum(np.abs(low), np.abs(high))
    return low, norm


@dataclass(frozen=True, eq=False)
class NetworkCertificate:
    """Outcome of the network positivity checks at one epsilon."""

    certified: bool
    epsilon: float
    halvings: int
    weights: WeightSet | None
    alphas: dict[int, float]
    z_end: dict[int, float]
    z_start: dict[int, float]
    junction_min_eig: dict[int, float]
    trunk_inlet: float
    terminal_margins: dict[int, float]
    reflection: dict[int, float]
    interior_min_eig: dict[int, float]
    failed_checks: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "epsilon": self.epsilon,
            "halvings": self.halvings,
            "alphas": {str(k): v for k, v in sorted(self.alphas.items())},
            "z_end": {str(k): v for k, v in sorted(self.z_end.items())},
            "z_start": {str(k): v for k, v in sorted(self.z_start.items())},
            "junction_min_eig": {str(k): v for k, v in sorted(self.junction_min_eig.items())},
            "trunk_inlet": self.trunk_inlet,
            "terminal_margins": {str(k): v for k, v in sorted(self.terminal_margins.items())},
            "reflection": {str(k): v for k, v in sorted(self.reflection.items())},
            "interior_min_eig": {str(k): v for k, v in sorted(self.interior_min_eig.items())},
            "failed_checks": list(self.failed_checks),
        }


def _run_checks(
    topo: NetworkTopology,
    profiles: dict[int, SteadyProfile],
    ws: WeightSet,
    gains: dict[int, float],
    rel_tol: float,
):
    failed: list[str] = []
    z_end: dict[int, float] = {}
    z_start: dict[int, float] = {}
    junction_min_eig: dict[int, float] = {}
    terminal_margins: dict[int, float] = {}
    reflection: dict[int, float] = {}
    interior_min: dict[int, float] = {}

    for i in topo.internal_channels:
        z = float(ws.channels[i].zw_at(profiles[i].length)[0])
        z_end[i] = z
        if z <= 0.0:
            _note(failed, "junction_outflow_positive")
    for i in topo.channels:
        if i == topo.root_channel:
            continue
        z = float(ws.channels[i].zw_at(0.0)[0])
        z_start[i] = z
        if z >= 0.0:
            _note(failed, "branch_inflow_negative")

    for i in topo.internal_channels:
        _, M_bar = junction_matrix(ws, i)
        eigs = np.linalg.eigvalsh(M_bar)
        junction_min_eig[i] = float(eigs[0])
        norm = float(np.max(np.abs(eigs)))
        if not eigs[0] > rel_tol * norm:
            _note(failed, "junction_matrix")

    f1 = trunk_inlet_coefficient(ws)
    if f1 <= 0.0:
        _note(failed, "trunk_inlet")

    for j in topo.terminal_channels:
        if j not in gains:
            raise MissingGain(j)
        k = float(gains[j])
        prof = profiles[j]
        c = reflection_coefficient(k, prof.outlet_depth, prof.gravity)
        reflection[j] = c
        cw = ws.channels[j]
        L = prof.length
        f1_L, f2_L = cw.f_at(L)
        H_L = prof.outlet_depth
        lam1_L, lam2_L = eigenvalues(H_L, prof.outlet_velocity, prof.gravity)
        margin = float(f1_L * lam1_L * c**2 - f2_L * lam2_L)
        terminal_margins[j] = margin
        if margin <= 0.0 or (prof.flux == 0.0 and k <= 0.0):
            _note(failed, "terminal_margin")

    for i, cw in ws.channels.items():
        N11, N12, N22 = interior_matrix(cw)
        low, norm = _sym2x2_eig_bounds(N11, N12, N22)
        interior_min[i] = float(np.min(low))
        if not np.all(low > rel_tol * norm):
            _note(failed, "interior_matrix")

    return failed, {
        "z_end": z_end,
        "z_start": z_start,
        "junction_min_eig": junction_min_eig,
        "trunk_inlet": f1,
        "terminal_margins": terminal_margins,
        "reflection": reflection,
        "interior_min_eig": interior_min,
    }


def _note(failed: list[str], name: str):
    if name not in failed:
        failed.append(name)


def certify_network(
    topo: NetworkTopology,
    profiles: dict[int, SteadyProfile],
    gains: dict[int, float],
    epsilon_start: float = DEFAULT_EPSILON,
    max_halvings: int = MAX_HALVINGS,
    positivity_rel_tol: float = POSITIVITY_REL_TOL,
) -> NetworkCertificate:
    """Search a decreasing epsilon schedule for a full positivity certificate.

    Verifies, at each epsilon: positive outflow coefficient Z at every
    junction inflow face, negative inflow coefficient Z at every non-trunk
    inlet, positive definite junction matrices, a positive trunk inlet
    coefficient, positive terminal margins for the supplied gains, and a
    positive definite interior matrix N(x) at every fine-grid point of every
    channel. Epsilon is halved (at most ``max_halvings`` times) whenever the
    comparison solution fails to exist or any check fails.
    """
    validate_topology(topo)
    for j in topo.terminal_channels:
        if j not in gains:
            raise MissingGain(j)
    coeffs_cache: dict[int, CharCoeffs] = {}
    phi_cache: dict[int, PhiProfiles] = {}
    epsilon = float(epsilon_start)
    last: tuple | None = None
    halvings = 0
    for attempt in range(max_halvings + 1):
        halvings = attempt
        try:
            ws = network_weights(
                topo, profiles, epsilon, phi_cache=phi_cache, coeffs_cache=coeffs_cache
            )
        except EpsilonTooLarge:
            last = (epsilon, None, ["weight_existence"], None)
            epsilon *= 0.5
            continue
        failed, detail = _run_checks(topo, profiles, ws, gains, positivity_rel_tol)
        last = (epsilon, ws, failed, detail)
        if not failed:
            break
        epsilon *= 0.5

    epsilon_used, ws, failed, detail = last
    if detail is None:
        detail = {
            "z_end": {},
            "z_start": {},
            "junction_min_eig": {},
            "trunk_inlet": math.nan,
            "terminal_margins": {},
            "reflection": {},
            "interior_min_eig": {},
        }
    return NetworkCertificate(
        certified=not failed,
        epsilon=epsilon_used,
        halvings=halvings,
        weights=ws,
        alphas={} if ws is None else {i: cw.alpha for i, cw in ws.channels.items()},
        z_end=detail["z_end"],
        z_start=detail["z_start"],
        junction_min_eig=detail["junction_min_eig"],
        trunk_inlet=detail["trunk_inlet"],
        terminal_margins=detail["terminal_margins"],
        reflection=detail["reflection"],
        interior_min_eig=detail["interior_min_eig"],
        failed_checks=tuple(failed),
    )


def lyapunov_value(ws: WeightSet, ys: dict[int, tuple]) -> float:
    """V = sum_i int f1 y1^2 + f2 y2^2 dx over cell centers (trapezoid rule)."""
    total = 0.0
    for ch, (y1, y2) in ys.items():
        cw = ws.channels[ch]
        x = cw.profile.x_centers
        f1, f2 = cw.f_at(x)
        total += float(np.trapezoid(f1 * np.asarray(y1) ** 2 + f2 * np.asarray(y2) ** 2, x))
    return total
