"""Time-domain simulation of flow networks with feedback boundary control.

The solver advances the deviation fields (h, v) = (H - H*, V - V*) with a
first-order upwind finite-volume scheme and a two-stage Runge-Kutta step.
Working in deviations makes the steady state an exact fixed point: every flux
and source term is assembled from deviation quantities that vanish bitwise at
h = v = 0, so no cancellation of large baseline terms can pollute decay
measurements.

Both the nonlinear system and its linearization fit one conservative form

    dt h + dx F1 = 0,          F1 = H* v + V* h (+ h v),
    dt v + dx F2 = S,          F2 = V* v + g h (+ v^2 / 2),

with S the friction source relative to the steady baseline. Interface fluxes
are upwinded in the characteristic variables of the frozen steady Jacobian;
boundary and junction faces carry exactly imposed states obtained from the
characteristic invariant of the nearest interior cell (zeroth-order
extrapolation) combined with the imposed flux, feedback law, or junction
coupling, via a scalar Newton iteration started from the previous face values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .characteristics import coupling_coefficients, eigenvalues
from .errors import (
    CflViolation,
    JunctionDivergence,
    MissingGain,
    NonPositiveV,
    RootSolveFailure,
    SimulationError,
    SubcriticalLoss,
    TerminalSolveFailure,
    WeightError,
)
from .steady import SteadyProfile
from .topology import NetworkTopology, validate_topology
from .weights import WeightSet, certify_network

CFL_SAFETY = 0.9
NEWTON_TOL = 1e-13
NEWTON_MAX_ITER = 50
DEFAULT_SAMPLES = 400


@dataclass(frozen=True)
class Bump:
    """Smooth compact perturbation of one channel's deviation fields.

    center and width are fractions of the channel length; the profile is the
    quartic bump (1 - r^2)^4 on |r| < 1, zero outside, further damped to zero
    over the two cells adjacent to each face so the initial data is compatible
    with the boundary relations.
    """

    amplitude_h: float = 0.0
    amplitude_v: float = 0.0
    center: float = 0.5
    width: float = 0.5


@dataclass
class SimState:
    """Deviation fields at cell centers plus the last solved face values.

    faces maps channel id to (h, v) at the inlet face followed by (h, v) at
    the outlet face; the tuples seed the Newton face solves of the next
    right-hand side evaluation.
    """

    time: float
    fields: dict[int, tuple[np.ndarray, np.ndarray]]
    faces: dict[int, tuple[float, float, float, float]]

    def copy(self) -> "SimState":
        return SimState(
            time=self.time,
            fields={i: (h.copy(), v.copy()) for i, (h, v) in self.fields.items()},
            faces=dict(self.faces),
        )


@dataclass(frozen=True, eq=False)
class LyapunovTrace:
    """Sampled Lyapunov and norm history of one run."""

    mode: str
    dt: float
    t: np.ndarray
    V: np.ndarray
    V_ext: np.ndarray
    l2: np.ndarray
    boundary_B: np.ndarray
    channel_l2: dict[int, np.ndarray]
    mass_deviation: np.ndarray
    mass_flux_integral: np.ndarray
    root_flux: float
    nu_hat: float
    r2: float
    fit_window: tuple[float, float]
    zero_trace: bool


class _ChannelData:
    """Precomputed grid, steady, coupling and weight samples of one channel."""

    def __init__(self, profile: SteadyProfile, cw):
        self.profile = profile
        spec = profile.spec
        self.g = spec.gravity
        self.friction = spec.friction
        self.p = spec.friction_exponent
        self.n = spec.cells
        self.length = profile.length
        self.dx = profile.length / self.n
        self.x_centers = profile.x_centers
        self.Hc = profile.H_centers
        self.Vc = np.asarray(profile.V_centers, dtype=float)
        self.Hf = profile.H_faces
        self.Vf = np.asarray(profile.V_faces, dtype=float)
        cf = np.sqrt(self.g * self.Hf[1:-1])
        # |A| of the frozen steady Jacobian at interior faces, in the (h, v)
        # basis: diagonal c, off-diagonal H V / c and g V / c.
        self.absAd = cf
        self.absA12 = self.Hf[1:-1] * self.Vf[1:-1] / cf
        self.absA21 = self.g * self.Vf[1:-1] / cf
        self.sc = np.sqrt(self.g / self.Hc)
        self.c0 = math.sqrt(self.g * self.Hf[0])
        self.cL = math.sqrt(self.g * self.Hf[-1])
        self.lam1c, self.lam2c = eigenvalues(self.Hc, self.Vc, self.g)
        g1, d1, g2, d2 = coupling_coefficients(
            self.Hc, profile.flux, self.friction, self.p, self.g, check=False
        )
        self.gamma1, self.delta1, self.gamma2, self.delta2 = g1, d1, g2, d2
        if self.friction > 0.0 and profile.flux != 0.0:
            self.src_h = self.p * self.g * self.friction * self.Vc**2 / self.Hc ** (self.p + 1.0)
            self.src_v = 2.0 * self.g * self.friction * self.Vc / self.Hc**self.p
        else:
            self.src_h = np.zeros_like(self.Hc)
            self.src_v = np.zeros_like(self.Hc)
        f1c, f2c = cw.f_at(self.x_centers)
        self.f1c = np.asarray(f1c, dtype=float)
        self.f2c = np.asarray(f2c, dtype=float)
        self.f1_0, self.f2_0 = (float(a) for a in cw.f_at(0.0))
        self.f1_L, self.f2_L = (float(a) for a in cw.f_at(profile.length))
        self.lam1_0, self.lam2_0 = eigenvalues(float(self.Hf[0]), float(self.Vf[0]), self.g)
        self.lam1_L, self.lam2_L = eigenvalues(float(self.Hf[-1]), float(self.Vf[-1]), self.g)


class NetworkSimulator:
    """Upwind finite-volume integrator for one network configuration.

    mode selects the evolved system: "linear" advances the linearized
    deviation equations (the setting of the decay certificates), "nonlinear"
    the full equations written in deviation form. The Lyapunov weights are
    taken from ``weights`` or recomputed by certifying the supplied gains.
    """

    def __init__(
        self,
        topo: NetworkTopology,
        profiles: dict[int, SteadyProfile],
        gains: dict[int, float],
        weights: WeightSet | None = None,
        mode: str = "linear",
        cfl: float = CFL_SAFETY,
    ):
        if mode not in ("linear", "nonlinear"):
            raise ValueError(f"unknown mode {mode!r}")
        if not 0.0 < cfl <= 0.95:
            raise ValueError("cfl must lie in (0, 0.95]")
        self.cfl = cfl
        validate_topology(topo)
        for j in topo.terminal_channels:
            if j not in gains:
                raise MissingGain(j)
        self.topo = topo
        self.profiles = profiles
        self.gains = {j: float(k) for j, k in gains.items()}
        self.mode = mode
        if weights is None:
            weights = certify_network(topo, profiles, gains).weights
        if weights is None:
            raise WeightError("no weight set available for Lyapunov instrumentation")
        self.weights = weights
        self.data = {i: _ChannelData(profiles[i], weights.channels[i]) for i in topo.channels}
        self.root_flux = profiles[topo.root_channel].flux
        self.final_state: SimState | None = None
        # junction bookkeeping: incoming channel -> (children, H*_B, steady
        # velocity mismatch of the stored baselines, a few ulp at most)
        self.junctions = {}
        for i in topo.internal_channels:
            children = topo.junctions[i]
            H_B = profiles[i].outlet_depth
            v_in = profiles[i].flux / H_B
            v_out = sum(profiles[c].flux / H_B for c in children)
            self.junctions[i] = (children, H_B, v_in - v_out)

    # -- characteristic shifts ----------------------------------------------

    def _shift_face(self, h, H_star, g):
        """Depth contribution to the characteristic variables at one face."""
        if self.mode == "linear":
            return h * math.sqrt(g / H_star)
        arg = H_star + h
        if arg <= 0.0:
            return -2.0 * math.sqrt(g * H_star)
        return 2.0 * (math.sqrt(g * arg) - math.sqrt(g * H_star))

    def _shift_slope(self, h, H_star, g):
        if self.mode == "linear":
            return math.sqrt(g / H_star)
        return math.sqrt(g / max(H_star + h, 1e-12 * H_star))

    # -- initial data --------------------------------------------------------

    def initial_state(self, perturbation: dict[int, Bump] | None = None) -> SimState:
        fields = {}
        for i in self.topo.channels:
            d = self.data[i]
            h = np.zeros(d.n)
            v = np.zeros(d.n)
            bump = None if perturbation is None else perturbation.get(i)
            if bump is not None and (bump.amplitude_h != 0.0 or bump.amplitude_v != 0.0):
                r = (d.x_centers - bump.center * d.length) / (0.5 * bump.width * d.length)
                shape = (1.0 - np.minimum(r * r, 1.0)) ** 4
                cells = np.arange(d.n, dtype=float)
                edge = np.minimum(cells, d.n - 1 - cells)
                ramp = np.clip((edge - 1.0) / 2.0, 0.0, 1.0)
                shape *= ramp * ramp * (3.0 - 2.0 * ramp)
                h += bump.amplitude_h * shape
                v += bump.amplitude_v * shape
            fields[i] = (h, v)
        faces = {i: (0.0, 0.0, 0.0, 0.0) for i in self.topo.channels}
        state = SimState(time=0.0, fields=fields, faces=faces)
        if self.mode == "nonlinear":
            self._check_subcritical(state)
        return state

    # -- guards --------------------------------------------------------------

    def _check_subcritical(self, state: SimState):
        for i, (h, v) in state.fields.items():
            d = self.data[i]
            H = d.Hc + h
            V = d.Vc + v
            bad = (H <= 0.0) | (d.g * H - V * V <= 0.0)
            if np.any(bad):
                raise SubcriticalLoss(i, int(np.argmax(bad)))

    def cfl_dt(self, state: SimState) -> float:
        """Largest stable step, CFL safety times min over cells of dx / speed."""
        bound = math.inf
        for i, (h, v) in state.fields.items():
            d = self.data[i]
            if self.mode == "nonlinear":
                speed = float(
                    np.max(np.abs(d.Vc + v) + np.sqrt(d.g * np.maximum(d.Hc + h, 1e-12)))
                )
            else:
                speed = float(np.max(d.lam1c))
            bound = min(bound, d.dx / speed)
        return self.cfl * bound

    # -- face solves ---------------------------------------------------------

    def _newton_face(self, G, dG, h0, scale, err):
        h = h0
        for _ in range(NEWTON_MAX_ITER):
            g = G(h)
            if abs(g) <= NEWTON_TOL * scale:
                return h
            slope = dG(h)
            if not math.isfinite(slope) or abs(slope) < 1e-14:
                raise err
            h -= g / slope
            if not math.isfinite(h):
                raise err
        if abs(G(h)) <= 10.0 * NEWTON_TOL * scale:
            return h
        raise err

    def boundary_root(self, state: SimState) -> tuple[float, float]:
        """Trunk inlet face state from the imposed flux and the y2 invariant."""
        i = self.topo.root_channel
        d = self.data[i]
        h_c = float(state.fields[i][0][0])
        v_c = float(state.fields[i][1][0])
        y2_hat = v_c - self._shift_face(h_c, float(d.Hc[0]), d.g)
        H0 = float(d.Hf[0])
        V0 = float(d.Vf[0])
        nonlinear = self.mode == "nonlinear"

        def G(h):
            v = y2_hat + self._shift_face(h, H0, d.g)
            if nonlinear:
                return (H0 + h) * v + V0 * h
            return H0 * v + V0 * h

        def dG(h):
            s = self._shift_slope(h, H0, d.g)
            if nonlinear:
                return (y2_hat + self._shift_face(h, H0, d.g)) + (H0 + h) * s + V0
            return H0 * s + V0

        err = RootSolveFailure(f"channel {i}: inlet flux solve diverged")
        h_f = self._newton_face(G, dG, state.faces[i][0], H0 * d.c0, err)
        return h_f, y2_hat + self._shift_face(h_f, H0, d.g)

    def boundary_terminal(self, state: SimState, i: int) -> tuple[float, float]:
        """Terminal face state from the feedback law and the y1 invariant."""
        d = self.data[i]
        k = self.gains[i]
        h_c = float(state.fields[i][0][-1])
        v_c = float(state.fields[i][1][-1])
        y1_hat = v_c + self._shift_face(h_c, float(d.Hc[-1]), d.g)
        HL = float(d.Hf[-1])

        def G(h):
            return k * h + self._shift_face(h, HL, d.g) - y1_hat

        def dG(h):
            return k + self._shift_slope(h, HL, d.g)

        err = TerminalSolveFailure(f"channel {i}: terminal feedback solve diverged")
        h_f = self._newton_face(G, dG, state.faces[i][2], max(d.cL, abs(y1_hat)), err)
        return h_f, k * h_f

    def junction_solve(self, state: SimState, i: int) -> tuple[float, dict[int, float]]:
        """Common depth deviation and face velocities at the junction fed by i.

        The incoming y1 and each outgoing y2 invariant express every face
        velocity through the depth deviation h_B, and conservation of the mass
        flux closes a scalar equation solved by Newton iteration.
        """
        children, H_B, dust = self.junctions[i]
        d_in = self.data[i]
        h_c = float(state.fields[i][0][-1])
        v_c = float(state.fields[i][1][-1])
        y1_hat = v_c + self._shift_face(h_c, float(d_in.Hc[-1]), d_in.g)
        y2_hats = {}
        for c in children:
            d_c = self.data[c]
            y2_hats[c] = float(state.fields[c][1][0]) - self._shift_face(
                float(state.fields[c][0][0]), float(d_c.Hc[0]), d_c.g
            )
        m = len(children)
        total = y1_hat - sum(y2_hats.values())
        nonlinear = self.mode == "nonlinear"
        g = d_in.g

        def G(h):
            hh = H_B + h if nonlinear else H_B
            return total - (m + 1) * self._shift_face(h, H_B, g) + dust * h / hh

        def dG(h):
            s = (m + 1) * self._shift_slope(h, H_B, g)
            if nonlinear:
                hh = H_B + h
                return -s + dust * H_B / (hh * hh)
            return -s + dust / H_B

        scale = max(math.sqrt(g * H_B), abs(total))
        h_B = self._newton_face(G, dG, state.faces[i][2], scale, JunctionDivergence(i))
        shift = self._shift_face(h_B, H_B, g)
        velocities = {i: y1_hat - shift}
        for c in children:
            velocities[c] = y2_hats[c] + shift
        return h_B, velocities

    def face_states(self, state: SimState) -> dict[int, tuple[float, float, float, float]]:
        """Solve every boundary and junction face for the given interior state."""
        faces = {i: list(state.faces[i]) for i in self.topo.channels}
        root = self.topo.root_channel
        faces[root][0], faces[root][1] = self.boundary_root(state)
        for i in self.topo.internal_channels:
            h_B, velocities = self.junction_solve(state, i)
            faces[i][2], faces[i][3] = h_B, velocities[i]
            for c in self.junctions[i][0]:
                faces[c][0], faces[c][1] = h_B, velocities[c]
        for j in self.topo.terminal_channels:
            faces[j][2], faces[j][3] = self.boundary_terminal(state, j)
        return {i: tuple(f) for i, f in faces.items()}

    # -- semi-discrete right-hand side ---------------------------------------

    def _flux(self, h, v, H_star, V_star, g):
        if self.mode == "nonlinear":
            return H_star * v + V_star * h + h * v, V_star * v + 0.5 * v * v + g * h
        return H_star * v + V_star * h, V_star * v + g * h

    def _source(self, d: _ChannelData, h, v):
        if d.friction == 0.0:
            return 0.0
        if self.mode == "nonlinear":
            H = d.Hc + h
            V = d.Vc + v
            return -d.g * d.friction * (V * V / H**d.p - d.Vc * d.Vc / d.Hc**d.p)
        return d.src_h * h - d.src_v * v

    def rhs(self, state: SimState):
        """Semi-discrete tendencies, solved faces, and the net boundary influx."""
        if self.mode == "nonlinear":
            self._check_subcritical(state)
        faces = self.face_states(state)
        tendencies = {}
        net_influx = 0.0
        for i in self.topo.channels:
            d = self.data[i]
            h, v = state.fields[i]
            F1_l, F2_l = self._flux(h[:-1], v[:-1], d.Hf[1:-1], d.Vf[1:-1], d.g)
            F1_r, F2_r = self._flux(h[1:], v[1:], d.Hf[1:-1], d.Vf[1:-1], d.g)
            dh = h[1:] - h[:-1]
            dv = v[1:] - v[:-1]
            F1 = 0.5 * (F1_l + F1_r) - 0.5 * (d.absAd * dh + d.absA12 * dv)
            F2 = 0.5 * (F2_l + F2_r) - 0.5 * (d.absA21 * dh + d.absAd * dv)
            h0, v0, hL, vL = faces[i]
            F1_in, F2_in = self._flux(h0, v0, float(d.Hf[0]), float(d.Vf[0]), d.g)
            F1_out, F2_out = self._flux(hL, vL, float(d.Hf[-1]), float(d.Vf[-1]), d.g)
            flux1 = np.concatenate(([F1_in], F1, [F1_out]))
            flux2 = np.concatenate(([F2_in], F2, [F2_out]))
            dh_dt = -np.diff(flux1) / d.dx
            dv_dt = -np.diff(flux2) / d.dx + self._source(d, h, v)
            tendencies[i] = (dh_dt, dv_dt)
            net_influx += F1_in - F1_out
        return tendencies, faces, net_influx

    def step(self, state: SimState, dt: float):
        """One Heun (two-stage Runge-Kutta) step: (new state, flux integral).

        The flux integral applies the scheme's own quadrature to the net
        boundary mass influx, so stored mass and ledger agree to round-off.
        """
        bound = self.cfl_dt(state)
        if dt > bound * (1.0 + 1e-12):
            raise CflViolation(
                f"dt = {dt:.6e} exceeds the stability bound {bound:.6e} at t = {state.time:.6e}"
            )
        k1, faces1, influx1 = self.rhs(state)
        mid = SimState(
            time=state.time + dt,
            fields={
                i: (h + dt * k1[i][0], v + dt * k1[i][1])
                for i, (h, v) in state.fields.items()
            },
            faces=faces1,
        )
        k2, faces2, influx2 = self.rhs(mid)
        new = SimState(
            time=state.time + dt,
            fields={
                i: (
                    h + 0.5 * dt * (k1[i][0] + k2[i][0]),
                    v + 0.5 * dt * (k1[i][1] + k2[i][1]),
                )
                for i, (h, v) in state.fields.items()
            },
            faces=faces2,
        )
        return new, 0.5 * dt * (influx1 + influx2)

    # -- instrumentation -----------------------------------------------------

    def _char_fields(self, d: _ChannelData, h, v):
        if self.mode == "nonlinear":
            shift = 2.0 * (np.sqrt(d.g * (d.Hc + h)) - np.sqrt(d.g * d.Hc))
        else:
            shift = d.sc * h
        return v + shift, v - shift

    def lyapunov_value_state(self, state: SimState) -> float:
        """Weighted characteristic norm of the current deviation fields."""
        total = 0.0
        for i, (h, v) in state.fields.items():
            d = self.data[i]
            y1, y2 = self._char_fields(d, h, v)
            total += float(np.trapezoid(d.f1c * y1**2 + d.f2c * y2**2, d.x_centers))
        return total

    def lyapunov_extended(self, state: SimState) -> tuple[float, float]:
        """(V, V_ext): the weighted norm and its two-derivative extension.

        Time derivatives of the characteristic fields are obtained by
        substituting centered spatial differences into the linearized
        characteristic system dt y1 = -lam1 dx y1 - gamma1 y1 - delta1 y2,
        dt y2 = lam2 dx y2 - gamma2 y1 - delta2 y2, applied twice for the
        second derivative.
        """
        V = 0.0
        V_ext = 0.0
        for i, (h, v) in state.fields.items():
            d = self.data[i]
            y1, y2 = self._char_fields(d, h, v)
            contrib = float(np.trapezoid(d.f1c * y1**2 + d.f2c * y2**2, d.x_centers))
            V += contrib
            V_ext += contrib
            a, b = y1, y2
            for _ in range(2):
                da = np.gradient(a, d.x_centers, edge_order=1)
                db = np.gradient(b, d.x_centers, edge_order=1)
                a, b = (
                    -d.lam1c * da - d.gamma1 * a - d.delta1 * b,
                    d.lam2c * db - d.gamma2 * a - d.delta2 * b,
                )
                V_ext += float(np.trapezoid(d.f1c * a**2 + d.f2c * b**2, d.x_centers))
        return V, V_ext

    def boundary_form(self, state: SimState, faces=None) -> float:
        """B(t), the sum over channels of [f1 lam1 y1^2 - f2 lam2 y2^2]_0^L."""
        if faces is None:
            faces = self.face_states(state)
        total = 0.0
        for i in self.topo.channels:
            d = self.data[i]
            h0, v0, hL, vL = faces[i]
            s0 = self._shift_face(h0, float(d.Hf[0]), d.g)
            sL = self._shift_face(hL, float(d.Hf[-1]), d.g)
            total += d.f1_L * d.lam1_L * (vL + sL) ** 2 - d.f2_L * d.lam2_L * (vL - sL) ** 2
            total -= d.f1_0 * d.lam1_0 * (v0 + s0) ** 2 - d.f2_0 * d.lam2_0 * (v0 - s0) ** 2
        return total

    def _norms(self, state: SimState) -> dict[int, float]:
        return {
            i: math.sqrt(float(np.trapezoid(h**2 + v**2, self.data[i].x_centers)))
            for i, (h, v) in state.fields.items()
        }

    def _mass(self, state: SimState) -> float:
        return sum(float(np.sum(h)) * self.data[i].dx for i, (h, _) in state.fields.items())

    # -- driver --------------------------------------------------------------

    def run(
        self,
        perturbation: dict[int, Bump] | None,
        T: float,
        max_samples: int = DEFAULT_SAMPLES,
        sample_stride: int | None = None,
        fit_fraction: float = 0.2,
    ) -> LyapunovTrace:
        """Advance the perturbed steady state to time T and sample the decay.

        The time step is fixed from the initial CFL bound (re-checked every
        step). Samples land every sample_stride steps when given, otherwise
        about max_samples times over the run. The decay rate is fitted on
        ln V over [fit_fraction * T, T].
        """
        if T <= 0.0:
            raise ValueError("T must be positive")
        state = self.initial_state(perturbation)
        dt0 = self.cfl_dt(state)
        if self.mode == "nonlinear":
            # headroom for the instantaneous bound tightening as speeds grow
            dt0 *= 0.98
        nsteps = max(1, math.ceil(T / dt0))
        dt = T / nsteps
        if sample_stride is not None:
            stride = max(1, int(sample_stride))
        else:
            stride = max(1, nsteps // max_samples)

        times = [0.0]
        values = [self.lyapunov_value_state(state)]
        v_exts = [self.lyapunov_extended(state)[1]]
        bs = [self.boundary_form(state)]
        norms = self._norms(state)
        per_channel = {i: [val] for i, val in norms.items()}
        l2s = [math.sqrt(sum(val**2 for val in norms.values()))]
        masses = [self._mass(state)]
        flux_integrals = [0.0]

        flux_integral = 0.0
        for n in range(1, nsteps + 1):
            try:
                state, dflux = self.step(state, dt)
            except SimulationError as exc:
                exc.sim_time = (n - 1) * dt
                raise
            flux_integral += dflux
            if n % stride == 0 or n == nsteps:
                times.append(n * dt)
                values.append(self.lyapunov_value_state(state))
                v_exts.append(self.lyapunov_extended(state)[1])
                bs.append(self.boundary_form(state))
                norms = self._norms(state)
                for i, val in norms.items():
                    per_channel[i].append(val)
                l2s.append(math.sqrt(sum(val**2 for val in norms.values())))
                masses.append(self._mass(state))
                flux_integrals.append(flux_integral)

        self.final_state = state
        t = np.asarray(times)
        V = np.asarray(values)
        zero = bool(np.all(V == 0.0))
        window = (fit_fraction * T, T)
        if zero:
            nu_hat, r2 = math.nan, math.nan
        else:
            nu_hat, r2 = decay_fit((t, V), window)
        return LyapunovTrace(
            mode=self.mode,
            dt=dt,
            t=t,
            V=V,
            V_ext=np.asarray(v_exts),
            l2=np.asarray(l2s),
            boundary_B=np.asarray(bs),
            channel_l2={i: np.asarray(vals) for i, vals in per_channel.items()},
            mass_deviation=np.asarray(masses),
            mass_flux_integral=np.asarray(flux_integrals),
            root_flux=self.root_flux,
            nu_hat=nu_hat,
            r2=r2,
            fit_window=window,
            zero_trace=zero,
        )


def decay_fit(trace, window: tuple[float, float]) -> tuple[float, float]:
    """Least-squares decay rate of ln V over the window: (nu_hat, r_squared).

    trace is a LyapunovTrace or a plain (t, V) pair of arrays. Raises
    NonPositiveV when V is not strictly positive on the window.
    """
    if isinstance(trace, LyapunovTrace):
        t, V = trace.t, trace.V
    else:
        t, V = trace
    t = np.asarray(t, dtype=float)
    V = np.asarray(V, dtype=float)
    mask = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(mask) < 2:
        raise ValueError("fit window contains fewer than two samples")
    if np.any(V[mask] <= 0.0):
        raise NonPositiveV("V is not strictly positive on the fit window")
    logs = np.log(V[mask])
    spread = float(np.max(logs) - np.min(logs))
    if spread <= 1e-12 * max(1.0, float(np.max(np.abs(logs)))):
        return 0.0, 1.0
    slope, intercept = np.polyfit(t[mask], logs, 1)
    pred = slope * t[mask] + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return -float(slope), r2


def mass_balance(trace: LyapunovTrace) -> float:
    """Largest per-unit-time defect between stored mass and boundary influx."""
    dm = trace.mass_deviation - trace.mass_deviation[0]
    defect = np.abs(dm - trace.mass_flux_integral)
    t = np.maximum(trace.t, trace.dt)
    return float(np.max(defect / t))


def run(
    topo: NetworkTopology,
    profiles: dict[int, SteadyProfile],
    gains: dict[int, float],
    perturbation: dict[int, Bump] | None,
    T: float,
    mode: str = "linear",
    weights: WeightSet | None = None,
    max_samples: int = DEFAULT_SAMPLES,
    sample_stride: int | None = None,
    cfl: float = CFL_SAFETY,
) -> LyapunovTrace:
    """Build a simulator and advance the perturbed steady state to time T."""
    sim = NetworkSimulator(topo, profiles, gains, weights=weights, mode=mode, cfl=cfl)
    return sim.run(perturbation, T, max_samples=max_samples, sample_stride=sample_stride)
