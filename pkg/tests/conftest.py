"""Shared fixtures: closed-form steady-flow oracles and network generators.

The potential helpers invert the steady depth equation with plain algebra so
library output can be checked against something that never touches an ODE
solver.
"""

import math

import numpy as np
import pytest

from channet.gains import is_admissible
from channet.steady import critical_depth, integrate_channel_steady, solve_network_steady
from channet.topology import ChannelSpec, NetworkTopology

G = 9.81
SUITE_SEED = 20240817
SUITE_SIZE = 100
P_CHOICES = (0.0, 1.0, 4.0 / 3.0, 2.0)


def depth_potential(H, flux, exponent):
    """Antiderivative of g H^(p+2) - Q^2 H^(p-1) in H.

    Along a steady profile its value drops linearly: potential(H(x)) equals
    potential(H(0)) - g C Q^2 x, which pins the profile without integrating
    anything.
    """
    if exponent == 0.0:
        return G * H**3 / 3.0 - flux * flux * np.log(H)
    return G * H ** (exponent + 3.0) / (exponent + 3.0) - flux * flux * H**exponent / exponent


def closed_form_blowup(H0, flux, friction, exponent):
    """Abscissa where the steady profile hits critical depth."""
    Hc = critical_depth(flux)
    drop = depth_potential(H0, flux, exponent) - depth_potential(Hc, flux, exponent)
    return drop / (G * friction * flux * flux)


def draw_channel(rng, cid=1, cells=32, length_fraction=0.8):
    """Random subcritical channel spanning the supported parameter box."""
    flux = rng.uniform(0.2, 3.0)
    H0 = rng.uniform(max(0.6, 1.7 * critical_depth(flux)), 5.0)
    friction = rng.uniform(1e-4, 5e-3)
    p = P_CHOICES[rng.integers(len(P_CHOICES))]
    L = length_fraction * closed_form_blowup(H0, flux, friction, p)
    spec = ChannelSpec(id=cid, length=L, friction=friction, friction_exponent=p, cells=cells)
    return spec, H0, flux


@pytest.fixture(scope="session")
def channel_suite():
    """100 random steady profiles at 0.8 of the blow-up length each."""
    rng = np.random.default_rng(SUITE_SEED)
    out = []
    for _ in range(SUITE_SIZE):
        spec, H0, flux = draw_channel(rng)
        out.append(integrate_channel_steady(spec, H0, flux))
    return out


def draw_channel_into(rng, cid, inlet_depth, flux, cells=24):
    """Channel fed from a given upstream depth.

    Length is capped in absolute terms: on long flat channels the weight
    profiles grow like exp of the accumulated coupling integrals, and past
    a few e-folds the interior positivity margin (proportional to epsilon
    over eta) drops below any workable threshold.
    """
    friction = rng.uniform(2e-4, 3e-3)
    p = P_CHOICES[rng.integers(len(P_CHOICES))]
    if flux == 0.0:
        L = rng.uniform(5.0, 60.0)
    else:
        L = min(
            rng.uniform(0.05, 0.3) * closed_form_blowup(inlet_depth, flux, friction, p),
            rng.uniform(1500.0, 6000.0),
        )
    return ChannelSpec(id=cid, length=L, friction=friction, friction_exponent=p, cells=cells)


def draw_star(rng, n_branches, cells=24):
    """Random star: one trunk feeding n_branches terminal channels."""
    flux = rng.uniform(0.5, 3.0)
    H0 = rng.uniform(max(1.2, 1.7 * critical_depth(flux)), 4.0)
    trunk = draw_channel_into(rng, 1, H0, flux)
    H_B = integrate_channel_steady(trunk, H0, flux).outlet_depth
    u = rng.uniform(0.5, 1.5, n_branches)
    fracs = tuple(float(f) for f in u / np.sum(u))
    chans = {1: trunk}
    for j in range(n_branches):
        chans[2 + j] = draw_channel_into(rng, 2 + j, H_B, fracs[j] * flux, cells=cells)
    topo = NetworkTopology(
        channels=chans,
        root_channel=1,
        junctions={1: tuple(range(2, 2 + n_branches))},
        split_fractions={1: fracs},
    )
    return topo, H0, flux


def draw_tree(rng, cells=24):
    """Random two-level tree: trunk, 2-3 children, one child subdivided again."""
    flux = rng.uniform(0.5, 3.0)
    H0 = rng.uniform(max(1.2, 1.7 * critical_depth(flux)), 4.0)
    trunk = draw_channel_into(rng, 1, H0, flux)
    H_B = integrate_channel_steady(trunk, H0, flux).outlet_depth
    n_child = 2 + int(rng.integers(2))
    u = rng.uniform(0.5, 1.5, n_child)
    fracs = tuple(float(f) for f in u / np.sum(u))
    chans = {1: trunk}
    junctions = {1: tuple(range(2, 2 + n_child))}
    splits = {1: fracs}
    next_id = 2 + n_child
    for j in range(n_child):
        chans[2 + j] = draw_channel_into(rng, 2 + j, H_B, fracs[j] * flux, cells=cells)
    deep = 2 + int(rng.integers(n_child))
    flux_deep = fracs[deep - 2] * flux
    prof_deep = integrate_channel_steady(chans[deep], H_B, flux_deep)
    n_grand = 2 + int(rng.integers(2))
    u2 = rng.uniform(0.5, 1.5, n_grand)
    fr2 = tuple(float(f) for f in u2 / np.sum(u2))
    junctions[deep] = tuple(range(next_id, next_id + n_grand))
    splits[deep] = fr2
    for j in range(n_grand):
        chans[next_id + j] = draw_channel_into(
            rng, next_id + j, prof_deep.outlet_depth, fr2[j] * flux_deep, cells=cells
        )
    topo = NetworkTopology(
        channels=chans, root_channel=1, junctions=junctions, split_fractions=splits
    )
    return topo, H0, flux


def admissible_gain(rng, profile):
    """Random gain outside the forbidden interval of the given profile.

    Positive gains of boundary-impedance size reflect strongly and leave a
    wide decay margin on every channel shape. Gains far below the lower
    endpoint push the reflection magnitude just under one, which only clears
    the threshold when the interval leaves a wide window, so those draws are
    restricted to such profiles.
    """
    rec = is_admissible(profile, 0.0)
    a, b = rec.forbidden
    s = math.sqrt(profile.gravity / profile.outlet_depth)
    window = 1.0 - (rec.eta_bar_L / rec.phi_L) ** 2
    if not rec.half_line and window > 0.05 and rng.uniform() < 0.2:
        return a - rng.uniform(0.5, 3.0) * max(abs(a), s)
    return max(b, 0.0) + rng.uniform(0.1, 2.0) * s * (1 if rng.uniform() < 0.9 else 3)


def small_star(cells=100):
    """Fixed 3-branch star used by the simulation and CLI tests."""
    chans = {
        1: ChannelSpec(id=1, length=80.0, friction=2e-3, friction_exponent=1.0, cells=cells),
        2: ChannelSpec(id=2, length=60.0, friction=1.5e-3, friction_exponent=1.0, cells=cells),
        3: ChannelSpec(id=3, length=50.0, friction=1e-3, friction_exponent=4.0 / 3.0, cells=cells),
        4: ChannelSpec(id=4, length=40.0, friction=2e-3, friction_exponent=0.0, cells=cells),
    }
    return NetworkTopology(
        channels=chans,
        root_channel=1,
        junctions={1: (2, 3, 4)},
        split_fractions={1: (0.5, 0.3, 0.2)},
    )


STAR_ROOT_DEPTH = 2.0
STAR_ROOT_FLUX = 1.0
STAR_GAINS = {2: 0.0, 3: 0.0, 4: 0.0}


@pytest.fixture(scope="session")
def star_profiles():
    topo = small_star()
    return topo, solve_network_steady(topo, STAR_ROOT_DEPTH, STAR_ROOT_FLUX)
