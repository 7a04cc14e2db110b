import numpy as np
import pytest

from grainflow.engine import schedule_params, run
from grainflow.kernels import Kernel
from grainflow.scenes import parse_scene, voronoi_scene
from grainflow.weights import const_weight

CIRCLE_SCENE = """domain plane bbox=(-1.5,-1.5,1.5,1.5)
labels 2
circle center=(0,0) r=1 n=512 inside=1 outside=2
"""

TWO_LINES_SCENE = """domain torus
labels 2
line y=0.25 left=1 right=2
line y=0.75 left=2 right=1
"""

CROSS_SCENE = """labels 4
cross at=(0,0) arms=1
"""


@pytest.fixture(scope="session")
def omega():
    return const_weight()


@pytest.fixture(scope="session")
def kernel05():
    return Kernel.make(0.05)


@pytest.fixture(scope="session")
def circle_net():
    # eps = 0.05 practical runs need mesh spacing <= eps/4
    return parse_scene(CIRCLE_SCENE, h_max=0.0125)


@pytest.fixture(scope="session")
def circle_trace(circle_net, kernel05, omega):
    """Full shrinking-circle run to extinction; shared by the law and
    diagnostics checks (the single most expensive fixture, ~3 min)."""
    sched = schedule_params("practical", 2, eps=0.05, dt=1e-4, steps=6000,
                            h_max=0.0125)
    return run(circle_net.copy(), sched, kernel=kernel05, omega=omega,
               frame_every=200)


@pytest.fixture(scope="session")
def circle_trace_steps(circle_net, kernel05, omega):
    """Short circle run retaining per-step velocity data for the motion-law
    residual diagnostic."""
    sched = schedule_params("practical", 2, eps=0.05, dt=1e-4, steps=500,
                            h_max=0.0125)
    return run(circle_net.copy(), sched, kernel=kernel05, omega=omega,
               frame_every=50, keep_steps=True)


@pytest.fixture(scope="session")
def grain_trace(kernel05, omega):
    """8-grain torus run, 500 steps (per-step inequality suite)."""
    net = voronoi_scene(8, 42, h_max=0.0125)
    sched = schedule_params("practical", 2, eps=0.05, dt=1e-4, steps=500,
                            h_max=0.0125)
    return run(net, sched, kernel=kernel05, omega=omega, frame_every=100)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
