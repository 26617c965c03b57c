import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from arbilomod.assembly import assemble_affine
from arbilomod.decomposition import Extender, classify
from arbilomod.geometry import GeometryModel
from arbilomod.greedy import CellGreedyConfig
from arbilomod.mesh import build_dof_handler, build_mesh
from arbilomod.pipeline import Model
from arbilomod.training import TrainingConfig

settings.register_profile("ci", deadline=None, max_examples=25, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


TOY_RECTS = ((0.0, 0.25, 0.125, 0.75), (0.125, 0.5, 0.875, 0.625),
             (0.875, 0.25, 1.0, 0.75))


def toy_geometry():
    """Bars-and-channel structure aligned with the 1/8 grid."""
    return GeometryModel(rectangles=TOY_RECTS)


def random_free_field(dofs, n_total, rng, k=None):
    shape = (n_total,) if k is None else (n_total, k)
    out = np.zeros(shape)
    out[dofs.free_dofs] = rng.standard_normal(
        (len(dofs.free_dofs),) if k is None else (len(dofs.free_dofs), k))
    return out


@pytest.fixture(scope="session")
def small():
    """n=8, 4x4 domains, nontrivial conductivity: the workhorse instance."""
    mesh = build_mesh(8)
    dofs = build_dof_handler(mesh, 4)
    decomp = classify(mesh, dofs)
    geom = toy_geometry()
    system = assemble_affine(mesh, geom, dofs)
    extender = Extender(system, decomp, mu_bar=1e5)
    return {"mesh": mesh, "dofs": dofs, "decomp": decomp, "geom": geom,
            "system": system, "extender": extender}


@pytest.fixture(scope="session")
def small_model():
    """Built pipeline on the n=16, 4x4 instance with moderate tolerances."""
    model = Model(toy_geometry(), n=16, domains=4,
                  training=TrainingConfig(samples=12, eps_train=1e-3, seed=5),
                  greedy=CellGreedyConfig(eps_greedy=1e-2))
    model.build_initial()
    return model
