import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rkgfem import Domain, build_dof_map, build_uniform_mesh
from rkgfem.assembly import assemble_operator_set
from rkgfem.fields import zero_field

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_ops(kind, nx=4, ny=None, domain=(-1.0, 1.0, -1.0, 1.0), potential=None, dirichlet=True):
    mesh = build_uniform_mesh(Domain(*domain), nx, ny or nx)
    dofs = build_dof_map(mesh, kind, dirichlet=dirichlet)
    return assemble_operator_set(dofs, potential or zero_field())


def random_field(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
