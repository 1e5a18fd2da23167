import numpy as np
import pytest

from prandtl_expander import assembly as asm
from prandtl_expander import euler1 as e1
from prandtl_expander import prandtl0 as p0
from prandtl_expander import prandtl1 as p1
from prandtl_expander.problem import GridConfig, benchmark_spec, trivial_chain_spec


def small_grids() -> GridConfig:
    return GridConfig(nx=49, ny=97, nz=97, ns_nx=32, ns_ny=48)


@pytest.fixture(scope="session")
def spec_small():
    return benchmark_spec(epsilon_list=(0.04, 0.01, 0.0025), grids=small_grids())


@pytest.fixture(scope="session")
def half_line_small(spec_small):
    return p0.solve_half_line(spec_small)


@pytest.fixture(scope="session")
def stage_small(spec_small, half_line_small):
    """One fully built viscosity stage at eps = 0.01 on the reduced grids."""
    state, hl = half_line_small
    eps = 0.01
    eo = e1.solve_euler_one(spec_small, hl, eps)
    po = p1.solve_prandtl_one(spec_small, hl, eo, eps)
    pz = p0.cutoff_to_strip(hl, eps, spec_small.chi, spec_small)
    es = asm.assemble(spec_small, eps, pz, eo, po)
    asm.residual_app(spec_small, es)
    return {"spec": spec_small, "state": state, "hl": hl, "eps": eps,
            "eo": eo, "po": po, "pz": pz, "es": es}


@pytest.fixture(scope="session")
def trivial_stage():
    """Trivial chain (u_b = u_e, zero layer data) at default grids, eps 0.01."""
    spec = trivial_chain_spec(epsilon_list=(0.01,))
    state, hl = p0.solve_half_line(spec)
    eo = e1.solve_euler_one(spec, hl, 0.01)
    po = p1.solve_prandtl_one(spec, hl, eo, 0.01)
    pz = p0.cutoff_to_strip(hl, 0.01, spec.chi, spec)
    es = asm.assemble(spec, 0.01, pz, eo, po)
    return {"spec": spec, "state": state, "hl": hl, "eo": eo, "po": po, "pz": pz, "es": es}
