"""Shared fixtures: small and full-size converged meshes and flow states."""

import dataclasses

import numpy as np
import pytest

from foilopt import flow, geometry as geo, meshgen as mg
from foilopt.config import GridSize, RunConfig
from foilopt.flow import Af2Params
from foilopt.meshgen import FarFieldSpec, SmootherParams

SMALL = dict(i_max=25, j_max=11, radius=8.0)


def small_config(mesh_tol=1e-8, flow_tol=1e-8):
    return RunConfig(
        grid=GridSize(i_max=SMALL["i_max"], j_max=SMALL["j_max"]),
        farfield=dataclasses.replace(FarFieldSpec(), radius=SMALL["radius"]),
        mesh_solver=SmootherParams(tol=mesh_tol),
        flow_solver=Af2Params(tol=flow_tol, max_iters=20000),
    )


@pytest.fixture(scope="session")
def naca_curve_small():
    return geo.sample_boundary(geo.naca0012_cst(), geo.CstConfig(), SMALL["i_max"])


@pytest.fixture(scope="session")
def farfield_small():
    return FarFieldSpec(radius=SMALL["radius"])


@pytest.fixture(scope="session")
def smooth_grid_small(naca_curve_small, farfield_small):
    g0 = mg.parabolic_march(naca_curve_small, farfield_small, SMALL["j_max"])
    grid, info = mg.elliptic_smooth(g0, SmootherParams(tol=1e-10))
    return grid


@pytest.fixture(scope="session")
def flow_state_small(smooth_grid_small):
    fs = flow.FreestreamSpec(mach=0.7)
    state = flow.solve_flow(smooth_grid_small, fs, Af2Params(tol=1e-10, max_iters=20000))
    return state


@pytest.fixture(scope="session")
def annulus_grid():
    """Polar annulus: exact Laplace grid, orthogonal, positive Jacobian."""
    ni, nj = 32, 9
    theta = -2.0 * np.pi * np.arange(ni) / ni
    r = np.geomspace(1.0, 4.0, nj)
    x = 0.5 + r[None, :] * np.cos(theta)[:, None]
    y = r[None, :] * np.sin(theta)[:, None]
    return mg.Grid(x, y)
