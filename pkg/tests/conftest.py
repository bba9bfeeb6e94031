"""Shared grids, cached sweeps and the acceptance summary printer."""

from __future__ import annotations

import numpy as np
import pytest

from quasilocal import s2_spectral as s2
from quasilocal.asymptotics_evolution import (
    evolution_identities,
    kerr_invariance_experiment,
    total_quantities,
)
from quasilocal.spacetime_samplers import (
    BoostedSchwarzschild,
    KerrBL,
    Minkowski,
    SchwarzschildIsotropic,
)

SWEEP = np.geomspace(50.0, 1600.0, 8)
KERR_SWEEP = np.geomspace(100.0, 3200.0, 8)

MODELS = {
    "minkowski": Minkowski(),
    "schwarzschild": SchwarzschildIsotropic(1.0),
    "boosted": BoostedSchwarzschild(1.0, 0.5),
    "kerr": KerrBL(1.0, 0.5),
}

ACCEPTANCE = {}


def record(number, passed, detail):
    """Store one acceptance line; printed in the terminal summary."""
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture(scope="session")
def grid8():
    return s2.build_grid(8)


@pytest.fixture(scope="session")
def grid12():
    return s2.build_grid(12)


@pytest.fixture(scope="session")
def grid16():
    return s2.build_grid(16)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


class _Cache:
    """Lazily computed sweeps keyed by their arguments."""

    def __init__(self, grid):
        self.grid = grid
        self.store = {}

    def totals(self, name, radii=SWEEP, t=0.0):
        key = ("totals", name, tuple(np.round(radii, 9)), t)
        if key not in self.store:
            self.store[key] = total_quantities(MODELS[name], radii, self.grid, t)
        return self.store[key]

    def evolution(self):
        if "evolution" not in self.store:
            self.store["evolution"] = evolution_identities(MODELS["boosted"], SWEEP, self.grid)
        return self.store["evolution"]

    def kerr_invariance(self):
        if "kerr" not in self.store:
            self.store["kerr"] = kerr_invariance_experiment(1.0, 0.5, KERR_SWEEP, self.grid)
        return self.store["kerr"]


@pytest.fixture(scope="session")
def sweeps(grid12):
    return _Cache(grid12)
