from __future__ import annotations

import json
from pathlib import Path

import pytest

from ionthresh.model import CouplingSpec, ElectronGrid, ModelSpec, PotentialSpec, Profile, assemble_hamiltonian

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def golden_spec(**changes) -> ModelSpec:
    """One electron in a Gaussian well, L = 32, n = 64, M = 4, N_max = 2, alpha = 0.1."""
    spec = ModelSpec(
        grid=ElectronGrid(32.0, 64),
        coupling=CouplingSpec(0.1, 2.0, 0.3),
        potentials=PotentialSpec(v=Profile("gaussian", -2.0, 1.0)),
        n_modes=4,
        n_max=2,
    )
    return spec.with_(**changes) if changes else spec


def small_spec(**changes) -> ModelSpec:
    """A small instance for fast structural tests."""
    spec = ModelSpec(
        grid=ElectronGrid(8.0, 16),
        coupling=CouplingSpec(0.2, 2.0, 0.3),
        potentials=PotentialSpec(v=Profile("gaussian", -2.0, 1.0)),
        n_modes=3,
        n_max=2,
    )
    return spec.with_(**changes) if changes else spec


def load_config(name: str) -> dict:
    return json.loads((CONFIGS / name).read_text())


@pytest.fixture(scope="session")
def golden():
    return golden_spec()


@pytest.fixture(scope="session")
def golden_H(golden):
    return assemble_hamiltonian(golden)


@pytest.fixture(scope="session")
def small_H():
    return assemble_hamiltonian(small_spec())


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[tuple[int, str], tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str, part: str = "") -> None:
    ACCEPTANCE[(number, part)] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, part in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[(number, part)]
        label = f"{number}{part}"
        terminalreporter.write_line(f"criterion {label:>3}: {'PASS' if passed else 'FAIL'}  {detail}")
