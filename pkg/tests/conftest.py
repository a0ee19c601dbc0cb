from pathlib import Path

import pytest

from frachom.meshkit import build_control_volumes, parse_msh

ROOT = Path(__file__).resolve().parents[1]
MESH_DIR = ROOT / "meshes"
CORPUS = sorted(p.name for p in MESH_DIR.glob("*.msh"))


def mesh_path(name: str) -> Path:
    return MESH_DIR / name


@pytest.fixture(scope="session")
def load_mesh():
    cache = {}

    def get(name: str):
        if name not in cache:
            mesh = parse_msh(mesh_path(name))
            cache[name] = (mesh, build_control_volumes(mesh))
        return cache[name]

    return get


@pytest.fixture
def write_msh_text(tmp_path):
    def make(text: str, name: str = "m.msh") -> Path:
        p = tmp_path / name
        p.write_text(text)
        return p

    return make


# (label, passed, detail) rows filled by test_acceptance
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    errored = [r.nodeid for r in terminalreporter.stats.get("failed", []) if "test_acceptance" in r.nodeid]
    seen = {label.split()[0] for label, _, _ in ACCEPTANCE}
    for nodeid in errored:
        num = nodeid.split("test_criterion_")[-1].split("_")[0]
        if num not in seen:
            terminalreporter.write_line(f"[FAIL] {num}: raised before reporting ({nodeid})")
