import pytest

from enscond.spectrum import build_spectrum, s8

# criterion id -> list of (passed, detail); filled by the acceptance tests
_ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record_acceptance(criterion: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE):
        rows = _ACCEPTANCE[cid]
        ok = all(p for p, _ in rows)
        detail = "; ".join(d for _, d in rows)
        terminalreporter.write_line(f"ACCEPTANCE {cid:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def S8():
    return s8()


@pytest.fixture(scope="session")
def S10():
    """Five pairs, ``mu = 1..5``."""
    return build_spectrum({"mu": [1, 2, 3, 4, 5]})


@pytest.fixture(scope="session")
def S12():
    return build_spectrum({"mu": [1, 2, 3, 4, 5, 6]})


@pytest.fixture(scope="session")
def S16():
    return build_spectrum({"mu": [1, 2, 3, 4, 5, 6, 7, 8]})


@pytest.fixture(scope="session")
def graded():
    """S8 eigenvalues with a non-constant forcing perturbation."""
    return build_spectrum({"mu": [1, 2, 3, 4], "delta_pair": [0.0, -0.2, -0.4, -0.6], "name": "graded"})
