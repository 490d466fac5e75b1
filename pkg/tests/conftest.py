import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mixedmetro import experiment, gate, lindblad  # noqa: E402

ACCEPTANCE = {}
PHYSICALITY = {"states": 0, "trace": 0.0, "herm": 0.0, "min_eig": np.inf}


def _record_state(rho):
    tr, herm, lam = lindblad.physicality(rho)
    PHYSICALITY["states"] += 1
    PHYSICALITY["trace"] = max(PHYSICALITY["trace"], tr)
    PHYSICALITY["herm"] = max(PHYSICALITY["herm"], herm)
    PHYSICALITY["min_eig"] = min(PHYSICALITY["min_eig"], lam)


def _is_state(rho):
    tr, herm, lam = lindblad.physicality(rho)
    return tr < 1e-12 and herm < 1e-12 and lam > -1e-12


def _dense_states(blocks):
    r00 = np.asarray(blocks["00"])
    flat = {k: np.asarray(v).reshape((-1,) + r00.shape[-2:]) for k, v in blocks.items()}
    for i in range(flat["00"].shape[0]):
        yield lindblad.blocks_to_dense({k: v[i] for k, v in flat.items()})


@pytest.fixture(autouse=True, scope="session")
def physicality_monitor():
    """Record trace, Hermiticity and positivity of every gate output whose input was a state."""
    orig_gate, orig_int = lindblad.controlled_gate, lindblad.integrate

    def watched_gate(blocks, *args, **kw):
        out = orig_gate(blocks, *args, **kw)
        if not kw.get("adjoint", False):
            ins = list(_dense_states(blocks))
            if all(_is_state(r) for r in ins):
                for r in _dense_states(out):
                    _record_state(r)
        return out

    def watched_integrate(rho0, *args, **kw):
        out = orig_int(rho0, *args, **kw)
        if _is_state(np.asarray(rho0)):
            _record_state(out)
        return out

    patches = [(lindblad, "controlled_gate", watched_gate), (experiment, "controlled_gate", watched_gate),
               (lindblad, "integrate", watched_integrate), (gate, "integrate", watched_integrate)]
    saved = [(m, n, getattr(m, n)) for m, n, _ in patches]
    for m, n, f in patches:
        setattr(m, n, f)
    yield PHYSICALITY
    for m, n, f in saved:
        setattr(m, n, f)


@pytest.fixture
def acceptance():
    def record(number, ok, detail):
        ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))

    return record


def pytest_collection_modifyitems(items):
    # The physicality criterion summarises every gate run before it.
    last = [i for i in items if "criterion_06" in i.name]
    items[:] = [i for i in items if i not in last] + last


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        for ok, detail in ACCEPTANCE[number]:
            terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
