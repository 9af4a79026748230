import numpy as np
import pytest

from fedsym.dataset import index_labels, index_of, synth_classification


@pytest.fixture(scope="session")
def store():
    return synth_classification(10, 500, 16, 4.0, 0)


@pytest.fixture(scope="session")
def index(store):
    return index_of(store)


@pytest.fixture(scope="session")
def big_index():
    # 10 classes x 5000 samples, labels only
    return index_labels(np.repeat(np.arange(10), 5000), 10)


# acceptance summary ------------------------------------------------------

CRITERIA = {
    1: "FedSym exactness",
    2: "sigma-bound consistency",
    3: "entropy monotonicity in sigma",
    4: "Dirichlet range overlap",
    5: "monotone FL difficulty",
    6: "FedSym spread exceeds Dirichlet spread",
    7: "CKA distinction",
    8: "property suites",
}

_outcomes: dict = {}


def pytest_runtest_logreport(report):
    n = dict(report.user_properties).get("criterion")
    if n is None or (report.when != "call" and report.passed):
        return
    entry = _outcomes.setdefault(n, {"ok": True, "notes": []})
    entry["ok"] &= report.passed
    if report.when == "call":
        entry["notes"] += [f"{k}={v}" for k, v in report.user_properties if k != "criterion"]


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        request.node.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        entry = _outcomes.get(n)
        if entry is None:
            status, notes = "NOT RUN", ""
        else:
            status = "PASS" if entry["ok"] else "FAIL"
            notes = "  " + ", ".join(entry["notes"]) if entry["notes"] else ""
        terminalreporter.write_line(f"criterion {n} {status}: {name}{notes}")
