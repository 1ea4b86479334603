import logging

import numpy as np
import pytest

from clinbp.cohort import CohortTable, ColumnSpec, SyntheticConfig, generate_synthetic_pair


def make_table(X, names=None, targets=None, groups=None, tags=None, source_tag="internal"):
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    names = names or [f"f{j}" for j in range(d)]
    tags = tags or ["vitals"] * d
    schema = [ColumnSpec(nm, "numeric", tg) for nm, tg in zip(names, tags)]
    if targets is None:
        rng = np.random.default_rng(0)
        targets = np.column_stack([rng.normal(120, 10, n), rng.normal(70, 8, n)])
    if groups is None:
        groups = [f"g{i}" for i in range(n)]
    return CohortTable(schema, X, np.asarray(targets, float), np.asarray(groups, dtype=object), source_tag)


@pytest.fixture(scope="session")
def synthetic_pair():
    return generate_synthetic_pair(SyntheticConfig(n_patients=600, seed=3))


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.ERROR, logger="clinbp")
    yield


# acceptance criteria outcomes, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
