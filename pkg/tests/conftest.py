import os

os.environ.setdefault("HIBCD_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from hibcd import cosmf, linalg  # noqa: E402

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion n")


def pytest_runtest_logreport(report):
    n = report.user_properties and dict(report.user_properties).get("criterion")
    if not n:
        return
    title = dict(report.user_properties).get("title", "")
    ok, _ = _ACCEPTANCE.get(n, (True, title))
    if report.when == "call" or report.failed:
        ok = ok and report.passed
        _ACCEPTANCE[n] = (ok, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, title = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture(autouse=True)
def _tag_acceptance(request):
    m = request.node.get_closest_marker("acceptance")
    if m is not None:
        request.node.user_properties.append(("criterion", m.args[0]))
        request.node.user_properties.append(("title", m.args[1]))


def random_simplex_columns(rng, N, L):
    return rng.dirichlet(np.ones(N), size=L).T


def toy_problem(seed=0, M=6, M_M=3, L_x=4, L_y=4, factor=2, N=3, variant="plain",
                tau=None, dense_eig=True, kernel_width=3, sigma=1.0):
    """Random data on a tiny grid; ``Y_*`` need not come from a factorization."""
    rng = np.random.default_rng(seed)
    G = linalg.build_spatial_operator(L_x, L_y, kernel_width, sigma, factor)
    F = linalg.build_band_average_F(M, M_M)
    Y_M = rng.random((M_M, G.L))
    Y_H = rng.random((M, G.L_H))
    return cosmf.CosmfProblem(Y_M, Y_H, F, G, N, variant=variant, tau=tau,
                              dense_eig=dense_eig)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    return toy_problem()
