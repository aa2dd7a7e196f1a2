import numpy as np
import pytest

from hdrelay.gaussian import random_network
from hdrelay.model import CutValueTable, NodeLayout, Schedule

ACCEPTANCE_LINES = []


def gaussian_table(rng, n, antennas=1, switching="lockstep", m_source=1, m_dest=1):
    net = random_network(rng, n, antennas, m_source, m_dest, switching)
    return CutValueTable.from_network(net), net


def mixture_table(rng, n, n_states=None):
    """Nonnegative random mixtures of Gaussian per-state cut functions."""
    base, _ = gaussian_table(rng, n)
    F = base.matrix()
    S = n_states or F.shape[0]
    W = rng.random((S, F.shape[0]))
    W *= rng.random((S, 1)) < 0.9
    return CutValueTable.explicit(W @ F / F.shape[0])


def graph_cut_values(rng, n, density=0.5):
    """Undirected weighted cut function plus a random modular term."""
    w = rng.random((n, n)) * (rng.random((n, n)) < density)
    w = np.triu(w, 1)
    w = w + w.T
    masks = np.arange(1 << n)
    ind = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    cut = np.einsum("ai,ij,aj->a", ind, w, 1 - ind)
    return cut + ind @ rng.normal(0, 1, n)


def concave_card_values(rng, n):
    masks = np.arange(1 << n)
    ind = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    k = ind.sum(axis=1)
    a = rng.uniform(0.5, 3)
    return a * np.sqrt(k) + np.minimum(k, rng.integers(1, n + 1)) + ind @ rng.normal(0, 1, n)


def ifix_values(rng, n):
    """Cut flow of a random schedule on a Gaussian net, minus a modular term."""
    table, _ = gaussian_table(rng, n)
    lam = rng.dirichlet(np.ones(table.n_states) * 0.3)
    masks = np.arange(1 << n)
    ind = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    return table.cut_vector(Schedule(lam)) - ind @ rng.uniform(0, 1.5, n)


def line_layout(switching="independent"):
    return NodeLayout(1, 1, (2,), 1, switching)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
