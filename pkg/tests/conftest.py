from pathlib import Path

import numpy as np
import pytest

from hypharm import cut as C
from hypharm import harmonic as H
from hypharm import uniformize as U
from hypharm.fuchsian import regular_polygon
from hypharm.mesh import induced_metric, load_mesh

DATA = Path(__file__).parent / "data"

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


class Pipeline:
    """Flattened genus-g mesh, weights, cut and Euclidean initialization."""

    def __init__(self, genus: int):
        self.mesh = load_mesh(DATA / f"genus{genus}.off")
        self.flow = U.hyperbolic_yamabe_flow(self.mesh, induced_metric(self.mesh))
        self.lengths = self.flow.lengths
        self.c = U.canonical_weights(self.mesh, self.lengths)
        self.cw, self.n_reset = U.apply_positivity_policy(self.c)
        self.ew, _ = U.apply_positivity_policy(U.euclidean_cotangent_weights(self.mesh, self.lengths))
        self.polygon = regular_polygon(genus)
        self.cut = C.cut_surface(self.mesh, self.polygon)
        self.r0 = H.initialize_euclidean(self.cut, self.polygon, self.ew, self.lengths, weights=self.cw)
        self._fast = None

    @property
    def fast(self):
        """Converged map with a step of 1 / max weighted degree."""
        if self._fast is None:
            tau = 1.0 / H.weighted_degree(self.r0).max()
            self._fast = H.descend(self.r0, tau=tau)
        return self._fast


@pytest.fixture(scope="session")
def g2():
    return Pipeline(2)


@pytest.fixture(scope="session")
def g3():
    return Pipeline(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
