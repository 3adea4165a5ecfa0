import numpy as np
import pytest

from fibercond.density import standard_gaussian
from fibercond.fiber import find_seed, trace_fiber
from fibercond.geometry import ellipse_operator


@pytest.fixture(scope="session")
def ellipse_op():
    return ellipse_operator(1.0, 0.5)


@pytest.fixture(scope="session")
def gauss2():
    return standard_gaussian(2)


@pytest.fixture(scope="session")
def trace101(ellipse_op):
    """Shared y=1.01 ellipse trace at step 1e-3, seeded at the major pole."""
    seed = find_seed(ellipse_op, [1.01], np.array([2.0, 0.0]))
    return trace_fiber(ellipse_op, [1.01], seed, step=1e-3)
