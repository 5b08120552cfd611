import numpy as np
import pytest

from ibigsam import IllConditionedSpec, gen_lasso, gen_nnls, toy_bilevel


@pytest.fixture(scope="session")
def toy():
    return toy_bilevel()


@pytest.fixture(scope="session")
def nnls_small():
    return gen_nnls(IllConditionedSpec(50, 50, seed=0))


@pytest.fixture(scope="session")
def lasso_small():
    return gen_lasso(50, 100, seed=0)


@pytest.fixture(scope="session")
def shipped(toy, nnls_small, lasso_small):
    return {"toy": toy, "nnls": nnls_small, "lasso": lasso_small}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
