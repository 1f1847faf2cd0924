import numpy as np
import pytest

from tsgp.expr import PrimitiveSet
from tsgp.model import Hyperparams, Vocabulary
from tsgp.model.transformer import SdTransformer


@pytest.fixture(scope="session")
def prims():
    return PrimitiveSet()


@pytest.fixture(scope="session")
def vocab(prims):
    return Vocabulary.from_primitives(prims)


@pytest.fixture(scope="session")
def tiny_hyper():
    return Hyperparams(d_model=32, n_heads=4, n_encoder_layers=1,
                       n_decoder_layers=1)


@pytest.fixture(scope="session")
def tiny_model(tiny_hyper, vocab):
    return SdTransformer(tiny_hyper, vocab, rng=np.random.default_rng(11))
