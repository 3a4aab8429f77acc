import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from system_claims import ClaimSet, ObjectDomain, parse_claims  # noqa: E402
from system_priors import Hyperparams  # noqa: E402
from system_sampler import sample_planted_dataset  # noqa: E402

SMALL_CSV = """source_id,object_id,value_label
s1,o1,yes
s2,o1,yes
s3,o1,no
s1,o2,no
s3,o2,no
s4,o2,yes
s2,o3,yes
s4,o3,no
"""


@pytest.fixture
def small_csv() -> str:
    return SMALL_CSV


@pytest.fixture
def small_claims() -> ClaimSet:
    return parse_claims(SMALL_CSV)


@pytest.fixture
def default_hyperparams() -> Hyperparams:
    return Hyperparams(truncation=4)


@pytest.fixture
def empty_claims() -> ClaimSet:
    return ClaimSet([], [], [], [], [])


def binary_objects(count: int):
    return [ObjectDomain(f'o{m}', ('a', 'b')) for m in range(count)]


@pytest.fixture
def planted_claims():
    """Two reliable groups and one unreliable group over 40 ternary objects."""
    h = Hyperparams(kappa=5.0, eta_reliable=10.0, theta_reliable=1.0, truncation=10)
    rng = np.random.default_rng(11)
    return sample_planted_dataset(h, [6, 4, 4], [True, True, False], 40, 3, 0.8, rng)
