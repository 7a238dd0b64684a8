import math

import numpy as np
import pytest

from blockmix.errors import DataError
from blockmix.models import ModelStructure, Responsibilities
from blockmix.structure import complexity, map_partition, validate_structure


def test_valid_structure_has_no_violations():
    s = ModelStructure(B=2, G=(2, 3), omega=(0, 0, 0, 1, 1, 1))
    verdict = validate_structure(s, d=6, B_max=3, G_max=3)
    assert verdict.ok
    assert verdict.violations == ()


def test_small_block_is_reported_one_based():
    s = ModelStructure(B=2, G=(2, 2), omega=(0, 0, 0, 0, 1, 1))
    verdict = validate_structure(s, d=6, B_max=3, G_max=3)
    assert not verdict.ok
    assert "|Ω_2| ≥ 3 fails (2 variables)" in verdict.violations


def test_limits_and_empty_blocks():
    s = ModelStructure(B=3, G=(4, 1, 1), omega=(0, 0, 0, 1, 1, 1))
    verdict = validate_structure(s, d=6, B_max=2, G_max=3)
    assert "B=3 exceeds B_max=2" in verdict.violations
    assert "G_1=4 exceeds G_max=3" in verdict.violations
    assert "block 3 is empty" in verdict.violations


def test_wrong_dimension():
    s = ModelStructure(B=1, G=(2,), omega=(0, 0, 0))
    assert not validate_structure(s, d=4, B_max=3, G_max=3).ok


@pytest.mark.parametrize(
    "B,G,omega",
    [
        (0, (), ()),
        (2, (2,), (0, 1)),
        (1, (0,), (0, 0, 0)),
        (2, (2, 2), (0, 2, 1)),
    ],
)
def test_invalid_structures_raise(B, G, omega):
    with pytest.raises(DataError):
        ModelStructure(B=B, G=G, omega=omega)


def test_complexity_counts_free_parameters():
    s = ModelStructure(B=2, G=(2, 3), omega=(0, 0, 0, 1, 1, 1))
    # (2-1) + (3-1) + 3·(4-1)·2 + 3·(4-1)·3
    assert complexity(s, (4,) * 6) == 48


def test_complexity_needs_one_bin_count_per_variable():
    s = ModelStructure(B=1, G=(2,), omega=(0, 0, 0))
    with pytest.raises(DataError):
        complexity(s, (3, 3))


def test_map_partition_ties_go_to_the_smallest_label():
    resp = Responsibilities((np.array([[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]]),))
    labels = map_partition(resp).labels[0]
    np.testing.assert_array_equal(labels, [0, 1, 0])


def test_block_variables_in_order():
    s = ModelStructure(B=2, G=(1, 1), omega=(1, 0, 1, 0))
    assert s.block_variables(0) == (1, 3)
    assert s.block_variables(1) == (0, 2)
    assert s.block_sizes == (2, 2)
    assert math.isclose(sum(s.block_sizes), s.d)
