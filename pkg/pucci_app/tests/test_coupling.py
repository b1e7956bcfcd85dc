"""
耦合结构测试：非零模式、块三角形、(H3)/(H4)
"""

import itertools

import numpy as np
import pytest

from src.core.coupling import (
    CouplingMatrix,
    block_triangular_form,
    check_H3,
    check_H4,
    is_fully_coupled,
    is_irreducible,
    nonzero_pattern,
)
from src.core.exceptions import CouplingError
from src.core.grid import VectorField, build_grid


@pytest.fixture
def grid():
    return build_grid(1, [0.0, 1.0], 9)


def test_diagonal_coupling_violates_H3(grid):
    C = CouplingMatrix.constant(grid, [[1, 0], [0, 0]])
    pattern, counts = nonzero_pattern(C)
    assert pattern.tolist() == [[True, False], [False, False]]
    assert counts[0, 0] == grid.size
    form = block_triangular_form(C)
    assert form.n_blocks == 2
    h3 = check_H3(form, C)
    assert not h3["passed"]
    assert [form.blocks[k] for k in h3["offending_blocks"]] == [(1,)]


def test_full_coupling(grid):
    C = CouplingMatrix.constant(grid, [[1, 1], [1, 1]])
    form = block_triangular_form(C)
    assert form.n_blocks == 1
    assert is_fully_coupled(C)
    assert check_H3(form, C)["passed"]


def test_triangular_system_order(grid):
    """c₂₁ ≠ 0：第二个方程依赖第一个分量，分量 1 的块在前"""
    C = CouplingMatrix.constant(grid, [[1, 0], [1, 1]])
    form = block_triangular_form(C)
    assert form.blocks == [(0,), (1,)]
    assert form.offsets == (0, 1, 2)
    assert not is_fully_coupled(C)


def test_coupling_below_threshold_is_zero(grid):
    C = CouplingMatrix.constant(grid, [[1, 1e-14], [1e-14, 1]])
    assert not is_fully_coupled(C)


def test_negative_coupling_rejected(grid):
    with pytest.raises(CouplingError) as info:
        CouplingMatrix.constant(grid, [[1, -1], [0, 1]])
    assert info.value.context["entry"] == (0, 1)


def test_blocks_upper_triangle_zero():
    """块三角形中，后面的块不影响前面的块"""
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        pattern = rng.random((n, n)) < 0.3
        form = block_triangular_form(pattern)
        assert sorted(form.permutation) == list(range(n))
        for k, first in enumerate(form.blocks):
            for later in form.blocks[k + 1:]:
                assert not any(pattern[i, j] for i in first for j in later)


def test_fully_coupled_matches_bipartition_definition():
    """n ≤ 4 的全部非零模式与二分定义逐一核对"""
    for n in range(1, 4):
        for bits in itertools.product((False, True), repeat=n * n):
            pattern = np.array(bits).reshape(n, n)
            assert is_fully_coupled(pattern) == is_irreducible(pattern)
    rng = np.random.default_rng(11)
    for _ in range(300):
        pattern = rng.random((4, 4)) < 0.35
        assert is_fully_coupled(pattern) == is_irreducible(pattern)


def test_H4_witness(grid):
    C = CouplingMatrix.constant(grid, [[1, 0], [1, 0]])
    form = block_triangular_form(C)
    u0 = VectorField(grid, np.vstack([-np.sin(np.pi * grid.x), np.zeros(grid.size)]))
    h4 = check_H4(C, u0, form)
    assert h4["passed"]
    assert all(w is not None for w in h4["witnesses"])

    h4_zero = check_H4(C, VectorField.zeros(grid, 2), form)
    assert not h4_zero["passed"]
    assert h4_zero["failed_blocks"] == list(range(form.n_blocks))


def test_permuted_components_same_block_sizes():
    """分量重排后块的大小多重集不变，块成员随置换对应"""
    rng = np.random.default_rng(13)
    for _ in range(100):
        n = int(rng.integers(2, 7))
        pattern = rng.random((n, n)) < 0.3
        sigma = rng.permutation(n)
        # 新编号 k 对应原分量 sigma[k]
        permuted = pattern[np.ix_(sigma, sigma)]
        form = block_triangular_form(pattern)
        permuted_form = block_triangular_form(permuted)
        assert sorted(form.sizes) == sorted(permuted_form.sizes)
        original_blocks = {frozenset(block) for block in form.blocks}
        mapped_blocks = {frozenset(int(sigma[k]) for k in block) for block in permuted_form.blocks}
        assert original_blocks == mapped_blocks
