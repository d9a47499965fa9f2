import numpy as np
import pytest

from conftest import crandn, dft3_triple_sum, dft_einsum, rel_err
from distdft.distribution import Grid
from distdft.errors import GridMismatch, ShapeMismatch
from distdft.kernels import ct_step, dft_naive, dftn_naive
from distdft.parallel import (
    NATURAL,
    SHUFFLED,
    AlgorithmKind,
    DftProblem,
    balanced_split,
    expected_collectives,
    input_layout,
    output_layout,
    run,
    shuffle_map,
    stage_plan,
    validate,
)
from distdft.tensor import flat, from_flat

CASES_3D = [
    ("slab", (8, 8, 8), (2,)),
    ("slab", (4, 4, 8), (4,)),
    ("slab", (4, 8, 16), (8,)),
    ("pencil", (8, 8, 8), (2, 2)),
    ("pencil", (4, 8, 8), (2, 2)),
    ("pencil", (8, 8, 16), (4, 2)),
    ("volumetric", (8, 8, 8), (2, 2, 2)),
    ("volumetric", (16, 16, 16), (2, 2, 2)),
    ("volumetric", (4, 8, 16), (2, 2, 4)),
    ("volumetric", (4, 9, 16), (1, 3, 2)),
]


def collectives(result):
    return result.collectives


# -- balanced factorization ------------------------------------------------------


def test_balanced_split():
    assert balanced_split(16, 2) == (4, 4)
    assert balanced_split(32, 2) == (8, 4)
    assert balanced_split(64, 4) == (8, 8)
    assert balanced_split(12, 1) == (4, 3)
    with pytest.raises(ShapeMismatch):
        balanced_split(8, 4)


def test_problem_validation():
    with pytest.raises(ShapeMismatch):
        DftProblem((4, 0, 4))
    with pytest.raises(ShapeMismatch):
        DftProblem((16,), factorizations=((3, 5),))
    with pytest.raises(ValueError):
        DftProblem((4, 4, 4), output_mode="sideways")


def test_validate_errors():
    with pytest.raises(GridMismatch):
        validate("volumetric", DftProblem((8, 8, 8)), Grid((2, 2)))
    with pytest.raises(ShapeMismatch):
        validate("slab", DftProblem((8, 8, 8)), Grid((3,)))
    with pytest.raises(ShapeMismatch):
        validate("pencil", DftProblem((4, 8, 8)), Grid((8, 1)))
    with pytest.raises(ShapeMismatch):
        validate("volumetric", DftProblem((8, 8, 8)), Grid((4, 1, 1)))
    with pytest.raises(ShapeMismatch):
        validate("cyclic", DftProblem((8, 8, 8)), Grid((2,)))


def test_algorithm_names():
    assert AlgorithmKind.parse("slab") is AlgorithmKind.SLAB
    assert AlgorithmKind.parse("pencil-pencil-pencil") is AlgorithmKind.PENCIL
    assert [k.short for k in AlgorithmKind] == ["sixstep", "cyclic", "slab", "pencil", "volumetric"]
    with pytest.raises(ValueError):
        AlgorithmKind.parse("butterfly")


# -- 1D algorithms -----------------------------------------------------------------


def test_sixstep_sixteen_on_two_ranks(rng):
    x = crandn(rng, 16)
    res = run("sixstep", DftProblem((16,), factorizations=((4, 4),)), (2,), x)
    assert collectives(res) == 3
    assert rel_err(res.output, dft_naive(x)) <= 1e-10


def test_sixstep_single_rank_equals_ct_step(rng):
    x = crandn(rng, 16)
    res = run("sixstep", DftProblem((16,), factorizations=((4, 4),)), (1,), x)
    assert collectives(res) == 0
    assert rel_err(res.output, ct_step(x, 4, 4)) <= 1e-14


def test_sixstep_sixty_four_on_four_ranks(rng):
    x = crandn(rng, 64)
    res = run("sixstep", DftProblem((64,)), (4,), x)
    assert rel_err(res.output, dft_naive(x)) <= 1e-10
    assert [label for label, _ in res.stages[0]] == ["redistribute-in", "transpose", "redistribute-out"]


def test_cyclic_two_fifty_six_on_four_ranks(rng):
    x = crandn(rng, 256)
    res = run("cyclic", DftProblem((256,)), (4,), x)
    assert collectives(res) == 1
    assert rel_err(res.output, dft_naive(x)) <= 1e-10


def test_cyclic_single_rank(rng):
    x = crandn(rng, 64)
    res = run("cyclic", DftProblem((64,)), (1,), x)
    assert collectives(res) == 0
    assert rel_err(res.output, ct_step(x, 8, 8)) <= 1e-14


def test_cyclic_keeps_distribution(rng):
    x = crandn(rng, 64)
    problem = DftProblem((64,))
    res = run("cyclic", problem, (2,), x)
    assert rel_err(res.output, dft_naive(x)) <= 1e-10
    assert str(input_layout("cyclic", problem, (2,))[1]) == "[(0),()]"
    assert all(str(p.dist) == "[(0),()]" for p in res.pieces)


# -- 3D algorithms -----------------------------------------------------------------


@pytest.mark.parametrize("alg, dims, grid", CASES_3D)
@pytest.mark.parametrize("mode", [NATURAL, SHUFFLED])
def test_3d_matches_oracles(alg, dims, grid, mode, rng):
    x = crandn(rng, dims)
    res = run(alg, DftProblem(dims, output_mode=mode), grid, x)
    assert rel_err(res.output, dft_einsum(x)) <= 1e-10
    assert rel_err(res.output, np.fft.fftn(x)) <= 1e-10
    assert collectives(res) == expected_collectives(alg, grid, mode)


def test_triple_sum_oracle_small(rng):
    x = crandn(rng, (4, 4, 4))
    want = dft3_triple_sum(x)
    for alg, grid in [("slab", (2,)), ("pencil", (2, 2)), ("volumetric", (1, 2, 2))]:
        assert rel_err(run(alg, DftProblem((4, 4, 4)), grid, x).output, want) <= 1e-10


@pytest.mark.parametrize("alg, grid", [("slab", (2,)), ("pencil", (2, 2)), ("volumetric", (2, 2, 2))])
def test_delta_cube_gives_ones(alg, grid):
    x = np.zeros((8, 8, 8), dtype=complex)
    x[0, 0, 0] = 1
    assert np.allclose(run(alg, DftProblem((8, 8, 8)), grid, x).output, 1, atol=1e-13)


def test_stage_counts():
    x = np.ones((8, 8, 8), dtype=complex)
    assert collectives(run("slab", DftProblem((8, 8, 8)), (2,), x)) == 2
    assert collectives(run("slab", DftProblem((4, 4, 8), output_mode=SHUFFLED), (2,), x[:4, :4])) == 1
    assert collectives(run("pencil", DftProblem((8, 8, 8), output_mode=SHUFFLED), (2, 2), x)) == 3
    assert collectives(run("pencil", DftProblem((8, 8, 8)), (2, 2), x)) == 4
    assert collectives(run("volumetric", DftProblem((8, 8, 8)), (2, 2, 2), x)) == 3


@pytest.mark.parametrize("alg, grid", [("slab", (1,)), ("pencil", (1, 1)), ("volumetric", (1, 1, 1))])
def test_single_rank_is_sequential(alg, grid, rng):
    x = crandn(rng, (4, 6, 8))
    res = run(alg, DftProblem((4, 6, 8)), grid, x)
    assert collectives(res) == 0
    assert rel_err(res.output, dftn_naive(x)) <= 1e-12


def test_volumetric_distribution_after_every_stage(rng):
    res = run("volumetric", DftProblem((8, 8, 8)), (2, 2, 2), crandn(rng, (8, 8, 8)))
    for history in res.stages:
        assert history == [("mode0", "[(0),(1),(2)]"), ("mode1", "[(0),(1),(2)]"), ("mode2", "[(0),(1),(2)]")]


def test_volumetric_factorization_override(rng):
    x = crandn(rng, (16, 8, 8))
    problem = DftProblem((16, 8, 8), factorizations=((2, 8), None, (4, 2)))
    assert rel_err(run("volumetric", problem, (2, 2, 2), x).output, dftn_naive(x)) <= 1e-10


def test_cross_algorithm_agreement(rng):
    x = crandn(rng, (8, 8, 8))
    outs = [run(alg, DftProblem((8, 8, 8)), grid, x).output for alg, grid in
            [("slab", (4,)), ("pencil", (2, 4)), ("volumetric", (2, 2, 2))]]
    for other in outs[1:]:
        assert rel_err(other, outs[0]) <= 1e-12


@pytest.mark.parametrize("alg, dims, grid", [("slab", (4, 4, 8), (2,)), ("pencil", (8, 8, 8), (2, 2)),
                                             ("pencil", (4, 8, 8), (2, 2)), ("slab", (8, 4, 16), (4,))])
def test_shuffled_output_unpermutes_to_natural_bitwise(alg, dims, grid, rng):
    x = crandn(rng, dims)
    natural = run(alg, DftProblem(dims), grid, x)
    problem = DftProblem(dims, output_mode=SHUFFLED)
    shuffled = run(alg, problem, grid, x)
    m = shuffle_map(alg, problem, grid)
    rebuilt = np.empty(m.size, dtype=complex)
    rebuilt[m] = shuffled.raw_output()
    assert np.array_equal(rebuilt, flat(natural.output))
    assert np.array_equal(from_flat(rebuilt, dims), shuffled.output)
    # the shuffled buffers really are in a different order
    assert not np.array_equal(shuffled.raw_output(), natural.raw_output())


def test_layouts_and_stage_plans():
    p = DftProblem((4, 4, 8), output_mode=SHUFFLED)
    assert output_layout("slab", p, (2,))[0] == (16, 8)
    assert str(output_layout("slab", p, (2,))[1]) == "[(0),()]"
    assert [s for s, _ in stage_plan("pencil", Grid((2, 2)), NATURAL)][-1] == "finalize-natural"
    assert expected_collectives("pencil", Grid((2, 1)), SHUFFLED) == 1
    assert expected_collectives("volumetric", Grid((1, 2, 1))) == 1


def test_serial_mode_is_bit_identical(rng):
    x = crandn(rng, (8, 8, 8))
    for alg, grid in [("pencil", (2, 2)), ("volumetric", (2, 2, 2))]:
        a = run(alg, DftProblem((8, 8, 8)), grid, x)
        b = run(alg, DftProblem((8, 8, 8)), grid, x, serial=True)
        assert np.array_equal(a.output, b.output)
        assert a.events == b.events


def test_bytes_match_volume(rng):
    # each stage hands the whole cube to the all-to-all, self-addressed buffers included
    res = run("slab", DftProblem((8, 8, 8)), (2,), crandn(rng, (8, 8, 8)))
    assert res.bytes_sent == 2 * 8**3 * 16
    assert res.collectives_by_label() == {"slab-to-pencil": 1, "pencil-to-slab": 1}
