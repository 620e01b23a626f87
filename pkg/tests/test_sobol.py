import numpy as np
import pytest
from scipy.stats import qmc

from collopde.sobol import (
    DirectionTable,
    default_direction_table,
    load_direction_table,
    sobol_points,
)


def test_dim1_first_three_points():
    assert np.array_equal(sobol_points(1, 3).ravel(), [0.5, 0.75, 0.25])


def test_dim2_first_three_points():
    expected = np.array([[0.5, 0.5], [0.75, 0.25], [0.25, 0.75]])
    assert np.array_equal(sobol_points(2, 3), expected)


def test_output_is_deterministic():
    a = sobol_points(7, 100)
    b = sobol_points(7, 100)
    assert np.array_equal(a, b)


def test_values_in_open_unit_cube():
    p = sobol_points(10, 512)
    assert np.all(p > 0.0) and np.all(p < 1.0)


def test_dim_exceeding_table_raises():
    table = default_direction_table()
    with pytest.raises(ValueError):
        sobol_points(table.max_dim + 1, 4, table)


def test_invalid_args_raise():
    with pytest.raises(ValueError):
        sobol_points(0, 4)
    with pytest.raises(ValueError):
        sobol_points(2, -1)


def test_matches_reference_qmc_generator():
    # scipy's unscrambled Sobol uses the same direction numbers; its raw
    # stream starts with the all-zeros point that sobol_points skips.
    for dim in (1, 2, 3, 5, 10, 20, 50):
        ours = sobol_points(dim, 64)
        ref = qmc.Sobol(d=dim, scramble=False).random_base2(7)[1:65]
        assert np.allclose(ours, ref, atol=1e-15), dim


def test_low_discrepancy_beats_uniform_projection_gap():
    # proxy for the star discrepancy: largest gap between consecutive
    # sorted values in each 1D projection
    def max_gap(pts):
        worst = 0.0
        for c in range(pts.shape[1]):
            s = np.sort(np.concatenate([[0.0], pts[:, c], [1.0]]))
            worst = max(worst, float(np.max(np.diff(s))))
        return worst

    sob = max_gap(sobol_points(5, 1024))
    uni = np.median(
        [
            max_gap(np.random.default_rng(seed).uniform(size=(1024, 5)))
            for seed in range(20)
        ]
    )
    assert sob < uni


def test_bundled_table_shape():
    table = default_direction_table()
    assert table.max_dim == 50
    s, a, m = table.rows[2]
    assert (s, a, m) == (1, 0, (1,))


def test_table_loader_rejects_malformed_rows(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("d s a m_i\n3 2 1 1\n")  # s=2 but only one m value
    with pytest.raises(ValueError):
        load_direction_table(bad)
    empty = tmp_path / "empty.txt"
    empty.write_text("d s a m_i\n")
    with pytest.raises(ValueError):
        load_direction_table(empty)


def test_user_supplied_table_is_honored(tmp_path):
    # a two-dimension table is enough for dim <= 2 and refuses dim 3
    f = tmp_path / "tiny.txt"
    f.write_text("d s a m_i\n2 1 0 1\n")
    table = load_direction_table(f)
    assert np.array_equal(sobol_points(2, 3, table), sobol_points(2, 3))
    with pytest.raises(ValueError):
        sobol_points(3, 3, table)
