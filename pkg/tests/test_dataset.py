import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crciv.dataset import (Dataset, DesignSpec, Interaction, Power, build_design,
                           load_csv)
from crciv.exceptions import ConfigurationError, ParseError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    p = write(tmp_path, "y,x,z\n1,2,0\n2,3,1\n3,5,1\n")
    d = load_csv(p, "y", "x", [], ["z"])
    assert d.n == 3
    np.testing.assert_array_equal(d.x, [2, 3, 5])
    np.testing.assert_array_equal(d.z2[:, 0], [0, 1, 1])


def test_load_header_only(tmp_path):
    p = write(tmp_path, "y,x,z\n")
    with pytest.raises(ConfigurationError, match="empty dataset"):
        load_csv(p, "y", "x", [], ["z"])


def test_load_na_cell(tmp_path):
    p = write(tmp_path, "y,x,z\n1,2,0\n2,NA,1\n")
    with pytest.raises(ParseError) as info:
        load_csv(p, "y", "x", [], ["z"])
    assert info.value.row == 3 and info.value.column == "x"


def test_load_missing_column(tmp_path):
    p = write(tmp_path, "y,x,z\n1,2,0\n")
    with pytest.raises(ConfigurationError, match="'w'"):
        load_csv(p, "y", "x", [], ["w"])


def test_design_example_row():
    d = Dataset([0.0], [2.0], [[3.0]], [[1.0]])
    w = build_design(d, DesignSpec((Power(2), Interaction(1)))).w
    np.testing.assert_array_equal(w, [[1, 2, 4, 6, 3]])


def test_design_identity_case():
    d = Dataset([0.0], [5.0], None, [[1.0]])
    np.testing.assert_array_equal(build_design(d).w, [[1, 5]])


def test_design_cubic_negative():
    d = Dataset([0.0], [-2.0], None, [[1.0]])
    assert build_design(d, DesignSpec((Power(3),))).w[0, 2] == -8


def test_interaction_out_of_range():
    d = Dataset([0.0, 1.0], [1.0, 2.0], [[1.0], [2.0]], [[0.0], [1.0]])
    with pytest.raises(ConfigurationError):
        build_design(d, DesignSpec((Interaction(2),)))


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        Power(1)
    with pytest.raises(ConfigurationError):
        DesignSpec((Power(2), Power(2)))


def test_parse_derived_by_name():
    spec = DesignSpec.parse("x^2,x*z1:urban", ("age", "urban"))
    assert spec.derived_terms == (Power(2), Interaction(2))


def test_dataset_rejects_duplicate_columns_and_nan():
    z = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ConfigurationError, match="duplicate"):
        Dataset([1, 2], [1, 2], z[:, :1], z[:, 1:])
    with pytest.raises(ConfigurationError):
        Dataset([1, np.nan], [1, 2], None, [[0], [1]])


def test_dataset_single_basic_endogenous():
    with pytest.raises(ConfigurationError):
        Dataset([1, 2], [[1, 2], [3, 4]], None, [[0], [1]])


def test_sample_size_guard():
    d = Dataset([1, 2, 3], [1, 2, 3], None, [[0], [1], [2]])
    with pytest.raises(ConfigurationError):
        d.check_sample_size(3)
    d.check_sample_size(2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=20),
       st.lists(st.integers(2, 4), unique=True, max_size=3))
def test_power_columns_exact_and_count(xs, powers):
    n = len(xs)
    rng = np.random.default_rng(n)
    d = Dataset(np.zeros(n), xs, rng.normal(size=(n, 2)), rng.normal(size=(n, 1)))
    spec = DesignSpec(tuple(Power(k) for k in powers) + (Interaction(1),))
    dm = build_design(d, spec)
    assert dm.d_w == 2 + len(spec.derived_terms) + d.d1
    assert np.all(dm.w[:, 0] == 1)
    np.testing.assert_array_equal(dm.w[:, 1], d.x)
    for pos, k in enumerate(powers, start=2):
        np.testing.assert_array_equal(dm.w[:, pos], d.x ** k)
    again = build_design(d, spec)
    np.testing.assert_array_equal(dm.w, again.w)
