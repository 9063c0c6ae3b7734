import numpy as np
import pytest

from sevtox.contrasts import (
    ContrastMatrix,
    dose_scalings,
    dunnett,
    make_contrasts,
    parse_contrast_csv,
    williams,
)


def test_dunnett_shape_and_labels():
    K = dunnett([14, 12, 13, 14, 14])
    assert K.coef.shape == (4, 5)
    assert K.labels[0] == "2 - 1"
    assert np.allclose(K.coef.sum(axis=1), 0)
    assert (K.coef[:, 0] == -1).all()


def test_williams_weights():
    K = williams([10, 4, 6])
    # top dose alone, then n-weighted pool of the top two
    assert np.allclose(K.coef[0], [-1, 0, 1])
    assert np.allclose(K.coef[1], [-1, 0.4, 0.6])
    assert np.allclose(K.coef.sum(axis=1), 0)


def test_rows_must_sum_to_zero():
    with pytest.raises(ValueError, match="sum to zero"):
        ContrastMatrix(("bad",), np.array([[1.0, 0.0]]), (3, 3))


def test_custom_csv():
    K = parse_contrast_csv("label,a,b,c\nhigh,-1,0,1\nmid,-1,1,0\n", [3, 3, 3])
    assert K.labels == ("high", "mid")
    assert K.coef.shape == (2, 3)
    with pytest.raises(ValueError):
        parse_contrast_csv("-1,0\n", [3, 3, 3])


def test_make_contrasts_rejects_unknown():
    with pytest.raises(ValueError):
        make_contrasts("tukey", [3, 3])


def test_dose_scalings():
    ari, ordinal, arilog = dose_scalings([0, 10, 50, 150])
    assert ari.values.tolist() == [0, 10, 50, 150]
    assert ordinal.values.tolist() == [0, 1, 2, 3]
    assert arilog.values[0] == pytest.approx(2 * np.log(10) - np.log(50))
    assert np.allclose(arilog.values[1:], np.log([10, 50, 150]))
    assert [s.label for s in (ari, ordinal, arilog)] == ["ari", "ord", "arilog"]


@pytest.mark.parametrize("doses", [[0, 0, 1], [1, 0], [-1, 2]])
def test_dose_scalings_reject(doses):
    with pytest.raises(ValueError):
        dose_scalings(doses)
