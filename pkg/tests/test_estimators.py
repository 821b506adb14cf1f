import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import stationary
from mttsp.estimators import MTTSPSolver, RelaxationBound, check_instance
from mttsp.instance import InstanceError, save, serialize


def test_params_round_trip():
    est = MTTSPSolver(formulation="bigm", time_limit=5.0)
    assert est.get_params()["formulation"] == "bigm"
    copy = clone(est)
    assert copy.get_params() == est.get_params()


def test_fit_predict(single_target):
    est = MTTSPSolver().fit(single_target)
    np.testing.assert_array_equal(est.predict(), [1])
    assert est.cost_ == pytest.approx(20.0, abs=1e-6)
    assert est.lower_bound_ <= est.cost_ + 1e-9
    assert est.gap_percent_ <= 1e-4


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        MTTSPSolver().predict()


def test_bad_formulation(single_target):
    with pytest.raises(ValueError):
        MTTSPSolver(formulation="lp").fit(single_target)


def test_inputs(tmp_path, single_target):
    path = tmp_path / "i.mttsp"
    save(single_target, path)
    assert check_instance(path) == single_target
    assert check_instance(str(path)) == single_target
    assert check_instance(serialize(single_target)) == single_target
    with pytest.raises(InstanceError):
        check_instance(3)


def test_relaxation_transform():
    insts = [stationary([(10, 0), (0, 10)]), stationary([(10, 0), (0, 10), (-20, 5)])]
    gcs = RelaxationBound().fit(insts).transform(insts)
    big = RelaxationBound(formulation="bigm").fit_transform(insts)
    assert gcs.shape == big.shape == (2,)
    assert np.all(gcs > 0) and np.all(np.abs(big) <= 1e-6)
    # a single target leaves one path, so even the big-M relaxation is exact
    one = RelaxationBound(formulation="bigm").fit_transform(stationary([(10, 0)]))
    assert one[0] == pytest.approx(20.0, abs=1e-6)
