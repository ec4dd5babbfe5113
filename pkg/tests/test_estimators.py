import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from distdisc.estimators import DistributionalRDD, DistributionalRKD
from distdisc.simlab import DgpSpec, dgp_sample


def test_get_params_and_clone():
    est = DistributionalRDD(order=1, trim=0.1)
    params = est.get_params()
    assert params["order"] == 1 and params["trim"] == 0.1
    c = clone(est)
    assert c.get_params() == params and c is not est
    est.set_params(kernel="epanechnikov")
    assert est.kernel == "epanechnikov"


def test_rdd_fit_predict():
    d = dgp_sample(DgpSpec("Additive", 5000, 1))
    est = DistributionalRDD(bandwidth_constant=1.5, trim=0.05, n_u=199).fit(d.x, d.y)
    assert est.psi_ == pytest.approx(0.5 * 0.9**0.5, abs=0.2)
    assert est.bandwidth_ == pytest.approx(1.5 * 5000**-0.2)
    assert est.n_features_in_ == 1
    pred = est.predict([0.25, 0.5, 0.75])
    assert pred.shape == (3,) and np.all(np.abs(pred - 0.5) < 0.6)
    assert est.predict([0.5])[0] == pytest.approx(np.interp(0.5, est.result_.dq.u_grid, est.result_.dq.values))


def test_rdd_accepts_2d_x_and_rejects_bad_input():
    d = dgp_sample(DgpSpec("Additive", 2000, 2))
    est = DistributionalRDD(bandwidth=0.5, n_u=99)
    est.fit(d.x.reshape(-1, 1), d.y)
    with pytest.raises(ValueError):
        DistributionalRDD().fit(np.c_[d.x, d.x], d.y)
    with pytest.raises(ValueError):
        DistributionalRDD().fit(d.x, d.y[:-1])
    y = d.y.copy()
    y[0] = np.nan
    with pytest.raises(ValueError):
        DistributionalRDD().fit(d.x, y)
    with pytest.raises(ValueError):
        est.predict([1.5])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DistributionalRDD().predict([0.5])


def test_fuzzy_needs_binary_treatment():
    d = dgp_sample(DgpSpec("FuzzyCompliance", 3000, 1))
    est = DistributionalRDD(fuzzy=True, order=1, bandwidth=0.5, n_u=99)
    est.fit(d.x, d.y, treatment=d.a)
    assert est.result_.fuzzy
    with pytest.raises(ValueError):
        DistributionalRDD(fuzzy=True).fit(d.x, d.y, treatment=d.a * 2)


def test_rkd_fit_and_infer():
    d = dgp_sample(DgpSpec("KinkScale", 5000, 1))
    est = DistributionalRKD(benefit_slopes=(0.0, 1.0), order=1, bandwidth=0.4, trim=0.05, n_u=99)
    est.fit(d.x, d.y)
    assert est.first_stage_ == 1.0
    rep = est.infer(B=100, B_mc=2000)
    assert rep is est.inference_
    assert rep.conservative.contains(est.psi_**2)


def test_bad_trim():
    d = dgp_sample(DgpSpec("Additive", 1000, 2))
    with pytest.raises(ValueError):
        DistributionalRDD(trim=0.6).fit(d.x, d.y)
