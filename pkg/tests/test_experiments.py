import numpy as np

from ccadl.data import synth_two_class
from ccadl.experiments import LogregResult, TestLogLikTracker, logreg_reference, logreg_run, two_class_split
from ccadl.models import logistic_test_loglik
from ccadl.samplers import SamplerConfig, ThermostatState


def test_tracker_scores_running_mean():
    test = synth_two_class(np.random.default_rng(0), 50, 2, 2.0)
    tr = TestLogLikTracker(test, N=200, n=20, every=2)
    ws = [np.array([1.0, 0.0]), np.array([3.0, 2.0]), np.array([-1.0, 1.0]), np.array([0.0, 0.0])]
    for t, w in enumerate(ws, start=1):
        tr(t, ThermostatState(w, np.zeros(2), 0.0))
    assert tr.steps == [2, 4]
    np.testing.assert_array_equal(tr.passes, [0.2, 0.4])
    assert tr.loglik[0] == logistic_test_loglik(np.array([2.0, 1.0]), test)
    np.testing.assert_array_equal(tr.mean, [0.75, 0.75])


def test_passes_to_reach():
    res = LogregResult("ccadl", 0.01, 1.0, np.array([1.0, 2.0, 3.0]), np.array([-0.6, -0.405, -0.39]),
                       False, None)
    assert res.passes_to_reach(-0.4) == 2.0
    assert res.passes_to_reach(-0.1) == np.inf


def test_logreg_run_and_reference_agree_roughly():
    train, test = two_class_split(0, N=400, d=3, N_test=200)
    mean, plateau, log = logreg_reference(train, test, seed=0, samples=300, burnin=100)
    assert log.acceptance_rate > 0.5
    res = logreg_run("ccadl", train, test, SamplerConfig(h=2e-3, covariance="full"), 1000, seed=0, n=40)
    assert not res.diverged and res.passes[-1] == 100.0
    assert abs(res.loglik[-1] - plateau) < 0.02
    assert np.linalg.norm(res.mean - mean) < 0.5 * np.linalg.norm(mean)
