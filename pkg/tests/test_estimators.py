from sklearn.base import clone

from tndp.estimators import ConstructionSampler, EvolutionaryDesigner


def test_sampler_fit(mandl):
    city, _ = mandl
    est = ConstructionSampler(n_samples=20, random_state=0).fit(city)
    assert len(est.network_) == 6
    assert est.result_.total > 0
    again = clone(est).fit(city)
    assert again.network_ == est.network_


def test_designer_params_and_fit(mandl):
    city, _ = mandl
    est = EvolutionaryDesigner(iterations=2, lc_samples=5, variant="combine", random_state=1)
    assert est.get_params()["variant"] == "combine"
    est.set_params(alpha=0.5)
    est.fit(city)
    assert est.problem_.alpha == 0.5
    assert len(est.history_) == 3
    assert est.result_.total == est.history_[-1].best_total
