import csv
import io
import json

import numpy as np
import pytest

from oracles import sis_root
from pinlab.concentration import (BoundHypothesisError, CSV_COLUMNS, ConcentrationReport,
                                  atm_sweep, concentration_lower_bound, double_limit_trend,
                                  er_probability, estimate_event_mass, make_family_graph,
                                  nondecreasing_within, reports_csv, reports_json,
                                  vanishing_alpha_sweep)
from pinlab.graph import generate_complete, generate_erdos_renyi
from pinlab.lyapunov import UserCertificate, build_binary, build_quadratic, build_sirs
from pinlab.model import make_forgetful, make_params, make_sirs, make_sis, make_voter

S2 = [[0.9, 0.1], [0.2, 0.8]]


def fixed_cert(zeta=0.0, grad=0.5, hess=1.0, k=2):
    return UserCertificate(k, None, None, None, zeta=zeta, grad_inf_norm=grad,
                           hessian_norm_bound=hess)


# -- bound arithmetic ------------------------------------------------------

def test_bound_complete_graph_form():
    cert = build_binary(make_voter(0.5))
    n, delta = 1000, 0.05
    assert concentration_lower_bound(cert, n, 0.0, delta) == 1 - cert.C / (n * delta)


def test_bound_tends_to_one():
    cert = fixed_cert()
    vals = [concentration_lower_bound(cert, n, 1 / n, 0.1) for n in (10**3, 10**5, 10**7)]
    assert vals[-1] > 0.999 and vals[0] < vals[1] < vals[2]


def test_bound_floored_at_zero():
    cert = fixed_cert(zeta=0.01)
    assert concentration_lower_bound(cert, 10, 0.0, 0.01 + 1e-9) == 0.0


@pytest.mark.parametrize("delta", [0.0, 0.01, 0.005])
def test_bound_requires_delta_above_zeta(delta):
    with pytest.raises(BoundHypothesisError, match="delta > zeta"):
        concentration_lower_bound(fixed_cert(zeta=0.01), 100, 0.0, delta)


def test_bound_monotonicity():
    delta = 0.2
    ns = [50, 100, 500, 5000]
    b = [concentration_lower_bound(fixed_cert(), n, 0.01, delta) for n in ns]
    assert all(x <= y for x, y in zip(b, b[1:]))
    Ws = [0.0, 0.001, 0.01, 0.05]
    b = [concentration_lower_bound(fixed_cert(), 1000, W, delta) for W in Ws]
    assert all(x >= y for x, y in zip(b, b[1:]))
    zetas = [0.0, 0.01, 0.05, 0.1]
    b = [concentration_lower_bound(fixed_cert(zeta=z), 1000, 0.0, delta) for z in zetas]
    assert all(x >= y for x, y in zip(b, b[1:]))


def test_bound_explicit_C():
    cert = fixed_cert()
    assert concentration_lower_bound(cert, 100, 0.0, 0.5, C=10.0) == pytest.approx(0.8)


# -- event masses ----------------------------------------------------------

def test_frozen_chain_at_zero_drift_has_full_mass():
    g = generate_complete(20)
    frozen = make_params(2, 0.0, np.eye(2), np.full((2, 2, 2), 0.5))
    cert = build_binary(make_voter(0.5))
    with pytest.raises(ValueError, match="ergodic"):
        estimate_event_mass(g, frozen, cert, 0.05, samples=10, master_seed=0)
    rep = estimate_event_mass(g, frozen, cert, 0.05, samples=50, master_seed=0,
                              allow_nonergodic=True)
    assert rep.empirical_mass == 1.0 and rep.se == 0.0


def test_report_row_has_all_columns():
    g = generate_complete(30)
    p = make_voter(0.5)
    rep = estimate_event_mass(g, p, build_binary(p), 0.05, samples=20, master_seed=1)
    assert set(rep.to_row()) == set(CSV_COLUMNS)
    assert 0 <= rep.empirical_mass <= 1 and 0 <= rep.theoretical_lower_bound <= 1
    assert rep.W == 0 and rep.W_exact


def test_delta_below_zeta_fails_before_simulating():
    p = make_sirs(0.6, 0.2, 0.1, 0.1)
    cert = build_sirs(p)
    with pytest.raises(BoundHypothesisError):
        estimate_event_mass(generate_complete(10), p, cert, cert.zeta / 2, samples=1,
                            master_seed=0)


@pytest.mark.slow
def test_forgetful_ball_mass_against_bound():
    p = make_forgetful(0.5, S2, S2)
    cert = build_quadratic(p)
    g = generate_complete(500)
    rep = estimate_event_mass(g, p, cert, 0.05, samples=1000, master_seed=3)
    assert rep.W_exact
    assert rep.empirical_mass + 4 * rep.se >= rep.theoretical_lower_bound
    assert rep.theoretical_lower_bound > 0


@pytest.mark.slow
def test_sis_er_mass_with_inexact_gap():
    p = make_sis(0.6, 0.3, 0.01)
    cert = build_binary(p)
    g = generate_erdos_renyi(1000, 0.02, 5)
    rep = estimate_event_mass(g, p, cert, 0.02, samples=500, master_seed=4)
    assert not rep.W_exact and rep.W > 0
    assert rep.empirical_mass + 4 * rep.se >= rep.theoretical_lower_bound


# -- sweeps ----------------------------------------------------------------

def test_er_probability_forms():
    assert er_probability(0.1, 50) == 0.1
    assert er_probability("10*log(n)/n", 100) == pytest.approx(10 * np.log(100) / 100)
    assert er_probability(lambda n: 2 / n, 10) == 0.2
    with pytest.raises(ValueError):
        make_family_graph("ring", 10, 0)


@pytest.mark.slow
def test_voter_complete_sweep_masses_approach_one():
    p = make_voter(0.5)
    reps = atm_sweep(p, "complete", [100, 300, 1000], 0.05, master_seed=7, samples=1000)
    masses = [r.empirical_mass for r in reps]
    assert nondecreasing_within(reps)
    assert masses[-1] >= 0.99
    assert [r.theoretical_lower_bound for r in reps] == sorted(r.theoretical_lower_bound
                                                             for r in reps)


@pytest.mark.slow
def test_sis_er_sweep_masses_nondecreasing():
    p = make_sis(0.6, 0.3, 0.01)
    reps = atm_sweep(p, "er", [200, 500, 1000], 0.02, master_seed=8, samples=500,
                     p="10*log(n)/n")
    assert nondecreasing_within(reps)
    assert all(not r.W_exact for r in reps)


@pytest.mark.slow
def test_star_negative_control_is_reported():
    p = make_voter(0.5)
    reps = atm_sweep(p, "star", [10, 100], 0.05, master_seed=9, samples=200)
    # gap stays near 1/2, so the bound carries no information
    assert reps[0].W_exact and reps[0].W >= 0.5 - 1 / 10
    assert reps[1].W >= 0.5 - 1 / 100 - 1e-9
    assert all(r.theoretical_lower_bound == 0.0 for r in reps)


@pytest.mark.slow
def test_sirs_vanishing_alpha_table_shape():
    p = make_sirs(0.6, 0.2, 0.1, 0.05)
    reps = vanishing_alpha_sweep(p, [0.05, 0.01, 0.002], [300, 1000], 0.05, master_seed=1,
                                 samples=200, p=0.02, burn_in=lambda n: 500 * n)
    assert [(r.alpha, r.n) for r in reps] == [(a, n) for a in (0.05, 0.01, 0.002)
                                              for n in (300, 1000)]
    trend = double_limit_trend(reps)
    assert [t["n"] for t in trend] == [1000] * 3
    assert all(t["mass"] >= 0.9 for t in trend)


@pytest.mark.slow
@pytest.mark.parametrize("b,c,target", [(0.6, 0.3, 0.5), (0.2, 0.4, 0.0)])
def test_sis_concentration_point(b, c, target):
    p = make_sis(b, c, 0.001)
    reps = vanishing_alpha_sweep(p, [0.001], [1000], 0.05, master_seed=2, samples=300,
                                 family="complete")
    assert abs(reps[0].theta_avg[1] - target) <= 0.05
    assert reps[0].empirical_mass >= 0.95


def test_sis_bifurcation_at_ratio_one():
    b, alpha, delta = 0.3, 1e-6, 0.02
    for ratio in np.linspace(0.5, 1.5, 21):
        z = build_binary(make_sis(b, ratio * b, alpha)).z_star
        assert abs(z - max(1 - ratio, 0.0)) <= delta
        assert z == pytest.approx(sis_root(b, ratio * b, alpha), abs=1e-12)


def test_vanishing_alpha_requires_epidemic_model():
    with pytest.raises(ValueError):
        vanishing_alpha_sweep(make_voter(0.5), [0.1], [10], 0.05, master_seed=0, samples=1)
    with pytest.raises(ValueError):
        vanishing_alpha_sweep(make_sis(0.6, 0.3, 0.01), [0.0], [10], 0.05, master_seed=0,
                              samples=1)


def test_nondecreasing_within_slack():
    def rep(mass, se):
        return ConcentrationReport(0.1, 0, 10, 10, 0, True, 1, 0, mass, se, 1, 2)
    assert nondecreasing_within([rep(0.9, 0.01), rep(0.89, 0.01)])
    assert not nondecreasing_within([rep(0.9, 0.001), rep(0.8, 0.001)])


def test_outputs_are_stable_text():
    def rep():
        return ConcentrationReport(0.05, 0.0, 100, 9900, 0.0, True, 5.0, 0.0, 0.97, 0.01, 500, 5,
                                   drift_event_mass=0.97, drift_event_se=0.01,
                                   theta_avg=[0.5, 0.5], label="x", family="complete")
    text = reports_csv([rep()])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == list(CSV_COLUMNS) and rows[0]["mass"] == "0.97"
    assert reports_json([rep()], {"a": 1}) == reports_json([rep()], {"a": 1})
    assert json.loads(reports_json([rep()]))["reports"][0]["n"] == 100
