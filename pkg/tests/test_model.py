import math

import pytest
from hypothesis import given, strategies as st

from dpsac.model import (ApplicationSpec, ScenarioError, SystemConfig, apex_catalog, build_scenario,
                         derive_probability, load_scenario, lookup_app, scale_application, scenario_from_dict,
                         scenario_to_dict, time_unit)


def test_probabilities_from_catalog():
    assert derive_probability(20, 5671) == pytest.approx(3.527e-3, abs=5e-7)
    assert derive_probability(25, 12682) == pytest.approx(1.971e-3, abs=5e-7)


@given(st.floats(0.1, 1e5))
def test_half_period_io(t):
    assert derive_probability(t, 2 * t) == pytest.approx(0.5)


@pytest.mark.parametrize("io, period", [(0, 10), (10, 10), (-1, 5), (11, 10)])
def test_probability_rejects_degenerate_phases(io, period):
    with pytest.raises(ValueError):
        derive_probability(io, period)


def test_catalog_contents():
    cat = apex_catalog()
    assert len(cat) == 4
    assert (cat[0].name, cat[0].bandwidth, cat[0].period) == ("EAP", 160, 5671)
    assert cat[2].io_time == 280
    assert [a.num_instances for a in cat] == [13, 4, 2, 1]
    # one node per GB/s of peak bandwidth
    assert [a.nodes for a in cat] == [160, 80, 160, 160]


def test_scaling_keeps_compute_fixed():
    eap = lookup_app("EAP")
    e10 = scale_application(eap, 10)
    assert (e10.io_time, e10.compute_work, e10.period, e10.name) == (200, 5651, 5851, "EAP10")
    assert scale_application(lookup_app("Silverton"), 0.5).io_time == 140
    assert scale_application(eap, 1) is eap
    with pytest.raises(ValueError):
        scale_application(eap, 0)


@given(st.sampled_from(["EAP", "LAP", "Silverton", "VPIC"]), st.floats(0.1, 20))
def test_scaling_preserves_compute_work(name, f):
    spec = lookup_app(name)
    scaled = scale_application(spec, f)
    assert scaled.compute_work == pytest.approx(spec.compute_work)
    assert scaled.io_time == pytest.approx(spec.io_time * f)


def test_time_unit():
    eap, lap, sil = lookup_app("EAP"), lookup_app("LAP"), lookup_app("Silverton")
    assert time_unit([eap, lap]) == 22.5
    assert time_unit([sil]) == 280
    assert time_unit([eap] * 3) == 20
    with pytest.raises(ValueError):
        time_unit([])


def test_builtin_sets():
    assert build_scenario(1).composition() == {"LAP": 10, "LAP5": 2, "Silverton": 1}
    assert build_scenario("set5").composition() == {"EAP": 1, "LAP": 2, "LAP5": 1, "Silverton0.5": 1,
                                                    "VPIC10": 1, "Silverton": 1}
    for k in range(1, 11):
        assert build_scenario(k).num_applications >= 3


@pytest.mark.parametrize("bad", [0, 11, "set0", "nope", "set"])
def test_unknown_sets(bad):
    with pytest.raises(ScenarioError):
        build_scenario(bad)


def test_instance_counts():
    sc = build_scenario("batch")
    n = {s.name: s.num_instances for s in sc.batch_apps()}
    assert n == {"EAP": 13, "LAP": 4, "LAP5": 2, "Silverton0.5": 2, "VPIC10": 1, "Silverton": 1}
    assert lookup_app("EAP5").num_instances == 13
    assert lookup_app("Silverton").num_instances == 2


def test_dynamic_joins():
    dyn = build_scenario("dynamic")
    pj = dyn.periodic_joins[0]
    assert (pj.spec.name, pj.period, pj.instances) == ("EAP", 34026, 5)
    horizon = dyn.join_horizon
    assert horizon == 13 * 5671
    times = [t for t, s in dyn.joins() if s.name == "EAP"]
    assert times == [34026, 68052]
    assert all(t < horizon for t, _ in dyn.joins())
    only = dyn.restrict_joins("LAP5")
    assert {s.name for _, s in only.joins()} == {"LAP5"}
    assert all(s.num_instances == 2 for _, s in only.joins())
    with pytest.raises(ScenarioError):
        dyn.restrict_joins("VPIC")


def test_lookup_rejects_unknown():
    with pytest.raises(ScenarioError):
        lookup_app("HPL")


def test_scenario_roundtrip(tmp_path):
    sc = build_scenario("dynamic")
    again = scenario_from_dict(scenario_to_dict(sc))
    assert again.composition() == sc.composition()
    assert [(t, s.name, s.num_instances) for t, s in again.joins()] == \
        [(t, s.name, s.num_instances) for t, s in sc.joins()]
    path = tmp_path / "s.yaml"
    path.write_text("name: tiny\ninitial_batch:\n  - {app: EAP, count: 2, instances: 1}\n"
                    "  - app: {name: X, bandwidth: 10, period: 100, io_time: 5}\n")
    tiny = load_scenario(path)
    assert tiny.composition() == {"EAP": 2, "X": 1}
    assert tiny.batch_apps()[2].nodes == 10


@pytest.mark.parametrize("doc", [{}, {"initial_batch": []}, {"initial_batch": [{"app": {"name": "X"}}]},
                                 {"initial_batch": [{"app": "EAP", "count": 0}]}, [1, 2]])
def test_scenario_errors(doc):
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc)


def test_system_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(pfs_bandwidth=0)
    with pytest.raises(ValueError):
        SystemConfig(node_peak_bandwidth=0)


def test_spec_derived_quantities():
    s = ApplicationSpec("A", 10, 100.0, 4.0)
    assert (s.io_probability, s.compute_work, s.io_volume) == (0.04, 96.0, 40.0)
    assert s.expected_load == pytest.approx(0.4)
    assert math.isclose(s.dedicated_efficiency, 0.96)
