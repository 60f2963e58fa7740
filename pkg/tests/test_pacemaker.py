import pytest

from pmlcheck import parse
from pmlcheck.checker import Property, check_invariant, check_response
from pmlcheck.diagnostics import ConfigError
from pmlcheck.frontend import parse_expr, try_parse
from pmlcheck.pacemaker import (
    BASE_MODES,
    CONDITIONS,
    HeartBehavior,
    Mode,
    PacemakerConfig,
    TimingParams,
    all_modes,
    build_model,
    build_source,
    default_params,
    derive_modes,
    derive_modes_nondet,
    indicated_heart,
    load_params,
    pacing_interval,
    params_from_rates,
    property_suite,
    validate_params,
    verify,
)


def cfg(mode, heart=None, params=None):
    m = Mode.parse(mode)
    return PacemakerConfig(
        m, params or default_params(), heart or indicated_heart(m)
    )


def test_exactly_18_modes():
    modes = all_modes()
    assert len(modes) == 18
    assert len({m.code for m in modes}) == 18
    for bad in ("VVTR", "AATR", "XYZ", "VV"):
        with pytest.raises(ConfigError):
            Mode.parse(bad)


def test_rate_variants_differ_only_by_rate_machinery():
    base = build_source(cfg("VVI"))
    rated = build_source(cfg("VVIR", heart=HeartBehavior("miss_ventricle")))
    assert "Accelerometer" not in base
    assert "RateController" not in base
    assert "Accelerometer" in rated and "RateController" in rated
    assert "rf * INCREMENT" in rated and "rf * INCREMENT" not in base


def test_default_params_pass_validation():
    assert validate_params(default_params()) == []


def test_lrl_equal_url_rejected():
    p = TimingParams(LRL=5, URL=5, MinTime=6, MaxTime=12)
    errors = validate_params(p)
    assert any("LRL < URL" in e for e in errors)


def test_rate_relation_violation_named():
    p = TimingParams(MinTime=6, MaxTime=10, Increment=1)
    errors = validate_params(p)
    assert any("MinTime + max(RF)*Increment < MaxTime" in e for e in errors)


def test_params_from_rates():
    p = params_from_rates(LRL=5, URL=10)
    assert p.MinTime == 6 and p.MaxTime == 12


def test_load_params_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        load_params("NR=8\nBOGUS=1\n", is_text=True)


def test_pacing_interval():
    p = default_params()
    assert pacing_interval(0, p) == p.MinTime
    fifty = TimingParams(MinTime=50, MaxTime=99, Increment=5, LRL=1, URL=2,
                         NR=8, AVD=2, Fixed_AVD=4)
    assert pacing_interval(2, fifty) == 60
    for rf in range(p.rf_max + 1):
        assert pacing_interval(rf, p) < p.MaxTime
    assert pacing_interval(3, p, hysteresis_after_sense=True) == p.AVD + 3 * p.Increment
    with pytest.raises(ConfigError):
        pacing_interval(9, p)


def test_generated_models_revalidate_through_parser():
    for code in ("VOO", "AAI", "DDD", "VDDR", "DDIR"):
        config = cfg(code)
        model, diags = try_parse(build_source(config))
        assert model is not None, diags


def test_voo_pacegen_has_no_sense_guards():
    src = build_source(cfg("VOO", heart=HeartBehavior("dead")))
    pacegen = src[src.index("proctype PaceGenerator"):]
    for line in pacegen.splitlines():
        if "::" in line and "->" in line:
            guard = line.split("->")[0]
            assert "sense_" not in guard


def test_vddr_wait_labels():
    src = build_source(cfg("VDDR", heart=HeartBehavior("normal")))
    assert "MIN_TIME + rf * INCREMENT" in src
    hyst = TimingParams(hysteresis=True)
    src_h = build_source(cfg("VDDR", heart=HeartBehavior("normal"), params=hyst))
    assert "AVD + rf * INCREMENT" in src_h


def test_property_suite_applicability():
    aai = {p.name for p in property_suite(cfg("AAI"))}
    assert "inhibiting_a" in aai
    assert not any(n.startswith("triggering") for n in aai)
    assert "tracking" not in aai
    assert "av_delay" not in aai

    ddd = {p.name for p in property_suite(cfg("DDD"))}
    assert "av_delay" in ddd and "tracking" in ddd

    voo = {p.name for p in property_suite(cfg("VOO"))}
    assert voo == {"deadlock", "pace_limit_v", "refractory_vrp"}


def test_av_delay_applicable_iff_dual_coordination():
    for code in BASE_MODES:
        names = {p.name for p in property_suite(cfg(code))}
        expected = code in ("DOO", "DDI", "VDD", "DDD")
        assert ("av_delay" in names) == expected, code


def test_verify_vvi_all_pass():
    results = verify(cfg("VVI"))
    assert results and all(r.verdict == "pass" for r in results.values())


def test_inhibiting_under_nondeterministic_heart():
    config = cfg("AAI", heart=HeartBehavior("nondeterministic"))
    m = build_model(config)
    prop = Property.conditional(
        "inhibiting_a", parse_expr("obs_sense_a == 1"), parse_expr("obs_pace_a == 0")
    )
    assert check_invariant(m, prop).verdict == "pass"


def test_inhibition_live_with_fast_sinus():
    config = cfg("AAI", heart=HeartBehavior("normal"), params=TimingParams(NR=4))
    m = build_model(config)
    senses_occur = check_invariant(
        m, Property.invariant("ns", parse_expr("obs_sense_a == 0"))
    )
    assert senses_occur.verdict == "fail"  # senses do happen
    prop = Property.conditional(
        "inhibiting_a", parse_expr("obs_sense_a == 1"), parse_expr("obs_pace_a == 0")
    )
    assert check_invariant(m, prop).verdict == "pass"


def test_triggering_live_with_fast_sinus():
    config = cfg("AAT", heart=HeartBehavior("normal"), params=TimingParams(NR=4))
    m = build_model(config)
    prop = Property.conditional(
        "triggering_a", parse_expr("obs_sense_a == 1"), parse_expr("obs_pace_a == 1")
    )
    assert check_invariant(m, prop).verdict == "pass"


def test_tracking_response_under_normal_heart():
    config = cfg("VDD", heart=HeartBehavior("normal"))
    m = build_model(config)
    p = default_params()
    prop = Property.response(
        "tracking",
        parse_expr("obs_sense_a == 1"),
        parse_expr(f"obs_pace_v == 1 && av_delay < {p.Fixed_AVD}"),
    )
    assert check_response(m, prop).verdict == "pass"
    # non-vacuous: atrial senses occur under the normal heart
    vac = check_invariant(m, Property.invariant("ns", parse_expr("obs_sense_a == 0")))
    assert vac.verdict == "fail"


def test_clock_resets_and_timestamps_bounded():
    # timestamps never exceed the clock; the clock resets after a full
    # AV cycle in a dual-chamber mode
    config = cfg("DDD", heart=HeartBehavior("dead"))
    m = build_model(config)
    prop = Property.invariant(
        "stamps",
        parse_expr(
            "Last_PacedA <= clock && Last_PacedV <= clock && "
            "Last_SensedA <= clock && Last_SensedV <= clock"
        ),
    )
    assert check_invariant(m, prop).verdict == "pass"
    # the clock does come back to zero after start
    reset_seen = check_invariant(
        m,
        Property.conditional(
            "resets", parse_expr("cyc_a == 1 && cyc_v == 1"), parse_expr("false")
        ),
    )
    assert reset_seen.verdict == "fail"


def test_derive_modes_match_expected_sets():
    expected = {
        "missA": {"AOO", "AAI", "AAT"},
        "missV": {"VOO", "VVI", "VVT"},
        "dead": {"DOO", "DDI", "VDD", "DDD"},
    }
    for cond in CONDITIONS:
        got = {m.code for m in derive_modes(cond)}
        assert got == expected[cond], cond


def test_derive_modes_nondet_encoding_agrees():
    for cond in CONDITIONS:
        assert {m.code for m in derive_modes_nondet(cond)} == {
            m.code for m in derive_modes(cond)
        }


def test_indicated_heart_mapping():
    assert indicated_heart(Mode.parse("AAI")).kind == "miss_atrium"
    assert indicated_heart(Mode.parse("VVT")).kind == "miss_ventricle"
    assert indicated_heart(Mode.parse("VDD")).kind == "dead"
    assert indicated_heart(Mode.parse("DDD")).kind == "dead"


def test_config_error_on_bad_params():
    with pytest.raises(ConfigError):
        PacemakerConfig(Mode.parse("VVI"), TimingParams(LRL=9, URL=3),
                        HeartBehavior("normal"))


def test_vvi_pace_generator_automaton_has_cycle():
    # it paces forever, so its control graph must contain a cycle
    from pmlcheck.semantics import build_automaton
    from oracles import has_cycle

    m = build_model(cfg("VVI"))
    auto = build_automaton(m.proctype("PaceGenerator"), m)
    assert has_cycle(auto)


def test_voo_normal_heart_deadlock_free():
    from pmlcheck.checker import check_deadlock

    m = build_model(cfg("VOO", heart=HeartBehavior("normal")))
    assert check_deadlock(m).verdict == "pass"


def test_generated_sources_round_trip():
    from pmlcheck import pretty

    for code in ("VVI", "DDD", "VDDR"):
        src = build_source(cfg(code))
        m1 = parse(src)
        m2 = parse(pretty.model(m1))
        assert m1 == m2
