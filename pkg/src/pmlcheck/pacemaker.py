"""Pacemaker model generation, property library and mode derivation.

The generated model is a token ring: UpdateTimers advances a global tick
and snapshots event flags, Heart fires intrinsic/conducted beats, Sensor
latches them, the optional Accelerometer/RateController pair picks an
activity level, and PaceGenerator implements the WXYZ mode letters.
Every process takes exactly one atomic turn per tick, so timing
properties are exact while interleaving stays explicit.

Chamber bookkeeping uses saturating age counters (ticks since the last
event of each kind) plus latches written at event time; properties are
invariants or response formulas over those globals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from . import nodes as n
from .checker import (
    Property,
    check_deadlock,
    check_invariant,
    check_response,
    CheckResult,
    DEFAULT_STATE_LIMIT,
)
from .diagnostics import ConfigError, PmlError
from .frontend import parse, parse_expr

BASE_MODES = ("VOO", "AOO", "DOO", "VVI", "AAI", "DDI", "VVT", "AAT", "VDD", "DDD")
RATE_MODES = ("VOOR", "AOOR", "DOOR", "VVIR", "AAIR", "DDIR", "VDDR", "DDDR")
ALL_MODES = BASE_MODES + RATE_MODES

HEART_KINDS = ("normal", "miss_atrium", "miss_ventricle", "dead", "nondeterministic")

RF_MAX = 4  # five activity thresholds, levels 0..4
# saturation caps; they only need to exceed every bound a property compares
AGE_CAP = 14
CLOCK_CAP = 16
TICKS_PER_PERIOD = 60  # rate (pulses per period) <-> interval conversion


@dataclass(frozen=True)
class Mode:
    paced: str  # A | V | D
    sensed: str  # A | V | D | O
    response: str  # I | T | D | O
    rate_controlled: bool = False

    @staticmethod
    def parse(code: str) -> "Mode":
        code = code.upper().strip()
        if code not in ALL_MODES:
            raise ConfigError(f"unknown operating mode {code!r}")
        rate = len(code) == 4
        return Mode(code[0], code[1], code[2], rate)

    @property
    def code(self) -> str:
        return self.paced + self.sensed + self.response + ("R" if self.rate_controlled else "")

    @property
    def base_code(self) -> str:
        return self.paced + self.sensed + self.response

    def paces(self, chamber: str) -> bool:
        return self.paced in (chamber, "D")

    def senses(self, chamber: str) -> bool:
        return self.sensed in (chamber, "D")


def all_modes() -> tuple[Mode, ...]:
    return tuple(Mode.parse(c) for c in ALL_MODES)


@dataclass(frozen=True)
class TimingParams:
    NR: int = 8  # intrinsic atrial period
    AVD: int = 2  # conduction delay of the heart
    Fixed_AVD: int = 4  # bound checked by the AV delay property
    LRL: int = 5  # lower rate limit (pulses per period)
    URL: int = 10  # upper rate limit
    MinTime: int = 6  # fastest pacing interval, from URL
    MaxTime: int = 12  # slowest pacing interval, from LRL
    rf_max: int = RF_MAX
    Increment: int = 1  # interval increase per response-factor step
    ARP: int = 2
    VRP: int = 2
    PVARP: int = 2
    hysteresis: bool = False

    @property
    def pacer_avd(self) -> int:
        """Pacer AV-sequential delay; beats the heart's conduction."""
        return self.AVD - 1


@dataclass(frozen=True)
class HeartBehavior:
    kind: str  # one of HEART_KINDS

    def __post_init__(self):
        if self.kind not in HEART_KINDS:
            raise ConfigError(f"unknown heart behavior {self.kind!r}")

    @property
    def sinus(self) -> bool:
        return self.kind in ("normal", "miss_ventricle", "nondeterministic")

    @property
    def conduction(self) -> bool:
        return self.kind in ("normal", "miss_atrium", "nondeterministic")

    @property
    def free_choice(self) -> bool:
        return self.kind == "nondeterministic"


@dataclass(frozen=True)
class PacemakerConfig:
    mode: Mode
    params: TimingParams = field(default_factory=TimingParams)
    heart: HeartBehavior = field(default_factory=lambda: HeartBehavior("normal"))

    def __post_init__(self):
        errors = validate_params(self.params)
        if errors:
            raise ConfigError("; ".join(errors))


def validate_params(params: TimingParams) -> list[str]:
    """Check the relational constraints; returns violation messages."""
    errors = []
    if not params.LRL < params.URL:
        errors.append("LRL < URL violated")
    if not params.MinTime < params.MaxTime:
        errors.append("MinTime < MaxTime violated")
    for name in ("ARP", "VRP", "PVARP"):
        if getattr(params, name) <= 0:
            errors.append(f"{name} > 0 violated")
    if not params.MinTime + params.rf_max * params.Increment < params.MaxTime:
        errors.append("MinTime + max(RF)*Increment < MaxTime violated")
    if params.hysteresis:
        if not params.AVD + params.rf_max * params.Increment < params.MaxTime:
            errors.append("AVD + max(RF)*Increment < MaxTime violated (hysteresis)")
    if params.AVD < 2:
        errors.append("AVD >= 2 violated (pacer AV delay would vanish)")
    if not params.NR > params.AVD:
        errors.append("NR > AVD violated")
    if not params.Fixed_AVD > params.AVD:
        errors.append("Fixed_AVD > AVD violated")
    if params.MinTime <= params.AVD:
        errors.append("MinTime > AVD violated")
    for name in ("NR", "MaxTime"):
        if getattr(params, name) >= AGE_CAP:
            errors.append(f"{name} < {AGE_CAP} violated (age counters saturate)")
    return errors


def params_from_rates(LRL: int, URL: int, **kwargs) -> TimingParams:
    """MinTime/MaxTime are derived from the rate limits."""
    return TimingParams(
        LRL=LRL,
        URL=URL,
        MinTime=TICKS_PER_PERIOD // URL,
        MaxTime=TICKS_PER_PERIOD // LRL,
        **kwargs,
    )


def load_params(path_or_text: str, is_text: bool = False) -> TimingParams:
    """Flat key=value parameter file; unknown keys are rejected."""
    if is_text:
        text = path_or_text
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    values: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, _, val = line.partition("=")
        values[key.strip()] = int(val.strip())
    known = {
        "NR", "AVD", "FIXED_AVD", "LRL", "URL", "MIN_TIME", "MAX_TIME",
        "INCREMENT", "ARP", "VRP", "PVARP", "HYSTERESIS", "RF_MAX",
    }
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    lrl = values.get("LRL", 5)
    url = values.get("URL", 10)
    return TimingParams(
        NR=values.get("NR", 8),
        AVD=values.get("AVD", 2),
        Fixed_AVD=values.get("FIXED_AVD", 4),
        LRL=lrl,
        URL=url,
        MinTime=values.get("MIN_TIME", TICKS_PER_PERIOD // url),
        MaxTime=values.get("MAX_TIME", TICKS_PER_PERIOD // lrl),
        rf_max=values.get("RF_MAX", RF_MAX),
        Increment=values.get("INCREMENT", 1),
        ARP=values.get("ARP", 2),
        VRP=values.get("VRP", 2),
        PVARP=values.get("PVARP", 2),
        hysteresis=bool(values.get("HYSTERESIS", 0)),
    )


def default_params() -> TimingParams:
    text = resources.files("pmlcheck.data").joinpath("pacemaker_defaults.cfg").read_text()
    return load_params(text, is_text=True)


def indicated_heart(mode: Mode) -> HeartBehavior:
    """The heart condition a mode is meant to treat (used as default)."""
    if mode.paced == "A":
        return HeartBehavior("miss_atrium")
    if mode.paced == "V" and mode.sensed != "D":
        return HeartBehavior("miss_ventricle")
    return HeartBehavior("dead")


def pacing_interval(rf: int, params: TimingParams, hysteresis_after_sense: bool = False) -> int:
    """Ticks to wait before the next pace at response-factor level rf."""
    if not 0 <= rf <= params.rf_max:
        raise ConfigError(f"rf must be in 0..{params.rf_max}")
    base = params.AVD if hysteresis_after_sense else params.MinTime
    return base + rf * params.Increment


# ---------------------------------------------------------------------------
# model source generation


def _defines(params: TimingParams) -> str:
    return "\n".join(
        [
            f"#define NR {params.NR}",
            f"#define AVD {params.AVD}",
            f"#define FIXED_AVD {params.Fixed_AVD}",
            f"#define MIN_TIME {params.MinTime}",
            f"#define MAX_TIME {params.MaxTime}",
            f"#define INCREMENT {params.Increment}",
            f"#define PACER_AVD {params.pacer_avd}",
            f"#define AGE_CAP {AGE_CAP}",
            f"#define CLOCK_CAP {CLOCK_CAP}",
        ]
    )


def _globals_block(params: TimingParams, with_rate: bool) -> str:
    lines = [
        "byte turn;",
        "byte clock;",
        "bit heart_a; bit heart_v;",
        "bit sense_a; bit sense_v;",
        "bit pace_a; bit pace_v;",
        "bit obs_sense_a; bit obs_sense_v;",
        "bit obs_pace_a; bit obs_pace_v;",
        "bit a_pend;",
        "bit cyc_a; bit cyc_v;",
        "byte a_age; byte v_age;",
        "byte pa_age; byte pv_age;",
        "byte sa_age; byte sv_age;",
        "byte la_age; byte lv_age;",
        "byte gap_a; byte gap_v;",
        "byte av_delay;",
        f"byte v_latch = {params.MaxTime};",
        "byte ref_a; byte ref_v; byte ref_pv;",
        "byte Last_PacedA; byte Last_PacedV;",
        "byte Last_SensedA; byte Last_SensedV;",
    ]
    if with_rate:
        lines.append("byte activity; byte rf;")
    return "\n".join(lines)


def _clamp(var: str) -> str:
    return f"{var} = {var} + 1 - ({var} >= AGE_CAP)"


def _update_timers(me: int, nxt: int) -> str:
    body = [
        "obs_sense_a = sense_a",
        "obs_sense_v = sense_v",
        "obs_pace_a = pace_a",
        "obs_pace_v = pace_v",
        "if :: sense_a == 1 -> sa_age = 0 :: else -> " + _clamp("sa_age") + " fi",
        "if :: sense_v == 1 -> sv_age = 0 :: else -> " + _clamp("sv_age") + " fi",
        "if :: heart_a == 1 || pace_a == 1 -> la_age = 0 :: else -> " + _clamp("la_age") + " fi",
        "if :: heart_v == 1 || pace_v == 1 -> lv_age = 0 :: else -> " + _clamp("lv_age") + " fi",
        "heart_a = 0; heart_v = 0; sense_a = 0; sense_v = 0; pace_a = 0; pace_v = 0",
        _clamp("a_age"),
        _clamp("v_age"),
        _clamp("pa_age"),
        _clamp("pv_age"),
        "clock = clock + 1 - (clock >= CLOCK_CAP)",
        "if :: cyc_a == 1 && cyc_v == 1 -> clock = 0; cyc_a = 0; cyc_v = 0; "
        "Last_PacedA = 0; Last_PacedV = 0; Last_SensedA = 0; Last_SensedV = 0 "
        ":: else -> skip fi",
    ]
    return _turn_proc("UpdateTimers", me, nxt, ";\n        ".join(body))


def _turn_proc(name: str, me: int, nxt: int, work: str) -> str:
    return (
        f"active proctype {name}()"
        "{\n    do\n    :: atomic { turn == %d ->\n        %s;\n        turn = %d }\n    od\n}"
        % (me, work, nxt)
    )


_FIRE_A = "heart_a = 1; a_age = 0; a_pend = 1; cyc_a = 1"
_FIRE_V = "heart_v = 1; av_delay = a_age; v_latch = v_age; v_age = 0; a_pend = 0; cyc_v = 1"


def _heart(behavior: HeartBehavior, me: int, nxt: int) -> str:
    options = []
    if behavior.sinus:
        act = _FIRE_A
        if behavior.free_choice:
            act = f"if :: {act} :: skip fi"
        options.append(f":: a_age >= NR -> {act}")
    if behavior.conduction:
        act = _FIRE_V
        if behavior.free_choice:
            act = f"if :: {act} :: skip fi"
        options.append(f":: a_pend == 1 && a_age == AVD -> {act}")
    options.append(":: else -> skip")
    work = "if\n        " + "\n        ".join(options) + "\n        fi"
    return _turn_proc("Heart", me, nxt, work)


def _sensor(me: int, nxt: int) -> str:
    work = (
        "if :: heart_a == 1 -> sense_a = 1; Last_SensedA = clock :: else -> skip fi;\n"
        "        if :: heart_v == 1 -> sense_v = 1; Last_SensedV = clock :: else -> skip fi"
    )
    return _turn_proc("Sensor", me, nxt, work)


def _accelerometer(me: int, nxt: int) -> str:
    opts = " ".join(f":: activity = {k}" for k in range(RF_MAX + 1))
    return _turn_proc("Accelerometer", me, nxt, f"if {opts} fi")


def _rate_controller(me: int, nxt: int) -> str:
    return _turn_proc("RateController", me, nxt, "rf = activity")


def _pace_a_actions(params: TimingParams, hyst: bool) -> str:
    acts = (
        "pace_a = 1; gap_a = pa_age; ref_a = sa_age; ref_pv = lv_age; "
        "Last_PacedA = clock; pa_age = 0; a_age = 0; a_pend = 1; cyc_a = 1"
    )
    if hyst:
        acts += "; hy_a = 0"
    return acts


def _pace_v_actions(params: TimingParams, hyst: bool) -> str:
    acts = (
        "pace_v = 1; gap_v = pv_age; ref_v = sv_age; av_delay = a_age * a_pend; "
        "v_latch = v_age; Last_PacedV = clock; pv_age = 0; v_age = 0; "
        "a_pend = 0; cyc_v = 1"
    )
    if hyst:
        acts += "; hy_v = 0"
    return acts


def pace_generator_branches(mode: Mode, params: TimingParams) -> list[str]:
    """The `:: guard -> actions` options of the PaceGenerator turn."""
    rate = mode.rate_controlled
    hyst = params.hysteresis and mode.response in ("I", "D")
    interval = "MIN_TIME + rf * INCREMENT" if rate else "MIN_TIME"
    hy_interval = "AVD + rf * INCREMENT"
    branches: list[str] = []

    if mode.paces("A"):
        act = _pace_a_actions(params, hyst)
        if mode.response in ("O", "T"):
            branches.append(f":: pa_age >= {interval} -> {act}")
        else:  # inhibited or tracked: escape from the last atrial event
            if hyst:
                branches.append(f":: hy_a == 0 && a_age >= {interval} -> {act}")
                branches.append(f":: hy_a == 1 && a_age >= {hy_interval} -> {act}")
            else:
                branches.append(f":: a_age >= {interval} -> {act}")
        if mode.response == "T" and mode.senses("A"):
            branches.append(f":: sense_a == 1 -> {act}")
        if hyst and mode.senses("A"):
            branches.append(":: sense_a == 1 && hy_a == 0 -> hy_a = 1")

    if mode.paces("V"):
        act = _pace_v_actions(params, hyst)
        if mode.paced == "D":
            if mode.response == "O":
                # AV-sequential from the pacer's own atrial pulse only
                branches.append(f":: a_pend == 1 && pa_age == PACER_AVD -> {act}")
            else:
                branches.append(f":: a_pend == 1 && a_age == PACER_AVD -> {act}")
        elif mode.sensed == "D" and mode.response == "D":
            # VDD: track atrial events, escape at the lower rate limit
            branches.append(f":: a_pend == 1 && a_age == PACER_AVD -> {act}")
            esc = interval if rate else "MAX_TIME"
            if hyst:
                branches.append(f":: hy_v == 0 && v_age >= {esc} -> {act}")
                branches.append(f":: hy_v == 1 && v_age >= {hy_interval} -> {act}")
            else:
                branches.append(f":: v_age >= {esc} -> {act}")
        else:
            if mode.response in ("O", "T"):
                branches.append(f":: pv_age >= {interval} -> {act}")
            else:
                if hyst:
                    branches.append(f":: hy_v == 0 && v_age >= {interval} -> {act}")
                    branches.append(f":: hy_v == 1 && v_age >= {hy_interval} -> {act}")
                else:
                    branches.append(f":: v_age >= {interval} -> {act}")
            if mode.response == "T" and mode.senses("V"):
                branches.append(f":: sense_v == 1 -> {act}")
        if hyst and mode.senses("V") and mode.paced != "A":
            branches.append(":: sense_v == 1 && hy_v == 0 -> hy_v = 1")

    return branches


def _pace_generator(mode: Mode, params: TimingParams, me: int, nxt: int) -> str:
    branches = pace_generator_branches(mode, params)
    branches.append(":: else -> skip")
    work = "if\n        " + "\n        ".join(branches) + "\n        fi"
    return _turn_proc("PaceGenerator", me, nxt, work)


def build_source(config: PacemakerConfig) -> str:
    """Emit the model as subset source text."""
    mode, params = config.mode, config.params
    with_rate = mode.rate_controlled or params.hysteresis
    hyst = params.hysteresis and mode.response in ("I", "D")
    nproc = 6 if with_rate else 4
    parts = [_defines(params), _globals_block(params, with_rate)]
    if hyst:
        parts.append("bit hy_a; bit hy_v;")
    parts.append(_update_timers(0, 1))
    parts.append(_heart(config.heart, 1, 2))
    if with_rate:
        parts.append(_sensor(2, 3))
        parts.append(_accelerometer(3, 4))
        parts.append(_rate_controller(4, 5))
        parts.append(_pace_generator(mode, params, 5, 0))
    else:
        parts.append(_sensor(2, 3))
        parts.append(_pace_generator(mode, params, 3, 0))
    return "\n\n".join(parts) + "\n"


def build_model(config: PacemakerConfig) -> n.Model:
    """Generate and re-validate the model for a configuration."""
    return parse(build_source(config), filename=f"<pacemaker:{config.mode.code}>")


# ---------------------------------------------------------------------------
# property library


def _cond(name: str, p: str, q: str) -> Property:
    return Property.conditional(name, parse_expr(p), parse_expr(q))


def property_suite(config: PacemakerConfig) -> list[Property]:
    """The applicable properties for a mode, per the verification matrix."""
    mode, params = config.mode, config.params
    props: list[Property] = [Property.deadlock()]
    if mode.paces("A"):
        props.append(
            _cond(
                "pace_limit_a",
                "obs_pace_a == 1",
                f"gap_a >= {params.MinTime} && gap_a <= {params.MaxTime}",
            )
        )
    if mode.paces("V"):
        props.append(
            _cond(
                "pace_limit_v",
                "obs_pace_v == 1",
                f"gap_v >= {params.MinTime} && gap_v <= {params.MaxTime}",
            )
        )
    if mode.paced == "D" or mode.sensed == "D":
        props.append(
            Property.invariant("av_delay", parse_expr(f"av_delay < {params.Fixed_AVD}"))
        )
    if mode.paces("A"):
        props.append(_cond("refractory_arp", "obs_pace_a == 1", f"ref_a > {params.ARP}"))
        props.append(_cond("refractory_pvarp", "obs_pace_a == 1", f"ref_pv > {params.PVARP}"))
    if mode.paces("V"):
        props.append(_cond("refractory_vrp", "obs_pace_v == 1", f"ref_v > {params.VRP}"))
    if mode.response == "I":
        if mode.senses("A") and mode.paces("A"):
            props.append(_cond("inhibiting_a", "obs_sense_a == 1", "obs_pace_a == 0"))
        if mode.senses("V") and mode.paces("V"):
            props.append(_cond("inhibiting_v", "obs_sense_v == 1", "obs_pace_v == 0"))
    if mode.response == "T":
        if mode.senses("A") and mode.paces("A"):
            props.append(_cond("triggering_a", "obs_sense_a == 1", "obs_pace_a == 1"))
        if mode.senses("V") and mode.paces("V"):
            props.append(_cond("triggering_v", "obs_sense_v == 1", "obs_pace_v == 1"))
    if mode.response == "D":
        props.append(
            Property.response(
                "tracking",
                parse_expr("obs_sense_a == 1"),
                parse_expr(f"obs_pace_v == 1 && av_delay < {params.Fixed_AVD}"),
            )
        )
    return props


PROPERTY_ROWS = (
    "deadlock",
    "pace_limit",
    "av_delay",
    "refractory",
    "inhibiting",
    "triggering",
    "tracking",
)

_ROW_OF = {
    "deadlock": "deadlock",
    "pace_limit_a": "pace_limit",
    "pace_limit_v": "pace_limit",
    "av_delay": "av_delay",
    "refractory_arp": "refractory",
    "refractory_vrp": "refractory",
    "refractory_pvarp": "refractory",
    "inhibiting_a": "inhibiting",
    "inhibiting_v": "inhibiting",
    "triggering_a": "triggering",
    "triggering_v": "triggering",
    "tracking": "tracking",
}


def row_of(prop_name: str) -> str:
    return _ROW_OF[prop_name]


def check_property(model: n.Model, prop: Property,
                   limit: int = DEFAULT_STATE_LIMIT, system=None) -> CheckResult:
    if prop.pattern == "deadlock":
        return check_deadlock(model, limit, system=system)
    if prop.pattern == "response":
        return check_response(model, prop, limit, system=system)
    return check_invariant(model, prop, limit, system=system)


def verify(config: PacemakerConfig, limit: int = DEFAULT_STATE_LIMIT) -> dict[str, CheckResult]:
    """Check every applicable property of the configuration."""
    model = build_model(config)
    return {
        prop.name: check_property(model, prop, limit)
        for prop in property_suite(config)
    }


def verification_matrix(params: Optional[TimingParams] = None,
                        heart: Optional[HeartBehavior] = None,
                        limit: int = DEFAULT_STATE_LIMIT):
    """mode x property-row verdicts over the ten base modes.

    Each mode is checked against its indicated heart condition unless an
    explicit behavior is given; blank cells mean not applicable.
    """
    params = params or default_params()
    out: dict[str, dict[str, str]] = {}
    for code in BASE_MODES:
        mode = Mode.parse(code)
        config = PacemakerConfig(mode, params, heart or indicated_heart(mode))
        results = verify(config, limit)
        rows: dict[str, str] = {row: "not_applicable" for row in PROPERTY_ROWS}
        for name, result in results.items():
            row = row_of(name)
            if rows[row] == "fail":
                continue
            if result.verdict == "fail":
                rows[row] = "fail"
            elif rows[row] == "not_applicable":
                rows[row] = result.verdict
        out[code] = rows
    return out


def render_matrix(matrix: dict[str, dict[str, str]]) -> str:
    """Aligned text table, one property row per line, modes as columns."""
    cols = list(matrix)
    width = max(len(r) for r in PROPERTY_ROWS) + 2
    mark = {"pass": "ok", "fail": "FAIL", "not_applicable": "-"}
    header = " " * width + " ".join(f"{c:>5}" for c in cols)
    lines = [header]
    for row in PROPERTY_ROWS:
        cells = [f"{mark[matrix[c][row]]:>5}" for c in cols]
        lines.append(f"{row:<{width}}" + " ".join(cells))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# consistent operating modes (condition -> mode set)


CONDITIONS = ("missA", "missV", "dead")

_CONDITION_HEART = {
    "missA": "miss_atrium",
    "missV": "miss_ventricle",
    "dead": "dead",
}


def consistency_property(condition: str, params: TimingParams) -> Property:
    """Chamber-support invariant a consistent mode must uphold.

    missA: both chambers keep beating and the ventricle is never paced
    (the live conduction path must not be competed with).
    missV: the ventricle is paced at the programmed interval and the
    atria are left alone.
    dead: the ventricle is always supported and either the atria are
    paced too, or ventricular support runs exactly at the lower rate
    limit (tracked standby).
    """
    if condition == "missA":
        return Property.invariant(
            "consistency_missA",
            parse_expr(
                f"pace_v == 0 && a_age <= {params.NR} && v_age <= {params.NR}"
            ),
        )
    if condition == "missV":
        return Property.invariant(
            "consistency_missV",
            parse_expr(
                f"pace_a == 0 && v_age <= {params.MinTime} && a_age <= {params.NR}"
            ),
        )
    if condition == "dead":
        return Property.invariant(
            "consistency_dead",
            parse_expr(
                f"v_age <= {params.MaxTime} && "
                f"(a_age <= {params.NR} || v_latch >= {params.MaxTime})"
            ),
        )
    raise ConfigError(f"unknown condition {condition!r}")


def derive_modes(condition: str, prop: Optional[Property] = None,
                 params: Optional[TimingParams] = None,
                 limit: int = DEFAULT_STATE_LIMIT) -> set[Mode]:
    """Sweep the base modes under a heart condition; return those passing."""
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}")
    params = params or default_params()
    prop = prop or consistency_property(condition, params)
    heart = HeartBehavior(_CONDITION_HEART[condition])
    passing: set[Mode] = set()
    for code in BASE_MODES:
        mode = Mode.parse(code)
        config = PacemakerConfig(mode, params, heart)
        model = build_model(config)
        try:
            result = check_property(model, prop, limit)
        except PmlError:
            continue  # an erroring mode must not abort the sweep
        if result.verdict == "pass":
            passing.add(mode)
    return passing


def build_combined_source(condition: str, params: TimingParams) -> str:
    """One model whose operating mode is chosen nondeterministically."""
    heart = HeartBehavior(_CONDITION_HEART[condition])
    parts = [_defines(params), _globals_block(params, False)]
    parts.append("mtype = { " + ", ".join(f"MODE_{c}" for c in BASE_MODES) + " }")
    parts.append("mtype Operating_Mode;")
    chooser_opts = " ".join(
        f":: Operating_Mode = MODE_{c}" for c in BASE_MODES
    )
    parts.append(
        "active proctype ModeChooser(){\n"
        f"    atomic {{ turn == 0 -> if {chooser_opts} fi; turn = 1 }}\n"
        "}"
    )
    parts.append(_update_timers(1, 2))
    parts.append(_heart(heart, 2, 3))
    parts.append(_sensor(3, 4))
    all_branches: list[str] = []
    for code in BASE_MODES:
        mode = Mode.parse(code)
        for br in pace_generator_branches(mode, params):
            guard, _, rest = br.partition("->")
            guard = guard[2:].strip()
            all_branches.append(
                f":: Operating_Mode == MODE_{code} && ({guard}) ->{rest}"
            )
    all_branches.append(":: else -> skip")
    work = "if\n        " + "\n        ".join(all_branches) + "\n        fi"
    parts.append(_turn_proc("PaceGenerator", 4, 1, work))
    return "\n\n".join(parts) + "\n"


def derive_modes_nondet(condition: str, params: Optional[TimingParams] = None,
                        limit: int = DEFAULT_STATE_LIMIT) -> set[Mode]:
    """Mode derivation over the single nondeterministic-mode model.

    The consistency predicate is checked once per candidate assignment
    of Operating_Mode, so a failing mode shows up as a counterexample
    carrying that assignment.
    """
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}")
    params = params or default_params()
    model = parse(build_combined_source(condition, params))
    base = consistency_property(condition, params)
    passing: set[Mode] = set()
    for code in BASE_MODES:
        prop = Property.conditional(
            f"{base.name}_{code}",
            parse_expr(f"Operating_Mode == MODE_{code}"),
            base.pred,
        )
        result = check_invariant(model, prop, limit)
        if result.verdict == "pass":
            passing.add(Mode.parse(code))
    return passing
