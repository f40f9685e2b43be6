"""The 158-variable tabular schema and the 10-variable limited set.

Variable classes: demographics (3), vitals (5), laboratory (2), echo
measurements (58: the physician-reported ejection fraction, 47 other
continuous measurements, 8 ordinal valve-severity scores, and the ordinal
diastolic-function grade), and 90 binary diagnosis-code flags.

Physiologic limits ship as editable defaults per continuous variable;
values outside them are treated as entry errors during cleaning. The
valve-severity scores take integer values 0..3 (one column each, keeping
the full set at exactly 158 variables); missing severities default to 0,
meaning no reported disease.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError

CLASS_DEMOGRAPHICS = "demographics"
CLASS_VITALS = "vitals"
CLASS_LABORATORY = "laboratory"
CLASS_ECHO = "echo-measure"
CLASS_DIAGNOSIS = "diagnosis-code"

KIND_CONTINUOUS = "continuous"
KIND_BINARY = "binary"
KIND_ORDINAL = "ordinal"
KIND_SEVERITY = "one-hot-severity"


@dataclass(frozen=True)
class Variable:
    name: str
    units: str
    var_class: str
    kind: str
    limits: tuple | None = None   # inclusive physiologic range, None = no limits


def _echo(name, units, limits):
    return Variable(name, units, CLASS_ECHO, KIND_CONTINUOUS, limits)


_CORE: list[Variable] = [
    Variable("age", "years", CLASS_DEMOGRAPHICS, KIND_CONTINUOUS, (0.0, 120.0)),
    Variable("sex", "0/1", CLASS_DEMOGRAPHICS, KIND_BINARY),
    Variable("smoking_status", "0/1", CLASS_DEMOGRAPHICS, KIND_BINARY),
    Variable("height", "cm", CLASS_VITALS, KIND_CONTINUOUS, (30.0, 250.0)),
    Variable("weight", "kg", CLASS_VITALS, KIND_CONTINUOUS, (1.0, 400.0)),
    Variable("heart_rate", "bpm", CLASS_VITALS, KIND_CONTINUOUS, (10.0, 300.0)),
    Variable("diastolic_blood_pressure", "mm Hg", CLASS_VITALS, KIND_CONTINUOUS, (10.0, 200.0)),
    Variable("systolic_blood_pressure", "mm Hg", CLASS_VITALS, KIND_CONTINUOUS, (30.0, 300.0)),
    Variable("ldl", "mg/dL", CLASS_LABORATORY, KIND_CONTINUOUS, (0.0, 500.0)),
    Variable("hdl", "mg/dL", CLASS_LABORATORY, KIND_CONTINUOUS, (0.0, 300.0)),
    _echo("lvef", "%", (1.0, 100.0)),
]

# continuous echocardiography measurements (broad clinical ranges)
_ECHO_CONT: list[Variable] = [
    _echo("ai_dec_slope", "cm/s^2", (0.0, 3000.0)),
    _echo("ai_max_vel", "cm/s", (0.0, 1000.0)),
    _echo("ao_v2_vti", "cm", (0.0, 300.0)),
    _echo("ao_v2_max", "cm/s", (0.0, 1000.0)),
    _echo("ao_v2_mean", "cm/s", (0.0, 800.0)),
    _echo("ao_root_diam", "cm", (0.5, 10.0)),
    _echo("asc_aorta", "cm", (0.5, 10.0)),
    _echo("edv_mod_sp2", "ml", (1.0, 900.0)),
    _echo("edv_mod_sp4", "ml", (1.0, 900.0)),
    _echo("edv_sp2_el", "ml", (1.0, 900.0)),
    _echo("edv_sp4_el", "ml", (1.0, 900.0)),
    _echo("esv_mod_sp2", "ml", (1.0, 800.0)),
    _echo("esv_mod_sp4", "ml", (1.0, 800.0)),
    _echo("esv_sp2_el", "ml", (1.0, 800.0)),
    _echo("esv_sp4_el", "ml", (1.0, 800.0)),
    _echo("ivsd", "cm", (0.1, 5.0)),
    _echo("la_dimension", "cm", (0.5, 10.0)),
    _echo("lav_mod_sp2", "ml", (1.0, 500.0)),
    _echo("lav_mod_sp4", "ml", (1.0, 500.0)),
    _echo("lv_v1_vti", "cm", (0.0, 200.0)),
    _echo("lv_v1_max", "cm/s", (0.0, 800.0)),
    _echo("lv_v1_mean", "cm/s", (0.0, 600.0)),
    _echo("lva_d_ap2", "cm^2", (1.0, 200.0)),
    _echo("lva_d_ap4", "cm^2", (1.0, 200.0)),
    _echo("lva_s_ap2", "cm^2", (1.0, 200.0)),
    _echo("lva_s_ap4", "cm^2", (1.0, 200.0)),
    _echo("lvid_d", "cm", (0.5, 12.0)),
    _echo("lvid_s", "cm", (0.5, 12.0)),
    _echo("lvl_d_ap2", "cm", (1.0, 15.0)),
    _echo("lvl_d_ap4", "cm", (1.0, 15.0)),
    _echo("lvl_s_ap2", "cm", (1.0, 15.0)),
    _echo("lvl_s_ap4", "cm", (1.0, 15.0)),
    _echo("lvot_area_m", "cm^2", (0.1, 20.0)),
    _echo("lvot_diam", "cm", (0.3, 6.0)),
    _echo("lvpw_d", "cm", (0.1, 5.0)),
    _echo("mr_max_vel", "cm/s", (0.0, 1000.0)),
    _echo("mv_a_point", "cm/s", (0.0, 400.0)),
    _echo("mv_e_point", "cm/s", (0.0, 400.0)),
    _echo("mv_p12t_max_vel", "cm/s", (0.0, 500.0)),
    _echo("mv_dec_slope", "cm/s^2", (0.0, 3000.0)),
    _echo("mv_dec_time", "s", (0.01, 2.0)),
    _echo("pa_v2_max", "cm/s", (0.0, 600.0)),
    _echo("pa_acc_slope", "cm/s^2", (0.0, 3000.0)),
    _echo("pa_acc_time", "s", (0.01, 1.0)),
    _echo("pulm_r_r", "s", (0.2, 3.0)),
    _echo("rap_systole", "mm Hg", (0.0, 50.0)),
    _echo("rvd_d", "cm", (0.5, 10.0)),
    _echo("tr_max_vel", "cm/s", (0.0, 800.0)),
]

_SEVERITY_NAMES = ("avr", "mvr", "tvr", "pvr", "avs", "mvs", "tvs", "pvs")
_SEVERITY: list[Variable] = [
    Variable(name, "severity 0-3", CLASS_ECHO, KIND_SEVERITY) for name in _SEVERITY_NAMES
]

_DIASTOLIC = Variable("diastolic_function", "-1 normal, 0 ungraded, 1-3 grade",
                      CLASS_ECHO, KIND_ORDINAL)

_ICD_PREFIXES = (
    "i00", "i01", "i02",
    "i05", "i06", "i07", "i08", "i09",
    "i10", "i11", "i12", "i13", "i15", "i16",
    "i20", "i21", "i22", "i23", "i24", "i25",
    "i26", "i27", "i28",
    "i30",
    "i31", "i32", "i33", "i34", "i35", "i36", "i37", "i38", "i39", "i43", "i44",
    "i45", "i49", "i51",
    "i40",
    "i42",
    "i46",
    "i47",
    "i48",
    "i50",
    "i60", "i61", "i62", "i63", "i65", "i66", "i67", "i68", "i69",
    "i70", "i71", "i72", "i73", "i74", "i75", "i76", "i77", "i78", "i79",
    "i80", "i81", "i82", "i83", "i85", "i86", "i87", "i88", "i89",
    "i95",
    "i96", "i97", "i99",
    "e08", "e09", "e10", "e11", "e13",
    "q20", "q21", "q22", "q23", "q24", "q25", "q26",
    "e78",
    "n18",
)

_DIAGNOSIS: list[Variable] = [
    Variable(f"dx_{code}", "0/1", CLASS_DIAGNOSIS, KIND_BINARY) for code in _ICD_PREFIXES
]

FULL_SCHEMA: tuple[Variable, ...] = tuple(
    _CORE + _ECHO_CONT + _SEVERITY + [_DIASTOLIC] + _DIAGNOSIS)

FULL_NAMES: tuple[str, ...] = tuple(v.name for v in FULL_SCHEMA)

# the 10 variables previously shown to carry most of the 1-year signal
LIMITED_SET: tuple[str, ...] = (
    "age", "tr_max_vel", "heart_rate", "ldl", "lvef",
    "diastolic_blood_pressure", "pa_acc_time", "systolic_blood_pressure",
    "pa_acc_slope", "diastolic_function",
)

_BY_NAME = {v.name: v for v in FULL_SCHEMA}


def get_variable(name: str) -> Variable:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ConfigError(f"unknown variable {name!r}") from None


def continuous_names() -> tuple[str, ...]:
    return tuple(v.name for v in FULL_SCHEMA if v.kind == KIND_CONTINUOUS)


def schema_width(limited: bool = False) -> int:
    return len(LIMITED_SET) if limited else len(FULL_SCHEMA)


assert len(FULL_SCHEMA) == 158, f"schema drifted: {len(FULL_SCHEMA)} variables"
assert len(set(FULL_NAMES)) == 158, "duplicate variable names"
assert all(n in _BY_NAME for n in LIMITED_SET)
