"""Unit system and barrier parameters.

Everything is carried in eV, nm and fs. With these units

    hbar^2 / 2m  [eV nm^2]
    hbar / m     [nm^2 / fs]

are the only combinations the rest of the package needs.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

HBAR_EV_FS = 0.6582119514
HBAR2_OVER_2ME_EV_NM2 = 0.0380998


class BarrierConfigError(ValueError):
    """Invalid barrier parameter or configuration entry."""

    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name


def _check_positive(name: str, value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise BarrierConfigError(name, f"expected a number, got {value!r}") from None
    if not math.isfinite(value) or value <= 0.0:
        raise BarrierConfigError(name, f"must be finite and > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class UnitSystem:
    """Physical constants: hbar [eV fs] and hbar^2/2m_e [eV nm^2]."""

    hbar: float = HBAR_EV_FS
    hbar2_over_2me: float = HBAR2_OVER_2ME_EV_NM2

    def __post_init__(self):
        _check_positive("hbar", self.hbar)
        _check_positive("hbar2_over_2me", self.hbar2_over_2me)


def make_unit_system(hbar: float | None = None,
                     hbar2_over_2me: float | None = None) -> UnitSystem:
    """Return the canonical constants, optionally overriding either one."""
    return UnitSystem(
        hbar=HBAR_EV_FS if hbar is None else hbar,
        hbar2_over_2me=HBAR2_OVER_2ME_EV_NM2 if hbar2_over_2me is None else hbar2_over_2me,
    )


@dataclass(frozen=True)
class BarrierSpec:
    """Rectangular barrier of height ``V0`` on ``0 <= x <= d`` plus the
    incident energy ``E``.

    Parameters
    ----------
    V0 : float
        Barrier height [eV].
    d : float
        Barrier width [nm].
    mass_ratio : float
        Effective mass in units of the bare electron mass.
    E : float
        Incident energy [eV]. ``E > V0`` is allowed.
    units : UnitSystem
        Constants used for the derived quantities.
    """

    V0: float
    d: float
    mass_ratio: float
    E: float
    units: UnitSystem = field(default_factory=make_unit_system)

    def __post_init__(self):
        for name in ("V0", "d", "mass_ratio", "E"):
            object.__setattr__(self, name, _check_positive(name, getattr(self, name)))

    @property
    def hbar2_over_2m(self) -> float:
        return self.units.hbar2_over_2me / self.mass_ratio

    @property
    def hbar_over_m(self) -> float:
        """hbar/m in nm^2/fs."""
        return 2.0 * self.hbar2_over_2m / self.units.hbar

    @property
    def k0(self) -> float:
        return math.sqrt(self.E / self.hbar2_over_2m)

    @property
    def kprime(self) -> float:
        return math.sqrt(self.V0 / self.hbar2_over_2m)

    @property
    def opacity(self) -> float:
        return self.kprime * self.d

    @property
    def velocity(self) -> float:
        """Classical incident velocity hbar*k0/m in nm/fs."""
        return self.hbar_over_m * self.k0

    @property
    def t_f(self) -> float:
        """Free passage time m*d/(hbar*k0) in fs."""
        return self.d / self.velocity

    def with_(self, **changes) -> "BarrierSpec":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return BarrierSpec(**values)


def barrier_from_config(V0, d, mass_ratio, E, units: UnitSystem | None = None) -> BarrierSpec:
    return BarrierSpec(V0=V0, d=d, mass_ratio=mass_ratio, E=E,
                       units=make_unit_system() if units is None else units)


def reference_barrier(units: UnitSystem | None = None) -> BarrierSpec:
    """GaAs-like example: V0=0.70 eV, d=10.083 nm, E=0.140 eV, m=0.067 m_e."""
    return barrier_from_config(0.70, 10.083, 0.067, 0.140, units)


_BARRIER_KEYS = {"V0_eV": "V0", "d_nm": "d", "mass_ratio": "mass_ratio", "E_eV": "E"}
_UNIT_KEYS = {"hbar_eV_fs": "hbar", "hbar2_over_2me_eV_nm2": "hbar2_over_2me"}
_ROOT = "barrier"


@dataclass(frozen=True)
class RunConfig:
    barrier: BarrierSpec
    tolerances: dict = field(default_factory=dict)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` text.

    Top-level keys are ``V0_eV``, ``d_nm``, ``mass_ratio`` and ``E_eV``
    (all required) plus the optional constant overrides ``hbar_eV_fs`` and
    ``hbar2_over_2me_eV_nm2``. An optional ``[tolerances]`` section is
    passed through to the verification layer, which validates its keys.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(f"[{_ROOT}]\n" + text, source=source)
    except configparser.Error as exc:
        raise BarrierConfigError("config", str(exc)) from None

    for section in parser.sections():
        if section not in (_ROOT, "tolerances"):
            raise BarrierConfigError(section, "unknown section")

    top = dict(parser[_ROOT])
    unknown = set(top) - set(_BARRIER_KEYS) - set(_UNIT_KEYS)
    if unknown:
        raise BarrierConfigError(sorted(unknown)[0], "unknown key")
    missing = [k for k in _BARRIER_KEYS if k not in top]
    if missing:
        raise BarrierConfigError(missing[0], "missing required key")

    unit_args = {_UNIT_KEYS[k]: _check_positive(k, v) for k, v in top.items() if k in _UNIT_KEYS}
    units = make_unit_system(**unit_args)
    args = {}
    for key, name in _BARRIER_KEYS.items():
        args[name] = _check_positive(key, top[key])
    barrier = barrier_from_config(units=units, **args)

    tolerances = {}
    if parser.has_section("tolerances"):
        for key, value in parser["tolerances"].items():
            tolerances[key] = _check_positive(key, value)
    return RunConfig(barrier=barrier, tolerances=tolerances)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise BarrierConfigError(str(path), f"cannot read config ({exc.strerror})") from None
    return parse_config(text, source=str(path))
