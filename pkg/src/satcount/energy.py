"""Onboard energy accounting.

A satellite run has a fixed joule budget for the day (harvested energy times
the fraction reserved for computing).  Every activity that draws power is
charged against a ledger before it happens; once the budget cannot cover a
charge the ledger refuses it and the caller stops that activity class.

Joules are tracked internally as integer microjoules so that repeated small
charges stay exact: a 150 kJ budget divided by 0.6 J per tile admits exactly
250000 tiles, with no float drift deciding the last one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError

ACTIVITIES = ("capture", "compute", "aggregate", "downlink")

_UJ = 1_000_000  # microjoules per joule


class BudgetExhausted(Exception):
    """A charge would push the ledger past its budget.

    The ledger is left unmodified.  ``shortfall_joules`` says by how much the
    attempted charge overshot.
    """

    def __init__(self, activity: str, shortfall_joules: float):
        self.activity = activity
        self.shortfall_joules = shortfall_joules
        super().__init__(
            f"energy budget exhausted during {activity}: "
            f"short by {shortfall_joules:.6f} J"
        )


@dataclass(frozen=True)
class HardwareProfile:
    """Power characteristics of an onboard compute board plus its radio."""

    name: str
    compute_watts: float
    radio_watts: float = 10.0
    capture_joules_per_frame: float = 0.05
    aggregate_joules_per_track: float = 1.0

    def __post_init__(self):
        if self.compute_watts <= 0:
            raise ValidationError("compute_watts must be > 0")
        if self.radio_watts <= 0:
            raise ValidationError("radio_watts must be > 0")
        if self.capture_joules_per_frame < 0:
            raise ValidationError("capture_joules_per_frame must be >= 0")
        if self.aggregate_joules_per_track < 0:
            raise ValidationError("aggregate_joules_per_track must be >= 0")


HARDWARE_PRESETS = {
    "rpi4": HardwareProfile(name="rpi4", compute_watts=6.0),
    "atlas": HardwareProfile(name="atlas", compute_watts=13.0),
}


def hardware_preset(name: str) -> HardwareProfile:
    try:
        return HARDWARE_PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown hardware preset {name!r}; expected one of {sorted(HARDWARE_PRESETS)}"
        ) from None


def daily_budget(harvest_joules: float, compute_fraction: float) -> float:
    """Joules available for computing out of a day's harvested energy."""
    if harvest_joules < 0:
        raise ValidationError("harvest_joules must be >= 0")
    if not 0.0 < compute_fraction <= 1.0:
        raise ValidationError("compute_fraction must be in (0, 1]")
    return harvest_joules * compute_fraction


def compute_energy(profile: HardwareProfile, seconds: float) -> float:
    """Energy drawn by the compute board running for ``seconds``."""
    if seconds < 0:
        raise ValidationError("seconds must be >= 0")
    return profile.compute_watts * seconds


def downlink_energy(profile: HardwareProfile, n_bytes: int, rate_bps: float) -> float:
    """Energy the radio spends transmitting ``n_bytes`` at ``rate_bps``."""
    if n_bytes < 0:
        raise ValidationError("n_bytes must be >= 0")
    if rate_bps <= 0:
        raise ValidationError("rate_bps must be > 0")
    return profile.radio_watts * (n_bytes * 8.0) / rate_bps


def _to_uj(joules: float) -> int:
    return int(round(joules * _UJ))


@dataclass
class EnergyLedger:
    """Budgeted joule accounting over the four activity classes.

    ``compute_budget_joules`` and ``downlink_budget_joules`` optionally cap a
    single activity class below the overall budget (used for sweeps that pin
    one resource while leaving the rest slack).
    """

    budget_joules: float
    compute_budget_joules: float | None = None
    downlink_budget_joules: float | None = None
    _budget_uj: int = field(init=False, repr=False)
    _caps_uj: dict = field(init=False, repr=False)
    _spent_uj: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.budget_joules < 0:
            raise ValidationError("budget_joules must be >= 0")
        self._budget_uj = _to_uj(self.budget_joules)
        self._caps_uj = {}
        if self.compute_budget_joules is not None:
            if self.compute_budget_joules < 0:
                raise ValidationError("compute_budget_joules must be >= 0")
            self._caps_uj["compute"] = _to_uj(self.compute_budget_joules)
        if self.downlink_budget_joules is not None:
            if self.downlink_budget_joules < 0:
                raise ValidationError("downlink_budget_joules must be >= 0")
            self._caps_uj["downlink"] = _to_uj(self.downlink_budget_joules)
        self._spent_uj = {a: 0 for a in ACTIVITIES}

    def charge(self, activity: str, joules: float) -> None:
        """Charge ``joules`` to ``activity`` or raise ``BudgetExhausted``.

        A refused charge leaves the ledger untouched.
        """
        if activity not in ACTIVITIES:
            raise ValidationError(
                f"unknown activity {activity!r}; expected one of {ACTIVITIES}"
            )
        if joules < 0:
            raise ValidationError("charge must be >= 0 joules")
        amount = _to_uj(joules)
        total = self.spent_uj_total()
        if total + amount > self._budget_uj:
            shortfall = (total + amount - self._budget_uj) / _UJ
            raise BudgetExhausted(activity, shortfall)
        cap = self._caps_uj.get(activity)
        if cap is not None and self._spent_uj[activity] + amount > cap:
            shortfall = (self._spent_uj[activity] + amount - cap) / _UJ
            raise BudgetExhausted(activity, shortfall)
        self._spent_uj[activity] += amount

    def spent_uj_total(self) -> int:
        return sum(self._spent_uj.values())

    def spent(self, activity: str) -> float:
        if activity not in ACTIVITIES:
            raise ValidationError(f"unknown activity {activity!r}")
        return self._spent_uj[activity] / _UJ

    @property
    def spent_total(self) -> float:
        return self.spent_uj_total() / _UJ

    @property
    def remaining(self) -> float:
        return (self._budget_uj - self.spent_uj_total()) / _UJ
