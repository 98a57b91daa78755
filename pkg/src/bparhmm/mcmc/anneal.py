from dataclasses import dataclass


@dataclass(frozen=True)
class AnnealSchedule:
    """Inverse temperature on the Hastings factor: linear ramp over ``burnIterations`` or off."""
    burnIterations: int = 0
    mode: str = "off"

    def __post_init__(self):
        if self.mode not in ("linear", "off"):
            raise ValueError(f"unknown anneal mode {self.mode!r}")
        if self.burnIterations < 0:
            raise ValueError("burnIterations must be nonnegative")


def anneal_inv_temperature(s, schedule):
    if s < 0:
        raise ValueError("iteration must be nonnegative")
    if schedule.mode == "off" or s >= schedule.burnIterations:
        return 1.0
    return s / schedule.burnIterations
