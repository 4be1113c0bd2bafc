"""The space-time cylinder Q_{R,T} = B(x0, R) x [t0 - T, t0] with cut-off margins."""

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field


@dataclass(frozen=True)
class DomainSpec:
    x0: tuple
    R: float
    t0: float
    T: float
    rho: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(c) for c in np.atleast_1d(self.x0)))
        if not self.R > 0:
            raise DomainError(f"R must be positive (got {self.R})", "R")
        if not self.T > 0:
            raise DomainError(f"T must be positive (got {self.T})", "T")
        if not 0 < self.rho < self.R:
            raise DomainError(f"need 0 < rho < R (got rho={self.rho}, R={self.R})", "rho")
        if not 0 < self.delta < self.T:
            raise DomainError(f"need 0 < delta < T (got delta={self.delta}, T={self.T})", "delta")

    @property
    def t_start(self):
        return self.t0 - self.T

    @property
    def t_switch(self):
        """t0 - T + delta: start of the later-time regions."""
        return self.t0 - self.T + self.delta

    def to_dict(self):
        return {"x0": list(self.x0), "R": self.R, "t0": self.t0, "T": self.T,
                "rho": self.rho, "delta": self.delta}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["x0"]), float(d["R"]), float(d["t0"]), float(d["T"]),
                   float(d["rho"]), float(d["delta"]))
