"""Parameter containers and derived quantities for the arrival-timing game."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .exceptions import InvalidParameters

DEFAULT_STEP = 1e-3
BISECTION_TOL = 1e-6
MAX_BISECTION_ITER = 64
TRUNCATION_TAIL = 1e-6
EMPTY_TOL = 1e-8
DEFAULT_HORIZON = 20.0

CONFIG_KEYS = frozenset(
    {"lambda", "mu", "alpha", "beta", "delta", "variant", "closing_time",
     "horizon", "truncation", "seed"}
)


class Variant(str, Enum):
    NO_EARLY_BIRDS = "no_early_birds"
    CLOSING_TIME = "closing_time"
    EARLY_BIRDS = "early_birds"

    @classmethod
    def parse(cls, value: "Variant | str") -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"noearlybirds": "no_early_birds", "closingtime": "closing_time",
                   "earlybirds": "early_birds"}
        key = aliases.get(key.replace("_", ""), key)
        try:
            return cls(key)
        except ValueError:
            raise InvalidParameters(f"unknown variant {value!r}") from None


def default_truncation(lam: float, tail: float = TRUNCATION_TAIL) -> int:
    """Smallest K with P(Poisson(lam) <= K) >= 1 - tail.

    The pmf comes from the recursion p[k+1] = p[k] * lam / (k + 1), anchored
    at the mode (in log space) so that exp(-lam) never has to be formed.
    """
    if not lam > 0:
        raise InvalidParameters("lambda must be positive")
    mode = int(math.floor(lam))
    upper = mode + int(12 * math.sqrt(lam)) + 40
    pmf = [0.0] * (upper + 1)
    pmf[mode] = math.exp(-lam + mode * math.log(lam) - math.lgamma(mode + 1)) if mode else math.exp(-lam)
    for k in range(mode, 0, -1):
        pmf[k - 1] = pmf[k] * k / lam
    for k in range(mode, upper):
        pmf[k + 1] = pmf[k] * lam / (k + 1)
    target = 1.0 - tail
    cdf = 0.0
    for k, p in enumerate(pmf):
        cdf += p
        if cdf >= target:
            return k
    return upper


@dataclass(frozen=True)
class ModelParams:
    """Game and discretisation parameters.

    ``lam`` is the Poisson mean of the daily population, ``mu`` the service
    rate, ``alpha``/``beta`` the waiting and tardiness cost rates, ``delta``
    the time-grid step and ``horizon`` the simulation stopping time.
    ``truncation`` (queue-length cap K) is derived from ``lam`` when omitted.
    """

    lam: float
    mu: float
    alpha: float
    beta: float
    delta: float = DEFAULT_STEP
    variant: Variant = Variant.NO_EARLY_BIRDS
    closing_time: float = math.inf
    horizon: float = DEFAULT_HORIZON
    truncation: int | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        for name in ("lam", "mu", "alpha", "beta", "delta", "horizon"):
            value = float(getattr(self, name))
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameters(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, value)
        closing = float(self.closing_time)
        if self.variant is Variant.CLOSING_TIME:
            if not (math.isfinite(closing) and closing > 0):
                raise InvalidParameters("closing_time variant needs a finite positive closing_time")
        elif not math.isinf(closing):
            raise InvalidParameters(f"closing_time must be infinite for variant {self.variant.value}")
        object.__setattr__(self, "closing_time", closing)
        if self.truncation is None:
            object.__setattr__(self, "truncation", max(1, default_truncation(self.lam)))
        elif int(self.truncation) < 1:
            raise InvalidParameters("truncation must be >= 1")
        else:
            object.__setattr__(self, "truncation", int(self.truncation))

    @property
    def theta(self) -> float:
        return theta(self)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        out["variant"] = self.variant.value
        out["closing_time"] = None if math.isinf(self.closing_time) else self.closing_time
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelParams":
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise InvalidParameters(f"unknown config keys: {sorted(unknown)}")
        missing = {"lambda", "mu", "alpha", "beta"} - set(data)
        if missing:
            raise InvalidParameters(f"missing config keys: {sorted(missing)}")
        kwargs: dict[str, Any] = {
            "lam": data["lambda"], "mu": data["mu"],
            "alpha": data["alpha"], "beta": data["beta"],
        }
        for key in ("delta", "variant", "horizon", "truncation"):
            if data.get(key) is not None:
                kwargs[key] = data[key]
        closing = data.get("closing_time")
        if closing is not None:
            kwargs["closing_time"] = math.inf if str(closing).lower() in ("inf", "infinity") else float(closing)
        return cls(**kwargs)


def theta(params: ModelParams) -> float:
    """Cost ratio beta / (alpha + beta)."""
    return params.beta / (params.alpha + params.beta)


def load_config(path: str | Path) -> tuple[ModelParams, int | None]:
    """Read a JSON config file; returns the parameters and the optional seed."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise InvalidParameters(f"{path}: config must be a JSON object")
    seed = data.get("seed")
    return ModelParams.from_dict(data), (None if seed is None else int(seed))
