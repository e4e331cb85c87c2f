"""Statistical parameter sets for the front, left and right sensing directions.

Each :class:`DirectionParams` bundles everything the channel generator needs
for one direction: lifetime moments, new-path count PMF, initial power law
and residuals, initial delay law, evolution statistics, cluster-size PMF and
the clutter floor. The built-in presets carry the fitted 28 GHz values.

Parameter documents are plain JSON objects whose keys are the dataclass field
names; nested records are objects and PMFs are arrays ordered by count.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any

BREAKPOINT_NS = 50.0


class Direction(str, Enum):
    FRONT = "front"
    LEFT = "left"
    RIGHT = "right"

    @property
    def code(self) -> int:
        return _DIRECTION_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Direction":
        for d, c in _DIRECTION_CODES.items():
            if c == code:
                return d
        raise ValueError(f"unknown direction code {code}")


_DIRECTION_CODES = {Direction.FRONT: 0, Direction.LEFT: 1, Direction.RIGHT: 2}


class ParamsParseError(ValueError):
    """Document does not match the parameter schema."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class ParamsValidationError(ValueError):
    """Parsed parameters violate one or more invariants."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Violation:
    field: str
    constraint: str

    def __str__(self) -> str:
        return f"{self.field}: {self.constraint}"


@dataclass(frozen=True)
class DualSlope:
    """Piecewise-linear dB law over delay; the low segment covers tau <= 50 ns."""

    slope_low: float
    intercept_low: float
    slope_high: float
    intercept_high: float
    breakpoint: float = BREAKPOINT_NS


@dataclass(frozen=True)
class GevParams:
    shape: float
    scale: float
    location: float


@dataclass(frozen=True)
class CountPmf:
    """Probabilities for consecutive counts starting at ``support_start``."""

    probabilities: tuple[float, ...]
    support_start: int = 0

    @classmethod
    def normalized(cls, values, support_start: int = 0) -> "CountPmf":
        vals = tuple(float(v) for v in values)
        total = math.fsum(vals)
        # already-normalized input is kept bit-exact so JSON round trips are lossless
        if total > 0 and all(v >= 0 for v in vals) and abs(total - 1.0) > 1e-14:
            vals = tuple(v / total for v in vals)
        return cls(vals, support_start)

    @property
    def support(self) -> range:
        return range(self.support_start, self.support_start + len(self.probabilities))

    def mean(self) -> float:
        return math.fsum(k * p for k, p in zip(self.support, self.probabilities))


@dataclass(frozen=True)
class DirectionParams:
    direction: Direction
    lifetime_mean: float
    lifetime_std: float
    birth_pmf: CountPmf
    initial_power: DualSlope
    residual_low: GevParams
    residual_high: GevParams
    delay_shape: float
    delay_scale: float
    power_evo_mean: float
    power_evo_std: float
    delay_gate: float
    delay_evo_mean: float
    delay_evo_std: float
    cluster_pmf: CountPmf
    clutter_decay: DualSlope
    fading_mean: float
    fading_std: float

    def residual_for(self, delay_ns: float) -> GevParams:
        return self.residual_low if delay_ns <= self.initial_power.breakpoint else self.residual_high

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["direction"] = self.direction.value
        # support_start is implied by the field
        out["birth_pmf"] = list(self.birth_pmf.probabilities)
        out["cluster_pmf"] = list(self.cluster_pmf.probabilities)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


BIRTH_SUPPORT_START = 0
CLUSTER_SUPPORT_START = 1


def validate(params: DirectionParams) -> list[Violation]:
    """Return one :class:`Violation` per broken invariant (empty when valid)."""
    out: list[Violation] = []

    def positive(name: str, value: float) -> None:
        if not (math.isfinite(value) and value > 0):
            out.append(Violation(name, f"must be > 0 (got {value})"))

    def finite(name: str, value: float) -> None:
        if not math.isfinite(value):
            out.append(Violation(name, f"must be finite (got {value})"))

    if not isinstance(params.direction, Direction):
        out.append(Violation("direction", "must be one of front/left/right"))
    positive("lifetime_mean", params.lifetime_mean)
    positive("lifetime_std", params.lifetime_std)
    positive("delay_shape", params.delay_shape)
    positive("delay_scale", params.delay_scale)
    positive("power_evo_std", params.power_evo_std)
    positive("delay_evo_std", params.delay_evo_std)
    positive("fading_std", params.fading_std)
    finite("power_evo_mean", params.power_evo_mean)
    finite("delay_evo_mean", params.delay_evo_mean)
    finite("fading_mean", params.fading_mean)
    if not (0.0 <= params.delay_gate <= 1.0):
        out.append(Violation("delay_gate", f"must lie in [0, 1] (got {params.delay_gate})"))

    for name in ("residual_low", "residual_high"):
        g: GevParams = getattr(params, name)
        positive(f"{name}.scale", g.scale)
        finite(f"{name}.shape", g.shape)
        finite(f"{name}.location", g.location)

    for name in ("initial_power", "clutter_decay"):
        d: DualSlope = getattr(params, name)
        if d.breakpoint != BREAKPOINT_NS:
            out.append(Violation(f"{name}.breakpoint", f"must equal {BREAKPOINT_NS} ns"))
        for f in ("slope_low", "intercept_low", "slope_high", "intercept_high"):
            finite(f"{name}.{f}", getattr(d, f))

    for name, start in (("birth_pmf", BIRTH_SUPPORT_START), ("cluster_pmf", CLUSTER_SUPPORT_START)):
        pmf: CountPmf = getattr(params, name)
        probs = pmf.probabilities
        if not probs:
            out.append(Violation(name, "must have at least one entry"))
            continue
        if pmf.support_start != start:
            out.append(Violation(name, f"support must start at {start}"))
        if any(not math.isfinite(p) or p < 0 for p in probs):
            out.append(Violation(name, "entries must be nonnegative"))
        elif abs(math.fsum(probs) - 1.0) > 1e-12:
            out.append(Violation(name, "entries must sum to 1"))
    return out


def _require(doc: dict, key: str, prefix: str = "") -> Any:
    name = f"{prefix}{key}"
    if key not in doc:
        raise ParamsParseError(name, "missing field")
    return doc[key]


def _number(doc: dict, key: str, prefix: str = "") -> float:
    value = _require(doc, key, prefix)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParamsParseError(f"{prefix}{key}", f"expected a number, got {type(value).__name__}")
    return float(value)


def _object(doc: dict, key: str) -> dict:
    value = _require(doc, key)
    if not isinstance(value, dict):
        raise ParamsParseError(key, "expected an object")
    return value


def _dual_slope(doc: dict, key: str) -> DualSlope:
    obj = _object(doc, key)
    p = f"{key}."
    return DualSlope(
        slope_low=_number(obj, "slope_low", p),
        intercept_low=_number(obj, "intercept_low", p),
        slope_high=_number(obj, "slope_high", p),
        intercept_high=_number(obj, "intercept_high", p),
        breakpoint=_number(obj, "breakpoint", p) if "breakpoint" in obj else BREAKPOINT_NS,
    )


def _gev(doc: dict, key: str) -> GevParams:
    obj = _object(doc, key)
    p = f"{key}."
    return GevParams(_number(obj, "shape", p), _number(obj, "scale", p), _number(obj, "location", p))


def _pmf(doc: dict, key: str, start: int) -> CountPmf:
    value = _require(doc, key)
    if not isinstance(value, list) or not value:
        raise ParamsParseError(key, "expected a nonempty array of probabilities")
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParamsParseError(f"{key}[{i}]", "expected a number")
    return CountPmf.normalized(value, start)


def params_from_dict(doc: Any) -> DirectionParams:
    """Build and validate parameters from a decoded JSON object."""
    if not isinstance(doc, dict):
        raise ParamsParseError("<root>", "expected a JSON object")
    known = {f.name for f in fields(DirectionParams)}
    extra = sorted(set(doc) - known)
    if extra:
        raise ParamsParseError(extra[0], "unknown field")
    raw_dir = _require(doc, "direction")
    try:
        direction = Direction(raw_dir)
    except ValueError:
        raise ParamsParseError("direction", f"expected front/left/right, got {raw_dir!r}") from None
    params = DirectionParams(
        direction=direction,
        lifetime_mean=_number(doc, "lifetime_mean"),
        lifetime_std=_number(doc, "lifetime_std"),
        birth_pmf=_pmf(doc, "birth_pmf", BIRTH_SUPPORT_START),
        initial_power=_dual_slope(doc, "initial_power"),
        residual_low=_gev(doc, "residual_low"),
        residual_high=_gev(doc, "residual_high"),
        delay_shape=_number(doc, "delay_shape"),
        delay_scale=_number(doc, "delay_scale"),
        power_evo_mean=_number(doc, "power_evo_mean"),
        power_evo_std=_number(doc, "power_evo_std"),
        delay_gate=_number(doc, "delay_gate"),
        delay_evo_mean=_number(doc, "delay_evo_mean"),
        delay_evo_std=_number(doc, "delay_evo_std"),
        cluster_pmf=_pmf(doc, "cluster_pmf", CLUSTER_SUPPORT_START),
        clutter_decay=_dual_slope(doc, "clutter_decay"),
        fading_mean=_number(doc, "fading_mean"),
        fading_std=_number(doc, "fading_std"),
    )
    violations = validate(params)
    if violations:
        raise ParamsValidationError(violations)
    return params


def load_params(text: str) -> DirectionParams:
    """Parse a JSON parameter document; PMFs are renormalized on load."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParamsParseError("<document>", f"invalid JSON: {exc}") from exc
    return params_from_dict(doc)


# Raw table percentages; renormalized by their own sums since the published
# rows do not all add up to exactly 100.
BIRTH_PERCENT = {
    Direction.FRONT: (96.03, 3.47, 0.39, 0.09, 0.01, 0.01),
    Direction.LEFT: (82.58, 14.84, 2.09, 0.33, 0.11, 0.01),
    Direction.RIGHT: (89.42, 9.07, 1.22, 0.23, 0.05, 0.01),
}

CLUSTER_PERCENT = {
    Direction.FRONT: (35.99, 35.75, 11.92, 6.91, 4.22, 2.21, 0.95),
    Direction.LEFT: (28.73, 43.21, 16.35, 6.88, 2.87, 1.12, 0.41),
    Direction.RIGHT: (31.67, 40.53, 14.54, 6.83, 3.18, 0.50, 0.38),
}

# direction -> (lifetime mu, sigma), initial power (p1, q1, p2, q2),
# low GEV (xi, sigma, mu), high GEV, (alpha, beta), (mu_p, sigma_p),
# (k_d, mu_d, sigma_d), clutter (a1, b1, a2, b2), (mu_c, sigma_c)
TABLE_IV = {
    Direction.FRONT: dict(
        lifetime=(2.751, 0.632),
        initial_power=(0.184, -61.191, -0.015, -55.071),
        residual_low=(-0.112, 4.089, -2.908),
        residual_high=(0.135, 3.299, -3.294),
        delay=(1.311, 81.621),
        power_evo=(0.001, 0.747),
        delay_evo=(0.039, 1.625, 6.361),
        clutter=(0.009, -64.72, -0.003, -64.28),
        fading=(-2.764, 5.654),
    ),
    Direction.LEFT: dict(
        lifetime=(2.925, 0.708),
        initial_power=(-0.197, -45.342, -0.002, -53.371),
        residual_low=(0.025, 4.667, -8.231),
        residual_high=(0.121, 3.848, -4.021),
        delay=(1.141, 62.431),
        power_evo=(-0.034, 0.864),
        delay_evo=(0.028, -0.354, 4.203),
        clutter=(-0.038, -60.27, -0.004, -62.01),
        fading=(-3.88, 6.035),
    ),
    Direction.RIGHT: dict(
        lifetime=(2.795, 0.631),
        initial_power=(-0.097, -48.142, -0.002, -54.073),
        residual_low=(0.067, 4.103, -7.421),
        residual_high=(0.105, 3.772, -3.463),
        delay=(1.028, 85.083),
        power_evo=(-0.032, 0.947),
        delay_evo=(0.025, 0.132, 4.403),
        clutter=(-0.074, -59.62, -0.004, -62.9),
        fading=(-3.28, 5.846),
    ),
}


def builtin_params(direction: Direction | str) -> DirectionParams:
    d = Direction(direction)
    t = TABLE_IV[d]
    return DirectionParams(
        direction=d,
        lifetime_mean=t["lifetime"][0],
        lifetime_std=t["lifetime"][1],
        birth_pmf=CountPmf.normalized(BIRTH_PERCENT[d], BIRTH_SUPPORT_START),
        initial_power=DualSlope(*t["initial_power"]),
        residual_low=GevParams(*t["residual_low"]),
        residual_high=GevParams(*t["residual_high"]),
        delay_shape=t["delay"][0],
        delay_scale=t["delay"][1],
        power_evo_mean=t["power_evo"][0],
        power_evo_std=t["power_evo"][1],
        delay_gate=t["delay_evo"][0],
        delay_evo_mean=t["delay_evo"][1],
        delay_evo_std=t["delay_evo"][2],
        cluster_pmf=CountPmf.normalized(CLUSTER_PERCENT[d], CLUSTER_SUPPORT_START),
        clutter_decay=DualSlope(*t["clutter"]),
        fading_mean=t["fading"][0],
        fading_std=t["fading"][1],
    )


__all__ = [
    "BREAKPOINT_NS",
    "CountPmf",
    "Direction",
    "DirectionParams",
    "DualSlope",
    "GevParams",
    "ParamsParseError",
    "ParamsValidationError",
    "Violation",
    "builtin_params",
    "load_params",
    "params_from_dict",
    "validate",
]
