"""
Covariance kernel catalog for the Kraichnan equation.

- Every kernel is an immutable dataclass; stationary kernels expose a one-variable profile k(u).
- `evaluate` / `evaluate_array` give k(s, t) for s >= t >= 0 and extend it symmetrically.
- Kernels round-trip through plain dicts (`parse_kernel` / `kernel_to_dict`) so they can live in
  JSON artifacts and on the command line.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import DomainError, UsageError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise UsageError(message)


def _finite(value: float) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value)


# ----------------------------
# Kernel families
# ----------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Base class; subclasses implement `_value(s, t)` for s >= t >= 0 on numpy arrays."""

    family = "abstract"

    def _value(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diagonal_sup(self) -> float:
        raise NotImplementedError

    def is_stationary(self) -> bool:
        return False

    def profile(self, u: ArrayLike) -> ArrayLike:
        """k(u) = k(u, 0) for stationary kernels."""
        if not self.is_stationary():
            raise UsageError(f"{self.family} kernel is not stationary; it has no one-variable profile")
        return evaluate_array(self, u, np.zeros_like(np.asarray(u, dtype=float)))

    def exponential_terms(self) -> Optional[List[Tuple[float, float]]]:
        """Decomposition k(u) = sum w_i exp(-r_i u), when the family has one."""
        return None

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(KernelSpec):
    C: float
    family = "constant"

    def __post_init__(self):
        _require(_finite(self.C) and self.C >= 0, f"constant kernel needs C >= 0, got C={self.C!r}")

    def _value(self, s, t):
        return np.full(np.broadcast(s, t).shape, float(self.C))

    def diagonal_sup(self) -> float:
        return float(self.C)

    def is_stationary(self) -> bool:
        return True

    def exponential_terms(self):
        return [(float(self.C), 0.0)]

    def to_dict(self):
        return {"family": self.family, "C": self.C}


@dataclass(frozen=True)
class Exponential(KernelSpec):
    c: float
    delta: float
    family = "exponential"

    def __post_init__(self):
        _require(_finite(self.c) and self.c > 0, f"exponential kernel needs c > 0, got c={self.c!r}")
        _require(_finite(self.delta) and self.delta > 0,
                 f"exponential kernel needs delta > 0, got delta={self.delta!r}")

    def _value(self, s, t):
        return self.c * np.exp(-self.delta * (s - t))

    def diagonal_sup(self) -> float:
        return float(self.c)

    def is_stationary(self) -> bool:
        return True

    def exponential_terms(self):
        return [(float(self.c), float(self.delta))]

    def to_dict(self):
        return {"family": self.family, "c": self.c, "delta": self.delta}


@dataclass(frozen=True)
class MixedExponential(KernelSpec):
    c2: float
    c1: float
    delta: float
    family = "mixed_exponential"

    def __post_init__(self):
        _require(_finite(self.c2) and self.c2 > 0, f"mixed_exponential kernel needs c2 > 0, got c2={self.c2!r}")
        _require(_finite(self.c1) and self.c1 > 0, f"mixed_exponential kernel needs c1 > 0, got c1={self.c1!r}")
        _require(_finite(self.delta) and self.delta > 0,
                 f"mixed_exponential kernel needs delta > 0, got delta={self.delta!r}")

    def _value(self, s, t):
        return self.c2 + self.c1 * np.exp(-self.delta * (s - t))

    def diagonal_sup(self) -> float:
        return float(self.c2 + self.c1)

    def is_stationary(self) -> bool:
        return True

    def exponential_terms(self):
        return [(float(self.c2), 0.0), (float(self.c1), float(self.delta))]

    def to_dict(self):
        return {"family": self.family, "c2": self.c2, "c1": self.c1, "delta": self.delta}


@dataclass(frozen=True)
class PowerLaw(KernelSpec):
    C: float
    a: float
    family = "power_law"

    def __post_init__(self):
        _require(_finite(self.C) and self.C >= 0, f"power_law kernel needs C >= 0, got C={self.C!r}")
        _require(_finite(self.a) and self.a > 1, f"power_law kernel needs a > 1, got a={self.a!r}")

    def _value(self, s, t):
        return self.C * np.power(1.0 + (s - t), -self.a)

    def diagonal_sup(self) -> float:
        return float(self.C)

    def is_stationary(self) -> bool:
        return True

    def to_dict(self):
        return {"family": self.family, "C": self.C, "a": self.a}


@dataclass(frozen=True)
class AlgebraicMixed(KernelSpec):
    c2: float
    c1: float
    a: float
    family = "algebraic_mixed"

    def __post_init__(self):
        _require(_finite(self.c2) and self.c2 > 0, f"algebraic_mixed kernel needs c2 > 0, got c2={self.c2!r}")
        _require(_finite(self.c1) and self.c1 > 0, f"algebraic_mixed kernel needs c1 > 0, got c1={self.c1!r}")
        _require(_finite(self.a) and self.a >= 1, f"algebraic_mixed kernel needs a >= 1, got a={self.a!r}")

    def _value(self, s, t):
        return self.c2 + self.c1 * np.power(1.0 + (s - t), -self.a)

    def decaying_part(self) -> Callable[[np.ndarray], np.ndarray]:
        """k1(u) = (1+u)^(-a), the unit-weight vanishing component."""
        a = self.a
        return lambda u: np.power(1.0 + np.asarray(u, dtype=float), -a)

    def diagonal_sup(self) -> float:
        return float(self.c2 + self.c1)

    def is_stationary(self) -> bool:
        return True

    def to_dict(self):
        return {"family": self.family, "c2": self.c2, "c1": self.c1, "a": self.a}


@dataclass(frozen=True)
class Separable(KernelSpec):
    """k(s,t) = h(s) h(t) with h tabulated on a uniform grid from 0, linear in between, held constant past the end."""

    values: Tuple[float, ...]
    step: float
    family = "separable"

    def __post_init__(self):
        _require(len(self.values) >= 2, "separable kernel needs at least two tabulated values")
        _require(_finite(self.step) and self.step > 0, f"separable kernel needs step > 0, got step={self.step!r}")
        arr = np.asarray(self.values, dtype=float)
        _require(bool(np.all(np.isfinite(arr))), "separable kernel values must be finite")
        _require(bool(np.all(arr >= 0)), "separable kernel values must be nonnegative")
        object.__setattr__(self, "values", tuple(float(v) for v in arr))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], horizon: float, step: float) -> "Separable":
        n = int(math.ceil(horizon / step - 1e-9))
        grid = step * np.arange(n + 1)
        return cls(values=tuple(np.asarray(fn(grid), dtype=float)), step=step)

    @property
    def grid(self) -> np.ndarray:
        return self.step * np.arange(len(self.values))

    def h(self, u: ArrayLike) -> ArrayLike:
        return np.interp(u, self.grid, np.asarray(self.values))

    def h_integral(self, t: float, s: float) -> float:
        """Exact integral of the piecewise-linear h over [t, s]."""
        lo, hi = min(t, s), max(t, s)
        grid = self.grid
        inner = grid[(grid > lo) & (grid < hi)]
        nodes = np.concatenate(([lo], inner, [hi]))
        vals = self.h(nodes)
        return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes)))

    def _value(self, s, t):
        return self.h(s) * self.h(t)

    def diagonal_sup(self) -> float:
        return float(max(self.values) ** 2)

    def to_dict(self):
        return {"family": self.family, "values": list(self.values), "step": self.step}


@dataclass(frozen=True)
class RatioFlat(KernelSpec):
    """k(s,t) = C (t/s)^a + k1(s-t) for s >= t, flat as t grows at fixed s-t."""

    C: float
    a: float
    stationary_part: Optional[KernelSpec] = field(default=None)
    family = "ratio_flat"

    def __post_init__(self):
        _require(_finite(self.C) and self.C >= 0, f"ratio_flat kernel needs C >= 0, got C={self.C!r}")
        _require(_finite(self.a) and self.a >= 0, f"ratio_flat kernel needs a >= 0, got a={self.a!r}")
        if self.stationary_part is not None:
            _require(isinstance(self.stationary_part, KernelSpec) and self.stationary_part.is_stationary(),
                     "ratio_flat stationary_part must be a stationary kernel")

    def _value(self, s, t):
        safe_s = np.where(s > 0, s, 1.0)
        ratio = np.where(s > 0, t / safe_s, 1.0)
        out = self.C * np.power(ratio, self.a)
        if self.stationary_part is not None:
            out = out + self.stationary_part._value(s, t)
        return out

    def diagonal_sup(self) -> float:
        extra = self.stationary_part.diagonal_sup() if self.stationary_part is not None else 0.0
        return float(self.C + extra)

    def is_stationary(self) -> bool:
        return self.a == 0 or self.C == 0

    def flatness_defect(self, T: float, M: float) -> float:
        """sup over t >= T, 0 <= s-t <= M of |C (t/s)^a - C|, attained at t = T, s = T + M."""
        if T <= 0:
            return float(self.C)
        return float(self.C * (1.0 - (T / (T + M)) ** self.a))

    def to_dict(self):
        part = kernel_to_dict(self.stationary_part) if self.stationary_part is not None else None
        return {"family": self.family, "C": self.C, "a": self.a, "stationary_part": part}


# ----------------------------
# Operations
# ----------------------------

def evaluate_array(kernel: KernelSpec, s: ArrayLike, t: ArrayLike) -> np.ndarray:
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr < 0) or np.any(t_arr < 0):
        raise DomainError("kernel times must be nonnegative")
    hi = np.maximum(s_arr, t_arr)
    lo = np.minimum(s_arr, t_arr)
    return kernel._value(hi, lo)


def evaluate(kernel: KernelSpec, s: float, t: float) -> float:
    """k(s, t); arguments with t > s are swapped since the kernel is symmetric."""
    if s < 0 or t < 0:
        raise DomainError(f"kernel times must be nonnegative, got s={s}, t={t}")
    if t > s:
        s, t = t, s
    return float(kernel._value(np.float64(s), np.float64(t)))


def diagonal_sup(kernel: KernelSpec) -> float:
    return kernel.diagonal_sup()


def is_stationary(kernel: KernelSpec) -> bool:
    return kernel.is_stationary()


def sum_kernels(C: float, k1: Optional[KernelSpec]) -> KernelSpec:
    """C + k1 for a stationary k1, collapsed into a single closed family."""
    if k1 is None:
        return Constant(C)
    if C == 0:
        return k1
    if isinstance(k1, Constant):
        return Constant(C + k1.C)
    if isinstance(k1, Exponential):
        return MixedExponential(c2=C, c1=k1.c, delta=k1.delta)
    if isinstance(k1, PowerLaw) and k1.C > 0:
        return AlgebraicMixed(c2=C, c1=k1.C, a=k1.a)
    raise UsageError(f"no closed stationary family for C + {k1.family}")


def stationary_counterpart(kernel: RatioFlat) -> KernelSpec:
    """The stationary kernel C + k1 whose Lyapunov exponent is the flat-limit target."""
    return sum_kernels(kernel.C, kernel.stationary_part)


def sample_grid(kernel: KernelSpec, horizon: float, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """Kernel values on the lower triangle of a uniform grid (NaN above the diagonal)."""
    grid = step * np.arange(int(round(horizon / step)) + 1)
    s, t = np.meshgrid(grid, grid, indexing="ij")
    values = np.where(s >= t, evaluate_array(kernel, s, t), np.nan)
    return grid, values


# ----------------------------
# (De)serialization
# ----------------------------

_FAMILIES: Dict[str, Callable[[Dict[str, Any]], KernelSpec]] = {}


def _field(obj: Dict[str, Any], name: str, family: str) -> float:
    if name not in obj:
        raise UsageError(f"kernel family '{family}' requires field '{name}'")
    try:
        return float(obj[name])
    except (TypeError, ValueError):
        raise UsageError(f"kernel field '{name}' must be a number, got {obj[name]!r}")


def _parse_separable(obj: Dict[str, Any]) -> KernelSpec:
    values = obj.get("values")
    if not isinstance(values, (list, tuple)):
        raise UsageError("kernel family 'separable' requires a 'values' list")
    try:
        parsed = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise UsageError(f"kernel field 'values' must be a list of numbers, got {values!r}")
    return Separable(values=parsed, step=_field(obj, "step", "separable"))


def _parse_ratio_flat(obj: Dict[str, Any]) -> KernelSpec:
    part = obj.get("stationary_part")
    return RatioFlat(
        C=_field(obj, "C", "ratio_flat"),
        a=_field(obj, "a", "ratio_flat"),
        stationary_part=parse_kernel(part) if part else None,
    )


_FAMILIES.update({
    "constant": lambda o: Constant(_field(o, "C", "constant")),
    "exponential": lambda o: Exponential(_field(o, "c", "exponential"), _field(o, "delta", "exponential")),
    "mixed_exponential": lambda o: MixedExponential(
        _field(o, "c2", "mixed_exponential"), _field(o, "c1", "mixed_exponential"),
        _field(o, "delta", "mixed_exponential")),
    "power_law": lambda o: PowerLaw(_field(o, "C", "power_law"), _field(o, "a", "power_law")),
    "algebraic_mixed": lambda o: AlgebraicMixed(
        _field(o, "c2", "algebraic_mixed"), _field(o, "c1", "algebraic_mixed"), _field(o, "a", "algebraic_mixed")),
    "separable": _parse_separable,
    "ratio_flat": _parse_ratio_flat,
})


def parse_kernel(obj: Union[str, Dict[str, Any]]) -> KernelSpec:
    """Decode {"family": ..., params...} (or its JSON text) into a kernel."""
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise UsageError(f"kernel is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise UsageError("kernel must be a JSON object")
    family = str(obj.get("family", "")).strip().lower()
    parser = _FAMILIES.get(family)
    if parser is None:
        raise UsageError(f"unknown kernel family {family!r}; expected one of {sorted(_FAMILIES)}")
    return parser(obj)


def kernel_to_dict(kernel: KernelSpec) -> Dict[str, Any]:
    return kernel.to_dict()


def kernel_to_json(kernel: KernelSpec) -> str:
    return json.dumps(kernel_to_dict(kernel), sort_keys=True, separators=(",", ":"))


def families() -> Sequence[str]:
    return tuple(sorted(_FAMILIES))
