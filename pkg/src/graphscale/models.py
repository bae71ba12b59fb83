"""Closed-form scaling-law families and their analytic parameter gradients.

Five families are supported. Exponents are stored positive and every power
term is evaluated as ``a * exp(-b * log(x + c))``::

    basic-error      a * X^-b + eps_inf
    shifted-error    a * (X + c)^-b + eps_inf
    shifted-score    s_inf - a * (X + c)^-b
    combined-error   a1 * D^-b1 + a2 * N^-b2 + eps_inf
    combined-score   s_inf - a1 * (D + c1)^-b1 - a2 * (N + c2)^-b2

Error families are "lower is better", score families "higher is better".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError


class ScalingForm(str, Enum):
    BASIC_ERROR = "basic-error"
    SHIFTED_ERROR = "shifted-error"
    SHIFTED_SCORE = "shifted-score"
    COMBINED_ERROR = "combined-error"
    COMBINED_SCORE = "combined-score"

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @property
    def n_params(self) -> int:
        return len(_PARAM_NAMES[self])

    @property
    def is_combined(self) -> bool:
        return self in (ScalingForm.COMBINED_ERROR, ScalingForm.COMBINED_SCORE)

    @property
    def n_inputs(self) -> int:
        return 2 if self.is_combined else 1

    @property
    def metric_kind(self) -> str:
        """``"score"`` for the score families, ``"error"`` otherwise."""
        if self in (ScalingForm.SHIFTED_SCORE, ScalingForm.COMBINED_SCORE):
            return "score"
        return "error"

    @property
    def allows_zero_input(self) -> bool:
        return self in (ScalingForm.SHIFTED_ERROR, ScalingForm.SHIFTED_SCORE, ScalingForm.COMBINED_SCORE)

    @classmethod
    def parse(cls, value: "str | ScalingForm") -> "ScalingForm":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for form in cls:
            if key in (form.value, form.name.lower().replace("_", "-"), form.value.replace("-", "")):
                return form
        raise ValueError(f"unknown scaling form {value!r}; expected one of {[f.value for f in cls]}")


_PARAM_NAMES = {
    ScalingForm.BASIC_ERROR: ("a", "b", "eps_inf"),
    ScalingForm.SHIFTED_ERROR: ("a", "b", "c", "eps_inf"),
    ScalingForm.SHIFTED_SCORE: ("a", "b", "c", "s_inf"),
    ScalingForm.COMBINED_ERROR: ("a1", "b1", "a2", "b2", "eps_inf"),
    ScalingForm.COMBINED_SCORE: ("a1", "b1", "c1", "a2", "b2", "c2", "s_inf"),
}


def _check_value(form: ScalingForm, name: str, value: float, strict: bool) -> None:
    if not math.isfinite(value):
        raise DomainError(f"{form.value}: parameter {name} must be finite, got {value!r}")
    if name == "eps_inf":
        if value < 0:
            raise DomainError(f"{form.value}: eps_inf must be >= 0, got {value!r}")
    elif name == "s_inf":
        if not 0 < value <= 1:
            raise DomainError(f"{form.value}: s_inf must lie in (0, 1], got {value!r}")
    elif strict and value <= 0:
        raise DomainError(f"{form.value}: parameter {name} must be > 0, got {value!r}")
    elif value < 0:
        raise DomainError(f"{form.value}: parameter {name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class ParamSet:
    """Named parameter vector for one scaling form.

    Values are kept in the form's fixed parameter order. Construction validates
    the domain: amplitudes, exponents and shifts strictly positive, ``eps_inf``
    non-negative, ``s_inf`` in (0, 1]. Use :meth:`relaxed` to build the
    degenerate ``a = 0`` / ``b = 0`` cases needed by property tests.
    """

    form: ScalingForm
    values: tuple[float, ...]
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        form = ScalingForm.parse(self.form)
        object.__setattr__(self, "form", form)
        values = tuple(float(v) for v in self.values)
        if len(values) != form.n_params:
            raise DomainError(
                f"{form.value} takes {form.n_params} parameters {form.param_names}, got {len(values)}"
            )
        for name, value in zip(form.param_names, values):
            _check_value(form, name, value, self.strict)
        object.__setattr__(self, "values", values)

    @classmethod
    def of(cls, form, **params: float) -> "ParamSet":
        return cls.from_mapping(form, params)

    @classmethod
    def from_mapping(cls, form, params: Mapping[str, float], strict: bool = True) -> "ParamSet":
        form = ScalingForm.parse(form)
        missing = [n for n in form.param_names if n not in params]
        extra = [n for n in params if n not in form.param_names]
        if missing or extra:
            raise DomainError(f"{form.value}: missing parameters {missing}, unexpected {extra}")
        return cls(form, tuple(params[n] for n in form.param_names), strict=strict)

    @classmethod
    def relaxed(cls, form, **params: float) -> "ParamSet":
        """Like :meth:`of` but tolerates zero amplitudes/exponents. For tests only."""
        return cls.from_mapping(form, params, strict=False)

    @property
    def names(self) -> tuple[str, ...]:
        return self.form.param_names

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def replace(self, **params: float) -> "ParamSet":
        merged = {**self.as_dict(), **params}
        return ParamSet.from_mapping(self.form, merged, strict=self.strict)

    def __getitem__(self, name: str) -> float:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __getattr__(self, name: str) -> float:
        # only reached for names that are not dataclass fields
        if name.startswith("_"):
            raise AttributeError(name)
        try:
            return self[name]
        except KeyError:
            raise AttributeError(f"{self.form.value} has no parameter {name!r}") from None


# ---------------------------------------------------------------------------
# raw kernels: no validation, theta in the form's parameter order
# ---------------------------------------------------------------------------


def _power(x, a, b, c=0.0):
    return a * np.exp(-b * np.log(x + c))


def model_value(form: ScalingForm, cols: Sequence[np.ndarray], theta: Sequence[float]) -> np.ndarray:
    if form is ScalingForm.BASIC_ERROR:
        a, b, eps = theta
        t = _power(cols[0], a, b)
        return t + eps
    if form is ScalingForm.SHIFTED_ERROR:
        a, b, c, eps = theta
        t = _power(cols[0], a, b, c)
        return t + eps
    if form is ScalingForm.SHIFTED_SCORE:
        a, b, c, s = theta
        t = _power(cols[0], a, b, c)
        return s - t
    if form is ScalingForm.COMBINED_ERROR:
        a1, b1, a2, b2, eps = theta
        t1 = _power(cols[0], a1, b1)
        t2 = _power(cols[1], a2, b2)
        return t1 + t2 + eps
    a1, b1, c1, a2, b2, c2, s = theta
    t1 = _power(cols[0], a1, b1, c1)
    t2 = _power(cols[1], a2, b2, c2)
    return s - t1 - t2


def _term_grads(x, a, b, c=None):
    """Partials of a*(x+c)^-b w.r.t. (a, b[, c]) plus the term itself."""
    shifted = x if c is None else x + c
    log_base = np.log(shifted)
    unit = np.exp(-b * log_base)
    t = a * unit
    cols = [unit, -t * log_base]
    if c is not None:
        cols.append(-b * t / shifted)
    return t, cols


def model_value_and_jacobian(form: ScalingForm, cols: Sequence[np.ndarray], theta: Sequence[float]):
    """Model values (n,) and d(value)/d(theta) (n, k) in one pass."""
    x = cols[0]
    ones = np.ones_like(x, dtype=float)
    if form is ScalingForm.BASIC_ERROR:
        a, b, eps = theta
        t, g = _term_grads(x, a, b)
        return t + eps, np.column_stack(g + [ones])
    if form is ScalingForm.SHIFTED_ERROR:
        a, b, c, eps = theta
        t, g = _term_grads(x, a, b, c)
        return t + eps, np.column_stack(g + [ones])
    if form is ScalingForm.SHIFTED_SCORE:
        a, b, c, s = theta
        t, g = _term_grads(x, a, b, c)
        return s - t, np.column_stack([-v for v in g] + [ones])
    if form is ScalingForm.COMBINED_ERROR:
        a1, b1, a2, b2, eps = theta
        t1, g1 = _term_grads(x, a1, b1)
        t2, g2 = _term_grads(cols[1], a2, b2)
        return t1 + t2 + eps, np.column_stack(g1 + g2 + [ones])
    a1, b1, c1, a2, b2, c2, s = theta
    t1, g1 = _term_grads(x, a1, b1, c1)
    t2, g2 = _term_grads(cols[1], a2, b2, c2)
    return s - t1 - t2, np.column_stack([-v for v in g1 + g2] + [ones])


# ---------------------------------------------------------------------------
# validated public surface
# ---------------------------------------------------------------------------


def _as_params(form: ScalingForm, p) -> tuple[float, ...]:
    if isinstance(p, ParamSet):
        if p.form is not form:
            raise DomainError(f"expected {form.value} parameters, got {p.form.value}")
        return p.values
    if isinstance(p, Mapping):
        return ParamSet.from_mapping(form, p, strict=False).values
    return ParamSet(form, tuple(p), strict=False).values


def _check_input(name: str, x: np.ndarray, allow_zero: bool) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite")
    if allow_zero:
        if np.any(x < 0):
            raise DomainError(f"{name} must be >= 0")
    elif np.any(x <= 0):
        raise DomainError(f"{name} must be > 0 (the unshifted form is undefined at 0)")


def split_inputs(form: ScalingForm, inputs) -> tuple[tuple[np.ndarray, ...], bool]:
    """Normalise ``inputs`` into per-variable columns.

    Single-variable forms take a scalar or a 1-D sequence of X values. Combined
    forms take one ``(D, N)`` pair or an ``(n, 2)`` array of pairs. Returns the
    columns and whether the caller passed a single point.
    """
    arr = np.asarray(inputs, dtype=float)
    single = False
    if form.is_combined:
        if arr.shape == (2,):
            arr, single = arr.reshape(1, 2), True
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DomainError(f"{form.value} expects (D, N) pairs, got array of shape {arr.shape}")
        cols = (arr[:, 0], arr[:, 1])
        names = ("D", "N")
    else:
        if arr.ndim == 0:
            arr, single = arr.reshape(1), True
        if arr.ndim != 1:
            raise DomainError(f"{form.value} expects a scalar or 1-D sequence of X values")
        cols = (arr,)
        names = ("X",)
    for name, col in zip(names, cols):
        _check_input(name, col, form.allows_zero_input)
    return cols, single


def evaluate(form, inputs, params):
    """Evaluate ``form`` at ``inputs``; float for a single point, array otherwise."""
    form = ScalingForm.parse(form)
    theta = _as_params(form, params)
    cols, single = split_inputs(form, inputs)
    out = model_value(form, cols, theta)
    return float(out[0]) if single else out


def grad_params(form, inputs, params):
    """Analytic gradient of the model value w.r.t. each parameter.

    Returns shape ``(k,)`` for a single point, ``(n, k)`` otherwise, with columns
    in ``form.param_names`` order.
    """
    form = ScalingForm.parse(form)
    theta = _as_params(form, params)
    cols, single = split_inputs(form, inputs)
    _, jac = model_value_and_jacobian(form, cols, theta)
    return jac[0] if single else jac


def eval_basic_error(x, p):
    return evaluate(ScalingForm.BASIC_ERROR, x, p)


def eval_shifted_error(x, p):
    return evaluate(ScalingForm.SHIFTED_ERROR, x, p)


def eval_shifted_score(x, p):
    return evaluate(ScalingForm.SHIFTED_SCORE, x, p)


def _pairs(d, n):
    d = np.asarray(d, dtype=float)
    n = np.asarray(n, dtype=float)
    if d.ndim == 0 and n.ndim == 0:
        return np.array([d, n])
    d, n = np.broadcast_arrays(d, n)
    return np.column_stack([d.ravel(), n.ravel()])


def eval_combined_error(d, n, p):
    return evaluate(ScalingForm.COMBINED_ERROR, _pairs(d, n), p)


def eval_combined_score(d, n, p):
    return evaluate(ScalingForm.COMBINED_SCORE, _pairs(d, n), p)
