"""Additive daily decomposition: trend + weekly cycle + event effects.

The model is y(t) = g(t) + s(t) + h(t) + noise, with g a piecewise-linear
trend (hinge terms at changepoints spread over the first part of the window),
s a weekly Fourier expansion, and h one indicator per named event covering its
dates plus an optional +/- window.  Fitting is deterministic ridge least
squares: hinge and Fourier columns carry the penalty, intercept/slope/event
columns do not, so planted event effects are recovered unbiased.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date as date_cls, timedelta

import numpy as np

from .errors import InputError, NumericalError
from .stats import Z_90


class TooFewPoints(InputError):
    pass


class SingularDesign(NumericalError):
    pass


@dataclass(frozen=True)
class Holiday:
    name: str
    dates: tuple[str, ...]
    window: int = 0

    def covers(self, day: date_cls) -> bool:
        for iso in self.dates:
            anchor = date_cls.fromisoformat(iso)
            if abs((day - anchor).days) <= self.window:
                return True
        return False


@dataclass(frozen=True)
class FitConfig:
    fourier_order: int = 3
    n_changepoints: int = 10
    changepoint_range: float = 0.8
    ridge_lambda: float = 0.1


@dataclass
class TsModel:
    """Fitted decomposition; predictions are exact sums of the components."""

    start: date_cls
    n_fit: int
    intercept: float
    slope: float
    changepoints: np.ndarray       # day offsets of the hinges
    hinge_coefs: np.ndarray
    fourier_order: int
    fourier_coefs: np.ndarray      # [sin1, cos1, sin2, cos2, ...]
    holidays: tuple[Holiday, ...]
    holiday_effects: dict[str, float]
    holiday_ses: dict[str, float]
    residual_std: float

    def trend(self, t: float) -> float:
        g = self.intercept + self.slope * t
        for c, beta in zip(self.changepoints, self.hinge_coefs):
            if t > c:
                g += beta * (t - c)
        return g

    def weekly(self, t: float) -> float:
        s = 0.0
        for k in range(1, self.fourier_order + 1):
            w = 2.0 * math.pi * k * t / 7.0
            s += self.fourier_coefs[2 * (k - 1)] * math.sin(w)
            s += self.fourier_coefs[2 * (k - 1) + 1] * math.cos(w)
        return s

    def holiday(self, day: date_cls) -> float:
        h = 0.0
        for hol in self.holidays:
            if hol.covers(day):
                h += self.holiday_effects[hol.name]
        return h


def parse_dates(dates) -> list[date_cls]:
    out = [d if isinstance(d, date_cls) else date_cls.fromisoformat(str(d))
           for d in dates]
    for prev, cur in zip(out, out[1:]):
        if (cur - prev).days != 1:
            raise InputError(
                f"dates must be consecutive days, gap at {prev} -> {cur}")
    return out


def _changepoint_offsets(n: int, config: FitConfig) -> np.ndarray:
    if config.n_changepoints <= 0:
        return np.empty(0)
    span = config.changepoint_range * (n - 1)
    # interior grid; skip t=0 where the hinge duplicates the slope column
    return np.linspace(0.0, span, config.n_changepoints + 1)[1:]


def build_features(dates, holidays: tuple[Holiday, ...],
                   config: FitConfig = FitConfig()):
    """Feature matrix over consecutive daily dates.

    Columns: 1, t, hinge(t - c_j), sin/cos(2 pi k t / 7) for k <= K, then one
    indicator per event name.  Returns (X, column names, parsed dates).
    """
    days = parse_dates(dates)
    n = len(days)
    t = np.arange(n, dtype=float)
    cps = _changepoint_offsets(n, config)
    cols: list[np.ndarray] = [np.ones(n), t]
    names = ["intercept", "t"]
    for j, c in enumerate(cps):
        cols.append(np.maximum(0.0, t - c))
        names.append(f"hinge_{j}")
    for k in range(1, config.fourier_order + 1):
        w = 2.0 * math.pi * k * t / 7.0
        cols.append(np.sin(w))
        names.append(f"sin_{k}")
        cols.append(np.cos(w))
        names.append(f"cos_{k}")
    for hol in holidays:
        cols.append(np.array([1.0 if hol.covers(d) else 0.0 for d in days]))
        names.append(f"holiday:{hol.name}")
    X = np.column_stack(cols)
    if n <= X.shape[1]:
        raise TooFewPoints(
            f"{n} points cannot support {X.shape[1]} feature columns")
    return X, names, days


def fit_ts(series, dates, holidays: tuple[Holiday, ...] = (),
           config: FitConfig = FitConfig()) -> TsModel:
    """Ridge least squares on the decomposition features.

    Only hinge and Fourier columns are penalized; with ridge_lambda = 0 a
    collinear design raises SingularDesign instead of being silently damped.
    """
    y = np.asarray(series, dtype=float)
    X, names, days = build_features(dates, holidays, config)
    n, p = X.shape
    if y.shape != (n,):
        raise InputError(f"series length {y.size} != {n} dates")
    if n < p + 2:
        raise TooFewPoints(f"need at least {p + 2} points, got {n}")
    penalty = np.array([1.0 if nm.startswith(("hinge_", "sin_", "cos_")) else 0.0
                        for nm in names])
    xtx = X.T @ X + config.ridge_lambda * np.diag(penalty)
    if config.ridge_lambda == 0.0 and np.linalg.matrix_rank(X) < p:
        raise SingularDesign("collinear features with no ridge penalty")
    try:
        beta = np.linalg.solve(xtx, X.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign(str(exc)) from exc
    resid = y - X @ beta
    dof = max(1, n - p)
    residual_std = float(math.sqrt(resid @ resid / dof))

    # sandwich covariance of the ridge estimator, for event-effect SEs
    xtx_inv = np.linalg.inv(xtx)
    cov = residual_std ** 2 * (xtx_inv @ (X.T @ X) @ xtx_inv)
    ses = np.sqrt(np.diag(cov))

    idx = {nm: i for i, nm in enumerate(names)}
    cps = _changepoint_offsets(n, config)
    hinge = np.array([beta[idx[f"hinge_{j}"]] for j in range(cps.size)])
    fourier = np.array([beta[idx[f"{fn}_{k}"]]
                        for k in range(1, config.fourier_order + 1)
                        for fn in ("sin", "cos")])
    effects = {h.name: float(beta[idx[f"holiday:{h.name}"]]) for h in holidays}
    eff_ses = {h.name: float(ses[idx[f"holiday:{h.name}"]]) for h in holidays}
    return TsModel(
        start=days[0], n_fit=n,
        intercept=float(beta[idx["intercept"]]), slope=float(beta[idx["t"]]),
        changepoints=cps, hinge_coefs=hinge,
        fourier_order=config.fourier_order, fourier_coefs=fourier,
        holidays=tuple(holidays), holiday_effects=effects, holiday_ses=eff_ses,
        residual_std=residual_std,
    )


@dataclass
class ComponentRow:
    date: str
    trend: float
    weekly: float
    holiday: float
    yhat: float
    lo: float
    hi: float


def predict_components(model: TsModel, dates) -> list[ComponentRow]:
    """Evaluate the fitted components; the interval is yhat +/- z90 * residual std."""
    days = parse_dates(dates)
    if days and days[0] < model.start:
        raise InputError(f"dates start {days[0]} before the fit window {model.start}")
    out = []
    for d in days:
        t = float((d - model.start).days)
        g = model.trend(t)
        s = model.weekly(t)
        h = model.holiday(d)
        yhat = g + s + h
        band = Z_90 * model.residual_std
        out.append(ComponentRow(date=d.isoformat(), trend=g, weekly=s,
                                holiday=h, yhat=yhat,
                                lo=yhat - band, hi=yhat + band))
    return out


def load_holidays(path: str) -> tuple[Holiday, ...]:
    """Holiday spec file: [{"name": ..., "date": ... or "dates": [...], "window": 0}]."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
    holidays = []
    for item in raw:
        try:
            dates = item.get("dates") or [item["date"]]
            uniq = tuple(dict.fromkeys(dates))
            if len(uniq) != len(dates):
                raise InputError(f"duplicate dates for holiday {item.get('name')!r}")
            holidays.append(Holiday(name=item["name"], dates=uniq,
                                    window=int(item.get("window", 0))))
        except KeyError as exc:
            raise InputError(f"{path}: holiday entry missing {exc}") from exc
    names = [h.name for h in holidays]
    if len(set(names)) != len(names):
        raise InputError(f"{path}: duplicate holiday names")
    return tuple(holidays)
