"""Regression discontinuity estimators around the merge cutoff.

The running variable is the block number centered at the cutoff; the design
nests three column sets mirroring the usual table layout:

  spec 1: [intercept, merged]
  spec 2: [intercept, merged, blockn]
  spec 3: [intercept, merged, blockn, merged:blockn]

Continuous outcomes get OLS with classical (homoskedastic) standard errors
and t-based p-values; binary outcomes get a logit fit via iteratively
reweighted least squares with z-based p-values.  Tail probabilities come from
the local incomplete-beta/erf routines, no statistical library involved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, NumericalError
from .metrics import EmptyPanel, PanelRow
from .stats import f_sf, normal_two_sided_p, t_two_sided_p

COLUMN_SPECS = {
    1: ("intercept", "merged"),
    2: ("intercept", "merged", "blockn"),
    3: ("intercept", "merged", "blockn", "merged:blockn"),
}

OUTCOMES = ("delay_q25", "delay_median", "delay_q75", "delay_iqr",
            "gps", "gps_ma5", "gps_ma7200", "congested", "continued_congested")

IRLS_MAX_ITER = 60
IRLS_GRAD_TOL = 1e-8


class UnknownOutcome(InputError):
    pass


class SingularDesign(NumericalError):
    pass


class Separation(NumericalError):
    """Perfect separation: the logit MLE diverges."""


class NoVariation(NumericalError):
    """Binary outcome with a single class present."""


class NonConvergence(NumericalError):
    pass


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    outcome: str

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class OlsFit:
    columns: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_statistics: np.ndarray
    p_values: np.ndarray
    r_squared: float
    adj_r_squared: float
    residual_std_error: float
    f_statistic: float
    f_p_value: float
    df_resid: int
    n: int
    outcome: str

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.columns.index(name)])

    def se(self, name: str) -> float:
        return float(self.standard_errors[self.columns.index(name)])


@dataclass
class LogitFit:
    columns: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    z_statistics: np.ndarray
    p_values: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    n: int
    outcome: str

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.columns.index(name)])

    def se(self, name: str) -> float:
        return float(self.standard_errors[self.columns.index(name)])


def _outcome_value(row: PanelRow, name: str):
    if name not in OUTCOMES:
        raise UnknownOutcome(f"unknown outcome {name!r}; choose from {OUTCOMES}")
    v = getattr(row, name)
    if isinstance(v, bool):
        return float(v)
    return v


def build_design(panel: Sequence[PanelRow], outcome: str,
                 spec: int = 3) -> DesignMatrix:
    """Design matrix for one outcome; rows with undefined outcome are dropped."""
    if spec not in COLUMN_SPECS:
        raise InputError(f"spec must be one of {sorted(COLUMN_SPECS)}, got {spec}")
    if not panel:
        raise EmptyPanel("empty panel")
    columns = COLUMN_SPECS[spec]
    rows = sorted(panel, key=lambda r: r.number)
    xs, ys = [], []
    for row in rows:
        v = _outcome_value(row, outcome)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        merged = 1.0 if row.merged else 0.0
        blockn = float(row.blockn)
        full = {"intercept": 1.0, "merged": merged, "blockn": blockn,
                "merged:blockn": merged * blockn}
        xs.append([full[c] for c in columns])
        ys.append(float(v))
    if not xs:
        raise EmptyPanel(f"no rows with defined outcome {outcome!r}")
    return DesignMatrix(X=np.asarray(xs), y=np.asarray(ys),
                        columns=columns, outcome=outcome)


def ols_fit(design: DesignMatrix) -> OlsFit:
    """Least squares through the normal equations, classical standard errors."""
    X, y = design.X, design.y
    n, p = X.shape
    if n <= p:
        raise SingularDesign(f"need n > p, got n={n}, p={p}")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesign("design matrix is rank deficient")
    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - p
    sigma2 = rss / df
    cov = sigma2 * np.linalg.inv(xtx)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    pvals = np.array([math.nan if math.isnan(t)
                      else 0.0 if math.isinf(t)
                      else t_two_sided_p(t, df) for t in tstat])
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)
    adj = 1.0 - (1.0 - r2) * (n - 1) / df
    if p > 1 and rss > 0 and tss > rss:
        fstat = ((tss - rss) / (p - 1)) / (rss / df)
        fp = f_sf(fstat, p - 1, df)
    elif p > 1 and rss == 0:
        fstat, fp = math.inf, 0.0
    else:
        fstat, fp = 0.0, 1.0
    return OlsFit(columns=design.columns, coefficients=beta, standard_errors=se,
                  t_statistics=tstat, p_values=pvals, r_squared=r2,
                  adj_r_squared=adj, residual_std_error=math.sqrt(sigma2),
                  f_statistic=fstat, f_p_value=fp, df_resid=df, n=n,
                  outcome=design.outcome)


def _log_likelihood(y: np.ndarray, eta: np.ndarray) -> float:
    # stable sum of y*eta - log(1 + exp(eta))
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-eta))


def logit_fit(design: DesignMatrix) -> LogitFit:
    """Maximum likelihood logit via IRLS; SEs from the inverse information."""
    X, y = design.X, design.y
    n, p = X.shape
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InputError("logit outcome must be binary 0/1")
    if y.min() == y.max():
        raise NoVariation("outcome has a single class; logit undefined")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesign("design matrix is rank deficient")

    def check_separation(mu_now: np.ndarray) -> None:
        pinned_0 = mu_now[y == 0.0]
        pinned_1 = mu_now[y == 1.0]
        if pinned_0.max(initial=0.0) < 1e-8 and pinned_1.min(initial=1.0) > 1 - 1e-8:
            raise Separation("perfect separation: coefficients diverge")

    beta = np.zeros(p)
    converged = False
    iterations = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        iterations = it
        eta = X @ beta
        mu = _sigmoid(eta)
        if np.max(np.abs(eta)) > 30.0:
            check_separation(mu)
        grad = X.T @ (y - mu)
        if np.max(np.abs(grad)) <= IRLS_GRAD_TOL:
            converged = True
            break
        w = mu * (1.0 - mu)
        xtwx = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(xtwx, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularDesign(f"weighted design became singular: {exc}") from exc
        beta = beta + step
    if not converged:
        eta = X @ beta
        mu = _sigmoid(eta)
        check_separation(mu)
        grad = X.T @ (y - mu)
        if np.max(np.abs(grad)) <= math.sqrt(IRLS_GRAD_TOL):
            converged = True
        else:
            raise NonConvergence(
                f"IRLS did not converge in {IRLS_MAX_ITER} iterations")
    eta = X @ beta
    mu = _sigmoid(eta)
    check_separation(mu)
    w = mu * (1.0 - mu)
    info = (X * w[:, None]).T @ X
    cov = np.linalg.inv(info)
    se = np.sqrt(np.diag(cov))
    z = beta / se
    pvals = np.array([normal_two_sided_p(v) for v in z])
    return LogitFit(columns=design.columns, coefficients=beta,
                    standard_errors=se, z_statistics=z, p_values=pvals,
                    log_likelihood=_log_likelihood(y, eta),
                    iterations=iterations, converged=converged, n=n,
                    outcome=design.outcome)


def relative_risk_reduction(logit_merged_coef: float) -> float:
    """1 - exp(coef): the drop in congestion odds implied by a logit coefficient."""
    return 1.0 - math.exp(logit_merged_coef)


def ate_report(fit: OlsFit | LogitFit, outcome_name: str, unit: str = "s") -> str:
    """Local treatment effect at the cutoff in plain words."""
    if "merged" not in fit.columns:
        raise InputError("fit has no merged coefficient")
    ate = fit.coef("merged")
    if isinstance(fit, LogitFit):
        rrr = relative_risk_reduction(ate)
        return (f"{outcome_name}: merged coefficient {ate:.3f} "
                f"=> relative risk reduction {100 * rrr:.2f}%")
    pre = fit.coef("intercept")
    post = pre + ate
    if ate == 0:
        return f"{outcome_name}: no change at the cutoff ({pre:.1f} {unit})"
    pct = 100.0 * ate / pre
    return (f"{outcome_name}: {pre:.1f} -> {post:.1f} {unit} "
            f"({pct:+.1f}% at the cutoff)")


# ---------------------------------------------------------------------------
# table rendering


def _stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def fit_nested(panel: Sequence[PanelRow], outcome: str, family: str = "ols",
               specs: Sequence[int] = (1, 2, 3)) -> dict[int, OlsFit | LogitFit]:
    fitter = {"ols": ols_fit, "logit": logit_fit}.get(family)
    if fitter is None:
        raise InputError(f"family must be 'ols' or 'logit', got {family!r}")
    return {s: fitter(build_design(panel, outcome, s)) for s in specs}


def regression_table(fits: dict[int, OlsFit | LogitFit]) -> str:
    """Aligned text table over nested specs, significance stars in the note."""
    specs = sorted(fits)
    rows = ("merged", "blockn", "merged:blockn", "intercept")
    width = 24
    head = "".ljust(width) + "".join(f"({s})".center(width) for s in specs)
    lines = [head, "-" * len(head)]
    for name in rows:
        if not any(name in fits[s].columns for s in specs):
            continue
        coefs, ses = [], []
        for s in specs:
            fit = fits[s]
            if name in fit.columns:
                coefs.append(f"{fit.coef(name):.3f}{_stars(float(fit.p_values[fit.columns.index(name)]))}")
                ses.append(f"({fit.se(name):.3f})")
            else:
                coefs.append("")
                ses.append("")
        lines.append(name.ljust(width) + "".join(c.center(width) for c in coefs))
        lines.append("".ljust(width) + "".join(s.center(width) for s in ses))
    lines.append("-" * len(head))
    first = fits[specs[0]]
    lines.append("Observations".ljust(width)
                 + "".join(f"{fits[s].n:,}".center(width) for s in specs))
    if isinstance(first, OlsFit):
        lines.append("R2".ljust(width)
                     + "".join(f"{fits[s].r_squared:.3f}".center(width) for s in specs))
        lines.append("Adjusted R2".ljust(width)
                     + "".join(f"{fits[s].adj_r_squared:.3f}".center(width) for s in specs))
        lines.append("Residual Std. Error".ljust(width)
                     + "".join(f"{fits[s].residual_std_error:.3f} (df={fits[s].df_resid})".center(width)
                               for s in specs))
        lines.append("F Statistic".ljust(width)
                     + "".join(f"{fits[s].f_statistic:.1f}{_stars(fits[s].f_p_value)}".center(width)
                               for s in specs))
    else:
        lines.append("Log-likelihood".ljust(width)
                     + "".join(f"{fits[s].log_likelihood:.1f}".center(width) for s in specs))
    lines.append("Note: *p<0.1; **p<0.05; ***p<0.01")
    return "\n".join(lines)


def fits_to_json(fits: dict[int, OlsFit | LogitFit]) -> str:
    out = {}
    for s, fit in fits.items():
        entry = {
            "outcome": fit.outcome,
            "columns": list(fit.columns),
            "coefficients": [float(v) for v in fit.coefficients],
            "standard_errors": [float(v) for v in fit.standard_errors],
            "p_values": [float(v) for v in fit.p_values],
            "n": fit.n,
        }
        if isinstance(fit, OlsFit):
            entry.update(r_squared=fit.r_squared,
                         adj_r_squared=fit.adj_r_squared,
                         residual_std_error=fit.residual_std_error,
                         f_statistic=fit.f_statistic)
        else:
            entry.update(log_likelihood=fit.log_likelihood,
                         iterations=fit.iterations,
                         converged=fit.converged)
        out[str(s)] = entry
    return json.dumps(out, indent=2)
