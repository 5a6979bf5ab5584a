"""Effect sizes of the design principles on unnecessary workload.

Per comparison group: an indicator design over the six principles, VIF
screening, a Huber M-estimator fitted by IRLS with robust (H1) standard
errors, and a two-sample Kolmogorov-Smirnov goodness-of-fit check between
fitted and observed workloads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .analytics import RuleRevisionStats
from .checkers import PRINCIPLES
from .classifier import LabeledRule

HUBER_T = 1.345
MAD_NORMAL = 0.6744897501960817  # Phi^-1(3/4)
VIF_LIMIT = 20.0
ALPHA = 0.05

PRINCIPLE_TITLES = {
    "limited_proxy": "Limited Proxy",
    "successful_action": "Successful Malicious Action",
    "exceptions": "Exceptions",
    "alert_throttling": "Alert Throttling",
    "generalized_characteristic": "Generalized Characteristic",
    "generalized_position": "Generalized Position",
}


class VIFScreeningError(ValueError):
    """Some predictor's VIF exceeds the screening limit."""

    def __init__(self, vifs: Mapping[str, float], limit: float):
        self.vifs = dict(vifs)
        self.limit = limit
        worst = max(self.vifs, key=self.vifs.get)
        super().__init__(f"VIF of {worst} is {self.vifs[worst]:.3g}, above {limit:g}")


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    dropped: Mapping[str, str] = field(default_factory=dict)
    keys: tuple[tuple[int, int], ...] = ()

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def predictors(self) -> tuple[str, ...]:
        return self.columns[1:]


def design_from_columns(
    indicators: Mapping[str, Sequence[float]],
    y: Sequence[float],
    keys: Sequence[tuple[int, int]] = (),
) -> DesignMatrix:
    """Intercept plus the usable indicator columns, in mapping order.

    A column is dropped as "degenerate" with fewer than two ones or two
    zeros, as "aliased" when it lies in the span of the columns already
    kept, and as "insufficient_observations" when keeping it would leave no
    residual degree of freedom.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n == 0:
        raise ValueError("empty group")
    kept = [np.ones(n)]
    names = ["intercept"]
    dropped: dict[str, str] = {}
    for name, values in indicators.items():
        col = np.asarray(values, dtype=np.float64)
        if col.shape != (n,):
            raise ValueError(f"column {name} has {col.size} values for {n} observations")
        ones = int(np.sum(col > 0.5))
        if ones < 2 or n - ones < 2:
            dropped[name] = "degenerate"
            continue
        candidate = np.column_stack(kept + [col])
        if np.linalg.matrix_rank(candidate) < candidate.shape[1]:
            dropped[name] = "aliased"
            continue
        if n < candidate.shape[1] + 1:
            dropped[name] = "insufficient_observations"
            continue
        kept.append(col)
        names.append(name)
    return DesignMatrix(np.column_stack(kept), y, tuple(names), dropped, tuple(keys))


def build_design_matrix(
    group: Sequence[LabeledRule], stats: Sequence[RuleRevisionStats]
) -> DesignMatrix:
    if not group:
        raise ValueError("empty group")
    by_key = {(s.sid, s.rev): s for s in stats}
    missing = [(r.sid, r.rev) for r in group if (r.sid, r.rev) not in by_key]
    if missing:
        raise KeyError(f"no workload stats for {missing[:5]}")
    y = [by_key[(r.sid, r.rev)].unnecessary_workload_per_day for r in group]
    indicators = {p: [1.0 if r.labels[p] else 0.0 for r in group] for p in PRINCIPLES}
    return design_from_columns(indicators, y, [(r.sid, r.rev) for r in group])


def _r_squared(target: np.ndarray, others: np.ndarray) -> float:
    beta, *_ = np.linalg.lstsq(others, target, rcond=None)
    resid = target - others @ beta
    centered = target - target.mean()
    sst = float(centered @ centered)
    return 1.0 - float(resid @ resid) / sst


def vif(matrix: DesignMatrix, limit: float | None = VIF_LIMIT) -> dict[str, float]:
    """VIF of every non-intercept column; raises VIFScreeningError above ``limit``."""
    X = matrix.X
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    out = {}
    for j, name in enumerate(matrix.columns):
        if j == 0:
            continue
        others = np.delete(X, j, axis=1)
        r2 = _r_squared(X[:, j], others)
        out[name] = math.inf if r2 >= 1.0 else 1.0 / (1.0 - r2)
    if limit is not None and out and max(out.values()) > limit:
        raise VIFScreeningError(out, limit)
    return out


def _huber_psi(u):
    return np.clip(u, -HUBER_T, HUBER_T)


def _huber_psi_deriv(u):
    return (np.abs(u) <= HUBER_T).astype(np.float64)


def _huber_weights(u):
    a = np.abs(u)
    return np.where(a <= HUBER_T, 1.0, HUBER_T / np.maximum(a, 1e-300))


def mad_scale(resid: np.ndarray) -> float:
    """Median absolute residual (about zero), rescaled to the normal sigma."""
    return float(np.median(np.abs(resid)) / MAD_NORMAL)


def _wls(X, y, weights):
    sw = np.sqrt(weights)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return beta


@dataclass(frozen=True)
class RegressionResult:
    columns: tuple[str, ...]
    coefficients: tuple[float, ...]
    robust_std_errors: tuple[float, ...]
    p_values: tuple[float, ...]
    n_obs: int
    vif: Mapping[str, float] = field(default_factory=dict)
    ks_statistic: float = 0.0
    ks_p_value: float = 1.0
    dropped: Mapping[str, str] = field(default_factory=dict)
    scale: float = 0.0
    iterations: int = 0
    converged: bool = True
    fitted: tuple[float, ...] = field(default=(), repr=False)

    def coef(self, name: str) -> float:
        return self.coefficients[self.columns.index(name)]

    def p_value(self, name: str) -> float:
        return self.p_values[self.columns.index(name)]

    def significant(self, alpha: float = ALPHA) -> set[str]:
        return {c for c, p in zip(self.columns, self.p_values) if p < alpha}

    def to_dict(self) -> dict:
        return {
            "n_obs": self.n_obs,
            "coefficients": dict(zip(self.columns, self.coefficients)),
            "robust_std_errors": dict(zip(self.columns, self.robust_std_errors)),
            "p_values": dict(zip(self.columns, self.p_values)),
            "vif": dict(self.vif),
            "dropped": dict(self.dropped),
            "ks": {"d": self.ks_statistic, "p": self.ks_p_value},
            "scale": self.scale,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def fit_robust(
    matrix: DesignMatrix, *, tol: float = 1e-8, max_iter: int = 200
) -> RegressionResult:
    """Huber M-estimate via IRLS, MAD scale re-estimated every step.

    Standard errors use Huber's H1 sandwich correction; p-values come from
    two-sided z-tests. A perfect fit (zero residual scale) returns the least
    squares solution with zero standard errors.
    """
    X, y = matrix.X, matrix.y
    n, k = X.shape
    beta = _wls(X, y, np.ones(n))
    resid = y - X @ beta
    scale = mad_scale(resid)
    iterations = 0
    converged = True
    magnitude = max(1.0, float(np.max(np.abs(y))))
    if scale > 1e-12 * magnitude:
        converged = False
        while iterations < max_iter:
            weights = _huber_weights(resid / scale)
            new = _wls(X, y, weights)
            iterations += 1
            change = float(np.max(np.abs(new - beta)))
            beta = new
            resid = y - X @ beta
            scale = mad_scale(resid)
            if change < tol:
                converged = True
                break
            if scale <= 1e-12 * magnitude:
                converged = True
                break
    if scale <= 1e-12 * magnitude:
        se = np.zeros(k)
        p = np.where(np.abs(beta) > 0, 0.0, 1.0)
    else:
        u = resid / scale
        psi_d = _huber_psi_deriv(u)
        m = float(psi_d.mean())
        if m == 0.0:
            se = np.full(k, np.inf)
        else:
            kappa = 1.0 + k / n * float(psi_d.var()) / m**2
            ss_psi = float(np.sum(_huber_psi(u) ** 2))
            cov = (
                kappa**2
                * (ss_psi / (n - k) * scale**2)
                / m**2
                * np.linalg.pinv(X.T @ X)
            )
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(beta) / se, np.where(beta != 0, np.inf, 0.0))
        p = np.clip(2.0 * sps.norm.sf(z), 0.0, 1.0)
    return RegressionResult(
        columns=matrix.columns,
        coefficients=tuple(float(b) for b in beta),
        robust_std_errors=tuple(float(s) for s in se),
        p_values=tuple(float(v) for v in p),
        n_obs=n,
        dropped=dict(matrix.dropped),
        scale=float(scale),
        iterations=iterations,
        converged=converged,
        fitted=tuple(float(v) for v in X @ beta),
    )


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = a.size * b.size / (a.size + b.size)
    p = 1.0 if d == 0.0 else float(sps.kstwobign.sf(math.sqrt(en) * d))
    return d, min(max(p, 0.0), 1.0)


def run_group_regression(
    group: Sequence[LabeledRule] | DesignMatrix,
    stats: Sequence[RuleRevisionStats] = (),
    *,
    vif_limit: float | None = VIF_LIMIT,
) -> RegressionResult:
    """Design matrix, VIF screen, robust fit, then KS of fitted against observed."""
    matrix = group if isinstance(group, DesignMatrix) else build_design_matrix(group, stats)
    vifs = vif(matrix, vif_limit) if len(matrix.columns) > 1 else {}
    result = fit_robust(matrix)
    d, p = ks_two_sample(result.fitted, matrix.y)
    return RegressionResult(
        **{
            **result.__dict__,
            "vif": vifs,
            "ks_statistic": d,
            "ks_p_value": p,
        }
    )


def _fmt(value: float) -> str:
    if value == 0:
        value = 0.0  # avoid "-0.00"
    return f"{value:.2f}"


def _fmt_p(p: float) -> str:
    return "<0.01" if p < 0.01 else f"{p:.2f}"


def render_table(results: Mapping[str, RegressionResult], alpha: float = ALPHA) -> str:
    """Plain-text table: coefficient and p-value per group, "-" for dropped, "*" when p < alpha."""
    groups = list(results)
    labels = ["Constant", *(PRINCIPLE_TITLES[p] for p in PRINCIPLES), "N.obs.", "KS D / p"]
    rows = []
    for key in ("intercept", *PRINCIPLES):
        cells = []
        for g in groups:
            r = results[g]
            if key in r.columns:
                coef, p = r.coef(key), r.p_value(key)
                mark = "*" if p < alpha else ""
                cells.append(f"{_fmt(coef)}{mark} ({_fmt_p(p)}{mark})")
            else:
                cells.append("-")
        rows.append(cells)
    rows.append([str(results[g].n_obs) for g in groups])
    ks_cells = []
    for g in groups:
        r = results[g]
        mark = "*" if r.ks_p_value < alpha else ""
        ks_cells.append(f"{_fmt(r.ks_statistic)}{mark} ({_fmt_p(r.ks_p_value)}{mark})")
    rows.append(ks_cells)
    width0 = max(len(s) for s in labels + ["Comparison group"])
    widths = [max([len(g)] + [len(row[i]) for row in rows]) for i, g in enumerate(groups)]
    lines = ["  ".join(["Comparison group".ljust(width0)] + [g.rjust(w) for g, w in zip(groups, widths)])]
    lines.append("-" * len(lines[0]))
    for label, row in zip(labels, rows):
        lines.append("  ".join([label.ljust(width0)] + [c.rjust(w) for c, w in zip(row, widths)]))
    lines.append("")
    lines.append(f"* p < {alpha:g}; '-' = column not regressed (see dropped reasons)")
    for g in groups:
        for name, reason in results[g].dropped.items():
            lines.append(f"  {g}: {name} dropped ({reason})")
    return "\n".join(lines) + "\n"


def relative_change(intercept: float, effect: float) -> float:
    """Fractional change of the expected workload when a principle is applied."""
    return effect / intercept
