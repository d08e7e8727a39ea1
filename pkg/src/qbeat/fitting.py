"""Weighted least-squares fits of beat data for (A, B, dt_offset, W).

The objective is the reduced chi-squared

    chi2 = sum_i (P_fit(t_i) - P_meas_i)^2 / (eta * sigma_i^2),  eta = n - 4.

``fit`` screens a regular start grid with a vectorized chi2 evaluation,
refines the most promising nodes with a bounded trust-region least-squares
solver using an analytic Jacobian, and keeps the lowest minimum. Parameter
uncertainties come from profiles of the unreduced chi2 (or, optionally,
from the curvature matrix).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import brentq, least_squares

from .angular import HalfIntLike, as_halfint
from .beat_model import CS_GEOMETRY, MHZ_NS, DetectionGeometry, _smear_dx, smear_factor
from .dataset import BeatDataset
from .errors import ConvergenceError, InvalidArgument, ProfileError
from .hyperfine import HyperfineSystem, beat_spectrum

__all__ = [
    "PARAM_NAMES",
    "N_FIT_PARAMS",
    "FitParams",
    "FitConfig",
    "FitResult",
    "Uncertainties",
    "ResidualReport",
    "BeatModel",
    "DEFAULT_GRID",
    "chi2",
    "chi2_gradient",
    "fit",
    "uncertainties",
    "profile_half_widths",
    "residual_report",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("A", "B", "dt_offset", "W")
N_FIT_PARAMS = len(PARAM_NAMES)

DEFAULT_GRID = {
    "A": (5.0, 10.0, 0.25),
    "B": (-2.0, 2.0, 0.5),
    "dt_offset": (-1.0, 1.0, 0.5),
    "W": (0.0, 5.0, 1.0),
}

# fallback first profile steps when the curvature matrix is singular
_PROFILE_STEP = {"A": 0.05, "B": 0.1, "dt_offset": 0.2, "W": 0.5}


@dataclass(frozen=True)
class FitParams:
    A: float  # MHz
    B: float  # MHz
    dt_offset: float  # ns
    W: float  # ns

    def __post_init__(self):
        if not self.W >= 0:
            raise InvalidArgument(f"W must be >= 0, got {self.W}")

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.dt_offset, self.W], dtype=float)

    @classmethod
    def from_array(cls, x) -> "FitParams":
        A, B, dt, W = (float(v) for v in x)
        return cls(A, B, dt, max(W, 0.0))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, self.as_array().tolist()))


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit`.

    ``grid`` maps each parameter name to ``(lo, hi, step)`` for the start
    grid; ``lo == hi`` pins the starts of that parameter to one value.
    ``uncertainty`` is ``"profile"``, ``"covariance"`` or ``"none"``.
    """

    grid: Mapping[str, tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_GRID))
    n_refine: int = 32
    dt_bound: float = 5.0
    W_min: float = 0.0
    uncertainty: str = "profile"
    xtol: float = 1e-12
    ftol: float = 1e-12
    gtol: float = 1e-12
    max_nfev: int = 500
    profile_max_doublings: int = 12
    geometry: DetectionGeometry = CS_GEOMETRY

    def __post_init__(self):
        grid = dict(DEFAULT_GRID)
        for name, axis in dict(self.grid).items():
            if name not in PARAM_NAMES:
                raise InvalidArgument(f"unknown grid parameter {name!r}")
            grid[name] = tuple(float(v) for v in axis)
        for name, (lo, hi, step) in grid.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
                raise InvalidArgument(f"grid for {name} must be finite")
            if hi < lo:
                raise InvalidArgument(f"grid for {name}: hi < lo")
            if hi > lo and step <= 0:
                raise InvalidArgument(f"grid for {name}: step must be > 0")
        object.__setattr__(self, "grid", grid)
        if self.W_min < 0:
            raise InvalidArgument("W_min must be >= 0")
        if grid["W"][0] < self.W_min:
            raise InvalidArgument("W grid starts below W_min")
        if self.dt_bound <= 0:
            raise InvalidArgument("dt_bound must be > 0")
        lo, hi, _ = grid["dt_offset"]
        if lo < -self.dt_bound or hi > self.dt_bound:
            raise InvalidArgument("dt_offset grid exceeds dt_bound")
        if self.n_refine < 1:
            raise InvalidArgument("n_refine must be >= 1")
        if self.uncertainty not in ("profile", "covariance", "none"):
            raise InvalidArgument(f"unknown uncertainty method {self.uncertainty!r}")

    def axis_values(self, name: str) -> np.ndarray:
        lo, hi, step = self.grid[name]
        if hi == lo:
            return np.array([lo])
        n = int(math.floor((hi - lo) / step + 1e-9))
        return lo + step * np.arange(n + 1)

    def grid_nodes(self) -> np.ndarray:
        """All start nodes, shape (N, 4), in lexicographic (A, B, dt, W) order."""
        axes = [self.axis_values(n) for n in PARAM_NAMES]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lower = np.array([-np.inf, -np.inf, -self.dt_bound, self.W_min])
        upper = np.array([np.inf, np.inf, self.dt_bound, np.inf])
        return lower, upper


class BeatModel:
    """Vectorized P_L(t; A, B, dt, W) for fixed (I, J) with analytic Jacobian."""

    def __init__(self, I: HalfIntLike, J: HalfIntLike, geom: DetectionGeometry = CS_GEOMETRY):
        spec = beat_spectrum(HyperfineSystem(as_halfint(I), as_halfint(J)))
        self.constant = spec.constant
        self.amp = np.array([c.amplitude for c in spec.components])
        self.per_A = np.array([float(c.nu_per_A) for c in spec.components])
        self.per_B = np.array([float(c.nu_per_B) for c in spec.components])
        self.k = geom.h2 * geom.a0

    @classmethod
    def for_system(cls, sys: HyperfineSystem, geom: DetectionGeometry = CS_GEOMETRY) -> "BeatModel":
        return cls(sys.I, sys.J, geom)

    def _omega(self, A, B):
        # signed angular beat frequencies, rad/ns; the signal is even in omega
        return MHZ_NS * (np.multiply.outer(A, self.per_A) + np.multiply.outer(B, self.per_B))

    def g2(self, x, t) -> np.ndarray:
        A, B, dt, W = x
        w = self._omega(A, B)
        s = smear_factor(w / MHZ_NS, W)
        return self.constant + (self.amp * s) @ np.cos(np.outer(w, np.asarray(t) + dt))

    def polarization(self, x, t) -> np.ndarray:
        g = self.k * self.g2(x, t)
        return 3.0 * g / (4.0 + g)

    def jacobian(self, x, t) -> np.ndarray:
        """dP/d(A, B, dt, W), shape (n, 4)."""
        A, B, dt, W = x
        t = np.asarray(t, dtype=float)
        w = self._omega(A, B)
        s = smear_factor(w / MHZ_NS, W)
        ds = _smear_dx(w * W)  # d s / d(wW)
        teff = t + dt
        phase = np.outer(w, teff)
        cos, sin = np.cos(phase), np.sin(phase)
        g = self.constant + (self.amp * s) @ cos

        # d g / d omega_k at each t
        dg_dw = (self.amp * ds * W)[:, None] * cos - (self.amp * s)[:, None] * sin * teff
        jac = np.empty((t.size, N_FIT_PARAMS))
        jac[:, 0] = (MHZ_NS * self.per_A) @ dg_dw
        jac[:, 1] = (MHZ_NS * self.per_B) @ dg_dw
        jac[:, 2] = -(self.amp * s * w) @ sin
        jac[:, 3] = (self.amp * ds * w) @ cos
        kg = self.k * g
        dP_dg = 12.0 * self.k / (4.0 + kg) ** 2
        return jac * dP_dg[:, None]

    def polarization_batch(self, X: np.ndarray, t) -> np.ndarray:
        """P_L for many parameter rows X (N, 4) at once; shape (N, n)."""
        X = np.asarray(X, dtype=float)
        w = self._omega(X[:, 0], X[:, 1])  # (N, K)
        s = smear_factor(w / MHZ_NS, X[:, 3:4])
        teff = np.asarray(t)[None, :] + X[:, 2:3]  # (N, n)
        cos = np.cos(w[:, :, None] * teff[:, None, :])  # (N, K, n)
        g = self.k * (self.constant + np.einsum("k,nk,nkt->nt", self.amp, s, cos))
        return 3.0 * g / (4.0 + g)


def _dof(n_points: int) -> int:
    eta = n_points - N_FIT_PARAMS
    if eta <= 0:
        raise InvalidArgument(f"need more than {N_FIT_PARAMS} points, got {n_points}")
    return eta


def _as_params(params) -> np.ndarray:
    if isinstance(params, FitParams):
        return params.as_array()
    return np.asarray(params, dtype=float)


def chi2(params, sys_template: HyperfineSystem, data: BeatDataset,
         geom: DetectionGeometry = CS_GEOMETRY) -> float:
    """Reduced chi-squared of ``data`` under ``params``; A and B of the template are ignored."""
    eta = _dof(len(data))
    model = BeatModel.for_system(sys_template, geom)
    r = (model.polarization(_as_params(params), data.t) - data.pl) / data.sigma
    return float(r @ r) / eta


def chi2_gradient(params, sys_template: HyperfineSystem, data: BeatDataset,
                  geom: DetectionGeometry = CS_GEOMETRY) -> np.ndarray:
    """Gradient of :func:`chi2` from the analytic Jacobian the optimizer uses."""
    eta = _dof(len(data))
    model = BeatModel.for_system(sys_template, geom)
    x = _as_params(params)
    r = (model.polarization(x, data.t) - data.pl) / data.sigma
    J = model.jacobian(x, data.t) / data.sigma[:, None]
    return 2.0 * (J.T @ r) / eta


@dataclass(frozen=True)
class Uncertainties:
    method: str
    two_sigma: dict[str, float]
    intervals: dict[str, tuple[float, float]]
    at_bound: dict[str, bool]


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit`.

    ``two_sigma`` holds symmetric 2-sigma half-widths, ``intervals`` the
    (possibly asymmetric) 2-sigma ranges, and ``residuals`` the normalized
    residuals ``(model - measured)/sigma`` in dataset order.
    """

    params: FitParams
    two_sigma: dict[str, float]
    red_chi2: float
    residuals: tuple[float, ...]
    n_points: int
    n_dof: int
    intervals: dict[str, tuple[float, float]] = field(default_factory=dict)
    uncertainty_method: str = "profile"
    index: tuple[int, ...] = ()
    t: tuple[float, ...] = ()
    n_starts: int = 0
    n_converged: int = 0

    def to_dict(self) -> dict:
        """JSON-ready report; undetermined numbers become None."""
        rep = residual_report(self)
        report = {
            "params": {
                "A_MHz": self.params.A,
                "B_MHz": self.params.B,
                "dt_offset_ns": self.params.dt_offset,
                "W_ns": self.params.W,
            },
            "two_sigma": {
                "A_MHz": self.two_sigma.get("A"),
                "B_MHz": self.two_sigma.get("B"),
                "dt_offset_ns": self.two_sigma.get("dt_offset"),
                "W_ns": self.two_sigma.get("W"),
            },
            "two_sigma_intervals": {
                _UNIT_KEYS[k]: list(v) for k, v in self.intervals.items()
            },
            "uncertainty_method": self.uncertainty_method,
            "red_chi2": self.red_chi2,
            "n_points": self.n_points,
            "n_dof": self.n_dof,
            "residual_summary": {
                "mean": rep.mean,
                "fraction_within_1sigma": rep.fraction_within_1sigma,
            },
        }
        return _nan_to_none(report)


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


_UNIT_KEYS = {"A": "A_MHz", "B": "B_MHz", "dt_offset": "dt_offset_ns", "W": "W_ns"}


def _solve(fun, jac, x0, lower, upper, config: FitConfig):
    return least_squares(
        fun, x0, jac=jac, bounds=(lower, upper), method="trf",
        xtol=config.xtol, ftol=config.ftol, gtol=config.gtol,
        max_nfev=config.max_nfev, x_scale="jac",
    )


def _screen(model: BeatModel, nodes: np.ndarray, data: BeatDataset, chunk: int = 1024) -> np.ndarray:
    t, y, sig = data.t, data.pl, data.sigma
    out = np.empty(len(nodes))
    for start in range(0, len(nodes), chunk):
        block = nodes[start:start + chunk]
        r = (model.polarization_batch(block, t) - y) / sig
        out[start:start + chunk] = np.einsum("nt,nt->n", r, r)
    return out


def fit(data: BeatDataset, sys_template: HyperfineSystem, config: FitConfig | None = None) -> FitResult:
    """Fit (A, B, dt_offset, W) to ``data`` by multi-start least squares.

    Only I and J of ``sys_template`` are used. Raises ConvergenceError when
    no refinement converges.
    """
    config = config or FitConfig()
    n = len(data)
    eta = _dof(n)
    model = BeatModel.for_system(sys_template, config.geometry)
    t, y, sig = data.t, data.pl, data.sigma
    lower, upper = config.bounds()

    def resid(x):
        return (model.polarization(x, t) - y) / sig

    def jac(x):
        return model.jacobian(x, t) / sig[:, None]

    nodes = config.grid_nodes()
    screened = _screen(model, nodes, data)
    # ties broken by lexicographic node order (nodes are already sorted)
    order = np.lexsort((np.arange(len(nodes)), screened))[: config.n_refine]

    best = None
    n_converged = 0
    for k in order:
        x0 = np.clip(nodes[k], lower, upper)
        try:
            sol = _solve(resid, jac, x0, lower, upper, config)
        except (ValueError, FloatingPointError) as exc:
            log.debug("start %s failed: %s", x0, exc)
            continue
        if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
            continue
        n_converged += 1
        key = (2.0 * sol.cost, tuple(sol.x))
        if best is None or key < best[0]:
            best = (key, sol)
    if best is None:
        raise ConvergenceError(f"none of {len(order)} starts converged")

    x = best[1].x
    r = resid(x)
    params = FitParams.from_array(x)
    unc = uncertainties(params, data, sys_template, config)
    return FitResult(
        params=params,
        two_sigma=unc.two_sigma,
        red_chi2=float(r @ r) / eta,
        residuals=tuple(float(v) for v in r),
        n_points=n,
        n_dof=eta,
        intervals=unc.intervals,
        uncertainty_method=unc.method,
        index=tuple(int(i) for i in data.index),
        t=tuple(float(v) for v in t),
        n_starts=len(order),
        n_converged=n_converged,
    )


def _covariance_sigma(J: np.ndarray) -> np.ndarray:
    """1-sigma from the curvature of the unreduced chi2, inf where undetermined."""
    H = J.T @ J
    try:
        cov = np.linalg.inv(H)
        diag = np.diag(cov)
        if not np.all(np.isfinite(diag)) or np.any(diag < 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(H)
        diag = np.diag(cov).copy()
        diag[np.diag(H) <= 0] = np.inf
    return np.sqrt(np.maximum(diag, 0.0))


def profile_half_widths(
    resid: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray] | None,
    x0: np.ndarray,
    k: int,
    lower: np.ndarray,
    upper: np.ndarray,
    config: FitConfig | None = None,
    step: float | None = None,
    delta: float = 1.0,
) -> tuple[float, float, bool, bool]:
    """Distances below and above ``x0[k]`` where the profiled ``sum(resid**2)`` rises by ``delta``.

    The remaining parameters are re-minimized at every trial value of
    parameter k. Returns ``(down, up, down_at_bound, up_at_bound)``; a side
    that reaches its parameter bound first is truncated there. Raises
    ProfileError if a side never reaches the level within the allowed
    number of step doublings.
    """
    config = config or FitConfig()
    x0 = np.asarray(x0, dtype=float)
    free = [i for i in range(len(x0)) if i != k]

    def chi_at(v, start):
        def f(q):
            x = start.copy()
            x[free] = q
            x[k] = v
            return resid(x)

        if jac is not None:
            def jac_free(q):
                x = start.copy()
                x[free] = q
                x[k] = v
                return jac(x)[:, free]
        else:
            jac_free = "2-point"
        q0 = np.clip(start[free], lower[free], upper[free])
        sol = _solve(f, jac_free, q0, lower[free], upper[free], config)
        x = start.copy()
        x[free] = sol.x
        x[k] = v
        return 2.0 * sol.cost, x

    r0 = resid(x0)
    base = float(r0 @ r0)
    target = base + delta
    if step is None or not np.isfinite(step) or step <= 0:
        step = 0.1 * max(abs(x0[k]), 1.0)

    out = []
    for sign in (-1.0, 1.0):
        bound = lower[k] if sign < 0 else upper[k]
        inside_v, inside_x = x0[k], x0.copy()
        h = step
        hit_bound = False
        crossed = None
        for _ in range(config.profile_max_doublings + 1):
            v = x0[k] + sign * h
            if (sign < 0 and v <= bound) or (sign > 0 and v >= bound):
                v = bound
            value, xv = chi_at(v, inside_x)
            if value >= target:
                crossed = v
                break
            inside_v, inside_x = v, xv
            if v == bound:
                hit_bound = True
                break
            h *= 2.0
        if hit_bound:
            out.append((abs(bound - x0[k]), True))
            continue
        if crossed is None:
            raise ProfileError(
                f"profile of parameter {k} did not reach delta={delta} within "
                f"{step * 2 ** config.profile_max_doublings:g} of the minimum"
            )
        start = inside_x
        v_cross = brentq(lambda v: chi_at(v, start)[0] - target, inside_v, crossed,
                         xtol=1e-10 * max(1.0, abs(x0[k])), rtol=1e-12)
        out.append((abs(v_cross - x0[k]), False))
    (down, down_b), (up, up_b) = out
    return down, up, down_b, up_b


def uncertainties(params, data: BeatDataset, sys_template: HyperfineSystem,
                  config: FitConfig | None = None) -> Uncertainties:
    """2-sigma uncertainties at a chi-squared minimum.

    With the profile method the 1-sigma distance on each side is where the
    unreduced chi2 has risen by 1 with the other parameters re-optimized;
    the 2-sigma half-width is twice the mean of the two sides.
    """
    config = config or FitConfig()
    model = BeatModel.for_system(sys_template, config.geometry)
    t, y, sig = data.t, data.pl, data.sigma
    lower, upper = config.bounds()
    x0 = _as_params(params)

    def resid(x):
        return (model.polarization(x, t) - y) / sig

    def jac(x):
        return model.jacobian(x, t) / sig[:, None]

    if config.uncertainty == "none":
        nan = float("nan")
        return Uncertainties("none", {n: nan for n in PARAM_NAMES},
                             {n: (nan, nan) for n in PARAM_NAMES}, {n: False for n in PARAM_NAMES})

    one_sigma = _covariance_sigma(jac(x0))
    two_sigma, intervals, at_bound = {}, {}, {}
    for k, name in enumerate(PARAM_NAMES):
        if config.uncertainty == "covariance":
            down = up = float(one_sigma[k])
            down_b = up_b = False
        else:
            step = one_sigma[k] if np.isfinite(one_sigma[k]) and one_sigma[k] > 0 else _PROFILE_STEP[name]
            down, up, down_b, up_b = profile_half_widths(resid, jac, x0, k, lower, upper, config, step=step)
        two_sigma[name] = float(down + up)  # 2 * mean of the sides
        lo = max(x0[k] - 2.0 * down, lower[k])
        hi = min(x0[k] + 2.0 * up, upper[k])
        intervals[name] = (float(lo), float(hi))
        at_bound[name] = bool(down_b or up_b)
    return Uncertainties(config.uncertainty, two_sigma, intervals, at_bound)


@dataclass(frozen=True)
class ResidualReport:
    mean: float
    fraction_within_1sigma: float
    per_point: list[tuple[int, float, float]]  # (index, t_ns, normalized residual)


def residual_report(result: FitResult) -> ResidualReport:
    r = np.asarray(result.residuals, dtype=float)
    index = result.index or tuple(range(1, len(r) + 1))
    times = result.t or tuple(float("nan") for _ in r)
    if r.size == 0:
        return ResidualReport(0.0, 1.0, [])
    return ResidualReport(
        mean=float(r.mean()),
        fraction_within_1sigma=float(np.mean(np.abs(r) <= 1.0)),
        per_point=[(int(i), float(tt), float(v)) for i, tt, v in zip(index, times, r)],
    )
