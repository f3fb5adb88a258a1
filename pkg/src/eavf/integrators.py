"""One-step methods, fixed-point solving and time stepping.

All implicit maps are solved by plain fixed-point iteration started from the
current state. A run whose iteration fails to converge is reported through
``StepOutcome.converged`` / ``Trajectory.converged`` rather than raised: the
experiments treat non-convergence as an observation.

One function evaluation (FE) is one call of ``grad U`` (exponential methods)
or ``grad U~ = M y + grad U`` (MID, AVF, CRK) at one point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.integrate

from .matfun import DimensionError, ExpPhiPair, exp_and_phi, exp_phi_pair, partition
from .quadrature import DivergenceError, FECounter, QuadratureRule, avf_segment_integral, gauss_legendre
from .systems import GradientSystem, SecondOrderSystem, second_to_first_order

__all__ = [
    "IterationConfig",
    "StepOutcome",
    "Trajectory",
    "MethodId",
    "FixedPointResult",
    "fixed_point_solve",
    "eavf_step",
    "avf_step",
    "mid_step",
    "crk_step",
    "block_matrices",
    "eavf_block_step",
    "mid_reduced_step",
    "avf_reduced_step",
    "integrate",
    "reference_solution",
    "contraction_estimate",
]


@dataclass(frozen=True)
class IterationConfig:
    tolerance: float = 1e-14
    max_iterations: int = 100
    divergence_threshold: float = 1e8

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


DEFAULT_CONFIG = IterationConfig()


@dataclass
class StepOutcome:
    y_new: np.ndarray
    iterations: int
    fe_count: int
    converged: bool
    residual: float = 0.0


@dataclass
class Trajectory:
    """Uniform-grid solution ``t_n = t_0 + n h`` with energies ``H(y^n)``.

    When a step fails to converge the run stops: ``converged`` is false,
    ``failed_step`` is the index of the step that failed and the arrays hold
    the states computed before it.
    """

    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    total_fe: int = 0
    per_step_iterations: list = field(default_factory=list)
    converged: bool = True
    failed_step: int | None = None
    method: str = ""
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)


_KINDS = ("eavf", "avf", "mid", "crk", "eavf_block", "mid_reduced", "avf_reduced")
_NEEDS_RULE = {"eavf", "avf", "crk", "eavf_block", "avf_reduced"}
_DEFAULT_S = {"eavf": 2, "avf": 2, "crk": 3, "eavf_block": 2, "avf_reduced": 2}


@dataclass(frozen=True)
class MethodId:
    """A method kind plus, for quadrature-based kinds, the number of GL points."""

    kind: str
    s: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown method {self.kind!r}; known: {', '.join(_KINDS)}")
        if self.kind in _NEEDS_RULE:
            if self.s is None:
                object.__setattr__(self, "s", _DEFAULT_S[self.kind])
            gauss_legendre(self.s)
        elif self.s is not None:
            raise ValueError(f"method {self.kind!r} takes no quadrature")
        if self.kind == "crk" and self.s < 2:
            raise ValueError("crk needs at least 2 quadrature points")

    @classmethod
    def parse(cls, text: str, gl: int | None = None) -> "MethodId":
        """Parse ``"eavf"``, ``"eavf:3"`` or ``"EAVFGL3"``-style names."""
        t = text.strip().lower().replace("-", "_")
        if ":" in t:
            t, s = t.split(":", 1)
            gl = int(s)
        elif "gl" in t and t.rsplit("gl", 1)[1].isdigit():
            t, s = t.rsplit("gl", 1)
            gl = int(s)
        return cls(t, gl if t in _NEEDS_RULE else None)

    @property
    def rule(self) -> QuadratureRule | None:
        return gauss_legendre(self.s) if self.s is not None else None

    @property
    def name(self) -> str:
        base = self.kind.upper()
        return f"{base}GL{self.s}" if self.s is not None else base

    @property
    def quadrature(self) -> str:
        return f"GL{self.s}" if self.s is not None else "none"


class FixedPointResult(NamedTuple):
    z: np.ndarray
    iterations: int
    converged: bool
    residual: float


def fixed_point_solve(fmap: Callable[[np.ndarray], np.ndarray], z0, cfg: IterationConfig = DEFAULT_CONFIG) -> FixedPointResult:
    """Iterate ``z <- fmap(z)`` until ``||z_{k+1} - z_k||_inf <= cfg.tolerance``.

    Non-finite iterates, iterates above ``cfg.divergence_threshold`` in norm,
    and an exhausted budget all yield ``converged=False``.
    """
    z = np.asarray(z0, dtype=float)
    residual = math.inf
    for k in range(1, cfg.max_iterations + 1):
        try:
            z_new = fmap(z)
        except DivergenceError:
            return FixedPointResult(z, k, False, math.inf)
        if not np.all(np.isfinite(z_new)) or np.max(np.abs(z_new)) > cfg.divergence_threshold:
            return FixedPointResult(z_new, k, False, math.inf)
        residual = float(np.max(np.abs(z_new - z)))
        z = z_new
        if residual <= cfg.tolerance:
            return FixedPointResult(z, k, True, residual)
    return FixedPointResult(z, cfg.max_iterations, False, residual)


# --------------------------------------------------------------------------- first-order methods


def _outcome(res: FixedPointResult, fe_per_iter: int) -> StepOutcome:
    return StepOutcome(res.z, res.iterations, res.iterations * fe_per_iter, res.converged, res.residual)


def _eavf_operators(sys: GradientSystem, h: float, cache: ExpPhiPair | None):
    if cache is None:
        cache = exp_phi_pair(sys.qm, h)
    elif cache.stepsize != h:
        raise ValueError(f"cache was built for h={cache.stepsize}, step uses h={h}")
    return cache.exp_v, h * (cache.phi_v @ sys.q_matrix)


def _eavf_kernel(grad, e, phq, y0, rule, cfg):
    ey0 = e @ y0

    def fmap(z):
        return ey0 + phq @ avf_segment_integral(grad, y0, z, rule)

    return _outcome(fixed_point_solve(fmap, y0, cfg), rule.order_s)


def eavf_step(
    sys: GradientSystem,
    y0,
    h: float,
    rule: QuadratureRule,
    cfg: IterationConfig = DEFAULT_CONFIG,
    cache: ExpPhiPair | None = None,
) -> StepOutcome:
    """Exponential AVF step ``y1 = exp(V) y0 + h phi(V) Q int_0^1 grad U(y0 + tau (y1 - y0)) dtau``.

    ``V = h Q M``. ``cache`` is an :class:`ExpPhiPair` for ``(Q M, h)``; it is
    built on the fly when omitted.
    """
    y0 = sys._check(y0)
    e, phq = _eavf_operators(sys, h, cache)
    return _eavf_kernel(sys.gradient, e, phq, y0, rule, cfg)


def _avf_kernel(grad_tilde, hq, y0, rule, cfg):
    def fmap(z):
        return y0 + hq @ avf_segment_integral(grad_tilde, y0, z, rule)

    return _outcome(fixed_point_solve(fmap, y0, cfg), rule.order_s)


def avf_step(sys: GradientSystem, y0, h: float, rule: QuadratureRule, cfg: IterationConfig = DEFAULT_CONFIG) -> StepOutcome:
    """Classical AVF step applied to ``U~(y) = U(y) + y^T M y / 2``."""
    y0 = sys._check(y0)
    return _avf_kernel(sys.grad_tilde, h * sys.q_matrix, y0, rule, cfg)


def _mid_kernel(grad_tilde, hq, y0, cfg):
    def fmap(z):
        g = np.asarray(grad_tilde(0.5 * (y0 + z)))
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
        return y0 + hq @ g

    return _outcome(fixed_point_solve(fmap, y0, cfg), 1)


def mid_step(sys: GradientSystem, y0, h: float, cfg: IterationConfig = DEFAULT_CONFIG) -> StepOutcome:
    """Implicit midpoint step ``y1 = y0 + h Q grad U~((y0 + y1) / 2)``."""
    y0 = sys._check(y0)
    return _mid_kernel(sys.grad_tilde, h * sys.q_matrix, y0, cfg)


def _crk_kernel(grad_tilde, hq, y0, rule, cfg):
    c = rule.nodes
    l0 = (2 * c - 1) * (c - 1)
    lh = -4 * c * (c - 1)
    l1 = (2 * c - 1) * c
    w_mid = rule.weights * (1.25 - 1.5 * c)
    w_end = rule.weights
    d = y0.size

    def fmap(z):
        yh, y1 = z[:d], z[d:]
        acc_mid = np.zeros(d)
        acc_end = np.zeros(d)
        for i in range(rule.order_s):
            g = np.asarray(grad_tilde(l0[i] * y0 + lh[i] * yh + l1[i] * y1))
            if not np.all(np.isfinite(g)):
                raise DivergenceError("non-finite gradient")
            acc_mid += w_mid[i] * g
            acc_end += w_end[i] * g
        return np.concatenate((y0 + hq @ acc_mid, y0 + hq @ acc_end))

    res = fixed_point_solve(fmap, np.concatenate((y0, y0)), cfg)
    out = _outcome(res, rule.order_s)
    out.y_new = res.z[d:]
    return out


def crk_step(sys: GradientSystem, y0, h: float, rule: QuadratureRule, cfg: IterationConfig = DEFAULT_CONFIG) -> StepOutcome:
    """Order-four energy-preserving continuous Runge-Kutta step.

    Solves simultaneously for the midpoint value ``y_half`` and ``y1`` along
    the quadratic ``y_tau`` through ``y0``, ``y_half``, ``y1``; the iterate is
    the concatenation ``(y_half; y1)``. Every node evaluation of ``grad U~``
    serves both integrals.
    """
    y0 = sys._check(y0)
    if rule.order_s < 2:
        raise ValueError("crk needs at least 2 quadrature points")
    return _crk_kernel(sys.grad_tilde, h * sys.q_matrix, y0, rule, cfg)


# --------------------------------------------------------------------------- second-order forms


def block_matrices(sys: SecondOrderSystem, h: float):
    """Block partitions of ``exp(hA)`` and ``phi(hA)``, ``A = [[O, I], [-Omega, N]]``."""
    a = sys.block_matrix()
    if h == 0.0:
        ident = np.eye(a.shape[0])
        return partition(ident), partition(ident)
    e, p = exp_and_phi(h * a)
    return partition(e), partition(p)


def _split(sys: SecondOrderSystem, q0, p0):
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if q0.shape != (sys.dim,) or p0.shape != (sys.dim,):
        raise DimensionError(f"expected q and p of shape ({sys.dim},)")
    return q0, p0


def eavf_block_step(
    sys: SecondOrderSystem,
    q0,
    p0,
    h: float,
    rule: QuadratureRule,
    cfg: IterationConfig = DEFAULT_CONFIG,
    blocks=None,
) -> StepOutcome:
    """EAVF for ``q'' - N q' + Omega q = -grad U1(q)`` in block form.

    Only the ``q`` equation is iterated; ``p1`` follows explicitly from the
    last segment integral. ``blocks`` is the pair returned by
    :func:`block_matrices`. Returns ``y_new = (q1; p1)``.
    """
    q0, p0 = _split(sys, q0, p0)
    if blocks is None:
        blocks = block_matrices(sys, h)
    eb, pb = blocks
    return _block_kernel(sys.gradient, eb.b11 @ q0 + eb.b12 @ p0, eb.b21 @ q0 + eb.b22 @ p0,
                         h * pb.b12, h * pb.b22, q0, rule, cfg)


def _block_kernel(grad, q_lin, p_lin, hp12, hp22, q0, rule, cfg):
    last = {}

    def fmap(z):
        g = avf_segment_integral(grad, q0, z, rule)
        last["g"] = g
        return q_lin - hp12 @ g

    res = fixed_point_solve(fmap, q0, cfg)
    out = _outcome(res, rule.order_s)
    if "g" in last:
        p1 = p_lin - hp22 @ last["g"]
    else:
        p1 = np.full_like(q0, np.nan)
    out.y_new = np.concatenate((res.z, p1))
    return out


def _reduced_kernel(sys: SecondOrderSystem, q0, p0, h, cfg, nonlinear, fe_per_iter):
    if h == 0.0:
        return StepOutcome(np.concatenate((q0, p0)), 0, 0, True, 0.0)
    nd, om = sys.damping, sys.omega
    base = q0 + h * p0 - 0.5 * h * (nd @ q0) - 0.25 * h * h * (om @ q0)
    lin = 0.5 * h * nd - 0.25 * h * h * om

    def fmap(z):
        return base + lin @ z - 0.5 * h * h * nonlinear(z)

    res = fixed_point_solve(fmap, q0, cfg)
    out = _outcome(res, fe_per_iter)
    q1 = res.z
    out.y_new = np.concatenate((q1, 2.0 * (q1 - q0) / h - p0))
    return out


def mid_reduced_step(sys: SecondOrderSystem, q0, p0, h: float, cfg: IterationConfig = DEFAULT_CONFIG) -> StepOutcome:
    """Implicit midpoint reduced to the displacement equation

    ``q1 = q0 + h p0 + h/2 N (q1 - q0) - h^2/4 Omega (q1 + q0) - h^2/2 grad U1((q0 + q1)/2)``,

    with ``p1`` recovered from ``(q1 - q0)/h = (p1 + p0)/2``.
    """
    q0, p0 = _split(sys, q0, p0)
    grad = sys.gradient

    def nonlinear(z):
        g = np.asarray(grad(0.5 * (q0 + z)))
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
        return g

    return _reduced_kernel(sys, q0, p0, h, cfg, nonlinear, 1)


def avf_reduced_step(sys: SecondOrderSystem, q0, p0, h: float, rule: QuadratureRule, cfg: IterationConfig = DEFAULT_CONFIG) -> StepOutcome:
    """AVF reduced to the displacement equation; see :func:`mid_reduced_step`."""
    q0, p0 = _split(sys, q0, p0)
    grad = sys.gradient

    def nonlinear(z):
        return avf_segment_integral(grad, q0, z, rule)

    return _reduced_kernel(sys, q0, p0, h, cfg, nonlinear, rule.order_s)


# --------------------------------------------------------------------------- time stepping


_SECOND_ORDER_ALIASES = {"eavf": "eavf_block", "mid": "mid_reduced", "avf": "avf_reduced"}


def _resolve(sys, method: MethodId) -> MethodId:
    if isinstance(sys, SecondOrderSystem):
        if method.kind in _SECOND_ORDER_ALIASES:
            return MethodId(_SECOND_ORDER_ALIASES[method.kind], method.s)
        return method
    if method.kind not in ("eavf", "avf", "mid", "crk"):
        raise ValueError(f"method {method.kind!r} needs a SecondOrderSystem")
    return method


def _stepper(sys, method: MethodId, h: float, cfg: IterationConfig):
    """Return ``step(y) -> StepOutcome`` with all ``h``-dependent matrices prepared once."""
    kind = method.kind
    rule = method.rule
    if isinstance(sys, SecondOrderSystem):
        d = sys.dim
        if kind == "eavf_block":
            eb, pb = block_matrices(sys, h)
            hp12, hp22 = h * pb.b12, h * pb.b22
            grad = sys.gradient

            def step(y):
                q0, p0 = y[:d], y[d:]
                return _block_kernel(grad, eb.b11 @ q0 + eb.b12 @ p0, eb.b21 @ q0 + eb.b22 @ p0,
                                     hp12, hp22, q0, rule, cfg)
            return step
        if kind == "mid_reduced":
            return lambda y: mid_reduced_step(sys, y[:d], y[d:], h, cfg)
        if kind == "avf_reduced":
            return lambda y: avf_reduced_step(sys, y[:d], y[d:], h, rule, cfg)
        sys = second_to_first_order(sys)
    if kind == "eavf":
        e, phq = _eavf_operators(sys, h, None)
        return lambda y: _eavf_kernel(sys.gradient, e, phq, y, rule, cfg)
    hq = h * sys.q_matrix
    if kind == "avf":
        return lambda y: _avf_kernel(sys.grad_tilde, hq, y, rule, cfg)
    if kind == "mid":
        return lambda y: _mid_kernel(sys.grad_tilde, hq, y, cfg)
    if kind == "crk":
        return lambda y: _crk_kernel(sys.grad_tilde, hq, y, rule, cfg)
    raise ValueError(f"method {kind!r} is not applicable to {type(sys).__name__}")


def step_count(h: float, t_end: float) -> int:
    if h <= 0:
        raise ValueError("h must be positive")
    n = round(t_end / h)
    if n < 0 or abs(n * h - t_end) > 1e-12 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end={t_end!r} is not an integer multiple of h={h!r}")
    return int(n)


def integrate(
    sys,
    method: MethodId | str,
    y0,
    h: float,
    t_end: float,
    cfg: IterationConfig = DEFAULT_CONFIG,
    t0: float = 0.0,
) -> Trajectory:
    """Step ``y0`` from ``t0`` to ``t0 + t_end`` with constant stepsize ``h``.

    ``sys`` may be a :class:`GradientSystem` or a :class:`SecondOrderSystem`.
    For the latter ``eavf``, ``mid`` and ``avf`` select the block and reduced
    forms, and ``crk`` runs on the equivalent first-order system.
    """
    if isinstance(method, str):
        method = MethodId.parse(method)
    method = _resolve(sys, method)
    n = step_count(h, t_end)
    y = np.asarray(y0, dtype=float).copy()
    d = 2 * sys.dim if isinstance(sys, SecondOrderSystem) else sys.dim
    if y.shape != (d,):
        raise DimensionError(f"initial state has shape {y.shape}, expected ({d},)")
    step = _stepper(sys, method, h, cfg)

    states = np.empty((n + 1, d))
    energies = np.empty(n + 1)
    states[0] = y
    energies[0] = sys.energy(y)
    iters = []
    total_fe = 0
    for k in range(1, n + 1):
        out = step(states[k - 1])
        total_fe += out.fe_count
        iters.append(out.iterations)
        if not out.converged:
            return Trajectory(t0 + h * np.arange(k), states[:k].copy(), energies[:k].copy(),
                              total_fe, iters, False, k, method.name)
        states[k] = out.y_new
        energies[k] = sys.energy(out.y_new)
    return Trajectory(t0 + h * np.arange(n + 1), states, energies, total_fe, iters, True, None, method.name)


# --------------------------------------------------------------------------- reference solutions


def _first_order(sys):
    return second_to_first_order(sys) if isinstance(sys, SecondOrderSystem) else sys


def _rk4(f, y0, times, fine_h):
    out = np.empty((len(times), y0.size))
    out[0] = y = y0.copy()
    evals = 0
    for i in range(1, len(times)):
        span = times[i] - times[i - 1]
        m = max(1, math.ceil(span / fine_h - 1e-9))
        dt = span / m
        for _ in range(m):
            k1 = f(y)
            k2 = f(y + 0.5 * dt * k1)
            k3 = f(y + 0.5 * dt * k2)
            k4 = f(y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        evals += 4 * m
        if not np.all(np.isfinite(y)):
            out[i:] = np.nan
            return out, evals, False
        out[i] = y
    return out, evals, True


def reference_solution(
    sys,
    y0,
    output_times,
    fine_h: float | None = None,
    method: str = "rk4",
    rtol: float = 1e-13,
    check: bool = True,
) -> Trajectory:
    """High-accuracy solution sampled at ``output_times``.

    ``method="rk4"``: classical fourth-order Runge-Kutta with substeps of at
    most ``fine_h`` inside every output interval. With ``check`` the run is
    repeated at ``fine_h / 2`` and the finer result is returned; the maximum
    discrepancy is stored in ``info["self_consistency"]``.

    ``method="dop853"``: adaptive eighth-order Dormand-Prince with dense
    output at tolerance ``rtol``; ``check`` compares with a run at
    ``100 * rtol``.

    A blow-up (non-finite values) gives ``converged=False``.
    """
    first = _first_order(sys)
    times = np.asarray(output_times, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    f = first.rhs
    info: dict = {"method": method}
    if method == "rk4":
        if fine_h is None or fine_h <= 0:
            raise ValueError("rk4 reference needs a positive fine_h")
        states, evals, ok = _rk4(f, y0, times, fine_h)
        if check and ok:
            finer, more, ok = _rk4(f, y0, times, fine_h / 2)
            evals += more
            info["self_consistency"] = float(np.max(np.abs(finer - states))) if ok else math.inf
            states = finer
            info["fine_h"] = fine_h / 2
        else:
            info["fine_h"] = fine_h
    elif method == "dop853":
        def run(tol):
            sol = scipy.integrate.solve_ivp(lambda t, y: f(y), (times[0], times[-1]), y0,
                                            method="DOP853", t_eval=times, rtol=tol, atol=tol)
            return sol.y.T, sol.nfev, sol.success and sol.y.shape[1] == len(times)

        states, evals, ok = run(rtol)
        if check and ok:
            rough, more, ok2 = run(100 * rtol)
            evals += more
            info["self_consistency"] = float(np.max(np.abs(rough - states))) if ok2 else math.inf
        info["rtol"] = rtol
    else:
        raise ValueError(f"unknown reference method {method!r}")
    ok = ok and bool(np.all(np.isfinite(states)))
    energies = np.array([sys.energy(y) if np.all(np.isfinite(y)) else np.nan for y in states])
    return Trajectory(times, states, energies, int(evals), [], ok, None, f"reference-{method}", info)


def contraction_estimate(sys: GradientSystem, h: float, lipschitz: float) -> float:
    """``h C L ||Q||_2 / 2`` with ``C = ||phi(hQM)||_2``; below 1 guarantees EAVF iteration convergence."""
    pair = exp_phi_pair(sys.qm, h)
    c = np.linalg.norm(pair.phi_v, 2)
    return 0.5 * abs(h) * c * lipschitz * np.linalg.norm(sys.q_matrix, 2)
