"""Quick invariant checks surfaced by ``eavf verify``.

Each check returns ``(passed, detail)``. The ``phi`` keyword lets tests
substitute a deliberately broken phi-function.
"""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .integrators import IterationConfig, eavf_step, integrate, reference_solution
from .matfun import ExpPhiPair, _inf_norm, lemma_b_matrix, mat_exp, mat_phi
from .quadrature import gauss_legendre
from .systems import (
    build_allen_cahn,
    build_fpu,
    build_nls,
    build_triatomic,
    build_wind,
    fd_gradient,
    nsp_phi_closed_form,
    second_to_first_order,
    triatomic_omega_diag,
)

GROUPS = ("matfun", "quadrature", "systems", "integrators")


def _rng(seed=0):
    return np.random.default_rng(seed)


def check_phi_identity(phi=mat_phi, n=50):
    rng = _rng(1)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 17))
        v = rng.standard_normal((d, d))
        v *= rng.uniform(0.1, 50.0) / _inf_norm(v)
        e = mat_exp(v)
        err = _inf_norm(phi(v) @ v - e + np.eye(d)) / (1 + _inf_norm(e))
        worst = max(worst, err)
    return worst <= 1e-10, f"max scaled residual {worst:.2e}"


def check_reflection_identity(phi=mat_phi, n=30):
    rng = _rng(2)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 9))
        v = rng.standard_normal((d, d))
        v *= rng.uniform(0.1, 5.0) / _inf_norm(v)
        worst = max(worst, _inf_norm(mat_exp(v) @ phi(-v) - phi(v)))
    return worst <= 1e-10, f"max ||exp(V)phi(-V) - phi(V)|| {worst:.2e}"


def check_b_matrix(n=30):
    rng = _rng(3)
    worst_skew = worst_diss = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 9))
        a = rng.standard_normal((d, d))
        r = rng.standard_normal((d, d))
        m = r @ r.T / d
        h = rng.uniform(0, 10)
        b = lemma_b_matrix(a - a.T, m, h / _inf_norm(a - a.T) / _inf_norm(m))
        worst_skew = max(worst_skew, _inf_norm(b) / _inf_norm(m))
        p = rng.standard_normal((d, d))
        q = (a - a.T) - p @ p.T
        q /= _inf_norm(q)
        b = lemma_b_matrix(q, m / _inf_norm(m), h)
        worst_diss = max(worst_diss, float(np.max(np.linalg.eigvalsh(0.5 * (b + b.T)))))
    ok = worst_skew <= 1e-11 and worst_diss <= 1e-10
    return ok, f"skew ||B|| {worst_skew:.2e}, dissipative max eig {worst_diss:.2e}"


def check_gl_rules():
    worst = 0.0
    for s in range(1, 11):
        rule = gauss_legendre(s)
        for k in range(2 * s):
            worst = max(worst, abs(float(rule.weights @ rule.nodes**k) - 1.0 / (k + 1)))
    return worst <= 1e-14, f"max moment error {worst:.2e}"


def check_gradients():
    rng = _rng(4)
    worst = 0.0
    built = [build_triatomic(50.0), build_wind(20.0, np.pi / 2), build_wind(20.0, 1.0),
             build_nls(8), build_allen_cahn(8, 0.1)]
    fpu, fy0 = build_fpu(16, beta=2.0)
    first = second_to_first_order(fpu)
    built.append((first, fy0))
    for sys, y0 in built:
        for _ in range(3):
            y = y0 + 0.05 * rng.standard_normal(y0.size)
            g = sys.gradient(y)
            fd = fd_gradient(sys.potential, y)
            worst = max(worst, float(np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g)))))
    return worst <= 1e-6, f"max relative gradient mismatch {worst:.2e}"


def check_nsp_closed_form(phi=mat_phi):
    sys, _ = build_triatomic(50.0)
    h = 1 / 64
    err = _inf_norm(nsp_phi_closed_form(triatomic_omega_diag(50.0), h) - phi(h * sys.qm))
    return err <= 1e-10, f"closed form vs dense phi {err:.2e}"


def _pair(sys, h, phi):
    v = h * sys.qm
    return ExpPhiPair(mat_exp(v), phi(v), "", h)


def check_symmetry(phi=mat_phi, n=10):
    rng = _rng(5)
    cfg = IterationConfig()
    worst = 0.0
    for sys, y0 in (build_wind(20.0, np.pi / 2), build_wind(20.0, np.pi / 2 - 1e-4), build_triatomic(50.0)):
        rule = gauss_legendre(3)
        for h in (1e-2, 1e-1):
            fwd, bwd = _pair(sys, h, phi), _pair(sys, -h, phi)
            for _ in range(n):
                y = y0 + 0.1 * rng.standard_normal(y0.size) * np.maximum(np.abs(y0), 0.1)
                a = eavf_step(sys, y, h, rule, cfg, fwd)
                b = eavf_step(sys, a.y_new, -h, rule, cfg, bwd)
                worst = max(worst, float(np.max(np.abs(b.y_new - y))))
    return worst <= 1e-10, f"max round-trip error {worst:.2e}"


def check_conservation():
    sys, y0 = build_wind(20.0, np.pi / 2)
    tr = integrate(sys, "eavf:2", y0, 0.1, 50.0)
    drift = float(np.max(np.abs(tr.energies - tr.energies[0])))
    return tr.converged and drift <= 1e-10, f"energy drift {drift:.2e}"


def check_decay():
    sys, y0 = build_wind(20.0, np.pi / 2 - 1e-4)
    tr = integrate(sys, "eavf:2", y0, 0.1, 50.0)
    rise = float(np.max(np.diff(tr.energies)))
    fpu, fy0 = build_fpu(128, beta=2.0)
    tf = integrate(fpu, "eavf:2", fy0, 0.5, 20.0)
    rise = max(rise, float(np.max(np.diff(tf.energies))))
    return tr.converged and tf.converged and rise <= 1e-12, f"largest energy increase {rise:.2e}"


def check_linear_exactness():
    sys, y0 = build_nls(8, potential_v=lambda s: 0 * s, v_prime=lambda s: 0 * s)
    h, n = 0.05, 200
    tr = integrate(sys, "eavf:1", y0, h, n * h)
    err = float(np.max(np.abs(tr.states[-1] - mat_exp(n * h * sys.qm) @ y0)))
    return err <= 1e-9, f"deviation from exp(t QM) y0 {err:.2e}"


def check_orders():
    sys, y0 = build_wind(20.0, np.pi / 2)
    hs = (1 / 40, 1 / 80, 1 / 160)
    times = np.arange(161) / 160
    ref = reference_solution(sys, y0, times, fine_h=1 / 8000, check=False)
    slopes = {}
    for m, lo, hi in (("eavf:2", 1.8, 2.2), ("avf:2", 1.8, 2.2), ("mid", 1.8, 2.2), ("crk:3", 3.6, 4.4)):
        ges = []
        for h in hs:
            tr = integrate(sys, m, y0, h, 1.0)
            ges.append(float(np.max(np.abs(tr.states - ref.states[:: round(h * 160)]))))
        slopes[m] = (np.log2(ges[0] / ges[1]), np.log2(ges[1] / ges[2]), lo, hi)
    ok = all(lo <= s1 <= hi and lo <= s2 <= hi for s1, s2, lo, hi in slopes.values())
    return ok, ", ".join(f"{m} {s1:.2f}/{s2:.2f}" for m, (s1, s2, _, _) in slopes.items())


CHECKS: list[tuple[str, str, Callable]] = [
    ("matfun", "phi-identity", check_phi_identity),
    ("matfun", "reflection-identity", check_reflection_identity),
    ("matfun", "b-matrix", check_b_matrix),
    ("quadrature", "gl-exactness", check_gl_rules),
    ("systems", "gradient-consistency", check_gradients),
    ("systems", "nsp-closed-form", check_nsp_closed_form),
    ("integrators", "symmetry", check_symmetry),
    ("integrators", "energy-conservation", check_conservation),
    ("integrators", "energy-decay", check_decay),
    ("integrators", "linear-exactness", check_linear_exactness),
    ("integrators", "convergence-orders", check_orders),
]


def run_checks(only=None, overrides=None):
    """Yield ``(group, name, passed, detail, seconds)`` for the selected groups.

    ``overrides`` maps keyword names (e.g. ``"phi"``) to replacements passed
    to every check that accepts them.
    """
    import inspect

    overrides = overrides or {}
    for group, name, fn in CHECKS:
        if only and group not in only:
            continue
        params = inspect.signature(fn).parameters
        kw = {k: v for k, v in overrides.items() if k in params}
        t = time.perf_counter()
        try:
            ok, detail = fn(**kw)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield group, name, bool(ok), detail, time.perf_counter() - t
