"""Problems of the form ``y' = Q (M y + grad U(y))`` and the benchmark library.

Builders return ``(system, y0)``. Second-order problems
``q'' - N q' + Omega q = -grad U1(q)`` are stored with state layout
``y = (q; p)``, ``p = q'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .matfun import DimensionError, as_matrix, is_skew, is_symmetric

__all__ = [
    "GradientSystem",
    "SecondOrderSystem",
    "classify",
    "energy",
    "second_to_first_order",
    "build_triatomic",
    "build_wind",
    "build_fpu",
    "build_nls",
    "build_allen_cahn",
    "nsp_phi_closed_form",
    "fd_gradient",
    "PROBLEMS",
    "build_problem",
]

CONSERVATIVE = "conservative"
DISSIPATIVE = "dissipative"
GENERAL = "general"

_EIG_TOL = 1e-10


def _sym_part_max_eig(q: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvalsh(0.5 * (q + q.T))))


def classify(q) -> str:
    """``"conservative"`` for skew ``q``, ``"dissipative"`` for ``q <= 0``, else ``"general"``."""
    q = as_matrix(q)
    if not np.any(q) or is_skew(q):
        return CONSERVATIVE
    scale = max(1.0, float(np.max(np.abs(q))))
    if _sym_part_max_eig(q) <= _EIG_TOL * scale:
        return DISSIPATIVE
    return GENERAL


@dataclass(frozen=True, eq=False)
class GradientSystem:
    """``y' = Q (M y + grad U(y))`` with energy ``H(y) = y^T M y / 2 + U(y)``."""

    q_matrix: np.ndarray
    m_matrix: np.ndarray
    potential: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    classification: str = ""
    label: str = ""
    qm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = as_matrix(self.q_matrix)
        m = as_matrix(self.m_matrix)
        if q.shape != m.shape:
            raise DimensionError(f"Q is {q.shape} but M is {m.shape}")
        if np.any(m) and not is_symmetric(m):
            raise ValueError("M must be symmetric")
        found = classify(q)
        if not self.classification:
            object.__setattr__(self, "classification", found)
        elif self.classification == CONSERVATIVE and found != CONSERVATIVE:
            raise ValueError("classification 'conservative' needs a skew-symmetric Q")
        elif self.classification == DISSIPATIVE and found not in (DISSIPATIVE, CONSERVATIVE):
            raise ValueError("classification 'dissipative' needs a negative semi-definite Q")
        elif self.classification not in (CONSERVATIVE, DISSIPATIVE, GENERAL):
            raise ValueError(f"unknown classification {self.classification!r}")
        q.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "q_matrix", q)
        object.__setattr__(self, "m_matrix", m)
        qm = q @ m
        qm.setflags(write=False)
        object.__setattr__(self, "qm", qm)

    @property
    def dim(self) -> int:
        return self.q_matrix.shape[0]

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise DimensionError(f"state has shape {y.shape}, expected ({self.dim},)")
        return y

    def energy(self, y) -> float:
        y = self._check(y)
        return 0.5 * float(y @ self.m_matrix @ y) + float(self.potential(y))

    def grad_tilde(self, y) -> np.ndarray:
        """Gradient of ``U(y) + y^T M y / 2``."""
        return self.m_matrix @ y + self.gradient(y)

    def rhs(self, y) -> np.ndarray:
        y = self._check(y)
        return self.q_matrix @ self.grad_tilde(y)


def energy(sys: GradientSystem, y) -> float:
    return sys.energy(y)


@dataclass(frozen=True, eq=False)
class SecondOrderSystem:
    """``q'' - N q' + Omega q = -grad U1(q)``; Omega PSD, N NSD, both symmetric."""

    omega: np.ndarray
    damping: np.ndarray
    potential: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __post_init__(self):
        om = as_matrix(self.omega)
        nd = as_matrix(self.damping)
        if om.shape != nd.shape:
            raise DimensionError(f"Omega is {om.shape} but N is {nd.shape}")
        for name, mat, sign in (("Omega", om, 1.0), ("N", nd, -1.0)):
            if np.any(mat) and not is_symmetric(mat):
                raise ValueError(f"{name} must be symmetric")
            if np.any(mat):
                eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
                scale = max(1.0, float(np.max(np.abs(mat))))
                if np.min(sign * eig) < -_EIG_TOL * scale:
                    kind = "positive" if sign > 0 else "negative"
                    raise ValueError(f"{name} must be {kind} semi-definite")
        om.setflags(write=False)
        nd.setflags(write=False)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "damping", nd)

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    def block_matrix(self) -> np.ndarray:
        """``A = [[O, I], [-Omega, N]]``."""
        d = self.dim
        return np.block([[np.zeros((d, d)), np.eye(d)], [-self.omega, self.damping]])

    def energy(self, y) -> float:
        y = np.asarray(y, dtype=float)
        d = self.dim
        q, p = y[:d], y[d:]
        return 0.5 * float(p @ p) + 0.5 * float(q @ self.omega @ q) + float(self.potential(q))


def second_to_first_order(sys: SecondOrderSystem) -> GradientSystem:
    """Rewrite with ``Q = [[O, I], [-I, N]]``, ``M = diag(Omega, I)``, state ``(q; p)``."""
    d = sys.dim
    z = np.zeros((d, d))
    ident = np.eye(d)
    q = np.block([[z, ident], [-ident, sys.damping]])
    m = np.block([[sys.omega, z], [z, ident]])
    grad1, pot1 = sys.gradient, sys.potential

    def potential(y):
        return pot1(y[:d])

    def gradient(y):
        g = np.zeros(2 * d)
        g[:d] = grad1(y[:d])
        return g

    cls = CONSERVATIVE if not np.any(sys.damping) else DISSIPATIVE
    return GradientSystem(q, m, potential, gradient, cls, sys.label)


def fd_gradient(potential, y, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient with per-component relative steps."""
    y = np.asarray(y, dtype=float)
    g = np.empty_like(y)
    for i in range(y.size):
        hi = step * max(1.0, abs(y[i]))
        yp = y.copy()
        ym = y.copy()
        yp[i] += hi
        ym[i] -= hi
        g[i] = (potential(yp) - potential(ym)) / (2 * hi)
    return g


# --------------------------------------------------------------------------- triatomic


def _triatomic_s(y):
    p0, _, _, p13, q0, q11, q12, q13 = y
    f11 = (2 * q11 + q11**2) / (1 + q11) ** 2
    f12 = (2 * q12 + q12**2) / (1 + q12) ** 2
    return (0.5 * p0**2 + 0.25 * (q0 - q13) ** 2
            - 0.25 * f12 * (p0 - p13) ** 2 - 0.25 * f11 * (p0 + p13) ** 2)


def _triatomic_grad_s(y):
    p0, _, _, p13, q0, q11, q12, q13 = y
    # d/dx (2x + x^2)/(1 + x)^2 = 2/(1 + x)^3
    a11 = 1.0 + q11
    a12 = 1.0 + q12
    f11 = q11 * (2.0 + q11) / a11**2
    f12 = q12 * (2.0 + q12) / a12**2
    plus = p0 + p13
    minus = p0 - p13
    return np.array([
        p0 - 0.5 * f12 * minus - 0.5 * f11 * plus,
        0.0,
        0.0,
        0.5 * f12 * minus - 0.5 * f11 * plus,
        0.5 * (q0 - q13),
        -0.5 * plus**2 / a11**3,
        -0.5 * minus**2 / a12**3,
        -0.5 * (q0 - q13),
    ])


def build_triatomic(omega: float = 50.0):
    """Triatomic molecule, ``y = (p0, p11, p12, p13, q0, q11, q12, q13)``.

    ``Q = [[O, -I], [I, O]]``, ``M = diag(I, Omega)`` with
    ``Omega = diag(0, w^2, w^2, w^2)`` and ``U = S - p0^2 / 2``.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    d = 4
    z = np.zeros((d, d))
    ident = np.eye(d)
    q = np.block([[z, -ident], [ident, z]])
    m = np.diag([1.0, 1.0, 1.0, 1.0, 0.0, omega**2, omega**2, omega**2])

    def potential(y):
        return _triatomic_s(y) - 0.5 * y[0] ** 2

    def gradient(y):
        g = _triatomic_grad_s(y)
        g[0] -= y[0]
        return g

    sys = GradientSystem(q, m, potential, gradient, CONSERVATIVE, f"triatomic(omega={omega:g})")
    y0 = np.array([1.0, 1.0, 1.0, 1.0, 0.4, 1 / omega, 1 / omega, 1 / (np.sqrt(2.0) * omega)])
    return sys, y0


def triatomic_omega_diag(omega: float) -> np.ndarray:
    return np.array([0.0, omega**2, omega**2, omega**2])


# --------------------------------------------------------------------------- wind


def build_wind(r: float = 20.0, theta: float = np.pi / 2):
    """Averaged wind-induced oscillation, ``x = (x1, x2)``, ``x(0) = (0, 1)``."""
    if r < 0:
        raise ValueError("r must be non-negative")
    if not 0.0 <= theta <= np.pi / 2 + 1e-15:
        raise ValueError("theta must lie in [0, pi/2]")
    c, s = np.cos(theta), np.sin(theta)
    q = np.array([[-c, -s], [s, -c]])
    m = r * np.eye(2)

    def potential(x):
        x1, x2 = x
        return -0.5 * s * (x1 * x2**2 - x1**3 / 3) + 0.5 * c * (x2**3 / 3 - x1**2 * x2)

    def gradient(x):
        x1, x2 = x
        return np.array([
            -0.5 * s * (x2**2 - x1**2) - c * x1 * x2,
            -s * x1 * x2 + 0.5 * c * (x2**2 - x1**2),
        ])

    cls = CONSERVATIVE if abs(c) <= 1e-12 else DISSIPATIVE
    sys = GradientSystem(q, m, potential, gradient, cls, f"wind(r={r:g}, theta={theta:.17g})")
    return sys, np.array([0.0, 1.0])


# --------------------------------------------------------------------------- FPU


def dirichlet_laplacian(n: int) -> np.ndarray:
    """Tridiagonal ``(1, -2, 1)`` matrix of size ``n``."""
    return (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1))


def fpu_initial(n_cells: int, big_b: float = 5.0, kappa: float = 0.1, t: float = 0.0):
    """Two-kink initial displacement and velocity at sites ``j = 1..N-1``."""
    j = np.arange(1, n_cells, dtype=float)
    sk = np.sinh(kappa)

    def arg(center):
        return 2.0 * (kappa * (j - center) + t * sk)

    def log1pexp(x):
        return np.logaddexp(0.0, x)

    def logistic(x):
        return 0.5 * (1.0 + np.tanh(0.5 * x))

    u = big_b * (log1pexp(arg(97)) - log1pexp(arg(96)) + log1pexp(arg(32)) - log1pexp(arg(33)))
    v = big_b * 2.0 * sk * (logistic(arg(97)) - logistic(arg(96))
                            + logistic(arg(32)) - logistic(arg(33)))
    return u, v


def build_fpu(
    n_cells: int = 128,
    beta: float = 0.0,
    gamma: float = 0.005,
    epsilon: float = 0.75,
    p_exp: int = 1,
    m: float = 0.0,
    c: float = 1.0,
):
    """Damped continuous FPU lattice with Dirichlet ends, ``d = N - 1`` sites.

    ``N = beta' D - gamma I``, ``Omega = -c^2 D + m^2 I`` and
    ``U1 = eps' sum_j V(u_{j+1} - u_j)`` with ``V(u) = u^(p+2) / ((p+2)(p+1))``,
    ``beta' = c^2 beta``, ``eps' = c^(p+2) eps``. Returns ``(system, (q0; p0))``.
    """
    if n_cells < 4:
        raise ValueError("n_cells must be at least 4")
    if beta < 0 or gamma < 0 or epsilon <= 0 or p_exp < 1 or m < 0:
        raise ValueError("invalid FPU parameters")
    d = n_cells - 1
    lap = dirichlet_laplacian(d)
    damping = c**2 * beta * lap - gamma * np.eye(d)
    omega = -(c**2) * lap + m**2 * np.eye(d)
    eps_p = c ** (p_exp + 2) * epsilon
    pp = p_exp

    def diffs(u):
        return np.diff(np.concatenate(([0.0], u, [0.0])))

    def potential(u):
        w = diffs(u)
        return eps_p * float(np.sum(w ** (pp + 2))) / ((pp + 2) * (pp + 1))

    def gradient(u):
        vp = diffs(u) ** (pp + 1) / (pp + 1)
        return eps_p * (vp[:-1] - vp[1:])

    label = f"fpu(N={n_cells}, beta={beta:g}, gamma={gamma:g})"
    sys = SecondOrderSystem(omega, damping, potential, gradient, label)
    u0, v0 = fpu_initial(n_cells)
    return sys, np.concatenate((u0, v0))


# --------------------------------------------------------------------------- NLS / Allen-Cahn


def _scaled_laplacian(n: int, length: float, scaling: str, kind: str) -> np.ndarray:
    if scaling not in ("paper_literal", "consistent"):
        raise ValueError(f"scaling must be 'paper_literal' or 'consistent', got {scaling!r}")
    lap = dirichlet_laplacian(n)
    if kind == "neumann":
        lap[0, 0] = lap[-1, -1] = -1.0
    if scaling == "consistent":
        if kind == "periodic":
            lap[0, -1] = lap[-1, 0] = 1.0
        cells = n if kind == "periodic" else n + 1
        lap /= (length / cells) ** 2
    return lap


def build_nls(
    n_grid: int = 32,
    length: float = 2 * np.pi,
    v_prime: Callable = None,
    potential_v: Callable = None,
    scaling: str = "paper_literal",
    amplitude: float = 1.0,
    wavenumber: int = 1,
):
    """Central-difference nonlinear Schrodinger equation, ``y = (p; q)``, ``d = 2N``.

    ``v_prime`` and ``potential_v`` are ``V'`` and ``V``; the default is the
    cubic case ``V(s) = s^2 / 2``. The initial state is the plane wave
    ``amplitude * exp(i k x_j)``.
    """
    if n_grid < 4:
        raise ValueError("n_grid must be at least 4")
    if v_prime is None:
        v_prime, potential_v = (lambda s: s), (lambda s: 0.5 * s**2)
    elif potential_v is None:
        raise ValueError("potential_v (V) is required together with v_prime")
    n = n_grid
    lap = _scaled_laplacian(n, length, scaling, "periodic")
    z = np.zeros((n, n))
    ident = np.eye(n)
    q = np.block([[z, -ident], [ident, z]])
    m = np.block([[lap, z], [z, lap]])

    def potential(y):
        return 0.5 * float(np.sum(potential_v(y[:n] ** 2 + y[n:] ** 2)))

    def gradient(y):
        a = np.asarray(v_prime(y[:n] ** 2 + y[n:] ** 2), dtype=float) * np.ones(n)
        return np.concatenate((a * y[:n], a * y[n:]))

    sys = GradientSystem(q, m, potential, gradient, CONSERVATIVE, f"nls(N={n}, {scaling})")
    x = length * np.arange(n) / n
    kx = 2 * np.pi * wavenumber * x / length
    y0 = np.concatenate((amplitude * np.cos(kx), amplitude * np.sin(kx)))
    return sys, y0


def build_allen_cahn(
    n_grid: int = 32,
    d_coef: float = 0.01,
    length: float = 1.0,
    scaling: str = "paper_literal",
):
    """Allen-Cahn with Neumann ends: ``Q = -I``, ``M = -d Dhat``, ``d = N - 1``.

    ``U = sum(-y^2 / 2 + y^4 / 4)``. The initial state is
    ``0.5 cos(pi x_i / L)`` at interior nodes ``x_i = i L / N``.
    """
    if n_grid < 3:
        raise ValueError("n_grid must be at least 3")
    if d_coef < 0:
        raise ValueError("d_coef must be non-negative")
    n = n_grid - 1
    lap = _scaled_laplacian(n, length, scaling, "neumann")
    q = -np.eye(n)
    m = -d_coef * lap

    def potential(y):
        return float(np.sum(-0.5 * y**2 + 0.25 * y**4))

    def gradient(y):
        return -y + y**3

    sys = GradientSystem(q, m, potential, gradient, DISSIPATIVE,
                         f"allen-cahn(N={n_grid}, d={d_coef:g}, {scaling})")
    x = length * np.arange(1, n_grid) / n_grid
    return sys, 0.5 * np.cos(np.pi * x / length)


# --------------------------------------------------------------------------- closed-form phi


def nsp_phi_closed_form(omega_diag, h: float) -> np.ndarray:
    """phi(hQM) for ``Q = [[O, -I], [I, O]]``, ``M = diag(I, Omega)``, Omega diagonal.

    Blocks: ``[[sinc(z), h^-1 g2(z)], [h g1(z), sinc(z)]]`` with
    ``z = h Omega^(1/2)``, ``g1(z) = (1 - cos z) / z^2``, ``g2(z) = cos z - 1``.
    """
    w2 = np.asarray(omega_diag, dtype=float)
    if np.any(w2 < 0):
        raise ValueError("omega_diag entries must be non-negative")
    d = w2.size
    if h == 0.0:
        return np.eye(2 * d)
    z = abs(h) * np.sqrt(w2)
    sinc = np.sinc(z / np.pi)
    g1 = 0.5 * np.sinc(z / (2 * np.pi)) ** 2
    # h^-1 g2(z) = -h w^2 g1(z), finite at w = 0
    return np.block([[np.diag(sinc), np.diag(-h * w2 * g1)],
                     [np.diag(h * g1), np.diag(sinc)]])


# --------------------------------------------------------------------------- registry


@dataclass(frozen=True)
class ProblemEntry:
    builder: Callable
    params: dict  # name -> (type, default, help)
    description: str


PROBLEMS: dict[str, ProblemEntry] = {
    "allen-cahn": ProblemEntry(
        build_allen_cahn,
        {
            "n_grid": (int, 32, "grid intervals N (state size N-1)"),
            "d_coef": (float, 0.01, "diffusion coefficient d"),
            "length": (float, 1.0, "domain length L"),
            "scaling": (str, "paper_literal", "paper_literal | consistent"),
        },
        "semi-discrete Allen-Cahn equation, Neumann ends (dissipative)",
    ),
    "fpu": ProblemEntry(
        build_fpu,
        {
            "n_cells": (int, 128, "lattice cells N (state size 2(N-1))"),
            "beta": (float, 0.0, "viscous damping beta"),
            "gamma": (float, 0.005, "linear damping gamma"),
            "epsilon": (float, 0.75, "nonlinearity epsilon"),
            "p_exp": (int, 1, "nonlinearity exponent p"),
            "m": (float, 0.0, "mass term m"),
            "c": (float, 1.0, "c = 1/dx"),
        },
        "damped continuous FPU lattice (second order, dissipative)",
    ),
    "nls": ProblemEntry(
        build_nls,
        {
            "n_grid": (int, 32, "grid points N (state size 2N)"),
            "length": (float, 2 * np.pi, "domain length L"),
            "scaling": (str, "paper_literal", "paper_literal | consistent"),
            "amplitude": (float, 1.0, "plane-wave amplitude"),
            "wavenumber": (int, 1, "plane-wave wavenumber"),
        },
        "semi-discrete cubic nonlinear Schrodinger equation (conservative)",
    ),
    "triatomic": ProblemEntry(
        build_triatomic,
        {"omega": (float, 50.0, "fast frequency omega")},
        "highly oscillatory triatomic molecule (conservative)",
    ),
    "wind": ProblemEntry(
        build_wind,
        {
            "r": (float, 20.0, "radius r (M = r I)"),
            "theta": (float, np.pi / 2, "angle theta in [0, pi/2]; pi/2 is conservative"),
        },
        "averaged wind-induced oscillation",
    ),
}


def build_problem(name: str, **params):
    """Build a registered problem by name; unknown keys raise ``KeyError``."""
    try:
        entry = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(sorted(PROBLEMS))}") from None
    unknown = set(params) - set(entry.params)
    if unknown:
        raise KeyError(f"unknown parameters for {name!r}: {', '.join(sorted(unknown))}")
    kwargs = {k: entry.params[k][0](v) for k, v in params.items()}
    return entry.builder(**kwargs)
