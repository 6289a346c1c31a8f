"""Discrete-time plant abstraction in Lur'e form.

A plant couples a nominal map ``fbar(t, x, u)`` (the physics under any
previously designed inner-loop controller) with a sector-bounded
nonlinearity ``phi(t, q)`` routed through constant 0/1 selector matrices
E, C, D, G.  State and input constraints are per-step half-space
polytopes.  All operations here are pure functions; a PlantModel is
immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import ContractError, DomainError, NumericalError

Array = np.ndarray

# phi == 0 still needs a positive Lipschitz constant: the synthesis
# inequality divides by gamma1^2, so a zero would make it singular.
GAMMA1_FLOOR = 1e-9
LIPSCHITZ_SAFETY = 1.2
LIPSCHITZ_PAIRS = 4096


@dataclass(frozen=True)
class Polytope:
    """Intersection of half-spaces {x : A x <= b}."""

    A: Array
    b: Array

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        b = np.atleast_1d(np.asarray(self.b, float))
        if A.shape[0] != b.shape[0]:
            raise ContractError("polytope: row count of A must match length of b")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def num_halfspaces(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains(self, x: Array, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ x <= self.b + tol))

    def margins(self, x: Array) -> Array:
        """Slack b - A x per half-space (positive inside)."""
        return self.b - self.A @ x

    def check_nonempty_bounded(self) -> None:
        """Small LP feasibility/boundedness check (desk scale)."""
        from scipy.optimize import linprog

        n = self.dim
        res = linprog(np.zeros(n), A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * n,
                      method="highs")
        if not res.success:
            raise ContractError("polytope is empty")
        for i in range(n):
            for sign in (1.0, -1.0):
                c = np.zeros(n)
                c[i] = -sign
                res = linprog(c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * n,
                              method="highs")
                if res.status == 3:  # unbounded
                    raise ContractError("polytope is unbounded")

    @staticmethod
    def box(lo: Array, hi: Array) -> "Polytope":
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        n = lo.size
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([hi, -lo])
        return Polytope(A, b)


def zero_phi(t: int, q: Array) -> Array:
    """Trivial nonlinearity for LTI benchmarks (n_p = n_q = 1, zero selectors)."""
    return np.zeros(1)


@dataclass(frozen=True)
class PlantModel:
    n: int
    m: int
    n_q: int
    n_p: int
    dynamics: Callable[[int, Array, Array], Array]
    phi: Callable[[int, Array], Array]
    E: Array
    C: Array
    D: Array
    G: Array
    state_polytopes: Sequence[Polytope]  # length horizon + 1
    input_polytopes: Sequence[Polytope]  # length horizon
    horizon: int
    jacobians: Optional[Callable[[int, Array, Array], tuple[Array, Array]]] = None
    linear: Optional[tuple[Array, Array]] = None  # (A0, B0) when fbar is LTI

    def __post_init__(self):
        for name, M, shape in [("E", self.E, (self.n, self.n_p)),
                               ("C", self.C, (self.n_q, self.n)),
                               ("D", self.D, (self.n_q, self.m)),
                               ("G", self.G, (self.n_q, self.n))]:
            M = np.asarray(M, float)
            if M.shape != shape:
                raise ContractError(f"selector {name} must have shape {shape}, got {M.shape}")
            object.__setattr__(self, name, M)
        if len(self.state_polytopes) != self.horizon + 1:
            raise ContractError("need horizon+1 state polytopes")
        if len(self.input_polytopes) != self.horizon:
            raise ContractError("need horizon input polytopes")

    @property
    def sector_vacuous(self) -> bool:
        """True when the nonlinearity channel is disconnected (all selectors zero)."""
        return not (np.any(self.E) or np.any(self.C) or np.any(self.D) or np.any(self.G))

    def validate_polytopes(self) -> None:
        for poly in {id(p): p for p in [*self.state_polytopes, *self.input_polytopes]}.values():
            poly.check_nonempty_bounded()


def linearize(model: PlantModel, t: int, x_bar: Array, u_bar: Array) -> tuple[Array, Array]:
    """Jacobians of fbar at (x_bar, u_bar): analytic when supplied, else central differences."""
    x_bar = np.asarray(x_bar, float)
    u_bar = np.asarray(u_bar, float)
    if not model.state_polytopes[t].contains(x_bar):
        raise DomainError(f"linearization state outside polytope at t={t}")
    if not model.input_polytopes[min(t, model.horizon - 1)].contains(u_bar):
        raise DomainError(f"linearization input outside polytope at t={t}")
    if model.jacobians is not None:
        A, B = model.jacobians(t, x_bar, u_bar)
        A = np.asarray(A, float)
        B = np.asarray(B, float)
    else:
        A = _central_jacobian(lambda x: model.dynamics(t, x, u_bar), x_bar, model.n)
        B = _central_jacobian(lambda u: model.dynamics(t, x_bar, u), u_bar, model.n)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NumericalError(f"non-finite Jacobian at t={t}")
    return A, B


def _central_jacobian(f: Callable[[Array], Array], v: Array, n_out: int) -> Array:
    J = np.empty((n_out, v.size))
    for j in range(v.size):
        h = max(1e-6, 1e-6 * abs(v[j]))
        vp = v.copy()
        vm = v.copy()
        vp[j] += h
        vm[j] -= h
        J[:, j] = (np.asarray(f(vp), float) - np.asarray(f(vm), float)) / (2.0 * h)
    return J


def estimate_lipschitz(model: PlantModel, t: int, q_lo: Array, q_hi: Array,
                       num_pairs: int = LIPSCHITZ_PAIRS,
                       safety: float = LIPSCHITZ_SAFETY) -> float:
    """Per-step sector bound gamma1 with |phi(q) - phi(qbar)| <= gamma1 |q - qbar| on the box.

    Deterministic low-discrepancy sampling of difference quotients (Sobol
    pairs), inflated by a safety factor.  Never returns below GAMMA1_FLOOR.
    """
    q_lo = np.atleast_1d(np.asarray(q_lo, float))
    q_hi = np.atleast_1d(np.asarray(q_hi, float))
    if q_lo.size != model.n_q or np.any(q_hi < q_lo):
        raise DomainError("empty or mis-sized q box")
    d = model.n_q
    sampler = qmc.Sobol(2 * d, scramble=False)
    u = sampler.random(num_pairs)
    span = q_hi - q_lo
    qa = q_lo + u[:, :d] * span
    qb = q_lo + u[:, d:] * span
    best = 0.0
    for a, b in zip(qa, qb):
        dq = float(np.linalg.norm(a - b))
        if dq < 1e-12:
            continue
        dp = float(np.linalg.norm(np.asarray(model.phi(t, a), float)
                                  - np.asarray(model.phi(t, b), float)))
        best = max(best, dp / dq)
    return max(safety * best, GAMMA1_FLOOR)


def virtual_step(model: PlantModel, t: int, x_hat: Array, u_hat: Array, delta_hat: Array,
                 A: Array | None = None, B: Array | None = None) -> Array:
    """One step of the Lur'e dynamics driven by the learned disturbance.

    A, B are the linearization at the step-t nominal waypoint; for LTI
    plants they default to the constant system matrices.
    """
    if A is None or B is None:
        if model.linear is None:
            raise ContractError("virtual_step needs (A, B) for a nonlinear plant")
        A, B = model.linear
    x_hat = np.asarray(x_hat, float)
    u_hat = np.asarray(u_hat, float)
    delta_hat = np.asarray(delta_hat, float)
    if not (np.all(np.isfinite(x_hat)) and np.all(np.isfinite(u_hat))
            and np.all(np.isfinite(delta_hat))):
        raise NumericalError("non-finite virtual_step input")
    q = model.C @ x_hat + model.D @ u_hat + model.G @ delta_hat
    x_next = A @ x_hat + B @ u_hat + model.E @ np.asarray(model.phi(t, q), float) + delta_hat
    if not np.all(np.isfinite(x_next)):
        raise NumericalError(f"non-finite virtual state at t={t}")
    return x_next


def actual_step(model: PlantModel, t: int, x: Array, u: Array, delta: Array) -> Array:
    """x(t+1) = fbar(t, x, u) + delta."""
    x_next = np.asarray(model.dynamics(t, np.asarray(x, float), np.asarray(u, float)),
                        float) + np.asarray(delta, float)
    if not np.all(np.isfinite(x_next)):
        raise NumericalError(f"non-finite actual state at t={t}")
    return x_next


@dataclass
class NominalTrajectory:
    """Waypoints with per-step linearizations and sector constants."""

    states: Array       # (N+1, n)
    inputs: Array       # (N, m)
    p_bar: Array        # (N, n_p)
    q_bar: Array        # (N, n_q)
    gamma1: Array       # (N,)
    A: Array            # (N, n, n)
    B: Array            # (N, n, m)

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    def validate(self, model: PlantModel, tol: float = 1e-8) -> None:
        N = self.horizon
        if self.states.shape[0] != N + 1:
            raise ContractError("states must have one more row than inputs")
        if np.any(self.gamma1 <= 0):
            raise ContractError("gamma1 must be positive at every step")
        for t in range(N):
            q = model.C @ self.states[t] + model.D @ self.inputs[t]
            if not np.allclose(q, self.q_bar[t], rtol=0, atol=1e-12):
                raise ContractError(f"q_bar inconsistent at t={t}")
            pred = self.A[t] @ self.states[t] + self.B[t] @ self.inputs[t] \
                + model.E @ self.p_bar[t]
            if np.max(np.abs(pred - self.states[t + 1])) > tol:
                raise ContractError(f"nominal recursion violated at t={t}")

    def check_polytope_membership(self, model: PlantModel) -> None:
        for t in range(self.horizon + 1):
            if not model.state_polytopes[t].contains(self.states[t]):
                raise DomainError(f"nominal state outside polytope at t={t}")
        for t in range(self.horizon):
            if not model.input_polytopes[t].contains(self.inputs[t]):
                raise DomainError(f"nominal input outside polytope at t={t}")


def rollout_nominal(model: PlantModel, x0: Array, inputs: Array,
                    gamma1: Array | None = None) -> NominalTrajectory:
    """Build a consistent NominalTrajectory by rolling the Lur'e recursion.

    Linearizations are taken at the generated waypoints; the recursion is
    then exact by construction (disturbance-free virtual dynamics).
    """
    inputs = np.atleast_2d(np.asarray(inputs, float))
    N = inputs.shape[0]
    states = np.zeros((N + 1, model.n))
    p_bar = np.zeros((N, model.n_p))
    q_bar = np.zeros((N, model.n_q))
    As = np.zeros((N, model.n, model.n))
    Bs = np.zeros((N, model.n, model.m))
    states[0] = np.asarray(x0, float)
    zero = np.zeros(model.n)
    for t in range(N):
        As[t], Bs[t] = linearize(model, t, states[t], inputs[t])
        q_bar[t] = model.C @ states[t] + model.D @ inputs[t]
        p_bar[t] = np.asarray(model.phi(t, q_bar[t]), float)
        states[t + 1] = virtual_step(model, t, states[t], inputs[t], zero, As[t], Bs[t])
    if gamma1 is None:
        gamma1 = np.full(N, GAMMA1_FLOOR)
    traj = NominalTrajectory(states, inputs, p_bar, q_bar, np.asarray(gamma1, float), As, Bs)
    traj.validate(model)
    return traj


@dataclass(frozen=True)
class ErrorState:
    """Tracking-error tuple at one step; q_tilde derived from the selectors."""

    eta: Array
    xi: Array
    p_tilde: Array
    q_tilde: Array
    delta_hat: Array

    @staticmethod
    def from_components(model: PlantModel, eta: Array, xi: Array, p_tilde: Array,
                        delta_hat: Array) -> "ErrorState":
        eta = np.asarray(eta, float)
        xi = np.asarray(xi, float)
        delta_hat = np.asarray(delta_hat, float)
        q_tilde = model.C @ eta + model.D @ xi + model.G @ delta_hat
        return ErrorState(eta, xi, np.asarray(p_tilde, float), q_tilde, delta_hat)


# ---------------------------------------------------------------------------
# config loading (linear plants)

def linear_plant(A: Array, B: Array, horizon: int,
                 state_poly: Polytope, input_poly: Polytope,
                 E: Array | None = None, C: Array | None = None,
                 D: Array | None = None, G: Array | None = None,
                 phi: Callable[[int, Array], Array] | None = None,
                 n_p: int = 1, n_q: int = 1) -> PlantModel:
    """LTI plant; defaults to the trivial nonlinearity with zero selectors."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    n, m = A.shape[0], B.shape[1]
    E = np.zeros((n, n_p)) if E is None else np.asarray(E, float)
    C = np.zeros((n_q, n)) if C is None else np.asarray(C, float)
    D = np.zeros((n_q, m)) if D is None else np.asarray(D, float)
    G = np.zeros((n_q, n)) if G is None else np.asarray(G, float)
    phi = zero_phi if phi is None else phi

    def dyn(t, x, u, _A=A, _B=B):
        return _A @ x + _B @ u

    def jac(t, x, u, _A=A, _B=B):
        return _A, _B

    return PlantModel(n=n, m=m, n_q=n_q, n_p=n_p, dynamics=dyn, phi=phi,
                      E=E, C=C, D=D, G=G,
                      state_polytopes=[state_poly] * (horizon + 1),
                      input_polytopes=[input_poly] * horizon,
                      horizon=horizon, jacobians=jac, linear=(A, B))


def plant_from_config(cfg: dict) -> PlantModel:
    """Build a plant from a parsed config mapping (``kind: linear`` supported here;
    ``kind: microgrid`` is handled by the microgrid module)."""
    kind = cfg.get("kind")
    if kind == "linear":
        horizon = int(cfg["horizon"])
        state_poly = Polytope(np.asarray(cfg["state_polytope"]["A"], float),
                              np.asarray(cfg["state_polytope"]["b"], float))
        input_poly = Polytope(np.asarray(cfg["input_polytope"]["A"], float),
                              np.asarray(cfg["input_polytope"]["b"], float))
        return linear_plant(np.asarray(cfg["A"], float), np.asarray(cfg["B"], float),
                            horizon, state_poly, input_poly)
    if kind == "microgrid":
        from . import microgrid

        return microgrid.build_plant(microgrid.MicrogridSpec.from_dict(cfg.get("microgrid", {})))
    raise ContractError(f"unknown plant kind {kind!r}")
