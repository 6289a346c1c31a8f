"""Gain synthesis and invariant-funnel computation.

Everything revolves around one per-step matrix inequality that links
consecutive shape matrices P_t, P_{t+1} and the gain variable Y_t
(K_t = Y_t P_t^{-1}): positive semidefiniteness of the 6x6 block matrix
assembled by :func:`build_dmi` certifies one-step Lyapunov decrease of
eta' P^{-1} eta along the closed loop together with an L2 bound gamma2
from the learned disturbance to the tracking error.  Funnel ellipsoids
{eta : eta' P_t^{-1} eta <= 1/r_t} are kept inside the state/input
polytopes by the support-function LMIs of
:func:`state_constraint_lmi` / :func:`input_constraint_lmi`, and the
admissible funnel level 1/r_t follows the two-branch contraction rule in
:func:`funnel_radius`.

The offline program solves the whole horizon at once; the online program
solves a sliding window with the funnel size relaxed into linear
constraints (0 <= r <= rbar, 0 <= r <= rbar(1-k)) so a large weight w5
drives r to the admissible maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import conic
from .errors import ContractError, FunnelInfeasible, GeometryError
from .plant import NominalTrajectory, PlantModel, Polytope

Array = np.ndarray

RBAR_CAP = 1e9          # cap on rbar = 1/(gamma2 ||delta||_inf^2) at zero disturbance
EPS_PSD_DEFAULT = 1e-7  # identity shift applied to matrix conditions handed to the solver
SCALAR_FLOOR = 1e-9     # positivity floor for scalar decision variables


# ---------------------------------------------------------------------------
# DMI assembly

@dataclass
class DmiProblem:
    """Per-step data plus current values of the decision quantities."""

    A: Array
    B: Array
    C: Array
    D: Array
    E: Array
    G: Array
    gamma1: float
    gamma2: float
    alpha: float
    P_t: Array
    P_next: Array
    Y: Array
    nu: float

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise ContractError("alpha must lie in (0, 1]")
        if self.gamma2 <= 0 or self.gamma1 <= 0:
            raise ContractError("gamma1, gamma2 must be positive")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        n = self.A.shape[0]
        m = self.B.shape[1]
        n_q = self.C.shape[0]
        n_p = self.E.shape[1]
        return n, m, n_p, n_q


def build_dmi(problem: DmiProblem) -> Array:
    """Assemble the 6x6 block stability inequality exactly as printed.

    Block rows/cols: [alpha P_t | nu I | gamma2 I | P_{t+1} | nu/gamma1^2 I |
    gamma2 I] with couplings (1,4) = (A P + B Y)', (1,5) = (C P + D Y)',
    (1,6) = P_t, (2,4) = nu E', (3,4) = I, (3,5) = G'.  Affine in
    (P_t, P_{t+1}, Y, nu).
    """
    n, m, n_p, n_q = problem.dims
    P, Pn, Y, nu = problem.P_t, problem.P_next, problem.Y, problem.nu
    if P.shape != (n, n) or Pn.shape != (n, n) or Y.shape != (m, n):
        raise ContractError("DMI decision-variable shapes do not conform")
    H1 = problem.A @ P + problem.B @ Y
    H2 = problem.C @ P + problem.D @ Y
    sizes = [n, n_p, n, n, n_q, n]
    off = np.concatenate([[0], np.cumsum(sizes)])
    M = np.zeros((off[-1], off[-1]))

    def put(i, j, block):
        M[off[i]:off[i + 1], off[j]:off[j + 1]] = block
        if i != j:
            M[off[j]:off[j + 1], off[i]:off[i + 1]] = np.asarray(block).T

    put(0, 0, problem.alpha * P)
    put(1, 1, nu * np.eye(n_p))
    put(2, 2, problem.gamma2 * np.eye(n))
    put(3, 3, Pn)
    put(4, 4, (nu / problem.gamma1 ** 2) * np.eye(n_q))
    put(5, 5, problem.gamma2 * np.eye(n))
    put(0, 3, H1.T)
    put(0, 4, H2.T)
    put(0, 5, P)
    put(1, 3, nu * problem.E.T)
    put(2, 3, np.eye(n))
    put(2, 4, problem.G.T)
    return M


def build_dmi_reduced(A: Array, B: Array, gamma2: float, alpha: float,
                      P: Array, Pn: Array, Y: Array) -> Array:
    """Core of the DMI when the nonlinearity channel is disconnected.

    With E = C = D = G = 0 the nu-rows of the printed layout decouple
    exactly (their off-diagonal blocks vanish), so PSD-ness of the full
    matrix is equivalent to PSD-ness of this 4x4 block core for any nu > 0.
    The gamma1 floor would otherwise put a nu/gamma1^2 ~ 1e18 entry on the
    diagonal, which wrecks both solver scaling and dense eigenvalue checks.
    """
    n = A.shape[0]
    H1 = A @ P + B @ Y
    M = np.zeros((4 * n, 4 * n))
    idx = np.arange(n)
    M[:n, :n] = alpha * P
    M[:n, 2 * n:3 * n] = H1.T
    M[2 * n:3 * n, :n] = H1
    M[:n, 3 * n:] = P
    M[3 * n:, :n] = P
    M[n + idx, n + idx] = gamma2
    M[n + idx, 2 * n + idx] = 1.0
    M[2 * n + idx, n + idx] = 1.0
    M[2 * n:3 * n, 2 * n:3 * n] = Pn
    M[3 * n + idx, 3 * n + idx] = gamma2
    return M


def _dmi_vacuous_core(A: Array, B: Array, gamma2: float, alpha: float,
                      P: Array, Pn: Array, Y: Array) -> Array:
    """Schur complement of the constant gamma2 I block of the vacuous-sector DMI.

    Exactly equivalent to :func:`build_dmi_reduced` >= 0 (pivot block is
    constant positive definite); 3n x 3n instead of 4n x 4n, used only to
    shrink the solver's cone.
    """
    n = A.shape[0]
    H1 = A @ P + B @ Y
    M = np.zeros((3 * n, 3 * n))
    idx = np.arange(n)
    M[:n, :n] = alpha * P
    M[:n, n:2 * n] = H1.T
    M[n:2 * n, :n] = H1
    M[n:2 * n, n:2 * n] = Pn
    M[n + idx, n + idx] -= 1.0 / gamma2
    M[:n, 2 * n:] = P
    M[2 * n:, :n] = P
    M[2 * n + idx, 2 * n + idx] = gamma2
    return M


def dmi_direct_matrix(A: Array, B: Array, C: Array, D: Array, E: Array, G: Array,
                      gamma1: float, gamma2: float, alpha: float,
                      P: Array, Pn: Array, K: Array, lam_p: float) -> Array:
    """Pre-Schur quadratic form over (eta, p~, delta^): feasibility <=> max eig <= 0.

    Combines the Lyapunov difference along the closed loop, the sector
    multiplier lam_p (gamma1^2 |q~|^2 - |p~|^2 >= 0 under the sector), and
    the L2 supply term; used as the regression oracle for the Schur chain.
    """
    n = A.shape[0]
    n_p = E.shape[1]
    A_cl = A + B @ K
    C_cl = C + D @ K
    T = np.hstack([A_cl, E, np.eye(n)])
    J = np.hstack([C_cl, np.zeros((C.shape[0], n_p)), G])
    Pn_inv = np.linalg.inv(Pn)
    P_inv = np.linalg.inv(P)
    dim = n + n_p + n
    M = T.T @ Pn_inv @ T
    M[:n, :n] -= alpha * P_inv
    M += lam_p * (gamma1 ** 2) * (J.T @ J)
    M[n:n + n_p, n:n + n_p] -= lam_p * np.eye(n_p)
    M[:n, :n] += (1.0 / gamma2) * np.eye(n)
    M[n + n_p:dim, n + n_p:dim] -= gamma2 * np.eye(n)
    return M


def dmi_equivalence_check(A, B, C, D, E, G, gamma1, gamma2, alpha,
                          P, Pn, K, lam_p, tol: float = 1e-7) -> bool:
    """True iff the printed DMI and the pre-Schur form agree on feasibility."""
    for M, name in [(P, "P_t"), (Pn, "P_next")]:
        lam = np.linalg.eigvalsh(M)[0]
        if lam <= 0:
            raise ContractError(f"{name} must be symmetric positive definite")
    lmi = build_dmi(DmiProblem(A, B, C, D, E, G, gamma1, gamma2, alpha,
                               P, Pn, K @ P, 1.0 / lam_p))
    direct = dmi_direct_matrix(A, B, C, D, E, G, gamma1, gamma2, alpha, P, Pn, K, lam_p)
    lmi_feasible = bool(np.linalg.eigvalsh(lmi)[0] >= -tol)
    direct_feasible = bool(np.linalg.eigvalsh(direct)[-1] <= tol)
    return lmi_feasible == direct_feasible


# ---------------------------------------------------------------------------
# funnel geometry

def state_constraint_lmi(a: Array, b: float, x_bar: Array, P: Array, r: float) -> Array:
    """Support-function block keeping the state funnel inside a'x <= b.

    PSD of [[(b - a'xbar)^2 r, a'P], [Pa, P]] is equivalent to the funnel
    support value sqrt(a'Pa / r) not exceeding the waypoint margin.
    """
    a = np.asarray(a, float)
    margin = float(b - a @ np.asarray(x_bar, float))
    if margin <= 0:
        raise GeometryError("waypoint on or outside the state half-space")
    return _arrow_block(margin ** 2 * r, a @ P, P)


def input_constraint_lmi(a: Array, b: float, u_bar: Array, K: Array, P: Array,
                         r: float) -> Array:
    """Input-funnel analogue of the state block, with the K P product row."""
    return _input_lmi_from_product(a, b, u_bar, np.asarray(K, float) @ P, P, r)


def _input_lmi_from_product(a: Array, b: float, u_bar: Array, KP: Array, P: Array,
                            r: float) -> Array:
    a = np.asarray(a, float)
    margin = float(b - a @ np.asarray(u_bar, float))
    if margin <= 0:
        raise GeometryError("waypoint on or outside the input half-space")
    return _arrow_block(margin ** 2 * r, a @ KP, P)


def _arrow_block(corner: float, row: Array, P: Array) -> Array:
    n = P.shape[0]
    M = np.empty((n + 1, n + 1))
    M[0, 0] = corner
    M[0, 1:] = row
    M[1:, 0] = row
    M[1:, 1:] = P
    return M


def funnel_sample(eta: Array, P: Array) -> float:
    """eta' P^{-1} eta via a Cholesky solve (no explicit inverse)."""
    eta = np.asarray(eta, float)
    P = np.asarray(P, float)
    if P.shape[0] != P.shape[1] or np.max(np.abs(P - P.T)) > 1e-8 * max(1.0, np.max(np.abs(P))):
        raise ContractError("P must be symmetric")
    try:
        cho = cho_factor(P, lower=True)
    except LinAlgError as exc:
        raise ContractError("P must be positive definite") from exc
    return float(eta @ cho_solve(cho, eta))


def funnel_radius(k_t: float, gamma2: float, delta_inf: float, mode: str) -> float:
    """Minimal admissible funnel level 1/r_t for the given contraction factor.

    ``delta_inf`` is the worst-case disturbance norm over the horizon in
    ``offline-worst-case`` mode (pass k_t = k_max there) or the pointwise
    |delta_t| in ``online-pointwise`` mode.
    """
    if mode not in ("offline-worst-case", "online-pointwise"):
        raise ContractError(f"unknown funnel_radius mode {mode!r}")
    if gamma2 <= 0 or delta_inf < 0:
        raise ContractError("gamma2 must be positive, delta_inf nonnegative")
    if k_t >= 1:
        raise FunnelInfeasible(f"contraction factor k={k_t} >= 1")
    if delta_inf == 0.0:
        return 0.0
    base = gamma2 * delta_inf ** 2
    if k_t <= 0:
        return base
    return base / (1.0 - k_t)


def contraction_factor(P: Array, gamma2: float) -> float:
    """k = 1 - lambda_min(P)/gamma2 (equals 1 - 1/(gamma2 lambda_max(P^-1)))."""
    return 1.0 - float(np.linalg.eigvalsh(P)[0]) / gamma2


# ---------------------------------------------------------------------------
# horizon data and solutions

@dataclass
class HorizonData:
    """Everything the programs need about one planning horizon."""

    A: Array          # (N, n, n)
    B: Array          # (N, n, m)
    gamma1: Array     # (N,)
    x_bar: Array      # (N+1, n)
    u_bar: Array      # (N, m)
    C: Array
    D: Array
    E: Array
    G: Array
    state_polytopes: Sequence[Polytope]
    input_polytopes: Sequence[Polytope]

    @classmethod
    def from_plant(cls, model: PlantModel, traj: NominalTrajectory) -> "HorizonData":
        return cls(A=traj.A, B=traj.B, gamma1=traj.gamma1, x_bar=traj.states,
                   u_bar=traj.inputs, C=model.C, D=model.D, E=model.E, G=model.G,
                   state_polytopes=list(model.state_polytopes),
                   input_polytopes=list(model.input_polytopes))

    @property
    def horizon(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    @property
    def sector_vacuous(self) -> bool:
        return not (np.any(self.E) or np.any(self.C) or np.any(self.D) or np.any(self.G))


@dataclass
class Weights:
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    w4: float = 1.0
    w5: float = 1e6

    def validate(self, online: bool = True) -> None:
        for name in ("w1", "w2", "w3", "w4", "w5"):
            if getattr(self, name) <= 0:
                raise ContractError(f"weight {name} must be positive")
        if online and self.w5 < 1e4:
            raise ContractError("w5 must be at least 1e4 for the online relaxation")


@dataclass
class SynthesisOptions:
    eps_psd: float = EPS_PSD_DEFAULT
    scalar_floor: float = SCALAR_FLOOR
    solver: conic.SolverOptions = field(default_factory=conic.SolverOptions)
    check_program: bool = False  # full affinity/symmetry validation at build time


@dataclass
class FunnelSolution:
    """Synthesis output over a window [t1, t2] (offline: [0, N])."""

    t1: int
    t2: int
    status: str
    P: list[Array] = field(default_factory=list)
    Y: list[Array] = field(default_factory=list)
    K: list[Array] = field(default_factory=list)
    nu: list[float] = field(default_factory=list)
    inv_r: list[float] = field(default_factory=list)
    r_solved: list[float] = field(default_factory=list)
    k: list[float] = field(default_factory=list)
    gamma2: float = 0.0
    alpha: float = 1.0
    weights: Optional[Weights] = None
    objective: Optional[float] = None
    max_residual: float = np.inf
    wall_ms: float = 0.0
    infeasible_class: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def r(self) -> list[float]:
        return [1.0 / ir if ir > 0 else math.inf for ir in self.inv_r]

    def gain_consistency(self) -> float:
        """max |K_t P_t - Y_t| over the window (should be ~0)."""
        worst = 0.0
        for K, P, Y in zip(self.K, self.P, self.Y):
            worst = max(worst, float(np.max(np.abs(K @ P - Y))))
        return worst


# ---------------------------------------------------------------------------
# shared program pieces

def _add_dmi_constraints(b: conic.ProgramBuilder, data: HorizonData, gamma2, alpha,
                         t1, t2, eps) -> None:
    n = data.n
    vac = data.sector_vacuous
    for t in range(t1, t2):
        At, Bt, g1 = data.A[t], data.B[t], float(data.gamma1[t])

        if vac:
            def fn(v, t=t, At=At, Bt=Bt):
                M = _dmi_vacuous_core(At, Bt, gamma2, alpha,
                                      v[f"P{t}"], v[f"P{t + 1}"], v[f"Y{t}"])
                return M - eps * np.eye(M.shape[0])

            deps = [f"P{t}", f"P{t + 1}", f"Y{t}"]
        else:
            def fn(v, t=t, At=At, Bt=Bt, g1=g1):
                prob = DmiProblem(At, Bt, data.C, data.D, data.E, data.G, g1,
                                  gamma2, alpha, v[f"P{t}"], v[f"P{t + 1}"],
                                  v[f"Y{t}"], v[f"nu{t}"])
                M = build_dmi(prob)
                return M - eps * np.eye(M.shape[0])

            deps = [f"P{t}", f"P{t + 1}", f"Y{t}", f"nu{t}"]
        b.add_psd(fn, deps, label=f"dmi[{t}]")


def _add_gain_bound(b: conic.ProgramBuilder, t: int, m: int, eps: float) -> None:
    def fn(v, t=t):
        Y = v[f"Y{t}"]
        n = Y.shape[1]
        blk = np.zeros((m + n, m + n))
        d = np.arange(m)
        blk[d, d] = v[f"muK{t}"] - eps
        blk[:m, m:] = Y
        blk[m:, :m] = Y.T
        blk[m:, m:] = v[f"P{t}"] - eps * np.eye(n)
        return blk

    b.add_psd(fn, [f"Y{t}", f"P{t}", f"muK{t}"], label=f"gain-bound[{t}]")


def _add_state_geometry(b: conic.ProgramBuilder, data: HorizonData, t: int,
                        r_name_or_value, eps: float) -> None:
    # The support-function block [[m^2 r, a'P], [Pa, P]] is, under the P > 0
    # constraint already in the program, Schur-equivalent to the scalar
    # inequality a'Pa <= m^2 r, which is linear in (P, r) jointly.  The
    # program uses the scalar form; the printed block remains the public op
    # and is what verification re-checks on solutions.
    poly = data.state_polytopes[t]
    x_bar = data.x_bar[t]
    for i in range(poly.num_halfspaces):
        a, rhs = poly.A[i], float(poly.b[i])
        margin = rhs - float(a @ x_bar)
        if margin <= 0:
            raise GeometryError(f"waypoint on or outside state half-space {i} at t={t}")

        def fn(v, a=a, margin=margin, t=t):
            r = v[r_name_or_value] if isinstance(r_name_or_value, str) else r_name_or_value
            return float(a @ v[f"P{t}"] @ a) - margin ** 2 * r + eps

        deps = [f"P{t}"] + ([r_name_or_value] if isinstance(r_name_or_value, str) else [])
        b.add_linear_le(fn, deps, label=f"state-geom[{t},{i}]")


def _add_input_geometry(b: conic.ProgramBuilder, data: HorizonData, t: int,
                        r_name_or_value, eps: float) -> None:
    poly = data.input_polytopes[t]
    u_bar = data.u_bar[t]
    for j in range(poly.num_halfspaces):
        a, rhs = poly.A[j], float(poly.b[j])

        def fn(v, a=a, rhs=rhs, u_bar=u_bar, t=t):
            r = v[r_name_or_value] if isinstance(r_name_or_value, str) else r_name_or_value
            blk = _input_lmi_from_product(a, rhs, u_bar, v[f"Y{t}"], v[f"P{t}"], r)
            return blk - eps * np.eye(blk.shape[0])

        deps = [f"P{t}", f"Y{t}"] + ([r_name_or_value] if isinstance(r_name_or_value, str) else [])
        b.add_psd(fn, deps, label=f"input-geom[{t},{j}]")


def _extract(builder: conic.ProgramBuilder, sol: conic.SdpSolution, data: HorizonData,
             gamma2, alpha, t1, t2, weights, online: bool) -> FunnelSolution:
    vals = builder.unpack(sol.variables)
    vac = data.sector_vacuous
    Ps = [np.asarray(vals[f"P{t}"]) for t in range(t1, t2 + 1)]
    Ys = [np.asarray(vals[f"Y{t}"]) for t in range(t1, t2)]
    Ks = [np.linalg.solve(P.T, Y.T).T for Y, P in zip(Ys, Ps)]
    nus = [1.0 if vac else float(vals[f"nu{t}"]) for t in range(t1, t2)]
    ks = [contraction_factor(P, gamma2) for P in Ps]
    out = FunnelSolution(t1=t1, t2=t2, status="optimal", P=Ps, Y=Ys, K=Ks, nu=nus,
                         k=ks, gamma2=gamma2, alpha=alpha, weights=weights,
                         objective=sol.objective, max_residual=sol.max_residual,
                         wall_ms=sol.wall_ms)
    if online:
        out.r_solved = [float(vals[f"r{t}"]) for t in range(t1, t2 + 1)]
        out.inv_r = [1.0 / max(r, 1.0 / RBAR_CAP) for r in out.r_solved]
    return out


# ---------------------------------------------------------------------------
# offline program

OFFLINE_CONSTRAINT_CLASSES = ("psd-bounds", "gain-bound", "dmi", "state-geometry",
                              "input-geometry", "boundary")


def solve_offline(data: HorizonData, weights: Weights, gamma2: float, alpha: float,
                  P_i: Array, P_f: Array, r0: float, r_f: float,
                  options: SynthesisOptions | None = None,
                  delta_inf: float = 0.0,
                  volume_mode: str = "mineig") -> FunnelSolution:
    """Whole-horizon synthesis.

    Geometry LMIs are evaluated at the fixed reference levels (r0 at
    interior steps, r_f at the terminal one); the invariant level 1/r_t is
    derived post hoc from the solved k_max and ``delta_inf`` via the
    worst-case branch rule.  ``volume_mode="logdet"`` re-solves with an
    iteratively linearized log-det objective on P_0 instead of the
    minimum-eigenvalue surrogate.
    """
    options = options or SynthesisOptions()
    weights.validate(online=False)
    if volume_mode not in ("mineig", "logdet"):
        raise ContractError(f"unknown volume mode {volume_mode!r}")
    N = data.horizon

    sol = _solve_offline_once(data, weights, gamma2, alpha, P_i, P_f, r0, r_f, options,
                              vol_weight_matrix=None)
    if volume_mode == "logdet" and sol.ok:
        for _ in range(2):
            W = np.linalg.inv(sol.P[0])
            W = W / np.linalg.norm(W)
            nxt = _solve_offline_once(data, weights, gamma2, alpha, P_i, P_f, r0, r_f,
                                      options, vol_weight_matrix=W)
            if not nxt.ok:
                break
            sol = nxt
    if not sol.ok:
        if sol.status == "infeasible":
            sol.infeasible_class = _diagnose_offline(data, weights, gamma2, alpha,
                                                     P_i, P_f, r0, r_f, options)
        return sol

    k_max = max(sol.k)
    level = funnel_radius(k_max, gamma2, delta_inf, "offline-worst-case")
    sol.inv_r = [level] * (N + 1)
    sol.r_solved = []
    return sol


def _solve_offline_once(data, weights, gamma2, alpha, P_i, P_f, r0, r_f, options,
                        vol_weight_matrix, skip_classes: frozenset = frozenset()):
    N = data.horizon
    n, m = data.n, data.m
    eps = options.eps_psd
    vac = data.sector_vacuous
    b = conic.ProgramBuilder()
    for t in range(N + 1):
        b.symmetric(f"P{t}", n)
        b.scalar(f"muP{t}")
    for t in range(N):
        b.matrix(f"Y{t}", m, n)
        b.scalar(f"muK{t}")
        if not vac:
            b.scalar(f"nu{t}")
    b.scalar("tau")

    if "psd-bounds" not in skip_classes:
        for t in range(N + 1):
            b.add_psd(lambda v, t=t: v[f"P{t}"] - eps * np.eye(n), [f"P{t}"],
                      label=f"P-pos[{t}]")
            b.add_psd(lambda v, t=t: v[f"muP{t}"] * np.eye(n) - v[f"P{t}"] - eps * np.eye(n),
                      [f"P{t}", f"muP{t}"], label=f"P-cap[{t}]")
    if "gain-bound" not in skip_classes:
        for t in range(N):
            _add_gain_bound(b, t, m, eps)
    if "dmi" not in skip_classes:
        _add_dmi_constraints(b, data, gamma2, alpha, 0, N, eps)
        if not vac:
            for t in range(N):
                b.add_linear_le(lambda v, t=t: options.scalar_floor - v[f"nu{t}"],
                                [f"nu{t}"], label=f"nu-floor[{t}]")
    if "state-geometry" not in skip_classes:
        for t in range(N + 1):
            _add_state_geometry(b, data, t, r_f if t == N else r0, eps)
    if "input-geometry" not in skip_classes:
        for t in range(N):
            _add_input_geometry(b, data, t, r0, eps)
    if "boundary" not in skip_classes:
        P_i = np.asarray(P_i, float)
        P_f = np.asarray(P_f, float)
        b.add_psd(lambda v: v["P0"] - r0 * P_i - eps * np.eye(n), ["P0"], label="boundary-initial")
        b.add_psd(lambda v: r_f * P_f - v[f"P{N}"] - eps * np.eye(n), [f"P{N}"],
                  label="boundary-final")
    b.add_psd(lambda v: v["P0"] - v["tau"] * np.eye(n), ["P0", "tau"], label="volume-surrogate")

    W = vol_weight_matrix

    def objective(v):
        cost = weights.w1 * sum(v[f"muP{t}"] for t in range(N + 1))
        cost += weights.w2 * sum(v[f"muK{t}"] for t in range(N))
        if W is None:
            cost -= weights.w3 * v["tau"]
        else:
            cost -= weights.w3 * float(np.sum(W * v["P0"]))
        return cost

    deps = [f"muP{t}" for t in range(N + 1)] + [f"muK{t}" for t in range(N)] + ["tau", "P0"]
    b.minimize(objective, deps)
    prog = b.build(options.solver, check=options.check_program)
    sol = conic.solve(prog)
    if sol.status != "optimal":
        return FunnelSolution(0, N, sol.status, gamma2=gamma2, alpha=alpha,
                              weights=weights, wall_ms=sol.wall_ms)
    return _extract(b, sol, data, gamma2, alpha, 0, N, weights, online=False)


def _diagnose_offline(data, weights, gamma2, alpha, P_i, P_f, r0, r_f, options) -> str:
    """Name the first constraint class whose addition makes the program infeasible."""
    active: list[str] = []
    for cls in OFFLINE_CONSTRAINT_CLASSES:
        active.append(cls)
        skip = frozenset(c for c in OFFLINE_CONSTRAINT_CLASSES if c not in active)
        out = _solve_offline_once(data, weights, gamma2, alpha, P_i, P_f, r0, r_f,
                                  options, None, skip_classes=skip)
        if out.status == "infeasible":
            return cls
    return "unknown"


# ---------------------------------------------------------------------------
# online program

def solve_online(data: HorizonData, t1: int, t2: int, weights: Weights,
                 gamma2: float, alpha: float, rbar: float,
                 P_i: Array, P_f: Array,
                 options: SynthesisOptions | None = None,
                 warm_start: FunnelSolution | None = None) -> FunnelSolution:
    """Sliding-window synthesis with the funnel size as a decision variable.

    ``rbar`` is 1/(gamma2 ||delta||_inf^2) under the current disturbance
    estimate (capped upstream).  The two-branch funnel rule is relaxed to
    0 <= r_t <= rbar and 0 <= r_t <= rbar (1 - k_t) with the scalar k_t
    tied to the minimum eigenvalue of P_t through P_t >= gamma2 (1-k_t) I;
    a large w5 then drives r_t to the admissible maximum.  ``warm_start``
    is accepted for interface stability; the IPM backends do not consume
    an initial point.
    """
    del warm_start
    options = options or SynthesisOptions()
    weights.validate(online=True)
    if not (t1 < t2 <= data.horizon):
        raise ContractError("need t1 < t2 <= horizon")
    if rbar <= 0:
        raise ContractError("rbar must be positive")
    rbar = min(rbar, RBAR_CAP)
    n, m = data.n, data.m
    eps = options.eps_psd
    vac = data.sector_vacuous
    b = conic.ProgramBuilder()
    for t in range(t1, t2 + 1):
        b.symmetric(f"P{t}", n)
        b.scalar(f"r{t}")
        b.scalar(f"k{t}")
        b.scalar(f"mu2_{t}")
    for t in range(t1, t2):
        b.matrix(f"Y{t}", m, n)
        b.scalar(f"muK{t}")
        if not vac:
            b.scalar(f"nu{t}")
    b.scalar("mu1")
    b.scalar("tau")

    _add_dmi_constraints(b, data, gamma2, alpha, t1, t2, eps)
    for t in range(t1, t2 + 1):
        b.scalar(f"s{t}")  # shared lower bound: one cone serves P-floor, k-link, volume
        # funnel-size relaxation
        b.add_linear_le(lambda v, t=t: -v[f"r{t}"], [f"r{t}"], label=f"r-nonneg[{t}]")
        b.add_linear_le(lambda v, t=t: v[f"r{t}"] - rbar, [f"r{t}"], label=f"r-cap[{t}]")
        b.add_linear_le(lambda v, t=t: v[f"r{t}"] + rbar * v[f"k{t}"] - rbar,
                        [f"r{t}", f"k{t}"], label=f"r-contraction[{t}]")
        b.add_linear_le(lambda v, t=t: v[f"k{t}"] - 1.0, [f"k{t}"], label=f"k-cap[{t}]")
        # P_t >= s_t I, with s_t dominating every scalar lower bound on P_t:
        # the fixed floor mu1, the contraction link gamma2 (1 - k_t), and the
        # volume surrogate tau at the window head (equivalent to one cone each).
        b.add_psd(lambda v, t=t: v[f"P{t}"] - v[f"s{t}"] * np.eye(n) - eps * np.eye(n),
                  [f"P{t}", f"s{t}"], label=f"P-floor[{t}]")
        b.add_linear_le(lambda v, t=t: v["mu1"] - v[f"s{t}"], ["mu1", f"s{t}"],
                        label=f"s-mu1[{t}]")
        b.add_linear_le(lambda v, t=t: gamma2 - gamma2 * v[f"k{t}"] - v[f"s{t}"],
                        [f"k{t}", f"s{t}"], label=f"k-link[{t}]")
        # P_t <= mu2_t I
        b.add_psd(lambda v, t=t: v[f"mu2_{t}"] * np.eye(n) - v[f"P{t}"] - eps * np.eye(n),
                  [f"P{t}", f"mu2_{t}"], label=f"P-cap[{t}]")
        _add_state_geometry(b, data, t, f"r{t}", eps)
    b.add_linear_le(lambda v: options.scalar_floor - v["mu1"], ["mu1"], label="mu1-floor")
    b.add_linear_le(lambda v: v["tau"] - v[f"s{t1}"], ["tau", f"s{t1}"], label="s-tau")
    for t in range(t1, t2):
        _add_gain_bound(b, t, m, eps)
        _add_input_geometry(b, data, t, f"r{t}", eps)
        if not vac:
            b.add_linear_le(lambda v, t=t: options.scalar_floor - v[f"nu{t}"],
                            [f"nu{t}"], label=f"nu-floor[{t}]")
    P_i = np.asarray(P_i, float)
    P_f = np.asarray(P_f, float)
    b.add_psd(lambda v: v[f"P{t1}"] - v[f"r{t1}"] * P_i - eps * np.eye(n),
              [f"P{t1}", f"r{t1}"], label="boundary-initial")
    b.add_psd(lambda v: v[f"r{t2}"] * P_f - v[f"P{t2}"] - eps * np.eye(n),
              [f"P{t2}", f"r{t2}"], label="boundary-final")

    def objective(v):
        cost = weights.w1 * sum(v[f"mu2_{t}"] for t in range(t1, t2 + 1))
        cost += weights.w2 * sum(v[f"muK{t}"] for t in range(t1, t2))
        cost += weights.w4 * v["mu1"] - weights.w3 * v["tau"]
        cost -= weights.w5 * sum(v[f"r{t}"] for t in range(t1, t2 + 1))
        return cost

    deps = ([f"mu2_{t}" for t in range(t1, t2 + 1)] + [f"muK{t}" for t in range(t1, t2)]
            + [f"r{t}" for t in range(t1, t2 + 1)] + ["mu1", "tau"])
    b.minimize(objective, deps)
    prog = b.build(options.solver, check=options.check_program)
    sol = conic.solve(prog)
    if sol.status != "optimal":
        return FunnelSolution(t1, t2, sol.status, gamma2=gamma2, alpha=alpha,
                              weights=weights, wall_ms=sol.wall_ms)
    return _extract(b, sol, data, gamma2, alpha, t1, t2, weights, online=True)


# ---------------------------------------------------------------------------
# certified random instances (used by property and acceptance tests)

def solve_dmi_feasibility(A, B, C, D, E, G, gamma1, gamma2, alpha,
                          P_floor: float = 0.1,
                          options: SynthesisOptions | None = None):
    """Solve one free-standing DMI step; returns (P, P_next, K, nu) or None.

    The trace objective keeps the program bounded; the returned point is
    re-verified (raw DMI PSD without the epsilon shift) before acceptance.
    """
    options = options or SynthesisOptions()
    n, m = A.shape[0], B.shape[1]
    eps = options.eps_psd
    b = conic.ProgramBuilder()
    b.symmetric("P", n)
    b.symmetric("Pn", n)
    b.matrix("Y", m, n)
    b.scalar("nu")

    def dmi_fn(v):
        prob = DmiProblem(A, B, C, D, E, G, gamma1, gamma2, alpha,
                          v["P"], v["Pn"], v["Y"], v["nu"])
        M = build_dmi(prob)
        return M - eps * np.eye(M.shape[0])

    b.add_psd(dmi_fn, ["P", "Pn", "Y", "nu"], label="dmi")
    b.add_psd(lambda v: v["P"] - P_floor * np.eye(n), ["P"], label="P-floor")
    b.add_psd(lambda v: v["Pn"] - P_floor * np.eye(n), ["Pn"], label="Pn-floor")
    b.add_linear_le(lambda v: options.scalar_floor - v["nu"], ["nu"], label="nu-floor")
    b.minimize(lambda v: float(np.trace(v["P"]) + np.trace(v["Pn"])) + v["nu"],
               ["P", "Pn", "nu"])
    sol = conic.solve(b.build(options.solver))
    if sol.status != "optimal":
        return None
    vals = b.unpack(sol.variables)
    P, Pn, Y, nu = vals["P"], vals["Pn"], vals["Y"], float(vals["nu"])
    raw = build_dmi(DmiProblem(A, B, C, D, E, G, gamma1, gamma2, alpha, P, Pn, Y, nu))
    if np.linalg.eigvalsh(raw)[0] < 0:
        return None
    K = np.linalg.solve(P.T, Y.T).T
    return P, Pn, K, nu
