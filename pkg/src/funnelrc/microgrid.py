"""4-generator DC microgrid benchmark.

Each distributed generator (DG) is a two-state block (voltage deviation
V_i, current deviation I_i, both per-unit around the operating point) with
its DC source as input and a line-coupling term v_i = sum_{j in N_i}
(y_j - y_i), y_i = V_i, over a 4-node ring.  Per-unit parameters give a
lightly damped, open-loop-stable pair per DG (natural frequency 6 rad/s,
damping ratio 0.1); blocks are discretized exactly at the 0.2 s sampling
period, then stacked with the coupling folded into the state matrix.

Runs are organized in 4 s epochs (20 steps): epoch boundaries reset the
current channels to emulate fresh failures/attacks, and a per-epoch
bias-plus-sinusoid disturbance is injected into the current channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, ContractError
from .plant import NominalTrajectory, PlantModel, Polytope, linear_plant

Array = np.ndarray


@dataclass(frozen=True)
class MicrogridSpec:
    num_dgs: int = 4
    r_filter: float = 0.2       # per-unit series resistance
    l_filter: float = 1.0 / 6.0  # per-unit filter inductance
    c_filter: float = 1.0 / 6.0  # per-unit bus capacitance
    line_conductance: float = 0.2
    sampling_period: float = 0.2
    epoch_steps: int = 20        # 4 s epochs at 0.2 s
    num_epochs: int = 5
    voltage_box: float = 0.6
    current_box: float = 1.5
    input_box: float = 2.0

    @property
    def n(self) -> int:
        return 2 * self.num_dgs

    @property
    def horizon(self) -> int:
        return self.epoch_steps * self.num_epochs

    def adjacency(self) -> Array:
        """Ring over the DGs (4 transmission lines for 4 DGs)."""
        k = self.num_dgs
        A = np.zeros((k, k))
        for i in range(k):
            A[i, (i + 1) % k] = 1.0
            A[i, (i - 1) % k] = 1.0
        return A

    @classmethod
    def from_dict(cls, cfg: dict) -> "MicrogridSpec":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        bad = set(cfg) - known
        if bad:
            raise ConfigError(f"unknown microgrid keys: {sorted(bad)}")
        return cls(**cfg)


def continuous_blocks(spec: MicrogridSpec) -> tuple[Array, Array, Array, Array]:
    """Per-DG continuous (A_c, B1_c, B2_c, C): identical across DGs."""
    C, L, R, g = spec.c_filter, spec.l_filter, spec.r_filter, spec.line_conductance
    A_c = np.array([[0.0, 1.0 / C], [-1.0 / L, -R / L]])
    B1_c = np.array([[0.0], [1.0 / L]])
    B2_c = np.array([[g / C], [0.0]])
    C_out = np.array([[1.0, 0.0]])
    return A_c, B1_c, B2_c, C_out


def discrete_blocks(spec: MicrogridSpec) -> tuple[Array, Array, Array, Array]:
    """Exact zero-order-hold discretization of one DG block (u_i and v_i held)."""
    A_c, B1_c, B2_c, C_out = continuous_blocks(spec)
    Bc = np.hstack([B1_c, B2_c])
    aug = np.zeros((4, 4))
    aug[:2, :2] = A_c
    aug[:2, 2:] = Bc
    M = expm(spec.sampling_period * aug)
    A_d = M[:2, :2]
    B1_d = M[:2, 2:3]
    B2_d = M[:2, 3:4]
    return A_d, B1_d, B2_d, C_out


@dataclass(frozen=True)
class MicrogridMatrices:
    A_block: Array
    B1_block: Array
    B2_block: Array
    C_block: Array
    laplacian: Array
    A: Array   # stacked n x n with coupling folded in
    B: Array   # stacked n x num_dgs


def stacked_matrices(spec: MicrogridSpec) -> MicrogridMatrices:
    k = spec.num_dgs
    A_d, B1_d, B2_d, C_out = discrete_blocks(spec)
    n = spec.n
    A = np.zeros((n, n))
    B = np.zeros((n, k))
    B2 = np.zeros((n, k))
    sel_v = np.zeros((k, n))
    for i in range(k):
        A[2 * i:2 * i + 2, 2 * i:2 * i + 2] = A_d
        B[2 * i:2 * i + 2, i:i + 1] = B1_d
        B2[2 * i:2 * i + 2, i:i + 1] = B2_d
        sel_v[i, 2 * i] = 1.0
    lap = np.diag(spec.adjacency().sum(axis=1)) - spec.adjacency()
    # v = -(laplacian) y with y = V, so the coupling folds into the state map
    A = A - B2 @ lap @ sel_v
    return MicrogridMatrices(A_d, B1_d, B2_d, C_out, lap, A, B)


def subsystem_step(spec: MicrogridSpec, x: Array, u: Array, delta: Array) -> Array:
    """Per-subsystem stepping with explicit coupling (oracle for the stacked map)."""
    k = spec.num_dgs
    A_d, B1_d, B2_d, _ = discrete_blocks(spec)
    adj = spec.adjacency()
    y = x[0::2]
    out = np.zeros_like(x)
    for i in range(k):
        v_i = float(np.sum(adj[i] * (y - y[i])))
        xi = x[2 * i:2 * i + 2]
        out[2 * i:2 * i + 2] = A_d @ xi + B1_d[:, 0] * u[i] + B2_d[:, 0] * v_i
    return out + delta


def build_plant(spec: MicrogridSpec) -> PlantModel:
    """Stacked LTI plant with the trivial nonlinearity and box polytopes."""
    mats = stacked_matrices(spec)
    k = spec.num_dgs
    lo = np.empty(spec.n)
    hi = np.empty(spec.n)
    lo[0::2], hi[0::2] = -spec.voltage_box, spec.voltage_box
    lo[1::2], hi[1::2] = -spec.current_box, spec.current_box
    state_poly = Polytope.box(lo, hi)
    input_poly = Polytope.box(-spec.input_box * np.ones(k), spec.input_box * np.ones(k))
    return linear_plant(mats.A, mats.B, spec.horizon, state_poly, input_poly)


# ---------------------------------------------------------------------------
# nominal trajectory

def nominal_trajectory(model: PlantModel, x_start: Array, x_goal: Array, N: int,
                       Qc: Array | None = None, Rc: Array | None = None,
                       u_goal: Array | None = None, terminal: str = "equality",
                       Qf: Array | None = None,
                       goal_tol: float = 1e-4) -> NominalTrajectory:
    """Finite-horizon convex quadratic tracking program on the LTI model.

    ``terminal="equality"`` pins x_N = x_goal (default); ``terminal="cost"``
    uses the terminal weight Qf instead, which makes the program coincide
    with a finite-horizon LQR when no inequality is active.
    """
    import cvxpy as cp

    if model.linear is None:
        raise ContractError("nominal_trajectory needs an LTI plant")
    A, B = model.linear
    n, m = model.n, model.m
    x_start = np.asarray(x_start, float)
    x_goal = np.asarray(x_goal, float)
    u_goal = np.zeros(m) if u_goal is None else np.asarray(u_goal, float)
    Qc = np.eye(n) if Qc is None else np.asarray(Qc, float)
    Rc = np.eye(m) if Rc is None else np.asarray(Rc, float)
    if terminal not in ("equality", "cost"):
        raise ContractError(f"unknown terminal mode {terminal!r}")

    X = cp.Variable((N + 1, n))
    U = cp.Variable((N, m))
    cost = 0
    cons = [X[0] == x_start]
    for t in range(N):
        cost += cp.quad_form(X[t] - x_goal, cp.psd_wrap(Qc))
        cost += cp.quad_form(U[t] - u_goal, cp.psd_wrap(Rc))
        cons.append(X[t + 1] == A @ X[t] + B @ U[t])
        poly = model.state_polytopes[t]
        cons.append(poly.A @ X[t] <= poly.b)
        ipoly = model.input_polytopes[t]
        cons.append(ipoly.A @ U[t] <= ipoly.b)
    poly = model.state_polytopes[N]
    cons.append(poly.A @ X[N] <= poly.b)
    if terminal == "equality":
        cons.append(X[N] == x_goal)
    else:
        Qf = Qc if Qf is None else np.asarray(Qf, float)
        cost += cp.quad_form(X[N] - x_goal, cp.psd_wrap(Qf))
    prob = cp.Problem(cp.Minimize(cost), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        binding = _report_binding(model, x_start, x_goal, N)
        raise ContractError(f"nominal trajectory program {prob.status}; {binding}")

    states = np.asarray(X.value, float)
    inputs = np.asarray(U.value, float)
    if terminal == "equality":
        states[N] = x_goal  # exact by constraint; strip solver noise
        if np.max(np.abs(np.asarray(X.value, float)[N] - x_goal)) > goal_tol:
            raise ContractError("terminal state missed the goal beyond tolerance")
    # consistent Lur'e data (trivial nonlinearity on LTI benchmarks)
    q_bar = np.einsum("qn,tn->tq", model.C, states[:-1]) + np.einsum(
        "qm,tm->tq", model.D, inputs)
    p_bar = np.stack([np.asarray(model.phi(t, q_bar[t]), float) for t in range(N)])
    # re-enforce the recursion exactly against float noise from the QP
    for t in range(N):
        states[t + 1] = A @ states[t] + B @ inputs[t] + model.E @ p_bar[t]
    if terminal == "equality" and np.max(np.abs(states[N] - x_goal)) > goal_tol:
        raise ContractError("re-simulated terminal state missed the goal")
    from .plant import GAMMA1_FLOOR

    traj = NominalTrajectory(
        states=states, inputs=inputs, p_bar=p_bar, q_bar=q_bar,
        gamma1=np.full(N, GAMMA1_FLOOR),
        A=np.broadcast_to(A, (N, n, n)).copy(),
        B=np.broadcast_to(B, (N, n, m)).copy())
    traj.validate(model)
    return traj


def _report_binding(model: PlantModel, x_start, x_goal, N) -> str:
    msgs = []
    if not model.state_polytopes[0].contains(x_start):
        msgs.append("x_start outside state polytope")
    if not model.state_polytopes[N].contains(x_goal):
        msgs.append("x_goal outside state polytope")
    return "; ".join(msgs) if msgs else "no obvious binding constraint"


def extend_nominal(traj: NominalTrajectory, model: PlantModel, horizon: int,
                   u_hold: Array | None = None) -> NominalTrajectory:
    """Hold the terminal waypoint (an equilibrium) for the remaining steps."""
    N0 = traj.horizon
    if horizon < N0:
        raise ContractError("extension horizon shorter than planned trajectory")
    if horizon == N0:
        return traj
    n, m = model.n, model.m
    extra = horizon - N0
    u_hold = np.zeros(m) if u_hold is None else np.asarray(u_hold, float)
    states = np.vstack([traj.states, np.tile(traj.states[-1], (extra, 1))])
    inputs = np.vstack([traj.inputs, np.tile(u_hold, (extra, 1))])
    A = np.vstack([traj.A, np.tile(traj.A[-1], (extra, 1, 1))])
    B = np.vstack([traj.B, np.tile(traj.B[-1], (extra, 1, 1))])
    q_extra = np.stack([model.C @ states[N0 + i] + model.D @ u_hold for i in range(extra)])
    p_extra = np.stack([np.asarray(model.phi(N0 + i, q_extra[i]), float) for i in range(extra)])
    q_bar = np.vstack([traj.q_bar, q_extra])
    p_bar = np.vstack([traj.p_bar, p_extra])
    gamma1 = np.concatenate([traj.gamma1, np.full(extra, traj.gamma1[-1])])
    ext = NominalTrajectory(states, inputs, p_bar, q_bar, gamma1, A, B)
    ext.validate(model)
    return ext


# ---------------------------------------------------------------------------
# attack scenario

@dataclass
class AttackScenario:
    """Epoch-structured resets plus a bounded bias-and-sinusoid injection.

    ``reset_offsets[e]`` perturbs the current channels at the start of
    epoch e+1 (resets sit exactly at epoch boundaries).  ``bias``,
    ``amplitude`` and ``omega`` give the per-epoch disturbance
    Delta_current,i(t) = b_e + a_e sin(w_e t) applied to every current
    channel; voltage channels are never perturbed directly.
    """

    num_dgs: int = 4
    sampling_period: float = 0.2
    epoch_steps: int = 20
    num_epochs: int = 5
    reset_offsets: Array = field(default_factory=lambda: np.zeros((4, 4)))
    bias: Array = field(default_factory=lambda: np.zeros(5))
    amplitude: Array = field(default_factory=lambda: np.zeros(5))
    omega: Array = field(default_factory=lambda: np.zeros(5))
    nominal_freeze: bool = True

    def __post_init__(self):
        self.reset_offsets = np.atleast_2d(np.asarray(self.reset_offsets, float))
        self.bias = np.asarray(self.bias, float)
        self.amplitude = np.asarray(self.amplitude, float)
        self.omega = np.asarray(self.omega, float)
        n_resets = self.num_epochs - 1
        if self.reset_offsets.shape != (n_resets, self.num_dgs):
            raise ConfigError(f"reset_offsets must have shape ({n_resets}, {self.num_dgs})")
        for name in ("bias", "amplitude", "omega"):
            if getattr(self, name).shape != (self.num_epochs,):
                raise ConfigError(f"{name} must have one entry per epoch")

    @property
    def horizon(self) -> int:
        return self.epoch_steps * self.num_epochs

    def reset_steps(self) -> list[int]:
        return [self.epoch_steps * (e + 1) for e in range(self.num_epochs - 1)]

    def reset_times_s(self) -> list[float]:
        return [s * self.sampling_period for s in self.reset_steps()]

    def epoch_of(self, t: int) -> int:
        return min(t // self.epoch_steps, self.num_epochs - 1)

    def reset_vector(self, reset_index: int) -> Array:
        out = np.zeros(2 * self.num_dgs)
        out[1::2] = self.reset_offsets[reset_index]
        return out

    def delta_at(self, t: int) -> Array:
        """Injected disturbance at step t (zero outside attacked epochs)."""
        if not (0 <= t < self.horizon):
            raise ContractError(f"step {t} outside horizon {self.horizon}")
        e = self.epoch_of(t)
        out = np.zeros(2 * self.num_dgs)
        val = self.bias[e] + self.amplitude[e] * np.sin(self.omega[e] * t * self.sampling_period)
        out[1::2] = val
        return out

    def delta_inf_norm(self) -> float:
        """Exhaustive max of |Delta(t)| over the discrete schedule."""
        return max(float(np.linalg.norm(self.delta_at(t))) for t in range(self.horizon))

    @classmethod
    def from_dict(cls, cfg: dict, spec: MicrogridSpec) -> "AttackScenario":
        return cls(num_dgs=spec.num_dgs, sampling_period=spec.sampling_period,
                   epoch_steps=spec.epoch_steps, num_epochs=spec.num_epochs,
                   reset_offsets=np.asarray(cfg["reset_offsets"], float),
                   bias=np.asarray(cfg["bias"], float),
                   amplitude=np.asarray(cfg["amplitude"], float),
                   omega=np.asarray(cfg["omega"], float),
                   nominal_freeze=bool(cfg.get("nominal_freeze", True)))
