"""Recurrent equilibrium network for online disturbance identification.

The network is a linear state-space core wrapped around an implicit
(equilibrium) layer w = sigma(D11 w + C1 x~ + D12 x^ + b_v).  D11 is kept
strictly lower triangular, so the equilibrium is solved exactly by forward
substitution - no fixed-point iteration, no solver tolerance.  Input is
the virtual plant state x^, output is the learned disturbance sample.

Input-output behaviour is certified by a quadratic (Q, S, R) certificate:
positive definiteness of :func:`iqc_certificate_matrix` (checked together
with the well-posedness block F) implies the incremental quadratic
constraint between any two input/output trajectory pairs.  Training is
self-supervised (match virtual to actual states) by plain gradient descent
on loss + certificate penalty; gradients come from torch autodiff and are
validated against finite differences of the numpy objective in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import yaml

from .errors import ContractError, NumericalError

Array = np.ndarray

TOL_PSD = 1e-9
GRAD_CLIP = 10.0
P1_SHIFT = 1e-6  # P1 = L L' + P1_SHIFT * I keeps the multiplier strictly positive definite


# ---------------------------------------------------------------------------
# activations (slope-restricted in [0, 1])

def _relu(x):
    return np.maximum(x, 0.0)


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


ACTIVATIONS: dict[str, Callable] = {
    "relu": _relu,
    "tanh": np.tanh,
    "logistic": _logistic,
}

_SLOPE_VERIFIED: set[str] = set()


def slope_restriction_range(name: str, lo: float = -10.0, hi: float = 10.0,
                            step: float = 1e-3) -> tuple[float, float]:
    """(min, max) difference quotient of the activation on a dense grid."""
    f = ACTIVATIONS[name]
    x = np.arange(lo, hi + step, step)
    y = f(x)
    q = np.diff(y) / np.diff(x)
    return float(q.min()), float(q.max())


def _verify_slope(name: str) -> None:
    if name in _SLOPE_VERIFIED:
        return
    qmin, qmax = slope_restriction_range(name)
    if qmin < -1e-9 or qmax > 1.0 + 1e-9:
        raise ContractError(f"activation {name!r} is not slope-restricted in [0, 1]")
    _SLOPE_VERIFIED.add(name)


# ---------------------------------------------------------------------------
# parameters and certificate spec

@dataclass
class RenParams:
    A: Array
    B1: Array
    B2: Array
    C1: Array
    C2: Array
    D11: Array  # strictly lower triangular
    D12: Array
    D21: Array
    D22: Array
    b_x: Array
    b_v: Array
    b_y: Array
    activation: str = "relu"

    @property
    def hidden_dim(self) -> int:
        return self.A.shape[0]

    @property
    def implicit_dim(self) -> int:
        return self.D11.shape[0]

    @property
    def io_dim(self) -> int:
        return self.C2.shape[0]

    def validate(self) -> None:
        n_x, n_v, n = self.hidden_dim, self.implicit_dim, self.io_dim
        shapes = {"A": (n_x, n_x), "B1": (n_x, n_v), "B2": (n_x, n),
                  "C1": (n_v, n_x), "C2": (n, n_x), "D11": (n_v, n_v),
                  "D12": (n_v, n), "D21": (n, n_v), "D22": (n, n),
                  "b_x": (n_x,), "b_v": (n_v,), "b_y": (n,)}
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ContractError(f"REN parameter {name} has shape {arr.shape}, want {shape}")
        if np.any(np.triu(self.D11) != 0):
            raise ContractError("D11 must be strictly lower triangular")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        _verify_slope(self.activation)

    @classmethod
    def zeros(cls, n_x: int, n_v: int, n: int, activation: str = "relu") -> "RenParams":
        return cls(A=np.zeros((n_x, n_x)), B1=np.zeros((n_x, n_v)), B2=np.zeros((n_x, n)),
                   C1=np.zeros((n_v, n_x)), C2=np.zeros((n, n_x)), D11=np.zeros((n_v, n_v)),
                   D12=np.zeros((n_v, n)), D21=np.zeros((n, n_v)), D22=np.zeros((n, n)),
                   b_x=np.zeros(n_x), b_v=np.zeros(n_v), b_y=np.zeros(n),
                   activation=activation)

    @classmethod
    def init(cls, n_x: int, n_v: int, n: int, activation: str = "relu",
             scale: float = 0.05, rng: np.random.Generator | None = None) -> "RenParams":
        """Small random initialization; small enough that the default
        L2-gain certificate starts positive definite."""
        rng = rng or np.random.default_rng(0)
        p = cls.zeros(n_x, n_v, n, activation)
        for name in ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22"):
            arr = getattr(p, name)
            setattr(p, name, scale * rng.standard_normal(arr.shape))
        p.D11 = np.tril(p.D11, -1)
        p.validate()
        return p

    def matrices(self) -> dict[str, Array]:
        return {name: getattr(self, name) for name in
                ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22",
                 "b_x", "b_v", "b_y")}

    def copy(self) -> "RenParams":
        return replace(self, **{k: v.copy() for k, v in self.matrices().items()})


@dataclass
class RenIqcSpec:
    """(Q, S, R) certificate data plus the Lyapunov-type multipliers.

    The comparison function of the incremental property is never
    materialized: the certificate implies a quadratic one in the initial
    hidden-state gap, and all empirical checks use equal initial hidden
    states where it vanishes.
    """

    Q: Array
    S: Array
    R: Array
    alpha_bar: float
    P1: Array
    Lambda_w: Array  # positive diagonal, stored as a vector

    def validate(self) -> None:
        if not (0 < self.alpha_bar <= 1):
            raise ContractError("alpha_bar must lie in (0, 1]")
        if np.max(np.abs(self.Q - self.Q.T)) > 1e-10 or np.max(np.abs(self.R - self.R.T)) > 1e-10:
            raise ContractError("Q and R must be symmetric")
        if np.linalg.eigvalsh(self.Q)[-1] > 1e-10:
            raise ContractError("Q must be negative semidefinite")
        if np.linalg.eigvalsh(self.P1)[0] <= 0:
            raise ContractError("P1 must be positive definite")
        if self.Lambda_w.ndim != 1 or np.any(self.Lambda_w <= 0):
            raise ContractError("Lambda_w must be a positive diagonal (vector)")

    @classmethod
    def l2_gain(cls, gamma: float, n: int, n_x: int, n_v: int,
                alpha_bar: float = 1.0) -> "RenIqcSpec":
        """Incremental L2-gain triple: Q = -I/gamma, S = 0, R = gamma I."""
        if gamma <= 0:
            raise ContractError("gamma must be positive")
        return cls(Q=-np.eye(n) / gamma, S=np.zeros((n, n)), R=gamma * np.eye(n),
                   alpha_bar=alpha_bar, P1=np.eye(n_x), Lambda_w=np.ones(n_v))


@dataclass
class RenState:
    x_tilde: Array
    last_w: Array

    @classmethod
    def initial(cls, n_x: int, n_v: int) -> "RenState":
        return cls(np.zeros(n_x), np.zeros(n_v))


# ---------------------------------------------------------------------------
# forward dynamics

def _equilibrium_batch(params: RenParams, x_tilde: Array, x_hat: Array) -> tuple[Array, Array]:
    """Forward substitution through the strictly lower triangular implicit layer.

    x_tilde: (B, n_x), x_hat: (B, n).  Row i of w depends only on rows < i,
    so each row is explicit; reductions are per-row and independent of the
    batch size, which keeps batched and sequential evaluation bitwise equal.
    """
    sigma = ACTIVATIONS[params.activation]
    base = x_tilde @ params.C1.T + x_hat @ params.D12.T + params.b_v
    B = base.shape[0]
    n_v = params.implicit_dim
    w = np.zeros((B, n_v))
    v = np.zeros((B, n_v))
    for i in range(n_v):
        vi = base[:, i] + np.sum(w[:, :i] * params.D11[i, :i], axis=1)
        v[:, i] = vi
        w[:, i] = sigma(vi)
    return w, v


def equilibrium_solve(params: RenParams, x_tilde: Array, x_hat: Array) -> tuple[Array, Array]:
    """Solve w = sigma(D11 w + C1 x~ + D12 x^ + b_v); returns (w, v)."""
    w, v = _equilibrium_batch(params, np.asarray(x_tilde, float)[None, :],
                              np.asarray(x_hat, float)[None, :])
    return w[0], v[0]


def ren_step(params: RenParams, state: RenState, x_hat: Array) -> tuple[RenState, Array]:
    """One step: hidden update and learned-disturbance output."""
    x_hat = np.asarray(x_hat, float)
    w, _v = equilibrium_solve(params, state.x_tilde, x_hat)
    x_next = params.A @ state.x_tilde + params.B1 @ w + params.B2 @ x_hat + params.b_x
    delta_hat = params.C2 @ state.x_tilde + params.D21 @ w + params.D22 @ x_hat + params.b_y
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(delta_hat))):
        raise NumericalError("non-finite REN step")
    return RenState(x_next, w), delta_hat


def ren_rollout_batch(params: RenParams, x_tilde0: Array, inputs: Array) -> Array:
    """Outputs for a batch of input sequences; inputs (B, T, n), returns (B, T, n)."""
    B, T, n = inputs.shape
    x_tilde = np.broadcast_to(np.asarray(x_tilde0, float), (B, params.hidden_dim)).copy()
    out = np.zeros((B, T, params.io_dim))
    for t in range(T):
        u = inputs[:, t, :]
        w, _ = _equilibrium_batch(params, x_tilde, u)
        out[:, t, :] = x_tilde @ params.C2.T + w @ params.D21.T + u @ params.D22.T + params.b_y
        x_tilde = x_tilde @ params.A.T + w @ params.B1.T + u @ params.B2.T + params.b_x
    return out


# ---------------------------------------------------------------------------
# certificate

def iqc_certificate_matrix(params: RenParams, spec: RenIqcSpec) -> Array:
    """Left-hand side of the incremental certificate, size n_x + n_v + n.

    Printed blocks minus the P1 quadratic term plus the Q quadratic term;
    positive definiteness (together with F > 0, its own (2,2) block)
    certifies the (Q, S, R) incremental property and well-posedness.
    """
    n_x, n_v, n = params.hidden_dim, params.implicit_dim, params.io_dim
    q_dim = spec.Q.shape[0]
    if q_dim != n or spec.S.shape != (n, q_dim) or spec.R.shape != (n, n):
        raise ContractError("certificate (Q, S, R) dimensions do not conform")
    if spec.P1.shape != (n_x, n_x) or spec.Lambda_w.shape != (n_v,):
        raise ContractError("certificate multiplier dimensions do not conform")
    Lam = np.diag(spec.Lambda_w)
    F = 2.0 * Lam - Lam @ params.D11 - params.D11.T @ Lam
    top = np.block([
        [spec.alpha_bar ** 2 * spec.P1, -params.C1.T @ Lam, params.C2.T @ spec.S.T],
        [-Lam @ params.C1, F, params.D21.T @ spec.S.T - Lam @ params.D12],
        [spec.S @ params.C2, spec.S @ params.D21 - params.D12.T @ Lam,
         spec.R + spec.S @ params.D22 + params.D22.T @ spec.S.T],
    ])
    stack_ab = np.vstack([params.A.T, params.B1.T, params.B2.T])
    stack_c = np.vstack([params.C2.T, params.D21.T, params.D22.T])
    M = top - stack_ab @ spec.P1 @ stack_ab.T + stack_c @ spec.Q @ stack_c.T
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class CertificateReport:
    certified: bool
    min_eig: float
    min_eig_F: float


def check_iqc(params: RenParams, spec: RenIqcSpec, tol_psd: float = TOL_PSD) -> CertificateReport:
    params.validate()
    spec.validate()
    M = iqc_certificate_matrix(params, spec)
    Lam = np.diag(spec.Lambda_w)
    F = 2.0 * Lam - Lam @ params.D11 - params.D11.T @ Lam
    min_eig = float(np.linalg.eigvalsh(M)[0])
    min_eig_F = float(np.linalg.eigvalsh(F)[0])
    return CertificateReport(min_eig > tol_psd and min_eig_F > tol_psd, min_eig, min_eig_F)


def empirical_iqc_margin(params: RenParams, spec: RenIqcSpec, num_pairs: int = 100,
                         horizon: int = 50, input_scale: float = 1.0,
                         rng: np.random.Generator | None = None) -> float:
    """Worst partial sum of the (Q, S, R) quadratic over random input pairs.

    Both trajectories share the initial hidden state, so the comparison
    term vanishes and a certified network must return a value >= -1e-9.
    """
    rng = rng or np.random.default_rng(0)
    n = params.io_dim
    ua = input_scale * rng.standard_normal((num_pairs, horizon, n))
    ub = input_scale * rng.standard_normal((num_pairs, horizon, n))
    x0 = np.zeros(params.hidden_dim)
    ya = ren_rollout_batch(params, x0, ua)
    yb = ren_rollout_batch(params, x0, ub)
    dy = ya - yb
    du = ua - ub
    quad = (np.einsum("bti,ij,btj->bt", dy, spec.Q, dy)
            + 2.0 * np.einsum("bti,ij,btj->bt", du, spec.S, dy)
            + np.einsum("bti,ij,btj->bt", du, spec.R, du))
    partial = np.cumsum(quad, axis=1)
    return float(partial.min())


# ---------------------------------------------------------------------------
# training

@dataclass
class TrajectoryBatch:
    """One replay sequence: recorded REN inputs, prediction anchors, targets.

    x_hat[tau] is the recorded virtual state fed to the network, x_nom[tau]
    the nominal-dynamics part of that step, and x_next[tau] the realized
    actual state; the prediction is x_nom[tau] + delta_hat[tau].
    """

    x_hat: Array     # (T, n)
    x_next: Array    # (T, n)
    x_nom: Array     # (T, n)
    x_tilde0: Array  # (n_x,)


@dataclass
class TrainStepResult:
    params: RenParams
    spec: RenIqcSpec
    loss: float
    penalty: float
    ok: bool


_TRAIN_FIELDS = ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22",
                 "b_x", "b_v", "b_y")


def training_objective(params: RenParams, spec: RenIqcSpec, batch: Sequence[TrajectoryBatch],
                       lam_pen: float, tol_psd: float = TOL_PSD) -> tuple[float, float]:
    """Numpy value of (loss, penalty); the finite-difference reference."""
    if not batch:
        raise ContractError("batch must be nonempty")
    total = 0.0
    count = 0
    n = params.io_dim
    for sample in batch:
        state = RenState(np.asarray(sample.x_tilde0, float), np.zeros(params.implicit_dim))
        T = sample.x_hat.shape[0]
        for tau in range(T):
            state, delta = ren_step(params, state, sample.x_hat[tau])
            pred = sample.x_nom[tau] + delta
            total += float(np.sum((sample.x_next[tau] - pred) ** 2))
        count += T
    loss = total / (n * count)
    penalty = 0.0
    if lam_pen > 0:
        min_eig = float(np.linalg.eigvalsh(iqc_certificate_matrix(params, spec))[0])
        penalty = lam_pen * max(0.0, tol_psd - min_eig) ** 2
    return loss, penalty


def _torch_tensors(params: RenParams, spec: RenIqcSpec):
    import torch

    t = {name: torch.tensor(getattr(params, name), dtype=torch.float64, requires_grad=True)
         for name in _TRAIN_FIELDS}
    P1_core = spec.P1 - P1_SHIFT * np.eye(spec.P1.shape[0])
    L = np.linalg.cholesky(P1_core)
    t["L"] = torch.tensor(L, dtype=torch.float64, requires_grad=True)
    t["d"] = torch.tensor(np.log(spec.Lambda_w), dtype=torch.float64, requires_grad=True)
    return t


def _torch_objective(t: dict, params: RenParams, spec: RenIqcSpec,
                     batch: Sequence[TrajectoryBatch], lam_pen: float, tol_psd: float):
    import torch

    n_x, n_v, n = params.hidden_dim, params.implicit_dim, params.io_dim
    mask = torch.tensor(np.tril(np.ones((n_v, n_v)), -1), dtype=torch.float64)
    D11 = t["D11"] * mask
    act = {"relu": torch.relu, "tanh": torch.tanh, "logistic": torch.sigmoid}[params.activation]

    total = torch.zeros((), dtype=torch.float64)
    count = 0
    for sample in batch:
        x_tilde = torch.tensor(sample.x_tilde0, dtype=torch.float64)
        T = sample.x_hat.shape[0]
        xh = torch.tensor(sample.x_hat, dtype=torch.float64)
        xn = torch.tensor(sample.x_next, dtype=torch.float64)
        xm = torch.tensor(sample.x_nom, dtype=torch.float64)
        for tau in range(T):
            u = xh[tau]
            base = t["C1"] @ x_tilde + t["D12"] @ u + t["b_v"]
            rows = []
            for i in range(n_v):
                vi = base[i]
                if i > 0:
                    vi = vi + D11[i, :i] @ torch.stack(rows)
                rows.append(act(vi))
            w = torch.stack(rows)
            delta = t["C2"] @ x_tilde + t["D21"] @ w + t["D22"] @ u + t["b_y"]
            x_tilde = t["A"] @ x_tilde + t["B1"] @ w + t["B2"] @ u + t["b_x"]
            total = total + torch.sum((xn[tau] - (xm[tau] + delta)) ** 2)
        count += T
    loss = total / (n * count)

    penalty = torch.zeros((), dtype=torch.float64)
    if lam_pen > 0:
        P1 = t["L"] @ t["L"].T + P1_SHIFT * torch.eye(n_x, dtype=torch.float64)
        Lam = torch.diag(torch.exp(t["d"]))
        Q = torch.tensor(spec.Q, dtype=torch.float64)
        S = torch.tensor(spec.S, dtype=torch.float64)
        R = torch.tensor(spec.R, dtype=torch.float64)
        F = 2.0 * Lam - Lam @ D11 - D11.T @ Lam
        top = torch.cat([
            torch.cat([spec.alpha_bar ** 2 * P1, -t["C1"].T @ Lam, t["C2"].T @ S.T], dim=1),
            torch.cat([-Lam @ t["C1"], F, t["D21"].T @ S.T - Lam @ t["D12"]], dim=1),
            torch.cat([S @ t["C2"], S @ t["D21"] - t["D12"].T @ Lam,
                       R + S @ t["D22"] + t["D22"].T @ S.T], dim=1),
        ], dim=0)
        stack_ab = torch.cat([t["A"].T, t["B1"].T, t["B2"].T], dim=0)
        stack_c = torch.cat([t["C2"].T, t["D21"].T, t["D22"].T], dim=0)
        M = top - stack_ab @ P1 @ stack_ab.T + stack_c @ Q @ stack_c.T
        M = 0.5 * (M + M.T)
        min_eig = torch.linalg.eigvalsh(M)[0]
        gap = torch.clamp(tol_psd - min_eig, min=0.0)
        penalty = lam_pen * gap ** 2
    return loss, penalty


def training_gradients(params: RenParams, spec: RenIqcSpec, batch: Sequence[TrajectoryBatch],
                       lam_pen: float, tol_psd: float = TOL_PSD):
    """(loss, penalty, grads) via autodiff; grads keyed like the trainable tensors."""
    import torch

    t = _torch_tensors(params, spec)
    loss, penalty = _torch_objective(t, params, spec, batch, lam_pen, tol_psd)
    (loss + penalty).backward()
    grads = {name: tt.grad.detach().numpy().copy() if tt.grad is not None
             else np.zeros(tt.shape) for name, tt in t.items()}
    return float(loss.item()), float(penalty.item()), grads


def train_step(params: RenParams, spec: RenIqcSpec, batch: Sequence[TrajectoryBatch],
               lr: float, lam_pen: float, tol_psd: float = TOL_PSD,
               clip: float = GRAD_CLIP) -> TrainStepResult:
    """One clipped gradient-descent step on loss + certificate penalty.

    Returns the updated parameters together with the updated certificate
    multipliers (P1, Lambda_w are trained through positivity-preserving
    reparameterizations, so the spec object is refreshed too).  A
    non-finite objective aborts the step and returns the inputs unchanged.
    """
    if lr <= 0 or lam_pen < 0:
        raise ContractError("lr must be positive and lam_pen nonnegative")
    if not batch:
        raise ContractError("batch must be nonempty")
    loss, penalty, grads = training_gradients(params, spec, batch, lam_pen, tol_psd)
    if not (math.isfinite(loss) and math.isfinite(penalty)):
        return TrainStepResult(params, spec, loss, penalty, ok=False)
    norm = math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    scale = lr * (clip / norm if norm > clip else 1.0)

    new = params.copy()
    for name in _TRAIN_FIELDS:
        setattr(new, name, getattr(new, name) - scale * grads[name])
    new.D11 = np.tril(new.D11, -1)

    P1_core = spec.P1 - P1_SHIFT * np.eye(spec.P1.shape[0])
    L = np.linalg.cholesky(P1_core) - scale * grads["L"]
    d = np.log(spec.Lambda_w) - scale * grads["d"]
    new_spec = replace(spec, P1=L @ L.T + P1_SHIFT * np.eye(L.shape[0]), Lambda_w=np.exp(d))
    return TrainStepResult(new, new_spec, loss, penalty, ok=True)


# ---------------------------------------------------------------------------
# replay-window trainer used by the simulation loop

@dataclass
class ReplayRecord:
    x_hat: Array
    x_tilde: Array
    x_nom: Array
    x_next: Array


class OnlineTrainer:
    """Sliding replay window (one epoch by default) trained once per step."""

    def __init__(self, params: RenParams, spec: RenIqcSpec, lr: float, lam_pen: float,
                 window: int = 20):
        params.validate()
        spec.validate()
        self.params = params
        self.spec = spec
        self.lr = lr
        self.lam_pen = lam_pen
        self.window = window
        self._records: list[ReplayRecord] = []
        import torch  # pay the import at construction, not inside the timed loop

        torch.zeros(1)

    def record(self, x_hat: Array, x_tilde: Array, x_nom: Array, x_next: Array) -> None:
        self._records.append(ReplayRecord(np.asarray(x_hat, float), np.asarray(x_tilde, float),
                                          np.asarray(x_nom, float), np.asarray(x_next, float)))
        if len(self._records) > self.window:
            self._records.pop(0)

    def batch(self) -> list[TrajectoryBatch]:
        if not self._records:
            return []
        recs = self._records
        return [TrajectoryBatch(
            x_hat=np.stack([r.x_hat for r in recs]),
            x_next=np.stack([r.x_next for r in recs]),
            x_nom=np.stack([r.x_nom for r in recs]),
            x_tilde0=recs[0].x_tilde,
        )]

    def step(self) -> TrainStepResult | None:
        batch = self.batch()
        if not batch:
            return None
        result = train_step(self.params, self.spec, batch, self.lr, self.lam_pen)
        if result.ok:
            self.params = result.params
            self.spec = result.spec
        return result


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path: str, params: RenParams, spec: RenIqcSpec) -> None:
    """Flat key -> matrix structured file (row-major nested lists)."""
    payload = {"activation": params.activation,
               "hidden_dim": params.hidden_dim,
               "implicit_dim": params.implicit_dim,
               "io_dim": params.io_dim,
               "alpha_bar": float(spec.alpha_bar)}
    for name, arr in params.matrices().items():
        payload[name] = np.asarray(arr, float).tolist()
    for name, arr in (("Q", spec.Q), ("S", spec.S), ("R", spec.R),
                      ("P1", spec.P1), ("Lambda_w", spec.Lambda_w)):
        payload[name] = np.asarray(arr, float).tolist()
    with open(path, "w") as fh:
        yaml.safe_dump(payload, fh, sort_keys=True)


def load_checkpoint(path: str) -> tuple[RenParams, RenIqcSpec]:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    fields = {name: np.asarray(data[name], float) for name in _TRAIN_FIELDS}
    params = RenParams(activation=data["activation"], **fields)
    spec = RenIqcSpec(Q=np.asarray(data["Q"], float), S=np.asarray(data["S"], float),
                      R=np.asarray(data["R"], float), alpha_bar=float(data["alpha_bar"]),
                      P1=np.asarray(data["P1"], float),
                      Lambda_w=np.asarray(data["Lambda_w"], float))
    params.validate()
    spec.validate()
    return params, spec
