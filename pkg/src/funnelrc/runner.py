"""Closed-loop orchestration: per-step window synthesis, online REN training,
actual/virtual stepping, funnel bookkeeping, trace persistence.

Per step t the loop (1) solves the sliding-window program for K_t,
(2) takes one REN gradient step on the replay window, (3) steps the actual
plant with u_r = ubar + K (x - xbar) and the virtual plant with the same
gain fed the virtual state, (4) refreshes the learned disturbance from the
new virtual state, and (5) recomputes the funnel level and records the row.
The nominal trajectory is planned once in the first epoch and held at the
terminal equilibrium afterwards; epoch boundaries apply the scenario
resets to both systems.

trace.csv holds only deterministic columns so identical seeded runs are
byte-identical; wall-times go to timings.csv and aggregate into
metrics.json.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from . import conic, microgrid, plant as plant_mod, ren, synthesis
from .errors import ConfigError, ContractError, NumericalError

Array = np.ndarray

FLAG_HOLD = "HOLD_GAIN"
FLAG_UNCERTIFIED = "UNCERTIFIED"
FLAG_NUMERICAL = "NUMERICAL"

TRACE_NAME = "trace.csv"
TIMINGS_NAME = "timings.csv"
METRICS_NAME = "metrics.json"
SOLUTIONS_NAME = "solutions.npz"
CHECKPOINT_NAME = "checkpoint.yaml"
CONFIG_SNAPSHOT_NAME = "config.snapshot.yaml"


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RenSettings:
    hidden_dim: int = 16
    implicit_dim: int = 16
    activation: str = "relu"
    lr: float = 1e-3
    lambda_pen: float = 1.0
    replay_window: int = 20
    gamma: float = 2.0
    alpha_bar: float = 0.95
    init_scale: float = 0.05


@dataclass
class SynthSettings:
    alpha: float = 0.9
    gamma2: float = 3.0
    weights: synthesis.Weights = field(default_factory=synthesis.Weights)
    r0: float = 1.0
    r_f: float = 1.0
    p_i_floor: float = 1e-4
    p_f_scale: float = 1.0
    window: int = 1
    delta_prior: float = 0.15
    delta_inflation: float = 1.1
    resolve_twice: bool = False
    eps_psd: float = synthesis.EPS_PSD_DEFAULT
    backend: str = "clarabel"
    solver_tol: float = 1e-8


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/out"
    plant: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    x_start: Array = field(default_factory=lambda: np.zeros(8))
    ren: RenSettings = field(default_factory=RenSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    num_epochs: int | None = None  # override for the scenario/spec epoch count

    def validate(self) -> None:
        if not (0 < self.synth.alpha <= 1):
            raise ConfigError("alpha must lie in (0, 1]")
        if self.synth.gamma2 <= 0:
            raise ConfigError("gamma2 must be positive")
        try:
            self.synth.weights.validate(online=True)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
        if self.ren.lr <= 0 or self.ren.lambda_pen < 0:
            raise ConfigError("ren.lr must be positive and ren.lambda_pen nonnegative")
        if self.synth.delta_prior <= 0:
            raise ConfigError("delta_prior must be positive (funnel bootstrap bound)")
        if self.synth.window < 1:
            raise ConfigError("window must be at least 1")

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        cfg = dict(cfg)
        ren_cfg = RenSettings(**cfg.pop("ren", {}))
        synth_cfg = dict(cfg.pop("synthesis", {}))
        weights = synthesis.Weights(**synth_cfg.pop("weights", {}))
        synth = SynthSettings(weights=weights, **synth_cfg)
        x_start = np.asarray(cfg.pop("x_start", np.zeros(8)), float)
        known = {"seed", "out_dir", "plant", "scenario", "num_epochs"}
        bad = set(cfg) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        rc = cls(seed=int(cfg.get("seed", 0)), out_dir=str(cfg.get("out_dir", "runs/out")),
                 plant=cfg.get("plant", {}), scenario=cfg.get("scenario", {}),
                 x_start=x_start, ren=ren_cfg, synth=synth,
                 num_epochs=cfg.get("num_epochs"))
        rc.validate()
        return rc

    @classmethod
    def from_yaml(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "out_dir": self.out_dir, "plant": self.plant,
               "scenario": self.scenario, "x_start": np.asarray(self.x_start).tolist(),
               "ren": asdict(self.ren), "num_epochs": self.num_epochs}
        synth = asdict(self.synth)
        synth["weights"] = asdict(self.synth.weights)
        out["synthesis"] = synth
        return out


# ---------------------------------------------------------------------------
# trace

TRACE_SCALARS = ["funnel_sample_virtual", "funnel_sample_actual", "inv_r", "k", "ren_loss"]


@dataclass
class SimTrace:
    n: int
    m: int
    t: list[int] = field(default_factory=list)
    x: list[Array] = field(default_factory=list)
    x_hat: list[Array] = field(default_factory=list)
    u_r: list[Array] = field(default_factory=list)
    u_hat_r: list[Array] = field(default_factory=list)
    delta: list[Array] = field(default_factory=list)
    delta_hat: list[Array] = field(default_factory=list)
    funnel_sample_virtual: list[float] = field(default_factory=list)
    funnel_sample_actual: list[float] = field(default_factory=list)
    inv_r: list[float] = field(default_factory=list)
    k: list[float] = field(default_factory=list)
    ren_loss: list[float] = field(default_factory=list)
    synth_ms: list[float] = field(default_factory=list)
    train_ms: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def header(self) -> list[str]:
        cols = ["t"]
        for name, dim in [("x", self.n), ("x_hat", self.n), ("u_r", self.m),
                          ("u_hat_r", self.m), ("delta", self.n), ("delta_hat", self.n)]:
            cols += [f"{name}_{i}" for i in range(dim)]
        cols += TRACE_SCALARS + ["flags"]
        return cols

    def row(self, i: int) -> list[str]:
        vals: list[str] = [str(self.t[i])]
        for arr in (self.x[i], self.x_hat[i], self.u_r[i], self.u_hat_r[i],
                    self.delta[i], self.delta_hat[i]):
            vals += [repr(float(v)) for v in arr]
        vals += [repr(float(getattr(self, name)[i])) for name in TRACE_SCALARS]
        vals.append(self.flags[i])
        return vals

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for i in range(len(self.t)):
                w.writerow(self.row(i))

    def write_timings(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "synth_ms", "train_ms"])
            for i in range(len(self.t)):
                w.writerow([self.t[i], repr(float(self.synth_ms[i])),
                            repr(float(self.train_ms[i]))])

    def flags_raised(self) -> list[str]:
        raised: list[str] = []
        for f in self.flags:
            for part in f.split(";"):
                if part and part not in raised:
                    raised.append(part)
        return raised


def read_trace(path: str) -> dict[str, Array]:
    """Trace CSV -> column arrays (vector groups re-stacked)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = {name: [] for name in header}
    for row in rows:
        for name, val in zip(header, row):
            cols[name].append(val)
    out: dict[str, Array] = {"flags": np.asarray(cols["flags"], dtype=object)}
    out["t"] = np.asarray(cols["t"], int)
    groups = {}
    for name in header:
        if "_" in name and name.rsplit("_", 1)[1].isdigit():
            base = name.rsplit("_", 1)[0]
            groups.setdefault(base, []).append(name)
    for base, names in groups.items():
        names.sort(key=lambda s: int(s.rsplit("_", 1)[1]))
        out[base] = np.asarray([[float(v) for v in cols[nm]] for nm in names]).T
    for name in TRACE_SCALARS:
        out[name] = np.asarray([float(v) for v in cols[name]])
    return out


# ---------------------------------------------------------------------------
# run

def _build_plant_and_scenario(config: RunConfig):
    plant_cfg = dict(config.plant) if config.plant else {"kind": "microgrid"}
    if plant_cfg.get("kind", "microgrid") != "microgrid":
        raise ConfigError("the closed-loop runner drives the microgrid benchmark")
    mg_cfg = dict(plant_cfg.get("microgrid", {}))
    if config.num_epochs is not None:
        mg_cfg["num_epochs"] = int(config.num_epochs)
    spec = microgrid.MicrogridSpec.from_dict(mg_cfg)
    model = microgrid.build_plant(spec)
    scen_cfg = dict(config.scenario)
    if scen_cfg:
        if config.num_epochs is not None:
            arrays = {k: np.asarray(v, float) for k, v in scen_cfg.items()
                      if k in ("bias", "amplitude", "omega", "reset_offsets")}
            e = spec.num_epochs
            scen_cfg.update({
                "bias": arrays["bias"][:e], "amplitude": arrays["amplitude"][:e],
                "omega": arrays["omega"][:e],
                "reset_offsets": arrays["reset_offsets"][:max(e - 1, 0)]})
        scenario = microgrid.AttackScenario.from_dict(scen_cfg, spec)
    else:
        scenario = microgrid.AttackScenario(
            num_dgs=spec.num_dgs, sampling_period=spec.sampling_period,
            epoch_steps=spec.epoch_steps, num_epochs=spec.num_epochs,
            reset_offsets=np.zeros((spec.num_epochs - 1, spec.num_dgs)),
            bias=np.zeros(spec.num_epochs), amplitude=np.zeros(spec.num_epochs),
            omega=np.zeros(spec.num_epochs))
    return spec, model, scenario


def run(config: RunConfig, write_outputs: bool = True) -> tuple[SimTrace, dict]:
    """Execute the full epoch-structured recovery scenario."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    spec, model, scenario = _build_plant_and_scenario(config)
    n, m = model.n, model.m
    N = spec.horizon
    syn = config.synth
    x_start = np.asarray(config.x_start, float)
    if x_start.shape != (n,):
        raise ConfigError(f"x_start must have length {n}")

    # nominal: planned over the first epoch, held at the equilibrium afterwards
    plan = microgrid.nominal_trajectory(model, x_start, np.zeros(n), spec.epoch_steps)
    traj = microgrid.extend_nominal(plan, model, N)
    traj.check_polytope_membership(model)
    data = synthesis.HorizonData.from_plant(model, traj)

    params = ren.RenParams.init(config.ren.hidden_dim, config.ren.implicit_dim, n,
                                config.ren.activation, config.ren.init_scale, rng)
    iqc_spec = ren.RenIqcSpec.l2_gain(config.ren.gamma, n, config.ren.hidden_dim,
                                      config.ren.implicit_dim, config.ren.alpha_bar)
    trainer = ren.OnlineTrainer(params, iqc_spec, config.ren.lr, config.ren.lambda_pen,
                                config.ren.replay_window)
    options = synthesis.SynthesisOptions(
        eps_psd=syn.eps_psd,
        solver=conic.SolverOptions(backend=syn.backend, tol=syn.solver_tol))

    trace = SimTrace(n=n, m=m)
    sol_store = {"P": [], "Y": [], "K": [], "nu": [], "r_solved": [], "inv_r": [],
                 "k": [], "hold": []}
    reset_steps = set(scenario.reset_steps())

    x = x_start.copy()
    x_hat = x_start.copy()
    ren_state = ren.RenState.initial(config.ren.hidden_dim, config.ren.implicit_dim)
    pending_hidden = ren_state.x_tilde.copy()
    pending_input = x_hat.copy()
    ren_state, delta_hat = ren.ren_step(trainer.params, ren_state, x_hat)
    run_max = float(np.linalg.norm(delta_hat))
    prev = None
    truncated = False

    for t in range(N):
        flags: list[str] = []
        if t in reset_steps:
            kick = scenario.reset_vector(scenario.reset_steps().index(t))
            x = x + kick
            x_hat = x_hat + kick
            run_max = 0.0  # fresh epoch: bound re-bootstraps from the prior
            pending_hidden = ren_state.x_tilde.copy()
            pending_input = x_hat.copy()
            ren_state, delta_hat = ren.ren_step(trainer.params, ren_state, x_hat)
            run_max = max(run_max, float(np.linalg.norm(delta_hat)))

        bound = max(syn.delta_prior, syn.delta_inflation * run_max)
        rbar = min(1.0 / (syn.gamma2 * bound ** 2), synthesis.RBAR_CAP)
        eta_hat = x_hat - traj.states[t]
        P_i = np.outer(eta_hat, eta_hat) + syn.p_i_floor * np.eye(n)
        P_f = syn.p_f_scale * np.eye(n)
        t2 = min(t + syn.window, N)

        t0 = time.perf_counter()
        sol = synthesis.solve_online(data, t, t2, syn.weights, syn.gamma2, syn.alpha,
                                     rbar, P_i, P_f, options)
        if syn.resolve_twice and sol.ok:
            sol = synthesis.solve_online(data, t, t2, syn.weights, syn.gamma2, syn.alpha,
                                         rbar, P_i, P_f, options, warm_start=sol)
        synth_ms = (time.perf_counter() - t0) * 1e3

        if sol.ok:
            K_t, P_t = sol.K[0], sol.P[0]
            nu_t = sol.nu[0]
            inv_r_solved = sol.inv_r[0]
            k_t = sol.k[0]
            r_solved = sol.r_solved[0]
            prev = (K_t, P_t, nu_t, inv_r_solved, k_t, r_solved)
        elif prev is not None:
            flags.append(FLAG_HOLD)
            K_t, P_t, nu_t, inv_r_solved, k_t, r_solved = prev
        else:
            flags.append(FLAG_NUMERICAL)
            truncated = True
            _append_row(trace, t, x, x_hat, np.zeros(m), np.zeros(m), scenario.delta_at(t),
                        delta_hat, math.nan, math.nan, math.nan, math.nan, math.nan,
                        synth_ms, 0.0, flags)
            break

        t0 = time.perf_counter()
        result = trainer.step()
        train_ms = (time.perf_counter() - t0) * 1e3
        if result is None:
            ren_loss = math.nan
        else:
            ren_loss = result.loss
            if not result.ok:
                flags.append(FLAG_NUMERICAL)

        x_bar_t, u_bar_t = traj.states[t], traj.inputs[t]
        u_r = u_bar_t + K_t @ (x - x_bar_t)
        u_hat_r = u_bar_t + K_t @ (x_hat - x_bar_t)
        delta_t = scenario.delta_at(t)
        try:
            x_next = plant_mod.actual_step(model, t, x, u_r, delta_t)
            x_hat_next = plant_mod.virtual_step(model, t, x_hat, u_hat_r, delta_hat,
                                                traj.A[t], traj.B[t])
        except NumericalError:
            flags.append(FLAG_NUMERICAL)
            truncated = True
            _append_row(trace, t, x, x_hat, u_r, u_hat_r, delta_t, delta_hat,
                        math.nan, math.nan, math.nan, math.nan, ren_loss,
                        synth_ms, train_ms, flags)
            break
        x_nom_part = x_hat_next - delta_hat
        delta_hat_used = delta_hat

        trainer.record(pending_input, pending_hidden, x_nom_part, x_next)

        fs_virtual = synthesis.funnel_sample(x_hat - x_bar_t, P_t)
        fs_actual = synthesis.funnel_sample(x - x_bar_t, P_t)

        pending_hidden = ren_state.x_tilde.copy()
        pending_input = x_hat_next.copy()
        ren_state, delta_hat = ren.ren_step(trainer.params, ren_state, x_hat_next)
        run_max = max(run_max, float(np.linalg.norm(delta_hat)))
        bound_new = max(syn.delta_prior, syn.delta_inflation * run_max)
        inv_r_rec = max(inv_r_solved,
                        synthesis.funnel_radius(k_t, syn.gamma2, bound_new,
                                                "online-pointwise"))

        _append_row(trace, t, x, x_hat, u_r, u_hat_r, delta_t, delta_hat_used,
                    fs_virtual, fs_actual, inv_r_rec, k_t, ren_loss, synth_ms, train_ms, flags)
        sol_store["P"].append(P_t)
        sol_store["Y"].append(K_t @ P_t)
        sol_store["K"].append(K_t)
        sol_store["nu"].append(nu_t)
        sol_store["r_solved"].append(r_solved)
        sol_store["inv_r"].append(inv_r_rec)
        sol_store["k"].append(k_t)
        sol_store["hold"].append(FLAG_HOLD in flags)
        x, x_hat = x_next, x_hat_next

    report = ren.check_iqc(trainer.params, trainer.spec)
    if not report.certified and trace.flags:
        trace.flags[-1] = _merge_flags(trace.flags[-1], FLAG_UNCERTIFIED)

    metrics = _metrics(trace, spec, scenario, report, sol_store, truncated)
    if write_outputs:
        _write_outputs(config, trace, metrics, sol_store, traj, trainer)
    return trace, metrics


def _append_row(trace: SimTrace, t, x, x_hat, u_r, u_hat_r, delta, delta_hat,
                fs_virtual, fs_actual, inv_r, k, ren_loss, synth_ms, train_ms, flags):
    trace.t.append(t)
    trace.x.append(np.asarray(x, float).copy())
    trace.x_hat.append(np.asarray(x_hat, float).copy())
    trace.u_r.append(np.asarray(u_r, float).copy())
    trace.u_hat_r.append(np.asarray(u_hat_r, float).copy())
    trace.delta.append(np.asarray(delta, float).copy())
    trace.delta_hat.append(np.asarray(delta_hat, float).copy())
    trace.funnel_sample_virtual.append(float(fs_virtual))
    trace.funnel_sample_actual.append(float(fs_actual))
    trace.inv_r.append(float(inv_r))
    trace.k.append(float(k))
    trace.ren_loss.append(float(ren_loss))
    trace.synth_ms.append(float(synth_ms))
    trace.train_ms.append(float(train_ms))
    trace.flags.append(";".join(flags))


def _merge_flags(existing: str, new: str) -> str:
    parts = [p for p in existing.split(";") if p]
    if new not in parts:
        parts.append(new)
    return ";".join(parts)


def _metrics(trace: SimTrace, spec, scenario, report, sol_store, truncated) -> dict:
    steps = len(trace.t)
    v_idx = slice(0, 2 * spec.num_dgs, 2)
    if steps:
        tail = np.stack(trace.x[-min(5, steps):])
        final_voltage_band = float(np.max(np.abs(tail[:, v_idx])))
        final_funnel = float(trace.funnel_sample_virtual[-1])
    else:
        final_voltage_band = math.nan
        final_funnel = math.nan
    table = [[int(trace.t[i]), float(np.linalg.eigvalsh(sol_store["P"][i])[0]),
              float(sol_store["r_solved"][i]), float(sol_store["k"][i]),
              float(trace.synth_ms[i])] for i in range(len(sol_store["P"]))]
    return {
        "epochs": spec.num_epochs,
        "steps": steps,
        "mean_synth_ms": float(np.mean(trace.synth_ms)) if steps else math.nan,
        "max_synth_ms": float(np.max(trace.synth_ms)) if steps else math.nan,
        "mean_train_ms": float(np.mean(trace.train_ms)) if steps else math.nan,
        "max_train_ms": float(np.max(trace.train_ms)) if steps else math.nan,
        "final_voltage_band": final_voltage_band,
        "final_funnel_sample": final_funnel,
        "certified": bool(report.certified),
        "certificate_min_eig": float(report.min_eig),
        "certificate_min_eig_F": float(report.min_eig_F),
        "flags_raised": trace.flags_raised(),
        "truncated": truncated,
        "reset_times_s": scenario.reset_times_s(),
        "synthesis_table": table,
    }


def _write_outputs(config: RunConfig, trace: SimTrace, metrics: dict, sol_store,
                   traj, trainer) -> None:
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    trace.write_csv(os.path.join(out, TRACE_NAME))
    trace.write_timings(os.path.join(out, TIMINGS_NAME))
    with open(os.path.join(out, METRICS_NAME), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    np.savez(os.path.join(out, SOLUTIONS_NAME),
             P=np.stack(sol_store["P"]) if sol_store["P"] else np.zeros((0,)),
             Y=np.stack(sol_store["Y"]) if sol_store["Y"] else np.zeros((0,)),
             K=np.stack(sol_store["K"]) if sol_store["K"] else np.zeros((0,)),
             nu=np.asarray(sol_store["nu"]),
             r_solved=np.asarray(sol_store["r_solved"]),
             inv_r=np.asarray(sol_store["inv_r"]),
             k=np.asarray(sol_store["k"]),
             hold=np.asarray(sol_store["hold"], bool),
             xbar=traj.states, ubar=traj.inputs)
    ren.save_checkpoint(os.path.join(out, CHECKPOINT_NAME), trainer.params, trainer.spec)
    with open(os.path.join(out, CONFIG_SNAPSHOT_NAME), "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)


# ---------------------------------------------------------------------------
# verify

@dataclass
class VerifyReport:
    checks: dict[str, bool]
    details: dict[str, str]
    flags_raised: list[str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values()) and not self.flags_raised


def verify(run_dir: str, tol: float = 1e-9) -> VerifyReport:
    """Re-run the invariant suites against a recorded run directory."""
    cols = read_trace(os.path.join(run_dir, TRACE_NAME))
    sols = np.load(os.path.join(run_dir, SOLUTIONS_NAME))
    with open(os.path.join(run_dir, CONFIG_SNAPSHOT_NAME)) as fh:
        config = RunConfig.from_dict(yaml.safe_load(fh))
    with open(os.path.join(run_dir, METRICS_NAME)) as fh:
        metrics = json.load(fh)
    spec, model, scenario = _build_plant_and_scenario(config)
    xbar, ubar = sols["xbar"], sols["ubar"]
    P, Y, K = sols["P"], sols["Y"], sols["K"]
    hold = sols["hold"]
    inv_r = sols["inv_r"]
    steps = len(cols["t"])
    checks: dict[str, bool] = {}
    details: dict[str, str] = {}

    checks["monotone-time"] = bool(np.all(np.diff(cols["t"]) == 1))
    legal = {FLAG_HOLD, FLAG_UNCERTIFIED, FLAG_NUMERICAL}
    flags_raised = []
    ok_flags = True
    for f in cols["flags"]:
        for part in str(f).split(";"):
            if part:
                flags_raised.append(part)
                ok_flags &= part in legal
    checks["flags-legal"] = ok_flags

    worst_gain = 0.0
    worst_contain = -math.inf
    worst_fs = 0.0
    worst_ky = 0.0
    worst_dmi = math.inf
    ok_poly = True
    A0, B0 = model.linear
    for i in range(steps):
        t = int(cols["t"][i])
        u_expect = ubar[t] + K[i] @ (cols["x"][i] - xbar[t])
        uh_expect = ubar[t] + K[i] @ (cols["x_hat"][i] - xbar[t])
        worst_gain = max(worst_gain,
                         float(np.max(np.abs(u_expect - cols["u_r"][i]))),
                         float(np.max(np.abs(uh_expect - cols["u_hat_r"][i]))))
        fsv = synthesis.funnel_sample(cols["x_hat"][i] - xbar[t], P[i])
        fsa = synthesis.funnel_sample(cols["x"][i] - xbar[t], P[i])
        worst_fs = max(worst_fs, abs(fsv - cols["funnel_sample_virtual"][i]),
                       abs(fsa - cols["funnel_sample_actual"][i]))
        if not hold[i]:
            worst_contain = max(worst_contain, fsv - inv_r[i])
        worst_ky = max(worst_ky, float(np.max(np.abs(K[i] @ P[i] - Y[i]))))
        if not hold[i] and i + 1 < steps:
            M = synthesis.build_dmi_reduced(A0, B0, config.synth.gamma2,
                                            config.synth.alpha, P[i], P[i + 1], Y[i])
            worst_dmi = min(worst_dmi, float(np.linalg.eigvalsh(M)[0]))
        ok_poly &= model.state_polytopes[t].contains(xbar[t])
    checks["gain-sharing"] = worst_gain <= 1e-8
    details["gain-sharing"] = f"max deviation {worst_gain:.3e}"
    checks["funnel-containment"] = worst_contain <= tol
    details["funnel-containment"] = f"max excess {worst_contain:.3e}"
    checks["funnel-sample-recompute"] = worst_fs <= 1e-9
    checks["gain-extraction"] = worst_ky <= 1e-8
    checks["window-dmi-psd"] = worst_dmi >= -conic.PSD_RESIDUAL_TOL
    details["window-dmi-psd"] = f"min eig {worst_dmi:.3e}"
    checks["nominal-in-polytopes"] = ok_poly
    checks["reset-times"] = list(metrics.get("reset_times_s", [])) == scenario.reset_times_s()
    return VerifyReport(checks, details, sorted(set(flags_raised)))
