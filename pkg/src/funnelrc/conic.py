"""Thin adapter between LMI synthesis and conic SDP backends.

A program is a flat real variable vector z with a linear objective c'z,
a list of PSD constraints F(z) = F0 + sum_i z_i F_i >= 0 (each F_i
symmetric), and a list of scalar linear inequalities a'z <= b.

Backends (Clarabel by default, SCS as alternative) are driven through
their native conic interfaces.  Whatever a backend claims, every returned
point is re-verified here by dense eigenvalue computation; a claimed
optimum with violated constraints is downgraded to ``numerical-failure``.

``ProgramBuilder`` gives block-structured ergonomics on top of the flat
vector: register symmetric/rectangular/scalar variables, then state each
constraint as a plain numpy function of the unpacked values.  The builder
probes the function once per dependent scalar variable to recover the
basis matrices, so constraint code stays readable and is reused verbatim
for numeric verification.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import ContractError, NumericalError

Array = np.ndarray

# Verification tolerances from the adapter contract: accepted solutions must
# satisfy lambda_min(F(z)) >= -PSD_RESIDUAL_TOL on every PSD constraint and
# b - a'z >= -LIN_RESIDUAL_TOL on every linear inequality.
PSD_RESIDUAL_TOL = 1e-6
LIN_RESIDUAL_TOL = 1e-8

_SQRT2 = float(np.sqrt(2.0))


@dataclass
class SolverOptions:
    backend: str = "clarabel"  # "clarabel" | "scs"
    tol: float = 1e-8
    max_iters: int = 100_000
    verbose: bool = False
    seed: int = 0  # recorded for provenance; both backends are deterministic

    def validate(self) -> None:
        if self.backend not in ("clarabel", "scs"):
            raise ContractError(f"unknown backend {self.backend!r}")
        if not (0 < self.tol < 1):
            raise ContractError("tol must be in (0, 1)")


@dataclass
class PsdConstraint:
    """Affine symmetric-matrix map F(z) = const + sum_i z_i coeffs[i] >= 0."""

    const: Array
    coeffs: dict[int, Array]
    label: str = ""

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def evaluate(self, z: Array) -> Array:
        F = self.const.copy()
        for i, Fi in self.coeffs.items():
            F += z[i] * Fi
        return F

    def check_symmetric(self, tol: float = 1e-12) -> None:
        for tag, M in [("const", self.const), *((str(i), Fi) for i, Fi in self.coeffs.items())]:
            if M.shape[0] != M.shape[1] or np.max(np.abs(M - M.T)) > tol:
                raise ContractError(f"PSD constraint {self.label!r}: basis {tag} not symmetric")


@dataclass
class LinearInequality:
    """a'z <= b, with a stored sparsely as {var index: coefficient}."""

    a: dict[int, float]
    b: float
    label: str = ""

    def residual(self, z: Array) -> float:
        return self.b - sum(c * z[i] for i, c in self.a.items())


@dataclass
class SdpProgram:
    num_vars: int
    objective: Array
    psd_constraints: list[PsdConstraint]
    linear_inequalities: list[LinearInequality]
    options: SolverOptions = field(default_factory=SolverOptions)

    def validate(self, rng: np.random.Generator | None = None) -> None:
        """Check well-formedness; symmetry of every matrix map on random probes."""
        self.options.validate()
        if self.objective.shape != (self.num_vars,):
            raise ContractError("objective length does not match variable count")
        for con in self.psd_constraints:
            con.check_symmetric()
        rng = rng or np.random.default_rng(0)
        for _ in range(2):
            z = rng.standard_normal(self.num_vars)
            for con in self.psd_constraints:
                F = con.evaluate(z)
                if np.max(np.abs(F - F.T)) > 1e-12:
                    raise ContractError(f"PSD constraint {con.label!r} asymmetric at probe")

    def dump(self, path: str) -> None:
        """Self-describing text dump for offline debugging."""
        with open(path, "w") as fh:
            fh.write(f"sdp-program num_vars={self.num_vars}\n")
            fh.write("objective " + " ".join(repr(float(v)) for v in self.objective) + "\n")
            for con in self.psd_constraints:
                fh.write(f"psd size={con.size} label={con.label!r}\n")
                fh.write("  const " + _row_major(con.const) + "\n")
                for i in sorted(con.coeffs):
                    fh.write(f"  var[{i}] " + _row_major(con.coeffs[i]) + "\n")
            for lin in self.linear_inequalities:
                terms = " ".join(f"{c!r}*z[{i}]" for i, c in sorted(lin.a.items()))
                fh.write(f"linear {terms} <= {lin.b!r} label={lin.label!r}\n")


def _row_major(M: Array) -> str:
    return " ".join(repr(float(v)) for v in M.ravel())


@dataclass
class SdpSolution:
    status: str  # "optimal" | "infeasible" | "numerical-failure"
    variables: Array | None
    objective: float | None
    max_residual: float
    wall_ms: float
    backend_status: str = ""
    detail: str = ""


# ---------------------------------------------------------------------------
# svec index caches (per matrix size, per ordering)

_UPPER_CACHE: dict[int, tuple[Array, Array, Array]] = {}
_LOWER_CACHE: dict[int, tuple[Array, Array, Array]] = {}


def _upper_colmajor(k: int):
    """Row/col indices of the upper triangle in column-major order + scaling."""
    if k not in _UPPER_CACHE:
        rows, cols = [], []
        for j in range(k):
            for i in range(j + 1):
                rows.append(i)
                cols.append(j)
        r = np.asarray(rows)
        c = np.asarray(cols)
        scale = np.where(r == c, 1.0, _SQRT2)
        _UPPER_CACHE[k] = (r, c, scale)
    return _UPPER_CACHE[k]


def _lower_colmajor(k: int):
    if k not in _LOWER_CACHE:
        rows, cols = [], []
        for j in range(k):
            for i in range(j, k):
                rows.append(i)
                cols.append(j)
        r = np.asarray(rows)
        c = np.asarray(cols)
        scale = np.where(r == c, 1.0, _SQRT2)
        _LOWER_CACHE[k] = (r, c, scale)
    return _LOWER_CACHE[k]


def _svec(M: Array, ordering) -> Array:
    r, c, scale = ordering(M.shape[0])
    return M[r, c] * scale


# ---------------------------------------------------------------------------
# solve

def solve(program: SdpProgram) -> SdpSolution:
    """Solve the program; always re-verify the returned point independently."""
    opts = program.options
    opts.validate()
    t0 = time.perf_counter()
    try:
        if opts.backend == "clarabel":
            backend_status, z, obj = _solve_clarabel(program)
        else:
            backend_status, z, obj = _solve_scs(program)
    except Exception as exc:  # backend crash
        wall = (time.perf_counter() - t0) * 1e3
        return SdpSolution("numerical-failure", None, None, np.inf, wall,
                           backend_status="crash", detail=repr(exc))
    wall = (time.perf_counter() - t0) * 1e3

    if backend_status == "infeasible":
        return SdpSolution("infeasible", None, None, np.inf, wall, backend_status)
    if z is None or backend_status == "failure":
        return SdpSolution("numerical-failure", None, None, np.inf, wall, backend_status)

    ok, max_violation = verify_point(program, z)
    if not ok:
        return SdpSolution("numerical-failure", z, obj, max_violation, wall, backend_status,
                           detail="backend point failed independent verification")
    return SdpSolution("optimal", z, float(program.objective @ z), max_violation, wall,
                       backend_status)


def verify_point(program: SdpProgram, z: Array) -> tuple[bool, float]:
    """Dense re-check of every constraint at z.

    Returns (accepted, worst violation), where violation is how far the
    most-violated constraint dips below zero (0 when everything holds).
    """
    worst = 0.0
    ok = True
    if not np.all(np.isfinite(z)):
        return False, np.inf
    for con in program.psd_constraints:
        lam = float(np.linalg.eigvalsh(con.evaluate(z))[0])
        if lam < 0:
            worst = max(worst, -lam)
        if lam < -PSD_RESIDUAL_TOL:
            ok = False
    for lin in program.linear_inequalities:
        res = lin.residual(z)
        if res < 0:
            worst = max(worst, -res)
        if res < -LIN_RESIDUAL_TOL:
            ok = False
    return ok, worst


def _assemble(program: SdpProgram, ordering):
    """Stack linear inequalities then PSD blocks into b - A z in cone."""
    n = program.num_vars
    n_lin = len(program.linear_inequalities)
    psd_rows = sum(c.size * (c.size + 1) // 2 for c in program.psd_constraints)
    rows = n_lin + psd_rows
    A = np.zeros((rows, n))
    b = np.zeros(rows)
    for r, lin in enumerate(program.linear_inequalities):
        b[r] = lin.b
        for i, coef in lin.a.items():
            A[r, i] = coef
    r0 = n_lin
    for con in program.psd_constraints:
        m = con.size * (con.size + 1) // 2
        b[r0:r0 + m] = _svec(con.const, ordering)
        for i, Fi in con.coeffs.items():
            A[r0:r0 + m, i] = -_svec(Fi, ordering)
        r0 += m
    return sparse.csc_matrix(A), b


def _objective_scale(c: Array) -> float:
    """Backends see a normalized objective; pure rescale, same minimizer."""
    peak = float(np.max(np.abs(c))) if c.size else 0.0
    return peak if peak > 1.0 else 1.0


def _solve_clarabel(program: SdpProgram):
    import clarabel

    opts = program.options
    A, b = _assemble(program, _upper_colmajor)
    cones = []
    if program.linear_inequalities:
        cones.append(clarabel.NonnegativeConeT(len(program.linear_inequalities)))
    for con in program.psd_constraints:
        cones.append(clarabel.PSDTriangleConeT(con.size))
    P = sparse.csc_matrix((program.num_vars, program.num_vars))
    scale = _objective_scale(program.objective)
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.tol_gap_abs = opts.tol
    settings.tol_gap_rel = opts.tol
    settings.tol_feas = opts.tol
    solver = clarabel.DefaultSolver(P, program.objective / scale, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status in ("Solved", "AlmostSolved"):
        return "solved", np.asarray(sol.x), float(sol.obj_val) * scale
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return "infeasible", None, None
    return "failure", None, None


def _solve_scs(program: SdpProgram):
    import scs

    opts = program.options
    A, b = _assemble(program, _lower_colmajor)
    cone = {}
    if program.linear_inequalities:
        cone["l"] = len(program.linear_inequalities)
    if program.psd_constraints:
        cone["s"] = [c.size for c in program.psd_constraints]
    scale = _objective_scale(program.objective)
    data = {"A": A, "b": b, "c": program.objective / scale}
    out = scs.solve(data, cone, eps_abs=opts.tol, eps_rel=opts.tol,
                    max_iters=opts.max_iters, verbose=opts.verbose)
    status = out["info"]["status"].lower()
    if "solved" in status and "infeasible" not in status:
        return "solved", np.asarray(out["x"]), float(out["info"]["pobj"]) * scale
    if "infeasible" in status:
        return "infeasible", None, None
    return "failure", None, None


# ---------------------------------------------------------------------------
# block-structured builder

class ProgramBuilder:
    """Registers named variable blocks and probes affine constraint functions.

    Symmetric n x n blocks occupy n(n+1)/2 scalars (upper triangle); the
    unpacked value handed to constraint functions is always the full matrix.
    """

    def __init__(self):
        self._kind: dict[str, tuple] = {}
        self._offset: dict[str, int] = {}
        self._index_map: dict[str, Array] = {}
        self._num = 0
        self._psd: list[PsdConstraint] = []
        self._lin: list[LinearInequality] = []
        self._fns: list[tuple[Callable, tuple[str, ...], int]] = []
        self._c: Array | None = None

    # -- variable registration -------------------------------------------
    def symmetric(self, name: str, n: int) -> None:
        self._register(name, ("sym", n), n * (n + 1) // 2)

    def matrix(self, name: str, m: int, n: int) -> None:
        self._register(name, ("rect", m, n), m * n)

    def scalar(self, name: str) -> None:
        self._register(name, ("scalar",), 1)

    def _register(self, name, kind, size) -> None:
        if name in self._kind:
            raise ContractError(f"variable {name!r} already registered")
        self._kind[name] = kind
        self._offset[name] = self._num
        if kind[0] == "sym":
            n = kind[1]
            idx = np.zeros((n, n), dtype=int)
            pos = self._num
            for j in range(n):
                for i in range(j + 1):
                    idx[i, j] = idx[j, i] = pos
                    pos += 1
            self._index_map[name] = idx
        self._num += size

    @property
    def num_vars(self) -> int:
        return self._num

    def indices(self, name: str) -> range:
        kind = self._kind[name]
        base = self._offset[name]
        if kind[0] == "sym":
            n = kind[1]
            return range(base, base + n * (n + 1) // 2)
        if kind[0] == "rect":
            return range(base, base + kind[1] * kind[2])
        return range(base, base + 1)

    # -- pack / unpack -----------------------------------------------------
    def zeros(self) -> Array:
        return np.zeros(self._num)

    def unpack(self, z: Array, names: Iterable[str] | None = None) -> dict:
        vals = {}
        for name in (self._kind if names is None else names):
            kind = self._kind[name]
            base = self._offset[name]
            if kind[0] == "sym":
                vals[name] = z[self._index_map[name]]
            elif kind[0] == "rect":
                m, n = kind[1], kind[2]
                vals[name] = z[base:base + m * n].reshape(m, n)
            else:
                vals[name] = float(z[base])
        return vals

    def pack(self, values: dict, z: Array | None = None) -> Array:
        z = self.zeros() if z is None else z.copy()
        for name, val in values.items():
            kind = self._kind[name]
            base = self._offset[name]
            if kind[0] == "sym":
                n = kind[1]
                M = np.asarray(val, float)
                idx = base
                for j in range(n):
                    for i in range(j + 1):
                        z[idx] = M[i, j]
                        idx += 1
            elif kind[0] == "rect":
                z[base:base + kind[1] * kind[2]] = np.asarray(val, float).ravel()
            else:
                z[base] = float(val)
        return z

    # -- constraints --------------------------------------------------------
    def add_psd(self, fn: Callable[[dict], Array], deps: Sequence[str], label: str = "") -> None:
        """fn(values) must be affine in the dep blocks and return a symmetric matrix >= 0."""
        F0 = np.asarray(fn(self.unpack(self.zeros(), deps)), float)
        coeffs: dict[int, Array] = {}
        probe = self.zeros()
        for name in deps:
            for i in self.indices(name):
                probe[i] = 1.0
                Fi = np.asarray(fn(self.unpack(probe, deps)), float) - F0
                probe[i] = 0.0
                if np.any(Fi):
                    coeffs[i] = Fi
        self._psd.append(PsdConstraint(F0, coeffs, label))
        self._fns.append((fn, tuple(deps), len(self._psd) - 1))

    def add_linear_le(self, fn: Callable[[dict], float], deps: Sequence[str], label: str = "") -> None:
        """fn(values) affine scalar; constraint is fn(values) <= 0."""
        g0 = float(fn(self.unpack(self.zeros(), deps)))
        a: dict[int, float] = {}
        probe = self.zeros()
        for name in deps:
            for i in self.indices(name):
                probe[i] = 1.0
                gi = float(fn(self.unpack(probe, deps))) - g0
                probe[i] = 0.0
                if gi != 0.0:
                    a[i] = gi
        self._lin.append(LinearInequality(a, -g0, label))

    def minimize(self, fn: Callable[[dict], float], deps: Sequence[str]) -> None:
        g0 = float(fn(self.unpack(self.zeros(), deps)))
        c = np.zeros(self._num)
        probe = self.zeros()
        for name in deps:
            for i in self.indices(name):
                probe[i] = 1.0
                c[i] = float(fn(self.unpack(probe, deps))) - g0
                probe[i] = 0.0
        self._c = c

    def build(self, options: SolverOptions | None = None, check: bool = False) -> SdpProgram:
        prog = SdpProgram(self._num, self._c if self._c is not None else np.zeros(self._num),
                          list(self._psd), list(self._lin), options or SolverOptions())
        if check:
            prog.validate()
            self._check_affine()
        return prog

    def _check_affine(self, tol: float = 1e-9) -> None:
        """Spot-check that the probed basis reproduces fn at random points."""
        rng = np.random.default_rng(12345)
        z = rng.standard_normal(self._num)
        vals = self.unpack(z)
        for fn, _deps, k in self._fns:
            F_fn = np.asarray(fn(vals), float)
            F_basis = self._psd[k].evaluate(z)
            scale = max(1.0, np.max(np.abs(F_fn)))
            if np.max(np.abs(F_fn - F_basis)) > tol * scale:
                raise ContractError(
                    f"constraint {self._psd[k].label!r} is not affine in its declared deps")
