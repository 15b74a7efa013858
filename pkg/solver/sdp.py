"""
Dense primal-dual interior-point solver for small block SDPs.

Solves the pair

    maximize   Σ_k ⟨C_k, X_k⟩           minimize   bᵀy
    subject to Σ_k ⟨A_lk, X_k⟩ = b_l     subject to Σ_l y_l A_lk − C_k ⪰ 0
               X_k ⪰ 0

with ⟨A, X⟩ = Re tr(A X). Blocks of size 1 are handled as a nonnegative
orthant. The search direction is HKM with a Mehrotra predictor-corrector.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np
import scipy.linalg as sla

from kernel.matrix import as_matrix, hermitian, min_eigenvalue, real_vector
from utils.config import settings
from utils.errors import InputError, ReasonCodes, SolverError, VerificationError, abort

logger = logging.getLogger(__name__)

options = {
    "step": 0.98,
    "dependent_rows_tol": 1e-10,
    "loose_gap_tol": 1e-7,
    "loose_feas_tol": 1e-8,
    "min_step": 1e-10,
}


class SdpStatus(str, Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max-iterations"
    DEGENERATE = "numerically-degenerate"


@dataclass(frozen=True, eq=False)
class SdpProblem:
    """
    Block-structured linear SDP.

    ``constraints[k]`` has shape (m, n_k, n_k) and holds A_lk for every row l.
    """

    blocks: tuple[int, ...]
    objective: tuple[np.ndarray, ...]
    constraints: tuple[np.ndarray, ...]
    rhs: np.ndarray

    def __post_init__(self):
        m = int(np.asarray(self.rhs).shape[0])
        if not (len(self.blocks) == len(self.objective) == len(self.constraints)):
            abort(InputError, ReasonCodes.DIMENSION_MISMATCH, "SdpProblem needs one objective and one constraint array per block.")
        for k, n in enumerate(self.blocks):
            if self.objective[k].shape != (n, n) or self.constraints[k].shape != (m, n, n):
                abort(
                    InputError,
                    ReasonCodes.DIMENSION_MISMATCH,
                    f"Block {k}: objective {self.objective[k].shape}, constraints {self.constraints[k].shape}, expected size {n} with {m} rows.",
                )
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=float))

    @property
    def num_rows(self) -> int:
        return int(self.rhs.shape[0])

    def apply(self, xs) -> np.ndarray:
        """𝒜(X) = (Σ_k ⟨A_lk, X_k⟩)_l."""
        total = np.zeros(self.num_rows)
        for a, x in zip(self.constraints, xs):
            total += np.real(np.einsum("lab,ba->l", a, x))
        return total

    def adjoint(self, y) -> list[np.ndarray]:
        """𝒜*(y) = (Σ_l y_l A_lk)_k."""
        return [np.einsum("l,lab->ab", y, a) for a in self.constraints]

    def value(self, xs) -> float:
        return float(sum(np.real(np.sum(c * x.T)) for c, x in zip(self.objective, xs)))

    def to_dict(self) -> dict:
        def enc(m):
            return np.stack([np.real(m), np.imag(m)], axis=-1).tolist()

        return {
            "blocks": list(self.blocks),
            "objective": [enc(c) for c in self.objective],
            "constraints": [enc(a) for a in self.constraints],
            "rhs": self.rhs.tolist(),
        }


class SdpBuilder:
    """Incremental assembly of an SdpProblem from sparse per-row terms."""

    def __init__(self):
        self._dims: list[int] = []
        self._objective: dict[int, np.ndarray] = {}
        self._rows: list[dict[int, np.ndarray]] = []
        self._rhs: list[float] = []

    def add_block(self, n: int, objective=None) -> int:
        self._dims.append(int(n))
        k = len(self._dims) - 1
        if objective is not None:
            self.set_objective(k, objective)
        return k

    def add_scalar(self, objective: float = 0.0) -> int:
        return self.add_block(1, [[objective]])

    def set_objective(self, block: int, c) -> None:
        self._objective[block] = hermitian(np.atleast_2d(np.asarray(c, dtype=complex)))

    def add_row(self, terms: Mapping[int, object], rhs: float) -> int:
        row = {k: hermitian(np.atleast_2d(np.asarray(v, dtype=complex))) for k, v in terms.items()}
        self._rows.append(row)
        self._rhs.append(float(rhs))
        return len(self._rows) - 1

    @property
    def num_rows(self) -> int:
        return len(self._rows)

    def build(self) -> SdpProblem:
        m = len(self._rows)
        objective = []
        constraints = []
        for k, n in enumerate(self._dims):
            objective.append(self._objective.get(k, np.zeros((n, n), dtype=complex)))
            a = np.zeros((m, n, n), dtype=complex)
            for l, row in enumerate(self._rows):
                if k in row:
                    a[l] = row[k]
            constraints.append(a)
        return SdpProblem(tuple(self._dims), tuple(objective), tuple(constraints), np.array(self._rhs))


@dataclass(eq=False)
class SdpSolution:
    status: SdpStatus
    x: list[np.ndarray]
    y: np.ndarray
    z: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    gap: float
    relative_gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    dropped_rows: list[int] = field(default_factory=list)
    problem: SdpProblem | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is SdpStatus.OPTIMAL

    @property
    def value(self) -> float:
        return self.primal_objective

    def require_optimal(self, what: str = "SDP") -> SdpSolution:
        if self.status is SdpStatus.MAX_ITERATIONS:
            abort(
                SolverError,
                ReasonCodes.SOLVER_MAX_ITERATIONS,
                f"{what}: no convergence after {self.iterations} iterations "
                f"(gap {self.relative_gap:.2e}, pinf {self.primal_infeasibility:.2e}, dinf {self.dual_infeasibility:.2e}).",
            )
        if self.status is SdpStatus.DEGENERATE:
            abort(SolverError, ReasonCodes.SOLVER_DEGENERATE, f"{what}: constraints are numerically degenerate.")
        if self.problem is not None:
            check = verify(self.problem, self)
            scale = 1 + abs(check.primal_objective) + abs(check.dual_objective)
            gap = abs(check.dual_objective - check.primal_objective) / scale
            if not check.weak_duality or gap > options["loose_gap_tol"]:
                abort(
                    VerificationError,
                    ReasonCodes.VERIFICATION_FAILED,
                    f"{what}: primal {check.primal_objective:.10g} and dual {check.dual_objective:.10g} "
                    f"do not certify each other (relative gap {gap:.2e}).",
                )
        return self

    def diagnostics(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "gap": self.relative_gap,
            "primal_infeasibility": self.primal_infeasibility,
            "dual_infeasibility": self.dual_infeasibility,
        }


@dataclass(frozen=True)
class SdpVerification:
    primal_residual: float
    primal_psd_violation: float
    dual_psd_violation: float
    primal_objective: float
    dual_objective: float
    weak_duality: bool
    ok: bool


class _Cones:
    """Problem split into matrix blocks and one LP vector, in minimisation form."""

    def __init__(self, p: SdpProblem, rows: np.ndarray):
        self.sdp = [k for k, n in enumerate(p.blocks) if n > 1]
        self.lp = [k for k, n in enumerate(p.blocks) if n == 1]
        self.b = p.rhs[rows]
        self.a_s = [p.constraints[k][rows] for k in self.sdp]
        self.c_s = [-p.objective[k] for k in self.sdp]
        if self.lp:
            self.a_l = np.stack([np.real(p.constraints[k][rows, 0, 0]) for k in self.lp], axis=1)
            self.c_l = np.array([-np.real(p.objective[k][0, 0]) for k in self.lp])
        else:
            self.a_l = np.zeros((len(self.b), 0))
            self.c_l = np.zeros(0)
        self.degree = sum(p.blocks[k] for k in self.sdp) + len(self.lp)
        self.c_norm = np.sqrt(sum(np.linalg.norm(c) ** 2 for c in self.c_s) + np.linalg.norm(self.c_l) ** 2)

    def amap(self, xs, x) -> np.ndarray:
        total = self.a_l @ x
        for a, xk in zip(self.a_s, xs):
            total = total + np.real(np.einsum("lab,ba->l", a, xk))
        return total

    def aadj(self, y):
        return [np.einsum("l,lab->ab", y, a) for a in self.a_s], self.a_l.T @ y


def _independent_rows(p: SdpProblem) -> tuple[np.ndarray, list[int], bool]:
    """Indices of a maximal independent set of constraint rows, dropped rows, consistency."""
    m = p.num_rows
    if m == 0:
        return np.arange(0), [], True
    mat = np.array([np.concatenate([real_vector(a[l]) for a in p.constraints]) for l in range(m)])
    _, r, piv = sla.qr(mat.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return np.arange(0), list(range(m)), bool(np.all(np.abs(p.rhs) <= options["loose_feas_tol"]))
    rank = int(np.sum(diag > options["dependent_rows_tol"] * diag[0]))
    keep = np.sort(piv[:rank])
    dropped = sorted(int(l) for l in piv[rank:])
    consistent = True
    if dropped:
        coeffs, *_ = np.linalg.lstsq(mat[keep].T, mat[dropped].T, rcond=None)
        predicted = coeffs.T @ p.rhs[keep]
        mismatch = np.abs(predicted - p.rhs[dropped])
        consistent = bool(np.all(mismatch <= options["loose_feas_tol"] * (1 + np.abs(p.rhs[dropped]))))
        logger.debug(f"sdp: dropped {len(dropped)} dependent rows, consistent={consistent}")
    return keep, dropped, consistent


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest α with x + α dx ⪰ 0."""
    try:
        chol = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    w = sla.solve_triangular(chol, dx, lower=True)
    w = sla.solve_triangular(chol, w.conj().T, lower=True).conj().T
    lam = min_eigenvalue(w)
    return np.inf if lam >= 0 else -1.0 / lam


def _max_ratio(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _schur_solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if m.size == 0:
        return np.zeros(0)
    try:
        return sla.cho_solve(sla.cho_factor(m), rhs)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        pass
    reg = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(m)))))
    try:
        logger.warning(f"sdp: Schur complement not positive definite, regularising by {reg:.1e}")
        return sla.cho_solve(sla.cho_factor(m + reg * np.eye(m.shape[0])), rhs)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        logger.warning("sdp: regularised Cholesky failed, falling back to least squares")
        return np.linalg.lstsq(m, rhs, rcond=None)[0]


def _sym(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def solve(p: SdpProblem, max_iter: int | None = None, gap_tol: float | None = None, feas_tol: float | None = None) -> SdpSolution:
    """Solve ``p``; the returned status says whether the answer is certified."""
    max_iter = settings.sdp_max_iter if max_iter is None else max_iter
    gap_tol = settings.sdp_gap_tol if gap_tol is None else gap_tol
    feas_tol = settings.sdp_feas_tol if feas_tol is None else feas_tol

    rows, dropped, consistent = _independent_rows(p)
    cones = _Cones(p, rows)
    b = cones.b
    b_norm = np.linalg.norm(b)
    a_norms = [np.linalg.norm(a.reshape(a.shape[0], -1), axis=1) for a in cones.a_s]
    a_norm_lp = np.linalg.norm(cones.a_l, axis=1) if cones.lp else np.zeros(len(b))

    def start_scale(n, a_rows, c_norm):
        top = max((float(np.max((1 + np.abs(b)) / (1 + a_rows))) if len(b) else 1.0), 1.0)
        xi = max(10.0, np.sqrt(n), n * top)
        eta = max(10.0, np.sqrt(n), float(np.max(a_rows, initial=0.0)), c_norm)
        return xi, eta

    xs, zs = [], []
    for k, a_rows, c in zip(cones.sdp, a_norms, cones.c_s):
        n = p.blocks[k]
        xi, eta = start_scale(n, a_rows, np.linalg.norm(c))
        xs.append(xi * np.eye(n, dtype=complex))
        zs.append(eta * np.eye(n, dtype=complex))
    n_lp = len(cones.lp)
    xi, eta = start_scale(max(n_lp, 1), a_norm_lp, np.linalg.norm(cones.c_l))
    x_lp = np.full(n_lp, xi)
    z_lp = np.full(n_lp, eta)
    y = np.zeros(len(b))

    status = SdpStatus.MAX_ITERATIONS
    it = 0
    pobj = dobj = rel_gap = pinf = dinf = np.inf
    for it in range(max_iter + 1):
        r_p = b - cones.amap(xs, x_lp)
        aty_s, aty_l = cones.aadj(y)
        r_ds = [c - z - a for c, z, a in zip(cones.c_s, zs, aty_s)]
        r_dl = cones.c_l - z_lp - aty_l

        pobj = float(sum(np.real(np.sum(c * x.T)) for c, x in zip(cones.c_s, xs)) + cones.c_l @ x_lp)
        dobj = float(b @ y)
        complementarity = float(sum(np.real(np.sum(x * z.T)) for x, z in zip(xs, zs)) + x_lp @ z_lp)
        mu = complementarity / cones.degree
        rel_gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(r_p) / (1 + b_norm))
        dinf = float(np.sqrt(sum(np.linalg.norm(r) ** 2 for r in r_ds) + np.linalg.norm(r_dl) ** 2) / (1 + cones.c_norm))
        logger.debug(f"sdp it={it} pobj={-pobj:.10e} dobj={-dobj:.10e} gap={rel_gap:.2e} pinf={pinf:.2e} dinf={dinf:.2e} mu={mu:.2e}")

        if rel_gap <= gap_tol and pinf <= feas_tol and dinf <= feas_tol:
            status = SdpStatus.OPTIMAL
            break
        if it == max_iter:
            break

        try:
            zinvs = [sla.cho_solve(sla.cho_factor(z), np.eye(z.shape[0])) for z in zs]
        except (np.linalg.LinAlgError, sla.LinAlgError):
            logger.warning(f"sdp: dual slack lost definiteness at iteration {it}")
            break
        schur = (cones.a_l * (x_lp / z_lp)) @ cones.a_l.T
        for a, x, zinv in zip(cones.a_s, xs, zinvs):
            m = a.shape[0]
            pm = x @ a @ zinv
            schur = schur + np.real(a.reshape(m, -1) @ pm.transpose(0, 2, 1).reshape(m, -1).T)
        schur = (schur + schur.T) / 2

        xrz = [_sym(x @ r @ zinv) for x, r, zinv in zip(xs, r_ds, zinvs)]
        xrz_l = x_lp * r_dl / z_lp

        def direction(ts, t_l):
            rhs = r_p - cones.amap([t - x for t, x in zip(ts, xs)], t_l - x_lp) + cones.amap(xrz, xrz_l)
            dy = _schur_solve(schur, rhs)
            ad_s, ad_l = cones.aadj(dy)
            dzs = [r - a for r, a in zip(r_ds, ad_s)]
            dz_l = r_dl - ad_l
            dxs = [t - x - _sym(x @ dz @ zinv) for t, x, dz, zinv in zip(ts, xs, dzs, zinvs)]
            dx_l = t_l - x_lp - x_lp * dz_l / z_lp
            return dxs, dx_l, dy, dzs, dz_l

        def steps(dxs, dx_l, dzs, dz_l):
            ap = min([_max_step(x, dx) for x, dx in zip(xs, dxs)] + [_max_ratio(x_lp, dx_l), np.inf])
            ad = min([_max_step(z, dz) for z, dz in zip(zs, dzs)] + [_max_ratio(z_lp, dz_l), np.inf])
            return ap, ad

        zero_s = [np.zeros_like(x) for x in xs]
        dxs_a, dx_la, _, dzs_a, dz_la = direction(zero_s, np.zeros(n_lp))
        ap, ad = steps(dxs_a, dx_la, dzs_a, dz_la)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (
            sum(np.real(np.sum((x + ap * dx) * (z + ad * dz).T)) for x, dx, z, dz in zip(xs, dxs_a, zs, dzs_a))
            + (x_lp + ap * dx_la) @ (z_lp + ad * dz_la)
        ) / cones.degree
        sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 0.0, 1.0)) if mu > 0 else 0.0

        ts = [_sym((sigma * mu * np.eye(x.shape[0]) - dx @ dz) @ zinv) for x, dx, dz, zinv in zip(xs, dxs_a, dzs_a, zinvs)]
        t_l = (sigma * mu - dx_la * dz_la) / z_lp
        dxs, dx_l, dy, dzs, dz_l = direction(ts, t_l)
        ap, ad = steps(dxs, dx_l, dzs, dz_l)
        ap, ad = min(1.0, options["step"] * ap), min(1.0, options["step"] * ad)
        if ap < options["min_step"] and ad < options["min_step"]:
            logger.warning(f"sdp: step length collapsed at iteration {it}")
            break

        xs = [hermitian(x + ap * dx) for x, dx in zip(xs, dxs)]
        x_lp = x_lp + ap * dx_l
        zs = [hermitian(z + ad * dz) for z, dz in zip(zs, dzs)]
        z_lp = z_lp + ad * dz_l
        y = y + ad * dy

    if status is not SdpStatus.OPTIMAL and rel_gap <= options["loose_gap_tol"] and max(pinf, dinf) <= options["loose_feas_tol"]:
        status = SdpStatus.OPTIMAL
    if not consistent:
        status = SdpStatus.DEGENERATE

    x_full: list[np.ndarray] = [None] * len(p.blocks)
    z_full: list[np.ndarray] = [None] * len(p.blocks)
    for k, x, z in zip(cones.sdp, xs, zs):
        x_full[k], z_full[k] = x, z
    for pos, k in enumerate(cones.lp):
        x_full[k] = np.array([[x_lp[pos]]], dtype=complex)
        z_full[k] = np.array([[z_lp[pos]]], dtype=complex)
    y_full = np.zeros(p.num_rows)
    y_full[rows] = -y

    primal, dual = -pobj, -dobj
    logger.debug(f"sdp: {status.value} after {it} iterations, value {primal:.12g}")
    return SdpSolution(
        status=status,
        x=x_full,
        y=y_full,
        z=z_full,
        primal_objective=primal,
        dual_objective=dual,
        gap=dual - primal,
        relative_gap=rel_gap,
        primal_infeasibility=pinf,
        dual_infeasibility=dinf,
        iterations=it,
        dropped_rows=dropped,
        problem=p,
    )


def verify(p: SdpProblem, s: SdpSolution, tol: float = 1e-7) -> SdpVerification:
    """Recompute residuals, PSD margins and weak duality from the problem data alone."""
    xs = [as_matrix(x) for x in s.x]
    residual = float(np.max(np.abs(p.apply(xs) - p.rhs), initial=0.0))
    primal_psd = max(max(0.0, -min_eigenvalue(x)) for x in xs)
    zs = [a - c for a, c in zip(p.adjoint(s.y), p.objective)]
    dual_psd = max(max(0.0, -min_eigenvalue(z)) for z in zs)
    primal = p.value(xs)
    dual = float(p.rhs @ s.y)
    scale = 1 + abs(primal) + abs(dual)
    weak = dual >= primal - tol * scale
    ok = weak and residual <= 1e-8 * (1 + float(np.max(np.abs(p.rhs), initial=0.0))) and primal_psd <= 1e-9
    return SdpVerification(residual, primal_psd, dual_psd, primal, dual, weak, ok)
