"""First-order splitting solver for channel-fidelity semidefinite programs.

Solves::

    maximize    Re Tr(C X)
    subject to  X >= 0,   Tr_out X = I_in

over Hermitian X on (in (x) out), i.e. over Choi matrices of CPTP maps.
The iteration is over-relaxed ADMM with a closed-form affine projection
and an eigenvalue-clipping PSD projection, plus residual balancing of the
step size.  The returned matrix is polished to be exactly PSD and exactly
trace preserving, and a dual-feasible upper bound is reported.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "SdpProblem", "SolverSettings", "ChoiMatrix", "SolverResult", "solve",
    "project_psd", "partial_trace", "polish_choi", "dual_bound", "kkt_multiplier",
    "block_partition",
]


@dataclass(frozen=True)
class SdpProblem:
    objective: np.ndarray
    dims: tuple[int, int]
    # known upper limit of the optimum (1 for a fidelity); enables the relative gap test
    cap: float | None = None

    def __post_init__(self):
        n = self.dims[0] * self.dims[1]
        if self.objective.shape != (n, n):
            raise ValueError(f"objective shape {self.objective.shape} does not match dims {self.dims}")
        if not np.allclose(self.objective, self.objective.conj().T, atol=1e-10 * (1 + np.abs(self.objective).max())):
            raise ValueError("objective must be Hermitian")


@dataclass(frozen=True)
class SolverSettings:
    # candidate penalties (the objective is rescaled to unit Frobenius norm); runs
    # with several candidates are raced and the laggards dropped
    steps: tuple[float, ...] = (0.003, 0.03, 0.3)
    tol: float = 1e-7          # primal and dual residual tolerance (relative)
    gap_tol: float = 1e-9      # stop once the certified bound gap is below this (absolute)
    rel_gap: float = 1e-4      # ... or below rel_gap * (cap - objective) when the problem has a cap
    max_iter: int = 50_000     # per candidate
    relaxation: float = 1.5
    check_every: int = 10
    gap_every: int = 50
    drop_ratio: float = 10.0   # drop a candidate whose own gap is this much worse than the best
    race_chunks: int = 10      # ... but only after this many gap_every chunks
    blocks: bool = True        # exploit an exact block pattern of the objective

    def __post_init__(self):
        if not self.steps or min(self.steps) <= 0:
            raise ValueError("need at least one positive step")
        if self.tol <= 0 or self.gap_tol <= 0 or self.rel_gap < 0:
            raise ValueError("tol and gap_tol must be positive, rel_gap nonnegative")
        if self.max_iter < 1 or self.check_every < 1 or self.gap_every < 1:
            raise ValueError("max_iter and check intervals must be >= 1")
        if not 0 < self.relaxation < 2:
            raise ValueError("relaxation must be in (0, 2)")
        if self.race_chunks < 1:
            raise ValueError("race_chunks must be >= 1")
        if self.drop_ratio <= 1:
            raise ValueError("drop_ratio must exceed 1")


@dataclass
class ChoiMatrix:
    """Choi matrix sum_ij |i><j| (x) Phi(|i><j|) on (in (x) out)."""

    matrix: np.ndarray
    dims: tuple[int, int]

    @property
    def tensor(self) -> np.ndarray:
        di, do = self.dims
        return self.matrix.reshape(di, do, di, do)

    @property
    def dim_in(self) -> int:
        return self.dims[0]

    @property
    def dim_out(self) -> int:
        return self.dims[1]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Act on one (d_in x d_in) matrix or a stack with leading axes."""
        return np.einsum("...kl,kalb->...ab", rho, self.tensor)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """Heisenberg-picture map defined by Tr(y Phi(x)) = Tr(Phi^dag(y) x)."""
        return np.einsum("...ba,kalb->...lk", y, self.tensor)

    def kraus(self, tol: float = 1e-13) -> list[np.ndarray]:
        di, do = self.dims
        evals, evecs = np.linalg.eigh(0.5 * (self.matrix + self.matrix.conj().T))
        top = max(evals[-1], 0.0)
        ops = []
        for lam, v in zip(evals[::-1], evecs.T[::-1]):
            if lam <= tol * max(top, 1.0):
                break
            ops.append(np.sqrt(lam) * v.reshape(di, do).T)
        return ops

    def tp_error(self) -> float:
        return float(np.abs(partial_trace(self.matrix, self.dims, 1) - np.eye(self.dims[0])).max())

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    @classmethod
    def from_isometry(cls, v: np.ndarray) -> "ChoiMatrix":
        """Choi of rho -> V rho V^dag for V of shape (out, in)."""
        vec = v.T.reshape(-1)
        return cls(np.outer(vec, vec.conj()), (v.shape[1], v.shape[0]))

    @classmethod
    def from_kraus(cls, ops: list[np.ndarray]) -> "ChoiMatrix":
        do, di = ops[0].shape
        m = np.zeros((di * do, di * do), dtype=complex)
        for k in ops:
            vec = k.T.reshape(-1)
            m += np.outer(vec, vec.conj())
        return cls(m, (di, do))


@dataclass
class SolverResult:
    choi: ChoiMatrix
    objective: float
    upper_bound: float
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    step: float
    history: list[float] = field(default_factory=list)
    state: tuple | None = None
    block_sizes: list[int] = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.upper_bound - self.objective

    def diagnostics(self) -> dict:
        return {
            "objective": self.objective, "upper_bound": self.upper_bound, "gap": self.gap,
            "converged": self.converged, "iterations": self.iterations,
            "primal_residual": self.primal_residual, "dual_residual": self.dual_residual,
            "step": self.step, "history": list(self.history),
            "block_sizes": list(self.block_sizes),
        }


def partial_trace(x: np.ndarray, dims: tuple[int, int], subsystem: int) -> np.ndarray:
    """Trace out subsystem 0 or 1 of a matrix on (dims[0] (x) dims[1])."""
    d0, d1 = dims
    if x.shape != (d0 * d1, d0 * d1):
        raise ValueError(f"matrix of shape {x.shape} does not factor as {dims}")
    t = x.reshape(d0, d1, d0, d1)
    if subsystem == 1:
        return np.einsum("iaja->ij", t)
    if subsystem == 0:
        return np.einsum("aiaj->ij", t)
    raise ValueError("subsystem must be 0 or 1")


def _eigh(m):
    try:
        return scipy.linalg.eigh(m, overwrite_a=True, check_finite=False, driver="evd")
    except (np.linalg.LinAlgError, ValueError):
        return np.linalg.eigh(m)


def _block_groups(blocks):
    """Blocks grouped by size, as (k, s) index arrays ready for stacked gathers."""
    by_size = {}
    for idx in blocks:
        by_size.setdefault(len(idx), []).append(idx)
    return [np.array(g) for g in by_size.values()]


def project_psd(m: np.ndarray, blocks: list[np.ndarray] | None = None) -> np.ndarray:
    """Frobenius-nearest PSD matrix (eigenvalue clipping).

    With ``blocks`` (a partition of the indices) ``m`` is taken to be block
    diagonal under that partition and each block is projected on its own;
    equal-size blocks share one stacked eigendecomposition.
    """
    if blocks is not None and len(blocks) > 1:
        out = np.zeros_like(m)
        for g in _block_groups(blocks):
            r, c = g[:, :, None], g[:, None, :]
            if len(g) == 1:
                out[r[0], c[0]] = project_psd(m[r[0], c[0]])
                continue
            sub = m[r, c]
            h = 0.5 * (sub + np.conj(np.swapaxes(sub, 1, 2)))
            evals, evecs = np.linalg.eigh(h)
            v = evecs * np.sqrt(np.clip(evals, 0, None))[:, None, :]
            out[r, c] = v @ np.conj(np.swapaxes(v, 1, 2))
        return out
    h = 0.5 * (m + m.conj().T)
    evals, evecs = _eigh(h.copy())
    pos = evals > 0
    v = evecs[:, pos] * np.sqrt(evals[pos])
    return v @ v.conj().T


def _min_eig(m, blocks=None):
    if blocks is None or len(blocks) == 1:
        return float(np.linalg.eigvalsh(m)[0])
    return min(float(np.linalg.eigvalsh(m[np.ix_(idx, idx)])[0]) for idx in blocks)


def block_partition(c: np.ndarray, dims: tuple[int, int], tol: float = 1e-13) -> list[np.ndarray]:
    """Finest index partition that the ADMM iteration preserves.

    Starts from the connected components of the nonzero pattern of ``c``
    (entries below ``tol * max|c|`` count as zero) and closes it under the
    trace constraint: if (x, a) and (y, a) share a block for some a, then
    (x, b) and (y, b) must share one for every b.  The iteration started
    inside this pattern never leaves it, so solving blockwise is exact.
    """
    di, do = dims
    n = di * do
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
            return True
        return False

    scale = np.abs(c).max()
    rows, cols = np.nonzero(np.abs(c) > tol * scale) if scale > 0 else ((), ())
    for i, j in zip(rows, cols):
        union(int(i), int(j))
    changed = True
    while changed:
        changed = False
        root = np.array([find(i) for i in range(n)]).reshape(di, do)
        linked = set()
        for a in range(do):
            groups: dict[int, list[int]] = {}
            for x in range(di):
                groups.setdefault(int(root[x, a]), []).append(x)
            for xs in groups.values():
                linked.update((xs[0], y) for y in xs[1:])
        for x, y in linked:
            for b in range(do):
                changed |= union(x * do + b, y * do + b)
    root = np.array([find(i) for i in range(n)])
    return [np.flatnonzero(root == r) for r in np.unique(root)]


def _project_affine(x, dims):
    """Frobenius projection onto {Tr_out X = I}."""
    di, do = dims
    t = x.reshape(di, do, di, do)
    corr = (np.einsum("iaja->ij", t) - np.eye(di)) / do
    t = t - corr[:, None, :, None] * np.eye(do)[None, :, None, :]
    return t.reshape(di * do, di * do)


def polish_choi(z: np.ndarray, dims: tuple[int, int], blocks=None) -> np.ndarray:
    """Make a near-feasible matrix exactly PSD and trace preserving."""
    di, do = dims
    z = project_psd(z, blocks)
    t = partial_trace(z, dims, 1)
    evals, evecs = np.linalg.eigh(0.5 * (t + t.conj().T))
    floor = 1e-14 * max(evals[-1], 1.0)
    bad = evals <= floor
    evals = np.maximum(evals, floor)
    s = (evecs / np.sqrt(evals)) @ evecs.conj().T
    out = np.kron(s, np.eye(do)) @ z @ np.kron(s, np.eye(do)).conj().T
    if np.any(bad):
        # directions the iterate ignores: complete with a fixed output state
        pad = evecs[:, bad] @ evecs[:, bad].conj().T
        e0 = np.zeros((do, do))
        e0[0, 0] = 1.0
        out = out + np.kron(pad, e0)
    return 0.5 * (out + out.conj().T)


def dual_bound(c: np.ndarray, y: np.ndarray, dims: tuple[int, int], blocks=None) -> float:
    """Tr(Y') for the shift Y' = Y + t I making Y' (x) I - C PSD (weak duality)."""
    di, do = dims
    y = 0.5 * (y + y.conj().T)
    lam_min = _min_eig(np.kron(y, np.eye(do)) - c, blocks)
    shift = max(0.0, -lam_min)
    return float(np.trace(y).real + di * shift)


def kkt_multiplier(c: np.ndarray, x: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Y = Tr_out(C X), the trace-constraint multiplier if X is optimal."""
    y = partial_trace(c @ x, dims, 1)
    return 0.5 * (y + y.conj().T)


class _Run:
    """One ADMM trajectory at a fixed penalty."""

    def __init__(self, cs, dims, step, z, u, blocks, relaxation):
        self.cs, self.dims, self.step = cs, dims, step
        self.z, self.u, self.blocks, self.a = z, u, blocks, relaxation
        self.iterations = 0
        self.r_norm = self.s_norm = np.inf
        self.gap = np.inf

    def advance(self, k: int, tol: float, check_every: int) -> bool:
        """k iterations; True once the residuals are below tol."""
        z, u, step, a = self.z, self.u, self.step, self.a
        done = False
        for _ in range(k):
            x = _project_affine(z - u + self.cs / step, self.dims)
            xh = a * x + (1 - a) * z
            z_old = z
            z = project_psd(xh + u, self.blocks)
            u = u + xh - z
            self.iterations += 1
            if self.iterations % check_every == 0:
                # residuals relative to the iterate size, as in standard ADMM codes
                self.r_norm = np.linalg.norm(x - z) / max(np.linalg.norm(x), np.linalg.norm(z), 1e-30)
                self.s_norm = np.linalg.norm(z - z_old) / max(np.linalg.norm(u), 1e-30)
                if self.r_norm < tol and self.s_norm < tol:
                    done = True
                    break
        self.z, self.u = z, u
        return done


def solve(problem: SdpProblem, settings: SolverSettings | None = None,
          warm_start: tuple | np.ndarray | None = None) -> SolverResult:
    """ADMM for max Re Tr(C X) s.t. X >= 0, Tr_out X = I.

    ``warm_start`` is either a feasible Choi matrix or the ``state`` tuple
    (Z, U, step) of a previous result; a state tuple fixes the penalty.
    Stops when the primal and dual residuals are below ``tol`` or when the
    certified gap (dual bound minus the objective of the best polished
    iterate) is small.  Non-convergence is not an error: the best polished
    iterate is returned with ``converged=False``.
    """
    settings = settings or SolverSettings()
    c = 0.5 * (problem.objective + problem.objective.conj().T)
    dims = di, do = problem.dims
    n = di * do
    cnorm = np.linalg.norm(c)
    scale = cnorm if cnorm > 0 else 1.0
    cs = c / scale
    blocks = block_partition(c, dims) if settings.blocks else None
    mask = None
    if blocks is not None and len(blocks) > 1:
        mask = np.zeros((n, n), dtype=bool)
        for idx in blocks:
            mask[np.ix_(idx, idx)] = True

    def restrict(m):
        # a warm start from another objective may not respect the block pattern
        return m.copy() if mask is None else np.where(mask, m, 0)

    z0 = np.eye(n, dtype=complex) / do
    u0 = np.zeros((n, n), dtype=complex)
    if isinstance(warm_start, tuple):
        z0, u0, step0 = warm_start
        starts = [(float(step0), restrict(z0), restrict(u0))]
    else:
        if warm_start is not None:
            z0 = np.array(warm_start, dtype=complex)
        starts = [(st, restrict(z0), u0.copy()) for st in settings.steps]
    runs = [_Run(cs, dims, st, z, u, blocks, settings.relaxation) for st, z, u in starts]

    history = []
    best = {"x": None, "obj": -np.inf, "ub": np.inf, "run": runs[0]}

    def certify(run):
        xf = polish_choi(run.z, dims, blocks)
        obj = float(np.real(np.sum(c.conj() * xf)))
        ub = dual_bound(c, kkt_multiplier(c, xf, dims), dims, blocks)
        run.gap = ub - obj
        if obj > best["obj"]:
            best.update(x=xf, obj=obj, run=run)
        best["ub"] = min(best["ub"], ub)
        history.append(obj)

    def small_gap():
        gap = best["ub"] - best["obj"]
        if gap <= settings.gap_tol:
            return True
        return problem.cap is not None and gap <= settings.rel_gap * (problem.cap - best["obj"])

    converged = False
    while runs and not converged:
        for run in runs:
            k = min(settings.gap_every, settings.max_iter - run.iterations)
            if run.advance(k, settings.tol, settings.check_every):
                converged = True
            certify(run)
            if converged or small_gap():
                converged = True
                break
        runs = [r for r in runs if r.iterations < settings.max_iter]
        if len(runs) > 1 and runs[0].iterations >= settings.race_chunks * settings.gap_every:
            lead = min(r.gap for r in runs)
            runs = [r for r in runs if r.gap <= settings.drop_ratio * max(lead, 1e-300)]
    final = best["run"]
    # multiplier from x-stationarity at X = Z: Y (x) I = C - step*scale*U
    y = partial_trace(c - final.step * scale * final.u, dims, 1) / do
    best["ub"] = min(best["ub"], dual_bound(c, y, dims, blocks))
    return SolverResult(ChoiMatrix(best["x"], dims), best["obj"], best["ub"], converged,
                        final.iterations, float(final.r_norm), float(final.s_norm),
                        float(final.step), history, state=(final.z, final.u, final.step),
                        block_sizes=[len(b) for b in blocks] if blocks else [n])
