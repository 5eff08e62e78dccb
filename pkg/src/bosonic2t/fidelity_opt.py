"""Entanglement fidelity of encode-noise-recover chains and its optimization.

A chain is ``C = R o N o E`` on a d-level logical system.  Every map is
written in orthonormal frames: ``E`` goes from the logical space into the
frame of the code span, ``N`` is a :class:`~bosonic2t.channels.ChannelRep`
(or any Choi map), and ``R`` returns to the logical space.  For fixed ``E``
and ``N`` the fidelity is linear in the Choi matrix of ``R`` and vice versa,
so each half of the alternation is one SDP::

    F = (1/d^2) sum_kl <k| C(|k><l|) |l> = Re Tr(M J)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelRep, FrameMismatchError, dephasing_fock, loss_circle, loss_superop
from .codes import Encoding, code_symmetries, fock_symmetries, psk_structure
from .conic_solver import ChoiMatrix, SdpProblem, SolverResult, SolverSettings, solve
from .constellation import (adapt_frame, charge_basis, fock_matrix, nearest_unitary,
                            orthonormalize, permutation_matrix, residue_states)

__all__ = [
    "FidelityInstance", "AlternationResult", "TruncationError",
    "encoding_isometry", "encoding_choi", "adjoint_recovery", "symmetric_logical_basis",
    "entanglement_fidelity", "fidelity_from_kraus", "fidelity_from_choi",
    "recovery_objective", "encoding_objective", "optimal_recovery",
    "optimal_encoding", "alternate_optimize", "loss_instance", "fidelity_loss",
    "dephasing_instance", "fidelity_dephasing",
]

log = logging.getLogger(__name__)

# looser than the solver default: sweeps run hundreds of these
SWEEP_SETTINGS = SolverSettings(tol=1e-7, max_iter=20_000, rel_gap=1e-3)


class TruncationError(ValueError):
    """Fock truncation captures too little of the code states."""


# ---------------------------------------------------------------- fidelity

def _stack_units(d):
    """|k><l| for all k, l as a (d, d, d, d) array indexed [k, l]."""
    e = np.eye(d)
    return np.einsum("ka,lb->klab", e, e).astype(complex)


def fidelity_from_choi(logical: ChoiMatrix) -> float:
    """<Phi_d| J |Phi_d> / d with |Phi_d> = sum_k |kk>, i.e. (1/d^2) sum_kl J[kk, ll]."""
    d = logical.dims[0]
    if logical.dims[1] != d:
        raise FrameMismatchError(f"logical channel is {logical.dims}, not square")
    phi = np.eye(d).reshape(-1)
    return float(np.real(phi @ logical.matrix @ phi)) / d ** 2


def fidelity_from_kraus(ops) -> float:
    """(1/d^2) sum_i |Tr A_i|^2 over logical-level Kraus operators."""
    d = ops[0].shape[0]
    return float(sum(abs(np.trace(a)) ** 2 for a in ops)) / d ** 2


@dataclass
class FidelityInstance:
    """Encoding, noise and recovery with matching frame dimensions."""

    encoding: ChoiMatrix
    noise: ChannelRep | ChoiMatrix
    recovery: ChoiMatrix
    d: int = field(init=False)

    def __post_init__(self):
        self.d = self.encoding.dims[0]
        if self.encoding.dims[1] != self.noise.dim_in:
            raise FrameMismatchError(
                f"encoding output {self.encoding.dims[1]} != noise input {self.noise.dim_in}")
        if self.noise.dim_out != self.recovery.dims[0]:
            raise FrameMismatchError(
                f"noise output {self.noise.dim_out} != recovery input {self.recovery.dims[0]}")
        if self.recovery.dims[1] != self.d:
            raise FrameMismatchError(f"recovery output {self.recovery.dims[1]} != d={self.d}")

    def logical_channel(self) -> ChoiMatrix:
        units = _stack_units(self.d)
        out = self.recovery.apply(self.noise.apply(self.encoding.apply(units)))
        # Choi matrix sum_kl |k><l| (x) C(|k><l|)
        return ChoiMatrix(out.transpose(0, 2, 1, 3).reshape(self.d ** 2, self.d ** 2),
                          (self.d, self.d))

    def logical_kraus(self) -> list[np.ndarray]:
        return [r @ n @ e for r in self.recovery.kraus() for n in self.noise.kraus()
                for e in self.encoding.kraus()]


def entanglement_fidelity(inst: FidelityInstance, method: str = "choi") -> float:
    if method == "choi":
        f = fidelity_from_choi(inst.logical_channel())
    elif method == "kraus":
        f = fidelity_from_kraus(inst.logical_kraus())
    else:
        raise ValueError("method must be 'choi' or 'kraus'")
    return float(np.clip(f, 0.0, 1.0))


# ------------------------------------------------------------------ frames

def encoding_isometry(enc: Encoding, frame) -> np.ndarray:
    """Frame coordinates (rank x d) of the logical states."""
    return frame.coords(enc.coeffs)


def encoding_choi(v: np.ndarray) -> ChoiMatrix:
    return ChoiMatrix.from_isometry(v)


def symmetric_logical_basis(v: np.ndarray, unitaries: list[np.ndarray], orders: list[int],
                            tol: float = 1e-8) -> np.ndarray:
    """Rotate the logical basis (columns of v) onto joint eigenvectors of code symmetries.

    Entanglement fidelity does not depend on the logical basis, and with
    charge-definite logical states the SDP objectives become block sparse.
    """
    reps = []
    for u in unitaries:
        # least squares rather than v^dag u v: v may be a truncated (subnormalized) isometry
        r = np.linalg.lstsq(v, u @ v, rcond=None)[0]
        if np.abs(u @ v - v @ r).max() > tol:
            raise FrameMismatchError("symmetry does not preserve the code space")
        reps.append(nearest_unitary(r))
    if not reps:
        return v
    q, _ = charge_basis(reps, orders)
    return v @ q


def adjoint_recovery(v: np.ndarray) -> ChoiMatrix:
    """rho -> V^dag rho V + Tr((1 - V V^dag) rho) |0><0|: the code-projection decoder."""
    n, d = v.shape
    ops = [v.conj().T]
    evals, evecs = np.linalg.eigh(np.eye(n) - v @ v.conj().T)
    for u in evecs[:, evals > 0.5].T:
        k = np.zeros((d, n), dtype=complex)
        k[0] = u.conj()
        ops.append(k)
    return ChoiMatrix.from_kraus(ops)


# --------------------------------------------------------------- objectives

def recovery_objective(encoding: ChoiMatrix, noise) -> np.ndarray:
    """M on (noise_out (x) d) with F = Re Tr(M J_R)."""
    d = encoding.dims[0]
    sigma = noise.apply(encoding.apply(_stack_units(d)))  # [k, l, x, y]
    n = sigma.shape[-1]
    m = np.einsum("klxy->ylxk", sigma) / d ** 2
    m = m.reshape(n * d, n * d)
    return 0.5 * (m + m.conj().T)


def encoding_objective(recovery: ChoiMatrix, noise, d: int) -> np.ndarray:
    """M on (d (x) noise_in) with F = Re Tr(M J_E)."""
    h = noise.adjoint(recovery.adjoint(_stack_units(d)))  # [x, y, a, b] = G^dag(|x><y|)
    n = h.shape[-1]
    m = h.transpose(0, 2, 1, 3).reshape(d * n, d * n) / d ** 2
    return 0.5 * (m + m.conj().T)


def optimal_recovery(encoding: ChoiMatrix, noise, settings: SolverSettings | None = None,
                     warm_start=None) -> tuple[ChoiMatrix, float, SolverResult]:
    d = encoding.dims[0]
    res = solve(SdpProblem(recovery_objective(encoding, noise), (noise.dim_out, d), cap=1.0),
                settings or SWEEP_SETTINGS, warm_start)
    if not res.converged:
        log.warning("recovery SDP stopped after %d iterations (gap %.2e)", res.iterations, res.gap)
    return res.choi, res.objective, res


def optimal_encoding(recovery: ChoiMatrix, noise, d: int, settings: SolverSettings | None = None,
                     warm_start=None) -> tuple[ChoiMatrix, float, SolverResult]:
    res = solve(SdpProblem(encoding_objective(recovery, noise, d), (d, noise.dim_in), cap=1.0),
                settings or SWEEP_SETTINGS, warm_start)
    if not res.converged:
        log.warning("encoding SDP stopped after %d iterations (gap %.2e)", res.iterations, res.gap)
    return res.choi, res.objective, res


@dataclass
class AlternationResult:
    trajectory: list[float]
    encoding: ChoiMatrix
    recovery: ChoiMatrix
    diagnostics: list[dict]

    @property
    def fidelity(self) -> float:
        return self.trajectory[-1]

    @property
    def steps(self) -> int:
        return len(self.trajectory)


def alternate_optimize(encoding: ChoiMatrix, noise, n_sdp: int = 20,
                       settings: SolverSettings | None = None,
                       stop_delta: float = 1e-8) -> AlternationResult:
    """Recovery then encoding, ``n_sdp`` times; trajectory has one F per half step.

    A half step that would lower F (solver noise) keeps the previous map, so
    the trajectory is nondecreasing by construction.
    """
    if n_sdp < 1:
        raise ValueError("n_sdp must be >= 1")
    settings = settings or SWEEP_SETTINGS
    d = encoding.dims[0]
    enc = encoding
    rec, f, res = optimal_recovery(enc, noise, settings)
    traj, diags = [f], [{"half": "R", **res.diagnostics()}]
    r_state, e_state = res.state, None
    for step in range(n_sdp):
        if step > 0:
            rec_new, f_new, res = optimal_recovery(enc, noise, settings, r_state)
            r_state = res.state
            diags.append({"half": "R", **res.diagnostics()})
            if f_new >= traj[-1]:
                rec, f = rec_new, f_new
            traj.append(max(f_new, traj[-1]))
        enc_new, f_new, res = optimal_encoding(rec, noise, d, settings, e_state)
        e_state = res.state
        diags.append({"half": "E", **res.diagnostics()})
        if f_new >= traj[-1]:
            enc, f = enc_new, f_new
        traj.append(max(f_new, traj[-1]))
        if len(traj) >= 3 and traj[-1] - traj[-3] < stop_delta:
            break
    return AlternationResult(traj, enc, rec, diags)


# ---------------------------------------------------------------- loss

def loss_instance(enc: Encoding, gamma: float, tol: float = 1e-12, symmetric: bool = True):
    """(encoding Choi, loss channel) in the frames of span(basis) and span(damped basis).

    With ``symmetric`` both frames and the logical basis are adapted to the
    code's permutation symmetries, which block-diagonalizes the SDPs.
    PSK codes use the Fock-residue frames of :func:`loss_circle` instead.
    """
    psk = psk_structure(enc)
    if psk is not None:
        # residue frames: exact and well conditioned even where the circle Gram is not
        d, n = psk
        noise = loss_circle(d * n, enc.alpha, gamma)
        v = np.eye(d * n, dtype=complex)[:, [(k * n) % (d * n) for k in range(d)]]
        return encoding_choi(v), noise
    in_frame = orthonormalize(enc.basis, tol)
    out_frame = orthonormalize(enc.basis.damped(gamma), tol)
    syms = code_symmetries(enc) if symmetric else []
    perms, orders = [p for p, _ in syms], [o for _, o in syms]
    in_frame, _ = adapt_frame(in_frame, perms, orders)
    out_frame, _ = adapt_frame(out_frame, perms, orders)
    noise = loss_superop(enc.basis, gamma, tol, in_frame, out_frame)
    v = encoding_isometry(enc, in_frame)
    v = symmetric_logical_basis(v, [in_frame.represent(permutation_matrix(p)) for p in perms],
                                orders)
    return encoding_choi(v), noise


def fidelity_loss(enc: Encoding, gamma: float, n_sdp: int = 0,
                  settings: SolverSettings | None = None) -> tuple[float, AlternationResult | None]:
    """Optimal-recovery F for a fixed code (``n_sdp=0``) or after alternation."""
    if gamma == 0:
        return 1.0, None
    e, noise = loss_instance(enc, gamma)
    if n_sdp == 0:
        _, f, _ = optimal_recovery(e, noise, settings)
        return float(np.clip(f, 0.0, 1.0)), None
    out = alternate_optimize(e, noise, n_sdp, settings)
    return float(np.clip(out.fidelity, 0.0, 1.0)), out


# ---------------------------------------------------------------- dephasing

@dataclass
class DephasingSetup:
    encoding: ChoiMatrix
    noise: ChannelRep
    captured_norm: float
    support_dim: int


def _resolve_cap(modes: int, n_total: int, mode_cap):
    if mode_cap == "half":
        return n_total // 2 if modes > 1 else None
    return mode_cap


def dephasing_instance(enc: Encoding, delta: float, n_total: int, mode_cap: int | str | None = "half",
                       norm_floor: float = 0.75, support_tol: float = 1e-10,
                       symmetric: bool = True) -> DephasingSetup:
    """Embed the logical states in truncated Fock space and dephase them.

    The truncated logical states are kept subnormalized: the dropped tail
    counts as a decoding failure, so F is a lower bound on the untruncated
    value and is nondecreasing in N.  ``mode_cap="half"`` caps each mode of
    a two-mode state at N//2 photons.  The recovery input is compressed onto
    the support of N(code projector), the Fock states whose code weight
    exceeds ``support_tol`` times the largest; grouped by symmetry sector so
    the recovery SDP stays block sparse.
    """
    modes = enc.basis.modes
    mode_cap = _resolve_cap(modes, n_total, mode_cap)
    psk = psk_structure(enc)
    if psk is not None:
        d, n = psk
        v = residue_states(d * n, enc.alpha, n_total)[:, [(k * n) % (d * n) for k in range(d)]]
        v = v.astype(complex)
    else:
        v = fock_matrix(enc.basis, n_total, mode_cap) @ enc.coeffs  # D x d
    captured = float(np.sqrt(np.min(np.sum(np.abs(v) ** 2, axis=0))))
    if captured < norm_floor:
        raise TruncationError(
            f"N={n_total} keeps norm {captured:.4f} < {norm_floor} of the worst logical state")
    noise = dephasing_fock(n_total, delta, modes, mode_cap)
    occ = noise.info["occupations"]
    syms = fock_symmetries(enc, occ) if symmetric else []
    if syms:
        units = [np.diag(np.exp(2j * np.pi * ch / o)) for ch, o in syms]
        v = symmetric_logical_basis(v, units, [o for _, o in syms])
        sector = np.unique(np.column_stack([ch for ch, _ in syms]), axis=0, return_inverse=True)[1]
    else:
        sector = np.zeros(len(occ), dtype=int)
    sector = np.ravel(sector)
    # N(V V^dag) = (V V^dag) * w with w positive definite, so for delta > 0 its
    # support is exactly the set of Fock states carrying code weight
    # (Oppenheim: det(P * w) >= det(w) prod P_ii).  Unlike an eigenbasis this
    # frame does not depend on delta or alpha, so neighbouring points can
    # warm start each other.
    weight = np.sum(np.abs(v) ** 2, axis=1)
    keep = np.flatnonzero(weight > support_tol * weight.max())
    keep = keep[np.argsort(sector[keep], kind="stable")]
    iso = np.eye(len(occ))[:, keep]
    noise = noise.restrict_output(iso)
    return DephasingSetup(ChoiMatrix.from_kraus([v]), noise, captured, iso.shape[1])


def fidelity_dephasing(enc: Encoding, delta: float, n_total: int, mode_cap: int | str | None = "half",
                       settings: SolverSettings | None = None, norm_floor: float = 0.75,
                       support_tol: float = 1e-10, warm_start=None) -> tuple[float, dict]:
    """Optimal-recovery F under two-mode (or single-mode) dephasing at truncation N.

    ``info["state"]`` is the solver state; it warm starts another call with
    the same code and truncation (the recovery frame is shared).
    """
    setup = dephasing_instance(enc, delta, n_total, mode_cap, norm_floor, support_tol)
    info = {"captured_norm": setup.captured_norm, "support_dim": setup.support_dim,
            "N": n_total}
    n = setup.support_dim * setup.encoding.dims[0]
    if isinstance(warm_start, tuple) and warm_start[0].shape != (n, n):
        warm_start = None  # different frame: start cold
    _, f, res = optimal_recovery(setup.encoding, setup.noise, settings, warm_start)
    info["solver"] = res.diagnostics()
    info["state"] = res.state
    return float(np.clip(f, 0.0, 1.0)), info
