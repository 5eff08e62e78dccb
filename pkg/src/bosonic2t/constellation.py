"""Coherent-state constellations on one or two bosonic modes.

Overlaps, Gram matrices, whitening into an orthonormal frame, and the
embedding of coherent states into a truncated Fock space.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .group_2t import two_t

__all__ = [
    "ConstellationState", "StateBasis", "OrthoFrame", "FockVector",
    "EmptyFrameError", "coherent_overlap", "overlap_matrix", "build_2t_basis",
    "circle_basis", "gram_matrix", "orthonormalize", "fock_indices",
    "coherent_amplitudes", "to_fock", "fock_matrix", "write_constellation_csv",
    "charge_basis", "permutation_matrix", "adapt_frame", "nearest_unitary",
    "residue_log_weights", "residue_states",
]


class EmptyFrameError(ValueError):
    """Every Gram eigenvalue fell below the rank tolerance."""


@dataclass(frozen=True)
class ConstellationState:
    """Product coherent state |amplitudes[0]>|amplitudes[1]>...

    ``tag`` is the 2T element index the state was built from, if any,
    and ``scale`` the global coherence factor.
    """

    amplitudes: tuple[complex, ...]
    tag: int | None = None
    scale: complex = 1.0

    @property
    def alpha1(self) -> complex:
        return self.amplitudes[0]

    @property
    def alpha2(self) -> complex:
        return self.amplitudes[1] if len(self.amplitudes) > 1 else 0j

    @property
    def modes(self) -> int:
        return len(self.amplitudes)


@dataclass(frozen=True)
class StateBasis:
    states: tuple[ConstellationState, ...]
    label: str = ""

    def __len__(self) -> int:
        return len(self.states)

    @property
    def modes(self) -> int:
        return self.states[0].modes

    @cached_property
    def params(self) -> np.ndarray:
        """(n_states, n_modes) complex array of coherence parameters."""
        return np.array([s.amplitudes for s in self.states], dtype=complex)

    @cached_property
    def gram(self) -> np.ndarray:
        return overlap_matrix(self.params, self.params)

    def damped(self, gamma: float) -> "StateBasis":
        """The same constellation with every amplitude scaled by sqrt(1-gamma)."""
        f = np.sqrt(1.0 - gamma)
        return StateBasis(
            tuple(ConstellationState(tuple(f * a for a in s.amplitudes), s.tag, s.scale * f)
                  for s in self.states),
            label=f"{self.label}-damped",
        )


def coherent_overlap(a: complex, b: complex) -> complex:
    """<a|b> for single-mode coherent states."""
    return complex(np.exp(-abs(a) ** 2 / 2 - abs(b) ** 2 / 2 + np.conj(a) * b))


def overlap_matrix(bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    """Matrix of <bra_s|ket_t> for multimode product coherent states.

    ``bra`` and ``ket`` have shape (n, modes); the exponent is summed over
    modes before exponentiating.
    """
    bra = np.atleast_2d(bra)
    ket = np.atleast_2d(ket)
    expo = (-0.5 * np.sum(np.abs(bra) ** 2, axis=1)[:, None]
            - 0.5 * np.sum(np.abs(ket) ** 2, axis=1)[None, :]
            + bra.conj() @ ket.T)
    return np.exp(expo)


def build_2t_basis(alpha: complex) -> StateBasis:
    """The 24 two-mode states |(a+bi)alpha>|(c-di)alpha> in canonical 2T order."""
    group = two_t()
    states = []
    for el in group.elements:
        z1, z2 = el.quaternion.complex_pair()
        states.append(ConstellationState((z1 * alpha, z2 * alpha), el.index, alpha))
    return StateBasis(tuple(states), label="2T")


def circle_basis(m: int, alpha: complex) -> StateBasis:
    """m single-mode states alpha*exp(2 pi i l/m), l = 0..m-1."""
    phases = np.exp(2j * np.pi * np.arange(m) / m)
    return StateBasis(
        tuple(ConstellationState((complex(alpha * p),), None, alpha) for p in phases),
        label=f"circle{m}",
    )


def gram_matrix(basis: StateBasis) -> np.ndarray:
    return basis.gram


@dataclass(frozen=True)
class OrthoFrame:
    """Whitening of a Gram matrix: ``transform.conj().T @ gram @ transform = I``.

    Columns of ``transform`` are the coefficients (in the non-orthogonal
    basis) of the orthonormal frame vectors.
    """

    transform: np.ndarray
    gram: np.ndarray
    eigenvalues: np.ndarray
    tol: float

    @property
    def rank(self) -> int:
        return self.transform.shape[1]

    @property
    def size(self) -> int:
        return self.transform.shape[0]

    def coords(self, coeffs: np.ndarray) -> np.ndarray:
        """Frame coordinates of vectors given by basis coefficients."""
        return self.transform.conj().T @ (self.gram @ coeffs)

    @property
    def projector_map(self) -> np.ndarray:
        """(rank x n) map from basis coefficients to frame coordinates."""
        return self.transform.conj().T @ self.gram

    def represent(self, op: np.ndarray) -> np.ndarray:
        """Matrix in frame coordinates of an operator given on basis coefficients."""
        return self.projector_map @ op @ self.transform


def orthonormalize(basis: StateBasis | np.ndarray, tol: float = 1e-12) -> OrthoFrame:
    """Eigen-whitening; drops directions with eigenvalue < tol * max eigenvalue."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    gram = basis.gram if isinstance(basis, StateBasis) else np.asarray(basis)
    gram = 0.5 * (gram + gram.conj().T)
    evals, evecs = np.linalg.eigh(gram)
    top = evals[-1]
    if top <= 0:
        raise EmptyFrameError("Gram matrix has no positive eigenvalue")
    keep = evals > tol * top
    if not np.any(keep):
        raise EmptyFrameError("no direction above the rank tolerance")
    # largest eigenvalues first so truncation order is stable
    ev = evals[keep][::-1]
    vecs = evecs[:, keep][:, ::-1]
    return OrthoFrame(vecs / np.sqrt(ev), gram, ev, tol)


def permutation_matrix(perm: np.ndarray) -> np.ndarray:
    """P with (P c)[perm[s]] = c[s]: the state |s> is sent to |perm[s]>."""
    perm = np.asarray(perm)
    p = np.zeros((len(perm), len(perm)))
    p[perm, np.arange(len(perm))] = 1.0
    return p


def charge_basis(unitaries: list[np.ndarray], orders: list[int], tol: float = 1e-8):
    """Joint eigenbasis of commuting unitaries with U^order = 1.

    Returns ``(q, charges)``: q is unitary, column j spans part of the joint
    eigenspace with eigenvalues exp(2 pi i charges[j][g] / orders[g]).
    Columns are grouped by charge.
    """
    dim = unitaries[0].shape[0] if unitaries else 0
    spaces = [(np.eye(dim, dtype=complex), ())]
    for u, order in zip(unitaries, orders):
        if np.abs(u.conj().T @ u - np.eye(dim)).max() > tol:
            raise ValueError("symmetry is not unitary on this space")
        nxt = []
        for basis, label in spaces:
            r = basis.conj().T @ u @ basis
            powers = [np.eye(r.shape[0], dtype=complex)]
            for _ in range(order - 1):
                powers.append(powers[-1] @ r)
            for ch in range(order):
                w = np.exp(-2j * np.pi * ch / order)
                proj = sum(w ** k * pk for k, pk in enumerate(powers)) / order
                evals, evecs = np.linalg.eigh(0.5 * (proj + proj.conj().T))
                keep = evals > 0.5
                if keep.any():
                    nxt.append((basis @ evecs[:, keep], label + (ch,)))
        spaces = nxt
    if not spaces:
        return np.zeros((0, 0), dtype=complex), []
    q = np.hstack([b for b, _ in spaces])
    charges = [lab for b, lab in spaces for _ in range(b.shape[1])]
    if q.shape[1] != dim:
        raise ValueError("unitaries do not have the declared orders")
    return q, charges


def nearest_unitary(u: np.ndarray, tol: float = 1e-5) -> np.ndarray:
    """Polar factor of u; an ill-conditioned Gram inflates roundoff in the represented symmetry."""
    if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > tol:
        raise ValueError("symmetry is not unitary on this space")
    w, _, vh = np.linalg.svd(u)
    return w @ vh


def adapt_frame(frame: "OrthoFrame", perms: list[np.ndarray], orders: list[int]):
    """Rotate a frame onto joint eigenvectors of basis permutations.

    The permutations must map the spanned space to itself (true for any
    symmetry of the constellation).  Returns ``(frame, charges)``.
    """
    if not perms:
        return frame, [()] * frame.rank
    us = [nearest_unitary(frame.represent(permutation_matrix(p))) for p in perms]
    q, charges = charge_basis(us, orders)
    return OrthoFrame(frame.transform @ q, frame.gram, frame.eigenvalues, frame.tol), charges


def fock_indices(n_total: int, modes: int = 2, mode_cap: int | None = None) -> np.ndarray:
    """Occupations (n1, ..., n_modes) with sum <= n_total and each <= mode_cap.

    Ordered by total photon number, then lexicographically.
    """
    cap = n_total if mode_cap is None else min(mode_cap, n_total)
    if modes == 1:
        return np.arange(cap + 1)[:, None]
    grids = np.array(np.meshgrid(*[np.arange(cap + 1)] * modes, indexing="ij"))
    occ = grids.reshape(modes, -1).T
    occ = occ[occ.sum(axis=1) <= n_total]
    order = np.lexsort(tuple(occ[:, ::-1].T) + (occ.sum(axis=1),))
    return occ[order]


def coherent_amplitudes(alpha: complex, n_max: int) -> np.ndarray:
    """e^{-|a|^2/2} a^n / sqrt(n!) for n = 0..n_max, computed in log space."""
    n = np.arange(n_max + 1)
    if alpha == 0:
        out = np.zeros(n_max + 1, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * np.angle(alpha) * n)


@dataclass(frozen=True)
class FockVector:
    n_total: int
    occupations: np.ndarray
    amplitudes: np.ndarray
    mode_cap: int | None = None

    @property
    def captured_norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def to_fock(state: ConstellationState, n_total: int, mode_cap: int | None = None) -> FockVector:
    if n_total < 0:
        raise ValueError("photon truncation must be >= 0")
    occ = fock_indices(n_total, state.modes, mode_cap)
    amp = np.ones(len(occ), dtype=complex)
    for m, a in enumerate(state.amplitudes):
        amp = amp * coherent_amplitudes(a, n_total)[occ[:, m]]
    return FockVector(n_total, occ, amp, mode_cap)


def fock_matrix(basis: StateBasis, n_total: int, mode_cap: int | None = None) -> np.ndarray:
    """(D x n_states) matrix whose columns are the truncated Fock embeddings."""
    occ = fock_indices(n_total, basis.modes, mode_cap)
    out = np.ones((len(occ), len(basis)), dtype=complex)
    for s, st in enumerate(basis.states):
        for m, a in enumerate(st.amplitudes):
            out[:, s] *= coherent_amplitudes(a, n_total)[occ[:, m]]
    return out


def write_constellation_csv(basis: StateBasis, path: str | Path) -> Path:
    """One row per state: index, 2T tag and label, then re/im/radius for each mode."""
    path = Path(path)
    group = two_t()
    modes = basis.modes
    header = ["state", "tag", "label"]
    for m in range(1, modes + 1):
        header += [f"re{m}", f"im{m}", f"radius{m}"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s, st in enumerate(basis.states):
            label = group[st.tag].label if st.tag is not None else ""
            row = [s, "" if st.tag is None else st.tag, label]
            for a in st.amplitudes:
                row += [f"{a.real:.12g}", f"{a.imag:.12g}", f"{abs(a):.12g}"]
            w.writerow(row)
    return path


def residue_log_weights(x: float, m: int, n_max: int | None = None) -> np.ndarray:
    """log P_j(x) = log sum_{n = j mod m} x^n / n!  for j = 0..m-1, without cancellation."""
    if x < 0 or m < 1:
        raise ValueError("need x >= 0 and m >= 1")
    if n_max is None:
        n_max = int(x + 12 * np.sqrt(x) + 4 * m + 60)
    n = np.arange(n_max + 1)
    if x == 0:
        terms = np.where(n == 0, 0.0, -np.inf)
    else:
        terms = n * np.log(x) - gammaln(n + 1)
    out = np.full(m, -np.inf)
    for j in range(m):
        t = terms[j::m]
        if t.size and np.isfinite(t).any():
            top = t.max()
            out[j] = top + np.log(np.exp(t - top).sum())
    return out


def residue_states(m: int, alpha: float, n_max: int) -> np.ndarray:
    """(n_max+1, m) orthonormal Fock vectors e_j ~ sum_{n = j mod m} alpha^n / sqrt(n!) |n>.

    They span the same space as the m circle states alpha * exp(2 pi i l / m)
    and are numerically stable where the coherent-state Gram is not.
    Truncation at n_max leaves them subnormalized.
    """
    a = abs(alpha)
    logp = residue_log_weights(a * a, m)
    n = np.arange(n_max + 1)
    out = np.zeros((n_max + 1, m))
    if a == 0:
        out[0, 0] = 1.0
        return out
    logc = n * np.log(a) - 0.5 * gammaln(n + 1)
    for j in range(m):
        if np.isfinite(logp[j]):
            sel = n[j::m]
            out[sel, j] = np.exp(logc[sel] - 0.5 * logp[j])
    return out
