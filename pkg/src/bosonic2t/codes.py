"""Encodings on coherent-state constellations.

2T-qutrit and 2T-quoctit on the 24-state 2T constellation, [d, dn]-PSK
codes on a single-mode circle, and random encodings in the span of any
basis.  An :class:`Encoding` stores logical states as coefficient columns in
the (non-orthogonal) constellation basis.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constellation import (ConstellationState, StateBasis, build_2t_basis,
                            circle_basis, orthonormalize, residue_log_weights)
from .group_2t import QI, two_t

__all__ = [
    "Encoding", "QuoctitSpectrum", "DegenerateCodeError",
    "qutrit_codewords", "qutrit_logical", "quoctit_codewords",
    "quoctit_gram_analytic", "quoctit_logical", "reference_quoctit_vectors",
    "kappa", "u_permutation", "apply_U", "logical_U8", "psk_encoding",
    "random_encoding", "make_encoding", "code_symmetries", "fock_symmetries",
    "psk_structure",
]

SQRT3 = np.sqrt(3.0)


class DegenerateCodeError(ValueError):
    pass


@dataclass(frozen=True)
class Encoding:
    label: str
    basis: StateBasis
    coeffs: np.ndarray
    alpha: complex

    @property
    def logical_dim(self) -> int:
        return self.coeffs.shape[1]

    def logical_gram(self) -> np.ndarray:
        return self.coeffs.conj().T @ self.basis.gram @ self.coeffs

    def orthonormality_error(self) -> float:
        return float(np.abs(self.logical_gram() - np.eye(self.logical_dim)).max())

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "alpha": [self.alpha.real, self.alpha.imag],
            "logical_dim": self.logical_dim,
            "basis": [[[a.real, a.imag] for a in s.amplitudes] for s in self.basis.states],
            "tags": [s.tag for s in self.basis.states],
            "coeffs_re": self.coeffs.real.tolist(),
            "coeffs_im": self.coeffs.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Encoding":
        alpha = complex(*data["alpha"])
        states = tuple(
            ConstellationState(tuple(complex(*a) for a in amps), tag, alpha)
            for amps, tag in zip(data["basis"], data["tags"])
        )
        coeffs = np.array(data["coeffs_re"]) + 1j * np.array(data["coeffs_im"])
        return cls(data["label"], StateBasis(states), coeffs, alpha)

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Encoding":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_alpha(alpha):
    if alpha == 0:
        raise DegenerateCodeError("alpha = 0 collapses the constellation to the vacuum")


# --------------------------------------------------------------- 2T-qutrit

def qutrit_codewords(alpha=None) -> np.ndarray:
    """(24 x 3) indicator columns of the cosets l^n Q8."""
    out = np.zeros((24, 3))
    for n, block in enumerate(two_t().cosets("Q8")):
        out[block, n] = 1.0
    return out


def qutrit_logical(alpha: complex) -> Encoding:
    """|k> = nu_k sum_n exp(-2 pi i k n / 3) |phi_n>, phi_n normalized."""
    _check_alpha(alpha)
    basis = build_2t_basis(alpha)
    phi = qutrit_codewords()
    g = phi.T @ basis.gram @ phi
    phi = phi / np.sqrt(g[0, 0].real)
    c = (phi.T @ basis.gram @ phi)[1, 2].real
    omega = np.exp(-2j * np.pi / 3)
    nus = [1 / np.sqrt(3 * (1 + 2 * c)), 1 / np.sqrt(3 * (1 - c)), 1 / np.sqrt(3 * (1 - c))]
    if min(1 + 2 * c, 1 - c) < 1e-13:
        raise DegenerateCodeError(f"qutrit Gram is singular at alpha={alpha}")
    coeffs = np.column_stack([
        nus[k] * phi @ np.array([omega ** (k * n) for n in range(3)]) for k in range(3)
    ])
    return Encoding("2T-qutrit", basis, coeffs, complex(alpha))


# -------------------------------------------------------------- 2T-quoctit

def quoctit_codewords(alpha=None) -> np.ndarray:
    """(24 x 8) indicator columns of the blocks {q, ql, ql^2}, q in Q8 order."""
    out = np.zeros((24, 8))
    for t, block in enumerate(two_t().cosets("Z3")):
        out[block, t] = 1.0
    return out


@dataclass(frozen=True)
class QuoctitSpectrum:
    rho: complex
    tau: complex
    chi: complex
    lambdas: tuple[float, float, float, float]
    degeneracies: tuple[int, int, int, int]
    nus: tuple[float, ...]

    @property
    def trace_identity_error(self) -> float:
        l1, l2, l3, l4 = self.lambdas
        return abs(l1 + 2 * l2 + 2 * l3 + 3 * l4 - 8 * self.rho.real)


def _rho_tau_chi(alpha):
    x = abs(alpha) ** 2
    pre = np.exp(-(3 + 1j) / 2 * x)
    rho = 3 + 3 * pre * (1 + np.exp(1j * x))
    tau = pre * (2 + np.exp(1j * x)) * (1 + np.exp(x) + np.exp((1 + 1j) / 2 * x))
    chi = 3 * np.exp(-2 * x) * (1 + np.exp((3 - 1j) / 2 * x) * (1 + np.exp(1j * x)))
    return complex(rho), complex(tau), complex(chi)


# Gram pattern: 'r' -> rho, 't' -> tau, 'T' -> conj(tau), 'c' -> chi
_ETA_PATTERN = (
    "rtttcTTT",
    "TrtTtcTt",
    "TTrtttcT",
    "TtTrtTtc",
    "cTTTrttt",
    "tcTtTrtT",
    "ttcTTTrt",
    "tTtcTtTr",
)


def _nu_abc(x, a, b, c):
    s, sh = np.sin(x / 2), np.sinh(x / 2)
    val = 48 * np.exp(-x) * (np.cos(x / 2) - np.cosh(x / 2)) * (
        (a + b * SQRT3) * s - (3 + c * SQRT3) * sh)
    return float(np.sqrt(max(val, 0.0)))


def quoctit_gram_analytic(alpha: complex) -> tuple[np.ndarray, QuoctitSpectrum]:
    """Closed-form 8x8 codeword Gram matrix and its spectrum/normalizations."""
    rho, tau, chi = _rho_tau_chi(alpha)
    lookup = {"r": rho, "t": tau, "T": tau.conjugate(), "c": chi}
    eta = np.array([[lookup[ch] for ch in row] for row in _ETA_PATTERN])
    l1 = rho.real + chi.real + 6 * tau.real
    l2 = rho.real - chi.real + 2 * SQRT3 * abs(tau.imag)
    l3 = rho.real - chi.real - 2 * SQRT3 * abs(tau.imag)
    l4 = rho.real + chi.real - 2 * tau.real
    x = abs(alpha) ** 2
    nu0 = np.sqrt(48 * np.exp(-x) * (2 + 8 * np.cos(x / 2) * np.cosh(x / 2)
                                     + np.cos(x) + np.cosh(x)))
    # sign slots (a, b, c) of nu_abc matched to |1>..|4> by direct norm evaluation
    nu1, nu2, nu3, nu4 = (_nu_abc(x, +1, -1, -1), _nu_abc(x, -1, -1, +1),
                          _nu_abc(x, -1, +1, -1), _nu_abc(x, +1, +1, +1))
    nu5 = 4 * np.sqrt(max(np.exp(-x) * (3 * np.cosh(x) - 2 - np.cos(x)), 0.0))
    spec = QuoctitSpectrum(rho, tau, chi, (l1, l2, l3, l4), (1, 2, 2, 3),
                           (float(nu0), nu1, nu2, nu3, nu4, float(nu5), float(nu5), float(nu5)))
    return eta, spec


def kappa(a: int, b: int) -> complex:
    """kappa_ab = (1 + a i)(sqrt(3) + b) / 2."""
    return (1 + a * 1j) * (SQRT3 + b) / 2


def reference_quoctit_vectors() -> np.ndarray:
    """Unnormalized coefficient columns of |0>..|7> over (phi_+1, phi_+j, phi_+i, ...)."""
    kmm, kpm, kmp, kpp = kappa(-1, -1), kappa(1, -1), kappa(-1, 1), kappa(1, 1)
    rows = [
        [1, 1, 1, 1, 1, 1, 1, 1],
        [kmm, -kpm, 1, 1j, -kmm, kpm, -1, -1j],
        [-kpp, kmp, 1, -1j, kpp, -kmp, -1, 1j],
        [kpm, -kmm, 1, -1j, -kpm, kmm, -1, 1j],
        [-kmp, kpp, 1, 1j, kmp, -kpp, -1, -1j],
        [1, 1j, -1, -1j, 1, 1j, -1, -1j],
        [1, -1, 1, -1, 1, -1, 1, -1],
        [1, -1j, -1, 1j, 1, -1j, -1, 1j],
    ]
    return np.array(rows, dtype=complex).T


def quoctit_logical(alpha: complex, tol: float = 1e-9) -> Encoding:
    """Quoctit logical states from the numeric codeword Gram.

    Each reference coefficient vector is projected onto the numeric
    eigenspace it belongs to, then vectors sharing an eigenspace are
    re-orthonormalized in order (reference order wins).
    """
    _check_alpha(alpha)
    basis = build_2t_basis(alpha)
    phi = quoctit_codewords()
    eta = phi.T @ basis.gram @ phi
    evals, evecs = np.linalg.eigh(eta)
    if evals[0] < 1e-13 * evals[-1]:
        raise DegenerateCodeError(f"quoctit Gram is singular at alpha={alpha}")
    ref = reference_quoctit_vectors()
    # eigenspace clusters
    clusters: list[list[int]] = []
    for n in range(8):
        if clusters and evals[n] - evals[clusters[-1][-1]] < tol * evals[-1]:
            clusters[-1].append(n)
        else:
            clusters.append([n])
    cols = []
    for n in range(8):
        v = ref[:, n]
        lam = (v.conj() @ eta @ v).real / (v.conj() @ v).real
        cl = min(clusters, key=lambda c: abs(evals[c].mean() - lam))
        proj = evecs[:, cl] @ (evecs[:, cl].conj().T @ v)
        for w in cols:
            proj = proj - w * (w.conj() @ eta @ proj)
        norm = np.sqrt((proj.conj() @ eta @ proj).real)
        cols.append(proj / norm)
    coeffs = phi @ np.column_stack(cols)
    return Encoding("2T-quoctit", basis, coeffs, complex(alpha))


def quoctit_sectors(alpha: complex) -> tuple[int, ...]:
    """Eigenvalue label (1..4) of each logical state |0>..|7>.

    The reference pairs (|1>,|2>) and (|3>,|4>) sit in the lambda_2 and
    lambda_3 sectors respectively only while Im(tau) < 0; they swap
    otherwise.
    """
    _, spec = quoctit_gram_analytic(alpha)
    swap = spec.tau.imag > 0
    pair12, pair34 = (3, 2) if swap else (2, 3)
    return (1, pair12, pair12, pair34, pair34, 4, 4, 4)


# ------------------------------------------------------------ passive gate

def u_permutation() -> np.ndarray:
    """perm[s] = index of l * q_s: the action of the passive gate on the 24 states."""
    group = two_t()
    return group.left_perm(group.l_index)


def apply_U(x: np.ndarray) -> np.ndarray:
    """Coefficient vector(s) over the 24-state basis after |q> -> |l q>."""
    x = np.asarray(x)
    out = np.zeros_like(x)
    out[u_permutation()] = x
    return out


def logical_U8(alpha: complex) -> np.ndarray:
    """<m|U|n> for the quoctit logical basis."""
    enc = quoctit_logical(alpha)
    g = enc.basis.gram
    return enc.coeffs.conj().T @ g @ apply_U(enc.coeffs)


# -------------------------------------------------------------------- PSK

def psk_encoding(d: int, n: int, alpha: complex) -> Encoding:
    """[d, dn]-PSK: |k> ~ sum_l exp(-2 pi i k l / d) |alpha exp(2 pi i l / dn)>.

    Logical k is supported on Fock numbers congruent to k*n mod dn.  Norms use
    the closed form m^2 exp(-x) P_{kn}(x), x = |alpha|^2, which stays exact
    where the circle Gram is numerically singular.
    """
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    _check_alpha(alpha)
    m = d * n
    basis = circle_basis(m, alpha)
    ell = np.arange(m)
    raw = np.column_stack([np.exp(-2j * np.pi * k * ell / d) for k in range(d)])
    x = abs(alpha) ** 2
    logp = residue_log_weights(x, m)[[(k * n) % m for k in range(d)]]
    log_norms = np.log(m) + 0.5 * (logp - x)
    if not np.all(np.isfinite(log_norms)) or log_norms.min() < -700:
        raise DegenerateCodeError(f"[{d},{m}]-PSK logical norms underflow at alpha={alpha}")
    return Encoding(f"[{d},{m}]-PSK", basis, raw * np.exp(-log_norms), complex(alpha))


def psk_structure(enc: Encoding) -> tuple[int, int] | None:
    """(d, n) for a [d, dn]-PSK encoding, else None.

    Logical k lives on the Fock residue class k*n mod dn.
    """
    m = re.fullmatch(r"\[(\d+),(\d+)\]-PSK", enc.label)
    if not m:
        return None
    d, pts = int(m.group(1)), int(m.group(2))
    return d, pts // d


# ----------------------------------------------------------------- random

def random_encoding(d: int, basis: StateBasis, seed: int, tol: float = 1e-12) -> Encoding:
    """d Gram-orthonormal logical states drawn isotropically from span(basis)."""
    frame = orthonormalize(basis, tol)
    if d > frame.rank:
        raise DegenerateCodeError(f"d={d} exceeds basis rank {frame.rank}")
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(frame.rank, d)) + 1j * rng.normal(size=(frame.rank, d))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    alpha = basis.states[0].scale
    return Encoding(f"random-{d}-s{seed}", basis, frame.transform @ q, complex(alpha))


def make_encoding(code: str, alpha: float, seed: int = 0) -> Encoding:
    """Factory for code names: '2T-qutrit', '2T-quoctit', 'psk:d,n', 'random:d' (on the 2T basis)."""
    code = code.strip()
    if code in ("2T-qutrit", "qutrit"):
        return qutrit_logical(alpha)
    if code in ("2T-quoctit", "quoctit"):
        return quoctit_logical(alpha)
    if code.startswith("psk:"):
        d, n = (int(v) for v in code[4:].split(","))
        return psk_encoding(d, n, alpha)
    if code.startswith("random:"):
        d = int(code[7:].split("@")[0])
        return random_encoding(d, build_2t_basis(alpha), seed)
    raise ValueError(f"unknown code name {code!r}")


# --------------------------------------------------------------- symmetries

def code_symmetries(enc: Encoding) -> list[tuple[np.ndarray, int]]:
    """Commuting basis permutations that map the code space to itself.

    Each is a passive linear-optics map, so it commutes with loss and
    dephasing.  2T codes: left multiplication by -l (order 6); the qutrit
    also by right multiplication by i (order 4), which fixes each codeword.
    [d, dn]-PSK: rotation of the circle by one step.  Random codes: none.
    """
    group = two_t()
    if enc.label in ("2T-qutrit", "2T-quoctit"):
        minus_l = group.index_of(-group[group.l_index].quaternion)
        out = [(group.left_perm(minus_l), 6)]
        if enc.label == "2T-qutrit":
            out.append((group.right_perm(group.index_of(QI)), 4))
        return out
    if enc.label.endswith("-PSK"):
        m = len(enc.basis)
        return [((np.arange(m) + 1) % m, m)]
    return []


def fock_symmetries(enc: Encoding, occupations: np.ndarray) -> list[tuple[np.ndarray, int]]:
    """Code symmetries that are diagonal in the Fock basis, as (charge per level, order).

    The unitary is exp(2 pi i charge / order) on each Fock state.  2T codes:
    left multiplication by i, (alpha1, alpha2) -> (i alpha1, -i alpha2);
    the qutrit also by right multiplication by i, both modes times i.
    PSK: rotation by 2 pi / dn.
    """
    occ = np.atleast_2d(occupations.T).T
    if enc.label in ("2T-qutrit", "2T-quoctit"):
        out = [((occ[:, 0] - occ[:, 1]) % 4, 4)]
        if enc.label == "2T-qutrit":
            out.append(((occ[:, 0] + occ[:, 1]) % 4, 4))
        return out
    if enc.label.endswith("-PSK"):
        m = len(enc.basis)
        return [(occ[:, 0] % m, m)]
    return []
