"""Pure-loss and dephasing channels.

Both channels act as a Hadamard (entrywise) product on a density matrix
written in a suitable basis::

    N(rho) = P [ (W rho W^dag) * w ] P^dag

For loss the basis is the coherent-state constellation (coefficients are
carried onto the damped constellation), for dephasing it is the Fock basis.
``w`` is positive semidefinite, so Kraus operators follow from its
eigendecomposition.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import lgamma

import numpy as np

from .constellation import StateBasis, fock_indices, orthonormalize, residue_log_weights

__all__ = [
    "ChannelRep", "KrausChannel", "FrameMismatchError", "loss_circle", "loss_on_coherent", "loss_weights",
    "loss_superop", "dephasing_weights", "dephasing_fock", "dephasing_kraus",
    "loss_kraus_fock", "compose_two_mode", "identity_channel", "lifetimes_to_rates",
]


class FrameMismatchError(ValueError):
    pass


@dataclass
class ChannelRep:
    """A channel of Hadamard-sandwich form between two orthonormal frames.

    ``in_map`` (n_basis x n_in) carries input-frame coordinates to basis
    coefficients and ``out_map`` (n_out x n_basis) carries output basis
    coefficients to frame coordinates; ``None`` means identity.
    """

    kind: str
    params: dict
    weights: np.ndarray
    in_map: np.ndarray | None = None
    out_map: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_basis(self) -> int:
        return self.weights.shape[0]

    @property
    def dim_in(self) -> int:
        return self.n_basis if self.in_map is None else self.in_map.shape[1]

    @property
    def dim_out(self) -> int:
        return self.n_basis if self.out_map is None else self.out_map.shape[0]

    def _lift(self, rho):
        return rho if self.in_map is None else self.in_map @ rho @ self.in_map.conj().T

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Act on one (n_in x n_in) matrix or a stack with leading axes."""
        rho = np.asarray(rho)
        if rho.shape[-1] != self.dim_in:
            raise FrameMismatchError(f"input dim {rho.shape[-1]} != channel dim {self.dim_in}")
        x = self._lift(rho) * self.weights
        if self.out_map is not None:
            x = self.out_map @ x @ self.out_map.conj().T
        return x

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """Heisenberg-picture map: Tr(y^dag N(rho)) = Tr(N^dag(y)^dag rho)."""
        y = np.asarray(y)
        if y.shape[-1] != self.dim_out:
            raise FrameMismatchError(f"output dim {y.shape[-1]} != channel dim {self.dim_out}")
        if self.out_map is not None:
            y = self.out_map.conj().T @ y @ self.out_map
        x = y * self.weights.conj()
        if self.in_map is not None:
            x = self.in_map.conj().T @ x @ self.in_map
        return x

    def kraus(self, tol: float = 1e-15) -> list[np.ndarray]:
        evals, evecs = np.linalg.eigh(0.5 * (self.weights + self.weights.conj().T))
        ops = []
        for lam, u in zip(evals[::-1], evecs.T[::-1]):
            if lam <= tol * max(evals[-1], 1.0):
                break
            k = np.diag(np.sqrt(lam) * u)
            if self.in_map is not None:
                k = k @ self.in_map
            if self.out_map is not None:
                k = self.out_map @ k
            ops.append(k)
        return ops

    def superop(self) -> np.ndarray:
        """Matrix S with vec(N(rho)) = S vec(rho), row-major vec."""
        n = self.dim_in
        cols = [self.apply(np.eye(n)[:, [i]] @ np.eye(n)[[j], :]).reshape(-1)
                for i in range(n) for j in range(n)]
        return np.array(cols).T

    def completeness_error(self) -> float:
        """max |sum K^dag K - I| evaluated as N^dag(I) - I."""
        return float(np.abs(self.adjoint(np.eye(self.dim_out)) - np.eye(self.dim_in)).max())

    def restrict_output(self, isometry: np.ndarray) -> "ChannelRep":
        """Compress the output onto the columns of ``isometry`` (n_out x r)."""
        out = isometry.conj().T if self.out_map is None else isometry.conj().T @ self.out_map
        return replace(self, out_map=out, info={**self.info, "restricted": isometry.shape[1]})


@dataclass
class KrausChannel:
    """A channel given by explicit Kraus operators (n_out x n_in each)."""

    kind: str
    params: dict
    ops: list
    info: dict = field(default_factory=dict)

    @property
    def dim_in(self) -> int:
        return self.ops[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.ops[0].shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape[-1] != self.dim_in:
            raise FrameMismatchError(f"input dim {rho.shape[-1]} != channel dim {self.dim_in}")
        return sum(k @ rho @ k.conj().T for k in self.ops)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.shape[-1] != self.dim_out:
            raise FrameMismatchError(f"output dim {y.shape[-1]} != channel dim {self.dim_out}")
        return sum(k.conj().T @ y @ k for k in self.ops)

    def kraus(self, tol: float = 0.0) -> list[np.ndarray]:
        return [k for k in self.ops if np.abs(k).max() > tol]

    def superop(self) -> np.ndarray:
        return sum(np.kron(k, k.conj()) for k in self.ops)

    def completeness_error(self) -> float:
        return float(np.abs(self.adjoint(np.eye(self.dim_out)) - np.eye(self.dim_in)).max())

    def restrict_output(self, isometry: np.ndarray) -> "KrausChannel":
        return replace(self, ops=[isometry.conj().T @ k for k in self.ops],
                       info={**self.info, "restricted": isometry.shape[1]})


# ------------------------------------------------------------------- loss

def loss_on_coherent(beta: complex, gamma: float, l_max: int = 40):
    """K_l |beta> = c_l |sqrt(1-gamma) beta>; returns (damped beta, c_0..c_lmax)."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    ls = np.arange(l_max + 1)
    if beta == 0 or gamma == 0:
        c = np.zeros(l_max + 1, dtype=complex)
        c[0] = 1.0
        return np.sqrt(1 - gamma) * beta, c
    logmag = 0.5 * ls * np.log(gamma) - 0.5 * np.array([lgamma(l + 1) for l in ls]) \
        + ls * np.log(abs(beta)) - gamma * abs(beta) ** 2 / 2
    c = np.exp(logmag) * np.exp(1j * np.angle(beta) * ls)
    return np.sqrt(1 - gamma) * beta, c


def loss_weights(params: np.ndarray, gamma: float) -> np.ndarray:
    """w_st = prod_modes exp(-gamma(|b_s|^2+|b_t|^2)/2 + gamma b_s conj(b_t)).

    Equivalently the Gram matrix of the environment states |sqrt(gamma) b>.
    """
    p = np.atleast_2d(params)
    sq = np.sum(np.abs(p) ** 2, axis=1)
    return np.exp(gamma * (p @ p.conj().T - 0.5 * sq[:, None] - 0.5 * sq[None, :]))


def loss_superop(basis: StateBasis, gamma: float, tol: float = 1e-12,
                 in_frame=None, out_frame=None) -> ChannelRep:
    """Pure loss from span(basis) to span(damped basis), in orthonormal frames."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    in_frame = in_frame or orthonormalize(basis, tol)
    damped = basis.damped(gamma)
    out_frame = out_frame or orthonormalize(damped, tol)
    if out_frame.size != len(basis) or in_frame.size != len(basis):
        raise FrameMismatchError("frames do not match the basis size")
    if out_frame.rank < in_frame.rank:
        # dropped output directions would silently break trace preservation
        raise FrameMismatchError(
            f"damped span keeps rank {out_frame.rank} < input rank {in_frame.rank}; "
            "the constellation is too ill conditioned at this alpha and gamma")
    return ChannelRep(
        "pure-loss", {"gamma": float(gamma)}, loss_weights(basis.params, gamma),
        in_map=in_frame.transform, out_map=out_frame.projector_map,
        info={"in_frame": in_frame, "out_frame": out_frame, "damped": damped},
    )


def loss_circle(m: int, alpha: complex, gamma: float, tol: float = 1e-17) -> KrausChannel:
    """Pure loss on the span of m circle states, in Fock-residue frames.

    Input frame e_j (j = 0..m-1) spans the circle states at |alpha|, output
    frame the damped ones.  Loss maps e_j into e_{j-l} only:
    K_l[j-l, j] = (sqrt(gamma) a)^l / sqrt(l!) * sqrt(P_{j-l}(x(1-gamma)) / P_j(x)),
    x = a^2, P_j(x) = sum_{n = j mod m} x^n / n!.  Completeness is exact in
    closed form; operators are kept while max |K_l|^2 exceeds ``tol``.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    a = abs(alpha)
    x = a * a
    if gamma == 0 or a == 0:
        return KrausChannel("pure-loss", {"gamma": float(gamma), "m": m}, [np.eye(m)],
                            info={"frame": "residue"})
    lp_in = residue_log_weights(x, m)
    lp_out = residue_log_weights(x * (1 - gamma), m)
    j = np.arange(m)
    ops, l = [], 0
    l_stop = int(gamma * x + 12 * np.sqrt(gamma * x) + 40)
    while True:
        logk = l * np.log(np.sqrt(gamma) * a) - 0.5 * lgamma(l + 1) \
            + 0.5 * (lp_out[(j - l) % m] - lp_in)
        vals = np.where(np.isfinite(lp_in), np.exp(logk), 0.0)
        if l > gamma * x and vals.max() ** 2 < tol or l > l_stop:
            break
        k = np.zeros((m, m))
        k[(j - l) % m, j] = vals
        ops.append(k)
        l += 1
    return KrausChannel("pure-loss", {"gamma": float(gamma), "m": m, "alpha": a}, ops,
                        info={"frame": "residue"})


def loss_kraus_fock(n_max: int, gamma: float, l_max: int | None = None) -> list[np.ndarray]:
    """Single-mode K_l = sqrt(gamma^l/l!) (1-gamma)^{n/2} a^l on Fock levels 0..n_max."""
    if gamma == 0:
        return [np.eye(n_max + 1)]
    l_max = n_max if l_max is None else l_max
    ops = []
    for l in range(l_max + 1):
        k = np.zeros((n_max + 1, n_max + 1))
        for m in range(l, n_max + 1):
            # sqrt(gamma^l/l!) (1-gamma)^{(m-l)/2} <m-l|a^l|m>,  <m-l|a^l|m> = sqrt(m!/(m-l)!)
            logv = 0.5 * (l * np.log(gamma) + lgamma(m + 1) - lgamma(m - l + 1) - lgamma(l + 1))
            logv += 0.5 * (m - l) * np.log1p(-gamma)
            k[m - l, m] = np.exp(logv)
        ops.append(k)
    return ops


# -------------------------------------------------------------- dephasing

def dephasing_weights(occupations: np.ndarray, delta: float) -> np.ndarray:
    occ = np.atleast_2d(occupations.T).T
    diff2 = np.sum((occ[:, None, :] - occ[None, :, :]) ** 2, axis=2)
    return np.exp(-0.5 * delta * diff2)


def dephasing_fock(n_total: int, delta: float, modes: int = 2,
                   mode_cap: int | None = None) -> ChannelRep:
    """Independent, identical dephasing on each mode of a truncated Fock space."""
    if delta < 0 or n_total < 0:
        raise ValueError("need delta >= 0 and n_total >= 0")
    occ = fock_indices(n_total, modes, mode_cap)
    return ChannelRep("dephasing", {"delta": float(delta), "N": int(n_total), "modes": modes},
                      dephasing_weights(occ, delta), info={"occupations": occ})


def dephasing_kraus(n_max: int, delta: float, l_max: int = 60) -> list[np.ndarray]:
    """Single-mode K_l = sqrt(delta^l/l!) exp(-delta n^2/2) n^l on levels 0..n_max."""
    n = np.arange(n_max + 1, dtype=float)
    ops = []
    for l in range(l_max + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = 0.5 * l * np.log(delta) - 0.5 * lgamma(l + 1) - 0.5 * delta * n ** 2 \
                + l * np.log(n)
        v = np.exp(logv)
        if l == 0:
            v = np.exp(-0.5 * delta * n ** 2)
        ops.append(np.diag(v))
    return ops


# ------------------------------------------------------------ composition

def identity_channel(dim: int) -> ChannelRep:
    return ChannelRep("identity", {}, np.ones((dim, dim)))


def compose_two_mode(ch: ChannelRep, other: ChannelRep | None = None) -> ChannelRep:
    """Tensor product ch (x) other (default ch (x) ch) on the product frame."""
    other = ch if other is None else other

    def kron_opt(a, b, na, nb):
        if a is None and b is None:
            return None
        a = np.eye(na) if a is None else a
        b = np.eye(nb) if b is None else b
        return np.kron(a, b)

    if ch.info.get("composed") or other.info.get("composed"):
        raise FrameMismatchError("compose_two_mode expects single-mode channels")
    w = np.kron(ch.weights, other.weights)
    in_map = kron_opt(ch.in_map, other.in_map, ch.n_basis, other.n_basis)
    out_map = kron_opt(ch.out_map, other.out_map, ch.n_basis, other.n_basis)
    kind = ch.kind if ch.kind == other.kind else "composed"
    return ChannelRep(kind, {"modes": [dict(ch.params), dict(other.params)]}, w, in_map, out_map,
                      info={"composed": True})


def lifetimes_to_rates(T: float, T1: float, Tphi: float) -> tuple[float, float]:
    """gamma = 1 - exp(-T/T1), delta = T/Tphi for a cycle of duration T."""
    if T < 0 or T1 <= 0 or Tphi <= 0:
        raise ValueError("need T >= 0 and positive T1, Tphi")
    return float(-np.expm1(-T / T1)), float(T / Tphi)
