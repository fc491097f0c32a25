"""Quantized drives on a truncated two-mode Fock space.

Basis order is ``qudit (x) mode 1 (x) mode 2``; a flat index is
``lam * D**2 + n1 * D + n2`` with ``D = n_max + 1``.

A classical drive ``sqrt(n_c) e^{-i(w t + phi)}`` is the coherent amplitude of
``a``, so ``cos(w t + phi) -> (a + a^dag) / (2 sqrt(n_c))`` and
``sin(w t + phi) -> (a^dag - a) / (2i sqrt(n_c))``. A coherent input with
classical phase ``phi0`` therefore has ``alpha = sqrt(n_c) e^{-i phi0}``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .floquet import TwoToneModel
from .opspace import TwoModeState, mode_operators, number_operators


class TruncationError(RuntimeError):
    """Population reached the truncation boundary."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


def default_truncation(n_c: float) -> int:
    return int(n_c + math.ceil(6 * math.sqrt(n_c)) + 8)


@dataclass
class FockState:
    """``amplitudes[lam, n1, n2]`` on the truncated space."""

    amplitudes: np.ndarray
    time: float = 0.0

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[-1] - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def vector(self) -> np.ndarray:
        return self.amplitudes.ravel()

    @classmethod
    def from_vector(cls, vec: np.ndarray, dim: int, n_max: int, time: float = 0.0) -> FockState:
        return cls(np.asarray(vec).reshape(dim, n_max + 1, n_max + 1), time)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def boundary_population(self) -> float:
        """Weight with either occupation in ``{n_max - 1, n_max}``."""
        p = np.sum(np.abs(self.amplitudes) ** 2, axis=0)
        inner = p[:-2, :-2].sum()
        return float(p.sum() - inner)

    def reduced_ancilla(self) -> np.ndarray:
        a = self.amplitudes.reshape(self.dim, -1)
        return a @ a.conj().T

    def mode_profile(self, mode: int = 2) -> tuple[np.ndarray, np.ndarray]:
        p = np.sum(np.abs(self.amplitudes) ** 2, axis=0)
        n = np.arange(self.n_max + 1)
        return n, (p.sum(axis=1) if mode == 1 else p.sum(axis=0))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lambda", "n1", "n2", "re", "im"])
            for lam, n1, n2 in zip(*np.nonzero(self.amplitudes)):
                z = self.amplitudes[lam, n1, n2]
                writer.writerow([lam, n1, n2, f"{z.real:.12g}", f"{z.imag:.12g}"])


@dataclass
class QuantizedModel:
    hamiltonian: sp.csr_matrix
    model: TwoToneModel
    n_c: tuple[float, float]
    n_max: int

    @property
    def dim(self) -> int:
        return self.model.dim

    def energy(self, state: FockState) -> float:
        v = state.vector()
        return float(np.real(v.conj() @ (self.hamiltonian @ v)))


def quantize(model: TwoToneModel, n1c: float, n2c: float, n_max: int | None = None) -> QuantizedModel:
    """Time-independent qudit-plus-drives Hamiltonian with per-photon couplings."""
    if n1c <= 0 or n2c <= 0:
        raise ValueError("reference occupations must be positive")
    if n_max is None:
        n_max = default_truncation(max(n1c, n2c))
    margin = n_max - max(n1c, n2c)
    if margin < 4 * math.sqrt(max(n1c, n2c)):
        warnings.warn(f"truncation margin {margin} is below 4 sqrt(n_c)", stacklevel=2)
    a1, a2 = mode_operators(n_max)
    num1, num2 = number_operators(n_max)
    eye_q = sp.identity(model.dim, format="csr")
    eye_b = sp.identity((n_max + 1) ** 2, format="csr")
    h = sp.kron(sp.csr_matrix(model.h0), eye_b)
    h = h + sp.kron(eye_q, model.omega1 * num1 + model.omega2 * num2)
    for a, n_c, odd, even in ((a1, n1c, model.h1_odd, model.h1_even), (a2, n2c, model.h2_odd, model.h2_even)):
        scale = 1.0 / math.sqrt(n_c)
        sin_op = (a.T - a) / 2j
        cos_op = (a + a.T) / 2
        h = h + scale * (sp.kron(sp.csr_matrix(odd), sin_op) + sp.kron(sp.csr_matrix(even), cos_op))
    h = sp.csr_matrix(h)
    h.eliminate_zeros()
    if h.nnz and abs(h - h.conj().T).max() > 1e-10:
        raise ValueError("quantized Hamiltonian is not Hermitian")
    return QuantizedModel(h, model, (float(n1c), float(n2c)), int(n_max))


def _coherent_amplitudes(n_c: float, phi0: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    logp = n * math.log(n_c) - n_c - gammaln(n + 1)
    amp = np.exp(0.5 * logp) * np.exp(-1j * phi0 * n)
    mass = float(np.sum(np.abs(amp) ** 2))
    if mass < 1 - 1e-9:
        raise ValueError(f"truncation at n_max={n_max} keeps only {mass:.12f} of the coherent mass")
    return amp / math.sqrt(mass)


def coherent_or_fock_input(
    kind: str,
    n_c: float,
    n_max: int,
    qudit_state: np.ndarray,
    phi10: float = 0.0,
    phi20: float = 0.0,
) -> FockState:
    """Product input ``|s> (x) |drive 1> (x) |drive 2>``."""
    s = np.asarray(qudit_state, dtype=complex)
    s = s / np.linalg.norm(s)
    if kind == "fock":
        k = int(round(n_c))
        if k > n_max - 2:
            raise ValueError("Fock occupation too close to the truncation")
        m1 = np.zeros(n_max + 1, dtype=complex)
        m1[k] = 1.0
        m2 = m1.copy()
    elif kind == "coherent":
        m1 = _coherent_amplitudes(n_c, phi10, n_max)
        m2 = _coherent_amplitudes(n_c, phi20, n_max)
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    return FockState(np.einsum("i,a,b->iab", s, m1, m2))


# ------------------------------------------------------------- propagation


def _lanczos_step(h: sp.csr_matrix, v: np.ndarray, dt: float, tol: float, kmax: int):
    """One short-iterative Lanczos step ``exp(-i h dt) v``.

    The Krylov dimension grows until the a-posteriori estimate
    ``beta_k |(e^{-i T dt})_{k,0}|`` drops below ``tol``.
    """
    nrm = np.linalg.norm(v)
    basis = [v / nrm]
    alpha, beta = [], []
    prev = np.zeros_like(v)
    b = 0.0
    for k in range(kmax):
        w = h @ basis[k]
        a = float(np.real(np.vdot(basis[k], w)))
        w = w - a * basis[k] - b * prev
        # full reorthogonalisation keeps the small basis numerically orthogonal
        for q in basis:
            w -= np.vdot(q, w) * q
        alpha.append(a)
        b = float(np.linalg.norm(w))
        t = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        ev, evec = np.linalg.eigh(t)
        coef = evec @ (np.exp(-1j * ev * dt) * evec[0].conj())
        err = b * abs(coef[-1])
        if err < tol or b < 1e-14 or k == kmax - 1:
            out = np.column_stack(basis) @ coef * nrm
            return out, err, k + 1
        beta.append(b)
        prev = basis[k]
        basis.append(w / b)
    raise AssertionError("unreachable")


def evolve_fock(
    qm: QuantizedModel,
    state: FockState,
    duration: float,
    tolerance: float = 1e-8,
    step: float | None = None,
    krylov_max: int = 40,
    boundary_limit: float = 1e-6,
    checkpoints=None,
):
    """Propagate under the static quantized Hamiltonian.

    Returns the final :class:`FockState`; with ``checkpoints`` (times measured
    from ``state.time``) returns the list of states at those times instead.
    Raises :class:`TruncationError` when the boundary shell population
    exceeds ``boundary_limit``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if abs(state.norm() - 1) > 1e-9:
        raise ValueError("input state must be normalized")
    if state.n_max != qm.n_max or state.dim != qm.dim:
        raise ValueError("state and model truncations differ")
    step = qm.model.t_com / 50 if step is None else step
    marks = sorted(set(float(c) for c in checkpoints)) if checkpoints is not None else [duration]
    if marks[-1] > duration + 1e-12 or marks[0] < 0:
        raise ValueError("checkpoints must lie within the duration")
    v = state.vector().astype(complex)
    t = 0.0
    out = []
    h = qm.hamiltonian
    for mark in marks:
        while mark - t > 1e-12:
            dt = min(step, mark - t)
            v, _, _ = _lanczos_step(h, v, dt, tolerance, krylov_max)
            t += dt
            cur = FockState.from_vector(v, qm.dim, qm.n_max, state.time + t)
            edge = cur.boundary_population()
            if edge > boundary_limit:
                raise TruncationError(
                    f"boundary population {edge:.2e} exceeds {boundary_limit:.0e} at t={state.time + t:.6g}",
                    state.time + t,
                )
        v = v / np.linalg.norm(v)
        out.append(FockState.from_vector(v.copy(), qm.dim, qm.n_max, state.time + t))
    return out if checkpoints is not None else out[-1]


# --------------------------------------------------------------- projection


def pes_fock(state: FockState, ancilla: np.ndarray) -> tuple[TwoModeState, float]:
    """Project the qudit onto ``ancilla``; returns the drive state and its probability."""
    s = np.asarray(ancilla, dtype=complex)
    s = s / np.linalg.norm(s)
    g = np.einsum("i,iab->ab", s.conj(), state.amplitudes)
    prob = float(np.sum(np.abs(g) ** 2))
    if prob < 1e-12:
        raise ValueError("projection annihilates the state")
    return TwoModeState(g / math.sqrt(prob), (0, 0), {"time": state.time}), prob
