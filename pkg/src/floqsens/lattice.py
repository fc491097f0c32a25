"""Quantized drives in the phase-lattice approximation.

Every phase point evolves independently under the classical two-tone
Hamiltonian, so the combined state is an array ``psi[lambda, i1, i2]`` over
qudit level and grid point. Phases here are always *classical* drive phases.
A translation-invariant lattice with ``T|phi> = e^{i phi}|phi>`` in the
interaction picture evolves the label ``phi`` under the classical Hamiltonian
at phase ``-phi``; the map to occupation numbers therefore reflects the grid
before the Fourier transform. With this convention a positive
``d eps / d phi_j`` drains photons from mode ``j``, matching the classical
sign of absorbed power.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .floquet import FloquetSpectrum
from .opspace import NumberLattice, PhaseGrid, TwoModeState, phase_to_number


class ZeroPowerError(ValueError):
    """The functional power operator vanishes; no ancilla split exists."""


# ------------------------------------------------------------ field inputs


@dataclass
class FieldDistribution:
    """Initial drive amplitude ``f(phi1, phi2)`` with ``int |f|^2 = 1``."""

    grid: PhaseGrid
    amplitudes: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.m, self.grid.m):
            raise ValueError(f"amplitudes shape {amp.shape} does not match grid m={self.grid.m}")
        total = np.sum(np.abs(amp) ** 2) * self.grid.cell_area
        if total <= 0:
            raise ValueError("field distribution has no weight")
        self.amplitudes = amp / np.sqrt(total)

    @property
    def weights(self) -> np.ndarray:
        """``|f|^2`` (density, integrates to one with the cell area)."""
        return np.abs(self.amplitudes) ** 2

    def discrete(self) -> np.ndarray:
        """Amplitudes normalised as a unit vector over grid points."""
        return self.amplitudes * np.sqrt(self.grid.cell_area)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        w = self.weights
        return bool(np.max(np.abs(w - w.T)) <= tol * np.max(w))

    def support(self, threshold: float = 1e-6) -> np.ndarray:
        w = self.weights
        return w >= threshold * w.max()

    @classmethod
    def fock_uniform(cls, grid: PhaseGrid, n_c: int | None = None) -> FieldDistribution:
        amp = np.full((grid.m, grid.m), 1 / (2 * np.pi), dtype=complex)
        return cls(grid, amp, "fock", {"n_c": n_c})

    @classmethod
    def coherent_delta(cls, grid: PhaseGrid, phi10: float, phi20: float) -> FieldDistribution:
        amp = np.zeros((grid.m, grid.m), dtype=complex)
        amp[grid.index_of(phi10), grid.index_of(phi20)] = 1.0
        return cls(grid, amp, "coherent-delta", {"phi10": phi10, "phi20": phi20})

    @classmethod
    def coherent(cls, grid: PhaseGrid, n_c: float, phi10: float, phi20: float) -> FieldDistribution:
        """Finite-width coherent input built from truncated Poisson amplitudes.

        The number window is the lattice window ``n_c + [-m/2, m/2)``; the
        Poisson mass outside it is discarded and the rest renormalised.
        """
        rel = grid.offsets()
        modes = []
        for phi0 in (phi10, phi20):
            n = n_c + rel
            ok = n >= 0
            logp = np.where(ok, n * np.log(n_c) - n_c - gammaln(np.where(ok, n, 0) + 1), -np.inf)
            c = np.exp(0.5 * logp) * np.exp(-1j * phi0 * rel)
            # classical-phase amplitude: g(phi) = sum_m c_m e^{i phi m} / sqrt(m)
            g = np.exp(1j * np.outer(grid.axis, rel)) @ c / np.sqrt(grid.m)
            modes.append(g)
        amp = np.outer(modes[0], modes[1])
        return cls(grid, amp, "coherent", {"n_c": n_c, "phi10": phi10, "phi20": phi20})

    @classmethod
    def custom(cls, grid: PhaseGrid, amplitudes: np.ndarray) -> FieldDistribution:
        return cls(grid, amplitudes, "custom", {})


# ----------------------------------------------------------- power operators


@dataclass
class FunctionalPowerOperator:
    drive: int
    matrix: np.ndarray
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, gauge fixed
    tolerance: float

    @property
    def positive(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.eigenvalues > self.tolerance
        return self.eigenvalues[mask][::-1], self.eigenvectors[:, mask][:, ::-1]

    @property
    def negative(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.eigenvalues < -self.tolerance
        return self.eigenvalues[mask], self.eigenvectors[:, mask]

    @property
    def is_zero(self) -> bool:
        return bool(np.all(np.abs(self.eigenvalues) <= self.tolerance))

    @property
    def null(self) -> tuple[np.ndarray, np.ndarray]:
        mask = np.abs(self.eigenvalues) <= self.tolerance
        return self.eigenvalues[mask], self.eigenvectors[:, mask]

    @property
    def free_phases(self) -> int:
        if self.is_zero:
            return 0
        return self.matrix.shape[0] - 1

    def states(self) -> tuple[np.ndarray, np.ndarray]:
        """``(|0>_f, |1>_f)`` for a qubit: the positive and negative eigenvectors."""
        if self.matrix.shape[0] != 2:
            raise ValueError("the |0>, |1> pair is defined for qubits only")
        if self.is_zero:
            raise ZeroPowerError("functional power operator vanishes")
        return self.eigenvectors[:, 1], self.eigenvectors[:, 0]


def _fix_gauge(vecs: np.ndarray, reference: np.ndarray, h0: np.ndarray) -> np.ndarray:
    """Deterministic eigenvector phases.

    The leading vector has its largest component real positive; the others are
    rotated so that ``<lead|H0|v>`` is real positive (or, when that element
    vanishes, their own largest component is real positive).
    """
    out = vecs.copy()
    for k in range(out.shape[1]):
        v = out[:, k]
        i = np.argmax(np.abs(v))
        out[:, k] = v * np.exp(-1j * np.angle(v[i]))
    lead = out[:, reference]
    for k in range(out.shape[1]):
        if k == reference:
            continue
        el = lead.conj() @ h0 @ out[:, k]
        if abs(el) > 1e-9 * max(1.0, np.abs(h0).max()):
            out[:, k] *= np.exp(-1j * np.angle(el))
    return out


def functional_power(
    spectrum: FloquetSpectrum, field_dist: FieldDistribution, j: int = 1, tol: float = 1e-9
) -> FunctionalPowerOperator:
    """Midpoint quadrature of ``|f|^2 P_j(phi)`` over the Brillouin zone."""
    if field_dist.grid.m != spectrum.grid.m:
        raise ValueError("spectrum and field distribution use different grids")
    pj = spectrum.power_matrices(j)
    mat = np.einsum("ab,abij->ij", field_dist.weights, pj) * spectrum.grid.cell_area
    mat = 0.5 * (mat + mat.conj().T)
    w, v = np.linalg.eigh(mat)
    scale = tol * max(1.0, spectrum.model.omega_com)
    v = _fix_gauge(v, int(np.argmax(w)), spectrum.model.h0)
    return FunctionalPowerOperator(j, mat, w, v, scale)


def ancilla_state(
    power: FunctionalPowerOperator,
    phases=None,
    fallback: np.ndarray | None = None,
) -> np.ndarray:
    """Equal-weight superposition over the positive and negative eigenvectors.

    ``phases`` holds ``free_phases`` angles: first for the remaining positive
    eigenvectors, then for the negative ones, then for null eigenvectors (the
    leading positive vector is the phase reference). Null eigenvectors of a
    qudit operator join the superposition; equal weights keep
    ``<P_j[f]> = tr P_j[f] / d = 0``. When the operator vanishes,
    ``fallback`` is returned if given, otherwise :class:`ZeroPowerError` is
    raised.
    """
    if power.is_zero:
        if fallback is None:
            raise ZeroPowerError("functional power operator vanishes; no entangling ancilla")
        fb = np.asarray(fallback, dtype=complex)
        return fb / np.linalg.norm(fb)
    _, vp = power.positive
    _, vn = power.negative
    if vp.shape[1] == 0 or vn.shape[1] == 0:
        raise ZeroPowerError("positive or negative eigenspace is empty")
    vecs = np.concatenate([vp, vn, power.null[1]], axis=1)
    n_free = vecs.shape[1] - 1
    phases = np.zeros(n_free) if phases is None else np.atleast_1d(np.asarray(phases, float))
    if phases.shape != (n_free,):
        raise ValueError(f"expected {n_free} phase(s), got {phases.shape[0]}")
    coef = np.exp(1j * np.concatenate([[0.0], phases]))
    return vecs @ coef / np.sqrt(vecs.shape[1])


def complementary_state(ancilla: np.ndarray, power: FunctionalPowerOperator, phases=None) -> np.ndarray:
    """``|beta,->``: the qubit ancilla with the relative sign flipped."""
    if ancilla.shape[0] != 2:
        raise ValueError("the complementary outcome is defined for qubits only")
    if power.is_zero:
        return np.array([-ancilla[1].conj(), ancilla[0].conj()])
    return ancilla_state(power, np.atleast_1d(np.asarray(0.0 if phases is None else phases)) + np.pi)


def zero_power_fallback(h0: np.ndarray) -> np.ndarray:
    """Equal superposition of the static-Hamiltonian eigenvectors."""
    _, v = np.linalg.eigh(h0)
    v = _fix_gauge(v, 0, np.zeros_like(h0))
    return v.sum(axis=1) / np.sqrt(v.shape[1])


# ---------------------------------------------------------- lattice dynamics


@dataclass
class LatticeState:
    """``amplitudes[lambda, i1, i2]``: unit vector over qudit level and grid point."""

    amplitudes: np.ndarray
    grid: PhaseGrid
    offsets: tuple[int, int]
    time: float = 0.0
    t_com: float = 2 * np.pi

    @property
    def periods(self) -> float:
        return self.time / self.t_com

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def number_lattice(self) -> NumberLattice:
        """Per-level occupation amplitudes (reflected transform, see module docstring)."""
        return phase_to_number(_reflect(self.amplitudes), self.offsets)

    def reduced_ancilla(self) -> np.ndarray:
        a = self.amplitudes.reshape(self.amplitudes.shape[0], -1)
        return a @ a.conj().T

    def occupation_moments(self) -> dict[str, float]:
        lat = self.number_lattice()
        p = np.sum(np.abs(lat.amplitudes) ** 2, axis=0)
        st = TwoModeState(np.sqrt(p), (self.offsets[0] - self.grid.m // 2, self.offsets[1] - self.grid.m // 2))
        return st.moments()

    def mode_profile(self, mode: int = 2) -> tuple[np.ndarray, np.ndarray]:
        lat = self.number_lattice()
        p = np.sum(np.abs(lat.amplitudes) ** 2, axis=0)
        n = self.offsets[mode - 1] + self.grid.offsets()
        return n, (p.sum(axis=1) if mode == 1 else p.sum(axis=0))


def _reflect(a: np.ndarray) -> np.ndarray:
    """``a[k] -> a[-k mod m]`` on the two trailing axes."""
    return np.roll(np.flip(a, axis=(-2, -1)), 1, axis=(-2, -1))


def evolve_lattice(
    spectrum: FloquetSpectrum,
    field_dist: FieldDistribution,
    psi0: np.ndarray,
    periods: int,
    offsets: tuple[int, int] | None = None,
) -> LatticeState:
    """``psi(phi, k T_com) = U_phi(T_com)^k psi0 f(phi)`` on every grid point."""
    if field_dist.grid.m != spectrum.grid.m:
        raise ValueError("spectrum and field distribution use different grids")
    if periods < 0 or int(periods) != periods:
        raise ValueError("lattice evolution is stroboscopic: periods must be a nonnegative integer")
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-9:
        raise ValueError("initial qudit state must be normalized")
    if offsets is None:
        n_c = field_dist.params.get("n_c") or 0
        offsets = (int(round(n_c)), int(round(n_c)))
    u = spectrum.propagator_power(int(periods))
    qudit = np.einsum("abij,j->iab", u, psi0)
    amps = qudit * field_dist.discrete()[None]
    return LatticeState(amps, spectrum.grid, offsets, periods * spectrum.model.t_com, spectrum.model.t_com)


@dataclass
class ProjectedState:
    """Drive state after projecting the ancilla, in phase and number form."""

    phase_amplitudes: np.ndarray  # unit vector over grid points
    number: TwoModeState
    success_probability: float
    outcome: int
    grid: PhaseGrid


def project_pes(state: LatticeState, ancilla: np.ndarray, outcome: int = 1, complement=None) -> ProjectedState:
    """Project the qudit onto ``ancilla`` (outcome ``+1``) or ``complement`` (``-1``)."""
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    target = np.asarray(ancilla if outcome == 1 else complement, dtype=complex)
    if target is None or target.ndim != 1:
        raise ValueError("the '-' outcome needs the complementary ancilla state")
    g = np.einsum("i,iab->ab", target.conj(), state.amplitudes)
    prob = float(np.sum(np.abs(g) ** 2))
    if prob < 1e-12:
        raise ValueError("projection annihilates the state")
    g = g / np.sqrt(prob)
    lat = phase_to_number(_reflect(g), state.offsets)
    number = lat.two_mode()
    number.meta.update({"periods": state.periods, "outcome": outcome})
    return ProjectedState(g, number, prob, outcome, state.grid)


def uhlmann_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``tr(sqrt(sqrt(rho) sigma sqrt(rho)))^2`` for Hermitian PSD inputs."""

    def psd_sqrt(a):
        w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
        return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T

    s = psd_sqrt(rho)
    w = np.linalg.eigvalsh(s @ sigma @ s)
    return float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)


def reduced_ancilla_fidelity(state: LatticeState, reference: np.ndarray) -> float:
    ref = np.asarray(reference, dtype=complex)
    ref = ref / np.linalg.norm(ref)
    return uhlmann_fidelity(state.reduced_ancilla(), np.outer(ref, ref.conj()))


def write_profile_csv(path: str | Path, rows) -> None:
    """``rows`` yields ``(T, n2, probability)`` with T in units of T_com."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["T", "n2", "probability"])
        for t, n, p in rows:
            writer.writerow([f"{t:.12g}", int(n), f"{p:.12g}"])


def profile_rows(states) -> list[tuple[float, int, float]]:
    rows = []
    for st in states:
        n, p = st.mode_profile(2)
        rows.extend((st.periods, int(k), float(v)) for k, v in zip(n, p))
    return rows
