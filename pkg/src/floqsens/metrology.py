"""Quantum Fisher information, its band-structure bounds and the path-entanglement witness."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .floquet import FloquetSpectrum
from .lattice import (
    FieldDistribution,
    FunctionalPowerOperator,
    _reflect,
    ancilla_state,
    functional_power,
)
from .opspace import TwoModeOperator, TwoModeState, phase_to_number


def _as_matrix(generator) -> np.ndarray | sp.spmatrix:
    return generator.matrix if isinstance(generator, TwoModeOperator) else generator


def qfi_pure(state, generator=None) -> float:
    """``4 Var(A)`` for a pure state.

    ``state`` is a :class:`TwoModeState` (``generator=None`` means ``J_z``,
    evaluated from occupation moments on any window) or a flat vector paired
    with an explicit generator matrix.
    """
    if isinstance(state, TwoModeState) and generator is None:
        mo = state.moments()
        return max(0.0, 4.0 * (mo["jz2"] - mo["jz"] ** 2))
    if generator is None:
        raise ValueError("a flat state vector needs an explicit generator")
    vec = state.to_dense(_n_max_of(generator)) if isinstance(state, TwoModeState) else np.asarray(state)
    nrm = np.vdot(vec, vec).real
    if abs(nrm - 1) > 1e-8:
        raise ValueError(f"state is not normalized (norm^2 {nrm:.3e})")
    a = _as_matrix(generator)
    av = a @ vec
    mean = np.vdot(vec, av).real
    return max(0.0, 4.0 * (np.vdot(av, av).real - mean**2))


def _n_max_of(generator) -> int:
    if isinstance(generator, TwoModeOperator):
        return generator.n_max
    return int(round(np.sqrt(generator.shape[0]))) - 1


def qfi_mixed(rho: np.ndarray, generator, clamp: float = -1e-10) -> float:
    """Spectral two-sum QFI of a density matrix."""
    rho = np.asarray(rho.toarray() if sp.issparse(rho) else rho, dtype=complex)
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > 1e-9:
        raise ValueError(f"density matrix trace {tr:.12f} differs from one")
    lam, vec = np.linalg.eigh(rho)
    if lam.min() < clamp:
        raise ValueError(f"density matrix has eigenvalue {lam.min():.3e} below {clamp:.0e}")
    lam = np.clip(lam, 0, None)
    lam = lam / lam.sum()
    a = _as_matrix(generator)
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    akl = vec.conj().T @ a @ vec
    s = lam[:, None] + lam[None, :]
    d = lam[:, None] - lam[None, :]
    mask = s > 1e-12
    terms = np.zeros_like(s)
    terms[mask] = d[mask] ** 2 / s[mask]
    return float(2.0 * np.sum(terms * np.abs(akl) ** 2))


# -------------------------------------------------------------------- bounds


@dataclass(frozen=True)
class BoundWindow:
    p2: float

    @property
    def lower(self) -> float:
        return 0.5 * self.p2

    @property
    def upper(self) -> float:
        return 2.0 * self.p2

    def contains(self, rate: float, slack: float = 0.0) -> bool:
        return self.lower * (1 - slack) <= rate <= self.upper * (1 + slack)


def qfi_bound(spectrum: FloquetSpectrum, field_dist: FieldDistribution) -> BoundWindow:
    """``P^2[f] = 1/2 int |f|^2 sum_n (d_dphi eps_n)^2`` and its window."""
    if spectrum.model.dim != 2:
        raise NotImplementedError("the QFI window is derived for qubit ancillae only")
    if field_dist.grid.m != spectrum.grid.m:
        raise ValueError("spectrum and field distribution use different grids")
    val = 0.5 * np.sum(field_dist.weights[..., None] * spectrum.ddelta**2) * spectrum.grid.cell_area
    return BoundWindow(float(val))


def functional_q(spectrum: FloquetSpectrum, field_dist: FieldDistribution) -> float:
    """``Q[f] = int |f|^2 |d1 eps_1 d2 eps_2|``."""
    prod = np.abs(spectrum.dphi1[..., 0] * spectrum.dphi2[..., 1])
    return float(np.sum(field_dist.weights * prod) * spectrum.grid.cell_area)


def asymptotic_qfi_rate(spectrum: FloquetSpectrum, field_dist: FieldDistribution, ancilla: np.ndarray) -> float:
    """Long-time ``F_q / T^2`` predicted from band velocities.

    Each band component drifts ballistically with ``d_dphi eps_n`` and carries
    weight ``|f|^2 |<s|n>|^4``, so the limit is the variance of the velocity
    under those weights.
    """
    s = np.asarray(ancilla, dtype=complex)
    u2 = np.abs(np.einsum("i,abin->abn", s.conj(), spectrum.states)) ** 2
    w = field_dist.weights[..., None] * u2**2
    w = w / w.sum()
    g = spectrum.ddelta
    return float(np.sum(w * g**2) - np.sum(w * g) ** 2)


# ------------------------------------------------------------------- witness


@dataclass
class WitnessResult:
    covariance_k: float
    error: float
    entangled: bool
    q_value: float | None = None
    b_estimate: float | None = None
    in_window: bool | None = None


def _occupation_table(state) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(state, TwoModeState):
        n1, n2 = state.occupations()
        p = state.probabilities()
        return n1, n2, p / p.sum()
    rho, n_max = state
    rho = rho.toarray() if sp.issparse(rho) else np.asarray(rho)
    p = np.real(np.diag(rho)).reshape(n_max + 1, n_max + 1)
    n = np.arange(n_max + 1)
    return n, n, p / p.sum()


def covariance_k(state) -> float:
    """``K = -2 (<n1 n2> - <n1><n2>)``."""
    n1, n2, p = _occupation_table(state)
    m1 = p.sum(axis=1) @ n1
    m2 = p.sum(axis=0) @ n2
    m12 = n1 @ p @ n2
    return float(-2.0 * (m12 - m1 * m2))


def entanglement_witness(
    state,
    reference=None,
    spectrum: FloquetSpectrum | None = None,
    field_dist: FieldDistribution | None = None,
    time: float | None = None,
) -> WitnessResult:
    """Number-covariance witness of mode entanglement.

    ``state`` is a :class:`TwoModeState` or ``(rho, n_max)``. ``reference`` is
    the same state computed at a different resolution; the difference of the
    two ``K`` values is the error bar. With ``spectrum``, ``field_dist`` and
    ``time`` the late-time coefficient ``B = K / (2 T^2)`` is compared with
    the window ``[Q/2, 2Q]``.
    """
    k = covariance_k(state)
    err = abs(k - covariance_k(reference)) if reference is not None else 0.0
    floor = 1e-9 * max(1.0, abs(k))
    entangled = k > max(3 * err, floor)
    out = WitnessResult(k, err, bool(entangled))
    if spectrum is not None and field_dist is not None and time:
        q = functional_q(spectrum, field_dist)
        b = k / (2 * time**2)
        out.q_value, out.b_estimate = q, b
        out.in_window = bool(0.5 * q <= b <= 2 * q)
    return out


# --------------------------------------------------------------- PES helpers


def lattice_pes(
    u_power: np.ndarray,
    field_dist: FieldDistribution,
    ancilla: np.ndarray,
    offsets: tuple[int, int] = (0, 0),
    project: np.ndarray | None = None,
) -> tuple[TwoModeState, float]:
    """PES from a cached ``U_phi(k T_com)`` stack ``(m, m, d, d)``.

    ``project`` defaults to the ancilla itself.
    """
    s = np.asarray(ancilla, dtype=complex)
    p = s if project is None else np.asarray(project, dtype=complex)
    amp = np.einsum("i,abij,j->ab", p.conj(), u_power, s) * field_dist.discrete()
    prob = float(np.sum(np.abs(amp) ** 2))
    if prob < 1e-12:
        raise ValueError("projection annihilates the state")
    lat = phase_to_number(_reflect(amp / np.sqrt(prob)), offsets)
    return lat.two_mode(), prob


@dataclass
class SensingReport:
    times: list[float]
    qfi: list[float]
    bound_lo: list[float]
    bound_hi: list[float]
    mean_jz: list[float]
    covariance_k: list[float]
    q_bound: list[float]
    metadata: dict = field(default_factory=dict)

    def rates(self, t_com: float) -> np.ndarray:
        t = np.asarray(self.times) * t_com
        return np.asarray(self.qfi) / t**2

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["T", "qfi", "bound_lo", "bound_hi", "mean_jz", "K", "Q"])
            for row in zip(
                self.times, self.qfi, self.bound_lo, self.bound_hi, self.mean_jz, self.covariance_k, self.q_bound
            ):
                writer.writerow([f"{v:.12g}" for v in row])

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def sensing_report(
    spectrum: FloquetSpectrum,
    field_dist: FieldDistribution,
    ancilla: np.ndarray,
    periods: list[int],
    metadata: dict | None = None,
) -> SensingReport:
    """QFI, bound lines and witness over stroboscopic times (lattice model)."""
    window = qfi_bound(spectrum, field_dist) if spectrum.model.dim == 2 else BoundWindow(float("nan"))
    q = functional_q(spectrum, field_dist) if spectrum.model.dim == 2 else float("nan")
    rep = SensingReport([], [], [], [], [], [], [], dict(metadata or {}))
    for k in periods:
        pes, _ = lattice_pes(spectrum.propagator_power(int(k)), field_dist, ancilla)
        t = k * spectrum.model.t_com
        mo = pes.moments()
        rep.times.append(float(k))
        rep.qfi.append(qfi_pure(pes))
        rep.bound_lo.append(window.lower * t**2)
        rep.bound_hi.append(window.upper * t**2)
        rep.mean_jz.append(mo["jz"])
        rep.covariance_k.append(covariance_k(pes))
        rep.q_bound.append(q * t**2)
    return rep


def saturation_time(times, qfi) -> float:
    """Time at which the QFI stops growing, taken as its peak over the sampled window."""
    times, qfi = np.asarray(times, float), np.asarray(qfi, float)
    i = int(np.argmax(qfi))
    if i == len(qfi) - 1:
        raise ValueError("QFI still growing at the last sample; extend the horizon")
    return float(times[i])


# -------------------------------------------------------------- optimisation


def _ancilla_family(power: FunctionalPowerOperator, h0: np.ndarray):
    """Phase-parametrised ancilla states and the number of free phases.

    A vanishing power operator has no preferred split, so the phases then
    run over the static eigenbasis (the landscape is expected to be flat).
    """
    if not power.is_zero:
        return (lambda ph: ancilla_state(power, ph)), power.free_phases
    _, vecs = np.linalg.eigh(h0)
    d = vecs.shape[1]

    def make(ph):
        return vecs @ np.exp(1j * np.concatenate([[0.0], ph])) / np.sqrt(d)

    return make, d - 1


@dataclass
class PhaseOptimization:
    best_phases: np.ndarray
    best_rate: float
    landscape: np.ndarray  # F_q / T^2 over the scanned phase grid
    axes: list[np.ndarray]
    flat: bool

    @property
    def spread_ratio(self) -> float:
        lo = float(np.min(self.landscape))
        return float("inf") if lo <= 0 else float(np.max(self.landscape)) / lo


def optimize_ancilla_phases(
    spectrum: FloquetSpectrum,
    field_dist: FieldDistribution,
    periods: int,
    drive: int = 1,
    points: int = 32,
    refine: bool = False,
    power: FunctionalPowerOperator | None = None,
) -> PhaseOptimization:
    """Exhaustive scan of ``F_q / T^2`` over the free ancilla phases.

    With ``refine`` a coordinate-descent polish (golden section per phase)
    starts from the best grid point.
    """
    power = power or functional_power(spectrum, field_dist, drive)
    make, n_free = _ancilla_family(power, spectrum.model.h0)
    t = periods * spectrum.model.t_com
    u = spectrum.propagator_power(int(periods))
    axis = np.arange(points) * 2 * np.pi / points

    def rate(phases):
        s = make(phases)
        pes, _ = lattice_pes(u, field_dist, s)
        return qfi_pure(pes) / t**2

    shape = (points,) * n_free
    land = np.empty(shape)
    for idx in itertools.product(range(points), repeat=n_free):
        land[idx] = rate(axis[list(idx)])
    best_idx = np.unravel_index(int(np.argmax(land)), shape)
    best = axis[list(best_idx)].astype(float)
    best_val = float(land[best_idx])
    flat = bool(np.ptp(land) <= 1e-9 * max(1.0, abs(best_val)))
    if refine and not flat:
        from scipy.optimize import minimize_scalar

        h = 2 * np.pi / points
        for _ in range(3):
            for i in range(n_free):
                def neg(x, i=i):
                    trial = best.copy()
                    trial[i] = x
                    return -rate(trial)

                res = minimize_scalar(neg, bounds=(best[i] - h, best[i] + h), method="bounded")
                if -res.fun > best_val:
                    best[i], best_val = res.x % (2 * np.pi), float(-res.fun)
    return PhaseOptimization(best, best_val, land, [axis] * n_free, flat)


def fock_phase_landscape(
    qm,
    power: FunctionalPowerOperator,
    kind: str,
    periods: float,
    points: int = 32,
    phi10: float = 0.0,
    phi20: float = 0.0,
) -> PhaseOptimization:
    """``F_q / T^2`` over the free ancilla phases on the quantized model.

    The drive input is fixed, so the joint state is linear in the ancilla
    amplitudes: one evolution per qudit basis state covers every phase choice.
    """
    from .fock import coherent_or_fock_input, evolve_fock

    make, n_free = _ancilla_family(power, qm.model.h0)
    d = qm.dim
    n_c = qm.n_c[0]
    t = periods * qm.model.t_com
    basis = []
    for lam in range(d):
        e = np.zeros(d, dtype=complex)
        e[lam] = 1.0
        st = coherent_or_fock_input(kind, n_c, qm.n_max, e, phi10, phi20)
        basis.append(evolve_fock(qm, st, t).amplitudes)
    basis = np.array(basis)  # (lam, mu, n1, n2)
    axis = np.arange(points) * 2 * np.pi / points
    shape = (points,) * n_free
    land = np.empty(shape)
    for idx in itertools.product(range(points), repeat=n_free):
        s = make(axis[list(idx)])
        amp = np.einsum("l,m,lmab->ab", s, s.conj(), basis)
        land[idx] = qfi_pure(TwoModeState(amp / np.linalg.norm(amp), (0, 0))) / t**2
    best_idx = np.unravel_index(int(np.argmax(land)), shape)
    best_val = float(land[best_idx])
    flat = bool(np.ptp(land) <= 1e-9 * max(1.0, abs(best_val)))
    return PhaseOptimization(axis[list(best_idx)].astype(float), best_val, land, [axis] * n_free, flat)
