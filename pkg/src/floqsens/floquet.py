"""Classical two-tone Floquet engine.

A :class:`TwoToneModel` holds the decomposition

    H(t) = H0 + H1o sin(w1 t + phi1) + H1e cos(w1 t + phi1)
              + H2o sin(w2 t + phi2) + H2e cos(w2 t + phi2)

with commensurate ``w1 / w2 = p / q``. Propagators use midpoint-sampled exact
exponentials; spectra are computed on a :class:`~floqsens.opspace.PhaseGrid`
with eigenvector-overlap band matching and branch-aware finite differences.
The Floquet gauge is fixed by starting every period at ``t0 = 0``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .opspace import SIGMA_X, SIGMA_Y, SIGMA_Z, PhaseGrid, is_hermitian


class CommensurabilityError(ValueError):
    """Raised when the two drive frequencies are not (numerically) rational."""


class TrackingError(RuntimeError):
    """Raised when band matching is ambiguous and the caller asked for strictness."""


# ------------------------------------------------------------------------ model


@dataclass(frozen=True)
class TwoToneModel:
    h0: np.ndarray
    h1_odd: np.ndarray
    h1_even: np.ndarray
    h2_odd: np.ndarray
    h2_even: np.ndarray
    omega1: float
    omega2: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        ops = [np.asarray(o, dtype=complex) for o in self.operators()]
        dim = ops[0].shape[0]
        for label, op in zip(("h0", "h1_odd", "h1_even", "h2_odd", "h2_even"), ops):
            if op.shape != (dim, dim):
                raise ValueError(f"{label} has shape {op.shape}, expected {(dim, dim)}")
            if not is_hermitian(op):
                raise ValueError(f"{label} is not Hermitian")
            object.__setattr__(self, label, op)
        if dim < 2:
            raise ValueError("qudit dimension must be at least 2")
        if self.omega1 <= 0 or self.omega2 <= 0:
            raise ValueError("drive frequencies must be positive")
        self.commensurability  # validate eagerly

    def operators(self) -> tuple[np.ndarray, ...]:
        return (self.h0, self.h1_odd, self.h1_even, self.h2_odd, self.h2_even)

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def commensurability(self) -> tuple[int, int]:
        ratio = self.omega1 / self.omega2
        frac = Fraction(ratio).limit_denominator(1000)
        if abs(frac.numerator / frac.denominator - ratio) > 1e-9 * ratio:
            raise CommensurabilityError(f"omega1/omega2 = {ratio!r} is not commensurate")
        return frac.numerator, frac.denominator

    @property
    def omega_com(self) -> float:
        return self.omega1 / self.commensurability[0]

    @property
    def t_com(self) -> float:
        return 2.0 * np.pi / self.omega_com

    def drive_coefficients(self, t, phi1, phi2) -> np.ndarray:
        """Scalar prefactors ``(1, s1, c1, s2, c2)`` broadcast over inputs."""
        a1 = self.omega1 * np.asarray(t) + np.asarray(phi1)
        a2 = self.omega2 * np.asarray(t) + np.asarray(phi2)
        a1, a2 = np.broadcast_arrays(a1, a2)
        return np.stack([np.ones_like(a1), np.sin(a1), np.cos(a1), np.sin(a2), np.cos(a2)], -1)

    def hamiltonian(self, t, phi1=0.0, phi2=0.0) -> np.ndarray:
        coef = self.drive_coefficients(t, phi1, phi2)
        return np.einsum("...k,kab->...ab", coef, np.stack(self.operators()))

    def drive_rate(self, j: int, t, phi1=0.0, phi2=0.0, omega=None) -> np.ndarray:
        """``dH_j/dt``; ``omega`` overrides the instantaneous frequency."""
        w = (self.omega1, self.omega2)[j - 1] if omega is None else omega
        coef = self.drive_coefficients(t, phi1, phi2)
        s, c = (coef[..., 1], coef[..., 2]) if j == 1 else (coef[..., 3], coef[..., 4])
        odd, even = (self.h1_odd, self.h1_even) if j == 1 else (self.h2_odd, self.h2_even)
        w = np.asarray(w)[..., None, None]
        return w * (c[..., None, None] * odd - s[..., None, None] * even)

    def scaled(self, factor1: float, factor2: float | None = None) -> TwoToneModel:
        """Copy with drive couplings multiplied per drive."""
        factor2 = factor1 if factor2 is None else factor2
        return TwoToneModel(
            self.h0,
            self.h1_odd * factor1,
            self.h1_even * factor1,
            self.h2_odd * factor2,
            self.h2_even * factor2,
            self.omega1,
            self.omega2,
            self.name,
            dict(self.params),
        )

    def is_static(self) -> bool:
        return all(np.max(np.abs(op)) == 0 for op in self.operators()[1:])


# ---------------------------------------------------------------- time stepping


def _pauli_coefficients(ops: np.ndarray) -> np.ndarray:
    basis = np.stack([np.eye(2), SIGMA_X, SIGMA_Y, SIGMA_Z])
    return 0.5 * np.einsum("kab,pba->kp", ops, basis).real


def _expm_batch(h: np.ndarray, dt: float | np.ndarray) -> np.ndarray:
    """``exp(-i h dt)`` for a stack of Hermitian matrices via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * w * np.asarray(dt)[..., None])
    return (v * phase[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


class _Stepper:
    """Midpoint step exponentials for a batch of phase points."""

    def __init__(self, model: TwoToneModel, extra: np.ndarray | None = None):
        self.model = model
        self.ops = np.stack(model.operators())
        if extra is not None:
            self.ops = np.concatenate([self.ops, np.asarray(extra, dtype=complex)[None]])
        self.qubit = model.dim == 2
        if self.qubit:
            self.pcoef = _pauli_coefficients(self.ops)

    def step(self, coef: np.ndarray, dt: float) -> np.ndarray:
        if self.qubit:
            a = coef @ self.pcoef  # (..., 4): identity, x, y, z
            r = np.sqrt(np.sum(a[..., 1:] ** 2, axis=-1))
            safe = np.where(r > 0, r, 1.0)
            n = a[..., 1:] / safe[..., None]
            c = np.cos(r * dt)
            s = -1j * np.sin(r * dt)
            g = np.exp(-1j * a[..., 0] * dt)
            out = np.empty(coef.shape[:-1] + (2, 2), dtype=complex)
            out[..., 0, 0] = g * (c + s * n[..., 2])
            out[..., 1, 1] = g * (c - s * n[..., 2])
            out[..., 0, 1] = g * s * (n[..., 0] - 1j * n[..., 1])
            out[..., 1, 0] = g * s * (n[..., 0] + 1j * n[..., 1])
            return out
        h = np.einsum("...k,kab->...ab", coef, self.ops)
        return _expm_batch(h, dt)


def _step_count(duration: float, t_com: float, steps_per_tcom: int) -> int:
    return max(1, int(np.ceil(duration / t_com * steps_per_tcom - 1e-9)))


def propagate_batch(
    model: TwoToneModel,
    phi1,
    phi2,
    duration: float,
    steps_per_tcom: int = 2000,
    t_start: float = 0.0,
    snapshots: int | None = None,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Propagators ``U(t_start + duration, t_start)`` for arrays of phases.

    With ``snapshots=s`` the propagators at ``s`` equally spaced step
    boundaries (including ``t_start``) are returned as well; the number of
    steps is then rounded up to a multiple of ``s``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if steps_per_tcom < 100:
        raise ValueError("steps_per_tcom must be at least 100")
    phi1, phi2 = np.broadcast_arrays(np.asarray(phi1, float), np.asarray(phi2, float))
    n = _step_count(duration, model.t_com, steps_per_tcom)
    if snapshots:
        n = snapshots * int(np.ceil(n / snapshots))
    dt = duration / n
    stepper = _Stepper(model)
    u = np.broadcast_to(np.eye(model.dim, dtype=complex), phi1.shape + (model.dim,) * 2).copy()
    snaps = []
    every = n // snapshots if snapshots else 0
    for k in range(n):
        if every and k % every == 0:
            snaps.append(u.copy())
        t = t_start + (k + 0.5) * dt
        u = stepper.step(model.drive_coefficients(t, phi1, phi2), dt) @ u
    if snapshots:
        return u, np.stack(snaps, axis=phi1.ndim)
    return u


def propagate(
    model: TwoToneModel,
    phases: tuple[float, float],
    duration: float,
    steps_per_tcom: int = 2000,
) -> np.ndarray:
    """Time-ordered propagator ``U(duration, 0)`` at fixed drive phases."""
    model.commensurability
    return propagate_batch(model, phases[0], phases[1], duration, steps_per_tcom)


def grid_propagators(model: TwoToneModel, grid: PhaseGrid, steps_per_tcom: int = 2000) -> np.ndarray:
    """One-period propagators ``U_phi(T_com)`` on every grid point.

    When one drive is the fundamental (``p == 1`` or ``q == 1``) the grid is
    covered by time-shifted copies of a single phase line, so only ``m``
    trajectories are integrated and the shift relation holds to round-off.
    """
    p, q = model.commensurability
    m = grid.m
    steps = m * int(np.ceil(steps_per_tcom / m))
    idx = np.arange(m)
    if p != 1 and q != 1:
        p1, p2 = grid.mesh()
        return propagate_batch(model, p1, p2, model.t_com, steps)
    line = grid.axis
    if p == 1:
        u_line, w = propagate_batch(model, 0.0, line, model.t_com, steps, snapshots=m)
        a, c = np.meshgrid(idx, idx, indexing="ij")
        b = (c - q * a) % m
        shift = a
    else:
        u_line, w = propagate_batch(model, line, 0.0, model.t_com, steps, snapshots=m)
        a, c = np.meshgrid(idx, idx, indexing="ij")
        b = (a - p * c) % m
        shift = c
    wk = w[b, shift]
    return wk @ u_line[b] @ np.swapaxes(wk.conj(), -1, -2)


# -------------------------------------------------------------------- spectrum


def fold(eps, omega_com: float):
    """Fold quasienergies into ``[-omega_com/2, omega_com/2)``."""
    return (np.asarray(eps) + omega_com / 2) % omega_com - omega_com / 2


def _eigen_unitary(u: np.ndarray, t_com: float, omega_com: float):
    lam, vec = np.linalg.eig(u)
    eps = fold(-np.angle(lam) / t_com, omega_com)
    order = np.argsort(eps, axis=-1)
    eps = np.take_along_axis(eps, order, -1)
    vec = np.take_along_axis(vec, order[..., None, :], -1)
    vec, r = np.linalg.qr(vec)
    # keep the phase convention of the eig output
    vec = vec * np.exp(1j * np.angle(np.diagonal(r, axis1=-2, axis2=-1)))[..., None, :]
    return eps, vec


def _match(vec_a: np.ndarray, vec_b: np.ndarray):
    """Best band permutation ``perm[n]`` of ``b`` for each band ``n`` of ``a``.

    Returns the permutation and the smallest matched overlap ``|<a_n|b_perm(n)>|^2``.
    """
    d = vec_a.shape[-1]
    ov = np.abs(np.swapaxes(vec_a.conj(), -1, -2) @ vec_b) ** 2
    perms = np.array(list(itertools.permutations(range(d))))
    scores = ov[..., np.arange(d), perms].sum(-1)
    best = np.argmax(scores, axis=-1)
    perm = perms[best]
    matched = np.take_along_axis(ov, perm[..., :, None], -1)[..., 0]
    return perm, matched.min(-1)


@dataclass
class FloquetSpectrum:
    model: TwoToneModel
    grid: PhaseGrid
    energies: np.ndarray  # (m, m, d) folded
    states: np.ndarray  # (m, m, d, d), columns are eigenvectors
    dphi1: np.ndarray  # (m, m, d)
    dphi2: np.ndarray
    tracking_quality: np.ndarray  # (m, m) smallest matched overlap
    degenerate: np.ndarray  # (m, m) bool
    residual: float
    steps_per_tcom: int

    @property
    def ambiguous(self) -> np.ndarray:
        return self.tracking_quality < 0.5

    @property
    def ddelta(self) -> np.ndarray:
        """``(d_phi1 - d_phi2) eps``."""
        return self.dphi1 - self.dphi2

    def power_matrices(self, j: int) -> np.ndarray:
        """Per-point power operators ``P_j(phi)`` of shape ``(m, m, d, d)``."""
        der = self.dphi1 if j == 1 else self.dphi2 if j == 2 else None
        if der is None:
            raise ValueError("drive index must be 1 or 2")
        v = self.states
        return (v * der[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)

    def propagator_power(self, k: int) -> np.ndarray:
        """``U_phi(k T_com)`` for every grid point from the cached eigensystem."""
        phase = np.exp(-1j * self.energies * k * self.model.t_com)
        v = self.states
        return (v * phase[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)

    def unfolded_rows(self) -> np.ndarray:
        """Energies unfolded along ``phi2`` within each ``phi1`` row (plotting aid)."""
        w = self.model.omega_com
        m = self.grid.m
        out = self.energies.copy()
        for i in range(m):
            for j in range(1, m):
                perm, _ = _match(self.states[i, j - 1], self.states[i, j])
                cur = self.energies[i, j][perm]
                out[i, j] = out[i, j - 1] + fold(cur - out[i, j - 1], w)
        return out

    def to_csv(self, path: str | Path) -> None:
        axis = self.grid.axis
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["phi1", "phi2", "band", "eps_folded", "deps_dphi1", "deps_dphi2"])
            m, d = self.grid.m, self.model.dim
            for i in range(m):
                for j in range(m):
                    for n in range(d):
                        writer.writerow(
                            [
                                f"{axis[i]:.12g}",
                                f"{axis[j]:.12g}",
                                n,
                                f"{self.energies[i, j, n]:.12g}",
                                f"{self.dphi1[i, j, n]:.12g}",
                                f"{self.dphi2[i, j, n]:.12g}",
                            ]
                        )


def _align_degenerate(eps, vec, omega_com, tol):
    """Resolve degenerate points using a non-degenerate neighbour's eigenvectors."""
    m = eps.shape[0]
    d = eps.shape[-1]
    gaps = np.abs(fold(eps[..., :, None] - eps[..., None, :], omega_com))
    gaps = gaps + np.eye(d) * omega_com
    degenerate = gaps.min(axis=(-2, -1)) < tol
    for i, j in zip(*np.nonzero(degenerate)):
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ni, nj = (i + di) % m, (j + dj) % m
            if degenerate[ni, nj]:
                continue
            ref = vec[ni, nj]
            new = vec[i, j].copy()
            # cluster bands by near-equal quasienergy and rotate within each cluster
            done = np.zeros(d, bool)
            for n in range(d):
                if done[n]:
                    continue
                cl = np.nonzero(gaps[i, j, n] < tol)[0].tolist() + [n]
                cl = sorted(set(cl))
                done[cl] = True
                if len(cl) == 1:
                    continue
                sub = vec[i, j][:, cl]
                proj = sub @ (sub.conj().T @ ref)
                weight = np.sum(np.abs(proj) ** 2, axis=0)
                pick = np.argsort(weight)[::-1][: len(cl)]
                q, _ = np.linalg.qr(proj[:, np.sort(pick)])
                new[:, cl] = q
            vec[i, j] = new
            break
    return degenerate


def quasienergies(
    model: TwoToneModel,
    grid: PhaseGrid,
    steps_per_tcom: int = 2000,
    degeneracy_tol: float | None = None,
) -> FloquetSpectrum:
    """Diagonalise ``U_phi(T_com)`` over the grid and differentiate the bands.

    Derivatives are central differences with step equal to the grid spacing.
    Each neighbour's bands are matched by maximal eigenvector overlap and the
    difference is taken on the branch of ``eps mod omega_com`` closest to zero.
    """
    u = grid_propagators(model, grid, steps_per_tcom)
    w = model.omega_com
    eps, vec = _eigen_unitary(u, model.t_com, w)
    lam = np.exp(-1j * eps * model.t_com)
    res = np.max(np.abs(u @ vec - vec * lam[..., None, :]))
    tol = degeneracy_tol if degeneracy_tol is not None else 1e-6 * w
    degenerate = _align_degenerate(eps, vec, w, tol)
    h = grid.spacing
    derivs = []
    quality = np.ones(eps.shape[:2])
    for axis in (0, 1):
        parts = []
        for sgn in (1, -1):
            nb_vec = np.roll(vec, -sgn, axis=axis)
            nb_eps = np.roll(eps, -sgn, axis=axis)
            perm, q = _match(vec, nb_vec)
            quality = np.minimum(quality, q)
            parts.append(fold(np.take_along_axis(nb_eps, perm, -1) - eps, w))
        derivs.append((parts[0] - parts[1]) / (2 * h))
    return FloquetSpectrum(
        model, grid, eps, vec, derivs[0], derivs[1], quality, degenerate, float(res), steps_per_tcom
    )


def power_operator(spectrum: FloquetSpectrum, j: int) -> np.ndarray:
    """Power-operator field ``P_j(phi)`` over the grid, shape ``(m, m, d, d)``."""
    return spectrum.power_matrices(j)


def qubit_power_states(p_matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(|P>, |-P>)``: eigenvectors of a qubit power operator, positive first."""
    w, v = np.linalg.eigh(p_matrix)
    return v[:, 1], v[:, 0]


# ------------------------------------------------------------ energy transfer


@dataclass
class EnergyTrace:
    times: np.ndarray
    work1: np.ndarray  # cumulative E_1(t) = int <dH_1/dt>
    work2: np.ndarray
    t_com: float

    def mean_power(self, j: int) -> np.ndarray:
        """``E_j(t)/t`` at the sampled times (``nan`` at ``t = 0``)."""
        e = self.work1 if j == 1 else self.work2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.times > 0, e / self.times, np.nan)

    def stroboscopic(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        k = np.rint(self.times / self.t_com)
        mask = (np.abs(self.times - k * self.t_com) < 1e-9 * self.t_com) & (k > 0)
        return self.times[mask], self.mean_power(j)[mask]


def transfer_batch(
    model: TwoToneModel,
    phases: tuple[float, float],
    psi0: np.ndarray,
    horizon: float,
    steps_per_tcom: int = 2000,
    extra_operator: np.ndarray | None = None,
    extra_field: np.ndarray | None = None,
    phase_noise: np.ndarray | None = None,
    freq_noise: np.ndarray | None = None,
    record_every: int = 1,
):
    """Work done by each drive along batched trajectories.

    ``extra_field`` has shape ``(B, n_steps)`` and multiplies ``extra_operator``.
    ``phase_noise`` ``(B, n_steps, 2)`` adds to the drive phases at each
    midpoint and ``freq_noise`` (same shape) to the instantaneous frequencies
    used for ``dH_j/dt``. Returns ``(times, E1, E2)`` with ``E`` of shape
    ``(B, n_records)``.
    """
    n = _step_count(horizon, model.t_com, steps_per_tcom)
    dt = horizon / n
    psi = np.atleast_2d(np.asarray(psi0, dtype=complex))
    shapes = [a.shape[0] for a in (extra_field, phase_noise) if a is not None]
    batch = max([psi.shape[0]] + shapes)
    psi = np.broadcast_to(psi, (batch, model.dim)).copy()
    stepper = _Stepper(model, extra_operator if extra_field is not None else None)
    e = np.zeros((batch, 2))
    rec_t, rec1, rec2 = [0.0], [np.zeros(batch)], [np.zeros(batch)]
    for k in range(n):
        t = (k + 0.5) * dt
        ph1 = phases[0] + (phase_noise[:, k, 0] if phase_noise is not None else 0.0)
        ph2 = phases[1] + (phase_noise[:, k, 1] if phase_noise is not None else 0.0)
        coef = model.drive_coefficients(t, ph1, ph2)
        coef = np.broadcast_to(coef, (batch, 5))
        if extra_field is not None:
            coef = np.concatenate([coef, extra_field[:, k, None]], axis=-1)
        half = stepper.step(coef, dt / 2)
        mid = np.einsum("bij,bj->bi", half, psi)
        for j in (1, 2):
            w = None
            if freq_noise is not None:
                w = (model.omega1, model.omega2)[j - 1] + freq_noise[:, k, j - 1]
            rate = model.drive_rate(j, t, ph1, ph2, omega=w)
            rate = np.broadcast_to(rate, (batch, model.dim, model.dim))
            e[:, j - 1] += dt * np.einsum("bi,bij,bj->b", mid.conj(), rate, mid).real
        psi = np.einsum("bij,bj->bi", half, mid)
        if (k + 1) % record_every == 0 or k == n - 1:
            rec_t.append((k + 1) * dt)
            rec1.append(e[:, 0].copy())
            rec2.append(e[:, 1].copy())
    return np.array(rec_t), np.stack(rec1, 1), np.stack(rec2, 1)


def energy_transfer_trace(
    model: TwoToneModel,
    phases: tuple[float, float],
    psi0: np.ndarray,
    horizon: float,
    steps_per_tcom: int = 2000,
) -> EnergyTrace:
    """Cumulative work ``E_j(t)`` done by each drive on the qudit.

    At stroboscopic times ``E_j(T)/T`` tends to ``omega_j <psi0|P_j|psi0>``.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-9:
        raise ValueError("initial state must be normalized")
    t, e1, e2 = transfer_batch(model, phases, psi0, horizon, steps_per_tcom)
    return EnergyTrace(t, e1[0], e2[0], model.t_com)


# ---------------------------------------------------------------- model library

S_Z = SIGMA_Z / 2

MODEL_ANCHORS = {
    "circular": "qubit under two co-rotating circular drives (closed-form bands)",
    "polarization": "qubit under circular drives of opposite chirality (Dirac point)",
    "zeeman": "spin in a two-tone Zeeman field (flat bands)",
    "specific": "qubit with mixed sine/cosine couplings (non-degenerate critical points)",
    "qutrit": "ladder qutrit with two cosine and two sine couplings",
}

MODEL_DEFAULTS = {
    "circular": {"omega0": 1.0, "omega": 0.25, "A": 0.125},
    "polarization": {"omega0": 1.0, "omega": 1.0, "A": 0.5},
    "zeeman": {"g": 1.0, "B0": 1.0, "B1": 1.0, "B2": 1.0, "omega1": 1.0, "omega2": 1.0},
    "specific": {"omega0": 1.0, "omega": 1.0, "A": 0.5},
    "qutrit": {"omega": 1.0, "omega12": 1.0, "omega23": 0.5, "A": 0.5},
}


def _need(params: dict, name: str, keys: tuple[str, ...]) -> dict:
    merged = dict(MODEL_DEFAULTS[name])
    merged.update(params or {})
    unknown = set(merged) - set(MODEL_DEFAULTS[name])
    if unknown:
        raise ValueError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    missing = [k for k in keys if merged.get(k) is None]
    if missing:
        raise ValueError(f"missing parameter(s) for {name}: {missing}")
    return merged


def model_library(name: str, parameters: dict | None = None) -> TwoToneModel:
    """Build a gallery model; unspecified parameters take the gallery defaults."""
    z2 = np.zeros((2, 2), dtype=complex)
    if name == "circular":
        p = _need(parameters, name, ("omega0", "omega", "A"))
        a = p["A"]
        return TwoToneModel(
            p["omega0"] / 2 * SIGMA_Z, a * SIGMA_Y, a * SIGMA_X, a * SIGMA_Y, a * SIGMA_X,
            p["omega"], p["omega"], name, p,
        )
    if name == "polarization":
        p = _need(parameters, name, ("omega0", "omega", "A"))
        a = p["A"]
        return TwoToneModel(
            p["omega0"] / 2 * SIGMA_X, a * SIGMA_Y, a * SIGMA_X, -a * SIGMA_Y, a * SIGMA_X,
            p["omega"], p["omega"], name, p,
        )
    if name == "zeeman":
        p = _need(parameters, name, ("g", "B0", "B1", "B2", "omega1", "omega2"))
        g = p["g"]
        return TwoToneModel(
            -g * p["B0"] * S_Z, z2, -g * p["B1"] * S_Z, z2, -g * p["B2"] * S_Z,
            p["omega1"], p["omega2"], name, p,
        )
    if name == "specific":
        p = _need(parameters, name, ("omega0", "omega", "A"))
        a = p["A"]
        return TwoToneModel(
            p["omega0"] / 2 * SIGMA_Z, 3 * a * SIGMA_Y, a * SIGMA_Z, a * SIGMA_X, 2 * a * SIGMA_Z,
            p["omega"], p["omega"], name, p,
        )
    if name == "qutrit":
        p = _need(parameters, name, ("omega", "omega12", "omega23", "A"))
        a = p["A"]
        h0 = np.diag([0.0, p["omega12"], p["omega12"] + p["omega23"]]).astype(complex)

        def hop(i, j):
            out = np.zeros((3, 3), dtype=complex)
            out[i, j] = out[j, i] = 1.0
            return out

        return TwoToneModel(
            h0, 2 * a * hop(0, 2), a / 2 * hop(0, 1), -2 * a * hop(0, 2), a / 2 * hop(1, 2),
            p["omega"], p["omega"], name, p,
        )
    suggestion = _suggest(name)
    hint = f"; did you mean {suggestion!r}?" if suggestion else ""
    raise KeyError(f"unknown model {name!r}{hint}")


def _suggest(name: str) -> str | None:
    import difflib

    hits = difflib.get_close_matches(name, list(MODEL_ANCHORS), n=1, cutoff=0.4)
    return hits[0] if hits else None


def circular_closed_form(omega0: float, omega: float, amp: float, dphi) -> np.ndarray:
    """Unfolded circular-model quasienergies ``(eps_+, eps_-)`` versus ``phi1 - phi2``."""
    root = np.sqrt((omega0 - omega) ** 2 + 16 * amp**2 * np.cos(np.asarray(dphi) / 2) ** 2)
    return np.stack([(omega + root) / 2, (omega - root) / 2], -1)
