"""Imperfections: photon loss in one arm, a-priori phase uncertainty, and stochastic drive/qubit noise."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .floquet import TwoToneModel, grid_propagators, propagate_batch, transfer_batch
from .lattice import FieldDistribution
from .metrology import lattice_pes, qfi_mixed
from .opspace import SIGMA_X, TwoModeState, build_angular_momentum
from .readout import default_theta_grid, parity_curve


def _check_density(rho: np.ndarray) -> None:
    if abs(np.trace(rho).real - 1) > 1e-9:
        raise ValueError("density matrix trace differs from one")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError("density matrix is not Hermitian")


def as_density(state, n_max: int | None = None) -> tuple[np.ndarray, int]:
    """Flat ``(n_max+1)^2`` density matrix from a pure state or a density matrix."""
    if isinstance(state, TwoModeState):
        if n_max is None:
            n1, n2 = state.occupations()
            n_max = int(max(n1[-1], n2[-1]))
        v = state.to_dense(n_max)
        return np.outer(v, v.conj()), n_max
    rho = np.asarray(state, dtype=complex)
    if rho.ndim == 1:
        d = int(round(math.sqrt(rho.shape[0])))
        return np.outer(rho, rho.conj()), d - 1
    d = int(round(math.sqrt(rho.shape[0])))
    if d * d != rho.shape[0]:
        raise ValueError("density matrix dimension is not a square of a mode dimension")
    return rho, d - 1


# -------------------------------------------------------------------- loss


def kraus_amplitudes(eta: float, n_max: int) -> np.ndarray:
    """``k[j, n] = <n-j| K_j |n>`` for loss on one mode."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    n = np.arange(n_max + 1)
    out = np.zeros((n_max + 1, n_max + 1))
    for j in range(n_max + 1):
        ok = n >= j
        nn = n[ok]
        logc = gammaln(nn + 1) - gammaln(j + 1) - gammaln(nn - j + 1)
        with np.errstate(divide="ignore"):
            lt = j * 0.5 * math.log(1 - eta) if eta < 1 else (0.0 if j == 0 else -np.inf)
            lk = (nn - j) * 0.5 * math.log(eta) if eta > 0 else np.where(nn == j, 0.0, -np.inf)
        out[j, ok] = np.exp(0.5 * logc + lt + lk)
    return out


def lossy_channel(state, eta: float, n_max: int | None = None, mode: int = 1) -> np.ndarray:
    """Photon loss with transmissivity ``eta`` on mode 1: ``sum_j K_j rho K_j^dag``."""
    if mode != 1:
        raise ValueError("loss is modelled on mode 1 only")
    rho, n_max = as_density(state, n_max)
    _check_density(rho)
    dim = n_max + 1
    k = kraus_amplitudes(eta, n_max)
    r = rho.reshape(dim, dim, dim, dim)  # (n1, n2, n1', n2')
    out = np.zeros_like(r)
    for j in range(dim):
        kj = k[j]
        if not kj.any():
            continue
        term = kj[:, None, None, None] * r * kj[None, None, :, None]
        out[: dim - j, :, : dim - j, :] += term[j:, :, j:, :]
    return out.reshape(dim * dim, dim * dim)


@dataclass
class LossPoint:
    eta: float
    qfi: float
    parity_fisher: float
    parity_theta: float

    @property
    def delta_qfi(self) -> float:
        return 1 / math.sqrt(self.qfi) if self.qfi > 0 else math.inf

    @property
    def delta_parity(self) -> float:
        return 1 / math.sqrt(self.parity_fisher) if self.parity_fisher > 0 else math.inf


def loss_sweep(state, etas, n_max: int | None = None, theta_grid=None) -> list[LossPoint]:
    """QFI and best parity Fisher information after loss, for each transmissivity."""
    rho0, n_max = as_density(state, n_max)
    jz = build_angular_momentum("z", n_max)
    grid = default_theta_grid() if theta_grid is None else theta_grid
    out = []
    for eta in etas:
        rho = lossy_channel(rho0, float(eta), n_max)
        f = qfi_mixed(rho, jz)
        th, dt = parity_curve(rho, grid, n_max).best()
        pf = 0.0 if not math.isfinite(dt) else 1 / dt**2
        out.append(LossPoint(float(eta), f, pf, th))
    return out


def write_loss_csv(path: str | Path, points: list[LossPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "qfi", "delta_theta_qfi", "parity_fisher", "delta_theta_parity", "theta_tilde"])
        for p in points:
            w.writerow(
                [f"{p.eta:.12g}", f"{p.qfi:.12g}", f"{p.delta_qfi:.12g}", f"{p.parity_fisher:.12g}", f"{p.delta_parity:.12g}", f"{p.parity_theta:.12g}"]
            )


# --------------------------------------------------------------- Bayesian


@dataclass
class PriorModel:
    nodes: np.ndarray
    weights: np.ndarray  # quadrature weights including the density
    fisher: float
    width: float
    kind: str = "gaussian"

    @classmethod
    def gaussian(cls, width: float, nodes: int = 64) -> PriorModel:
        if width <= 0:
            raise ValueError("prior width must be positive")
        x, w = np.polynomial.hermite.hermgauss(nodes)
        return cls(math.sqrt(2) * width * x, w / math.sqrt(math.pi), 1.0 / width**2, width)

    @classmethod
    def tabulated(cls, theta, density) -> PriorModel:
        """Custom prior on a uniform ``theta`` grid; trapezoid quadrature."""
        theta = np.asarray(theta, float)
        p = np.asarray(density, float)
        h = theta[1] - theta[0]
        w = np.full_like(theta, h)
        w[0] = w[-1] = h / 2
        mass = np.sum(w * p)
        p = p / mass
        dp = np.gradient(p, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            f0 = float(np.sum(w * np.where(p > 0, dp**2 / p, 0.0)))
        mean = np.sum(w * p * theta)
        width = math.sqrt(np.sum(w * p * (theta - mean) ** 2))
        return cls(theta, w * p, f0, width, "tabulated")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.weights * self.nodes**2))


@dataclass
class BayesResult:
    posterior_variance: float
    delta_theta_m: float
    prior_variance: float
    gain: float  # 1/posterior_variance - F0


def bayesian_improvement(state, prior: PriorModel, n_max: int | None = None, rtol: float = 1e-9) -> BayesResult:
    """Optimal-projector posterior variance for the phase ``exp(-i theta J_z)``.

    ``rho_-`` and ``rho_bar`` are quadratures of ``rho_theta`` and
    ``theta rho_theta`` over the prior; the optimal observable ``S`` solves
    ``rho_- S + S rho_- = 2 rho_bar`` and the posterior variance is
    ``<theta^2> - tr(rho_bar S)``.
    """
    rho, n_max = as_density(state, n_max)
    dim = n_max + 1
    n1, n2 = np.divmod(np.arange(dim * dim), dim)
    jz = 0.5 * (n1 - n2)
    diff = jz[:, None] - jz[None, :]
    # rho_theta[a, b] = rho[a, b] exp(-i theta (jz_a - jz_b)), so only diff matters
    keys, inv = np.unique(diff, return_inverse=True)
    phases = np.exp(-1j * np.outer(prior.nodes, keys))
    avg = (prior.weights @ phases)[inv].reshape(diff.shape)
    first = ((prior.weights * prior.nodes) @ phases)[inv].reshape(diff.shape)
    rho_m = rho * avg
    rho_bar = rho * first
    lam, vec = np.linalg.eigh(0.5 * (rho_m + rho_m.conj().T))
    bar = vec.conj().T @ rho_bar @ vec
    s = lam[:, None] + lam[None, :]
    ok = s > 1e-14
    sk = np.zeros_like(bar)
    sk[ok] = 2 * bar[ok] / s[ok]
    gained = float(np.real(np.sum(bar.T * sk)))  # tr(rho_bar S)
    second = prior.second_moment / prior.mass
    post = max(second - gained, 0.0)
    gain = (1.0 / post if post > 0 else math.inf) - prior.fisher
    if gain <= rtol * prior.fisher:
        dtm = math.inf
    else:
        dtm = 1.0 / math.sqrt(gain)
    return BayesResult(post, dtm, second, gain)


# -------------------------------------------------------------------- noise


@dataclass
class NoiseSpec:
    """White Gaussian noise; ``strength`` is the per-step standard deviation."""

    kind: str  # dephasing | frequency | detuning
    strength: float
    tau_tcom: float = 1e-3
    axis: np.ndarray = field(default_factory=lambda: SIGMA_X.copy())
    seed: int = 0
    drive: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ("dephasing", "frequency", "detuning"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.strength < 0:
            raise ValueError("noise strength must be nonnegative")
        if self.tau_tcom > 1e-3 + 1e-15:
            raise ValueError("noise time step must not exceed 1e-3 T_com")
        if self.drive not in (1, 2):
            raise ValueError("drive must be 1 or 2")


def trajectory_generators(seed: int, count: int) -> list[np.random.Generator]:
    """Independent counter-based streams spawned from one master seed."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(count)]


def noise_samples(noise: NoiseSpec, trajectories: int, steps: int) -> np.ndarray:
    gens = trajectory_generators(noise.seed, trajectories)
    return np.stack([g.standard_normal(steps) for g in gens]) * noise.strength


def phase_meander(noise: NoiseSpec, t_com: float, trajectories: int, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Times and ``<Delta Phi(t)^2>`` for frequency noise integrated with step ``tau``."""
    tau = noise.tau_tcom * t_com
    dw = noise_samples(noise, trajectories, steps)
    phi = np.cumsum(dw * tau, axis=1)
    return tau * np.arange(1, steps + 1), np.mean(phi**2, axis=0)


@dataclass
class NoisyTransfer:
    times: np.ndarray
    mean1: np.ndarray
    mean2: np.ndarray
    err1: np.ndarray  # standard error of the mean
    err2: np.ndarray
    t_com: float
    trajectories: int
    seed: int

    def stop_time(self, j: int = 2, fraction: float = 0.1, window: float = 1.0) -> float:
        return transfer_stop_time(self.times, self.mean1 if j == 1 else self.mean2, self.t_com, fraction, window)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "E1_mean", "E1_err", "E2_mean", "E2_err"])
            for row in zip(self.times, self.mean1, self.err1, self.mean2, self.err2):
                w.writerow([f"{v:.12g}" for v in row])


def transfer_stop_time(times, energy, t_com: float, fraction: float = 0.1, window: float = 1.0) -> float:
    """First time the windowed slope of ``|E|`` drops below ``fraction`` of the initial slope.

    Slopes are secant slopes over consecutive windows of ``window`` periods;
    returns the window start, or the last time if transfer never stops.
    """
    times = np.asarray(times)
    e = np.asarray(energy)
    marks = np.arange(0.0, times[-1] + 1e-9 * t_com, window * t_com)
    vals = np.interp(marks, times, e)
    slopes = np.diff(vals) / (window * t_com)
    if len(slopes) < 2:
        raise ValueError("horizon too short for a slope estimate")
    ref = slopes[0]
    if abs(ref) == 0:
        return 0.0
    below = np.nonzero(slopes / ref < fraction)[0]
    return float(marks[below[0]]) if below.size else float(times[-1])


def noisy_energy_transfer(
    model: TwoToneModel,
    phases: tuple[float, float],
    psi0: np.ndarray,
    noise: NoiseSpec,
    trajectories: int = 50,
    horizon_tcom: float = 20.0,
    record_every: int = 100,
) -> NoisyTransfer:
    """Monte Carlo average of the work done by each drive under noise.

    Dephasing adds ``eta(t) * axis`` to the Hamiltonian with ``eta`` an
    i.i.d. normal per step; frequency noise shifts the noisy drive's
    frequency by ``dw(t)`` so its phase meanders by ``cumsum(dw * tau)``.
    """
    if trajectories < 50:
        raise ValueError("at least 50 trajectories are required")
    if noise.kind == "detuning":
        raise ValueError("use detuned_parity for deterministic detuning")
    steps_per_tcom = int(round(1 / noise.tau_tcom))
    horizon = horizon_tcom * model.t_com
    steps = int(round(horizon_tcom * steps_per_tcom))
    tau = horizon / steps
    psi0 = np.asarray(psi0, dtype=complex)
    kw = {}
    if noise.strength > 0:
        xi = noise_samples(noise, trajectories, steps)
        if noise.kind == "dephasing":
            kw = dict(extra_operator=noise.axis, extra_field=xi)
        else:
            meander = np.cumsum(xi * tau, axis=1) - 0.5 * xi * tau  # phase at step midpoints
            pn = np.zeros((trajectories, steps, 2))
            fn = np.zeros((trajectories, steps, 2))
            pn[:, :, noise.drive - 1] = meander
            fn[:, :, noise.drive - 1] = xi
            kw = dict(phase_noise=pn, freq_noise=fn)
        t, e1, e2 = transfer_batch(model, phases, psi0, horizon, steps_per_tcom, record_every=record_every, **kw)
    else:
        t, e1, e2 = transfer_batch(model, phases, psi0, horizon, steps_per_tcom, record_every=record_every)
        e1 = np.repeat(e1, trajectories, axis=0)
        e2 = np.repeat(e2, trajectories, axis=0)
    sq = math.sqrt(trajectories)
    return NoisyTransfer(
        t, e1.mean(0), e2.mean(0), e1.std(0, ddof=1) / sq, e2.std(0, ddof=1) / sq, model.t_com, trajectories, noise.seed
    )


# ---------------------------------------------------------------- detuning


@dataclass
class DetunedSeries:
    detuning: float
    times: np.ndarray  # in T_com of the nominal model
    delta_theta: np.ndarray
    theta: np.ndarray

    def onset(self, baseline: DetunedSeries, threshold: float = 0.25) -> float:
        """First time the log-ratio to ``baseline`` exceeds ``log(1 + threshold)``; ``inf`` if never."""
        r = np.abs(np.log(self.delta_theta / baseline.delta_theta))
        hit = np.nonzero(r > math.log1p(threshold))[0]
        return float(self.times[hit[0]]) if hit.size else math.inf


def detuned_parity(
    model: TwoToneModel,
    detuning: float,
    field_dist: FieldDistribution,
    ancilla: np.ndarray,
    periods,
    theta: float | None = None,
    offsets: tuple[int, int] = (0, 0),
    steps_per_tcom: int = 1000,
    theta_grid=None,
) -> DetunedSeries:
    """Parity sensitivity when both drives run at ``omega + detuning``.

    The ancilla is prepared for the nominal model; the lattice state is
    evolved with the detuned drives to the nominal stroboscopic times
    ``periods * T_com``. ``theta=None`` uses the best readout phase per time.
    """
    if not math.isclose(model.omega1, model.omega2):
        raise ValueError("detuning study assumes equal tone frequencies")
    grid = field_dist.grid
    shifted = TwoToneModel(
        model.h0,
        model.h1_odd,
        model.h1_even,
        model.h2_odd,
        model.h2_even,
        model.omega1 + detuning,
        model.omega2 + detuning,
        model.name,
        dict(model.params),
    )
    one = grid_propagators(shifted, grid, steps_per_tcom)
    p1, p2 = grid.mesh()
    tg = default_theta_grid() if theta_grid is None else theta_grid
    dts, ths = [], []
    for k in np.asarray(periods, float):
        t = k * model.t_com
        whole = int(math.floor(t / shifted.t_com + 1e-12))
        rest = t - whole * shifted.t_com
        u = np.linalg.matrix_power(one, whole) if whole else np.broadcast_to(np.eye(model.dim, dtype=complex), one.shape)
        if rest > 1e-12 * shifted.t_com:
            u = propagate_batch(shifted, p1, p2, rest, steps_per_tcom) @ u
        st, _ = lattice_pes(u, field_dist, ancilla, offsets)
        if theta is None:
            th, dt = parity_curve(st, tg).best()
        else:
            cv = parity_curve(st, [theta])
            th, dt = theta, float(cv.delta_theta[0])
        dts.append(dt)
        ths.append(th)
    return DetunedSeries(detuning, np.asarray(periods, float), np.array(dts), np.array(ths))
