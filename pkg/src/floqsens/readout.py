"""Parity readout after the second beam splitter and its critical-point classifier.

The parity observable is ``Pi(theta) = exp(2i J_z theta) S`` with ``S`` the
mode swap, so for any state it is a trigonometric polynomial in ``theta``
whose coefficients are the swap correlations ``C_d``. Derivatives are exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .floquet import FloquetSpectrum, TrackingError, _match, fold
from .lattice import FieldDistribution
from .opspace import TwoModeState, swap_correlation

SINGULAR_MARGIN = 1e-8


# ------------------------------------------------------------------ curves


@dataclass
class ParityCurve:
    theta: np.ndarray
    parity: np.ndarray  # complex; the imaginary part is a diagnostic
    dparity: np.ndarray
    fisher: np.ndarray
    flagged: np.ndarray

    @property
    def delta_theta(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = 1.0 / np.sqrt(self.fisher)
        out[self.flagged] = np.nan
        return out

    def best(self) -> tuple[float, float]:
        """``(theta, delta_theta)`` of the most sensitive unflagged sample."""
        f = np.where(self.flagged, -np.inf, self.fisher)
        i = int(np.argmax(f))
        if not np.isfinite(f[i]) or f[i] <= 0:
            return float(self.theta[i]), math.inf
        return float(self.theta[i]), float(1.0 / math.sqrt(f[i]))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["theta_tilde", "parity_re", "parity_im", "dparity", "fisher", "delta_theta", "flag"])
            for t, p, dp, f, dt, fl in zip(
                self.theta, self.parity, self.dparity, self.fisher, self.delta_theta, self.flagged
            ):
                writer.writerow(
                    [f"{t:.12g}", f"{p.real:.12g}", f"{p.imag:.12g}", f"{dp:.12g}", f"{f:.12g}", f"{dt:.12g}", int(fl)]
                )


def default_theta_grid(points: int = 512) -> np.ndarray:
    return np.arange(points) * (2 * np.pi / points)


def _density_swap_correlation(rho: np.ndarray, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """``C_d = sum_{n1-n2=d} rho[(n2,n1),(n1,n2)]`` on the flat truncated basis."""
    dim = n_max + 1
    if rho.shape != (dim * dim, dim * dim):
        raise ValueError("density matrix does not match the truncation")
    n1, n2 = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    vals = rho[(n2 * dim + n1).ravel(), (n1 * dim + n2).ravel()]
    d = np.arange(-n_max, n_max + 1)
    c = np.bincount((n1 - n2).ravel() + n_max, weights=vals.real, minlength=2 * dim - 1) + 1j * np.bincount(
        (n1 - n2).ravel() + n_max, weights=vals.imag, minlength=2 * dim - 1
    )
    return d, c


def parity_coefficients(state, n_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(state, TwoModeState):
        if abs(state.norm() - 1.0) > 1e-8:
            raise ValueError(f"state is not normalized (norm {state.norm():.3e})")
        return swap_correlation(state)
    rho = np.asarray(state)
    if n_max is None:
        n_max = int(round(math.sqrt(rho.shape[0]))) - 1
    if abs(np.trace(rho) - 1.0) > 1e-8:
        raise ValueError("density matrix is not trace-normalized")
    return _density_swap_correlation(rho, n_max)


def parity_curve(state, theta=None, n_max: int | None = None) -> ParityCurve:
    """Parity expectation, its exact derivative and the classical Fisher information.

    ``state`` is a :class:`TwoModeState` or a density matrix on the flat
    ``(n_max + 1)**2`` basis. Samples with ``|<Pi>| > 1 - 1e-8`` are flagged.
    """
    theta = default_theta_grid() if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    d, c = parity_coefficients(state, n_max)
    keep = np.abs(c) > 0
    d, c = d[keep], c[keep]
    phase = np.exp(1j * np.multiply.outer(theta, d))
    p = phase @ c
    dp = (phase @ (1j * d * c)).real
    pr = p.real
    flagged = np.abs(pr) > 1 - SINGULAR_MARGIN
    denom = np.where(flagged, 1.0, 1 - pr**2)
    fisher = np.where(flagged, 0.0, dp**2 / denom)
    return ParityCurve(theta, p, dp, fisher, flagged)


# ----------------------------------------------------------------- scaling


@dataclass
class ScalingFit:
    exponent: float
    intercept: float
    r_squared: float
    residuals: np.ndarray
    times: np.ndarray
    delta_theta: np.ndarray
    theta: np.ndarray
    excluded: int = 0

    @property
    def insensitive(self) -> bool:
        return not np.isfinite(self.exponent)


def fit_power_law(times, values) -> tuple[float, float, float, np.ndarray]:
    """Least-squares ``log v = x log t + b``; returns ``(x, b, R^2, residuals)``."""
    lt, lv = np.log(np.asarray(times, float)), np.log(np.asarray(values, float))
    x, b = np.polyfit(lt, lv, 1)
    res = lv - (x * lt + b)
    ss = np.sum((lv - lv.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / ss if ss > 0 else 1.0
    return float(x), float(b), float(r2), res


def sensitivity_scaling(states, times, theta: float | None = None, grid=None, floor: float = 1e-12) -> ScalingFit:
    """Fit ``Delta theta ~ T^x`` over a sequence of readout states.

    With ``theta=None`` each state uses its best unflagged sample on ``grid``;
    otherwise the fixed ``theta``. Flagged or information-free samples are
    excluded; with fewer than two usable points the exponent is ``nan``.
    """
    times = np.asarray(times, float)
    if len(times) < 2:
        raise ValueError("need at least two times")
    grid = default_theta_grid() if grid is None else grid
    dts, ths = [], []
    for st in states:
        if theta is None:
            th, dt = parity_curve(st, grid).best()
        else:
            cv = parity_curve(st, [theta])
            th = theta
            dt = math.inf if cv.flagged[0] or cv.fisher[0] <= floor else 1 / math.sqrt(cv.fisher[0])
        dts.append(dt)
        ths.append(th)
    dts, ths = np.array(dts), np.array(ths)
    ok = np.isfinite(dts)
    if ok.sum() < 2:
        return ScalingFit(math.nan, math.nan, math.nan, np.array([]), times, dts, ths, int((~ok).sum()))
    x, b, r2, res = fit_power_law(times[ok], dts[ok])
    return ScalingFit(x, b, r2, res, times, dts, ths, int((~ok).sum()))


# -------------------------------------------------------------- classifier

NON_DEGENERATE = "non-degenerate"
DEGENERATE_SENSITIVE = "degenerate-sensitive"
DEGENERATE_INSENSITIVE = "degenerate-insensitive"
INSENSITIVE = "insensitive"
NO_SUB_SQL = "no-sub-SQL"

_RANK = {DEGENERATE_SENSITIVE: 3, NON_DEGENERATE: 2, DEGENERATE_INSENSITIVE: 1, INSENSITIVE: 0, NO_SUB_SQL: 0}
EXPONENT_CLASS = {
    DEGENERATE_SENSITIVE: "heisenberg",
    NON_DEGENERATE: "standard",
    DEGENERATE_INSENSITIVE: "insensitive",
    INSENSITIVE: "insensitive",
    NO_SUB_SQL: "insensitive",
}


@dataclass
class BandLine:
    """Bands tracked along ``delta = phi1 - phi2`` (``phi2 = 0``), possibly over several laps."""

    delta: np.ndarray  # extended coordinate, length laps * m
    energy: np.ndarray  # (curves, laps * m) unfolded
    slope: np.ndarray
    curvature: np.ndarray
    laps: np.ndarray  # laps per curve
    omega: float
    omega_com: float

    def _interp(self, arr, c, x):
        period = 2 * np.pi * self.laps[c]
        n = int(self.laps[c]) * (len(self.delta) // int(self.laps.max()))
        xs = self.delta[:n]
        return np.interp(np.mod(x, period), xs, arr[c, :n], period=period)

    def value(self, c, x):
        # unfolded energy winds by a multiple of omega_com per lap; remove the drift
        period = 2 * np.pi * self.laps[c]
        n = int(self.laps[c]) * (len(self.delta) // int(self.laps.max()))
        e = self.energy[c, :n]
        wind = (e[-1] + (e[-1] - e[-2]) - e[0]) if n > 1 else 0.0
        wind = self.omega_com * round(wind / self.omega_com)
        xm = np.mod(x, period)
        base = np.interp(xm, self.delta[:n], e - wind * self.delta[:n] / period, period=period)
        return base + wind * xm / period

    def d1(self, c, x):
        return self._interp(self.slope, c, x)

    def d2(self, c, x):
        return self._interp(self.curvature, c, x)


def band_line(spectrum: FloquetSpectrum) -> BandLine:
    """Track every band along ``phi1`` at ``phi2 = 0`` and close the loops.

    For equal tone frequencies the quasienergies depend only on
    ``phi1 - phi2`` (a time shift moves both phases together).
    """
    model = spectrum.model
    if not math.isclose(model.omega1, model.omega2, rel_tol=1e-12):
        raise ValueError("band line needs equal tone frequencies")
    m, d = spectrum.grid.m, model.dim
    w = model.omega_com
    eps = spectrum.energies[:, 0, :]
    vec = spectrum.states[:, 0]
    der = spectrum.dphi1[:, 0, :]
    if np.any(spectrum.ambiguous[:, 0]):
        raise TrackingError("band tracking is ambiguous along the phase-difference line")
    # follow bands through the full loop; perm maps band labels between points
    order = np.empty((m, d), int)
    order[0] = np.arange(d)
    for i in range(1, m):
        perm, _ = _match(vec[i - 1][:, order[i - 1]], vec[i])
        order[i] = perm
    wrap, _ = _match(vec[m - 1][:, order[m - 1]], vec[0])
    # cycles of the wrap permutation are the closed curves
    seen = np.zeros(d, bool)
    cycles = []
    for n in range(d):
        if seen[n]:
            continue
        cyc = [n]
        seen[n] = True
        k = wrap[n]
        while k != n:
            cyc.append(k)
            seen[k] = True
            k = wrap[k]
        cycles.append(cyc)
    laps_max = max(len(c) for c in cycles)
    h = spectrum.grid.spacing
    ext = np.arange(laps_max * m) * h
    energy = np.zeros((len(cycles), laps_max * m))
    slope = np.zeros_like(energy)
    for ci, cyc in enumerate(cycles):
        label = cyc[0]
        pos = 0
        for _ in range(len(cyc)):
            # order[i][label] is the band at point i carrying ``label`` from point 0
            for i in range(m):
                b = order[i][label]
                raw = eps[i, b]
                energy[ci, pos] = raw if pos == 0 else energy[ci, pos - 1] + fold(raw - energy[ci, pos - 1], w)
                slope[ci, pos] = der[i, b]
                pos += 1
            label = wrap[label]
    curvature = np.zeros_like(slope)
    for ci, cyc in enumerate(cycles):
        n = len(cyc) * m
        s = slope[ci, :n]
        curvature[ci, :n] = (np.roll(s, -1) - np.roll(s, 1)) / (2 * h)
    return BandLine(ext, energy, slope, curvature, np.array([len(c) for c in cycles]), model.omega1, w)


@dataclass
class CriticalPoint:
    pair: tuple[int, int]
    x: float  # phase-difference coordinate of the root
    curvature: float  # d^2 G / dx~^2
    theta_slope: float  # dG / dtheta~
    kind: str


@dataclass
class CharacteristicProfile:
    theta: float
    points: list[CriticalPoint] = field(default_factory=list)
    symmetric_pairs: list[tuple[int, int, bool]] = field(default_factory=list)
    verdict: str = INSENSITIVE
    pair_verdicts: dict = field(default_factory=dict)

    @property
    def exponent_class(self) -> str:
        return EXPONENT_CLASS[self.verdict]


def _support_deltas(field_dist: FieldDistribution | None, m: int, threshold: float) -> np.ndarray:
    """Boolean mask over grid phase differences covered by ``supp f``."""
    if field_dist is None:
        return np.ones(m, bool)
    mask = field_dist.support(threshold)
    i, j = np.nonzero(mask)
    out = np.zeros(m, bool)
    out[(i - j) % m] = True
    return out


def support_width(field_dist: FieldDistribution | None, omega: float) -> float:
    """Circular standard deviation of ``phi1 - phi2`` under ``|f|^2``, in ``x~`` units."""
    if field_dist is None:
        r = 0.0
    else:
        g = field_dist.grid
        p1, p2 = g.mesh()
        w = field_dist.weights
        r = abs(np.sum(w * np.exp(1j * (p1 - p2)))) / np.sum(w)
    # uniform spread caps the wrapped-normal estimate
    var = min(-2 * math.log(r) if r > 0 else math.inf, np.pi**2 / 3)
    return math.sqrt(var) / (math.sqrt(2) * omega)


def finite_time_tolerance(spectrum: FloquetSpectrum, field_dist: FieldDistribution | None, horizon: float) -> float:
    """Curvature below which the quadratic phase stays under one radian across ``supp f`` up to ``horizon``."""
    model = spectrum.model
    sigma = support_width(field_dist, model.omega1)
    default = 1e-3 * model.omega_com**2 / (2 * np.pi) ** 2
    return max(default, 1.0 / (horizon * sigma**2))


def classify_critical_points(
    spectrum: FloquetSpectrum,
    theta: float,
    field_dist: FieldDistribution | None = None,
    tol2: float | None = None,
    tol_theta: float | None = None,
    horizon: float | None = None,
    tol_flat: float | None = None,
    refine: int = 4,
    support_threshold: float = 1e-2,
) -> CharacteristicProfile:
    """Critical points of ``G_nm(x) = eps_n(x) - eps_m(-x - 2 theta)``.

    ``x`` is the phase difference ``phi1 - phi2``; derivatives are reported in
    the rescaled coordinate ``x~ = x / (sqrt(2) omega)``. Roots of ``dG/dx``
    are bracketed on a refined grid, bisected, and classified by ``d^2 G`` and
    ``dG/dtheta``. Both ``x`` and its partner must lie in ``supp f``, taken as
    the cells where ``|f|^2`` exceeds ``support_threshold`` times its peak.

    ``horizon`` (a time) replaces the fixed curvature tolerance by
    :func:`finite_time_tolerance`, i.e. the verdict that holds up to that time.
    """
    model = spectrum.model
    prof = CharacteristicProfile(float(theta))
    if not math.isclose(model.omega1, model.omega2, rel_tol=1e-12):
        prof.verdict = NO_SUB_SQL
        return prof
    wc = model.omega_com
    if tol2 is None:
        tol2 = 1e-3 * wc**2 / (2 * np.pi) ** 2 if horizon is None else finite_time_tolerance(spectrum, field_dist, horizon)
    tol_theta = 1e-6 * wc if tol_theta is None else tol_theta
    tol_flat = 1e-8 * wc if tol_flat is None else tol_flat
    scale = math.sqrt(2) * model.omega1  # d/dx~ = scale * d/dx
    line = band_line(spectrum)
    m = spectrum.grid.m
    h = spectrum.grid.spacing
    supp = _support_deltas(field_dist, m, support_threshold)

    def in_support(x):
        k = int(round(np.mod(x, 2 * np.pi) / h)) % m
        return bool(supp[k])

    ncurves = len(line.laps)
    for a in range(ncurves):
        for b in range(ncurves):
            for shift in range(int(line.laps[b])):
                off = 2 * np.pi * shift

                def partner(x):
                    return -x - 2 * theta + off

                def dg(x):
                    return line.d1(a, x) + line.d1(b, partner(x))

                period = 2 * np.pi * line.laps[a]
                xs = np.linspace(0, period, int(line.laps[a]) * m * refine + 1)
                gvals = line.value(a, xs) - line.value(b, partner(xs))
                inside = np.array([in_support(x) and in_support(partner(x)) for x in xs])
                key = (a, b) if line.laps.max() == 1 else (a, b, shift)
                if not inside.any():
                    continue
                # symmetric case: G constant on a finite overlap of the supports
                spread = np.max(np.abs(fold(gvals[inside] - gvals[inside][0], wc)))
                if inside.sum() >= 5 * refine and spread < tol_flat:
                    ts = np.max(np.abs(2 * line.d1(b, partner(xs[inside]))))
                    sensitive = ts > tol_theta
                    prof.symmetric_pairs.append((a, b, sensitive))
                    prof.pair_verdicts[key] = DEGENERATE_SENSITIVE if sensitive else DEGENERATE_INSENSITIVE
                    continue
                dv = dg(xs)
                best = INSENSITIVE
                for i in np.nonzero(np.sign(dv[:-1]) * np.sign(dv[1:]) <= 0)[0]:
                    lo, hi = xs[i], xs[i + 1]
                    if dv[i] == 0:
                        x0 = lo
                    elif dv[i + 1] == 0:
                        continue
                    else:
                        x0 = brentq(dg, lo, hi, xtol=1e-12)
                    if not (in_support(x0) and in_support(partner(x0))):
                        continue
                    curv = (line.d2(a, x0) - line.d2(b, partner(x0))) * scale**2
                    tslope = 2 * line.d1(b, partner(x0))
                    if abs(curv) >= tol2:
                        kind = NON_DEGENERATE if abs(tslope) > tol_theta else INSENSITIVE
                    else:
                        kind = DEGENERATE_SENSITIVE if abs(tslope) > tol_theta else DEGENERATE_INSENSITIVE
                    prof.points.append(CriticalPoint((a, b), float(np.mod(x0, 2 * np.pi)), float(curv), float(tslope), kind))
                    if _RANK[kind] > _RANK[best]:
                        best = kind
                prof.pair_verdicts[key] = best
    if prof.pair_verdicts:
        prof.verdict = max(prof.pair_verdicts.values(), key=_RANK.get)
    return prof


def best_verdict(spectrum, field_dist=None, thetas=None, **kw) -> CharacteristicProfile:
    """Most favourable classification over a set of readout phases."""
    thetas = default_theta_grid(64) if thetas is None else thetas
    best = None
    for th in thetas:
        prof = classify_critical_points(spectrum, float(th), field_dist, **kw)
        if best is None or _RANK[prof.verdict] > _RANK[best.verdict]:
            best = prof
    return best
