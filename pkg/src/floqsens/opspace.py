"""Operator and state algebra shared across the package.

Qudit operators are dense ``numpy`` arrays. Two-mode bosonic operators live on
the truncated product basis ``|n1, n2>`` with ``0 <= n_j <= n_max`` and flat
index ``n1 * (n_max + 1) + n2``. Two-mode pure states are kept as 2-D amplitude
arrays indexed ``[n1 - origin1, n2 - origin2]`` so that windows centred far
from the vacuum (phase-lattice states) need no padding.

Phase/number convention: ``|phi> = sum_n exp(i phi n) |n>``. A phase-grid
amplitude ``exp(i phi_1)`` therefore lands on relative occupation ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


def pauli(axis: str) -> np.ndarray:
    """Return a copy of the Pauli matrix for ``axis`` in {x, y, z}."""
    table = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
    try:
        return table[axis].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) < tol)


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    return np.outer(vec, vec.conj())


# --------------------------------------------------------------------------- grid


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform ``m x m`` sampling of the drive-phase torus ``[0, 2pi)^2``."""

    m: int = 128

    def __post_init__(self) -> None:
        if self.m < 2 or self.m & (self.m - 1):
            raise ValueError(f"phase grid size must be a power of two, got {self.m}")

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.m

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def axis(self) -> np.ndarray:
        return np.arange(self.m) * self.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(phi1, phi2)`` arrays of shape ``(m, m)`` with ``indexing='ij'``."""
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def offsets(self) -> np.ndarray:
        """Relative occupations paired with the grid, ``-m/2 .. m/2 - 1``."""
        return np.arange(-self.m // 2, self.m // 2)

    def index_of(self, phi: float) -> int:
        """Nearest grid index of a phase (wrapped into ``[0, 2pi)``)."""
        return int(np.rint((phi % (2 * np.pi)) / self.spacing)) % self.m


# ------------------------------------------------------------------ two-mode ops


def _ladder(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1, format="csr")


def mode_operators(n_max: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Annihilation operators ``(a1, a2)`` on the truncated two-mode space.

    The matrix element ``n_max -> n_max + 1`` is simply absent.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    a = _ladder(n_max)
    eye = sp.identity(n_max + 1, format="csr")
    return sp.kron(a, eye, format="csr"), sp.kron(eye, a, format="csr")


def number_operators(n_max: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    n = np.arange(n_max + 1, dtype=float)
    n1 = np.repeat(n, n_max + 1)
    n2 = np.tile(n, n_max + 1)
    return sp.diags(n1, format="csr"), sp.diags(n2, format="csr")


@dataclass(frozen=True)
class TwoModeOperator:
    """Sparse operator on the truncated ``(n_max + 1)^2`` number basis."""

    matrix: sp.csr_matrix
    n_max: int
    label: str = ""

    @property
    def dim(self) -> int:
        return (self.n_max + 1) ** 2

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec

    def expectation(self, vec: np.ndarray) -> complex:
        vec = np.asarray(vec).ravel()
        return complex(np.vdot(vec, self.matrix @ vec))


def build_angular_momentum(kind: str, n_max: int) -> TwoModeOperator:
    """Truncated Schwinger operator ``J_x``, ``J_y`` or ``J_z``.

    ``J_y = (a1^dag a2 - a2^dag a1) / 2i`` so that ``[J_x, J_y] = i J_z``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    a1, a2 = mode_operators(n_max)
    hop = a1.T @ a2  # a1^dag a2 (real matrices, so .T is the adjoint)
    if kind == "x":
        mat = 0.5 * (hop + hop.T)
    elif kind == "y":
        mat = (hop - hop.T) / 2j
    elif kind == "z":
        n1, n2 = number_operators(n_max)
        mat = 0.5 * (n1 - n2)
    else:
        raise ValueError(f"angular momentum kind must be x, y or z, got {kind!r}")
    return TwoModeOperator(sp.csr_matrix(mat, dtype=complex), n_max, f"J{kind}")


def swap_operator(n_max: int) -> TwoModeOperator:
    dim = n_max + 1
    idx = np.arange(dim * dim)
    n1, n2 = np.divmod(idx, dim)
    cols = n2 * dim + n1
    mat = sp.csr_matrix((np.ones(dim * dim, dtype=complex), (idx, cols)), shape=(dim * dim,) * 2)
    return TwoModeOperator(mat, n_max, "S")


def parity_operator(n_max: int) -> TwoModeOperator:
    """Mode-2 parity ``(-1)^{n2}``."""
    _, n2 = number_operators(n_max)
    diag = (-1.0) ** n2.diagonal()
    return TwoModeOperator(sp.diags(diag.astype(complex), format="csr"), n_max, "Pi")


# --------------------------------------------------------------- two-mode states


@dataclass
class TwoModeState:
    """Pure two-mode state on a rectangular occupation window.

    ``amplitudes[i1, i2]`` is the amplitude of ``|origin1 + i1, origin2 + i2>``.
    Negative absolute occupations are permitted (phase-lattice windows) and can
    be detected with :meth:`negative_weight`.
    """

    amplitudes: np.ndarray
    origin: tuple[int, int] = (0, 0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.ndim != 2:
            raise ValueError("two-mode amplitudes must be a 2-D array")
        self.origin = (int(self.origin[0]), int(self.origin[1]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.amplitudes.shape

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        s1, s2 = self.shape
        return self.origin[0] + np.arange(s1), self.origin[1] + np.arange(s2)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def normalized(self) -> TwoModeState:
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize a null state")
        return TwoModeState(self.amplitudes / nrm, self.origin, dict(self.meta))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def marginal(self, mode: int) -> tuple[np.ndarray, np.ndarray]:
        """Occupation distribution of one mode as ``(n, p(n))``."""
        p = self.probabilities()
        n1, n2 = self.occupations()
        return (n1, p.sum(axis=1)) if mode == 1 else (n2, p.sum(axis=0))

    def moments(self) -> dict[str, float]:
        """Number moments used by the metrology layer."""
        p = self.probabilities()
        p = p / p.sum()
        n1, n2 = self.occupations()
        m1 = float(p.sum(axis=1) @ n1)
        m2 = float(p.sum(axis=0) @ n2)
        m12 = float(n1 @ p @ n2)
        d = n1[:, None] - n2[None, :]
        jz = 0.5 * float(np.sum(p * d))
        jz2 = 0.25 * float(np.sum(p * d * d))
        return {"n1": m1, "n2": m2, "n1n2": m12, "jz": jz, "jz2": jz2}

    def negative_weight(self) -> float:
        n1, n2 = self.occupations()
        p = self.probabilities()
        mask = (n1[:, None] < 0) | (n2[None, :] < 0)
        return float(p[mask].sum())

    def edge_weight(self, width: int = 2) -> float:
        """Probability within ``width`` cells of the window boundary."""
        p = self.probabilities()
        inner = p[width:-width, width:-width].sum() if min(p.shape) > 2 * width else 0.0
        return float(p.sum() - inner)

    def to_dense(self, n_max: int) -> np.ndarray:
        """Embed into the flat ``(n_max + 1)^2`` vector of the truncated basis."""
        out = np.zeros((n_max + 1, n_max + 1), dtype=complex)
        n1, n2 = self.occupations()
        ok1 = (n1 >= 0) & (n1 <= n_max)
        ok2 = (n2 >= 0) & (n2 <= n_max)
        kept = self.amplitudes[np.ix_(ok1, ok2)]
        lost = np.sum(np.abs(self.amplitudes) ** 2) - np.sum(np.abs(kept) ** 2)
        if lost > 1e-12:
            raise ValueError(f"state has weight {lost:.3e} outside 0..{n_max}")
        out[np.ix_(n1[ok1], n2[ok2])] = kept
        return out.ravel()

    @classmethod
    def from_dense(cls, vec: np.ndarray, n_max: int) -> TwoModeState:
        return cls(np.asarray(vec).reshape(n_max + 1, n_max + 1), (0, 0))

    def symmetric_window(self) -> TwoModeState:
        """Re-embed on a square window with equal origins (needed by the swap)."""
        if self.origin[0] == self.origin[1] and self.shape[0] == self.shape[1]:
            return self
        n1, n2 = self.occupations()
        lo = min(n1[0], n2[0])
        hi = max(n1[-1], n2[-1])
        size = hi - lo + 1
        out = np.zeros((size, size), dtype=complex)
        out[n1[0] - lo : n1[-1] - lo + 1, n2[0] - lo : n2[-1] - lo + 1] = self.amplitudes
        return TwoModeState(out, (lo, lo), dict(self.meta))


def fock_product(n1: int, n2: int) -> TwoModeState:
    return TwoModeState(np.ones((1, 1)), (n1, n2))


def noon_state(n: int, phase: float = 0.0) -> TwoModeState:
    """``(|N,0> + e^{i phase}|0,N>)/sqrt(2)``."""
    amp = np.zeros((n + 1, n + 1), dtype=complex)
    amp[n, 0] = 1 / np.sqrt(2)
    amp[0, n] += np.exp(1j * phase) / np.sqrt(2)
    return TwoModeState(amp, (0, 0), {"kind": "noon", "N": n})


def beam_splitter_matrix(n_total: int, angle: float = np.pi / 4) -> np.ndarray:
    """``exp(i angle (a1^dag a2 + a2^dag a1))`` restricted to ``n1 + n2 = N``.

    Basis index ``k`` is the occupation ``n1 = k`` of the block.
    """
    k = np.arange(n_total)
    off = np.sqrt((k + 1) * (n_total - k))  # <k+1| a1^dag a2 |k>
    gen = np.diag(off, -1) + np.diag(off, 1)
    w, v = np.linalg.eigh(gen)
    return (v * np.exp(1j * angle * w)) @ v.conj().T


def twin_fock_state(n_total: int) -> TwoModeState:
    """Twin-Fock input ``|N/2, N/2>`` after a balanced beam splitter."""
    if n_total % 2:
        raise ValueError("twin-Fock state needs an even total number")
    u = beam_splitter_matrix(n_total)
    block = u[:, n_total // 2]
    amp = np.zeros((n_total + 1, n_total + 1), dtype=complex)
    k = np.arange(n_total + 1)
    amp[k, n_total - k] = block
    return TwoModeState(amp, (0, 0), {"kind": "twin_fock", "N": n_total})


# ---------------------------------------------------------- phase <-> number maps


@dataclass
class NumberLattice:
    """Amplitudes on the relative-occupation lattice paired with a phase grid.

    ``amplitudes[..., i1, i2]`` belongs to ``n_j = offsets_j + (i_j - m/2)``.
    """

    amplitudes: np.ndarray
    offsets: tuple[int, int]

    @property
    def m(self) -> int:
        return self.amplitudes.shape[-1]

    def two_mode(self) -> TwoModeState:
        if self.amplitudes.ndim != 2:
            raise ValueError("only a bare two-mode lattice converts to TwoModeState")
        half = self.m // 2
        return TwoModeState(self.amplitudes, (self.offsets[0] - half, self.offsets[1] - half))


def phase_to_number(amplitudes: np.ndarray, offsets: tuple[int, int] = (0, 0)) -> NumberLattice:
    """Unitary map from phase-grid amplitudes to relative-occupation amplitudes.

    The last two axes of ``amplitudes`` are the ``(phi1, phi2)`` grid; leading
    axes (e.g. qudit level) are carried along. Amplitudes are discrete, i.e.
    normalised so that ``sum |c|^2 = 1``.
    """
    amplitudes = np.asarray(amplitudes, dtype=complex)
    if amplitudes.ndim < 2 or amplitudes.shape[-1] != amplitudes.shape[-2]:
        raise ValueError("phase amplitudes need a square (m, m) trailing grid")
    PhaseGrid(amplitudes.shape[-1])  # validates power of two
    if min(offsets) < 0:
        raise ValueError("occupancy offsets must be nonnegative")
    out = np.fft.ifft2(amplitudes, axes=(-2, -1), norm="ortho")
    out = np.fft.fftshift(out, axes=(-2, -1))
    return NumberLattice(out, (int(offsets[0]), int(offsets[1])))


def number_to_phase(lattice: NumberLattice) -> np.ndarray:
    """Inverse of :func:`phase_to_number`."""
    amp = np.fft.ifftshift(lattice.amplitudes, axes=(-2, -1))
    return np.fft.fft2(amp, axes=(-2, -1), norm="ortho")


# ------------------------------------------------------------------------ parity


def swap_correlation(state: TwoModeState) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal sums ``C_d = sum_{n1-n2=d} psi*(n1,n2) psi(n2,n1)``.

    The parity expectation is the trigonometric polynomial
    ``<Pi(theta)> = sum_d C_d exp(i theta d)``; returns ``(d, C_d)``.
    """
    st = state.symmetric_window()
    a = st.amplitudes
    b = a.conj() * a.T
    size = a.shape[0]
    d = np.arange(-(size - 1), size)
    # trace with offset k sums entries (i, i + k), i.e. n1 - n2 = -k
    c = np.array([np.trace(b, offset=-int(k)) for k in d])
    return d, c


def parity_swap_expectation(
    state: TwoModeState, theta: float | np.ndarray, check_norm: bool = True
) -> complex | np.ndarray:
    """``<psi| exp(2i J_z theta) S |psi>``, exact for any ``theta``."""
    if check_norm and abs(state.norm() - 1.0) > 1e-8:
        raise ValueError(f"state is not normalized (norm {state.norm():.3e})")
    d, c = swap_correlation(state)
    theta = np.asarray(theta, dtype=float)
    val = np.exp(1j * np.multiply.outer(theta, d)) @ c
    return complex(val) if val.ndim == 0 else val
