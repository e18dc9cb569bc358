"""Electro-nuclear spin Hamiltonian: spin matrices, Stevens operators, eigensolver.

The product basis is ``|m_S, m_I>`` with both projections running from
``+j`` down to ``-j``; basis index = ``index(m_S) * (2I + 1) + index(m_I)``.
The electronic operators act as ``O (x) 1_I``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .constants import MU_B_MHZ_PER_G


class EigenConvergenceError(RuntimeError):
    """Raised when the iterative eigensolver hits its sweep cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (off-diagonal residual {residual:.3e})")
        self.residual = residual


def _as_half_integer(j, name: str = "j") -> float:
    twice = 2 * float(j)
    if twice < 0 or abs(twice - round(twice)) > 1e-9:
        raise ValueError(f"{name} must be a non-negative half-integer, got {j!r}")
    return round(twice) / 2


def basis_labels(S: float, I: float) -> list[tuple[float, float]]:
    """(m_S, m_I) for every product-basis index."""
    ms = np.arange(S, -S - 1, -1)
    mi = np.arange(I, -I - 1, -1)
    return [(float(a), float(b)) for a in ms for b in mi]


def basis_index(S: float, I: float, m_s: float, m_i: float) -> int:
    """Product-basis index of ``|m_s, m_i>``."""
    i_s = round(S - m_s)
    i_i = round(I - m_i)
    if not (0 <= i_s <= 2 * S and 0 <= i_i <= 2 * I) or abs(S - m_s - i_s) > 1e-9:
        raise ValueError(f"|{m_s}, {m_i}> is not a basis state for S={S}, I={I}")
    return int(i_s * round(2 * I + 1) + i_i)


@lru_cache(maxsize=None)
def _spin_matrices_cached(twice_j: int):
    j = twice_j / 2
    m = j - np.arange(twice_j + 1)
    d = twice_j + 1
    jz = np.diag(m).astype(complex)
    jp = np.zeros((d, d), dtype=complex)
    # <m+1|J+|m> = sqrt(j(j+1) - m(m+1)); row above the column it raises
    for k in range(1, d):
        jp[k - 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jm = jp.conj().T
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    for a in (jx, jy, jz, jp, jm):
        a.setflags(write=False)
    return jx, jy, jz, jp, jm


def spin_matrices(j) -> tuple[NDArray, NDArray, NDArray]:
    """Angular-momentum matrices (Jx, Jy, Jz) in the ``|m = +j ... -j>`` basis.

    Parameters
    ----------
    j : float or Fraction
        Spin quantum number; ``2j`` must be a non-negative integer.

    Returns
    -------
    jx, jy, jz : ndarray
        Complex Hermitian ``(2j+1, 2j+1)`` matrices. They are fresh copies and
        may be modified by the caller.
    """
    j = _as_half_integer(j)
    jx, jy, jz, _, _ = _spin_matrices_cached(round(2 * j))
    return jx.copy(), jy.copy(), jz.copy()


def ladder_operators(j) -> tuple[NDArray, NDArray]:
    """(J+, J-) in the same basis as :func:`spin_matrices`."""
    j = _as_half_integer(j)
    _, _, _, jp, jm = _spin_matrices_cached(round(2 * j))
    return jp.copy(), jm.copy()


# Polynomials P_kq(Jz, X) entering O_k^q = 1/4 {P_kq, J+^q + J-^q} (q > 0)
# and O_k^0 = P_k0. Each is a list of (power of Jz, coefficient(X)).
_STEVENS_POLY = {
    (2, 0): lambda X: [(2, 3), (0, -X)],
    (2, 1): lambda X: [(1, 1)],
    (2, 2): lambda X: [(0, 1)],
    (4, 0): lambda X: [(4, 35), (2, -(30 * X - 25)), (0, 3 * X**2 - 6 * X)],
    (4, 1): lambda X: [(3, 7), (1, -(3 * X + 1))],
    (4, 2): lambda X: [(2, 7), (0, -X - 5)],
    (4, 3): lambda X: [(1, 1)],
    (4, 4): lambda X: [(0, 1)],
    (6, 0): lambda X: [
        (6, 231),
        (4, -(315 * X - 735)),
        (2, 105 * X**2 - 525 * X + 294),
        (0, -5 * X**3 + 40 * X**2 - 60 * X),
    ],
    (6, 1): lambda X: [(5, 33), (3, -(30 * X - 15)), (1, 5 * X**2 - 10 * X + 12)],
    (6, 2): lambda X: [(4, 33), (2, -(18 * X + 123)), (0, X**2 + 10 * X + 102)],
    (6, 3): lambda X: [(3, 11), (1, -(3 * X + 59))],
    (6, 4): lambda X: [(2, 11), (0, -X - 38)],
    (6, 5): lambda X: [(1, 1)],
    (6, 6): lambda X: [(0, 1)],
}

SUPPORTED_STEVENS = tuple(sorted(_STEVENS_POLY))


def stevens_operator(k: int, q: int, j) -> NDArray:
    """Extended Stevens operator O_k^q (cosine type, q >= 0).

    Only ranks 2, 4 and 6 are tabulated; ``k`` may not exceed ``2j``.
    """
    if (k, q) not in _STEVENS_POLY:
        raise ValueError(
            f"unsupported Stevens operator O_{k}^{q}: need k in (2, 4, 6) and 0 <= q <= k"
        )
    j = _as_half_integer(j)
    if k > 2 * j:
        raise ValueError(f"O_{k}^{q} vanishes identically for j={j}; need k <= 2j")
    jx, jy, jz, jp, jm = _spin_matrices_cached(round(2 * j))
    X = j * (j + 1)
    d = jz.shape[0]
    mz = np.real(np.diag(jz))
    poly = np.zeros(d)
    for power, coeff in _STEVENS_POLY[(k, q)](X):
        poly = poly + coeff * mz**power
    P = np.diag(poly).astype(complex)
    if q == 0:
        return P
    ladder = np.linalg.matrix_power(jp, q) + np.linalg.matrix_power(jm, q)
    return (P @ ladder + ladder @ P) / 4


@dataclass(frozen=True)
class SpinSystem:
    """Electronic spin S coupled to nuclear spin I in an axial crystal field.

    ``stevens`` holds ``(k, q, B_k^q)`` triples with B in MHz; ``A_diag`` is the
    hyperfine tensor diagonal in MHz. The c-axis is the z-axis.
    """

    S: float
    I: float
    g_par: float
    g_perp: float
    A_diag: tuple[float, float, float] = (0.0, 0.0, 0.0)
    stevens: tuple[tuple[int, int, float], ...] = ()
    abundance: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "S", _as_half_integer(self.S, "S"))
        object.__setattr__(self, "I", _as_half_integer(self.I, "I"))
        if not (self.g_par > 0 and self.g_perp > 0):
            raise ValueError("g_par and g_perp must be positive")
        A = tuple(float(a) for a in np.broadcast_to(np.asarray(self.A_diag, float), (3,)))
        object.__setattr__(self, "A_diag", A)
        seen = set()
        terms = []
        for term in self.stevens:
            k, q, b = term
            k, q = int(k), int(q)
            if (k, q) not in _STEVENS_POLY:
                raise ValueError(f"unsupported Stevens term (k={k}, q={q})")
            if (k, q) in seen:
                raise ValueError(f"duplicate Stevens term (k={k}, q={q})")
            if k > 2 * self.S:
                raise ValueError(f"Stevens rank {k} exceeds 2S for S={self.S}")
            seen.add((k, q))
            terms.append((k, q, float(b)))
        object.__setattr__(self, "stevens", tuple(terms))
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError("abundance must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return round((2 * self.S + 1) * (2 * self.I + 1))

    def to_dict(self) -> dict:
        return {
            "S": self.S,
            "I": self.I,
            "g_par": self.g_par,
            "g_perp": self.g_perp,
            "A_diag": list(self.A_diag),
            "stevens": [[k, q, b] for k, q, b in self.stevens],
            "abundance": self.abundance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpinSystem":
        missing = {"S", "I", "g_par", "g_perp"} - set(d)
        if missing:
            raise ValueError(f"spin system is missing keys: {sorted(missing)}")
        unknown = set(d) - {"S", "I", "g_par", "g_perp", "A_diag", "stevens", "abundance"}
        if unknown:
            raise ValueError(f"unknown spin system keys: {sorted(unknown)}")
        S = Fraction(str(d["S"])) if isinstance(d["S"], str) else d["S"]
        I = Fraction(str(d["I"])) if isinstance(d["I"], str) else d["I"]
        A = d.get("A_diag", 0.0)
        if np.isscalar(A):
            A = (A, A, A)
        return cls(
            S=float(S),
            I=float(I),
            g_par=float(d["g_par"]),
            g_perp=float(d["g_perp"]),
            A_diag=tuple(A),
            stevens=tuple(tuple(t) for t in d.get("stevens", [])),
            abundance=float(d.get("abundance", 1.0)),
        )

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def load(cls, path) -> "SpinSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class FieldVector:
    """Static field: magnitude in G, polar angle ``beta`` from c and azimuth ``phi`` (deg)."""

    magnitude: float
    beta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("field magnitude must be >= 0")
        if not 0.0 <= self.beta <= 180.0:
            raise ValueError("beta must lie in [0, 180] degrees")
        object.__setattr__(self, "phi", float(self.phi) % 360.0)

    @classmethod
    def signed(cls, h: float, beta: float, phi: float = 0.0) -> "FieldVector":
        """Field ``h`` (may be negative) along the direction (beta, phi)."""
        if h >= 0:
            return cls(h, beta, phi)
        return cls(-h, 180.0 - beta, phi + 180.0)

    def cartesian(self) -> NDArray:
        b, p = np.radians(self.beta), np.radians(self.phi)
        return self.magnitude * np.array([np.sin(b) * np.cos(p), np.sin(b) * np.sin(p), np.cos(b)])


@dataclass(frozen=True)
class Orientation:
    """Direction of a field sweep; signed sweep values map onto this axis."""

    beta: float = 0.0
    phi: float = 0.0

    def unit(self) -> NDArray:
        return FieldVector(1.0, self.beta, self.phi).cartesian()

    def field(self, h: float) -> FieldVector:
        return FieldVector.signed(h, self.beta, self.phi)


@dataclass(frozen=True)
class _Operators:
    Sx: NDArray
    Sy: NDArray
    Sz: NDArray
    Ix: NDArray
    Iy: NDArray
    Iz: NDArray


@lru_cache(maxsize=32)
def product_operators(S: float, I: float) -> _Operators:
    """Electronic and nuclear spin operators embedded in the product space."""
    sx, sy, sz = spin_matrices(S)
    ix, iy, iz = spin_matrices(I)
    eS = np.eye(sx.shape[0])
    eI = np.eye(ix.shape[0])
    ops = _Operators(
        np.kron(sx, eI), np.kron(sy, eI), np.kron(sz, eI),
        np.kron(eS, ix), np.kron(eS, iy), np.kron(eS, iz),
    )
    for a in vars(ops).values():
        a.setflags(write=False)
    return ops


@lru_cache(maxsize=64)
def _static_part(sys: SpinSystem) -> NDArray:
    ops = product_operators(sys.S, sys.I)
    nI = round(2 * sys.I + 1)
    H = np.zeros((sys.dim, sys.dim), dtype=complex)
    for k, q, b in sys.stevens:
        if b != 0.0:
            H += b * np.kron(stevens_operator(k, q, sys.S), np.eye(nI))
    ax, ay, az = sys.A_diag
    H += ax * ops.Sx @ ops.Ix + ay * ops.Sy @ ops.Iy + az * ops.Sz @ ops.Iz
    H.setflags(write=False)
    return H


def _zeeman_operators(sys: SpinSystem) -> tuple[NDArray, NDArray, NDArray]:
    ops = product_operators(sys.S, sys.I)
    return (
        MU_B_MHZ_PER_G * sys.g_perp * ops.Sx,
        MU_B_MHZ_PER_G * sys.g_perp * ops.Sy,
        MU_B_MHZ_PER_G * sys.g_par * ops.Sz,
    )


def build_hamiltonian(sys: SpinSystem, field: FieldVector) -> NDArray:
    """Full Hamiltonian in MHz: Zeeman + crystal field + hyperfine."""
    hx, hy, hz = field.cartesian()
    zx, zy, zz = _zeeman_operators(sys)
    return _static_part(sys) + hx * zx + hy * zy + hz * zz


def hamiltonian_stack(sys: SpinSystem, orientation: Orientation, fields) -> NDArray:
    """Hamiltonians for signed sweep values ``fields`` along ``orientation``, shape (n, D, D)."""
    fields = np.asarray(fields, dtype=float)
    u = orientation.unit()
    zx, zy, zz = _zeeman_operators(sys)
    zeeman = u[0] * zx + u[1] * zy + u[2] * zz
    return _static_part(sys)[None] + fields[:, None, None] * zeeman[None]


@dataclass(frozen=True)
class EigenSolution:
    """Ascending energies (MHz) and orthonormal eigenvectors (columns)."""

    energies: NDArray
    states: NDArray

    def __post_init__(self):
        self.energies.setflags(write=False)
        self.states.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def state(self, k: int) -> NDArray:
        return self.states[:, k]

    def residual(self, H: NDArray) -> float:
        """Relative reconstruction residual ``||H - V L V^+||_F / ||H||_F``."""
        V = self.states
        rec = (V * self.energies) @ V.conj().T
        scale = np.linalg.norm(H) or 1.0
        return float(np.linalg.norm(H - rec) / scale)

    def orthonormality_error(self) -> float:
        V = self.states
        return float(np.max(np.abs(V.conj().T @ V - np.eye(self.dim))))


def _check_hermitian(H: NDArray, tol: float) -> NDArray:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = np.linalg.norm(H)
    asym = np.linalg.norm(H - H.conj().T)
    if asym > tol * max(scale, 1e-300) and asym > 0:
        raise ValueError(f"matrix is not Hermitian (relative asymmetry {asym / scale:.2e})")
    return (H + H.conj().T) / 2


def _offdiag_norm(A: NDArray) -> float:
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def _jacobi(A: NDArray, max_sweeps: int = 100, tol: float = 1e-15) -> tuple[NDArray, NDArray]:
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    scale = np.linalg.norm(A) or 1.0
    for _ in range(max_sweeps):
        off = _offdiag_norm(A)
        if off <= tol * scale:
            return np.real(np.diag(A)).copy(), V
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = (A[q, q].real - A[p, p].real) / (2 * mag)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                # U acts on columns p, q: U = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                u_pp, u_pq = c, s
                u_qp, u_qq = -s * np.conj(phase), c * np.conj(phase)
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = colp * u_pp + colq * u_qp
                A[:, q] = colp * u_pq + colq * u_qq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = np.conj(u_pp) * rowp + np.conj(u_qp) * rowq
                A[q, :] = np.conj(u_pq) * rowp + np.conj(u_qq) * rowq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = vp * u_pp + vq * u_qp
                V[:, q] = vp * u_pq + vq * u_qq
    off = _offdiag_norm(A)
    raise EigenConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps", off / scale)


def _canonicalize(w: NDArray, V: NDArray, degeneracy_tol: float) -> tuple[NDArray, NDArray]:
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    mags = np.abs(V)
    peak = mags.argmax(axis=0)
    # fix the global phase: largest amplitude real and positive
    ph = V[peak, np.arange(V.shape[1])]
    V = V * (np.abs(ph) / ph)[None, :]
    gap = degeneracy_tol * max(1.0, float(np.max(np.abs(w))) if len(w) else 1.0)
    start = 0
    perm = np.arange(len(w))
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[stop - 1] <= gap:
            stop += 1
        if stop - start > 1:
            idx = list(range(start, stop))
            idx.sort(key=lambda c: (-round(mags[peak[c], c], 12), peak[c]))
            perm[start:stop] = idx
        start = stop
    return w[perm], V[:, perm]


def eigensolve(
    H: NDArray,
    method: str = "lapack",
    hermitian_tol: float = 1e-8,
    degeneracy_tol: float = 1e-10,
) -> EigenSolution:
    """Diagonalize a Hermitian matrix with deterministic ordering.

    Energies ascend. Inside a degenerate cluster (levels closer than
    ``degeneracy_tol * max(1, max|E|)``) eigenpairs are ordered by descending
    peak amplitude and then by the basis index of that peak, so energies in a
    cluster may be out of order by less than that tolerance. Each
    column is phased so its largest amplitude is real and positive.

    ``method`` is ``"lapack"`` (``numpy.linalg.eigh``) or ``"jacobi"`` (cyclic
    complex Jacobi rotations, slower but self-contained).
    """
    Hs = _check_hermitian(H, hermitian_tol)
    if method == "lapack":
        w, V = np.linalg.eigh(Hs)
    elif method == "jacobi":
        w, V = _jacobi(Hs)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    w, V = _canonicalize(np.asarray(w, float), np.asarray(V, complex), degeneracy_tol)
    return EigenSolution(w, V)


def eigensolve_stack(Hs: NDArray, degeneracy_tol: float = 1e-10) -> tuple[NDArray, NDArray]:
    """Batch version of :func:`eigensolve` for a stack of Hermitian matrices."""
    w, V = np.linalg.eigh(Hs)
    out_w = np.empty_like(w)
    out_V = np.empty_like(V)
    for n in range(len(w)):
        out_w[n], out_V[n] = _canonicalize(w[n], V[n], degeneracy_tol)
    return out_w, out_V
