"""Chinese-remainder reconstruction and co-prime index remapping.

For co-prime grid extents the 2D DFT is a relabeled 1D DFT of length
n = nx * ny: reading the grid along the diagonal t -> (t mod nx, t mod ny)
turns the 2D analysis sum into the 1D one with frequency relabeling
f = (u * ny + v * nx) mod n, and no twiddle corrections. That equivalence
lets the general 2D decoder compute sparse 1D DFTs (through a 1-row view)
and vice versa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dims, FfastError, FfastPlan, MODE_ROBUST, SparseSpectrum
from .oracle import SignalSource


class ResidueOutOfRange(FfastError, ValueError):
    """A residue is negative or not smaller than its modulus."""


class DimsNotCoprime(FfastError, ValueError):
    """Grid extents share a common divisor, so the diagonal map is not 1:1."""


@dataclass(frozen=True)
class CrtBasis:
    """Pairwise co-prime moduli with precomputed reconstruction weights.

    weights[i] = M_i * (M_i^{-1} mod m_i) with M_i = n / m_i, so
    weights[i] = 1 mod m_i and = 0 mod every other modulus.
    """

    moduli: tuple[int, ...]
    n: int
    weights: tuple[int, ...]

    @classmethod
    def from_moduli(cls, moduli) -> "CrtBasis":
        moduli = tuple(int(m) for m in moduli)
        if not moduli or any(m < 1 for m in moduli):
            raise ValueError("moduli must be positive, got %r" % (moduli,))
        for i in range(len(moduli)):
            for j in range(i + 1, len(moduli)):
                if math.gcd(moduli[i], moduli[j]) != 1:
                    raise DimsNotCoprime("moduli %d and %d share a divisor"
                                         % (moduli[i], moduli[j]))
        n = math.prod(moduli)
        weights = tuple((n // m) * pow(n // m, -1, m) % n if m > 1 else 0
                        for m in moduli)
        return cls(moduli, n, weights)


def crt_reconstruct(basis: CrtBasis, residues) -> int:
    """The unique a in [0, n) with a = residues[i] mod moduli[i]."""
    residues = list(residues)
    if len(residues) != len(basis.moduli):
        raise ResidueOutOfRange("expected %d residues, got %d"
                                % (len(basis.moduli), len(residues)))
    total = 0
    for r, m, w in zip(residues, basis.moduli, basis.weights):
        r = int(r)
        if not 0 <= r < m:
            raise ResidueOutOfRange("residue %d out of range for modulus %d" % (r, m))
        total += r * w
    return total % basis.n


def _require_coprime(dims: Dims) -> None:
    if math.gcd(dims.nx, dims.ny) != 1:
        raise DimsNotCoprime("extents (%d, %d) are not co-prime"
                             % (dims.nx, dims.ny))


def diag_freq_index(u: int, v: int, dims: Dims) -> int:
    """1D frequency holding 2D coefficient (u, v): (u*ny + v*nx) mod n."""
    return (u * dims.ny + v * dims.nx) % dims.n


def diag_freq_pair(f: int, dims: Dims) -> tuple[int, int]:
    """Inverse of diag_freq_index."""
    u = f * pow(dims.ny, -1, dims.nx) % dims.nx if dims.nx > 1 else 0
    v = f * pow(dims.nx, -1, dims.ny) % dims.ny if dims.ny > 1 else 0
    return u, v


def good_thomas_forward(signal2d: np.ndarray, dims: Dims) -> np.ndarray:
    """Diagonal readout vec[t] = x[t mod nx][t mod ny], length n."""
    _require_coprime(dims)
    signal2d = np.asarray(signal2d)
    if signal2d.shape != (dims.nx, dims.ny):
        raise ValueError("signal shape %r does not match dims (%d, %d)"
                         % (signal2d.shape, dims.nx, dims.ny))
    t = np.arange(dims.n)
    return signal2d[t % dims.nx, t % dims.ny]


def good_thomas_reverse(spectrum1d: np.ndarray, dims: Dims) -> np.ndarray:
    """Arranges the 1D spectrum into the 2D grid: out[u][v] = s1d[f(u,v)]."""
    _require_coprime(dims)
    spectrum1d = np.asarray(spectrum1d)
    if spectrum1d.shape != (dims.n,):
        raise ValueError("spectrum length %r does not match n = %d"
                         % (spectrum1d.shape, dims.n))
    u = np.arange(dims.nx)[:, None]
    v = np.arange(dims.ny)[None, :]
    return spectrum1d[(u * dims.ny + v * dims.nx) % dims.n]


class DiagonalView(SignalSource):
    """1-row view of a co-prime 2D source: view[0][t] = x[t mod nx][t mod ny].

    Its normalized 1D DFT equals the 2D DFT up to diag_freq_index
    relabeling, so the general decoder runs on it unchanged.
    """

    def __init__(self, inner: SignalSource):
        _require_coprime(inner.dims)
        super().__init__(Dims(1, inner.dims.n))
        self.inner = inner

    def _value(self, a, b):
        return self.inner.sample(b % self.inner.dims.nx, b % self.inner.dims.ny)

    def _grid(self, rows, cols):
        d = self.inner.dims
        row = self.inner.sample_points(cols % d.nx, cols % d.ny)
        return np.broadcast_to(row, (len(rows), len(cols))).copy()

    def _points(self, aa, bb):
        d = self.inner.dims
        return self.inner.sample_points(bb % d.nx, bb % d.ny)


def coprime_sparse_dft(source: SignalSource, dims: Dims,
                       plan1d: FfastPlan) -> SparseSpectrum:
    """Sparse 2D DFT of a co-prime-extent grid via the 1-row pipeline."""
    _require_coprime(dims)
    if source.dims != dims:
        raise ValueError("source dims %r do not match %r" % (source.dims, dims))
    if plan1d.dims != Dims(1, dims.n):
        raise ValueError("plan dims %r are not the 1-row view of n = %d"
                         % (plan1d.dims, dims.n))
    from .peeler import decode
    from .robust import robust_decode

    view = DiagonalView(source)
    if plan1d.mode == MODE_ROBUST:
        report = robust_decode(view, plan1d, plan1d.robust_params)
    else:
        report = decode(view, plan1d)
    remapped = {diag_freq_pair(f, dims): val
                for (_, f), val in report.spectrum.items()}
    return SparseSpectrum.from_entries(dims, remapped)
