from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .spectra import Spectrum


class DimensionError(ValueError):
    """Raised when matrix dimensions are incompatible with the spike rank."""


@dataclass(frozen=True)
class RngStream:
    """
    Named random stream. Identical (seed, stream, path) reproduce identical
    draws; child(i) derives an independent sub-stream for task i.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = field(default=())

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self.path))
        return np.random.Generator(np.random.PCG64(sequence))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream, (*self.path, index))


@dataclass(frozen=True)
class EtaSample:
    x: float
    y: float


def _check_dims(n: int, r: int) -> None:
    if r < 1 or n < r:
        raise DimensionError(f"Expected n >= r >= 1, got n={n}, r={r}")


def _complex_normal(gen: np.random.Generator, shape: tuple[int, ...], variance: float) -> np.ndarray:
    z = gen.standard_normal((*shape, 2))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(variance / 2.0)


def sample_gaussian(n1: int, n2: int, variance: float, rng: RngStream) -> np.ndarray:
    """
    n1 x n2 matrix with i.i.d. circular complex normal entries,
    E|z|^2 = variance (each of the real and imaginary parts has variance/2).
    """
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance!r}")
    return _complex_normal(rng.generator(), (n1, n2), variance)


def _haar(gen: np.random.Generator, n: int) -> np.ndarray:
    z = _complex_normal(gen, (n, n), 1.0)
    q, r = linalg.qr(z)
    d = np.diag(r)
    # phase fix: the triangular factor gets a positive real diagonal
    return q * (d / np.abs(d))


def sample_haar_unitary(n: int, rng: RngStream) -> np.ndarray:
    """Haar-distributed n x n unitary from the QR factorisation of a complex Ginibre matrix."""
    if n < 1:
        raise DimensionError(f"Expected n >= 1, got n={n}")
    return _haar(rng.generator(), n)


def sample_haar_block(n: int, r: int, rng: RngStream) -> np.ndarray:
    """Upper r x r block of an n x n Haar unitary."""
    _check_dims(n, r)
    return _haar(rng.generator(), n)[:r, :r]


def _inverse_sqrt(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(gram^{-1/2}, eigenvalues) for a (stack of) Hermitian positive definite matrices."""
    w, v = np.linalg.eigh(gram)
    inv_sqrt = (v * (1.0 / np.sqrt(w))[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return inv_sqrt, w


def sample_truncated_block(n: int, r: int, rng: RngStream) -> np.ndarray:
    """
    r x r matrix G (G~* G~)^{-1/2}, where G~ is n x r with i.i.d. N_c(0, 1)
    entries and G its top r x r block. Distributed as the upper r x r block of
    an n x n Haar unitary.
    """
    _check_dims(n, r)
    g_tilde = _complex_normal(rng.generator(), (n, r), 1.0)
    inv_sqrt, _ = _inverse_sqrt(g_tilde.conj().T @ g_tilde)
    return g_tilde[:r] @ inv_sqrt


def build_spike(s: Spectrum, n: int, rng: RngStream) -> np.ndarray:
    """
    X_0 = U Lambda V* where U and V are the first r columns of independent Haar unitaries.
    """
    _check_dims(n, s.r)
    u = _haar(rng.child(0).generator(), n)[:, : s.r]
    v = _haar(rng.child(1).generator(), n)[:, : s.r]
    return (u * np.asarray(s.values)) @ v.conj().T


def overlap(s: Spectrum, psi1: np.ndarray, psi2: np.ndarray) -> float:
    """Re Tr(Lambda psi1 Lambda psi2)."""
    lam = np.asarray(s.values)
    return float(np.real(np.einsum("i,ij,j,ji->", lam, psi1, lam, psi2)))


def log_det_defect(psi: np.ndarray) -> float:
    """log det(I - psi* psi); -inf when psi is not a strict contraction."""
    sign, logdet = np.linalg.slogdet(np.eye(psi.shape[1]) - psi.conj().T @ psi)
    if sign.real <= 0:
        return -np.inf
    return float(logdet)


def sample_eta(s: Spectrum, n: int, rng: RngStream) -> EtaSample:
    """
    One draw of x = Re Tr(Lambda Psi_1 Lambda Psi_2) and
    y = sum_i log det(I - Psi_i* Psi_i) with independent truncated Haar blocks.
    """
    _check_dims(n, s.r)
    psi1 = sample_truncated_block(n, s.r, rng.child(0))
    psi2 = sample_truncated_block(n, s.r, rng.child(1))
    return EtaSample(
        x=overlap(s, psi1, psi2), y=log_det_defect(psi1) + log_det_defect(psi2)
    )


def _block_stack(gen: np.random.Generator, count: int, n: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    """
    count truncated blocks and their log det(I - Psi* Psi).
    I - Psi* Psi = M^{-1/2} (H* H) M^{-1/2} with M = G~* G~ and H the lower
    (n - r) x r part of G~, so the log-determinant is log det(H* H) - log det M.
    """
    g_tilde = _complex_normal(gen, (count, n, r), 1.0)
    inv_sqrt, w = _inverse_sqrt(np.conj(np.swapaxes(g_tilde, -1, -2)) @ g_tilde)
    psi = g_tilde[:, :r, :] @ inv_sqrt
    if n == r:
        return psi, np.full(count, -np.inf)
    lower = g_tilde[:, r:, :]
    _, log_hh = np.linalg.slogdet(np.conj(np.swapaxes(lower, -1, -2)) @ lower)
    return psi, log_hh - np.sum(np.log(w), axis=-1)


def sample_eta_batch(s: Spectrum, n: int, count: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised eta draws; returns the arrays (x, y) of length count."""
    _check_dims(n, s.r)
    if count == 0:
        return np.empty(0), np.empty(0)
    gen = rng.generator()
    psi1, y1 = _block_stack(gen, count, n, s.r)
    psi2, y2 = _block_stack(gen, count, n, s.r)
    lam = np.asarray(s.values)
    x = np.real(np.einsum("i,bij,j,bji->b", lam, psi1, lam, psi2))
    return x, y1 + y2


def sample_block_batch(n: int, r: int, count: int, rng: RngStream, haar: bool = False) -> np.ndarray:
    """Stack of count truncated blocks, either from the Gaussian representation or from full Haar unitaries."""
    _check_dims(n, r)
    gen = rng.generator()
    if not haar:
        psi, _ = _block_stack(gen, count, n, r)
        return psi
    z = _complex_normal(gen, (count, n, n), 1.0)
    q, tri = np.linalg.qr(z)
    d = np.diagonal(tri, axis1=-2, axis2=-1)
    q = q * (d / np.abs(d))[:, None, :]
    return q[:, :r, :r]


def gram_deviation(n: int, r: int, rng: RngStream) -> float:
    """||(1/n) G~* G~ - I||_2 for a fresh n x r complex Gaussian G~."""
    _check_dims(n, r)
    g_tilde = _complex_normal(rng.generator(), (n, r), 1.0)
    w = np.linalg.eigvalsh(g_tilde.conj().T @ g_tilde / n)
    return float(np.max(np.abs(w - 1.0)))


def gram_deviation_batch(n: int, r: int, count: int, rng: RngStream) -> np.ndarray:
    """count independent gram deviations."""
    _check_dims(n, r)
    g_tilde = _complex_normal(rng.generator(), (count, n, r), 1.0)
    w = np.linalg.eigvalsh(np.conj(np.swapaxes(g_tilde, -1, -2)) @ g_tilde / n)
    return np.max(np.abs(w - 1.0), axis=-1)


def eta_samples_to_rows(x: np.ndarray, y: np.ndarray) -> list[tuple[int, float, float]]:
    """Rows (sample_id, x, y) for the samples CSV."""
    return [(i, float(a), float(b)) for i, (a, b) in enumerate(zip(x, y))]
