"""One-level 1-D Haar (db1) wavelet transform of feature vectors."""
from dataclasses import dataclass

import numpy as np

from . import kernels

_SQRT_HALF = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class WaveletFilter:
    """Two-tap scaling / wavelet filter pair.

    ``integer`` keeps the integer taps [1, 1] and [1, -1]; ``orthonormal``
    scales both by 1/sqrt(2) so the transform preserves energy.
    """

    phi: tuple
    psi: tuple
    mode: str

    @classmethod
    def db1(cls, mode="integer"):
        if mode == "integer":
            return cls((1.0, 1.0), (1.0, -1.0), mode)
        if mode == "orthonormal":
            return cls((_SQRT_HALF, _SQRT_HALF), (_SQRT_HALF, -_SQRT_HALF), mode)
        raise ValueError(f"unknown wavelet mode {mode!r}")

    @property
    def phi_array(self):
        return np.asarray(self.phi, dtype=np.float64)

    @property
    def psi_array(self):
        return np.asarray(self.psi, dtype=np.float64)


@dataclass
class WaveletCoeffs:
    cA: np.ndarray
    cD: np.ndarray

    @property
    def combined(self):
        return np.concatenate([self.cA, self.cD])


def padded_length(d):
    return d + (d % 2)


def _pad_rows(X):
    if X.shape[-1] % 2:
        X = np.concatenate([X, np.zeros(X.shape[:-1] + (1,))], axis=-1)
    return X


def haar_decompose(f, filt=None):
    filt = filt or WaveletFilter.db1()
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.size == 0:
        raise ValueError("haar_decompose needs a non-empty 1-D vector")
    row = np.ascontiguousarray(_pad_rows(f[None, :]))
    cA, cD = kernels.haar_rows(row, filt.phi_array, filt.psi_array)
    return WaveletCoeffs(cA[0], cD[0])


def haar_reconstruct(c, filt=None):
    filt = filt or WaveletFilter.db1()
    cA = np.asarray(c.cA, dtype=np.float64)
    cD = np.asarray(c.cD, dtype=np.float64)
    if cA.shape != cD.shape:
        raise ValueError(f"cA and cD lengths differ: {cA.shape} vs {cD.shape}")
    out = kernels.haar_rows_inverse(
        np.ascontiguousarray(cA[None, :]), np.ascontiguousarray(cD[None, :]), filt.phi_array, filt.psi_array
    )
    return out[0]


def dwt_sequence(F_img, filt=None, keep_approx=True, keep_detail=True):
    """Row-wise transform of a (..., D) feature array into [cA | cD] rows.

    Odd D is zero-padded on the right, so the output width is D rounded up to
    even. ``keep_approx`` / ``keep_detail`` zero the corresponding half.
    """
    filt = filt or WaveletFilter.db1()
    F = np.asarray(F_img, dtype=np.float64)
    lead = F.shape[:-1]
    X = np.ascontiguousarray(_pad_rows(F.reshape(-1, F.shape[-1])))
    if X.shape[1] == 0:
        raise ValueError("dwt_sequence needs a non-empty feature dimension")
    cA, cD = kernels.haar_rows(X, filt.phi_array, filt.psi_array)
    if not keep_approx:
        cA = np.zeros_like(cA)
    if not keep_detail:
        cD = np.zeros_like(cD)
    out = np.concatenate([cA, cD], axis=1)
    return out.reshape(lead + (out.shape[1],))


def pad_features(F_img):
    """Zero-pad the last axis to even length (identity passthrough of the DWT)."""
    F = np.asarray(F_img, dtype=np.float64)
    return _pad_rows(F)
