"""Hermitian spectral utilities: ordered eigenvalues, bottom-pair sums,
and positivity classification of Hermitian-matrix fields.

The central quantity is ``lambda12``, the sum of the two smallest
eigenvalues of a Hermitian matrix.  A field (finite family) of Hermitian
matrices is classified by the sign behaviour of lambda12 across the
family: 2-nonnegative, 2-quasi-positive, 2-positive, or epsilon-2-positive.
Because lambda12 is a concave function of the matrix (it is an infimum of
linear functionals over orthonormal pairs), each superlevel set
``{lambda12 >= eps}`` is a closed convex cone-like set, invariant under
unitary conjugation; those facts are exercised by the test suite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HermitianMatrix",
    "SpectralSummary",
    "Positivity",
    "PositivityClass",
    "eigenvalues_ascending",
    "lambda12",
    "lambda12_variational",
    "classify_field",
    "classify_lambda12_values",
    "random_orthonormal_pair",
]

# |value| below this is treated as zero when testing strict positivity.
ZERO_TOL = 1e-12

# construction rejects inputs whose skew part is larger than this;
# smaller asymmetries are assumed to be floating-point drift and repaired.
ASYMMETRY_GUARD = 1e-6


@dataclass(frozen=True)
class HermitianMatrix:
    """An r x r Hermitian matrix, symmetrized at construction.

    The stored entries are exactly ``(m + m^H)/2`` of the input, which
    guards against the small non-Hermitian drift produced by repeated
    floating-point updates.  Inputs with a skew part larger than
    ``ASYMMETRY_GUARD`` are rejected as probable bugs rather than drift.
    """

    entries: np.ndarray

    def __init__(self, entries):
        m = np.asarray(entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] == 0:
            raise ValueError("empty matrix has no spectrum")
        asym = np.max(np.abs(m - m.conj().T))
        if asym > ASYMMETRY_GUARD:
            raise ValueError(f"matrix is not Hermitian (asymmetry {asym:.3e})")
        sym = (m + m.conj().T) / 2.0
        sym.setflags(write=False)
        object.__setattr__(self, "entries", sym)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SpectralSummary:
    """Ascending eigenvalues of a Hermitian matrix plus the bottom-pair sum."""

    eigenvalues: np.ndarray  # real, ascending
    lambda12: float | None   # eigenvalues[0] + eigenvalues[1]; None for r = 1


class Positivity(enum.Enum):
    NONE = "none"
    TWO_NONNEGATIVE = "2-nonnegative"
    TWO_QUASI_POSITIVE = "2-quasi-positive"
    TWO_POSITIVE = "2-positive"
    EPSILON_TWO_POSITIVE = "epsilon-2-positive"


# strength order used to state "strongest class satisfied"
_STRENGTH = {
    Positivity.NONE: 0,
    Positivity.TWO_NONNEGATIVE: 1,
    Positivity.TWO_QUASI_POSITIVE: 2,
    Positivity.TWO_POSITIVE: 3,
    Positivity.EPSILON_TWO_POSITIVE: 4,
}


@dataclass(frozen=True)
class PositivityClass:
    """Classification verdict for a field of Hermitian matrices.

    ``epsilon`` is set only for the epsilon-2-positive class.
    ``min_lambda12`` records the witness minimum over the field.
    """

    kind: Positivity
    epsilon: float | None = None
    min_lambda12: float | None = None

    def implies(self, other: "PositivityClass | Positivity") -> bool:
        kind = other.kind if isinstance(other, PositivityClass) else other
        return _STRENGTH[self.kind] >= _STRENGTH[kind]


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, HermitianMatrix):
        return m.entries
    a = np.asarray(m, dtype=complex)
    return (a + a.conj().T) / 2.0


def eigenvalues_ascending(m) -> SpectralSummary:
    """Full ascending spectrum of a Hermitian matrix.

    Parameters
    ----------
    m : HermitianMatrix or array_like
        The matrix; arrays are symmetrized like ``HermitianMatrix``.

    Returns
    -------
    SpectralSummary
        Eigenvalues in ascending order; ``lambda12`` is the sum of the two
        smallest (``None`` when the dimension is 1).
    """
    a = _as_matrix(m)
    if a.size == 0:
        raise ValueError("empty matrix has no spectrum")
    w = np.linalg.eigvalsh(a)
    lam12 = float(w[0] + w[1]) if len(w) >= 2 else None
    w.setflags(write=False)
    return SpectralSummary(eigenvalues=w, lambda12=lam12)


def lambda12(m) -> float:
    """Sum of the two smallest eigenvalues; requires dimension >= 2."""
    s = eigenvalues_ascending(m)
    if s.lambda12 is None:
        raise ValueError("lambda12 requires dimension >= 2")
    return s.lambda12


def random_orthonormal_pair(r: int, rng: np.random.Generator):
    """A uniformly random orthonormal pair (v1, v2) in C^r, r >= 2."""
    z = rng.standard_normal((r, 2)) + 1j * rng.standard_normal((r, 2))
    q, _ = np.linalg.qr(z)
    return q[:, 0], q[:, 1]


def lambda12_variational(m, samples: int, seed: int) -> float:
    """Variational upper approximation of lambda12 by orthonormal pairs.

    Evaluates ``<m v1, v1> + <m v2, v2>`` over ``samples`` random
    orthonormal pairs and over every standard-basis pair ``(e_i, e_j)``,
    i < j (the basis pairs are always in the sample set, so diagonal
    matrices are resolved exactly).  The result is an infimum over a
    subset of all orthonormal pairs, hence always >= the eigendecomposition
    value, with the gap shrinking as ``samples`` grows.
    """
    a = _as_matrix(m)
    r = a.shape[0]
    if r < 2:
        raise ValueError("lambda12_variational requires dimension >= 2")
    if samples < 0:
        raise ValueError("samples must be nonnegative")
    diag = np.real(np.diag(a))
    best = np.inf
    for i in range(r):
        for j in range(i + 1, r):
            best = min(best, diag[i] + diag[j])
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        v1, v2 = random_orthonormal_pair(r, rng)
        val = np.vdot(v1, a @ v1).real + np.vdot(v2, a @ v2).real
        if val < best:
            best = val
    return float(best)


def classify_lambda12_values(values, eps: float = 0.0) -> PositivityClass:
    """Classification from precomputed lambda12 values (one per point).

    See :func:`classify_field` for the decision rules.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot classify an empty field")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    lo = float(values.min())

    if eps > 0 and lo >= eps - ZERO_TOL:
        return PositivityClass(Positivity.EPSILON_TWO_POSITIVE, epsilon=eps,
                               min_lambda12=lo)
    if lo > ZERO_TOL:
        return PositivityClass(Positivity.TWO_POSITIVE, min_lambda12=lo)
    if lo >= -ZERO_TOL:
        if np.any(values > ZERO_TOL):
            return PositivityClass(Positivity.TWO_QUASI_POSITIVE, min_lambda12=lo)
        return PositivityClass(Positivity.TWO_NONNEGATIVE, min_lambda12=lo)
    return PositivityClass(Positivity.NONE, min_lambda12=lo)


def classify_field(field, eps: float = 0.0) -> PositivityClass:
    """Strongest 2-positivity class satisfied by a field of Hermitian matrices.

    With ``min`` the minimum of lambda12 over the field:

    * ``eps > 0`` and ``min >= eps``      -> EPSILON_TWO_POSITIVE(eps)
    * ``min > 0``                         -> TWO_POSITIVE
    * ``min >= 0``, strict somewhere      -> TWO_QUASI_POSITIVE
    * ``min >= 0``                        -> TWO_NONNEGATIVE
    * otherwise                           -> NONE

    Values within ``ZERO_TOL`` of zero are treated as exact zeros, both for
    the sign of the minimum and for the "strict somewhere" test.
    """
    mats = list(field)
    if not mats:
        raise ValueError("cannot classify an empty field")
    dims = {(_as_matrix(m)).shape[0] for m in mats}
    if len(dims) != 1:
        raise ValueError(f"field mixes dimensions {sorted(dims)}")
    if dims.pop() < 2:
        raise ValueError("classification requires dimension >= 2")
    return classify_lambda12_values(np.array([lambda12(m) for m in mats]), eps)
