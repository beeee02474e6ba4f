"""Exact integer arithmetic for the degree-estimate chain on split bundles
over the rational curve, plus the pseudoindex classification lookup and the
m-positivity pseudoindex bound.

Everything here is tolerance-free: a splitting type is a sorted integer
tuple, the certificate evaluates three integer inequalities, and the chain

    sum a_i = (a_1 + a_2) + (a_3 + ... + a_n) >= 1 + (n - 3) + 2 = n

holds for every sorted tuple passing the first two checks (the bottom-pair
bound forces a_2 >= 1 over the integers, which carries the middle terms).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

__all__ = [
    "SplittingType",
    "DegreeCertificate",
    "ClassificationResult",
    "check_certificate",
    "classify_by_pseudoindex",
    "m_positivity_bound",
]


@dataclass(frozen=True)
class SplittingType:
    """Integer splitting type a_1 <= ... <= a_n of a rank-n split bundle."""

    degrees: tuple

    def __init__(self, degrees):
        degrees = tuple(int(d) for d in degrees)
        if len(degrees) < 1:
            raise ValueError("a splitting type needs at least one degree")
        if any(a > b for a, b in zip(degrees, degrees[1:])):
            raise ValueError(f"degrees must be sorted ascending, got {degrees}")
        object.__setattr__(self, "degrees", degrees)

    @property
    def n(self) -> int:
        return len(self.degrees)

    @property
    def total(self) -> int:
        return sum(self.degrees)


class ClassificationResult(enum.Enum):
    PROJECTIVE_SPACE_OR_QUADRIC = "projective-space-or-quadric"
    DEL_PEZZO = "del-pezzo"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class DegreeCertificate:
    """Outcome of the three-check degree-estimate chain.

    checks:
      eps_positivity : a_1 + a_2 >= 1
      top_degree     : a_n >= 2 + k
      total          : sum a_i >= n
    The verdict passes iff all three hold; ``first_failure`` names the
    first failing check in that order (None on pass).  ``bottom_second``
    records the implied intermediate bound a_2 >= 1, the step that carries
    a_3 ... a_{n-1} in the chain.
    """

    splitting: SplittingType
    k: int
    checks: dict
    verdict: bool
    first_failure: str | None
    bottom_second: bool

    def to_json_dict(self) -> dict:
        return {
            "degrees": list(self.splitting.degrees),
            "n": self.splitting.n,
            "k": self.k,
            "total_degree": self.splitting.total,
            "checks": dict(self.checks),
            "bottom_second_at_least_one": self.bottom_second,
            "verdict": "pass" if self.verdict else "fail",
            "first_failure": self.first_failure,
        }


def check_certificate(splitting, k: int, n: int) -> DegreeCertificate:
    """Evaluate the degree-estimate chain exactly.

    ``splitting`` is a :class:`SplittingType` or a sorted integer sequence
    of length ``n``; ``k`` is the vanishing order contributing to the top
    degree bound a_n >= 2 + k.  Requires n >= 3 (the chain is stated for
    that range).
    """
    if n < 3:
        raise ValueError(f"the degree-estimate chain requires n >= 3, got n = {n}")
    if k < 0:
        raise ValueError(f"vanishing order k must be nonnegative, got {k}")
    st = splitting if isinstance(splitting, SplittingType) else SplittingType(splitting)
    if st.n != n:
        raise ValueError(f"splitting has {st.n} degrees, expected n = {n}")
    a = st.degrees
    checks = {
        "eps_positivity": a[0] + a[1] >= 1,
        "top_degree": a[-1] >= 2 + k,
        "total": st.total >= n,
    }
    first_failure = next((name for name, ok in checks.items() if not ok), None)
    return DegreeCertificate(
        splitting=st,
        k=int(k),
        checks=checks,
        verdict=all(checks.values()),
        first_failure=first_failure,
        bottom_second=a[1] >= 1,
    )


def classify_by_pseudoindex(i: int, n: int) -> ClassificationResult:
    """Classification lookup from a pseudoindex lower bound.

    ``i >= n`` with ``n >= 3`` pins the manifold to the projective space or
    the smooth quadric; every surface case (n = 2) is a del Pezzo surface;
    anything else is undetermined by this criterion.
    """
    if n < 1 or i < 1:
        raise ValueError(f"need n >= 1 and i >= 1, got n = {n}, i = {i}")
    if n == 2:
        return ClassificationResult.DEL_PEZZO
    if n >= 3 and i >= n:
        return ClassificationResult.PROJECTIVE_SPACE_OR_QUADRIC
    return ClassificationResult.UNDETERMINED


def m_positivity_bound(n: int, m: int) -> int:
    """Pseudoindex lower bound n - m + 2 from m-positive bisectional
    curvature; defined for 1 <= m < n (at m = n the condition is plain
    Ricci positivity and carries no pseudoindex information)."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if m >= n:
        raise ValueError(f"the bound requires m < n, got m = {m}, n = {n}")
    return n - m + 2
