"""Curvature algebra of the complex hyperquadric presented as the rank-two
real Grassmannian-type symmetric space SO(n+2)/(SO(n) x SO(2)).

Tangent vectors at the base point are 2 x n real matrices; the metric is
the trace form ``g(X, Y) = tr(X Y^T)`` (Killing scale 1/2), the complex
structure swaps the two rows with a sign, and the curvature tensor has the
closed polynomial form

    R(X, Y)Z = Z Y^T X + X Y^T Z - Z X^T Y - Y X^T Z.

An independent route to the same tensor embeds the tangent matrices into
antisymmetric (n+2) x (n+2) matrices and evaluates the double commutator
``-[[X^, Y^], Z^]``; agreement of the two is used as an oracle throughout
the tests.

Holomorphic tangent vectors are parametrized by a complex n-vector ``a``
via the embedding with rows ``(a_1..a_n)`` and ``(-i a_1..-i a_n)``.  The
bisectional curvature of two such vectors has the closed form

    4 (sum |a_i|^2)(sum |b_i|^2) - 16 sum_{i<j} Im(conj(a_i) a_j) Im(b_i conj(b_j))

and the Hermitian curvature operator H(a) acting on the b-parametrization
is recovered from it by polarization.  All eigenvalues reported here use
the normalization fixed by the unit-sphere constraint ``sum |a_i|^2 = 1``
together with the standard Hermitian inner product on the parametrizing
vectors; signs and positivity are normalization-independent.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .spectra import HermitianMatrix

__all__ = [
    "metric_g",
    "complex_structure_J",
    "curvature_endo",
    "curvature_bracket_oracle",
    "so_embed",
    "holo_embed",
    "bisectional_closed",
    "bisectional_trace",
    "curvature_operator",
    "orthogonal_ricci",
    "certify_two_positivity",
    "nonnegativity_sweep",
    "isotropy_transport",
    "equality_case_vector",
    "TwoPositivityCertificate",
]

FD_STEP = 1e-5          # central-difference step for numerical gradients
MAX_HALVINGS = 30       # backtracking line-search budget


def _check_tangent(X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != 2 or X.shape[1] < 2:
        raise ValueError(f"tangent vectors are 2 x n matrices with n >= 2, got {X.shape}")
    return X


def _check_same_n(*mats):
    ns = {m.shape[1] for m in mats}
    if len(ns) != 1:
        raise ValueError(f"dimension mismatch: n values {sorted(ns)}")


def metric_g(X, Y) -> float:
    """Symmetric metric ``tr(X Y^T)`` on 2 x n real tangent matrices."""
    X, Y = _check_tangent(X), _check_tangent(Y)
    _check_same_n(X, Y)
    return float(np.trace(X @ Y.T).real) if np.iscomplexobj(X) or np.iscomplexobj(Y) \
        else float(np.trace(X @ Y.T))


def complex_structure_J(X) -> np.ndarray:
    """Complex structure: rows (x1, x2) map to (-x2, x1)."""
    X = _check_tangent(X)
    return np.vstack([-X[1], X[0]])


def curvature_endo(X, Y, Z) -> np.ndarray:
    """Curvature endomorphism R(X, Y)Z in closed polynomial form."""
    X, Y, Z = _check_tangent(X), _check_tangent(Y), _check_tangent(Z)
    _check_same_n(X, Y, Z)
    return Z @ Y.T @ X + X @ Y.T @ Z - Z @ X.T @ Y - Y @ X.T @ Z


def so_embed(X) -> np.ndarray:
    """Embed a 2 x n tangent matrix as the antisymmetric block matrix
    [[0, -X^T], [X, 0]] of size (n+2) x (n+2)."""
    X = _check_tangent(X)
    n = X.shape[1]
    M = np.zeros((n + 2, n + 2), dtype=np.result_type(X.dtype, float))
    M[:n, n:] = -X.T
    M[n:, :n] = X
    return M


def curvature_bracket_oracle(X, Y, Z) -> np.ndarray:
    """R(X, Y)Z evaluated as the double commutator ``-[[X^, Y^], Z^]`` of
    the embedded antisymmetric matrices; lower-left block extracted.

    Serves as an independent oracle for :func:`curvature_endo`.
    """
    X, Y, Z = _check_tangent(X), _check_tangent(Y), _check_tangent(Z)
    _check_same_n(X, Y, Z)
    A, B, C = so_embed(X), so_embed(Y), so_embed(Z)
    AB = A @ B - B @ A
    M = -(AB @ C - C @ AB)
    n = X.shape[1]
    return M[n:, :n]


def holo_embed(a) -> np.ndarray:
    """Holomorphic tangent vector of parameter ``a``: rows (a, -i a)."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"holomorphic parameters are complex n-vectors, n >= 2, got shape {a.shape}")
    return np.vstack([a, -1j * a])


def bisectional_closed(a, b) -> float:
    """Bisectional curvature R(U, Ubar, V, Vbar) in closed form,
    for U, V the holomorphic vectors of parameters a, b."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    ca = np.imag(np.conj(a)[:, None] * a[None, :])   # Im(conj(a_i) a_j)
    cb = np.imag(b[:, None] * np.conj(b)[None, :])   # Im(b_i conj(b_j))
    # both factors are antisymmetric, so the i<j sum is half the full sum
    cross = 0.5 * float(np.sum(ca * cb))
    na = float(np.vdot(a, a).real)
    nb = float(np.vdot(b, b).real)
    return 4.0 * na * nb - 16.0 * cross


def bisectional_trace(a, b) -> float:
    """Bisectional curvature via the trace expression on the embedded
    2 x n complex matrices; must agree with :func:`bisectional_closed`."""
    U = holo_embed(a)
    V = holo_embed(b)
    if U.shape != V.shape:
        raise ValueError(f"dimension mismatch: {U.shape} vs {V.shape}")
    Ub, Vb = np.conj(U), np.conj(V)
    M = V @ Ub.T @ U @ Vb.T + U @ Ub.T @ V @ Vb.T \
        - V @ U.T @ Ub @ Vb.T - Ub @ U.T @ V @ Vb.T
    return float(np.trace(M).real)


def bisectional_from_bracket(a, b) -> float:
    """Third route: metric contraction of the bracket oracle on the
    embedded holomorphic vectors (closes the oracle triangle)."""
    U = holo_embed(a)
    V = holo_embed(b)
    if U.shape != V.shape:
        raise ValueError(f"dimension mismatch: {U.shape} vs {V.shape}")
    RV = curvature_bracket_oracle(U, np.conj(U), V)
    return float(np.trace(RV @ np.conj(V).T).real)


def curvature_operator(a) -> HermitianMatrix:
    """Hermitian operator H(a) with ``<H(a) b, b> = bisectional_closed(a, b)``.

    Recovered by polarizing the quadratic form in the b-argument over the
    standard basis; Hermitian by construction.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"expected a complex n-vector with n >= 2, got shape {a.shape}")
    n = a.size
    E = np.eye(n, dtype=complex)
    H = np.zeros((n, n), dtype=complex)
    qe = np.array([bisectional_closed(a, E[k]) for k in range(n)])
    for k in range(n):
        H[k, k] = qe[k]
        for j in range(n):
            if j == k:
                continue
            p1 = bisectional_closed(a, E[k] + E[j]) - qe[k] - qe[j]
            p2 = bisectional_closed(a, E[k] + 1j * E[j]) - qe[k] - qe[j]
            H[j, k] = (p1 + 1j * p2) / 2.0
    return HermitianMatrix(H)


def _curv_op_batch(A: np.ndarray) -> np.ndarray:
    """Curvature operators for a batch of parameter vectors A (..., n).

    Algebraically reduced form of :func:`curvature_operator`; the test
    suite pins agreement between the two routes.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    norms = np.sum(np.abs(A) ** 2, axis=-1)
    C = np.imag(np.conj(A)[..., :, None] * A[..., None, :])
    return 4.0 * norms[..., None, None] * np.eye(n) - 8.0j * C


def _lambda12_batch(A: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(_curv_op_batch(A))
    return w[..., 0] + w[..., 1]


def equality_case_vector(n: int) -> np.ndarray:
    """Unit-norm parameter vector (1, i, 0, ...)/sqrt(2) attaining the
    degenerate direction where the smallest operator eigenvalue vanishes."""
    if n < 2:
        raise ValueError("n >= 2 required")
    a = np.zeros(n, dtype=complex)
    a[0] = 1.0
    a[1] = 1.0j
    return a / np.sqrt(2.0)


def isotropy_transport(a, rot, angle: float) -> np.ndarray:
    """Action of (A, B) in SO(n) x SO(2) on the parameter vector:
    ``a -> exp(i angle) rot^T a``; curvature is invariant under it."""
    a = np.asarray(a, dtype=complex)
    rot = np.asarray(rot, dtype=float)
    return np.exp(1j * angle) * (rot.T @ a)


def thread_count() -> int:
    """Internal parallelism cap from the CURVFLOW_THREADS env var (default 1)."""
    raw = os.environ.get("CURVFLOW_THREADS")
    if raw is None:
        return 1
    try:
        k = int(raw)
    except ValueError as exc:
        raise ValueError(f"CURVFLOW_THREADS must be a positive integer, got {raw!r}") from exc
    if k < 1:
        raise ValueError(f"CURVFLOW_THREADS must be a positive integer, got {raw!r}")
    return k


# -- optimization on the unit sphere ----------------------------------------
#
# Parameter vectors a in C^n are flattened to x in R^{2n} on the unit
# sphere.  Gradients are central finite differences (step FD_STEP) projected
# to the tangent space; steps retract by renormalization, with a
# backtracking line search on plain decrease.


def _to_complex(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def _sphere_descent(fun_batch, x0: np.ndarray, iters: int, gtol: float):
    """Minimize a batched objective over the unit sphere in R^d.

    ``fun_batch`` maps an (m, d) array of unit vectors to m values.
    Returns (x, value, line_search_failed).
    """
    d = x0.size
    x = x0 / np.linalg.norm(x0)
    fx = float(fun_batch(x[None, :])[0])
    failed = False
    eye = np.eye(d)
    for _ in range(iters):
        pts = np.concatenate([x + FD_STEP * eye, x - FD_STEP * eye], axis=0)
        vals = fun_batch(pts / np.linalg.norm(pts, axis=1, keepdims=True))
        grad = (vals[:d] - vals[d:]) / (2.0 * FD_STEP)
        grad -= (grad @ x) * x
        gnorm = float(np.linalg.norm(grad))
        if gnorm < gtol:
            break
        step = 1.0 / max(gnorm, 1.0)
        ok = False
        for _ in range(MAX_HALVINGS):
            cand = x - step * grad
            cand /= np.linalg.norm(cand)
            fc = float(fun_batch(cand[None, :])[0])
            if fc < fx:
                x, fx, ok = cand, fc, True
                break
            step *= 0.5
        if not ok:
            failed = True
            break
    return x, fx, failed


@dataclass
class TwoPositivityCertificate:
    """Result of the multi-restart search for the minimal lambda12."""

    n: int
    min_lambda12: float
    argmin: np.ndarray                    # complex unit n-vector
    spectrum: np.ndarray                  # ascending eigenvalues at argmin
    restart_values: list = field(default_factory=list)
    line_search_failures: int = 0

    @property
    def certified(self) -> bool:
        return self.min_lambda12 > 0


def certify_two_positivity(n: int, restarts: int = 32, iters: int = 300,
                           seed: int = 0) -> TwoPositivityCertificate:
    """Minimize lambda12 of the curvature operator over unit parameter
    vectors by multi-restart projected gradient descent.

    Restart 0 starts from the analytic degenerate candidate
    :func:`equality_case_vector`; restart i >= 1 starts from a random unit
    vector drawn with seed ``seed + i``.  Restarts are independent and may
    run on a thread pool capped by ``CURVFLOW_THREADS``; the merge keeps
    the earliest restart on ties (tolerance 1e-12), so results do not
    depend on the pool size.  Exhausted line searches are reported in
    ``line_search_failures`` rather than raised.
    """
    if n < 2:
        raise ValueError("n >= 2 required")
    if restarts < 1:
        raise ValueError("restarts >= 1 required")

    def objective(xs: np.ndarray) -> np.ndarray:
        return _lambda12_batch(_to_complex(xs))

    def start(i: int) -> np.ndarray:
        if i == 0:
            a = equality_case_vector(n)
            return np.concatenate([a.real, a.imag])
        rng = np.random.default_rng(seed + i)
        x = rng.standard_normal(2 * n)
        return x / np.linalg.norm(x)

    def run(i: int):
        return _sphere_descent(objective, start(i), iters, gtol=1e-7)

    workers = min(thread_count(), restarts)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(restarts)))
    else:
        results = [run(i) for i in range(restarts)]

    best_i = 0
    for i in range(1, restarts):
        if results[i][1] < results[best_i][1] - 1e-12:
            best_i = i
    x, val, _ = results[best_i]
    a = _to_complex(x)
    spectrum = np.linalg.eigvalsh(_curv_op_batch(a))
    return TwoPositivityCertificate(
        n=n,
        min_lambda12=float(val),
        argmin=a,
        spectrum=spectrum,
        restart_values=[float(r[1]) for r in results],
        line_search_failures=sum(1 for r in results if r[2]),
    )


def _bisectional_pair_batch(xs: np.ndarray, n: int) -> np.ndarray:
    """Batched bisectional curvature for stacked (a, b) pairs in R^{4n}."""
    A = _to_complex(xs[..., : 2 * n])
    B = _to_complex(xs[..., 2 * n:])
    ca = np.imag(np.conj(A)[..., :, None] * A[..., None, :])
    cb = np.imag(B[..., :, None] * np.conj(B)[..., None, :])
    na = np.sum(np.abs(A) ** 2, axis=-1)
    nb = np.sum(np.abs(B) ** 2, axis=-1)
    return 4.0 * na * nb - 8.0 * np.sum(ca * cb, axis=(-2, -1))


def nonnegativity_sweep(n: int, samples: int = 100_000, descents: int = 32,
                        iters: int = 200, seed: int = 0):
    """Minimum of the bisectional curvature over unit pairs (a, b).

    Combines ``samples`` random unit pairs with ``descents`` projected
    gradient descents of the pair objective over the product of the two
    unit spheres (normalizing a 4n-dimensional real vector rescales both
    factors, which leaves positivity questions unchanged by homogeneity).
    Returns ``(min_value, argmin_pair)``.
    """
    if n < 2:
        raise ValueError("n >= 2 required")
    rng = np.random.default_rng(seed)
    best = np.inf
    best_x = None
    if samples > 0:
        chunk = 20_000
        left = samples
        while left > 0:
            m = min(chunk, left)
            xs = rng.standard_normal((m, 4 * n))
            a = xs[:, : 2 * n] / np.linalg.norm(xs[:, : 2 * n], axis=1, keepdims=True)
            b = xs[:, 2 * n:] / np.linalg.norm(xs[:, 2 * n:], axis=1, keepdims=True)
            xs = np.concatenate([a, b], axis=1)
            vals = _bisectional_pair_batch(xs, n)
            i = int(np.argmin(vals))
            if vals[i] < best:
                best = float(vals[i])
                best_x = xs[i]
            left -= m
    for i in range(descents):
        x0 = rng.standard_normal(4 * n)
        x, val, _ = _sphere_descent(lambda xs: _bisectional_pair_batch(xs, n),
                                    x0, iters, gtol=1e-9)
        if val < best:
            best, best_x = float(val), x
    a = _to_complex(best_x[: 2 * n])
    b = _to_complex(best_x[2 * n:])
    return best, (a / np.linalg.norm(a), b / np.linalg.norm(b))


def orthogonal_ricci(a) -> float:
    """Ricci contraction of the curvature operator minus the holomorphic
    sectional curvature, in the operator frame normalization; requires a
    unit parameter vector."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"expected a complex n-vector with n >= 2, got shape {a.shape}")
    norm2 = float(np.vdot(a, a).real)
    if norm2 == 0.0:
        raise ValueError("zero vector has no direction")
    if abs(norm2 - 1.0) > 1e-9:
        raise ValueError(f"parameter vector must be unit norm, got |a|^2 = {norm2}")
    H = curvature_operator(a)
    return float(np.trace(H.entries).real) - bisectional_closed(a, a)
