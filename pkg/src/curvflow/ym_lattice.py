"""Lattice Yang-Mills gradient flow for unitary gauge fields on sphere meshes.

A gauge field assigns a unitary r x r matrix to every canonically oriented
mesh edge; traversing an edge backwards transports by the inverse.  The
curvature of a face is the principal logarithm of its boundary holonomy
divided by (i * area), a Hermitian matrix playing the role of the contracted
curvature of a unitary connection.  The energy is the L2 norm squared of
that curvature,

    E = sum_f area_f * ||H_f||_F^2 = sum_f ||log hol_f||_F^2 / area_f,

whose minimizers have locally constant curvature (the lattice analog of a
Hermitian-Einstein connection).  The flow implemented here is explicit
gradient descent in the discrete L2 geometry of connections: left
logarithmic perturbations ``link <- exp(s Xi) link`` carry the mass weight
``m_e = dual_edge_length / edge_length`` (the diagonal 1-form Hodge star of
the mesh), and the descent velocity is ``-(1/(2 m_e))`` times the raw
Frobenius gradient.  With that normalization the rank-1 flow linearizes to
the standard heat equation on the sphere, so spherical-harmonic modes of
the curvature decay at the continuum rates l(l+1).

Holonomy eigensystems are computed through the Cayley transform
``A = i (I - U)(I + U)^{-1}``, a Hermitian matrix whose eigenvalues are
tan(angle/2); this keeps every eigenbasis orthonormal even for degenerate
holonomies and fails loudly near the branch cut of the logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import sph_harm_y

from . import sphere_mesh as sm
from .spectra import Positivity, PositivityClass, classify_lambda12_values

__all__ = [
    "GaugeField",
    "PlaquetteCurvature",
    "FlowConfig",
    "FlowRecord",
    "FlowTrace",
    "SplittingSummary",
    "MaxPrinReport",
    "CurvatureExtractionError",
    "FlowStepError",
    "DegreeQuantizationError",
    "holonomy",
    "curvature_field",
    "ym_energy",
    "ym_gradient",
    "gradient_norm",
    "flow_step",
    "run_flow",
    "identity_field",
    "monopole_field",
    "quasi_positive_field",
    "gauge_scramble",
    "perturb",
    "perturb_diagonal",
    "total_degree",
    "splitting_summary",
    "maxprin_monitor",
    "calibrate_maxprin_constants",
    "heat_mode_projection",
    "heat_mode_amplitudes",
    "BRANCH_MARGIN",
]

BRANCH_MARGIN = 0.1        # rad; holonomy eigenangles must stay below pi - margin
UNITARITY_TOL = 1e-10
MAX_HALVINGS = 30
DEGREE_RESIDUAL_TOL = 0.01

# Maximum-principle tolerance tol_mp = c * h^2 + cprime * step_size.  The
# defaults were calibrated on stationary monopole families (see
# calibrate_maxprin_constants); rerun the calibration to regenerate them.
DEFAULT_TOL_C = 0.05
DEFAULT_TOL_CPRIME = 0.05


class CurvatureExtractionError(RuntimeError):
    """Holonomy spectrum too close to the branch cut of the logarithm.

    Signals a too-coarse mesh or a too-large field; carries the offending
    face index.
    """

    def __init__(self, face: int, angle: float):
        self.face = int(face)
        self.angle = float(angle)
        super().__init__(
            f"holonomy eigenangle {angle:.4f} rad on face {face} is within "
            f"{BRANCH_MARGIN} rad of the branch cut; refine the mesh or shrink the field")


class FlowStepError(RuntimeError):
    """Energy backtracking exhausted its halving budget."""


class DegreeQuantizationError(RuntimeError):
    """Total flux failed to round cleanly to an integer degree."""


def _conjt(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched matrix product; hand-rolled for 2 x 2 blocks, where the
    elementwise form is several times faster than np.matmul."""
    if a.shape[-1] == 2 and a.shape[-2] == 2 and b.shape[-1] == 2:
        a00, a01 = a[..., 0, 0], a[..., 0, 1]
        a10, a11 = a[..., 1, 0], a[..., 1, 1]
        b00, b01 = b[..., 0, 0], b[..., 0, 1]
        b10, b11 = b[..., 1, 0], b[..., 1, 1]
        out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
        out[..., 0, 0] = a00 * b00 + a01 * b10
        out[..., 0, 1] = a00 * b01 + a01 * b11
        out[..., 1, 0] = a10 * b00 + a11 * b10
        out[..., 1, 1] = a10 * b01 + a11 * b11
        return out
    return np.matmul(a, b)


class GaugeField:
    """Per-edge unitary matrices over a :class:`~curvflow.sphere_mesh.SphereMesh`.

    ``links[e]`` transports along edge ``e`` in its canonical orientation
    (low vertex index to high); the reverse transport is the inverse.
    Instances are immutable.
    """

    def __init__(self, mesh: sm.SphereMesh, links):
        links = np.asarray(links, dtype=complex)
        if links.ndim != 3 or links.shape[0] != mesh.num_edges \
                or links.shape[1] != links.shape[2]:
            raise ValueError(f"links must be ({mesh.num_edges}, r, r), got {links.shape}")
        gram = _mm(_conjt(links), links)
        drift = np.max(np.abs(gram - np.eye(links.shape[-1])))
        if drift > UNITARITY_TOL:
            raise ValueError(f"links deviate from unitarity by {drift:.3e} (tol {UNITARITY_TOL})")
        links = links.copy()
        links.setflags(write=False)
        self.mesh = mesh
        self.links = links
        self.rank = links.shape[-1]

    def link(self, tail: int, head: int) -> np.ndarray:
        """Transport matrix from vertex ``tail`` to vertex ``head`` along
        their shared edge (inverse of the canonical link when reversed)."""
        lo, hi = (tail, head) if tail < head else (head, tail)
        matches = np.nonzero((self.mesh.edges[:, 0] == lo) & (self.mesh.edges[:, 1] == hi))[0]
        if len(matches) != 1:
            raise ValueError(f"no edge between vertices {tail} and {head}")
        u = self.links[matches[0]]
        return u if tail < head else u.conj().T


def identity_field(mesh: sm.SphereMesh, rank: int) -> GaugeField:
    """The flat field: every link is the identity."""
    links = np.broadcast_to(np.eye(rank, dtype=complex),
                            (mesh.num_edges, rank, rank)).copy()
    return GaugeField(mesh, links)


# -- batched face-level computations -----------------------------------------


def _face_transports(mesh: sm.SphereMesh, links: np.ndarray) -> np.ndarray:
    """Transport matrices along each face boundary, orientation applied."""
    both = np.concatenate([links, _conjt(links)], axis=0)
    idx = mesh.face_edge_indices + (mesh.face_edge_signs < 0) * mesh.num_edges
    return both[idx]                                  # (F, 3, r, r)


def _holonomies(T: np.ndarray) -> np.ndarray:
    """Boundary holonomy per face, first boundary edge applied first."""
    return _mm(T[:, 2], _mm(T[:, 1], T[:, 0]))


def _eigh2(h: np.ndarray):
    """Closed-form eigendecomposition of batched Hermitian 2x2 matrices;
    eigenvalues ascending, eigenvectors orthonormal columns."""
    a = h[..., 0, 0].real
    d = h[..., 1, 1].real
    b = h[..., 0, 1]
    mean = 0.5 * (a + d)
    delta = 0.5 * (a - d)
    rho = np.sqrt(delta * delta + np.abs(b) ** 2)
    w = np.stack([mean - rho, mean + rho], axis=-1)

    # top eigenvector, branch chosen to avoid cancellation; fully
    # degenerate pairs (rho ~ 0) fall back to the standard basis
    use_alt = delta >= 0
    v1 = np.where(use_alt, rho + delta, b)
    v2 = np.where(use_alt, np.conj(b), rho - delta)
    nrm = np.sqrt(np.abs(v1) ** 2 + np.abs(v2) ** 2)
    tiny = nrm <= 1e-300
    nrm = np.where(tiny, 1.0, nrm)
    v1 = np.where(tiny, 1.0, v1 / nrm)
    v2 = np.where(tiny, 0.0, v2 / nrm)
    vec = np.empty(h.shape, dtype=complex)
    vec[..., 0, 1] = v1
    vec[..., 1, 1] = v2
    vec[..., 0, 0] = -np.conj(v2)
    vec[..., 1, 0] = np.conj(v1)
    return w, vec


def _eigh_batch(h: np.ndarray):
    """Batched Hermitian eigendecomposition; closed form for tiny ranks."""
    r = h.shape[-1]
    if r == 1:
        return h[..., 0].real.copy(), np.ones_like(h)
    if r == 2:
        return _eigh2(h)
    return np.linalg.eigh(h)


def _inv2(m: np.ndarray) -> np.ndarray:
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        out /= det[..., None, None]
    return out


def _unitary_eigensystem(hol: np.ndarray):
    """Eigenangles (ascending) and orthonormal eigenvectors of unitary
    matrices via the Hermitian Cayley transform
    ``A = i (I - U)(I + U)^{-1}`` (eigenvalues tan(angle/2)); branch
    guarded at ``pi - BRANCH_MARGIN``."""
    r = hol.shape[-1]
    eye = np.eye(r)
    if r == 1:
        angles = np.angle(hol[..., 0, 0])[..., None]
        vec = np.ones_like(hol)
    else:
        if r == 2:
            cay = 1j * _mm(eye - hol, _inv2(eye + hol))
        else:
            try:
                cay = 1j * np.linalg.solve(eye + hol, eye - hol)
            except np.linalg.LinAlgError:
                bad = int(np.argmin(np.abs(np.linalg.det(eye + hol))))
                raise CurvatureExtractionError(bad, np.pi) from None
        cay = (cay + _conjt(cay)) / 2.0
        with np.errstate(invalid="ignore"):
            tau, vec = _eigh_batch(cay)
        angles = 2.0 * np.arctan(tau)
    worst = np.max(np.abs(angles), axis=-1)
    finite = np.isfinite(worst)
    if not np.all(finite) or np.max(worst) > np.pi - BRANCH_MARGIN:
        worst = np.where(finite, worst, np.inf)
        bad = int(np.argmax(worst))
        raise CurvatureExtractionError(bad, float(min(worst[bad], np.pi)))
    return angles, vec


class _FaceData:
    """Shared per-field batch: transports, holonomies, eigensystem."""

    def __init__(self, mesh: sm.SphereMesh, links: np.ndarray):
        self.mesh = mesh
        self.links = links
        self.T = _face_transports(mesh, links)
        self.hol = _holonomies(self.T)
        self.angles, self.vec = _unitary_eigensystem(self.hol)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Curvature eigenvalues per face, ascending (angles / area)."""
        return self.angles / self.mesh.face_areas[:, None]

    def energy(self) -> float:
        return float(np.sum(np.sum(self.angles ** 2, axis=1) / self.mesh.face_areas))

    def min_lambda12(self) -> float:
        if self.angles.shape[1] < 2:
            return math.nan
        lam = (self.angles[:, 0] + self.angles[:, 1]) / self.mesh.face_areas
        return float(lam.min())

    def lambda12_values(self) -> np.ndarray:
        if self.angles.shape[1] < 2:
            raise ValueError("lambda12 requires rank >= 2")
        return (self.angles[:, 0] + self.angles[:, 1]) / self.mesh.face_areas

    def eig_variance(self) -> float:
        """Largest cross-face standard deviation among the sorted
        eigenvalue positions."""
        return float(np.max(np.std(self.eigenvalues, axis=0)))

    def degree_sum(self) -> float:
        """Sum over faces of the principal holonomy determinant phase, /2pi."""
        total_angle = np.angle(np.exp(1j * np.sum(self.angles, axis=1)))
        return float(np.sum(total_angle) / (2.0 * np.pi))

    def degree(self) -> int:
        s = self.degree_sum()
        d = int(np.round(s))
        if abs(s - d) >= DEGREE_RESIDUAL_TOL:
            raise DegreeQuantizationError(
                f"degree sum {s} has residual {abs(s - d):.3e} >= {DEGREE_RESIDUAL_TOL}")
        return d

    def log_holonomies(self) -> np.ndarray:
        return _mm(self.vec * (1j * self.angles)[:, None, :], _conjt(self.vec))

    def hermitians(self) -> np.ndarray:
        H = _mm(self.vec * self.angles[:, None, :], _conjt(self.vec))
        H = (H + _conjt(H)) / 2.0
        return H / self.mesh.face_areas[:, None, None]

    def gradient(self) -> np.ndarray:
        """Frobenius gradient of the energy with respect to left
        logarithmic perturbations of each canonical link.

        Derivation: dE = sum_f (2/area_f) Re tr(L_f^H dlog(hol_f)), and the
        adjoint of the Frechet derivative of the matrix logarithm at a
        unitary point (Daleckii-Krein form in the holonomy eigenbasis)
        collapses on L_f = log(hol_f) to ``hol_f L_f``; chaining through the
        boundary product gives, per face and boundary position i with
        transports hol = T3 T2 T1,

            K_i = T_i X_i          (edge traversed forwards)
            K_i = -X_i T_i         (edge traversed backwards)

        with X_i = S_i L^H hol^H P_i for suffix/prefix products S_i, P_i,
        and the edge gradient is sum over incidences of
        (2/area_f) * skew(K_i^H).
        """
        mesh = self.mesh
        F, r = self.hol.shape[0], self.hol.shape[-1]
        Nh = _conjt(_mm(self.log_holonomies(), self.hol))  # N^H, (F, r, r)
        T1, T2, T3 = self.T[:, 0], self.T[:, 1], self.T[:, 2]
        X = np.empty((F, 3, r, r), dtype=complex)
        NhT3 = _mm(Nh, T3)
        X[:, 0] = _mm(NhT3, T2)                # S = I,      P = T3 T2
        X[:, 1] = _mm(T1, NhT3)                # S = T1,     P = T3
        X[:, 2] = _mm(_mm(T2, T1), Nh)         # S = T2 T1,  P = I
        # each edge occurs exactly once forwards and once backwards; gather
        # both incidences instead of scattering face contributions
        fp, fm = mesh.edge_faces[:, 0], mesh.edge_faces[:, 1]
        kp, km = mesh.edge_face_positions[:, 0], mesh.edge_face_positions[:, 1]
        Kp = _mm(self.T[fp, kp], X[fp, kp]) * (2.0 / mesh.face_areas[fp])[:, None, None]
        Km = _mm(X[fm, km], self.T[fm, km]) * (-2.0 / mesh.face_areas[fm])[:, None, None]
        K = Kp + Km
        return (_conjt(K) - K) / 2.0           # skew(K^H)


def _edge_mass(mesh: sm.SphereMesh) -> np.ndarray:
    return mesh.dual_edge_lengths / mesh.edge_lengths


def _velocity(mesh: sm.SphereMesh, grad: np.ndarray) -> np.ndarray:
    return -grad / (2.0 * _edge_mass(mesh))[:, None, None]


def _velocity_norm(mesh: sm.SphereMesh, vel: np.ndarray) -> float:
    m = _edge_mass(mesh)
    return float(np.sqrt(np.sum(m * np.sum(np.abs(vel) ** 2, axis=(1, 2)))))


class _AntihermExp:
    """Batched ``t -> exp(t * xi)`` for anti-Hermitian xi, factored once so
    the backtracking line search can rescale t cheaply.

    Rank 2 uses the su(2) closed form ``exp = e^{i t c0} (cos(t w) I +
    sin(t w)/w * xi0)`` with xi0 the traceless part and w its rotation
    rate; other ranks go through a Hermitian eigendecomposition.
    """

    def __init__(self, xi: np.ndarray):
        self.r = xi.shape[-1]
        if self.r == 1:
            self.phase = xi[..., 0, 0].imag
        elif self.r == 2:
            self.c0 = 0.5 * (xi[..., 0, 0] + xi[..., 1, 1]).imag
            self.xi0 = xi - 1j * self.c0[..., None, None] * np.eye(2)
            delta = self.xi0[..., 0, 0].imag
            self.w = np.sqrt(delta * delta + np.abs(self.xi0[..., 0, 1]) ** 2)
        else:
            self.w, self.v = np.linalg.eigh(-1j * xi)

    def __call__(self, t: float) -> np.ndarray:
        if self.r == 1:
            return np.exp(1j * t * self.phase)[..., None, None]
        if self.r == 2:
            tw = t * self.w
            out = np.sinc(tw / np.pi)[..., None, None] * (t * self.xi0)
            cos = np.cos(tw)
            out[..., 0, 0] += cos
            out[..., 1, 1] += cos
            return np.exp(1j * t * self.c0)[..., None, None] * out
        return _mm(self.v * np.exp(1j * t * self.w)[..., None, :], _conjt(self.v))


def _expm_antihermitian(xi: np.ndarray) -> np.ndarray:
    """Batched exponential of anti-Hermitian matrices."""
    return _AntihermExp(xi)(1.0)


def _reunitarize(links: np.ndarray) -> np.ndarray:
    """One Newton step of the polar projection; links are already unitary
    to near machine precision, this removes accumulated drift."""
    gram = _mm(_conjt(links), links)
    return _mm(links, 1.5 * np.eye(links.shape[-1]) - 0.5 * gram)


# -- public operations --------------------------------------------------------


def holonomy(field: GaugeField, face: int) -> np.ndarray:
    """Ordered product of boundary links around ``face`` with orientation
    signs, starting at the face's least-index vertex (faces are stored with
    that vertex first)."""
    if not 0 <= face < field.mesh.num_faces:
        raise ValueError(f"face index {face} out of range")
    out = np.eye(field.rank, dtype=complex)
    for ei, sign in field.mesh.face_boundaries[face]:
        u = field.links[ei] if sign > 0 else field.links[ei].conj().T
        out = u @ out
    return out


@dataclass(frozen=True)
class PlaquetteCurvature:
    """Per-face contracted curvature (Hermitian, units 1/steradian) plus
    the face holonomies and the shared eigensystem."""

    hermitians: np.ndarray    # (F, r, r)
    holonomies: np.ndarray    # (F, r, r)
    eigenvalues: np.ndarray   # (F, r), ascending per face
    areas: np.ndarray         # (F,)

    def min_lambda12(self) -> float:
        if self.eigenvalues.shape[1] < 2:
            return math.nan
        return float((self.eigenvalues[:, 0] + self.eigenvalues[:, 1]).min())


def curvature_field(field: GaugeField) -> PlaquetteCurvature:
    """Principal log of each holonomy over (i * face area), symmetrized.

    Raises :class:`CurvatureExtractionError` naming the face whenever a
    holonomy eigenangle comes within ``BRANCH_MARGIN`` of the cut.
    """
    data = _FaceData(field.mesh, field.links)
    return PlaquetteCurvature(
        hermitians=data.hermitians(),
        holonomies=data.hol,
        eigenvalues=data.eigenvalues,
        areas=field.mesh.face_areas,
    )


def ym_energy(field: GaugeField) -> float:
    """Lattice Yang-Mills energy: sum of area * ||H_f||_F^2 over faces."""
    return _FaceData(field.mesh, field.links).energy()


def ym_gradient(field: GaugeField) -> np.ndarray:
    """Gradient of :func:`ym_energy` under ``link <- exp(s Xi) link``,
    one anti-Hermitian matrix per edge.  Analytic (see _FaceData.gradient);
    the test suite cross-validates it against central finite differences."""
    return _FaceData(field.mesh, field.links).gradient()


def gradient_norm(field: GaugeField) -> float:
    """L2 norm of the flow velocity (the discrete ||D_A^* F_A||)."""
    data = _FaceData(field.mesh, field.links)
    return _velocity_norm(field.mesh, _velocity(field.mesh, data.gradient()))


@dataclass(frozen=True)
class FlowConfig:
    step_size: float
    max_steps: int
    grad_tol: float
    energy_backtrack: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")


@dataclass(frozen=True)
class FlowRecord:
    step: int
    time: float
    energy: float
    grad_norm: float
    min_lambda12: float
    eig_variance: float
    degree: int


CSV_HEADER = "step,time,energy,grad_norm,min_lambda12,eig_variance,degree"


@dataclass
class FlowTrace:
    """Diagnostics of a flow run plus run metadata.

    ``initial_positivity`` is the classification of the initial curvature
    (rank >= 2 only); ``spacing`` is the mesh spacing h used by tolerance
    models.
    """

    records: list = dc_field(default_factory=list)
    rank: int = 0
    level: int = -1
    spacing: float = math.nan
    step_size: float = math.nan
    grad_tol: float = math.nan
    initial_positivity: PositivityClass | None = None
    converged: bool = False

    def validate(self) -> None:
        times = [r.time for r in self.records]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValueError("record times must be strictly increasing")
        degrees = {r.degree for r in self.records}
        if len(degrees) > 1:
            raise ValueError(f"degree changed along the flow: {sorted(degrees)}")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in self.records:
                fh.write(f"{r.step},{r.time:.17e},{r.energy:.17e},{r.grad_norm:.17e},"
                         f"{r.min_lambda12:.17e},{r.eig_variance:.17e},{r.degree}\n")


def _record(data: _FaceData, step: int, time: float, grad_norm: float) -> FlowRecord:
    return FlowRecord(
        step=step,
        time=time,
        energy=data.energy(),
        grad_norm=grad_norm,
        min_lambda12=data.min_lambda12(),
        eig_variance=data.eig_variance(),
        degree=data.degree(),
    )


def _energy_increase(old: _FaceData, new: _FaceData) -> float:
    """Energy difference new - old via a difference-of-squares sum.

    Near the energy floor, a single step decreases the energy by far less
    than one ulp of its absolute value; pairing the per-face sorted
    eigenangles keeps the comparison meaningful at that resolution.
    """
    diff = (new.angles - old.angles) * (new.angles + old.angles)
    return float(np.sum(np.sum(diff, axis=1) / old.mesh.face_areas))


def _apply_step(mesh: sm.SphereMesh, data: _FaceData, vel: np.ndarray,
                config: FlowConfig):
    """One backtracked descent step along the precomputed velocity;
    returns (links, new face data, accepted step size).

    With backtracking enabled, a trial that raises the branch-cut guard
    counts as a rejected step (the trial was too long), so the search
    halves and retries; the guard still propagates when backtracking is
    off or the budget is exhausted.
    """
    expm = _AntihermExp(vel)
    trial = config.step_size
    last_exc = None
    for _ in range(MAX_HALVINGS + 1):
        links = _reunitarize(_mm(expm(trial), data.links))
        try:
            new_data = _FaceData(mesh, links)
        except CurvatureExtractionError as exc:
            if not config.energy_backtrack:
                raise
            last_exc = exc
            trial *= 0.5
            continue
        if not config.energy_backtrack or _energy_increase(data, new_data) <= 0.0:
            return links, new_data, trial
        trial *= 0.5
    raise FlowStepError(
        f"energy could not be decreased after {MAX_HALVINGS} halvings "
        f"(energy {data.energy()}, last branch failure: {last_exc})")


def flow_step(field: GaugeField, config: FlowConfig):
    """A single explicit descent step with optional energy backtracking.

    Returns the updated field and the trace record describing it (step
    counter 1, elapsed time = accepted step size).
    """
    data = _FaceData(field.mesh, field.links)
    vel = _velocity(field.mesh, data.gradient())
    links, new_data, accepted = _apply_step(field.mesh, data, vel, config)
    gnorm = _velocity_norm(field.mesh, _velocity(field.mesh, new_data.gradient()))
    return GaugeField(field.mesh, links), _record(new_data, 1, accepted, gnorm)


def run_flow(field: GaugeField, config: FlowConfig, record_every: int = 1):
    """Iterate the flow until the gradient norm drops below ``grad_tol``
    or ``max_steps`` accepted steps have been taken.

    The trace records the initial state (step 0), every ``record_every``-th
    step, and the final state.  Non-convergence within ``max_steps`` is
    reported through ``trace.converged``, not as an error.
    """
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    mesh = field.mesh
    data = _FaceData(mesh, field.links)

    initial_positivity = None
    if field.rank >= 2:
        initial_positivity = classify_lambda12_values(data.lambda12_values())

    trace = FlowTrace(rank=field.rank, level=mesh.level, spacing=mesh.spacing,
                      step_size=config.step_size, grad_tol=config.grad_tol,
                      initial_positivity=initial_positivity)

    vel = _velocity(mesh, data.gradient())
    gnorm = _velocity_norm(mesh, vel)
    trace.records.append(_record(data, 0, 0.0, gnorm))
    time = 0.0
    links = field.links
    step = 0
    converged = gnorm < config.grad_tol
    while not converged and step < config.max_steps:
        links, data, accepted = _apply_step(mesh, data, vel, config)
        step += 1
        time += accepted
        vel = _velocity(mesh, data.gradient())
        gnorm = _velocity_norm(mesh, vel)
        converged = gnorm < config.grad_tol
        if step % record_every == 0 or converged or step == config.max_steps:
            trace.records.append(_record(data, step, time, gnorm))
    trace.converged = bool(converged)
    trace.validate()
    return GaugeField(mesh, links), trace


# -- initial data -------------------------------------------------------------


def monopole_field(mesh: sm.SphereMesh, degrees) -> GaugeField:
    """Direct sum of constant-curvature U(1) monopoles of the given degrees.

    Diagonal links with phases from the dual-graph Poisson solver; the
    curvature eigenvalues are uniformly degree/2 on the unit sphere, so the
    field is a lattice Hermitian-Einstein configuration (block version for
    distinct degrees).
    """
    degrees = [int(d) for d in np.atleast_1d(degrees)]
    if len(degrees) < 1:
        raise ValueError("at least one degree required")
    thetas = {}
    for d in set(degrees):
        thetas[d] = sm.dual_poisson_solve(mesh, mesh.face_areas * (d / 2.0))
    links = np.zeros((mesh.num_edges, len(degrees), len(degrees)), dtype=complex)
    for k, d in enumerate(degrees):
        links[:, k, k] = np.exp(1j * thetas[d])
    return GaugeField(mesh, links)


def quasi_positive_field(mesh: sm.SphereMesh) -> GaugeField:
    """A rank-2 abelian field whose curvature is 2-quasi-positive: the
    bottom eigenvalue pair sum is exactly zero on one face and strictly
    positive elsewhere.

    Channel 1 is flat.  Channel 2 carries total degree 2 with a modulated
    curvature profile ``1 + kappa * g`` built from an exact dual-graph
    potential, with kappa scaled so the minimum is exactly zero.
    """
    B = mesh.boundary_matrix()
    phi = mesh.face_centroids[:, 2]
    theta_mod = B.T @ phi
    g = (B @ theta_mod) / mesh.face_areas
    kappa = -1.0 / float(g.min())
    profile = 1.0 + kappa * g                      # min is exactly 0
    theta = sm.dual_poisson_solve(mesh, mesh.face_areas * 1.0) + kappa * theta_mod
    links = np.zeros((mesh.num_edges, 2, 2), dtype=complex)
    links[:, 0, 0] = 1.0
    links[:, 1, 1] = np.exp(1j * theta)
    if profile.min() != 0.0 or np.sort(profile)[1] <= 0.0:
        raise RuntimeError("quasi-positive profile construction failed")
    return GaugeField(mesh, links)


def gauge_scramble(field: GaugeField, seed: int) -> GaugeField:
    """Random vertex gauge transformation: ``link <- W_head link W_tail^H``
    with independent Haar unitaries per vertex.  All gauge-invariant
    observables are unchanged."""
    rng = np.random.default_rng(seed)
    r = field.rank
    z = rng.standard_normal((field.mesh.num_vertices, r, r)) \
        + 1j * rng.standard_normal((field.mesh.num_vertices, r, r))
    q, rr = np.linalg.qr(z)
    diag = np.diagonal(rr, axis1=-2, axis2=-1)
    w = q * (diag / np.abs(diag))[:, None, :]
    tails = field.mesh.edges[:, 0]
    heads = field.mesh.edges[:, 1]
    links = _mm(w[heads], _mm(field.links, _conjt(w[tails])))
    return GaugeField(field.mesh, _reunitarize(links))


def perturb(field: GaugeField, eps: float, seed: int) -> GaugeField:
    """Left-multiply every link by ``exp(i * eps * X_e)`` with independent
    random Hermitian ``X_e`` (Hermitian part of a standard complex Gaussian
    matrix, scaled by 1/sqrt(rank))."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return field
    rng = np.random.default_rng(seed)
    r = field.rank
    g = rng.standard_normal((field.mesh.num_edges, r, r)) \
        + 1j * rng.standard_normal((field.mesh.num_edges, r, r))
    x = (g + _conjt(g)) / (2.0 * np.sqrt(r))
    w, v = np.linalg.eigh(x)
    rot = _mm(v * np.exp(1j * eps * w)[..., None, :], _conjt(v))
    return GaugeField(field.mesh, _reunitarize(_mm(rot, field.links)))


def perturb_diagonal(field: GaugeField, eps: float, seed: int) -> GaugeField:
    """Channel-preserving variant of :func:`perturb`: the random Hermitian
    generators are diagonal (independent real standard normals scaled by
    1/sqrt(rank)), so a direct sum of line bundles stays a direct sum.

    Unstable splitting strata (unbalanced degree lists) are recovered by
    the flow only from deformations that preserve their block structure; a
    generic full perturbation jumps to the balanced stratum instead.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return field
    rng = np.random.default_rng(seed)
    r = field.rank
    x = rng.standard_normal((field.mesh.num_edges, r)) / np.sqrt(r)
    rot = np.zeros((field.mesh.num_edges, r, r), dtype=complex)
    idx = np.arange(r)
    rot[:, idx, idx] = np.exp(1j * eps * x)
    return GaugeField(field.mesh, _reunitarize(_mm(rot, field.links)))


def total_degree(field: GaugeField) -> int:
    """First Chern number: rounded sum over faces of the principal phase
    of det(holonomy) over 2*pi.  The pre-rounding residual must be below
    ``DEGREE_RESIDUAL_TOL`` or :class:`DegreeQuantizationError` is raised."""
    data = _FaceData(field.mesh, field.links)
    dets = np.linalg.det(data.hol)
    s = float(np.sum(np.angle(dets)) / (2.0 * np.pi))
    d = int(np.round(s))
    if abs(s - d) >= DEGREE_RESIDUAL_TOL:
        raise DegreeQuantizationError(
            f"degree sum {s} has residual {abs(s - d):.3e} >= {DEGREE_RESIDUAL_TOL}")
    return d


# -- convergence diagnostics ---------------------------------------------------


@dataclass(frozen=True)
class SplittingSummary:
    """Integer splitting type read off a converged curvature field."""

    degrees: tuple                 # ascending integers, one per rank
    integrality_residual: float    # max |2*mean eigenvalue - nearest integer|
    eig_std: float                 # max cross-face std of sorted eigenvalues


def splitting_summary(curv: PlaquetteCurvature) -> SplittingSummary:
    """Round the cross-face mean curvature eigenvalues (times the
    unit-sphere normalization Vol/2pi = 2) to the integer splitting type."""
    means = curv.eigenvalues.mean(axis=0)
    scaled = 2.0 * means
    degrees = np.round(scaled).astype(int)
    return SplittingSummary(
        degrees=tuple(int(d) for d in degrees),
        integrality_residual=float(np.max(np.abs(scaled - degrees))),
        eig_std=float(np.max(np.std(curv.eigenvalues, axis=0))),
    )


@dataclass(frozen=True)
class MaxPrinReport:
    """Verdicts of the lattice maximum-principle monitor.

    ``monotone_ok`` is verdict (1): the minimum bottom-pair sum never drops
    below its initial value minus ``tol_mp``.  ``positive_after_ok`` is
    verdict (2), checked only for 2-quasi-positive initial data: strictly
    positive minimum at every recorded time >= ``t_check``.
    """

    tol_mp: float
    initial_min: float
    worst_drop: float
    monotone_ok: bool
    quasi_applicable: bool
    positive_after_ok: bool | None
    t_check: float
    c: float
    cprime: float

    @property
    def passed(self) -> bool:
        if not self.monotone_ok:
            return False
        if self.quasi_applicable:
            return bool(self.positive_after_ok)
        return True


def maxprin_monitor(trace: FlowTrace, c: float = DEFAULT_TOL_C,
                    cprime: float = DEFAULT_TOL_CPRIME,
                    t_check: float = 0.1) -> MaxPrinReport:
    """Check the maximum-principle predictions on a flow trace.

    The continuum statements are exact; the lattice flow can satisfy them
    only up to discretization error, modeled as tol_mp = c*h^2 + cprime*dt
    with constants calibrated on stationary monopole families.
    """
    if not trace.records:
        raise ValueError("empty trace")
    if trace.rank < 2:
        raise ValueError("maximum-principle monitor requires rank >= 2")
    tol_mp = c * trace.spacing ** 2 + cprime * trace.step_size
    series = [(r.time, r.min_lambda12) for r in trace.records]
    initial = series[0][1]
    worst_drop = max(initial - v for _, v in series)
    monotone_ok = worst_drop <= tol_mp

    quasi = (trace.initial_positivity is not None
             and trace.initial_positivity.kind is Positivity.TWO_QUASI_POSITIVE)
    positive_after = None
    if quasi:
        later = [v for t, v in series if t >= t_check]
        positive_after = bool(later) and all(v > 0 for v in later)

    return MaxPrinReport(tol_mp=tol_mp, initial_min=initial, worst_drop=worst_drop,
                         monotone_ok=monotone_ok, quasi_applicable=quasi,
                         positive_after_ok=positive_after, t_check=t_check,
                         c=c, cprime=cprime)


def calibrate_maxprin_constants(levels=(2, 3), step_sizes=(2e-3, 4e-3),
                                steps: int = 150, safety: float = 10.0):
    """Measure maximum-principle tolerance constants on the stationary
    monopole family.

    Runs the (1,1) monopole at each (level, step size), measures the worst
    observed drop of the minimum bottom-pair sum below its initial value,
    and fits drop ~ c*h^2 + cprime*dt by nonnegative least squares.  The
    returned constants carry the safety factor and a floor at the
    measurement noise scale, and should upper-bound pure discretization
    drift for nearby experiments.  Returns (c, cprime, measurements).
    """
    rows = []
    drops = []
    for level in levels:
        mesh = sm.build_icosphere(level)
        start = monopole_field(mesh, (1, 1))
        for dt in step_sizes:
            config = FlowConfig(step_size=dt, max_steps=steps, grad_tol=1e-300)
            _, trace = run_flow(start, config, record_every=max(1, steps // 25))
            initial = trace.records[0].min_lambda12
            drop = max(initial - r.min_lambda12 for r in trace.records)
            rows.append((mesh.spacing ** 2, dt))
            drops.append(max(drop, 0.0))
    A = np.array(rows)
    b = np.array(drops)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    floor = max(np.max(b), 1e-12)
    c = max(float(coef[0]), 0.0) * safety + safety * floor / float(np.max(A[:, 0]))
    cprime = max(float(coef[1]), 0.0) * safety + safety * floor / float(np.max(A[:, 1]))
    measurements = [{"h2": r[0], "dt": r[1], "drop": d} for r, d in zip(rows, drops)]
    return c, cprime, measurements


# -- spherical-harmonic diagnostics (rank 1) -----------------------------------


def _real_sph_harm(l: int, m: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    if m == 0:
        return np.real(sph_harm_y(l, 0, theta, phi))
    y = sph_harm_y(l, abs(m), theta, phi)
    if m > 0:
        return np.sqrt(2.0) * ((-1) ** m) * np.real(y)
    return np.sqrt(2.0) * ((-1) ** m) * np.imag(y)


def heat_mode_projection(field: GaugeField, l_max: int) -> dict:
    """Project the scalar curvature of a rank-1 field onto real spherical
    harmonics up to ``l_max`` by area-weighted quadrature at the face
    centroids.  Returns {(l, m): amplitude} with complex-typed values."""
    if field.rank != 1:
        raise ValueError("heat mode projection applies to rank-1 fields only")
    if l_max < 0:
        raise ValueError("l_max must be nonnegative")
    data = _FaceData(field.mesh, field.links)
    u = data.angles[:, 0] / field.mesh.face_areas
    cent = field.mesh.face_centroids
    theta = np.arccos(np.clip(cent[:, 2], -1.0, 1.0))
    phi = np.arctan2(cent[:, 1], cent[:, 0])
    weights = field.mesh.face_areas * u
    out = {}
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            out[(l, m)] = complex(np.sum(weights * _real_sph_harm(l, m, theta, phi)))
    return out


def heat_mode_amplitudes(field: GaugeField, l_max: int) -> np.ndarray:
    """Rotation-invariant per-degree amplitudes sqrt(sum_m |c_lm|^2)."""
    coeffs = heat_mode_projection(field, l_max)
    return np.array([
        math.sqrt(sum(abs(coeffs[(l, m)]) ** 2 for m in range(-l, l + 1)))
        for l in range(l_max + 1)
    ])
