"""Normal reparametrization of a multivalued graph over a curved graph surface.

Given ``Sigma = {(x, phi(x)) : |x| <= s}`` and a Q-valued ``f = sum_l m_l [[g_l]]``
with polynomial sheets, every point ``Phi(x)`` of ``Sigma`` gets the Q-point
``N(Phi(x))`` of normal displacements ``xi - Phi(x)`` where the normal plane
through ``Phi(x)`` meets the graph of ``f``.  The module builds ``N`` on a
mesh and checks the accompanying estimates numerically.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import chains
from .polynomial import Polynomial
from .qpoints import QPoint
from .qfields import SampledQField, chain_clusters, lipschitz_estimate, sheet_multiplicity

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
ROOT_MERGE_TOL = 1e-8
#: Lower bound on the Gram-Schmidt pivots of the normal frame.
FRAME_GATE = 0.5
#: Absolute slack for the two-sided fibre estimates (solver accuracy scale).
ESTIMATE_ATOL = 1e-9
DENSE_FACTOR = 4


class SmallnessViolation(ValueError):
    """The surface or the field is too large for the construction to apply."""


class SolverError(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""


class ThicknessViolation(ValueError):
    """A fibre root lies outside the tubular neighbourhood."""


def geometric_constant(m: int, n: int) -> float:
    """The gate constant used for the tube-radius and vertical-limitation gates."""
    return 16.0 * (m + n) ** 2


# ----------------------------------------------------------------------------
# meshes


def _ticks(s: float, h: float, lo: int, hi: int) -> np.ndarray:
    return np.arange(lo, hi + 1) * h - s


def ball_grid(m: int, s: float, resolution: int, radius: float | None = None):
    """Regular grid with ``resolution`` ticks across ``[-s, s]``, clipped to a ball.

    The lattice spacing is ``h = 2 s / (resolution - 1)``; ``radius`` (default
    ``s``) sets the clipping ball so grids of different radii share vertices.
    Returns ``(points, edges, h)``.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    radius = s if radius is None else radius
    h = 2.0 * s / (resolution - 1)
    reach = int(math.floor((radius - s) / h + 1e-9))
    ticks = _ticks(s, h, -reach, resolution - 1 + reach)
    shape = (len(ticks),) * m
    mesh = np.meshgrid(*([ticks] * m), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    keep = np.einsum("ij,ij->i", pts, pts) <= radius * radius * (1 + 1e-12)
    new_id = -np.ones(len(pts), dtype=int)
    new_id[keep] = np.arange(keep.sum())
    idx = np.arange(len(pts)).reshape(shape)
    edges = []
    for ax in range(m):
        a = np.take(idx, range(shape[ax] - 1), axis=ax).ravel()
        b = np.take(idx, range(1, shape[ax]), axis=ax).ravel()
        ok = keep[a] & keep[b]
        edges.append(np.stack([new_id[a[ok]], new_id[b[ok]]], axis=1))
    return pts[keep], np.concatenate(edges), h


# ----------------------------------------------------------------------------
# the surface and the field


class GraphSurface:
    """``Sigma = Gr(phi | B_s)`` for a polynomial ``phi: R^m -> R^n``."""

    def __init__(self, phi: Polynomial, s: float, c_bar: float = 1.0, resolution: int = 33):
        self.phi = phi
        self.s = float(s)
        self.m, self.n = phi.m, phi.n
        self.c_bar = float(c_bar)
        self.density = DENSE_FACTOR * (resolution - 1) + 1
        pts, _, _ = ball_grid(self.m, self.s, self.density)
        self.norms = {
            0: float(np.linalg.norm(phi(pts), axis=-1).max()),
            1: float(_frob(phi.jacobian(pts)).max()),
            2: float(_frob(phi.hessian(pts)).max()),
            3: float(_frob(phi.third(pts)).max()),
        }
        if self.c_norm(3) > self.c_bar:
            raise SmallnessViolation(f"||phi||_C3 = {self.c_norm(3):.3g} exceeds the declared bound {self.c_bar}")

    def c_norm(self, k: int) -> float:
        """``sum_{j <= k} sup |D^j phi|`` over the sampled ball."""
        return sum(self.norms[j] for j in range(k + 1))

    def Phi(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        return np.hstack([X, self.phi(X)])

    def tangents(self, X) -> np.ndarray:
        """``(K, m, m+n)`` rows ``d_i Phi = (e_i, d_i phi)``."""
        X = np.atleast_2d(np.asarray(X, float))
        J = self.phi.jacobian(X)  # (K, n, m)
        eye = np.broadcast_to(np.eye(self.m), (len(X), self.m, self.m))
        return np.concatenate([eye, np.transpose(J, (0, 2, 1))], axis=2)


def _frob(A: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(A.reshape(len(A), -1) ** 2, axis=1))


class SheetField:
    """``f = sum_l m_l [[g_l]]`` with polynomial sheets ``g_l: R^m -> R^n``."""

    def __init__(self, sheets: Sequence[Polynomial], mults: Sequence[int] | None = None):
        self.sheets = list(sheets)
        self.mults = [int(k) for k in (mults if mults is not None else [1] * len(self.sheets))]
        if not self.sheets or len(self.mults) != len(self.sheets) or min(self.mults) < 1:
            raise ValueError("need at least one sheet and one positive multiplicity per sheet")
        self.m, self.n = self.sheets[0].m, self.sheets[0].n
        if any((g.m, g.n) != (self.m, self.n) for g in self.sheets):
            raise ValueError("all sheets must map R^m to R^n with the same m, n")
        self.Q = sum(self.mults)

    def values(self, X) -> np.ndarray:
        """``(K, L, n)`` sheet values."""
        X = np.atleast_2d(np.asarray(X, float))
        return np.stack([g(X) for g in self.sheets], axis=1)

    def expanded(self, X) -> np.ndarray:
        """``(K, Q, n)`` with sheets repeated by multiplicity."""
        return np.repeat(self.values(X), self.mults, axis=1)

    def __call__(self, x) -> QPoint:
        return QPoint(self.values(x)[0], self.mults)

    def sampled(self, points, edges) -> SampledQField:
        vals = self.values(points)
        return SampledQField(points, edges, [QPoint(v, self.mults) for v in vals])

    def center(self, X) -> np.ndarray:
        return self.expanded(X).mean(axis=1)

    def to_json(self) -> list[dict]:
        return [{"poly": g.to_json(), "multiplicity": k} for g, k in zip(self.sheets, self.mults)]

    @classmethod
    def from_json(cls, docs: list[dict]) -> "SheetField":
        polys, mults = [], []
        for d in docs:
            if "poly" not in d:
                raise ValueError("each sheet entry needs a 'poly' field")
            polys.append(Polynomial.from_json(d["poly"]))
            mults.append(sheet_multiplicity(d))
        return cls(polys, mults)


# ----------------------------------------------------------------------------
# normal frames


def normal_frames(surface: GraphSurface, X) -> np.ndarray:
    """``(K, n, m+n)`` orthonormal normal frames at ``Phi(x)``.

    The coordinate vectors ``e_{m+1}..e_{m+n}`` are projected onto the normal
    space and orthonormalized in order (modified Gram-Schmidt, applied twice).
    """
    X = np.atleast_2d(np.asarray(X, float))
    m, n = surface.m, surface.n
    T = surface.tangents(X)  # (K, m, d)
    G = T @ np.transpose(T, (0, 2, 1))
    d = m + n
    E = np.broadcast_to(np.eye(d)[m:], (len(X), n, d)).copy()
    # remove the tangential part: v - T^T G^{-1} T v
    coeff = np.linalg.solve(G, T @ np.transpose(E, (0, 2, 1)))  # (K, m, n)
    V = E - np.transpose(np.transpose(T, (0, 2, 1)) @ coeff, (0, 2, 1))
    frames = np.empty_like(V)
    for j in range(n):
        w = V[:, j, :].copy()
        for _ in range(2):
            for i in range(j):
                w -= np.einsum("kd,kd->k", w, frames[:, i, :])[:, None] * frames[:, i, :]
        pivot = np.linalg.norm(w, axis=1)
        if np.any(pivot < FRAME_GATE):
            bad = int(np.argmin(pivot))
            raise SmallnessViolation(
                f"normal projection of e_{m + j + 1} has norm {pivot[bad]:.3g} < {FRAME_GATE} at x={X[bad].tolist()}"
            )
        frames[:, j, :] = w / np.linalg.norm(w, axis=1)[:, None]
    return frames


def normal_frame(surface: GraphSurface, x) -> np.ndarray:
    """``(n, m+n)`` orthonormal frame of the normal space at ``Phi(x)``."""
    return normal_frames(surface, np.atleast_2d(np.asarray(x, float)))[0]


# ----------------------------------------------------------------------------
# hypotheses


@dataclass
class SmallnessReport:
    conditions: list[dict]
    lipschitz: float
    f_norm: float
    density: int

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.conditions)

    def failed(self) -> list[str]:
        return [c["name"] for c in self.conditions if not c["passed"]]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "conditions": self.conditions,
            "lipschitz": self.lipschitz,
            "f_norm": self.f_norm,
            "sampling_density": self.density,
        }


def field_lipschitz(f: SheetField, r: float, density: int) -> tuple[float, float]:
    """Edgewise Lipschitz estimate and sup norm of ``f`` sampled on ``B_r``."""
    pts, edges, _ = ball_grid(f.m, r, density)
    u = f.sampled(pts, edges)
    X = u.expanded()
    return lipschitz_estimate(u), float(np.sqrt(np.einsum("kqn,kqn->k", X, X).max()))


def check_smallness(surface: GraphSurface, f: SheetField, r: float, c0: float) -> SmallnessReport:
    """Evaluate every hypothesis gate of the construction, with the numbers."""
    s, m, n = surface.s, surface.m, surface.n
    C = geometric_constant(m, n)
    ell, fnorm = field_lipschitz(f, r, surface.density)

    def cond(name, lhs, rhs):
        return {"name": name, "lhs": float(lhs), "rhs": float(rhs), "passed": bool(lhs <= rhs)}

    conditions = [
        cond("regularity: |phi|_C2 + Lip(f) <= c0", surface.c_norm(2) + ell, c0),
        cond("height: |phi|_C0 + |f|_C0 <= c0 s", surface.norms[0] + fnorm, c0 * s),
        cond("thickness: c0 <= (r - s)/2", c0, (r - s) / 2),
        cond("tube: c0^2 <= (1 - (s/r)^2)/C", c0 ** 2, (1 - (s / r) ** 2) / C),
        cond("vertical gate: C c0^2 <= 1/2", C * c0 ** 2, 0.5),
    ]
    return SmallnessReport(conditions, ell, fnorm, surface.density)


# ----------------------------------------------------------------------------
# fibres


@dataclass
class FiberBatch:
    frames: np.ndarray  # (K, n, d)
    coords: np.ndarray  # (K, L, n) fibre coordinates per sheet
    residuals: np.ndarray  # (K, L)
    iterations: np.ndarray  # (K, L)
    displacements: np.ndarray  # (K, L, d)
    values: list[QPoint]  # merged N at each point
    atom_coords: list[np.ndarray]  # fibre coordinates of the merged atoms


def _newton_sheet(surface: GraphSurface, g: Polynomial, X: np.ndarray, frames: np.ndarray):
    m = surface.m
    base = surface.Phi(X)
    V = np.transpose(frames, (0, 2, 1))  # (K, d, n)
    v = g(X) - surface.phi(X)

    def residual(v):
        xi = base + np.einsum("kdn,kn->kd", V, v)
        y = xi[:, :m]
        return xi[:, m:] - g(y), y

    R, y = residual(v)
    norm = np.linalg.norm(R, axis=1)
    iters = np.zeros(len(X), dtype=int)
    for _ in range(NEWTON_MAX_ITER):
        active = norm > 1e-15
        if not np.any(active):
            break
        Dg = g.jacobian(y)  # (K, n, m)
        J = V[:, m:, :] - Dg @ V[:, :m, :]
        step = np.linalg.solve(J, -R[:, :, None])[:, :, 0]
        step[~active] = 0.0
        t = np.ones(len(X))
        for _ in range(30):
            trial = v + t[:, None] * step
            R_try, y_try = residual(trial)
            n_try = np.linalg.norm(R_try, axis=1)
            worse = active & (n_try > norm)
            if not np.any(worse):
                break
            t[worse] *= 0.5
        improved = active & (n_try < norm)
        if not np.any(improved):
            break
        v[improved] = trial[improved]
        R[improved], y[improved], norm[improved] = R_try[improved], y_try[improved], n_try[improved]
        iters[improved] += 1
    return v, norm, iters, y


def solve_fibers(surface: GraphSurface, f: SheetField, X, c0: float, r: float | None = None) -> FiberBatch:
    """Intersect the normal planes at ``Phi(X)`` with every sheet of ``f``."""
    X = np.atleast_2d(np.asarray(X, float))
    frames = normal_frames(surface, X)
    L = len(f.sheets)
    K, n = len(X), surface.n
    coords = np.empty((K, L, n))
    residuals = np.empty((K, L))
    iterations = np.empty((K, L), dtype=int)
    for l, g in enumerate(f.sheets):
        v, res, its, y = _newton_sheet(surface, g, X, frames)
        bad = np.flatnonzero(~(res <= NEWTON_TOL))
        if len(bad):
            raise SolverError(f"sheet {l}: residual {res[bad[0]]:.3g} after {its[bad[0]]} steps at x={X[bad[0]].tolist()}")
        if r is not None:
            out = np.flatnonzero(np.linalg.norm(y, axis=1) >= r)
            if len(out):
                raise ThicknessViolation(f"sheet {l}: fibre root leaves B_r at x={X[out[0]].tolist()}")
        coords[:, l], residuals[:, l], iterations[:, l] = v, res, its
    size = np.linalg.norm(coords, axis=2)
    thick = np.argwhere(size >= c0)
    if len(thick):
        k, l = thick[0]
        raise ThicknessViolation(f"sheet {l}: |v| = {size[k, l]:.3g} >= c0 = {c0} at x={X[k].tolist()}")
    disp = np.einsum("kln,knd->kld", coords, frames)
    values, atom_coords = [], []
    for k in range(K):
        labels = chain_clusters(disp[k], ROOT_MERGE_TOL) if L > 1 else np.zeros(1, int)
        reps, mults = [], []
        for lab in range(labels.max() + 1):
            members = np.flatnonzero(labels == lab)
            reps.append(members[0])
            mults.append(sum(f.mults[i] for i in members))
        values.append(QPoint(disp[k, reps], mults))
        atom_coords.append(coords[k, reps])
    return FiberBatch(frames, coords, residuals, iterations, disp, values, atom_coords)


@dataclass
class FiberSolution:
    value: QPoint
    frame: np.ndarray
    coords: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray


def solve_fiber(surface: GraphSurface, f: SheetField, x, c0: float, r: float | None = None) -> FiberSolution:
    """N(Phi(x)) as a Q-point in R^{m+n}, with solver diagnostics."""
    b = solve_fibers(surface, f, np.atleast_2d(np.asarray(x, float)), c0, r)
    return FiberSolution(b.values[0], b.frames[0], b.coords[0], b.residuals[0], b.iterations[0])


# ----------------------------------------------------------------------------
# the normal field


@dataclass
class NormalField:
    surface: GraphSurface
    f: SheetField
    c0: float
    r: float
    points: np.ndarray
    edges: np.ndarray
    h: float
    resolution: int
    fibers: FiberBatch
    smallness: SmallnessReport

    @property
    def values(self) -> list[QPoint]:
        return self.fibers.values

    @property
    def Q(self) -> int:
        return self.f.Q

    def expanded(self) -> np.ndarray:
        """``(K, Q, m+n)`` displacements, sheets repeated by multiplicity."""
        return np.repeat(self.fibers.displacements, self.f.mults, axis=1)

    def expanded_coords(self) -> np.ndarray:
        return np.repeat(self.fibers.coords, self.f.mults, axis=1)

    def fiber_mass(self) -> np.ndarray:
        return np.array([v.Q for v in self.values])

    def normality(self) -> float:
        """Largest |<xi - Phi(x), d_i Phi(x)>| over all atoms."""
        T = self.surface.tangents(self.points)
        dots = np.einsum("kld,kid->kli", self.fibers.displacements, T)
        return float(np.abs(dots).max())


def build_normal_field(
    surface: GraphSurface,
    f: SheetField,
    c0: float,
    r: float,
    resolution: int = 33,
    workers: int | None = None,
) -> NormalField:
    """Solve every fibre on the clipped grid over ``B_s``."""
    report = check_smallness(surface, f, r, c0)
    if not report.passed:
        raise SmallnessViolation("hypotheses fail: " + "; ".join(report.failed()))
    points, edges, h = ball_grid(surface.m, surface.s, resolution)
    if workers and workers > 1 and len(points) > workers:
        chunks = np.array_split(np.arange(len(points)), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda idx: solve_fibers(surface, f, points[idx], c0, r), chunks))
        fibers = FiberBatch(
            np.concatenate([p.frames for p in parts]),
            np.concatenate([p.coords for p in parts]),
            np.concatenate([p.residuals for p in parts]),
            np.concatenate([p.iterations for p in parts]),
            np.concatenate([p.displacements for p in parts]),
            [v for p in parts for v in p.values],
            [a for p in parts for a in p.atom_coords],
        )
    else:
        fibers = solve_fibers(surface, f, points, c0, r)
    return NormalField(surface, f, c0, r, points, edges, h, resolution, fibers, report)


# ----------------------------------------------------------------------------
# estimates


def project_to_surface(surface: GraphSurface, targets, z0=None, tol: float = 1e-15) -> np.ndarray:
    """Parameters ``z`` of the nearest points ``Phi(z)`` to ``targets``.

    Newton on the tangency conditions ``<t - Phi(z), d_i Phi(z)> = 0``.
    """
    targets = np.atleast_2d(np.asarray(targets, float))
    m = surface.m
    z = targets[:, :m].copy() if z0 is None else np.array(z0, float)
    for _ in range(NEWTON_MAX_ITER):
        T = surface.tangents(z)
        gap = targets - surface.Phi(z)
        F = np.einsum("kd,kid->ki", gap, T)
        if np.abs(F).max() <= tol:
            break
        H = surface.phi.hessian(z)  # (K, n, m, m)
        J = -(T @ np.transpose(T, (0, 2, 1))) + np.einsum("kn,knij->kij", gap[:, m:], H)
        z = z - np.linalg.solve(J, F[:, :, None])[:, :, 0]
    return z


def _matchings(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Per pair, the lexicographically first permutation minimizing the cost."""
    Q = A.shape[1]
    perms = np.array(list(itertools.permutations(range(Q))))
    diff = A[:, None, :, :] - B[:, perms, :]
    cost = np.einsum("kpqd,kpqd->kp", diff, diff)
    best = cost.min(axis=1, keepdims=True)
    first = np.argmax(cost <= best + 1e-12 * np.maximum(1.0, best), axis=1)
    return perms[first]


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return 0.0 if num <= 1e-14 else math.inf


@dataclass
class EstimatesReport:
    constants: dict
    checks: dict
    failures: list[str]
    per_vertex: dict = field(repr=False)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"passed": self.passed, "constants": self.constants, "checks": self.checks, "failures": self.failures}


def verify_estimates(N: NormalField, surface: GraphSurface | None = None, f: SheetField | None = None) -> EstimatesReport:
    """Sampled check of the reparametrization estimates.

    Asserted: fibre mass, residuals, normality, thickness, the two-sided
    bound between |N| and G(f, Q[[phi]]), the shifted-surface bound, and
    Lip(N) <= sqrt(Q) tau'.  Reported: the constants relating Lip(N),
    |eta o N| and the vertical increments to their brackets.
    """
    surface = N.surface if surface is None else surface
    f = N.f if f is None else f
    Q, m = N.Q, surface.m
    X = N.points
    sq = math.sqrt(Q)
    ell = N.smallness.lipschitz
    failures = []

    disp = N.expanded()  # (K, Q, d)
    coords = N.expanded_coords()
    size = np.sqrt(np.einsum("kqd,kqd->k", disp, disp))  # |N(Phi(x))|
    N_C0 = float(size.max())

    mass_ok = bool(np.all(N.fiber_mass() == Q))
    residual = float(N.fibers.residuals.max())
    normality = N.normality()
    thickness = float(np.linalg.norm(N.fibers.coords, axis=2).max())
    if not mass_ok:
        failures.append("fibre mass differs from Q")
    if not residual < NEWTON_TOL:
        failures.append(f"Newton residual {residual:.3g}")
    if not normality <= 1e-9:
        failures.append(f"normality defect {normality:.3g}")
    if not thickness < N.c0:
        failures.append(f"atom outside the tube: {thickness:.3g}")

    # two-sided bound at every vertex
    F = f.expanded(X)
    phi_x = surface.phi(X)
    gf = np.sqrt(_min_cost(F, np.repeat(phi_x[:, None, :], Q, axis=1)))
    low = size / (2 * sq) <= gf + ESTIMATE_ATOL
    high = gf <= 2 * sq * size + ESTIMATE_ATOL
    if not np.all(low & high):
        failures.append(f"two-sided fibre bound fails at {int((~(low & high)).sum())} vertices")
    with np.errstate(divide="ignore", invalid="ignore"):
        th2_ratio = np.where(size > 0, gf / size, np.where(gf > 0, np.inf, 1.0))

    # edgewise quantities
    a, b = N.edges[:, 0], N.edges[:, 1]
    base = surface.Phi(X)
    chord = np.linalg.norm(base[a] - base[b], axis=1)
    step = np.linalg.norm(X[a] - X[b], axis=1)
    sigma = _matchings(coords[a], coords[b])
    rows = np.arange(len(a))[:, None]
    dv = np.linalg.norm(coords[a] - coords[b][rows, sigma], axis=2).max(axis=1) if len(a) else np.zeros(0)
    dxi = np.linalg.norm(disp[a] - disp[b][rows, sigma], axis=2).max(axis=1) if len(a) else np.zeros(0)
    lipN = float(np.max(np.sqrt(_min_cost(disp[a], disp[b])) / chord)) if len(a) else 0.0
    tau = float(np.max(dv / step)) if len(a) else 0.0
    tau_prime = float(np.max(dxi / step)) if len(a) else 0.0
    if lipN > sq * tau_prime + 1e-9:
        failures.append(f"Lip(N) = {lipN:.3g} exceeds sqrt(Q) tau' = {sq * tau_prime:.3g}")

    bracket = N_C0 * surface.norms[2] + surface.norms[1] + ell

    # centre of mass
    etaN = np.linalg.norm(disp.mean(axis=1), axis=1)
    Dphi = _frob(surface.phi.jacobian(X))
    core = np.linalg.norm(F.mean(axis=1) - phi_x, axis=1) + ell * Dphi * size
    th3 = np.array([_ratio(p, q) for p, q in zip(etaN, core)])

    # shifted surface: (x, eta f(x)) = p + v with p on Sigma, v normal
    target = np.hstack([X, F.mean(axis=1)])
    Z = project_to_surface(surface, target)
    v = target - surface.Phi(Z)
    shifted = solve_fibers(surface, f, Z, N.c0, N.r)
    NZ = np.repeat(shifted.displacements, f.mults, axis=1)
    lhs4 = np.sqrt(_min_cost(NZ, np.repeat(v[:, None, :], Q, axis=1)))
    rhs4 = 2 * sq * np.sqrt(_min_cost(F, np.repeat(F.mean(axis=1)[:, None, :], Q, axis=1)))
    th4_ok = lhs4 <= rhs4 + ESTIMATE_ATOL
    if not np.all(th4_ok):
        failures.append(f"shifted-surface bound fails at {int((~th4_ok).sum())} vertices")

    constants = {
        "lipschitz_N": lipN,
        "bracket": bracket,
        "C_lipschitz": _ratio(lipN, bracket),
        "C_center": float(th3.max()) if len(th3) else 0.0,
        "tau_hat": tau,
        "tau_prime": tau_prime,
        "C_vertical": _ratio(tau, bracket),
        "N_C0": N_C0,
        "field_lipschitz": ell,
    }
    checks = {
        "fiber_mass": mass_ok,
        "max_residual": residual,
        "normality": normality,
        "max_fiber_radius": thickness,
        "two_sided_bound": bool(np.all(low & high)),
        "shifted_surface_bound": bool(np.all(th4_ok)),
        "lipschitz_vs_tau": lipN <= sq * tau_prime + 1e-9,
        "th2_ratio_min": float(np.min(th2_ratio)),
        "th2_ratio_max": float(np.max(th2_ratio)),
    }
    per_vertex = {
        "size": size,
        "g_f": gf,
        "th2_ratio": th2_ratio,
        "th3_ratio": th3,
        "th4_lhs": lhs4,
        "th4_rhs": rhs4,
        "residual": N.fibers.residuals.max(axis=1),
    }
    return EstimatesReport(constants, checks, failures, per_vertex)


def _min_cost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Optimal matching cost between paired expanded Q-points."""
    Q = A.shape[1]
    perms = np.array(list(itertools.permutations(range(Q))))
    diff = A[:, None, :, :] - B[:, perms, :]
    return np.einsum("kpqd,kpqd->kp", diff, diff).min(axis=1)


# ----------------------------------------------------------------------------
# graph identity


@dataclass
class GraphIdentityReport:
    hausdorff: float
    bound: float
    probe_counts_F: list[int]
    probe_counts_G: list[int]
    graph_samples_in_tube: int

    @property
    def passed(self) -> bool:
        Q = self.probe_counts_F and max(self.probe_counts_F)
        return (
            self.hausdorff <= self.bound
            and self.probe_counts_F == self.probe_counts_G
            and all(c == Q for c in self.probe_counts_F)
        )

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "hausdorff": self.hausdorff,
            "bound": self.bound,
            "probe_counts_F": self.probe_counts_F,
            "probe_counts_G": self.probe_counts_G,
            "graph_samples_in_tube": self.graph_samples_in_tube,
        }


def _kuhn_simplices(points: np.ndarray, h: float, stride: int) -> list[list[int]]:
    """Kuhn triangulation of the coarse cells (``stride`` mesh steps) whose corners are all present."""
    m = points.shape[1]
    lookup = {tuple(np.rint(p / h).astype(int)): i for i, p in enumerate(points)}
    corners = sorted({tuple(((np.rint(p / h).astype(int)) // stride) * stride) for p in points})
    sims = []
    for c in corners:
        for perm in itertools.permutations(range(m)):
            cur = list(c)
            path = [lookup.get(tuple(cur))]
            for ax in perm:
                cur[ax] += stride
                path.append(lookup.get(tuple(cur)))
            if all(p is not None for p in path):
                sims.append(path)
    return sims


def _oriented(points: np.ndarray, sims: list[list[int]]) -> list[tuple[list[int], int]]:
    out = []
    for s in sims:
        P = points[s]
        det = np.linalg.det(P[1:] - P[0]) if len(s) > 1 else 1.0
        out.append((s, 1 if det > 0 else -1))
    return out


def verify_graph_identity(
    N: NormalField,
    surface: GraphSurface | None = None,
    f: SheetField | None = None,
    probes: int = 12,
    seed: int = 0,
    stride: int = 4,
) -> GraphIdentityReport:
    """Compare the reparametrized cloud and chain with the graph of ``f`` inside the tube.

    (a) symmetric Hausdorff distance between ``{Phi(x) + atoms}`` and the
    samples of ``Gr(f)`` whose projection lands on ``Sigma`` within ``c0``;
    (b) signed crossing counts of both chains with random normal planes.
    """
    surface = N.surface if surface is None else surface
    f = N.f if f is None else f
    m, n, s, h = surface.m, surface.n, surface.s, N.h

    cloud_F = (surface.Phi(N.points)[:, None, :] + N.fibers.displacements).reshape(-1, m + n)

    Y, Yedges, _ = ball_grid(m, s, N.resolution, radius=N.r - h)
    G_vals = f.values(Y)  # (M, L, n)
    graph_pts = np.concatenate([np.hstack([Y, G_vals[:, l]]) for l in range(len(f.sheets))])
    Z = project_to_surface(surface, graph_pts)
    offset = np.linalg.norm(graph_pts - surface.Phi(Z), axis=1)
    in_tube = (np.linalg.norm(Z, axis=1) <= s * (1 + 1e-12)) & (offset < N.c0)
    cloud_G = graph_pts[in_tube]
    d_FG = cKDTree(graph_pts).query(cloud_F)[0].max()
    d_GF = cKDTree(cloud_F).query(cloud_G)[0].max() if len(cloud_G) else 0.0
    hausdorff = float(max(d_FG, d_GF))
    bound = h * (1.0 + N.smallness.lipschitz)

    # chains over coarse triangulations
    sims_F = _oriented(N.points, _kuhn_simplices(N.points, h, stride))
    base = surface.Phi(N.points)
    terms_F = []
    for sim, sign in sims_F:
        for l, mult in enumerate(f.mults):
            terms_F.append((base[sim] + N.fibers.displacements[sim, l], sign * mult))
    T_F = chains.SimplicialChain(m, m + n, terms_F)

    point_in_tube = in_tube.reshape(len(f.sheets), len(Y))
    sims_G = _oriented(Y, _kuhn_simplices(Y, h, stride))
    terms_G = []
    for sim, sign in sims_G:
        for l, mult in enumerate(f.mults):
            if np.all(point_in_tube[l, sim]):
                terms_G.append((np.hstack([Y[sim], G_vals[sim, l]]), sign * mult))
    G_f = chains.SimplicialChain(m, m + n, terms_G)

    rng = np.random.default_rng(seed)
    counts_F, counts_G = [], []
    for _ in range(probes):
        while True:
            z = rng.uniform(-s / 2, s / 2, size=m)
            if np.linalg.norm(z) <= s / 2:
                break
        origin = surface.Phi(z)[0]
        frame = normal_frame(surface, z)
        counts_F.append(chains.plane_intersection_number(T_F, origin, frame))
        counts_G.append(chains.plane_intersection_number(G_f, origin, frame))
    return GraphIdentityReport(hausdorff, float(bound), counts_F, counts_G, int(in_tube.sum()))


# ----------------------------------------------------------------------------
# scenarios


@dataclass
class ReparamScenario:
    surface: GraphSurface
    f: SheetField
    s: float
    r: float
    c0: float
    resolution: int

    @classmethod
    def from_json(cls, doc: dict, resolution: int | None = None) -> "ReparamScenario":
        m, n = int(doc["m"]), int(doc["n"])
        phi = Polynomial.from_json(doc["phi"]) if doc.get("phi") else Polynomial.zero(m, n)
        f = SheetField.from_json(doc["sheets"])
        if (phi.m, phi.n) != (m, n) or (f.m, f.n) != (m, n):
            raise ValueError("phi and sheets must map R^m to R^n")
        if "Q" in doc and int(doc["Q"]) != f.Q:
            raise ValueError(f"declared Q={doc['Q']} but sheet multiplicities sum to {f.Q}")
        res = int(resolution or doc.get("mesh", {}).get("resolution", 33))
        s, r, c0 = float(doc["s"]), float(doc["r"]), float(doc["c0"])
        if not (0 < s < r) or c0 <= 0:
            raise ValueError("need 0 < s < r and c0 > 0")
        surface = GraphSurface(phi, s, c_bar=float(doc.get("c_bar", 1.0)), resolution=res)
        return cls(surface, f, s, r, c0, res)

    def to_json(self) -> dict:
        return {
            "m": self.surface.m,
            "n": self.surface.n,
            "Q": self.f.Q,
            "s": self.s,
            "r": self.r,
            "c0": self.c0,
            "phi": self.surface.phi.to_json(),
            "sheets": self.f.to_json(),
            "mesh": {"resolution": self.resolution},
        }
