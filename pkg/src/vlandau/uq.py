"""Parameter sweeps in z: collocation, gPC projection, z-derivatives.

The scalar parameter z lives on [-1, 1] with the uniform measure.  The
deterministic solve runs at Gauss-Legendre nodes; smooth quantities of
interest are then (a) projected onto the orthonormal Legendre basis
phi_m(z) = sqrt(2m+1) P_m(z) (coefficient decay certifies smooth
z-dependence) and (b) differentiated in z at z = 0 by differentiating
the collocation interpolant.  Derivatives of the interpolant at a point
are fixed linear combinations of the node values, so ensemble
post-processing streams over nodes without retaining per-node
phase-space tables.

Two independent derivative estimators are kept deliberately distinct:
the spectral one differentiates the full-degree interpolant via its
Legendre series, the finite-difference one applies exact
unequally-spaced difference weights on the few nodes nearest z = 0.
Their agreement is a reported verification quantity, not an assumption.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from .fields import FieldTable, weighted_norm, weighted_sup
from .params import DampingParams
from .profiles import ProfileSpec, shifted_difference, sup_gradient
from .scattering import SolveResult, TimeGrid, PhaseGrid, picard_solve, \
    solve_characteristics


class CollocationError(RuntimeError):
    """A node-level failure during an ensemble run; carries the node index."""

    def __init__(self, node_index: int, z: float, cause: Exception):
        super().__init__(f"node {node_index} (z = {z:.6g}) failed: {cause}")
        self.node_index = node_index
        self.z = z
        self.cause = cause


def gauss_legendre_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes (increasing) and weights on [-1, 1]."""
    if n < 1:
        raise ValueError("need at least one node")
    z, w = npleg.leggauss(int(n))
    return z, w


def fd_weights(nodes, x0: float, max_order: int) -> np.ndarray:
    """Finite-difference weights on arbitrary nodes (Fornberg's recursion).

    Returns weights[d, j] such that sum_j weights[d, j] f(nodes[j])
    approximates f^(d)(x0), exactly for polynomials of degree
    < len(nodes), for every d <= max_order.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.shape[0]
    if max_order >= n:
        raise ValueError("derivative order must be below the node count")
    c = np.zeros((max_order + 1, n))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, max_order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for d in range(mn, 0, -1):
                    c[d, i] = c1 * (d * c[d - 1, i - 1] - c5 * c[d, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for d in range(mn, 0, -1):
                c[d, j] = (c4 * c[d, j] - d * c[d - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def collocation_derivative(nodes, values, k: int, at: float = 0.0) -> np.ndarray:
    """d^k/dz^k of the interpolant through (nodes, values), at a point.

    values has the node axis first; the result drops that axis.  k = 0
    evaluates the interpolant itself.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if k >= nodes.shape[0]:
        raise ValueError("derivative order must be below the node count")
    w = fd_weights(nodes, at, k)[k]
    return np.tensordot(w, values, axes=(0, 0))


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZEnsemble:
    """Per-node solve results over a quadrature node set in z."""

    nodes: tuple[float, ...]
    weights: tuple[float, ...]
    results: tuple[SolveResult, ...]
    phase: PhaseGrid

    def __post_init__(self):
        if not (len(self.nodes) == len(self.weights) == len(self.results)):
            raise ValueError("nodes, weights and results must align")
        if any(b <= a for a, b in zip(self.nodes, self.nodes[1:])):
            raise ValueError("nodes must be strictly increasing")
        sigs = {r_setup_signature(r) for r in self.results}
        if len(sigs) > 1:
            raise ValueError("per-node solves used differing grids or params")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def tgrid(self) -> TimeGrid:
        return self.results[0].field.tgrid

    @property
    def params(self) -> DampingParams:
        return self.results[0].params

    def field_stack(self) -> np.ndarray:
        """Node-major stack of field values, shape (n_nodes, nt, nx)."""
        return np.stack([r.field.values for r in self.results])

    def manifest(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "weights": list(self.weights),
            "setup_signature": r_setup_signature(self.results[0]),
            "per_node": [r.manifest() for r in self.results],
        }


def r_setup_signature(result: SolveResult) -> str:
    """Hash of params + grid shape, for the shared-setup invariant."""
    ident = {
        "params": result.params.as_dict(),
        "t0": result.field.tgrid.t0,
        "t_end": result.field.tgrid.t_end,
        "nt": len(result.field.tgrid),
        "nx": result.field.xgrid.n,
        "method": result.method,
    }
    blob = json.dumps(ident, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_collocation(spec: ProfileSpec, params: DampingParams,
                    tgrid: TimeGrid, phase: PhaseGrid, n_z: int = 9,
                    nodes=None, weights=None, tol: float = 1e-10,
                    max_iter: int = 30, inner_tol: float = 1e-12,
                    max_inner: int = 50, method: str = "split",
                    keep_tables: bool = False) -> ZEnsemble:
    """Deterministic solve at every z node; aborts naming a failing node."""
    if nodes is None:
        nodes, weights = gauss_legendre_nodes(n_z)
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    results = []
    for j, z in enumerate(nodes):
        try:
            results.append(picard_solve(
                spec, params, float(z), tgrid, phase, tol=tol,
                max_iter=max_iter, inner_tol=inner_tol, max_inner=max_inner,
                method=method, keep_tables=keep_tables))
        except Exception as err:
            raise CollocationError(j, float(z), err) from err
    return ZEnsemble(nodes=tuple(float(z) for z in nodes),
                     weights=tuple(float(w) for w in weights),
                     results=tuple(results), phase=phase)


# ---------------------------------------------------------------------------
# gPC projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GpcTable:
    """Coefficients of the field in the orthonormal Legendre basis.

    coefficients[m] are the (nt, nx) tables of
    c_m = (1/2) sum_j w_j sqrt(2m+1) P_m(z_j) E(.,.,z_j),
    so that E(z) ~ sum_m c_m sqrt(2m+1) P_m(z).
    """

    nodes: tuple[float, ...]
    coefficients: np.ndarray            # (n_modes, nt, nx)
    tgrid: TimeGrid
    xs: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.coefficients.shape[0]

    def mode_magnitudes(self) -> np.ndarray:
        """max |c_m| per mode; geometric decay certifies z-smoothness."""
        return np.abs(self.coefficients).reshape(self.n_modes, -1).max(axis=1)

    def decay_rate(self) -> float:
        """Least-squares slope of log10 |c_m| vs m over nonzero modes."""
        mags = self.mode_magnitudes()
        keep = mags > 0
        if keep.sum() < 2:
            return 0.0
        m = np.arange(self.n_modes, dtype=float)[keep]
        return float(np.polyfit(m, np.log10(mags[keep]), 1)[0])

    def reconstruct(self, z: float) -> np.ndarray:
        basis = _orthonormal_legendre(np.asarray([z]), self.n_modes)[0]
        return np.tensordot(basis, self.coefficients, axes=(0, 0))


def _orthonormal_legendre(z: np.ndarray, n_modes: int) -> np.ndarray:
    """phi_m(z_j) matrix, shape (len(z), n_modes)."""
    vander = npleg.legvander(z, n_modes - 1)
    scale = np.sqrt(2.0 * np.arange(n_modes) + 1.0)
    return vander * scale[None, :]


def project_stack(nodes, weights, stack) -> np.ndarray:
    """Orthonormal-Legendre projection of node-major values.

    Returns coefficients c_m = (1/2) sum_j w_j phi_m(z_j) stack[j],
    shape (n_nodes,) + stack.shape[1:].
    """
    z = np.asarray(nodes, dtype=float)
    w = np.asarray(weights, dtype=float)
    stack = np.asarray(stack, dtype=float)
    basis = _orthonormal_legendre(z, len(z))            # (n, m)
    proj = 0.5 * (basis * w[:, None]).T                 # (m, n)
    return np.tensordot(proj, stack, axes=(1, 0))


def spectral_derivative_stack(nodes, weights, stack, k: int) -> np.ndarray:
    """d^k/dz^k at z = 0 of the interpolant through node-major values,
    computed by differentiating its Legendre series (the projection is
    exact for the interpolant at Gauss quadrature order)."""
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    coeffs = project_stack(nodes, weights, stack)
    extra = (1,) * (coeffs.ndim - 1)
    scale = np.sqrt(2.0 * np.arange(coeffs.shape[0]) + 1.0)
    series = coeffs * scale.reshape((-1,) + extra)
    if k:
        series = npleg.legder(series, m=k, axis=0)
    return npleg.legval(0.0, series, tensor=True)


def gpc_coefficients(ensemble: ZEnsemble) -> GpcTable:
    """Project node fields onto the orthonormal basis with the node weights."""
    coeffs = project_stack(ensemble.nodes, ensemble.weights,
                           ensemble.field_stack())
    return GpcTable(nodes=ensemble.nodes, coefficients=coeffs,
                    tgrid=ensemble.tgrid, xs=ensemble.results[0].field.xgrid.points)


def write_gpc_csv(table: GpcTable, path) -> None:
    """Long-format CSV (m, x, t, coefficient), m-major then t then x."""
    fmt = "%.17g"
    lines = ["m,x,t,coefficient"]
    times = table.tgrid.times
    for m in range(table.n_modes):
        for n, t in enumerate(times):
            row = table.coefficients[m, n]
            for i, x in enumerate(table.xs):
                lines.append("%d,%s,%s,%s" % (m, fmt % x, fmt % t,
                                              fmt % row[i]))
    with open(str(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# z-derivatives
# ---------------------------------------------------------------------------

def z_derivative(ensemble: ZEnsemble, k: int) -> FieldTable:
    """d^k/dz^k of the field at z = 0 via the collocation interpolant.

    The interpolant is represented in the Legendre basis (its gPC
    projection, exact at this quadrature order) and differentiated
    analytically.  k = 0 evaluates the interpolant at 0.
    """
    n = ensemble.n_nodes
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    if k > 0 and k > n - 2:
        raise ValueError(
            f"order-{k} differentiation of a {n}-node ensemble is "
            "unstable; need at least k+2 nodes")
    vals = spectral_derivative_stack(ensemble.nodes, ensemble.weights,
                                     ensemble.field_stack(), k)
    ref = ensemble.results[0].field
    return FieldTable(ref.tgrid, ref.xgrid, vals)


def z_derivative_fd(ensemble: ZEnsemble, k: int, stencil: int = 5) -> FieldTable:
    """d^k/dz^k of the field at z = 0 by unequally-spaced differences
    on the `stencil` nodes nearest 0 (the independent cross-estimator)."""
    n = ensemble.n_nodes
    if k < 1 or k > n - 2:
        raise ValueError("need 1 <= k <= n_nodes - 2")
    stencil = min(max(stencil, k + 1), n)
    z = np.asarray(ensemble.nodes)
    order = np.argsort(np.abs(z))[:stencil]
    order = np.sort(order)
    sub_nodes = z[order]
    stack = ensemble.field_stack()[order]
    vals = collocation_derivative(sub_nodes, stack, k, at=0.0)
    ref = ensemble.results[0].field
    return FieldTable(ref.tgrid, ref.xgrid, vals)


# ---------------------------------------------------------------------------
# empirical theorem/corollary reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TheoremReport:
    """Weighted norms of the z-derivative fields at z = 0.

    norms[k] = |d^k_z E|_{a,t0} for k = 0..K; agreement[k] is the
    relative weighted-norm difference between the spectral and
    finite-difference estimators (k >= 1); drift[k] is the relative
    change under node refinement when a refined ensemble was supplied.
    """

    norms: tuple[float, ...]
    agreement: dict
    drift: dict
    stability_tol: float = 0.05

    @property
    def passed(self) -> bool:
        finite = all(math.isfinite(v) for v in self.norms)
        stable = all(d <= self.stability_tol for d in self.drift.values())
        return finite and stable

    def as_dict(self) -> dict:
        return {
            "norms": list(self.norms),
            "agreement": {str(k): v for k, v in self.agreement.items()},
            "drift": {str(k): v for k, v in self.drift.items()},
            "stability_tol": self.stability_tol,
            "passed": self.passed,
        }


def _relative_weighted_diff(tab_a: FieldTable, tab_b: FieldTable,
                            a: float, floor: float = 0.0) -> float:
    # `floor` is the roundoff scale of the estimates; quantities below it
    # are indistinguishable from zero, so their disagreement is reported
    # relative to the floor instead of to themselves
    base = max(weighted_norm(tab_a, a).value, floor)
    diff = weighted_norm(tab_a.with_values(tab_a.values - tab_b.values),
                         a).value
    if base == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / base


def check_theorem_bounds(ensemble: ZEnsemble, K: int,
                         refined: ZEnsemble | None = None) -> TheoremReport:
    """Report |d^k_z E|_{a,t0} for k <= K with estimator and refinement
    cross-checks; "bounded" is operationalized as refinement stability."""
    a = ensemble.params.a
    k_max = min(K, ensemble.n_nodes - 2)
    norms = []
    agreement = {}
    drift = {}
    floor = 0.0
    for k in range(k_max + 1):
        tab = z_derivative(ensemble, k)
        norms.append(weighted_norm(tab, a).value)
        if k == 0:
            # derivative norms below the projection roundoff of the base
            # field are numerically zero; comparisons between them carry
            # no information
            floor = 1e-13 * norms[0]
        if k >= 1:
            agreement[k] = _relative_weighted_diff(
                tab, z_derivative_fd(ensemble, k), a, floor=floor)
        if refined is not None:
            ref_tab = z_derivative(refined, k)
            ref_norm = weighted_norm(ref_tab, a).value
            denom = max(norms[k], floor)
            if denom == 0.0:
                drift[k] = 0.0 if ref_norm == 0.0 else math.inf
            else:
                drift[k] = abs(ref_norm - norms[k]) / denom
    return TheoremReport(norms=tuple(norms), agreement=agreement, drift=drift)


@dataclass(frozen=True)
class CorollaryReport:
    """Weighted-in-t norms of the transported-profile residual
    D(x,v,t,z) = f*(x,v,z) - f*(X - V t, V, z) and its z-derivatives.

    node_norms[j] = |D(., z_j)|_{a,t0,1}; node_ratios[j] compares against
    the first-order bound 3 |grad f*(z_j)|_Linf |E(z_j)|_{a,t0} / a.
    derivative_norms[k] = |d^k_z D at 0|_{a,t0,1}, with refinement drift
    when a refined ensemble is supplied.
    """

    node_norms: tuple[float, ...]
    node_ratios: tuple[float, ...]
    derivative_norms: tuple[float, ...]
    comparison_bounds: tuple[float, ...]
    drift: dict
    stability_tol: float = 0.05

    @property
    def k0_ratio(self) -> float:
        return max(self.node_ratios) if self.node_ratios else 0.0

    @property
    def passed(self) -> bool:
        finite = all(math.isfinite(v) for v in self.derivative_norms)
        stable = all(d <= self.stability_tol for d in self.drift.values())
        return finite and stable and self.k0_ratio <= 1.0

    def as_dict(self) -> dict:
        return {
            "node_norms": list(self.node_norms),
            "node_ratios": list(self.node_ratios),
            "k0_worst_ratio": self.k0_ratio,
            "derivative_norms": list(self.derivative_norms),
            "comparison_bounds": list(self.comparison_bounds),
            "drift": {str(k): v for k, v in self.drift.items()},
            "stability_tol": self.stability_tol,
            "passed": self.passed,
        }


def _corollary_residuals(ensemble: ZEnsemble, spec: ProfileSpec,
                         inner_tol: float = 1e-12, max_inner: int = 50):
    """Yield (j, z, residual array (nt, nx, nv), |E|_{a,t0}) per node.

    The residual is evaluated in Lagrangian form at the phase nodes:
    f(X, V, t) = f*(x, v) by definition of the transported solution, so
    D = f* - f* o (X - Vt, V) needs only the forward tables.  It is
    assembled by the profile's exact shifted-difference identities:
    X - Vt = x + (dX - t dV) and V = v + dV with tiny arguments.
    """
    phase = ensemble.phase
    a = ensemble.params.a
    x = np.repeat(phase.xgrid.points, phase.nv)
    v = np.tile(phase.v, phase.xgrid.n)
    for j, (z, result) in enumerate(zip(ensemble.nodes, ensemble.results)):
        traj = result.traj
        if traj is None:
            traj = solve_characteristics(result.field, phase, tol=inner_tol,
                                         max_inner=max_inner,
                                         a=ensemble.params.a)
        nt = len(traj.tgrid)
        t = traj.tgrid.times[:, None]
        dx_arg = traj.dX.reshape(nt, -1) - t * traj.dV.reshape(nt, -1)
        dv_arg = traj.dV.reshape(nt, -1)
        delta = -shifted_difference(spec, x[None, :], v[None, :],
                                    dx_arg, dv_arg, z)
        norm_e = weighted_norm(result.field, a).value
        yield j, z, delta.reshape(nt, phase.xgrid.n, phase.nv), norm_e


def check_corollary(ensemble: ZEnsemble, spec: ProfileSpec,
                    refined: ZEnsemble | None = None,
                    inner_tol: float = 1e-12,
                    max_inner: int = 50) -> CorollaryReport:
    """Evaluate the residual norms and their z-derivatives at z = 0.

    Derivatives of the interpolant at 0 are fixed linear combinations of
    the per-node residual tables, so nodes are streamed and only K+1
    accumulator tables are held.
    """

    def survey(ens):
        params = ens.params
        a, t0 = params.a, params.t0
        k_max = min(params.K, ens.n_nodes - 2)
        dw = fd_weights(np.asarray(ens.nodes), 0.0, k_max)
        accum = None
        node_norms = []
        node_ratios = []
        times = ens.tgrid.times
        for j, z, delta, norm_e in _corollary_residuals(
                ens, spec, inner_tol, max_inner):
            sup = np.abs(delta).reshape(len(times), -1).max(axis=1)
            norm = weighted_sup(times, sup, a, moment=1, t_start=t0).value
            node_norms.append(norm)
            grad = sup_gradient(spec, z)
            bound = 3.0 * grad * norm_e / a
            node_ratios.append(norm / bound if bound > 0
                               else (0.0 if norm == 0.0 else math.inf))
            if accum is None:
                accum = np.zeros((k_max + 1,) + delta.shape)
            for k in range(k_max + 1):
                accum[k] += dw[k, j] * delta
        deriv_norms = []
        for k in range(k_max + 1):
            sup = np.abs(accum[k]).reshape(len(times), -1).max(axis=1)
            deriv_norms.append(
                weighted_sup(times, sup, a, moment=1, t_start=t0).value)
        return node_norms, node_ratios, deriv_norms

    node_norms, node_ratios, deriv_norms = survey(ensemble)
    drift = {}
    if refined is not None:
        _, _, refined_norms = survey(refined)
        for k in range(min(len(deriv_norms), len(refined_norms))):
            if deriv_norms[k] == 0.0:
                drift[k] = 0.0 if refined_norms[k] == 0.0 else math.inf
            else:
                drift[k] = abs(refined_norms[k] - deriv_norms[k]) / deriv_norms[k]

    # First-order comparison scale per derivative order:
    # sup|grad d^k_z f*| . |E|_{a,t0} . ((2/a) t + 1/a) e^{-at}, measured in
    # the same weighted norm, which collapses to G_k N (2 + 1/t0) / a.
    params = ensemble.params
    norm_e0 = weighted_norm(z_derivative(ensemble, 0), params.a).value
    bounds = []
    dspec = spec
    for k in range(len(deriv_norms)):
        g_k = sup_gradient(dspec, 0.0)
        bounds.append(g_k * norm_e0 * (2.0 + 1.0 / params.t0) / params.a)
        dspec = dspec.z_derivative()
    return CorollaryReport(node_norms=tuple(node_norms),
                           node_ratios=tuple(node_ratios),
                           derivative_norms=tuple(deriv_norms),
                           comparison_bounds=tuple(bounds), drift=drift)
