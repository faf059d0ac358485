"""Principal eigenfunctions, their products, and composition-operator checks.

A layer's s-th principal eigenfunction is the coordinate functional in its
eigenbasis: psi(x_i) = (s-th row of Vinv_i) . x_i, an eigenfunction of the
decoupled layer dynamics at the s-th eigenvalue (magnitude-descending
order; index 0 is the constant function 1). Extended to the full state
space and composed with the perturbation map, these become exact
eigenfunctions of the coupled dynamics, which this module verifies by
residual sweeps and by generalized Laplace (Cesaro) averaging.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import linalg
from .cascade import CascadeSystem, StateVector
from .errors import (
    DeflationIncompleteError,
    DimensionMismatchError,
    NotPeripheralError,
    SameLayerProductError,
)
from .orbits import compute_error_series, iterate_lin
from .perturbation import PerturbationData, apply_perturbation

PERIPHERAL_TOL = 1e-9


@dataclass(frozen=True)
class PrincipalEigenfunction:
    """Coordinate functional of one layer's eigenbasis; constant 1 for index 0."""

    layer: int
    index: int
    coeff_row: np.ndarray | None
    eigenvalue: complex

    def __call__(self, x_layer: np.ndarray) -> complex:
        if self.coeff_row is None:
            return 1.0 + 0.0j
        return complex(self.coeff_row @ np.asarray(x_layer, dtype=np.complex128))

    @property
    def functional_norm(self) -> float:
        """Operator norm of the linear functional (2-norm of the row)."""
        if self.coeff_row is None:
            return 0.0
        return float(np.linalg.norm(self.coeff_row))


def principal_eigenfunction(sys: CascadeSystem, i: int, s: int) -> PrincipalEigenfunction:
    """The s-th principal eigenfunction of layer i (1-based; s = 0 gives the
    constant function at eigenvalue 1)."""
    if not 1 <= i <= sys.n:
        raise IndexError(f"layer {i} out of range 1..{sys.n}")
    if not 0 <= s <= sys.dims[i - 1]:
        raise IndexError(f"index {s} out of range 0..{sys.dims[i - 1]} for layer {i}")
    if s == 0:
        return PrincipalEigenfunction(layer=i, index=0, coeff_row=None, eigenvalue=1.0 + 0.0j)
    d = sys.eig_of(i)
    return PrincipalEigenfunction(
        layer=i,
        index=s,
        coeff_row=d.Vinv[s - 1].copy(),
        eigenvalue=complex(d.eigenvalues[s - 1]),
    )


@dataclass(frozen=True)
class ProductEigenfunction:
    """Factorwise product of per-layer principal eigenfunctions.

    Stored as the multi-index (s_1..s_n) plus the non-constant factors;
    evaluation is the pointwise product of factor evaluations and the
    eigenvalue is the product of factor eigenvalues.
    """

    multi_index: tuple[int, ...]
    factors: tuple[PrincipalEigenfunction, ...]
    eigenvalue: complex

    @property
    def n(self) -> int:
        return len(self.multi_index)

    def __call__(self, x: StateVector) -> complex:
        if len(x) != self.n:
            raise DimensionMismatchError(
                f"state has {len(x)} layers, eigenfunction expects {self.n}"
            )
        val = 1.0 + 0.0j
        for f in self.factors:
            val *= f(x.layer(f.layer))
        return val

    def product(self, other: "ProductEigenfunction") -> "ProductEigenfunction":
        """Factorwise product; rejects two non-constant factors in one layer."""
        if self.multi_index == ():
            return other
        if self.n != other.n:
            raise DimensionMismatchError("eigenfunctions live on different cascades")
        for k, (a, b) in enumerate(zip(self.multi_index, other.multi_index)):
            if a != 0 and b != 0:
                raise SameLayerProductError(
                    f"both factors are non-constant in layer {k + 1} "
                    f"(indices {a} and {b}); the product leaves the "
                    "product-eigenfunction family"
                )
        merged = tuple(a + b for a, b in zip(self.multi_index, other.multi_index))
        return ProductEigenfunction(
            multi_index=merged,
            factors=self.factors + other.factors,
            eigenvalue=self.eigenvalue * other.eigenvalue,
        )

    def __mul__(self, other: "ProductEigenfunction") -> "ProductEigenfunction":
        return self.product(other)


def extend_to_cascade(pe: PrincipalEigenfunction, n: int) -> ProductEigenfunction:
    """Extend a layer eigenfunction to the full state space: it reads only
    its own layer and is constant in all others."""
    if not 1 <= pe.layer <= n:
        raise IndexError(f"layer {pe.layer} out of range 1..{n}")
    multi = tuple(pe.index if k == pe.layer - 1 else 0 for k in range(n))
    factors = (pe,) if pe.index != 0 else ()
    return ProductEigenfunction(
        multi_index=multi, factors=factors, eigenvalue=complex(pe.eigenvalue)
    )


def product_eigenfunction(sys: CascadeSystem, multi_index: Sequence[int]) -> ProductEigenfunction:
    """Build the product eigenfunction for a full multi-index (s_1..s_n)."""
    if len(multi_index) != sys.n:
        raise DimensionMismatchError(
            f"multi-index length {len(multi_index)} != layer count {sys.n}"
        )
    out = ProductEigenfunction(
        multi_index=tuple(0 for _ in range(sys.n)), factors=(), eigenvalue=1.0 + 0.0j
    )
    for i, s in enumerate(multi_index, start=1):
        if s != 0:
            out = out.product(extend_to_cascade(principal_eigenfunction(sys, i, s), sys.n))
    return out


@dataclass(frozen=True)
class ComposedObservable:
    """base(pre_map(x)); pre_map None means identity."""

    base: Callable[[StateVector], complex]
    pre_map: Callable[[StateVector], StateVector] | None = None
    pre_map_name: str = ""

    def __call__(self, x: StateVector) -> complex:
        y = x if self.pre_map is None else self.pre_map(x)
        return complex(self.base(y))


def compose_with_perturbation(
    f: Callable[[StateVector], complex], pd: PerturbationData
) -> ComposedObservable:
    return ComposedObservable(
        base=f, pre_map=lambda x: apply_perturbation(pd, x), pre_map_name="pert"
    )


def koopman_apply(
    step: Callable[[StateVector], StateVector],
    f: Callable[[StateVector], complex],
    t: int,
    x: StateVector,
) -> complex:
    """Composition-operator action: evaluate f on the t-step image of x."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    y = x
    for _ in range(t):
        y = step(y)
    return complex(f(y))


# ---------------------------------------------------------------------------
# Eigenfunction residuals for the coupled dynamics
# ---------------------------------------------------------------------------


def eigenfunction_residuals(
    sys: CascadeSystem,
    pd: PerturbationData,
    sample_points: Sequence[StateVector],
    horizon: int = 20,
) -> dict[tuple[int, int], float]:
    """Max scaled eigenfunction residual for every (layer, index >= 1) pair.

    For each sample x and t in 1..horizon the residual of f = psi o pert is
    |f(orbit_t(x)) - lambda^t f(x)| / max(1, |f(x)|); exactness of the
    construction means these stay at rounding level. Traces are shared
    across all (i, s), so the sweep costs one orbit per sample.
    """
    out = {(i, s): 0.0 for i in range(1, sys.n + 1) for s in range(1, sys.dims[i - 1] + 1)}
    for x in sample_points:
        trace = iterate_lin(sys, x, horizon)
        pert_states = [apply_perturbation(pd, st) for st in trace.states]
        base = pert_states[0]
        for i in range(1, sys.n + 1):
            d = sys.eig_of(i)
            f0 = d.Vinv @ base.layer(i)  # all indices s at once
            lam_pow = np.ones(sys.dims[i - 1], dtype=np.complex128)
            for t in range(1, horizon + 1):
                lam_pow = lam_pow * d.eigenvalues
                ft = d.Vinv @ pert_states[t].layer(i)
                resid = np.abs(ft - lam_pow * f0) / np.maximum(1.0, np.abs(f0))
                for s in range(1, sys.dims[i - 1] + 1):
                    key = (i, s)
                    if resid[s - 1] > out[key]:
                        out[key] = float(resid[s - 1])
    return out


def eigenfunction_residual(
    sys: CascadeSystem,
    pd: PerturbationData,
    i: int,
    s: int,
    sample_points: Sequence[StateVector],
    horizon: int = 20,
) -> float:
    """Residual sweep for a single (layer, index) pair."""
    if not 1 <= i <= sys.n:
        raise IndexError(f"layer {i} out of range 1..{sys.n}")
    if not 1 <= s <= sys.dims[i - 1]:
        raise IndexError(f"index {s} out of range 1..{sys.dims[i - 1]}")
    return eigenfunction_residuals(sys, pd, sample_points, horizon)[(i, s)]


# ---------------------------------------------------------------------------
# Generalized Laplace (Cesaro) averages
# ---------------------------------------------------------------------------


def _expansion_rows(
    sys: CascadeSystem, pd: PerturbationData, upto_layer: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked exact-eigenfunction rows for the subsystem of layers 1..upto_layer.

    Row k of the returned matrix evaluates the k-th pert-composed principal
    eigenfunction on the stacked subsystem state; the parallel vector holds
    the matching eigenvalues.
    """
    dims = sys.dims[:upto_layer]
    total = sum(dims)
    offsets = np.concatenate(([0], np.cumsum(dims)))
    P_sub = pd.as_matrix()[:total, :total]
    rows = np.zeros((total, total), dtype=np.complex128)
    lams = np.zeros(total, dtype=np.complex128)
    for j in range(1, upto_layer + 1):
        d = sys.eig_of(j)
        rows[offsets[j - 1] : offsets[j], :] = d.Vinv @ P_sub[offsets[j - 1] : offsets[j], :]
        lams[offsets[j - 1] : offsets[j]] = d.eigenvalues
    return rows, lams


def _sub_step(sys: CascadeSystem, upto_layer: int, w: list[np.ndarray]) -> list[np.ndarray]:
    """One coupled step restricted to layers 1..upto_layer."""
    out = []
    for i in range(1, upto_layer + 1):
        acc = sys.L[i - 1] @ w[i - 1]
        for (ii, j), c in sys.couplings.items():
            if ii == i and j <= upto_layer:
                acc = acc + c @ w[j - 1]
        out.append(acc)
    return out


def _laplace_terms(
    sys: CascadeSystem,
    row: np.ndarray,
    upto_layer: int,
    lam: complex,
    x: StateVector,
    N: int,
) -> np.ndarray:
    """Terms lam^-t * row . stacked(orbit_t(x), layers 1..upto_layer), t < N.

    Computed on the rescaled orbit w_(t+1) = step(w_t) / lam, so no explicit
    lam^-t is formed; w stays bounded whenever every mode the row can see
    has modulus <= |lam|.
    """
    terms = np.zeros(N, dtype=np.complex128)
    w = [v.copy() for v in x.layers[:upto_layer]]
    lam_inv = 1.0 / lam
    # Overflow of the rescaled orbit is an expected failure mode (a dropped
    # fast mode dominating); it is caught by the finite check and raised.
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(N):
            stacked = np.concatenate(w)
            if not np.all(np.isfinite(stacked)):
                raise DeflationIncompleteError(
                    f"rescaled orbit overflowed at t={t}; a component faster "
                    "than |lambda| dominates"
                )
            terms[t] = complex(row @ stacked)
            if t + 1 < N:
                w = [lam_inv * v for v in _sub_step(sys, upto_layer, w)]
    return terms


def laplace_average(
    sys: CascadeSystem,
    pd: PerturbationData,
    i: int,
    s: int,
    x: StateVector,
    N: int,
    deflate: bool = False,
) -> complex:
    """Partial Cesaro average (1/N) sum_t lam^-t f(orbit_t(x)) for the
    extended principal eigenfunction f of (layer i, index s).

    Converges to (f o pert)(x). Without deflation the eigenvalue must be
    peripheral (|lambda| equal to the layer norm within PERIPHERAL_TOL);
    with deflation, components of f along exact eigenfunctions of strictly
    larger modulus are removed first.

    Deflation subtracts the fast components analytically but still
    evaluates along the raw orbit, so rounding noise in the terms grows
    like (mu_max / |lambda|)^t; past roughly t = 36 / log(mu_max/|lambda|)
    the terms are polluted and DeflationIncompleteError is raised.
    """
    if not 1 <= i <= sys.n:
        raise IndexError(f"layer {i} out of range 1..{sys.n}")
    if not 1 <= s <= sys.dims[i - 1]:
        raise IndexError(f"index {s} out of range 1..{sys.dims[i - 1]}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if x.dims != sys.dims:
        raise DimensionMismatchError(f"state dims {x.dims} != system dims {sys.dims}")

    lam = complex(sys.eig_of(i).eigenvalues[s - 1])
    peripheral = abs(abs(lam) - sys.norms[i - 1]) <= PERIPHERAL_TOL
    if not peripheral and not deflate:
        raise NotPeripheralError(
            f"|eigenvalue| = {abs(lam):.12g} differs from layer norm "
            f"{sys.norms[i - 1]:.12g}; enable deflation to average here"
        )

    dims = sys.dims[:i]
    total = sum(dims)
    offsets = np.concatenate(([0], np.cumsum(dims)))
    raw_row = np.zeros(total, dtype=np.complex128)
    raw_row[offsets[i - 1] : offsets[i]] = sys.eig_of(i).Vinv[s - 1]

    if deflate:
        rows, lams = _expansion_rows(sys, pd, i)
        coeffs = np.linalg.solve(rows.T, raw_row)
        keep = np.abs(lams) <= abs(lam) + PERIPHERAL_TOL
        row = (coeffs * keep) @ rows
        idx = offsets[i - 1] + s - 1
        phi_at_x = rows @ np.concatenate(x.layers[:i])
        expected = complex(phi_at_x[idx])
        others = keep.copy()
        others[idx] = False
        # Exact ceiling of the legitimate part: the kept non-target
        # components never exceed their t=0 magnitudes in modulus.
        ceiling = float(np.sum(np.abs(coeffs[others] * phi_at_x[others])))
        terms = _laplace_terms(sys, row, i, lam, x, N)
        errs = np.abs(terms - expected)
        if float(np.max(errs)) > 10.0 * ceiling + 1e3 * (1.0 + abs(expected)):
            raise DeflationIncompleteError(
                f"deflated terms grew to {np.max(errs):.3e}, far beyond the "
                f"legitimate component ceiling {ceiling:.3e}; rounding noise "
                "along the discarded fast modes has taken over"
            )
        return complex(np.mean(terms))

    terms = _laplace_terms(sys, raw_row, i, lam, x, N)
    return complex(np.mean(terms))


def deflated_laplace_average(
    sys: CascadeSystem,
    pd: PerturbationData,
    i: int,
    s: int,
    x: StateVector,
    N: int,
) -> complex:
    """Laplace average with faster eigenfunction components projected out."""
    return laplace_average(sys, pd, i, s, x, N, deflate=True)


# ---------------------------------------------------------------------------
# Eigenfunction evolution bound check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenfunctionBoundReport:
    """Bound and decay status for all extended principal eigenfunctions.

    max_bound_violation: worst |f(orbit_t) - lambda^t f(pert x)| minus the
    functional-norm-scaled decaying bound, over all (i, s, t).
    decay_ratios[(i, s)]: terminal ratio of the norm-relative difference to
    its max over the horizon (layers >= 2 only).
    """

    passed: bool
    bounds_ok: bool
    decay_ok: bool
    max_bound_violation: float
    decay_ratios: dict[tuple[int, int], float]
    slack: float
    decay_factor: float

    def to_json(self) -> dict:
        return {
            "passed": bool(self.passed),
            "bounds_ok": bool(self.bounds_ok),
            "decay_ok": bool(self.decay_ok),
            "max_bound_violation": float(self.max_bound_violation),
            "decay_ratios": {f"{i},{s}": float(r) for (i, s), r in self.decay_ratios.items()},
            "slack": float(self.slack),
            "decay_factor": float(self.decay_factor),
        }


def check_eigenfunction_bounds(
    sys: CascadeSystem,
    pd: PerturbationData,
    x0: StateVector,
    T: int,
    slack: float = 1e-9,
    decay_factor: float = 1e-3,
    rel_floor: float = 1e-10,
) -> EigenfunctionBoundReport:
    """Verify, for every (i, s >= 1), that the evolved eigenfunction stays
    within its decaying bound and that the norm-relative difference decays.

    A whole ratio series at rounding level (max <= slack) passes the decay
    leg trivially (the decoupled / layer-1 situation), as does a terminal
    ratio at or below rel_floor (series converged to the rounding floor).
    """
    es = compute_error_series(sys, pd, x0, T)
    trace = iterate_lin(sys, x0, T)
    pert_x = apply_perturbation(pd, x0)

    max_viol = -float("inf")
    decay_ratios: dict[tuple[int, int], float] = {}
    decay_ok = True
    any_pair = False
    for i in range(1, sys.n + 1):
        d = sys.eig_of(i)
        base_vals = d.Vinv @ pert_x.layer(i)  # f(pert x) for all s
        row_norms = np.linalg.norm(d.Vinv, axis=1)
        lam_pow = np.ones(sys.dims[i - 1], dtype=np.complex128)
        diffs = np.zeros((sys.dims[i - 1], T + 1))
        for t in range(T + 1):
            vals = d.Vinv @ trace[t].layer(i)
            diffs[:, t] = np.abs(vals - lam_pow * base_vals)
            lam_pow = lam_pow * d.eigenvalues
        bound = row_norms[:, None] * es.bound_decaying[i - 1][None, :] + slack
        max_viol = max(max_viol, float(np.max(diffs - bound)))
        any_pair = True

        if i >= 2:
            norm_pow = np.asarray(sys.norms[i - 1]) ** np.arange(T + 1)
            ratios = diffs / norm_pow[None, :]
            for s in range(1, sys.dims[i - 1] + 1):
                peak = float(np.max(ratios[s - 1]))
                term = float(ratios[s - 1, T])
                r = term / peak if peak > 0 else 0.0
                decay_ratios[(i, s)] = r
                if peak > slack and term > peak * decay_factor and term > rel_floor:
                    decay_ok = False

    if not any_pair:
        max_viol = 0.0
    bounds_ok = max_viol <= 0.0
    return EigenfunctionBoundReport(
        passed=bounds_ok and decay_ok,
        bounds_ok=bounds_ok,
        decay_ok=decay_ok,
        max_bound_violation=max_viol,
        decay_ratios=decay_ratios,
        slack=slack,
        decay_factor=decay_factor,
    )


def eigenfunction_to_json(
    sys: CascadeSystem, i: int, s: int, composed_with_pert: bool
) -> dict:
    """Wire format for one extended principal eigenfunction."""
    pe = principal_eigenfunction(sys, i, s)
    row = pe.coeff_row if pe.coeff_row is not None else np.zeros(0, dtype=np.complex128)
    return {
        "layer": int(i),
        "index": int(s),
        "eigenvalue": linalg.complex_to_json(pe.eigenvalue),
        "coeff_row": linalg.matrix_to_json(row.reshape(1, -1)),
        "composed_with_pert": bool(composed_with_pert),
    }
