"""Saturating-exponential GPU power model: prediction, fitting, and coefficient reuse.

Predicted power is P_m + (P_M - P_m) * (1 - exp(-sum_i alpha_i)) with one load
term per non-resolution pass,

    alpha_i = k_b[i] * b_i / B_i + k_v[i] * v_i / V_i + k_f[i] * f_i / F_i.

Fitting inverts the exponential with a log transform and solves a linear least
squares problem with nonnegativity enforced by clamp-and-re-solve passes over
the active set. A fitted coefficient set for one configuration is extended to
every other configuration through per-instruction (chi) and per-texel (psi)
unit costs combined with the static instruction/texel cost table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .configspace import PassRoster, RenderingConfiguration

# Normalized powers are clamped this fraction of (P_M - P_m) away from the
# saturation bounds before the log transform, keeping targets finite.
DEFAULT_CLAMP_FRACTION = 1e-3

# A design column whose normalized load never reaches this floor carries no
# usable signal; its coefficient is reported unidentified instead of letting
# least squares amplify measurement noise into it.
MIN_COLUMN_SIGNAL = 0.01

Primitives = tuple[float, float, float]


@dataclass(frozen=True)
class FrameSample:
    """Measured power plus per-pass primitive counts for one frame.

    ``per_pass`` holds one (batches, vertices, fragments) triple per
    non-resolution pass, in roster order.
    """

    measured_power: float
    per_pass: tuple[Primitives, ...]

    def __post_init__(self) -> None:
        if self.measured_power <= 0.0:
            raise ValueError("measured power must be positive")
        pp = tuple(tuple(float(c) for c in triple) for triple in self.per_pass)
        for triple in pp:
            if len(triple) != 3 or any(c < 0 for c in triple):
                raise ValueError("primitive counts must be nonnegative (b, v, f) triples")
        object.__setattr__(self, "per_pass", pp)


@dataclass(frozen=True)
class SaturationConstants:
    """Idle/saturated power and per-pass saturating primitive counts."""

    p_min: float
    p_max: float
    per_pass: tuple[Primitives, ...]

    def __post_init__(self) -> None:
        if not (0.0 < self.p_min < self.p_max):
            raise ValueError("need 0 < p_min < p_max")
        pp = tuple(tuple(float(c) for c in triple) for triple in self.per_pass)
        for triple in pp:
            if len(triple) != 3 or any(c <= 0 for c in triple):
                raise ValueError("saturation counts must be positive (B, V, F) triples")
        object.__setattr__(self, "per_pass", pp)

    @property
    def span(self) -> float:
        return self.p_max - self.p_min


@dataclass(frozen=True)
class PowerCoefficients:
    """Per-pass (k_b, k_v, k_f) weights; all nonnegative."""

    per_pass: tuple[Primitives, ...]

    def __post_init__(self) -> None:
        pp = tuple(tuple(float(c) for c in triple) for triple in self.per_pass)
        for triple in pp:
            if len(triple) != 3 or any(c < 0 for c in triple):
                raise ValueError("coefficients must be nonnegative (k_b, k_v, k_f) triples")
        object.__setattr__(self, "per_pass", pp)

    @staticmethod
    def zeros(n_passes: int) -> "PowerCoefficients":
        return PowerCoefficients(tuple((0.0, 0.0, 0.0) for _ in range(n_passes)))


@dataclass(frozen=True)
class CostTable:
    """Static shader costs per non-resolution pass.

    ``ins_v[i]`` is instructions per vertex (level-independent), while
    ``ins_f[i][l]`` and ``tex_f[i][l]`` are instructions and texel accesses per
    fragment at level ``l``. Vertex shaders access no texels. Costs must not
    increase as quality degrades.
    """

    ins_v: tuple[float, ...]
    ins_f: tuple[tuple[float, ...], ...]
    tex_f: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        ins_v = tuple(float(x) for x in self.ins_v)
        ins_f = tuple(tuple(float(x) for x in row) for row in self.ins_f)
        tex_f = tuple(tuple(float(x) for x in row) for row in self.tex_f)
        if not (len(ins_v) == len(ins_f) == len(tex_f)):
            raise ValueError("cost table sections disagree on the number of passes")
        for x in ins_v:
            if x < 0:
                raise ValueError("instruction counts must be nonnegative")
        for name, table in (("ins_f", ins_f), ("tex_f", tex_f)):
            for i, row in enumerate(table):
                if any(x < 0 for x in row):
                    raise ValueError(f"{name}[{i}]: entries must be nonnegative")
                if any(row[l] < row[l + 1] for l in range(len(row) - 1)):
                    raise ValueError(
                        f"{name}[{i}]: costs may not increase as the level degrades"
                    )
        object.__setattr__(self, "ins_v", ins_v)
        object.__setattr__(self, "ins_f", ins_f)
        object.__setattr__(self, "tex_f", tex_f)

    @property
    def n_passes(self) -> int:
        return len(self.ins_v)


@dataclass(frozen=True)
class UnitCosts:
    """Cost of one shader instruction (chi) and one texel access (psi)."""

    chi: float
    psi: float

    def __post_init__(self) -> None:
        if self.chi < 0 or self.psi < 0:
            raise ValueError("unit costs must be nonnegative")


@dataclass(frozen=True)
class LinearizedSample:
    row: tuple[float, ...]
    target: float
    clamped: bool


@dataclass(frozen=True)
class FitResult:
    coefficients: PowerCoefficients
    residual_norm: float
    degenerate: bool
    # Per (pass, kind) flag: False where the sample window carried no signal
    # for that coefficient (all-zero design column), so the zero it got is a
    # placeholder, not an estimate.
    identified: tuple[tuple[bool, bool, bool], ...]
    clamp_count: int


@dataclass(frozen=True)
class UnitCostResult:
    unit_costs: UnitCosts
    residual_norm: float
    psi_indeterminate: bool


@dataclass(frozen=True)
class PowerModel:
    """Immutable snapshot of everything needed to predict any configuration."""

    roster: PassRoster
    saturation: SaturationConstants
    coefficients: PowerCoefficients
    unit_costs: UnitCosts
    cost_table: CostTable
    fitted_config: RenderingConfiguration
    identified: tuple[tuple[bool, bool, bool], ...] | None = None

    def coefficients_for(self, config: RenderingConfiguration) -> PowerCoefficients:
        """Raw fitted coefficients for the fitted configuration, reuse for the rest."""
        if config == self.fitted_config:
            return self.coefficients
        return coefficients_for_config(
            self.unit_costs, self.cost_table, config, self.coefficients, self.roster
        )

    def predict(self, config: RenderingConfiguration, primitives) -> float:
        return predict_power(
            self.saturation, self.coefficients_for(config), primitives, model_masks(self.roster)
        )


def model_masks(roster: PassRoster) -> tuple[tuple[bool, bool, bool], ...]:
    """(uses_batches, uses_vertices, uses_fragments) per non-resolution pass."""
    return tuple(
        (p.uses_batches, p.uses_vertices, p.uses_fragments) for p in roster.model_passes
    )


def load_terms(
    saturation: SaturationConstants,
    coefficients: PowerCoefficients,
    primitives,
    masks=None,
) -> list[float]:
    """Per-pass alpha contributions of the load sum."""
    n = len(saturation.per_pass)
    if len(coefficients.per_pass) != n or len(primitives) != n:
        raise ValueError("saturation, coefficients, and primitives disagree on pass count")
    terms = []
    for i in range(n):
        kb, kv, kf = coefficients.per_pass[i]
        big_b, big_v, big_f = saturation.per_pass[i]
        b, v, f = primitives[i]
        if masks is not None:
            ub, uv, uf = masks[i]
            b = b if ub else 0.0
            v = v if uv else 0.0
            f = f if uf else 0.0
        terms.append(kb * b / big_b + kv * v / big_v + kf * f / big_f)
    return terms


def predict_power(
    saturation: SaturationConstants,
    coefficients: PowerCoefficients,
    primitives,
    masks=None,
) -> float:
    """Evaluate the saturating power model; result always lies in [P_m, P_M).

    The asymptote is open in exact arithmetic; rounding can still land on
    P_M at extreme loads, so the bound is enforced explicitly.
    """
    alpha = sum(load_terms(saturation, coefficients, primitives, masks))
    p = saturation.p_min + saturation.span * (1.0 - math.exp(-alpha))
    return min(p, math.nextafter(saturation.p_max, -math.inf))


def linearize_sample(
    saturation: SaturationConstants,
    sample: FrameSample,
    masks=None,
    clamp_fraction: float = DEFAULT_CLAMP_FRACTION,
) -> LinearizedSample:
    """Turn one sample into a regression row and a log-domain target.

    The row holds normalized primitives (b/B, v/V, f/F) per pass; the target is
    -ln(1 - (P - P_m) / (P_M - P_m)), with the measured power clamped a small
    margin inside (P_m, P_M) first so the transform stays finite.
    """
    n = len(saturation.per_pass)
    if len(sample.per_pass) != n:
        raise ValueError("sample and saturation constants disagree on pass count")
    eps = clamp_fraction * saturation.span
    p = sample.measured_power
    clamped = not (saturation.p_min + eps <= p <= saturation.p_max - eps)
    p = min(max(p, saturation.p_min + eps), saturation.p_max - eps)
    target = -math.log(1.0 - (p - saturation.p_min) / saturation.span)

    row: list[float] = []
    for i in range(n):
        big_b, big_v, big_f = saturation.per_pass[i]
        b, v, f = sample.per_pass[i]
        if masks is not None:
            ub, uv, uf = masks[i]
            b = b if ub else 0.0
            v = v if uv else 0.0
            f = f if uf else 0.0
        row.extend((b / big_b, v / big_v, f / big_f))
    return LinearizedSample(tuple(row), target, clamped)


def _nonnegative_lstsq(a: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares with x >= 0 via clamp-and-re-solve over the active set."""
    n = a.shape[1]
    active = np.ones(n, dtype=bool)
    x = np.zeros(n)
    for _ in range(n + 1):
        if not active.any():
            break
        sol, _, _, _ = np.linalg.lstsq(a[:, active], y, rcond=None)
        negative = sol < 0.0
        if not negative.any():
            x = np.zeros(n)
            x[active] = sol
            break
        idx = np.flatnonzero(active)
        active[idx[negative]] = False
    residual = float(np.linalg.norm(a @ x - y))
    return x, residual


def fit_coefficients(
    samples,
    saturation: SaturationConstants,
    masks=None,
    clamp_fraction: float = DEFAULT_CLAMP_FRACTION,
    min_signal: float = MIN_COLUMN_SIGNAL,
) -> FitResult:
    """Fit per-pass (k_b, k_v, k_f) from a window of frame samples.

    Requires at least three samples per non-resolution pass. Columns the
    window never exercised (below the minimum-signal floor) are excluded and
    reported unidentified; a rank-deficient remainder is solved least-norm and
    flagged degenerate.
    """
    samples = list(samples)
    n_passes = len(saturation.per_pass)
    if len(samples) < 3 * n_passes:
        raise ValueError(
            f"need at least {3 * n_passes} samples to fit {n_passes} passes, got {len(samples)}"
        )
    rows = []
    targets = []
    clamp_count = 0
    for s in samples:
        lin = linearize_sample(saturation, s, masks, clamp_fraction)
        rows.append(lin.row)
        targets.append(lin.target)
        clamp_count += lin.clamped
    a = np.asarray(rows, dtype=float)
    y = np.asarray(targets, dtype=float)

    structural = np.ones(a.shape[1], dtype=bool)
    if masks is not None:
        structural = np.asarray([u for m in masks for u in m], dtype=bool)
    observed = structural & (np.abs(a).max(axis=0) >= min_signal)

    x = np.zeros(a.shape[1])
    if observed.any():
        sub = a[:, observed]
        rank = np.linalg.matrix_rank(sub)
        degenerate = rank < int(observed.sum())
        sol, residual = _nonnegative_lstsq(sub, y)
        x[observed] = sol
    else:
        degenerate = True
        residual = float(np.linalg.norm(y))

    per_pass = tuple(
        (x[3 * i], x[3 * i + 1], x[3 * i + 2]) for i in range(n_passes)
    )
    identified = tuple(
        (bool(observed[3 * i]), bool(observed[3 * i + 1]), bool(observed[3 * i + 2]))
        for i in range(n_passes)
    )
    return FitResult(
        coefficients=PowerCoefficients(per_pass),
        residual_norm=residual,
        degenerate=degenerate,
        identified=identified,
        clamp_count=clamp_count,
    )


def fit_generic(
    samples,
    saturation: SaturationConstants,
    masks=None,
    clamp_fraction: float = DEFAULT_CLAMP_FRACTION,
) -> FitResult:
    """Fit from a load-space sweep instead of a live window; same algorithm."""
    samples = list(samples)
    if not samples:
        raise ValueError("generic fitting needs a nonempty sample sweep")
    return fit_coefficients(samples, saturation, masks, clamp_fraction)


def _model_levels(
    roster: PassRoster, config: RenderingConfiguration
) -> tuple[int, ...]:
    roster.validate_config(config)
    return tuple(config[i] for i in roster.model_pass_indices)


def solve_unit_costs(
    coefficients: PowerCoefficients,
    cost_table: CostTable,
    fitted_config: RenderingConfiguration,
    roster: PassRoster,
    identified=None,
) -> UnitCostResult:
    """Recover (chi, psi) from fitted coefficients and the cost table.

    Solves the overdetermined system k_v[i] = chi * Ins_v[i] and
    k_f[i] = chi * Ins_f[i][l] + psi * Tex_f[i][l] at the fitted levels, in the
    least-squares sense with nonnegativity. Equations for coefficients the fit
    could not identify contribute nothing and are dropped.
    """
    levels = _model_levels(roster, fitted_config)
    masks = model_masks(roster)
    if cost_table.n_passes != len(levels):
        raise ValueError("cost table does not cover the roster's model passes")
    rows = []
    targets = []
    for i, lvl in enumerate(levels):
        ub, uv, uf = masks[i]
        ident_b, ident_v, ident_f = identified[i] if identified is not None else (True,) * 3
        kb, kv, kf = coefficients.per_pass[i]
        if uv and ident_v:
            rows.append((cost_table.ins_v[i], 0.0))
            targets.append(kv)
        if uf and ident_f:
            rows.append((cost_table.ins_f[i][lvl], cost_table.tex_f[i][lvl]))
            targets.append(kf)
    if not rows:
        raise ValueError("no usable equations: fit identified no vertex/fragment coefficients")
    a = np.asarray(rows, dtype=float)
    y = np.asarray(targets, dtype=float)

    psi_indeterminate = bool(np.abs(a[:, 1]).max() == 0.0)
    if psi_indeterminate:
        sol, residual = _nonnegative_lstsq(a[:, :1], y)
        chi, psi = float(sol[0]), 0.0
    else:
        sol, residual = _nonnegative_lstsq(a, y)
        chi, psi = float(sol[0]), float(sol[1])
    return UnitCostResult(UnitCosts(chi, psi), residual, psi_indeterminate)


def coefficients_for_config(
    unit_costs: UnitCosts,
    cost_table: CostTable,
    config: RenderingConfiguration,
    fitted: PowerCoefficients,
    roster: PassRoster,
) -> PowerCoefficients:
    """Coefficients for an arbitrary configuration from one fitted set.

    The batch cost is level-independent and carried over unchanged; vertex and
    fragment costs are rebuilt from the unit costs and the cost table at the
    configuration's levels.
    """
    levels = _model_levels(roster, config)
    per_pass = []
    for i, lvl in enumerate(levels):
        kb = fitted.per_pass[i][0]
        kv = unit_costs.chi * cost_table.ins_v[i]
        kf = (
            unit_costs.chi * cost_table.ins_f[i][lvl]
            + unit_costs.psi * cost_table.tex_f[i][lvl]
        )
        per_pass.append((kb, kv, kf))
    return PowerCoefficients(tuple(per_pass))


def predict_all(model: PowerModel, primitives_for) -> dict[RenderingConfiguration, float]:
    """One power prediction per enumerated configuration.

    ``primitives_for`` maps a configuration to its per-pass (b, v, f) counts,
    already reflecting per-level multipliers and the resolution fragment scale.
    """
    from .configspace import enumerate_configurations

    masks = model_masks(model.roster)
    out: dict[RenderingConfiguration, float] = {}
    for config in enumerate_configurations(model.roster):
        coeffs = model.coefficients_for(config)
        out[config] = predict_power(model.saturation, coeffs, primitives_for(config), masks)
    return out
