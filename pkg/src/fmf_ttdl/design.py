"""Mode-conversion topology, placement constraints, solving and robustness.

A delay-line design is a set of samples, each created by riding an ordered
sequence of fiber modes; gratings inscribed along the fiber convert one mode
into the next.  Normalized segment lengths are the unknowns.  The linear
constraint system forces

* each sample's segment lengths to total the full (normalized) link,
* ladder-adjacent samples to differ by the target delay step, and
* ladder-adjacent dispersion increments to be one shared constant, either
  fixed or left as an extra unknown to be maximized.

The resulting problem is a small dense linear program over box-bounded
lengths; fully determined systems (the usual case for hand-built
topologies) collapse to a single linear solve.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .fileio import (
    FileFormatError,
    atomic_write_text,
    fmt_float,
    iter_config_lines,
    um_from_nm,
)
from .modes import ModeTable, format_mode_label, parse_mode_label

MAXIMIZE_DISPERSION = "maximize"
FIXED_DISPERSION = "fixed"
DELAYS_ONLY = "delays-only"
DISPERSION_RULES = (MAXIMIZE_DISPERSION, FIXED_DISPERSION, DELAYS_ONLY)

_FEASIBILITY_RTOL = 1e-9
_BOUND_SLACK = 1e-9

PLACEMENTS_HEADER = "variable,value"
SUMMARY_HEADER = "key,value"
POSITIONS_HEADER = "junction,from_mode,to_mode,z_km"


class DesignError(RuntimeError):
    """Constraint assembly or solving failure."""


class UnknownModeError(DesignError):
    """The topology names a mode absent from the mode table."""


class InfeasibleConstantError(DesignError):
    """A sample with no free lengths does not total the full link."""


class InfeasibleDesignError(DesignError):
    """No placement satisfies the constraints within [0, 1]."""


class UnboundedDispersionError(DesignError):
    """The dispersion increment can grow without bound (under-constrained)."""


@dataclass(frozen=True)
class Segment:
    """One span of a sample's path: the mode ridden and its length.

    length is either a variable name (str) or a fixed normalized constant.
    """

    mode: tuple
    length: object

    def __post_init__(self):
        object.__setattr__(self, "mode", (int(self.mode[0]), int(self.mode[1])))
        if isinstance(self.length, str):
            if not self.length.isidentifier():
                raise ValueError(f"length variable '{self.length}' is not an identifier")
        else:
            value = float(self.length)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"fixed segment length must lie in (0, 1], got {value}")
            object.__setattr__(self, "length", value)


@dataclass(frozen=True)
class ConversionGraph:
    """Ordered per-sample mode paths; shared variables name shared prefixes."""

    samples: tuple

    def __post_init__(self):
        samples = tuple(tuple(segment for segment in sample) for sample in self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise ValueError("graph needs at least one sample")
        shared_prefix = {}
        for number, sample in enumerate(samples, start=1):
            if not sample:
                raise ValueError(f"sample {number} has no segments")
            seen_vars = set()
            for previous, current in zip(sample, sample[1:]):
                if previous.mode == current.mode:
                    raise ValueError(
                        f"sample {number}: consecutive segments both ride "
                        f"{format_mode_label(*current.mode)} (junction converts nothing)"
                    )
            for position, segment in enumerate(sample):
                if not isinstance(segment.length, str):
                    continue
                if segment.length in seen_vars:
                    raise ValueError(
                        f"sample {number}: variable '{segment.length}' used twice"
                    )
                seen_vars.add(segment.length)
                prefix = tuple((s.mode, s.length) for s in sample[: position + 1])
                known = shared_prefix.setdefault(segment.length, prefix)
                if known != prefix:
                    raise ValueError(
                        f"variable '{segment.length}' is shared but does not label "
                        f"the same physical prefix in every sample"
                    )

    def variables(self):
        ordered = []
        for sample in self.samples:
            for segment in sample:
                if isinstance(segment.length, str) and segment.length not in ordered:
                    ordered.append(segment.length)
        return tuple(ordered)

    def modes(self):
        out = []
        for sample in self.samples:
            for segment in sample:
                if segment.mode not in out:
                    out.append(segment.mode)
        return tuple(out)


@dataclass(frozen=True)
class DesignTargets:
    """Delay step, center wavelength and dispersion handling for a design."""

    delta_tau_ps_per_km: float
    lambda0_um: float
    dispersion_rule: str = MAXIMIZE_DISPERSION
    fixed_delta_d_ps_per_km_nm: float | None = None
    reference_mode: tuple = (0, 1)
    ladder: tuple | None = None

    def __post_init__(self):
        if not self.delta_tau_ps_per_km > 0.0:
            raise ValueError(
                f"delay step must be > 0 ps/km, got {self.delta_tau_ps_per_km}"
            )
        if self.dispersion_rule not in DISPERSION_RULES:
            raise ValueError(
                f"dispersion_rule must be one of {DISPERSION_RULES}, "
                f"got '{self.dispersion_rule}'"
            )
        if self.dispersion_rule == FIXED_DISPERSION and self.fixed_delta_d_ps_per_km_nm is None:
            raise ValueError("fixed dispersion rule needs fixed_delta_d_ps_per_km_nm")
        object.__setattr__(
            self, "reference_mode",
            (int(self.reference_mode[0]), int(self.reference_mode[1])),
        )
        if self.ladder is not None:
            object.__setattr__(self, "ladder", tuple(int(i) for i in self.ladder))


@dataclass(frozen=True)
class ConstraintSystem:
    """Equality system over normalized lengths (plus the dispersion unknown)."""

    matrix: np.ndarray
    rhs: np.ndarray
    variables: tuple
    optimize_dispersion: bool
    row_labels: tuple
    graph: ConversionGraph
    table: ModeTable
    targets: DesignTargets


def _ladder_order(graph, targets):
    n = len(graph.samples)
    ladder = targets.ladder if targets.ladder is not None else tuple(range(n))
    if sorted(ladder) != list(range(n)):
        raise DesignError(
            f"ladder must be a permutation of 0..{n - 1}, got {ladder}"
        )
    return sorted(range(n), key=lambda i: ladder[i])


def assemble_constraints(graph, table, targets):
    """Build the equality matrix/rhs for the placement problem."""
    try:
        reference = table.mode(*targets.reference_mode)
    except KeyError as exc:
        raise UnknownModeError(str(exc)) from exc
    if reference.tau_ps_per_km is None:
        raise DesignError("mode table lacks group delays; characterize it first")
    tau = {}
    disp = {}
    for record in table.modes:
        if record.tau_ps_per_km is None:
            raise DesignError("mode table lacks group delays; characterize it first")
        tau[(record.l, record.m)] = record.tau_ps_per_km - reference.tau_ps_per_km
        disp[(record.l, record.m)] = record.dispersion_ps_per_km_nm
    for mode in graph.modes():
        if mode not in tau:
            raise UnknownModeError(
                f"mode {format_mode_label(*mode)} is not in the mode table"
            )

    need_dispersion = targets.dispersion_rule != DELAYS_ONLY and len(graph.samples) >= 2
    if need_dispersion and any(disp[mode] is None for mode in graph.modes()):
        raise DesignError("mode table lacks dispersion values; characterize it first")
    optimize = targets.dispersion_rule == MAXIMIZE_DISPERSION and need_dispersion

    variables = graph.variables()
    column = {name: i for i, name in enumerate(variables)}
    ncols = len(variables) + (1 if optimize else 0)

    def sample_terms(index, weights):
        coeffs = np.zeros(ncols)
        const = 0.0
        for segment in graph.samples[index]:
            weight = weights[segment.mode]
            if isinstance(segment.length, str):
                coeffs[column[segment.length]] += weight
            else:
                const += weight * segment.length
        return coeffs, const

    ones = {mode: 1.0 for mode in tau}
    rows, rhs, labels = [], [], []

    for index in range(len(graph.samples)):
        coeffs, const = sample_terms(index, ones)
        if coeffs.any():
            rows.append(coeffs)
            rhs.append(1.0 - const)
            labels.append(f"normalization[sample {index + 1}]")
        elif abs(const - 1.0) > 1e-12:
            raise InfeasibleConstantError(
                f"sample {index + 1} has fixed total length {const}, expected 1"
            )

    order = _ladder_order(graph, targets)
    for low, high in zip(order, order[1:]):
        c_low, k_low = sample_terms(low, tau)
        c_high, k_high = sample_terms(high, tau)
        rows.append(c_high - c_low)
        rhs.append(targets.delta_tau_ps_per_km - k_high + k_low)
        labels.append(f"delay[sample {low + 1}->{high + 1}]")

    if need_dispersion:
        for low, high in zip(order, order[1:]):
            c_low, k_low = sample_terms(low, disp)
            c_high, k_high = sample_terms(high, disp)
            row = c_high - c_low
            if optimize:
                row[-1] = -1.0
                rhs.append(k_low - k_high)
            else:
                rhs.append(targets.fixed_delta_d_ps_per_km_nm - k_high + k_low)
            rows.append(row)
            labels.append(f"dispersion[sample {low + 1}->{high + 1}]")

    matrix = np.array(rows) if rows else np.zeros((0, ncols))
    return ConstraintSystem(
        matrix=matrix,
        rhs=np.array(rhs),
        variables=variables,
        optimize_dispersion=optimize,
        row_labels=tuple(labels),
        graph=graph,
        table=table,
        targets=targets,
    )


@dataclass(frozen=True)
class PlacementSolution:
    """Solved normalized lengths plus per-sample equivalent delay/dispersion.

    Delays are relative to the declared reference mode; tau_eq/d_eq follow
    the delay ladder (smallest delay first).
    """

    lengths: dict
    tau_eq_ps_per_km: tuple
    d_eq_ps_per_km_nm: tuple | None
    delta_tau_ps_per_km: float
    delta_d_ps_per_km_nm: float | None
    lambda0_um: float
    reference_mode: tuple

    @property
    def n_samples(self):
        return len(self.tau_eq_ps_per_km)


def _bound_violations(variables, values):
    violations = []
    for name, value in zip(variables, values):
        if value < -_BOUND_SLACK or value > 1.0 + _BOUND_SLACK:
            violations.append(f"{name} = {value}")
    return violations


def _infeasibility_report(system):
    solution, *_ = np.linalg.lstsq(system.matrix, system.rhs, rcond=None)
    residuals = system.matrix @ solution - system.rhs
    budget = 1e-6 * max(1.0, np.abs(system.rhs).max())
    bad_rows = [
        f"{label} (residual {value})"
        for label, value in zip(system.row_labels, residuals)
        if abs(value) > budget
    ]
    if bad_rows:
        return "equality constraints are mutually inconsistent: " + "; ".join(bad_rows)
    nvar = len(system.variables)
    violations = _bound_violations(system.variables, solution[:nvar])
    if violations:
        return (
            "no placement satisfies the constraints with lengths in [0, 1]; "
            "unconstrained solve gives " + "; ".join(violations)
        )
    return "constraint system is infeasible"


def _lp_options():
    # 1e-10 is the tightest feasibility HiGHS accepts; a least-squares
    # polish after the solve brings residuals down to machine precision
    return {
        "presolve": True,
        "primal_feasibility_tolerance": 1e-10,
        "dual_feasibility_tolerance": 1e-10,
    }


def _solve_lp(system):
    matrix, rhs = system.matrix, system.rhs
    nvar = len(system.variables)
    ncols = matrix.shape[1] if matrix.size else nvar + (1 if system.optimize_dispersion else 0)
    bounds = [(0.0, 1.0)] * nvar + (
        [(None, None)] if system.optimize_dispersion else []
    )
    cost = np.zeros(ncols)
    if system.optimize_dispersion:
        cost[-1] = -1.0
    result = linprog(
        cost, A_eq=matrix if matrix.size else None,
        b_eq=rhs if matrix.size else None,
        bounds=bounds, method="highs", options=_lp_options(),
    )
    if result.status == 2:
        raise InfeasibleDesignError(_infeasibility_report(system))
    if result.status == 3:
        raise UnboundedDispersionError(
            "dispersion increment is unbounded; the topology is under-constrained"
        )
    if result.status != 0:
        raise DesignError(f"linear program failed: {result.message}")
    x = result.x
    # deterministic tie-break: lexicographically smallest length vector
    matrix_aug, rhs_aug = matrix, rhs
    if system.optimize_dispersion:
        pin = np.zeros(ncols)
        pin[-1] = 1.0
        matrix_aug = np.vstack([matrix_aug, pin]) if matrix_aug.size else pin[None, :]
        rhs_aug = np.append(rhs_aug, x[-1])
    for k in range(nvar):
        cost_k = np.zeros(ncols)
        cost_k[k] = 1.0
        step = linprog(
            cost_k, A_eq=matrix_aug, b_eq=rhs_aug, bounds=bounds,
            method="highs", options=_lp_options(),
        )
        if step.status != 0:
            raise DesignError(f"tie-break solve failed: {step.message}")
        x = step.x
        pin = np.zeros(ncols)
        pin[k] = 1.0
        matrix_aug = np.vstack([matrix_aug, pin])
        rhs_aug = np.append(rhs_aug, x[k])
    if matrix.size:
        correction, *_ = np.linalg.lstsq(matrix, rhs - matrix @ x, rcond=None)
        x = x + correction
    return x


def solve_placements(system):
    """Solve for the normalized lengths (and maximal dispersion increment)."""
    matrix, rhs = system.matrix, system.rhs
    nvar = len(system.variables)
    ncols = matrix.shape[1] if matrix.size else nvar + (1 if system.optimize_dispersion else 0)
    x = None
    if matrix.shape[0] == ncols and matrix.size:
        try:
            candidate = np.linalg.solve(matrix, rhs)
        except np.linalg.LinAlgError:
            candidate = None
        if candidate is not None:
            scale = np.maximum(1.0, np.maximum(np.abs(rhs), np.abs(matrix).max(axis=1)))
            if np.all(np.abs(matrix @ candidate - rhs) <= _FEASIBILITY_RTOL * scale):
                x = candidate
    if x is None and ncols == 0:
        x = np.zeros(0)
    if x is None:
        x = _solve_lp(system)

    violations = _bound_violations(system.variables, x[:nvar])
    if violations:
        raise InfeasibleDesignError(
            "no placement satisfies the constraints with lengths in [0, 1]: "
            + "; ".join(violations)
        )
    if matrix.size:
        scale = np.maximum(1.0, np.maximum(np.abs(rhs), np.abs(matrix).max(axis=1)))
        residual = np.abs(matrix @ x - rhs)
        if np.any(residual > _FEASIBILITY_RTOL * scale):
            worst = int(np.argmax(residual / scale))
            raise DesignError(
                f"solver left residual {residual[worst]} on {system.row_labels[worst]}"
            )
    lengths = {
        name: float(np.clip(value, 0.0, 1.0))
        for name, value in zip(system.variables, x[:nvar])
    }
    return _build_solution(system, lengths, x)


def _sample_sum(graph, index, weights, lengths):
    total = 0.0
    for segment in graph.samples[index]:
        value = lengths[segment.length] if isinstance(segment.length, str) else segment.length
        total += weights[segment.mode] * value
    return total


def _build_solution(system, lengths, x):
    graph, table, targets = system.graph, system.table, system.targets
    reference = table.mode(*targets.reference_mode)
    tau = {
        (r.l, r.m): r.tau_ps_per_km - reference.tau_ps_per_km for r in table.modes
    }
    have_dispersion = all(r.dispersion_ps_per_km_nm is not None for r in table.modes)
    disp = (
        {(r.l, r.m): r.dispersion_ps_per_km_nm for r in table.modes}
        if have_dispersion
        else None
    )
    ones = {mode: 1.0 for mode in tau}
    order = _ladder_order(graph, targets)

    for index in order:
        total = _sample_sum(graph, index, ones, lengths)
        if abs(total - 1.0) > 1e-9:
            raise DesignError(
                f"sample {index + 1} lengths total {total}, expected 1 within 1e-9"
            )
    tau_eq = tuple(_sample_sum(graph, index, tau, lengths) for index in order)
    for low, high in zip(tau_eq, tau_eq[1:]):
        if abs(high - low - targets.delta_tau_ps_per_km) > 1e-6:
            raise DesignError(
                f"delay increment {high - low} deviates from target "
                f"{targets.delta_tau_ps_per_km} by more than 1e-6 ps/km"
            )
    d_eq = (
        tuple(_sample_sum(graph, index, disp, lengths) for index in order)
        if disp is not None
        else None
    )

    if system.optimize_dispersion:
        delta_d = float(x[-1])
    elif targets.dispersion_rule == FIXED_DISPERSION and len(graph.samples) >= 2:
        delta_d = float(targets.fixed_delta_d_ps_per_km_nm)
    else:
        delta_d = None
    if delta_d is not None and d_eq is not None:
        for low, high in zip(d_eq, d_eq[1:]):
            if abs(high - low - delta_d) > 1e-9:
                raise DesignError(
                    f"dispersion increment {high - low} deviates from {delta_d} "
                    f"by more than 1e-9 ps/(km nm)"
                )
    return PlacementSolution(
        lengths=lengths,
        tau_eq_ps_per_km=tau_eq,
        d_eq_ps_per_km_nm=d_eq,
        delta_tau_ps_per_km=float(targets.delta_tau_ps_per_km),
        delta_d_ps_per_km_nm=delta_d,
        lambda0_um=targets.lambda0_um,
        reference_mode=targets.reference_mode,
    )


class LpgPosition(NamedTuple):
    junction: int
    from_mode: str
    to_mode: str
    z_km: float


def lpg_positions(solution, graph, length_km):
    """Physical grating positions; shared-prefix junctions are merged."""
    if not length_km > 0.0:
        raise ValueError(f"length must be > 0 km, got {length_km}")
    merged = []  # (z_km, from_label, to_label)
    for sample in graph.samples:
        values = [
            solution.lengths[s.length] if isinstance(s.length, str) else s.length
            for s in sample
        ]
        for position in range(len(sample) - 1):
            downstream = sum(values[position + 1:])
            z = length_km - downstream * length_km
            from_label = format_mode_label(*sample[position].mode)
            to_label = format_mode_label(*sample[position + 1].mode)
            duplicate = any(
                entry[1] == from_label
                and entry[2] == to_label
                and abs(entry[0] - z) <= 1e-9 * length_km
                for entry in merged
            )
            if not duplicate:
                merged.append((z, from_label, to_label))
    merged.sort()
    for z, _, _ in merged:
        if not -1e-9 * length_km <= z <= length_km * (1.0 + 1e-9):
            raise DesignError(f"junction position {z} km escapes [0, {length_km}] km")
    return [
        LpgPosition(number, from_label, to_label, z)
        for number, (z, from_label, to_label) in enumerate(merged, start=1)
    ]


@dataclass(frozen=True)
class PerturbationTrial:
    trial: int
    feasible: bool
    max_abs_delta_length: float
    delta_d_ps_per_km_nm: float


@dataclass(frozen=True)
class RobustnessReport:
    sigma: float
    seed: int
    trials: tuple
    nominal: PlacementSolution

    @property
    def feasible_fraction(self):
        return sum(1 for t in self.trials if t.feasible) / len(self.trials)

    @property
    def median_max_abs_delta_length(self):
        deltas = [t.max_abs_delta_length for t in self.trials if t.feasible]
        return float(np.median(deltas)) if deltas else float("nan")

    def to_csv(self):
        lines = ["trial,feasible,max_abs_delta_length,delta_D_ps_per_km_nm"]
        for t in self.trials:
            lines.append(
                f"{t.trial},{int(t.feasible)},{fmt_float(t.max_abs_delta_length)},"
                f"{fmt_float(t.delta_d_ps_per_km_nm)}"
            )
        lines.append("[summary]")
        lines.append(SUMMARY_HEADER)
        lines.append(f"sigma,{fmt_float(self.sigma)}")
        lines.append(f"seed,{self.seed}")
        lines.append(f"trials,{len(self.trials)}")
        lines.append(f"feasible_fraction,{fmt_float(self.feasible_fraction)}")
        lines.append(
            f"median_max_abs_delta_length,{fmt_float(self.median_max_abs_delta_length)}"
        )
        return "\n".join(lines) + "\n"


def _perturbed_table(table, reference_mode, sigma, rng):
    reference_tau = table.mode(*reference_mode).tau_ps_per_km
    records = []
    for record in table.modes:
        g_tau, g_disp = rng.standard_normal(2)
        records.append(
            replace(
                record,
                tau_ps_per_km=(record.tau_ps_per_km - reference_tau)
                * (1.0 + sigma * g_tau),
                dispersion_ps_per_km_nm=record.dispersion_ps_per_km_nm
                * (1.0 + sigma * g_disp),
            )
        )
    return ModeTable(tuple(records), table.lambda0_um)


def perturb_and_redesign(graph, table, targets, sigma, trials, seed, workers=1):
    """Redesign under per-mode Gaussian tau/D perturbations, deterministically.

    Trial k draws from a generator seeded by (seed, k), so parallel and
    serial execution produce bit-identical reports.
    """
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if seed < 0:
        raise ValueError(f"seed must be >= 0, got {seed}")
    nominal = solve_placements(assemble_constraints(graph, table, targets))

    def run_trial(index):
        rng = np.random.default_rng([seed, index])
        perturbed = _perturbed_table(table, targets.reference_mode, sigma, rng)
        try:
            solution = solve_placements(assemble_constraints(graph, perturbed, targets))
        except DesignError:
            return PerturbationTrial(index, False, float("nan"), float("nan"))
        deltas = [
            abs(solution.lengths[name] - nominal.lengths[name])
            for name in nominal.lengths
        ]
        delta_d = (
            solution.delta_d_ps_per_km_nm
            if solution.delta_d_ps_per_km_nm is not None
            else float("nan")
        )
        return PerturbationTrial(index, True, max(deltas, default=0.0), delta_d)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_trial, range(trials)))
    else:
        results = [run_trial(index) for index in range(trials)]
    return RobustnessReport(sigma=sigma, seed=seed, trials=tuple(results), nominal=nominal)


# --- graph file format ------------------------------------------------------

def parse_graph(text, source="<graph>"):
    """Parse `[sample N]` sections of `segment = LPlm, <var|fixed>` lines."""
    diagnostics = []
    samples = []
    segment_lines = []
    current = None
    current_lines = None
    expected = 1

    def flush():
        if current is not None:
            samples.append(tuple(current))
            segment_lines.append(tuple(current_lines))

    for number, kind, payload in iter_config_lines(text):
        if kind == "error":
            diagnostics.append((number, payload))
            continue
        if kind == "section":
            parts = payload.split()
            if len(parts) == 2 and parts[0] == "sample" and parts[1].isdigit():
                flush()
                if int(parts[1]) != expected:
                    diagnostics.append(
                        (number, f"expected [sample {expected}], got [sample {parts[1]}]")
                    )
                current, current_lines = [], []
                expected += 1
            else:
                diagnostics.append((number, f"unknown section '[{payload}]'"))
            continue
        key, value = payload
        if key != "segment":
            diagnostics.append((number, f"unknown key '{key}'"))
            continue
        if current is None:
            diagnostics.append((number, "segment line before any [sample] section"))
            continue
        pieces = [p.strip() for p in value.split(",")]
        if len(pieces) != 2:
            diagnostics.append(
                (number, f"segment must be 'LPlm, <variable|fixed>', got '{value}'")
            )
            continue
        try:
            mode = parse_mode_label(pieces[0])
        except ValueError as exc:
            diagnostics.append((number, str(exc)))
            continue
        token = pieces[1]
        if token == "fixed":
            length = 1.0
        elif token.isidentifier():
            length = token
        else:
            diagnostics.append(
                (number, f"segment length must be a variable name or 'fixed', got '{token}'")
            )
            continue
        if current and current[-1].mode == mode:
            diagnostics.append(
                (number, f"consecutive segments both ride {pieces[0].strip().upper()}")
            )
            continue
        current.append(Segment(mode, length))
        current_lines.append(number)
    flush()

    if not samples and not diagnostics:
        diagnostics.append((1, "no [sample] sections found"))
    if not diagnostics:
        shared = {}
        for sample, lines in zip(samples, segment_lines):
            for position, segment in enumerate(sample):
                if not isinstance(segment.length, str):
                    continue
                prefix = tuple((s.mode, s.length) for s in sample[: position + 1])
                known = shared.setdefault(segment.length, (prefix, lines[position]))
                if known[0] != prefix:
                    diagnostics.append(
                        (
                            lines[position],
                            f"variable '{segment.length}' reused with a different "
                            f"shared prefix (first used at line {known[1]})",
                        )
                    )
    if diagnostics:
        raise FileFormatError(source, diagnostics)
    try:
        return ConversionGraph(tuple(samples))
    except ValueError as exc:
        raise FileFormatError(source, [(1, str(exc))]) from exc


def load_graph(path):
    return parse_graph(Path(path).read_text(), source=str(path))


# --- placements CSV ---------------------------------------------------------

def placements_to_csv(solution):
    lines = [PLACEMENTS_HEADER]
    for name, value in solution.lengths.items():
        lines.append(f"{name},{fmt_float(value)}")
    lines.append("[summary]")
    lines.append(SUMMARY_HEADER)
    lines.append(f"lambda0_nm,{fmt_float(solution.lambda0_um * 1e3)}")
    lines.append(f"reference_mode,{format_mode_label(*solution.reference_mode)}")
    lines.append(f"delta_tau_ps_per_km,{fmt_float(solution.delta_tau_ps_per_km)}")
    if solution.delta_d_ps_per_km_nm is not None:
        lines.append(f"delta_D_ps_per_km_nm,{fmt_float(solution.delta_d_ps_per_km_nm)}")
    for index, value in enumerate(solution.tau_eq_ps_per_km, start=1):
        lines.append(f"tau_eq_{index},{fmt_float(value)}")
    if solution.d_eq_ps_per_km_nm is not None:
        for index, value in enumerate(solution.d_eq_ps_per_km_nm, start=1):
            lines.append(f"D_eq_{index},{fmt_float(value)}")
    return "\n".join(lines) + "\n"


def write_placements(solution, path):
    atomic_write_text(path, placements_to_csv(solution))


def parse_placements_csv(text, source="<placements>"):
    lines = text.splitlines()
    diagnostics = []
    if not lines or lines[0].strip() != PLACEMENTS_HEADER:
        raise FileFormatError(source, [(1, f"expected header '{PLACEMENTS_HEADER}'")])
    lengths = {}
    summary = {}
    in_summary = False
    for number, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped == "[summary]":
            in_summary = True
            continue
        if in_summary and stripped == SUMMARY_HEADER:
            continue
        left, comma, right = stripped.partition(",")
        if not comma:
            diagnostics.append((number, f"expected 'name,value', got '{stripped}'"))
            continue
        if not in_summary:
            try:
                lengths[left] = float(right)
            except ValueError:
                diagnostics.append((number, f"bad length value '{right}'"))
        else:
            summary[left] = (number, right)

    def summary_float(key):
        if key not in summary:
            diagnostics.append((len(lines), f"summary is missing '{key}'"))
            return None
        number, raw = summary[key]
        try:
            return float(raw)
        except ValueError:
            diagnostics.append((number, f"bad value for '{key}': '{raw}'"))
            return None

    lambda_nm = summary_float("lambda0_nm")
    delta_tau = summary_float("delta_tau_ps_per_km")
    reference = (0, 1)
    if "reference_mode" in summary:
        number, raw = summary["reference_mode"]
        try:
            reference = parse_mode_label(raw)
        except ValueError as exc:
            diagnostics.append((number, str(exc)))
    else:
        diagnostics.append((len(lines), "summary is missing 'reference_mode'"))

    tau_eq = []
    index = 1
    while f"tau_eq_{index}" in summary:
        value = summary_float(f"tau_eq_{index}")
        if value is not None:
            tau_eq.append(value)
        index += 1
    if not tau_eq:
        diagnostics.append((len(lines), "summary holds no tau_eq_<i> entries"))
    d_eq = []
    index = 1
    while f"D_eq_{index}" in summary:
        value = summary_float(f"D_eq_{index}")
        if value is not None:
            d_eq.append(value)
        index += 1
    if d_eq and len(d_eq) != len(tau_eq):
        diagnostics.append(
            (len(lines), f"{len(d_eq)} D_eq entries for {len(tau_eq)} tau_eq entries")
        )
    delta_d = None
    if "delta_D_ps_per_km_nm" in summary:
        delta_d = summary_float("delta_D_ps_per_km_nm")
    if diagnostics:
        raise FileFormatError(source, diagnostics)
    return PlacementSolution(
        lengths=lengths,
        tau_eq_ps_per_km=tuple(tau_eq),
        d_eq_ps_per_km_nm=tuple(d_eq) if d_eq else None,
        delta_tau_ps_per_km=delta_tau,
        delta_d_ps_per_km_nm=delta_d,
        lambda0_um=um_from_nm(lambda_nm),
        reference_mode=reference,
    )


def read_placements(path):
    return parse_placements_csv(Path(path).read_text(), source=str(path))


def positions_to_csv(positions):
    lines = [POSITIONS_HEADER]
    for entry in positions:
        lines.append(
            f"{entry.junction},{entry.from_mode},{entry.to_mode},{fmt_float(entry.z_km)}"
        )
    return "\n".join(lines) + "\n"


def write_positions(positions, path):
    atomic_write_text(path, positions_to_csv(positions))
