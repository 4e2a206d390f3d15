"""
Verification experiments.

Each experiment turns one estimate into measured quantities and returns an
EstimateReport whose verdict is the conjunction of named checks. Trials are
independent jobs seeded from SeedSequence(seed).spawn and reduced in trial order,
so identical inputs give identical reports whatever the job count.

Besides its own quotients every experiment runs an oracle path on a reduced
sample: the rotation-based propagator against the Leray-projection propagator.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog

from .angular import DEFAULT_PARTITION, AngularPartition
from .errors import ConvergenceError, PreconditionError
from .grid import Grid, VectorField
from .models import EstimateReport, LameParams, PicardTrace, Sample, SignBranch, Space
from .norms import (
    WeightField,
    check_inhomogeneous_conditions,
    conjugate,
    exponent_tuple,
    fp_norm_estimate,
    lr_norm,
    mixed_norm,
    mixed_sobolev_norm,
    pair_properties,
    reciprocal,
    relative_l2,
    sobolev_norm,
    weighted_l2,
)
from .parallel import parallel_map, trial_generators
from .propagator import (
    CauchyData,
    PotentialField,
    TimeSeries,
    duhamel_series,
    energy,
    frequency_localize,
    get_propagator,
    halfwave,
    helmholtz_oracle,
    matrix_exp_solution,
    propagate_series,
    solve_homogeneous,
    solve_perturbed_series,
    uniform_times,
    wraparound_time,
)
from .sampling import default_envelope, random_field, shell_random_field, smooth_bump
from .symbol import (
    branch_overlap_gap,
    brute_eig_oracle,
    diagonalization_residuals,
    eigenvalues_at,
    lame_symbol_at,
)

logger = structlog.get_logger(__name__)

ORACLE_TOLERANCE = 1e-8
MATRIX_EXP_SITE_LIMIT = 4096


def oracle_disagreement(data: CauchyData, t: float, params: LameParams) -> float:
    """Relative L^2 gap between the rotation propagator and the Leray-projection oracle."""
    return relative_l2(
        solve_homogeneous(data, t, params).to_frequency(),
        helmholtz_oracle(data, t, params).to_frequency(),
    )


def fit_power_law(times: Sequence[float], values: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through (log t, log q): slope, intercept and R^2."""
    x = np.log(np.asarray(times, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    spread = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual**2)) / spread if spread > 0 else 1.0
    return float(slope), float(intercept), r_squared


def _random_direction(n: int, rng: np.random.Generator) -> np.ndarray:
    vector = rng.standard_normal(n)
    return vector / np.linalg.norm(vector)


def _ratio(values: Sequence[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    if not finite or min(finite) <= 0:
        return math.inf
    return max(finite) / min(finite)


# -- diagonalization and the propagator ---------------------------------------


def diagonalization_experiment(
    grid: Grid,
    params: LameParams,
    seed: int = 0,
    samples: int = 32,
    residual_tolerance: float = 1e-12,
    eigen_tolerance: float = 1e-11,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> EstimateReport:
    """Lattice residual sweep plus the Jacobi eigenvalue comparison on sampled xi."""
    residuals = diagonalization_residuals(grid, params, partition)
    gap = branch_overlap_gap(grid, params, partition)

    rng = np.random.default_rng(seed)
    half = grid.N // 2
    records: list[Sample] = []
    worst = 0.0
    while len(records) < samples:
        k = rng.integers(-half, half, size=grid.n)
        if not np.any(k):
            continue
        xi = grid.frequency_at(k)
        expected = np.sort(eigenvalues_at(xi, params))[::-1]
        found, _ = brute_eig_oracle(lame_symbol_at(xi, params).real)
        error = float(np.max(np.abs(found - expected)) / np.max(np.abs(expected)))
        worst = max(worst, error)
        descriptor: dict[str, float | int | str] = {f"k{i}": int(v) for i, v in enumerate(k)}
        records.append(Sample(descriptor=descriptor, value=error))

    logger.info(
        "Diagonalization check finished",
        n=grid.n,
        N=grid.N,
        residual_plus=residuals[SignBranch.PLUS],
        residual_minus=residuals[SignBranch.MINUS],
        jacobi_error=worst,
    )
    return EstimateReport.from_checks(
        "diag_check",
        checks={
            "residual_plus": residuals[SignBranch.PLUS] <= residual_tolerance,
            "residual_minus": residuals[SignBranch.MINUS] <= residual_tolerance,
            "jacobi_eigenvalues": worst <= eigen_tolerance,
        },
        samples=records,
        statistics={
            "residual_plus": residuals[SignBranch.PLUS],
            "residual_minus": residuals[SignBranch.MINUS],
            "branch_overlap_gap": gap,
            "jacobi_max_error": worst,
        },
        tolerances={"residual": residual_tolerance, "eigenvalues": eigen_tolerance},
        parameters={"n": grid.n, "N": grid.N, "L": grid.L, "lambda": params.lam, "mu": params.mu},
    )


def rotation_norm_equivalence(
    grid: Grid,
    params: LameParams,
    r: float,
    trials: int = 4,
    seed: int = 0,
    bound: float = 10.0,
    jobs: int | None = None,
) -> EstimateReport:
    """||R(D) P f||_r / ||P f||_r and ||P f||_r / ||f||_r per branch on random data.

    For r = 2 the first ratio is 1 up to rounding (R is orthogonal per frequency).
    """
    propagator = get_propagator(grid, params)

    def trial(rng: np.random.Generator) -> list[tuple[str, float]]:
        f = random_field(grid, rng)
        F = f.to_frequency().values
        base = lr_norm(f, r)
        out = []
        for sign, field in propagator.fields.items():
            projected = VectorField(grid, Space.FREQUENCY, field.weight * F)
            rotated = VectorField(grid, Space.FREQUENCY, field.apply(projected.values))
            p_norm = lr_norm(projected.to_physical(), r)
            out.append((f"rotation_{sign.value}", lr_norm(rotated.to_physical(), r) / p_norm))
            out.append((f"projection_{sign.value}", p_norm / base))
        return out

    results = parallel_map(trial, trial_generators(seed, trials), jobs)
    samples = [
        Sample(descriptor={"trial": i, "quantity": name}, value=value)
        for i, rows in enumerate(results)
        for name, value in rows
    ]
    values = [s.value for s in samples]
    rotation = [s.value for s in samples if str(s.descriptor["quantity"]).startswith("rotation")]
    checks = {"bounded": all(1 / bound <= v <= bound for v in values)}
    if r == 2:
        checks["rotation_isometry"] = max(abs(v - 1) for v in rotation) <= 1e-10
    return EstimateReport.from_checks(
        "rotation_norm_equivalence",
        checks=checks,
        samples=samples,
        statistics={"max_ratio": max(values), "min_ratio": min(values)},
        tolerances={"bound": bound},
        parameters={"n": grid.n, "N": grid.N, "L": grid.L, "r": r, "trials": trials},
    )


def unitarity_experiment(
    grid: Grid,
    params: LameParams,
    trials: int = 20,
    seed: int = 0,
    times: Sequence[float] | None = None,
    oracle_trials: int = 1,
    jobs: int | None = None,
) -> EstimateReport:
    """Half-wave norm ratios, energy drift, the group law and the oracle triangle."""
    times = list(np.linspace(-10.0, 10.0, 11) if times is None else times)
    forward = [t for t in times if t >= 0] or [0.0]
    s_step, t_step = times[1 % len(times)], times[-1]

    def trial(job: tuple[int, np.random.Generator]) -> dict[str, float]:
        index, rng = job
        f = random_field(grid, rng)
        g = random_field(grid, rng)
        base = float(np.linalg.norm(f.values))
        unitarity = max(
            abs(float(np.linalg.norm(halfwave(f, t, params).values)) / base - 1) for t in times
        )
        group = relative_l2(
            halfwave(halfwave(f, s_step, params), t_step, params),
            halfwave(f, s_step + t_step, params),
        )
        data = CauchyData(f, g)
        initial = energy(data, 0.0, params)
        drift = max(abs(energy(data, t, params) - initial) / initial for t in forward)
        row = {"unitarity": unitarity, "group_law": group, "energy_drift": drift}
        if index < oracle_trials:
            t = forward[-1]
            u = solve_homogeneous(data, t, params).to_frequency()
            row["helmholtz"] = relative_l2(u, helmholtz_oracle(data, t, params).to_frequency())
            if grid.sites <= MATRIX_EXP_SITE_LIMIT:
                exact = matrix_exp_solution(data, t, params).to_frequency()
                row["matrix_exp"] = relative_l2(u, exact)
        return row

    rows = parallel_map(trial, list(enumerate(trial_generators(seed, trials))), jobs)
    samples = [
        Sample(descriptor={"trial": i, "quantity": name}, value=value)
        for i, row in enumerate(rows)
        for name, value in row.items()
    ]

    def worst(name: str) -> float:
        values = [row[name] for row in rows if name in row]
        return max(values) if values else 0.0

    statistics = {
        name: worst(name)
        for name in ("unitarity", "group_law", "energy_drift", "helmholtz", "matrix_exp")
    }
    notes = []
    if grid.sites > MATRIX_EXP_SITE_LIMIT:
        notes.append(f"matrix exponential oracle skipped above {MATRIX_EXP_SITE_LIMIT} sites")
    logger.info("Unitarity experiment finished", trials=trials, **statistics)
    return EstimateReport.from_checks(
        "unitarity",
        checks={
            "unitarity": statistics["unitarity"] <= 1e-10,
            "group_law": statistics["group_law"] <= 1e-10,
            "energy_drift": statistics["energy_drift"] <= 1e-8,
            "oracle_triangle": max(statistics["helmholtz"], statistics["matrix_exp"]) <= 1e-9,
        },
        samples=samples,
        statistics=statistics,
        tolerances={"unitarity": 1e-10, "energy_drift": 1e-8, "oracle": 1e-9},
        parameters={"n": grid.n, "N": grid.N, "L": grid.L, "trials": trials, "times": times},
        notes=notes,
    )


# -- dispersive decay ---------------------------------------------------------


def decay_data_radius(bump_radius: float, j: int) -> float:
    """Effective support radius of a shell-j localized bump."""
    return bump_radius + 8.0 * 2.0**-j


def decay_data(grid: Grid, j: int, bump_radius: float, seed: int) -> VectorField:
    rng = np.random.default_rng(seed)
    bump = smooth_bump(grid, grid.centre, bump_radius, _random_direction(grid.n, rng))
    return frequency_localize(bump, j)


def default_slope_tolerance(n: int) -> float:
    return 0.1 if n == 2 else 0.15


def dispersive_decay_experiment(
    grid: Grid,
    params: LameParams,
    j: int,
    t_window: tuple[float, float] | None = None,
    samples: int = 12,
    seed: int = 0,
    bump_radius: float | None = None,
    slope_tolerance: float | None = None,
    min_r_squared: float = 0.98,
    jobs: int | None = None,
) -> EstimateReport:
    """Fit the log-log slope of ||e^{it sqrt L} f||_inf / ||f||_1 against t.

    Raises:
        PreconditionError: If the window reaches past the wraparound time.
    """
    n = grid.n
    bump_radius = 4 * grid.spacing if bump_radius is None else bump_radius
    t_wrap = wraparound_time(grid, params, decay_data_radius(bump_radius, j))
    start, stop = t_window if t_window is not None else (1.0, t_wrap)
    if not 0 < start < stop:
        raise PreconditionError(f"Invalid time window ({start}, {stop})")
    if stop > t_wrap * (1 + 1e-12):
        raise PreconditionError(f"Window end {stop} exceeds the wraparound time {t_wrap:.4g}")
    times = np.geomspace(start, stop, samples)
    f = decay_data(grid, j, bump_radius, seed)
    mass = lr_norm(f, 1)

    quotients = parallel_map(lambda t: lr_norm(halfwave(f, t, params), math.inf) / mass, times, jobs)
    slope, intercept, r_squared = fit_power_law(times, quotients)
    expected = -(n - 1) / 2
    tolerance = default_slope_tolerance(n) if slope_tolerance is None else slope_tolerance
    oracle = oracle_disagreement(CauchyData.displacement_only(f), float(times[0]), params)

    notes = []
    if r_squared < min_r_squared:
        notes.append(
            f"fit R^2 {r_squared:.4f} below {min_r_squared}; check for wraparound "
            f"(t_wrap={t_wrap:.4g}) or an unresolved shell"
        )
    logger.info(
        "Fitted decay slope", n=n, j=j, slope=slope, r_squared=r_squared, expected=expected
    )
    return EstimateReport.from_checks(
        "decay_fit",
        checks={
            "slope": abs(slope - expected) <= tolerance,
            "fit_quality": r_squared >= min_r_squared,
            "oracle_agreement": oracle <= ORACLE_TOLERANCE,
        },
        samples=[
            Sample(descriptor={"t": float(t)}, value=float(value))
            for t, value in zip(times, quotients, strict=True)
        ],
        statistics={
            "slope": slope,
            "intercept": intercept,
            "r_squared": r_squared,
            "expected_slope": expected,
            "t_wrap": t_wrap,
            "l1_norm": mass,
            "oracle_disagreement": oracle,
        },
        tolerances={"slope": tolerance, "r_squared": min_r_squared, "oracle": ORACLE_TOLERANCE},
        parameters={
            "n": n,
            "N": grid.N,
            "L": grid.L,
            "j": j,
            "window": [start, stop],
            "bump_radius": bump_radius,
            "seed": seed,
        },
    )


def decay_scaling_experiment(
    grid: Grid,
    params: LameParams,
    j: int,
    times: Sequence[float],
    bump_radius: float,
    tolerance: float = 0.1,
    seed: int = 0,
    jobs: int | None = None,
) -> EstimateReport:
    """Check q_{j+1}(t) = 2^n q_j(2t) for data dilated by one dyadic step.

    The shell-(j+1) data is the shell-j data compressed by 2, so the flow maps
    u_j(2t, 2x) to u_{j+1}(t, x) and the L^1 norm shrinks by 2^n.
    """
    n = grid.n
    t_wrap = wraparound_time(grid, params, decay_data_radius(bump_radius, j))
    if 2 * max(times) > t_wrap:
        raise PreconditionError(f"2 max(t) = {2 * max(times)} exceeds t_wrap = {t_wrap:.4g}")
    coarse = decay_data(grid, j, bump_radius, seed)
    fine = decay_data(grid, j + 1, bump_radius / 2, seed)
    coarse_mass, fine_mass = lr_norm(coarse, 1), lr_norm(fine, 1)

    def deviation(t: float) -> float:
        q_fine = lr_norm(halfwave(fine, t, params), math.inf) / fine_mass
        q_coarse = lr_norm(halfwave(coarse, 2 * t, params), math.inf) / coarse_mass
        return abs(q_fine / (2.0**n * q_coarse) - 1)

    deviations = parallel_map(deviation, list(times), jobs)
    worst = max(deviations)
    return EstimateReport.from_checks(
        "decay_scaling",
        checks={"scaling": worst <= tolerance},
        samples=[
            Sample(descriptor={"t": float(t)}, value=d)
            for t, d in zip(times, deviations, strict=True)
        ],
        statistics={"max_deviation": worst},
        tolerances={"deviation": tolerance},
        parameters={"n": n, "N": grid.N, "L": grid.L, "j": j, "bump_radius": bump_radius},
    )


# -- Strichartz quotients -----------------------------------------------------


def _shell_windows(
    grid: Grid, params: LameParams, shells: Sequence[int]
) -> dict[int, float]:
    """Time window per shell, shrinking like 2^-j from the coarsest shell's wrap time."""
    if not shells:
        raise PreconditionError("At least one shell is required")
    top = max(shells)
    if 2.0 ** (top + 1) > grid.nyquist:
        raise PreconditionError(
            f"Shell {top} is not representable: its flat band reaches {2.0 ** (top + 1)}, "
            f"above the Nyquist frequency {grid.nyquist:.4g}"
        )
    coarsest = min(shells)
    base = wraparound_time(grid, params, 2 * default_envelope(coarsest))
    return {j: base * 2.0 ** (coarsest - j) for j in shells}


def _shell_jobs(
    seed: int, trials: int, shells: Sequence[int]
) -> list[tuple[int, np.random.Generator]]:
    """(shell, generator) per trial and shell, trial-major."""
    labels = [j for _ in range(trials) for j in shells]
    return list(zip(labels, trial_generators(seed, len(labels)), strict=True))


def _shell_reduction(
    rows: Sequence[tuple[int, float]], shells: Sequence[int]
) -> tuple[dict[int, float], float]:
    maxima = {j: max(q for shell, q in rows if shell == j) for j in shells}
    return maxima, _ratio(list(maxima.values()))


def strichartz_quotient_experiment(
    grid: Grid,
    params: LameParams,
    q: float,
    r: float,
    trials: int = 20,
    seed: int = 0,
    shells: Sequence[int] = (1, 2, 3),
    steps: int = 32,
    ceiling: float = 1e3,
    max_shell_ratio: float = 1.5,
    velocity_data: bool = True,
    unitarity_tolerance: float = 1e-8,
    jobs: int | None = None,
) -> EstimateReport:
    """Q = ||u||_{L^q L^r} / (||f||_{H^s} + ||g||_{H^(s-1)}) over trials and shells.

    Raises:
        PreconditionError: For a non-admissible pair or an unrepresentable shell.
    """
    n = grid.n
    if not pair_properties(q, r, n).admissible:
        raise PreconditionError(f"(q, r) = ({q}, {r}) is not admissible for n={n}")
    s = exponent_tuple(n, q, r).s
    windows = _shell_windows(grid, params, shells)
    jobs_list = _shell_jobs(seed, trials, shells)

    def trial(job: tuple[int, np.random.Generator]) -> float:
        j, rng = job
        f = shell_random_field(grid, j, rng)
        g = shell_random_field(grid, j, rng) if velocity_data else VectorField.zeros(grid)
        u = propagate_series(CauchyData(f, g), uniform_times(windows[j], steps), params)
        return mixed_norm(u, q, r) / (sobolev_norm(f, s) + sobolev_norm(g, s - 1))

    quotients = parallel_map(trial, jobs_list, jobs)
    rows = [(j, value) for (j, _), value in zip(jobs_list, quotients, strict=True)]
    maxima, shell_ratio = _shell_reduction(rows, shells)
    largest = max(quotients)

    first = trial_generators(seed, 1)[0]
    oracle_f = shell_random_field(grid, shells[0], first)
    oracle = oracle_disagreement(
        CauchyData.displacement_only(oracle_f), windows[shells[0]], params
    )

    checks = {
        "bounded": largest <= ceiling,
        "shell_stable": shell_ratio <= max_shell_ratio,
        "oracle_agreement": oracle <= ORACLE_TOLERANCE,
    }
    if math.isinf(q) and r == 2 and not velocity_data:
        checks["unitarity"] = largest <= 1 + unitarity_tolerance
    logger.info(
        "Strichartz quotients measured", q=q, r=r, max_quotient=largest, shell_ratio=shell_ratio
    )
    return EstimateReport.from_checks(
        "strichartz",
        checks=checks,
        samples=[
            Sample(descriptor={"trial": i // len(shells), "shell": j}, value=value)
            for i, (j, value) in enumerate(rows)
        ],
        statistics={
            "max_quotient": largest,
            "min_quotient": min(quotients),
            "shell_ratio": shell_ratio,
            "s": s,
            "oracle_disagreement": oracle,
        }
        | {f"max_quotient_shell_{j}": value for j, value in maxima.items()},
        tolerances={
            "ceiling": ceiling,
            "shell_ratio": max_shell_ratio,
            "oracle": ORACLE_TOLERANCE,
        },
        parameters={
            "n": n,
            "N": grid.N,
            "L": grid.L,
            "q": q,
            "r": r,
            "trials": trials,
            "shells": list(shells),
            "steps": steps,
            "velocity_data": velocity_data,
            "seed": seed,
        },
    )


def time_bump(times: np.ndarray, duration: float) -> np.ndarray:
    """Smooth bump supported in (0, duration)."""
    sigma = 2 * np.asarray(times) / duration - 1
    out = np.zeros_like(sigma)
    inside = np.abs(sigma) < 1
    out[inside] = np.exp(-1.0 / (1.0 - sigma[inside] ** 2))
    return out


def inhomogeneous_quotient_experiment(
    grid: Grid,
    params: LameParams,
    q: float,
    r: float,
    q_dual: float,
    r_dual: float,
    trials: int = 10,
    seed: int = 0,
    shells: Sequence[int] = (1, 2, 3),
    steps: int = 32,
    ceiling: float = 1e3,
    max_shell_ratio: float = 1.5,
    jobs: int | None = None,
) -> EstimateReport:
    """||duhamel(F)||_{L^q L^r} / ||F||_{L^q~' L^r~'} over trials and shells.

    The shell-stability check applies only when the exponents are scale
    invariant, 1/q + 1/q~ + n/r + n/r~ = n - 1; otherwise the ratio is noted.

    Raises:
        PreconditionError: Listing every failed inhomogeneous condition.
    """
    n = grid.n
    conditions = check_inhomogeneous_conditions(q, r, q_dual, r_dual, n)
    if not conditions.ok:
        raise PreconditionError("; ".join(conditions.reasons))
    outer_q, outer_r = conjugate(q_dual), conjugate(r_dual)
    windows = _shell_windows(grid, params, shells)
    scaling_defect = (n - 1) - (
        reciprocal(q) + reciprocal(q_dual) + n * reciprocal(r) + n * reciprocal(r_dual)
    )
    scale_invariant = math.isclose(scaling_defect, 0.0, abs_tol=1e-12)
    jobs_list = _shell_jobs(seed, trials, shells)

    def trial(job: tuple[int, np.random.Generator]) -> float:
        j, rng = job
        h = shell_random_field(grid, j, rng)
        times = uniform_times(windows[j], steps)
        profile = time_bump(times, windows[j]).reshape((-1,) + (1,) * (n + 1))
        forcing = TimeSeries(grid, Space.PHYSICAL, times, profile * h.values[None])
        u = duhamel_series(forcing, params)
        return mixed_norm(u, q, r) / mixed_norm(forcing, outer_q, outer_r)

    quotients = parallel_map(trial, jobs_list, jobs)
    rows = [(j, value) for (j, _), value in zip(jobs_list, quotients, strict=True)]
    maxima, shell_ratio = _shell_reduction(rows, shells)
    largest = max(quotients)

    first = trial_generators(seed, 1)[0]
    oracle = oracle_disagreement(
        CauchyData.velocity_only(shell_random_field(grid, shells[0], first)),
        windows[shells[0]],
        params,
    )
    notes = []
    if not scale_invariant:
        notes.append(
            f"exponents are not scale invariant (defect {scaling_defect:.4g}); "
            f"shell ratio {shell_ratio:.4g} recorded, not asserted"
        )
    checks = {
        "bounded": largest <= ceiling,
        "oracle_agreement": oracle <= ORACLE_TOLERANCE,
    }
    if scale_invariant:
        checks["shell_stable"] = shell_ratio <= max_shell_ratio
    return EstimateReport.from_checks(
        "inhomo",
        checks=checks,
        samples=[
            Sample(descriptor={"trial": i // len(shells), "shell": j}, value=value)
            for i, (j, value) in enumerate(rows)
        ],
        statistics={
            "max_quotient": largest,
            "min_quotient": min(quotients),
            "shell_ratio": shell_ratio,
            "scaling_defect": scaling_defect,
            "midpoint_q_reciprocal": conditions.midpoint[0],
            "midpoint_r_reciprocal": conditions.midpoint[1],
            "oracle_disagreement": oracle,
        }
        | {f"max_quotient_shell_{j}": value for j, value in maxima.items()},
        tolerances={
            "ceiling": ceiling,
            "shell_ratio": max_shell_ratio,
            "oracle": ORACLE_TOLERANCE,
        },
        parameters={
            "n": n,
            "N": grid.N,
            "L": grid.L,
            "q": q,
            "r": r,
            "q_dual": q_dual,
            "r_dual": r_dual,
            "trials": trials,
            "shells": list(shells),
            "steps": steps,
            "seed": seed,
        },
        notes=notes,
    )


# -- weighted estimates and the perturbed equation ----------------------------


def contraction_ratio(trace: PicardTrace, floor: float = 1e-12) -> float:
    """Largest successive residual ratio while residuals stay above a rounding floor."""
    residuals = [r for r in trace.residuals if r > floor]
    ratios = [b / a for a, b in zip(residuals, residuals[1:], strict=False) if a > 0]
    return max(ratios) if ratios else 0.0


@dataclass(frozen=True)
class WeightedTrial:
    cos: float
    sin: float
    inhomogeneous: float
    perturbed: float
    trace: PicardTrace
    converged: bool


def weighted_estimate_experiment(
    grid: Grid,
    params: LameParams,
    V: PotentialField,
    p: float,
    trials: int = 10,
    seed: int = 0,
    j: int = 1,
    t_final: float = 2.0,
    steps: int = 32,
    q: float = 4.0,
    r: float = 4.0,
    max_variation: float = 1.5,
    max_contraction: float = 0.9,
    picard_tol: float = 1e-10,
    max_iter: int = 50,
    jobs: int | None = None,
) -> EstimateReport:
    """Weighted L^2(|V|) quotients for the cos, sin and Duhamel parts, plus the
    perturbed solution's Strichartz quotient and its Picard trace.

    Picard non-convergence is a finding about the smallness of V: it is listed
    in the notes and the trial's perturbed quotient is left out.
    """
    n = grid.n
    if n < 3:
        raise PreconditionError("Weighted estimates are stated for n >= 3")
    if not (n - 1) / 2 < p <= n / 2:
        raise PreconditionError(f"p={p} outside ((n-1)/2, n/2]")
    if V.grid != grid:
        raise PreconditionError("Potential lives on a different grid")
    fp = fp_norm_estimate(V, p, seed=seed)
    weight = WeightField.from_potential(V)
    modulus = weight.values
    inverse = WeightField(grid, np.divide(1.0, modulus, out=np.zeros_like(modulus), where=modulus > 0))
    sigma = exponent_tuple(n, q, r).sigma
    times = uniform_times(t_final, steps)
    dt = t_final / steps

    def quotient(numerator: float, denominator: float) -> float:
        return numerator / denominator if denominator > 0 else 0.0

    def trial(rng: np.random.Generator) -> WeightedTrial:
        f = shell_random_field(grid, j, rng)
        g = shell_random_field(grid, j, rng)
        data_norm = sobolev_norm(f, 0.5) + sobolev_norm(g, -0.5)
        cos_part = propagate_series(CauchyData.displacement_only(f), times, params)
        sin_part = propagate_series(CauchyData.velocity_only(g), times, params)
        free = TimeSeries(grid, Space.PHYSICAL, times, cos_part.values + sin_part.values)
        forcing = TimeSeries(grid, Space.PHYSICAL, times, V.apply(free.values))
        duhamel_part = duhamel_series(forcing, params)

        q_cos = quotient(weighted_l2(cos_part, weight), math.sqrt(fp) * sobolev_norm(f, 0.5))
        q_sin = quotient(weighted_l2(sin_part, weight), math.sqrt(fp) * sobolev_norm(g, -0.5))
        q_inho = quotient(weighted_l2(duhamel_part, weight), fp * weighted_l2(forcing, inverse))
        try:
            u, trace = solve_perturbed_series(
                CauchyData(f, g), V, t_final, params, dt=dt, max_iter=max_iter, tol=picard_tol
            )
            perturbed = mixed_sobolev_norm(u, q, r, sigma) / data_norm
            converged = True
        except ConvergenceError as e:
            logger.warning("Perturbed solve diverged", error=str(e))
            trace = e.trace if isinstance(e.trace, PicardTrace) else PicardTrace(tolerance=picard_tol)
            perturbed, converged = math.nan, False
        return WeightedTrial(q_cos, q_sin, q_inho, perturbed, trace, converged)

    results = parallel_map(trial, trial_generators(seed, trials), jobs)
    samples = []
    for i, result in enumerate(results):
        for name in ("cos", "sin", "inhomogeneous", "perturbed"):
            samples.append(
                Sample(descriptor={"trial": i, "quantity": name}, value=getattr(result, name))
            )
        for k, residual in enumerate(result.trace.residuals):
            samples.append(
                Sample(descriptor={"trial": i, "quantity": "picard_residual", "iteration": k}, value=residual)
            )

    notes = []
    if fp == 0.0:
        notes.append("V vanishes: weighted quotients are recorded as 0")
    failures = [i for i, result in enumerate(results) if not result.converged]
    if failures:
        notes.append(
            f"Picard iteration diverged in trials {failures}: the smallness of V is violated"
        )
    converged = [result for result in results if result.converged]
    contraction = max((contraction_ratio(result.trace) for result in converged), default=0.0)

    def variation(name: str) -> float:
        values = [getattr(result, name) for result in results]
        if all(v == 0.0 for v in values):
            return 1.0
        return _ratio(values)

    variations = {name: variation(name) for name in ("cos", "sin", "inhomogeneous")}
    perturbed_values = [result.perturbed for result in converged]
    if perturbed_values:
        variations["perturbed"] = _ratio(perturbed_values)
    finite = all(
        math.isfinite(getattr(result, name))
        for result in results
        for name in ("cos", "sin", "inhomogeneous")
    )

    oracle_rng = trial_generators(seed, 1)[0]
    oracle = oracle_disagreement(
        CauchyData(shell_random_field(grid, j, oracle_rng), shell_random_field(grid, j, oracle_rng)),
        t_final,
        params,
    )
    logger.info(
        "Weighted estimates measured",
        fp_estimate=fp,
        contraction=contraction,
        picard_failures=len(failures),
    )
    return EstimateReport.from_checks(
        "perturbed",
        checks={
            "finite": finite,
            "stable": all(v <= max_variation for v in variations.values()),
            "geometric_contraction": contraction < max_contraction,
            "oracle_agreement": oracle <= ORACLE_TOLERANCE,
        },
        samples=samples,
        statistics={
            "fp_estimate": fp,
            "contraction_ratio": contraction,
            "picard_failures": float(len(failures)),
            "sigma": sigma,
            "oracle_disagreement": oracle,
        }
        | {f"variation_{name}": value for name, value in variations.items()}
        | {
            f"max_{name}": max(getattr(result, name) for result in results)
            for name in ("cos", "sin", "inhomogeneous")
        },
        tolerances={
            "variation": max_variation,
            "contraction": max_contraction,
            "picard_tol": picard_tol,
            "oracle": ORACLE_TOLERANCE,
        },
        parameters={
            "n": n,
            "N": grid.N,
            "L": grid.L,
            "p": p,
            "q": q,
            "r": r,
            "j": j,
            "t_final": t_final,
            "steps": steps,
            "trials": trials,
            "seed": seed,
        },
        notes=notes,
    )


def build_potential(
    grid: Grid, kind: str, coupling: float, epsilon: float = 1.0, half_width: float = 1.0
) -> PotentialField:
    """Potential from its configuration: inverse_square, box or zero."""
    if kind == "inverse_square":
        return PotentialField.inverse_square(grid, coupling, epsilon)
    if kind == "box":
        return PotentialField.box(grid, coupling, half_width)
    if kind == "zero":
        return PotentialField.scalar(grid, 0.0)
    raise PreconditionError(f"Unknown potential kind: {kind}")


def perturbed_experiment(
    grid: Grid,
    params: LameParams,
    kind: str,
    coupling: float,
    p: float,
    epsilon: float = 1.0,
    half_width: float = 1.0,
    **options: object,
) -> EstimateReport:
    """weighted_estimate_experiment for a potential given by kind and coupling."""
    V = build_potential(grid, kind, coupling, epsilon, half_width)
    report = weighted_estimate_experiment(grid, params, V, p, **options)  # type: ignore[arg-type]
    report.parameters |= {"potential": kind, "coupling": coupling, "epsilon": epsilon}
    return report
