"""Monotonicity-test reconstructions of inclusion supports.

Two decision procedures over a voxel grid of candidate regions:

* the standard test solves a fresh forward problem per voxel with bumped
  test coefficients and counts eigenvalues of (test measurement - noisy
  measurement) below -delta; a voxel is kept when the count stays at or
  under a cap;
* the linearized test replaces the per-voxel forward solve by the
  first-order expansion of the measurement map around the background and
  keeps a voxel when the count stays strictly under the cap.

Both preparations cache everything that does not depend on the noise
realization, so sweeps over noise levels and thresholds only re-count
eigenvalues of small symmetric matrices.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import assembly, forward, model, noise, spectral
from .cache import forward_cache_key
from .errors import ConfigError, InfeasibleSweepError
from .scenario import Scenario

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# single-voxel tests


@dataclass(frozen=True)
class TestVerdict:
    """Outcome of the monotonicity test for one voxel.

    ``counts`` holds the eigenvalue count below -delta for every contrast
    setting tried; the voxel is accepted when its best (smallest) count stays
    within the cap, non-strictly for the standard test and strictly for the
    linearized one.
    """

    voxel: int
    counts: tuple[int, ...]
    m_cap: int
    delta: float
    mode: str  # "standard" | "linearized"

    @property
    def count(self) -> int:
        return min(self.counts)

    @property
    def accepted(self) -> bool:
        if self.mode == "standard":
            return self.count <= self.m_cap
        return self.count < self.m_cap


def standard_test(ntd_noisy: np.ndarray, ntd_test: np.ndarray, delta: float,
                  m_cap: int, voxel: int = -1) -> TestVerdict:
    """Count eigenvalues of (test - noisy) below -delta; accept if <= cap."""
    a = np.asarray(ntd_test)
    b = np.asarray(ntd_noisy)
    if a.shape != b.shape:
        raise ValueError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    count = spectral.count_below(spectral.eig_sym(a - b), -delta)
    return TestVerdict(voxel=voxel, counts=(count,), m_cap=int(m_cap),
                       delta=float(delta), mode="standard")


def linearized_test(ntd0: np.ndarray, frechet: np.ndarray, ntd_noisy: np.ndarray,
                    delta: float, m_cap: int, voxel: int = -1) -> TestVerdict:
    """Count eigenvalues of (background + derivative - noisy) below -delta."""
    a = np.asarray(ntd0)
    d = np.asarray(frechet)
    b = np.asarray(ntd_noisy)
    if not (a.shape == d.shape == b.shape):
        raise ValueError(f"matrix shapes differ: {a.shape}, {d.shape}, {b.shape}")
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    count = spectral.count_below(spectral.eig_sym(a + d - b), -delta)
    return TestVerdict(voxel=voxel, counts=(count,), m_cap=int(m_cap),
                       delta=float(delta), mode="linearized")


# ---------------------------------------------------------------------------
# enclosed-component fill


def fill_enclosed(accepted, grid: model.VoxelGrid) -> set[int]:
    """Add all complement components that do not reach the domain hull.

    Flood fill starts from a virtual outside node connected to every hull
    voxel; complement voxels never reached are enclosed by the accepted set.
    """
    acc = set(int(v) for v in accepted)
    n = grid.n_voxels
    visited = np.zeros(n, dtype=bool)
    stack = [v for v in np.flatnonzero(grid.touches_boundary) if v not in acc]
    for v in stack:
        visited[v] = True
    while stack:
        v = stack.pop()
        for w in grid.neighbors[v]:
            if w >= 0 and not visited[w] and w not in acc:
                visited[w] = True
                stack.append(int(w))
    enclosed = set(np.flatnonzero(~visited).tolist()) - acc
    return acc | enclosed


# ---------------------------------------------------------------------------
# prepared pipelines


@dataclass(frozen=True)
class PreparedReconstruction:
    """Noise-independent part of a reconstruction run.

    ``test_matrices[v, s]`` is the noiseless test-side matrix of voxel v under
    contrast setting s (full forward measurement for the standard mode,
    background + derivative for the linearized mode); verdicts for any noise
    realization follow by batched eigenvalue counting.
    """

    scenario: Scenario
    mode: str
    grid: model.VoxelGrid
    alpha_settings: tuple[tuple[float, float, float], ...]
    ntd_true: np.ndarray          # noiseless measurement of the true field
    ntd_norm: float               # spectral norm of ntd_true
    test_matrices: np.ndarray     # (n_voxels, n_settings, m, m)

    @property
    def n_loads(self) -> int:
        return self.ntd_true.shape[0]

    def realize_noise(self, eta: float, seed: int) -> tuple[np.ndarray, noise.NoisySpec]:
        if eta == 0.0:
            return self.ntd_true.copy(), noise.NoisySpec(eta=0.0, seed=int(seed), delta=0.0)
        e = noise.noise_matrix(self.n_loads, seed)
        delta = eta * self.ntd_norm
        return self.ntd_true + delta * e, noise.NoisySpec(eta=float(eta), seed=int(seed),
                                                          delta=float(delta))

    def counts(self, eta: float, seed: int,
               delta_override: Optional[float] = None
               ) -> tuple[np.ndarray, noise.NoisySpec, float]:
        """Eigenvalue counts below -delta for every (voxel, setting)."""
        noisy, spec = self.realize_noise(eta, seed)
        delta = spec.delta if delta_override is None else float(delta_override)
        eigs = np.linalg.eigvalsh(self.test_matrices - noisy[None, None, :, :])
        counts = (eigs < -delta).sum(axis=-1)
        return counts.astype(np.int64), spec, delta

    def verdicts(self, eta: float, seed: int, m_cap: int,
                 delta_override: Optional[float] = None
                 ) -> tuple[list[TestVerdict], noise.NoisySpec, float]:
        counts, spec, delta = self.counts(eta, seed, delta_override)
        out = [TestVerdict(voxel=v, counts=tuple(int(c) for c in counts[v]),
                           m_cap=int(m_cap), delta=delta, mode=self.mode)
               for v in range(self.grid.n_voxels)]
        return out, spec, delta


def _scene_objects(scenario: Scenario):
    mesh, layout, grid = scenario.build_model()
    loads = assembly.assemble_loads(mesh, layout, scenario.load_directions)
    background = model.make_material_field(
        scenario.background, (), grid)
    true_field = model.make_material_field(
        scenario.background, scenario.resolved_inclusions(grid), grid)
    return mesh, layout, grid, loads, background, true_field


def _true_measurement(mesh, layout, loads, true_field, omega, load_mode, cache=None):
    key = None
    if cache is not None:
        key = forward_cache_key(mesh, layout, true_field, omega, load_mode)
        hit = cache.load(key)
        if hit is not None:
            return hit
    k = assembly.assemble_stiffness(mesh, true_field)
    m = assembly.assemble_mass(mesh, true_field.rho)
    fact = forward.factorize_system(k, m, omega, layout)
    matrix = forward.ntd_matrix(fact, loads,
                                field_signature=true_field.signature()).matrix
    if cache is not None:
        cache.store(key, matrix)
    return matrix


def prepare_standard(scenario: Scenario, threads: int = 1,
                     cache=None) -> PreparedReconstruction:
    """Forward-solve the test measurement for every voxel and contrast setting.

    ``cache`` may be an ``NtdCache``; each per-voxel test measurement is then
    keyed by the content hash of its own coefficient field.
    """
    scenario = scenario.validated()
    mesh, layout, grid, loads, background, true_field = _scene_objects(scenario)
    settings = scenario.standard_alpha_settings()
    ntd_true = _true_measurement(mesh, layout, loads, true_field, scenario.omega,
                                 scenario.load_directions, cache)

    k0 = assembly.assemble_stiffness(mesh, background)
    m0 = assembly.assemble_mass(mesh, background.rho)
    nv, ns, m = grid.n_voxels, len(settings), loads.n_loads
    tests = np.empty((nv, ns, m, m))

    def per_voxel(v: int) -> None:
        k_lam_b = k_mu_b = m_b = None
        for s, (a1, a2, a3) in enumerate(settings):
            key = None
            if cache is not None:
                test_field = model.make_test_coefficients(
                    scenario.background, [v], (a1, a2, a3), grid)
                key = forward_cache_key(mesh, layout, test_field, scenario.omega,
                                        scenario.load_directions)
                hit = cache.load(key)
                if hit is not None:
                    tests[v, s] = hit
                    continue
            if k_lam_b is None:
                k_lam_b, k_mu_b, m_b = assembly.voxel_unit_matrices(mesh, grid, [v])
            k_test = k0 + a1 * k_lam_b + a2 * k_mu_b
            m_test = m0 - a3 * m_b
            fact = forward.factorize_system(k_test, m_test, scenario.omega, layout)
            tests[v, s] = forward.ntd_matrix(fact, loads).matrix
            if cache is not None:
                cache.store(key, tests[v, s])

    _run_indexed(per_voxel, nv, threads)
    return PreparedReconstruction(scenario=scenario, mode="standard", grid=grid,
                                  alpha_settings=settings, ntd_true=ntd_true,
                                  ntd_norm=spectral.spectral_norm(ntd_true),
                                  test_matrices=tests)


def prepare_linearized(scenario: Scenario, threads: int = 1,
                       cache=None) -> PreparedReconstruction:
    """Background solves once, then per-voxel derivative matrices from Grams.

    With a cache, both the true-field measurement and the background solution
    bank are stored keyed by their content hashes.
    """
    scenario = scenario.validated()
    mesh, layout, grid, loads, background, true_field = _scene_objects(scenario)
    settings = scenario.linearized_alpha_settings()
    ntd_true = _true_measurement(mesh, layout, loads, true_field, scenario.omega,
                                 scenario.load_directions, cache)

    bank_key = None
    displacements = None
    if cache is not None:
        bank_key = forward_cache_key(mesh, layout, background, scenario.omega,
                                     scenario.load_directions) + "-bank"
        displacements = cache.load(bank_key)
    if displacements is None:
        k0 = assembly.assemble_stiffness(mesh, background)
        m0 = assembly.assemble_mass(mesh, background.rho)
        fact0 = forward.factorize_system(k0, m0, scenario.omega, layout)
        displacements = fact0.solve(loads.vectors)
        if cache is not None:
            cache.store(bank_key, displacements)
    bank = forward.SolutionBank(displacements=displacements, omega=scenario.omega,
                                mesh=mesh, field_signature=background.signature(),
                                load_signature=loads.signature())
    raw0 = loads.vectors.T @ displacements
    ntd0 = (raw0 + raw0.T) * 0.5

    nv, ns, m = grid.n_voxels, len(settings), loads.n_loads
    tests = np.empty((nv, ns, m, m))

    def per_voxel(v: int) -> None:
        div_g, sym_g, disp_g = forward._gram_accumulate(
            bank.displacements, mesh, grid.voxel_to_elements[v])
        w2 = scenario.omega ** 2
        for s, (a1, a2, a3) in enumerate(settings):
            derivative = -(a1 * div_g + a2 * sym_g + w2 * a3 * disp_g)
            tests[v, s] = ntd0 + derivative

    _run_indexed(per_voxel, nv, threads)
    return PreparedReconstruction(scenario=scenario, mode="linearized", grid=grid,
                                  alpha_settings=settings, ntd_true=ntd_true,
                                  ntd_norm=spectral.spectral_norm(ntd_true),
                                  test_matrices=tests)


def _run_indexed(fn, n: int, threads: int) -> None:
    """Run fn(i) for i in range(n); results land in preallocated slots, so the
    outcome is independent of the worker count."""
    if threads <= 1:
        for i in range(n):
            fn(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fn, range(n)))


# ---------------------------------------------------------------------------
# count-cap policies


def theory_mode_count(scenario: Scenario) -> tuple[int, bool]:
    """Positive mode count of the clamped background body, with a convergence
    flag from recomputing on a once-refined mesh."""
    counts = []
    for refine in (1, 2):
        res = tuple(r * refine for r in scenario.mesh_resolution)
        mesh = model.build_mesh(scenario.extent, res)
        layout = model.partition_boundary(mesh, scenario.dirichlet_sides,
                                          tuple(p * refine for p in scenario.patch_grid))
        n_elem = mesh.n_elements
        field = model.MaterialField(lam=np.full(n_elem, scenario.background[0]),
                                    mu=np.full(n_elem, scenario.background[1]),
                                    rho=np.full(n_elem, scenario.background[2]))
        k = assembly.assemble_stiffness(mesh, field)
        m_rho = assembly.assemble_mass(mesh, field.rho)
        m_unit = assembly.assemble_mass(mesh, np.ones(n_elem))
        free = forward.free_dof_indices(mesh.n_dofs, layout)
        counts.append(spectral.positive_mode_count(
            forward.reduce_matrix(k, free), forward.reduce_matrix(m_rho, free),
            forward.reduce_matrix(m_unit, free), scenario.omega))
    converged = counts[0] == counts[1]
    if not converged:
        log.warning("positive mode count not mesh-converged: %d vs %d on refinement",
                    counts[0], counts[1])
    return counts[0], converged


def _count_landscape_split(prepared: PreparedReconstruction, counts: np.ndarray
                           ) -> tuple[np.ndarray, np.ndarray]:
    truth = set(prepared.scenario.truth_voxels())
    if not truth:
        raise InfeasibleSweepError("calibration needs a scenario with declared inclusions")
    inside = fill_enclosed(truth, prepared.grid)
    best = counts.min(axis=1)
    inside_mask = np.zeros(prepared.grid.n_voxels, dtype=bool)
    inside_mask[sorted(inside)] = True
    return best[inside_mask], best[~inside_mask]


def calibrate_m_cap(prepared: PreparedReconstruction,
                    delta_override: Optional[float] = None) -> int:
    """Count cap from the noiseless landscape.

    Any cap in the window [M_min, M_max] reconstructs exactly at zero noise;
    the midpoint is returned because both window edges drift as the adaptive
    threshold grows with the noise level, and an edge choice loses all noise
    margin (counts right at zero shift as soon as delta > 0).
    """
    counts, _, _ = prepared.counts(0.0, 0, delta_override)
    inside, outside = _count_landscape_split(prepared, counts)
    m_min = int(inside.max())
    m_max = int(outside.min()) - 1
    if m_min > m_max:
        raise InfeasibleSweepError(
            f"no cap separates inside (max count {m_min}) from outside "
            f"(min count {m_max + 1}) at zero noise")
    mid = (m_min + m_max + 1) // 2
    return mid if prepared.mode == "standard" else mid + 1


def resolve_m_cap(prepared: PreparedReconstruction, policy,
                  delta_override: Optional[float] = None
                  ) -> tuple[int, Optional[int], Optional[bool]]:
    """Resolve a cap policy to (cap, theory count, theory converged flag)."""
    if isinstance(policy, (int, np.integer)):
        return int(policy), None, None
    if policy == "calibrate":
        return calibrate_m_cap(prepared, delta_override), None, None
    if policy == "theory":
        if prepared.mode != "standard":
            raise ConfigError(
                "the 'theory' cap policy applies to the standard mode only; "
                "the linearized cap has no a-priori value")
        d, converged = theory_mode_count(prepared.scenario)
        return d, d, converged
    raise ConfigError(f"unknown m_cap policy {policy!r}")


# ---------------------------------------------------------------------------
# reconstruction drivers


@dataclass(frozen=True)
class ReconResult:
    """Reconstruction output: accepted voxels, filled set, and run metadata."""

    mode: str
    accepted: tuple[int, ...]
    filled: tuple[int, ...]
    counts: tuple[int, ...]           # best count per voxel
    verdicts: tuple[TestVerdict, ...]
    noise: noise.NoisySpec
    delta: float                      # the threshold actually used
    m_cap: int
    m_cap_policy: str
    m_theory: Optional[int]
    theory_converged: Optional[bool]
    grid_resolution: tuple[int, int, int]
    alpha_settings: tuple[tuple[float, float, float], ...]
    scenario_doc: dict

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "mode": self.mode,
            "resolution": list(self.grid_resolution),
            "accepted": list(self.accepted),
            "filled": list(self.filled),
            "counts": list(self.counts),
            "eta": self.noise.eta,
            "seed": self.noise.seed,
            "delta_realized": self.noise.delta,
            "delta_used": self.delta,
            "m_cap": self.m_cap,
            "m_cap_policy": self.m_cap_policy,
            "m_theory": self.m_theory,
            "theory_converged": self.theory_converged,
            "alpha_settings": [list(s) for s in self.alpha_settings],
            "config": self.scenario_doc,
        }


def _finish(prepared: PreparedReconstruction, eta: float, seed: int, policy,
            delta_override: Optional[float]) -> ReconResult:
    m_cap, m_theory, converged = resolve_m_cap(prepared, policy, delta_override)
    verdicts, spec, delta = prepared.verdicts(eta, seed, m_cap, delta_override)
    accepted = tuple(v.voxel for v in verdicts if v.accepted)
    filled = tuple(sorted(fill_enclosed(accepted, prepared.grid)))
    policy_name = str(policy) if isinstance(policy, str) else "explicit"
    return ReconResult(mode=prepared.mode, accepted=accepted, filled=filled,
                       counts=tuple(v.count for v in verdicts), verdicts=tuple(verdicts),
                       noise=spec, delta=delta, m_cap=m_cap, m_cap_policy=policy_name,
                       m_theory=m_theory, theory_converged=converged,
                       grid_resolution=prepared.grid.resolution,
                       alpha_settings=prepared.alpha_settings,
                       scenario_doc=prepared.scenario.to_dict())


def reconstruct_standard(scenario: Scenario, eta: Optional[float] = None,
                         seed: Optional[int] = None, m_cap=None,
                         alpha_settings=None, threads: int = 1,
                         cache=None) -> ReconResult:
    """Full reconstruction with per-voxel forward solves."""
    scenario = _with_overrides(scenario, alpha_settings)
    prepared = prepare_standard(scenario, threads=threads, cache=cache)
    return _finish(prepared,
                   scenario.eta if eta is None else float(eta),
                   scenario.seed if seed is None else int(seed),
                   scenario.m_cap_policy if m_cap is None else m_cap,
                   scenario.delta_override)


def reconstruct_linearized(scenario: Scenario, eta: Optional[float] = None,
                           seed: Optional[int] = None, m_cap=None,
                           alpha_settings=None, threads: int = 1,
                           cache=None) -> ReconResult:
    """Reconstruction from background solves and per-voxel derivatives only."""
    scenario = _with_overrides(scenario, alpha_settings)
    prepared = prepare_linearized(scenario, threads=threads, cache=cache)
    return _finish(prepared,
                   scenario.eta if eta is None else float(eta),
                   scenario.seed if seed is None else int(seed),
                   scenario.m_cap_policy if m_cap is None else m_cap,
                   scenario.delta_override)


def _with_overrides(scenario: Scenario, alpha_settings) -> Scenario:
    if alpha_settings is None:
        return scenario
    return replace(scenario, alpha_settings=tuple(tuple(float(v) for v in s)
                                                  for s in alpha_settings))


# ---------------------------------------------------------------------------
# noise-level sweeps and breakdown search


@dataclass(frozen=True)
class SweepRow:
    eta: float
    delta: float
    m_min: int
    m_max: int

    @property
    def feasible(self) -> bool:
        return self.m_min <= self.m_max


@dataclass(frozen=True)
class SweepReport:
    """Feasible cap window per noise level for a known synthetic truth."""

    mode: str
    seed: int
    rows: tuple[SweepRow, ...]
    scenario_doc: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("eta,delta,M_min,M_max,feasible\n")
        for r in self.rows:
            buf.write(f"{r.eta!r},{r.delta!r},{r.m_min},{r.m_max},"
                      f"{'true' if r.feasible else 'false'}\n")
        return buf.getvalue()

    @property
    def feasible_all(self) -> bool:
        return all(r.feasible for r in self.rows)


def m_delta_sweep(scenario: Scenario, eta_list: Sequence[float], seed: int,
                  alpha_settings=None, mode: str = "standard", threads: int = 1,
                  prepared: Optional[PreparedReconstruction] = None) -> SweepReport:
    """Tabulate the cap window [M_min, M_max] over noise levels.

    M_min is the worst (largest) count over voxels inside the true support,
    M_max one less than the best count outside; a correct reconstruction at
    that noise level is possible iff M_min <= M_max.
    """
    if prepared is None:
        scenario = _with_overrides(scenario, alpha_settings)
        if mode == "standard":
            prepared = prepare_standard(scenario, threads=threads)
        elif mode == "linearized":
            prepared = prepare_linearized(scenario, threads=threads)
        else:
            raise ValueError(f"unknown sweep mode {mode!r}")
    rows = []
    for eta in eta_list:
        counts, spec, delta = prepared.counts(float(eta), seed,
                                              prepared.scenario.delta_override)
        inside, outside = _count_landscape_split(prepared, counts)
        rows.append(SweepRow(eta=float(eta), delta=delta,
                             m_min=int(inside.max()), m_max=int(outside.min()) - 1))
    return SweepReport(mode=prepared.mode, seed=int(seed), rows=tuple(rows),
                       scenario_doc=prepared.scenario.to_dict())


@dataclass(frozen=True)
class BreakdownResult:
    """Largest tested noise level that still reproduces the zero-noise result."""

    eta_star: float
    eta_fail: float
    tested: tuple[tuple[float, bool], ...]


def noise_breakdown(prepared: PreparedReconstruction, m_cap: int, seed: int,
                    eta_start: float = 1e-3, eta_max: float = 2.0,
                    rel_tol: float = 0.2,
                    delta_override: Optional[float] = None) -> BreakdownResult:
    """Bisect for the noise level where the reconstruction first changes.

    Returns eta_star (largest tested passing level; every tested level at or
    below it passed) and eta_fail (smallest tested failing level).
    """
    reference = _filled_set(prepared, 0.0, seed, m_cap, delta_override)
    tested: list[tuple[float, bool]] = []

    def ok(eta: float) -> bool:
        same = _filled_set(prepared, eta, seed, m_cap, delta_override) == reference
        tested.append((eta, same))
        return same

    lo, hi = 0.0, None
    eta = eta_start
    while eta <= eta_max:
        if ok(eta):
            lo = eta
        else:
            hi = eta
            break
        eta *= 4.0
    if hi is None:
        raise RuntimeError(f"no breakdown found up to eta={eta_max}")
    if lo == 0.0:
        lo = hi / 4096.0
        while not ok(lo):
            hi = lo
            lo /= 4096.0
            if lo < 1e-15:
                raise RuntimeError("reconstruction unstable at vanishing noise")
    while hi / lo > 1.0 + rel_tol:
        mid = float(np.sqrt(lo * hi))
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return BreakdownResult(eta_star=lo, eta_fail=hi, tested=tuple(tested))


def _filled_set(prepared: PreparedReconstruction, eta: float, seed: int, m_cap: int,
                delta_override: Optional[float]) -> frozenset[int]:
    verdicts, _, _ = prepared.verdicts(eta, seed, m_cap, delta_override)
    accepted = [v.voxel for v in verdicts if v.accepted]
    return frozenset(fill_enclosed(accepted, prepared.grid))


def accepted_flags(prepared: PreparedReconstruction, eta: float, seed: int, m_cap: int,
                   delta_override: Optional[float] = None) -> np.ndarray:
    """Boolean per-voxel verdict vector for one noise realization."""
    verdicts, _, _ = prepared.verdicts(eta, seed, m_cap, delta_override)
    return np.array([v.accepted for v in verdicts], dtype=bool)
