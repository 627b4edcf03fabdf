import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monoelast import assembly, forward, model, spectral
from oracles import eig_sym_sturm


class TestEigSym:
    def test_diagonal(self):
        eigs = spectral.eig_sym(np.diag([3.0, -1.0, 2.0]))
        assert eigs.tolist() == [-1.0, 2.0, 3.0]

    def test_zero_matrix(self):
        eigs = spectral.eig_sym(np.zeros((5, 5)))
        assert np.all(eigs == 0.0)

    def test_multiplicity_preserved(self):
        eigs = spectral.eig_sym(np.diag([2.0, 2.0, 2.0, -1.0]))
        assert np.count_nonzero(eigs == 2.0) == 3

    def test_against_sturm_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 50))
            a = rng.standard_normal((n, n))
            a = (a + a.T) / 2
            norm = np.linalg.norm(a, 2)
            assert np.abs(spectral.eig_sym(a) - eig_sym_sturm(a)).max() <= 1e-10 * norm

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            spectral.eig_sym(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            spectral.eig_sym(np.zeros((2, 3)))


class TestCountBelow:
    def test_basic(self):
        assert spectral.count_below(np.array([-3.0, -1.0, 0.5]), -2.0) == 1
        assert spectral.count_below(np.array([-3.0, -1.0, 0.5]), 0.0) == 2

    def test_strict_at_boundary(self):
        delta = 1e-6
        eigs = np.array([-delta - 1e-15, -delta])
        assert spectral.count_below(eigs, -delta) == 1

    @given(st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=40),
           st.floats(-1e6, 1e6))
    @settings(max_examples=200, deadline=None)
    def test_matches_direct_count(self, values, threshold):
        eigs = np.sort(np.asarray(values))
        assert spectral.count_below(eigs, threshold) == int((eigs < threshold).sum())

    # power-of-two scales make the rescaling exact in binary floating point,
    # which is what the exact-arithmetic invariance means for floats
    _finite = st.one_of(st.just(0.0), st.floats(1e-3, 1e3), st.floats(-1e3, -1e-3))

    @given(st.lists(_finite, min_size=1, max_size=20), _finite,
           st.integers(-40, 40).map(lambda k: 2.0 ** k))
    @settings(max_examples=100, deadline=None)
    def test_scale_invariance(self, values, threshold, scale):
        a = np.diag(np.asarray(values))
        lhs = spectral.count_below(spectral.eig_sym(scale * a), scale * threshold)
        rhs = spectral.count_below(spectral.eig_sym(a), threshold)
        assert lhs == rhs


def _reduced_matrices(mesh, layout, lam, mu, rho):
    field = model.MaterialField(lam=lam, mu=mu, rho=rho)
    k = assembly.assemble_stiffness(mesh, field)
    m_rho = assembly.assemble_mass(mesh, rho)
    m_unit = assembly.assemble_mass(mesh, np.ones(mesh.n_elements))
    free = forward.free_dof_indices(mesh.n_dofs, layout)
    red = lambda a: forward.reduce_matrix(a, free)
    return red(k), red(m_rho), red(m_unit)


class TestPositiveModeCount:
    def test_zero_frequency_gives_zero(self, mesh3, layout3, background):
        n = mesh3.n_elements
        k, m_rho, m_unit = _reduced_matrices(
            mesh3, layout3, np.full(n, background[0]), np.full(n, background[1]),
            np.full(n, background[2]))
        assert spectral.positive_mode_count(k, m_rho, m_unit, 0.0) == 0

    def test_one_count_just_above_first_resonance(self):
        # an anisotropic box keeps the first resonance simple
        import scipy.linalg as sla
        mesh = model.build_mesh((1.0, 0.8, 0.6), (3, 2, 2))
        layout = model.partition_boundary(mesh, ("z-",), (1, 1))
        n = mesh.n_elements
        k, m_rho, m_unit = _reduced_matrices(
            mesh, layout, np.ones(n), np.ones(n), np.ones(n))
        resonances = sla.eigh(k.toarray(), m_rho.toarray(), eigvals_only=True)
        assert resonances[1] > resonances[0] * (1 + 1e-6)
        omega = np.sqrt(0.75 * resonances[0] + 0.25 * resonances[1])
        assert spectral.positive_mode_count(k, m_rho, m_unit, omega) == 1

    def test_reference_background_count_matches_qz_oracle(self, background):
        import scipy.linalg as sla
        mesh = model.build_mesh(1.0, 4)  # 375 dofs total
        layout = model.partition_boundary(mesh, ("z-",), (2, 2))
        n = mesh.n_elements
        k, m_rho, m_unit = _reduced_matrices(
            mesh, layout, np.full(n, background[0]), np.full(n, background[1]),
            np.full(n, background[2]))
        d = spectral.positive_mode_count(k, m_rho, m_unit, 50.0)
        # independent oracle: QZ on the unsymmetrized generalized problem
        lhs = -(k.toarray() - 2500.0 * m_rho.toarray())
        vals = sla.eig(lhs, m_unit.toarray(), right=False)
        assert np.abs(vals.imag).max() < 1e-6 * np.abs(vals.real).max()
        assert d == int((vals.real > 0).sum())
        assert d > 0

    def test_singular_displacement_pairing_is_internal_error(self, mesh3, layout3,
                                                             background):
        n = mesh3.n_elements
        k, m_rho, _ = _reduced_matrices(
            mesh3, layout3, np.full(n, background[0]), np.full(n, background[1]),
            np.full(n, background[2]))
        with pytest.raises(RuntimeError):
            spectral.positive_mode_count(k, m_rho, np.zeros(k.shape), 50.0)

    def test_monotone_in_omega(self, background):
        mesh = model.build_mesh(1.0, 2)
        layout = model.partition_boundary(mesh, ("z-",), (1, 1))
        n = mesh.n_elements
        k, m_rho, m_unit = _reduced_matrices(
            mesh, layout, np.full(n, background[0]), np.full(n, background[1]),
            np.full(n, background[2]))
        counts = [spectral.positive_mode_count(k, m_rho, m_unit, w)
                  for w in (0.0, 2.0, 5.0, 20.0, 50.0, 100.0)]
        assert counts == sorted(counts)
        assert counts[-1] > 0


class TestEigenReport:
    def test_consistency_and_csv(self):
        report = spectral.EigenReport.from_matrix(np.diag([-2.0, 1.0]), -1e-6,
                                                  matrix_id="demo")
        assert report.count_below == 1
        text = report.to_csv()
        lines = text.strip().split("\n")
        assert lines[0].startswith("# matrix_id=demo")
        assert lines[1] == "index,eigenvalue"
        assert len(lines) == 4
        # counts recomputable from the rows
        values = [float(line.split(",")[1]) for line in lines[2:]]
        assert sum(v < report.threshold for v in values) == report.count_below
