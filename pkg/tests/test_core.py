import numpy as np
import pytest

from gwbregman.core import (
    EPSILON_GRID,
    Algorithm,
    Coupling,
    DimensionMismatchError,
    DistanceMatrix,
    Geometry,
    Graph,
    NumericalInstabilityError,
    ProbabilityVector,
    SolverConfig,
    SplitIterate,
    product_coupling,
    read_edge_list,
    validate_inputs,
    write_edge_list,
)


class TestDistanceMatrix:
    def test_symmetrises(self):
        D = DistanceMatrix([[0, 1], [3, 0]])
        np.testing.assert_array_equal(D.entries, [[0, 2], [2, 0]])

    def test_symmetric_input_unchanged(self):
        a = np.array([[0.0, 0.3], [0.3, 0.0]])
        np.testing.assert_array_equal(DistanceMatrix(a).entries, a)

    @pytest.mark.parametrize("bad", [
        [[0, -1], [-1, 0]],
        [[0, np.nan], [np.nan, 0]],
        [[0, 1, 2], [1, 0, 2]],
        np.zeros((0, 0)),
    ])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            DistanceMatrix(bad)

    def test_is_read_only_and_array_like(self):
        D = DistanceMatrix(np.eye(3))
        with pytest.raises(ValueError):
            D.entries[0, 0] = 5
        assert np.asarray(D).shape == (3, 3)
        assert D.size == 3


class TestProbabilityVector:
    def test_uniform(self):
        np.testing.assert_allclose(ProbabilityVector.uniform(4).weights, 0.25)

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [1.0, 0.0], [-0.5, 1.5], [], [[1.0]]])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            ProbabilityVector(bad)


class TestCoupling:
    def test_mass_checked(self):
        with pytest.raises(ValueError):
            Coupling([[0.5, 0.6]])
        with pytest.raises(ValueError):
            Coupling([[1.5, -0.5]])

    def test_marginals_not_enforced(self):
        C = Coupling([[1.0, 0.0], [0.0, 0.0]])
        assert (C.rows, C.cols) == (2, 2)


def test_split_iterate_checked():
    mu = nu = np.array([0.5, 0.5])
    pi = np.array([[0.5, 0.0], [0.1, 0.4]])   # rows ok, columns not
    w = np.array([[0.3, 0.2], [0.2, 0.3]])
    s = SplitIterate.checked(pi, w, mu, nu)
    np.testing.assert_allclose(s.average, (pi + w) / 2)
    with pytest.raises(ValueError, match="column"):
        SplitIterate.checked(pi, pi, mu, nu)
    with pytest.raises(ValueError, match="row"):
        SplitIterate.checked(w.T @ np.diag([1.2, 0.8]), w, mu, nu)


class TestGraph:
    def test_canonical_edges(self):
        g = Graph(3, ((2, 0), (0, 2), (1, 0)))
        assert g.edges == ((0, 1), (0, 2))
        assert g.num_edges == 2

    def test_adjacency(self):
        np.testing.assert_array_equal(Graph(2, ((0, 1),)).adjacency(), [[0, 1], [1, 0]])
        np.testing.assert_array_equal(Graph(3).adjacency(), np.zeros((3, 3)))

    @pytest.mark.parametrize("edges", [((1, 1),), ((0, 3),), ((-1, 0),)])
    def test_rejects(self, edges):
        with pytest.raises(ValueError):
            Graph(3, edges)

    def test_edge_list_roundtrip(self, tmp_path):
        g = Graph(5, ((0, 1), (1, 2), (3, 1)))
        path = tmp_path / "g.txt"
        write_edge_list(g, path)
        assert read_edge_list(path) == g  # the header keeps isolated node 4

    def test_edge_list_without_header(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("# a triangle\n0 1\n1 2\n\n2 0\n")
        g = read_edge_list(path)
        assert g.num_nodes == 3 and g.num_edges == 3

    @pytest.mark.parametrize("body,line", [("0 1\n1 x\n", 2), ("0 1 2\n", 1), ("n\n", 1)])
    def test_edge_list_errors_name_line(self, tmp_path, body, line):
        path = tmp_path / "bad.txt"
        path.write_text(body)
        with pytest.raises(ValueError, match=f":{line}:"):
            read_edge_list(path)


class TestValidateInputs:
    def test_ok(self):
        validate_inputs(np.zeros((3, 3)), np.zeros((4, 4)), np.full(3, 1 / 3), np.full(4, 0.25))
        validate_inputs(np.zeros((1, 1)), np.zeros((1, 1)), [1.0], [1.0])

    def test_mismatch_names_pair(self):
        with pytest.raises(DimensionMismatchError, match="D_X"):
            validate_inputs(np.zeros((3, 3)), np.zeros((4, 4)), np.full(4, 0.25), np.full(3, 1 / 3))


@pytest.mark.parametrize("mu,nu,expected", [
    ([1.0], [1.0], [[1.0]]),
    ([0.5, 0.5], [0.5, 0.5], [[0.25, 0.25], [0.25, 0.25]]),
    ([0.3, 0.7], [0.5, 0.5], [[0.15, 0.15], [0.35, 0.35]]),
])
def test_product_coupling(mu, nu, expected):
    np.testing.assert_allclose(product_coupling(mu, nu).entries, expected, atol=1e-15)


class TestSolverConfig:
    def test_protocol_defaults(self):
        cfg = SolverConfig()
        assert cfg.algorithm is Algorithm.BAPG
        assert cfg.geometry is Geometry.ENTROPY
        assert cfg.rel_tol == 1e-6
        assert cfg.max_iters == 2000
        assert cfg.rho == 0.1
        assert cfg.step == 5.0
        assert cfg.epsilon_reg in EPSILON_GRID
        assert EPSILON_GRID == (0.1, 0.01, 0.001)
        assert cfg.perturbation == 0.0
        assert cfg.switch_iters == 200

    def test_strings_accepted(self):
        cfg = SolverConfig(algorithm="ebpg", geometry="quadratic")
        assert cfg.algorithm is Algorithm.EBPG and cfg.geometry is Geometry.QUADRATIC

    @pytest.mark.parametrize("kw", [
        {"rho": 0}, {"step": -1}, {"epsilon_reg": 0}, {"max_iters": 0}, {"inner_iters": 0},
        {"perturbation": 1.0}, {"switch_iters": -1}, {"algorithm": "SGD"},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_replace(self):
        cfg = SolverConfig().replace(rho=0.5)
        assert cfg.rho == 0.5 and cfg.step == 5.0


def test_instability_message_names_solver_and_iteration():
    err = NumericalInstabilityError("overflow", "BPG", 7)
    assert str(err) == "[BPG] iteration 7: overflow"
    assert (err.solver, err.iteration) == ("BPG", 7)
