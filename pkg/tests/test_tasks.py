import math

import numpy as np
import pytest

import oracles
from gwbregman.core import Algorithm, Graph, SolverConfig
from gwbregman.tasks import (
    AlignmentInstance,
    PartitionInstance,
    PointCloud2D,
    Shape,
    add_noise,
    adjacency_distance,
    alignment_accuracy,
    ami_score,
    euclidean_distance_matrix,
    expected_mutual_info,
    gen_barabasi_albert,
    gen_gaussian_partition,
    hard_assignment,
    make_alignment_instance,
    make_match2d_pair,
    partition_target,
    permute_graph,
    random_coupling,
    rotate_2d,
    run_alignment,
    run_match2d,
    run_partition,
    sample_2d_shape,
)


class TestBarabasiAlbert:
    def test_two_nodes(self):
        assert gen_barabasi_albert(2, 1).edges == ((0, 1),)

    def test_edge_count(self):
        # clique on 3 nodes plus 2 edges for each of the other 47
        assert gen_barabasi_albert(50, 2, seed=3).num_edges == 3 + 2 * 47

    def test_deterministic(self):
        assert gen_barabasi_albert(30, 2, seed=5) == gen_barabasi_albert(30, 2, seed=5)
        assert gen_barabasi_albert(30, 2, seed=5) != gen_barabasi_albert(30, 2, seed=6)

    def test_min_degree(self):
        deg = gen_barabasi_albert(40, 3, seed=1).adjacency().sum(1)
        assert deg.min() >= 3

    @pytest.mark.parametrize("n,m", [(3, 0), (3, 3)])
    def test_invalid(self, n, m):
        with pytest.raises(ValueError):
            gen_barabasi_albert(n, m)


class TestGaussianPartition:
    def test_two_cliques(self):
        inst = gen_gaussian_partition(4, 2, p_in=1.0, p_out=0.0, seed=0, size_std=0.0)
        assert inst.graph.edges == ((0, 1), (2, 3))
        np.testing.assert_array_equal(inst.ground_truth_labels, [0, 0, 1, 1])

    def test_single_node(self):
        inst = gen_gaussian_partition(1, 1)
        assert inst.graph.num_edges == 0 and inst.ground_truth_labels.tolist() == [0]

    def test_sizes_sum_and_positive(self):
        for seed in range(20):
            labels = gen_gaussian_partition(30, 4, seed=seed).ground_truth_labels
            counts = np.bincount(labels, minlength=4)
            assert counts.sum() == 30 and counts.min() >= 1

    def test_intra_denser_than_inter(self):
        for seed in range(20):
            inst = gen_gaussian_partition(60, 3, seed=seed)
            A = inst.graph.adjacency()
            same = inst.ground_truth_labels[:, None] == inst.ground_truth_labels[None, :]
            intra = A[same].sum() / (same.sum() - 60)
            inter = A[~same].sum() / (~same).sum()
            assert intra > inter

    @pytest.mark.parametrize("kw", [{"p_in": 0.1, "p_out": 0.2}, {"k": 0}, {"k": 9}])
    def test_invalid(self, kw):
        args = {"n": 5, "k": 2, **kw}
        with pytest.raises(ValueError):
            gen_gaussian_partition(**args)


class TestNoise:
    SQUARE = Graph(4, ((0, 1), (1, 2), (2, 3), (0, 3)))

    def test_counts(self):
        g = add_noise(self.SQUARE, 50, seed=0)
        assert g.num_nodes == 6 and g.num_edges == 6

    def test_floor(self):
        g = add_noise(self.SQUARE, 30, seed=0)
        assert g.num_nodes == 5 and g.num_edges == 5

    def test_zero_noise_identity(self):
        assert add_noise(self.SQUARE, 0) == self.SQUARE

    def test_original_edges_kept(self):
        g = gen_barabasi_albert(30, 2, seed=0)
        noisy = add_noise(g, 10, seed=4)
        assert set(g.edges) <= set(noisy.edges)

    def test_too_dense(self):
        # K5 at 10%: no new node, one new edge, but no free pair
        k5 = Graph(5, tuple((a, b) for a in range(5) for b in range(a + 1, 5)))
        with pytest.raises(ValueError, match="free"):
            add_noise(k5, 10)


class TestPermute:
    def test_preserves_structure(self):
        g = gen_barabasi_albert(20, 2, seed=0)
        h, perm = permute_graph(g, seed=1)
        A, B = g.adjacency(), h.adjacency()
        np.testing.assert_array_equal(B[np.ix_(perm, perm)], A)
        assert sorted(perm.tolist()) == list(range(20))

    def test_alignment_instance_ground_truth(self):
        g = gen_barabasi_albert(25, 2, seed=2)
        inst = make_alignment_instance(g, 10, seed=3)
        A, B = g.adjacency(), inst.target.adjacency()
        gt = inst.ground_truth
        # every source edge survives under the ground-truth map
        assert np.all(B[np.ix_(gt, gt)] >= A)
        assert inst.target.num_nodes == 27

    def test_instance_rejects_non_injective(self):
        g = Graph(2, ((0, 1),))
        with pytest.raises(ValueError):
            AlignmentInstance(g, g, [0, 0])


def test_distances():
    np.testing.assert_array_equal(adjacency_distance(Graph(2, ((0, 1),))).entries, [[0, 1], [1, 0]])
    D = euclidean_distance_matrix(PointCloud2D([[0, 0], [3, 4], [0, 4]]))
    np.testing.assert_allclose(D.entries, [[0, 5, 4], [5, 0, 3], [4, 3, 0]])


class TestScores:
    def test_hard_assignment_ties_low_index(self):
        np.testing.assert_array_equal(hard_assignment([[0.2, 0.2], [0.1, 0.3]]), [0, 1])

    def test_accuracy(self):
        assert alignment_accuracy([1, 0, 2], [1, 0, 2]) == 100.0
        assert alignment_accuracy([1, 1, 2, 0], [1, 0, 2, 3]) == 50.0
        assert alignment_accuracy([5, 6, 7], {0: 5, 2: 0}) == 50.0

    def test_partition_target(self):
        D, nu = partition_target(3)
        np.testing.assert_array_equal(D.entries, np.eye(3))
        np.testing.assert_allclose(nu.weights, 1 / 3)

    def test_ami_identical_and_relabelled(self):
        a = [0, 0, 1, 1, 2, 2]
        assert ami_score(a, a) == pytest.approx(1.0)
        assert ami_score(a, [2, 2, 0, 0, 1, 1]) == pytest.approx(1.0)

    def test_ami_constant_labeling(self):
        assert ami_score([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0
        assert ami_score([0], [0]) == 0.0

    def test_ami_length_mismatch(self):
        with pytest.raises(ValueError):
            ami_score([0, 1], [0])

    def test_emi_against_permutation_average(self):
        a, b = [0, 0, 1, 1, 2], [0, 1, 1, 0, 0]
        rs, cs = np.bincount(a), np.bincount(b)
        assert expected_mutual_info(rs, cs, 5) == pytest.approx(oracles.emi_permutations(a, b), abs=1e-12)

    @pytest.mark.parametrize("seed", range(30))
    def test_ami_against_exact_oracle(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 30))
        a = r.integers(0, int(r.integers(1, 5)), size=n).tolist()
        b = r.integers(0, int(r.integers(1, 5)), size=n).tolist()
        assert ami_score(a, b) == pytest.approx(oracles.ami_bruteforce(a, b), abs=1e-10)


class TestShapes:
    @pytest.mark.parametrize("shape", list(Shape))
    def test_sample(self, shape):
        p = sample_2d_shape(25, shape, seed=1)
        assert len(p) == 25
        np.testing.assert_array_equal(p.points, sample_2d_shape(25, shape.value.lower(), seed=1).points)

    def test_rotation_examples(self):
        p = PointCloud2D([[1.0, 0.0], [0.0, 2.0]])
        np.testing.assert_allclose(rotate_2d(p, math.pi / 2).points, [[0, 1], [-2, 0]], atol=1e-15)
        np.testing.assert_allclose(rotate_2d(p, 0.0).points, p.points)

    def test_rotation_preserves_distances(self):
        p = sample_2d_shape(15, "CROSS", seed=2)
        np.testing.assert_allclose(euclidean_distance_matrix(rotate_2d(p, 0.7)).entries,
                                   euclidean_distance_matrix(p).entries, atol=1e-12)

    def test_pair_with_zero_angle_coincides(self):
        s, t = make_match2d_pair(12, 12, "RING", angle_deg=0, seed=3)
        np.testing.assert_array_equal(s.points, t.points)
        s, t = make_match2d_pair(12, 15, "RING", angle_deg=0, seed=3)
        assert len(t) == 15

    def test_bad_cloud(self):
        with pytest.raises(ValueError):
            PointCloud2D(np.zeros((3, 3)))


def test_random_coupling_feasible():
    mu, nu = np.full(4, 0.25), np.full(3, 1 / 3)
    P = random_coupling(mu, nu, seed=2)
    assert P.min() > 0
    np.testing.assert_allclose(P.sum(1), mu, atol=1e-12)
    np.testing.assert_allclose(P.sum(0), nu, atol=1e-12)


class TestRunners:
    def test_alignment_reaches_isomorphism_value(self):
        # leaves sharing a neighbour are interchangeable, so check the objective:
        # a perfect matching scores -2|E| / n^2
        g = gen_barabasi_albert(15, 2, seed=0)
        inst = make_alignment_instance(g, 0, seed=0)
        out = run_alignment(inst, SolverConfig(algorithm=Algorithm.BPG, step=1.0))
        assert out.objective == pytest.approx(-2 * g.num_edges / 15 ** 2, abs=1e-5)
        assert out.accuracy >= 80.0
        assert out.marginal_infeasibility <= 1e-8

    def test_alignment_deterministic(self):
        inst = make_alignment_instance(gen_barabasi_albert(20, 2, seed=1), 10, seed=1)
        cfg = SolverConfig(max_iters=50)
        a, b = run_alignment(inst, cfg), run_alignment(inst, cfg)
        np.testing.assert_array_equal(a.coupling, b.coupling)
        assert a.accuracy == b.accuracy

    def test_partition_two_cliques(self):
        inst = gen_gaussian_partition(20, 2, p_in=1.0, p_out=0.0, seed=0)
        out = run_partition(inst, SolverConfig(seed=0))
        assert out.ami == pytest.approx(1.0)

    def test_partition_labels_checked(self):
        with pytest.raises(ValueError):
            PartitionInstance(Graph(2), 2, [0, 2])

    @pytest.mark.parametrize("alg", [Algorithm.BAPG, Algorithm.BPG, Algorithm.FW])
    def test_match2d_descends_from_product(self, alg):
        s, t = make_match2d_pair(12, 14, "CROSS", seed=0)
        D_X, D_Y = euclidean_distance_matrix(s).entries, euclidean_distance_matrix(t).entries
        start = -np.sum((D_X @ np.full((12, 14), 1 / 168) @ D_Y) / 168)
        out = run_match2d(s, t, SolverConfig(algorithm=alg, max_iters=100))
        assert out.objective < start
        assert out.entropy > 0
