import numpy as np
import pytest

from latentcf import world as lw
from latentcf.baselines import (
    GeneticAlgorithmBaseline,
    GradientDescentBaseline,
    HillClimbBaseline,
    ga_fitness,
)

from conftest import make_linear_classifier


@pytest.fixture(scope="module")
def axis_setup():
    """Default ladder world with a hand-built axis-aligned linear predictor."""
    world = lw.WorldConfig()
    cb = world.codebook()
    axis = cb.vectors[cb.alphabet.index("W")] - cb.vectors[cb.alphabet.index("G")]
    axis /= np.linalg.norm(axis)
    weights = np.zeros((world.length, world.dim))
    for pos in (2, 5, 8):
        weights[pos] = axis / np.sqrt(3)
    clf = make_linear_classifier(weights, bias=-6.0)
    return world, cb, clf


def random_source_embedding(world, cb, clf, rng):
    while True:
        seq = "".join(cb.alphabet[i] for i in rng.integers(0, len(cb.alphabet), size=world.length))
        z = lw.encode(seq, cb)
        if clf.logit(z) < 0:
            return z


class TestGradientDescent:
    def test_zero_learning_rate_changes_nothing(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(0)
        z0 = random_source_embedding(world, cb, clf, rng)
        gd = GradientDescentBaseline(learning_rate=0.0).fit(clf, cb)
        result = gd.explain(z0, 1, rng=rng)
        assert not result.success
        assert np.array_equal(result.final_embedding, z0)
        assert result.edit_distance == 0

    def test_confidence_climbs_on_linear_model(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(1)
        z0 = random_source_embedding(world, cb, clf, rng)
        gd = GradientDescentBaseline(learning_rate=1e-2, steps=50).fit(clf, cb)
        result = gd.explain(z0, 1, rng=rng)
        assert result.best_confidence > result.confidence_trace[0]

    def test_success_never_reported_with_zero_edits(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(2)
        gd = GradientDescentBaseline().fit(clf, cb)
        for _ in range(5):
            result = gd.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
            if result.success:
                assert result.edit_distance >= 1

    def test_phase_timers_present(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(3)
        gd = GradientDescentBaseline(steps=5).fit(clf, cb)
        result = gd.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
        assert result.phase_seconds["gradient"] > 0


class TestHillClimb:
    def test_accepted_confidences_strictly_increase(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(4)
        hc = HillClimbBaseline(max_steps=50).fit(clf, cb)
        result = hc.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
        trace = result.confidence_trace
        accepted = [trace[i] for i in range(1, len(trace)) if trace[i] != trace[i - 1]]
        assert all(b > a for a, b in zip([trace[0]] + accepted, accepted))

    def test_finds_known_single_mutation_flip(self):
        # one site, one residue flips the prediction; enumeration confirms it,
        # and a seeded run that samples the mutation must succeed with 1 edit
        world = lw.WorldConfig(
            motif=[(2, "W", 1.0)], epistatic_pairs=[], label_noise=0.0, axis_positions=None,
            codeword_scale=1.0, min_separation=1.0, jitter_sigma=0.1, seed=0,
        )
        cb = world.codebook()
        c_w = cb.vector_for("W")
        direction = c_w - cb.vectors.mean(axis=0)
        weights = np.zeros((world.length, world.dim))
        weights[2] = 8.0 * direction / float(direction @ direction)
        seq0 = "A" * world.length
        base = float(weights[2] @ cb.vector_for("A"))
        clf = make_linear_classifier(weights, bias=-base - 2.0)
        z0 = lw.encode(seq0, cb)
        assert clf.logit(z0) < 0
        flipping = [
            (pos, res)
            for pos in range(world.length)
            for res in cb.alphabet
            if clf.confidence(lw.encode(seq0[:pos] + res + seq0[pos + 1 :], cb), 1) >= 0.95
        ]
        assert flipping == [(2, "W")]
        hc = HillClimbBaseline(max_steps=50).fit(clf, cb)
        succeeded = False
        for seed in range(60):
            result = hc.explain(z0, 1, rng=np.random.default_rng(seed))
            if result.success:
                succeeded = True
                assert result.edit_distance == 1
                assert result.sequence[2] == "W"
                break
        assert succeeded

    def test_one_mutation_per_step(self, axis_setup):
        # consecutive accepted sequences differ in at most one position
        world, cb, clf = axis_setup
        rng = np.random.default_rng(5)
        hc = HillClimbBaseline(max_steps=30).fit(clf, cb)
        result = hc.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
        assert result.steps_used <= 30

    def test_never_adversarial(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(6)
        hc = HillClimbBaseline().fit(clf, cb)
        for _ in range(4):
            result = hc.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
            assert result.adversarial is False


class TestGaFitness:
    def test_same_sequence_pays_no_penalty(self):
        assert ga_fitness("AAA", "AAA", 0.7, 0.02) == pytest.approx(0.7)

    def test_known_value(self):
        # confidence 0.9, five edits, penalty 0.02 each
        assert ga_fitness("AAAAACCCCC", "AAAAAAAAAA", 0.9, 0.02) == pytest.approx(0.8)

    def test_zero_penalty_preserves_confidence_order(self):
        rng = np.random.default_rng(7)
        confs = rng.random(10)
        seqs = ["".join(rng.choice(list("ACDE"), size=6)) for _ in confs]
        fits = [ga_fitness(s, "AAAAAA", c, 0.0) for s, c in zip(seqs, confs)]
        assert np.argsort(fits).tolist() == np.argsort(confs).tolist()


class TestGeneticAlgorithm:
    def test_zero_generations_returns_best_initial_mutant(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(8)
        ga = GeneticAlgorithmBaseline(generations=0).fit(clf, cb)
        z0 = random_source_embedding(world, cb, clf, rng)
        result = ga.explain(z0, 1, rng=rng)
        assert result.steps_used == 0
        # initial mutants carry 1-2 point mutations (possibly no-ops)
        assert 0 <= result.edit_distance <= 2

    def test_best_fitness_non_decreasing(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(9)
        ga = GeneticAlgorithmBaseline(generations=12).fit(clf, cb)
        result = ga.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
        trace = result.diagnostics["best_fitness_trace"]
        assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_never_adversarial_and_success_implies_edits(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(10)
        ga = GeneticAlgorithmBaseline(generations=8).fit(clf, cb)
        for _ in range(3):
            result = ga.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
            assert result.adversarial is False
            if result.success:
                assert result.edit_distance >= 1

    def test_invalid_settings_raise(self, axis_setup):
        world, cb, clf = axis_setup
        with pytest.raises(ValueError):
            GeneticAlgorithmBaseline(population=1).fit(clf, cb).explain(
                np.zeros((world.length, world.dim)), 1
            )
        with pytest.raises(ValueError):
            GeneticAlgorithmBaseline(tournament_size=99).fit(clf, cb).explain(
                np.zeros((world.length, world.dim)), 1
            )

    def test_reencode_is_the_dominant_named_phase(self, axis_setup):
        world, cb, clf = axis_setup
        rng = np.random.default_rng(11)
        ga = GeneticAlgorithmBaseline(generations=5).fit(clf, cb)
        result = ga.explain(random_source_embedding(world, cb, clf, rng), 1, rng=rng)
        phases = result.phase_seconds
        assert phases["reencode"] > 0
        assert phases["reencode"] > phases["gradient"]
        assert phases["reencode"] > phases["projection"]
