"""Comparison methods: unconstrained gradient descent in embedding space,
stochastic hill climbing in sequence space, and a genetic algorithm with
edit-distance-penalized fitness.

All three emit CounterfactualResult with the same success/adversarial
semantics as the manifold method.  The discrete methods re-encode candidate
sequences with zero jitter for every evaluation; that evaluation round-trip
is timed as the "reencode" phase.
"""

from __future__ import annotations

import time

import numpy as np
from sklearn.base import BaseEstimator

from . import mlp
from ._validation import check_embedding, check_rng
from .classifier import EmbeddingClassifier
from .counterfactual import CounterfactualResult, hamming, mutated_positions
from .world import Codebook, decode, encode


class BaseCounterfactualMethod(BaseEstimator):
    """Shared fit/explain surface for the baseline methods."""

    method_name = "base"

    def fit(self, classifier: EmbeddingClassifier, codebook: Codebook):
        classifier._check_fitted()
        self.classifier_ = classifier
        self.codebook_ = codebook
        return self

    def _check_ready(self):
        if not hasattr(self, "classifier_"):
            raise RuntimeError("call fit() with a classifier and codebook first")

    def explain(self, z_orig, signed_target: int = 1, rng=None) -> CounterfactualResult:
        raise NotImplementedError


class GradientDescentBaseline(BaseCounterfactualMethod):
    """Adam on the embedding minimizing BCE toward the target class.

    No masking, no reset, no projection; the highest-confidence iterate is
    retained and classified with the shared success/adversarial rules.
    """

    method_name = "gd"

    def __init__(self, learning_rate: float = 1e-2, steps: int = 50, tau: float = 0.95):
        self.learning_rate = learning_rate
        self.steps = steps
        self.tau = tau

    def explain(self, z_orig, signed_target: int = 1, rng=None) -> CounterfactualResult:
        self._check_ready()
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        z_orig = check_embedding(z_orig)
        clf = self.classifier_
        t_start = time.perf_counter()
        phases = {"gradient": 0.0, "projection": 0.0, "reencode": 0.0}
        seq_orig = decode(z_orig, self.codebook_)
        y_target = 1.0 if signed_target == 1 else 0.0
        z = z_orig.copy()
        m = np.zeros_like(z)
        v = np.zeros_like(z)
        trace = [clf.confidence(z, signed_target)]
        best = (trace[0], z.copy())
        best_qualifying = None
        qualifying = trace[0] >= self.tau
        for t in range(1, self.steps + 1):
            t0 = time.perf_counter()
            logit = clf.logit(z)
            grad = (float(mlp.sigmoid(np.array(logit))) - y_target) * clf.input_gradient(z)
            phases["gradient"] += time.perf_counter() - t0
            if not np.all(np.isfinite(grad)):
                break
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad * grad
            m_hat = m / (1.0 - 0.9**t)
            v_hat = v / (1.0 - 0.999**t)
            z = z - self.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
            conf = clf.confidence(z, signed_target)
            trace.append(conf)
            if conf > best[0]:
                best = (conf, z.copy())
            if conf >= self.tau:
                qualifying = True
                seq = decode(z, self.codebook_)
                if seq != seq_orig and (best_qualifying is None or conf > best_qualifying[0]):
                    best_qualifying = (conf, z.copy())
        duration = time.perf_counter() - t_start
        if best_qualifying is not None:
            final_z = best_qualifying[1]
            success, adversarial = True, False
        else:
            final_z = best[1]
            success = False
            adversarial = qualifying
        final_seq = decode(final_z, self.codebook_)
        return CounterfactualResult(
            final_embedding=final_z,
            sequence=final_seq,
            original_sequence=seq_orig,
            success=success,
            adversarial=adversarial,
            steps_used=len(trace) - 1,
            confidence_trace=trace,
            edit_distance=hamming(final_seq, seq_orig),
            duration=duration,
            method=self.method_name,
            mutated_positions=mutated_positions(final_seq, seq_orig),
            phase_seconds=phases,
        )


class HillClimbBaseline(BaseCounterfactualMethod):
    """Greedy random single-site substitutions, accepted only on improvement."""

    method_name = "hillclimb"

    def __init__(self, max_steps: int = 50, tau: float = 0.95):
        self.max_steps = max_steps
        self.tau = tau

    def _confidence(self, seq: str, signed_target: int, phases) -> float:
        t0 = time.perf_counter()
        z = encode(seq, self.codebook_)
        conf = self.classifier_.confidence(z, signed_target)
        phases["reencode"] += time.perf_counter() - t0
        return conf

    def explain(self, z_orig, signed_target: int = 1, rng=None) -> CounterfactualResult:
        self._check_ready()
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        rng = check_rng(rng)
        z_orig = check_embedding(z_orig)
        t_start = time.perf_counter()
        phases = {"gradient": 0.0, "projection": 0.0, "reencode": 0.0}
        seq_orig = decode(z_orig, self.codebook_)
        alphabet = self.codebook_.alphabet
        current = seq_orig
        current_conf = self._confidence(current, signed_target, phases)
        trace = [current_conf]
        steps = 0
        for _ in range(self.max_steps):
            if current_conf >= self.tau and current != seq_orig:
                break
            pos = int(rng.integers(0, len(current)))
            residue = alphabet[int(rng.integers(0, len(alphabet)))]
            candidate = current[:pos] + residue + current[pos + 1 :]
            cand_conf = self._confidence(candidate, signed_target, phases)
            if cand_conf > current_conf:
                current, current_conf = candidate, cand_conf
            steps += 1
            trace.append(current_conf)
        duration = time.perf_counter() - t_start
        edit = hamming(current, seq_orig)
        success = current_conf >= self.tau and edit >= 1
        final_z = encode(current, self.codebook_)
        return CounterfactualResult(
            final_embedding=final_z,
            sequence=current,
            original_sequence=seq_orig,
            success=success,
            adversarial=False,  # discrete moves cannot leave the sequence unchanged
            steps_used=steps,
            confidence_trace=trace,
            edit_distance=edit,
            duration=duration,
            method=self.method_name,
            mutated_positions=mutated_positions(current, seq_orig),
            phase_seconds=phases,
        )


def ga_fitness(seq: str, seq_orig: str, confidence: float, edit_penalty: float) -> float:
    """Target-class confidence penalized by Hamming distance to the original."""
    return confidence - edit_penalty * hamming(seq, seq_orig)


class GeneticAlgorithmBaseline(BaseCounterfactualMethod):
    """Population search with tournament selection, elitism, and crossover."""

    method_name = "ga"

    def __init__(
        self,
        population: int = 40,
        generations: int = 30,
        crossover_rate: float = 0.5,
        edit_penalty: float = 0.02,
        tau: float = 0.95,
        elite_fraction: float = 0.2,
        tournament_size: int = 3,
        eval_batch: int = 8,
    ):
        self.population = population
        self.generations = generations
        self.crossover_rate = crossover_rate
        self.edit_penalty = edit_penalty
        self.tau = tau
        self.elite_fraction = elite_fraction
        self.tournament_size = tournament_size
        self.eval_batch = eval_batch

    def _validate(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0.0 <= self.elite_fraction < 1.0:
            raise ValueError("elite_fraction must be in [0, 1)")
        if self.tournament_size > self.population:
            raise ValueError("tournament_size cannot exceed the population size")

    def _confidences(self, seqs, signed_target: int, phases) -> np.ndarray:
        """Batched candidate evaluation (encode + forward), timed as reencode."""
        t0 = time.perf_counter()
        confs = np.empty(len(seqs))
        step = max(1, self.eval_batch)
        for start in range(0, len(seqs), step):
            chunk = seqs[start : start + step]
            Z = np.stack([encode(s, self.codebook_) for s in chunk])
            logits = self.classifier_.decision_function(Z)
            confs[start : start + step] = mlp.sigmoid(signed_target * logits)
        phases["reencode"] += time.perf_counter() - t0
        return confs

    def _mutate(self, seq: str, rng) -> str:
        alphabet = self.codebook_.alphabet
        chars = list(seq)
        for _ in range(int(rng.integers(1, 3))):  # 1-2 point mutations
            chars[int(rng.integers(0, len(chars)))] = alphabet[int(rng.integers(0, len(alphabet)))]
        return "".join(chars)

    def explain(self, z_orig, signed_target: int = 1, rng=None) -> CounterfactualResult:
        self._check_ready()
        self._validate()
        rng = check_rng(rng)
        z_orig = check_embedding(z_orig)
        t_start = time.perf_counter()
        phases = {"gradient": 0.0, "projection": 0.0, "reencode": 0.0}
        seq_orig = decode(z_orig, self.codebook_)
        n_elite = int(round(self.elite_fraction * self.population))
        pop = [self._mutate(seq_orig, rng) for _ in range(self.population)]
        confs = self._confidences(pop, signed_target, phases)
        fits = np.array(
            [ga_fitness(s, seq_orig, c, self.edit_penalty) for s, c in zip(pop, confs)]
        )
        trace = [float(confs.max())]
        fitness_trace = [float(fits.max())]
        generations_run = 0

        def pick_best():
            # prefer a threshold-crossing individual, otherwise best fitness
            if confs.max() >= self.tau:
                i = int(np.argmax(confs))
            else:
                i = int(np.argmax(fits))
            return pop[i], float(confs[i])

        best_seq, best_conf = pick_best()
        for gen in range(self.generations):
            if confs.max() >= self.tau:
                break
            order = np.argsort(-fits, kind="stable")
            elites = [pop[i] for i in order[:n_elite]]
            children = []
            while len(children) < self.population - n_elite:
                contenders = rng.integers(0, self.population, size=self.tournament_size)
                p1 = pop[int(max(contenders, key=lambda i: fits[i]))]
                contenders = rng.integers(0, self.population, size=self.tournament_size)
                p2 = pop[int(max(contenders, key=lambda i: fits[i]))]
                if rng.random() < self.crossover_rate:
                    cut = int(rng.integers(1, len(seq_orig)))
                    child = p1[:cut] + p2[cut:]
                else:
                    child = p1
                children.append(self._mutate(child, rng))
            pop = elites + children
            confs = self._confidences(pop, signed_target, phases)
            fits = np.array(
                [ga_fitness(s, seq_orig, c, self.edit_penalty) for s, c in zip(pop, confs)]
            )
            trace.append(float(confs.max()))
            fitness_trace.append(float(fits.max()))
            generations_run = gen + 1
            best_seq, best_conf = pick_best()
        duration = time.perf_counter() - t_start
        edit = hamming(best_seq, seq_orig)
        success = best_conf >= self.tau and edit >= 1
        final_z = encode(best_seq, self.codebook_)
        return CounterfactualResult(
            final_embedding=final_z,
            sequence=best_seq,
            original_sequence=seq_orig,
            success=success,
            adversarial=False,  # discrete by construction
            steps_used=generations_run,
            confidence_trace=trace,
            edit_distance=edit,
            duration=duration,
            method=self.method_name,
            mutated_positions=mutated_positions(best_seq, seq_orig),
            phase_seconds=phases,
            diagnostics={"best_fitness_trace": fitness_trace},
        )
