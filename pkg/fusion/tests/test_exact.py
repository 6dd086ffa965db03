import itertools
import math
from unittest.mock import patch

import numpy as np
from django.test import SimpleTestCase, override_settings, tag

from fusion import exact
from fusion.exceptions import TooLarge
from fusion.relax import frank_wolfe

from .factories import all_objectives, corpus, dominant_instance, optimum, random_instance, symmetric_instance


def masks(inst):
    """Every size-s subset with its 0/1 vector."""
    for S in itertools.combinations(range(inst.n), inst.s):
        x = np.zeros(inst.n)
        x[list(S)] = 1.0
        yield S, x


class CutTests(SimpleTestCase):
    """
    Gradient and submodular cuts, checked against every feasible selection.
    """
    def assertValidEverywhere(self, inst, cuts):
        """No cut may cut off a binary point."""
        for S, x in masks(inst):
            z = inst.objective(S) - inst.logdet_C
            for cut in cuts:
                self.assertTrue(cut.is_satisfied(x, z, tol=1e-7), f"{cut.kind} at {cut.origin} cuts off {S}")

    def test_gradient_cuts_are_valid(self):
        for seed in range(4):
            inst = random_instance(4, 7, 3, seed=seed)
            for S in [(0, 1, 2), (2, 4, 6), (1, 5)]:
                self.assertValidEverywhere(inst, exact.gradient_cuts(inst, S))

    def test_gradient_cuts_are_tight(self):
        inst = random_instance(4, 7, 3, seed=1)
        S = (1, 3, 5)
        x = np.zeros(7)
        x[list(S)] = 1.0
        cuts = exact.gradient_cuts(inst, S)
        self.assertEqual([c.kind for c in cuts], ["grad_R", "grad_M"])
        for cut in cuts:
            self.assertAlmostEqual(cut.value(x), inst.objective(S) - inst.logdet_C, delta=1e-7)

    def test_submodular_cuts_are_valid(self):
        for seed in range(4):
            inst = random_instance(3, 7, 4, seed=seed)
            for S in [(0, 1, 2, 3), (3, 4, 5, 6)]:
                cuts = exact.submodular_cuts(inst, S)
                self.assertEqual(len(cuts), 2)
                self.assertValidEverywhere(inst, cuts)

    @tag("slow")
    def test_random_cuts_are_valid(self):
        """Gradient and submodular cuts at random sets, and optimality cuts, over every feasible point."""
        rng = np.random.default_rng(23)
        checked = 0
        for inst in corpus(25, seed=23, n_range=(6, 10)):
            subsets = list(masks(inst))
            X = np.array([x for _, x in subsets])
            z = np.array([inst.objective(S) for S, _ in subsets]) - inst.logdet_C
            for _ in range(14):
                size = int(rng.integers(1, inst.n + 1))
                S = tuple(sorted(rng.choice(inst.n, size, replace=False).tolist()))
                cuts = exact.gradient_cuts(inst, S) + exact.submodular_cuts(inst, S)
                for cut in cuts:
                    self.assertTrue(np.all(z <= cut.c0 + X @ cut.c + 1e-7), f"{cut.kind} at {S}")
                checked += len(cuts)

            best, z_star = optimum(inst)
            x_best = np.zeros(inst.n)
            x_best[list(best)] = 1.0
            point, cert = frank_wolfe(inst, "M", budget_iters=300)
            report = exact.probe_pairs(inst, point, cert, z_star, xi0=0.0, xi1=1.0)
            for cut in report.cuts:
                self.assertTrue(cut.is_satisfied(x_best))
            checked += len(report.cuts)
        self.assertGreaterEqual(checked, 1000)

    def test_cardinality_cuts(self):
        c = np.array([1.0, 1.0, 0.0])
        le = exact.LinearCut("card_le", 1.0, c, (0, 1), "d")
        self.assertTrue(le.is_satisfied([1, 0, 1]))
        self.assertFalse(le.is_satisfied([1, 1, 0]))
        self.assertEqual(le.as_disjunction().S1, frozenset({0, 1}))
        ge = exact.LinearCut("card_ge", 1.0, c, (0, 1), "c")
        self.assertFalse(ge.is_satisfied([0, 0, 1]))
        self.assertEqual(ge.as_disjunction().S0, frozenset({0, 1}))


class CutPoolTests(SimpleTestCase):
    def setUp(self):
        self.inst = random_instance(4, 8, 3, seed=6)
        self.best, self.z_star = optimum(self.inst)

    def test_empty_pool(self):
        self.assertEqual(exact.CutPool(self.inst).bound(), math.inf)

    def test_bound_is_valid_and_exact_at_origin(self):
        pool = exact.CutPool(self.inst)
        pool.add(exact.gradient_cuts(self.inst, self.best)[0])
        self.assertGreaterEqual(pool.bound(), self.z_star - 1e-7)
        self.assertAlmostEqual(pool.bound(fixed_in=self.best), self.z_star, delta=1e-7)

    def test_bound_respects_fixings(self):
        pool = exact.CutPool(self.inst)
        for S in [(0, 1, 2), (3, 4, 5), self.best]:
            for cut in exact.gradient_cuts(self.inst, S) + exact.submodular_cuts(self.inst, S):
                pool.add(cut)
        objectives = all_objectives(self.inst)
        fixed_in, fixed_out = {0}, {7}
        restricted = max(v for S, v in objectives.items() if 0 in S and 7 not in S)
        self.assertGreaterEqual(pool.bound(fixed_in, fixed_out), restricted - 1e-7)
        node = exact.BnbNode(frozenset(fixed_in), frozenset(fixed_out), math.inf)
        self.assertEqual(exact.cut_pool_bound(pool, node), pool.bound(fixed_in, fixed_out))

    def test_duplicates_are_ignored(self):
        pool = exact.CutPool(self.inst)
        cut = exact.gradient_cuts(self.inst, (0, 1, 2))[0]
        self.assertTrue(pool.add(cut))
        self.assertFalse(pool.add(cut))
        self.assertEqual(len(pool), 1)
        disj = exact.Disjunction(frozenset({0}), frozenset({1}), "e")
        self.assertTrue(pool.add_disjunction(disj))
        self.assertFalse(pool.add_disjunction(disj))


class PropagationTests(SimpleTestCase):
    def test_disjunction(self):
        disj = exact.Disjunction(frozenset({0}), frozenset({1}), "e")
        self.assertFalse(disj.is_satisfied({0, 2}))
        self.assertTrue(disj.is_satisfied({0, 1}))
        self.assertTrue(disj.is_satisfied({2, 3}))

    def test_forced_consequence(self):
        inst = random_instance(3, 5, 2, seed=0)
        disj = [exact.Disjunction(frozenset({0}), frozenset({1}), "e")]
        fixed_in, fixed_out = exact._propagate(inst, disj, {0}, set())
        self.assertEqual(fixed_in, {0, 1})
        fixed_in, fixed_out = exact._propagate(inst, disj, set(), {1})
        self.assertEqual(fixed_out, {0, 1})

    def test_violation(self):
        inst = random_instance(3, 5, 2, seed=0)
        disj = [exact.Disjunction(frozenset({0, 2}), frozenset(), "d")]
        with self.assertRaises(exact._Infeasible):
            exact._propagate(inst, disj, {0, 2}, set())


class ProbingTests(SimpleTestCase):
    """
    Variable fixing and pair probing must never exclude an optimal selection.
    """
    def assertKeepsOptimum(self, best, fix_zero, fix_one):
        """Fixings agree with the optimal selection."""
        self.assertFalse(set(fix_zero) & set(best))
        self.assertLessEqual(set(fix_one), set(best))

    def test_no_lower_bound_fixes_nothing(self):
        inst = random_instance(4, 8, 3, seed=2)
        _, cert = frank_wolfe(inst, "M")
        self.assertEqual(exact.probe_fix(inst, cert, -math.inf), (set(), set()))

    def test_symmetric_instance_fixes_nothing(self):
        inst = symmetric_instance(6, 3)
        z_lb = 3 * math.log(2.0)
        for name in ("R", "M", "Mc"):
            _, cert = frank_wolfe(inst, name)
            self.assertEqual(exact.probe_fix(inst, cert, z_lb), (set(), set()))

    def test_fixings_keep_optimum(self):
        for inst in corpus(12, seed=5):
            best, z_star = optimum(inst)
            names = ("R", "M", "Mc") if inst.s < inst.n else ("R", "M")
            for name in names:
                _, cert = frank_wolfe(inst, name, budget_iters=500)
                zero, one = exact.probe_fix(inst, cert, z_star)
                self.assertKeepsOptimum(best, zero, one)

    def test_pair_probing_keeps_optimum(self):
        for inst in corpus(6, seed=7):
            best, z_star = optimum(inst)
            point, cert = frank_wolfe(inst, "M", budget_iters=500)
            report = exact.probe_pairs(inst, point, cert, z_star, xi0=0.0, xi1=1.0)
            self.assertKeepsOptimum(best, report.fix_zero, report.fix_one)
            x = np.zeros(inst.n)
            x[list(best)] = 1.0
            for cut in report.cuts:
                self.assertTrue(cut.is_satisfied(x))
            for disj in report.disjunctions:
                self.assertTrue(disj.is_satisfied(best))
            self.assertLessEqual(report.tried, 3 * inst.n)
            self.assertEqual(sum(report.counts.values()), len(report.fix_one) + len(report.fix_zero) + len(report.cuts) + len(report.disjunctions))

    @tag("slow")
    def test_fixings_during_solve_keep_optimum(self):
        """Every fixing, cut and disjunction derived in a full solve spares the optimum."""
        fix, pairs = exact.probe_fix, exact.probe_pairs
        for inst in corpus(15, seed=29, n_range=(8, 12)):
            best, z_star = optimum(inst)
            fixings, reports = [], []

            def recorded_fix(target, cert, z_lb):
                zero, one = fix(target, cert, z_lb)
                fixings.append((cert, zero, one))
                return zero, one

            def recorded_pairs(*args, **kwargs):
                report = pairs(*args, **kwargs)
                reports.append((kwargs.get("fixed_in", ()), kwargs.get("fixed_out", ()), report))
                return report

            with patch.object(exact, "probe_fix", side_effect=recorded_fix), patch.object(exact, "probe_pairs", side_effect=recorded_pairs):
                result = exact.solve_bnb(inst)
            self.assertAlmostEqual(result.incumbent.objective, z_star, delta=1e-6)
            self.assertTrue(fixings)

            for cert, zero, one in fixings:
                sel_in, sel_out = exact._selection_fixings(cert)
                if sel_in <= set(best) and not sel_out & set(best):
                    self.assertKeepsOptimum(best, zero, one)
            x_best = np.zeros(inst.n)
            x_best[list(best)] = 1.0
            for fixed_in, fixed_out, report in reports:
                self.assertLessEqual(set(fixed_in), set(best))
                self.assertFalse(set(fixed_out) & set(best))
                self.assertKeepsOptimum(best, report.fix_zero, report.fix_one)
                for cut in report.cuts:
                    self.assertTrue(cut.is_satisfied(x_best))
                for disj in report.disjunctions:
                    self.assertTrue(disj.is_satisfied(best))

    def test_root_analysis_on_dominant_point(self):
        inst = dominant_instance()
        best, _ = optimum(inst)
        root = exact.analyze_root(inst, exact.BnbConfig(fw_root_iters=500))
        self.assertIn(0, best)
        self.assertIn(0, root.incumbent.indices)
        self.assertKeepsOptimum(best, root.fix_zero, root.fix_one)
        doc = root.to_dict()
        self.assertEqual(set(doc["root_bounds"]), {"R", "M", "Mc"})
        self.assertEqual(doc["cut_counts"]["a"], len(root.fix_one))
        self.assertGreaterEqual(root.bound, root.incumbent.objective - 1e-9)


class BranchAndBoundTests(SimpleTestCase):
    """
    End-to-end solves against enumeration.
    """
    def setUp(self):
        self.inst = random_instance(5, 12, 4, seed=21)
        self.best = exact.brute_force(self.inst)

    def test_matches_enumeration(self):
        result = exact.solve_bnb(self.inst)
        self.assertEqual(result.status, "optimal")
        self.assertAlmostEqual(result.incumbent.objective, self.best.objective, delta=1e-6)
        self.assertLessEqual(result.mip_gap, 1e-6 + 1e-9)
        self.assertEqual(set(result.root_bounds), {"R", "M", "Mc"})

    def test_without_cuts(self):
        config = exact.BnbConfig(gradient_cuts=False, submodular_cuts=False, optimality_cuts=False)
        result = exact.solve_bnb(self.inst, config)
        self.assertTrue(result.solved)
        self.assertAlmostEqual(result.incumbent.objective, self.best.objective, delta=1e-6)
        self.assertEqual(sum(result.cut_counts.values()), 0)
        self.assertEqual(result.pool_size, 0)

    def test_history_is_monotone(self):
        history = exact.solve_bnb(self.inst).history
        for (_, inc0, bound0), (_, inc1, bound1) in zip(history, history[1:]):
            self.assertGreaterEqual(inc1, inc0)
            self.assertLessEqual(bound1, bound0 + 1e-9)

    def test_deterministic(self):
        first = exact.solve_bnb(self.inst)
        second = exact.solve_bnb(self.inst)
        self.assertEqual(first.incumbent.indices, second.incumbent.indices)
        self.assertEqual(first.nodes_explored, second.nodes_explored)

    def test_limits_return_a_status(self):
        for config, status in [(exact.BnbConfig(time_limit=0.0), "time_limit"), (exact.BnbConfig(node_limit=0), "node_limit")]:
            result = exact.solve_bnb(self.inst, config)
            self.assertEqual(result.status, status)
            self.assertFalse(result.solved)
            self.assertEqual(result.nodes_explored, 0)
            self.assertGreaterEqual(result.global_bound, self.best.objective - 1e-7)
            self.assertEqual(result.to_dict()["status"], status)

    def test_full_budget_is_trivial(self):
        inst = random_instance(3, 5, 5, seed=2)
        result = exact.solve_bnb(inst)
        self.assertEqual(result.incumbent.indices, (0, 1, 2, 3, 4))
        self.assertEqual(result.nodes_explored, 1)
        self.assertTrue(result.solved)

    @override_settings(FUSIONOPT={"GAP_TOL": 1e-4, "NODE_LIMIT": 7})
    def test_config_from_settings(self):
        config = exact.BnbConfig.from_settings(node_limit=None, time_limit=5.0)
        self.assertEqual(config.gap_tol, 1e-4)
        self.assertEqual(config.node_limit, 7)
        self.assertEqual(config.time_limit, 5.0)

    @tag("slow")
    def test_corpus(self):
        for inst in corpus(100, seed=11, d_range=(3, 8), n_range=(6, 14)):
            result = exact.solve_bnb(inst)
            self.assertTrue(result.solved)
            self.assertAlmostEqual(result.incumbent.objective, exact.brute_force(inst).objective, delta=1e-6)
            self.assertLessEqual(result.mip_gap, 1e-6 + 1e-9)

    @tag("slow")
    def test_cuts_reduce_median_node_count(self):
        """Median nodes: gradient cuts only >= plus submodular cuts >= plus optimality cuts."""
        configs = [
            exact.BnbConfig(submodular_cuts=False, optimality_cuts=False),
            exact.BnbConfig(optimality_cuts=False),
            exact.BnbConfig(),
        ]
        nodes = [[] for _ in configs]
        for inst in corpus(20, seed=31, n_range=(14, 14)):
            for counts, config in zip(nodes, configs):
                result = exact.solve_bnb(inst, config)
                self.assertTrue(result.solved)
                counts.append(result.nodes_explored)
        grad, submod, full = (float(np.median(counts)) for counts in nodes)
        self.assertGreaterEqual(grad, submod)
        self.assertGreaterEqual(submod, full)


class EnumerationTests(SimpleTestCase):
    def test_lexicographic_values(self):
        inst = random_instance(3, 7, 3, seed=4)
        subsets, values = exact.enumerate_objectives(inst)
        self.assertEqual(len(values), math.comb(7, 3))
        self.assertEqual(tuple(subsets[0]), (0, 1, 2))
        self.assertEqual(tuple(subsets[-1]), (4, 5, 6))
        reference = all_objectives(inst)
        for S, value in zip(subsets.tolist(), values):
            self.assertAlmostEqual(value, reference[tuple(S)], delta=1e-8)

    def test_brute_force_optimum(self):
        for inst in corpus(5, seed=2):
            best, z_star = optimum(inst)
            sel = exact.brute_force(inst)
            self.assertEqual(sel.indices, best)
            self.assertAlmostEqual(sel.objective, z_star, delta=1e-8)

    def test_too_large(self):
        inst = random_instance(3, 40, 20, seed=0)
        with self.assertRaises(TooLarge):
            exact.brute_force(inst)
