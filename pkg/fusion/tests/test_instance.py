import itertools
import json
import math
import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from fusion import instance as instance_io
from fusion.exceptions import BadBudget, BadDimensions, DimensionMismatch, InputError, NotPositiveDefinite, ParseError
from fusion.relax import f_value

from .factories import dense_objective, random_instance, spd


class BuildTests(SimpleTestCase):
    """
    Validation and derived data of a built instance.
    """
    def test_unit_instance(self):
        inst = instance_io.build(np.eye(2), np.eye(2), 1)
        self.assertAlmostEqual(inst.sigma_max, 1.0)
        self.assertAlmostEqual(inst.delta, 1.0)
        self.assertAlmostEqual(inst.logdet_C, 0.0)
        self.assertEqual(inst.s_bar, 1)

    def test_pmu_style_sigma(self):
        """a_i = e_i / 0.02 over C = 2 I gives sigma_max = 1250."""
        inst = instance_io.gen_pmu(np.diag([2.0, 2.0]), 0.02, 1)
        self.assertAlmostEqual(inst.sigma_max, 1250.0, places=6)

    def test_rejects_bad_input(self):
        with self.assertRaises(BadBudget):
            instance_io.build(np.eye(2), np.eye(2), 0)
        with self.assertRaises(BadBudget):
            instance_io.build(np.eye(2), np.eye(2), 3)
        with self.assertRaises(BadDimensions):
            instance_io.build(np.eye(2), np.ones((3, 4)), 1)
        with self.assertRaises(NotPositiveDefinite):
            instance_io.build(np.diag([1.0, -1.0]), np.eye(2), 1)

    def test_derived_factors(self):
        inst = random_instance(4, 7, 3, seed=2)
        np.testing.assert_allclose(inst.V.T @ inst.V, inst.M, atol=1e-9)
        np.testing.assert_allclose(inst.U.T @ inst.U, np.linalg.inv(inst.M), atol=1e-9)
        np.testing.assert_allclose(inst.G, inst.A.T @ np.linalg.solve(inst.C, inst.A), atol=1e-8)
        self.assertLess(np.linalg.eigvalsh(inst.Q @ inst.Q.T)[-1], 1.0)

    def test_zero_column_flagged(self):
        A = np.eye(3)
        A[:, 1] = 0.0
        with self.assertLogs("fusion.instance", level="WARNING"):
            inst = instance_io.build(np.eye(3), A, 2)
        self.assertEqual(inst.zero_columns, (1,))


class ObjectiveTests(SimpleTestCase):
    """
    The two objective paths and the selection wrapper.
    """
    def test_empty_and_single(self):
        inst = instance_io.build(np.eye(2), np.array([[1.0], [1.0]]), 1)
        self.assertAlmostEqual(inst.objective(()), 0.0)
        self.assertAlmostEqual(inst.objective((0,)), math.log(3.0), places=12)

    def test_paths_agree(self):
        """Whitened n x n minor and dense d x d determinant agree on every subset."""
        for seed in range(5):
            inst = random_instance(4, 8, 3, seed=seed)
            for S in itertools.combinations(range(8), 3):
                self.assertAlmostEqual(inst.objective(S), inst.objective_dense(S), delta=1e-7)

    def test_named_subset(self):
        inst = random_instance(4, 10, 3, seed=7)
        self.assertAlmostEqual(inst.objective((1, 4, 7)), dense_objective(inst, (1, 4, 7)), delta=1e-7)

    def test_f_of_selected_columns(self):
        """log f of sum_{i in S} v_i v_i^T equals ldet(I + G_SS)."""
        inst = random_instance(3, 6, 2, seed=4)
        for S in itertools.combinations(range(6), 2):
            X = inst.V[:, S] @ inst.V[:, S].T
            lam = np.linalg.eigvalsh(X)[::-1]
            self.assertAlmostEqual(f_value(lam, 2), inst.objective(S) - inst.logdet_C, delta=1e-7)

    def test_selection_validation(self):
        inst = random_instance(3, 5, 2, seed=0)
        sel = inst.selection([3, 1])
        self.assertEqual(sel.indices, (1, 3))
        np.testing.assert_array_equal(sel.mask(5), [0, 1, 0, 1, 0])
        with self.assertRaises(InputError):
            inst.selection([1])
        with self.assertRaises(InputError):
            inst.selection([1, 5])

    def test_with_budget(self):
        inst = random_instance(3, 5, 2, seed=0)
        other = inst.with_budget(4)
        self.assertEqual(other.s, 4)
        self.assertNotEqual(other.fingerprint(), inst.fingerprint())


class ReductionTests(SimpleTestCase):
    """
    MESP reduction and the two complement identities.
    """
    def test_mesp_diagonal(self):
        inst, offset = instance_io.from_mesp(np.diag([2.0, 3.0]), 1)
        values = [inst.objective((i,)) + offset for i in range(2)]
        self.assertAlmostEqual(max(values), math.log(3.0), places=12)

    def test_mesp_identity_ties(self):
        inst, offset = instance_io.from_mesp(np.eye(4), 2)
        self.assertAlmostEqual(offset, 0.0)
        for S in itertools.combinations(range(4), 2):
            self.assertAlmostEqual(inst.objective(S), 0.0, delta=1e-12)

    def test_mesp_every_subset(self):
        C = spd(8, 13)
        inst, offset = instance_io.from_mesp(C, 3)
        self.assertEqual(inst.meta["offset"], offset)
        for S in itertools.combinations(range(8), 3):
            _, direct = np.linalg.slogdet(C[np.ix_(S, S)])
            self.assertAlmostEqual(inst.objective(S) + offset, direct, delta=1e-7)

    def test_mesp_offset_follows_budget(self):
        C = spd(5, 3)
        inst, offset = instance_io.from_mesp(C, 2)
        wider = inst.with_budget(4)
        self.assertAlmostEqual(wider.meta["offset"], 2 * offset)

    def test_complement_r_identity(self):
        inst = random_instance(3, 6, 2, seed=8)
        comp = instance_io.to_complement_r(inst)
        for S in itertools.combinations(range(6), 2):
            excluded = set(range(6)) - set(S)
            self.assertAlmostEqual(comp.objective(excluded), inst.objective(S), delta=1e-7)
        self.assertAlmostEqual(comp.objective(()), inst.objective(range(6)), delta=1e-7)

    def test_complement_m_identity(self):
        inst = random_instance(4, 7, 3, seed=9)
        for S in itertools.combinations(range(7), 3):
            excluded = set(range(7)) - set(S)
            self.assertAlmostEqual(instance_io.complement_m_objective(inst, excluded), inst.objective(S), delta=1e-7)


class GeneratorTests(SimpleTestCase):
    def test_random_is_deterministic(self):
        a = instance_io.gen_random(4, 10, 3, seed=7)
        b = instance_io.gen_random(4, 10, 3, seed=7)
        np.testing.assert_array_equal(a.C, b.C)
        np.testing.assert_array_equal(a.A, b.A)
        self.assertEqual(a.fingerprint(), b.fingerprint())

    def test_pmu_symmetric(self):
        inst = instance_io.gen_pmu(np.eye(3), [1.0, 1.0, 1.0], 1)
        for i in range(3):
            self.assertAlmostEqual(inst.objective((i,)), math.log(2.0), places=12)

    def test_pmu_prefers_weak_buses(self):
        inst = instance_io.gen_pmu(np.diag([1.0, 1.0, 4.0]), [1.0, 1.0, 1.0], 1)
        values = [inst.objective((i,)) for i in range(3)]
        self.assertEqual(int(np.argmax(values)), 0)
        self.assertAlmostEqual(values[0], math.log(4.0) + math.log(2.0), places=12)

    def test_pmu_rejects_nonpositive_sigma(self):
        with self.assertRaises(InputError):
            instance_io.gen_pmu(np.eye(2), [0.02, 0.0], 1)
        with self.assertRaises(BadDimensions):
            instance_io.gen_pmu(np.eye(2), [0.02, 0.02, 0.02], 1)


class FileTests(SimpleTestCase):
    """
    JSON documents with inline or CSV matrices.
    """
    def setUp(self):
        """Create a scratch directory per test."""
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_save_load_is_exact(self):
        inst = instance_io.gen_random(3, 5, 2, seed=1)
        path = self.tmp / "inst.json"
        instance_io.save(inst, path)
        back = instance_io.load(path)
        np.testing.assert_array_equal(back.C, inst.C)
        np.testing.assert_array_equal(back.A, inst.A)
        self.assertEqual(back.s, 2)
        self.assertEqual(back.meta["seed"], 1)

    def test_external_csv_matrices(self):
        """A grid FIM and PMU deviations read from CSV build a PMU instance."""
        fim = self.tmp / "fim.csv"
        sigma = self.tmp / "sigma.csv"
        instance_io.write_csv_matrix(fim, spd(4, 5))
        instance_io.write_csv_matrix(sigma, np.full((4, 1), 0.02))
        C = instance_io.read_csv_matrix(fim, (4, 4))
        inst = instance_io.gen_pmu(C, instance_io.read_csv_matrix(sigma).ravel(), 2)
        self.assertEqual((inst.d, inst.n), (4, 4))

        doc = {"d": 4, "n": 4, "s": 2, "C": "fim.csv", "A": np.eye(4).tolist()}
        (self.tmp / "inst.json").write_text(json.dumps(doc))
        loaded = instance_io.load(self.tmp / "inst.json")
        np.testing.assert_allclose(loaded.C, C, rtol=1e-15)

    def test_wrong_shape(self):
        path = self.tmp / "C.csv"
        instance_io.write_csv_matrix(path, np.eye(3))
        with self.assertRaises(DimensionMismatch):
            instance_io.read_csv_matrix(path, (4, 4))

    def test_parse_errors(self):
        with self.assertRaises(ParseError):
            instance_io.load(self.tmp / "missing.json")
        bad = self.tmp / "bad.json"
        bad.write_text("{not json")
        with self.assertRaises(ParseError):
            instance_io.load(bad)
        bad.write_text(json.dumps({"d": 2, "n": 2, "C": [[1, 0], [0, 1]]}))
        with self.assertRaises(ParseError):
            instance_io.load(bad)
