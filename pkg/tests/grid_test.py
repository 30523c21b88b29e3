#!/usr/bin/python3

from pyfakefs.fake_filesystem_unittest import TestCase

import unittest

import numpy as np

from fracperim import grid
from fracperim import tensions
from fracperim.grid import GridSpec, LaminatePath


class TestGridSpec(unittest.TestCase):
    def test_geometry(self):
        spec = GridSpec(2, 4, 2.0)
        self.assertEqual(0.5, spec.h)
        self.assertEqual((4, 4), spec.shape)
        self.assertEqual(16, spec.n_cells)
        self.assertEqual(0.25, spec.cell_volume)
        np.testing.assert_array_equal([-0.75, -0.25, 0.25, 0.75], spec.centers_1d())
        self.assertEqual((4, 4, 2), spec.centers().shape)

    def test_invalid(self):
        with self.assertRaises(grid.PartitionError):
            GridSpec(4, 8)
        with self.assertRaises(grid.PartitionError):
            GridSpec(2, 1)
        with self.assertRaises(grid.PartitionError):
            GridSpec(2, 8, 0.0)
        with self.assertRaises(grid.PartitionError):
            GridSpec(2, 8, float('inf'))

    def test_interior_mask(self):
        spec = GridSpec(2, 4)
        self.assertTrue(spec.interior_mask(0).all())
        np.testing.assert_array_equal(
                [[False, False, False, False],
                 [False, True, True, False],
                 [False, True, True, False],
                 [False, False, False, False]],
                spec.interior_mask(1))
        self.assertFalse(spec.interior_mask(2).any())


class TestConstructors(unittest.TestCase):
    def test_halfspace_pair(self):
        p = grid.make_halfspace_pair(GridSpec(2, 4), 0, 1, axis=1)
        self.assertEqual(8, int(np.sum(p.labels == 0)))
        self.assertEqual(8, int(np.sum(p.labels == 1)))
        self.assertTrue(np.all(p.labels[:, 2:] == 0))
        self.assertEqual(grid.HalfspacePair(0, 1, 1), p.exterior)

    def test_halfspace_volumes(self):
        p = grid.make_halfspace_pair(GridSpec(3, 6), 0, 2, axis=0, m=4)
        np.testing.assert_allclose([0.5, 0.0, 0.5, 0.0], grid.volumes(p))

    def test_halfspace_swap_reflects(self):
        spec = GridSpec(2, 6)
        a = grid.make_halfspace_pair(spec, 0, 1, axis=1)
        b = grid.make_halfspace_pair(spec, 1, 0, axis=1)
        np.testing.assert_array_equal(np.flip(a.labels, axis=1), b.labels)

    def test_halfspace_same_chamber(self):
        with self.assertRaises(grid.PartitionError):
            grid.make_halfspace_pair(GridSpec(2, 4), 1, 1, axis=0)

    def test_constant(self):
        p = grid.make_constant(GridSpec(2, 4), 0, 3)
        np.testing.assert_allclose([1.0, 0.0, 0.0], grid.volumes(p))
        self.assertEqual(frozenset({0}), p.chambers_present())

    def test_labels_out_of_range(self):
        with self.assertRaises(grid.PartitionError):
            grid.GridPartition(GridSpec(2, 2), [[0, 1], [2, 0]], 2)
        with self.assertRaises(grid.PartitionError):
            grid.GridPartition(GridSpec(2, 2), [[0, 1]], 2)

    def test_read_only(self):
        p = grid.make_constant(GridSpec(2, 4), 0, 2)
        with self.assertRaises(ValueError):
            p.labels[0, 0] = 1


class TestLaminate(unittest.TestCase):
    def test_one_step_is_halfspace(self):
        spec = GridSpec(2, 8)
        for stage in (0, 3):
            self.assertEqual(grid.make_halfspace_pair(spec, 0, 1, 1, m=3),
                    grid.make_laminate(spec, LaminatePath((0, 1), stage), 1, m=3))

    def test_single_strip(self):
        p = grid.make_laminate(GridSpec(2, 8), LaminatePath((0, 2, 1), 0), axis=1)
        np.testing.assert_array_equal([1, 1, 2, 2, 2, 2, 0, 0], p.labels[3])
        np.testing.assert_allclose([0.25, 0.25, 0.5], grid.volumes(p))
        self.assertEqual(grid.HalfspacePair(0, 1, 1), p.exterior)

    def test_strips_stack_downward(self):
        p = grid.make_laminate(GridSpec(2, 16), LaminatePath((0, 2, 3, 1), 0), axis=0)
        np.testing.assert_array_equal(
                [1, 1, 1, 1, 3, 3, 3, 3, 2, 2, 2, 2, 0, 0, 0, 0], p.labels[:, 5])

    def test_resolution(self):
        path = LaminatePath((0, 2, 3, 1), 1)
        self.assertEqual(8, grid.laminate_min_cells(path))
        with self.assertRaises(grid.ResolutionError) as ctx:
            grid.make_laminate(GridSpec(2, 4), path, axis=1)
        self.assertEqual(8, ctx.exception.min_cells_per_side)
        self.assertIn('N = 8', str(ctx.exception))

    def test_minimal_grid_keeps_every_chamber(self):
        for stage in range(3):
            for strips in range(1, 5):
                path = LaminatePath(tuple(range(strips + 2)), stage)
                n_min = grid.laminate_min_cells(path)
                self.assertGreaterEqual(n_min, 2 ** (stage + 1) * strips)
                p = grid.make_laminate(GridSpec(2, n_min), path, axis=1)
                column = p.labels[0]
                self.assertEqual(set(path.chambers), set(column.tolist()))
                self.assertEqual(path.chambers[0], column[-1])
                self.assertEqual(path.chambers[-1], column[0])
                # strips run top to bottom without gaps
                order = [c for k, c in enumerate(column[::-1]) if k == 0 or c != column[::-1][k - 1]]
                self.assertEqual(list(path.chambers), order)
                if n_min > 2:
                    with self.assertRaises(grid.ResolutionError):
                        grid.make_laminate(GridSpec(2, n_min - 1), path, axis=1)

    def test_coarse_grids(self):
        with self.assertRaises(grid.ResolutionError) as ctx:
            grid.make_laminate(GridSpec(2, 2), LaminatePath((0, 2, 1), 0), axis=1)
        self.assertEqual(4, ctx.exception.min_cells_per_side)
        p = grid.make_laminate(GridSpec(2, 6), LaminatePath((0, 2, 3, 4, 1), 0), axis=1)
        np.testing.assert_array_equal([1, 1, 4, 3, 2, 0], p.labels[2])

    def test_strips_have_equal_width(self):
        p = grid.make_laminate(GridSpec(2, 24), LaminatePath((0, 2, 3, 4, 1), 1), axis=1)
        np.testing.assert_allclose([0.375, 0.375, 0.25 / 3, 0.25 / 3, 0.25 / 3], grid.volumes(p))

    def test_axis_checked(self):
        spec = GridSpec(2, 8)
        with self.assertRaisesRegex(grid.PartitionError, 'axis 3'):
            grid.make_halfspace_pair(spec, 0, 1, axis=2)
        with self.assertRaisesRegex(grid.PartitionError, 'axis 3'):
            grid.make_laminate(spec, LaminatePath((0, 2, 1), 0), axis=2)

    def test_path_checks(self):
        with self.assertRaises(grid.PartitionError):
            LaminatePath((0,))
        with self.assertRaises(grid.PartitionError):
            LaminatePath((0, 2, 0))
        with self.assertRaises(grid.PartitionError):
            LaminatePath((0, 1), -1)

    def test_l1_shrinks_with_stage(self):
        spec = GridSpec(2, 64)
        half = grid.make_halfspace_pair(spec, 0, 1, 1, m=3)
        previous = None
        for q in range(5):
            lam = grid.make_laminate(spec, LaminatePath((0, 2, 1), q), 1, m=3)
            d = grid.l1_distance(lam, half)
            self.assertAlmostEqual(2.0 ** -(q + 1), d[2], places=14)
            if previous is not None:
                self.assertLess(d[2], previous)
            previous = d[2]

    def test_recovery_sequence(self):
        sigma = tensions.SurfaceTensionMatrix([[0, 1, 1], [1, 0, 3], [1, 3, 0]])
        seq = grid.recovery_sequence(GridSpec(2, 16), sigma, 1, 2, 1, stages=(0, 1, 2))
        self.assertEqual(3, len(seq))
        for q, p in enumerate(seq):
            self.assertEqual(grid.HalfspacePair(1, 2, 1), p.exterior)
            self.assertAlmostEqual(2.0 ** -(q + 1), grid.volumes(p)[0])


class TestMeasures(unittest.TestCase):
    def test_volumes_sum(self):
        rng = np.random.default_rng(0)
        template = grid.make_constant(GridSpec(3, 5, 1.5), 0, 4)
        p = grid.make_random(template, rng, frozen_layers=0)
        self.assertAlmostEqual(1.5 ** 3, float(np.sum(grid.volumes(p))), places=12)

    def test_l1_identical(self):
        p = grid.make_halfspace_pair(GridSpec(2, 4), 0, 1, 0)
        np.testing.assert_array_equal([0, 0], grid.l1_distance(p, p))

    def test_l1_reflection(self):
        spec = GridSpec(2, 4)
        a = grid.make_halfspace_pair(spec, 0, 1, 1)
        b = grid.make_halfspace_pair(spec, 1, 0, 1)
        np.testing.assert_allclose([1.0, 1.0], grid.l1_distance(a, b))

    def test_l1_spec_mismatch(self):
        with self.assertRaises(grid.PartitionError):
            grid.l1_distance(grid.make_constant(GridSpec(2, 4), 0, 2),
                    grid.make_constant(GridSpec(2, 8), 0, 2))

    def test_random_keeps_frozen_cells(self):
        spec = GridSpec(2, 8)
        template = grid.make_halfspace_pair(spec, 0, 1, 1, m=4)
        p = grid.make_random(template, np.random.default_rng(3), frozen_layers=2)
        frozen = ~spec.interior_mask(2)
        np.testing.assert_array_equal(template.labels[frozen], p.labels[frozen])
        self.assertEqual(template.exterior, p.exterior)
        q = grid.make_random(template, np.random.default_rng(3), frozen_layers=2)
        self.assertEqual(p, q)


class TestExteriorTokens(unittest.TestCase):
    def test_tokens(self):
        for rule in (grid.NO_EXTERIOR, grid.Constant(2), grid.HalfspacePair(0, 1, 1),
                     grid.HalfspacePair(2, 0, 0, offset=0.125)):
            self.assertEqual(rule, grid.parse_exterior(rule.token()))
        self.assertEqual('halfpair:1,2,axis2', grid.HalfspacePair(0, 1, 1).token())

    def test_bad_tokens(self):
        for token in ('', 'halfpair:1', 'halfpair:1,2,ax2', 'constant:x', 'mirror:1'):
            with self.assertRaises(grid.PartitionFormatError):
                grid.parse_exterior(token)

    def test_labels_at(self):
        rule = grid.HalfspacePair(0, 1, 1, offset=0.5)
        np.testing.assert_array_equal([0, 1, 0], rule.labels_at([[0, 0.5], [9, 0.4], [-9, 2]]))


class TestSerialize(unittest.TestCase):
    def test_format(self):
        p = grid.make_halfspace_pair(GridSpec(2, 4), 0, 1, 1, m=3)
        self.assertEqual(
                b'n=2 N=4 L=1 m=3 exterior=halfpair:1,2,axis2\n'
                b'2 2 1 1\n2 2 1 1\n2 2 1 1\n2 2 1 1\n',
                grid.serialize(p))
        self.assertEqual(p, grid.deserialize(grid.serialize(p)))

    def test_header_parses(self):
        data = 'n=2 N=4 L=1 m=3 exterior=halfpair:1,2,axis2\n' + '3 1 2 1\n' * 4
        p = grid.deserialize(data)
        self.assertEqual(GridSpec(2, 4, 1.0), p.spec)
        self.assertEqual(3, p.m)
        np.testing.assert_array_equal([2, 0, 1, 0], p.labels[0])

    def test_label_out_of_range(self):
        data = 'n=2 N=2 L=1 m=3 exterior=none\n1 7\n1 1\n'
        with self.assertRaisesRegex(grid.PartitionFormatError, 'label 7'):
            grid.deserialize(data)

    def test_truncated(self):
        with self.assertRaisesRegex(grid.PartitionFormatError, 'truncated'):
            grid.deserialize('n=2 N=2 L=1 m=3 exterior=none\n1 2\n')

    def test_bad_header(self):
        with self.assertRaisesRegex(grid.PartitionFormatError, 'missing'):
            grid.deserialize('n=2 N=2 m=3 exterior=none\n1 2\n1 2\n')
        with self.assertRaises(grid.PartitionFormatError):
            grid.deserialize('n=2 N=2 L=1 m=3 exterior=none color=red\n1 2\n1 2\n')
        with self.assertRaises(grid.PartitionFormatError):
            grid.deserialize('n=5 N=2 L=1 m=3 exterior=none\n1 2\n1 2\n')
        with self.assertRaises(grid.PartitionFormatError):
            grid.deserialize(b'n=2 N=2 L=1 m=3 exterior=none\n1 2\n1 \xff\n')


class TestPartitionFiles(TestCase):
    def setUp(self):
        self.setUpPyfakefs()

    def test_save_load(self):
        self.fs.create_dir('/runs')
        p = grid.make_laminate(GridSpec(3, 4), LaminatePath((1, 0, 2), 0), 2)
        grid.save(p, '/runs/lam.txt')
        self.assertEqual(p, grid.load('/runs/lam.txt'))

    def test_load_missing(self):
        with self.assertRaises(OSError):
            grid.load('/runs/nothing.txt')


if __name__ == '__main__':
    unittest.main()
