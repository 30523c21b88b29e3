#!/usr/bin/python3

import contextlib
import io
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import yaml

from fracperim import __main__ as cli
from fracperim import grid
from fracperim import kernel
from fracperim import lab
from fracperim import tensions
from fracperim import util
from fracperim.kernel import KernelConfig

WETTING = [[0, 3, 1], [3, 0, 1], [1, 1, 0]]

SMALL_KERNEL = {'s': 0.3, 'max_depth': 3}


def experiment(kind, **sections):
    data = {'experiment': kind, 'seed': 3, 'threads': 1,
            'tensions': {'matrix': WETTING}}
    data.update(sections)
    return data


class LabTestCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, data, name='config.yaml'):
        path = self.root / name
        with open(path, 'w') as f:
            yaml.safe_dump(data, f)
        return path

    def resolve(self, data, out='run', **overrides):
        cfg = lab.Configuration.from_file(self.write_config(data))
        return lab.ExperimentConfig.from_configuration(cfg, output=str(self.root / out),
                **overrides)

    def run_experiment(self, data, out='run'):
        return lab.run(self.resolve(data, out))


class TestConfiguration(LabTestCase):
    def test_yaml_and_json(self):
        data = experiment('relax')
        a = lab.Configuration.from_file(self.write_config(data))
        path = self.root / 'config.json'
        with open(path, 'w') as f:
            f.write('{"experiment": "relax", "tensions": {"matrix": [[0, 1], [1, 0]]}}')
        b = lab.Configuration.from_file(path)
        self.assertEqual('relax', a.experiment)
        self.assertEqual('relax', b.experiment)
        self.assertEqual(self.root, b.base_dir)

    def test_yaml_error_names_line(self):
        path = self.root / 'broken.yaml'
        with open(path, 'w') as f:
            f.write('experiment: relax\ntensions:\n  matrix: [[0, 1], [1, 0]\n')
        with self.assertRaisesRegex(lab.ConfigError, 'line'):
            lab.Configuration.from_file(path)

    def test_unknown_suffix(self):
        path = self.root / 'config.ini'
        path.write_text('[experiment]\n')
        with self.assertRaises(lab.ConfigError):
            lab.Configuration.from_file(path)

    def test_not_a_mapping(self):
        with self.assertRaises(lab.ConfigError):
            lab.Configuration(['relax'])

    def test_default_paths(self):
        with mock.patch.dict(os.environ, {'FRACPERIM_CFG_PATH': '/etc/fp.yaml'}):
            self.assertEqual('/etc/fp.yaml', lab.default_config_path())
        with mock.patch.dict(os.environ, {'FRACPERIM_THREADS': '3'}):
            self.assertEqual(3, lab.default_threads())
        with mock.patch.dict(os.environ, {'FRACPERIM_THREADS': 'many'}):
            self.assertGreaterEqual(lab.default_threads(), 1)


class TestResolution(LabTestCase):
    def test_energy_config(self):
        config = self.resolve(experiment('energy',
                grid={'n': 2, 'cells_per_side': 8},
                kernel=SMALL_KERNEL,
                partition={'kind': 'laminate', 'chambers': [1, 3, 2], 'axis': 2}))
        self.assertEqual(grid.GridSpec(2, 8), config.spec)
        self.assertEqual(KernelConfig(s=0.3, max_depth=3), config.kernel_config)
        self.assertEqual(lab.PartitionRecipe('laminate', (0, 2, 1), 1, 0), config.partition)
        self.assertEqual(3, config.seed)
        self.assertEqual(1, config.threads)

    def test_overrides(self):
        config = self.resolve(experiment('relax'), seed=11, threads=2)
        self.assertEqual(11, config.seed)
        self.assertEqual(2, config.threads)

    def test_problems_are_collected(self):
        data = experiment('energy',
                grid={'n': 5, 'cells_per_side': 8},
                kernel={'s': 0.7},
                partition={'kind': 'halfspace', 'chambers': [1, 4], 'axis': 2})
        with self.assertRaises(lab.ConfigError) as ctx:
            self.resolve(data)
        problems = ' | '.join(ctx.exception.problems)
        self.assertIn('grid', problems)
        self.assertIn('kernel', problems)
        self.assertIn('partition.chambers[1]', problems)
        self.assertGreaterEqual(len(ctx.exception.problems), 3)

    def test_missing_sections(self):
        with self.assertRaises(lab.ConfigError) as ctx:
            self.resolve(experiment('minimize', tensions=None))
        problems = ctx.exception.problems
        for name in ('tensions', 'grid', 'kernel', 'partition', 'minimize'):
            self.assertIn('%s: missing section' % name, problems)

    def test_wrong_experiment(self):
        with self.assertRaises(lab.ConfigError):
            self.resolve(experiment('bake'))
        cfg = lab.Configuration.from_file(self.write_config(experiment('relax')))
        with self.assertRaises(lab.ConfigError):
            lab.ExperimentConfig.from_configuration(cfg, kind='energy', output=str(self.root))

    def test_missing_sigma_file(self):
        data = experiment('relax', tensions={'file': 'nowhere.txt'})
        with self.assertRaisesRegex(lab.ConfigError, 'tensions.file'):
            self.resolve(data)
        self.assertFalse((self.root / 'run').exists())

    def test_sigma_file(self):
        tensions.SurfaceTensionMatrix(WETTING).save(self.root / 'sigma.txt')
        config = self.resolve(experiment('relax', tensions={'file': 'sigma.txt'}))
        self.assertEqual(tensions.SurfaceTensionMatrix(WETTING), config.sigma)

    def test_invalid_matrix(self):
        with self.assertRaisesRegex(lab.ConfigError, 'tensions'):
            self.resolve(experiment('relax', tensions={'matrix': [[0, 1], [2, 0]]}))

    def test_wetting_needs_violation(self):
        data = experiment('wetting', grid={'n': 2}, kernel=SMALL_KERNEL, pair=[1, 3],
                scan={'s': [0.3], 'cells_per_side': [8]}, minimize={})
        with self.assertRaisesRegex(lab.ConfigError, 'pair'):
            self.resolve(data)

    def test_replacement_needs_matching_exterior(self):
        data = experiment('mincut-replace', grid={'n': 2, 'cells_per_side': 8},
                kernel=SMALL_KERNEL, pair=[1, 2],
                partition={'kind': 'random', 'exterior': 'halfpair:1,3,axis2'})
        with self.assertRaisesRegex(lab.ConfigError, 'exterior'):
            self.resolve(data)

    def test_too_coarse_laminate(self):
        data = experiment('energy', grid={'n': 2, 'cells_per_side': 4}, kernel=SMALL_KERNEL,
                partition={'kind': 'laminate', 'chambers': [1, 3, 2], 'stage': 2})
        with self.assertRaisesRegex(lab.ConfigError, 'N = 8'):
            self.resolve(data)


class TestRuns(LabTestCase):
    def test_relax(self):
        result = self.run_experiment(experiment('relax'))
        self.assertEqual(('sigma_bar.txt', 'relax_summary.csv', 'additive.csv',
                'cut_decomposition.txt'), result.outputs)
        bar = tensions.SurfaceTensionMatrix.load(result.output / 'sigma_bar.txt')
        self.assertEqual(tensions.SurfaceTensionMatrix([[0, 2, 1], [2, 0, 1], [1, 1, 0]]), bar)
        header, rows = util.read_csv(result.output / 'relax_summary.csv')
        self.assertEqual(['i', 'j', 'sigma', 'sigma_bar', 'path'], header)
        self.assertEqual(['1', '2', '3', '2', '1 3 2'], rows[0])

    def test_manifest(self):
        result = self.run_experiment(experiment('relax'))
        manifest = lab.load_manifest(result.manifest)
        self.assertEqual('relax', manifest['experiment'])
        self.assertEqual(list(result.outputs), manifest['outputs'])
        self.assertEqual(WETTING, manifest['config']['tensions']['matrix'])
        self.assertIn('wall_s', manifest['timing'])
        self.assertIn('numpy', manifest['host'])

    def test_energy(self):
        result = self.run_experiment(experiment('energy',
                grid={'n': 2, 'cells_per_side': 8}, kernel=SMALL_KERNEL,
                partition={'kind': 'halfspace', 'chambers': [1, 2]}))
        header, rows = util.read_csv(result.output / 'energy.csv')
        self.assertEqual(list(lab.ENERGY_HEADER), header)
        p = grid.load(result.output / 'partition.txt')
        report = kernel.multiphase_energy(p, tensions.SurfaceTensionMatrix(WETTING),
                KernelConfig(**SMALL_KERNEL))
        self.assertEqual(report.total, float(rows[0][header.index('total')]))
        self.assertAlmostEqual(2 * 3.0, float(rows[0][header.index('classical_target')]))

    def test_gamma_scan(self):
        data = experiment('gamma-scan', grid={'n': 2}, kernel=SMALL_KERNEL,
                partition={'kind': 'halfspace', 'chambers': [1, 2]},
                scan={'s': [0.3, 0.4], 'cells_per_side': [8, 16]})
        result = self.run_experiment(data)
        header, rows = util.read_csv(result.output / 'gamma_scan.csv')
        self.assertEqual(list(kernel.ScanRow.HEADER), header)
        expected = kernel.gamma_scan(
                lambda spec: grid.make_halfspace_pair(spec, 0, 1, 1, m=3),
                tensions.SurfaceTensionMatrix(WETTING), 2, 1.0, [0.3, 0.4], [8, 16],
                KernelConfig(**SMALL_KERNEL))
        self.assertEqual([r.scaled_total for r in expected],
                [float(row[header.index('scaled_total')]) for row in rows])
        header, rows = util.read_csv(result.output / 'gamma_limit.csv')
        self.assertEqual(['N', 'order', 'extrapolated', 'classical_target'], header)
        self.assertEqual(['16', '1'], rows[0][:2])
        self.assertEqual(kernel.extrapolate_limit(expected), float(rows[0][2]))

    def test_partition_file(self):
        spec = grid.GridSpec(2, 8)
        grid.save(grid.make_halfspace_pair(spec, 0, 2, 0, m=3), self.root / 'start.txt')
        result = self.run_experiment(experiment('energy', grid={'n': 2, 'cells_per_side': 8},
                kernel=SMALL_KERNEL, partition={'kind': 'file', 'file': 'start.txt'}))
        self.assertEqual(grid.load(self.root / 'start.txt'),
                grid.load(result.output / 'partition.txt'))

    def test_mincut_replace(self):
        data = experiment('mincut-replace', grid={'n': 2, 'cells_per_side': 8},
                kernel=SMALL_KERNEL, pair=[1, 2],
                partition={'kind': 'random', 'exterior': 'halfpair:1,2,axis2'})
        result = self.run_experiment(data)
        self.assertEqual(('network.txt', 'flow.csv', 'paths.csv', 'cut.txt', 'input.txt',
                'replaced.txt', 'energy.csv'), result.outputs)
        replaced = grid.load(result.output / 'replaced.txt')
        self.assertLessEqual(replaced.chambers_present(), frozenset({0, 1}))
        header, rows = util.read_csv(result.output / 'energy.csv')
        col = header.index('sigma_bar_total')
        self.assertLessEqual(float(rows[1][col]), float(rows[0][col]) * (1 + 1e-10))

    def test_minimize(self):
        data = experiment('minimize', grid={'n': 2, 'cells_per_side': 8}, kernel=SMALL_KERNEL,
                partition={'kind': 'random', 'exterior': 'halfpair:1,2,axis2'},
                minimize={'max_sweeps': 20})
        result = self.run_experiment(data)
        header, rows = util.read_csv(result.output / 'sweep_log.csv')
        self.assertEqual(['sweep', 'accepted', 'energy', 'third_phase_volume'], header)
        _, energies = util.read_csv(result.output / 'energy.csv')
        self.assertEqual(['initial', 'final'], [row[0] for row in energies])

    def test_wetting(self):
        data = experiment('wetting', grid={'n': 2}, kernel=SMALL_KERNEL, pair=[1, 2],
                scan={'s': [0.3], 'cells_per_side': [8, 16]}, minimize={'max_sweeps': 5})
        result = self.run_experiment(data)
        self.assertEqual(('wetting.csv', 'final_00.txt', 'final_01.txt'), result.outputs)
        header, rows = util.read_csv(result.output / 'wetting.csv')
        self.assertEqual(2, len(rows))
        self.assertIn(rows[0][header.index('success')], ('true', 'false'))

    def test_gamma_bar(self):
        data = experiment('gamma-bar', grid={'n': 2, 'cells_per_side': 8}, kernel=SMALL_KERNEL,
                pair=[1, 2], minimize={'max_sweeps': 10, 'restarts': 2})
        result = self.run_experiment(data)
        header, rows = util.read_csv(result.output / 'gamma_bar_summary.csv')
        self.assertEqual(['best', 'halfspace', 'gap'], header)
        self.assertLessEqual(float(rows[0][2]), 0.0)
        _, restarts = util.read_csv(result.output / 'gamma_bar.csv')
        self.assertEqual([['0', '3'], ['1', '4']], [row[:2] for row in restarts])


class TestVerify(LabTestCase):
    def energy_config(self, **kernel_cfg):
        return experiment('energy', grid={'n': 2, 'cells_per_side': 8},
                kernel=dict(SMALL_KERNEL, leaf_rule='midpoint', **kernel_cfg),
                partition={'kind': 'random', 'exterior': 'halfpair:1,2,axis2'})

    def test_rerun_matches(self):
        result = self.run_experiment(self.energy_config())
        report = lab.verify(result.manifest)
        self.assertTrue(report.ok)
        self.assertEqual((), report.mismatches)
        self.assertTrue(all(d.max_abs == 0 for d in report.deviations))
        self.assertTrue((result.output / lab.VERIFY_DIR / lab.MANIFEST).exists())

    def test_thread_count_does_not_matter(self):
        data = experiment('gamma-bar', grid={'n': 2, 'cells_per_side': 8}, kernel=SMALL_KERNEL,
                pair=[1, 2], minimize={'max_sweeps': 10, 'restarts': 3})
        result = self.run_experiment(data)
        report = lab.verify(result.manifest, threads=3)
        self.assertTrue(report.ok)
        self.assertEqual((), report.mismatches)

    def test_changed_depth_is_flagged(self):
        result = self.run_experiment(self.energy_config())
        other = self.write_config(self.energy_config(max_depth=5), name='other.yaml')
        report = lab.verify(result.manifest, against=other)
        self.assertTrue(any(m.startswith('kernel.max_depth') for m in report.mismatches))
        self.assertFalse(report.ok)
        worst = max(d.max_abs for d in report.deviations)
        self.assertGreater(worst, 0.0)

    def test_bad_manifest(self):
        path = self.root / 'manifest.yaml'
        path.write_text('just: text\n')
        with self.assertRaises(lab.ConfigError):
            lab.verify(path)

    def test_compare_csv(self):
        util.write_csv(self.root / 'a.csv', ('x', 'y'), [(1.0, 'p'), (2.0, 'q')])
        util.write_csv(self.root / 'b.csv', ('x', 'y'), [(1.0, 'p'), (2.5, 'q')])
        devs = lab.compare_csv(self.root / 'a.csv', self.root / 'b.csv', 't.csv')
        self.assertEqual([lab.Deviation('t.csv', 'x', 0.5, 0.2), lab.Deviation('t.csv', 'y', 0.0, 0.0)],
                devs)


class TestCommandLine(LabTestCase):
    def main(self, *argv):
        out = io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
            code = cli.main(list(argv))
        return code, out.getvalue()

    def test_run_and_verify(self):
        path = self.write_config(experiment('relax'))
        out = self.root / 'cli'
        code, text = self.main('-c', str(path), 'relax', '--out', str(out))
        self.assertEqual(0, code)
        self.assertIn('sigma_bar.txt', text)
        code, text = self.main('verify', str(out / lab.MANIFEST))
        self.assertEqual(0, code)

    def test_config_error_exit(self):
        path = self.write_config(experiment('relax', tensions={'file': 'gone.txt'}))
        code, _ = self.main('-c', str(path), 'relax', '--out', str(self.root / 'cli'))
        self.assertEqual(2, code)
        self.assertFalse((self.root / 'cli').exists())

    def test_missing_config_file(self):
        code, _ = self.main('-c', str(self.root / 'absent.yaml'), 'relax')
        self.assertEqual(2, code)

    def test_module_error_exit(self):
        path = self.write_config(experiment('relax'))
        with mock.patch.object(lab, 'run', side_effect=kernel.KernelError('table too large')):
            code, _ = self.main('-c', str(path), 'relax', '--out', str(self.root / 'cli'))
        self.assertEqual(1, code)

    def test_no_command(self):
        code, _ = self.main()
        self.assertEqual(1, code)


if __name__ == '__main__':
    unittest.main()
