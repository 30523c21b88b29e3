#!/usr/bin/python3

import unittest

from fracperim import kernel
from fracperim import lab
from fracperim import minimize
from fracperim import reporting
from fracperim import tensions


class TestReporting(unittest.TestCase):
    def test_num(self):
        self.assertEqual('0.333333', reporting.num(1 / 3))
        self.assertEqual('2', reporting.num(2.0))
        self.assertEqual('1.23e-07', reporting.num(1.234e-7, 3))

    def test_matrix_report(self):
        text = reporting.matrix_report([[0, 1.5], [1.5, 0]])
        lines = text.splitlines()
        self.assertEqual(3, len(lines))
        self.assertEqual(['1', '2'], lines[0].split())
        self.assertEqual(['1', '0', '1.5'], lines[1].split())

    def test_relax_report_marks_relaxed_pairs(self):
        sigma = tensions.SurfaceTensionMatrix([[0, 3, 1], [3, 0, 1], [1, 1, 0]])
        bar = tensions.relax(sigma)
        rows = [(1, 2, 3.0, 2.0, '1 3 2'), (1, 3, 1.0, 1.0, '1 3')]
        text = reporting.relax_report(sigma, bar, rows)
        self.assertTrue(text.startswith('relaxed matrix:'))
        self.assertIn('2 *', text)
        self.assertEqual(1, text.count('*'))

    def test_sweep_report_abbreviates(self):
        records = [minimize.SweepRecord(k, 10 - k, 5.0 - k, 0.0) for k in range(10)]
        full = reporting.sweep_report(records)
        self.assertEqual(11, len(full.splitlines()))
        short = reporting.sweep_report(records, height=6)
        lines = short.splitlines()
        self.assertEqual(6, len(lines))
        self.assertEqual('...', lines[3].split()[0])
        self.assertEqual('9', lines[-1].split()[0])

    def test_scan_report_ratio(self):
        row = kernel.ScanRow(s=0.45, N=16, internal=1.0, boundary=9.0, scaled_total=1.8,
                classical_target=2.0, tail_bound=0.01)
        text = reporting.scan_report([row])
        self.assertIn('0.9', text.splitlines()[1].split())
        self.assertNotIn('extrapolated', text)
        text = reporting.scan_report([row], limit=1.95)
        self.assertEqual('extrapolated to s = 1/2: 1.95', text.splitlines()[-1])

    def test_energy_report(self):
        report = kernel.EnergyReport(s=0.25, internal=1.0, boundary=3.0, total=4.0)
        text = reporting.energy_report(report, classical_target=2.0)
        self.assertIn('target', text.splitlines()[0])
        self.assertEqual(['0.25', '1', '3', '4', '2', '0', '2'], text.splitlines()[1].split())

    def test_outputs_report(self):
        self.assertEqual('outputs in /runs/a:\n  energy.csv\n  manifest.yaml',
                reporting.outputs_report(['/runs/a/energy.csv', '/runs/a/manifest.yaml']))

    def test_verify_report(self):
        good = lab.VerifyReport(deviations=(lab.Deviation('energy.csv', 'total', 0.0, 0.0),),
                mismatches=(), missing=())
        self.assertTrue(reporting.verify_report(good).endswith('OK: zero deviation'))
        bad = lab.VerifyReport(deviations=(lab.Deviation('energy.csv', 'total', 1e-3, 1e-4),),
                mismatches=('kernel.max_depth: 6 in manifest, 4 now',), missing=('flow.csv',))
        text = reporting.verify_report(bad)
        self.assertIn('mismatch: kernel.max_depth', text)
        self.assertIn('missing output: flow.csv', text)
        self.assertTrue(text.endswith('FAILED: outputs deviate'))

    def test_volumes_report(self):
        text = reporting.volumes_report([0.25, 0.5, 0.25])
        for cell in ('1:0.25', '2:0.5', '3:0.25'):
            self.assertIn(cell, text)


if __name__ == '__main__':
    unittest.main()
