import texttable as tt

from . import util


def num(x, digits=6):
    return '%.*g' % (digits, x)

def _table(headings, width, align=None):
    tab = tt.Texttable()
    tab.header(headings)
    tab.set_cols_dtype('t' * len(headings))
    tab.set_cols_align(align or 'r' * len(headings))
    tab.set_header_align(align or 'r' * len(headings))
    tab.set_max_width(width)
    tab.set_deco(0)  # No borders
    return tab

def matrix_report(entries, width=80):
    m = len(entries)
    tab = _table([''] + [str(k + 1) for k in range(m)], width)
    for i, row in enumerate(entries):
        tab.add_row([str(i + 1)] + [num(x) for x in row])
    return tab.draw()

def relax_report(sigma, bar, rows, width=80):
    '''rows: (i, j, sigma_ij, bar_ij, path) with 1-based chambers'''
    tab = _table(['pair', 'sigma', 'sigma_bar', 'path'], width, align='rrrl')
    for i, j, s, b, path in rows:
        mark = '' if s == b else ' *'
        tab.add_row(['%d,%d' % (i, j), num(s), num(b) + mark, path])
    return ('relaxed matrix:\n' + matrix_report(bar.entries, width) + '\n\n'
            + tab.draw())

def volumes_report(vols, width=80):
    cells = ['%d:%s' % (k + 1, num(v, 4)) for k, v in enumerate(vols)]
    n_columns = max(1, int(width / (len(max(cells, key=len)) + 3)))
    tab = tt.Texttable()
    tab.set_max_width(width)
    for row in util.column_wrap(cells, n_columns, filler=''):
        tab.add_row(row)
    tab.set_cols_align('r' * min(n_columns, len(cells)))
    tab.set_deco(tt.Texttable.VLINES)
    return tab.draw()

def energy_report(report, classical_target=None, width=80):
    headings = ['s', 'internal', 'boundary', 'total', '(1-2s) total', 'tail bound']
    row = [num(report.s), num(report.internal), num(report.boundary), num(report.total),
           num(report.scaled_total), num(report.tail_bound, 3)]
    if classical_target is not None:
        headings.append('target')
        row.append(num(classical_target))
    tab = _table(headings, width)
    tab.add_row(row)
    return tab.draw()

def scan_report(rows, width=80, limit=None):
    tab = _table(['s', 'N', '(1-2s) total', 'target', 'ratio', 'tail'], width)
    for r in rows:
        ratio = r.scaled_total / r.classical_target if r.classical_target else float('nan')
        tab.add_row([num(r.s), r.N, num(r.scaled_total), num(r.classical_target),
                num(ratio, 4), num(r.tail_bound, 3)])
    text = tab.draw()
    if limit is not None:
        text += '\nextrapolated to s = 1/2: %s' % num(limit)
    return text

def sweep_report(records, width=80, height=None):
    '''height, if provided, will limit the number of rows in the table,
       showing first and last rows and an elipsis in the middle.'''
    abbreviate = bool(height) and height < len(records) + 1  # One row for header
    n_begin_rows = n_end_rows = 0
    if abbreviate:
        n_rows = max(2, height - 2)  # One for header, one for elipsis
        n_begin_rows = int(n_rows / 2)
        n_end_rows = n_rows - n_begin_rows

    tab = _table(['sweep', 'flips', 'energy', 'third phase'], width)
    for i, r in enumerate(records):
        if abbreviate and i == n_begin_rows:
            tab.add_row(['...', '', '', ''])
        elif abbreviate and n_begin_rows < i < len(records) - n_end_rows:
            continue
        else:
            tab.add_row([r.sweep, r.accepted, num(r.energy, 10), num(r.third_phase_volume, 4)])
    return tab.draw()

def cut_report(cut, flow_value, decomposition, width=80):
    side = lambda chambers: ' '.join(str(c + 1) for c in sorted(chambers))
    lines = ['max flow %s; cut {%s} | {%s}' % (num(flow_value, 10),
            side(cut.source_side), side(cut.sink_side))]
    tab = _table(['path', 'weight'], width, align='lr')
    for path, w in decomposition.paths:
        tab.add_row([' -> '.join(str(v + 1) for v in path), num(w)])
    return '\n'.join(lines) + '\n' + tab.draw()

def wetting_report(rows, width=80):
    tab = _table(['s', 'N', 'energy', 'pure', 'relaxed', 'third phase', 'wets'], width)
    for r in rows:
        tab.add_row([num(r.s), r.N, num(r.energy), num(r.pure_interface),
                num(r.relaxed_target), num(r.third_phase_volume, 4),
                'yes' if r.success else 'no'])
    return tab.draw()

def gamma_bar_report(estimate, width=80):
    tab = _table(['best', 'half-space', 'gap', 'restarts'], width)
    tab.add_row([num(estimate.best, 10), num(estimate.halfspace, 10),
            num(estimate.gap, 3), len(estimate.restart_values)])
    return tab.draw()

def outputs_report(paths):
    prefix, names = util.split_path_prefix([str(p) for p in paths])
    lines = ['outputs in %s:' % (prefix or '.')]
    lines += ['  %s' % n for n in names]
    return '\n'.join(lines)

def verify_report(report, width=80):
    tab = _table(['output', 'column', 'max abs dev', 'max rel dev'], width, align='llrr')
    for d in report.deviations:
        tab.add_row([d.output, d.column or '-', num(d.max_abs, 3), num(d.max_rel, 3)])
    lines = [tab.draw()]
    for note in report.mismatches:
        lines.append('mismatch: ' + note)
    for name in report.missing:
        lines.append('missing output: ' + name)
    lines.append('OK: zero deviation' if report.ok else 'FAILED: outputs deviate')
    return '\n'.join(lines)
