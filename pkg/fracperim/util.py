import csv
import io
import math
import os

import numpy as np

# Enough digits for any double to survive a text round trip.
FLOAT_DIGITS = 17


class TextFormatError(ValueError):
    pass


def fmt_float(x):
    return '%.*g' % (FLOAT_DIGITS, x)

def fmt_cell(x):
    'Format one CSV cell; floats get full precision, everything else str()'
    if isinstance(x, (float, np.floating)):
        return fmt_float(float(x))
    if isinstance(x, (bool, np.bool_)):
        return 'true' if x else 'false'
    return str(x)

def time_format(sec):
    if sec < 60:
        return '%.1fs' % sec
    sec = int(sec)
    return '%d:%02d:%02d' % (sec // 3600, (sec % 3600) // 60, sec % 60)

def column_wrap(items, n_cols, filler=None):
    '''Take items, distribute among n_cols columns, and return a set
       of rows containing the slices of those columns.'''
    rows = []
    n_rows = math.ceil(len(items) / n_cols)
    for row in range(n_rows):
        row_items = items[row : : n_rows]
        # Pad and truncate
        rows.append( (row_items + ([filler] * n_cols))[:n_cols] )
    return rows

def format_square_matrix(entries):
    '''Text form of a square matrix: the size on the first line, then
       one whitespace-separated row per line.'''
    a = np.asarray(entries, dtype=float)
    lines = ['%d' % a.shape[0]]
    for row in a:
        lines.append(' '.join(fmt_float(x) for x in row))
    return '\n'.join(lines) + '\n'

def parse_square_matrix(text):
    tokens = text.split()
    if not tokens:
        raise TextFormatError('empty matrix text')
    try:
        m = int(tokens[0])
    except ValueError:
        raise TextFormatError('first token must be the matrix size, got %r' % tokens[0])
    if m < 1:
        raise TextFormatError('matrix size must be positive, got %d' % m)
    body = tokens[1:]
    if len(body) != m * m:
        raise TextFormatError(
            'expected %d entries for a %dx%d matrix, found %d' % (m * m, m, m, len(body)))
    try:
        values = [float(t) for t in body]
    except ValueError as err:
        raise TextFormatError('bad matrix entry: %s' % err)
    return np.array(values, dtype=float).reshape(m, m)

def write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        f.write(csv_text(header, rows))

def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_cell(x) for x in row])
    return buf.getvalue()

def read_csv(path):
    'Returns (header, rows) with every cell left as a string'
    with open(path, newline='') as f:
        reader = csv.reader(f)
        rows = list(reader)
    if not rows:
        raise TextFormatError('%s: empty CSV file' % path)
    return rows[0], rows[1:]

def split_path_prefix(items):
    if not items:
        return ('', [])

    prefix = os.path.commonpath(items)
    if prefix == '/':
        return ('', items)
    else:
        remainders = [ os.path.relpath(i, prefix) for i in items ]
        return (prefix, remainders)
