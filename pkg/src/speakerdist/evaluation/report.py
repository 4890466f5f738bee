"""CSV and aligned-text renderers (and their parsers) for reports and tables.

Numbers are written with ``repr`` unless a rounding ``digits`` is given,
so ``parse(render(x)) == x`` holds for full-precision output.
"""
import csv
import io
import json
import math

from .metrics import BinRow, EvalReport

MAGIC = "speakerdist-report"
VERSION = "1"
ROW_FIELDS = ("bin", "count", "l1", "l1_ci", "rl1", "rl1_ci", "flags")


def _fmt(v, digits=None, blank=""):
    if v is None:
        return blank
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v) or digits is None:
            return repr(v)
        return f"{v:.{digits}f}"
    return str(v)


def _num(s, blank=""):
    if s == blank:
        return None
    return float(s)


def _row_cells(r, digits=None, blank=""):
    return [r.label, str(r.count), _fmt(r.l1, digits, blank), _fmt(r.l1_ci, digits, blank),
            _fmt(r.rl1, digits, blank), _fmt(r.rl1_ci, digits, blank),
            ";".join(r.flags) if r.flags else blank]


def _parse_row(cells, blank=""):
    label, count, a, b, c, d, flags = cells
    return BinRow(label, int(count), _num(a, blank), _num(b, blank), _num(c, blank), _num(d, blank),
                  tuple(flags.split(";")) if flags != blank else ())


def render_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# {MAGIC}", VERSION])
    w.writerow(["# ci_mode", report.ci_mode])
    w.writerow(["# config", json.dumps(report.config, sort_keys=True)])
    w.writerow(ROW_FIELDS)
    for r in report.rows:
        w.writerow(_row_cells(r))
    for name, pts in report.curves.items():
        w.writerow(["# curve", name])
        w.writerow(["x", "y", "count"])
        for x, y, n in pts:
            w.writerow([repr(float(x)), repr(float(y)), int(n)])
    return buf.getvalue()


def parse_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:1] != [f"# {MAGIC}"]:
        raise ValueError("not a speakerdist report")
    ci_mode = rows[1][1]
    config = json.loads(rows[2][1])
    out_rows, curves, cur = [], {}, None
    for cells in rows[4:]:
        if cells[0] == "# curve":
            cur = curves.setdefault(cells[1], [])
        elif cur is None:
            out_rows.append(_parse_row(cells))
        elif cells != ["x", "y", "count"]:
            cur.append((float(cells[0]), float(cells[1]), int(cells[2])))
    return EvalReport(out_rows, ci_mode, config, curves)


def _align(table):
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    return ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip()
            for row in table]


def render_text(report, digits=None):
    """Aligned table (Average first, then bins); ``digits`` rounds for display."""
    lines = [f"{MAGIC} v{VERSION}", f"ci_mode: {report.ci_mode}",
             f"config: {json.dumps(report.config, sort_keys=True)}", ""]
    table = [["bin", "N", "L1", "+-", "rL1", "+-", "flags"]]
    table += [_row_cells(r, digits, "-") for r in report.rows]
    lines += _align(table)
    for name, pts in report.curves.items():
        lines += ["", f"curve: {name}"]
        lines += _align([["x", "y", "count"]] + [[_fmt(float(x), digits), _fmt(float(y), digits), str(n)]
                                                 for x, y, n in pts])
    return "\n".join(lines) + "\n"


def parse_text(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ValueError("not a speakerdist text report")
    ci_mode = lines[1].split(": ", 1)[1]
    config = json.loads(lines[2].split(": ", 1)[1])
    rows, curves, cur = [], {}, None
    for line in lines[5:]:
        if not line.strip():
            continue
        if line.startswith("curve: "):
            cur = curves.setdefault(line[len("curve: "):], [])
            continue
        cells = line.split()
        if cur is None:
            rows.append(_parse_row(cells, "-"))
        elif cells != ["x", "y", "count"]:
            cur.append((float(cells[0]), float(cells[1]), int(cells[2])))
    return EvalReport(rows, ci_mode, config, curves)


def render_table_csv(columns, rows):
    """Generic CSV for lists of dict rows (ablation tables, matrices)."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in columns})
    return buf.getvalue()


def render_table_text(columns, rows, digits=2):
    table = [list(columns)] + [[_fmt(r.get(k), digits, "-") for k in columns] for r in rows]
    return "\n".join(_align(table)) + "\n"


def parse_table_csv(text):
    """Rows as dicts; numeric-looking cells become floats, blanks None."""
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in r.items():
            if v == "":
                row[k] = None
                continue
            try:
                row[k] = int(v) if v.lstrip("-").isdigit() else float(v)
            except ValueError:
                row[k] = v
        out.append(row)
    return out
