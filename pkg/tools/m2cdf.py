"""Regenerate the bundled IEEE CDF case files from MATPOWER ``.m`` case files.

The MATPOWER files ``case14.m``, ``case_ieee30.m``, ``case57.m`` and
``case118.m`` were themselves produced from the University of Washington
archive CDF files by ``cdf2matp``; this script inverts that conversion for the
fields the package reads.

Usage::

    python tools/m2cdf.py path/to/case14.m src/ssbgeom/data/ieee14.cdf
"""

import re
import sys

import numpy as np


def read_matrix(text, name):
    m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, text, re.S)
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";")
        if line:
            rows.append([float(x) for x in line.split()])
    return np.array(rows)


def place(buf, first, last, text):
    """Right-justify ``text`` into 1-based inclusive columns [first, last]."""
    width = last - first + 1
    if len(text) > width:
        raise ValueError(f"{text!r} does not fit columns {first}-{last}")
    buf[first - 1:last] = list(text.rjust(width))


def fmt(x, decimals):
    s = f"{x:.{decimals}f}"
    # trailing zeros make the cards look like the archive files
    if "." in s:
        s = s.rstrip("0").rstrip(".") if decimals > 4 else s
    return s


def bus_card(row, pg, qg, base_mva):
    num, btype, pd, qd, gs, bs, area, vm, va, base_kv, zone = row[:11]
    cdf_type = {1: 0, 2: 2, 3: 3, 4: 0}[int(btype)]
    buf = [" "] * 127
    place(buf, 1, 4, str(int(num)))
    buf[5:17] = list(f"Bus {int(num):<8d}")
    place(buf, 19, 20, str(int(area)))
    place(buf, 21, 23, str(int(zone)))
    place(buf, 25, 26, str(cdf_type))
    place(buf, 28, 33, f"{vm:.3f}")
    place(buf, 34, 40, f"{va:.2f}")
    place(buf, 41, 49, f"{pd:.1f}" if pd == round(pd, 1) else f"{pd:.3f}")
    place(buf, 50, 58, f"{qd:.1f}" if qd == round(qd, 1) else f"{qd:.3f}")
    place(buf, 59, 67, f"{pg:.1f}" if pg == round(pg, 1) else f"{pg:.3f}")
    place(buf, 68, 75, f"{qg:.1f}" if qg == round(qg, 1) else f"{qg:.3f}")
    place(buf, 77, 83, f"{base_kv:.1f}")
    place(buf, 85, 90, f"{vm:.3f}" if cdf_type >= 2 else "0.0")
    place(buf, 91, 98, "0.0")
    place(buf, 99, 106, "0.0")
    place(buf, 107, 114, f"{gs / base_mva:.4f}")
    place(buf, 115, 122, f"{bs / base_mva:.4f}")
    place(buf, 124, 127, "0")
    return "".join(buf)


def branch_card(row):
    fbus, tbus, r, x, b = row[:5]
    ratio, angle = row[8], row[9]
    buf = [" "] * 126
    place(buf, 1, 4, str(int(fbus)))
    place(buf, 6, 9, str(int(tbus)))
    place(buf, 11, 12, "1")
    place(buf, 13, 14, "1")
    place(buf, 17, 17, "1")
    place(buf, 19, 19, "1" if ratio == 0 else "2")
    place(buf, 20, 29, f"{r:.5f}".rstrip("0").rstrip(".") or "0")
    place(buf, 30, 40, f"{x:.5f}".rstrip("0").rstrip(".") or "0")
    place(buf, 41, 50, f"{b:.5f}".rstrip("0").rstrip(".") or "0")
    for first, last in ((51, 55), (57, 61), (63, 67)):
        place(buf, first, last, "0")
    place(buf, 69, 72, "0")
    place(buf, 74, 74, "0")
    place(buf, 77, 82, f"{ratio:.4f}" if ratio else "0.0")
    place(buf, 84, 90, f"{angle:.2f}" if angle else "0.0")
    return "".join(buf).rstrip()


def convert(mfile, out):
    text = open(mfile).read()
    base_mva = float(re.search(r"mpc\.baseMVA\s*=\s*([\d.]+)", text).group(1))
    title = re.search(r"%\s+(\d\d/\d\d/\d\d UW ARCHIVE.*)", text).group(1)
    bus = read_matrix(text, "bus")
    gen = read_matrix(text, "gen")
    branch = read_matrix(text, "branch")
    pg = {}
    qg = {}
    for g in gen:
        if g[7] > 0:
            pg[int(g[0])] = pg.get(int(g[0]), 0.0) + g[1]
            qg[int(g[0])] = qg.get(int(g[0]), 0.0) + g[2]
    lines = [" " + title.strip()]
    lines.append(f"BUS DATA FOLLOWS                            {len(bus)} ITEMS")
    for row in bus:
        n = int(row[0])
        lines.append(bus_card(row, pg.get(n, 0.0), qg.get(n, 0.0), base_mva))
    lines.append("-999")
    lines.append(f"BRANCH DATA FOLLOWS                         {len(branch)} ITEMS")
    for row in branch:
        if row[10] > 0:
            lines.append(branch_card(row))
    lines.append("-999")
    lines += ["LOSS ZONES FOLLOWS                     1 ITEMS", "  1 IEEE", "-99",
              "INTERCHANGE DATA FOLLOWS                 1 ITEMS", "-9",
              "TIE LINES FOLLOWS                     0 ITEMS", "-999",
              "END OF DATA"]
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    convert(sys.argv[1], sys.argv[2])
