"""Minimal MATPOWER case reader and the RTS-GMLC CSV exporter built on it.

Only the numeric matrices (``bus``, ``gen``, ``branch``, ``gencost``) and
``baseMVA`` are read; cell arrays such as ``bus_name`` are picked up when
present.
"""

from __future__ import annotations

import csv
import os
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

# column positions in MATPOWER matrices
BUS_I, BUS_TYPE, PD = 0, 1, 2
GEN_BUS, PMAX, PMIN, GEN_STATUS = 0, 8, 9, 7
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, BR_STATUS = 0, 1, 2, 3, 4, 5, 10


class MatpowerParseError(ValueError):
    pass


@dataclass
class MatpowerCase:
    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray
    bus_names: list[str] = field(default_factory=list)


def _matrix(text: str, name: str, required: bool = True):
    m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % re.escape(name), text, re.S)
    if m is None:
        if required:
            raise MatpowerParseError(f"mpc.{name} not found")
        return None
    rows = []
    for lineno, raw in enumerate(m.group(1).splitlines()):
        line = raw.split("%", 1)[0].strip().rstrip(";").strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.replace(",", " ").split()])
        except ValueError as exc:
            raise MatpowerParseError(f"mpc.{name} row {lineno}: {exc}") from exc
    width = max((len(r) for r in rows), default=0)
    out = np.full((len(rows), width), np.nan)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


def parse_case(text: str) -> MatpowerCase:
    m = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;", text)
    if m is None:
        raise MatpowerParseError("mpc.baseMVA not found")
    names = re.search(r"mpc\.bus_name\s*=\s*\{(.*?)\};", text, re.S)
    bus_names = re.findall(r"'([^']*)'", names.group(1)) if names else []
    return MatpowerCase(float(m.group(1)), _matrix(text, "bus"), _matrix(text, "gen"),
                        _matrix(text, "branch"), _matrix(text, "gencost"), bus_names)


def read_case(path) -> MatpowerCase:
    with open(path) as fh:
        return parse_case(fh.read())


def cost_points(row: np.ndarray) -> tuple[list[float], list[float]]:
    """Piecewise-linear (model 1) cost row -> (MW points, $/h points)."""
    if int(row[0]) != 1:
        raise MatpowerParseError("only piecewise-linear gencost rows (model 1) are supported")
    n = int(row[3])
    pts = row[4:4 + 2 * n]
    return [float(v) for v in pts[0::2]], [float(v) for v in pts[1::2]]


# RTS-GMLC unit signatures (PMax MW of thermal units) -> (unit type, fuel).
# The MATPOWER rendition drops the fuel column; these are the dataset's
# thermal unit classes.
RTS_THERMAL = {
    12.0: ("STEAM", "Oil"),
    20.0: ("CT", "Oil"),
    55.0: ("CT", "NG"),
    76.0: ("STEAM", "Coal"),
    155.0: ("STEAM", "Coal"),
    350.0: ("STEAM", "Coal"),
    355.0: ("CC", "NG"),
    400.0: ("NUCLEAR", "Nuclear"),
}


# buses hosting the dataset's four wind plants
RTS_WIND_BUSES = {122, 303, 309, 317}


def rts_gmlc_unit_labels(case: MatpowerCase) -> list[tuple[str, str]]:
    """(unit type, fuel) for every generator row of the MATPOWER RTS-GMLC case.

    Zero-cost units are renewable or storage: status-off units at the wind
    buses are wind plants, in-service 50 MW units are hydro, the 50 MW unit
    flagged off is storage, the unit with a nonzero minimum is CSP and the
    rest are photovoltaic.  Units with zero capacity are synchronous condensers.
    """
    labels = []
    for k, (g, c) in enumerate(zip(case.gen, case.gencost)):
        pmax, pmin, status = g[PMAX], g[PMIN], g[GEN_STATUS]
        _, ys = cost_points(c)
        if pmax == 0:
            labels.append(("SYNC_COND", "Sync_Cond"))
        elif all(y == 0 for y in ys):
            if status == 0 and int(g[GEN_BUS]) in RTS_WIND_BUSES:
                labels.append(("WIND", "Wind"))
            elif status == 1 and pmax == 50:
                labels.append(("HYDRO", "Hydro"))
            elif status == 0 and pmax == 50:
                labels.append(("STORAGE", "Storage"))
            elif pmin > 0:
                labels.append(("CSP", "Solar"))
            else:
                labels.append(("PV", "Solar"))
        else:
            try:
                labels.append(RTS_THERMAL[float(pmax)])
            except KeyError:
                raise MatpowerParseError(f"generator row {k}: no RTS-GMLC unit class for PMax {pmax}")
    return labels


BUS_COLUMNS = ["Bus ID", "Bus Name", "BaseKV", "Bus Type", "MW Load", "MVAR Load", "Area"]
BRANCH_COLUMNS = ["UID", "From Bus", "To Bus", "R", "X", "B", "Cont Rating"]


def export_rts_gmlc_csv(case: MatpowerCase, out_dir, npoints: int = 4) -> None:
    """Write ``bus.csv``, ``branch.csv`` and ``gen.csv`` in the RTS-GMLC layout.

    Generator cost curves are written as ``Cost Point MW k`` / ``Cost Point $/h k``
    columns; every unit is listed regardless of its MATPOWER status flag.
    """
    os.makedirs(out_dir, exist_ok=True)
    types = {1: "PQ", 2: "PV", 3: "Ref", 4: "Isolated"}
    with open(os.path.join(out_dir, "bus.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BUS_COLUMNS)
        for k, b in enumerate(case.bus):
            name = case.bus_names[k] if k < len(case.bus_names) else ""
            w.writerow([int(b[BUS_I]), name, _num(b[9]), types.get(int(b[BUS_TYPE]), "PQ"),
                        _num(b[PD]), _num(b[3]), int(b[6])])
    seen = Counter()
    with open(os.path.join(out_dir, "branch.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BRANCH_COLUMNS)
        for br in case.branch:
            f, t = int(br[F_BUS]), int(br[T_BUS])
            seen[(f, t)] += 1
            uid = f"{f}-{t}" + (f"-{seen[(f, t)]}" if seen[(f, t)] > 1 else "")
            w.writerow([uid, f, t, _num(br[BR_R]), _num(br[BR_X]), _num(br[BR_B]), _num(br[RATE_A])])
    labels = rts_gmlc_unit_labels(case)
    counter = Counter()
    cols = ["GEN UID", "Bus ID", "Unit Type", "Fuel", "PMax MW", "PMin MW"]
    cols += [f"Cost Point MW {k}" for k in range(npoints)] + [f"Cost Point $/h {k}" for k in range(npoints)]
    with open(os.path.join(out_dir, "gen.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for g, c, (utype, fuel) in zip(case.gen, case.gencost, labels):
            bus = int(g[GEN_BUS])
            counter[(bus, utype)] += 1
            xs, ys = cost_points(c)
            if len(xs) != npoints:
                raise MatpowerParseError(f"expected {npoints} cost points, got {len(xs)}")
            w.writerow([f"{bus}_{utype}_{counter[(bus, utype)]}", bus, utype, fuel,
                        _num(g[PMAX]), _num(g[PMIN])] + [_num(v) for v in xs] + [_num(v) for v in ys])


def _num(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)
