#!/usr/bin/env python3
"""Regenerate the bundled MATPOWER case files and golden power flow solutions.

Requires PYPOWER (``pip install pypower``). Only needed when refreshing
``data/cases`` or ``tests/data``; the build never runs it.

    python3 tools/export_reference_data.py
"""

import json
import math
import pathlib

from pypower.api import case30, case118, ppoption, runpf

ROOT = pathlib.Path(__file__).resolve().parent.parent

BUS_COLS = 13
GEN_COLS = 10
BRANCH_COLS = 11


def fmt(v):
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def write_matrix(out, name, rows, ncols):
    out.write(f"mpc.{name} = [\n")
    for row in rows:
        out.write("\t" + "\t".join(fmt(v) for v in row[:ncols]) + ";\n")
    out.write("];\n\n")


def export_case(name, ppc):
    path = ROOT / "data" / "cases" / f"{name}.m"
    with path.open("w") as out:
        out.write(f"function mpc = {name}\n")
        out.write(f"%{name.upper()}  MATPOWER case data (bus, gen, branch only).\n\n")
        out.write("mpc.version = '2';\n\n")
        out.write(f"mpc.baseMVA = {fmt(ppc['baseMVA'])};\n\n")
        out.write("%% bus data\n")
        out.write("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n")
        write_matrix(out, "bus", ppc["bus"], BUS_COLS)
        out.write("%% generator data\n")
        out.write("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n")
        write_matrix(out, "gen", ppc["gen"], GEN_COLS)
        out.write("%% branch data\n")
        out.write("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n")
        write_matrix(out, "branch", ppc["branch"], BRANCH_COLS)
    return path


def export_golden(name, ppc):
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-12, PF_MAX_IT=30, ENFORCE_Q_LIMS=0)
    res, ok = runpf(ppc, opt)
    assert ok, f"{name} did not converge"
    golden = {
        "case": name,
        "solver": "PYPOWER runpf (Newton), PF_TOL=1e-12",
        "buses": [
            {"id": int(b[0]), "Vm": float(b[7]), "Va": math.radians(float(b[8]))}
            for b in res["bus"]
        ],
    }
    path = ROOT / "tests" / "data" / f"{name}_golden.json"
    path.write_text(json.dumps(golden, indent=1) + "\n")
    return path


def main():
    for name, fn in (("case30", case30), ("case118", case118)):
        print(export_case(name, fn()))
        print(export_golden(name, fn()))


if __name__ == "__main__":
    main()
