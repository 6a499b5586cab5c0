#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Copyright Contributors to the vcavity project.
"""Regenerate the bundled CSV fixtures under data/ from colour-science.

Usage: python3 tools/gen_fixtures.py [--ciede2000 path/to/ciede2000_test_data.txt]

Requires `colour-science` (tested with 0.4.6). The CIEDE2000 reference pairs
are taken from the Sharma, Wu & Dalal implementation-notes table as shipped
in scikit-image's source tree (skimage/color/tests/ciede2000_test_data.txt).
"""
import argparse
import pathlib

import colour
import numpy as np

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"
GRID = np.arange(400, 701, 5, dtype=float)


def write_csv(path, comments, names, wavelengths, columns):
    with open(path, "w", encoding="utf-8") as f:
        for c in comments:
            f.write(f"# {c}\n")
        f.write("wavelength_nm," + ",".join(names) + "\n")
        for k, wl in enumerate(wavelengths):
            row = [f"{wl:g}"] + [f"{float(col[k]):.6g}" for col in columns]
            f.write(",".join(row) + "\n")


def on_grid(sd, grid=GRID):
    return np.array([sd[w] for w in grid])


def colorchecker():
    cc = colour.SDS_COLOURCHECKERS["ColorChecker N Ohta"]
    names = [n.replace(",", "") for n in cc.keys()]
    cols = [on_grid(sd) for sd in cc.values()]
    write_csv(
        DATA / "colorchecker24.csv",
        [
            "ColorChecker Classic, 24 patches, spectral reflectance factors.",
            "Source: N. Ohta, 'ColorChecker N Ohta' measurement set (1997), as",
            "distributed by colour-science 0.4.6 (colour.SDS_COLOURCHECKERS).",
            "Sampled at 5 nm, 400-700 nm.",
        ],
        names, GRID, cols)


def illuminant(name, fname):
    sd = colour.SDS_ILLUMINANTS[name]
    write_csv(
        DATA / fname,
        [
            f"CIE standard illuminant {name}, relative spectral power distribution",
            "(normalised to 100 at 560 nm). Source: CIE 015:2018 tables via",
            "colour-science 0.4.6 (colour.SDS_ILLUMINANTS). 5 nm, 400-700 nm.",
        ],
        [name], GRID, [on_grid(sd)])


def cmf():
    cmfs = colour.MSDS_CMFS["CIE 1964 10 Degree Standard Observer"]
    vals = np.array([cmfs[w] for w in GRID])
    write_csv(
        DATA / "cie1964_10deg_cmf.csv",
        [
            "CIE 1964 10 degree standard observer colour matching functions.",
            "Source: CIE 015:2018 via colour-science 0.4.6 (colour.MSDS_CMFS).",
            "5 nm, 400-700 nm.",
        ],
        ["x_bar", "y_bar", "z_bar"], GRID, [vals[:, i] for i in range(3)])


def cameras():
    sigma = colour.MSDS_CAMERA_SENSITIVITIES["Sigma SDMerill (NPL)"]
    wl = list(sigma.wavelengths) + [690.0, 700.0]
    vals = np.vstack([sigma.values, sigma.values[-1], sigma.values[-1]])
    write_csv(
        DATA / "camera_sigma_sdmerrill.csv",
        [
            "Sigma SD Merrill (Foveon X3) spectral sensitivities, peak-normalised.",
            "Source: NPL camera sensitivity measurements via colour-science 0.4.6",
            "(colour.MSDS_CAMERA_SENSITIVITIES). Native 10 nm sampling 400-680 nm;",
            "690 and 700 nm repeat the 680 nm value (IR-cut tail).",
        ],
        ["R", "G", "B"], wl, [vals[:, i] for i in range(3)])

    nikon = colour.MSDS_CAMERA_SENSITIVITIES["Nikon 5100 (NPL)"]
    vals = np.array([nikon[w] for w in GRID])
    write_csv(
        DATA / "camera_nikon_d5100.csv",
        [
            "Nikon D5100 spectral sensitivities, peak-normalised.",
            "Source: NPL camera sensitivity measurements via colour-science 0.4.6",
            "(colour.MSDS_CAMERA_SENSITIVITIES). 5 nm, 400-700 nm.",
        ],
        ["R", "G", "B"], GRID, [vals[:, i] for i in range(3)])


def ciede2000(path):
    rows = []
    for line in open(path, encoding="utf-8"):
        if line.startswith("#") or not line.strip():
            continue
        f = line.split()
        # pair 1 L1 a1 b1 ... dE 2 L2 a2 b2 ...
        rows.append((f[0], f[2], f[3], f[4], f[17], f[18], f[19], f[15]))
    with open(DATA / "ciede2000_pairs.csv", "w", encoding="utf-8") as out:
        out.write("# CIEDE2000 reference test pairs. Source: G. Sharma, W. Wu,\n")
        out.write("# E. N. Dalal, 'The CIEDE2000 color-difference formula:\n")
        out.write("# implementation notes, supplementary test data, and mathematical\n")
        out.write("# observations', Color Res. Appl. 30(1), 2005, Table 1.\n")
        out.write("pair,L1,a1,b1,L2,a2,b2,dE00\n")
        for r in rows:
            out.write(",".join(r) + "\n")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--ciede2000")
    args = ap.parse_args()
    DATA.mkdir(exist_ok=True)
    colorchecker()
    illuminant("D65", "illuminant_d65.csv")
    illuminant("D50", "illuminant_d50.csv")
    cmf()
    cameras()
    if args.ciede2000:
        ciede2000(args.ciede2000)
