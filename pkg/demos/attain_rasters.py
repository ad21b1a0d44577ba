"""
Compute the attainable sets of the hyperbolic bifoliation from p = (1, 1) and
write them as PGM images (white = attained, gray level = first step reached).

Usage: python3 demos/attain_rasters.py [outdir] [resolution]
"""

import sys

import numpy as np

from marcusflow import attain, io


def main(out="demo_out/attain", res="300"):
    pair = attain.foliation("hyperbolic", res=int(res), half=3.0)
    am = attain.attainable_sets((1.0, 1.0), pair, 4)
    k, _ = attain.attainability_index((1.0, 1.0), pair, 4, am=am)
    for j, (m, c) in enumerate(zip(am.masks, am.coverage), 1):
        io.write_pgm(f"{out}/A{j}.pgm", np.where(m, 255, 0))
        print(f"A^{j}: coverage {c:.4f}")
    io.write_pgm(f"{out}/first_reached.pgm", io.attain_raster(am.first_reached()))
    print(f"attainability index: {k}")
    print(f"wrote PGM rasters under {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
