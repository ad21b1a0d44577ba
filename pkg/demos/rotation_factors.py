"""
Factor the planar rotation flow exp(A t) into eta psi and show where the
algebraic factors break down; then run the alternate decomposition across a
full turn and report its restart times.

Usage: python3 demos/rotation_factors.py [outdir]
"""

import sys

import numpy as np

from marcusflow import driver, fields, flowdec, io, lindec

A = np.array([[0.0, -1.0], [1.0, 0.0]])


def main(out="demo_out/rotation"):
    Z = driver.deterministic_time(1.4, 1e-3)
    fp = lindec.decompose_linear_algebraic(A, Z, 1)
    err = np.max(np.abs(fp.product() - fields.expm(Z.t[:, None, None] * A)))
    print(f"reassembly error on [0, 1.4]: {err:.2e}")
    io.write_factor_pair(f"{out}/factors", fp)

    bd = lindec.breakdown_time(A, driver.deterministic_time(2.0, 1e-3), 1)
    print(f"breakdown time: {bd.time:.4f} (pi/2 = {np.pi / 2:.4f})")

    Zfull = driver.deterministic_time(2 * np.pi, 1e-3)
    sampler = flowdec.FlowSampler(fields.linear(A), Zfull)
    fac = flowdec.alternate_decompose(sampler, np.array([0.3, 0.2]), margin=0.05)
    print("alternate decomposition breakpoints:", np.round(fac.times, 4).tolist())
    io.write_alternate(f"{out}/alternate", fac)
    print(f"wrote files under {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
