"""
Solve a linear Marcus SDE driven by Brownian motion with two fixed jumps and
compare it with the exact solution exp(A Z_t) x0 as dt is halved.

Usage: python3 demos/marcus_jump.py
"""

import numpy as np

from marcusflow import driver, fields, marcus

A = np.array([[-0.2, -1.0, 0.0], [1.0, -0.1, 0.3], [0.0, -0.3, -0.4]])


def main():
    X = fields.linear(A)
    x0 = np.array([1.0, 0.5, -0.2])
    Zf = driver.gen_brownian(3, 1.0, 1e-2 / 16, jumps=[(0.3, 0.8), (0.7, -0.5)])
    for m in (16, 8, 4, 2, 1):
        Z = driver.coarsen(Zf, m)
        x = marcus.solve_path(X, Z, x0).final
        exact = marcus.exact_linear_path(X, Z, x0).final
        print(f"dt = {1e-2 * m / 16:.2e}  endpoint error {np.linalg.norm(x - exact):.3e}")


if __name__ == "__main__":
    main()
