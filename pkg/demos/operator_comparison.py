"""Compare the spectral and singular-integral fractional Laplacians on a Gaussian.

Run with ``python3 demos/operator_comparison.py``.
"""
import numpy as np

from fracsub.core import Grid, field_from_function
from fracsub.extension import conormal_trace, extend
from fracsub.fraclap import apply_singular, apply_spectral


def main():
    grid = Grid(1, 16.0, 2048)
    f = field_from_function(lambda x: np.exp(-0.5 * x * x), grid)
    inner = np.abs(grid.coords[0]) <= 8
    print("sigma  spectral-vs-singular  spectral-vs-extension")
    for sigma in (0.3, 0.5, 1.0, 1.5, 1.8):
        a = apply_spectral(f, sigma).values
        b = apply_singular(f, sigma).values
        c = conormal_trace(extend(f, sigma)).values
        scale = np.max(np.abs(a[inner]))
        e1 = np.max(np.abs(a - b)[inner]) / scale
        e2 = np.max(np.abs(a - c)[inner]) / scale
        print(f"{sigma:<6g} {e1:<21.3e} {e2:.3e}")


if __name__ == "__main__":
    main()
