"""Refinement studies: implicit-Euler order on the linear Poisson flow and
the transport-equation residual under joint (n, dt) refinement.

    python scripts/convergence_study.py
"""

import argparse

import numpy as np

from logdiff import Grid1D, Nonlinearity, RunConfig, evolve
from logdiff.backlund import transport_residual
from logdiff.operators import poisson_kernel


def linear_poisson(n, L, dts):
    g = Grid1D(n, L)
    f, exact = poisson_kernel(g, 1.0), poisson_kernel(g, 2.0).values
    # semi-discrete flow in closed form: the part of the error not due to dt
    xi = np.abs(np.fft.fftfreq(n, d=g.h)) * 2 * np.pi
    floor = np.max(np.abs(np.fft.ifft(np.fft.fft(f.values) * np.exp(-xi)).real - exact))
    errs = np.array([np.max(np.abs(evolve(RunConfig(g, f, 1.0, dt, Nonlinearity.linear())).fields[-1].values - exact))
                     for dt in dts])
    return errs, floor


def transport(levels, L, amplitude, t_end):
    out = []
    for n, dt in levels:
        g = Grid1D(n, L)
        tr = evolve(RunConfig(g, g.sample(lambda x: amplitude * np.exp(-x * x)), t_end, dt))
        out.append(transport_residual(tr)[1][-1])
    return np.array(out)


def orders(errs):
    return np.log2(errs[:-1] / errs[1:])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--skip-transport", action="store_true")
    args = ap.parse_args()

    dts = (0.04, 0.02, 0.01, 0.005)
    print("linear Poisson flow, P(., 1) -> P(., 2)")
    for n, L in ((1024, 100.0), (4096, 400.0)):
        errs, floor = linear_poisson(n, L, dts)
        print(f"  n={n} L={L:g}: floor {floor:.2e}")
        for dt, e in zip(dts, errs):
            print(f"    dt={dt:<6} sup error {e:.3e}")
        print("    orders " + ", ".join(f"{o:.3f}" for o in orders(errs)))

    if not args.skip_transport:
        levels = ((256, 0.02), (512, 0.01), (1024, 0.005), (2048, 0.0025))
        res = transport(levels, 20.0, 2.0, 0.5)
        print("transport residual at t=0.5 (L=20, amplitude 2)")
        for (n, dt), r in zip(levels, res):
            print(f"  n={n:<5} dt={dt:<7} L2 residual {r:.3e}")
        print("  orders " + ", ".join(f"{o:.3f}" for o in orders(res)))


if __name__ == "__main__":
    main()
