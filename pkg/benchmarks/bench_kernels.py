"""Numba against numpy for the hot kernels, plus one end-to-end cell run per backend.

    python benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both variants in-process.  The end-to-end rows run a
short layered scenario in a subprocess with FRACHOM_DISABLE_NUMBA set, so
the module-level backend switch is exercised exactly as users would see it.
"""

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path
from timeit import repeat

import numpy as np

from frachom import _kernels as K
from frachom.meshkit import parse_msh

ROOT = Path(__file__).resolve().parents[1]


def best(fn, number, rep):
    return min(repeat(fn, number=number, repeat=rep)) / number


def kernel_rows(rep):
    mesh = parse_msh(ROOT / "meshes" / "morph2_fine.msh")
    xy, tris = mesh.nodes, mesh.triangles
    q = np.ones(len(tris))
    u = np.sin(xy[:, 0]) * np.cos(xy[:, 1])
    rng = np.random.default_rng(0)
    hist = rng.standard_normal((2001, mesh.n_nodes))
    w = rng.standard_normal(2001)
    cases = {
        "local_stiffness": (lambda f: f(xy, tris, q, q), 20),
        "triangle_gradients": (lambda f: f(xy, tris, u), 50),
        "history_sum n=2000": (lambda f: f(w, hist, 2000), 5),
    }
    rows = []
    for name, (call, number) in cases.items():
        np_fn = getattr(K, name.split()[0] + "_numpy")
        nb_fn = getattr(K, name.split()[0] + "_numba")
        ref = call(np_fn)
        if nb_fn is None:
            rows.append((name, best(lambda: call(np_fn), number, rep), float("nan"), float("nan")))
            continue
        got = call(nb_fn)  # also triggers compilation
        err = float(np.max(np.abs(np.asarray(got) - np.asarray(ref))))
        rows.append((name, best(lambda: call(np_fn), number, rep), best(lambda: call(nb_fn), number, rep), err))
    return rows


def end_to_end(disable):
    env = dict(os.environ, FRACHOM_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, "-m", "frachom", "layered", "--config", str(ROOT / "configs" / "table2.yaml"),
           "--gamma1", "0.5", "--gamma2", "0.5", "--out", str(ROOT / "benchmarks" / "out")]
    t0 = time.perf_counter()
    subprocess.run(cmd, env=env, check=True, stdout=subprocess.DEVNULL)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, t_np, t_nb, err in kernel_rows(args.repeat):
        print(f"{name:<22}{t_np:12.3e}{t_nb:12.3e}{t_np / t_nb:10.1f}{err:12.1e}")
    for disable in (True, False):
        label = "numpy" if disable else "numba"
        print(f"end-to-end layered ({label}): {end_to_end(disable):.2f} s")


if __name__ == "__main__":
    main()
