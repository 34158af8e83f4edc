"""Fixed cylinder at Re = 200 on the desk mesh: lift/drag history and
Strouhal number from the lift spectrum.

    python3 scripts/strouhal.py --steps 3000 --out strouhal.csv
"""

import argparse
import time

import numpy as np

from vivrom import caseio, postproc
from vivrom.mesh import ogrid_mesh
from vivrom.pimple import FlowCase, PimpleControls, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--dt", type=float, default=0.02)
    ap.add_argument("--refinement", type=int, default=1)
    ap.add_argument("--out", default="strouhal.csv")
    args = ap.parse_args()

    mesh = ogrid_mesh(refinement=args.refinement)
    t0 = time.time()
    res = run(FlowCase(mesh, perturbation=0.5), PimpleControls(dt=args.dt), n_steps=args.steps)
    h = res.history.arrays()
    caseio.write_csv(args.out, ["t", "CL", "CD"], zip(h["t"], h["CL"], h["CD"]))
    st = postproc.strouhal(h["CL"], args.dt)
    window = postproc.last_window(h["CD"])
    amp = 0.5 * np.ptp(postproc.last_window(h["CL"]))
    print(f"{mesh.n_cells} cells, {args.steps} steps in {time.time() - t0:.0f} s")
    print(f"St = {st:.4f}  mean CD = {window.mean():.3f}  CL amplitude = {amp:.3f}")


if __name__ == "__main__":
    main()
