"""Free cylinder with the default structure (f_n = 0.185 Hz): lock-in
diagnostics and the displacement POD-RBF compression check.

    python3 scripts/lock_in.py --steps 3000 --out viv.csv
"""

import argparse
import json
import time

import numpy as np

from vivrom import caseio, pod, postproc, rom
from vivrom.mesh import ogrid_mesh
from vivrom.pimple import FlowCase, PimpleControls, run
from vivrom.structure import Oscillator


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--dt", type=float, default=0.02)
    ap.add_argument("--zeta", type=float, default=0.4)
    ap.add_argument("--added-mass", type=float, default=1.0)
    ap.add_argument("--out", default="viv.csv")
    args = ap.parse_args()

    mesh = ogrid_mesh()
    case = FlowCase(mesh, oscillator=Oscillator(0.1, 0.135114884, args.zeta),
                    added_mass_coeff=args.added_mass, perturbation=0.5)
    t0 = time.time()
    res = run(case, PimpleControls(dt=args.dt), n_steps=args.steps)
    h = res.history.arrays()
    caseio.write_csv(args.out, ["t", "CL", "CD", "y"], zip(h["t"], h["CL"], h["CD"], h["y"]))
    report = postproc.lock_in_report(h["CL"], h["CD"], h["y"], args.dt)
    print(f"{args.steps} steps in {time.time() - t0:.0f} s")
    print(json.dumps(report, indent=2))

    train, held = res.snapshots[0::2], res.snapshots[1::2]
    D = np.column_stack([pod.stack_vector(s.displacement) for s in train])
    print(f"displacement RIC(1) = {pod.ric(pod.compute_modes(D).eigenvalues, 1):.12f}")
    sur = rom.train_displacement_surrogate([s.displacement for s in train],
                                           [s.y for s in train])
    held = [s for s in held if sur.theta_min <= s.y <= sur.theta_max]
    fom = np.column_stack([pod.stack_vector(s.displacement) for s in held])
    red = np.column_stack([pod.stack_vector(sur.displacement(s.y)) for s in held])
    print(f"held-out POD-RBF Frobenius error = {postproc.frobenius_error(fom, red):.2e} %")


if __name__ == "__main__":
    main()
