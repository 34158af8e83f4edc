"""Reading and writing case outputs: CSV histories, snapshot and POD
directories.  Binary matrices use the ``.npy`` container under a ``.bin``
name; manifests carry a format tag that is checked on read."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .pod import PodBasis

SNAPSHOT_TAG = "vivrom-snapshots 1"
POD_TAG = "vivrom-pod 1"


class ManifestError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing input {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
    return {h: data[:, i] for i, h in enumerate(header)}


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def save_matrix(path, a) -> None:
    with open(path, "wb") as fh:
        np.save(fh, np.asarray(a))


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing input {path}")
    with open(path, "rb") as fh:
        return np.load(fh)


def _write_manifest(path, tag, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {tag}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _read_manifest(path, tag) -> list[dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing manifest {path}")
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {tag}":
            raise ManifestError(f"{path}: expected format tag {tag!r}, found {first!r}")
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# snapshots


def write_snapshots(directory, snapshots, prefix: str = "") -> None:
    """Stacked ``u``, ``p``, ``phi`` and point-displacement matrices plus a
    manifest with times and shapes."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    U = np.stack([s.u for s in snapshots])
    P = np.stack([s.p for s in snapshots])
    Dp = np.stack([s.displacement for s in snapshots])
    fields = {"u": U, "p": P, "displacement": Dp}
    if all(s.phi is not None for s in snapshots):
        fields["phi"] = np.stack([s.phi for s in snapshots])
    for name, arr in fields.items():
        save_matrix(d / f"{prefix}{name}.bin", arr)
    rows = [(i, s.time, s.y, s.ydot, s.accel) for i, s in enumerate(snapshots)]
    _write_manifest(d / f"{prefix}manifest.csv", SNAPSHOT_TAG,
                    ["index", "time", "y", "ydot", "accel"], rows)
    shapes = [(name, "x".join(map(str, arr.shape))) for name, arr in fields.items()]
    _write_manifest(d / f"{prefix}shapes.csv", SNAPSHOT_TAG, ["field", "shape"], shapes)


def read_snapshots(directory, prefix: str = "") -> dict[str, np.ndarray]:
    d = Path(directory)
    rows = _read_manifest(d / f"{prefix}manifest.csv", SNAPSHOT_TAG)
    out = {k: np.array([float(r[k]) for r in rows]) for k in ("time", "y", "ydot", "accel")}
    for name in ("u", "p", "displacement", "phi"):
        f = d / f"{prefix}{name}.bin"
        if f.is_file():
            out[name] = load_matrix(f)
    if len(out["u"]) != len(rows):
        raise ManifestError(f"{d}: manifest lists {len(rows)} snapshots, data holds {len(out['u'])}")
    return out


# --------------------------------------------------------------------------
# POD bases


def write_pod(directory, bases: dict[str, PodBasis], coeffs: dict[str, np.ndarray],
              info: dict[str, dict]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, b in bases.items():
        save_matrix(d / f"modes_{name}.bin", b.modes)
        save_matrix(d / f"weights_{name}.bin", b.weights)
        if b.lifting is not None:
            save_matrix(d / f"lifting_{name}.bin", b.lifting)
        write_csv(d / f"eigs_{name}.csv", ["index", "eigenvalue"], enumerate(b.eigenvalues))
        c = coeffs[name]
        write_csv(d / f"coeffs_{name}.csv", ["snapshot"] + [f"a{i}" for i in range(c.shape[0])],
                  [[j] + list(c[:, j]) for j in range(c.shape[1])])
        meta = info.get(name, {})
        rows.append((name, b.n_modes, b.n_dof, int(b.lifting is not None),
                     meta.get("weights", "volume"), meta.get("ric", float("nan"))))
    _write_manifest(d / "pod_manifest.csv", POD_TAG,
                    ["field", "n_modes", "n_dof", "lifted", "weights", "ric"], rows)


def read_pod(directory) -> dict[str, PodBasis]:
    d = Path(directory)
    rows = _read_manifest(d / "pod_manifest.csv", POD_TAG)
    out = {}
    for r in rows:
        name = r["field"]
        modes = load_matrix(d / f"modes_{name}.bin")
        if modes.shape[1] != int(r["n_modes"]):
            raise ManifestError(f"modes_{name}.bin does not match the manifest")
        eig = read_csv(d / f"eigs_{name}.csv")["eigenvalue"]
        lift = load_matrix(d / f"lifting_{name}.bin") if int(r["lifted"]) else None
        out[name] = PodBasis(modes, eig, load_matrix(d / f"weights_{name}.bin"), lift)
    return out
