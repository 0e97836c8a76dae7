"""Regenerate the shipped initial meshes in src/conicfem/data/.

Run from the repository root:  python tools/generate_builtin_data.py
"""

import json
import pathlib

from conicfem import problems as pr
from conicfem.mesh import mesh_to_dict, refine_uniform

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "conicfem" / "data"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    jobs = {
        "disk_mesh.json": (pr.disk_domain(), pr.disk_wheel_points(), 0.55),
        "ellipse_mesh.json": (pr.ellipse_domain(), pr.ellipse_wheel_points(), 0.55),
        "c2_mesh.json": (pr.c2_domain(), pr.c2_wheel_points(), 0.5),
    }
    for name, (domain, (pts, arcs), shrink) in jobs.items():
        mesh = pr.wheel_mesh(domain, pts, arcs, shrink=shrink)
        refine_uniform(mesh)  # refinability sanity check before shipping
        path = OUT / name
        with open(path, "w") as f:
            json.dump(mesh_to_dict(mesh), f, indent=1)
        print(f"wrote {path} ({mesh.n_triangles} triangles)")


if __name__ == "__main__":
    main()
