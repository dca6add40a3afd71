"""Scene configuration loading and bundled test geometry.

Scenes are single JSON files; mesh paths resolve against the JSON's
directory. The generators below write the small ASCII meshes the bundled
scenes use (unit tet, five-tet boxes, ridge prism, octahedral ball,
icosphere, funnel, floor quad).
"""

import json
import os

import numpy as np

from .barrier import BarrierParams
from .elasticity import ElasticMaterial
from .mesh import Scene, compute_lumped_masses, load_obj_surface, load_tet_mesh
from .solver import SimState, SolverConfig


# -- geometry generators -------------------------------------------------


def regular_tet(size=1.0):
    v = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
    ) * (size / 2.0)
    t = np.array([[0, 1, 2, 3]], dtype=np.int64)
    return v, t


def flat_tet(edge=0.5):
    """Regular tetrahedron with one face flat on z = 0, apex up."""
    a = edge / np.sqrt(3.0)
    h = edge * np.sqrt(2.0 / 3.0)
    v = np.array(
        [
            [a, 0.0, 0.0],
            [-a / 2.0, a * np.sqrt(3.0) / 2.0, 0.0],
            [-a / 2.0, -a * np.sqrt(3.0) / 2.0, 0.0],
            [0.0, 0.0, h],
        ]
    )
    return v, np.array([[0, 1, 2, 3]], dtype=np.int64)


def box_5tet(sx=1.0, sy=1.0, sz=1.0):
    """Axis-aligned box split into five tets, corner at the origin."""
    v = np.array(
        [
            [0, 0, 0],
            [1, 0, 0],
            [1, 1, 0],
            [0, 1, 0],
            [0, 0, 1],
            [1, 0, 1],
            [1, 1, 1],
            [0, 1, 1],
        ],
        dtype=np.float64,
    ) * np.array([sx, sy, sz])
    t = np.array(
        [
            [0, 1, 2, 5],
            [0, 2, 7, 5],
            [0, 2, 3, 7],
            [0, 5, 7, 4],
            [2, 7, 5, 6],
        ],
        dtype=np.int64,
    )
    return v, t


def ridge_prism(length=1.0, width=0.5, height=0.5):
    """Triangular prism with a sharp apex edge along y on top."""
    hw, hl = width / 2.0, length / 2.0
    v = np.array(
        [
            [-hw, -hl, 0.0],
            [hw, -hl, 0.0],
            [0.0, -hl, height],
            [-hw, hl, 0.0],
            [hw, hl, 0.0],
            [0.0, hl, height],
        ]
    )
    t = np.array([[0, 1, 2, 5], [0, 1, 5, 4], [0, 4, 5, 3]], dtype=np.int64)
    return v, t


def octa_ball(radius=0.5):
    """Octahedron with a center vertex: eight tets around the middle."""
    r = radius
    v = np.array(
        [
            [0, 0, 0],
            [r, 0, 0],
            [-r, 0, 0],
            [0, r, 0],
            [0, -r, 0],
            [0, 0, r],
            [0, 0, -r],
        ],
        dtype=np.float64,
    )
    tets = []
    for z, flip in ((5, False), (6, True)):
        for a, b in ((1, 3), (3, 2), (2, 4), (4, 1)):
            tets.append([0, b, a, z] if flip else [0, a, b, z])
    return v, np.array(tets, dtype=np.int64)


def floor_quad(half=2.0, z=0.0):
    v = np.array(
        [[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]]
    )
    f = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return v, f


def icosphere(subdiv=1, radius=0.5):
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdiv):
        mid = {}
        verts = list(v)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                mid[key] = len(verts)
                verts.append((verts[a] + verts[b]) / 2.0)
            return mid[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts)
        f = np.array(nf, dtype=np.int64)
    v = v / np.linalg.norm(v, axis=1)[:, None] * radius
    return v, f


def funnel(r_top=0.8, r_bot=0.25, height=0.8, segments=16):
    """Open conical ring (no caps), axis along z, wide end up."""
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    top = np.stack([r_top * np.cos(ang), r_top * np.sin(ang), np.full(segments, height)], axis=1)
    bot = np.stack([r_bot * np.cos(ang), r_bot * np.sin(ang), np.zeros(segments)], axis=1)
    v = np.vstack([top, bot])
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([i, segments + i, segments + j])
        faces.append([i, segments + j, j])
    return v, np.array(faces, dtype=np.int64)


def write_node_ele(base_path, verts, tets):
    with open(base_path + ".node", "w") as fh:
        fh.write(f"{len(verts)} 3 0 0\n")
        for i, p in enumerate(verts):
            fh.write(f"{i} {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
    with open(base_path + ".ele", "w") as fh:
        fh.write(f"{len(tets)} 4 0\n")
        for i, t in enumerate(tets):
            fh.write(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}\n")


def write_obj(path, verts, faces):
    with open(path, "w") as fh:
        for p in verts:
            fh.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for f in faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def generate_assets(mesh_dir):
    """Write every bundled mesh into ``mesh_dir``."""
    os.makedirs(mesh_dir, exist_ok=True)
    write_node_ele(os.path.join(mesh_dir, "tet1"), *regular_tet(0.5))
    write_node_ele(os.path.join(mesh_dir, "tetflat"), *flat_tet(0.5))
    write_node_ele(os.path.join(mesh_dir, "cube"), *box_5tet(0.5, 0.5, 0.5))
    write_node_ele(os.path.join(mesh_dir, "bar"), *box_5tet(1.2, 0.25, 0.25))
    write_node_ele(os.path.join(mesh_dir, "ridge"), *ridge_prism(1.2, 0.5, 0.4))
    write_node_ele(os.path.join(mesh_dir, "ball"), *octa_ball(0.35))
    write_obj(os.path.join(mesh_dir, "floor.obj"), *floor_quad(1.5))
    write_obj(
        os.path.join(mesh_dir, "trifloor.obj"),
        np.array([[2.5, 0.0, 0.0], [-2.5, 2.5, 0.0], [-2.5, -2.5, 0.0]]),
        np.array([[0, 1, 2]]),
    )
    write_obj(os.path.join(mesh_dir, "funnel.obj"), *funnel())
    write_obj(os.path.join(mesh_dir, "icosphere.obj"), *icosphere(1, 0.5))
    write_obj(os.path.join(mesh_dir, "tri.obj"), np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))


def bundled_scene_configs():
    """The bundled scene set: contact-kind drops, resting/stiffness/funnel."""
    base = {
        "gravity": [0.0, 0.0, -9.81],
        "dt": 0.01,
        "steps": 50,
        "barrier": {"d_hat_rel": 5e-3, "kappa": 2e8},
        "solver": {"eps_d": 1e-2, "newton_max_iters": 100},
        "friction": {"mu": 0.0},
        "outputs": {"dir": "out", "obj_every": 10},
    }

    def scene(bodies, **over):
        cfg = json.loads(json.dumps(base))
        for key, val in over.items():
            if isinstance(val, dict):
                cfg.setdefault(key, {}).update(val)
            else:
                cfg[key] = val
        cfg["bodies"] = bodies
        return cfg

    mat = {"E": 1e5, "nu": 0.4}
    apex_down = {"rotate_axis": [1.0, 0.0, 0.0], "rotate_deg": 180.0}

    scenes = {
        # apex-down tet onto a single fixed triangle
        "pt-drop": scene(
            [
                {"obj": "meshes/trifloor.obj", "fixed": True},
                {
                    "node": "meshes/tetflat.node",
                    "ele": "meshes/tetflat.ele",
                    "material": mat,
                    "translate": [0.0, 0.0, 0.215],
                    **apex_down,
                },
            ]
        ),
        # bar crossing the ridge edge at 90 degrees
        "ee-drop": scene(
            [
                {"node": "meshes/ridge.node", "ele": "meshes/ridge.ele", "fixed": True},
                {
                    "node": "meshes/bar.node",
                    "ele": "meshes/bar.ele",
                    "material": mat,
                    "translate": [-0.6, -0.125, 0.41],
                },
            ]
        ),
        # bar aligned with the ridge edge: nearly-parallel contacts
        "ee-parallel-drop": scene(
            [
                {"node": "meshes/ridge.node", "ele": "meshes/ridge.ele", "fixed": True},
                {
                    "node": "meshes/bar.node",
                    "ele": "meshes/bar.ele",
                    "material": mat,
                    "rotate_axis": [0.0, 0.0, 1.0],
                    "rotate_deg": 90.0,
                    "translate": [-0.6, -0.125, 0.41],
                },
            ]
        ),
        # apex-down tet onto the ridge edge
        "pe-drop": scene(
            [
                {"node": "meshes/ridge.node", "ele": "meshes/ridge.ele", "fixed": True},
                {
                    "node": "meshes/tetflat.node",
                    "ele": "meshes/tetflat.ele",
                    "material": mat,
                    "translate": [0.0, 0.0, 0.615],
                    **apex_down,
                },
            ]
        ),
        # apex-down tet onto the apex of a fixed tet
        "pp-drop": scene(
            [
                {"node": "meshes/tetflat.node", "ele": "meshes/tetflat.ele", "fixed": True},
                {
                    "node": "meshes/tetflat.node",
                    "ele": "meshes/tetflat.ele",
                    "material": mat,
                    "translate": [0.0, 0.0, 0.623],
                    **apex_down,
                },
            ]
        ),
        # aligned face-on-face cube drop: conforming, nonsmooth contact
        "cube-align": scene(
            [
                {"node": "meshes/cube.node", "ele": "meshes/cube.ele", "fixed": True},
                {
                    "node": "meshes/cube.node",
                    "ele": "meshes/cube.ele",
                    "material": mat,
                    "translate": [0.0, 0.0, 0.51],
                },
            ]
        ),
        # tet resting on a single triangle
        "rest": scene(
            [
                {"obj": "meshes/trifloor.obj", "fixed": True},
                {
                    "node": "meshes/tetflat.node",
                    "ele": "meshes/tetflat.ele",
                    "material": mat,
                    "translate": [0.0, 0.0, 0.019],
                },
            ],
            steps=100,
        ),
        # top box pressed into a fixed box; material E swept externally
        "boxes-stiff": scene(
            [
                {"node": "meshes/cube.node", "ele": "meshes/cube.ele", "fixed": True},
                {
                    "node": "meshes/cube.node",
                    "ele": "meshes/cube.ele",
                    "material": {"E": 1e6, "nu": 0.4},
                    "translate": [0.0, 0.0, 0.52],
                    "velocity": [0.0, 0.0, -2.0],
                },
            ],
            steps=10,
        ),
        # soft ball squeezed through a co-dimensional funnel
        "funnel-lite": scene(
            [
                {"obj": "meshes/funnel.obj", "fixed": True},
                {
                    "node": "meshes/ball.node",
                    "ele": "meshes/ball.ele",
                    "material": {"E": 2e4, "nu": 0.4},
                    "translate": [0.0, 0.0, 1.2],
                },
            ],
            steps=100,
            barrier={"d_hat_rel": 5e-3, "kappa": 5e7},
        ),
    }
    return scenes


def write_bundled_scenes(out_dir):
    """Write the bundled scene JSONs plus their mesh assets."""
    os.makedirs(out_dir, exist_ok=True)
    generate_assets(os.path.join(out_dir, "meshes"))
    for name, cfg in bundled_scene_configs().items():
        with open(os.path.join(out_dir, name + ".json"), "w") as fh:
            json.dump(cfg, fh, indent=2)
            fh.write("\n")


# -- scene config ---------------------------------------------------------


def _axis_angle_matrix(axis, deg):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    th = np.deg2rad(deg)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(th) * k + (1.0 - np.cos(th)) * (k @ k)


def load_body(entry, base_dir):
    """One body from its config entry: mesh, transform, mass, material."""
    if "node" in entry:
        mesh = load_tet_mesh(
            os.path.join(base_dir, entry["node"]), os.path.join(base_dir, entry["ele"])
        )
    elif "obj" in entry:
        mesh = load_obj_surface(
            os.path.join(base_dir, entry["obj"]),
            fixed=entry.get("fixed", True),
            area_density=entry.get("area_density", 0.0),
        )
    else:
        raise ValueError("body entry needs 'node'/'ele' or 'obj'")

    rot = None
    if "rotate_deg" in entry:
        rot = _axis_angle_matrix(entry.get("rotate_axis", [0.0, 0.0, 1.0]), entry["rotate_deg"])
    mesh = mesh.transformed(
        translate=entry.get("translate"), rotate=rot, scale=entry.get("scale")
    )
    if "fixed" in entry:
        mesh.is_fixed[:] = bool(entry["fixed"])
    if mesh.tets.size and not mesh.is_fixed.all():
        mesh.vertex_mass = compute_lumped_masses(mesh, entry.get("density", 1000.0))

    material = None
    if mesh.tets.size:
        mat = entry.get("material", {})
        material = ElasticMaterial(
            youngs_E=float(mat.get("E", 1e5)), poisson_nu=float(mat.get("nu", 0.4))
        )
    velocity = np.asarray(entry.get("velocity", [0.0, 0.0, 0.0]), dtype=np.float64)
    return mesh, material, velocity


def build_simulation(config, base_dir, overrides=None):
    """SimState plus output settings from a parsed scene config."""
    cfg = dict(config)
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            if name:
                cfg.setdefault(section, {})
                cfg[section] = dict(cfg[section])
                cfg[section][name] = value
            else:
                cfg[key] = value

    bodies, materials, velocities = [], [], []
    for entry in cfg["bodies"]:
        mesh, mat, vel = load_body(entry, base_dir)
        bodies.append(mesh)
        materials.append(mat)
        velocities.append(vel)

    scene = Scene.build(bodies, gravity=cfg.get("gravity", [0.0, 0.0, -9.81]))
    l = scene.bbox_diagonal

    bar = cfg.get("barrier", {})
    params = BarrierParams(
        d_hat=float(bar.get("d_hat_rel", 1e-3)) * l,
        kappa=float(bar.get("kappa", 1e5)),
        d_thr_ratio=float(bar.get("d_thr_ratio", 0.1)),
        use_filter=bool(bar.get("use_filter", True)),
        form=bar.get("form", "qlog"),
    )
    sol = cfg.get("solver", {})
    fri = cfg.get("friction", {})
    solver_cfg = SolverConfig(
        dt=float(cfg.get("dt", 0.01)),
        barrier=params,
        eps_d=float(sol.get("eps_d", 1e-2)),
        pcg_rel_tol=float(sol.get("pcg_rel_tol", 1e-4)),
        pcg_max_iters=int(sol.get("pcg_max_iters", 2000)),
        newton_max_iters=int(sol.get("newton_max_iters", 100)),
        friction_mu=float(fri.get("mu", 0.0)),
        friction_eps_v=float(fri.get("eps_v_rel", 1e-3)) * l,
        mode=sol.get("mode", "gipc"),
        mollify=bool(sol.get("mollify", True)),
    )
    state = SimState(scene, solver_cfg, materials)
    for i, vel in enumerate(velocities):
        lo, hi = scene.body_offsets[i], scene.body_offsets[i + 1]
        state.v[lo:hi] = vel
    outputs = dict(cfg.get("outputs", {}))
    return state, int(cfg.get("steps", 0)), outputs


def load_scene(path, overrides=None):
    with open(path) as fh:
        config = json.load(fh)
    return build_simulation(config, os.path.dirname(os.path.abspath(path)), overrides)
