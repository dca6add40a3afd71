"""Command-line runner: simulations, diagnostic curves, benchmarks.

``run`` executes a scene JSON and writes an OBJ frame sequence, a per-step
diagnostics CSV, and a summary JSON. ``curves`` samples the barrier and
mollifier diagnostics to CSV for external plotting. ``bench-projection``
times the analytic Hessian construction+projection against a numeric
eigendecomposition baseline; ``bench-kernels`` compares the compiled and
pure NumPy kernel backends.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import kernels, scenes
from .barrier import (
    BarrierParams,
    FORM_LOG,
    barrier_value,
    filtered_lambda1,
    gn_scalar_comparison,
    lambda1,
    norm_diagnostics,
    reference_barrier_d,
)
from .mollifier import mollified_eigensystem
from .proximity import stencil_distance
from .solver import advance_time_step


def _write_frame(path, state):
    scene = state.scene
    used = np.unique(scene.surf_tris) if scene.surf_tris.size else np.zeros(0, dtype=np.int64)
    remap = {int(g): i + 1 for i, g in enumerate(used)}
    with open(path, "w") as fh:
        for g in used:
            p = state.x[g]
            fh.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for tri in scene.surf_tris:
            fh.write(f"f {remap[int(tri[0])]} {remap[int(tri[1])]} {remap[int(tri[2])]}\n")


def _intersection_free(state):
    for st in state.detect(state.x):
        if stencil_distance(st, state.x).d2 <= 0.0:
            return False
    return True


def cmd_run(args):
    overrides = {
        "dt": args.dt,
        "steps": args.steps,
        "solver.mode": args.mode,
        "solver.eps_d": args.eps_d,
    }
    state, steps, outputs = scenes.load_scene(args.scene, overrides)
    out_dir = args.out or outputs.get("dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    obj_every = int(outputs.get("obj_every", 1))
    csv_name = outputs.get("csv", "diagnostics.csv")

    _write_frame(os.path.join(out_dir, "frame_0000.obj"), state)
    rows = []
    ok = True
    for step in range(steps):
        stats = advance_time_step(state)
        rows.append(stats)
        if obj_every and (step + 1) % obj_every == 0:
            _write_frame(os.path.join(out_dir, f"frame_{step + 1:04d}.obj"), state)
        if not _intersection_free(state):
            ok = False
            print(f"intersection detected after step {step + 1}", file=sys.stderr)
            break

    with open(os.path.join(out_dir, csv_name), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "newton_iters", "pcg_iters_total", "min_distance_rel", "energy", "alpha_min", "wall_ms"]
        )
        for s in rows:
            writer.writerow(
                [
                    s.step,
                    s.newton_iters,
                    s.pcg_iters,
                    f"{s.min_distance / state.l:.12g}",
                    f"{s.energy:.12g}",
                    f"{s.alpha_min:.12g}",
                    f"{s.wall_ms:.3f}",
                ]
            )

    summary = {
        "steps": len(rows),
        "total_newton_iters": int(sum(s.newton_iters for s in rows)),
        "total_pcg_iters": int(sum(s.pcg_iters for s in rows)),
        "intersection_free": ok,
        "warnings": [s.warning for s in rows if s.warning],
        "kernel_backend": kernels.BACKEND,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return 0 if ok else 1


def cmd_curves(args):
    params = BarrierParams(d_hat=args.d_hat, kappa=args.kappa)
    rows = []
    if args.which == "barrier":
        header = ["d", "ipc_log", "gipc_log", "gipc_qlog"]
        d = np.linspace(args.d_hat * 1e-3, args.d_hat * 0.999, args.samples)
        g = (d / args.d_hat) ** 2
        b_ipc, _, _ = reference_barrier_d(d, params)
        log_params = BarrierParams(d_hat=args.d_hat, kappa=args.kappa, form=FORM_LOG)
        for i in range(len(d)):
            rows.append([d[i], b_ipc[i], float(barrier_value(g[i], log_params)), float(barrier_value(g[i], params))])
    elif args.which == "norms":
        header = ["g", "grad_norm", "hess_norm", "ratio", "hess_norm_filtered", "ratio_filtered"]
        g = np.logspace(-8, np.log10(0.999), args.samples)
        gn, hn, ratio = norm_diagnostics(g, params)
        hf = filtered_lambda1(g, params)
        for i in range(len(g)):
            rows.append([g[i], gn[i], hn[i], ratio[i], hf[i], gn[i] / hf[i]])
    elif args.which == "gn-compare":
        header = ["d", "ours", "ipc_gn"]
        d = np.linspace(args.d_hat * 1e-3, args.d_hat * 0.999, args.samples)
        ours, ipc = gn_scalar_comparison(d, params)
        for i in range(len(d)):
            rows.append([d[i], ours[i], ipc[i]])
    elif args.which == "mollifier-eigs":
        header = ["gamma", "g", "lam_gamma1", "lam_gamma23", "lam_g1", "lam_g23", "lam_7p", "lam_8p"]
        eps_x = args.eps_x
        for c in np.linspace(eps_x * 1e-3, eps_x * 0.999, args.samples):
            for g in np.linspace(0.02, 0.98, args.samples):
                sys_ = mollified_eigensystem(g, c, params, eps_x)
                rows.append(
                    [c, g, sys_.lambda_gamma[0], sys_.lambda_gamma[1], sys_.lambda_g[0], sys_.lambda_g[1], sys_.lambda7p, sys_.lambda8p]
                )
    else:
        raise SystemExit(f"unknown curve {args.which}")

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" for v in row])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _random_stencil_batch(dim, count, rng, params):
    """Stacked f-gradients and gap values for synthetic stencils."""
    from .gap import build_diagonal_jacobian
    from .proximity import ContactStencil, StencilKind

    s = dim // 3
    kind = {4: StencilKind.POINT_TRIANGLE, 3: StencilKind.POINT_EDGE, 2: StencilKind.POINT_POINT}[s]
    grads = np.empty((count, dim))
    gs = np.empty(count)
    made = 0
    while made < count:
        pos = rng.normal(size=(s, 3))
        if kind is StencilKind.POINT_TRIANGLE:
            tri = pos[1:]
            n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            if np.linalg.norm(n) < 1e-3:
                continue
            n /= np.linalg.norm(n)
            center = tri.mean(axis=0)
            d = rng.uniform(0.15, 0.95) * params.d_hat
            pos[0] = center + d * n
        else:
            offset = pos[0] - pos[1:].mean(axis=0)
            offset /= np.linalg.norm(offset)
            d = rng.uniform(0.15, 0.95) * params.d_hat
            if kind is StencilKind.POINT_EDGE:
                e = pos[2] - pos[1]
                perp = offset - np.dot(offset, e) / np.dot(e, e) * e
                if np.linalg.norm(perp) < 1e-6:
                    continue
                perp /= np.linalg.norm(perp)
                mid = 0.5 * (pos[1] + pos[2])
                pos[0] = mid + d * perp
            else:
                pos[0] = pos[1] + d * offset
        stencil = ContactStencil(kind=kind, verts=tuple(range(s)))
        try:
            jac = build_diagonal_jacobian(stencil, pos, params.d_hat)
        except Exception:
            continue
        grads[made] = jac.grad_f.reshape(-1)
        gs[made] = jac.f * jac.f
        made += 1
    return grads, gs


def cmd_bench_projection(args):
    if args.count < 1:
        raise SystemExit("count must be >= 1")
    if args.dim not in (6, 9, 12):
        raise SystemExit("dim must be 6, 9 or 12")
    rng = np.random.default_rng(args.seed)
    params = BarrierParams(d_hat=1.0, kappa=1.0)
    grads, gs = _random_stencil_batch(args.dim, args.count, rng, params)

    t0 = time.perf_counter()
    lam = np.asarray(lambda1(gs, params))
    analytic = lam[:, None, None] * np.einsum("ni,nj->nij", grads, grads)
    t_analytic = time.perf_counter() - t0

    t0 = time.perf_counter()
    raw = lam[:, None, None] * np.einsum("ni,nj->nij", grads, grads)
    w, q = np.linalg.eigh(raw)
    numeric = np.einsum("nik,nk,njk->nij", q, np.maximum(w, 0.0), q)
    t_numeric = time.perf_counter() - t0

    err = float(np.max(np.linalg.norm(analytic - numeric, axis=(1, 2))))
    speedup = t_numeric / t_analytic
    row = {
        "count": args.count,
        "dim": args.dim,
        "analytic_ms": t_analytic * 1e3,
        "numeric_ms": t_numeric * 1e3,
        "speedup": speedup,
        "max_frobenius_gap": err,
    }
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)
    print(json.dumps(row))
    return 0


def cmd_bench_kernels(args):
    rng = np.random.default_rng(args.seed)
    n = args.count
    p, a, b, c = (rng.normal(size=(n, 3)) for _ in range(4))
    nb = max(n // 10, 1)
    hess = rng.normal(size=(nb, 12, 12))
    hess = hess + hess.transpose(0, 2, 1)
    vids = rng.integers(0, 100, size=(nb, 4)).astype(np.int64)
    x = rng.normal(size=300)

    results = []
    for name in ("core", "numpy"):
        try:
            backend = kernels.get_backend(name)
        except ImportError:
            continue
        t0 = time.perf_counter()
        backend.pt_classify_batch(p, a, b, c)
        t_pt = time.perf_counter() - t0
        t0 = time.perf_counter()
        backend.ee_classify_batch(p, a, b, c)
        t_ee = time.perf_counter() - t0
        out = np.zeros_like(x)
        t0 = time.perf_counter()
        backend.matvec_blocks(hess, vids, x, out)
        t_mv = time.perf_counter() - t0
        results.append(
            {"backend": name, "pt_ms": t_pt * 1e3, "ee_ms": t_ee * 1e3, "matvec_ms": t_mv * 1e3}
        )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["backend", "pt_ms", "ee_ms", "matvec_ms"])
            writer.writeheader()
            writer.writerows(results)
    print(json.dumps(results))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="tetipc")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scene JSON")
    p_run.add_argument("scene")
    p_run.add_argument("--dt", type=float)
    p_run.add_argument("--steps", type=int)
    p_run.add_argument("--mode", choices=["gipc", "reference-ipc"])
    p_run.add_argument("--eps-d", type=float, dest="eps_d")
    p_run.add_argument("--out")
    p_run.set_defaults(func=cmd_run)

    p_curves = sub.add_parser("curves", help="sample diagnostic curves to CSV")
    p_curves.add_argument("which", choices=["barrier", "norms", "gn-compare", "mollifier-eigs"])
    p_curves.add_argument("--out", required=True)
    p_curves.add_argument("--d-hat", type=float, default=1.0, dest="d_hat")
    p_curves.add_argument("--kappa", type=float, default=1.0)
    p_curves.add_argument("--eps-x", type=float, default=1.0, dest="eps_x")
    p_curves.add_argument("--samples", type=int, default=200)
    p_curves.set_defaults(func=cmd_curves)

    p_bench = sub.add_parser("bench-projection", help="analytic vs numeric Hessian projection")
    p_bench.add_argument("--count", type=int, default=100000)
    p_bench.add_argument("--dim", type=int, default=12)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out")
    p_bench.set_defaults(func=cmd_bench_projection)

    p_kern = sub.add_parser("bench-kernels", help="compare kernel backends")
    p_kern.add_argument("--count", type=int, default=200000)
    p_kern.add_argument("--seed", type=int, default=0)
    p_kern.add_argument("--out")
    p_kern.set_defaults(func=cmd_bench_kernels)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
