"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a single pass/fail line; the lines are repeated in the
terminal summary so they appear in a plain ``pytest -v`` run.
"""

import math
import subprocess
import sys

import numpy as np

from conftest import inward_rays, random_sym, record_criterion
from trtlab.fields import ClosedFormField, VoxelField, VoxelGrid
from trtlab.frames import build_spanning_set, recover_tensor_from_quadratic_values, theta_of_xi
from trtlab.geodesic import (geodesic_flow, parallel_transport,
                             shoot_geodesic, shoot_geodesics, transport_many)
from trtlab.lab.assembly import assemble_forward
from trtlab.lab.experiments import (dim2_kernel_probe, injectivity_probe, near_null_count,
                                    support_experiment, synthetic_inversion)
from trtlab.lab.family import ChartBox, RayFamily
from trtlab.lab.solvers import smallest_singular_value
from trtlab.metric import ConformalMetric, Domain, EuclideanMetric
from trtlab.tensors import n_components
from trtlab.transform import (BoundaryTensorField, adjoint_duality, pairing_consistency,
                              project_transverse, trt_scalar)


def metrics(domain):
    return [("euclidean", EuclideanMetric(domain)), ("conformal", ConformalMetric(domain, 0.1))]


def transverse(field, x, theta, rng):
    """Random vectors g-orthogonal to ``theta`` at ``x``."""
    g = field.g(x)
    eta = rng.standard_normal(theta.shape)
    gth = np.einsum("bij,bj->bi", g, theta)
    return eta - (np.sum(eta * gth, 1) / np.sum(theta * gth, 1))[:, None] * theta


def test_transport_isometry():
    dom = Domain(3, 1.0, 1.5)
    rng = np.random.default_rng(101)
    norm_drift = orth_drift = 0.0
    for _, field in metrics(dom):
        x, th = inward_rays(rng, 100, spread=1.2)
        paths = shoot_geodesics(field, dom, x, th, 1e-3)
        eta0 = transverse(field, x, th, rng)
        etas = transport_many(field, paths, eta0)
        for p, e in zip(paths, etas):
            e = e[:len(p)]
            G = field.g(p.z)
            nn = np.einsum("kij,ki,kj->k", G, e, e)
            norm_drift = max(norm_drift, float(np.max(np.abs(nn - nn[0]))))
            orth_drift = max(orth_drift, float(np.max(np.abs(np.einsum("kij,ki,kj->k", G, e, p.v)))))
    ok = norm_drift <= 1e-7 and orth_drift <= 1e-7
    record_criterion(1, "transport isometry (200 triples, h=1e-3)", ok,
                     f"norm drift {norm_drift:.2e}, orthogonality drift {orth_drift:.2e} <= 1e-7")
    assert ok


def test_integrator_order():
    dom = Domain(3, 1.0, 1.5)
    field = ConformalMetric(dom, 0.1)
    rng = np.random.default_rng(102)
    z0 = rng.uniform(-0.5, 0.5, (20, 3))
    v0 = rng.standard_normal((20, 3))
    v0 /= np.sqrt(np.einsum("bij,bi,bj->b", field.g(z0), v0, v0))[:, None]
    h = 0.1
    ref = geodesic_flow(field, z0, v0, h / 8, 80)[0]
    e1 = np.linalg.norm(geodesic_flow(field, z0, v0, h, 10)[0] - ref, axis=1)
    e2 = np.linalg.norm(geodesic_flow(field, z0, v0, h / 2, 20)[0] - ref, axis=1)
    ratio = e1 / e2
    ok = bool(np.all((ratio >= 12) & (ratio <= 20)))
    record_criterion(2, "RK4 endpoint-error ratio (20 conformal geodesics)", ok,
                     f"ratios in [{ratio.min():.2f}, {ratio.max():.2f}], required [12, 20]")
    assert ok


def test_theta_identities():
    rng = np.random.default_rng(103)
    worst_dot = worst_last = 0.0
    exact = True
    for n in (3, 4, 5):
        base = np.eye(n)[n - 2]
        d = rng.standard_normal((1000, n))
        d *= (rng.uniform(0, 0.1, 1000) / np.linalg.norm(d, axis=1))[:, None]
        xi = base + d
        th = theta_of_xi(xi)
        worst_dot = max(worst_dot, float(np.max(np.abs(np.sum(th * xi, axis=1)))))
        worst_last = max(worst_last, float(np.max(np.abs(th[:, -1] - 1))))
        exact &= bool(np.array_equal(theta_of_xi(base), np.eye(n)[n - 1]))
    ok = worst_dot <= 1e-14 and worst_last <= 1e-14 and exact
    record_criterion(3, "theta(xi) identities (1e3 covectors, n=3,4,5)", ok,
                     f"max |theta.xi| {worst_dot:.1e}, max |theta_n - 1| {worst_last:.1e}, "
                     f"theta(e_(n-1)) = e_n exactly: {exact}")
    assert ok


def test_spanning_sets():
    rng = np.random.default_rng(104)
    parts = []
    ok = True
    for n in (3, 4, 5):
        sp = build_spanning_set(n)
        N = n_components(n)
        orth = float(np.max(np.abs(np.sum(sp.eta * sp.witnesses, axis=1))))
        base = sp.members[:n]
        for m in sp.members:
            if m.case == "3":
                w = base[m.p].witness + m.eps * base[m.q].witness
                c = m.a_p * base[m.p].eta + m.a_q * base[m.q].eta
                orth = max(orth, abs(float(w @ c)) / np.linalg.norm(w) / np.linalg.norm(c))
        err = 0.0
        for _ in range(100):
            F = random_sym(rng, n)
            vals = np.einsum("ki,ij,kj->k", sp.eta, F, sp.eta)
            err = max(err, float(np.max(np.abs(recover_tensor_from_quadratic_values(sp, vals) - F))))
        lam = float(sp.gram_eigenvalues[0])
        ok &= len(sp) == N and sp.rank == N and lam > 0 and orth <= 1e-10 and err < 1e-9
        parts.append(f"n={n}: {len(sp)} members, rank {sp.rank}, min eig {lam:.2e}, "
                     f"orth {orth:.1e}, recovery {err:.1e}")
    record_criterion(4, "spanning sets", ok, "; ".join(parts))
    assert ok


def test_projector_laws():
    dom = Domain(3, 1.0, 1.5)
    rng = np.random.default_rng(105)
    sym = idem = ann = 0.0
    for _, field in metrics(dom):
        x = rng.uniform(-0.55, 0.55, (500, 3))
        v = rng.standard_normal((500, 3))
        F = np.array([random_sym(rng, 3) for _ in range(500)])
        P = project_transverse(field, x, v, F)
        sym = max(sym, float(np.max(np.abs(P - np.swapaxes(P, 1, 2)))))
        idem = max(idem, float(np.max(np.abs(project_transverse(field, x, v, P) - P))))
        ann = max(ann, float(np.max(np.abs(np.einsum("bij,bj->bi", P, v)))))
    ok = max(sym, idem, ann) <= 1e-12
    record_criterion(5, "projector laws (1e3 inputs)", ok,
                     f"symmetry {sym:.1e}, idempotence {idem:.1e}, annihilation {ann:.1e} <= 1e-12")
    assert ok


def test_pairing_identity():
    dom = Domain(3, 1.0, 1.5)
    rng = np.random.default_rng(106)
    parts = []
    ok = True
    for name, field in metrics(dom):
        M0, M1 = random_sym(rng, 3), random_sym(rng, 3)

        def func(x, M0=M0, M1=M1):
            amp = np.clip(1 - np.sum(x ** 2, -1), 0, None) ** 4
            return amp[..., None, None] * (M0 + np.cos(2 * x[..., 1])[..., None, None] * M1)

        f = ClosedFormField(dom, func)
        x, th = inward_rays(rng, 100, spread=1.0)
        eta0 = transverse(field, x, th, rng)
        lhs, rhs = pairing_consistency(f, field, x, th, eta0, 1e-3)
        err = float(np.max(np.abs(lhs - rhs) / (1 + np.abs(rhs))))
        ok &= err < 1e-6
        parts.append(f"{name} {err:.1e}")
    record_criterion(6, "pairing identity (100 cases per metric)", ok,
                     ", ".join(parts) + " < 1e-6")
    assert ok


def test_chord_oracle():
    dom = Domain(3, 1.0, 1.5)
    field = EuclideanMetric(dom)
    rng = np.random.default_rng(107)
    ident = ClosedFormField.constant(dom, np.eye(3))
    worst = 0.0
    for _ in range(50):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        off = rng.standard_normal(3)
        off -= (off @ u) * u
        off *= rng.uniform(0, 0.95) / np.linalg.norm(off)
        x = off - math.sqrt(dom.rho_ext ** 2 - off @ off) * u
        path = shoot_geodesic(field, dom, x, u, 0.01)
        eta = np.cross(u, rng.standard_normal(3))
        eta /= np.linalg.norm(eta)
        val = trt_scalar(ident, path, parallel_transport(field, path, eta))
        worst = max(worst, abs(val - 2 * math.sqrt(1 - off @ off)))
    big = Domain(3, 1.7, 2.0)
    bf = EuclideanMetric(big)
    diam = shoot_geodesic(bf, big, [0, 0, -2.0], [0, 0, 1.0], 0.01)
    dval = trt_scalar(ClosedFormField.constant(big, np.eye(3)), diam,
                      parallel_transport(bf, diam, [1.0, 0, 0]))
    ok = worst < 1e-8 and abs(dval - 2 * big.rho) < 1e-8
    record_criterion(7, "Euclidean chord oracle (50 chords)", ok,
                     f"max error {worst:.1e}; diameter {dval:.12f} vs 2 rho = {2 * big.rho}")
    assert ok


def test_adjoint_duality():
    dom = Domain(3, 1.0, 1.25)
    M0 = np.array([[1.0, 0.3, -0.2], [0.3, 0.8, 0.1], [-0.2, 0.1, 1.2]])

    def func(x):
        amp = np.clip(1 - np.sum(x ** 2, -1), 0, None) ** 4
        return amp[..., None, None] * (M0 + 0.5 * x[..., :, None] * x[..., None, :]
                                       + np.sin(x[..., 0])[..., None, None] * np.eye(3))

    def phi_func(x, th):
        return (np.eye(3) + 0.5 * x[..., :, None] * x[..., None, :]
                + 0.3 * x[..., :, None] * th[..., None, :] + 0.2 * th[..., :, None] * th[..., None, :])

    f = ClosedFormField(dom, func)
    phi = BoundaryTensorField(phi_func)
    # level k: influx counts, voxel resolution 3k/2 and sphere rule size grow together
    levels = {2: (2, 1, 3, 6), 4: (2, 2, 6, 14), 8: (4, 4, 12, 26), 16: (8, 8, 24, 38)}
    desk = 8
    parts = []
    ok = True
    for name, field in metrics(dom):
        rels = []
        for k, (bc, dc, res, sc) in levels.items():
            rels.append(adjoint_duality(f, phi, field, (bc, dc), res, sc, 0.02)[2])
        dec = all(b < a for a, b in zip(rels, rels[1:]))
        at_desk = rels[list(levels).index(desk)]
        ok &= dec and at_desk < 1e-2
        parts.append(f"{name} " + " > ".join(f"{r:.2e}" for r in rels))
    record_criterion(8, "adjoint duality (levels 2,4,8,16; desk level 8)", ok,
                     "; ".join(parts) + "; desk < 1e-2 and strictly decreasing")
    assert ok


def test_injectivity():
    dom = Domain(3, 1.0, 1.5)
    parts = []
    ok = True
    for name, field in metrics(dom):
        grid = VoxelGrid.covering(dom, 8)
        fam = RayFamily.sample(field, ChartBox.full(3, 0.7), 8, 6)
        rep = injectivity_probe(field, grid, fam, 0.02)
        f0 = VoxelField(dom, grid, np.random.default_rng(109).standard_normal((grid.size, 6)))
        err, _ = synthetic_inversion(rep.operator, f0, lam=1e-10)
        ok &= rep.ratio > 1e-6 and err < 1e-3 and rep.deficient_voxels == 0
        parts.append(f"{name} sigma ratio {rep.ratio:.2e}, inversion error {err:.1e}")
    record_criterion(9, "injectivity at 8^3", ok, "; ".join(parts) + " (> 1e-6, < 1e-3)")
    assert ok


def test_dimension_contrast():
    d2 = Domain(2, 1.0, 1.5)
    f2 = EuclideanMetric(d2)
    g2 = VoxelGrid.covering(d2, 8)
    r2 = dim2_kernel_probe(f2, g2, RayFamily.sample(f2, ChartBox.full(2, 0.7), 8, 6), 0.02)
    d3 = Domain(3, 1.0, 1.5)
    f3 = EuclideanMetric(d3)
    A3 = assemble_forward(f3, VoxelGrid.covering(d3, 8),
                          RayFamily.sample(f3, ChartBox.full(3, 0.7), 8, 6), 0.02)
    nn3 = near_null_count(smallest_singular_value(A3))
    ok = (r2.near_null >= 1 and nn3 == 0 and r2.identity_error < 1e-8
          and r2.potential_ratio < 1e-6)
    record_criterion(10, "dimension contrast (8^2 vs 8^3, counts 8x6)", ok,
                     f"near-null n=2: {r2.near_null}, n=3: {nn3}; identity {r2.identity_error:.1e}; "
                     f"potential ratio {r2.potential_ratio:.1e}")
    assert ok


def test_support_recovery():
    dom = Domain(3, 1.0, 1.5)
    field = EuclideanMetric(dom)
    shell = ChartBox.full(3, 0.72, tilt_min=0.6)
    rep = support_experiment(field, VoxelGrid.covering(dom, 8), np.array([0.55, 0.3, 0.2]),
                             shell, (8, 6), 0.02)
    s1 = rep.max_data < 1e-10
    s2 = rep.restricted_ratio > 1e-6 and rep.reconstruction_norm < 1e-6
    s3 = abs(rep.t1 - rep.t1_exact) <= rep.path_step
    ok = s1 and s2 and s3
    record_criterion(11, "support recovery scenarios", ok,
                     f"max data {rep.max_data:.1e}; restricted ratio {rep.restricted_ratio:.2e} on "
                     f"{rep.mask_voxels} voxels, reconstruction {rep.reconstruction_norm:.1e}; "
                     f"t1 {rep.t1:.4f} vs {rep.t1_exact:.4f} (step {rep.path_step})")
    assert ok


COMMANDS = ["forward", "adjoint-test", "spanning", "inject-probe", "dim2-probe", "support-exp",
            "invert"]


def test_cli_determinism(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 5\n")
    differ = []
    for cmd in COMMANDS:
        for run in ("a", "b"):
            out = tmp_path / run / cmd
            proc = subprocess.run([sys.executable, "-m", "trtlab", cmd, "--config", str(cfg),
                                   "--out", str(out)], capture_output=True, text=True)
            assert proc.returncode == 0, proc.stdout + proc.stderr
        files = sorted(p.name for p in (tmp_path / "a" / cmd).iterdir())
        for name in files:
            if (tmp_path / "a" / cmd / name).read_bytes() != (tmp_path / "b" / cmd / name).read_bytes():
                differ.append(f"{cmd}/{name}")
    ok = not differ
    record_criterion(12, "CLI determinism (7 commands, two runs)", ok,
                     "all outputs byte-identical" if ok else "differ: " + ", ".join(differ))
    assert ok
