import numpy as np
import pytest

from agfem2d.assembly import (AssemblyContext, BoundaryCondition, Problem,
                              apply_constraints_expand, assemble_jacobian,
                              assemble_residual, estimate_condition_number,
                              min_abs_phi_trial)
from agfem2d.levelset import Circle, HalfPlane
from agfem2d.pipeline import build_discretization
from agfem2d.plasticity import MaterialParams
from agfem2d.quadtree import CellId, refine_and_coarsen, uniform_mesh

STEEL = MaterialParams(210e9, 0.3, 240e6)
SOFT = MaterialParams(210e9, 0.3, 240e6, hardening_modulus=1e9, theta_iso=1.0)


def fitted_square(level=3):
    mesh = uniform_mesh(1.0, level, 6)
    return build_discretization(mesh, Circle((0.5, 0.5), 100.0))


def constant_traction(tx, ty):
    def value(points, load_factor):
        pts = np.asarray(points).reshape(-1, 2)
        return load_factor * np.tile([tx, ty], (pts.shape[0], 1))
    return value


def affine_value(a):
    def value(points, load_factor):
        pts = np.asarray(points).reshape(-1, 2)
        return load_factor * pts @ np.asarray(a).T
    return value


def zero_history(disc):
    return np.zeros(disc.history.n_dofs), np.zeros((disc.history.n_dofs, 4))


def test_zero_state_zero_loads_gives_zero_residual():
    disc = fitted_square()
    prob = Problem(material=STEEL, bcs=[
        BoundaryCondition("dirichlet_strong", "box_face", face="left")])
    ctx = AssemblyContext(disc, prob)
    r = assemble_residual(ctx, np.zeros(ctx.n_free), zero_history(disc), 1.0)
    np.testing.assert_array_equal(r, 0.0)


def test_affine_patch_interior_residual_vanishes():
    # affine displacement imposed strongly on all box faces: constant stress,
    # interior residual entries cancel to roundoff
    a = np.array([[1.2e-3, 0.4e-3], [-0.3e-3, 0.9e-3]])
    disc = fitted_square()
    bcs = [BoundaryCondition("dirichlet_strong", "box_face", face=f, value=affine_value(a))
           for f in ("left", "right", "bottom", "top")]
    ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=bcs))
    # free DOFs interpolate the affine field
    u = np.array([affine_value(a)(disc.space.node_coords[n][None, :], 1.0)[0][c]
                  for n, c in ctx.free_pairs])
    r = assemble_residual(ctx, u, zero_history(disc), 1.0)
    h = 1.0 / 8
    stress_scale = STEEL.youngs_modulus * np.abs(a).max()
    assert np.abs(r).max() <= 1e-10 * stress_scale * h


def test_nitsche_linear_field_matches_doubled_quadrature_reference():
    a = np.array([[2.0e-3, 0.5e-3], [0.1e-3, -1.1e-3]])
    mesh = uniform_mesh(1.0, 3, 6)
    ls = Circle((0.5, 0.5), 0.35)
    nits = BoundaryCondition("dirichlet_nitsche", "unfitted", value=affine_value(a))
    residuals = {}
    for tag, (vdeg, bpts) in {"base": (4, 3), "fine": (8, 6)}.items():
        disc = build_discretization(mesh, ls, volume_degree=vdeg, boundary_points=bpts)
        ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=[nits]))
        u = np.array([affine_value(a)(disc.space.node_coords[n][None, :], 1.0)[0][c]
                      for n, c in ctx.free_pairs])
        residuals[tag] = assemble_residual(ctx, u, zero_history(disc), 1.0)
    scale = STEEL.youngs_modulus * np.abs(a).max() / 8
    assert np.abs(residuals["base"] - residuals["fine"]).max() <= 1e-8 * scale


def test_jacobian_is_symmetric_with_nitsche_elastic():
    mesh = uniform_mesh(1.0, 3, 6)
    disc = build_discretization(mesh, Circle((0.5, 0.5), 0.42))
    bcs = [BoundaryCondition("dirichlet_strong", "box_face", face="left"),
           BoundaryCondition("dirichlet_nitsche", "unfitted", value=affine_value(np.zeros((2, 2))))]
    ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=bcs))
    rng = np.random.default_rng(1)
    u = rng.standard_normal(ctx.n_free) * 1e-6
    a = assemble_jacobian(ctx, u, zero_history(disc), 1.0).matrix
    assert np.abs((a - a.T).toarray()).max() <= 1e-10 * np.abs(a.toarray()).max()


def test_jacobian_is_symmetric_at_plastic_volume_states():
    # the consistent elastoplastic modulus is symmetric, so plastic states with
    # strong boundary conditions keep the Galerkin matrix symmetric
    ctx, u, hist = _random_state_problem(2, plastic=True)
    a = assemble_jacobian(ctx, u, hist, 1.0).matrix
    assert np.abs((a - a.T).toarray()).max() <= 1e-10 * np.abs(a.toarray()).max()


def _random_state_problem(seed, plastic=True):
    rng = np.random.default_rng(seed)
    mesh = uniform_mesh(1.0, 3, 6)
    mesh, _ = refine_and_coarsen(mesh, {CellId(3, 14): "refine"})
    disc = build_discretization(mesh, Circle((0.5, 0.5), 0.41))
    bcs = [BoundaryCondition("dirichlet_strong", "box_face", face="left"),
           BoundaryCondition("dirichlet_strong", "box_face", face="bottom",
                             components=("y",))]
    ctx = AssemblyContext(disc, Problem(material=SOFT, bcs=bcs))
    scale = 8e-3 if plastic else 1e-5
    u = rng.standard_normal(ctx.n_free) * scale
    alpha = np.abs(rng.standard_normal(disc.history.n_dofs)) * (0.01 if plastic else 0.0)
    ep = np.zeros((disc.history.n_dofs, 4))
    disc.history.apply_constraints(alpha[:, None])
    return ctx, u, (alpha, ep)


def test_jacobian_matches_directional_finite_differences():
    # 20 random states, elastic and plastic, away from yield kinks
    checked = 0
    seed = 0
    g2 = 2 * SOFT.shear_modulus
    while checked < 20:
        seed += 1
        ctx, u, hist = _random_state_problem(seed, plastic=(seed % 2 == 0))
        eps_fd = 1e-6 * max(np.linalg.norm(u), 1e-8)
        if min_abs_phi_trial(ctx, u, hist, 1.0) < 10.0 * g2 * eps_fd:
            continue
        rng = np.random.default_rng(1000 + seed)
        w = rng.standard_normal(u.size)
        w /= np.linalg.norm(w)
        jw = assemble_jacobian(ctx, u, hist, 1.0).matrix @ w
        rp = assemble_residual(ctx, u + eps_fd * w, hist, 1.0)
        rm = assemble_residual(ctx, u - eps_fd * w, hist, 1.0)
        fd = (rp - rm) / (2 * eps_fd)
        denom = np.linalg.norm(jw)
        assert np.linalg.norm(fd - jw) <= 1e-5 * denom
        checked += 1


def test_expansion_identity_without_constraints():
    disc = fitted_square(level=2)
    ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=[]))
    rng = np.random.default_rng(5)
    u = rng.standard_normal(ctx.n_free)
    full = apply_constraints_expand(ctx, u, 1.0)
    for k, (n, c) in enumerate(ctx.free_pairs):
        assert full[2 * n + c] == u[k]


def test_expansion_hanging_and_ill_nodes():
    mesh = uniform_mesh(1.0, 1, 6)
    mesh, _ = refine_and_coarsen(mesh, {CellId(1, 0): "refine"})
    disc = build_discretization(mesh, Circle((0.5, 0.5), 100.0))
    ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=[]))
    rng = np.random.default_rng(6)
    u = rng.standard_normal(ctx.n_free)
    full = apply_constraints_expand(ctx, u, 1.0)
    space = disc.space
    for slave, masters in space.constraints.items():
        for c in (0, 1):
            expect = sum(coef * full[2 * m + c] for m, coef in masters)
            assert full[2 * slave + c] == pytest.approx(expect, rel=1e-14)

    # ill-posed node under bilinear extrapolation equals direct root-basis evaluation
    disc2 = build_discretization(uniform_mesh(1.0, 1, 6), HalfPlane((1.0, 0.0), 0.75))
    ctx2 = AssemblyContext(disc2, Problem(material=STEEL, bcs=[]))
    u2 = rng.standard_normal(ctx2.n_free)
    full2 = apply_constraints_expand(ctx2, u2, 1.0)
    space2 = disc2.space
    nid = space2.node_index[(64, 0)]
    root_cell = disc2.aggregates.root_of[disc2.mesh.locate_point(0.9, 0.1)]
    vals = full2[0::2]
    direct = space2.evaluate(root_cell, vals, np.array([[1.0, 0.0]]))[0]
    assert full2[2 * nid] == pytest.approx(direct, rel=1e-12)


def test_force_balance_on_fitted_neumann_patch():
    disc = fitted_square()
    t = (3.3e6, -1.1e6)
    bcs = [BoundaryCondition("neumann", "box_face", face="right",
                             value=constant_traction(*t))]
    ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=bcs))
    r = assemble_residual(ctx, np.zeros(ctx.n_free), zero_history(disc), 1.0)
    sums = np.zeros(2)
    for k, (n, c) in enumerate(ctx.free_pairs):
        sums[c] += r[k]
    np.testing.assert_allclose(-sums, t, rtol=1e-9)


@pytest.mark.parametrize("aggregate", [True, False])
def test_small_cut_conditioning_family(aggregate):
    h = 1.0 / 8
    conds = []
    for eps_rel in [10.0 ** (-k) for k in range(1, 9)]:
        mesh = uniform_mesh(1.0, 3, 6)
        ls = HalfPlane((1.0, 0.0), 0.5 + eps_rel * h)
        disc = build_discretization(mesh, ls, aggregate=aggregate)
        bcs = [BoundaryCondition("dirichlet_strong", "box_face", face="left")]
        ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=bcs))
        a = assemble_jacobian(ctx, np.zeros(ctx.n_free), zero_history(disc), 1.0).matrix
        conds.append(estimate_condition_number(a, method="dense"))
    spread = max(conds) / min(conds)
    if aggregate:
        assert spread < 10.0
    else:
        assert spread > 1e4


def test_condition_estimate_power_iteration_agrees_with_dense():
    disc = fitted_square(level=2)
    bcs = [BoundaryCondition("dirichlet_strong", "box_face", face="left")]
    ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=bcs))
    a = assemble_jacobian(ctx, np.zeros(ctx.n_free), zero_history(disc), 1.0).matrix
    dense = estimate_condition_number(a, "dense")
    power = estimate_condition_number(a, "power")
    assert power == pytest.approx(dense, rel=0.2)


def test_matrix_market_dump(tmp_path):
    from agfem2d.assembly import dump_matrix
    import scipy.io
    disc = fitted_square(level=2)
    ctx = AssemblyContext(disc, Problem(material=STEEL, bcs=[
        BoundaryCondition("dirichlet_strong", "box_face", face="left")]))
    a = assemble_jacobian(ctx, np.zeros(ctx.n_free), zero_history(disc), 1.0).matrix
    dump_matrix(a, tmp_path / "k.mtx")
    b = scipy.io.mmread(tmp_path / "k.mtx")
    assert abs(b - a).max() == 0.0
