//! Matrix-free stencil application against the globally assembled sparse
//! oracle: every block, both discretizations, single-tet and 24-tet-cube
//! meshes at levels 2 and 3.

use mgstokes::cost::{FlopTally, Kind};
use mgstokes::fem::Space;
use mgstokes::grid::GridFunction;
use mgstokes::mesh::{build_primitive_graph, generate_single_tet, generate_unit_cube, MacroMesh};
use mgstokes::oracle::AssembledStokes;
use mgstokes::stencil::{ApplyMode, BlockId, StokesOperator, StokesVec};

fn fill_deterministic(f: &mut GridFunction<f64>, layout: &mgstokes::grid::LevelLayout, seed: f64) {
    let owned: Vec<_> = layout.owned(f.space).iter().map(|d| d.owner).collect();
    for (i, o) in owned.iter().enumerate() {
        f.write_owner(o, (seed + 0.7311 * i as f64).sin());
    }
    f.ghost_update(layout);
}

/// Velocity inputs respect the solver convention: homogeneous values at
/// constrained dofs (the lifted boundary data lives in a separate field).
fn fill_velocity(f: &mut GridFunction<f64>, layout: &mgstokes::grid::LevelLayout, seed: f64) {
    fill_deterministic(f, layout, seed);
    f.zero_dirichlet(layout);
}

fn check_mesh(mesh: &MacroMesh<f64>, kind: Kind, level: u32) {
    let graph = build_primitive_graph(mesh);
    let op = StokesOperator::assemble(mesh, &graph, kind, level).unwrap();
    let asm = AssembledStokes::assemble(mesh, &graph, kind, level);
    let layout = &op.layout;
    let vel = op.velocity_space();

    // scalar block tests: A, B_d, Bt_d, C
    let mut xv = GridFunction::<f64>::new(layout, vel);
    fill_velocity(&mut xv, layout, 0.17);
    let mut xp = GridFunction::<f64>::new(layout, Space::P1);
    fill_deterministic(&mut xp, layout, 2.41);

    let mut tally = FlopTally::default();

    // A
    let mut y = GridFunction::<f64>::new(layout, vel);
    op.apply_block(BlockId::A, &xv, &mut y, ApplyMode::Set, &mut tally);
    let mut yo = vec![0.0; asm.nu];
    asm.a.mul_vec(&xv.pack(layout), &mut yo);
    compare("A", &y.pack(layout), &yo);

    // B_d and Bt_d
    for d in 0..3 {
        let mut yp = GridFunction::<f64>::new(layout, Space::P1);
        op.apply_block(BlockId::B(d), &xv, &mut yp, ApplyMode::Set, &mut tally);
        let mut ypo = vec![0.0; asm.np];
        asm.b[d].mul_vec(&xv.pack(layout), &mut ypo);
        compare(&format!("B{d}"), &yp.pack(layout), &ypo);

        let mut yv = GridFunction::<f64>::new(layout, vel);
        op.apply_block(BlockId::Bt(d), &xp, &mut yv, ApplyMode::Set, &mut tally);
        let mut yvo = vec![0.0; asm.nu];
        asm.bt[d].mul_vec(&xp.pack(layout), &mut yvo);
        compare(&format!("Bt{d}"), &yv.pack(layout), &yvo);
    }

    // C (stabilized kind only)
    if kind == Kind::P1P1 {
        let mut yp = GridFunction::<f64>::new(layout, Space::P1);
        op.apply_block(BlockId::C, &xp, &mut yp, ApplyMode::Set, &mut tally);
        let mut ypo = vec![0.0; asm.np];
        asm.c.mul_vec(&xp.pack(layout), &mut ypo);
        compare("C", &yp.pack(layout), &ypo);
    }

    // full Stokes application
    let mut x = StokesVec::<f64>::new(layout, kind);
    for d in 0..3 {
        fill_velocity(&mut x.u[d], layout, 0.3 + d as f64);
    }
    fill_deterministic(&mut x.p, layout, 5.1);
    let mut ymf = StokesVec::<f64>::new(layout, kind);
    op.apply_stokes(&x, &mut ymf, &mut tally);
    let (up, pp) = asm.pack(&x);
    let mut yu: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; asm.nu]);
    let mut yp = vec![0.0; asm.np];
    asm.apply(&up, &pp, &mut yu, &mut yp);
    for d in 0..3 {
        compare(&format!("stokes u{d}"), &ymf.u[d].pack(layout), &yu[d]);
    }
    compare("stokes p", &ymf.p.pack(layout), &yp);

    // diagonals agree as well
    let da = op.diag_a.pack(layout);
    for (i, (a, b)) in da.iter().zip(&asm.diag_a).enumerate() {
        assert!(
            (a - b).abs() <= 1e-12 * b.abs().max(1.0),
            "diag A mismatch at {i}: {a} vs {b}"
        );
    }
    let dc = op.diag_c_pspg.pack(layout);
    for (a, b) in dc.iter().zip(&asm.diag_c_pspg) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-30));
    }
    let lm = op.lumped_mass_p1.pack(layout);
    for (a, b) in lm.iter().zip(&asm.lumped_mass) {
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }
}

fn compare(label: &str, got: &[f64], expect: &[f64]) {
    assert_eq!(got.len(), expect.len(), "{label} length");
    let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    let mut worst = 0.0f64;
    for (g, e) in got.iter().zip(expect) {
        worst = worst.max((g - e).abs());
    }
    assert!(
        worst <= 1e-12 * scale,
        "{label}: max abs diff {worst:.3e} vs scale {scale:.3e}"
    );
}

#[test]
fn single_tet_level2_p1p1() {
    check_mesh(&generate_single_tet::<f64>(), Kind::P1P1, 2);
}

#[test]
fn single_tet_level2_p2p1() {
    check_mesh(&generate_single_tet::<f64>(), Kind::P2P1, 2);
}

#[test]
fn single_tet_level3_p2p1() {
    check_mesh(&generate_single_tet::<f64>(), Kind::P2P1, 3);
}

#[test]
fn cube_level2_p1p1() {
    check_mesh(&generate_unit_cube::<f64>(), Kind::P1P1, 2);
}

#[test]
fn cube_level2_p2p1() {
    check_mesh(&generate_unit_cube::<f64>(), Kind::P2P1, 2);
}

#[test]
fn cube_level3_p1p1() {
    check_mesh(&generate_unit_cube::<f64>(), Kind::P1P1, 3);
}

#[test]
fn cube_level3_p2p1() {
    check_mesh(&generate_unit_cube::<f64>(), Kind::P2P1, 3);
}

#[test]
fn dirichlet_rows_act_as_identity() {
    let mesh = generate_unit_cube::<f64>();
    let graph = build_primitive_graph(&mesh);
    let op = StokesOperator::<f64>::assemble(&mesh, &graph, Kind::P2P1, 2).unwrap();
    let layout = &op.layout;
    let mut x = GridFunction::<f64>::new(layout, Space::P2);
    fill_deterministic(&mut x, layout, 1.23); // nonzero at constrained dofs too
    let mut y = GridFunction::<f64>::new(layout, Space::P2);
    let mut t = FlopTally::default();
    op.apply_block(BlockId::A, &x, &mut y, ApplyMode::Set, &mut t);
    for (dof, &dir) in layout.owned(Space::P2).iter().zip(layout.dirichlet(Space::P2)) {
        if dir {
            assert_eq!(y.read_owner(&dof.owner), x.read_owner(&dof.owner));
        }
    }
}

#[test]
fn stokes_operator_is_symmetric_on_free_dofs() {
    // <Ax, x'> == <x, Ax'> for vectors with homogeneous Dirichlet data
    let mesh = generate_unit_cube::<f64>();
    let graph = build_primitive_graph(&mesh);
    for kind in [Kind::P1P1, Kind::P2P1] {
        let op = StokesOperator::<f64>::assemble(&mesh, &graph, kind, 2).unwrap();
        let layout = &op.layout;
        let mut x = StokesVec::<f64>::new(layout, kind);
        let mut w = StokesVec::<f64>::new(layout, kind);
        for d in 0..3 {
            fill_deterministic(&mut x.u[d], layout, 0.9 + d as f64);
            fill_deterministic(&mut w.u[d], layout, 7.7 + d as f64);
        }
        fill_deterministic(&mut x.p, layout, 3.3);
        fill_deterministic(&mut w.p, layout, 9.2);
        x.zero_dirichlet(layout);
        w.zero_dirichlet(layout);
        let mut t = FlopTally::default();
        let mut ax = StokesVec::<f64>::new(layout, kind);
        let mut aw = StokesVec::<f64>::new(layout, kind);
        op.apply_stokes(&x, &mut ax, &mut t);
        op.apply_stokes(&w, &mut aw, &mut t);
        let dot = |a: &StokesVec<f64>, b: &StokesVec<f64>| -> f64 {
            let mut s = 0.0;
            for d in 0..3 {
                s += mgstokes::grid::dot(layout, &a.u[d], &b.u[d]);
            }
            s + mgstokes::grid::dot(layout, &a.p, &b.p)
        };
        let lhs = dot(&ax, &w);
        let rhs = dot(&x, &aw);
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        assert!(
            (lhs - rhs).abs() <= 1e-11 * scale,
            "{kind}: <Ax,w>={lhs} <x,Aw>={rhs}"
        );
    }
}
