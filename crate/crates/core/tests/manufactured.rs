//! Manufactured-solution runs on the 24-tet cube: right-hand-side assembly,
//! Dirichlet lifting, PSPG correction and the full solver chain.

use mgstokes::cost::{AHat, Kind, SolverParams, WorkLedger};
use mgstokes::mesh::generate_unit_cube;
use mgstokes::multigrid::{Hierarchy, SmootherConfig};
use mgstokes::refine::micro_coords;
use mgstokes::stencil::{residual_norms, StokesVec};

// divergence-free quadratic velocity with linear pressure:
//   u = (x^2, -2xy, 0), p = x + 2y + z - 2, f = -lap u + grad p
fn poly_u(x: [f64; 3]) -> [f64; 3] {
    [x[0] * x[0], -2.0 * x[0] * x[1], 0.0]
}

fn poly_p(x: [f64; 3]) -> f64 {
    x[0] + 2.0 * x[1] + x[2] - 2.0
}

fn poly_f(_x: [f64; 3]) -> [f64; 3] {
    [-2.0 + 1.0, 2.0, 1.0]
}

fn cfg(kind: Kind) -> SmootherConfig<f64> {
    SmootherConfig {
        params: SolverParams::new(3, 3, 1, 1, AHat::Symmetric, 2),
        omega_inv: match kind {
            Kind::P1P1 => 0.570751,
            Kind::P2P1 => 0.448872,
        },
    }
}

#[test]
fn taylor_hood_reproduces_quadratic_solution_exactly() {
    let mesh = generate_unit_cube::<f64>();
    let hier = Hierarchy::<f64>::build(&mesh, Kind::P2P1, 2);
    let mut ledger = WorkLedger::default();
    let rhs = hier.assemble_rhs_level(2, &poly_f, &poly_u, &mut ledger);
    let (x, hist) = hier
        .solve_to_residual(&rhs.b, 1e-12, &cfg(Kind::P2P1), 200, &mut ledger)
        .unwrap_or_else(|e| panic!("no convergence: {e}"));
    assert!(hist.len() < 200);

    // postcondition recheck: both block residuals really are below eps
    let ops = hier.finest();
    let layout = ops.layout();
    let mut r = StokesVec::<f64>::new(layout, Kind::P2P1);
    let mut t = mgstokes::cost::FlopTally::default();
    ops.residual(&rhs.b, &x, &mut r, &mut t);
    let (ru, rp) = residual_norms(layout, &r);
    assert!(ru < 1e-12 && rp < 1e-12, "ru={ru:.2e} rp={rp:.2e}");

    // the discrete solution is the nodal interpolant (total = hom + lift)
    let corners: Vec<[[f64; 3]; 4]> = hier
        .graph
        .cells
        .iter()
        .map(|c| std::array::from_fn(|i| mesh.vertices[c.verts[i]]))
        .collect();
    let mut max_u = 0.0f64;
    for (i, dof) in layout.owned(mgstokes::fem::Space::P2).iter().enumerate() {
        let pt = micro_coords(&corners[dof.cell], dof.dbl, 2);
        let exact = poly_u(pt);
        for d in 0..3 {
            let tot = x.u[d].read_owner(&dof.owner) + rhs.lift[d].read_owner(&dof.owner);
            max_u = max_u.max((tot - exact[d]).abs());
        }
        let _ = i;
    }
    assert!(max_u < 1e-9, "velocity interpolant deviation {max_u:.2e}");

    // pressure is exact up to the mean constant
    let mut max_p = 0.0f64;
    let mut shift = f64::NAN;
    for dof in layout.owned(mgstokes::fem::Space::P1) {
        let pt = micro_coords(&corners[dof.cell], dof.dbl, 2);
        let got = x.p.read_owner(&dof.owner);
        if shift.is_nan() {
            shift = got - poly_p(pt);
        }
        max_p = max_p.max((got - poly_p(pt) - shift).abs());
    }
    assert!(max_p < 1e-8, "pressure deviation {max_p:.2e}");
}

#[test]
fn constant_boundary_data_gives_constant_flow() {
    // w = (1,0,0), f = 0 -> u == (1,0,0), p == const
    let mesh = generate_unit_cube::<f64>();
    for kind in [Kind::P1P1, Kind::P2P1] {
        let hier = Hierarchy::<f64>::build(&mesh, kind, 2);
        let mut ledger = WorkLedger::default();
        let one = |_: [f64; 3]| [1.0, 0.0, 0.0];
        let zero = |_: [f64; 3]| [0.0, 0.0, 0.0];
        let rhs = hier.assemble_rhs_level(2, &zero, &one, &mut ledger);
        let (x, _) = hier
            .solve_to_residual(&rhs.b, 1e-11, &cfg(kind), 200, &mut ledger)
            .unwrap_or_else(|e| panic!("{kind}: {e}"));
        let ops = hier.finest();
        let layout = ops.layout();
        let vel = ops.kind().velocity_space();
        for dof in layout.owned(vel) {
            let tot: [f64; 3] = std::array::from_fn(|d| {
                x.u[d].read_owner(&dof.owner) + rhs.lift[d].read_owner(&dof.owner)
            });
            assert!((tot[0] - 1.0).abs() < 1e-8, "{kind}: u0 = {}", tot[0]);
            assert!(tot[1].abs() < 1e-8 && tot[2].abs() < 1e-8);
        }
        // pressure constant: after mean projection it is zero
        for dof in layout.owned(mgstokes::fem::Space::P1) {
            assert!(x.p.read_owner(&dof.owner).abs() < 1e-7, "{kind}");
        }
    }
}

#[test]
fn equal_order_velocity_error_shrinks_with_level() {
    // P1-P1 cannot represent the quadratic field; the interpolation-scale
    // error must drop roughly 4x per level
    let mesh = generate_unit_cube::<f64>();
    let mut errs = Vec::new();
    for level in [2u32, 3] {
        let hier = Hierarchy::<f64>::build(&mesh, Kind::P1P1, level);
        let mut ledger = WorkLedger::default();
        let rhs = hier.assemble_rhs_level(level, &poly_f, &poly_u, &mut ledger);
        let (x, _) = hier
            .solve_to_residual(&rhs.b, 1e-11, &cfg(Kind::P1P1), 200, &mut ledger)
            .unwrap();
        let ops = hier.finest();
        let layout = ops.layout();
        let op = ops.stencil().unwrap();
        // nodal error in the mass norm
        let corners: Vec<[[f64; 3]; 4]> = hier
            .graph
            .cells
            .iter()
            .map(|c| std::array::from_fn(|i| mesh.vertices[c.verts[i]]))
            .collect();
        let mut err = StokesVec::<f64>::new(layout, Kind::P1P1);
        for dof in layout.owned(mgstokes::fem::Space::P1) {
            let pt = micro_coords(&corners[dof.cell], dof.dbl, level);
            let exact = poly_u(pt);
            for d in 0..3 {
                let tot = x.u[d].read_owner(&dof.owner) + rhs.lift[d].read_owner(&dof.owner);
                err.u[d].write_owner(&dof.owner, tot - exact[d]);
            }
        }
        for d in 0..3 {
            err.u[d].ghost_update(layout);
        }
        errs.push(op.velocity_mass_norm(&err.u));
    }
    let rate = errs[0] / errs[1];
    assert!(
        (3.0..6.0).contains(&rate),
        "velocity error rate per level {rate} (errors {errs:?})"
    );
}
