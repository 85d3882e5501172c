//! Error metrics: the discrete L2 error against the exact solution evaluated
//! on the next finer grid, the gamma ratio against the converged discrete
//! reference, and the relative difference delta.

use mgstokes::cost::{FlopTally, Kind};
use mgstokes::fem::Space;
use mgstokes::grid::GridFunction;
use mgstokes::mesh::{MacroMesh, PrimitiveGraph};
use mgstokes::multigrid::Transfer;
use mgstokes::refine::micro_coords;
use mgstokes::stencil::{StokesOperator, StokesVec};

/// Structures for measuring errors of a level-l solution: the (mass-only)
/// operator of level l+1 and the interpolation l -> l+1.
pub struct ErrorContext {
    pub level: u32,
    pub fine_mass: StokesOperator<f64>,
    pub transfer: Transfer<f64>,
    cell_corners: Vec<[[f64; 3]; 4]>,
}

impl ErrorContext {
    pub fn build(
        mesh: &MacroMesh<f64>,
        graph: &PrimitiveGraph,
        coarse: &mgstokes::grid::LevelLayout,
        kind: Kind,
        level: u32,
    ) -> ErrorContext {
        let fine_mass = StokesOperator::assemble_mass_only(mesh, graph, kind, level + 1);
        let transfer = Transfer::build(graph, coarse, &fine_mass.layout, kind);
        let cell_corners = fine_mass.cell_corners.clone();
        ErrorContext { level, fine_mass, transfer, cell_corners }
    }

    /// Nodal evaluation of analytic fields on level l+1.
    pub fn exact_nodal(
        &self,
        u_exact: &dyn Fn([f64; 3]) -> [f64; 3],
        p_exact: &dyn Fn([f64; 3]) -> f64,
    ) -> StokesVec<f64> {
        let layout = &self.fine_mass.layout;
        let kind = self.fine_mass.kind;
        let mut out = StokesVec::<f64>::new(layout, kind);
        let vel = kind.velocity_space();
        for dof in layout.owned(vel) {
            let x = micro_coords(&self.cell_corners[dof.cell], dof.dbl, self.level + 1);
            let u = u_exact(x);
            for d in 0..3 {
                out.u[d].write_owner(&dof.owner, u[d]);
            }
        }
        for dof in layout.owned(Space::P1) {
            let x = micro_coords(&self.cell_corners[dof.cell], dof.dbl, self.level + 1);
            out.p.write_owner(&dof.owner, p_exact(x));
        }
        for d in 0..3 {
            out.u[d].ghost_update(layout);
        }
        out.p.ghost_update(layout);
        out
    }

    /// Interpolate a total-field solution to level l+1.
    pub fn interpolate_up(&self, x_total: &StokesVec<f64>) -> StokesVec<f64> {
        let layout = &self.fine_mass.layout;
        let mut out = StokesVec::<f64>::new(layout, self.fine_mass.kind);
        let mut t = FlopTally::default();
        for d in 0..3 {
            self.transfer.prolongate_field(layout, &x_total.u[d], &mut out.u[d], &mut t);
        }
        self.transfer.prolongate_field(layout, &x_total.p, &mut out.p, &mut t);
        out
    }

    /// Discrete L2 (mass-norm) errors of a total-field solution against the
    /// exact fields: `|| x*_{l+1} - I x_l ||_M` per block. The pressure error
    /// is measured after aligning both means.
    pub fn discrete_error(
        &self,
        x_total: &StokesVec<f64>,
        u_exact: &dyn Fn([f64; 3]) -> [f64; 3],
        p_exact: &dyn Fn([f64; 3]) -> f64,
    ) -> (f64, f64) {
        let layout = &self.fine_mass.layout;
        let up = self.interpolate_up(x_total);
        let exact = self.exact_nodal(u_exact, p_exact);
        let mut eu: [GridFunction<f64>; 3] =
            std::array::from_fn(|_| GridFunction::new(layout, self.fine_mass.velocity_space()));
        for d in 0..3 {
            let mut diff = exact.u[d].clone();
            sub_assign(layout, &up.u[d], &mut diff);
            eu[d] = diff;
        }
        let mut ep = exact.p.clone();
        sub_assign(layout, &up.p, &mut ep);
        self.fine_mass.project_pressure_mean_zero(&mut ep);
        (self.fine_mass.velocity_mass_norm(&eu), self.fine_mass.pressure_mass_norm(&ep))
    }
}

fn sub_assign(
    layout: &mgstokes::grid::LevelLayout,
    rhs: &GridFunction<f64>,
    out: &mut GridFunction<f64>,
) {
    let owned: Vec<mgstokes::grid::OwnerRef> =
        layout.owned(out.space).iter().map(|d| d.owner).collect();
    for o in &owned {
        let v = out.read_owner(o) - rhs.read_owner(o);
        out.write_owner(o, v);
    }
    out.ghost_update(layout);
}

/// Total field = homogeneous part + Dirichlet lift.
pub fn total_field(
    layout: &mgstokes::grid::LevelLayout,
    x: &StokesVec<f64>,
    lift: &[GridFunction<f64>; 3],
) -> StokesVec<f64> {
    let mut out = x.clone();
    for d in 0..3 {
        mgstokes::grid::axpy(layout, 1.0, &lift[d], &mut out.u[d]);
    }
    out
}

/// gamma = error(candidate) / error(reference), per block.
pub fn gamma(
    ctx: &ErrorContext,
    candidate_total: &StokesVec<f64>,
    reference_total: &StokesVec<f64>,
    u_exact: &dyn Fn([f64; 3]) -> [f64; 3],
    p_exact: &dyn Fn([f64; 3]) -> f64,
) -> (f64, f64) {
    let (cu, cp) = ctx.discrete_error(candidate_total, u_exact, p_exact);
    let (ru, rp) = ctx.discrete_error(reference_total, u_exact, p_exact);
    assert!(ru > 0.0 && rp > 0.0, "degenerate reference error");
    (cu / ru, cp / rp)
}

/// delta = || candidate - reference ||_M / || reference ||_M per block, on
/// the solve level.
pub fn relative_delta(
    op: &StokesOperator<f64>,
    candidate_total: &StokesVec<f64>,
    reference_total: &StokesVec<f64>,
) -> (f64, f64) {
    let layout = &op.layout;
    let mut du: [GridFunction<f64>; 3] = std::array::from_fn(|d| candidate_total.u[d].clone());
    for d in 0..3 {
        sub_assign(layout, &reference_total.u[d], &mut du[d]);
    }
    let mut dp = candidate_total.p.clone();
    sub_assign(layout, &reference_total.p, &mut dp);
    let nu = op.velocity_mass_norm(&reference_total.u);
    let np = op.pressure_mass_norm(&reference_total.p);
    assert!(nu > 0.0 && np > 0.0, "zero reference norm");
    (op.velocity_mass_norm(&du) / nu, op.pressure_mass_norm(&dp) / np)
}
