//! Instrumented flop counts against the work-unit model.

use mgstokes::cost::{
    block_work, smoother_work, AHat, Block, FlopTally, Kind, SolverParams,
};
use mgstokes::mesh::{build_primitive_graph, generate_single_tet};
use mgstokes::multigrid::{LevelOps, SmootherConfig};
use mgstokes::stencil::{StokesOperator, StokesVec};
use num_traits::ToPrimitive;

#[test]
fn apply_stokes_flops_match_model_on_one_macro_cell() {
    // level 5, single macro-cell: kernel flops within +-10% of W(A_l)
    let mesh = generate_single_tet::<f64>();
    let graph = build_primitive_graph(&mesh);
    let op = StokesOperator::<f64>::assemble(&mesh, &graph, Kind::P2P1, 5).unwrap();
    let layout = &op.layout;
    let mut x = StokesVec::<f64>::new(layout, Kind::P2P1);
    x.fill(0.5);
    for c in &mut x.u {
        c.zero_dirichlet(layout);
    }
    let mut y = StokesVec::<f64>::new(layout, Kind::P2P1);
    let mut t = FlopTally::default();
    op.apply_stokes(&x, &mut y, &mut t);
    let model = block_work(Kind::P2P1, Block::Stokes, 5).to_f64().unwrap();
    let ratio = t.kernel as f64 / model;
    println!("apply_stokes level 5: kernel={} model={model} ratio={ratio:.4}", t.kernel);
    assert!(
        (0.9..=1.1).contains(&ratio),
        "measured/model ratio {ratio} outside [0.9, 1.1]"
    );
}

#[test]
fn uzawa_iteration_flops_match_118_over_72() {
    // symmetric velocity sweep, xi = 1: 118/72 WU per iteration at level 5
    let mesh = generate_single_tet::<f64>();
    let graph = build_primitive_graph(&mesh);
    let op = StokesOperator::<f64>::assemble(&mesh, &graph, Kind::P2P1, 5).unwrap();
    let ops = LevelOps::Stencil(op);
    let layout = ops.layout();
    let mut x = StokesVec::<f64>::new(layout, Kind::P2P1);
    let b = StokesVec::<f64>::new(layout, Kind::P2P1);
    let cfg = SmootherConfig {
        params: SolverParams::new(1, 1, 0, 1, AHat::Symmetric, 1),
        omega_inv: 0.448872,
    };
    let mut t = FlopTally::default();
    ops.uzawa_smooth(&mut x, &b, &cfg, &mut t);
    let wu = block_work(Kind::P2P1, Block::Stokes, 5).to_f64().unwrap();
    let predicted = smoother_work(Kind::P2P1, AHat::Symmetric, 1, 5).to_f64().unwrap();
    let ratio = t.kernel as f64 / predicted;
    println!(
        "uzawa level 5: kernel={} predicted={predicted} ratio={ratio:.4} ({}x WU, 118/72 = {:.4})",
        t.kernel,
        t.kernel as f64 / wu,
        118.0 / 72.0
    );
    assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
    // normalized against one operator application: 118/72 +- 10%
    let norm = t.kernel as f64 / wu;
    let target = 118.0 / 72.0;
    assert!((norm / target - 1.0).abs() <= 0.1, "normalized {norm} vs {target}");
}
