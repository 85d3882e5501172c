//! Benchmark orchestration: problem setup, the cached epsilon-converged
//! reference solve, single FMG runs with metrics, parameter sweeps and the
//! work-minimizing parameter query.

use std::path::PathBuf;
use std::time::Instant;

use mgstokes::cost::{
    block_work, fmg_work, Block, Kind, Phase, SolverParams, WorkLedger,
};
use mgstokes::grid::GridFunction;
use mgstokes::mesh::{generate_unit_cube, load_mesh, MacroMesh};
use mgstokes::multigrid::{Hierarchy, LevelRhs, SmootherConfig};
use mgstokes::stencil::StokesVec;
use num_traits::ToPrimitive;

use crate::config::{BenchmarkConfig, MeshSource, OmegaChoice, SweepSet};
use crate::emit::BenchResult;
use crate::exact;
use crate::metrics::{gamma, relative_delta, total_field, ErrorContext};

pub struct Problem {
    pub cfg: BenchmarkConfig,
    #[allow(dead_code)]
    pub mesh: MacroMesh<f64>,
    pub mesh_text: String,
    pub hier: Hierarchy<f64>,
    pub rhs: Vec<LevelRhs<f64>>,
    pub err_ctx: Option<ErrorContext>,
    pub omega_inv: f64,
    #[allow(dead_code)]
    pub has_exact: bool,
}

pub struct FieldSet {
    pub forcing: Box<dyn Fn([f64; 3]) -> [f64; 3]>,
    pub boundary: Box<dyn Fn([f64; 3]) -> [f64; 3]>,
}

/// Paper cube defaults for the Schur relaxation.
pub fn default_omega_inv(kind: Kind) -> f64 {
    match kind {
        Kind::P2P1 => 0.448872,
        Kind::P1P1 => 0.570751,
    }
}

/// The data driving a benchmark: the analytic cube solution on the builtin
/// mesh; for user meshes a divergence-free rigid rotation about the bounding
/// box center (compatible on enclosed domains, nontrivial on any geometry).
pub fn field_set(mesh_source: &MeshSource, mesh: &MacroMesh<f64>) -> FieldSet {
    match mesh_source {
        MeshSource::Cube => FieldSet {
            forcing: Box::new(exact::cube_forcing),
            boundary: Box::new(exact::cube_velocity),
        },
        MeshSource::File(_) => {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for v in &mesh.vertices {
                for d in 0..3 {
                    lo[d] = lo[d].min(v[d]);
                    hi[d] = hi[d].max(v[d]);
                }
            }
            let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
            FieldSet {
                forcing: Box::new(|_| [0.0, 0.0, 0.0]),
                boundary: Box::new(move |x| [-(x[1] - c[1]), x[0] - c[0], 0.0]),
            }
        }
    }
}

impl Problem {
    pub fn setup(cfg: BenchmarkConfig) -> Result<Problem, Box<dyn std::error::Error>> {
        let mesh = match &cfg.mesh {
            MeshSource::Cube => generate_unit_cube::<f64>(),
            MeshSource::File(p) => load_mesh::<f64>(p)?,
        };
        let mesh_text = mesh.to_text();
        let hier = Hierarchy::<f64>::build(&mesh, cfg.kind, cfg.level);
        let fields = field_set(&cfg.mesh, &mesh);
        let mut ledger = WorkLedger::default();
        let rhs: Vec<LevelRhs<f64>> = (0..=cfg.level)
            .map(|l| hier.assemble_rhs_level(l, &*fields.forcing, &*fields.boundary, &mut ledger))
            .collect();
        let has_exact = matches!(cfg.mesh, MeshSource::Cube);
        let err_ctx = if has_exact {
            Some(ErrorContext::build(
                &mesh,
                &hier.graph,
                hier.finest().layout(),
                cfg.kind,
                cfg.level,
            ))
        } else {
            None
        };
        let omega_inv = match cfg.omega {
            OmegaChoice::Value(v) => v,
            OmegaChoice::Default => {
                if has_exact {
                    default_omega_inv(cfg.kind)
                } else {
                    hier.estimate_omega_inv(cfg.level, 100, &mut ledger)
                }
            }
            OmegaChoice::Estimate => hier.estimate_omega_inv(cfg.level, 100, &mut ledger),
        };
        Ok(Problem { cfg, mesh, mesh_text, hier, rhs, err_ctx, omega_inv, has_exact })
    }

    fn reference_params(&self) -> SmootherConfig<f64> {
        SmootherConfig {
            params: SolverParams::new(3, 3, 1, 1, mgstokes::cost::AHat::Symmetric, 2),
            omega_inv: self.omega_inv,
        }
    }

    fn cache_key(&self) -> String {
        let mut h = Fnv::new();
        h.update(self.mesh_text.as_bytes());
        h.update(format!("{}", self.cfg.kind).as_bytes());
        h.update(&self.cfg.level.to_le_bytes());
        h.update(&self.cfg.eps.to_le_bytes());
        h.update(&self.omega_inv.to_le_bytes());
        format!("ref-{:016x}.bin", h.finish())
    }

    /// The epsilon-converged discrete reference (total field), from the disk
    /// cache when available.
    pub fn reference(&self) -> Result<StokesVec<f64>, Box<dyn std::error::Error>> {
        let layout = self.hier.finest().layout();
        let lift = &self.rhs[self.cfg.level as usize].lift;
        let path: Option<PathBuf> =
            self.cfg.cache_dir.as_ref().map(|d| d.join(self.cache_key()));
        if let Some(p) = &path {
            if let Some(x) = read_cached(p, layout, self.cfg.kind) {
                return Ok(total_field(layout, &x, lift));
            }
        }
        let mut ledger = WorkLedger::default();
        let (x, _hist) = self.hier.solve_to_residual(
            &self.rhs[self.cfg.level as usize].b,
            self.cfg.eps,
            &self.reference_params(),
            self.cfg.max_cycles,
            &mut ledger,
        )?;
        if let Some(p) = &path {
            let _ = write_cached(p, layout, &x);
        }
        Ok(total_field(layout, &x, lift))
    }

    /// One FMG run with the given parameterization, measured against the
    /// reference.
    pub fn run_one(
        &self,
        params: SolverParams,
        reference_total: &StokesVec<f64>,
    ) -> BenchResult {
        let t0 = Instant::now();
        let cfg = SmootherConfig { params, omega_inv: self.omega_inv };
        let mut ledger = WorkLedger::default();
        let x = self.hier.fmg(&cfg, &self.rhs, &mut ledger);
        let layout = self.hier.finest().layout();
        let total = total_field(layout, &x, &self.rhs[self.cfg.level as usize].lift);

        let predicted = fmg_work(self.cfg.kind, &params);
        let predicted_f = predicted.to_f64().unwrap_or(f64::NAN);
        // absolute prediction: WU x the finest-level operator work over the mesh
        let wu_abs = block_work(self.cfg.kind, Block::Stokes, self.cfg.level).to_f64().unwrap()
            * self.hier.graph.cells.len() as f64;
        let measured_kernel: u64 = [Phase::Smooth, Phase::Residual]
            .iter()
            .filter_map(|p| ledger.measured.get(p))
            .map(|t| t.kernel)
            .sum();
        let measured_ratio = if wu_abs > 0.0 {
            Some(measured_kernel as f64 / (predicted_f * wu_abs))
        } else {
            None
        };

        let (mut gamma_u, mut gamma_p, mut err_u, mut err_p) = (None, None, None, None);
        if let Some(ctx) = &self.err_ctx {
            let (gu, gp) = gamma(
                ctx,
                &total,
                reference_total,
                &exact::cube_velocity,
                &exact::cube_pressure,
            );
            let (eu, ep) = ctx.discrete_error(&total, &exact::cube_velocity, &exact::cube_pressure);
            gamma_u = Some(gu);
            gamma_p = Some(gp);
            err_u = Some(eu);
            err_p = Some(ep);
        }
        let (du, dp) = relative_delta(
            self.hier.finest().stencil().expect("solve level is stencil-based"),
            &total,
            reference_total,
        );

        BenchResult {
            params,
            predicted_wu_exact: format!("{}/{}", predicted.numer(), predicted.denom()),
            predicted_wu: predicted_f,
            measured_ratio,
            gamma_u,
            gamma_p,
            delta_u: Some(du),
            delta_p: Some(dp),
            err_u,
            err_p,
            wall_seconds: t0.elapsed().as_secs_f64(),
        }
    }

    pub fn sweep_params(&self) -> Vec<SolverParams> {
        let mut set = match self.cfg.sweep {
            SweepSet::Curated => crate::config::curated_sweep(),
            SweepSet::Full => SolverParams::search_space(),
        };
        if let Some(k) = self.cfg.sweep_kappa {
            set.retain(|p| p.kappa == k);
        }
        set
    }

    /// Run the sweep; returns results sorted by predicted work and the index
    /// of the work-minimal entry satisfying the gamma bounds, if any.
    pub fn sweep(&self) -> Result<(Vec<BenchResult>, Option<usize>), Box<dyn std::error::Error>> {
        let set = self.sweep_params();
        if set.len() > self.cfg.sweep_budget {
            eprintln!(
                "warning: sweep of {} parameterizations exceeds the budget of {} — this is a long-running job",
                set.len(),
                self.cfg.sweep_budget
            );
        }
        let reference = self.reference()?;
        let mut results: Vec<BenchResult> = Vec::with_capacity(set.len());
        for p in set {
            results.push(self.run_one(p, &reference));
        }
        results.sort_by(|a, b| {
            a.predicted_wu
                .partial_cmp(&b.predicted_wu)
                .unwrap()
                .then_with(|| a.params.to_string().cmp(&b.params.to_string()))
        });
        let best = self.optimize(&results);
        Ok((results, best))
    }

    /// argmin of predicted work subject to the configured gamma bounds.
    pub fn optimize(&self, sorted: &[BenchResult]) -> Option<usize> {
        let gu_max = self.cfg.gamma_u_max?;
        let gp_max = self.cfg.gamma_p_max.unwrap_or(f64::INFINITY);
        sorted.iter().position(|r| {
            r.gamma_u.is_some_and(|g| g <= gu_max) && r.gamma_p.is_some_and(|g| g <= gp_max)
        })
    }
}

// stable 64-bit FNV-1a for cache keys
struct Fnv(u64);

impl Fnv {
    fn new() -> Fnv {
        Fnv(0xcbf29ce484222325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

const CACHE_MAGIC: &[u8; 12] = b"mgstokesref1";

fn write_cached(
    path: &std::path::Path,
    layout: &mgstokes::grid::LevelLayout,
    x: &StokesVec<f64>,
) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    let push = |buf: &mut Vec<u8>, v: &GridFunction<f64>| {
        let packed = v.pack(layout);
        buf.extend_from_slice(&(packed.len() as u64).to_le_bytes());
        for x in packed {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    };
    for d in 0..3 {
        push(&mut buf, &x.u[d]);
    }
    push(&mut buf, &x.p);
    std::fs::write(path, buf)
}

fn read_cached(
    path: &std::path::Path,
    layout: &mgstokes::grid::LevelLayout,
    kind: Kind,
) -> Option<StokesVec<f64>> {
    let data = std::fs::read(path).ok()?;
    if data.len() < CACHE_MAGIC.len() || &data[..CACHE_MAGIC.len()] != CACHE_MAGIC {
        return None;
    }
    let mut off = CACHE_MAGIC.len();
    let mut take_vec = |expect: usize| -> Option<Vec<f64>> {
        let n = u64::from_le_bytes(data.get(off..off + 8)?.try_into().ok()?) as usize;
        off += 8;
        if n != expect {
            return None;
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(f64::from_le_bytes(data.get(off..off + 8)?.try_into().ok()?));
            off += 8;
        }
        Some(out)
    };
    let vel = kind.velocity_space();
    let nu = layout.dof_count(vel);
    let np = layout.dof_count(mgstokes::fem::Space::P1);
    let mut x = StokesVec::<f64>::new(layout, kind);
    for d in 0..3 {
        let v = take_vec(nu)?;
        x.u[d].unpack(layout, &v);
    }
    let v = take_vec(np)?;
    x.p.unpack(layout, &v);
    Some(x)
}
