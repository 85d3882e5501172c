//! Exact rational work-unit cost model and the ledger comparing it against
//! instrumented flop counters.
//!
//! All predictions count `2n` operations per application of an `n`-entry
//! stencil, over macro-cell interior unknowns only, per macro-cell. Measured
//! counters are split into `kernel` flops (the interior stencil work the model
//! prices) and `other` flops (interface rows, diagonal scalings, vector
//! updates), so model comparisons stay meaningful at desk scale where
//! interface primitives still hold a sizable share of the unknowns.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::refine::n_tet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kind {
    P1P1,
    P2P1,
}

impl Kind {
    pub fn velocity_space(self) -> crate::fem::Space {
        match self {
            Kind::P1P1 => crate::fem::Space::P1,
            Kind::P2P1 => crate::fem::Space::P2,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::P1P1 => write!(f, "p1p1"),
            Kind::P2P1 => write!(f, "p2p1"),
        }
    }
}

/// Velocity relaxation variant inside the Uzawa smoother: forward Gauss-Seidel
/// or a symmetric (forward + backward) sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AHat {
    Forward,
    Symmetric,
}

impl fmt::Display for AHat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AHat::Forward => write!(f, "F"),
            AHat::Symmetric => write!(f, "S"),
        }
    }
}

/// One point of the solver parameter search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverParams {
    pub nu_pre: u32,
    pub nu_post: u32,
    pub nu_inc: u32,
    pub kappa: u32,
    pub a_hat: AHat,
    pub xi: u32,
}

impl SolverParams {
    pub fn new(nu_pre: u32, nu_post: u32, nu_inc: u32, kappa: u32, a_hat: AHat, xi: u32) -> Self {
        SolverParams { nu_pre, nu_post, nu_inc, kappa, a_hat, xi }
    }

    /// Whether the tuple lies in the benchmark search space S.
    pub fn in_search_space(&self) -> bool {
        let pair_ok = matches!(
            (self.a_hat, self.xi),
            (AHat::Forward, 1..=4) | (AHat::Symmetric, 1..=2)
        );
        self.nu_pre <= 3 && self.nu_post <= 3 && self.nu_inc <= 3
            && (1..=2).contains(&self.kappa)
            && pair_ok
    }

    /// All 768 tuples of the search space S.
    pub fn search_space() -> Vec<SolverParams> {
        let mut out = Vec::with_capacity(768);
        for nu_pre in 0..=3 {
            for nu_post in 0..=3 {
                for nu_inc in 0..=3 {
                    for kappa in 1..=2 {
                        for (a_hat, xi) in [
                            (AHat::Forward, 1),
                            (AHat::Forward, 2),
                            (AHat::Forward, 3),
                            (AHat::Forward, 4),
                            (AHat::Symmetric, 1),
                            (AHat::Symmetric, 2),
                        ] {
                            out.push(SolverParams::new(nu_pre, nu_post, nu_inc, kappa, a_hat, xi));
                        }
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for SolverParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{},{},{})",
            self.nu_pre, self.nu_post, self.nu_inc, self.kappa, self.a_hat, self.xi
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Block {
    A,
    B,
    Bt,
    C,
    Stokes,
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rat2(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact interior flop count of one block application in one macro-cell at
/// level `l` (`2n` operations per `n`-entry stencil).
pub fn block_work(kind: Kind, block: Block, level: u32) -> BigRational {
    let n = 1i64 << level;
    let nv = n_tet(n - 3) as i64;
    let ne = n_tet(n - 2) as i64;
    let nx = n_tet(n - 1) as i64;
    match (kind, block) {
        (Kind::P2P1, Block::A) => rat(3 * (2 * 65 * nv + 2 * 146 * ne + 2 * 19 * nx)),
        (Kind::P2P1, Block::B) | (Kind::P2P1, Block::Bt) => rat(3 * (2 * 65) * nv),
        (Kind::P2P1, Block::C) => rat(0),
        (Kind::P1P1, Block::A) | (Kind::P1P1, Block::B) | (Kind::P1P1, Block::Bt) => {
            rat(3 * (2 * 15) * nv)
        }
        (Kind::P1P1, Block::C) => rat((2 * 15) * nv),
        (_, Block::Stokes) => {
            block_work(kind, Block::A, level)
                + block_work(kind, Block::B, level)
                + block_work(kind, Block::Bt, level)
                + block_work(kind, Block::C, level)
        }
    }
}

/// Leading coefficient of `block_work` as a polynomial in `n^3` (per
/// macro-cell); ratios of these are the asymptotic limits.
fn block_work_leading(kind: Kind, block: Block) -> BigRational {
    match (kind, block) {
        (Kind::P2P1, Block::A) => rat(3 * 2 * (65 + 146 + 19)),
        (Kind::P2P1, Block::B) | (Kind::P2P1, Block::Bt) => rat(3 * 2 * 65),
        (Kind::P2P1, Block::C) => rat(0),
        (Kind::P1P1, Block::A) | (Kind::P1P1, Block::B) | (Kind::P1P1, Block::Bt) => rat(3 * 2 * 15),
        (Kind::P1P1, Block::C) => rat(2 * 15),
        (_, Block::Stokes) => {
            block_work_leading(kind, Block::A)
                + block_work_leading(kind, Block::B)
                + block_work_leading(kind, Block::Bt)
                + block_work_leading(kind, Block::C)
        }
    }
}

/// Asymptotic cost of one block application normalized by the Stokes operator
/// of the same discretization.
pub fn block_limit(kind: Kind, block: Block) -> BigRational {
    block_work_leading(kind, block) / block_work_leading(kind, Block::Stokes)
}

/// Exact flops of one Uzawa relaxation in one macro-cell interior at `level`:
/// `xi` velocity sweeps plus the B / B^T applications (the diagonal Schur
/// scaling is neglected, matching the model).
pub fn smoother_work(kind: Kind, a_hat: AHat, xi: u32, level: u32) -> BigRational {
    let gs = match a_hat {
        AHat::Forward => rat(1),
        AHat::Symmetric => rat(2),
    };
    gs * rat(xi as i64) * block_work(kind, Block::A, level)
        + block_work(kind, Block::B, level)
        + block_work(kind, Block::Bt, level)
        + block_work(kind, Block::C, level)
}

/// Asymptotic smoother cost in work units (normalized by the Stokes operator).
pub fn smoother_limit(kind: Kind, a_hat: AHat, xi: u32) -> BigRational {
    let gs = match a_hat {
        AHat::Forward => rat(1),
        AHat::Symmetric => rat(2),
    };
    (gs * rat(xi as i64) * block_work_leading(kind, Block::A)
        + block_work_leading(kind, Block::B)
        + block_work_leading(kind, Block::Bt)
        + block_work_leading(kind, Block::C))
        / block_work_leading(kind, Block::Stokes)
}

/// Geometric-series upper bound of one variable V-cycle at finest level, in
/// asymptotic work units: `8/7 W(V_L^L) + 16/49 nu_inc W(P^-1)`.
pub fn vcycle_work_bound(kind: Kind, params: &SolverParams) -> BigRational {
    let wp = smoother_limit(kind, params.a_hat, params.xi);
    let wv = rat((params.nu_pre + params.nu_post) as i64) * wp.clone() + BigRational::one();
    rat2(8, 7) * wv + rat2(16, 49) * rat(params.nu_inc as i64) * wp
}

/// Exact finite-level work of one variable V-cycle with finest level `l_fine`,
/// in absolute flops per macro-cell, summing levels `1..=l_fine` (the coarse
/// solve at level 0 is excluded from the model).
pub fn vcycle_work_finite(kind: Kind, params: &SolverParams, l_fine: u32) -> BigRational {
    let mut acc = BigRational::zero();
    for l in 1..=l_fine {
        let sweeps = params.nu_pre + params.nu_post + 2 * (l_fine - l) * params.nu_inc;
        acc += rat(sweeps as i64) * smoother_work(kind, params.a_hat, params.xi, l)
            + block_work(kind, Block::Stokes, l);
    }
    acc
}

/// Upper-bound expression evaluated with finite-level works (absolute flops
/// per macro-cell).
pub fn vcycle_bound_finite(kind: Kind, params: &SolverParams, l_fine: u32) -> BigRational {
    let wp = smoother_work(kind, params.a_hat, params.xi, l_fine);
    let wv = rat((params.nu_pre + params.nu_post) as i64) * wp.clone()
        + block_work(kind, Block::Stokes, l_fine);
    rat2(8, 7) * wv + rat2(16, 49) * rat(params.nu_inc as i64) * wp
}

/// Full-multigrid cost bound in asymptotic work units: `8 kappa / 7` times the
/// V-cycle bound.
pub fn fmg_work(kind: Kind, params: &SolverParams) -> BigRational {
    rat2(8, 7) * rat(params.kappa as i64) * vcycle_work_bound(kind, params)
}

/// Exact finite-level FMG work in absolute flops per macro-cell: `kappa`
/// V-cycles per level, levels 1..=L, coarse solves and transfers excluded.
pub fn fmg_work_finite(kind: Kind, params: &SolverParams, max_level: u32) -> BigRational {
    let mut acc = BigRational::zero();
    for l in 1..=max_level {
        acc += rat(params.kappa as i64) * vcycle_work_finite(kind, params, l);
    }
    acc
}

/// The asymptotic comparison table between the two discretizations at the
/// matching level pair (P2-P1 at l vs P1-P1 at l+1): work ratios for A, B and
/// the Stokes operator, plus the unknown-count ratio.
pub struct AsymptoticRatios {
    pub a: BigRational,
    pub b: BigRational,
    pub stokes: BigRational,
    pub unknowns: BigRational,
}

pub fn asymptotic_ratios() -> AsymptoticRatios {
    // the level shift multiplies P1-P1 leading terms by 8
    let eight = rat(8);
    let a = block_work_leading(Kind::P2P1, Block::A)
        / (block_work_leading(Kind::P1P1, Block::A) * eight.clone());
    let b = block_work_leading(Kind::P2P1, Block::B)
        / (block_work_leading(Kind::P1P1, Block::B) * eight.clone());
    let stokes = block_work_leading(Kind::P2P1, Block::Stokes)
        / (block_work_leading(Kind::P1P1, Block::Stokes) * eight.clone());
    // unknowns: 3 velocity spaces plus pressure, leading coefficients in n^3/6
    let p2p1 = rat(3 * (1 + 6 + 1) + 1);
    let p1p1 = rat(4) * eight;
    AsymptoticRatios { a, b, stokes, unknowns: p2p1 / p1p1 }
}

// ---------------------------------------------------------------------------
// measured-work ledger
// ---------------------------------------------------------------------------

/// Instrumented flop counts: `kernel` covers macro-cell interior stencil work
/// (the model's scope), `other` everything else (interface rows, diagonal
/// scalings, axpys). Multiplications and additions are counted separately and
/// summed here.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopTally {
    pub kernel: u64,
    pub other: u64,
}

impl FlopTally {
    #[inline]
    pub fn total(&self) -> u64 {
        self.kernel + self.other
    }

    #[inline]
    pub fn add(&mut self, rhs: FlopTally) {
        self.kernel += rhs.kernel;
        self.other += rhs.other;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    OperatorApply,
    Smooth,
    Residual,
    Transfer,
    CoarseSolve,
    RhsAssembly,
    OmegaEstimate,
    Metrics,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::OperatorApply => "operator_apply",
            Phase::Smooth => "smooth",
            Phase::Residual => "residual",
            Phase::Transfer => "transfer",
            Phase::CoarseSolve => "coarse_solve",
            Phase::RhsAssembly => "rhs_assembly",
            Phase::OmegaEstimate => "omega_estimate",
            Phase::Metrics => "metrics",
        }
    }
}

/// Predicted (exact rational) and measured work per solver phase.
#[derive(Debug, Clone, Default)]
pub struct WorkLedger {
    pub measured: BTreeMap<Phase, FlopTally>,
    pub predicted: BTreeMap<Phase, BigRational>,
    /// Absolute flops of the reference operator application defining 1 WU
    /// (Stokes operator at the finest level over the whole mesh).
    pub reference_wu: Option<BigRational>,
}

impl WorkLedger {
    pub fn record(&mut self, phase: Phase, tally: FlopTally) {
        self.measured.entry(phase).or_default().add(tally);
    }

    pub fn predict(&mut self, phase: Phase, work: BigRational) {
        let e = self.predicted.entry(phase).or_insert_with(BigRational::zero);
        *e += work;
    }

    pub fn measured_total(&self) -> FlopTally {
        let mut t = FlopTally::default();
        for v in self.measured.values() {
            t.add(*v);
        }
        t
    }

    /// Measured work in WU (kernel scope) relative to the reference operator.
    pub fn measured_wu(&self, phase: Phase) -> Option<f64> {
        let r = self.reference_wu.as_ref()?.to_f64()?;
        let m = self.measured.get(&phase)?.kernel as f64;
        Some(m / r)
    }
}

#[derive(Debug, Clone)]
pub struct PhaseComparison {
    pub phase: Phase,
    pub predicted: Option<BigRational>,
    pub measured_kernel: u64,
    pub measured_total: u64,
    /// kernel / predicted, when both are available and nonzero
    pub ratio: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub tolerance: f64,
    pub rows: Vec<PhaseComparison>,
}

/// Compare measured kernel flops against the model per phase. Phases the model
/// does not price (transfers, coarse solve) get no ratio and no verdict.
pub fn compare_measured(ledger: &WorkLedger, tolerance: f64) -> ComparisonReport {
    let mut rows = Vec::new();
    let mut phases: Vec<Phase> = ledger.measured.keys().copied().collect();
    for p in ledger.predicted.keys() {
        if !phases.contains(p) {
            phases.push(*p);
        }
    }
    phases.sort();
    for phase in phases {
        let measured = ledger.measured.get(&phase).copied().unwrap_or_default();
        let predicted = ledger.predicted.get(&phase).cloned();
        let (ratio, pass) = match &predicted {
            Some(p) if !p.is_zero() => {
                let pf = p.to_f64().unwrap_or(f64::NAN);
                if measured.total() == 0 {
                    (None, None) // no data
                } else {
                    let r = measured.kernel as f64 / pf;
                    (Some(r), Some((r - 1.0).abs() <= tolerance))
                }
            }
            _ => (None, None),
        };
        rows.push(PhaseComparison {
            phase,
            predicted,
            measured_kernel: measured.kernel,
            measured_total: measured.total(),
            ratio,
            pass,
        });
    }
    ComparisonReport { tolerance, rows }
}

impl ComparisonReport {
    /// Aligned text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<16} {:>16} {:>16} {:>16} {:>8} {:>6}\n",
            "phase", "predicted", "kernel", "total", "ratio", "pass"
        ));
        for r in &self.rows {
            let pred = r
                .predicted
                .as_ref()
                .map(|p| format!("{:.0}", p.to_f64().unwrap_or(f64::NAN)))
                .unwrap_or_else(|| "-".into());
            let ratio = r.ratio.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
            let pass = match r.pass {
                Some(true) => "ok",
                Some(false) => "FAIL",
                None => "-",
            };
            s.push_str(&format!(
                "{:<16} {:>16} {:>16} {:>16} {:>8} {:>6}\n",
                r.phase.name(),
                pred,
                r.measured_kernel,
                r.measured_total,
                ratio,
                pass
            ));
        }
        s
    }

    /// Stable hand-rolled JSON (fixed field order).
    pub fn to_json(&self) -> String {
        let mut s = String::from("{\n");
        s.push_str(&format!("  \"tolerance\": {},\n  \"phases\": [\n", self.tolerance));
        for (i, r) in self.rows.iter().enumerate() {
            let pred = r
                .predicted
                .as_ref()
                .map(|p| format!("\"{}/{}\"", p.numer(), p.denom()))
                .unwrap_or_else(|| "null".into());
            let ratio = r.ratio.map(|x| format!("{x:.17e}")).unwrap_or_else(|| "null".into());
            let pass = match r.pass {
                Some(b) => b.to_string(),
                None => "null".into(),
            };
            s.push_str(&format!(
                "    {{\"phase\": \"{}\", \"predicted\": {}, \"measured_kernel\": {}, \"measured_total\": {}, \"ratio\": {}, \"pass\": {}}}{}\n",
                r.phase.name(),
                pred,
                r.measured_kernel,
                r.measured_total,
                ratio,
                pass,
                if i + 1 < self.rows.len() { "," } else { "" }
            ));
        }
        s.push_str("  ]\n}\n");
        s
    }
}

pub fn rational_to_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}
