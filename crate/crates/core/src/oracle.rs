//! Globally assembled sparse operators.
//!
//! This is the second, independent route to the discrete system: a classical
//! element-by-element assembly over all micro-cells into CSR matrices under
//! the global dof numbering. It serves as the test oracle for the stencil
//! path, provides the operators for the two coarsest levels (where the
//! constant-stencil machinery has no interior), and backs the coordinate-form
//! matrix export.

use crate::cost::Kind;
use crate::fem::{
    basis_gradients, basis_values, local_divergence, local_mass, local_pspg, local_stiffness,
    quadrature, AffineMap, Space,
};
use crate::grid::{GridFunction, LevelLayout};
use crate::mesh::{MacroMesh, PrimitiveGraph};
use crate::refine::{micro_coords, refine_micro_cells, MicroCell};
use crate::scalar::{real, Real};
use crate::stencil::{velocity_space, StokesVec};

#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<Vec<(u32, T)>>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zero(nrows: usize, ncols: usize) -> CsrMatrix<T> {
        CsrMatrix { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(u32, u32, T)]) -> CsrMatrix<T> {
        let mut maps: Vec<std::collections::BTreeMap<u32, T>> =
            vec![std::collections::BTreeMap::new(); nrows];
        for &(r, c, v) in trip {
            *maps[r as usize].entry(c).or_insert_with(T::zero) += v;
        }
        CsrMatrix {
            nrows,
            ncols,
            rows: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = T::zero();
            for &(c, w) in row {
                acc += w * x[c as usize];
            }
            y[r] = acc;
        }
    }

    pub fn mul_vec_add(&self, x: &[T], y: &mut [T], sign: T) {
        for (r, row) in self.rows.iter().enumerate() {
            let mut acc = T::zero();
            for &(c, w) in row {
                acc += w * x[c as usize];
            }
            y[r] += sign * acc;
        }
    }

    /// Number of scalar flops of one multiplication (for the assembled-path
    /// counters).
    pub fn flops(&self) -> u64 {
        self.rows.iter().map(|r| (2 * r.len()).saturating_sub(1) as u64).sum()
    }
}

/// Assembled operators of one level under the global numbering: scalar
/// velocity Laplacian, divergence blocks, gradient blocks and stabilization,
/// with identity Dirichlet rows and symmetrically eliminated columns.
pub struct AssembledStokes<T> {
    pub kind: Kind,
    pub level: u32,
    pub layout: LevelLayout,
    pub nu: usize,
    pub np: usize,
    pub a: CsrMatrix<T>,
    pub b: [CsrMatrix<T>; 3],
    pub bt: [CsrMatrix<T>; 3],
    pub c: CsrMatrix<T>,
    /// Eliminated couplings (free row, Dirichlet col) for RHS folds.
    pub a_dropped: Vec<(u32, u32, T)>,
    pub b_dropped: [Vec<(u32, u32, T)>; 3],
    pub dirichlet_v: Vec<bool>,
    pub diag_a: Vec<T>,
    pub diag_c_pspg: Vec<T>,
    pub lumped_mass: Vec<T>,
    pub mass_p: CsrMatrix<T>,
    pub mass_v: CsrMatrix<T>,
    pub volume: T,
    pub fully_dirichlet: bool,
    pub cell_corners: Vec<[[T; 3]; 4]>,
    pub micro_cells: Vec<MicroCell>,
}

impl<T: Real> AssembledStokes<T> {
    pub fn assemble(
        mesh: &MacroMesh<T>,
        graph: &PrimitiveGraph,
        kind: Kind,
        level: u32,
    ) -> AssembledStokes<T> {
        let layout = LevelLayout::build(graph, level);
        let vel = velocity_space(kind);
        let nu = layout.dof_count(vel);
        let np = layout.dof_count(Space::P1);
        let dirichlet_v = layout.dirichlet(vel).to_vec();
        let micro = refine_micro_cells(level);
        let cell_corners: Vec<[[T; 3]; 4]> = graph
            .cells
            .iter()
            .map(|c| std::array::from_fn(|i| mesh.vertices[c.verts[i]]))
            .collect();

        let mut a_t: Vec<(u32, u32, T)> = Vec::new();
        let mut b_t: [Vec<(u32, u32, T)>; 3] = Default::default();
        let mut c_t: Vec<(u32, u32, T)> = Vec::new();
        let mut mp_t: Vec<(u32, u32, T)> = Vec::new();
        let mut mv_t: Vec<(u32, u32, T)> = Vec::new();
        let mut a_dropped = Vec::new();
        let mut b_dropped: [Vec<(u32, u32, T)>; 3] = Default::default();
        let mut diag_a = vec![T::zero(); nu];
        let mut diag_c = vec![T::zero(); np];
        let mut lumped = vec![T::zero(); np];
        let mut volume = T::zero();

        for (ci, corners) in cell_corners.iter().enumerate() {
            for mc in &micro {
                let verts = mc.vertices();
                let phys: [[T; 3]; 4] = std::array::from_fn(|i| {
                    micro_coords(corners, [2 * verts[i][0], 2 * verts[i][1], 2 * verts[i][2]], level)
                });
                let map = AffineMap::from_vertices(&phys);
                volume += map.volume();
                let la = local_stiffness(vel, &map);
                let ldiv = local_divergence(vel, &map);
                let lpspg = local_pspg(&map);
                let lm_p = local_mass(Space::P1, &map, false);
                let lm_v = local_mass(vel, &map, false);

                let nodes = mc.p2_nodes_dbl();
                let nv = vel.node_count();
                let vg: Vec<usize> = (0..nv)
                    .map(|li| {
                        layout.global_index(vel, &layout.owner_of(graph, ci, nodes[li], Space::P2))
                    })
                    .collect();
                let pg: Vec<usize> = (0..4)
                    .map(|k| {
                        layout
                            .global_index(Space::P1, &layout.owner_of(graph, ci, nodes[k], Space::P2))
                    })
                    .collect();

                for li in 0..nv {
                    let (ri, rd) = (vg[li] as u32, dirichlet_v[vg[li]]);
                    diag_a[vg[li]] += la.at(li, li);
                    for lj in 0..nv {
                        let (cj, cd) = (vg[lj] as u32, dirichlet_v[vg[lj]]);
                        let w = la.at(li, lj);
                        mv_t.push((ri, cj, lm_v.at(li, lj)));
                        if rd {
                            continue;
                        }
                        if cd {
                            a_dropped.push((ri, cj, w));
                        } else {
                            a_t.push((ri, cj, w));
                        }
                    }
                }
                for k in 0..4 {
                    let rk = pg[k] as u32;
                    diag_c[pg[k]] += lpspg.at(k, k);
                    for m in 0..4 {
                        lumped[pg[k]] += lm_p.at(k, m);
                        mp_t.push((rk, pg[m] as u32, lm_p.at(k, m)));
                        if kind == Kind::P1P1 {
                            c_t.push((rk, pg[m] as u32, lpspg.at(k, m)));
                        }
                    }
                    for d in 0..3 {
                        for lj in 0..nv {
                            let w = ldiv[d].at(k, lj);
                            if dirichlet_v[vg[lj]] {
                                b_dropped[d].push((rk, vg[lj] as u32, w));
                            } else {
                                b_t[d].push((rk, vg[lj] as u32, w));
                            }
                        }
                    }
                }
            }
        }
        // identity rows for constrained velocity dofs
        for (i, &d) in dirichlet_v.iter().enumerate() {
            if d {
                a_t.push((i as u32, i as u32, T::one()));
                diag_a[i] = T::one();
            }
        }

        let a = CsrMatrix::from_triplets(nu, nu, &a_t);
        let b: [CsrMatrix<T>; 3] =
            std::array::from_fn(|d| CsrMatrix::from_triplets(np, nu, &b_t[d]));
        // gradient blocks: transpose of the divergence (Dirichlet rows empty)
        let bt: [CsrMatrix<T>; 3] = std::array::from_fn(|d| {
            let mut t: Vec<(u32, u32, T)> = Vec::with_capacity(b_t[d].len());
            for &(r, c, v) in &b_t[d] {
                t.push((c, r, v));
            }
            CsrMatrix::from_triplets(nu, np, &t)
        });
        let c = if kind == Kind::P1P1 {
            CsrMatrix::from_triplets(np, np, &c_t)
        } else {
            CsrMatrix::zero(np, np)
        };

        AssembledStokes {
            kind,
            level,
            layout,
            nu,
            np,
            a,
            b,
            bt,
            c,
            a_dropped,
            b_dropped,
            dirichlet_v,
            diag_a,
            diag_c_pspg: diag_c,
            lumped_mass: lumped,
            mass_p: CsrMatrix::from_triplets(np, np, &mp_t),
            mass_v: CsrMatrix::from_triplets(nu, nu, &mv_t),
            volume,
            fully_dirichlet: graph.faces.iter().filter(|f| f.on_boundary).all(|f| f.dirichlet),
            cell_corners,
            micro_cells: micro,
        }
    }

    /// Full saddle-point application on packed vectors:
    /// `y = [A B^T; B -C] x` with velocity components stacked first.
    pub fn apply(&self, u: &[Vec<T>; 3], p: &[T], yu: &mut [Vec<T>; 3], yp: &mut [T]) -> u64 {
        let mut flops = 0u64;
        let mut tmp = vec![T::zero(); self.nu];
        for d in 0..3 {
            self.a.mul_vec(&u[d], &mut yu[d]);
            self.bt[d].mul_vec(p, &mut tmp);
            for (a, b) in yu[d].iter_mut().zip(&tmp) {
                *a += *b;
            }
            flops += self.a.flops() + self.bt[d].flops() + self.nu as u64;
        }
        let mut acc = vec![T::zero(); self.np];
        for v in yp.iter_mut() {
            *v = T::zero();
        }
        for d in 0..3 {
            self.b[d].mul_vec(&u[d], &mut acc);
            for (a, b) in yp.iter_mut().zip(&acc) {
                *a += *b;
            }
            flops += self.b[d].flops() + self.np as u64;
        }
        if self.kind == Kind::P1P1 {
            self.c.mul_vec(p, &mut acc);
            for (a, b) in yp.iter_mut().zip(&acc) {
                *a -= *b;
            }
            flops += self.c.flops() + self.np as u64;
        }
        flops
    }

    /// Right-hand side from analytic forcing and boundary data, packed.
    /// Returns (f components, g, lift components).
    #[allow(clippy::type_complexity)]
    pub fn assemble_rhs(
        &self,
        graph: &PrimitiveGraph,
        forcing: &dyn Fn([T; 3]) -> [T; 3],
        boundary: &dyn Fn([T; 3]) -> [T; 3],
    ) -> ([Vec<T>; 3], Vec<T>, [Vec<T>; 3]) {
        let vel = velocity_space(self.kind);
        let layout = &self.layout;
        let mut f: [Vec<T>; 3] = std::array::from_fn(|_| vec![T::zero(); self.nu]);
        let mut g = vec![T::zero(); self.np];
        let mut lift: [Vec<T>; 3] = std::array::from_fn(|_| vec![T::zero(); self.nu]);

        for (i, dof) in layout.owned(vel).iter().enumerate() {
            if layout.dirichlet(vel)[i] {
                let x = micro_coords(&self.cell_corners[dof.cell], dof.dbl, self.level);
                let w = boundary(x);
                for d in 0..3 {
                    lift[d][i] = w[d];
                }
            }
        }

        let quad = quadrature::<T>(5);
        let delta = real::<T>(1.0 / 12.0);
        for (ci, corners) in self.cell_corners.iter().enumerate() {
            for mc in &self.micro_cells {
                let verts = mc.vertices();
                let phys: [[T; 3]; 4] = std::array::from_fn(|i| {
                    micro_coords(corners, [2 * verts[i][0], 2 * verts[i][1], 2 * verts[i][2]], self.level)
                });
                let map = AffineMap::from_vertices(&phys);
                let scale = map.det.abs();
                let nodes = mc.p2_nodes_dbl();
                let nv = vel.node_count();
                let vg: Vec<usize> = (0..nv)
                    .map(|li| {
                        layout.global_index(vel, &layout.owner_of(graph, ci, nodes[li], Space::P2))
                    })
                    .collect();
                let pg: Vec<usize> = (0..4)
                    .map(|k| {
                        layout
                            .global_index(Space::P1, &layout.owner_of(graph, ci, nodes[k], Space::P2))
                    })
                    .collect();
                let h2 = map.volume().powf(real(2.0 / 3.0));
                for (q, wq) in quad.points.iter().zip(&quad.weights) {
                    let x = map.apply(*q);
                    let fv = forcing(x);
                    let phi = basis_values(vel, *q);
                    for li in 0..nv {
                        for d in 0..3 {
                            f[d][vg[li]] += *wq * scale * phi[li] * fv[d];
                        }
                    }
                    if self.kind == Kind::P1P1 {
                        let grads = basis_gradients(Space::P1, *q);
                        for k in 0..4 {
                            let gk = map.push_gradient(grads[k]);
                            let dot = gk[0] * fv[0] + gk[1] * fv[1] + gk[2] * fv[2];
                            g[pg[k]] -= *wq * scale * delta * h2 * dot;
                        }
                    }
                }
            }
        }
        // fold eliminated couplings
        for d in 0..3 {
            for &(r, c, w) in &self.a_dropped {
                f[d][r as usize] -= w * lift[d][c as usize];
            }
            for &(r, c, w) in &self.b_dropped[d] {
                g[r as usize] -= w * lift[d][c as usize];
            }
        }
        for d in 0..3 {
            for (i, &m) in self.dirichlet_v.iter().enumerate() {
                if m {
                    f[d][i] = T::zero();
                }
            }
        }
        if self.fully_dirichlet {
            let sum: T = g.iter().fold(T::zero(), |a, &b| a + b);
            let c = sum / self.volume;
            for (gi, mi) in g.iter_mut().zip(&self.lumped_mass) {
                *gi -= c * *mi;
            }
        }
        (f, g, lift)
    }

    pub fn pack(&self, v: &StokesVec<T>) -> ([Vec<T>; 3], Vec<T>) {
        (
            std::array::from_fn(|d| v.u[d].pack(&self.layout)),
            v.p.pack(&self.layout),
        )
    }

    pub fn unpack(&self, u: &[Vec<T>; 3], p: &[T], out: &mut StokesVec<T>) {
        for d in 0..3 {
            out.u[d].unpack(&self.layout, &u[d]);
        }
        out.p.unpack(&self.layout, p);
    }

    pub fn unpack_scalar(&self, data: &[T], out: &mut GridFunction<T>) {
        out.unpack(&self.layout, data);
    }
}

/// Coordinate-form export of the full saddle-point matrix
/// (rows/cols: u0, u1, u2, p stacked). Fails above the configured level cap.
pub fn export_stokes_triplets<T: Real>(
    asm: &AssembledStokes<T>,
    level_cap: u32,
) -> Result<Vec<(u32, u32, T)>, String> {
    if asm.level > level_cap {
        return Err(format!("export capped at level {level_cap}, operator is at {}", asm.level));
    }
    let nu = asm.nu as u32;
    let np = asm.np as u32;
    let _ = np;
    let mut out = Vec::new();
    for d in 0..3u32 {
        let off = d * nu;
        for (r, row) in asm.a.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push((off + r as u32, off + c, v));
            }
        }
        for (r, row) in asm.bt[d as usize].rows.iter().enumerate() {
            for &(c, v) in row {
                out.push((off + r as u32, 3 * nu + c, v));
            }
        }
        for (r, row) in asm.b[d as usize].rows.iter().enumerate() {
            for &(c, v) in row {
                out.push((3 * nu + r as u32, off + c, v));
            }
        }
    }
    for (r, row) in asm.c.rows.iter().enumerate() {
        for &(c, v) in row {
            out.push((3 * nu + r as u32, 3 * nu + c, -v));
        }
    }
    Ok(out)
}

/// Text form: `row col value` per line, 17 significant digits.
pub fn triplets_to_text<T: Real>(trip: &[(u32, u32, T)]) -> String {
    let mut s = String::with_capacity(trip.len() * 24);
    for (r, c, v) in trip {
        s.push_str(&format!("{r} {c} {v:.17e}\n"));
    }
    s
}
