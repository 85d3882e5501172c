//! Per-macro-cell constant group stencils, matrix-free application of the
//! block Stokes operator, interface rows, right-hand-side assembly with
//! Dirichlet lifting, and mass-weighted inner products.
//!
//! Inside a macro-cell every unknown group has one constant stencil per
//! operator block (constant coefficients on a translation-invariant
//! refinement). Rows of dofs owned by interface primitives are assembled
//! per-dof from all adjacent macro-cells, stored once at the owner with
//! columns addressed by owner references.

use std::collections::BTreeMap;

use crate::cost::{FlopTally, Kind};
use crate::fem::{
    local_divergence, local_mass, local_pspg, local_stiffness, quadrature, AffineMap, LocalMatrix,
    Space,
};
use crate::grid::{GridFunction, LevelLayout, OwnerRef};
use crate::mesh::{MacroMesh, PrimitiveGraph};
use crate::refine::{
    cells_around_node, dbl_is_interior, micro_coords, node_dbl, node_from_dbl, refine_micro_cells,
    DofGroup, MicroCell,
};
use crate::scalar::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockId {
    A,
    /// Divergence row block for one velocity component.
    B(usize),
    /// Gradient (transposed divergence) block for one velocity component.
    Bt(usize),
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    Set,
    Add,
    Sub,
}

#[derive(Debug, Clone, Copy)]
pub struct StencilEntry<T> {
    pub src: u8,
    pub delta: [i16; 3],
    pub w: T,
}

/// Constant stencils of one macro-cell: target-group rows for each block.
#[derive(Debug, Clone)]
pub struct CellStencils<T> {
    pub a: [Vec<StencilEntry<T>>; 8],
    pub bt: [[Vec<StencilEntry<T>>; 8]; 3],
    pub b: [Vec<StencilEntry<T>>; 3],
    pub c: Vec<StencilEntry<T>>,
    pub a_diag: [T; 8],
}

/// Fully assembled row of an interface-owned dof.
#[derive(Debug, Clone)]
pub struct IfaceRow<T> {
    pub owner: OwnerRef,
    /// Free columns including the diagonal.
    pub cols: Vec<(OwnerRef, T)>,
    /// Dirichlet columns removed by symmetric elimination; used only to fold
    /// boundary data into the right-hand side.
    pub dropped: Vec<(OwnerRef, T)>,
    pub diag: T,
    /// Ghost mirror slots of this dof: (cell, group index, lattice linear).
    pub aliases: Vec<(u32, u8, u32)>,
}

#[derive(Debug)]
pub enum OpError {
    LevelTooCoarse(u32),
}

impl std::fmt::Display for OpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OpError::LevelTooCoarse(l) => {
                write!(f, "stencil machinery requires level >= 2, got {l}")
            }
        }
    }
}

impl std::error::Error for OpError {}

/// The matrix-free Stokes operator of one level.
pub struct StokesOperator<T> {
    pub kind: Kind,
    pub level: u32,
    pub layout: LevelLayout,
    pub cell_corners: Vec<[[T; 3]; 4]>,
    pub micro_cells: Vec<MicroCell>,
    pub cells: Vec<CellStencils<T>>,
    pub iface_a: Vec<IfaceRow<T>>,
    pub iface_b: [Vec<IfaceRow<T>>; 3],
    pub iface_bt: [Vec<IfaceRow<T>>; 3],
    pub iface_c: Vec<IfaceRow<T>>,
    /// Dirichlet-owned velocity dofs (identity rows).
    pub dirichlet_rows: Vec<OwnerRef>,
    pub diag_a: GridFunction<T>,
    /// Diagonal of the PSPG stabilization matrix on the pressure space; built
    /// for both discretizations (the Uzawa Schur approximation needs it even
    /// when the system block C is absent).
    pub diag_c_pspg: GridFunction<T>,
    /// Lumped P1 mass diagonal; doubles as the pressure load vector of ones.
    pub lumped_mass_p1: GridFunction<T>,
    /// Per cell, per class consistent mass matrices (velocity space and P1).
    pub mass_vel: Vec<[LocalMatrix<T>; 6]>,
    pub mass_p1: Vec<[LocalMatrix<T>; 6]>,
    pub local_a_vel: Vec<[LocalMatrix<T>; 6]>,
    pub local_div: Vec<[[LocalMatrix<T>; 3]; 6]>,
    pub local_pspg: Vec<[LocalMatrix<T>; 6]>,
    pub volume: T,
    pub fully_dirichlet: bool,
}

pub fn velocity_space(kind: Kind) -> Space {
    kind.velocity_space()
}

fn groups_of(space: Space) -> &'static [DofGroup] {
    match space {
        Space::P1 => &[DofGroup::Vertex],
        Space::P2 => &DofGroup::ALL,
    }
}

fn interior_shift(g: DofGroup) -> [i64; 3] {
    let p = g.parity();
    [1 - p[0], 1 - p[1], 1 - p[2]]
}

fn nodes_of_space(mc: &MicroCell, space: Space) -> Vec<[i64; 3]> {
    let all = mc.p2_nodes_dbl();
    match space {
        Space::P1 => all[..4].to_vec(),
        Space::P2 => all.to_vec(),
    }
}

/// Class-local matrices for one macro-cell (shared by all translates).
fn class_maps<T: Real>(corners: &[[T; 3]; 4], level: u32) -> [AffineMap<T>; 6] {
    std::array::from_fn(|class| {
        let mc = MicroCell { class: class as u8, anchor: [0, 0, 0] };
        let verts = mc.vertices();
        let phys: [[T; 3]; 4] =
            std::array::from_fn(|i| micro_coords(corners, [2 * verts[i][0], 2 * verts[i][1], 2 * verts[i][2]], level));
        AffineMap::from_vertices(&phys)
    })
}

impl<T: Real> StokesOperator<T> {
    pub fn assemble(
        mesh: &MacroMesh<T>,
        graph: &PrimitiveGraph,
        kind: Kind,
        level: u32,
    ) -> Result<StokesOperator<T>, OpError> {
        if level < 2 {
            return Err(OpError::LevelTooCoarse(level));
        }
        let layout = LevelLayout::build(graph, level);
        let vel = velocity_space(kind);
        let micro = refine_micro_cells(level);
        let boundary_micro: Vec<MicroCell> = micro
            .iter()
            .copied()
            .filter(|mc| {
                mc.p2_nodes_dbl().iter().any(|&d| !dbl_is_interior(d, level))
            })
            .collect();

        let cell_corners: Vec<[[T; 3]; 4]> = graph
            .cells
            .iter()
            .map(|c| std::array::from_fn(|i| mesh.vertices[c.verts[i]]))
            .collect();

        let mut cells = Vec::with_capacity(graph.cells.len());
        let mut local_a_vel = Vec::new();
        let mut local_div = Vec::new();
        let mut local_pspg_all = Vec::new();
        let mut mass_vel = Vec::new();
        let mut mass_p1 = Vec::new();

        for corners in &cell_corners {
            let maps = class_maps(corners, level);
            let a: [LocalMatrix<T>; 6] = std::array::from_fn(|s| local_stiffness(vel, &maps[s]));
            let div: [[LocalMatrix<T>; 3]; 6] = std::array::from_fn(|s| local_divergence(vel, &maps[s]));
            let pspg: [LocalMatrix<T>; 6] = std::array::from_fn(|s| local_pspg(&maps[s]));
            let mv: [LocalMatrix<T>; 6] = std::array::from_fn(|s| local_mass(vel, &maps[s], false));
            let mp: [LocalMatrix<T>; 6] = std::array::from_fn(|s| local_mass(Space::P1, &maps[s], false));
            cells.push(assemble_cell_stencils(kind, level, &a, &div, &pspg));
            local_a_vel.push(a);
            local_div.push(div);
            local_pspg_all.push(pspg);
            mass_vel.push(mv);
            mass_p1.push(mp);
        }

        let mut op = StokesOperator {
            kind,
            level,
            layout,
            cell_corners,
            micro_cells: micro,
            cells,
            iface_a: Vec::new(),
            iface_b: [Vec::new(), Vec::new(), Vec::new()],
            iface_bt: [Vec::new(), Vec::new(), Vec::new()],
            iface_c: Vec::new(),
            dirichlet_rows: Vec::new(),
            diag_a: GridFunction::new_placeholder(),
            diag_c_pspg: GridFunction::new_placeholder(),
            lumped_mass_p1: GridFunction::new_placeholder(),
            mass_vel,
            mass_p1,
            local_a_vel,
            local_div,
            local_pspg: local_pspg_all,
            volume: (0..graph.cells.len())
                .map(|c| mesh.cell_volume6(c).abs() / real(6.0))
                .fold(T::zero(), |a, b| a + b),
            fully_dirichlet: graph.faces.iter().filter(|f| f.on_boundary).all(|f| f.dirichlet),
        };

        op.assemble_interface_rows(graph, &boundary_micro);
        op.assemble_diagonals(graph);
        op.dirichlet_rows = op
            .layout
            .owned(vel)
            .iter()
            .zip(op.layout.dirichlet(vel))
            .filter(|(_, &d)| d)
            .map(|(dof, _)| dof.owner)
            .collect();
        Ok(op)
    }

    pub fn velocity_space(&self) -> Space {
        velocity_space(self.kind)
    }

    /// Layout, volumes and mass matrices only; no stencils or interface rows.
    /// Enough for mass-norm evaluation on a level that is never solved on
    /// (the error metric interpolates to level + 1).
    pub fn assemble_mass_only(
        mesh: &MacroMesh<T>,
        graph: &PrimitiveGraph,
        kind: Kind,
        level: u32,
    ) -> StokesOperator<T> {
        let layout = LevelLayout::build(graph, level);
        let vel = velocity_space(kind);
        let micro = refine_micro_cells(level);
        let cell_corners: Vec<[[T; 3]; 4]> = graph
            .cells
            .iter()
            .map(|c| std::array::from_fn(|i| mesh.vertices[c.verts[i]]))
            .collect();
        let mut mass_vel: Vec<[LocalMatrix<T>; 6]> = Vec::new();
        let mut mass_p1: Vec<[LocalMatrix<T>; 6]> = Vec::new();
        for corners in &cell_corners {
            let maps = class_maps(corners, level);
            mass_vel.push(std::array::from_fn(|s| local_mass(vel, &maps[s], false)));
            mass_p1.push(std::array::from_fn(|s| local_mass(Space::P1, &maps[s], false)));
        }
        let mut lumped = GridFunction::new(&layout, Space::P1);
        for (ci, _) in cell_corners.iter().enumerate() {
            for mc in &micro {
                let nodes = mc.p2_nodes_dbl();
                for k in 0..4 {
                    let (g, idx) = node_from_dbl(nodes[k]);
                    let lin = layout.lattices[g.index()].linear(idx);
                    let mut row = T::zero();
                    for m in 0..4 {
                        row += mass_p1[ci][mc.class as usize].at(k, m);
                    }
                    lumped.cell[ci][0][lin] += row;
                }
            }
        }
        lumped.reduce_interface_sums(&layout);
        StokesOperator {
            kind,
            level,
            layout,
            cell_corners,
            micro_cells: micro,
            cells: Vec::new(),
            iface_a: Vec::new(),
            iface_b: [Vec::new(), Vec::new(), Vec::new()],
            iface_bt: [Vec::new(), Vec::new(), Vec::new()],
            iface_c: Vec::new(),
            dirichlet_rows: Vec::new(),
            diag_a: GridFunction::new_placeholder(),
            diag_c_pspg: GridFunction::new_placeholder(),
            lumped_mass_p1: lumped,
            mass_vel,
            mass_p1,
            local_a_vel: Vec::new(),
            local_div: Vec::new(),
            local_pspg: Vec::new(),
            volume: (0..graph.cells.len())
                .map(|c| mesh.cell_volume6(c).abs() / real(6.0))
                .fold(T::zero(), |a, b| a + b),
            fully_dirichlet: graph.faces.iter().filter(|f| f.on_boundary).all(|f| f.dirichlet),
        }
    }

    fn is_dirichlet_owner(graph: &PrimitiveGraph, owner: &OwnerRef) -> bool {
        match owner {
            OwnerRef::Vertex(v) => graph.vertices[*v].dirichlet,
            OwnerRef::Edge(e, _) => graph.edges[*e].dirichlet,
            OwnerRef::Face(f, _) => graph.faces[*f].dirichlet,
            OwnerRef::Cell(..) => false,
        }
    }

    fn assemble_interface_rows(&mut self, graph: &PrimitiveGraph, boundary_micro: &[MicroCell]) {
        let vel = self.velocity_space();
        type RowMap<T> = BTreeMap<OwnerRef, (BTreeMap<OwnerRef, T>, BTreeMap<OwnerRef, T>)>;
        let mut a_rows: RowMap<T> = BTreeMap::new();
        let mut b_rows: [RowMap<T>; 3] = [BTreeMap::new(), BTreeMap::new(), BTreeMap::new()];
        let mut bt_rows: [RowMap<T>; 3] = [BTreeMap::new(), BTreeMap::new(), BTreeMap::new()];
        let mut c_rows: RowMap<T> = BTreeMap::new();

        for ci in 0..self.cells.len() {
            for mc in boundary_micro {
                let vel_nodes = nodes_of_space(mc, vel);
                let p_nodes = nodes_of_space(mc, Space::P1);
                let vel_int: Vec<bool> =
                    vel_nodes.iter().map(|&d| dbl_is_interior(d, self.level)).collect();
                let p_int: Vec<bool> =
                    p_nodes.iter().map(|&d| dbl_is_interior(d, self.level)).collect();
                let vel_owner: Vec<OwnerRef> = vel_nodes
                    .iter()
                    .map(|&d| self.layout.owner_of(graph, ci, d, Space::P2))
                    .collect();
                let p_owner: Vec<OwnerRef> = p_nodes
                    .iter()
                    .map(|&d| self.layout.owner_of(graph, ci, d, Space::P2))
                    .collect();
                let vel_dir: Vec<bool> =
                    vel_owner.iter().map(|o| Self::is_dirichlet_owner(graph, o)).collect();

                let cls = mc.class as usize;
                let la = &self.local_a_vel[ci][cls];
                let ldiv = &self.local_div[ci][cls];
                let lpspg = &self.local_pspg[ci][cls];

                // A rows (velocity x velocity)
                for (li, (&row_int, &row_dir)) in vel_int.iter().zip(&vel_dir).enumerate() {
                    if row_int || row_dir {
                        continue;
                    }
                    let entry = a_rows.entry(vel_owner[li]).or_default();
                    for lj in 0..vel_nodes.len() {
                        let w = la.at(li, lj);
                        let side = if vel_dir[lj] { &mut entry.1 } else { &mut entry.0 };
                        *side.entry(vel_owner[lj]).or_insert_with(T::zero) += w;
                    }
                }
                // B rows (pressure x velocity), per direction
                for (k, &row_int) in p_int.iter().enumerate() {
                    if row_int {
                        continue;
                    }
                    for d in 0..3 {
                        let entry = b_rows[d].entry(p_owner[k]).or_default();
                        for lj in 0..vel_nodes.len() {
                            let w = ldiv[d].at(k, lj);
                            let side = if vel_dir[lj] { &mut entry.1 } else { &mut entry.0 };
                            *side.entry(vel_owner[lj]).or_insert_with(T::zero) += w;
                        }
                    }
                }
                // Bt rows (velocity x pressure): transpose of the divergence
                for (li, (&row_int, &row_dir)) in vel_int.iter().zip(&vel_dir).enumerate() {
                    if row_int || row_dir {
                        continue;
                    }
                    for d in 0..3 {
                        let entry = bt_rows[d].entry(vel_owner[li]).or_default();
                        for (k, po) in p_owner.iter().enumerate() {
                            *entry.0.entry(*po).or_insert_with(T::zero) += ldiv[d].at(k, li);
                        }
                    }
                }
                // C rows (pressure x pressure), stabilized kind only
                if self.kind == Kind::P1P1 {
                    for (k, &row_int) in p_int.iter().enumerate() {
                        if row_int {
                            continue;
                        }
                        let entry = c_rows.entry(p_owner[k]).or_default();
                        for (m, po) in p_owner.iter().enumerate() {
                            *entry.0.entry(*po).or_insert_with(T::zero) += lpspg.at(k, m);
                        }
                    }
                }
            }
        }

        let alias_map: BTreeMap<OwnerRef, Vec<(u32, u8, u32)>> = self
            .layout
            .interface_dofs
            .iter()
            .map(|(o, v)| (*o, v.iter().map(|&(c, g, l)| (c, g.index() as u8, l)).collect()))
            .collect();

        let finalize = |rows: RowMap<T>| -> Vec<IfaceRow<T>> {
            rows.into_iter()
                .map(|(owner, (cols, dropped))| {
                    let diag = cols.get(&owner).copied().unwrap_or_else(T::zero);
                    IfaceRow {
                        owner,
                        cols: cols.into_iter().collect(),
                        dropped: dropped.into_iter().collect(),
                        diag,
                        aliases: alias_map.get(&owner).cloned().unwrap_or_default(),
                    }
                })
                .collect()
        };

        self.iface_a = finalize(a_rows);
        let [b0, b1, b2] = b_rows;
        self.iface_b = [finalize(b0), finalize(b1), finalize(b2)];
        let [t0, t1, t2] = bt_rows;
        self.iface_bt = [finalize(t0), finalize(t1), finalize(t2)];
        self.iface_c = finalize(c_rows);
    }

    fn assemble_diagonals(&mut self, graph: &PrimitiveGraph) {
        let vel = self.velocity_space();
        let mut diag_a = GridFunction::new(&self.layout, vel);
        let mut diag_c = GridFunction::new(&self.layout, Space::P1);
        let mut lumped = GridFunction::new(&self.layout, Space::P1);
        for ci in 0..self.cells.len() {
            for mc in &self.micro_cells {
                let cls = mc.class as usize;
                let vn = nodes_of_space(mc, vel);
                for (li, &d) in vn.iter().enumerate() {
                    let (g, idx) = node_from_dbl(d);
                    let lin = self.layout.lattices[g.index()].linear(idx);
                    diag_a.cell[ci][g.index()][lin] += self.local_a_vel[ci][cls].at(li, li);
                }
                let pn = nodes_of_space(mc, Space::P1);
                for (k, &d) in pn.iter().enumerate() {
                    let (g, idx) = node_from_dbl(d);
                    debug_assert!(g == DofGroup::Vertex);
                    let lin = self.layout.lattices[0].linear(idx);
                    diag_c.cell[ci][0][lin] += self.local_pspg[ci][cls].at(k, k);
                    // lumped mass: row sums of the consistent P1 mass
                    let mut row = T::zero();
                    for m in 0..4 {
                        row += self.mass_p1[ci][cls].at(k, m);
                    }
                    lumped.cell[ci][0][lin] += row;
                }
            }
        }
        diag_a.reduce_interface_sums(&self.layout);
        diag_c.reduce_interface_sums(&self.layout);
        lumped.reduce_interface_sums(&self.layout);
        // identity rows for constrained velocity dofs
        let owned: Vec<(OwnerRef, bool)> = self
            .layout
            .owned(vel)
            .iter()
            .zip(self.layout.dirichlet(vel))
            .map(|(d, &m)| (d.owner, m))
            .collect();
        for (owner, m) in owned {
            if m {
                diag_a.write_owner(&owner, T::one());
            }
        }
        diag_a.ghost_update(&self.layout);
        let _ = graph;
        self.diag_a = diag_a;
        self.diag_c_pspg = diag_c;
        self.lumped_mass_p1 = lumped;
    }

    // -----------------------------------------------------------------
    // application
    // -----------------------------------------------------------------

    fn stencil_of(&self, ci: usize, block: BlockId, target: DofGroup) -> &[StencilEntry<T>] {
        let cs = &self.cells[ci];
        match block {
            BlockId::A => &cs.a[target.index()],
            BlockId::B(d) => {
                debug_assert!(target == DofGroup::Vertex);
                &cs.b[d]
            }
            BlockId::Bt(d) => &cs.bt[d][target.index()],
            BlockId::C => {
                debug_assert!(target == DofGroup::Vertex);
                &cs.c
            }
        }
    }

    fn iface_rows_of(&self, block: BlockId) -> &[IfaceRow<T>] {
        match block {
            BlockId::A => &self.iface_a,
            BlockId::B(d) => &self.iface_b[d],
            BlockId::Bt(d) => &self.iface_bt[d],
            BlockId::C => &self.iface_c,
        }
    }

    fn target_groups(&self, block: BlockId) -> &'static [DofGroup] {
        match block {
            BlockId::A | BlockId::Bt(_) => groups_of(self.velocity_space()),
            BlockId::B(_) | BlockId::C => &[DofGroup::Vertex],
        }
    }

    /// dst = / += / -= block * src over all owned rows; Dirichlet velocity rows
    /// act as identity (A, `Set` mode) or are left untouched.
    pub fn apply_block(
        &self,
        block: BlockId,
        src: &GridFunction<T>,
        dst: &mut GridFunction<T>,
        mode: ApplyMode,
        tally: &mut FlopTally,
    ) {
        assert!(src.ghosts_clean, "apply_block requires clean ghosts on src");
        let layout = &self.layout;
        for ci in 0..self.cells.len() {
            for &g in self.target_groups(block) {
                let entries = self.stencil_of(ci, block, g);
                if entries.is_empty() {
                    continue;
                }
                apply_cell_stencil(layout, ci, g, entries, src, dst, mode, tally);
            }
        }
        // interface rows
        for row in self.iface_rows_of(block) {
            let mut acc = T::zero();
            for (col, w) in &row.cols {
                acc += *w * src.read_owner(col);
            }
            tally.other += (2 * row.cols.len()).saturating_sub(1) as u64;
            let v = match mode {
                ApplyMode::Set => acc,
                ApplyMode::Add => dst.read_owner(&row.owner) + acc,
                ApplyMode::Sub => dst.read_owner(&row.owner) - acc,
            };
            dst.write_owner(&row.owner, v);
        }
        // Dirichlet velocity rows
        if matches!(block, BlockId::A) && mode == ApplyMode::Set {
            for o in &self.dirichlet_rows {
                let v = src.read_owner(o);
                dst.write_owner(o, v);
            }
        } else if matches!(block, BlockId::Bt(_)) && mode == ApplyMode::Set {
            for o in &self.dirichlet_rows {
                dst.write_owner(o, T::zero());
            }
        }
        dst.ghost_update(layout);
    }

    /// y = Stokes * x with the saddle-point block layout
    /// `[A B^T; B -C]`; Dirichlet velocity rows are identity rows.
    pub fn apply_stokes(
        &self,
        x: &StokesVec<T>,
        y: &mut StokesVec<T>,
        tally: &mut FlopTally,
    ) {
        for d in 0..3 {
            self.apply_block(BlockId::A, &x.u[d], &mut y.u[d], ApplyMode::Set, tally);
            // Bt's interior kernel and interface rows never touch constrained
            // rows, so the identity rows written by A stay intact
            self.apply_block(BlockId::Bt(d), &x.p, &mut y.u[d], ApplyMode::Add, tally);
        }
        self.apply_block(BlockId::B(0), &x.u[0], &mut y.p, ApplyMode::Set, tally);
        self.apply_block(BlockId::B(1), &x.u[1], &mut y.p, ApplyMode::Add, tally);
        self.apply_block(BlockId::B(2), &x.u[2], &mut y.p, ApplyMode::Add, tally);
        if self.kind == Kind::P1P1 {
            self.apply_block(BlockId::C, &x.p, &mut y.p, ApplyMode::Sub, tally);
        }
    }

    // -----------------------------------------------------------------
    // mass inner products and mean projection
    // -----------------------------------------------------------------

    /// `x^T M y` for two scalar functions of the same space (consistent mass).
    pub fn mass_dot(&self, x: &GridFunction<T>, y: &GridFunction<T>) -> T {
        assert!(x.space == y.space && x.ghosts_clean && y.ghosts_clean);
        let mats = if x.space == Space::P1 { &self.mass_p1 } else { &self.mass_vel };
        let mut acc = T::zero();
        for ci in 0..self.cell_corners.len() {
            for mc in &self.micro_cells {
                let nodes = nodes_of_space(mc, x.space);
                let m = &mats[ci][mc.class as usize];
                for (li, &di) in nodes.iter().enumerate() {
                    let (gi, ii) = node_from_dbl(di);
                    let xi = x.cell[ci][gi.index()][self.layout.lattices[gi.index()].linear(ii)];
                    let mut row = T::zero();
                    for (lj, &dj) in nodes.iter().enumerate() {
                        let (gj, ij) = node_from_dbl(dj);
                        let yj =
                            y.cell[ci][gj.index()][self.layout.lattices[gj.index()].linear(ij)];
                        row += m.at(li, lj) * yj;
                    }
                    acc += xi * row;
                }
            }
        }
        acc
    }

    /// Mass norm of a velocity field (three components).
    pub fn velocity_mass_norm(&self, u: &[GridFunction<T>; 3]) -> T {
        let mut acc = T::zero();
        for c in u {
            acc += self.mass_dot(c, c);
        }
        acc.sqrt()
    }

    pub fn pressure_mass_norm(&self, p: &GridFunction<T>) -> T {
        self.mass_dot(p, p).sqrt()
    }

    /// p <- p - (1^T M p / 1^T M 1) 1. Uses the lumped diagonal, which equals
    /// the consistent-mass row sums exactly.
    pub fn project_pressure_mean_zero(&self, p: &mut GridFunction<T>) {
        let m = &self.lumped_mass_p1;
        let mut num = T::zero();
        for d in self.layout.owned(Space::P1) {
            num += m.read_owner(&d.owner) * p.read_owner(&d.owner);
        }
        let c = num / self.volume;
        p.map_owned(&self.layout, |_, v| v - c);
    }
}

/// Interior constant-stencil kernel for one (cell, target group).
#[allow(clippy::too_many_arguments)]
fn apply_cell_stencil<T: Real>(
    layout: &LevelLayout,
    ci: usize,
    g: DofGroup,
    entries: &[StencilEntry<T>],
    src: &GridFunction<T>,
    dst: &mut GridFunction<T>,
    mode: ApplyMode,
    tally: &mut FlopTally,
) {
    let int_lat = &layout.interior_lattices[g.index()];
    if int_lat.len == 0 {
        return;
    }
    let tgt_lat = &layout.lattices[g.index()];
    let shift = interior_shift(g);
    let bound = int_lat.bound;
    let ne = entries.len();
    let mut offs: Vec<isize> = vec![0; ne];
    let src_cell = &src.cell[ci];
    let mut written = 0u64;
    for kk in 0..=bound {
        let k = kk + shift[2];
        for jj in 0..=(bound - kk) {
            let j = jj + shift[1];
            let row_len = (bound - kk - jj + 1) as usize;
            let tgt_base = tgt_lat.row(j, k) + shift[0] as usize;
            for (e, o) in entries.iter().zip(offs.iter_mut()) {
                let sl = &layout.lattices[e.src as usize];
                let sb = sl.row(j + e.delta[1] as i64, k + e.delta[2] as i64) as isize
                    + (shift[0] + e.delta[0] as i64) as isize;
                *o = sb - tgt_base as isize;
            }
            let dst_arr = &mut dst.cell[ci][g.index()];
            for t in 0..row_len {
                let tl = tgt_base + t;
                let mut acc = T::zero();
                for (e, o) in entries.iter().zip(offs.iter()) {
                    let si = (tl as isize + *o) as usize;
                    acc += e.w * src_cell[e.src as usize][si];
                }
                match mode {
                    ApplyMode::Set => dst_arr[tl] = acc,
                    ApplyMode::Add => dst_arr[tl] += acc,
                    ApplyMode::Sub => dst_arr[tl] -= acc,
                }
            }
            written += row_len as u64;
        }
    }
    // n multiplications and n-1 additions per row, plus one add in
    // accumulating modes
    let per_row = match mode {
        ApplyMode::Set => (2 * ne).saturating_sub(1) as u64,
        _ => (2 * ne) as u64,
    };
    tally.kernel += written * per_row;
}

fn assemble_cell_stencils<T: Real>(
    kind: Kind,
    level: u32,
    a_loc: &[LocalMatrix<T>; 6],
    div_loc: &[[LocalMatrix<T>; 3]; 6],
    pspg_loc: &[LocalMatrix<T>; 6],
) -> CellStencils<T> {
    let vel = velocity_space(kind);
    let mut cs = CellStencils {
        a: Default::default(),
        bt: Default::default(),
        b: Default::default(),
        c: Vec::new(),
        a_diag: [T::zero(); 8],
    };

    // representative interior dof per target group
    let rep = |g: DofGroup| -> Option<[i64; 3]> {
        let shift = interior_shift(g);
        let bound = match g {
            DofGroup::Vertex => (1i64 << level) - 4,
            DofGroup::Xyz => (1i64 << level) - 2,
            _ => (1i64 << level) - 3,
        };
        if bound < 0 {
            return None;
        }
        Some(node_dbl(g, [shift[0], shift[1], shift[2]]))
    };

    type Key = (u8, [i16; 3]);
    let collect = |map: BTreeMap<Key, T>| -> Vec<StencilEntry<T>> {
        map.into_iter()
            .map(|((src, delta), w)| StencilEntry { src, delta, w })
            .collect()
    };

    for &g in groups_of(vel) {
        let Some(rep_dbl) = rep(g) else { continue };
        let (_, rep_idx) = node_from_dbl(rep_dbl);
        let mut a_map: BTreeMap<Key, T> = BTreeMap::new();
        let mut bt_maps: [BTreeMap<Key, T>; 3] = Default::default();
        for mc in cells_around_node(rep_dbl, level) {
            let nodes = nodes_of_space(&mc, vel);
            let li = nodes.iter().position(|&d| d == rep_dbl).unwrap();
            let la = &a_loc[mc.class as usize];
            for (lj, &dj) in nodes.iter().enumerate() {
                let (sg, sidx) = node_from_dbl(dj);
                let delta = [
                    (sidx[0] - rep_idx[0]) as i16,
                    (sidx[1] - rep_idx[1]) as i16,
                    (sidx[2] - rep_idx[2]) as i16,
                ];
                *a_map.entry((sg.index() as u8, delta)).or_insert_with(T::zero) +=
                    la.at(li, lj);
            }
            let p_nodes = nodes_of_space(&mc, Space::P1);
            for d in 0..3 {
                for (k, &dk) in p_nodes.iter().enumerate() {
                    let (sg, sidx) = node_from_dbl(dk);
                    let delta = [
                        (sidx[0] - rep_idx[0]) as i16,
                        (sidx[1] - rep_idx[1]) as i16,
                        (sidx[2] - rep_idx[2]) as i16,
                    ];
                    *bt_maps[d].entry((sg.index() as u8, delta)).or_insert_with(T::zero) +=
                        div_loc[mc.class as usize][d].at(k, li);
                }
            }
        }
        cs.a_diag[g.index()] =
            a_map.get(&(g.index() as u8, [0, 0, 0])).copied().unwrap_or_else(T::zero);
        cs.a[g.index()] = collect(a_map);
        for d in 0..3 {
            cs.bt[d][g.index()] = collect(std::mem::take(&mut bt_maps[d]));
        }
    }

    // pressure rows: B per direction, plus C for the stabilized pairing
    if let Some(rep_dbl) = rep(DofGroup::Vertex) {
        let (_, rep_idx) = node_from_dbl(rep_dbl);
        let mut b_maps: [BTreeMap<Key, T>; 3] = Default::default();
        let mut c_map: BTreeMap<Key, T> = BTreeMap::new();
        for mc in cells_around_node(rep_dbl, level) {
            let p_nodes = nodes_of_space(&mc, Space::P1);
            let k = p_nodes.iter().position(|&d| d == rep_dbl).unwrap();
            let v_nodes = nodes_of_space(&mc, vel);
            for d in 0..3 {
                for (lj, &dj) in v_nodes.iter().enumerate() {
                    let (sg, sidx) = node_from_dbl(dj);
                    let delta = [
                        (sidx[0] - rep_idx[0]) as i16,
                        (sidx[1] - rep_idx[1]) as i16,
                        (sidx[2] - rep_idx[2]) as i16,
                    ];
                    *b_maps[d].entry((sg.index() as u8, delta)).or_insert_with(T::zero) +=
                        div_loc[mc.class as usize][d].at(k, lj);
                }
            }
            if kind == Kind::P1P1 {
                for (m, &dm) in p_nodes.iter().enumerate() {
                    let (sg, sidx) = node_from_dbl(dm);
                    let delta = [
                        (sidx[0] - rep_idx[0]) as i16,
                        (sidx[1] - rep_idx[1]) as i16,
                        (sidx[2] - rep_idx[2]) as i16,
                    ];
                    *c_map.entry((sg.index() as u8, delta)).or_insert_with(T::zero) +=
                        pspg_loc[mc.class as usize].at(k, m);
                }
            }
        }
        for d in 0..3 {
            cs.b[d] = collect(std::mem::take(&mut b_maps[d]));
        }
        cs.c = collect(c_map);
    }
    cs
}

// ---------------------------------------------------------------------------
// Stokes vectors and RHS assembly
// ---------------------------------------------------------------------------

/// Velocity components plus pressure on one level.
#[derive(Debug, Clone)]
pub struct StokesVec<T> {
    pub u: [GridFunction<T>; 3],
    pub p: GridFunction<T>,
}

impl<T: Real> StokesVec<T> {
    pub fn new(layout: &LevelLayout, kind: Kind) -> StokesVec<T> {
        let vel = velocity_space(kind);
        StokesVec {
            u: std::array::from_fn(|_| GridFunction::new(layout, vel)),
            p: GridFunction::new(layout, Space::P1),
        }
    }

    pub fn fill(&mut self, v: T) {
        for c in &mut self.u {
            c.fill(v);
        }
        self.p.fill(v);
    }

    pub fn zero_dirichlet(&mut self, layout: &LevelLayout) {
        for c in &mut self.u {
            c.zero_dirichlet(layout);
        }
    }
}

/// y += a x (componentwise over owned dofs).
pub fn stokes_axpy<T: Real>(layout: &LevelLayout, a: T, x: &StokesVec<T>, y: &mut StokesVec<T>) {
    for d in 0..3 {
        crate::grid::axpy(layout, a, &x.u[d], &mut y.u[d]);
    }
    crate::grid::axpy(layout, a, &x.p, &mut y.p);
}

/// Euclidean residual norms (velocity block, pressure block).
pub fn residual_norms<T: Real>(layout: &LevelLayout, r: &StokesVec<T>) -> (T, T) {
    let mut ru = T::zero();
    for d in 0..3 {
        ru += crate::grid::dot(layout, &r.u[d], &r.u[d]);
    }
    let rp = crate::grid::dot(layout, &r.p, &r.p);
    (ru.sqrt(), rp.sqrt())
}

/// Assembled right-hand side: load vector minus Dirichlet lifting, pressure
/// block with divergence fold and (stabilized kind) the consistent PSPG
/// forcing term, plus the boundary interpolant itself.
pub struct RhsBundle<T> {
    pub b: StokesVec<T>,
    /// The Dirichlet interpolant of the boundary data (zero at free dofs);
    /// total solution = homogeneous solution + lift.
    pub lift: [GridFunction<T>; 3],
}

impl<T: Real> StokesOperator<T> {
    /// Assemble the right-hand side for forcing `f` and Dirichlet data `w`.
    pub fn assemble_rhs(
        &self,
        forcing: &dyn Fn([T; 3]) -> [T; 3],
        boundary: &dyn Fn([T; 3]) -> [T; 3],
        tally: &mut FlopTally,
    ) -> RhsBundle<T> {
        let vel = self.velocity_space();
        let layout = &self.layout;
        let mut b = StokesVec::new(layout, self.kind);
        let mut lift: [GridFunction<T>; 3] =
            std::array::from_fn(|_| GridFunction::new(layout, vel));

        // boundary interpolant
        let owned: Vec<(OwnerRef, usize, [i64; 3], bool)> = layout
            .owned(vel)
            .iter()
            .zip(layout.dirichlet(vel))
            .map(|(d, &m)| (d.owner, d.cell, d.dbl, m))
            .collect();
        for (owner, cell, dbl, is_d) in &owned {
            if !is_d {
                continue;
            }
            let x = micro_coords(&self.cell_corners[*cell], *dbl, self.level);
            let w = boundary(x);
            for d in 0..3 {
                lift[d].write_owner(owner, w[d]);
            }
        }
        for l in &mut lift {
            l.ghost_update(layout);
        }

        // load vector (and PSPG forcing correction) by degree-5 quadrature
        let quad = quadrature::<T>(5);
        let delta = real::<T>(1.0 / 12.0);
        for ci in 0..self.cells.len() {
            let corners = &self.cell_corners[ci];
            for mc in &self.micro_cells {
                let verts = mc.vertices();
                let phys: [[T; 3]; 4] = std::array::from_fn(|i| {
                    micro_coords(corners, [2 * verts[i][0], 2 * verts[i][1], 2 * verts[i][2]], self.level)
                });
                let map = AffineMap::from_vertices(&phys);
                let scale = map.det.abs();
                let nodes = nodes_of_space(mc, vel);
                let h2 = if self.kind == Kind::P1P1 {
                    map.volume().powf(real(2.0 / 3.0))
                } else {
                    T::zero()
                };
                for (q, wq) in quad.points.iter().zip(&quad.weights) {
                    let x = map.apply(*q);
                    let fv = forcing(x);
                    let phi = crate::fem::basis_values(vel, *q);
                    for (li, &nd) in nodes.iter().enumerate() {
                        let (g, idx) = node_from_dbl(nd);
                        let lin = layout.lattices[g.index()].linear(idx);
                        for d in 0..3 {
                            b.u[d].cell[ci][g.index()][lin] += *wq * scale * phi[li] * fv[d];
                        }
                    }
                    if self.kind == Kind::P1P1 {
                        // g_k -= delta h^2 (f, grad psi_k)
                        let grads = crate::fem::basis_gradients(Space::P1, *q);
                        for k in 0..4 {
                            let gk = map.push_gradient(grads[k]);
                            let dot = gk[0] * fv[0] + gk[1] * fv[1] + gk[2] * fv[2];
                            let (g, idx) = node_from_dbl([2 * verts[k][0], 2 * verts[k][1], 2 * verts[k][2]]);
                            let lin = layout.lattices[g.index()].linear(idx);
                            b.p.cell[ci][g.index()][lin] -= *wq * scale * delta * h2 * dot;
                        }
                    }
                }
            }
        }
        for d in 0..3 {
            b.u[d].reduce_interface_sums(layout);
        }
        b.p.reduce_interface_sums(layout);

        // lifting: f -= A w (interior rows via stencils; interface rows via
        // their dropped columns), g -= B w
        let mut tmp = GridFunction::new(layout, vel);
        for d in 0..3 {
            self.apply_block(BlockId::A, &lift[d], &mut tmp, ApplyMode::Set, tally);
            // interior rows only: subtract kernel result
            for ci in 0..self.cells.len() {
                for &g in groups_of(vel) {
                    subtract_interior(layout, ci, g, &tmp, &mut b.u[d]);
                }
            }
            // interface rows: dropped columns carry the boundary coupling
            for row in &self.iface_a {
                let mut acc = T::zero();
                for (col, w) in &row.dropped {
                    acc += *w * lift[d].read_owner(col);
                }
                let v = b.u[d].read_owner(&row.owner) - acc;
                b.u[d].write_owner(&row.owner, v);
            }
            // pressure block: g -= B_d w_d
            let mut scratch = GridFunction::new(layout, Space::P1);
            self.apply_block(BlockId::B(d), &lift[d], &mut scratch, ApplyMode::Set, tally);
            for ci in 0..self.cells.len() {
                subtract_interior(layout, ci, DofGroup::Vertex, &scratch, &mut b.p);
            }
            for row in &self.iface_b[d] {
                let mut acc = T::zero();
                for (col, w) in &row.dropped {
                    acc += *w * lift[d].read_owner(col);
                }
                // free columns of the interface row act on the lift too (the
                // lift is zero there), so dropping them loses nothing
                let v = b.p.read_owner(&row.owner) - acc;
                b.p.write_owner(&row.owner, v);
            }
        }
        // homogeneous convention: constrained rows carry zero
        for d in 0..3 {
            b.u[d].zero_dirichlet(layout);
            b.u[d].ghost_update(layout);
        }
        b.p.ghost_update(layout);

        // compatibility projection for enclosed flows: remove the component of
        // g along the pressure null space so residuals can reach the solver
        // tolerance
        if self.fully_dirichlet {
            let mut sum_g = T::zero();
            for dof in layout.owned(Space::P1) {
                sum_g += b.p.read_owner(&dof.owner);
            }
            let c = sum_g / self.volume;
            let m = self.lumped_mass_p1.clone();
            b.p.map_owned(layout, |i, v| v - c * m.read_owner(&layout.owned_p1[i].owner));
        }
        RhsBundle { b, lift }
    }
}

/// dst -= src over the interior lattice slots of one (cell, group).
fn subtract_interior<T: Real>(
    layout: &LevelLayout,
    ci: usize,
    g: DofGroup,
    src: &GridFunction<T>,
    dst: &mut GridFunction<T>,
) {
    let int_lat = &layout.interior_lattices[g.index()];
    if int_lat.len == 0 {
        return;
    }
    let lat = &layout.lattices[g.index()];
    let shift = interior_shift(g);
    let bound = int_lat.bound;
    for kk in 0..=bound {
        for jj in 0..=(bound - kk) {
            let base = lat.row(jj + shift[1], kk + shift[2]) + shift[0] as usize;
            let len = (bound - kk - jj + 1) as usize;
            for t in 0..len {
                let v = src.cell[ci][g.index()][base + t];
                dst.cell[ci][g.index()][base + t] -= v;
            }
        }
    }
}
