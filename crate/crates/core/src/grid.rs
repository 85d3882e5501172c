//! Per-level storage: grid functions distributed over the primitive graph.
//!
//! Every dof belongs to exactly one primitive, chosen as the lowest
//! dimensional macro-entity containing it. Macro-cells store full closed
//! lattices per dof group; their non-interior slots are ghost mirrors of the
//! face/edge/vertex owners and are refreshed by `ghost_update`. Interface
//! primitives store flat owner arrays in canonical frames (global vertex ids
//! ascending), so adjacent cells agree on slot addressing without
//! communication.

use crate::fem::Space;
use crate::mesh::PrimitiveGraph;
use crate::refine::{
    closed_bound, dbl_barycentric, dbl_is_interior, node_dbl, DofGroup, TetLattice,
};
use crate::scalar::Real;

/// The owning slot of a dof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OwnerRef {
    Vertex(usize),
    /// (edge primitive, slot): slots are the n-1 interior vertex dofs then the
    /// n on-edge midpoints.
    Edge(usize, usize),
    /// (face primitive, slot): interior vertex dofs, then the three in-face
    /// midpoint orientations.
    Face(usize, usize),
    /// (cell, group, closed-lattice linear index) for cell-interior dofs.
    Cell(usize, DofGroup, usize),
}

/// One owned dof with a designated representative cell frame.
#[derive(Debug, Clone, Copy)]
pub struct OwnedDof {
    pub owner: OwnerRef,
    /// Lowest-id adjacent cell.
    pub cell: usize,
    /// Doubled lattice coordinates in that cell's frame.
    pub dbl: [i64; 3],
}

fn tri_count(bound: i64) -> usize {
    if bound < 0 {
        0
    } else {
        ((bound + 1) * (bound + 2) / 2) as usize
    }
}

/// Linear index in the triangle lattice `{(s,t) : s,t >= 0, s+t <= bound}`,
/// t-major.
fn tri_linear(bound: i64, s: i64, t: i64) -> usize {
    debug_assert!(s >= 0 && t >= 0 && s + t <= bound);
    (t * (bound + 1) - t * (t - 1) / 2 + s) as usize
}

/// Sub-lattice shift of the interior dofs of a group: one minus the parity.
fn interior_shift(g: DofGroup) -> [i64; 3] {
    let p = g.parity();
    [1 - p[0], 1 - p[1], 1 - p[2]]
}

fn interior_bound(g: DofGroup, n: i64) -> i64 {
    match g {
        DofGroup::Vertex => n - 4,
        DofGroup::X | DofGroup::Y | DofGroup::Z => n - 3,
        DofGroup::Xy | DofGroup::Xz | DofGroup::Yz => n - 3,
        DofGroup::Xyz => n - 2,
    }
}

/// Per-(mesh, level) layout: lattice tables, ownership maps, ghost scatter and
/// reduction lists, global numbering, Dirichlet masks.
pub struct LevelLayout {
    pub level: u32,
    pub n: i64,
    pub lattices: [TetLattice; 8],
    pub interior_lattices: [TetLattice; 8],
    /// Per cell, per group: (closed-lattice linear slot, owner) for every
    /// non-interior slot.
    pub cell_ghosts: Vec<[Vec<(u32, OwnerRef)>; 8]>,
    /// Interface dofs in global order with all (cell, group, lattice slot)
    /// aliases; used for additive reduction and write-through.
    pub interface_dofs: Vec<(OwnerRef, Vec<(u32, DofGroup, u32)>)>,
    /// Owned dofs in global numbering order, P2 layout (all groups).
    pub owned_p2: Vec<OwnedDof>,
    /// Owned dofs in global numbering order, P1 layout (vertex group only).
    pub owned_p1: Vec<OwnedDof>,
    /// Dirichlet flag per owned dof (P2 order / P1 order).
    pub dirichlet_p2: Vec<bool>,
    pub dirichlet_p1: Vec<bool>,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub n_faces: usize,
    pub n_cells: usize,
}

impl LevelLayout {
    /// Slots on one edge primitive: interior vertex dofs, then midpoints.
    pub fn edge_len(&self, space: Space) -> usize {
        let nv = (self.n - 1).max(0) as usize;
        match space {
            Space::P1 => nv,
            Space::P2 => nv + self.n as usize,
        }
    }

    /// Slot of a dof on an edge primitive given its doubled coordinate along
    /// the canonical direction (0 at the low-id endpoint, 2n at the other).
    pub fn edge_slot(&self, t_dbl: i64, space: Space) -> usize {
        if t_dbl % 2 == 0 {
            debug_assert!(t_dbl >= 2 && t_dbl <= 2 * self.n - 2);
            (t_dbl / 2 - 1) as usize
        } else {
            debug_assert!(space == Space::P2);
            let nv = (self.n - 1).max(0) as usize;
            nv + ((t_dbl - 1) / 2) as usize
        }
    }

    fn face_block_sizes(&self, space: Space) -> [usize; 4] {
        let n = self.n;
        let v = tri_count(n - 3); // s,t >= 1, s+t <= n-1
        if space == Space::P1 {
            return [v, 0, 0, 0];
        }
        let d10 = tri_count(n - 2); // t >= 1, s+t <= n-1
        let d01 = tri_count(n - 2); // s >= 1
        let d11 = tri_count(n - 2); // s+t <= n-2
        [v, d10, d01, d11]
    }

    pub fn face_len(&self, space: Space) -> usize {
        self.face_block_sizes(space).iter().sum()
    }

    /// Slot of a face dof from its doubled canonical face coordinates
    /// (sigma, tau) = barycentric weights of the second and third face corner.
    pub fn face_slot(&self, sigma: i64, tau: i64, space: Space) -> usize {
        let n = self.n;
        let sizes = self.face_block_sizes(space);
        let (s, t) = (sigma >> 1, tau >> 1);
        match (sigma & 1, tau & 1) {
            (0, 0) => tri_linear(n - 3, s - 1, t - 1),
            (1, 0) => {
                debug_assert!(space == Space::P2);
                sizes[0] + tri_linear(n - 2, s, t - 1)
            }
            (0, 1) => {
                debug_assert!(space == Space::P2);
                sizes[0] + sizes[1] + tri_linear(n - 2, s - 1, t)
            }
            (1, 1) => {
                debug_assert!(space == Space::P2);
                sizes[0] + sizes[1] + sizes[2] + tri_linear(n - 2, s, t)
            }
            _ => unreachable!(),
        }
    }

    /// Owner of the dof at doubled coordinates `dbl` in the frame of `cell`.
    pub fn owner_of(&self, graph: &PrimitiveGraph, cell: usize, dbl: [i64; 3], space: Space) -> OwnerRef {
        let lam = dbl_barycentric(dbl, self.level);
        let nz: Vec<usize> = (0..4).filter(|&i| lam[i] != 0).collect();
        let cp = &graph.cells[cell];
        match nz.len() {
            4 => {
                let (g, idx) = crate::refine::node_from_dbl(dbl);
                OwnerRef::Cell(cell, g, self.lattices[g.index()].linear(idx))
            }
            3 => {
                // strictly inside the face opposite the zero-lambda corner
                let zero = (0..4).find(|&i| lam[i] == 0).unwrap();
                let fid = cp.faces[zero];
                let fp = &graph.faces[fid];
                // canonical corners ascend by global id; find their local lambda
                let lam_of = |gv: usize| -> i64 {
                    let li = cp.verts.iter().position(|&v| v == gv).unwrap();
                    lam[li]
                };
                let sigma = lam_of(fp.verts[1]);
                let tau = lam_of(fp.verts[2]);
                OwnerRef::Face(fid, self.face_slot(sigma, tau, space))
            }
            2 => {
                let (a, b) = (nz[0], nz[1]);
                let (ga, gb) = (cp.verts[a], cp.verts[b]);
                let local = crate::fem::LOCAL_EDGES
                    .iter()
                    .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
                    .unwrap();
                let eid = cp.edges[local];
                let hi = graph.edges[eid].verts[1];
                let t_dbl = if gb == hi { lam[b] } else { lam[a] };
                debug_assert!(ga == graph.edges[eid].verts[0] || ga == graph.edges[eid].verts[1]);
                OwnerRef::Edge(eid, self.edge_slot(t_dbl, space))
            }
            1 => OwnerRef::Vertex(cp.verts[nz[0]]),
            _ => unreachable!("node outside cell"),
        }
    }

    pub fn build(graph: &PrimitiveGraph, level: u32) -> LevelLayout {
        let n = 1i64 << level;
        let lattices: [TetLattice; 8] =
            DofGroup::ALL.map(|g| TetLattice::new(closed_bound(g, level)));
        let interior_lattices: [TetLattice; 8] =
            DofGroup::ALL.map(|g| TetLattice::new(interior_bound(g, n)));

        let mut layout = LevelLayout {
            level,
            n,
            lattices,
            interior_lattices,
            cell_ghosts: Vec::new(),
            interface_dofs: Vec::new(),
            owned_p2: Vec::new(),
            owned_p1: Vec::new(),
            dirichlet_p2: Vec::new(),
            dirichlet_p1: Vec::new(),
            n_vertices: graph.vertices.len(),
            n_edges: graph.edges.len(),
            n_faces: graph.faces.len(),
            n_cells: graph.cells.len(),
        };

        // ghost maps, and alias lists keyed by owner
        let mut aliases: std::collections::BTreeMap<OwnerRef, Vec<(u32, DofGroup, u32)>> =
            std::collections::BTreeMap::new();
        for (ci, _) in graph.cells.iter().enumerate() {
            let mut per_group: [Vec<(u32, OwnerRef)>; 8] = Default::default();
            for g in DofGroup::ALL {
                let lat = &layout.lattices[g.index()];
                for idx in lat.iter() {
                    let dbl = node_dbl(g, idx);
                    if dbl_is_interior(dbl, level) {
                        continue;
                    }
                    let lin = lat.linear(idx) as u32;
                    let owner = layout.owner_of(graph, ci, dbl, Space::P2);
                    per_group[g.index()].push((lin, owner));
                    aliases.entry(owner).or_default().push((ci as u32, g, lin));
                }
            }
            layout.cell_ghosts.push(per_group);
        }

        // owned dof enumeration in global numbering order
        let is_dirichlet = |owner: &OwnerRef| -> bool {
            match owner {
                OwnerRef::Vertex(v) => graph.vertices[*v].dirichlet,
                OwnerRef::Edge(e, _) => graph.edges[*e].dirichlet,
                OwnerRef::Face(f, _) => graph.faces[*f].dirichlet,
                OwnerRef::Cell(..) => false,
            }
        };

        let push = |layout: &mut LevelLayout, owner: OwnerRef, cell: usize, dbl: [i64; 3], p1: bool| {
            let dof = OwnedDof { owner, cell, dbl };
            let d = is_dirichlet(&owner);
            layout.owned_p2.push(dof);
            layout.dirichlet_p2.push(d);
            if p1 {
                layout.owned_p1.push(dof);
                layout.dirichlet_p1.push(d);
            }
        };

        // vertices
        for (vi, vp) in graph.vertices.iter().enumerate() {
            let cell = *vp.cells.iter().min().unwrap();
            let local = graph.cells[cell].verts.iter().position(|&v| v == vi).unwrap();
            let n2 = 2 * n;
            let dbl = match local {
                0 => [0, 0, 0],
                1 => [n2, 0, 0],
                2 => [0, n2, 0],
                3 => [0, 0, n2],
                _ => unreachable!(),
            };
            push(&mut layout, OwnerRef::Vertex(vi), cell, dbl, true);
        }
        // edges: interior vertex dofs then midpoints
        for (ei, ep) in graph.edges.iter().enumerate() {
            let cell = *ep.cells.iter().min().unwrap();
            let cp = &graph.cells[cell];
            let la = cp.verts.iter().position(|&v| v == ep.verts[0]).unwrap();
            let lb = cp.verts.iter().position(|&v| v == ep.verts[1]).unwrap();
            let corner = |l: usize| -> [i64; 3] {
                let n2 = 2 * n;
                match l {
                    0 => [0, 0, 0],
                    1 => [n2, 0, 0],
                    2 => [0, n2, 0],
                    3 => [0, 0, n2],
                    _ => unreachable!(),
                }
            };
            let (pa, pb) = (corner(la), corner(lb));
            let at = |t: i64| -> [i64; 3] {
                let n2 = 2 * n;
                [
                    (pa[0] * (n2 - t) + pb[0] * t) / n2,
                    (pa[1] * (n2 - t) + pb[1] * t) / n2,
                    (pa[2] * (n2 - t) + pb[2] * t) / n2,
                ]
            };
            for t in 1..n {
                push(&mut layout, OwnerRef::Edge(ei, (t - 1) as usize), cell, at(2 * t), true);
            }
            let nv = (n - 1) as usize;
            for m in 0..n {
                push(&mut layout, OwnerRef::Edge(ei, nv + m as usize), cell, at(2 * m + 1), false);
            }
        }
        // faces: slots in face_slot order
        for (fi, fp) in graph.faces.iter().enumerate() {
            let cell = *fp.cells.iter().min().unwrap();
            let cp = &graph.cells[cell];
            let n2 = 2 * n;
            let corner = |gv: usize| -> [i64; 3] {
                match cp.verts.iter().position(|&v| v == gv).unwrap() {
                    0 => [0, 0, 0],
                    1 => [n2, 0, 0],
                    2 => [0, n2, 0],
                    3 => [0, 0, n2],
                    _ => unreachable!(),
                }
            };
            let (p0, p1c, p2c) = (corner(fp.verts[0]), corner(fp.verts[1]), corner(fp.verts[2]));
            let at = |sigma: i64, tau: i64| -> [i64; 3] {
                let rho = n2 - sigma - tau;
                [
                    (p0[0] * rho + p1c[0] * sigma + p2c[0] * tau) / n2,
                    (p0[1] * rho + p1c[1] * sigma + p2c[1] * tau) / n2,
                    (p0[2] * rho + p1c[2] * sigma + p2c[2] * tau) / n2,
                ]
            };
            // vertex block
            for t in 1..n {
                for s in 1..(n - t) {
                    let slot = layout.face_slot(2 * s, 2 * t, Space::P2);
                    push(&mut layout, OwnerRef::Face(fi, slot), cell, at(2 * s, 2 * t), true);
                }
            }
            // d10: t >= 1, s+t <= n-1 ; d01: s >= 1 ; d11: s+t <= n-2
            for t in 1..n {
                for s in 0..(n - t) {
                    let slot = layout.face_slot(2 * s + 1, 2 * t, Space::P2);
                    push(&mut layout, OwnerRef::Face(fi, slot), cell, at(2 * s + 1, 2 * t), false);
                }
            }
            for t in 0..n {
                for s in 1..(n - t) {
                    let slot = layout.face_slot(2 * s, 2 * t + 1, Space::P2);
                    push(&mut layout, OwnerRef::Face(fi, slot), cell, at(2 * s, 2 * t + 1), false);
                }
            }
            for t in 0..(n - 1) {
                for s in 0..(n - 1 - t) {
                    let slot = layout.face_slot(2 * s + 1, 2 * t + 1, Space::P2);
                    push(&mut layout, OwnerRef::Face(fi, slot), cell, at(2 * s + 1, 2 * t + 1), false);
                }
            }
        }
        // cells: per group in group order, interior lattice order
        for ci in 0..graph.cells.len() {
            for g in DofGroup::ALL {
                let shift = interior_shift(g);
                let entries: Vec<([i64; 3], usize)> = layout.interior_lattices[g.index()]
                    .iter()
                    .map(|sidx| {
                        let idx = [sidx[0] + shift[0], sidx[1] + shift[1], sidx[2] + shift[2]];
                        (idx, layout.lattices[g.index()].linear(idx))
                    })
                    .collect();
                for (idx, lin) in entries {
                    let dbl = node_dbl(g, idx);
                    debug_assert!(dbl_is_interior(dbl, level));
                    push(&mut layout, OwnerRef::Cell(ci, g, lin), ci, dbl, g == DofGroup::Vertex);
                }
            }
        }

        // interface reduction list in global order
        for (i, dof) in layout.owned_p2.iter().enumerate() {
            if matches!(dof.owner, OwnerRef::Cell(..)) {
                continue;
            }
            let list = aliases.remove(&dof.owner).unwrap_or_default();
            debug_assert!(!list.is_empty(), "interface dof {i} without cell alias");
            layout.interface_dofs.push((dof.owner, list));
        }
        debug_assert!(aliases.is_empty());

        layout
    }

    pub fn owned(&self, space: Space) -> &[OwnedDof] {
        match space {
            Space::P1 => &self.owned_p1,
            Space::P2 => &self.owned_p2,
        }
    }

    pub fn dirichlet(&self, space: Space) -> &[bool] {
        match space {
            Space::P1 => &self.dirichlet_p1,
            Space::P2 => &self.dirichlet_p2,
        }
    }

    pub fn dof_count(&self, space: Space) -> usize {
        self.owned(space).len()
    }

    /// Global index of an owner slot under the fixed enumeration.
    pub fn global_index(&self, space: Space, owner: &OwnerRef) -> usize {
        let e_len = self.edge_len(space);
        let f_len = self.face_len(space);
        let off_edges = self.n_vertices;
        let off_faces = off_edges + self.n_edges * e_len;
        let off_cells = off_faces + self.n_faces * f_len;
        match *owner {
            OwnerRef::Vertex(v) => v,
            OwnerRef::Edge(e, s) => off_edges + e * e_len + s,
            OwnerRef::Face(f, s) => off_faces + f * f_len + s,
            OwnerRef::Cell(c, g, lin) => {
                let groups: &[DofGroup] = match space {
                    Space::P1 => &[DofGroup::Vertex],
                    Space::P2 => &DofGroup::ALL,
                };
                let per_cell: usize =
                    groups.iter().map(|g| self.interior_lattices[g.index()].len).sum();
                let mut off = off_cells + c * per_cell;
                for gg in groups {
                    if *gg == g {
                        break;
                    }
                    off += self.interior_lattices[gg.index()].len;
                }
                // convert closed linear -> interior linear
                let lat = &self.lattices[g.index()];
                let idx = lat.coords(lin);
                let shift = interior_shift(g);
                let sidx = [idx[0] - shift[0], idx[1] - shift[1], idx[2] - shift[2]];
                off + self.interior_lattices[g.index()].linear(sidx)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// grid functions
// ---------------------------------------------------------------------------

/// Per-level, per-primitive, per-group coefficient storage with cell-side
/// ghost mirrors.
#[derive(Debug, Clone)]
pub struct GridFunction<T> {
    pub space: Space,
    pub level: u32,
    pub vertex: Vec<T>,
    pub edge: Vec<Vec<T>>,
    pub face: Vec<Vec<T>>,
    /// Per cell, per group: closed lattice in storage order. P1 functions use
    /// only the vertex group.
    pub cell: Vec<[Vec<T>; 8]>,
    pub ghosts_clean: bool,
}

impl<T: Real> GridFunction<T> {
    /// Empty function used as a pre-assembly placeholder.
    pub fn new_placeholder() -> GridFunction<T> {
        GridFunction {
            space: Space::P1,
            level: 0,
            vertex: Vec::new(),
            edge: Vec::new(),
            face: Vec::new(),
            cell: Vec::new(),
            ghosts_clean: true,
        }
    }

    pub fn new(layout: &LevelLayout, space: Space) -> GridFunction<T> {
        let groups: &[DofGroup] = match space {
            Space::P1 => &[DofGroup::Vertex],
            Space::P2 => &DofGroup::ALL,
        };
        let mut cell = Vec::with_capacity(layout.n_cells);
        for _ in 0..layout.n_cells {
            let mut arrs: [Vec<T>; 8] = Default::default();
            for g in groups {
                arrs[g.index()] = vec![T::zero(); layout.lattices[g.index()].len];
            }
            cell.push(arrs);
        }
        GridFunction {
            space,
            level: layout.level,
            vertex: vec![T::zero(); layout.n_vertices],
            edge: vec![vec![T::zero(); layout.edge_len(space)]; layout.n_edges],
            face: vec![vec![T::zero(); layout.face_len(space)]; layout.n_faces],
            cell,
            ghosts_clean: true, // all zeros is consistent
        }
    }

    #[inline]
    pub fn read_owner(&self, owner: &OwnerRef) -> T {
        match *owner {
            OwnerRef::Vertex(v) => self.vertex[v],
            OwnerRef::Edge(e, s) => self.edge[e][s],
            OwnerRef::Face(f, s) => self.face[f][s],
            OwnerRef::Cell(c, g, lin) => self.cell[c][g.index()][lin],
        }
    }

    #[inline]
    pub fn write_owner(&mut self, owner: &OwnerRef, v: T) {
        match *owner {
            OwnerRef::Vertex(i) => self.vertex[i] = v,
            OwnerRef::Edge(e, s) => self.edge[e][s] = v,
            OwnerRef::Face(f, s) => self.face[f][s] = v,
            OwnerRef::Cell(c, g, lin) => self.cell[c][g.index()][lin] = v,
        }
    }

    /// Mirror every owner value into the cell-side ghost slots.
    pub fn ghost_update(&mut self, layout: &LevelLayout) {
        let groups: &[DofGroup] = match self.space {
            Space::P1 => &[DofGroup::Vertex],
            Space::P2 => &DofGroup::ALL,
        };
        for ci in 0..self.cell.len() {
            for g in groups {
                // split borrow: read owners go through an immutable snapshot
                let ghosts = &layout.cell_ghosts[ci][g.index()];
                for &(lin, owner) in ghosts {
                    let v = match owner {
                        OwnerRef::Vertex(i) => self.vertex[i],
                        OwnerRef::Edge(e, s) => self.edge[e][s],
                        OwnerRef::Face(f, s) => self.face[f][s],
                        OwnerRef::Cell(c, gg, l) => self.cell[c][gg.index()][l],
                    };
                    self.cell[ci][g.index()][lin as usize] = v;
                }
            }
        }
        self.ghosts_clean = true;
    }

    /// Sum the per-cell lattice contributions of every interface dof into its
    /// owner slot, then broadcast the totals back into the ghost mirrors.
    /// Cell traversal order is fixed (ascending id) for determinism.
    pub fn reduce_interface_sums(&mut self, layout: &LevelLayout) {
        for (owner, sources) in &layout.interface_dofs {
            if self.space == Space::P1 && !matches!(owner, OwnerRef::Vertex(_)) {
                // P1 carries only vertex dofs; skip P2-only slots
                match owner {
                    OwnerRef::Edge(_, s) if *s < (layout.n - 1).max(0) as usize => {}
                    OwnerRef::Face(_, s) if *s < layout.face_len(Space::P1) => {}
                    _ => continue,
                }
            }
            let mut acc = T::zero();
            for &(c, g, lin) in sources {
                acc += self.cell[c as usize][g.index()][lin as usize];
            }
            self.write_owner(owner, acc);
        }
        self.ghost_update(layout);
    }

    pub fn fill(&mut self, v: T) {
        self.vertex.iter_mut().for_each(|x| *x = v);
        self.edge.iter_mut().flatten().for_each(|x| *x = v);
        self.face.iter_mut().flatten().for_each(|x| *x = v);
        self.cell.iter_mut().flatten().flatten().for_each(|x| *x = v);
        self.ghosts_clean = true;
    }

    /// Pack owned dofs into a flat vector in global numbering order.
    pub fn pack(&self, layout: &LevelLayout) -> Vec<T> {
        layout.owned(self.space).iter().map(|d| self.read_owner(&d.owner)).collect()
    }

    /// Unpack a flat vector (global numbering order) into owner slots; ghosts
    /// are refreshed.
    pub fn unpack(&mut self, layout: &LevelLayout, data: &[T]) {
        let owned = layout.owned(self.space);
        assert_eq!(data.len(), owned.len());
        for (d, v) in owned.iter().zip(data) {
            self.write_owner(&d.owner, *v);
        }
        self.ghost_update(layout);
    }

    /// Apply a function to every owned value (and refresh ghosts).
    pub fn map_owned(&mut self, layout: &LevelLayout, mut f: impl FnMut(usize, T) -> T) {
        let owned: Vec<OwnerRef> = layout.owned(self.space).iter().map(|d| d.owner).collect();
        for (i, owner) in owned.iter().enumerate() {
            let v = self.read_owner(owner);
            self.write_owner(owner, f(i, v));
        }
        self.ghost_update(layout);
    }

    /// Zero all Dirichlet-owned slots.
    pub fn zero_dirichlet(&mut self, layout: &LevelLayout) {
        let owned = layout.owned(self.space);
        let mask = layout.dirichlet(self.space);
        for (d, &is_d) in owned.iter().zip(mask) {
            if is_d {
                self.write_owner(&d.owner, T::zero());
            }
        }
        self.ghost_update(layout);
    }
}

/// y += a * x over owned dofs (ghosts refreshed on y).
pub fn axpy<T: Real>(layout: &LevelLayout, a: T, x: &GridFunction<T>, y: &mut GridFunction<T>) {
    debug_assert!(x.space == y.space);
    let owned = layout.owned(x.space);
    for d in owned {
        let v = y.read_owner(&d.owner) + a * x.read_owner(&d.owner);
        y.write_owner(&d.owner, v);
    }
    y.ghost_update(layout);
}

/// Plain euclidean dot product over owned dofs.
pub fn dot<T: Real>(layout: &LevelLayout, x: &GridFunction<T>, y: &GridFunction<T>) -> T {
    debug_assert!(x.space == y.space);
    let mut acc = T::zero();
    for d in layout.owned(x.space) {
        acc += x.read_owner(&d.owner) * y.read_owner(&d.owner);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_primitive_graph, generate_single_tet, generate_unit_cube};
    use crate::refine::{group_dof_count, n_tet};
    use std::collections::BTreeSet;

    #[test]
    fn counts_single_tet() {
        let mesh = generate_single_tet::<f64>();
        let graph = build_primitive_graph(&mesh);
        for level in 1..=3u32 {
            let layout = LevelLayout::build(&graph, level);
            let n = 1i64 << level;
            // P1 owned count equals global vertex count N_tet(2^l + 1)
            assert_eq!(layout.dof_count(Space::P1) as u64, n_tet(n + 1), "P1 l={level}");
            // P2 owned equals P1 on the next level
            assert_eq!(layout.dof_count(Space::P2) as u64, n_tet(2 * n + 1), "P2 l={level}");
        }
    }

    #[test]
    fn counts_cube_against_signature_oracle() {
        // global enumeration oracle: barycentric signatures over mesh vertices
        let mesh = generate_unit_cube::<f64>();
        let graph = build_primitive_graph(&mesh);
        for level in 1..=2u32 {
            let layout = LevelLayout::build(&graph, level);
            let n2 = 2 * (1i64 << level);
            let mut sigs: BTreeSet<Vec<(usize, i64)>> = BTreeSet::new();
            for (ci, cp) in graph.cells.iter().enumerate() {
                for g in DofGroup::ALL {
                    for idx in layout.lattices[g.index()].iter() {
                        let dbl = node_dbl(g, idx);
                        let lam = dbl_barycentric(dbl, level);
                        let mut sig: Vec<(usize, i64)> = cp
                            .verts
                            .iter()
                            .zip(lam.iter())
                            .filter(|(_, &l)| l != 0)
                            .map(|(&v, &l)| (v, l))
                            .collect();
                        sig.sort();
                        sigs.insert(sig);
                        let _ = ci;
                    }
                }
            }
            assert_eq!(layout.dof_count(Space::P2), sigs.len(), "level {level}");
            let _ = n2;
        }
    }

    #[test]
    fn per_primitive_owned_counts() {
        let mesh = generate_unit_cube::<f64>();
        let graph = build_primitive_graph(&mesh);
        let level = 2u32;
        let layout = LevelLayout::build(&graph, level);
        let n = 1i64 << level;
        let mut by_kind = [0usize; 4];
        for d in &layout.owned_p2 {
            match d.owner {
                OwnerRef::Vertex(_) => by_kind[0] += 1,
                OwnerRef::Edge(..) => by_kind[1] += 1,
                OwnerRef::Face(..) => by_kind[2] += 1,
                OwnerRef::Cell(..) => by_kind[3] += 1,
            }
        }
        assert_eq!(by_kind[0], 15);
        assert_eq!(by_kind[1] as i64, 50 * (2 * n - 1));
        // cells own the per-group interiors
        let per_cell: u64 = DofGroup::ALL.iter().map(|&g| group_dof_count(g, level, false)).sum();
        assert_eq!(by_kind[3] as u64, 24 * per_cell);
        // total is the global count (P1 at level+1 over the mesh)
        let total: usize = by_kind.iter().sum();
        assert_eq!(total, layout.dof_count(Space::P2));
    }

    #[test]
    fn ghost_update_idempotent_and_bitwise() {
        let mesh = generate_unit_cube::<f64>();
        let graph = build_primitive_graph(&mesh);
        let layout = LevelLayout::build(&graph, 2);
        let mut gf = GridFunction::<f64>::new(&layout, Space::P2);
        // write pseudo-random owner values
        for (i, d) in layout.owned_p2.clone().iter().enumerate() {
            gf.write_owner(&d.owner, (i as f64 * 0.7371).sin());
        }
        gf.ghost_update(&layout);
        let snapshot = gf.cell.clone();
        gf.ghost_update(&layout);
        for (a, b) in snapshot.iter().zip(&gf.cell) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x, y); // bitwise
            }
        }
        // every ghost equals its owner bitwise
        for ci in 0..layout.n_cells {
            for g in DofGroup::ALL {
                for &(lin, owner) in &layout.cell_ghosts[ci][g.index()] {
                    assert_eq!(gf.cell[ci][g.index()][lin as usize], gf.read_owner(&owner));
                }
            }
        }
    }

    #[test]
    fn global_numbering_is_a_bijection() {
        let mesh = generate_unit_cube::<f64>();
        let graph = build_primitive_graph(&mesh);
        let layout = LevelLayout::build(&graph, 2);
        for space in [Space::P1, Space::P2] {
            let owned = layout.owned(space);
            let mut seen = vec![false; owned.len()];
            for (i, d) in owned.iter().enumerate() {
                let gi = layout.global_index(space, &d.owner);
                assert_eq!(gi, i, "enumeration order matches global index");
                assert!(!seen[gi]);
                seen[gi] = true;
            }
        }
    }

    #[test]
    fn dirichlet_masks_on_cube() {
        let mesh = generate_unit_cube::<f64>();
        let graph = build_primitive_graph(&mesh);
        let layout = LevelLayout::build(&graph, 2);
        // at l=2 on the all-Dirichlet cube: free P1 dofs = interior vertices
        let free = layout.dirichlet_p1.iter().filter(|&&d| !d).count();
        let n_int_faces = graph.faces.iter().filter(|f| !f.on_boundary).count();
        let n_int_edges = graph.edges.iter().filter(|e| !e.on_boundary).count();
        let n = 4i64;
        let expect = 24 * n_tet(n - 3)
            + n_int_faces as u64 * (((n - 2) * (n - 1) / 2) as u64)
            + n_int_edges as u64 * (n as u64 - 1)
            + 1;
        assert_eq!(free as u64, expect);
    }

    #[test]
    fn reduce_interface_sums_accumulates() {
        let mesh = generate_unit_cube::<f64>();
        let graph = build_primitive_graph(&mesh);
        let layout = LevelLayout::build(&graph, 1);
        let mut gf = GridFunction::<f64>::new(&layout, Space::P2);
        // each cell writes 1.0 into every lattice slot; after reduction an
        // interface dof holds its cell multiplicity
        for ci in 0..layout.n_cells {
            for g in DofGroup::ALL {
                for v in &mut gf.cell[ci][g.index()] {
                    *v = 1.0;
                }
            }
        }
        gf.reduce_interface_sums(&layout);
        // the center vertex belongs to all 24 cells
        let center = layout
            .owned_p2
            .iter()
            .find(|d| matches!(d.owner, OwnerRef::Vertex(v) if !graph.vertices[v].on_boundary))
            .unwrap();
        assert_eq!(gf.read_owner(&center.owner), 24.0);
        // a face dof belongs to 1 or 2 cells
        for (owner, sources) in &layout.interface_dofs {
            if let OwnerRef::Face(f, _) = owner {
                let expect = graph.faces[*f].cells.len() as f64;
                assert_eq!(gf.read_owner(owner), expect);
                assert_eq!(sources.len(), graph.faces[*f].cells.len());
            }
        }
    }
}
