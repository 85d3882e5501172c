//! Structured uniform refinement inside a macro-tetrahedron.
//!
//! A macro-cell refined `level` times carries a barycentric integer lattice
//! `{(i,j,k) : i,j,k >= 0, i+j+k <= n}` with `n = 2^level`. Micro-cells follow
//! Bey's red refinement; with the canonical octahedron diagonal (the midpoint
//! diagonal (0,2)-(1,3)) every micro-cell is a lattice translate of one of six
//! fixed shapes, so the refinement is generated directly as a translation
//! pattern rather than recursively.
//!
//! Unknowns are addressed in *doubled* lattice coordinates `(a,b,c)` with
//! `a+b+c <= 2n`: even points are vertex unknowns, the seven odd parity
//! classes are the micro-edge midpoint groups. Doubled coordinates at level
//! `l` coincide with the vertex lattice at level `l+1`, which is exactly the
//! correspondence between quadratic unknowns on level `l` and linear unknowns
//! on level `l+1`.

use crate::scalar::Real;

/// One of the eight structurally identical unknown families in a refined
/// tetrahedron: the vertices plus the seven micro-edge orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DofGroup {
    Vertex,
    X,
    Y,
    Z,
    Xy,
    Xz,
    Yz,
    Xyz,
}

impl DofGroup {
    pub const ALL: [DofGroup; 8] = [
        DofGroup::Vertex,
        DofGroup::X,
        DofGroup::Y,
        DofGroup::Z,
        DofGroup::Xy,
        DofGroup::Xz,
        DofGroup::Yz,
        DofGroup::Xyz,
    ];

    pub const EDGES: [DofGroup; 7] = [
        DofGroup::X,
        DofGroup::Y,
        DofGroup::Z,
        DofGroup::Xy,
        DofGroup::Xz,
        DofGroup::Yz,
        DofGroup::Xyz,
    ];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            DofGroup::Vertex => 0,
            DofGroup::X => 1,
            DofGroup::Y => 2,
            DofGroup::Z => 3,
            DofGroup::Xy => 4,
            DofGroup::Xz => 5,
            DofGroup::Yz => 6,
            DofGroup::Xyz => 7,
        }
    }

    /// Parity of the doubled coordinates of this group's nodes.
    #[inline]
    pub fn parity(self) -> [i64; 3] {
        match self {
            DofGroup::Vertex => [0, 0, 0],
            DofGroup::X => [1, 0, 0],
            DofGroup::Y => [0, 1, 0],
            DofGroup::Z => [0, 0, 1],
            DofGroup::Xy => [1, 1, 0],
            DofGroup::Xz => [1, 0, 1],
            DofGroup::Yz => [0, 1, 1],
            DofGroup::Xyz => [1, 1, 1],
        }
    }

    #[inline]
    pub fn from_parity(p: [i64; 3]) -> DofGroup {
        match p {
            [0, 0, 0] => DofGroup::Vertex,
            [1, 0, 0] => DofGroup::X,
            [0, 1, 0] => DofGroup::Y,
            [0, 0, 1] => DofGroup::Z,
            [1, 1, 0] => DofGroup::Xy,
            [1, 0, 1] => DofGroup::Xz,
            [0, 1, 1] => DofGroup::Yz,
            [1, 1, 1] => DofGroup::Xyz,
            _ => unreachable!("invalid parity"),
        }
    }

    /// Lattice direction spanned by this micro-edge orientation (`None` for vertices).
    /// The xyz diagonal follows the (0,2)-(1,3) octahedron split.
    #[inline]
    pub fn direction(self) -> Option<[i64; 3]> {
        match self {
            DofGroup::Vertex => None,
            DofGroup::X => Some([1, 0, 0]),
            DofGroup::Y => Some([0, 1, 0]),
            DofGroup::Z => Some([0, 0, 1]),
            DofGroup::Xy => Some([1, -1, 0]),
            DofGroup::Xz => Some([1, 0, -1]),
            DofGroup::Yz => Some([0, 1, -1]),
            DofGroup::Xyz => Some([1, -1, 1]),
        }
    }
}

/// `N_tet(v) = (v+2)(v+1)v / 6`, the number of lattice sites in a tetrahedral
/// layout with `v` sites along an outer edge. Clamps to zero for `v <= 0` so
/// the count formulas remain valid on the coarsest levels.
#[inline]
pub fn n_tet(v: i64) -> u64 {
    if v <= 0 {
        0
    } else {
        let v = v as u64;
        (v + 2) * (v + 1) * v / 6
    }
}

/// Largest admissible `i+j+k` of a group's index lattice (with boundary).
#[inline]
pub fn closed_bound(group: DofGroup, level: u32) -> i64 {
    let n = 1i64 << level;
    match group {
        DofGroup::Vertex => n,
        DofGroup::Xyz => n - 2,
        _ => n - 1,
    }
}

/// Number of unknowns of `group` in one macro-tetrahedron at `level`.
pub fn group_dof_count(group: DofGroup, level: u32, with_boundary: bool) -> u64 {
    let n = 1i64 << level;
    match (group, with_boundary) {
        (DofGroup::Vertex, true) => n_tet(n + 1),
        (DofGroup::Vertex, false) => n_tet(n - 3),
        (DofGroup::Xyz, _) => n_tet(n - 1),
        (_, true) => n_tet(n),
        (_, false) => n_tet(n - 2),
    }
}

/// Doubled node coordinates of a group index.
#[inline]
pub fn node_dbl(group: DofGroup, idx: [i64; 3]) -> [i64; 3] {
    let p = group.parity();
    [2 * idx[0] + p[0], 2 * idx[1] + p[1], 2 * idx[2] + p[2]]
}

/// Decode doubled coordinates into (group, index).
#[inline]
pub fn node_from_dbl(d: [i64; 3]) -> (DofGroup, [i64; 3]) {
    let p = [d[0] & 1, d[1] & 1, d[2] & 1];
    (DofGroup::from_parity(p), [d[0] >> 1, d[1] >> 1, d[2] >> 1])
}

/// Endpoint vertex lattice points of the micro-edge a midpoint dof sits on.
pub fn edge_endpoints(group: DofGroup, idx: [i64; 3]) -> Option<([i64; 3], [i64; 3])> {
    let [i, j, k] = idx;
    match group {
        DofGroup::Vertex => None,
        DofGroup::X => Some(([i, j, k], [i + 1, j, k])),
        DofGroup::Y => Some(([i, j, k], [i, j + 1, k])),
        DofGroup::Z => Some(([i, j, k], [i, j, k + 1])),
        DofGroup::Xy => Some(([i, j + 1, k], [i + 1, j, k])),
        DofGroup::Xz => Some(([i, j, k + 1], [i + 1, j, k])),
        DofGroup::Yz => Some(([i, j, k + 1], [i, j + 1, k])),
        DofGroup::Xyz => Some(([i, j + 1, k], [i + 1, j, k + 1])),
    }
}

/// Whether a node (doubled coordinates) is strictly interior to the macro-cell.
#[inline]
pub fn dbl_is_interior(d: [i64; 3], level: u32) -> bool {
    let n2 = 2 * (1i64 << level);
    d[0] >= 1 && d[1] >= 1 && d[2] >= 1 && d[0] + d[1] + d[2] <= n2 - 1
}

/// Whether doubled coordinates lie in the closed macro-cell.
#[inline]
pub fn dbl_in_closed(d: [i64; 3], level: u32) -> bool {
    let n2 = 2 * (1i64 << level);
    d[0] >= 0 && d[1] >= 0 && d[2] >= 0 && d[0] + d[1] + d[2] <= n2
}

/// Barycentric signature of a node in doubled coordinates: `(2n - a - b - c, a, b, c)`.
/// The zero pattern identifies the owning sub-simplex of the macro-cell.
#[inline]
pub fn dbl_barycentric(d: [i64; 3], level: u32) -> [i64; 4] {
    let n2 = 2 * (1i64 << level);
    [n2 - d[0] - d[1] - d[2], d[0], d[1], d[2]]
}

// ---------------------------------------------------------------------------
// micro-cell pattern
// ---------------------------------------------------------------------------

/// Vertex offsets of the six congruence classes (translates tile the refined
/// tetrahedron). Classes 0..=3 are also the shapes produced at level 1; class
/// 0 is similar to the reference macro-cell itself.
pub const SHAPE_OFFSETS: [[[i64; 3]; 4]; 6] = [
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
    [[0, 0, 0], [1, 0, 0], [0, 0, 1], [1, -1, 1]],
    [[0, 0, 0], [0, 1, 0], [0, 1, -1], [1, 0, 0]],
    [[0, 0, 0], [0, 1, -1], [1, 0, -1], [1, 0, 0]],
    [[0, 0, 0], [1, -1, 0], [1, -1, 1], [1, 0, 0]],
    [[0, 0, 0], [1, -1, 0], [1, 0, -1], [1, 0, 0]],
];

/// A micro-cell: one of the six shape classes anchored at a lattice point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroCell {
    pub class: u8,
    pub anchor: [i64; 3],
}

impl MicroCell {
    /// Vertex lattice points, in the class's fixed local order.
    #[inline]
    pub fn vertices(&self) -> [[i64; 3]; 4] {
        let o = &SHAPE_OFFSETS[self.class as usize];
        let a = self.anchor;
        [
            [a[0] + o[0][0], a[1] + o[0][1], a[2] + o[0][2]],
            [a[0] + o[1][0], a[1] + o[1][1], a[2] + o[1][2]],
            [a[0] + o[2][0], a[1] + o[2][1], a[2] + o[2][2]],
            [a[0] + o[3][0], a[1] + o[3][1], a[2] + o[3][2]],
        ]
    }

    /// The ten quadratic node addresses (4 vertices then 6 edge midpoints in
    /// the (0,1),(0,2),(0,3),(1,2),(1,3),(2,3) local edge order), doubled.
    pub fn p2_nodes_dbl(&self) -> [[i64; 3]; 10] {
        let v = self.vertices();
        let mut out = [[0i64; 3]; 10];
        for (t, vv) in v.iter().enumerate() {
            out[t] = [2 * vv[0], 2 * vv[1], 2 * vv[2]];
        }
        let mut t = 4;
        for a in 0..4 {
            for b in (a + 1)..4 {
                out[t] = [v[a][0] + v[b][0], v[a][1] + v[b][1], v[a][2] + v[b][2]];
                t += 1;
            }
        }
        out
    }

    fn fits(&self, n: i64) -> bool {
        self.vertices().iter().all(|v| {
            v[0] >= 0 && v[1] >= 0 && v[2] >= 0 && v[0] + v[1] + v[2] <= n
        })
    }
}

/// All `8^level` micro-cells of one macro-cell, as shape translates.
pub fn refine_micro_cells(level: u32) -> Vec<MicroCell> {
    let n = 1i64 << level;
    let mut out = Vec::with_capacity(1usize << (3 * level));
    for class in 0..6u8 {
        // anchors may use the full closed lattice; fits() trims per shape
        for i in 0..=n {
            for j in 0..=(n - i) {
                for k in 0..=(n - i - j) {
                    let mc = MicroCell { class, anchor: [i, j, k] };
                    if mc.fits(n) {
                        out.push(mc);
                    }
                }
            }
        }
    }
    out
}

/// Micro-cells containing the given node (doubled coordinates), level-aware.
pub fn cells_around_node(dbl: [i64; 3], level: u32) -> Vec<MicroCell> {
    let n = 1i64 << level;
    let base = [dbl[0] >> 1, dbl[1] >> 1, dbl[2] >> 1];
    let mut out = Vec::new();
    for class in 0..6u8 {
        for di in -2..=2i64 {
            for dj in -2..=2i64 {
                for dk in -2..=2i64 {
                    let mc = MicroCell {
                        class,
                        anchor: [base[0] + di, base[1] + dj, base[2] + dk],
                    };
                    if !mc.fits(n) {
                        continue;
                    }
                    if mc.p2_nodes_dbl().contains(&dbl) {
                        out.push(mc);
                    }
                }
            }
        }
    }
    out
}

/// Physical coordinates of a node given the macro-cell's corner positions.
pub fn micro_coords<T: Real>(corners: &[[T; 3]; 4], dbl: [i64; 3], level: u32) -> [T; 3] {
    let n2 = T::from_i64(2 * (1i64 << level)).unwrap();
    let lam = dbl_barycentric(dbl, level);
    let mut out = [T::zero(); 3];
    for d in 0..3 {
        let mut acc = T::zero();
        for (v, l) in corners.iter().zip(lam.iter()) {
            acc += v[d] * T::from_i64(*l).unwrap();
        }
        out[d] = acc / n2;
    }
    out
}

// ---------------------------------------------------------------------------
// lattice indexing
// ---------------------------------------------------------------------------

/// Row-major traversal tables for a tetrahedral lattice `{i+j+k <= bound}`,
/// stored lexicographically with k slowest, then j, then i.
#[derive(Debug, Clone)]
pub struct TetLattice {
    pub bound: i64,
    /// row_start[k][j] = linear index of (0, j, k)
    row_start: Vec<Vec<usize>>,
    /// inverse map: linear index -> lattice coordinates
    coords: Vec<[i64; 3]>,
    pub len: usize,
}

impl TetLattice {
    pub fn new(bound: i64) -> TetLattice {
        if bound < 0 {
            return TetLattice { bound, row_start: Vec::new(), coords: Vec::new(), len: 0 };
        }
        let mut row_start = Vec::with_capacity(bound as usize + 1);
        let mut coords = Vec::new();
        let mut acc = 0usize;
        for k in 0..=bound {
            let mut rows = Vec::with_capacity((bound - k) as usize + 1);
            for j in 0..=(bound - k) {
                rows.push(acc);
                for i in 0..=(bound - k - j) {
                    coords.push([i, j, k]);
                }
                acc += (bound - k - j) as usize + 1;
            }
            row_start.push(rows);
        }
        TetLattice { bound, row_start, coords, len: acc }
    }

    #[inline]
    pub fn coords(&self, lin: usize) -> [i64; 3] {
        self.coords[lin]
    }

    #[inline]
    pub fn linear(&self, idx: [i64; 3]) -> usize {
        debug_assert!(self.contains(idx), "index {:?} out of lattice bound {}", idx, self.bound);
        self.row_start[idx[2] as usize][idx[1] as usize] + idx[0] as usize
    }

    #[inline]
    pub fn row(&self, j: i64, k: i64) -> usize {
        self.row_start[k as usize][j as usize]
    }

    #[inline]
    pub fn contains(&self, idx: [i64; 3]) -> bool {
        idx[0] >= 0 && idx[1] >= 0 && idx[2] >= 0 && idx[0] + idx[1] + idx[2] <= self.bound
    }

    /// Iterate all indices in storage order.
    pub fn iter(&self) -> impl Iterator<Item = [i64; 3]> + '_ {
        let bound = self.bound;
        (0..=bound.max(-1)).flat_map(move |k| {
            (0..=(bound - k)).flat_map(move |j| (0..=(bound - k - j)).map(move |i| [i, j, k]))
        })
    }
}

// ---------------------------------------------------------------------------
// ghost layout descriptors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrimitiveKind {
    Vertex,
    Edge,
    Face,
    Cell,
}

/// One mirrored or referenced dof in a ghost layout, in the frame of the
/// macro-cell the data is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GhostSlot {
    pub group: DofGroup,
    pub index: [i64; 3],
    /// Dimension of the sub-simplex owning this dof (0..=3).
    pub owner_dim: u8,
}

fn owner_dim_of(dbl: [i64; 3], level: u32) -> u8 {
    let lam = dbl_barycentric(dbl, level);
    3 - lam.iter().filter(|&&l| l == 0).count() as u8
}

/// Index sets resolving every stencil read locally.
///
/// For a macro-cell this lists the mirrored (ghost) slots: all closure dofs
/// owned by lower-dimensional primitives. No dof of another macro-cell is ever
/// mirrored into a cell. For faces, edges and vertices it lists the dofs of
/// one adjacent macro-cell referenced by the primitive's assembled rows (one
/// layer of vertex and edge unknowns around the canonical sub-simplex).
pub fn ghost_layout(kind: PrimitiveKind, group: DofGroup, level: u32) -> Vec<GhostSlot> {
    let n = 1i64 << level;
    let mut out = Vec::new();
    match kind {
        PrimitiveKind::Cell => {
            let lat = TetLattice::new(closed_bound(group, level));
            for idx in lat.iter() {
                let d = node_dbl(group, idx);
                if !dbl_is_interior(d, level) {
                    out.push(GhostSlot { group, index: idx, owner_dim: owner_dim_of(d, level) });
                }
            }
        }
        PrimitiveKind::Face | PrimitiveKind::Edge | PrimitiveKind::Vertex => {
            // canonical sub-simplex: face {i=0}; edge {j=k=0}; vertex origin
            let on_canonical = |d: [i64; 3]| -> bool {
                match kind {
                    PrimitiveKind::Face => d[0] == 0,
                    PrimitiveKind::Edge => d[1] == 0 && d[2] == 0,
                    PrimitiveKind::Vertex => d == [0, 0, 0],
                    PrimitiveKind::Cell => unreachable!(),
                }
            };
            let lat = TetLattice::new(closed_bound(group, level));
            let mut seen = std::collections::BTreeSet::new();
            for idx in lat.iter() {
                let d = node_dbl(group, idx);
                if !on_canonical(d) {
                    continue;
                }
                for mc in cells_around_node(d, level) {
                    for nd in mc.p2_nodes_dbl() {
                        let (g, gi) = node_from_dbl(nd);
                        if seen.insert((g, gi)) {
                            out.push(GhostSlot {
                                group: g,
                                index: gi,
                                owner_dim: owner_dim_of(nd, level),
                            });
                        }
                    }
                }
            }
            let _ = n;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn n_tet_examples() {
        assert_eq!(n_tet(1), 1);
        assert_eq!(n_tet(3), 10);
        assert_eq!(n_tet(0), 0);
        assert_eq!(n_tet(-1), 0);
        assert_eq!(n_tet(29), 4495);
    }

    #[test]
    fn group_counts_match_table() {
        // table rows for l = 1..6
        for level in 1..=6u32 {
            let n = 1i64 << level;
            assert_eq!(group_dof_count(DofGroup::Vertex, level, false), n_tet(n - 3));
            assert_eq!(group_dof_count(DofGroup::Vertex, level, true), n_tet(n + 1));
            assert_eq!(group_dof_count(DofGroup::Xyz, level, false), n_tet(n - 1));
            assert_eq!(group_dof_count(DofGroup::Xyz, level, true), n_tet(n - 1));
            for g in [DofGroup::X, DofGroup::Y, DofGroup::Z, DofGroup::Xy, DofGroup::Xz, DofGroup::Yz] {
                assert_eq!(group_dof_count(g, level, false), n_tet(n - 2));
                assert_eq!(group_dof_count(g, level, true), n_tet(n));
            }
        }
        assert_eq!(group_dof_count(DofGroup::Vertex, 2, false), 1);
        assert_eq!(group_dof_count(DofGroup::Xyz, 1, false), 1);
        assert_eq!(group_dof_count(DofGroup::Xyz, 1, true), 1);
    }

    #[test]
    fn counts_match_direct_enumeration() {
        for level in 1..=4u32 {
            for g in DofGroup::ALL {
                let lat = TetLattice::new(closed_bound(g, level));
                let closed = lat.len as u64;
                let inner = lat
                    .iter()
                    .filter(|&idx| dbl_is_interior(node_dbl(g, idx), level))
                    .count() as u64;
                assert_eq!(closed, group_dof_count(g, level, true), "{g:?} l={level} closed");
                assert_eq!(inner, group_dof_count(g, level, false), "{g:?} l={level} inner");
            }
        }
    }

    #[test]
    fn p2_totals_equal_p1_on_next_level() {
        for level in 1..=4u32 {
            let p2: u64 = DofGroup::ALL
                .iter()
                .map(|&g| group_dof_count(g, level, true))
                .sum();
            let p1 = group_dof_count(DofGroup::Vertex, level + 1, true);
            assert_eq!(p2, p1, "level {level}");
        }
    }

    /// Bey's recursive rule with canonical child orderings; test oracle for the
    /// translation pattern.
    fn bey_children(t: [[i64; 3]; 4]) -> Vec<[[i64; 3]; 4]> {
        // caller scales the root tet by 2^level so all midpoints stay integral
        let x = t;
        let m = |a: usize, b: usize| -> [i64; 3] {
            debug_assert!((0..3).all(|d| (x[a][d] + x[b][d]) % 2 == 0));
            [(x[a][0] + x[b][0]) / 2, (x[a][1] + x[b][1]) / 2, (x[a][2] + x[b][2]) / 2]
        };
        let (x01, x02, x03) = (m(0, 1), m(0, 2), m(0, 3));
        let (x12, x13, x23) = (m(1, 2), m(1, 3), m(2, 3));
        vec![
            [x[0], x01, x02, x03],
            [x01, x[1], x12, x13],
            [x02, x12, x[2], x23],
            [x03, x13, x23, x[3]],
            [x01, x02, x03, x13],
            [x01, x02, x12, x13],
            [x02, x03, x13, x23],
            [x02, x12, x13, x23],
        ]
    }

    fn sorted_set(cells: &[[[i64; 3]; 4]]) -> BTreeSet<[[i64; 3]; 4]> {
        cells
            .iter()
            .map(|c| {
                let mut v = *c;
                v.sort();
                v
            })
            .collect()
    }

    #[test]
    fn pattern_matches_bey_recursion() {
        for level in 0..=3u32 {
            let n = 1i64 << level;
            let mut rec = vec![[[0, 0, 0], [n, 0, 0], [0, n, 0], [0, 0, n]]];
            for _ in 0..level {
                rec = rec.into_iter().flat_map(bey_children).collect();
            }
            let pat: Vec<[[i64; 3]; 4]> =
                refine_micro_cells(level).iter().map(|mc| mc.vertices()).collect();
            assert_eq!(pat.len(), 1usize << (3 * level), "count at level {level}");
            assert_eq!(sorted_set(&pat), sorted_set(&rec), "cells at level {level}");
        }
    }

    #[test]
    fn level1_corner_children_similar_to_parent() {
        let cells = refine_micro_cells(1);
        assert_eq!(cells.len(), 8);
        let corners = cells.iter().filter(|mc| mc.class == 0).count();
        assert_eq!(corners, 4);
    }

    #[test]
    fn exactly_six_classes_for_l_ge_2() {
        for level in 2..=4u32 {
            let classes: BTreeSet<u8> = refine_micro_cells(level).iter().map(|c| c.class).collect();
            assert_eq!(classes.len(), 6, "level {level}");
        }
        let classes: BTreeSet<u8> = refine_micro_cells(1).iter().map(|c| c.class).collect();
        assert_eq!(classes.len(), 5); // the interior shapes of class >= 4 need l >= 2
    }

    #[test]
    fn volumes_tile_the_parent() {
        // signed volumes on the unit reference tet sum to the parent volume
        for level in [1u32, 2] {
            let n = (1i64 << level) as f64;
            let mut vol = 0.0f64;
            for mc in refine_micro_cells(level) {
                let v = mc.vertices();
                let e = |a: usize, d: usize| (v[a][d] - v[0][d]) as f64 / n;
                let det = e(1, 0) * (e(2, 1) * e(3, 2) - e(2, 2) * e(3, 1))
                    - e(1, 1) * (e(2, 0) * e(3, 2) - e(2, 2) * e(3, 0))
                    + e(1, 2) * (e(2, 0) * e(3, 1) - e(2, 1) * e(3, 0));
                vol += det.abs() / 6.0;
            }
            assert!((vol - 1.0 / 6.0).abs() < 1e-13 * (1.0 / 6.0), "level {level}: {vol}");
        }
    }

    #[test]
    fn micro_coords_examples() {
        let corners = [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        // l=1 vertex (0,0,0) -> vertex 0
        let p = micro_coords(&corners, node_dbl(DofGroup::Vertex, [0, 0, 0]), 1);
        assert_eq!(p, [0.0, 0.0, 0.0]);
        // l=1 x-edge (0,0,0): midpoint of lattice (0,0,0)-(1,0,0) = 1/4 along macro x-edge
        let p = micro_coords(&corners, node_dbl(DofGroup::X, [0, 0, 0]), 1);
        assert_eq!(p, [0.25, 0.0, 0.0]);
        // all l=2 vertex coords inside the closed tet
        let lat = TetLattice::new(closed_bound(DofGroup::Vertex, 2));
        for idx in lat.iter() {
            let p = micro_coords(&corners, node_dbl(DofGroup::Vertex, idx), 2);
            assert!(p.iter().all(|&c| (-1e-15..=1.0 + 1e-15).contains(&c)));
            assert!(p.iter().sum::<f64>() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn edge_midpoints_match_dbl_encoding() {
        for g in DofGroup::EDGES {
            let idx = [2, 1, 1];
            let (a, b) = edge_endpoints(g, idx).unwrap();
            let d = node_dbl(g, idx);
            assert_eq!([a[0] + b[0], a[1] + b[1], a[2] + b[2]], d, "{g:?}");
        }
    }

    #[test]
    fn ghost_layout_shapes() {
        // cell: mirrored slots are exactly the non-interior closure, none owned by cells
        for g in DofGroup::ALL {
            let gl = ghost_layout(PrimitiveKind::Cell, g, 2);
            let expect = group_dof_count(g, 2, true) - group_dof_count(g, 2, false);
            assert_eq!(gl.len() as u64, expect, "{g:?}");
            assert!(gl.iter().all(|s| s.owner_dim < 3));
        }
        // face: the read set for vertex data reaches one layer into the cell (i <= 1)
        let gl = ghost_layout(PrimitiveKind::Face, DofGroup::Vertex, 3);
        let max_i = gl
            .iter()
            .filter(|s| s.group == DofGroup::Vertex)
            .map(|s| s.index[0])
            .max()
            .unwrap();
        assert_eq!(max_i, 1);
        assert!(gl.iter().any(|s| s.owner_dim == 3)); // needs cell-owned data
        // l=1 edge: reach covers the first layer of the adjacent faces
        let gl = ghost_layout(PrimitiveKind::Edge, DofGroup::Vertex, 1);
        assert!(gl.iter().any(|s| s.owner_dim == 2));
    }

    #[test]
    fn lattice_linear_roundtrip() {
        let lat = TetLattice::new(9);
        let mut expect = 0usize;
        for idx in lat.iter() {
            assert_eq!(lat.linear(idx), expect);
            expect += 1;
        }
        assert_eq!(expect, lat.len);
        assert_eq!(lat.len as u64, n_tet(9 + 1));
    }
}
