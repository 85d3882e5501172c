//! Unstructured coarse tetrahedral meshes and the primitive graph built from
//! them: one vertex-, edge-, face- and cell-primitive per geometric entity,
//! with adjacency and boundary flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone)]
pub struct MacroMesh<T> {
    pub vertices: Vec<[T; 3]>,
    /// 4-tuples of vertex indices, arbitrary orientation, non-degenerate.
    pub cells: Vec<[usize; 4]>,
    /// (sorted triangle, tag); untagged boundary faces default to Dirichlet.
    pub boundary_facets: Vec<([usize; 3], BoundaryTag)>,
}

#[derive(Debug)]
pub enum MeshError {
    Io(std::io::Error),
    Parse { line: usize, msg: String },
    Topology(String),
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::Io(e) => write!(f, "mesh io error: {e}"),
            MeshError::Parse { line, msg } => write!(f, "mesh parse error at line {line}: {msg}"),
            MeshError::Topology(msg) => write!(f, "mesh topology error: {msg}"),
        }
    }
}

impl std::error::Error for MeshError {}

impl From<std::io::Error> for MeshError {
    fn from(e: std::io::Error) -> Self {
        MeshError::Io(e)
    }
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

fn sorted2(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl<T: Real> MacroMesh<T> {
    /// Signed volume (times 6) of a cell.
    pub fn cell_volume6(&self, c: usize) -> T {
        let v = self.cells[c].map(|i| self.vertices[i]);
        let e = |a: usize, d: usize| v[a][d] - v[0][d];
        e(1, 0) * (e(2, 1) * e(3, 2) - e(2, 2) * e(3, 1))
            - e(1, 1) * (e(2, 0) * e(3, 2) - e(2, 2) * e(3, 0))
            + e(1, 2) * (e(2, 0) * e(3, 1) - e(2, 1) * e(3, 0))
    }

    fn bbox_scale(&self) -> T {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let mut s = T::zero();
        for d in 0..3 {
            s = s.max(hi[d] - lo[d]);
        }
        s
    }

    /// Validate the mesh invariants; used by the loader and the generators.
    pub fn validate(&self) -> Result<(), MeshError> {
        let nv = self.vertices.len();
        let scale = self.bbox_scale();
        let vol_floor = crate::scalar::real::<T>(1e-14) * scale * scale * scale;
        for (ci, cell) in self.cells.iter().enumerate() {
            for &v in cell {
                if v >= nv {
                    return Err(MeshError::Topology(format!(
                        "cell {ci} references nonexistent vertex {v}"
                    )));
                }
            }
            let mut s = *cell;
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::Topology(format!("cell {ci} has repeated vertices")));
            }
            if self.cell_volume6(ci).abs() <= vol_floor {
                return Err(MeshError::Topology(format!("cell {ci} is degenerate (zero volume)")));
            }
        }
        // face incidence: interior faces shared by exactly 2 cells, boundary by 1
        let mut incidence: BTreeMap<[usize; 3], usize> = BTreeMap::new();
        for cell in &self.cells {
            for f in Self::cell_faces(*cell) {
                *incidence.entry(sorted3(f)).or_insert(0) += 1;
            }
        }
        for (f, n) in &incidence {
            if *n > 2 {
                return Err(MeshError::Topology(format!("face {f:?} shared by {n} cells")));
            }
        }
        for (f, _tag) in &self.boundary_facets {
            for &v in f {
                if v >= nv {
                    return Err(MeshError::Topology(format!(
                        "boundary facet {f:?} references nonexistent vertex {v}"
                    )));
                }
            }
            match incidence.get(&sorted3(*f)) {
                Some(1) => {}
                Some(2) => {
                    return Err(MeshError::Topology(format!(
                        "facet {f:?} tagged as boundary but shared by two cells"
                    )))
                }
                _ => {
                    return Err(MeshError::Topology(format!(
                        "boundary facet {f:?} is not a face of any cell"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn cell_faces(cell: [usize; 4]) -> [[usize; 3]; 4] {
        let [a, b, c, d] = cell;
        [[b, c, d], [a, c, d], [a, b, d], [a, b, c]]
    }

    pub fn cell_edges(cell: [usize; 4]) -> [[usize; 2]; 6] {
        let [a, b, c, d] = cell;
        [
            sorted2(a, b),
            sorted2(a, c),
            sorted2(a, d),
            sorted2(b, c),
            sorted2(b, d),
            sorted2(c, d),
        ]
    }

    /// Map of boundary face -> tag, with untagged boundary faces defaulting to
    /// Dirichlet.
    pub fn boundary_tags(&self) -> BTreeMap<[usize; 3], BoundaryTag> {
        let mut incidence: BTreeMap<[usize; 3], usize> = BTreeMap::new();
        for cell in &self.cells {
            for f in Self::cell_faces(*cell) {
                *incidence.entry(sorted3(f)).or_insert(0) += 1;
            }
        }
        let mut tags: BTreeMap<[usize; 3], BoundaryTag> = BTreeMap::new();
        for (f, n) in incidence {
            if n == 1 {
                tags.insert(f, BoundaryTag::Dirichlet);
            }
        }
        for (f, tag) in &self.boundary_facets {
            tags.insert(sorted3(*f), *tag);
        }
        tags
    }

    /// Serialize in the `hhgmesh 1` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::from("hhgmesh 1\n");
        for v in &self.vertices {
            s.push_str(&format!("v {:e} {:e} {:e}\n", v[0], v[1], v[2]));
        }
        for c in &self.cells {
            s.push_str(&format!("c {} {} {} {}\n", c[0], c[1], c[2], c[3]));
        }
        for (f, tag) in &self.boundary_facets {
            let t = match tag {
                BoundaryTag::Dirichlet => "D",
                BoundaryTag::Neumann => "N",
            };
            s.push_str(&format!("bf {} {} {} {}\n", f[0], f[1], f[2], t));
        }
        s
    }
}

/// Parse the line-oriented `hhgmesh 1` format: `v x y z`, `c i0 i1 i2 i3`,
/// `bf i0 i1 i2 D|N`, `#` comments.
pub fn parse_mesh<T: Real>(text: &str) -> Result<MacroMesh<T>, MeshError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((no, l)) => {
                let l = l.split('#').next().unwrap_or("").trim();
                if l.is_empty() {
                    continue;
                }
                break (no + 1, l.to_string());
            }
            None => {
                return Err(MeshError::Parse { line: 0, msg: "empty file".into() });
            }
        }
    };
    if header.1.split_whitespace().collect::<Vec<_>>() != ["hhgmesh", "1"] {
        return Err(MeshError::Parse {
            line: header.0,
            msg: format!("expected header `hhgmesh 1`, got `{}`", header.1),
        });
    }
    let mut mesh = MacroMesh { vertices: Vec::new(), cells: Vec::new(), boundary_facets: Vec::new() };
    for (no, raw) in lines {
        let line_no = no + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let mut it = l.split_whitespace();
        let kind = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        let perr = |msg: String| MeshError::Parse { line: line_no, msg };
        match kind {
            "v" => {
                if rest.len() != 3 {
                    return Err(perr(format!("vertex needs 3 coordinates, got {}", rest.len())));
                }
                let mut p = [T::zero(); 3];
                for (d, tok) in rest.iter().enumerate() {
                    let x: f64 = tok
                        .parse()
                        .map_err(|e| perr(format!("bad coordinate `{tok}`: {e}")))?;
                    p[d] = crate::scalar::real(x);
                }
                mesh.vertices.push(p);
            }
            "c" => {
                if rest.len() != 4 {
                    return Err(perr(format!("cell needs 4 vertex indices, got {}", rest.len())));
                }
                let mut c = [0usize; 4];
                for (d, tok) in rest.iter().enumerate() {
                    c[d] = tok.parse().map_err(|e| perr(format!("bad index `{tok}`: {e}")))?;
                }
                mesh.cells.push(c);
            }
            "bf" => {
                if rest.len() != 4 {
                    return Err(perr("boundary facet needs 3 indices and a tag".into()));
                }
                let mut f = [0usize; 3];
                for (d, tok) in rest.iter().take(3).enumerate() {
                    f[d] = tok.parse().map_err(|e| perr(format!("bad index `{tok}`: {e}")))?;
                }
                let tag = match rest[3] {
                    "D" => BoundaryTag::Dirichlet,
                    "N" => BoundaryTag::Neumann,
                    other => return Err(perr(format!("unknown boundary tag `{other}`"))),
                };
                mesh.boundary_facets.push((f, tag));
            }
            other => return Err(perr(format!("unknown record `{other}`"))),
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Load a mesh file in the `hhgmesh 1` text format.
pub fn load_mesh<T: Real>(path: &Path) -> Result<MacroMesh<T>, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

/// A single reference tetrahedron with all faces Dirichlet.
pub fn generate_single_tet<T: Real>() -> MacroMesh<T> {
    let r = crate::scalar::real::<T>;
    let mesh = MacroMesh {
        vertices: vec![
            [r(0.0), r(0.0), r(0.0)],
            [r(1.0), r(0.0), r(0.0)],
            [r(0.0), r(1.0), r(0.0)],
            [r(0.0), r(0.0), r(1.0)],
        ],
        cells: vec![[0, 1, 2, 3]],
        boundary_facets: vec![
            ([1, 2, 3], BoundaryTag::Dirichlet),
            ([0, 2, 3], BoundaryTag::Dirichlet),
            ([0, 1, 3], BoundaryTag::Dirichlet),
            ([0, 1, 2], BoundaryTag::Dirichlet),
        ],
    };
    debug_assert!(mesh.validate().is_ok());
    mesh
}

/// The unit cube (0,1)^3 split into 24 tetrahedra through the body center and
/// the 6 face centers; all outer faces Dirichlet.
pub fn generate_unit_cube<T: Real>() -> MacroMesh<T> {
    let r = crate::scalar::real::<T>;
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let find = |p: [f64; 3], vs: &mut Vec<[f64; 3]>| -> usize {
        if let Some(i) = vs.iter().position(|q| *q == p) {
            i
        } else {
            vs.push(p);
            vs.len() - 1
        }
    };
    let mut cells = Vec::new();
    let mut bfaces = Vec::new();
    let center = [0.5, 0.5, 0.5];
    for axis in 0..3usize {
        for val in [0.0, 1.0] {
            let mut fc = [0.5, 0.5, 0.5];
            fc[axis] = val;
            let o = [(axis + 1) % 3, (axis + 2) % 3];
            // corners of this cube face in ring order
            let mut ring = Vec::new();
            for (s, t) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
                let mut p = [0.0; 3];
                p[axis] = val;
                p[o[0]] = s;
                p[o[1]] = t;
                ring.push(p);
            }
            for e in 0..4 {
                let a = find(ring[e], &mut vertices);
                let b = find(ring[(e + 1) % 4], &mut vertices);
                let f = find(fc, &mut vertices);
                let c = find(center, &mut vertices);
                cells.push([a, b, f, c]);
                bfaces.push(([a, b, f], BoundaryTag::Dirichlet));
            }
        }
    }
    let mesh = MacroMesh {
        vertices: vertices.iter().map(|p| [r(p[0]), r(p[1]), r(p[2])]).collect(),
        cells,
        boundary_facets: bfaces,
    };
    debug_assert!(mesh.validate().is_ok());
    mesh
}

// ---------------------------------------------------------------------------
// primitive graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EdgePrim {
    /// Endpoint mesh vertices, ascending.
    pub verts: [usize; 2],
    pub faces: Vec<usize>,
    pub cells: Vec<usize>,
    pub on_boundary: bool,
    pub dirichlet: bool,
}

#[derive(Debug, Clone)]
pub struct FacePrim {
    /// Corner mesh vertices, ascending.
    pub verts: [usize; 3],
    pub edges: [usize; 3],
    pub cells: Vec<usize>,
    pub on_boundary: bool,
    pub tag: Option<BoundaryTag>,
    pub dirichlet: bool,
}

#[derive(Debug, Clone)]
pub struct VertexPrim {
    pub edges: Vec<usize>,
    pub faces: Vec<usize>,
    pub cells: Vec<usize>,
    pub on_boundary: bool,
    pub dirichlet: bool,
}

#[derive(Debug, Clone)]
pub struct CellPrim {
    /// Mesh vertex ids in the order given by the cell.
    pub verts: [usize; 4],
    /// Edge primitive ids, local edge order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
    pub edges: [usize; 6],
    /// Face primitive ids, local face order (opposite local vertex 0..4).
    pub faces: [usize; 4],
}

#[derive(Debug, Clone)]
pub struct PrimitiveGraph {
    pub vertices: Vec<VertexPrim>,
    pub edges: Vec<EdgePrim>,
    pub faces: Vec<FacePrim>,
    pub cells: Vec<CellPrim>,
}

/// Build the primitive graph: one primitive per distinct vertex/edge/face/cell
/// of the coarse mesh, with adjacency and boundary classification.
pub fn build_primitive_graph<T: Real>(mesh: &MacroMesh<T>) -> PrimitiveGraph {
    let tags = mesh.boundary_tags();
    let mut edge_ids: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    let mut face_ids: BTreeMap<[usize; 3], usize> = BTreeMap::new();
    let mut edges: Vec<EdgePrim> = Vec::new();
    let mut faces: Vec<FacePrim> = Vec::new();
    let mut cells: Vec<CellPrim> = Vec::new();
    let mut vertices: Vec<VertexPrim> = (0..mesh.vertices.len())
        .map(|_| VertexPrim {
            edges: Vec::new(),
            faces: Vec::new(),
            cells: Vec::new(),
            on_boundary: false,
            dirichlet: false,
        })
        .collect();

    for (ci, cell) in mesh.cells.iter().enumerate() {
        let mut eids = [0usize; 6];
        for (t, e) in MacroMesh::<T>::cell_edges(*cell).iter().enumerate() {
            let id = *edge_ids.entry(*e).or_insert_with(|| {
                edges.push(EdgePrim {
                    verts: *e,
                    faces: Vec::new(),
                    cells: Vec::new(),
                    on_boundary: false,
                    dirichlet: false,
                });
                edges.len() - 1
            });
            eids[t] = id;
            edges[id].cells.push(ci);
        }
        let mut fids = [0usize; 4];
        for (t, f) in MacroMesh::<T>::cell_faces(*cell).iter().enumerate() {
            let key = sorted3(*f);
            let id = *face_ids.entry(key).or_insert_with(|| {
                let fedges = [
                    edge_ids[&sorted2(key[0], key[1])],
                    edge_ids[&sorted2(key[0], key[2])],
                    edge_ids[&sorted2(key[1], key[2])],
                ];
                faces.push(FacePrim {
                    verts: key,
                    edges: fedges,
                    cells: Vec::new(),
                    on_boundary: false,
                    tag: None,
                    dirichlet: false,
                });
                faces.len() - 1
            });
            fids[t] = id;
            faces[id].cells.push(ci);
        }
        for &v in cell {
            vertices[v].cells.push(ci);
        }
        cells.push(CellPrim { verts: *cell, edges: eids, faces: fids });
    }

    for (id, e) in edges.iter().enumerate() {
        for &v in &e.verts {
            vertices[v].edges.push(id);
        }
    }
    for (id, f) in faces.iter_mut().enumerate() {
        if let Some(tag) = tags.get(&f.verts) {
            f.on_boundary = true;
            f.tag = Some(*tag);
            f.dirichlet = *tag == BoundaryTag::Dirichlet;
        }
        for &e in &f.edges {
            edges[e].faces.push(id);
        }
        for &v in &f.verts {
            vertices[v].faces.push(id);
        }
    }
    // boundary closure: edges and vertices of boundary faces are boundary;
    // Dirichlet wins when an edge/vertex touches both tags
    for f in &faces {
        if f.on_boundary {
            for &e in &f.edges {
                edges[e].on_boundary = true;
                if f.dirichlet {
                    edges[e].dirichlet = true;
                }
            }
            for &v in &f.verts {
                vertices[v].on_boundary = true;
                if f.dirichlet {
                    vertices[v].dirichlet = true;
                }
            }
        }
    }

    PrimitiveGraph { vertices, edges, faces, cells }
}

impl PrimitiveGraph {
    /// Local index (0..4) of `face` within `cell`, by the opposite-vertex rule.
    pub fn local_face(&self, cell: usize, face: usize) -> Option<usize> {
        self.cells[cell].faces.iter().position(|&f| f == face)
    }

    pub fn local_edge(&self, cell: usize, edge: usize) -> Option<usize> {
        self.cells[cell].edges.iter().position(|&e| e == edge)
    }
}
