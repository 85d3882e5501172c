//! Reference-element machinery: quadrature on the reference tetrahedron,
//! P1/P2 bases, affine element maps, and the local matrices of all operator
//! blocks. Every local matrix is computed by quadrature; closed forms appear
//! only in tests.

use crate::scalar::{real, Real};

pub const REF_VERTS: [[f64; 3]; 4] =
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Local edge enumeration shared by P2 nodes and the dof-group orientation
/// order: (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    P1,
    P2,
}

impl Space {
    #[inline]
    pub fn node_count(self) -> usize {
        match self {
            Space::P1 => 4,
            Space::P2 => 10,
        }
    }

    #[inline]
    pub fn order(self) -> usize {
        match self {
            Space::P1 => 1,
            Space::P2 => 2,
        }
    }
}

// ---------------------------------------------------------------------------
// quadrature
// ---------------------------------------------------------------------------

// Gauss-Jacobi nodes/weights on [0,1] for weight (1-x)^alpha; conical-product
// rules on the tetrahedron are built from these.
const GJ_A0: [(&[f64], &[f64]); 4] = [
    (&[0.5], &[1.0]),
    (&[0.21132486540518711775, 0.78867513459481288225], &[0.5, 0.5]),
    (
        &[0.11270166537925831148, 0.5, 0.88729833462074168852],
        &[0.27777777777777777778, 0.44444444444444444444, 0.27777777777777777778],
    ),
    (
        &[
            0.069431844202973712388,
            0.3300094782075718676,
            0.6699905217924281324,
            0.93056815579702628761,
        ],
        &[
            0.17392742256872692869,
            0.32607257743127307131,
            0.32607257743127307131,
            0.17392742256872692869,
        ],
    ),
];

const GJ_A1: [(&[f64], &[f64]); 4] = [
    (&[0.33333333333333333333], &[0.5]),
    (
        &[0.15505102572168219018, 0.64494897427831780982],
        &[0.31804138174397716939, 0.18195861825602283061],
    ),
    (
        &[0.088587959512703947396, 0.40946686444073471086, 0.78765946176084705603],
        &[0.20093191373895963077, 0.22924110635958624669, 0.069826979901454122534],
    ),
    (
        &[
            0.057104196114517682193,
            0.27684301363812382768,
            0.58359043236891682006,
            0.86024013565621944785,
        ],
        &[
            0.13550691343148811621,
            0.20346456801027136079,
            0.12984754760823244083,
            0.031180970950008082174,
        ],
    ),
];

const GJ_A2: [(&[f64], &[f64]); 4] = [
    (&[0.25], &[0.33333333333333333333]),
    (
        &[0.12251482265544137787, 0.5441518440112252888],
        &[0.23254745125350790275, 0.10078588207982543058],
    ),
    (
        &[0.072994024073149732156, 0.34700376603835188472, 0.70500220988849838312],
        &[0.15713636106488661332, 0.146246269259866022, 0.029950703008580698011],
    ),
    (
        &[
            0.048500549446997329297,
            0.23860073755186230506,
            0.51704729510436750234,
            0.7958514178967728633,
        ],
        &[
            0.11088841561127798368,
            0.14345878979921420905,
            0.068633887172923075317,
            0.010352240749918065284,
        ],
    ),
];

#[derive(Debug, Clone)]
pub struct Quadrature<T> {
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
    pub degree: usize,
}

/// Rule exact for total degree <= `degree` on the reference tetrahedron,
/// `degree` in 1..=6, positive weights. Degree 1 is the centroid rule, degree
/// 2 the classic symmetric 4-point rule, higher degrees conical products of
/// Gauss-Jacobi rules.
pub fn quadrature<T: Real>(degree: usize) -> Quadrature<T> {
    assert!((1..=6).contains(&degree), "unsupported quadrature degree {degree}");
    match degree {
        1 => Quadrature {
            points: vec![[real(0.25), real(0.25), real(0.25)]],
            weights: vec![real(1.0 / 6.0)],
            degree,
        },
        2 => {
            // barycentric (a,a,a) / (b,a,a) ..., a = (5 - sqrt 5)/20, b = (5 + 3 sqrt 5)/20
            let a = (5.0 - 5.0f64.sqrt()) / 20.0;
            let b = (5.0 + 3.0 * 5.0f64.sqrt()) / 20.0;
            let pts = [[a, a, a], [b, a, a], [a, b, a], [a, a, b]];
            Quadrature {
                points: pts.iter().map(|p| [real(p[0]), real(p[1]), real(p[2])]).collect(),
                weights: vec![real(1.0 / 24.0); 4],
                degree,
            }
        }
        _ => {
            let n = degree / 2 + 1; // 2n-1 >= degree
            let (x2, w2) = GJ_A2[n - 1];
            let (x1, w1) = GJ_A1[n - 1];
            let (x0, w0) = GJ_A0[n - 1];
            let mut points = Vec::with_capacity(n * n * n);
            let mut weights = Vec::with_capacity(n * n * n);
            for (u, wu) in x2.iter().zip(w2) {
                for (v, wv) in x1.iter().zip(w1) {
                    for (w, ww) in x0.iter().zip(w0) {
                        let x = *u;
                        let y = v * (1.0 - u);
                        let z = w * (1.0 - u) * (1.0 - v);
                        points.push([real(x), real(y), real(z)]);
                        weights.push(real(wu * wv * ww));
                    }
                }
            }
            Quadrature { points, weights, degree }
        }
    }
}

// ---------------------------------------------------------------------------
// bases
// ---------------------------------------------------------------------------

#[inline]
fn bary<T: Real>(p: [T; 3]) -> [T; 4] {
    [T::one() - p[0] - p[1] - p[2], p[0], p[1], p[2]]
}

const BARY_GRADS: [[f64; 3]; 4] =
    [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Basis values at a reference point; P2 nodes are the 4 vertices followed by
/// the 6 edge midpoints in `LOCAL_EDGES` order.
pub fn basis_values<T: Real>(space: Space, p: [T; 3]) -> Vec<T> {
    let l = bary(p);
    match space {
        Space::P1 => l.to_vec(),
        Space::P2 => {
            let mut out = Vec::with_capacity(10);
            let two = real::<T>(2.0);
            for i in 0..4 {
                out.push(l[i] * (two * l[i] - T::one()));
            }
            for e in LOCAL_EDGES {
                out.push(real::<T>(4.0) * l[e[0]] * l[e[1]]);
            }
            out
        }
    }
}

/// Reference gradients of the basis at a point (one row per node).
pub fn basis_gradients<T: Real>(space: Space, p: [T; 3]) -> Vec<[T; 3]> {
    let l = bary(p);
    let g: Vec<[T; 3]> =
        BARY_GRADS.iter().map(|r| [real(r[0]), real(r[1]), real(r[2])]).collect();
    match space {
        Space::P1 => g,
        Space::P2 => {
            let mut out = Vec::with_capacity(10);
            let four = real::<T>(4.0);
            for i in 0..4 {
                let c = four * l[i] - T::one();
                out.push([g[i][0] * c, g[i][1] * c, g[i][2] * c]);
            }
            for e in LOCAL_EDGES {
                let (a, b) = (e[0], e[1]);
                out.push([
                    four * (g[a][0] * l[b] + g[b][0] * l[a]),
                    four * (g[a][1] * l[b] + g[b][1] * l[a]),
                    four * (g[a][2] * l[b] + g[b][2] * l[a]),
                ]);
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// affine map and local matrices
// ---------------------------------------------------------------------------

/// Affine map from the reference tetrahedron onto a physical element.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap<T> {
    pub origin: [T; 3],
    /// Columns are the edge vectors v1-v0, v2-v0, v3-v0.
    pub jacobian: [[T; 3]; 3],
    pub det: T,
    /// Inverse transpose of the Jacobian (maps reference gradients).
    pub inv_t: [[T; 3]; 3],
}

impl<T: Real> AffineMap<T> {
    pub fn from_vertices(v: &[[T; 3]; 4]) -> AffineMap<T> {
        let mut j = [[T::zero(); 3]; 3];
        for c in 0..3 {
            for r in 0..3 {
                j[r][c] = v[c + 1][r] - v[0][r];
            }
        }
        let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
            - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        assert!(det.abs() > T::zero(), "degenerate element map");
        let inv = [
            [
                (j[1][1] * j[2][2] - j[1][2] * j[2][1]) / det,
                (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det,
                (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det,
            ],
            [
                (j[1][2] * j[2][0] - j[1][0] * j[2][2]) / det,
                (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det,
                (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det,
            ],
            [
                (j[1][0] * j[2][1] - j[1][1] * j[2][0]) / det,
                (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det,
                (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det,
            ],
        ];
        let mut inv_t = [[T::zero(); 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                inv_t[r][c] = inv[c][r];
            }
        }
        AffineMap { origin: v[0], jacobian: j, det, inv_t }
    }

    #[inline]
    pub fn volume(&self) -> T {
        self.det.abs() / real(6.0)
    }

    #[inline]
    pub fn apply(&self, p: [T; 3]) -> [T; 3] {
        let mut out = self.origin;
        for r in 0..3 {
            for c in 0..3 {
                out[r] += self.jacobian[r][c] * p[c];
            }
        }
        out
    }

    /// Push a reference gradient to the physical gradient: J^{-T} g.
    #[inline]
    pub fn push_gradient(&self, g: [T; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r] += self.inv_t[r][c] * g[c];
            }
        }
        out
    }
}

/// Dense local element matrix, `rows x cols` in node order.
#[derive(Debug, Clone)]
pub struct LocalMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> LocalMatrix<T> {
    pub fn zero(rows: usize, cols: usize) -> LocalMatrix<T> {
        LocalMatrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Stiffness matrix of one scalar component on the element.
pub fn local_stiffness<T: Real>(space: Space, map: &AffineMap<T>) -> LocalMatrix<T> {
    let degree = (2 * (space.order() - 1)).max(1);
    let quad = quadrature::<T>(degree);
    let n = space.node_count();
    let mut m = LocalMatrix::zero(n, n);
    let scale = map.det.abs(); // weights already carry the 1/6 reference volume
    for (q, w) in quad.points.iter().zip(&quad.weights) {
        let grads: Vec<[T; 3]> =
            basis_gradients(space, *q).into_iter().map(|g| map.push_gradient(g)).collect();
        for a in 0..n {
            for b in 0..n {
                let dot = grads[a][0] * grads[b][0]
                    + grads[a][1] * grads[b][1]
                    + grads[a][2] * grads[b][2];
                *m.at_mut(a, b) += *w * scale * dot;
            }
        }
    }
    m
}

/// Divergence blocks: for each direction d, rows over the 4 P1 pressure nodes
/// and columns over velocity nodes of `-∫ psi_k ∂_d phi_j`.
pub fn local_divergence<T: Real>(vel_space: Space, map: &AffineMap<T>) -> [LocalMatrix<T>; 3] {
    let quad = quadrature::<T>(2);
    let nv = vel_space.node_count();
    let mut out =
        [LocalMatrix::zero(4, nv), LocalMatrix::zero(4, nv), LocalMatrix::zero(4, nv)];
    let scale = map.det.abs();
    for (q, w) in quad.points.iter().zip(&quad.weights) {
        let psi = basis_values(Space::P1, *q);
        let grads: Vec<[T; 3]> =
            basis_gradients(vel_space, *q).into_iter().map(|g| map.push_gradient(g)).collect();
        for d in 0..3 {
            for k in 0..4 {
                for j in 0..nv {
                    *out[d].at_mut(k, j) -= *w * scale * psi[k] * grads[j][d];
                }
            }
        }
    }
    out
}

/// PSPG stabilization block: `delta_T h_T^2` times the P1 stiffness, with
/// `delta_T = 1/12` and `h_T = |T|^(1/3)`.
pub fn local_pspg<T: Real>(map: &AffineMap<T>) -> LocalMatrix<T> {
    let mut m = local_stiffness(Space::P1, map);
    let h2 = map.volume().powf(real(2.0 / 3.0));
    let delta = real::<T>(1.0 / 12.0);
    for v in &mut m.data {
        *v *= delta * h2;
    }
    m
}

/// Consistent or row-sum-lumped mass matrix; the lumped variant is diagonal.
pub fn local_mass<T: Real>(space: Space, map: &AffineMap<T>, lumped: bool) -> LocalMatrix<T> {
    let quad = quadrature::<T>(2 * space.order());
    let n = space.node_count();
    let mut m = LocalMatrix::zero(n, n);
    let scale = map.det.abs();
    for (q, w) in quad.points.iter().zip(&quad.weights) {
        let phi = basis_values(space, *q);
        for a in 0..n {
            for b in 0..n {
                *m.at_mut(a, b) += *w * scale * phi[a] * phi[b];
            }
        }
    }
    if lumped {
        let mut d = LocalMatrix::zero(n, n);
        for a in 0..n {
            let mut s = T::zero();
            for b in 0..n {
                s += m.at(a, b);
            }
            *d.at_mut(a, a) = s;
        }
        d
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ref_map() -> AffineMap<f64> {
        AffineMap::from_vertices(&REF_VERTS)
    }

    fn monomial_integral(a: u32, b: u32, c: u32) -> f64 {
        let f = |n: u32| -> f64 { (1..=n).product::<u32>().max(1) as f64 };
        f(a) * f(b) * f(c) / (1..=(a + b + c + 3)).product::<u32>() as f64
    }

    #[test]
    fn quadrature_exactness() {
        for degree in 1..=6usize {
            let q = quadrature::<f64>(degree);
            assert!(q.weights.iter().all(|&w| w > 0.0), "degree {degree} weights positive");
            let sum: f64 = q.weights.iter().sum();
            assert_relative_eq!(sum, 1.0 / 6.0, max_relative = 1e-14);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    for c in 0..=(degree as u32 - a - b) {
                        let num: f64 = q
                            .points
                            .iter()
                            .zip(&q.weights)
                            .map(|(p, w)| {
                                w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                            })
                            .sum();
                        let exact = monomial_integral(a, b, c);
                        assert_relative_eq!(num, exact, max_relative = 1e-13, epsilon = 1e-16);
                    }
                }
            }
        }
        let q = quadrature::<f64>(1);
        assert_eq!(q.points.len(), 1);
        assert_eq!(q.points[0], [0.25, 0.25, 0.25]);
        let q = quadrature::<f64>(2);
        assert_eq!(q.points.len(), 4);
        let x2: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0] * p[0]).sum();
        assert_relative_eq!(x2, 1.0 / 60.0, max_relative = 1e-14);
    }

    #[test]
    fn p1_stiffness_classical() {
        let a = local_stiffness(Space::P1, &ref_map());
        let expect = [
            [0.5, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0],
            [-1.0 / 6.0, 1.0 / 6.0, 0.0, 0.0],
            [-1.0 / 6.0, 0.0, 1.0 / 6.0, 0.0],
            [-1.0 / 6.0, 0.0, 0.0, 1.0 / 6.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert_relative_eq!(a.at(r, c), expect[r][c], epsilon = 1e-15);
            }
            let row: f64 = (0..4).map(|c| a.at(r, c)).sum();
            assert!(row.abs() < 1e-15);
        }
    }

    fn p2_nodes(map: &AffineMap<f64>) -> [[f64; 3]; 10] {
        let v: Vec<[f64; 3]> = REF_VERTS.iter().map(|p| map.apply(*p)).collect();
        let mut out = [[0.0; 3]; 10];
        out[..4].copy_from_slice(&v);
        for (t, e) in LOCAL_EDGES.iter().enumerate() {
            for d in 0..3 {
                out[4 + t][d] = 0.5 * (v[e[0]][d] + v[e[1]][d]);
            }
        }
        out
    }

    #[test]
    fn p2_stiffness_against_quadrature_oracle() {
        // independent recomputation at degree d+2, symmetry, and a bilinear-form identity
        let map = AffineMap::<f64>::from_vertices(&[
            [0.1, 0.0, 0.2],
            [1.3, 0.1, 0.0],
            [0.2, 1.1, 0.3],
            [0.0, 0.4, 0.9],
        ]);
        let a = local_stiffness(Space::P2, &map);
        let quad = quadrature::<f64>(4);
        let scale = map.det.abs();
        for r in 0..10 {
            for c in 0..10 {
                let mut oracle = 0.0;
                for (q, w) in quad.points.iter().zip(&quad.weights) {
                    let g = basis_gradients(Space::P2, *q);
                    let gr = map.push_gradient(g[r]);
                    let gc = map.push_gradient(g[c]);
                    oracle += w * scale * (gr[0] * gc[0] + gr[1] * gc[1] + gr[2] * gc[2]);
                }
                assert_relative_eq!(a.at(r, c), oracle, max_relative = 1e-13, epsilon = 1e-15);
                assert_relative_eq!(a.at(r, c), a.at(c, r), max_relative = 1e-14, epsilon = 1e-15);
            }
        }
        // applying A to the interpolant of x reproduces int grad(phi_i) . (1,0,0)
        let nodes = p2_nodes(&map);
        let coeffs: Vec<f64> = nodes.iter().map(|p| p[0]).collect();
        for i in 0..10 {
            let ax: f64 = (0..10).map(|j| a.at(i, j) * coeffs[j]).sum();
            let mut oracle = 0.0;
            for (q, w) in quad.points.iter().zip(&quad.weights) {
                let g = basis_gradients(Space::P2, *q);
                let gi = map.push_gradient(g[i]);
                oracle += w * scale * gi[0];
            }
            assert_relative_eq!(ax, oracle, max_relative = 1e-12, epsilon = 1e-14);
        }
        // patch test: P2 stiffness annihilates interpolants of constants
        for i in 0..10 {
            let s: f64 = (0..10).map(|j| a.at(i, j)).sum();
            assert!(s.abs() < 1e-13, "row {i}: {s}");
        }
    }

    #[test]
    fn stiffness_scaling_with_element_size() {
        // J = 2I scales the 3D stiffness by 2 (det ~ h^3, grad ~ 1/h)
        let scaled: [[f64; 3]; 4] =
            [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
        let a1 = local_stiffness(Space::P2, &ref_map());
        let a2 = local_stiffness(Space::P2, &AffineMap::from_vertices(&scaled));
        for i in 0..100 {
            assert_relative_eq!(a2.data[i], 2.0 * a1.data[i], max_relative = 1e-13, epsilon = 1e-15);
        }
    }

    #[test]
    fn divergence_identities() {
        let map = AffineMap::<f64>::from_vertices(&[
            [0.0, 0.1, 0.0],
            [1.1, 0.0, 0.2],
            [0.1, 0.9, 0.0],
            [0.3, 0.2, 1.2],
        ]);
        for space in [Space::P1, Space::P2] {
            let b = local_divergence(space, &map);
            let n = space.node_count();
            for d in 0..3 {
                for k in 0..4 {
                    let s: f64 = (0..n).map(|j| b[d].at(k, j)).sum();
                    assert!(s.abs() < 1e-14, "constant field row sum {s}");
                }
            }
            let nodes: Vec<[f64; 3]> = if space == Space::P2 {
                p2_nodes(&map).to_vec()
            } else {
                REF_VERTS.iter().map(|p| map.apply(*p)).collect()
            };
            // u = (x, y, z): sum_d B_d u_d = -3 * |T|/4 per pressure node
            for k in 0..4 {
                let mut s = 0.0;
                for d in 0..3 {
                    for j in 0..n {
                        s += b[d].at(k, j) * nodes[j][d];
                    }
                }
                assert_relative_eq!(s, -3.0 * map.volume() / 4.0, max_relative = 1e-12);
            }
            // u = (x,0,0): B_0 row sums against psi_k give -|T|/4
            for k in 0..4 {
                let s: f64 = (0..n).map(|j| b[0].at(k, j) * nodes[j][0]).sum();
                assert_relative_eq!(s, -map.volume() / 4.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn pspg_scalings() {
        let s = 6.0f64.cbrt();
        let verts = [[0.0, 0.0, 0.0], [s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]];
        let map = AffineMap::from_vertices(&verts);
        assert_relative_eq!(map.volume(), 1.0, max_relative = 1e-14);
        let c = local_pspg(&map);
        let a = local_stiffness(Space::P1, &map);
        for i in 0..16 {
            assert_relative_eq!(c.data[i], a.data[i] / 12.0, max_relative = 1e-14, epsilon = 1e-16);
        }
        for r in 0..4 {
            let row: f64 = (0..4).map(|cc| c.at(r, cc)).sum();
            assert!(row.abs() < 1e-15);
        }
        // scaling volume by 8 scales C by 8^(2/3) times the stiffness scaling 2
        let verts2 = verts.map(|v| v.map(|x| 2.0 * x));
        let c2 = local_pspg(&AffineMap::from_vertices(&verts2));
        for i in 0..16 {
            assert_relative_eq!(c2.data[i], 8.0 * c.data[i], max_relative = 1e-13, epsilon = 1e-16);
        }
    }

    #[test]
    fn mass_matrices() {
        let map = ref_map();
        let v = map.volume();
        let m = local_mass(Space::P1, &map, false);
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r == c { 2.0 } else { 1.0 } * v / 20.0;
                assert_relative_eq!(m.at(r, c), expect, max_relative = 1e-13);
            }
        }
        let ml = local_mass(Space::P1, &map, true);
        for r in 0..4 {
            assert_relative_eq!(ml.at(r, r), v / 4.0, max_relative = 1e-13);
        }
        let m2 = local_mass(Space::P2, &map, false);
        let total: f64 = m2.data.iter().sum();
        assert_relative_eq!(total, v, max_relative = 1e-13);
        let m2l = local_mass(Space::P2, &map, true);
        let total: f64 = (0..10).map(|i| m2l.at(i, i)).sum();
        assert_relative_eq!(total, v, max_relative = 1e-13);
    }

    #[test]
    fn generic_scalar_smoke() {
        let verts: [[f32; 3]; 4] =
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let a = local_stiffness(Space::P2, &AffineMap::from_vertices(&verts));
        for r in 0..10 {
            let row: f32 = (0..10).map(|c| a.at(r, c)).sum();
            assert!(row.abs() < 1e-5);
        }
    }
}
