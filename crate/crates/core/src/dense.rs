//! Dense symmetric-indefinite LDL^T factorization with Bunch-Kaufman pivoting
//! for the coarse-grid saddle-point solve. Sized for the unstructured coarse
//! mesh (hundreds to a few thousand unknowns). Exactly singular pivots (the
//! pressure null space of enclosed flows) are replaced by zero reciprocals,
//! turning the solve into a pseudo-solve on the range; callers project the
//! solution afterwards.

use crate::scalar::{real, Real};

#[derive(Debug, Clone)]
pub struct DenseMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zero(n: usize) -> DenseMatrix<T> {
        DenseMatrix { n, data: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.n + c]
    }

    pub fn swap_rows_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.n {
            self.data.swap(a * self.n + j, b * self.n + j);
        }
        for i in 0..self.n {
            self.data.swap(i * self.n + a, i * self.n + b);
        }
    }

    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        for r in 0..self.n {
            let mut acc = T::zero();
            for c in 0..self.n {
                acc += self.at(r, c) * x[c];
            }
            y[r] = acc;
        }
    }
}

enum PivotBlock<T> {
    /// 1x1 pivot with reciprocal (zero for a singular pivot).
    One(T),
    /// 2x2 pivot: inverse entries (i00, i01, i11).
    Two(T, T, T),
}

/// LDL^T factorization with Bunch-Kaufman partial pivoting.
pub struct LdltFactor<T> {
    n: usize,
    /// Unit lower factor (strictly lower part; unit diagonal implied), stored
    /// in the working matrix.
    l: DenseMatrix<T>,
    pivots: Vec<PivotBlock<T>>,
    /// Pivot start index for each block (parallel to `pivots`).
    starts: Vec<usize>,
    /// Row/col swaps in application order: (position, partner).
    swaps: Vec<(usize, usize)>,
    pub rank_deficiency: usize,
}

impl<T: Real> LdltFactor<T> {
    pub fn factor(a: &DenseMatrix<T>) -> LdltFactor<T> {
        let n = a.n;
        let mut w = a.clone();
        let alpha: T = (T::one() + real::<T>(17.0).sqrt()) / real(8.0);
        let mut scale = T::zero();
        for v in &w.data {
            scale = scale.max(v.abs());
        }
        let tol = real::<T>(1e-14) * scale.max(T::one());

        let mut pivots = Vec::new();
        let mut starts = Vec::new();
        let mut swaps = Vec::new();
        let mut rank_deficiency = 0usize;
        let mut k = 0usize;
        while k < n {
            // find lambda = max |w(i,k)| below the diagonal
            let mut lam = T::zero();
            let mut r = k;
            for i in (k + 1)..n {
                if w.at(i, k).abs() > lam {
                    lam = w.at(i, k).abs();
                    r = i;
                }
            }
            let akk = w.at(k, k).abs();
            let mut use_two = false;
            let mut swap_with: Option<usize> = None;
            if lam > T::zero() && akk < alpha * lam {
                // sigma = max off-diagonal magnitude in column r (rows k..n)
                let mut sigma = T::zero();
                for i in k..n {
                    if i != r {
                        sigma = sigma.max(w.at(i, r).abs());
                    }
                }
                if akk * sigma < alpha * lam * lam {
                    if w.at(r, r).abs() >= alpha * sigma {
                        swap_with = Some(r); // 1x1 pivot at r
                    } else {
                        use_two = true; // 2x2 pivot (k, r)
                    }
                }
            }

            if !use_two {
                if let Some(r) = swap_with {
                    w.swap_rows_cols(k, r);
                    swaps.push((k, r));
                }
                let d = w.at(k, k);
                starts.push(k);
                if d.abs() <= tol {
                    rank_deficiency += 1;
                    pivots.push(PivotBlock::One(T::zero()));
                    // leave the column; treat as annihilated
                    for i in (k + 1)..n {
                        *w.at_mut(i, k) = T::zero();
                    }
                } else {
                    let dinv = T::one() / d;
                    for i in (k + 1)..n {
                        let lik = w.at(i, k) * dinv;
                        for j in (k + 1)..=i {
                            let v = w.at(i, j) - lik * w.at(k, j);
                            *w.at_mut(i, j) = v;
                            *w.at_mut(j, i) = v;
                        }
                        *w.at_mut(i, k) = lik;
                    }
                    pivots.push(PivotBlock::One(dinv));
                }
                k += 1;
            } else {
                if r != k + 1 {
                    w.swap_rows_cols(k + 1, r);
                    swaps.push((k + 1, r));
                }
                let (d00, d01, d11) = (w.at(k, k), w.at(k + 1, k), w.at(k + 1, k + 1));
                let det = d00 * d11 - d01 * d01;
                debug_assert!(det.abs() > T::zero(), "2x2 pivot singular");
                let i00 = d11 / det;
                let i01 = -d01 / det;
                let i11 = d00 / det;
                starts.push(k);
                for i in (k + 2)..n {
                    let b0 = w.at(i, k);
                    let b1 = w.at(i, k + 1);
                    let l0 = i00 * b0 + i01 * b1;
                    let l1 = i01 * b0 + i11 * b1;
                    for j in (k + 2)..=i {
                        let v = w.at(i, j) - l0 * w.at(k, j) - l1 * w.at(k + 1, j);
                        *w.at_mut(i, j) = v;
                        *w.at_mut(j, i) = v;
                    }
                    *w.at_mut(i, k) = l0;
                    *w.at_mut(i, k + 1) = l1;
                }
                pivots.push(PivotBlock::Two(i00, i01, i11));
                k += 2;
            }
        }
        LdltFactor { n, l: w, pivots, starts, swaps, rank_deficiency }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for &(a, b_) in &self.swaps {
            x.swap(a, b_);
        }
        // forward: L y = x (unit lower, skipping pivot-block columns
        // according to block structure)
        for (blk, &s) in self.pivots.iter().zip(&self.starts) {
            match blk {
                PivotBlock::One(_) => {
                    let xs = x[s];
                    for i in (s + 1)..n {
                        x[i] -= self.l.at(i, s) * xs;
                    }
                }
                PivotBlock::Two(..) => {
                    let (x0, x1) = (x[s], x[s + 1]);
                    for i in (s + 2)..n {
                        x[i] -= self.l.at(i, s) * x0 + self.l.at(i, s + 1) * x1;
                    }
                }
            }
        }
        // diagonal blocks
        for (blk, &s) in self.pivots.iter().zip(&self.starts) {
            match blk {
                PivotBlock::One(dinv) => x[s] *= *dinv,
                PivotBlock::Two(i00, i01, i11) => {
                    let (b0, b1) = (x[s], x[s + 1]);
                    x[s] = *i00 * b0 + *i01 * b1;
                    x[s + 1] = *i01 * b0 + *i11 * b1;
                }
            }
        }
        // backward: L^T z = x
        for (blk, &s) in self.pivots.iter().zip(&self.starts).rev() {
            match blk {
                PivotBlock::One(_) => {
                    let mut acc = x[s];
                    for i in (s + 1)..n {
                        acc -= self.l.at(i, s) * x[i];
                    }
                    x[s] = acc;
                }
                PivotBlock::Two(..) => {
                    let (mut a0, mut a1) = (x[s], x[s + 1]);
                    for i in (s + 2)..n {
                        a0 -= self.l.at(i, s) * x[i];
                        a1 -= self.l.at(i, s + 1) * x[i];
                    }
                    x[s] = a0;
                    x[s + 1] = a1;
                }
            }
        }
        for &(a, b_) in self.swaps.iter().rev() {
            x.swap(a, b_);
        }
        x
    }
}
