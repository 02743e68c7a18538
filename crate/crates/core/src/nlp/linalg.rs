//! Dense symmetric-indefinite factorization for small KKT systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrices whose 1-norm condition estimate exceeds this are treated as singular.
pub const SINGULAR_COND: f64 = 1e14;

// Bunch–Kaufman pivot threshold (1 + √17)/8
const ALPHA: f64 = 0.640_388_203_202_208;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Block {
    One,
    /// First row of a 2×2 block; the next row belongs to it.
    Two,
    Second,
}

/// Counts of positive, negative and zero eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L` and 1×1/2×2 blocks in `D`.
#[derive(Clone, Debug)]
pub struct Ldlt {
    l: DMatrix<f64>,
    d: DMatrix<f64>,
    blocks: Vec<Block>,
    perm: Vec<usize>,
    norm1: f64,
}

impl Ldlt {
    /// Factorizes the symmetric matrix `a` (only the lower triangle is read).
    pub fn factor(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut w = DMatrix::from_fn(n, n, |i, j| if i >= j { a[(i, j)] } else { a[(j, i)] });
        let norm1 = (0..n).map(|j| w.column(j).abs().sum()).fold(0.0, f64::max);
        let mut l = DMatrix::identity(n, n);
        let mut d = DMatrix::zeros(n, n);
        let mut blocks = vec![Block::One; n];
        let mut perm: Vec<usize> = (0..n).collect();

        let swap = |w: &mut DMatrix<f64>, l: &mut DMatrix<f64>, perm: &mut Vec<usize>, k: usize, i: usize, j: usize| {
            if i == j {
                return;
            }
            w.swap_rows(i, j);
            w.swap_columns(i, j);
            for c in 0..k {
                let t = l[(i, c)];
                l[(i, c)] = l[(j, c)];
                l[(j, c)] = t;
            }
            perm.swap(i, j);
        };

        let mut k = 0;
        while k < n {
            let akk = w[(k, k)].abs();
            let (r, lambda) = (k + 1..n)
                .map(|i| (i, w[(i, k)].abs()))
                .fold((k, 0.0), |best, c| if c.1 > best.1 { c } else { best });
            let mut two = false;
            if akk.max(lambda) == 0.0 {
                // zero column: 1×1 zero pivot, nothing to eliminate
            } else if akk >= ALPHA * lambda {
                // 1×1 pivot in place
            } else {
                let sigma = (k..n)
                    .filter(|&j| j != r)
                    .map(|j| w[(r, j)].abs())
                    .fold(0.0, f64::max);
                if akk * sigma >= ALPHA * lambda * lambda {
                    // 1×1 pivot in place
                } else if w[(r, r)].abs() >= ALPHA * sigma {
                    swap(&mut w, &mut l, &mut perm, k, k, r);
                } else {
                    swap(&mut w, &mut l, &mut perm, k, k + 1, r);
                    two = true;
                }
            }

            if !two {
                let p = w[(k, k)];
                d[(k, k)] = p;
                blocks[k] = Block::One;
                if p != 0.0 {
                    for i in k + 1..n {
                        l[(i, k)] = w[(i, k)] / p;
                    }
                    for j in k + 1..n {
                        for i in j..n {
                            let v = w[(i, j)] - l[(i, k)] * p * l[(j, k)];
                            w[(i, j)] = v;
                            w[(j, i)] = v;
                        }
                    }
                }
                k += 1;
            } else {
                let (a11, a21, a22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
                let det = a11 * a22 - a21 * a21;
                d[(k, k)] = a11;
                d[(k + 1, k)] = a21;
                d[(k, k + 1)] = a21;
                d[(k + 1, k + 1)] = a22;
                blocks[k] = Block::Two;
                blocks[k + 1] = Block::Second;
                for i in k + 2..n {
                    let (b1, b2) = (w[(i, k)], w[(i, k + 1)]);
                    l[(i, k)] = (b1 * a22 - b2 * a21) / det;
                    l[(i, k + 1)] = (b2 * a11 - b1 * a21) / det;
                }
                for j in k + 2..n {
                    for i in j..n {
                        let v = w[(i, j)] - l[(i, k)] * w[(j, k)] - l[(i, k + 1)] * w[(j, k + 1)];
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                }
                k += 2;
            }
        }
        Self {
            l,
            d,
            blocks,
            perm,
            norm1,
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    fn has_zero_pivot(&self) -> bool {
        (0..self.dim()).any(|k| match self.blocks[k] {
            Block::One => self.d[(k, k)] == 0.0,
            Block::Two => {
                self.d[(k, k)] * self.d[(k + 1, k + 1)] - self.d[(k + 1, k)].powi(2) == 0.0
            }
            Block::Second => false,
        })
    }

    /// Solves `A x = b` without any singularity check.
    pub fn solve_unchecked(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for j in 0..n {
            let yj = y[j];
            for i in j + 1..n {
                y[i] -= self.l[(i, j)] * yj;
            }
        }
        let mut k = 0;
        while k < n {
            match self.blocks[k] {
                Block::One => {
                    y[k] /= self.d[(k, k)];
                    k += 1;
                }
                _ => {
                    let (a11, a21, a22) = (self.d[(k, k)], self.d[(k + 1, k)], self.d[(k + 1, k + 1)]);
                    let det = a11 * a22 - a21 * a21;
                    let (y1, y2) = (y[k], y[k + 1]);
                    y[k] = (a22 * y1 - a21 * y2) / det;
                    y[k + 1] = (a11 * y2 - a21 * y1) / det;
                    k += 2;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in j + 1..n {
                s -= self.l[(i, j)] * y[i];
            }
            y[j] = s;
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }

    /// `‖A‖₁ ‖A⁻¹‖₁`, with `A⁻¹` formed column by column (the systems here are tiny).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        if self.has_zero_pivot() {
            return f64::INFINITY;
        }
        let mut inv_norm = 0.0f64;
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let col = self.solve_unchecked(&e);
            let s = col.abs().sum();
            if !s.is_finite() {
                return f64::INFINITY;
            }
            inv_norm = inv_norm.max(s);
        }
        self.norm1 * inv_norm
    }

    pub fn check(&self) -> Result<()> {
        let cond = self.condition_estimate();
        if cond > SINGULAR_COND || !cond.is_finite() {
            return Err(Error::Singular { cond });
        }
        Ok(())
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check()?;
        Ok(self.solve_unchecked(b))
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        let mut tally = |v: f64| {
            if v > 0.0 {
                out.positive += 1
            } else if v < 0.0 {
                out.negative += 1
            } else {
                out.zero += 1
            }
        };
        let n = self.dim();
        let mut k = 0;
        while k < n {
            match self.blocks[k] {
                Block::One => {
                    tally(self.d[(k, k)]);
                    k += 1;
                }
                _ => {
                    let (a11, a21, a22) = (self.d[(k, k)], self.d[(k + 1, k)], self.d[(k + 1, k + 1)]);
                    let det = a11 * a22 - a21 * a21;
                    if det < 0.0 {
                        tally(1.0);
                        tally(-1.0);
                    } else if det > 0.0 {
                        tally(a11 + a22);
                        tally(a11 + a22);
                    } else {
                        tally(a11 + a22);
                        tally(0.0);
                    }
                    k += 2;
                }
            }
        }
        out
    }
}

/// Factorization of the saddle-point matrix `[H, Aᵀ; A, 0]`.
#[derive(Clone, Debug)]
pub struct KktFactor {
    ldlt: Ldlt,
    n: usize,
    m: usize,
}

impl KktFactor {
    pub fn new(h: &DMatrix<f64>, a: &DMatrix<f64>) -> Self {
        let n = h.nrows();
        let m = a.nrows();
        assert!(m == 0 || a.ncols() == n, "constraint matrix width mismatch");
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(h);
        if m > 0 {
            k.view_mut((n, 0), (m, n)).copy_from(a);
            k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        }
        Self {
            ldlt: Ldlt::factor(&k),
            n,
            m,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.ldlt.check()
    }

    /// Inertia is correct when `H` is positive definite on the null space of `A`.
    pub fn has_correct_inertia(&self) -> bool {
        let i = self.ldlt.inertia();
        i.positive == self.n && i.negative == self.m && i.zero == 0
    }

    /// Solves `[H, Aᵀ; A, 0] [d; −λ] = −[g; c]`; returns `(d, λ)`.
    pub fn solve(&self, g: &DVector<f64>, c: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut rhs = DVector::zeros(self.n + self.m);
        rhs.rows_mut(0, self.n).copy_from(&(-g));
        if self.m > 0 {
            rhs.rows_mut(self.n, self.m).copy_from(&(-c));
        }
        let sol = self.ldlt.solve_unchecked(&rhs);
        let d = sol.rows(0, self.n).into_owned();
        let lambda = -sol.rows(self.n, self.m).into_owned();
        (d, lambda)
    }

    /// Solves with an arbitrary right-hand side `[top; bottom]`.
    pub fn solve_raw(&self, top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
        let mut rhs = DVector::zeros(self.n + self.m);
        rhs.rows_mut(0, self.n).copy_from(top);
        if self.m > 0 {
            rhs.rows_mut(self.n, self.m).copy_from(bottom);
        }
        self.ldlt.solve_unchecked(&rhs)
    }
}

/// Minimum-norm solution of `A x = b` for full-row-rank `A`; `None` if rank deficient.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(DVector::zeros(a.ncols()));
    }
    let gram = a * a.transpose();
    let chol = gram.clone().cholesky()?;
    let y = chol.solve(b);
    let x = a.transpose() * y;
    // reject numerically rank-deficient rows
    let scale = gram.diagonal().max();
    let diag_min = chol.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if diag_min <= 1e-14 * scale {
        return None;
    }
    Some(x)
}

/// Nonnegative least squares `min ‖A x − b‖ s.t. x ≥ 0` (Lawson–Hanson active set).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.abs().max().max(1.0) * b.abs().max().max(1.0) * n as f64;
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        for _ in 0..(3 * n + 10) {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let ap = a.select_columns(&idx);
            let z = match ap.clone().svd(true, true).solve(b, 1e-14) {
                Ok(z) => z,
                Err(_) => break,
            };
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}
