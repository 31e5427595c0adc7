//! Householder QR with column pivoting, numerical rank and minimum-norm
//! rank-ℓ solves through a complete orthogonal decomposition.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math;

/// `Q A Π = [R; 0]` with `|r_11| ≥ |r_22| ≥ …`.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    /// R on and above the diagonal, Householder vectors (implicit unit
    /// leading entry) below it.
    qr: Matrix,
    tau: Vec<f64>,
    perm: Vec<usize>,
}

/// The input matrix had a NaN or infinite entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonFiniteMatrix;

impl core::fmt::Display for NonFiniteMatrix {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("matrix has non-finite entries")
    }
}

impl core::error::Error for NonFiniteMatrix {}

/// Householder reflector for `x`: returns `(beta, tau)` and overwrites
/// `x[1..]` with the scaled vector `v` (`v_0 = 1`).
fn householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail = math::norm2(&x[1..]);
    if tail == 0.0 {
        return (alpha, 0.0);
    }
    let mut beta = math::hypot(alpha, tail);
    if alpha > 0.0 {
        beta = -beta;
    }
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    (beta, tau)
}

fn column_norm(a: &Matrix, j: usize, from: usize) -> f64 {
    let col: Vec<f64> = (from..a.rows()).map(|i| a[(i, j)]).collect();
    math::norm2(&col)
}

impl PivotedQr {
    pub fn new(a: &Matrix) -> Result<Self, NonFiniteMatrix> {
        if !a.is_finite() {
            return Err(NonFiniteMatrix);
        }
        let (m, n) = (a.rows(), a.cols());
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut tau = vec![0.0; steps];
        for k in 0..steps {
            // exact norms of the trailing columns; the first maximum wins
            let mut best = k;
            let mut best_norm = column_norm(&qr, k, k);
            for j in k + 1..n {
                let nj = column_norm(&qr, j, k);
                if nj > best_norm {
                    best = j;
                    best_norm = nj;
                }
            }
            if best != k {
                perm.swap(k, best);
                for i in 0..m {
                    let row = qr.row_mut(i);
                    row.swap(k, best);
                }
            }
            let mut x: Vec<f64> = (k..m).map(|i| qr[(i, k)]).collect();
            let (beta, t) = householder(&mut x);
            tau[k] = t;
            qr[(k, k)] = beta;
            for (i, v) in (k + 1..m).zip(&x[1..]) {
                qr[(i, k)] = *v;
            }
            if t != 0.0 {
                for j in k + 1..n {
                    let mut s = qr[(k, j)];
                    for i in k + 1..m {
                        s += qr[(i, k)] * qr[(i, j)];
                    }
                    s *= t;
                    qr[(k, j)] -= s;
                    for i in k + 1..m {
                        let v = qr[(i, k)];
                        qr[(i, j)] -= s * v;
                    }
                }
            }
        }
        Ok(Self {
            rows: m,
            cols: n,
            qr,
            tau,
            perm,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column `j` of `AΠ` is column `permutation()[j]` of `A`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `|r_ii|` for `i < min(L, q)`, non-increasing.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|i| math::abs(self.qr[(i, i)])).collect()
    }

    /// The `min(L, q) × q` upper trapezoidal factor.
    pub fn r(&self) -> Matrix {
        Matrix::from_fn(self.tau.len(), self.cols, |i, j| if j >= i { self.qr[(i, j)] } else { 0.0 })
    }

    /// `b ← Q b` with `Q` from `Q A Π = [R; 0]`.
    pub fn apply_q(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.rows);
        for k in 0..self.tau.len() {
            self.reflect(k, b);
        }
    }

    /// `b ← Qᵀ b`.
    pub fn apply_qt(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.rows);
        for k in (0..self.tau.len()).rev() {
            self.reflect(k, b);
        }
    }

    fn reflect(&self, k: usize, b: &mut [f64]) {
        let t = self.tau[k];
        if t == 0.0 {
            return;
        }
        let mut s = b[k];
        for i in k + 1..self.rows {
            s += self.qr[(i, k)] * b[i];
        }
        s *= t;
        b[k] -= s;
        for i in k + 1..self.rows {
            b[i] -= s * self.qr[(i, k)];
        }
    }

    /// Largest `ℓ` with `|r_ℓℓ| ≥ δ |r_11|`; zero for the zero matrix.
    pub fn numerical_rank(&self, delta: f64) -> usize {
        let d = self.diagonal();
        let Some(&r11) = d.first() else { return 0 };
        if r11 == 0.0 {
            return 0;
        }
        d.iter().take_while(|&&r| r >= delta * r11).count()
    }

    /// `sc = |r_11| / |r_qq|` (infinite if `r_qq = 0` or `L < q`) and whether
    /// `δ·sc ≥ 1`, which certifies rank deficiency at threshold `δ`.
    pub fn subcondition(&self, delta: f64) -> (f64, bool) {
        let d = self.diagonal();
        let sc = match (d.first(), d.get(self.cols.saturating_sub(1))) {
            (Some(&r11), Some(&rqq)) if rqq > 0.0 => r11 / rqq,
            _ => f64::INFINITY,
        };
        (sc, delta * sc >= 1.0)
    }

    /// Complete orthogonal decomposition of the leading `ℓ` rows of `R`:
    /// `[R11 R12]ᵀ = Z [T; 0]`.
    fn cod(&self, rank: usize) -> Cod {
        let q = self.cols;
        let rt = Matrix::from_fn(q, rank, |i, j| if i >= j { self.qr[(j, i)] } else { 0.0 });
        let mut z = rt;
        let mut tau = vec![0.0; rank];
        for k in 0..rank {
            let mut x: Vec<f64> = (k..q).map(|i| z[(i, k)]).collect();
            let (beta, t) = householder(&mut x);
            tau[k] = t;
            z[(k, k)] = beta;
            for (i, v) in (k + 1..q).zip(&x[1..]) {
                z[(i, k)] = *v;
            }
            if t != 0.0 {
                for j in k + 1..rank {
                    let mut s = z[(k, j)];
                    for i in k + 1..q {
                        s += z[(i, k)] * z[(i, j)];
                    }
                    s *= t;
                    z[(k, j)] -= s;
                    for i in k + 1..q {
                        let v = z[(i, k)];
                        z[(i, j)] -= s * v;
                    }
                }
            }
        }
        Cod { factors: z, tau, rank }
    }

    /// Minimum-norm minimiser of `‖A_ℓ x − b‖`, i.e. `x = A_ℓ⁺ b`.
    pub fn pseudo_solve(&self, b: &[f64], rank: usize) -> Vec<f64> {
        assert!(rank <= self.tau.len(), "rank exceeds min(L, q)");
        let mut c = b.to_vec();
        self.apply_q(&mut c);
        let cod = self.cod(rank);
        let mut y = vec![0.0; self.cols];
        // Tᵀ w = c
        for i in 0..rank {
            let mut s = c[i];
            for j in 0..i {
                s -= cod.factors[(j, i)] * y[j];
            }
            y[i] = s / cod.factors[(i, i)];
        }
        cod.apply_z(&mut y);
        self.unpermute(&y)
    }

    /// `A_ℓ⁺ (−F)`: the Gauss-Newton correction at rank `ℓ`.
    pub fn solve_min_norm(&self, f: &[f64], rank: usize) -> Vec<f64> {
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        self.pseudo_solve(&neg, rank)
    }

    /// Orthonormal basis (columns) of the null space of the rank-`ℓ`
    /// approximation, `q × (q − ℓ)`.
    pub fn null_space(&self, rank: usize) -> Matrix {
        let q = self.cols;
        let cod = self.cod(rank);
        let mut basis = Matrix::zeros(q, q - rank);
        for j in rank..q {
            let mut e = vec![0.0; q];
            e[j] = 1.0;
            cod.apply_z(&mut e);
            let x = self.unpermute(&e);
            for i in 0..q {
                basis[(i, j - rank)] = x[i];
            }
        }
        basis
    }

    /// `(AᵀA)⁺` truncated at rank `ℓ`.
    pub fn gram_pseudo_inverse(&self, rank: usize) -> Matrix {
        let q = self.cols;
        let cod = self.cod(rank);
        // columns of Z [T⁻ᵀ; 0]
        let mut m = Matrix::zeros(q, rank);
        for col in 0..rank {
            let mut y = vec![0.0; q];
            for i in 0..rank {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for j in 0..i {
                    s -= cod.factors[(j, i)] * y[j];
                }
                y[i] = s / cod.factors[(i, i)];
            }
            cod.apply_z(&mut y);
            let x = self.unpermute(&y);
            for i in 0..q {
                m[(i, col)] = x[i];
            }
        }
        m.mul(&m.transpose())
    }

    fn unpermute(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for (j, &p) in self.perm.iter().enumerate() {
            x[p] = y[j];
        }
        x
    }
}

struct Cod {
    factors: Matrix,
    tau: Vec<f64>,
    rank: usize,
}

impl Cod {
    /// `y ← Z y`.
    fn apply_z(&self, y: &mut [f64]) {
        let q = y.len();
        for k in (0..self.rank).rev() {
            let t = self.tau[k];
            if t == 0.0 {
                continue;
            }
            let mut s = y[k];
            for i in k + 1..q {
                s += self.factors[(i, k)] * y[i];
            }
            s *= t;
            y[k] -= s;
            for i in k + 1..q {
                y[i] -= s * self.factors[(i, k)];
            }
        }
    }
}
