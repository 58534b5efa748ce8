//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `size × size` matrix holding `blocks` copies of `[[0, 1], [-1, 0]]` on the
/// diagonal starting at row/column `offset`; everything else zero.
pub fn symplectic_form(size: usize, offset: usize, blocks: usize) -> RMat {
    assert!(offset + 2 * blocks <= size);
    let mut j = RMat::zeros(size, size);
    for b in 0..blocks {
        let i = offset + 2 * b;
        j[(i, i + 1)] = 1.0;
        j[(i + 1, i)] = -1.0;
    }
    j
}

/// Cayley transform `(I - X/2)^{-1} (I + X/2)`. Orthogonal with unit
/// determinant whenever `x` is antisymmetric.
pub fn cayley(x: &RMat) -> RMat {
    let n = x.nrows();
    let half = x * 0.5;
    let id = RMat::identity(n, n);
    let lhs = &id - &half;
    let rhs = &id + &half;
    lhs.lu()
        .solve(&rhs)
        .expect("I - X/2 is invertible for antisymmetric X")
}

/// Haar-distributed special orthogonal matrix: QR of a Gaussian matrix with
/// the sign of R's diagonal absorbed into Q, then one column flipped if
/// needed to land in SO(n).
pub fn random_special_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> RMat {
    if n == 0 {
        return RMat::zeros(0, 0);
    }
    let g = RMat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Random antisymmetric matrix with i.i.d. N(0, scale²) upper-triangle entries.
pub fn random_antisymmetric<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> RMat {
    let mut x = RMat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
            x[(i, j)] = v;
            x[(j, i)] = -v;
        }
    }
    x
}

/// One Newton–Schulz polar step `Q (3I - QᵀQ) / 2`; pulls a nearly orthogonal
/// matrix back onto the manifold quadratically.
pub fn reorthonormalize(q: &RMat) -> RMat {
    let n = q.ncols();
    let gram = q.transpose() * q;
    let corr = (RMat::identity(n, n) * 3.0 - gram) * 0.5;
    q * corr
}

pub fn orthogonality_defect(q: &RMat) -> f64 {
    let n = q.ncols();
    max_abs(&(q.transpose() * q - RMat::identity(n, n)))
}

pub fn antisymmetric_part(m: &RMat) -> RMat {
    (m - m.transpose()) * 0.5
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_c(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Matrix ∞-norm (maximum absolute row sum).
pub fn inf_norm_c(m: &CMat) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Deviation from purity `‖Γ Γ† − I‖∞` for a momentum-space covariance.
pub fn purity_defect(g: &CMat) -> f64 {
    let n = g.nrows();
    inf_norm_c(&(g * g.adjoint() - CMat::identity(n, n)))
}

/// Frobenius inner product of two real matrices.
pub fn frob_dot(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Hermitian eigendecomposition; eigenvalues ascending with matching columns.
pub fn hermitian_eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let eig = nalgebra::linalg::SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// LU factorisation with partial pivoting of a small dense complex matrix,
/// stored column-major.
#[derive(Clone, Debug)]
pub struct ComplexLu {
    n: usize,
    a: Vec<Complex64>,
    perm: Vec<usize>,
    singular: bool,
}

impl ComplexLu {
    pub fn new(m: &CMat) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols());
        let mut a: Vec<Complex64> = m.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        for k in 0..n {
            let col = &a[k * n..(k + 1) * n];
            let (p, best) = (k..n).map(|i| (i, col[i].norm_sqr())).fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                perm.swap(k, p);
                for j in 0..n {
                    a.swap(j * n + k, j * n + p);
                }
            }
            let inv = 1.0 / a[k * n + k];
            for i in (k + 1)..n {
                a[k * n + i] *= inv;
            }
            let (left, right) = a.split_at_mut((k + 1) * n);
            let lcol = &left[k * n..];
            for j in (k + 1)..n {
                let col = &mut right[(j - k - 1) * n..(j - k) * n];
                let f = col[k];
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for i in (k + 1)..n {
                    col[i] -= lcol[i] * f;
                }
            }
        }
        ComplexLu { n, a, perm, singular }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `M X = rhs` column by column.
    pub fn solve(&self, rhs: &CMat) -> CMat {
        let n = self.n;
        assert_eq!(rhs.nrows(), n);
        let mut out = CMat::zeros(n, rhs.ncols());
        for c in 0..rhs.ncols() {
            let mut x: Vec<Complex64> = self.perm.iter().map(|&p| rhs[(p, c)]).collect();
            for k in 0..n {
                let xk = x[k];
                let col = &self.a[k * n..(k + 1) * n];
                for i in (k + 1)..n {
                    x[i] -= col[i] * xk;
                }
            }
            for k in (0..n).rev() {
                let col = &self.a[k * n..(k + 1) * n];
                x[k] /= col[k];
                let xk = x[k];
                for i in 0..k {
                    x[i] -= col[i] * xk;
                }
            }
            out.column_mut(c).copy_from_slice(&x);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cayley_of_antisymmetric_is_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_antisymmetric(7, 0.8, &mut rng);
        let c = cayley(&x);
        assert!(orthogonality_defect(&c) < 1e-13);
        assert!((c.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_so_has_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..9 {
            let q = random_special_orthogonal(n, &mut rng);
            assert!(orthogonality_defect(&q) < 1e-12);
            assert!((q.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_lu_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let re = random_antisymmetric(9, 1.0, &mut rng);
        let im = random_antisymmetric(9, 1.0, &mut rng) + RMat::identity(9, 9);
        let m = CMat::from_fn(9, 9, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
        let rhs = CMat::from_fn(9, 3, |i, j| Complex64::new(i as f64, j as f64 - 1.0));
        let lu = ComplexLu::new(&m);
        assert!(!lu.is_singular());
        let x = lu.solve(&rhs);
        assert!(max_abs_c(&(&m * x - rhs)) < 1e-12);
        assert!(ComplexLu::new(&CMat::zeros(3, 3)).is_singular());
    }

    #[test]
    fn newton_schulz_removes_small_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_special_orthogonal(6, &mut rng);
        let noisy = &q + random_antisymmetric(6, 1e-7, &mut rng) * 0.3 + RMat::identity(6, 6) * 1e-7;
        assert!(orthogonality_defect(&noisy) > 1e-8);
        let fixed = reorthonormalize(&reorthonormalize(&noisy));
        assert!(orthogonality_defect(&fixed) < 1e-14);
    }
}
