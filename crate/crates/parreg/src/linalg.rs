//! Dense complex linear algebra for small fiber and metric matrices.
//!
//! Fibers in this crate are low-dimensional (N <= 8), so the kernels here
//! favour robustness over asymptotics: LU with partial pivoting, the shifted
//! complex QR iteration for eigenvalues, and scaling-and-squaring Pade(13)
//! for the matrix exponential.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// 1x1 matrix holding a single scalar.
    pub fn scalar(z: C64) -> Self {
        CMat { n: 1, data: vec![z] }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "rows must form a square matrix");
        CMat { n, data: rows.iter().flatten().copied().collect() }
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "rows must form a square matrix");
        CMat {
            n,
            data: rows.iter().flatten().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    pub fn from_vec(n: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), n * n);
        CMat { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!(self.n, other.n);
        CMat {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!(self.n, other.n);
        CMat {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> CMat {
        CMat { n: self.n, data: self.data.iter().map(|a| a * z).collect() }
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        let n = self.n;
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += self[(i, j)] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn adjoint(&self) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn hermitian_part(&self) -> CMat {
        self.add(&self.adjoint()).scale(C64::new(0.5, 0.0))
    }

    /// Hilbert-Schmidt (Frobenius) norm; the fiber norm used throughout.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Operator norm estimate: for 1x1 exact, otherwise the Frobenius bound.
    pub fn op_norm_bound(&self) -> f64 {
        if self.n == 1 {
            self.data[0].norm()
        } else {
            self.frobenius_norm()
        }
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut p, mut best) = (k, a[k * n + k].norm());
            for i in k + 1..n {
                let v = a[i * n + k].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(format!(
                    "zero pivot at column {k} in LU factorization"
                )));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let m = a[i * n + k] / pivot;
                a[i * n + k] = m;
                for j in k + 1..n {
                    let akj = a[k * n + j];
                    a[i * n + j] -= m * akj;
                }
            }
        }
        Ok(Lu { n, a, piv })
    }

    pub fn inverse(&self) -> Result<CMat> {
        let lu = self.lu()?;
        let n = self.n;
        let mut out = CMat::zeros(n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            e[j] = C64::new(1.0, 0.0);
            let col = lu.solve(&e);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    /// 1-norm condition estimate via the explicit inverse (fibers are tiny).
    pub fn condition_1(&self) -> f64 {
        match self.inverse() {
            Ok(inv) => self.one_norm() * inv.one_norm(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Eigenvalues via Hessenberg reduction and the shifted complex QR iteration.
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        let n = self.n;
        if n == 0 {
            return Ok(vec![]);
        }
        if n == 1 {
            return Ok(vec![self.data[0]]);
        }
        if n == 2 {
            return Ok(eig2(self[(0, 0)], self[(0, 1)], self[(1, 0)], self[(1, 1)]).to_vec());
        }
        let mut h = self.hessenberg();
        let mut eigs = vec![C64::new(0.0, 0.0); n];
        let mut hi = n; // active block is rows/cols [0, hi)
        let mut iter_since_deflation = 0usize;
        let mut total_iters = 0usize;
        let max_total = 60 * n;
        while hi > 0 {
            if hi == 1 {
                eigs[0] = h[(0, 0)];
                break;
            }
            // Deflate negligible subdiagonals from the bottom of the block.
            let mut deflated = false;
            for i in (0..hi - 1).rev() {
                let sub = h[(i + 1, i)].norm();
                let scale = h[(i, i)].norm() + h[(i + 1, i + 1)].norm();
                if sub <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                    h[(i + 1, i)] = C64::new(0.0, 0.0);
                    if i + 1 == hi - 1 {
                        eigs[hi - 1] = h[(hi - 1, hi - 1)];
                        hi -= 1;
                        deflated = true;
                        iter_since_deflation = 0;
                        break;
                    }
                }
            }
            if deflated {
                continue;
            }
            if hi >= 2 && h[(hi - 1, hi - 2)].norm() == 0.0 {
                eigs[hi - 1] = h[(hi - 1, hi - 1)];
                hi -= 1;
                iter_since_deflation = 0;
                continue;
            }
            total_iters += 1;
            iter_since_deflation += 1;
            if total_iters > max_total {
                return Err(Error::Singular(
                    "QR eigenvalue iteration failed to converge".into(),
                ));
            }
            // Wilkinson shift from the trailing 2x2; exceptional shift on stagnation.
            let shift = if iter_since_deflation % 12 == 0 {
                h[(hi - 1, hi - 1)] + C64::new(h[(hi - 1, hi - 2)].norm(), 0.0)
            } else {
                let [l0, l1] = eig2(
                    h[(hi - 2, hi - 2)],
                    h[(hi - 2, hi - 1)],
                    h[(hi - 1, hi - 2)],
                    h[(hi - 1, hi - 1)],
                );
                let hnn = h[(hi - 1, hi - 1)];
                if (l0 - hnn).norm() <= (l1 - hnn).norm() {
                    l0
                } else {
                    l1
                }
            };
            qr_step_hessenberg(&mut h, hi, shift);
        }
        Ok(eigs)
    }

    /// Householder reduction to upper Hessenberg form.
    fn hessenberg(&self) -> CMat {
        let n = self.n;
        let mut h = self.clone();
        for k in 0..n.saturating_sub(2) {
            // Build the reflector for column k, rows k+1..n.
            let mut x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
            let norm_x = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm_x == 0.0 {
                continue;
            }
            let x0 = x[0];
            let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
            let alpha = -phase * norm_x;
            x[0] -= alpha;
            let vnorm2 = x.iter().map(|z| z.norm_sqr()).sum::<f64>();
            if vnorm2 == 0.0 {
                continue;
            }
            let m = x.len();
            // H := (I - 2 v v^H / |v|^2) H  then  H := H (I - 2 v v^H / |v|^2)
            for j in 0..n {
                let mut dot = C64::new(0.0, 0.0);
                for i in 0..m {
                    dot += x[i].conj() * h[(k + 1 + i, j)];
                }
                let f = dot * (2.0 / vnorm2);
                for i in 0..m {
                    let xi = x[i];
                    h[(k + 1 + i, j)] -= f * xi;
                }
            }
            for r in 0..n {
                let mut dot = C64::new(0.0, 0.0);
                for i in 0..m {
                    dot += h[(r, k + 1 + i)] * x[i];
                }
                let f = dot * (2.0 / vnorm2);
                for i in 0..m {
                    let xi = x[i].conj();
                    h[(r, k + 1 + i)] -= f * xi;
                }
            }
        }
        // Clear the sub-Hessenberg entries that are numerically zero.
        for i in 2..n {
            for j in 0..i - 1 {
                h[(i, j)] = C64::new(0.0, 0.0);
            }
        }
        h
    }

    /// Matrix exponential by scaling-and-squaring with a Pade(13) approximant.
    pub fn expm(&self) -> Result<CMat> {
        let n = self.n;
        if n == 1 {
            return Ok(CMat::scalar(self.data[0].exp()));
        }
        const THETA13: f64 = 5.371920351148152;
        let norm = self.one_norm();
        let s = if norm > THETA13 {
            (norm / THETA13).log2().ceil().max(0.0) as u32
        } else {
            0
        };
        let a = self.scale(C64::new(0.5_f64.powi(s as i32), 0.0));
        let mut e = pade13(&a)?;
        for _ in 0..s {
            e = e.matmul(&e);
        }
        Ok(e)
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

/// LU factors with pivot record.
pub struct Lu {
    n: usize,
    a: Vec<C64>,
    piv: Vec<usize>,
}

impl Lu {
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<C64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                let lij = self.a[i * n + j];
                let yj = y[j];
                y[i] -= lij * yj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let uij = self.a[i * n + j];
                let yj = y[j];
                y[i] -= uij * yj;
            }
            y[i] /= self.a[i * n + i];
        }
        y
    }
}

/// Eigenvalues of a 2x2 complex matrix by the quadratic formula.
fn eig2(a: C64, b: C64, c: C64, d: C64) -> [C64; 2] {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - det * 4.0).sqrt();
    let half = C64::new(0.5, 0.0);
    [(tr + disc) * half, (tr - disc) * half]
}

/// One single-shift QR sweep on the leading `hi` block of a Hessenberg matrix.
fn qr_step_hessenberg(h: &mut CMat, hi: usize, shift: C64) {
    let n = h.dim();
    let mut rot: Vec<(f64, C64)> = Vec::with_capacity(hi - 1);
    for i in 0..hi {
        h[(i, i)] -= shift;
    }
    for i in 0..hi - 1 {
        let (c, s) = givens(h[(i, i)], h[(i + 1, i)]);
        rot.push((c, s));
        for j in i..n.min(hi) {
            let (hi_j, lo_j) = (h[(i, j)], h[(i + 1, j)]);
            h[(i, j)] = hi_j * c + lo_j * s;
            h[(i + 1, j)] = -hi_j * s.conj() + lo_j * c;
        }
    }
    for (i, &(c, s)) in rot.iter().enumerate() {
        for r in 0..(i + 2).min(hi) {
            let (col_i, col_i1) = (h[(r, i)], h[(r, i + 1)]);
            h[(r, i)] = col_i * c + col_i1 * s.conj();
            h[(r, i + 1)] = -col_i * s + col_i1 * c;
        }
    }
    for i in 0..hi {
        h[(i, i)] += shift;
    }
}

/// Complex Givens rotation: returns (c, s) with c real, such that
/// [c s; -conj(s) c] * [a; b] = [r; 0].
fn givens(a: C64, b: C64) -> (f64, C64) {
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    let an = a.norm();
    if an == 0.0 {
        return (0.0, b.conj() / bn);
    }
    let t = (an * an + bn * bn).sqrt();
    let c = an / t;
    let s = (a / an) * b.conj() / t;
    (c, s)
}

fn pade13(a: &CMat) -> Result<CMat> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.dim();
    let id = CMat::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a2.matmul(&a4);
    let re = |x: f64| C64::new(x, 0.0);
    let u_inner = a6
        .scale(re(B[13]))
        .add(&a4.scale(re(B[11])))
        .add(&a2.scale(re(B[9])));
    let u = a.matmul(
        &a6.matmul(&u_inner)
            .add(&a6.scale(re(B[7])))
            .add(&a4.scale(re(B[5])))
            .add(&a2.scale(re(B[3])))
            .add(&id.scale(re(B[1]))),
    );
    let v_inner = a6
        .scale(re(B[12]))
        .add(&a4.scale(re(B[10])))
        .add(&a2.scale(re(B[8])));
    let v = a6
        .matmul(&v_inner)
        .add(&a6.scale(re(B[6])))
        .add(&a4.scale(re(B[4])))
        .add(&a2.scale(re(B[2])))
        .add(&id.scale(re(B[0])));
    let lhs = v.sub(&u);
    let rhs = v.add(&u);
    let lu = lhs.lu()?;
    let mut out = CMat::zeros(n);
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = rhs[(i, j)];
        }
        let x = lu.solve(&col);
        for i in 0..n {
            out[(i, j)] = x[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn lu_solves_small_system() {
        let a = CMat::from_real_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]);
        let lu = a.lu().unwrap();
        let x = lu.solve(&[c(1.0, 0.0), c(2.0, 0.0)]);
        // 4x + y = 1, 2x + 3y = 2 -> x = 0.1, y = 0.6
        assert_relative_eq!(x[0].re, 0.1, epsilon = 1e-14);
        assert_relative_eq!(x[1].re, 0.6, epsilon = 1e-14);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = CMat::from_rows(&[
            vec![c(2.0, 1.0), c(0.5, -0.25), c(0.0, 0.0)],
            vec![c(0.0, 1.0), c(3.0, 0.0), c(1.0, 1.0)],
            vec![c(1.0, 0.0), c(0.0, -2.0), c(4.0, 0.5)],
        ]);
        let inv = a.inverse().unwrap();
        let prod = a.matmul(&inv);
        let err = prod.sub(&CMat::identity(3)).frobenius_norm();
        assert!(err < 1e-13, "A A^-1 - I = {err:.3e}");
    }

    #[test]
    fn eigenvalues_of_diagonalizable_matrix() {
        // Companion matrix of (z-1)(z-2)(z-3) = z^3 - 6z^2 + 11z - 6.
        let a = CMat::from_real_rows(&[
            vec![0.0, 0.0, 6.0],
            vec![1.0, 0.0, -11.0],
            vec![0.0, 1.0, 6.0],
        ]);
        let mut eigs: Vec<f64> = a.eigenvalues().unwrap().iter().map(|z| z.re).collect();
        eigs.sort_by(f64::total_cmp);
        assert_relative_eq!(eigs[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(eigs[1], 2.0, epsilon = 1e-10);
        assert_relative_eq!(eigs[2], 3.0, epsilon = 1e-10);
        let max_im = a
            .eigenvalues()
            .unwrap()
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0, f64::max);
        assert!(max_im < 1e-10);
    }

    #[test]
    fn eigenvalues_of_rotation_block() {
        // [[0, -1], [1, 0]] has eigenvalues +-i.
        let a = CMat::from_real_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        let mut eigs = a.eigenvalues().unwrap();
        eigs.sort_by(|p, q| p.im.total_cmp(&q.im));
        assert_relative_eq!(eigs[0].im, -1.0, epsilon = 1e-12);
        assert_relative_eq!(eigs[1].im, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_invariant_under_unitary_conjugation() {
        // Unitary conjugation of diag(1, 2+i, 5) by a Householder reflector.
        let d = CMat::from_rows(&[
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(2.0, 1.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)],
        ]);
        let v = [c(1.0, 0.5), c(-0.3, 0.7), c(0.2, -0.4)];
        let vn2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mut q = CMat::identity(3);
        for i in 0..3 {
            for j in 0..3 {
                q[(i, j)] -= v[i] * v[j].conj() * (2.0 / vn2);
            }
        }
        let a = q.matmul(&d).matmul(&q.adjoint());
        let mut eigs = a.eigenvalues().unwrap();
        eigs.sort_by(|p, q| p.re.total_cmp(&q.re));
        assert!((eigs[0] - c(1.0, 0.0)).norm() < 1e-9);
        assert!((eigs[1] - c(2.0, 1.0)).norm() < 1e-9);
        assert!((eigs[2] - c(5.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn expm_matches_scalar_exponential() {
        let a = CMat::scalar(c(-1.0, 0.5));
        let e = a.expm().unwrap();
        let want = c(-1.0, 0.5).exp();
        assert!((e[(0, 0)] - want).norm() < 1e-14);
    }

    #[test]
    fn expm_of_nilpotent_block() {
        // exp([[0, 1], [0, 0]]) = [[1, 1], [0, 1]].
        let a = CMat::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let e = a.expm().unwrap();
        assert_relative_eq!(e[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(0, 1)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 0)].re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_semigroup_property() {
        let a = CMat::from_rows(&[
            vec![c(-2.0, 0.3), c(0.7, -0.1)],
            vec![c(0.2, 0.4), c(-1.0, -0.6)],
        ]);
        let e1 = a.expm().unwrap();
        let e_half = a.scale(c(0.5, 0.0)).expm().unwrap();
        let err = e_half.matmul(&e_half).sub(&e1).frobenius_norm();
        assert!(err < 1e-13, "semigroup error {err:.3e}");
    }

    #[test]
    fn expm_of_scaled_matrix_matches_squaring_path() {
        // Norm above theta13 forces the scaling branch.
        let a = CMat::from_real_rows(&[vec![-8.0, 3.0], vec![1.0, -12.0]]);
        let e = a.expm().unwrap();
        // Oracle: diagonalize by eigen-decomposition of this symmetric-free case
        // using the 2x2 closed form exp(A) = P exp(D) P^-1 built numerically.
        let eigs = a.eigenvalues().unwrap();
        // Eigenvectors for 2x2: (b, lambda - a).
        let b = a[(0, 1)];
        let p = CMat::from_rows(&[
            vec![b, b],
            vec![eigs[0] - a[(0, 0)], eigs[1] - a[(0, 0)]],
        ]);
        let d = CMat::from_rows(&[
            vec![eigs[0].exp(), c(0.0, 0.0)],
            vec![c(0.0, 0.0), eigs[1].exp()],
        ]);
        let want = p.matmul(&d).matmul(&p.inverse().unwrap());
        let err = e.sub(&want).frobenius_norm() / want.frobenius_norm();
        assert!(err < 1e-11, "expm mismatch {err:.3e}");
    }
}
