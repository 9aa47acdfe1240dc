//! Small dense linear algebra for d ≤ 4.
//!
//! Everything here operates on tiny matrices (Hessians, metrics, chart
//! Jacobians), so the implementations favor clarity over blocking: cyclic
//! Jacobi for symmetric eigenvalues, Gaussian elimination with partial
//! pivoting for solves and inverses.

/// Dense row-major n×n matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Mat::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "ragged rows");
            for (j, &x) in r.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.a[i * self.n..(i + 1) * self.n].to_vec()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut a = self.a.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[i * n + k].abs() > a[p * n + k].abs() {
                    p = i;
                }
            }
            if a[p * n + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            det *= a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` for a numerically singular matrix.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut a = self.a.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[i * n + k].abs() > a[p * n + k].abs() {
                    p = i;
                }
            }
            if a[p * n + k].abs() < 1e-300 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                x.swap(k, p);
            }
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                x[i] -= f * x[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= a[i * n + j] * x[j];
            }
            x[i] = s / a[i * n + i];
        }
        Some(x)
    }

    /// Matrix inverse; `None` if singular.
    pub fn inverse(&self) -> Option<Mat> {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Some(out)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi, ascending.
    ///
    /// Converges quadratically; for the d ≤ 4 matrices here a handful of
    /// sweeps reaches machine precision.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = self.a.clone();
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[i * n + j] * a[i * n + j];
                }
            }
            if off.sqrt() <= 1e-15 * (1.0 + self.max_abs()) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    // Stable tangent of the rotation angle.
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        eig
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn scale(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|a| a * s).collect()
}

/// Solves the 2×2 system `[[a,b],[c,d]] (x,y) = (e,f)`; `None` if singular.
pub fn solve2(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Option<(f64, f64)> {
    let det = a * d - b * c;
    if det.abs() < 1e-300 {
        return None;
    }
    Some(((e * d - b * f) / det, (a * f - e * c) / det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_of_diagonal_block() {
        let m = Mat::from_rows(&[vec![0.1, 0.0], vec![0.0, -1.1]]);
        let e = m.sym_eigenvalues();
        assert_relative_eq!(e[0], -1.1, max_relative = 1e-14);
        assert_relative_eq!(e[1], 0.1, max_relative = 1e-14);
    }

    #[test]
    fn eigenvalues_match_closed_form_2x2() {
        // [[2,1],[1,3]] has eigenvalues (5 ± sqrt(5))/2.
        let m = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let e = m.sym_eigenvalues();
        let lo = (5.0 - 5.0_f64.sqrt()) / 2.0;
        let hi = (5.0 + 5.0_f64.sqrt()) / 2.0;
        assert_relative_eq!(e[0], lo, max_relative = 1e-13);
        assert_relative_eq!(e[1], hi, max_relative = 1e-13);
    }

    #[test]
    fn eigenvalues_3x3_reproduce_known_spectrum() {
        // Symmetric matrix with spectrum {1, 2, 4}: Q diag(1,2,4) Q^T for a
        // Householder Q built from w = (1,1,1)/sqrt(3).
        let q = {
            let w = [1.0 / 3.0_f64.sqrt(); 3];
            let mut q = Mat::identity(3);
            for i in 0..3 {
                for j in 0..3 {
                    q[(i, j)] -= 2.0 * w[i] * w[j];
                }
            }
            q
        };
        let d = Mat::from_rows(&[vec![1., 0., 0.], vec![0., 2., 0.], vec![0., 0., 4.]]);
        let m = q.matmul(&d).matmul(&q.transpose());
        let e = m.sym_eigenvalues();
        assert_relative_eq!(e[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(e[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(e[2], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn solve_and_inverse_round_trip() {
        let m = Mat::from_rows(&[vec![4.0, 1.0, 0.3], vec![1.0, 3.0, -0.2], vec![0.3, -0.2, 5.0]]);
        let b = vec![1.0, -2.0, 0.5];
        let x = m.solve(&b).unwrap();
        let bx = m.matvec(&x);
        for i in 0..3 {
            assert_relative_eq!(bx[i], b[i], epsilon = 1e-12);
        }
        let inv = m.inverse().unwrap();
        let id = m.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(id[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn det_of_triangular_product() {
        let m = Mat::from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0]]);
        assert_relative_eq!(m.det(), 6.0, max_relative = 1e-15);
        let s = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_relative_eq!(s.det(), -1.0, max_relative = 1e-15);
    }

    #[test]
    fn solve2_matches_full_solver() {
        let (x, y) = solve2(3.0, 1.0, -1.0, 2.0, 5.0, 4.0).unwrap();
        assert_relative_eq!(3.0 * x + y, 5.0, epsilon = 1e-14);
        assert_relative_eq!(-x + 2.0 * y, 4.0, epsilon = 1e-14);
    }
}
