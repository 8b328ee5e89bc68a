//! 2×2 complex (Jones) matrices for polarisation mixing and per-subcarrier
//! channel inversion.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jones(pub [[Complex64; 2]; 2]);

impl Jones {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Jones([[one, zero], [zero, one]])
    }

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Jones([[a, b], [c, d]])
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Jones> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Jones([
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ]))
    }

    pub fn conj_transpose(&self) -> Jones {
        let m = &self.0;
        Jones([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn mul(&self, other: &Jones) -> Jones {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Jones(out)
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    pub fn scale(&self, s: f64) -> Jones {
        let m = &self.0;
        Jones([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn add(&self, other: &Jones) -> Jones {
        let a = &self.0;
        let b = &other.0;
        Jones([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }

    /// 2-norm condition number, from the eigenvalues of `MᴴM`.
    pub fn condition_number(&self) -> f64 {
        let m = &self.0;
        let fro2: f64 = m.iter().flatten().map(|v| v.norm_sqr()).sum();
        let det2 = self.det().norm_sqr();
        let disc = (fro2 * fro2 / 4.0 - det2).max(0.0).sqrt();
        let hi = fro2 / 2.0 + disc;
        let lo = fro2 / 2.0 - disc;
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).sqrt()
        }
    }

    pub fn max_abs_diff(&self, other: &Jones) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}
