//! Small fixed-size complex linear algebra: 3-vectors, 3×3 matrices and
//! rank-3 tensors with the index conventions used throughout the crate.

use num_complex::Complex64;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Real 3-vector.
pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn neg(a: Vec3) -> Vec3 {
    [-a[0], -a[1], -a[2]]
}

/// Levi-Civita symbol ε_ijk.
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Complex 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CVec3(pub [C64; 3]);

impl CVec3 {
    pub const ZERO: CVec3 = CVec3([ZERO; 3]);

    pub fn from_real(v: Vec3) -> Self {
        CVec3([v[0].into(), v[1].into(), v[2].into()])
    }

    pub fn conj(self) -> Self {
        CVec3(self.0.map(|z| z.conj()))
    }

    pub fn scale(self, s: C64) -> Self {
        CVec3(self.0.map(|z| z * s))
    }

    pub fn scale_re(self, s: f64) -> Self {
        CVec3(self.0.map(|z| z * s))
    }

    /// `k × v` with real k.
    pub fn cross_real(k: Vec3, v: CVec3) -> CVec3 {
        let v = v.0;
        CVec3([
            v[2] * k[1] - v[1] * k[2],
            v[0] * k[2] - v[2] * k[0],
            v[1] * k[0] - v[0] * k[1],
        ])
    }

    pub fn dot_real(self, k: Vec3) -> C64 {
        self.0[0] * k[0] + self.0[1] * k[1] + self.0[2] * k[2]
    }

    pub fn norm_sqr(self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Index<usize> for CVec3 {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVec3 {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl Add for CVec3 {
    type Output = CVec3;
    fn add(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for CVec3 {
    fn add_assign(&mut self, o: CVec3) {
        for i in 0..3 {
            self.0[i] += o.0[i];
        }
    }
}

impl Sub for CVec3 {
    type Output = CVec3;
    fn sub(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for CVec3 {
    type Output = CVec3;
    fn neg(self) -> CVec3 {
        CVec3(self.0.map(|z| -z))
    }
}

/// Complex 3×3 matrix, row-major `m[i][j]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CMat3(pub [[C64; 3]; 3]);

impl CMat3 {
    pub const ZERO: CMat3 = CMat3([[ZERO; 3]; 3]);

    pub fn identity() -> Self {
        Self::diag([C64::new(1.0, 0.0); 3])
    }

    pub fn diag(d: [C64; 3]) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn from_real(r: [[f64; 3]; 3]) -> Self {
        CMat3(r.map(|row| row.map(C64::from)))
    }

    /// Outer product `a bᵀ` of real vectors.
    pub fn outer_real(a: Vec3, b: Vec3) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = (a[i] * b[j]).into();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[j][i];
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        CMat3(self.0.map(|row| row.map(|z| z.conj())))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }

    pub fn scale(&self, s: C64) -> Self {
        CMat3(self.0.map(|row| row.map(|z| z * s)))
    }

    pub fn mul_vec(&self, v: CVec3) -> CVec3 {
        let mut out = CVec3::ZERO;
        for i in 0..3 {
            out.0[i] = self.0[i][0] * v.0[0] + self.0[i][1] * v.0[1] + self.0[i][2] * v.0[2];
        }
        out
    }

    pub fn matmul(&self, o: &CMat3) -> CMat3 {
        let mut m = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j] + self.0[i][2] * o.0[2][j];
            }
        }
        m
    }

    /// Matrix of `v ↦ k × v`.
    pub fn cross_matrix(k: Vec3) -> CMat3 {
        CMat3::from_real([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, o: &CMat3) -> f64 {
        (*self - *o).max_abs()
    }
}

impl Add for CMat3 {
    type Output = CMat3;
    fn add(self, o: CMat3) -> CMat3 {
        let mut m = self;
        m += o;
        m
    }
}

impl AddAssign for CMat3 {
    fn add_assign(&mut self, o: CMat3) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += o.0[i][j];
            }
        }
    }
}

impl Sub for CMat3 {
    type Output = CMat3;
    fn sub(self, o: CMat3) -> CMat3 {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] -= o.0[i][j];
            }
        }
        m
    }
}

impl Mul<f64> for CMat3 {
    type Output = CMat3;
    fn mul(self, s: f64) -> CMat3 {
        CMat3(self.0.map(|row| row.map(|z| z * s)))
    }
}

/// Complex rank-3 tensor `t[i][j][k]`, flattened as `9i + 3j + k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CTensor3(pub [C64; 27]);

impl Default for CTensor3 {
    fn default() -> Self {
        Self::ZERO
    }
}

impl CTensor3 {
    pub const ZERO: CTensor3 = CTensor3([ZERO; 27]);

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.0[9 * i + 3 * j + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: C64) {
        self.0[9 * i + 3 * j + k] = v;
    }

    pub fn from_real(r: [f64; 27]) -> Self {
        CTensor3(r.map(C64::from))
    }

    /// Swap of the two trailing indices, `t[i][k][j]`.
    pub fn swap_trailing(&self) -> Self {
        let mut out = Self::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out.set(i, j, k, self.get(i, k, j));
                }
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        CTensor3(self.0.map(|z| z * s))
    }

    pub fn conj(&self) -> Self {
        CTensor3(self.0.map(|z| z.conj()))
    }

    pub fn add(&self, o: &CTensor3) -> Self {
        let mut out = *self;
        for (a, b) in out.0.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, o: &CTensor3) -> f64 {
        self.0
            .iter()
            .zip(o.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Bilinear contraction `out_i = Σ_jk t_ijk a_j b_k`.
    pub fn contract(&self, a: CVec3, b: CVec3) -> CVec3 {
        let mut out = CVec3::ZERO;
        for i in 0..3 {
            let mut acc = ZERO;
            for j in 0..3 {
                if a.0[j] == ZERO {
                    continue;
                }
                let mut inner = ZERO;
                for k in 0..3 {
                    inner += self.get(i, j, k) * b.0[k];
                }
                acc += a.0[j] * inner;
            }
            out.0[i] = acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_matrix_matches_cross_product() {
        let k = [0.3, -1.2, 2.0];
        let v = CVec3([C64::new(1.0, 2.0), C64::new(-0.5, 0.1), C64::new(0.0, -1.0)]);
        let a = CMat3::cross_matrix(k).mul_vec(v);
        let b = CVec3::cross_real(k, v);
        assert!((a - b).max_abs() < 1e-15);
    }

    #[test]
    fn levi_civita_is_antisymmetric() {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(levi_civita(i, j, k), -levi_civita(j, i, k));
                    assert_eq!(levi_civita(i, j, k), levi_civita(j, k, i));
                }
            }
        }
    }

    #[test]
    fn contract_matches_explicit_sum() {
        let mut t = CTensor3::ZERO;
        t.set(0, 1, 2, C64::new(2.0, 0.0));
        let a = CVec3([ZERO, C64::new(3.0, 0.0), ZERO]);
        let b = CVec3([ZERO, ZERO, C64::new(0.0, 1.0)]);
        let out = t.contract(a, b);
        assert_eq!(out.0[0], C64::new(0.0, 6.0));
        assert_eq!(out.0[1], ZERO);
    }
}
