//! Truncated Taylor series in the covariable.
//!
//! A [`Jet`] of length `n` stores `f(ξ0 + h) = Σ_{j<n} c_j h^j`, so `c_j = f^(j)(ξ0) / j!`.
//! Symbols are evaluated on jets so that the ξ-derivatives required by the
//! Leibniz expansion are exact rather than finite-differenced.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Largest supported jet length (derivative order + 1).
pub const MAX_JET_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    c: Vec<C64>,
}

impl Jet {
    pub fn constant(v: impl Into<C64>, len: usize) -> Self {
        let mut c = vec![C64::new(0.0, 0.0); len.max(1)];
        c[0] = v.into();
        Jet { c }
    }

    /// The identity function `ξ` expanded at `xi0`.
    pub fn variable(xi0: f64, len: usize) -> Self {
        let mut j = Jet::constant(xi0, len);
        if j.c.len() > 1 {
            j.c[1] = C64::new(1.0, 0.0);
        }
        j
    }

    pub fn from_coeffs(c: Vec<C64>) -> Self {
        assert!(!c.is_empty());
        Jet { c }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    /// `f^(k)(ξ0)`, zero beyond the stored length.
    pub fn derivative_at(&self, k: usize) -> C64 {
        if k >= self.c.len() {
            return C64::new(0.0, 0.0);
        }
        self.c[k] * factorial(k)
    }

    pub fn truncate(&self, len: usize) -> Self {
        let len = len.clamp(1, self.c.len());
        Jet { c: self.c[..len].to_vec() }
    }

    pub fn scale(&self, s: impl Into<C64>) -> Self {
        let s = s.into();
        Jet { c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn add_scalar(&self, s: impl Into<C64>) -> Self {
        let mut out = self.clone();
        out.c[0] += s.into();
        out
    }

    pub fn conj(&self) -> Self {
        Jet { c: self.c.iter().map(|v| v.conj()).collect() }
    }

    /// Derivative jet; one coefficient shorter.
    pub fn deriv(&self) -> Self {
        if self.c.len() == 1 {
            return Jet::constant(0.0, 1);
        }
        Jet { c: (1..self.c.len()).map(|j| self.c[j] * j as f64).collect() }
    }

    /// Antiderivative with constant term `c0`; one coefficient longer.
    pub fn integrate(&self, c0: C64) -> Self {
        let mut c = Vec::with_capacity(self.c.len() + 1);
        c.push(c0);
        c.extend(self.c.iter().enumerate().map(|(j, v)| v / (j + 1) as f64));
        Jet { c }
    }

    pub fn recip(&self) -> Self {
        let n = self.c.len();
        let inv0 = 1.0 / self.c[0];
        let mut w = vec![C64::new(0.0, 0.0); n];
        w[0] = inv0;
        for k in 1..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 1..=k {
                s += self.c[j] * w[k - j];
            }
            w[k] = -s * inv0;
        }
        Jet { c: w }
    }

    pub fn div(&self, other: &Jet) -> Self {
        self * &other.recip()
    }

    /// Principal-branch power `u^p`; requires `u(ξ0) != 0`.
    pub fn powf(&self, p: f64) -> Self {
        let n = self.c.len();
        let u0 = self.c[0];
        let mut w = vec![C64::new(0.0, 0.0); n];
        w[0] = if u0.im == 0.0 && u0.re > 0.0 {
            C64::new(u0.re.powf(p), 0.0)
        } else {
            u0.powf(p)
        };
        for k in 1..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 1..=k {
                s += self.c[j] * w[k - j] * ((p + 1.0) * j as f64 - k as f64);
            }
            w[k] = s / (u0 * k as f64);
        }
        Jet { c: w }
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Self {
        let n = self.c.len();
        let mut w = vec![C64::new(0.0, 0.0); n];
        w[0] = self.c[0].exp();
        for k in 1..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 1..=k {
                s += self.c[j] * w[k - j] * j as f64;
            }
            w[k] = s / k as f64;
        }
        Jet { c: w }
    }

    pub fn ln(&self) -> Self {
        let n = self.c.len();
        let u0 = self.c[0];
        let mut w = vec![C64::new(0.0, 0.0); n];
        w[0] = u0.ln();
        for k in 1..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 1..k {
                s += w[j] * self.c[k - j] * j as f64;
            }
            w[k] = (self.c[k] - s / k as f64) / u0;
        }
        Jet { c: w }
    }

    /// `(sin u, cos u)`.
    pub fn sin_cos(&self) -> (Self, Self) {
        let n = self.c.len();
        let mut s = vec![C64::new(0.0, 0.0); n];
        let mut c = vec![C64::new(0.0, 0.0); n];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..n {
            let mut ss = C64::new(0.0, 0.0);
            let mut cc = C64::new(0.0, 0.0);
            for j in 1..=k {
                let ju = self.c[j] * j as f64;
                ss += ju * c[k - j];
                cc += ju * s[k - j];
            }
            s[k] = ss / k as f64;
            c[k] = -cc / k as f64;
        }
        (Jet { c: s }, Jet { c })
    }

    /// Arctangent of a real-valued jet.
    pub fn atan(&self) -> Self {
        if self.c.len() == 1 {
            return Jet::constant(self.c[0].re.atan(), 1);
        }
        let head = self.truncate(self.c.len() - 1);
        let denom = (&head * &head).add_scalar(1.0).recip();
        (&self.deriv() * &denom).integrate(C64::new(self.c[0].re.atan(), 0.0))
    }

    /// Arccosine of a real-valued jet with `|u(ξ0)| < 1`.
    pub fn acos(&self) -> Self {
        if self.c.len() == 1 {
            return Jet::constant(self.c[0].re.acos(), 1);
        }
        let head = self.truncate(self.c.len() - 1);
        let root = (&head * &head).scale(-1.0).add_scalar(1.0).powf(-0.5);
        (&self.deriv() * &root)
            .scale(-1.0)
            .integrate(C64::new(self.c[0].re.acos(), 0.0))
    }

    /// Evaluate the truncated polynomial at offset `h`.
    pub fn eval_offset(&self, h: f64) -> C64 {
        self.c.iter().rev().fold(C64::new(0.0, 0.0), |acc, v| acc * h + v)
    }
}

fn binary_len(a: &Jet, b: &Jet) -> usize {
    a.c.len().min(b.c.len())
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let n = binary_len(self, rhs);
        Jet { c: (0..n).map(|j| self.c[j] + rhs.c[j]).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let n = binary_len(self, rhs);
        Jet { c: (0..n).map(|j| self.c[j] - rhs.c[j]).collect() }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let n = binary_len(self, rhs);
        let mut c = vec![C64::new(0.0, 0.0); n];
        for (i, ci) in c.iter_mut().enumerate() {
            for j in 0..=i {
                *ci += self.c[j] * rhs.c[i - j];
            }
        }
        Jet { c }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Matrix-valued truncated Taylor series in ξ.
#[derive(Debug, Clone, PartialEq)]
pub struct MatJet {
    coeffs: Vec<CMatrix>,
}

impl MatJet {
    pub fn zeros(rows: usize, cols: usize, len: usize) -> Self {
        MatJet { coeffs: vec![CMatrix::zeros(rows, cols); len.max(1)] }
    }

    pub fn identity(n: usize, len: usize) -> Self {
        let mut m = MatJet::zeros(n, n, len);
        m.coeffs[0] = CMatrix::identity(n, n);
        m
    }

    pub fn constant(m: CMatrix, len: usize) -> Self {
        let (r, c) = m.shape();
        let mut out = MatJet::zeros(r, c, len);
        out.coeffs[0] = m;
        out
    }

    pub fn from_coeffs(coeffs: Vec<CMatrix>) -> Self {
        assert!(!coeffs.is_empty());
        MatJet { coeffs }
    }

    /// Scalar jet times a constant matrix.
    pub fn from_scalar(j: &Jet, m: &CMatrix) -> Self {
        MatJet { coeffs: j.coeffs().iter().map(|c| m * *c).collect() }
    }

    /// 1×1 matrix jet from a scalar jet.
    pub fn scalar(j: &Jet) -> Self {
        MatJet::from_scalar(j, &CMatrix::identity(1, 1))
    }

    /// Build entrywise from scalar jets given row-major.
    pub fn from_entries(rows: usize, cols: usize, entries: &[Jet]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        let len = entries.iter().map(Jet::len).min().unwrap_or(1);
        let coeffs = (0..len)
            .map(|k| CMatrix::from_fn(rows, cols, |i, j| entries[i * cols + j].coeffs()[k]))
            .collect();
        MatJet { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].shape()
    }

    pub fn coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [CMatrix] {
        &mut self.coeffs
    }

    pub fn value(&self) -> &CMatrix {
        &self.coeffs[0]
    }

    pub fn entry(&self, i: usize, j: usize) -> Jet {
        Jet::from_coeffs(self.coeffs.iter().map(|m| m[(i, j)]).collect())
    }

    pub fn truncate(&self, len: usize) -> Self {
        let len = len.clamp(1, self.coeffs.len());
        MatJet { coeffs: self.coeffs[..len].to_vec() }
    }

    pub fn scale(&self, s: C64) -> Self {
        MatJet { coeffs: self.coeffs.iter().map(|m| m * s).collect() }
    }

    pub fn scale_jet(&self, s: &Jet) -> Self {
        let n = self.len().min(s.len());
        let coeffs = (0..n)
            .map(|i| {
                let mut acc = CMatrix::zeros(self.shape().0, self.shape().1);
                for j in 0..=i {
                    acc += &self.coeffs[i - j] * s.coeffs()[j];
                }
                acc
            })
            .collect();
        MatJet { coeffs }
    }

    pub fn add(&self, other: &MatJet) -> Self {
        let n = self.len().min(other.len());
        MatJet { coeffs: (0..n).map(|k| &self.coeffs[k] + &other.coeffs[k]).collect() }
    }

    pub fn sub(&self, other: &MatJet) -> Self {
        let n = self.len().min(other.len());
        MatJet { coeffs: (0..n).map(|k| &self.coeffs[k] - &other.coeffs[k]).collect() }
    }

    pub fn add_assign_scaled(&mut self, other: &MatJet, s: C64) {
        let n = self.len().min(other.len());
        self.coeffs.truncate(n);
        for k in 0..n {
            self.coeffs[k] += &other.coeffs[k] * s;
        }
    }

    /// Cauchy product of matrix series.
    pub fn mul(&self, other: &MatJet) -> Self {
        let n = self.len().min(other.len());
        let (r, _) = self.shape();
        let (_, c) = other.shape();
        let coeffs = (0..n)
            .map(|i| {
                let mut acc = CMatrix::zeros(r, c);
                for j in 0..=i {
                    acc += &self.coeffs[j] * &other.coeffs[i - j];
                }
                acc
            })
            .collect();
        MatJet { coeffs }
    }

    /// Series inverse; `None` when the value matrix is singular.
    pub fn try_inverse(&self) -> Option<Self> {
        let x0 = self.coeffs[0].clone().try_inverse()?;
        let n = self.len();
        let mut x = Vec::with_capacity(n);
        x.push(x0.clone());
        for k in 1..n {
            let mut s = CMatrix::zeros(x0.nrows(), x0.ncols());
            for j in 1..=k {
                s += &self.coeffs[j] * &x[k - j];
            }
            x.push(-(&x0 * s));
        }
        Some(MatJet { coeffs: x })
    }

    pub fn adjoint(&self) -> Self {
        MatJet { coeffs: self.coeffs.iter().map(|m| m.adjoint()).collect() }
    }

    /// `∂^α_ξ` of the series; `α` coefficients shorter.
    pub fn deriv(&self, alpha: usize) -> Self {
        if alpha == 0 {
            return self.clone();
        }
        let (r, c) = self.shape();
        if alpha >= self.len() {
            return MatJet::zeros(r, c, 1);
        }
        let coeffs = (0..self.len() - alpha)
            .map(|j| {
                let f = factorial(j + alpha) / factorial(j);
                &self.coeffs[j + alpha] * C64::new(f, 0.0)
            })
            .collect();
        MatJet { coeffs }
    }

    /// `Σ_α (1/α!) ∂^α self · right[α]`, truncated to `len`, accumulated in place.
    pub fn leibniz_sum(&self, right: &[&MatJet], len: usize) -> MatJet {
        let (r, _) = self.shape();
        let (_, c) = right[0].shape();
        let mut out = vec![CMatrix::zeros(r, c); len.max(1)];
        for (alpha, rj) in right.iter().enumerate() {
            let inv_fact = 1.0 / factorial(alpha);
            for (m, o) in out.iter_mut().enumerate() {
                for i in 0..=m {
                    let (li, ri) = (i + alpha, m - i);
                    if li >= self.len() || ri >= rj.len() {
                        continue;
                    }
                    let w = factorial(li) / factorial(i) * inv_fact;
                    o.gemm(C64::new(w, 0.0), &self.coeffs[li], &rj.coeffs[ri], C64::new(1.0, 0.0));
                }
            }
        }
        MatJet { coeffs: out }
    }

    pub fn map_coeffs(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        MatJet { coeffs: self.coeffs.iter().map(f).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0, |acc: f64, v| acc.max(v.norm()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: f64, tol: f64) -> bool {
        (a - C64::new(b, 0.0)).norm() < tol
    }

    #[test]
    fn bracket_derivatives_match_closed_form() {
        // ⟨ξ⟩ = (1+ξ²)^{1/2}: f' = ξ/⟨ξ⟩, f'' = ⟨ξ⟩^{-3}
        let xi = Jet::variable(2.0, 5);
        let br = (&xi * &xi).add_scalar(1.0).sqrt();
        let s5 = 5f64.sqrt();
        assert!(close(br.derivative_at(0), s5, 1e-14));
        assert!(close(br.derivative_at(1), 2.0 / s5, 1e-14));
        assert!(close(br.derivative_at(2), 5f64.powf(-1.5), 1e-14));
        // f''' = -3ξ⟨ξ⟩^{-5}
        assert!(close(br.derivative_at(3), -6.0 * 5f64.powf(-2.5), 1e-13));
    }

    #[test]
    fn acos_and_atan_derivatives() {
        let u = Jet::variable(0.3, 4);
        let a = u.acos();
        assert!(close(a.derivative_at(0), 0.3f64.acos(), 1e-14));
        assert!(close(a.derivative_at(1), -1.0 / (1.0 - 0.09f64).sqrt(), 1e-14));
        // d²/du² acos = -u (1-u²)^{-3/2}
        assert!(close(a.derivative_at(2), -0.3 * (0.91f64).powf(-1.5), 1e-13));
        let t = Jet::variable(0.5, 3).atan();
        assert!(close(t.derivative_at(1), 1.0 / 1.25, 1e-14));
        assert!(close(t.derivative_at(2), -2.0 * 0.5 / (1.25 * 1.25), 1e-14));
    }

    #[test]
    fn exp_ln_roundtrip_and_sin_cos_identity() {
        let u = Jet::from_coeffs(vec![C64::new(0.4, 0.1), C64::new(1.0, 0.0), C64::new(-0.3, 0.2), C64::new(0.5, 0.0)]);
        let back = u.exp().ln();
        for (a, b) in back.coeffs().iter().zip(u.coeffs()) {
            assert!((a - b).norm() < 1e-13);
        }
        let (s, c) = u.sin_cos();
        let one = &(&s * &s) + &(&c * &c);
        assert!(close(one.coeffs()[0], 1.0, 1e-13));
        for k in 1..4 {
            assert!(one.coeffs()[k].norm() < 1e-13);
        }
    }

    #[test]
    fn matrix_inverse_series_is_two_sided() {
        let xi = Jet::variable(0.7, 6);
        let e = [
            xi.add_scalar(2.0),
            xi.scale(C64::new(0.0, 0.5)),
            (&xi * &xi).scale(0.1),
            xi.exp(),
        ];
        let m = MatJet::from_entries(2, 2, &e);
        let inv = m.try_inverse().unwrap();
        let p = m.mul(&inv);
        let id = MatJet::identity(2, 6);
        assert!(p.sub(&id).max_abs() < 1e-12);
        assert!(inv.mul(&m).sub(&id).max_abs() < 1e-12);
    }

    #[test]
    fn deriv_shift_matches_derivative_at() {
        let xi = Jet::variable(1.5, 7);
        let f = (&xi * &xi).add_scalar(1.0).powf(-0.5);
        let m = MatJet::scalar(&f);
        let d2 = m.deriv(2);
        assert!((d2.value()[(0, 0)] - f.derivative_at(2)).norm() < 1e-14);
        assert_eq!(d2.len(), 5);
    }
}
