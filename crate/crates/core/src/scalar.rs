//! Scalar abstraction shared by the pointwise kernels.
//!
//! Kernels are written once over [`Scalar`] and evaluated with plain `f64`,
//! with forward-mode [`Dual`] numbers (element Jacobians), or with truncated
//! Taylor series [`Jet`] (time derivatives along an initial-data jet).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(x: f64) -> Self;
    /// Value part (constant Taylor coefficient / primal value).
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
}

impl Scalar for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

/// Forward-mode dual number with `N` independent directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; N] }
    }

    /// Independent variable `k` with value `v`.
    pub fn var(v: f64, k: usize) -> Self {
        let mut d = [0.0; N];
        d[k] = 1.0;
        Dual { v, d }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= dv;
        }
        Dual { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for k in 0..N {
            self.d[k] += o.d[k];
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for k in 0..N {
            self.d[k] -= o.d[k];
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = (self.d[k] - v * o.d[k]) * inv;
        }
        Dual { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for x in self.d.iter_mut() {
            *x = -*x;
        }
        self
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.v += o;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.v -= o;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.v *= o;
        for x in self.d.iter_mut() {
            *x *= o;
        }
        self
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<const N: usize> MulAssign for Dual<N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn cst(x: f64) -> Self {
        Dual::constant(x)
    }
    fn re(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
}

/// Number of Taylor coefficients carried by a [`Jet`] (orders 0..=3).
pub const JET_LEN: usize = 4;

/// Truncated Taylor series `sum_k c[k] t^k` in one variable, order 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [f64; JET_LEN],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; JET_LEN];
        c[0] = v;
        Jet { c }
    }

    /// The time variable itself, `t`.
    pub fn time() -> Self {
        Jet {
            c: [0.0, 1.0, 0.0, 0.0],
        }
    }

    /// Series whose `n`-th time derivative at zero equals `derivs[n]`.
    pub fn from_derivatives(derivs: &[f64]) -> Self {
        let mut c = [0.0; JET_LEN];
        let mut fact = 1.0;
        for (n, &dv) in derivs.iter().enumerate().take(JET_LEN) {
            if n > 0 {
                fact *= n as f64;
            }
            c[n] = dv / fact;
        }
        Jet { c }
    }

    /// `n`-th time derivative at `t = 0`.
    pub fn derivative(&self, n: usize) -> f64 {
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        self.c[n] * fact
    }
}

impl Add for Jet {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        for k in 0..JET_LEN {
            self.c[k] += o.c[k];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        for k in 0..JET_LEN {
            self.c[k] -= o.c[k];
        }
        self
    }
}

impl Mul for Jet {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut c = [0.0; JET_LEN];
        for i in 0..JET_LEN {
            for j in 0..JET_LEN - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let mut q = [0.0; JET_LEN];
        for k in 0..JET_LEN {
            let mut s = self.c[k];
            for j in 1..=k {
                s -= o.c[j] * q[k - j];
            }
            q[k] = s / o.c[0];
        }
        Jet { c: q }
    }
}

impl Neg for Jet {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        for x in self.c.iter_mut() {
            *x = -*x;
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.c[0] += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.c[0] -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        for x in self.c.iter_mut() {
            *x *= o;
        }
        self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl Jet {
    fn sin_cos(self) -> (Jet, Jet) {
        let mut s = [0.0; JET_LEN];
        let mut c = [0.0; JET_LEN];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..JET_LEN {
            let mut ds = 0.0;
            let mut dc = 0.0;
            for j in 1..=k {
                let ju = j as f64 * self.c[j];
                ds += ju * c[k - j];
                dc -= ju * s[k - j];
            }
            s[k] = ds / k as f64;
            c[k] = dc / k as f64;
        }
        (Jet { c: s }, Jet { c })
    }
}

impl Scalar for Jet {
    fn cst(x: f64) -> Self {
        Jet::constant(x)
    }
    fn re(&self) -> f64 {
        self.c[0]
    }
    fn sin(self) -> Self {
        self.sin_cos().0
    }
    fn cos(self) -> Self {
        self.sin_cos().1
    }
    fn exp(self) -> Self {
        let mut e = [0.0; JET_LEN];
        e[0] = self.c[0].exp();
        for k in 1..JET_LEN {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * e[k - j];
            }
            e[k] = s / k as f64;
        }
        Jet { c: e }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        let x = Dual::<2>::var(3.0, 0);
        let y = Dual::<2>::var(-2.0, 1);
        let z = x * y + x.sin() / y;
        assert_eq!(z.v, -6.0 + 3.0f64.sin() / -2.0);
        assert!((z.d[0] - (-2.0 + 3.0f64.cos() / -2.0)).abs() < 1e-15);
        assert!((z.d[1] - (3.0 - 3.0f64.sin() / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn jet_matches_taylor_of_sin_exp() {
        let t = Jet::time();
        let x = t * 2.0 + 0.3;
        let s = x.sin();
        // d^n/dt^n sin(0.3 + 2t) at 0 = 2^n sin(0.3 + n pi/2)
        for n in 0..JET_LEN {
            let exact = 2f64.powi(n as i32) * (0.3 + n as f64 * std::f64::consts::FRAC_PI_2).sin();
            assert!((s.derivative(n) - exact).abs() < 1e-13, "n={n}");
        }
        let e = (t * 3.0).exp();
        for n in 0..JET_LEN {
            assert!((e.derivative(n) - 3f64.powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn jet_division_inverts_multiplication() {
        let a = Jet {
            c: [1.5, -0.2, 0.7, 0.1],
        };
        let b = Jet {
            c: [2.0, 0.3, -0.4, 0.9],
        };
        let r = (a * b) / b;
        for k in 0..JET_LEN {
            assert!((r.c[k] - a.c[k]).abs() < 1e-14);
        }
    }
}
