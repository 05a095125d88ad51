//! Forward-mode dual numbers and the scalar abstraction shared by the
//! benchmark dynamics.
//!
//! A `Dual` carries a value and the derivative with respect to one seeded
//! input. Evaluating a right-hand side with duals seeded per state column
//! yields its Jacobian without any symbolic work.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::autodiff::gelu;

/// Value/tangent pair obeying `(a,ȧ)·(b,ḃ) = (ab, aḃ + ȧb)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub tan: f64,
}

impl Dual {
    #[inline]
    pub fn new(val: f64, tan: f64) -> Self {
        Dual { val, tan }
    }

    /// Constant (zero tangent).
    #[inline]
    pub fn constant(val: f64) -> Self {
        Dual { val, tan: 0.0 }
    }

    /// Seeded variable (unit tangent).
    #[inline]
    pub fn variable(val: f64) -> Self {
        Dual { val, tan: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.val + o.val, self.tan + o.tan)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.val - o.val, self.tan - o.tan)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.val * o.val, self.val * o.tan + self.tan * o.val)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        // val uses plain division so the value path is bitwise identical
        // to the f64 evaluation of the same expression
        let val = self.val / o.val;
        Dual::new(val, (self.tan - val * o.tan) / o.val)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.val, -self.tan)
    }
}

/// The scalar interface the dynamics right-hand sides are generic over,
/// implemented for plain `f64` and for `Dual`.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    /// Multiply by a plain constant.
    fn scale(self, c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    /// GELU in the same tanh form as the network activation.
    fn gelu(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn gelu(self) -> Self {
        gelu::gelu(self)
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual::new(self.val * c, self.tan * c)
    }
    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.val.sin(), self.val.cos() * self.tan)
    }
    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.val.cos(), -self.val.sin() * self.tan)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        Dual::new(e, e * self.tan)
    }
    #[inline]
    fn tanh(self) -> Self {
        let u = self.val.tanh();
        Dual::new(u, (1.0 - u * u) * self.tan)
    }
    #[inline]
    fn gelu(self) -> Self {
        let (y, u) = gelu::gelu_with_cache(self.val);
        Dual::new(y, gelu::grad_from_cache(self.val, u) * self.tan)
    }
}
