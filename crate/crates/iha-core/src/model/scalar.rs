//! Scalar abstraction for model evaluation.
//!
//! The forward/backward passes are generic over [`Scalar`] so the same code
//! yields plain `f64` gradients and, instantiated with [`Dual`], exact
//! second derivatives (each dual sweep differentiates the gradient along one
//! coordinate direction).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// Value part (the underlying `f64` for duals).
    fn value(self) -> f64;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    /// `max(0, x)`, branching on the value part.
    fn relu(self) -> Self;
    /// Derivative mask of relu at this point (1 if value > 0 else 0).
    fn relu_mask(self) -> f64 {
        if self.value() > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
}

/// First-order dual number `val + eps * d` with `d^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(val: f64, eps: f64) -> Self {
        Self { val, eps }
    }

    pub fn constant(val: f64) -> Self {
        Self { val, eps: 0.0 }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.val + rhs.val, self.eps + rhs.eps)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.val - rhs.val, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.val * rhs.val, self.val * rhs.eps + self.eps * rhs.val)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let val = self.val / rhs.val;
        Self::new(val, (self.eps - val * rhs.eps) / rhs.val)
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.val, -self.eps)
    }
}

impl Scalar for Dual {
    fn from_f64(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        Self::new(e, self.eps * e)
    }
    fn ln(self) -> Self {
        Self::new(self.val.ln(), self.eps / self.val)
    }
    fn relu(self) -> Self {
        if self.val > 0.0 {
            self
        } else {
            Self::constant(0.0)
        }
    }
}
