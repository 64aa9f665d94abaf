//! Forward-mode dual numbers used to differentiate the generator builders.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Arithmetic needed by the polynomial generator builders.
pub(crate) trait Scalar:
    Copy + Add<Output = Self> + AddAssign + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn powi(self, n: i32) -> Self;
    fn is_zero(self) -> bool;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn is_zero(self) -> bool {
        self == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn var(v: f64) -> Self {
        Dual { v, d: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.d += o.d;
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: -self.d,
        }
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::cst(1.0);
        }
        let p = self.v.powi(n - 1);
        Dual {
            v: p * self.v,
            d: n as f64 * p * self.d,
        }
    }
    fn is_zero(self) -> bool {
        self.v == 0.0 && self.d == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::var(3.0);
        let y = x * x * Dual::cst(2.0) - x;
        assert_eq!(y.v, 15.0);
        assert_eq!(y.d, 11.0);
    }

    #[test]
    fn powi_derivative() {
        let x = Dual::var(0.5);
        let y = x.powi(4);
        assert!((y.v - 0.0625).abs() < 1e-15);
        assert!((y.d - 4.0 * 0.125).abs() < 1e-15);
        assert_eq!(Dual::var(0.0).powi(1).d, 1.0);
    }
}
