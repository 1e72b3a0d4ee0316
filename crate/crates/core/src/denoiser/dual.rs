//! Forward-mode dual numbers carrying the gradient with respect to the
//! eleven box-state components, and a small scalar trait so the corner and
//! Chamfer computations can be written once for `f64` and for duals.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::diffusion::STATE_DIM;

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(x: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::constant(k)
    }
}

impl Real for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

/// `v + Σ d[i] εᵢ` with `εᵢ εⱼ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; STATE_DIM],
}

impl Dual {
    /// The `i`-th input variable.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; STATE_DIM];
        d[i] = 1.0;
        Self { v, d }
    }

    fn map(self, v: f64, dv: f64) -> Self {
        Self {
            v,
            d: self.d.map(|x| x * dv),
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: std::array::from_fn(|i| self.d[i] + o.d[i]),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: std::array::from_fn(|i| self.d[i] - o.d[i]),
        }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: std::array::from_fn(|i| self.d[i] * o.v + self.v * o.d[i]),
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        Dual {
            v,
            d: std::array::from_fn(|i| (self.d[i] - v * o.d[i]) * inv),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: self.d.map(|x| -x),
        }
    }
}

impl Real for Dual {
    fn constant(x: f64) -> Self {
        Dual {
            v: x,
            d: [0.0; STATE_DIM],
        }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.map(s, 0.5 / s)
    }
    fn abs(self) -> Self {
        // Subgradient 0 at the kink.
        let sign = if self.v > 0.0 {
            1.0
        } else if self.v < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.map(self.v.abs(), sign)
    }
    fn scale(self, k: f64) -> Self {
        self.map(self.v * k, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<S: Real>(x: S, y: S) -> S {
        (x * x + y).sqrt() / (x - y.scale(3.0)).abs() + x
    }

    #[test]
    fn matches_finite_differences() {
        let (x, y) = (0.7, -0.4);
        let d = f(Dual::variable(x, 0), Dual::variable(y, 1));
        let h = 1e-6;
        let dx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let dy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        assert!((d.v - f(x, y)).abs() < 1e-15);
        assert!((d.d[0] - dx).abs() < 1e-8);
        assert!((d.d[1] - dy).abs() < 1e-8);
        assert!(d.d[2..].iter().all(|&g| g == 0.0));
    }
}
