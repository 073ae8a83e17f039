use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

/// First-order jet of a holomorphic function: its value and complex derivative at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet1 {
    pub value: Complex64,
    pub deriv: Complex64,
}

impl Jet1 {
    pub const ZERO: Jet1 = Jet1 {
        value: Complex64::new(0.0, 0.0),
        deriv: Complex64::new(0.0, 0.0),
    };
    pub const ONE: Jet1 = Jet1 {
        value: Complex64::new(1.0, 0.0),
        deriv: Complex64::new(0.0, 0.0),
    };

    pub fn new(value: Complex64, deriv: Complex64) -> Self {
        Jet1 { value, deriv }
    }

    pub fn constant(value: Complex64) -> Self {
        Jet1 {
            value,
            deriv: Complex64::new(0.0, 0.0),
        }
    }

    /// The identity function `z` seeded at `z`.
    pub fn variable(z: Complex64) -> Self {
        Jet1 {
            value: z,
            deriv: Complex64::new(1.0, 0.0),
        }
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        Jet1 {
            value: e,
            deriv: e * self.deriv,
        }
    }

    pub fn scale(self, c: Complex64) -> Self {
        Jet1 {
            value: self.value * c,
            deriv: self.deriv * c,
        }
    }

    /// Non-negative integer power by binary exponentiation.
    pub fn powu(self, k: u32) -> Self {
        if k == 0 {
            return Jet1::ONE;
        }
        // v^k and k v^(k-1) v'
        let below = powu_complex(self.value, k - 1);
        Jet1 {
            value: below * self.value,
            deriv: below * self.deriv * (k as f64),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.deriv.is_finite()
    }
}

/// `base^k` by repeated squaring; deterministic for a given input.
pub fn powu_complex(base: Complex64, mut k: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    let mut b = base;
    while k > 0 {
        if k & 1 == 1 {
            acc *= b;
        }
        k >>= 1;
        if k > 0 {
            b *= b;
        }
    }
    acc
}

impl Add for Jet1 {
    type Output = Jet1;
    fn add(self, rhs: Jet1) -> Jet1 {
        Jet1 {
            value: self.value + rhs.value,
            deriv: self.deriv + rhs.deriv,
        }
    }
}

impl Sub for Jet1 {
    type Output = Jet1;
    fn sub(self, rhs: Jet1) -> Jet1 {
        Jet1 {
            value: self.value - rhs.value,
            deriv: self.deriv - rhs.deriv,
        }
    }
}

impl Mul for Jet1 {
    type Output = Jet1;
    fn mul(self, rhs: Jet1) -> Jet1 {
        Jet1 {
            value: self.value * rhs.value,
            deriv: self.deriv * rhs.value + self.value * rhs.deriv,
        }
    }
}

impl Div for Jet1 {
    type Output = Jet1;
    fn div(self, rhs: Jet1) -> Jet1 {
        let q = self.value / rhs.value;
        Jet1 {
            value: q,
            deriv: (self.deriv - q * rhs.deriv) / rhs.value,
        }
    }
}

impl Neg for Jet1 {
    type Output = Jet1;
    fn neg(self) -> Jet1 {
        Jet1 {
            value: -self.value,
            deriv: -self.deriv,
        }
    }
}

impl Add<Complex64> for Jet1 {
    type Output = Jet1;
    fn add(self, rhs: Complex64) -> Jet1 {
        Jet1 {
            value: self.value + rhs,
            deriv: self.deriv,
        }
    }
}

impl Mul<Complex64> for Jet1 {
    type Output = Jet1;
    fn mul(self, rhs: Complex64) -> Jet1 {
        self.scale(rhs)
    }
}
