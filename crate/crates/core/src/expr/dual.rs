use nalgebra::{DMatrix, DVector};

/// Second-order forward-mode jet: value, gradient and Hessian with respect to
/// the active variables.
///
/// Every operation propagates the Hessian through outer products of the
/// form `a bᵀ + b aᵀ` or `a aᵀ`, so the result is exactly symmetric whenever
/// the inputs are.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Dual2 {
    pub fn constant(value: f64, n: usize) -> Self {
        Dual2 {
            value,
            gradient: DVector::zeros(n),
            hessian: DMatrix::zeros(n, n),
        }
    }

    /// The `index`-th active variable at `value`.
    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut d = Self::constant(value, n);
        d.gradient[index] = 1.0;
        d
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn is_constant(&self) -> bool {
        self.gradient.iter().all(|g| *g == 0.0)
    }

    /// `φ(self)` given `φ(v)`, `φ'(v)`, `φ''(v)`.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let g = &self.gradient;
        let mut hessian = &self.hessian * f1;
        hessian.ger(f2, g, g, 1.0);
        Dual2 {
            value: f0,
            gradient: g * f1,
            hessian,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Dual2 {
            value: self.value + other.value,
            gradient: &self.gradient + &other.gradient,
            hessian: &self.hessian + &other.hessian,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Dual2 {
            value: self.value - other.value,
            gradient: &self.gradient - &other.gradient,
            hessian: &self.hessian - &other.hessian,
        }
    }

    pub fn neg(&self) -> Self {
        Dual2 {
            value: -self.value,
            gradient: -&self.gradient,
            hessian: -&self.hessian,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (self, other);
        let mut hessian = &b.hessian * a.value + &a.hessian * b.value;
        let n = a.dim();
        for j in 0..n {
            for i in 0..n {
                hessian[(i, j)] += a.gradient[i] * b.gradient[j] + b.gradient[i] * a.gradient[j];
            }
        }
        Dual2 {
            value: a.value * b.value,
            gradient: &b.gradient * a.value + &a.gradient * b.value,
            hessian,
        }
    }

    pub fn recip(&self) -> Self {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    /// Integer power; well defined for any base except `0^negative`.
    pub fn powi(&self, n: i32) -> Self {
        let v = self.value;
        let nf = n as f64;
        let d1 = if n == 0 { 0.0 } else { nf * v.powi(n - 1) };
        let d2 = if n == 0 || n == 1 {
            0.0
        } else {
            nf * (nf - 1.0) * v.powi(n - 2)
        };
        self.chain(v.powi(n), d1, d2)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn tan(&self) -> Self {
        let t = self.value.tan();
        let sec2 = 1.0 + t * t;
        self.chain(t, sec2, 2.0 * t * sec2)
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Self {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.value))
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.gradient.iter().all(|g| g.is_finite())
            && self.hessian.iter().all(|h| h.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_second_order() {
        // f = x*y at (2,3): grad (3,2), hessian [[0,1],[1,0]]
        let x = Dual2::variable(2.0, 0, 2);
        let y = Dual2::variable(3.0, 1, 2);
        let f = x.mul(&y);
        assert_eq!(f.value, 6.0);
        assert_eq!(f.gradient.as_slice(), &[3.0, 2.0]);
        assert_eq!(f.hessian, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn powi_matches_repeated_product() {
        let x = Dual2::variable(1.3, 0, 1);
        let cube = x.mul(&x).mul(&x);
        let p = x.powi(3);
        assert!((p.value - cube.value).abs() < 1e-14);
        assert!((p.gradient[0] - cube.gradient[0]).abs() < 1e-14);
        assert!((p.hessian[(0, 0)] - cube.hessian[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn recip_second_derivative() {
        let x = Dual2::variable(2.0, 0, 1);
        let r = x.recip();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.gradient[0], -0.25);
        assert_eq!(r.hessian[(0, 0)], 0.25);
    }
}
