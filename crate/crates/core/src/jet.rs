//! Forward-mode derivatives up to third order in at most six variables.
//!
//! A [`Jet`] carries a value together with its gradient, the upper
//! triangle of its Hessian and the `i ≤ j ≤ k` part of its third-derivative
//! tensor. Arithmetic propagates all of them exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const MAX_VARS: usize = 6;
const N2: usize = MAX_VARS * (MAX_VARS + 1) / 2;
const N3: usize = MAX_VARS * (MAX_VARS + 1) * (MAX_VARS + 2) / 6;

/// Packed index of `(i, j)` with `i ≤ j`.
#[inline]
pub fn idx2(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// Packed index of `(i, j, k)` in any order.
#[inline]
pub fn idx3(i: usize, j: usize, k: usize) -> usize {
    let mut s = [i, j, k];
    s.sort_unstable();
    let [i, j, k] = s;
    k * (k + 1) * (k + 2) / 6 + j * (j + 1) / 2 + i
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    n: usize,
    pub v: f64,
    pub d1: [f64; MAX_VARS],
    pub d2: [f64; N2],
    pub d3: [f64; N3],
}

impl Jet {
    pub fn constant(n: usize, v: f64) -> Self {
        assert!(n <= MAX_VARS, "jets support at most {MAX_VARS} variables");
        Self {
            n,
            v,
            d1: [0.0; MAX_VARS],
            d2: [0.0; N2],
            d3: [0.0; N3],
        }
    }

    /// The `i`-th independent variable at value `v`.
    pub fn var(n: usize, i: usize, v: f64) -> Self {
        let mut j = Self::constant(n, v);
        j.d1[i] = 1.0;
        j
    }

    /// Independent variables at `values`.
    pub fn vars(values: &[f64]) -> Vec<Jet> {
        let n = values.len();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::var(n, i, v))
            .collect()
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn grad(&self, i: usize) -> f64 {
        self.d1[i]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.d2[idx2(i, j)]
    }

    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        self.d3[idx3(i, j, k)]
    }

    /// `φ(self)` given `φ, φ', φ'', φ'''` at the current value.
    pub fn compose(&self, f: [f64; 4]) -> Jet {
        let n = self.n;
        let mut out = Jet::constant(n, f[0]);
        let g = &self.d1;
        for i in 0..n {
            out.d1[i] = f[1] * g[i];
        }
        for j in 0..n {
            for i in 0..=j {
                let p = idx2(i, j);
                out.d2[p] = f[2] * g[i] * g[j] + f[1] * self.d2[p];
            }
        }
        for k in 0..n {
            for j in 0..=k {
                for i in 0..=j {
                    let h = |a, b| self.d2[idx2(a, b)];
                    let p = idx3(i, j, k);
                    out.d3[p] = f[3] * g[i] * g[j] * g[k]
                        + f[2] * (h(i, j) * g[k] + h(i, k) * g[j] + h(j, k) * g[i])
                        + f[1] * self.d3[p];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = *self;
        out.v *= s;
        out.d1.iter_mut().for_each(|x| *x *= s);
        out.d2.iter_mut().for_each(|x| *x *= s);
        out.d3.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn add_const(&self, c: f64) -> Jet {
        let mut out = *self;
        out.v += c;
        out
    }

    pub fn sqrt(&self) -> Jet {
        let s = self.v.sqrt();
        self.compose([
            s,
            0.5 / s,
            -0.25 / (s * self.v),
            0.375 / (s * self.v * self.v),
        ])
    }

    pub fn ln(&self) -> Jet {
        let x = self.v;
        self.compose([x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)])
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        self.compose([e, e, e, e])
    }

    pub fn recip(&self) -> Jet {
        let x = self.v;
        let r = 1.0 / x;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn powi(&self, p: i32) -> Jet {
        let x = self.v;
        let pf = p as f64;
        let d = |k: i32| -> f64 {
            let mut c = 1.0;
            for m in 0..k {
                c *= pf - m as f64;
            }
            if c == 0.0 {
                0.0
            } else {
                c * x.powi(p - k)
            }
        };
        self.compose([x.powi(p), d(1), d(2), d(3)])
    }

    pub fn square(&self) -> Jet {
        *self * *self
    }

    fn zip(&self, o: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        let n = self.n.max(o.n);
        let mut out = Jet::constant(n, f(self.v, o.v));
        for i in 0..MAX_VARS {
            out.d1[i] = f(self.d1[i], o.d1[i]);
        }
        for i in 0..N2 {
            out.d2[i] = f(self.d2[i], o.d2[i]);
        }
        for i in 0..N3 {
            out.d3[i] = f(self.d3[i], o.d3[i]);
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        self.zip(&o, |a, b| a + b)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self.zip(&o, |a, b| a - b)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let n = self.n.max(o.n);
        let (f, g) = (&self, &o);
        let mut out = Jet::constant(n, f.v * g.v);
        for i in 0..n {
            out.d1[i] = f.d1[i] * g.v + f.v * g.d1[i];
        }
        for j in 0..n {
            for i in 0..=j {
                let p = idx2(i, j);
                out.d2[p] = f.d2[p] * g.v + f.d1[i] * g.d1[j] + f.d1[j] * g.d1[i] + f.v * g.d2[p];
            }
        }
        for k in 0..n {
            for j in 0..=k {
                for i in 0..=j {
                    let p = idx3(i, j, k);
                    let (fij, fik, fjk) = (f.d2[idx2(i, j)], f.d2[idx2(i, k)], f.d2[idx2(j, k)]);
                    let (gij, gik, gjk) = (g.d2[idx2(i, j)], g.d2[idx2(i, k)], g.d2[idx2(j, k)]);
                    out.d3[p] = f.d3[p] * g.v
                        + fij * g.d1[k]
                        + fik * g.d1[j]
                        + fjk * g.d1[i]
                        + f.d1[i] * gjk
                        + f.d1[j] * gik
                        + f.d1[k] * gij
                        + f.v * g.d3[p];
                }
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        self.add_const(c)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, c: f64) -> Jet {
        self.add_const(-c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_indices_are_dense() {
        let mut seen2 = vec![false; N2];
        for j in 0..MAX_VARS {
            for i in 0..=j {
                seen2[idx2(i, j)] = true;
            }
        }
        assert!(seen2.iter().all(|&s| s));
        let mut seen3 = vec![false; N3];
        for k in 0..MAX_VARS {
            for j in 0..=k {
                for i in 0..=j {
                    assert!(!seen3[idx3(i, j, k)]);
                    seen3[idx3(i, j, k)] = true;
                }
            }
        }
        assert!(seen3.iter().all(|&s| s));
        assert_eq!(idx3(2, 0, 1), idx3(0, 1, 2));
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        // f = x² y³ z at (2, 3, 5)
        let v = Jet::vars(&[2.0, 3.0, 5.0]);
        let f = v[0].square() * v[1].powi(3) * v[2];
        let (x, y, z) = (2.0, 3.0, 5.0);
        assert_eq!(f.v, x * x * y * y * y * z);
        assert_eq!(f.grad(0), 2.0 * x * y * y * y * z);
        assert_eq!(f.hess(0, 1), 2.0 * x * 3.0 * y * y * z);
        assert_eq!(f.third(0, 1, 2), 2.0 * x * 3.0 * y * y);
        assert_eq!(f.third(0, 0, 1), 2.0 * 3.0 * y * y * z);
        assert_eq!(f.third(1, 1, 1), x * x * 6.0 * z);
        assert_eq!(f.third(2, 2, 2), 0.0);
    }

    #[test]
    fn composition_matches_closed_form() {
        // ln(x y) has ∂³/∂x³ = 2/x³ and no mixed terms.
        let v = Jet::vars(&[1.5, 0.7]);
        let f = (v[0] * v[1]).ln();
        assert!((f.grad(0) - 1.0 / 1.5).abs() < 1e-15);
        assert!(f.hess(0, 1).abs() < 1e-15);
        assert!((f.third(0, 0, 0) - 2.0 / 1.5f64.powi(3)).abs() < 1e-14);
        assert!(f.third(0, 0, 1).abs() < 1e-14);
        let s = (v[0] / v[1]).sqrt();
        let h = 1e-5;
        let fd = (((1.5 + h) / 0.7f64).sqrt() - ((1.5 - h) / 0.7f64).sqrt()) / (2.0 * h);
        assert!((s.grad(0) - fd).abs() < 1e-9);
    }
}
