use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Swish,
    Tanh,
    Sine,
    Softplus,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

impl Activation {
    /// Value and first three derivatives at `x`.
    pub fn derivs(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                let s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s);
                [x * s, s + x * s1, 2.0 * s1 + x * s2, 3.0 * s2 + x * s3]
            }
            Activation::Tanh => {
                let t = x.tanh();
                let u = 1.0 - t * t;
                [t, u, -2.0 * t * u, -2.0 * u * (1.0 - 3.0 * t * t)]
            }
            Activation::Sine => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c]
            }
            Activation::Softplus => {
                let s = sigmoid(x);
                let s1 = s * (1.0 - s);
                [softplus(x), s, s1, s1 * (1.0 - 2.0 * s)]
            }
        }
    }

    /// Value and first two derivatives.
    #[inline]
    pub fn derivs2(self, x: f64) -> [f64; 3] {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                let s1 = s * (1.0 - s);
                [x * s, s + x * s1, s1 * (2.0 + x * (1.0 - 2.0 * s))]
            }
            Activation::Tanh => {
                let t = x.tanh();
                let u = 1.0 - t * t;
                [t, u, -2.0 * t * u]
            }
            Activation::Sine => {
                let (s, c) = x.sin_cos();
                [s, c, -s]
            }
            Activation::Softplus => {
                let s = sigmoid(x);
                [softplus(x), s, s * (1.0 - s)]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        for act in [Activation::Swish, Activation::Tanh, Activation::Sine, Activation::Softplus] {
            for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
                let d = act.derivs(x);
                let h = 1e-5;
                let (p, m) = (act.derivs(x + h), act.derivs(x - h));
                for k in 0..3 {
                    let fd = (p[k] - m[k]) / (2.0 * h);
                    assert!((fd - d[k + 1]).abs() < 1e-8, "{act:?} {x} order {k}");
                }
                let d2 = act.derivs2(x);
                for k in 0..3 {
                    assert!((d2[k] - d[k]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((Activation::Softplus.derivs(800.0)[0] - 800.0).abs() < 1e-9);
        assert!(Activation::Softplus.derivs(-800.0)[0] >= 0.0);
        assert_eq!(Activation::Softplus.derivs(0.0)[0], 2f64.ln());
    }
}
