//! Projected limited-memory BFGS for box-constrained minimization.
//!
//! Variables pinned at a bound with the gradient pushing outward are held
//! fixed; the two-loop recursion acts on the remaining ones and the step is
//! projected back onto the box before a backtracking Armijo test.

use std::collections::VecDeque;

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct LbfgsbConfig {
    pub history: usize,
    pub max_iterations: usize,
    /// Convergence when `‖P(x − ∇f) − x‖∞` drops below this fraction of
    /// its value at the start point.
    pub gradient_tolerance: f64,
}

#[derive(Clone, Debug)]
pub struct LbfgsbOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
}

fn clamp(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((xi, gi), (l, h))| ((xi - gi).clamp(*l, *h) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over `[lo, hi]` starting at `x0` (clamped into the box).
///
/// `f(x, iteration)` returns the value and gradient; an error at a trial
/// point counts as a rejected step, an error at `x0` is returned.
/// `on_iter` sees every accepted iterate.
pub fn minimize(
    f: &mut dyn FnMut(&[f64], usize) -> Result<(f64, Vec<f64>)>,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    config: &LbfgsbConfig,
    on_iter: &mut dyn FnMut(usize, &[f64], f64),
) -> Result<LbfgsbOutcome> {
    let n = x0.len();
    let mut x = clamp(x0, lo, hi);
    let (mut fx, mut g) = f(&x, 0)?;
    let mut hist = vec![fx];
    on_iter(0, &x, fx);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut pg = projected_gradient(&x, &g, lo, hi);
    let tol = config.gradient_tolerance * pg;
    let mut converged = pg <= tol || fx == 0.0;
    while !converged && iterations < config.max_iterations {
        let eps = 1e-12;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] + eps && g[i] > 0.0) || (x[i] >= hi[i] - eps && g[i] < 0.0)))
            .collect();
        let masked = |v: &[f64]| -> Vec<f64> { v.iter().zip(&free).map(|(a, &f)| if f { *a } else { 0.0 }).collect() };
        let mut q = masked(&g);
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(&masked(s), &q);
            let ym = masked(y);
            q.iter_mut().zip(&ym).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            // First step: at most a tenth of the box along the gradient.
            let gmax = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let width = (0..n).filter(|&i| free[i]).map(|i| hi[i] - lo[i]).fold(f64::INFINITY, f64::min);
            if gmax > 0.0 && width.is_finite() {
                let scale = 0.1 * width / gmax;
                q.iter_mut().for_each(|v| *v *= scale);
            }
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(&masked(y), &q);
            let sm = masked(s);
            q.iter_mut().zip(&sm).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = masked(&q).iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            pairs.clear();
            d = masked(&g).iter().map(|v| -v).collect();
        }
        let mut t = 1.0;
        let mut step = None;
        for _ in 0..40 {
            let trial: Vec<f64> = clamp(&x.iter().zip(&d).map(|(a, b)| a + t * b).collect::<Vec<_>>(), lo, hi);
            let dx: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if dx.iter().all(|v| *v == 0.0) {
                break;
            }
            if let Ok((ft, gt)) = f(&trial, iterations + 1) {
                if ft.is_finite() && ft <= fx + 1e-4 * dot(&g, &dx) {
                    step = Some((trial, ft, gt, dx));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gn, s)) = step else {
            if pairs.is_empty() {
                // Steepest descent cannot improve: stationary up to rounding.
                converged = true;
                break;
            }
            pairs.clear();
            continue;
        };
        iterations += 1;
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            pairs.push_back((s, y, 1.0 / sy));
            if pairs.len() > config.history {
                pairs.pop_front();
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
        hist.push(fx);
        on_iter(iterations, &x, fx);
        pg = projected_gradient(&x, &g, lo, hi);
        converged = pg <= tol || fx == 0.0;
    }
    Ok(LbfgsbOutcome {
        x,
        f: fx,
        history: hist,
        iterations,
        converged,
        projected_gradient: pg,
    })
}
