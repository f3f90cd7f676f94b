//! Limited-memory BFGS minimization with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop once the gradient ∞-norm falls below this.
    pub grad_tol: f64,
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_evals: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: 1e-6,
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_evals: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Trial {
    step: f64,
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: &'a LbfgsOptions,
    evals: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, step: f64) -> Option<Trial> {
        self.evals += 1;
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(a, b)| a + step * b).collect();
        let (value, grad) = (self.f)(&x).ok()?;
        if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let slope = dot(&grad, self.d);
        Some(Trial {
            step,
            x,
            value,
            grad,
            slope,
        })
    }

    fn acceptable(&self, t: &Trial, best: f64) -> bool {
        t.value <= self.f0 + self.opts.c1 * t.step * self.slope0 && t.value < best
    }

    fn curvature_ok(&self, t: &Trial) -> bool {
        t.slope.abs() <= -self.opts.c2 * self.slope0
    }

    fn origin(&self, t: &Option<Trial>) -> (f64, f64, f64) {
        match t {
            Some(t) => (t.step, t.value, t.slope),
            None => (0.0, self.f0, self.slope0),
        }
    }

    /// Strong-Wolfe search: expand the step until the minimum is bracketed,
    /// then shrink the bracket. Returns the best sufficient-decrease point
    /// if the curvature condition is never met.
    fn run(mut self) -> Option<Trial> {
        let mut prev: Option<Trial> = None;
        let mut step = 1.0;
        loop {
            if self.evals >= self.opts.max_evals {
                return prev;
            }
            let (_, prev_value, _) = self.origin(&prev);
            let Some(t) = self.eval(step) else {
                return self.zoom(prev, (step, None));
            };
            if !self.acceptable(&t, if prev.is_some() { prev_value } else { f64::INFINITY }) {
                return self.zoom(prev, (t.step, Some(t.value)));
            }
            if self.curvature_ok(&t) {
                return Some(t);
            }
            if t.slope >= 0.0 {
                let (ps, pv, _) = self.origin(&prev);
                return self.zoom(Some(t), (ps, Some(pv)));
            }
            step = t.step * 2.0;
            prev = Some(t);
        }
    }

    /// `lo` is the best acceptable point so far (the origin when `None`);
    /// `hi` is the other end of the bracket with its value when finite.
    fn zoom(&mut self, mut lo: Option<Trial>, mut hi: (f64, Option<f64>)) -> Option<Trial> {
        loop {
            if self.evals >= self.opts.max_evals {
                return lo;
            }
            let (ls, lv, lg) = self.origin(&lo);
            let (hs, hv) = hi;
            let w = hs - ls;
            if w.abs() <= 1e-12 * ls.abs().max(hs.abs()) {
                return lo;
            }
            let mut step = ls + 0.5 * w;
            if let Some(hv) = hv {
                let c = (hv - lv - lg * w) / (w * w);
                if c > 0.0 {
                    let cand = ls - lg / (2.0 * c);
                    let (a, b) = (ls.min(hs), ls.max(hs));
                    if cand > a + 0.1 * (b - a) && cand < b - 0.1 * (b - a) {
                        step = cand;
                    }
                }
            }
            match self.eval(step) {
                None => hi = (step, None),
                Some(t) => {
                    if !self.acceptable(&t, if lo.is_some() { lv } else { f64::INFINITY }) {
                        hi = (t.step, Some(t.value));
                    } else {
                        if self.curvature_ok(&t) {
                            return Some(t);
                        }
                        if t.slope * w >= 0.0 {
                            hi = (ls, Some(lv));
                        }
                        lo = Some(t);
                    }
                }
            }
        }
    }
}

/// Minimizes `f`, which returns the value and gradient at a point.
///
/// Evaluations that fail or return non-finite values are treated as rejected
/// trial steps, so the accepted objective sequence is non-increasing.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (mut fx, mut g) = f(&x0)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg(format!(
            "objective is not finite at the initial point ({fx})"
        )));
    }
    let mut x = x0;
    let mut history = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < opts.grad_tol;

    while !converged && iterations < opts.max_iters {
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / inf_norm(&g).max(1.0),
        };
        d.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v / inf_norm(&g).max(1.0)).collect();
            slope = dot(&g, &d);
        }

        let search = LineSearch {
            f: &mut f,
            x: &x,
            d: &d,
            f0: fx,
            slope0: slope,
            opts,
            evals: 0,
        };
        let Some(t) = search.run() else {
            if pairs.is_empty() {
                break;
            }
            pairs.clear();
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = t.x;
        fx = t.value;
        g = t.grad;
        history.push(fx);
        converged = inf_norm(&g) < opts.grad_tol;
    }
    Ok(LbfgsResult {
        x,
        value: fx,
        grad: g,
        iterations,
        converged,
        history,
    })
}
