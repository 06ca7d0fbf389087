//! Parameter optimizers: Adam for the stochastic phase and L-BFGS with
//! a strong-Wolfe line search for deterministic refinement.
//!
//! L-BFGS requires the loss to be deterministic during a line search;
//! the solver freezes the Monte Carlo node sets whenever it runs here.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),
    #[error("gradient length {got} does not match parameter length {want}")]
    LengthMismatch { got: usize, want: usize },
}

/// Adam with bias correction; defaults β1=0.9, β2=0.999, ε=1e−8.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), OptimError> {
        if grads.len() != params.len() || params.len() != self.m.len() {
            return Err(OptimError::LengthMismatch {
                got: grads.len(),
                want: self.m.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient(i));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Outcome of one L-BFGS iteration.
#[derive(Debug, Clone, Copy)]
pub struct LbfgsOutcome {
    pub loss: f64,
    pub grad_norm: f64,
    /// True when the Wolfe search failed and parameters were left as-is.
    pub line_search_failed: bool,
}

/// L-BFGS with two-loop recursion and a strong-Wolfe line search
/// (c1=1e−4, c2=0.9, memory m=10 by default).
#[derive(Debug, Clone)]
pub struct LbfgsState {
    history: Vec<(Vec<f64>, Vec<f64>, f64)>, // (s, y, 1/yᵀs)
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>, // (params, grad) at last accepted point
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LbfgsState {
    pub fn new() -> Self {
        Self {
            history: Vec::new(),
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            prev: None,
        }
    }

    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = grad.to_vec();
        let k = self.history.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let (s, y, rho) = &self.history[i];
            let a = rho * dot(s, &q);
            alphas[i] = a;
            for (qj, yj) in q.iter_mut().zip(y) {
                *qj -= a * yj;
            }
        }
        // initial Hessian scaling γ = sᵀy / yᵀy of the newest pair
        if let Some((s, y, _)) = self.history.last() {
            let gamma = dot(s, y) / dot(y, y);
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let (s, y, rho) = &self.history[i];
            let b = rho * dot(y, &q);
            let a = alphas[i];
            for (qj, sj) in q.iter_mut().zip(s) {
                *qj += (a - b) * sj;
            }
        }
        for qj in q.iter_mut() {
            *qj = -*qj;
        }
        q
    }

    /// One quasi-Newton step. `eval` must be deterministic: it is called
    /// repeatedly along the ray during the line search.
    pub fn step(
        &mut self,
        params: &mut Vec<f64>,
        eval: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    ) -> LbfgsOutcome {
        let (f0, g0) = eval(params);
        let gnorm = dot(&g0, &g0).sqrt();
        if gnorm == 0.0 {
            return LbfgsOutcome {
                loss: f0,
                grad_norm: 0.0,
                line_search_failed: false,
            };
        }
        let mut dir = self.direction(&g0);
        let mut slope = dot(&dir, &g0);
        if !(slope < 0.0) {
            // not a descent direction: fall back to steepest descent
            dir = g0.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        let (alpha, f_new, g_new, ok) = self.wolfe_search(params, &dir, f0, slope, eval);
        if !ok {
            return LbfgsOutcome {
                loss: f0,
                grad_norm: gnorm,
                line_search_failed: true,
            };
        }
        let new_params: Vec<f64> = params
            .iter()
            .zip(&dir)
            .map(|(p, d)| p + alpha * d)
            .collect();
        // curvature update
        if let Some((pp, pg)) = &self.prev {
            let _ = (pp, pg);
        }
        let s: Vec<f64> = new_params.iter().zip(params.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g0).map(|(a, b)| a - b).collect();
        let ys = dot(&y, &s);
        if ys > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if self.history.len() == self.memory {
                self.history.remove(0);
            }
            self.history.push((s, y, 1.0 / ys));
        }
        *params = new_params;
        self.prev = Some((params.clone(), g_new.clone()));
        LbfgsOutcome {
            loss: f_new,
            grad_norm: dot(&g_new, &g_new).sqrt(),
            line_search_failed: false,
        }
    }

    /// Strong-Wolfe bracketing + zoom; returns (α, f(α), ∇f(α), ok).
    fn wolfe_search(
        &self,
        params: &[f64],
        dir: &[f64],
        f0: f64,
        slope0: f64,
        eval: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    ) -> (f64, f64, Vec<f64>, bool) {
        let probe = |a: f64, eval: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>)| {
            let x: Vec<f64> = params.iter().zip(dir).map(|(p, d)| p + a * d).collect();
            let (f, g) = eval(&x);
            let dphi = dot(&g, dir);
            (f, g, dphi)
        };
        let mut a_prev = 0.0;
        let mut f_prev = f0;
        let mut dphi_prev = slope0;
        let mut a = 1.0;
        let mut budget = self.max_line_search;
        // bracketing phase
        let (mut lo, mut hi, mut f_lo, mut dphi_lo);
        loop {
            if budget == 0 {
                return (0.0, f0, Vec::new(), false);
            }
            budget -= 1;
            let (f, g, dphi) = probe(a, eval);
            if f > f0 + self.c1 * a * slope0 || (f >= f_prev && a_prev > 0.0) {
                lo = a_prev;
                hi = a;
                f_lo = f_prev;
                dphi_lo = dphi_prev;
                break;
            }
            if dphi.abs() <= -self.c2 * slope0 {
                return (a, f, g, true);
            }
            if dphi >= 0.0 {
                lo = a;
                hi = a_prev;
                f_lo = f;
                dphi_lo = dphi;
                break;
            }
            a_prev = a;
            f_prev = f;
            dphi_prev = dphi;
            a *= 2.0;
            if a > 1e6 {
                return (0.0, f0, Vec::new(), false);
            }
        }
        // zoom phase
        while budget > 0 {
            budget -= 1;
            let mid = 0.5 * (lo + hi);
            let (f, g, dphi) = probe(mid, eval);
            if f > f0 + self.c1 * mid * slope0 || f >= f_lo {
                hi = mid;
            } else {
                if dphi.abs() <= -self.c2 * slope0 {
                    return (mid, f, g, true);
                }
                if dphi * (hi - lo) >= 0.0 {
                    hi = lo;
                }
                lo = mid;
                f_lo = f;
                dphi_lo = dphi;
            }
            if (hi - lo).abs() < 1e-16 {
                break;
            }
        }
        let _ = dphi_lo;
        // accept the best Armijo point found, if any
        if f_lo < f0 + self.c1 * lo * slope0 && lo > 0.0 {
            let (f, g, _) = probe(lo, eval);
            return (lo, f, g, true);
        }
        (0.0, f0, Vec::new(), false)
    }
}

impl Default for LbfgsState {
    fn default() -> Self {
        Self::new()
    }
}
