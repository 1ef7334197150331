//! Limited-memory BFGS with two-loop recursion and a backtracking Armijo
//! line search.
//!
//! [`Lbfgs::step`] performs one iteration against whatever objective it is
//! handed, which lets the renderer swap objectives between iterations (fresh
//! patch assignments) while keeping each line search on a fixed, smooth one.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Sufficient-decrease constant of the Armijo condition.
    pub c1: f64,
    /// Step multiplier applied on each rejected trial.
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 8,
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted {
        x: Vec<f64>,
        value: f64,
        grad: Vec<f64>,
        step: f64,
        backtracks: usize,
    },
    /// No step length satisfied the Armijo condition, even along steepest descent.
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    GradientTolerance,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct Lbfgs {
    config: LbfgsConfig,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(value: f64, grad: &[f64], at: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective value {value} at {at}")));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient component {i} is {} at {at}",
            grad[i]
        )));
    }
    Ok(())
}

impl Lbfgs {
    pub fn new(config: LbfgsConfig) -> Self {
        Lbfgs {
            config,
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
        }
    }

    pub fn history_len(&self) -> usize {
        self.s.len()
    }

    pub fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    /// Search direction `-H·g` from the two-loop recursion, with the initial
    /// inverse Hessian scaled by `sᵀy / yᵀy` of the newest pair.
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let m = self.s.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qv, yv) in q.iter_mut().zip(&self.y[i]) {
                *qv -= alpha[i] * yv;
            }
        }
        let h0 = match (self.s.back(), self.y.back()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0,
        };
        q.iter_mut().for_each(|v| *v *= h0);
        for i in 0..m {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qv, sv) in q.iter_mut().zip(&self.s[i]) {
                *qv += (alpha[i] - beta) * sv;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        // only positive curvature keeps the implied inverse Hessian positive definite
        if sy <= 1e-10 * norm(&s) * norm(&y) || sy <= 0.0 {
            return;
        }
        if self.s.len() == self.config.memory.max(1) {
            self.s.pop_front();
            self.y.pop_front();
            self.rho.pop_front();
        }
        self.rho.push_back(1.0 / sy);
        self.s.push_back(s);
        self.y.push_back(y);
    }

    fn line_search<F>(
        &self,
        x: &[f64],
        value: f64,
        grad: &[f64],
        dir: &[f64],
        initial: f64,
        objective: &mut F,
    ) -> Result<Option<(Vec<f64>, f64, Vec<f64>, f64, usize)>>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let slope = dot(grad, dir);
        let mut t = initial;
        for backtracks in 0..=self.config.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + t * di).collect();
            let (fv, gv) = objective(&trial)?;
            check_finite(fv, &gv, "line-search trial")?;
            if fv <= value + self.config.c1 * t * slope {
                return Ok(Some((trial, fv, gv, t, backtracks)));
            }
            t *= self.config.shrink;
        }
        Ok(None)
    }

    /// One iteration from `x` (with known `value` and `grad`) against `objective`.
    /// An accepted step never increases `objective`.
    pub fn step<F>(
        &mut self,
        x: &[f64],
        value: f64,
        grad: &[f64],
        mut objective: F,
    ) -> Result<StepOutcome>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        check_finite(value, grad, "current point")?;
        let mut attempts = 0;
        loop {
            let mut dir = self.direction(grad);
            if dot(&dir, grad) >= 0.0 {
                self.reset();
                dir = grad.iter().map(|g| -g).collect();
            }
            let initial = if self.s.is_empty() {
                let l1: f64 = grad.iter().map(|g| g.abs()).sum();
                (1.0 / l1).min(1.0)
            } else {
                1.0
            };
            if let Some((xn, fv, gv, t, backtracks)) =
                self.line_search(x, value, grad, &dir, initial, &mut objective)?
            {
                let s = xn.iter().zip(x).map(|(a, b)| a - b).collect();
                let y = gv.iter().zip(grad).map(|(a, b)| a - b).collect();
                self.push_pair(s, y);
                return Ok(StepOutcome::Accepted {
                    x: xn,
                    value: fv,
                    grad: gv,
                    step: t,
                    backtracks,
                });
            }
            attempts += 1;
            if self.s.is_empty() || attempts > 1 {
                return Ok(StepOutcome::LineSearchFailed);
            }
            // stale curvature: retry once along steepest descent
            self.reset();
        }
    }
}

/// Minimizes `objective` from `x0` for at most `iters` iterations, stopping
/// early once the gradient norm falls below `tol` or the line search fails.
pub fn lbfgs_minimize<F>(
    mut objective: F,
    x0: &[f64],
    iters: usize,
    memory: usize,
    tol: f64,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut opt = Lbfgs::new(LbfgsConfig {
        memory,
        ..LbfgsConfig::default()
    });
    let mut x = x0.to_vec();
    let (mut value, mut grad) = objective(&x)?;
    check_finite(value, &grad, "starting point")?;
    for it in 0..iters {
        if norm(&grad) < tol {
            return Ok(Minimum {
                x,
                value,
                iterations: it,
                stop: StopReason::GradientTolerance,
            });
        }
        match opt.step(&x, value, &grad, &mut objective)? {
            StepOutcome::Accepted {
                x: xn,
                value: fv,
                grad: gv,
                ..
            } => {
                x = xn;
                value = fv;
                grad = gv;
            }
            StepOutcome::LineSearchFailed => {
                return Ok(Minimum {
                    x,
                    value,
                    iterations: it,
                    stop: StopReason::LineSearchFailed,
                })
            }
        }
    }
    let stop = if norm(&grad) < tol {
        StopReason::GradientTolerance
    } else {
        StopReason::MaxIterations
    };
    Ok(Minimum {
        x,
        value,
        iterations: iters,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Ok((f, g))
    }

    #[test]
    fn quadratic_converges_to_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c: Vec<f64> = (0..50).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x0: Vec<f64> = (0..50).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let quad = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let g: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
            Ok((0.5 * dot(&g, &g), g))
        };
        let m = lbfgs_minimize(quad, &x0, 25, 8, 1e-9).unwrap();
        assert!(m.iterations <= 25);
        let err = m.x.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "max error {err}");
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let m = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], 200, 8, 1e-12).unwrap();
        let (f, _) = rosenbrock(&m.x).unwrap();
        assert!(f < 1e-8, "f = {f} after {} iterations ({:?})", m.iterations, m.stop);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_gradient_returns_start() {
        let flat = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((3.0, vec![0.0, 0.0])) };
        let m = lbfgs_minimize(flat, &[0.5, -2.0], 10, 4, 1e-12).unwrap();
        assert_eq!(m.x, vec![0.5, -2.0]);
        assert_eq!(m.iterations, 0);
        assert_eq!(m.stop, StopReason::GradientTolerance);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let bad = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![1.0])) };
        assert!(matches!(
            lbfgs_minimize(bad, &[0.0], 5, 4, 1e-9),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn wrong_gradient_stops_cleanly() {
        // gradient points uphill, so no step can satisfy Armijo
        let liar = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0] * x[0], vec![-2.0 * x[0] - 1.0])) };
        let m = lbfgs_minimize(liar, &[1.0], 10, 4, 1e-12).unwrap();
        assert_eq!(m.stop, StopReason::LineSearchFailed);
        assert_eq!(m.x, vec![1.0]);
    }

    #[test]
    fn accepted_steps_never_increase() {
        let mut opt = Lbfgs::new(LbfgsConfig::default());
        let mut x = vec![-1.2, 1.0];
        let (mut f, mut g) = rosenbrock(&x).unwrap();
        for _ in 0..60 {
            match opt.step(&x, f, &g, rosenbrock).unwrap() {
                StepOutcome::Accepted { x: xn, value, grad, .. } => {
                    assert!(value <= f);
                    x = xn;
                    f = value;
                    g = grad;
                }
                StepOutcome::LineSearchFailed => break,
            }
        }
    }
}
