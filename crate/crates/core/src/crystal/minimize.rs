//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Energy differences come from [`Objective::change`], which must be accurate
//! to the size of the difference itself; the sufficient-decrease test then
//! keeps working long after `f(x)` has stopped resolving the step.

use std::collections::VecDeque;

pub(crate) trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], g: &mut [f64]);
    fn change(&self, x: &[f64], step: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsSettings {
    pub gtol: f64,
    pub ftol_rel: f64,
    pub max_iterations: usize,
    pub memory: usize,
    /// Largest single-coordinate displacement per step.
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy change of every accepted step; all entries are `<= 0`.
    pub accepted_changes: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MIN_ALPHA: f64 = 1e-30;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn two_loop(g: &[f64], memory: &VecDeque<Pair>, d: &mut [f64]) {
    for (di, gi) in d.iter_mut().zip(g) {
        *di = -gi;
    }
    let mut alphas = Vec::with_capacity(memory.len());
    for p in memory.iter().rev() {
        let a = p.rho * dot(&p.s, d);
        for (di, yi) in d.iter_mut().zip(&p.y) {
            *di -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for di in d.iter_mut() {
            *di *= gamma;
        }
    }
    for (p, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, d);
        for (di, si) in d.iter_mut().zip(&p.s) {
            *di += (a - b) * si;
        }
    }
}

pub(crate) fn lbfgs<O: Objective>(obj: &O, x0: Vec<f64>, cfg: &LbfgsSettings) -> LbfgsOutcome {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    obj.gradient(&x, &mut g);
    let mut value = obj.value(&x);
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut d = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut accepted_changes = Vec::new();
    let mut last_rel_change = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if max_abs(&g) <= cfg.gtol && last_rel_change <= cfg.ftol_rel {
            converged = true;
            break;
        }
        iterations += 1;

        two_loop(&g, &memory, &mut d);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory.clear();
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
            slope = dot(&g, &d);
        }
        let dmax = max_abs(&d);
        let mut alpha = if memory.is_empty() { (cfg.max_step / dmax).min(1.0) } else { 1.0 };
        alpha = alpha.min(cfg.max_step / dmax);

        let mut accepted = None;
        while alpha >= MIN_ALPHA {
            for (si, di) in step.iter_mut().zip(&d) {
                *si = alpha * di;
            }
            let change = obj.change(&x, &step);
            if change.is_finite() && change <= ARMIJO_C1 * alpha * slope {
                accepted = Some(change);
                break;
            }
            alpha *= 0.5;
        }
        let Some(change) = accepted else {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };

        for (xi, si) in x.iter_mut().zip(&step) {
            *xi += si;
        }
        obj.gradient(&x, &mut g_new);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > 0.0 && sy.is_finite() {
            if memory.len() == cfg.memory {
                memory.pop_front();
            }
            memory.push_back(Pair { s: step.clone(), y, rho: 1.0 / sy });
        }
        std::mem::swap(&mut g, &mut g_new);
        value += change;
        accepted_changes.push(change);
        last_rel_change = change.abs() / value.abs().max(f64::MIN_POSITIVE);
    }
    if !converged && max_abs(&g) <= cfg.gtol && last_rel_change <= cfg.ftol_rel {
        converged = true;
    }

    LbfgsOutcome {
        value: obj.value(&x),
        grad_max: max_abs(&g),
        x,
        iterations,
        converged,
        accepted_changes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ill-conditioned quadratic plus a quartic term.
    struct Bowl;

    impl Objective for Bowl {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().enumerate().map(|(i, v)| 0.5 * (1.0 + i as f64 * 10.0) * v * v + 0.25 * v.powi(4)).sum()
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            for (i, (gi, v)) in g.iter_mut().zip(x).enumerate() {
                *gi = (1.0 + i as f64 * 10.0) * v + v.powi(3);
            }
        }
        fn change(&self, x: &[f64], step: &[f64]) -> f64 {
            let moved: Vec<f64> = x.iter().zip(step).map(|(a, b)| a + b).collect();
            self.value(&moved) - self.value(x)
        }
    }

    #[test]
    fn converges_on_convex_bowl() {
        let cfg = LbfgsSettings { gtol: 1e-12, ftol_rel: 1.0, max_iterations: 10_000, memory: 8, max_step: 1.0 };
        let out = lbfgs(&Bowl, vec![1.0, -2.0, 0.5, 3.0, -0.7], &cfg);
        assert!(out.converged);
        assert!(out.x.iter().all(|v| v.abs() < 1e-11));
        assert!(out.accepted_changes.iter().all(|&c| c <= 0.0));
    }
}
