//! Projected supergradient ascent for concave functions of simplex weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::project_simplex;

#[derive(Debug, Clone)]
pub struct ConcaveOptions {
    pub max_iter: usize,
    /// Number of starting points: the barycenter plus `restarts - 1` random ones.
    pub restarts: usize,
    pub seed: u64,
    /// Stop when the objective gains less than this...
    pub obj_tol: f64,
    /// ...and the weights move less than this.
    pub step_tol: f64,
}

impl Default for ConcaveOptions {
    fn default() -> Self {
        ConcaveOptions {
            max_iter: 10_000,
            restarts: 5,
            seed: 0x5eed,
            obj_tol: 1e-12,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConcaveMax {
    pub value: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Best-so-far objective of the winning run, one entry per iteration.
    pub trace: Vec<f64>,
}

/// Maximizes a concave `f` over the probability simplex of dimension `dim`.
///
/// `f` returns the value and a supergradient at a weight vector. Each run
/// steps along the supergradient, projected back onto the simplex, halving the
/// step while the objective would decrease. When no ascent exists (a kink) it
/// takes the scheduled step `a / (1 + k)` instead. The
/// reported value is the best seen, so it never decreases across iterations.
/// A run that exhausts its budget still contributes its best point, but at
/// least one run must meet the stopping rule.
pub fn maximize_concave<F>(f: F, dim: usize, opts: &ConcaveOptions) -> Result<ConcaveMax>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    if dim == 0 {
        return Err(Error::EmptySet);
    }
    let mut starts = vec![vec![1.0 / dim as f64; dim]];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 1..opts.restarts.max(1) {
        let draw: Vec<f64> = (0..dim).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = draw.iter().sum();
        starts.push(draw.iter().map(|v| v / total).collect());
    }

    let runs: Vec<(ConcaveMax, bool)> = starts
        .into_par_iter()
        .filter_map(|w0| ascend(&f, w0, opts))
        .collect();
    if !runs.iter().any(|(_, converged)| *converged) {
        return Err(Error::NoConvergence);
    }
    runs.into_iter()
        .map(|(run, _)| run)
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(Error::NoConvergence)
}

fn ascend<F>(f: &F, w0: Vec<f64>, opts: &ConcaveOptions) -> Option<(ConcaveMax, bool)>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (mut value, mut grad) = f(&w0);
    if !value.is_finite() {
        return None;
    }
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let base = if gnorm > 0.0 { 1.0 / gnorm } else { 1.0 };
    let mut w = w0;
    let mut accepted = base;
    let mut best = ConcaveMax {
        value,
        weights: w.clone(),
        iterations: 0,
        trace: vec![value],
    };
    for k in 0..opts.max_iter {
        best.iterations = k + 1;
        let step = base / (1.0 + k as f64);
        let trial = |t: f64| {
            project_simplex(&w.iter().zip(&grad).map(|(a, g)| a + t * g).collect::<Vec<_>>())
        };

        // Backtrack from the larger of the scheduled step and twice the last
        // accepted one, looking for an ascent.
        let mut t = step.max(2.0 * accepted);
        let mut ascent = None;
        for _ in 0..40 {
            let cand = trial(t);
            let (v, g) = f(&cand);
            if v.is_finite() && v >= value {
                accepted = t;
                ascent = Some((cand, v, g));
                break;
            }
            t *= 0.5;
        }
        let (cand, v, g) = match ascent {
            Some(found) => found,
            None => {
                // No ascent along this supergradient (a kink): take the plain
                // scheduled step and rely on the best-so-far record.
                accepted = step;
                let cand = trial(step);
                let (v, g) = f(&cand);
                if !v.is_finite() {
                    return Some((best, false));
                }
                (cand, v, g)
            }
        };
        let moved = cand
            .iter()
            .zip(&w)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let gain = v - value;
        w = cand;
        value = v;
        grad = g;
        if value > best.value {
            best.value = value;
            best.weights = w.clone();
        }
        best.trace.push(best.value);
        if gain.abs() < opts.obj_tol && moved < opts.step_tol {
            return Some((best, true));
        }
    }
    Some((best, false))
}
