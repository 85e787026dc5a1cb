//! P-weighted inner-product geometry on a finite space: inner products,
//! L^p norms, the orthogonal projection onto the attainable subspace, and
//! nearest-point projections onto convex hulls in L^p.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::market::{AttainableSubspace, FiniteFilteredSpace, RandomVariable};

/// Relative singular-value cutoff for Gram solves.
pub const GRAM_CUTOFF: f64 = 1e-10;
pub const NEAREST_MAX_ITER: usize = 10_000;
const NEAREST_OBJ_TOL: f64 = 1e-12;
const NEAREST_STEP_TOL: f64 = 1e-10;

/// `⟨X, Y⟩ = Σ p_k X_k Y_k`.
pub fn inner(space: &FiniteFilteredSpace, x: &RandomVariable, y: &RandomVariable) -> Result<f64> {
    space.check_len(x)?;
    space.check_len(y)?;
    Ok(dot(space.probs(), &x.0, &y.0))
}

pub(crate) fn dot(probs: &[f64], a: &[f64], b: &[f64]) -> f64 {
    probs
        .iter()
        .zip(a)
        .zip(b)
        .map(|((p, x), y)| p * x * y)
        .sum()
}

/// `⟨a, b⟩`, flushed to zero when it is below rounding level of `‖a‖‖b‖`.
/// Used for constraint coefficients, where a stray 1e-17 would otherwise
/// read as an exploitable direction.
pub(crate) fn pairing(probs: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let v = dot(probs, a, b);
    let bound = (dot(probs, a, a) * dot(probs, b, b)).sqrt();
    if v.abs() <= 1e-13 * bound {
        0.0
    } else {
        v
    }
}

pub fn norm2(space: &FiniteFilteredSpace, x: &RandomVariable) -> f64 {
    dot(space.probs(), &x.0, &x.0).sqrt()
}

/// `(Σ p_k |X_k|^p)^{1/p}` for `p ∈ [1, 2]`.
pub fn lp_norm(space: &FiniteFilteredSpace, x: &RandomVariable, p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidExponent(p));
    }
    space.check_len(x)?;
    Ok(lp_norm_unchecked(space.probs(), &x.0, p))
}

/// L^p norm without the exponent range check; valid for any `p >= 1`.
pub(crate) fn lp_norm_unchecked(probs: &[f64], x: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return dot(probs, x, x).sqrt();
    }
    let s: f64 = probs.iter().zip(x).map(|(w, v)| w * v.abs().powf(p)).sum();
    s.powf(1.0 / p)
}

/// Orthogonal projection `T` onto `G`, with `I - T` onto its complement.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    subspace: AttainableSubspace,
    /// Pseudo-inverse of the basis Gram matrix.
    gram_pinv: DMatrix<f64>,
}

impl ProjectionOperator {
    pub fn new(subspace: AttainableSubspace) -> Self {
        let r = subspace.dim();
        let gram = DMatrix::from_fn(r, r, |i, j| subspace.gram()[i][j]);
        let gram_pinv = if r == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let eig = SymmetricEigen::new(gram);
            let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let inv = eig.eigenvalues.map(|v| {
                if v.abs() > GRAM_CUTOFF * top {
                    1.0 / v
                } else {
                    0.0
                }
            });
            &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
        };
        ProjectionOperator {
            subspace,
            gram_pinv,
        }
    }

    pub fn subspace(&self) -> &AttainableSubspace {
        &self.subspace
    }

    /// Basis coordinates of `T(X)`.
    pub fn coefficients(&self, x: &RandomVariable) -> Result<Vec<f64>> {
        let probs = self.subspace.probs();
        if x.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: probs.len(),
                found: x.len(),
            });
        }
        let r = self.subspace.dim();
        let rhs = DVector::from_fn(r, |j, _| dot(probs, &self.subspace.basis()[j].0, &x.0));
        Ok((&self.gram_pinv * rhs).iter().copied().collect())
    }

    pub fn project(&self, x: &RandomVariable) -> Result<RandomVariable> {
        let c = self.coefficients(x)?;
        Ok(self.subspace.element(&c))
    }

    /// `(I - T)(X)`.
    pub fn complement(&self, x: &RandomVariable) -> Result<RandomVariable> {
        Ok(x.sub(&self.project(x)?))
    }
}

/// Convex hull of finitely many random variables.
#[derive(Debug, Clone)]
pub struct ConvexPolytope {
    generators: Vec<RandomVariable>,
}

impl ConvexPolytope {
    pub fn new(generators: Vec<RandomVariable>) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::EmptySet);
        };
        let n = first.len();
        if let Some(g) = generators.iter().find(|g| g.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.len(),
            });
        }
        Ok(ConvexPolytope { generators })
    }

    pub fn generators(&self) -> &[RandomVariable] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn point(&self, weights: &[f64]) -> RandomVariable {
        RandomVariable::combination(
            self.generators[0].len(),
            weights.iter().copied().zip(&self.generators),
        )
    }
}

/// Euclidean projection onto the probability simplex (sort-based, exact).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        for x in &mut w {
            *x /= s;
        }
    }
    w
}

#[derive(Debug, Clone)]
pub struct NearestPoint {
    pub point: RandomVariable,
    pub weights: Vec<f64>,
    pub distance: f64,
    pub iterations: usize,
}

struct NearestObjective<'a> {
    probs: &'a [f64],
    target: &'a [f64],
    poly: &'a ConvexPolytope,
    p: f64,
}

impl NearestObjective<'_> {
    /// `Σ p_k |X_k - Y_k(w)|^p`.
    fn value(&self, w: &[f64]) -> f64 {
        let y = self.poly.point(w);
        self.probs
            .iter()
            .zip(self.target)
            .zip(&y.0)
            .map(|((pk, x), yk)| pk * (x - yk).abs().powf(self.p))
            .sum()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let y = self.poly.point(w);
        let dr: Vec<f64> = self
            .probs
            .iter()
            .zip(self.target)
            .zip(&y.0)
            .map(|((pk, x), yk)| {
                let r = x - yk;
                -pk * self.p * r.abs().powf(self.p - 1.0) * r.signum()
            })
            .collect();
        self.poly
            .generators()
            .iter()
            .map(|g| g.0.iter().zip(&dr).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `S_Π(X)`: the point of `Π` nearest to `X` in the L^p norm, `p ∈ (1, 2]`.
///
/// Minimizes `‖X - Σ wᵢ gᵢ‖_p^p` over the weight simplex by projected gradient
/// with backtracking. For `p = 2` the result is polished by solving the
/// equality-constrained least-squares problem on the detected support.
pub fn nearest_point(
    space: &FiniteFilteredSpace,
    x: &RandomVariable,
    poly: &ConvexPolytope,
    p: f64,
) -> Result<NearestPoint> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidExponent(p));
    }
    space.check_len(x)?;
    if poly.is_empty() {
        return Err(Error::EmptySet);
    }
    if poly.generators()[0].len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: poly.generators()[0].len(),
        });
    }
    let n = poly.len();
    let obj = NearestObjective {
        probs: space.probs(),
        target: &x.0,
        poly,
        p,
    };

    let mut w = vec![1.0 / n as f64; n];
    let mut f = obj.value(&w);
    let lipschitz_guess = poly
        .generators()
        .iter()
        .map(|g| dot(space.probs(), &g.0, &g.0))
        .sum::<f64>()
        .max(1e-12)
        * 2.0;
    let mut step = 1.0 / lipschitz_guess;
    let mut iterations = 0;
    let mut converged = n == 1;
    while !converged && iterations < NEAREST_MAX_ITER {
        iterations += 1;
        let g = obj.gradient(&w);
        let mut t = (step * 2.0).min(1e6);
        let (w_new, f_new) = loop {
            let cand: Vec<f64> =
                project_simplex(&w.iter().zip(&g).map(|(a, b)| a - t * b).collect::<Vec<_>>());
            let fc = obj.value(&cand);
            let lin: f64 = g.iter().zip(&cand).zip(&w).map(|((gi, c), wi)| gi * (c - wi)).sum();
            let quad: f64 = cand.iter().zip(&w).map(|(c, wi)| (c - wi).powi(2)).sum();
            if fc <= f + lin + quad / (2.0 * t) + 1e-15 || t < 1e-20 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        step = t;
        if f_new > f {
            // Accepted only by the rounding slack: nothing left to gain.
            converged = true;
            break;
        }
        let moved = w_new
            .iter()
            .zip(&w)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let improvement = f - f_new;
        w = w_new;
        f = f_new;
        if improvement < NEAREST_OBJ_TOL && moved < NEAREST_STEP_TOL {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence);
    }
    if p == 2.0 {
        if let Some((wp, fp)) = polish_quadratic(&obj, &w) {
            // Near the optimum the objective is flat to rounding level, so
            // compare with slack: the face solve is the more accurate point.
            if fp <= f + 1e-12 * f.max(1.0) && face_is_optimal(&obj, &wp) {
                w = wp;
                f = fp;
            }
        }
    }
    let point = poly.point(&w);
    Ok(NearestPoint {
        point,
        distance: f.max(0.0).powf(1.0 / p),
        weights: w,
        iterations,
    })
}

/// First-order optimality over the simplex: no generator outside the support
/// has a smaller partial derivative than those inside it.
fn face_is_optimal(obj: &NearestObjective<'_>, w: &[f64]) -> bool {
    let g = obj.gradient(w);
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let level = (0..w.len())
        .filter(|&i| w[i] > 0.0)
        .map(|i| g[i])
        .fold(f64::INFINITY, f64::min);
    g.iter().all(|gi| *gi >= level - 1e-9 * scale)
}

/// Exact minimizer of the quadratic objective on the face spanned by the
/// current support, if it can be written with nonnegative weights.
///
/// The nearest point of the face is unique even when its weights are not, so
/// the weights are the ones closest to `w` that reproduce that point.
fn polish_quadratic(obj: &NearestObjective<'_>, w: &[f64]) -> Option<(Vec<f64>, f64)> {
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 1e-9).collect();
    let s = support.len();
    if s == 0 {
        return None;
    }
    let gens = obj.poly.generators();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    let mut rhs = DVector::zeros(s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = dot(obj.probs, &gens[i].0, &gens[j].0);
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
        rhs[a] = dot(obj.probs, &gens[i].0, obj.target);
    }
    rhs[s] = 1.0;
    let sol = kkt.svd(true, true).solve(&rhs, 1e-13).ok()?;

    // Weighted rows so the correction is measured in the same geometry.
    let k = obj.target.len();
    let mut a_mat = DMatrix::zeros(k + 1, s);
    for (c, &i) in support.iter().enumerate() {
        for row in 0..k {
            a_mat[(row, c)] = obj.probs[row].sqrt() * gens[i].0[row];
        }
        a_mat[(k, c)] = 1.0;
    }
    let w_s = DVector::from_iterator(s, support.iter().map(|&i| w[i]));
    let target_point = &a_mat * DVector::from_iterator(s, (0..s).map(|a| sol[a]));
    let residual = target_point - &a_mat * &w_s;
    let correction = a_mat.svd(true, true).solve(&residual, 1e-13).ok()?;
    let mut out = vec![0.0; w.len()];
    for (a, &i) in support.iter().enumerate() {
        let v = w_s[a] + correction[a];
        if v < -1e-12 {
            return None;
        }
        out[i] = v.max(0.0);
    }
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return None;
    }
    for v in &mut out {
        *v /= total;
    }
    let f = obj.value(&out);
    Some((out, f))
}

/// `d_p(X, Π) = inf_{Y ∈ Π} ‖X - Y‖_p`.
pub fn dp_distance(
    space: &FiniteFilteredSpace,
    x: &RandomVariable,
    poly: &ConvexPolytope,
    p: f64,
) -> Result<f64> {
    Ok(nearest_point(space, x, poly, p)?.distance)
}
