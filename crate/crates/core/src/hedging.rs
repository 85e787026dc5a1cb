//! Efficient hedging with a bounded shortfall moment.
//!
//! A seller who accepts a terminal shortfall `(C - W)⁺` with `q`-th moment at
//! most `α` needs the capital
//!
//! ```text
//! sup_{Z martingale density, ‖Z‖₂ ≤ k}  E[Z C] - (qα)^{1/q} ‖Z‖_p,   1/p + 1/q = 1.
//! ```
//!
//! At `α = 0` this is the superhedging price. The two-factor model below
//! discretizes a price driven by two independent Brownian motions, of which
//! only the rotated combination `W̃₁` moves the traded asset; the filtration
//! also sees `W̃₂`, which makes the market incomplete. The untraded second
//! asset is not modeled as a process.

use rayon::prelude::*;
use serde::Serialize;

use crate::acceptability::{min_capital_dual, min_capital_primal, Market, DUALITY_TOL};
use crate::error::{Error, Result};
use crate::geometry::{dot, lp_norm_unchecked};
use crate::market::{FiniteFilteredSpace, PriceProcess, RandomVariable, TradingStrategy};
use crate::opt::concave::{maximize_concave, ConcaveOptions};
use crate::scenario::{Scenario, ScenarioSet};

/// Upper bound on enumerated martingale vertices.
pub const VERTEX_LIMIT: usize = 200_000;
const CAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoFactorModel {
    pub mu: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub steps: usize,
    pub horizon: f64,
    pub s0: f64,
}

impl TwoFactorModel {
    pub fn sigma_star(&self) -> f64 {
        self.sigma1.hypot(self.sigma2)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// The unique drift of the `W̃₁` tilt making the price a martingale.
    pub fn market_price_of_risk(&self) -> f64 {
        -self.mu / self.sigma_star()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.sigma1, self.sigma2, self.horizon, self.s0]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.sigma1 <= 0.0 || self.sigma2 <= 0.0 || self.steps == 0 {
            return Err(Error::InvalidParameter(
                "volatilities must be positive and steps at least one".into(),
            ));
        }
        if self.horizon <= 0.0 || self.s0 <= 0.0 {
            return Err(Error::InvalidParameter(
                "horizon and initial price must be positive".into(),
            ));
        }
        let root_dt = self.dt().sqrt();
        if self.market_price_of_risk().abs() * root_dt >= 1.0 {
            return Err(Error::StepPositivityViolated(format!(
                "|mu/sigma*| sqrt(dt) = {} >= 1",
                self.market_price_of_risk().abs() * root_dt
            )));
        }
        let down = 1.0 + self.mu * self.dt() - self.sigma_star() * root_dt;
        if down <= 0.0 {
            return Err(Error::StepPositivityViolated(format!(
                "down-move factor {down} is not positive"
            )));
        }
        Ok(())
    }
}

/// Branch `b ∈ 0..4` of a step: signs of `(ΔW̃₁, ΔW̃₂)`, `W̃₁` up first.
fn branch_signs(b: usize) -> (f64, f64) {
    let e1 = if b < 2 { 1.0 } else { -1.0 };
    let e2 = if b % 2 == 0 { 1.0 } else { -1.0 };
    (e1, e2)
}

/// Quadrinomial tree with `4^steps` equally likely outcomes and
/// `S_{t+1} = S_t (1 + μΔt + σ* ΔW̃₁)`, `ΔW̃ᵢ = ±√Δt`.
pub fn build_two_factor_tree(model: &TwoFactorModel) -> Result<Market> {
    model.validate()?;
    let steps = model.steps;
    if steps > 8 {
        return Err(Error::InvalidParameter("at most 8 steps are supported".into()));
    }
    let k = 4usize.pow(steps as u32);
    let probs = vec![1.0 / k as f64; k];
    let labels = (0..k)
        .map(|w| {
            (0..steps)
                .map(|t| {
                    let b = (w / 4usize.pow((steps - 1 - t) as u32)) % 4;
                    let (e1, e2) = branch_signs(b);
                    format!("{}{}", sign_char(e1), sign_char(e2))
                })
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect();
    let filtration: Vec<Vec<Vec<usize>>> = (0..=steps)
        .map(|t| {
            let width = 4usize.pow((steps - t) as u32);
            (0..k / width)
                .map(|a| (a * width..(a + 1) * width).collect())
                .collect()
        })
        .collect();
    let space = FiniteFilteredSpace::build_labeled(labels, probs, filtration)?;

    let root_dt = model.dt().sqrt();
    let mut values = vec![vec![model.s0]];
    for t in 0..steps {
        let prev = &values[t];
        let next: Vec<f64> = (0..prev.len() * 4)
            .map(|a| {
                let (e1, _) = branch_signs(a % 4);
                prev[a / 4] * (1.0 + model.mu * model.dt() + model.sigma_star() * e1 * root_dt)
            })
            .collect();
        values.push(next);
    }
    let price = PriceProcess::new(&space, values)?;
    Ok(Market::new(space, price))
}

fn sign_char(e: f64) -> char {
    if e > 0.0 {
        '+'
    } else {
        '-'
    }
}

/// `Π_t (1 + z ΔW̃₁(t) + y_t ΔW̃₂(t))` with `z = -μ/σ*`; `y_process[t][atom]`
/// is the free `W̃₂` loading at each node.
pub fn girsanov_density(
    model: &TwoFactorModel,
    market: &Market,
    y_process: &[Vec<f64>],
) -> Result<RandomVariable> {
    model.validate()?;
    let space = &market.space;
    if space.horizon() != model.steps || y_process.len() != model.steps {
        return Err(Error::SpaceMismatch);
    }
    let root_dt = model.dt().sqrt();
    let z = model.market_price_of_risk();
    for (t, ys) in y_process.iter().enumerate() {
        if ys.len() != space.atom_count(t) {
            return Err(Error::SpaceMismatch);
        }
        for (atom, y) in ys.iter().enumerate() {
            if (z.abs() + y.abs()) * root_dt > 1.0 {
                return Err(Error::NegativeDensity { t, atom });
            }
        }
    }
    let values = (0..space.num_outcomes())
        .map(|w| {
            (0..model.steps)
                .map(|t| {
                    let branch = space.atom_of(t + 1, w) % 4;
                    let (e1, e2) = branch_signs(branch);
                    let y = y_process[t][space.atom_of(t, w)];
                    1.0 + z * e1 * root_dt + y * e2 * root_dt
                })
                .product()
        })
        .collect();
    Ok(RandomVariable(values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeProblem {
    pub claim: RandomVariable,
    /// Shortfall moment order `q >= 1`.
    pub q: f64,
    /// Endurance level `α >= 0`.
    pub alpha: f64,
    /// L² cap `k` on the densities; `None` for no cap.
    pub cap: Option<f64>,
}

impl HedgeProblem {
    pub fn new(claim: RandomVariable, q: f64, alpha: f64, cap: Option<f64>) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!("shortfall order q = {q}")));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("endurance alpha = {alpha}")));
        }
        if let Some(k) = cap {
            if !(k > 0.0) {
                return Err(Error::InvalidParameter(format!("norm cap {k}")));
            }
        }
        Ok(HedgeProblem {
            claim,
            q,
            alpha,
            cap,
        })
    }

    /// Conjugate exponent `p` with `1/p + 1/q = 1`; infinite for `q = 1`.
    pub fn p(&self) -> f64 {
        if self.q == 1.0 {
            f64::INFINITY
        } else {
            self.q / (self.q - 1.0)
        }
    }

    /// `(qα)^{1/q}`.
    pub fn penalty(&self) -> f64 {
        (self.q * self.alpha).powf(1.0 / self.q)
    }

    /// `q <= 2` puts `p >= 2`, outside the range with the uniform-convexity
    /// argument behind the k → ∞ limit.
    pub fn outside_guarantee(&self) -> bool {
        self.q <= 2.0
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        HedgeProblem {
            alpha,
            ..self.clone()
        }
    }
}

fn weighted_norm(probs: &[f64], x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        lp_norm_unchecked(probs, x, p)
    }
}

/// `E[X C] - (qα)^{1/q} ‖X‖_p`.
pub fn hedging_functional(space: &FiniteFilteredSpace, x: &RandomVariable, prob: &HedgeProblem) -> f64 {
    dot(space.probs(), &x.0, &prob.claim.0) - prob.penalty() * weighted_norm(space.probs(), &x.0, prob.p())
}

/// `‖C‖_q + (qα)^{1/q}`, a Lipschitz constant of the functional in `‖·‖_p`.
pub fn lipschitz_constant(space: &FiniteFilteredSpace, prob: &HedgeProblem) -> f64 {
    weighted_norm(space.probs(), &prob.claim.0, prob.q) + prob.penalty()
}

/// Every density `1_{ω}/p_ω` as a generator, with the claim value as floor.
pub fn all_densities(space: &FiniteFilteredSpace, claim: &RandomVariable) -> Result<ScenarioSet> {
    space.check_len(claim)?;
    let k = space.num_outcomes();
    let generators = (0..k)
        .map(|w| {
            let mut d = vec![0.0; k];
            d[w] = 1.0 / space.probs()[w];
            Scenario {
                density: RandomVariable(d),
                floor: claim.0[w],
            }
        })
        .collect();
    ScenarioSet::new(space, generators, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperhedgePrice {
    pub price: f64,
    pub primal: f64,
    pub witness: TradingStrategy,
}

/// Largest martingale expectation of `C`, cross-checked against the cheapest
/// capital whose hedge covers `C` in every state.
pub fn superhedge_price(claim: &RandomVariable, market: &Market) -> Result<SuperhedgePrice> {
    let scen = all_densities(&market.space, claim)?;
    let dual = min_capital_dual(&scen, market)?.value().ok_or(Error::Infeasible)?;
    let primal = min_capital_primal(&scen, market)?;
    let (Some(p), Some(witness)) = (primal.value, primal.witness) else {
        return Err(Error::NumericalBreakdown("superhedging primal is unbounded"));
    };
    if (p - dual).abs() > DUALITY_TOL {
        return Err(Error::NumericalBreakdown("superhedging primal and dual disagree"));
    }
    Ok(SuperhedgePrice {
        price: dual,
        primal: p,
        witness,
    })
}

/// Extreme martingale densities of a tree market.
///
/// A martingale measure is a product of one-step conditional kernels, and its
/// extreme points are products of extreme kernels: a point mass on a child
/// with zero increment, or two children with increments of opposite sign.
pub fn martingale_vertices(market: &Market, limit: usize) -> Result<Vec<RandomVariable>> {
    let space = &market.space;
    // Conditional distributions over outcomes below (t, atom).
    fn below(
        market: &Market,
        t: usize,
        atom: usize,
        limit: usize,
    ) -> Result<Vec<Vec<(usize, f64)>>> {
        let space = &market.space;
        if t == space.horizon() {
            return Ok(vec![vec![(space.partition(t)[atom][0], 1.0)]]);
        }
        let here = market.price.at(t, atom);
        let children: Vec<usize> = (0..space.atom_count(t + 1))
            .filter(|&c| space.atom_of(t, space.partition(t + 1)[c][0]) == atom)
            .collect();
        let inc: Vec<f64> = children.iter().map(|&c| market.price.at(t + 1, c) - here).collect();
        let mut kernels: Vec<Vec<(usize, f64)>> = Vec::new();
        for (i, &di) in inc.iter().enumerate() {
            if di == 0.0 {
                kernels.push(vec![(i, 1.0)]);
            }
            for (j, &dj) in inc.iter().enumerate() {
                if di > 0.0 && dj < 0.0 {
                    let qi = -dj / (di - dj);
                    kernels.push(vec![(i, qi), (j, 1.0 - qi)]);
                }
            }
        }
        let mut out = Vec::new();
        for kernel in kernels {
            let mut partial: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
            for (i, q) in kernel {
                let sub = below(market, t + 1, children[i], limit)?;
                let mut next = Vec::with_capacity(partial.len() * sub.len());
                for base in &partial {
                    for s in &sub {
                        let mut v = base.clone();
                        v.extend(s.iter().map(|&(w, m)| (w, m * q)));
                        next.push(v);
                    }
                }
                if next.len() > limit {
                    return Err(Error::TooManyVertices(limit));
                }
                partial = next;
            }
            out.extend(partial);
            if out.len() > limit {
                return Err(Error::TooManyVertices(limit));
            }
        }
        Ok(out)
    }
    let measures = below(market, 0, 0, limit)?;
    Ok(measures
        .into_iter()
        .map(|m| {
            let mut z = vec![0.0; space.num_outcomes()];
            for (w, mass) in m {
                z[w] += mass / space.probs()[w];
            }
            RandomVariable(z)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficientPrice {
    pub price: f64,
    pub density: RandomVariable,
    pub density_norm2: f64,
    /// Weight of the `‖Z‖₂` penalty used to enforce the cap (0 when slack).
    pub cap_multiplier: f64,
    pub vertices: usize,
    pub iterations: usize,
    pub outside_guarantee: bool,
}

struct VertexObjective<'a> {
    probs: &'a [f64],
    vertices: &'a [RandomVariable],
    /// `E[V C]` per vertex.
    claim_values: Vec<f64>,
    penalty: f64,
    p: f64,
    norm_weight: f64,
}

impl VertexObjective<'_> {
    fn density(&self, w: &[f64]) -> RandomVariable {
        RandomVariable::combination(self.probs.len(), w.iter().copied().zip(self.vertices))
    }

    fn eval(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let z = self.density(w);
        let n = self.probs.len();
        let norm_p = weighted_norm(self.probs, &z.0, self.p);
        let norm_2 = weighted_norm(self.probs, &z.0, 2.0);
        // Gradient of the norms with respect to Z, as coefficients of V.
        let mut dz = vec![0.0; n];
        if self.penalty > 0.0 && norm_p > 0.0 {
            if self.p.is_infinite() {
                let k = (0..n)
                    .max_by(|&a, &b| z.0[a].abs().total_cmp(&z.0[b].abs()))
                    .unwrap_or(0);
                dz[k] -= self.penalty * z.0[k].signum();
            } else {
                for k in 0..n {
                    dz[k] -= self.penalty
                        * self.probs[k]
                        * z.0[k].abs().powf(self.p - 1.0)
                        * z.0[k].signum()
                        * norm_p.powf(1.0 - self.p);
                }
            }
        }
        if self.norm_weight > 0.0 && norm_2 > 0.0 {
            for k in 0..n {
                dz[k] -= self.norm_weight * self.probs[k] * z.0[k] / norm_2;
            }
        }
        let value = w.iter().zip(&self.claim_values).map(|(a, b)| a * b).sum::<f64>()
            - self.penalty * norm_p
            - self.norm_weight * norm_2;
        let grad = self
            .vertices
            .iter()
            .zip(&self.claim_values)
            .map(|(v, c)| c + v.0.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        (value, grad)
    }
}

/// Seller's price under the shortfall constraint, restricted to densities
/// with `‖Z‖₂ <= k` when a cap is given.
///
/// The objective is maximized over the simplex of weights on the extreme
/// martingale densities. If the unconstrained optimum breaks the cap, a
/// penalty `ν‖Z‖₂` is added and `ν` is bisected until the cap binds.
pub fn efficient_hedge_price(
    prob: &HedgeProblem,
    market: &Market,
    opts: &ConcaveOptions,
) -> Result<EfficientPrice> {
    let space = &market.space;
    space.check_len(&prob.claim)?;
    let vertices = martingale_vertices(market, VERTEX_LIMIT)?;
    if vertices.is_empty() {
        return Err(Error::Infeasible);
    }
    let probs = space.probs();
    let norm2 = |z: &RandomVariable| weighted_norm(probs, &z.0, 2.0);
    let mut objective = VertexObjective {
        probs,
        vertices: &vertices,
        claim_values: vertices.iter().map(|v| dot(probs, &v.0, &prob.claim.0)).collect(),
        penalty: prob.penalty(),
        p: prob.p(),
        norm_weight: 0.0,
    };
    let dim = vertices.len();
    let cap = prob.cap.unwrap_or(f64::INFINITY);
    let finish = |w: &[f64], objective: &VertexObjective<'_>, mult: f64, iterations: usize| {
        let density = objective.density(w);
        EfficientPrice {
            price: hedging_functional(space, &density, prob),
            density_norm2: norm2(&density),
            density,
            cap_multiplier: mult,
            vertices: dim,
            iterations,
            outside_guarantee: prob.outside_guarantee(),
        }
    };

    if prob.cap.is_some() {
        let norm_only = VertexObjective {
            probs,
            vertices: &vertices,
            claim_values: vec![0.0; dim],
            penalty: 0.0,
            p: 2.0,
            norm_weight: 1.0,
        };
        let smallest = maximize_concave(|w| norm_only.eval(w), dim, opts)?;
        if -smallest.value > cap * (1.0 + 1e-9) {
            return Err(Error::Infeasible);
        }
    }

    // Best single vertex: exact at α = 0, a floor for the ascent otherwise.
    let best_vertex = (0..dim)
        .filter(|&v| norm2(&vertices[v]) <= cap * (1.0 + 1e-12))
        .map(|v| {
            let mut w = vec![0.0; dim];
            w[v] = 1.0;
            let value = objective.eval(&w).0;
            (value, w)
        })
        .max_by(|a, b| a.0.total_cmp(&b.0));

    let run = |objective: &VertexObjective<'_>| maximize_concave(|w| objective.eval(w), dim, opts);
    let free = run(&objective)?;
    let free_norm = norm2(&objective.density(&free.weights));
    let mut result = if free_norm <= cap * (1.0 + 1e-9) {
        finish(&free.weights, &objective, 0.0, free.iterations)
    } else {
        // Bisect the norm multiplier until the cap binds.
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut feasible = loop {
            objective.norm_weight = hi;
            let r = run(&objective)?;
            if norm2(&objective.density(&r.weights)) <= cap * (1.0 + 1e-9) {
                break r;
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::NoConvergence);
            }
        };
        let mut mult = hi;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            objective.norm_weight = mid;
            let r = run(&objective)?;
            let n = norm2(&objective.density(&r.weights));
            if n <= cap * (1.0 + 1e-9) {
                hi = mid;
                mult = mid;
                feasible = r;
                if cap - n <= CAP_TOL {
                    break;
                }
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
        }
        objective.norm_weight = 0.0;
        finish(&feasible.weights, &objective, mult, feasible.iterations)
    };
    if let Some((_, w)) = best_vertex {
        let candidate = finish(&w, &objective, 0.0, 0);
        if candidate.price > result.price {
            result = EfficientPrice {
                cap_multiplier: result.cap_multiplier,
                iterations: result.iterations,
                ..candidate
            };
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub price: Option<f64>,
    pub status: String,
}

/// Prices for each `α` in ascending order; each row is independent.
pub fn alpha_sweep(
    prob: &HedgeProblem,
    market: &Market,
    alphas: &[f64],
    opts: &ConcaveOptions,
) -> Result<Vec<SweepRow>> {
    Ok(alpha_sweep_detailed(prob, market, alphas, opts)?
        .into_iter()
        .map(|(row, _)| row)
        .collect())
}

/// Like [`alpha_sweep`], keeping the optimizer output for each row.
pub fn alpha_sweep_detailed(
    prob: &HedgeProblem,
    market: &Market,
    alphas: &[f64],
    opts: &ConcaveOptions,
) -> Result<Vec<(SweepRow, Option<EfficientPrice>)>> {
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("alpha list must be sorted".into()));
    }
    Ok(alphas
        .par_iter()
        .map(|&alpha| {
            let failed = |e: Error| {
                let row = SweepRow {
                    alpha,
                    price: None,
                    status: e.to_string(),
                };
                (row, None)
            };
            let p = match prob.alpha_checked(alpha) {
                Ok(p) => p,
                Err(e) => return failed(e),
            };
            match efficient_hedge_price(&p, market, opts) {
                Ok(r) => {
                    let row = SweepRow {
                        alpha,
                        price: Some(r.price),
                        // With no shortfall allowed the price is the superhedging price.
                        status: if alpha == 0.0 { "superhedge" } else { "ok" }.into(),
                    };
                    (row, Some(r))
                }
                Err(e) => failed(e),
            }
        })
        .collect())
}

impl HedgeProblem {
    fn alpha_checked(&self, alpha: f64) -> Result<HedgeProblem> {
        HedgeProblem::new(self.claim.clone(), self.q, alpha, self.cap)
    }
}

/// `(S_T - strike)⁺`.
pub fn call_payoff(market: &Market, strike: f64) -> RandomVariable {
    let st = market.price.terminal(&market.space);
    RandomVariable(st.0.iter().map(|s| (s - strike).max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::is_martingale;

    fn model(mu: f64, steps: usize) -> TwoFactorModel {
        TwoFactorModel {
            mu,
            sigma1: 0.3,
            sigma2: 0.4,
            steps,
            horizon: steps as f64,
            s0: 1.0,
        }
    }

    fn b1() -> Market {
        let space = FiniteFilteredSpace::build(
            vec![0.5, 0.5],
            vec![vec![vec![0, 1]], vec![vec![0], vec![1]]],
        )
        .unwrap();
        let price = PriceProcess::normalized(&space, vec![vec![0.0], vec![1.0, -1.0]]).unwrap();
        Market::new(space, price)
    }

    #[test]
    fn tree_examples() {
        let m = build_two_factor_tree(&model(0.1, 1)).unwrap();
        assert_eq!(m.space.num_outcomes(), 4);
        let s1 = m.price.terminal(&m.space);
        assert!(s1.max_abs_diff(&RandomVariable(vec![1.6, 1.6, 0.6, 0.6])) < 1e-15);

        let m0 = build_two_factor_tree(&model(0.0, 2)).unwrap();
        assert!(is_martingale(&m0.space, &m0.price, &RandomVariable::constant(16, 1.0)).unwrap());

        let m2 = build_two_factor_tree(&model(0.1, 2)).unwrap();
        assert_eq!(m2.space.num_outcomes(), 16);
        let s2 = m2.price.terminal(&m2.space);
        // Outcomes sharing the W̃₁ path share the price.
        for w in 0..16 {
            let twin = w ^ 1 ^ 4;
            assert_eq!(s2.0[w], s2.0[twin]);
        }
    }

    #[test]
    fn tree_positivity_guard() {
        let mut bad = model(0.1, 1);
        bad.sigma1 = 3.0;
        assert!(matches!(build_two_factor_tree(&bad), Err(Error::StepPositivityViolated(_))));
        let mut drift = model(2.0, 1);
        drift.sigma2 = 0.4;
        assert!(matches!(build_two_factor_tree(&drift), Err(Error::StepPositivityViolated(_))));
    }

    #[test]
    fn girsanov_examples() {
        let md = model(0.1, 1);
        let m = build_two_factor_tree(&md).unwrap();
        assert!((md.market_price_of_risk() + 0.2).abs() < 1e-15);
        let z = girsanov_density(&md, &m, &[vec![0.0]]).unwrap();
        assert!(z.max_abs_diff(&RandomVariable(vec![0.8, 0.8, 1.2, 1.2])) < 1e-15);
        assert!(is_martingale(&m.space, &m.price, &z).unwrap());

        let flat = model(0.0, 1);
        let m0 = build_two_factor_tree(&flat).unwrap();
        let z = girsanov_density(&flat, &m0, &[vec![0.0]]).unwrap();
        assert_eq!(z.0, vec![1.0; 4]);

        assert_eq!(
            girsanov_density(&md, &m, &[vec![0.9]]).unwrap_err(),
            Error::NegativeDensity { t: 0, atom: 0 }
        );
    }

    #[test]
    fn superhedge_examples() {
        let m = build_two_factor_tree(&model(0.1, 1)).unwrap();
        let call = call_payoff(&m, 1.0);
        assert!((superhedge_price(&call, &m).unwrap().price - 0.24).abs() < 1e-12);
        let c = RandomVariable::constant(4, 0.37);
        assert!((superhedge_price(&c, &m).unwrap().price - 0.37).abs() < 1e-12);
        let fwd = m.price.terminal(&m.space).shift(-1.0);
        assert!(superhedge_price(&fwd, &m).unwrap().price.abs() < 1e-12);
    }

    #[test]
    fn tree_vertices_match_support_enumeration() {
        let m = build_two_factor_tree(&model(0.1, 1)).unwrap();
        let tree = martingale_vertices(&m, 1000).unwrap();
        assert_eq!(tree.len(), 4);
        let scen = all_densities(&m.space, &RandomVariable::zeros(4)).unwrap();
        let poly = crate::scenario::martingale_polytope(&scen, m.subspace());
        let generic = poly.vertices(1000).unwrap();
        assert_eq!(generic.len(), 4);
        for w in generic {
            let z = poly.density(&w);
            assert!(tree.iter().any(|v| v.max_abs_diff(&z) < 1e-12));
        }
        for v in &tree {
            assert!(is_martingale(&m.space, &m.price, v).unwrap());
        }
        let m2 = build_two_factor_tree(&model(0.1, 2)).unwrap();
        assert_eq!(martingale_vertices(&m2, 1000).unwrap().len(), 64);
    }

    #[test]
    fn efficient_price_binomial_closed_form() {
        let m = b1();
        let claim = RandomVariable(vec![1.0, 0.0]);
        for alpha in [0.0, 0.02, 0.08] {
            let prob = HedgeProblem::new(claim.clone(), 2.0, alpha, None).unwrap();
            let r = efficient_hedge_price(&prob, &m, &ConcaveOptions::default()).unwrap();
            assert!((r.price - (0.5 - (2.0 * alpha).sqrt())).abs() < 1e-9, "{alpha}: {}", r.price);
        }
    }

    #[test]
    fn efficient_price_two_factor() {
        let m = build_two_factor_tree(&model(0.1, 1)).unwrap();
        let call = call_payoff(&m, 1.0);
        let alpha = 0.02;
        let prob = HedgeProblem::new(call, 2.0, alpha, Some(10.0)).unwrap();
        let r = efficient_hedge_price(&prob, &m, &ConcaveOptions::default()).unwrap();
        let expected = 0.24 - (2.0 * alpha).sqrt() * 1.04f64.sqrt();
        assert!((r.price - expected).abs() < 1e-6, "{} vs {expected}", r.price);
        assert!(r.density.max_abs_diff(&RandomVariable(vec![0.8, 0.8, 1.2, 1.2])) < 1e-3);
    }

    #[test]
    fn cap_below_minimal_norm_is_infeasible() {
        let m = build_two_factor_tree(&model(0.1, 1)).unwrap();
        let prob = HedgeProblem::new(call_payoff(&m, 1.0), 2.0, 0.02, Some(1.0)).unwrap();
        assert_eq!(
            efficient_hedge_price(&prob, &m, &ConcaveOptions::default()).unwrap_err(),
            Error::Infeasible
        );
    }

    #[test]
    fn binding_cap_is_respected() {
        let m = build_two_factor_tree(&model(0.1, 1)).unwrap();
        // At α = 0 with a put-like claim the optimum sits on a vertex of norm sqrt(2.08);
        // a cap in between forces the multiplier path.
        let claim = RandomVariable(vec![1.0, 0.0, 0.0, 0.0]);
        let free = efficient_hedge_price(
            &HedgeProblem::new(claim.clone(), 2.0, 0.0, None).unwrap(),
            &m,
            &ConcaveOptions::default(),
        )
        .unwrap();
        let cap = 0.5 * (free.density_norm2 + 1.04f64.sqrt());
        let capped = efficient_hedge_price(
            &HedgeProblem::new(claim, 2.0, 0.0, Some(cap)).unwrap(),
            &m,
            &ConcaveOptions::default(),
        )
        .unwrap();
        assert!(capped.density_norm2 <= cap * (1.0 + 1e-9));
        assert!(cap - capped.density_norm2 <= 1e-5);
        assert!(capped.price <= free.price + 1e-12);
        assert!(capped.cap_multiplier > 0.0);
    }

    #[test]
    fn sweep_examples() {
        let m = b1();
        let prob = HedgeProblem::new(RandomVariable(vec![1.0, 0.0]), 2.0, 0.0, None).unwrap();
        let rows = alpha_sweep(&prob, &m, &[0.0, 0.02, 0.08], &ConcaveOptions::default()).unwrap();
        let prices: Vec<f64> = rows.iter().map(|r| r.price.unwrap()).collect();
        for (p, e) in prices.iter().zip([0.5, 0.3, 0.1]) {
            assert!((p - e).abs() < 1e-9);
        }
        assert!(alpha_sweep(&prob, &m, &[], &ConcaveOptions::default()).unwrap().is_empty());
        let dup = alpha_sweep(&prob, &m, &[0.02, 0.02], &ConcaveOptions::default()).unwrap();
        assert_eq!(dup[0].price, dup[1].price);
        assert!(alpha_sweep(&prob, &m, &[0.1, 0.0], &ConcaveOptions::default()).is_err());
    }
}
