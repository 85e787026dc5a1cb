//! Seeded random instances for property suites and the self-test.
//!
//! Probabilities are a symmetric Dirichlet(1) draw, prices start at zero and
//! move by standard normal increments, and densities are normalized
//! nonnegative draws. Every instance is a pure function of its seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::acceptability::Market;
use crate::geometry::dot;
use crate::hedging::TwoFactorModel;
use crate::market::{FiniteFilteredSpace, PriceProcess, RandomVariable};
use crate::risk::RiskSpec;
use crate::scenario::{Scenario, ScenarioSet};

pub const MAX_OUTCOMES: usize = 12;
pub const MAX_PERIODS: usize = 3;
pub const MAX_GENERATORS: usize = 8;

#[derive(Debug, Clone)]
pub struct Instance {
    pub market: Market,
    pub scenarios: ScenarioSet,
    pub seed: u64,
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draw.iter().sum();
    draw.iter().map(|v| v / total).collect()
}

/// Random refining partitions, built bottom-up by merging atoms.
fn random_filtration(rng: &mut ChaCha8Rng, k: usize, periods: usize) -> Vec<Vec<Vec<usize>>> {
    let mut levels: Vec<Vec<Vec<usize>>> = vec![(0..k).map(|w| vec![w]).collect()];
    for _ in 1..periods {
        let current = levels.last().unwrap().clone();
        let groups = rng.random_range(1..=current.len());
        let mut order: Vec<usize> = (0..current.len()).collect();
        order.shuffle(rng);
        let mut merged: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (i, &a) in order.iter().enumerate() {
            let g = if i < groups { i } else { rng.random_range(0..groups) };
            merged[g].extend(&current[a]);
        }
        for atom in &mut merged {
            atom.sort_unstable();
        }
        levels.push(merged);
    }
    levels.push(vec![(0..k).collect()]);
    levels.reverse();
    levels
}

/// Random tree market without arbitrage: each branching node has increments
/// of both signs, and non-branching nodes keep the price constant.
pub fn random_market(rng: &mut ChaCha8Rng) -> Market {
    let k = rng.random_range(2..=MAX_OUTCOMES);
    let periods = rng.random_range(1..=MAX_PERIODS);
    let filtration = random_filtration(rng, k, periods);
    let probs = dirichlet(rng, k);
    let space = FiniteFilteredSpace::build(probs, filtration).expect("generated filtration is valid");

    let mut values = vec![vec![0.0]];
    for t in 0..periods {
        let n_next = space.atom_count(t + 1);
        let mut next = vec![0.0; n_next];
        for (a, atom) in space.partition(t).iter().enumerate() {
            let children: Vec<usize> = (0..n_next)
                .filter(|&c| atom.contains(&space.partition(t + 1)[c][0]))
                .collect();
            let base = values[t][a];
            if children.len() == 1 {
                next[children[0]] = base;
                continue;
            }
            let mut inc: Vec<f64> = children.iter().map(|_| rng.sample(StandardNormal)).collect();
            if inc.iter().all(|v: &f64| *v > 0.0) || inc.iter().all(|v: &f64| *v < 0.0) {
                let i = rng.random_range(0..inc.len());
                inc[i] = -inc[i];
            }
            for (c, d) in children.iter().zip(inc) {
                next[*c] = base + d;
            }
        }
        values.push(next);
    }
    let price = PriceProcess::normalized(&space, values).expect("shape matches");
    Market::new(space, price)
}

/// A full-support martingale density built from random one-step kernels.
pub fn random_martingale_density(rng: &mut ChaCha8Rng, market: &Market) -> RandomVariable {
    let space = &market.space;
    let mut mass = vec![1.0];
    for t in 0..space.horizon() {
        let n_next = space.atom_count(t + 1);
        let mut next = vec![0.0; n_next];
        for (a, atom) in space.partition(t).iter().enumerate() {
            let children: Vec<usize> = (0..n_next)
                .filter(|&c| atom.contains(&space.partition(t + 1)[c][0]))
                .collect();
            let base = market.price.at(t, a);
            let inc: Vec<f64> = children.iter().map(|&c| market.price.at(t + 1, c) - base).collect();
            let weights: Vec<f64> = children.iter().map(|_| 0.05 + rng.random::<f64>()).collect();
            let side = |positive: bool| -> (f64, f64) {
                let (mut w, mut m) = (0.0, 0.0);
                for (wi, di) in weights.iter().zip(&inc) {
                    if (*di > 0.0) == positive && *di != 0.0 {
                        w += wi;
                        m += wi * di;
                    }
                }
                (w, m)
            };
            let (wu, mu) = side(true);
            let (wd, md) = side(false);
            // Mix the up- and down-side conditionals so the drift vanishes.
            let theta = if wu > 0.0 && wd > 0.0 {
                let (a_up, a_dn) = (mu / wu, md / wd);
                -a_dn / (a_up - a_dn)
            } else {
                0.0
            };
            let zero_w: f64 = weights.iter().zip(&inc).filter(|(_, d)| **d == 0.0).map(|(w, _)| w).sum();
            let moving = if wu > 0.0 && wd > 0.0 { 1.0 } else { 0.0 };
            let total = moving + zero_w;
            for ((c, wi), di) in children.iter().zip(&weights).zip(&inc) {
                let q = if *di > 0.0 {
                    moving * theta * wi / wu
                } else if *di < 0.0 {
                    moving * (1.0 - theta) * wi / wd
                } else {
                    *wi
                };
                next[*c] = mass[a] * q / total;
            }
        }
        mass = next;
    }
    let t = space.horizon();
    RandomVariable(
        (0..space.num_outcomes())
            .map(|w| mass[space.atom_of(t, w)] / space.probs()[w])
            .collect(),
    )
}

/// A normalized nonnegative draw, occasionally with zeros.
pub fn random_density(rng: &mut ChaCha8Rng, space: &FiniteFilteredSpace) -> RandomVariable {
    let sparse = rng.random_bool(0.3);
    let mut u: Vec<f64> = (0..space.num_outcomes())
        .map(|_| {
            if sparse && rng.random_bool(0.4) {
                0.0
            } else {
                Exp1.sample(rng)
            }
        })
        .collect();
    if u.iter().all(|v| *v == 0.0) {
        u[0] = 1.0;
    }
    let mean = dot(space.probs(), &u, &vec![1.0; u.len()]);
    RandomVariable(u.iter().map(|v| v / mean).collect())
}

/// Instance whose martingale polytope is non-empty.
pub fn duality_instance(seed: u64) -> Instance {
    let mut rng = rng_for(seed);
    let market = random_market(&mut rng);
    let space = &market.space;
    let anchor = random_martingale_density(&mut rng, &market);
    let extra = rng.random_range(0..=MAX_GENERATORS - 2);
    let mut densities: Vec<RandomVariable> = (0..extra).map(|_| random_density(&mut rng, space)).collect();
    if rng.random_bool(0.5) {
        densities.push(anchor);
    } else {
        // Hide the martingale density inside a segment between two generators.
        let d = random_density(&mut rng, space);
        let dir = d.sub(&anchor);
        let limit = anchor
            .0
            .iter()
            .zip(&dir.0)
            .filter(|(_, v)| **v > 0.0)
            .map(|(a, v)| a / v)
            .fold(1.0f64, f64::min);
        let eps = 0.5 * limit;
        densities.push(anchor.add(&dir.scale(eps)));
        densities.push(anchor.sub(&dir.scale(eps)).0.iter().map(|v| v.max(0.0)).collect::<Vec<_>>().into());
    }
    densities.shuffle(&mut rng);
    let generators = densities
        .into_iter()
        .map(|density| Scenario {
            density: renormalize(space, density),
            floor: rng.sample(StandardNormal),
        })
        .collect();
    let scenarios = ScenarioSet::new(space, generators, None).expect("generated densities are valid");
    Instance {
        market,
        scenarios,
        seed,
    }
}

impl From<Vec<f64>> for RandomVariable {
    fn from(v: Vec<f64>) -> Self {
        RandomVariable(v)
    }
}

fn renormalize(space: &FiniteFilteredSpace, d: RandomVariable) -> RandomVariable {
    let mass = space.expectation(&d);
    d.scale(1.0 / mass)
}

/// Instance whose generators all pair strictly positively with one element
/// of `G`, so the martingale polytope is empty.
pub fn empty_instance(seed: u64) -> Instance {
    let mut rng = rng_for(seed);
    let market = random_market(&mut rng);
    let space = &market.space;
    let g = market.subspace().basis()[0].clone();
    let pos: Vec<f64> = g.0.iter().map(|v| v.max(0.0)).collect();
    let tilt = renormalize(space, RandomVariable(pos));
    let tilt_pair = dot(space.probs(), &tilt.0, &g.0);
    let n = rng.random_range(1..=MAX_GENERATORS);
    let generators = (0..n)
        .map(|_| {
            let d = random_density(&mut rng, space);
            let pair = dot(space.probs(), &d.0, &g.0);
            let target = tilt_pair * rng.random_range(0.05..0.95);
            let density = if pair >= target {
                d
            } else {
                // Move toward the tilted density until the pairing reaches the target.
                let theta = (target - pair) / (tilt_pair - pair);
                d.scale(1.0 - theta).add(&tilt.scale(theta))
            };
            Scenario {
                density: renormalize(space, density),
                floor: rng.sample(StandardNormal),
            }
        })
        .collect();
    let scenarios = ScenarioSet::new(space, generators, None).expect("generated densities are valid");
    Instance {
        market,
        scenarios,
        seed,
    }
}

/// Risk specification on a duality instance: random penalties and claim.
pub fn risk_instance(seed: u64) -> (Market, RiskSpec) {
    let inst = duality_instance(seed);
    let mut rng = rng_for(seed ^ 0x9e37_79b9_7f4a_7c15);
    let space = &inst.market.space;
    let densities: Vec<RandomVariable> =
        inst.scenarios.generators().iter().map(|g| g.density.clone()).collect();
    let penalties = densities.iter().map(|_| rng.sample(StandardNormal)).collect();
    let claim = RandomVariable((0..space.num_outcomes()).map(|_| rng.sample(StandardNormal)).collect());
    let spec = RiskSpec::new(space, densities, penalties, claim).expect("valid risk spec");
    (inst.market, spec)
}

/// Two-factor model parameters for which the tree is well defined.
pub fn random_two_factor_model(rng: &mut ChaCha8Rng, steps: usize) -> TwoFactorModel {
    loop {
        let model = TwoFactorModel {
            mu: rng.random_range(-0.2..0.2),
            sigma1: rng.random_range(0.1..0.5),
            sigma2: rng.random_range(0.1..0.5),
            steps,
            horizon: steps as f64 * rng.random_range(0.25..1.0),
            s0: rng.random_range(0.5..2.0),
        };
        if model.validate().is_ok() {
            return model;
        }
    }
}

/// Node-wise `W̃₂` loadings `y[t][atom]` keeping every one-step factor
/// nonnegative; roughly one node in ten sits on the boundary.
pub fn random_y_process(rng: &mut ChaCha8Rng, model: &TwoFactorModel) -> Vec<Vec<f64>> {
    let bound = 1.0 / model.dt().sqrt() - model.market_price_of_risk().abs();
    (0..model.steps)
        .map(|t| {
            (0..4usize.pow(t as u32))
                .map(|_| {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    if rng.random_bool(0.1) {
                        sign * bound * (1.0 - 1e-12)
                    } else {
                        sign * bound * rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}
