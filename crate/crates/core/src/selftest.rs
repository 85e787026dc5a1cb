//! Randomized self-test: duality, emptiness classification, certificates,
//! the risk identity, projection idempotence and Girsanov densities, all on
//! seeded random instances.

use rayon::prelude::*;
use serde::Serialize;

use crate::acceptability::{capital_report, check_certificate, classify, min_capital_primal, CapitalStatus};
use crate::error::Result;
use crate::hedging::{build_two_factor_tree, girsanov_density};
use crate::market::{martingale_violation, RandomVariable};
use crate::random::{
    duality_instance, empty_instance, random_two_factor_model, random_y_process, risk_instance, rng_for,
};
use crate::risk::capital_identity_check;

#[derive(Debug, Clone)]
pub struct SelftestConfig {
    pub seed: u64,
    /// Random instances per suite.
    pub instances: usize,
    /// Hull samples per certificate instance.
    pub samples: usize,
    /// Replaces every suite tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            seed: 42,
            instances: 100,
            samples: 1000,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// Largest error seen, or `None` for pass/fail suites.
    pub worst: Option<f64>,
    pub tolerance: Option<f64>,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

fn instance_seed(seed: u64, suite: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(suite << 32)
        .wrapping_add(i as u64)
}

/// Tallies per-instance errors against a tolerance; an `Err` counts as a failure.
fn tally(name: &'static str, tol: f64, errors: Vec<Result<f64>>) -> SuiteResult {
    let mut passed = 0;
    let mut failed = 0;
    let mut worst = 0.0f64;
    for e in errors {
        match e {
            Ok(v) if v <= tol => {
                passed += 1;
                worst = worst.max(v);
            }
            Ok(v) => {
                failed += 1;
                worst = worst.max(v);
            }
            Err(err) => {
                log::warn!("{name}: {err}");
                failed += 1;
            }
        }
    }
    SuiteResult {
        name,
        passed,
        failed,
        worst: Some(worst),
        tolerance: Some(tol),
    }
}

fn duality(cfg: &SelftestConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-8);
    let errors = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let inst = duality_instance(instance_seed(cfg.seed, 1, i));
            let r = capital_report(&inst.scenarios, &inst.market, Some(inst.seed))?;
            Ok(r.gap.unwrap_or(f64::INFINITY))
        })
        .collect();
    tally("duality", tol, errors)
}

fn emptiness(cfg: &SelftestConfig) -> SuiteResult {
    let errors = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let inst = empty_instance(instance_seed(cfg.seed, 2, i));
            let primal = min_capital_primal(&inst.scenarios, &inst.market)?;
            let status = classify(&inst.scenarios, &inst.market)?;
            let agree = primal.status == CapitalStatus::UnboundedBelow && status == primal.status;
            Ok(if agree { 0.0 } else { 1.0 })
        })
        .collect();
    let mut r = tally("emptiness", 0.0, errors);
    r.worst = None;
    r.tolerance = None;
    r
}

fn certificate(cfg: &SelftestConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-8);
    let count = cfg.instances.min(20);
    let errors = (0..count)
        .map(|i| {
            let inst = duality_instance(instance_seed(cfg.seed, 3, i));
            let r = capital_report(&inst.scenarios, &inst.market, Some(inst.seed))?;
            let (x, m) = match (r.primal_value, r.certificate_m) {
                (Some(x), Some(m)) => (x, m),
                _ => return Ok(f64::INFINITY),
            };
            let chk = check_certificate(&inst.scenarios, &inst.market, x + 1e-9, m, cfg.samples, inst.seed, tol)?;
            Ok((-chk.worst_slack).max(0.0))
        })
        .collect();
    tally("certificate", tol, errors)
}

fn risk_identity(cfg: &SelftestConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-8);
    let errors = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let (market, spec) = risk_instance(instance_seed(cfg.seed, 4, i));
            let chk = capital_identity_check(&spec, &market)?;
            Ok(match (chk.lhs, chk.rhs) {
                (Some(a), Some(b)) => (a - b).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            })
        })
        .collect();
    tally("risk_identity", tol, errors)
}

fn projection(cfg: &SelftestConfig) -> SuiteResult {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let tol = cfg.tolerance.unwrap_or(1e-10);
    let errors = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let seed = instance_seed(cfg.seed, 5, i);
            let inst = duality_instance(seed);
            let mut rng = rng_for(seed);
            let n = inst.market.space.num_outcomes();
            let x = RandomVariable((0..n).map(|_| rng.sample(StandardNormal)).collect());
            let proj = inst.market.projection();
            let tx = proj.project(&x)?;
            Ok(proj.project(&tx)?.max_abs_diff(&tx))
        })
        .collect();
    tally("projection", tol, errors)
}

fn girsanov(cfg: &SelftestConfig) -> SuiteResult {
    let tol = cfg.tolerance.unwrap_or(1e-10);
    let errors = (0..cfg.instances.min(50))
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(instance_seed(cfg.seed, 6, i));
            let model = random_two_factor_model(&mut rng, 1 + i % 3);
            let market = build_two_factor_tree(&model)?;
            let y = random_y_process(&mut rng, &model);
            let z = girsanov_density(&model, &market, &y)?;
            martingale_violation(&market.space, &market.price, &z)
        })
        .collect();
    tally("girsanov", tol, errors)
}

pub fn run_selftest(cfg: &SelftestConfig) -> Vec<SuiteResult> {
    vec![
        duality(cfg),
        emptiness(cfg),
        certificate(cfg),
        risk_identity(cfg),
        projection(cfg),
        girsanov(cfg),
    ]
}
