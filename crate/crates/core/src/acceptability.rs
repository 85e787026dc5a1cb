//! Acceptability of initial capital, the minimal acceptable capital computed
//! by two independent LPs, and the norm certificate taken from the primal
//! witness.
//!
//! The primal LP searches over capital and strategy directly. The dual LP
//! maximizes the floors over generator weights whose density is orthogonal to
//! the attainable subspace, i.e. over martingale densities in the scenario
//! hull. The dual is never read off the primal multipliers, so comparing the
//! two values is a genuine cross-check.
//!
//! Finite-dimensional notes: the attainable subspace is closed, so weak
//! acceptability is acceptability and the minimal capital is attained by a
//! witness strategy whenever it is finite. Continuity and L^p-approach
//! conditions needed in infinite dimension hold trivially and are not modeled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm2, pairing, ProjectionOperator};
use crate::market::{
    attainable_basis, terminal_wealth, AttainableSubspace, FiniteFilteredSpace, PriceProcess,
    RandomVariable, TradingStrategy,
};
use crate::opt::lp::{solve_lp, LpBuilder, SolveStatus, VarBound};
use crate::scenario::{f_tilde, martingale_polytope, DualValue, ScenarioSet};

pub const DUALITY_TOL: f64 = 1e-8;
pub const WITNESS_TOL: f64 = 1e-9;

/// A finite market: filtered space, one traded price, and its attainable subspace.
#[derive(Debug, Clone)]
pub struct Market {
    pub space: FiniteFilteredSpace,
    pub price: PriceProcess,
    projection: ProjectionOperator,
}

impl Market {
    pub fn new(space: FiniteFilteredSpace, price: PriceProcess) -> Self {
        let subspace = attainable_basis(&space, &price);
        Market {
            space,
            price,
            projection: ProjectionOperator::new(subspace),
        }
    }

    pub fn subspace(&self) -> &AttainableSubspace {
        self.projection.subspace()
    }

    pub fn projection(&self) -> &ProjectionOperator {
        &self.projection
    }

    /// `⟨b_j, Z⟩` for every basis vector of `G`.
    fn pairings(&self, density: &RandomVariable) -> Vec<f64> {
        self.subspace()
            .basis()
            .iter()
            .map(|b| pairing(self.space.probs(), &b.0, &density.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapitalStatus {
    Finite,
    UnboundedBelow,
    ScenariosEmpty,
}

impl CapitalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CapitalStatus::Finite => "Finite",
            CapitalStatus::UnboundedBelow => "UnboundedBelow",
            CapitalStatus::ScenariosEmpty => "ScenariosEmpty",
        }
    }
}

/// Primal LP outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalCapital {
    /// `None` when every capital is acceptable.
    pub value: Option<f64>,
    pub witness: Option<TradingStrategy>,
    /// Coordinates of the witness wealth in the basis of `G`.
    pub coefficients: Option<Vec<f64>>,
    pub status: CapitalStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapitalReport {
    pub primal_value: Option<f64>,
    pub dual_value: Option<f64>,
    pub dual_weights: Option<Vec<f64>>,
    pub witness: Option<TradingStrategy>,
    pub witness_coefficients: Option<Vec<f64>>,
    pub certificate_m: Option<f64>,
    pub status: CapitalStatus,
    pub gap: Option<f64>,
    pub seed: Option<u64>,
}

impl CapitalReport {
    pub const NOTE: &'static str = "finite space: the attainable subspace is closed, so weak acceptability equals acceptability and the minimal capital is attained";
}

fn scenario_rows(scen: &ScenarioSet, market: &Market) -> Result<Vec<Vec<f64>>> {
    scen.generators()
        .iter()
        .map(|g| {
            market.space.check_len(&g.density)?;
            Ok(market.pairings(&g.density))
        })
        .collect()
}

fn check_witness(
    scen: &ScenarioSet,
    market: &Market,
    x: f64,
    strategy: &TradingStrategy,
) -> Result<f64> {
    let wealth = terminal_wealth(&market.space, x, strategy, &market.price)?;
    Ok(scen
        .generators()
        .iter()
        .map(|g| g.floor - dot(market.space.probs(), &g.density.0, &wealth.0))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Whether `x` is acceptable, with a witness strategy when it is.
pub fn is_acceptable(
    x: f64,
    scen: &ScenarioSet,
    market: &Market,
) -> Result<(bool, Option<TradingStrategy>)> {
    let rows = scenario_rows(scen, market)?;
    let dim = market.subspace().dim();
    let mut lp = LpBuilder::new();
    for _ in 0..dim {
        lp.var(0.0, VarBound::Free);
    }
    for (row, g) in rows.into_iter().zip(scen.generators()) {
        lp.ge(row, g.floor - x);
    }
    match solve_lp(&lp.build())? {
        SolveStatus::Optimal(sol) => {
            let coeffs = &sol.x[..dim];
            let strategy = market.subspace().strategy(coeffs);
            let shortfall = check_witness(scen, market, x, &strategy)?;
            if shortfall > WITNESS_TOL {
                return Err(Error::NumericalBreakdown("witness violates a scenario floor"));
            }
            Ok((true, Some(strategy)))
        }
        SolveStatus::Infeasible => Ok((false, None)),
        SolveStatus::Unbounded => Err(Error::NumericalBreakdown("feasibility LP unbounded")),
    }
}

/// `min x` over capital and strategy subject to every scenario floor.
pub fn min_capital_primal(scen: &ScenarioSet, market: &Market) -> Result<PrimalCapital> {
    if scen.is_empty() {
        return Ok(PrimalCapital {
            value: None,
            witness: None,
            coefficients: None,
            status: CapitalStatus::ScenariosEmpty,
        });
    }
    let rows = scenario_rows(scen, market)?;
    let dim = market.subspace().dim();
    let mut lp = LpBuilder::new();
    let x = lp.var(1.0, VarBound::Free);
    for _ in 0..dim {
        lp.var(0.0, VarBound::Free);
    }
    for (row, g) in rows.into_iter().zip(scen.generators()) {
        let mut coeffs = vec![0.0; dim + 1];
        coeffs[x] = 1.0;
        coeffs[1..].copy_from_slice(&row);
        lp.ge(coeffs, g.floor);
    }
    match solve_lp(&lp.build())? {
        SolveStatus::Optimal(sol) => {
            let value = sol.x[x];
            let coeffs = sol.x[1..=dim].to_vec();
            let strategy = market.subspace().strategy(&coeffs);
            let shortfall = check_witness(scen, market, value, &strategy)?;
            if shortfall > WITNESS_TOL {
                return Err(Error::NumericalBreakdown("witness violates a scenario floor"));
            }
            Ok(PrimalCapital {
                value: Some(value),
                witness: Some(strategy),
                coefficients: Some(coeffs),
                status: CapitalStatus::Finite,
            })
        }
        SolveStatus::Unbounded => Ok(PrimalCapital {
            value: None,
            witness: None,
            coefficients: None,
            status: CapitalStatus::UnboundedBelow,
        }),
        SolveStatus::Infeasible => Err(Error::NumericalBreakdown(
            "capital LP infeasible although large capital is always acceptable",
        )),
    }
}

/// Largest hull floor over martingale densities in the scenario hull.
pub fn min_capital_dual(scen: &ScenarioSet, market: &Market) -> Result<DualValue> {
    for g in scen.generators() {
        market.space.check_len(&g.density)?;
    }
    martingale_polytope(scen, market.subspace()).sup_f_tilde()
}

pub fn classify(scen: &ScenarioSet, market: &Market) -> Result<CapitalStatus> {
    if scen.is_empty() {
        return Ok(CapitalStatus::ScenariosEmpty);
    }
    if martingale_polytope(scen, market.subspace()).is_empty()? {
        Ok(CapitalStatus::UnboundedBelow)
    } else {
        Ok(CapitalStatus::Finite)
    }
}

/// Runs primal and dual, cross-checks their statuses, and attaches `M`.
pub fn capital_report(scen: &ScenarioSet, market: &Market, seed: Option<u64>) -> Result<CapitalReport> {
    let primal = min_capital_primal(scen, market)?;
    let dual = min_capital_dual(scen, market)?;
    let status = classify(scen, market)?;
    if status != primal.status {
        return Err(Error::NumericalBreakdown("primal status disagrees with classification"));
    }
    let (dual_value, dual_weights) = match dual {
        DualValue::Value { value, weights } => (Some(value), Some(weights)),
        DualValue::Empty => (None, None),
    };
    let gap = match (primal.value, dual_value) {
        (Some(p), Some(d)) => Some((p - d).abs()),
        (None, None) => None,
        _ => return Err(Error::NumericalBreakdown("primal and dual disagree on finiteness")),
    };
    if let Some(g) = gap {
        if g > DUALITY_TOL {
            log::warn!("duality gap {g:e} above tolerance");
        }
    }
    let mut report = CapitalReport {
        primal_value: primal.value,
        dual_value,
        dual_weights,
        witness: primal.witness,
        witness_coefficients: primal.coefficients,
        certificate_m: None,
        status,
        gap,
        seed,
    };
    if status == CapitalStatus::Finite {
        report.certificate_m = Some(certificate_m(&report, market)?);
    }
    Ok(report)
}

/// `M = ‖ξ‖₂` for the witness wealth `ξ ∈ G` (capital excluded).
pub fn certificate_m(report: &CapitalReport, market: &Market) -> Result<f64> {
    let coeffs = report.witness_coefficients.as_ref().ok_or(Error::NoWitness)?;
    let xi = market.subspace().element(coeffs);
    Ok(norm2(&market.space, &xi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub samples: usize,
    pub violations: usize,
    /// `min (M‖T(Y)‖ - f̃(Y) + x)` over the samples.
    pub worst_slack: f64,
}

/// Samples random hull points `Y` and checks `M‖T(Y)‖ >= f̃(Y) - x - tol`.
///
/// Sample `s` draws its weights from stream `s` of a ChaCha generator seeded
/// with `seed`, so results do not depend on thread scheduling.
pub fn check_certificate(
    scen: &ScenarioSet,
    market: &Market,
    x: f64,
    m: f64,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<CertificateCheck> {
    let n = scen.len();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let slacks: Vec<Result<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let draw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draw.iter().sum();
            let weights: Vec<f64> = draw.iter().map(|v| v / total).collect();
            let y = scen.density(&weights);
            let ty = market.projection().project(&y)?;
            let lhs = m * norm2(&market.space, &ty);
            Ok(lhs - f_tilde(&y, scen)? + x)
        })
        .collect();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for s in slacks {
        let s = s?;
        if s < -tol {
            violations += 1;
        }
        worst = worst.min(s);
    }
    Ok(CertificateCheck {
        samples,
        violations,
        worst_slack: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn b1() -> Market {
        let space = FiniteFilteredSpace::build(
            vec![0.5, 0.5],
            vec![vec![vec![0, 1]], vec![vec![0], vec![1]]],
        )
        .unwrap();
        let price = PriceProcess::normalized(&space, vec![vec![0.0], vec![1.0, -1.0]]).unwrap();
        Market::new(space, price)
    }

    fn scen(market: &Market, gens: &[([f64; 2], f64)]) -> ScenarioSet {
        ScenarioSet::new(
            &market.space,
            gens.iter()
                .map(|(d, f)| Scenario {
                    density: RandomVariable(d.to_vec()),
                    floor: *f,
                })
                .collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn acceptability_examples() {
        let m = b1();
        let s = scen(&m, &[([2.0, 0.0], 1.0), ([0.0, 2.0], 0.0)]);
        let (ok, w) = is_acceptable(0.5, &s, &m).unwrap();
        assert!(ok);
        assert!((w.unwrap().positions[0][0] - 0.5).abs() < 1e-12);
        assert!(!is_acceptable(0.4, &s, &m).unwrap().0);
        assert!(is_acceptable(10.0, &s, &m).unwrap().0);
    }

    #[test]
    fn primal_examples() {
        let m = b1();
        let s = scen(&m, &[([2.0, 0.0], 1.0), ([0.0, 2.0], 0.0)]);
        let p = min_capital_primal(&s, &m).unwrap();
        assert!((p.value.unwrap() - 0.5).abs() < 1e-12);
        assert!((p.witness.unwrap().positions[0][0] - 0.5).abs() < 1e-12);

        let lone = scen(&m, &[([2.0, 0.0], 5.0)]);
        assert_eq!(min_capital_primal(&lone, &m).unwrap().status, CapitalStatus::UnboundedBelow);

        let flat = scen(&m, &[([1.0, 1.0], 3.0)]);
        let p = min_capital_primal(&flat, &m).unwrap();
        assert!((p.value.unwrap() - 3.0).abs() < 1e-12);
        assert!(p.witness.unwrap().positions[0][0].abs() < 1e-12);
    }

    #[test]
    fn dual_examples() {
        let m = b1();
        let s = scen(&m, &[([2.0, 0.0], 1.0), ([0.0, 2.0], 0.0)]);
        assert!((min_capital_dual(&s, &m).unwrap().value().unwrap() - 0.5).abs() < 1e-12);
        let lone = scen(&m, &[([2.0, 0.0], 5.0)]);
        assert_eq!(min_capital_dual(&lone, &m).unwrap(), DualValue::Empty);
        for c in [-2.0, 0.0, 1.7] {
            let s = scen(&m, &[([2.0, 0.0], c), ([0.0, 2.0], c)]);
            assert!((min_capital_dual(&s, &m).unwrap().value().unwrap() - c).abs() < 1e-12);
        }
    }

    #[test]
    fn certificate_examples() {
        let m = b1();
        let s = scen(&m, &[([2.0, 0.0], 1.0), ([0.0, 2.0], 0.0)]);
        let r = capital_report(&s, &m, None).unwrap();
        let cert = r.certificate_m.unwrap();
        assert!((cert - 0.5).abs() < 1e-12);
        for lambda in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert!(cert * (2.0 * lambda - 1.0f64).abs() >= lambda - 0.5 - 1e-12);
        }
        let chk = check_certificate(&s, &m, 0.5, cert, 500, 9, 1e-8).unwrap();
        assert_eq!(chk.violations, 0);
        let chk = check_certificate(&s, &m, 0.8, cert, 200, 9, 1e-8).unwrap();
        assert!(chk.worst_slack >= 0.3 - 1e-12);

        let c = scen(&m, &[([2.0, 0.0], 0.7), ([0.0, 2.0], 0.7)]);
        let r = capital_report(&c, &m, None).unwrap();
        assert!(r.certificate_m.unwrap() < 1e-12);

        let empty = capital_report(&scen(&m, &[([2.0, 0.0], 1.0)]), &m, None).unwrap();
        assert_eq!(certificate_m(&empty, &m).unwrap_err(), Error::NoWitness);
    }

    #[test]
    fn classify_examples() {
        let m = b1();
        let s = scen(&m, &[([2.0, 0.0], 1.0), ([0.0, 2.0], 0.0)]);
        assert_eq!(classify(&s, &m).unwrap(), CapitalStatus::Finite);
        let lone = scen(&m, &[([2.0, 0.0], 1.0)]);
        assert_eq!(classify(&lone, &m).unwrap(), CapitalStatus::UnboundedBelow);
        let none = scen(&m, &[]);
        assert_eq!(classify(&none, &m).unwrap(), CapitalStatus::ScenariosEmpty);
        assert_eq!(capital_report(&none, &m, None).unwrap().status, CapitalStatus::ScenariosEmpty);
    }
}
