//! Convex risk measures given by finitely many penalized scenarios,
//! `ρ(X) = maxᵢ (E[Zᵢ(-X)] + hᵢ)`, and the residual risk after hedging,
//! `ρ_G(X) = inf_{H ∈ G} ρ(X - H)`.
//!
//! Positions are finite vectors, so the extension of `ρ` from bounded
//! positions to L² needs no separate treatment.

use crate::acceptability::{min_capital_primal, CapitalStatus, Market};
use crate::error::{Error, Result};
use crate::geometry::{dot, pairing};
use crate::market::{FiniteFilteredSpace, RandomVariable, TradingStrategy};
use crate::opt::lp::{solve_lp, LpBuilder, SolveStatus, VarBound};
use crate::scenario::{Scenario, ScenarioSet};

pub const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RiskSpec {
    densities: Vec<RandomVariable>,
    penalties: Vec<f64>,
    pub claim: RandomVariable,
}

impl RiskSpec {
    pub fn new(
        space: &FiniteFilteredSpace,
        densities: Vec<RandomVariable>,
        penalties: Vec<f64>,
        claim: RandomVariable,
    ) -> Result<Self> {
        if densities.len() != penalties.len() {
            return Err(Error::DimensionMismatch {
                expected: densities.len(),
                found: penalties.len(),
            });
        }
        for d in &densities {
            space.check_density(d)?;
        }
        space.check_len(&claim)?;
        Ok(RiskSpec {
            densities,
            penalties,
            claim,
        })
    }

    /// Reads scenario floors as penalties.
    pub fn from_scenarios(
        space: &FiniteFilteredSpace,
        scen: &ScenarioSet,
        claim: RandomVariable,
    ) -> Result<Self> {
        Self::new(
            space,
            scen.generators().iter().map(|g| g.density.clone()).collect(),
            scen.floors(),
            claim,
        )
    }

    pub fn densities(&self) -> &[RandomVariable] {
        &self.densities
    }

    pub fn penalties(&self) -> &[f64] {
        &self.penalties
    }

    fn expectation(&self, i: usize, x: &RandomVariable, probs: &[f64]) -> f64 {
        dot(probs, &self.densities[i].0, &x.0)
    }
}

pub fn rho(space: &FiniteFilteredSpace, x: &RandomVariable, spec: &RiskSpec) -> Result<f64> {
    if spec.densities.is_empty() {
        return Err(Error::EmptySpec);
    }
    space.check_len(x)?;
    Ok((0..spec.densities.len())
        .map(|i| -spec.expectation(i, x, space.probs()) + spec.penalties[i])
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgedRisk {
    /// `None` when hedging drives the risk to minus infinity.
    pub value: Option<f64>,
    pub hedge: Option<TradingStrategy>,
}

/// `min t` over `(t, H ∈ G)` with `t >= E[Zᵢ(H - X)] + hᵢ` for every scenario.
pub fn rho_g(x: &RandomVariable, spec: &RiskSpec, market: &Market) -> Result<HedgedRisk> {
    if spec.densities.is_empty() {
        return Err(Error::EmptySpec);
    }
    market.space.check_len(x)?;
    let probs = market.space.probs();
    let basis = market.subspace().basis();
    let dim = basis.len();
    let mut lp = LpBuilder::new();
    let t = lp.var(1.0, VarBound::Free);
    for _ in 0..dim {
        lp.var(0.0, VarBound::Free);
    }
    for i in 0..spec.densities.len() {
        let mut row = vec![0.0; dim + 1];
        row[t] = 1.0;
        for (j, b) in basis.iter().enumerate() {
            row[j + 1] = -pairing(probs, &spec.densities[i].0, &b.0);
        }
        lp.ge(row, spec.penalties[i] - spec.expectation(i, x, probs));
    }
    match solve_lp(&lp.build())? {
        SolveStatus::Optimal(sol) => Ok(HedgedRisk {
            value: Some(sol.x[t]),
            hedge: Some(market.subspace().strategy(&sol.x[1..=dim])),
        }),
        SolveStatus::Unbounded => Ok(HedgedRisk {
            value: None,
            hedge: None,
        }),
        SolveStatus::Infeasible => Err(Error::NumericalBreakdown("risk LP infeasible")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    /// Minimal capital with floors `hᵢ - E[Zᵢ χ]`; `None` when unbounded below.
    pub lhs: Option<f64>,
    /// `ρ_G(χ)`; `None` when unbounded below.
    pub rhs: Option<f64>,
    pub capital_witness: Option<TradingStrategy>,
    pub hedge_witness: Option<TradingStrategy>,
    pub pass: bool,
}

/// Compares the minimal capital for floors `hᵢ - E[Zᵢ χ]` with `ρ_G(χ)`.
pub fn capital_identity_check(spec: &RiskSpec, market: &Market) -> Result<IdentityCheck> {
    let probs = market.space.probs();
    let generators = (0..spec.densities.len())
        .map(|i| Scenario {
            density: spec.densities[i].clone(),
            floor: spec.penalties[i] - spec.expectation(i, &spec.claim, probs),
        })
        .collect();
    let scen = ScenarioSet::new(&market.space, generators, None)?;
    let capital = min_capital_primal(&scen, market)?;
    let hedged = rho_g(&spec.claim, spec, market)?;
    let pass = match (capital.value, hedged.value) {
        (Some(a), Some(b)) => (a - b).abs() <= IDENTITY_TOL,
        (None, None) => capital.status == CapitalStatus::UnboundedBelow,
        _ => false,
    };
    Ok(IdentityCheck {
        lhs: capital.value,
        rhs: hedged.value,
        capital_witness: capital.witness,
        hedge_witness: hedged.hedge,
        pass,
    })
}
