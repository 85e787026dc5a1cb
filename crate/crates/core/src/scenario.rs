//! Scenario families (densities paired with floors), the concave hull
//! extension of the floor map, and the polytope of martingale densities in
//! the scenario hull.
//!
//! Generators need not be extreme points of their hull and may repeat; the
//! hull extension takes the supremum over every convex representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm2, pairing};
use crate::market::{AttainableSubspace, FiniteFilteredSpace, RandomVariable};
use crate::opt::lp::{solve_lp, LpBuilder, SolveStatus, VarBound};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub density: RandomVariable,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    generators: Vec<Scenario>,
    norm_cap: Option<f64>,
}

impl ScenarioSet {
    pub fn new(
        space: &FiniteFilteredSpace,
        generators: Vec<Scenario>,
        norm_cap: Option<f64>,
    ) -> Result<Self> {
        if let Some(cap) = norm_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::InvalidParameter(format!("norm cap {cap}")));
            }
        }
        for (i, g) in generators.iter().enumerate() {
            space
                .check_density(&g.density)
                .map_err(|e| match e {
                    Error::NotADensity(m) => Error::NotADensity(format!("generator {i}: {m}")),
                    other => other,
                })?;
            if !g.floor.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "generator {i} has a non-finite floor"
                )));
            }
            if let Some(cap) = norm_cap {
                let n = norm2(space, &g.density);
                if n > cap * (1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "generator {i} has norm {n} above the cap {cap}"
                    )));
                }
            }
        }
        Ok(ScenarioSet {
            generators,
            norm_cap,
        })
    }

    /// Drops generators whose L² norm exceeds `cap` and records the cap.
    pub fn truncated(space: &FiniteFilteredSpace, generators: Vec<Scenario>, cap: f64) -> Result<Self> {
        let kept = generators
            .into_iter()
            .filter(|g| norm2(space, &g.density) <= cap * (1.0 + 1e-12))
            .collect();
        Self::new(space, kept, Some(cap))
    }

    pub fn generators(&self) -> &[Scenario] {
        &self.generators
    }

    pub fn norm_cap(&self) -> Option<f64> {
        self.norm_cap
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn floors(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.floor).collect()
    }

    /// Same densities, floors replaced.
    pub fn with_floors(&self, floors: &[f64]) -> ScenarioSet {
        ScenarioSet {
            generators: self
                .generators
                .iter()
                .zip(floors)
                .map(|(g, &floor)| Scenario {
                    density: g.density.clone(),
                    floor,
                })
                .collect(),
            norm_cap: self.norm_cap,
        }
    }

    /// `Σ λᵢ Zᵢ`.
    pub fn density(&self, weights: &[f64]) -> RandomVariable {
        let len = self.generators.first().map_or(0, |g| g.density.len());
        RandomVariable::combination(len, weights.iter().copied().zip(self.generators.iter().map(|g| &g.density)))
    }
}

/// Concave hull extension of the floor map at a point `Y` of the hull:
/// `sup { Σ λᵢ φᵢ : λ ≥ 0, Σ λᵢ = 1, Σ λᵢ Zᵢ = Y }`.
pub fn f_tilde(target: &RandomVariable, scen: &ScenarioSet) -> Result<f64> {
    if scen.is_empty() {
        return Err(Error::NotInHull);
    }
    let k = scen.generators()[0].density.len();
    if target.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: target.len(),
        });
    }
    let n = scen.len();
    let mut lp = LpBuilder::new();
    for g in scen.generators() {
        lp.var(-g.floor, VarBound::NonNegative);
    }
    lp.eq(vec![1.0; n], 1.0);
    for outcome in 0..k {
        let row: Vec<f64> = scen.generators().iter().map(|g| g.density.0[outcome]).collect();
        let scale = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale == 0.0 {
            if target.0[outcome].abs() > 1e-9 {
                return Err(Error::NotInHull);
            }
            continue;
        }
        lp.eq(row.iter().map(|v| v / scale).collect(), target.0[outcome] / scale);
    }
    match solve_lp(&lp.build())? {
        SolveStatus::Optimal(sol) => Ok(-sol.value),
        SolveStatus::Infeasible => Err(Error::NotInHull),
        SolveStatus::Unbounded => Err(Error::NumericalBreakdown("bounded LP reported unbounded")),
    }
}

/// Densities of the scenario hull orthogonal to `G`, parameterized by the
/// generator weights `λ ≥ 0, Σλ = 1, Bλ = 0` with `B[j][i] = ⟨b_j, Z_i⟩`.
#[derive(Debug, Clone)]
pub struct MartingalePolytope {
    scenarios: ScenarioSet,
    /// Row-scaled constraint matrix; all-zero rows are dropped.
    constraints: Vec<Vec<f64>>,
}

/// Outcome of maximizing the floor extension over the martingale densities.
#[derive(Debug, Clone, PartialEq)]
pub enum DualValue {
    Value { value: f64, weights: Vec<f64> },
    Empty,
}

impl DualValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            DualValue::Value { value, .. } => Some(*value),
            DualValue::Empty => None,
        }
    }
}

pub fn martingale_polytope(scen: &ScenarioSet, subspace: &AttainableSubspace) -> MartingalePolytope {
    let probs = subspace.probs();
    let mut constraints = Vec::new();
    for b in subspace.basis() {
        let row: Vec<f64> = scen
            .generators()
            .iter()
            .map(|g| pairing(probs, &b.0, &g.density.0))
            .collect();
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            constraints.push(row.iter().map(|v| v / scale).collect());
        }
    }
    MartingalePolytope {
        scenarios: scen.clone(),
        constraints,
    }
}

impl MartingalePolytope {
    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    fn weight_lp(&self, objective: &[f64]) -> LpBuilder {
        let mut lp = LpBuilder::new();
        for &c in objective {
            lp.var(c, VarBound::NonNegative);
        }
        lp.eq(vec![1.0; objective.len()], 1.0);
        for row in &self.constraints {
            lp.eq(row.clone(), 0.0);
        }
        lp
    }

    pub fn is_empty(&self) -> Result<bool> {
        if self.scenarios.is_empty() {
            return Ok(true);
        }
        let lp = self.weight_lp(&vec![0.0; self.scenarios.len()]).build();
        Ok(matches!(solve_lp(&lp)?, SolveStatus::Infeasible))
    }

    /// Whether `λ` is feasible within `tol`.
    pub fn contains_weights(&self, weights: &[f64], tol: f64) -> bool {
        if weights.len() != self.scenarios.len() || weights.iter().any(|w| *w < -tol) {
            return false;
        }
        let total: f64 = weights.iter().sum();
        (total - 1.0).abs() <= tol
            && self
                .constraints
                .iter()
                .all(|row| row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>().abs() <= tol)
    }

    pub fn density(&self, weights: &[f64]) -> RandomVariable {
        self.scenarios.density(weights)
    }

    /// `max Σ λᵢ φᵢ` over the feasible weights.
    pub fn sup_f_tilde(&self) -> Result<DualValue> {
        if self.scenarios.is_empty() {
            return Ok(DualValue::Empty);
        }
        let objective: Vec<f64> = self.scenarios.floors().iter().map(|f| -f).collect();
        match solve_lp(&self.weight_lp(&objective).build())? {
            SolveStatus::Optimal(sol) => {
                let weights = sol.x[..self.scenarios.len()].to_vec();
                Ok(DualValue::Value {
                    value: -sol.value,
                    weights,
                })
            }
            SolveStatus::Infeasible => Ok(DualValue::Empty),
            SolveStatus::Unbounded => Err(Error::NumericalBreakdown("bounded LP reported unbounded")),
        }
    }

    /// Vertices of the feasible weight polytope, as weight vectors.
    ///
    /// Every vertex is a basic feasible solution, supported on at most
    /// `rank(B) + 1` generators with linearly independent columns. Supports are
    /// enumerated exhaustively, so this is meant for small instances; more than
    /// `limit` candidate supports yields [`Error::TooManyVertices`].
    pub fn vertices(&self, limit: usize) -> Result<Vec<Vec<f64>>> {
        use nalgebra::{DMatrix, DVector};

        let n = self.scenarios.len();
        let m = self.constraints.len() + 1;
        let column = |i: usize| -> Vec<f64> {
            let mut c = vec![1.0];
            c.extend(self.constraints.iter().map(|row| row[i]));
            c
        };
        let full = DMatrix::from_fn(m, n, |r, c| column(c)[r]);
        let rank = full.clone().svd(false, false).rank(1e-10);
        let max_support = (rank).min(n);

        let mut budget = 0u128;
        let mut size_count = 1u128;
        for s in 1..=max_support {
            size_count = size_count * (n - s + 1) as u128 / s as u128;
            budget = budget.saturating_add(size_count);
        }
        if budget > limit as u128 {
            return Err(Error::TooManyVertices(limit));
        }

        let mut rhs = DVector::zeros(m);
        rhs[0] = 1.0;
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut subset: Vec<usize> = Vec::new();
        fn visit(
            start: usize,
            n: usize,
            max: usize,
            subset: &mut Vec<usize>,
            f: &mut dyn FnMut(&[usize]),
        ) {
            if !subset.is_empty() {
                f(subset);
            }
            if subset.len() == max {
                return;
            }
            for i in start..n {
                subset.push(i);
                visit(i + 1, n, max, subset, f);
                subset.pop();
            }
        }
        let mut check = |support: &[usize]| {
            let sub = DMatrix::from_fn(m, support.len(), |r, c| full[(r, support[c])]);
            let svd = sub.clone().svd(true, true);
            if svd.rank(1e-10) < support.len() {
                return;
            }
            let Ok(sol) = svd.solve(&rhs, 1e-12) else { return };
            let resid = (&sub * &sol - &rhs).amax();
            if resid > 1e-10 || sol.iter().any(|v| *v <= 1e-12) {
                return;
            }
            let mut w = vec![0.0; n];
            for (c, &i) in support.iter().enumerate() {
                w[i] = sol[c];
            }
            out.push(w);
        };
        visit(0, n, max_support, &mut subset, &mut check);
        Ok(out)
    }
}
