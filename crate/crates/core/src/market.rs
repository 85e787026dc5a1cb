//! Finite filtered probability spaces, adapted prices, predictable strategies,
//! and the subspace of wealths attainable from zero capital.
//!
//! The filtration is a list of partitions of the outcome set. Partition `0`
//! is trivial, every later partition refines the previous one and the last one
//! consists of singletons, so the terminal σ-algebra is the full power set.
//! In a finite space every adapted process is square integrable and every
//! predictable strategy is admissible, so no integrability class is tracked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;
/// Tolerance of the density normalization check in [`is_martingale`].
pub const DENSITY_TOL: f64 = 1e-10;
/// Tolerance of the atom-wise martingale conditions.
pub const MARTINGALE_TOL: f64 = 1e-10;
/// Relative cutoff applied to the pivots of the Gram factorization.
pub const RANK_TOL: f64 = 1e-10;

/// An element of L²(P) on a finite space: one value per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomVariable(pub Vec<f64>);

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Self {
        RandomVariable(values)
    }

    pub fn constant(len: usize, c: f64) -> Self {
        RandomVariable(vec![c; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(len, 0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn add(&self, other: &RandomVariable) -> RandomVariable {
        RandomVariable(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &RandomVariable) -> RandomVariable {
        RandomVariable(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: f64) -> RandomVariable {
        RandomVariable(self.0.iter().map(|a| c * a).collect())
    }

    pub fn shift(&self, c: f64) -> RandomVariable {
        RandomVariable(self.0.iter().map(|a| a + c).collect())
    }

    /// `Σ wᵢ vᵢ` over equally sized random variables.
    pub fn combination<'a, I>(len: usize, terms: I) -> RandomVariable
    where
        I: IntoIterator<Item = (f64, &'a RandomVariable)>,
    {
        let mut out = vec![0.0; len];
        for (w, v) in terms {
            if w == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(&v.0) {
                *o += w * x;
            }
        }
        RandomVariable(out)
    }

    pub fn max_abs_diff(&self, other: &RandomVariable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Outcomes, reference probabilities and a refining partition sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteFilteredSpace {
    outcomes: Vec<String>,
    probs: Vec<f64>,
    partitions: Vec<Vec<Vec<usize>>>,
    /// `atom_of[t][k]`: index of the atom of partition `t` containing outcome `k`.
    atom_of: Vec<Vec<usize>>,
}

impl FiniteFilteredSpace {
    /// Validates probabilities and filtration. Outcome labels default to indices.
    pub fn build(probs: Vec<f64>, filtration: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let labels = (0..probs.len()).map(|k| k.to_string()).collect();
        Self::build_labeled(labels, probs, filtration)
    }

    pub fn build_labeled(
        outcomes: Vec<String>,
        probs: Vec<f64>,
        filtration: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let k = probs.len();
        if outcomes.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: outcomes.len(),
            });
        }
        if k == 0 {
            return Err(Error::MalformedFiltration("no outcomes".into()));
        }
        if let Some(bad) = probs.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::ZeroProbabilityOutcome(bad));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::ProbabilitiesNotNormalized(total));
        }
        if filtration.is_empty() {
            return Err(Error::MalformedFiltration("empty filtration".into()));
        }

        let mut atom_of = Vec::with_capacity(filtration.len());
        for (t, partition) in filtration.iter().enumerate() {
            let mut owner = vec![usize::MAX; k];
            for (a, atom) in partition.iter().enumerate() {
                if atom.is_empty() {
                    return Err(Error::MalformedFiltration(format!(
                        "empty atom {a} at time {t}"
                    )));
                }
                for &w in atom {
                    if w >= k {
                        return Err(Error::MalformedFiltration(format!(
                            "outcome index {w} out of range at time {t}"
                        )));
                    }
                    if owner[w] != usize::MAX {
                        return Err(Error::MalformedFiltration(format!(
                            "outcome {w} appears twice at time {t}"
                        )));
                    }
                    owner[w] = a;
                }
            }
            if owner.contains(&usize::MAX) {
                return Err(Error::MalformedFiltration(format!(
                    "partition {t} does not cover every outcome"
                )));
            }
            atom_of.push(owner);
        }
        if filtration[0].len() != 1 {
            return Err(Error::MalformedFiltration(
                "initial partition must be trivial".into(),
            ));
        }
        for t in 1..filtration.len() {
            for atom in &filtration[t] {
                let parent = atom_of[t - 1][atom[0]];
                if atom.iter().any(|&w| atom_of[t - 1][w] != parent) {
                    return Err(Error::NonRefiningFiltration(t));
                }
            }
        }
        if filtration.last().map(|p| p.len()) != Some(k) {
            return Err(Error::FinalPartitionNotSingletons);
        }

        Ok(FiniteFilteredSpace {
            outcomes,
            probs,
            partitions: filtration,
            atom_of,
        })
    }

    pub fn num_outcomes(&self) -> usize {
        self.probs.len()
    }

    /// Number of trading periods `T`; partitions are indexed `0..=T`.
    pub fn horizon(&self) -> usize {
        self.partitions.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn partition(&self, t: usize) -> &[Vec<usize>] {
        &self.partitions[t]
    }

    pub fn partitions(&self) -> &[Vec<Vec<usize>>] {
        &self.partitions
    }

    pub fn atom_count(&self, t: usize) -> usize {
        self.partitions[t].len()
    }

    pub fn atom_of(&self, t: usize, outcome: usize) -> usize {
        self.atom_of[t][outcome]
    }

    /// Atom counts per time, the shape of an adapted process.
    pub fn shape(&self) -> Vec<usize> {
        self.partitions.iter().map(|p| p.len()).collect()
    }

    pub fn check_len(&self, x: &RandomVariable) -> Result<()> {
        if x.len() != self.num_outcomes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_outcomes(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `E[X]` under the reference measure.
    pub fn expectation(&self, x: &RandomVariable) -> f64 {
        self.probs.iter().zip(&x.0).map(|(p, v)| p * v).sum()
    }

    /// Checks `Z >= 0` and `E[Z] = 1`.
    pub fn check_density(&self, z: &RandomVariable) -> Result<()> {
        self.check_len(z)?;
        if let Some(k) = z.0.iter().position(|v| !v.is_finite() || *v < -1e-12) {
            return Err(Error::NotADensity(format!(
                "value {} at outcome {k} is negative",
                z.0[k]
            )));
        }
        let mass = self.expectation(z);
        if (mass - 1.0).abs() > DENSITY_TOL {
            return Err(Error::NotADensity(format!("total mass {mass}")));
        }
        Ok(())
    }
}

/// One price per atom per time.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceProcess {
    values: Vec<Vec<f64>>,
    normalized: bool,
}

impl PriceProcess {
    pub fn new(space: &FiniteFilteredSpace, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().map(|v| v.len()).collect::<Vec<_>>() != space.shape() {
            return Err(Error::SpaceMismatch);
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite price".into()));
        }
        Ok(PriceProcess {
            values,
            normalized: false,
        })
    }

    /// Like [`PriceProcess::new`] but requires `S_0 = 0`.
    pub fn normalized(space: &FiniteFilteredSpace, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut s = Self::new(space, values)?;
        if s.values[0].iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParameter(
                "normalized price must start at zero".into(),
            ));
        }
        s.normalized = true;
        Ok(s)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn at(&self, t: usize, atom: usize) -> f64 {
        self.values[t][atom]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn check_space(&self, space: &FiniteFilteredSpace) -> Result<()> {
        if self.values.iter().map(|v| v.len()).ne(space.shape()) {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// `S_{t+1} - S_t` as a random variable.
    pub fn increment(&self, space: &FiniteFilteredSpace, t: usize) -> RandomVariable {
        RandomVariable(
            (0..space.num_outcomes())
                .map(|w| {
                    self.values[t + 1][space.atom_of(t + 1, w)] - self.values[t][space.atom_of(t, w)]
                })
                .collect(),
        )
    }

    /// Terminal price `S_T` as a random variable.
    pub fn terminal(&self, space: &FiniteFilteredSpace) -> RandomVariable {
        let t = space.horizon();
        RandomVariable(
            (0..space.num_outcomes())
                .map(|w| self.values[t][space.atom_of(t, w)])
                .collect(),
        )
    }
}

/// Predictable positions: one per atom of partitions `0..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingStrategy {
    pub positions: Vec<Vec<f64>>,
}

impl TradingStrategy {
    pub fn zero(space: &FiniteFilteredSpace) -> Self {
        TradingStrategy {
            positions: (0..space.horizon())
                .map(|t| vec![0.0; space.atom_count(t)])
                .collect(),
        }
    }

    pub fn new(space: &FiniteFilteredSpace, positions: Vec<Vec<f64>>) -> Result<Self> {
        let s = TradingStrategy { positions };
        s.check_space(space)?;
        if s.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite position".into()));
        }
        Ok(s)
    }

    fn check_space(&self, space: &FiniteFilteredSpace) -> Result<()> {
        let shape = space.shape();
        if self.positions.len() != space.horizon()
            || self
                .positions
                .iter()
                .zip(&shape)
                .any(|(p, &n)| p.len() != n)
        {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }
}

/// `x + Σ_t π_t (S_{t+1} - S_t)`, outcome by outcome.
pub fn terminal_wealth(
    space: &FiniteFilteredSpace,
    x: f64,
    strategy: &TradingStrategy,
    price: &PriceProcess,
) -> Result<RandomVariable> {
    strategy.check_space(space)?;
    price.check_space(space)?;
    let mut wealth = vec![x; space.num_outcomes()];
    for t in 0..space.horizon() {
        let inc = price.increment(space, t);
        for (w, v) in wealth.iter_mut().enumerate() {
            *v += strategy.positions[t][space.atom_of(t, w)] * inc.0[w];
        }
    }
    Ok(RandomVariable(wealth))
}

/// A basis of the attainable subspace `G`, made of a subset of the raw
/// generators `1_A (S_{t+1} - S_t)`, one per atom `A` of partition `t`.
#[derive(Debug, Clone)]
pub struct AttainableSubspace {
    basis: Vec<RandomVariable>,
    /// `(t, atom)` of the raw generator behind each basis vector.
    labels: Vec<(usize, usize)>,
    gram: Vec<Vec<f64>>,
    probs: Vec<f64>,
    shape: Vec<usize>,
}

impl AttainableSubspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[RandomVariable] {
        &self.basis
    }

    pub fn labels(&self) -> &[(usize, usize)] {
        &self.labels
    }

    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Element of `G` with the given basis coordinates.
    pub fn element(&self, coeffs: &[f64]) -> RandomVariable {
        RandomVariable::combination(self.probs.len(), coeffs.iter().copied().zip(&self.basis))
    }

    /// The strategy whose zero-capital wealth is `element(coeffs)`.
    pub fn strategy(&self, coeffs: &[f64]) -> TradingStrategy {
        let horizon = self.shape.len() - 1;
        let mut positions: Vec<Vec<f64>> =
            (0..horizon).map(|t| vec![0.0; self.shape[t]]).collect();
        for (&(t, a), c) in self.labels.iter().zip(coeffs) {
            positions[t][a] = *c;
        }
        TradingStrategy { positions }
    }
}

fn weighted_dot(probs: &[f64], a: &[f64], b: &[f64]) -> f64 {
    probs
        .iter()
        .zip(a)
        .zip(b)
        .map(|((p, x), y)| p * x * y)
        .sum()
}

/// Builds a basis of `G` by diagonally pivoted Cholesky on the Gram matrix of
/// the raw generators, stopping once the residual pivot falls below
/// `RANK_TOL` times the largest diagonal entry.
pub fn attainable_basis(space: &FiniteFilteredSpace, price: &PriceProcess) -> AttainableSubspace {
    attainable_basis_ordered(space, price, None)
}

/// Same as [`attainable_basis`], with the raw generators visited in `order`
/// (indices into the `(t, atom)` enumeration). Used to check that the span
/// does not depend on generation order.
pub fn attainable_basis_ordered(
    space: &FiniteFilteredSpace,
    price: &PriceProcess,
    order: Option<&[usize]>,
) -> AttainableSubspace {
    let probs = space.probs().to_vec();
    let mut raw = Vec::new();
    let mut raw_labels = Vec::new();
    for t in 0..space.horizon() {
        let inc = price.increment(space, t);
        for a in 0..space.atom_count(t) {
            let v: Vec<f64> = (0..space.num_outcomes())
                .map(|w| if space.atom_of(t, w) == a { inc.0[w] } else { 0.0 })
                .collect();
            raw.push(RandomVariable(v));
            raw_labels.push((t, a));
        }
    }
    if let Some(order) = order {
        raw = order.iter().map(|&i| raw[i].clone()).collect();
        raw_labels = order.iter().map(|&i| raw_labels[i]).collect();
    }

    let n = raw.len();
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| weighted_dot(&probs, &raw[i].0, &raw[j].0)).collect())
        .collect();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(g[i][i]));

    // Pivoted Cholesky: l[r] is row r of the factor, over the pivots chosen so far.
    let mut residual: Vec<f64> = (0..n).map(|i| g[i][i]).collect();
    let mut chosen: Vec<usize> = Vec::new();
    let mut l: Vec<Vec<f64>> = vec![Vec::new(); n];
    loop {
        let candidate = (0..n)
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| residual[a].total_cmp(&residual[b]));
        let Some(piv) = candidate else { break };
        if max_diag == 0.0 || residual[piv] <= RANK_TOL * max_diag {
            break;
        }
        let d = residual[piv].sqrt();
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = l[i].iter().zip(&l[piv]).map(|(a, b)| a * b).sum();
                (g[i][piv] - s) / d
            })
            .collect();
        for i in 0..n {
            l[i].push(col[i]);
            residual[i] -= col[i] * col[i];
        }
        chosen.push(piv);
    }
    chosen.sort_unstable();

    let basis: Vec<RandomVariable> = chosen.iter().map(|&i| raw[i].clone()).collect();
    let labels = chosen.iter().map(|&i| raw_labels[i]).collect();
    let gram = chosen
        .iter()
        .map(|&i| chosen.iter().map(|&j| g[i][j]).collect())
        .collect();
    AttainableSubspace {
        basis,
        labels,
        gram,
        probs,
        shape: space.shape(),
    }
}

/// Largest absolute atom-wise drift `Σ_{ω∈A} p_ω Z_ω (S_{t+1}(ω) - S_t(A))`.
pub fn martingale_violation(
    space: &FiniteFilteredSpace,
    price: &PriceProcess,
    density: &RandomVariable,
) -> Result<f64> {
    price.check_space(space)?;
    space.check_density(density)?;
    let mut worst: f64 = 0.0;
    for t in 0..space.horizon() {
        let inc = price.increment(space, t);
        for atom in space.partition(t) {
            let drift: f64 = atom
                .iter()
                .map(|&w| space.probs()[w] * density.0[w] * inc.0[w])
                .sum();
            worst = worst.max(drift.abs());
        }
    }
    Ok(worst)
}

/// Whether `S` is a martingale under `dQ = Z dP`.
pub fn is_martingale(
    space: &FiniteFilteredSpace,
    price: &PriceProcess,
    density: &RandomVariable,
) -> Result<bool> {
    Ok(martingale_violation(space, price, density)? <= MARTINGALE_TOL)
}
