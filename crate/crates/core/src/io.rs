//! File formats: market, scenario and claim inputs; capital reports and
//! sweep tables as outputs.
//!
//! Market files name outcomes by label. The outcome order is the label order
//! of the initial (trivial) partition, and atoms at each time follow file
//! order. Report numbers are plain JSON numbers (shortest round-trip form);
//! values that do not exist are the strings `"unbounded"` or `"empty"`, and a
//! sweep row without a price says `empty` with the reason in its status.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::acceptability::{CapitalReport, CapitalStatus, Market};
use crate::error::{Error, Result};
use crate::hedging::SweepRow;
use crate::market::{FiniteFilteredSpace, PriceProcess, RandomVariable, TradingStrategy};
use crate::scenario::{Scenario, ScenarioSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub probs: Vec<f64>,
    pub filtration: Vec<Vec<Vec<String>>>,
    /// Keys `t0`, `t1`, ...; one price per atom.
    pub price: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub normalized: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub generators: Vec<Scenario>,
    #[serde(default)]
    pub norm_cap: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ClaimFile {
    Bare(Vec<f64>),
    Wrapped { claim: Vec<f64> },
}

fn parse_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("{what}: {e}"))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| parse_err(&path.display().to_string(), e))
}

impl MarketFile {
    pub fn into_market(self) -> Result<Market> {
        let root = self
            .filtration
            .first()
            .ok_or_else(|| Error::MalformedFiltration("empty filtration".into()))?;
        if root.len() != 1 {
            return Err(Error::MalformedFiltration("initial partition must be trivial".into()));
        }
        let labels = root[0].clone();
        let mut index = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.as_str(), i).is_some() {
                return Err(Error::MalformedFiltration(format!("duplicate outcome label {l}")));
            }
        }
        let filtration = self
            .filtration
            .iter()
            .enumerate()
            .map(|(t, partition)| {
                partition
                    .iter()
                    .map(|atom| {
                        atom.iter()
                            .map(|l| {
                                index.get(l.as_str()).copied().ok_or_else(|| {
                                    Error::MalformedFiltration(format!("unknown outcome {l} at time {t}"))
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let space = FiniteFilteredSpace::build_labeled(labels, self.probs, filtration)?;
        let mut values = Vec::with_capacity(space.horizon() + 1);
        for t in 0..=space.horizon() {
            let key = format!("t{t}");
            values.push(
                self.price
                    .get(&key)
                    .cloned()
                    .ok_or_else(|| Error::InvalidParameter(format!("missing price {key}")))?,
            );
        }
        if self.price.len() != values.len() {
            return Err(Error::InvalidParameter("price has times beyond the filtration".into()));
        }
        let price = if self.normalized {
            PriceProcess::normalized(&space, values)?
        } else {
            PriceProcess::new(&space, values)?
        };
        Ok(Market::new(space, price))
    }
}

pub fn parse_market(text: &str) -> Result<Market> {
    let file: MarketFile = serde_json::from_str(text).map_err(|e| parse_err("market", e))?;
    file.into_market()
}

pub fn parse_scenarios(text: &str, space: &FiniteFilteredSpace) -> Result<ScenarioSet> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| parse_err("scenarios", e))?;
    for g in &file.generators {
        space.check_len(&g.density)?;
    }
    ScenarioSet::new(space, file.generators, file.norm_cap)
}

pub fn parse_claim(text: &str, space: &FiniteFilteredSpace) -> Result<RandomVariable> {
    let file: ClaimFile = serde_json::from_str(text).map_err(|e| parse_err("claim", e))?;
    let values = match file {
        ClaimFile::Bare(v) | ClaimFile::Wrapped { claim: v } => v,
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("claim has non-finite values".into()));
    }
    let claim = RandomVariable(values);
    space.check_len(&claim)?;
    Ok(claim)
}

pub fn load_market(path: &Path) -> Result<Market> {
    parse_market(&read(path)?)
}

pub fn load_scenarios(path: &Path, space: &FiniteFilteredSpace) -> Result<ScenarioSet> {
    parse_scenarios(&read(path)?, space)
}

pub fn load_claim(path: &Path, space: &FiniteFilteredSpace) -> Result<RandomVariable> {
    parse_claim(&read(path)?, space)
}

/// A finite number, or `flag` when absent or not finite.
pub fn number_or(value: Option<f64>, flag: &str) -> Value {
    match value {
        Some(v) if v.is_finite() => json!(v),
        _ => json!(flag),
    }
}

pub fn strategy_json(strategy: &TradingStrategy) -> Value {
    json!({ "positions": strategy.positions })
}

pub fn report_json(report: &CapitalReport) -> Value {
    let flag = match report.status {
        CapitalStatus::ScenariosEmpty => "empty",
        _ => "unbounded",
    };
    // The dual is -inf exactly when the martingale polytope is empty.
    let dual_flag = if report.status == CapitalStatus::Finite { "unbounded" } else { "empty" };
    json!({
        "primal": number_or(report.primal_value, flag),
        "dual": number_or(report.dual_value, dual_flag),
        "status": report.status.as_str(),
        "certificate_M": number_or(report.certificate_m, flag),
        "witness": match (&report.witness, &report.witness_coefficients) {
            (Some(s), Some(c)) => json!({ "positions": s.positions, "coefficients": c }),
            _ => json!(flag),
        },
        "dual_weights": match &report.dual_weights {
            Some(w) => json!(w),
            None => json!(dual_flag),
        },
        "gap": number_or(report.gap, flag),
        "seed": report.seed,
        "note": CapitalReport::NOTE,
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,price,status\n");
    for r in rows {
        let price = match r.price {
            Some(p) if p.is_finite() => format!("{p}"),
            _ => "empty".into(),
        };
        let status = r.status.replace([',', '\n'], ";");
        out.push_str(&format!("{},{},{}\n", r.alpha, price, status));
    }
    out
}

/// Writes through a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io_err = |e: std::io::Error| parse_err(&path.display().to_string(), e);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err("json", e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
