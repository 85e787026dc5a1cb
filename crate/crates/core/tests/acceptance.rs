//! End-to-end acceptance battery. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use acceptcap::acceptability::{
    capital_report, check_certificate, classify, min_capital_primal, CapitalReport, CapitalStatus, Market,
};
use acceptcap::geometry::{inner, nearest_point, norm2, ConvexPolytope};
use acceptcap::hedging::{
    build_two_factor_tree, call_payoff, efficient_hedge_price, girsanov_density, superhedge_price,
    HedgeProblem, TwoFactorModel,
};
use acceptcap::market::{FiniteFilteredSpace, PriceProcess, RandomVariable};
use acceptcap::opt::ConcaveOptions;
use acceptcap::random::{
    duality_instance, empty_instance, random_market, random_two_factor_model, random_y_process, risk_instance,
    rng_for, Instance,
};
use acceptcap::risk::capital_identity_check;
use acceptcap::scenario::{f_tilde, Scenario, ScenarioSet};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------- independent oracles ----------

/// Weighted inner product written out directly.
fn e(probs: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (0..probs.len()).map(|k| probs[k] * a[k] * b[k]).sum()
}

/// Largest conditional drift of `S` under `Z dP`, one atom at a time.
fn drift_oracle(space: &FiniteFilteredSpace, price: &PriceProcess, z: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..space.horizon() {
        for (a, atom) in space.partition(t).iter().enumerate() {
            let s_now = price.at(t, a);
            let mut drift = 0.0;
            for &w in atom {
                let s_next = price.at(t + 1, space.atom_of(t + 1, w));
                drift += space.probs()[w] * z[w] * (s_next - s_now);
            }
            worst = worst.max(drift.abs());
        }
    }
    worst
}

/// Worst scenario shortfall of terminal wealth `x + Σ_t H_t ΔS_t`.
fn floor_shortfall(space: &FiniteFilteredSpace, price: &PriceProcess, scen: &ScenarioSet, x: f64, report: &CapitalReport) -> f64 {
    let h = &report.witness.as_ref().unwrap().positions;
    let wealth: Vec<f64> = (0..space.num_outcomes())
        .map(|w| {
            x + (0..space.horizon())
                .map(|t| {
                    let a = space.atom_of(t, w);
                    h[t][a] * (price.at(t + 1, space.atom_of(t + 1, w)) - price.at(t, a))
                })
                .sum::<f64>()
        })
        .collect();
    scen.generators()
        .iter()
        .map(|g| g.floor - e(space.probs(), &g.density.0, &wealth))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Nearest point of `conv(gens)` to `x` in weighted L², by solving the
/// equality-constrained KKT system on every support and keeping the best
/// feasible solution.
fn quadratic_oracle(probs: &[f64], x: &[f64], gens: &[Vec<f64>]) -> Vec<f64> {
    let n = gens.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = support.len();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        let mut b = DVector::zeros(m + 1);
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[(r, c)] = e(probs, &gens[i], &gens[j]);
            }
            a[(r, m)] = 1.0;
            a[(m, r)] = 1.0;
            b[r] = e(probs, &gens[i], x);
        }
        b[m] = 1.0;
        let Some(sol) = a.lu().solve(&b) else { continue };
        if (0..m).any(|r| !(sol[r] >= -1e-13)) {
            continue;
        }
        let point: Vec<f64> = (0..x.len())
            .map(|k| support.iter().enumerate().map(|(r, &i)| sol[r] * gens[i][k]).sum())
            .collect();
        let diff: Vec<f64> = x.iter().zip(&point).map(|(a, b)| a - b).collect();
        let d = e(probs, &diff, &diff);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, point));
        }
    }
    best.unwrap().1
}

/// Efficient price on the one-step two-factor tree by grid search over the
/// martingale measures `q = (0.4a, 0.4(1-a), 0.6b, 0.6(1-b))`, refined
/// around the best cell.
fn grid_oracle(claim: &[f64], alpha: f64) -> f64 {
    let f = |a: f64, b: f64| {
        let z = [1.6 * a, 1.6 * (1.0 - a), 2.4 * b, 2.4 * (1.0 - b)];
        let ez: f64 = (0..4).map(|k| 0.25 * z[k] * claim[k]).sum();
        let n2: f64 = (0..4).map(|k| 0.25 * z[k] * z[k]).sum::<f64>().sqrt();
        ez - (2.0 * alpha).sqrt() * n2
    };
    let (mut lo_a, mut hi_a, mut lo_b, mut hi_b) = (0.0, 1.0, 0.0, 1.0);
    let mut best = (f64::NEG_INFINITY, 0.5, 0.5);
    for _ in 0..8 {
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let a = lo_a + (hi_a - lo_a) * i as f64 / n as f64;
                let b = lo_b + (hi_b - lo_b) * j as f64 / n as f64;
                let v = f(a, b);
                if v > best.0 {
                    best = (v, a, b);
                }
            }
        }
        let wa = (hi_a - lo_a) / 20.0;
        let wb = (hi_b - lo_b) / 20.0;
        lo_a = (best.1 - wa).max(0.0);
        hi_a = (best.1 + wa).min(1.0);
        lo_b = (best.2 - wb).max(0.0);
        hi_b = (best.2 + wb).min(1.0);
    }
    best.0
}

fn b1() -> Market {
    let space = FiniteFilteredSpace::build(vec![0.5, 0.5], vec![vec![vec![0, 1]], vec![vec![0], vec![1]]]).unwrap();
    let price = PriceProcess::normalized(&space, vec![vec![0.0], vec![1.0, -1.0]]).unwrap();
    Market::new(space, price)
}

fn b1_scenarios(m: &Market) -> ScenarioSet {
    ScenarioSet::new(
        &m.space,
        vec![
            Scenario { density: RandomVariable(vec![2.0, 0.0]), floor: 1.0 },
            Scenario { density: RandomVariable(vec![0.0, 2.0]), floor: 0.0 },
        ],
        None,
    )
    .unwrap()
}

fn two_factor(steps: usize) -> TwoFactorModel {
    TwoFactorModel { mu: 0.1, sigma1: 0.3, sigma2: 0.4, steps, horizon: steps as f64, s0: 1.0 }
}

const DUALITY_SEED: u64 = 0x00d0_a117;

// ---------- criteria ----------

fn criterion_1(instances: &[(Instance, CapitalReport)], errors: usize, elapsed: f64) -> Outcome {
    let mut worst_gap = 0.0f64;
    let mut worst_dual_drift = 0.0f64;
    let mut worst_witness = f64::NEG_INFINITY;
    let mut bad = errors;
    for (inst, r) in instances {
        let (Some(p), Some(d)) = (r.primal_value, r.dual_value) else {
            bad += 1;
            continue;
        };
        worst_gap = worst_gap.max((p - d).abs());
        let space = &inst.market.space;
        let z = inst.scenarios.density(r.dual_weights.as_ref().unwrap());
        worst_dual_drift = worst_dual_drift.max(drift_oracle(space, &inst.market.price, &z.0));
        worst_witness = worst_witness.max(floor_shortfall(space, &inst.market.price, &inst.scenarios, p, r));
    }
    let pass = bad == 0 && worst_gap <= 1e-8 && elapsed <= 60.0 && worst_dual_drift <= 1e-8 && worst_witness <= 1e-8;
    outcome(
        pass,
        format!(
            "{} instances, max gap {worst_gap:.2e}, dual drift {worst_dual_drift:.2e}, witness shortfall {worst_witness:.2e}, failed {bad}, {elapsed:.3} s",
            instances.len() + errors
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut agree = 0;
    for i in 0..100 {
        let inst = empty_instance(0xe0e0 + i);
        let primal = min_capital_primal(&inst.scenarios, &inst.market).unwrap();
        let status = classify(&inst.scenarios, &inst.market).unwrap();
        if primal.status == CapitalStatus::UnboundedBelow && status == CapitalStatus::UnboundedBelow {
            agree += 1;
        }
    }
    outcome(agree == 100, format!("{agree}/100 unbounded below with agreeing classification"))
}

fn criterion_3(instances: &[(Instance, CapitalReport)]) -> Outcome {
    let start = Instant::now();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for (inst, r) in instances {
        let (Some(x), Some(m)) = (r.primal_value, r.certificate_m) else { continue };
        let chk = check_certificate(&inst.scenarios, &inst.market, x + 1e-9, m, 10_000, inst.seed, 1e-8).unwrap();
        violations += chk.violations;
        worst = worst.min(chk.worst_slack);
        checked += 1;
    }
    outcome(
        violations == 0,
        format!(
            "{checked} instances x 10000 hull points, {violations} violations, min slack {worst:.2e}, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    for i in 0..200 {
        let (market, spec) = risk_instance(0x4150 + i);
        let chk = capital_identity_check(&spec, &market).unwrap();
        match (chk.lhs, chk.rhs) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => mismatched += 1,
        }
    }
    outcome(
        worst <= 1e-8 && mismatched == 0,
        format!("200 instances, max |capital - rho_G| {worst:.2e}, finiteness mismatches {mismatched}"),
    )
}

fn criterion_5() -> Outcome {
    let m = b1();
    let r = capital_report(&b1_scenarios(&m), &m, Some(0)).unwrap();
    let capital = r.primal_value.unwrap();
    let pi = r.witness.as_ref().unwrap().positions[0][0];
    let mm = r.certificate_m.unwrap();
    let dual = r.dual_value.unwrap();
    let pass = [capital, pi, mm, dual].iter().all(|v| (v - 0.5).abs() <= 1e-10);
    outcome(pass, format!("capital {capital}, dual {dual}, witness {pi}, M {mm}"))
}

fn criterion_6() -> Outcome {
    let opts = ConcaveOptions::default();
    let mut notes = Vec::new();
    let mut pass = true;

    let m = b1();
    let call = call_payoff(&m, 0.0);
    let mut worst_b1 = 0.0f64;
    for alpha in [0.0, 0.02, 0.08] {
        let prob = HedgeProblem::new(call.clone(), 2.0, alpha, None).unwrap();
        let price = efficient_hedge_price(&prob, &m, &opts).unwrap().price;
        worst_b1 = worst_b1.max((price - (0.5 - (2.0 * alpha).sqrt())).abs());
    }
    pass &= worst_b1 <= 1e-6;
    notes.push(format!("B1 max err {worst_b1:.2e}"));

    let tf = build_two_factor_tree(&two_factor(1)).unwrap();
    let call = call_payoff(&tf, 1.0);
    let sh = superhedge_price(&call, &tf).unwrap().price;
    pass &= (sh - 0.24).abs() <= 1e-9;
    notes.push(format!("superhedge {sh}"));

    let (mut worst_closed, mut worst_grid) = (0.0f64, 0.0f64);
    for alpha in [0.0, 0.02, 0.08] {
        let prob = HedgeProblem::new(call.clone(), 2.0, alpha, Some(10.0)).unwrap();
        let price = efficient_hedge_price(&prob, &tf, &opts).unwrap().price;
        let closed = 0.24 - (2.0 * alpha).sqrt() * 1.04f64.sqrt();
        worst_closed = worst_closed.max((price - closed).abs());
        worst_grid = worst_grid.max((price - grid_oracle(&call.0, alpha)).abs());
    }
    pass &= worst_closed <= 1e-4 && worst_grid <= 1e-4;
    notes.push(format!("two-factor err vs closed form {worst_closed:.2e}, vs grid {worst_grid:.2e}"));
    outcome(pass, notes.join(", "))
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    let mut min_density = f64::INFINITY;
    for i in 0..50u64 {
        let mut rng = rng_for(0x6175 + i);
        let steps = 1 + (i as usize) % 3;
        let model = random_two_factor_model(&mut rng, steps);
        let market = build_two_factor_tree(&model).unwrap();
        let y = random_y_process(&mut rng, &model);
        let z = girsanov_density(&model, &market, &y).unwrap();
        worst = worst.max(drift_oracle(&market.space, &market.price, &z.0));
        min_density = min_density.min(z.0.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    outcome(
        worst <= 1e-10 && min_density >= 0.0,
        format!("50 y-processes on 1 to 3 steps, max drift {worst:.2e}, min density {min_density:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // Projection identities on 1000 vectors over 100 markets.
    let (mut idem, mut pyth, mut adj) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100u64 {
        let mut rng = rng_for(0x8000 + i);
        let market = random_market(&mut rng);
        let space = &market.space;
        let t = market.projection();
        let n = space.num_outcomes();
        for _ in 0..10 {
            let x = RandomVariable((0..n).map(|_| rng.sample(StandardNormal)).collect());
            let y = RandomVariable((0..n).map(|_| rng.sample(StandardNormal)).collect());
            let tx = t.project(&x).unwrap();
            let ty = t.project(&y).unwrap();
            idem = idem.max(t.project(&tx).unwrap().max_abs_diff(&tx));
            let r = x.sub(&tx);
            pyth = pyth.max((norm2(space, &x).powi(2) - norm2(space, &tx).powi(2) - norm2(space, &r).powi(2)).abs());
            adj = adj.max((inner(space, &tx, &y).unwrap() - inner(space, &x, &ty).unwrap()).abs());
        }
    }
    pass &= idem <= 1e-10 && pyth <= 1e-10 && adj <= 1e-10;
    notes.push(format!("idempotence {idem:.1e}, Pythagoras {pyth:.1e}, adjointness {adj:.1e}"));

    // p = 2 nearest point against the support-enumeration oracle.
    let mut worst_qp = 0.0f64;
    for i in 0..200u64 {
        let mut rng = rng_for(0x8800 + i);
        let market = random_market(&mut rng);
        let space = &market.space;
        let n = space.num_outcomes();
        let count = rng.random_range(1..=4);
        let gens: Vec<Vec<f64>> = (0..count).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let poly = ConvexPolytope::new(gens.iter().cloned().map(RandomVariable).collect()).unwrap();
        let got = nearest_point(space, &RandomVariable(x.clone()), &poly, 2.0).unwrap();
        let want = quadratic_oracle(space.probs(), &x, &gens);
        worst_qp = worst_qp.max(got.point.max_abs_diff(&RandomVariable(want)));
    }
    pass &= worst_qp <= 1e-8;
    notes.push(format!("p=2 nearest point vs oracle {worst_qp:.1e}"));

    // Sunny property along the segment to the projection.
    let (mut sunny, mut sunny_out) = (0.0f64, 0.0f64);
    for i in 0..200u64 {
        let mut rng = rng_for(0x8900 + i);
        let market = random_market(&mut rng);
        let space = &market.space;
        let n = space.num_outcomes();
        let count = rng.random_range(1..=5);
        let gens: Vec<RandomVariable> =
            (0..count).map(|_| RandomVariable((0..n).map(|_| rng.sample(StandardNormal)).collect())).collect();
        let poly = ConvexPolytope::new(gens).unwrap();
        let p = rng.random_range(1.2..=2.0);
        let x = RandomVariable((0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect());
        let s = nearest_point(space, &x, &poly, p).unwrap().point;
        let a: f64 = rng.random();
        let moved = x.scale(a).add(&s.scale(1.0 - a));
        sunny = sunny.max(nearest_point(space, &moved, &poly, p).unwrap().point.max_abs_diff(&s));
        let beyond = x.scale(1.5).add(&s.scale(-0.5));
        sunny_out = sunny_out.max(nearest_point(space, &beyond, &poly, p).unwrap().point.max_abs_diff(&s));
    }
    pass &= sunny <= 1e-6;
    notes.push(format!("sunny {sunny:.1e} (alpha=1.5 reported: {sunny_out:.1e})"));

    // Concavity of the hull extension on 1000 triples.
    let mut worst_concave = f64::NEG_INFINITY;
    for i in 0..1000u64 {
        let inst = duality_instance(0x8a00 + i / 10);
        let mut rng = rng_for(0x8b00 + i);
        let n = inst.scenarios.len();
        let mut hull = || {
            let d: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = d.iter().sum();
            inst.scenarios.density(&d.iter().map(|v| v / s).collect::<Vec<_>>())
        };
        let (y1, y2) = (hull(), hull());
        let l: f64 = rng.random();
        let mid = y1.scale(l).add(&y2.scale(1.0 - l));
        let lhs = f_tilde(&mid, &inst.scenarios).unwrap();
        let rhs = l * f_tilde(&y1, &inst.scenarios).unwrap() + (1.0 - l) * f_tilde(&y2, &inst.scenarios).unwrap();
        worst_concave = worst_concave.max(rhs - lhs);
    }
    pass &= worst_concave <= 1e-8;
    notes.push(format!("concavity excess {worst_concave:.1e}"));
    outcome(pass, notes.join(", "))
}

fn criterion_9(instances: &[(Instance, CapitalReport)]) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let (mut mono, mut shift) = (f64::NEG_INFINITY, 0.0f64);
    for (inst, r) in instances {
        let base = r.primal_value.unwrap();
        let mut rng = rng_for(inst.seed ^ 0x9999);
        let floors = inst.scenarios.floors();
        let raised: Vec<f64> = floors.iter().map(|f| f + rng.random::<f64>()).collect();
        let up = min_capital_primal(&inst.scenarios.with_floors(&raised), &inst.market).unwrap().value.unwrap();
        mono = mono.max(base - up);
        let c: f64 = rng.sample(StandardNormal);
        let shifted: Vec<f64> = floors.iter().map(|f| f + c).collect();
        let moved = min_capital_primal(&inst.scenarios.with_floors(&shifted), &inst.market).unwrap().value.unwrap();
        shift = shift.max((moved - base - c).abs());
    }
    pass &= mono <= 1e-8 && shift <= 1e-8;
    notes.push(format!("floor monotonicity excess {mono:.1e}, translation error {shift:.1e}"));

    let opts = ConcaveOptions::default();
    let price = |m: &Market, c: &RandomVariable, alpha: f64, cap: Option<f64>| {
        efficient_hedge_price(&HedgeProblem::new(c.clone(), 2.0, alpha, cap).unwrap(), m, &opts).unwrap().price
    };
    let alphas = [0.0, 0.005, 0.02, 0.05, 0.08, 0.2];
    let mut worst_alpha = f64::NEG_INFINITY;
    let mut worst_claim = f64::NEG_INFINITY;
    let mut worst_cap = f64::NEG_INFINITY;
    let b = b1();
    let tf = build_two_factor_tree(&two_factor(1)).unwrap();
    for (m, strike, caps) in [(&b, 0.0, vec![1.0, 2.0, 10.0]), (&tf, 1.0, vec![1.02, 1.05, 1.2, 1.5, 10.0])] {
        let call = call_payoff(m, strike);
        let prices: Vec<f64> = alphas.iter().map(|&a| price(m, &call, a, None)).collect();
        worst_alpha = worst_alpha.max(prices.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
        let mut rng = rng_for(0x9a);
        for _ in 0..10 {
            let bump = RandomVariable(call.0.iter().map(|_| rng.random::<f64>()).collect());
            for &a in &[0.0, 0.02, 0.08] {
                worst_claim = worst_claim.max(price(m, &call, a, None) - price(m, &call.add(&bump), a, None));
            }
        }
        for &a in &[0.0, 0.02, 0.08] {
            let by_cap: Vec<f64> = caps.iter().map(|&k| price(m, &call, a, Some(k))).collect();
            worst_cap = worst_cap.max(by_cap.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    pass &= worst_alpha <= 1e-9 && worst_claim <= 1e-9 && worst_cap <= 1e-9;
    notes.push(format!(
        "hedge price excess in alpha {worst_alpha:.1e}, in claim {worst_claim:.1e}, in cap {worst_cap:.1e}"
    ));
    outcome(pass, notes.join(", "))
}

fn main() {
    // Shared instance set for criteria 1, 3 and 9.
    let start = Instant::now();
    let mut errors = 0;
    let instances: Vec<(Instance, CapitalReport)> = (0..500)
        .filter_map(|i| {
            let inst = duality_instance(DUALITY_SEED + i);
            match capital_report(&inst.scenarios, &inst.market, Some(inst.seed)) {
                Ok(r) => Some((inst, r)),
                Err(e) => {
                    eprintln!("instance seed {}: {e}", inst.seed);
                    errors += 1;
                    None
                }
            }
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();

    let results: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("strong duality", Box::new(|| criterion_1(&instances, errors, elapsed))),
        ("empty martingale set", Box::new(criterion_2)),
        ("certificate", Box::new(|| criterion_3(&instances))),
        ("risk identity", Box::new(criterion_4)),
        ("worked binomial", Box::new(criterion_5)),
        ("efficient hedging", Box::new(criterion_6)),
        ("discrete Girsanov", Box::new(criterion_7)),
        ("geometry", Box::new(criterion_8)),
        ("monotonicity", Box::new(|| criterion_9(&instances))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in results.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
