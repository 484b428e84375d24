//! Seeded property suites run by the `selftest` command.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assignment::{enumerate_all, murty_k_best, CostMatrix, LikelihoodTable};
use crate::density::brute_force_log_pmb;
use crate::error::Result;
use crate::scoring::{nll_with_costs, training_loss_for_assignment, training_loss_gradients, ParameterGradient};
use crate::synth::{random_instance, random_training_instance, InstanceConfig};
use crate::types::{BernoulliComponent, BoundingBox, BoxDistribution, GroundTruthObject};

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_ITERATIONS: usize = 200;

/// Deliberate corruption used to check that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Adds one nat to the first finite Bernoulli entry of every cost matrix.
    CorruptCostMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelftestConfig {
    pub seed: u64,
    pub iterations: usize,
    pub fault: Option<Fault>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            seed: DEFAULT_SEED,
            iterations: DEFAULT_ITERATIONS,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl PropertyOutcome {
    fn new(name: &'static str) -> Self {
        PropertyOutcome {
            name,
            checked: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestReport {
    pub outcomes: Vec<PropertyOutcome>,
    pub warnings: Vec<String>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(PropertyOutcome::passed)
    }
}

const NLL_TOLERANCE: f64 = 1e-9;
const GRADIENT_STEP: f64 = 1e-5;
const GRADIENT_RELATIVE: f64 = 1e-5;
/// Floor on the gradient comparison for derivatives that are themselves
/// near zero, well above the round-off of a central difference at `h = 1e-5`.
const GRADIENT_ABSOLUTE: f64 = 1e-9;

fn costs_for(table: &LikelihoodTable, fault: Option<Fault>) -> Result<CostMatrix> {
    let costs = table.cost_matrix()?;
    match fault {
        None => Ok(costs),
        Some(Fault::CorruptCostMatrix) => {
            let mut entries = costs.entries().to_vec();
            let upper = costs.bernoullis() * costs.cols();
            if let Some(e) = entries[..upper].iter_mut().find(|e| e.is_finite()) {
                *e += 1.0;
            }
            CostMatrix::new(costs.bernoullis(), costs.cols(), entries)
        }
    }
}

/// Runs every suite. Zero iterations pass vacuously with a warning.
pub fn run_selftest(cfg: &SelftestConfig) -> Result<SelftestReport> {
    let mut warnings = Vec::new();
    if cfg.iterations == 0 {
        warnings.push("zero iterations requested; no property was exercised".to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inst_cfg = InstanceConfig::default();

    let mut oracle = PropertyOutcome::new("oracle_equivalence");
    let mut prefix = PropertyOutcome::new("murty_prefix");
    let mut monotone = PropertyOutcome::new("q_monotonicity");
    for it in 0..cfg.iterations {
        let (pmb, gts) = random_instance(&mut rng, &inst_cfg);
        let table = LikelihoodTable::new(&pmb, &gts)?;
        let costs = costs_for(&table, cfg.fault)?;
        let all = enumerate_all(&costs)?;

        let report = nll_with_costs(&pmb, &table, &costs, all.len().max(1));
        let exact = -brute_force_log_pmb(&pmb, &gts)?;
        oracle.record(close(report.nll, exact, NLL_TOLERANCE), || {
            format!("instance {it}: nll {} vs brute force {exact}", report.nll)
        });

        let k = 1 + it % all.len().max(1);
        let murty = murty_k_best(&costs, k);
        let ok = murty.len() == k.min(all.len())
            && murty
                .iter()
                .zip(&all)
                .all(|(a, b)| (a.total_cost - b.total_cost).abs() <= NLL_TOLERANCE);
        prefix.record(ok, || {
            format!("instance {it}: first {k} Murty costs differ from enumeration")
        });

        let mut last = f64::INFINITY;
        let mut ok = true;
        for q in 1..=all.len().max(1) {
            let nll = nll_with_costs(&pmb, &table, &costs, q).nll;
            ok &= nll <= last;
            last = nll;
        }
        monotone.record(ok, || format!("instance {it}: NLL increased with q"));
    }

    let mut grads = PropertyOutcome::new("gradient_check");
    for it in 0..cfg.iterations {
        let (preds, gts) = random_training_instance(&mut rng, 6, 3, 1e-3);
        let (tl, analytic) = training_loss_gradients(&preds, &gts)?;
        let numeric = finite_difference_gradients(&preds, &gts, &tl.assignment, GRADIENT_STEP)?;
        let mut worst = None;
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            for (name, x, y) in gradient_pairs(a, n) {
                if !close_relative(x, y) && worst.is_none() {
                    worst = Some(format!(
                        "instance {it}, prediction {i}, {name}: analytic {x} vs numeric {y}"
                    ));
                }
            }
        }
        let ok = worst.is_none();
        grads.record(ok, || worst.unwrap_or_default());
    }

    Ok(SelftestReport {
        outcomes: vec![oracle, prefix, monotone, grads],
        warnings,
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}

fn close_relative(a: f64, b: f64) -> bool {
    (a - b).abs() <= GRADIENT_RELATIVE * a.abs().max(b.abs()) + GRADIENT_ABSOLUTE
}

fn gradient_pairs(a: &ParameterGradient, n: &ParameterGradient) -> Vec<(String, f64, f64)> {
    let mut out = vec![("d_existence".to_string(), a.d_existence, n.d_existence)];
    for k in 0..4 {
        out.push((format!("d_mean[{k}]"), a.d_mean[k], n.d_mean[k]));
        out.push((format!("d_scale[{k}]"), a.d_scale[k], n.d_scale[k]));
    }
    out
}

/// Central differences of the fixed-assignment training loss.
pub fn finite_difference_gradients(
    preds: &[BernoulliComponent],
    gts: &[GroundTruthObject],
    assignment: &crate::types::Assignment,
    h: f64,
) -> Result<Vec<ParameterGradient>> {
    let loss = |p: &[BernoulliComponent]| training_loss_for_assignment(p, gts, assignment);
    let mut out = Vec::with_capacity(preds.len());
    for i in 0..preds.len() {
        let mut work = preds.to_vec();
        let mut diff = |make: &dyn Fn(f64) -> Result<BernoulliComponent>| -> Result<f64> {
            work[i] = make(h)?;
            let up = loss(&work)?;
            work[i] = make(-h)?;
            let down = loss(&work)?;
            work[i] = preds[i].clone();
            Ok((up - down) / (2.0 * h))
        };
        let p = &preds[i];
        let d_existence = diff(&|d| p.with_existence(p.existence() + d))?;
        let mut d_mean = [0.0; 4];
        let mut d_scale = [0.0; 4];
        for k in 0..4 {
            d_mean[k] = diff(&|d| {
                let mut m = p.box_dist().mean().to_array();
                m[k] += d;
                Ok(p.with_box(p.box_dist().with_mean(BoundingBox::try_from(m)?)))
            })?;
            d_scale[k] = diff(&|d| {
                let mut s: [f64; 4] = p.box_dist().params().try_into().expect("four Laplace scales");
                s[k] += d;
                Ok(p.with_box(BoxDistribution::laplace(*p.box_dist().mean(), s)?))
            })?;
        }
        out.push(ParameterGradient {
            d_existence,
            d_mean,
            d_scale,
        });
    }
    Ok(out)
}
