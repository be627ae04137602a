//! Seeded random knowledge graphs and Monte Carlo sweeps comparing
//! empirical n-hop path counts with the closed-form expectation.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`). Every trial
//! owns a generator seeded from `(master seed, grid index, trial index)`
//! through a SplitMix64 mix, so results do not depend on worker count.

use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{expected_path_count, expected_phi, phi_upper_bound, BoundParams};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Mode};
use crate::paths::inferred_fact_counts;

pub const SWEEP_CSV_HEADER: &str =
    "v,b,n,trials,empirical_mean_paths,formula_paths,empirical_phi,formula_phi,asymptotic_phi,seed,flag";

/// Default work budget: grid points whose expected path count per trial
/// exceeds this are skipped.
pub const DEFAULT_WORK_BUDGET: f64 = 5.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphModel {
    /// Each ordered pair of distinct nodes independently with `p = b/(V-1)`.
    #[default]
    EdgeProbability,
    /// Exactly `round(V b)` distinct ordered pairs, uniformly.
    ExactEdgeCount,
}

impl std::str::FromStr for GraphModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-probability" => Ok(GraphModel::EdgeProbability),
            "exact-edge-count" => Ok(GraphModel::ExactEdgeCount),
            other => Err(Error::InvalidParameter(format!(
                "unknown graph model `{other}` (edge-probability | exact-edge-count)"
            ))),
        }
    }
}

impl std::fmt::Display for GraphModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphModel::EdgeProbability => "edge-probability",
            GraphModel::ExactEdgeCount => "exact-edge-count",
        })
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one grid row.
pub fn row_seed(master_seed: u64, grid_index: u64) -> u64 {
    mix64(master_seed ^ mix64(grid_index.wrapping_mul(0xd1b5_4a32_d192_ed03)))
}

/// Seed for one trial within a row.
pub fn trial_seed(row_seed: u64, trial_index: u64) -> u64 {
    mix64(row_seed ^ mix64(trial_index.wrapping_add(0x8cb9_2ba7_2f3d_8dd7)))
}

fn validate(node_count: u64, branching: Ratio<u64>) -> Result<()> {
    if node_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "node count must be at least 2, got {node_count}"
        )));
    }
    if branching > Ratio::from_integer(node_count - 1) {
        return Err(Error::InvalidParameter(format!(
            "branching factor {branching} exceeds V-1 = {}; edge probability would exceed 1",
            node_count - 1
        )));
    }
    Ok(())
}

/// Random single-relation graph over nodes `v0..v{V-1}`.
pub fn generate_random_kg(
    node_count: u64,
    branching: Ratio<u64>,
    model: GraphModel,
    seed: u64,
) -> Result<KnowledgeGraph> {
    validate(node_count, branching)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kg = KnowledgeGraph::new();
    let ids: Vec<_> = (0..node_count)
        .map(|i| kg.add_entity(&format!("v{i}")))
        .collect::<Result<_>>()?;
    let rel = kg.add_relation("r")?;
    let v = node_count as usize;
    match model {
        GraphModel::EdgeProbability => {
            let p = (branching / Ratio::from_integer(node_count - 1))
                .to_f64()
                .unwrap_or(0.0);
            for i in 0..v {
                for j in 0..v {
                    if i != j && rng.gen_bool(p) {
                        kg.add_fact_ids(ids[i], rel, ids[j])?;
                    }
                }
            }
        }
        GraphModel::ExactEdgeCount => {
            let pairs = v * (v - 1);
            let m = (branching * Ratio::from_integer(node_count)).round().to_integer() as usize;
            let mut picked = index::sample(&mut rng, pairs, m.min(pairs)).into_vec();
            picked.sort_unstable();
            for idx in picked {
                let i = idx / (v - 1);
                let j = idx % (v - 1);
                let j = if j < i { j } else { j + 1 };
                kg.add_fact_ids(ids[i], rel, ids[j])?;
            }
        }
    }
    Ok(kg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridPoint {
    pub node_count: u64,
    pub branching: Ratio<u64>,
    pub hops: usize,
}

impl GridPoint {
    pub fn new(node_count: u64, branching: Ratio<u64>, hops: usize) -> Self {
        Self {
            node_count,
            branching,
            hops,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    pub trials: usize,
    pub model: GraphModel,
    /// Traversal convention used when counting empirical paths.
    pub mode: Mode,
    pub master_seed: u64,
    pub work_budget: f64,
}

impl SweepConfig {
    pub fn new(trials: usize, model: GraphModel, mode: Mode, master_seed: u64) -> Self {
        Self {
            trials,
            model,
            mode,
            master_seed,
            work_budget: DEFAULT_WORK_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFlag {
    Ok,
    /// Expected path count below 1; ratios are noise.
    Degenerate,
    SkippedBudget,
}

impl RowFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RowFlag::Ok => "",
            RowFlag::Degenerate => "degenerate",
            RowFlag::SkippedBudget => "skipped: budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRecord {
    pub node_count: u64,
    pub branching: Ratio<u64>,
    pub hops: usize,
    pub trials: usize,
    pub empirical_mean_paths: f64,
    /// Standard error of `empirical_mean_paths` across trials.
    pub paths_std_error: f64,
    pub empirical_mean_edges: f64,
    /// Mean path count over mean edge count.
    pub empirical_phi: f64,
    pub formula_paths: f64,
    pub formula_phi: f64,
    pub asymptotic_phi: f64,
    pub seed: u64,
    pub flag: RowFlag,
}

fn one_trial(point: &GridPoint, config: &SweepConfig, seed: u64) -> Result<(f64, f64)> {
    let kg = generate_random_kg(point.node_count, point.branching, config.model, seed)?;
    let counts = inferred_fact_counts(&kg, point.hops, config.mode)?;
    let paths = counts.by_hop.get(&point.hops).copied().unwrap_or(0);
    Ok((paths as f64, kg.edge_count() as f64))
}

/// Runs `trials` random graphs per grid point. Rows come back in grid order.
pub fn run_sweep(grid: &[GridPoint], config: &SweepConfig) -> Result<Vec<SimRecord>> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    for (gi, point) in grid.iter().enumerate() {
        if point.hops < 2 {
            return Err(Error::HopOrder {
                min: 2,
                got: point.hops,
            });
        }
        validate(point.node_count, point.branching)?;
        let params = BoundParams::new(point.node_count, point.branching, point.hops);
        let formula = expected_path_count(&params)?;
        let formula_phi = expected_phi(&params)?.value;
        let asymptotic_phi = phi_upper_bound(&BoundParams::infinite(point.branching, point.hops))?;
        let seed = row_seed(config.master_seed, gi as u64);

        let mut record = SimRecord {
            node_count: point.node_count,
            branching: point.branching,
            hops: point.hops,
            trials: config.trials,
            empirical_mean_paths: f64::NAN,
            paths_std_error: f64::NAN,
            empirical_mean_edges: f64::NAN,
            empirical_phi: f64::NAN,
            formula_paths: formula.value,
            formula_phi,
            asymptotic_phi,
            seed,
            flag: RowFlag::Ok,
        };
        // undirected traversal roughly doubles every step's fan-out
        let fan = match config.mode {
            Mode::Directed => 1.0,
            Mode::Undirected => 2f64.powi(point.hops as i32),
        };
        if formula.value * fan > config.work_budget {
            record.flag = RowFlag::SkippedBudget;
            out.push(record);
            continue;
        }
        let samples: Vec<(f64, f64)> = (0..config.trials as u64)
            .into_par_iter()
            .map(|t| one_trial(point, config, trial_seed(seed, t)))
            .collect::<Result<_>>()?;
        let k = samples.len() as f64;
        let mean_paths = samples.iter().map(|s| s.0).sum::<f64>() / k;
        let mean_edges = samples.iter().map(|s| s.1).sum::<f64>() / k;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s.0 - mean_paths).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        record.empirical_mean_paths = mean_paths;
        record.paths_std_error = (var / k).sqrt();
        record.empirical_mean_edges = mean_edges;
        record.empirical_phi = if mean_edges > 0.0 { mean_paths / mean_edges } else { 0.0 };
        if formula.degenerate || formula.value < 1.0 {
            record.flag = RowFlag::Degenerate;
        }
        out.push(record);
    }
    Ok(out)
}

/// `%.10g`-style rendering: 10 significant digits, trailing zeros trimmed.
pub fn fmt_sig10(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.9e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..10).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (9 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_ratio(r: &Ratio<u64>) -> String {
    fmt_sig10(r.to_f64().unwrap_or(f64::NAN))
}

/// Renders rows under [`SWEEP_CSV_HEADER`]. Skipped rows leave the
/// empirical columns empty.
pub fn sweep_to_csv(records: &[SimRecord]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        let emp = |x: f64| {
            if r.flag == RowFlag::SkippedBudget {
                String::new()
            } else {
                fmt_sig10(x)
            }
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.node_count,
            fmt_ratio(&r.branching),
            r.hops,
            r.trials,
            emp(r.empirical_mean_paths),
            fmt_sig10(r.formula_paths),
            emp(r.empirical_phi),
            fmt_sig10(r.formula_phi),
            fmt_sig10(r.asymptotic_phi),
            r.seed,
            r.flag.as_str()
        );
    }
    out
}
