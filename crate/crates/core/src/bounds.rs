//! Closed-form path-count expectations and generalizability thresholds for
//! random knowledge graphs.
//!
//! All float evaluators go through the falling-factorial ratio
//! `prod_{k=1..n} (V-k)/(V-1)`, which stays in `(0, 1]` and makes the
//! `n = 1` case exact. The node-count search is done in exact rationals.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Node counts at or below this use a direct product; above it the
/// evaluation runs in log space.
pub const DIRECT_EVAL_MAX_NODES: u64 = 500;

/// Hop orders above this switch the log-space path to log-gamma.
const LOG_GAMMA_MIN_HOPS: usize = 1024;

pub const DEFAULT_SEARCH_CUTOFF: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeCount {
    Finite(u64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub node_count: NodeCount,
    pub branching: Ratio<u64>,
    pub hops: usize,
    pub phi_threshold: Ratio<u64>,
}

impl BoundParams {
    pub fn new(node_count: u64, branching: Ratio<u64>, hops: usize) -> Self {
        Self {
            node_count: NodeCount::Finite(node_count),
            branching,
            hops,
            phi_threshold: Ratio::from_integer(0),
        }
    }

    pub fn infinite(branching: Ratio<u64>, hops: usize) -> Self {
        Self {
            node_count: NodeCount::Infinite,
            ..Self::new(0, branching, hops)
        }
    }

    pub fn with_phi_g(mut self, phi_g: Ratio<u64>) -> Self {
        self.phi_threshold = phi_g;
        self
    }

    fn finite_nodes(&self) -> Result<u64> {
        match self.node_count {
            NodeCount::Finite(v) => Ok(v),
            NodeCount::Infinite => Err(Error::InvalidParameter(
                "an infinite node count is only meaningful for asymptotic bounds".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathCountEstimate {
    pub value: f64,
    /// Set when the graph is too small to hold a single n-hop path.
    pub degenerate: bool,
}

fn to_f64(r: &Ratio<u64>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `ln prod_{k=1..n} (v-k)/(v-1)`; requires `v > n`.
fn ln_falling_ratio(v: u64, n: usize) -> f64 {
    let vm1 = (v - 1) as f64;
    if n >= LOG_GAMMA_MIN_HOPS {
        return ln_gamma(v as f64) - ln_gamma((v - n as u64) as f64) - n as f64 * vm1.ln();
    }
    (1..=n as u64).map(|k| (-((k - 1) as f64) / vm1).ln_1p()).sum()
}

fn falling_ratio(v: u64, n: usize) -> f64 {
    if v <= DIRECT_EVAL_MAX_NODES {
        let vm1 = (v - 1) as f64;
        (1..=n as u64).map(|k| (v - k) as f64 / vm1).product()
    } else {
        ln_falling_ratio(v, n).exp()
    }
}

/// Expected number of directed n-hop paths over distinct nodes when each
/// ordered pair carries an edge with probability `b / (V - 1)`:
/// `C(V, n+1) (n+1)! (b / (V-1))^n`.
pub fn expected_path_count(params: &BoundParams) -> Result<PathCountEstimate> {
    let v = params.finite_nodes()?;
    let n = params.hops;
    if n == 0 {
        return Err(Error::HopOrder { min: 1, got: 0 });
    }
    if v < n as u64 + 1 || v < 2 {
        return Ok(PathCountEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let b = to_f64(&params.branching);
    let value = if v <= DIRECT_EVAL_MAX_NODES {
        v as f64 * b.powi(n as i32) * falling_ratio(v, n)
    } else if b == 0.0 {
        0.0
    } else {
        ((v as f64).ln() + n as f64 * b.ln() + ln_falling_ratio(v, n)).exp()
    };
    Ok(PathCountEstimate {
        value,
        degenerate: false,
    })
}

/// Expected `phi_{n,r}`: the path expectation divided by the expected
/// atomic count `V * b`.
pub fn expected_phi(params: &BoundParams) -> Result<PathCountEstimate> {
    let v = params.finite_nodes()?;
    let est = expected_path_count(params)?;
    let atomic = v as f64 * to_f64(&params.branching);
    Ok(PathCountEstimate {
        value: if atomic > 0.0 { est.value / atomic } else { 0.0 },
        degenerate: est.degenerate,
    })
}

/// `b^{n-1} (1 / (1 - 1/V))^n`, or `b^{n-1}` for an infinite graph.
pub fn phi_upper_bound(params: &BoundParams) -> Result<f64> {
    if params.hops == 0 {
        return Err(Error::HopOrder { min: 1, got: 0 });
    }
    let b = to_f64(&params.branching);
    let asymptotic = b.powi(params.hops as i32 - 1);
    match params.node_count {
        NodeCount::Infinite => Ok(asymptotic),
        NodeCount::Finite(v) if v >= 2 => {
            let v = v as f64;
            Ok(asymptotic * (v / (v - 1.0)).powi(params.hops as i32))
        }
        NodeCount::Finite(v) => Err(Error::InvalidParameter(format!(
            "node count must be at least 2, got {v}"
        ))),
    }
}

/// Smallest relation branching factor for which n-hop facts can reach
/// `phi_threshold`:
/// `(phi_G V (V-1)^n / (C(V, n+1) (n+1)!))^{1/(n-1)}`.
pub fn min_branching_factor(params: &BoundParams) -> Result<f64> {
    let n = params.hops;
    if n < 2 {
        return Err(Error::HopOrder { min: 2, got: n });
    }
    let phi_g = to_f64(&params.phi_threshold);
    let root = 1.0 / (n as f64 - 1.0);
    match params.node_count {
        NodeCount::Infinite => Ok(phi_g.powf(root)),
        NodeCount::Finite(v) => {
            if v < n as u64 + 1 {
                return Err(Error::InvalidParameter(format!("{v} nodes cannot hold a {n}-hop path")));
            }
            Ok((phi_g / falling_ratio(v, n)).powf(root))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NodeCountBound {
    Found {
        nodes: u64,
    },
    /// The threshold is at least 1 while the left side stays below 1.
    Infeasible {
        threshold: String,
    },
    NotFoundBelowCutoff {
        cutoff: u64,
    },
}

fn big(r: &Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// `T = max_r phi_G / b_r^{n-1}` as an exact rational.
pub fn node_threshold(
    phi_g: Ratio<u64>,
    per_relation_b: &BTreeMap<String, Ratio<u64>>,
    hops: usize,
) -> Result<BigRational> {
    if hops < 2 {
        return Err(Error::HopOrder { min: 2, got: hops });
    }
    if per_relation_b.is_empty() {
        return Err(Error::InvalidParameter("no relation branching factors given".into()));
    }
    let phi = big(&phi_g);
    let mut worst = BigRational::zero();
    for (label, b) in per_relation_b {
        if b.is_zero() {
            return Err(Error::InvalidParameter(format!(
                "relation `{label}` has branching factor 0"
            )));
        }
        let t = &phi / num_traits::pow(big(b), hops - 1);
        if t > worst {
            worst = t;
        }
    }
    Ok(worst)
}

/// `Gamma(v) / (Gamma(v-n) (v-1)^n) = prod_{k=1..n} (v-k) / (v-1)^n`, exactly.
pub fn gamma_ratio_exact(v: u64, n: usize) -> BigRational {
    let mut num = BigInt::one();
    for k in 1..=n as u64 {
        num *= BigInt::from(v - k);
    }
    let den = num_traits::pow(BigInt::from(v - 1), n);
    BigRational::new(num, den)
}

/// Smallest node count `v >= n + 2` at which the worst relation can still
/// reach `phi_G` on n-hop facts. The left side is increasing in `v`, so the
/// boundary is located by exact-rational bisection.
pub fn min_node_count(
    phi_g: Ratio<u64>,
    per_relation_b: &BTreeMap<String, Ratio<u64>>,
    hops: usize,
    cutoff: u64,
) -> Result<NodeCountBound> {
    let t = node_threshold(phi_g, per_relation_b, hops)?;
    if t >= BigRational::one() {
        return Ok(NodeCountBound::Infeasible {
            threshold: t.to_string(),
        });
    }
    let n = hops;
    let lo = n as u64 + 2;
    let holds = |v: u64| gamma_ratio_exact(v, n) >= t;
    if holds(lo) {
        return Ok(NodeCountBound::Found { nodes: lo });
    }
    if cutoff <= lo || !holds(cutoff) {
        return Ok(NodeCountBound::NotFoundBelowCutoff { cutoff });
    }
    // invariant: !holds(lo) && holds(hi)
    let (mut lo, mut hi) = (lo, cutoff);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(NodeCountBound::Found { nodes: hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_integer::binomial;

    fn r(n: u64, d: u64) -> Ratio<u64> {
        Ratio::new(n, d)
    }

    fn exact_paths(v: u64, b: Ratio<u64>, n: usize) -> f64 {
        let mut fact = BigInt::one();
        for k in 1..=(n as u64 + 1) {
            fact *= BigInt::from(k);
        }
        let c = BigRational::from_integer(binomial(BigInt::from(v), BigInt::from(n as u64 + 1)) * fact);
        let p = big(&b) / BigRational::from_integer(BigInt::from(v - 1));
        (c * num_traits::pow(p, n)).to_f64().unwrap()
    }

    #[test]
    fn n1_reduces_to_edge_count() {
        for (v, b) in [(2u64, r(1, 1)), (4, r(3, 4)), (1000, r(7, 3)), (1_000_000, r(99, 1))] {
            let got = expected_path_count(&BoundParams::new(v, b, 1)).unwrap().value;
            let want = v as f64 * to_f64(&b);
            assert!(((got - want) / want).abs() < 1e-12, "{v} {b}: {got} vs {want}");
        }
    }

    #[test]
    fn hand_evaluated_small_case() {
        let got = expected_path_count(&BoundParams::new(4, r(3, 4), 2)).unwrap();
        assert!((got.value - 1.5).abs() < 1e-12);
        assert!(!got.degenerate);
    }

    #[test]
    fn regression_v100_b2_n3() {
        // C(100,4) 4! (2/99)^3 = 7604800/9801, from exact rational arithmetic.
        let got = expected_path_count(&BoundParams::new(100, r(2, 1), 3)).unwrap().value;
        let want = 7_604_800.0 / 9_801.0;
        assert!(((got - want) / want).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_exact_reference() {
        for v in [5u64, 17, 100, 250, 500] {
            for n in (2..6).filter(|&n| (n as u64) < v) {
                for b in [r(3, 4), r(2, 1), r(5, 2)] {
                    let got = expected_path_count(&BoundParams::new(v, b, n)).unwrap().value;
                    let want = exact_paths(v, b, n);
                    assert!(((got - want) / want).abs() < 1e-10, "v={v} n={n} b={b}");
                }
            }
        }
    }

    #[test]
    fn log_space_continuity_across_switch() {
        let a = expected_path_count(&BoundParams::new(501, r(2, 1), 3)).unwrap().value;
        let want = exact_paths(501, r(2, 1), 3);
        assert!(((a - want) / want).abs() < 1e-12);
        // log-gamma route vs the summed log1p route at a long hop order
        let (v, n) = (200_000u64, 2000usize);
        let summed: f64 = (1..=n as u64)
            .map(|k| (-((k - 1) as f64) / (v - 1) as f64).ln_1p())
            .sum();
        let lg = ln_falling_ratio(v, n);
        assert!(((lg - summed) / summed).abs() < 1e-6, "{lg} vs {summed}");
    }

    #[test]
    fn degenerate_when_too_few_nodes() {
        let got = expected_path_count(&BoundParams::new(3, r(1, 1), 3)).unwrap();
        assert_eq!(got.value, 0.0);
        assert!(got.degenerate);
    }

    #[test]
    fn upper_bound_values() {
        assert_eq!(phi_upper_bound(&BoundParams::infinite(r(2, 1), 3)).unwrap(), 4.0);
        let got = phi_upper_bound(&BoundParams::new(100, r(2, 1), 3)).unwrap();
        assert!((got - 4.0 * (100.0f64 / 99.0).powi(3)).abs() < 1e-12);
        assert!((got - 4.122_440_608_513_459).abs() < 1e-9);
        let mut prev = f64::INFINITY;
        for v in [2u64, 3, 10, 100, 1000, 100_000] {
            let cur = phi_upper_bound(&BoundParams::new(v, r(2, 1), 3)).unwrap();
            assert!(cur < prev && cur > 4.0);
            prev = cur;
        }
    }

    #[test]
    fn threshold_n2_collapses() {
        let p = BoundParams::new(1000, r(1, 1), 2).with_phi_g(r(18, 5));
        let got = min_branching_factor(&p).unwrap();
        assert!((got - 3.6 * 999.0 / 998.0).abs() < 1e-12);
        let inf = min_branching_factor(&BoundParams::infinite(r(1, 1), 3).with_phi_g(r(18, 5))).unwrap();
        assert!((inf - 3.6f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            min_branching_factor(&BoundParams::new(10, r(1, 1), 1)),
            Err(Error::HopOrder { .. })
        ));
    }

    #[test]
    fn threshold_flips_at_31_for_b2() {
        let at = |v| min_branching_factor(&BoundParams::new(v, r(2, 1), 3).with_phi_g(r(18, 5))).unwrap();
        assert!(at(30) > 2.0);
        assert!(at(31) < 2.0);
    }

    #[test]
    fn node_count_examples() {
        let one = |b| BTreeMap::from([("r".to_owned(), b)]);
        assert_eq!(
            min_node_count(r(18, 5), &one(r(2, 1)), 3, DEFAULT_SEARCH_CUTOFF).unwrap(),
            NodeCountBound::Found { nodes: 31 }
        );
        assert_eq!(gamma_ratio_exact(30, 3), BigRational::new(756.into(), 841.into()));
        assert_eq!(gamma_ratio_exact(31, 3), BigRational::new(812.into(), 900.into()));
        assert!(matches!(
            min_node_count(r(18, 5), &one(r(3, 2)), 3, DEFAULT_SEARCH_CUTOFF).unwrap(),
            NodeCountBound::Infeasible { .. }
        ));
        assert_eq!(
            min_node_count(r(0, 1), &one(r(2, 1)), 3, DEFAULT_SEARCH_CUTOFF).unwrap(),
            NodeCountBound::Found { nodes: 5 }
        );
        assert_eq!(
            min_node_count(r(18, 5), &one(r(2, 1)), 3, 20).unwrap(),
            NodeCountBound::NotFoundBelowCutoff { cutoff: 20 }
        );
    }

    #[test]
    fn worst_relation_drives_threshold() {
        let rels = BTreeMap::from([("a".to_owned(), r(4, 1)), ("b".to_owned(), r(2, 1))]);
        let t = node_threshold(r(18, 5), &rels, 3).unwrap();
        assert_eq!(t, BigRational::new(9.into(), 10.into()));
    }
}
