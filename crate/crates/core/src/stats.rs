//! Spearman rank correlation with exact permutation or Student-t p-values,
//! and the leave-sets-out analysis of the first experiment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::pomerantz::HumanCERecord;

/// Sample sizes up to this use exact permutation p-values.
pub const EXACT_MAX_N: usize = 8;
pub const MIN_N: usize = 4;

/// Sets whose removal the leave-out analysis reports by default.
pub const DRIVING_SETS: [u32; 5] = [1, 2, 3, 13, 16];

/// Mid-ranks (1-based); tied values share the mean of their ranks.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < MIN_N {
        return Err(Error::TooFewObservations(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite value".into()));
    }
    Ok(())
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    pearson(&mid_ranks(x), &mid_ranks(y)).ok_or_else(|| Error::UndefinedCorrelation("constant input series".into()))
}

/// Two-sided p from the t statistic `rho·√((n−2)/(1−rho²))` with `n−2`
/// degrees of freedom.
pub fn t_approximation_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Two-sided exact permutation p: the share of all `n!` orderings of the
/// `y` ranks whose |rho| reaches the observed |rho|.
pub fn exact_permutation_p(x: &[f64], y: &[f64]) -> Result<f64> {
    let observed = spearman_rho(x, y)?.abs();
    let n = x.len();
    if n > 10 {
        return Err(Error::Config(format!("exact enumeration over {n}! permutations refused")));
    }
    let rx = mid_ranks(x);
    let mut ry = mid_ranks(y);
    let tol = 1e-12;
    let (mut hits, mut total) = (0u64, 0u64);
    let mut tally = |ry: &[f64]| {
        total += 1;
        if pearson(&rx, ry).map_or(false, |r| r.abs() >= observed - tol) {
            hits += 1;
        }
    };
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    tally(&ry);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            tally(&ry);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    ExactPermutation,
    StudentT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PMethod,
}

/// Spearman's rho with a two-sided p-value: exact for `n ≤ 8`, Student-t
/// approximation otherwise.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    let rho = spearman_rho(x, y)?;
    let n = x.len();
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_permutation_p(x, y)?, PMethod::ExactPermutation)
    } else {
        (t_approximation_p(rho, n), PMethod::StudentT)
    };
    Ok(Spearman { rho, p_value, n, method })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub probe_name: String,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub excluded_sets: Vec<u32>,
}

/// Correlate network CEs with human CEs over all sets and again without
/// `excluded`. Returns `(full, excluded)`.
pub fn exclusion_analysis(
    probe_name: &str,
    ce_by_set: &BTreeMap<u32, f64>,
    human: &[HumanCERecord],
    excluded: &[u32],
) -> Result<(CorrelationReport, CorrelationReport)> {
    let matched: Vec<(u32, f64, f64)> = human
        .iter()
        .map(|h| {
            ce_by_set
                .get(&h.set_id)
                .map(|&ce| (h.set_id, ce, h.human_ce))
                .ok_or_else(|| Error::Config(format!("no network CE for set {}", h.set_id)))
        })
        .collect::<Result<_>>()?;
    if matched.len() != ce_by_set.len() {
        return Err(Error::LengthMismatch { left: ce_by_set.len(), right: human.len() });
    }
    let report = |skip: &[u32]| -> Result<CorrelationReport> {
        let (net, hum): (Vec<f64>, Vec<f64>) =
            matched.iter().filter(|(id, _, _)| !skip.contains(id)).map(|&(_, n, h)| (n, h)).unzip();
        let s = spearman(&net, &hum)?;
        let mut excluded_sets: Vec<u32> = skip.iter().copied().filter(|id| ce_by_set.contains_key(id)).collect();
        excluded_sets.sort_unstable();
        Ok(CorrelationReport { probe_name: probe_name.to_string(), rho: s.rho, p_value: s.p_value, n: s.n, excluded_sets })
    };
    Ok((report(&[])?, report(excluded)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn identical_series_have_unit_rho_and_minimal_p() {
        let x = [0.3, 1.2, -0.5, 2.2, 0.9, 1.7];
        let s = spearman(&x, &x).unwrap();
        assert_eq!(s.rho, 1.0);
        // Only the identity and the full reversal reach |rho| = 1.
        assert!((s.p_value - 2.0 / 720.0).abs() < 1e-15);
    }

    #[test]
    fn reversed_series_have_rho_minus_one() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let s = spearman(&x, &y).unwrap();
        assert_eq!(s.rho, -1.0);
        assert_eq!(s.method, PMethod::StudentT);
    }

    #[test]
    fn constant_series_is_undefined() {
        let err = spearman(&[1.0, 2.0, 3.0, 4.0], &[5.0; 4]).unwrap_err();
        assert!(err.to_string().starts_with("undefined correlation"));
    }

    #[test]
    fn short_or_mismatched_series_are_rejected() {
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Err(Error::TooFewObservations(3))));
        assert!(matches!(spearman(&[1.0; 4], &[1.0; 5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn t_approximation_matches_reference_value() {
        // rho = 0.6, n = 20: t = 0.6·√(18/0.64) = 3.181981, two-sided p = 0.0051629 (df 18).
        let p = t_approximation_p(0.6, 20);
        assert!((p - 0.0051629).abs() < 1e-6, "{p}");
    }

    #[test]
    fn exact_p_for_n4_perfect_order() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((exact_permutation_p(&x, &x).unwrap() - 2.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn empty_exclusion_gives_identical_reports() {
        let human = crate::pomerantz::bundled_human_ce();
        let ce: BTreeMap<u32, f64> = human.iter().map(|h| (h.set_id, (h.set_id as f64 * 0.37).sin())).collect();
        let (full, excl) = exclusion_analysis("fc", &ce, &human, &[]).unwrap();
        assert_eq!(full, excl);
        assert_eq!(full.n, 17);
    }

    #[test]
    fn correlation_driven_by_few_sets_vanishes_when_they_are_removed() {
        let human = crate::pomerantz::bundled_human_ce();
        // Network CE tracks humans only on the driving sets; the other twelve
        // are arranged to be rank-uncorrelated with the human ranking.
        let filler = [0.0, 0.03, -0.02, 0.01, 0.02, -0.01, -0.03, 0.04, -0.04, 0.015, -0.015, 0.005];
        let mut others = filler.iter();
        let ce: BTreeMap<u32, f64> = human
            .iter()
            .map(|h| {
                let v = if DRIVING_SETS.contains(&h.set_id) { h.human_ce } else { *others.next().unwrap() };
                (h.set_id, v)
            })
            .collect();
        let (full, excl) = exclusion_analysis("fc", &ce, &human, &DRIVING_SETS).unwrap();
        assert!(full.rho > 0.5, "{}", full.rho);
        assert!(excl.rho.abs() < 0.3, "{}", excl.rho);
        assert_eq!(excl.n, 12);
        assert_eq!(excl.excluded_sets, vec![1, 2, 3, 13, 16]);
    }

    proptest! {
        #[test]
        fn rho_is_bounded(x in proptest::collection::vec(-10.0f64..10.0, 12), y in proptest::collection::vec(-10.0f64..10.0, 12)) {
            if let Ok(r) = spearman_rho(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn rho_invariant_under_monotone_transform(x in proptest::collection::vec(-5.0f64..5.0, 5..20), seed in 0u64..1000) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 1.7 + (i as f64 * seed as f64).sin()).collect();
            if let (Ok(a), Ok(b)) = (spearman_rho(&x, &y), spearman_rho(&x.iter().map(|v| v.exp()).collect::<Vec<_>>(), &y)) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
