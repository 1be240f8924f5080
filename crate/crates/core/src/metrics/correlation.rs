//! Rank correlation between two leaderboards.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

const MIN_SYSTEMS: usize = 3;

fn check_inputs(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "score vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < MIN_SYSTEMS {
        return Err(Error::Undefined(format!(
            "rank correlation needs at least {MIN_SYSTEMS} systems, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::Validation("scores contain NaN".into()));
    }
    Ok(())
}

/// 1-based ranks, ties sharing the average of the ranks they span.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("all systems tied on one side".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Kendall's tau-b, which corrects for ties on either side.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    let n = a.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_a, mut tied_b) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i].partial_cmp(&a[j]).unwrap_or(Ordering::Equal);
            let db = b[i].partial_cmp(&b[j]).unwrap_or(Ordering::Equal);
            match (da, db) {
                (Ordering::Equal, Ordering::Equal) => {
                    tied_a += 1;
                    tied_b += 1;
                }
                (Ordering::Equal, _) => tied_a += 1,
                (_, Ordering::Equal) => tied_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - tied_a) * (pairs - tied_b)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::Undefined("all systems tied on one side".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStats {
    pub spearman: f64,
    pub kendall: f64,
    /// Systems present in both leaderboards.
    pub n: usize,
}

/// Correlates two system→score maps over the systems they share.
pub fn correlate(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<CorrelationStats> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a.iter().filter_map(|(name, x)| b.get(name).map(|y| (*x, *y))).unzip();
    Ok(CorrelationStats {
        spearman: spearman(&xs, &ys)?,
        kendall: kendall_tau(&xs, &ys)?,
        n: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_reversed() {
        let a = [0.1, 0.5, 0.3, 0.9];
        let rev: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((kendall_tau(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!((kendall_tau(&a, &rev).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_adjacent_swap_of_three() {
        // pairs (1,2) (1,3) concordant, (2,3) discordant
        let tau = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((tau - 1.0 / 3.0).abs() < 1e-12);
        // d = (0, 1, 1): rho = 1 - 6*2/(3*8) = 0.5
        let rho = spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ties_use_average_ranks() {
        assert_eq!(average_ranks(&[0.279, 0.300, 0.279, 0.279]), vec![2.0, 4.0, 2.0, 2.0]);
    }

    #[test]
    fn too_few_systems_undefined() {
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
        assert!(matches!(kendall_tau(&[1.0], &[1.0]), Err(Error::Undefined(_))));
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn correlate_uses_common_systems() {
        let a: BTreeMap<String, f64> = [("x", 3.0), ("y", 2.0), ("z", 1.0), ("only_a", 9.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let b: BTreeMap<String, f64> = [("x", 30.0), ("y", 20.0), ("z", 10.0), ("only_b", 0.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let c = correlate(&a, &b).unwrap();
        assert_eq!(c.n, 3);
        assert!((c.spearman - 1.0).abs() < 1e-12);
    }
}
