// SPDX-License-Identifier: MIT OR Apache-2.0

//! Direct Bayes computations by enumeration over change times.

use num_bigint::BigInt;

use super::exact::scaled;
use crate::{Error, Result};

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `P(tau < t | x_1..x_t)` under a geometric prior, summing over every
/// change time `s < t` plus the closed-form tail `P(tau >= t) = (1-theta)^t`.
/// `log_lrs[j]` is `ln q(x_{j+1}) / p(x_{j+1})`.
pub fn brute_force_posterior(theta: f64, log_lrs: &[f64]) -> f64 {
    let t = log_lrs.len();
    let log_keep = (1.0 - theta).ln();
    let terms: Vec<f64> = (0..t)
        .map(|s| theta.ln() + s as f64 * log_keep + log_lrs[s..].iter().sum::<f64>())
        .collect();
    let num = lse(&terms);
    if num == f64::NEG_INFINITY {
        return 0.0;
    }
    let den = lse(&[num, t as f64 * log_keep]);
    (num - den).exp()
}

/// Posterior `P(tau_0 < t | data)` when every stream shares `tau_0`;
/// `sum_log_lrs[j]` adds all streams' log-likelihood ratios at time `j+1`.
pub fn brute_force_dependent(theta: f64, sum_log_lrs: &[f64]) -> f64 {
    brute_force_posterior(theta, sum_log_lrs)
}

/// `W_{k,t}` for the partially dependent model by enumerating the shared
/// change point together with every stream's change/no-change indicator.
/// Rows may be ragged: row `k` holds the observations at times
/// `1..=log_lrs[k].len()`.
pub fn brute_force_partial_dep(theta: f64, eta: f64, log_lrs: &[Vec<f64>]) -> Vec<f64> {
    let k = log_lrs.len();
    assert!(k <= 12, "enumeration over 2^K indicator patterns");
    let t = log_lrs.iter().map(Vec::len).max().unwrap_or(0);
    let log_keep = (1.0 - theta).ln();
    let mut all_terms = Vec::new();
    let mut changed_terms = vec![Vec::new(); k];
    // tau_0 = t stands for the whole tail tau_0 >= t.
    for tau0 in 0..=t {
        let log_prior = if tau0 < t {
            theta.ln() + tau0 as f64 * log_keep
        } else {
            t as f64 * log_keep
        };
        for pattern in 0u32..(1 << k) {
            let mut lw = log_prior;
            for (s, row) in log_lrs.iter().enumerate() {
                if pattern >> s & 1 == 1 {
                    lw += eta.ln();
                    if tau0 < row.len() {
                        lw += row[tau0..].iter().sum::<f64>();
                    }
                } else {
                    lw += (1.0 - eta).ln();
                }
            }
            all_terms.push(lw);
            if tau0 < t {
                for (s, terms) in changed_terms.iter_mut().enumerate() {
                    if pattern >> s & 1 == 1 {
                        terms.push(lw);
                    }
                }
            }
        }
    }
    let z = lse(&all_terms);
    changed_terms
        .iter()
        .map(|terms| if terms.is_empty() { 0.0 } else { (lse(terms) - z).exp() })
        .collect()
}

/// Largest `|S|` over all subsets `S` of `w` with `mean(w_S) <= alpha`
/// (the empty set is always feasible). Exhaustive over `2^|w|` subsets in
/// exact arithmetic.
pub fn brute_force_subset(w: &[f64], alpha: f64) -> Result<usize> {
    const CAP: usize = 20;
    if w.len() > CAP {
        return Err(Error::InstanceTooLarge(format!("{} values exceed the subset-search cap of {CAP}", w.len())));
    }
    let values: Vec<BigInt> = w.iter().map(|&x| scaled(x)).collect();
    let a = scaled(alpha);
    let budget: Vec<BigInt> = (0..=w.len()).map(|c| &a * c).collect();
    let mut best = 0;
    let mut sum = BigInt::from(0);
    let mut size = 0usize;
    // Gray-code walk: consecutive subsets differ in exactly one element.
    for i in 1u64..(1u64 << w.len()) {
        let bit = i.trailing_zeros() as usize;
        let gray = i ^ (i >> 1);
        if gray >> bit & 1 == 1 {
            sum += &values[bit];
            size += 1;
        } else {
            sum -= &values[bit];
            size -= 1;
        }
        if size > best && sum <= budget[size] {
            best = size;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_examples() {
        assert!((brute_force_posterior(0.5, &[0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(brute_force_posterior(0.3, &[f64::NEG_INFINITY; 4]), 0.0);
        assert_eq!(brute_force_posterior(0.3, &[]), 0.0);
    }

    #[test]
    fn subset_examples() {
        assert_eq!(brute_force_subset(&[0.02, 0.04, 0.10, 0.30], 0.05).unwrap(), 2);
        assert_eq!(brute_force_subset(&[0.2, 0.6, 0.9], 0.05).unwrap(), 0);
        assert_eq!(brute_force_subset(&[0.0; 7], 0.05).unwrap(), 7);
        assert_eq!(brute_force_subset(&[0.05; 3], 0.05).unwrap(), 3);
        assert!(brute_force_subset(&[0.0; 21], 0.05).is_err());
    }

    #[test]
    fn partial_dep_trivial() {
        let w = brute_force_partial_dep(0.2, 0.0, &[vec![1.0, 2.0], vec![0.5, 0.5]]);
        assert!(w.iter().all(|&x| x == 0.0));
    }
}
