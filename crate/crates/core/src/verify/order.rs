// SPDX-License-Identifier: MIT OR Apache-2.0

//! The partially ordered space of sorted probability vectors.
//!
//! `u ⪯ v` when `u` has at least as many entries as `v` and is entrywise no
//! larger on the first `dim(v)` coordinates: "more streams, each less likely
//! to have changed". Every vector is below the empty vector. `I_o(u)` is the
//! largest prefix length whose mean stays at or below `alpha`, and `H_o(u)`
//! is that prefix.

use num_bigint::BigInt;
use rand::Rng;

use super::exact::scaled;
use crate::{Error, Result};

/// Nondecreasing vector of probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedVec(Vec<f64>);

impl OrderedVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("u", "entries must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Unsorted);
        }
        Ok(Self(values))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Sorts arbitrary probabilities into an element of the ordered space.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        Self::new(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `sup { n : sum_{i<=n} u_i <= alpha n }`, evaluated exactly.
pub fn i_o(u: &OrderedVec, alpha: f64) -> usize {
    let a = scaled(alpha);
    let mut sum = BigInt::from(0);
    let mut best = 0;
    for (i, &x) in u.0.iter().enumerate() {
        sum += scaled(x);
        if sum <= &a * (i + 1) {
            best = i + 1;
        }
    }
    best
}

pub fn h_o(u: &OrderedVec, alpha: f64) -> OrderedVec {
    OrderedVec(u.0[..i_o(u, alpha)].to_vec())
}

pub fn partial_leq(u: &OrderedVec, v: &OrderedVec) -> bool {
    u.dim() >= v.dim() && u.0.iter().zip(&v.0).all(|(a, b)| a <= b)
}

fn draw_value<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    // Half the mass near the level so that prefixes straddle it often.
    if rng.random::<bool>() {
        (rng.random::<f64>() * 3.0 * alpha).min(1.0)
    } else {
        rng.random::<f64>()
    }
}

pub(crate) fn random_ordered<R: Rng + ?Sized>(rng: &mut R, alpha: f64, max_dim: usize) -> OrderedVec {
    let dim = rng.random_range(0..=max_dim);
    let v: Vec<f64> = (0..dim).map(|_| draw_value(rng, alpha)).collect();
    OrderedVec::from_unsorted(v).expect("values drawn in [0, 1]")
}

/// Draws `v`, then derives `u ⪯ v` by shrinking each entry and appending
/// extra entries. Sorting afterwards keeps `u_i <= v_i`: order statistics only
/// move down when entries shrink or new ones are added.
pub fn random_pair<R: Rng + ?Sized>(rng: &mut R, alpha: f64, max_dim: usize) -> (OrderedVec, OrderedVec) {
    let v = random_ordered(rng, alpha, max_dim);
    let below = derive_below(rng, &v, alpha);
    (below, v)
}

fn derive_below<R: Rng + ?Sized>(rng: &mut R, v: &OrderedVec, alpha: f64) -> OrderedVec {
    let mut u: Vec<f64> = v
        .0
        .iter()
        .map(|&x| match rng.random_range(0..3) {
            0 => x,
            1 => x * rng.random::<f64>(),
            _ => (x - rng.random::<f64>() * alpha).max(0.0),
        })
        .collect();
    let extra = rng.random_range(0..=3);
    u.extend((0..extra).map(|_| draw_value(rng, alpha)));
    OrderedVec::from_unsorted(u).expect("values stay in [0, 1]")
}

/// A pair violating monotonicity of `H_o`.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub u: OrderedVec,
    pub v: OrderedVec,
    pub h_u: OrderedVec,
    pub h_v: OrderedVec,
}

/// Samples `n_trials` pairs `u ⪯ v` and checks `H_o(u) ⪯ H_o(v)`.
pub fn h_o_monotone_check<R: Rng + ?Sized>(n_trials: usize, alpha: f64, rng: &mut R) -> std::result::Result<(), Counterexample> {
    for _ in 0..n_trials {
        let (u, v) = random_pair(rng, alpha, 10);
        debug_assert!(partial_leq(&u, &v));
        let (h_u, h_v) = (h_o(&u, alpha), h_o(&v, alpha));
        if !partial_leq(&h_u, &h_v) {
            return Err(Counterexample { u, v, h_u, h_v });
        }
    }
    Ok(())
}

/// Checks reflexivity, antisymmetry on equal dimensions and transitivity of
/// `⪯` on random triples (chains `u ⪯ v ⪯ w` plus unrelated triples).
pub fn partial_order_axioms<R: Rng + ?Sized>(n_trials: usize, rng: &mut R) -> std::result::Result<(), String> {
    for trial in 0..n_trials {
        let (u, v, w) = if trial % 2 == 0 {
            let w = random_ordered(rng, 0.1, 8);
            let v = derive_below(rng, &w, 0.1);
            let u = derive_below(rng, &v, 0.1);
            (u, v, w)
        } else {
            (random_ordered(rng, 0.1, 3), random_ordered(rng, 0.1, 3), random_ordered(rng, 0.1, 3))
        };
        for x in [&u, &v, &w] {
            if !partial_leq(x, x) {
                return Err(format!("reflexivity fails for {x:?}"));
            }
            if !partial_leq(x, &OrderedVec::empty()) {
                return Err(format!("{x:?} is not below the empty vector"));
            }
        }
        for (a, b) in [(&u, &v), (&v, &w), (&u, &w)] {
            if a.dim() == b.dim() && partial_leq(a, b) && partial_leq(b, a) && a != b {
                return Err(format!("antisymmetry fails for {a:?}, {b:?}"));
            }
        }
        if partial_leq(&u, &v) && partial_leq(&v, &w) && !partial_leq(&u, &w) {
            return Err(format!("transitivity fails for {u:?}, {v:?}, {w:?}"));
        }
        if trial % 2 == 0 && !(partial_leq(&u, &v) && partial_leq(&v, &w)) {
            return Err(format!("generated chain is not ordered: {u:?}, {v:?}, {w:?}"));
        }
    }
    Ok(())
}
