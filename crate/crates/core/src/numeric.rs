// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small floating-point helpers shared by the posterior and selection code.

/// `ln(exp(a) + exp(b))`, exact at the infinities.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum(exp(x)))` over a slice; `-inf` for an empty slice.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Double-double running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    hi: f64,
    lo: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = fast_two_sum(s, e + self.lo);
        self.hi = hi;
        self.lo = lo;
    }

    pub(crate) fn value(&self) -> f64 {
        self.hi + self.lo
    }

    /// `sum / n <= alpha`, decided as `sum - alpha * n <= 0` with the product
    /// carried exactly through an FMA residual.
    pub(crate) fn mean_at_most(&self, n: usize, alpha: f64) -> bool {
        let nf = n as f64;
        let p = alpha * nf;
        let pe = alpha.mul_add(nf, -p);
        let (d, de) = two_sum(self.hi, -p);
        d + (de + (self.lo - pe)) <= 0.0
    }
}

/// Mean of a sequence with compensated summation; 0 for an empty sequence.
pub(crate) fn compensated_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = CompensatedSum::default();
    let mut n = 0usize;
    for v in values {
        sum.add(v);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum.value() / n as f64
    }
}

/// Largest `n` such that the mean of the first `n` sorted values is at most
/// `alpha`. Scans every prefix: the prefix means are not monotone in `n`.
pub(crate) fn largest_feasible_prefix(sorted: impl IntoIterator<Item = f64>, alpha: f64) -> usize {
    let mut sum = CompensatedSum::default();
    let mut best = 0;
    for (i, w) in sorted.into_iter().enumerate() {
        sum.add(w);
        if sum.mean_at_most(i + 1, alpha) {
            best = i + 1;
        }
    }
    best
}
