//! Integer cumulative-frequency tables, the only probability form the coder
//! consumes.
//!
//! Quantization is largest-remainder rounding of `p_i * 2^F` followed by a
//! zero repair: every symbol that rounded to zero is raised to one, and the
//! surplus is taken back one unit at a time from whichever frequency is
//! currently largest. Among equal largest frequencies the lowest index gives
//! first, except that the input's most probable symbol gives last, so it
//! stays a mode of the table. Remainder ties are broken by lowest symbol
//! index. All three entry points (float, exact integer weights,
//! sparse integer weights) apply the same rule and agree bit-for-bit when
//! fed the same weights.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Largest supported frequency precision, in bits.
pub const MAX_PRECISION: u32 = 30;

/// Tolerance on `|sum(probs) - 1|` accepted by [`quantize_pmf`].
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedPmf {
    precision: u32,
    cum: Vec<u32>,
}

impl QuantizedPmf {
    /// Builds a table from per-symbol frequencies, which must all be positive
    /// and sum to exactly `2^precision`.
    pub fn from_frequencies(freqs: &[u32], precision: u32) -> Result<Self> {
        check_precision(precision)?;
        if freqs.is_empty() {
            return Err(Error::InvalidPmf("empty alphabet".into()));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        cum.push(0u32);
        let mut acc = 0u64;
        for (i, &f) in freqs.iter().enumerate() {
            if f == 0 {
                return Err(Error::InvalidPmf(format!("symbol {i} has zero frequency")));
            }
            acc += u64::from(f);
            if acc > 1u64 << precision {
                return Err(Error::InvalidPmf(format!(
                    "frequencies exceed 2^{precision} at symbol {i}"
                )));
            }
            cum.push(acc as u32);
        }
        if acc != 1u64 << precision {
            return Err(Error::InvalidPmf(format!(
                "frequencies sum to {acc}, expected 2^{precision}"
            )));
        }
        Ok(QuantizedPmf { precision, cum })
    }

    /// Equal weights for every symbol; the `2^F mod n` leftover units go to
    /// the lowest symbols.
    pub fn uniform(alphabet_size: usize, precision: u32) -> Result<Self> {
        quantize_sparse(alphabet_size, &[], 1, precision)
    }

    fn from_u64_freqs(freqs: &[u64], precision: u32) -> Self {
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        cum.push(0u32);
        let mut acc = 0u64;
        for &f in freqs {
            debug_assert!(f >= 1);
            acc += f;
            cum.push(acc as u32);
        }
        debug_assert_eq!(acc, 1u64 << precision);
        QuantizedPmf { precision, cum }
    }

    pub fn alphabet_size(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn total(&self) -> u32 {
        1u32 << self.precision
    }

    pub fn cum(&self) -> &[u32] {
        &self.cum
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.cum[symbol + 1] - self.cum[symbol]
    }

    pub fn frequencies(&self) -> Vec<u32> {
        self.cum.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `[cum[s], cum[s+1])`.
    pub fn interval(&self, symbol: usize) -> (u32, u32) {
        (self.cum[symbol], self.cum[symbol + 1])
    }

    /// The symbol whose interval contains `target`; `target < total()`.
    pub fn symbol_for(&self, target: u32) -> usize {
        debug_assert!(target < self.total());
        self.cum.partition_point(|&c| c <= target) - 1
    }

    pub fn log2_prob(&self, symbol: usize) -> f64 {
        f64::from(self.freq(symbol)).log2() - f64::from(self.precision)
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        f64::from(self.freq(symbol)) / f64::from(self.total())
    }

    /// Lowest index among the most frequent symbols.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        let mut best_f = 0;
        for s in 0..self.alphabet_size() {
            let f = self.freq(s);
            if f > best_f {
                best = s;
                best_f = f;
            }
        }
        best
    }
}

fn check_precision(precision: u32) -> Result<()> {
    if precision == 0 || precision > MAX_PRECISION {
        return Err(Error::InvalidConfig(format!(
            "frequency precision must be in 1..={MAX_PRECISION}, got {precision}"
        )));
    }
    Ok(())
}

fn check_alphabet(alphabet: usize, precision: u32) -> Result<()> {
    check_precision(precision)?;
    if alphabet == 0 {
        return Err(Error::InvalidPmf("empty alphabet".into()));
    }
    if alphabet as u64 > 1u64 << precision {
        return Err(Error::AlphabetTooLarge {
            alphabet,
            precision,
        });
    }
    Ok(())
}

/// Quantizes real probabilities to a `2^precision` table.
///
/// The scaled targets are `x_i = p_i * (2^F / sum(p))`, so a distribution that
/// sums to `1 ± 1e-6` is renormalized before rounding.
pub fn quantize_pmf(probs: &[f64], precision: u32) -> Result<QuantizedPmf> {
    if probs.len() < 2 {
        return Err(Error::InvalidPmf(format!(
            "need at least 2 symbols, got {}",
            probs.len()
        )));
    }
    check_alphabet(probs.len(), precision)?;
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidPmf(format!("probability {p} at symbol {i}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidPmf(format!("probabilities sum to {sum}")));
    }

    let keep = first_argmax(probs);
    let total = (1u64 << precision) as f64;
    let scale = total / sum;
    let mut freqs = Vec::with_capacity(probs.len());
    let mut rems = Vec::with_capacity(probs.len());
    for &p in probs {
        let x = p * scale;
        let fl = x.floor();
        freqs.push(fl as u64);
        rems.push(x - fl);
    }
    let assigned: u64 = freqs.iter().sum();
    let target = 1u64 << precision;
    if assigned <= target {
        let deficit = ((target - assigned) as usize).min(freqs.len());
        let mut order: Vec<usize> = (0..freqs.len()).collect();
        select_top(&mut order, deficit, |&a, &b| {
            rems[b].total_cmp(&rems[a]).then(a.cmp(&b))
        });
        for &i in &order[..deficit] {
            freqs[i] += 1;
        }
        // Floating-point slack can leave the count short by a unit or two
        // when nearly every remainder is close to one.
        let still = target - freqs.iter().sum::<u64>();
        freqs[keep] += still;
    } else {
        take_from_largest(&mut freqs, assigned - target, keep);
    }
    repair_zeros(&mut freqs, keep);
    Ok(QuantizedPmf::from_u64_freqs(&freqs, precision))
}

/// Quantizes non-negative integer weights exactly: `x_i = w_i * 2^F / sum(w)`
/// in rational arithmetic.
pub fn quantize_weights(weights: &[u64], precision: u32) -> Result<QuantizedPmf> {
    check_alphabet(weights.len(), precision)?;
    let total_weight: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if total_weight == 0 {
        return Err(Error::InvalidPmf("all weights are zero".into()));
    }
    let target = 1u128 << precision;
    let mut freqs = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for &w in weights {
        let x = u128::from(w) * target;
        freqs.push((x / total_weight) as u64);
        rems.push(x % total_weight);
    }
    let assigned: u64 = freqs.iter().sum();
    let deficit = (target as u64 - assigned) as usize;
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    select_top(&mut order, deficit, |&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
    for &i in &order[..deficit] {
        freqs[i] += 1;
    }
    repair_zeros(&mut freqs, first_argmax(weights));
    Ok(QuantizedPmf::from_u64_freqs(&freqs, precision))
}

/// Sparse form of [`quantize_weights`]: symbols listed in `seen` (sorted by
/// symbol, no duplicates) carry their own weight and every other symbol
/// carries `base_weight`. Costs O(alphabet) additions but only
/// O(seen) divisions.
pub fn quantize_sparse(
    alphabet_size: usize,
    seen: &[(u32, u64)],
    base_weight: u64,
    precision: u32,
) -> Result<QuantizedPmf> {
    check_alphabet(alphabet_size, precision)?;
    debug_assert!(seen.windows(2).all(|w| w[0].0 < w[1].0));
    if let Some(&(s, _)) = seen.last() {
        if s as usize >= alphabet_size {
            return Err(Error::InvalidPmf(format!("symbol {s} outside alphabet")));
        }
    }
    let unseen = (alphabet_size - seen.len()) as u128;
    let total_weight: u128 =
        seen.iter().map(|&(_, w)| u128::from(w)).sum::<u128>() + unseen * u128::from(base_weight);
    if total_weight == 0 {
        return Err(Error::InvalidPmf("all weights are zero".into()));
    }
    let target = 1u128 << precision;

    let base_x = u128::from(base_weight) * target;
    let base_floor = (base_x / total_weight) as u64;
    let base_rem = base_x % total_weight;

    let mut freqs = vec![base_floor; alphabet_size];
    let mut seen_rems: Vec<(u128, u32)> = Vec::with_capacity(seen.len());
    let mut assigned = base_floor as u128 * unseen;
    for &(s, w) in seen {
        let x = u128::from(w) * target;
        let f = (x / total_weight) as u64;
        freqs[s as usize] = f;
        assigned += u128::from(f);
        seen_rems.push((x % total_weight, s));
    }
    let mut deficit = (target - assigned) as usize;

    // Same order as the dense path: remainder descending, index ascending.
    // Unseen symbols all share `base_rem`, so they form one contiguous run of
    // that order and can be walked by index.
    let mut above: Vec<(u128, u32)> = seen_rems.iter().copied().filter(|r| r.0 > base_rem).collect();
    above.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, s) in &above {
        if deficit == 0 {
            break;
        }
        freqs[s as usize] += 1;
        deficit -= 1;
    }
    if deficit > 0 {
        let mut next_seen = 0;
        for (idx, f) in freqs.iter_mut().enumerate().take(alphabet_size) {
            if deficit == 0 {
                break;
            }
            let rem = if next_seen < seen.len() && seen[next_seen].0 as usize == idx {
                next_seen += 1;
                seen_rems[next_seen - 1].0
            } else {
                base_rem
            };
            if rem == base_rem {
                *f += 1;
                deficit -= 1;
            }
        }
    }
    if deficit > 0 {
        let mut below: Vec<(u128, u32)> =
            seen_rems.iter().copied().filter(|r| r.0 < base_rem).collect();
        below.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, s) in below.iter().take(deficit) {
            freqs[s as usize] += 1;
        }
    }
    let mut keep: Option<(u64, usize)> = None;
    for &(s, w) in seen {
        if keep.is_none_or(|(kw, _)| w > kw) {
            keep = Some((w, s as usize));
        }
    }
    if unseen > 0 {
        let first_unseen = seen
            .iter()
            .enumerate()
            .find(|&(i, &(s, _))| s as usize != i)
            .map_or(seen.len(), |(i, _)| i);
        if keep.is_none_or(|(kw, ks)| base_weight > kw || (base_weight == kw && first_unseen < ks)) {
            keep = Some((base_weight, first_unseen));
        }
    }
    repair_zeros(&mut freqs, keep.map_or(0, |k| k.1));
    Ok(QuantizedPmf::from_u64_freqs(&freqs, precision))
}

/// Moves the `k` first elements under `cmp` to the front of `order`.
fn select_top<F>(order: &mut [usize], k: usize, mut cmp: F)
where
    F: FnMut(&usize, &usize) -> Ordering,
{
    if k == 0 || k >= order.len() {
        return;
    }
    order.select_nth_unstable_by(k - 1, &mut cmp);
}

/// Lowest index of the largest value.
fn first_argmax<T: PartialOrd>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Removes `units` one at a time from the currently largest frequency.
/// Among tied maxima `keep` gives up a unit last, so a symbol that starts
/// as a mode stays one.
fn take_from_largest(freqs: &mut [u64], units: u64, keep: usize) {
    if units == 0 {
        return;
    }
    let mut heap: BinaryHeap<(u64, bool, Reverse<usize>)> =
        freqs.iter().enumerate().map(|(i, &f)| (f, i != keep, Reverse(i))).collect();
    for _ in 0..units {
        let (f, other, Reverse(i)) = heap.pop().expect("non-empty alphabet");
        debug_assert!(f > 1);
        freqs[i] = f - 1;
        heap.push((f - 1, other, Reverse(i)));
    }
}

/// Raises every zero frequency to one, paying with units from the largest.
/// `keep` is the lowest-index most likely symbol of the input.
fn repair_zeros(freqs: &mut [u64], keep: usize) {
    let zeros = freqs.iter().filter(|&&f| f == 0).count() as u64;
    if zeros == 0 {
        return;
    }
    for f in freqs.iter_mut().filter(|f| **f == 0) {
        *f = 1;
    }
    take_from_largest(freqs, zeros, keep);
}
