//! Separability index and the gradient-guided split search used by targeted
//! cuts.

use crate::error::{Error, Result};

/// Added to the summed side variances so perfectly separable splits stay
/// finite.
pub const SEPARATION_EPS: f64 = 1e-12;

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let (sum, n) = values
        .clone()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var, n)
}

/// Separability of splitting `values` at `v` (left: `x < v`, right: `x ≥ v`):
/// `|E_left − E_right| · Var(all) / (Var_left + Var_right + ε)` with
/// population variances.
pub fn separation(values: &[f64], v: f64) -> Result<f64> {
    let left = values.iter().copied().filter(|&x| x < v);
    let right = values.iter().copied().filter(|&x| x >= v);
    if left.clone().next().is_none() || right.clone().next().is_none() {
        return Err(Error::UndefinedSplit { value: v });
    }
    let (ml, vl, _) = mean_var(left);
    let (mr, vr, _) = mean_var(right);
    let (_, var, _) = mean_var(values.iter().copied());
    Ok((ml - mr).abs() * var / (vl + vr + SEPARATION_EPS))
}

/// Slope of the separability index between the candidate splits at
/// `sorted[i]` and `sorted[i + 1]`.
pub fn gradient(sorted: &[f64], i: usize) -> Result<f64> {
    if i + 1 >= sorted.len() {
        return Err(Error::Parameter(format!(
            "gradient index {i} needs a successor in {} values",
            sorted.len()
        )));
    }
    let (a, b) = (sorted[i], sorted[i + 1]);
    if a == b {
        return Err(Error::Parameter(format!(
            "gradient undefined between equal values at index {i}"
        )));
    }
    Ok((separation(sorted, b)? - separation(sorted, a)?) / (b - a))
}

/// Next scan step for a list of `n_values` given the separability gradient.
/// Falling separability takes long strides; rising separability takes short
/// ones. Never less than 1.
pub fn update_step(gradient: f64, n_values: usize) -> usize {
    let n = n_values as f64;
    let logistic = 1.0 / (1.0 + (gradient * n.log10()).exp());
    let raw = if gradient < 0.0 {
        3.0 * logistic * n / 100.0
    } else {
        (0.7 - 1.3 * logistic) * n / 100.0
    };
    let step = raw.round();
    if step.is_finite() && step >= 1.0 {
        step as usize
    } else {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparabilityScan {
    /// Split value; `x < best_split` goes left.
    pub best_split: f64,
    pub highest_separation: f64,
    /// Distinct candidate splits whose separability was computed.
    pub evaluations: usize,
}

/// Ascending values with centered prefix sums, giving O(1) separability for
/// any split that falls between two distinct neighbours.
pub(crate) struct SortedAttribute {
    pub(crate) values: Vec<f64>,
    sums: Vec<f64>,
    squares: Vec<f64>,
    total_var: f64,
}

impl SortedAttribute {
    pub(crate) fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sums = Vec::with_capacity(n + 1);
        let mut squares = Vec::with_capacity(n + 1);
        let (mut s, mut q) = (0.0, 0.0);
        sums.push(0.0);
        squares.push(0.0);
        for &v in &values {
            let d = v - mean;
            s += d;
            q += d * d;
            sums.push(s);
            squares.push(q);
        }
        let total_var = q / n as f64;
        Self {
            values,
            sums,
            squares,
            total_var,
        }
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    /// Separability of the split placing indices `[0, i)` left and `[i, n)`
    /// right. Requires `0 < i < n`.
    pub(crate) fn separation_at(&self, i: usize) -> f64 {
        let n = self.len();
        let (nl, nr) = (i as f64, (n - i) as f64);
        let ml = self.sums[i] / nl;
        let mr = (self.sums[n] - self.sums[i]) / nr;
        let vl = (self.squares[i] / nl - ml * ml).max(0.0);
        let vr = ((self.squares[n] - self.squares[i]) / nr - mr * mr).max(0.0);
        (ml - mr).abs() * self.total_var / (vl + vr + SEPARATION_EPS)
    }

    /// Split value equivalent to cutting before index `i`.
    pub(crate) fn split_before(&self, i: usize) -> f64 {
        let (a, b) = (self.values[i - 1], self.values[i]);
        let mid = a + (b - a) / 2.0;
        if mid > a {
            mid
        } else {
            b
        }
    }

    /// Smallest index `j ≥ from` starting a new distinct value, or `n`.
    fn next_distinct(&self, from: usize) -> usize {
        let mut j = from.max(1);
        while j < self.len() && self.values[j] == self.values[j - 1] {
            j += 1;
        }
        j
    }
}

/// Approximate best split of one attribute: walks the sorted values with an
/// adaptive stride driven by the local gradient of the separability index,
/// skipping values unlikely to hold the optimum.
pub fn gradient_split(values: &[f64]) -> Result<SeparabilityScan> {
    if values.is_empty() {
        return Err(Error::Parameter("cannot split an empty attribute".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "attribute contains non-finite values".into(),
        ));
    }
    Ok(scan(&SortedAttribute::new(values.to_vec())))
}

struct Walk<'a> {
    attr: &'a SortedAttribute,
    visited: Vec<bool>,
    evaluations: usize,
    best: f64,
    best_i: usize,
}

impl Walk<'_> {
    fn eval(&mut self, i: usize) -> f64 {
        let s = self.attr.separation_at(i);
        if !self.visited[i] {
            self.visited[i] = true;
            self.evaluations += 1;
        }
        if s > self.best {
            self.best = s;
            self.best_i = i;
        }
        s
    }
}

pub(crate) fn scan(attr: &SortedAttribute) -> SeparabilityScan {
    let n = attr.len();
    let first = attr.next_distinct(1);
    if first >= n {
        return SeparabilityScan {
            best_split: attr.values[0],
            highest_separation: 0.0,
            evaluations: 0,
        };
    }

    let mut walk = Walk {
        attr,
        visited: vec![false; n],
        evaluations: 0,
        best: f64::NEG_INFINITY,
        best_i: first,
    };
    walk.eval(first);
    let mut i = first;
    let mut step = ((n as f64) * 0.001).ceil().max(1.0) as usize;
    loop {
        // a stride past the end lands on the last candidate instead
        let target = attr.next_distinct(i + step);
        if target >= n {
            if !walk.visited[n - 1] && attr.values[n - 1] > attr.values[n - 2] {
                walk.eval(n - 1);
            }
            break;
        }
        i = target;
        let here = walk.eval(i);
        let j = attr.next_distinct(i + 1);
        if j >= n {
            break;
        }
        let there = walk.eval(j);
        let g = (there - here) / (attr.values[j] - attr.values[i]);
        step = update_step(g, n);
        if step == 1 {
            // the successor is already evaluated; continue from it
            i = j;
            step = 0;
        }
    }

    SeparabilityScan {
        best_split: attr.split_before(walk.best_i),
        highest_separation: walk.best,
        evaluations: walk.evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Every candidate split between distinct neighbours, evaluated with the
    /// direct formula.
    fn exhaustive(values: &[f64]) -> (f64, f64) {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for w in v.windows(2) {
            if w[0] < w[1] {
                let mid = (w[0] + w[1]) / 2.0;
                let s = separation(&v, mid).unwrap();
                if s > best.1 {
                    best = (mid, s);
                }
            }
        }
        best
    }

    #[test]
    fn separation_hand_value() {
        let x = [1.0, 2.0, 3.0, 11.0, 12.0, 13.0];
        let s = separation(&x, 7.0).unwrap();
        let want = 10.0 * (154.0 / 6.0) / (4.0 / 3.0 + SEPARATION_EPS);
        assert!((s - want).abs() < 1e-9, "{s} vs {want}");
        assert!((s - 192.5).abs() < 1e-9);
    }

    #[test]
    fn separation_perfectly_separable_and_constant() {
        let x = [0.0, 0.0, 10.0, 10.0];
        let s = separation(&x, 5.0).unwrap();
        assert!(s.is_finite());
        assert_eq!(s, 10.0 * 25.0 / SEPARATION_EPS);
        // constant data admits no interior split at all
        assert!(matches!(
            separation(&[5.0; 4], 5.0),
            Err(Error::UndefinedSplit { .. })
        ));
        assert_eq!(gradient_split(&[5.0; 4]).unwrap().highest_separation, 0.0);
    }

    #[test]
    fn separation_empty_side() {
        assert!(matches!(
            separation(&[1.0, 2.0, 3.0], 1.0),
            Err(Error::UndefinedSplit { .. })
        ));
        assert!(matches!(
            separation(&[1.0, 2.0, 3.0], 3.5),
            Err(Error::UndefinedSplit { .. })
        ));
    }

    #[test]
    fn gradient_matches_direct_formula() {
        let x = [1.0, 2.0, 3.0, 11.0, 12.0, 13.0];
        for i in 1..4 {
            let g = gradient(&x, i).unwrap();
            let want = (separation(&x, x[i + 1]).unwrap() - separation(&x, x[i]).unwrap())
                / (x[i + 1] - x[i]);
            assert_eq!(g, want);
        }
        assert!(gradient(&[1.0, 1.0, 2.0], 0).is_err());
        assert!(gradient(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn prefix_separation_agrees_with_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..200).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let attr = SortedAttribute::new(values);
        for i in 1..attr.values.len() {
            if attr.values[i] == attr.values[i - 1] {
                continue;
            }
            let direct = separation(&attr.values, attr.values[i]).unwrap();
            let fast = attr.separation_at(i);
            assert!(
                (direct - fast).abs() <= 1e-9 * direct.max(1.0),
                "{i}: {direct} {fast}"
            );
        }
    }

    #[test]
    fn step_limits() {
        assert_eq!(update_step(f64::NEG_INFINITY, 100), 3);
        assert_eq!(update_step(-1e6, 100), 3);
        assert_eq!(update_step(0.0, 100), 1);
        assert_eq!(update_step(f64::INFINITY, 1000), 7);
        // G = 0 from either side at n = 100: 1.5 vs 0.05
        let n = 100.0f64;
        let neg = 3.0 / (1.0 + (-1e-300f64 * n.log10()).exp()) * n / 100.0;
        let pos = (0.7 - 1.3 / (1.0 + (0.0f64 * n.log10()).exp())) * n / 100.0;
        assert!((neg - 1.5).abs() < 1e-12 && (pos - 0.05).abs() < 1e-12);
        assert_eq!(update_step(-1e-300, 100), neg.round() as usize);
        assert_eq!(update_step(0.0, 100), 1);
    }

    #[test]
    fn two_small_clusters() {
        let x = [0.0, 1.0, 2.0, 100.0, 101.0, 102.0];
        let scan = gradient_split(&x).unwrap();
        assert!(scan.best_split > 2.0 && scan.best_split < 100.0);
        let (_, max) = exhaustive(&x);
        assert!((scan.highest_separation - max).abs() <= 1e-9 * max);
    }

    #[test]
    fn constant_attribute_is_degenerate() {
        let scan = gradient_split(&[7.0, 7.0, 7.0]).unwrap();
        assert_eq!(scan.best_split, 7.0);
        assert_eq!(scan.highest_separation, 0.0);
        assert_eq!(scan.evaluations, 0);
    }

    #[test]
    fn planted_outlier_scan_skips_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x: Vec<f64> = (0..999).map(|_| rng.gen_range(0.0..1.0)).collect();
        x.push(25.0);
        let scan = gradient_split(&x).unwrap();
        let (_, max) = exhaustive(&x);
        assert!(scan.evaluations < 999, "{}", scan.evaluations);
        assert!(scan.highest_separation >= 0.9 * max);
    }

    #[test]
    fn split_with_duplicates() {
        let x = [3.0, 1.0, 1.0, 1.0, 3.0, 9.0, 9.0];
        let scan = gradient_split(&x).unwrap();
        let (_, max) = exhaustive(&x);
        assert!((scan.highest_separation - max).abs() <= 1e-9 * max);
        let left = x.iter().filter(|&&v| v < scan.best_split).count();
        assert!(left > 0 && left < x.len());
    }

    #[test]
    fn adjacent_float_split_stays_interior() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let scan = gradient_split(&[a, b]).unwrap();
        assert!(a < scan.best_split && scan.best_split <= b);
    }

    proptest! {
        #[test]
        fn never_beats_exhaustive(values in prop::collection::vec(-100.0f64..100.0, 2..120)) {
            let scan = gradient_split(&values).unwrap();
            let (_, max) = exhaustive(&values);
            if max.is_finite() {
                prop_assert!(scan.highest_separation <= max * (1.0 + 1e-9) + 1e-9);
                prop_assert!(scan.highest_separation >= 0.0);
                let left = values.iter().filter(|&&v| v < scan.best_split).count();
                prop_assert!(left > 0 && left < values.len());
            }
        }

        #[test]
        fn separation_non_negative(values in prop::collection::vec(-10.0f64..10.0, 2..40), t in 0.0f64..1.0) {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi > lo);
            let v = lo + (hi - lo) * t;
            prop_assume!(v > lo);
            prop_assert!(separation(&values, v).unwrap() >= 0.0);
        }
    }
}
