//! Histogram ranges of counting randvars and the log-space arithmetic used
//! to weight them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// All histograms with `buckets` entries summing to `total`, in a fixed
/// lexicographically descending order.
#[derive(Debug)]
pub struct Histograms {
    total: usize,
    buckets: usize,
    hists: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl Histograms {
    fn build(total: usize, buckets: usize) -> Self {
        let mut hists = Vec::new();
        let mut cur = vec![0u32; buckets];
        fill(&mut hists, &mut cur, 0, total as u32);
        let index = hists.iter().cloned().enumerate().map(|(i, h)| (h, i)).collect();
        Histograms { total, buckets, hists, index }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn len(&self) -> usize {
        self.hists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hists.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.hists[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.hists.iter().map(|h| h.as_slice())
    }

    pub fn index_of(&self, h: &[u32]) -> Option<usize> {
        self.index.get(h).copied()
    }
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for v in (0..=left).rev() {
        cur[pos] = v;
        fill(out, cur, pos + 1, left - v);
    }
}

/// Shared, cached histogram enumeration.
pub fn histograms(total: usize, buckets: usize) -> Arc<Histograms> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Histograms>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("histogram cache poisoned");
    guard
        .entry((total, buckets))
        .or_insert_with(|| Arc::new(Histograms::build(total, buckets)))
        .clone()
}

/// Number of histograms over `buckets` values summing to `total`:
/// C(total + buckets - 1, buckets - 1).
pub fn histogram_count(total: usize, buckets: usize) -> f64 {
    if buckets == 0 {
        return if total == 0 { 1.0 } else { 0.0 };
    }
    (ln_factorial(total + buckets - 1) - ln_factorial(total) - ln_factorial(buckets - 1))
        .exp()
        .round()
}

pub fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Mutex<Vec<f64>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| Mutex::new(vec![0.0]));
    let mut t = table.lock().expect("factorial table poisoned");
    while t.len() <= n {
        let k = t.len();
        let next = t[k - 1] + (k as f64).ln();
        t.push(next);
    }
    t[n]
}

/// ln(n! / prod h_i!)
pub fn ln_multinomial(h: &[u32]) -> f64 {
    let n: u32 = h.iter().sum();
    ln_factorial(n as usize) - h.iter().map(|&c| ln_factorial(c as usize)).sum::<f64>()
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.into_iter().collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Scale a log potential by a (possibly fractional) exponent, keeping
/// log(0) * e = log(0) for positive e.
pub fn log_pow(logv: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        0.0
    } else if logv == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        logv * exponent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boolean_histograms() {
        let h = histograms(3, 2);
        assert_eq!(h.len(), 4);
        assert_eq!(h.get(0), &[3, 0]);
        assert_eq!(h.get(3), &[0, 3]);
        assert_eq!(h.index_of(&[1, 2]), Some(2));
    }

    #[test]
    fn count_matches_enumeration() {
        for n in 0..7 {
            for k in 1..5 {
                assert_eq!(histograms(n, k).len() as f64, histogram_count(n, k), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn multinomial_small() {
        assert!((ln_multinomial(&[2, 1]).exp() - 3.0).abs() < 1e-12);
        assert!((ln_multinomial(&[1, 1, 1]).exp() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lse_handles_zeros() {
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp([0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }
}
