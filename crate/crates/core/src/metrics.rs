//! Ranking-fidelity metrics, Pareto dominance and 2-D hypervolume.
//!
//! All objectives are minimized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(val_loss, E_tok [uJ], TTFT [ms], TPOT [ms])` plus feasibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub val_loss: f64,
    pub e_tok_uj: f64,
    pub ttft_ms: f64,
    pub tpot_ms: f64,
    pub feasible: bool,
    /// Total constraint violation; zero for feasible points.
    pub violation: f64,
}

impl ObjectiveVector {
    pub fn values(&self) -> [f64; 4] {
        [self.val_loss, self.e_tok_uj, self.ttft_ms, self.tpot_ms]
    }
}

/// Pareto dominance: `a <= b` everywhere and `a < b` somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// A point under constraint-domination.
#[derive(Debug, Clone, Copy)]
pub struct Constrained<'a> {
    pub objectives: &'a [f64],
    pub feasible: bool,
    pub violation: f64,
}

/// Feasible beats infeasible; two infeasible points compare by violation;
/// two feasible points compare by Pareto dominance.
pub fn constraint_dominates(a: &Constrained<'_>, b: &Constrained<'_>) -> bool {
    match (a.feasible, b.feasible) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => dominates(a.objectives, b.objectives),
        (false, false) => a.violation < b.violation,
    }
}

/// Indices of the non-dominated points, in input order.
pub fn pareto_front<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .any(|p| dominates(p.as_ref(), points[i].as_ref()))
        })
        .collect()
}

/// Non-dominated indices under constraint-domination.
pub fn pareto_front_constrained(points: &[Constrained<'_>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|p| constraint_dominates(p, &points[i])))
        .collect()
}

/// Deb's fast non-dominated sort. Each front lists indices in ascending order.
pub fn fast_non_dominated_sort(points: &[Constrained<'_>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dom_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constraint_dominates(&points[i], &points[j]) {
                dominated_by_me[i].push(j);
                dom_count[j] += 1;
            } else if constraint_dominates(&points[j], &points[i]) {
                dominated_by_me[j].push(i);
                dom_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dom_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                dom_count[j] -= 1;
                if dom_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Crowding distance of each point within one front. Boundary points get
/// `+inf`; objectives whose spread is zero or non-finite contribute nothing
/// to interior points.
pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let key = |i: usize| front[i].as_ref()[k];
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = key(order[n - 1]) - key(order[0]);
        if !span.is_finite() || span <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = key(order[w + 1]) - key(order[w - 1]);
            if gap.is_finite() {
                dist[order[w]] += gap / span;
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypervolume {
    pub value: f64,
    /// Points that did not strictly dominate the reference point.
    pub excluded: usize,
}

/// Area dominated by `front` and bounded by `reference` (minimization).
pub fn hypervolume_2d(front: &[(f64, f64)], reference: (f64, f64)) -> Hypervolume {
    let mut pts: Vec<(f64, f64)> = front
        .iter()
        .copied()
        .filter(|&(a, b)| a < reference.0 && b < reference.1)
        .collect();
    let excluded = front.len() - pts.len();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut value = 0.0;
    let mut best_f2 = reference.1;
    // Sweep by ascending f1: each point that improves f2 adds the slab
    // between its f2 and the previous best, spanning to the reference f1.
    for &(f1, f2) in &pts {
        if f2 < best_f2 {
            value += (reference.0 - f1) * (best_f2 - f2);
            best_f2 = f2;
        }
    }
    Hypervolume { value, excluded }
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::domain(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::domain("need at least two observations"));
    }
    Ok(())
}

fn tie_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Merge sort on `v`, returning the number of inversions.
fn count_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], &mut buf[..mid]);
    swaps += count_inversions(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm). Returns 0 when
/// either input is constant.
pub fn kendall_tau(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let n = pred.len() as u64;
    let mut pairs: Vec<(f64, f64)> = pred.iter().copied().zip(truth.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let n1 = tie_pairs(pairs.iter().map(|p| p.0));
    // joint ties: runs equal in both coordinates
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = count_inversions(&mut ys, &mut buf);
    let n2 = tie_pairs(ys.iter().copied());

    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let s = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok(s / denom)
}

/// 1-based mid-ranks (ties share the average rank).
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
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

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman_rho(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pearson(&mid_ranks(pred), &mid_ranks(truth)))
}

/// `ceil(x * n)` clamped to `[1, n]`, tolerant of representation error in `x`.
pub fn top_count(x: f64, n: usize) -> usize {
    (((x * n as f64) - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Indices sorted ascending by value, ties by index.
fn ascending(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    order
}

/// Smallest `k` such that the `k` best predictions contain the true top
/// `ceil(x * n)` items. Lower is better for both inputs.
pub fn k_at_x(pred: &[f64], truth: &[f64], x: f64) -> Result<usize> {
    check_pair(pred, truth)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::domain(format!("fraction {x} outside (0, 1]")));
    }
    let m = top_count(x, truth.len());
    let mut position = vec![0usize; pred.len()];
    for (pos, i) in ascending(pred).into_iter().enumerate() {
        position[i] = pos;
    }
    Ok(ascending(truth)[..m]
        .iter()
        .map(|&i| position[i] + 1)
        .max()
        .unwrap_or(0))
}

/// Mean absolute error over the true top `ceil(x * n)` rows.
pub fn mae_at_top(pred: &[f64], truth: &[f64], x: f64) -> Result<f64> {
    check_pair(pred, truth)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::domain(format!("fraction {x} outside (0, 1]")));
    }
    let top = &ascending(truth)[..top_count(x, truth.len())];
    Ok(top.iter().map(|&i| (pred[i] - truth[i]).abs()).sum::<f64>() / top.len() as f64)
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// The surrogate-quality block reported for a held-out split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tau: f64,
    pub rho: f64,
    pub mae: f64,
    pub mae_at_5pct: f64,
    pub k_at_1pct: usize,
    pub k_at_5pct: usize,
}

impl MetricsReport {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            tau: kendall_tau(pred, truth)?,
            rho: spearman_rho(pred, truth)?,
            mae: mae(pred, truth)?,
            mae_at_5pct: mae_at_top(pred, truth, 0.05)?,
            k_at_1pct: k_at_x(pred, truth, 0.01)?,
            k_at_5pct: k_at_x(pred, truth, 0.05)?,
        })
    }

    fn fields(&self) -> [f64; 6] {
        [
            self.tau,
            self.rho,
            self.mae,
            self.mae_at_5pct,
            self.k_at_1pct as f64,
            self.k_at_5pct as f64,
        ]
    }
}

/// Mean and sample standard deviation of each report field over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub tau: MeanStd,
    pub rho: MeanStd,
    pub mae: MeanStd,
    pub mae_at_5pct: MeanStd,
    pub k_at_1pct: MeanStd,
    pub k_at_5pct: MeanStd,
    pub seeds: usize,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

impl MetricsSummary {
    pub fn from_reports(reports: &[MetricsReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let col = |k: usize| mean_std(&reports.iter().map(|r| r.fields()[k]).collect::<Vec<_>>());
        Some(Self {
            tau: col(0),
            rho: col(1),
            mae: col(2),
            mae_at_5pct: col(3),
            k_at_1pct: col(4),
            k_at_5pct: col(5),
            seeds: reports.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sgn(v: f64) -> f64 {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// tau-b straight from the pairwise sign definition.
    fn tau_brute(x: &[f64], y: &[f64]) -> f64 {
        let (mut s, mut tx, mut ty) = (0.0, 0.0, 0.0);
        for i in 0..x.len() {
            for j in (i + 1)..x.len() {
                let (a, b) = (sgn(x[i] - x[j]), sgn(y[i] - y[j]));
                s += a * b;
                tx += a * a;
                ty += b * b;
            }
        }
        if tx == 0.0 || ty == 0.0 {
            0.0
        } else {
            s / (tx * ty).sqrt()
        }
    }

    #[test]
    fn kendall_examples() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&t, &t).unwrap(), 1.0);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&rev, &t).unwrap(), -1.0);
        let tau = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((tau - 2.0 * 4.0 / 12.0).abs() < 1e-15);
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn kendall_with_ties_matches_definition() {
        let x = [1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 0.5];
        let y = [2.0, 1.0, 2.0, 2.0, 5.0, 5.0, 0.0];
        assert!((kendall_tau(&x, &y).unwrap() - tau_brute(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mid_ranks(&[5.0, 1.0, 5.0, 3.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn k_at_x_examples() {
        let truth: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(k_at_x(&truth, &truth, 0.05).unwrap(), 5);
        let mut pred = truth.clone();
        pred[0] = 1e9;
        assert_eq!(k_at_x(&pred, &truth, 0.01).unwrap(), 100);
        assert_eq!(
            k_at_x(&[0.2, 0.1, 0.3, 0.4], &[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(),
            2
        );
        assert!(k_at_x(&truth, &truth, 0.0).is_err());
        assert_eq!(top_count(0.07, 100), 7);
    }

    #[test]
    fn mae_examples() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mae_at_top(&t, &t, 0.5).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.25).collect();
        assert!((mae_at_top(&shifted, &t, 0.5).unwrap() - 0.25).abs() < 1e-15);
        let pred = [1.1, 2.3, 9.0, 9.0];
        assert!((mae_at_top(&pred, &t, 0.5).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn pareto_examples() {
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_front(&pts), vec![0, 1]);
        assert_eq!(pareto_front(&[vec![3.0, 3.0]]), vec![0]);
    }

    #[test]
    fn feasible_beats_infeasible() {
        let good = [9.0, 9.0];
        let bad = [0.0, 0.0];
        let a = Constrained {
            objectives: &good,
            feasible: true,
            violation: 0.0,
        };
        let b = Constrained {
            objectives: &bad,
            feasible: false,
            violation: 0.5,
        };
        let c = Constrained {
            objectives: &bad,
            feasible: false,
            violation: 0.1,
        };
        assert!(constraint_dominates(&a, &b));
        assert!(constraint_dominates(&c, &b));
        assert_eq!(pareto_front_constrained(&[b, a, c]), vec![1]);
        assert_eq!(
            fast_non_dominated_sort(&[b, a, c]),
            vec![vec![1], vec![2], vec![0]]
        );
    }

    #[test]
    fn crowding_boundaries_are_infinite() {
        let front = vec![
            vec![0.0, 3.0],
            vec![1.0, 2.0],
            vec![2.0, 1.0],
            vec![3.0, 0.0],
        ];
        let d = crowding_distance(&front);
        assert!(d[0].is_infinite() && d[3].is_infinite());
        assert!((d[1] - (2.0 / 3.0 + 2.0 / 3.0)).abs() < 1e-12);
        let with_inf = vec![
            vec![0.0, f64::INFINITY],
            vec![1.0, f64::INFINITY],
            vec![2.0, f64::INFINITY],
        ];
        assert!(crowding_distance(&with_inf).iter().all(|v| !v.is_nan()));
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume_2d(&[(1.0, 1.0)], (2.0, 2.0)).value, 1.0);
        assert_eq!(
            hypervolume_2d(&[(1.0, 2.0), (2.0, 1.0)], (3.0, 3.0)).value,
            3.0
        );
        let nested = hypervolume_2d(&[(1.0, 2.0), (2.0, 1.0), (2.5, 2.5)], (3.0, 3.0));
        assert_eq!(nested.value, 3.0);
        let outside = hypervolume_2d(&[(1.0, 1.0), (5.0, 0.0)], (2.0, 2.0));
        assert_eq!((outside.value, outside.excluded), (1.0, 1));
    }

    #[test]
    fn report_is_perfect_on_identity() {
        let t: Vec<f64> = (0..40).map(|i| 3.0 + i as f64 * 0.01).collect();
        let r = MetricsReport::compute(&t, &t).unwrap();
        assert_eq!((r.tau, r.mae, r.k_at_1pct, r.k_at_5pct), (1.0, 0.0, 1, 2));
        assert!((r.rho - 1.0).abs() < 1e-12);
        let s = MetricsSummary::from_reports(&[r, r]).unwrap();
        assert_eq!(s.tau.std, 0.0);
    }

    fn vectors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0i32..8, n),
                prop::collection::vec(-50.0f64..50.0, n),
            )
                .prop_map(|(a, b)| (a.into_iter().map(f64::from).collect(), b))
        })
    }

    proptest! {
        #[test]
        fn rank_metrics_invariant_under_monotone_transform((pred, truth) in vectors()) {
            let warped: Vec<f64> = pred.iter().map(|v| (v * 0.3).exp() + 2.0).collect();
            prop_assert!((kendall_tau(&pred, &truth).unwrap() - kendall_tau(&warped, &truth).unwrap()).abs() < 1e-12);
            prop_assert!((spearman_rho(&pred, &truth).unwrap() - spearman_rho(&warped, &truth).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn front_is_mutually_non_dominated(pts in prop::collection::vec(prop::collection::vec(0i32..6, 3), 1..25)) {
            let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p.into_iter().map(f64::from).collect()).collect();
            let front = pareto_front(&pts);
            for &i in &front {
                for &j in &front {
                    prop_assert!(!dominates(&pts[i], &pts[j]));
                }
            }
            // adding a dominated point leaves the front unchanged
            let worst: Vec<f64> = (0..3).map(|k| pts.iter().map(|p| p[k]).fold(f64::MIN, f64::max) + 1.0).collect();
            let mut more = pts.clone();
            more.push(worst);
            prop_assert_eq!(pareto_front(&more), front);
        }

        #[test]
        fn hypervolume_is_monotone(pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..20), extra in (0.0f64..10.0, 0.0f64..10.0)) {
            let r = (10.0, 10.0);
            let base = hypervolume_2d(&pts, r).value;
            let mut more = pts.clone();
            more.push(extra);
            prop_assert!(hypervolume_2d(&more, r).value >= base - 1e-12);
        }

        #[test]
        fn k_at_x_never_improves_after_swap(n in 10usize..60, x in 0.05f64..0.5, seed in 0u64..1000) {
            let truth: Vec<f64> = (0..n).map(|i| ((i as u64 * 7919 + seed) % 1009) as f64).collect();
            let pred = truth.clone();
            let base = k_at_x(&pred, &truth, x).unwrap();
            // swap the best predicted item with the worst one
            let order = ascending(&pred);
            let mut worse = pred.clone();
            worse.swap(order[0], order[n - 1]);
            prop_assert!(k_at_x(&worse, &truth, x).unwrap() >= base);
        }
    }
}
