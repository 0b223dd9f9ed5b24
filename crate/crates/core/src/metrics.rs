//! Clustering and retrieval scores: NMI over k-means clusters, Recall@K and
//! its average over K.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, sq_dist, Matrix, RngState};

pub const DEFAULT_KS: [usize; 6] = [1, 2, 4, 8, 16, 32];
pub const DEFAULT_RESTARTS: usize = 8;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignments: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    pub fn new(assignments: Vec<usize>, num_clusters: usize) -> Result<Self> {
        if let Some(&label) = assignments.iter().find(|&&a| a >= num_clusters) {
            return Err(Error::LabelOutOfRange { label, classes: num_clusters });
        }
        Ok(Partition { assignments, num_clusters })
    }

    /// Cluster count is one past the largest id.
    pub fn from_labels(labels: &[usize]) -> Self {
        let num_clusters = labels.iter().max().map_or(0, |m| m + 1);
        Partition { assignments: labels.to_vec(), num_clusters }
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub partition: Partition,
    pub centroids: Matrix,
    pub wcss: f64,
    /// WCSS after each Lloyd iteration of the winning restart.
    pub trace: Vec<f64>,
}

/// Within-cluster sum of squares of `assignments` around their own means.
pub fn wcss(e: &Matrix, assignments: &[usize], k: usize) -> f64 {
    let centroids = cluster_means(e, assignments, k);
    assignments
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, &a)| acc + sq_dist(e.row(i), centroids.row(a)))
}

fn cluster_means(e: &Matrix, assignments: &[usize], k: usize) -> Matrix {
    let d = e.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        sums.row_mut(a).iter_mut().zip(e.row(i)).for_each(|(s, x)| *s += x);
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums.row_mut(c).iter_mut().for_each(|s| *s /= n as f64);
        }
    }
    sums
}

fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.iter_rows().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(e: &Matrix, k: usize, rng: &mut RngState) -> Matrix {
    let n = e.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(e.row(i), e.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` a hair under `target`; fall back to the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // Every point coincides with a chosen seed.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.below(free.len())]
        };
        chosen.push(next);
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(e.row(i), e.row(next)));
        }
    }
    let rows: Vec<Vec<f64>> = chosen.iter().map(|&i| e.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).expect("equal widths")
}

/// Moves the farthest points of multi-member clusters into empty ones.
fn fill_empty(e: &Matrix, assignments: &mut [usize], dists: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..e.rows() {
            if counts[assignments[i]] > 1 && far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("k <= n leaves a multi-member cluster");
        counts[assignments[i]] -= 1;
        counts[empty] = 1;
        assignments[i] = empty;
        dists[i] = 0.0;
    }
}

fn lloyd(e: &Matrix, k: usize, max_iter: usize, rng: &mut RngState) -> (Vec<usize>, Matrix, Vec<f64>) {
    let n = e.rows();
    let mut centroids = plus_plus_seeds(e, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut next = vec![0usize; n];
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(e.row(i), &centroids);
            next[i] = c;
            dists[i] = d;
        }
        fill_empty(e, &mut next, &mut dists, k);
        let converged = next == assignments;
        assignments = next;
        centroids = cluster_means(e, &assignments, k);
        trace.push(
            assignments
                .iter()
                .enumerate()
                .fold(0.0, |acc, (i, &a)| acc + sq_dist(e.row(i), centroids.row(a))),
        );
        if converged {
            break;
        }
    }
    (assignments, centroids, trace)
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` by WCSS.
pub fn kmeans(e: &Matrix, k: usize, restarts: usize, max_iter: usize, seed: u64) -> Result<KMeansFit> {
    let n = e.rows();
    if n == 0 {
        return Err(Error::EmptyInput("kmeans input"));
    }
    if k == 0 || k > n {
        return Err(Error::Config(format!("kmeans needs 1 <= K <= N, got K={k}, N={n}")));
    }
    if restarts == 0 {
        return Err(Error::Config("kmeans needs at least one restart".into()));
    }
    let mut root = RngState::new(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts {
        let mut rng = root.split();
        let (assignments, centroids, trace) = lloyd(e, k, max_iter, &mut rng);
        let score = *trace.last().expect("at least one iteration");
        if best.as_ref().is_none_or(|b| score < b.wcss) {
            best = Some(KMeansFit {
                partition: Partition { assignments, num_clusters: k },
                centroids,
                wcss: score,
                trace,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .fold(0.0, |acc, &c| {
            let p = c as f64 / n;
            acc - p * p.ln()
        })
}

/// Mutual information over the mean of the two entropies (natural log).
/// Two single-cluster partitions score 1.
pub fn nmi(pred: &Partition, truth: &Partition) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("nmi partitions"));
    }
    let n = pred.len() as f64;
    let (kp, kt) = (pred.num_clusters, truth.num_clusters);
    let mut joint = vec![0usize; kp * kt];
    let mut a = vec![0usize; kp];
    let mut b = vec![0usize; kt];
    for (&p, &t) in pred.assignments.iter().zip(&truth.assignments) {
        joint[p * kt + t] += 1;
        a[p] += 1;
        b[t] += 1;
    }
    let (ha, hb) = (entropy(&a, n), entropy(&b, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for p in 0..kp {
        for t in 0..kt {
            let nij = joint[p * kt + t];
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (a[p] as f64 * b[t] as f64)).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

/// Rank (0-based) of each query's first same-label neighbor in its sorted
/// neighbor list; `None` when the label is unique. Ties in distance go to
/// the lower index.
fn first_hit_ranks(e: &Matrix, labels: &[usize]) -> Vec<Option<usize>> {
    let n = e.rows();
    (0..n)
        .map(|i| {
            let dists: Vec<f64> = (0..n).map(|j| sq_dist(e.row(i), e.row(j))).collect();
            let hit = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .min_by(|&x, &y| dists[x].total_cmp(&dists[y]).then(x.cmp(&y)))?;
            let before = (0..n)
                .filter(|&j| j != i && (dists[j] < dists[hit] || (dists[j] == dists[hit] && j < hit)))
                .count();
            Some(before)
        })
        .collect()
}

/// Fraction of queries with a same-label sample among their K nearest
/// neighbors (self excluded), for each K.
pub fn recall_at_k(e: &Matrix, labels: &[usize], ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let n = e.rows();
    if labels.len() != n {
        return Err(Error::Dimension { expected: n, found: labels.len() });
    }
    if ks.is_empty() {
        return Err(Error::Config("recall needs at least one K".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= n) {
        return Err(Error::Config(format!("recall needs 1 <= K < N, got K={k}, N={n}")));
    }
    let ranks = first_hit_ranks(e, labels);
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r < k)).count();
            (k, hits as f64 / n as f64)
        })
        .collect())
}

pub fn recall_average(recalls: &BTreeMap<usize, f64>) -> Result<f64> {
    if recalls.is_empty() {
        return Err(Error::EmptyInput("recall map"));
    }
    Ok(recalls.values().sum::<f64>() / recalls.len() as f64)
}

/// Default K list restricted to K < n.
pub fn default_ks(n: usize) -> Vec<usize> {
    DEFAULT_KS.iter().copied().filter(|&k| k < n).collect()
}

/// Row-wise L2 normalization; zero rows stay zero.
pub fn normalize_rows(e: &Matrix) -> Matrix {
    let mut out = e.clone();
    for i in 0..out.rows() {
        let norm = l2_norm(out.row(i));
        if norm > 0.0 {
            out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nmi: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub recall_average: f64,
    pub seed: u64,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Retrieval cut-offs; empty means the default list truncated to K < N.
    pub ks: Vec<usize>,
    pub restarts: usize,
    pub max_iter: usize,
    /// Rank neighbors on L2-normalized embeddings.
    pub normalize: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: Vec::new(),
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
            normalize: false,
        }
    }
}

/// NMI with K equal to the number of labels present, plus Recall@K.
pub fn evaluate(e: &Matrix, labels: &[usize], cfg: &EvalConfig, seed: u64, fingerprint: &str) -> Result<EvalReport> {
    let truth = Partition::from_labels(labels);
    let present = {
        let mut seen = vec![false; truth.num_clusters()];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    let fit = kmeans(e, present.max(1), cfg.restarts, cfg.max_iter, seed)?;
    let nmi = nmi(&fit.partition, &truth)?;
    let ks = if cfg.ks.is_empty() { default_ks(e.rows()) } else { cfg.ks.clone() };
    let retrieval = if cfg.normalize { normalize_rows(e) } else { e.clone() };
    let recall_at = recall_at_k(&retrieval, labels, &ks)?;
    let recall_average = recall_average(&recall_at)?;
    Ok(EvalReport {
        nmi,
        recall_at,
        recall_average,
        seed,
        config_fingerprint: fingerprint.to_string(),
    })
}

/// Text table with columns NMI, R@K for each K ascending, R@Average;
/// values in percent.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let mut header = vec!["NMI".to_string()];
    header.extend(first.recall_at.keys().map(|k| format!("R@{k}")));
    header.push("R@Average".into());
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<name_width$}", "method");
    for h in &header {
        write!(out, " | {h:>9}").expect("string write");
    }
    out.push('\n');
    for (name, report) in rows {
        write!(out, "{name:<name_width$} | {:>9.2}", 100.0 * report.nmi).expect("string write");
        for v in report.recall_at.values() {
            write!(out, " | {:>9.2}", 100.0 * v).expect("string write");
        }
        writeln!(out, " | {:>9.2}", 100.0 * report.recall_average).expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn two_blobs() -> (Matrix, Vec<usize>) {
        let mut rng = RngState::new(4);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let c = if i < 5 { 0.0 } else { 100.0 };
            rows.push(vec![c + 0.1 * rng.standard_normal(), c + 0.1 * rng.standard_normal()]);
            labels.push(usize::from(i >= 5));
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    /// Brute force over every 2-partition with both sides non-empty.
    fn exhaustive_two_wcss(e: &Matrix) -> f64 {
        let n = e.rows();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let a: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            best = best.min(wcss(e, &a, 2));
        }
        best
    }

    /// Entropies and MI from explicit probability tables.
    fn nmi_oracle(p: &[usize], t: &[usize]) -> f64 {
        let n = p.len() as f64;
        let kp = p.iter().max().unwrap() + 1;
        let kt = t.iter().max().unwrap() + 1;
        let h = |xs: &[usize], k: usize| -> f64 {
            (0..k)
                .map(|c| xs.iter().filter(|&&x| x == c).count() as f64 / n)
                .filter(|&q| q > 0.0)
                .map(|q| -q * q.ln())
                .sum()
        };
        let mut mi = 0.0;
        for a in 0..kp {
            for b in 0..kt {
                let pab = p.iter().zip(t).filter(|&(&x, &y)| x == a && y == b).count() as f64 / n;
                let pa = p.iter().filter(|&&x| x == a).count() as f64 / n;
                let pb = t.iter().filter(|&&y| y == b).count() as f64 / n;
                if pab > 0.0 {
                    mi += pab * (pab / (pa * pb)).ln();
                }
            }
        }
        let (ha, hb) = (h(p, kp), h(t, kt));
        if ha == 0.0 && hb == 0.0 {
            1.0
        } else {
            mi / ((ha + hb) / 2.0)
        }
    }

    /// Full sort of every neighbor list.
    fn recall_oracle(e: &Matrix, labels: &[usize], k: usize) -> f64 {
        let n = e.rows();
        let mut hits = 0;
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| sq_dist(e.row(i), e.row(a)).total_cmp(&sq_dist(e.row(i), e.row(b))).then(a.cmp(&b)));
            if order[..k].iter().any(|&j| labels[j] == labels[i]) {
                hits += 1;
            }
        }
        hits as f64 / n as f64
    }

    #[test]
    fn k_equals_n_isolates_points() {
        let e = m(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 3.0], &[5.0, 5.0]]);
        let fit = kmeans(&e, 4, 2, 50, 1).unwrap();
        assert_eq!(fit.wcss, 0.0);
        let mut ids = fit.partition.assignments().to_vec();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_equals_n_with_duplicates() {
        let e = m(&[&[1.0], &[1.0], &[1.0]]);
        let fit = kmeans(&e, 3, 1, 10, 3).unwrap();
        assert_eq!(fit.wcss, 0.0);
        let mut ids = fit.partition.assignments().to_vec();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn separated_blobs_recovered() {
        let (e, labels) = two_blobs();
        let fit = kmeans(&e, 2, 4, 100, 7).unwrap();
        let truth = Partition::from_labels(&labels);
        assert_eq!(nmi(&fit.partition, &truth).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let e = Matrix::zeros(3, 2);
        assert!(matches!(kmeans(&e, 4, 1, 10, 1), Err(Error::Config(_))));
        assert!(kmeans(&e, 0, 1, 10, 1).is_err());
        assert!(kmeans(&Matrix::zeros(0, 2), 1, 1, 10, 1).is_err());
    }

    #[test]
    fn kmeans_matches_exhaustive_two_partition() {
        for seed in 0..200 {
            let mut rng = RngState::new(seed);
            let rows: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.standard_normal(), rng.standard_normal()]).collect();
            let e = Matrix::from_rows(&rows).unwrap();
            // The default 8 restarts can stop in a local optimum here.
            let fit = kmeans(&e, 2, 32, DEFAULT_MAX_ITER, seed).unwrap();
            let oracle = exhaustive_two_wcss(&e);
            assert!((fit.wcss - oracle).abs() <= 1e-12 * oracle.max(1.0), "seed {seed}: {} vs {oracle}", fit.wcss);
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let (e, _) = two_blobs();
        assert_eq!(kmeans(&e, 3, 3, 100, 11).unwrap(), kmeans(&e, 3, 3, 100, 11).unwrap());
    }

    #[test]
    fn nmi_examples() {
        let a = Partition::from_labels(&[0, 0, 1, 1, 2, 2]);
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let single = Partition::from_labels(&[0, 0, 0, 0]);
        let two = Partition::from_labels(&[0, 0, 1, 1]);
        assert_eq!(nmi(&single, &two).unwrap(), 0.0);
        let cross = Partition::from_labels(&[0, 1, 0, 1]);
        assert!(nmi(&two, &cross).unwrap().abs() < 1e-15);
        assert_eq!(nmi(&single, &single).unwrap(), 1.0);
        assert!(nmi(&single, &Partition::from_labels(&[0, 0])).is_err());
    }

    #[test]
    fn nmi_and_recall_match_oracles_on_small_instances() {
        for seed in 0..30u64 {
            let mut rng = RngState::new(seed);
            let n = 4 + rng.below(9);
            let p: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
            let t: Vec<usize> = (0..n).map(|_| rng.below(4)).collect();
            let got = nmi(&Partition::from_labels(&p), &Partition::from_labels(&t)).unwrap();
            assert!((got - nmi_oracle(&p, &t)).abs() <= 1e-12, "seed {seed}");

            // Integer coordinates force distance ties.
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.below(3) as f64, rng.below(3) as f64]).collect();
            let e = Matrix::from_rows(&rows).unwrap();
            let ks: Vec<usize> = (1..n).collect();
            let r = recall_at_k(&e, &t, &ks).unwrap();
            for &k in &ks {
                assert!((r[&k] - recall_oracle(&e, &t, k)).abs() <= 1e-12, "seed {seed} k {k}");
            }
        }
    }

    #[test]
    fn recall_examples() {
        let e = m(&[&[0.0], &[1.0], &[2.0]]);
        assert_eq!(recall_at_k(&e, &[0, 1, 2], &[1]).unwrap()[&1], 0.0);
        let (e, labels) = two_blobs();
        assert_eq!(recall_at_k(&e, &labels, &[1]).unwrap()[&1], 1.0);
        assert!(matches!(recall_at_k(&e, &labels, &[10]), Err(Error::Config(_))));
        assert!(recall_at_k(&e, &labels, &[]).is_err());
    }

    #[test]
    fn recall_six_point_handcrafted() {
        // Alternating labels on a line: every nearest neighbor, ties included, has the other label.
        let e = m(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0], &[10.0]]);
        let labels = [0, 1, 0, 1, 0, 1];
        let r = recall_at_k(&e, &labels, &[1, 2, 3, 5]).unwrap();
        for (&k, &v) in &r {
            assert_eq!(v, recall_oracle(&e, &labels, k));
        }
        assert_eq!(r[&1], 0.0);
        assert_eq!(r[&2], 0.5);
    }

    #[test]
    fn recall_average_examples() {
        assert_eq!(recall_average(&BTreeMap::from([(4, 0.3)])).unwrap(), 0.3);
        assert_eq!(recall_average(&BTreeMap::from([(1, 0.5), (2, 1.0)])).unwrap(), 0.75);
        let six = BTreeMap::from([(1, 0.5), (2, 0.6), (4, 0.7), (8, 0.8), (16, 0.9), (32, 1.0)]);
        assert!((recall_average(&six).unwrap() - 4.5 / 6.0).abs() < 1e-15);
        assert!(recall_average(&BTreeMap::new()).is_err());
    }

    #[test]
    fn default_ks_truncate() {
        assert_eq!(default_ks(10), vec![1, 2, 4, 8]);
        assert_eq!(default_ks(100), DEFAULT_KS.to_vec());
    }

    #[test]
    fn table_column_order() {
        let report = EvalReport {
            nmi: 1.0,
            recall_at: BTreeMap::from([(2, 1.0), (1, 0.5)]),
            recall_average: 0.75,
            seed: 1,
            config_fingerprint: String::new(),
        };
        let table = render_table(&[("x", &report)]);
        let header = table.lines().next().unwrap();
        let cols: Vec<&str> = header.split('|').skip(1).map(str::trim).collect();
        assert_eq!(cols, ["NMI", "R@1", "R@2", "R@Average"]);
    }

    #[test]
    fn perfect_clusters_evaluate_to_one() {
        let (e, labels) = two_blobs();
        let report = evaluate(&e, &labels, &EvalConfig::default(), 1, "fp").unwrap();
        assert_eq!(report.nmi, 1.0);
        assert_eq!(report.recall_at[&1], 1.0);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.find("\"nmi\"").unwrap() < json.find("\"recall_at\"").unwrap());
    }

    fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (2usize..40).prop_flat_map(|n| (proptest::collection::vec(0usize..5, n), proptest::collection::vec(0usize..5, n)))
    }

    proptest! {
        #[test]
        fn nmi_symmetric_bounded_relabel_invariant((p, t) in labels_strategy(), shift in 1usize..5) {
            let (pp, tt) = (Partition::from_labels(&p), Partition::from_labels(&t));
            let ab = nmi(&pp, &tt).unwrap();
            let ba = nmi(&tt, &pp).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            let relabeled: Vec<usize> = p.iter().map(|&x| (x + shift) % 5).collect();
            let r = nmi(&Partition::from_labels(&relabeled), &tt).unwrap();
            prop_assert!((r - ab).abs() <= 1e-12);
        }

        #[test]
        fn recall_monotone_in_k(seed in any::<u64>(), n in 3usize..30) {
            let mut rng = RngState::new(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.standard_normal(), rng.standard_normal()]).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
            let ks: Vec<usize> = (1..n).collect();
            let r = recall_at_k(&Matrix::from_rows(&rows).unwrap(), &labels, &ks).unwrap();
            let vals: Vec<f64> = r.values().copied().collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn lloyd_never_increases_wcss(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = RngState::new(seed);
            let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.standard_normal(), rng.standard_normal(), rng.standard_normal()]).collect();
            let fit = kmeans(&Matrix::from_rows(&rows).unwrap(), k, 1, 100, seed).unwrap();
            for w in fit.trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", fit.trace);
            }
        }
    }
}
