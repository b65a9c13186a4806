//! Clustering extraction and scoring: consensus representation, k-means
//! with restarts, Hungarian-matched accuracy and normalized mutual
//! information.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::LabelConstraint;
use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::solver::FactorizationState;

const LLOYD_MAX_ITERS: usize = 100;

/// How hard assignments are read off the representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Best-of-restarts Lloyd's algorithm (the default).
    KMeans,
    /// Argmax over latent subspaces; exploits d = c * m_s.
    ArgMax,
}

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    /// Cluster id -> class id mapping chosen by the Hungarian matching.
    pub matched_permutation: Vec<usize>,
    pub ac: f64,
    pub nmi: f64,
}

/// The per-sample consensus representation `A_lc * Z_c`.
pub fn extract_representation(
    state: &FactorizationState,
    constraint: &LabelConstraint,
) -> Array2<f64> {
    constraint.expand(&state.z_c)
}

/// Argmax-subspace assignment: each sample goes to the class block holding
/// its largest coefficient.
pub fn argmax_assignments(representation: &Array2<f64>, m_s: usize) -> Vec<usize> {
    representation
        .outer_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_value = f64::NEG_INFINITY;
            for (h, &value) in row.iter().enumerate() {
                if value > best_value {
                    best_value = value;
                    best = h;
                }
            }
            best / m_s
        })
        .collect()
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One Lloyd run with greedy farthest-point seeding. Returns assignments and
/// the within-cluster sum of squares; `sse_trace` records the objective after
/// every iteration.
fn lloyd(
    points: &Array2<f64>,
    c: usize,
    seed: u64,
    sse_trace: Option<&mut Vec<f64>>,
) -> (Vec<usize>, f64) {
    let n = points.nrows();
    assert!(c >= 1 && c <= n, "need 1 <= c <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Greedy farthest-point seeding from a random start.
    let first = rng.gen_range(0..n);
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut seeds = vec![first];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    while seeds.len() < c {
        let mut best = usize::MAX;
        let mut best_dist = f64::NEG_INFINITY;
        for i in 0..n {
            if !chosen[i] && nearest[i] > best_dist {
                best_dist = nearest[i];
                best = i;
            }
        }
        chosen[best] = true;
        seeds.push(best);
        for (i, slot) in nearest.iter_mut().enumerate() {
            let d = sq_dist(points.row(i), points.row(best));
            if d < *slot {
                *slot = d;
            }
        }
    }

    let d = points.ncols();
    let mut centroids = Array2::zeros((c, d));
    for (k, &i) in seeds.iter().enumerate() {
        centroids.row_mut(k).assign(&points.row(i));
    }

    let mut assignments = vec![0usize; n];
    let mut trace = sse_trace;
    for _ in 0..LLOYD_MAX_ITERS {
        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for k in 0..c {
                let dist = sq_dist(points.row(i), centroids.row(k));
                if dist < best_dist {
                    best_dist = dist;
                    best = k;
                }
            }
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }

        // Repair empty clusters by stealing the farthest point from the
        // largest cluster.
        loop {
            let mut sizes = vec![0usize; c];
            for &a in &assignments {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let donor = (0..c).max_by_key(|&k| sizes[k]).unwrap();
            let mut farthest = usize::MAX;
            let mut far_dist = f64::NEG_INFINITY;
            for (i, &a) in assignments.iter().enumerate() {
                if a == donor {
                    let dist = sq_dist(points.row(i), centroids.row(donor));
                    if dist > far_dist {
                        far_dist = dist;
                        farthest = i;
                    }
                }
            }
            assignments[farthest] = empty;
            centroids.row_mut(empty).assign(&points.row(farthest));
            changed = true;
        }

        centroids.fill(0.0);
        let mut sizes = vec![0usize; c];
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = centroids.row_mut(a);
            row += &points.row(i);
            sizes[a] += 1;
        }
        for (k, &size) in sizes.iter().enumerate() {
            centroids.row_mut(k).mapv_inplace(|v| v / size as f64);
        }

        if let Some(trace) = trace.as_deref_mut() {
            let sse: f64 = (0..n)
                .map(|i| sq_dist(points.row(i), centroids.row(assignments[i])))
                .sum();
            trace.push(sse);
        }
        if !changed {
            break;
        }
    }

    let sse: f64 = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(assignments[i])))
        .sum();
    (assignments, sse)
}

/// Best-of-restarts k-means, deterministic given `seed`; the lowest SSE wins
/// and ties go to the earliest restart.
pub fn kmeans(points: &Array2<f64>, c: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restart_seeds: Vec<u64> = (0..restarts.max(1)).map(|_| rng.gen()).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in restart_seeds {
        let (assignments, sse) = lloyd(points, c, s, None);
        match &best {
            Some((best_sse, _)) if sse >= *best_sse => {}
            _ => best = Some((sse, assignments)),
        }
    }
    best.unwrap().1
}

/// Maximum-total linear assignment on a square score matrix. Returns the
/// permutation `row -> column` and the achieved total.
pub fn hungarian_match(scores: &Array2<f64>) -> (Vec<usize>, f64) {
    let n = scores.nrows();
    assert_eq!(n, scores.ncols(), "square matrix required");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // Minimize the negated scores with the O(n^3) potentials method.
    let cost = |i: usize, j: usize| -scores[[i, j]];

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row, 1-based
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut permutation = vec![0usize; n];
    for j in 1..=n {
        permutation[matched_row[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| scores[[i, permutation[i]]]).sum();
    (permutation, total)
}

fn confusion(pred: &[usize], truth: &[usize], c: usize) -> Array2<f64> {
    let mut m = Array2::zeros((c, c));
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        m[[p, t]] += 1.0;
    }
    m
}

/// Hungarian-matched clustering accuracy.
pub fn accuracy(pred: &[usize], truth: &[usize], c: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            context: "accuracy label length",
            expected: truth.len().to_string(),
            found: pred.len().to_string(),
        });
    }
    if let Some(&bad) = pred.iter().chain(truth.iter()).find(|&&x| x >= c) {
        return Err(Error::LabelOutOfRange {
            sample: 0,
            label: bad,
            classes: c,
        });
    }
    let (_, matched) = hungarian_match(&confusion(pred, truth, c));
    Ok(matched / pred.len() as f64)
}

/// Full matched-clustering report for one assignment.
pub fn score_assignments(pred: &[usize], truth: &[usize], c: usize) -> Result<ClusteringResult> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            context: "label length",
            expected: truth.len().to_string(),
            found: pred.len().to_string(),
        });
    }
    let (matched_permutation, matched) = hungarian_match(&confusion(pred, truth, c));
    Ok(ClusteringResult {
        assignments: pred.to_vec(),
        matched_permutation,
        ac: matched / pred.len() as f64,
        nmi: nmi(pred, truth)?,
    })
}

/// Normalized mutual information with sqrt-entropy normalization. Natural
/// logs internally; identical partitions score exactly 1, zero-entropy
/// disagreements score 0. The two arguments are interchangeable bitwise.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "nmi label length",
            expected: a.len().to_string(),
            found: b.len().to_string(),
        });
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    // Canonical argument order makes nmi(a, b) and nmi(b, a) run the exact
    // same float operations.
    let (a, b) = if a <= b { (a, b) } else { (b, a) };

    let n = a.len() as f64;
    let ca = *a.iter().max().unwrap() + 1;
    let cb = *b.iter().max().unwrap() + 1;
    let mut joint = vec![0.0f64; ca * cb];
    let mut count_a = vec![0.0f64; ca];
    let mut count_b = vec![0.0f64; cb];
    for (&x, &y) in a.iter().zip(b.iter()) {
        joint[x * cb + y] += 1.0;
        count_a[x] += 1.0;
        count_b[y] += 1.0;
    }

    // Identical partitions: the contingency table is a bijection between
    // the occupied clusters.
    let rows_single = (0..ca).all(|x| (0..cb).filter(|&y| joint[x * cb + y] > 0.0).count() <= 1);
    let cols_single = (0..cb).all(|y| (0..ca).filter(|&x| joint[x * cb + y] > 0.0).count() <= 1);
    if rows_single && cols_single {
        return Ok(1.0);
    }

    let entropy = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let p = v / n;
                -p * p.ln()
            })
            .sum()
    };
    let ha = entropy(&count_a);
    let hb = entropy(&count_b);
    if ha == 0.0 || hb == 0.0 {
        // One side is a single cluster, the other is not: partitions differ.
        return Ok(0.0);
    }

    let mut mi = 0.0;
    for x in 0..ca {
        for y in 0..cb {
            let nxy = joint[x * cb + y];
            if nxy > 0.0 {
                let p = nxy / n;
                mi += p * (p / ((count_a[x] / n) * (count_b[y] / n))).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Number of scoring repetitions with fresh k-means seeds.
    pub repeats: usize,
    /// Lloyd restarts per repetition.
    pub restarts: usize,
    pub seed: u64,
    pub mode: AssignmentMode,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            repeats: 10,
            restarts: 20,
            seed: 0,
            mode: AssignmentMode::KMeans,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub ac_mean: f64,
    pub ac_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    /// (AC, NMI) per repetition.
    pub per_repeat: Vec<(f64, f64)>,
}

impl EvalSummary {
    /// Table-style rendering at the x100 scale, e.g. `61.03±3.57`.
    pub fn format_ac(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.ac_mean, 100.0 * self.ac_std)
    }

    pub fn format_nmi(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.nmi_mean, 100.0 * self.nmi_std)
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scores a fixed representation against ground truth: `repeats` assignment
/// rounds with fresh seeds, reported as mean and sample standard deviation.
pub fn score_representation(
    representation: &Array2<f64>,
    truth: &[usize],
    c: usize,
    m_s: usize,
    settings: &EvalSettings,
) -> Result<EvalSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut per_repeat = Vec::with_capacity(settings.repeats);
    for _ in 0..settings.repeats.max(1) {
        let repeat_seed: u64 = rng.gen();
        let assignments = match settings.mode {
            AssignmentMode::KMeans => kmeans(representation, c, repeat_seed, settings.restarts),
            AssignmentMode::ArgMax => argmax_assignments(representation, m_s),
        };
        let ac = accuracy(&assignments, truth, c)?;
        let score = nmi(&assignments, truth)?;
        per_repeat.push((ac, score));
    }

    let acs: Vec<f64> = per_repeat.iter().map(|r| r.0).collect();
    let nmis: Vec<f64> = per_repeat.iter().map(|r| r.1).collect();
    let (ac_mean, ac_std) = mean_and_std(&acs);
    let (nmi_mean, nmi_std) = mean_and_std(&nmis);
    Ok(EvalSummary {
        ac_mean,
        ac_std,
        nmi_mean,
        nmi_std,
        per_repeat,
    })
}

/// Scores a fitted state against the dataset's held-out ground truth via the
/// consensus representation.
pub fn evaluate_run(
    state: &FactorizationState,
    dataset: &MultiViewDataset,
    constraint: &LabelConstraint,
    settings: &EvalSettings,
) -> Result<EvalSummary> {
    let truth = dataset.truth().ok_or(Error::MissingGroundTruth)?;
    let representation = extract_representation(state, constraint);
    score_representation(
        &representation,
        truth,
        dataset.class_count(),
        constraint.subspace_dim(),
        settings,
    )
}
