//! Multi-view dataset loading, validation, synthetic generation and label masking.
//!
//! A dataset holds one feature matrix per view (features x samples) plus a
//! partial label vector. Columns are always kept in labeled-first order; the
//! permutation back to the original sample order is recorded so results can
//! be reported against the input ordering.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel used for unlabeled samples in label files.
pub const UNLABELED: i64 = -1;

#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    views: Vec<Array2<f64>>,
    labels: Vec<Option<usize>>,
    /// Complete ground-truth labels (internal column order), when known.
    truth: Option<Vec<usize>>,
    c: usize,
    /// Maps internal column index to the original sample index.
    permutation: Vec<usize>,
}

impl MultiViewDataset {
    /// Validates raw parts and reorders columns labeled-first.
    ///
    /// `declared_c` overrides the inferred class count (1 + max label id);
    /// every class in `[0, c)` must have at least one labeled sample unless
    /// the dataset is entirely unlabeled.
    pub fn from_parts(
        views: Vec<Array2<f64>>,
        labels: Vec<Option<usize>>,
        declared_c: Option<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        for (v, x) in views.iter().enumerate() {
            if x.ncols() != n {
                return Err(Error::ColumnCountMismatch {
                    view: v,
                    expected: n,
                    found: x.ncols(),
                });
            }
            for ((i, j), &value) in x.indexed_iter() {
                if !value.is_finite() {
                    return Err(Error::NonFiniteEntry {
                        view: v,
                        row: i,
                        col: j,
                    });
                }
                if value < 0.0 {
                    return Err(Error::NegativeEntry {
                        view: v,
                        row: i,
                        col: j,
                        value,
                    });
                }
            }
        }

        let inferred = labels.iter().flatten().max().map_or(0, |&m| m + 1);
        let c = declared_c.unwrap_or(inferred);
        for (sample, &label) in labels.iter().enumerate() {
            if let Some(label) = label {
                if label >= c {
                    return Err(Error::LabelOutOfRange {
                        sample,
                        label,
                        classes: c,
                    });
                }
            }
        }
        let mut seen = vec![false; c];
        for &label in labels.iter().flatten() {
            seen[label] = true;
        }
        if labels.iter().any(Option::is_some) {
            if let Some(class) = seen.iter().position(|&s| !s) {
                return Err(Error::EmptyClass { class });
            }
        }

        // Stable labeled-first reorder.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| labels[i].is_none());
        let views = views
            .into_iter()
            .map(|x| reorder_columns(&x, &order))
            .collect();
        let labels: Vec<_> = order.iter().map(|&i| labels[i]).collect();
        let truth = if labels.iter().all(Option::is_some) {
            Some(labels.iter().map(|l| l.unwrap()).collect())
        } else {
            None
        };

        Ok(Self {
            views,
            labels,
            truth,
            c,
            permutation: order,
        })
    }

    /// Loads view matrices and a label file from disk.
    pub fn load<P: AsRef<Path>>(
        view_paths: &[P],
        label_path: impl AsRef<Path>,
        declared_c: Option<usize>,
    ) -> Result<Self> {
        let mut views = Vec::with_capacity(view_paths.len());
        for path in view_paths {
            views.push(read_matrix_csv(path.as_ref())?);
        }
        let labels = read_labels(label_path.as_ref())?;
        Self::from_parts(views, labels, declared_c)
    }

    /// Writes the dataset in the external format: `view_<v>.csv` per view
    /// plus `labels.txt`, all in internal column order.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (v, x) in self.views.iter().enumerate() {
            let path = dir.join(format!("view_{v}.csv"));
            write_matrix_csv(&path, x)?;
            written.push(path);
        }
        let path = dir.join("labels.txt");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        for label in &self.labels {
            let value = label.map_or(UNLABELED, |l| l as i64);
            writeln!(out, "{value}").map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }

    /// Keeps roughly `ratio * n` labels by stratified per-class sampling
    /// (proportional quotas, at least one per class), hiding the rest.
    /// The full labels are retained as ground truth for evaluation.
    pub fn mask_labels(&self, ratio: f64, seed: u64) -> Result<Self> {
        let truth = self.truth.as_ref().ok_or(Error::MissingGroundTruth)?;
        let n = self.n();
        let target = (ratio * n as f64).round() as usize;
        if ratio <= 0.0 || ratio > 1.0 || (ratio * n as f64) < self.c as f64 {
            return Err(Error::RatioTooSmall {
                ratio,
                target,
                classes: self.c,
            });
        }
        let target = target.clamp(self.c, n);

        let mut class_members: Vec<Vec<usize>> = vec![Vec::new(); self.c];
        for (i, &label) in truth.iter().enumerate() {
            class_members[label].push(i);
        }

        let quotas = proportional_quotas(&class_members, target, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = vec![false; n];
        for (class, members) in class_members.iter().enumerate() {
            let mut pool = members.clone();
            pool.shuffle(&mut rng);
            for &i in pool.iter().take(quotas[class]) {
                keep[i] = true;
            }
        }

        let masked: Vec<Option<usize>> = truth
            .iter()
            .enumerate()
            .map(|(i, &label)| if keep[i] { Some(label) } else { None })
            .collect();

        // Stable labeled-first reorder relative to the current columns.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| masked[i].is_none());
        let views = self
            .views
            .iter()
            .map(|x| reorder_columns(x, &order))
            .collect();
        let labels = order.iter().map(|&i| masked[i]).collect();
        let truth = Some(order.iter().map(|&i| truth[i]).collect());
        let permutation = order.iter().map(|&i| self.permutation[i]).collect();

        Ok(Self {
            views,
            labels,
            truth,
            c: self.c,
            permutation,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Number of labeled samples; columns `0..l` are the labeled ones.
    pub fn labeled_count(&self) -> usize {
        self.labels.iter().take_while(|l| l.is_some()).count()
    }

    pub fn class_count(&self) -> usize {
        self.c
    }

    pub fn view(&self, v: usize) -> &Array2<f64> {
        &self.views[v]
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn truth(&self) -> Option<&[usize]> {
        self.truth.as_deref()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }
}

/// Deterministic synthetic multi-view generator: per view, `c` cluster
/// centers drawn uniformly in `[0, separation]` per coordinate, samples as
/// center plus Gaussian noise clipped at zero.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub view_dims: Vec<usize>,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::config("synthetic.classes", "must be at least 1"));
        }
        if self.per_class == 0 {
            return Err(Error::config("synthetic.per_class", "must be at least 1"));
        }
        if self.view_dims.is_empty() {
            return Err(Error::config(
                "synthetic.view_dims",
                "needs at least one view",
            ));
        }
        if self.view_dims.contains(&0) {
            return Err(Error::config(
                "synthetic.view_dims",
                "dims must be at least 1",
            ));
        }
        if self.separation.is_nan() || self.separation < 0.0 {
            return Err(Error::config("synthetic.separation", "must be nonnegative"));
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return Err(Error::config("synthetic.noise", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<MultiViewDataset> {
        self.validate()?;
        let n = self.classes * self.per_class;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");

        // Centers for every view first, then per-sample noise, so the draw
        // order is independent of how the matrices are filled.
        let mut centers: Vec<Array2<f64>> = Vec::with_capacity(self.view_dims.len());
        for &m in &self.view_dims {
            centers.push(Array2::from_shape_fn((m, self.classes), |_| {
                rng.gen::<f64>() * self.separation
            }));
        }

        let mut views = Vec::with_capacity(self.view_dims.len());
        for (v, &m) in self.view_dims.iter().enumerate() {
            let mut x = Array2::zeros((m, n));
            for j in 0..n {
                let class = j / self.per_class;
                for i in 0..m {
                    let sample = centers[v][[i, class]] + self.noise * normal.sample(&mut rng);
                    x[[i, j]] = sample.max(0.0);
                }
            }
            views.push(x);
        }

        let labels = (0..n).map(|j| Some(j / self.per_class)).collect();
        MultiViewDataset::from_parts(views, labels, Some(self.classes))
    }
}

fn reorder_columns(x: &Array2<f64>, order: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), order.len()));
    for (new, &old) in order.iter().enumerate() {
        out.column_mut(new).assign(&x.column(old));
    }
    out
}

/// Largest-remainder quotas proportional to class sizes, each at least one,
/// none above its class size; ties go to the lower class id.
fn proportional_quotas(class_members: &[Vec<usize>], target: usize, n: usize) -> Vec<usize> {
    let c = class_members.len();
    let ideal: Vec<f64> = class_members
        .iter()
        .map(|m| target as f64 * m.len() as f64 / n as f64)
        .collect();
    let mut quotas: Vec<usize> = ideal.iter().map(|&q| q.floor() as usize).collect();
    let mut remainders: Vec<(usize, f64)> = ideal
        .iter()
        .enumerate()
        .map(|(k, &q)| (k, q - q.floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut assigned: usize = quotas.iter().sum();
    for &(k, _) in remainders.iter().cycle() {
        if assigned >= target {
            break;
        }
        if quotas[k] < class_members[k].len() {
            quotas[k] += 1;
            assigned += 1;
        }
    }
    // Guarantee one label per class, taking from the largest quota.
    for k in 0..c {
        while quotas[k] == 0 {
            let donor = (0..c).max_by_key(|&j| quotas[j]).unwrap();
            if quotas[donor] <= 1 {
                quotas[k] = 1;
                break;
            }
            quotas[donor] -= 1;
            quotas[k] += 1;
        }
    }
    quotas
}

/// Reads a headerless CSV of decimal floats, one row per feature and one
/// column per sample.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, lineno + 1, format!("`{field}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 0, "empty matrix file"));
    }
    let (m, n) = (rows.len(), rows[0].len());
    Array2::from_shape_vec((m, n), rows.into_iter().flatten().collect())
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Writes a matrix in the same format `read_matrix_csv` accepts. Values use
/// the shortest representation that round-trips, so write/read is bit-exact.
pub fn write_matrix_csv(path: &Path, x: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in x.axis_iter(Axis(0)) {
        let line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads one label per line: a base-10 class id, or `-1` for unlabeled.
pub fn read_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        let value: i64 = field
            .parse()
            .map_err(|e| Error::parse(path, lineno + 1, format!("`{field}`: {e}")))?;
        if value == UNLABELED {
            labels.push(None);
        } else if value < 0 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("negative label {value} (use -1 for unlabeled)"),
            ));
        } else {
            labels.push(Some(value as usize));
        }
    }
    Ok(labels)
}
