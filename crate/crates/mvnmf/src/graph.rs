//! Per-view k-NN heat-kernel similarity graphs and their Laplacians.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heat-kernel bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPolicy {
    /// Median Euclidean distance over the k-NN edge set.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct ViewGraph {
    s: Array2<f64>,
    degrees: Array1<f64>,
    laplacian: Array2<f64>,
    k: usize,
    delta: f64,
}

impl ViewGraph {
    /// Graph with no edges; useful when the regularizer weight is zero.
    pub fn disconnected(n: usize) -> Self {
        Self {
            s: Array2::zeros((n, n)),
            degrees: Array1::zeros(n),
            laplacian: Array2::zeros((n, n)),
            k: 0,
            delta: 1.0,
        }
    }

    /// Builds the graph on the columns of `x` (samples). An edge (i, j)
    /// exists when either endpoint is among the other's k nearest neighbors;
    /// its weight is `exp(-||x_i - x_j||^2 / (2 delta^2))`. Ties at the k-th
    /// distance break toward the smaller sample index.
    pub fn build(x: &Array2<f64>, k: usize, delta_policy: DeltaPolicy) -> Result<Self> {
        let n = x.ncols();
        if k == 0 || k >= n {
            return Err(Error::NeighborCountTooLarge { k, n });
        }

        let sq_dist = pairwise_squared_distances(x);

        // Directed k-NN lists, then the symmetric OR-union.
        let mut adjacency = vec![false; n * n];
        for j in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            order.sort_by(|&a, &b| {
                sq_dist[[a, j]]
                    .partial_cmp(&sq_dist[[b, j]])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            for &i in order.iter().take(k) {
                adjacency[i * n + j] = true;
                adjacency[j * n + i] = true;
            }
        }

        let delta = match delta_policy {
            DeltaPolicy::Fixed(value) => value,
            DeltaPolicy::Median => {
                // Zero-distance pairs carry no scale information.
                let mut dists: Vec<f64> = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if adjacency[i * n + j] && sq_dist[[i, j]] > 0.0 {
                            dists.push(sq_dist[[i, j]].sqrt());
                        }
                    }
                }
                median(&mut dists)
            }
        };
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::NonPositiveBandwidth { delta });
        }

        let mut s = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                if adjacency[i * n + j] {
                    let w = (-sq_dist[[i, j]] / (2.0 * delta * delta)).exp();
                    s[[i, j]] = w;
                    s[[j, i]] = w;
                }
            }
        }

        let degrees = Array1::from_iter((0..n).map(|i| s.row(i).sum()));
        let mut laplacian = -&s;
        for i in 0..n {
            laplacian[[i, i]] += degrees[i];
        }

        Ok(Self {
            s,
            degrees,
            laplacian,
            k,
            delta,
        })
    }

    pub fn similarity(&self) -> &Array2<f64> {
        &self.s
    }

    /// Diagonal of D (row sums of S).
    pub fn degrees(&self) -> &Array1<f64> {
        &self.degrees
    }

    pub fn laplacian(&self) -> &Array2<f64> {
        &self.laplacian
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `S * H`, row i scaled contributions of neighbors.
    pub fn smooth(&self, h: &Array2<f64>) -> Array2<f64> {
        self.s.dot(h)
    }

    /// `D * H`, rows scaled by degree.
    pub fn degree_scale(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = h.to_owned();
        for (i, mut row) in out.outer_iter_mut().enumerate() {
            row *= self.degrees[i];
        }
        out
    }
}

fn pairwise_squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.ncols();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &x.column(i) - &x.column(j);
            let sq = diff.iter().map(|v| v * v).sum();
            d[[i, j]] = sq;
            d[[j, i]] = sq;
        }
    }
    d
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}
