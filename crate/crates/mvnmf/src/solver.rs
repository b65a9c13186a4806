//! Alternating multiplicative solver for discriminatively constrained
//! semi-supervised multi-view NMF.
//!
//! Each iteration runs, per view: diagonal terms, basis update, column-norm
//! transfer from basis to coefficients, coefficient update; then the
//! consensus matrix is reset to the exact minimizer (the view mean). The
//! objective per view is
//!
//! ```text
//!   ||X - W (A Z)'||_F^2                       reconstruction
//! + alpha ||M . (Z Q)||_F^2                    discriminative penalty
//! + beta  tr(Q' (A Z)' L (A Z) Q)              graph regularizer
//! + gamma ||Z Q - Zc||_F^2                     consensus alignment
//! ```
//!
//! with `A` the label constraint, `M` the discriminative mask, `L` the view
//! Laplacian and `Q` the diagonal of basis column norms. After the norm
//! transfer `Q = I` and the coefficient update takes its `Q`-free form.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::LabelConstraint;
use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::graph::ViewGraph;

/// Ablation variants: which objective terms stay active and whether the
/// norm transfer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Reconstruction + consensus only.
    Baseline,
    /// Baseline plus the discriminative penalty.
    BaselineAlpha,
    /// Baseline plus the graph regularizer.
    BaselineBeta,
    /// Full objective but without the norm transfer; `Q` stays explicit.
    NoNormalization,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::BaselineAlpha,
        Variant::BaselineBeta,
        Variant::NoNormalization,
        Variant::Full,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Baseline => "baseline",
            Variant::BaselineAlpha => "baseline_alpha",
            Variant::BaselineBeta => "baseline_beta",
            Variant::NoNormalization => "no_normalization",
        }
    }

    pub fn parse(name: &str) -> Option<Variant> {
        Variant::ALL.iter().copied().find(|v| v.name() == name)
    }

    fn skips_normalization(&self) -> bool {
        matches!(self, Variant::NoNormalization)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Latent subspace width per class; the latent dimension is `c * m_s`.
    pub m_s: usize,
    pub max_iters: usize,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
    /// Floor applied to multiplicative-update denominators.
    pub epsilon_guard: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 1.0,
            gamma: 0.1,
            m_s: 1,
            max_iters: 300,
            tol: 1e-6,
            epsilon_guard: 1e-12,
            seed: 0,
            variant: Variant::Full,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("solver.alpha", self.alpha),
            ("solver.beta", self.beta),
            ("solver.gamma", self.gamma),
            ("solver.tol", self.tol),
        ] {
            if value.is_nan() || value < 0.0 {
                return Err(Error::config(name, "must be nonnegative"));
            }
        }
        if self.m_s == 0 {
            return Err(Error::config("solver.m_s", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "must be at least 1"));
        }
        if self.epsilon_guard.is_nan() || self.epsilon_guard <= 0.0 {
            return Err(Error::config("solver.epsilon_guard", "must be positive"));
        }
        Ok(())
    }

    /// Regularization weights with the variant's terms zeroed out.
    pub fn effective_weights(&self) -> (f64, f64, f64) {
        match self.variant {
            Variant::Full | Variant::NoNormalization => (self.alpha, self.beta, self.gamma),
            Variant::Baseline => (0.0, 0.0, self.gamma),
            Variant::BaselineAlpha => (self.alpha, 0.0, self.gamma),
            Variant::BaselineBeta => (0.0, self.beta, self.gamma),
        }
    }
}

/// Weighted objective pieces for one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermBreakdown {
    pub reconstruction: f64,
    pub discriminative: f64,
    pub graph: f64,
    pub consensus: f64,
}

impl TermBreakdown {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.discriminative + self.graph + self.consensus
    }
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub iteration: usize,
    pub total: f64,
    pub terms: Vec<TermBreakdown>,
}

/// Diagonals of the auxiliary matrices entering the basis update.
#[derive(Debug, Clone)]
pub struct DiagonalTerms {
    /// diag((M . Z)' (M . Z))
    pub y1: Array1<f64>,
    /// diag((A Z)' D (A Z))
    pub y2_plus: Array1<f64>,
    /// diag((A Z)' S (A Z))
    pub y2_minus: Array1<f64>,
    /// diag(Z' Z)
    pub y3: Array1<f64>,
    /// diag(Zc' Z)
    pub y4: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct FactorizationState {
    /// Per-view basis, features x d, nonnegative.
    pub w: Vec<Array2<f64>>,
    /// Per-view coefficients, (n - l + c) x d, nonnegative.
    pub z: Vec<Array2<f64>>,
    /// Cached basis column norms per view.
    pub q: Vec<Array1<f64>>,
    /// Consensus coefficients.
    pub z_c: Array2<f64>,
    /// Objective before the first iteration.
    pub initial: TraceEntry,
    /// One entry per completed iteration.
    pub trace: Vec<TraceEntry>,
}

impl FactorizationState {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(self.initial.total, |e| e.total)
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// Writes `iteration,total,recon_v,disc_v,graph_v,consensus_v` rows,
    /// iteration 0 being the initial objective.
    pub fn write_trace_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let n_views = self.w.len();
        let mut header = String::from("iteration,total");
        for v in 0..n_views {
            header.push_str(&format!(",recon_{v},disc_{v},graph_{v},consensus_{v}"));
        }
        writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
        for entry in std::iter::once(&self.initial).chain(self.trace.iter()) {
            let mut line = format!("{},{}", entry.iteration, entry.total);
            for t in &entry.terms {
                line.push_str(&format!(
                    ",{},{},{},{}",
                    t.reconstruction, t.discriminative, t.graph, t.consensus
                ));
            }
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// A factorization problem: dataset, constraint, per-view graphs and config.
pub struct Problem<'a> {
    pub dataset: &'a MultiViewDataset,
    pub constraint: &'a LabelConstraint,
    pub graphs: &'a [ViewGraph],
    pub config: &'a SolverConfig,
}

impl<'a> Problem<'a> {
    pub fn new(
        dataset: &'a MultiViewDataset,
        constraint: &'a LabelConstraint,
        graphs: &'a [ViewGraph],
        config: &'a SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        if constraint.n() != dataset.n() {
            return Err(Error::ShapeMismatch {
                context: "constraint sample count",
                expected: dataset.n().to_string(),
                found: constraint.n().to_string(),
            });
        }
        if graphs.len() != dataset.n_views() {
            return Err(Error::ShapeMismatch {
                context: "graph count",
                expected: dataset.n_views().to_string(),
                found: graphs.len().to_string(),
            });
        }
        for g in graphs {
            if g.n() != dataset.n() {
                return Err(Error::ShapeMismatch {
                    context: "graph node count",
                    expected: dataset.n().to_string(),
                    found: g.n().to_string(),
                });
            }
        }
        Ok(Self {
            dataset,
            constraint,
            graphs,
            config,
        })
    }

    /// Strictly positive uniform initialization in (0.01, 1.01); the
    /// consensus starts at the mean of the per-view coefficients.
    pub fn initialize(&self) -> FactorizationState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let d = self.constraint.latent_dim();
        let rows = self.constraint.rows();
        let mut w = Vec::new();
        let mut z = Vec::new();
        for v in 0..self.dataset.n_views() {
            let m = self.dataset.view(v).nrows();
            w.push(Array2::from_shape_fn((m, d), |_| 0.01 + rng.gen::<f64>()));
            z.push(Array2::from_shape_fn((rows, d), |_| {
                0.01 + rng.gen::<f64>()
            }));
        }
        let z_c = mean_in_view_order(&z, None);
        let q = w.iter().map(column_norms).collect();
        FactorizationState {
            w,
            z,
            q,
            z_c,
            initial: TraceEntry {
                iteration: 0,
                total: f64::NAN,
                terms: Vec::new(),
            },
            trace: Vec::new(),
        }
    }

    /// Evaluates the objective with `Q` recomputed from the current basis.
    pub fn objective(&self, state: &FactorizationState) -> Result<(f64, Vec<TermBreakdown>)> {
        let (alpha, beta, gamma) = self.config.effective_weights();
        let mask = self.constraint.disc_mask();
        let mut terms = Vec::with_capacity(self.dataset.n_views());
        let mut total = 0.0;
        for v in 0..self.dataset.n_views() {
            let w = &state.w[v];
            let z = &state.z[v];
            let q = column_norms(w);
            let h = self.constraint.expand(z);

            let residual = self.dataset.view(v) - &w.dot(&h.t());
            let reconstruction = frob_sq(&residual);

            let discriminative = if alpha > 0.0 {
                let zq = z * &q;
                alpha * frob_sq(&(mask * &zq))
            } else {
                0.0
            };

            let graph = if beta > 0.0 {
                let lh = self.graphs[v].laplacian().dot(&h);
                let quad = h.t().dot(&lh);
                beta * quad
                    .diag()
                    .iter()
                    .zip(q.iter())
                    .map(|(m, qh)| m * qh * qh)
                    .sum::<f64>()
            } else {
                0.0
            };

            let consensus = if gamma > 0.0 {
                let diff = &(z * &q) - &state.z_c;
                gamma * frob_sq(&diff)
            } else {
                0.0
            };

            let entry = TermBreakdown {
                reconstruction,
                discriminative,
                graph,
                consensus,
            };
            let view_total = entry.total();
            if !view_total.is_finite() {
                return Err(Error::NonFinite {
                    context: "objective",
                });
            }
            total += view_total;
            terms.push(entry);
        }
        Ok((total, terms))
    }

    /// Diagonals of the five auxiliary matrices for view `v`.
    pub fn diagonal_terms(&self, state: &FactorizationState, v: usize) -> DiagonalTerms {
        diagonal_terms_impl(self.constraint, &self.graphs[v], &state.z[v], &state.z_c)
    }

    /// One multiplicative basis update for view `v`.
    pub fn update_w(
        &self,
        state: &mut FactorizationState,
        v: usize,
        terms: &DiagonalTerms,
    ) -> Result<()> {
        let (alpha, beta, gamma) = self.config.effective_weights();
        update_w_impl(
            &mut state.w[v],
            self.dataset.view(v),
            self.constraint,
            &state.z[v],
            terms,
            alpha,
            beta,
            gamma,
            self.config.epsilon_guard,
        )?;
        state.q[v] = column_norms(&state.w[v]);
        Ok(())
    }

    /// Transfers basis column norms onto the coefficients: `W <- W Q^-1`,
    /// `Z <- Z Q`. Afterwards every basis column has unit norm.
    pub fn normalize(&self, state: &mut FactorizationState, v: usize) -> Result<()> {
        normalize_impl(&mut state.w[v], &mut state.z[v], v)?;
        state.q[v] = Array1::ones(state.w[v].ncols());
        Ok(())
    }

    /// One multiplicative coefficient update for view `v`. In the normalized
    /// schedule this is the `Q`-free rule; the no-normalization variant keeps
    /// `Q` explicit.
    pub fn update_z(&self, state: &mut FactorizationState, v: usize) -> Result<()> {
        let (alpha, beta, gamma) = self.config.effective_weights();
        let q = if self.config.variant.skips_normalization() {
            column_norms(&state.w[v])
        } else {
            Array1::ones(state.w[v].ncols())
        };
        update_z_impl(
            &mut state.z[v],
            self.dataset.view(v),
            self.constraint,
            &self.graphs[v],
            &state.w[v],
            &state.z_c,
            &q,
            alpha,
            beta,
            gamma,
            self.config.epsilon_guard,
        )
    }

    /// Exact consensus update: the mean of the per-view coefficients (scaled
    /// by their explicit `Q` when normalization is skipped), accumulated in
    /// fixed view order.
    pub fn update_consensus(&self, state: &mut FactorizationState) {
        let q = if self.config.variant.skips_normalization() {
            Some(state.w.iter().map(column_norms).collect::<Vec<_>>())
        } else {
            None
        };
        state.z_c = mean_in_view_order(&state.z, q.as_deref());
    }

    /// Runs the alternating scheme until the relative objective change drops
    /// below `tol` or `max_iters` is reached.
    pub fn fit(&self) -> Result<FactorizationState> {
        self.fit_with_mode(false)
    }

    /// Like `fit`, optionally processing views in parallel. Results are
    /// identical to the sequential mode: per-view work is independent and the
    /// consensus mean is always accumulated in view order.
    pub fn fit_with_mode(&self, parallel: bool) -> Result<FactorizationState> {
        let mut state = self.initialize();
        let (total, terms) = self
            .objective(&state)
            .map_err(|_| Error::Divergence { iteration: 0 })?;
        state.initial = TraceEntry {
            iteration: 0,
            total,
            terms,
        };

        let mut previous = total;
        for iteration in 1..=self.config.max_iters {
            self.step_views(&mut state, parallel).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence { iteration },
                other => other,
            })?;
            self.update_consensus(&mut state);

            let (total, terms) = self
                .objective(&state)
                .map_err(|_| Error::Divergence { iteration })?;
            state.trace.push(TraceEntry {
                iteration,
                total,
                terms,
            });

            let change = (previous - total).abs() / previous.abs().max(f64::MIN_POSITIVE);
            previous = total;
            if change < self.config.tol {
                break;
            }
        }
        Ok(state)
    }

    fn step_views(&self, state: &mut FactorizationState, parallel: bool) -> Result<()> {
        let (alpha, beta, gamma) = self.config.effective_weights();
        let skip_norm = self.config.variant.skips_normalization();
        let z_c = state.z_c.clone();

        let step = |v: usize, w: &mut Array2<f64>, z: &mut Array2<f64>, q: &mut Array1<f64>| {
            let terms = diagonal_terms_impl(self.constraint, &self.graphs[v], z, &z_c);
            update_w_impl(
                w,
                self.dataset.view(v),
                self.constraint,
                z,
                &terms,
                alpha,
                beta,
                gamma,
                self.config.epsilon_guard,
            )?;
            let q_update = if skip_norm {
                column_norms(w)
            } else {
                normalize_impl(w, z, v)?;
                Array1::ones(w.ncols())
            };
            update_z_impl(
                z,
                self.dataset.view(v),
                self.constraint,
                &self.graphs[v],
                w,
                &z_c,
                &q_update,
                alpha,
                beta,
                gamma,
                self.config.epsilon_guard,
            )?;
            *q = q_update;
            Ok(())
        };

        if parallel {
            state
                .w
                .par_iter_mut()
                .zip(state.z.par_iter_mut())
                .zip(state.q.par_iter_mut())
                .enumerate()
                .try_for_each(|(v, ((w, z), q))| step(v, w, z, q))
        } else {
            state
                .w
                .iter_mut()
                .zip(state.z.iter_mut())
                .zip(state.q.iter_mut())
                .enumerate()
                .try_for_each(|(v, ((w, z), q))| step(v, w, z, q))
        }
    }

    /// Analytic gradient of the objective with respect to the view's basis,
    /// including the dependence through `Q`.
    pub fn gradient_w(&self, state: &FactorizationState, v: usize) -> Array2<f64> {
        let (alpha, beta, gamma) = self.config.effective_weights();
        let w = &state.w[v];
        let z = &state.z[v];
        let x = self.dataset.view(v);
        let h = self.constraint.expand(z);
        let terms = self.diagonal_terms(state, v);
        let q = column_norms(w);
        let q_inv = q.mapv(|v| 1.0 / v.max(self.config.epsilon_guard));

        let mut grad = w.dot(&h.t().dot(&h)) - x.dot(&h);
        if alpha > 0.0 {
            grad += &(w * &(terms.y1.mapv(|y| y * alpha)));
        }
        if beta > 0.0 {
            let y2 = (&terms.y2_plus - &terms.y2_minus).mapv(|y| y * beta);
            grad += &(w * &y2);
        }
        if gamma > 0.0 {
            grad += &(w * &(terms.y3.mapv(|y| y * gamma)));
            let chain = (&q_inv * &terms.y4).mapv(|y| y * gamma);
            grad -= &(w * &chain);
        }
        grad * 2.0
    }

    /// Analytic gradient with respect to the view's coefficients, with `Q`
    /// held at its value from the current basis.
    pub fn gradient_z(&self, state: &FactorizationState, v: usize) -> Array2<f64> {
        let (alpha, beta, gamma) = self.config.effective_weights();
        let w = &state.w[v];
        let z = &state.z[v];
        let x = self.dataset.view(v);
        let h = self.constraint.expand(z);
        let q = column_norms(w);
        let q_sq = &q * &q;

        let mut grad =
            self.constraint.reduce(&h).dot(&w.t().dot(w)) - self.constraint.reduce(&x.t().dot(w));
        if alpha > 0.0 {
            let masked = self.constraint.disc_mask() * z;
            grad += &((masked * &q_sq).mapv(|v| v * alpha));
        }
        if beta > 0.0 {
            let lh = self.graphs[v].laplacian().dot(&h);
            grad += &((self.constraint.reduce(&lh) * &q_sq).mapv(|v| v * beta));
        }
        if gamma > 0.0 {
            let pulled = &(z * &q_sq) - &(&state.z_c * &q);
            grad += &pulled.mapv(|v| v * gamma);
        }
        grad * 2.0
    }
}

fn diagonal_terms_impl(
    constraint: &LabelConstraint,
    graph: &ViewGraph,
    z: &Array2<f64>,
    z_c: &Array2<f64>,
) -> DiagonalTerms {
    let h = constraint.expand(z);
    let masked = constraint.disc_mask() * z;
    let y1 = Array1::from_iter(masked.axis_iter(Axis(1)).map(|col| col.dot(&col)));
    let dh = graph.degree_scale(&h);
    let sh = graph.smooth(&h);
    let y2_plus = diag_of_product(&h, &dh);
    let y2_minus = diag_of_product(&h, &sh);
    let y3 = Array1::from_iter(z.axis_iter(Axis(1)).map(|col| col.dot(&col)));
    let y4 = diag_of_product(z_c, z);
    DiagonalTerms {
        y1,
        y2_plus,
        y2_minus,
        y3,
        y4,
    }
}

#[allow(clippy::too_many_arguments)]
fn update_w_impl(
    w: &mut Array2<f64>,
    x: &Array2<f64>,
    constraint: &LabelConstraint,
    z: &Array2<f64>,
    terms: &DiagonalTerms,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
) -> Result<()> {
    let h = constraint.expand(z);
    let q = column_norms(w);
    let q_inv = q.mapv(|v| 1.0 / v.max(eps));

    let mut numer = x.dot(&h);
    let mut denom = w.dot(&h.t().dot(&h));
    if alpha > 0.0 {
        denom += &(&*w * &terms.y1.mapv(|y| y * alpha));
    }
    if beta > 0.0 {
        numer += &(&*w * &terms.y2_minus.mapv(|y| y * beta));
        denom += &(&*w * &terms.y2_plus.mapv(|y| y * beta));
    }
    if gamma > 0.0 {
        numer += &(&*w * &(&q_inv * &terms.y4).mapv(|y| y * gamma));
        denom += &(&*w * &terms.y3.mapv(|y| y * gamma));
    }

    azip_update(w, &numer, &denom, eps);
    ensure_finite(w, "basis update")
}

#[allow(clippy::too_many_arguments)]
fn update_z_impl(
    z: &mut Array2<f64>,
    x: &Array2<f64>,
    constraint: &LabelConstraint,
    graph: &ViewGraph,
    w: &Array2<f64>,
    z_c: &Array2<f64>,
    q: &Array1<f64>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
) -> Result<()> {
    let h = constraint.expand(z);
    let q_sq = q * q;

    let mut numer = constraint.reduce(&x.t().dot(w));
    let mut denom = constraint.reduce(&h).dot(&w.t().dot(w));
    if alpha > 0.0 {
        let masked = constraint.disc_mask() * &*z;
        denom += &((masked * &q_sq).mapv(|v| v * alpha));
    }
    if beta > 0.0 {
        numer += &((constraint.reduce(&graph.smooth(&h)) * &q_sq).mapv(|v| v * beta));
        denom += &((constraint.reduce(&graph.degree_scale(&h)) * &q_sq).mapv(|v| v * beta));
    }
    if gamma > 0.0 {
        numer += &((z_c * q).mapv(|v| v * gamma));
        denom += &((&*z * &q_sq).mapv(|v| v * gamma));
    }

    azip_update(z, &numer, &denom, eps);
    ensure_finite(z, "coefficient update")
}

fn normalize_impl(w: &mut Array2<f64>, z: &mut Array2<f64>, view: usize) -> Result<()> {
    let q = column_norms(w);
    if let Some(column) = q.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::DegenerateBasis { view, column });
    }
    for (h, &scale) in q.iter().enumerate() {
        w.column_mut(h).mapv_inplace(|v| v / scale);
        z.column_mut(h).mapv_inplace(|v| v * scale);
    }
    Ok(())
}

/// Elementwise `base *= numer / max(denom, eps)`.
fn azip_update(base: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>, eps: f64) {
    ndarray::Zip::from(base)
        .and(numer)
        .and(denom)
        .for_each(|b, &n, &d| *b *= n / d.max(eps));
}

fn ensure_finite(m: &Array2<f64>, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub(crate) fn column_norms(w: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(w.axis_iter(Axis(1)).map(|col| col.dot(&col).sqrt()))
}

fn frob_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// diag(A' B) for equally shaped matrices.
fn diag_of_product(a: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(
        a.axis_iter(Axis(1))
            .zip(b.axis_iter(Axis(1)))
            .map(|(ca, cb)| ca.dot(&cb)),
    )
}

/// Mean of the per-view coefficient matrices (optionally column-scaled by
/// each view's `Q`), summed in fixed view order so parallel and sequential
/// runs agree bitwise.
fn mean_in_view_order(z: &[Array2<f64>], q: Option<&[Array1<f64>]>) -> Array2<f64> {
    let mut sum = match q {
        Some(q) => &z[0] * &q[0],
        None => z[0].clone(),
    };
    for v in 1..z.len() {
        match q {
            Some(q) => sum += &(&z[v] * &q[v]),
            None => sum += &z[v],
        }
    }
    sum / z.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SyntheticSpec;
    use crate::graph::DeltaPolicy;
    use ndarray::array;

    struct Fixture {
        dataset: MultiViewDataset,
        constraint: LabelConstraint,
        graphs: Vec<ViewGraph>,
        config: SolverConfig,
    }

    impl Fixture {
        fn synthetic(seed: u64, labeled_ratio: f64, config: SolverConfig) -> Self {
            let spec = SyntheticSpec {
                classes: 3,
                per_class: 8,
                view_dims: vec![5, 7],
                separation: 4.0,
                noise: 0.4,
                seed,
            };
            let full = spec.generate().unwrap();
            let dataset = if labeled_ratio < 1.0 {
                full.mask_labels(labeled_ratio, seed ^ 0x9e3779b9).unwrap()
            } else {
                full
            };
            Self::from_dataset(dataset, config)
        }

        fn from_dataset(dataset: MultiViewDataset, config: SolverConfig) -> Self {
            let constraint =
                LabelConstraint::build(dataset.labels(), dataset.class_count(), config.m_s)
                    .unwrap();
            let graphs = (0..dataset.n_views())
                .map(|v| ViewGraph::build(dataset.view(v), 2, DeltaPolicy::Median).unwrap())
                .collect();
            Self {
                dataset,
                constraint,
                graphs,
                config,
            }
        }

        fn unlabeled(seed: u64, config: SolverConfig) -> Self {
            let spec = SyntheticSpec {
                classes: 2,
                per_class: 6,
                view_dims: vec![4],
                separation: 3.0,
                noise: 0.3,
                seed,
            };
            let full = spec.generate().unwrap();
            let views = full.views().to_vec();
            let labels = vec![None; full.n()];
            let dataset = MultiViewDataset::from_parts(views, labels, Some(2)).unwrap();
            Self::from_dataset(dataset, config)
        }

        fn problem(&self) -> Problem<'_> {
            Problem::new(&self.dataset, &self.constraint, &self.graphs, &self.config).unwrap()
        }
    }

    fn cfg(alpha: f64, beta: f64, gamma: f64, seed: u64) -> SolverConfig {
        SolverConfig {
            alpha,
            beta,
            gamma,
            seed,
            ..SolverConfig::default()
        }
    }

    fn max_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-30))
            .fold(0.0, f64::max)
    }

    #[test]
    fn initialization_is_deterministic_and_positive() {
        let fixture = Fixture::synthetic(9, 0.25, cfg(1.0, 1.0, 1.0, 123));
        let problem = fixture.problem();
        let a = problem.initialize();
        let b = problem.initialize();
        for v in 0..2 {
            assert_eq!(a.w[v], b.w[v]);
            assert_eq!(a.z[v], b.z[v]);
            assert!(a.w[v].iter().all(|&x| x >= 0.01));
            assert!(a.z[v].iter().all(|&x| x >= 0.01));
        }
        let mean = (&a.z[0] + &a.z[1]) / 2.0;
        assert_eq!(a.z_c, mean);
        for v in 0..2 {
            let q = column_norms(&a.w[v]);
            assert_eq!(a.q[v], q);
        }
    }

    #[test]
    fn objective_zero_at_exact_factorization() {
        let mut config = cfg(0.0, 0.0, 0.0, 5);
        config.m_s = 2;
        let fixture = Fixture::unlabeled(5, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();
        // Overwrite the data with an exact product.
        let h = fixture.constraint.expand(&state.z[0]);
        let x = state.w[0].dot(&h.t());
        let views = vec![x];
        let dataset =
            MultiViewDataset::from_parts(views, vec![None; fixture.dataset.n()], Some(2)).unwrap();
        let problem2 = Problem::new(
            &dataset,
            &fixture.constraint,
            &fixture.graphs,
            &fixture.config,
        )
        .unwrap();
        state.z_c = state.z[0].clone();
        let (total, terms) = problem2.objective(&state).unwrap();
        assert!(total < 1e-20, "total = {total}");
        assert_eq!(terms[0].discriminative, 0.0);
        assert_eq!(terms[0].graph, 0.0);
    }

    #[test]
    fn objective_scalar_consensus_case() {
        // One view, X=[[1]], W=[[1]], Z=[[1]], no labels, alpha=beta=0,
        // gamma=1, Zc=[[0]]: total is exactly 1.
        let views = vec![array![[1.0]]];
        let dataset = MultiViewDataset::from_parts(views, vec![None], Some(1)).unwrap();
        let constraint = LabelConstraint::build(dataset.labels(), 1, 1).unwrap();
        let graphs = vec![ViewGraph::disconnected(1)];
        let config = cfg(0.0, 0.0, 1.0, 0);
        let problem = Problem::new(&dataset, &constraint, &graphs, &config).unwrap();
        let mut state = problem.initialize();
        state.w[0] = array![[1.0]];
        state.z[0] = array![[1.0]];
        state.z_c = array![[0.0]];
        let (total, terms) = problem.objective(&state).unwrap();
        assert_eq!(total, 1.0);
        assert_eq!(terms[0].reconstruction, 0.0);
        assert_eq!(terms[0].consensus, 1.0);
    }

    #[test]
    fn single_view_consensus_term_vanishes_after_update() {
        let fixture = Fixture::unlabeled(8, cfg(0.0, 0.0, 1.0, 8));
        let problem = fixture.problem();
        let mut state = problem.initialize();
        problem.update_consensus(&mut state);
        assert_eq!(state.z_c, state.z[0]);
        // With Zc = Z Q the consensus term is exactly zero.
        state.z_c = &state.z[0] * &column_norms(&state.w[0]);
        let (_, terms) = problem.objective(&state).unwrap();
        assert_eq!(terms[0].consensus, 0.0);
        // After the norm transfer, Q is identity up to rounding.
        problem.normalize(&mut state, 0).unwrap();
        problem.update_consensus(&mut state);
        let (total, terms_after) = problem.objective(&state).unwrap();
        assert!(terms_after[0].consensus <= 1e-25 * total, "{terms_after:?}");
    }

    #[test]
    fn diagonal_terms_zero_coefficients() {
        let fixture = Fixture::synthetic(4, 0.25, cfg(1.0, 1.0, 1.0, 4));
        let problem = fixture.problem();
        let mut state = problem.initialize();
        state.z[0].fill(0.0);
        let t = problem.diagonal_terms(&state, 0);
        for arr in [&t.y1, &t.y2_plus, &t.y2_minus, &t.y3, &t.y4] {
            assert!(arr.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn diagonal_terms_no_labels_kills_y1() {
        let fixture = Fixture::unlabeled(6, cfg(1.0, 1.0, 1.0, 6));
        let problem = fixture.problem();
        let state = problem.initialize();
        let t = problem.diagonal_terms(&state, 0);
        assert!(t.y1.iter().all(|&x| x == 0.0));
        assert!(t.y3.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn diagonal_terms_scalar_case() {
        // d=1, Z=[[2]], Zc=[[3]], A=[[1]], S=D=0: Y3=4, Y4=6, Y2=0, Y1=0.
        let views = vec![array![[1.0]]];
        let dataset = MultiViewDataset::from_parts(views, vec![None], Some(1)).unwrap();
        let constraint = LabelConstraint::build(dataset.labels(), 1, 1).unwrap();
        let graphs = vec![ViewGraph::disconnected(1)];
        let config = cfg(1.0, 1.0, 1.0, 0);
        let problem = Problem::new(&dataset, &constraint, &graphs, &config).unwrap();
        let mut state = problem.initialize();
        state.z[0] = array![[2.0]];
        state.z_c = array![[3.0]];
        let t = problem.diagonal_terms(&state, 0);
        assert_eq!(t.y1[0], 0.0);
        assert_eq!(t.y2_plus[0], 0.0);
        assert_eq!(t.y2_minus[0], 0.0);
        assert_eq!(t.y3[0], 4.0);
        assert_eq!(t.y4[0], 6.0);
    }

    #[test]
    fn diagonal_y2_difference_matches_laplacian_quadratic() {
        let fixture = Fixture::synthetic(12, 0.3, cfg(1.0, 1.0, 1.0, 12));
        let problem = fixture.problem();
        let state = problem.initialize();
        for v in 0..2 {
            let t = problem.diagonal_terms(&state, v);
            let h = fixture.constraint.expand(&state.z[v]);
            let quad = h.t().dot(&fixture.graphs[v].laplacian().dot(&h));
            for (hh, diag) in quad.diag().iter().enumerate() {
                let diff = t.y2_plus[hh] - t.y2_minus[hh];
                assert!((diff - diag).abs() < 1e-10, "{diff} vs {diag}");
            }
        }
    }

    #[test]
    fn update_w_fixed_point_at_exact_factorization() {
        let config = cfg(0.0, 0.0, 0.0, 31);
        let fixture = Fixture::synthetic(31, 0.25, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();
        // Replace the view with the exact product so the ratio is one.
        let h = fixture.constraint.expand(&state.z[0]);
        let x = state.w[0].dot(&h.t());
        let mut views = fixture.dataset.views().to_vec();
        views[0] = x;
        let dataset =
            MultiViewDataset::from_parts(views, fixture.dataset.labels().to_vec(), Some(3))
                .unwrap();
        let problem2 = Problem::new(
            &dataset,
            &fixture.constraint,
            &fixture.graphs,
            &fixture.config,
        )
        .unwrap();
        let before = state.w[0].clone();
        let terms = problem2.diagonal_terms(&state, 0);
        problem2.update_w(&mut state, 0, &terms).unwrap();
        assert!(max_rel_diff(&before, &state.w[0]) < 1e-12);
    }

    #[test]
    fn update_z_fixed_point_at_exact_factorization() {
        let config = cfg(0.0, 0.0, 0.0, 32);
        let fixture = Fixture::unlabeled(32, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();
        let h = fixture.constraint.expand(&state.z[0]);
        let x = state.w[0].dot(&h.t());
        let dataset =
            MultiViewDataset::from_parts(vec![x], vec![None; fixture.dataset.n()], Some(2))
                .unwrap();
        let problem2 = Problem::new(
            &dataset,
            &fixture.constraint,
            &fixture.graphs,
            &fixture.config,
        )
        .unwrap();
        let before = state.z[0].clone();
        problem2.update_z(&mut state, 0).unwrap();
        assert!(max_rel_diff(&before, &state.z[0]) < 1e-12);
    }

    #[test]
    fn update_w_reduces_to_classic_rule_without_labels() {
        let config = cfg(0.0, 0.0, 0.0, 33);
        let fixture = Fixture::unlabeled(33, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();
        let w0 = state.w[0].clone();
        let z0 = state.z[0].clone();
        let terms = problem.diagonal_terms(&state, 0);
        problem.update_w(&mut state, 0, &terms).unwrap();
        // Directly coded classic rule W <- W .* (X H) ./ (W H'H), H = Z.
        let x = fixture.dataset.view(0);
        let numer = x.dot(&z0);
        let denom = w0.dot(&z0.t().dot(&z0));
        let mut expected = w0.clone();
        ndarray::Zip::from(&mut expected)
            .and(&numer)
            .and(&denom)
            .for_each(|w, &n, &d| *w *= n / d.max(1e-12));
        assert!(max_rel_diff(&expected, &state.w[0]) < 1e-12);
    }

    #[test]
    fn update_z_pulls_toward_consensus_under_large_gamma() {
        let config = cfg(0.0, 0.0, 1e9, 34);
        let fixture = Fixture::synthetic(34, 0.25, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();
        problem.normalize(&mut state, 0).unwrap();
        let before = (&state.z[0] - &state.z_c).mapv(|x| x * x).sum().sqrt();
        problem.update_z(&mut state, 0).unwrap();
        let after = (&state.z[0] - &state.z_c).mapv(|x| x * x).sum().sqrt();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn normalize_transfers_column_norms() {
        let views = vec![array![[3.0, 0.0], [4.0, 1.0]]];
        let dataset = MultiViewDataset::from_parts(views, vec![None, None], Some(2)).unwrap();
        let constraint = LabelConstraint::build(dataset.labels(), 2, 1).unwrap();
        let graphs = vec![ViewGraph::disconnected(2)];
        let config = cfg(0.0, 0.0, 0.0, 0);
        let problem = Problem::new(&dataset, &constraint, &graphs, &config).unwrap();
        let mut state = problem.initialize();
        state.w[0] = array![[3.0, 0.0], [4.0, 1.0]];
        state.z[0] = array![[1.0, 2.0], [3.0, 4.0]];
        problem.normalize(&mut state, 0).unwrap();
        assert_eq!(state.w[0].column(0).to_vec(), vec![0.6, 0.8]);
        assert_eq!(state.z[0].column(0).to_vec(), vec![5.0, 15.0]);
        assert_eq!(state.z[0].column(1).to_vec(), vec![2.0, 4.0]);
        // Already unit columns: a second pass is a no-op.
        let w = state.w[0].clone();
        let z = state.z[0].clone();
        problem.normalize(&mut state, 0).unwrap();
        assert!(max_rel_diff(&w, &state.w[0]) < 1e-15);
        assert!(max_rel_diff(&z, &state.z[0]) < 1e-15);
    }

    #[test]
    fn normalize_preserves_reconstruction() {
        let fixture = Fixture::synthetic(35, 0.25, cfg(1.0, 1.0, 1.0, 35));
        let problem = fixture.problem();
        let mut state = problem.initialize();
        let before = state.w[0].dot(&fixture.constraint.expand(&state.z[0]).t());
        problem.normalize(&mut state, 0).unwrap();
        let after = state.w[0].dot(&fixture.constraint.expand(&state.z[0]).t());
        assert!(max_rel_diff(&before, &after) < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let fixture = Fixture::unlabeled(36, cfg(0.0, 0.0, 0.0, 36));
        let problem = fixture.problem();
        let mut state = problem.initialize();
        state.w[0].column_mut(1).fill(0.0);
        let err = problem.normalize(&mut state, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateBasis { view: 0, column: 1 }));
    }

    #[test]
    fn objective_invariant_under_normalization() {
        let fixture = Fixture::synthetic(37, 0.25, cfg(2.0, 0.5, 0.7, 37));
        let problem = fixture.problem();
        let mut state = problem.initialize();
        let (before, _) = problem.objective(&state).unwrap();
        for v in 0..2 {
            problem.normalize(&mut state, v).unwrap();
        }
        let (after, _) = problem.objective(&state).unwrap();
        assert!((before - after).abs() / before.abs() < 1e-10);
    }

    #[test]
    fn consensus_is_view_mean() {
        let fixture = Fixture::synthetic(38, 0.25, cfg(1.0, 1.0, 1.0, 38));
        let problem = fixture.problem();
        let mut state = problem.initialize();
        for v in 0..2 {
            problem.normalize(&mut state, v).unwrap();
        }
        state.z[0].fill(1.0);
        state.z[1].fill(3.0);
        problem.update_consensus(&mut state);
        assert!(state.z_c.iter().all(|&x| x == 2.0));
        state.z[1].fill(1.0);
        problem.update_consensus(&mut state);
        assert!(state.z_c.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn fit_records_exactly_one_iteration_with_infinite_tol() {
        let mut config = cfg(1.0, 0.1, 0.1, 39);
        config.tol = f64::INFINITY;
        let fixture = Fixture::synthetic(39, 0.25, config);
        let state = fixture.problem().fit().unwrap();
        assert_eq!(state.iterations(), 1);
        assert_eq!(state.trace[0].iteration, 1);
    }

    #[test]
    fn baseline_variant_zeroes_alpha_and_beta_terms() {
        let mut config = cfg(5.0, 5.0, 0.5, 40);
        config.variant = Variant::Baseline;
        config.max_iters = 5;
        config.tol = 0.0;
        let fixture = Fixture::synthetic(40, 0.25, config);
        let state = fixture.problem().fit().unwrap();
        for entry in std::iter::once(&state.initial).chain(state.trace.iter()) {
            for t in &entry.terms {
                assert_eq!(t.discriminative, 0.0);
                assert_eq!(t.graph, 0.0);
            }
        }
        assert!(state.final_objective() < state.initial.total);
    }

    #[test]
    fn fit_descends_on_synthetic_data() {
        // Well-separated three-class instance, 10% labeled.
        let spec = SyntheticSpec {
            classes: 3,
            per_class: 20,
            view_dims: vec![6, 5],
            separation: 8.0,
            noise: 0.2,
            seed: 41,
        };
        let dataset = spec.generate().unwrap().mask_labels(0.1, 41).unwrap();
        let mut config = cfg(0.1, 0.01, 0.01, 41);
        config.max_iters = 300;
        config.tol = 0.0;
        let fixture = Fixture::from_dataset(dataset, config);
        let state = fixture.problem().fit().unwrap();
        let mut previous = state.initial.total;
        let mut increases = 0usize;
        for entry in &state.trace {
            if entry.total > previous {
                increases += 1;
            }
            previous = entry.total;
        }
        assert!(increases == 0, "{increases} increasing steps");
        assert!(state.final_objective() < 0.01 * state.initial.total);
    }

    #[test]
    fn factors_stay_nonnegative_across_runs() {
        for seed in 0..50u64 {
            let mut config = cfg(2.0, 0.2, 0.3, seed);
            config.max_iters = 15;
            config.tol = 0.0;
            let fixture = Fixture::synthetic(seed, 0.3, config);
            let problem = fixture.problem();
            let mut state = problem.initialize();
            for _ in 0..15 {
                for v in 0..2 {
                    let terms = problem.diagonal_terms(&state, v);
                    problem.update_w(&mut state, v, &terms).unwrap();
                    assert!(state.w[v].iter().all(|&x| x >= 0.0));
                    problem.normalize(&mut state, v).unwrap();
                    assert!(state.w[v].iter().all(|&x| x >= 0.0));
                    assert!(state.z[v].iter().all(|&x| x >= 0.0));
                    problem.update_z(&mut state, v).unwrap();
                    assert!(state.z[v].iter().all(|&x| x >= 0.0));
                }
                problem.update_consensus(&mut state);
                assert!(state.z_c.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn same_label_samples_share_representations_throughout() {
        let mut config = cfg(1.0, 0.5, 0.5, 42);
        config.max_iters = 10;
        config.tol = 0.0;
        let fixture = Fixture::synthetic(42, 0.5, config);
        let problem = fixture.problem();
        let state = problem.fit().unwrap();
        let labels = fixture.dataset.labels();
        for v in 0..2 {
            let h = fixture.constraint.expand(&state.z[v]);
            for i in 0..labels.len() {
                for j in (i + 1)..labels.len() {
                    if labels[i].is_some() && labels[i] == labels[j] {
                        assert_eq!(h.row(i), h.row(j));
                    }
                }
            }
        }
    }

    #[test]
    fn parallel_mode_matches_sequential_bitwise() {
        let mut config = cfg(1.5, 0.3, 0.2, 43);
        config.max_iters = 20;
        config.tol = 0.0;
        let fixture = Fixture::synthetic(43, 0.3, config);
        let problem = fixture.problem();
        let sequential = problem.fit_with_mode(false).unwrap();
        let parallel = problem.fit_with_mode(true).unwrap();
        for v in 0..2 {
            assert_eq!(sequential.w[v], parallel.w[v]);
            assert_eq!(sequential.z[v], parallel.z[v]);
        }
        assert_eq!(sequential.z_c, parallel.z_c);
        assert_eq!(sequential.final_objective(), parallel.final_objective());
    }

    #[test]
    fn no_normalization_variant_keeps_explicit_scale() {
        let mut config = cfg(1.0, 0.2, 0.3, 44);
        config.variant = Variant::NoNormalization;
        config.max_iters = 25;
        config.tol = 0.0;
        let fixture = Fixture::synthetic(44, 0.3, config);
        let state = fixture.problem().fit().unwrap();
        // Columns are generally not unit norm without the transfer.
        let q = column_norms(&state.w[0]);
        assert!(q.iter().any(|&v| (v - 1.0).abs() > 1e-3));
        assert!(state.final_objective() < state.initial.total);
        assert!(state.final_objective().is_finite());
    }

    #[test]
    fn no_normalization_variant_is_stable_across_seeds() {
        for seed in 0..10u64 {
            let mut config = cfg(1.0, 0.2, 0.3, seed);
            config.variant = Variant::NoNormalization;
            config.max_iters = 60;
            config.tol = 0.0;
            let fixture = Fixture::synthetic(seed.wrapping_mul(13) + 1, 0.3, config);
            let state = fixture.problem().fit().unwrap();
            assert!(state.final_objective().is_finite());
            assert!(
                state.final_objective() < state.initial.total,
                "seed {seed}: {} !< {}",
                state.final_objective(),
                state.initial.total
            );
            for v in 0..2 {
                assert!(state.w[v].iter().all(|&x| x >= 0.0 && x.is_finite()));
                assert!(state.z[v].iter().all(|&x| x >= 0.0 && x.is_finite()));
            }
        }
    }

    // Independent reference evaluations of the update rules, written with
    // naive loops straight from their definitions.
    mod reference {
        pub type M = Vec<Vec<f64>>;

        pub fn from_nd(a: &ndarray::Array2<f64>) -> M {
            (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| a[[i, j]]).collect())
                .collect()
        }

        pub fn zeros(r: usize, c: usize) -> M {
            vec![vec![0.0; c]; r]
        }

        pub fn matmul(a: &M, b: &M) -> M {
            let (r, inner, c) = (a.len(), b.len(), b[0].len());
            let mut out = zeros(r, c);
            for i in 0..r {
                for k in 0..inner {
                    for j in 0..c {
                        out[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            out
        }

        pub fn transpose(a: &M) -> M {
            let mut out = zeros(a[0].len(), a.len());
            for i in 0..a.len() {
                for j in 0..a[0].len() {
                    out[j][i] = a[i][j];
                }
            }
            out
        }

        /// Label constraint block matrix built from its definition.
        pub fn a_lc(labels: &[Option<usize>], c: usize) -> M {
            let n = labels.len();
            let l = labels.iter().take_while(|x| x.is_some()).count();
            if l == 0 {
                let mut out = zeros(n, n);
                for (i, row) in out.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                return out;
            }
            let mut out = zeros(n, n - l + c);
            for i in 0..n {
                if i < l {
                    out[i][labels[i].unwrap()] = 1.0;
                } else {
                    out[i][c + i - l] = 1.0;
                }
            }
            out
        }

        /// Discriminative mask built from its block definition.
        pub fn i_disc(labels: &[Option<usize>], c: usize, m_s: usize) -> M {
            let n = labels.len();
            let l = labels.iter().take_while(|x| x.is_some()).count();
            let rows = if l == 0 { n } else { n - l + c };
            let mut out = zeros(rows, c * m_s);
            if l > 0 {
                for (class, row) in out.iter_mut().take(c).enumerate() {
                    for (h, v) in row.iter_mut().enumerate() {
                        if !(class * m_s..(class + 1) * m_s).contains(&h) {
                            *v = 1.0;
                        }
                    }
                }
            }
            out
        }

        fn diag_of(m: &M) -> Vec<f64> {
            (0..m.len()).map(|i| m[i][i]).collect()
        }

        fn hadamard(a: &M, b: &M) -> M {
            let mut out = zeros(a.len(), a[0].len());
            for i in 0..a.len() {
                for j in 0..a[0].len() {
                    out[i][j] = a[i][j] * b[i][j];
                }
            }
            out
        }

        fn col_scale(a: &M, s: &[f64]) -> M {
            let mut out = a.clone();
            for row in out.iter_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v *= s[j];
                }
            }
            out
        }

        fn col_norms(w: &M) -> Vec<f64> {
            let d = w[0].len();
            (0..d)
                .map(|j| w.iter().map(|row| row[j] * row[j]).sum::<f64>().sqrt())
                .collect()
        }

        #[allow(clippy::too_many_arguments)]
        pub fn update_w(
            w: &M,
            x: &M,
            a: &M,
            z: &M,
            s: &M,
            d: &M,
            mask: &M,
            z_c: &M,
            alpha: f64,
            beta: f64,
            gamma: f64,
            eps: f64,
        ) -> M {
            let h = matmul(a, z);
            let mz = hadamard(mask, z);
            let y1 = diag_of(&matmul(&transpose(&mz), &mz));
            let y2p = diag_of(&matmul(&transpose(&h), &matmul(d, &h)));
            let y2m = diag_of(&matmul(&transpose(&h), &matmul(s, &h)));
            let y3 = diag_of(&matmul(&transpose(z), z));
            let y4 = diag_of(&matmul(&transpose(z_c), z));
            let q = col_norms(w);
            let q_inv: Vec<f64> = q.iter().map(|&v| 1.0 / v.max(eps)).collect();
            let qy4: Vec<f64> = q_inv.iter().zip(&y4).map(|(qi, y)| qi * y).collect();

            let xh = matmul(x, &h);
            let whh = matmul(w, &matmul(&transpose(&h), &h));
            let mut out = w.clone();
            for i in 0..w.len() {
                for hcol in 0..w[0].len() {
                    let numer = xh[i][hcol]
                        + beta * w[i][hcol] * y2m[hcol]
                        + gamma * w[i][hcol] * qy4[hcol];
                    let denom = whh[i][hcol]
                        + alpha * w[i][hcol] * y1[hcol]
                        + beta * w[i][hcol] * y2p[hcol]
                        + gamma * w[i][hcol] * y3[hcol];
                    out[i][hcol] = w[i][hcol] * numer / denom.max(eps);
                }
            }
            out
        }

        #[allow(clippy::too_many_arguments)]
        pub fn update_z(
            z: &M,
            x: &M,
            a: &M,
            s: &M,
            d: &M,
            mask: &M,
            w: &M,
            z_c: &M,
            q: &[f64],
            alpha: f64,
            beta: f64,
            gamma: f64,
            eps: f64,
        ) -> M {
            let at = transpose(a);
            let h = matmul(a, z);
            let q_sq: Vec<f64> = q.iter().map(|v| v * v).collect();
            let numer_recon = matmul(&at, &matmul(&transpose(x), w));
            let numer_graph = col_scale(&matmul(&at, &matmul(s, &h)), &q_sq);
            let numer_cons = col_scale(z_c, q);
            let denom_recon = matmul(&matmul(&at, &h), &matmul(&transpose(w), w));
            let denom_disc = col_scale(&hadamard(mask, z), &q_sq);
            let denom_graph = col_scale(&matmul(&at, &matmul(d, &h)), &q_sq);
            let denom_cons = col_scale(z, &q_sq);

            let mut out = z.clone();
            for j in 0..z.len() {
                for hcol in 0..z[0].len() {
                    let numer = numer_recon[j][hcol]
                        + beta * numer_graph[j][hcol]
                        + gamma * numer_cons[j][hcol];
                    let denom = denom_recon[j][hcol]
                        + alpha * denom_disc[j][hcol]
                        + beta * denom_graph[j][hcol]
                        + gamma * denom_cons[j][hcol];
                    out[j][hcol] = z[j][hcol] * numer / denom.max(eps);
                }
            }
            out
        }
    }

    fn graph_to_dense(g: &ViewGraph) -> (reference::M, reference::M) {
        let n = g.n();
        let s = reference::from_nd(g.similarity());
        let mut d = reference::zeros(n, n);
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = g.degrees()[i];
        }
        (s, d)
    }

    fn assert_matches_reference(actual: &Array2<f64>, expected: &reference::M) {
        for i in 0..actual.nrows() {
            for j in 0..actual.ncols() {
                let a = actual[[i, j]];
                let e = expected[i][j];
                let scale = a.abs().max(e.abs()).max(1e-30);
                assert!((a - e).abs() / scale < 1e-12, "({i},{j}): {a} vs {e}");
            }
        }
    }

    #[test]
    fn update_w_matches_independent_reference() {
        let config = cfg(1.0, 1.0, 1.0, 55);
        let fixture = Fixture::synthetic(55, 0.3, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();

        let labels = fixture.dataset.labels();
        let a = reference::a_lc(labels, 3);
        let mask = reference::i_disc(labels, 3, 1);
        let (s, d) = graph_to_dense(&fixture.graphs[0]);
        let expected = reference::update_w(
            &reference::from_nd(&state.w[0]),
            &reference::from_nd(fixture.dataset.view(0)),
            &a,
            &reference::from_nd(&state.z[0]),
            &s,
            &d,
            &mask,
            &reference::from_nd(&state.z_c),
            1.0,
            1.0,
            1.0,
            1e-12,
        );
        let terms = problem.diagonal_terms(&state, 0);
        problem.update_w(&mut state, 0, &terms).unwrap();
        assert_matches_reference(&state.w[0], &expected);
    }

    #[test]
    fn update_w_reference_on_three_by_four_single_view() {
        // One 3x4 view, two labeled samples, all three weights active.
        let views = vec![array![
            [0.9, 0.2, 0.4, 0.7],
            [0.1, 0.8, 0.6, 0.3],
            [0.5, 0.5, 0.2, 0.9]
        ]];
        let labels = vec![Some(0), Some(1), None, None];
        let dataset = MultiViewDataset::from_parts(views, labels, Some(2)).unwrap();
        let constraint = LabelConstraint::build(dataset.labels(), 2, 1).unwrap();
        let graphs = vec![ViewGraph::build(dataset.view(0), 1, DeltaPolicy::Median).unwrap()];
        let config = cfg(1.0, 1.0, 1.0, 99);
        let problem = Problem::new(&dataset, &constraint, &graphs, &config).unwrap();
        let mut state = problem.initialize();

        let a = reference::a_lc(dataset.labels(), 2);
        let mask = reference::i_disc(dataset.labels(), 2, 1);
        let (s, d) = graph_to_dense(&graphs[0]);
        let expected = reference::update_w(
            &reference::from_nd(&state.w[0]),
            &reference::from_nd(dataset.view(0)),
            &a,
            &reference::from_nd(&state.z[0]),
            &s,
            &d,
            &mask,
            &reference::from_nd(&state.z_c),
            1.0,
            1.0,
            1.0,
            1e-12,
        );
        let terms = problem.diagonal_terms(&state, 0);
        problem.update_w(&mut state, 0, &terms).unwrap();
        assert_matches_reference(&state.w[0], &expected);
    }

    #[test]
    fn fit_reports_divergence_with_iteration() {
        // Entries near 1e200 overflow the squared residual immediately.
        let views = vec![Array2::from_elem((3, 6), 1.0e200)];
        let dataset = MultiViewDataset::from_parts(views, vec![None; 6], Some(2)).unwrap();
        let constraint = LabelConstraint::build(dataset.labels(), 2, 1).unwrap();
        let graphs = vec![ViewGraph::disconnected(6)];
        let config = cfg(0.0, 0.0, 0.0, 1);
        let problem = Problem::new(&dataset, &constraint, &graphs, &config).unwrap();
        let err = problem.fit().unwrap_err();
        assert!(matches!(err, Error::Divergence { iteration: 0 }));
    }

    #[test]
    fn update_z_matches_independent_reference() {
        let config = cfg(1.0, 1.0, 1.0, 56);
        let fixture = Fixture::synthetic(56, 0.3, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();
        problem.normalize(&mut state, 0).unwrap();

        let labels = fixture.dataset.labels();
        let a = reference::a_lc(labels, 3);
        let mask = reference::i_disc(labels, 3, 1);
        let (s, d) = graph_to_dense(&fixture.graphs[0]);
        let ones = vec![1.0; fixture.constraint.latent_dim()];
        let expected = reference::update_z(
            &reference::from_nd(&state.z[0]),
            &reference::from_nd(fixture.dataset.view(0)),
            &a,
            &s,
            &d,
            &mask,
            &reference::from_nd(&state.w[0]),
            &reference::from_nd(&state.z_c),
            &ones,
            1.0,
            1.0,
            1.0,
            1e-12,
        );
        problem.update_z(&mut state, 0).unwrap();
        assert_matches_reference(&state.z[0], &expected);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let config = cfg(0.8, 0.4, 0.6, 57);
        let fixture = Fixture::synthetic(57, 0.3, config);
        let problem = fixture.problem();
        let mut state = problem.initialize();
        let step = 1e-5;

        let grad_w = problem.gradient_w(&state, 0);
        for &(i, j) in &[(0, 0), (2, 1), (4, 2)] {
            let orig = state.w[0][[i, j]];
            state.w[0][[i, j]] = orig + step;
            let (up, _) = problem.objective(&state).unwrap();
            state.w[0][[i, j]] = orig - step;
            let (down, _) = problem.objective(&state).unwrap();
            state.w[0][[i, j]] = orig;
            let fd = (up - down) / (2.0 * step);
            let scale = fd.abs().max(grad_w[[i, j]].abs()).max(1e-12);
            assert!(
                (fd - grad_w[[i, j]]).abs() / scale < 1e-5,
                "W({i},{j}): {fd} vs {}",
                grad_w[[i, j]]
            );
        }

        let grad_z = problem.gradient_z(&state, 0);
        for &(i, j) in &[(0, 0), (1, 2), (5, 1)] {
            let orig = state.z[0][[i, j]];
            state.z[0][[i, j]] = orig + step;
            let (up, _) = problem.objective(&state).unwrap();
            state.z[0][[i, j]] = orig - step;
            let (down, _) = problem.objective(&state).unwrap();
            state.z[0][[i, j]] = orig;
            let fd = (up - down) / (2.0 * step);
            let scale = fd.abs().max(grad_z[[i, j]].abs()).max(1e-12);
            assert!(
                (fd - grad_z[[i, j]]).abs() / scale < 1e-5,
                "Z({i},{j}): {fd} vs {}",
                grad_z[[i, j]]
            );
        }
    }
}
