//! Config-driven experiment runner: label-ratio protocols with repeated
//! random labelings, ablation studies, and hyperparameter sweeps, all
//! emitting reproducible reports keyed by a deterministic seed chain.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::LabelConstraint;
use crate::dataset::{read_matrix_csv, write_matrix_csv, MultiViewDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_run, AssignmentMode, EvalSettings, EvalSummary};
use crate::graph::{DeltaPolicy, ViewGraph};
use crate::solver::{Problem, SolverConfig, Variant};

/// Where the experiment's data comes from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Files {
        views: Vec<PathBuf>,
        labels: PathBuf,
        #[serde(default)]
        classes: Option<usize>,
    },
    Synthetic(SyntheticSpec),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec {
            classes: 3,
            per_class: 50,
            view_dims: vec![10, 8],
            separation: 5.0,
            noise: 0.6,
            seed: 1,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GraphSettings {
    pub k: usize,
    pub delta: DeltaPolicy,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            k: 3,
            delta: DeltaPolicy::Median,
        }
    }
}

/// File-level hyperparameter pins; these beat any preset.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct HyperOverrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SweepGrids {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k: Vec<usize>,
}

impl SweepGrids {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty() && self.beta.is_empty() && self.gamma.is_empty() && self.k.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EvalConfig {
    pub repeats: usize,
    pub restarts: usize,
    pub mode: AssignmentMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            restarts: 20,
            mode: AssignmentMode::KMeans,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Named hyperparameter preset (yale, orl, ecg, webkb), applied per
    /// ratio; explicit `overrides` win over the preset.
    pub preset: Option<String>,
    pub overrides: HyperOverrides,
    pub ratios: Vec<f64>,
    /// Independent random labelings per ratio.
    pub redraws: usize,
    pub solver: SolverConfig,
    pub graph: GraphSettings,
    /// Per-view graph settings; empty means `graph` applies to every view.
    pub graph_per_view: Vec<GraphSettings>,
    pub sweep: SweepGrids,
    pub variants: Vec<Variant>,
    pub eval: EvalConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub parallel: bool,
    pub dump_factors: bool,
    pub dump_graphs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            preset: None,
            overrides: HyperOverrides::default(),
            ratios: vec![0.1, 0.2, 0.3],
            redraws: 5,
            solver: SolverConfig::default(),
            graph: GraphSettings::default(),
            graph_per_view: Vec::new(),
            sweep: SweepGrids::default(),
            variants: vec![Variant::Full],
            eval: EvalConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 42,
            parallel: false,
            dump_factors: false,
            dump_graphs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::config("ratios", "needs at least one ratio"));
        }
        for (i, &r) in self.ratios.iter().enumerate() {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::config(format!("ratios[{i}]"), "must lie in (0, 1]"));
            }
        }
        if self.redraws == 0 {
            return Err(Error::config("redraws", "must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "needs at least one variant"));
        }
        if self.eval.repeats == 0 {
            return Err(Error::config("eval.repeats", "must be at least 1"));
        }
        if self.eval.restarts == 0 {
            return Err(Error::config("eval.restarts", "must be at least 1"));
        }
        if self.graph.k == 0 {
            return Err(Error::config("graph.k", "must be at least 1"));
        }
        for (i, g) in self.graph_per_view.iter().enumerate() {
            if g.k == 0 {
                return Err(Error::config(
                    format!("graph_per_view[{i}].k"),
                    "must be at least 1",
                ));
            }
        }
        if let Some(name) = &self.preset {
            preset(name)?;
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.solver.validate()
    }

    /// Loads either a plain config or a run manifest (which embeds one).
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let config_value = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        serde_json::from_value(config_value)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    /// Hyperparameters for one ratio: preset values (if any) overridden by
    /// explicit pins, defaulting to the base solver/graph settings.
    pub fn resolve_hyper(&self, ratio: f64) -> Result<(f64, f64, f64, usize)> {
        let base = match &self.preset {
            Some(name) => preset(name)?.at_ratio(ratio),
            None => (
                self.solver.alpha,
                self.solver.beta,
                self.solver.gamma,
                self.graph.k,
            ),
        };
        Ok((
            self.overrides.alpha.unwrap_or(base.0),
            self.overrides.beta.unwrap_or(base.1),
            self.overrides.gamma.unwrap_or(base.2),
            self.overrides.k.unwrap_or(base.3),
        ))
    }

    pub fn load_base_dataset(&self) -> Result<MultiViewDataset> {
        let dataset = match &self.dataset {
            DatasetSource::Files {
                views,
                labels,
                classes,
            } => MultiViewDataset::load(views, labels, *classes)?,
            DatasetSource::Synthetic(spec) => spec.generate()?,
        };
        if dataset.truth().is_none() {
            return Err(Error::config(
                "dataset",
                "the ratio protocol needs complete ground-truth labels",
            ));
        }
        Ok(dataset)
    }
}

/// Bundled per-dataset hyperparameter defaults, keyed by label ratio.
#[derive(Debug, Clone, Copy)]
pub struct PresetTable {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub gamma: [f64; 3],
    pub k: usize,
}

impl PresetTable {
    /// Columns correspond to 10%, 20% and 30% labeled; other ratios snap to
    /// the nearest column (ties toward the smaller ratio).
    pub fn at_ratio(&self, ratio: f64) -> (f64, f64, f64, usize) {
        let anchors = [0.1, 0.2, 0.3];
        let mut idx = 0;
        let mut best = f64::INFINITY;
        for (i, &a) in anchors.iter().enumerate() {
            let d = (ratio - a).abs();
            if d < best {
                best = d;
                idx = i;
            }
        }
        (self.alpha[idx], self.beta[idx], self.gamma[idx], self.k)
    }
}

pub fn preset(name: &str) -> Result<PresetTable> {
    match name.to_ascii_lowercase().as_str() {
        "yale" => Ok(PresetTable {
            alpha: [1e3, 1e4, 1e2],
            beta: [0.1, 0.1, 1.0],
            gamma: [0.1, 0.1, 0.1],
            k: 2,
        }),
        "orl" => Ok(PresetTable {
            alpha: [1e2, 1e3, 1e3],
            beta: [1.0, 1.0, 0.1],
            gamma: [0.01, 0.01, 0.01],
            k: 2,
        }),
        "ecg" => Ok(PresetTable {
            alpha: [1e5, 1e4, 1e3],
            beta: [10.0, 1.0, 10.0],
            gamma: [0.1, 0.1, 0.1],
            k: 4,
        }),
        "webkb" => Ok(PresetTable {
            alpha: [1e3, 1e3, 1e3],
            beta: [1.0, 1.0, 1.0],
            gamma: [1.0, 1.0, 1.0],
            k: 3,
        }),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds context words into the master seed; every report row carries the
/// seeds this derives so any cell can be reproduced in isolation.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0xA076_1D64_78BD_642F);
    for &p in parts {
        state = splitmix64(state ^ p);
    }
    state
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

const SEED_MASK: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_EVAL: u64 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub variant: String,
    pub ratio: f64,
    pub redraw: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: usize,
    pub mask_seed: u64,
    pub init_seed: u64,
    pub eval_seed: u64,
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub ac_mean: f64,
    pub ac_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
}

/// Redraw-level aggregate: mean and sample std over the per-redraw means.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRecord {
    pub variant: String,
    pub ratio: f64,
    pub redraws: usize,
    pub ac_mean: f64,
    pub ac_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub metrics: MetricsReport,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy)]
struct CellSpec {
    ratio_idx: usize,
    redraw: usize,
    variant: Variant,
}

fn cell_stem(variant: Variant, ratio: f64, redraw: usize) -> String {
    let ratio = format!("{ratio}").replace('.', "_");
    format!("{}_r{}_d{}", variant.name(), ratio, redraw)
}

fn run_cell(
    config: &ExperimentConfig,
    base: &MultiViewDataset,
    spec: CellSpec,
    out_dir: &Path,
) -> Result<CellRecord> {
    let ratio = config.ratios[spec.ratio_idx];
    let (alpha, beta, gamma, k) = config.resolve_hyper(ratio)?;
    let variant_hash = hash_name(spec.variant.name());
    let cell_parts = |kind: u64, with_variant: bool| -> u64 {
        let mut parts = vec![kind, spec.ratio_idx as u64, spec.redraw as u64];
        if with_variant {
            parts.push(variant_hash);
        }
        derive_seed(config.seed, &parts)
    };
    // Labelings are shared across variants so ablations compare like for
    // like; initialization and scoring seeds are variant-specific.
    let mask_seed = cell_parts(SEED_MASK, false);
    let init_seed = cell_parts(SEED_INIT, true);
    let eval_seed = cell_parts(SEED_EVAL, true);

    let dataset = base.mask_labels(ratio, mask_seed)?;
    let solver = SolverConfig {
        alpha,
        beta,
        gamma,
        seed: init_seed,
        variant: spec.variant,
        ..config.solver.clone()
    };
    let constraint = LabelConstraint::build(dataset.labels(), dataset.class_count(), solver.m_s)?;

    let mut graphs = Vec::with_capacity(dataset.n_views());
    for v in 0..dataset.n_views() {
        let settings = if config.graph_per_view.is_empty() {
            GraphSettings { k, ..config.graph }
        } else {
            if config.graph_per_view.len() != dataset.n_views() {
                return Err(Error::config(
                    "graph_per_view",
                    format!(
                        "{} entries for {} views",
                        config.graph_per_view.len(),
                        dataset.n_views()
                    ),
                ));
            }
            config.graph_per_view[v]
        };
        graphs.push(ViewGraph::build(
            dataset.view(v),
            settings.k,
            settings.delta,
        )?);
    }

    let problem = Problem::new(&dataset, &constraint, &graphs, &solver)?;
    // View blocks are independent and the consensus mean is accumulated in
    // view order, so the parallel path is bit-identical to the sequential one.
    let state = problem.fit_with_mode(config.parallel)?;

    let settings = EvalSettings {
        repeats: config.eval.repeats,
        restarts: config.eval.restarts,
        seed: eval_seed,
        mode: config.eval.mode,
    };
    let summary = evaluate_run(&state, &dataset, &constraint, &settings)?;

    let stem = cell_stem(spec.variant, ratio, spec.redraw);
    state.write_trace_csv(&out_dir.join(format!("trace_{stem}.csv")))?;

    if config.dump_factors {
        let dir = out_dir.join("factors").join(&stem);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for v in 0..dataset.n_views() {
            write_matrix_csv(&dir.join(format!("W_v{v}.csv")), &state.w[v])?;
            write_matrix_csv(&dir.join(format!("Z_v{v}.csv")), &state.z[v])?;
            let q = Array2::from_shape_fn((1, state.q[v].len()), |(_, j)| state.q[v][j]);
            write_matrix_csv(&dir.join(format!("Q_v{v}.csv")), &q)?;
        }
        write_matrix_csv(&dir.join("Zc.csv"), &state.z_c)?;
        let cell_info = serde_json::json!({
            "variant": spec.variant.name(),
            "ratio": ratio,
            "redraw": spec.redraw,
            "mask_seed": mask_seed,
            "init_seed": init_seed,
            "eval_seed": eval_seed,
        });
        let path = dir.join("cell.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cell_info).unwrap())
            .map_err(|e| Error::io(&path, e))?;
    }
    if config.dump_graphs {
        let dir = out_dir.join("graphs");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (v, g) in graphs.iter().enumerate() {
            write_matrix_csv(&dir.join(format!("S_v{v}_{stem}.csv")), g.similarity())?;
        }
    }

    Ok(CellRecord {
        variant: spec.variant.name().to_string(),
        ratio,
        redraw: spec.redraw,
        alpha,
        beta,
        gamma,
        k,
        mask_seed,
        init_seed,
        eval_seed,
        iterations: state.iterations(),
        initial_objective: state.initial.total,
        final_objective: state.final_objective(),
        ac_mean: summary.ac_mean,
        ac_std: summary.ac_std,
        nmi_mean: summary.nmi_mean,
        nmi_std: summary.nmi_std,
    })
}

fn aggregate(cells: &[CellRecord], ratios: &[f64], variants: &[Variant]) -> Vec<AggregateRecord> {
    let mut out = Vec::new();
    for variant in variants {
        for &ratio in ratios {
            let group: Vec<&CellRecord> = cells
                .iter()
                .filter(|c| c.variant == variant.name() && c.ratio == ratio)
                .collect();
            if group.is_empty() {
                continue;
            }
            let stats = |values: Vec<f64>| -> (f64, f64) {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                if values.len() < 2 {
                    return (mean, 0.0);
                }
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                (mean, var.sqrt())
            };
            let (ac_mean, ac_std) = stats(group.iter().map(|c| c.ac_mean).collect());
            let (nmi_mean, nmi_std) = stats(group.iter().map(|c| c.nmi_mean).collect());
            out.push(AggregateRecord {
                variant: variant.name().to_string(),
                ratio,
                redraws: group.len(),
                ac_mean,
                ac_std,
                nmi_mean,
                nmi_std,
            });
        }
    }
    out
}

fn execute_cells(
    config: &ExperimentConfig,
    base: &MultiViewDataset,
    specs: &[CellSpec],
    out_dir: &Path,
) -> Result<Vec<CellRecord>> {
    if config.parallel {
        specs
            .par_iter()
            .map(|&spec| run_cell(config, base, spec, out_dir))
            .collect()
    } else {
        specs
            .iter()
            .map(|&spec| run_cell(config, base, spec, out_dir))
            .collect()
    }
}

fn write_metrics(out_dir: &Path, metrics: &MetricsReport) -> Result<()> {
    let path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join("metrics.csv");
    let mut csv = String::from("variant,ratio,AC,NMI\n");
    for a in &metrics.aggregates {
        csv.push_str(&format!(
            "{},{},{:.2}±{:.2},{:.2}±{:.2}\n",
            a.variant,
            a.ratio,
            100.0 * a.ac_mean,
            100.0 * a.ac_std,
            100.0 * a.nmi_mean,
            100.0 * a.nmi_std
        ));
    }
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

fn write_manifest(out_dir: &Path, command: &str, config: &ExperimentConfig) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "mvnmf",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::io(&path, e))
}

/// Runs the full (ratio x redraw x variant) protocol and writes
/// `metrics.json`, `metrics.csv`, per-cell traces and `manifest.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let base = config.load_base_dataset()?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    let mut specs = Vec::new();
    for ratio_idx in 0..config.ratios.len() {
        for redraw in 0..config.redraws {
            for &variant in &config.variants {
                specs.push(CellSpec {
                    ratio_idx,
                    redraw,
                    variant,
                });
            }
        }
    }

    let cells = execute_cells(config, &base, &specs, &config.out_dir)?;
    let aggregates = aggregate(&cells, &config.ratios, &config.variants);
    let metrics = MetricsReport { cells, aggregates };

    write_metrics(&config.out_dir, &metrics)?;
    write_manifest(&config.out_dir, "run", config)?;
    Ok(ExperimentReport {
        metrics,
        out_dir: config.out_dir.clone(),
    })
}

/// Runs the five-variant ablation protocol.
pub fn run_ablation(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut config = config.clone();
    config.variants = Variant::ALL.to_vec();
    let report = run_experiment(&config)?;
    write_manifest(&config.out_dir, "ablate", &config)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub parameter: String,
    pub value: f64,
    pub ratio: f64,
    pub ac_mean: f64,
    pub ac_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
}

#[derive(Debug)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub out_dir: PathBuf,
}

/// One-at-a-time grid sweeps: each parameter's grid is scanned with the
/// other parameters held at their resolved values, one row per
/// (parameter, value, ratio) aggregated over redraws.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    if config.sweep.is_empty() {
        return Err(Error::config("sweep", "all sweep grids are empty"));
    }
    let base = config.load_base_dataset()?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    let variant = config.variants.first().copied().unwrap_or(Variant::Full);
    let mut records = Vec::new();
    let grids: [(&str, Vec<f64>); 4] = [
        ("alpha", config.sweep.alpha.clone()),
        ("beta", config.sweep.beta.clone()),
        ("gamma", config.sweep.gamma.clone()),
        ("k", config.sweep.k.iter().map(|&k| k as f64).collect()),
    ];

    for (parameter, grid) in grids {
        for &value in &grid {
            let mut point = config.clone();
            point.variants = vec![variant];
            point.sweep = SweepGrids::default();
            point.out_dir = config
                .out_dir
                .join(format!("sweep_{parameter}_{}", fmt_value(value)));
            match parameter {
                "alpha" => point.overrides.alpha = Some(value),
                "beta" => point.overrides.beta = Some(value),
                "gamma" => point.overrides.gamma = Some(value),
                "k" => point.overrides.k = Some(value as usize),
                _ => unreachable!(),
            }
            std::fs::create_dir_all(&point.out_dir).map_err(|e| Error::io(&point.out_dir, e))?;

            let mut specs = Vec::new();
            for ratio_idx in 0..point.ratios.len() {
                for redraw in 0..point.redraws {
                    specs.push(CellSpec {
                        ratio_idx,
                        redraw,
                        variant,
                    });
                }
            }
            let cells = execute_cells(&point, &base, &specs, &point.out_dir)?;
            for agg in aggregate(&cells, &point.ratios, &point.variants) {
                records.push(SweepRecord {
                    parameter: parameter.to_string(),
                    value,
                    ratio: agg.ratio,
                    ac_mean: agg.ac_mean,
                    ac_std: agg.ac_std,
                    nmi_mean: agg.nmi_mean,
                    nmi_std: agg.nmi_std,
                });
            }
        }
    }

    let path = config.out_dir.join("sweep.csv");
    let mut csv = String::from("parameter,value,ratio,ac_mean,ac_std,nmi_mean,nmi_std\n");
    for r in &records {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.parameter, r.value, r.ratio, r.ac_mean, r.ac_std, r.nmi_mean, r.nmi_std
        ));
    }
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;

    let path = config.out_dir.join("sweep.json");
    std::fs::write(&path, serde_json::to_string_pretty(&records).unwrap())
        .map_err(|e| Error::io(&path, e))?;
    write_manifest(&config.out_dir, "sweep", config)?;

    Ok(SweepReport {
        records,
        out_dir: config.out_dir.clone(),
    })
}

fn fmt_value(value: f64) -> String {
    format!("{value}").replace('.', "_")
}

/// Scores previously exported factors: rebuilds the cell's dataset and
/// constraint from the config plus the recorded seeds, loads `Zc.csv`, and
/// clusters its expanded representation.
pub fn evaluate_saved(config: &ExperimentConfig, factors_dir: &Path) -> Result<EvalSummary> {
    let cell_path = factors_dir.join("cell.json");
    let text = std::fs::read_to_string(&cell_path).map_err(|e| Error::io(&cell_path, e))?;
    let cell: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::config(cell_path.display().to_string(), e.to_string()))?;
    let ratio = cell["ratio"]
        .as_f64()
        .ok_or_else(|| Error::config(cell_path.display().to_string(), "missing ratio"))?;
    let mask_seed = cell["mask_seed"]
        .as_u64()
        .ok_or_else(|| Error::config(cell_path.display().to_string(), "missing mask_seed"))?;
    let eval_seed = cell["eval_seed"].as_u64().unwrap_or(0);

    let base = config.load_base_dataset()?;
    let dataset = base.mask_labels(ratio, mask_seed)?;
    let constraint =
        LabelConstraint::build(dataset.labels(), dataset.class_count(), config.solver.m_s)?;
    let z_c = read_matrix_csv(&factors_dir.join("Zc.csv"))?;
    if z_c.nrows() != constraint.rows() || z_c.ncols() != constraint.latent_dim() {
        return Err(Error::ShapeMismatch {
            context: "saved consensus factor",
            expected: format!("{}x{}", constraint.rows(), constraint.latent_dim()),
            found: format!("{}x{}", z_c.nrows(), z_c.ncols()),
        });
    }

    let truth = dataset.truth().expect("ratio protocol keeps ground truth");
    let representation = constraint.expand(&z_c);
    let settings = EvalSettings {
        repeats: config.eval.repeats,
        restarts: config.eval.restarts,
        seed: eval_seed,
        mode: config.eval.mode,
    };
    crate::evaluation::score_representation(
        &representation,
        truth,
        dataset.class_count(),
        constraint.subspace_dim(),
        &settings,
    )
}
