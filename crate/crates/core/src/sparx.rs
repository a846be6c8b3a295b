//! GP-SPARX: one GP per wind-direction pattern mapping
//! `[u∞, w(1,s)·u(1), …, w(S,s)·u(S)]` to the speed at turbine `s`.
//!
//! The GP is shared by all turbines of the farm. Neighbours outside the
//! wake of `s` are masked to exactly zero, so a turbine's prediction never
//! depends on turbines that do not shadow it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_wake_graph, topological_order, FarmLayout, WakeGeometryParams, WakeGraph,
};
use crate::gp::{subsample_indices, FitOptions, GpFile, GpHyperparams, TrainedGp};
use crate::simulator::{layout_digest, FarmDataset, WindSample};

pub const FORMAT_VERSION: u32 = 1;

/// Input row for turbine `s` (1-based): the free-stream speed followed by
/// the wake-masked speed of every turbine.
pub fn feature_row(graph: &WakeGraph, u_inf: f64, speeds: &[f64], s: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(speeds.len() + 1);
    row.push(u_inf);
    row.extend(
        speeds
            .iter()
            .enumerate()
            .map(|(k, &u)| if graph.weight(k + 1, s) { u } else { 0.0 }),
    );
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// `(t, s)` for each row.
    pub index: Vec<(u64, usize)>,
}

/// One row per `(t, s)`, ordered by time then turbine id.
pub fn build_design(dataset: &FarmDataset, graph: &WakeGraph) -> Result<Design> {
    let n = graph.n_turbines();
    if dataset.n_turbines != n {
        return Err(Error::input(format!(
            "dataset has {} turbines, wake graph has {}",
            dataset.n_turbines, n
        )));
    }
    let rows = dataset.len() * n;
    let mut design = Design {
        inputs: Vec::with_capacity(rows),
        targets: Vec::with_capacity(rows),
        index: Vec::with_capacity(rows),
    };
    for record in &dataset.records {
        if record.speeds.len() != n {
            return Err(Error::input(format!(
                "record t={} has {} speeds, expected {}",
                record.sample.t,
                record.speeds.len(),
                n
            )));
        }
        for s in 1..=n {
            design
                .inputs
                .push(feature_row(graph, record.sample.u_inf, &record.speeds, s));
            design.targets.push(record.speeds[s - 1]);
            design.index.push((record.sample.t, s));
        }
    }
    Ok(design)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparxOptions {
    #[serde(deserialize_with = "fit_over_defaults")]
    pub fit: FitOptions,
    /// Cap on design rows the GP conditions on; larger designs are
    /// subsampled with the fit seed.
    pub max_train_rows: Option<usize>,
}

impl Default for SparxOptions {
    fn default() -> Self {
        SparxOptions {
            fit: FitOptions {
                max_opt_points: Some(250),
                ..FitOptions::default()
            },
            max_train_rows: Some(1000),
        }
    }
}

/// Fields missing from a partial `fit` object keep the SPARX defaults rather
/// than the generic GP ones.
fn fit_over_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> Result<FitOptions, D::Error> {
    use serde::de::Error as _;
    let given = serde_json::Value::deserialize(d)?;
    let mut merged = serde_json::to_value(SparxOptions::default().fit).map_err(D::Error::custom)?;
    if let (Some(base), serde_json::Value::Object(over)) = (merged.as_object_mut(), given) {
        base.extend(over);
    } else {
        return Err(D::Error::custom("fit options must be an object"));
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparxPrediction {
    /// Indexed by `s - 1`.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// A trained GP bound to the wake pattern of one wind direction.
#[derive(Debug, Clone)]
pub struct GpSparxModel {
    pattern_phi: f64,
    graph: WakeGraph,
    order: Vec<usize>,
    gp: TrainedGp,
}

pub fn train_pattern(
    dataset: &FarmDataset,
    layout: &FarmLayout,
    geom: &WakeGeometryParams,
    pattern_phi: f64,
    opts: &SparxOptions,
) -> Result<GpSparxModel> {
    if dataset.n_turbines != layout.len() || dataset.layout_digest != layout_digest(layout) {
        return Err(Error::input(
            "training dataset was generated on a different layout",
        ));
    }
    if dataset.len() < 2 {
        return Err(Error::Fit(format!(
            "a pattern model needs at least 2 time steps, got {}",
            dataset.len()
        )));
    }
    let graph = build_wake_graph(layout, pattern_phi, geom)?;
    let design = build_design(dataset, &graph)?;
    let keep = subsample_indices(
        design.inputs.len(),
        opts.max_train_rows.unwrap_or(usize::MAX),
        opts.fit.seed,
    );
    let xs: Vec<Vec<f64>> = keep.iter().map(|&i| design.inputs[i].clone()).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| design.targets[i]).collect();
    let init = GpHyperparams {
        signal_sd: 1.0,
        lengthscales: vec![2.0; layout.len() + 1],
        noise_sd: 0.1,
    };
    let gp = TrainedGp::fit(&xs, &ys, &init, &opts.fit)?;
    GpSparxModel::new(pattern_phi, graph, gp)
}

impl GpSparxModel {
    pub fn new(pattern_phi: f64, graph: WakeGraph, gp: TrainedGp) -> Result<Self> {
        if graph.phi() != pattern_phi {
            return Err(Error::input(
                "wake graph was built for a different direction",
            ));
        }
        if gp.dim() != graph.n_turbines() + 1 {
            return Err(Error::input(format!(
                "GP input dimension {} does not match {} turbines + 1",
                gp.dim(),
                graph.n_turbines()
            )));
        }
        let order = topological_order(&graph)?;
        Ok(GpSparxModel {
            pattern_phi,
            graph,
            order,
            gp,
        })
    }

    pub fn pattern_phi(&self) -> f64 {
        self.pattern_phi
    }

    pub fn graph(&self) -> &WakeGraph {
        &self.graph
    }

    pub fn gp(&self) -> &TrainedGp {
        &self.gp
    }

    pub fn n_turbines(&self) -> usize {
        self.graph.n_turbines()
    }

    fn check_sample(&self, sample: &WindSample) -> Result<()> {
        if !(sample.u_inf.is_finite() && sample.u_inf >= 0.0) {
            return Err(Error::input(format!(
                "invalid free-stream speed {}",
                sample.u_inf
            )));
        }
        Ok(())
    }

    /// Predicts every turbine from measured neighbour speeds.
    pub fn predict_osa(&self, sample: &WindSample, measured: &[f64]) -> Result<SparxPrediction> {
        self.check_sample(sample)?;
        let n = self.n_turbines();
        if measured.len() != n {
            return Err(Error::input(format!(
                "{} measured speeds for {} turbines",
                measured.len(),
                n
            )));
        }
        let rows: Vec<Vec<f64>> = (1..=n)
            .map(|s| feature_row(&self.graph, sample.u_inf, measured, s))
            .collect();
        let p = self.gp.predict(&rows)?;
        Ok(SparxPrediction {
            mean: p.mean,
            variance: p.variance,
        })
    }

    /// Predicts every turbine from the free stream alone, feeding each
    /// turbine's predicted mean to its downstream neighbours. Variances are
    /// the GP variances at the cascaded inputs; input uncertainty is not
    /// propagated.
    pub fn predict_cascade(&self, sample: &WindSample) -> Result<SparxPrediction> {
        self.check_sample(sample)?;
        let n = self.n_turbines();
        let mut mean = vec![0.0; n];
        for &s in &self.order {
            let row = feature_row(&self.graph, sample.u_inf, &mean, s);
            mean[s - 1] = self.gp.predict_mean(&row)?;
        }
        let rows: Vec<Vec<f64>> = (1..=n)
            .map(|s| feature_row(&self.graph, sample.u_inf, &mean, s))
            .collect();
        let p = self.gp.predict(&rows)?;
        Ok(SparxPrediction {
            mean,
            variance: p.variance,
        })
    }

    pub fn to_file(&self) -> SparxModelFile {
        SparxModelFile {
            format_version: FORMAT_VERSION,
            pattern_phi: self.pattern_phi,
            n_turbines: self.n_turbines(),
            edges: self.graph.edges(),
            gp: self.gp.to_file(),
        }
    }

    pub fn from_file(file: SparxModelFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::input(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        let graph = WakeGraph::from_edges(file.pattern_phi, file.n_turbines, &file.edges)?;
        let gp = TrainedGp::from_file(file.gp)?;
        Self::new(file.pattern_phi, graph, gp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_file()).expect("model serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SparxModelFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        Self::from_file(file).map_err(|e| Error::format(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparxModelFile {
    pub format_version: u32,
    pub pattern_phi: f64,
    pub n_turbines: usize,
    pub edges: Vec<(usize, usize)>,
    pub gp: GpFile,
}
