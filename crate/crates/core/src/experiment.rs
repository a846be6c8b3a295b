//! The simulate → train → evaluate pipeline driven by the CLI.
//!
//! Output directory layout:
//!
//! ```text
//! data/train_<k>.csv, data/train_<k>.json   one fixed-direction run per training angle
//! data/test.csv, data/test.json             full direction sweep
//! models/model_<k>.json                      GP-SPARX model for training angle k
//! models/sectors.json                        sector table
//! models/manifest.json                       ties models, sectors and config hash together
//! report/records.csv                         one row per (t, s)
//! report/polar.csv, report/polar_by_turbine.csv
//! report/summary.json
//! ```
//!
//! Every file is a pure function of the configuration and seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::evaluation::{
    bin_polar, evaluate_sweep, polar_by_turbine_csv, polar_csv, records_csv, summarize,
    EvaluationSummary,
};
use crate::geometry::{FarmLayout, WakeGeometryParams};
use crate::simulator::{layout_digest, simulate, FarmDataset, FreeStreamProcess, SimulationConfig};
use crate::sparx::{train_pattern, GpSparxModel, SparxOptions};
use crate::switching::{build_sectors, Mode, SectorTable, SwitchingModel};
use crate::util::sha256_hex;

pub const FORMAT_VERSION: u32 = 1;

/// Free-stream speed for the fixed-direction training runs: a bounded
/// Gaussian random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRuns {
    pub n_steps: usize,
    pub u_start: f64,
    pub u_step_sd: f64,
    pub u_min: f64,
    pub u_max: f64,
}

/// The test run sweeps the direction once around the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSweep {
    pub n_steps: usize,
    pub phi_start: f64,
    pub u_mean: f64,
    pub u_amplitude: f64,
    pub u_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub thrust_coefficient: f64,
    pub turbulence_noise_sd: f64,
    pub training: TrainingRuns,
    pub test: TestSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Layout JSON, relative to the config file's directory.
    pub layout: PathBuf,
    #[serde(default)]
    pub geometry: WakeGeometryParams,
    pub simulation: SimulationSettings,
    pub training_angles: Vec<f64>,
    /// Interpret `training_angles` and `test.phi_start` as degrees.
    #[serde(default)]
    pub degrees: bool,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    /// Relative to the config file's directory.
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub model: SparxOptions,
}

fn default_bins() -> usize {
    360
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// 4 training angles at the compass points, 500 steps each, and a
    /// 1440-step test sweep.
    pub fn desk_scale(layout: impl Into<PathBuf>) -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        ExperimentConfig {
            layout: layout.into(),
            geometry: WakeGeometryParams::default(),
            simulation: SimulationSettings {
                thrust_coefficient: 0.8,
                turbulence_noise_sd: 0.1,
                training: TrainingRuns {
                    n_steps: 500,
                    u_start: 10.0,
                    u_step_sd: 0.8,
                    u_min: 4.0,
                    u_max: 16.0,
                },
                test: TestSweep {
                    n_steps: 1440,
                    phi_start: 0.0,
                    u_mean: 10.0,
                    u_amplitude: 4.0,
                    u_period: 97.0,
                },
            },
            training_angles: vec![0.0, FRAC_PI_2, PI, 1.5 * PI],
            degrees: false,
            mode: Mode::Osa,
            n_bins: 360,
            output_dir: default_output(),
            seed: 42,
            model: SparxOptions::default(),
        }
    }

    /// Converts degree-valued angles to radians in place.
    fn convert_degrees(&mut self) {
        if self.degrees {
            for a in &mut self.training_angles {
                *a = angle::normalize(a.to_radians());
            }
            self.simulation.test.phi_start =
                angle::normalize(self.simulation.test.phi_start.to_radians());
            self.degrees = false;
        }
    }

    fn validate(&self) -> Result<()> {
        if self.training_angles.is_empty() {
            return Err(Error::input("training_angles must not be empty"));
        }
        // also rejects duplicates and out-of-range angles
        build_sectors(&self.training_angles)?;
        if self.n_bins < 4 {
            return Err(Error::input("n_bins must be at least 4"));
        }
        self.geometry.validate()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
    /// Forces degree interpretation of config angles.
    pub degrees: bool,
}

/// Derives an independent stream seed from the experiment seed.
pub fn derive_seed(seed: u64, label: &str, index: usize) -> u64 {
    let digest = sha2::Digest::finalize(sha2::Digest::chain_update(
        <sha2::Sha256 as sha2::Digest>::new(),
        format!("{seed}:{label}:{index}").as_bytes(),
    ));
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    pub kind: String,
    pub training_angle: Option<f64>,
    pub layout_digest: String,
    pub layout: FarmLayout,
    pub geometry: WakeGeometryParams,
    pub simulation: SimulationConfig,
    pub n_turbines: usize,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub training_angle: f64,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub layout_digest: String,
    pub models: Vec<ManifestEntry>,
    pub sectors_file: String,
    pub sectors_sha256: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub manifest_path: PathBuf,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub config_hash: String,
    pub manifest_sha256: String,
    pub summary: EvaluationSummary,
}

/// A resolved configuration: angles in radians, layout loaded, output
/// directory fixed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub layout: FarmLayout,
    pub out_dir: PathBuf,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

impl Experiment {
    pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = read(config_path)?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(config_path, e))?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        Self::new(config, base, overrides)
    }

    /// `base` resolves the relative layout and output paths in `config`.
    pub fn new(mut config: ExperimentConfig, base: &Path, overrides: &Overrides) -> Result<Self> {
        if overrides.degrees {
            config.degrees = true;
        }
        config.convert_degrees();
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(mode) = overrides.mode {
            config.mode = mode;
        }
        config.validate()?;
        let layout_path = base.join(&config.layout);
        let layout = FarmLayout::load(&layout_path)?;
        let out_dir = match &overrides.out {
            Some(out) => out.clone(),
            None => base.join(&config.output_dir),
        };
        Ok(Experiment {
            config,
            layout,
            out_dir,
        })
    }

    /// Hash of everything that determines the outputs: the resolved config
    /// with the layout path replaced by the layout digest and the output
    /// directory left out.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(&self.config).expect("config serializes");
        let obj = value.as_object_mut().expect("config is an object");
        obj.remove("output_dir");
        obj.insert("layout".into(), layout_digest(&self.layout).into());
        sha256_hex(
            serde_json::to_string(&value)
                .expect("value serializes")
                .as_bytes(),
        )
    }

    fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("report")
    }

    pub fn train_dataset_path(&self, k: usize) -> PathBuf {
        self.data_dir().join(format!("train_{k}.csv"))
    }

    pub fn test_dataset_path(&self) -> PathBuf {
        self.data_dir().join("test.csv")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.models_dir().join("manifest.json")
    }

    pub fn training_config(&self, k: usize) -> SimulationConfig {
        let s = &self.config.simulation;
        SimulationConfig {
            thrust_coefficient: s.thrust_coefficient,
            turbulence_noise_sd: s.turbulence_noise_sd,
            free_stream: FreeStreamProcess::RandomWalk {
                phi_start: self.config.training_angles[k],
                phi_step_sd: 0.0,
                u_start: s.training.u_start,
                u_step_sd: s.training.u_step_sd,
                u_min: s.training.u_min,
                u_max: s.training.u_max,
            },
            rng_seed: derive_seed(self.config.seed, "train", k),
            n_steps: s.training.n_steps,
        }
    }

    pub fn test_config(&self) -> SimulationConfig {
        let s = &self.config.simulation;
        SimulationConfig {
            thrust_coefficient: s.thrust_coefficient,
            turbulence_noise_sd: s.turbulence_noise_sd,
            free_stream: FreeStreamProcess::Sweep {
                phi_start: s.test.phi_start,
                u_mean: s.test.u_mean,
                u_amplitude: s.test.u_amplitude,
                u_period: s.test.u_period,
            },
            rng_seed: derive_seed(self.config.seed, "test", 0),
            n_steps: s.test.n_steps,
        }
    }

    fn write_dataset(
        &self,
        csv_path: &Path,
        kind: &str,
        training_angle: Option<f64>,
        sim: &SimulationConfig,
    ) -> Result<FarmDataset> {
        let dataset = simulate(&self.layout, &self.config.geometry, sim)?;
        write(csv_path, &dataset.to_csv())?;
        let sidecar = DatasetSidecar {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            training_angle,
            layout_digest: dataset.layout_digest.clone(),
            layout: self.layout.clone(),
            geometry: self.config.geometry,
            simulation: sim.clone(),
            n_turbines: dataset.n_turbines,
            n_steps: dataset.len(),
        };
        write(&csv_path.with_extension("json"), &to_json(&sidecar))?;
        Ok(dataset)
    }

    /// Writes one training dataset per angle and the test sweep. Returns the
    /// CSV paths written.
    pub fn simulate(&self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (k, &a) in self.config.training_angles.iter().enumerate() {
            let path = self.train_dataset_path(k);
            self.write_dataset(&path, "train", Some(a), &self.training_config(k))?;
            written.push(path);
        }
        let path = self.test_dataset_path();
        self.write_dataset(&path, "test", None, &self.test_config())?;
        written.push(path);
        Ok(written)
    }

    fn read_dataset(&self, csv_path: &Path) -> Result<FarmDataset> {
        let sidecar_path = csv_path.with_extension("json");
        let sidecar: DatasetSidecar = serde_json::from_str(&read(&sidecar_path)?)
            .map_err(|e| Error::format(&sidecar_path, e))?;
        let digest = layout_digest(&self.layout);
        if sidecar.layout_digest != digest {
            return Err(Error::format(
                &sidecar_path,
                "dataset was generated on a different layout",
            ));
        }
        let dataset = FarmDataset::read_csv(csv_path, digest)?;
        if dataset.n_turbines != self.layout.len() {
            return Err(Error::format(
                csv_path,
                "turbine count does not match the layout",
            ));
        }
        Ok(dataset)
    }

    /// Fits one model per training angle. The manifest is written only when
    /// every angle succeeds.
    pub fn train(&self) -> Result<TrainOutcome> {
        let manifest_path = self.manifest_path();
        if manifest_path.exists() {
            std::fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        }
        let datasets = (0..self.config.training_angles.len())
            .map(|k| self.read_dataset(&self.train_dataset_path(k)))
            .collect::<Result<Vec<_>>>()?;

        let mut entries = Vec::new();
        let mut failures = Vec::new();
        for (k, (&phi, dataset)) in self
            .config
            .training_angles
            .iter()
            .zip(&datasets)
            .enumerate()
        {
            let mut opts = self.config.model.clone();
            opts.fit.seed = derive_seed(self.config.seed, "fit", k);
            match train_pattern(dataset, &self.layout, &self.config.geometry, phi, &opts) {
                Ok(model) => {
                    let file = format!("model_{k}.json");
                    let json = to_json(&model.to_file());
                    write(&self.models_dir().join(&file), &json)?;
                    log::info!("trained pattern {k} at phi={phi:.4} rad");
                    entries.push(ManifestEntry {
                        index: k,
                        training_angle: phi,
                        file,
                        sha256: sha256_hex(json.as_bytes()),
                    });
                }
                Err(e) => {
                    log::error!("pattern {k} at phi={phi:.4} rad failed: {e}");
                    failures.push(format!("angle {k} ({phi} rad): {e}"));
                }
            }
        }
        if !failures.is_empty() {
            return Err(Error::Fit(failures.join("; ")));
        }

        let table = build_sectors(&self.config.training_angles)?;
        let sectors_json = to_json(&table);
        write(&self.models_dir().join("sectors.json"), &sectors_json)?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config_hash: self.config_hash(),
            layout_digest: layout_digest(&self.layout),
            models: entries,
            sectors_file: "sectors.json".into(),
            sectors_sha256: sha256_hex(sectors_json.as_bytes()),
        };
        let manifest_json = to_json(&manifest);
        write(&manifest_path, &manifest_json)?;
        Ok(TrainOutcome {
            manifest_path,
            manifest_sha256: sha256_hex(manifest_json.as_bytes()),
        })
    }

    /// Loads the trained models and sector table named by the manifest,
    /// verifying file hashes.
    pub fn load_models(&self) -> Result<(Manifest, String, Vec<GpSparxModel>, SectorTable)> {
        let manifest_path = self.manifest_path();
        let manifest_json = read(&manifest_path)?;
        let manifest: Manifest =
            serde_json::from_str(&manifest_json).map_err(|e| Error::format(&manifest_path, e))?;
        if manifest.layout_digest != layout_digest(&self.layout) {
            return Err(Error::format(
                &manifest_path,
                "models were trained on a different layout",
            ));
        }
        let checked = |file: &str, sha: &str| -> Result<(PathBuf, String)> {
            let path = self.models_dir().join(file);
            let text = read(&path)?;
            if sha256_hex(text.as_bytes()) != sha {
                return Err(Error::format(
                    &path,
                    "file hash does not match the manifest",
                ));
            }
            Ok((path, text))
        };
        let mut models = Vec::new();
        for entry in &manifest.models {
            let (path, text) = checked(&entry.file, &entry.sha256)?;
            let file = serde_json::from_str(&text).map_err(|e| Error::format(&path, e))?;
            models.push(GpSparxModel::from_file(file).map_err(|e| Error::format(&path, e))?);
        }
        let (path, text) = checked(&manifest.sectors_file, &manifest.sectors_sha256)?;
        let table: SectorTable =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e))?;
        Ok((
            manifest,
            sha256_hex(manifest_json.as_bytes()),
            models,
            table,
        ))
    }

    pub fn evaluate(&self) -> Result<Report> {
        let (manifest, manifest_sha256, models, table) = self.load_models()?;
        let test = self.read_dataset(&self.test_dataset_path())?;
        let predictor = SwitchingModel::new(models, table, self.config.mode)?;
        let records = evaluate_sweep(&predictor, &test)?;
        let map = bin_polar(&records, self.config.n_bins)?;
        let summary = summarize(&records, &map, &predictor.table, self.config.mode)?;
        let dir = self.report_dir();
        write(&dir.join("records.csv"), &records_csv(&records))?;
        write(&dir.join("polar.csv"), &polar_csv(&map))?;
        write(
            &dir.join("polar_by_turbine.csv"),
            &polar_by_turbine_csv(&map),
        )?;
        let report = Report {
            format_version: FORMAT_VERSION,
            config_hash: manifest.config_hash,
            manifest_sha256,
            summary,
        };
        write(&dir.join("summary.json"), &to_json(&report))?;
        Ok(report)
    }
}
