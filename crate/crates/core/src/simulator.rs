//! Synthetic wake-affected farm data.
//!
//! Each turbine sees the free-stream speed reduced by a top-hat Jensen
//! deficit from every upstream rotor whose wake cone covers it. Deficits
//! from several rotors combine as a root-sum-square, capped at 0.8.
//! Deficits are referenced to the free stream, never to the (already
//! reduced) speed at the upstream rotor.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::geometry::{build_wake_graph, topological_order, FarmLayout, WakeGeometryParams};
use crate::util::{fmt_f64, sha256_hex};

/// Upper bound on the combined fractional deficit at any turbine.
pub const MAX_COMBINED_DEFICIT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindSample {
    pub t: u64,
    pub u_inf: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmRecord {
    pub sample: WindSample,
    /// Speed at turbine `s` is stored at index `s - 1`.
    pub speeds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmDataset {
    /// SHA-256 of the layout the data were generated on.
    pub layout_digest: String,
    pub n_turbines: usize,
    pub records: Vec<FarmRecord>,
}

/// How the free-stream speed and direction evolve over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreeStreamProcess {
    Constant {
        u_inf: f64,
        phi: f64,
    },
    /// Direction advances linearly through one full turn over the run;
    /// speed oscillates as `u_mean + u_amplitude * sin(2π t / u_period)`.
    Sweep {
        phi_start: f64,
        u_mean: f64,
        u_amplitude: f64,
        u_period: f64,
    },
    /// Gaussian random walks; speed reflects off `[u_min, u_max]`.
    /// `phi_step_sd = 0` holds the direction fixed.
    RandomWalk {
        phi_start: f64,
        phi_step_sd: f64,
        u_start: f64,
        u_step_sd: f64,
        u_min: f64,
        u_max: f64,
    },
}

impl FreeStreamProcess {
    fn validate(&self) -> Result<()> {
        let direction = |phi: f64| {
            if angle::is_valid_direction(phi) {
                Ok(())
            } else {
                Err(Error::input(format!("direction {phi} is outside [0, 2π)")))
            }
        };
        match *self {
            FreeStreamProcess::Constant { u_inf, phi } => {
                direction(phi)?;
                if !(u_inf.is_finite() && u_inf >= 0.0) {
                    return Err(Error::input(format!(
                        "u_inf must be non-negative, got {u_inf}"
                    )));
                }
            }
            FreeStreamProcess::Sweep {
                phi_start,
                u_mean,
                u_amplitude,
                u_period,
            } => {
                direction(phi_start)?;
                if !(u_amplitude >= 0.0 && u_mean >= u_amplitude && u_mean.is_finite()) {
                    return Err(Error::input(
                        "sweep speed must stay non-negative (u_mean >= u_amplitude >= 0)",
                    ));
                }
                if !(u_period.is_finite() && u_period > 0.0) {
                    return Err(Error::input("u_period must be positive"));
                }
            }
            FreeStreamProcess::RandomWalk {
                phi_start,
                phi_step_sd,
                u_start,
                u_step_sd,
                u_min,
                u_max,
            } => {
                direction(phi_start)?;
                if !(phi_step_sd >= 0.0 && u_step_sd >= 0.0) {
                    return Err(Error::input("random-walk step sds must be non-negative"));
                }
                if !(0.0 <= u_min && u_min < u_max && u_max.is_finite()) {
                    return Err(Error::input(
                        "random-walk speed bounds need 0 <= u_min < u_max",
                    ));
                }
                if !(u_min..=u_max).contains(&u_start) {
                    return Err(Error::input("u_start must lie within [u_min, u_max]"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub thrust_coefficient: f64,
    pub turbulence_noise_sd: f64,
    pub free_stream: FreeStreamProcess,
    pub rng_seed: u64,
    pub n_steps: usize,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let ct = self.thrust_coefficient;
        if !(ct > 0.0 && ct < 1.0) {
            return Err(Error::input(format!(
                "thrust coefficient must lie in (0, 1), got {ct}"
            )));
        }
        if !(self.turbulence_noise_sd.is_finite() && self.turbulence_noise_sd >= 0.0) {
            return Err(Error::input("turbulence_noise_sd must be non-negative"));
        }
        if self.n_steps == 0 {
            return Err(Error::input("n_steps must be positive"));
        }
        self.free_stream.validate()
    }
}

/// Fractional speed deficit at distance `d` behind a rotor of radius `r0`.
pub fn jensen_deficit(d: f64, ct: f64, k: f64, r0: f64) -> Result<f64> {
    if !(ct > 0.0 && ct < 1.0) {
        return Err(Error::input(format!(
            "thrust coefficient must lie in (0, 1), got {ct}"
        )));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::input(format!(
            "downstream distance must be positive, got {d}"
        )));
    }
    if !(k > 0.0 && r0 > 0.0) {
        return Err(Error::input(
            "wake expansion and rotor radius must be positive",
        ));
    }
    let expansion = 1.0 + k * d / r0;
    let deficit = (1.0 - (1.0 - ct).sqrt()) / (expansion * expansion);
    Ok(deficit.clamp(0.0, 1.0 - f64::EPSILON))
}

/// Root-sum-square superposition of individual wake deficits, capped at
/// [`MAX_COMBINED_DEFICIT`].
pub fn combine_deficits(deficits: &[f64]) -> f64 {
    let sum_sq: f64 = deficits.iter().map(|d| d * d).sum();
    sum_sq.sqrt().min(MAX_COMBINED_DEFICIT)
}

struct FreeStreamState {
    u: f64,
    phi: f64,
}

impl FreeStreamState {
    fn new(process: &FreeStreamProcess) -> Self {
        match *process {
            FreeStreamProcess::Constant { u_inf, phi } => FreeStreamState { u: u_inf, phi },
            FreeStreamProcess::Sweep {
                phi_start, u_mean, ..
            } => FreeStreamState {
                u: u_mean,
                phi: phi_start,
            },
            FreeStreamProcess::RandomWalk {
                phi_start, u_start, ..
            } => FreeStreamState {
                u: u_start,
                phi: phi_start,
            },
        }
    }

    /// Advances to step `t` and returns `(u_inf, phi)`.
    fn step<R: Rng>(
        &mut self,
        process: &FreeStreamProcess,
        t: usize,
        n_steps: usize,
        rng: &mut R,
    ) -> (f64, f64) {
        match *process {
            FreeStreamProcess::Constant { .. } => {}
            FreeStreamProcess::Sweep {
                phi_start,
                u_mean,
                u_amplitude,
                u_period,
            } => {
                self.phi = angle::normalize(phi_start + TAU * t as f64 / n_steps as f64);
                self.u = u_mean + u_amplitude * (TAU * t as f64 / u_period).sin();
            }
            FreeStreamProcess::RandomWalk {
                phi_step_sd,
                u_step_sd,
                u_min,
                u_max,
                ..
            } => {
                if t > 0 {
                    if u_step_sd > 0.0 {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        self.u = reflect(self.u + u_step_sd * z, u_min, u_max);
                    }
                    if phi_step_sd > 0.0 {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        self.phi = angle::normalize(self.phi + phi_step_sd * z);
                    }
                }
            }
        }
        (self.u.max(0.0), self.phi)
    }
}

fn reflect(mut u: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    // fold into one period of the reflection
    u = (u - lo).rem_euclid(2.0 * width);
    if u > width {
        u = 2.0 * width - u;
    }
    lo + u
}

/// Topological order and combined deficit per turbine (indexed by `s - 1`)
/// for one wind direction.
fn wake_profile(
    layout: &FarmLayout,
    geom: &WakeGeometryParams,
    ct: f64,
    phi: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let graph = build_wake_graph(layout, phi, geom)?;
    let order = topological_order(&graph)?;
    let frame = layout.wind_frame(phi);
    let r0 = layout.rotor_radius();
    let combined = (1..=layout.len())
        .map(|s| {
            let deficits = graph
                .upstream(s)
                .map(|i| {
                    jensen_deficit(
                        frame[s - 1].0 - frame[i - 1].0,
                        ct,
                        geom.expansion_coefficient,
                        r0,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(combine_deficits(&deficits))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((order, combined))
}

/// Noise-free speeds at every turbine for one free-stream sample, indexed
/// by `s - 1`.
pub fn wake_speeds(
    layout: &FarmLayout,
    geom: &WakeGeometryParams,
    ct: f64,
    u_inf: f64,
    phi: f64,
) -> Result<Vec<f64>> {
    let (_, combined) = wake_profile(layout, geom, ct, phi)?;
    Ok(combined.iter().map(|d| u_inf * (1.0 - d)).collect())
}

pub fn simulate(
    layout: &FarmLayout,
    geom: &WakeGeometryParams,
    config: &SimulationConfig,
) -> Result<FarmDataset> {
    layout.validate()?;
    geom.validate()?;
    config.validate()?;

    let n = layout.len();
    let ct = config.thrust_coefficient;
    let noise = if config.turbulence_noise_sd > 0.0 {
        Some(Normal::new(0.0, config.turbulence_noise_sd).expect("validated sd"))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut state = FreeStreamState::new(&config.free_stream);
    // topological order and combined deficits, keyed by direction bits
    let mut cache: HashMap<u64, (Vec<usize>, Vec<f64>)> = HashMap::new();
    let mut records = Vec::with_capacity(config.n_steps);

    for t in 0..config.n_steps {
        let (u_inf, phi) = state.step(&config.free_stream, t, config.n_steps, &mut rng);
        if let Entry::Vacant(slot) = cache.entry(phi.to_bits()) {
            slot.insert(wake_profile(layout, geom, ct, phi)?);
        }
        let (order, combined) = &cache[&phi.to_bits()];

        let mut speeds = vec![0.0; n];
        for &s in order {
            let mut u = u_inf * (1.0 - combined[s - 1]);
            if let Some(noise) = &noise {
                u += noise.sample(&mut rng);
            }
            speeds[s - 1] = u.max(0.0);
        }
        records.push(FarmRecord {
            sample: WindSample {
                t: t as u64,
                u_inf,
                phi,
            },
            speeds,
        });
    }

    Ok(FarmDataset {
        layout_digest: layout_digest(layout),
        n_turbines: n,
        records,
    })
}

pub fn layout_digest(layout: &FarmLayout) -> String {
    sha256_hex(
        serde_json::to_string(layout)
            .expect("layout serializes")
            .as_bytes(),
    )
}

impl FarmDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut last_t = None;
        for r in &self.records {
            if r.speeds.len() != self.n_turbines {
                return Err(Error::input(format!(
                    "record t={} has {} speeds, expected {}",
                    r.sample.t,
                    r.speeds.len(),
                    self.n_turbines
                )));
            }
            if r.speeds.iter().any(|u| !(u.is_finite() && *u >= 0.0)) || r.sample.u_inf < 0.0 {
                return Err(Error::input(format!(
                    "record t={} has a negative speed",
                    r.sample.t
                )));
            }
            if !angle::is_valid_direction(r.sample.phi) {
                return Err(Error::input(format!(
                    "record t={} has direction out of range",
                    r.sample.t
                )));
            }
            if last_t.is_some_and(|prev| r.sample.t <= prev) {
                return Err(Error::input(format!(
                    "time index {} is not increasing",
                    r.sample.t
                )));
            }
            last_t = Some(r.sample.t);
        }
        Ok(())
    }

    /// CSV with header `t,phi,u_inf,u_1,...,u_S`, floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,phi,u_inf");
        for s in 1..=self.n_turbines {
            let _ = write!(out, ",u_{s}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{}",
                r.sample.t,
                fmt_f64(r.sample.phi),
                fmt_f64(r.sample.u_inf)
            );
            for u in &r.speeds {
                out.push(',');
                out.push_str(&fmt_f64(*u));
            }
            out.push('\n');
        }
        out
    }

    pub fn read_csv(path: &Path, layout_digest: String) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::format(path, e))?
            .clone();
        let n_turbines = headers.len().saturating_sub(3);
        let expected: Vec<String> = ["t", "phi", "u_inf"]
            .iter()
            .map(|s| s.to_string())
            .chain((1..=n_turbines).map(|s| format!("u_{s}")))
            .collect();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::format(path, "unexpected dataset header"));
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::format(path, e))?;
            let float = |k: usize| -> Result<f64> {
                row[k]
                    .parse::<f64>()
                    .map_err(|e| Error::format(path, format!("column {k}: {e}")))
            };
            let t = row[0].parse::<u64>().map_err(|e| Error::format(path, e))?;
            records.push(FarmRecord {
                sample: WindSample {
                    t,
                    phi: float(1)?,
                    u_inf: float(2)?,
                },
                speeds: (3..3 + n_turbines).map(float).collect::<Result<_>>()?,
            });
        }
        let dataset = FarmDataset {
            layout_digest,
            n_turbines,
            records,
        };
        dataset.validate().map_err(|e| Error::format(path, e))?;
        Ok(dataset)
    }
}
