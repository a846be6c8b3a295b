//! Direction sectors and hard switching between pattern models.
//!
//! Sector boundaries sit at the circular midpoints between consecutive
//! training angles. Sectors are half-open, `[lower, upper)`, so a direction
//! lying exactly on a boundary belongs to the sector that starts there.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::simulator::WindSample;
use crate::sparx::{GpSparxModel, SparxPrediction};
use crate::util::serialize_sig17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub model_index: usize,
    #[serde(serialize_with = "serialize_sig17")]
    pub training_angle: f64,
    /// Inclusive. When `lower > upper` the sector wraps through 0.
    #[serde(serialize_with = "serialize_sig17")]
    pub lower: f64,
    /// Exclusive.
    #[serde(serialize_with = "serialize_sig17")]
    pub upper: f64,
}

impl Sector {
    pub fn contains(&self, phi: f64) -> bool {
        if self.lower < self.upper {
            self.lower <= phi && phi < self.upper
        } else {
            phi >= self.lower || phi < self.upper
        }
    }

    pub fn width(&self) -> f64 {
        if self.lower < self.upper {
            self.upper - self.lower
        } else {
            TAU - self.lower + self.upper
        }
    }
}

/// Partition of `[0, 2π)` into one sector per training angle, listed in
/// model-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorTable {
    sectors: Vec<Sector>,
}

pub fn build_sectors(training_angles: &[f64]) -> Result<SectorTable> {
    if training_angles.is_empty() {
        return Err(Error::input("at least one training angle is required"));
    }
    if let Some(a) = training_angles
        .iter()
        .find(|a| !angle::is_valid_direction(**a))
    {
        return Err(Error::input(format!(
            "training angle {a} is outside [0, 2π)"
        )));
    }
    let n = training_angles.len();
    if n == 1 {
        return Ok(SectorTable {
            sectors: vec![Sector {
                model_index: 0,
                training_angle: training_angles[0],
                lower: 0.0,
                upper: TAU,
            }],
        });
    }

    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&a, &b| training_angles[a].total_cmp(&training_angles[b]));
    for w in sorted.windows(2) {
        if training_angles[w[0]] == training_angles[w[1]] {
            return Err(Error::input(format!(
                "duplicate training angle {}",
                training_angles[w[0]]
            )));
        }
    }

    let mut sectors: Vec<Sector> = training_angles
        .iter()
        .enumerate()
        .map(|(model_index, &a)| Sector {
            model_index,
            training_angle: a,
            lower: 0.0,
            upper: 0.0,
        })
        .collect();
    for k in 0..n {
        let here = sorted[k];
        let next = sorted[(k + 1) % n];
        let gap = angle::ccw_arc(training_angles[here], training_angles[next]);
        let mid = angle::normalize(training_angles[here] + 0.5 * gap);
        sectors[here].upper = mid;
        sectors[next].lower = mid;
    }
    for s in &sectors {
        if !s.contains(s.training_angle) || s.training_angle == s.lower {
            return Err(Error::input(format!(
                "training angle {} is too close to its neighbours to own a sector",
                s.training_angle
            )));
        }
    }
    Ok(SectorTable { sectors })
}

impl SectorTable {
    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn training_angles(&self) -> Vec<f64> {
        self.sectors.iter().map(|s| s.training_angle).collect()
    }

    /// Sector boundaries in ascending order. Empty for a single sector.
    pub fn boundaries(&self) -> Vec<f64> {
        if self.sectors.len() < 2 {
            return Vec::new();
        }
        let mut b: Vec<f64> = self.sectors.iter().map(|s| s.lower).collect();
        b.sort_by(f64::total_cmp);
        b
    }

    /// Index of the model whose sector contains `phi` (wrapped into
    /// `[0, 2π)` first).
    pub fn select(&self, phi: f64) -> Result<usize> {
        if !phi.is_finite() {
            return Err(Error::input(format!("wind direction {phi} is not finite")));
        }
        let phi = angle::normalize(phi);
        self.sectors
            .iter()
            .find(|s| s.contains(phi))
            .map(|s| s.model_index)
            .ok_or_else(|| Error::Invariant(format!("no sector contains {phi}")))
    }
}

pub fn select_model(table: &SectorTable, phi: f64) -> Result<usize> {
    table.select(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Neighbour inputs are the measured speeds.
    #[default]
    Osa,
    /// Neighbour inputs are predicted along the wake graph.
    Cascade,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "osa" => Ok(Mode::Osa),
            "cascade" => Ok(Mode::Cascade),
            other => Err(Error::input(format!(
                "unknown mode '{other}' (expected osa or cascade)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Osa => "osa",
            Mode::Cascade => "cascade",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub model_index: usize,
}

/// Anything that predicts every turbine's speed for one sample. Lets the
/// evaluation harness run against stub predictors.
pub trait FarmPredictor {
    fn predict(&self, sample: &WindSample, measured: &[f64]) -> Result<SwitchedPrediction>;
}

pub fn predict_switched(
    models: &[GpSparxModel],
    table: &SectorTable,
    sample: &WindSample,
    mode: Mode,
    measured: Option<&[f64]>,
) -> Result<SwitchedPrediction> {
    if models.len() != table.len() {
        return Err(Error::input(format!(
            "{} models for {} sectors",
            models.len(),
            table.len()
        )));
    }
    let model_index = table.select(sample.phi)?;
    let model = &models[model_index];
    let SparxPrediction { mean, variance } = match mode {
        Mode::Osa => {
            let measured = measured
                .ok_or_else(|| Error::input("one-step prediction needs measured speeds"))?;
            model.predict_osa(sample, measured)?
        }
        Mode::Cascade => model.predict_cascade(sample)?,
    };
    Ok(SwitchedPrediction {
        mean,
        variance,
        model_index,
    })
}

/// Pattern models plus their sector table, used in one prediction mode.
#[derive(Debug, Clone)]
pub struct SwitchingModel {
    pub models: Vec<GpSparxModel>,
    pub table: SectorTable,
    pub mode: Mode,
}

impl SwitchingModel {
    pub fn new(models: Vec<GpSparxModel>, table: SectorTable, mode: Mode) -> Result<Self> {
        if models.len() != table.len() {
            return Err(Error::input(format!(
                "{} models for {} sectors",
                models.len(),
                table.len()
            )));
        }
        for (m, s) in models.iter().zip(table.sectors()) {
            if m.pattern_phi() != s.training_angle {
                return Err(Error::input(format!(
                    "model {} was trained at {} but its sector is centred on {}",
                    s.model_index,
                    m.pattern_phi(),
                    s.training_angle
                )));
            }
        }
        Ok(SwitchingModel {
            models,
            table,
            mode,
        })
    }
}

impl FarmPredictor for SwitchingModel {
    fn predict(&self, sample: &WindSample, measured: &[f64]) -> Result<SwitchedPrediction> {
        predict_switched(&self.models, &self.table, sample, self.mode, Some(measured))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn quad() -> SectorTable {
        build_sectors(&[0.0, FRAC_PI_2, PI, 1.5 * PI]).unwrap()
    }

    #[test]
    fn four_symmetric_angles() {
        let t = quad();
        assert_eq!(
            t.boundaries(),
            vec![FRAC_PI_4, 3.0 * PI / 4.0, 5.0 * PI / 4.0, 7.0 * PI / 4.0]
        );
        assert_eq!(t.sectors()[0].lower, 7.0 * PI / 4.0);
        assert_eq!(t.sectors()[0].upper, FRAC_PI_4);
    }

    #[test]
    fn single_angle_covers_circle() {
        let t = build_sectors(&[0.0]).unwrap();
        assert_eq!(t.sectors()[0].lower, 0.0);
        assert_eq!(t.sectors()[0].upper, TAU);
        for phi in [0.0, 1.0, 3.0, TAU - 1e-12] {
            assert_eq!(t.select(phi).unwrap(), 0);
        }
        assert!(t.boundaries().is_empty());
    }

    #[test]
    fn two_angles_split_across_long_arc() {
        let t = build_sectors(&[0.0, FRAC_PI_2]).unwrap();
        assert_eq!(t.boundaries(), vec![FRAC_PI_4, 5.0 * PI / 4.0]);
        assert_eq!(t.select(PI).unwrap(), 1);
        assert_eq!(t.select(1.5 * PI).unwrap(), 0);
    }

    #[test]
    fn selection_examples() {
        let t = quad();
        assert_eq!(t.select(0.1).unwrap(), 0);
        assert_eq!(t.select(PI).unwrap(), 2);
        assert_eq!(t.select(FRAC_PI_4).unwrap(), 1);
        assert_eq!(t.select(FRAC_PI_4 - 1e-6).unwrap(), 0);
        assert_eq!(t.select(FRAC_PI_4 + 1e-6).unwrap(), 1);
        assert_eq!(t.select(7.0 * PI / 4.0).unwrap(), 0);
        assert_eq!(t.select(-0.1).unwrap(), 0);
        assert!(t.select(f64::NAN).is_err());
    }

    #[test]
    fn model_index_follows_input_order() {
        let t = build_sectors(&[PI, 0.0]).unwrap();
        assert_eq!(t.select(0.2).unwrap(), 1);
        assert_eq!(t.select(PI + 0.2).unwrap(), 0);
    }

    #[test]
    fn invalid_angle_sets() {
        assert!(build_sectors(&[]).is_err());
        assert!(build_sectors(&[1.0, 1.0]).is_err());
        assert!(build_sectors(&[TAU]).is_err());
        assert!(build_sectors(&[f64::NAN]).is_err());
    }

    #[test]
    fn widths_sum_to_full_circle() {
        let t = build_sectors(&[0.3, 2.0, 2.1, 5.9]).unwrap();
        let total: f64 = t.sectors().iter().map(Sector::width).sum();
        assert!((total - TAU).abs() < 1e-12);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("osa".parse::<Mode>().unwrap(), Mode::Osa);
        assert_eq!("cascade".parse::<Mode>().unwrap(), Mode::Cascade);
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn sector_json_uses_17_digits() {
        let t = build_sectors(&[0.0, PI]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("1.5707963267948966e0"), "{json}");
        let back: SectorTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
