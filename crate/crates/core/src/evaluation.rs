//! Prediction errors over a direction sweep, binned into a polar map.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::simulator::FarmDataset;
use crate::switching::{FarmPredictor, Mode, Sector, SectorTable};
use crate::util::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub t: u64,
    pub phi: f64,
    pub s: usize,
    pub pred_mean: f64,
    pub pred_var: f64,
    pub measured: f64,
    pub sq_err: f64,
    pub model_index: usize,
}

/// One record per `(t, s)`, ordered by time then turbine.
pub fn evaluate_sweep(
    predictor: &dyn FarmPredictor,
    dataset: &FarmDataset,
) -> Result<Vec<ErrorRecord>> {
    if dataset.is_empty() {
        return Err(Error::input("test dataset is empty"));
    }
    let mut records = Vec::with_capacity(dataset.len() * dataset.n_turbines);
    for r in &dataset.records {
        let p = predictor.predict(&r.sample, &r.speeds)?;
        if p.mean.len() != dataset.n_turbines || p.variance.len() != dataset.n_turbines {
            return Err(Error::Invariant(format!(
                "predictor returned {} values for {} turbines",
                p.mean.len(),
                dataset.n_turbines
            )));
        }
        for (k, &measured) in r.speeds.iter().enumerate() {
            let err = p.mean[k] - measured;
            records.push(ErrorRecord {
                t: r.sample.t,
                phi: r.sample.phi,
                s: k + 1,
                pred_mean: p.mean[k],
                pred_var: p.variance[k].max(0.0),
                measured,
                sq_err: err * err,
                model_index: p.model_index,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for bins without records.
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarErrorMap {
    pub bins: Vec<PolarBin>,
    /// Same binning restricted to each turbine, indexed by `s - 1`.
    pub per_turbine: Vec<Vec<PolarBin>>,
}

pub fn bin_index(phi: f64, n_bins: usize) -> usize {
    let width = TAU / n_bins as f64;
    ((angle::normalize(phi) / width).floor() as usize).min(n_bins - 1)
}

fn empty_bins(n_bins: usize) -> Vec<PolarBin> {
    let width = TAU / n_bins as f64;
    (0..n_bins)
        .map(|k| PolarBin {
            lower: k as f64 * width,
            upper: if k + 1 == n_bins {
                TAU
            } else {
                (k + 1) as f64 * width
            },
            count: 0,
            mse: None,
        })
        .collect()
}

fn finish(bins: &mut [PolarBin], sums: &[f64]) {
    for (b, sum) in bins.iter_mut().zip(sums) {
        b.mse = (b.count > 0).then(|| sum / b.count as f64);
    }
}

pub fn bin_polar(records: &[ErrorRecord], n_bins: usize) -> Result<PolarErrorMap> {
    if n_bins < 4 {
        return Err(Error::input(format!(
            "need at least 4 angular bins, got {n_bins}"
        )));
    }
    let n_turbines = records.iter().map(|r| r.s).max().unwrap_or(0);
    let mut bins = empty_bins(n_bins);
    let mut sums = vec![0.0; n_bins];
    let mut per_turbine = vec![empty_bins(n_bins); n_turbines];
    let mut turbine_sums = vec![vec![0.0; n_bins]; n_turbines];
    for r in records {
        let k = bin_index(r.phi, n_bins);
        bins[k].count += 1;
        sums[k] += r.sq_err;
        per_turbine[r.s - 1][k].count += 1;
        turbine_sums[r.s - 1][k] += r.sq_err;
    }
    finish(&mut bins, &sums);
    for (b, s) in per_turbine.iter_mut().zip(&turbine_sums) {
        finish(b, s);
    }
    Ok(PolarErrorMap { bins, per_turbine })
}

/// `100 / (N·var(y)) · Σ (y − ŷ)²` with the population variance of the
/// measured values.
pub fn nmse_of(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    if measured.is_empty() {
        return Err(Error::Metric("no records".into()));
    }
    let n = measured.len() as f64;
    let mean = measured.iter().sum::<f64>() / n;
    let var = measured
        .iter()
        .map(|y| (y - mean) * (y - mean))
        .sum::<f64>()
        / n;
    if var.is_nan() || var <= 0.0 {
        return Err(Error::Metric("measured values have zero variance".into()));
    }
    let sse: f64 = measured
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(100.0 * sse / (n * var))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nmse {
    pub global: f64,
    /// `None` where a turbine has no records or constant measurements.
    pub per_turbine: Vec<Option<f64>>,
}

pub fn nmse(records: &[ErrorRecord]) -> Result<Nmse> {
    let measured: Vec<f64> = records.iter().map(|r| r.measured).collect();
    let predicted: Vec<f64> = records.iter().map(|r| r.pred_mean).collect();
    let global = nmse_of(&measured, &predicted)?;
    let n_turbines = records.iter().map(|r| r.s).max().unwrap_or(0);
    let per_turbine = (1..=n_turbines)
        .map(|s| {
            let (m, p): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter(|r| r.s == s)
                .map(|r| (r.measured, r.pred_mean))
                .unzip();
            nmse_of(&m, &p).ok()
        })
        .collect();
    Ok(Nmse {
        global,
        per_turbine,
    })
}

/// Squared error near the training angles versus near the sector
/// boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandComparison {
    pub half_width_rad: f64,
    pub training_count: usize,
    pub training_mse: Option<f64>,
    pub boundary_count: usize,
    pub boundary_mse: Option<f64>,
    /// `boundary_mse / training_mse`.
    pub ratio: Option<f64>,
}

pub fn band_comparison(
    records: &[ErrorRecord],
    table: &SectorTable,
    half_width: f64,
) -> BandComparison {
    let near = |phi: f64, angles: &[f64]| {
        angles
            .iter()
            .any(|&a| angle::circular_distance(phi, a) <= half_width)
    };
    let training = table.training_angles();
    let boundaries = table.boundaries();
    let (mut tc, mut ts, mut bc, mut bs) = (0usize, 0.0, 0usize, 0.0);
    for r in records {
        if near(r.phi, &training) {
            tc += 1;
            ts += r.sq_err;
        }
        if near(r.phi, &boundaries) {
            bc += 1;
            bs += r.sq_err;
        }
    }
    let training_mse = (tc > 0).then(|| ts / tc as f64);
    let boundary_mse = (bc > 0).then(|| bs / bc as f64);
    let ratio = match (training_mse, boundary_mse) {
        (Some(t), Some(b)) if t > 0.0 => Some(b / t),
        _ => None,
    };
    BandComparison {
        half_width_rad: half_width,
        training_count: tc,
        training_mse,
        boundary_count: bc,
        boundary_mse,
        ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub sector: Sector,
    pub n_records: usize,
    pub mse: Option<f64>,
    pub nmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub mode: Mode,
    pub n_records: usize,
    pub n_bins: usize,
    pub empty_bins: usize,
    pub global_mse: f64,
    pub global_nmse: Option<f64>,
    pub per_turbine_nmse: Vec<Option<f64>>,
    pub sectors: Vec<SectorSummary>,
    pub bands: BandComparison,
}

/// Half-width of the bands compared in [`band_comparison`]: 10 degrees.
pub const BAND_HALF_WIDTH: f64 = TAU / 36.0;

pub fn summarize(
    records: &[ErrorRecord],
    map: &PolarErrorMap,
    table: &SectorTable,
    mode: Mode,
) -> Result<EvaluationSummary> {
    if records.is_empty() {
        return Err(Error::input("no error records to summarize"));
    }
    let (global_nmse, per_turbine_nmse) = match nmse(records) {
        Ok(n) => (Some(n.global), n.per_turbine),
        Err(Error::Metric(msg)) => {
            log::warn!("global NMSE undefined: {msg}");
            (None, Vec::new())
        }
        Err(e) => return Err(e),
    };
    let sectors = table
        .sectors()
        .iter()
        .map(|sector| {
            let subset: Vec<&ErrorRecord> = records
                .iter()
                .filter(|r| r.model_index == sector.model_index)
                .collect();
            let m: Vec<f64> = subset.iter().map(|r| r.measured).collect();
            let p: Vec<f64> = subset.iter().map(|r| r.pred_mean).collect();
            SectorSummary {
                sector: *sector,
                n_records: subset.len(),
                mse: (!subset.is_empty())
                    .then(|| subset.iter().map(|r| r.sq_err).sum::<f64>() / subset.len() as f64),
                nmse: nmse_of(&m, &p).ok(),
            }
        })
        .collect();
    Ok(EvaluationSummary {
        mode,
        n_records: records.len(),
        n_bins: map.bins.len(),
        empty_bins: map.bins.iter().filter(|b| b.count == 0).count(),
        global_mse: records.iter().map(|r| r.sq_err).sum::<f64>() / records.len() as f64,
        global_nmse,
        per_turbine_nmse,
        sectors,
        bands: band_comparison(records, table, BAND_HALF_WIDTH),
    })
}

pub fn records_csv(records: &[ErrorRecord]) -> String {
    let mut out = String::from("t,phi,s,pred_mean,pred_var,measured,sq_err,model_index\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            fmt_f64(r.phi),
            r.s,
            fmt_f64(r.pred_mean),
            fmt_f64(r.pred_var),
            fmt_f64(r.measured),
            fmt_f64(r.sq_err),
            r.model_index
        );
    }
    out
}

fn bin_row(out: &mut String, b: &PolarBin) {
    let mse = b.mse.map(fmt_f64).unwrap_or_default();
    let _ = writeln!(
        out,
        "{},{},{},{}",
        fmt_f64(b.lower),
        fmt_f64(b.upper),
        b.count,
        mse
    );
}

/// `bin_lower_rad,bin_upper_rad,count,mse`; empty bins leave `mse` blank.
pub fn polar_csv(map: &PolarErrorMap) -> String {
    let mut out = String::from("bin_lower_rad,bin_upper_rad,count,mse\n");
    for b in &map.bins {
        bin_row(&mut out, b);
    }
    out
}

/// Per-turbine polar map: `s,bin_lower_rad,bin_upper_rad,count,mse`.
pub fn polar_by_turbine_csv(map: &PolarErrorMap) -> String {
    let mut out = String::from("s,bin_lower_rad,bin_upper_rad,count,mse\n");
    for (k, bins) in map.per_turbine.iter().enumerate() {
        for b in bins {
            let _ = write!(out, "{},", k + 1);
            bin_row(&mut out, b);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{FarmRecord, WindSample};
    use crate::switching::{build_sectors, SwitchedPrediction};
    use std::collections::BTreeMap;
    use std::f64::consts::{FRAC_PI_2, PI};

    struct Perfect;
    impl FarmPredictor for Perfect {
        fn predict(&self, _: &WindSample, measured: &[f64]) -> Result<SwitchedPrediction> {
            Ok(SwitchedPrediction {
                mean: measured.to_vec(),
                variance: vec![0.0; measured.len()],
                model_index: 0,
            })
        }
    }

    struct Zero;
    impl FarmPredictor for Zero {
        fn predict(&self, _: &WindSample, measured: &[f64]) -> Result<SwitchedPrediction> {
            Ok(SwitchedPrediction {
                mean: vec![0.0; measured.len()],
                variance: vec![1.0; measured.len()],
                model_index: 0,
            })
        }
    }

    fn sweep(n_steps: usize, n_turbines: usize) -> FarmDataset {
        FarmDataset {
            layout_digest: String::new(),
            n_turbines,
            records: (0..n_steps)
                .map(|t| FarmRecord {
                    sample: WindSample {
                        t: t as u64,
                        u_inf: 10.0,
                        phi: TAU * t as f64 / n_steps as f64,
                    },
                    speeds: (0..n_turbines)
                        .map(|s| 8.0 + (t * (s + 1) % 7) as f64 * 0.3)
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_predictor_has_zero_error() {
        let recs = evaluate_sweep(&Perfect, &sweep(100, 3)).unwrap();
        assert_eq!(recs.len(), 300);
        assert!(recs.iter().all(|r| r.sq_err == 0.0));
        assert_eq!(nmse(&recs).unwrap().global, 0.0);
    }

    #[test]
    fn zero_predictor_error_is_measured_squared() {
        let recs = evaluate_sweep(&Zero, &sweep(50, 2)).unwrap();
        for r in &recs {
            assert_eq!(r.sq_err, r.measured * r.measured);
        }
        assert_eq!(recs[3].t, 1);
        assert_eq!(recs[3].s, 2);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            evaluate_sweep(&Perfect, &sweep(0, 2)),
            Err(Error::Input(_))
        ));
    }

    fn rec(phi: f64, s: usize, measured: f64, pred: f64) -> ErrorRecord {
        ErrorRecord {
            t: 0,
            phi,
            s,
            pred_mean: pred,
            pred_var: 0.0,
            measured,
            sq_err: (pred - measured) * (pred - measured),
            model_index: 0,
        }
    }

    #[test]
    fn all_records_in_first_bin() {
        let recs: Vec<_> = (0..10).map(|k| rec(0.0, 1, k as f64, 0.0)).collect();
        let map = bin_polar(&recs, 36).unwrap();
        assert_eq!(map.bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(map.bins[0].count, 10);
        assert!(map.bins[1].mse.is_none());
    }

    #[test]
    fn linear_sweep_fills_bins_evenly() {
        let recs: Vec<_> = (0..1001)
            .map(|k| rec(TAU * k as f64 / 1001.0, 1, 1.0, 0.0))
            .collect();
        let map = bin_polar(&recs, 4).unwrap();
        let counts: Vec<usize> = map.bins.iter().map(|b| b.count).collect();
        assert!(
            counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1,
            "{counts:?}"
        );
        assert_eq!(counts.iter().sum::<usize>(), 1001);
        assert!(bin_polar(&recs, 3).is_err());
    }

    #[test]
    fn bin_mse_matches_regrouping() {
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let recs: Vec<_> = (0..5000)
            .map(|_| {
                rec(
                    next() * TAU,
                    1 + (next() * 4.0) as usize,
                    10.0 * next(),
                    10.0 * next(),
                )
            })
            .collect();
        let map = bin_polar(&recs, 72).unwrap();
        let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &recs {
            let k = (r.phi / (TAU / 72.0)) as usize;
            groups
                .entry(k.min(71))
                .or_default()
                .push((r.pred_mean - r.measured).powi(2));
        }
        for (k, errs) in groups {
            let mse = errs.iter().sum::<f64>() / errs.len() as f64;
            assert!((map.bins[k].mse.unwrap() - mse).abs() < 1e-12);
            assert_eq!(map.bins[k].count, errs.len());
        }
        let per_turbine_total: usize = map.per_turbine.iter().flatten().map(|b| b.count).sum();
        assert_eq!(per_turbine_total, 5000);
    }

    #[test]
    fn nmse_reference_points() {
        let ys = [1.0, 2.0, 4.0, 7.0];
        let mean = 3.5;
        assert_eq!(nmse_of(&ys, &ys).unwrap(), 0.0);
        assert!((nmse_of(&ys, &[mean; 4]).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(
            nmse_of(&[2.0, 2.0], &[1.0, 1.0]),
            Err(Error::Metric(_))
        ));
        assert!(nmse_of(&[], &[]).is_err());
    }

    #[test]
    fn nmse_small_case_by_hand() {
        // y = (1, 3), ŷ = (2, 2): var = 1, SSE = 2, N = 2
        assert!((nmse_of(&[1.0, 3.0], &[2.0, 2.0]).unwrap() - 100.0).abs() < 1e-12);
        // y = (0, 2, 4), ŷ = (1, 2, 3): var = 8/3, SSE = 2
        let expected = 100.0 * 2.0 / (3.0 * 8.0 / 3.0);
        assert!((nmse_of(&[0.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn per_turbine_nmse() {
        let recs = vec![
            rec(0.0, 1, 1.0, 1.0),
            rec(0.0, 1, 3.0, 3.0),
            rec(0.0, 2, 1.0, 2.0),
            rec(0.0, 2, 3.0, 2.0),
        ];
        let n = nmse(&recs).unwrap();
        assert_eq!(n.per_turbine, vec![Some(0.0), Some(100.0)]);
    }

    #[test]
    fn bands_split_training_and_boundary_errors() {
        let table = build_sectors(&[0.0, FRAC_PI_2, PI, 1.5 * PI]).unwrap();
        let recs = vec![
            rec(0.05, 1, 0.0, 0.1),
            rec(PI / 4.0, 1, 0.0, 1.0),
            rec(PI / 4.0 + 0.1, 1, 0.0, 2.0),
            rec(0.5, 1, 0.0, 5.0),
        ];
        let b = band_comparison(&recs, &table, BAND_HALF_WIDTH);
        assert_eq!(b.training_count, 1);
        assert_eq!(b.boundary_count, 2);
        assert!((b.training_mse.unwrap() - 0.01).abs() < 1e-15);
        assert!((b.boundary_mse.unwrap() - 2.5).abs() < 1e-15);
        assert!((b.ratio.unwrap() - 250.0).abs() < 1e-9);
    }

    #[test]
    fn csv_layouts() {
        let recs = vec![rec(0.0, 1, 2.0, 1.0)];
        let csv = records_csv(&recs);
        assert!(csv.starts_with("t,phi,s,pred_mean,pred_var,measured,sq_err,model_index\n"));
        let map = bin_polar(&recs, 4).unwrap();
        let polar = polar_csv(&map);
        assert_eq!(polar.lines().count(), 5);
        assert!(polar.lines().nth(2).unwrap().ends_with(",0,"));
    }
}
