//! Deriving observed miss ratios from measured volumes.
//!
//! Measured per-LUP volumes are compared against the estimator's geometric
//! quantities for the same configuration. The DRAM load volume holds two
//! unknown contributions (overmiss on the previous wave's data and L2
//! capacity misses); the two roles are fitted in alternation, starting from
//! the estimate that attributes everything beyond the compulsory volume to
//! overmiss, and then refined jointly against the measured bytes.

use std::collections::{BTreeMap, HashMap};
use std::io;

use serde::{Deserialize, Serialize};

use super::{calibrate, nelder_mead, residual, Calibration, FitError, FitRole, FitSet, GompertzParams, RatioObservation};
use crate::kernel::AccessKind;

/// Denominators below this many bytes per LUP carry no information.
const MIN_DENOMINATOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasuredLevel {
    #[serde(rename = "l2l1")]
    L2L1,
    #[serde(rename = "dram")]
    Dram,
}

/// One measured volume, as read from a counter CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Measurement {
    pub config_key: String,
    pub level: MeasuredLevel,
    pub kind: AccessKind,
    pub measured_bytes_per_lup: f64,
}

impl Measurement {
    pub fn read_csv(reader: impl io::Read) -> Result<Vec<Measurement>, FitError> {
        let mut rdr = csv::Reader::from_reader(reader);
        rdr.deserialize()
            .map(|r| r.map_err(|e: csv::Error| FitError::Parse(e.to_string())))
            .collect()
    }

    pub fn write_csv(rows: &[Measurement], writer: impl io::Write) -> Result<(), FitError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in rows {
            w.serialize(r).map_err(|e| FitError::Parse(e.to_string()))?;
        }
        w.flush().map_err(|e| FitError::Parse(e.to_string()))
    }
}

/// Estimator quantities needed to turn a measurement into a ratio, all per LUP
/// except the dimensionless factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationInputs {
    pub config_key: String,
    pub l1_oversubscription: f64,
    pub l2l1_load_comp: f64,
    pub l2l1_load_red: f64,
    pub l2_oversubscription: f64,
    /// Absent for single-wave grids.
    pub coverage: Option<f64>,
    /// Current-wave footprint minus its overlap with the previous wave.
    pub dram_load_comp: f64,
    pub dram_overlap: f64,
    /// Redundant L2 load requests beyond the wave footprint.
    pub dram_load_red_l2: f64,
    pub dram_store_comp: f64,
    pub dram_store_red: f64,
}

impl CalibrationInputs {
    pub fn read_csv(reader: impl io::Read) -> Result<Vec<CalibrationInputs>, FitError> {
        let mut rdr = csv::Reader::from_reader(reader);
        rdr.deserialize()
            .map(|r| r.map_err(|e: csv::Error| FitError::Parse(e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObservationSet {
    pub l1: Vec<RatioObservation>,
    pub l2_load: Vec<RatioObservation>,
    pub l2_store: Vec<RatioObservation>,
    pub overmiss: Vec<RatioObservation>,
    /// Rows that produced no observation, with the reason.
    pub skipped: Vec<String>,
}

impl ObservationSet {
    pub fn get(&self, role: FitRole) -> &[RatioObservation] {
        match role {
            FitRole::L1 => &self.l1,
            FitRole::L2Load => &self.l2_load,
            FitRole::L2Store => &self.l2_store,
            FitRole::Overmiss => &self.overmiss,
        }
    }
}

fn ratio(meas: f64, minus: f64, denom: f64) -> f64 {
    ((meas - minus) / denom).clamp(0.0, 1.0)
}

/// Observed ratios per role. `fits` supplies the current guess for the
/// contribution that is deducted when isolating overmiss and L2-load ratios.
pub fn derive_observations(
    measurements: &[Measurement],
    inputs: &[CalibrationInputs],
    fits: &FitSet,
) -> Result<ObservationSet, FitError> {
    let by_key: HashMap<&str, &CalibrationInputs> = inputs.iter().map(|i| (i.config_key.as_str(), i)).collect();
    let missing: Vec<&str> = measurements
        .iter()
        .map(|m| m.config_key.as_str())
        .filter(|k| !by_key.contains_key(k))
        .collect();
    if !missing.is_empty() {
        let mut missing = missing;
        missing.sort_unstable();
        missing.dedup();
        return Err(FitError::KeyMismatch(format!(
            "no estimator output for {}",
            missing.join(", ")
        )));
    }

    let mut out = ObservationSet::default();
    let mut skipped = Vec::new();
    for m in measurements {
        let est = by_key[m.config_key.as_str()];
        let v = m.measured_bytes_per_lup;
        if !v.is_finite() {
            skipped.push(out_skip(&m.config_key, "measurement is not finite"));
            continue;
        }
        match (m.level, m.kind) {
            (MeasuredLevel::L2L1, AccessKind::Load) => {
                if est.l2l1_load_red > MIN_DENOMINATOR {
                    out.l1.push(RatioObservation {
                        x: est.l1_oversubscription,
                        ratio: ratio(v, est.l2l1_load_comp, est.l2l1_load_red),
                        weight: est.l2l1_load_red,
                    });
                } else {
                    skipped.push(out_skip(&m.config_key, "l1: no redundant volume"));
                }
            }
            (MeasuredLevel::L2L1, AccessKind::Store) => {
                skipped.push(out_skip(&m.config_key, "l2l1 stores are write-through"));
            }
            (MeasuredLevel::Dram, AccessKind::Load) => {
                let cap = fits.l2_load.miss_ratio(est.l2_oversubscription) * est.dram_load_red_l2;
                match est.coverage {
                    Some(c) if est.dram_overlap > MIN_DENOMINATOR => out.overmiss.push(RatioObservation {
                        x: c,
                        ratio: ratio(v, est.dram_load_comp + cap, est.dram_overlap),
                        weight: est.dram_overlap,
                    }),
                    _ => skipped.push(out_skip(&m.config_key, "overmiss: no overlap")),
                }
                if est.dram_load_red_l2 > MIN_DENOMINATOR {
                    let om = match est.coverage {
                        Some(c) => fits.overmiss.miss_ratio(c) * est.dram_overlap,
                        None => 0.0,
                    };
                    out.l2_load.push(RatioObservation {
                        x: est.l2_oversubscription,
                        ratio: ratio(v, est.dram_load_comp + om, est.dram_load_red_l2),
                        weight: est.dram_load_red_l2,
                    });
                } else {
                    skipped.push(out_skip(&m.config_key, "l2load: no redundant volume"));
                }
            }
            (MeasuredLevel::Dram, AccessKind::Store) => {
                if est.dram_store_red > MIN_DENOMINATOR {
                    out.l2_store.push(RatioObservation {
                        x: est.l2_oversubscription,
                        ratio: ratio(v, est.dram_store_comp, est.dram_store_red),
                        weight: est.dram_store_red,
                    });
                } else {
                    skipped.push(out_skip(&m.config_key, "l2store: no redundant volume"));
                }
            }
        }
    }
    out.skipped = skipped;
    Ok(out)
}

fn out_skip(key: &str, what: &str) -> String {
    format!("{key}: {what}")
}

/// Fit outcome for one role. `calibration` is absent when the role had too
/// few usable observations and the starting parameters were kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleCalibration {
    pub role: FitRole,
    pub observations: usize,
    pub calibration: Option<Calibration>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub fits: FitSet,
    pub roles: Vec<RoleCalibration>,
    pub skipped: Vec<String>,
}

const ALTERNATIONS: usize = 12;

/// Calibrates every role. Overmiss and L2-load are refitted in alternation,
/// the first overmiss pass assuming no L2 capacity misses, then refined
/// jointly.
///
/// `inputs` come from an estimator run whose L1 fit feeds the redundant
/// L2 volume. Rerunning the sweep with the returned fits and calibrating
/// again removes that dependence.
pub fn calibrate_all(
    measurements: &[Measurement],
    inputs: &[CalibrationInputs],
    start: &FitSet,
) -> Result<CalibrationReport, FitError> {
    let mut fits = *start;
    let mut notes: BTreeMap<FitRole, (usize, Option<Calibration>, Option<String>)> = BTreeMap::new();

    let mut fit_role = |fits: &mut FitSet, role: FitRole, obs: &[RatioObservation]| {
        let entry = match calibrate(role, obs) {
            Ok(c) => {
                fits.set(c.params);
                (obs.len(), Some(c), None)
            }
            Err(e) => (obs.len(), None, Some(e.to_string())),
        };
        notes.insert(role, entry);
    };

    let first = derive_observations(measurements, inputs, &fits)?;
    fit_role(&mut fits, FitRole::L1, &first.l1);
    fit_role(&mut fits, FitRole::L2Store, &first.l2_store);

    let mut current = fits;
    current.l2_load.a = 0.0;
    for _ in 0..ALTERNATIONS {
        let obs = derive_observations(measurements, inputs, &current)?;
        fit_role(&mut current, FitRole::Overmiss, &obs.overmiss);
        let obs = derive_observations(measurements, inputs, &current)?;
        fit_role(&mut current, FitRole::L2Load, &obs.l2_load);
    }
    let both = [FitRole::Overmiss, FitRole::L2Load]
        .iter()
        .all(|r| notes.get(r).is_some_and(|n| n.1.is_some()));
    if both {
        let points = dram_load_points(measurements, inputs);
        (current.overmiss, current.l2_load) = refine_dram_load(&points, current.overmiss, current.l2_load);
        let obs = derive_observations(measurements, inputs, &current)?;
        for (role, params) in [(FitRole::Overmiss, current.overmiss), (FitRole::L2Load, current.l2_load)] {
            if let Some((_, Some(c), _)) = notes.get_mut(&role) {
                *c = Calibration {
                    params,
                    residual: residual(&params, obs.get(role)),
                };
            }
        }
    }
    fits.overmiss = current.overmiss;
    fits.l2_load = current.l2_load;
    if notes.get(&FitRole::L2Load).is_some_and(|n| n.1.is_none()) {
        fits.l2_load = start.l2_load;
    }

    let roles = FitRole::ALL
        .iter()
        .map(|&role| {
            let (observations, calibration, note) = notes.remove(&role).unwrap_or((0, None, None));
            RoleCalibration {
                role,
                observations,
                calibration,
                note,
            }
        })
        .collect();
    Ok(CalibrationReport {
        fits,
        roles,
        skipped: first.skipped,
    })
}

/// A measured DRAM load volume with the estimator terms that explain it.
struct DramLoadPoint {
    measured: f64,
    /// Compulsory volume plus everything already attributed to other roles.
    fixed: f64,
    overlap: f64,
    coverage: Option<f64>,
    red_l2: f64,
    oversubscription: f64,
}

fn dram_load_points(measurements: &[Measurement], inputs: &[CalibrationInputs]) -> Vec<DramLoadPoint> {
    let by_key: HashMap<&str, &CalibrationInputs> = inputs.iter().map(|i| (i.config_key.as_str(), i)).collect();
    measurements
        .iter()
        .filter(|m| m.level == MeasuredLevel::Dram && m.kind == AccessKind::Load && m.measured_bytes_per_lup.is_finite())
        .filter_map(|m| by_key.get(m.config_key.as_str()).map(|est| (m, est)))
        .map(|(m, est)| DramLoadPoint {
            measured: m.measured_bytes_per_lup,
            fixed: est.dram_load_comp,
            overlap: if est.coverage.is_some() { est.dram_overlap } else { 0.0 },
            coverage: est.coverage,
            red_l2: est.dram_load_red_l2,
            oversubscription: est.l2_oversubscription,
        })
        .collect()
}

fn log_or_floor(v: f64) -> f64 {
    v.max(1e-12).ln()
}

/// Joint least-squares refinement of the overmiss and L2 load parameters
/// against the measured DRAM load volumes.
fn refine_dram_load(
    points: &[DramLoadPoint],
    overmiss: GompertzParams,
    l2_load: GompertzParams,
) -> (GompertzParams, GompertzParams) {
    if points.is_empty() {
        return (overmiss, l2_load);
    }
    let unpack = |u: &[f64; 6]| {
        (
            GompertzParams::new(FitRole::Overmiss, u[0].clamp(0.0, 1.0), u[1].exp(), u[2].exp()),
            GompertzParams::new(FitRole::L2Load, u[3].clamp(0.0, 1.0), u[4].exp(), u[5].exp()),
        )
    };
    let cost = |u: &[f64; 6]| {
        let (om, l2) = unpack(u);
        let sse: f64 = points
            .iter()
            .map(|p| {
                let om_bytes = p.coverage.map_or(0.0, |c| om.miss_ratio(c) * p.overlap);
                let predicted = p.fixed + om_bytes + l2.miss_ratio(p.oversubscription) * p.red_l2;
                (predicted - p.measured).powi(2)
            })
            .sum();
        (sse / points.len() as f64).sqrt()
    };
    let start = [
        overmiss.a,
        log_or_floor(overmiss.b),
        log_or_floor(overmiss.c),
        l2_load.a,
        log_or_floor(l2_load.b),
        log_or_floor(l2_load.c),
    ];
    let mut u = start;
    for _ in 0..4 {
        u = nelder_mead(&cost, u, [0.05, 0.3, 0.3, 0.05, 0.3, 0.3], 6000);
    }
    if cost(&u) <= cost(&start) {
        unpack(&u)
    } else {
        (overmiss, l2_load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::GompertzParams;

    fn inputs(key: &str) -> CalibrationInputs {
        CalibrationInputs {
            config_key: key.into(),
            l1_oversubscription: 0.5,
            l2l1_load_comp: 20.0,
            l2l1_load_red: 10.0,
            l2_oversubscription: 1.2,
            coverage: Some(0.3),
            dram_load_comp: 8.0,
            dram_overlap: 4.0,
            dram_load_red_l2: 6.0,
            dram_store_comp: 8.0,
            dram_store_red: 2.0,
        }
    }

    fn meas(key: &str, level: MeasuredLevel, kind: AccessKind, v: f64) -> Measurement {
        Measurement {
            config_key: key.into(),
            level,
            kind,
            measured_bytes_per_lup: v,
        }
    }

    #[test]
    fn compulsory_gives_zero_and_upper_gives_one() {
        let est = [inputs("a")];
        let rows = [
            meas("a", MeasuredLevel::L2L1, AccessKind::Load, 20.0),
            meas("a", MeasuredLevel::Dram, AccessKind::Store, 10.0),
        ];
        let obs = derive_observations(&rows, &est, &FitSet::zeroed()).unwrap();
        assert_eq!(obs.l1[0].ratio, 0.0);
        assert_eq!(obs.l2_store[0].ratio, 1.0);

        let rows = [meas("a", MeasuredLevel::Dram, AccessKind::Load, 8.0 + 4.0)];
        let obs = derive_observations(&rows, &est, &FitSet::zeroed()).unwrap();
        assert_eq!(obs.overmiss[0].ratio, 1.0);
        assert_eq!(obs.overmiss[0].x, 0.3);
        assert_eq!(obs.l2_load[0].ratio, 4.0 / 6.0);
    }

    #[test]
    fn deduction_uses_current_fits() {
        let est = [inputs("a")];
        let rows = [meas("a", MeasuredLevel::Dram, AccessKind::Load, 8.0 + 2.0 + 3.0)];
        let mut fits = FitSet::zeroed();
        fits.l2_load = GompertzParams::new(FitRole::L2Load, 0.5, 0.0, 1.0);
        fits.overmiss = GompertzParams::new(FitRole::Overmiss, 0.5, 0.0, 1.0);
        let obs = derive_observations(&rows, &est, &fits).unwrap();
        assert!((obs.overmiss[0].ratio - 0.5).abs() < 1e-12);
        assert!((obs.l2_load[0].ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_and_empty_denominators() {
        let est = [inputs("a")];
        let rows = [meas("b", MeasuredLevel::L2L1, AccessKind::Load, 1.0)];
        assert!(matches!(
            derive_observations(&rows, &est, &FitSet::zeroed()),
            Err(FitError::KeyMismatch(_))
        ));
        let mut flat = inputs("a");
        flat.l2l1_load_red = 0.0;
        flat.coverage = None;
        let rows = [
            meas("a", MeasuredLevel::L2L1, AccessKind::Load, 1.0),
            meas("a", MeasuredLevel::Dram, AccessKind::Load, 9.0),
        ];
        let obs = derive_observations(&rows, &[flat], &FitSet::zeroed()).unwrap();
        assert!(obs.l1.is_empty() && obs.overmiss.is_empty());
        assert_eq!(obs.skipped.len(), 2);
    }

    #[test]
    fn measurement_csv_round_trip() {
        let rows = vec![
            meas("16x2x32_none", MeasuredLevel::Dram, AccessKind::Load, 18.5),
            meas("16x2x32_none", MeasuredLevel::L2L1, AccessKind::Store, 8.0),
        ];
        let mut buf = Vec::new();
        Measurement::write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("configKey,level,kind,measuredBytesPerLup\n"));
        assert_eq!(Measurement::read_csv(text.as_bytes()).unwrap(), rows);
        assert!(Measurement::read_csv("configKey,level\nx,dram\n".as_bytes()).is_err());
    }
}
