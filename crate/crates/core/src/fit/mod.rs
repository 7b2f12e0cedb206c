//! Gompertz-sigmoid miss-ratio functions and their calibration.
//!
//! Each capacity-miss ratio is modeled as `R(x) = a * exp(-b * exp(-c * x))`
//! with `x` the oversubscription factor. The overmiss ratio depends on the
//! L2 coverage factor instead and falls as coverage grows, so it is
//! evaluated at `x = -coverage`.

mod observations;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use observations::{
    calibrate_all, derive_observations, CalibrationInputs, CalibrationReport, MeasuredLevel, Measurement,
    ObservationSet, RoleCalibration,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{role} parameters out of range: {reason}")]
    InvalidParams { role: FitRole, reason: String },
    #[error("need at least one observation to calibrate {0}")]
    NoObservations(FitRole),
    #[error("all observations for {0} share the same x; the fit is degenerate")]
    Degenerate(FitRole),
    #[error("observation for {role} is not finite")]
    NonFinite { role: FitRole },
    #[error("measurement key mismatch: {0}")]
    KeyMismatch(String),
    #[error("cannot parse measurements: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FitRole {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2load")]
    L2Load,
    #[serde(rename = "l2store")]
    L2Store,
    #[serde(rename = "overmiss")]
    Overmiss,
}

impl FitRole {
    pub const ALL: [FitRole; 4] = [FitRole::L1, FitRole::L2Load, FitRole::L2Store, FitRole::Overmiss];

    /// Maps the observable (oversubscription or coverage) to the sigmoid argument.
    pub fn argument(self, observable: f64) -> f64 {
        match self {
            FitRole::Overmiss => -observable,
            _ => observable,
        }
    }
}

impl fmt::Display for FitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitRole::L1 => "l1",
            FitRole::L2Load => "l2load",
            FitRole::L2Store => "l2store",
            FitRole::Overmiss => "overmiss",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GompertzParams {
    pub role: FitRole,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GompertzParams {
    pub fn new(role: FitRole, a: f64, b: f64, c: f64) -> Self {
        GompertzParams { role, a, b, c }
    }

    /// `a * exp(-b * exp(-c * x))`, clamped to `[0, 1]`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let inner = (-self.c * x).exp();
        let v = self.a * (-self.b * inner).exp();
        if v.is_nan() {
            // exp overflow in both layers: -inf * 0 style corner cases.
            return 0.0;
        }
        v.clamp(0.0, 1.0)
    }

    /// Miss ratio for an observable (oversubscription, or coverage for the
    /// overmiss role).
    pub fn miss_ratio(&self, observable: f64) -> f64 {
        self.evaluate(self.role.argument(observable))
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |reason: &str| FitError::InvalidParams {
            role: self.role,
            reason: reason.into(),
        };
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(bad("parameters must be finite"));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(bad("a must lie in [0, 1]"));
        }
        if self.b < 0.0 {
            return Err(bad("b must be non-negative"));
        }
        if self.c < 0.0 {
            return Err(bad("c must be non-negative"));
        }
        Ok(())
    }
}

/// One parameter triple per miss-ratio role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FitSet {
    pub l1: GompertzParams,
    pub l2_load: GompertzParams,
    pub l2_store: GompertzParams,
    pub overmiss: GompertzParams,
}

impl FitSet {
    fn uniform(a: f64, b: f64, c: f64) -> Self {
        FitSet {
            l1: GompertzParams::new(FitRole::L1, a, b, c),
            l2_load: GompertzParams::new(FitRole::L2Load, a, b, c),
            l2_store: GompertzParams::new(FitRole::L2Store, a, b, c),
            overmiss: GompertzParams::new(FitRole::Overmiss, a, b, c),
        }
    }

    /// Uncalibrated illustrative defaults (a=1, b=5, c=2 for every role).
    pub fn illustrative() -> Self {
        Self::uniform(1.0, 5.0, 2.0)
    }

    /// Every ratio is zero: no capacity misses anywhere.
    pub fn zeroed() -> Self {
        Self::uniform(0.0, 1.0, 1.0)
    }

    /// Every ratio is one: every redundant access misses.
    pub fn saturated() -> Self {
        Self::uniform(1.0, 0.0, 1.0)
    }

    pub fn get(&self, role: FitRole) -> &GompertzParams {
        match role {
            FitRole::L1 => &self.l1,
            FitRole::L2Load => &self.l2_load,
            FitRole::L2Store => &self.l2_store,
            FitRole::Overmiss => &self.overmiss,
        }
    }

    pub fn set(&mut self, params: GompertzParams) {
        match params.role {
            FitRole::L1 => self.l1 = params,
            FitRole::L2Load => self.l2_load = params,
            FitRole::L2Store => self.l2_store = params,
            FitRole::Overmiss => self.overmiss = params,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        for role in FitRole::ALL {
            let p = self.get(role);
            if p.role != role {
                return Err(FitError::InvalidParams {
                    role,
                    reason: format!("slot holds parameters tagged {}", p.role),
                });
            }
            p.validate()?;
        }
        Ok(())
    }
}

/// A single (observable, ratio) sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioObservation {
    pub x: f64,
    pub ratio: f64,
    pub weight: f64,
}

impl RatioObservation {
    pub fn new(x: f64, ratio: f64) -> Self {
        RatioObservation { x, ratio, weight: 1.0 }
    }
}

/// Fitted parameters and the weighted RMS residual of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: GompertzParams,
    pub residual: f64,
}

fn weighted_rms(role: FitRole, obs: &[(f64, f64, f64)], a: f64, b: f64, c: f64) -> f64 {
    let p = GompertzParams::new(role, a, b, c);
    let mut sse = 0.0;
    let mut wsum = 0.0;
    for &(x, r, w) in obs {
        let d = p.evaluate(x) - r;
        sse += w * d * d;
        wsum += w;
    }
    (sse / wsum).sqrt()
}

/// Weighted RMS distance between `params` and the observations.
pub(crate) fn residual(params: &GompertzParams, observations: &[RatioObservation]) -> f64 {
    let obs: Vec<(f64, f64, f64)> = observations
        .iter()
        .map(|o| (params.role.argument(o.x), o.ratio, o.weight))
        .collect();
    weighted_rms(params.role, &obs, params.a, params.b, params.c)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..n).map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Least-squares fit of a Gompertz sigmoid: coarse grid search followed by
/// Nelder-Mead refinement in `(a, ln b, ln c)`. Deterministic.
pub fn calibrate(role: FitRole, observations: &[RatioObservation]) -> Result<Calibration, FitError> {
    if observations.is_empty() {
        return Err(FitError::NoObservations(role));
    }
    let mut obs = Vec::with_capacity(observations.len());
    for o in observations {
        if !(o.x.is_finite() && o.ratio.is_finite() && o.weight.is_finite()) || o.weight < 0.0 {
            return Err(FitError::NonFinite { role });
        }
        obs.push((role.argument(o.x), o.ratio.clamp(0.0, 1.0), o.weight));
    }
    if obs.iter().map(|o| o.2).sum::<f64>() <= 0.0 {
        return Err(FitError::NoObservations(role));
    }
    let x0 = obs[0].0;
    if obs.iter().all(|o| o.0 == x0) {
        return Err(FitError::Degenerate(role));
    }

    let cost = |u: &[f64; 3]| {
        let a = u[0].clamp(0.0, 1.0);
        weighted_rms(role, &obs, a, u[1].exp(), u[2].exp())
    };

    let mut best = ([1.0, 0.0, 0.0], f64::INFINITY);
    let bs = log_grid(1e-3, 1e3, 31);
    let cs = log_grid(1e-3, 1e2, 31);
    for ai in 0..=20 {
        let a = ai as f64 / 20.0;
        for &b in &bs {
            for &c in &cs {
                let u = [a, b.ln(), c.ln()];
                let v = cost(&u);
                if v < best.1 {
                    best = (u, v);
                }
            }
        }
    }

    let u = nelder_mead(&cost, best.0, [0.05, 0.3, 0.3], 4000);
    let refined = cost(&u);
    let (u, residual) = if refined <= best.1 { (u, refined) } else { best };
    let params = GompertzParams::new(role, u[0].clamp(0.0, 1.0), u[1].exp(), u[2].exp());
    Ok(Calibration { params, residual })
}

pub(crate) fn nelder_mead<const N: usize>(
    f: &impl Fn(&[f64; N]) -> f64,
    start: [f64; N],
    step: [f64; N],
    max_iter: usize,
) -> [f64; N] {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] += step[i];
        simplex.push((p, f(&p)));
    }
    let lerp = |a: &[f64; N], b: &[f64; N], t: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + t * (b[i] - a[i])) };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[N].1 - simplex[0].1;
        let best = simplex[0].0;
        let size = simplex[1..]
            .iter()
            .flat_map(|(p, _)| (0..N).map(move |i| (p[i] - best[i]).abs()))
            .fold(0.0, f64::max);
        if spread.abs() < 1e-16 && size < 1e-10 {
            break;
        }
        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += p[i] / N as f64;
            }
        }
        let worst = simplex[N];
        let reflected = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            simplex[N] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                lerp(&centroid, &reflected, 0.5)
            } else {
                lerp(&centroid, &worst.0, 0.5)
            };
            let fc = f(&contracted);
            if fc < worst.1.min(fr) {
                simplex[N] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let p = lerp(&best, &entry.0, 0.5);
                    *entry = (p, f(&p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0].0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let p = GompertzParams::new(FitRole::L1, 0.9, 5.0, 2.0);
        assert!((p.evaluate(1.0) - 0.9 * (-5.0 * (-2.0f64).exp()).exp()).abs() < 1e-15);
        assert!((p.evaluate(1.0) - 0.457473).abs() < 1e-6);
        assert!((p.evaluate(0.0) - 0.9 * (-5.0f64).exp()).abs() < 1e-15);
        assert!((p.evaluate(1e6) - 0.9).abs() < 1e-12);
        assert_eq!(p.evaluate(-1e6), 0.0);
    }

    #[test]
    fn overmiss_falls_with_coverage() {
        let p = GompertzParams::new(FitRole::Overmiss, 1.0, 5.0, 2.0);
        assert!(p.miss_ratio(-2.0) > p.miss_ratio(0.0));
        assert!(p.miss_ratio(0.0) > p.miss_ratio(2.0));
    }

    #[test]
    fn presets() {
        assert_eq!(FitSet::zeroed().l2_load.evaluate(100.0), 0.0);
        assert_eq!(FitSet::saturated().l1.evaluate(-100.0), 1.0);
        FitSet::illustrative().validate().unwrap();
        let mut bad = FitSet::illustrative();
        bad.l1.a = 1.5;
        assert!(bad.validate().is_err());
        let mut mislabeled = FitSet::illustrative();
        mislabeled.l1.role = FitRole::L2Load;
        assert!(mislabeled.validate().is_err());
    }

    #[test]
    fn recovers_known_parameters() {
        let truth = GompertzParams::new(FitRole::L2Load, 0.8, 4.0, 1.5);
        let obs: Vec<_> = (0..20)
            .map(|i| {
                let x = 8.0 * i as f64 / 19.0;
                RatioObservation::new(x, truth.evaluate(x))
            })
            .collect();
        let fit = calibrate(FitRole::L2Load, &obs).unwrap();
        for (got, want) in [(fit.params.a, 0.8), (fit.params.b, 4.0), (fit.params.c, 1.5)] {
            assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
        }
    }

    #[test]
    fn all_zero_ratios_give_zero_amplitude() {
        let obs: Vec<_> = (0..10).map(|i| RatioObservation::new(i as f64, 0.0)).collect();
        let fit = calibrate(FitRole::L1, &obs).unwrap();
        assert!(fit.params.a < 1e-6);
        assert!(fit.residual < 1e-6);
    }

    #[test]
    fn step_data_beats_constant() {
        let obs: Vec<_> = (0..20)
            .map(|i| {
                let x = i as f64 * 0.25;
                RatioObservation::new(x, if x < 2.5 { 0.0 } else { 0.9 })
            })
            .collect();
        let fit = calibrate(FitRole::L1, &obs).unwrap();
        let mean = obs.iter().map(|o| o.ratio).sum::<f64>() / obs.len() as f64;
        let constant_rms = (obs.iter().map(|o| (o.ratio - mean).powi(2)).sum::<f64>() / obs.len() as f64).sqrt();
        assert!(fit.residual < constant_rms);
    }

    #[test]
    fn degenerate_inputs() {
        let same_x = vec![RatioObservation::new(1.0, 0.2), RatioObservation::new(1.0, 0.4)];
        assert_eq!(calibrate(FitRole::L1, &same_x), Err(FitError::Degenerate(FitRole::L1)));
        assert_eq!(calibrate(FitRole::L1, &[]), Err(FitError::NoObservations(FitRole::L1)));
        let nan = vec![RatioObservation::new(f64::NAN, 0.2), RatioObservation::new(1.0, 0.4)];
        assert!(matches!(calibrate(FitRole::L1, &nan), Err(FitError::NonFinite { .. })));
    }
}
