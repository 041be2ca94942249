//! Power-law exponent estimation and the ground-truth rate experiment:
//! D^{0,r}(Σ, C) on Hölder-perturbed cones over dyadic radii.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::hausdorff::{relative_hausdorff_with, DistanceOptions, Estimate, NormalGraph, SetHandle, Shape};
use crate::kpcone::KpCone;
use crate::synth::{perturb_holder, sample_cone, HolderField, Modulation};

/// Least-squares fit log y = intercept + slope·log x with a 95% interval
/// on the slope.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Slope {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<Slope> {
    if xs.len() != ys.len() {
        return Err(Error::Invalid("loglog_fit needs equal-length inputs".into()));
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return Err(Error::Invalid(format!("loglog_fit needs two positive pairs, got {n}")));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Invalid("loglog_fit needs distinct abscissae".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (stderr, half) = if n > 2 {
        let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (sse / (n - 2) as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 2) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        (se, se * t.inverse_cdf(0.975))
    } else {
        (f64::NAN, f64::INFINITY)
    };
    Ok(Slope { slope, intercept, stderr, ci_low: slope - half, ci_high: slope + half, n })
}

/// How Σ enters the measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// Σ is the analytic normal graph; sups by branch-and-bound.
    Analytic,
    /// Σ is a perturbed sample drawn afresh in B(0, r) at each radius.
    Sampled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateConfig {
    pub beta: f64,
    pub eps: f64,
    /// Largest radius; the others halve it.
    pub r_max: f64,
    pub levels: usize,
    /// Fourier modes of the modulation g (0 gives g ≡ 1).
    pub modes: usize,
    pub amplitude: f64,
    pub mode: RateMode,
    /// Samples per radius in sampled mode.
    pub samples: usize,
    pub seed: u64,
    pub distance: DistanceOptions,
    /// Accepted |slope − β|.
    pub tolerance: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            beta: 0.5,
            eps: 0.05,
            r_max: 1.0,
            levels: 7,
            modes: 3,
            amplitude: 0.25,
            mode: RateMode::Analytic,
            samples: 20_000,
            seed: 0,
            distance: DistanceOptions::default(),
            tolerance: 0.1,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.eps > 0.0 && self.r_max > 0.0) {
            return Err(Error::Invalid("rates need beta, eps and r_max positive".into()));
        }
        if self.levels < 3 {
            return Err(Error::Invalid("rates need at least 3 radii".into()));
        }
        if self.mode == RateMode::Sampled && self.samples < 100 {
            return Err(Error::Invalid("sampled rates need at least 100 samples per radius".into()));
        }
        Ok(())
    }

    pub fn field(&self) -> HolderField {
        let g = if self.modes == 0 { Modulation::constant(1.0) } else { Modulation::random(self.seed, self.modes, self.amplitude) };
        HolderField { eps: self.eps, beta: self.beta, g }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.levels).map(|k| self.r_max / f64::powi(2.0, k as i32)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateRow {
    pub r: f64,
    /// D^{0,r}(Σ, C)
    pub distance: Estimate,
    /// The same measurement on the unperturbed input: the additive floor
    /// left by discretization (zero for analytic Σ).
    pub floor: f64,
    pub corrected: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateReport {
    pub config: RateConfig,
    pub rows: Vec<RateRow>,
    pub slope: Slope,
    pub passed: bool,
}

impl RateReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,distance,error,floor,corrected\n");
        for w in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", w.r, w.distance.value, w.distance.error, w.floor, w.corrected));
        }
        s
    }
}

/// Measures D^{0,r}(Σ, C) − floor at each radius and fits the log-log
/// slope, which the construction makes β.
pub fn rate_experiment(cfg: &RateConfig) -> Result<RateReport> {
    cfg.validate()?;
    let cone = KpCone::canonical();
    let field = cfg.field();
    let apex = *cone.base();
    let target = SetHandle::Shape(Shape::Cone(cone.clone()));
    let mut rows = Vec::with_capacity(cfg.levels);
    for (k, r) in cfg.radii().into_iter().enumerate() {
        let (distance, floor) = match cfg.mode {
            RateMode::Analytic => {
                let sigma = SetHandle::Shape(Shape::NormalGraph(NormalGraph { cone: cone.clone(), field: field.clone() }));
                (relative_hausdorff_with(&apex, r, &sigma, &target, &cfg.distance)?, 0.0)
            }
            RateMode::Sampled => {
                let seed = cfg.seed ^ crate::geom::mix64(k as u64 + 1);
                let base = sample_cone(&cone, r, cfg.samples, seed);
                let pert = perturb_holder(&base, &cone, &field)?;
                let d0 = relative_hausdorff_with(&apex, r, &SetHandle::Cloud(base.cloud().clone()), &target, &cfg.distance)?;
                let d = relative_hausdorff_with(&apex, r, &SetHandle::Cloud(pert.cloud().clone()), &target, &cfg.distance)?;
                (d, d0.value)
            }
        };
        rows.push(RateRow { r, distance, floor, corrected: distance.value - floor });
    }
    let xs: Vec<f64> = rows.iter().map(|w| w.r).collect();
    let ys: Vec<f64> = rows.iter().map(|w| w.corrected).collect();
    let slope = loglog_fit(&xs, &ys)?;
    let passed = (slope.slope - cfg.beta).abs() <= cfg.tolerance;
    Ok(RateReport { config: cfg.clone(), rows, slope, passed })
}
