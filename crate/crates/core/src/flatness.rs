//! Local flatness estimators and the one-dimensional sharp/flat basin
//! experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::oracle::{fd_hvp, DEFAULT_HVP_STEP};
use crate::params::ParamVector;
use crate::penalty::{train_step, GnpConfig, OptimState, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub rho: f64,
    pub n_samples: usize,
    /// Projected normalized-gradient ascent steps appended to the random probes.
    pub ascent_steps: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            rho: 0.05,
            n_samples: 64,
            ascent_steps: 10,
            power_iters: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub grad_norm_at_theta: f64,
    pub local_lipschitz_est: f64,
    pub sharpness_est: f64,
    pub top_eig_est: f64,
    pub n_samples: usize,
    pub rho: f64,
}

/// Offsets probed inside the rho-ball and the loss observed at each.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub base_loss: f64,
    pub points: Vec<(f64, f64)>,
}

impl ProbeSet {
    /// Largest `|L(theta + d) - L(theta)| / ||d||` over the probes.
    pub fn lipschitz(&self) -> f64 {
        self.points
            .iter()
            .filter(|(dist, _)| *dist > 0.0)
            .map(|(dist, loss)| (loss - self.base_loss).abs() / dist)
            .fold(0.0, f64::max)
    }

    /// Largest loss rise over the probes, floored at zero.
    pub fn sharpness(&self) -> f64 {
        self.points
            .iter()
            .map(|(_, loss)| loss - self.base_loss)
            .fold(0.0, f64::max)
    }
}

/// Random probes on the rho-sphere (every fourth one at half radius),
/// followed by a short projected ascent started from the worst probe.
pub fn probe_set(
    obj: &impl Objective,
    params: &ParamVector,
    rho: f64,
    n_samples: usize,
    ascent_steps: usize,
    seed: u64,
) -> Result<ProbeSet> {
    if !(rho > 0.0) || n_samples == 0 {
        return Err(Error::Config("probe needs rho > 0 and n_samples >= 1".into()));
    }
    let base_loss = obj.loss(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.len();
    let mut points = Vec::with_capacity(n_samples + ascent_steps);
    let mut worst: Option<(f64, ParamVector)> = None;
    for k in 0..n_samples {
        let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = if k % 4 == 3 { 0.5 * rho } else { rho };
        let delta = params.with_values(dir.iter().map(|x| x * radius / norm).collect())?;
        let loss = obj.loss(&params.add(&delta)?)?;
        points.push((delta.l2_norm(), loss));
        if worst.as_ref().is_none_or(|(l, _)| loss > *l) {
            worst = Some((loss, delta));
        }
    }

    let mut delta = match worst {
        Some((_, d)) => d.scale(rho / d.l2_norm()),
        None => ParamVector::zeros(params.layout()),
    };
    for _ in 0..ascent_steps {
        let g = obj.grad(&params.add(&delta)?)?;
        let gn = g.l2_norm();
        if gn == 0.0 {
            break;
        }
        delta = delta.axpy(0.5 * rho / gn, &g)?;
        let dn = delta.l2_norm();
        if dn > rho {
            delta = delta.scale(rho / dn);
        }
        let loss = obj.loss(&params.add(&delta)?)?;
        points.push((delta.l2_norm(), loss));
    }
    Ok(ProbeSet { base_loss, points })
}

pub fn local_lipschitz(
    obj: &impl Objective,
    params: &ParamVector,
    rho: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    Ok(probe_set(obj, params, rho, n_samples, ProbeConfig::default().ascent_steps, seed)?.lipschitz())
}

pub fn sharpness_ball(
    obj: &impl Objective,
    params: &ParamVector,
    rho: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    Ok(probe_set(obj, params, rho, n_samples, ProbeConfig::default().ascent_steps, seed)?.sharpness())
}

/// Power iteration on finite-difference Hessian-vector products; returns
/// `|v^T H v|` for the final unit iterate.
pub fn top_eig_power(obj: &impl Objective, params: &ParamVector, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(Error::Config("power iteration needs iters >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..params.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut v = params.with_values(start)?;
    v = v.scale(1.0 / v.l2_norm());
    let mut estimate = 0.0;
    for it in 0..iters {
        let hv = fd_hvp(obj, params, &v, DEFAULT_HVP_STEP)?;
        estimate = v.dot(&hv)?.abs();
        let norm = hv.l2_norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::PowerBreakdown(it));
        }
        v = hv.scale(1.0 / norm);
    }
    Ok(estimate)
}

pub fn probe(obj: &impl Objective, params: &ParamVector, cfg: &ProbeConfig) -> Result<FlatnessReport> {
    let set = probe_set(obj, params, cfg.rho, cfg.n_samples, cfg.ascent_steps, cfg.seed)?;
    let top_eig_est = match top_eig_power(obj, params, cfg.power_iters, cfg.seed) {
        Err(Error::PowerBreakdown(_)) => 0.0,
        other => other?,
    };
    Ok(FlatnessReport {
        grad_norm_at_theta: obj.grad(params)?.l2_norm(),
        local_lipschitz_est: set.lipschitz(),
        sharpness_est: set.sharpness(),
        top_eig_est,
        n_samples: cfg.n_samples,
        rho: cfg.rho,
    })
}

/// One-dimensional loss with a broad well at 0 and a narrow well near 2.5.
///
/// `L(x) = -tau * ln(exp(-q_flat(x)/tau) + exp(-q_sharp(x)/tau))` with
/// `q_flat = x^2/2` and `q_sharp = 25 (x - 2.5)^2 + 2.875`. The sharp well
/// has curvature 50 (ratio 50 to the flat one) and sits 0.25 below the flat
/// parabola, so its basin is only about 0.23 wide; the soft minimum with
/// `tau = 0.01` smooths the ridges between the wells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWell {
    pub flat_curvature: f64,
    pub sharp_center: f64,
    pub sharp_curvature: f64,
    pub sharp_floor: f64,
    pub tau: f64,
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self {
            flat_curvature: 1.0,
            sharp_center: 2.5,
            sharp_curvature: 50.0,
            sharp_floor: 2.875,
            tau: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basin {
    Flat,
    Sharp,
    Diverged,
}

impl DoubleWell {
    fn wells(&self, x: f64) -> [(f64, f64, f64); 2] {
        let u = x - self.sharp_center;
        [
            (
                0.5 * self.flat_curvature * x * x,
                self.flat_curvature * x,
                self.flat_curvature,
            ),
            (
                0.5 * self.sharp_curvature * u * u + self.sharp_floor,
                self.sharp_curvature * u,
                self.sharp_curvature,
            ),
        ]
    }

    /// Soft-min weights of the two wells.
    fn weights(&self, x: f64) -> (f64, f64, [(f64, f64, f64); 2]) {
        let w = self.wells(x);
        let m = w[0].0.min(w[1].0);
        let e0 = (-(w[0].0 - m) / self.tau).exp();
        let e1 = (-(w[1].0 - m) / self.tau).exp();
        (e0 / (e0 + e1), e1 / (e0 + e1), w)
    }

    pub fn value(&self, x: f64) -> f64 {
        let w = self.wells(x);
        let m = w[0].0.min(w[1].0);
        m - self.tau * ((-(w[0].0 - m) / self.tau).exp() + (-(w[1].0 - m) / self.tau).exp()).ln()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (a, b, w) = self.weights(x);
        a * w[0].1 + b * w[1].1
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let (a, b, w) = self.weights(x);
        a * w[0].2 + b * w[1].2 - a * b * (w[0].1 - w[1].1).powi(2) / self.tau
    }

    /// The ridge separating the basins: where the two parabolas cross on the
    /// flat side of the sharp well. Everything to its right drains into the
    /// sharp well under gradient flow.
    pub fn ridge(&self) -> f64 {
        let (kf, ks, c, f) = (
            self.flat_curvature,
            self.sharp_curvature,
            self.sharp_center,
            self.sharp_floor,
        );
        // kf/2 x^2 = ks/2 (x-c)^2 + f
        let a = 0.5 * (ks - kf);
        let b = -ks * c;
        let cc = 0.5 * ks * c * c + f;
        (-b - (b * b - 4.0 * a * cc).sqrt()) / (2.0 * a)
    }

    /// Newton iterations from the well centres.
    pub fn minima(&self) -> (f64, f64) {
        let newton = |mut x: f64| {
            for _ in 0..50 {
                x -= self.derivative(x) / self.second_derivative(x);
            }
            x
        };
        (newton(0.0), newton(self.sharp_center))
    }

    pub fn classify(&self, x: f64) -> Basin {
        if !x.is_finite() {
            Basin::Diverged
        } else if x < self.ridge() {
            Basin::Flat
        } else {
            Basin::Sharp
        }
    }
}

impl Objective for DoubleWell {
    fn loss(&self, params: &ParamVector) -> Result<f64> {
        Ok(self.value(params.values()[0]))
    }

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        let x = params.values()[0];
        Ok((self.value(x), params.with_values(vec![self.derivative(x)])?))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasinTally {
    pub flat_count: usize,
    pub sharp_count: usize,
    pub diverged_count: usize,
}

impl BasinTally {
    fn add(&mut self, b: Basin) {
        match b {
            Basin::Flat => self.flat_count += 1,
            Basin::Sharp => self.sharp_count += 1,
            Basin::Diverged => self.diverged_count += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellRow {
    pub init: f64,
    pub scheme: String,
    pub final_x: f64,
    pub basin: Basin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellOutcome {
    pub standard: BasinTally,
    pub gnp: BasinTally,
    pub rows: Vec<DoubleWellRow>,
}

/// Runs `steps` full-batch optimizer steps from `init` and returns the end point.
pub fn descend_1d(well: &DoubleWell, init: f64, cfg: &GnpConfig, steps: u64) -> Option<f64> {
    let mut state = OptimState::new(ParamVector::from_vec(vec![init]));
    for _ in 0..steps {
        state = train_step(&state, well, cfg).ok()?.0;
    }
    Some(state.params.values()[0])
}

/// Runs every initialization in `grid` under the standard scheme and under
/// `gnp_cfg`, counting which basin each run ends in.
pub fn double_well_experiment(well: &DoubleWell, gnp_cfg: &GnpConfig, grid: &[f64], steps: u64) -> DoubleWellOutcome {
    let standard_cfg = GnpConfig {
        scheme: Scheme::Standard,
        ..gnp_cfg.clone()
    };
    let mut out = DoubleWellOutcome {
        standard: BasinTally::default(),
        gnp: BasinTally::default(),
        rows: Vec::with_capacity(2 * grid.len()),
    };
    for &init in grid {
        for (name, cfg) in [("standard", &standard_cfg), ("gnp", gnp_cfg)] {
            let end = descend_1d(well, init, cfg, steps);
            let basin = end.map_or(Basin::Diverged, |x| well.classify(x));
            if name == "standard" {
                out.standard.add(basin);
            } else {
                out.gnp.add(basin);
            }
            out.rows.push(DoubleWellRow {
                init,
                scheme: name.into(),
                final_x: end.unwrap_or(f64::NAN),
                basin,
            });
        }
    }
    out
}
