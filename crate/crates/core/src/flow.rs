//! Conditional flow matching with the optimal-transport path.
//!
//! A prior draw `x0` and a data draw `x1` are joined by the straight path
//! `φ_t = (1 - (1 - σ_min) t) x0 + t x1`, whose velocity
//! `u = x1 - (1 - σ_min) x0` does not depend on `t`. A vector field is
//! regressed onto `u` at `(φ_t, t)`; integrating the fitted field from `t = 0`
//! to `t = 1` transports prior samples to the data distribution.
//!
//! [`AffineFieldModel`] is the smallest learnable field for which the
//! regression has a closed form; on Gaussian endpoints the exact conditional
//! velocity is affine in `φ` at every `t`, so the family contains the optimum
//! up to time binning.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng;

pub const DEFAULT_SIGMA_MIN: f64 = 1e-4;
pub const DEFAULT_TIME_BINS: usize = 32;
pub const RIDGE: f64 = 1e-8;

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

pub fn interpolate(x0: &[f64], x1: &[f64], t: f64, sigma_min: f64) -> Result<Vec<f64>> {
    check_dims(x0, x1)?;
    let a = 1.0 - (1.0 - sigma_min) * t;
    Ok(x0.iter().zip(x1).map(|(&p, &q)| a * p + t * q).collect())
}

pub fn target_velocity(x0: &[f64], x1: &[f64], sigma_min: f64) -> Result<Vec<f64>> {
    check_dims(x0, x1)?;
    let b = 1.0 - sigma_min;
    Ok(x0.iter().zip(x1).map(|(&p, &q)| q - b * p).collect())
}

/// Concatenates condition parts in order.
pub fn build_condition(parts: &[&[f64]]) -> Vec<f64> {
    parts.concat()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t: f64,
    pub phi_t: Vec<f64>,
    pub u_t: Vec<f64>,
    pub cond: Vec<f64>,
}

impl FlowSample {
    pub fn new(x0: Vec<f64>, x1: Vec<f64>, t: f64, sigma_min: f64, cond: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::config(format!("time {t} is outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&sigma_min) {
            return Err(Error::config(format!(
                "sigma_min {sigma_min} is outside [0, 1)"
            )));
        }
        let phi_t = interpolate(&x0, &x1, t, sigma_min)?;
        let u_t = target_velocity(&x0, &x1, sigma_min)?;
        Ok(Self {
            x0,
            x1,
            t,
            phi_t,
            u_t,
            cond,
        })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

pub trait VectorFieldModel: Sync {
    fn dim(&self) -> usize;

    fn velocity(&self, phi: &[f64], t: f64, cond: &[f64]) -> Vec<f64>;
}

/// Mean squared error between target and predicted velocities.
pub fn cfm_loss<M: VectorFieldModel + ?Sized>(model: &M, batch: &[FlowSample]) -> Result<f64> {
    let first = batch.first().ok_or(Error::Empty("flow batch"))?;
    let d = first.dim();
    if model.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: d,
        });
    }
    for s in batch {
        if s.dim() != d || s.phi_t.len() != d || s.u_t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.dim(),
            });
        }
    }
    let errs = par::map_slice(batch, |_, s| {
        let v = model.velocity(&s.phi_t, s.t, &s.cond);
        s.u_t
            .iter()
            .zip(&v)
            .map(|(u, v)| (u - v).powi(2))
            .sum::<f64>()
    });
    Ok(par::ordered_sum(&errs) / batch.len() as f64)
}

/// Piecewise-in-time affine field: `v(x, t) = W_b x + c_b` for the uniform
/// time bin `b` containing `t`. The condition is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFieldModel {
    pub dim: usize,
    pub bins: usize,
    /// Per bin, `W_b` as a row-major `dim × dim` array.
    pub weights: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
}

impl AffineFieldModel {
    pub fn bin_of(&self, t: f64) -> usize {
        ((t * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
    }
}

impl VectorFieldModel for AffineFieldModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, phi: &[f64], t: f64, _cond: &[f64]) -> Vec<f64> {
        let b = self.bin_of(t);
        let w = &self.weights[b];
        (0..self.dim)
            .map(|r| {
                self.offsets[b][r]
                    + (0..self.dim)
                        .map(|c| w[r * self.dim + c] * phi[c])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Least-squares fit of `u ≈ W φ + c` in each time bin.
///
/// Solves the normal equations of the mean second-moment matrix of `[φ, 1]`
/// with a small ridge, which minimizes the empirical flow-matching loss within
/// the affine family.
pub fn fit_affine_field(samples: &[FlowSample], bins: usize) -> Result<AffineFieldModel> {
    let first = samples.first().ok_or(Error::Empty("flow samples"))?;
    if bins == 0 {
        return Err(Error::config("bins must be positive"));
    }
    let d = first.dim();
    let p = d + 1;
    let bin_of = |t: f64| ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1);

    let mut gram = vec![DMatrix::<f64>::zeros(p, p); bins];
    let mut cross = vec![DMatrix::<f64>::zeros(p, d); bins];
    let mut counts = vec![0usize; bins];
    let mut z = DVector::<f64>::zeros(p);
    for s in samples {
        if s.phi_t.len() != d || s.u_t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.phi_t.len(),
            });
        }
        let b = bin_of(s.t);
        for k in 0..d {
            z[k] = s.phi_t[k];
        }
        z[d] = 1.0;
        counts[b] += 1;
        for r in 0..p {
            for c in 0..p {
                gram[b][(r, c)] += z[r] * z[c];
            }
            for c in 0..d {
                cross[b][(r, c)] += z[r] * s.u_t[c];
            }
        }
    }

    let mut weights = Vec::with_capacity(bins);
    let mut offsets = Vec::with_capacity(bins);
    for b in 0..bins {
        if counts[b] < p {
            return Err(Error::DegenerateBin {
                bin: b,
                reason: format!("{} samples, need at least {p}", counts[b]),
            });
        }
        let n = counts[b] as f64;
        let mut a = &gram[b] / n;
        for k in 0..p {
            a[(k, k)] += RIDGE;
        }
        let rhs = &cross[b] / n;
        let sol = a
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .or_else(|| a.lu().solve(&rhs))
            .ok_or_else(|| Error::DegenerateBin {
                bin: b,
                reason: "singular normal equations".into(),
            })?;
        // sol is p × d: rows 0..d hold W^T, row d holds c
        let mut w = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                w[r * d + c] = sol[(c, r)];
            }
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateBin {
                bin: b,
                reason: "non-finite solution".into(),
            });
        }
        weights.push(w);
        offsets.push((0..d).map(|c| sol[(d, c)]).collect());
    }
    Ok(AffineFieldModel {
        dim: d,
        bins,
        weights,
        offsets,
    })
}

/// Explicit Euler integration from `t = 0` to `t = 1`.
pub fn euler_sample<M: VectorFieldModel + ?Sized>(
    model: &M,
    x0: &[f64],
    steps: usize,
    cond: &[f64],
) -> Result<Vec<f64>> {
    if steps < 1 {
        return Err(Error::config("steps must be at least 1"));
    }
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x0.len(),
        });
    }
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    for step in 0..steps {
        let v = model.velocity(&x, step as f64 * h, cond);
        if v.len() != x.len() || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteVelocity { step });
        }
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += h * vi;
        }
    }
    Ok(x)
}

/// Independent per-coordinate Gaussian endpoints: `x0 ~ N(prior_mean,
/// prior_std²)`, `x1 ~ N(data_mean, data_std²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianTestbed {
    pub prior_mean: Vec<f64>,
    pub prior_std: Vec<f64>,
    pub data_mean: Vec<f64>,
    pub data_std: Vec<f64>,
    pub sigma_min: f64,
}

impl GaussianTestbed {
    /// `x0 ~ N(0, 1)`, `x1 ~ N(5, 1)` in one dimension.
    pub fn standard_1d(sigma_min: f64) -> Self {
        Self {
            prior_mean: vec![0.0],
            prior_std: vec![1.0],
            data_mean: vec![5.0],
            data_std: vec![1.0],
            sigma_min,
        }
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for v in [&self.prior_std, &self.data_mean, &self.data_std] {
            check_dims(&self.prior_mean, v)?;
        }
        if d == 0 {
            return Err(Error::Empty("testbed dimension"));
        }
        if self
            .prior_std
            .iter()
            .chain(&self.data_std)
            .any(|&s| !(s >= 0.0))
        {
            return Err(Error::config("standard deviations must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.sigma_min) {
            return Err(Error::config("sigma_min must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn draw_prior(&self, rng: &mut rng::Rng) -> Vec<f64> {
        self.prior_mean
            .iter()
            .zip(&self.prior_std)
            .map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn draw_data(&self, rng: &mut rng::Rng) -> Vec<f64> {
        self.data_mean
            .iter()
            .zip(&self.data_std)
            .map(|(&m, &s)| Normal::new(m, s).map_or(m, |n| n.sample(rng)))
            .collect()
    }

    /// `n` training tuples with `t ~ U(0, 1)`; sample `i` uses its own stream.
    pub fn samples(&self, n: usize, seed: u64) -> Result<Vec<FlowSample>> {
        self.validate()?;
        par::try_map_range(n, |i| {
            let mut r = rng::stream_rng(seed, i as u64);
            let x0 = self.draw_prior(&mut r);
            let x1 = self.draw_data(&mut r);
            let t: f64 = r.gen();
            FlowSample::new(x0, x1, t, self.sigma_min, Vec::new())
        })
    }

    /// Per coordinate, the moments `(E[u], E[φ_t], Var φ_t, Cov(u, φ_t), Var u)`.
    fn moments(&self, k: usize, t: f64) -> (f64, f64, f64, f64, f64) {
        let a = 1.0 - (1.0 - self.sigma_min) * t;
        let b = 1.0 - self.sigma_min;
        let (m0, s0) = (self.prior_mean[k], self.prior_std[k]);
        let (m1, s1) = (self.data_mean[k], self.data_std[k]);
        let (v0, v1) = (s0 * s0, s1 * s1);
        (
            m1 - b * m0,
            a * m0 + t * m1,
            a * a * v0 + t * t * v1,
            t * v1 - a * b * v0,
            v1 + b * b * v0,
        )
    }

    /// Exact marginal velocity `E[u | φ_t = phi]`, affine in `phi`.
    pub fn conditional_velocity(&self, phi: &[f64], t: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                let (mu_u, mu_phi, var_phi, cov, _) = self.moments(k, t);
                if var_phi > 0.0 {
                    mu_u + cov / var_phi * (phi[k] - mu_phi)
                } else {
                    mu_u
                }
            })
            .collect()
    }

    /// `E_t[ Σ_k Var(u_k | φ_t) ]`: the smallest attainable flow-matching loss,
    /// by composite Simpson quadrature over `t`.
    pub fn residual_variance(&self) -> f64 {
        let f = |t: f64| {
            (0..self.dim())
                .map(|k| {
                    let (_, _, var_phi, cov, var_u) = self.moments(k, t);
                    if var_phi > 0.0 {
                        var_u - cov * cov / var_phi
                    } else {
                        var_u
                    }
                })
                .sum::<f64>()
        };
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Marginal data variance per coordinate.
    pub fn data_variance(&self) -> Vec<f64> {
        self.data_std.iter().map(|s| s * s).collect()
    }
}

/// The analytic field of a testbed wrapped as a model.
pub struct AnalyticField<'a>(pub &'a GaussianTestbed);

impl VectorFieldModel for AnalyticField<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn velocity(&self, phi: &[f64], t: f64, _cond: &[f64]) -> Vec<f64> {
        self.0.conditional_velocity(phi, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSuiteConfig {
    pub testbed: GaussianTestbed,
    pub train_samples: usize,
    pub bins: usize,
    pub loss_samples: usize,
    pub euler_steps: usize,
    pub euler_draws: usize,
    pub seed: u64,
}

impl Default for FlowSuiteConfig {
    fn default() -> Self {
        Self {
            testbed: GaussianTestbed::standard_1d(0.0),
            train_samples: 1_000_000,
            bins: DEFAULT_TIME_BINS,
            loss_samples: 100_000,
            euler_steps: 100,
            euler_draws: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSuiteReport {
    /// Largest relative gap between fitted and analytic field over a grid of
    /// bin-centre times and `φ` within two standard deviations of its mean.
    pub field_max_rel_err: f64,
    pub fitted_loss: f64,
    pub analytic_residual: f64,
    pub loss_rel_err: f64,
    pub euler_mean: Vec<f64>,
    pub euler_var: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_var: Vec<f64>,
    pub mean_rel_err: f64,
    pub var_rel_err: f64,
    pub passed: bool,
    pub model: AffineFieldModel,
}

pub const FIELD_TOLERANCE: f64 = 0.02;
pub const LOSS_TOLERANCE: f64 = 0.02;
pub const EULER_MEAN_TOLERANCE: f64 = 0.05;
pub const EULER_VAR_TOLERANCE: f64 = 0.10;

/// Fits the affine field on a Gaussian testbed and checks it against the
/// analytic field, the analytic loss floor and the target marginal.
pub fn run_gaussian_suite(cfg: &FlowSuiteConfig) -> Result<FlowSuiteReport> {
    let tb = &cfg.testbed;
    tb.validate()?;
    let d = tb.dim();
    let train = tb.samples(cfg.train_samples, rng::derive_seed(cfg.seed, 1))?;
    let model = fit_affine_field(&train, cfg.bins)?;

    let mut field_err: f64 = 0.0;
    for b in 0..cfg.bins {
        let t = (b as f64 + 0.5) / cfg.bins as f64;
        for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let phi: Vec<f64> = (0..d)
                .map(|k| {
                    let (_, mu, var, _, _) = tb.moments(k, t);
                    mu + z * var.sqrt()
                })
                .collect();
            let fit = model.velocity(&phi, t, &[]);
            let exact = tb.conditional_velocity(&phi, t);
            let num: f64 = fit.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = exact.iter().map(|b| b * b).sum();
            field_err = field_err.max((num / den.max(1e-12)).sqrt());
        }
    }

    let fresh = tb.samples(cfg.loss_samples, rng::derive_seed(cfg.seed, 2))?;
    let fitted_loss = cfm_loss(&model, &fresh)?;
    let analytic_residual = tb.residual_variance();
    let loss_rel_err = (fitted_loss - analytic_residual).abs() / analytic_residual;

    let draws = par::try_map_range(cfg.euler_draws, |i| {
        let mut r = rng::stream_rng(rng::derive_seed(cfg.seed, 3), i as u64);
        euler_sample(&model, &tb.draw_prior(&mut r), cfg.euler_steps, &[])
    })?;
    let n = draws.len() as f64;
    let euler_mean: Vec<f64> = (0..d)
        .map(|k| draws.iter().map(|x| x[k]).sum::<f64>() / n)
        .collect();
    let euler_var: Vec<f64> = (0..d)
        .map(|k| {
            draws
                .iter()
                .map(|x| (x[k] - euler_mean[k]).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        })
        .collect();
    let target_mean = tb.data_mean.clone();
    let target_var = tb.data_variance();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    let mean_rel_err = (0..d)
        .map(|k| rel(euler_mean[k], target_mean[k]))
        .fold(0.0, f64::max);
    let var_rel_err = (0..d)
        .map(|k| rel(euler_var[k], target_var[k]))
        .fold(0.0, f64::max);

    let passed = field_err <= FIELD_TOLERANCE
        && loss_rel_err <= LOSS_TOLERANCE
        && mean_rel_err <= EULER_MEAN_TOLERANCE
        && var_rel_err <= EULER_VAR_TOLERANCE;
    Ok(FlowSuiteReport {
        field_max_rel_err: field_err,
        fitted_loss,
        analytic_residual,
        loss_rel_err,
        euler_mean,
        euler_var,
        target_mean,
        target_var,
        mean_rel_err,
        var_rel_err,
        passed,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(Vec<f64>);

    impl VectorFieldModel for Constant {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn velocity(&self, _: &[f64], _: f64, _: &[f64]) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn interpolation_endpoints() {
        let (x0, x1) = ([1.5, -2.0], [0.25, 4.0]);
        for sigma in [0.0, 1e-4] {
            assert_eq!(interpolate(&x0, &x1, 0.0, sigma).unwrap(), x0.to_vec());
            let end = interpolate(&x0, &x1, 1.0, sigma).unwrap();
            assert_eq!(end, vec![sigma * 1.5 + 0.25, sigma * -2.0 + 4.0]);
        }
        assert_eq!(
            interpolate(&[1.0, 0.0], &[0.0, 1.0], 0.5, 0.0).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(interpolate(&[1.0], &[1.0, 2.0], 0.5, 0.0).is_err());
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(
            target_velocity(&[3.0, 1.0], &[3.0, 1.0], 0.0).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            target_velocity(&[0.0, 0.0], &[2.0, 7.0], 0.3).unwrap(),
            vec![2.0, 7.0]
        );
        let u = target_velocity(&[2.0], &[5.0], 0.1).unwrap();
        assert!((u[0] - 3.2).abs() < 1e-12);
        assert!(target_velocity(&[1.0], &[], 0.0).is_err());
    }

    #[test]
    fn condition_concatenation() {
        assert_eq!(build_condition(&[&[1.0, 2.0], &[3.0]]), vec![1.0, 2.0, 3.0]);
        assert!(build_condition(&[]).is_empty());
        assert_eq!(build_condition(&[&[0.0; 4], &[1.0; 8]]).len(), 12);
    }

    #[test]
    fn loss_examples() {
        let s = FlowSample::new(vec![0.0, 0.0], vec![3.0, 4.0], 0.3, 0.0, vec![]).unwrap();
        assert_eq!(
            cfm_loss(&Constant(vec![0.0, 0.0]), std::slice::from_ref(&s)).unwrap(),
            25.0
        );
        assert_eq!(cfm_loss(&Constant(vec![3.0, 4.0]), &[s]).unwrap(), 0.0);
        assert!(matches!(
            cfm_loss(&Constant(vec![0.0]), &[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn euler_constant_field_is_exact() {
        let m = Constant(vec![1.5, -0.5]);
        for steps in [1, 3, 100] {
            let x = euler_sample(&m, &[1.0, 1.0], steps, &[]).unwrap();
            assert!((x[0] - 2.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
        }
        assert!(euler_sample(&m, &[1.0, 1.0], 0, &[]).is_err());
    }

    #[test]
    fn euler_reports_non_finite_step() {
        struct Blowup;
        impl VectorFieldModel for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn velocity(&self, _: &[f64], t: f64, _: &[f64]) -> Vec<f64> {
                vec![if t >= 0.5 { f64::NAN } else { 1.0 }]
            }
        }
        assert!(matches!(
            euler_sample(&Blowup, &[0.0], 4, &[]),
            Err(Error::NonFiniteVelocity { step: 2 })
        ));
    }

    #[test]
    fn constant_displacement_gives_constant_field() {
        let v = [0.7, -1.3];
        let mut r = rng::rng_from_seed(5);
        let samples: Vec<FlowSample> = (0..4000)
            .map(|_| {
                let x0 = vec![r.gen::<f64>() * 4.0 - 2.0, r.gen::<f64>() * 4.0 - 2.0];
                let x1 = vec![x0[0] + v[0], x0[1] + v[1]];
                FlowSample::new(x0, x1, r.gen(), 0.0, vec![]).unwrap()
            })
            .collect();
        let m = fit_affine_field(&samples, 8).unwrap();
        for b in 0..8 {
            assert!(
                m.weights[b].iter().all(|w| w.abs() < 1e-6),
                "{:?}",
                m.weights[b]
            );
            assert!((m.offsets[b][0] - v[0]).abs() < 1e-6);
            assert!((m.offsets[b][1] - v[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn collapsed_prior_stays_finite() {
        let tb = GaussianTestbed {
            prior_mean: vec![1.0],
            prior_std: vec![0.0],
            data_mean: vec![1.0],
            data_std: vec![0.0],
            sigma_min: 0.0,
        };
        let m = fit_affine_field(&tb.samples(2000, 1).unwrap(), 4).unwrap();
        for b in 0..4 {
            assert!(m.weights[b][0].is_finite() && m.offsets[b][0].is_finite());
            // every sample has u = 0 and φ = 1
            assert!((m.velocity(&[1.0], (b as f64 + 0.5) / 4.0, &[])[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_bin_is_named() {
        let s: Vec<FlowSample> = (0..10)
            .map(|i| FlowSample::new(vec![i as f64], vec![1.0], 0.1, 0.0, vec![]).unwrap())
            .collect();
        match fit_affine_field(&s, 4) {
            Err(Error::DegenerateBin { bin, .. }) => assert_eq!(bin, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_is_order_invariant() {
        let tb = GaussianTestbed {
            prior_mean: vec![0.0, 1.0],
            prior_std: vec![1.0, 0.5],
            data_mean: vec![5.0, -2.0],
            data_std: vec![1.0, 2.0],
            sigma_min: 1e-4,
        };
        let samples = tb.samples(20_000, 9).unwrap();
        let mut reversed = samples.clone();
        reversed.reverse();
        let a = fit_affine_field(&samples, 8).unwrap();
        let b = fit_affine_field(&reversed, 8).unwrap();
        for bin in 0..8 {
            for (x, y) in a.weights[bin].iter().zip(&b.weights[bin]) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
            for (x, y) in a.offsets[bin].iter().zip(&b.offsets[bin]) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn model_json_is_row_major() {
        let m = AffineFieldModel {
            dim: 2,
            bins: 1,
            weights: vec![vec![1.0, 2.0, 3.0, 4.0]],
            offsets: vec![vec![0.5, -0.5]],
        };
        assert_eq!(m.velocity(&[1.0, 1.0], 0.3, &[]), vec![3.5, 6.5]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(
            json,
            r#"{"dim":2,"bins":1,"weights":[[1.0,2.0,3.0,4.0]],"offsets":[[0.5,-0.5]]}"#
        );
    }
}
