//! Parametric task distributions.
//!
//! A [`TaskDistribution`] is one member `D_phi` of a parametric family over the
//! task space. The robust sampler needs four things from it: draws, densities,
//! importance weights against the original member, and the weighted
//! cross-entropy refit of the parameter on a selected set of tasks.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::rng::RandomStream;

/// Lower clamp for Beta-family parameters.
pub const PHI_MIN: f64 = 1e-3;
/// Upper clamp for Beta-family parameters.
pub const PHI_MAX: f64 = 1.0 - 1e-3;
/// Absolute tolerance of the golden-section search used by Beta refits.
pub const GOLDEN_TOL: f64 = 1e-8;
/// Unit-interval draws are kept this far away from 0 and 1 so that log densities stay finite.
const UNIT_EPS: f64 = 1e-12;

/// A point of the task space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Task(pub Vec<f64>);

impl Task {
    pub fn scalar(v: f64) -> Self {
        Task(vec![v])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// First coordinate, the whole task for one-dimensional spaces.
    pub fn first(&self) -> f64 {
        self.0[0]
    }
}

/// A member of one of the supported parametric families.
///
/// `BetaUnit(phi)` is `Beta(2 phi, 2 - 2 phi)` on `[0, 1]`, so its mean is `phi`
/// and `phi = 0.5` is the uniform distribution. `AffineBetaUnit` maps the same
/// variable linearly onto `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRecord", into = "DistributionRecord")]
pub enum TaskDistribution {
    Exponential { rate: f64 },
    BetaUnit { phi: f64 },
    AffineBetaUnit { phi: f64, lo: f64, hi: f64 },
    Product(Vec<TaskDistribution>),
}

impl TaskDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        let d = TaskDistribution::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn beta_unit(phi: f64) -> Result<Self> {
        let d = TaskDistribution::BetaUnit { phi };
        d.validate()?;
        Ok(d)
    }

    pub fn affine_beta(phi: f64, lo: f64, hi: f64) -> Result<Self> {
        let d = TaskDistribution::AffineBetaUnit { phi, lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn product(components: Vec<TaskDistribution>) -> Result<Self> {
        let d = TaskDistribution::Product(components);
        d.validate()?;
        Ok(d)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            TaskDistribution::Exponential { .. } => "exponential",
            TaskDistribution::BetaUnit { .. } => "beta_unit",
            TaskDistribution::AffineBetaUnit { .. } => "affine_beta_unit",
            TaskDistribution::Product(_) => "product",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TaskDistribution::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(domain(format!("exponential rate must be positive, got {rate}")));
                }
            }
            TaskDistribution::BetaUnit { phi } => check_phi(phi)?,
            TaskDistribution::AffineBetaUnit { phi, lo, hi } => {
                check_phi(phi)?;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(domain(format!("affine range must satisfy lo < hi, got [{lo}, {hi}]")));
                }
            }
            TaskDistribution::Product(ref parts) => {
                if parts.is_empty() {
                    return Err(domain("product distribution needs at least one component"));
                }
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Dimension of the task space.
    pub fn dim(&self) -> usize {
        match self {
            TaskDistribution::Product(parts) => parts.iter().map(|p| p.dim()).sum(),
            _ => 1,
        }
    }

    /// The controllable parameter vector.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            TaskDistribution::Exponential { rate } => vec![rate],
            TaskDistribution::BetaUnit { phi } => vec![phi],
            TaskDistribution::AffineBetaUnit { phi, .. } => vec![phi],
            TaskDistribution::Product(ref parts) => parts.iter().flat_map(|p| p.params()).collect(),
        }
    }

    /// Same family, new controllable parameters.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let out = match *self {
            TaskDistribution::Exponential { .. } => {
                expect_len(params, 1)?;
                TaskDistribution::Exponential { rate: params[0] }
            }
            TaskDistribution::BetaUnit { .. } => {
                expect_len(params, 1)?;
                TaskDistribution::BetaUnit { phi: params[0] }
            }
            TaskDistribution::AffineBetaUnit { lo, hi, .. } => {
                expect_len(params, 1)?;
                TaskDistribution::AffineBetaUnit { phi: params[0], lo, hi }
            }
            TaskDistribution::Product(ref parts) => {
                expect_len(params, self.params().len())?;
                let mut offset = 0;
                let mut next = Vec::with_capacity(parts.len());
                for p in parts {
                    let k = p.params().len();
                    next.push(p.with_params(&params[offset..offset + k])?);
                    offset += k;
                }
                TaskDistribution::Product(next)
            }
        };
        out.validate()?;
        Ok(out)
    }

    /// Analytic mean of each task coordinate.
    pub fn mean(&self) -> Vec<f64> {
        match *self {
            TaskDistribution::Exponential { rate } => vec![1.0 / rate],
            TaskDistribution::BetaUnit { phi } => vec![phi],
            TaskDistribution::AffineBetaUnit { phi, lo, hi } => vec![lo + phi * (hi - lo)],
            TaskDistribution::Product(ref parts) => parts.iter().flat_map(|p| p.mean()).collect(),
        }
    }

    /// Draws one task.
    pub fn sample_one(&self, rng: &mut RandomStream) -> Task {
        let mut out = Vec::with_capacity(self.dim());
        self.sample_into(rng, &mut out);
        Task(out)
    }

    fn sample_into(&self, rng: &mut RandomStream, out: &mut Vec<f64>) {
        match *self {
            TaskDistribution::Exponential { rate } => {
                out.push(Exp::new(rate).expect("validated rate").sample(rng));
            }
            TaskDistribution::BetaUnit { phi } => out.push(sample_unit_beta(phi, rng)),
            TaskDistribution::AffineBetaUnit { phi, lo, hi } => {
                out.push(lo + (hi - lo) * sample_unit_beta(phi, rng));
            }
            TaskDistribution::Product(ref parts) => {
                for p in parts {
                    p.sample_into(rng, out);
                }
            }
        }
    }

    /// Draws `n` i.i.d. tasks.
    pub fn sample(&self, rng: &mut RandomStream, n: usize) -> Result<Vec<Task>> {
        if n == 0 {
            return Err(domain("sample size must be at least 1"));
        }
        self.validate()?;
        Ok((0..n).map(|_| self.sample_one(rng)).collect())
    }

    /// Density at `z`; zero outside the support.
    pub fn density(&self, z: &Task) -> f64 {
        if z.dim() != self.dim() {
            return 0.0;
        }
        let ld = self.log_density_at(z.values());
        if ld == f64::NEG_INFINITY {
            0.0
        } else {
            ld.exp()
        }
    }

    /// Log density at `z`; negative infinity outside the support.
    pub fn log_density(&self, z: &Task) -> f64 {
        if z.dim() != self.dim() {
            return f64::NEG_INFINITY;
        }
        self.log_density_at(z.values())
    }

    fn log_density_at(&self, z: &[f64]) -> f64 {
        match *self {
            TaskDistribution::Exponential { rate } => {
                let x = z[0];
                if x < 0.0 || !x.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            TaskDistribution::BetaUnit { phi } => unit_beta_log_pdf(phi, z[0]),
            TaskDistribution::AffineBetaUnit { phi, lo, hi } => {
                let width = hi - lo;
                unit_beta_log_pdf(phi, (z[0] - lo) / width) - width.ln()
            }
            TaskDistribution::Product(ref parts) => {
                let mut offset = 0;
                let mut total = 0.0;
                for p in parts {
                    let k = p.dim();
                    total += p.log_density_at(&z[offset..offset + k]);
                    offset += k;
                }
                total
            }
        }
    }

    /// Weighted cross-entropy refit: the member of this family maximizing
    /// `sum_i w_i log D(z_i)` over the selected tasks.
    ///
    /// Weights are normalized internally, so the result is invariant to their
    /// scale. An empty selection yields [`Error::EmptySelection`].
    pub fn ce_update(&self, selected: &[(Task, f64)]) -> Result<Self> {
        if selected.is_empty() {
            return Err(Error::EmptySelection);
        }
        let mut total = 0.0;
        for (z, w) in selected {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(domain(format!("weights must be finite and nonnegative, got {w}")));
            }
            if z.dim() != self.dim() {
                return Err(Error::Shape(format!(
                    "task of dimension {} for a {}-dimensional family",
                    z.dim(),
                    self.dim()
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(domain("at least one selection weight must be positive"));
        }
        let samples: Vec<(&[f64], f64)> = selected
            .iter()
            .map(|(z, w)| (z.values(), w / total))
            .collect();
        self.refit(&samples)
    }

    fn refit(&self, samples: &[(&[f64], f64)]) -> Result<Self> {
        match *self {
            TaskDistribution::Exponential { .. } => {
                let mut wsum = 0.0;
                let mut wz = 0.0;
                for (z, w) in samples {
                    wsum += w;
                    wz += w * z[0];
                }
                if !(wz > 0.0) {
                    return Err(domain("exponential refit needs a positive weighted mean"));
                }
                TaskDistribution::exponential(wsum / wz)
            }
            TaskDistribution::BetaUnit { .. } => {
                let unit: Vec<(f64, f64)> = samples.iter().map(|(z, w)| (z[0], *w)).collect();
                Ok(TaskDistribution::BetaUnit { phi: fit_unit_beta(&unit) })
            }
            TaskDistribution::AffineBetaUnit { lo, hi, .. } => {
                let unit: Vec<(f64, f64)> = samples
                    .iter()
                    .map(|(z, w)| ((z[0] - lo) / (hi - lo), *w))
                    .collect();
                Ok(TaskDistribution::AffineBetaUnit { phi: fit_unit_beta(&unit), lo, hi })
            }
            TaskDistribution::Product(ref parts) => {
                let mut offset = 0;
                let mut next = Vec::with_capacity(parts.len());
                for p in parts {
                    let k = p.dim();
                    let projected: Vec<(&[f64], f64)> = samples
                        .iter()
                        .map(|(z, w)| (&z[offset..offset + k], *w))
                        .collect();
                    next.push(p.refit(&projected)?);
                    offset += k;
                }
                Ok(TaskDistribution::Product(next))
            }
        }
    }
}

/// Importance weight `D_original(z) / D_current(z)` of a task drawn from `current`.
pub fn importance_weight(original: &TaskDistribution, current: &TaskDistribution, z: &Task) -> Result<f64> {
    let lq = current.log_density(z);
    if lq == f64::NEG_INFINITY || lq.is_nan() {
        return Err(Error::DegenerateWeight { task: z.0.clone(), density: current.density(z) });
    }
    if original == current {
        return Ok(1.0);
    }
    let lp = original.log_density(z);
    Ok((lp - lq).exp())
}

fn check_phi(phi: f64) -> Result<()> {
    if !(PHI_MIN..=PHI_MAX).contains(&phi) {
        return Err(domain(format!("beta parameter must lie in [{PHI_MIN}, {PHI_MAX}], got {phi}")));
    }
    Ok(())
}

fn expect_len(params: &[f64], n: usize) -> Result<()> {
    if params.len() != n {
        return Err(Error::Shape(format!("expected {n} parameters, got {}", params.len())));
    }
    Ok(())
}

fn sample_unit_beta(phi: f64, rng: &mut RandomStream) -> f64 {
    let (a, b) = beta_shape(phi);
    let x: f64 = if a == 1.0 && b == 1.0 {
        rng.random()
    } else {
        Beta::new(a, b).expect("validated shape").sample(rng)
    };
    x.clamp(UNIT_EPS, 1.0 - UNIT_EPS)
}

fn beta_shape(phi: f64) -> (f64, f64) {
    (2.0 * phi, 2.0 - 2.0 * phi)
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `c * ln(x)` with the convention `0 * ln(0) = 0`.
fn xlogy(c: f64, x: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * x.ln()
    }
}

fn unit_beta_log_pdf(phi: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    let (a, b) = beta_shape(phi);
    xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x) - ln_beta_fn(a, b)
}

/// Maximizes the normalized weighted log-likelihood of `Beta(2 phi, 2 - 2 phi)`
/// by golden-section search on `[PHI_MIN, PHI_MAX]`.
fn fit_unit_beta(samples: &[(f64, f64)]) -> f64 {
    // Sufficient statistics: the objective only depends on the weighted log moments.
    let mut s_log = 0.0;
    let mut s_log1m = 0.0;
    for &(x, w) in samples {
        let x = x.clamp(UNIT_EPS, 1.0 - UNIT_EPS);
        s_log += w * x.ln();
        s_log1m += w * (1.0 - x).ln();
    }
    let objective = |phi: f64| {
        let (a, b) = beta_shape(phi);
        (a - 1.0) * s_log + (b - 1.0) * s_log1m - ln_beta_fn(a, b)
    };
    golden_section_max(objective, PHI_MIN, PHI_MAX, GOLDEN_TOL).clamp(PHI_MIN, PHI_MAX)
}

/// Golden-section search for the maximizer of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Serialized form `{family, params}`; products carry their `components`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionRecord {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<DistributionRecord>,
}

impl From<TaskDistribution> for DistributionRecord {
    fn from(d: TaskDistribution) -> Self {
        let family = d.family_name().to_string();
        match d {
            TaskDistribution::Exponential { rate } => DistributionRecord { family, params: vec![rate], components: vec![] },
            TaskDistribution::BetaUnit { phi } => DistributionRecord { family, params: vec![phi], components: vec![] },
            TaskDistribution::AffineBetaUnit { phi, lo, hi } => {
                DistributionRecord { family, params: vec![phi, lo, hi], components: vec![] }
            }
            TaskDistribution::Product(parts) => DistributionRecord {
                family,
                params: vec![],
                components: parts.into_iter().map(Into::into).collect(),
            },
        }
    }
}

impl TryFrom<DistributionRecord> for TaskDistribution {
    type Error = Error;

    fn try_from(r: DistributionRecord) -> Result<Self> {
        let p = &r.params;
        let d = match r.family.as_str() {
            "exponential" => {
                expect_len(p, 1)?;
                TaskDistribution::Exponential { rate: p[0] }
            }
            "beta_unit" => {
                expect_len(p, 1)?;
                TaskDistribution::BetaUnit { phi: p[0] }
            }
            "affine_beta_unit" => {
                expect_len(p, 3)?;
                TaskDistribution::AffineBetaUnit { phi: p[0], lo: p[1], hi: p[2] }
            }
            "product" => TaskDistribution::Product(
                r.components
                    .into_iter()
                    .map(TaskDistribution::try_from)
                    .collect::<Result<Vec<_>>>()?,
            ),
            other => return Err(domain(format!("unknown distribution family `{other}`"))),
        };
        d.validate()?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::testutil::{grid_argmax, tanh_sinh};
    use proptest::prelude::*;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn exponential_sample_mean() {
        let d = TaskDistribution::exponential(0.1).unwrap();
        let xs: Vec<f64> = d.sample(&mut stream(1, &[]), 200_000).unwrap().iter().map(Task::first).collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - 10.0).abs() < 4.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn uniform_beta_passes_ks() {
        let d = TaskDistribution::beta_unit(0.5).unwrap();
        let mut xs: Vec<f64> = d.sample(&mut stream(2, &[]), 20_000).unwrap().iter().map(Task::first).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i as f64 + 1.0) / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(ks < 1.63 / n.sqrt(), "ks = {ks}");
    }

    #[test]
    fn affine_beta_sample_mean() {
        let d = TaskDistribution::affine_beta(0.5, 0.1, 5.0).unwrap();
        assert!((d.mean()[0] - 2.55).abs() < 1e-12);
        let xs: Vec<f64> = d.sample(&mut stream(3, &[]), 100_000).unwrap().iter().map(Task::first).collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - 2.55).abs() < 4.0 * se);
    }

    #[test]
    fn beta_unit_mean_is_phi() {
        for &phi in &[0.05, 0.25, 0.5, 0.8, 0.97] {
            let d = TaskDistribution::beta_unit(phi).unwrap();
            let xs: Vec<f64> = d.sample(&mut stream(4, &[]), 100_000).unwrap().iter().map(Task::first).collect();
            let (m, se) = mean_and_se(&xs);
            assert!((m - phi).abs() < 3.0 * se, "phi {phi}: mean {m} se {se}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_validated() {
        let d = TaskDistribution::beta_unit(0.3).unwrap();
        assert_eq!(d.sample(&mut stream(9, &[]), 5).unwrap(), d.sample(&mut stream(9, &[]), 5).unwrap());
        assert!(d.sample(&mut stream(9, &[]), 0).is_err());
        assert!(TaskDistribution::exponential(0.0).is_err());
        assert!(TaskDistribution::exponential(-1.0).is_err());
        assert!(TaskDistribution::beta_unit(0.0).is_err());
        assert!(TaskDistribution::beta_unit(1.0).is_err());
        assert!(TaskDistribution::affine_beta(0.5, 2.0, 1.0).is_err());
        assert!(TaskDistribution::product(vec![]).is_err());
    }

    #[test]
    fn point_densities() {
        let e = TaskDistribution::exponential(0.1).unwrap();
        assert!((e.density(&Task::scalar(0.0)) - 0.1).abs() < 1e-15);
        assert_eq!(e.density(&Task::scalar(-1e-9)), 0.0);
        let u = TaskDistribution::beta_unit(0.5).unwrap();
        assert!((u.density(&Task::scalar(0.3)) - 1.0).abs() < 1e-12);
        assert_eq!(u.density(&Task::scalar(1.5)), 0.0);

        // Beta(0.5, 1.5) at 0.5, normalized numerically.
        let kernel = |x: f64| x.powf(-0.5) * (1.0 - x).powf(0.5);
        let z = tanh_sinh(kernel, 0.0, 1.0);
        let expected = kernel(0.5) / z;
        let d = TaskDistribution::beta_unit(0.25).unwrap();
        assert!((d.density(&Task::scalar(0.5)) - expected).abs() < 1e-9, "{} vs {expected}", d.density(&Task::scalar(0.5)));
    }

    #[test]
    fn densities_integrate_to_one() {
        for &rate in &[0.1, 1.0, 7.5] {
            let d = TaskDistribution::exponential(rate).unwrap();
            let i = tanh_sinh(|x| d.density(&Task::scalar(x)), 0.0, 60.0 / rate);
            assert!((i - 1.0).abs() < 1e-3, "rate {rate}: {i}");
        }
        for &phi in &[0.1, 0.25, 0.5, 0.75, 0.9] {
            let d = TaskDistribution::beta_unit(phi).unwrap();
            let i = tanh_sinh(|x| d.density(&Task::scalar(x)), 0.0, 1.0);
            assert!((i - 1.0).abs() < 1e-3, "phi {phi}: {i}");
            let a = TaskDistribution::affine_beta(phi, 0.3, 3.0).unwrap();
            let i = tanh_sinh(|x| a.density(&Task::scalar(x)), 0.3, 3.0);
            assert!((i - 1.0).abs() < 1e-3, "affine phi {phi}: {i}");
        }
        // Product of two components: iterated integral.
        let p = TaskDistribution::product(vec![
            TaskDistribution::beta_unit(0.3).unwrap(),
            TaskDistribution::exponential(2.0).unwrap(),
        ])
        .unwrap();
        let i = tanh_sinh(|x| tanh_sinh(|y| p.density(&Task(vec![x, y])), 0.0, 30.0), 0.0, 1.0);
        assert!((i - 1.0).abs() < 1e-3, "product: {i}");
    }

    #[test]
    fn product_density_factorizes() {
        let a = TaskDistribution::affine_beta(0.7, 0.1, 5.0).unwrap();
        let b = TaskDistribution::beta_unit(0.4).unwrap();
        let p = TaskDistribution::product(vec![a.clone(), b.clone()]).unwrap();
        let z = Task(vec![2.0, 0.35]);
        let expected = a.density(&Task::scalar(2.0)) * b.density(&Task::scalar(0.35));
        assert!((p.density(&z) - expected).abs() < 1e-12 * expected.max(1.0));
        assert_eq!(p.params(), vec![0.7, 0.4]);
        assert_eq!(p.with_params(&[0.2, 0.9]).unwrap().params(), vec![0.2, 0.9]);
    }

    #[test]
    fn importance_weights() {
        let d0 = TaskDistribution::exponential(0.1).unwrap();
        let d1 = TaskDistribution::exponential(0.2).unwrap();
        let w = importance_weight(&d0, &d1, &Task::scalar(5.0)).unwrap();
        let direct = (0.1 * (-0.5f64).exp()) / (0.2 * (-1.0f64).exp());
        assert!((w - direct).abs() < 1e-12);
        assert!((w - 0.8244).abs() < 1e-4);
        assert_eq!(importance_weight(&d0, &d0, &Task::scalar(3.3)).unwrap(), 1.0);
        assert!(matches!(
            importance_weight(&d0, &d1, &Task::scalar(-1.0)),
            Err(Error::DegenerateWeight { .. })
        ));
    }

    #[test]
    fn exponential_refit_matches_grid_search() {
        let fam = TaskDistribution::exponential(1.0).unwrap();
        let sel = vec![(Task::scalar(2.0), 1.0), (Task::scalar(4.0), 1.0)];
        let rate = fam.ce_update(&sel).unwrap().params()[0];
        assert!((rate - 1.0 / 3.0).abs() < 1e-12);
        let ll = |r: f64| sel.iter().map(|(z, w)| w * (r.ln() - r * z.first())).sum::<f64>();
        let grid = grid_argmax(ll, 1e-3, 3.0, 1e-9);
        assert!((rate - grid).abs() / rate <= 1e-6, "{rate} vs {grid}");
    }

    #[test]
    fn beta_refit_symmetric_point() {
        let fam = TaskDistribution::beta_unit(0.2).unwrap();
        let phi = fam.ce_update(&[(Task::scalar(0.5), 1.0)]).unwrap().params()[0];
        let ll = |p: f64| TaskDistribution::BetaUnit { phi: p }.log_density(&Task::scalar(0.5));
        let grid = grid_argmax(ll, PHI_MIN, PHI_MAX, 1e-9);
        assert!((phi - 0.5).abs() < 1e-7, "{phi}");
        assert!((phi - grid).abs() < 1e-7);
    }

    #[test]
    fn beta_refit_matches_grid_search_on_skewed_sample() {
        let fam = TaskDistribution::affine_beta(0.5, 0.0, 2.0).unwrap();
        let sel: Vec<(Task, f64)> = [(0.2, 1.0), (1.5, 0.5), (1.9, 2.0), (0.9, 0.1)]
            .iter()
            .map(|&(z, w)| (Task::scalar(z), w))
            .collect();
        let phi = fam.ce_update(&sel).unwrap().params()[0];
        let ll = |p: f64| {
            let d = TaskDistribution::AffineBetaUnit { phi: p, lo: 0.0, hi: 2.0 };
            sel.iter().map(|(z, w)| w * d.log_density(z)).sum::<f64>()
        };
        let grid = grid_argmax(ll, PHI_MIN, PHI_MAX, 1e-9);
        assert!((phi - grid).abs() < 1e-6, "{phi} vs {grid}");
    }

    #[test]
    fn refit_on_own_samples_recovers_parameters() {
        let cases = vec![
            TaskDistribution::exponential(0.1).unwrap(),
            TaskDistribution::beta_unit(0.3).unwrap(),
            TaskDistribution::product(vec![
                TaskDistribution::affine_beta(0.5, 0.1, 5.0).unwrap(),
                TaskDistribution::affine_beta(0.8, 0.0, 6.28).unwrap(),
            ])
            .unwrap(),
        ];
        for d in cases {
            let tasks = d.sample(&mut stream(11, &[]), 100_000).unwrap();
            let sel: Vec<(Task, f64)> = tasks.into_iter().map(|t| (t, 1.0)).collect();
            let fit = d.ce_update(&sel).unwrap();
            for (a, b) in fit.params().iter().zip(d.params()) {
                assert!((a - b).abs() / b < 0.02, "{:?} refit to {:?}", d, fit);
            }
        }
    }

    #[test]
    fn refit_rejects_bad_input() {
        let fam = TaskDistribution::exponential(1.0).unwrap();
        assert_eq!(fam.ce_update(&[]), Err(Error::EmptySelection));
        assert!(fam.ce_update(&[(Task::scalar(1.0), 0.0)]).is_err());
        assert!(fam.ce_update(&[(Task::scalar(1.0), -1.0)]).is_err());
        assert!(fam.ce_update(&[(Task(vec![1.0, 2.0]), 1.0)]).is_err());
    }

    #[test]
    fn json_shape() {
        let d = TaskDistribution::product(vec![
            TaskDistribution::exponential(0.1).unwrap(),
            TaskDistribution::affine_beta(0.5, 0.1, 5.0).unwrap(),
        ])
        .unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(
            s,
            r#"{"family":"product","params":[],"components":[{"family":"exponential","params":[0.1]},{"family":"affine_beta_unit","params":[0.5,0.1,5.0]}]}"#
        );
        let back: TaskDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<TaskDistribution>(r#"{"family":"beta_unit","params":[1.5]}"#).is_err());
        assert!(serde_json::from_str::<TaskDistribution>(r#"{"family":"gamma","params":[1.0]}"#).is_err());
    }

    proptest! {
        #[test]
        fn refit_is_scale_invariant(
            zs in prop::collection::vec(0.01f64..0.99, 1..12),
            ws in prop::collection::vec(0.01f64..5.0, 12),
            c in 0.001f64..1000.0,
        ) {
            for fam in [TaskDistribution::exponential(1.0).unwrap(), TaskDistribution::beta_unit(0.5).unwrap()] {
                let a: Vec<(Task, f64)> = zs.iter().zip(&ws).map(|(&z, &w)| (Task::scalar(z), w)).collect();
                let b: Vec<(Task, f64)> = a.iter().map(|(z, w)| (z.clone(), w * c)).collect();
                let pa = fam.ce_update(&a).unwrap().params()[0];
                let pb = fam.ce_update(&b).unwrap().params()[0];
                // Beta refits are exact only up to the golden-section tolerance.
                let tol = if fam.family_name() == "exponential" { 1e-12 * pa } else { 10.0 * GOLDEN_TOL };
                prop_assert!((pa - pb).abs() <= tol, "{} vs {}", pa, pb);
            }
        }

        #[test]
        fn self_weight_is_one(z in 0.0f64..50.0, rate in 0.01f64..10.0, phi in PHI_MIN..PHI_MAX) {
            let e = TaskDistribution::exponential(rate).unwrap();
            prop_assert_eq!(importance_weight(&e, &e, &Task::scalar(z)).unwrap(), 1.0);
            let b = TaskDistribution::beta_unit(phi).unwrap();
            let u = (z / 50.0).clamp(1e-9, 1.0 - 1e-9);
            prop_assert_eq!(importance_weight(&b, &b, &Task::scalar(u)).unwrap(), 1.0);
        }
    }
}
