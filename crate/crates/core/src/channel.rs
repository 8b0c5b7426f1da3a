//! Link SNR generation: i.i.d. Rayleigh block fading, spatially correlated
//! lognormal shadowing, and the outdated/noisy CSI observation model.
//!
//! All SNRs are linear. A field is indexed `[su][channel]` and stored row-major.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bessel_i0_scaled;

/// Converts decibels to a linear power ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// True per-link SNRs together with what the SUs observe of them.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGainField {
    su_pairs: usize,
    channels: usize,
    snr: Vec<f64>,
    snr_estimate: Vec<f64>,
    coherence_slots: usize,
}

impl LinkGainField {
    /// A field with perfect CSI (`snr_estimate == snr`).
    pub fn from_snr(su_pairs: usize, channels: usize, snr: Vec<f64>, coherence_slots: usize) -> Result<Self> {
        if snr.len() != su_pairs * channels {
            return Err(Error::Contract(format!(
                "{} SNR entries for a {su_pairs}x{channels} field",
                snr.len()
            )));
        }
        if let Some(v) = snr.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::domain(format!("negative or NaN SNR {v}")));
        }
        if coherence_slots == 0 {
            return Err(Error::config("coherence_slots must be >= 1"));
        }
        Ok(Self {
            su_pairs,
            channels,
            snr_estimate: snr.clone(),
            snr,
            coherence_slots,
        })
    }

    pub fn su_pairs(&self) -> usize {
        self.su_pairs
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coherence_slots(&self) -> usize {
        self.coherence_slots
    }

    #[inline]
    pub fn snr(&self, su: usize, channel: usize) -> f64 {
        self.snr[su * self.channels + channel]
    }

    #[inline]
    pub fn snr_estimate(&self, su: usize, channel: usize) -> f64 {
        self.snr_estimate[su * self.channels + channel]
    }

    /// True SNRs of one SU across all channels.
    pub fn snr_row(&self, su: usize) -> &[f64] {
        &self.snr[su * self.channels..(su + 1) * self.channels]
    }

    pub fn estimate_row(&self, su: usize) -> &[f64] {
        &self.snr_estimate[su * self.channels..(su + 1) * self.channels]
    }

    pub fn snr_values(&self) -> &[f64] {
        &self.snr
    }

    pub fn estimate_values(&self) -> &[f64] {
        &self.snr_estimate
    }
}

/// Independent Rayleigh block fading: every entry is exponential with mean `mean_snr`.
///
/// Draws are consumed SU-major, one per entry.
pub fn rayleigh_block_field<R: Rng + ?Sized>(
    mean_snr: f64,
    su_pairs: usize,
    channels: usize,
    coherence_slots: usize,
    rng: &mut R,
) -> Result<LinkGainField> {
    if !(mean_snr > 0.0 && mean_snr.is_finite()) {
        return Err(Error::domain(format!("mean SNR must be positive, got {mean_snr}")));
    }
    let snr = (0..su_pairs * channels)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            mean_snr * e
        })
        .collect();
    LinkGainField::from_snr(su_pairs, channels, snr, coherence_slots)
}

/// Gudmundson-type shadowing geometry: SU transmitters spaced `d` metres apart
/// on a line, decorrelation constant `a` per metre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowingModel {
    pub a: f64,
    pub d: f64,
    pub mu_db: f64,
    pub sigma_db: f64,
}

impl ShadowingModel {
    pub fn new(a: f64, d: f64, mu_db: f64, sigma_db: f64) -> Result<Self> {
        if !(a >= 0.0) || !(d >= 0.0) || !(sigma_db >= 0.0) || !mu_db.is_finite() {
            return Err(Error::config(format!(
                "shadowing requires a >= 0, d >= 0, sigma_db >= 0 (got a={a}, d={d}, sigma_db={sigma_db})"
            )));
        }
        Ok(Self { a, d, mu_db, sigma_db })
    }

    /// Adjacent-link correlation `e^{-a d}`.
    pub fn rho(&self) -> f64 {
        correlation_from_spacing(self.a, self.d)
    }
}

/// `e^{-a d}`; a zero decay constant or zero spacing means full correlation.
pub fn correlation_from_spacing(a: f64, d: f64) -> f64 {
    if a == 0.0 || d == 0.0 {
        1.0
    } else {
        (-a * d).exp()
    }
}

/// Correlation between links `m` and `m2`: `ρ^{|m - m2|}` with `ρ = e^{-a d}`.
pub fn spatial_correlation(a: f64, d: f64, m: usize, m2: usize) -> f64 {
    let rho = correlation_from_spacing(a, d);
    rho.powi(m.abs_diff(m2) as i32)
}

/// Spatially correlated lognormal shadowing.
///
/// For each channel independently, the dB values along the SU index form a
/// stationary AR(1) sequence with mean `mu_db`, standard deviation `sigma_db`
/// and lag-k correlation `rho^k`. Draws are consumed channel-major, one
/// standard normal per entry.
pub fn lognormal_shadow_field<R: Rng + ?Sized>(
    rho: f64,
    mu_db: f64,
    sigma_db: f64,
    su_pairs: usize,
    channels: usize,
    coherence_slots: usize,
    rng: &mut R,
) -> Result<LinkGainField> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("shadowing correlation must lie in [0, 1], got {rho}")));
    }
    if !(sigma_db >= 0.0) || !mu_db.is_finite() {
        return Err(Error::domain(format!("invalid shadowing moments mu={mu_db} sigma={sigma_db}")));
    }
    let innovation = (1.0 - rho * rho).sqrt();
    let mut snr = vec![0.0; su_pairs * channels];
    for n in 0..channels {
        let mut x = 0.0;
        for m in 0..su_pairs {
            let w: f64 = StandardNormal.sample(rng);
            x = if m == 0 { w } else { rho * x + innovation * w };
            snr[m * channels + n] = db_to_linear(mu_db + sigma_db * x);
        }
    }
    LinkGainField::from_snr(su_pairs, channels, snr, coherence_slots)
}

/// Which closed form of the conditional SNR density to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityForm {
    /// Outdated-estimate density with the estimate scaled by `1 - σ²`.
    #[default]
    Corrected,
    /// The variant without the `1 - σ²` scaling; it does not reduce to the
    /// marginal at `σ² = 1`. Kept for comparison runs.
    Printed,
}

/// CSI error model: normalised MSE of the SNR estimate and the mean SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchModel {
    pub nmse: f64,
    pub mean_snr: f64,
}

impl MismatchModel {
    pub fn new(nmse: f64, mean_snr: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nmse) {
            return Err(Error::config(format!("nmse must lie in [0, 1], got {nmse}")));
        }
        if !(mean_snr > 0.0 && mean_snr.is_finite()) {
            return Err(Error::config(format!("mean SNR must be positive, got {mean_snr}")));
        }
        Ok(Self { nmse, mean_snr })
    }

    /// Scale `γ̄σ²` of the conditional law.
    fn spread(&self) -> f64 {
        self.mean_snr * self.nmse
    }

    fn estimate_weight(&self, form: DensityForm) -> f64 {
        match form {
            DensityForm::Corrected => 1.0 - self.nmse,
            DensityForm::Printed => 1.0,
        }
    }

    /// Mean and standard deviation of γ given γ̂ under `form`.
    pub fn conditional_moments(&self, gamma_hat: f64, form: DensityForm) -> (f64, f64) {
        let s = self.spread();
        let c = self.estimate_weight(form) * gamma_hat;
        let mean = c + s;
        let var = s * s + 2.0 * c * s;
        (mean, var.sqrt())
    }
}

/// Density of the true SNR γ given its observation γ̂ under Rayleigh fading.
///
/// With `s = γ̄σ²` and `c = 1 - σ²` (corrected form):
/// `f(γ|γ̂) = I0(2√(cγγ̂)/s) · exp(-(γ + cγ̂)/s) / s`, evaluated through the
/// exponentially scaled Bessel function so large arguments cannot overflow.
pub fn conditional_snr_density(gamma: f64, gamma_hat: f64, model: &MismatchModel, form: DensityForm) -> Result<f64> {
    if !(gamma >= 0.0) || !(gamma_hat >= 0.0) {
        return Err(Error::domain(format!("SNRs must be >= 0 (gamma={gamma}, gamma_hat={gamma_hat})")));
    }
    if model.nmse <= 0.0 {
        return Err(Error::domain(
            "conditional density is a point mass at nmse = 0; use the perfect-CSI path",
        ));
    }
    let s = model.spread();
    let c = model.estimate_weight(form) * gamma_hat;
    let z = 2.0 * (c * gamma).sqrt() / s;
    // I0(z) e^{-(γ + c)/s} = I0s(z) e^{z - (γ + c)/s} = I0s(z) e^{-(√γ - √c)²/s}
    let gap = gamma.sqrt() - c.sqrt();
    Ok(bessel_i0_scaled(z)? * (-gap * gap / s).exp() / s)
}

/// Produces CSI observations jointly consistent with the true SNRs.
///
/// The true gain is taken as `h = √(γ/γ̄)` (its phase is irrelevant by
/// circular symmetry) and the observed gain as `ĥ = √(1-σ²)·h + σ·e` with
/// `e ~ CN(0, 1)`, so γ̂ = γ̄|ĥ|². Given γ̂, γ then follows the corrected
/// [`conditional_snr_density`]. The true SNRs are left untouched. Two
/// standard normals are drawn per entry, SU-major.
pub fn observe_with_mismatch<R: Rng + ?Sized>(
    field: &LinkGainField,
    model: &MismatchModel,
    rng: &mut R,
) -> Result<LinkGainField> {
    if !(model.nmse > 0.0 && model.nmse <= 1.0) {
        return Err(Error::domain(format!(
            "mismatch observation needs nmse in (0, 1], got {}",
            model.nmse
        )));
    }
    let keep = (1.0 - model.nmse).sqrt();
    let noise = (model.nmse / 2.0).sqrt();
    let snr_estimate = field
        .snr
        .iter()
        .map(|&g| {
            let h = (g / model.mean_snr).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let hr = keep * h + noise * re;
            let hi = noise * im;
            model.mean_snr * (hr * hr + hi * hi)
        })
        .collect();
    Ok(LinkGainField {
        snr_estimate,
        ..field.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_semi_infinite, integrate_semi_infinite_split, QuadratureSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rayleigh_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let field = rayleigh_block_field(10.0, 1000, 1000, 1, &mut rng).unwrap();
        let n = field.snr_values().len() as f64;
        let mean = field.snr_values().iter().sum::<f64>() / n;
        assert!((mean - 10.0).abs() < 0.1, "{mean}");
        let tail = field.snr_values().iter().filter(|&&g| g > 10.0).count() as f64 / n;
        assert!((tail - (-1.0f64).exp()).abs() < 0.005, "{tail}");
        assert_eq!(field.snr_values(), field.estimate_values());
    }

    #[test]
    fn empty_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(rayleigh_block_field(10.0, 0, 5, 1, &mut rng).unwrap().snr_values().is_empty());
        assert!(rayleigh_block_field(10.0, 5, 0, 1, &mut rng).unwrap().snr_values().is_empty());
        assert!(rayleigh_block_field(0.0, 1, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn spacing_to_correlation() {
        assert_eq!(spatial_correlation(0.12, 0.0, 0, 7), 1.0);
        assert!((spatial_correlation(0.12, 0.88, 3, 4) - 0.9).abs() < 0.002);
        assert!((spatial_correlation(0.002, 52.68, 4, 3) - 0.9).abs() < 0.002);
        let rho = correlation_from_spacing(0.12, 0.88);
        assert!((spatial_correlation(0.12, 0.88, 0, 3) - rho.powi(3)).abs() < 1e-15);
        assert_eq!(correlation_from_spacing(0.12, f64::INFINITY), 0.0);
    }

    fn db_column(field: &LinkGainField, m: usize) -> Vec<f64> {
        (0..field.channels()).map(|n| 10.0 * field.snr(m, n).log10()).collect()
    }

    #[test]
    fn lognormal_independent_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let field = lognormal_shadow_field(0.0, 10.0, 5.0, 1, 100_000, 1, &mut rng).unwrap();
        let db = db_column(&field, 0);
        let n = db.len() as f64;
        let mean = db.iter().sum::<f64>() / n;
        let sd = (db.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 10.0).abs() < 0.1, "{mean}");
        assert!((sd - 5.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn lognormal_fully_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let field = lognormal_shadow_field(1.0, 10.0, 5.0, 20, 40, 1, &mut rng).unwrap();
        for n in 0..40 {
            for m in 1..20 {
                assert_eq!(field.snr(m, n), field.snr(0, n));
            }
        }
        assert!(lognormal_shadow_field(1.1, 10.0, 5.0, 2, 2, 1, &mut rng).is_err());
    }

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn lognormal_lag_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // every channel is an independent realisation of the SU-index sequence
        let field = lognormal_shadow_field(0.5, 10.0, 5.0, 3, 100_000, 1, &mut rng).unwrap();
        let (x0, x1, x2) = (db_column(&field, 0), db_column(&field, 1), db_column(&field, 2));
        assert!((corr(&x0, &x1) - 0.5).abs() < 0.02);
        assert!((corr(&x1, &x2) - 0.5).abs() < 0.02);
        assert!((corr(&x0, &x2) - 0.25).abs() < 0.02);
    }

    #[test]
    fn lognormal_covariance_is_toeplitz() {
        let rho: f64 = 0.7;
        let sigma: f64 = 5.0;
        let m = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let field = lognormal_shadow_field(rho, 10.0, sigma, m, 100_000, 1, &mut rng).unwrap();
        let cols: Vec<Vec<f64>> = (0..m).map(|i| db_column(&field, i)).collect();
        let n = cols[0].len() as f64;
        let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
        let (mut diff, mut norm) = (0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                let cov = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum::<f64>()
                    / (n - 1.0);
                let target = rho.powi(i.abs_diff(j) as i32) * sigma * sigma;
                diff += (cov - target).powi(2);
                norm += target * target;
            }
        }
        assert!((diff / norm).sqrt() < 0.05);
    }

    #[test]
    fn density_reduces_to_marginal_when_uninformative() {
        let model = MismatchModel::new(1.0, 10.0).unwrap();
        for &gh in &[0.0, 0.5, 10.0, 80.0] {
            for &g in &[0.0, 1.0, 7.5, 30.0] {
                let f = conditional_snr_density(g, gh, &model, DensityForm::Corrected).unwrap();
                let marginal = (-g / 10.0f64).exp() / 10.0;
                assert!((f - marginal).abs() < 1e-14 * marginal.max(1e-300));
            }
        }
        // the printed form keeps depending on the estimate
        let a = conditional_snr_density(5.0, 1.0, &model, DensityForm::Printed).unwrap();
        let b = conditional_snr_density(5.0, 20.0, &model, DensityForm::Printed).unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn density_rejects_point_mass() {
        let model = MismatchModel { nmse: 0.0, mean_snr: 10.0 };
        assert!(conditional_snr_density(1.0, 1.0, &model, DensityForm::Corrected).is_err());
        assert!(MismatchModel::new(1.5, 10.0).is_err());
    }

    #[test]
    fn density_normalisation_and_mean() {
        let spec = QuadratureSpec::default();
        for &mean_snr in &[1.0, 10.0, 100.0] {
            for &nmse in &[1e-3, 0.01, 0.1, 0.3, 0.5, 1.0] {
                let model = MismatchModel::new(nmse, mean_snr).unwrap();
                for &rel_hat in &[0.0, 0.1, 1.0, 4.0] {
                    let gh = rel_hat * mean_snr;
                    let (mu, sd) = model.conditional_moments(gh, DensityForm::Corrected);
                    let bps = [mu - 8.0 * sd, mu - 2.0 * sd, mu, mu + 2.0 * sd, mu + 8.0 * sd];
                    let f = |g: f64| conditional_snr_density(g, gh, &model, DensityForm::Corrected).unwrap();
                    let mass = integrate_semi_infinite_split(f, &bps, sd.max(1e-9), &spec).unwrap();
                    assert!((mass - 1.0).abs() < 1e-6, "mass {mass} at {nmse} {mean_snr} {gh}");
                    let first = integrate_semi_infinite_split(|g| g * f(g), &bps, sd.max(1e-9), &spec).unwrap();
                    let expected = (1.0 - nmse) * gh + nmse * mean_snr;
                    assert!((first - expected).abs() < 1e-6 * mean_snr, "mean {first} vs {expected}");
                    if nmse >= 0.1 {
                        let plain = integrate_semi_infinite(f, &spec).unwrap();
                        assert!((plain - 1.0).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn mismatch_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let field = rayleigh_block_field(10.0, 100, 1000, 1, &mut rng).unwrap();
        let near = observe_with_mismatch(&field, &MismatchModel::new(1e-8, 10.0).unwrap(), &mut rng).unwrap();
        let worst = field
            .snr_values()
            .iter()
            .zip(near.estimate_values())
            .map(|(g, gh)| (g - gh).abs() / g.max(1e-3))
            .fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
        assert_eq!(near.snr_values(), field.snr_values());

        let blind = observe_with_mismatch(&field, &MismatchModel::new(1.0, 10.0).unwrap(), &mut rng).unwrap();
        let r = corr(field.snr_values(), blind.estimate_values());
        assert!(r.abs() < 0.01, "{r}");
    }

    /// Kolmogorov-Smirnov check of γ | γ̂ ∈ [9.5, 10.5] against the density.
    #[test]
    fn mismatch_conditional_law_matches_density() {
        let model = MismatchModel::new(0.3, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut samples = Vec::new();
        let mut hats = Vec::new();
        while samples.len() < 10_000 {
            let field = rayleigh_block_field(10.0, 1, 4096, 1, &mut rng).unwrap();
            let obs = observe_with_mismatch(&field, &model, &mut rng).unwrap();
            for (g, gh) in field.snr_values().iter().zip(obs.estimate_values()) {
                if (9.5..=10.5).contains(gh) && samples.len() < 10_000 {
                    samples.push(*g);
                    hats.push(*gh);
                }
            }
        }
        samples.sort_by(f64::total_cmp);
        // CDF of the bin-mixture, approximated at the bin centre γ̂ = 10
        let spec = QuadratureSpec::default();
        let cdf = |x: f64| -> f64 {
            let f = |g: f64| conditional_snr_density(g, 10.0, &model, DensityForm::Corrected).unwrap();
            // ∫_0^x f = 1 - ∫_x^∞ f
            1.0 - integrate_semi_infinite(|t| f(x + t), &spec).unwrap()
        };
        let n = samples.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let c = cdf(x);
            d = d.max((c - i as f64 / n).abs()).max((c - (i + 1) as f64 / n).abs());
        }
        // 1% critical value 1.628/√n
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }
}
