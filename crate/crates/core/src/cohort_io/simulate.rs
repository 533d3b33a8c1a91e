//! Seeded synthetic cohorts with known ground truth.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! For each subject, in id order, the generator draws: visit ages, the
//! height offset, then per visit the height noise followed by the weight
//! noise. Normal draws use `rand_distr::StandardNormal`; Laplace draws use
//! the inverse CDF of one uniform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use super::{Cohort, Measurement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("invalid visit schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("subject {subject} got non-positive weight {weight} at age {age}")]
    NonPositiveWeight { subject: String, age: f64, weight: f64 },
}

/// Standardized noise shape (median zero, scale one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    Normal,
    Laplace,
}

impl Noise {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Noise::Normal => rng.sample(StandardNormal),
            Noise::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    /// Quantile function of the standardized shape.
    pub fn quantile(&self, tau: f64) -> f64 {
        match self {
            Noise::Normal => Normal::standard().inverse_cdf(tau),
            Noise::Laplace => {
                if tau < 0.5 {
                    (2.0 * tau).ln()
                } else {
                    -(2.0 - 2.0 * tau).ln()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VisitSchedule {
    /// Nominal ages, each shifted by a uniform draw in `[-jitter, jitter]`
    /// and clamped to the nominal range.
    Fixed { ages: Vec<f64>, jitter: f64 },
    /// `visits` sorted uniform draws on `[min_age, max_age]`.
    Uniform { visits: usize, min_age: f64, max_age: f64 },
}

impl VisitSchedule {
    fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidSchedule(m.to_string()));
        match self {
            VisitSchedule::Fixed { ages, jitter } => {
                if ages.is_empty() {
                    return bad("no ages");
                }
                if ages.iter().any(|a| !a.is_finite() || *a < 0.0) {
                    return bad("ages must be finite and nonnegative");
                }
                if !jitter.is_finite() || *jitter < 0.0 {
                    return bad("jitter must be nonnegative");
                }
                for w in ages.windows(2) {
                    if w[1] - w[0] <= 2.0 * jitter {
                        return bad("ages must increase by more than twice the jitter");
                    }
                }
                Ok(())
            }
            VisitSchedule::Uniform { visits, min_age, max_age } => {
                if *visits == 0 {
                    return bad("no visits");
                }
                if !(min_age.is_finite() && max_age.is_finite() && 0.0 <= *min_age && min_age < max_age) {
                    return bad("need 0 <= min_age < max_age");
                }
                Ok(())
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            VisitSchedule::Fixed { ages, jitter } => {
                let (lo, hi) = (ages[0], ages[ages.len() - 1]);
                ages.iter()
                    .map(|&a| {
                        let u: f64 = rng.random();
                        (a + jitter * (2.0 * u - 1.0)).clamp(lo, hi)
                    })
                    .collect()
            }
            VisitSchedule::Uniform { visits, min_age, max_age } => {
                let mut v: Vec<f64> = (0..*visits)
                    .map(|_| min_age + (max_age - min_age) * rng.random::<f64>())
                    .collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
        }
    }
}

/// Height in cm: polynomial in age plus a subject offset and visit noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightModel {
    pub curve: Vec<f64>,
    pub subject_sd: f64,
    pub visit_sd: f64,
}

impl Default for HeightModel {
    fn default() -> Self {
        Self {
            curve: vec![50.0, 25.0, -3.0],
            subject_sd: 2.0,
            visit_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CatchupCoefficient {
    Constant { value: f64 },
    /// `amplitude · exp(−t / scale)`
    Exponential { amplitude: f64, scale: f64 },
}

impl CatchupCoefficient {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            CatchupCoefficient::Constant { value } => value,
            CatchupCoefficient::Exponential { amplitude, scale } => amplitude * (-t / scale).exp(),
        }
    }
}

/// Generator mode and its ground-truth parameters. Polynomials are
/// coefficient lists in ascending powers of age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GeneratorMode {
    /// `W = μ(t) + σ(t)·ε`, independent across visits.
    Marginal {
        median: Vec<f64>,
        spread: Vec<f64>,
        #[serde(default)]
        noise: Noise,
    },
    /// Forward simulation of the rate-of-change model
    /// `(W_j − W_{j−1})/D = (g(t_j) − g(t_{j−1}))/D + b(t_{j−1})·(W_{j−1} − g(t_{j−1})) + e_j`.
    Catchup {
        median: Vec<f64>,
        b: CatchupCoefficient,
        initial_sd: f64,
        noise_sd: f64,
        #[serde(default)]
        noise: Noise,
    },
    /// `W_j = g(t_j) + lag·W_{j−1} + height_coef·H_j + err`, with the
    /// `zero_quantile`-quantile of `err` equal to zero.
    Conditional {
        baseline: Vec<f64>,
        lag: f64,
        height_coef: f64,
        initial: Vec<f64>,
        initial_sd: f64,
        noise_sd: f64,
        zero_quantile: f64,
        #[serde(default)]
        noise: Noise,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n_subjects: usize,
    pub seed: u64,
    #[serde(default = "default_stratum")]
    pub stratum: String,
    pub schedule: VisitSchedule,
    #[serde(default)]
    pub height: HeightModel,
    #[serde(flatten)]
    pub mode: GeneratorMode,
}

fn default_stratum() -> String {
    "M".to_string()
}

pub fn poly(coef: &[f64], t: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

impl GeneratorParams {
    /// Location–scale cohort: median `3 + 6t − 2t²`, spread `0.3 + 0.2t`,
    /// six uniform visits on ages 0–2.
    pub fn marginal(n_subjects: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            seed,
            stratum: default_stratum(),
            schedule: VisitSchedule::Uniform {
                visits: 6,
                min_age: 0.0,
                max_age: 2.0,
            },
            height: HeightModel::default(),
            mode: GeneratorMode::Marginal {
                median: vec![3.0, 6.0, -2.0],
                spread: vec![0.3, 0.2],
                noise: Noise::Normal,
            },
        }
    }

    /// Catch-up cohort with `b(t) = −0.8·exp(−t/0.25)` and dense early visits.
    pub fn catchup(n_subjects: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            seed,
            stratum: default_stratum(),
            schedule: VisitSchedule::Fixed {
                ages: vec![0.0, 0.08, 0.17, 0.25, 0.33, 0.42, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
                jitter: 0.02,
            },
            height: HeightModel::default(),
            mode: GeneratorMode::Catchup {
                median: vec![3.3, 7.5, -1.6],
                b: CatchupCoefficient::Exponential {
                    amplitude: -0.8,
                    scale: 0.25,
                },
                initial_sd: 0.6,
                noise_sd: 0.5,
                noise: Noise::Normal,
            },
        }
    }

    /// Autoregressive cohort with lag coefficient 0.6 and height coefficient 0.02.
    pub fn conditional(n_subjects: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            seed,
            stratum: default_stratum(),
            schedule: VisitSchedule::Fixed {
                ages: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
                jitter: 0.05,
            },
            height: HeightModel::default(),
            mode: GeneratorMode::Conditional {
                baseline: vec![0.4, 3.0, -0.8],
                lag: 0.6,
                height_coef: 0.02,
                initial: vec![3.5],
                initial_sd: 0.5,
                noise_sd: 0.3,
                zero_quantile: 0.5,
                noise: Noise::Normal,
            },
        }
    }

    fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidParams(m.to_string()));
        if self.n_subjects == 0 {
            return bad("n_subjects must be at least 1");
        }
        self.schedule.validate()?;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.height.subject_sd) || !nonneg(self.height.visit_sd) || self.height.curve.is_empty() {
            return bad("height model");
        }
        match &self.mode {
            GeneratorMode::Marginal { median, spread, .. } => {
                if median.is_empty() || spread.is_empty() {
                    return bad("median and spread polynomials must be nonempty");
                }
            }
            GeneratorMode::Catchup {
                median,
                initial_sd,
                noise_sd,
                ..
            } => {
                if median.is_empty() || !nonneg(*initial_sd) || !nonneg(*noise_sd) {
                    return bad("catch-up parameters");
                }
            }
            GeneratorMode::Conditional {
                baseline,
                initial,
                initial_sd,
                noise_sd,
                zero_quantile,
                ..
            } => {
                if baseline.is_empty() || initial.is_empty() || !nonneg(*initial_sd) || !nonneg(*noise_sd) {
                    return bad("conditional parameters");
                }
                if !(*zero_quantile > 0.0 && *zero_quantile < 1.0) {
                    return bad("zero_quantile must lie in (0, 1)");
                }
            }
        }
        Ok(())
    }
}

/// One forward step of the catch-up model.
pub fn catchup_step(w_prev: f64, g_prev: f64, g_next: f64, b: f64, gap: f64, e: f64) -> f64 {
    w_prev + (g_next - g_prev) + gap * b * (w_prev - g_prev) + gap * e
}

/// Generates a cohort. Same parameters (including seed) give the same cohort.
pub fn simulate_cohort(params: &GeneratorParams) -> Result<Cohort, GeneratorError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let width = params.n_subjects.to_string().len();
    let mut cohort = Cohort::new();
    for s in 0..params.n_subjects {
        let id = format!("S{:0width$}", s + 1);
        let ages = params.schedule.draw(&mut rng);
        let offset = params.height.subject_sd * rng.sample::<f64, _>(StandardNormal);
        let mut prev: Option<(f64, f64)> = None;
        for &age in &ages {
            let height = poly(&params.height.curve, age)
                + offset
                + params.height.visit_sd * rng.sample::<f64, _>(StandardNormal);
            let weight = match &params.mode {
                GeneratorMode::Marginal { median, spread, noise } => {
                    poly(median, age) + poly(spread, age) * noise.sample(&mut rng)
                }
                GeneratorMode::Catchup {
                    median,
                    b,
                    initial_sd,
                    noise_sd,
                    noise,
                } => {
                    let e = noise.sample(&mut rng);
                    match prev {
                        None => poly(median, age) + initial_sd * e,
                        Some((t0, w0)) => catchup_step(
                            w0,
                            poly(median, t0),
                            poly(median, age),
                            b.at(t0),
                            age - t0,
                            noise_sd * e,
                        ),
                    }
                }
                GeneratorMode::Conditional {
                    baseline,
                    lag,
                    height_coef,
                    initial,
                    initial_sd,
                    noise_sd,
                    zero_quantile,
                    noise,
                } => {
                    let e = noise.sample(&mut rng);
                    match prev {
                        None => poly(initial, age) + initial_sd * e,
                        Some((_, w0)) => {
                            poly(baseline, age)
                                + lag * w0
                                + height_coef * height
                                + noise_sd * (e - noise.quantile(*zero_quantile))
                        }
                    }
                }
            };
            if !(weight > 0.0) {
                return Err(GeneratorError::NonPositiveWeight {
                    subject: id,
                    age,
                    weight,
                });
            }
            prev = Some((age, weight));
            cohort
                .insert(Measurement {
                    subject_id: id.clone(),
                    stratum: params.stratum.clone(),
                    age,
                    weight: Some(weight),
                    height: Some(height),
                })
                .map_err(|e| GeneratorError::InvalidSchedule(e.to_string()))?;
        }
    }
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_cohort() {
        let p = GeneratorParams::marginal(50, 7);
        assert_eq!(simulate_cohort(&p).unwrap(), simulate_cohort(&p).unwrap());
        let q = GeneratorParams::marginal(50, 8);
        assert_ne!(simulate_cohort(&p).unwrap(), simulate_cohort(&q).unwrap());
    }

    #[test]
    fn zero_spread_lies_on_median() {
        let mut p = GeneratorParams::marginal(20, 1);
        p.mode = GeneratorMode::Marginal {
            median: vec![3.0, 6.0, -2.0],
            spread: vec![0.0],
            noise: Noise::Normal,
        };
        let c = simulate_cohort(&p).unwrap();
        for m in c.measurements() {
            assert_eq!(m.weight.unwrap(), poly(&[3.0, 6.0, -2.0], m.age));
        }
    }

    #[test]
    fn catchup_step_by_hand() {
        // 1 kg below the median, b = −0.5, D = 0.1, no noise
        let g0 = 5.0;
        let g1 = 5.4;
        let w1 = catchup_step(g0 - 1.0, g0, g1, -0.5, 0.1, 0.0);
        assert!(((w1 - (g0 - 1.0)) - ((g1 - g0) + 0.05)).abs() < 1e-12);
    }

    #[test]
    fn schedules_are_strictly_increasing() {
        for p in [
            GeneratorParams::marginal(100, 3),
            GeneratorParams::catchup(100, 3),
            GeneratorParams::conditional(100, 3),
        ] {
            let c = simulate_cohort(&p).unwrap();
            for (_, visits) in c.subjects() {
                assert!(visits.windows(2).all(|w| w[0].age < w[1].age));
            }
        }
    }

    #[test]
    fn invalid_params() {
        let mut p = GeneratorParams::marginal(0, 1);
        assert!(matches!(simulate_cohort(&p), Err(GeneratorError::InvalidParams(_))));
        p.n_subjects = 3;
        p.schedule = VisitSchedule::Fixed {
            ages: vec![0.0, 0.1],
            jitter: 0.06,
        };
        assert!(matches!(simulate_cohort(&p), Err(GeneratorError::InvalidSchedule(_))));
    }

    #[test]
    fn laplace_quantiles() {
        assert_eq!(Noise::Laplace.quantile(0.5), 0.0);
        assert!((Noise::Laplace.quantile(0.75) - 2f64.ln()).abs() < 1e-12);
        assert!((Noise::Normal.quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn params_round_trip_through_json() {
        let p = GeneratorParams::catchup(10, 99);
        let s = serde_json::to_string(&p).unwrap();
        let back: GeneratorParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }
}
