//! Singlet-state predictions: ideal correlation, joint detection density and
//! their averages over smeared analyzers with finite detector efficiency.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    angle_between, clamped_cosine, CapRegion, Direction, SmearingDistribution, SmearingKind,
};
use crate::stats::{mean_stderr, EstimateWithError};

/// One analyzer: macroscopic orientation, smearing law centred on it, and
/// detection efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyzerSpec {
    orientation: Direction,
    #[serde(serialize_with = "ser_kind")]
    smearing: SmearingDistribution,
    efficiency: f64,
}

fn ser_kind<S: serde::Serializer>(d: &SmearingDistribution, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("smearing", 2)?;
    st.serialize_field("kind", &d.kind())?;
    st.serialize_field("epsilon", &d.cap().epsilon())?;
    st.end()
}

impl AnalyzerSpec {
    pub fn new(orientation: Direction, kind: SmearingKind, epsilon: f64, efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::domain("efficiency", efficiency, "0 <= eta <= 1"));
        }
        let cap = CapRegion::new(orientation, epsilon)?;
        Ok(AnalyzerSpec {
            orientation,
            smearing: SmearingDistribution::new(kind, cap),
            efficiency,
        })
    }

    /// Delta smearing, perfect detector.
    pub fn sharp(orientation: Direction) -> Self {
        AnalyzerSpec {
            orientation,
            smearing: SmearingDistribution::delta(orientation),
            efficiency: 1.0,
        }
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::domain("efficiency", efficiency, "0 <= eta <= 1"));
        }
        self.efficiency = efficiency;
        Ok(self)
    }

    pub fn orientation(&self) -> Direction {
        self.orientation
    }

    pub fn smearing(&self) -> &SmearingDistribution {
        &self.smearing
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Mean projection of a microscopic direction on the orientation.
    pub fn kappa(&self) -> f64 {
        self.smearing.mean_projection()
    }
}

/// The two analyzers of one correlation experiment `(A, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SettingPair {
    pub first: AnalyzerSpec,
    pub second: AnalyzerSpec,
}

impl SettingPair {
    pub fn new(first: AnalyzerSpec, second: AnalyzerSpec) -> Self {
        SettingPair { first, second }
    }

    pub fn sharp(a: Direction, b: Direction) -> Self {
        SettingPair::new(AnalyzerSpec::sharp(a), AnalyzerSpec::sharp(b))
    }

    /// Angle between the two macroscopic orientations.
    pub fn macro_angle(&self) -> f64 {
        angle_between(&self.first.orientation, &self.second.orientation)
            .expect("analyzer orientations are normalized")
    }

    fn macro_cosine(&self) -> f64 {
        clamped_cosine(&self.first.orientation, &self.second.orientation)
            .expect("analyzer orientations are normalized")
    }

    pub fn efficiency_product(&self) -> f64 {
        self.first.efficiency * self.second.efficiency
    }
}

/// `⟨σ·a ⊗ σ·b⟩ = -cos θ_ab` for the singlet.
pub fn singlet_correlation(a: &Direction, b: &Direction) -> Result<f64> {
    Ok(-clamped_cosine(a, b)?)
}

/// Probability density of a `(+,+)` coincidence, `½ sin²(θ_ab / 2)`.
pub fn joint_detection_density(a: &Direction, b: &Direction) -> Result<f64> {
    let half = angle_between(a, b)? / 2.0;
    Ok(0.5 * half.sin().powi(2))
}

/// Joint outcome probabilities for one pair measured along `a` and `b`.
///
/// `P(++) = P(--) = ½ sin²(θ/2)` is the joint detection density; the
/// opposite-sign cells follow from normalization and a zero mean on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeTable {
    pub plus_plus: f64,
    pub plus_minus: f64,
    pub minus_plus: f64,
    pub minus_minus: f64,
}

impl OutcomeTable {
    /// Probability that both sides record the same sign.
    pub fn same_sign(&self) -> f64 {
        self.plus_plus + self.minus_minus
    }

    pub fn correlation(&self) -> f64 {
        self.plus_plus + self.minus_minus - self.plus_minus - self.minus_plus
    }
}

pub fn singlet_outcome_table(a: &Direction, b: &Direction) -> Result<OutcomeTable> {
    let same = joint_detection_density(a, b)?;
    let opposite = 0.5 - same;
    Ok(OutcomeTable {
        plus_plus: same,
        plus_minus: opposite,
        minus_plus: opposite,
        minus_minus: same,
    })
}

/// Coincidence probability `η_A η_B ∬ p₁₂(a,b) dρ_A dρ_B` in closed form,
/// `η_A η_B (1 - κ_A κ_B cos Θ_AB) / 4`.
pub fn coincidence_probability(pair: &SettingPair) -> f64 {
    let k = pair.first.kappa() * pair.second.kappa();
    pair.efficiency_product() * (1.0 - k * pair.macro_cosine()) / 4.0
}

/// Predicted correlation `η_A η_B ∬ -cos θ_ab dρ_A dρ_B`, which is
/// `-η_A η_B κ_A κ_B cos Θ_AB` in closed form.
pub fn smeared_correlation(pair: &SettingPair) -> f64 {
    let k = pair.first.kappa() * pair.second.kappa();
    -pair.efficiency_product() * k * pair.macro_cosine()
}

/// Correlation among coincident pairs only: [`smeared_correlation`] without
/// the efficiency prefactor. `None` when no coincidence can occur.
pub fn conditional_correlation(pair: &SettingPair) -> Option<f64> {
    if pair.efficiency_product() == 0.0 {
        return None;
    }
    Some(-pair.first.kappa() * pair.second.kappa() * pair.macro_cosine())
}

fn integrate<R, F>(pair: &SettingPair, samples: usize, rng: &mut R, f: F) -> Result<EstimateWithError>
where
    R: Rng + ?Sized,
    F: Fn(&Direction, &Direction) -> Result<f64>,
{
    let eta = pair.efficiency_product();
    let values = (0..samples)
        .map(|_| {
            let a = pair.first.smearing.sample(rng);
            let b = pair.second.smearing.sample(rng);
            f(&a, &b).map(|v| eta * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    mean_stderr(&values)
}

/// Monte Carlo estimate of [`coincidence_probability`] by sampling direction
/// pairs from the two smearing laws.
pub fn coincidence_probability_mc<R: Rng + ?Sized>(
    pair: &SettingPair,
    samples: usize,
    rng: &mut R,
) -> Result<EstimateWithError> {
    integrate(pair, samples, rng, joint_detection_density)
}

/// Monte Carlo estimate of [`smeared_correlation`].
pub fn smeared_correlation_mc<R: Rng + ?Sized>(
    pair: &SettingPair,
    samples: usize,
    rng: &mut R,
) -> Result<EstimateWithError> {
    integrate(pair, samples, rng, singlet_correlation)
}

/// Disagreement rate `sin²(θ/2)` between the two message strings when one
/// detector is turned by `theta` from alignment.
///
/// The second message is the negated outcome of side two, so aligned
/// detectors produce identical strings.
pub fn herbert_disagreement_qm(theta: f64) -> Result<f64> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::domain("theta", theta, "0 <= theta <= pi"));
    }
    Ok((theta / 2.0).sin().powi(2))
}
