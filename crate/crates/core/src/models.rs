//! Sources of correlated outcome pairs.
//!
//! * [`HiddenVariableModel`]: a shared variable `λ` plus local detection
//!   probabilities `p₁(λ, a)`, `p₂(λ, b)`.
//! * [`SpinFunctionModel`]: the deterministic case, side one reads
//!   `s(λ, a)` and side two reads `-s(λ, b)`.
//! * [`ContextualSampler`]: draws the joint singlet outcome table at the
//!   per-pair microscopic directions; it has no local outcome functions.
//!
//! A hidden-variable "detection" maps to outcome `+1` and a miss to `-1` when
//! a `±1` estimator is needed.

use std::fmt;
use std::ops::Neg;
use std::str::FromStr;

use rand::Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, sample_uniform_sphere, Direction};
use crate::quantum::singlet_outcome_table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    /// `+1` for non-negative input.
    pub fn sign_of(x: f64) -> Outcome {
        if x >= 0.0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }
}

impl Neg for Outcome {
    type Output = Outcome;

    fn neg(self) -> Outcome {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

/// Local stochastic model: `p(A,B) = ∫ p₁(λ,A) p₂(λ,B) dρ(λ)`.
///
/// `detect_prob_1` never sees the far direction; locality is in the signature.
pub trait HiddenVariableModel {
    type Lambda;

    fn sample_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Lambda;
    fn detect_prob_1(&self, lambda: &Self::Lambda, a: &Direction) -> f64;
    fn detect_prob_2(&self, lambda: &Self::Lambda, b: &Direction) -> f64;
}

/// Deterministic spin functions with `s₁ = -s₂ = s`.
pub trait SpinFunctionModel {
    type Lambda;

    fn sample_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Lambda;
    fn spin(&self, lambda: &Self::Lambda, x: &Direction) -> Outcome;

    fn outcome_1(&self, lambda: &Self::Lambda, a: &Direction) -> Outcome {
        self.spin(lambda, a)
    }

    fn outcome_2(&self, lambda: &Self::Lambda, b: &Direction) -> Outcome {
        -self.spin(lambda, b)
    }
}

impl<T: SpinFunctionModel> HiddenVariableModel for T {
    type Lambda = <T as SpinFunctionModel>::Lambda;

    fn sample_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Lambda {
        SpinFunctionModel::sample_lambda(self, rng)
    }

    fn detect_prob_1(&self, lambda: &Self::Lambda, a: &Direction) -> f64 {
        match self.outcome_1(lambda, a) {
            Outcome::Plus => 1.0,
            Outcome::Minus => 0.0,
        }
    }

    fn detect_prob_2(&self, lambda: &Self::Lambda, b: &Direction) -> f64 {
        match self.outcome_2(lambda, b) {
            Outcome::Plus => 1.0,
            Outcome::Minus => 0.0,
        }
    }
}

/// Anything that turns a pair of microscopic directions into two outcomes.
pub trait PairSource {
    fn emit_pair<R: Rng + ?Sized>(&self, a: &Direction, b: &Direction, rng: &mut R) -> (Outcome, Outcome);
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Outcome {
    if rng.gen::<f64>() < p {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

impl<T: HiddenVariableModel> PairSource for T {
    fn emit_pair<R: Rng + ?Sized>(&self, a: &Direction, b: &Direction, rng: &mut R) -> (Outcome, Outcome) {
        let lambda = self.sample_lambda(rng);
        let p1 = self.detect_prob_1(&lambda, a);
        let p2 = self.detect_prob_2(&lambda, b);
        (bernoulli(p1, rng), bernoulli(p2, rng))
    }
}

/// `λ` uniform on the sphere, `s(λ, x) = sign(λ·x)` with `sign(0) = +1`.
///
/// Correlation `E(a,b) = -(1 - 2θ_ab/π)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BellSignModel;

pub fn bell_sign_model() -> BellSignModel {
    BellSignModel
}

impl SpinFunctionModel for BellSignModel {
    type Lambda = Direction;

    fn sample_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Direction {
        sample_uniform_sphere(rng)
    }

    fn spin(&self, lambda: &Direction, x: &Direction) -> Outcome {
        Outcome::sign_of(lambda.dot(x))
    }
}

/// Independent `±1` outcomes with fixed means on each side, whatever the
/// settings. `λ` carries nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizedModel {
    mean1: f64,
    mean2: f64,
}

pub fn factorized_model(mean1: f64, mean2: f64) -> Result<FactorizedModel> {
    for m in [mean1, mean2] {
        if !(-1.0..=1.0).contains(&m) {
            return Err(Error::domain("mean", m, "|mean| <= 1"));
        }
    }
    Ok(FactorizedModel { mean1, mean2 })
}

impl FactorizedModel {
    pub fn means(&self) -> (f64, f64) {
        (self.mean1, self.mean2)
    }
}

impl HiddenVariableModel for FactorizedModel {
    type Lambda = ();

    fn sample_lambda<R: Rng + ?Sized>(&self, _rng: &mut R) {}

    fn detect_prob_1(&self, _lambda: &(), _a: &Direction) -> f64 {
        (1.0 + self.mean1) / 2.0
    }

    fn detect_prob_2(&self, _lambda: &(), _b: &Direction) -> f64 {
        (1.0 + self.mean2) / 2.0
    }
}

/// Samples the singlet joint outcome table at the angle between the two
/// microscopic directions of each pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContextualSampler;

pub fn contextual_sampler() -> ContextualSampler {
    ContextualSampler
}

impl PairSource for ContextualSampler {
    fn emit_pair<R: Rng + ?Sized>(&self, a: &Direction, b: &Direction, rng: &mut R) -> (Outcome, Outcome) {
        let table = singlet_outcome_table(a, b).expect("microscopic directions are unit vectors");
        let first = bernoulli(0.5, rng);
        let same = rng.gen::<f64>() < table.same_sign();
        (first, if same { first } else { -first })
    }
}

/// Model selected by name in a config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    QmContextual(ContextualSampler),
    BellSign(BellSignModel),
    Factorized(FactorizedModel),
}

impl Model {
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Whether outcomes at every setting exist for each `λ`.
    pub fn supports_counterfactual(&self) -> bool {
        matches!(self, Model::BellSign(_))
    }
}

impl PairSource for Model {
    fn emit_pair<R: Rng + ?Sized>(&self, a: &Direction, b: &Direction, rng: &mut R) -> (Outcome, Outcome) {
        match self {
            Model::QmContextual(m) => m.emit_pair(a, b, rng),
            Model::BellSign(m) => m.emit_pair(a, b, rng),
            Model::Factorized(m) => m.emit_pair(a, b, rng),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::QmContextual(_) => f.write_str("qm-contextual"),
            Model::BellSign(_) => f.write_str("bell-sign"),
            Model::Factorized(m) => write!(f, "factorized({},{})", m.mean1, m.mean2),
        }
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "qm-contextual" => return Ok(Model::QmContextual(ContextualSampler)),
            "bell-sign" => return Ok(Model::BellSign(BellSignModel)),
            _ => {}
        }
        let unknown = || Error::Config(format!("unknown model `{s}`"));
        let args = t
            .strip_prefix("factorized")
            .map(str::trim)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(unknown)?;
        let means: Vec<f64> = args
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| unknown())?;
        match means.as_slice() {
            [m1, m2] => Ok(Model::Factorized(factorized_model(*m1, *m2)?)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for Model {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Closed-form correlation of the local models.
pub fn lhv_correlation_exact(model: &Model, a: &Direction, b: &Direction) -> Result<f64> {
    match model {
        Model::BellSign(_) => {
            let theta = angle_between(a, b)?;
            Ok(-(1.0 - 2.0 * theta / std::f64::consts::PI))
        }
        Model::Factorized(m) => Ok(m.mean1 * m.mean2),
        Model::QmContextual(_) => Err(Error::UnsupportedModel(model.name())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn mc_correlation<S: PairSource>(src: &S, a: &Direction, b: &Direction, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = substream(seed, 0);
        let sum: i64 = (0..n)
            .map(|_| {
                let (x, y) = src.emit_pair(a, b, &mut rng);
                (x.value() * y.value()) as i64
            })
            .sum();
        let mean = sum as f64 / n as f64;
        (mean, ((1.0 - mean * mean) / n as f64).sqrt())
    }

    #[test]
    fn model_names_round_trip() {
        for name in ["qm-contextual", "bell-sign", "factorized(0.5,-0.25)"] {
            let m: Model = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
        }
        assert!(matches!("factorized( 0.5 , 1 )".parse::<Model>(), Ok(Model::Factorized(_))));
        assert!("factorized(2,0)".parse::<Model>().is_err());
        assert!("factorized(0.1)".parse::<Model>().is_err());
        assert!("bohm".parse::<Model>().is_err());
    }

    #[test]
    fn bell_sign_closed_form_examples() {
        let m = Model::BellSign(bell_sign_model());
        let z = Direction::Z;
        assert_eq!(lhv_correlation_exact(&m, &z, &z).unwrap(), -1.0);
        assert!((lhv_correlation_exact(&m, &z, &z.neg()).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(lhv_correlation_exact(&m, &z, &Direction::X).unwrap(), 0.0);
        let e = lhv_correlation_exact(&m, &z, &Direction::planar(FRAC_PI_4)).unwrap();
        assert!((e + 0.5).abs() < 1e-12);
        assert!(matches!(
            lhv_correlation_exact(&Model::QmContextual(ContextualSampler), &z, &z),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn bell_sign_monte_carlo_matches_closed_form() {
        let m = bell_sign_model();
        for (seed, theta) in [(1, FRAC_PI_2), (2, FRAC_PI_4)] {
            let b = Direction::planar(theta);
            let (e, se) = mc_correlation(&m, &Direction::Z, &b, 1_000_000, seed);
            let exact = -(1.0 - 2.0 * theta / PI);
            assert!((e - exact).abs() <= 4.0 * se, "theta {theta}: {e} vs {exact}");
        }
    }

    #[test]
    fn sign_of_zero_is_plus() {
        let m = bell_sign_model();
        assert_eq!(m.spin(&Direction::Z, &Direction::X), Outcome::Plus);
        assert_eq!(m.outcome_2(&Direction::Z, &Direction::X), Outcome::Minus);
    }

    #[test]
    fn factorized_examples() {
        let z = Direction::Z;
        let x = Direction::X;
        let zero = Model::Factorized(factorized_model(0.0, 0.0).unwrap());
        assert_eq!(lhv_correlation_exact(&zero, &z, &x).unwrap(), 0.0);

        let fixed = factorized_model(1.0, -1.0).unwrap();
        let mut rng = substream(5, 0);
        for _ in 0..1000 {
            assert_eq!(fixed.emit_pair(&z, &x, &mut rng), (Outcome::Plus, Outcome::Minus));
        }
        assert!(factorized_model(1.01, 0.0).is_err());

        let half = factorized_model(0.5, 0.5).unwrap();
        for (seed, b) in [(3, x), (4, z), (5, Direction::planar(2.0))] {
            let (e, se) = mc_correlation(&half, &z, &b, 200_000, seed);
            assert!((e - 0.25).abs() <= 4.0 * se);
        }
    }

    #[test]
    fn contextual_sampler_extremes() {
        let s = contextual_sampler();
        let mut rng = substream(9, 0);
        let a = Direction::new(0.1, 0.7, -0.2).unwrap();
        for _ in 0..10_000 {
            let (x, y) = s.emit_pair(&a, &a, &mut rng);
            assert_eq!(x, -y);
            let (x, y) = s.emit_pair(&a, &a.neg(), &mut rng);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn contextual_sampler_at_sixty_degrees() {
        let b = Direction::planar(FRAC_PI_3);
        let (e, se) = mc_correlation(&contextual_sampler(), &Direction::Z, &b, 1_000_000, 17);
        assert!((e + 0.5).abs() <= 4.0 * se, "{e}");
    }

    #[test]
    fn contextual_marginals_are_uniform() {
        let s = contextual_sampler();
        let n = 1_000_000u64;
        for (seed, theta) in [(21, 0.0), (22, 1.1), (23, PI)] {
            let b = Direction::planar(theta);
            let mut rng = substream(seed, 0);
            let (mut plus1, mut plus2) = (0u64, 0u64);
            for _ in 0..n {
                let (x, y) = s.emit_pair(&Direction::Z, &b, &mut rng);
                plus1 += (x == Outcome::Plus) as u64;
                plus2 += (y == Outcome::Plus) as u64;
            }
            let bound = 4.0 * (0.25 / n as f64).sqrt();
            assert!((plus1 as f64 / n as f64 - 0.5).abs() <= bound);
            assert!((plus2 as f64 / n as f64 - 0.5).abs() <= bound);
        }
    }

    #[test]
    fn factorized_is_flat_across_settings() {
        let m = factorized_model(-0.3, 0.6).unwrap();
        let mut last: Option<(f64, f64)> = None;
        for (seed, t) in [(31, 0.0), (32, 1.5), (33, 3.0)] {
            let (e, se) = mc_correlation(&m, &Direction::Z, &Direction::planar(t), 400_000, seed);
            assert!((e + 0.18).abs() <= 4.0 * se);
            if let Some((prev, prev_se)) = last {
                let comb: f64 = se * se + prev_se * prev_se;
                assert!((e - prev).abs() <= 4.0 * comb.sqrt());
            }
            last = Some((e, se));
        }
    }

    #[test]
    fn anti_correlation_on_random_probes() {
        let m = bell_sign_model();
        let mut rng = substream(41, 0);
        for _ in 0..100_000 {
            let lambda = SpinFunctionModel::sample_lambda(&m, &mut rng);
            let x = sample_uniform_sphere(&mut rng);
            assert_eq!(m.outcome_1(&lambda, &x), -m.outcome_2(&lambda, &x));
        }
    }

    fn any_direction() -> impl Strategy<Value = Direction> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Direction::new(x, y, z).unwrap())
    }

    proptest! {
        #[test]
        fn local_probability_ignores_far_setting(
            lambda in any_direction(),
            a in any_direction(),
            b in any_direction(),
            b2 in any_direction(),
        ) {
            let m = bell_sign_model();
            let p = m.detect_prob_1(&lambda, &a);
            // p₁ has no parameter for b; pairing it with other b's changes nothing
            let paired: Vec<f64> = [b, b2].iter().map(|_| m.detect_prob_1(&lambda, &a)).collect();
            prop_assert!(paired.iter().all(|&q| q == p));
            prop_assert!(p == 0.0 || p == 1.0);
            prop_assert!((0.0..=1.0).contains(&m.detect_prob_2(&lambda, &b)));
        }

        #[test]
        fn spin_functions_anti_correlate(lambda in any_direction(), x in any_direction()) {
            let m = bell_sign_model();
            prop_assert_eq!(m.outcome_1(&lambda, &x), -m.outcome_2(&lambda, &x));
            prop_assert_eq!(m.spin(&lambda, &x), m.spin(&lambda, &x));
        }
    }
}
