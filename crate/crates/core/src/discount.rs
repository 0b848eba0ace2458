//! Lead-time discount schedules for forecast prices.
//!
//! A schedule maps lead time `n` (1-based) over a horizon of `T` intervals to a
//! weight in `(0, 1]` with the first weight always 1:
//!
//! | scheme             | weight                          |
//! |--------------------|---------------------------------|
//! | `simulated_anneal` | `exp(-g0 (n-1) / T)`            |
//! | `cosine_anneal`    | `1/2 + 1/2 cos((n-1) pi / T)`   |
//! | `power_law`        | `g0^(n-1)`                      |
//! | `none`             | `1`                             |

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SimulatedAnneal,
    CosineAnneal,
    PowerLaw,
    None,
}

impl Scheme {
    pub const DISCOUNTED: [Scheme; 3] = [
        Scheme::SimulatedAnneal,
        Scheme::CosineAnneal,
        Scheme::PowerLaw,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::SimulatedAnneal => "simulated_anneal",
            Scheme::CosineAnneal => "cosine_anneal",
            Scheme::PowerLaw => "power_law",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Scheme::None),
            "simulated_anneal" => Ok(Scheme::SimulatedAnneal),
            "cosine_anneal" => Ok(Scheme::CosineAnneal),
            "power_law" => Ok(Scheme::PowerLaw),
            other => Err(Error::argument(format!(
                "unknown discount scheme {other:?}"
            ))),
        }
    }
}

/// Scheme selector plus the `(g0, lambda, s)` hyperparameters of the
/// discounted objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountSpec {
    pub scheme: Scheme,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_norm")]
    pub s: u8,
}

fn default_gamma0() -> f64 {
    0.95
}

fn default_norm() -> u8 {
    1
}

impl Default for DiscountSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl DiscountSpec {
    /// The undiscounted controller.
    pub fn none() -> Self {
        Self {
            scheme: Scheme::None,
            gamma0: 1.0,
            lambda: 0.0,
            s: 1,
        }
    }

    pub fn new(scheme: Scheme, gamma0: f64, lambda: f64, s: u8) -> Self {
        Self {
            scheme,
            gamma0,
            lambda,
            s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return Err(Error::argument(format!(
                "gamma0 must lie in (0, 1], got {}",
                self.gamma0
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::argument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.s != 1 && self.s != 2 {
            return Err(Error::argument(format!(
                "norm order s must be 1 or 2, got {}",
                self.s
            )));
        }
        Ok(())
    }

    /// Regularisation weight actually applied; the `none` scheme never regularises.
    pub fn effective_lambda(&self) -> f64 {
        match self.scheme {
            Scheme::None => 0.0,
            _ => self.lambda,
        }
    }

    pub fn is_discounted(&self) -> bool {
        self.scheme != Scheme::None
    }
}

/// Weight of lead time `n` (1-based) within a horizon of `horizon` intervals.
pub fn weight(spec: &DiscountSpec, n: usize, horizon: usize) -> Result<f64> {
    if n < 1 || n > horizon {
        return Err(Error::argument(format!(
            "lead time {n} outside 1..={horizon}"
        )));
    }
    let lag = (n - 1) as f64;
    let t = horizon as f64;
    Ok(match spec.scheme {
        Scheme::None => 1.0,
        Scheme::SimulatedAnneal => (-spec.gamma0 * lag / t).exp(),
        Scheme::CosineAnneal => 0.5 + 0.5 * (lag * PI / t).cos(),
        Scheme::PowerLaw => spec.gamma0.powi((n - 1) as i32),
    })
}

/// Diagonal of the lead-time weighting matrix for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaVector {
    weights: Vec<f64>,
}

impl GammaVector {
    pub fn ones(horizon: usize) -> Self {
        Self {
            weights: vec![1.0; horizon],
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::argument("empty weight vector"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::argument("weights must lie in (0, 1]"));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn horizon(&self) -> usize {
        self.weights.len()
    }
}

pub fn build_gamma(spec: &DiscountSpec, horizon: usize) -> Result<GammaVector> {
    spec.validate()?;
    if horizon < 1 {
        return Err(Error::argument("horizon must be at least 1"));
    }
    let weights = (1..=horizon)
        .map(|n| weight(spec, n, horizon))
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaVector { weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    scheme: Scheme,
    gamma0_bits: u64,
    horizon: usize,
}

/// Write-once-per-key cache of weight vectors, shared between threads.
#[derive(Debug, Default)]
pub struct GammaCache {
    inner: RwLock<HashMap<CacheKey, Arc<GammaVector>>>,
}

impl GammaCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, spec: &DiscountSpec, horizon: usize) -> Result<Arc<GammaVector>> {
        let key = CacheKey {
            scheme: spec.scheme,
            // cosine and none ignore g0, so they share one entry per horizon
            gamma0_bits: match spec.scheme {
                Scheme::SimulatedAnneal | Scheme::PowerLaw => spec.gamma0.to_bits(),
                Scheme::CosineAnneal | Scheme::None => 0,
            },
            horizon,
        };
        if let Some(hit) = self.inner.read().expect("gamma cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(build_gamma(spec, horizon)?);
        let mut map = self.inner.write().expect("gamma cache poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("gamma cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(scheme: Scheme, g0: f64) -> DiscountSpec {
        DiscountSpec::new(scheme, g0, 0.0, 1)
    }

    #[test]
    fn first_weight_is_one() {
        for scheme in [
            Scheme::None,
            Scheme::SimulatedAnneal,
            Scheme::CosineAnneal,
            Scheme::PowerLaw,
        ] {
            assert_eq!(weight(&spec(scheme, 0.95), 1, 80).unwrap(), 1.0);
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight(&spec(Scheme::PowerLaw, 0.95), 2, 80).unwrap(), 0.95);
        // references from 30-digit arithmetic
        let sa = weight(&spec(Scheme::SimulatedAnneal, 0.95), 80, 80).unwrap();
        assert!((sa - 0.391_360_949_629_668).abs() < 1e-14, "{sa}");
        let cos = weight(&spec(Scheme::CosineAnneal, 0.95), 80, 80).unwrap();
        assert!((cos - 3.854_818_796_385_326e-4).abs() < 1e-15, "{cos}");
    }

    #[test]
    fn weight_rejects_out_of_range_lead() {
        assert!(weight(&spec(Scheme::PowerLaw, 0.95), 0, 10).is_err());
        assert!(weight(&spec(Scheme::PowerLaw, 0.95), 11, 10).is_err());
    }

    #[test]
    fn build_gamma_examples() {
        assert_eq!(
            build_gamma(&DiscountSpec::none(), 4).unwrap().weights(),
            &[1.0; 4]
        );
        let pl = build_gamma(&spec(Scheme::PowerLaw, 0.95), 3).unwrap();
        assert_eq!(pl.weights()[0], 1.0);
        assert_eq!(pl.weights()[1], 0.95);
        assert!((pl.weights()[2] - 0.9025).abs() < 1e-15);
        let cos = build_gamma(&spec(Scheme::CosineAnneal, 0.95), 2).unwrap();
        assert_eq!(cos.weights()[0], 1.0);
        assert!((cos.weights()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        assert!(build_gamma(&spec(Scheme::PowerLaw, 1.5), 3).is_err());
        assert!(build_gamma(&DiscountSpec::new(Scheme::PowerLaw, 0.95, -1.0, 1), 3).is_err());
        assert!(build_gamma(&DiscountSpec::new(Scheme::PowerLaw, 0.95, 0.0, 3), 3).is_err());
        assert!(build_gamma(&spec(Scheme::PowerLaw, 0.95), 0).is_err());
    }

    #[test]
    fn none_scheme_forces_zero_lambda() {
        let s = DiscountSpec::new(Scheme::None, 0.95, 1.0, 2);
        assert_eq!(s.effective_lambda(), 0.0);
        assert_eq!(
            DiscountSpec::new(Scheme::PowerLaw, 0.95, 1.0, 2).effective_lambda(),
            1.0
        );
    }

    #[test]
    fn scheme_names_round_trip() {
        for scheme in [
            Scheme::None,
            Scheme::SimulatedAnneal,
            Scheme::CosineAnneal,
            Scheme::PowerLaw,
        ] {
            assert_eq!(scheme.as_str().parse::<Scheme>().unwrap(), scheme);
        }
        assert!("cosine".parse::<Scheme>().is_err());
    }

    #[test]
    fn power_law_below_simulated_anneal() {
        for n in [20, 40, 60] {
            let pl = weight(&spec(Scheme::PowerLaw, 0.95), n, 80).unwrap();
            let sa = weight(&spec(Scheme::SimulatedAnneal, 0.95), n, 80).unwrap();
            assert!(pl < sa, "n={n}");
        }
    }

    #[test]
    fn cosine_and_anneal_cross_at_most_once() {
        let diffs: Vec<f64> = (1..=80)
            .map(|n| {
                weight(&spec(Scheme::CosineAnneal, 0.95), n, 80).unwrap()
                    - weight(&spec(Scheme::SimulatedAnneal, 0.95), n, 80).unwrap()
            })
            .filter(|d| *d != 0.0)
            .collect();
        let sign_changes = diffs
            .windows(2)
            .filter(|w| w[0].signum() != w[1].signum())
            .count();
        assert!(sign_changes <= 1, "{sign_changes}");
    }

    #[test]
    fn cache_is_transparent() {
        let cache = GammaCache::new();
        let s = spec(Scheme::SimulatedAnneal, 0.99);
        let a = cache.get(&s, 48).unwrap();
        let b = cache.get(&s, 48).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let direct = build_gamma(&s, 48).unwrap();
        let bits = |g: &GammaVector| g.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&direct));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn spec_deserialises_with_defaults() {
        let s: DiscountSpec = serde_json::from_str(r#"{"scheme":"power_law","lambda":1}"#).unwrap();
        assert_eq!(s, DiscountSpec::new(Scheme::PowerLaw, 0.95, 1.0, 1));
        assert!(
            serde_json::from_str::<DiscountSpec>(r#"{"scheme":"power_law","extra":1}"#).is_err()
        );
    }

    proptest! {
        #[test]
        fn schedules_are_monotone_and_bounded(
            scheme_idx in 0usize..3,
            g0 in 0.5f64..0.9999,
            horizon in 1usize..=80,
        ) {
            let s = spec(Scheme::DISCOUNTED[scheme_idx], g0);
            let g = build_gamma(&s, horizon).unwrap();
            prop_assert_eq!(g.weights()[0], 1.0);
            for w in g.weights() {
                prop_assert!(*w > 0.0 && *w <= 1.0);
            }
            for pair in g.weights().windows(2) {
                prop_assert!(pair[1] < pair[0]);
            }
        }
    }
}
