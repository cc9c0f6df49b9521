//! Search-space declaration and the map between declared units and the
//! normalized box `[0, 1]^D` the surrogate works in.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::observation::Sign;

/// How a dimension's declared bounds relate to the value handed to the model.
///
/// For `Exponent` dimensions the bounds (and every `x_raw` reported in trial
/// logs) are base-10 exponents; the learner receives `10^x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Exponent,
}

/// Expert annotation of how performance changes with a dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Neutral,
}

impl Monotonicity {
    pub fn sign(self) -> Option<Sign> {
        match self {
            Monotonicity::Increasing => Some(Sign::Increasing),
            Monotonicity::Decreasing => Some(Sign::Decreasing),
            Monotonicity::Neutral => None,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "+1" | "1" => Some(Monotonicity::Increasing),
            "-1" => Some(Monotonicity::Decreasing),
            "neutral" => Some(Monotonicity::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monotonicity::Increasing => "+1",
            Monotonicity::Decreasing => "-1",
            Monotonicity::Neutral => "neutral",
        })
    }
}

impl Serialize for Monotonicity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Monotonicity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        const EXPECTED: &str = "+1, -1 or \"neutral\"";
        impl Visitor<'_> for V {
            type Value = Monotonicity;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(EXPECTED)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Monotonicity, E> {
                match v {
                    1 => Ok(Monotonicity::Increasing),
                    -1 => Ok(Monotonicity::Decreasing),
                    _ => Err(E::invalid_value(de::Unexpected::Signed(v), &EXPECTED)),
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Monotonicity, E> {
                self.visit_i64(v as i64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Monotonicity, E> {
                Monotonicity::parse(v).ok_or_else(|| E::invalid_value(de::Unexpected::Str(v), &EXPECTED))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    pub monotonicity: Monotonicity,
}

impl Dimension {
    pub fn linear(name: &str, lower: f64, upper: f64, monotonicity: Monotonicity) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale: Scale::Linear,
            monotonicity,
        }
    }

    pub fn exponent(name: &str, lower: f64, upper: f64, monotonicity: Monotonicity) -> Self {
        Self {
            scale: Scale::Exponent,
            ..Self::linear(name, lower, upper, monotonicity)
        }
    }

    /// The quantity a learner should use for a declared coordinate.
    pub fn actual_value(&self, declared: f64) -> f64 {
        match self.scale {
            Scale::Linear => declared,
            Scale::Exponent => 10f64.powf(declared),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let space = Self { dims };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return invalid("search space needs at least one dimension");
        }
        for (i, d) in self.dims.iter().enumerate() {
            if !(d.lower.is_finite() && d.upper.is_finite()) {
                return invalid(format!("space[{i}] ({}): bounds must be finite", d.name));
            }
            if d.lower >= d.upper {
                return invalid(format!(
                    "space[{i}] ({}): lower {} must be < upper {}",
                    d.name, d.lower, d.upper
                ));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.dims)
            .map(|(v, d)| (v - d.lower) / (d.upper - d.lower))
            .collect()
    }

    /// Maps a point of `[0, 1]^D` to declared units, clamping to the bounds.
    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.dims)
            .map(|(u, d)| (d.lower + u.clamp(0.0, 1.0) * (d.upper - d.lower)).clamp(d.lower, d.upper))
            .collect()
    }

    pub fn contains(&self, raw: &[f64]) -> bool {
        raw.len() == self.dims.len() && raw.iter().zip(&self.dims).all(|(v, d)| *v >= d.lower && *v <= d.upper)
    }

    pub fn all_neutral(&self) -> bool {
        self.dims.iter().all(|d| d.monotonicity == Monotonicity::Neutral)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn elastic() -> SearchSpace {
        SearchSpace::new(vec![
            Dimension::linear("ratio", 0.0, 1.0, Monotonicity::Neutral),
            Dimension::exponent("alpha", -7.0, -1.0, Monotonicity::Decreasing),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(SearchSpace::new(vec![Dimension::linear("a", 1.0, 1.0, Monotonicity::Neutral)]).is_err());
        assert!(SearchSpace::new(vec![]).is_err());
    }

    #[test]
    fn monotonicity_parsing() {
        let ok: Vec<Monotonicity> = serde_json::from_str(r#"[1, -1, "+1", "-1", "neutral"]"#).unwrap();
        assert_eq!(
            ok,
            vec![
                Monotonicity::Increasing,
                Monotonicity::Decreasing,
                Monotonicity::Increasing,
                Monotonicity::Decreasing,
                Monotonicity::Neutral
            ]
        );
        assert!(serde_json::from_str::<Monotonicity>(r#""up""#).is_err());
        assert!(serde_json::from_str::<Monotonicity>("0").is_err());
        assert_eq!(serde_json::to_string(&Monotonicity::Decreasing).unwrap(), r#""-1""#);
    }

    #[test]
    fn exponent_dims_report_actual_values() {
        let s = elastic();
        assert_eq!(s.dims()[1].actual_value(-3.0), 1e-3);
        assert_eq!(s.denormalize(&[0.5, 0.5]), vec![0.5, -4.0]);
    }

    proptest! {
        #[test]
        fn normalization_round_trips_and_is_increasing(u in 0.0..1.0f64, w in 0.0..1.0f64, du in 1e-6..0.5f64) {
            let s = elastic();
            let raw = s.denormalize(&[u, w]);
            prop_assert!(s.contains(&raw));
            let back = s.normalize(&raw);
            prop_assert!((back[0] - u).abs() < 1e-12 && (back[1] - w).abs() < 1e-12);
            let hi = s.denormalize(&[(u + du).min(1.0), (w + du).min(1.0)]);
            prop_assert!(hi[0] >= raw[0] && hi[1] >= raw[1]);
        }
    }
}
