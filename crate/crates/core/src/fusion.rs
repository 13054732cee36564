//! Voxel payloads: weighted fusion of measurements and its inverse, erosion.

use std::fmt::Write as _;

/// Remaining weight at or below which an eroded voxel carries no evidence and
/// is deleted.
pub const WEIGHT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("erosion underflow: removing weight {sample} from a voxel holding {held}")]
    ErosionUnderflow { held: f64, sample: f64 },
    #[error("voxel is not in the map, nothing to erode")]
    MissingVoxel,
    #[error("malformed payload fields: {0}")]
    Parse(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

/// Result of a successful erosion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[must_use]
pub enum Erosion {
    /// Evidence remains; the voxel stays in the map.
    Kept,
    /// All evidence was removed; the caller deletes the voxel.
    Drained,
}

/// Contract for data stored in a voxel.
///
/// `erode(fuse(s, x), x)` must restore `s` up to floating-point error. Fusion
/// of a fixed multiset of samples must not depend on their order beyond
/// rounding.
pub trait Payload: Clone + Send + Sync {
    type Sample: Copy + Send + Sync;

    /// State of a freshly allocated voxel, before any sample is fused.
    fn empty() -> Self;

    fn fuse(&mut self, sample: &Self::Sample);

    fn erode(&mut self, sample: &Self::Sample) -> Result<Erosion, FusionError>;

    /// Appends the dump fields (space separated, no leading space).
    fn write_fields(&self, out: &mut String);

    /// Parses the fields written by [`write_fields`](Self::write_fields).
    fn parse_fields(fields: &[&str]) -> Result<Self, FusionError>;
}

/// One measurement contributing to a voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Occupancy probability in [0, 1].
    pub probability: f64,
    /// Strictly positive weight.
    pub weight: f64,
}

impl Sample {
    pub fn new(probability: f64, weight: f64) -> Result<Self, FusionError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(FusionError::InvalidSample(format!(
                "probability {probability} outside [0, 1]"
            )));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(FusionError::InvalidSample(format!(
                "weight {weight} must be positive and finite"
            )));
        }
        Ok(Self {
            probability,
            weight,
        })
    }

    /// A unit-weight hit.
    pub const fn hit() -> Self {
        Self {
            probability: 1.0,
            weight: 1.0,
        }
    }
}

impl Default for Sample {
    fn default() -> Self {
        Self::hit()
    }
}

/// Weighted occupancy probability.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OccupancyVoxel {
    pub probability: f64,
    pub weight: f64,
}

impl OccupancyVoxel {
    pub const fn new(probability: f64, weight: f64) -> Self {
        Self {
            probability,
            weight,
        }
    }

    pub fn fused(mut self, sample: &Sample) -> Self {
        self.fuse(sample);
        self
    }
}

impl Payload for OccupancyVoxel {
    type Sample = Sample;

    fn empty() -> Self {
        Self::default()
    }

    fn fuse(&mut self, s: &Sample) {
        let weight = self.weight + s.weight;
        let p = (self.probability * self.weight + s.probability * s.weight) / weight;
        self.probability = p.clamp(0.0, 1.0);
        self.weight = weight;
    }

    fn erode(&mut self, s: &Sample) -> Result<Erosion, FusionError> {
        let weight = self.weight - s.weight;
        if weight < -WEIGHT_EPSILON {
            return Err(FusionError::ErosionUnderflow {
                held: self.weight,
                sample: s.weight,
            });
        }
        if weight <= WEIGHT_EPSILON {
            *self = Self::empty();
            return Ok(Erosion::Drained);
        }
        let p = (self.probability * self.weight - s.probability * s.weight) / weight;
        self.probability = p.clamp(0.0, 1.0);
        self.weight = weight;
        Ok(Erosion::Kept)
    }

    fn write_fields(&self, out: &mut String) {
        write_sig9(out, self.probability);
        out.push(' ');
        write_sig9(out, self.weight);
    }

    fn parse_fields(fields: &[&str]) -> Result<Self, FusionError> {
        let [p, w] = fields else {
            return Err(FusionError::Parse(format!(
                "expected 2 fields (P W), got {}",
                fields.len()
            )));
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| FusionError::Parse(format!("{s:?}: {e}")))
        };
        let (probability, weight) = (parse(p)?, parse(w)?);
        if !(0.0..=1.0).contains(&probability) || !(weight >= 0.0) {
            return Err(FusionError::Parse(format!(
                "P={probability} W={weight} violates 0<=P<=1, W>=0"
            )));
        }
        Ok(Self::new(probability, weight))
    }
}

/// Writes `value` with 9 significant digits, trailing zeros trimmed, in the
/// style of C's `%.9g`.
pub fn write_sig9(out: &mut String, value: f64) {
    const DIGITS: i32 = 9;
    if value == 0.0 || !value.is_finite() {
        let _ = write!(out, "{}", if value == 0.0 { 0.0 } else { value });
        return;
    }
    // Round to 9 significant digits first so the exponent reflects carries.
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, value);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        let fixed = format!("{value:.decimals$}");
        out.push_str(trim_fraction(&fixed));
    } else {
        let _ = write!(out, "{}e{exp}", trim_fraction(mantissa));
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
