//! Haar-uniform sampling of points from regions.
//!
//! A sampled point is a rational truncation of a p-adic expansion: digits
//! are drawn uniformly down to a resolution level L, which makes its law
//! match Haar proportions on every ball of level ≥ L. Membership queries
//! against finer balls are refused instead of silently answered, so every
//! membership decision actually made in a Monte Carlo run is exact.

use std::cmp::Ordering;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::padic::{valuation, Prime};
use crate::region::{Ball, Region};
use crate::rng::SplitMix64;
use crate::scalar::{prime_power, Scalar};

/// A point of the base field, either exact or sampled to a resolution.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SamplePoint {
    value: Scalar,
    /// `None` means exact: all digits known. `Some(l)` means digits are
    /// uniform and known only for positions < -l; membership is then
    /// decidable exactly for balls of level ≥ l.
    resolution: Option<i64>,
}

impl SamplePoint {
    pub fn exact(value: Scalar) -> Self {
        SamplePoint {
            value,
            resolution: None,
        }
    }

    pub fn truncated(value: Scalar, resolution: i64) -> Self {
        SamplePoint {
            value,
            resolution: Some(resolution),
        }
    }

    pub fn value(&self) -> &Scalar {
        &self.value
    }

    pub fn resolution(&self) -> Option<i64> {
        self.resolution
    }

    pub fn in_ball(&self, ball: &Ball) -> Result<bool> {
        if let Some(res) = self.resolution {
            if ball.level() < res {
                return Err(Error::ResolutionTooCoarse {
                    requested: ball.level(),
                    resolution: res,
                });
            }
        }
        Ok(ball.contains(&self.value))
    }

    pub fn in_region(&self, region: &Region) -> Result<bool> {
        if !self.in_ball(region.base())? {
            return Ok(false);
        }
        for h in region.holes() {
            if self.in_ball(h)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Apply the affine map x ↦ (x + shift)/scale. The resolution shifts
    /// by v_p(scale) because the map rescales ball levels by exactly that
    /// amount.
    pub fn affine_map(&self, prime: Prime, scale: &Scalar, shift: &Scalar) -> Result<SamplePoint> {
        let v = valuation(prime, scale).finite().ok_or(Error::ZeroScale)?;
        Ok(SamplePoint {
            value: (&self.value + shift) / scale,
            resolution: self.resolution.map(|l| l + v),
        })
    }
}

impl PartialOrd for SamplePoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SamplePoint {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.value, self.resolution).cmp(&(&other.value, other.resolution))
    }
}

/// Uniform point of a ball, with digits sampled down to `resolution`.
pub fn sample_ball_uniform(ball: &Ball, resolution: i64, rng: &mut SplitMix64) -> SamplePoint {
    let p = ball.prime().get();
    let mut value = ball.center().clone();
    // Digit positions -level ..= -resolution-1 decide membership at all
    // levels >= resolution.
    let mut pos = -ball.level();
    while pos < -resolution {
        let d = rng.below(p as u64);
        if d != 0 {
            value += Scalar::from(BigInt::from(d)) * prime_power(p, pos);
        }
        pos += 1;
    }
    SamplePoint::truncated(value, resolution)
}

/// Uniform point of a punctured region by exact rejection on the holes.
pub fn sample_region_uniform(
    region: &Region,
    resolution: i64,
    rng: &mut SplitMix64,
) -> Result<SamplePoint> {
    loop {
        let pt = sample_ball_uniform(region.base(), resolution, rng);
        let mut rejected = false;
        for h in region.holes() {
            if pt.in_ball(h)? {
                rejected = true;
                break;
            }
        }
        if !rejected {
            return Ok(pt);
        }
    }
}
