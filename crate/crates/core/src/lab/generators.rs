//! Seeded, stratified generators for test populations.
//!
//! Elements come in four strata covering both regimes of every claim:
//! in-ball translations, ball swaps and recentred unit scalings (all
//! certified bijections), and non-bijective elements (level-shifting
//! scalings, out-of-ball translations, colliding translations). Bijective
//! draws are occasionally composed through the motion product, which
//! preserves bijectivity of the point map.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::affine::AffineElement;
use crate::error::{Error, Result};
use crate::padic::Prime;
use crate::region::{Ball, Region};
use crate::rng::SplitMix64;
use crate::scalar::{prime_power, rat_int, Scalar};
use crate::step::StepFn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Translation,
    Swap,
    UnitScaling,
    NonBijective,
}

/// Relative weights of the element strata.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorMix {
    pub translations: u32,
    pub swaps: u32,
    pub scalings: u32,
    pub non_bijective: u32,
}

impl Default for GeneratorMix {
    fn default() -> Self {
        GeneratorMix {
            translations: 3,
            swaps: 2,
            scalings: 2,
            non_bijective: 3,
        }
    }
}

impl GeneratorMix {
    pub fn validate(&self) -> Result<()> {
        if self.translations + self.swaps + self.scalings + self.non_bijective == 0 {
            return Err(Error::InvalidConfig("generator mix sums to zero".into()));
        }
        Ok(())
    }

    /// Weights with the non-bijective stratum removed.
    pub fn bijective_only(&self) -> GeneratorMix {
        GeneratorMix {
            non_bijective: 0,
            ..*self
        }
    }
}

/// Deterministic generator bound to a prime and a stream.
pub struct LabGen {
    prime: Prime,
    rng: SplitMix64,
}

impl LabGen {
    pub fn new(prime: Prime, seed: u64, lane: u64) -> Self {
        LabGen {
            prime,
            rng: SplitMix64::lane(seed, lane),
        }
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn rng(&mut self) -> &mut SplitMix64 {
        &mut self.rng
    }

    fn level(&mut self) -> i64 {
        self.rng.below(4) as i64 - 2
    }

    /// Random center with digits at positions −2..=1, mostly sparse.
    fn center(&mut self) -> Scalar {
        let p = self.prime.get() as u64;
        let mut c = Scalar::from(BigInt::from(0));
        for pos in -2i64..=1 {
            if self.rng.below(2) == 0 {
                let d = self.rng.below(p);
                if d != 0 {
                    c += Scalar::from(BigInt::from(d)) * prime_power(self.prime.get(), pos);
                }
            }
        }
        c
    }

    pub fn ball(&mut self) -> Ball {
        let level = self.level();
        Ball::new(self.prime, &self.center(), level)
    }

    /// A ball or, one time in four, a punctured ball.
    pub fn region(&mut self) -> Region {
        let ball = self.ball();
        if self.rng.below(4) == 0 {
            let children = ball.split();
            let hole = children[self.rng.below(children.len() as u64) as usize].clone();
            Region::new(ball, vec![hole]).expect("proper single hole")
        } else {
            Region::ball(ball)
        }
    }

    /// A unit of the base field: v_p = 0, small numerator/denominator.
    fn unit(&mut self) -> Scalar {
        let p = self.prime.get() as i64;
        let pick = |r: &mut SplitMix64| -> i64 {
            loop {
                let c = r.below(9) as i64 + 1;
                if c % p != 0 {
                    return c;
                }
            }
        };
        let num = pick(&mut self.rng);
        let den = pick(&mut self.rng);
        let sign = if self.rng.below(4) == 0 { -1 } else { 1 };
        Scalar::new(BigInt::from(sign * num), BigInt::from(den))
    }

    /// Nonzero h with |h|_p ≤ p^level: h = unit · p^j, j ≥ −level.
    fn in_ball_shift(&mut self, level: i64) -> Scalar {
        let j = -level + self.rng.below(3) as i64;
        self.unit() * prime_power(self.prime.get(), j)
    }

    pub fn translation_element(&mut self) -> AffineElement {
        let region = self.region();
        // Bound |h| by the finest ball of the region so holes translate
        // onto themselves and the point map stays a bijection.
        let h = self.in_ball_shift(region.finest_level());
        AffineElement::translation(region, h)
    }

    pub fn swap_element(&mut self) -> AffineElement {
        let parent = self.ball();
        let children = parent.split();
        let i = self.rng.below(children.len() as u64) as usize;
        let j = loop {
            let j = self.rng.below(children.len() as u64) as usize;
            if j != i {
                break j;
            }
        };
        AffineElement::swap(
            Region::ball(children[i].clone()),
            Region::ball(children[j].clone()),
        )
        .expect("sibling cosets are disjoint equal-level balls")
    }

    pub fn unit_scaling_element(&mut self) -> AffineElement {
        let ball = self.ball();
        let a = self.unit();
        AffineElement::recentred_scaling(Region::ball(ball), a)
            .expect("unit scale is nonzero")
    }

    pub fn non_bijective_element(&mut self) -> AffineElement {
        match self.rng.below(3) {
            0 => {
                // Level-shifting scaling: image strictly off the source.
                let ball = self.ball();
                let exp = if self.rng.below(2) == 0 { 1 } else { -1 };
                let a = self.unit() * prime_power(self.prime.get(), exp);
                AffineElement::scaling(Region::ball(ball), a).expect("nonzero scale")
            }
            1 => {
                // Translation leaving the ball: |h| > radius.
                let ball = self.ball();
                let level = ball.level();
                let h = self.unit() * prime_power(self.prime.get(), -level - 1);
                AffineElement::translation(Region::ball(ball), h)
            }
            _ => {
                // Collision: move one sibling onto another, which the
                // identity already covers.
                let parent = self.ball();
                let children = parent.split();
                let i = self.rng.below(children.len() as u64) as usize;
                let j = loop {
                    let j = self.rng.below(children.len() as u64) as usize;
                    if j != i {
                        break j;
                    }
                };
                let delta = children[j].center() - children[i].center();
                AffineElement::translation(Region::ball(children[i].clone()), delta)
            }
        }
    }

    fn simple_bijective(&mut self) -> (AffineElement, ElementKind) {
        match self.rng.below(3) {
            0 => (self.translation_element(), ElementKind::Translation),
            1 => (self.swap_element(), ElementKind::Swap),
            _ => (self.unit_scaling_element(), ElementKind::UnitScaling),
        }
    }

    /// One element drawn from the stratified mix. Bijective draws are
    /// composed with a second simple factor one time in three.
    pub fn element(&mut self, mix: &GeneratorMix) -> (AffineElement, ElementKind) {
        let total =
            (mix.translations + mix.swaps + mix.scalings + mix.non_bijective) as u64;
        let t = self.rng.below(total) as u32;
        let (g, kind) = if t < mix.translations {
            (self.translation_element(), ElementKind::Translation)
        } else if t < mix.translations + mix.swaps {
            (self.swap_element(), ElementKind::Swap)
        } else if t < mix.translations + mix.swaps + mix.scalings {
            (self.unit_scaling_element(), ElementKind::UnitScaling)
        } else {
            (self.non_bijective_element(), ElementKind::NonBijective)
        };
        if kind != ElementKind::NonBijective && self.rng.below(3) == 0 {
            let (other, _) = self.simple_bijective();
            let composed = AffineElement::product_motion(&other, &g)
                .expect("same prime composition");
            (composed, kind)
        } else {
            (g, kind)
        }
    }

    pub fn bijective_element(&mut self, mix: &GeneratorMix) -> (AffineElement, ElementKind) {
        self.element(&mix.bijective_only())
    }

    fn small_value(&mut self) -> Scalar {
        let num = self.rng.below(7) as i64 - 3;
        let den = self.rng.below(3) as i64 + 1;
        Scalar::new(BigInt::from(num), BigInt::from(den))
    }

    /// Random one-particle function: default 0, one or two pieces.
    /// Retries the rare draw where two pieces assign the same base ball
    /// conflicting values.
    pub fn step_default0(&mut self) -> StepFn {
        loop {
            let pieces = 1 + self.rng.below(2) as usize;
            let mut raw = Vec::with_capacity(pieces);
            for _ in 0..pieces {
                raw.push((self.region(), self.small_value()));
            }
            if let Ok(f) = StepFn::from_pieces(self.prime, raw, rat_int(0)) {
                return f;
            }
        }
    }

    /// Random multiplicative mark φ ≥ 0 with default 1; occasionally
    /// vanishing on a piece (void region).
    pub fn phi(&mut self) -> StepFn {
        let choices: [Scalar; 6] = [
            rat_int(0),
            rat_int(2),
            rat_int(3),
            Scalar::new(BigInt::from(1), BigInt::from(2)),
            Scalar::new(BigInt::from(3), BigInt::from(2)),
            Scalar::new(BigInt::from(1), BigInt::from(3)),
        ];
        loop {
            let pieces = 1 + self.rng.below(2) as usize;
            let mut raw = Vec::with_capacity(pieces);
            for _ in 0..pieces {
                let v = choices[self.rng.below(choices.len() as u64) as usize].clone();
                raw.push((self.region(), v));
            }
            if let Ok(f) = StepFn::from_pieces(self.prime, raw, rat_int(1)) {
                return f;
            }
        }
    }

    /// φ supported inside a given region (value ≠ 1 only there).
    pub fn phi_supported_in(&mut self, region: &Region) -> StepFn {
        let values: [Scalar; 3] = [
            rat_int(2),
            rat_int(3),
            Scalar::new(BigInt::from(1), BigInt::from(2)),
        ];
        let v = values[self.rng.below(values.len() as u64) as usize].clone();
        StepFn::bump(region.clone(), v, rat_int(1))
    }
}
