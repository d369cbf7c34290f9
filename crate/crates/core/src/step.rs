//! Exact algebra of piecewise-constant functions on the base field.
//!
//! A step function is a finite list of disjoint punctured-ball pieces with
//! constant values plus a default value attained outside every piece. All
//! operations (normalization, pointwise combination, pullback along a
//! piecewise-affine map, integration against Haar measure) are computed
//! exactly on the containment forest of the participating balls: each
//! forest atom is a region on which every input is constant, so one
//! witness evaluation per atom determines the result, and equal-valued
//! atoms are merged bottom-up into canonical pieces.

use std::fmt;

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::padic::Prime;
use crate::region::{Ball, BallForest, Region};
use crate::sampling::SamplePoint;
use crate::scalar::{format_rational, parse_rational, Scalar};

/// Value kinds a step function can carry. Exact rationals feed every
/// theorem-level identity; complex pairs exist for float-only paths and
/// never feed back into exact ones.
pub trait PieceValue: Clone + PartialEq + fmt::Debug {
    fn to_json(&self) -> serde_json::Value;
    fn from_json(v: &serde_json::Value) -> Result<Self>;
}

impl PieceValue for Scalar {
    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(format_rational(self))
    }

    fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => parse_rational(s),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Scalar::from(num_bigint::BigInt::from(i)))
                } else {
                    Err(Error::invalid_input("non-integer numeric rational"))
                }
            }
            _ => Err(Error::invalid_input("expected rational string")),
        }
    }
}

impl PieceValue for Complex64 {
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!([self.re, self.im])
    }

    fn from_json(v: &serde_json::Value) -> Result<Self> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::invalid_input("expected [re, im] pair"))?;
        if arr.len() != 2 {
            return Err(Error::invalid_input("expected [re, im] pair"));
        }
        let re = arr[0]
            .as_f64()
            .ok_or_else(|| Error::invalid_input("bad real part"))?;
        let im = arr[1]
            .as_f64()
            .ok_or_else(|| Error::invalid_input("bad imaginary part"))?;
        Ok(Complex64::new(re, im))
    }
}

/// Piecewise-constant function with bounded support of the non-default
/// part. Canonical after construction: pieces disjoint, sorted, none
/// carrying the default value.
#[derive(Clone, Debug)]
pub struct StepFunction<V: PieceValue> {
    prime: Prime,
    default: V,
    pieces: Vec<(Region, V)>,
}

/// Rational-valued step function, the workhorse of every exact identity.
pub type StepFn = StepFunction<Scalar>;

/// One constant-coefficient cell of a piecewise-affine point map
/// x ↦ (x + shift)/scale.
#[derive(Clone, Debug)]
pub struct AffineCell {
    pub region: Region,
    pub scale: Scalar,
    pub shift: Scalar,
}

impl<V: PieceValue> StepFunction<V> {
    pub fn constant(prime: Prime, value: V) -> Self {
        StepFunction {
            prime,
            default: value,
            pieces: Vec::new(),
        }
    }

    /// Normalize raw pieces into canonical disjoint form. Pieces may
    /// overlap in the nested-ball sense; the innermost assignment wins.
    /// Two pieces with the same base ball must agree where they overlap.
    pub fn from_pieces(prime: Prime, raw: Vec<(Region, V)>, default: V) -> Result<Self> {
        for (r, _) in &raw {
            prime.same_as(r.prime())?;
        }
        let balls = raw.iter().flat_map(|(r, _)| {
            std::iter::once(r.base().clone()).chain(r.holes().iter().cloned())
        });
        let forest = BallForest::build(prime, balls)?;
        let pieces = build_pieces(&forest, &default, |w| {
            let mut best: Option<(i64, &V)> = None;
            for (r, v) in &raw {
                if r.contains(w) {
                    let lvl = r.base().level();
                    match best {
                        Some((bl, bv)) if bl == lvl => {
                            if bv != v {
                                return Err(Error::InconsistentPieces(format!(
                                    "conflicting values {bv:?} and {v:?} at {w}"
                                )));
                            }
                        }
                        Some((bl, _)) if bl < lvl => {}
                        _ => best = Some((lvl, v)),
                    }
                }
            }
            Ok(best.map(|(_, v)| v.clone()).unwrap_or_else(|| default.clone()))
        })?;
        Ok(StepFunction {
            prime,
            default,
            pieces,
        })
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn default_value(&self) -> &V {
        &self.default
    }

    pub fn pieces(&self) -> &[(Region, V)] {
        &self.pieces
    }

    pub fn is_constant(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Value at an exact point.
    pub fn evaluate(&self, x: &Scalar) -> V {
        for (r, v) in &self.pieces {
            if r.contains(x) {
                return v.clone();
            }
        }
        self.default.clone()
    }

    /// Value at a sampled point; errs when any membership decision would
    /// need digits finer than the sampled resolution.
    pub fn evaluate_sample(&self, x: &SamplePoint) -> Result<V> {
        for (r, v) in &self.pieces {
            if x.in_region(r)? {
                return Ok(v.clone());
            }
        }
        Ok(self.default.clone())
    }

    /// Regions where the value differs from the default.
    pub fn support(&self) -> Vec<Region> {
        self.pieces.iter().map(|(r, _)| r.clone()).collect()
    }

    /// All balls mentioned in the canonical representation.
    pub fn balls(&self) -> impl Iterator<Item = &Ball> {
        self.pieces
            .iter()
            .flat_map(|(r, _)| std::iter::once(r.base()).chain(r.holes().iter()))
    }

    /// Smallest K with the support inside B(0, K); `None` for constants.
    pub fn enclosing_level(&self) -> Option<i64> {
        self.pieces.iter().map(|(r, _)| r.enclosing_level()).max()
    }

    /// Finest ball level in the representation; `None` for constants.
    pub fn finest_level(&self) -> Option<i64> {
        self.pieces.iter().map(|(r, _)| r.finest_level()).min()
    }

    /// Pointwise combination on the common refinement.
    pub fn combine<W: PieceValue, U: PieceValue>(
        &self,
        other: &StepFunction<W>,
        op: impl Fn(&V, &W) -> U,
    ) -> Result<StepFunction<U>> {
        self.prime.same_as(other.prime)?;
        let balls = self.balls().chain(other.balls()).cloned();
        let forest = BallForest::build(self.prime, balls)?;
        let default = op(&self.default, &other.default);
        let pieces = build_pieces(&forest, &default, |w| {
            Ok(op(&self.evaluate(w), &other.evaluate(w)))
        })?;
        Ok(StepFunction {
            prime: self.prime,
            default,
            pieces,
        })
    }

    /// Value-wise transformation (e.g. absolute value, squaring).
    pub fn map_values<U: PieceValue>(&self, op: impl Fn(&V) -> U) -> StepFunction<U> {
        let default = op(&self.default);
        let raw: Vec<(Region, U)> = self
            .pieces
            .iter()
            .map(|(r, v)| (r.clone(), op(v)))
            .collect();
        StepFunction::from_pieces(self.prime, raw, default)
            .expect("disjoint pieces cannot conflict")
    }

    /// Pullback along the piecewise-affine point map with the given
    /// non-identity cells: (gf)(x) = f((x + shift_E)/scale_E) on cell E,
    /// f(x) outside all cells. Exact for any value kind.
    pub fn pullback_with_cells(&self, cells: &[AffineCell]) -> Result<StepFunction<V>> {
        let mut balls: Vec<Ball> = self.balls().cloned().collect();
        for c in cells {
            self.prime.same_as(c.region.prime())?;
            if c.scale.is_zero() {
                return Err(Error::ZeroScale);
            }
            balls.push(c.region.base().clone());
            balls.extend(c.region.holes().iter().cloned());
            for b in self.balls() {
                balls.push(b.affine_preimage(&c.scale, &c.shift)?);
            }
        }
        let forest = BallForest::build(self.prime, balls)?;
        let pieces = build_pieces(&forest, &self.default, |w| {
            let moved = match cells.iter().find(|c| c.region.contains(w)) {
                Some(c) => (w + &c.shift) / &c.scale,
                None => w.clone(),
            };
            Ok(self.evaluate(&moved))
        })?;
        Ok(StepFunction {
            prime: self.prime,
            default: self.default.clone(),
            pieces,
        })
    }
}

impl StepFn {
    pub fn indicator(region: Region) -> StepFn {
        let prime = region.prime();
        StepFunction {
            prime,
            default: Scalar::zero(),
            pieces: vec![(region, Scalar::from(num_bigint::BigInt::from(1)))],
        }
    }

    /// value · 1_region + default elsewhere.
    pub fn bump(region: Region, value: Scalar, default: Scalar) -> StepFn {
        let prime = region.prime();
        if value == default {
            return StepFunction::constant(prime, default);
        }
        StepFunction {
            prime,
            default,
            pieces: vec![(region, value)],
        }
    }

    pub fn add(&self, other: &StepFn) -> StepFn {
        self.combine(other, |a, b| a + b).expect("same prime")
    }

    pub fn sub(&self, other: &StepFn) -> StepFn {
        self.combine(other, |a, b| a - b).expect("same prime")
    }

    pub fn mul(&self, other: &StepFn) -> StepFn {
        self.combine(other, |a, b| a * b).expect("same prime")
    }

    pub fn scale_by(&self, c: &Scalar) -> StepFn {
        self.map_values(|v| v * c)
    }

    pub fn add_const(&self, c: &Scalar) -> StepFn {
        self.map_values(|v| v + c)
    }

    pub fn abs(&self) -> StepFn {
        self.map_values(|v| {
            if v < &Scalar::zero() {
                -v.clone()
            } else {
                v.clone()
            }
        })
    }

    pub fn square(&self) -> StepFn {
        self.map_values(|v| v * v)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.default >= Scalar::zero() && self.pieces.iter().all(|(_, v)| *v >= Scalar::zero())
    }

    /// ∫ f dm, exact. Requires default 0 so the integral is a finite sum
    /// of value × measure terms.
    pub fn integrate(&self) -> Result<Scalar> {
        if !self.default.is_zero() {
            return Err(Error::NonzeroDefault);
        }
        Ok(self.pieces.iter().map(|(r, v)| v * r.measure()).sum())
    }
}

/// Shared construction path: one witness evaluation per forest atom,
/// bottom-up merge of uniform subtrees, default-valued pieces dropped.
fn build_pieces<V: PieceValue>(
    forest: &BallForest,
    default: &V,
    value_at: impl Fn(&Scalar) -> Result<V>,
) -> Result<Vec<(Region, V)>> {
    enum Collapsed<V> {
        Uniform(V),
        Mixed(Vec<(Region, V)>),
    }

    fn collapse<V: PieceValue>(
        forest: &BallForest,
        idx: usize,
        value_at: &impl Fn(&Scalar) -> Result<V>,
    ) -> Result<Collapsed<V>> {
        let node = &forest.nodes()[idx];
        let mut child_results = Vec::with_capacity(node.children.len());
        for &c in &node.children {
            child_results.push((c, collapse(forest, c, value_at)?));
        }
        let atom = forest.atom(idx);
        let atom_value = match &atom {
            Some(region) => Some(value_at(&region.witness())?),
            None => None,
        };
        let reference = atom_value.as_ref().or_else(|| {
            child_results.iter().find_map(|(_, c)| match c {
                Collapsed::Uniform(v) => Some(v),
                Collapsed::Mixed(_) => None,
            })
        });
        let uniform = match reference {
            Some(rv) => child_results.iter().all(|(_, c)| match c {
                Collapsed::Uniform(v) => v == rv,
                Collapsed::Mixed(_) => false,
            }),
            None => false,
        };
        if uniform {
            return Ok(Collapsed::Uniform(reference.expect("checked").clone()));
        }
        let mut pieces: Vec<(Region, V)> = Vec::new();
        if let (Some(region), Some(v)) = (atom, atom_value) {
            pieces.push((region, v));
        }
        for (c, collapsed) in child_results {
            match collapsed {
                Collapsed::Uniform(v) => {
                    pieces.push((Region::ball(forest.nodes()[c].ball.clone()), v))
                }
                Collapsed::Mixed(ps) => pieces.extend(ps),
            }
        }
        Ok(Collapsed::Mixed(pieces))
    }

    let mut pieces: Vec<(Region, V)> = Vec::new();
    for &root in forest.roots() {
        match collapse(forest, root, &value_at)? {
            Collapsed::Uniform(v) => {
                pieces.push((Region::ball(forest.nodes()[root].ball.clone()), v))
            }
            Collapsed::Mixed(ps) => pieces.extend(ps),
        }
    }
    pieces.retain(|(_, v)| v != default);
    pieces.sort_by(|(a, _), (b, _)| a.base().cmp(b.base()).then_with(|| a.holes().cmp(b.holes())));
    Ok(pieces)
}

/// Equality as functions on the base field: same default and the same
/// value on every atom of the joint refinement. Different primes compare
/// unequal.
impl<V: PieceValue> PartialEq for StepFunction<V> {
    fn eq(&self, other: &Self) -> bool {
        if self.prime != other.prime || self.default != other.default {
            return false;
        }
        let balls = self.balls().chain(other.balls()).cloned();
        let forest = match BallForest::build(self.prime, balls) {
            Ok(f) => f,
            Err(_) => return false,
        };
        forest
            .atoms()
            .iter()
            .all(|(_, _, w)| self.evaluate(w) == other.evaluate(w))
    }
}

impl<V: PieceValue> Eq for StepFunction<V> {}

impl<V: PieceValue> StepFunction<V> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "default": self.default.to_json(),
            "pieces": self.pieces.iter().map(|(r, v)| serde_json::json!({
                "region": region_to_json(r),
                "value": v.to_json(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(prime: Prime, v: &serde_json::Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::invalid_input("step function must be an object"))?;
        let default = V::from_json(
            obj.get("default")
                .ok_or_else(|| Error::invalid_input("missing default"))?,
        )?;
        let mut raw = Vec::new();
        if let Some(ps) = obj.get("pieces") {
            let arr = ps
                .as_array()
                .ok_or_else(|| Error::invalid_input("pieces must be an array"))?;
            for p in arr {
                let region = region_from_json(
                    prime,
                    p.get("region")
                        .ok_or_else(|| Error::invalid_input("piece missing region"))?,
                )?;
                let value = V::from_json(
                    p.get("value")
                        .ok_or_else(|| Error::invalid_input("piece missing value"))?,
                )?;
                raw.push((region, value));
            }
        }
        StepFunction::from_pieces(prime, raw, default)
    }
}

pub fn ball_to_json(b: &Ball) -> serde_json::Value {
    serde_json::json!({
        "center": format_rational(b.center()),
        "level": b.level(),
    })
}

pub fn ball_from_json(prime: Prime, v: &serde_json::Value) -> Result<Ball> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::invalid_input("ball must be an object"))?;
    let center = parse_rational(
        obj.get("center")
            .and_then(|c| c.as_str())
            .ok_or_else(|| Error::invalid_input("ball missing center string"))?,
    )?;
    let level = obj
        .get("level")
        .and_then(|l| l.as_i64())
        .ok_or_else(|| Error::invalid_input("ball missing integer level"))?;
    Ok(Ball::new(prime, &center, level))
}

pub fn region_to_json(r: &Region) -> serde_json::Value {
    let mut v = ball_to_json(r.base());
    if !r.holes().is_empty() {
        v["holes"] = serde_json::Value::Array(r.holes().iter().map(ball_to_json).collect());
    }
    v
}

pub fn region_from_json(prime: Prime, v: &serde_json::Value) -> Result<Region> {
    let base = ball_from_json(prime, v)?;
    let holes = match v.get("holes") {
        Some(hs) => hs
            .as_array()
            .ok_or_else(|| Error::invalid_input("holes must be an array"))?
            .iter()
            .map(|h| ball_from_json(prime, h))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Region::new(base, holes)
}
