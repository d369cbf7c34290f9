//! The infinite-dimensional affine group with step coefficients.
//!
//! An element is a pair of step functions g = (scale, shift) equal to
//! (1, 0) outside a bounded ball; it moves the point x to
//! (x + shift(x)) / scale(x). Two product semantics are first-class:
//!
//! * `product_pointwise` — coefficients of both factors evaluated at the
//!   same argument, (a₂,b₂)·(a₁,b₁) = (a₁a₂, b₁ + a₁b₂). This is a true
//!   group structure on coefficient pairs, but composed point motions
//!   need not match it.
//! * `product_motion` — coefficients of the outer factor evaluated at
//!   the moved point, so the resulting element's point map is exactly
//!   the composition of the two point maps.
//!
//! A bijectivity certificate decides, from exact ball geometry alone,
//! whether the global point map is a bijection of the base field: the
//! image cells must be pairwise disjoint and tile the source cells. The
//! pushforward density ρ_g of Haar measure under the point map is exact
//! for every element, bijective or not, with overlapping image cells
//! contributing by summation.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::padic::{norm, Prime};
use crate::region::{BallForest, Region};
use crate::sampling::SamplePoint;
use crate::scalar::Scalar;
use crate::step::{AffineCell, StepFn, StepFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductMode {
    Pointwise,
    Motion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMode {
    Pointwise,
    Motion,
}

/// Group element g = (scale, shift) with scale ≠ 0 everywhere and both
/// coefficients trivial outside a bounded ball.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineElement {
    scale: StepFn,
    shift: StepFn,
}

/// Exact certificate for the global point map being a bijection.
#[derive(Clone, Debug)]
pub struct BijectivityCertificate {
    pub verdict: bool,
    /// Non-trivial cells (region, scale, shift) of the point map.
    pub cells: Vec<AffineCell>,
    /// Image of each cell under its affine map.
    pub images: Vec<Region>,
    pub witness: Option<BijectivityWitness>,
}

#[derive(Clone, Debug)]
pub enum BijectivityWitness {
    /// A region covered by two image cells, or by an image cell and the
    /// untouched identity region (`second` = None).
    OverlappingImages {
        first: usize,
        second: Option<usize>,
        at: Region,
    },
    /// A source region not covered by any image cell.
    UncoveredSource { at: Region },
}

impl BijectivityWitness {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            BijectivityWitness::OverlappingImages { first, second, at } => serde_json::json!({
                "kind": "overlapping_images",
                "first": first,
                "second": second,
                "at": crate::step::region_to_json(at),
            }),
            BijectivityWitness::UncoveredSource { at } => serde_json::json!({
                "kind": "uncovered_source",
                "at": crate::step::region_to_json(at),
            }),
        }
    }
}

impl AffineElement {
    pub fn new(scale: StepFn, shift: StepFn) -> Result<Self> {
        scale.prime().same_as(shift.prime())?;
        if !scale.default_value().is_one() {
            return Err(Error::invalid_input("scale must default to 1"));
        }
        if !shift.default_value().is_zero() {
            return Err(Error::invalid_input("shift must default to 0"));
        }
        if scale.pieces().iter().any(|(_, v)| v.is_zero()) {
            return Err(Error::ZeroScale);
        }
        Ok(AffineElement { scale, shift })
    }

    pub fn identity(prime: Prime) -> Self {
        AffineElement {
            scale: StepFunction::constant(prime, Scalar::one()),
            shift: StepFunction::constant(prime, Scalar::zero()),
        }
    }

    /// g = (1, h·1_B): translation by h localized to a region.
    pub fn translation(region: Region, h: Scalar) -> Self {
        let prime = region.prime();
        AffineElement {
            scale: StepFunction::constant(prime, Scalar::one()),
            shift: StepFn::bump(region, h, Scalar::zero()),
        }
    }

    /// Swap two disjoint regions of equal level and measure by translations.
    pub fn swap(first: Region, second: Region) -> Result<Self> {
        first.prime().same_as(second.prime())?;
        if first.base().level() != second.base().level() || first.measure() != second.measure() {
            return Err(Error::invalid_input("swap requires equal-level regions"));
        }
        let delta = second.base().center() - first.base().center();
        let shift = StepFn::from_pieces(
            first.prime(),
            vec![(first, delta.clone()), (second, -delta)],
            Scalar::zero(),
        )?;
        AffineElement::new(
            StepFunction::constant(shift.prime(), Scalar::one()),
            shift,
        )
    }

    /// Scaling by `a` on a ball, recentred so the ball maps onto itself
    /// when |a|_p = 1: x ↦ (x + (a−1)c)/a fixes B(c, k) setwise.
    pub fn recentred_scaling(region: Region, a: Scalar) -> Result<Self> {
        if a.is_zero() {
            return Err(Error::ZeroScale);
        }
        let c = region.base().center().clone();
        let shift_val = (&a - Scalar::one()) * &c;
        let scale = StepFn::bump(region.clone(), a, Scalar::one());
        let shift = StepFn::bump(region, shift_val, Scalar::zero());
        AffineElement::new(scale, shift)
    }

    /// Plain scaling (a on B, 1 outside; shift 0); not bijective unless
    /// the image ball coincides with B.
    pub fn scaling(region: Region, a: Scalar) -> Result<Self> {
        if a.is_zero() {
            return Err(Error::ZeroScale);
        }
        let prime = region.prime();
        let scale = StepFn::bump(region, a, Scalar::one());
        AffineElement::new(scale, StepFunction::constant(prime, Scalar::zero()))
    }

    pub fn prime(&self) -> Prime {
        self.scale.prime()
    }

    pub fn scale(&self) -> &StepFn {
        &self.scale
    }

    pub fn shift(&self) -> &StepFn {
        &self.shift
    }

    pub fn is_identity(&self) -> bool {
        self.scale.is_constant() && self.shift.is_constant()
    }

    /// The constant affine pair at a fixed point: (scale(x), shift(x)).
    pub fn section(&self, x: &Scalar) -> (Scalar, Scalar) {
        (self.scale.evaluate(x), self.shift.evaluate(x))
    }

    /// The point motion gx = (x + shift(x)) / scale(x).
    pub fn act(&self, x: &Scalar) -> Scalar {
        let (a, b) = self.section(x);
        (x + b) / a
    }

    /// Point motion of a sampled point; the resolution shifts by
    /// v_p(scale at the point).
    pub fn act_sample(&self, x: &SamplePoint) -> Result<SamplePoint> {
        let a = self.scale.evaluate_sample(x)?;
        let b = self.shift.evaluate_sample(x)?;
        x.affine_map(self.prime(), &a, &b)
    }

    /// Constant-coefficient cells where the map differs from the identity.
    pub fn cells(&self) -> Result<Vec<AffineCell>> {
        let balls = self.scale.balls().chain(self.shift.balls()).cloned();
        let forest = BallForest::build(self.prime(), balls)?;
        let mut out = Vec::new();
        for (_, region, w) in forest.atoms() {
            let a = self.scale.evaluate(&w);
            let b = self.shift.evaluate(&w);
            if !(a.is_one() && b.is_zero()) {
                out.push(AffineCell {
                    region,
                    scale: a,
                    shift: b,
                });
            }
        }
        Ok(out)
    }

    /// (gf)(x) = f(gx), exact on the refinement of the cells of g with
    /// the preimages of the cells of f.
    pub fn pullback<V: crate::step::PieceValue>(
        &self,
        f: &StepFunction<V>,
    ) -> Result<StepFunction<V>> {
        self.prime().same_as(f.prime())?;
        f.pullback_with_cells(&self.cells()?)
    }

    /// Coefficient product evaluated at a common argument:
    /// (a₂,b₂)(a₁,b₁) = (a₁a₂, b₁ + a₁b₂).
    pub fn product_pointwise(outer: &AffineElement, inner: &AffineElement) -> Result<Self> {
        outer.prime().same_as(inner.prime())?;
        let scale = inner.scale.mul(&outer.scale);
        let shift = inner.shift.add(&inner.scale.mul(&outer.shift));
        AffineElement::new(scale, shift)
    }

    /// Product whose point map is the composition of point maps:
    /// act(w, x) = act(outer, act(inner, x)) for all x. The outer
    /// coefficients are pulled back through the inner motion.
    pub fn product_motion(outer: &AffineElement, inner: &AffineElement) -> Result<Self> {
        outer.prime().same_as(inner.prime())?;
        let outer_scale_moved = inner.pullback(&outer.scale)?;
        let outer_shift_moved = inner.pullback(&outer.shift)?;
        let scale = inner.scale.mul(&outer_scale_moved);
        let shift = inner.shift.add(&inner.scale.mul(&outer_shift_moved));
        AffineElement::new(scale, shift)
    }

    pub fn product(
        mode: ProductMode,
        outer: &AffineElement,
        inner: &AffineElement,
    ) -> Result<Self> {
        match mode {
            ProductMode::Pointwise => AffineElement::product_pointwise(outer, inner),
            ProductMode::Motion => AffineElement::product_motion(outer, inner),
        }
    }

    /// Literal coefficient inverse (1/a, −b/a); inverts the group product
    /// `product_pointwise` but the point map only over constant sections.
    pub fn inverse_pointwise(&self) -> Self {
        let scale = self.scale.map_values(|a| Scalar::one() / a);
        let shift = self
            .shift
            .combine(&self.scale, |b, a| -(b / a))
            .expect("same prime");
        AffineElement { scale, shift }
    }

    /// Inverse of the point map: coefficients (1/a_k, −b_k/a_k)
    /// transported to the image cells. Requires a certified bijection.
    pub fn inverse_motion(&self) -> Result<Self> {
        let cert = self.is_bijective()?;
        if !cert.verdict {
            return Err(Error::NonBijectiveElement);
        }
        let mut scale_pieces = Vec::new();
        let mut shift_pieces = Vec::new();
        for (cell, image) in cert.cells.iter().zip(cert.images.iter()) {
            scale_pieces.push((image.clone(), Scalar::one() / &cell.scale));
            shift_pieces.push((image.clone(), -(&cell.shift / &cell.scale)));
        }
        let prime = self.prime();
        AffineElement::new(
            StepFn::from_pieces(prime, scale_pieces, Scalar::one())?,
            StepFn::from_pieces(prime, shift_pieces, Scalar::zero())?,
        )
    }

    pub fn inverse(&self, mode: InverseMode) -> Result<Self> {
        match mode {
            InverseMode::Pointwise => Ok(self.inverse_pointwise()),
            InverseMode::Motion => self.inverse_motion(),
        }
    }

    /// Certify whether the global point map is a bijection: the image
    /// cells must be pairwise disjoint and cover exactly the source
    /// cells. Decided exactly from ball geometry.
    pub fn is_bijective(&self) -> Result<BijectivityCertificate> {
        let cells = self.cells()?;
        let mut images = Vec::with_capacity(cells.len());
        for c in &cells {
            images.push(c.region.affine_image(&c.scale, &c.shift)?);
        }
        let balls = cells
            .iter()
            .map(|c| &c.region)
            .chain(images.iter())
            .flat_map(|r| std::iter::once(r.base().clone()).chain(r.holes().iter().cloned()));
        let forest = BallForest::build(self.prime(), balls)?;
        let mut witness = None;
        for (_, region, w) in forest.atoms() {
            let in_source = cells.iter().any(|c| c.region.contains(&w));
            let covering: Vec<usize> = images
                .iter()
                .enumerate()
                .filter(|(_, img)| img.contains(&w))
                .map(|(i, _)| i)
                .collect();
            let bad = if covering.len() >= 2 {
                Some(BijectivityWitness::OverlappingImages {
                    first: covering[0],
                    second: Some(covering[1]),
                    at: region.clone(),
                })
            } else if !in_source && covering.len() == 1 {
                Some(BijectivityWitness::OverlappingImages {
                    first: covering[0],
                    second: None,
                    at: region.clone(),
                })
            } else if in_source && covering.is_empty() {
                Some(BijectivityWitness::UncoveredSource { at: region.clone() })
            } else {
                None
            };
            if let Some(wit) = bad {
                witness = Some(wit);
                break;
            }
        }
        Ok(BijectivityCertificate {
            verdict: witness.is_none(),
            cells,
            images,
            witness,
        })
    }

    /// Pushforward density ρ_g of Haar measure under the point map:
    /// Σ_k |a_k|_p·1_{C_k} + 1 on the untouched complement, overlapping
    /// contributions summing. Exact rational step function, default 1.
    pub fn pushforward_density(&self) -> Result<StepFn> {
        let cells = self.cells()?;
        let prime = self.prime();
        // 1 outside the union of source cells, 0 on it.
        let source_zero: Vec<(Region, Scalar)> = cells
            .iter()
            .map(|c| (c.region.clone(), Scalar::zero()))
            .collect();
        let mut rho = StepFn::from_pieces(prime, source_zero, Scalar::one())?;
        for c in &cells {
            let image = c.region.affine_image(&c.scale, &c.shift)?;
            let weight = norm(prime, &c.scale);
            rho = rho.add(&StepFn::bump(image, weight, Scalar::zero()));
        }
        Ok(rho)
    }

    /// ∫ (1 − ρ_g) dm, exact; zero for every element.
    pub fn mass_defect(&self) -> Result<Scalar> {
        let rho = self.pushforward_density()?;
        let one = StepFn::constant(self.prime(), Scalar::one());
        one.sub(&rho).integrate()
    }

    /// ∫ |ρ_g − 1| dm, exact; finite by bounded support.
    pub fn rn_integrability(&self) -> Result<Scalar> {
        let rho = self.pushforward_density()?;
        let one = StepFn::constant(self.prime(), Scalar::one());
        rho.sub(&one).abs().integrate()
    }

    /// Smallest K with every cell and image inside B(0, K).
    pub fn enclosing_level(&self) -> Result<Option<i64>> {
        let cells = self.cells()?;
        let mut level: Option<i64> = None;
        for c in &cells {
            let image = c.region.affine_image(&c.scale, &c.shift)?;
            for l in [c.region.enclosing_level(), image.enclosing_level()] {
                level = Some(level.map_or(l, |cur| cur.max(l)));
            }
        }
        Ok(level)
    }

    /// Finest ball level among cells and images.
    pub fn finest_level(&self) -> Result<Option<i64>> {
        let cells = self.cells()?;
        let mut level: Option<i64> = None;
        for c in &cells {
            let image = c.region.affine_image(&c.scale, &c.shift)?;
            for l in [c.region.finest_level(), image.finest_level()] {
                level = Some(level.map_or(l, |cur| cur.min(l)));
            }
        }
        Ok(level)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "prime": self.prime().get(),
            "a": self.scale.to_json(),
            "b": self.shift.to_json(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let p = v
            .get("prime")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::invalid_input("element missing prime"))?;
        let prime = Prime::new(p as u32)?;
        let scale = StepFn::from_json(
            prime,
            v.get("a")
                .ok_or_else(|| Error::invalid_input("element missing scale 'a'"))?,
        )?;
        let shift = StepFn::from_json(
            prime,
            v.get("b")
                .ok_or_else(|| Error::invalid_input("element missing shift 'b'"))?,
        )?;
        AffineElement::new(scale, shift)
    }
}

/// The two sides of ∫ f(gx) dm = ∫ f·ρ_g dm as exact rationals. The
/// identity holds for every element; exposed for the check harness.
pub fn change_of_variables_sides(g: &AffineElement, f: &StepFn) -> Result<(Scalar, Scalar)> {
    let lhs = g.pullback(f)?.integrate()?;
    let rhs = f.mul(&g.pushforward_density()?).integrate()?;
    Ok((lhs, rhs))
}
