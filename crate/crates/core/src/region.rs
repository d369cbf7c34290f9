//! Ultrametric ball geometry with exact Haar measure.
//!
//! A ball of level k is {x : v_p(x − c) ≥ −k}, i.e. c + p^{-k}·Z_p, with
//! Haar measure p^k under the normalization m(unit ball) = 1. Two balls
//! are always nested or disjoint; this dichotomy makes every set operation
//! used by the lab decidable. Regions are balls with finitely many
//! pairwise-disjoint proper sub-balls removed ("punctured balls"), which
//! keeps representations linear in the number of distinct balls instead of
//! exploding into p^Δ pieces on refinement.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::padic::{truncate_digits, valuation, Prime, Valuation};
use crate::scalar::{prime_power, Scalar};

/// A clopen ball of the base field, with canonically reduced center.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ball {
    prime: Prime,
    center: Scalar,
    level: i64,
}

/// Exact classification of a pair of balls; partial overlap cannot occur.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Disjoint,
    Equal,
    FirstInsideSecond,
    SecondInsideFirst,
}

impl Ball {
    /// Ball of radius p^level around `center`. The stored center is the
    /// canonical digit truncation, so structural equality coincides with
    /// set equality.
    pub fn new(prime: Prime, center: &Scalar, level: i64) -> Self {
        Ball {
            prime,
            center: truncate_digits(prime, center, -level),
            level,
        }
    }

    /// The unit ball Z_p scaled to level k around zero.
    pub fn centered(prime: Prime, level: i64) -> Self {
        Ball {
            prime,
            center: Scalar::zero(),
            level,
        }
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn center(&self) -> &Scalar {
        &self.center
    }

    pub fn level(&self) -> i64 {
        self.level
    }

    pub fn measure(&self) -> Scalar {
        prime_power(self.prime.get(), self.level)
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        valuation(self.prime, &(x - &self.center)).at_least(-self.level)
    }

    /// Exact ball dichotomy.
    pub fn relate(&self, other: &Ball) -> Result<Relation> {
        self.prime.same_as(other.prime)?;
        let sep = valuation(self.prime, &(&self.center - &other.center));
        Ok(match self.level.cmp(&other.level) {
            Ordering::Equal => {
                if sep.at_least(-self.level) {
                    Relation::Equal
                } else {
                    Relation::Disjoint
                }
            }
            Ordering::Less => {
                if sep.at_least(-other.level) {
                    Relation::FirstInsideSecond
                } else {
                    Relation::Disjoint
                }
            }
            Ordering::Greater => {
                if sep.at_least(-self.level) {
                    Relation::SecondInsideFirst
                } else {
                    Relation::Disjoint
                }
            }
        })
    }

    pub fn is_subset_of(&self, other: &Ball) -> Result<bool> {
        Ok(matches!(
            self.relate(other)?,
            Relation::Equal | Relation::FirstInsideSecond
        ))
    }

    /// The p disjoint children of level k−1 tiling this ball.
    pub fn split(&self) -> Vec<Ball> {
        let p = self.prime.get();
        (0..p)
            .map(|d| Ball {
                prime: self.prime,
                center: &self.center
                    + Scalar::from(BigInt::from(d)) * prime_power(p, -self.level),
                level: self.level - 1,
            })
            .collect()
    }

    /// Image under x ↦ (x + shift) / scale: the ball of level
    /// k + v_p(scale) around (center + shift)/scale.
    pub fn affine_image(&self, scale: &Scalar, shift: &Scalar) -> Result<Ball> {
        let v = match valuation(self.prime, scale) {
            Valuation::Infinite => return Err(Error::ZeroScale),
            Valuation::Finite(v) => v,
        };
        Ok(Ball::new(
            self.prime,
            &((&self.center + shift) / scale),
            self.level + v,
        ))
    }

    /// Image under the inverse map y ↦ scale·y − shift (preimage of
    /// `affine_image` with the same coefficients).
    pub fn affine_preimage(&self, scale: &Scalar, shift: &Scalar) -> Result<Ball> {
        let v = match valuation(self.prime, scale) {
            Valuation::Infinite => return Err(Error::ZeroScale),
            Valuation::Finite(v) => v,
        };
        Ok(Ball::new(
            self.prime,
            &(&self.center * scale - shift),
            self.level - v,
        ))
    }

    pub fn translate(&self, h: &Scalar) -> Ball {
        Ball::new(self.prime, &(&self.center + h), self.level)
    }

    /// Smallest K with this ball ⊆ B(0, K).
    pub fn enclosing_level(&self) -> i64 {
        match valuation(self.prime, &self.center) {
            Valuation::Infinite => self.level,
            Valuation::Finite(v) => self.level.max(-v),
        }
    }
}

impl PartialOrd for Ball {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ball {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.prime, self.level, &self.center).cmp(&(other.prime, other.level, &other.center))
    }
}

impl fmt::Display for Ball {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B({}, {})", self.center, self.level)
    }
}

/// A ball with pairwise-disjoint proper sub-balls excluded. Nonempty by
/// construction: a fully tiled puncture is rejected.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    base: Ball,
    holes: Vec<Ball>,
}

impl Region {
    pub fn ball(base: Ball) -> Region {
        Region {
            base,
            holes: Vec::new(),
        }
    }

    /// Punctured region. Holes are deduplicated and reduced to maximal
    /// ones; each must be a proper sub-ball of the base.
    pub fn new(base: Ball, holes: Vec<Ball>) -> Result<Region> {
        match Region::new_opt(base, holes)? {
            Some(r) => Ok(r),
            None => Err(Error::EmptyRegion),
        }
    }

    /// As `new`, but a fully punctured base yields `None` instead of an
    /// error. A hole covering the base also yields `None`.
    pub fn new_opt(base: Ball, holes: Vec<Ball>) -> Result<Option<Region>> {
        let mut kept: Vec<Ball> = Vec::new();
        for h in holes {
            base.prime.same_as(h.prime)?;
            match h.relate(&base)? {
                Relation::Disjoint => continue,
                Relation::Equal | Relation::SecondInsideFirst => return Ok(None),
                Relation::FirstInsideSecond => {}
            }
            let mut absorbed = false;
            kept.retain(|k| match h.relate(k).expect("same prime") {
                Relation::Equal | Relation::FirstInsideSecond => {
                    absorbed = true;
                    true
                }
                Relation::SecondInsideFirst => false,
                Relation::Disjoint => true,
            });
            if !absorbed {
                kept.push(h);
            }
        }
        let removed: Scalar = kept.iter().map(Ball::measure).sum();
        if removed == base.measure() {
            return Ok(None);
        }
        kept.sort();
        Ok(Some(Region { base, holes: kept }))
    }

    pub fn prime(&self) -> Prime {
        self.base.prime
    }

    pub fn base(&self) -> &Ball {
        &self.base
    }

    pub fn holes(&self) -> &[Ball] {
        &self.holes
    }

    pub fn is_ball(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn measure(&self) -> Scalar {
        let removed: Scalar = self.holes.iter().map(Ball::measure).sum();
        self.base.measure() - removed
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        self.base.contains(x) && !self.holes.iter().any(|h| h.contains(x))
    }

    /// Exact containment of a whole ball in this region.
    pub fn contains_ball(&self, b: &Ball) -> Result<bool> {
        if !b.is_subset_of(&self.base)? {
            return Ok(false);
        }
        for h in &self.holes {
            if !matches!(b.relate(h)?, Relation::Disjoint) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn translate(&self, h: &Scalar) -> Region {
        Region {
            base: self.base.translate(h),
            holes: self.holes.iter().map(|b| b.translate(h)).collect(),
        }
    }

    pub fn affine_image(&self, scale: &Scalar, shift: &Scalar) -> Result<Region> {
        let mut holes = Vec::with_capacity(self.holes.len());
        for h in &self.holes {
            holes.push(h.affine_image(scale, shift)?);
        }
        holes.sort();
        Ok(Region {
            base: self.base.affine_image(scale, shift)?,
            holes,
        })
    }

    /// A point of the region, chosen deterministically.
    pub fn witness(&self) -> Scalar {
        witness_in(&self.base, &self.holes)
    }

    pub fn enclosing_level(&self) -> i64 {
        self.base.enclosing_level()
    }

    /// Finest ball level appearing in the description.
    pub fn finest_level(&self) -> i64 {
        self.holes
            .iter()
            .map(Ball::level)
            .fold(self.base.level, i64::min)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base)?;
        for h in &self.holes {
            write!(f, " \\ {h}")?;
        }
        Ok(())
    }
}

/// Deterministic point in base ∖ ∪holes. Holes must be proper disjoint
/// sub-balls that do not tile the base.
fn witness_in(base: &Ball, holes: &[Ball]) -> Scalar {
    if holes.is_empty() {
        return base.center.clone();
    }
    for child in base.split() {
        let mut inside: Vec<Ball> = Vec::new();
        let mut is_hole = false;
        for h in holes {
            match h.relate(&child).expect("same prime") {
                Relation::Equal => {
                    is_hole = true;
                    break;
                }
                Relation::FirstInsideSecond => inside.push(h.clone()),
                _ => {}
            }
        }
        if is_hole {
            continue;
        }
        if inside.is_empty() {
            return child.center.clone();
        }
        let covered: Scalar = inside.iter().map(Ball::measure).sum();
        if covered < child.measure() {
            return witness_in(&child, &inside);
        }
    }
    unreachable!("holes tile the base; region invariant violated")
}

/// Containment forest over a finite set of balls. Atoms (a ball minus its
/// direct children) partition the union of all balls; on each atom every
/// function whose cell boundaries are drawn from the ball set is constant.
#[derive(Clone, Debug)]
pub struct BallForest {
    prime: Prime,
    nodes: Vec<ForestNode>,
    roots: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ForestNode {
    pub ball: Ball,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl BallForest {
    pub fn build(prime: Prime, balls: impl IntoIterator<Item = Ball>) -> Result<BallForest> {
        let mut set = BTreeSet::new();
        for b in balls {
            prime.same_as(b.prime)?;
            set.insert(b);
        }
        let mut sorted: Vec<Ball> = set.into_iter().collect();
        // Coarse balls first so parents are inserted before children.
        sorted.sort_by(|a, b| b.level.cmp(&a.level).then_with(|| a.center.cmp(&b.center)));

        let mut nodes: Vec<ForestNode> = Vec::with_capacity(sorted.len());
        let mut roots: Vec<usize> = Vec::new();
        for ball in sorted {
            let mut parent: Option<usize> = None;
            for (i, n) in nodes.iter().enumerate() {
                if ball.is_subset_of(&n.ball)? {
                    parent = match parent {
                        Some(j) if nodes[j].ball.level <= n.ball.level => Some(j),
                        _ => Some(i),
                    };
                }
            }
            let idx = nodes.len();
            match parent {
                Some(pi) => nodes[pi].children.push(idx),
                None => roots.push(idx),
            }
            nodes.push(ForestNode {
                ball,
                parent,
                children: Vec::new(),
            });
        }
        Ok(BallForest {
            prime,
            nodes,
            roots,
        })
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn nodes(&self) -> &[ForestNode] {
        &self.nodes
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// The atom at a node: its ball minus the direct children. `None`
    /// when the children tile the ball completely.
    pub fn atom(&self, idx: usize) -> Option<Region> {
        let n = &self.nodes[idx];
        let holes: Vec<Ball> = n.children.iter().map(|&c| self.nodes[c].ball.clone()).collect();
        let removed: Scalar = holes.iter().map(Ball::measure).sum();
        if removed == n.ball.measure() {
            return None;
        }
        let mut holes = holes;
        holes.sort();
        Some(Region {
            base: n.ball.clone(),
            holes,
        })
    }

    /// Atoms with deterministic witness points, in node order.
    pub fn atoms(&self) -> Vec<(usize, Region, Scalar)> {
        (0..self.nodes.len())
            .filter_map(|i| {
                self.atom(i).map(|r| {
                    let w = r.witness();
                    (i, r, w)
                })
            })
            .collect()
    }

    /// A point outside every ball of the forest.
    pub fn outside_witness(&self) -> Scalar {
        if self.roots.is_empty() {
            return Scalar::zero();
        }
        let k = self
            .roots
            .iter()
            .map(|&i| self.nodes[i].ball.enclosing_level())
            .max()
            .expect("nonempty roots");
        prime_power(self.prime.get(), -(k + 1))
    }
}

/// Exact test that the union of `sub` is contained in the union of `sup`.
pub fn regions_subset(prime: Prime, sub: &[Region], sup: &[Region]) -> Result<bool> {
    let balls = sub
        .iter()
        .chain(sup.iter())
        .flat_map(|r| std::iter::once(r.base.clone()).chain(r.holes.iter().cloned()));
    let forest = BallForest::build(prime, balls)?;
    for (_, _, w) in forest.atoms() {
        let in_sub = sub.iter().any(|r| r.contains(&w));
        if in_sub && !sup.iter().any(|r| r.contains(&w)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exact pairwise disjointness of a list of regions.
pub fn regions_disjoint(prime: Prime, regions: &[Region]) -> Result<bool> {
    let balls = regions
        .iter()
        .flat_map(|r| std::iter::once(r.base.clone()).chain(r.holes.iter().cloned()));
    let forest = BallForest::build(prime, balls)?;
    for (_, _, w) in forest.atoms() {
        if regions.iter().filter(|r| r.contains(&w)).count() > 1 {
            return Ok(false);
        }
    }
    Ok(true)
}
