//! Configurations and the Poisson measure with Haar intensity.
//!
//! Sampling follows the standard two-stage recipe: a Poisson count with
//! mean equal to the window mass, then independent Haar-uniform points.
//! The count is the single float ingress on the sampling path (the
//! inverse CDF needs e^{-λ}); region choice and point digits are exact
//! integer draws. Expectations of multiplicative functionals are computed
//! through their exact rational exponents: E ∏_{x∈γ} φ(x) =
//! exp(∫(φ−1)dm), so analytic identities become decidable equalities of
//! rationals.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::affine::AffineElement;
use crate::error::{Error, Result};
use crate::padic::Prime;
use crate::region::{regions_disjoint, Ball, Region};
use crate::rng::SplitMix64;
use crate::sampling::{sample_region_uniform, SamplePoint};
use crate::scalar::{format_rational, to_f64, Scalar};
use crate::step::StepFn;

/// Guard digits below the finest structural level when sampling.
const GUARD_DIGITS: i64 = 2;

/// Anything that occupies bounded room in the base field and can vote on
/// the window and sampling resolution of a scenario.
pub enum ScenarioObject<'a> {
    Step(&'a StepFn),
    Element(&'a AffineElement),
    Window(&'a Region),
}

impl ScenarioObject<'_> {
    fn levels(&self) -> Result<(Option<i64>, Option<i64>)> {
        Ok(match self {
            ScenarioObject::Step(f) => (f.enclosing_level(), f.finest_level()),
            ScenarioObject::Element(g) => (g.enclosing_level()?, g.finest_level()?),
            ScenarioObject::Window(r) => (Some(r.enclosing_level()), Some(r.finest_level())),
        })
    }
}

/// A finite volume: disjoint regions with positive total mass, plus the
/// digit resolution to use when sampling points in it.
#[derive(Clone, Debug)]
pub struct WindowSpec {
    prime: Prime,
    regions: Vec<Region>,
    total_mass: Scalar,
    resolution: i64,
}

impl WindowSpec {
    pub fn new(prime: Prime, regions: Vec<Region>, resolution: i64) -> Result<Self> {
        for r in &regions {
            prime.same_as(r.prime())?;
        }
        if !regions_disjoint(prime, &regions)? {
            return Err(Error::InvalidRegion("window regions overlap".into()));
        }
        let total_mass: Scalar = regions.iter().map(Region::measure).sum();
        if !total_mass.is_positive() {
            return Err(Error::EmptyRegion);
        }
        Ok(WindowSpec {
            prime,
            regions,
            total_mass,
            resolution,
        })
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn total_mass(&self) -> &Scalar {
        &self.total_mass
    }

    pub fn resolution(&self) -> i64 {
        self.resolution
    }
}

/// Smallest ball B(0, K) containing every support, cell and image cell of
/// the listed objects, with sampling resolution two guard digits below
/// their finest structural level.
pub fn window_for(prime: Prime, objects: &[ScenarioObject<'_>]) -> Result<WindowSpec> {
    if objects.is_empty() {
        return Err(Error::EmptyScenario);
    }
    let mut outer: Option<i64> = None;
    let mut finest: Option<i64> = None;
    for o in objects {
        let (enc, fin) = o.levels()?;
        if let Some(k) = enc {
            outer = Some(outer.map_or(k, |cur| cur.max(k)));
        }
        if let Some(l) = fin {
            finest = Some(finest.map_or(l, |cur| cur.min(l)));
        }
    }
    // Trivial objects (constants, the identity) still get the unit ball.
    let outer = outer.unwrap_or(0);
    let finest = finest.unwrap_or(outer).min(outer);
    WindowSpec::new(
        prime,
        vec![Region::ball(Ball::centered(prime, outer))],
        finest - GUARD_DIGITS,
    )
}

/// A finite multiset of points, sorted canonically. Sampled
/// configurations live in their window; pushforwards may leave it and
/// may carry multiplicity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    points: Vec<SamplePoint>,
    window: Vec<Region>,
}

impl Configuration {
    pub fn new(mut points: Vec<SamplePoint>, window: Vec<Region>) -> Self {
        points.sort();
        Configuration { points, window }
    }

    pub fn from_scalars(points: Vec<Scalar>) -> Self {
        Configuration::new(points.into_iter().map(SamplePoint::exact).collect(), vec![])
    }

    pub fn empty() -> Self {
        Configuration {
            points: Vec::new(),
            window: Vec::new(),
        }
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    pub fn window(&self) -> &[Region] {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// JSON array of canonical rational strings, one per point with
    /// multiplicity.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.points
                .iter()
                .map(|p| serde_json::Value::String(format_rational(p.value())))
                .collect(),
        )
    }
}

/// Poisson count via inverse CDF; the one float conversion on the
/// sampling path.
fn poisson_count(mean: f64, rng: &mut SplitMix64) -> u64 {
    let u = rng.next_f64();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    let cap = (mean + 20.0 * mean.sqrt() + 50.0) as u64;
    while u >= cdf && k < cap {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

/// Draw a configuration of the Poisson process with intensity m on the
/// window: N ~ Poisson(total mass), then each point in a region chosen
/// with exact probability measure/total and Haar-uniform inside it.
pub fn sample_configuration(window: &WindowSpec, rng: &mut SplitMix64) -> Result<Configuration> {
    let n = poisson_count(to_f64(window.total_mass()), rng);
    // Integer region weights on the common denominator.
    let mut denom = BigInt::one();
    for r in &window.regions {
        denom = denom.lcm(r.measure().denom());
    }
    let weights: Vec<u64> = window
        .regions
        .iter()
        .map(|r| {
            (r.measure() * Scalar::from(denom.clone()))
                .to_integer()
                .to_u64()
                .expect("window weight fits in u64")
        })
        .collect();
    let total: u64 = weights.iter().sum();
    let mut points = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut t = rng.below(total);
        let mut chosen = window.regions.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if t < *w {
                chosen = i;
                break;
            }
            t -= w;
        }
        points.push(sample_region_uniform(
            &window.regions[chosen],
            window.resolution,
            rng,
        )?);
    }
    Ok(Configuration::new(points, window.regions.clone()))
}

/// ⟨f, γ⟩ = Σ_{x∈γ} f(x), with multiplicity, exact.
pub fn pairing(f: &StepFn, gamma: &Configuration) -> Result<Scalar> {
    let mut acc = Scalar::zero();
    for pt in &gamma.points {
        acc += f.evaluate_sample(pt)?;
    }
    Ok(acc)
}

/// ∏_{x∈γ} φ(x), with multiplicity, exact.
pub fn multiplicative_pairing(phi: &StepFn, gamma: &Configuration) -> Result<Scalar> {
    let mut acc = Scalar::one();
    for pt in &gamma.points {
        acc *= phi.evaluate_sample(pt)?;
    }
    Ok(acc)
}

/// gγ = Σ_{x∈γ} δ_{gx}: image multiset under the point motion;
/// multiplicities add when points collide.
pub fn push_configuration(g: &AffineElement, gamma: &Configuration) -> Result<Configuration> {
    let mut points = Vec::with_capacity(gamma.points.len());
    for pt in &gamma.points {
        points.push(g.act_sample(pt)?);
    }
    Ok(Configuration::new(points, gamma.window.clone()))
}

fn require_multiplicative(phi: &StepFn) -> Result<()> {
    if !phi.default_value().is_one() {
        return Err(Error::invalid_input(
            "multiplicative functional must default to 1",
        ));
    }
    if !phi.is_nonnegative() {
        return Err(Error::NegativeValue(format!(
            "multiplicative functional has a negative value: {phi:?}"
        )));
    }
    Ok(())
}

/// E_{π_m} ∏_{x∈γ} φ(x) through its exact exponent:
/// (∫(φ−1)dm, exp of it as float).
pub fn laplace_exact(phi: &StepFn) -> Result<(Scalar, f64)> {
    require_multiplicative(phi)?;
    let one = StepFn::constant(phi.prime(), Scalar::one());
    let exponent = phi.sub(&one).integrate()?;
    let value = to_f64(&exponent).exp();
    Ok((exponent, value))
}

/// E_{π_{ρm}} ∏_{x∈γ} φ(x): exponent ∫(φ−1)·ρ dm, exact.
pub fn laplace_exact_wrt(phi: &StepFn, rho: &StepFn) -> Result<(Scalar, f64)> {
    require_multiplicative(phi)?;
    if !rho.default_value().is_one() || !rho.is_nonnegative() {
        return Err(Error::invalid_input(
            "density must be nonnegative with default 1",
        ));
    }
    let one = StepFn::constant(phi.prime(), Scalar::one());
    let exponent = phi.sub(&one).mul(rho).integrate()?;
    let value = to_f64(&exponent).exp();
    Ok((exponent, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat_i64, rat_int};

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn rball(center: i64, level: i64) -> Region {
        Region::ball(Ball::new(p3(), &rat_int(center), level))
    }

    #[test]
    fn window_for_single_step() {
        let f = StepFn::indicator(rball(0, 0));
        let w = window_for(p3(), &[ScenarioObject::Step(&f)]).unwrap();
        assert_eq!(w.regions(), &[rball(0, 0)]);
        assert_eq!(w.total_mass(), &rat_int(1));
        assert_eq!(w.resolution(), -2);
    }

    #[test]
    fn window_for_covers_images() {
        // Scaling by 3 on B(0,0) has image B(0,1).
        let f = StepFn::indicator(rball(0, 0));
        let g = AffineElement::scaling(rball(0, 0), rat_int(3)).unwrap();
        let w = window_for(
            p3(),
            &[ScenarioObject::Step(&f), ScenarioObject::Element(&g)],
        )
        .unwrap();
        assert_eq!(w.regions(), &[rball(0, 1)]);
    }

    #[test]
    fn window_for_empty_errors() {
        assert!(matches!(
            window_for(p3(), &[]),
            Err(Error::EmptyScenario)
        ));
    }

    #[test]
    fn poisson_count_mean_within_4_sigma() {
        let w = WindowSpec::new(p3(), vec![rball(0, 0)], -3).unwrap();
        let mut rng = SplitMix64::lane(7, 0);
        let n = 100_000u64;
        let mut total = 0u64;
        for _ in 0..n {
            total += sample_configuration(&w, &mut rng).unwrap().len() as u64;
        }
        let mean = total as f64 / n as f64;
        // Poisson(1): sd = 1.
        let sigma = (1.0f64 / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 4.0 * sigma, "mean {mean}");
    }

    #[test]
    fn pair_correlation_factorizes() {
        // E <1_A,γ><1_B,γ> = m(A)·m(B) for disjoint A, B.
        let w = WindowSpec::new(p3(), vec![rball(0, 1)], -3).unwrap();
        let fa = StepFn::indicator(rball(0, 0));
        // Sibling coset of Z_3 inside B(0,1): centered at 1/3.
        let fb = StepFn::indicator(Region::ball(Ball::new(p3(), &rat_i64(1, 3), 0)));
        let mut rng = SplitMix64::lane(11, 3);
        let n = 100_000u64;
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for _ in 0..n {
            let gamma = sample_configuration(&w, &mut rng).unwrap();
            let x = to_f64(&(pairing(&fa, &gamma).unwrap() * pairing(&fb, &gamma).unwrap()));
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let stderr = (var / n as f64).sqrt();
        assert!(
            (mean - 1.0).abs() <= 4.0 * stderr,
            "mean {mean}, stderr {stderr}"
        );
    }

    #[test]
    fn sampling_is_reproducible() {
        let w = WindowSpec::new(p3(), vec![rball(0, 1)], -3).unwrap();
        let mut a = SplitMix64::lane(5, 1);
        let mut b = SplitMix64::lane(5, 1);
        for _ in 0..100 {
            assert_eq!(
                sample_configuration(&w, &mut a).unwrap(),
                sample_configuration(&w, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn pairing_examples() {
        let f = StepFn::indicator(rball(0, 0));
        assert_eq!(pairing(&f, &Configuration::empty()).unwrap(), rat_int(0));
        let gamma =
            Configuration::from_scalars(vec![rat_int(0), rat_int(9), rat_i64(1, 3)]);
        assert_eq!(pairing(&f, &gamma).unwrap(), rat_int(2));
    }

    #[test]
    fn pairing_duality_with_pushforward() {
        // <f, gγ> = <gf, γ> for a mix of elements and configurations.
        let f = StepFn::from_pieces(
            p3(),
            vec![(rball(0, 0), rat_int(2)), (rball(2, -1), rat_int(-3))],
            rat_int(0),
        )
        .unwrap();
        let elements = vec![
            AffineElement::translation(rball(0, -1), rat_int(1)),
            AffineElement::swap(rball(0, -1), rball(1, -1)).unwrap(),
            AffineElement::scaling(rball(0, 0), rat_int(3)).unwrap(),
        ];
        let gamma = Configuration::from_scalars(vec![
            rat_int(0),
            rat_int(1),
            rat_int(4),
            rat_i64(1, 3),
        ]);
        for g in &elements {
            let lhs = pairing(&f, &push_configuration(g, &gamma).unwrap()).unwrap();
            let rhs = pairing(&g.pullback(&f).unwrap(), &gamma).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn push_configuration_examples() {
        let gamma = Configuration::from_scalars(vec![rat_int(0), rat_int(1)]);
        let e = AffineElement::identity(p3());
        assert_eq!(push_configuration(&e, &gamma).unwrap(), gamma);
        // Non-bijective translation folds both points onto 1.
        let g = AffineElement::translation(rball(0, -1), rat_int(1));
        let folded = push_configuration(&g, &gamma).unwrap();
        assert_eq!(folded.len(), 2);
        assert_eq!(folded.points()[0].value(), &rat_int(1));
        assert_eq!(folded.points()[1].value(), &rat_int(1));
        // A swap permutes the configuration.
        let s = AffineElement::swap(rball(0, -1), rball(1, -1)).unwrap();
        assert_eq!(push_configuration(&s, &gamma).unwrap(), gamma);
    }

    #[test]
    fn laplace_exponents() {
        let phi = StepFn::bump(rball(0, 0), rat_int(2), rat_int(1));
        let (expo, value) = laplace_exact(&phi).unwrap();
        assert_eq!(expo, rat_int(1));
        assert!((value - std::f64::consts::E).abs() < 1e-12);
        let one = StepFn::constant(p3(), rat_int(1));
        assert_eq!(laplace_exact(&one).unwrap().0, rat_int(0));
        let void = StepFn::bump(rball(0, 0), rat_int(0), rat_int(1));
        assert_eq!(laplace_exact(&void).unwrap().0, rat_int(-1));
        let neg = StepFn::bump(rball(0, 0), rat_int(-1), rat_int(1));
        assert!(laplace_exact(&neg).is_err());
    }

    #[test]
    fn laplace_with_density() {
        let phi = StepFn::bump(rball(0, 0), rat_int(2), rat_int(1));
        let one = StepFn::constant(p3(), rat_int(1));
        assert_eq!(
            laplace_exact_wrt(&phi, &one).unwrap().0,
            laplace_exact(&phi).unwrap().0
        );
        let g = AffineElement::scaling(rball(0, 0), rat_int(3)).unwrap();
        let rho = g.pushforward_density().unwrap();
        assert_eq!(laplace_exact_wrt(&phi, &rho).unwrap().0, rat_i64(1, 3));
        // φ−1 supported where the density vanishes contributes nothing.
        let t = AffineElement::translation(rball(0, -1), rat_int(1));
        let rho_t = t.pushforward_density().unwrap();
        let phi_dead = StepFn::bump(rball(0, -1), rat_int(5), rat_int(1));
        assert_eq!(laplace_exact_wrt(&phi_dead, &rho_t).unwrap().0, rat_int(0));
    }

    #[test]
    fn independence_over_disjoint_supports() {
        // ∫((φ1·φ2)−1) = ∫(φ1−1) + ∫(φ2−1) when supports are disjoint.
        let phi1 = StepFn::bump(rball(0, -1), rat_int(2), rat_int(1));
        let phi2 = StepFn::bump(rball(1, -1), rat_int(3), rat_int(1));
        let prod = phi1.mul(&phi2);
        assert_eq!(
            laplace_exact(&prod).unwrap().0,
            laplace_exact(&phi1).unwrap().0 + laplace_exact(&phi2).unwrap().0
        );
    }
}
