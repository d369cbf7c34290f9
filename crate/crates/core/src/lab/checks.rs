//! Machine checks for every verified claim, plus the registry of
//! expected divergences.
//!
//! Exact checks compare two independently computed rationals (e.g. the
//! pullback-integral route against the density route) and store both
//! sides. Monte Carlo checks compare a paired estimator against its
//! closed-form target at 4σ. Checks that exercise a claim's literal
//! hypotheses where exact computation refutes them return the
//! "documented-fail" outcome with machine-checkable witness data.

use std::time::Instant;

use num_traits::{One, Zero};

use crate::affine::{change_of_variables_sides, AffineElement, InverseMode, ProductMode};
use crate::error::{Error, Result};
use crate::padic::Prime;
use crate::poisson::{
    laplace_exact, laplace_exact_wrt, sample_configuration, window_for, ScenarioObject,
    WindowSpec,
};
use crate::region::{regions_disjoint, regions_subset, Ball, Region};
use crate::rng::SplitMix64;
use crate::scalar::{format_rational, prime_power, rat_int, to_f64, Scalar};
use crate::step::{region_to_json, StepFn};

use super::{digest, CheckKind, CheckRecord, Outcome, Suite, MC_SIGMA};

/// Shared identity of a batch of checks: which suite, prime and seed the
/// records belong to.
#[derive(Clone, Copy, Debug)]
pub struct CheckCtx {
    pub suite: Suite,
    pub prime: Prime,
    pub seed: u64,
}

impl CheckCtx {
    pub fn new(suite: Suite, prime: Prime, seed: u64) -> Self {
        CheckCtx { suite, prime, seed }
    }

    fn base(&self, check: &str, idx: usize, kind: CheckKind, inputs_digest: String) -> CheckRecord {
        CheckRecord {
            id: format!("{}/{}/p{}/{:04}", self.suite.name(), check, self.prime, idx),
            check: check.to_string(),
            suite: self.suite.name().to_string(),
            prime: self.prime.get(),
            seed: self.seed,
            kind,
            outcome: Outcome::Pass,
            product_mode: None,
            inverse_mode: None,
            inputs_digest,
            lhs: None,
            rhs: None,
            mean: None,
            stderr: None,
            n: None,
            target: None,
            witness: None,
            runtime_ms: 0,
        }
    }

    fn exact(
        &self,
        check: &str,
        idx: usize,
        inputs: &[serde_json::Value],
        lhs: &Scalar,
        rhs: &Scalar,
        expect_fail: bool,
    ) -> CheckRecord {
        let mut rec = self.base(check, idx, CheckKind::Exact, digest(inputs));
        rec.lhs = Some(format_rational(lhs));
        rec.rhs = Some(format_rational(rhs));
        rec.outcome = if lhs == rhs {
            Outcome::Pass
        } else if expect_fail {
            Outcome::DocumentedFail
        } else {
            Outcome::Fail
        };
        rec
    }

    #[allow(clippy::too_many_arguments)]
    fn mc(
        &self,
        check: &str,
        idx: usize,
        inputs: &[serde_json::Value],
        mean: f64,
        stderr: f64,
        n: u64,
        target: f64,
    ) -> CheckRecord {
        let mut rec = self.base(check, idx, CheckKind::Mc, digest(inputs));
        rec.mean = Some(mean);
        rec.stderr = Some(stderr);
        rec.n = Some(n);
        rec.target = Some(target);
        rec.outcome = if (mean - target).abs() <= MC_SIGMA * stderr + 1e-12 {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        rec
    }
}

fn finish(mut rec: CheckRecord, started: Instant) -> CheckRecord {
    rec.runtime_ms = started.elapsed().as_millis() as u64;
    rec
}

/// ∫ f(gx) dm = ∫ f·ρ_g dm, exact, for any element.
pub fn check_change_of_variables(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
    f: &StepFn,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let (lhs, rhs) = change_of_variables_sides(g, f)?;
    let rec = ctx.exact(
        "change_of_variables",
        idx,
        &[g.to_json(), f.to_json()],
        &lhs,
        &rhs,
        false,
    );
    Ok(finish(rec, started))
}

/// ∫ (1 − ρ_g) dm = 0, exact, for any element.
pub fn check_mass_defect(ctx: &CheckCtx, idx: usize, g: &AffineElement) -> Result<CheckRecord> {
    let started = Instant::now();
    let defect = g.mass_defect()?;
    let rec = ctx.exact(
        "mass_defect",
        idx,
        &[g.to_json()],
        &defect,
        &Scalar::zero(),
        false,
    );
    Ok(finish(rec, started))
}

/// Exponent form of ∫ V_g F dπ_m = ∫ F dπ_{g*m}:
/// ∫((gφ)−1) dm = ∫(φ−1)·ρ_g dm, exact.
pub fn check_pushforward_lemma(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
    phi: &StepFn,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let moved = g.pullback(phi)?;
    let (lhs, _) = laplace_exact(&moved)?;
    let rho = g.pushforward_density()?;
    let (rhs, _) = laplace_exact_wrt(phi, &rho)?;
    let rec = ctx.exact(
        "pushforward_lemma",
        idx,
        &[g.to_json(), phi.to_json()],
        &lhs,
        &rhs,
        false,
    );
    Ok(finish(rec, started))
}

/// Monte Carlo cross-check of the same lemma: the empirical mean of
/// ∏(gφ)(x) over π_m must sit within 4σ of exp(exact exponent).
pub fn check_pushforward_lemma_mc(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
    phi: &StepFn,
    n: u64,
    seed: u64,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let moved = g.pullback(phi)?;
    let (exponent, target) = laplace_exact(&moved)?;
    let f = crate::rep::ConfigFunction::multiplicative(moved, Scalar::one())?;
    let (mean, stderr, total) = match f.expectation_mc(n, seed)? {
        crate::rep::ExpectationResult::MonteCarlo {
            mean_re, stderr, n, ..
        } => (mean_re, stderr, n),
        _ => unreachable!(),
    };
    let mut rec = ctx.mc(
        "pushforward_lemma_mc",
        idx,
        &[g.to_json(), phi.to_json()],
        mean,
        stderr,
        total,
        target,
    );
    rec.lhs = Some(format_rational(&exponent));
    Ok(finish(rec, started))
}

/// supp(gf) ⊆ Λ−h for g = (1, h·1_B) and supp f ⊆ Λ ⊆ B; exact region
/// containment.
pub fn check_support_shift(
    ctx: &CheckCtx,
    idx: usize,
    carrier: &Region,
    h: &Scalar,
    lambda: &Region,
    f: &StepFn,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let prime = ctx.prime;
    if !regions_subset(prime, std::slice::from_ref(lambda), std::slice::from_ref(carrier))? {
        return Err(Error::invalid_input("support shift requires Λ ⊆ B"));
    }
    if !regions_subset(prime, &f.support(), std::slice::from_ref(lambda))? {
        return Err(Error::invalid_input("support shift requires supp f ⊆ Λ"));
    }
    let g = AffineElement::translation(carrier.clone(), h.clone());
    let moved = g.pullback(f)?;
    let shifted = lambda.translate(&-h.clone());
    let contained = regions_subset(prime, &moved.support(), std::slice::from_ref(&shifted))?;
    let mut rec = ctx.base(
        "support_shift",
        idx,
        CheckKind::Exact,
        digest(&[g.to_json(), f.to_json(), region_to_json(lambda)]),
    );
    rec.outcome = if contained { Outcome::Pass } else { Outcome::Fail };
    rec.witness = Some(
        serde_json::json!({
            "target": region_to_json(&shifted),
            "moved_support": moved.support().iter().map(region_to_json).collect::<Vec<_>>(),
        })
        .to_string(),
    );
    Ok(finish(rec, started))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HypothesisMode {
    /// The claim's literal hypothesis: Λ ∩ (B+h) = ∅.
    Literal,
    /// Strengthened: Λ ∩ (B+h) = ∅ and Λ ∩ B = ∅.
    Strengthened,
}

/// E[V_g F] = E[F] for exponential F supported in Λ and g = (1, h·1_B),
/// compared through exact exponents. Under the literal hypothesis alone
/// this can fail (the density also vanishes on B); such instances are
/// recorded as documented-fail.
pub fn check_invariance(
    ctx: &CheckCtx,
    idx: usize,
    carrier: &Region,
    h: &Scalar,
    lambda: &Region,
    phi: &StepFn,
    mode: HypothesisMode,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let prime = ctx.prime;
    let moved_carrier = carrier.translate(h);
    if !regions_disjoint(prime, &[lambda.clone(), moved_carrier.clone()])? {
        return Err(Error::invalid_input("invariance requires Λ ∩ (B+h) = ∅"));
    }
    if mode == HypothesisMode::Strengthened
        && !regions_disjoint(prime, &[lambda.clone(), carrier.clone()])?
    {
        return Err(Error::invalid_input(
            "strengthened invariance requires Λ ∩ B = ∅",
        ));
    }
    if !regions_subset(prime, &phi.support(), std::slice::from_ref(lambda))? {
        return Err(Error::invalid_input("invariance requires supp(φ−1) ⊆ Λ"));
    }
    let g = AffineElement::translation(carrier.clone(), h.clone());
    let moved = g.pullback(phi)?;
    let (lhs, _) = laplace_exact(&moved)?;
    let (rhs, _) = laplace_exact(phi)?;
    let mut rec = ctx.exact(
        "invariance",
        idx,
        &[g.to_json(), phi.to_json(), region_to_json(lambda)],
        &lhs,
        &rhs,
        mode == HypothesisMode::Literal,
    );
    rec.witness = Some(
        serde_json::json!({
            "hypothesis": match mode {
                HypothesisMode::Literal => "literal",
                HypothesisMode::Strengthened => "strengthened",
            },
            "carrier": region_to_json(carrier),
            "shift": format_rational(h),
        })
        .to_string(),
    );
    Ok(finish(rec, started))
}

/// Separator element for two finite volumes, with its exactly certified
/// guarantees.
#[derive(Clone, Debug)]
pub struct SeparatorCertificate {
    pub element: AffineElement,
    pub carrier: Region,
    pub shift: Scalar,
    pub shifted_target: Vec<Region>,
    pub carrier_contains_target: bool,
    pub carrier_contains_shifted: bool,
    pub shifted_clear_of_both: bool,
    pub bijective: bool,
}

impl SeparatorCertificate {
    pub fn ok(&self) -> bool {
        self.carrier_contains_target
            && self.carrier_contains_shifted
            && self.shifted_clear_of_both
            && self.bijective
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "carrier": region_to_json(&self.carrier),
            "shift": format_rational(&self.shift),
            "carrier_contains_target": self.carrier_contains_target,
            "carrier_contains_shifted": self.carrier_contains_shifted,
            "shifted_clear_of_both": self.shifted_clear_of_both,
            "bijective": self.bijective,
        })
    }
}

/// g = (1, h·1_B) decorrelating two finite volumes: B = B(0, K) with
/// |h|_p = p^K one level above both volumes, so that the shifted second
/// volume is ultrametrically clear of both. In-ball by construction,
/// hence a certified bijection.
pub fn find_separator(
    prime: Prime,
    first: &[Region],
    second: &[Region],
) -> Result<SeparatorCertificate> {
    if first.is_empty() || second.is_empty() {
        return Err(Error::EmptyScenario);
    }
    let enclosing = |rs: &[Region]| {
        rs.iter()
            .map(Region::enclosing_level)
            .max()
            .expect("nonempty")
    };
    let k_sep = enclosing(first).max(enclosing(second)) + 1;
    let h = prime_power(prime.get(), -k_sep);
    let carrier = Region::ball(Ball::centered(prime, k_sep));
    let element = AffineElement::translation(carrier.clone(), h.clone());
    let shifted: Vec<Region> = second.iter().map(|r| r.translate(&-h.clone())).collect();
    let carrier_contains_target = regions_subset(prime, second, std::slice::from_ref(&carrier))?;
    let carrier_contains_shifted = regions_subset(prime, &shifted, std::slice::from_ref(&carrier))?;
    let mut clear = true;
    'outer: for s in &shifted {
        for t in first.iter().chain(second.iter()) {
            if !regions_disjoint(prime, &[s.clone(), t.clone()])? {
                clear = false;
                break 'outer;
            }
        }
    }
    let bijective = element.is_bijective()?.verdict;
    Ok(SeparatorCertificate {
        element,
        carrier,
        shift: h,
        shifted_target: shifted,
        carrier_contains_target,
        carrier_contains_shifted,
        shifted_clear_of_both: clear,
        bijective,
    })
}

/// Standalone separator construction check over two finite volumes.
pub fn check_separator(
    ctx: &CheckCtx,
    idx: usize,
    first: &[Region],
    second: &[Region],
) -> Result<CheckRecord> {
    let started = Instant::now();
    let sep = find_separator(ctx.prime, first, second)?;
    let mut rec = ctx.base(
        "separator",
        idx,
        CheckKind::Exact,
        digest(&[
            serde_json::Value::Array(first.iter().map(region_to_json).collect()),
            serde_json::Value::Array(second.iter().map(region_to_json).collect()),
        ]),
    );
    rec.outcome = if sep.ok() { Outcome::Pass } else { Outcome::Fail };
    rec.witness = Some(sep.to_json().to_string());
    Ok(finish(rec, started))
}

/// Factorization through a separator: with g = find_separator(Λ1, Λ2),
/// ∫(φ1·(gφ2) − 1) dm = ∫(φ1−1) dm + ∫(φ2−1) dm exactly, and
/// E[V_g F2] = E[F2] exactly (in-ball translation invariance).
pub fn check_factorization(
    ctx: &CheckCtx,
    idx: usize,
    phi1: &StepFn,
    phi2: &StepFn,
) -> Result<CheckRecord> {
    let started = Instant::now();
    if phi1.support().is_empty() || phi2.support().is_empty() {
        // A constant functional factorizes against anything; the
        // identity element already decorrelates.
        let (lhs, _) = laplace_exact(&phi1.mul(phi2))?;
        let (e1, _) = laplace_exact(phi1)?;
        let (e2, _) = laplace_exact(phi2)?;
        let rhs = e1 + e2;
        let mut rec = ctx.exact(
            "factorization",
            idx,
            &[phi1.to_json(), phi2.to_json()],
            &lhs,
            &rhs,
            false,
        );
        rec.witness = Some(serde_json::json!({"separator": "identity"}).to_string());
        return Ok(finish(rec, started));
    }
    let sep = find_separator(ctx.prime, &phi1.support(), &phi2.support())?;
    let moved = sep.element.pullback(phi2)?;
    let (lhs, _) = laplace_exact(&phi1.mul(&moved))?;
    let (e1, _) = laplace_exact(phi1)?;
    let (e2, _) = laplace_exact(phi2)?;
    let rhs = &e1 + &e2;
    let (moved_expo, _) = laplace_exact(&moved)?;
    let translation_invariant = moved_expo == e2;
    let mut rec = ctx.exact(
        "factorization",
        idx,
        &[phi1.to_json(), phi2.to_json()],
        &lhs,
        &rhs,
        false,
    );
    if !translation_invariant || !sep.ok() {
        rec.outcome = Outcome::Fail;
    }
    rec.witness = Some(
        serde_json::json!({
            "separator": sep.to_json(),
            "translation_invariance": translation_invariant,
            // Exact equality implies the ergodicity bound
            // ∫ F1·V_gF2 ≥ ½·E[F1]E[F2] for positive functionals.
            "half_product_bound": lhs == rhs,
        })
        .to_string(),
    );
    Ok(finish(rec, started))
}

/// Exact isometry exponents: ∫(ρ_{g⁻¹}·(gφ)² − 1) dm = ∫(φ² − 1) dm.
/// With the pointwise inverse on non-bijective elements this fails;
/// callers mark those expected.
pub fn check_isometry(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
    phi: &StepFn,
    mode: InverseMode,
    expect_fail: bool,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let inv = g.inverse(mode)?;
    let rho_inv = inv.pushforward_density()?;
    let moved = g.pullback(phi)?;
    let one = StepFn::constant(ctx.prime, Scalar::one());
    let lhs = rho_inv.mul(&moved.square()).sub(&one).integrate()?;
    let rhs = phi.square().sub(&one).integrate()?;
    let mut rec = ctx.exact(
        "isometry",
        idx,
        &[g.to_json(), phi.to_json()],
        &lhs,
        &rhs,
        expect_fail,
    );
    rec.inverse_mode = Some(mode);
    Ok(finish(rec, started))
}

/// Paired Monte Carlo isometry check: E[|U_g F|² − |F|²] must contain 0
/// at 4σ, with both magnitudes evaluated exactly on the same samples.
pub fn check_isometry_mc(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
    phi: &StepFn,
    n: u64,
    seed: u64,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let f = crate::rep::ConfigFunction::multiplicative(phi.clone(), Scalar::one())?;
    let uf = f.apply_u(g, InverseMode::Motion)?;
    let mut objects = f.scenario_objects();
    objects.extend(uf.scenario_objects());
    objects.push(ScenarioObject::Element(g));
    let window = window_for(ctx.prime, &objects)?;
    let mut rng = SplitMix64::lane(seed, 17);
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    for _ in 0..n {
        let gamma = sample_configuration(&window, &mut rng)?;
        let a = uf.magnitude_squared(&gamma)?;
        let b = f.magnitude_squared(&gamma)?;
        let d = to_f64(&a.rational) * to_f64(&a.exponent).exp()
            - to_f64(&b.rational) * to_f64(&b.exponent).exp();
        sum += d;
        sumsq += d * d;
    }
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean * mean).max(0.0);
    let stderr = (var / n as f64).sqrt();
    let mut rec = ctx.mc(
        "isometry_mc",
        idx,
        &[g.to_json(), phi.to_json()],
        mean,
        stderr,
        n,
        0.0,
    );
    rec.inverse_mode = Some(InverseMode::Motion);
    Ok(finish(rec, started))
}

/// Operator composition of V: compares V_h(V_g F) against V of the
/// product element in both argument orders, on sampled configurations.
/// Under the motion product the reversed order matches exactly (the map
/// g ↦ V_g is an anti-homomorphism); under the pointwise product both
/// orders generically fail, which is recorded as documented-fail.
#[allow(clippy::too_many_arguments)]
pub fn check_composition(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
    h: &AffineElement,
    f: &crate::rep::ConfigFunction,
    mode: ProductMode,
    n_gamma: u64,
    seed: u64,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let composed = f.apply_v(g)?.apply_v(h)?;
    let literal_product = AffineElement::product(mode, h, g)?;
    let reversed_product = AffineElement::product(mode, g, h)?;
    let via_literal = f.apply_v(&literal_product)?;
    let via_reversed = f.apply_v(&reversed_product)?;

    let mut objects = f.scenario_objects();
    objects.extend(composed.scenario_objects());
    objects.extend(via_literal.scenario_objects());
    objects.extend(via_reversed.scenario_objects());
    objects.push(ScenarioObject::Element(g));
    objects.push(ScenarioObject::Element(h));
    let window = window_for(ctx.prime, &objects)?;

    let mut rng = SplitMix64::lane(seed, 23);
    let mut literal_ok = true;
    let mut reversed_ok = true;
    let mut first_mismatch: Option<serde_json::Value> = None;
    for _ in 0..n_gamma {
        let gamma = sample_configuration(&window, &mut rng)?;
        let lhs = composed.evaluate(&gamma)?;
        let p_ok = lhs == via_literal.evaluate(&gamma)?;
        let r_ok = lhs == via_reversed.evaluate(&gamma)?;
        if (!p_ok || !r_ok) && first_mismatch.is_none() {
            first_mismatch = Some(gamma.to_json());
        }
        literal_ok &= p_ok;
        reversed_ok &= r_ok;
    }
    let mut rec = ctx.base(
        "v_composition",
        idx,
        CheckKind::Exact,
        digest(&[g.to_json(), h.to_json(), f.to_json()]),
    );
    rec.product_mode = Some(mode);
    rec.n = Some(n_gamma);
    rec.outcome = if literal_ok || reversed_ok {
        Outcome::Pass
    } else if mode == ProductMode::Pointwise {
        Outcome::DocumentedFail
    } else {
        Outcome::Fail
    };
    rec.witness = Some(
        serde_json::json!({
            "literal_order_pass": literal_ok,
            "reversed_order_pass": reversed_ok,
            "first_mismatch_gamma": first_mismatch,
        })
        .to_string(),
    );
    Ok(finish(rec, started))
}

/// Representation property including the cocycle: squared magnitudes of
/// U_{g2} U_{g1} F against U of the motion product, on sampled
/// configurations. The matching order is the anti-homomorphic one
/// (inner factor = g2); the naive order is recorded alongside.
pub fn check_u_composition(
    ctx: &CheckCtx,
    idx: usize,
    g1: &AffineElement,
    g2: &AffineElement,
    phi: &StepFn,
    n_gamma: u64,
    seed: u64,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let f = crate::rep::ConfigFunction::multiplicative(phi.clone(), Scalar::one())?;
    let chained = f
        .apply_u(g1, InverseMode::Motion)?
        .apply_u(g2, InverseMode::Motion)?;
    let anti = AffineElement::product_motion(g1, g2)?;
    let naive = AffineElement::product_motion(g2, g1)?;
    let via_anti = f.apply_u(&anti, InverseMode::Motion)?;
    let via_naive = f.apply_u(&naive, InverseMode::Motion)?;

    let mut objects = f.scenario_objects();
    objects.extend(chained.scenario_objects());
    objects.extend(via_anti.scenario_objects());
    objects.extend(via_naive.scenario_objects());
    objects.push(ScenarioObject::Element(g1));
    objects.push(ScenarioObject::Element(g2));
    let window = window_for(ctx.prime, &objects)?;

    let mut rng = SplitMix64::lane(seed, 29);
    let mut anti_ok = true;
    let mut naive_ok = true;
    for _ in 0..n_gamma {
        let gamma = sample_configuration(&window, &mut rng)?;
        let lhs = chained.magnitude_squared(&gamma)?;
        anti_ok &= lhs == via_anti.magnitude_squared(&gamma)?;
        naive_ok &= lhs == via_naive.magnitude_squared(&gamma)?;
    }
    let mut rec = ctx.base(
        "u_composition",
        idx,
        CheckKind::Exact,
        digest(&[g1.to_json(), g2.to_json(), phi.to_json()]),
    );
    rec.product_mode = Some(ProductMode::Motion);
    rec.inverse_mode = Some(InverseMode::Motion);
    rec.n = Some(n_gamma);
    rec.outcome = if anti_ok { Outcome::Pass } else { Outcome::Fail };
    rec.witness = Some(
        serde_json::json!({
            "anti_order_pass": anti_ok,
            "naive_order_pass": naive_ok,
        })
        .to_string(),
    );
    Ok(finish(rec, started))
}

/// E[R(g, ·)] = 1 with exact exponent cancellation.
pub fn check_rn_normalization(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let f = crate::rep::ConfigFunction::radon_nikodym_functional(g)?;
    let (coef, exponent) = match f.expectation_exact()? {
        crate::rep::ExpectationResult::Exact { coef, exponent, .. } => (coef, exponent),
        _ => unreachable!(),
    };
    // Both the coefficient−1 and the exponent must vanish.
    let lhs = (&coef - Scalar::one()) + exponent;
    let mut rec = ctx.exact(
        "rn_normalization",
        idx,
        &[g.to_json()],
        &lhs,
        &Scalar::zero(),
        false,
    );
    rec.witness = Some(serde_json::json!({"coef": format_rational(&coef)}).to_string());
    Ok(finish(rec, started))
}

/// Monte Carlo mean of R(g, ·) against 1 at 4σ.
pub fn check_rn_normalization_mc(
    ctx: &CheckCtx,
    idx: usize,
    g: &AffineElement,
    n: u64,
    seed: u64,
) -> Result<CheckRecord> {
    let started = Instant::now();
    let f = crate::rep::ConfigFunction::radon_nikodym_functional(g)?;
    let (mean, stderr, total) = match f.expectation_mc(n, seed)? {
        crate::rep::ExpectationResult::MonteCarlo {
            mean_re, stderr, n, ..
        } => (mean_re, stderr, n),
        _ => unreachable!(),
    };
    let rec = ctx.mc(
        "rn_normalization_mc",
        idx,
        &[g.to_json()],
        mean,
        stderr,
        total,
        1.0,
    );
    Ok(finish(rec, started))
}

/// Sampler statistics over one window: per-cell Poisson counts against
/// Haar masses and the pair correlation of two disjoint cells, each at
/// 4σ. Returns the two records.
pub fn check_sampler_window(
    ctx: &CheckCtx,
    idx: usize,
    window_ball: Ball,
    n: u64,
    seed: u64,
) -> Result<Vec<CheckRecord>> {
    let started = Instant::now();
    let prime = ctx.prime;
    let depth: u32 = if prime.get() * prime.get() <= 30 { 2 } else { 1 };
    let mut cells = vec![window_ball.clone()];
    for _ in 0..depth {
        cells = cells.iter().flat_map(Ball::split).collect();
    }
    let resolution = window_ball.level() - depth as i64 - 2;
    let window = WindowSpec::new(prime, vec![Region::ball(window_ball.clone())], resolution)?;
    let mut rng = SplitMix64::lane(seed, 31);
    let k = cells.len();
    let mut sums = vec![0.0f64; k];
    let mut sumsqs = vec![0.0f64; k];
    let mut pair_sum = 0.0f64;
    let mut pair_sumsq = 0.0f64;
    for _ in 0..n {
        let gamma = sample_configuration(&window, &mut rng)?;
        let mut counts = vec![0u64; k];
        for pt in gamma.points() {
            for (i, c) in cells.iter().enumerate() {
                if pt.in_ball(c)? {
                    counts[i] += 1;
                    break;
                }
            }
        }
        for i in 0..k {
            let x = counts[i] as f64;
            sums[i] += x;
            sumsqs[i] += x * x;
        }
        let prod = (counts[0] * counts[1]) as f64;
        pair_sum += prod;
        pair_sumsq += prod * prod;
    }

    let mut worst: Option<(f64, f64, f64, usize)> = None;
    let mut cell_stats = Vec::with_capacity(k);
    for i in 0..k {
        let mean = sums[i] / n as f64;
        let var = (sumsqs[i] / n as f64 - mean * mean).max(0.0);
        let stderr = (var / n as f64).sqrt();
        let target = to_f64(&cells[i].measure());
        let z = if stderr > 0.0 {
            (mean - target).abs() / stderr
        } else if (mean - target).abs() > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        cell_stats.push(serde_json::json!({
            "cell": crate::step::ball_to_json(&cells[i]),
            "mean": mean,
            "stderr": stderr,
            "target": target,
        }));
        if worst.is_none_or(|(wz, ..)| z > wz) {
            worst = Some((z, mean, stderr, i));
        }
    }
    let (_, wmean, wstderr, widx) = worst.expect("at least one cell");
    let mut counts_rec = ctx.mc(
        "sampler_cell_counts",
        idx,
        &[crate::step::ball_to_json(&window_ball)],
        wmean,
        wstderr,
        n,
        to_f64(&cells[widx].measure()),
    );
    counts_rec.witness = Some(serde_json::json!({ "cells": cell_stats }).to_string());
    let counts_rec = finish(counts_rec, started);

    let pair_started = Instant::now();
    let pair_mean = pair_sum / n as f64;
    let pair_var = (pair_sumsq / n as f64 - pair_mean * pair_mean).max(0.0);
    let pair_stderr = (pair_var / n as f64).sqrt();
    let pair_target = to_f64(&cells[0].measure()) * to_f64(&cells[1].measure());
    let pair_rec = ctx.mc(
        "sampler_pair_correlation",
        idx,
        &[crate::step::ball_to_json(&window_ball)],
        pair_mean,
        pair_stderr,
        n,
        pair_target,
    );
    Ok(vec![counts_rec, finish(pair_rec, pair_started)])
}

/// Group axioms of the pointwise product on a batch of random triples:
/// associativity, two-sided identity, two-sided inverse — all exact.
pub fn pointwise_group_axioms(
    ctx: &CheckCtx,
    idx: usize,
    triples: &[(AffineElement, AffineElement, AffineElement)],
) -> Result<CheckRecord> {
    let started = Instant::now();
    let e = AffineElement::identity(ctx.prime);
    let mut failure: Option<String> = None;
    for (g, h, k) in triples {
        let gh_k = AffineElement::product_pointwise(
            &AffineElement::product_pointwise(g, h)?,
            k,
        )?;
        let g_hk = AffineElement::product_pointwise(
            g,
            &AffineElement::product_pointwise(h, k)?,
        )?;
        let ok = gh_k == g_hk
            && AffineElement::product_pointwise(g, &e)? == *g
            && AffineElement::product_pointwise(&e, g)? == *g
            && AffineElement::product_pointwise(&g.inverse_pointwise(), g)? == e
            && AffineElement::product_pointwise(g, &g.inverse_pointwise())? == e;
        if !ok {
            failure = Some(digest(&[g.to_json(), h.to_json(), k.to_json()]));
            break;
        }
    }
    let mut rec = ctx.base(
        "pointwise_group_axioms",
        idx,
        CheckKind::Exact,
        digest(&[serde_json::json!(triples.len())]),
    );
    rec.n = Some(triples.len() as u64);
    rec.outcome = if failure.is_none() {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    rec.witness = failure.map(|d| serde_json::json!({"failing_triple_digest": d}).to_string());
    Ok(finish(rec, started))
}

/// The registry of expected divergences, each at a fixed p=3 instance
/// with machine-checkable witness data:
///
/// (a) the pointwise coefficient product does not implement operator
///     composition of V;
/// (b) the invariance claim under its literal hypothesis alone;
/// (c) isometry for a non-bijective element (pointwise inverse).
pub fn counterexample_registry(seed: u64) -> Result<Vec<CheckRecord>> {
    let prime = Prime::new(3)?;
    let ctx = CheckCtx::new(Suite::Counterexamples, prime, seed);
    let ball = |c: i64, l: i64| Region::ball(Ball::new(prime, &rat_int(c), l));
    let mut out = Vec::new();

    // (a) g = h = (1, 1·1_{B(0,-1)}), f = 1_{B(2,-1)}, γ = {0}:
    // V_h(V_g F)(γ) = f(g(h·0)) = f(1) = 0, while the pointwise product
    // element moves 0 to 2, giving f(2) = 1.
    {
        let started = Instant::now();
        let g = AffineElement::translation(ball(0, -1), rat_int(1));
        let f = crate::rep::ConfigFunction::cylinder(
            prime,
            vec![StepFn::indicator(ball(2, -1))],
            crate::rep::CylinderExpr::Slot(0),
        )?;
        let gamma = crate::poisson::Configuration::from_scalars(vec![rat_int(0)]);
        let lhs_fn = f.apply_v(&g)?.apply_v(&g)?;
        let product = AffineElement::product_pointwise(&g, &g)?;
        let rhs_fn = f.apply_v(&product)?;
        let lhs = lhs_fn
            .evaluate(&gamma)?
            .as_exact()
            .expect("rational cylinder")
            .clone();
        let rhs = rhs_fn
            .evaluate(&gamma)?
            .as_exact()
            .expect("rational cylinder")
            .clone();
        let mut rec = ctx.exact(
            "composition_pointwise",
            0,
            &[g.to_json(), f.to_json()],
            &lhs,
            &rhs,
            true,
        );
        rec.id = "registry/composition_pointwise".into();
        rec.product_mode = Some(ProductMode::Pointwise);
        rec.witness = Some(
            serde_json::json!({
                "element": g.to_json(),
                "function": f.to_json(),
                "gamma": gamma.to_json(),
                "motion_product_value": "0/1",
            })
            .to_string(),
        );
        out.push(finish(rec, started));
    }

    // (b) Literal invariance hypothesis: Λ = B = B(0,-1), h = 5;
    // Λ ∩ (B+5) = ∅ holds, yet E[V_g F] has exponent 0 while E[F] has
    // exponent (2−1)·m(Λ) = 1/3.
    {
        let lambda = ball(0, -1);
        let phi = StepFn::bump(lambda.clone(), rat_int(2), rat_int(1));
        let mut rec = check_invariance(
            &ctx,
            0,
            &lambda.clone(),
            &rat_int(5),
            &lambda,
            &phi,
            HypothesisMode::Literal,
        )?;
        rec.id = "registry/invariance_literal".into();
        rec.check = "invariance_literal".into();
        out.push(rec);
    }

    // (c) Non-bijective isometry: g = (1, 5·1_{B(0,-1)}),
    // φ = 2·1_{B(0,-1)}: exponents 0 vs 1.
    {
        let g = AffineElement::translation(ball(0, -1), rat_int(5));
        let phi = StepFn::bump(ball(0, -1), rat_int(2), rat_int(1));
        let mut rec = check_isometry(&ctx, 0, &g, &phi, InverseMode::Pointwise, true)?;
        rec.id = "registry/isometry_nonbijective".into();
        rec.check = "isometry_nonbijective".into();
        out.push(rec);
    }

    Ok(out)
}

/// True when all three registry entries are present as documented-fails.
pub fn registry_complete(records: &[CheckRecord]) -> bool {
    ["composition_pointwise", "invariance_literal", "isometry_nonbijective"]
        .iter()
        .all(|name| {
            records
                .iter()
                .any(|r| r.check == *name && r.outcome == Outcome::DocumentedFail)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat_i64;

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn ctx() -> CheckCtx {
        CheckCtx::new(Suite::Core, p3(), 7)
    }

    fn ball(c: i64, l: i64) -> Region {
        Region::ball(Ball::new(p3(), &rat_int(c), l))
    }

    #[test]
    fn change_of_variables_record() {
        let g = AffineElement::scaling(ball(0, 0), rat_int(3)).unwrap();
        let f = StepFn::indicator(ball(0, 1));
        let rec = check_change_of_variables(&ctx(), 0, &g, &f).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
        assert_eq!(rec.lhs.as_deref(), Some("3/1"));
        assert_eq!(rec.rhs.as_deref(), Some("3/1"));
    }

    #[test]
    fn pushforward_lemma_fixed_case() {
        // φ = 2·1_{B(0,0)} under the a=3 scaling: both exponents 1/3.
        let g = AffineElement::scaling(ball(0, 0), rat_int(3)).unwrap();
        let phi = StepFn::bump(ball(0, 0), rat_int(2), rat_int(1));
        let rec = check_pushforward_lemma(&ctx(), 0, &g, &phi).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
        assert_eq!(rec.lhs.as_deref(), Some("1/3"));
    }

    #[test]
    fn support_shift_fixed_case() {
        // Λ = B(1,-1) ⊂ B = B(0,0), h = 1: support lands in B(0,-1).
        let f = StepFn::bump(ball(1, -1), rat_int(4), rat_int(0));
        let rec =
            check_support_shift(&ctx(), 0, &ball(0, 0), &rat_int(1), &ball(1, -1), &f).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
        // h = 0 leaves the support in place.
        let rec0 =
            check_support_shift(&ctx(), 1, &ball(0, 0), &rat_int(0), &ball(1, -1), &f).unwrap();
        assert_eq!(rec0.outcome, Outcome::Pass);
    }

    #[test]
    fn invariance_strengthened_passes_literal_fails() {
        // Strengthened: Λ = B(1,-1), B = B(0,-1), h = 3 (in-ball).
        let phi = StepFn::bump(ball(1, -1), rat_int(2), rat_int(1));
        let rec = check_invariance(
            &ctx(),
            0,
            &ball(0, -1),
            &rat_int(3),
            &ball(1, -1),
            &phi,
            HypothesisMode::Strengthened,
        )
        .unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
        // Literal registry instance: exponent 0 vs 1/3.
        let phi2 = StepFn::bump(ball(0, -1), rat_int(2), rat_int(1));
        let rec2 = check_invariance(
            &ctx(),
            1,
            &ball(0, -1),
            &rat_int(5),
            &ball(0, -1),
            &phi2,
            HypothesisMode::Literal,
        )
        .unwrap();
        assert_eq!(rec2.outcome, Outcome::DocumentedFail);
        assert_eq!(rec2.lhs.as_deref(), Some("0/1"));
        assert_eq!(rec2.rhs.as_deref(), Some("1/3"));
    }

    #[test]
    fn separator_fixed_case() {
        // Λ1 = B(0,-1), Λ2 = B(1,-1): levels -1 and 0, so K = 1 and
        // h = 1/3 with |h| = 3.
        let sep = find_separator(p3(), &[ball(0, -1)], &[ball(1, -1)]).unwrap();
        assert!(sep.ok());
        assert_eq!(sep.shift, rat_i64(1, 3));
        assert_eq!(sep.carrier, ball(0, 1));
        // Self-separation.
        let sep2 = find_separator(p3(), &[ball(0, 0)], &[ball(0, 0)]).unwrap();
        assert!(sep2.ok());
    }

    #[test]
    fn factorization_fixed_case() {
        // φ1 = 2·1_{B(0,-1)}, φ2 = 3·1_{B(1,-1)}: exponents 1/3 + 2/3.
        let phi1 = StepFn::bump(ball(0, -1), rat_int(2), rat_int(1));
        let phi2 = StepFn::bump(ball(1, -1), rat_int(3), rat_int(1));
        let rec = check_factorization(&ctx(), 0, &phi1, &phi2).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
        assert_eq!(rec.lhs.as_deref(), Some("1/1"));
        assert_eq!(rec.rhs.as_deref(), Some("1/1"));
    }

    #[test]
    fn isometry_fixed_cases() {
        // In-ball translation with φ = 2·1_{Z_3}: both exponents 3.
        let g = AffineElement::translation(ball(0, 0), rat_int(3));
        let phi = StepFn::bump(ball(0, 0), rat_int(2), rat_int(1));
        let rec = check_isometry(&ctx(), 0, &g, &phi, InverseMode::Motion, false).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
        assert_eq!(rec.lhs.as_deref(), Some("3/1"));
        // Swap reduces to the pushforward lemma case.
        let s = AffineElement::swap(ball(0, -1), ball(1, -1)).unwrap();
        let rec2 = check_isometry(&ctx(), 1, &s, &phi, InverseMode::Motion, false).unwrap();
        assert_eq!(rec2.outcome, Outcome::Pass);
    }

    #[test]
    fn factorization_with_constant_mark_is_trivial() {
        let phi1 = StepFn::bump(ball(0, -1), rat_int(2), rat_int(1));
        let one = StepFn::constant(p3(), rat_int(1));
        let rec = check_factorization(&ctx(), 0, &phi1, &one).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
        let rec2 = check_factorization(&ctx(), 1, &one, &phi1).unwrap();
        assert_eq!(rec2.outcome, Outcome::Pass);
    }

    #[test]
    fn invariance_with_zero_shift_is_trivial() {
        // h = 0: B + h = B, both hypotheses coincide and gφ = φ.
        let phi = StepFn::bump(ball(1, -1), rat_int(2), rat_int(1));
        let rec = check_invariance(
            &ctx(),
            0,
            &ball(0, -1),
            &rat_int(0),
            &ball(1, -1),
            &phi,
            HypothesisMode::Literal,
        )
        .unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
    }

    #[test]
    fn composition_with_identity_passes_all_modes() {
        let e = AffineElement::identity(p3());
        let g = AffineElement::translation(ball(0, -1), rat_int(1));
        let f = crate::rep::ConfigFunction::cylinder(
            p3(),
            vec![StepFn::indicator(ball(2, -1))],
            crate::rep::CylinderExpr::Slot(0),
        )
        .unwrap();
        for mode in [ProductMode::Motion, ProductMode::Pointwise] {
            let rec = check_composition(&ctx(), 0, &e, &g, &f, mode, 80, 3).unwrap();
            assert_eq!(rec.outcome, Outcome::Pass, "mode {mode:?}");
            let rec2 = check_composition(&ctx(), 1, &g, &e, &f, mode, 80, 3).unwrap();
            assert_eq!(rec2.outcome, Outcome::Pass, "mode {mode:?}");
        }
    }

    #[test]
    fn u_composition_trivial_and_mixed_cases() {
        let e = AffineElement::identity(p3());
        let t = AffineElement::translation(ball(0, 0), rat_int(3));
        let s = AffineElement::swap(ball(0, -1), ball(1, -1)).unwrap();
        let scal = AffineElement::recentred_scaling(ball(2, -1), rat_int(2)).unwrap();
        let phi = StepFn::bump(ball(0, 0), rat_int(2), rat_int(1));
        for (g1, g2) in [(&e, &t), (&t, &e), (&t, &s), (&s, &scal)] {
            let rec = check_u_composition(&ctx(), 0, g1, g2, &phi, 100, 5).unwrap();
            assert_eq!(rec.outcome, Outcome::Pass);
        }
    }

    #[test]
    fn registry_has_expected_exponents() {
        let recs = counterexample_registry(7).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(registry_complete(&recs));
        let comp = &recs[0];
        assert_eq!(comp.lhs.as_deref(), Some("0/1"));
        assert_eq!(comp.rhs.as_deref(), Some("1/1"));
        let inv = &recs[1];
        assert_eq!(inv.lhs.as_deref(), Some("0/1"));
        assert_eq!(inv.rhs.as_deref(), Some("1/3"));
        let iso = &recs[2];
        assert_eq!(iso.lhs.as_deref(), Some("0/1"));
        assert_eq!(iso.rhs.as_deref(), Some("1/1"));
    }

    #[test]
    fn group_axioms_on_random_triples() {
        let mut gen = super::super::LabGen::new(p3(), 7, 40);
        let mix = super::super::GeneratorMix::default();
        let triples: Vec<_> = (0..20)
            .map(|_| {
                (
                    gen.element(&mix).0,
                    gen.element(&mix).0,
                    gen.element(&mix).0,
                )
            })
            .collect();
        let rec = pointwise_group_axioms(&ctx(), 0, &triples).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass);
    }
}
