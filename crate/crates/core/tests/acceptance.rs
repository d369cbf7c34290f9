//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its runtime (visible with `--nocapture`). Exact criteria compare
//! rationals; statistical criteria use two-sided 4σ intervals at the
//! stated sample sizes.

use std::time::{Duration, Instant};

use afflab_core::lab::{
    check_change_of_variables, check_composition, check_factorization, check_invariance,
    check_isometry, check_isometry_mc, check_mass_defect, check_pushforward_lemma,
    check_pushforward_lemma_mc, check_rn_normalization, check_rn_normalization_mc,
    check_sampler_window, check_separator, check_support_shift, check_u_composition,
    counterexample_registry, invariance_literal_instance, run_suite, support_shift_instance,
    CheckCtx, GeneratorMix, HypothesisMode, LabConfig, LabGen, Outcome, Suite,
};
use afflab_core::poisson::Configuration;
use afflab_core::scalar::parse_rational;
use afflab_core::step::StepFn;
use afflab_core::{AffineElement, Ball, ConfigFunction, InverseMode, Prime, Region};

const SEED: u64 = 20260808;
const MC_N: u64 = 100_000;

fn primes() -> Vec<Prime> {
    [2u32, 3, 5].iter().map(|&p| Prime::new(p).unwrap()).collect()
}

fn ctx(prime: Prime) -> CheckCtx {
    CheckCtx::new(Suite::Core, prime, SEED)
}

fn report(criterion: u32, name: &str, detail: String, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    println!(
        "acceptance {criterion:>2} {name}: PASS ({detail}) [{:.2?}]",
        elapsed
    );
    assert!(
        elapsed <= budget,
        "criterion {criterion} exceeded its runtime budget: {elapsed:.2?} > {budget:.2?}"
    );
}

#[test]
fn criterion_01_change_of_variables() {
    let started = Instant::now();
    let mix = GeneratorMix::default();
    let mut checked = 0usize;
    for prime in primes() {
        let c = ctx(prime);
        let mut gen = LabGen::new(prime, SEED, 1);
        for i in 0..100 {
            let (g, _) = gen.element(&mix);
            for j in 0..5 {
                let f = gen.step_default0();
                let rec = check_change_of_variables(&c, i * 5 + j, &g, &f).unwrap();
                assert_eq!(
                    rec.outcome,
                    Outcome::Pass,
                    "p={} lhs={:?} rhs={:?}",
                    prime,
                    rec.lhs,
                    rec.rhs
                );
                checked += 1;
            }
        }
    }
    report(
        1,
        "change of variables",
        format!("{checked} exact identities over p in {{2,3,5}}"),
        started,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_02_mass_defect() {
    let started = Instant::now();
    let mix = GeneratorMix::default();
    let mut checked = 0usize;
    for prime in primes() {
        let c = ctx(prime);
        let mut gen = LabGen::new(prime, SEED, 1);
        for i in 0..100 {
            let (g, _) = gen.element(&mix);
            let rec = check_mass_defect(&c, i, &g).unwrap();
            assert_eq!(rec.outcome, Outcome::Pass, "p={prime} lhs={:?}", rec.lhs);
            checked += 1;
        }
    }
    report(
        2,
        "mass defect",
        format!("{checked} elements, all exactly zero"),
        started,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_03_pushforward_lemma() {
    let started = Instant::now();
    let mix = GeneratorMix::default();
    let mut exact = 0usize;
    for prime in primes() {
        let c = ctx(prime);
        let mut gen = LabGen::new(prime, SEED, 2);
        for i in 0..40 {
            let (g, _) = gen.element(&mix);
            let phi = gen.phi();
            let rec = check_pushforward_lemma(&c, i, &g, &phi).unwrap();
            assert_eq!(
                rec.outcome,
                Outcome::Pass,
                "p={} lhs={:?} rhs={:?}",
                prime,
                rec.lhs,
                rec.rhs
            );
            exact += 1;
        }
    }
    // Paired Monte Carlo cross-check on 10 pairs.
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let mut gen = LabGen::new(prime, SEED, 3);
    for i in 0..10 {
        let (g, _) = gen.element(&GeneratorMix::default());
        let phi = gen.phi();
        let rec =
            check_pushforward_lemma_mc(&c, i, &g, &phi, MC_N, SEED.wrapping_add(i as u64))
                .unwrap();
        assert_eq!(
            rec.outcome,
            Outcome::Pass,
            "mc pair {i}: mean={:?} target={:?} stderr={:?}",
            rec.mean,
            rec.target,
            rec.stderr
        );
    }
    report(
        3,
        "pushforward lemma",
        format!("{exact} exact exponent identities + 10 MC cross-checks at n={MC_N}"),
        started,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_04_unitarity() {
    let started = Instant::now();
    let mix = GeneratorMix::default();
    let mut exact = 0usize;
    for prime in primes() {
        let c = ctx(prime);
        let mut gen = LabGen::new(prime, SEED, 4);
        for i in 0..20 {
            let (g, _) = gen.bijective_element(&mix);
            assert!(g.is_bijective().unwrap().verdict);
            let phi = gen.phi();
            let rec = check_isometry(&c, i, &g, &phi, InverseMode::Motion, false).unwrap();
            assert_eq!(
                rec.outcome,
                Outcome::Pass,
                "p={} lhs={:?} rhs={:?}",
                prime,
                rec.lhs,
                rec.rhs
            );
            exact += 1;
        }
    }
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let mut gen = LabGen::new(prime, SEED, 5);
    for i in 0..5 {
        let (g, _) = gen.bijective_element(&mix);
        let phi = gen.phi();
        let rec = check_isometry_mc(&c, i, &g, &phi, MC_N, SEED.wrapping_add(60 + i as u64))
            .unwrap();
        assert_eq!(
            rec.outcome,
            Outcome::Pass,
            "mc case {i}: mean={:?} stderr={:?}",
            rec.mean,
            rec.stderr
        );
    }
    report(
        4,
        "unitarity",
        format!("{exact} exact isometry exponents + 5 paired MC checks at n={MC_N}"),
        started,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_05_representation_property() {
    let started = Instant::now();
    let mix = GeneratorMix::default();
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let mut gen = LabGen::new(prime, SEED, 6);
    for i in 0..20 {
        let (g1, _) = gen.bijective_element(&mix);
        let (g2, _) = gen.bijective_element(&mix);
        let phi = gen.phi();
        let rec =
            check_u_composition(&c, i, &g1, &g2, &phi, 1_000, SEED.wrapping_add(90 + i as u64))
                .unwrap();
        assert_eq!(rec.outcome, Outcome::Pass, "pair {i}: {:?}", rec.witness);
    }
    report(
        5,
        "representation property",
        "20 bijective pairs, squared cocycle magnitudes exact on 1000 sampled configurations each"
            .to_string(),
        started,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_06_factorization() {
    let started = Instant::now();
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let mut gen = LabGen::new(prime, SEED, 7);
    for i in 0..50 {
        let first = vec![gen.region()];
        let second = vec![gen.region(), gen.region()];
        let rec = check_separator(&c, i, &first, &second).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass, "separator {i}: {:?}", rec.witness);
    }
    for i in 0..50 {
        let phi1 = gen.phi();
        let phi2 = gen.phi();
        let rec = check_factorization(&c, i, &phi1, &phi2).unwrap();
        assert_eq!(
            rec.outcome,
            Outcome::Pass,
            "factorization {i}: lhs={:?} rhs={:?} witness={:?}",
            rec.lhs,
            rec.rhs,
            rec.witness
        );
    }
    report(
        6,
        "factorization",
        "50 separator certificates + 50 exact factorization identities with translation invariance"
            .to_string(),
        started,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_07_support_shift() {
    let started = Instant::now();
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let mut gen = LabGen::new(prime, SEED, 8);
    for i in 0..50 {
        let (carrier, h, lambda, f) = support_shift_instance(&mut gen);
        let rec = check_support_shift(&c, i, &carrier, &h, &lambda, &f).unwrap();
        assert_eq!(rec.outcome, Outcome::Pass, "instance {i}: {:?}", rec.witness);
    }
    report(
        7,
        "support shift",
        "50 exact region containments".to_string(),
        started,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_08_radon_nikodym_normalization() {
    let started = Instant::now();
    let mix = GeneratorMix::default();
    let mut exact = 0usize;
    for prime in primes() {
        let c = ctx(prime);
        let mut gen = LabGen::new(prime, SEED, 9);
        for i in 0..35 {
            let (g, _) = gen.element(&mix);
            let rec = check_rn_normalization(&c, i, &g).unwrap();
            assert_eq!(rec.outcome, Outcome::Pass, "p={prime}: {:?}", rec.witness);
            exact += 1;
        }
    }
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let mut gen = LabGen::new(prime, SEED, 10);
    for i in 0..5 {
        let (g, _) = gen.element(&mix);
        let rec =
            check_rn_normalization_mc(&c, i, &g, MC_N, SEED.wrapping_add(120 + i as u64)).unwrap();
        assert_eq!(
            rec.outcome,
            Outcome::Pass,
            "mc {i}: mean={:?} stderr={:?}",
            rec.mean,
            rec.stderr
        );
    }
    report(
        8,
        "Radon-Nikodym normalization",
        format!("{exact} exact cancellations + 5 MC means at n={MC_N}"),
        started,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_09_sampler_statistics() {
    let started = Instant::now();
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let windows = [
        Ball::centered(prime, 0),
        Ball::centered(prime, 1),
        Ball::new(prime, &parse_rational("1/3").unwrap(), 0),
    ];
    for (i, w) in windows.iter().enumerate() {
        let recs =
            check_sampler_window(&c, i, w.clone(), MC_N, SEED.wrapping_add(200 + i as u64))
                .unwrap();
        for rec in recs {
            assert_eq!(
                rec.outcome,
                Outcome::Pass,
                "window {i} {}: mean={:?} target={:?} stderr={:?}",
                rec.check,
                rec.mean,
                rec.target,
                rec.stderr
            );
        }
    }
    report(
        9,
        "sampler statistics",
        format!("cell counts and pair correlations over 3 windows at n={MC_N}"),
        started,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_10_counterexample_registry() {
    let started = Instant::now();
    let registry = counterexample_registry(SEED).unwrap();
    assert_eq!(registry.len(), 3);
    for rec in &registry {
        assert_eq!(
            rec.outcome,
            Outcome::DocumentedFail,
            "{}: expected documented-fail",
            rec.id
        );
    }

    // (a) pointwise-product V-composition witness, re-checked from the
    // stored witness data.
    let comp = &registry[0];
    assert_eq!(comp.check, "composition_pointwise");
    let witness: serde_json::Value = serde_json::from_str(comp.witness.as_ref().unwrap()).unwrap();
    let g = AffineElement::from_json(&witness["element"]).unwrap();
    let f = ConfigFunction::from_json(&witness["function"]).unwrap();
    let gamma = Configuration::from_scalars(
        witness["gamma"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| parse_rational(s.as_str().unwrap()).unwrap())
            .collect(),
    );
    let lhs = f
        .apply_v(&g)
        .unwrap()
        .apply_v(&g)
        .unwrap()
        .evaluate(&gamma)
        .unwrap();
    let pointwise = AffineElement::product_pointwise(&g, &g).unwrap();
    let rhs = f.apply_v(&pointwise).unwrap().evaluate(&gamma).unwrap();
    let lhs = lhs.as_exact().unwrap();
    let rhs = rhs.as_exact().unwrap();
    assert_ne!(lhs, rhs);
    assert_eq!(afflab_core::scalar::format_rational(lhs), comp.lhs.clone().unwrap());
    assert_eq!(afflab_core::scalar::format_rational(rhs), comp.rhs.clone().unwrap());

    // (b) literal-hypothesis invariance witness: exponents 0 vs a
    // positive rational.
    let inv = &registry[1];
    assert_eq!(inv.check, "invariance_literal");
    assert_eq!(inv.lhs.as_deref(), Some("0/1"));
    let rhs = parse_rational(inv.rhs.as_deref().unwrap()).unwrap();
    assert!(rhs > parse_rational("0").unwrap());
    assert_eq!(inv.rhs.as_deref(), Some("1/3"));

    // (c) non-bijective isometry witness: exponents 0 vs 1.
    let iso = &registry[2];
    assert_eq!(iso.check, "isometry_nonbijective");
    assert_eq!(iso.lhs.as_deref(), Some("0/1"));
    assert_eq!(iso.rhs.as_deref(), Some("1/1"));

    report(
        10,
        "counterexample registry",
        "3 documented-fail entries present and re-verified from witness data".to_string(),
        started,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_11_determinism() {
    let started = Instant::now();
    let config = LabConfig {
        prime: 3,
        seed: 99,
        samples: 2_000,
        suites: Suite::all(),
        mix: GeneratorMix::default(),
        out: None,
    };
    let a = run_suite(&config).unwrap();
    let b = run_suite(&config).unwrap();
    assert_eq!(a.jsonl().into_bytes(), b.jsonl().into_bytes());
    assert_eq!(a.summary(), b.summary());
    assert_eq!(a.unexpected_failures(), 0);
    report(
        11,
        "determinism",
        format!(
            "two runs of {} records are byte-identical",
            a.records.len()
        ),
        started,
        Duration::from_secs(120),
    );
}

/// The literal invariance hypothesis family stays a documented failure
/// across random instances, not only at the registered one.
#[test]
fn literal_invariance_family_diverges() {
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let mut gen = LabGen::new(prime, SEED, 11);
    let mut documented = 0;
    for i in 0..10 {
        let (carrier, h, lambda, phi) = invariance_literal_instance(&mut gen);
        let rec = check_invariance(
            &c,
            i,
            &carrier,
            &h,
            &lambda,
            &phi,
            HypothesisMode::Literal,
        )
        .unwrap();
        assert_eq!(rec.outcome, Outcome::DocumentedFail);
        documented += 1;
    }
    assert_eq!(documented, 10);
}

/// The V-composition map: motion product passes in the reversed order,
/// pointwise product fails with a witness on generic pairs.
#[test]
fn composition_semantics_map() {
    let prime = Prime::new(3).unwrap();
    let c = ctx(prime);
    let ball = |ctr: i64, lvl: i64| {
        Region::ball(Ball::new(prime, &parse_rational(&ctr.to_string()).unwrap(), lvl))
    };
    let g = AffineElement::translation(ball(0, -1), parse_rational("1").unwrap());
    let h = AffineElement::translation(ball(1, -1), parse_rational("3").unwrap());
    let f = ConfigFunction::cylinder(
        prime,
        vec![StepFn::indicator(ball(2, -1)), StepFn::indicator(ball(1, 0))],
        afflab_core::rep::CylinderExpr::Sum(vec![
            afflab_core::rep::CylinderExpr::Slot(0),
            afflab_core::rep::CylinderExpr::PowInt(
                Box::new(afflab_core::rep::CylinderExpr::Slot(1)),
                2,
            ),
        ]),
    )
    .unwrap();
    let motion = check_composition(
        &c,
        0,
        &g,
        &h,
        &f,
        afflab_core::ProductMode::Motion,
        300,
        SEED,
    )
    .unwrap();
    assert_eq!(motion.outcome, Outcome::Pass);
    let witness: serde_json::Value =
        serde_json::from_str(motion.witness.as_ref().unwrap()).unwrap();
    assert_eq!(witness["reversed_order_pass"], serde_json::json!(true));
}
