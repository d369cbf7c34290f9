//! The function class carried by the group action on configuration
//! space, the operators V_g and U_g, and the Radon–Nikodym cocycle.
//!
//! A `ConfigFunction` evaluates as
//!
//! ```text
//! F(γ) = coef · e^{exp_half/2} · ∏_{x∈γ} mult(x) · ∏_{x∈γ} √(mult_sqrt(x))
//!        · ψ(⟨f₁,γ⟩, …, ⟨f_n,γ⟩)
//! ```
//!
//! Square roots are never materialized on exact paths: U_g multiplies the
//! `mult_sqrt` carrier by the density of the inverse motion and the
//! prefactor by the exponential marker, so squared magnitudes — the
//! quantities unitarity talks about — stay exact rationals paired with a
//! rational exponent.

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::affine::{AffineElement, InverseMode};
use crate::error::{Error, Result};
use crate::padic::Prime;
use crate::poisson::{
    multiplicative_pairing, pairing, sample_configuration, window_for, Configuration,
    ScenarioObject,
};
use crate::rng::SplitMix64;
use crate::scalar::{exact_sqrt, format_rational, parse_rational, to_f64, Scalar};
use crate::step::{StepFn, StepFunction};

/// Value of an evaluation: exact rational whenever every ingredient is
/// rational, complex float otherwise.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalValue {
    Exact(Scalar),
    Approx(Complex64),
}

impl EvalValue {
    pub fn to_complex(&self) -> Complex64 {
        match self {
            EvalValue::Exact(v) => Complex64::new(to_f64(v), 0.0),
            EvalValue::Approx(z) => *z,
        }
    }

    pub fn as_exact(&self) -> Option<&Scalar> {
        match self {
            EvalValue::Exact(v) => Some(v),
            EvalValue::Approx(_) => None,
        }
    }

    fn add(self, other: EvalValue) -> EvalValue {
        match (self, other) {
            (EvalValue::Exact(a), EvalValue::Exact(b)) => EvalValue::Exact(a + b),
            (a, b) => EvalValue::Approx(a.to_complex() + b.to_complex()),
        }
    }

    fn mul(self, other: EvalValue) -> EvalValue {
        match (self, other) {
            (EvalValue::Exact(a), EvalValue::Exact(b)) => EvalValue::Exact(a * b),
            (a, b) => EvalValue::Approx(a.to_complex() * b.to_complex()),
        }
    }

    fn neg(self) -> EvalValue {
        match self {
            EvalValue::Exact(a) => EvalValue::Exact(-a),
            EvalValue::Approx(z) => EvalValue::Approx(-z),
        }
    }

    fn conj(self) -> EvalValue {
        match self {
            EvalValue::Exact(a) => EvalValue::Exact(a),
            EvalValue::Approx(z) => EvalValue::Approx(z.conj()),
        }
    }

    fn pow(self, n: u32) -> EvalValue {
        match self {
            EvalValue::Exact(a) => {
                let mut acc = Scalar::one();
                for _ in 0..n {
                    acc *= &a;
                }
                EvalValue::Exact(acc)
            }
            EvalValue::Approx(z) => EvalValue::Approx(z.powi(n as i32)),
        }
    }
}

/// Closed expression algebra for the cylinder part ψ: polynomials over
/// rationals, complex exponentials of rational linear combinations, and
/// their products — closed under V_g, multiplication and conjugation.
#[derive(Clone, Debug, PartialEq)]
pub enum CylinderExpr {
    Const(Scalar),
    Slot(usize),
    Neg(Box<CylinderExpr>),
    Sum(Vec<CylinderExpr>),
    Product(Vec<CylinderExpr>),
    PowInt(Box<CylinderExpr>, u32),
    /// e^{i·(offset + Σ_j coeffs[j]·s_j)}
    ExpILinear { offset: Scalar, coeffs: Vec<Scalar> },
    Conj(Box<CylinderExpr>),
}

impl CylinderExpr {
    pub fn one() -> Self {
        CylinderExpr::Const(Scalar::one())
    }

    pub fn is_const(&self) -> Option<&Scalar> {
        match self {
            CylinderExpr::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, slots: &[Scalar]) -> EvalValue {
        match self {
            CylinderExpr::Const(c) => EvalValue::Exact(c.clone()),
            CylinderExpr::Slot(k) => EvalValue::Exact(slots[*k].clone()),
            CylinderExpr::Neg(e) => e.eval(slots).neg(),
            CylinderExpr::Sum(es) => es
                .iter()
                .map(|e| e.eval(slots))
                .fold(EvalValue::Exact(Scalar::zero()), EvalValue::add),
            CylinderExpr::Product(es) => es
                .iter()
                .map(|e| e.eval(slots))
                .fold(EvalValue::Exact(Scalar::one()), EvalValue::mul),
            CylinderExpr::PowInt(e, n) => e.eval(slots).pow(*n),
            CylinderExpr::ExpILinear { offset, coeffs } => {
                let mut theta = offset.clone();
                for (c, s) in coeffs.iter().zip(slots) {
                    theta += c * s;
                }
                EvalValue::Approx(Complex64::from_polar(1.0, to_f64(&theta)))
            }
            CylinderExpr::Conj(e) => e.eval(slots).conj(),
        }
    }

    /// |ψ(slots)|² as an exact rational when decidable: rational-valued
    /// subexpressions square, unimodular exponentials contribute 1, and
    /// products multiply.
    pub fn abs_squared(&self, slots: &[Scalar]) -> Option<Scalar> {
        if let EvalValue::Exact(v) = self.eval(slots) {
            return Some(&v * &v);
        }
        match self {
            CylinderExpr::ExpILinear { .. } => Some(Scalar::one()),
            CylinderExpr::Neg(e) | CylinderExpr::Conj(e) => e.abs_squared(slots),
            CylinderExpr::Product(es) => {
                let mut acc = Scalar::one();
                for e in es {
                    acc *= e.abs_squared(slots)?;
                }
                Some(acc)
            }
            CylinderExpr::PowInt(e, n) => {
                let base = e.abs_squared(slots)?;
                let mut acc = Scalar::one();
                for _ in 0..*n {
                    acc *= &base;
                }
                Some(acc)
            }
            _ => None,
        }
    }

    fn shift_slots(&self, offset: usize) -> CylinderExpr {
        match self {
            CylinderExpr::Const(c) => CylinderExpr::Const(c.clone()),
            CylinderExpr::Slot(k) => CylinderExpr::Slot(k + offset),
            CylinderExpr::Neg(e) => CylinderExpr::Neg(Box::new(e.shift_slots(offset))),
            CylinderExpr::Sum(es) => {
                CylinderExpr::Sum(es.iter().map(|e| e.shift_slots(offset)).collect())
            }
            CylinderExpr::Product(es) => {
                CylinderExpr::Product(es.iter().map(|e| e.shift_slots(offset)).collect())
            }
            CylinderExpr::PowInt(e, n) => {
                CylinderExpr::PowInt(Box::new(e.shift_slots(offset)), *n)
            }
            CylinderExpr::ExpILinear { offset: o, coeffs } => {
                let mut shifted = vec![Scalar::zero(); offset];
                shifted.extend(coeffs.iter().cloned());
                CylinderExpr::ExpILinear {
                    offset: o.clone(),
                    coeffs: shifted,
                }
            }
            CylinderExpr::Conj(e) => CylinderExpr::Conj(Box::new(e.shift_slots(offset))),
        }
    }

    fn max_slot(&self) -> Option<usize> {
        match self {
            CylinderExpr::Const(_) => None,
            CylinderExpr::Slot(k) => Some(*k),
            CylinderExpr::Neg(e) | CylinderExpr::Conj(e) | CylinderExpr::PowInt(e, _) => {
                e.max_slot()
            }
            CylinderExpr::Sum(es) | CylinderExpr::Product(es) => {
                es.iter().filter_map(|e| e.max_slot()).max()
            }
            CylinderExpr::ExpILinear { coeffs, .. } => {
                if coeffs.is_empty() {
                    None
                } else {
                    Some(coeffs.len() - 1)
                }
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CylinderExpr::Const(c) => {
                serde_json::json!({"kind": "const", "value": format_rational(c)})
            }
            CylinderExpr::Slot(k) => serde_json::json!({"kind": "slot", "index": k}),
            CylinderExpr::Neg(e) => serde_json::json!({"kind": "neg", "arg": e.to_json()}),
            CylinderExpr::Sum(es) => serde_json::json!({
                "kind": "sum",
                "args": es.iter().map(|e| e.to_json()).collect::<Vec<_>>()
            }),
            CylinderExpr::Product(es) => serde_json::json!({
                "kind": "product",
                "args": es.iter().map(|e| e.to_json()).collect::<Vec<_>>()
            }),
            CylinderExpr::PowInt(e, n) => {
                serde_json::json!({"kind": "pow", "arg": e.to_json(), "exp": n})
            }
            CylinderExpr::ExpILinear { offset, coeffs } => serde_json::json!({
                "kind": "exp_i_linear",
                "offset": format_rational(offset),
                "coeffs": coeffs.iter().map(format_rational).collect::<Vec<_>>()
            }),
            CylinderExpr::Conj(e) => serde_json::json!({"kind": "conj", "arg": e.to_json()}),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let kind = v
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::invalid_input("cylinder expression missing kind"))?;
        let arg = |name: &str| -> Result<CylinderExpr> {
            CylinderExpr::from_json(
                v.get(name)
                    .ok_or_else(|| Error::invalid_input(format!("missing {name}")))?,
            )
        };
        Ok(match kind {
            "const" => CylinderExpr::Const(parse_rational(
                v.get("value")
                    .and_then(|x| x.as_str())
                    .ok_or_else(|| Error::invalid_input("const missing value"))?,
            )?),
            "slot" => CylinderExpr::Slot(
                v.get("index")
                    .and_then(|x| x.as_u64())
                    .ok_or_else(|| Error::invalid_input("slot missing index"))?
                    as usize,
            ),
            "neg" => CylinderExpr::Neg(Box::new(arg("arg")?)),
            "conj" => CylinderExpr::Conj(Box::new(arg("arg")?)),
            "pow" => CylinderExpr::PowInt(
                Box::new(arg("arg")?),
                v.get("exp")
                    .and_then(|x| x.as_u64())
                    .ok_or_else(|| Error::invalid_input("pow missing exp"))? as u32,
            ),
            "sum" | "product" => {
                let args = v
                    .get("args")
                    .and_then(|a| a.as_array())
                    .ok_or_else(|| Error::invalid_input("missing args"))?
                    .iter()
                    .map(CylinderExpr::from_json)
                    .collect::<Result<Vec<_>>>()?;
                if kind == "sum" {
                    CylinderExpr::Sum(args)
                } else {
                    CylinderExpr::Product(args)
                }
            }
            "exp_i_linear" => {
                let offset = parse_rational(
                    v.get("offset")
                        .and_then(|x| x.as_str())
                        .ok_or_else(|| Error::invalid_input("missing offset"))?,
                )?;
                let coeffs = v
                    .get("coeffs")
                    .and_then(|a| a.as_array())
                    .ok_or_else(|| Error::invalid_input("missing coeffs"))?
                    .iter()
                    .map(|c| {
                        parse_rational(
                            c.as_str()
                                .ok_or_else(|| Error::invalid_input("bad coeff"))?,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                CylinderExpr::ExpILinear { offset, coeffs }
            }
            other => {
                return Err(Error::invalid_input(format!(
                    "unknown cylinder expression kind {other:?}"
                )))
            }
        })
    }
}

/// Member of the representation's function class; see module docs for
/// the evaluation formula.
#[derive(Clone, Debug)]
pub struct ConfigFunction {
    prime: Prime,
    coef: Scalar,
    /// The prefactor carries exp(exp_half / 2) symbolically.
    exp_half: Scalar,
    mult: StepFn,
    mult_sqrt: StepFn,
    slots: Vec<StepFn>,
    psi: CylinderExpr,
}

/// |F(γ)|² as the exact pair rational · exp(exponent).
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSquare {
    pub rational: Scalar,
    pub exponent: Scalar,
}

/// R(g, γ) = ∏_{x∈γ} ρ_g(x) · exp(∫(1−ρ_g)dm) as an exact pair; the
/// defect exponent is zero for every element, making R itself rational.
#[derive(Clone, Debug, PartialEq)]
pub struct RadonNikodym {
    pub product: Scalar,
    pub defect_exponent: Scalar,
    pub value: f64,
}

impl RadonNikodym {
    pub fn exact_value(&self) -> Option<&Scalar> {
        if self.defect_exponent.is_zero() {
            Some(&self.product)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectationResult {
    Exact {
        #[serde(serialize_with = "ser_rational")]
        coef: Scalar,
        #[serde(serialize_with = "ser_rational")]
        exponent: Scalar,
        value: f64,
    },
    MonteCarlo {
        mean_re: f64,
        mean_im: f64,
        stderr: f64,
        n: u64,
        seed: u64,
    },
}

fn ser_rational<S: serde::Serializer>(x: &Scalar, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(x))
}

impl ConfigFunction {
    pub fn one(prime: Prime) -> Self {
        ConfigFunction {
            prime,
            coef: Scalar::one(),
            exp_half: Scalar::zero(),
            mult: StepFunction::constant(prime, Scalar::one()),
            mult_sqrt: StepFunction::constant(prime, Scalar::one()),
            slots: Vec::new(),
            psi: CylinderExpr::one(),
        }
    }

    /// Multiplicative functional γ ↦ coef·∏φ(x); φ ≥ 0 with default 1.
    pub fn multiplicative(phi: StepFn, coef: Scalar) -> Result<Self> {
        if !phi.default_value().is_one() {
            return Err(Error::invalid_input(
                "multiplicative part must default to 1",
            ));
        }
        if !phi.is_nonnegative() {
            return Err(Error::NegativeValue("multiplicative part".into()));
        }
        let prime = phi.prime();
        Ok(ConfigFunction {
            prime,
            coef,
            exp_half: Scalar::zero(),
            mult: phi,
            mult_sqrt: StepFunction::constant(prime, Scalar::one()),
            slots: Vec::new(),
            psi: CylinderExpr::one(),
        })
    }

    /// Cylinder functional ψ(⟨f₁,γ⟩,…,⟨f_n,γ⟩); slot functions default 0.
    pub fn cylinder(prime: Prime, slots: Vec<StepFn>, psi: CylinderExpr) -> Result<Self> {
        for f in &slots {
            prime.same_as(f.prime())?;
            if !f.default_value().is_zero() {
                return Err(Error::invalid_input("slot functions must default to 0"));
            }
        }
        if let Some(k) = psi.max_slot() {
            if k >= slots.len() {
                return Err(Error::invalid_input(format!(
                    "expression uses slot {k} but only {} slot functions given",
                    slots.len()
                )));
            }
        }
        Ok(ConfigFunction {
            prime,
            coef: Scalar::one(),
            exp_half: Scalar::zero(),
            mult: StepFunction::constant(prime, Scalar::one()),
            mult_sqrt: StepFunction::constant(prime, Scalar::one()),
            slots,
            psi,
        })
    }

    /// γ ↦ R(g, γ): multiplicative part ρ_g, prefactor e^{mass defect}.
    pub fn radon_nikodym_functional(g: &AffineElement) -> Result<Self> {
        let rho = g.pushforward_density()?;
        let defect = g.mass_defect()?;
        let mut f = ConfigFunction::multiplicative(rho, Scalar::one())?;
        f.exp_half = Scalar::from(num_bigint::BigInt::from(2)) * defect;
        Ok(f)
    }

    pub fn with_coef(mut self, coef: Scalar) -> Self {
        self.coef = coef;
        self
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn multiplicative_part(&self) -> &StepFn {
        &self.mult
    }

    pub fn sqrt_part(&self) -> &StepFn {
        &self.mult_sqrt
    }

    pub fn slots(&self) -> &[StepFn] {
        &self.slots
    }

    pub fn psi(&self) -> &CylinderExpr {
        &self.psi
    }

    pub fn scenario_objects(&self) -> Vec<ScenarioObject<'_>> {
        let mut objs = vec![
            ScenarioObject::Step(&self.mult),
            ScenarioObject::Step(&self.mult_sqrt),
        ];
        objs.extend(self.slots.iter().map(ScenarioObject::Step));
        objs
    }

    /// Literal evaluation; exact whenever all parts are rational and the
    /// square-root and exponential markers are trivial.
    pub fn evaluate(&self, gamma: &Configuration) -> Result<EvalValue> {
        let pairings: Vec<Scalar> = self
            .slots
            .iter()
            .map(|f| pairing(f, gamma))
            .collect::<Result<Vec<_>>>()?;
        let psi_val = self.psi.eval(&pairings);
        let mult_val = multiplicative_pairing(&self.mult, gamma)?;
        let sqrt_val = multiplicative_pairing(&self.mult_sqrt, gamma)?;
        let base = EvalValue::Exact(self.coef.clone() * mult_val).mul(psi_val);
        if sqrt_val.is_one() && self.exp_half.is_zero() {
            return Ok(base);
        }
        let scale = to_f64(&sqrt_val).sqrt() * (to_f64(&self.exp_half) / 2.0).exp();
        Ok(EvalValue::Approx(base.to_complex() * scale))
    }

    /// |F(γ)|² as exact rational × exp(rational); errs when ψ admits no
    /// exact squared modulus at this configuration.
    pub fn magnitude_squared(&self, gamma: &Configuration) -> Result<ExactSquare> {
        let pairings: Vec<Scalar> = self
            .slots
            .iter()
            .map(|f| pairing(f, gamma))
            .collect::<Result<Vec<_>>>()?;
        let psi_sq = self
            .psi
            .abs_squared(&pairings)
            .ok_or_else(|| Error::NotInExactClass("cylinder part not exactly squarable".into()))?;
        let mult_val = multiplicative_pairing(&self.mult, gamma)?;
        let sqrt_val = multiplicative_pairing(&self.mult_sqrt, gamma)?;
        Ok(ExactSquare {
            rational: &self.coef * &self.coef * &mult_val * &mult_val * sqrt_val * psi_sq,
            exponent: self.exp_half.clone(),
        })
    }

    /// V_g F: every one-particle ingredient is pulled back through the
    /// point motion; the prefactor is untouched.
    pub fn apply_v(&self, g: &AffineElement) -> Result<ConfigFunction> {
        self.prime.same_as(g.prime())?;
        Ok(ConfigFunction {
            prime: self.prime,
            coef: self.coef.clone(),
            exp_half: self.exp_half.clone(),
            mult: g.pullback(&self.mult)?,
            mult_sqrt: g.pullback(&self.mult_sqrt)?,
            slots: self
                .slots
                .iter()
                .map(|f| g.pullback(f))
                .collect::<Result<Vec<_>>>()?,
            psi: self.psi.clone(),
        })
    }

    /// U_g F = R(g⁻¹, ·)^{1/2} · V_g F. The density of the inverse is
    /// carried squared-rationally in `mult_sqrt`, the defect exponent in
    /// the prefactor marker. Default inverse semantics is the motion
    /// inverse (certified bijections only).
    pub fn apply_u(&self, g: &AffineElement, mode: InverseMode) -> Result<ConfigFunction> {
        let inv = g.inverse(mode)?;
        let rho_inv = inv.pushforward_density()?;
        let defect = inv.mass_defect()?;
        let mut out = self.apply_v(g)?;
        out.mult_sqrt = out.mult_sqrt.mul(&rho_inv);
        out.exp_half += defect;
        Ok(out)
    }

    pub fn conj(&self) -> ConfigFunction {
        let mut out = self.clone();
        // Every non-cylinder part is real; rational constants are fixed
        // by conjugation.
        if !matches!(out.psi, CylinderExpr::Const(_)) {
            out.psi = CylinderExpr::Conj(Box::new(out.psi));
        }
        out
    }

    /// Pointwise product F·G on configuration space.
    pub fn product(&self, other: &ConfigFunction) -> Result<ConfigFunction> {
        self.prime.same_as(other.prime)?;
        let mut slots = self.slots.clone();
        let offset = slots.len();
        slots.extend(other.slots.iter().cloned());
        let psi = match (self.psi.is_const(), other.psi.is_const()) {
            (Some(a), Some(b)) => CylinderExpr::Const(a * b),
            _ => CylinderExpr::Product(vec![self.psi.clone(), other.psi.shift_slots(offset)]),
        };
        Ok(ConfigFunction {
            prime: self.prime,
            coef: &self.coef * &other.coef,
            exp_half: &self.exp_half + &other.exp_half,
            mult: self.mult.mul(&other.mult),
            mult_sqrt: self.mult_sqrt.mul(&other.mult_sqrt),
            slots,
            psi,
        })
    }

    /// E_{π_m}[F] in closed form: requires a trivial cylinder part and a
    /// square-root carrier whose values are perfect squares. The result
    /// is the certificate pair coef · exp(exponent).
    pub fn expectation_exact(&self) -> Result<ExpectationResult> {
        let c = self.psi.is_const().ok_or_else(|| {
            Error::NotInExactClass("cylinder part must be constant for exact expectation".into())
        })?;
        let mut sqrt_pieces = Vec::new();
        for (r, v) in self.mult_sqrt.pieces() {
            let root = exact_sqrt(v).ok_or_else(|| {
                Error::NotInExactClass(format!(
                    "square-root carrier value {} is not a perfect square",
                    format_rational(v)
                ))
            })?;
            sqrt_pieces.push((r.clone(), root));
        }
        let sqrt_fn = StepFn::from_pieces(self.prime, sqrt_pieces, Scalar::one())?;
        let phi = self.mult.mul(&sqrt_fn);
        let one = StepFn::constant(self.prime, Scalar::one());
        let exponent =
            phi.sub(&one).integrate()? + &self.exp_half / Scalar::from(num_bigint::BigInt::from(2));
        let coef = &self.coef * c;
        let value = to_f64(&coef) * to_f64(&exponent).exp();
        Ok(ExpectationResult::Exact {
            coef,
            exponent,
            value,
        })
    }

    /// Monte Carlo estimate of E_{π_m}[F] over the scenario window of
    /// its own parts. Deterministic per seed: fixed lanes, reduction in
    /// lane order; AFFLAB_THREADS caps the worker threads.
    pub fn expectation_mc(&self, n: u64, seed: u64) -> Result<ExpectationResult> {
        let window = window_for(self.prime, &self.scenario_objects())?;
        let lanes: u64 = 8;
        let per_lane = n / lanes;
        let remainder = n % lanes;
        let lane_counts: Vec<u64> = (0..lanes)
            .map(|l| per_lane + if l < remainder { 1 } else { 0 })
            .collect();
        let threads = worker_threads().min(lanes as usize).max(1);
        let run_lane = |lane: u64, count: u64| -> Result<(Complex64, f64, u64)> {
            let mut rng = SplitMix64::lane(seed, lane);
            let mut sum = Complex64::new(0.0, 0.0);
            let mut sum_abs2 = 0.0f64;
            for _ in 0..count {
                let gamma = sample_configuration(&window, &mut rng)?;
                let z = self.evaluate(&gamma)?.to_complex();
                sum += z;
                sum_abs2 += z.norm_sqr();
            }
            Ok((sum, sum_abs2, count))
        };
        let lane_results: Vec<Result<(Complex64, f64, u64)>> = if threads <= 1 {
            lane_counts
                .iter()
                .enumerate()
                .map(|(l, &c)| run_lane(l as u64, c))
                .collect()
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = lane_counts
                    .iter()
                    .enumerate()
                    .map(|(l, &c)| scope.spawn(move || run_lane(l as u64, c)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("lane thread panicked"))
                    .collect()
            })
        };
        let mut sum = Complex64::new(0.0, 0.0);
        let mut sum_abs2 = 0.0f64;
        let mut total = 0u64;
        for r in lane_results {
            let (s, s2, c) = r?;
            sum += s;
            sum_abs2 += s2;
            total += c;
        }
        let mean = sum / total as f64;
        let var = (sum_abs2 / total as f64 - mean.norm_sqr()).max(0.0);
        let stderr = (var / total as f64).sqrt();
        Ok(ExpectationResult::MonteCarlo {
            mean_re: mean.re,
            mean_im: mean.im,
            stderr,
            n: total,
            seed,
        })
    }

    /// ⟨F, G⟩ = E[F·conj(G)], exact when the product stays in the exact
    /// class.
    pub fn inner_product_exact(&self, other: &ConfigFunction) -> Result<ExpectationResult> {
        self.product(&other.conj())?.expectation_exact()
    }

    pub fn inner_product_mc(
        &self,
        other: &ConfigFunction,
        n: u64,
        seed: u64,
    ) -> Result<ExpectationResult> {
        self.product(&other.conj())?.expectation_mc(n, seed)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "prime": self.prime.get(),
            "coef": format_rational(&self.coef),
            "exp_half": format_rational(&self.exp_half),
            "multiplicative": self.mult.to_json(),
            "mult_sqrt": self.mult_sqrt.to_json(),
            "slots": self.slots.iter().map(|f| f.to_json()).collect::<Vec<_>>(),
            "psi": self.psi.to_json(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let p = v
            .get("prime")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::invalid_input("function missing prime"))?;
        let prime = Prime::new(p as u32)?;
        let get = |name: &str| {
            v.get(name)
                .ok_or_else(|| Error::invalid_input(format!("function missing {name}")))
        };
        let coef = parse_rational(
            get("coef")?
                .as_str()
                .ok_or_else(|| Error::invalid_input("coef must be a rational string"))?,
        )?;
        let exp_half = parse_rational(
            get("exp_half")?
                .as_str()
                .ok_or_else(|| Error::invalid_input("exp_half must be a rational string"))?,
        )?;
        let mult = StepFn::from_json(prime, get("multiplicative")?)?;
        let mult_sqrt = StepFn::from_json(prime, get("mult_sqrt")?)?;
        let slots = get("slots")?
            .as_array()
            .ok_or_else(|| Error::invalid_input("slots must be an array"))?
            .iter()
            .map(|s| StepFn::from_json(prime, s))
            .collect::<Result<Vec<_>>>()?;
        let psi = CylinderExpr::from_json(get("psi")?)?;
        Ok(ConfigFunction {
            prime,
            coef,
            exp_half,
            mult,
            mult_sqrt,
            slots,
            psi,
        })
    }
}

fn worker_threads() -> usize {
    match std::env::var("AFFLAB_THREADS") {
        Ok(v) => v.parse::<usize>().unwrap_or(1).max(1),
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

/// R(g, γ) with its factors kept separate: exact product of density
/// values and the (identically zero) defect exponent.
pub fn radon_nikodym(g: &AffineElement, gamma: &Configuration) -> Result<RadonNikodym> {
    let rho = g.pushforward_density()?;
    let product = multiplicative_pairing(&rho, gamma)?;
    let defect = g.mass_defect()?;
    let value = to_f64(&product) * to_f64(&defect).exp();
    Ok(RadonNikodym {
        product,
        defect_exponent: defect,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{Ball, Region};
    use crate::scalar::{rat_i64, rat_int};

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn rball(center: i64, level: i64) -> Region {
        Region::ball(Ball::new(p3(), &rat_int(center), level))
    }

    fn scaling_a3() -> AffineElement {
        AffineElement::scaling(rball(0, 0), rat_int(3)).unwrap()
    }

    #[test]
    fn evaluate_linear_cylinder() {
        let f = ConfigFunction::cylinder(
            p3(),
            vec![StepFn::indicator(rball(0, 0))],
            CylinderExpr::Slot(0),
        )
        .unwrap();
        let gamma = Configuration::from_scalars(vec![rat_int(0), rat_int(9)]);
        assert_eq!(
            f.evaluate(&gamma).unwrap(),
            EvalValue::Exact(rat_int(2))
        );
        // Empty configuration: prefactor · ψ(0).
        assert_eq!(
            f.evaluate(&Configuration::empty()).unwrap(),
            EvalValue::Exact(rat_int(0))
        );
    }

    #[test]
    fn evaluate_multiplicative() {
        let phi = StepFn::bump(rball(0, 0), rat_int(2), rat_int(1));
        let f = ConfigFunction::multiplicative(phi, rat_int(1)).unwrap();
        let gamma = Configuration::from_scalars(vec![rat_int(0), rat_i64(1, 3)]);
        assert_eq!(f.evaluate(&gamma).unwrap(), EvalValue::Exact(rat_int(2)));
    }

    #[test]
    fn v_of_identity_is_identity() {
        let f = ConfigFunction::cylinder(
            p3(),
            vec![StepFn::indicator(rball(1, -1))],
            CylinderExpr::PowInt(Box::new(CylinderExpr::Slot(0)), 2),
        )
        .unwrap();
        let e = AffineElement::identity(p3());
        let vf = f.apply_v(&e).unwrap();
        let gamma = Configuration::from_scalars(vec![rat_int(1), rat_int(4)]);
        assert_eq!(f.evaluate(&gamma).unwrap(), vf.evaluate(&gamma).unwrap());
    }

    #[test]
    fn v_covariance_with_pushforward() {
        // evaluate(V_g F, γ) = evaluate(F, gγ), exactly.
        let f = ConfigFunction::cylinder(
            p3(),
            vec![
                StepFn::indicator(rball(1, -1)),
                StepFn::bump(rball(0, 0), rat_int(3), rat_int(0)),
            ],
            CylinderExpr::Sum(vec![
                CylinderExpr::Product(vec![CylinderExpr::Slot(0), CylinderExpr::Slot(1)]),
                CylinderExpr::Const(rat_i64(1, 2)),
            ]),
        )
        .unwrap();
        let elements = [
            AffineElement::translation(rball(0, -1), rat_int(1)),
            AffineElement::swap(rball(0, -1), rball(1, -1)).unwrap(),
            scaling_a3(),
        ];
        let gamma = Configuration::from_scalars(vec![rat_int(0), rat_int(1), rat_i64(1, 3)]);
        for g in &elements {
            let lhs = f.apply_v(g).unwrap().evaluate(&gamma).unwrap();
            let rhs = f
                .evaluate(&crate::poisson::push_configuration(g, &gamma).unwrap())
                .unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn v_support_shift() {
        // g = (1, h·1_B) with supp f_j ⊂ Λ ⊂ B moves supports into Λ−h.
        let lambda = rball(1, -1);
        let b = rball(0, 0);
        let h = rat_int(1);
        let g = AffineElement::translation(b, h.clone());
        let f = ConfigFunction::cylinder(
            p3(),
            vec![StepFn::bump(lambda.clone(), rat_int(5), rat_int(0))],
            CylinderExpr::Slot(0),
        )
        .unwrap();
        let vf = f.apply_v(&g).unwrap();
        let shifted = lambda.translate(&-h);
        for fj in vf.slots() {
            assert!(crate::region::regions_subset(
                p3(),
                &fj.support(),
                std::slice::from_ref(&shifted)
            )
            .unwrap());
        }
    }

    #[test]
    fn radon_nikodym_values() {
        let e = AffineElement::identity(p3());
        let r = radon_nikodym(&e, &Configuration::empty()).unwrap();
        assert_eq!(r.exact_value(), Some(&rat_int(1)));
        // Scaling a=3 on B(0,0) at γ = {0, 1/3}: (1/3)·(4/3) = 4/9.
        let gamma = Configuration::from_scalars(vec![rat_int(0), rat_i64(1, 3)]);
        let r2 = radon_nikodym(&scaling_a3(), &gamma).unwrap();
        assert_eq!(r2.exact_value(), Some(&rat_i64(4, 9)));
        // Bijective swap: R ≡ 1.
        let s = AffineElement::swap(rball(0, -1), rball(1, -1)).unwrap();
        let r3 = radon_nikodym(&s, &gamma).unwrap();
        assert_eq!(r3.exact_value(), Some(&rat_int(1)));
    }

    #[test]
    fn u_reduces_to_v_for_measure_preserving_elements() {
        let s = AffineElement::swap(rball(0, -1), rball(1, -1)).unwrap();
        let phi = StepFn::bump(rball(0, 0), rat_int(2), rat_int(1));
        let f = ConfigFunction::multiplicative(phi, rat_int(1)).unwrap();
        let uf = f.apply_u(&s, InverseMode::Motion).unwrap();
        let vf = f.apply_v(&s).unwrap();
        let gamma = Configuration::from_scalars(vec![rat_int(0), rat_int(1), rat_int(5)]);
        assert_eq!(uf.evaluate(&gamma).unwrap(), vf.evaluate(&gamma).unwrap());
        // U_identity = id.
        let e = AffineElement::identity(p3());
        let ue = f.apply_u(&e, InverseMode::Motion).unwrap();
        assert_eq!(ue.evaluate(&gamma).unwrap(), f.evaluate(&gamma).unwrap());
    }

    #[test]
    fn u_magnitude_matches_cocycle_times_v() {
        // |U_g F|²(γ) = R(g⁻¹,γ)·|V_g F(γ)|², exactly.
        let g = AffineElement::recentred_scaling(rball(0, 0), rat_int(2)).unwrap();
        let phi = StepFn::bump(rball(0, -1), rat_int(3), rat_int(1));
        let f = ConfigFunction::multiplicative(phi, rat_int(2)).unwrap();
        let uf = f.apply_u(&g, InverseMode::Motion).unwrap();
        let vf = f.apply_v(&g).unwrap();
        let ginv = g.inverse_motion().unwrap();
        for pts in [
            vec![],
            vec![rat_int(0)],
            vec![rat_int(0), rat_int(1), rat_i64(1, 3)],
        ] {
            let gamma = Configuration::from_scalars(pts);
            let lhs = uf.magnitude_squared(&gamma).unwrap();
            let v_sq = vf.magnitude_squared(&gamma).unwrap();
            let r = radon_nikodym(&ginv, &gamma).unwrap();
            assert_eq!(
                lhs.rational,
                r.exact_value().unwrap() * &v_sq.rational
            );
            assert_eq!(lhs.exponent, v_sq.exponent);
        }
    }

    #[test]
    fn exact_expectations() {
        let phi = StepFn::bump(rball(0, 0), rat_int(2), rat_int(1));
        let f = ConfigFunction::multiplicative(phi, rat_int(1)).unwrap();
        match f.expectation_exact().unwrap() {
            ExpectationResult::Exact { coef, exponent, .. } => {
                assert_eq!(coef, rat_int(1));
                assert_eq!(exponent, rat_int(1));
            }
            _ => unreachable!(),
        }
        // φ ≡ 1 with a prefactor: value is the prefactor.
        let c = ConfigFunction::one(p3()).with_coef(rat_i64(5, 7));
        match c.expectation_exact().unwrap() {
            ExpectationResult::Exact { coef, exponent, value } => {
                assert_eq!(coef, rat_i64(5, 7));
                assert_eq!(exponent, rat_int(0));
                assert!((value - 5.0 / 7.0).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn radon_nikodym_normalizes_exactly() {
        // E[R(g,·)] = 1: the defect prefactor cancels ∫(ρ−1).
        for g in [
            scaling_a3(),
            AffineElement::translation(rball(0, -1), rat_int(1)),
            AffineElement::translation(rball(0, -1), rat_int(5)),
            AffineElement::swap(rball(0, -1), rball(1, -1)).unwrap(),
        ] {
            let r = ConfigFunction::radon_nikodym_functional(&g).unwrap();
            match r.expectation_exact().unwrap() {
                ExpectationResult::Exact { coef, exponent, value } => {
                    assert_eq!(coef, rat_int(1));
                    assert_eq!(exponent, rat_int(0));
                    assert!((value - 1.0).abs() < 1e-15);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn mc_constant_function() {
        let f = ConfigFunction::one(p3());
        match f.expectation_mc(1000, 42).unwrap() {
            ExpectationResult::MonteCarlo {
                mean_re,
                mean_im,
                stderr,
                n,
                ..
            } => {
                assert_eq!(n, 1000);
                assert_eq!(mean_re, 1.0);
                assert_eq!(mean_im, 0.0);
                assert_eq!(stderr, 0.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn mc_matches_exact_for_multiplicative() {
        let phi = StepFn::bump(rball(0, 0), rat_i64(3, 2), rat_int(1));
        let f = ConfigFunction::multiplicative(phi, rat_int(1)).unwrap();
        let exact = match f.expectation_exact().unwrap() {
            ExpectationResult::Exact { value, .. } => value,
            _ => unreachable!(),
        };
        match f.expectation_mc(100_000, 9).unwrap() {
            ExpectationResult::MonteCarlo {
                mean_re, stderr, ..
            } => {
                assert!(
                    (mean_re - exact).abs() <= 4.0 * stderr,
                    "mean {mean_re}, exact {exact}, stderr {stderr}"
                );
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn mc_characteristic_functional() {
        // ψ = e^{i·s}, f = 1_B: E = exp(m(B)(e^{i}−1)).
        let f = ConfigFunction::cylinder(
            p3(),
            vec![StepFn::indicator(rball(0, 0))],
            CylinderExpr::ExpILinear {
                offset: rat_int(0),
                coeffs: vec![rat_int(1)],
            },
        )
        .unwrap();
        let target = (Complex64::new(0.0, 1.0).exp() - 1.0).exp();
        match f.expectation_mc(100_000, 4).unwrap() {
            ExpectationResult::MonteCarlo {
                mean_re,
                mean_im,
                stderr,
                ..
            } => {
                let mean = Complex64::new(mean_re, mean_im);
                assert!(
                    (mean - target).norm() <= 4.0 * stderr,
                    "mean {mean}, target {target}, stderr {stderr}"
                );
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn inner_products() {
        let one = ConfigFunction::one(p3());
        match one.inner_product_exact(&one).unwrap() {
            ExpectationResult::Exact { coef, exponent, .. } => {
                assert_eq!(coef, rat_int(1));
                assert_eq!(exponent, rat_int(0));
            }
            _ => unreachable!(),
        }
        // ⟨F,F⟩ for φ = 2·1_B: φ² = 4, exponent (4−1)·1 = 3.
        let phi = StepFn::bump(rball(0, 0), rat_int(2), rat_int(1));
        let f = ConfigFunction::multiplicative(phi, rat_int(1)).unwrap();
        match f.inner_product_exact(&f).unwrap() {
            ExpectationResult::Exact { exponent, .. } => assert_eq!(exponent, rat_int(3)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn u_isometry_exponent_for_bijective_element() {
        // ⟨U_g F, U_g F⟩ exponent equals ⟨F, F⟩ exponent.
        let g = AffineElement::translation(rball(0, 0), rat_int(3));
        let phi = StepFn::bump(rball(0, 0), rat_int(2), rat_int(1));
        let f = ConfigFunction::multiplicative(phi, rat_int(1)).unwrap();
        let uf = f.apply_u(&g, InverseMode::Motion).unwrap();
        let lhs = match uf.inner_product_exact(&uf).unwrap() {
            ExpectationResult::Exact { exponent, .. } => exponent,
            _ => unreachable!(),
        };
        let rhs = match f.inner_product_exact(&f).unwrap() {
            ExpectationResult::Exact { exponent, .. } => exponent,
            _ => unreachable!(),
        };
        assert_eq!(lhs, rat_int(3));
        assert_eq!(rhs, rat_int(3));
    }

    #[test]
    fn config_function_json_round_trip() {
        let f = ConfigFunction::cylinder(
            p3(),
            vec![StepFn::indicator(rball(0, 0))],
            CylinderExpr::ExpILinear {
                offset: rat_i64(1, 2),
                coeffs: vec![rat_int(2)],
            },
        )
        .unwrap()
        .with_coef(rat_i64(-3, 4));
        let j = f.to_json();
        let back = ConfigFunction::from_json(&j).unwrap();
        assert_eq!(j.to_string(), back.to_json().to_string());
        let gamma = Configuration::from_scalars(vec![rat_int(0)]);
        assert_eq!(
            f.evaluate(&gamma).unwrap().to_complex(),
            back.evaluate(&gamma).unwrap().to_complex()
        );
    }
}
