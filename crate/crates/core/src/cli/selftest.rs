//! Quick numerical self-checks run by the `selftest` command.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::objective::{directional_check, RegularizerParams, Term};
use crate::operator::{
    apply_adjoint, apply_forward_general, apply_forward_rank1, chaos_frobenius, chaos_oracle,
    dense_measurement_oracle, LiftedMatrix,
};
use crate::seed::{derive_seed, rng_from_seed, TAG_SAMPLE};
use crate::signal_model::{sample_ground_truth, MeasurementSet, ProblemInstance};
use crate::{inner, norm_sq};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed discrepancy.
    pub worst: f64,
}

fn gaussian<R: Rng>(rng: &mut R, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

fn random_instance<R: Rng>(rng: &mut R, max_l: usize) -> Result<ProblemInstance> {
    let l = rng.random_range(2..=max_l);
    let q = rng.random_range(1..=l);
    let k = rng.random_range(1..=q);
    let m = rng.random_range(1..=l);
    let n = rng.random_range(1..=3);
    ProblemInstance::dct_1d(l, q, m, k, n, rng.random())
}

fn adjoint_identity(seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, TAG_SAMPLE, 1));
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 32)?;
        let (m, kn) = (inst.m(), inst.k() * inst.n());
        let x = LiftedMatrix(DMatrix::from_vec(m, kn, gaussian(&mut rng, m * kn)));
        let y = gaussian(&mut rng, inst.measurement_len());
        let lhs = inner(&apply_forward_general(&inst, &x)?, &y);
        let rhs = x.inner(&apply_adjoint(&inst, &y)?);
        worst = worst.max((lhs - rhs).norm() / (x.frobenius_norm() * norm_sq(&y).sqrt()));
    }
    Ok(worst)
}

fn oracle_equivalence(seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, TAG_SAMPLE, 2));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 12)?;
        let (m, kn) = (inst.m(), inst.k() * inst.n());
        let x = LiftedMatrix(DMatrix::from_vec(m, kn, gaussian(&mut rng, m * kn)));
        let fast = apply_forward_general(&inst, &x)?;
        let dense = dense_measurement_oracle(&inst, &x)?;
        let err = fast.iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn chaos_identity(seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, TAG_SAMPLE, 5));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 12)?;
        let (m, kn) = (inst.m(), inst.k() * inst.n());
        let (h, xx) = (gaussian(&mut rng, m), gaussian(&mut rng, kn));
        let (h0, x0) = (gaussian(&mut rng, m), gaussian(&mut rng, kn));
        let a = apply_forward_rank1(&inst, &h, &xx)?;
        let b = apply_forward_rank1(&inst, &h0, &x0)?;
        let direct: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).norm_sqr()).sum();
        let chaos = chaos_oracle(&inst, &h, &xx, &h0, &x0)?;
        worst = worst.max((chaos - direct).abs() / direct.max(1e-300));
    }
    Ok(worst)
}

fn frobenius_identity(seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, TAG_SAMPLE, 3));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 12)?;
        let (m, kn) = (inst.m(), inst.k() * inst.n());
        let (h, x) = (gaussian(&mut rng, m), gaussian(&mut rng, kn));
        let t = sample_ground_truth(m, inst.k(), inst.n(), 1.0, rng.random())?;
        let fro = chaos_frobenius(&inst, &h, &x, &t.h0, &t.x0)?;
        let lifted = LiftedMatrix::rank1(&h, &x)
            .plus(&LiftedMatrix::rank1(&t.h0, &t.x0).scaled(Complex64::new(-1.0, 0.0)))
            .frobenius_norm();
        worst = worst.max((fro - lifted).abs());
    }
    Ok(worst)
}

fn gradient_checks(seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, TAG_SAMPLE, 4));
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 20 {
        let inst = random_instance(&mut rng, 24)?;
        let (m, kn) = (inst.m(), inst.k() * inst.n());
        let y = gaussian(&mut rng, inst.measurement_len());
        let meas = MeasurementSet::observed(y);
        let params = RegularizerParams::new(rng.random_range(0.5..2.0), 1.0, 0.5, 0.5)?;
        let (h, x) = (gaussian(&mut rng, m), gaussian(&mut rng, kn));
        let (dh, dx) = (gaussian(&mut rng, m), gaussian(&mut rng, kn));
        let mut skipped = false;
        for term in [Term::F, Term::G, Term::Total] {
            let c = directional_check(&inst, &meas, &params, term, (&h, &x), (&dh, &dx), 1e-6)?;
            if c.near_kink {
                skipped = true;
                break;
            }
            worst = worst.max(c.relative_error());
        }
        if !skipped {
            done += 1;
        }
    }
    Ok(worst)
}

/// Runs every check; each entry records the worst discrepancy seen.
pub fn run_selftest(seed: u64) -> Result<Vec<CheckResult>> {
    let checks: [(&'static str, fn(u64) -> Result<f64>, f64); 5] = [
        ("adjoint identity", adjoint_identity, 1e-10),
        ("oracle equivalence", oracle_equivalence, 1e-10),
        ("chaos identity", chaos_identity, 1e-8),
        ("frobenius identity", frobenius_identity, 1e-10),
        ("gradient finite differences", gradient_checks, 1e-6),
    ];
    checks
        .into_iter()
        .map(|(name, f, tol)| {
            let worst = f(seed)?;
            Ok(CheckResult {
                name,
                passed: worst <= tol,
                worst,
            })
        })
        .collect()
}
