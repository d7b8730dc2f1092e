//! Quick oracle suites behind the `selftest` subcommand: each suite
//! recomputes expected values by an independent route and checks the
//! production path against them.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use maskmatch_core::bfv;
use maskmatch_core::encoding::{
    encode_matrix_at, encode_query, extract_targets_signed, normalize_quantize, QuantParams,
};
use maskmatch_core::mpc::compare::{millionaire_lt_local, run_engines_local, GtThresholdBatch};
use maskmatch_core::mpc::{deal, share_arith, TripleBudget};
use maskmatch_core::protocol::{Simulation, SystemConfig};
use maskmatch_core::ring::ntt::{NTT_PRIMES_49, NTT_PRIMES_60};
use maskmatch_core::ring::{ModTag, RingParams, RingPoly};

use crate::synth;

fn suite(name: &str, run: impl FnOnce() -> Result<usize>) -> Result<usize> {
    match run() {
        Ok(count) => {
            println!("suite {name:<24} {count:>6} checks passed");
            Ok(count)
        }
        Err(e) => {
            println!("suite {name:<24} FAILED: {e}");
            Err(e)
        }
    }
}

pub fn run() -> Result<()> {
    let mut failures = 0;

    failures += suite("packing", packing_suite).is_err() as u32;
    failures += suite("scheme-roundtrip", scheme_suite).is_err() as u32;
    failures += suite("comparison", comparison_suite).is_err() as u32;
    failures += suite("end-to-end", e2e_suite).is_err() as u32;

    if failures > 0 {
        bail!("{failures} selftest suite(s) failed");
    }
    println!("all selftest suites passed");
    Ok(())
}

fn packing_suite() -> Result<usize> {
    let params = RingParams::new(1024, &[NTT_PRIMES_60[0], NTT_PRIMES_49[0]], 20)?;
    let qp = QuantParams::new(32, 400, 20)?;
    let delta = qp.rows_per_ciphertext(&params);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut checks = 0;
    for _ in 0..20 {
        let set = synth::gen_synthetic(delta, 32, 4, 0.2, rng.gen());
        let rows = set
            .vectors
            .iter()
            .map(|v| normalize_quantize(v, &qp))
            .collect::<maskmatch_core::Result<Vec<_>>>()?;
        let probe = synth::gen_synthetic(1, 32, 1, 0.0, rng.gen())
            .vectors
            .remove(0);
        let q = normalize_quantize(&probe, &qp)?;

        let prod = encode_matrix_at(&params, &qp, 0, &rows)?
            .poly()
            .mul(&encode_query(&params, &qp, &q)?)?;
        let got = extract_targets_signed(&prod, 32, delta);
        for (row, &g) in rows.iter().zip(&got) {
            let want: i128 = row
                .values()
                .iter()
                .zip(q.values())
                .map(|(&a, &b)| a as i128 * b as i128)
                .sum();
            if g != want {
                bail!("packed inner product mismatch: {g} vs {want}");
            }
            checks += 1;
        }
    }
    Ok(checks)
}

fn scheme_suite() -> Result<usize> {
    let params = RingParams::new(1024, &[NTT_PRIMES_60[0], NTT_PRIMES_49[0]], 20)?;
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let (pk, sk) = bfv::keygen(&params, &mut rng);
    let (_, sk_v) = bfv::keygen(&params, &mut rng);
    let rlk = bfv::relin_keygen(&sk, bfv::DEFAULT_BASE_LOG, &mut rng)?;
    let ksw = bfv::swkeygen(&sk, &sk_v, bfv::DEFAULT_BASE_LOG, &mut rng)?;
    let mut checks = 0;
    for _ in 0..20 {
        let m1 = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let m2 = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let ct1 = bfv::encrypt(&pk, &m1, &mut rng)?;
        let ct2 = bfv::encrypt(&pk, &m2, &mut rng)?;
        if bfv::decrypt(&sk, &ct1)?.coeffs() != m1.coeffs() {
            bail!("roundtrip failed");
        }
        let sum = bfv::decrypt(&sk, &bfv::eval_add(&ct1, &ct2)?)?;
        if sum.coeffs() != m1.add(&m2)?.coeffs() {
            bail!("addition mismatch");
        }
        let prod = bfv::eval_mul(&ct1, &ct2, Some(&rlk))?;
        if bfv::decrypt(&sk, &prod)?.coeffs() != m1.mul(&m2)?.coeffs() {
            bail!("product mismatch");
        }
        let switched = bfv::switching(&prod, &ksw)?;
        if bfv::decrypt(&sk_v, &switched)?.coeffs() != m1.mul(&m2)?.coeffs() {
            bail!("switching changed the plaintext");
        }
        checks += 4;
    }
    Ok(checks)
}

fn comparison_suite() -> Result<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (mut t0, mut t1) = deal(
        TripleBudget {
            bool_count: 600_000,
            arith_count: 0,
        },
        64,
        &mut rng,
    );
    let mut checks = 0;
    for _ in 0..2000 {
        let x = rng.gen::<u8>() as u128;
        let y = rng.gen::<u8>() as u128;
        let (s0, s1) = millionaire_lt_local(x, y, 8, &mut t0, &mut t1)?;
        if (s0.bit ^ s1.bit) != (x < y) {
            bail!("millionaire mismatch at ({x}, {y})");
        }
        checks += 1;
    }
    for _ in 0..500 {
        let bits = 20u32;
        let v = rng.gen_range(-100_000i128..100_000);
        let ts = rng.gen_range(-100_000i128..100_000);
        if (v - ts).abs() >= 1 << (bits - 1) {
            continue;
        }
        let (sh0, sh1) = share_arith(bits, v.rem_euclid(1 << bits) as u128, &mut rng);
        let mut e0 = GtThresholdBatch::new_party0(&[sh0.value], bits);
        let mut e1 = GtThresholdBatch::new_party1(&[sh1.value], ts, bits);
        run_engines_local(&mut e0, &mut t0, &mut e1, &mut t1)?;
        if (e0.results()[0] ^ e1.results()[0]) != (v > ts) {
            bail!("threshold gadget mismatch at v={v} ts={ts}");
        }
        checks += 1;
    }
    Ok(checks)
}

fn e2e_suite() -> Result<usize> {
    let params = RingParams::new(64, &[NTT_PRIMES_60[0], NTT_PRIMES_49[0]], 20)?;
    let qp = QuantParams::new(8, 100, 20)?;
    let cfg = SystemConfig::new(params, qp)?;
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut sim = Simulation::new(cfg.clone(), 9)?;
    let set = synth::gen_synthetic(15, 8, 3, 0.1, 5);
    sim.enroll(&set.vectors)?;
    let rows = sim.decrypt_database()?;

    let mut checks = 0;
    for _ in 0..10 {
        let probe = synth::gen_synthetic(1, 8, 1, 0.0, rng.gen())
            .vectors
            .remove(0);
        let q = normalize_quantize(&probe, &cfg.qp)?;
        let ts = rng.gen_range(-8000i64..8000);
        let expected = rows
            .iter()
            .any(|r| r.iter().zip(q.values()).map(|(a, b)| a * b).sum::<i64>() > ts);
        let (mu, _) = sim.query_quantized(&q, ts)?;
        if mu != expected {
            bail!("protocol decision diverged from the plaintext oracle");
        }
        checks += 1;
    }
    Ok(checks)
}
