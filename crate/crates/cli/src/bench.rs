//! Benchmark sweeps: per-point timing, byte and HE-op measurements with the
//! exact op-count law asserted, plus a streaming mode that replays the
//! homomorphic phase for sizes too large to hold a full database.

use anyhow::{bail, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use maskmatch_core::encoding::normalize_quantize;
use maskmatch_core::protocol::Simulation;
use maskmatch_core::stats::linear_fit;

use crate::config::BenchConfig;
use crate::synth;

pub const FULL_PROTOCOL_CAP: usize = 100_000;
pub const HE_ONLY_CAP: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub d: usize,
    pub m: usize,
    pub phase: String,
    pub seconds: f64,
    pub bytes: u64,
    pub he_mults: u64,
    pub he_adds: u64,
    pub switchings: u64,
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("d,m,phase,time_s,bytes,he_mults,he_adds,switchings\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{},{},{},{}\n",
            r.d, r.m, r.phase, r.seconds, r.bytes, r.he_mults, r.he_adds, r.switchings
        ));
    }
    out
}

/// Enroll `m` synthetic vectors in bounded chunks.
fn enroll_synthetic(sim: &mut Simulation, m: usize, d: usize, seed: u64) -> Result<()> {
    let mut remaining = m;
    let mut chunk_seed = seed;
    while remaining > 0 {
        let take = remaining.min(4096);
        let set = synth::gen_synthetic(take, d, 8.min(take), 0.1, chunk_seed);
        let rows = set
            .vectors
            .iter()
            .map(|v| normalize_quantize(v, &sim.cfg.qp))
            .collect::<maskmatch_core::Result<Vec<_>>>()?;
        sim.enroll_quantized(&rows)?;
        remaining -= take;
        chunk_seed += 1;
    }
    Ok(())
}

/// One sweep point with the full protocol; returns (rows, measured mults).
fn bench_point(cfg: &BenchConfig, m: usize) -> Result<Vec<BenchRow>> {
    let sys = cfg.system_config()?;
    let delta = sys.delta();
    let mut sim = Simulation::new(sys, cfg.seed.wrapping_add(m as u64))?;
    enroll_synthetic(&mut sim, m, cfg.d, cfg.seed.wrapping_add(7))?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(m as u64) ^ 0xbe);
    let mut rows = Vec::new();
    for qi in 0..cfg.queries_per_point.max(1) {
        let probe = synth::gen_synthetic(1, cfg.d, 1, 0.3, cfg.seed + 1000 + qi as u64)
            .vectors
            .remove(0);
        let q = normalize_quantize(&probe, &sim.cfg.qp)?;
        let ts = sim.cfg.qp.quantize_threshold(cfg.threshold);
        let (_, metrics) = sim.query_quantized(&q, ts)?;
        let _ = &mut rng;

        let expected_s = m.div_ceil(delta) as u64;
        if metrics.he_mults != expected_s {
            bail!(
                "op-count law violated: {} multiplications for m={m}, expected {expected_s}",
                metrics.he_mults
            );
        }
        rows.push(BenchRow {
            d: cfg.d,
            m,
            phase: "he".into(),
            seconds: metrics.he_phase_seconds,
            bytes: metrics.he_phase_bytes_cs_to_verifier,
            he_mults: metrics.he_mults,
            he_adds: metrics.he_adds,
            switchings: metrics.switchings,
        });
        rows.push(BenchRow {
            d: cfg.d,
            m,
            phase: "reveal".into(),
            seconds: metrics.reveal_phase_seconds,
            bytes: metrics.bytes_cs_to_verifier - metrics.he_phase_bytes_cs_to_verifier,
            he_mults: 0,
            he_adds: 0,
            switchings: 0,
        });
    }
    Ok(rows)
}

/// Streaming replica of the server's homomorphic phase for very large m:
/// each database ciphertext is produced, multiplied, masked, switched and
/// serialized, then dropped.
fn bench_point_he_only(cfg: &BenchConfig, m: usize) -> Result<Vec<BenchRow>> {
    use maskmatch_core::bfv;
    use maskmatch_core::encoding::{encode_matrix_at, encode_query};
    use maskmatch_core::ring::{ModTag, RingPoly};

    let sys = cfg.system_config()?;
    let params = sys.params.clone();
    let qp = sys.qp;
    let delta = sys.delta();
    let s = m.div_ceil(delta);

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let (pk, sk) = bfv::keygen(&params, &mut rng);
    let (_, sk_v) = bfv::keygen(&params, &mut rng);
    let rlk = bfv::relin_keygen(&sk, bfv::DEFAULT_BASE_LOG, &mut rng)?;
    let ksw = bfv::swkeygen(&sk, &sk_v, bfv::DEFAULT_BASE_LOG, &mut rng)?;

    let probe = synth::gen_synthetic(1, cfg.d, 1, 0.3, cfg.seed + 1)
        .vectors
        .remove(0);
    let q = normalize_quantize(&probe, &qp)?;
    let ct_q = bfv::encrypt(&pk, &encode_query(&params, &qp, &q)?, &mut rng)?;

    let start = std::time::Instant::now();
    let mut bytes = 0u64;
    let mut mults = 0u64;
    let mut remaining = m;
    for batch in 0..s {
        let take = remaining.min(delta);
        remaining -= take;
        let set =
            synth::gen_synthetic(take, cfg.d, 8.min(take), 0.1, cfg.seed + 100 + batch as u64);
        let rows = set
            .vectors
            .iter()
            .map(|v| normalize_quantize(v, &qp))
            .collect::<maskmatch_core::Result<Vec<_>>>()?;
        let ct_i = bfv::encrypt(
            &pk,
            encode_matrix_at(&params, &qp, 0, &rows)?.poly(),
            &mut rng,
        )?;

        let prod = bfv::eval_mul(&ct_q, &ct_i, Some(&rlk))?;
        mults += 1;
        let mask = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let masked = bfv::eval_add_plain(&prod, &mask)?;
        let switched = bfv::switching(&masked, &ksw)?;
        bytes += bfv::ciphertext_to_bytes(&switched, cfg.truncate_bits)?.len() as u64;
    }
    Ok(vec![BenchRow {
        d: cfg.d,
        m,
        phase: "he-stream".into(),
        seconds: start.elapsed().as_secs_f64(),
        bytes,
        he_mults: mults,
        he_adds: mults,
        switchings: mults,
    }])
}

pub fn bench_sweep(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &m in &cfg.m_sweep {
        if m > HE_ONLY_CAP {
            bail!("sweep size {m} exceeds the desk-scale cap of {HE_ONLY_CAP}");
        }
        if m > FULL_PROTOCOL_CAP {
            rows.extend(bench_point_he_only(cfg, m)?);
        } else {
            rows.extend(bench_point(cfg, m)?);
        }
    }
    Ok(rows)
}

/// R^2 of HE-phase time and bytes against the ciphertext count s.
pub fn linearity_check(rows: &[BenchRow], delta: usize) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.phase.starts_with("he"))
        .map(|r| (r.m.div_ceil(delta) as f64, r.seconds, r.bytes as f64))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let times: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let bytes: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let (_, _, r2_time) = linear_fit(&xs, &times);
    let (_, _, r2_bytes) = linear_fit(&xs, &bytes);
    (r2_time, r2_bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_runs_and_counts() {
        let cfg = BenchConfig {
            n: 64,
            log_t: 20,
            d: 8,
            precision: 100,
            m_sweep: vec![7, 14, 21],
            seed: 5,
            ..Default::default()
        };
        let rows = bench_sweep(&cfg).unwrap();
        let he: Vec<&BenchRow> = rows.iter().filter(|r| r.phase == "he").collect();
        assert_eq!(he.len(), 3);
        assert_eq!(he[0].he_mults, 1);
        assert_eq!(he[1].he_mults, 2);
        assert_eq!(he[2].he_mults, 3);
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with("d,m,phase"));
        assert!(csv.lines().count() == rows.len() + 1);
    }

    #[test]
    fn cap_enforced() {
        let cfg = BenchConfig {
            m_sweep: vec![2_000_000],
            ..Default::default()
        };
        assert!(bench_sweep(&cfg).is_err());
    }
}
