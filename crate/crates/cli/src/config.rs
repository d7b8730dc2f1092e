//! JSON configuration for benchmark sweeps and the accuracy study.

use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use maskmatch_core::encoding::QuantParams;
use maskmatch_core::protocol::SystemConfig;
use maskmatch_core::ring::ntt::{NTT_PRIMES_49, NTT_PRIMES_60};
use maskmatch_core::ring::RingParams;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub log_t: u32,
    /// prime factors of q; defaults to the 60+49-bit pair
    #[serde(default)]
    pub q_factors: Vec<u64>,
    pub d: usize,
    pub precision: u64,
    pub m_sweep: Vec<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub switch_at_setup: bool,
    #[serde(default)]
    pub truncate_bits: u32,
    #[serde(default)]
    pub literal_comparison: bool,
    #[serde(default)]
    pub seed: u64,
    /// queries measured per sweep point
    #[serde(default = "default_queries")]
    pub queries_per_point: usize,
}

fn default_threshold() -> f64 {
    0.5
}
fn default_queries() -> usize {
    1
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 4096,
            log_t: 20,
            q_factors: vec![],
            d: 128,
            precision: 400,
            m_sweep: vec![100, 1000, 10_000],
            threshold: 0.5,
            switch_at_setup: false,
            truncate_bits: 0,
            literal_comparison: false,
            seed: 1,
            queries_per_point: 1,
        }
    }
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let data =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self =
            serde_json::from_str(&data).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_sweep.iter().any(|&m| m == 0) {
            anyhow::bail!("sweep sizes must be positive");
        }
        let _ = self.system_config()?;
        Ok(())
    }

    pub fn ring_params(&self) -> Result<Arc<RingParams>> {
        let factors: Vec<u64> = if self.q_factors.is_empty() {
            vec![NTT_PRIMES_60[0], NTT_PRIMES_49[0]]
        } else {
            self.q_factors.clone()
        };
        Ok(RingParams::new(self.n, &factors, self.log_t)?)
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        let params = self.ring_params()?;
        let qp = QuantParams::new(self.d, self.precision, self.log_t)?;
        Ok(SystemConfig::new(params, qp)?
            .with_switch_at_setup(self.switch_at_setup)
            .with_truncation(self.truncate_bits)
            .with_literal_comparison(self.literal_comparison))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        BenchConfig::default().validate().unwrap();
    }

    #[test]
    fn json_roundtrip() {
        let cfg = BenchConfig {
            d: 32,
            n: 1024,
            m_sweep: vec![31, 62],
            ..Default::default()
        };
        let s = serde_json::to_string(&cfg).unwrap();
        let back: BenchConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back.d, 32);
        assert_eq!(back.m_sweep, vec![31, 62]);
    }
}
