//! On-disk database directory:
//! `{params.json, keys/, ct_00000.bin .., meta.json}`.
//!
//! The directory holds every role's state for the simulated deployment; key
//! material regenerates deterministically from the recorded seed, so the key
//! files exist for inspection and interop rather than as the source of truth.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use maskmatch_core::bfv::{ciphertext_from_bytes, ciphertext_to_bytes};
use maskmatch_core::encoding::QuantParams;
use maskmatch_core::protocol::{Simulation, SystemConfig};
use maskmatch_core::ring::RingParams;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DbParams {
    pub kg_seed: u64,
    pub n: usize,
    pub q_factors: Vec<u64>,
    pub log_t: u32,
    pub d: usize,
    pub precision: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DbMeta {
    pub m: usize,
    /// occupied rows in the last ciphertext mod capacity (the indicator)
    pub ind: usize,
    pub uploads: u64,
    pub sessions: u64,
}

pub struct DbDir {
    pub root: PathBuf,
    pub params: DbParams,
    pub meta: DbMeta,
}

impl DbDir {
    pub fn init(root: &Path, params: DbParams) -> Result<Self> {
        if root.join("params.json").exists() {
            bail!("{} already holds a database", root.display());
        }
        std::fs::create_dir_all(root.join("keys"))?;
        let db = Self {
            root: root.to_path_buf(),
            params,
            meta: DbMeta::default(),
        };
        db.write_params()?;
        db.write_meta()?;

        // key files for inspection; regenerated deterministically from the seed
        let sim = db.simulation(0)?;
        std::fs::write(root.join("keys/pk.bin"), sim.kg().pk().to_bytes())?;
        std::fs::write(root.join("keys/pk_v.bin"), sim.kg().pk_v().to_bytes())?;
        std::fs::write(root.join("keys/sk.bin"), sim.kg().secret_key().to_bytes())?;
        std::fs::write(
            root.join("keys/sk_v.bin"),
            sim.kg().verifier_secret_key().to_bytes(),
        )?;
        Ok(db)
    }

    pub fn open(root: &Path) -> Result<Self> {
        let params: DbParams = serde_json::from_str(
            &std::fs::read_to_string(root.join("params.json"))
                .with_context(|| format!("{} is not a database directory", root.display()))?,
        )?;
        let meta: DbMeta = serde_json::from_str(&std::fs::read_to_string(root.join("meta.json"))?)?;
        Ok(Self {
            root: root.to_path_buf(),
            params,
            meta,
        })
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        let ring = RingParams::new(self.params.n, &self.params.q_factors, self.params.log_t)?;
        let qp = QuantParams::new(self.params.d, self.params.precision, self.params.log_t)?;
        Ok(SystemConfig::new(ring, qp)?)
    }

    /// Rebuild the simulation: keys from the recorded seed, session
    /// randomness salted by the invocation counter, stored ciphertexts
    /// loaded back in.
    pub fn simulation(&self, salt: u64) -> Result<Simulation> {
        self.simulation_with(self.system_config()?, salt)
    }

    pub fn simulation_with(&self, cfg: SystemConfig, salt: u64) -> Result<Simulation> {
        let mut sim = Simulation::new_salted(cfg, self.params.kg_seed, salt)?;
        if self.meta.m > 0 {
            let ring = sim.cfg.params.clone();
            let key_id = sim.kg().pk().key_id();
            let count = self.meta.m.div_ceil(sim.cfg.delta());
            let mut cts = Vec::with_capacity(count);
            for i in 0..count {
                let path = self.ct_path(i);
                let bytes =
                    std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                cts.push(ciphertext_from_bytes(&ring, &bytes, key_id)?);
            }
            sim.load_database(cts, self.meta.m)?;
        }
        Ok(sim)
    }

    pub fn ct_path(&self, index: usize) -> PathBuf {
        self.root.join(format!("ct_{index:05}.bin"))
    }

    /// Persist the simulation's database state back to disk.
    pub fn save_database(&mut self, sim: &Simulation) -> Result<()> {
        for (i, ct) in sim.cs().db().ciphertexts().iter().enumerate() {
            std::fs::write(self.ct_path(i), ciphertext_to_bytes(ct, 0)?)?;
        }
        self.meta.m = sim.m();
        self.meta.ind = sim.cs().ind();
        self.write_meta()?;
        Ok(())
    }

    pub fn bump_uploads(&mut self) -> Result<u64> {
        self.meta.uploads += 1;
        self.write_meta()?;
        Ok(self.meta.uploads)
    }

    pub fn bump_sessions(&mut self) -> Result<u64> {
        self.meta.sessions += 1;
        self.write_meta()?;
        Ok(self.meta.sessions)
    }

    fn write_params(&self) -> Result<()> {
        std::fs::write(
            self.root.join("params.json"),
            serde_json::to_string_pretty(&self.params)?,
        )?;
        Ok(())
    }

    fn write_meta(&self) -> Result<()> {
        std::fs::write(
            self.root.join("meta.json"),
            serde_json::to_string_pretty(&self.meta)?,
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use maskmatch_core::ring::ntt::{NTT_PRIMES_49, NTT_PRIMES_60};

    #[test]
    fn init_enroll_reopen_query() {
        let root = std::env::temp_dir().join(format!("mmdb-{}", std::process::id()));
        std::fs::remove_dir_all(&root).ok();
        let params = DbParams {
            kg_seed: 11,
            n: 64,
            q_factors: vec![NTT_PRIMES_60[0], NTT_PRIMES_49[0]],
            log_t: 20,
            d: 8,
            precision: 100,
        };
        let mut db = DbDir::init(&root, params).unwrap();

        let set = crate::synth::gen_synthetic(10, 8, 2, 0.05, 7);
        let mut sim = db.simulation(1).unwrap();
        sim.enroll(&set.vectors).unwrap();
        db.save_database(&sim).unwrap();
        assert_eq!(db.meta.m, 10);

        // reopen and query a member vector
        let db2 = DbDir::open(&root).unwrap();
        assert_eq!(db2.meta.m, 10);
        let mut sim2 = db2.simulation(2).unwrap();
        let (hit, _) = sim2.query(&set.vectors[0], 0.9).unwrap();
        assert!(hit);
        let stranger = crate::synth::gen_synthetic(1, 8, 1, 0.0, 999)
            .vectors
            .remove(0);
        let cos_max = set
            .vectors
            .iter()
            .map(|v| crate::synth::cosine(v, &stranger))
            .fold(f64::NEG_INFINITY, f64::max);
        if cos_max < 0.4 {
            let (hit, _) = sim2.query(&stranger, 0.5).unwrap();
            assert!(!hit);
        }
        std::fs::remove_dir_all(&root).ok();
    }
}
