//! Synthetic unit-norm vector generation: cluster centers on the sphere,
//! members jittered and renormalized, so same-cluster pairs sit at high
//! cosine similarity and cross-cluster pairs near zero.

use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub struct SyntheticSet {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    normalize(&mut v);
    v
}

/// Cluster centers uniform on the sphere, orthogonalized when they fit the
/// dimension; members are center plus Gaussian jitter of expected norm
/// `jitter`, renormalized.
pub fn gen_synthetic(
    count: usize,
    d: usize,
    clusters: usize,
    jitter: f64,
    seed: u64,
) -> SyntheticSet {
    assert!(count >= 1 && clusters >= 1 && d >= 1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sigma = jitter / (d as f64).sqrt();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(clusters);
    for _ in 0..clusters {
        let mut c = random_unit(d, &mut rng);
        if centers.len() < d {
            // Gram-Schmidt against existing centers: cross-cluster cosine ~ 0
            for prev in &centers {
                let dot: f64 = c.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (x, p) in c.iter_mut().zip(prev) {
                    *x -= dot * p;
                }
            }
            normalize(&mut c);
        }
        centers.push(c);
    }
    let mut vectors = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % clusters;
        let mut v: Vec<f64> = centers[label]
            .iter()
            .map(|&c| c + sigma * gaussian(&mut rng))
            .collect();
        normalize(&mut v);
        vectors.push(v);
        labels.push(label);
    }
    SyntheticSet { vectors, labels }
}

/// A unit vector with an exact cosine against `base`.
pub fn vector_at_cosine(base: &[f64], cosine: f64, rng: &mut impl Rng) -> Vec<f64> {
    let d = base.len();
    loop {
        let mut perp = random_unit(d, rng);
        let dot: f64 = perp.iter().zip(base).map(|(a, b)| a * b).sum();
        for (x, b) in perp.iter_mut().zip(base) {
            *x -= dot * b;
        }
        let norm = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue; // drew (nearly) the base direction itself
        }
        for x in perp.iter_mut() {
            *x /= norm;
        }
        let s = (1.0 - cosine * cosine).sqrt();
        return base
            .iter()
            .zip(&perp)
            .map(|(b, p)| cosine * b + s * p)
            .collect();
    }
}

const VEC_MAGIC: &[u8; 4] = b"CMVE";

/// Binary vector file: {magic "CMVE", d: u32, count: u64, encoding tag for
/// f32} then count*d little-endian 32-bit floats.
pub fn write_vectors(path: &Path, vectors: &[Vec<f64>]) -> Result<()> {
    let d = vectors.first().map(|v| v.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(20 + vectors.len() * d * 4);
    out.extend_from_slice(VEC_MAGIC);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    out.push(0); // element encoding: 0 = f32
    out.extend_from_slice(&[0u8; 3]);
    for v in vectors {
        if v.len() != d {
            bail!(
                "ragged vector file: expected dimension {d}, got {}",
                v.len()
            );
        }
        for &x in v {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut f =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&out)?;
    Ok(())
}

/// Read the binary format, falling back to one whitespace-separated vector
/// per line for plain-text files.
pub fn read_vectors(path: &Path) -> Result<Vec<Vec<f64>>> {
    let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if data.len() >= 20 && &data[0..4] == VEC_MAGIC {
        let d = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(data[8..16].try_into().unwrap()) as usize;
        if data[16] != 0 {
            bail!("unsupported element encoding {}", data[16]);
        }
        let body = &data[20..];
        if body.len() != count * d * 4 {
            bail!(
                "vector file payload is {} bytes, expected {}",
                body.len(),
                count * d * 4
            );
        }
        let mut vectors = Vec::with_capacity(count);
        let mut pos = 0;
        for _ in 0..count {
            let mut v = Vec::with_capacity(d);
            for _ in 0..d {
                v.push(f32::from_le_bytes(body[pos..pos + 4].try_into().unwrap()) as f64);
                pos += 4;
            }
            vectors.push(v);
        }
        Ok(vectors)
    } else {
        let mut vectors = Vec::new();
        for (lineno, line) in data.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let v: std::result::Result<Vec<f64>, _> = trimmed
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect();
            let v = v.with_context(|| format!("parsing line {}", lineno + 1))?;
            if let Some(first) = vectors.first() {
                let _: &Vec<f64> = first;
                if v.len() != first.len() {
                    bail!(
                        "line {} has {} values, expected {}",
                        lineno + 1,
                        v.len(),
                        first.len()
                    );
                }
            }
            vectors.push(v);
        }
        if vectors.is_empty() {
            bail!("no vectors found in {}", path.display());
        }
        Ok(vectors)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
