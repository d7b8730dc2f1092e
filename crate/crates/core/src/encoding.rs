//! Normalization/quantization of feature vectors and the reversed-coefficient
//! packing that turns one negacyclic polynomial product into a whole batch of
//! inner products.
//!
//! A batch packs up to delta = floor((N-d)/d) rows; row i occupies degrees
//! [i*d, (i+1)*d-1] with its elements reversed, the query occupies degrees
//! [0, d-1] in natural order, and the product then carries <a_i, b> at degree
//! (i+1)*d-1. The top d coefficients stay zero so the negacyclic wrap never
//! touches a target coefficient.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ring::{ModTag, RingParams, RingPoly};

/// Quantization geometry: vector dimension, scale and plaintext width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantParams {
    pub d: usize,
    /// unit-norm features are scaled by `precision` and rounded
    pub precision: u64,
    pub log_t: u32,
}

impl QuantParams {
    pub fn new(d: usize, precision: u64, log_t: u32) -> Result<Self> {
        let qp = Self {
            d,
            precision,
            log_t,
        };
        qp.validate()?;
        Ok(qp)
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        let t = 1u128 << self.log_t;
        let p = self.precision as u128;
        // signed inner product plus rounding slack must fit the signed range
        if p * p + p * self.d as u128 / 2 >= t / 2 {
            return Err(Error::InvalidParams(format!(
                "precision {} too large for t = 2^{} at d = {}",
                self.precision, self.log_t, self.d
            )));
        }
        Ok(())
    }

    /// Ensure the ring can hold at least one vector per ciphertext.
    pub fn check_ring(&self, params: &RingParams) -> Result<()> {
        if params.log_t() != self.log_t {
            return Err(Error::ParamMismatch(
                "plaintext width differs from ring".into(),
            ));
        }
        if self.d > params.n() - self.d {
            return Err(Error::InvalidParams(format!(
                "dimension {} leaves no room in degree {}",
                self.d,
                params.n()
            )));
        }
        Ok(())
    }

    /// Largest row count per ciphertext: floor((N-d)/d).
    pub fn rows_per_ciphertext(&self, params: &RingParams) -> usize {
        (params.n() - self.d) / self.d
    }

    /// The integer threshold corresponding to a cosine-similarity threshold.
    pub fn quantize_threshold(&self, cosine: f64) -> i64 {
        let p2 = self.precision as f64 * self.precision as f64;
        (cosine * p2).round() as i64
    }
}

/// A unit-norm vector scaled to integers; every value lies in [-p, p].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantVector {
    values: Vec<i64>,
}

impl QuantVector {
    pub fn from_values(values: Vec<i64>, qp: &QuantParams) -> Result<Self> {
        if values.len() != qp.d {
            return Err(Error::DimensionMismatch {
                expected: qp.d,
                got: values.len(),
            });
        }
        let p = qp.precision as i64;
        if values.iter().any(|&v| v.abs() > p) {
            return Err(Error::Domain(
                "quantized value exceeds the precision scale".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn zero(d: usize) -> Self {
        Self { values: vec![0; d] }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }
}

/// Unit-normalize, scale by the precision and round half away from zero.
pub fn normalize_quantize(v: &[f64], qp: &QuantParams) -> Result<QuantVector> {
    if v.len() != qp.d {
        return Err(Error::DimensionMismatch {
            expected: qp.d,
            got: v.len(),
        });
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Domain("cannot normalize the zero vector".into()));
    }
    let p = qp.precision as f64;
    let values: Vec<i64> = v.iter().map(|x| (x / norm * p).round() as i64).collect();
    debug_assert!(values.iter().all(|&x| x.unsigned_abs() <= qp.precision));
    QuantVector::from_values(values, qp)
}

/// Up to delta quantized rows packed into one plaintext polynomial.
#[derive(Clone, Debug)]
pub struct PackedBatch {
    rows: Vec<QuantVector>,
    poly: RingPoly,
    /// number of real (non-padding) rows
    occupancy: usize,
    /// index of the first real row within the batch
    offset: usize,
}

impl PackedBatch {
    pub fn poly(&self) -> &RingPoly {
        &self.poly
    }
    pub fn occupancy(&self) -> usize {
        self.occupancy
    }
    pub fn offset(&self) -> usize {
        self.offset
    }
    pub fn rows(&self) -> &[QuantVector] {
        &self.rows
    }
}

/// Pack `rows` starting at row index 0.
pub fn encode_matrix(
    params: &Arc<RingParams>,
    qp: &QuantParams,
    rows: &[QuantVector],
) -> Result<PackedBatch> {
    encode_matrix_at(params, qp, 0, rows)
}

/// Pack `rows` starting at row index `offset`; all other rows are zero.
pub fn encode_matrix_at(
    params: &Arc<RingParams>,
    qp: &QuantParams,
    offset: usize,
    rows: &[QuantVector],
) -> Result<PackedBatch> {
    qp.check_ring(params)?;
    let delta = qp.rows_per_ciphertext(params);
    if offset + rows.len() > delta {
        return Err(Error::Domain(format!(
            "{} rows at offset {offset} exceed capacity {delta}",
            rows.len()
        )));
    }
    let d = qp.d;
    let t = params.t() as i128;
    let mut coeffs = vec![0u128; params.n()];
    for (i, row) in rows.iter().enumerate() {
        if row.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.dim(),
            });
        }
        let base = (offset + i) * d;
        for (j, &val) in row.values().iter().enumerate() {
            coeffs[base + (d - 1 - j)] = (val as i128).rem_euclid(t) as u128;
        }
    }
    let poly = RingPoly::from_coeffs(params, ModTag::Plain, coeffs)?;
    Ok(PackedBatch {
        rows: rows.to_vec(),
        poly,
        occupancy: rows.len(),
        offset,
    })
}

/// Query layout: element j at degree j, degrees >= d zero.
pub fn encode_query(
    params: &Arc<RingParams>,
    qp: &QuantParams,
    b: &QuantVector,
) -> Result<RingPoly> {
    qp.check_ring(params)?;
    if b.dim() != qp.d {
        return Err(Error::DimensionMismatch {
            expected: qp.d,
            got: b.dim(),
        });
    }
    let t = params.t() as i128;
    let mut coeffs = vec![0u128; params.n()];
    for (j, &val) in b.values().iter().enumerate() {
        coeffs[j] = (val as i128).rem_euclid(t) as u128;
    }
    RingPoly::from_coeffs(params, ModTag::Plain, coeffs)
}

/// Degrees carrying the per-row inner products: [d-1, 2d-1, ..., delta*d-1].
pub fn target_indices(d: usize, delta: usize) -> Vec<usize> {
    (1..=delta).map(|k| k * d - 1).collect()
}

/// Read the delta target coefficients out of a product polynomial, row order.
pub fn extract_targets(p: &RingPoly, d: usize, delta: usize) -> Vec<u128> {
    target_indices(d, delta)
        .into_iter()
        .map(|i| p.coeff(i))
        .collect()
}

/// Center-lifted target values as signed inner products.
pub fn extract_targets_signed(p: &RingPoly, d: usize, delta: usize) -> Vec<i128> {
    let t = p.modulus();
    extract_targets(p, d, delta)
        .into_iter()
        .map(|c| {
            if c < t.div_ceil(2) {
                c as i128
            } else {
                c as i128 - t as i128
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::ntt::{NTT_PRIMES_49, NTT_PRIMES_60};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn ring(n: usize, log_t: u32) -> Arc<RingParams> {
        RingParams::new(n, &[NTT_PRIMES_60[0], NTT_PRIMES_49[0]], log_t).unwrap()
    }

    fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 {
                return v.iter().map(|x| x / norm).collect();
            }
        }
    }

    #[test]
    fn quantize_basis_vector() {
        let qp = QuantParams::new(8, 100, 20).unwrap();
        let mut v = vec![0.0; 8];
        v[0] = 1.0;
        let q = normalize_quantize(&v, &qp).unwrap();
        let mut expected = vec![0i64; 8];
        expected[0] = 100;
        assert_eq!(q.values(), expected);
    }

    #[test]
    fn quantize_scale_invariance() {
        let qp = QuantParams::new(16, 500, 20).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(300);
        for _ in 0..20 {
            let v = random_unit(16, &mut rng);
            let scaled: Vec<f64> = v.iter().map(|x| 5.0 * x).collect();
            assert_eq!(
                normalize_quantize(&v, &qp).unwrap(),
                normalize_quantize(&scaled, &qp).unwrap()
            );
        }
    }

    #[test]
    fn quantize_rejects_zero_vector() {
        let qp = QuantParams::new(4, 100, 20).unwrap();
        assert!(normalize_quantize(&[0.0; 4], &qp).is_err());
    }

    #[test]
    fn quantized_inner_product_error_bound() {
        let qp = QuantParams::new(32, 500, 20).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(301);
        let p = qp.precision as f64;
        for _ in 0..200 {
            let a = random_unit(32, &mut rng);
            let b = random_unit(32, &mut rng);
            let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let qa = normalize_quantize(&a, &qp).unwrap();
            let qb = normalize_quantize(&b, &qp).unwrap();
            let ip: i64 = qa
                .values()
                .iter()
                .zip(qb.values())
                .map(|(x, y)| x * y)
                .sum();
            let deq = ip as f64 / (p * p);
            assert!(
                (deq - cos).abs() <= 2.0 * 32.0 / p,
                "cos {cos} dequantized {deq}"
            );
        }
    }

    #[test]
    fn matrix_layout_examples() {
        // N=16, d=3 -> delta=4; rows [(1,2,3)] -> [3,2,1,0,...]
        let params = ring(16, 20);
        let qp = QuantParams::new(3, 100, 20).unwrap();
        assert_eq!(qp.rows_per_ciphertext(&params), 4);

        let r1 = QuantVector::from_values(vec![1, 2, 3], &qp).unwrap();
        let batch = encode_matrix(&params, &qp, &[r1.clone()]).unwrap();
        let mut expected = vec![0u128; 16];
        expected[0] = 3;
        expected[1] = 2;
        expected[2] = 1;
        assert_eq!(batch.poly().coeffs(), expected);
        assert_eq!(batch.occupancy(), 1);

        let r2 = QuantVector::from_values(vec![4, 5, 6], &qp).unwrap();
        let batch = encode_matrix(&params, &qp, &[r1, r2]).unwrap();
        expected[3] = 6;
        expected[4] = 5;
        expected[5] = 4;
        assert_eq!(batch.poly().coeffs(), expected);
    }

    #[test]
    fn empty_batch_is_zero() {
        let params = ring(16, 20);
        let qp = QuantParams::new(3, 100, 20).unwrap();
        let batch = encode_matrix(&params, &qp, &[]).unwrap();
        assert!(batch.poly().coeffs().iter().all(|&c| c == 0));
        assert_eq!(batch.occupancy(), 0);
    }

    #[test]
    fn too_many_rows_rejected() {
        let params = ring(16, 20);
        let qp = QuantParams::new(3, 100, 20).unwrap();
        let rows: Vec<QuantVector> = (0..5).map(|_| QuantVector::zero(3)).collect();
        assert!(encode_matrix(&params, &qp, &rows).is_err());
    }

    #[test]
    fn query_layout() {
        let params = ring(16, 20);
        let qp = QuantParams::new(3, 100, 20).unwrap();
        let b = QuantVector::from_values(vec![7, 8, 9], &qp).unwrap();
        let poly = encode_query(&params, &qp, &b).unwrap();
        let mut expected = vec![0u128; 16];
        expected[0] = 7;
        expected[1] = 8;
        expected[2] = 9;
        assert_eq!(poly.coeffs(), expected);
    }

    #[test]
    fn toy_product_inner_products() {
        let params = ring(16, 20);
        let qp = QuantParams::new(3, 100, 20).unwrap();
        let rows = vec![
            QuantVector::from_values(vec![1, 2, 3], &qp).unwrap(),
            QuantVector::from_values(vec![4, 5, 6], &qp).unwrap(),
        ];
        let b = QuantVector::from_values(vec![7, 8, 9], &qp).unwrap();
        let prod = encode_matrix(&params, &qp, &rows)
            .unwrap()
            .poly()
            .mul(&encode_query(&params, &qp, &b).unwrap())
            .unwrap();
        assert_eq!(prod.coeff(2), 50);
        assert_eq!(prod.coeff(5), 122);
        assert_eq!(extract_targets(&prod, 3, 2), vec![50, 122]);
    }

    #[test]
    fn target_index_arithmetic() {
        assert_eq!(target_indices(3, 2), vec![2, 5]);
        let idx = target_indices(128, 31);
        assert_eq!(idx[0], 127);
        assert_eq!(idx[30], 3967);
        assert_eq!(idx.len(), 31);
        // last index always below the buffer region
        for (n, d) in [(64usize, 8usize), (1024, 32), (4096, 128), (4096, 512)] {
            let delta = (n - d) / d;
            assert!(delta * d - 1 < n - d);
        }
    }

    #[test]
    fn extract_mask_linearity() {
        let params = ring(64, 20);
        let qp = QuantParams::new(8, 100, 20).unwrap();
        let delta = qp.rows_per_ciphertext(&params);
        let mut rng = ChaCha20Rng::seed_from_u64(302);
        let p = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let r = RingPoly::sample_uniform(&params, ModTag::Plain, &mut rng);
        let masked = p.add(&r).unwrap();
        let t = params.t();
        let recovered: Vec<u128> = extract_targets(&masked, 8, delta)
            .iter()
            .zip(extract_targets(&r, 8, delta))
            .map(|(&m, rr)| (m + t - rr) % t)
            .collect();
        assert_eq!(recovered, extract_targets(&p, 8, delta));
        assert_eq!(
            extract_targets(&RingPoly::zero(&params, ModTag::Plain), 8, delta),
            vec![0u128; delta]
        );
    }

    /// Packing correctness against an integer matrix-vector oracle, plus the
    /// buffer-necessity and signed-exactness properties.
    #[test]
    fn packing_theorem_all_geometries() {
        let mut rng = ChaCha20Rng::seed_from_u64(303);
        for &(n, d) in &[(64usize, 8usize), (1024, 32), (4096, 128), (4096, 512)] {
            let params = ring(n, 20);
            let qp = QuantParams::new(d, 500, 20).unwrap();
            let delta = qp.rows_per_ciphertext(&params);
            let trials = if n >= 4096 { 8 } else { 25 };
            for _ in 0..trials {
                let rows: Vec<QuantVector> = (0..delta)
                    .map(|_| normalize_quantize(&random_unit(d, &mut rng), &qp).unwrap())
                    .collect();
                let query = normalize_quantize(&random_unit(d, &mut rng), &qp).unwrap();

                let pa = encode_matrix(&params, &qp, &rows).unwrap();
                let pb = encode_query(&params, &qp, &query).unwrap();
                let prod = pa.poly().mul(&pb).unwrap();
                let got = extract_targets_signed(&prod, d, delta);

                for (i, row) in rows.iter().enumerate() {
                    let expect: i128 = row
                        .values()
                        .iter()
                        .zip(query.values())
                        .map(|(&x, &y)| x as i128 * y as i128)
                        .sum();
                    assert_eq!(got[i], expect, "n={n} d={d} row={i}");
                }
            }
        }
    }

    #[test]
    fn buffer_blocks_negacyclic_wrap() {
        // compare the negacyclic product against a plain (non-wrapping)
        // integer convolution at the target degrees: with the top-d buffer
        // zeroed they agree, so no wrapped contribution lands on a target.
        let mut rng = ChaCha20Rng::seed_from_u64(304);
        let (n, d) = (64usize, 8usize);
        let params = ring(n, 20);
        let qp = QuantParams::new(d, 500, 20).unwrap();
        let delta = qp.rows_per_ciphertext(&params);
        for _ in 0..50 {
            let rows: Vec<QuantVector> = (0..delta)
                .map(|_| normalize_quantize(&random_unit(d, &mut rng), &qp).unwrap())
                .collect();
            let query = normalize_quantize(&random_unit(d, &mut rng), &qp).unwrap();
            let pa = encode_matrix(&params, &qp, &rows).unwrap();
            let pb = encode_query(&params, &qp, &query).unwrap();

            // plain convolution over the integers, no reduction
            let a = pa.poly().center_lift();
            let b = pb.center_lift();
            let mut plain = vec![0i128; 2 * n];
            for i in 0..n {
                for j in 0..n {
                    plain[i + j] += a[i] * b[j];
                }
            }
            let neg = pa.poly().mul(&pb).unwrap();
            let signed = extract_targets_signed(&neg, d, delta);
            for (k, idx) in target_indices(d, delta).into_iter().enumerate() {
                assert_eq!(signed[k], plain[idx]);
            }
        }
    }

    #[test]
    fn quant_params_invariant_enforced() {
        // p^2 + p*d/2 must stay below t/2
        assert!(QuantParams::new(128, 512, 20).is_ok());
        assert!(QuantParams::new(128, 724, 20).is_err());
        assert!(QuantParams::new(32, 10_000, 30).is_ok());
        assert!(QuantParams::new(32, 10_000, 20).is_err());
    }
}
