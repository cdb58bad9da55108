//! Softmax attention pooling over an object set.
//!
//! Each object is scored by a scalar filter network; the softmax of those
//! scores weights the objects' feature-network outputs, and the weighted
//! contributions are summed over the set. Scoring and pooling both treat
//! objects symmetrically, so any permutation of the input rows gives the
//! same pooled output.

use rand_chacha::ChaCha8Rng;

use super::EncoderError;
use crate::diffcore::{Mlp, MlpIds, Tape, Tensor, ValueId};

/// Parameters of the attention encoder: a scalar-output filter network and
/// a feature network of output width `k`.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    filter: Mlp,
    inputs: Mlp,
}

/// Tape handles for recorded attention parameters.
#[derive(Clone, Debug)]
pub struct AttentionIds {
    pub filter: MlpIds,
    pub inputs: MlpIds,
}

impl AttentionIds {
    /// Parameter leaves in [`AttentionParams::params_mut`] order.
    pub fn leaf_ids(&self) -> Vec<ValueId> {
        let mut out = self.filter.leaf_ids();
        out.extend(self.inputs.leaf_ids());
        out
    }
}

/// Intermediate quantities of one attention encode, for inspection and
/// testing: raw scores, softmax weights, weighted per-object contributions,
/// and the pooled output.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    /// Raw filter outputs, one per object.
    pub scores: Vec<f64>,
    /// Softmax of the scores; sums to 1 within 1e-12.
    pub weights: Vec<f64>,
    /// Weight-scaled feature outputs, one row per object.
    pub weighted: Vec<Vec<f64>>,
    /// Column sum of `weighted`.
    pub pooled: Vec<f64>,
}

impl AttentionParams {
    /// Validates the width contract: the filter scores with a single output.
    pub fn new(filter: Mlp, inputs: Mlp) -> Result<AttentionParams, EncoderError> {
        if filter.out_dim() != 1 {
            return Err(EncoderError::FilterWidth(filter.out_dim()));
        }
        Ok(AttentionParams { filter, inputs })
    }

    /// Fresh Xavier-initialized encoder for `d`-dimensional objects with
    /// the given hidden widths and output width `k`.
    pub fn xavier(d: usize, hidden: &[usize], k: usize, rng: &mut ChaCha8Rng) -> AttentionParams {
        let mut filter_dims = vec![d];
        filter_dims.extend_from_slice(hidden);
        filter_dims.push(1);
        let mut input_dims = vec![d];
        input_dims.extend_from_slice(hidden);
        input_dims.push(k);
        AttentionParams {
            filter: Mlp::xavier(&filter_dims, rng),
            inputs: Mlp::xavier(&input_dims, rng),
        }
    }

    pub fn filter(&self) -> &Mlp {
        &self.filter
    }

    pub fn inputs(&self) -> &Mlp {
        &self.inputs
    }

    /// Object feature dimension this encoder accepts.
    pub fn in_dim(&self) -> usize {
        self.filter.in_dim()
    }

    /// Pooled output width.
    pub fn k(&self) -> usize {
        self.inputs.out_dim()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.filter.params_mut();
        out.extend(self.inputs.params_mut());
        out
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = self.filter.named_params(&format!("{prefix}.filter"));
        out.extend(self.inputs.named_params(&format!("{prefix}.inputs")));
        out
    }

    pub fn record(&self, tape: &mut Tape) -> AttentionIds {
        AttentionIds {
            filter: self.filter.record(tape),
            inputs: self.inputs.record(tape),
        }
    }

    /// Tape-mode encode over already-recorded object leaves.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ids: &AttentionIds,
        objects: &[ValueId],
    ) -> Result<ValueId, EncoderError> {
        if objects.is_empty() {
            return Err(EncoderError::EmptySet);
        }
        let mut scores = Vec::with_capacity(objects.len());
        for &o in objects {
            let y = self.filter.forward(tape, &ids.filter, o)?;
            scores.push(y);
        }
        let scores = tape.concat(&scores)?;
        let weights = tape.softmax(scores)?;
        let mut feats = Vec::with_capacity(objects.len());
        for &o in objects {
            feats.push(self.inputs.forward(tape, &ids.inputs, o)?);
        }
        let stacked = tape.stack_rows(&feats)?;
        let weighted = tape.scale_rows(stacked, weights)?;
        Ok(tape.reduce_sum(weighted, 0)?)
    }
}

fn check_objects(params: &AttentionParams, objects: &[Vec<f64>]) -> Result<(), EncoderError> {
    if objects.is_empty() {
        return Err(EncoderError::EmptySet);
    }
    let d = params.in_dim();
    for (index, o) in objects.iter().enumerate() {
        if o.len() != d {
            return Err(EncoderError::DimMismatch {
                index,
                expected: d,
                got: o.len(),
            });
        }
    }
    Ok(())
}

/// Max-subtracted softmax, same loop order as the tape primitive so value
/// and tape evaluation agree bit-for-bit.
fn softmax_vec(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let mut out: Vec<f64> = scores.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Encodes an object set by softmax attention pooling and returns the
/// pooled vector together with its intermediate trace.
///
/// The weighted contributions are accumulated in a fixed left-to-right
/// pass; permutation invariance therefore holds to tolerance, not
/// bit-exactness, because float addition is not associative.
pub fn encode_attention(
    params: &AttentionParams,
    objects: &[Vec<f64>],
) -> Result<(Vec<f64>, AttentionTrace), EncoderError> {
    check_objects(params, objects)?;
    let scores: Vec<f64> = objects
        .iter()
        .map(|o| params.filter.eval(o)[0])
        .collect();
    let weights = softmax_vec(&scores);
    let k = params.k();
    let mut pooled = vec![0.0; k];
    let mut weighted = Vec::with_capacity(objects.len());
    for (o, &w) in objects.iter().zip(&weights) {
        let mut z = params.inputs.eval(o);
        for v in z.iter_mut() {
            *v *= w;
        }
        for (acc, v) in pooled.iter_mut().zip(&z) {
            *acc += v;
        }
        weighted.push(z);
    }
    let trace = AttentionTrace {
        scores,
        weights,
        weighted,
        pooled: pooled.clone(),
    };
    Ok((pooled, trace))
}

/// Computes the attention encode through its sum decomposition: map each
/// object to `(exp(score)·features, exp(score))`, pool both parts by plain
/// summation, then divide. This is the independent oracle showing the
/// mechanism is a per-object transform followed by a sum followed by a
/// final transform. Scores are shifted by the set maximum, exactly as the
/// softmax route shifts, so the two routes agree numerically and not just
/// in exact arithmetic.
pub fn attention_as_sum_form(
    params: &AttentionParams,
    objects: &[Vec<f64>],
) -> Result<Vec<f64>, EncoderError> {
    check_objects(params, objects)?;
    let scores: Vec<f64> = objects
        .iter()
        .map(|o| params.filter.eval(o)[0])
        .collect();
    let shift = scores.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let k = params.k();
    let mut numer = vec![0.0; k];
    let mut denom = 0.0;
    for (o, &y) in objects.iter().zip(&scores) {
        let e = (y - shift).exp();
        let u = params.inputs.eval(o);
        for (acc, v) in numer.iter_mut().zip(&u) {
            *acc += e * v;
        }
        denom += e;
    }
    for v in &mut numer {
        *v /= denom;
    }
    Ok(numer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_objects(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn singleton_passes_features_through_exactly() {
        let mut rng = stream_rng(41, 0);
        let params = AttentionParams::xavier(3, &[8], 5, &mut rng);
        let s = vec![0.3, -1.2, 0.7];
        let (pooled, trace) = encode_attention(&params, &[s.clone()]).unwrap();
        assert_eq!(pooled, params.inputs().eval(&s));
        assert_eq!(trace.weights, vec![1.0]);
        assert_eq!(attention_as_sum_form(&params, &[s.clone()]).unwrap(), pooled);
    }

    #[test]
    fn two_identical_objects_average_to_the_same_features() {
        let mut rng = stream_rng(42, 0);
        let params = AttentionParams::xavier(2, &[8], 4, &mut rng);
        let s = vec![0.5, -0.25];
        let (pooled, trace) = encode_attention(&params, &[s.clone(), s.clone()]).unwrap();
        assert_eq!(trace.weights, vec![0.5, 0.5]);
        // 0.5·u + 0.5·u is exact in binary arithmetic.
        assert_eq!(pooled, params.inputs().eval(&s));
    }

    #[test]
    fn invariant_under_all_orders_of_three() {
        let mut rng = stream_rng(43, 0);
        let params = AttentionParams::xavier(2, &[8, 8], 6, &mut rng);
        let objs = random_objects(&mut rng, 3, 2);
        let (base, _) = encode_attention(&params, &objs).unwrap();
        let orders = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for ord in orders {
            let perm: Vec<Vec<f64>> = ord.iter().map(|&i| objs[i].clone()).collect();
            let (out, _) = encode_attention(&params, &perm).unwrap();
            assert!(max_abs_diff(&base, &out) <= 1e-9);
        }
    }

    #[test]
    fn sum_form_matches_softmax_route() {
        let mut rng = stream_rng(44, 0);
        for _ in 0..50 {
            let params = AttentionParams::xavier(3, &[8], 4, &mut rng);
            let objs = random_objects(&mut rng, 4, 3);
            let (a, _) = encode_attention(&params, &objs).unwrap();
            let b = attention_as_sum_form(&params, &objs).unwrap();
            assert!(max_abs_diff(&a, &b) <= 1e-9);
        }
    }

    #[test]
    fn equal_scores_pool_to_arithmetic_mean() {
        let mut rng = stream_rng(45, 0);
        let mut params = AttentionParams::xavier(2, &[4], 3, &mut rng);
        // Zero the filter so every object scores identically.
        for t in params.filter.params_mut() {
            for v in t.values_mut() {
                *v = 0.0;
            }
        }
        let objs = random_objects(&mut rng, 2, 2);
        let u0 = params.inputs().eval(&objs[0]);
        let u1 = params.inputs().eval(&objs[1]);
        let mean: Vec<f64> = u0.iter().zip(&u1).map(|(a, b)| (a + b) / 2.0).collect();
        let out = attention_as_sum_form(&params, &objs).unwrap();
        assert!(max_abs_diff(&mean, &out) <= 1e-12);
    }

    #[test]
    fn trace_invariants_hold() {
        let mut rng = stream_rng(46, 0);
        for _ in 0..50 {
            let params = AttentionParams::xavier(2, &[8], 5, &mut rng);
            let m = rng.random_range(1..7);
            let objs = random_objects(&mut rng, m, 2);
            let (pooled, trace) = encode_attention(&params, &objs).unwrap();
            let wsum: f64 = trace.weights.iter().sum();
            assert!((wsum - 1.0).abs() <= 1e-12);
            for j in 0..params.k() {
                let col: f64 = trace.weighted.iter().map(|z| z[j]).sum();
                assert!((col - pooled[j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn output_width_ignores_set_size() {
        let mut rng = stream_rng(47, 0);
        let params = AttentionParams::xavier(2, &[8], 7, &mut rng);
        let one = random_objects(&mut rng, 1, 2);
        let fifty = random_objects(&mut rng, 50, 2);
        assert_eq!(encode_attention(&params, &one).unwrap().0.len(), 7);
        assert_eq!(encode_attention(&params, &fifty).unwrap().0.len(), 7);
    }

    #[test]
    fn rejects_empty_and_misshapen_sets() {
        let mut rng = stream_rng(48, 0);
        let params = AttentionParams::xavier(2, &[4], 3, &mut rng);
        assert!(matches!(
            encode_attention(&params, &[]),
            Err(EncoderError::EmptySet)
        ));
        assert!(matches!(
            attention_as_sum_form(&params, &[]),
            Err(EncoderError::EmptySet)
        ));
        let err = encode_attention(&params, &[vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, EncoderError::DimMismatch { index: 1, .. }));
    }

    #[test]
    fn tape_forward_matches_value_mode() {
        let mut rng = stream_rng(49, 0);
        let params = AttentionParams::xavier(2, &[8], 4, &mut rng);
        let objs = random_objects(&mut rng, 3, 2);
        let (value, _) = encode_attention(&params, &objs).unwrap();
        let mut tape = Tape::new();
        let ids = params.record(&mut tape);
        let leaves: Vec<ValueId> = objs.iter().map(|o| tape.leaf_slice(o)).collect();
        let out = params.forward(&mut tape, &ids, &leaves).unwrap();
        for (a, b) in value.iter().zip(tape.val(out)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn filter_width_contract() {
        let mut rng = stream_rng(50, 0);
        let wide = Mlp::xavier(&[2, 4, 2], &mut rng);
        let inputs = Mlp::xavier(&[2, 4, 3], &mut rng);
        assert!(matches!(
            AttentionParams::new(wide, inputs),
            Err(EncoderError::FilterWidth(2))
        ));
    }
}
