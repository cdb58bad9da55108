//! Per-class encoder composition with an ego context vector.

use super::attention::{AttentionIds, AttentionParams};
use super::deepsets::{DeepSetsIds, DeepSetsParams};
use super::set::ObjectSet;
use super::EncoderError;
use crate::diffcore::{Tape, Tensor, ValueId};

/// A set encoder for one object class.
#[derive(Clone, Debug)]
pub enum SetEncoder {
    Attention(AttentionParams),
    DeepSets(DeepSetsParams),
}

/// Tape handles for one recorded class encoder.
#[derive(Clone, Debug)]
pub enum SetEncoderIds {
    Attention(AttentionIds),
    DeepSets(DeepSetsIds),
}

impl SetEncoder {
    pub fn k(&self) -> usize {
        match self {
            SetEncoder::Attention(p) => p.k(),
            SetEncoder::DeepSets(p) => p.k(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            SetEncoder::Attention(p) => p.in_dim(),
            SetEncoder::DeepSets(p) => p.in_dim(),
        }
    }

    fn encode(&self, objects: &[Vec<f64>]) -> Result<Vec<f64>, EncoderError> {
        match self {
            SetEncoder::Attention(p) => Ok(super::encode_attention(p, objects)?.0),
            SetEncoder::DeepSets(p) => super::encode_deepsets(p, objects),
        }
    }

    fn record(&self, tape: &mut Tape) -> SetEncoderIds {
        match self {
            SetEncoder::Attention(p) => SetEncoderIds::Attention(p.record(tape)),
            SetEncoder::DeepSets(p) => SetEncoderIds::DeepSets(p.record(tape)),
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        ids: &SetEncoderIds,
        objects: &[ValueId],
    ) -> Result<ValueId, EncoderError> {
        match (self, ids) {
            (SetEncoder::Attention(p), SetEncoderIds::Attention(i)) => p.forward(tape, i, objects),
            (SetEncoder::DeepSets(p), SetEncoderIds::DeepSets(i)) => p.forward(tape, i, objects),
            _ => unreachable!("ids recorded from a different encoder"),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            SetEncoder::Attention(p) => p.params_mut(),
            SetEncoder::DeepSets(p) => p.params_mut(),
        }
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        match self {
            SetEncoder::Attention(p) => p.named_params(prefix),
            SetEncoder::DeepSets(p) => p.named_params(prefix),
        }
    }
}

/// One encoder per object class, composed by concatenating each class's
/// pooled output in a fixed class order, followed by the ego context
/// vector. Invariant to permutations within a class; sensitive to which
/// class an object belongs to.
#[derive(Clone, Debug)]
pub struct MulticlassEncoder {
    per_class: Vec<(String, SetEncoder)>,
    d_ego: usize,
}

/// Tape handles for recorded multiclass parameters.
#[derive(Clone, Debug)]
pub struct MulticlassIds {
    per_class: Vec<SetEncoderIds>,
}

impl SetEncoderIds {
    pub fn leaf_ids(&self) -> Vec<ValueId> {
        match self {
            SetEncoderIds::Attention(i) => i.leaf_ids(),
            SetEncoderIds::DeepSets(i) => i.leaf_ids(),
        }
    }
}

impl MulticlassIds {
    /// Parameter leaves in [`MulticlassEncoder::params_mut`] order.
    pub fn leaf_ids(&self) -> Vec<ValueId> {
        self.per_class.iter().flat_map(|i| i.leaf_ids()).collect()
    }
}

impl MulticlassEncoder {
    pub fn new(per_class: Vec<(String, SetEncoder)>, d_ego: usize) -> MulticlassEncoder {
        MulticlassEncoder { per_class, d_ego }
    }

    pub fn classes(&self) -> &[(String, SetEncoder)] {
        &self.per_class
    }

    pub fn d_ego(&self) -> usize {
        self.d_ego
    }

    /// Total output width: the pooled widths in class order plus the ego.
    pub fn out_dim(&self) -> usize {
        self.per_class.iter().map(|(_, e)| e.k()).sum::<usize>() + self.d_ego
    }

    fn check_coverage(&self, set: &ObjectSet) -> Result<(), EncoderError> {
        set.validate()?;
        for c in &set.classes {
            if !c.is_empty() && !self.per_class.iter().any(|(n, _)| n == &c.name) {
                return Err(EncoderError::MissingEncoder {
                    class: c.name.clone(),
                });
            }
        }
        if set.ego.len() != self.d_ego {
            return Err(EncoderError::EgoMismatch {
                expected: self.d_ego,
                got: set.ego.len(),
            });
        }
        Ok(())
    }

    /// Value-mode encode. A class with no objects contributes a zero
    /// vector: softmax pooling is undefined on zero elements, and zeros
    /// signal "nothing present" uniformly.
    pub fn encode(&self, set: &ObjectSet) -> Result<Vec<f64>, EncoderError> {
        self.check_coverage(set)?;
        let mut out = Vec::with_capacity(self.out_dim());
        for (name, enc) in &self.per_class {
            match set.class(name) {
                Some(c) if !c.is_empty() => out.extend(enc.encode(&c.objects)?),
                _ => out.extend(std::iter::repeat(0.0).take(enc.k())),
            }
        }
        out.extend_from_slice(&set.ego);
        Ok(out)
    }

    pub fn record(&self, tape: &mut Tape) -> MulticlassIds {
        MulticlassIds {
            per_class: self.per_class.iter().map(|(_, e)| e.record(tape)).collect(),
        }
    }

    /// Tape-mode encode: records the observation's objects and ego as
    /// leaves and returns the concatenated feature vector.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ids: &MulticlassIds,
        set: &ObjectSet,
    ) -> Result<ValueId, EncoderError> {
        self.check_coverage(set)?;
        let mut parts = Vec::with_capacity(self.per_class.len() + 1);
        for ((name, enc), enc_ids) in self.per_class.iter().zip(&ids.per_class) {
            match set.class(name) {
                Some(c) if !c.is_empty() => {
                    let leaves: Vec<ValueId> =
                        c.objects.iter().map(|o| tape.leaf_slice(o)).collect();
                    parts.push(enc.forward(tape, enc_ids, &leaves)?);
                }
                _ => parts.push(tape.leaf_slice(&vec![0.0; enc.k()])),
            }
        }
        if self.d_ego > 0 {
            parts.push(tape.leaf_slice(&set.ego));
        }
        Ok(tape.concat(&parts)?)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for (_, e) in &mut self.per_class {
            out.extend(e.params_mut());
        }
        out
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, e) in &self.per_class {
            out.extend(e.named_params(&format!("{prefix}.{name}")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_attention, ClassObjects};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_objects(rng: &mut rand_chacha::ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn single_class_without_ego_degenerates_to_plain_attention() {
        let mut rng = stream_rng(61, 0);
        let params = AttentionParams::xavier(2, &[8], 4, &mut rng);
        let enc = MulticlassEncoder::new(
            vec![("food".into(), SetEncoder::Attention(params.clone()))],
            0,
        );
        let objs = random_objects(&mut rng, 3, 2);
        let set = ObjectSet::new(vec![ClassObjects::new("food", 2, objs.clone())], vec![]);
        let via_multi = enc.encode(&set).unwrap();
        let (direct, _) = encode_attention(&params, &objs).unwrap();
        assert_eq!(via_multi, direct);
    }

    #[test]
    fn output_length_sums_class_widths_and_ego() {
        let mut rng = stream_rng(62, 0);
        let enc = MulticlassEncoder::new(
            vec![
                (
                    "a".into(),
                    SetEncoder::Attention(AttentionParams::xavier(2, &[4], 4, &mut rng)),
                ),
                (
                    "b".into(),
                    SetEncoder::Attention(AttentionParams::xavier(2, &[4], 4, &mut rng)),
                ),
            ],
            2,
        );
        assert_eq!(enc.out_dim(), 10);
        let set = ObjectSet::new(
            vec![
                ClassObjects::new("a", 2, random_objects(&mut rng, 2, 2)),
                ClassObjects::new("b", 2, random_objects(&mut rng, 3, 2)),
            ],
            vec![0.1, 0.2],
        );
        assert_eq!(enc.encode(&set).unwrap().len(), 10);
    }

    #[test]
    fn within_class_permutations_hold_but_cross_class_moves_do_not() {
        let mut rng = stream_rng(63, 0);
        let enc = MulticlassEncoder::new(
            vec![
                (
                    "a".into(),
                    SetEncoder::Attention(AttentionParams::xavier(2, &[8], 5, &mut rng)),
                ),
                (
                    "b".into(),
                    SetEncoder::Attention(AttentionParams::xavier(2, &[8], 5, &mut rng)),
                ),
            ],
            1,
        );
        let a = random_objects(&mut rng, 3, 2);
        let b = random_objects(&mut rng, 2, 2);
        let base_set = ObjectSet::new(
            vec![
                ClassObjects::new("a", 2, a.clone()),
                ClassObjects::new("b", 2, b.clone()),
            ],
            vec![0.7],
        );
        let base = enc.encode(&base_set).unwrap();

        let mut a_perm = a.clone();
        a_perm.swap(0, 2);
        let mut b_perm = b.clone();
        b_perm.swap(0, 1);
        let perm_set = ObjectSet::new(
            vec![
                ClassObjects::new("a", 2, a_perm),
                ClassObjects::new("b", 2, b_perm),
            ],
            vec![0.7],
        );
        let perm = enc.encode(&perm_set).unwrap();
        let diff = base
            .iter()
            .zip(&perm)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-9, "within-class permutation moved output by {diff}");

        // Move one object from class a to class b: the output must change.
        let mut a_short = a.clone();
        let moved = a_short.pop().unwrap();
        let mut b_long = b.clone();
        b_long.push(moved);
        let moved_set = ObjectSet::new(
            vec![
                ClassObjects::new("a", 2, a_short),
                ClassObjects::new("b", 2, b_long),
            ],
            vec![0.7],
        );
        let moved_out = enc.encode(&moved_set).unwrap();
        let diff = base
            .iter()
            .zip(&moved_out)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-6, "cross-class move should change the encoding");
    }

    #[test]
    fn empty_class_contributes_zeros() {
        let mut rng = stream_rng(64, 0);
        let enc = MulticlassEncoder::new(
            vec![(
                "attacker".into(),
                SetEncoder::Attention(AttentionParams::xavier(2, &[4], 3, &mut rng)),
            )],
            2,
        );
        let set = ObjectSet::new(
            vec![ClassObjects::new("attacker", 2, vec![])],
            vec![0.5, -0.5],
        );
        assert_eq!(enc.encode(&set).unwrap(), vec![0.0, 0.0, 0.0, 0.5, -0.5]);
    }

    #[test]
    fn populated_class_without_encoder_is_an_error() {
        let mut rng = stream_rng(65, 0);
        let enc = MulticlassEncoder::new(
            vec![(
                "a".into(),
                SetEncoder::Attention(AttentionParams::xavier(2, &[4], 3, &mut rng)),
            )],
            0,
        );
        let set = ObjectSet::new(
            vec![ClassObjects::new("mystery", 2, vec![vec![0.0, 0.0]])],
            vec![],
        );
        assert!(matches!(
            enc.encode(&set),
            Err(EncoderError::MissingEncoder { .. })
        ));
        let bad_ego = ObjectSet::new(vec![], vec![1.0]);
        assert!(matches!(
            enc.encode(&bad_ego),
            Err(EncoderError::EgoMismatch {
                expected: 0,
                got: 1
            })
        ));
    }

    #[test]
    fn tape_forward_matches_value_mode() {
        let mut rng = stream_rng(66, 0);
        let enc = MulticlassEncoder::new(
            vec![
                (
                    "m".into(),
                    SetEncoder::Attention(AttentionParams::xavier(3, &[8], 4, &mut rng)),
                ),
                (
                    "e".into(),
                    SetEncoder::DeepSets(DeepSetsParams::xavier(2, &[8], 4, 3, &mut rng)),
                ),
            ],
            2,
        );
        let set = ObjectSet::new(
            vec![
                ClassObjects::new("m", 3, random_objects(&mut rng, 2, 3)),
                ClassObjects::new("e", 2, vec![]),
            ],
            vec![0.25, -0.75],
        );
        let value = enc.encode(&set).unwrap();
        let mut tape = Tape::new();
        let ids = enc.record(&mut tape);
        let out = enc.forward(&mut tape, &ids, &set).unwrap();
        for (a, b) in value.iter().zip(tape.val(out)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
