//! Property suites behind the `verify` command.
//!
//! Four independent checks: encoder invariance under within-class
//! permutations, agreement between the softmax encode and its sum-form
//! decomposition, finite-difference gradient validation of a full
//! policy, and exact search-space accounting. Each reports pass/fail
//! with a measured worst case instead of stopping at the first failure,
//! so a broken build shows exactly which property gave way.
//!
//! The harness can also run with a deliberately injected encoder fault.
//! Skipping the softmax leaves the encode permutation-invariant (it is
//! still a plain sum over objects) but breaks the sum-form agreement,
//! demonstrating that the two suites test different claims.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{reduction_factor, space_sizes};
use crate::encoder::{
    attention_as_sum_form, encode_attention, AttentionParams, ClassObjects, EncoderError,
    ObjectSet,
};
use crate::envs::{ClassSpec, Observation, ObsSpec};
use crate::ppo::{build_policy, probe_gradient_error, EncoderKind};
use crate::rng::{derive_seed, stream_rng, streams};

/// Outcome of one property suite.
#[derive(Clone, Debug)]
pub struct PropertyReport {
    pub name: &'static str,
    pub pass: bool,
    /// Worst case measured, or the error that interrupted the suite.
    pub detail: String,
}

/// All property outcomes from one verification run.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub properties: Vec<PropertyReport>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    /// One line per property, suitable for terminal output.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let tag = if p.pass { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag}  {}: {}\n", p.name, p.detail));
        }
        out
    }
}

/// Deliberate encoder defects for harness self-tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Pool with raw filter scores instead of their softmax.
    SkipSoftmax,
}

/// Knobs for one verification run.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Random (params, set) draws for the invariance and sum-form suites.
    pub trials: usize,
    /// Absolute tolerance for those two suites.
    pub tolerance: f64,
    pub seed: u64,
    /// Full-policy gradient check instances.
    pub grad_instances: usize,
    /// Relative tolerance for the gradient check.
    pub grad_tolerance: f64,
    pub fault: Fault,
}

impl Default for VerifyOptions {
    fn default() -> VerifyOptions {
        VerifyOptions {
            trials: 1000,
            tolerance: 1e-9,
            seed: 0,
            grad_instances: 20,
            grad_tolerance: 1e-4,
            fault: Fault::None,
        }
    }
}

/// One random draw: encoder parameters plus a compatible object set.
fn draw(rng: &mut ChaCha8Rng) -> (AttentionParams, Vec<Vec<f64>>) {
    let m = rng.random_range(2..=6);
    let d = rng.random_range(2..=4);
    let k = rng.random_range(2..=6);
    let params = AttentionParams::xavier(d, &[8, 8], k, rng);
    let objects = (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    (params, objects)
}

/// A permutation of 0..m that is never the identity.
fn scrambled(m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    if perm.windows(2).all(|w| w[0] < w[1]) {
        perm.rotate_left(1);
    }
    perm
}

fn encode_variant(
    fault: Fault,
    params: &AttentionParams,
    objects: &[Vec<f64>],
) -> Result<Vec<f64>, EncoderError> {
    match fault {
        Fault::None => encode_attention(params, objects).map(|(pooled, _)| pooled),
        Fault::SkipSoftmax => {
            let mut pooled = vec![0.0; params.k()];
            for o in objects {
                let w = params.filter().eval(o)[0];
                let z = params.inputs().eval(o);
                for (acc, v) in pooled.iter_mut().zip(&z) {
                    *acc += w * v;
                }
            }
            Ok(pooled)
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn invariance_suite(opts: &VerifyOptions) -> PropertyReport {
    let name = "encoder invariance under within-class permutation";
    let mut params_rng = stream_rng(opts.seed, streams::INIT);
    let mut perm_rng = stream_rng(opts.seed, streams::SHUFFLE);
    let mut worst = 0.0f64;
    for t in 0..opts.trials {
        let (params, objects) = draw(&mut params_rng);
        let perm = scrambled(objects.len(), &mut perm_rng);
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| objects[i].clone()).collect();
        let base = encode_variant(opts.fault, &params, &objects);
        let swapped = encode_variant(opts.fault, &params, &permuted);
        match (base, swapped) {
            (Ok(a), Ok(b)) => worst = worst.max(max_abs_diff(&a, &b)),
            (Err(e), _) | (_, Err(e)) => {
                return PropertyReport {
                    name,
                    pass: false,
                    detail: format!("trial {t}: {e}"),
                };
            }
        }
    }
    PropertyReport {
        name,
        pass: worst <= opts.tolerance,
        detail: format!(
            "max |Δ| = {worst:.3e} over {} draws (tolerance {:.1e})",
            opts.trials, opts.tolerance
        ),
    }
}

fn sum_form_suite(opts: &VerifyOptions) -> PropertyReport {
    let name = "softmax encode matches its sum-form decomposition";
    // Same parameter stream as the invariance suite, so both argue about
    // the same draws.
    let mut params_rng = stream_rng(opts.seed, streams::INIT);
    let mut worst = 0.0f64;
    for t in 0..opts.trials {
        let (params, objects) = draw(&mut params_rng);
        let direct = encode_variant(opts.fault, &params, &objects);
        let sum_form = attention_as_sum_form(&params, &objects);
        match (direct, sum_form) {
            (Ok(a), Ok(b)) => worst = worst.max(max_abs_diff(&a, &b)),
            (Err(e), _) | (_, Err(e)) => {
                return PropertyReport {
                    name,
                    pass: false,
                    detail: format!("trial {t}: {e}"),
                };
            }
        }
    }
    PropertyReport {
        name,
        pass: worst <= opts.tolerance,
        detail: format!(
            "max |Δ| = {worst:.3e} over {} draws (tolerance {:.1e})",
            opts.trials, opts.tolerance
        ),
    }
}

fn probe_spec() -> ObsSpec {
    ObsSpec {
        classes: vec![
            ClassSpec {
                name: "food".into(),
                dim: 2,
                max_slots: 3,
            },
            ClassSpec {
                name: "poison".into(),
                dim: 2,
                max_slots: 2,
            },
        ],
        d_ego: 2,
    }
}

fn probe_obs(rng: &mut ChaCha8Rng) -> Observation {
    let mut objs = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect()
    };
    let food = objs(3);
    let poison = objs(2);
    let ego = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let mut flat = Vec::new();
    for o in food.iter().chain(&poison) {
        flat.extend_from_slice(o);
    }
    flat.extend_from_slice(&ego);
    Observation {
        set: ObjectSet::new(
            vec![
                ClassObjects::new("food", 2, food),
                ClassObjects::new("poison", 2, poison),
            ],
            ego,
        ),
        flat,
    }
}

fn gradient_suite(opts: &VerifyOptions) -> PropertyReport {
    let name = "policy gradients match finite differences";
    let spec = probe_spec();
    let mut worst = 0.0f64;
    for i in 0..opts.grad_instances {
        let mut rng = stream_rng(derive_seed(opts.seed, i as u64), streams::INIT);
        let mut policy = build_policy(&spec, EncoderKind::Attention, 4, &[4], &[4], &mut rng);
        let obs = probe_obs(&mut rng);
        let action = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        match probe_gradient_error(&mut policy, obs, action, 1e-5) {
            Ok(err) => worst = worst.max(err),
            Err(e) => {
                return PropertyReport {
                    name,
                    pass: false,
                    detail: format!("instance {i}: {e}"),
                };
            }
        }
    }
    PropertyReport {
        name,
        pass: worst <= opts.grad_tolerance,
        detail: format!(
            "max relative error = {worst:.3e} over {} instances (tolerance {:.1e})",
            opts.grad_instances, opts.grad_tolerance
        ),
    }
}

fn space_suite() -> PropertyReport {
    let name = "search-space sizes satisfy the exact m! identity";
    let mut checked = 0usize;
    for n in 1..=30u64 {
        for m in 1..=n {
            match space_sizes(n, m) {
                Ok(r) => {
                    if &r.invariant_size * &r.reduction != r.ordered_size {
                        return PropertyReport {
                            name,
                            pass: false,
                            detail: format!("identity fails at n={n}, m={m}"),
                        };
                    }
                    checked += 1;
                }
                Err(e) => {
                    return PropertyReport {
                        name,
                        pass: false,
                        detail: format!("n={n}, m={m}: {e}"),
                    };
                }
            }
        }
    }
    let spot = space_sizes(5, 2).expect("valid domain");
    let spot_ok = spot.ordered_size == 20u32.into()
        && spot.invariant_size == 10u32.into()
        && spot.reduction == 2u32.into();
    let cross_ok = (1..=10u64).all(|m| {
        reduction_factor(m).expect("valid domain") == space_sizes(m + 3, m).expect("valid domain").reduction
    });
    if !spot_ok || !cross_ok {
        return PropertyReport {
            name,
            pass: false,
            detail: "spot value or factorial cross-check failed".into(),
        };
    }
    PropertyReport {
        name,
        pass: true,
        detail: format!("{checked} (n, m) pairs, spot values, and factorial cross-checks"),
    }
}

/// Runs every property suite and collects the outcomes. Never panics on
/// a failing property; failures land in the report.
pub fn run_verification(opts: &VerifyOptions) -> VerifyReport {
    VerifyReport {
        properties: vec![
            invariance_suite(opts),
            sum_form_suite(opts),
            gradient_suite(opts),
            space_suite(),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(fault: Fault) -> VerifyOptions {
        VerifyOptions {
            trials: 60,
            grad_instances: 3,
            fault,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn correct_build_passes_every_property() {
        let report = run_verification(&quick(Fault::None));
        assert!(report.all_pass(), "{}", report.render());
        assert_eq!(report.properties.len(), 4);
    }

    #[test]
    fn skipping_softmax_breaks_only_the_sum_form_suite() {
        let report = run_verification(&quick(Fault::SkipSoftmax));
        assert!(!report.all_pass());
        let by_name: Vec<(bool, &str)> = report
            .properties
            .iter()
            .map(|p| (p.pass, p.name))
            .collect();
        // Raw-score pooling is still a symmetric sum, so invariance
        // holds; only the decomposition check catches the fault.
        assert!(by_name[0].0, "invariance should survive the fault");
        assert!(!by_name[1].0, "sum-form agreement should fail");
        assert!(by_name[2].0);
        assert!(by_name[3].0);
    }

    #[test]
    fn zero_tolerance_trips_on_float_reassociation() {
        let opts = VerifyOptions {
            tolerance: 0.0,
            ..quick(Fault::None)
        };
        let report = run_verification(&opts);
        assert!(!report.all_pass());
        assert!(!report.properties[0].pass);
    }

    #[test]
    fn report_renders_one_line_per_property() {
        let report = run_verification(&quick(Fault::None));
        let text = report.render();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l.starts_with("PASS")));
        let broken = run_verification(&quick(Fault::SkipSoftmax));
        assert!(broken.render().lines().any(|l| l.starts_with("FAIL")));
    }
}
