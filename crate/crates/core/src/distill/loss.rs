use super::student::{ReferencePolicy, StudentModel};
use crate::error::{Error, Result};
use crate::intent::IoKdSample;
use crate::nn::Matrix;
use crate::preference::{angular_distance, PreferenceVector};

/// Lower clamp on the dynamic temperature, as a fraction of `beta_base`.
pub const BETA_FLOOR_FRACTION: f64 = 0.05;

/// `beta_base * (1 - scale_factor * angular_distance(s_p, s_bar))`, clamped
/// below at `0.05 * beta_base`.
pub fn dynamic_beta(s_p: &PreferenceVector, s_bar: &PreferenceVector, beta_base: f64, scale_factor: f64) -> f64 {
    let raw = beta_base * (1.0 - scale_factor * angular_distance(s_p, s_bar));
    raw.max(BETA_FLOOR_FRACTION * beta_base)
}

/// A sample resolved against the vocabulary and the frozen reference.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub x: Vec<f64>,
    pub positive: usize,
    pub contrastive: Vec<usize>,
    /// `log pi_ref(s_p) - log pi_ref(s_c)` for each contrastive entry.
    pub ref_gap: Vec<f64>,
    pub beta: f64,
}

/// Resolves samples; those whose positive collides with a contrastive vector
/// after snapping are dropped and counted.
pub(crate) fn prepare(
    reference: &ReferencePolicy,
    samples: &[IoKdSample],
    s_bar: &PreferenceVector,
    beta_base: f64,
    scale_factor: f64,
) -> Result<(Vec<Prepared>, usize)> {
    let model = reference.model();
    let vocab = model.vocab();
    let mut out = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for s in samples {
        if s.contrastive.is_empty() {
            return Err(Error::Size(format!("sample {:?} has no contrastive vectors", s.prompt.text)));
        }
        let positive = vocab.snap(&s.preference);
        let contrastive: Vec<usize> = s.contrastive.iter().map(|c| vocab.snap(c)).collect();
        if contrastive.contains(&positive) {
            skipped += 1;
            continue;
        }
        let x = model.embed(&s.prompt).values().to_vec();
        let enc = model.encode(&x);
        // The partition function cancels in log-prob differences.
        let rp = model.logit_at(&enc, positive);
        let ref_gap = contrastive.iter().map(|&c| rp - model.logit_at(&enc, c)).collect();
        out.push(Prepared {
            x,
            positive,
            contrastive,
            ref_gap,
            beta: dynamic_beta(&s.preference, s_bar, beta_base, scale_factor),
        });
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone)]
pub struct IokdLoss {
    /// Mean of `-log sigmoid(margin)` over all (sample, contrastive) pairs.
    pub loss: f64,
    /// Gradients in parameter order of the student.
    pub grads: Vec<Matrix>,
    pub pairs: usize,
    pub skipped: usize,
    pub mean_beta: f64,
}

fn log_sigmoid(m: f64) -> f64 {
    // -softplus(-m), stable for both signs
    if m >= 0.0 {
        -(-m).exp().ln_1p()
    } else {
        m - m.exp().ln_1p()
    }
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
pub(crate) fn margins(model: &StudentModel, p: &Prepared) -> Vec<f64> {
    let enc = model.encode(&p.x);
    let zp = model.logit_at(&enc, p.positive);
    p.contrastive
        .iter()
        .zip(&p.ref_gap)
        .map(|(&c, gap)| p.beta * ((zp - model.logit_at(&enc, c)) - gap))
        .collect()
}

pub(crate) fn loss_prepared(model: &StudentModel, batch: &[&Prepared], with_grads: bool) -> IokdLoss {
    let mut grads = if with_grads { model.params().zeros_like() } else { Vec::new() };
    let pairs: usize = batch.iter().map(|p| p.contrastive.len()).sum();
    let mut out = IokdLoss {
        loss: 0.0,
        grads: Vec::new(),
        pairs,
        skipped: 0,
        mean_beta: if batch.is_empty() { 0.0 } else { batch.iter().map(|p| p.beta).sum::<f64>() / batch.len() as f64 },
    };
    if pairs == 0 {
        out.grads = grads;
        return out;
    }
    let inv = 1.0 / pairs as f64;
    for p in batch {
        let enc = model.encode(&p.x);
        let zp = model.logit_at(&enc, p.positive);
        let mut dz: Vec<(usize, f64)> = Vec::with_capacity(p.contrastive.len() + 1);
        let mut dzp = 0.0;
        for (&c, gap) in p.contrastive.iter().zip(&p.ref_gap) {
            let m = p.beta * ((zp - model.logit_at(&enc, c)) - gap);
            out.loss -= log_sigmoid(m) * inv;
            // d(-log sigmoid(m))/dm = -sigmoid(-m)
            let g = -sigmoid(-m) * p.beta * inv;
            dzp += g;
            dz.push((c, -g));
        }
        if with_grads {
            dz.push((p.positive, dzp));
            model.backward(&p.x, &enc, &dz, &mut grads);
        }
    }
    out.grads = grads;
    out
}

/// Weighted pairwise distillation loss and its gradient for a batch.
///
/// Each sample's temperature comes from [`dynamic_beta`] against the dataset
/// mean `s_bar`; `scale_factor = 0` gives the unweighted loss.
pub fn iokd_loss(
    model: &StudentModel,
    reference: &ReferencePolicy,
    batch: &[IoKdSample],
    s_bar: &PreferenceVector,
    beta_base: f64,
    scale_factor: f64,
) -> Result<IokdLoss> {
    if batch.is_empty() {
        return Err(Error::Size("distillation batch is empty".into()));
    }
    let (prepared, skipped) = prepare(reference, batch, s_bar, beta_base, scale_factor)?;
    let refs: Vec<&Prepared> = prepared.iter().collect();
    let mut out = loss_prepared(model, &refs, true);
    out.skipped = skipped;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::student::HeadBasis;
    use crate::distill::vocab::PreferenceVocab;
    use crate::intent::{Embedder, Prompt};
    use crate::nn::finite_diff_check;
    use crate::nn::glorot_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> StudentModel {
        StudentModel::new(6, PreferenceVocab::new(0.2).unwrap(), Embedder::new(32), HeadBasis::default(), seed).unwrap()
    }

    fn perturbed(m: &StudentModel, seed: u64) -> StudentModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = m.clone();
        for i in 0..out.params().len() {
            let (r, c) = out.params().get(i).shape();
            let noise = glorot_uniform(r, c, &mut rng);
            out.params_mut().get_mut(i).add_assign(&noise).unwrap();
        }
        out
    }

    fn batch() -> Vec<IoKdSample> {
        let v = |w: [f64; 4]| PreferenceVector::project(w);
        vec![
            IoKdSample {
                prompt: Prompt::new("write a precise report quickly", 1).unwrap(),
                preference: v([0.4, 0.3, 0.2, 0.1]),
                contrastive: vec![v([0.1, 0.1, 0.1, 0.7]), v([0.05, 0.05, 0.8, 0.1])],
            },
            IoKdSample {
                prompt: Prompt::new("answer fast please", 2).unwrap(),
                preference: v([0.2, 0.1, 0.6, 0.1]),
                contrastive: vec![v([0.7, 0.1, 0.1, 0.1])],
            },
            IoKdSample {
                prompt: Prompt::new("keep the payment service stable", 3).unwrap(),
                preference: v([0.2, 0.2, 0.2, 0.4]),
                contrastive: vec![v([0.6, 0.2, 0.2, 0.0]), v([0.0, 0.8, 0.2, 0.0])],
            },
        ]
    }

    #[test]
    fn beta_examples() {
        let a = PreferenceVector::new([1.0 - 3e-3, 1e-3, 1e-3, 1e-3]).unwrap();
        let b = PreferenceVector::new([1e-3, 1.0 - 3e-3, 1e-3, 1e-3]).unwrap();
        assert_eq!(dynamic_beta(&a, &a, 0.7, 1.3), 0.7);
        assert_eq!(dynamic_beta(&a, &b, 0.7, 0.0), 0.7);
        let d = angular_distance(a, b);
        assert!((dynamic_beta(&a, &b, 2.0, 1.0) - 2.0 * (1.0 - d)).abs() < 1e-15);
        assert_eq!(dynamic_beta(&a, &b, 2.0, 2.0), 2.0 * (1.0 - 2.0 * d).max(0.05));
    }

    #[test]
    fn beta_at_half_distance_halves() {
        // Orthogonal axes are half a turn apart in normalised angle.
        let x = [1.0, 0.0, 0.0, 0.0];
        let y = [0.0, 1.0, 0.0, 0.0];
        assert!((angular_distance(x, y) - 0.5).abs() < 1e-15);
        let raw = 3.0 * (1.0 - 1.0 * angular_distance(x, y));
        assert!((raw - 1.5).abs() < 1e-15);
    }

    #[test]
    fn loss_is_ln2_at_reference() {
        let m = model(1);
        let r = ReferencePolicy::freeze(&m);
        let s_bar = PreferenceVector::even();
        let l = iokd_loss(&m, &r, &batch(), &s_bar, 0.5, 1.0).unwrap();
        assert_eq!(l.pairs, 5);
        assert!((l.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let base = model(2);
        let r = ReferencePolicy::freeze(&base);
        let s_bar = PreferenceVector::even();
        for point in 0..3 {
            let m = perturbed(&base, 10 + point);
            let l = iokd_loss(&m, &r, &batch(), &s_bar, 0.8, 1.0).unwrap();
            let b = batch();
            let report = finite_diff_check(
                m.params(),
                &l.grads,
                |p| {
                    let mut q = m.clone();
                    *q.params_mut() = p.clone();
                    iokd_loss(&q, &r, &b, &s_bar, 0.8, 1.0).unwrap().loss
                },
                1e-6,
                150,
                point,
            );
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn margins_scale_with_beta_and_flip_on_swap() {
        let base = model(3);
        let r = ReferencePolicy::freeze(&base);
        let m = perturbed(&base, 5);
        let s_bar = PreferenceVector::even();
        let (p1, _) = prepare(&r, &batch(), &s_bar, 0.5, 0.7).unwrap();
        let (p2, _) = prepare(&r, &batch(), &s_bar, 1.0, 0.7).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            for (ma, mb) in margins(&m, a).iter().zip(margins(&m, b)) {
                assert!((2.0 * ma - mb).abs() < 1e-12 * mb.abs().max(1.0));
            }
        }
        let b = &batch()[1];
        let swapped = IoKdSample {
            prompt: b.prompt.clone(),
            preference: b.contrastive[0],
            contrastive: vec![b.preference],
        };
        // Unweighted so both orientations share the same temperature.
        let (fwd, _) = prepare(&r, std::slice::from_ref(b), &s_bar, 0.5, 0.0).unwrap();
        let (back, _) = prepare(&r, &[swapped], &s_bar, 0.5, 0.0).unwrap();
        assert!((margins(&m, &fwd[0])[0] + margins(&m, &back[0])[0]).abs() < 1e-12);
    }

    #[test]
    fn collisions_are_skipped_and_empty_contrastive_rejected() {
        let m = model(4);
        let r = ReferencePolicy::freeze(&m);
        let mut b = batch();
        b[0].contrastive = vec![b[0].preference];
        let l = iokd_loss(&m, &r, &b, &PreferenceVector::even(), 0.5, 1.0).unwrap();
        assert_eq!(l.skipped, 1);
        assert_eq!(l.pairs, 3);
        b[1].contrastive.clear();
        assert!(iokd_loss(&m, &r, &b, &PreferenceVector::even(), 0.5, 1.0).is_err());
        assert!(iokd_loss(&m, &r, &[], &PreferenceVector::even(), 0.5, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn loss_is_non_negative(seed in 0u64..50) {
            let base = model(seed);
            let r = ReferencePolicy::freeze(&base);
            let m = perturbed(&base, seed + 1);
            let l = iokd_loss(&m, &r, &batch(), &PreferenceVector::even(), 0.5, 1.0).unwrap();
            proptest::prop_assert!(l.loss >= 0.0);
        }

        #[test]
        fn beta_non_increasing_in_distance(
            a in proptest::array::uniform4(0.0f64..1.0),
            b in proptest::array::uniform4(0.0f64..1.0),
            c in proptest::array::uniform4(0.0f64..1.0),
            sf in 0.0f64..2.0,
        ) {
            let (a, b, c) = (PreferenceVector::project(a), PreferenceVector::project(b), PreferenceVector::project(c));
            let (near, far) = if angular_distance(a, c) <= angular_distance(b, c) { (a, b) } else { (b, a) };
            proptest::prop_assert!(dynamic_beta(&near, &c, 1.0, sf) >= dynamic_beta(&far, &c, 1.0, sf));
            proptest::prop_assert!(dynamic_beta(&far, &c, 1.0, sf) >= BETA_FLOOR_FRACTION);
        }
    }
}
