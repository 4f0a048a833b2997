//! The network: InceptionTime encoder over the signal, concatenation with
//! the metadata vector, a linear projection into the shared embedding space,
//! and the MLP pseudo-classifier on top.

mod inception;

pub use inception::{EncoderCache, EncoderConfig, InceptionEncoder};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::LeadSubset;
use crate::nn::{relu_backward_inplace, relu_inplace, Linear, Matrix, Mode, Param, Scalar, Tensor3};
use crate::{Error, Result, N_CLASSES};

/// Architecture of a bundle, minus the lead count (taken from the subset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BundleConfig {
    pub encoder: EncoderConfig,
    pub embedding_dim: usize,
    pub classifier_hidden: usize,
    pub n_classes: usize,
    pub metadata_len: usize,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            embedding_dim: 128,
            classifier_hidden: 64,
            n_classes: N_CLASSES,
            metadata_len: 36,
        }
    }
}

/// MLP `d -> hidden (ReLU) -> classes`. When `frozen`, backward still
/// propagates to the embedding but no parameter gradient is accumulated and
/// optimizers skip its parameters.
#[derive(Debug, Clone)]
pub struct PseudoClassifier<T> {
    pub hidden: Linear<T>,
    pub output: Linear<T>,
    pub frozen: bool,
}

impl<T: Scalar> PseudoClassifier<T> {
    pub fn embedding_dim(&self) -> usize {
        self.hidden.in_dim
    }

    fn forward(&self, emb: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
        let mut hidden = self.hidden.forward(emb);
        relu_inplace(&mut hidden.data);
        let logits = self.output.forward(&hidden);
        (hidden, logits)
    }

    fn backward(&mut self, emb: &Matrix<T>, hidden: &Matrix<T>, d_logits: &Matrix<T>) -> Matrix<T> {
        let accumulate = !self.frozen;
        let mut d_hidden = self.output.backward(hidden, d_logits, accumulate);
        relu_backward_inplace(&hidden.data, &mut d_hidden.data);
        self.hidden.backward(emb, &d_hidden, accumulate)
    }
}

/// Encoder, projection and pseudo-classifier built for one lead subset.
#[derive(Debug, Clone)]
pub struct ModelBundle<T> {
    pub subset: LeadSubset,
    pub config: BundleConfig,
    pub encoder: InceptionEncoder<T>,
    pub projection: Linear<T>,
    pub classifier: PseudoClassifier<T>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    encoder: EncoderCache<T>,
    joint: Matrix<T>,
    pub embeddings: Matrix<T>,
    hidden: Matrix<T>,
    pub logits: Matrix<T>,
}

/// Deterministic initialization from `seed`.
pub fn init_bundle<T: Scalar>(config: &BundleConfig, subset: &LeadSubset, seed: u64) -> Result<ModelBundle<T>> {
    if config.embedding_dim == 0 || config.classifier_hidden == 0 || config.n_classes == 0 {
        return Err(Error::invalid("bundle widths must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc_cfg = config.encoder.for_leads(subset.size());
    let encoder = InceptionEncoder::new(&enc_cfg, &mut rng)?;
    let projection = Linear::new(enc_cfg.feature_dim() + config.metadata_len, config.embedding_dim, &mut rng);
    let classifier = PseudoClassifier {
        hidden: Linear::new(config.embedding_dim, config.classifier_hidden, &mut rng),
        output: Linear::new(config.classifier_hidden, config.n_classes, &mut rng),
        frozen: false,
    };
    Ok(ModelBundle {
        subset: subset.clone(),
        config: config.clone(),
        encoder,
        projection,
        classifier,
    })
}

/// Runs the encoder on a batch of `[leads x samples]` signals.
pub fn encoder_forward<T: Scalar>(
    encoder: &mut InceptionEncoder<T>,
    signals: Tensor3<T>,
    mode: Mode,
) -> Result<Matrix<T>> {
    Ok(encoder.forward(signals, mode)?.0)
}

/// `W [feature | meta] + b`.
pub fn project<T: Scalar>(features: &Matrix<T>, meta: &Matrix<T>, projection: &Linear<T>) -> Result<Matrix<T>> {
    if features.rows != meta.rows {
        return Err(Error::shape(format!(
            "{} feature rows vs {} metadata rows",
            features.rows, meta.rows
        )));
    }
    if features.cols + meta.cols != projection.in_dim {
        return Err(Error::shape(format!(
            "projection expects width {}, got {} + {}",
            projection.in_dim, features.cols, meta.cols
        )));
    }
    Ok(projection.forward(&Matrix::hcat(features, meta)))
}

/// Pre-sigmoid class logits for a batch of embeddings.
pub fn classify<T: Scalar>(embeddings: &Matrix<T>, classifier: &PseudoClassifier<T>) -> Result<Matrix<T>> {
    if embeddings.cols != classifier.embedding_dim() {
        return Err(Error::shape(format!(
            "classifier expects dimension {}, got {}",
            classifier.embedding_dim(),
            embeddings.cols
        )));
    }
    Ok(classifier.forward(embeddings).1)
}

impl<T: Scalar> ModelBundle<T> {
    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    pub fn forward(&mut self, signals: Tensor3<T>, meta: &Matrix<T>, mode: Mode) -> Result<ForwardPass<T>> {
        let (features, encoder) = self.encoder.forward(signals, mode)?;
        let embeddings = project(&features, meta, &self.projection)?;
        let joint = Matrix::hcat(&features, meta);
        let (hidden, logits) = self.classifier.forward(&embeddings);
        Ok(ForwardPass {
            encoder,
            joint,
            embeddings,
            hidden,
            logits,
        })
    }

    /// Backpropagates `d_logits` (and an optional direct gradient on the
    /// embeddings) into every parameter gradient.
    pub fn backward(&mut self, pass: &ForwardPass<T>, d_logits: &Matrix<T>, d_embeddings: Option<&Matrix<T>>) {
        let mut d_emb = self.classifier.backward(&pass.embeddings, &pass.hidden, d_logits);
        if let Some(extra) = d_embeddings {
            for (a, &b) in d_emb.data.iter_mut().zip(&extra.data) {
                *a += b;
            }
        }
        let d_joint = self.projection.backward(&pass.joint, &d_emb, true);
        let d_features = d_joint.take_cols(self.encoder.feature_dim());
        self.encoder.backward(&pass.encoder, &d_features);
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.encoder.visit("encoder", f);
        self.projection.visit("projection", f);
        self.classifier.hidden.visit("classifier.hidden", f);
        self.classifier.output.visit("classifier.output", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.encoder.visit_mut("encoder", f);
        self.projection.visit_mut("projection", f);
        self.classifier.hidden.visit_mut("classifier.hidden", f);
        self.classifier.output.visit_mut("classifier.output", f);
    }

    /// Parameters an optimizer may update: trainable slots, excluding the
    /// classifier while it is frozen.
    pub fn visit_trainable_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        let frozen = self.classifier.frozen;
        self.visit_mut(&mut |name, p| {
            if p.trainable && !(frozen && name.starts_with("classifier.")) {
                f(name, p);
            }
        });
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| {
            if p.trainable {
                n += p.len();
            }
        });
        n
    }

    /// SHA-256 over names and little-endian values of the parameters whose
    /// names start with `prefix` (empty prefix: everything).
    pub fn hash_params(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        self.visit(&mut |name, p| {
            if name.starts_with(prefix) {
                h.update(name.as_bytes());
                for v in &p.value {
                    h.update(v.as_f64().to_le_bytes());
                }
            }
        });
        hex::encode(h.finalize())
    }

    pub fn classifier_hash(&self) -> String {
        self.hash_params("classifier.")
    }

    /// Copies the pseudo-classifier weights of `other` into this bundle.
    pub fn copy_classifier_from(&mut self, other: &ModelBundle<T>) -> Result<()> {
        if other.classifier.embedding_dim() != self.classifier.embedding_dim()
            || other.classifier.output.out_dim != self.classifier.output.out_dim
            || other.classifier.hidden.out_dim != self.classifier.hidden.out_dim
        {
            return Err(Error::shape("teacher and student classifiers differ in shape"));
        }
        let frozen = self.classifier.frozen;
        self.classifier = other.classifier.clone();
        self.classifier.frozen = frozen;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::Padding;

    fn tiny_config(n_classes: usize) -> BundleConfig {
        BundleConfig {
            encoder: EncoderConfig {
                input_leads: 12,
                depth: 1,
                filters_per_branch: 4,
                kernel_lengths: [9, 5, 3],
                bottleneck_channels: 4,
                residual_every: 3,
                padding: Padding::Zero,
            },
            embedding_dim: 8,
            classifier_hidden: 6,
            n_classes,
            metadata_len: 5,
        }
    }

    fn random_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, t: usize) -> Tensor3<f64> {
        Tensor3::from_vec(n, c, t, (0..n * c * t).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn feature_dim_is_independent_of_leads() {
        let cfg = BundleConfig::default();
        for (leads, seed) in [(12, 1), (2, 2)] {
            let subset = LeadSubset::standard(leads).unwrap();
            let mut b = init_bundle::<f32>(&BundleConfig { encoder: EncoderConfig { depth: 1, ..cfg.encoder.clone() }, ..cfg.clone() }, &subset, seed).unwrap();
            let x = Tensor3::zeros(1, leads, 1000);
            let f = encoder_forward(&mut b.encoder, x, Mode::Eval).unwrap();
            assert_eq!((f.rows, f.cols), (1, 128));
        }
    }

    #[test]
    fn zero_input_gives_zero_features() {
        let mut b = init_bundle::<f64>(&tiny_config(5), &LeadSubset::full(), 3).unwrap();
        for mode in [Mode::Eval, Mode::Train] {
            let f = encoder_forward(&mut b.encoder, Tensor3::zeros(2, 12, 64), mode).unwrap();
            assert!(f.data.iter().all(|&v| v == 0.0), "{mode:?}");
        }
    }

    #[test]
    fn lead_mismatch_is_reported() {
        let mut b = init_bundle::<f64>(&tiny_config(5), &LeadSubset::standard(3).unwrap(), 3).unwrap();
        let err = encoder_forward(&mut b.encoder, Tensor3::zeros(1, 12, 64), Mode::Eval).unwrap_err();
        assert!(err.to_string().contains("expects 3 leads, got 12"));
        let short = encoder_forward(&mut b.encoder, Tensor3::zeros(1, 3, 5), Mode::Eval);
        assert!(short.is_err());
    }

    #[test]
    fn projection_special_cases_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut lin = Linear::<f64>::new(7, 4, &mut rng);
        // identity block on the feature part
        lin.weight.value.fill(0.0);
        for i in 0..4 {
            lin.weight.value[i * 7 + i] = 1.0;
        }
        lin.bias.value.fill(0.0);
        let feat = random_matrix(&mut rng, 3, 5);
        let meta = random_matrix(&mut rng, 3, 2);
        let e = project(&feat, &meta, &lin).unwrap();
        for r in 0..3 {
            assert_eq!(e.row(r), &feat.row(r)[..4]);
        }

        let lin = Linear::<f64>::new(7, 4, &mut rng);
        let e = project(&Matrix::zeros(2, 5), &Matrix::zeros(2, 2), &lin).unwrap();
        assert_eq!(e.row(1), lin.bias.value.as_slice());

        let e = project(&feat, &meta, &lin).unwrap();
        for r in 0..3 {
            let x: Vec<f64> = feat.row(r).iter().chain(meta.row(r)).copied().collect();
            for o in 0..4 {
                let mut acc = lin.bias.value[o];
                for i in 0..7 {
                    acc += lin.weight.value[o * 7 + i] * x[i];
                }
                assert!((e.row(r)[o] - acc).abs() < 1e-6);
            }
        }
        assert!(project(&feat, &Matrix::zeros(3, 3), &lin).is_err());
    }

    #[test]
    fn classifier_special_cases_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut clf = PseudoClassifier {
            hidden: Linear::<f64>::new(8, 6, &mut rng),
            output: Linear::new(6, 5, &mut rng),
            frozen: false,
        };
        let emb = random_matrix(&mut rng, 4, 8);
        let logits = classify(&emb, &clf).unwrap();
        for r in 0..4 {
            let h: Vec<f64> = (0..6)
                .map(|j| {
                    let mut acc = clf.hidden.bias.value[j];
                    for i in 0..8 {
                        acc += clf.hidden.weight.value[j * 8 + i] * emb.row(r)[i];
                    }
                    acc.max(0.0)
                })
                .collect();
            for k in 0..5 {
                let mut acc = clf.output.bias.value[k];
                for j in 0..6 {
                    acc += clf.output.weight.value[k * 6 + j] * h[j];
                }
                assert!((logits.row(r)[k] - acc).abs() < 1e-6);
            }
        }
        for l in [&mut clf.hidden, &mut clf.output] {
            l.weight.value.fill(0.0);
            l.bias.value.fill(0.0);
        }
        let logits = classify(&emb, &clf).unwrap();
        assert!(logits.data.iter().all(|&v| v == 0.0));
        assert!(classify(&random_matrix(&mut rng, 1, 7), &clf).is_err());
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let cfg = tiny_config(5);
        let a = init_bundle::<f32>(&cfg, &LeadSubset::full(), 1).unwrap();
        let b = init_bundle::<f32>(&cfg, &LeadSubset::full(), 1).unwrap();
        let c = init_bundle::<f32>(&cfg, &LeadSubset::full(), 2).unwrap();
        assert_eq!(a.hash_params(""), b.hash_params(""));
        assert_ne!(a.hash_params(""), c.hash_params(""));
    }

    #[test]
    fn student_shapes() {
        let cfg = tiny_config(5);
        let teacher = init_bundle::<f32>(&cfg, &LeadSubset::full(), 1).unwrap();
        let student = init_bundle::<f32>(&cfg, &LeadSubset::standard(3).unwrap(), 2).unwrap();
        assert_eq!(student.encoder.config().input_leads, 3);
        assert_eq!(teacher.encoder.config().input_leads, 12);
        assert_eq!(student.embedding_dim(), teacher.embedding_dim());
        assert_eq!(student.projection.in_dim, student.encoder.feature_dim() + cfg.metadata_len);
    }

    /// Loss: sum of logits weighted by a fixed probe plus a probe on the
    /// embeddings, so every parameter receives gradient.
    fn probe_loss(b: &mut ModelBundle<f64>, x: &Tensor3<f64>, meta: &Matrix<f64>, pl: &Matrix<f64>, pe: &Matrix<f64>) -> f64 {
        let pass = b.clone().forward(x.clone(), meta, Mode::Train).unwrap();
        let l: f64 = pass.logits.data.iter().zip(&pl.data).map(|(a, b)| a * b).sum();
        let e: f64 = pass.embeddings.data.iter().zip(&pe.data).map(|(a, b)| a * b).sum();
        l + e
    }

    fn check_gradients(cfg: &BundleConfig, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subset = LeadSubset::standard(2).unwrap();
        let mut b = init_bundle::<f64>(cfg, &subset, seed).unwrap();
        let x = random_tensor(&mut rng, 3, 2, 24);
        let meta = random_matrix(&mut rng, 3, cfg.metadata_len);
        let pl = random_matrix(&mut rng, 3, cfg.n_classes);
        let pe = random_matrix(&mut rng, 3, cfg.embedding_dim);

        let pass = b.clone().forward(x.clone(), &meta, Mode::Train).unwrap();
        b.zero_grad();
        b.backward(&pass, &pl, Some(&pe));

        let mut names = Vec::new();
        b.visit(&mut |n, p| {
            if p.trainable {
                names.push((n.to_string(), p.len()));
            }
        });
        let h = 1e-6;
        let mut worst = 0.0f64;
        for (name, len) in names {
            for j in 0..len {
                let mut analytic = 0.0;
                b.visit(&mut |n, p| {
                    if n == name {
                        analytic = p.grad[j];
                    }
                });
                let eval = |delta: f64| {
                    let mut c = b.clone();
                    c.visit_mut(&mut |n, p| {
                        if n == name {
                            p.value[j] += delta;
                        }
                    });
                    probe_loss(&mut c, &x, &meta, &pl, &pe)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(rel < 1e-4, "{name}[{j}]: analytic {analytic} numeric {numeric}");
            }
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences_two_classes() {
        check_gradients(&tiny_config(2), 21);
    }

    #[test]
    fn gradients_match_finite_differences_with_residuals() {
        let mut cfg = tiny_config(3);
        cfg.encoder.depth = 2;
        cfg.encoder.residual_every = 1;
        cfg.encoder.kernel_lengths = [5, 3, 1];
        check_gradients(&cfg, 22);
    }

    #[test]
    fn circular_padding_makes_features_shift_invariant() {
        let mut cfg = tiny_config(5);
        cfg.encoder.padding = Padding::Circular;
        cfg.encoder.depth = 2;
        let mut b = init_bundle::<f64>(&cfg, &LeadSubset::standard(2).unwrap(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&mut rng, 1, 2, 50);
        let k = 13;
        let mut shifted = x.clone();
        for c in 0..2 {
            for t in 0..50 {
                shifted.data[c * 50 + (t + k) % 50] = x.data[c * 50 + t];
            }
        }
        let a = encoder_forward(&mut b.encoder, x, Mode::Eval).unwrap();
        let s = encoder_forward(&mut b.encoder, shifted, Mode::Eval).unwrap();
        for (p, q) in a.data.iter().zip(&s.data) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_classifier_gets_no_gradient_but_passes_it_on() {
        let cfg = tiny_config(5);
        let mut b = init_bundle::<f64>(&cfg, &LeadSubset::standard(2).unwrap(), 5).unwrap();
        b.classifier.frozen = true;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, 2, 2, 30);
        let meta = random_matrix(&mut rng, 2, 5);
        let pass = b.forward(x, &meta, Mode::Train).unwrap();
        b.zero_grad();
        b.backward(&pass, &random_matrix(&mut rng, 2, 5), None);
        let mut clf_grad = 0.0;
        let mut proj_grad = 0.0;
        b.visit(&mut |n, p| {
            let s: f64 = p.grad.iter().map(|g| g.abs()).sum();
            if n.starts_with("classifier.") {
                clf_grad += s;
            } else if n.starts_with("projection.") {
                proj_grad += s;
            }
        });
        assert_eq!(clf_grad, 0.0);
        assert!(proj_grad > 0.0);
        let mut visited = Vec::new();
        b.visit_trainable_mut(&mut |n, _| visited.push(n.to_string()));
        assert!(visited.iter().all(|n| !n.starts_with("classifier.")));
        assert!(visited.iter().all(|n| !n.contains("running")));
    }
}
