//! A small trainable convolutional classifier.
//!
//! Architecture: nearest-neighbor resize to `input_size` (default 32), then
//! conv 3x3x8 + ReLU + 2x2 max-pool, conv 3x3x16 + ReLU + 2x2 max-pool, and a
//! dense layer to `n_classes` logits with softmax on top. Training is plain
//! mini-batch SGD with momentum, single-threaded, and bit-for-bit
//! deterministic in the seed. Nothing here is meant to compete with a real
//! vision stack; it only has to be spatially sensitive enough that localized
//! stickers change its decisions, and cheap enough to train in seconds.

mod cnn;
mod io;

pub use io::ModelCodecError;

use rand::Rng;
use thiserror::Error;

use crate::imaging::Image;
use crate::seeding;
use cnn::{Conv3x3, Dense};

/// Class index in `[0, n_classes)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(transparent)]
pub struct Label(pub usize);

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Classifier probability output: non-negative, sums to one within 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxVector {
    values: Vec<f32>,
}

impl SoftmaxVector {
    pub fn new(values: Vec<f32>) -> Result<Self, ClassifierError> {
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(ClassifierError::InvalidSoftmax);
        }
        let sum: f64 = values.iter().map(|&v| f64::from(v)).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(ClassifierError::InvalidSoftmax);
        }
        Ok(SoftmaxVector { values })
    }

    /// Softmax of raw logits.
    pub fn from_logits(logits: &[f32]) -> Self {
        SoftmaxVector {
            values: cnn::softmax(logits),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn value(&self, label: Label) -> f32 {
        self.values[label.0]
    }

    /// Argmax label, ties broken by the lowest class index.
    pub fn argmax(&self) -> Label {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        Label(best)
    }

    /// All labels ordered by descending value, ties by ascending index.
    pub fn ranking(&self) -> Vec<Label> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| {
            self.values[b]
                .partial_cmp(&self.values[a])
                .expect("softmax values are finite")
                .then(a.cmp(&b))
        });
        order.into_iter().map(Label).collect()
    }
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training dataset contains a single class; at least two are required")]
    SingleClass,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("top-k request k={k} outside [1, {n_classes}]")]
    BadTopK { k: usize, n_classes: usize },
    #[error("input size {input_size} must be a positive multiple of 4")]
    BadInputSize { input_size: usize },
    #[error("softmax vector violates its normalization invariant")]
    InvalidSoftmax,
    #[error(transparent)]
    Codec(#[from] ModelCodecError),
}

/// Training hyperparameters. Defaults train the 8-class synthetic corpus to
/// high accuracy in a few seconds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub n_classes: usize,
    pub input_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_classes: 8,
            input_size: 32,
            epochs: 12,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }
}

/// Trained convolutional classifier. Immutable after training; all inference
/// entry points are pure functions of `(model, image)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    n_classes: usize,
    input_size: usize,
    seed: u64,
    conv1: Conv3x3,
    conv2: Conv3x3,
    dense: Dense,
}

const CONV1_CH: usize = 8;
const CONV2_CH: usize = 16;

impl ClassifierModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Hex digest of the serialized weights; identifies the model in
    /// mask-store provenance.
    pub fn fingerprint(&self) -> String {
        seeding::fingerprint_bytes(&self.encode())
    }

    /// Softmax output for an image (resized internally).
    pub fn classify(&self, image: &Image) -> SoftmaxVector {
        let planes = preprocess(image, self.input_size);
        SoftmaxVector {
            values: cnn::softmax(&self.forward(&planes).logits),
        }
    }

    /// Argmax decision, ties to the lowest class index.
    pub fn predict(&self, image: &Image) -> Label {
        self.classify(image).argmax()
    }

    /// Top-`k` labels with activations, descending, ties by ascending index.
    pub fn top_k(&self, image: &Image, k: usize) -> Result<Vec<(Label, f32)>, ClassifierError> {
        if k == 0 || k > self.n_classes {
            return Err(ClassifierError::BadTopK {
                k,
                n_classes: self.n_classes,
            });
        }
        let softmax = self.classify(image);
        Ok(softmax
            .ranking()
            .into_iter()
            .take(k)
            .map(|label| (label, softmax.value(label)))
            .collect())
    }

    fn forward(&self, input: &InputPlanes) -> ForwardPass {
        let s = self.input_size;
        let h = s / 2;
        let q = s / 4;
        let mut pass = ForwardPass {
            pre1: vec![0.0; CONV1_CH * s * s],
            act1: vec![0.0; CONV1_CH * s * s],
            pool1: vec![0.0; CONV1_CH * h * h],
            arg1: vec![0u8; CONV1_CH * h * h],
            pre2: vec![0.0; CONV2_CH * h * h],
            act2: vec![0.0; CONV2_CH * h * h],
            pool2: vec![0.0; CONV2_CH * q * q],
            arg2: vec![0u8; CONV2_CH * q * q],
            logits: vec![0.0; self.n_classes],
        };
        cnn::conv_forward(&input.planes, s, &self.conv1, &mut pass.pre1);
        cnn::relu_forward(&pass.pre1, &mut pass.act1);
        cnn::maxpool_forward(&pass.act1, CONV1_CH, s, &mut pass.pool1, &mut pass.arg1);
        cnn::conv_forward(&pass.pool1, h, &self.conv2, &mut pass.pre2);
        cnn::relu_forward(&pass.pre2, &mut pass.act2);
        cnn::maxpool_forward(&pass.act2, CONV2_CH, h, &mut pass.pool2, &mut pass.arg2);
        cnn::dense_forward(&pass.pool2, &self.dense, &mut pass.logits);
        pass
    }

    pub(crate) fn from_parts(
        n_classes: usize,
        input_size: usize,
        seed: u64,
        conv1: Conv3x3,
        conv2: Conv3x3,
        dense: Dense,
    ) -> Self {
        ClassifierModel {
            n_classes,
            input_size,
            seed,
            conv1,
            conv2,
            dense,
        }
    }

    pub(crate) fn parts(&self) -> (&Conv3x3, &Conv3x3, &Dense) {
        (&self.conv1, &self.conv2, &self.dense)
    }
}

/// Preprocessed input: three CHW planes of side `size`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPlanes {
    pub size: usize,
    pub planes: Vec<f32>,
}

struct ForwardPass {
    pre1: Vec<f32>,
    act1: Vec<f32>,
    pool1: Vec<f32>,
    arg1: Vec<u8>,
    pre2: Vec<f32>,
    act2: Vec<f32>,
    pool2: Vec<f32>,
    arg2: Vec<u8>,
    logits: Vec<f32>,
}

/// Nearest-neighbor resample to `input_size` square, values untouched.
/// Output pixel `(x, y)` reads input `(x * w / input_size, y * h / input_size)`.
pub fn preprocess(image: &Image, input_size: usize) -> InputPlanes {
    let (w, h) = (image.width(), image.height());
    let mut planes = vec![0.0f32; 3 * input_size * input_size];
    let plane = input_size * input_size;
    for y in 0..input_size {
        let sy = y * h / input_size;
        for x in 0..input_size {
            let sx = x * w / input_size;
            let px = image.pixel(sx, sy);
            planes[y * input_size + x] = px[0];
            planes[plane + y * input_size + x] = px[1];
            planes[2 * plane + y * input_size + x] = px[2];
        }
    }
    InputPlanes {
        size: input_size,
        planes,
    }
}

/// Trains the classifier with deterministic mini-batch SGD.
pub fn train(
    dataset: &[(Image, Label)],
    config: &TrainConfig,
    seed: u64,
) -> Result<ClassifierModel, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if config.input_size == 0 || config.input_size % 4 != 0 {
        return Err(ClassifierError::BadInputSize {
            input_size: config.input_size,
        });
    }
    let mut seen = vec![false; config.n_classes];
    for (_, label) in dataset {
        if label.0 >= config.n_classes {
            return Err(ClassifierError::LabelOutOfRange {
                label: label.0,
                n_classes: config.n_classes,
            });
        }
        seen[label.0] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(ClassifierError::SingleClass);
    }

    let s = config.input_size;
    let dense_in = CONV2_CH * (s / 4) * (s / 4);
    let mut init_rng = seeding::rng_from_seed(seeding::derive_seed(seed, "init", &[]));
    let mut model = ClassifierModel {
        n_classes: config.n_classes,
        input_size: s,
        seed,
        conv1: init_conv(3, CONV1_CH, &mut init_rng),
        conv2: init_conv(CONV1_CH, CONV2_CH, &mut init_rng),
        dense: init_dense(dense_in, config.n_classes, &mut init_rng),
    };

    let inputs: Vec<InputPlanes> = dataset
        .iter()
        .map(|(image, _)| preprocess(image, s))
        .collect();

    let mut grads = Grads::zeros(&model);
    let mut velocity = Grads::zeros(&model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut scratch = Scratch::new(s, config.n_classes);

    for epoch in 0..config.epochs {
        shuffle(
            &mut order,
            &mut seeding::rng_from_seed(seeding::derive_seed(seed, "shuffle", &[epoch as u64])),
        );
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            for &i in batch {
                backward_sample(&model, &inputs[i], dataset[i].1, &mut grads, &mut scratch);
            }
            let scale = 1.0 / batch.len() as f32;
            velocity.momentum_step(&grads, config.momentum, scale);
            apply_update(&mut model, &velocity, config.learning_rate);
        }
    }
    Ok(model)
}

fn init_conv(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Conv3x3 {
    let mut conv = Conv3x3::zeros(in_ch, out_ch);
    let bound = (6.0 / (in_ch as f32 * 9.0)).sqrt();
    for w in conv.weights.iter_mut() {
        *w = (rng.gen::<f32>() * 2.0 - 1.0) * bound;
    }
    conv
}

fn init_dense(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Dense {
    let mut dense = Dense::zeros(inputs, outputs);
    let bound = (6.0 / inputs as f32).sqrt();
    for w in dense.weights.iter_mut() {
        *w = (rng.gen::<f32>() * 2.0 - 1.0) * bound;
    }
    dense
}

fn shuffle(order: &mut [usize], rng: &mut impl Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

struct Grads {
    conv1: Conv3x3,
    conv2: Conv3x3,
    dense: Dense,
}

impl Grads {
    fn zeros(model: &ClassifierModel) -> Self {
        Grads {
            conv1: Conv3x3::zeros(model.conv1.in_ch, model.conv1.out_ch),
            conv2: Conv3x3::zeros(model.conv2.in_ch, model.conv2.out_ch),
            dense: Dense::zeros(model.dense.inputs, model.dense.outputs),
        }
    }

    fn zero(&mut self) {
        for buf in [
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.dense.weights,
            &mut self.dense.bias,
        ] {
            buf.fill(0.0);
        }
    }

    /// `v = momentum * v + scale * g` across every parameter buffer.
    fn momentum_step(&mut self, grads: &Grads, momentum: f32, scale: f32) {
        for (v, g) in [
            (&mut self.conv1.weights, &grads.conv1.weights),
            (&mut self.conv1.bias, &grads.conv1.bias),
            (&mut self.conv2.weights, &grads.conv2.weights),
            (&mut self.conv2.bias, &grads.conv2.bias),
            (&mut self.dense.weights, &grads.dense.weights),
            (&mut self.dense.bias, &grads.dense.bias),
        ] {
            for (v, &g) in v.iter_mut().zip(g) {
                *v = momentum * *v + scale * g;
            }
        }
    }
}

fn apply_update(model: &mut ClassifierModel, velocity: &Grads, lr: f32) {
    for (w, v) in [
        (&mut model.conv1.weights, &velocity.conv1.weights),
        (&mut model.conv1.bias, &velocity.conv1.bias),
        (&mut model.conv2.weights, &velocity.conv2.weights),
        (&mut model.conv2.bias, &velocity.conv2.bias),
        (&mut model.dense.weights, &velocity.dense.weights),
        (&mut model.dense.bias, &velocity.dense.bias),
    ] {
        for (w, &v) in w.iter_mut().zip(v) {
            *w -= lr * v;
        }
    }
}

struct Scratch {
    d_logits: Vec<f32>,
    d_pool2: Vec<f32>,
    d_act2: Vec<f32>,
    d_pre2: Vec<f32>,
    d_pool1: Vec<f32>,
    d_act1: Vec<f32>,
    d_pre1: Vec<f32>,
}

impl Scratch {
    fn new(s: usize, n_classes: usize) -> Self {
        let h = s / 2;
        let q = s / 4;
        Scratch {
            d_logits: vec![0.0; n_classes],
            d_pool2: vec![0.0; CONV2_CH * q * q],
            d_act2: vec![0.0; CONV2_CH * h * h],
            d_pre2: vec![0.0; CONV2_CH * h * h],
            d_pool1: vec![0.0; CONV1_CH * h * h],
            d_act1: vec![0.0; CONV1_CH * s * s],
            d_pre1: vec![0.0; CONV1_CH * s * s],
        }
    }
}

/// Accumulates the cross-entropy gradient of one sample into `grads`.
fn backward_sample(
    model: &ClassifierModel,
    input: &InputPlanes,
    label: Label,
    grads: &mut Grads,
    scratch: &mut Scratch,
) {
    let s = model.input_size;
    let h = s / 2;
    let pass = model.forward(input);
    let probs = cnn::softmax(&pass.logits);

    // Softmax + cross-entropy collapses to p - y on the logits.
    for (i, (&p, d)) in probs.iter().zip(scratch.d_logits.iter_mut()).enumerate() {
        *d = p - if i == label.0 { 1.0 } else { 0.0 };
    }
    cnn::dense_backward(
        &pass.pool2,
        &model.dense,
        &scratch.d_logits,
        &mut grads.dense,
        &mut scratch.d_pool2,
    );
    cnn::maxpool_backward(&scratch.d_pool2, CONV2_CH, h, &pass.arg2, &mut scratch.d_act2);
    cnn::relu_backward(&pass.pre2, &scratch.d_act2, &mut scratch.d_pre2);
    scratch.d_pool1.fill(0.0);
    cnn::conv_backward(
        &pass.pool1,
        h,
        &model.conv2,
        &scratch.d_pre2,
        &mut grads.conv2,
        Some(&mut scratch.d_pool1),
    );
    cnn::maxpool_backward(&scratch.d_pool1, CONV1_CH, s, &pass.arg1, &mut scratch.d_act1);
    cnn::relu_backward(&pass.pre1, &scratch.d_act1, &mut scratch.d_pre1);
    cnn::conv_backward(
        &input.planes,
        s,
        &model.conv1,
        &scratch.d_pre1,
        &mut grads.conv1,
        None,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;
    use proptest::prelude::*;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            n_classes: 2,
            input_size: 16,
            epochs: 6,
            batch_size: 4,
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }

    fn black_white_dataset(n_per_class: usize) -> Vec<(Image, Label)> {
        let mut out = Vec::new();
        for i in 0..n_per_class {
            let shade = 0.05 + 0.001 * i as f32;
            out.push((Image::constant(16, 16, [shade; 3]).unwrap(), Label(0)));
            let shade = 0.95 - 0.001 * i as f32;
            out.push((Image::constant(16, 16, [shade; 3]).unwrap(), Label(1)));
        }
        out
    }

    #[test]
    fn preprocess_identity_at_input_size() {
        let img = Image::from_fn(32, 32, |x, y| [(x as f32) / 32.0, (y as f32) / 32.0, 0.5])
            .unwrap();
        let planes = preprocess(&img, 32);
        assert_eq!(planes.planes[5], img.pixel(5, 0)[0]);
        assert_eq!(planes.planes[32 * 32 + 3 * 32 + 4], img.pixel(4, 3)[1]);
    }

    #[test]
    fn preprocess_constant_stays_constant() {
        let img = Image::constant(48, 48, [0.3, 0.6, 0.9]).unwrap();
        let planes = preprocess(&img, 32);
        assert!(planes.planes[..1024].iter().all(|&v| v == 0.3));
        assert!(planes.planes[2048..].iter().all(|&v| v == 0.9));
    }

    #[test]
    fn preprocess_checkerboard_downsample_keeps_top_left_phase() {
        // Period-2 checkerboard: (x + y) even -> 1.0.
        let img = Image::from_fn(32, 32, |x, y| {
            if (x + y) % 2 == 0 {
                [1.0; 3]
            } else {
                [0.0; 3]
            }
        })
        .unwrap();
        let planes = preprocess(&img, 16);
        assert!(planes.planes.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn train_rejects_empty_and_single_class() {
        assert!(matches!(
            train(&[], &tiny_config(), 0),
            Err(ClassifierError::EmptyDataset)
        ));
        let single = vec![(Image::constant(16, 16, [0.1; 3]).unwrap(), Label(0)); 4];
        assert!(matches!(
            train(&single, &tiny_config(), 0),
            Err(ClassifierError::SingleClass)
        ));
    }

    #[test]
    fn black_vs_white_is_separable() {
        let data = black_white_dataset(8);
        let model = train(&data, &tiny_config(), 11).unwrap();
        let held_out = [
            (Image::constant(16, 16, [0.02; 3]).unwrap(), Label(0)),
            (Image::constant(16, 16, [0.98; 3]).unwrap(), Label(1)),
            (Image::constant(16, 16, [0.12; 3]).unwrap(), Label(0)),
            (Image::constant(16, 16, [0.88; 3]).unwrap(), Label(1)),
        ];
        for (img, label) in &held_out {
            assert_eq!(model.predict(img), *label);
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = black_white_dataset(4);
        let a = train(&data, &tiny_config(), 3).unwrap();
        let b = train(&data, &tiny_config(), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.encode(), b.encode());
    }

    #[test]
    fn predict_matches_argmax_and_tie_rule() {
        let v = SoftmaxVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(v.argmax(), Label(1));
        let tie = SoftmaxVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(tie.argmax(), Label(0));
    }

    #[test]
    fn ranking_orders_by_value_then_index() {
        let v = SoftmaxVector::new(vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!(v.ranking(), vec![Label(1), Label(2), Label(0)]);
    }

    #[test]
    fn top_k_prefix_property_and_bounds() {
        let data = black_white_dataset(4);
        let model = train(&data, &tiny_config(), 5).unwrap();
        let img = Image::constant(16, 16, [0.4; 3]).unwrap();
        assert!(matches!(
            model.top_k(&img, 0),
            Err(ClassifierError::BadTopK { .. })
        ));
        assert!(matches!(
            model.top_k(&img, 3),
            Err(ClassifierError::BadTopK { .. })
        ));
        let one = model.top_k(&img, 1).unwrap();
        let two = model.top_k(&img, 2).unwrap();
        assert_eq!(one[0].0, model.predict(&img));
        assert_eq!(two[0].0, one[0].0);
    }

    #[test]
    fn softmax_vector_validation() {
        assert!(SoftmaxVector::new(vec![0.5, 0.6]).is_err());
        assert!(SoftmaxVector::new(vec![-0.1, 1.1]).is_err());
        assert!(SoftmaxVector::new(vec![0.25; 4]).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn classify_is_normalized_on_random_images(seed in any::<u64>()) {
            let data = black_white_dataset(2);
            let model = train(&data, &tiny_config(), 1).unwrap();
            let mut rng = crate::seeding::rng_from_seed(seed);
            use rand::Rng;
            let img = Image::from_fn(20, 17, |_, _| [(); 3].map(|_| rng.gen::<f32>())).unwrap();
            let v = model.classify(&img);
            let sum: f64 = v.values().iter().map(|&x| f64::from(x)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(v.values().iter().all(|&x| x >= 0.0));
            // predict is definitionally argmax of classify
            prop_assert_eq!(model.predict(&img), v.argmax());
        }
    }
}
