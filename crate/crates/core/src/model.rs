//! Bag-of-tokens softmax regression over the eight outcome classes, trained
//! with Adam and checkpointed by test-set F1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Report;
use crate::error::{Error, Result};
use crate::evaluation::{classwise_report, F1Average, MetricsReport};
use crate::labels::{ClassId, NUM_CLASSES};
use crate::rng;
use crate::tokenizer::{encode, EncodedText, TokenId, Vocabulary, DEFAULT_MAX_SEQUENCE_LENGTH};

/// Sparse feature values sorted by token id. Values are term counts, or
/// tf-idf weights when idf scaling is enabled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(TokenId, f64)>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.entries
            .binary_search_by_key(&id, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Multiply each value by `idf[id]`.
    pub fn scaled(&self, idf: &[f64]) -> FeatureVector {
        FeatureVector {
            entries: self
                .entries
                .iter()
                .map(|&(id, v)| (id, v * idf.get(id.index()).copied().unwrap_or(1.0)))
                .collect(),
        }
    }
}

/// Term counts of the non-special ids in `e`.
pub fn featurize(e: &EncodedText) -> FeatureVector {
    let mut ids: Vec<TokenId> = e.ids.iter().copied().filter(|id| !id.is_special()).collect();
    ids.sort_unstable();
    let mut entries: Vec<(TokenId, f64)> = Vec::new();
    for id in ids {
        match entries.last_mut() {
            Some((last, count)) if *last == id => *count += 1.0,
            _ => entries.push((id, 1.0)),
        }
    }
    FeatureVector { entries }
}

/// Smoothed inverse document frequency: ln((1+N)/(1+df)) + 1.
pub fn inverse_document_frequency(docs: &[FeatureVector], num_features: usize) -> Vec<f64> {
    let mut df = vec![0u64; num_features];
    for d in docs {
        for &(id, _) in &d.entries {
            if let Some(slot) = df.get_mut(id.index()) {
                *slot += 1;
            }
        }
    }
    let n = docs.len() as f64;
    df.into_iter()
        .map(|d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect()
}

/// Weights are row-major `[class][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    num_features: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_CLASSES],
}

impl ModelParams {
    pub fn zeros(num_features: usize) -> Self {
        ModelParams {
            num_features,
            weights: vec![0.0; NUM_CLASSES * num_features],
            bias: [0.0; NUM_CLASSES],
        }
    }

    pub fn from_parts(num_features: usize, weights: Vec<f64>, bias: [f64; NUM_CLASSES]) -> Result<Self> {
        if weights.len() != NUM_CLASSES * num_features {
            return Err(Error::Dimension(format!(
                "expected {} weights for {num_features} features, got {}",
                NUM_CLASSES * num_features,
                weights.len()
            )));
        }
        Ok(ModelParams {
            num_features,
            weights,
            bias,
        })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.weights[class * self.num_features + feature]
    }

    pub fn weight_mut(&mut self, class: usize, feature: usize) -> &mut f64 {
        &mut self.weights[class * self.num_features + feature]
    }

    fn check_features(&self, x: &FeatureVector) -> Result<()> {
        match x.entries.last() {
            Some(&(id, _)) if id.index() >= self.num_features => Err(Error::Dimension(format!(
                "feature id {id} outside model width {}",
                self.num_features
            ))),
            _ => Ok(()),
        }
    }

    fn logits(&self, x: &FeatureVector) -> [f64; NUM_CLASSES] {
        let mut z = self.bias;
        for &(id, v) in &x.entries {
            let j = id.index();
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += self.weights[k * self.num_features + j] * v;
            }
        }
        z
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    fn fill(&mut self, value: f64) {
        self.values_mut().for_each(|w| *w = value);
    }
}

fn softmax(z: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (pk, zk) in p.iter_mut().zip(z) {
        *pk = (zk - max).exp();
        sum += *pk;
    }
    p.iter_mut().for_each(|pk| *pk /= sum);
    p
}

/// softmax(Wx + b).
pub fn forward(p: &ModelParams, x: &FeatureVector) -> Result<[f64; NUM_CLASSES]> {
    p.check_features(x)?;
    Ok(softmax(&p.logits(x)))
}

/// Index of the largest probability; the lowest index wins ties.
pub fn argmax(probs: &[f64; NUM_CLASSES]) -> ClassId {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    ClassId::new(best as u8).expect("index below NUM_CLASSES")
}

/// Per-example loss and logit gradient (p - onehot(y)).
fn example_terms(p: &ModelParams, x: &FeatureVector, y: ClassId) -> (f64, [f64; NUM_CLASSES]) {
    let z = p.logits(x);
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|zk| (zk - max).exp()).sum::<f64>().ln();
    let mut d = [0.0; NUM_CLASSES];
    for k in 0..NUM_CLASSES {
        d[k] = (z[k] - lse).exp();
    }
    d[y.index()] -= 1.0;
    (lse - z[y.index()], d)
}

/// Writes the batch gradient into `grad` and returns the loss. The loss is
/// `sum(w_y * ce) / sum(w_y)`, which is the plain mean when `class_weights`
/// is `None`.
fn batch_gradient(
    p: &ModelParams,
    batch: &[(&FeatureVector, ClassId)],
    class_weights: Option<&[f64; NUM_CLASSES]>,
    grad: &mut ModelParams,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (x, _) in batch {
        p.check_features(x)?;
    }
    let terms: Vec<(f64, [f64; NUM_CLASSES])> = batch.par_iter().map(|(x, y)| example_terms(p, x, *y)).collect();
    let weight_of = |y: ClassId| class_weights.map_or(1.0, |w| w[y.index()]);
    let total_weight: f64 = batch.iter().map(|(_, y)| weight_of(*y)).sum();
    if total_weight.is_nan() || total_weight <= 0.0 {
        return Err(Error::InvalidConfig("class weights of the batch sum to zero".into()));
    }
    grad.fill(0.0);
    let mut loss = 0.0;
    // fixed example order keeps the sum bit-stable across thread counts
    for ((x, y), (l, d)) in batch.iter().zip(&terms) {
        let s = weight_of(*y) / total_weight;
        loss += s * l;
        for (k, dk) in d.iter().enumerate() {
            let dk = s * dk;
            grad.bias[k] += dk;
            let row = k * p.num_features;
            for &(id, v) in &x.entries {
                grad.weights[row + id.index()] += dk * v;
            }
        }
    }
    Ok(loss)
}

/// Mean cross-entropy over `batch` and its gradient, shaped like `p`.
pub fn loss_and_grad(
    p: &ModelParams,
    batch: &[(&FeatureVector, ClassId)],
    class_weights: Option<&[f64; NUM_CLASSES]>,
) -> Result<(f64, ModelParams)> {
    let mut grad = ModelParams::zeros(p.num_features);
    let loss = batch_gradient(p, batch, class_weights, &mut grad)?;
    Ok((loss, grad))
}

/// First and second moment estimates plus the number of updates taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(num_features: usize) -> Self {
        AdamState {
            step: 0,
            m: ModelParams::zeros(num_features),
            v: ModelParams::zeros(num_features),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Bias-corrected Adam update, `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
/// Nothing is modified if any gradient component is non-finite.
pub fn adam_step(p: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.num_features != p.num_features || state.m.num_features != p.num_features {
        return Err(Error::Dimension(
            "parameter, gradient and optimiser shapes differ".into(),
        ));
    }
    if let Some(index) = grads.values().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            step: state.step + 1,
            index,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let params = p.values_mut();
    let moments = state.m.values_mut().zip(state.v.values_mut());
    for ((w, g), (m, v)) in params.zip(grads.values()).zip(moments) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *w -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub eval_every_steps: u64,
    pub seed: u64,
    pub max_sequence_length: usize,
    /// Scale term counts by smoothed idf fitted on the training set.
    pub tfidf: bool,
    /// Weight the loss by inverse class frequency in the training set.
    pub class_weights: bool,
    /// F1 average used to pick the best checkpoint.
    pub selection_average: F1Average,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 5,
            eval_every_steps: 5000,
            seed: 0,
            max_sequence_length: DEFAULT_MAX_SEQUENCE_LENGTH,
            tfidf: false,
            class_weights: false,
            selection_average: F1Average::Micro,
        }
    }
}

impl TrainConfig {
    /// Learning rate suited to a linear model; everything else as default.
    pub const DESK_LEARNING_RATE: f64 = 1e-2;

    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: Self::DESK_LEARNING_RATE,
            ..Default::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1)")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.eval_every_steps == 0 {
            return bad("eval_every_steps must be at least 1");
        }
        if self.max_sequence_length < 2 {
            return bad("max_sequence_length must be at least 2");
        }
        Ok(())
    }

    /// epochs * ceil(n / batch_size).
    pub fn total_steps(&self, n: usize) -> u64 {
        (self.epochs * n.div_ceil(self.batch_size)) as u64
    }
}

/// Parameters plus the feature transform needed to score raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub params: ModelParams,
    pub idf: Option<Vec<f64>>,
    pub max_sequence_length: usize,
}

impl Classifier {
    pub fn features(&self, vocab: &Vocabulary, text: &str) -> FeatureVector {
        let x = featurize(&encode(text, vocab, self.max_sequence_length));
        match &self.idf {
            Some(idf) => x.scaled(idf),
            None => x,
        }
    }

    pub fn predict(&self, vocab: &Vocabulary, text: &str) -> Result<(ClassId, [f64; NUM_CLASSES])> {
        let probs = forward(&self.params, &self.features(vocab, text))?;
        Ok((argmax(&probs), probs))
    }

    pub fn predict_all(&self, vocab: &Vocabulary, texts: &[&str]) -> Result<Vec<ClassId>> {
        texts
            .par_iter()
            .map(|t| self.predict(vocab, t).map(|(c, _)| c))
            .collect()
    }
}

/// Term-frequency prediction with the default sequence length.
pub fn predict(p: &ModelParams, vocab: &Vocabulary, text: &str) -> Result<(ClassId, [f64; NUM_CLASSES])> {
    let x = featurize(&encode(text, vocab, DEFAULT_MAX_SEQUENCE_LENGTH));
    let probs = forward(p, &x)?;
    Ok((argmax(&probs), probs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    /// Mean training loss over the steps since the previous evaluation.
    pub loss: f64,
    /// Selection F1 on the test set.
    pub f1: f64,
    /// Macro precision on the test set.
    pub precision: f64,
    /// Macro recall on the test set.
    pub recall: f64,
}

impl HistoryEntry {
    fn from_metrics(step: u64, loss: f64, m: &MetricsReport, average: F1Average) -> Self {
        HistoryEntry {
            step,
            loss,
            f1: m.f1(average),
            precision: m.macro_avg.precision,
            recall: m.macro_avg.recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub classifier: Classifier,
    pub optimizer: AdamState,
    pub config: TrainConfig,
    pub test_metrics: MetricsReport,
}

impl Checkpoint {
    pub fn f1(&self) -> f64 {
        self.test_metrics.f1(self.config.selection_average)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<HistoryEntry>,
    pub total_steps: u64,
}

fn encode_all(reports: &[Report], vocab: &Vocabulary, max_len: usize) -> Vec<FeatureVector> {
    reports
        .par_iter()
        .map(|r| featurize(&encode(&r.text, vocab, max_len)))
        .collect()
}

/// w_c = N / (K * n_c) over the K classes present; absent classes get 0.
pub fn inverse_frequency_weights(labels: &[ClassId]) -> [f64; NUM_CLASSES] {
    let mut counts = [0u64; NUM_CLASSES];
    for y in labels {
        counts[y.index()] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = labels.len() as f64;
    let mut w = [0.0; NUM_CLASSES];
    for (wk, &c) in w.iter_mut().zip(&counts) {
        if c > 0 {
            *wk = n / (present * c as f64);
        }
    }
    w
}

pub fn train(
    train_set: &[Report],
    test_set: &[Report],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(train_set, test_set, vocab, config, |_| Ok(()))
}

/// Train and call `on_checkpoint` after every evaluation.
pub fn train_with<F>(
    train_set: &[Report],
    test_set: &[Report],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mut on_checkpoint: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&Checkpoint) -> Result<()>,
{
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let width = vocab.len();
    let mut train_x = encode_all(train_set, vocab, config.max_sequence_length);
    let mut test_x = encode_all(test_set, vocab, config.max_sequence_length);
    let idf = config.tfidf.then(|| inverse_document_frequency(&train_x, width));
    if let Some(idf) = &idf {
        train_x = train_x.iter().map(|x| x.scaled(idf)).collect();
        test_x = test_x.iter().map(|x| x.scaled(idf)).collect();
    }
    let train_y: Vec<ClassId> = train_set.iter().map(Report::label).collect();
    let test_y: Vec<ClassId> = test_set.iter().map(Report::label).collect();
    let weights = config.class_weights.then(|| inverse_frequency_weights(&train_y));

    let mut classifier = Classifier {
        params: ModelParams::zeros(width),
        idf,
        max_sequence_length: config.max_sequence_length,
    };
    let mut optimizer = AdamState::new(width);
    let mut grad = ModelParams::zeros(width);
    let adam = config.adam();
    let total_steps = config.total_steps(train_set.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let (mut loss_sum, mut loss_steps) = (0.0, 0u64);
    let mut step = 0u64;
    let mut batch: Vec<(&FeatureVector, ClassId)> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.sort_unstable();
        let mut stream = rng::stream(config.seed, "epoch", &epoch.to_string());
        rng::shuffle(&mut order, &mut stream);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| (&train_x[i], train_y[i])));
            let loss = batch_gradient(&classifier.params, &batch, weights.as_ref(), &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteGradient {
                    step: step + 1,
                    index: 0,
                });
            }
            adam_step(&mut classifier.params, &grad, &mut optimizer, &adam)?;
            step += 1;
            loss_sum += loss;
            loss_steps += 1;
            if step.is_multiple_of(config.eval_every_steps) || step == total_steps {
                let preds: Vec<ClassId> = test_x
                    .par_iter()
                    .map(|x| argmax(&softmax(&classifier.params.logits(x))))
                    .collect();
                let metrics = classwise_report(&preds, &test_y)?;
                history.push(HistoryEntry::from_metrics(
                    step,
                    loss_sum / loss_steps as f64,
                    &metrics,
                    config.selection_average,
                ));
                loss_sum = 0.0;
                loss_steps = 0;
                let checkpoint = Checkpoint {
                    step,
                    classifier: classifier.clone(),
                    optimizer: optimizer.clone(),
                    config: config.clone(),
                    test_metrics: metrics,
                };
                on_checkpoint(&checkpoint)?;
                // strictly greater keeps the earliest step on ties
                if best.as_ref().is_none_or(|b| checkpoint.f1() > b.f1()) {
                    best = Some(checkpoint);
                }
            }
        }
    }
    Ok(TrainOutcome {
        best: best.expect("final step is always evaluated"),
        history,
        total_steps,
    })
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DAEDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    step: u64,
    num_classes: usize,
    num_features: usize,
    optimizer_step: u64,
    has_idf: bool,
    max_sequence_length: usize,
    config: TrainConfig,
    test_metrics: MetricsReport,
}

fn write_f64s<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        input
            .read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint("truncated parameter block".into()))?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn read_params<R: Read>(input: &mut R, num_features: usize) -> Result<ModelParams> {
    let weights = read_f64s(input, NUM_CLASSES * num_features)?;
    let bias: [f64; NUM_CLASSES] = read_f64s(input, NUM_CLASSES)?.try_into().expect("length read");
    ModelParams::from_parts(num_features, weights, bias)
}

impl Checkpoint {
    /// Magic, u32 format version, u64 header length, JSON header, then
    /// little-endian f64 blocks: weights, bias, Adam m, Adam v, idf.
    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        let p = &self.classifier.params;
        let header = CheckpointHeader {
            step: self.step,
            num_classes: NUM_CLASSES,
            num_features: p.num_features,
            optimizer_step: self.optimizer.step,
            has_idf: self.classifier.idf.is_some(),
            max_sequence_length: self.classifier.max_sequence_length,
            config: self.config.clone(),
            test_metrics: self.test_metrics.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for block in [p, &self.optimizer.m, &self.optimizer.v] {
            write_f64s(&mut out, &block.weights)?;
            write_f64s(&mut out, &block.bias)?;
        }
        if let Some(idf) = &self.classifier.idf {
            write_f64s(&mut out, idf)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut magic = [0u8; 8];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        input
            .read_exact(&mut json)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        let h: CheckpointHeader = serde_json::from_slice(&json)?;
        if h.num_classes != NUM_CLASSES {
            return Err(Error::Checkpoint(format!(
                "expected {NUM_CLASSES} classes, found {}",
                h.num_classes
            )));
        }
        let params = read_params(&mut input, h.num_features)?;
        let m = read_params(&mut input, h.num_features)?;
        let v = read_params(&mut input, h.num_features)?;
        let idf = if h.has_idf {
            Some(read_f64s(&mut input, h.num_features)?)
        } else {
            None
        };
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Checkpoint("trailing bytes after parameter blocks".into()));
        }
        Ok(Checkpoint {
            step: h.step,
            classifier: Classifier {
                params,
                idf,
                max_sequence_length: h.max_sequence_length,
            },
            optimizer: AdamState {
                step: h.optimizer_step,
                m,
                v,
            },
            config: h.config,
            test_metrics: h.test_metrics,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
        self.write_to(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
        Self::read_from(file)
    }
}
