//! Victim classifiers and the synthetic data they are trained on.
//!
//! Two model families are provided. The prototype model keeps one mean per
//! class and scores `softmax(-|x - mu_k|^2 / T)`; the MLP is a single tanh
//! hidden layer with a softmax head. Both return a [`ConfidenceVector`] that is
//! nonnegative and sums to one, which is the quantity the defense perturbs.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// One labelled feature vector with every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub dim: usize,
    pub split: Split,
}

impl Dataset {
    /// Builds a dataset after checking that every sample has `dim` features
    /// in `[0, 1]` and a label below `num_classes`.
    pub fn new(samples: Vec<Sample>, num_classes: usize, dim: usize, split: Split) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("a dataset needs at least two classes"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.features.len(),
                });
            }
            if s.label >= num_classes {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} but there are {num_classes} classes",
                    s.label
                )));
            }
            if s.features.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!("sample {i} has a feature outside [0,1]")));
            }
        }
        Ok(Self {
            samples,
            num_classes,
            dim,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `label,dim=M,classes=N` followed by one `label,f_0,...` row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = format!("label,dim={},classes={}\n", self.dim, self.num_classes);
        for s in &self.samples {
            let _ = write!(out, "{}", s.label);
            for v in &s.features {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, split: Split) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyInput("dataset csv"))?;
        let (dim, classes) = parse_header(header)?;
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label = fields
                .next()
                .and_then(|f| f.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::invalid(format!("row {}: bad label", row + 1)))?;
            let features = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid(format!("row {}: {e}", row + 1)))?;
            samples.push(Sample { features, label });
        }
        Dataset::new(samples, classes, dim, split)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path, split: Split) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text, split)
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let bad = || Error::invalid(format!("malformed dataset header `{header}`"));
    let parts: Vec<&str> = header.trim().split(',').collect();
    if parts.len() != 3 || parts[0] != "label" {
        return Err(bad());
    }
    let dim = parts[1]
        .strip_prefix("dim=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad)?;
    let classes = parts[2]
        .strip_prefix("classes=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad)?;
    Ok((dim, classes))
}

/// Generated blob data, already split 80/20 per class.
#[derive(Debug, Clone)]
pub struct Blobs {
    pub train: Dataset,
    pub test: Dataset,
    pub centers: Vec<Vec<f64>>,
}

impl Blobs {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Number of candidate points tried when placing each class center.
const CENTER_CANDIDATES: usize = 64;

/// Gaussian blobs around seeded class centers, clipped to the unit box.
///
/// Centers are placed by farthest-point sampling: each new center is the
/// candidate (uniform on `[0.15, 0.85]^dim`) farthest from those already
/// placed, which keeps classes well apart for small `num_classes`.
pub fn gen_blobs(num_classes: usize, dim: usize, spread: f64, per_class: usize, seed: u64) -> Result<Blobs> {
    if num_classes < 2 {
        return Err(Error::invalid("num_classes must be at least 2"));
    }
    if dim < 2 {
        return Err(Error::invalid("dim must be at least 2"));
    }
    if per_class < 1 {
        return Err(Error::invalid("per_class must be at least 1"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::invalid("spread must be positive"));
    }

    let mut rng = rng_from(&[seed, 0xB10B]);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..CENTER_CANDIDATES {
            let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(0.15..0.85)).collect();
            let nearest = centers.iter().map(|c| sq_dist(c, &cand)).fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(d, _)| nearest > *d) {
                best = Some((nearest, cand));
            }
        }
        centers.push(best.expect("at least one candidate").1);
    }

    let n_train = ((per_class as f64) * 0.8).round() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, center) in centers.iter().enumerate() {
        let mut class_samples: Vec<Sample> = (0..per_class)
            .map(|_| {
                let features = center
                    .iter()
                    .map(|&c| {
                        let z: f64 = rng.sample(StandardNormal);
                        (c + spread * z).clamp(0.0, 1.0)
                    })
                    .collect();
                Sample { features, label }
            })
            .collect();
        class_samples.shuffle(&mut rng);
        let rest = class_samples.split_off(n_train.min(per_class));
        train.extend(class_samples);
        test.extend(rest);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);

    Ok(Blobs {
        train: Dataset::new(train, num_classes, dim, Split::Train)?,
        test: Dataset::new(test, num_classes, dim, Split::Test)?,
        centers,
    })
}

/// Per-class confidence scores `F(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceVector(pub Vec<f64>);

impl ConfidenceVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Prototype,
    Mlp,
}

/// A trained classifier.
///
/// Parameter layout in `params`:
/// * prototype: the `N x M` class means, row-major.
/// * mlp with `H` hidden units: `W1` (`H x M`), `b1` (`H`), `W2` (`N x H`),
///   `b2` (`N`), all row-major and concatenated in that order. `H` is
///   recovered from the parameter count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub kind: ClassifierKind,
    #[serde(rename = "N")]
    pub num_classes: usize,
    #[serde(rename = "M")]
    pub dim: usize,
    pub params: Vec<f64>,
    pub temperature: f64,
}

impl Classifier {
    /// A prototype model from explicit class centers.
    pub fn prototype(centers: &[Vec<f64>], temperature: f64) -> Result<Self> {
        let num_classes = centers.len();
        if num_classes < 2 {
            return Err(Error::invalid("need at least two prototypes"));
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("prototypes differ in dimension"));
        }
        if !(temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(Self {
            kind: ClassifierKind::Prototype,
            num_classes,
            dim,
            params: centers.concat(),
            temperature,
        })
    }

    fn hidden(&self) -> usize {
        (self.params.len() - self.num_classes) / (self.dim + 1 + self.num_classes)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Classifier = serde_json::from_str(text).map_err(|e| Error::invalid(format!("classifier json: {e}")))?;
        let expected_ok = match c.kind {
            ClassifierKind::Prototype => c.params.len() == c.num_classes * c.dim,
            ClassifierKind::Mlp => {
                c.params.len() > c.num_classes
                    && (c.params.len() - c.num_classes).is_multiple_of(c.dim + 1 + c.num_classes)
            }
        };
        if !expected_ok || c.num_classes < 2 || !(c.temperature > 0.0) {
            return Err(Error::invalid("classifier json has inconsistent shape"));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Undefended confidence vector `F(x)`.
    pub fn predict_soft(&self, x: &[f64]) -> Result<ConfidenceVector> {
        self.check_dim(x)?;
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        Ok(ConfidenceVector(z))
    }

    /// `argmax F(x)` with ties to the lowest index.
    pub fn predict_hard(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_soft(x)?.argmax())
    }

    /// Pre-softmax scores.
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ClassifierKind::Prototype => self
                .params
                .chunks_exact(self.dim)
                .map(|c| -sq_dist(c, x) / self.temperature)
                .collect(),
            ClassifierKind::Mlp => {
                let view = MlpView::new(&self.params, self.dim, self.hidden(), self.num_classes);
                let h = view.hidden_activations(x);
                view.output(&h)
            }
        }
    }

    /// Fraction of samples whose undefended label is correct.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        let mut correct = 0usize;
        for s in &data.samples {
            if self.predict_hard(&s.features)? == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

struct MlpView<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
    dim: usize,
    hidden: usize,
}

impl<'a> MlpView<'a> {
    fn new(p: &'a [f64], dim: usize, hidden: usize, classes: usize) -> Self {
        let (w1, rest) = p.split_at(hidden * dim);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(classes * hidden);
        Self {
            w1,
            b1,
            w2,
            b2,
            dim,
            hidden,
        }
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .chunks_exact(self.dim)
            .zip(self.b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).tanh())
            .collect()
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        self.w2
            .chunks_exact(self.hidden)
            .zip(self.b2)
            .map(|(row, b)| row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ClassifierKind,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Hidden units (mlp only).
    pub hidden: usize,
    /// Mini-batch size (mlp only).
    pub batch: usize,
    /// Fixed softmax temperature (prototype only); fitted by maximum
    /// likelihood when `None`.
    #[serde(default)]
    pub temperature: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Prototype,
            epochs: 50,
            lr: 0.1,
            seed: 0,
            hidden: 32,
            batch: 32,
            temperature: None,
        }
    }
}

/// Trains a classifier; deterministic in `(data, cfg)`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<Classifier> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::invalid("lr must be positive"));
    }
    match cfg.kind {
        ClassifierKind::Prototype => train_prototype(data, cfg.temperature),
        ClassifierKind::Mlp => train_mlp(data, cfg),
    }
}

fn train_prototype(data: &Dataset, temperature: Option<f64>) -> Result<Classifier> {
    let (n, m) = (data.num_classes, data.dim);
    let mut sums = vec![vec![0.0; m]; n];
    let mut counts = vec![0usize; n];
    for s in &data.samples {
        counts[s.label] += 1;
        for (acc, v) in sums[s.label].iter_mut().zip(&s.features) {
            *acc += v;
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("class {k} has no training samples")));
    }
    let centers: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();

    if let Some(t) = temperature {
        return Classifier::prototype(&centers, t);
    }
    // squared distance of every sample to every center
    let dists: Vec<(usize, Vec<f64>)> = data
        .samples
        .iter()
        .map(|s| (s.label, centers.iter().map(|c| sq_dist(c, &s.features)).collect()))
        .collect();
    let temperature = fit_temperature(&dists);
    Classifier::prototype(&centers, temperature)
}

fn mean_log_likelihood(dists: &[(usize, Vec<f64>)], temperature: f64) -> f64 {
    let total: f64 = dists
        .iter()
        .map(|(label, d)| {
            let z: Vec<f64> = d.iter().map(|v| -v / temperature).collect();
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            z[*label] - lse
        })
        .sum();
    total / dists.len() as f64
}

const LOG_T_MIN: f64 = -6.907_755_278_982_137; // ln 1e-3
const LOG_T_MAX: f64 = 6.907_755_278_982_137; // ln 1e3

/// Grid search over `ln T` followed by golden-section refinement.
fn fit_temperature(dists: &[(usize, Vec<f64>)]) -> f64 {
    let ll = |log_t: f64| mean_log_likelihood(dists, log_t.exp());
    let steps = 60;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| LOG_T_MIN + (LOG_T_MAX - LOG_T_MIN) * i as f64 / steps as f64)
        .collect();
    let scores: Vec<f64> = grid.iter().map(|&g| ll(g)).collect();
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let Some(best) = best else { return 1.0 };

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(steps)];
    let phi = 0.618_033_988_749_894_9;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (ll(a), ll(b));
    for _ in 0..60 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = ll(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = ll(a);
        }
    }
    let log_t = 0.5 * (lo + hi);
    let fitted = ll(log_t);
    if fitted.is_finite() && fitted > ll(0.0) {
        log_t.exp()
    } else {
        1.0
    }
}

fn train_mlp(data: &Dataset, cfg: &TrainConfig) -> Result<Classifier> {
    let (n, m, h) = (data.num_classes, data.dim, cfg.hidden.max(1));
    let mut rng = rng_from(&[cfg.seed, 0x4D4C50]);
    let mut params = Vec::with_capacity(h * m + h + n * h + n);
    let bound1 = (6.0 / (m + h) as f64).sqrt();
    params.extend((0..h * m).map(|_| rng.random_range(-bound1..bound1)));
    params.extend(std::iter::repeat_n(0.0, h));
    let bound2 = (6.0 / (h + n) as f64).sqrt();
    params.extend((0..n * h).map(|_| rng.random_range(-bound2..bound2)));
    params.extend(std::iter::repeat_n(0.0, n));

    let (o_b1, o_w2, o_b2) = (h * m, h * m + h, h * m + h + n * h);
    let batch = cfg.batch.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; params.len()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in chunk {
                let s = &data.samples[idx];
                let view = MlpView::new(&params, m, h, n);
                let hid = view.hidden_activations(&s.features);
                let mut p = view.output(&hid);
                softmax_in_place(&mut p);
                // dL/dz = p - onehot
                p[s.label] -= 1.0;
                let mut dh = vec![0.0; h];
                for k in 0..n {
                    let dz = p[k];
                    grad[o_b2 + k] += dz;
                    let row = o_w2 + k * h;
                    for j in 0..h {
                        grad[row + j] += dz * hid[j];
                        dh[j] += dz * params[row + j];
                    }
                }
                for j in 0..h {
                    let da = dh[j] * (1.0 - hid[j] * hid[j]);
                    grad[o_b1 + j] += da;
                    let row = j * m;
                    for (i, x) in s.features.iter().enumerate() {
                        grad[row + i] += da * x;
                    }
                }
            }
            let scale = cfg.lr / chunk.len() as f64;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= scale * g;
            }
        }
    }
    Ok(Classifier {
        kind: ClassifierKind::Mlp,
        num_classes: n,
        dim: m,
        params,
        temperature: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_proto() -> Classifier {
        Classifier::prototype(&[vec![0.0, 0.0], vec![1.0, 0.0]], 1.0).unwrap()
    }

    #[test]
    fn blob_bookkeeping() {
        let b = gen_blobs(10, 64, 0.08, 200, 7).unwrap();
        assert_eq!(b.len(), 2000);
        assert_eq!(b.train.len(), 1600);
        assert_eq!(b.test.len(), 400);
        assert_eq!(b.train.num_classes, 10);
        assert_eq!(b.train.dim, 64);
        for c in 0..10 {
            assert_eq!(b.test.samples.iter().filter(|s| s.label == c).count(), 40);
        }
    }

    #[test]
    fn zero_spread_samples_sit_on_centers() {
        let b = gen_blobs(3, 2, f64::MIN_POSITIVE, 1, 1).unwrap();
        for s in b.train.samples.iter().chain(&b.test.samples) {
            assert_eq!(s.features, b.centers[s.label]);
        }
    }

    #[test]
    fn gen_blobs_rejects_bad_arguments() {
        assert!(gen_blobs(1, 2, 0.1, 5, 0).is_err());
        assert!(gen_blobs(3, 1, 0.1, 5, 0).is_err());
        assert!(gen_blobs(3, 2, 0.0, 5, 0).is_err());
        assert!(gen_blobs(3, 2, 0.1, 0, 0).is_err());
    }

    #[test]
    fn two_prototype_equidistant_point() {
        let f = two_proto().predict_soft(&[0.5, 0.0]).unwrap();
        assert_eq!(f.0, vec![0.5, 0.5]);
        assert_eq!(two_proto().predict_hard(&[0.5, 0.0]).unwrap(), 0);
    }

    #[test]
    fn prototype_matches_hand_softmax() {
        let c = Classifier::prototype(&[vec![0.1, 0.2], vec![0.7, 0.4], vec![0.3, 0.9]], 0.35).unwrap();
        let x = [0.42, 0.55];
        let d = [
            (0.42f64 - 0.1).powi(2) + (0.55f64 - 0.2).powi(2),
            (0.42f64 - 0.7).powi(2) + (0.55f64 - 0.4).powi(2),
            (0.42f64 - 0.3).powi(2) + (0.55f64 - 0.9).powi(2),
        ];
        let e: Vec<f64> = d.iter().map(|v| (-v / 0.35).exp()).collect();
        let z: f64 = e.iter().sum();
        let got = c.predict_soft(&x).unwrap();
        for (g, w) in got.0.iter().zip(&e) {
            assert!((g - w / z).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = two_proto().predict_soft(&[0.1]).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, got: 1 });
        assert!(two_proto().predict_hard(&[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn prototype_on_degenerate_blobs_is_perfect() {
        let b = gen_blobs(4, 3, 1e-9, 20, 5).unwrap();
        let c = train(&b.train, &TrainConfig::default()).unwrap();
        assert_eq!(c.accuracy(&b.train).unwrap(), 1.0);
    }

    #[test]
    fn training_rejects_empty_data() {
        let empty = Dataset::new(vec![], 3, 2, Split::Train).unwrap();
        assert!(train(&empty, &TrainConfig::default()).is_err());
        let b = gen_blobs(3, 2, 0.1, 5, 0).unwrap();
        let bad = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&b.train, &bad).is_err());
    }

    #[test]
    fn fixed_temperature_skips_the_fit() {
        let b = gen_blobs(3, 4, 0.1, 10, 0).unwrap();
        let fitted = train(&b.train, &TrainConfig::default()).unwrap();
        let fixed = TrainConfig {
            temperature: Some(0.5),
            ..TrainConfig::default()
        };
        let c = train(&b.train, &fixed).unwrap();
        assert_eq!(c.temperature, 0.5);
        assert_eq!(c.params, fitted.params);
    }

    #[test]
    fn csv_round_trip() {
        let b = gen_blobs(3, 4, 0.1, 5, 2).unwrap();
        let text = b.train.to_csv();
        assert!(text.starts_with("label,dim=4,classes=3\n"));
        let back = Dataset::from_csv(&text, Split::Train).unwrap();
        assert_eq!(back, b.train);
    }

    #[test]
    fn csv_rejects_bad_header_and_rows() {
        assert!(Dataset::from_csv("label,dim=x,classes=3\n", Split::Test).is_err());
        assert!(Dataset::from_csv("label,dim=2,classes=3\n5,0.1,0.2\n", Split::Test).is_err());
        assert!(Dataset::from_csv("label,dim=2,classes=3\n1,0.1\n", Split::Test).is_err());
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let c = two_proto();
        let text = c.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["kind", "N", "M", "params", "temperature"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(Classifier::from_json(&text).unwrap(), c);
    }

    #[test]
    fn mlp_json_shape_is_checked() {
        let b = gen_blobs(3, 4, 0.05, 10, 1).unwrap();
        let cfg = TrainConfig {
            kind: ClassifierKind::Mlp,
            epochs: 2,
            hidden: 5,
            ..TrainConfig::default()
        };
        let c = train(&b.train, &cfg).unwrap();
        assert_eq!(c.params.len(), 5 * 4 + 5 + 3 * 5 + 3);
        assert_eq!(Classifier::from_json(&c.to_json()).unwrap(), c);
        let mut broken = c.clone();
        broken.params.pop();
        assert!(Classifier::from_json(&broken.to_json()).is_err());
    }
}
