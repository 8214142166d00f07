//! Binary HDC classifier: single-pass bundling, Hamming inference, top-k
//! evaluation and an iterative-retraining baseline.
//!
//! Each class keeps two versions of its hypervector: an integer accumulator
//! used for training updates and its sign binarization used for inference.

use std::io::{Read, Write};

use crate::dataset::LabeledFeatureSet;
use crate::encoding::ProjectionMatrix;
use crate::error::{dim_mismatch, invalid, Error, Result};
use crate::hypervec::{hamming_words, AccumulatorVector, Hypervector};

/// Class hypervectors together with the encoder that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassBank {
    projection: ProjectionMatrix,
    accumulators: Vec<AccumulatorVector>,
    binarized: Vec<Hypervector>,
    label_names: Vec<String>,
}

/// Classes ranked by Hamming distance to a query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    /// `(label, distance)`, ascending by distance then by label.
    pub ranking: Vec<(usize, u32)>,
}

impl Prediction {
    pub fn top1(&self) -> usize {
        self.ranking[0].0
    }

    /// Whether `label` is among the first `k` entries.
    pub fn in_top_k(&self, label: usize, k: usize) -> bool {
        self.ranking.iter().take(k).any(|&(l, _)| l == label)
    }
}

/// Per-run evaluation of a bank on a labeled set.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `top_k[k-1]` is the top-k accuracy, for k = 1..=L.
    pub top_k: Vec<f64>,
    /// `confusion[true][predicted]` counts of top-1 predictions.
    pub confusion: Vec<Vec<u32>>,
}

impl Evaluation {
    pub fn top(&self, k: usize) -> f64 {
        self.top_k[k.clamp(1, self.top_k.len()) - 1]
    }
}

/// Ranks all class hypervectors by distance to `query`.
fn rank(binarized: &[Hypervector], query: &Hypervector) -> Prediction {
    let mut ranking: Vec<(usize, u32)> = binarized
        .iter()
        .enumerate()
        .map(|(l, c)| (l, hamming_words(c.words(), query.words())))
        .collect();
    ranking.sort_by_key(|&(l, d)| (d, l));
    Prediction { ranking }
}

fn check_dataset(proj: &ProjectionMatrix, set: &LabeledFeatureSet) -> Result<()> {
    if set.d() != proj.d() {
        return dim_mismatch("dataset features", proj.d(), set.d());
    }
    Ok(())
}

impl ClassBank {
    /// Assembles a bank, checking that every binarized vector is the sign of
    /// its accumulator.
    pub fn from_parts(
        projection: ProjectionMatrix,
        accumulators: Vec<AccumulatorVector>,
        binarized: Vec<Hypervector>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if accumulators.is_empty()
            || accumulators.len() != binarized.len()
            || accumulators.len() != label_names.len()
        {
            return invalid("class bank needs one accumulator, hypervector and name per class");
        }
        for (a, b) in accumulators.iter().zip(&binarized) {
            if a.dim() != projection.hyper_d() || b.dim() != projection.hyper_d() {
                return dim_mismatch("class hypervector", projection.hyper_d(), a.dim());
            }
            if a.binarize() != *b {
                return invalid("binarized class hypervector is stale");
            }
        }
        Ok(Self {
            projection,
            accumulators,
            binarized,
            label_names,
        })
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    pub fn accumulators(&self) -> &[AccumulatorVector] {
        &self.accumulators
    }

    pub fn binarized(&self) -> &[Hypervector] {
        &self.binarized
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn hyper_d(&self) -> usize {
        self.projection.hyper_d()
    }

    fn rebinarize(&mut self) {
        self.binarized = self.accumulators.iter().map(|a| a.binarize()).collect();
    }

    /// Ranks classes for an already encoded query.
    pub fn classify_encoded(&self, query: &Hypervector) -> Result<Prediction> {
        if query.dim() != self.hyper_d() {
            return dim_mismatch("query hypervector", self.hyper_d(), query.dim());
        }
        Ok(rank(&self.binarized, query))
    }

    /// Encodes `f` and ranks every class by Hamming distance.
    pub fn classify(&self, f: &[f64]) -> Result<Prediction> {
        let query = self.projection.encode(f)?;
        self.classify_encoded(&query)
    }

    /// Top-1..top-L accuracies and the top-1 confusion matrix.
    pub fn evaluate(&self, test: &LabeledFeatureSet) -> Result<Evaluation> {
        check_dataset(&self.projection, test)?;
        let classes = self.num_classes();
        if test.num_classes() > classes {
            return invalid("test set has more classes than the bank");
        }
        let mut hits = vec![0usize; classes];
        let mut confusion = vec![vec![0u32; classes]; classes];
        for (f, label) in test.iter() {
            let p = self.classify(f)?;
            confusion[label][p.top1()] += 1;
            if let Some(pos) = p.ranking.iter().position(|&(l, _)| l == label) {
                hits[pos] += 1;
            }
        }
        let n = test.len() as f64;
        let mut cum = 0usize;
        let top_k = hits
            .iter()
            .map(|h| {
                cum += h;
                cum as f64 / n
            })
            .collect();
        Ok(Evaluation { top_k, confusion })
    }

    /// Accuracy of `accumulators`' binarization on pre-encoded samples.
    fn accuracy_encoded(&self, encoded: &[(Hypervector, usize)]) -> f64 {
        let hits = encoded
            .iter()
            .filter(|(h, l)| rank(&self.binarized, h).top1() == *l)
            .count();
        hits as f64 / encoded.len() as f64
    }

    /// Writes the accumulator section: class count, dimension (u32 LE), then
    /// for each class its bundle count (u32) and `dim` i32 counts.
    pub fn write_accumulators<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.num_classes() as u32).to_le_bytes())?;
        w.write_all(&(self.hyper_d() as u32).to_le_bytes())?;
        for a in &self.accumulators {
            w.write_all(&a.bundled().to_le_bytes())?;
            for c in a.counts() {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_accumulators<R: Read + ?Sized>(r: &mut R) -> Result<Vec<AccumulatorVector>> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let classes = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        (0..classes)
            .map(|_| {
                r.read_exact(&mut b4)?;
                let bundled = u32::from_le_bytes(b4);
                let counts = (0..dim)
                    .map(|_| {
                        r.read_exact(&mut b4)?;
                        Ok(i32::from_le_bytes(b4))
                    })
                    .collect::<Result<Vec<_>>>()?;
                AccumulatorVector::from_counts(counts, bundled).map_err(|e| Error::Format {
                    what: "accumulators",
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// Writes the binarized section: class count (u32 LE) then each
    /// hypervector in its own serialization.
    pub fn write_binarized<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.num_classes() as u32).to_le_bytes())?;
        for h in &self.binarized {
            h.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_binarized<R: Read + ?Sized>(r: &mut R) -> Result<Vec<Hypervector>> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        (0..u32::from_le_bytes(b4))
            .map(|_| Hypervector::read_from(r))
            .collect()
    }
}

/// Bundles every encoded training sample into its class accumulator, then
/// binarizes.
pub fn train_single_pass(proj: &ProjectionMatrix, dataset: &LabeledFeatureSet) -> Result<ClassBank> {
    check_dataset(proj, dataset)?;
    let mut accumulators =
        vec![AccumulatorVector::new(proj.hyper_d())?; dataset.num_classes()];
    for (f, label) in dataset.iter() {
        accumulators[label].accumulate(&proj.encode(f)?)?;
    }
    let binarized = accumulators.iter().map(|a| a.binarize()).collect();
    Ok(ClassBank {
        projection: proj.clone(),
        accumulators,
        binarized,
        label_names: dataset.label_names().to_vec(),
    })
}

/// Classifies `f` with `bank`.
pub fn classify(bank: &ClassBank, f: &[f64]) -> Result<Prediction> {
    bank.classify(f)
}

/// Fraction of samples whose true label is among the `k` nearest classes.
pub fn top_k_accuracy(bank: &ClassBank, test: &LabeledFeatureSet, k: usize) -> Result<f64> {
    if k == 0 || k > bank.num_classes() {
        return invalid(format!("k={k} outside 1..={}", bank.num_classes()));
    }
    Ok(bank.evaluate(test)?.top(k))
}

/// Outcome of [`retrain_epochs`].
#[derive(Clone, Debug, PartialEq)]
pub struct RetrainOutcome {
    pub bank: ClassBank,
    /// Validation accuracy after each epoch.
    pub trace: Vec<f64>,
    /// Misclassified training samples per epoch.
    pub updates: Vec<usize>,
}

/// Perceptron-style retraining.
///
/// Training samples are visited in dataset order. Each is scored against the
/// current integer accumulators by cosine similarity with `bipolar(H)`; on a
/// miss with true label `t` and prediction `p`, `lr · bipolar(H)` is added to
/// accumulator `t` and subtracted from accumulator `p` straight away. The
/// binarized bank is refreshed at the end of each epoch and scored on
/// `validation` (or on `dataset` when absent).
pub fn retrain_epochs(
    bank: &ClassBank,
    dataset: &LabeledFeatureSet,
    epochs: usize,
    lr: u32,
    validation: Option<&LabeledFeatureSet>,
) -> Result<RetrainOutcome> {
    if epochs == 0 {
        return invalid("retraining needs at least one epoch");
    }
    if lr == 0 {
        return invalid("retraining learning rate must be positive");
    }
    let weight = i32::try_from(lr).map_err(|_| Error::Validation("lr too large".into()))?;
    check_dataset(&bank.projection, dataset)?;
    if dataset.num_classes() > bank.num_classes() {
        return invalid("dataset has more classes than the bank");
    }
    let encode_all = |set: &LabeledFeatureSet| -> Result<Vec<(Hypervector, usize)>> {
        check_dataset(&bank.projection, set)?;
        set.iter()
            .map(|(f, l)| Ok((bank.projection.encode(f)?, l)))
            .collect()
    };
    let train = encode_all(dataset)?;
    let val = match validation {
        Some(v) => Some(encode_all(v)?),
        None => None,
    };
    let mut bank = bank.clone();
    let mut trace = Vec::with_capacity(epochs);
    let mut updates = Vec::with_capacity(epochs);
    let online: Vec<(Vec<i8>, &Hypervector, usize)> =
        train.iter().map(|(h, l)| (h.to_bipolar(), h, *l)).collect();
    let norm = |a: &AccumulatorVector| {
        let sq: i64 = a.counts().iter().map(|&c| c as i64 * c as i64).sum();
        (sq as f64).sqrt().max(1.0)
    };
    let mut norms: Vec<f64> = bank.accumulators.iter().map(norm).collect();
    for _ in 0..epochs {
        let mut misses = 0;
        for (bip, h, t) in &online {
            let mut p = 0;
            let mut best = f64::NEG_INFINITY;
            for (l, acc) in bank.accumulators.iter().enumerate() {
                let dot: i64 = acc.counts().iter().zip(bip).map(|(&c, &b)| c as i64 * b as i64).sum();
                let score = dot as f64 / norms[l];
                if score > best {
                    best = score;
                    p = l;
                }
            }
            if p != *t {
                bank.accumulators[*t].add_scaled(h, weight)?;
                bank.accumulators[p].add_scaled(h, -weight)?;
                norms[*t] = norm(&bank.accumulators[*t]);
                norms[p] = norm(&bank.accumulators[p]);
                misses += 1;
            }
        }
        bank.rebinarize();
        trace.push(bank.accuracy_encoded(val.as_ref().unwrap_or(&train)));
        updates.push(misses);
    }
    Ok(RetrainOutcome {
        bank,
        trace,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;
    use crate::seed;
    use rand::Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("k{i}")).collect()
    }

    fn random_set(n: usize, d: usize, classes: usize, s: u64) -> LabeledFeatureSet {
        let mut rng = seed::rng(s, &[]);
        let samples = (0..n)
            .map(|i| {
                (
                    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (i % classes) as u32,
                )
            })
            .collect();
        LabeledFeatureSet::new(samples, names(classes), Split::Train).unwrap()
    }

    /// Clustered data: class `c` centers on a random direction.
    fn clustered(n: usize, d: usize, classes: usize, noise: f64, s: u64) -> LabeledFeatureSet {
        let mut rng = seed::rng(s, &[]);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let samples = (0..n)
            .map(|i| {
                let c = i % classes;
                (
                    centers[c]
                        .iter()
                        .map(|x| x + noise * rng.random_range(-1.0..1.0))
                        .collect(),
                    c as u32,
                )
            })
            .collect();
        LabeledFeatureSet::new(samples, names(classes), Split::Train).unwrap()
    }

    #[test]
    fn singleton_classes_equal_their_encoding() {
        let set = random_set(4, 8, 4, 1);
        let p = ProjectionMatrix::random(8, 100, 2).unwrap();
        let bank = train_single_pass(&p, &set).unwrap();
        for (f, l) in set.iter() {
            assert_eq!(bank.binarized()[l], p.encode(f).unwrap());
            let pred = bank.classify(f).unwrap();
            assert_eq!(pred.top1(), l);
            assert_eq!(pred.ranking[0].1, 0);
        }
    }

    #[test]
    fn duplicated_dataset_gives_same_bank() {
        let set = random_set(30, 8, 3, 3);
        let idx: Vec<usize> = (0..30).chain(0..30).collect();
        let doubled = set.subset(&idx, Split::Train).unwrap();
        let p = ProjectionMatrix::random(8, 64, 4).unwrap();
        let a = train_single_pass(&p, &set).unwrap();
        let b = train_single_pass(&p, &doubled).unwrap();
        assert_eq!(a.binarized(), b.binarized());
        for (x, y) in a.accumulators().iter().zip(b.accumulators()) {
            let twice: Vec<i32> = x.counts().iter().map(|c| 2 * c).collect();
            assert_eq!(y.counts(), &twice[..]);
        }
    }

    #[test]
    fn accumulators_match_bundling_oracle() {
        let set = random_set(60, 16, 3, 5);
        let p = ProjectionMatrix::random(16, 300, 6).unwrap();
        let bank = train_single_pass(&p, &set).unwrap();
        let mut oracle = vec![vec![0i32; 300]; 3];
        for (f, l) in set.iter() {
            for (j, o) in oracle[l].iter_mut().enumerate() {
                let s: f64 = f.iter().enumerate().map(|(i, x)| x * p.entry(i, j) as f64).sum();
                *o += if s >= 0.0 { 1 } else { -1 };
            }
        }
        for (acc, o) in bank.accumulators().iter().zip(&oracle) {
            assert_eq!(acc.counts(), &o[..]);
        }
    }

    #[test]
    fn ties_break_to_lower_label() {
        let p = ProjectionMatrix::random(4, 32, 1).unwrap();
        let f = vec![0.1, 0.2, -0.3, 0.4];
        let set = LabeledFeatureSet::new(
            vec![(f.clone(), 1), (f.clone(), 0), (vec![-0.1, -0.2, 0.3, -0.4], 2)],
            names(3),
            Split::Train,
        )
        .unwrap();
        let bank = train_single_pass(&p, &set).unwrap();
        assert_eq!(bank.binarized()[0], bank.binarized()[1]);
        let pred = bank.classify(&f).unwrap();
        assert_eq!(pred.ranking[0], (0, 0));
        assert_eq!(pred.ranking[1], (1, 0));
    }

    #[test]
    fn top1_matches_argmin_oracle() {
        let set = random_set(90, 12, 5, 7);
        let p = ProjectionMatrix::random(12, 200, 8).unwrap();
        let bank = train_single_pass(&p, &set).unwrap();
        let mut rng = seed::rng(9, &[]);
        for _ in 0..500 {
            let q: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = p.encode(&q).unwrap();
            let dists: Vec<usize> = bank
                .binarized()
                .iter()
                .map(|c| (0..200).filter(|&j| c.bit(j) != h.bit(j)).count())
                .collect();
            let min = *dists.iter().min().unwrap();
            let oracle = dists.iter().position(|&d| d == min).unwrap();
            let pred = bank.classify(&q).unwrap();
            assert_eq!(pred.top1(), oracle);
            assert_eq!(pred.ranking.len(), 5);
            assert!(pred.ranking.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }

    #[test]
    fn top_k_is_monotone_and_exhaustive() {
        let train = clustered(200, 10, 6, 1.5, 10);
        let test = clustered(120, 10, 6, 1.5, 10);
        let p = ProjectionMatrix::random(10, 128, 11).unwrap();
        let bank = train_single_pass(&p, &train).unwrap();
        let accs: Vec<f64> = (1..=6).map(|k| top_k_accuracy(&bank, &test, k).unwrap()).collect();
        assert!(accs.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(accs[5], 1.0);
        assert!(top_k_accuracy(&bank, &test, 0).is_err());
        assert!(top_k_accuracy(&bank, &test, 7).is_err());
    }

    #[test]
    fn well_separated_clusters_classify_perfectly() {
        let train = clustered(100, 32, 4, 0.05, 12);
        let p = ProjectionMatrix::random(32, 1000, 13).unwrap();
        let bank = train_single_pass(&p, &train).unwrap();
        assert_eq!(top_k_accuracy(&bank, &train, 1).unwrap(), 1.0);
    }

    #[test]
    fn retraining_leaves_perfect_bank_alone() {
        let train = clustered(40, 32, 4, 0.05, 12);
        let p = ProjectionMatrix::random(32, 1000, 13).unwrap();
        let bank = train_single_pass(&p, &train).unwrap();
        let out = retrain_epochs(&bank, &train, 3, 1, None).unwrap();
        assert_eq!(out.bank, bank);
        assert_eq!(out.updates, vec![0, 0, 0]);
        assert_eq!(out.trace, vec![1.0; 3]);
    }

    #[test]
    fn retraining_updates_only_two_accumulators() {
        let p = ProjectionMatrix::random(4, 64, 2).unwrap();
        let a = vec![1.0, 0.5, -0.25, 0.75];
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        let set = LabeledFeatureSet::new(
            vec![(a.clone(), 0), (b.clone(), 1), (vec![0.3, -0.9, 0.1, 0.2], 2)],
            names(3),
            Split::Train,
        )
        .unwrap();
        let bank = train_single_pass(&p, &set).unwrap();
        // A sample that looks exactly like class 0 but is labeled class 2.
        let wrong = LabeledFeatureSet::new(vec![(a.clone(), 2)], names(3), Split::Train).unwrap();
        let out = retrain_epochs(&bank, &wrong, 1, 1, None).unwrap();
        let h = p.encode(&a).unwrap();
        let delta = |l: usize| -> Vec<i32> {
            out.bank.accumulators()[l]
                .counts()
                .iter()
                .zip(bank.accumulators()[l].counts())
                .map(|(x, y)| x - y)
                .collect()
        };
        let bip: Vec<i32> = h.to_bipolar().iter().map(|&v| v as i32).collect();
        let neg: Vec<i32> = bip.iter().map(|v| -v).collect();
        assert_eq!(delta(2), bip);
        assert_eq!(delta(0), neg);
        assert!(delta(1).iter().all(|&v| v == 0));
        for (acc, hv) in out.bank.accumulators().iter().zip(out.bank.binarized()) {
            assert_eq!(acc.binarize(), *hv);
        }
    }

    #[test]
    fn bank_rejects_stale_binarization() {
        let set = random_set(6, 4, 2, 1);
        let p = ProjectionMatrix::random(4, 16, 1).unwrap();
        let bank = train_single_pass(&p, &set).unwrap();
        let mut bin = bank.binarized().to_vec();
        bin[0] = bin[0].complement();
        assert!(ClassBank::from_parts(
            p,
            bank.accumulators().to_vec(),
            bin,
            bank.label_names().to_vec()
        )
        .is_err());
    }
}
