use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifyOutcome, Prediction, TextItem};
use crate::label::StanceLabel;

pub const NB_BACKEND: &str = "naive_bayes";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NbError {
    #[error("no training example for class {0}")]
    MissingClass(StanceLabel),
    #[error("smoothing constant must be positive and finite, got {0}")]
    BadAlpha(f64),
}

/// Lowercases, splits on runs of non-alphanumeric characters and drops
/// tokens shorter than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

/// Multinomial Naive Bayes over unigram term frequencies with add-α
/// smoothing and empirical class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub alpha: f64,
    pub vocabulary: BTreeMap<String, usize>,
    /// Per class, count of each vocabulary index.
    pub token_counts: [Vec<u64>; 3],
    pub class_tokens: [u64; 3],
    pub class_docs: [u64; 3],
}

impl NbModel {
    /// Trains on labeled sentences; Ambiguous examples are skipped.
    pub fn train<'a, I>(examples: I, alpha: f64) -> Result<NbModel, NbError>
    where
        I: IntoIterator<Item = (&'a str, StanceLabel)>,
    {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(NbError::BadAlpha(alpha));
        }
        let mut class_docs = [0u64; 3];
        let mut by_token: BTreeMap<String, [u64; 3]> = BTreeMap::new();
        for (text, label) in examples {
            let Some(c) = label.class_index() else { continue };
            class_docs[c] += 1;
            for tok in tokenize(text) {
                by_token.entry(tok).or_default()[c] += 1;
            }
        }
        for (c, &n) in class_docs.iter().enumerate() {
            if n == 0 {
                return Err(NbError::MissingClass(StanceLabel::CLASSES[c]));
            }
        }
        let mut vocabulary = BTreeMap::new();
        let mut token_counts: [Vec<u64>; 3] = Default::default();
        let mut class_tokens = [0u64; 3];
        for (i, (tok, counts)) in by_token.into_iter().enumerate() {
            vocabulary.insert(tok, i);
            for c in 0..3 {
                token_counts[c].push(counts[c]);
                class_tokens[c] += counts[c];
            }
        }
        Ok(NbModel {
            alpha,
            vocabulary,
            token_counts,
            class_tokens,
            class_docs,
        })
    }

    pub fn priors(&self) -> [f64; 3] {
        let total: u64 = self.class_docs.iter().sum();
        self.class_docs.map(|n| n as f64 / total as f64)
    }

    pub fn model_version(&self) -> String {
        format!("nb-alpha{}-v{}", self.alpha, self.vocabulary.len())
    }

    /// Unnormalized log posterior per class.
    pub fn log_scores(&self, text: &str) -> [f64; 3] {
        let v = self.vocabulary.len() as f64;
        let priors = self.priors();
        let mut scores = priors.map(f64::ln);
        for tok in tokenize(text) {
            let Some(&i) = self.vocabulary.get(&tok) else { continue };
            for (c, score) in scores.iter_mut().enumerate() {
                let num = self.token_counts[c][i] as f64 + self.alpha;
                let den = self.class_tokens[c] as f64 + self.alpha * v;
                *score += (num / den).ln();
            }
        }
        scores
    }

    pub fn predict_probs(&self, text: &str) -> [f64; 3] {
        let scores = self.log_scores(text);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp = scores.map(|s| (s - max).exp());
        let sum: f64 = exp.iter().sum();
        exp.map(|e| e / sum)
    }

    pub fn predict(&self, sentence_id: &str, text: &str) -> Prediction {
        Prediction::from_probs(sentence_id, self.predict_probs(text), NB_BACKEND, self.model_version())
            .expect("softmax output is a distribution")
    }
}

impl Classifier for NbModel {
    fn backend(&self) -> &str {
        NB_BACKEND
    }

    fn classify(&self, items: &[TextItem]) -> ClassifyOutcome {
        ClassifyOutcome {
            predictions: items.iter().map(|it| self.predict(&it.id, &it.text)).collect(),
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use StanceLabel::*;

    /// Posterior by direct counting over the raw training list, without the
    /// model's vocabulary or cached totals.
    fn brute_posterior(train: &[(String, StanceLabel)], alpha: f64, text: &str) -> [f64; 3] {
        let mut vocab = std::collections::BTreeSet::new();
        for (t, l) in train {
            if l.class_index().is_some() {
                vocab.extend(tokenize(t));
            }
        }
        let v = vocab.len() as f64;
        let n_docs = train.iter().filter(|(_, l)| l.class_index().is_some()).count() as f64;
        let mut joint = [0f64; 3];
        for (c, class) in StanceLabel::CLASSES.iter().enumerate() {
            let docs: Vec<&String> = train.iter().filter(|(_, l)| l == class).map(|(t, _)| t).collect();
            let toks: Vec<String> = docs.iter().flat_map(|t| tokenize(t)).collect();
            let mut p = docs.len() as f64 / n_docs;
            for w in tokenize(text) {
                if !vocab.contains(&w) {
                    continue;
                }
                let count = toks.iter().filter(|t| **t == w).count() as f64;
                p *= (count + alpha) / (toks.len() as f64 + alpha * v);
            }
            joint[c] = p;
        }
        let z: f64 = joint.iter().sum();
        joint.map(|p| p / z)
    }

    fn toy() -> Vec<(String, StanceLabel)> {
        vec![
            ("piirid kinni".to_string(), Against),
            ("piirid kinni kohe".to_string(), Against),
            ("valitsus arutas".to_string(), Neutral),
            ("aitame põgenikke".to_string(), Supportive),
        ]
    }

    fn train(data: &[(String, StanceLabel)], alpha: f64) -> NbModel {
        NbModel::train(data.iter().map(|(t, l)| (t.as_str(), *l)), alpha).unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Eesti, a  ÕPPUR-id! 2023"), vec!["eesti", "õppur", "id", "2023"]);
        assert!(tokenize("a b . ,").is_empty());
    }

    #[test]
    fn disjoint_vocabularies_classify_own_examples() {
        let data = toy();
        let model = train(&data, 1.0);
        for (text, label) in &data {
            let p = model.predict("s", text);
            assert_eq!(p.label, *label, "{text}");
            assert!(p.confidence() > 1.0 / 3.0);
        }
    }

    #[test]
    fn unseen_or_empty_gives_priors() {
        let model = train(&toy(), 1.0);
        let priors = model.priors();
        assert_eq!(priors, [0.5, 0.25, 0.25]);
        for text in ["täiesti tundmatu", "", "a ."] {
            let p = model.predict_probs(text);
            for c in 0..3 {
                assert!((p[c] - priors[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_brute_force() {
        let data = toy();
        let model = train(&data, 0.5);
        for text in ["piirid kinni", "aitame kohe", "valitsus arutas piirid", "x"] {
            let got = model.predict_probs(text);
            let want = brute_posterior(&data, 0.5, text);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_class_and_bad_alpha() {
        let data = [("a b".to_string(), Against), ("cc".to_string(), Neutral)];
        assert_eq!(
            NbModel::train(data.iter().map(|(t, l)| (t.as_str(), *l)), 1.0),
            Err(NbError::MissingClass(Supportive))
        );
        assert!(matches!(NbModel::train(std::iter::empty(), 0.0), Err(NbError::BadAlpha(_))));
    }

    #[test]
    fn ambiguous_is_ignored() {
        let mut data = toy();
        let base = train(&data, 1.0);
        data.push(("piirid kinni".to_string(), Ambiguous));
        assert_eq!(train(&data, 1.0), base);
    }

    #[test]
    fn serialization_is_deterministic() {
        let a = serde_json::to_string(&train(&toy(), 1.0)).unwrap();
        let mut shuffled = toy();
        shuffled.reverse();
        let b = serde_json::to_string(&train(&shuffled, 1.0)).unwrap();
        assert_eq!(a, b);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["ränne", "piir", "abi", "pagulane", "riik", "töö", "keel", "kool"]).prop_map(String::from)
    }

    fn corpus() -> impl Strategy<Value = Vec<(String, StanceLabel)>> {
        let sentence = (prop::collection::vec(word(), 1..5), 0usize..3)
            .prop_map(|(ws, c)| (ws.join(" "), StanceLabel::CLASSES[c]));
        prop::collection::vec(sentence, 3..20).prop_filter("all classes present", |v| {
            StanceLabel::CLASSES.iter().all(|c| v.iter().any(|(_, l)| l == c))
        })
    }

    proptest! {
        #[test]
        fn duplication_with_scaled_alpha_is_invariant(
            data in corpus(),
            query in prop::collection::vec(word(), 0..6),
            alpha in 0.1f64..3.0,
        ) {
            let query = query.join(" ");
            let once = train(&data, alpha);
            let doubled_data: Vec<_> = data.iter().chain(data.iter()).cloned().collect();
            let twice = train(&doubled_data, 2.0 * alpha);
            let p1 = once.predict_probs(&query);
            let p2 = twice.predict_probs(&query);
            let oracle = brute_posterior(&doubled_data, 2.0 * alpha, &query);
            for c in 0..3 {
                prop_assert!((p1[c] - p2[c]).abs() < 1e-9);
                prop_assert!((p2[c] - oracle[c]).abs() < 1e-9);
            }
            prop_assert_eq!(once.predict("q", &query).label, twice.predict("q", &query).label);
        }

        #[test]
        fn deterministic(data in corpus(), query in prop::collection::vec(word(), 0..6)) {
            let query = query.join(" ");
            let a = train(&data, 1.0);
            let b = train(&data, 1.0);
            prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
            prop_assert_eq!(a.predict("q", &query), b.predict("q", &query));
        }
    }
}
