//! Token sequences, task datasets and the synthetic text generators used to
//! simulate pretraining and downstream tuning.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `z = [x; y]`. Loss is taken on the predictions of `y` only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenSequence {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

impl TokenSequence {
    pub fn new(x: Vec<usize>, y: Vec<usize>) -> Self {
        TokenSequence { x, y }
    }

    pub fn z(&self) -> Vec<usize> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.y);
        z
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, vocab: usize) -> Result<()> {
        if self.x.is_empty() || self.y.is_empty() {
            return Err(Error::Argument(
                "token sequence needs non-empty context x and continuation y".into(),
            ));
        }
        if let Some(&id) = self.x.iter().chain(&self.y).find(|&&id| id >= vocab) {
            return Err(Error::Index(format!("token id {id} >= vocab {vocab}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDataset {
    pub vocab: usize,
    pub examples: Vec<TokenSequence>,
}

impl TaskDataset {
    pub fn validate(&self) -> Result<()> {
        if self.examples.is_empty() {
            return Err(Error::Argument("task dataset has no examples".into()));
        }
        for (i, ex) in self.examples.iter().enumerate() {
            ex.validate(self.vocab)
                .map_err(|e| Error::Validation(format!("example {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ds: TaskDataset = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Label tokens for the topic task: topic A predicts `vocab - 1`, topic B `vocab - 2`.
pub fn topic_labels(vocab: usize) -> (usize, usize) {
    (vocab - 1, vocab - 2)
}

/// Topic-A and topic-B content token ranges: two disjoint blocks of `block` ids.
pub fn topic_ranges(vocab: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let block = ((vocab - 2) / 8).max(1);
    (0..block, block..2 * block)
}

/// Binary topic-majority task. Each context mixes topic-A and topic-B tokens
/// (odd length so there is always a strict majority); the continuation is the
/// majority topic's label token.
pub fn topic_task(vocab: usize, n_examples: usize, seq_len: usize, seed: u64) -> Result<TaskDataset> {
    if vocab < 6 {
        return Err(Error::Argument("topic task needs vocab >= 6".into()));
    }
    if seq_len == 0 || seq_len % 2 == 0 {
        return Err(Error::Argument(format!("topic task seq_len must be odd, got {seq_len}")));
    }
    let (ra, rb) = topic_ranges(vocab);
    let (la, lb) = topic_labels(vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n_examples);
    for i in 0..n_examples {
        let a_major = i % 2 == 0;
        // majority count in (seq_len/2, seq_len]
        let n_major = rng.random_range(seq_len / 2 + 1..=seq_len);
        let (rmaj, rmin) = if a_major { (&ra, &rb) } else { (&rb, &ra) };
        let mut x: Vec<usize> = (0..seq_len)
            .map(|j| {
                let r = if j < n_major { rmaj } else { rmin };
                rng.random_range(r.clone())
            })
            .collect();
        x.shuffle(&mut rng);
        examples.push(TokenSequence::new(x, vec![if a_major { la } else { lb }]));
    }
    Ok(TaskDataset { vocab, examples })
}

/// Sparse first-order Markov source over the non-label vocabulary: every token
/// has `fanout` successors with random weights.
#[derive(Debug, Clone)]
pub struct BigramSource {
    successors: Vec<Vec<(usize, f64)>>,
}

impl BigramSource {
    pub fn new(vocab: usize, fanout: usize, seed: u64) -> Self {
        let content = vocab - 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let successors = (0..content)
            .map(|_| {
                let mut next: Vec<(usize, f64)> = (0..fanout)
                    .map(|_| (rng.random_range(0..content), rng.random_range(0.1..1.0)))
                    .collect();
                let z: f64 = next.iter().map(|(_, w)| w).sum();
                for (_, w) in &mut next {
                    *w /= z;
                }
                next
            })
            .collect();
        BigramSource { successors }
    }

    pub fn sample(&self, len: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut cur = rng.random_range(0..self.successors.len());
        for _ in 0..len {
            out.push(cur);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let next = &self.successors[cur];
            cur = next.last().expect("fanout >= 1").0;
            for &(tok, w) in next {
                acc += w;
                if u < acc {
                    cur = tok;
                    break;
                }
            }
        }
        out
    }

    /// Language-modeling corpus: the first token is context, the rest continuation.
    pub fn corpus(&self, vocab: usize, n: usize, len: usize, seed: u64) -> TaskDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = (0..n)
            .map(|_| {
                let s = self.sample(len.max(2), &mut rng);
                TokenSequence::new(s[..1].to_vec(), s[1..].to_vec())
            })
            .collect();
        TaskDataset { vocab, examples }
    }
}

/// One stimulus sentence for embedding: token ids plus its timing in the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sentence {
    pub tokens: Vec<usize>,
    pub onset_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceSet {
    pub run_id: String,
    pub sentences: Vec<Sentence>,
}

impl SentenceSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Random topic-mixture sentences laid out back to back with gaps.
    pub fn synthetic(vocab: usize, n: usize, seed: u64) -> Self {
        let (ra, rb) = topic_ranges(vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0.0;
        let sentences = (0..n)
            .map(|_| {
                let len = rng.random_range(4..=10);
                let frac_a: f64 = rng.random();
                let tokens = (0..len)
                    .map(|_| {
                        if rng.random::<f64>() < frac_a {
                            rng.random_range(ra.clone())
                        } else if rng.random::<f64>() < 0.5 {
                            rng.random_range(rb.clone())
                        } else {
                            rng.random_range(2 * ra.end..vocab - 2)
                        }
                    })
                    .collect();
                let duration_s = rng.random_range(2.0..4.0);
                let s = Sentence {
                    tokens,
                    onset_s: t,
                    duration_s,
                };
                t += duration_s + rng.random_range(0.5..1.5);
                s
            })
            .collect();
        SentenceSet {
            run_id: "run-01".to_string(),
            sentences,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topic_task_labels_follow_majority() {
        let ds = topic_task(512, 50, 7, 3).unwrap();
        ds.validate().unwrap();
        let (ra, _) = topic_ranges(512);
        let (la, lb) = topic_labels(512);
        for ex in &ds.examples {
            let a = ex.x.iter().filter(|t| ra.contains(t)).count();
            assert_eq!(ex.y[0], if a * 2 > ex.x.len() { la } else { lb });
        }
        assert_eq!(ds, topic_task(512, 50, 7, 3).unwrap());
        assert!(topic_task(512, 5, 6, 0).is_err());
    }

    #[test]
    fn bigram_corpus_excludes_labels() {
        let src = BigramSource::new(40, 3, 1);
        let ds = src.corpus(40, 20, 12, 2);
        ds.validate().unwrap();
        assert!(ds.examples.iter().all(|e| e.z().iter().all(|&t| t < 38)));
    }

    #[test]
    fn sequence_validation() {
        assert!(TokenSequence::new(vec![], vec![1]).validate(5).is_err());
        assert!(TokenSequence::new(vec![1], vec![5]).validate(5).is_err());
        assert!(TokenSequence::new(vec![1], vec![4]).validate(5).is_ok());
    }
}
