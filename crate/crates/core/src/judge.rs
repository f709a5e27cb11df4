//! Reward-weighted accuracy on judge-scored generations.
//!
//! Each record is one generation for one question, with a judge reward and a
//! 0/1 correctness label. For a size-`k` subset of a question's generations,
//! the selected answer is correct with probability
//! `sum_i softmax(r / T)_i v_i`; the metric is the negated average of this
//! over questions and resampled subsets, so lower is better.
//!
//! Record files cannot produce fresh generations, so subsets are drawn
//! without replacement from the recorded ones.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gen_error::{ErrorEstimate, EstimatorMode};
use crate::rng::{stream, Purpose};
use crate::sampler::softmax_weights;
use crate::stats::mean_stderr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub question_id: String,
    pub sample_id: String,
    pub reward: f64,
    pub correct: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Question {
    pub id: String,
    /// Sorted by sample id.
    pub sample_ids: Vec<String>,
    pub rewards: Vec<f64>,
    pub correct: Vec<f64>,
}

impl Question {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct.iter().sum::<f64>() / self.len() as f64
    }
}

/// Records grouped by question, questions ordered by id.
#[derive(Clone, Debug, PartialEq)]
pub struct JudgeDataset {
    pub questions: Vec<Question>,
}

fn field_id(
    obj: &serde_json::Map<String, Value>,
    name: &str,
) -> std::result::Result<String, String> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) if n.is_i64() || n.is_u64() => Ok(n.to_string()),
        Some(other) => Err(format!("field `{name}` must be a string, got {other}")),
        None => Err(format!("missing field `{name}`")),
    }
}

fn parse_record(line: &str) -> std::result::Result<JudgeRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("record must be a JSON object")?;
    let question_id = field_id(obj, "question_id")?;
    let sample_id = field_id(obj, "sample_id")?;
    let reward = match obj.get("reward") {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| format!("field `reward` must be a number, got {v}"))?,
        None => return Err("missing field `reward`".into()),
    };
    if !reward.is_finite() {
        return Err("field `reward` must be finite".into());
    }
    let correct = match obj.get("correct") {
        Some(Value::Bool(b)) => u8::from(*b),
        Some(Value::Number(n)) if n.as_u64() == Some(0) || n.as_u64() == Some(1) => {
            n.as_u64().unwrap() as u8
        }
        Some(other) => return Err(format!("field `correct` must be 0 or 1, got {other}")),
        None => return Err("missing field `correct`".into()),
    };
    Ok(JudgeRecord {
        question_id,
        sample_id,
        reward,
        correct,
    })
}

impl JudgeDataset {
    /// Parses newline-delimited JSON records; blank lines are skipped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec = parse_record(&line).map_err(|message| Error::Record {
                line: lineno,
                message,
            })?;
            if !seen.insert((rec.question_id.clone(), rec.sample_id.clone())) {
                return Err(Error::Record {
                    line: lineno,
                    message: format!(
                        "duplicate record for question `{}`, sample `{}`",
                        rec.question_id, rec.sample_id
                    ),
                });
            }
            records.push(rec);
        }
        JudgeDataset::from_records(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        JudgeDataset::from_reader(BufReader::new(file))
    }

    pub fn from_records(records: Vec<JudgeRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::NoRecords);
        }
        let mut grouped: BTreeMap<String, Vec<JudgeRecord>> = BTreeMap::new();
        for r in records {
            grouped.entry(r.question_id.clone()).or_default().push(r);
        }
        let questions = grouped
            .into_iter()
            .map(|(id, mut recs)| {
                recs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
                Question {
                    id,
                    sample_ids: recs.iter().map(|r| r.sample_id.clone()).collect(),
                    rewards: recs.iter().map(|r| r.reward).collect(),
                    correct: recs.iter().map(|r| f64::from(r.correct)).collect(),
                }
            })
            .collect();
        Ok(JudgeDataset { questions })
    }

    pub fn counts(&self) -> Vec<usize> {
        self.questions.iter().map(Question::len).collect()
    }

    pub fn reward_range(&self) -> f64 {
        let (lo, hi) = self
            .questions
            .iter()
            .flat_map(|q| q.rewards.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            });
        hi - lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JudgeEstimate {
    pub estimate: ErrorEstimate,
    pub n_questions_used: usize,
    pub n_questions_excluded: usize,
}

/// Probability that the selected answer of one subset is correct.
fn subset_value(q: &Question, subset: &[usize], temperature: f64) -> Result<f64> {
    let rewards: Vec<f64> = subset.iter().map(|&i| q.rewards[i]).collect();
    let w = softmax_weights(&rewards, temperature)?;
    Ok(subset.iter().zip(&w).map(|(&i, w)| w * q.correct[i]).sum())
}

/// Negated reward-weighted accuracy over size-`k` subsets.
///
/// Questions with fewer than `k` samples are excluded. Subsets of each
/// question come from that question's own stream, so every `(k, T)` cell of
/// a sweep sees the same resampling randomness.
pub fn judge_delta(
    ds: &JudgeDataset,
    k: usize,
    temperature: f64,
    n_resample: usize,
    seed: u64,
) -> Result<JudgeEstimate> {
    if k == 0 || n_resample == 0 {
        return Err(Error::config("k and n_resample must be >= 1"));
    }
    if !(temperature >= 0.0) {
        return Err(Error::config(format!(
            "temperature must be >= 0, got {temperature}"
        )));
    }
    let used: Vec<(usize, &Question)> = ds
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| q.len() >= k)
        .collect();
    if used.is_empty() {
        return Err(Error::NotEnoughSamples { k });
    }
    let per_question: Vec<f64> = used
        .par_iter()
        .map(|&(qi, q)| -> Result<f64> {
            let mut rng = stream(seed, Purpose::Judge, qi as u64);
            let mut acc = 0.0;
            for _ in 0..n_resample {
                let mut subset = if k == q.len() {
                    (0..k).collect::<Vec<_>>()
                } else {
                    index::sample(&mut rng, q.len(), k).into_vec()
                };
                // Ascending order makes argmax ties fall to the lowest sample id.
                subset.sort_unstable();
                acc += subset_value(q, &subset, temperature)?;
            }
            Ok(-acc / n_resample as f64)
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = mean_stderr(&per_question);
    Ok(JudgeEstimate {
        estimate: ErrorEstimate {
            mean,
            stderr,
            n_outer: per_question.len(),
            n_inner: n_resample,
            mode: EstimatorMode::Judge,
        },
        n_questions_used: used.len(),
        n_questions_excluded: ds.questions.len() - used.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JudgeRow {
    pub k: usize,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub delta: f64,
    pub stderr: f64,
    pub n_questions_used: usize,
    pub n_resample: usize,
    pub seed: u64,
}

/// `judge_delta` over a `k x T` grid, `k` outer.
pub fn judge_sweep(
    ds: &JudgeDataset,
    ks: &[usize],
    temperatures: &[f64],
    n_resample: usize,
    seed: u64,
) -> Result<Vec<JudgeRow>> {
    let mut rows = Vec::with_capacity(ks.len() * temperatures.len());
    for &k in ks {
        for &t in temperatures {
            let est = judge_delta(ds, k, t, n_resample, seed)?;
            rows.push(JudgeRow {
                k,
                temperature: t,
                delta: est.estimate.mean,
                stderr: est.estimate.stderr,
                n_questions_used: est.n_questions_used,
                n_resample,
                seed,
            });
        }
    }
    Ok(rows)
}

/// Synthetic judge whose reward tracks a latent score `q ~ N(0, 1)` while an
/// answer is correct only for `0 < q < threshold`: rewards are informative up
/// to the threshold and anti-correlated with correctness beyond it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticJudge {
    pub threshold: f64,
    pub reward_noise: f64,
}

impl Default for SyntheticJudge {
    fn default() -> Self {
        SyntheticJudge {
            threshold: 1.0,
            reward_noise: 0.3,
        }
    }
}

impl SyntheticJudge {
    pub fn records(
        &self,
        n_questions: usize,
        n_samples: usize,
        seed: u64,
    ) -> Result<Vec<JudgeRecord>> {
        let noise = Normal::new(0.0, self.reward_noise)
            .map_err(|e| Error::config(format!("reward noise: {e}")))?;
        let mut out = Vec::with_capacity(n_questions * n_samples);
        for qi in 0..n_questions {
            let mut rng = stream(seed, Purpose::SyntheticJudge, qi as u64);
            for si in 0..n_samples {
                let latent: f64 = StandardNormal.sample(&mut rng);
                let reward = latent + noise.sample(&mut rng);
                out.push(JudgeRecord {
                    question_id: format!("q{qi:05}"),
                    sample_id: format!("s{si:05}"),
                    reward,
                    correct: u8::from(latent > 0.0 && latent < self.threshold),
                });
            }
        }
        Ok(out)
    }

    pub fn dataset(&self, n_questions: usize, n_samples: usize, seed: u64) -> Result<JudgeDataset> {
        JudgeDataset::from_records(self.records(n_questions, n_samples, seed)?)
    }
}
