//! Offline evaluation: topics, graded judgments, TREC-style runs, and
//! rank metrics (AP, NDCG, ERR) with cutoffs.
//!
//! Judgments are graded 0..=3. Mean metrics average over queries that
//! have at least one relevant table (grade ≥ 1); a query missing from a
//! run scores zero on all metrics but still counts toward the mean.

use std::collections::BTreeMap;

use quick_xml::events::Event;
use quick_xml::Reader;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::ranker::Ranked;
use crate::{Error, Result};

/// Highest judgment grade; fixes the ERR gain normalizer at 2³.
pub const MAX_GRADE: u8 = 3;

/// One search topic: a keyword title plus an optional statement of intent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub num: String,
    pub title: String,
    pub intent: Option<String>,
}

/// Parse TREC-style topics: a sequence of `<top>` elements, each holding
/// `<num>`, `<title>`, and optionally `<intent>`. No root element needed.
pub fn parse_topics(xml: &[u8]) -> Result<Vec<Topic>> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut topics = Vec::new();
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut num = String::new();
    let mut title = String::new();
    let mut intent = String::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if name == "top" {
                    num.clear();
                    title.clear();
                    intent.clear();
                }
                path.push(name);
            }
            Ok(Event::Text(t)) => {
                let text = t.unescape().map_err(|e| Error::Xml {
                    offset: reader.buffer_position(),
                    message: e.to_string(),
                })?;
                match path.last().map(String::as_str) {
                    Some("num") => num.push_str(&text),
                    Some("title") => title.push_str(&text),
                    Some("intent") => intent.push_str(&text),
                    _ => {}
                }
            }
            Ok(Event::End(e)) => {
                path.pop();
                if e.name().as_ref() == b"top" {
                    if num.trim().is_empty() || title.trim().is_empty() {
                        return Err(Error::format(
                            "topics file",
                            "a <top> element needs a <num> and a <title>",
                        ));
                    }
                    topics.push(Topic {
                        num: num.trim().to_string(),
                        title: title.trim().to_string(),
                        intent: if intent.trim().is_empty() {
                            None
                        } else {
                            Some(intent.trim().to_string())
                        },
                    });
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => {
                return Err(Error::Xml {
                    offset: reader.buffer_position(),
                    message: e.to_string(),
                })
            }
        }
        buf.clear();
    }
    Ok(topics)
}

/// Graded relevance judgments: query → table → grade.
#[derive(Debug, Clone, Default)]
pub struct Judgments {
    by_query: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Judgments {
    /// Parse qrels lines `qid 0 table_id grade`, whitespace separated.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Judgments> {
        let mut by_query: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::format(
                    "qrels",
                    format!(
                        "line {}: expected 4 columns, got {}",
                        lineno + 1,
                        parts.len()
                    ),
                ));
            }
            let grade: u8 = parts[3].parse().map_err(|_| {
                Error::format(
                    "qrels",
                    format!("line {}: bad grade {:?}", lineno + 1, parts[3]),
                )
            })?;
            if grade > MAX_GRADE {
                return Err(Error::format(
                    "qrels",
                    format!("line {}: grade {} exceeds {}", lineno + 1, grade, MAX_GRADE),
                ));
            }
            by_query
                .entry(parts[0].to_string())
                .or_default()
                .insert(parts[2].to_string(), grade);
        }
        Ok(Judgments { by_query })
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn grade(&self, qid: &str, table_id: &str) -> u8 {
        self.by_query
            .get(qid)
            .and_then(|m| m.get(table_id))
            .copied()
            .unwrap_or(0)
    }

    /// Number of relevant (grade ≥ 1) tables for a query.
    pub fn relevant_count(&self, qid: &str) -> usize {
        self.by_query
            .get(qid)
            .map(|m| m.values().filter(|&&g| g >= 1).count())
            .unwrap_or(0)
    }

    /// All judged grades for a query, descending — the ideal ranking.
    pub fn ideal_grades(&self, qid: &str) -> Vec<u8> {
        let mut grades: Vec<u8> = self
            .by_query
            .get(qid)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default();
        grades.sort_unstable_by(|a, b| b.cmp(a));
        grades
    }

    /// Grades of a ranked list, in rank order.
    pub fn grades_of(&self, qid: &str, ranked: &[Ranked]) -> Vec<u8> {
        ranked
            .iter()
            .map(|r| self.grade(qid, &r.table_id))
            .collect()
    }
}

/// Average precision over the top `cutoff`, binarizing grades at ≥ 1.
/// The denominator is min(relevant, cutoff). None when nothing is
/// relevant for the query.
pub fn ap_at(grades: &[u8], relevant: usize, cutoff: usize) -> Option<f64> {
    if relevant == 0 {
        return None;
    }
    let mut hits = 0u32;
    let mut sum = 0.0;
    for (i, &g) in grades.iter().take(cutoff).enumerate() {
        if g >= 1 {
            hits += 1;
            sum += f64::from(hits) / (i as f64 + 1.0);
        }
    }
    Some(sum / relevant.min(cutoff) as f64)
}

/// NDCG over the top `cutoff` with gains 2^g − 1 and discount
/// 1/log₂(rank + 1). None when the ideal gain is zero.
pub fn ndcg_at(grades: &[u8], ideal: &[u8], cutoff: usize) -> Option<f64> {
    let dcg = |gs: &[u8]| -> f64 {
        gs.iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, &g)| (2f64.powi(i32::from(g)) - 1.0) / (i as f64 + 2.0).log2())
            .sum()
    };
    let ideal_dcg = dcg(ideal);
    if ideal_dcg <= 0.0 {
        return None;
    }
    Some(dcg(grades) / ideal_dcg)
}

/// Expected reciprocal rank over the top `cutoff`, with stopping
/// probability R(g) = (2^g − 1)/2^[`MAX_GRADE`].
pub fn err_at(grades: &[u8], cutoff: usize) -> f64 {
    let norm = 2f64.powi(i32::from(MAX_GRADE));
    let mut err = 0.0;
    let mut continue_p = 1.0;
    for (i, &g) in grades.iter().take(cutoff).enumerate() {
        let stop = (2f64.powi(i32::from(g)) - 1.0) / norm;
        err += continue_p * stop / (i as f64 + 1.0);
        continue_p *= 1.0 - stop;
    }
    err
}

/// Metric cutoffs used across the tooling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Cutoffs {
    pub ap: usize,
    pub ndcg: usize,
    pub err: usize,
}

impl Default for Cutoffs {
    fn default() -> Cutoffs {
        Cutoffs {
            ap: 100,
            ndcg: 20,
            err: 20,
        }
    }
}

/// Per-query metric values for one run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QueryEval {
    pub ap: f64,
    pub ndcg: f64,
    pub err: f64,
}

/// Run-level evaluation: per-query rows plus their means.
#[derive(Debug, Clone, Serialize)]
pub struct RunEval {
    pub per_query: BTreeMap<String, QueryEval>,
    pub map: f64,
    pub mean_ndcg: f64,
    pub mean_err: f64,
}

/// Evaluate ranked lists per query. Queries without relevant tables are
/// dropped; judged queries missing from the run count as zeros.
pub fn evaluate_run(
    judgments: &Judgments,
    run: &BTreeMap<String, Vec<Ranked>>,
    cutoffs: Cutoffs,
) -> RunEval {
    let empty: Vec<Ranked> = Vec::new();
    let mut per_query = BTreeMap::new();
    for qid in judgments.queries() {
        let relevant = judgments.relevant_count(qid);
        if relevant == 0 {
            continue;
        }
        let ranked = run.get(qid).unwrap_or(&empty);
        let grades = judgments.grades_of(qid, ranked);
        let ideal = judgments.ideal_grades(qid);
        per_query.insert(
            qid.to_string(),
            QueryEval {
                ap: ap_at(&grades, relevant, cutoffs.ap).unwrap_or(0.0),
                ndcg: ndcg_at(&grades, &ideal, cutoffs.ndcg).unwrap_or(0.0),
                err: err_at(&grades, cutoffs.err),
            },
        );
    }
    let n = per_query.len().max(1) as f64;
    RunEval {
        map: per_query.values().map(|q| q.ap).sum::<f64>() / n,
        mean_ndcg: per_query.values().map(|q| q.ndcg).sum::<f64>() / n,
        mean_err: per_query.values().map(|q| q.err).sum::<f64>() / n,
        per_query,
    }
}

/// Write one query's ranking as TREC run lines:
/// `qid Q0 table_id rank score tag`.
pub fn write_run_lines(
    out: &mut impl std::io::Write,
    qid: &str,
    ranked: &[Ranked],
    tag: &str,
) -> Result<()> {
    for (i, r) in ranked.iter().enumerate() {
        writeln!(
            out,
            "{} Q0 {} {} {:.6} {}",
            qid,
            r.table_id,
            i + 1,
            r.score,
            tag
        )?;
    }
    Ok(())
}

/// Read a TREC run file back into per-query rankings, in file order.
pub fn read_run(text: &str) -> Result<BTreeMap<String, Vec<Ranked>>> {
    let mut run: BTreeMap<String, Vec<Ranked>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(Error::format(
                "run file",
                format!(
                    "line {}: expected 6 columns, got {}",
                    lineno + 1,
                    parts.len()
                ),
            ));
        }
        let score: f64 = parts[4].parse().map_err(|_| {
            Error::format(
                "run file",
                format!("line {}: bad score {:?}", lineno + 1, parts[4]),
            )
        })?;
        run.entry(parts[0].to_string()).or_default().push(Ranked {
            table_id: parts[2].to_string(),
            score,
        });
    }
    Ok(run)
}

/// Compare per-query scores rounded to 4 decimals: (wins, ties, losses)
/// for `a` against `b` over the queries present in both.
pub fn win_tie_loss(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> (usize, usize, usize) {
    let round4 = |x: f64| (x * 1e4).round();
    let (mut w, mut t, mut l) = (0, 0, 0);
    for (qid, &va) in a {
        let Some(&vb) = b.get(qid) else { continue };
        let (ra, rb) = (round4(va), round4(vb));
        if ra > rb {
            w += 1;
        } else if ra < rb {
            l += 1;
        } else {
            t += 1;
        }
    }
    (w, t, l)
}

/// Kendall rank correlation between two orderings of the same items.
/// None when the item sets differ or fewer than two items are given.
pub fn kendall_tau(a: &[String], b: &[String]) -> Option<f64> {
    if a.len() < 2 || a.len() != b.len() {
        return None;
    }
    let pos_b: BTreeMap<&str, usize> = b.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if pos_b.len() != b.len() {
        return None; // duplicates
    }
    let ranks: Option<Vec<usize>> = a.iter().map(|s| pos_b.get(s.as_str()).copied()).collect();
    let ranks = ranks?;
    if ranks.len() != pos_b.len() {
        return None;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..ranks.len() {
        for j in i + 1..ranks.len() {
            if ranks[i] < ranks[j] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let pairs = (ranks.len() * (ranks.len() - 1) / 2) as f64;
    Some((concordant - discordant) as f64 / pairs)
}

/// Deterministic k-fold split: queries are sorted, shuffled with the
/// seed, then cut into contiguous folds whose sizes differ by at most 1.
pub fn make_folds(qids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k == 0 || qids.is_empty() {
        return Err(Error::format(
            "cross validation",
            "need at least one fold and one query",
        ));
    }
    let mut sorted: Vec<String> = qids.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let k = k.min(sorted.len());
    let base = sorted.len() / k;
    let extra = sorted.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut it = sorted.into_iter();
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(it.by_ref().take(size).collect());
    }
    Ok(folds)
}

/// Persisted cross-validation split, so every sweep sees the same folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldFile {
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

/// Two-sided paired t-test. Returns (t, p); None when fewer than two
/// pairs are given or all differences are identical.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return None;
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).ok()?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Some((t, p))
}
