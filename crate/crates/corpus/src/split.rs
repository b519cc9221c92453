//! Frequency-band assignment: rank classes and bucket them by corpus count.

use std::collections::HashMap;
use std::fmt;

use crate::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Many,
    Med,
    Few,
}

impl Band {
    /// `Many` iff count > hi, `Few` iff count < lo, `Med` otherwise — both
    /// comparisons strict, so a count equal to a threshold lands in `Med`.
    pub fn of(count: u64, hi: u64, lo: u64) -> Self {
        if count > hi {
            Band::Many
        } else if count < lo {
            Band::Few
        } else {
            Band::Med
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Many => "Many",
            Band::Med => "Med",
            Band::Few => "Few",
        })
    }
}

pub const DEFAULT_HI: u64 = 1_000_000;
pub const DEFAULT_LO: u64 = 10_000;

/// A class with its corpus count and frequency band, in rank order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedClass {
    pub class: String,
    pub count: u64,
    pub band: Band,
}

/// Rank classes by count descending (ties lexicographic) and assign bands:
/// `Many` iff count > hi, `Few` iff count < lo, `Med` otherwise — both
/// comparisons strict, so a count equal to a threshold lands in `Med`.
pub fn rank_and_split(
    class_counts: &HashMap<String, u64>,
    hi: u64,
    lo: u64,
) -> Result<Vec<RankedClass>, CorpusError> {
    if hi <= lo || lo == 0 {
        return Err(CorpusError::BadThresholds { hi, lo });
    }
    let mut ranked: Vec<RankedClass> = class_counts
        .iter()
        .map(|(class, &count)| RankedClass {
            class: class.clone(),
            count,
            band: Band::of(count, hi, lo),
        })
        .collect();
    ranked.sort_unstable_by(|a, b| b.count.cmp(&a.count).then_with(|| a.class.cmp(&b.class)));
    Ok(ranked)
}

/// TSV export: `class<TAB>count<TAB>band`, one row per class in rank order.
pub fn split_tsv(ranked: &[RankedClass]) -> String {
    let mut out = String::new();
    for r in ranked {
        out.push_str(&format!("{}\t{}\t{}\n", r.class, r.count, r.band));
    }
    out
}
