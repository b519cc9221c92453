//! Sharded streaming n-gram counting.
//!
//! The file is split into byte ranges at line boundaries; each worker owns
//! the lines that *start* inside its range and builds a private table. Local
//! tables are merged in worker-index order, so results are identical for any
//! thread count (and to a sequential pass): addition is commutative and u64
//! saturation is associative.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use crate::normalize::normalize_caption;
use crate::CorpusError;

#[derive(Debug, Default, Clone)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    pub total_tokens: u64,
    pub total_captions: u64,
    pub saturated: bool,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn add(&mut self, key: &str, n: u64) {
        let slot = self.counts.entry(key.to_string()).or_insert(0);
        let (sum, over) = slot.overflowing_add(n);
        if over {
            *slot = u64::MAX;
            if !self.saturated {
                log::warn!("n-gram count saturated at u64::MAX (first key: {key})");
            }
            self.saturated = true;
        } else {
            *slot = sum;
        }
    }

    /// Install exact-phrase counts from a second streaming pass (keys are
    /// ≥3-token phrases, disjoint from the 1/2-gram key space).
    pub fn insert_phrase_counts(&mut self, phrases: HashMap<String, u64>) {
        for (k, v) in phrases {
            self.counts.insert(k, v);
        }
    }

    pub fn merge_into(&mut self, other: FrequencyTable) {
        for (k, v) in other.counts {
            self.add(&k, v);
        }
        self.total_tokens = self.total_tokens.saturating_add(other.total_tokens);
        self.total_captions = self.total_captions.saturating_add(other.total_captions);
        self.saturated |= other.saturated;
    }

    /// Deterministic export order: count descending, ties lexicographic.
    pub fn sorted_entries(&self) -> Vec<(&str, u64)> {
        let mut rows: Vec<(&str, u64)> = self
            .counts
            .iter()
            .map(|(k, &v)| (k.as_str(), v))
            .collect();
        rows.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rows
    }

    pub fn export_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.sorted_entries() {
            out.push_str(k);
            out.push('\t');
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.export_tsv())
    }
}

struct ShardOut<T> {
    idx: usize,
    out: T,
}

/// Run `make_fold` per shard over the caption stream, merging shard outputs
/// in index order.
fn sharded<T, MF, F>(
    path: &Path,
    threads: usize,
    make_fold: MF,
) -> Result<Vec<T>, CorpusError>
where
    T: Send,
    MF: Fn() -> F + Sync,
    F: FnMut(&[String], &mut T),
    T: Default,
{
    if threads == 0 {
        return Err(CorpusError::NoThreads);
    }
    let len = std::fs::metadata(path)
        .map_err(|e| io_err(path, 0, e))?
        .len();
    let bounds: Vec<u64> = (0..=threads as u64)
        .map(|i| len * i / threads as u64)
        .collect();

    let results: Vec<Result<ShardOut<T>, CorpusError>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for i in 0..threads {
            let (start, end) = (bounds[i], bounds[i + 1]);
            let make_fold = &make_fold;
            handles.push(scope.spawn(move || {
                let mut acc = T::default();
                let mut fold = make_fold();
                process_range(path, start, end, |tokens| fold(tokens, &mut acc))?;
                Ok(ShardOut { idx: i, out: acc })
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("shard worker panicked"))
            .collect()
    });

    let mut shards: Vec<ShardOut<T>> = results.into_iter().collect::<Result<_, _>>()?;
    shards.sort_by_key(|s| s.idx);
    Ok(shards.into_iter().map(|s| s.out).collect())
}

/// Unigram (+ bigram when `n_max == 2`) counts over a line-delimited caption
/// file. Thread-count independent by construction.
pub fn count_ngrams(
    path: &Path,
    threads: usize,
    n_max: usize,
) -> Result<FrequencyTable, CorpusError> {
    if !(1..=2).contains(&n_max) {
        return Err(CorpusError::BadOrder(n_max));
    }
    let shards = sharded(path, threads, || {
        move |tokens: &[String], table: &mut FrequencyTable| {
            table.total_captions += 1;
            table.total_tokens += tokens.len() as u64;
            for t in tokens {
                table.add(t, 1);
            }
            if n_max >= 2 && tokens.len() >= 2 {
                for pair in tokens.windows(2) {
                    let key = format!("{} {}", pair[0], pair[1]);
                    table.add(&key, 1);
                }
            }
        }
    })?;
    let mut merged = FrequencyTable::new();
    for shard in shards {
        merged.merge_into(shard);
    }
    Ok(merged)
}

/// Exact-phrase occurrence counts (token-window matches, overlaps allowed)
/// for class names longer than two tokens. Keys in the result are the
/// normalized space-joined phrases.
pub fn count_phrases(
    path: &Path,
    phrases: &[String],
    threads: usize,
) -> Result<HashMap<String, u64>, CorpusError> {
    let mut needles: Vec<Vec<String>> = phrases
        .iter()
        .map(|p| normalize_caption(p))
        .filter(|t| !t.is_empty())
        .collect();
    needles.sort_unstable();
    needles.dedup();
    let shards = sharded(path, threads, || {
        let needles = needles.clone();
        move |tokens: &[String], acc: &mut HashMap<String, u64>| {
            for needle in &needles {
                if tokens.len() < needle.len() {
                    continue;
                }
                let hits = tokens
                    .windows(needle.len())
                    .filter(|w| w.iter().zip(needle).all(|(a, b)| a == b))
                    .count() as u64;
                if hits > 0 {
                    let key = needle.join(" ");
                    *acc.entry(key).or_insert(0) += hits;
                }
            }
        }
    })?;
    let mut merged: HashMap<String, u64> = HashMap::new();
    for shard in shards {
        for (k, v) in shard {
            let slot = merged.entry(k).or_insert(0);
            *slot = slot.saturating_add(v);
        }
    }
    // absent phrases are reported as 0 so callers see every queried key
    for needle in needles {
        merged.entry(needle.join(" ")).or_insert(0);
    }
    Ok(merged)
}

fn io_err(path: &Path, offset: u64, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        offset,
        source,
    }
}

/// Stream the lines *starting* in [start, end), tokenised, through `f`.
fn process_range(
    path: &Path,
    start: u64,
    end: u64,
    mut f: impl FnMut(&[String]),
) -> Result<(), CorpusError> {
    if start >= end {
        return Ok(());
    }
    let file = File::open(path).map_err(|e| io_err(path, start, e))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let mut pos = start;

    if start > 0 {
        // a line straddling the boundary belongs to the previous shard;
        // detect whether `start` is already at a line start
        reader
            .seek(SeekFrom::Start(start - 1))
            .map_err(|e| io_err(path, start, e))?;
        let mut prev = [0u8; 1];
        reader
            .read_exact(&mut prev)
            .map_err(|e| io_err(path, start - 1, e))?;
        if prev[0] != b'\n' {
            let mut skipped = Vec::new();
            let n = reader
                .read_until(b'\n', &mut skipped)
                .map_err(|e| io_err(path, pos, e))?;
            pos += n as u64;
        }
    }

    let mut buf: Vec<u8> = Vec::with_capacity(256);
    let mut invalid_utf8: u64 = 0;
    while pos < end {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| io_err(path, pos, e))?;
        if n == 0 {
            break; // EOF
        }
        pos += n as u64;
        let mut line = &buf[..];
        if line.last() == Some(&b'\n') {
            line = &line[..line.len() - 1];
        }
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        let text = String::from_utf8_lossy(line);
        if matches!(text, Cow::Owned(_)) {
            invalid_utf8 += 1;
        }
        let tokens = normalize_caption(&text);
        f(&tokens);
    }
    if invalid_utf8 > 0 {
        log::warn!(
            "{}: replaced invalid UTF-8 bytes on {invalid_utf8} line(s)",
            path.display()
        );
    }
    Ok(())
}
