//! Counting contracts: hand examples, shard/merge determinism, and a
//! 1M-line comparison against an independent single-threaded oracle.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use corpus::fixture::write_fixture_corpus;
use corpus::{count_ngrams, count_phrases, CorpusError};

fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    path
}

/// Deliberately separate implementation: whole-file read, stdlib line
/// iterator, its own tokenizer, BTreeMap accumulation.
fn oracle_counts(path: &Path, n_max: usize) -> (BTreeMap<String, u64>, u64, u64) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let (mut tokens_total, mut captions) = (0u64, 0u64);
    for line in text.lines() {
        let toks: Vec<String> = line
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        captions += 1;
        tokens_total += toks.len() as u64;
        for t in &toks {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        if n_max >= 2 {
            for w in toks.windows(2) {
                *counts.entry(format!("{} {}", w[0], w[1])).or_insert(0) += 1;
            }
        }
    }
    (counts, tokens_total, captions)
}

#[test]
fn single_caption_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lines(dir.path(), "c.txt", &["a pay phone"]);
    let t = count_ngrams(&path, 1, 2).unwrap();
    for (key, want) in [
        ("a", 1),
        ("pay", 1),
        ("phone", 1),
        ("a pay", 1),
        ("pay phone", 1),
    ] {
        assert_eq!(t.get(key), want, "count of {key:?}");
    }
    assert_eq!(t.get("a phone"), 0);
    assert_eq!(t.total_tokens, 3);
    assert_eq!(t.total_captions, 1);
    assert_eq!(t.len(), 5);
}

#[test]
fn unigram_only_pass_skips_bigrams() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lines(dir.path(), "c.txt", &["a pay phone"]);
    let t = count_ngrams(&path, 1, 1).unwrap();
    assert_eq!(t.get("pay"), 1);
    assert_eq!(t.get("pay phone"), 0);
    assert_eq!(t.len(), 3);
}

#[test]
fn sharded_equals_sequential_on_small_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lines(
        dir.path(),
        "c.txt",
        &[
            "The quick brown fox",
            "jumps, over the lazy dog!",
            "",
            "Pay-Phone #3 über café",
            "the the the",
            "x",
        ],
    );
    let seq = count_ngrams(&path, 1, 2).unwrap().export_tsv();
    for threads in [2, 3, 8, 17] {
        let par = count_ngrams(&path, threads, 2).unwrap().export_tsv();
        assert_eq!(par, seq, "threads={threads}");
    }
}

#[test]
fn million_line_fixture_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.txt");
    write_fixture_corpus(&path, 1_000_000, 7).unwrap();

    let (oracle, oracle_tokens, oracle_captions) = oracle_counts(&path, 2);
    // invariants from the oracle pass
    let uni_sum: u64 = oracle
        .iter()
        .filter(|(k, _)| !k.contains(' '))
        .map(|(_, v)| v)
        .sum();
    assert_eq!(uni_sum, oracle_tokens, "Σ unigrams = total tokens");

    for threads in [1, 2, 8] {
        let t = count_ngrams(&path, threads, 2).unwrap();
        assert_eq!(t.total_tokens, oracle_tokens, "threads={threads}");
        assert_eq!(t.total_captions, oracle_captions, "threads={threads}");
        assert_eq!(t.len(), oracle.len(), "threads={threads}");
        for (k, &v) in &oracle {
            assert_eq!(t.get(k), v, "key {k:?}, threads={threads}");
        }
    }
}

#[test]
fn bigram_sum_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.txt");
    write_fixture_corpus(&path, 20_000, 11).unwrap();
    let t = count_ngrams(&path, 4, 2).unwrap();

    let (oracle, _, _) = oracle_counts(&path, 2);
    let bigram_sum: u64 = oracle
        .iter()
        .filter(|(k, _)| k.contains(' '))
        .map(|(_, v)| v)
        .sum();
    // Σ bigrams = Σ max(0, tokens_per_caption − 1), accumulated line by line
    let text = std::fs::read_to_string(&path).unwrap();
    let expect: u64 = text
        .lines()
        .map(|l| {
            let n = l
                .to_lowercase()
                .split(|c: char| !c.is_alphanumeric())
                .filter(|s| !s.is_empty())
                .count() as u64;
            n.saturating_sub(1)
        })
        .sum();
    assert_eq!(bigram_sum, expect);
    let mine: u64 = t
        .sorted_entries()
        .iter()
        .filter(|(k, _)| k.contains(' '))
        .map(|(_, v)| v)
        .sum();
    assert_eq!(mine, expect);
}

#[test]
fn io_error_carries_byte_offset() {
    let missing = Path::new("/nonexistent/captions.txt");
    let err = count_ngrams(missing, 2, 2).unwrap_err();
    match &err {
        CorpusError::Io { path, .. } => assert!(path.contains("captions")),
        other => panic!("expected Io error, got {other:?}"),
    }
    assert!(err.to_string().contains("byte"), "message: {err}");
}

#[test]
fn rejects_bad_order_and_zero_threads() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lines(dir.path(), "c.txt", &["x"]);
    assert!(matches!(
        count_ngrams(&path, 1, 3),
        Err(CorpusError::BadOrder(3))
    ));
    assert!(matches!(
        count_ngrams(&path, 0, 2),
        Err(CorpusError::NoThreads)
    ));
}

#[test]
fn invalid_utf8_replaced_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    let mut bytes = b"good line\n".to_vec();
    bytes.extend_from_slice(b"bad \xFF\xFE byte\n");
    bytes.extend_from_slice(b"tail line\n");
    std::fs::write(&path, bytes).unwrap();
    let t = count_ngrams(&path, 2, 2).unwrap();
    assert_eq!(t.total_captions, 3);
    assert_eq!(t.get("bad"), 1);
    assert_eq!(t.get("byte"), 1);
}

#[test]
fn crlf_lines_tolerated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, b"a pay phone\r\npay phone\r\n").unwrap();
    let t = count_ngrams(&path, 2, 2).unwrap();
    assert_eq!(t.get("pay phone"), 2);
    assert_eq!(t.total_captions, 2);
}

#[test]
fn phrase_pass_counts_multiword_classes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lines(
        dir.path(),
        "c.txt",
        &[
            "an old rotary pay phone booth",
            "Old Rotary Pay-Phone on the wall",
            "nothing relevant here",
        ],
    );
    let phrases = vec![
        "old rotary pay phone".to_string(),
        "missing entirely".to_string(),
    ];
    for threads in [1, 2, 5] {
        let got = count_phrases(&path, &phrases, threads).unwrap();
        assert_eq!(got["old rotary pay phone"], 2, "threads={threads}");
        assert_eq!(got["missing entirely"], 0, "threads={threads}");
    }
}

#[test]
fn phrase_counts_absorb_into_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lines(dir.path(), "c.txt", &["one two three four"]);
    let mut t = count_ngrams(&path, 1, 2).unwrap();
    let extra = count_phrases(&path, &["one two three".into()], 1).unwrap();
    t.insert_phrase_counts(extra);
    assert_eq!(t.get("one two three"), 1);
    assert_eq!(t.get("one two"), 1); // bigram pass untouched
}

#[test]
fn export_order_count_desc_then_lex() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_lines(dir.path(), "c.txt", &["b a b c a b"]);
    let t = count_ngrams(&path, 1, 1).unwrap();
    let rows = t.export_tsv();
    assert_eq!(rows, "b\t3\na\t2\nc\t1\n");
}
