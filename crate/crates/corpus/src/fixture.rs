//! Deterministic synthetic caption corpora for tests and benchmarks.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COMMON: &[&str] = &[
    "a", "the", "of", "in", "on", "with", "and", "photo", "image", "picture",
    "view", "close", "up", "man", "woman", "dog", "cat", "street", "city",
    "old", "new", "red", "blue", "green", "small", "large", "vintage", "art",
    "sky", "water", "tree", "house", "car", "table", "light", "dark", "night",
    "day", "two", "three", "portrait", "landscape", "background", "white",
    "black", "wooden", "glass", "stone", "wall", "door", "window", "field",
];

const RARE: &[&str] = &[
    "pay", "phone", "telephone", "axolotl", "gyroscope", "tuatara",
    "astrolabe", "quokka", "marimba", "sextant", "pangolin", "theremin",
    "zeppelin", "obelisk", "samovar", "ocarina",
];

const ODD_LINES: &[&str] = &[
    "Café au lait, s'il vous plaît!",
    "Straße // ÜMLAUT test #42",
    "",
    "ÇAĞRI -- İstanbul",
    "naïve   déjà-vu",
];

fn push_word(rng: &mut ChaCha8Rng, line: &mut String) {
    if !line.is_empty() {
        line.push(' ');
    }
    // cubed uniform skews mass toward low indices: a crude zipf stand-in
    let u: f64 = rng.gen::<f64>();
    let idx = ((u * u * u) * COMMON.len() as f64) as usize;
    let word = if rng.gen::<f64>() < 0.02 {
        RARE[rng.gen_range(0..RARE.len())]
    } else {
        COMMON[idx.min(COMMON.len() - 1)]
    };
    line.push_str(word);
    if rng.gen::<f64>() < 0.05 {
        line.push_str(match rng.gen_range(0..4) {
            0 => ",",
            1 => "!",
            2 => "-",
            _ => "'s",
        });
    }
}

fn gen_line(rng: &mut ChaCha8Rng) -> String {
    if rng.gen::<f64>() < 0.01 {
        return ODD_LINES[rng.gen_range(0..ODD_LINES.len())].to_string();
    }
    let words = rng.gen_range(3..=12);
    let mut line = String::new();
    for _ in 0..words {
        push_word(rng, &mut line);
    }
    line
}

/// Write `n_lines` caption lines, deterministically from `seed`.
pub fn write_fixture_corpus(path: &Path, n_lines: usize, seed: u64) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = BufWriter::with_capacity(1 << 20, std::fs::File::create(path)?);
    for _ in 0..n_lines {
        let line = gen_line(&mut rng);
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Write caption lines until the file reaches at least `min_bytes`.
/// Returns the number of lines written.
pub fn write_fixture_corpus_bytes(
    path: &Path,
    min_bytes: u64,
    seed: u64,
) -> std::io::Result<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = BufWriter::with_capacity(1 << 20, std::fs::File::create(path)?);
    let mut bytes: u64 = 0;
    let mut lines: u64 = 0;
    while bytes < min_bytes {
        let line = gen_line(&mut rng);
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        bytes += line.len() as u64 + 1;
        lines += 1;
    }
    w.flush()?;
    Ok(lines)
}
