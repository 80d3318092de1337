//! Shared helpers for the integration tests: brute-force metric oracle,
//! fuzz generators, fixture loading and a mock-backed workbench.

#![allow(dead_code)]

pub mod criteria;
pub mod oracle;

use std::path::{Path, PathBuf};

use kurosawa::config::ServiceConfig;
use kurosawa::dataset::{Dataset, DatasetRecord, IngestMode};
use kurosawa::text::{ElementKind, GenreVocabulary, Scene, ScreenplayElement};
use kurosawa::workbench::Workbench;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Workbench on the built-in mock bank with its store in `dir`.
pub fn mock_workbench(dir: &Path) -> Workbench {
    let config = ServiceConfig {
        data_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    };
    Workbench::open(config).expect("workbench opens")
}

pub fn load_dataset(rel: &str) -> Dataset {
    Dataset::from_jsonl(
        rel,
        &read_fixture(rel),
        IngestMode::Strict,
        &GenreVocabulary::default(),
    )
    .expect("fixture dataset loads strictly")
}

pub fn fixture_records(rel: &str) -> Vec<DatasetRecord> {
    read_fixture(rel)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("fixture record"))
        .collect()
}

/// Twenty words: inside the short storyline and description bands.
pub const STORYLINE: &str = "A retired lighthouse keeper agrees to guide a young navigator \
    through the northern rocks, knowing the same storm once took her brother.";

/// Forty-five words: inside the long storyline band.
pub const LONG_STORYLINE: &str = "A retired lighthouse keeper agrees to guide a young navigator \
    through the northern rocks, knowing the same storm once took her brother. As the crossing \
    nears, she must decide whether to trust his charts or her memory of the night \
    everything went wrong.";

pub const DESCRIPTION: &str = "Two strangers shelter from the rain in a glass greenhouse \
    and argue about whether the orchids are worth saving before the frost arrives.";

const WORD_CHARS: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'E', 'Q', 'é', 'ß', 'ж', '0', '7', '.', ',', '!', '?', '\'',
    '"', '(', ')', '-', '<', '>', '/', '#',
];

/// A non-empty word that never contains a reserved tag literal.
pub fn fuzz_word(rng: &mut StdRng) -> String {
    loop {
        let len = rng.random_range(1..=8);
        let w: String = (0..len)
            .map(|_| WORD_CHARS[rng.random_range(0..WORD_CHARS.len())])
            .collect();
        if !has_reserved_tag(&w) {
            return w;
        }
    }
}

const RESERVED: &[&str] = &[
    "<bsl>", "<esl>", "<bal>", "<eal>", "<bcn>", "<ecn>", "<bd>", "<ed>", "<one>", "<two-a>",
    "<two-b>", "<three>",
];

pub fn has_reserved_tag(s: &str) -> bool {
    RESERVED.iter().any(|t| s.contains(t))
}

pub fn fuzz_text(rng: &mut StdRng, max_words: usize) -> String {
    loop {
        let n = rng.random_range(1..=max_words);
        let s = (0..n).map(|_| fuzz_word(rng)).collect::<Vec<_>>().join(" ");
        if !has_reserved_tag(&s) {
            return s;
        }
    }
}

/// A scene whose elements all have a tag mapping and single-spaced text.
pub fn fuzz_scene(rng: &mut StdRng) -> Scene {
    const KINDS: [ElementKind; 4] = [
        ElementKind::Slugline,
        ElementKind::Action,
        ElementKind::CharacterCue,
        ElementKind::Dialogue,
    ];
    let n = rng.random_range(1..=12);
    Scene::new(
        (0..n)
            .map(|_| {
                let kind = KINDS[rng.random_range(0..KINDS.len())];
                ScreenplayElement::synthesized(kind, fuzz_text(rng, 10))
            })
            .collect(),
    )
}

/// A plot of whitespace-separated words plus three boundary offsets, each
/// on a whitespace character with a non-blank act on either side.
pub fn fuzz_plot(rng: &mut StdRng) -> (String, [usize; 3]) {
    let mut acts: Vec<String> = (0..4).map(|_| fuzz_text(rng, 15)).collect();
    for act in &mut acts {
        if rng.random_bool(0.2) {
            act.push('\n');
            act.push_str(&fuzz_text(rng, 5));
        }
    }
    let mut plot = String::new();
    let mut ends = [0usize; 3];
    for (i, act) in acts.iter().enumerate() {
        if i > 0 {
            ends[i - 1] = plot.chars().count();
            plot.push(if rng.random_bool(0.5) { ' ' } else { '\n' });
        }
        plot.push_str(act);
    }
    (plot, ends)
}

/// The four acts a plot splits into at `ends`, trimmed.
pub fn acts_at(plot: &str, ends: [usize; 3]) -> [String; 4] {
    let chars: Vec<char> = plot.chars().collect();
    let bounds = [0, ends[0], ends[1], ends[2], chars.len()];
    std::array::from_fn(|i| {
        chars[bounds[i]..bounds[i + 1]]
            .iter()
            .collect::<String>()
            .trim()
            .to_string()
    })
}
