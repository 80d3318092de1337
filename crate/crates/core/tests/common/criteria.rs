//! End-to-end checks, one per acceptance criterion. Each returns a short
//! detail line on success and a failure description otherwise.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use kurosawa::dataset::{completion_body, FinetuneRecord};
use kurosawa::generation::{
    GenerationConfig, MockBank, PlotGeneration, SceneGeneration, Task, SAMPLING_DEFAULTS,
};
use kurosawa::metrics::{
    bleu_n, corpus_rouge_l, distinct_n, perplexity, repetition_n, LikertRating, LikertScores,
};
use kurosawa::plot::{
    build_prompt, insert_act_tags, parse_acts, strip_act_tags, validate_annotated_plot,
    ActBoundaries, FinetuneFormat, GenerationProfile, ProfileId, StorylineKind,
};
use kurosawa::screenplay::{
    decode_tagged, encode_tagged, parse_script, DecodeMode, LayoutConfig, LineClass,
};
use kurosawa::store::{ItemKind, Store};
use kurosawa::text::{tokenize, Genre, TokenSeq};
use kurosawa::workbench::{ExportTarget, PlotRequest, RatingRequest, SceneRequest};
use rand::Rng;
use serde_json::json;

use super::oracle::{self, Doc};
use super::{
    acts_at, fixture, fixture_records, fuzz_plot, fuzz_scene, mock_workbench, read_fixture, rng,
    DESCRIPTION, STORYLINE,
};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// A corpus of up to ten pairs, each document 1..=50 tokens from a small
/// vocabulary so that n-gram matches are common.
pub fn random_corpus(rng: &mut rand::rngs::StdRng) -> (Vec<Doc>, Vec<Doc>) {
    const VOCAB: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
    let pairs = rng.random_range(1..=10);
    let vocab = rng.random_range(2..=VOCAB.len());
    let doc = |rng: &mut rand::rngs::StdRng| -> Doc {
        let len = rng.random_range(1..=50);
        (0..len)
            .map(|_| VOCAB[rng.random_range(0..vocab)].to_string())
            .collect()
    };
    let cands = (0..pairs).map(|_| doc(rng)).collect();
    let refs = (0..pairs).map(|_| doc(rng)).collect();
    (cands, refs)
}

fn seqs(docs: &[Doc]) -> Vec<TokenSeq> {
    docs.iter().map(|d| TokenSeq::from_tokens(d.iter())).collect()
}

fn compare_optional(name: &str, got: Option<f64>, want: Option<f64>) -> Result<(), String> {
    match (got, want) {
        (Some(g), Some(w)) if close(g, w, 1e-9) => Ok(()),
        (None, None) => Ok(()),
        _ => Err(format!("{name}: got {got:?}, oracle {want:?}")),
    }
}

pub fn metric_oracle_equivalence(corpora: usize) -> Outcome {
    let started = Instant::now();
    let mut rng = rng(0x5eed_0001);
    for i in 0..corpora {
        let (cands, refs) = random_corpus(&mut rng);
        let (c, r) = (seqs(&cands), seqs(&refs));
        let fail = |what: &str, got: f64, want: f64| {
            format!("corpus {i}: {what} = {got}, oracle {want}")
        };
        for n in [2, 3, 4] {
            let got = bleu_n(&c, &r, n).map_err(|e| e.to_string())?;
            let want = oracle::bleu(&cands, &refs, n);
            ensure!(close(got, want, 1e-9), "{}", fail(&format!("BLEU-{n}"), got, want));
        }
        let got = corpus_rouge_l(&c, &r).map_err(|e| e.to_string())?;
        let want = oracle::rouge_l(&cands, &refs);
        ensure!(close(got, want, 1e-9), "{}", fail("ROUGE-L", got, want));
        compare_optional(
            &format!("corpus {i}: distinct-3"),
            distinct_n(&c, 3).ok(),
            oracle::distinct(&cands, 3),
        )?;
        compare_optional(
            &format!("corpus {i}: repetition-3"),
            repetition_n(&c, 3).ok(),
            oracle::repetition(&cands, 3),
        )?;
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{corpora} corpora in {:.2}s", elapsed.as_secs_f64()))
}

pub fn perplexity_identity() -> Outcome {
    for v in 2..=64u32 {
        let lp = (1.0 / v as f64).ln();
        for len in [1usize, 7, 100, 1000] {
            let ppl = perplexity(&vec![lp; len]).map_err(|e| e.to_string())?;
            ensure!(close(ppl, v as f64, 1e-9), "V={v}, len={len}: PPL={ppl}");
        }
    }
    Ok("V = 2..=64 at four lengths".into())
}

fn toks(s: &str) -> Vec<TokenSeq> {
    vec![tokenize(s)]
}

fn rendered(v: f64) -> f64 {
    format!("{v:.2}").parse().expect("rendered number")
}

pub fn hand_computed_cases() -> Outcome {
    let bleu2 = bleu_n(&toks("a b c d"), &toks("a b x d"), 2).map_err(|e| e.to_string())?;
    ensure!(close(rendered(bleu2), 50.0, 0.01), "BLEU-2 = {bleu2}");
    let rouge = corpus_rouge_l(&toks("a b c d"), &toks("a c d e")).map_err(|e| e.to_string())?;
    ensure!(close(rendered(rouge), 75.0, 0.01), "ROUGE-L f = {rouge}");
    let doc = toks("a b a b a");
    let distinct = distinct_n(&doc, 3).map_err(|e| e.to_string())?;
    ensure!(close(rendered(distinct), 66.67, 0.01), "distinct-3 = {distinct}");
    let rep = repetition_n(&doc, 3).map_err(|e| e.to_string())?;
    ensure!(close(rendered(rep), 50.0, 0.01), "repetition-3 = {rep}");
    Ok("BLEU-2 50.00, ROUGE-L 75.00, distinct-3 66.67, repetition-3 50.00".into())
}

pub fn tag_round_trips(n: usize) -> Outcome {
    let mut rng = rng(0x5eed_0002);
    for i in 0..n {
        let scene = fuzz_scene(&mut rng);
        let encoded = encode_tagged(&scene).map_err(|e| format!("scene {i}: {e}"))?;
        let decoded = decode_tagged(&encoded, DecodeMode::Strict)
            .map_err(|e| format!("scene {i}: {e}\n{encoded}"))?;
        ensure!(decoded.scene == scene, "scene {i} changed in transit:\n{encoded}");
        ensure!(decoded.warnings.is_empty(), "scene {i}: warnings {:?}", decoded.warnings);
    }
    for i in 0..n {
        let (plot, ends) = fuzz_plot(&mut rng);
        let annotated = insert_act_tags(&plot, &ActBoundaries::new(ends))
            .map_err(|e| format!("plot {i}: {e}"))?;
        let acts = parse_acts(&annotated).map_err(|e| format!("plot {i}: {e}"))?;
        let want = acts_at(&plot, ends);
        let got = acts.as_array();
        ensure!(
            (0..4).all(|k| got[k] == want[k]),
            "plot {i}: acts {got:?}, expected {want:?}"
        );
    }
    Ok(format!("{n} scenes and {n} plots"))
}

fn class_name(class: LineClass) -> String {
    serde_json::to_value(class).unwrap().as_str().unwrap().to_string()
}

pub fn parser_corpus() -> Outcome {
    let dir = fixture("corpus");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "txt").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    ensure!(names.len() >= 5, "{} scripts", names.len());
    let mut scenes = 0;
    let mut lines = 0;
    for name in &names {
        let text = read_fixture(&format!("corpus/{name}.txt"));
        let parsed = parse_script(&text, &LayoutConfig::default()).map_err(|e| e.to_string())?;
        let expected: Vec<String> = read_fixture(&format!("corpus/{name}.classes"))
            .lines()
            .map(str::to_string)
            .collect();
        ensure!(expected.len() == parsed.line_classes.len(), "{name}: line count");
        for (i, (got, want)) in parsed.line_classes.iter().zip(&expected).enumerate() {
            ensure!(&class_name(*got) == want, "{name}:{}: {got:?}, expected {want}", i + 1);
        }
        let mut covered = vec![false; expected.len()];
        for el in parsed.script.scenes.iter().flat_map(|s| &s.elements) {
            if !el.line_span.is_synthesized() {
                covered[el.line_span.start..el.line_span.end].fill(true);
            }
        }
        for (i, class) in parsed.line_classes.iter().enumerate() {
            let structural =
                matches!(class, LineClass::Blank | LineClass::Noise | LineClass::Transition);
            ensure!(structural || covered[i], "{name}:{}: unclassified", i + 1);
        }
        let sluglines = expected.iter().filter(|c| *c == "slugline").count() + parsed.warnings.len();
        ensure!(
            sluglines == parsed.script.scenes.len(),
            "{name}: {} scenes for {sluglines} sluglines",
            parsed.script.scenes.len()
        );
        let mut json = serde_json::to_string_pretty(&parsed).unwrap();
        json.push('\n');
        let golden = read_fixture(&format!("corpus/golden/{name}.json"));
        ensure!(json == golden, "{name}: differs from golden");
        scenes += parsed.script.scenes.len();
        lines += expected.len();
    }
    ensure!(scenes >= 100, "{scenes} scenes");
    Ok(format!("{} scripts, {scenes} scenes, {lines} lines", names.len()))
}

pub fn profile_table() -> Outcome {
    use StorylineKind::{Long, Short};
    // (id, annotated output, storyline kind, genres included)
    let table = [
        (ProfileId::O, false, Short, false),
        (ProfileId::AS, true, Short, false),
        (ProfileId::AL, true, Long, false),
        (ProfileId::ASG, true, Short, true),
        (ProfileId::ALG, true, Long, true),
    ];
    ensure!(GenerationProfile::all().len() == table.len(), "profile count");
    let format = FinetuneFormat::default();
    let genres = [Genre::new("Comedy").unwrap(), Genre::new("Romance").unwrap()];
    for (id, annotated, kind, with_genres) in table {
        let p = id.profile();
        ensure!(
            (p.annotated_output, p.storyline_kind, p.genres_included) == (annotated, kind, with_genres),
            "{id}: {p:?}"
        );
        let given: &[Genre] = if with_genres { &genres } else { &[] };
        let prompt = build_prompt("S", given, &p, &format).map_err(|e| format!("{id}: {e}"))?;
        let want = if with_genres {
            format!("Comedy, Romance. S{}", format.separator)
        } else {
            format!("S{}", format.separator)
        };
        ensure!(prompt.text == want, "{id}: prompt {:?}", prompt.text);
        let wrong: &[Genre] = if with_genres { &[] } else { &genres };
        ensure!(build_prompt("S", wrong, &p, &format).is_err(), "{id}: accepts wrong genres");
    }
    let d = GenerationConfig::default();
    let got = (d.temperature, d.top_p, d.frequency_penalty, d.presence_penalty, d.max_tokens);
    ensure!(got == (0.7, 1.0, 0.1, 0.1, 900), "defaults {got:?}");
    let s = SAMPLING_DEFAULTS;
    ensure!(
        (s.temperature, s.top_p, s.frequency_penalty, s.presence_penalty, s.max_tokens) == got,
        "sampling constants disagree with config defaults"
    );
    Ok("O/AS/AL/ASG/ALG and (0.7, 1.0, 0.1, 0.1, 900)".into())
}

fn sorted(codes: impl IntoIterator<Item = impl Into<String>>) -> Vec<String> {
    let mut v: Vec<String> = codes.into_iter().map(Into::into).collect();
    v.sort();
    v
}

pub fn mock_end_to_end() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let wb = mock_workbench(dir.path());
    let bank = MockBank::builtin();
    let format = FinetuneFormat::default();
    let mut runs = 0;
    for f in bank.fixtures() {
        let cases: Vec<(Option<ProfileId>, &Vec<String>)> = match f.task {
            Task::Plot => vec![
                (Some(ProfileId::AS), &f.expected),
                (Some(ProfileId::O), &f.expected_unannotated),
            ],
            Task::Scene => vec![(None, &f.expected)],
        };
        for (profile, expected) in cases {
            let tag = format!("{} ({})", f.name, profile.map_or("scene", |p| p.as_str()));
            let prompt = match profile {
                Some(p) => build_prompt(STORYLINE, &[], &p.profile(), &format)
                    .map_err(|e| e.to_string())?
                    .text,
                None => format!("{DESCRIPTION}{}", format.separator),
            };
            let seed = bank
                .seed_for(&prompt, &f.name)
                .ok_or_else(|| format!("{tag}: no seed selects it"))?;
            let config = Some(json!({ "seed": seed }));

            // generate and store
            let item = match profile {
                Some(profile) => wb.generate_plot(&PlotRequest {
                    storyline: STORYLINE.into(),
                    long_storyline: None,
                    genres: vec![],
                    profile,
                    config,
                }),
                None => wb.generate_scene(&SceneRequest {
                    description: DESCRIPTION.into(),
                    config,
                }),
            }
            .map_err(|e| format!("{tag}: {e}"))?;

            // parse and validate
            let codes = match profile {
                Some(p) => {
                    let g: PlotGeneration = item.payload_as().map_err(|e| e.to_string())?;
                    ensure!(g.raw.text == f.text, "{tag}: completion was not truncated at the stop");
                    if p.profile().annotated_output {
                        let fresh = validate_annotated_plot(&g.raw.text);
                        ensure!(
                            sorted(fresh.codes()) == sorted(g.report.codes()),
                            "{tag}: stored report disagrees with revalidation"
                        );
                        ensure!(
                            g.acts.is_some() == parse_acts(&g.raw.text).is_ok(),
                            "{tag}: acts do not match a fresh parse"
                        );
                    } else {
                        ensure!(g.acts.is_none(), "{tag}: unannotated output carries acts");
                        ensure!(
                            strip_act_tags(&g.raw.text).split_whitespace().count() > 0,
                            "{tag}: empty plot"
                        );
                    }
                    sorted(g.report.codes())
                }
                None => {
                    let g: SceneGeneration = item.payload_as().map_err(|e| e.to_string())?;
                    ensure!(g.raw.text == f.text, "{tag}: completion was not truncated at the stop");
                    if let Ok(d) = decode_tagged(&g.raw.text, DecodeMode::Lenient) {
                        ensure!(
                            d.scene.elements == g.scene.elements,
                            "{tag}: stored scene differs from a fresh decode"
                        );
                    }
                    sorted(g.report.codes())
                }
            };
            ensure!(codes == sorted(expected.iter().cloned()), "{tag}: codes {codes:?}, expected {expected:?}");

            // retrieve
            let fetched = wb.get(&item.id).map_err(|e| format!("{tag}: {e}"))?;
            ensure!(fetched == item, "{tag}: retrieved item differs");

            // rate and summarize
            for (rater, score) in [("r1", 3), ("r2", 5)] {
                wb.add_rating(RatingRequest {
                    item_id: item.id.clone(),
                    rater_id: rater.into(),
                    scores: LikertScores::uniform(score),
                })
                .map_err(|e| format!("{tag}: {e}"))?;
            }
            let summary = wb
                .rating_summary(None, Some(&item.id))
                .map_err(|e| format!("{tag}: {e}"))?;
            ensure!(summary.n_ratings == 2, "{tag}: {} ratings", summary.n_ratings);
            ensure!(
                summary.features().iter().all(|(_, s)| close(s.mean, 4.0, 1e-12)),
                "{tag}: means {summary:?}"
            );
            runs += 1;
        }
    }
    let kinds: BTreeSet<ItemKind> = wb.list(None, None, 500).items.iter().map(|i| i.kind).collect();
    ensure!(kinds.contains(&ItemKind::Rating), "no ratings stored");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("{} fixtures, {runs} runs in {:.2}s", bank.fixtures().len(), elapsed.as_secs_f64()))
}

/// Env var that turns a test process into the durability writer.
pub const CHILD_DIR_ENV: &str = "KUROSAWA_DURABILITY_CHILD_DIR";

/// Body of the re-executed writer: appends ratings forever, printing
/// `ACK <id>` after each append returns. Returns at once when the env var
/// is unset.
pub fn durability_child() {
    let Some(dir) = std::env::var_os(CHILD_DIR_ENV) else {
        return;
    };
    let store = Store::open(Path::new(&dir)).expect("child opens store");
    let stdout = std::io::stdout();
    for i in 0..100_000u64 {
        let rating = LikertRating {
            item_id: format!("item-{i}"),
            rater_id: "durability".into(),
            scores: LikertScores::uniform(1 + (i % 5) as i64),
        };
        let item = store.append(&rating).expect("append");
        let mut out = stdout.lock();
        writeln!(out, "ACK {}", item.id).unwrap();
        out.flush().unwrap();
    }
}

/// Kills a writer child at `rounds` random points and checks after each
/// restart that every acknowledged id is still readable. `child_test` is
/// the name of a test in the current binary that calls [`durability_child`].
pub fn durability(rounds: usize, child_test: &str) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let mut rng = rng(0x5eed_0003);
    let mut acked: Vec<String> = Vec::new();
    for round in 0..rounds {
        let mut child = Command::new(&exe)
            .args([child_test, "--exact", "--nocapture", "--test-threads=1"])
            .env(CHILD_DIR_ENV, dir.path())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let stdout = child.stdout.take().unwrap();
        let reader = std::thread::spawn(move || {
            BufReader::new(stdout)
                .lines()
                .map_while(Result::ok)
                .filter_map(|l| l.strip_prefix("ACK ").map(str::to_string))
                .collect::<Vec<String>>()
        });
        std::thread::sleep(Duration::from_micros(rng.random_range(2_000..60_000)));
        child.kill().map_err(|e| e.to_string())?;
        child.wait().map_err(|e| e.to_string())?;
        acked.extend(reader.join().map_err(|_| "reader panicked".to_string())?);

        let store = Store::open(dir.path()).map_err(|e| format!("round {round}: reopen: {e}"))?;
        for id in &acked {
            ensure!(store.get(id).is_ok(), "round {round}: acknowledged {id} lost");
        }
    }
    ensure!(!acked.is_empty(), "no append was ever acknowledged");
    Ok(format!("{rounds} kills, {} acknowledged items intact", acked.len()))
}

fn export_twice(target: ExportTarget) -> Result<(String, String), String> {
    let mut out = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let wb = mock_workbench(dir.path());
        let id = wb.create_dataset("export-20").map_err(|e| e.to_string())?.id;
        let report = wb
            .add_records(&id, fixture_records("datasets/export_20.jsonl"), Default::default())
            .map_err(|e| e.to_string())?;
        ensure!(
            report.accepted == 20 && report.rejected.is_empty(),
            "fixture import: {report:?}"
        );
        out.push(wb.export(&id, target).map_err(|e| e.to_string())?);
    }
    Ok((out.remove(0), out.remove(0)))
}

pub fn export_conformance() -> Outcome {
    let format = FinetuneFormat::default();
    let targets = fixture_records("datasets/export_20.jsonl");
    for id in ProfileId::ALL {
        let profile = id.profile();
        let (a, b) = export_twice(ExportTarget::Plot(id))?;
        ensure!(a == b, "{id}: exports differ between runs");
        let mut lines = a.lines();
        let header = lines.next().unwrap_or_default();
        ensure!(header.starts_with("# kurosawa finetune export profile="), "{id}: header {header:?}");
        let records: Vec<FinetuneRecord> = lines
            .map(|l| serde_json::from_str(l).map_err(|e| format!("{id}: {e}")))
            .collect::<Result<_, _>>()?;
        ensure!(records.len() == 20, "{id}: {} records", records.len());
        for (r, source) in records.iter().zip(&targets) {
            ensure!(r.prompt.ends_with(&format.separator), "{id}/{}: prompt end", source.id);
            let body = completion_body(&r.completion, &format)
                .ok_or_else(|| format!("{id}/{}: completion framing", source.id))?;
            let source_acts = parse_acts(&source.target_text).map_err(|e| e.to_string())?;
            if profile.annotated_output {
                let acts = parse_acts(body).map_err(|e| format!("{id}/{}: {e}", source.id))?;
                ensure!(acts == source_acts, "{id}/{}: acts changed", source.id);
            } else {
                ensure!(strip_act_tags(body) == body, "{id}/{}: tags left in", source.id);
                ensure!(body == source_acts.plain_text(), "{id}/{}: body differs", source.id);
            }
        }
        let golden = fixture(&format!("datasets/export_20.{id}.jsonl"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            fs::write(&golden, &a).map_err(|e| e.to_string())?;
        }
        let committed = fs::read_to_string(&golden).map_err(|e| format!("{}: {e}", golden.display()))?;
        ensure!(committed == a, "{id}: export differs from the committed golden");
    }
    Ok("20 records, five profiles, byte-stable, every completion re-parses".into())
}
