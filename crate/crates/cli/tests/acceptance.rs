//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use inclusion_analytics::affect::politeness_vectors;
use inclusion_analytics::analysis::Analyzer;
use inclusion_analytics::embedding::{deterministic_embed, EmbeddingProvider};
use inclusion_analytics::epistemic::{adjusted_semantic_uptake_all, endorsement_uptake, EpistemicConfig};
use inclusion_analytics::lexicon::{CompiledLexicon, DEFAULT_ENDORSEMENT, DEFAULT_POLITENESS};
use inclusion_analytics::participation::ip_from_counts;
use inclusion_analytics::report::{compare, AnalysisReport, CompareLevel, Metric};
use inclusion_analytics::simgen::{generate_corpus, Dimension, SimCondition, Variant, FOCAL_SPEAKER};
use inclusion_analytics::stats::{mann_whitney_u, u_distribution, MwuMethod};
use inclusion_analytics::{Conversation, EndorsementLexicon, PolitenessLexicon, Turn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("IP exactness and invariance", ip_exactness),
        ("participation condition separation", condition_separation),
        ("politeness conventions", politeness_conventions),
        ("windowed metrics equal naive oracles", oracle_equivalence),
        ("null baseline sanity", null_baseline_sanity),
        ("endorsement arithmetic", endorsement_arithmetic),
        ("Mann-Whitney U", mann_whitney),
        ("lexicon fidelity", lexicon_fidelity),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} [{detail}]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} [{detail}]", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ip_exactness() -> Outcome {
    let start = Instant::now();
    for (counts, want) in [(vec![10, 10, 10], 0.0), (vec![0, 0, 12], 1.0), (vec![1, 2, 3], 1.0 / 3.0)] {
        let got = ip_from_counts(&counts).map_err(|e| e.to_string())?;
        check((got - want).abs() <= 1e-9, || format!("{counts:?} -> {got}, want {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let mut counts: Vec<u64> = (0..n).map(|_| rng.random_range(0..200)).collect();
        if counts.iter().all(|&c| c == 0) {
            counts[0] = 1;
        }
        let base = ip_from_counts(&counts).unwrap();
        let factor = rng.random_range(2..=50);
        let scaled: Vec<u64> = counts.iter().map(|c| c * factor).collect();
        let mut shuffled = counts.clone();
        shuffled.shuffle(&mut rng);
        for (label, other) in [("scaled", scaled), ("permuted", shuffled)] {
            let v = ip_from_counts(&other).unwrap();
            check((v - base).abs() <= 1e-9, || format!("{label} {counts:?}: {v} vs {base}"))?;
        }
        check((0.0..=1.0).contains(&base), || format!("{counts:?} -> {base}"))?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("3 examples, 1000 random vectors, {elapsed:.2?}"))
}

fn analyze(corpus: &[Conversation], config: EpistemicConfig, workers: usize) -> AnalysisReport {
    let provider = EmbeddingProvider::deterministic(256).unwrap();
    Analyzer::new(&provider)
        .with_config(config)
        .with_workers(workers)
        .analyze(corpus)
        .unwrap()
}

fn condition_separation() -> Outcome {
    let start = Instant::now();
    let bal = generate_corpus(&SimCondition::new(Dimension::Participation, Variant::Balanced), 50, 101).unwrap();
    let imb = generate_corpus(&SimCondition::new(Dimension::Participation, Variant::Imbalanced), 50, 202).unwrap();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (rb, ri) = (
        analyze(&bal, EpistemicConfig::default(), workers),
        analyze(&imb, EpistemicConfig::default(), workers),
    );
    let mut detail = Vec::new();
    for metric in [Metric::IpTurns, Metric::IpWords] {
        let c = compare(&rb, Some(&ri), metric, CompareLevel::Conversation).map_err(|e| e.to_string())?;
        let diff = c.groups[1].summary.mean - c.groups[0].summary.mean;
        check(diff > 0.2, || format!("{metric}: mean difference {diff:.3}"))?;
        check(c.mwu.p_value < 0.005, || format!("{metric}: p = {}", c.mwu.p_value))?;
        detail.push(format!(
            "{metric} {:.2} vs {:.2}, U={} p={:.1e}",
            c.groups[0].summary.mean, c.groups[1].summary.mean, c.mwu.u_statistic, c.mwu.p_value
        ));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("{}; {elapsed:.2?}", detail.join("; ")))
}

fn politeness_conventions() -> Outcome {
    let bal = generate_corpus(&SimCondition::new(Dimension::Affect, Variant::Balanced), 50, 303).unwrap();
    let imb = generate_corpus(&SimCondition::new(Dimension::Affect, Variant::Imbalanced), 50, 404).unwrap();
    let cfg = EpistemicConfig {
        null_samples: 10,
        ..EpistemicConfig::default()
    };
    let (rb, ri) = (analyze(&bal, cfg.clone(), 4), analyze(&imb, cfg, 4));

    let focal: Vec<_> = ri
        .conversations
        .iter()
        .flat_map(|c| c.utterances.iter())
        .filter(|u| u.speaker_id == FOCAL_SPEAKER)
        .collect();
    let undefined = focal.iter().filter(|u| !u.politeness_defined).count();
    check(!focal.is_empty() && undefined == focal.len(), || {
        format!("{undefined} of {} focal utterances undefined", focal.len())
    })?;

    let others_mean = |r: &AnalysisReport| -> f64 {
        let v: Vec<f64> = r
            .conversations
            .iter()
            .flat_map(|c| c.utterances.iter())
            .filter(|u| u.speaker_id != FOCAL_SPEAKER)
            .filter_map(|u| u.politeness_uptake)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (mb, mi) = (others_mean(&rb), others_mean(&ri));
    check(mi < mb, || format!("speakers 1-2 mean uptake imbalanced {mi:.4} >= balanced {mb:.4}"))?;
    Ok(format!(
        "{} focal utterances all undefined; speakers 1-2 mean uptake {mb:.4} balanced > {mi:.4} imbalanced",
        focal.len()
    ))
}

const PHRASES: &[&str] = &[
    "thanks", "sorry", "hi", "please", "could you", "maybe", "great", "i agree", "exactly", "sounds good", "oxygen",
    "water", "the map", "rope", "first", "last", "i think so", "by the way", "we can", "if possible", "yes", "no",
];

fn random_conversation(rng: &mut ChaCha8Rng, id: String) -> Conversation {
    let len = rng.random_range(1..=50);
    let speakers = rng.random_range(1..=4);
    let turns: Vec<Turn> = (0..len)
        .map(|_| {
            let words = rng.random_range(0..=5);
            let text: Vec<&str> = (0..words).map(|_| PHRASES[rng.random_range(0..PHRASES.len())]).collect();
            Turn::new(format!("s{}", rng.random_range(0..speakers)), text.join(" "))
        })
        .collect();
    Conversation::new(id, None, turns).unwrap()
}

/// Window members for `i` by direct scan.
fn naive_window(c: &Conversation, i: usize, k: usize) -> Vec<usize> {
    let u = c.utterances();
    let mut out = Vec::new();
    for j in 0..u.len() {
        if j > i && j - i <= k && u[j].speaker_id != u[i].speaker_id {
            out.push(j);
        }
    }
    out
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for t in 0..a.len() {
        dot += a[t] * b[t];
    }
    for x in a {
        na += x * x;
    }
    for x in b {
        nb += x * x;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn bits(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

// Plain index loops keep the oracle independent of the iterator code under test.
#[allow(clippy::needless_range_loop)]
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let pol = PolitenessLexicon::shipped();
    let end = EndorsementLexicon::shipped();
    let dim = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0usize;
    for batch in 0..20 {
        let cfg = EpistemicConfig {
            window_k: rng.random_range(1..=6),
            endorse_k: rng.random_range(1..=5),
            decay: rng.random_range(0.05..=1.0),
            null_samples: 2,
            exclusion_radius: None,
            seed: batch,
        };
        let corpus: Vec<Conversation> =
            (0..50).map(|t| random_conversation(&mut rng, format!("rand-{batch}-{t}"))).collect();
        let provider = EmbeddingProvider::deterministic(dim).unwrap();
        let report = Analyzer::new(&provider)
            .with_config(cfg.clone())
            .with_workers(4)
            .analyze(&corpus)
            .map_err(|e| e.to_string())?;

        for (c, r) in corpus.iter().zip(&report.conversations) {
            let vectors = politeness_vectors(&pol, c);
            let texts: Vec<&str> = c.utterances().iter().map(|u| u.text.as_str()).collect();
            let emb: Vec<Vec<f64>> =
                provider.embed_batch(&texts).unwrap().iter().map(|v| v.values().to_vec()).collect();
            for i in 0..c.len() {
                let got = &r.utterances[i];

                let w = naive_window(c, i, cfg.window_k);
                let source_zero = vectors[i].rates.iter().all(|&x| x == 0.0);
                let p = if source_zero || w.is_empty() {
                    None
                } else {
                    let mut s = 0.0;
                    for &j in &w {
                        let reply = &vectors[j].rates;
                        s += if reply.iter().all(|&x| x == 0.0) {
                            0.0
                        } else {
                            naive_cosine(&vectors[i].rates, reply)
                        };
                    }
                    Some(s / w.len() as f64)
                };
                check(bits(p) == bits(got.politeness_uptake), || {
                    format!("{} utterance {i}: P oracle {p:?} vs {:?}", c.id(), got.politeness_uptake)
                })?;

                let mut u = None;
                for (q, &j) in w.iter().enumerate() {
                    let mut d = 0.0;
                    for t in 0..dim {
                        d += emb[i][t] * emb[j][t];
                    }
                    let m: f64 = u.unwrap_or(0.0);
                    u = Some(m + (d - m) / (q + 1) as f64);
                }
                check(bits(u) == bits(got.semantic_uptake), || {
                    format!("{} utterance {i}: U oracle {u:?} vs {:?}", c.id(), got.semantic_uptake)
                })?;

                let mut e = 0.0;
                for j in naive_window(c, i, cfg.endorse_k) {
                    if end.is_endorsement(&c.utterances()[j].text) {
                        e += cfg.decay.powi((j - i) as i32 - 1);
                    }
                }
                check(e.to_bits() == got.endorsement_uptake.to_bits(), || {
                    format!("{} utterance {i}: E oracle {e} vs {}", c.id(), got.endorsement_uptake)
                })?;
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("1000 conversations, {checked} utterances bit-equal, {elapsed:.2?}"))
}

fn null_baseline_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab: Vec<String> = (0..4000)
        .map(|_| (0..rng.random_range(3..9)).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
        .collect();
    let mut tokens: Vec<&str> = (0..200 * 8).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
    tokens.shuffle(&mut rng);
    let pairs: Vec<(String, String)> = tokens
        .chunks(8)
        .enumerate()
        .map(|(i, chunk)| (format!("s{}", i % 3), chunk.join(" ")))
        .collect();
    let conv = Conversation::from_pairs("shuffled", &pairs).unwrap();
    let cfg = EpistemicConfig {
        null_samples: 500,
        seed: 5,
        ..EpistemicConfig::default()
    };
    let emb: Vec<_> = conv.utterances().iter().map(|u| deterministic_embed(&u.text, 256).unwrap()).collect();
    let results = adjusted_semantic_uptake_all(&conv, &emb, &cfg).unwrap();
    let adjusted: Vec<f64> = results.iter().filter_map(|r| r.adjusted).collect();
    let mean = adjusted.iter().sum::<f64>() / adjusted.len() as f64;
    check((-0.02..=0.02).contains(&mean), || format!("mean A = {mean:.4}"))?;

    let same: Vec<(String, String)> = (0..200).map(|i| (format!("s{}", i % 3), "oxygen tanks go first".into())).collect();
    let conv = Conversation::from_pairs("identical", &same).unwrap();
    let emb: Vec<_> = conv.utterances().iter().map(|u| deterministic_embed(&u.text, 256).unwrap()).collect();
    let results = adjusted_semantic_uptake_all(&conv, &emb, &cfg).unwrap();
    let defined: Vec<f64> = results.iter().filter_map(|r| r.adjusted).collect();
    check(defined.len() == 199 && defined.iter().all(|&a| a == 0.0), || {
        format!("identical texts: {} defined, nonzero {:?}", defined.len(), defined.iter().find(|&&a| a != 0.0))
    })?;
    Ok(format!(
        "shuffled text mean A = {mean:+.4} over {} utterances; identical texts A = 0 for all {}",
        adjusted.len(),
        defined.len()
    ))
}

fn endorsement_arithmetic() -> Outcome {
    let lex = EndorsementLexicon::shipped();
    let one = Conversation::from_pairs("one", &[("A", "water goes first"), ("B", "i agree")]).unwrap();
    let v = endorsement_uptake(&one, &lex, 0, 3, 0.7).unwrap().value;
    check((v - 1.0).abs() <= 1e-12, || format!("d=1 gives {v}"))?;
    let two = Conversation::from_pairs(
        "two",
        &[("A", "rope near the top"), ("B", "exactly"), ("C", "what about water"), ("B", "sounds good")],
    )
    .unwrap();
    let v = endorsement_uptake(&two, &lex, 0, 3, 0.7).unwrap().value;
    check((v - 1.49).abs() <= 1e-12, || format!("d=1,3 gives {v}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for t in 0..500 {
        let c = random_conversation(&mut rng, format!("mono-{t}"));
        let i = rng.random_range(0..c.len());
        let lam = rng.random_range(0.05..1.0);
        let lam2 = rng.random_range(lam..=1.0);
        for k in 1..8 {
            let a = endorsement_uptake(&c, &lex, i, k, lam).unwrap().value;
            let b = endorsement_uptake(&c, &lex, i, k + 1, lam).unwrap().value;
            let hi = endorsement_uptake(&c, &lex, i, k, lam2).unwrap().value;
            check(b >= a - 1e-12, || format!("{}: K {k} -> {a}, K {} -> {b}", c.id(), k + 1))?;
            check(hi >= a - 1e-12, || format!("{}: lambda {lam} -> {a}, {lam2} -> {hi}", c.id()))?;
        }
    }
    Ok("1.0 and 1.49 examples; K and lambda monotone on 500 conversations".into())
}

fn brute_force_distribution(n1: usize, n2: usize) -> Vec<u128> {
    let n = n1 + n2;
    let mut dist = vec![0u128; n1 * n2 + 1];
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let rank_sum: usize = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).sum();
        dist[rank_sum - n1 * (n1 + 1) / 2] += 1;
    }
    dist
}

fn mann_whitney() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n1 in 1..=8 {
        for n2 in 1..=8 {
            let brute = brute_force_distribution(n1, n2);
            check(u_distribution(n1, n2) == brute, || format!("distribution differs at ({n1}, {n2})"))?;
            let total: u128 = brute.iter().sum();
            for _ in 0..10 {
                let mut values: Vec<f64> = (0..n1 + n2).map(|v| v as f64 * 1.5 + 0.25).collect();
                values.shuffle(&mut rng);
                let (a, b) = values.split_at(n1);
                let r = mann_whitney_u(a, b).map_err(|e| e.to_string())?;
                check(r.method == MwuMethod::Exact, || format!("({n1}, {n2}) not exact"))?;
                let u = a.iter().map(|x| b.iter().filter(|y| x > y).count()).sum::<usize>();
                check(r.u_statistic == u as f64, || format!("U {} vs pair count {u}", r.u_statistic))?;
                let lower: u128 = brute[..=u].iter().sum();
                let upper: u128 = brute[u..].iter().sum();
                let p = (2.0 * lower.min(upper) as f64 / total as f64).min(1.0);
                check((r.p_value - p).abs() < 1e-12, || format!("({n1}, {n2}) U={u}: p {} vs {p}", r.p_value))?;
            }
        }
    }
    let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    check(r.u_statistic == 0.0 && (r.p_value - 0.1).abs() < 1e-12, || format!("{r:?}"))?;
    for _ in 0..1000 {
        let (n1, n2) = (rng.random_range(1..30), rng.random_range(1..30));
        let a: Vec<f64> = (0..n1).map(|_| rng.random_range(0..12) as f64).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.random_range(0..12) as f64).collect();
        let (ab, ba) = (mann_whitney_u(&a, &b).unwrap(), mann_whitney_u(&b, &a).unwrap());
        check(ab.u_statistic + ba.u_statistic == (n1 * n2) as f64, || format!("{a:?} {b:?}"))?;
        check((ab.p_value - ba.p_value).abs() < 1e-12, || format!("p asymmetric for {a:?} {b:?}"))?;
    }
    Ok("all 64 size pairs match enumeration; [1,2,3] vs [4,5,6] U=0 p=0.1; symmetry on 1000 pairs".into())
}

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn lexicon_fidelity() -> Outcome {
    let raw = std::fs::read_to_string(core_dir().join("tests/data/lexicon_golden.json")).map_err(|e| e.to_string())?;
    let golden: serde_json::Value = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    let pol = CompiledLexicon::default_politeness();
    let end = CompiledLexicon::default_endorsement();
    let mut positives = std::collections::HashMap::<String, (usize, usize)>::new();
    let cases = golden["cases"].as_array().ok_or("golden file has no cases")?;
    let mut mismatches = Vec::new();
    for case in cases {
        let cat = case["category"].as_str().unwrap();
        let text = case["text"].as_str().unwrap();
        let want = case["matches"].as_bool().unwrap();
        let lex = if pol.category_index(cat).is_some() { &pol } else { &end };
        let idx = lex.category_index(cat).ok_or_else(|| format!("unknown category {cat}"))?;
        if (lex.count_category(idx, text) > 0) != want {
            mismatches.push(format!("{cat}: {text:?} expected match={want}"));
        }
        let e = positives.entry(cat.to_string()).or_default();
        if want {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    check(mismatches.is_empty(), || format!("{} mismatches: {}", mismatches.len(), mismatches.join("; ")))?;
    for name in pol.category_names().chain(end.category_names()) {
        let (p, n) = positives.get(name).copied().unwrap_or_default();
        check(p >= 1 && n >= 1, || format!("{name}: {p} positive, {n} negative cases"))?;
    }

    let sums = std::fs::read_to_string(core_dir().join("lexicons/SHA256SUMS")).map_err(|e| e.to_string())?;
    for (file, source) in [("politeness.json", DEFAULT_POLITENESS), ("endorsement.json", DEFAULT_ENDORSEMENT)] {
        let pinned = sums
            .lines()
            .find_map(|l| l.strip_suffix(file).map(|h| h.trim().to_string()))
            .ok_or_else(|| format!("{file} not pinned"))?;
        let actual = hex(&Sha256::digest(source.as_bytes()));
        check(pinned == actual, || format!("{file}: pinned {pinned}, shipped {actual}"))?;
    }
    check(pol.digest() == hex(&Sha256::digest(DEFAULT_POLITENESS.as_bytes())), || "digest field".into())?;
    Ok(format!("{} golden cases over {} categories; 2 digests match", cases.len(), positives.len()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_inclusion"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(o.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr))
    })
}

fn without_timestamp(path: &Path) -> Result<String, String> {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    v["metadata"]["generated_at"] = serde_json::Value::Null;
    Ok(v.to_string())
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |path: &PathBuf| path.to_str().unwrap().to_string();
    let corpus = s(&p("corpus.jsonl"));
    run_cli(&["simulate", "--dimension", "epistemic", "--variant", "imbalanced", "--teams", "12", "--seed", "9", "--out", &corpus])?;
    let mut reports = Vec::new();
    for (name, workers) in [("a.json", "1"), ("b.json", "1"), ("c.json", "8")] {
        let out = s(&p(name));
        run_cli(&["analyze", &corpus, "--seed", "3", "--workers", workers, "--out", &out])?;
        reports.push(without_timestamp(&p(name))?);
    }
    check(reports[0] == reports[1], || "two identical runs differ".into())?;
    check(reports[0] == reports[2], || "workers 1 and 8 differ".into())?;
    let parsed = AnalysisReport::load(p("a.json")).map_err(|e| e.to_string())?;
    check(parsed.conversations.len() == 12, || "conversation count".into())?;
    Ok(format!("3 runs over 12 conversations identical modulo timestamp ({} bytes)", reports[0].len()))
}
