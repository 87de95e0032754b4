//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::beam::Setup;
use ncmt_core::config::KvConfig;
use ncmt_core::corpus::{write_parallel, SentencePair};
use ncmt_core::filters::*;
use ncmt_core::metrics::{bleu, chrf, score, Metric, MetricConfig};
use ncmt_core::reranker::{combined_score, direct_decode, noisy_channel_decode, DecodingParams, Direction};
use ncmt_core::sampler::{draw, filter_distribution, rng_for, SamplingParams};
use ncmt_core::scorers::{RowCondition, TokenId, DEFAULT_SENTINEL};
use ncmt_core::sweep::{regression_diagnostics, run_sweep, SweepConfig, Trial};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ncmt(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ncmt"))
        .args(args)
        .current_dir(dir)
        .env("NCMT_CI", "1")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("ncmt {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)),
    )
}

// ---------------------------------------------------------------- 1

struct Case {
    rule: Rule,
    pair: SentencePair,
    keep: bool,
}

fn case(rule: Rule, src: String, tgt: String, keep: bool) -> Case {
    Case {
        rule,
        pair: SentencePair::new(0, src, tgt),
        keep,
    }
}

fn boundary_cases(embedder: &mut PrecomputedEmbedder) -> Vec<Case> {
    let mut cases = Vec::new();
    let words = |n: usize| vec!["w"; n].join(" ");
    // 140 characters with spaces: 70 two-letter tokens minus the trailing space.
    let chars = |n: usize| {
        let mut s = "ab ".repeat(n / 3);
        s.push_str(&"c".repeat(n - s.chars().count()));
        s
    };
    for (n, keep) in [(139, true), (140, true), (141, false)] {
        cases.push(case(Rule::Length, chars(n), chars(n), keep));
    }
    for (n, keep) in [(39, true), (40, true), (41, false)] {
        cases.push(case(Rule::TokenLength, "t".repeat(n), "ok".into(), keep));
    }
    for (n, keep) in [(11, true), (12, true), (13, false)] {
        cases.push(case(Rule::CharTokenRatio, "r".repeat(n), "ok".into(), keep));
    }
    // 2 tokens over 25 characters is 12.5.
    cases.push(case(Rule::CharTokenRatio, format!("{} {}", "x".repeat(12), "y".repeat(12)), "ok".into(), false));
    cases.push(case(Rule::CharTokenRatio, "ok".into(), String::new(), false));
    for (n, keep) in [(3, true), (4, true), (5, false)] {
        cases.push(case(Rule::PairTokenRatio, words(n), "w".into(), keep));
        cases.push(case(Rule::PairTokenRatio, "w".into(), words(n), keep));
    }
    for (n, keep) in [(5, true), (6, true), (7, false)] {
        cases.push(case(Rule::PairLengthRatio, "l".repeat(n), "m".into(), keep));
        cases.push(case(Rule::PairLengthRatio, "m".into(), "l".repeat(n), keep));
    }
    // 10 counted tokens, 2 / 3 / 4 of them Cyrillic.
    for (n, keep) in [(2, true), (3, true), (4, false)] {
        let mut t = vec!["שלום"; 10 - n];
        t.extend(vec!["мир"; n]);
        cases.push(case(Rule::Language, "hello world".into(), t.join(" "), keep));
    }
    cases.push(case(Rule::Language, "hello , world !".into(), "שלום , עולם !".into(), true));
    cases.push(case(Rule::Numeric, "paid 1,000 in 2020".into(), "שילם 1000 ב 2020".into(), true));
    cases.push(case(Rule::Numeric, "paid 1,000".into(), "שילם 1001".into(), false));
    cases.push(case(Rule::Numeric, "paid 3 and 3".into(), "שילם 3".into(), false));
    cases.push(case(Rule::Entity, "we met Dana Levi".into(), "we met dana levi".into(), true));
    cases.push(case(Rule::Entity, "we met Dana Levi".into(), "we met Noa Cohen".into(), false));
    cases.push(case(Rule::Entity, "we met Dana Levi".into(), "פגשנו את דנה".into(), true));
    // Cosines 0.69, 0.7, 0.71, 0.95, 0.96, 0.97; the two boundaries exact.
    let unit = |c: f64| vec![c, (1.0 - c * c).sqrt(), 0.0, 0.0];
    let vectors = [
        (unit(0.69), false),
        (vec![7.0, 7.0, 1.0, 1.0], true),
        (unit(0.71), true),
        (unit(0.95), true),
        (vec![24.0, 7.0, 0.0, 0.0], true),
        (unit(0.97), false),
    ];
    for (i, (v, keep)) in vectors.into_iter().enumerate() {
        let (src, tgt) = (format!("source {i}"), format!("target {i}"));
        embedder.insert(src.clone(), vec![1.0, 0.0, 0.0, 0.0]);
        embedder.insert(tgt.clone(), v);
        cases.push(case(Rule::Embedding, src, tgt, keep));
    }
    cases
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut embedder = PrecomputedEmbedder::new();
    let cases = boundary_cases(&mut embedder);
    let providers = Providers::new(&ScriptTagger, &CapitalizedEntities, &embedder);
    let mut agree = 0;
    for c in &cases {
        let cfg = FilterConfig::default().with_rules(&[c.rule]);
        let out = run_pipeline(std::slice::from_ref(&c.pair), &cfg, providers, 1).map_err(|e| e.to_string())?;
        let v = &out.verdicts[0];
        ensure(
            v.is_kept() == c.keep,
            format!("{} on {:?}: got {}", c.rule, c.pair, v.to_record()),
        )?;
        ensure(v.is_kept() || v.rule == c.rule.name(), format!("wrong rule {}", v.rule))?;
        agree += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("{agree}/{} boundary verdicts agree, {elapsed:.2?}", cases.len()))
}

// ---------------------------------------------------------------- 2

fn oracle_keep(pair: &SentencePair, cfg: &FilterConfig) -> bool {
    cfg.enabled_rules.iter().all(|rule| match rule {
        Rule::Language => language_filter(pair, &ScriptTagger, cfg.max_foreign_token_fraction).is_keep(),
        Rule::Entity => entity_filter(pair, &CapitalizedEntities).unwrap().is_keep(),
        Rule::Numeric => numeric_filter(pair).is_keep(),
        Rule::Length => length_filter(pair, cfg.max_chars).is_keep(),
        Rule::TokenLength => token_length_filter(pair, cfg.max_token_chars).is_keep(),
        Rule::CharTokenRatio => char_token_ratio_filter(pair, cfg.max_char_token_ratio).is_keep(),
        Rule::PairTokenRatio => pair_token_ratio_filter(pair, cfg.max_pair_token_ratio).is_keep(),
        Rule::PairLengthRatio => pair_length_ratio_filter(pair, cfg.max_pair_length_ratio).is_keep(),
        Rule::Embedding => unreachable!("not enabled by default"),
    })
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let pairs = common::synthetic_corpus(10_000, 42);
    let cfg = FilterConfig::default();
    let providers = Providers {
        tagger: Some(&ScriptTagger),
        entities: Some(&CapitalizedEntities),
        embedder: None,
    };
    let out = run_pipeline(&pairs, &cfg, providers, 8).map_err(|e| e.to_string())?;
    let kept: BTreeSet<usize> = out.kept.iter().map(|p| p.id).collect();
    let oracle: BTreeSet<usize> = pairs.iter().filter(|p| oracle_keep(p, &cfg)).map(|p| p.id).collect();
    ensure(kept == oracle, format!("kept {} vs oracle {}", kept.len(), oracle.len()))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_parallel(&pairs, &dir.path().join("c.src"), &dir.path().join("c.tgt")).map_err(|e| e.to_string())?;
    for jobs in ["1", "8"] {
        let prefix = format!("j{jobs}");
        ncmt(dir.path(), &["filter", "c.src", "c.tgt", "--out-prefix", &prefix, "--jobs", jobs])?;
    }
    for ext in ["src", "tgt", "verdicts"] {
        let a = fs::read(dir.path().join(format!("j1.{ext}"))).map_err(|e| e.to_string())?;
        let b = fs::read(dir.path().join(format!("j8.{ext}"))).map_err(|e| e.to_string())?;
        ensure(a == b, format!("--jobs 8 .{ext} differs from --jobs 1"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} of 10000 kept, equal to sequential oracle; jobs 8 == jobs 1; {elapsed:.2?}",
        kept.len()
    ))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool = common::synthetic_corpus(1000, 7);
    let pairs: Vec<SentencePair> = (0..1_000_000)
        .map(|id| {
            let p = &pool[rng.random_range(0..pool.len())];
            SentencePair::new(id, p.source.clone(), p.target.clone())
        })
        .collect();
    let cfg = FilterConfig::default().with_rules(&[Rule::CharTokenRatio, Rule::PairTokenRatio, Rule::PairLengthRatio]);
    let start = Instant::now();
    let out = run_pipeline(&pairs, &cfg, Providers::default(), 1).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(out.verdicts.len() == pairs.len(), "verdict count")?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("1000000 pairs through ratio filters in {elapsed:.2?} on one thread"))
}

// ---------------------------------------------------------------- 4

/// Plain-probability recomputation of the sampling filter.
fn scalar_filter(logp: &[f64], k: usize, p: f64, temp: f64) -> Vec<f64> {
    let m = logp.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b / temp));
    let w: Vec<f64> = logp.iter().map(|l| (l / temp - m).exp()).collect();
    let z: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / z).collect();
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in idx {
        kept.push(i);
        mass += probs[i];
        if mass >= p {
            break;
        }
    }
    let total: f64 = kept.iter().map(|&i| probs[i]).sum();
    let mut out = vec![DEFAULT_SENTINEL; probs.len()];
    for i in kept {
        out[i] = (probs[i] / total).ln();
    }
    out
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..200);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..1.0f64).powi(3)).collect();
        let z: f64 = w.iter().sum();
        let logp: Vec<f64> = w.iter().map(|x| (x / z).ln()).collect();
        let params = SamplingParams {
            top_k: rng.random_range(1..=n + 5),
            top_p: rng.random_range(0.05..=1.0),
            temperature: rng.random_range(0.2..2.0),
            ..SamplingParams::default()
        };
        let got = filter_distribution(&logp, &params);
        let want = scalar_filter(&logp, params.top_k, params.top_p, params.temperature);
        for (g, w) in got.iter().zip(&want) {
            ensure((*g == DEFAULT_SENTINEL) == (*w == DEFAULT_SENTINEL), "support differs")?;
            worst = worst.max((g - w).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;

    let dist: Vec<f64> = [0.45f64, 0.25, 0.15, 0.1, 0.05].iter().map(|p| p.ln()).collect();
    let params = SamplingParams {
        top_k: 3,
        top_p: 0.93,
        temperature: 0.7,
        ..SamplingParams::default()
    };
    let filtered = filter_distribution(&dist, &params);
    let mut draws = rng_for(12345, 0);
    let n = 100_000;
    let mut counts = vec![0u64; dist.len()];
    for _ in 0..n {
        counts[draw(&filtered, &mut draws).ok_or("no draw")?] += 1;
    }
    let support: Vec<usize> = (0..dist.len()).filter(|&i| filtered[i] > DEFAULT_SENTINEL).collect();
    ensure(counts.iter().enumerate().all(|(i, &c)| c == 0 || support.contains(&i)), "drew outside support")?;
    let stat: f64 = support
        .iter()
        .map(|&i| {
            let e = filtered[i].exp() * n as f64;
            (counts[i] as f64 - e).powi(2) / e
        })
        .sum();
    let pvalue = ChiSquared::new((support.len() - 1) as f64).map_err(|e| e.to_string())?.sf(stat);
    ensure(pvalue > 0.001, format!("chi-square p = {pvalue}"))?;

    let kv = KvConfig::load(&root().join("configs/sample.cfg")).map_err(|e| e.to_string())?;
    let mut loaded = SamplingParams::default();
    loaded.apply(&kv).map_err(|e| e.to_string())?;
    for p in [&loaded, &SamplingParams::default()] {
        ensure(
            (p.top_k, p.top_p, p.temperature, p.beam, p.length_penalty) == (50, 0.93, 0.7, 1, 1.0),
            format!("defaults {p:?}"),
        )?;
    }
    Ok(format!(
        "1000 distributions within {worst:.1e}; chi-square p = {pvalue:.3}; defaults 50/0.93/0.7"
    ))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let mut reduced = 0;
    let mut exact = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let n = rng.random_range(2..=4);
        let vocab = common::toy_vocab(n);
        let direct = common::random_table(&mut rng, &vocab, RowCondition::Any);
        let channel = common::random_conditional_table(&mut rng, &vocab, 2);
        let lm = common::random_table(&mut rng, &vocab, RowCondition::Unconditioned);
        let source: Vec<TokenId> = (0..rng.random_range(1..=3))
            .map(|_| TokenId(rng.random_range(2..vocab.len() as u32)))
            .collect();
        let base = DecodingParams {
            beam: rng.random_range(1..=4),
            k2: rng.random_range(1..=vocab.len()),
            max_len: rng.random_range(1..=4),
            delta_ch: 0.0,
            delta_lm: 0.0,
            ..DecodingParams::default()
        };
        let zero = noisy_channel_decode(&direct, &channel, &lm, &source, &base).map_err(|e| e.to_string())?;
        let plain = direct_decode(&direct, &source, &base).map_err(|e| e.to_string())?;
        ensure(zero.best == plain.best, format!("instance {seed}: zero weights differ from direct"))?;
        let setup = |p: &DecodingParams, rerank: bool| Setup {
            direct: &direct,
            rerank: rerank.then_some((&channel as _, &lm as _)),
            source: &source,
            beam: p.beam,
            k2: p.k2,
            length_penalty: p.length_penalty,
            delta_ch: p.delta_ch,
            delta_lm: p.delta_lm,
            max_len: p.max_len,
        };
        ensure(plain.best == setup(&base, false).beam_search()[0].tokens, format!("instance {seed}: direct beam"))?;
        let wide = DecodingParams {
            beam: 100_000,
            k2: vocab.len(),
            ..base.clone()
        };
        let all = setup(&wide, false).enumerate();
        let wide_direct = direct_decode(&direct, &source, &wide).map_err(|e| e.to_string())?;
        let wide_zero = noisy_channel_decode(&direct, &channel, &lm, &source, &wide).map_err(|e| e.to_string())?;
        ensure(
            wide_direct.best == all[0].tokens && wide_zero.best == all[0].tokens,
            format!("instance {seed}: exhaustive argmax"),
        )?;
        reduced += 1;

        let weighted = DecodingParams {
            delta_ch: rng.random_range(0.05..1.0),
            delta_lm: rng.random_range(0.05..1.0),
            ..base.clone()
        };
        let got = noisy_channel_decode(&direct, &channel, &lm, &source, &weighted).map_err(|e| e.to_string())?;
        let want = setup(&weighted, true).beam_search();
        ensure(got.beam.len() == want.len(), format!("instance {seed}: beam size"))?;
        for (c, h) in got.beam.iter().zip(&want) {
            let recomputed = combined_score(
                c.direct_lp,
                c.channel_lp.unwrap(),
                c.lm_lp.unwrap(),
                source.len(),
                c.tokens.len(),
                &weighted,
            );
            ensure(c.tokens == h.tokens, format!("instance {seed}: pruning order"))?;
            ensure(c.combined == Some(h.score) && c.combined == Some(recomputed), format!("instance {seed}: score"))?;
        }
        let ranked = setup(&wide_weighted(&weighted, vocab.len()), true).enumerate();
        let got_wide = noisy_channel_decode(&direct, &channel, &lm, &source, &wide_weighted(&weighted, vocab.len()))
            .map_err(|e| e.to_string())?;
        ensure(got_wide.best == ranked[0].tokens, format!("instance {seed}: reranked argmax"))?;
        exact += 1;
    }

    for (dir, file, want) in [
        (Direction::EnHe, "decode-en-he.cfg", (0.2297, 0.2056)),
        (Direction::HeEn, "decode-he-en.cfg", (0.2998, 0.2594)),
    ] {
        let kv = KvConfig::load(&root().join("configs").join(file)).map_err(|e| e.to_string())?;
        let mut from_file = DecodingParams::default();
        from_file.apply(&kv).map_err(|e| e.to_string())?;
        for p in [DecodingParams::preset(dir), from_file] {
            ensure(
                (p.beam, p.k2, p.cm_top_k, p.length_penalty, p.delta_ch, p.delta_lm) == (5, 5, 500, 1.0, want.0, want.1),
                format!("{dir} preset {p:?}"),
            )?;
        }
    }
    Ok(format!(
        "{reduced}/50 zero-weight instances equal direct-only and exhaustive argmax; {exact}/50 beams match exact recomputation; presets verbatim"
    ))
}

fn wide_weighted(p: &DecodingParams, vocab: usize) -> DecodingParams {
    DecodingParams {
        beam: 100_000,
        k2: vocab,
        ..p.clone()
    }
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let cfg = MetricConfig::default();
    let dev = fs::read_to_string(root().join("fixtures/toy/dev.ref")).map_err(|e| e.to_string())?;
    let lines: Vec<String> = dev.lines().map(String::from).collect();
    let b = bleu(&lines, &lines, &cfg).map_err(|e| e.to_string())?.score;
    let c = chrf(&lines, &lines, &cfg).map_err(|e| e.to_string())?;
    ensure(format!("{b:.2}") == "100.00" && format!("{c:.2}") == "100.00", format!("identity {b} {c}"))?;

    let got = bleu(&["the cat sat".into()], &["the cat sat down".into()], &cfg)
        .map_err(|e| e.to_string())?
        .score;
    let want = 100.0 * (1.0f64 * 1.0 * 1.0 * 0.5).powf(0.25) * (1.0 - 4.0 / 3.0f64).exp();
    ensure((got - want).abs() < 1e-4, format!("example {got} vs {want}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let alphabet = ["a", "b", "c", "dd", "e", "f", ".", "ש", "ל"];
    let sentence = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.random_range(0..10);
        (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect::<Vec<_>>().join(" ")
    };
    for _ in 0..500 {
        let n = rng.random_range(1..10);
        let mut pairs: Vec<(String, String)> = (0..n).map(|_| (sentence(&mut rng), sentence(&mut rng))).collect();
        let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
        pairs.shuffle(&mut rng);
        let (h2, r2): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
        for m in [Metric::Bleu, Metric::Chrf] {
            let a = score(m, &h, &r, &cfg).map_err(|e| e.to_string())?;
            let b = score(m, &h2, &r2, &cfg).map_err(|e| e.to_string())?;
            ensure((0.0..=100.0).contains(&a), format!("{m} out of range: {a}"))?;
            ensure((a - b).abs() < 1e-9, format!("{m} changed under permutation: {a} vs {b}"))?;
        }
    }
    Ok(format!("identity 100.00/100.00; example {got:.4} (expected {want:.4}); 500 random corpora bounded and permutation invariant"))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    let cfg = SweepConfig {
        iterations: 200,
        seed: 2024,
        recenter_every: 25,
        ..SweepConfig::default()
    };
    let objective = |x: f64, y: f64| Ok::<f64, String>(-((x - 0.25).powi(2) + (y - 0.25).powi(2)));
    let out = run_sweep(objective, &cfg).map_err(|e| e.to_string())?;
    let dist = (out.best.delta_ch - 0.25).abs().max((out.best.delta_lm - 0.25).abs());
    ensure(dist <= 0.05, format!("best {:?} is {dist} from the peak", out.best))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let trials: Vec<Trial> = (0..rng.random_range(3..80))
            .map(|index| Trial {
                index,
                delta_ch: rng.random_range(0.01..0.99),
                delta_lm: rng.random_range(0.01..0.99),
                objective: rng.random_range(-10.0..40.0),
            })
            .collect();
        let d = regression_diagnostics(&trials).map_err(|e| e.to_string())?;
        let ys: Vec<f64> = trials.iter().map(|t| t.objective).collect();
        for (fit, xs) in [
            (d.delta_ch, trials.iter().map(|t| t.delta_ch).collect::<Vec<_>>()),
            (d.delta_lm, trials.iter().map(|t| t.delta_lm).collect()),
        ] {
            let n = xs.len() as f64;
            let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
            let m = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            let b = (sy - m * sx) / n;
            worst = worst.max((fit.slope - m).abs()).max((fit.intercept - b).abs());
        }
    }
    ensure(worst < 1e-9, format!("OLS deviation {worst:e}"))?;
    Ok(format!(
        "best ({:.4}, {:.4}) within {dist:.4} of (0.25, 0.25); OLS within {worst:.1e}",
        out.best.delta_ch, out.best.delta_lm
    ))
}

// ---------------------------------------------------------------- 8

fn pipeline_run(dir: &Path) -> Result<(), String> {
    for entry in fs::read_dir(root().join("fixtures/toy")).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        fs::copy(entry.path(), dir.join(entry.file_name())).map_err(|e| e.to_string())?;
    }
    for f in ["filter.cfg", "sample.cfg", "decode-en-he.cfg"] {
        fs::copy(root().join("configs").join(f), dir.join(f)).map_err(|e| e.to_string())?;
    }
    ncmt(dir, &["filter", "--config", "filter.cfg", "src.txt", "tgt.txt", "--out-prefix", "clean"])?;
    ncmt(
        dir,
        &["sample", "--config", "sample.cfg", "--model", "reverse.table", "mono.txt", "--out-prefix", "bt", "--seed", "11", "--jobs", "4"],
    )?;
    ncmt(dir, &["filter", "--config", "filter.cfg", "bt.src", "bt.tgt", "--out-prefix", "btclean"])?;
    ncmt(
        dir,
        &[
            "decode", "--config", "decode-en-he.cfg", "--direct", "direct.table", "--channel", "channel.table", "--lm",
            "lm.table", "dev.src", "--output", "hyp.txt", "--dump", "hyp.tsv", "--jobs", "3",
        ],
    )?;
    ncmt(dir, &["score", "--metric", "bleu", "hyp.txt", "dev.ref", "--output", "hyp.bleu"])
}

fn criterion_8() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline_run(a.path())?;
    pipeline_run(b.path())?;
    let mut names: Vec<String> = fs::read_dir(a.path())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let manifests = names.iter().filter(|n| n.ends_with(".manifest")).count();
    ensure(manifests == 5, format!("expected 5 manifests, found {manifests}"))?;
    for name in &names {
        let x = fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join(name)).map_err(|e| e.to_string())?;
        ensure(x == y, format!("{name} differs between runs"))?;
    }
    let bleu = fs::read_to_string(a.path().join("hyp.bleu")).map_err(|e| e.to_string())?;
    Ok(format!(
        "{} artifacts ({manifests} manifests) byte-identical across two runs; dev BLEU {}",
        names.len(),
        bleu.lines().next().unwrap_or("?")
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 8] = [
        ("threshold fidelity", criterion_1),
        ("pipeline oracle", criterion_2),
        ("throughput", criterion_3),
        ("sampler", criterion_4),
        ("reranker oracle", criterion_5),
        ("metrics", criterion_6),
        ("sweep", criterion_7),
        ("end-to-end reproducibility", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(msg) => println!("PASS criterion {} ({name}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
