//! Executes a resolved [`Plan`]. Nothing here reads flags or the
//! environment, which is what makes a manifest enough to replay a run.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use ncmt_core::config::KvConfig;
use ncmt_core::corpus::{read_lines, read_parallel, write_lines, write_parallel, write_verdicts};
use ncmt_core::filters::{
    run_pipeline, CapitalizedEntities, FilterConfig, HashingEmbedder, PrecomputedEmbedder, Providers, ScriptTagger,
    SentenceEmbedder,
};
use ncmt_core::metrics::{bleu, score, Metric, MetricConfig};
use ncmt_core::reranker::{decode_corpus, Candidate, DecodeResult, DecodingParams};
use ncmt_core::sampler::{backtranslate_corpus, SamplingParams};
use ncmt_core::scorers::{
    count_frequencies, restrict_output_vocab, RestrictedScorer, SequenceScorer, TableScorer, TokenId, Vocabulary,
};
use ncmt_core::sweep::{regression_diagnostics, run_sweep_with, GaussianProposer, SweepConfig};

use crate::error::{Classify, Failure};
use crate::plan::Plan;

pub const SUBCOMMANDS: [&str; 7] = ["filter", "stats", "sample", "decode", "decode-direct-only", "score", "sweep"];

pub fn execute(plan: &Plan, out: &mut dyn Write) -> Result<(), Failure> {
    match plan.subcommand.as_str() {
        "filter" => filter(plan, out),
        "stats" => stats(plan, out),
        "sample" => sample(plan, out),
        "decode" => decode(plan, true),
        "decode-direct-only" => decode(plan, false),
        "score" => score_cmd(plan, out),
        "sweep" => sweep(plan, out),
        other => Err(Failure::usage(format!("unknown subcommand '{other}'"))),
    }
}

/// Keys of `kv` that belong to `keys`.
pub fn subset(kv: &KvConfig, keys: &[&str]) -> KvConfig {
    let mut out = KvConfig::default();
    for (k, v) in kv.iter().filter(|(k, _)| keys.contains(k)) {
        out.insert(k, v);
    }
    out
}

pub fn filter_config(kv: &KvConfig) -> Result<FilterConfig, Failure> {
    let mut cfg = FilterConfig::default();
    cfg.apply(kv).usage_err()?;
    cfg.validate().usage_err()?;
    Ok(cfg)
}

pub fn sampling_params(kv: &KvConfig) -> Result<SamplingParams, Failure> {
    let mut p = SamplingParams::default();
    p.apply(kv).usage_err()?;
    p.validate().usage_err()?;
    Ok(p)
}

pub fn decoding_params(base: DecodingParams, kv: &KvConfig) -> Result<DecodingParams, Failure> {
    let mut p = base;
    p.apply(kv).usage_err()?;
    p.validate().usage_err()?;
    Ok(p)
}

pub fn metric_config(kv: &KvConfig) -> Result<(Metric, MetricConfig), Failure> {
    let mut metric = Metric::Bleu;
    kv.read_into("metric", &mut metric).usage_err()?;
    let mut cfg = MetricConfig::default();
    cfg.apply(&subset(kv, &MetricConfig::KEYS)).usage_err()?;
    cfg.validate().usage_err()?;
    Ok((metric, cfg))
}

pub fn sweep_config(kv: &KvConfig) -> Result<SweepConfig, Failure> {
    let mut cfg = SweepConfig::default();
    cfg.apply(kv).usage_err()?;
    cfg.validate().usage_err()?;
    Ok(cfg)
}

fn filter(plan: &Plan, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = filter_config(&plan.config)?;
    let pairs = read_parallel(plan.input("source").usage_err()?, plan.input("target").usage_err()?).data_err()?;
    let embedder: Box<dyn SentenceEmbedder> = match (plan.inputs.get("source_vectors"), plan.inputs.get("target_vectors")) {
        (Some(s), Some(t)) => Box::new(PrecomputedEmbedder::from_files(&pairs, s, t).data_err()?),
        (None, None) => Box::new(HashingEmbedder::default()),
        _ => return Err(Failure::usage("--source-vectors and --target-vectors go together")),
    };
    let providers = Providers::new(&ScriptTagger, &CapitalizedEntities, embedder.as_ref());
    let result = run_pipeline(&pairs, &cfg, providers, plan.jobs).usage_err()?;
    write_parallel(&result.kept, plan.output("source").usage_err()?, plan.output("target").usage_err()?).data_err()?;
    write_verdicts(&result.verdicts, plan.output("verdicts").usage_err()?).data_err()?;
    writeln!(out, "before\n{}\nafter\n{}", result.before, result.after).data_err()
}

fn stats(plan: &Plan, out: &mut dyn Write) -> Result<(), Failure> {
    let pairs = read_parallel(plan.input("source").usage_err()?, plan.input("target").usage_err()?).data_err()?;
    writeln!(out, "{}", ncmt_core::corpus::compute_stats(&pairs)).data_err()
}

fn sample(plan: &Plan, out: &mut dyn Write) -> Result<(), Failure> {
    let params = sampling_params(&plan.config)?;
    let model = load_table(plan.input("model").usage_err()?, None)?;
    let mono = read_lines(plan.input("input").usage_err()?).data_err()?;
    let bt = backtranslate_corpus(&model, &mono, &params, plan.jobs);
    write_parallel(&bt.pairs, plan.output("source").usage_err()?, plan.output("target").usage_err()?).data_err()?;
    let log: Vec<String> = bt.skipped.iter().map(|s| format!("{}\t{}", s.line + 1, s.reason)).collect();
    write_lines(plan.output("skipped").usage_err()?, log.iter().map(String::as_str)).data_err()?;
    writeln!(out, "sampled\t{}\nskipped\t{}", bt.pairs.len(), bt.skipped.len()).data_err()
}

fn load_table(path: &Path, vocab: Option<std::sync::Arc<Vocabulary>>) -> Result<TableScorer, Failure> {
    TableScorer::load_with_vocab(path, vocab)
        .with_context(|| format!("cannot load model {}", path.display()))
        .data_err()
}

struct Models {
    direct: TableScorer,
    channel: RestrictedScorer<TableScorer>,
    lm: TableScorer,
}

fn load_models(plan: &Plan, cm_top_k: usize) -> Result<Models, Failure> {
    let direct = load_table(plan.input("direct").usage_err()?, None)?;
    let vocab = Some(direct.shared_vocab());
    let channel = load_table(plan.input("channel").usage_err()?, vocab.clone())?;
    let lm = load_table(plan.input("lm").usage_err()?, vocab)?;
    let freqs = match plan.inputs.get("channel_frequencies") {
        Some(path) => {
            let lines = read_lines(path).data_err()?;
            Some(count_frequencies(lines.iter().map(String::as_str)))
        }
        None => None,
    };
    Ok(Models {
        channel: restrict_output_vocab(channel, cm_top_k, freqs.as_ref()),
        direct,
        lm,
    })
}

fn encode_sources(vocab: &Vocabulary, path: &Path) -> Result<Vec<Vec<TokenId>>, Failure> {
    read_lines(path)
        .data_err()?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            vocab
                .encode(&tokens)
                .with_context(|| format!("{} line {}", path.display(), i + 1))
                .data_err()
        })
        .collect()
}

fn collect_results(results: Vec<Result<DecodeResult, ncmt_core::reranker::DecodeError>>) -> anyhow::Result<Vec<DecodeResult>> {
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("decoding line {}", i + 1)))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn dump_row(vocab: &Vocabulary, line: usize, rank: usize, c: &Candidate) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        line + 1,
        rank + 1,
        vocab.decode_joined(&c.tokens),
        c.direct_lp,
        fmt_opt(c.channel_lp),
        fmt_opt(c.lm_lp),
        fmt_opt(c.combined)
    )
}

fn decode(plan: &Plan, noisy_channel: bool) -> Result<(), Failure> {
    let params = decoding_params(DecodingParams::default(), &plan.config)?;
    let (direct, models) = if noisy_channel {
        let m = load_models(plan, params.cm_top_k)?;
        (None, Some(m))
    } else {
        (Some(load_table(plan.input("direct").usage_err()?, None)?), None)
    };
    let direct_ref: &TableScorer = match (&direct, &models) {
        (Some(d), _) => d,
        (None, Some(m)) => &m.direct,
        (None, None) => unreachable!("one model set is always loaded"),
    };
    let vocab = direct_ref.vocab();
    let sources = encode_sources(vocab, plan.input("input").usage_err()?)?;
    let pair = models
        .as_ref()
        .map(|m| (&m.channel as &dyn SequenceScorer, &m.lm as &dyn SequenceScorer));
    let results = collect_results(decode_corpus(direct_ref, pair, &sources, &params, plan.jobs)).data_err()?;
    let hyps: Vec<String> = results.iter().map(|r| vocab.decode_joined(&r.best)).collect();
    write_lines(plan.output("output").usage_err()?, hyps.iter().map(String::as_str)).data_err()?;
    if let Some(path) = plan.outputs.get("dump") {
        let mut rows = vec!["line\trank\thypothesis\tdirect\tchannel\tlm\tcombined".to_string()];
        for (i, r) in results.iter().enumerate() {
            rows.extend(r.beam.iter().enumerate().map(|(k, c)| dump_row(vocab, i, k, c)));
        }
        write_lines(path, rows.iter().map(String::as_str)).data_err()?;
    }
    Ok(())
}

fn score_cmd(plan: &Plan, out: &mut dyn Write) -> Result<(), Failure> {
    let (metric, cfg) = metric_config(&plan.config)?;
    let hyps = read_lines(plan.input("hypotheses").usage_err()?).data_err()?;
    let refs = read_lines(plan.input("references").usage_err()?).data_err()?;
    let value = score(metric, &hyps, &refs, &cfg).data_err()?;
    let text = format!("{value:.2}\n{}", cfg.signature(metric));
    if let Some(path) = plan.outputs.get("output") {
        write_lines(path, text.lines()).data_err()?;
    }
    writeln!(out, "{text}").data_err()
}

/// Keys a sweep config file may hold besides the sweep's own: the decoding
/// settings that stay fixed across trials.
pub const SWEEP_DECODING_KEYS: [&str; 6] = ["beam", "k2", "length_penalty", "cm_top_k", "max_len", "rescore"];

fn sweep(plan: &Plan, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = sweep_config(&subset(&plan.config, &SweepConfig::KEYS))?;
    let base = decoding_params(DecodingParams::default(), &subset(&plan.config, &SWEEP_DECODING_KEYS))?;
    let models = load_models(plan, base.cm_top_k)?;
    let vocab = models.direct.vocab();
    let sources = encode_sources(vocab, plan.input("dev_source").usage_err()?)?;
    let refs = read_lines(plan.input("dev_reference").usage_err()?).data_err()?;
    if refs.len() != sources.len() {
        return Err(Failure::Data(anyhow!(
            "dev source has {} lines but dev reference has {}",
            sources.len(),
            refs.len()
        )));
    }
    let metric_cfg = MetricConfig::default();
    let objective = |delta_ch: f64, delta_lm: f64| -> anyhow::Result<f64> {
        let params = DecodingParams {
            delta_ch,
            delta_lm,
            ..base.clone()
        };
        let pair = Some((&models.channel as &dyn SequenceScorer, &models.lm as &dyn SequenceScorer));
        let results = collect_results(decode_corpus(&models.direct, pair, &sources, &params, 1))?;
        let hyps: Vec<String> = results.iter().map(|r| vocab.decode_joined(&r.best)).collect();
        Ok(bleu(&hyps, &refs, &metric_cfg)?.score)
    };
    let result = run_sweep_with(
        |x, y| objective(x, y).map_err(|e| format!("{e:#}")),
        &cfg,
        &mut GaussianProposer::new(cfg.clone()),
        plan.jobs,
    )
    .data_err()?;
    let rows: Vec<String> = result
        .trials
        .iter()
        .map(|t| format!("{}\t{}\t{}\t{}", t.index, t.delta_ch, t.delta_lm, t.objective))
        .collect();
    write_lines(plan.output("trials").usage_err()?, rows.iter().map(String::as_str)).data_err()?;
    let b = result.best;
    writeln!(out, "best\t{}\t{}\t{}\t{}", b.index, b.delta_ch, b.delta_lm, b.objective).data_err()?;
    match regression_diagnostics(&result.trials) {
        Ok(d) => writeln!(
            out,
            "fit_delta_ch\tslope={}\tintercept={}\nfit_delta_lm\tslope={}\tintercept={}",
            d.delta_ch.slope, d.delta_ch.intercept, d.delta_lm.slope, d.delta_lm.intercept
        )
        .data_err(),
        Err(e) => writeln!(out, "fit unavailable: {e}").data_err(),
    }
}
