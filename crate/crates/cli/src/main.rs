mod error;
mod plan;
mod run;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ncmt_core::config::KvConfig;
use ncmt_core::filters::FilterConfig;
use ncmt_core::metrics::MetricConfig;
use ncmt_core::reranker::{DecodingParams, Direction, RescoreMode};
use ncmt_core::sampler::SamplingParams;
use ncmt_core::sweep::SweepConfig;

use error::{Classify, Failure};
use plan::{ci_mode, with_suffix, Plan, CI_ENV, VERSION};

#[derive(Parser)]
#[command(name = "ncmt", version, about = "Corpus filtering, backtranslation sampling, noisy-channel decoding and scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Where to write the run manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a parallel corpus
    Filter(FilterArgs),
    /// Count pairs and words of a parallel corpus
    Stats(StatsArgs),
    /// Backtranslate monolingual text by sampling
    Sample(SampleArgs),
    /// Beam search with noisy-channel reranking
    Decode(DecodeArgs),
    /// Beam search with the direct model only
    DecodeDirectOnly(DirectArgs),
    /// Corpus BLEU or chrF++
    Score(ScoreArgs),
    /// Random search over the reranking weights
    Sweep(SweepArgs),
    /// Re-run a recorded manifest
    Replay(ReplayArgs),
}

#[derive(Args)]
struct FilterArgs {
    source: PathBuf,
    target: PathBuf,
    #[arg(long)]
    out_prefix: PathBuf,
    #[arg(long)]
    max_chars: Option<usize>,
    #[arg(long)]
    max_token_chars: Option<usize>,
    #[arg(long)]
    max_char_token_ratio: Option<f64>,
    #[arg(long)]
    max_pair_token_ratio: Option<f64>,
    #[arg(long)]
    max_pair_length_ratio: Option<f64>,
    #[arg(long)]
    max_foreign_token_fraction: Option<f64>,
    #[arg(long)]
    embed_min: Option<f64>,
    #[arg(long)]
    embed_max: Option<f64>,
    /// Comma-separated rule names, in application order
    #[arg(long)]
    enabled_rules: Option<String>,
    /// Precomputed source embeddings, one vector per line
    #[arg(long)]
    source_vectors: Option<PathBuf>,
    #[arg(long)]
    target_vectors: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StatsArgs {
    source: PathBuf,
    target: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SampleArgs {
    /// Monolingual text, one sentence per line
    input: PathBuf,
    /// Reverse-direction model table
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_prefix: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DecodeFlags {
    /// Start from a direction preset before the config file
    #[arg(long)]
    preset: Option<Direction>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    length_penalty: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct ChannelFlags {
    #[arg(long)]
    channel: PathBuf,
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    cm_top_k: Option<usize>,
    /// Text whose token counts rank the channel output vocabulary
    #[arg(long)]
    channel_frequencies: Option<PathBuf>,
    #[arg(long)]
    rescore: Option<RescoreMode>,
}

#[derive(Args)]
struct DecodeArgs {
    input: PathBuf,
    #[arg(long)]
    direct: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Tab-separated scores of every final beam entry
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    delta_ch: Option<f64>,
    #[arg(long)]
    delta_lm: Option<f64>,
    #[command(flatten)]
    decoding: DecodeFlags,
    #[command(flatten)]
    channel: ChannelFlags,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DirectArgs {
    input: PathBuf,
    #[arg(long)]
    direct: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dump: Option<PathBuf>,
    #[command(flatten)]
    decoding: DecodeFlags,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScoreArgs {
    hypotheses: PathBuf,
    references: PathBuf,
    #[arg(long)]
    metric: Option<ncmt_core::metrics::Metric>,
    /// Also write the score and signature here
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    direct: PathBuf,
    #[arg(long)]
    dev_source: PathBuf,
    #[arg(long)]
    dev_reference: PathBuf,
    /// Trials as index, delta_ch, delta_lm, objective
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    recenter_every: Option<usize>,
    #[command(flatten)]
    decoding: DecodeFlags,
    #[command(flatten)]
    channel: ChannelFlags,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

fn load_file(path: &Option<PathBuf>) -> Result<KvConfig, Failure> {
    match path {
        Some(p) => KvConfig::load(p).usage_err(),
        None => Ok(KvConfig::default()),
    }
}

fn set<T: std::fmt::Display>(kv: &mut KvConfig, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        kv.insert(key, v);
    }
}

fn require_seed(flag: Option<u64>, file: &KvConfig) -> Result<(), Failure> {
    if ci_mode() && flag.is_none() && file.get("seed").is_none() {
        return Err(Failure::usage(format!("--seed is required when {CI_ENV} is set")));
    }
    Ok(())
}

fn finish(mut plan: Plan, common: &Common, default_manifest: PathBuf) -> Plan {
    let path = common.manifest.clone().unwrap_or(default_manifest);
    plan.outputs.insert("manifest".into(), path);
    plan
}

fn add_decode_flags(kv: &mut KvConfig, f: &DecodeFlags) {
    set(kv, "beam", &f.beam);
    set(kv, "k2", &f.k2);
    set(kv, "length_penalty", &f.length_penalty);
    set(kv, "max_len", &f.max_len);
}

fn add_channel(plan: &mut Plan, kv: &mut KvConfig, c: &ChannelFlags) {
    plan.inputs.insert("channel".into(), c.channel.clone());
    plan.inputs.insert("lm".into(), c.lm.clone());
    if let Some(p) = &c.channel_frequencies {
        plan.inputs.insert("channel_frequencies".into(), p.clone());
    }
    set(kv, "cm_top_k", &c.cm_top_k);
    set(kv, "rescore", &c.rescore);
}

fn decoding_base(f: &DecodeFlags) -> DecodingParams {
    f.preset.map(DecodingParams::preset).unwrap_or_default()
}

fn resolve(command: Command) -> Result<Plan, Failure> {
    match command {
        Command::Filter(a) => {
            let mut cfg = FilterConfig::default();
            cfg.apply(&load_file(&a.common.config)?).usage_err()?;
            let mut flags = KvConfig::default();
            set(&mut flags, "max_chars", &a.max_chars);
            set(&mut flags, "max_token_chars", &a.max_token_chars);
            set(&mut flags, "max_char_token_ratio", &a.max_char_token_ratio);
            set(&mut flags, "max_pair_token_ratio", &a.max_pair_token_ratio);
            set(&mut flags, "max_pair_length_ratio", &a.max_pair_length_ratio);
            set(&mut flags, "max_foreign_token_fraction", &a.max_foreign_token_fraction);
            set(&mut flags, "embed_min", &a.embed_min);
            set(&mut flags, "embed_max", &a.embed_max);
            set(&mut flags, "enabled_rules", &a.enabled_rules);
            cfg.apply(&flags).usage_err()?;
            cfg.validate().usage_err()?;
            let mut plan = Plan::new("filter", a.common.jobs);
            plan.config = cfg.to_kv();
            plan.inputs.insert("source".into(), a.source);
            plan.inputs.insert("target".into(), a.target);
            match (a.source_vectors, a.target_vectors) {
                (Some(s), Some(t)) => {
                    plan.inputs.insert("source_vectors".into(), s);
                    plan.inputs.insert("target_vectors".into(), t);
                }
                (None, None) => {}
                _ => return Err(Failure::usage("--source-vectors and --target-vectors go together")),
            }
            for ext in ["src", "tgt", "verdicts"] {
                let key = match ext {
                    "src" => "source",
                    "tgt" => "target",
                    _ => "verdicts",
                };
                plan.outputs.insert(key.into(), with_suffix(&a.out_prefix, ext));
            }
            Ok(finish(plan, &a.common, with_suffix(&a.out_prefix, "manifest")))
        }
        Command::Stats(a) => {
            if a.common.config.is_some() {
                return Err(Failure::usage("stats takes no --config"));
            }
            let mut plan = Plan::new("stats", a.common.jobs);
            plan.inputs.insert("source".into(), a.source);
            plan.inputs.insert("target".into(), a.target);
            Ok(finish(plan, &a.common, PathBuf::from("stats.manifest")))
        }
        Command::Sample(a) => {
            let file = load_file(&a.common.config)?;
            require_seed(a.seed, &file)?;
            let mut params = SamplingParams::default();
            params.apply(&file).usage_err()?;
            let mut flags = KvConfig::default();
            set(&mut flags, "top_k", &a.top_k);
            set(&mut flags, "top_p", &a.top_p);
            set(&mut flags, "temperature", &a.temperature);
            set(&mut flags, "max_len", &a.max_len);
            set(&mut flags, "seed", &a.seed);
            params.apply(&flags).usage_err()?;
            params.validate().usage_err()?;
            let mut plan = Plan::new("sample", a.common.jobs);
            plan.seed = Some(params.seed);
            plan.config = params.to_kv();
            plan.inputs.insert("model".into(), a.model);
            plan.inputs.insert("input".into(), a.input);
            plan.outputs.insert("source".into(), with_suffix(&a.out_prefix, "src"));
            plan.outputs.insert("target".into(), with_suffix(&a.out_prefix, "tgt"));
            plan.outputs.insert("skipped".into(), with_suffix(&a.out_prefix, "skipped"));
            Ok(finish(plan, &a.common, with_suffix(&a.out_prefix, "manifest")))
        }
        Command::Decode(a) => {
            let mut plan = Plan::new("decode", a.common.jobs);
            let mut flags = KvConfig::default();
            add_decode_flags(&mut flags, &a.decoding);
            set(&mut flags, "delta_ch", &a.delta_ch);
            set(&mut flags, "delta_lm", &a.delta_lm);
            add_channel(&mut plan, &mut flags, &a.channel);
            let params = layered_decoding(decoding_base(&a.decoding), &a.common.config, &flags)?;
            plan.config = params.to_kv();
            decode_paths(&mut plan, a.direct, a.input, &a.output, a.dump);
            Ok(finish(plan, &a.common, with_suffix(&a.output, "manifest")))
        }
        Command::DecodeDirectOnly(a) => {
            let mut plan = Plan::new("decode-direct-only", a.common.jobs);
            let mut flags = KvConfig::default();
            add_decode_flags(&mut flags, &a.decoding);
            let params = layered_decoding(decoding_base(&a.decoding), &a.common.config, &flags)?;
            plan.config = params.to_kv();
            decode_paths(&mut plan, a.direct, a.input, &a.output, a.dump);
            Ok(finish(plan, &a.common, with_suffix(&a.output, "manifest")))
        }
        Command::Score(a) => {
            let mut kv = KvConfig::default();
            kv.insert("metric", ncmt_core::metrics::Metric::Bleu);
            for (k, v) in MetricConfig::default().to_kv().iter() {
                kv.insert(k, v);
            }
            let file = load_file(&a.common.config)?;
            let mut keys = MetricConfig::KEYS.to_vec();
            keys.push("metric");
            file.check_keys(&keys).usage_err()?;
            let mut flags = KvConfig::default();
            set(&mut flags, "metric", &a.metric);
            for (k, v) in file.iter().chain(flags.iter()) {
                kv.insert(k, v);
            }
            run::metric_config(&kv)?;
            let mut plan = Plan::new("score", a.common.jobs);
            plan.config = kv;
            plan.inputs.insert("hypotheses".into(), a.hypotheses);
            plan.inputs.insert("references".into(), a.references);
            if let Some(out) = a.output {
                plan.outputs.insert("output".into(), out);
            }
            Ok(finish(plan, &a.common, PathBuf::from("score.manifest")))
        }
        Command::Sweep(a) => {
            let file = load_file(&a.common.config)?;
            require_seed(a.seed, &file)?;
            let mut keys = SweepConfig::KEYS.to_vec();
            keys.extend(run::SWEEP_DECODING_KEYS);
            file.check_keys(&keys).usage_err()?;
            let mut plan = Plan::new("sweep", a.common.jobs);
            let mut flags = KvConfig::default();
            set(&mut flags, "iterations", &a.iterations);
            set(&mut flags, "seed", &a.seed);
            set(&mut flags, "recenter_every", &a.recenter_every);
            add_decode_flags(&mut flags, &a.decoding);
            add_channel(&mut plan, &mut flags, &a.channel);
            let mut sweep = SweepConfig::default();
            sweep.apply(&run::subset(&file, &SweepConfig::KEYS)).usage_err()?;
            sweep.apply(&run::subset(&flags, &SweepConfig::KEYS)).usage_err()?;
            sweep.validate().usage_err()?;
            let mut decoding = decoding_base(&a.decoding);
            decoding.apply(&run::subset(&file, &run::SWEEP_DECODING_KEYS)).usage_err()?;
            decoding.apply(&run::subset(&flags, &run::SWEEP_DECODING_KEYS)).usage_err()?;
            decoding.validate().usage_err()?;
            plan.seed = Some(sweep.seed);
            plan.config = sweep.to_kv();
            for (k, v) in run::subset(&decoding.to_kv(), &run::SWEEP_DECODING_KEYS).iter() {
                plan.config.insert(k, v);
            }
            plan.inputs.insert("direct".into(), a.direct);
            plan.inputs.insert("dev_source".into(), a.dev_source);
            plan.inputs.insert("dev_reference".into(), a.dev_reference);
            plan.outputs.insert("trials".into(), a.output.clone());
            Ok(finish(plan, &a.common, with_suffix(&a.output, "manifest")))
        }
        Command::Replay(_) => unreachable!("replay is handled before resolution"),
    }
}

fn layered_decoding(base: DecodingParams, file: &Option<PathBuf>, flags: &KvConfig) -> Result<DecodingParams, Failure> {
    let mut params = base;
    params.apply(&load_file(file)?).usage_err()?;
    params.apply(flags).usage_err()?;
    params.validate().usage_err()?;
    Ok(params)
}

fn decode_paths(plan: &mut Plan, direct: PathBuf, input: PathBuf, output: &Path, dump: Option<PathBuf>) {
    plan.inputs.insert("direct".into(), direct);
    plan.inputs.insert("input".into(), input);
    plan.outputs.insert("output".into(), output.to_path_buf());
    if let Some(d) = dump {
        plan.outputs.insert("dump".into(), d);
    }
}

fn run_plan(plan: &Plan) -> Result<(), Failure> {
    let start = Instant::now();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    run::execute(plan, &mut out)?;
    out.flush().data_err()?;
    let duration = (!ci_mode()).then(|| start.elapsed().as_secs_f64());
    plan::write_manifest(plan, duration).data_err()
}

fn dispatch(command: Command) -> Result<(), Failure> {
    if let Command::Replay(a) = command {
        let (plan, version) = plan::read_manifest(&a.manifest).usage_err()?;
        if !run::SUBCOMMANDS.contains(&plan.subcommand.as_str()) {
            return Err(Failure::usage(format!("manifest names unknown subcommand '{}'", plan.subcommand)));
        }
        if version != VERSION {
            eprintln!("warning: manifest written by version {version}, running {VERSION}");
        }
        return run_plan(&plan);
    }
    run_plan(&resolve(command)?)
}

fn main_with(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn main() {
    std::process::exit(main_with(std::env::args_os()));
}
