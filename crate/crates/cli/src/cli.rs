//! Command-line interface.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use termforge_core::constraints::applied_from_tsv;
use termforge_core::eval::{bleu, term_recall, Tokenization};
use termforge_core::io::read_lines;
use termforge_core::ngram_lm::{select_top, NGramModel};

use crate::config::PipelineConfig;
use crate::stages::{run_pipeline, run_stage, StageOptions, STAGES};
use crate::toy::write_toy_data;

#[derive(Debug, Parser)]
#[command(name = "termforge", version, about = "Terminology-constrained backtranslation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Config override `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the toy corpora and a matching pipeline.json.
    ToyData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Parse and check a config without running anything.
    Validate(Common),
    /// Run every stage in order.
    Pipeline(Common),
    /// Run one stage by name.
    Run {
        stage: String,
        #[command(flatten)]
        common: Common,
    },
    FilterFeatures(Common),
    FilterTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    FilterSelect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        round_size: Option<usize>,
    },
    FilterApply {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: Option<f64>,
    },
    BpeLearn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        merges: Option<usize>,
    },
    BpeApply(Common),
    LmTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        discount: Option<f64>,
    },
    Align {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        tension: Option<f64>,
        #[arg(long)]
        heuristic: Option<String>,
    },
    Phrasex {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        prob_threshold: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        min_occurrence: Option<usize>,
    },
    Constraints {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        copy_min_count: Option<usize>,
    },
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        constrained_beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        ne_gated: Option<bool>,
    },
    Backtranslate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mono: Option<PathBuf>,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tok: Option<String>,
    },
    /// Corpus BLEU of a hypothesis file against one reference file.
    Bleu {
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value = "13a")]
        tok: String,
    },
    /// Share of applied constraints whose target appears in the hypotheses.
    TermRecall {
        hyp: PathBuf,
        #[arg(long)]
        constraints_log: PathBuf,
    },
    /// Print the N most in-domain lines of a corpus by Moore-Lewis score.
    MlSelect {
        input: PathBuf,
        #[arg(long)]
        top: usize,
        #[arg(long)]
        in_lm: PathBuf,
        #[arg(long)]
        out_lm: PathBuf,
    },
}

fn abs(p: &Path) -> Result<String> {
    let p = std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?;
    Ok(serde_json::Value::String(p.display().to_string()).to_string())
}

struct Overrides(Vec<String>);

impl Overrides {
    fn new(common: &Common) -> Self {
        Overrides(common.set.clone())
    }

    fn add<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.0.push(format!("{key}={}", v.to_string()));
        }
    }

    fn add_str(&mut self, key: &str, value: Option<String>) {
        self.add(key, value.map(|v| serde_json::Value::String(v).to_string()));
    }
}

fn load(common: &Common, o: &Overrides) -> Result<PipelineConfig> {
    PipelineConfig::load(&common.config, &o.0)
}

fn stage(name: &str, common: &Common, o: Overrides, opts: StageOptions) -> Result<()> {
    let cfg = load(common, &o)?;
    let m = run_stage(name, &cfg, &opts)?;
    println!("{name}: {} outputs in {}", m.outputs.len(), cfg.out_dir.join(name).display());
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ToyData { out, seed } => {
            write_toy_data(&out, seed)?;
            println!("toy data written to {}", out.display());
        }
        Command::Validate(c) => {
            let cfg = load(&c, &Overrides::new(&c))?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
        Command::Pipeline(c) => {
            let cfg = load(&c, &Overrides::new(&c))?;
            for m in run_pipeline(&cfg)? {
                println!("{}: {} outputs", m.stage, m.outputs.len());
            }
            let report = cfg.out_dir.join("eval").join("eval.txt");
            print!("{}", read_file(&report)?);
        }
        Command::Run { stage: name, common } => {
            if !STAGES.contains(&name.as_str()) {
                bail!("unknown stage {name:?}; expected one of: {}", STAGES.join(", "));
            }
            let o = Overrides::new(&common);
            stage(&name, &common, o, StageOptions::default())?;
        }
        Command::FilterFeatures(c) => stage("filter-features", &c, Overrides::new(&c), StageOptions::default())?,
        Command::FilterTrain { common, trees, depth, seed } => {
            let mut o = Overrides::new(&common);
            o.add("filter.trees", trees);
            o.add("filter.max_depth", depth);
            o.add("seed", seed);
            stage("filter-train", &common, o, StageOptions::default())?;
        }
        Command::FilterSelect { common, round_size } => {
            let mut o = Overrides::new(&common);
            o.add("filter.round_size", round_size);
            stage("filter-select", &common, o, StageOptions::default())?;
        }
        Command::FilterApply { common, threshold } => {
            let mut o = Overrides::new(&common);
            o.add("filter.threshold", threshold);
            stage("filter-apply", &common, o, StageOptions::default())?;
        }
        Command::BpeLearn { common, merges } => {
            let mut o = Overrides::new(&common);
            o.add("bpe.merges", merges);
            stage("bpe-learn", &common, o, StageOptions::default())?;
        }
        Command::BpeApply(c) => stage("bpe-apply", &c, Overrides::new(&c), StageOptions::default())?,
        Command::LmTrain { common, order, discount } => {
            let mut o = Overrides::new(&common);
            o.add("lm.order", order);
            o.add("lm.discount", discount);
            stage("lm-train", &common, o, StageOptions::default())?;
        }
        Command::Align { common, iterations, tension, heuristic } => {
            let mut o = Overrides::new(&common);
            o.add("align.iterations", iterations);
            o.add("align.tension", tension);
            o.add_str("align.heuristic", heuristic);
            stage("align", &common, o, StageOptions::default())?;
        }
        Command::Phrasex { common, max_len, prob_threshold, top_k, min_occurrence } => {
            let mut o = Overrides::new(&common);
            o.add("phrasex.max_len", max_len);
            o.add("phrasex.prob_threshold", prob_threshold);
            o.add("phrasex.domain_top_k", top_k);
            o.add("phrasex.min_occurrence", min_occurrence);
            stage("phrasex", &common, o, StageOptions::default())?;
        }
        Command::Constraints { common, copy_min_count } => {
            let mut o = Overrides::new(&common);
            o.add("constraints.copy_min_count", copy_min_count);
            stage("constraints", &common, o, StageOptions::default())?;
        }
        Command::Decode { common, beam, constrained_beam, max_len, constraints, ne_gated } => {
            let mut o = Overrides::new(&common);
            o.add("decode.beam", beam);
            o.add("decode.constrained_beam", constrained_beam);
            o.add("decode.max_len", max_len);
            o.add("decode.ne_gated", ne_gated);
            let opts = StageOptions {
                constraints,
                ..StageOptions::default()
            };
            stage("decode", &common, o, opts)?;
        }
        Command::Backtranslate { common, mono, top, mode, beam, constraints, stats_out } => {
            let mut o = Overrides::new(&common);
            o.add("data.mono_src", mono.as_deref().map(abs).transpose()?);
            o.add("backtranslate.top_n", top);
            o.add_str("backtranslate.mode", mode.clone());
            if let Some(b) = beam {
                let key = match mode.as_deref() {
                    Some("unconstrained") => "decode.beam",
                    _ => "decode.constrained_beam",
                };
                o.add(key, Some(b));
            }
            let opts = StageOptions { constraints, stats_out };
            stage("backtranslate", &common, o, opts)?;
        }
        Command::Eval { common, tok } => {
            let mut o = Overrides::new(&common);
            o.add_str("eval.tokenize", tok);
            stage("eval", &common, o, StageOptions::default())?;
        }
        Command::Bleu { hyp, reference, tok } => {
            let tok: Tokenization = tok.parse().map_err(|e| anyhow::anyhow!("--tok: {e}"))?;
            let hyps = read_lines(&hyp)?;
            let refs = read_lines(&reference)?;
            println!("{}", bleu(&hyps, &refs, tok)?);
        }
        Command::TermRecall { hyp, constraints_log } => {
            let hyps: Vec<Vec<String>> = read_lines(&hyp)?
                .iter()
                .map(|l| termforge_core::io::split_tokens(l))
                .collect();
            let log = read_file(&constraints_log)?;
            let applied = applied_from_tsv(&log, hyps.len(), &constraints_log.display().to_string())?;
            println!("{}", term_recall(&hyps, &applied)?);
        }
        Command::MlSelect { input, top, in_lm, out_lm } => {
            let in_lm = NGramModel::from_text(&read_file(&in_lm)?, &in_lm.display().to_string())?;
            let out_lm = NGramModel::from_text(&read_file(&out_lm)?, &out_lm.display().to_string())?;
            let lines = read_lines(&input)?;
            for i in select_top(&lines, &in_lm, &out_lm, top) {
                println!("{}", lines[i]);
            }
        }
    }
    Ok(())
}
