//! Pipeline stages. Each stage reads the config and earlier stage outputs
//! under `out_dir/<stage>/`, and publishes its own directory atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use termforge_core::align::{symmetrize, train_diag, train_model1, Alignment, SentencePair, TranslationTable};
use termforge_core::backtranslate::{max_len_for, run_backtranslation, BtMode, BtParams};
use termforge_core::constraints::{
    applied_from_tsv, applied_to_tsv, count_ne_phrases, counts_to_tsv, extract_copy_candidates, load_constraints,
    match_all, Constraint, ConstraintSet, Mode, NeTagger,
};
use termforge_core::corpusfilter::{
    apply_filter, extract_all, feedback_round, features_from_tsv, features_to_tsv, labels_from_tsv, labels_to_tsv,
    train_on_features, FeatureVector, FilterResources, ForestModel, ForestParams, LangId,
};
use termforge_core::decoder::{beam_search, constrained_beam_search, Hypothesis, ToyScorer};
use termforge_core::eval::{bleu, term_recall, BleuScore};
use termforge_core::io::split_tokens;
use termforge_core::ngram_lm::{lm_train, NGramModel};
use termforge_core::phrasex::{
    build_phrase_table, filter_by_domain, filter_by_occurrence, filter_by_prob, PhraseTable,
};
use termforge_core::textproc::{bpe_apply, bpe_learn, word_counts, BpeModel};
use termforge_core::Error as CoreError;

use crate::config::PipelineConfig;
use crate::manifest::{stage_seed, Manifest, StageDir};

/// Every stage, in pipeline order.
pub const STAGES: &[&str] = &[
    "filter-features",
    "filter-train",
    "filter-select",
    "filter-apply",
    "bpe-learn",
    "bpe-apply",
    "lm-train",
    "align",
    "phrasex",
    "constraints",
    "decode",
    "backtranslate",
    "eval",
];

/// Per-invocation inputs that are not part of the config.
#[derive(Debug, Clone, Default)]
pub struct StageOptions {
    /// Constraint file replacing the `constraints` stage output.
    pub constraints: Option<PathBuf>,
    /// Extra copy of `stats.json` written by `backtranslate`.
    pub stats_out: Option<PathBuf>,
}

pub fn run_stage(name: &str, cfg: &PipelineConfig, opts: &StageOptions) -> Result<Manifest> {
    log::info!("stage {name}: starting");
    let manifest = match name {
        "filter-features" => filter_features(cfg)?,
        "filter-train" => filter_train(cfg)?,
        "filter-select" => filter_select(cfg)?,
        "filter-apply" => filter_apply(cfg)?,
        "bpe-learn" => bpe_learn_stage(cfg)?,
        "bpe-apply" => bpe_apply_stage(cfg)?,
        "lm-train" => lm_train_stage(cfg)?,
        "align" => align_stage(cfg)?,
        "phrasex" => phrasex_stage(cfg)?,
        "constraints" => constraints_stage(cfg)?,
        "decode" => decode_stage(cfg, opts)?,
        "backtranslate" => backtranslate_stage(cfg, opts)?,
        "eval" => eval_stage(cfg)?,
        _ => bail!("unknown stage {name:?}; expected one of: {}", STAGES.join(", ")),
    };
    log::info!("stage {name}: wrote {} outputs", manifest.outputs.len());
    Ok(manifest)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<Manifest>> {
    STAGES
        .iter()
        .map(|s| run_stage(s, cfg, &StageOptions::default()).with_context(|| format!("stage {s} failed")))
        .collect()
}

fn open(cfg: &PipelineConfig, stage: &str, params: Value) -> Result<StageDir> {
    StageDir::create(&cfg.out_dir, stage, stage_seed(stage, cfg.seed), params)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config blocks serialize")
}

/// Reads `file` from an earlier stage's directory.
fn upstream(st: &mut StageDir, cfg: &PipelineConfig, stage: &str, file: &str) -> Result<String> {
    let path = cfg.out_dir.join(stage).join(file);
    if !path.is_file() {
        bail!("missing {}; run stage `{stage}` first", path.display());
    }
    st.read(&format!("{stage}/{file}"), &path)
}

fn tokenized(text: &str) -> Vec<Vec<String>> {
    text.lines().map(split_tokens).collect()
}

fn zip_bitext(src: Vec<Vec<String>>, tgt: Vec<Vec<String>>) -> Result<Vec<SentencePair>> {
    ensure!(
        src.len() == tgt.len(),
        "bitext sides differ in length: {} source lines, {} target lines",
        src.len(),
        tgt.len()
    );
    Ok(src.into_iter().zip(tgt).collect())
}

fn nonempty(bitext: &[SentencePair]) -> Vec<SentencePair> {
    bitext.iter().filter(|(s, t)| !s.is_empty() && !t.is_empty()).cloned().collect()
}

fn swapped(bitext: &[SentencePair]) -> Vec<SentencePair> {
    bitext.iter().map(|(s, t)| (t.clone(), s.clone())).collect()
}

fn tagger(st: &mut StageDir, cfg: &PipelineConfig) -> Result<NeTagger> {
    Ok(match &cfg.data.gazetteer {
        Some(p) => NeTagger::from_gazetteer_text(&st.read("gazetteer", p)?),
        None => NeTagger::default(),
    })
}

fn filter_features(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut st = open(
        cfg,
        "filter-features",
        json!({
            "lm": to_value(&cfg.lm),
            "dict_iterations": cfg.filter.dict_iterations,
            "src_lang": cfg.src_lang,
            "tgt_lang": cfg.tgt_lang,
        }),
    )?;
    let src = st.read_tokenized("bitext_src", &cfg.data.bitext_src)?;
    let tgt = st.read_tokenized("bitext_tgt", &cfg.data.bitext_tgt)?;
    let bitext = zip_bitext(src, tgt)?;
    let mono_src_text = st.read("mono_src", &cfg.data.mono_src)?;
    let mono_tgt_text = st.read("mono_tgt", &cfg.data.mono_tgt)?;
    let mono_src = tokenized(&mono_src_text);
    let mono_tgt = tokenized(&mono_tgt_text);

    let usable = nonempty(&bitext);
    let src_lines: Vec<&str> = mono_src_text.lines().collect();
    let tgt_lines: Vec<&str> = mono_tgt_text.lines().collect();
    let res = FilterResources {
        src_lm: lm_train(&mono_src, cfg.lm.order, cfg.lm.discount)?,
        tgt_lm: lm_train(&mono_tgt, cfg.lm.order, cfg.lm.discount)?,
        dict_s2t: train_model1(&usable, cfg.filter.dict_iterations)?,
        dict_t2s: train_model1(&swapped(&usable), cfg.filter.dict_iterations)?,
        langid: LangId::train(&[(cfg.src_lang.as_str(), &src_lines[..]), (cfg.tgt_lang.as_str(), &tgt_lines[..])])?,
        src_lang: cfg.src_lang.clone(),
        tgt_lang: cfg.tgt_lang.clone(),
    };
    let rows = extract_all(&res, &bitext);
    st.write("features.tsv", &features_to_tsv(&rows))?;
    st.commit()
}

fn read_labels(st: &mut StageDir, role: &str, path: &Path, n_rows: usize) -> Result<BTreeMap<usize, bool>> {
    let text = st.read(role, path)?;
    let labels = labels_from_tsv(&text, &path.display().to_string())?;
    let mut out = BTreeMap::new();
    for (i, l) in labels {
        ensure!(i < n_rows, "{}: label index {i} beyond {n_rows} bitext lines", path.display());
        out.insert(i, l);
    }
    Ok(out)
}

fn train_labeled(rows: &[FeatureVector], labels: &BTreeMap<usize, bool>, params: &ForestParams) -> Result<ForestModel> {
    let x: Vec<FeatureVector> = labels.keys().map(|&i| rows[i]).collect();
    let y: Vec<bool> = labels.values().copied().collect();
    Ok(train_on_features(&x, &y, params)?)
}

fn agreement(forest: &ForestModel, rows: &[FeatureVector], oracle: &BTreeMap<usize, bool>) -> f64 {
    let hits = oracle.iter().filter(|(&i, &l)| (forest.score(&rows[i]) > 0.5) == l).count();
    hits as f64 / oracle.len().max(1) as f64
}

fn filter_train(cfg: &PipelineConfig) -> Result<Manifest> {
    let f = &cfg.filter;
    let mut st = open(
        cfg,
        "filter-train",
        json!({ "trees": f.trees, "max_depth": f.max_depth, "rounds": f.rounds, "round_size": f.round_size }),
    )?;
    let rows = features_from_tsv(&upstream(&mut st, cfg, "filter-features", "features.tsv")?, "features.tsv")?;
    let mut labels = read_labels(&mut st, "filter_labels", &cfg.data.filter_labels, rows.len())?;
    let oracle = match &cfg.data.filter_oracle {
        Some(p) => Some(read_labels(&mut st, "filter_oracle", p, rows.len())?),
        None => None,
    };
    let params = ForestParams {
        trees: f.trees,
        max_depth: f.max_depth,
        seed: st.seed(),
        ..ForestParams::default()
    };

    let mut log = vec!["round\tlabeled\toracle_agreement".to_owned()];
    let mut note = |round: &str, labels: &BTreeMap<usize, bool>, forest: &ForestModel| {
        let agree = oracle.as_ref().map_or("NA".to_owned(), |o| format!("{:.6}", agreement(forest, &rows, o)));
        log.push(format!("{round}\t{}\t{agree}", labels.len()));
    };
    if let Some(oracle) = &oracle {
        // Simulated expert feedback: the oracle answers for the rows the
        // current forest is least sure about.
        for round in 0..f.rounds {
            let forest = train_labeled(&rows, &labels, &params)?;
            note(&round.to_string(), &labels, &forest);
            let unlabeled: Vec<usize> = (0..rows.len()).filter(|i| !labels.contains_key(i)).collect();
            let subset: Vec<FeatureVector> = unlabeled.iter().map(|&i| rows[i]).collect();
            for k in feedback_round(&forest, &subset, f.round_size) {
                let i = unlabeled[k];
                if let Some(&l) = oracle.get(&i) {
                    labels.insert(i, l);
                }
            }
        }
    }
    let forest = train_labeled(&rows, &labels, &params)?;
    note("final", &labels, &forest);

    st.write("forest.json", &forest.to_json())?;
    st.write("labels.tsv", &labels_to_tsv(&labels.into_iter().collect::<Vec<_>>()))?;
    st.write_lines("rounds.tsv", log)?;
    st.commit()
}

fn filter_select(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut st = open(cfg, "filter-select", json!({ "round_size": cfg.filter.round_size }))?;
    let rows = features_from_tsv(&upstream(&mut st, cfg, "filter-features", "features.tsv")?, "features.tsv")?;
    let forest = ForestModel::from_json(&upstream(&mut st, cfg, "filter-train", "forest.json")?)?;
    let labels = labels_from_tsv(&upstream(&mut st, cfg, "filter-train", "labels.tsv")?, "labels.tsv")?;
    let labeled: BTreeSet<usize> = labels.iter().map(|l| l.0).collect();
    let unlabeled: Vec<usize> = (0..rows.len()).filter(|i| !labeled.contains(i)).collect();
    let subset: Vec<FeatureVector> = unlabeled.iter().map(|&i| rows[i]).collect();
    let picked = feedback_round(&forest, &subset, cfg.filter.round_size);
    st.write_lines(
        "select.tsv",
        picked.iter().map(|&k| format!("{}\t{:.6}", unlabeled[k], forest.score(&subset[k]))),
    )?;
    st.commit()
}

fn filter_apply(cfg: &PipelineConfig) -> Result<Manifest> {
    let f = &cfg.filter;
    let mut st = open(
        cfg,
        "filter-apply",
        json!({ "threshold": f.threshold, "report_thresholds": f.report_thresholds }),
    )?;
    let rows = features_from_tsv(&upstream(&mut st, cfg, "filter-features", "features.tsv")?, "features.tsv")?;
    let forest = ForestModel::from_json(&upstream(&mut st, cfg, "filter-train", "forest.json")?)?;
    let src = st.read("bitext_src", &cfg.data.bitext_src)?;
    let tgt = st.read("bitext_tgt", &cfg.data.bitext_tgt)?;
    let src: Vec<&str> = src.lines().collect();
    let tgt: Vec<&str> = tgt.lines().collect();
    ensure!(
        src.len() == rows.len() && tgt.len() == rows.len(),
        "features cover {} lines but the bitext has {}/{}",
        rows.len(),
        src.len(),
        tgt.len()
    );

    st.write_lines("scores.tsv", rows.iter().enumerate().map(|(i, r)| format!("{i}\t{:.6}", forest.score(r))))?;
    let mut kept = serde_json::Map::new();
    for &t in &f.report_thresholds {
        let idx = apply_filter(&forest, &rows, t);
        kept.insert(format!("{t}"), json!(idx.len()));
        st.write_lines(&format!("kept-{t}.txt"), idx.iter().map(usize::to_string))?;
    }
    let keep = apply_filter(&forest, &rows, f.threshold);
    ensure!(!keep.is_empty(), "no bitext line scores above threshold {}", f.threshold);
    st.write_lines("clean.src", keep.iter().map(|&i| src[i]))?;
    st.write_lines("clean.tgt", keep.iter().map(|&i| tgt[i]))?;
    let summary = json!({ "lines": rows.len(), "threshold": f.threshold, "kept": keep.len(), "kept_at": kept });
    st.write("summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    st.commit()
}

fn bpe_learn_stage(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut st = open(cfg, "bpe-learn", to_value(&cfg.bpe))?;
    for side in ["src", "tgt"] {
        let corpus = tokenized(&upstream(&mut st, cfg, "filter-apply", &format!("clean.{side}"))?);
        let model = bpe_learn(&word_counts(&corpus), cfg.bpe.merges);
        st.write(&format!("bpe.{side}"), &model.to_text())?;
    }
    st.commit()
}

fn bpe_apply_stage(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut st = open(cfg, "bpe-apply", Value::Null)?;
    let models: Vec<BpeModel> = ["src", "tgt"]
        .iter()
        .map(|side| {
            let name = format!("bpe.{side}");
            BpeModel::from_text(&upstream(&mut st, cfg, "bpe-learn", &name)?, &name).map_err(Into::into)
        })
        .collect::<Result<_>>()?;
    let segment = |model: &BpeModel, corpus: Vec<Vec<String>>| -> Vec<String> {
        corpus.par_iter().map(|s| bpe_apply(model, s).join(" ")).collect()
    };
    let clean_src = tokenized(&upstream(&mut st, cfg, "filter-apply", "clean.src")?);
    let clean_tgt = tokenized(&upstream(&mut st, cfg, "filter-apply", "clean.tgt")?);
    let test_src = st.read_tokenized("test_src", &cfg.data.test_src)?;
    st.write_lines("clean.bpe.src", segment(&models[0], clean_src))?;
    st.write_lines("clean.bpe.tgt", segment(&models[1], clean_tgt))?;
    st.write_lines("test.bpe.src", segment(&models[0], test_src))?;
    st.commit()
}

fn lm_train_stage(cfg: &PipelineConfig) -> Result<Manifest> {
    let (order, discount) = (cfg.lm.order, cfg.lm.discount);
    let mut st = open(cfg, "lm-train", to_value(&cfg.lm))?;
    let mut tgt = st.read_tokenized("mono_tgt", &cfg.data.mono_tgt)?;
    tgt.extend(tokenized(&upstream(&mut st, cfg, "filter-apply", "clean.tgt")?));
    let in_domain = st.read_tokenized("in_domain", &cfg.data.in_domain)?;
    let general = st.read_tokenized("mono_src", &cfg.data.mono_src)?;
    st.write("tgt.lm", &lm_train(&tgt, order, discount)?.to_text())?;
    st.write("in.lm", &lm_train(&in_domain, order, discount)?.to_text())?;
    st.write("out.lm", &lm_train(&general, order, discount)?.to_text())?;
    st.commit()
}

fn clean_bitext(st: &mut StageDir, cfg: &PipelineConfig) -> Result<Vec<SentencePair>> {
    let src = tokenized(&upstream(st, cfg, "filter-apply", "clean.src")?);
    let tgt = tokenized(&upstream(st, cfg, "filter-apply", "clean.tgt")?);
    zip_bitext(src, tgt)
}

fn align_stage(cfg: &PipelineConfig) -> Result<Manifest> {
    let a = &cfg.align;
    let heuristic = cfg.heuristic()?;
    let mut st = open(cfg, "align", to_value(a))?;
    let bitext = clean_bitext(&mut st, cfg)?;
    let usable = nonempty(&bitext);
    let fwd = train_diag(&usable, a.iterations, a.tension)?;
    let rev = train_diag(&swapped(&usable), a.iterations, a.tension)?;

    let links: Vec<(Alignment, Alignment, Alignment)> = bitext
        .par_iter()
        .map(|(s, t)| {
            if s.is_empty() || t.is_empty() {
                let none = Alignment::new([]);
                return Ok((none.clone(), none.clone(), none));
            }
            let f = fwd.align(s, t);
            let r = rev.align(t, s).transpose();
            let sym = symmetrize(&f, &r, s.len(), t.len(), heuristic)?;
            Ok((f, r, sym))
        })
        .collect::<std::result::Result<_, CoreError>>()?;

    st.write_lines("forward.align", links.iter().map(|l| l.0.to_string()))?;
    st.write_lines("reverse.align", links.iter().map(|l| l.1.to_string()))?;
    st.write_lines("sym.align", links.iter().map(|l| l.2.to_string()))?;
    st.write("lex.s2t.tsv", &fwd.table.to_tsv())?;
    st.write("lex.t2s.tsv", &rev.table.to_tsv())?;
    st.commit()
}

fn load_lm(st: &mut StageDir, cfg: &PipelineConfig, name: &str) -> Result<NGramModel> {
    Ok(NGramModel::from_text(&upstream(st, cfg, "lm-train", name)?, name)?)
}

fn phrasex_stage(cfg: &PipelineConfig) -> Result<Manifest> {
    let p = &cfg.phrasex;
    let mut st = open(cfg, "phrasex", to_value(p))?;
    let bitext = clean_bitext(&mut st, cfg)?;
    let aligns: Vec<Alignment> = upstream(&mut st, cfg, "align", "sym.align")?
        .lines()
        .enumerate()
        .map(|(n, l)| l.parse().map_err(|e| anyhow::anyhow!("sym.align line {}: {e}", n + 1)))
        .collect::<Result<_>>()?;
    let in_lm = load_lm(&mut st, cfg, "in.lm")?;
    let out_lm = load_lm(&mut st, cfg, "out.lm")?;
    let mono_tgt = st.read_tokenized("mono_tgt", &cfg.data.mono_tgt)?;

    let table = build_phrase_table(&bitext, &aligns, p.max_len)?;
    let by_prob = filter_by_prob(&table, p.prob_threshold);
    let by_domain = filter_by_domain(&by_prob, &in_lm, &out_lm, p.domain_top_k);
    let kept = filter_by_occurrence(&by_domain, &mono_tgt, p.min_occurrence);
    st.write("phrases.all.tsv", &table.to_tsv())?;
    st.write("phrases.prob.tsv", &by_prob.to_tsv())?;
    st.write("phrases.domain.tsv", &by_domain.to_tsv())?;
    st.write("phrases.tsv", &kept.to_tsv())?;
    st.commit()
}

fn constraints_stage(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut st = open(cfg, "constraints", to_value(&cfg.constraints))?;
    let phrases = PhraseTable::from_tsv(&upstream(&mut st, cfg, "phrasex", "phrases.tsv")?, "phrases.tsv")?;
    let mono_src = st.read_tokenized("mono_src", &cfg.data.mono_src)?;
    let mono_tgt = st.read_tokenized("mono_tgt", &cfg.data.mono_tgt)?;
    let tagger = tagger(&mut st, cfg)?;
    let extra = match &cfg.data.extra_constraints {
        Some(p) => load_constraints(&st.read("extra_constraints", p)?, &p.display().to_string())?,
        None => ConstraintSet::default(),
    };

    let src_counts = count_ne_phrases(&mono_src, &tagger);
    let tgt_counts = count_ne_phrases(&mono_tgt, &tagger);
    let copies = extract_copy_candidates(&src_counts, &tgt_counts, cfg.constraints.copy_min_count);
    let all = ConstraintSet::new(phrases.to_constraints()).merged(&copies).merged(&extra);
    st.write("ne_counts.src.tsv", &counts_to_tsv(&src_counts))?;
    st.write("ne_counts.tgt.tsv", &counts_to_tsv(&tgt_counts))?;
    st.write("copy.tsv", &copies.to_tsv())?;
    st.write("constraints.tsv", &all.to_tsv())?;
    st.commit()
}

/// Constraint set for decoding, with gating lifted when it is switched off.
fn decoding_constraints(st: &mut StageDir, cfg: &PipelineConfig, opts: &StageOptions) -> Result<ConstraintSet> {
    let text = match &opts.constraints {
        Some(p) => st.read("constraints", p)?,
        None => upstream(st, cfg, "constraints", "constraints.tsv")?,
    };
    let set = load_constraints(&text, "constraints.tsv")?;
    Ok(if cfg.decode.ne_gated {
        set
    } else {
        ConstraintSet::new(set.iter().map(|c| Constraint {
            mode: Mode::Always,
            ..c.clone()
        }))
    })
}

fn scorer(st: &mut StageDir, cfg: &PipelineConfig, set: &ConstraintSet) -> Result<ToyScorer> {
    let lex = TranslationTable::from_tsv(&upstream(st, cfg, "align", "lex.s2t.tsv")?, "lex.s2t.tsv")?;
    let lm = load_lm(st, cfg, "tgt.lm")?;
    let extra: BTreeSet<&String> = set.iter().flat_map(|c| &c.target).collect();
    let extra: Vec<&String> = extra.into_iter().collect();
    Ok(ToyScorer::new(lex, lm, cfg.decode.lambda, &extra)?)
}

struct Decoded {
    plain: Hypothesis,
    constrained: Hypothesis,
    /// Constraints enforced in `constrained`; empty after a fallback.
    enforced: Vec<Constraint>,
    fallback: bool,
}

fn decode_line(
    scorer: &ToyScorer,
    cfg: &PipelineConfig,
    set: &ConstraintSet,
    tagger: &NeTagger,
    line: usize,
    tokens: &[String],
) -> Result<Decoded> {
    let d = &cfg.decode;
    let max_len = d.max_len.unwrap_or_else(|| max_len_for(tokens.len()));
    let plain = beam_search(scorer, tokens, d.beam, max_len)?;
    let applied: Vec<Constraint> = match_all(tokens, set, tagger)
        .iter()
        .map(|m| set.get(m.constraint).clone())
        .collect();
    let targets: Vec<&[String]> = applied.iter().map(|c| c.target.as_slice()).collect();
    let targets: Vec<Vec<&str>> = targets.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    match constrained_beam_search(scorer, tokens, &targets, d.constrained_beam, max_len) {
        Ok(constrained) => Ok(Decoded {
            plain,
            constrained,
            enforced: applied,
            fallback: false,
        }),
        Err(e @ (CoreError::ConstraintBudget { .. } | CoreError::InvalidParameter(_) | CoreError::Unsatisfiable)) => {
            log::warn!("line {line}: {e}; decoding without constraints");
            Ok(Decoded {
                plain,
                constrained: beam_search(scorer, tokens, d.constrained_beam, max_len)?,
                enforced: Vec::new(),
                fallback: true,
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn decode_stage(cfg: &PipelineConfig, opts: &StageOptions) -> Result<Manifest> {
    let mut st = open(cfg, "decode", to_value(&cfg.decode))?;
    let set = decoding_constraints(&mut st, cfg, opts)?;
    let scorer = scorer(&mut st, cfg, &set)?;
    let tagger = tagger(&mut st, cfg)?;
    let input = st.read_tokenized("test_src", &cfg.data.test_src)?;

    let decoded: Vec<Decoded> = input
        .par_iter()
        .enumerate()
        .map(|(i, toks)| decode_line(&scorer, cfg, &set, &tagger, i, toks).with_context(|| format!("decoding line {i}")))
        .collect::<Result<_>>()?;

    let row = |i: usize, h: &Hypothesis, n: usize| format!("{i}\t{}\t{n}", h.text());
    st.write_lines("unconstrained.tsv", decoded.iter().enumerate().map(|(i, d)| row(i, &d.plain, 0)))?;
    st.write_lines(
        "constrained.tsv",
        decoded.iter().enumerate().map(|(i, d)| row(i, &d.constrained, d.enforced.len())),
    )?;
    st.write_lines("hyp.unconstrained.txt", decoded.iter().map(|d| d.plain.text()))?;
    st.write_lines("hyp.constrained.txt", decoded.iter().map(|d| d.constrained.text()))?;
    let enforced: Vec<Vec<Constraint>> = decoded.iter().map(|d| d.enforced.clone()).collect();
    st.write("applied.tsv", &applied_to_tsv(&enforced))?;
    let summary = json!({
        "lines": decoded.len(),
        "constraints_applied": enforced.iter().map(Vec::len).sum::<usize>(),
        "fallbacks": decoded.iter().filter(|d| d.fallback).count(),
        "unfinished": decoded.iter().filter(|d| !d.plain.finished || !d.constrained.finished).count(),
    });
    st.write("summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    st.commit()
}

fn backtranslate_stage(cfg: &PipelineConfig, opts: &StageOptions) -> Result<Manifest> {
    let b = &cfg.backtranslate;
    let mode = cfg.bt_mode()?;
    let beam = match mode {
        BtMode::Constrained => cfg.decode.constrained_beam,
        BtMode::Unconstrained => cfg.decode.beam,
    };
    let mut st = open(
        cfg,
        "backtranslate",
        json!({ "top_n": b.top_n, "mode": mode.to_string(), "beam": beam, "lambda": cfg.decode.lambda, "ne_gated": cfg.decode.ne_gated }),
    )?;
    let set = decoding_constraints(&mut st, cfg, opts)?;
    let scorer = scorer(&mut st, cfg, &set)?;
    let tagger = tagger(&mut st, cfg)?;
    let in_lm = load_lm(&mut st, cfg, "in.lm")?;
    let out_lm = load_lm(&mut st, cfg, "out.lm")?;
    let mono = st.read("mono", &cfg.data.mono_src)?;
    let mono: Vec<&str> = mono.lines().collect();

    let params = BtParams { top_n: b.top_n, mode, beam };
    let (pairs, stats) = run_backtranslation(&mono, &in_lm, &out_lm, &scorer, &set, &tagger, &params)?;
    st.write_lines("synthetic.src", pairs.iter().map(|p| p.synthetic_source.join(" ")))?;
    st.write_lines("real.tgt", pairs.iter().map(|p| p.original_target.join(" ")))?;
    st.write_lines("lines.txt", pairs.iter().map(|p| p.line.to_string()))?;
    let enforced: Vec<Vec<Constraint>> = pairs
        .iter()
        .map(|p| if p.constrained { p.applied_constraints.clone() } else { Vec::new() })
        .collect();
    st.write("applied.tsv", &applied_to_tsv(&enforced))?;
    st.write("stats.json", &stats.to_json())?;
    if let Some(path) = &opts.stats_out {
        std::fs::write(path, stats.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    st.commit()
}

fn bleu_json(b: &BleuScore) -> Value {
    json!({
        "score": b.score,
        "precisions": b.precisions,
        "brevity_penalty": b.brevity_penalty,
        "ratio": b.ratio(),
        "hyp_len": b.hyp_len,
        "ref_len": b.ref_len,
        "display": b.to_string(),
    })
}

fn eval_stage(cfg: &PipelineConfig) -> Result<Manifest> {
    let tok = cfg.tokenization()?;
    let mut st = open(cfg, "eval", to_value(&cfg.eval))?;
    let refs_text = st.read("test_ref", &cfg.data.test_ref)?;
    let refs: Vec<&str> = refs_text.lines().collect();
    let plain_text = upstream(&mut st, cfg, "decode", "hyp.unconstrained.txt")?;
    let cons_text = upstream(&mut st, cfg, "decode", "hyp.constrained.txt")?;
    let plain: Vec<&str> = plain_text.lines().collect();
    let cons: Vec<&str> = cons_text.lines().collect();
    let bleu_plain = bleu(&plain, &refs, tok)?;
    let bleu_cons = bleu(&cons, &refs, tok)?;

    let applied = applied_from_tsv(&upstream(&mut st, cfg, "decode", "applied.tsv")?, cons.len(), "decode/applied.tsv")?;
    let recall_test = term_recall(&tokenized(&cons_text), &applied)?;

    let synth_text = upstream(&mut st, cfg, "backtranslate", "synthetic.src")?;
    let synth = tokenized(&synth_text);
    let bt_applied = applied_from_tsv(
        &upstream(&mut st, cfg, "backtranslate", "applied.tsv")?,
        synth.len(),
        "backtranslate/applied.tsv",
    )?;
    let recall_bt = term_recall(&synth, &bt_applied)?;

    let recall_json = |r: &termforge_core::eval::TermRecall| {
        json!({ "recall": r.recall, "found": r.found, "applied": r.applied, "vacuous": r.vacuous })
    };
    let report = json!({
        "tokenize": cfg.eval.tokenize,
        "bleu_unconstrained": bleu_json(&bleu_plain),
        "bleu_constrained": bleu_json(&bleu_cons),
        "term_recall_decode": recall_json(&recall_test),
        "term_recall_backtranslate": recall_json(&recall_bt),
    });
    st.write("eval.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    st.write_lines(
        "eval.txt",
        [
            format!("unconstrained: {bleu_plain}"),
            format!("constrained:   {bleu_cons}"),
            format!("decode {recall_test}"),
            format!("backtranslate {recall_bt}"),
        ],
    )?;
    st.commit()
}
