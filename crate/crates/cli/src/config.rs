//! Pipeline configuration: one JSON document with per-stage blocks.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use termforge_core::align::Heuristic;
use termforge_core::backtranslate::BtMode;
use termforge_core::eval::Tokenization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_src_lang")]
    pub src_lang: String,
    #[serde(default = "default_tgt_lang")]
    pub tgt_lang: String,
    pub data: DataConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub bpe: BpeConfig,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default)]
    pub align: AlignConfig,
    #[serde(default)]
    pub phrasex: PhrasexConfig,
    #[serde(default)]
    pub constraints: ConstraintsConfig,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub backtranslate: BacktranslateConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_src_lang() -> String {
    "fr".into()
}

fn default_tgt_lang() -> String {
    "de".into()
}

/// Input corpora, all pre-tokenized, one sentence per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub bitext_src: PathBuf,
    pub bitext_tgt: PathBuf,
    /// Expert labels for some bitext lines: `index<TAB>0|1`.
    pub filter_labels: PathBuf,
    /// Complete labels used to simulate expert answers in feedback rounds.
    #[serde(default)]
    pub filter_oracle: Option<PathBuf>,
    pub mono_src: PathBuf,
    pub mono_tgt: PathBuf,
    /// In-domain source-language text for Moore-Lewis scoring.
    pub in_domain: PathBuf,
    pub test_src: PathBuf,
    pub test_ref: PathBuf,
    /// Extra hand-written constraints, `source<TAB>target<TAB>mode`.
    #[serde(default)]
    pub extra_constraints: Option<PathBuf>,
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub rounds: usize,
    pub round_size: usize,
    /// Threshold whose output feeds later stages.
    pub threshold: f64,
    /// Thresholds reported side by side.
    pub report_thresholds: Vec<f64>,
    pub dict_iterations: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            trees: 100,
            max_depth: 12,
            rounds: 3,
            round_size: 20,
            threshold: 0.5,
            report_thresholds: vec![0.5, 0.8],
            dict_iterations: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpeConfig {
    pub merges: usize,
}

impl Default for BpeConfig {
    fn default() -> Self {
        BpeConfig { merges: 30_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub order: usize,
    pub discount: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { order: 3, discount: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub iterations: usize,
    pub tension: f64,
    pub heuristic: String,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            iterations: 5,
            tension: 4.0,
            heuristic: "grow-diag-final-and".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhrasexConfig {
    pub max_len: usize,
    pub prob_threshold: f64,
    pub domain_top_k: usize,
    pub min_occurrence: usize,
}

impl Default for PhrasexConfig {
    fn default() -> Self {
        PhrasexConfig {
            max_len: 7,
            prob_threshold: 0.5,
            domain_top_k: 2000,
            min_occurrence: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintsConfig {
    pub copy_min_count: usize,
}

impl Default for ConstraintsConfig {
    fn default() -> Self {
        ConstraintsConfig { copy_min_count: 9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub beam: usize,
    pub constrained_beam: usize,
    /// Lexical/LM interpolation weight of the toy scorer.
    pub lambda: f64,
    /// Fixed output cap; `None` derives it from each input's length.
    pub max_len: Option<usize>,
    pub ne_gated: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 5,
            constrained_beam: 20,
            lambda: 0.5,
            max_len: None,
            ne_gated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktranslateConfig {
    pub top_n: usize,
    pub mode: String,
}

impl Default for BacktranslateConfig {
    fn default() -> Self {
        BacktranslateConfig {
            top_n: 2_000_000,
            mode: "constrained".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub tokenize: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { tokenize: "13a".into() }
    }
}

/// Applies `section.key=value` overrides to a raw config document. Values are
/// parsed as JSON when possible and taken as strings otherwise.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, raw) = o.split_once('=').with_context(|| format!("override {o:?} is not key=value"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .with_context(|| format!("override {key:?}: {} is not an object", parts[..i].join(".")))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

fn check_range(ok: bool, key: &str, msg: &str) -> Result<()> {
    if !ok {
        bail!("config key `{key}`: {msg}");
    }
    Ok(())
}

impl PipelineConfig {
    /// Parses, defaults and range-checks a config document. Relative paths are
    /// resolved against `base`.
    pub fn from_str_at(text: &str, base: &Path, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        apply_overrides(&mut doc, overrides)?;
        // Re-serialize so duplicate keys in the text are seen by the typed
        // parser below rather than collapsed by `Value`.
        let typed_text = if overrides.is_empty() { text.to_owned() } else { doc.to_string() };
        let de = &mut serde_json::Deserializer::from_str(&typed_text);
        let mut cfg: PipelineConfig =
            serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("config key `{}`: {}", e.path(), e.inner()))?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_at(&text, base, overrides)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        let d = &mut self.data;
        for p in [
            &mut d.bitext_src,
            &mut d.bitext_tgt,
            &mut d.filter_labels,
            &mut d.mono_src,
            &mut d.mono_tgt,
            &mut d.in_domain,
            &mut d.test_src,
            &mut d.test_ref,
        ] {
            fix(p);
        }
        for p in [&mut d.filter_oracle, &mut d.extra_constraints, &mut d.gazetteer].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let required = [
            ("data.bitext_src", &d.bitext_src),
            ("data.bitext_tgt", &d.bitext_tgt),
            ("data.filter_labels", &d.filter_labels),
            ("data.mono_src", &d.mono_src),
            ("data.mono_tgt", &d.mono_tgt),
            ("data.in_domain", &d.in_domain),
            ("data.test_src", &d.test_src),
            ("data.test_ref", &d.test_ref),
        ];
        let optional = [
            ("data.filter_oracle", &d.filter_oracle),
            ("data.extra_constraints", &d.extra_constraints),
            ("data.gazetteer", &d.gazetteer),
        ];
        for (key, path) in required.into_iter().chain(optional.into_iter().filter_map(|(k, p)| p.as_ref().map(|p| (k, p)))) {
            if !path.is_file() {
                bail!("config key `{key}`: file {} does not exist", path.display());
            }
        }
        let f = &self.filter;
        check_range(f.trees >= 1, "filter.trees", "must be at least 1")?;
        check_range(f.max_depth >= 1, "filter.max_depth", "must be at least 1")?;
        check_range((0.0..1.0).contains(&f.threshold), "filter.threshold", "must lie in [0, 1)")?;
        for t in &f.report_thresholds {
            check_range((0.0..1.0).contains(t), "filter.report_thresholds", "values must lie in [0, 1)")?;
        }
        check_range(self.lm.order >= 1, "lm.order", "must be at least 1")?;
        check_range(self.lm.discount > 0.0 && self.lm.discount < 1.0, "lm.discount", "must lie in (0, 1)")?;
        check_range(self.align.tension >= 0.0, "align.tension", "must be non-negative")?;
        self.heuristic()?;
        let p = &self.phrasex;
        check_range(p.max_len >= 1, "phrasex.max_len", "must be at least 1")?;
        check_range((0.0..1.0).contains(&p.prob_threshold), "phrasex.prob_threshold", "must lie in [0, 1)")?;
        check_range(p.domain_top_k >= 1, "phrasex.domain_top_k", "must be at least 1")?;
        let dc = &self.decode;
        check_range(dc.beam >= 1, "decode.beam", "must be at least 1")?;
        check_range(dc.constrained_beam >= 1, "decode.constrained_beam", "must be at least 1")?;
        check_range((0.0..=1.0).contains(&dc.lambda), "decode.lambda", "must lie in [0, 1]")?;
        check_range(dc.max_len != Some(0), "decode.max_len", "must be at least 1")?;
        self.bt_mode()?;
        self.tokenization()?;
        Ok(())
    }

    pub fn heuristic(&self) -> Result<Heuristic> {
        self.align
            .heuristic
            .parse()
            .map_err(|e| anyhow::anyhow!("config key `align.heuristic`: {e}"))
    }

    pub fn bt_mode(&self) -> Result<BtMode> {
        self.backtranslate
            .mode
            .parse()
            .map_err(|e| anyhow::anyhow!("config key `backtranslate.mode`: {e}"))
    }

    pub fn tokenization(&self) -> Result<Tokenization> {
        self.eval
            .tokenize
            .parse()
            .map_err(|e| anyhow::anyhow!("config key `eval.tokenize`: {e}"))
    }
}
