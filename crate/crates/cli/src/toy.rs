//! Deterministic French/German toy corpora for running the whole pipeline in
//! seconds. Word order is shared between the two languages so a word-level
//! scorer can translate it.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Pair = (&'static str, &'static str);

struct Verb {
    fr_sg: &'static str,
    fr_pl: &'static str,
    de_sg: &'static str,
    de_pl: &'static str,
}

const fn verb(fr_sg: &'static str, fr_pl: &'static str, de_sg: &'static str, de_pl: &'static str) -> Verb {
    Verb { fr_sg, fr_pl, de_sg, de_pl }
}

struct Domain {
    /// `(fr, de, plural)`
    subjects: &'static [(&'static str, &'static str, bool)],
    verbs: &'static [Verb],
    objects: &'static [Pair],
    modifiers: &'static [Pair],
}

const POLITICS: Domain = Domain {
    subjects: &[
        ("les gilets jaunes", "die Gelbwesten", true),
        ("le président", "der Präsident", false),
        ("le gouvernement", "die Regierung", false),
        ("le ministre", "der Minister", false),
        ("les députés", "die Abgeordneten", true),
    ],
    verbs: &[
        verb("critique", "critiquent", "kritisiert", "kritisieren"),
        verb("soutient", "soutiennent", "unterstützt", "unterstützen"),
        verb("rejette", "rejettent", "ablehnt", "ablehnen"),
        verb("défend", "défendent", "verteidigt", "verteidigen"),
    ],
    objects: &[
        ("la réforme", "die Reform"),
        ("le budget", "den Haushalt"),
        ("les impôts", "die Steuern"),
        ("la loi", "das Gesetz"),
    ],
    modifiers: &[
        ("à Paris", "in Paris"),
        ("samedi", "am Samstag"),
        ("aujourd'hui", "heute"),
        ("encore", "wieder"),
    ],
};

const GENERIC: Domain = Domain {
    subjects: &[
        ("le chat", "die Katze", false),
        ("le chien", "der Hund", false),
        ("la fille", "das Mädchen", false),
        ("les enfants", "die Kinder", true),
    ],
    verbs: &[
        verb("mange", "mangent", "isst", "essen"),
        verb("voit", "voient", "sieht", "sehen"),
        verb("cherche", "cherchent", "sucht", "suchen"),
        verb("aime", "aiment", "mag", "mögen"),
    ],
    objects: &[
        ("la pomme", "den Apfel"),
        ("le pain", "das Brot"),
        ("la balle", "den Ball"),
        ("le livre", "das Buch"),
    ],
    modifiers: &[
        ("dans le jardin", "im Garten"),
        ("le matin", "am Morgen"),
        ("souvent", "oft"),
        ("ici", "hier"),
    ],
};

/// Named subjects whose spelling differs or agrees across the languages.
const DUPONT: (&str, &str) = ("Nicolas Dupont-Aignan", "Nicolas Dupont-Aignan");
const POUTINE: (&str, &str) = ("Poutine", "Putin");
const LFI: (&str, &str) = ("La France Insoumise", "La France Insoumise");

pub const GAZETTEER: &[&str] = &[
    "Nicolas Dupont-Aignan",
    "Poutine",
    "Putin",
    "La France Insoumise",
    "Paris",
];

#[derive(Clone, Copy)]
enum Subject {
    Domain,
    Named((&'static str, &'static str)),
}

fn sentence(rng: &mut ChaCha8Rng, d: &Domain, subject: Subject) -> (String, String) {
    let (sfr, sde, plural) = match subject {
        Subject::Domain => *d.subjects.choose(rng).expect("nonempty"),
        Subject::Named((fr, de)) => (fr, de, false),
    };
    let v = d.verbs.choose(rng).expect("nonempty");
    let (ofr, ode) = *d.objects.choose(rng).expect("nonempty");
    let mut fr = vec![sfr, if plural { v.fr_pl } else { v.fr_sg }, ofr];
    let mut de = vec![sde, if plural { v.de_pl } else { v.de_sg }, ode];
    if rng.gen_bool(0.6) {
        let (mfr, mde) = *d.modifiers.choose(rng).expect("nonempty");
        fr.push(mfr);
        de.push(mde);
    }
    fr.push(".");
    de.push(".");
    (fr.join(" "), de.join(" "))
}

fn random_pair(rng: &mut ChaCha8Rng) -> (String, String) {
    let d = if rng.gen_bool(0.5) { &POLITICS } else { &GENERIC };
    sentence(rng, d, Subject::Domain)
}

/// Corrupts a clean pair in one of four ways a crawler produces.
fn noisy_pair(rng: &mut ChaCha8Rng, clean: &[(String, String)]) -> (String, String) {
    let (fr, de) = clean.choose(rng).expect("nonempty").clone();
    match rng.gen_range(0..4) {
        0 => {
            let mut other = clean.choose(rng).expect("nonempty");
            while other.1 == de {
                other = clean.choose(rng).expect("nonempty");
            }
            // Misaligned: unrelated target sentence of a different shape.
            let (_, de2) = sentence(rng, &GENERIC, Subject::Domain);
            (fr, format!("{} {}", other.1.trim_end_matches(" ."), de2))
        }
        1 => (fr.clone(), fr),
        2 => {
            let first = de.split_whitespace().next().unwrap_or(".").to_owned();
            (fr, first)
        }
        _ => {
            let n: u32 = rng.gen_range(100..10_000);
            (fr, format!("{n} {} | {} |", n + 7, rng.gen_range(1..99)))
        }
    }
}

pub struct ToyData {
    pub bitext: Vec<(String, String)>,
    /// Complete cleanliness labels for the bitext.
    pub oracle: Vec<bool>,
    /// Indices whose labels are given up front.
    pub seed_labels: Vec<usize>,
    pub mono_fr: Vec<String>,
    pub mono_de: Vec<String>,
    pub in_domain_fr: Vec<String>,
    pub test: Vec<(String, String)>,
}

pub fn generate(seed: u64) -> ToyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let clean: Vec<(String, String)> = (0..150).map(|_| random_pair(&mut rng)).collect();
    let mut bitext: Vec<(String, String, bool)> = clean.iter().map(|(f, d)| (f.clone(), d.clone(), true)).collect();
    for _ in 0..50 {
        let (f, d) = noisy_pair(&mut rng, &clean);
        bitext.push((f, d, false));
    }
    // Name sentences in the bitext so the aligner learns to copy them.
    for named in [DUPONT, LFI, POUTINE] {
        for _ in 0..4 {
            let (f, d) = sentence(&mut rng, &POLITICS, Subject::Named(named));
            bitext.push((f, d, true));
        }
    }
    bitext.shuffle(&mut rng);

    let oracle: Vec<bool> = bitext.iter().map(|b| b.2).collect();
    let mut seed_labels: Vec<usize> = (0..bitext.len()).collect();
    seed_labels.shuffle(&mut rng);
    seed_labels.truncate(40);
    if !seed_labels.iter().any(|&i| !oracle[i]) {
        let first_noisy = oracle.iter().position(|&c| !c).expect("noise present");
        seed_labels.push(first_noisy);
    }
    seed_labels.sort_unstable();

    // Dupont-Aignan is frequent on both sides; Poutine only on the French
    // side because German writes Putin.
    let mut mono: Vec<(String, String)> = Vec::new();
    for named in [DUPONT, DUPONT, POUTINE, POUTINE, LFI] {
        for _ in 0..6 {
            mono.push(sentence(&mut rng, &POLITICS, Subject::Named(named)));
        }
    }
    for _ in 0..24 {
        mono.push(sentence(&mut rng, &POLITICS, Subject::Domain));
    }
    for _ in 0..36 {
        mono.push(sentence(&mut rng, &GENERIC, Subject::Domain));
    }
    let mut mono_fr: Vec<String> = mono.iter().map(|p| p.0.clone()).collect();
    let mut mono_de: Vec<String> = mono.iter().map(|p| p.1.clone()).collect();
    mono_fr.shuffle(&mut rng);
    mono_de.shuffle(&mut rng);

    let in_domain_fr = (0..40)
        .map(|_| sentence(&mut rng, &POLITICS, Subject::Domain).0)
        .collect();

    let mut test: Vec<(String, String)> = (0..8).map(|_| random_pair(&mut rng)).collect();
    test.push(sentence(&mut rng, &POLITICS, Subject::Named(DUPONT)));
    test.push(sentence(&mut rng, &POLITICS, Subject::Named(POUTINE)));

    ToyData {
        bitext: bitext.into_iter().map(|(f, d, _)| (f, d)).collect(),
        oracle,
        seed_labels,
        mono_fr,
        mono_de,
        in_domain_fr,
        test,
    }
}

fn write(dir: &Path, name: &str, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes the corpora and a ready-to-run `pipeline.json` into `dir`.
pub fn write_toy_data(dir: &Path, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let d = generate(seed);
    write(dir, "bitext.fr", d.bitext.iter().map(|p| p.0.clone()))?;
    write(dir, "bitext.de", d.bitext.iter().map(|p| p.1.clone()))?;
    write(dir, "oracle_labels.tsv", d.oracle.iter().enumerate().map(|(i, &c)| format!("{i}\t{}", u8::from(c))))?;
    write(dir, "labels.tsv", d.seed_labels.iter().map(|&i| format!("{i}\t{}", u8::from(d.oracle[i]))))?;
    write(dir, "mono.fr", d.mono_fr)?;
    write(dir, "mono.de", d.mono_de)?;
    write(dir, "in_domain.fr", d.in_domain_fr)?;
    write(dir, "test.fr", d.test.iter().map(|p| p.0.clone()))?;
    write(dir, "test.de", d.test.iter().map(|p| p.1.clone()))?;
    write(dir, "gazetteer.txt", GAZETTEER.iter().map(|s| s.to_string()))?;
    write(dir, "terms.tsv", ["gilets jaunes\tGelbwesten\talways".to_owned()])?;

    let config = json!({
        "seed": seed,
        "out_dir": "out",
        "src_lang": "fr",
        "tgt_lang": "de",
        "data": {
            "bitext_src": "bitext.fr",
            "bitext_tgt": "bitext.de",
            "filter_labels": "labels.tsv",
            "filter_oracle": "oracle_labels.tsv",
            "mono_src": "mono.fr",
            "mono_tgt": "mono.de",
            "in_domain": "in_domain.fr",
            "test_src": "test.fr",
            "test_ref": "test.de",
            "extra_constraints": "terms.tsv",
            "gazetteer": "gazetteer.txt"
        },
        "filter": { "trees": 25, "max_depth": 8, "rounds": 3, "round_size": 20 },
        "bpe": { "merges": 200 },
        "align": { "iterations": 5 },
        "phrasex": { "max_len": 2, "domain_top_k": 20 },
        "backtranslate": { "top_n": 40, "mode": "constrained" }
    });
    let text = serde_json::to_string_pretty(&config).expect("config serializes") + "\n";
    fs::write(dir.join("pipeline.json"), text).context("writing pipeline.json")
}
