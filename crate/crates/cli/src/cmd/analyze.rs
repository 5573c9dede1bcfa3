use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use xlvoice::analysis::{
    cosine_similarity, lda_fit_languages, lda_predict, overlap_by_length, pca_fit,
    silhouette_score, tsne, voice_pairing, LdaConfig, TsneConfig,
};
use xlvoice::store::{build_profiles, Store, UtteranceRecord};
use xlvoice::Embedding;

use crate::output::{guard, load_store, num, req, Run};

fn embedding(r: &UtteranceRecord) -> Result<&Embedding> {
    match &r.embedding {
        Some(e) => Ok(e),
        None => bail!("{} has no embedding", r.utterance_id),
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// CSV of projected coordinates.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional JSON report with the fitted model.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Restrict to one speaker.
    #[arg(long)]
    pub speaker: Option<String>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Scale embeddings to unit length first (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
}

/// Rows of a store, unit-normalized on request.
pub fn rows(store: &Store, normalize: bool) -> Result<Vec<Vec<f64>>> {
    store
        .records()
        .iter()
        .map(|r| {
            let e = embedding(r)?;
            Ok(if normalize {
                e.to_unit()?.values
            } else {
                e.values.clone()
            })
        })
        .collect()
}

pub fn pca(mut a: PcaArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&input])?;
    let k = *a.components.get_or_insert(2);
    let normalize = *a.normalize.get_or_insert(true);
    let run = Run::new("pca", &a)?;
    let mut store = load_store(&input)?;
    if let Some(s) = &a.speaker {
        store = store.filter(|r| &r.speaker_id == s);
    }
    let (model, proj) = pca_fit(&rows(&store, normalize)?, k)?;
    let mut header: Vec<String> = ["utterance_id", "speaker_id", "language", "n_words"]
        .map(String::from)
        .to_vec();
    header.extend((1..=k).map(|i| format!("pc{i}")));
    run.write_csv(
        &output,
        &header,
        store.records().iter().zip(&proj).map(|(r, z)| {
            let mut row = vec![
                r.utterance_id.clone(),
                r.speaker_id.clone(),
                r.language.clone(),
                r.n_words.to_string(),
            ];
            row.extend(z.iter().map(|v| num(*v)));
            row
        }),
    )?;
    let languages: Vec<&str> = store
        .records()
        .iter()
        .map(|r| r.language.as_str())
        .collect();
    let silhouette = if store.languages().len() > 1 {
        Some(silhouette_score(&proj, &languages)?)
    } else {
        None
    };
    if let Some(p) = &a.report {
        run.write_json(
            p,
            json!({ "model": model, "language_silhouette": silhouette }),
        )?;
    }
    println!(
        "explained variance {:?}, language silhouette {}",
        model.explained_variance_ratio,
        silhouette.map_or("n/a".into(), |s| format!("{s:.4}"))
    );
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaArgs {
    /// Embedding container holding the bilingual speaker.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON file receiving the fitted model.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Bilingual speaker whose two languages are separated.
    #[arg(long)]
    pub speaker: Option<String>,
    #[arg(long)]
    pub lang_a: Option<String>,
    #[arg(long)]
    pub lang_b: Option<String>,
    /// Fraction of each language used for training.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ridge added to the within-class scatter.
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// Embedding container to classify with the fitted model.
    #[arg(long)]
    pub classify: Option<PathBuf>,
    /// CSV of per-record predictions for --classify.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

pub fn lda(mut a: LdaArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let output = req(&a.output, "output")?;
    let d = LdaConfig::default();
    let speaker = a.speaker.get_or_insert_with(|| "ref".into()).clone();
    let la = a.lang_a.get_or_insert_with(|| "en".into()).clone();
    let lb = a.lang_b.get_or_insert_with(|| "es".into()).clone();
    let config = LdaConfig {
        split_fraction: *a.split.get_or_insert(d.split_fraction),
        seed: *a.seed.get_or_insert(d.seed),
        shrinkage: a.shrinkage,
    };
    let mut inputs = vec![input.as_path()];
    inputs.extend(a.classify.as_deref());
    let mut outputs = vec![output.as_path()];
    outputs.extend(a.predictions.as_deref());
    guard(&outputs, &inputs)?;
    if a.classify.is_some() != a.predictions.is_some() {
        bail!("--classify and --predictions go together");
    }
    let run = Run::new("lda", &a)?;
    let store = load_store(&input)?;
    let model = lda_fit_languages(&store, &speaker, &la, &lb, &config)?;
    run.write_json(&output, json!({ "model": model }))?;
    println!(
        "train {} / test {}: train accuracy {:.4}, test accuracy {}",
        model.n_train,
        model.n_test,
        model.train_accuracy,
        model
            .test_accuracy
            .map_or("n/a".into(), |t| format!("{t:.4}"))
    );
    if let (Some(c), Some(p)) = (&a.classify, &a.predictions) {
        let other = load_store(c)?;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut rows = Vec::with_capacity(other.len());
        for r in other.records() {
            let (label, score) = lda_predict(&model, &embedding(r)?.values)?;
            let name = model.class_name(label).to_string();
            *counts.entry(name.clone()).or_default() += 1;
            rows.push(vec![
                r.utterance_id.clone(),
                r.speaker_id.clone(),
                r.language.clone(),
                num(score),
                name,
            ]);
        }
        run.write_csv(
            p,
            &["utterance_id", "speaker_id", "language", "score", "label"].map(String::from),
            rows,
        )?;
        println!("classified {}: {counts:?}", other.len());
    }
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsneArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// CSV of 2-d coordinates.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Comma-separated speakers to include (default all).
    #[arg(long, value_delimiter = ',')]
    pub speakers: Option<Vec<String>>,
    /// Keep at most this many utterances per speaker and language.
    #[arg(long)]
    pub per_voice: Option<usize>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn tsne_cmd(mut a: TsneArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&input])?;
    let d = TsneConfig::default();
    let config = TsneConfig {
        perplexity: *a.perplexity.get_or_insert(d.perplexity),
        iterations: *a.iterations.get_or_insert(d.iterations),
        seed: *a.seed.get_or_insert(d.seed),
        ..d
    };
    let run = Run::new("tsne", &a)?;
    let store = load_store(&input)?;
    let mut taken: BTreeMap<(String, String), usize> = BTreeMap::new();
    let picked = store.filter(|r| {
        if a.speakers
            .as_ref()
            .is_some_and(|s| !s.contains(&r.speaker_id))
        {
            return false;
        }
        let n = taken
            .entry((r.speaker_id.clone(), r.language.clone()))
            .or_default();
        *n += 1;
        a.per_voice.is_none_or(|k| *n <= k)
    });
    let data: Vec<Vec<f64>> = picked
        .records()
        .iter()
        .map(|r| Ok(embedding(r)?.values.clone()))
        .collect::<Result<_>>()?;
    let result = tsne(&data, &config)?;
    run.write_csv(
        &output,
        &["utterance_id", "speaker_id", "language", "x", "y"].map(String::from),
        picked.records().iter().zip(&result.coords).map(|(r, c)| {
            vec![
                r.utterance_id.clone(),
                r.speaker_id.clone(),
                r.language.clone(),
                num(c[0]),
                num(c[1]),
            ]
        }),
    )?;
    let coords: Vec<Vec<f64>> = result.coords.iter().map(|c| c.to_vec()).collect();
    let speakers: Vec<String> = picked
        .records()
        .iter()
        .map(|r| r.speaker_id.clone())
        .collect();
    let voices: Vec<String> = picked
        .records()
        .iter()
        .map(|r| format!("{}:{}", r.speaker_id, r.language))
        .collect();
    let pairing = voice_pairing(&coords, &speakers, &voices)?;
    let final_kl = result.kl_trace.last().copied();
    if let Some(p) = &a.report {
        let worst = result
            .row_perplexities
            .iter()
            .map(|p| (p - config.perplexity).abs())
            .fold(0.0, f64::max);
        run.write_json(
            p,
            json!({
                "n_points": data.len(),
                "final_kl": final_kl,
                "kl_trace": result.kl_trace,
                "max_perplexity_error": worst,
                "jittered": result.jittered,
                "final_learning_rate": result.final_learning_rate,
                "pairing": pairing,
            }),
        )?;
    }
    println!(
        "{} points, final KL {}, speaker purity {:.4}",
        data.len(),
        final_kl.map_or("n/a".into(), |k| format!("{k:.4}")),
        pairing.speaker_purity
    );
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// CSV of cosine similarities between every pair of cluster means.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn cosine(mut a: CosineArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&input])?;
    let run = Run::new("cosine", &a)?;
    let profiles = build_profiles(&load_store(&input)?)?;
    let means: Vec<(String, &Embedding)> = profiles
        .iter()
        .flat_map(|p| {
            p.entries
                .iter()
                .map(move |e| (format!("{}:{}", p.speaker_id, e.language), &e.mean))
        })
        .collect();
    let mut rows = Vec::new();
    for (i, (va, ea)) in means.iter().enumerate() {
        for (vb, eb) in &means[i..] {
            let c = cosine_similarity(&ea.values, &eb.values)?;
            rows.push(vec![va.clone(), vb.clone(), num(c)]);
        }
    }
    println!("{} voices, {} pairs", means.len(), rows.len());
    run.write_csv(
        &output,
        &["voice_a", "voice_b", "cosine"].map(String::from),
        rows,
    )
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON report to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Bilingual speaker to analyse.
    #[arg(long)]
    pub speaker: Option<String>,
    /// Utterances with fewer words than this count as short.
    #[arg(long)]
    pub threshold: Option<u32>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn overlap(mut a: OverlapArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&input])?;
    let d = LdaConfig::default();
    let config = LdaConfig {
        split_fraction: *a.split.get_or_insert(d.split_fraction),
        seed: *a.seed.get_or_insert(d.seed),
        shrinkage: None,
    };
    let speaker = a.speaker.get_or_insert_with(|| "ref".into()).clone();
    let threshold = *a.threshold.get_or_insert(5);
    let run = Run::new("overlap", &a)?;
    let report = overlap_by_length(&load_store(&input)?, &speaker, threshold, &config)?;
    for (name, g) in [("short", &report.short), ("long", &report.long)] {
        if let Some(g) = g {
            println!(
                "{name}: n {}, own {:.4}, other {:.4}, lda {}",
                g.n,
                g.mean_dist_own,
                g.mean_dist_other,
                g.lda_accuracy.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
        }
    }
    run.write_json(&output, json!({ "report": report }))
}
