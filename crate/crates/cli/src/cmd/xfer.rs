use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use xlvoice::analysis::{
    cosine_similarity, lda_predict, pca_fit, silhouette_score, tsne, voice_pairing, TsneConfig,
};
use xlvoice::store::{build_profiles, save_embeddings, Store, UtteranceRecord};
use xlvoice::transform::{
    accent_sweep, compute_delta_from_store, cross_lingual_voices, load_delta, save_delta,
    transfer_report, translate, AccentSetting, TranslationDelta,
};

use super::analyze::rows;
use crate::output::{create_dir, guard, load_lda, load_store, num, req, Run};

fn accent(epsilon: f64, extrapolate: bool) -> Result<AccentSetting> {
    Ok(if extrapolate {
        AccentSetting::extrapolating(epsilon)?
    } else {
        AccentSetting::new(epsilon)?
    })
}

fn read_delta(path: &Path, reverse: bool) -> Result<TranslationDelta> {
    let d = load_delta(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(if reverse { d.reversed() } else { d })
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaArgs {
    /// Embedding container holding the bilingual reference speaker.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Delta container to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<String>,
    /// Source language.
    #[arg(long)]
    pub from: Option<String>,
    /// Target language.
    #[arg(long)]
    pub to: Option<String>,
}

pub fn delta(mut a: DeltaArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&input])?;
    let reference = a.reference.get_or_insert_with(|| "ref".into()).clone();
    let from = a.from.get_or_insert_with(|| "en".into()).clone();
    let to = a.to.get_or_insert_with(|| "es".into()).clone();
    let run = Run::new("delta", &a)?;
    let d = compute_delta_from_store(&load_store(&input)?, &reference, &from, &to)?;
    save_delta(&d, run.provenance(), &output)?;
    println!(
        "{from}->{to} from {reference} ({} + {} utterances), |delta| {:.6}",
        d.derived_counts[0],
        d.derived_counts[1],
        xlvoice::embedding::norm(&d.delta)
    );
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Delta container from `delta`.
    #[arg(long)]
    pub delta: Option<PathBuf>,
    /// Embedding container to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Accent scale in [0, 1].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Accept epsilon outside [0, 1].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_extrapolation: Option<bool>,
    /// Apply the delta in the opposite direction.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub reverse: Option<bool>,
    /// Emit one record per speaker and language holding the cluster mean.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub means: Option<bool>,
    /// Scale translated embeddings to unit length.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Comma-separated speakers to keep (default all).
    #[arg(long, value_delimiter = ',')]
    pub speakers: Option<Vec<String>>,
}

/// Shifts every record in the delta's source language; other records pass
/// through untouched.
pub fn translate_cmd(mut a: TranslateArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let delta_path = req(&a.delta, "delta")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&input, &delta_path])?;
    let eps = *a.epsilon.get_or_insert(1.0);
    let acc = accent(eps, *a.allow_extrapolation.get_or_insert(false))?;
    let d = read_delta(&delta_path, *a.reverse.get_or_insert(false))?;
    let means = *a.means.get_or_insert(false);
    let normalize = *a.normalize.get_or_insert(false);
    let run = Run::new("translate", &a)?;

    let mut store = load_store(&input)?;
    if let Some(keep) = &a.speakers {
        store = store.filter(|r| keep.contains(&r.speaker_id));
    }
    let records: Vec<UtteranceRecord> = if means {
        build_profiles(&store)?
            .into_iter()
            .flat_map(|p| {
                p.entries.into_iter().map(move |c| {
                    let mut r = UtteranceRecord::new(
                        format!("{}-{}-mean", p.speaker_id, c.language),
                        &p.speaker_id,
                        &c.language,
                        &c.locale,
                        1,
                    );
                    r.source = Some(format!("mean of {}", c.count));
                    r.with_embedding(c.mean)
                })
            })
            .collect()
    } else {
        store.into_records()
    };
    let mut out = Store::new();
    out.provenance = run.provenance();
    let mut moved = 0;
    for mut r in records {
        if r.language == d.source_language {
            let e = r
                .embedding
                .as_ref()
                .with_context(|| format!("{} has no embedding", r.utterance_id))?;
            let mut t = translate(e, &d, &acc)?;
            if normalize {
                t = t.to_unit()?;
            }
            r.embedding = Some(t);
            moved += 1;
        }
        out.push(r)?;
    }
    save_embeddings(&out, &output)?;
    println!(
        "translated {moved} of {} records {}->{} at epsilon {eps}",
        out.len(),
        d.source_language,
        d.target_language
    );
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Delta container from `delta`.
    #[arg(long)]
    pub delta: Option<PathBuf>,
    /// Optional LDA model JSON for signed scores.
    #[arg(long)]
    pub lda: Option<PathBuf>,
    /// CSV to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub speaker: Option<String>,
    /// Comma-separated accent scales.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_extrapolation: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub reverse: Option<bool>,
}

/// Sweeps the speaker's cluster mean in the delta's source language.
pub fn sweep(mut a: SweepArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let delta_path = req(&a.delta, "delta")?;
    let output = req(&a.output, "output")?;
    let speaker = req(&a.speaker, "speaker")?;
    let mut inputs = vec![input.as_path(), delta_path.as_path()];
    inputs.extend(a.lda.as_deref());
    guard(&[&output], &inputs)?;
    let eps = a
        .epsilons
        .get_or_insert_with(|| vec![0.0, 0.5, 1.0])
        .clone();
    let extrapolate = *a.allow_extrapolation.get_or_insert(false);
    let d = read_delta(&delta_path, *a.reverse.get_or_insert(false))?;
    let run = Run::new("sweep", &a)?;
    let lda = a.lda.as_deref().map(load_lda).transpose()?;

    let profiles = build_profiles(&load_store(&input)?)?;
    let Some(p) = profiles.iter().find(|p| p.speaker_id == speaker) else {
        bail!("no speaker {speaker}");
    };
    let Some(c) = p.cluster(&d.source_language) else {
        bail!("{speaker} has no {} utterances", d.source_language);
    };
    let outs = accent_sweep(&c.mean, &d, &eps, extrapolate)?;
    let dim = c.mean.dim();
    let mut header: Vec<String> = ["epsilon", "lda_score", "lda_label", "cosine_to_original"]
        .map(String::from)
        .to_vec();
    header.extend((0..dim).map(|i| format!("e{i}")));
    let mut rows = Vec::with_capacity(outs.len());
    for (e, o) in eps.iter().zip(&outs) {
        let (score, label) = match &lda {
            Some(m) => {
                let (l, s) = lda_predict(m, &o.values)?;
                (num(s), m.class_name(l).to_string())
            }
            None => (String::new(), String::new()),
        };
        let mut row = vec![
            num(*e),
            score,
            label,
            num(cosine_similarity(&c.mean.values, &o.values)?),
        ];
        row.extend(o.values.iter().map(|v| num(*v)));
        println!("epsilon {e}: {} {}", row[1], row[2]);
        rows.push(row);
    }
    run.write_csv(&output, &header, rows)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Delta container from `delta`.
    #[arg(long)]
    pub delta: Option<PathBuf>,
    /// LDA model JSON from `lda`.
    #[arg(long)]
    pub lda: Option<PathBuf>,
    /// JSON report to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional per-speaker CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_extrapolation: Option<bool>,
}

pub fn transfer(mut a: TransferArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let delta_path = req(&a.delta, "delta")?;
    let lda_path = req(&a.lda, "lda")?;
    let output = req(&a.output, "output")?;
    let mut outputs = vec![output.as_path()];
    outputs.extend(a.csv.as_deref());
    guard(&outputs, &[&input, &delta_path, &lda_path])?;
    let acc = accent(
        *a.epsilon.get_or_insert(1.0),
        *a.allow_extrapolation.get_or_insert(false),
    )?;
    let run = Run::new("transfer-report", &a)?;
    let report = transfer_report(
        &load_store(&input)?,
        &read_delta(&delta_path, false)?,
        &load_lda(&lda_path)?,
        &acc,
    )?;
    if let Some(p) = &a.csv {
        let header = [
            "speaker_id",
            "from_language",
            "to_language",
            "lda_label",
            "lda_score",
            "on_target",
            "cosine_to_original",
            "nearest_speaker",
            "own_rank",
        ]
        .map(String::from);
        run.write_csv(
            p,
            &header,
            report.speakers.iter().map(|s| {
                vec![
                    s.speaker_id.clone(),
                    s.from_language.clone(),
                    s.to_language.clone(),
                    s.lda_label.clone(),
                    num(s.lda_score),
                    s.on_target.to_string(),
                    num(s.cosine_to_original),
                    s.nearest_speaker.clone(),
                    s.own_rank.to_string(),
                ]
            }),
        )?;
    }
    println!(
        "{} speakers: {:.4} on target, {:.4} nearest to themselves",
        report.speakers.len(),
        report.fraction_on_target,
        report.fraction_own_nearest
    );
    run.write_json(&output, json!({ "report": report }))
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportPlotArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory receiving fig2_pca.csv, fig3_tsne.csv and plot_report.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Bilingual reference speaker.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long)]
    pub lang_a: Option<String>,
    #[arg(long)]
    pub lang_b: Option<String>,
    /// Comma-separated speakers for the voice plot; by default the reference
    /// plus the first two monolingual speakers of each language.
    #[arg(long, value_delimiter = ',')]
    pub speakers: Option<Vec<String>>,
    /// Utterances per voice in the voice plot.
    #[arg(long)]
    pub per_voice: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn default_voice_speakers(store: &Store, reference: &str, langs: [&str; 2]) -> Vec<String> {
    let mut out = vec![reference.to_string()];
    for lang in langs {
        let mono: BTreeSet<String> = store
            .speakers()
            .into_iter()
            .filter(|s| s != reference)
            .filter(|s| {
                let l = store.filter(|r| &r.speaker_id == s).languages();
                l.len() == 1 && l[0] == lang
            })
            .collect();
        out.extend(mono.into_iter().take(2));
    }
    out
}

pub fn export_plot(mut a: ExportPlotArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let dir = req(&a.out_dir, "out-dir")?;
    let reference = a.reference.get_or_insert_with(|| "ref".into()).clone();
    let la = a.lang_a.get_or_insert_with(|| "en".into()).clone();
    let lb = a.lang_b.get_or_insert_with(|| "es".into()).clone();
    let per_voice = *a.per_voice.get_or_insert(200);
    let acc = AccentSetting::new(*a.epsilon.get_or_insert(1.0))?;
    let d = TsneConfig::default();
    let tcfg = TsneConfig {
        perplexity: *a.perplexity.get_or_insert(d.perplexity),
        iterations: *a.iterations.get_or_insert(d.iterations),
        seed: *a.seed.get_or_insert(d.seed),
        ..d
    };
    let store = load_store(&input)?;
    let speakers = a
        .speakers
        .get_or_insert_with(|| default_voice_speakers(&store, &reference, [&la, &lb]))
        .clone();
    let run = Run::new("export-plot", &a)?;
    create_dir(&dir)?;
    let fig2 = dir.join("fig2_pca.csv");
    let fig3 = dir.join("fig3_tsne.csv");
    let report = dir.join("plot_report.json");
    guard(&[&fig2, &fig3, &report], &[&input])?;

    // reference speaker's two language clusters, unit-normalized
    let r = store.filter(|x| x.speaker_id == reference && (x.language == la || x.language == lb));
    let (pca, proj) = pca_fit(&rows(&r, true)?, 2)?;
    let langs: Vec<&str> = r.records().iter().map(|x| x.language.as_str()).collect();
    let silhouette = silhouette_score(&proj, &langs)?;
    run.write_csv(
        &fig2,
        &["utterance_id", "language", "n_words", "pc1", "pc2"].map(String::from),
        r.records().iter().zip(&proj).map(|(x, z)| {
            vec![
                x.utterance_id.clone(),
                x.language.clone(),
                x.n_words.to_string(),
                num(z[0]),
                num(z[1]),
            ]
        }),
    )?;

    // each speaker natively and shifted into the other language
    let delta = compute_delta_from_store(&store, &reference, &la, &lb)?;
    let names: Vec<&str> = speakers.iter().map(String::as_str).collect();
    let points = cross_lingual_voices(&store, &delta, &names, &acc, Some(per_voice))?;
    let data: Vec<Vec<f64>> = points.iter().map(|p| p.embedding.values.clone()).collect();
    let t = tsne(&data, &tcfg)?;
    run.write_csv(
        &fig3,
        &["voice", "speaker_id", "language", "translated", "x", "y"].map(String::from),
        points.iter().zip(&t.coords).map(|(p, c)| {
            vec![
                p.voice(),
                p.speaker_id.clone(),
                p.language.clone(),
                p.translated.to_string(),
                num(c[0]),
                num(c[1]),
            ]
        }),
    )?;
    let coords: Vec<Vec<f64>> = t.coords.iter().map(|c| c.to_vec()).collect();
    let spk: Vec<String> = points.iter().map(|p| p.speaker_id.clone()).collect();
    let voices: Vec<String> = points.iter().map(|p| p.voice()).collect();
    let pairing = voice_pairing(&coords, &spk, &voices)?;
    run.write_json(
        &report,
        json!({
            "fig2": {
                "n_points": proj.len(),
                "explained_variance_ratio": pca.explained_variance_ratio,
                "language_silhouette": silhouette,
            },
            "fig3": {
                "speakers": speakers,
                "n_points": points.len(),
                "final_kl": t.kl_trace.last(),
                "pairing": pairing,
            },
        }),
    )?;
    println!(
        "fig2: {} points, silhouette {silhouette:.4}; fig3: {} points, speaker purity {:.4}, unpaired {:?}",
        proj.len(),
        points.len(),
        pairing.speaker_purity,
        pairing.unpaired_speakers
    );
    Ok(())
}
