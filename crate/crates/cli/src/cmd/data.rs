use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use xlvoice::encoder::{load_model, save_model, train, EncoderConfig, Pooling};
use xlvoice::features::{extract_batch, read_wav, write_wav, MfccConfig};
use xlvoice::oracle::{gen_audio, gen_space, AudioSpec, SpaceSpec};
use xlvoice::store::{
    build_profiles, ingest_manifest, load_features, save_embeddings, save_features, FeatureSet,
    Store, UtteranceRecord,
};

use crate::output::{create_dir, guard, load_store, num, req, Run};

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataArgs {
    /// Directory receiving embeddings.dvec, manifest.jsonl and truth.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Distance between the two language offsets.
    #[arg(long)]
    pub language_separation: Option<f64>,
    /// Per-coordinate utterance noise.
    #[arg(long)]
    pub utterance_noise: Option<f64>,
    /// Spread of speaker base vectors.
    #[arg(long)]
    pub speaker_spread: Option<f64>,
    /// Utterances per language for every bilingual speaker.
    #[arg(long)]
    pub bilingual_utterances: Option<usize>,
    /// Utterances for every monolingual speaker.
    #[arg(long)]
    pub utterances: Option<usize>,
    /// Full population description; config file only.
    #[arg(skip)]
    pub space: Option<SpaceSpec>,
}

pub fn gen_data(mut a: GenDataArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let dir = req(&a.out_dir, "out-dir")?;
    let mut spec = a.space.take().unwrap_or_default();
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(d) = a.dim {
        spec.dim = d;
    }
    if let Some(v) = a.language_separation {
        spec.language_separation = v;
    }
    if let Some(v) = a.utterance_noise {
        spec.utterance_noise = v;
    }
    if let Some(v) = a.speaker_spread {
        spec.speaker_spread = v;
    }
    for s in &mut spec.speakers {
        let n = if s.languages.len() > 1 {
            a.bilingual_utterances
        } else {
            a.utterances
        };
        if let Some(n) = n {
            s.languages.iter_mut().for_each(|l| l.utterances = n);
        }
    }
    a.seed = Some(spec.seed);
    a.space = Some(spec);
    let run = Run::new("gen-data", &a)?;
    let (mut store, truth) = gen_space(a.space.as_ref().expect("set above"))?;
    create_dir(&dir)?;
    store.provenance = run.provenance();
    save_embeddings(&store, dir.join("embeddings.dvec"))?;
    store.write_manifest(dir.join("manifest.jsonl"), false)?;
    run.write_json(&dir.join("truth.json"), json!({ "truth": truth }))?;
    println!(
        "{} utterances, {} speakers, dim {} -> {}",
        store.len(),
        store.speakers().len(),
        truth.spec.dim,
        dir.display()
    );
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenAudioArgs {
    /// Directory receiving wav/, manifest.jsonl and run.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub speakers: Option<usize>,
    /// Utterances per speaker.
    #[arg(long)]
    pub utterances: Option<usize>,
    /// Shortest clip, seconds.
    #[arg(long)]
    pub min_duration: Option<f64>,
    /// Longest clip, seconds.
    #[arg(long)]
    pub max_duration: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Full audio description; config file only.
    #[arg(skip)]
    pub audio: Option<AudioSpec>,
}

/// Language tag for clips that carry no language.
const NO_LANGUAGE: &str = "und";

pub fn gen_audio_cmd(mut a: GenAudioArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let dir = req(&a.out_dir, "out-dir")?;
    let mut spec = a.audio.take().unwrap_or_default();
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.speakers {
        spec.n_speakers = v;
    }
    if let Some(v) = a.utterances {
        spec.utterances_per_speaker = v;
    }
    if let Some(v) = a.min_duration {
        spec.min_duration_s = v;
    }
    if let Some(v) = a.max_duration {
        spec.max_duration_s = v;
    }
    if let Some(v) = a.sample_rate {
        spec.sample_rate = v;
    }
    if let Some(v) = a.noise_level {
        spec.noise_level = v;
    }
    a.seed = Some(spec.seed);
    a.audio = Some(spec);
    let run = Run::new("gen-audio", &a)?;
    let (clips, voices) = gen_audio(a.audio.as_ref().expect("set above"))?;
    create_dir(&dir.join("wav"))?;
    let mut store = Store::new();
    store.provenance = run.provenance();
    for c in &clips {
        let rel = format!("wav/{}.wav", c.utterance_id);
        write_wav(dir.join(&rel), &c.clip)?;
        let mut r = UtteranceRecord::new(&c.utterance_id, &c.speaker_id, NO_LANGUAGE, "", 1);
        r.source = Some(rel);
        store.push(r)?;
    }
    store.write_manifest(dir.join("manifest.jsonl"), false)?;
    // WAV files cannot hold the run record, so it sits next to them
    run.write_json(&dir.join("run.json"), json!({ "voices": voices }))?;
    println!("{} clips -> {}", clips.len(), dir.display());
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractArgs {
    /// Manifest whose records name WAV files in `source`, relative to it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature container to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub n_coeffs: Option<usize>,
    #[arg(long)]
    pub n_mel_filters: Option<usize>,
    #[arg(long)]
    pub window_ms: Option<f64>,
    #[arg(long)]
    pub hop_ms: Option<f64>,
    #[arg(long)]
    pub preemphasis: Option<f64>,
    /// Per-utterance mean/variance normalization.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Full front-end configuration; config file only.
    #[arg(skip)]
    pub mfcc: Option<MfccConfig>,
}

pub fn extract(mut a: ExtractArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let manifest = req(&a.manifest, "manifest")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&manifest])?;
    let mut m = a.mfcc.take().unwrap_or_default();
    if let Some(v) = a.n_coeffs {
        m.n_coeffs = v;
    }
    if let Some(v) = a.n_mel_filters {
        m.n_mel_filters = v;
    }
    if let Some(v) = a.window_ms {
        m.window_ms = v;
    }
    if let Some(v) = a.hop_ms {
        m.hop_ms = v;
    }
    if let Some(v) = a.preemphasis {
        m.preemphasis = v;
    }
    if let Some(v) = a.normalize {
        m.normalize = v;
    }
    a.mfcc = Some(m.clone());
    let run = Run::new("extract", &a)?;

    let store =
        ingest_manifest(&manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut clips = Vec::with_capacity(store.len());
    for r in store.records() {
        let Some(src) = &r.source else {
            bail!("{} has no source audio", r.utterance_id);
        };
        let path = base.join(src);
        let clip = read_wav(&path).with_context(|| format!("reading {}", path.display()))?;
        clips.push((r.utterance_id.clone(), clip));
    }
    let feats = extract_batch(&clips, &m)?;
    let items = feats
        .into_iter()
        .map(|(id, f)| (store.get(&id).expect("id from store").clone(), f))
        .collect();
    let set = FeatureSet {
        items,
        provenance: run.provenance(),
    };
    save_features(&set, &output)?;
    println!(
        "{} feature matrices -> {}",
        set.items.len(),
        output.display()
    );
    Ok(())
}

fn parse_pooling(s: &str) -> Result<Pooling, String> {
    match s {
        "mean" => Ok(Pooling::Mean),
        "last" => Ok(Pooling::Last),
        _ => Err(format!("unknown pooling {s:?}, expected mean or last")),
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Feature container from `extract`; speakers are the class labels.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Model container to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional CSV of the loss per optimizer step.
    #[arg(long)]
    pub losses: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// mean or last
    #[arg(long, value_parser = parse_pooling)]
    pub pooling: Option<Pooling>,
}

pub fn train_cmd(mut a: TrainArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let features = req(&a.features, "features")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&features])?;
    let set =
        load_features(&features).with_context(|| format!("loading {}", features.display()))?;
    let Some((_, first)) = set.items.first() else {
        bail!("{} holds no features", features.display());
    };
    let speakers: Vec<String> = set
        .items
        .iter()
        .map(|(r, _)| r.speaker_id.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = speakers
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let d = EncoderConfig::default();
    let config = EncoderConfig {
        input_dim: first.n_coeffs,
        n_recurrent_layers: *a.layers.get_or_insert(d.n_recurrent_layers),
        recurrent_units: *a.units.get_or_insert(d.recurrent_units),
        embedding_dim: *a.embedding_dim.get_or_insert(d.embedding_dim),
        n_speakers: speakers.len(),
        learning_rate: *a.learning_rate.get_or_insert(d.learning_rate),
        batch_size: *a.batch_size.get_or_insert(d.batch_size),
        max_steps: *a.steps.get_or_insert(d.max_steps),
        seed: *a.seed.get_or_insert(d.seed),
        pooling: *a.pooling.get_or_insert(d.pooling),
    };
    let run = Run::new("train", &a)?;
    let data: Vec<_> = set
        .items
        .iter()
        .map(|(r, f)| (f.clone(), index[r.speaker_id.as_str()]))
        .collect();
    let out = train(&data, &config)?;
    let mut prov = run.provenance();
    prov["speakers"] = json!(speakers);
    prov["encoder"] = serde_json::to_value(&config)?;
    prov["final_loss"] = json!(out.losses.last());
    save_model(&output, &out.model, prov)?;
    if let Some(p) = &a.losses {
        run.write_csv(
            p,
            &["step".into(), "loss".into()],
            out.losses
                .iter()
                .enumerate()
                .map(|(i, l)| vec![(i + 1).to_string(), num(*l)]),
        )?;
    }
    println!(
        "{} parameters, {} steps, final loss {} -> {}",
        out.model.n_params(),
        out.losses.len(),
        out.losses
            .last()
            .map_or("n/a".into(), |l| format!("{l:.4}")),
        output.display()
    );
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Embedding container to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn embed(mut a: EmbedArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let model_path = req(&a.model, "model")?;
    let features = req(&a.features, "features")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&model_path, &features])?;
    let run = Run::new("embed", &a)?;
    let model =
        load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let set =
        load_features(&features).with_context(|| format!("loading {}", features.display()))?;
    let mut store = Store::new();
    store.provenance = run.provenance();
    for (r, f) in &set.items {
        let e = model
            .embed(f)
            .with_context(|| format!("embedding {}", r.utterance_id))?;
        store.push(r.clone().with_embedding(e))?;
    }
    save_embeddings(&store, &output)?;
    println!("{} embeddings -> {}", store.len(), output.display());
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesArgs {
    /// Embedding container.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON file to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn profiles(mut a: ProfilesArgs, cfg: Option<&Path>) -> Result<()> {
    a = crate::config::resolve(cfg, &a)?;
    let input = req(&a.input, "input")?;
    let output = req(&a.output, "output")?;
    guard(&[&output], &[&input])?;
    let run = Run::new("profiles", &a)?;
    let store = load_store(&input)?;
    let profiles = build_profiles(&store)?;
    run.write_json(&output, json!({ "profiles": profiles }))?;
    for p in &profiles {
        let langs: Vec<String> = p
            .entries
            .iter()
            .map(|e| format!("{}({})", e.language, e.count))
            .collect();
        println!("{}: {}", p.speaker_id, langs.join(" "));
    }
    Ok(())
}
