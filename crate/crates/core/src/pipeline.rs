//! Batch jobs behind the command-line verbs: per-layer index curves,
//! per-neuron reports, matching accuracy, synthetic dump generation, and
//! chart rendering.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{center_columns, ActivationMatrix, IndexKind};
use crate::error::{Error, Result};
use crate::indexes::{self, DegeneratePolicy, IndexParams};
use crate::io::manifest::{sha256_hex, ActivationManifest, ManifestFile, ManifestSet, Pooling, ResolvedDump};
use crate::io::results::{self, aggregate_pairs, CurvePoint, LayerCurve, MatchingRow, PairAggregate};
use crate::io::{npy, svg, LanguagePair, RunConfig};
use crate::probes;
use crate::synth;

const SUBSAMPLE_STREAM: u64 = 3;

impl RunConfig {
    pub fn index_params(&self) -> IndexParams {
        IndexParams {
            svcca_threshold: self.svcca_threshold,
            anc_policy: self.anc_policy,
            ..IndexParams::default()
        }
    }
}

/// Row indices kept when subsampling `m` aligned rows down to `size`.
/// Depends only on `(seed, m, size)`, so both languages of a pair (and every
/// layer) keep the same rows.
pub fn subsample_rows(seed: u64, m: usize, size: Option<usize>) -> Option<Vec<usize>> {
    let size = size?;
    if size >= m {
        return None;
    }
    let mut rows = sample(&mut synth::stream(seed, SUBSAMPLE_STREAM), m, size).into_vec();
    rows.sort_unstable();
    Some(rows)
}

/// Loads both sides of a pair at one layer, checking that the rows are
/// translations of each other and applying the configured subsample.
pub fn load_pair(
    set: &ManifestSet,
    model_id: &str,
    pair: &LanguagePair,
    layer: usize,
    config: &RunConfig,
) -> Result<(ActivationMatrix, ActivationMatrix)> {
    let src = set.get(model_id, layer, &pair.source)?;
    let tgt = set.get(model_id, layer, &pair.target)?;
    check_alignment(src, tgt)?;
    let (x, y) = (src.load()?, tgt.load()?);
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} has {} rows, {} has {}",
            src.path().display(),
            x.rows(),
            tgt.path().display(),
            y.rows()
        )));
    }
    match subsample_rows(config.seed, x.rows(), config.sample_size) {
        Some(rows) => Ok((x.select_rows(&rows)?, y.select_rows(&rows)?)),
        None => Ok((x, y)),
    }
}

fn check_alignment(src: &ResolvedDump, tgt: &ResolvedDump) -> Result<()> {
    let (a, b) = (&src.entry, &tgt.entry);
    if a.dataset_hash != b.dataset_hash || a.dataset_id != b.dataset_id {
        return Err(Error::InvalidData(format!(
            "{} and {} come from different corpora ({}:{} vs {}:{}); rows are not aligned",
            src.path().display(),
            tgt.path().display(),
            a.dataset_id,
            a.dataset_hash,
            b.dataset_id,
            b.dataset_hash
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Job {
    model_id: String,
    pair: LanguagePair,
    layer: usize,
}

fn jobs(set: &ManifestSet, config: &RunConfig) -> Result<Vec<Job>> {
    if config.language_pairs.is_empty() {
        return Err(Error::InvalidParam("no language pairs requested".into()));
    }
    let mut out = Vec::new();
    for model_id in set.models() {
        let layers = config.layers.resolve(&set.layers(&model_id));
        for pair in &config.language_pairs {
            for &layer in &layers {
                out.push(Job {
                    model_id: model_id.clone(),
                    pair: pair.clone(),
                    layer,
                });
            }
        }
    }
    Ok(out)
}

/// Index, score, degenerate neuron count.
type Scored = (IndexKind, f64, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutput {
    pub curves: Vec<LayerCurve>,
    pub aggregates: Vec<PairAggregate>,
}

/// Scores every requested index for every `(model, pair, layer)`.
pub fn compare(set: &ManifestSet, config: &RunConfig) -> Result<CompareOutput> {
    if config.indexes.is_empty() {
        return Err(Error::InvalidParam("no indexes requested".into()));
    }
    let params = config.index_params();
    let scored: Vec<(Job, Vec<Scored>)> = jobs(set, config)?
        .into_par_iter()
        .map(|job| {
            let (x, y) = load_pair(set, &job.model_id, &job.pair, job.layer, config)?;
            let (cx, cy) = (center_columns(&x), center_columns(&y));
            let scores = config
                .indexes
                .iter()
                .map(|&kind| {
                    let r = indexes::compute(kind, &cx, &cy, &params)?;
                    Ok((kind, r.score, r.degenerate_count))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((job, scores))
        })
        .collect::<Result<_>>()?;

    let mut grouped: BTreeMap<(String, String, String), Vec<CurvePoint>> = BTreeMap::new();
    for (job, scores) in scored {
        for (kind, score, degenerate_count) in scores {
            grouped
                .entry((job.model_id.clone(), kind.name().to_string(), job.pair.label()))
                .or_default()
                .push(CurvePoint {
                    layer: job.layer,
                    score,
                    degenerate_count,
                });
        }
    }
    let mut curves: Vec<LayerCurve> = grouped
        .into_iter()
        .map(|((model_id, index, pair), points)| LayerCurve {
            model_id,
            index,
            pair,
            points,
        })
        .collect();
    results::sort_curves(&mut curves);
    let aggregates = aggregate_pairs(&curves);
    Ok(CompareOutput { curves, aggregates })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs [`compare`] and writes `scores.<csv|json>` and `aggregate.csv` into
/// the output directory. Returns the written paths.
pub fn cmd_compare(config: &RunConfig) -> Result<(CompareOutput, Vec<PathBuf>)> {
    let set = ManifestSet::load(&config.manifest_paths)?;
    let output = compare(&set, config)?;
    create_dir(&config.output_dir)?;
    let scores = config.output_dir.join(format!("scores.{}", config.format.extension()));
    results::write_results(&scores, &output.curves, config.format)?;
    let aggregate = config.output_dir.join("aggregate.csv");
    write_text(&aggregate, &results::aggregates_to_csv(&output.aggregates))?;
    Ok((output, vec![scores, aggregate]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronEntry {
    pub neuron: usize,
    pub correlation: f64,
}

/// Per-neuron |correlation| breakdown of ANC for one pair and layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronReport {
    pub model_id: String,
    pub pair: String,
    pub layer: usize,
    pub k: usize,
    /// `k` was larger than the neuron count and was clamped.
    pub clamped: bool,
    /// Most aligned (language-neutral) neurons first.
    pub top: Vec<NeuronEntry>,
    /// Least aligned (language-specific) neurons first.
    pub bottom: Vec<NeuronEntry>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub degenerate: Vec<usize>,
}

pub fn neuron_report(
    model_id: &str,
    pair: &LanguagePair,
    layer: usize,
    x: &ActivationMatrix,
    y: &ActivationMatrix,
    k: usize,
    policy: DegeneratePolicy,
) -> Result<NeuronReport> {
    let result = indexes::anc(&center_columns(x), &center_columns(y), policy)?;
    let components = result.components.expect("ANC reports components");
    let mut entries: Vec<NeuronEntry> = components
        .iter()
        .enumerate()
        .filter(|(i, _)| policy == DegeneratePolicy::Zero || !result.degenerate.contains(i))
        .map(|(neuron, &correlation)| NeuronEntry { neuron, correlation })
        .collect();
    entries.sort_by(|a, b| a.correlation.total_cmp(&b.correlation).then(a.neuron.cmp(&b.neuron)));

    let n = components.len();
    let clamped = k > n;
    if clamped {
        log::warn!("k = {k} exceeds the {n} neurons of layer {layer}; reporting all of them");
    }
    let k = k.min(entries.len());
    let bottom = entries[..k].to_vec();
    let top = entries.iter().rev().take(k).copied().collect();
    Ok(NeuronReport {
        model_id: model_id.to_string(),
        pair: pair.label(),
        layer,
        k,
        clamped,
        top,
        bottom,
        mean: result.score,
        min: entries.first().map_or(0.0, |e| e.correlation),
        max: entries.last().map_or(0.0, |e| e.correlation),
        degenerate: result.degenerate,
    })
}

/// Picks the single model in the set unless one is named.
fn resolve_model(set: &ManifestSet, model: Option<&str>) -> Result<String> {
    match model {
        Some(m) => Ok(m.to_string()),
        None => {
            let models = set.models();
            match models.as_slice() {
                [only] => Ok(only.clone()),
                [] => Err(Error::InvalidParam("manifests list no dumps".into())),
                _ => Err(Error::InvalidParam(format!(
                    "manifests cover several models ({}); choose one",
                    models.join(", ")
                ))),
            }
        }
    }
}

pub fn cmd_neurons(
    config: &RunConfig,
    model: Option<&str>,
    pair: &LanguagePair,
    layer: usize,
    k: usize,
) -> Result<(NeuronReport, PathBuf)> {
    let set = ManifestSet::load(&config.manifest_paths)?;
    let model_id = resolve_model(&set, model)?;
    let (x, y) = load_pair(&set, &model_id, pair, layer, config)?;
    let report = neuron_report(&model_id, pair, layer, &x, &y, k, config.anc_policy)?;
    create_dir(&config.output_dir)?;
    let path = config
        .output_dir
        .join(format!("neurons_{}_{}_l{layer}.json", sanitize(&model_id), pair.label()));
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_text(&path, &text)?;
    Ok((report, path))
}

pub fn matching(set: &ManifestSet, config: &RunConfig) -> Result<Vec<MatchingRow>> {
    let mut rows: Vec<MatchingRow> = jobs(set, config)?
        .into_iter()
        .map(|job| {
            let (x, y) = load_pair(set, &job.model_id, &job.pair, job.layer, config)?;
            let report = probes::matching_accuracy(&x, &y)?;
            Ok(MatchingRow {
                model_id: job.model_id,
                pair: job.pair.label(),
                layer: job.layer,
                accuracy: report.accuracy,
                hits: report.hits,
                m: report.m,
                degenerate_count: report.degenerate_queries,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| (&a.model_id, &a.pair, a.layer).cmp(&(&b.model_id, &b.pair, b.layer)));
    Ok(rows)
}

pub fn cmd_match(config: &RunConfig) -> Result<(Vec<MatchingRow>, PathBuf)> {
    let set = ManifestSet::load(&config.manifest_paths)?;
    let rows = matching(&set, config)?;
    create_dir(&config.output_dir)?;
    let path = config.output_dir.join("matching.csv");
    write_text(&path, &results::matching_to_csv(&rows))?;
    Ok((rows, path))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Renders one chart per `(model, index)` found in a results file.
pub fn cmd_plot(results_path: &Path, output_dir: &Path) -> Result<Vec<PathBuf>> {
    let curves = results::read_results(results_path)?;
    if curves.is_empty() {
        return Err(Error::Format(format!("{} holds no data rows", results_path.display())));
    }
    let mut groups: BTreeMap<(String, String), Vec<LayerCurve>> = BTreeMap::new();
    for c in curves {
        groups.entry((c.model_id.clone(), c.index.clone())).or_default().push(c);
    }
    create_dir(output_dir)?;
    let mut written = Vec::new();
    for ((model, index), curves) in groups {
        let path = output_dir.join(format!("{}_{}.svg", sanitize(&model), sanitize(&index)));
        write_text(&path, &svg::render_chart(&format!("{model} / {index}"), &curves))?;
        written.push(path);
    }
    Ok(written)
}

/// Correlation between the pivot language and every other language, per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationProfile {
    Constant(f64),
    PerLayer(Vec<f64>),
    /// Rises from 0.3 at layer 0 to 0.75 two thirds of the way up, then
    /// falls to 0.55 at the last layer.
    AlignThenPredict,
}

impl CorrelationProfile {
    pub fn at(&self, layer: usize, last_layer: usize) -> f64 {
        match self {
            CorrelationProfile::Constant(r) => *r,
            CorrelationProfile::PerLayer(v) => v[layer.min(v.len() - 1)],
            CorrelationProfile::AlignThenPredict => {
                let (low, peak, end) = (0.3, 0.75, 0.55);
                if last_layer == 0 {
                    return peak;
                }
                let peak_layer = ((2 * last_layer) as f64 / 3.0).round().max(1.0) as usize;
                if layer <= peak_layer {
                    low + (peak - low) * layer as f64 / peak_layer as f64
                } else {
                    peak + (end - peak) * (layer - peak_layer) as f64 / (last_layer - peak_layer) as f64
                }
            }
        }
    }
}

/// Parameters for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub model_id: String,
    /// The first language is the pivot the others correlate with.
    pub languages: Vec<String>,
    /// Transformer layers; dumps cover layers `0..=layers`.
    pub layers: usize,
    pub m: usize,
    pub n: usize,
    pub profile: CorrelationProfile,
    pub seed: u64,
    pub dataset_id: String,
}

/// Writes synthetic dumps plus `manifest.json` into `dir`.
///
/// At layer `l` the pivot language is a Gaussian matrix `Z`; every other
/// language is `ρ_l·Z + √(1-ρ_l²)·E` with its own noise `E`. All languages
/// of a layer then share one per-neuron affine map (a neuron keeps its scale
/// and offset whatever the input language).
pub fn generate(spec: &GenSpec, dir: &Path) -> Result<PathBuf> {
    if spec.languages.is_empty() {
        return Err(Error::InvalidParam("need at least one language".into()));
    }
    create_dir(dir)?;
    let dataset_hash = sha256_hex(format!("{}:{}:{}", spec.dataset_id, spec.seed, spec.m).as_bytes());
    let mut entries = Vec::new();
    for layer in 0..=spec.layers {
        let rho = spec.profile.at(layer, spec.layers);
        let layer_seed = spec.seed.wrapping_mul(1_000_003).wrapping_add(layer as u64);
        let pivot = synth::random_matrix(layer_seed, spec.m, spec.n, synth::Distribution::Gaussian)?;
        for (k, language) in spec.languages.iter().enumerate() {
            let raw = if k == 0 {
                pivot.clone()
            } else {
                if !(-1.0..=1.0).contains(&rho) {
                    return Err(Error::InvalidParam(format!("correlation {rho} outside [-1, 1]")));
                }
                let noise = synth::gaussian_matrix(&mut synth::stream(layer_seed, 100 + k as u64), spec.m, spec.n);
                ActivationMatrix::new(pivot.data() * rho + noise * (1.0 - rho * rho).sqrt())?
            };
            let matrix = synth::apply_transform(&raw, synth::Transform::PerNeuronAffine(layer_seed))?;
            let bytes = npy::encode(&matrix);
            let file = format!("{}_l{layer}_{language}.npy", sanitize(&spec.model_id));
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(ActivationManifest {
                model_id: spec.model_id.clone(),
                layer_index: layer,
                language: language.clone(),
                pooling: Pooling::Mean,
                dataset_id: spec.dataset_id.clone(),
                dataset_hash: dataset_hash.clone(),
                dump_path: file,
                m: spec.m,
                n: spec.n,
                content_sha256: Some(sha256_hex(&bytes)),
            });
        }
    }
    let manifest = dir.join("manifest.json");
    ManifestFile::new(entries).write(&manifest)?;
    Ok(manifest)
}
