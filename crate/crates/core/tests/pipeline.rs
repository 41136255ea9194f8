//! End-to-end batch runs over generated dumps.

use std::fs;
use std::path::{Path, PathBuf};

use crossim::io::{self, results, ActivationManifest, LanguagePair, LayerSelection, ManifestFile, ManifestSet, RunConfig};
use crossim::pipeline::{self, CorrelationProfile, GenSpec};
use crossim::synth::{self, Transform};
use crossim::{ActivationMatrix, DegeneratePolicy, Error, IndexKind};

fn gen(dir: &Path, m: usize, n: usize, layers: usize, profile: CorrelationProfile, seed: u64) -> PathBuf {
    let spec = GenSpec {
        model_id: "toy".into(),
        languages: vec!["en".into(), "fr".into(), "de".into()],
        layers,
        m,
        n,
        profile,
        seed,
        dataset_id: "toy-parallel".into(),
    };
    pipeline::generate(&spec, dir).unwrap()
}

fn config(manifest: PathBuf, out: &Path, pairs: &str, indexes: &str) -> RunConfig {
    RunConfig {
        manifest_paths: vec![manifest],
        indexes: io::parse_indexes(indexes).unwrap(),
        language_pairs: io::parse_pairs(pairs).unwrap(),
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn self_pair_scores_one_for_every_index() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 200, 16, 3, CorrelationProfile::AlignThenPredict, 1);
    let cfg = config(manifest, &dir.path().join("out"), "en-en", "all");
    let set = ManifestSet::load(&cfg.manifest_paths).unwrap();
    let out = pipeline::compare(&set, &cfg).unwrap();
    assert_eq!(out.curves.len(), IndexKind::ALL.len());
    for curve in &out.curves {
        assert_eq!(curve.points.len(), 4);
        for p in &curve.points {
            assert!((p.score - 1.0).abs() < 1e-8, "{} layer {}: {}", curve.index, p.layer, p.score);
        }
    }
}

#[test]
fn constant_correlation_recovered_by_anc() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 1000, 32, 2, CorrelationProfile::Constant(0.9), 2);
    let cfg = config(manifest, &dir.path().join("out"), "en-fr,en-de", "anc");
    let set = ManifestSet::load(&cfg.manifest_paths).unwrap();
    let out = pipeline::compare(&set, &cfg).unwrap();
    assert_eq!(out.curves.len(), 2);
    for p in out.curves.iter().flat_map(|c| &c.points) {
        assert!((p.score - 0.9).abs() < 0.03, "{}", p.score);
    }
    assert_eq!(out.aggregates.len(), 3);
    assert!(out.aggregates.iter().all(|a| a.pair_count == 2));
}

#[test]
fn missing_language_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 50, 4, 1, CorrelationProfile::Constant(0.5), 3);
    let cfg = config(manifest, &dir.path().join("out"), "en-sw", "anc");
    match pipeline::cmd_compare(&cfg) {
        Err(Error::MissingArtifact { language, .. }) => assert_eq!(language, "sw"),
        other => panic!("expected MissingArtifact, got {other:?}"),
    }
}

#[test]
fn mismatched_corpora_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 50, 4, 0, CorrelationProfile::Constant(0.5), 4);
    let mut file = ManifestFile::read(&manifest).unwrap();
    let fr: &mut ActivationManifest = file.dumps.iter_mut().find(|d| d.language == "fr").unwrap();
    fr.dataset_hash = "0".repeat(64);
    file.write(&manifest).unwrap();
    let cfg = config(manifest, &dir.path().join("out"), "en-fr", "anc");
    assert!(matches!(pipeline::cmd_compare(&cfg), Err(Error::InvalidData(_))));
}

#[test]
fn tampered_dump_fails_hash_check() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 50, 4, 0, CorrelationProfile::Constant(0.5), 5);
    let victim = dir.path().join("toy_l0_fr.npy");
    let mut bytes = fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    fs::write(&victim, bytes).unwrap();
    let cfg = config(manifest, &dir.path().join("out"), "en-fr", "anc");
    assert!(pipeline::cmd_compare(&cfg).is_err());
}

#[test]
fn subsampling_keeps_rows_aligned() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 400, 8, 1, CorrelationProfile::Constant(0.7), 6);
    let mut cfg = config(manifest, &dir.path().join("out"), "en-en", "anc,cka");
    cfg.sample_size = Some(100);
    cfg.seed = 9;
    let set = ManifestSet::load(&cfg.manifest_paths).unwrap();
    // a self pair stays perfect only if both sides kept the same rows
    let out = pipeline::compare(&set, &cfg).unwrap();
    assert!(out.curves.iter().flat_map(|c| &c.points).all(|p| (p.score - 1.0).abs() < 1e-10));
    let (x, _) = pipeline::load_pair(&set, "toy", &LanguagePair::new("en", "fr"), 0, &cfg).unwrap();
    assert_eq!(x.rows(), 100);
}

#[test]
fn compare_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 120, 10, 4, CorrelationProfile::AlignThenPredict, 7);
    let read = |sub: &str| {
        let cfg = config(manifest.clone(), &dir.path().join(sub), "en-fr,fr-de", "all");
        pipeline::cmd_compare(&cfg).unwrap();
        (
            fs::read(dir.path().join(sub).join("scores.csv")).unwrap(),
            fs::read(dir.path().join(sub).join("aggregate.csv")).unwrap(),
        )
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn scores_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 100, 6, 2, CorrelationProfile::AlignThenPredict, 8);
    let cfg = config(manifest, &dir.path().join("out"), "en-fr", "anc,pwcca");
    let (output, _) = pipeline::cmd_compare(&cfg).unwrap();
    let path = dir.path().join("out/scores.csv");
    let text = fs::read_to_string(&path).unwrap();
    let parsed = io::read_results(&path).unwrap();
    assert_eq!(results::curves_to_csv(&parsed), text);
    for (a, b) in output.curves.iter().zip(&parsed) {
        for (p, q) in a.points.iter().zip(&b.points) {
            let rounded: f64 = results::format_score(p.score).parse().unwrap();
            assert!((rounded - q.score).abs() < 1e-12);
            assert!((p.score - q.score).abs() < 1e-9);
        }
    }
}

#[test]
fn layer_selection_limits_output() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 60, 4, 6, CorrelationProfile::AlignThenPredict, 9);
    let mut cfg = config(manifest, &dir.path().join("out"), "en-fr", "cka");
    cfg.layers = "0,3-4".parse::<LayerSelection>().unwrap();
    let set = ManifestSet::load(&cfg.manifest_paths).unwrap();
    let out = pipeline::compare(&set, &cfg).unwrap();
    let layers: Vec<usize> = out.curves[0].points.iter().map(|p| p.layer).collect();
    assert_eq!(layers, vec![0, 3, 4]);
}

#[test]
fn noisy_neuron_lands_in_bottom_k() {
    let (x, y) = synth::correlated_pair(10, 1000, 20, 0.9).unwrap();
    let noise = synth::gaussian_matrix(&mut synth::stream(10, 77), 1000, 1);
    let mut data = y.data().clone();
    data.set_column(0, &noise.column(0));
    let y = ActivationMatrix::new(data).unwrap();
    let pair = LanguagePair::new("en", "fr");
    let report = pipeline::neuron_report("toy", &pair, 0, &x, &y, 3, DegeneratePolicy::Zero).unwrap();
    assert_eq!(report.bottom[0].neuron, 0);
    assert!(report.bottom[0].correlation < 0.1);
    assert_eq!(report.top.len(), 3);
    assert!(report.top.iter().all(|e| e.neuron != 0 && e.correlation > 0.8));

    let clamped = pipeline::neuron_report("toy", &pair, 0, &x, &y, 50, DegeneratePolicy::Zero).unwrap();
    assert!(clamped.clamped);
    assert_eq!(clamped.k, 20);
}

#[test]
fn neurons_command_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 100, 8, 2, CorrelationProfile::Constant(0.8), 11);
    let cfg = config(manifest, &dir.path().join("out"), "en-fr", "anc");
    let (report, path) = pipeline::cmd_neurons(&cfg, None, &LanguagePair::new("en", "fr"), 1, 4).unwrap();
    assert!(path.ends_with("neurons_toy_en-fr_l1.json"));
    let back: pipeline::NeuronReport = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn matching_self_pair_and_shuffled_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 300, 16, 1, CorrelationProfile::Constant(0.99), 12);
    let cfg = config(manifest, &dir.path().join("out"), "en-en,en-fr", "anc");
    let (rows, path) = pipeline::cmd_match(&cfg).unwrap();
    assert!(path.exists());
    let self_rows: Vec<_> = rows.iter().filter(|r| r.pair == "en-en").collect();
    assert!(self_rows.iter().all(|r| r.accuracy == 1.0));
    assert!(rows.iter().filter(|r| r.pair == "en-fr").all(|r| r.accuracy > 0.9));

    let x = synth::random_matrix(13, 1000, 16, synth::Distribution::Gaussian).unwrap();
    let order = synth::random_derangement(&mut synth::stream(13, 5), 1000);
    let shuffled = x.select_rows(&order).unwrap();
    let acc = crossim::matching_accuracy(&x, &shuffled).unwrap().accuracy;
    assert!(acc < 0.01, "{acc}");
    let rotated = synth::apply_transform(&x, Transform::Orthogonal(2)).unwrap();
    assert!(crossim::matching_accuracy(&x, &rotated).is_ok());
}

#[test]
fn plot_writes_one_chart_per_index() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), 80, 6, 3, CorrelationProfile::AlignThenPredict, 14);
    let cfg = config(manifest, &dir.path().join("out"), "en-fr,en-de", "anc,cka");
    pipeline::cmd_compare(&cfg).unwrap();
    let charts = pipeline::cmd_plot(&dir.path().join("out/scores.csv"), &dir.path().join("plots")).unwrap();
    assert_eq!(charts.len(), 2);
    for chart in charts {
        let svg = fs::read_to_string(chart).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("legend-entry").count(), 2);
    }

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, results::CURVE_HEADER.join(",") + "\n").unwrap();
    assert!(matches!(pipeline::cmd_plot(&empty, dir.path()), Err(Error::Format(_))));
}
