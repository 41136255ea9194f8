//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use crossim::indexes::{self, CkaMethod, DegeneratePolicy};
use crossim::io::{self, npy, results, OutputFormat, RunConfig};
use crossim::pipeline::{self, CorrelationProfile, GenSpec};
use crossim::synth::{self, Distribution, Transform};
use crossim::validate::dual_form_shape;
use crossim::{center_columns, matching_accuracy, ActivationMatrix, CenteredMatrix, Result};

type Criterion = fn() -> Result<Outcome>;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn c(a: &ActivationMatrix) -> CenteredMatrix {
    center_columns(a)
}

fn cka(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64> {
    Ok(indexes::linear_cka(&c(x), &c(y), CkaMethod::Gram)?.score)
}

fn anc(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64> {
    Ok(indexes::anc(&c(x), &c(y), DegeneratePolicy::Zero)?.score)
}

fn dual_form_cka() -> Result<Outcome> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let (m, n) = dual_form_shape(seed);
        let x = c(&synth::random_matrix(seed, m, n, Distribution::Gaussian)?);
        let y = c(&synth::random_matrix(seed + 1_000, m, n, Distribution::Correlated(0.5))?);
        let spectral = indexes::linear_cka(&x, &y, CkaMethod::Spectral)?.score;
        let gram = indexes::linear_cka(&x, &y, CkaMethod::Gram)?.score;
        worst = worst.max((spectral - gram).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && elapsed < Duration::from_secs(5),
        format!("100 trials, max |spectral - gram| = {worst:.2e} (< 1e-8), {elapsed:.2?} (< 5 s)"),
    )
}

fn invariance_matrix() -> Result<Outcome> {
    let start = Instant::now();
    let (mut cka_drift, mut cca_drift, mut anc_drift) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let (x, y) = synth::correlated_pair(seed, 120, 16, 0.6)?;
        let base = cka(&x, &y)?;
        for t in [
            Transform::Orthogonal(seed + 1),
            Transform::IsotropicScale(0.1 + seed as f64),
            Transform::Permutation(seed + 2),
        ] {
            cka_drift = cka_drift.max((base - cka(&synth::apply_transform(&x, t)?, &y)?).abs());
        }

        let moved = synth::apply_transform(&x, Transform::Invertible(seed + 3))?;
        let (cx, cy, cm) = (c(&x), c(&y), c(&moved));
        let cca = (indexes::cca(&cx, &cy)?.score - indexes::cca(&cm, &cy)?.score).abs();
        let svcca = (indexes::svcca(&cx, &cy, 1.0)?.score - indexes::svcca(&cm, &cy, 1.0)?.score).abs();
        cca_drift = cca_drift.max(cca).max(svcca);

        let ax = synth::apply_transform(&x, Transform::PerNeuronAffine(seed + 4))?;
        let ay = synth::apply_transform(&y, Transform::PerNeuronAffine(seed + 5))?;
        anc_drift = anc_drift.max((anc(&x, &y)? - anc(&ax, &ay)?).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        cka_drift < 1e-8 && cca_drift < 1e-6 && anc_drift < 1e-10 && elapsed < Duration::from_secs(30),
        format!(
            "20 seeds, CKA drift {cka_drift:.2e} (< 1e-8), CCA/SVCCA(1.0) drift {cca_drift:.2e} (< 1e-6), \
             ANC drift {anc_drift:.2e} (< 1e-10), {elapsed:.2?} (< 30 s)"
        ),
    )
}

fn svcca_full_equals_cca() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let m = 30 + 10 * seed as usize;
        let (x, y) = synth::correlated_pair(seed, m, 3 + (seed as usize % 10), 0.4)?;
        let (x, y) = (c(&x), c(&y));
        worst = worst.max((indexes::svcca(&x, &y, 1.0)?.score - indexes::cca(&x, &y)?.score).abs());
    }
    outcome(worst < 1e-8, format!("20 trials, max |SVCCA(1.0) - CCA| = {worst:.2e} (< 1e-8)"))
}

fn alignment_sensitivity() -> Result<Outcome> {
    let (x, y) = synth::correlated_pair(2024, 1000, 100, 0.9)?;
    let deranged = synth::apply_transform(&y, Transform::Permutation(2024))?;
    let aligned = anc(&x, &y)?;
    let shuffled = anc(&x, &deranged)?;
    let cka_change = (cka(&x, &y)? - cka(&x, &deranged)?).abs();
    outcome(
        aligned >= 0.85 && shuffled < 0.2 && cka_change < 1e-8,
        format!("ANC aligned {aligned:.4} (>= 0.85), deranged {shuffled:.4} (< 0.2), CKA change {cka_change:.2e} (< 1e-8)"),
    )
}

fn cka_depression() -> Result<Outcome> {
    let (x, y) = synth::dominant_direction_pair(7, 2000, 100, 20f64.sqrt())?;
    let (a, k) = (anc(&x, &y)?, cka(&x, &y)?);
    outcome(a - k > 0.3, format!("ANC {a:.4} - CKA {k:.4} = {:.4} (> 0.3)", a - k))
}

fn probe_sanity() -> Result<Outcome> {
    let x = synth::random_matrix(11, 1000, 32, Distribution::Gaussian)?;
    let own = matching_accuracy(&x, &x)?.accuracy;
    let order = synth::random_derangement(&mut synth::stream(11, 9), 1000);
    let shuffled = matching_accuracy(&x, &x.select_rows(&order)?)?.accuracy;
    outcome(
        own == 1.0 && shuffled < 0.01,
        format!("self-match {own} (= 1.0), shuffled rows {shuffled:.4} (< 0.01) at m = 1000"),
    )
}

fn io_round_trip() -> Result<Outcome> {
    let dir = tempfile::tempdir().map_err(|e| crossim::Error::io("tempdir", e))?;
    let root = dir.path();

    // npy: exact for f64 payloads, including awkward values
    let mut m = synth::random_matrix(5, 37, 9, Distribution::Gaussian)?.into_inner();
    m[(0, 0)] = f64::MIN_POSITIVE;
    m[(1, 1)] = -0.0;
    m[(2, 2)] = 1e300;
    let m = ActivationMatrix::new(m)?;
    let npy_path = root.join("m.npy");
    npy::write_activation_dump(&npy_path, &m)?;
    let back = npy::read_activation_dump(&npy_path)?;
    let npy_exact = back.data().iter().zip(m.data().iter()).all(|(a, b)| a.to_bits() == b.to_bits());

    // compare on generated dumps, twice, in both output formats
    let spec = GenSpec {
        model_id: "synthetic".into(),
        languages: vec!["en".into(), "fr".into(), "de".into()],
        layers: 6,
        m: 300,
        n: 24,
        profile: CorrelationProfile::AlignThenPredict,
        seed: 1,
        dataset_id: "synthetic-parallel".into(),
    };
    let manifest = pipeline::generate(&spec, &root.join("data"))?;
    let run = |sub: &str, format: OutputFormat| -> Result<(pipeline::CompareOutput, Vec<u8>)> {
        let config = RunConfig {
            manifest_paths: vec![manifest.clone()],
            indexes: io::parse_indexes("all")?,
            language_pairs: io::parse_pairs("en-fr,en-de,fr-de")?,
            output_dir: root.join(sub),
            format,
            ..RunConfig::default()
        };
        let (output, paths) = pipeline::cmd_compare(&config)?;
        let bytes = fs::read(&paths[0]).map_err(|e| crossim::Error::io(&paths[0], e))?;
        Ok((output, bytes))
    };
    let (output, csv_a) = run("csv-a", OutputFormat::Csv)?;
    let (_, csv_b) = run("csv-b", OutputFormat::Csv)?;
    let (_, json_a) = run("json-a", OutputFormat::Json)?;
    let (_, json_b) = run("json-b", OutputFormat::Json)?;
    let deterministic = csv_a == csv_b && json_a == json_b;

    let from_csv = io::read_results(root.join("csv-a/scores.csv"))?;
    let from_json = io::read_results(root.join("json-a/scores.json"))?;
    let mut csv_err = 0.0f64;
    let mut json_err = 0.0f64;
    let mut rows = 0;
    for ((orig, c), j) in output.curves.iter().zip(&from_csv).zip(&from_json) {
        for ((p, q), r) in orig.points.iter().zip(&c.points).zip(&j.points) {
            // the CSV stores 10 significant digits; compare against that rounding
            let printed: f64 = results::format_score(p.score).parse().unwrap();
            csv_err = csv_err.max((printed - q.score).abs());
            json_err = json_err.max((p.score - r.score).abs());
            rows += 1;
        }
    }
    let csv_stable = results::curves_to_csv(&from_csv).as_bytes() == csv_a.as_slice();
    let shapes_match = from_csv.len() == output.curves.len() && from_json.len() == output.curves.len();

    outcome(
        npy_exact && deterministic && csv_stable && shapes_match && csv_err < 1e-12 && json_err < 1e-12,
        format!(
            "npy exact {npy_exact}; {rows} rows, CSV err {csv_err:.1e}, JSON err {json_err:.1e} (< 1e-12); \
             CSV re-serialization identical {csv_stable}; compare byte-identical across runs {deterministic}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 7] = [
        ("1 dual-form CKA agreement", dual_form_cka),
        ("2 invariance matrix", invariance_matrix),
        ("3 SVCCA(1.0) equals CCA", svcca_full_equals_cca),
        ("4 alignment-sensitivity separation", alignment_sensitivity),
        ("5 CKA depression by dominant directions", cka_depression),
        ("6 probe sanity", probe_sanity),
        ("7 I/O round trip and determinism", io_round_trip),
    ];
    let mut all = true;
    for (name, check) in criteria {
        let (passed, detail) = match check() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= passed;
        println!("{} criterion {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
