//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers. Oracles here are implemented
//! independently of the library code paths they check.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dyadic_core::clustering::{cluster_segments, cosine_distance};
use dyadic_core::detect::{evaluate, DetectorKind, DyadicVerdict};
use dyadic_core::interaction::timing_features;
use dyadic_core::io::{
    load_embeddings, load_manifest, parse_rttm, write_rttm, EmbeddingTable, IoError,
};
use dyadic_core::pipeline::{run_eval, run_tune, LoadedRecording};
use dyadic_core::rng::Pcg32;
use dyadic_core::spurious::SpuriousMode;
use dyadic_core::stats::{pearson, t_test_welch};
use dyadic_core::synth::{
    gen_conversation, gen_detection_corpus, ConversationSpec, DetectionCorpusSpec, TurnModel,
};
use dyadic_core::timeline::{validate_timeline, SpeechSegment, Window};

// ---------------------------------------------------------------
// Criterion 1: timing features match the brute-force pair-scan
// oracle exactly on 100 seeded random windows, in under 10 seconds.
// ---------------------------------------------------------------

struct OracleTiming {
    pause_time: Option<f64>,
    response_time: Option<f64>,
    n_pause: usize,
    n_response: usize,
    n_overlap: usize,
}

/// O(n^2) oracle: each target segment's immediate predecessor is found
/// by scanning all other segments, no sorting involved.
fn oracle_timing(window: &Window, target: &str) -> OracleTiming {
    let key = |s: &SpeechSegment| (s.onset, s.duration, s.speaker.clone());
    let mut pauses = Vec::new();
    let mut responses = Vec::new();
    let mut n_overlap = 0;
    for cur in &window.segments {
        if cur.speaker.as_deref() != Some(target) {
            continue;
        }
        let mut pred: Option<&SpeechSegment> = None;
        for other in &window.segments {
            if std::ptr::eq(other, cur) || key(other) >= key(cur) {
                continue;
            }
            if pred.map(|p| key(other) > key(p)).unwrap_or(true) {
                pred = Some(other);
            }
        }
        if let Some(prev) = pred {
            if prev.speaker.as_deref() == Some(target) {
                pauses.push((cur.onset - prev.end()).max(0.0));
            } else if cur.onset >= prev.end() {
                responses.push(cur.onset - prev.end());
            } else {
                n_overlap += 1;
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    OracleTiming {
        pause_time: mean(&pauses),
        response_time: mean(&responses),
        n_pause: pauses.len(),
        n_response: responses.len(),
        n_overlap,
    }
}

#[test]
fn criterion_1_timing_oracle_equivalence() {
    let start = Instant::now();
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    };
    for seed in 0..100u64 {
        let spec = ConversationSpec {
            n_speakers: 1 + (seed as usize % 3),
            duration: 120.0,
            overlap_prob: 0.25,
            turn_model: if seed % 2 == 0 {
                TurnModel::RoundRobin
            } else {
                TurnModel::Markov {
                    self_transition: 0.3,
                }
            },
            seed,
            ..ConversationSpec::default()
        };
        let t = gen_conversation("r", &spec);
        let window = Window {
            index: 0,
            start: 0.0,
            length: 120.0,
            segments: t.segments,
        };
        let fast = timing_features(&window, "spk0").unwrap();
        let slow = oracle_timing(&window, "spk0");
        assert_eq!(fast.n_pause_events, slow.n_pause, "seed {seed}");
        assert_eq!(fast.n_response_events, slow.n_response, "seed {seed}");
        assert_eq!(fast.n_overlap_events, slow.n_overlap, "seed {seed}");
        assert!(close(fast.pause_time, slow.pause_time), "seed {seed}");
        assert!(close(fast.response_time, slow.response_time), "seed {seed}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 1 (timing oracle equivalence, 100 windows, {:.2?}): PASS",
        elapsed
    );
}

// ---------------------------------------------------------------
// Criterion 2: metric exactness on the constructed confusion matrix.
// ---------------------------------------------------------------

#[test]
fn criterion_2_metric_exactness() {
    let verdict = |d: bool| DyadicVerdict {
        is_dyadic: d,
        n_speakers_detected: None,
        source: DetectorKind::Embedding,
    };
    let mut verdicts = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..9 {
        verdicts.push(verdict(true));
        labels.push(true);
    } // tp
    verdicts.push(verdict(false));
    labels.push(true); // fn
    for _ in 0..8 {
        verdicts.push(verdict(false));
        labels.push(false);
    } // tn
    for _ in 0..2 {
        verdicts.push(verdict(true));
        labels.push(false);
    } // fp
    let m = evaluate(&verdicts, &labels).unwrap();
    assert_eq!(m.accuracy, 0.85);
    assert_eq!(m.sensitivity, 0.90);
    assert_eq!(m.specificity, 0.80);
    println!("acceptance criterion 2 (metric exactness 0.85/0.90/0.80): PASS");
}

// ---------------------------------------------------------------
// Criterion 3: pearson and Welch match an independent high-precision
// oracle on 20 random small samples to 1e-9; the fixed quartet gives
// r = 0.8 exactly.
// ---------------------------------------------------------------

/// Adaptive Simpson quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: usize) -> f64 {
    fn simpson_rule(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        eps: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson_rule(f, a, m);
        let right = simpson_rule(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, eps / 2.0, depth - 1)
                + recurse(f, m, b, right, eps / 2.0, depth - 1)
        }
    }
    recurse(f, a, b, simpson_rule(f, a, b), eps, depth)
}

/// Two-sided Student-t tail by quadrature of the unnormalized density
/// under x = sqrt(df) tan(theta): the normalization constant cancels,
/// so no gamma or beta functions are involved.
fn oracle_t_tail(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let density = move |theta: f64| theta.cos().powf(df - 1.0);
    let theta_t = (t.abs() / df.sqrt()).atan();
    let half = std::f64::consts::FRAC_PI_2;
    let tail = simpson(&density, theta_t, half, 1e-14, 48);
    let full = 2.0 * simpson(&density, 0.0, half, 1e-14, 48);
    (2.0 * tail / full).clamp(0.0, 1.0)
}

/// Pearson r through the uncentered product-sum arrangement.
fn oracle_pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let r = ((n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt())
        .clamp(-1.0, 1.0);
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        oracle_t_tail(r * ((n - 2.0) / (1.0 - r * r)).sqrt(), n - 2.0)
    };
    (r, p)
}

fn oracle_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>() / (nb - 1.0);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    (t, df, oracle_t_tail(t, df))
}

fn random_sample(rng: &mut Pcg32, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| (rng.next_index(81) as f64 - 40.0) / 4.0)
            .collect();
        if v.iter().any(|x| *x != v[0]) {
            return v;
        }
    }
}

#[test]
fn criterion_3_statistics_oracle() {
    // Frozen reference point first.
    let quartet = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert_eq!(quartet.r, 0.8);
    assert!((quartet.p_two_sided - 0.2).abs() < 1e-12);

    let mut rng = Pcg32::new(2024, 1);
    for trial in 0..20 {
        let n = 3 + rng.next_index(10); // 3..=12
        let x = random_sample(&mut rng, n);
        let y = random_sample(&mut rng, n);
        match pearson(&x, &y) {
            Ok(got) => {
                let (r_ref, p_ref) = oracle_pearson(&x, &y);
                assert!(
                    (got.r - r_ref).abs() <= 1e-9,
                    "trial {trial}: r {} vs oracle {}",
                    got.r,
                    r_ref
                );
                assert!(
                    (got.p_two_sided - p_ref).abs() <= 1e-9,
                    "trial {trial}: p {} vs oracle {}",
                    got.p_two_sided,
                    p_ref
                );
            }
            // Degenerate draws (perfectly collinear) cannot occur with
            // the generator above; constants are filtered.
            Err(e) => panic!("trial {trial}: unexpected pearson error {e}"),
        }

        let na = 2 + rng.next_index(11); // 2..=12
        let nb = 2 + rng.next_index(11);
        let a = random_sample(&mut rng, na);
        let b = random_sample(&mut rng, nb);
        let got = t_test_welch(&a, &b).unwrap();
        let (t_ref, df_ref, p_ref) = oracle_welch(&a, &b);
        assert!((got.t - t_ref).abs() <= 1e-9, "trial {trial}: t");
        assert!((got.df - df_ref).abs() <= 1e-9, "trial {trial}: df");
        assert!(
            (got.p_two_sided - p_ref).abs() <= 1e-9,
            "trial {trial}: p {} vs oracle {}",
            got.p_two_sided,
            p_ref
        );
    }
    println!("acceptance criterion 3 (statistics oracle, 20 samples + quartet): PASS");
}

// ---------------------------------------------------------------
// Criteria 4 and 5: detector quality on the controlled corpus, and
// the qualitative table orderings.
// ---------------------------------------------------------------

fn controlled_corpus() -> Vec<LoadedRecording> {
    let corpus = gen_detection_corpus(&DetectionCorpusSpec {
        seed: 2026,
        ..DetectionCorpusSpec::default()
    })
    .unwrap();
    corpus
        .recordings
        .into_iter()
        .zip(corpus.manifest.recordings)
        .map(|((timeline, table), entry)| LoadedRecording {
            entry,
            timeline,
            table,
        })
        .collect()
}

#[test]
fn criterion_4_detector_quality_on_controlled_corpus() {
    let start = Instant::now();
    let recordings = controlled_corpus();
    assert_eq!(recordings.len(), 200);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let (report, rows) = pool.install(|| {
        let mode = SpuriousMode::default();
        let grid = dyadic_core::clustering::default_threshold_grid();
        let report = run_tune(&recordings, &grid, &mode).unwrap();
        let rows = run_eval(&recordings, report.best_threshold, Some(&mode), false, None).unwrap();
        (report, rows)
    });
    let eval_row = rows
        .iter()
        .find(|r| r.split == dyadic_core::io::Split::Eval)
        .expect("eval split present");
    let elapsed = start.elapsed();
    assert!(
        eval_row.metrics.accuracy >= 0.90,
        "held-out accuracy {}",
        eval_row.metrics.accuracy
    );
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 4 (tuned threshold {}, held-out accuracy {:.3}, single-threaded {:.2?}): PASS",
        report.best_threshold, eval_row.metrics.accuracy, elapsed
    );
}

#[test]
fn criterion_5_table_orderings() {
    let recordings = controlled_corpus();
    let mode = SpuriousMode::default();
    let grid = dyadic_core::clustering::default_threshold_grid();
    let report = run_tune(&recordings, &grid, &mode).unwrap();
    let rows = run_eval(
        &recordings,
        report.best_threshold,
        Some(&mode),
        true,
        Some(7),
    )
    .unwrap();
    let acc = |detector: &str| {
        rows.iter()
            .find(|r| r.detector == detector && r.split == dyadic_core::io::Split::Eval)
            .map(|r| r.metrics.accuracy)
            .expect("row present")
    };
    let with = acc("with spurious detection");
    let without = acc("without spurious detection");
    let baseline = acc("vad baseline");
    assert!(
        with >= without,
        "screening must not hurt: {with} vs {without}"
    );
    assert!(
        with >= baseline,
        "embedding detector must match or beat the baseline: {with} vs {baseline}"
    );
    println!(
        "acceptance criterion 5 (orderings: with {with:.3} >= without {without:.3}, embedding {with:.3} >= baseline {baseline:.3}): PASS"
    );
}

// ---------------------------------------------------------------
// Criterion 6: end-to-end cohort recovery through the CLI binary.
// ---------------------------------------------------------------

fn run_cli(args: &[&str], cwd: &Path) -> (String, String, bool) {
    let out = Command::new(env!("CARGO_BIN_EXE_dyadic"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs");
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
        out.status.success(),
    )
}

/// Pulls the statistic column for one analysis row out of
/// statistics.csv.
fn csv_statistic(dir: &Path, analysis: &str) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join("statistics.csv")).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.first() == Some(&analysis) {
            return fields[2].parse().ok();
        }
    }
    None
}

#[test]
fn criterion_6_cohort_recovery() {
    let base = tempfile::tempdir().unwrap();
    let piecewise_cfg = base.path().join("piecewise.json");
    std::fs::write(&piecewise_cfg, r#"{"kind":"cohort"}"#).unwrap();
    let null_cfg = base.path().join("null.json");
    std::fs::write(&null_cfg, r#"{"kind":"cohort","null_model":true}"#).unwrap();

    let mut piecewise_hits = 0;
    let mut null_hits = 0;
    for seed in 0..20u64 {
        for (cfg, null_model) in [(&piecewise_cfg, false), (&null_cfg, true)] {
            let tag = if null_model { "null" } else { "pw" };
            let corpus_dir = base.path().join(format!("{tag}{seed}"));
            let out_dir = base.path().join(format!("{tag}{seed}-out"));
            let (_, err, ok) = run_cli(
                &[
                    "simulate",
                    "--config",
                    cfg.to_str().unwrap(),
                    "--out",
                    corpus_dir.to_str().unwrap(),
                    "--seed",
                    &seed.to_string(),
                ],
                base.path(),
            );
            assert!(ok, "simulate failed: {err}");
            let (_, err, ok) = run_cli(
                &[
                    "analyze",
                    "--manifest",
                    corpus_dir.join("manifest.json").to_str().unwrap(),
                    "--threshold",
                    "0.35",
                    "--out",
                    out_dir.to_str().unwrap(),
                ],
                base.path(),
            );
            assert!(ok, "analyze failed: {err}");

            let response_r = csv_statistic(&out_dir, "response_time_vs_severity");
            if null_model {
                if response_r.map(|r| r.abs() < 0.35).unwrap_or(false) {
                    null_hits += 1;
                }
            } else {
                let below = csv_statistic(&out_dir, "dyadic_ratio_vs_severity_below_10");
                let above = csv_statistic(&out_dir, "dyadic_ratio_vs_severity_from_10");
                let signs_ok = below.map(|r| r > 0.0).unwrap_or(false)
                    && above.map(|r| r < 0.0).unwrap_or(false)
                    && response_r.map(|r| r > 0.0).unwrap_or(false);
                if signs_ok {
                    piecewise_hits += 1;
                }
            }
            std::fs::remove_dir_all(&corpus_dir).ok();
            std::fs::remove_dir_all(&out_dir).ok();
        }
    }
    assert!(
        piecewise_hits >= 18,
        "split signs + response correlation recovered in only {piecewise_hits}/20 seeds"
    );
    assert!(
        null_hits >= 18,
        "null model stayed under |r| < 0.35 in only {null_hits}/20 seeds"
    );
    println!(
        "acceptance criterion 6 (cohort recovery {piecewise_hits}/20, null model {null_hits}/20): PASS"
    );
}

// ---------------------------------------------------------------
// Criterion 7: format round trips and malformed-fixture rejection.
// ---------------------------------------------------------------

#[test]
fn criterion_7_format_round_trip() {
    for seed in 0..50u64 {
        let spec = ConversationSpec {
            n_speakers: 1 + (seed as usize % 4),
            duration: 300.0,
            overlap_prob: 0.15,
            seed,
            ..ConversationSpec::default()
        };
        let t = gen_conversation(&format!("rec{seed:02}"), &spec);
        let text = write_rttm([&t]).unwrap();
        let parsed = parse_rttm(&text).unwrap();
        let text2 = write_rttm(parsed.values()).unwrap();
        assert_eq!(text, text2, "seed {seed}");
    }

    // Malformed fixtures hit the documented error classes.
    assert!(matches!(
        parse_rttm("SPEAKER rec1 1 abc 2.5 <NA> <NA> s1 <NA> <NA>"),
        Err(IoError::MalformedLine { line: 1, .. })
    ));
    assert!(matches!(
        parse_rttm("SPEAKER rec1 1 0.0 2.5 <NA> s1 <NA> <NA>"),
        Err(IoError::MalformedLine { line: 1, .. })
    ));
    let unlabeled =
        validate_timeline("r", vec![SpeechSegment::new("s", 0.0, 1.0)], 10.0).unwrap();
    assert!(matches!(
        write_rttm([&unlabeled]),
        Err(IoError::MissingSpeakerLabel { .. })
    ));
    assert!(matches!(
        load_embeddings("s1,1.0,0.0\ns2,0.0,1.0,1.0"),
        Err(IoError::DimensionMismatch { line: 2, .. })
    ));
    assert!(matches!(
        load_embeddings("s1,0,0"),
        Err(IoError::ZeroVector { line: 1, .. })
    ));
    assert!(matches!(
        load_embeddings("s1,1.0\ns1,2.0"),
        Err(IoError::DuplicateSegmentId { line: 2, .. })
    ));
    let manifest = |sev: u32, rec: &str| {
        format!(
            r#"{{"recordings":[{{"recording_id":"r1","rttm":"r1.rttm","embeddings":"r1.emb","split":"dev"}}],
                "participants":[{{"participant_id":"p1","recording_ids":["{rec}"],"severity_score":{sev},
                "item_scores":[3,3,3,1,0,0,0,0,0],"group":"healthy"}}]}}"#
        )
    };
    assert!(matches!(
        load_manifest(&manifest(12, "r1")),
        Err(IoError::ItemSumMismatch { .. })
    ));
    assert!(matches!(
        load_manifest(&manifest(10, "rX")),
        Err(IoError::UnknownRecordingRef { .. })
    ));
    println!("acceptance criterion 7 (round trips + malformed fixtures): PASS");
}

// ---------------------------------------------------------------
// Criterion 8: byte-identical CLI outputs for identical config+seed,
// including across --jobs settings.
// ---------------------------------------------------------------

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_8_cli_determinism() {
    let base = tempfile::tempdir().unwrap();
    let root = base.path();
    std::fs::write(
        root.join("det.json"),
        r#"{"kind":"detection","n_recordings":24,"seed":11}"#,
    )
    .unwrap();
    std::fs::write(
        root.join("coh.json"),
        r#"{"kind":"cohort","n_participants":6,"windows_per_participant":4,"seed":11}"#,
    )
    .unwrap();

    // simulate, twice per config
    for cfg in ["det.json", "coh.json"] {
        let d1 = root.join(format!("{cfg}.a"));
        let d2 = root.join(format!("{cfg}.b"));
        for d in [&d1, &d2] {
            let (_, err, ok) = run_cli(
                &["simulate", "--config", cfg, "--out", d.to_str().unwrap()],
                root,
            );
            assert!(ok, "simulate failed: {err}");
        }
        assert_eq!(dir_bytes(&d1), dir_bytes(&d2), "simulate {cfg} drifted");
    }

    let det_manifest = root.join("det.json.a/manifest.json");
    let det_manifest = det_manifest.to_str().unwrap();
    let coh_manifest = root.join("coh.json.a/manifest.json");
    let coh_manifest = coh_manifest.to_str().unwrap();

    // tune across jobs and repeats
    let mut outputs = Vec::new();
    for (tag, jobs) in [("a", "1"), ("b", "2"), ("c", "2")] {
        let csv = root.join(format!("tune-{tag}.csv"));
        let (stdout, err, ok) = run_cli(
            &[
                "--jobs", jobs, "tune",
                "--manifest", det_manifest,
                "--grid", "0.2:0.6:0.1",
                "--out", csv.to_str().unwrap(),
            ],
            root,
        );
        assert!(ok, "tune failed: {err}");
        outputs.push((stdout, std::fs::read(csv).unwrap()));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]), "tune drifted");

    // eval across jobs and repeats
    let mut outputs = Vec::new();
    for (tag, jobs) in [("a", "1"), ("b", "2"), ("c", "2")] {
        let csv = root.join(format!("eval-{tag}.csv"));
        let (stdout, err, ok) = run_cli(
            &[
                "--jobs", jobs, "eval",
                "--manifest", det_manifest,
                "--threshold", "0.35",
                "--spurious", "both",
                "--baseline",
                "--out", csv.to_str().unwrap(),
            ],
            root,
        );
        assert!(ok, "eval failed: {err}");
        outputs.push((stdout, std::fs::read(csv).unwrap()));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]), "eval drifted");

    // analyze across jobs and repeats
    let mut outputs = Vec::new();
    for (tag, jobs) in [("a", "1"), ("b", "2"), ("c", "2")] {
        let out = root.join(format!("analysis-{tag}"));
        let (stdout, err, ok) = run_cli(
            &[
                "--jobs", jobs, "analyze",
                "--manifest", coh_manifest,
                "--threshold", "0.35",
                "--out", out.to_str().unwrap(),
            ],
            root,
        );
        assert!(ok, "analyze failed: {err}");
        outputs.push((stdout, dir_bytes(&out)));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]), "analyze drifted");

    // baseline-train / baseline-predict, twice
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let model = root.join(format!("baseline-{tag}.json"));
        let (_, err, ok) = run_cli(
            &[
                "baseline-train",
                "--manifest", det_manifest,
                "--out", model.to_str().unwrap(),
                "--seed", "5",
            ],
            root,
        );
        assert!(ok, "baseline-train failed: {err}");
        let csv = root.join(format!("baseline-pred-{tag}.csv"));
        let (stdout, err, ok) = run_cli(
            &[
                "baseline-predict",
                "--model", model.to_str().unwrap(),
                "--manifest", det_manifest,
                "--out", csv.to_str().unwrap(),
            ],
            root,
        );
        assert!(ok, "baseline-predict failed: {err}");
        outputs.push((
            std::fs::read(model).unwrap(),
            stdout,
            std::fs::read(csv).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1], "baseline pipeline drifted");

    // spurious-train, twice
    let mut models = Vec::new();
    for tag in ["a", "b"] {
        let model = root.join(format!("spurious-{tag}.json"));
        let (_, err, ok) = run_cli(
            &[
                "spurious-train",
                "--manifest", det_manifest,
                "--threshold", "0.35",
                "--out", model.to_str().unwrap(),
                "--seed", "5",
            ],
            root,
        );
        assert!(ok, "spurious-train failed: {err}");
        models.push(std::fs::read(model).unwrap());
    }
    assert_eq!(models[0], models[1], "spurious-train drifted");

    println!("acceptance criterion 8 (CLI determinism incl. --jobs): PASS");
}

// ---------------------------------------------------------------
// Criterion 9: clustering properties: monotone counts, brute-force
// oracle on small tables, rotation invariance.
// ---------------------------------------------------------------

/// From-scratch greedy average-linkage oracle over original pairwise
/// distances.
fn brute_force_partition(points: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let mut sum = 0.0;
                for &p in &clusters[i] {
                    for &q in &clusters[j] {
                        sum += cosine_distance(&points[p], &points[q]).unwrap();
                    }
                }
                let d = sum / (clusters[i].len() * clusters[j].len()) as f64;
                if best.map(|(bd, _, _)| d < bd).unwrap_or(true) {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            Some((d, i, j)) if d <= threshold => {
                let merged = clusters.remove(j);
                clusters[i].extend(merged);
            }
            _ => break,
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort();
    clusters
}

fn table_from(points: &[Vec<f64>]) -> EmbeddingTable {
    EmbeddingTable::from_entries(
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("s{i:02}"), p.clone())),
    )
    .unwrap()
}

fn partition_of(c: &dyadic_core::clustering::ClusterAssignment) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); c.n_clusters];
    for (id, &cl) in &c.assignment {
        out[cl].push(id[1..].parse::<usize>().unwrap());
    }
    for p in &mut out {
        p.sort_unstable();
    }
    out.sort();
    out
}

#[test]
fn criterion_9_clustering_properties() {
    // Monotone cluster counts over random tables.
    for seed in 0..40u64 {
        let mut rng = Pcg32::new(seed, 60);
        let n = 4 + rng.next_index(12);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.next_gaussian()).collect())
            .collect();
        let table = table_from(&points);
        let mut prev = usize::MAX;
        for step in 1..=12 {
            let c = cluster_segments(&table, step as f64 / 6.0).unwrap();
            assert!(c.n_clusters <= prev, "seed {seed}: count increased");
            prev = c.n_clusters;
        }
    }

    // Brute-force merge oracle on tables of at most 8 points.
    for seed in 0..50u64 {
        let mut rng = Pcg32::new(seed, 61);
        let n = 3 + rng.next_index(6);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.next_gaussian()).collect())
            .collect();
        let threshold = 0.2 + rng.next_f64();
        let got = partition_of(&cluster_segments(&table_from(&points), threshold).unwrap());
        let expected = brute_force_partition(&points, threshold);
        assert_eq!(got, expected, "seed {seed} threshold {threshold}");
    }

    // Rotation invariance to 1e-9.
    for seed in 0..30u64 {
        let mut rng = Pcg32::new(seed, 62);
        let dim = 5;
        let n = 4 + rng.next_index(6);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.next_gaussian()).collect())
            .collect();
        // Gram-Schmidt rotation.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        while basis.len() < dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
            for b in &basis {
                let dot: f64 = b.iter().zip(&v).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= dot * bi;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                basis.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let rotated: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                basis
                    .iter()
                    .map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let d1 = cosine_distance(&points[i], &points[j]).unwrap();
                let d2 = cosine_distance(&rotated[i], &rotated[j]).unwrap();
                assert!((d1 - d2).abs() < 1e-9, "distances drifted under rotation");
            }
        }
        let threshold = 0.3 + rng.next_f64();
        let a = cluster_segments(&table_from(&points), threshold).unwrap();
        let b = cluster_segments(&table_from(&rotated), threshold).unwrap();
        assert_eq!(partition_of(&a), partition_of(&b), "seed {seed}");
    }
    println!("acceptance criterion 9 (clustering properties): PASS");
}
