//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines are always printed; exits non-zero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use daal_core::batch::EmbeddingBatch;
use daal_core::daal::{
    self, point_segment_distance, target_vertices, BatchClassStats, ClassStats, DaalConfig, LineSegment,
    LineSegmentSet, TotalLossWeights, VertexTarget,
};
use daal_core::data::{self, LabeledDataset};
use daal_core::gradcheck::{run_suite, Suite, DEFAULT_POINTS, TOLERANCE};
use daal_core::losses::{self, ClassifierParams, MarginFamily, MarginSpec, ParamGrad};
use daal_core::metrics::{kmeans, nmi, recall_at_k, Partition};
use daal_core::model::{Dense, LossKind, NetworkSpec, NetworkState};
use daal_core::numerics::{sample_standard_normal, Matrix, RngState};
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal_matrix(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, sample_standard_normal(rng, rows * cols).unwrap()).unwrap()
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst = (String::new(), 0.0f64);
    let mut failed = Vec::new();
    for suite in Suite::ALL {
        let r = run_suite(suite, 1, DEFAULT_POINTS);
        if r.max_rel_error > worst.1 {
            worst = (r.loss.clone(), r.max_rel_error);
        }
        if !r.passed {
            failed.push(format!("{} ({:.2e})", r.loss, r.max_rel_error));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(failed.is_empty(), || format!("failing losses: {}", failed.join(", ")))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} losses x {DEFAULT_POINTS} points, worst {} {:.2e} < {TOLERANCE:e}, {secs:.2}s",
        Suite::ALL.len(),
        worst.0,
        worst.1
    ))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn reduction_identities() -> Outcome {
    let mut rng = RngState::new(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (n, d, c) = (7, 4, 5);
        let params = ClassifierParams::new(normal_matrix(&mut rng, d, c), vec![0.0; c]).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let batch = EmbeddingBatch::new(normal_matrix(&mut rng, n, d), labels).unwrap();
        let s = rng.uniform_range(1.0, 30.0);
        let base = losses::normalized_softmax_loss(&params, &batch, s).unwrap();
        let Some(ParamGrad::Classifier { weights: base_w, .. }) = &base.grad_params else {
            return Err("normalized softmax returned no classifier gradient".into());
        };
        for family in [MarginFamily::MultiplicativeAngular, MarginFamily::AdditiveCosine, MarginFamily::AdditiveAngular] {
            let m = losses::margin_softmax_loss(&params, &batch, &MarginSpec::identity(family, s)).unwrap();
            let Some(ParamGrad::Classifier { weights, .. }) = &m.grad_params else {
                return Err("margin loss returned no classifier gradient".into());
            };
            worst = worst
                .max((m.value - base.value).abs())
                .max(max_diff(m.grad_embeddings.as_slice(), base.grad_embeddings.as_slice()))
                .max(max_diff(weights.as_slice(), base_w.as_slice()));
        }
    }
    ensure(worst <= 1e-12, || format!("identity-margin deviation {worst:.2e} > 1e-12"))?;

    for seed in 0..50 {
        let mut rng = RngState::new(100 + seed);
        let (n, d, c) = (8, 3, 4);
        let params = ClassifierParams::new(normal_matrix(&mut rng, d, c), sample_standard_normal(&mut rng, c).unwrap()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let batch = EmbeddingBatch::new(normal_matrix(&mut rng, n, d), labels).unwrap();
        let segs = daal::init_segments(c, d, 1.0, &mut rng).unwrap();
        let soft = losses::softmax_loss(&params, &batch).unwrap();
        let dl = daal::daal_loss(&batch, &segs, &DaalConfig::default()).unwrap();
        let weights = TotalLossWeights { lambda_s: 1.0, lambda_daal: 0.0 };
        let total = daal::total_loss(&soft, &dl, &weights).unwrap();
        ensure(total.value == soft.value, || format!("seed {seed}: total {} vs softmax {}", total.value, soft.value))?;
        ensure(total.grad_embeddings == soft.grad_embeddings, || format!("seed {seed}: gradients differ"))?;
    }
    Ok(format!("identity margins within {worst:.1e} of normalized softmax; lambda_daal=0 total equals softmax bit-for-bit"))
}

fn geometry_suite() -> Outcome {
    let mut rng = RngState::new(3);
    let tol = 1e-9;
    let mut worst = [0.0f64; 3];
    for i in 0..10_000 {
        let d = 1 + rng.below(6);
        let a = sample_standard_normal(&mut rng, d).unwrap();
        // One instance in ten is degenerate.
        let b = if i % 10 == 0 { a.clone() } else { sample_standard_normal(&mut rng, d).unwrap() };
        let e: Vec<f64> = sample_standard_normal(&mut rng, d).unwrap().iter().map(|v| 3.0 * v).collect();

        let t = rng.uniform();
        let on: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect();
        let d_on = point_segment_distance(&on, &a, &b).unwrap().distance;
        worst[0] = worst[0].max(d_on);

        let ab = point_segment_distance(&e, &a, &b).unwrap().distance;
        let ba = point_segment_distance(&e, &b, &a).unwrap().distance;
        worst[1] = worst[1].max((ab - ba).abs());

        let dist = |p: &[f64]| e.iter().zip(p).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        worst[2] = worst[2].max(ab - dist(&a).min(dist(&b)));
    }
    ensure(worst[0] <= tol, || format!("on-segment distance {:.2e}", worst[0]))?;
    ensure(worst[1] <= tol, || format!("swap asymmetry {:.2e}", worst[1]))?;
    ensure(worst[2] <= tol, || format!("segment exceeds vertex distance by {:.2e}", worst[2]))?;
    Ok(format!(
        "10^4 instances: on-segment {:.1e}, swap {:.1e}, segment-minus-vertex {:.1e}",
        worst[0], worst[1], worst[2]
    ))
}

fn ema_contraction() -> Outcome {
    let mut rng = RngState::new(4);
    let d = 5;
    let mut worst = 0.0f64;
    for tau in [0.001, 0.1, 1.0] {
        for _ in 0..5 {
            let set = daal::init_segments(1, d, 1.0, &mut rng).unwrap();
            let target = VertexTarget {
                a: sample_standard_normal(&mut rng, d).unwrap(),
                b: sample_standard_normal(&mut rng, d).unwrap(),
            };
            let residual = |s: &LineSegmentSet| {
                let seg = &s.segments[0];
                let ra: f64 = seg.a.iter().zip(&target.a).map(|(x, y)| (x - y).powi(2)).sum();
                let rb: f64 = seg.b.iter().zip(&target.b).map(|(x, y)| (x - y).powi(2)).sum();
                (ra + rb).sqrt()
            };
            let initial = residual(&set);
            let mut cur = set;
            for n in 1..=200 {
                cur = daal::ema_update(&cur, &[Some(target.clone())], tau).unwrap();
                let want = (1.0 - tau).powi(n) * initial;
                worst = worst.max((residual(&cur) - want).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("residual deviates by {worst:.2e}"))?;
    Ok(format!("tau in {{0.001, 0.1, 1}}, 200 steps: max deviation {worst:.1e}"))
}

fn segment_variance_law() -> Outcome {
    let mut rng = RngState::new(5);
    let mut worst = 0.0f64;
    let mut zero_checked = 0;
    for i in 0..2000 {
        let d = 1 + rng.below(8);
        let c = 1 + rng.below(4);
        let set = daal::init_segments(c, d, rng.uniform_range(0.1, 3.0), &mut rng).unwrap();
        let eta = if i % 2 == 0 { 5.0 } else { rng.uniform_range(0.1, 10.0) };
        let classes: Vec<ClassStats> = (0..c)
            .map(|k| ClassStats {
                centroid: Some(sample_standard_normal(&mut rng, d).unwrap()),
                sigma_sq: if (i + k) % 5 == 0 { 0.0 } else { rng.uniform_range(0.0, 4.0) },
                count: 2,
            })
            .collect();
        let targets = target_vertices(&BatchClassStats { classes: classes.clone() }, &set, eta).unwrap();
        for (st, t) in classes.iter().zip(&targets) {
            let t = t.as_ref().ok_or("missing target")?;
            let len: f64 = t.a.iter().zip(&t.b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let want = 2.0 * eta * st.sigma_sq.sqrt();
            if st.sigma_sq == 0.0 {
                ensure(len == 0.0, || format!("sigma 0 gave length {len}"))?;
                zero_checked += 1;
            }
            worst = worst.max((len - want).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("length deviates from 2*eta*sigma by {worst:.2e}"))?;
    Ok(format!("2000 fuzzed stat sets: max deviation {worst:.1e}; {zero_checked} zero-variance classes give length 0"))
}

fn fixture() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metric_instances.json");
    serde_json::from_str(&std::fs::read_to_string(path).expect("fixture")).expect("fixture json")
}

fn as_matrix(points: &Value) -> Matrix {
    let rows: Vec<Vec<f64>> = points
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

fn as_labels(v: &Value) -> Vec<usize> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect()
}

fn metric_oracles() -> Outcome {
    let fx = fixture();
    let instances = fx["instances"].as_array().unwrap();
    ensure(instances.len() >= 20, || format!("only {} instances", instances.len()))?;
    let mut worst = 0.0f64;
    for (i, inst) in instances.iter().enumerate() {
        let points = as_matrix(&inst["points"]);
        ensure(points.rows() <= 12, || format!("instance {i} has {} points", points.rows()))?;
        let labels = as_labels(&inst["labels"]);
        let pred = as_labels(&inst["pred"]);
        let got = nmi(&Partition::from_labels(&pred), &Partition::from_labels(&labels)).map_err(|e| e.to_string())?;
        let want = inst["nmi"].as_f64().unwrap();
        ensure((got - want).abs() <= 1e-12, || format!("instance {i}: nmi {got} vs {want}"))?;
        worst = worst.max((got - want).abs());
        let ks: Vec<usize> = (1..points.rows()).collect();
        let recalls = recall_at_k(&points, &labels, &ks).map_err(|e| e.to_string())?;
        for (k, got) in recalls {
            let want = inst["recall"][k.to_string()].as_f64().unwrap();
            ensure((got - want).abs() <= 1e-12, || format!("instance {i}: R@{k} {got} vs {want}"))?;
            worst = worst.max((got - want).abs());
        }
    }
    let km = fx["kmeans"].as_array().unwrap();
    for (i, inst) in km.iter().enumerate() {
        let points = as_matrix(&inst["points"]);
        let want = inst["best_two_wcss"].as_f64().unwrap();
        let fit = kmeans(&points, 2, 32, 100, i as u64).map_err(|e| e.to_string())?;
        ensure((fit.wcss - want).abs() <= 1e-12 * want.max(1.0), || format!("kmeans instance {i}: {} vs {want}", fit.wcss))?;
    }
    Ok(format!(
        "{} NMI/Recall instances (max dev {worst:.1e}), {} exhaustive 8-point k-means instances",
        instances.len(),
        km.len()
    ))
}

/// Runs the `daal` binary with captured output; returns its exit code.
fn run_cli(args: &[&str]) -> i32 {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_daal"))
        .args(args)
        .output()
        .expect("spawn daal");
    out.status.code().unwrap_or(-1)
}

fn desk_experiment() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let start = Instant::now();
    // Defaults are the criterion's settings: C=8, M=3, 250/class, 16 inputs, 8-D embedding.
    let code = run_cli(&["compare", "--out", out, "--json"]);
    let secs = start.elapsed().as_secs_f64();
    ensure(code == 0, || format!("compare exited {code}"))?;
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("compare.json")).unwrap()).unwrap();
    let daal = &doc["summary"][1];
    ensure(daal["loss"] == "softmax+daal", || "second arm is not softmax+daal".into())?;
    let wins = daal["nmi_not_worse"].as_u64().unwrap();
    let d_r1 = daal["mean_delta"]["recall_at"]["1"].as_f64().unwrap();
    let d_nmi = daal["mean_delta"]["nmi"].as_f64().unwrap();
    let detail = format!("DAAL NMI >= softmax in {wins}/5 seeds, mean dNMI {d_nmi:+.4}, mean dR@1 {d_r1:+.4}, {secs:.0}s");
    ensure(wins >= 4, || detail.clone())?;
    ensure(d_r1 >= -0.01, || detail.clone())?;
    ensure(secs < 300.0, || detail.clone())?;
    Ok(detail)
}

fn read_all(dir: &Path, names: &[&str]) -> Vec<Option<Vec<u8>>> {
    names.iter().map(|n| std::fs::read(dir.join(n)).ok()).collect()
}

fn determinism() -> Outcome {
    let mut rng = RngState::new(8);
    let files = ["network.json", "segments.json", "history.json", "test.csv", "eval.json"];
    let mut losses_used = Vec::new();
    for case in 0..3 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let loss = LossKind::ALL[rng.below(LossKind::ALL.len())];
        losses_used.push(loss.name());
        let cfg = serde_json::json!({
            "seed": rng.below(1000),
            "data": {"synthetic": {
                "num_classes": 2 + rng.below(3),
                "modes_per_class": 1 + rng.below(3),
                "samples_per_class": 20 + rng.below(20),
                "input_dim": 3 + rng.below(6),
            }},
            "network": {"hidden_dims": [8 + rng.below(8)], "dropout_rates": [0.2], "embedding_dim": 2 + rng.below(3)},
            "train": {"epochs": 1 + rng.below(3), "batch_size": 16, "loss": loss.name()},
            "out_dir": dir.path().join("run"),
        });
        let cfg_path = dir.path().join("config.json");
        std::fs::write(&cfg_path, cfg.to_string()).unwrap();
        let cfg_arg = cfg_path.to_str().unwrap();
        let run_dir = dir.path().join("run");
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            ensure(run_cli(&["train", "--config", cfg_arg, "--json"]) == 0, || format!("case {case}: train failed"))?;
            ensure(run_cli(&["eval", "--config", cfg_arg, "--json"]) == 0, || format!("case {case}: eval failed"))?;
            snapshots.push(read_all(&run_dir, &files));
        }
        ensure(snapshots[0] == snapshots[1], || format!("case {case} ({}): outputs differ between runs", loss.name()))?;
        ensure(snapshots[0][2].is_some() && snapshots[0][4].is_some(), || format!("case {case}: missing outputs"))?;
    }
    Ok(format!("3 configs ({}): train and eval outputs byte-identical on rerun", losses_used.join(", ")))
}

/// Finite doubles with random exponents, including subnormals and signed zero.
fn wild_float(rng: &mut RngState) -> f64 {
    loop {
        let v = match rng.below(4) {
            0 => rng.standard_normal(),
            1 => f64::from_bits(rng.next_u64()),
            2 => rng.standard_normal() * 10f64.powi(rng.below(600) as i32 - 300),
            _ => [0.0, -0.0, f64::MIN_POSITIVE, f64::MAX, 5e-324, 0.1, 1.0 / 3.0][rng.below(7)],
        };
        if v.is_finite() {
            return v;
        }
    }
}

fn wild_matrix(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| wild_float(rng)).collect()).unwrap()
}

fn round_trip() -> Outcome {
    let mut rng = RngState::new(9);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..100 {
        let n = 1 + rng.below(15);
        let d = 1 + rng.below(5);
        let c = 1 + rng.below(4);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let ds = LabeledDataset::new(wild_matrix(&mut rng, n, d), labels, c, "fuzz").unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        data::save_features_csv(&ds, &p1).map_err(|e| e.to_string())?;
        let back = data::load_features_csv(&p1, Some(c)).map_err(|e| e.to_string())?;
        data::save_features_csv(&back, &p2).map_err(|e| e.to_string())?;
        ensure(std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap(), || format!("case {case}: CSV bytes differ"))?;
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&back.features) == bits(&ds.features), || format!("case {case}: CSV values differ"))?;

        let spec = NetworkSpec {
            input_dim: d,
            hidden_dims: vec![1 + rng.below(4)],
            embedding_dim: 1 + rng.below(3),
            num_classes: 2 + rng.below(3),
            dropout_rates: vec![0.2],
            activation: Default::default(),
        };
        let widths = [spec.input_dim, spec.hidden_dims[0], spec.embedding_dim, spec.num_classes];
        let layers: Vec<Dense> = widths
            .windows(2)
            .map(|w| Dense { weights: wild_matrix(&mut rng, w[0], w[1]), biases: (0..w[1]).map(|_| wild_float(&mut rng)).collect() })
            .collect();
        let net = NetworkState::from_layers(&spec, layers).map_err(|e| e.to_string())?;
        let text = net.to_json().map_err(|e| e.to_string())?;
        let again = NetworkState::from_json(&text).map_err(|e| e.to_string())?.to_json().unwrap();
        ensure(text == again, || format!("case {case}: network checkpoint differs"))?;

        let segs = LineSegmentSet {
            segments: (0..spec.num_classes)
                .map(|k| {
                    let a: Vec<f64> = (0..spec.embedding_dim).map(|_| wild_float(&mut rng).clamp(-1e150, 1e150)).collect();
                    let v = daal_core::numerics::normalize(&sample_standard_normal(&mut rng, spec.embedding_dim).unwrap()).unwrap();
                    let b = a.iter().zip(&v).map(|(x, y)| x + y).collect();
                    LineSegment { class_id: k, a, b, v_hat: v }
                })
                .collect(),
        };
        let text = segs.to_json().map_err(|e| e.to_string())?;
        let again = LineSegmentSet::from_json(&text).map_err(|e| e.to_string())?.to_json().unwrap();
        ensure(text == again, || format!("case {case}: segment checkpoint differs"))?;
    }
    Ok("100 fuzzed cases: CSV, network and segment files byte-identical after save-load-save".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", gradient_suite),
        ("reduction identities", reduction_identities),
        ("geometry suite", geometry_suite),
        ("EMA contraction", ema_contraction),
        ("segment-variance law", segment_variance_law),
        ("metric oracles", metric_oracles),
        ("desk-scale DAAL experiment", desk_experiment),
        ("determinism", determinism),
        ("round-trip", round_trip),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {}: {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
