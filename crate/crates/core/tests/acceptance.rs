//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p albench --test acceptance` runs everything; trailing numeric
//! arguments (`-- 3 7`) select criteria. Failures are reported but only turn
//! the exit status non-zero when `ALBENCH_ACCEPTANCE_STRICT=1`.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use albench::bench::cli::cli_main_with;
use albench::bench::{aggregate_all, compare_to_random, presets, Experiment};
use albench::data::{longtail_counts, min_val_size, LongTailSpec};
use albench::domain::{ConfusionMatrix, LabelState};
use albench::metrics::{accuracy, mean_recall};
use albench::model::{flatten, Mlp};
use albench::posterior::{self, joint_entropy, JointConfig, JointMode};
use albench::query::{bald_select, batchbald_select, coreset_select, Embeddings, QueryContext};
use albench::seed;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<&str> = std::iter::once("albench").chain(args.iter().copied()).collect();
    let code = cli_main_with(argv, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

// ---------------------------------------------------------------------------

/// (start, query, final, val)
type RegimeRow = (usize, usize, usize, usize);

fn regimes() -> Outcome {
    // classes, then low, medium, high
    let expected: [(usize, [RegimeRow; 3]); 4] = [
        (10, [(50, 50, 500, 250), (250, 250, 2500, 1250), (1000, 1000, 10000, 5000)]),
        (11, [(55, 55, 550, 275), (275, 275, 2750, 1375), (1100, 1100, 11000, 5500)]),
        (8, [(40, 40, 400, 200), (200, 200, 2000, 800), (800, 800, 8000, 3799)]),
        (100, [(500, 500, 5000, 2500), (1000, 1000, 10000, 5000), (5000, 5000, 25000, 5000)]),
    ];
    let mut bad = Vec::new();
    for (c, rows) in expected {
        let (code, out, err) = cli(&["regimes", "--classes", &c.to_string()]);
        if code != 0 {
            return outcome(false, format!("regimes --classes {c} exited {code}: {err}"));
        }
        let got: Vec<RegimeRow> = out
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<usize> = l.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
                (f[0], f[1], f[3], f[4])
            })
            .collect();
        if got != rows {
            bad.push(format!("C={c}: got {got:?}"));
        }
    }
    if bad.is_empty() {
        outcome(true, "C=8/10/11 and the C=100 override match all 48 cells")
    } else {
        outcome(false, bad.join("; "))
    }
}

fn longtail() -> Outcome {
    let published = [4500, 2913, 1886, 1221, 790, 512, 331, 214, 139, 90];
    let got = match longtail_counts(&LongTailSpec {
        n_max: 4500,
        imbalance_factor: 50.0,
        class_count: 10,
    }) {
        Ok(v) => v,
        Err(e) => return outcome(false, e.to_string()),
    };
    let worst = got
        .iter()
        .zip(published)
        .map(|(&a, b)| (a as i64 - b as i64).abs())
        .max()
        .unwrap();
    outcome(worst <= 1, format!("{got:?}, max deviation {worst}"))
}

fn information_suite() -> Outcome {
    let mut rng = seed::rng(3);
    let exact = JointConfig {
        mode: JointMode::Exact,
        max_exact_configs: 1 << 20,
        sampled_config_count: 1,
    };
    let sampled = JointConfig {
        mode: JointMode::Sampled,
        max_exact_configs: 1 << 20,
        sampled_config_count: 65_536,
    };
    let tensors = 1000;
    let mut worst_sampled: f64 = 0.0;
    let mut sampled_checks = 0;
    for t in 0..tensors {
        let k = rng.random_range(1..=8);
        let n = rng.random_range(1..=16);
        let c = rng.random_range(2..=6);
        let post = common::random_posterior(&mut rng, k, n, c);
        let ln_c = (c as f64).ln();
        let pe = posterior::predictive_entropy(&post);
        let mi = posterior::bald_scores(&post);
        for (i, (&h, &b)) in pe.iter().zip(&mi).enumerate() {
            if !(b >= 0.0 && b <= h + 1e-12 && h <= ln_c + 1e-12) {
                return outcome(false, format!("tensor {t} candidate {i}: BALD {b}, H {h}, ln C {ln_c}"));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let max_b = (0..=n).take_while(|&b| c.pow(b as u32) <= 4096).last().unwrap();
        let mut prev = 0.0;
        for b in 1..=max_b {
            let h = joint_entropy(&post, &order[..b], &exact, &mut rng).unwrap();
            if h < prev - 1e-12 {
                return outcome(false, format!("tensor {t}: joint entropy fell from {prev} to {h} at B={b}"));
            }
            prev = h;
        }
        let b = (1..=n).take_while(|&b| c.pow(b as u32) <= 1024).last().unwrap();
        let truth = joint_entropy(&post, &order[..b], &exact, &mut rng).unwrap();
        let est = joint_entropy(&post, &order[..b], &sampled, &mut rng).unwrap();
        worst_sampled = worst_sampled.max((est - truth).abs());
        sampled_checks += 1;
    }
    outcome(
        worst_sampled <= 0.02,
        format!("{tensors} tensors; bounds and monotonicity hold; worst sampled error {worst_sampled:.4} nats over {sampled_checks} batches"),
    )
}

fn reductions() -> Outcome {
    let mut rng = seed::rng(4);
    let cfg = JointConfig::default();
    let mut mismatches = 0;
    for _ in 0..200 {
        let k = rng.random_range(1..=8);
        let n = rng.random_range(2..=16);
        let c = rng.random_range(2..=6);
        let post = common::random_posterior(&mut rng, k, n, c);
        let state = LabelState::new(&(0..n).collect::<Vec<_>>(), &[]).unwrap();
        let ctx = QueryContext::new(&state, 1, 0).with_posterior(&post);
        if batchbald_select(&ctx, &cfg).unwrap().chosen != bald_select(&ctx).unwrap().chosen {
            mismatches += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let c = rng.random_range(2..=6);
        let post = common::random_posterior(&mut rng, 1, n, c);
        let b = (1..=n).take_while(|&b| c.pow(b as u32) <= 100_000).last().unwrap();
        let batch: Vec<usize> = (0..b).collect();
        let joint = joint_entropy(&post, &batch, &cfg, &mut rng).unwrap();
        let sum: f64 = posterior::predictive_entropy(&post)[..b].iter().sum();
        worst = worst.max((joint - sum).abs());
    }
    outcome(
        mismatches == 0 && worst <= 1e-9,
        format!("{mismatches}/200 argmax mismatches; K=1 worst |joint - sum| {worst:.2e}"),
    )
}

fn cover_radius(points: &[[f64; 2]], centres: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| {
            centres
                .iter()
                .map(|&c| ((p[0] - points[c][0]).powi(2) + (p[1] - points[c][1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Smallest cover radius over all ways of adding `k` centres to `fixed`.
fn optimal_radius(points: &[[f64; 2]], fixed: &[usize], k: usize) -> f64 {
    let free: Vec<usize> = (0..points.len()).filter(|i| !fixed.contains(i)).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << free.len()) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut centres = fixed.to_vec();
        centres.extend(free.iter().enumerate().filter(|(j, _)| mask >> j & 1 == 1).map(|(_, &i)| i));
        best = best.min(cover_radius(points, &centres));
    }
    best
}

fn kcenter() -> Outcome {
    let mut rng = seed::rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..=10);
        let points: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let fixed = vec![rng.random_range(0..n)];
        let k = rng.random_range(1..n);
        let state = LabelState::new(&(0..n).collect::<Vec<_>>(), &fixed).unwrap();
        let matrix = Array2::from_shape_fn((n, 2), |(i, d)| points[i][d]);
        let emb = Embeddings::new(matrix, (0..n).collect()).unwrap();
        let sel = coreset_select(&QueryContext::new(&state, k, 0).with_embeddings(&emb)).unwrap();
        let mut centres = fixed.clone();
        centres.extend(&sel.chosen);
        let greedy = cover_radius(&points, &centres);
        let opt = optimal_radius(&points, &fixed, k);
        let ratio = if opt > 0.0 { greedy / opt } else if greedy == 0.0 { 1.0 } else { f64::INFINITY };
        worst = worst.max(ratio);
    }
    outcome(worst <= 2.0 + 1e-12, format!("50 instances, worst greedy/optimal radius {worst:.3}"))
}

fn gradient_check() -> Outcome {
    let mut rng = seed::rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut net = Mlp::new(2, &[2], 2, &mut rng);
        let params: Vec<f64> = net.flat_params().iter().map(|_| rng.random_range(-1.5..1.5)).collect();
        net.set_flat_params(&params);
        let x = Array2::from_shape_simple_fn((6, 2), || rng.random_range(-2.0..2.0));
        let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
        let w = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
        let analytic = flatten(&net.loss_and_gradient(&x, &y, &w).1);
        let h = 1e-6;
        let numeric: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut p = params.clone();
                p[i] += h;
                net.set_flat_params(&p);
                let up = net.loss(&x, &y, &w);
                p[i] -= 2.0 * h;
                net.set_flat_params(&p);
                let down = net.loss(&x, &y, &w);
                (up - down) / (2.0 * h)
            })
            .collect();
        net.set_flat_params(&params);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric));
        if scale > 1e-10 {
            worst = worst.max(norm(&diff) / scale);
        }
    }
    outcome(worst <= 1e-4, format!("20 random 2-2-2 points, worst relative error {worst:.2e}"))
}

fn metric_identity() -> Outcome {
    let mut rng = seed::rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = rng.random_range(2..=12);
        let per_class = rng.random_range(1..=200u64);
        let counts: Vec<Vec<u64>> = (0..c)
            .map(|_| {
                let mut row = vec![0u64; c];
                for _ in 0..per_class {
                    row[rng.random_range(0..c)] += 1;
                }
                row
            })
            .collect();
        let cm = ConfusionMatrix::new(counts).unwrap();
        worst = worst.max((accuracy(&cm).unwrap() - mean_recall(&cm).unwrap()).abs());
    }
    // ln 40 = 3.68887945411393630285..., independent of the library's f64 logarithm
    const LN_40: f64 = 3.688_879_454_113_936_3;
    let bound = LN_40 / (2.0 * 0.01f64 * 0.01);
    let n = min_val_size(0.01, 0.05).unwrap();
    let sized = n == 18445 && (n as f64) >= bound && ((n - 1) as f64) < bound;
    let sanity = min_val_size(0.5, 0.5).unwrap() == 3;
    outcome(
        worst <= 1e-12 && sized && sanity,
        format!("worst |accuracy - mean recall| {worst:.1e}; n(0.01, 0.05) = {n} against bound {bound:.3}"),
    )
}

fn list_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("exp.toml");
    fs::write(&cfg_path, common::tiny_config(vec![0, 1, 2]).to_toml_string().unwrap()).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let mut trees = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let dir = tmp.path().join(name);
        let d = dir.to_str().unwrap();
        for args in [
            vec!["sweep", "--config", cfg, "--out", d, "--jobs", jobs, "--no-timing"],
            vec!["run", "--config", cfg, "--out", d, "--jobs", jobs, "--no-timing"],
            vec!["report", "--runs", d],
        ] {
            let (code, _, err) = cli(&args);
            if code != 0 {
                return outcome(false, format!("{} exited {code}: {err}", args[0]));
            }
        }
        trees.push(list_files(&dir));
    }
    let files = trees[0].len();
    let same = trees[1] == trees[0] && trees[2] == trees[0];
    outcome(same && files > 0, format!("{files} files; serial repeat and --jobs 2 byte-identical: {same}"))
}

fn directional_study() -> Outcome {
    let exp = Experiment::from_config(presets::directional_study((0..30).collect())).unwrap();
    let records = exp.execute().unwrap().records().unwrap();
    let curves = aggregate_all(&records).unwrap();
    let final_of = |s: &str| curves.iter().find(|c| c.series == s).unwrap().final_point().mean;
    let random = curves.iter().find(|c| c.series == "random").unwrap();
    let (r, bald, bb, cs) = (final_of("random"), final_of("bald"), final_of("batchbald"), final_of("coreset"));
    let a = cs >= r - 0.005 && bb >= r - 0.005 && (cs > r || bb > r);
    let b = bb >= bald - 0.005;
    let areas: Vec<String> = curves
        .iter()
        .filter(|c| c.series != "random")
        .map(|c| format!("{} {:+.2}", c.series, compare_to_random(c, random).unwrap().area_delta))
        .collect();
    outcome(
        a && b,
        format!(
            "final mean recall: random {r:.4}, bald {bald:.4}, batchbald {bb:.4}, coreset {cs:.4}; \
             (a) {} (b) {} [batchbald - bald = {:+.4}]; area vs random: {}",
            if a { "ok" } else { "violated" },
            if b { "ok" } else { "violated" },
            bb - bald,
            areas.join(", ")
        ),
    )
}

fn loss_weighting() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let (code, _, err) = cli(&["run", "--preset", "loss-weighting", "--out", d, "--no-timing"]);
    if code != 0 {
        return outcome(false, format!("run exited {code}: {err}"));
    }
    let text = match fs::read_to_string(tmp.path().join("loss_weighting.csv")) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("no loss_weighting.csv: {e}")),
    };
    let header = text.lines().next().unwrap_or_default().to_string();
    let paired = text.lines().skip(1).take_while(|l| !l.is_empty()).count();
    let runs = fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("run_"))
        .count();
    // 3 seeds x {random, bald} x {uniform, balanced}
    outcome(
        runs == 12 && paired == 6,
        format!("{runs} run files; {paired} paired (qm, seed) rows; header `{header}`"),
    )
}

// ---------------------------------------------------------------------------

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "label regimes", Duration::from_secs(1), regimes),
        (2, "long-tail counts", Duration::from_secs(1), longtail),
        (3, "information-theory suite", Duration::from_secs(60), information_suite),
        (4, "reduction identities", Duration::from_secs(10), reductions),
        (5, "k-center quality", Duration::from_secs(10), kcenter),
        (6, "gradient check", Duration::from_secs(5), gradient_check),
        (7, "metric identity and Hoeffding sizing", Duration::from_secs(1), metric_identity),
        (8, "pipeline determinism", Duration::from_secs(5 * 60), determinism),
        (9, "directional long-tail study", Duration::from_secs(15 * 60), directional_study),
        (10, "loss-weighting ablation", Duration::from_secs(10 * 60), loss_weighting),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, limit, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let res = check();
        let took = started.elapsed();
        let in_time = took <= limit;
        let pass = res.pass && in_time;
        if !pass {
            failed.push(id);
        }
        println!(
            "{} criterion {id:>2} {name}: {} ({:.2}s, limit {}s{})",
            if pass { "PASS" } else { "FAIL" },
            res.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {}/{ran} passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        if std::env::var("ALBENCH_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
