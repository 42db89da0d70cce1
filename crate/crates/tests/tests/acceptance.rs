//! One line per acceptance criterion, each at its stated tolerance and time
//! budget. Exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fdht_core::ht::{format_complexity, Format, HtConfig, HtWeight};
use fdht_core::layer::{backward_frames, backward_input, forward, forward_batch, output_len};
use fdht_core::lstm::{bptt_gradients, run, train_toy, LstmParams, ToyConfig};
use fdht_core::sim::{check_conflicts, conventional_trace, execute, HwConfig, Op};
use fdht_core::tensor::MatrixView;
use fdht_core::transform::{
    apply_transform, check_bijection, index_map, literal_type_ii_map, TransformSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn fdht(out: &Path, args: &[&str]) -> Result<(), String> {
    let mut argv: Vec<OsString> = vec!["fdht".into()];
    argv.extend(args.iter().map(OsString::from));
    argv.extend(["--out".into(), out.as_os_str().to_owned(), "--quiet".into()]);
    match fdht_cli::run_from(argv) {
        0 => Ok(()),
        code => Err(format!("fdht {} exited with {code}", args.join(" "))),
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let dir = tempdir();
    let mut parts = Vec::new();
    for (preset, params, ratio) in [("ucf11", 8808, 6726), ("ytc", 8324, 7117)] {
        let start = Instant::now();
        fdht(dir.path(), &["params", "--preset", preset])?;
        let elapsed = start.elapsed();
        let v = read_json(&dir.path().join("params.json"))?;
        let got = v["ht_params"].as_u64().ok_or("missing ht_params")?;
        let r = v["compression_ratio"].as_f64().ok_or("missing compression_ratio")?;
        if got != params || r.round() as u64 != ratio {
            return Err(format!("{preset}: params {got}, ratio {r:.2}"));
        }
        if elapsed >= Duration::from_secs(1) {
            return Err(format!("{preset}: {elapsed:?} >= 1 s"));
        }
        parts.push(format!("{preset} {got} params {:.0}x", r.round()));
    }
    Ok(parts.join(", "))
}

fn criterion_2() -> Outcome {
    let dir = tempdir();
    fdht(
        dir.path(),
        &["formats", "--d", "5", "--in-max", "10", "--out-max", "4", "--rmin", "2", "--rmax", "30"],
    )?;
    let csv = std::fs::read_to_string(dir.path().join("formats.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    if lines.next() != Some("R,TT,TR,BT,HT") {
        return Err("unexpected formats.csv header".into());
    }
    let mut bad = Vec::new();
    let mut ranks = 0;
    for line in lines {
        let v: Vec<u128> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (r, tt, bt, ht) = (v[0], v[1], v[3], v[4]);
        // independent evaluation of the complexity bodies
        let (d, i, o) = (5u128, 10u128, 4u128);
        let dense = (i * o).pow(5);
        if tt != d * i * o * r * r || bt != d * i * o * r + r.pow(5) || ht != d * i * o * r + d * r.pow(3) {
            return Err(format!("R={r}: CSV row disagrees with the complexity formulas"));
        }
        if dense != format_complexity(Format::Dense, 5, 10, 4, r as usize).unwrap() {
            return Err("dense value mismatch".into());
        }
        if !(ht < bt && bt < dense && ht < tt) {
            bad.push(format!("R={r} (HT {ht}, BT {bt}, TT {tt})"));
        }
        ranks += 1;
    }
    if ranks != 29 {
        return Err(format!("{ranks} rows, expected 29"));
    }
    if bad.is_empty() {
        Ok("HT < BT < dense and HT < TT for R = 2..30".into())
    } else {
        Err(format!("ordering violated at {}", bad.join(", ")))
    }
}

fn digits(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
    out
}

// Frame entry by explicit summation over child ranks; leaves are
// [rank, out, in].
fn node_entry(w: &HtWeight, id: usize, r: usize, o: &[usize], i: &[usize]) -> f64 {
    let core = w.core(id);
    match w.tree().node(id).children {
        None => core.get(&[r, o[id], i[id]]),
        Some((l, rr)) => {
            let mut acc = 0.0;
            for p in 0..w.tree().node(l).rank {
                let left = node_entry(w, l, p, o, i);
                for q in 0..w.tree().node(rr).rank {
                    acc += core.get(&[r, p, q]) * left * node_entry(w, rr, q, o, i);
                }
            }
            acc
        }
    }
}

fn dense_forward(w: &HtWeight, x: &[f64]) -> Vec<f64> {
    let cfg = w.config();
    let root = w.tree().root();
    let mut y = Vec::new();
    for r in 0..w.root_rank() {
        for of in 0..cfg.output_size() {
            let o = digits(of, &cfg.out_dims);
            let mut acc = 0.0;
            for (ifl, xi) in x.iter().enumerate() {
                acc += node_entry(w, root, r, &o, &digits(ifl, &cfg.in_dims)) * xi;
            }
            y.push(acc);
        }
    }
    y
}

fn random_config(rng: &mut ChaCha8Rng, d: usize) -> HtConfig {
    loop {
        let cfg = HtConfig::new(
            (0..d).map(|_| rng.random_range(1..=4)).collect(),
            (0..d).map(|_| rng.random_range(1..=3)).collect(),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
            rng.random_range(1..=4),
        );
        if cfg.input_size() > 1 && cfg.input_size() <= 4096 && cfg.output_size() * cfg.root_rank <= 1024 {
            return cfg;
        }
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let cases = 60;
    for case in 0..cases {
        let cfg = random_config(&mut rng, [2, 4, 6][case % 3]);
        let w = HtWeight::random(cfg.clone(), case as u64).map_err(|e| e.to_string())?;
        let x = uniform(&mut rng, cfg.input_size());
        let got = forward(&w, &x).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&got, &dense_forward(&w, &x)));
    }
    if worst <= 1e-9 {
        Ok(format!("{cases} configs, max |diff| {worst:.1e} <= 1e-9"))
    } else {
        Err(format!("max |diff| {worst:.1e} > 1e-9"))
    }
}

// dL/dtheta for L = 0.5 |y - t|^2, summed entrywise to avoid cancellation.
fn central_difference(yp: &[f64], ym: &[f64], target: &[f64], h: f64) -> f64 {
    yp.iter()
        .zip(ym)
        .zip(target)
        .map(|((p, m), t)| 0.5 * (p - m) * (p + m - 2.0 * t))
        .sum::<f64>()
        / (2.0 * h)
}

fn layer_gradient_errors(cfg: &HtConfig, seed: u64) -> Result<(f64, f64), String> {
    let w = HtWeight::random(cfg.clone(), seed).map_err(|e| e.to_string())?;
    let batch = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
    let len = cfg.input_size() - 1;
    let x = uniform(&mut rng, batch * len);
    let target = uniform(&mut rng, batch * output_len(&w));
    let fwd = |w: &HtWeight, x: &[f64]| forward_batch(w, x, batch).unwrap();
    let dy: Vec<f64> = fwd(&w, &x).iter().zip(&target).map(|(a, b)| a - b).collect();
    let grads = backward_frames(&w, &x, &dy, batch).map_err(|e| e.to_string())?;
    let mut param_err: f64 = 0.0;
    for id in 0..w.cores().len() {
        let numeric: Vec<f64> = (0..w.core(id).len())
            .map(|k| {
                let theta = w.core(id).data()[k];
                let h = 1e-6 * theta.abs().max(1.0);
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp.core_mut(id).data_mut()[k] = theta + h;
                wm.core_mut(id).data_mut()[k] = theta - h;
                central_difference(&fwd(&wp, &x), &fwd(&wm, &x), &target, h)
            })
            .collect();
        param_err = param_err.max(max_rel_err(grads[id].data(), &numeric));
    }
    let gx = backward_input(&w, &dy, batch, len).map_err(|e| e.to_string())?;
    let numeric: Vec<f64> = (0..x.len())
        .map(|k| {
            let h = 1e-6 * x[k].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            central_difference(&fwd(&w, &xp), &fwd(&w, &xm), &target, h)
        })
        .collect();
    Ok((param_err, max_rel_err(&gx, &numeric)))
}

fn bptt_error(t_len: usize, seed: u64) -> Result<f64, String> {
    let cfg = HtConfig::new(vec![3, 2], vec![2, 2], 2, 2, 4);
    let (input, batch) = (2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
    let w = HtWeight::random(cfg.clone(), seed).map_err(|e| e.to_string())?;
    let p = LstmParams::new(w, uniform(&mut rng, 4 * cfg.output_size()), input).map_err(|e| e.to_string())?;
    let seq: Vec<Vec<f64>> = (0..t_len).map(|_| uniform(&mut rng, batch * input)).collect();
    let e = uniform(&mut rng, batch * p.hidden());
    let loss = |p: &LstmParams| -> f64 {
        let s = run(p, &seq, batch).unwrap();
        s.h.iter().zip(&e).map(|(a, b)| a * b).sum()
    };
    let g = bptt_gradients(&p, &seq, batch, &e).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for id in 0..p.ht.cores().len() {
        let numeric: Vec<f64> = (0..p.ht.core(id).len())
            .map(|k| {
                let theta = p.ht.core(id).data()[k];
                let h = 1e-6 * theta.abs().max(1.0);
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.ht.core_mut(id).data_mut()[k] = theta + h;
                pm.ht.core_mut(id).data_mut()[k] = theta - h;
                (loss(&pp) - loss(&pm)) / (2.0 * h)
            })
            .collect();
        worst = worst.max(max_rel_err(g.ht[id].data(), &numeric));
    }
    let numeric: Vec<f64> = (0..p.bias.len())
        .map(|k| {
            let h = 1e-6 * p.bias[k].abs().max(1.0);
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.bias[k] += h;
            pm.bias[k] -= h;
            (loss(&pp) - loss(&pm)) / (2.0 * h)
        })
        .collect();
    Ok(worst.max(max_rel_err(&g.bias, &numeric)))
}

fn criterion_4() -> Outcome {
    let shapes = [
        HtConfig::new(vec![3, 4], vec![2, 3], 2, 2, 3),
        HtConfig::new(vec![2, 3, 2, 2], vec![2, 1, 2, 2], 2, 3, 2),
        HtConfig::new(vec![2, 2, 1, 2, 2, 2], vec![1, 2, 2, 1, 2, 1], 2, 2, 2),
    ];
    let (mut param, mut input): (f64, f64) = (0.0, 0.0);
    for cfg in &shapes {
        for seed in 0..5 {
            let (p, i) = layer_gradient_errors(cfg, seed)?;
            param = param.max(p);
            input = input.max(i);
        }
    }
    let mut bptt: f64 = 0.0;
    for t_len in 1..=3 {
        for seed in 0..3 {
            bptt = bptt.max(bptt_error(t_len, seed)?);
        }
    }
    let detail = format!("params {param:.1e}, inputs {input:.1e} (<= 1e-5), bptt {bptt:.1e} (<= 1e-4)");
    if param <= 1e-5 && input <= 1e-5 && bptt <= 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_spec(rng: &mut ChaCha8Rng, max: usize) -> TransformSpec {
    let mut d = || rng.random_range(1..=max);
    match d() % 3 {
        0 => TransformSpec::TypeI { a: d(), b1: d(), b2: d() },
        1 => TransformSpec::TypeII { a1: d(), a2: d(), a3: d(), b1: d(), b2: d() },
        _ => TransformSpec::TypeIII { a1: d(), a2: d(), a3: d(), b: d() },
    }
}

// out[perm(idx)] = in[idx] with explicit index arithmetic: the input is the
// row-major tensor of `spec.dims()`, the output the tensor with those axes
// reordered.
fn permutation_oracle(spec: &TransformSpec, t: &MatrixView) -> Vec<f64> {
    let dims = spec.dims();
    let axes: Vec<usize> = match spec {
        TransformSpec::TypeI { .. } => vec![0, 1, 2],
        TransformSpec::TypeII { .. } => vec![0, 2, 3, 1, 4],
        TransformSpec::TypeIII { .. } => vec![0, 2, 3, 1],
    };
    let out_dims: Vec<usize> = axes.iter().map(|&a| dims[a]).collect();
    let mut out = vec![f64::NAN; t.data().len()];
    for (flat, v) in t.data().iter().enumerate() {
        let idx = digits(flat, &dims);
        let mut dest = 0;
        for (k, &a) in axes.iter().enumerate() {
            dest = dest * out_dims[k] + idx[a];
        }
        out[dest] = *v;
    }
    out
}

fn distinct(spec: &TransformSpec) -> MatrixView {
    let (r, c) = spec.input_shape();
    MatrixView::new(r, c, (0..r * c).map(|v| v as f64 + 0.5).collect()).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let specs = 150;
    for _ in 0..specs {
        let spec = random_spec(&mut rng, 5);
        check_bijection(&index_map(&spec), spec.output_shape())
            .map_err(|e| format!("{spec:?}: {e:?}"))?;
        let t = distinct(&spec);
        let got = apply_transform(&spec, &t).map_err(|e| e.to_string())?;
        if got.data() != permutation_oracle(&spec, &t).as_slice() {
            return Err(format!("{spec:?} differs from the permutation oracle"));
        }
    }
    // literal column formula: two sources land on one in-range target
    let (a1, a2, a3, b1, b2) = (1, 3, 1, 1, 2);
    let (rows, cols) = (a1 * a3 * b1, a2 * b2);
    let table = literal_type_ii_map(a1, a2, a3, b1, b2);
    let mut seen = std::collections::HashMap::new();
    let mut collision = None;
    for e in &table {
        if (1..=rows).contains(&e.p) && (1..=cols).contains(&e.q) {
            if let Some(prev) = seen.insert((e.p, e.q), (e.m, e.n)) {
                collision = Some((prev, (e.m, e.n), (e.p, e.q)));
                break;
            }
        }
    }
    let ((m1, n1), (m2, n2), (p, q)) = collision.ok_or("literal formula showed no collision")?;
    if check_bijection(&table, (rows, cols)).is_ok() {
        return Err("literal formula accepted as a bijection".into());
    }
    Ok(format!(
        "{specs} specs bijective and exact; literal formula sends T({m1},{n1}) and T({m2},{n2}) to T'({p},{q})"
    ))
}

fn criterion_6() -> Outcome {
    let hw = HwConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let specs = 240;
    let mut kinds = BTreeSet::new();
    for _ in 0..specs {
        let spec = random_spec(&mut rng, 6);
        kinds.insert(spec.kind().to_string());
        let t = distinct(&spec);
        let run = execute(&hw, &spec, Some(&t), true).map_err(|e| format!("{spec:?}: {e}"))?;
        let out = run.output.as_ref().ok_or("no output")?;
        if out.data() != permutation_oracle(&spec, &t).as_slice() {
            return Err(format!("{spec:?}: read stream differs from the oracle"));
        }
        let report = check_conflicts(&run.trace);
        if !report.ok || report.conflicts > 0 || report.discarded_words > 0 {
            return Err(format!("{spec:?}: {report:?}"));
        }
        let read: usize = run.trace.iter().filter(|e| e.op == Op::Read).map(|e| e.words.len()).sum();
        if read != spec.len() {
            return Err(format!("{spec:?}: {read} words read for {} entries", spec.len()));
        }
    }
    if kinds.len() != 3 {
        return Err(format!("only types {kinds:?} sampled"));
    }
    let conv = check_conflicts(&conventional_trace(&TransformSpec::basic(2, 2, 2, 2)).map_err(|e| e.to_string())?);
    match conv.first_conflict {
        Some((cycle, bank)) if !conv.ok => Ok(format!(
            "{specs} specs conflict-free and exact; conventional layout conflicts at cycle {cycle} bank {bank}"
        )),
        _ => Err("conventional layout passed the conflict check".into()),
    }
}

fn criterion_7() -> Outcome {
    let dir = tempdir();
    let mut parts = Vec::new();
    for preset in ["ucf11", "ytc"] {
        fdht(dir.path(), &["simulate", "--preset", preset])?;
        let v = read_json(&dir.path().join("report.json"))?;
        let peak = v["points"][0]["report"]["peakAssembleBufferBytes"]
            .as_u64()
            .ok_or("missing peakAssembleBufferBytes")?;
        if peak == 0 || peak > 448 {
            return Err(format!("{preset}: peak {peak} B"));
        }
        parts.push(format!("{preset} peak {peak} B"));
    }
    Ok(format!("{} (<= 448 B)", parts.join(", ")))
}

fn criterion_8() -> Outcome {
    let dir = tempdir();
    let cfg = ToyConfig::default();
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let report = train_toy(&cfg, seed).map_err(|e| e.to_string())?;
        if report.metrics.len() > cfg.epochs + 1 {
            return Err("more epochs than configured".into());
        }
        let acc = report.final_accuracy();
        if acc < 0.95 {
            return Err(format!("seed {seed}: final accuracy {acc:.3} < 0.95 after {} epochs", cfg.epochs));
        }
        parts.push(format!("{acc:.3}"));
    }
    // same seed through the CLI twice gives the same curve
    let mut curves = Vec::new();
    for _ in 0..2 {
        fdht(dir.path(), &["train-toy", "--seed", "0"])?;
        curves.push(std::fs::read_to_string(dir.path().join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    if curves[0] != curves[1] {
        return Err("metrics differ between identical runs".into());
    }
    Ok(format!("final accuracy {} over seeds 0..3 in {} epochs; deterministic", parts.join(", "), cfg.epochs))
}

const POINT_KEYS: [&str; 11] = [
    "model",
    "batch",
    "totalCycles",
    "macCycles",
    "memWriteCycles",
    "memReadCycles",
    "macUtilization",
    "peakAssembleBufferBytes",
    "sramBytesTouched",
    "seconds",
    "steps",
];

fn criterion_9() -> Outcome {
    let dir = tempdir();
    fdht(dir.path(), &["simulate", "--preset", "ucf11", "--sweep", "2..14"])?;
    let v = read_json(&dir.path().join("report.json"))?;
    let top: BTreeSet<&str> = v.as_object().ok_or("report is not an object")?.keys().map(|k| k.as_str()).collect();
    if top != BTreeSet::from(["model", "hw", "points"]) {
        return Err(format!("top-level keys {top:?}"));
    }
    let points = v["points"].as_array().ok_or("points is not an array")?;
    let want: BTreeSet<&str> = POINT_KEYS.into_iter().collect();
    let mut cycles = Vec::new();
    for (k, p) in points.iter().enumerate() {
        if p["rank"].as_u64() != Some(2 + k as u64) {
            return Err(format!("point {k} has rank {}", p["rank"]));
        }
        let report = p["report"].as_object().ok_or_else(|| format!("point {k}: {}", p["error"]))?;
        let keys: BTreeSet<&str> = report.keys().map(|k| k.as_str()).collect();
        if keys != want {
            return Err(format!("point {k} keys {keys:?}"));
        }
        cycles.push(report["totalCycles"].as_u64().ok_or("totalCycles")?);
    }
    if cycles.len() != 13 {
        return Err(format!("{} points, expected 13", cycles.len()));
    }
    if let Some(w) = cycles.windows(2).position(|w| w[0] > w[1]) {
        return Err(format!("cycles drop from R={} to R={}", w + 2, w + 3));
    }
    Ok(format!(
        "totalCycles {} -> {} over R = 2..14, nondecreasing, schema stable",
        cycles[0],
        cycles[cycles.len() - 1]
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 9] = [
        ("parameter counts", 1, criterion_1),
        ("complexity ordering", 1, criterion_2),
        ("layer oracle equivalence", 60, criterion_3),
        ("gradient correctness", 120, criterion_4),
        ("transformation correctness", 30, criterion_5),
        ("conflict-free memory schemes", 120, criterion_6),
        ("buffer bound", 60, criterion_7),
        ("toy training", 600, criterion_8),
        ("rank-flexibility sweep", 60, criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(d) if secs >= *budget as f64 => Err(format!("{d}; took {secs:.2}s, budget {budget}s")),
            o => o,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {status} {name} [{secs:.2}s] {detail}", k + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
