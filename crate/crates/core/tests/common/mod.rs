#![allow(dead_code)]

use fdht_core::ht::{HtConfig, HtWeight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

// Scalar evaluation of one node's frame entry by explicit summation over
// child ranks, leaves indexed as [rank, out, in].
fn node_entry(w: &HtWeight, id: usize, r: usize, o: &[usize], i: &[usize]) -> f64 {
    let node = w.tree().node(id);
    let core = w.core(id);
    match node.children {
        None => core.get(&[r, o[id], i[id]]),
        Some((l, rr)) => {
            let r1 = w.tree().node(l).rank;
            let r2 = w.tree().node(rr).rank;
            let mut acc = 0.0;
            for p in 0..r1 {
                let left = node_entry(w, l, p, o, i);
                for q in 0..r2 {
                    acc += core.get(&[r, p, q]) * left * node_entry(w, rr, q, o, i);
                }
            }
            acc
        }
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

/// Dense weight `[R_D][prod O][prod I]` by brute-force summation.
pub fn dense_oracle(w: &HtWeight) -> Vec<Vec<Vec<f64>>> {
    let cfg = w.config();
    let root = w.tree().root();
    (0..w.root_rank())
        .map(|r| {
            (0..cfg.output_size())
                .map(|of| {
                    let o = digits(of, &cfg.out_dims);
                    (0..cfg.input_size())
                        .map(|ifl| node_entry(w, root, r, &o, &digits(ifl, &cfg.in_dims)))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `y[g * prod(O) + o] = sum_i W_g[o][i] * x_pad[i]`.
pub fn dense_forward(dense: &[Vec<Vec<f64>>], x: &[f64]) -> Vec<f64> {
    let mut y = Vec::new();
    for gate in dense {
        for row in gate {
            y.push(row.iter().zip(x).map(|(a, b)| a * b).sum());
        }
    }
    y
}

pub fn random_config(rng: &mut ChaCha8Rng, d: usize, max_in: usize) -> HtConfig {
    loop {
        let in_dims: Vec<usize> = (0..d).map(|_| rng.random_range(1..=4)).collect();
        let out_dims: Vec<usize> = (0..d).map(|_| rng.random_range(1..=3)).collect();
        let leaf_ranks: Vec<usize> = (0..d).map(|_| rng.random_range(1..=3)).collect();
        let cfg = HtConfig {
            in_dims,
            out_dims,
            leaf_ranks,
            non_leaf_rank: rng.random_range(1..=3),
            root_rank: rng.random_range(1..=4),
        };
        if cfg.input_size() <= max_in
            && cfg.output_size() * cfg.root_rank <= 1024
            && cfg.input_size() > 1
        {
            return cfg;
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst entrywise `|a - f| / max(|a|, |f|)`; pairs whose magnitudes are
/// both below `floor` are compared absolutely against `floor`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(floor))
        .fold(0.0, f64::max)
}
