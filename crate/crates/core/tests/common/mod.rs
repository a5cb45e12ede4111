//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points in `R^d` with i.i.d. uniform increments in `[-1, 1)`.
pub fn random_points(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<Vec<f64>> {
    let mut p = vec![0.0; d];
    let mut out = vec![p.clone()];
    for _ in 1..n {
        for x in &mut p {
            *x += rng.gen_range(-1.0..1.0);
        }
        out.push(p.clone());
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All interleavings of `u` and `v`, with multiplicity.
pub fn shuffles(u: &[usize], v: &[usize]) -> Vec<Vec<usize>> {
    if u.is_empty() {
        return vec![v.to_vec()];
    }
    if v.is_empty() {
        return vec![u.to_vec()];
    }
    let mut out = Vec::new();
    for mut w in shuffles(&u[..u.len() - 1], v) {
        w.push(u[u.len() - 1]);
        out.push(w);
    }
    for mut w in shuffles(u, &v[..v.len() - 1]) {
        w.push(v[v.len() - 1]);
        out.push(w);
    }
    out
}

/// Every word of length `n` over `d` letters.
pub fn all_words(d: usize, n: usize) -> Vec<Vec<usize>> {
    (0..d.pow(n as u32))
        .map(|mut k| {
            let mut w = vec![0; n];
            for slot in w.iter_mut().rev() {
                *slot = k % d;
                k /= d;
            }
            w
        })
        .collect()
}

/// Lyndon by definition: strictly smaller than each of its proper rotations.
pub fn is_lyndon_by_rotation(w: &[usize]) -> bool {
    (1..w.len()).all(|k| {
        let rot: Vec<usize> = w[k..].iter().chain(&w[..k]).copied().collect();
        w < rot.as_slice()
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
