#![allow(dead_code)]

use std::f64::consts::TAU;

use gp_sparx::geometry::FarmLayout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROTOR: f64 = 80.0;

/// Random layout of `n` turbines in a `side`-metre square, at least 1.5
/// rotor diameters apart.
pub fn random_layout(rng: &mut ChaCha8Rng, n: usize, side: f64) -> FarmLayout {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = (rng.random_range(0.0..side), rng.random_range(0.0..side));
        if pts
            .iter()
            .all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() > 1.5 * ROTOR)
        {
            pts.push(p);
        }
    }
    FarmLayout::new(ROTOR, 70.0, &pts).unwrap()
}

pub fn random_phi(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.0..TAU)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid_3x3() -> FarmLayout {
    FarmLayout::grid(3, 3, 5.0, ROTOR, 70.0).unwrap()
}

/// Every edge goes from a smaller to a larger position in `order`.
pub fn respects_precedence(edges: &[(usize, usize)], order: &[usize]) -> bool {
    let mut pos = vec![usize::MAX; order.len() + 1];
    for (i, &s) in order.iter().enumerate() {
        pos[s] = i;
    }
    let mut seen = order.to_vec();
    seen.sort_unstable();
    seen == (1..=order.len()).collect::<Vec<_>>() && edges.iter().all(|&(a, b)| pos[a] < pos[b])
}
