#![allow(dead_code)]

use dia_sgn::dynamic_env::{AgentId, DiaKey, FEATURE_DIM};
use dia_sgn::semantic_graph::{FrameInput, GraphInput, REL_FEATURE_DIM};
use rand::Rng;

pub fn key(k: usize) -> DiaKey {
    DiaKey { path: format!("p{}", k % 3).as_str().into(), rear_agent: AgentId(k as u32) }
}

/// Random normalized input with `n` nodes and `frames` frames; older frames
/// mask some nodes.
pub fn random_input<R: Rng>(rng: &mut R, n: usize, frames: usize) -> GraphInput {
    let reference = rng.gen_range(0..n);
    let frames = (0..frames)
        .map(|f| {
            let mut rel = Vec::with_capacity(n);
            for j in 0..n {
                let present = f + 1 == frames || j == reference || rng.gen_bool(0.7);
                rel.push(present.then(|| {
                    let mut v = [0.0; REL_FEATURE_DIM];
                    for x in &mut v {
                        *x = rng.gen_range(-1.5..1.5);
                    }
                    if j == reference {
                        for x in &mut v[..FEATURE_DIM] {
                            *x = 0.0;
                        }
                    }
                    v
                }));
            }
            let mut reference_x = [0.0; FEATURE_DIM];
            for x in &mut reference_x {
                *x = rng.gen_range(-1.5..1.5);
            }
            Some(FrameInput { reference: reference_x, relative: rel })
        })
        .collect();
    GraphInput { frames, keys: (0..n).map(key).collect(), reference }
}

pub fn random_y<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.gen_range(-30.0..30.0), rng.gen_range(0.0..15.0), rng.gen_range(0.0..8.0)]
}
