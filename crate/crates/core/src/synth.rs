//! Deterministic synthetic streaming sessions.
//!
//! Sessions come from two content clusters: low complexity (TI and SI
//! below 85) and high complexity (at least one of them at or above 85).
//! MOS rises with bitrate, falls with every kind of stall, and the bitrate
//! a content needs to look good grows with its TI/SI complexity, so the
//! content features matter and differ between clusters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::SessionRecord;
use crate::error::{Error, Result};

/// Bitrate ladder in Mbps (13 levels, 0.2 to 7.2).
pub const BITRATE_LADDER: [f64; 13] = [0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.2];

const FPS_CHOICES: [f64; 4] = [24.0, 25.0, 30.0, 60.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub n_sessions: usize,
    /// Sessions drawn from the low-complexity cluster.
    pub n_low: usize,
    pub n_contents: usize,
    /// Standard deviation of the opinion noise on the latent score.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_sessions: 450,
            n_low: 353,
            n_contents: 20,
            noise_sd: 4.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    /// `n` sessions split between clusters in the ratio `low:high`.
    pub fn with_ratio(n: usize, low: usize, high: usize, seed: u64) -> Self {
        let n_low = ((n * low) as f64 / (low + high) as f64).round() as usize;
        SynthParams {
            n_sessions: n,
            n_low,
            seed,
            ..Default::default()
        }
    }
}

/// Per-session quantities entering the MOS formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosInputs {
    pub ti: f64,
    pub si: f64,
    pub fps: f64,
    pub nstalls: f64,
    pub stall_intermediate_total: f64,
    pub stall_initial: f64,
    pub mean_bitrate: f64,
    pub bitrate_trend: f64,
    pub last_bitrate: f64,
}

/// Latent quality score before noise and squashing.
pub fn latent_score(m: &MosInputs) -> f64 {
    let complexity = (m.ti + m.si) / 200.0;
    let need = 0.6 + 1.8 * complexity;
    let quality = 1.0 - (-m.mean_bitrate / need).exp();
    let last_quality = 1.0 - (-m.last_bitrate / need).exp();
    30.0 + 60.0 * quality + 8.0 * (last_quality - quality) + 2.0 * m.bitrate_trend.clamp(-2.0, 2.0)
        - 8.0 * complexity
        + (m.fps - 30.0) / 10.0
        - 6.0 * m.nstalls
        - 3.0 * m.stall_intermediate_total
        - 1.5 * m.stall_initial
}

/// Strictly increasing map of the latent score onto (0, 100).
pub fn squash(z: f64) -> f64 {
    100.0 / (1.0 + (-(z - 50.0) / 18.0).exp())
}

pub fn synthetic_mos(m: &MosInputs, noise: f64) -> f64 {
    squash(latent_score(m) + noise)
}

struct Content {
    id: String,
    ti: f64,
    si: f64,
    fps: f64,
}

fn draw_contents(n_low: usize, n_high: usize, rng: &mut ChaCha8Rng) -> (Vec<Content>, Vec<Content>) {
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut k = 0;
    for _ in 0..n_low {
        k += 1;
        let ti = rng.random_range(15.0..80.0);
        let si = rng.random_range(20.0..82.0);
        low.push(Content {
            id: format!("c{k:02}"),
            ti: round1(ti),
            si: round1(si),
            fps: FPS_CHOICES[rng.random_range(0..3)],
        });
    }
    for _ in 0..n_high {
        k += 1;
        let ti = rng.random_range(40.0..140.0);
        let si = if ti < 85.0 {
            rng.random_range(90.0..150.0)
        } else {
            rng.random_range(30.0..150.0)
        };
        high.push(Content {
            id: format!("c{k:02}"),
            ti: round1(ti),
            si: round1(si),
            fps: FPS_CHOICES[rng.random_range(1..4)],
        });
    }
    (low, high)
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn bitrate_trace(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(5..=8);
    let top = BITRATE_LADDER.len() - 1;
    let a = rng.random_range(0..=top);
    let b = rng.random_range(0..=top);
    let (lo, hi) = (a.min(b), a.max(b));
    let levels: Vec<usize> = match rng.random_range(0..6) {
        // stable
        0 => vec![a; n],
        // ramp up / ramp down
        1 | 2 => {
            let up: Vec<usize> = (0..n).map(|i| lo + (hi - lo) * i / (n - 1)).collect();
            if rng.random::<bool>() {
                up
            } else {
                up.into_iter().rev().collect()
            }
        }
        // step up
        3 => (0..n).map(|i| if i < n / 2 { lo } else { hi }).collect(),
        // step down
        4 => (0..n).map(|i| if i < n / 2 { hi } else { lo }).collect(),
        // fluctuation
        _ => (0..n).map(|i| if i % 2 == 0 { lo } else { hi }).collect(),
    };
    levels.into_iter().map(|l| BITRATE_LADDER[l]).collect()
}

pub fn generate_sessions(params: &SynthParams) -> Result<Vec<SessionRecord>> {
    if params.n_low > params.n_sessions {
        return Err(Error::InvalidArgument(format!(
            "n_low {} exceeds n_sessions {}",
            params.n_low, params.n_sessions
        )));
    }
    if params.n_contents < 2 {
        return Err(Error::InvalidArgument("need at least two contents".into()));
    }
    if !(params.noise_sd >= 0.0) {
        return Err(Error::InvalidArgument("noise_sd must be non-negative".into()));
    }
    let n_high = params.n_sessions - params.n_low;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let high_contents = if n_high == 0 {
        0
    } else {
        ((params.n_contents * n_high) as f64 / params.n_sessions as f64).round().max(1.0) as usize
    };
    let low_contents = if params.n_low == 0 {
        0
    } else {
        (params.n_contents - high_contents).max(1)
    };
    let (low, high) = draw_contents(low_contents, high_contents, &mut rng);
    let noise = Normal::new(0.0, params.noise_sd.max(1e-300)).expect("valid normal");

    let mut assignments: Vec<&Content> = (0..params.n_low).map(|i| &low[i % low.len()]).collect();
    assignments.extend((0..n_high).map(|i| &high[i % high.len()]));
    assignments.shuffle(&mut rng);

    let mut sessions = Vec::with_capacity(params.n_sessions);
    for (i, content) in assignments.into_iter().enumerate() {
        let segment_bitrates = bitrate_trace(&mut rng);
        let initial_stall_s = if rng.random::<f64>() < 0.5 {
            round3(rng.random_range(0.5..4.0))
        } else {
            0.0
        };
        let n_stalls = match rng.random::<f64>() {
            u if u < 0.5 => 0,
            u if u < 0.75 => 1,
            u if u < 0.9 => 2,
            _ => 3,
        };
        let intermediate_stalls: Vec<f64> = (0..n_stalls).map(|_| round3(rng.random_range(0.5..5.0))).collect();
        let mean_bitrate = segment_bitrates.iter().sum::<f64>() / segment_bitrates.len() as f64;
        let inputs = MosInputs {
            ti: content.ti,
            si: content.si,
            fps: content.fps,
            nstalls: n_stalls as f64,
            stall_intermediate_total: intermediate_stalls.iter().sum(),
            stall_initial: initial_stall_s,
            mean_bitrate,
            bitrate_trend: crate::dataset::ols_slope(&segment_bitrates),
            last_bitrate: *segment_bitrates.last().unwrap(),
        };
        let eps = if params.noise_sd > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        sessions.push(SessionRecord {
            session_id: format!("s{:04}", i + 1),
            content_id: content.id.clone(),
            ti: content.ti,
            si: content.si,
            fps: content.fps,
            segment_bitrates,
            initial_stall_s,
            intermediate_stalls,
            mos: round3(synthetic_mos(&inputs, eps)),
        });
    }
    Ok(sessions)
}
