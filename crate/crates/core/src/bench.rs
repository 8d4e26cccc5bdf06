//! Decoder timing over generated scenes.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{efficient_decode, greedy_decode, DecodeError, DecodedLane, DecoderConfig};
use crate::encoder::EncoderConfig;
use crate::loss::LogitMaps;
use crate::synth::{gen_scene, perturb, render_ideal, NoiseSpec, SceneSpec, SynthError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Number of generated scenes; scene `i` uses seed `scene.seed + i`.
    pub scenes: usize,
    /// Timed runs per scene and decoder; the fastest run is kept.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { scenes: 50, repeats: 3 }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.scenes == 0 || self.repeats == 0 {
            return Err(BenchError::InvalidConfig(
                "scenes and repeats must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

impl TimingStats {
    /// Nearest-rank statistics.
    pub fn from_samples(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Self {
                median_ms: 0.0,
                p95_ms: 0.0,
                mean_ms: 0.0,
            };
        }
        let mut s = ms.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self {
            median_ms: rank(0.5),
            p95_ms: rank(0.95),
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
        }
    }
}

/// Deterministic part of a decoder run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderResults {
    pub lanes: usize,
    pub points: usize,
    /// Hash of every decoded coordinate and score, hex.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenes: usize,
    pub width: u32,
    pub height: u32,
    pub greedy: TimingStats,
    pub efficient: TimingStats,
    /// Greedy median over efficient median.
    pub speedup: f64,
    pub greedy_results: DecoderResults,
    pub efficient_results: DecoderResults,
}

/// Inputs for one benchmark scene.
pub fn bench_inputs(
    scene: &SceneSpec,
    noise: &NoiseSpec,
    encoder: &EncoderConfig,
    count: usize,
) -> Result<Vec<LogitMaps>, BenchError> {
    let spec = scene.image_spec()?;
    (0..count)
        .map(|i| {
            let s = SceneSpec {
                seed: scene.seed.wrapping_add(i as u64),
                ..scene.clone()
            };
            let n = NoiseSpec {
                seed: noise.seed.wrapping_add(i as u64),
                ..*noise
            };
            let curves = gen_scene(&s)?;
            let ideal = render_ideal(&curves, spec, encoder)?;
            Ok(perturb(&ideal, &n)?)
        })
        .collect()
}

fn hash_lanes(h: &mut DefaultHasher, lanes: &[DecodedLane]) {
    lanes.len().hash(h);
    for l in lanes {
        for (p, s) in l.points.iter().zip(&l.scores) {
            p.x.to_bits().hash(h);
            p.y.to_bits().hash(h);
            s.to_bits().hash(h);
        }
    }
}

type Decoder = fn(&LogitMaps, &DecoderConfig) -> Result<Vec<DecodedLane>, DecodeError>;

fn time_decoder(
    f: Decoder,
    input: &LogitMaps,
    cfg: &DecoderConfig,
    repeats: usize,
) -> Result<(f64, Vec<DecodedLane>), BenchError> {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for _ in 0..repeats {
        let t0 = Instant::now();
        out = f(input, cfg)?;
        best = best.min(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok((best, out))
}

/// Times both decoders on `bench.scenes` generated scenes. Per scene the
/// fastest of `bench.repeats` runs is kept; the decoders alternate which
/// goes first from scene to scene.
pub fn run_bench(
    scene: &SceneSpec,
    noise: &NoiseSpec,
    encoder: &EncoderConfig,
    decoder: &DecoderConfig,
    bench: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    bench.validate()?;
    decoder.validate()?;
    let inputs = bench_inputs(scene, noise, encoder, bench.scenes)?;
    let mut tg = Vec::with_capacity(inputs.len());
    let mut te = Vec::with_capacity(inputs.len());
    let (mut hg, mut he) = (DefaultHasher::new(), DefaultHasher::new());
    let (mut rg, mut re) = (
        DecoderResults {
            lanes: 0,
            points: 0,
            digest: String::new(),
        },
        DecoderResults {
            lanes: 0,
            points: 0,
            digest: String::new(),
        },
    );
    for (i, input) in inputs.iter().enumerate() {
        let ((g_ms, g), (e_ms, e)) = if i % 2 == 0 {
            let g = time_decoder(greedy_decode, input, decoder, bench.repeats)?;
            (g, time_decoder(efficient_decode, input, decoder, bench.repeats)?)
        } else {
            let e = time_decoder(efficient_decode, input, decoder, bench.repeats)?;
            (time_decoder(greedy_decode, input, decoder, bench.repeats)?, e)
        };
        tg.push(g_ms);
        te.push(e_ms);
        for (lanes, r, h) in [(&g, &mut rg, &mut hg), (&e, &mut re, &mut he)] {
            r.lanes += lanes.len();
            r.points += lanes.iter().map(DecodedLane::len).sum::<usize>();
            hash_lanes(h, lanes);
        }
    }
    rg.digest = format!("{:016x}", hg.finish());
    re.digest = format!("{:016x}", he.finish());
    let greedy = TimingStats::from_samples(&tg);
    let efficient = TimingStats::from_samples(&te);
    Ok(BenchReport {
        scenes: inputs.len(),
        width: scene.width,
        height: scene.height,
        speedup: if efficient.median_ms > 0.0 {
            greedy.median_ms / efficient.median_ms
        } else {
            f64::INFINITY
        },
        greedy,
        efficient,
        greedy_results: rg,
        efficient_results: re,
    })
}
