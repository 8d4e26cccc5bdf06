//! Command-line interface.
//!
//! Exit status: 0 on success, 1 on I/O or data errors, 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::bench::run_bench;
use crate::decoder::{efficient_decode, greedy_decode};
use crate::encoder::encode;
use crate::io::{logits_to_tensor, tensor_to_logits, LaneFile, RunConfig, Tensor};
use crate::loss::total_loss;
use crate::metrics::{eval_culane, eval_tusimple, CulaneParams, TusimpleParams};
use crate::synth::{gen_scene, perturb, render_ideal, NoiseSpec, SceneSpec};

#[derive(Debug, Parser)]
#[command(name = "keylane", version, about = "Keypoint lane detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render training targets for a lane file.
    Encode(EncodeArgs),
    /// Decode lanes from a network output tensor.
    Decode(DecodeArgs),
    /// Evaluate the training loss of network outputs against lanes.
    Loss(LossArgs),
    /// Score predicted lane files against ground truth.
    Eval(EvalArgs),
    /// Generate synthetic scenes with ideal and perturbed outputs.
    Synth(SynthArgs),
    /// Time both decoders on generated scenes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Vertical keypoint interval, overrides the config.
    #[arg(long)]
    dy: Option<u32>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(dy) = self.dy {
            cfg.set_dy(dy);
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// Input lane file.
    #[arg(long)]
    lanes: PathBuf,
    /// Output tensor `[4, H, W]`: heatmap, up, mid and down targets.
    #[arg(long)]
    out: PathBuf,
    /// Optional output `[H, W]` offset supervision mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    sigma_h: Option<f64>,
    #[arg(long)]
    sigma_g: Option<f64>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecoderKind {
    Greedy,
    Efficient,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Network output tensor `[4, H, W]`.
    #[arg(long)]
    logits: PathBuf,
    /// Output lane file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DecoderKind::Greedy)]
    decoder: DecoderKind,
    /// Keep coarse positions instead of applying the same-row offset.
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    theta_h: Option<f32>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct LossArgs {
    /// Network output tensor `[4, H, W]`.
    #[arg(long)]
    logits: PathBuf,
    /// Ground-truth lane file.
    #[arg(long)]
    lanes: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Tusimple,
    Culane,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted lane file, one per image; repeat in the same order as --gt.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Ground-truth lane file, one per image.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    #[arg(long, value_enum)]
    metric: Metric,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// TuSimple point threshold, pixels.
    #[arg(long)]
    pt_thresh: Option<f64>,
    /// CULane lane width, pixels; defaults to 30 scaled to the image width.
    #[arg(long)]
    lane_width: Option<f64>,
    /// CULane IoU threshold.
    #[arg(long)]
    iou_thresh: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of scenes; scene i uses seed `scene.seed + i`.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Number of generated scenes, overrides the config.
    #[arg(long)]
    scenes: Option<usize>,
    /// Timed runs per scene and decoder, overrides the config.
    #[arg(long)]
    repeats: Option<usize>,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn load_lanes(path: &Path) -> Result<LaneFile> {
    LaneFile::load(path).with_context(|| format!("reading lane file {}", path.display()))
}

fn load_tensor(path: &Path) -> Result<Tensor> {
    Tensor::load(path).with_context(|| format!("reading tensor {}", path.display()))
}

fn save_tensor(t: &Tensor, path: &Path) -> Result<()> {
    t.save(path)
        .with_context(|| format!("writing tensor {}", path.display()))
}

fn save_lanes(f: &LaneFile, path: &Path) -> Result<()> {
    f.save(path)
        .with_context(|| format!("writing lane file {}", path.display()))
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let mut cfg = a.config.load()?.encoder;
    if let Some(s) = a.sigma_h {
        cfg.sigma_h = s;
    }
    if let Some(s) = a.sigma_g {
        cfg.sigma_g = s;
    }
    let file = load_lanes(&a.lanes)?;
    let curves = file.to_curves()?;
    let gt = encode(&curves, file.image_spec()?, &cfg)?;
    let t = Tensor::from_planes(&[&gt.heat, &gt.off_up, &gt.off_mid, &gt.off_down])?;
    save_tensor(&t, &a.out)?;
    if let Some(p) = &a.mask {
        save_tensor(&Tensor::from_plane(&gt.mask), p)?;
    }
    log::info!(
        "encoded {} lanes, {} supervised pixels",
        curves.len(),
        gt.supervised_count()
    );
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let mut cfg = a.config.load()?.decoder;
    if a.no_refine {
        cfg.refine = false;
    }
    if let Some(t) = a.theta_h {
        cfg.theta_h = t;
    }
    let logits = tensor_to_logits(&load_tensor(&a.logits)?).with_context(|| a.logits.display().to_string())?;
    let lanes = match a.decoder {
        DecoderKind::Greedy => greedy_decode(&logits, &cfg)?,
        DecoderKind::Efficient => efficient_decode(&logits, &cfg)?,
    };
    let file = LaneFile::from_decoded(logits.image_spec(), &lanes);
    match &a.out {
        Some(p) => save_lanes(&file, p)?,
        None => emit(&file.to_json()),
    }
    Ok(())
}

fn cmd_loss(a: LossArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let logits = tensor_to_logits(&load_tensor(&a.logits)?).with_context(|| a.logits.display().to_string())?;
    let file = load_lanes(&a.lanes)?;
    let spec = file.image_spec()?;
    if spec != logits.image_spec() {
        bail!(
            "{} is {}x{} but {} is {}x{}",
            a.lanes.display(),
            spec.width,
            spec.height,
            a.logits.display(),
            logits.width(),
            logits.height()
        );
    }
    let curves = file.to_curves()?;
    let gt = encode(&curves, spec, &cfg.encoder)?;
    let r = total_loss(&logits, &gt, &curves, &cfg.loss)?;
    match a.format {
        Format::Json => print_json(&r)?,
        Format::Text => print_table(&[
            ("heat", fmt_g(r.heat_loss)),
            ("up", fmt_g(r.loss_up)),
            ("down", fmt_g(r.loss_down)),
            ("mid", fmt_g(r.loss_mid)),
            ("total", fmt_g(r.total)),
            ("n_pos", r.n_pos.to_string()),
            ("supervised", r.supervised.to_string()),
        ]),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if a.pred.len() != a.gt.len() {
        bail!("{} --pred files but {} --gt files", a.pred.len(), a.gt.len());
    }
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    let mut spec = None;
    for (p, g) in a.pred.iter().zip(&a.gt) {
        let pf = load_lanes(p)?;
        let gf = load_lanes(g)?;
        let s = gf.image_spec()?;
        if pf.image_spec()? != s {
            bail!("{} and {} differ in image size", p.display(), g.display());
        }
        if spec.is_some_and(|s0| s0 != s) {
            bail!("{} differs in image size from the first ground-truth file", g.display());
        }
        spec = Some(s);
        pred.push(pf.to_curves()?);
        gt.push(gf.to_curves()?);
    }
    let spec = spec.expect("at least one image");
    match a.metric {
        Metric::Tusimple => {
            let mut params = TusimpleParams::default();
            if let Some(t) = a.pt_thresh {
                params.pt_thresh = t;
            }
            let r = eval_tusimple(&pred, &gt, &params)?;
            match a.format {
                Format::Json => print_json(&r)?,
                Format::Text => print_table(&[
                    ("accuracy", fmt_g(r.accuracy)),
                    ("fp_rate", fmt_g(r.fp_rate)),
                    ("fn_rate", fmt_g(r.fn_rate)),
                    ("images", r.images.len().to_string()),
                ]),
            }
        }
        Metric::Culane => {
            let mut params = CulaneParams::scaled_to(spec);
            if let Some(w) = a.lane_width {
                params.lane_width = w;
            }
            if let Some(t) = a.iou_thresh {
                params.iou_thresh = t;
            }
            let r = eval_culane(&pred, &gt, spec, &params)?;
            match a.format {
                Format::Json => print_json(&r)?,
                Format::Text => print_table(&[
                    ("tp", r.tp.to_string()),
                    ("fp", r.fp.to_string()),
                    ("fn", r.fn_.to_string()),
                    ("precision", fmt_g(r.precision)),
                    ("recall", fmt_g(r.recall)),
                    ("f1", fmt_g(r.f1)),
                ]),
            }
        }
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let cfg = a.config.load()?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let spec = cfg.scene.image_spec()?;
    for i in 0..a.count {
        let scene = SceneSpec {
            seed: cfg.scene.seed.wrapping_add(i as u64),
            ..cfg.scene.clone()
        };
        let noise = NoiseSpec {
            seed: cfg.noise.seed.wrapping_add(i as u64),
            ..cfg.noise
        };
        let curves = gen_scene(&scene)?;
        let ideal = render_ideal(&curves, spec, &cfg.encoder)?;
        let noisy = perturb(&ideal, &noise)?;
        let stem = a.out_dir.join(format!("scene_{i:04}"));
        save_lanes(
            &LaneFile::from_curves(spec, &curves),
            &stem.with_extension("lanes.json"),
        )?;
        save_tensor(&logits_to_tensor(&ideal), &stem.with_extension("ideal.lkt"))?;
        save_tensor(&logits_to_tensor(&noisy), &stem.with_extension("noisy.lkt"))?;
    }
    emit(&format!("wrote {} scenes to {}", a.count, a.out_dir.display()));
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(n) = a.scenes {
        cfg.bench.scenes = n;
    }
    if let Some(n) = a.repeats {
        cfg.bench.repeats = n;
    }
    let r = run_bench(&cfg.scene, &cfg.noise, &cfg.encoder, &cfg.decoder, &cfg.bench)?;
    let text = serde_json::to_string_pretty(&round_json(serde_json::to_value(&r)?))?;
    if let Some(p) = &a.out {
        std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(&text);
    Ok(())
}

/// Writes one line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn print_table(rows: &[(&str, String)]) {
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        emit(&format!("{k:<w$}  {v}"));
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(&round_json(serde_json::to_value(v)?))?);
    Ok(())
}

/// Rounds every non-integer number to 6 significant digits.
fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            fmt_g(x)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// `printf("%g")`: 6 significant digits, trailing zeros removed.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.173287, "0.173287"),
            (0.1732867951, "0.173287"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (5.5843e-4, "0.00055843"),
        ];
        for (v, s) in cases {
            assert_eq!(fmt_g(v), s, "{v}");
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["keylane", "frobnicate"]), 2);
        assert_eq!(run(["keylane", "decode", "--bogus"]), 2);
        assert_eq!(
            run(["keylane", "eval", "--metric", "kitti", "--pred", "a", "--gt", "b"]),
            2
        );
    }

    #[test]
    fn missing_files_exit_1() {
        assert_eq!(run(["keylane", "decode", "--logits", "/nonexistent/x.lkt"]), 1);
    }

    #[test]
    fn round_json_keeps_integers() {
        let v = round_json(serde_json::json!({"a": 3, "b": [0.1234567891, 2.0]}));
        assert_eq!(v, serde_json::json!({"a": 3, "b": [0.123457, 2.0]}));
    }
}
