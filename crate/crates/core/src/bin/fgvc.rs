use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use fgvc::analysis::{theory_rows, write_theory_csv, GaussianSourceSpec};
use fgvc::bitstream::{read_container, write_container, BitstreamHeader, PriorRef};
use fgvc::config::{Settings, SEED_ENV};
use fgvc::io::{read_video, write_atomic, write_video, IoError};
use fgvc::metrics::{
    bd_metric, bd_rate, ms_ssim_video, psnr, read_curve_csv, write_curve_csv, MetricsError, RateQualityCurve,
};
use fgvc::pipeline::{decode_video, encode_video, DecodeOptions, PriorSource, TStarPolicy, VideoTensor};
use fgvc::prior::read_profile;
use fgvc::{Error, EXIT_CODES};

#[derive(Parser)]
#[command(name = "fgvc", version, about = "Progressive diffusion-trajectory video codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CodecArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Fixed stopping step for every GOP.
    #[arg(long)]
    t_star: Option<usize>,
    /// Target MS-SSIM for adaptive step selection.
    #[arg(long)]
    target_quality: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a .y4m or .raw clip into a bitstream.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Decode a bitstream; the output format follows the extension.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// Skip latent fusion across GOP overlaps.
        #[arg(long)]
        no_fusion: bool,
        /// Variance-profile sidecar referenced by the bitstream.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Print a bitstream header.
    Probe { input: PathBuf },
    /// Sweep operating points over every clip in a directory.
    Bench {
        corpus: PathBuf,
        /// Comma-separated fixed steps.
        #[arg(long, value_delimiter = ',', conflicts_with = "qualities")]
        t_stars: Vec<usize>,
        /// Comma-separated quality targets.
        #[arg(long, value_delimiter = ',')]
        qualities: Vec<f64>,
        /// Per-sequence and aggregate rows.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
        /// Aggregate `bpp,metric` curve.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Anchor curve for BD-rate against this run.
        #[arg(long)]
        against: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Encode with quality control and print each refinement step.
    QctrlTrace {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Analytic and measured prior gaps for AR(1) Gaussian sources.
    Theory {
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.9")]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        rho_space: f64,
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        size: usize,
        /// Coded trials per source for the measured column; 0 skips it.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value = "theory.csv")]
        out: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// BD-rate and BD-metric of `test` against `anchor` curve files.
    Bdrate {
        anchor: PathBuf,
        test: PathBuf,
        #[arg(long, default_value = "ms_ssim")]
        metric: String,
    },
}

fn exit_code_help() -> String {
    let mut s = String::from("Exit codes:\n  0  success\n");
    for (code, meaning) in EXIT_CODES {
        let _ = writeln!(s, "  {code:<2} {meaning}");
    }
    let _ = write!(s, "\nEnvironment:\n  {SEED_ENV}  overrides base_seed (flags still win)");
    s
}

fn settings(codec: &CodecArgs) -> Result<Settings, Error> {
    let file = codec
        .config
        .as_ref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| IoError::os(p, e)))
        .transpose()?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut flags = Vec::new();
    for kv in &codec.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        flags.push((k.trim(), v.trim().to_string()));
    }
    if let Some(t) = codec.t_star {
        flags.push(("t_star", t.to_string()));
    }
    if let Some(q) = codec.target_quality {
        flags.push(("target_quality", q.to_string()));
    }
    let mut s = Settings::resolve(file.as_deref(), env_seed.as_deref(), &flags)?;
    if let Some(path) = &s.profile {
        s.params.prior.source = PriorSource::Profile(Arc::new(load_profile(path)?));
    }
    Ok(s)
}

fn load_profile(path: &Path) -> Result<Vec<f64>, Error> {
    let bytes = std::fs::read(path).map_err(|e| IoError::os(path, e))?;
    read_profile(bytes.as_slice()).map_err(|e| IoError::BadSidecar(e.to_string()).into())
}

fn policy(s: &Settings) -> Result<TStarPolicy, Error> {
    match (s.t_star, s.target_quality) {
        (_, Some(target)) => Ok(TStarPolicy::Target {
            config: fgvc::qctrl::ControlConfig { target, ..s.control },
            reuse_history: s.reuse_history,
        }),
        (Some(t), None) => Ok(TStarPolicy::Fixed(t)),
        (None, None) => Err(Error::Usage("need --t-star or --target-quality".into())),
    }
}

fn encode(input: &Path, output: &Path, codec: &CodecArgs) -> Result<(), Error> {
    let s = settings(codec)?;
    let policy = policy(&s)?;
    let video = read_video(input)?;
    let (encoded, reports) = encode_video(&video, &s.params, &policy)?;
    let bytes = write_container(&encoded)?;
    write_atomic(output, &bytes)?;
    println!("gop,t_star,bits,bpp,quality");
    for r in &reports {
        let q = r.quality.map_or("-".to_string(), |q| format!("{q:.5}"));
        println!("{},{},{},{:.6},{}", r.gop.index, r.t_star, r.payload_bits, r.bpp, q);
    }
    println!(
        "# {} bytes, {:.6} bpp",
        bytes.len(),
        bytes.len() as f64 * 8.0 / video.pixels() as f64
    );
    Ok(())
}

fn decode(input: &Path, output: &Path, no_fusion: bool, profile: Option<&Path>) -> Result<(), Error> {
    let bytes = std::fs::read(input).map_err(|e| IoError::os(input, e))?;
    let sidecar = profile.map(load_profile).transpose()?.map(Arc::new);
    let encoded = read_container(&bytes, sidecar)?;
    let options = DecodeOptions {
        fusion: !no_fusion,
        ..Default::default()
    };
    let video = decode_video(&encoded, options)?;
    write_video(output, &video)?;
    Ok(())
}

fn probe(input: &Path) -> Result<(), Error> {
    let bytes = std::fs::read(input).map_err(|e| IoError::os(input, e))?;
    let (h, offset) = BitstreamHeader::parse(&bytes)?;
    println!("version       {}", h.version);
    println!(
        "video         {} frames {}x{} {:?} @ {}/{}",
        h.frames, h.width, h.height, h.colorspace, h.fps.num, h.fps.den
    );
    println!(
        "gop           l={} m={} s={} d={}",
        h.gop_len, h.overlap, h.temporal, h.spatial
    );
    println!("schedule      T={} beta {}..{}", h.steps, h.beta_start, h.beta_end);
    println!("chunks        {} coeffs, kl_cap {}", h.coeffs_per_chunk, h.kl_cap);
    println!("fusion        {:?}", h.gamma);
    match h.prior {
        PriorRef::PowerLaw(p) => println!(
            "prior         {:?} power law {:?}, eps_var {}",
            h.prior_kind, p, h.eps_var
        ),
        PriorRef::Sidecar(d) => {
            let hex: String = d.iter().map(|b| format!("{b:02x}")).collect();
            println!("prior         {:?} sidecar sha256 {hex}", h.prior_kind);
        }
    }
    println!("base_seed     {}", h.base_seed);
    println!("payload at    {offset}");
    println!("gop,t_star,coded_frames,payload_bytes");
    for (i, g) in h.gops.iter().enumerate() {
        println!("{i},{},{},{}", g.t_star, g.coded_frames, g.payload_len);
    }
    Ok(())
}

fn is_clip(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("y4m" | "raw" | "yuv")
    )
}

struct BenchRow {
    sequence: String,
    point: String,
    bpp: f64,
    ms_ssim: f64,
    psnr: f64,
}

fn bench_point(video: &VideoTensor, s: &Settings, policy: &TStarPolicy) -> Result<(f64, f64, f64), Error> {
    let (encoded, _) = encode_video(video, &s.params, policy)?;
    let bits = write_container(&encoded)?.len() as f64 * 8.0;
    let decoded = decode_video(&encoded, DecodeOptions::default())?;
    Ok((
        bits / video.pixels() as f64,
        ms_ssim_video(video, &decoded)?,
        psnr(video, &decoded)?,
    ))
}

fn svg_plot(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let pts = curves.iter().flat_map(|c| c.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\">bpp ({x0:.4} to {x1:.4})</text>\n\
         <text x=\"12\" y=\"{cy}\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">MS-SSIM ({y0:.4} to {y1:.4})</text>\n",
        b = h - pad,
        r = w - pad,
        cx = w / 2.0,
        ty = h - 15.0,
        cy = h / 2.0,
    );
    let colors = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    ];
    for (i, (name, points)) in curves.iter().enumerate() {
        let color = if name == "aggregate" {
            "black"
        } else {
            colors[i % colors.len()]
        };
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        for &(x, y) in points {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
            w - pad - 120.0,
            pad + 14.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

#[allow(clippy::too_many_arguments)]
fn bench(
    corpus: &Path,
    t_stars: &[usize],
    qualities: &[f64],
    out: &Path,
    curve: Option<&Path>,
    svg: Option<&Path>,
    against: Option<&Path>,
    codec: &CodecArgs,
) -> Result<(), Error> {
    let s = settings(codec)?;
    let mut clips: Vec<PathBuf> = std::fs::read_dir(corpus)
        .map_err(|e| IoError::os(corpus, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_clip(p))
        .collect();
    clips.sort();
    if clips.is_empty() {
        return Err(Error::EmptyCorpus(corpus.to_path_buf()));
    }
    let points: Vec<(String, TStarPolicy)> = if !t_stars.is_empty() {
        t_stars
            .iter()
            .map(|&t| (format!("t{t}"), TStarPolicy::Fixed(t)))
            .collect()
    } else if !qualities.is_empty() {
        qualities
            .iter()
            .map(|&q| {
                let config = fgvc::qctrl::ControlConfig { target: q, ..s.control };
                (
                    format!("q{q}"),
                    TStarPolicy::Target {
                        config,
                        reuse_history: s.reuse_history,
                    },
                )
            })
            .collect()
    } else {
        return Err(Error::Usage("bench needs --t-stars or --qualities".into()));
    };

    let mut rows = Vec::new();
    for clip in &clips {
        let video = read_video(clip)?;
        let name = clip
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        for (label, policy) in &points {
            log::info!("{name} {label}");
            let (bpp, q, p) = bench_point(&video, &s, policy)?;
            rows.push(BenchRow {
                sequence: name.clone(),
                point: label.clone(),
                bpp,
                ms_ssim: q,
                psnr: p,
            });
        }
    }
    let n = clips.len() as f64;
    for (i, (label, _)) in points.iter().enumerate() {
        let at: Vec<&BenchRow> = rows.iter().skip(i).step_by(points.len()).take(clips.len()).collect();
        rows.push(BenchRow {
            sequence: "aggregate".into(),
            point: label.clone(),
            bpp: at.iter().map(|r| r.bpp).sum::<f64>() / n,
            ms_ssim: at.iter().map(|r| r.ms_ssim).sum::<f64>() / n,
            psnr: at.iter().map(|r| r.psnr).sum::<f64>() / n,
        });
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let table = (|| -> Result<Vec<u8>, csv::Error> {
        w.write_record(["sequence", "point", "bpp", "ms_ssim", "psnr"])?;
        for r in &rows {
            w.write_record([
                r.sequence.clone(),
                r.point.clone(),
                format!("{:.6}", r.bpp),
                format!("{:.6}", r.ms_ssim),
                format!("{:.4}", r.psnr),
            ])?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    })()
    .map_err(MetricsError::from)?;
    write_atomic(out, &table)?;

    let aggregate = RateQualityCurve::new(
        "ms_ssim",
        rows.iter()
            .filter(|r| r.sequence == "aggregate")
            .map(|r| (r.bpp, r.ms_ssim))
            .collect(),
    );
    print!("{}", String::from_utf8_lossy(&table));
    if let Some(path) = curve {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, Some(&aggregate))?;
        write_atomic(path, &buf)?;
    }
    if let Some(path) = svg {
        let mut names: Vec<String> = Vec::new();
        for r in &rows {
            if !names.contains(&r.sequence) {
                names.push(r.sequence.clone());
            }
        }
        let curves: Vec<(String, Vec<(f64, f64)>)> = names
            .into_iter()
            .map(|name| {
                let mut pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.sequence == name)
                    .map(|r| (r.bpp, r.ms_ssim))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                (name, pts)
            })
            .collect();
        write_atomic(path, svg_plot(&curves).as_bytes())?;
    }
    if let Some(path) = against {
        let anchor = read_curve(path, "ms_ssim")?;
        let bd = match anchor {
            Some(a) => bd_rate(&a, &aggregate)?.to_string(),
            None => "N/A".into(),
        };
        println!("bd_rate_percent,{bd}");
    }
    Ok(())
}

fn read_curve(path: &Path, metric: &str) -> Result<Option<RateQualityCurve>, Error> {
    let bytes = std::fs::read(path).map_err(|e| IoError::os(path, e))?;
    Ok(read_curve_csv(bytes.as_slice(), metric)?)
}

fn qctrl_trace(input: &Path, out: Option<&Path>, codec: &CodecArgs) -> Result<(), Error> {
    let s = settings(codec)?;
    let target = s
        .target_quality
        .ok_or_else(|| Error::Usage("qctrl-trace needs --target-quality".into()))?;
    let video = read_video(input)?;
    let policy = TStarPolicy::Target {
        config: fgvc::qctrl::ControlConfig { target, ..s.control },
        reuse_history: s.reuse_history,
    };
    let (_, reports) = encode_video(&video, &s.params, &policy)?;
    let mut text = String::from("gop,iteration,t,bpp,quality,alpha,beta\n");
    let mut summary = String::from("gop,t_star,quality,decodes,converged\n");
    for r in &reports {
        let Some(c) = &r.control else { continue };
        for e in &c.trace {
            let _ = writeln!(
                text,
                "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.gop.index, e.iteration, e.t, e.r, e.p, e.alpha, e.beta
            );
        }
        let _ = writeln!(
            summary,
            "{},{},{:.6},{},{}",
            r.gop.index, c.t_star, c.quality, c.decodes, c.converged
        );
    }
    print!("{text}\n{summary}");
    if let Some(path) = out {
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn theory(
    rhos: &[f64],
    rho_space: f64,
    frames: usize,
    size: usize,
    trials: usize,
    out: &Path,
    codec: &CodecArgs,
) -> Result<(), Error> {
    let s = settings(codec)?;
    let t_star = s.t_star.unwrap_or(1);
    let sched = s.params.schedule()?;
    let mut rows = Vec::new();
    for &rho in rhos {
        let spec = GaussianSourceSpec::ar1(frames, size, size, rho, rho_space)?;
        rows.extend(theory_rows(
            &spec,
            rho,
            &sched,
            t_star,
            trials,
            s.params.chunk_rule,
            s.params.base_seed,
        )?);
    }
    let mut buf = Vec::new();
    write_theory_csv(&mut buf, &rows).map_err(MetricsError::from)?;
    write_atomic(out, &buf)?;
    println!("rho,accumulated_gap_bits,mean_measured_diff_bits");
    for &rho in rhos {
        let (gap, measured) = rows
            .iter()
            .filter(|r| r.rho == rho)
            .fold((0.0, None::<f64>), |(g, m), r| {
                (g + r.gap, r.measured_diff.map(|d| m.unwrap_or(0.0) + d))
            });
        let measured = measured.map_or("N/A".to_string(), |m| format!("{m:.3}"));
        println!("{rho},{gap:.6},{measured}");
    }
    Ok(())
}

fn bdrate_cmd(anchor: &Path, test: &Path, metric: &str) -> Result<(), Error> {
    let (a, t) = (read_curve(anchor, metric)?, read_curve(test, metric)?);
    let (rate, delta) = match (a, t) {
        (Some(a), Some(t)) => (bd_rate(&a, &t)?.to_string(), bd_metric(&a, &t)?.to_string()),
        _ => ("N/A".into(), "N/A".into()),
    };
    println!("bd_rate_percent,{rate}");
    println!("bd_{metric},{delta}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Encode { input, output, codec } => encode(&input, &output, &codec),
        Command::Decode {
            input,
            output,
            no_fusion,
            profile,
        } => decode(&input, &output, no_fusion, profile.as_deref()),
        Command::Probe { input } => probe(&input),
        Command::Bench {
            corpus,
            t_stars,
            qualities,
            out,
            curve,
            svg,
            against,
            codec,
        } => bench(
            &corpus,
            &t_stars,
            &qualities,
            &out,
            curve.as_deref(),
            svg.as_deref(),
            against.as_deref(),
            &codec,
        ),
        Command::QctrlTrace { input, out, codec } => qctrl_trace(&input, out.as_deref(), &codec),
        Command::Theory {
            rho,
            rho_space,
            frames,
            size,
            trials,
            out,
            codec,
        } => theory(&rho, rho_space, frames, size, trials, &out, &codec),
        Command::Bdrate { anchor, test, metric } => bdrate_cmd(&anchor, &test, &metric),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().after_help(exit_code_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
