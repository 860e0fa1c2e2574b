//! `d2net` command-line driver.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad user input, 3 a bad
//! artifact (checkpoint or format error). Every run starts by printing the
//! resolved configuration as `# key = value` lines.

use clap::{Args, Parser, Subcommand};
use d2net::config::{parse_entries, Entry, Preset, RunConfig};
use d2net::eval::{memory_scaling_report, psnr, ssim, Psnr};
use d2net::gradcheck::{run_scope, CheckOptions, CheckRow, Scope};
use d2net::io::{read_ppm, write_ppm, Rgb8};
use d2net::memory::MemoryLedger;
use d2net::network::{checkpoint, count_params, D2Net};
use d2net::training::{load_corpus, synthetic_corpus, synthetic_image, train_toy, Task};
use d2net::{Error, Precision, Scalar, Tensor};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Keeps the default synthetic evaluation images distinct from any corpus
/// generated with the run seed.
const HELD_OUT_SALT: u64 = 0x00c0_ffee_4e1d;

#[derive(Parser)]
#[command(name = "d2net", version, about = "Frequency-domain attention image restoration")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["single", "double"])]
    precision: Option<String>,
    /// Base network: `paper` (full size) or `toy`.
    #[arg(long, global = true, value_parser = ["paper", "toy"])]
    preset: Option<String>,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Restore a P6 image at full resolution with a trained checkpoint.
    Restore {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a network on synthetically degraded crops.
    TrainToy {
        #[arg(long)]
        task: Task,
        /// Directory of clean P6 training images.
        #[arg(long)]
        data: PathBuf,
        /// Directory of clean P6 evaluation images. Defaults to four
        /// synthetic images that are never used for training.
        #[arg(long)]
        held_out: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV; defaults to the checkpoint path with `.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Finite-difference gradient certification.
    Gradcheck {
        #[arg(long, default_value = "ops")]
        scope: Scope,
        /// Scale every analytic gradient by 1.001 to show the suite fails.
        #[arg(long)]
        corrupt_backward: bool,
    },
    /// Peak activation memory of the frequency-domain block versus naive
    /// spatial attention.
    BenchAttn {
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        naive_sizes: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        channels: usize,
    },
    /// PSNR and SSIM between two P6 images.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Quick internal consistency checks.
    Selftest,
    /// Write synthetic clean P6 images for training.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Restore { .. } => "restore",
            Command::TrainToy { .. } => "train-toy",
            Command::Gradcheck { .. } => "gradcheck",
            Command::BenchAttn { .. } => "bench-attn",
            Command::Metrics { .. } => "metrics",
            Command::Selftest => "selftest",
            Command::SynthCorpus { .. } => "synth-corpus",
        }
    }

    fn default_preset(&self) -> Preset {
        match self {
            Command::TrainToy { .. } => Preset::Toy,
            _ => Preset::Paper,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Check(String),
    Input(String),
    Artifact(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Input(_) => 2,
            Failure::Artifact(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Input(m) | Failure::Artifact(m) => m,
        }
    }
}

fn input(context: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{context}: {e}"))
}

fn resolve(global: &Global, command: &Command) -> Result<RunConfig, Failure> {
    let mut layers = Vec::new();
    if let Some(path) = &global.config {
        let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        layers.push(parse_entries(&text, &path.display().to_string()).map_err(input("config"))?);
    }
    let mut flags = Vec::new();
    for (i, s) in global.sets.iter().enumerate() {
        let Some((k, v)) = s.split_once('=') else {
            return Err(Failure::Input(format!("--set expects KEY=VALUE, got `{s}`")));
        };
        flags.push(Entry {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            origin: format!("--set #{}", i + 1),
        });
    }
    let named = [
        ("preset", global.preset.clone()),
        ("seed", global.seed.map(|s| s.to_string())),
        ("precision", global.precision.clone()),
    ];
    for (key, value) in named {
        if let Some(value) = value {
            flags.push(Entry {
                key: key.to_string(),
                value,
                origin: format!("--{key}"),
            });
        }
    }
    if let Command::TrainToy { iters: Some(n), .. } = command {
        flags.push(Entry {
            key: "iters".into(),
            value: n.to_string(),
            origin: "--iters".into(),
        });
    }
    layers.push(flags);
    RunConfig::resolve(command.default_preset(), &layers).map_err(|e| Failure::Input(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli.global, &cli.command) {
        Ok(cfg) => cfg,
        Err(f) => {
            eprintln!("error: {}", f.message());
            return ExitCode::from(f.code());
        }
    };
    println!("# d2net {} {}", cli.command.name(), env!("CARGO_PKG_VERSION"));
    print!("{}", cfg.banner());
    let result = match cfg.precision {
        Precision::Single => run::<f32>(&cli.command, &cfg),
        Precision::Double => run::<f64>(&cli.command, &cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run<T: Scalar>(command: &Command, cfg: &RunConfig) -> Result<(), Failure> {
    match command {
        Command::Restore {
            input: inp,
            checkpoint: ckpt,
            output,
        } => restore::<T>(cfg, inp, ckpt, output),
        Command::TrainToy {
            task,
            data,
            held_out,
            out,
            trace,
            ..
        } => train::<T>(cfg, *task, data, held_out.as_deref(), out, trace.as_deref()),
        Command::Gradcheck {
            scope,
            corrupt_backward,
        } => gradcheck(cfg, *scope, *corrupt_backward),
        Command::BenchAttn {
            sizes,
            naive_sizes,
            channels,
        } => bench_attn(cfg, sizes, naive_sizes, *channels),
        Command::Metrics { reference, test } => metrics(reference, test),
        Command::Selftest => selftest(cfg),
        Command::SynthCorpus { out, count, size } => synth_corpus(cfg, out, *count, *size),
    }
}

fn read_image(path: &Path) -> Result<Rgb8, Failure> {
    read_ppm(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_image(path: &Path, img: &Rgb8) -> Result<(), Failure> {
    write_ppm(path, img).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn restore<T: Scalar>(cfg: &RunConfig, inp: &Path, ckpt: &Path, output: &Path) -> Result<(), Failure> {
    let image = read_image(inp)?;
    let (net, template) = D2Net::build::<T>(&cfg.network, cfg.seed).map_err(input("network"))?;
    let bytes = fs::read(ckpt).map_err(|e| Failure::Artifact(format!("{}: {e}", ckpt.display())))?;
    let params = checkpoint::load(&bytes, &template)
        .map_err(|e| Failure::Artifact(format!("{}: {e}", ckpt.display())))?;
    let x: Tensor<T> = image.to_tensor();
    let (restored, report) = MemoryLedger::measure("restore", || net.forward_full_resolution(&params, &x));
    let restored = restored.map_err(input("restore"))?;
    let out = Rgb8::from_tensor(&restored).map_err(|e| Failure::Artifact(format!("output: {e}")))?;
    write_image(output, &out)?;
    println!("image={}x{}", image.width, image.height);
    println!("peak_activation_floats={}", report.peak_floats);
    println!("output={}", output.display());
    Ok(())
}

fn load_images<T: Scalar>(dir: &Path) -> Result<Vec<Tensor<T>>, Failure> {
    load_corpus(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))
}

fn train<T: Scalar>(
    cfg: &RunConfig,
    task: Task,
    data: &Path,
    held_out: Option<&Path>,
    out: &Path,
    trace: Option<&Path>,
) -> Result<(), Failure> {
    let train_set = load_images::<T>(data)?;
    let held = match held_out {
        Some(dir) => load_images::<T>(dir)?,
        None => synthetic_corpus(4, 96, 96, cfg.seed ^ HELD_OUT_SALT),
    };
    let tc = cfg.train_config(task.default_spec());
    if let Some(t) = train_set.iter().find(|t| t.shape().h < tc.crop || t.shape().w < tc.crop) {
        return Err(Failure::Input(format!(
            "{}: training image {}x{} is smaller than the {}x{} crop",
            data.display(),
            t.shape().w,
            t.shape().h,
            tc.crop,
            tc.crop
        )));
    }
    let (net, params) = D2Net::build::<T>(&cfg.network, cfg.seed).map_err(input("network"))?;
    println!("params={}", count_params(&params));
    let outcome = train_toy(&net, params, &tc, &train_set, &held, |r| {
        if let Some((p, s)) = r.eval {
            println!("# step {} loss {:.6} eval_psnr {p:.4} eval_ssim {s:.6}", r.step, r.loss);
        }
    })
    .map_err(|e| match e {
        Error::InsufficientData { .. } => input("train-toy")(e),
        other => Failure::Check(format!("train-toy: {other}")),
    })?;
    let mut file = fs::File::create(out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    checkpoint::save(&outcome.params, &mut file).map_err(|e| Failure::Artifact(format!("checkpoint: {e}")))?;
    let trace_path = trace.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("csv"));
    fs::write(&trace_path, outcome.trace_csv()).map_err(|e| Failure::Input(format!("{}: {e}", trace_path.display())))?;
    let e = outcome.eval;
    println!("degraded_psnr={:.4}", e.degraded_psnr);
    println!("restored_psnr={:.4}", e.restored_psnr);
    println!("gain_db={:.4}", e.gain_db());
    println!("degraded_ssim={:.6}", e.degraded_ssim);
    println!("restored_ssim={:.6}", e.restored_ssim);
    println!("checkpoint={}", out.display());
    println!("trace={}", trace_path.display());
    Ok(())
}

fn report_checks(rows: &[CheckRow]) -> Result<(), Failure> {
    println!("{}", CheckRow::CSV_HEADER);
    for r in rows {
        println!("{}", r.csv());
    }
    let failed: Vec<_> = rows.iter().filter(|r| !r.passed()).collect();
    match failed.iter().max_by(|a, b| (a.max_rel / a.tol).total_cmp(&(b.max_rel / b.tol))) {
        None => Ok(()),
        Some(worst) => Err(Failure::Check(format!(
            "{} of {} checks failed; worst `{}` at coordinate {} (relative error {:.3e} > {:.0e})",
            failed.len(),
            rows.len(),
            worst.name,
            worst.worst,
            worst.max_rel,
            worst.tol
        ))),
    }
}

fn gradcheck(cfg: &RunConfig, scope: Scope, corrupt: bool) -> Result<(), Failure> {
    let opts = CheckOptions {
        seed: cfg.seed,
        corrupt,
        ..CheckOptions::default()
    };
    let rows = run_scope(scope, &opts).map_err(|e| Failure::Check(format!("gradcheck: {e}")))?;
    report_checks(&rows)
}

fn bench_attn(cfg: &RunConfig, sizes: &[usize], naive_sizes: &[usize], channels: usize) -> Result<(), Failure> {
    let square = |v: &[usize]| v.iter().map(|&s| (s, s)).collect::<Vec<_>>();
    let report =
        memory_scaling_report(&square(sizes), &square(naive_sizes), channels, cfg.seed).map_err(input("bench-attn"))?;
    print!("{}", report.to_csv());
    for line in report.summary().lines() {
        println!("# {line}");
    }
    Ok(())
}

fn metrics(reference: &Path, test: &Path) -> Result<(), Failure> {
    let a: Tensor<f64> = read_image(reference)?.to_tensor();
    let b: Tensor<f64> = read_image(test)?.to_tensor();
    let p = psnr(&a, &b, 1.0).map_err(input("metrics"))?;
    let s = ssim(&a, &b).map_err(input("metrics"))?;
    match p {
        Psnr::Identical => println!("psnr=identical"),
        Psnr::Db(v) => println!("psnr={v:.12}"),
    }
    println!("ssim={s:.12}");
    Ok(())
}

fn selftest(cfg: &RunConfig) -> Result<(), Failure> {
    use d2net::spectral::{dft2, dft2_naive, idft2, Grid};
    let mut results: Vec<(&str, bool)> = Vec::new();

    let tile = synthetic_image::<f64>(8, 8, cfg.seed);
    let g = Grid::new(8, 8, tile.plane(0, 0).to_vec());
    let (fast, naive) = (dft2(&g), dft2_naive(&g));
    let dft_err = fast
        .re
        .iter()
        .zip(&naive.re)
        .chain(fast.im.iter().zip(&naive.im))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let round = idft2(&fast).map(|r| r.data.iter().zip(&g.data).all(|(a, b)| (a - b).abs() < 1e-12));
    results.push(("dft_matches_reference", dft_err < 1e-12));
    results.push(("dft_round_trip", round.unwrap_or(false)));

    let toy = d2net::network::NetworkConfig::toy(4);
    let identity = D2Net::build::<f64>(&toy, cfg.seed).and_then(|(net, mut p)| {
        net.zero_tail(&mut p);
        let x = synthetic_image::<f64>(37, 45, cfg.seed);
        Ok(net.forward_full_resolution(&p, &x)?.data() == x.data())
    });
    results.push(("zero_tail_is_identity", identity.unwrap_or(false)));

    let ckpt = D2Net::build::<f32>(&toy, cfg.seed).and_then(|(_, p)| {
        let bytes = checkpoint::encode(&p);
        let back = checkpoint::load(&bytes, &p)?;
        Ok(checkpoint::encode(&back) == bytes && checkpoint::load(&bytes[..bytes.len() - 1], &p).is_err())
    });
    results.push(("checkpoint_round_trip", ckpt.unwrap_or(false)));

    let img = Rgb8::from_tensor(&synthetic_image::<f32>(5, 7, cfg.seed)).map_err(|e| Failure::Artifact(format!("selftest: {e}")))?;
    let ppm = d2net::io::encode_ppm(&img);
    results.push((
        "ppm_round_trip",
        d2net::io::decode_ppm(&ppm).is_ok_and(|back| back == img),
    ));

    let ops = run_scope(Scope::Ops, &CheckOptions::default()).map(|rows| rows.iter().all(CheckRow::passed));
    results.push(("op_gradients", ops.unwrap_or(false)));

    println!("check,verdict");
    for (name, ok) in &results {
        println!("{name},{}", if *ok { "pass" } else { "FAIL" });
    }
    let failed: Vec<_> = results.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("selftest failed: {}", failed.join(", "))))
    }
}

fn synth_corpus(cfg: &RunConfig, out: &Path, count: usize, size: usize) -> Result<(), Failure> {
    if count == 0 || size == 0 {
        return Err(Failure::Input("count and size must be positive".into()));
    }
    fs::create_dir_all(out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    for (i, t) in synthetic_corpus::<f64>(count, size, size, cfg.seed).iter().enumerate() {
        let img = Rgb8::from_tensor(t).map_err(|e| Failure::Artifact(format!("synth-corpus: {e}")))?;
        write_image(&out.join(format!("synth_{i:04}.ppm")), &img)?;
    }
    println!("images={count}");
    println!("dir={}", out.display());
    Ok(())
}
