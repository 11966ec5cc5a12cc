use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nexsplat::optimizer::TrainConfig;
use nexsplat::transmittance::TransmittanceModel;
use nexsplat::{Rgb, DEFAULT_ALPHA_CUTOFF, DEFAULT_MAX_SPLATS};
use nexsplat_cli::commands::{self, GatherOpts};
use nexsplat_cli::output::{create_dir, pretty, write_text};
use nexsplat_cli::scenes::BlendVariant;
use nexsplat_cli::{default_study_models, parse_model, read_json, CliError, CliResult};

#[derive(Parser)]
#[command(name = "nexsplat", version, about = "Gaussian splatting with generalized transmittance")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model spec, e.g. `linear`, `quadratic:c=0.5`. Repeatable where a
    /// command accepts several models.
    #[arg(long = "model")]
    models: Vec<String>,
    /// Model parameter `k=v`, applied to every `--model`.
    #[arg(long = "param")]
    params: Vec<String>,
}

impl ModelArgs {
    fn resolve(&self) -> CliResult<Vec<TransmittanceModel>> {
        self.models.iter().map(|m| parse_model(m, &self.params)).collect()
    }

    fn one(&self) -> CliResult<TransmittanceModel> {
        match self.resolve()?.as_slice() {
            [m] => Ok(*m),
            [] => Err(CliError::Usage("--model is required".into())),
            _ => Err(CliError::Usage("exactly one --model expected".into())),
        }
    }

    fn many_or_default(&self) -> CliResult<Vec<TransmittanceModel>> {
        let m = self.resolve()?;
        Ok(if m.is_empty() { default_study_models() } else { m })
    }
}

#[derive(Args, Clone, Copy)]
struct GatherArgs {
    #[arg(long, default_value_t = DEFAULT_MAX_SPLATS)]
    max_splats: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA_CUTOFF)]
    alpha_cutoff: f64,
}

impl From<GatherArgs> for GatherOpts {
    fn from(a: GatherArgs) -> Self {
        GatherOpts {
            max_splats: a.max_splats,
            alpha_cutoff: a.alpha_cutoff,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// 100 low-opacity splats: coverage, overdraw and central-ray tables.
    TransmitStudy {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[command(flatten)]
        gather: GatherArgs,
    },
    /// Three opaque red/green/blue splats.
    BlendStudy {
        #[arg(long, value_enum, default_value_t = BlendVariant::Concentric)]
        variant: BlendVariant,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 192)]
        height: usize,
        #[command(flatten)]
        gather: GatherArgs,
    },
    /// Render a scene file through a camera file.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Background radiance `r,g,b`.
        #[arg(long, default_value = "0,0,0")]
        background: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gather: GatherArgs,
    },
    /// Compare analytic adjoints with finite differences on random rays.
    Gradcheck {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        rays: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a scene to target views.
    Fit {
        #[arg(long)]
        init: PathBuf,
        /// JSON array of `{camera, image}`.
        #[arg(long)]
        views: PathBuf,
        /// Training configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        time_budget: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Russian-roulette estimates against the deterministic compositor.
    StochasticCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        println!("seed: {s}");
        s
    })
}

fn parse_rgb(s: &str) -> CliResult<Rgb> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("background `{s}` is not r,g,b")))?;
    match parts.as_slice() {
        [r, g, b] => Ok(Rgb::new(*r, *g, *b)),
        _ => Err(CliError::Usage(format!("background `{s}` is not r,g,b"))),
    }
}

fn write_report<T: serde::Serialize>(out: &Option<PathBuf>, name: &str, report: &T) -> CliResult<()> {
    if let Some(dir) = out {
        create_dir(dir)?;
        let v = serde_json::to_value(report).expect("reports serialize");
        write_text(&dir.join(name), &pretty(&v))?;
    }
    Ok(())
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::TransmitStudy {
            model,
            seed,
            out,
            size,
            gather,
        } => {
            let studies = commands::transmit_study(&commands::TransmitArgs {
                seed: seed_or_entropy(seed),
                models: model.many_or_default()?,
                out: Some(out),
                size,
                gather: gather.into(),
            })?;
            for s in studies {
                println!(
                    "{:<28} total overdraw {:>9}  center {:>3}  coverage {:.4}",
                    s.model.tag(),
                    s.total_overdraw,
                    s.center.len(),
                    s.mean_coverage
                );
            }
        }
        Command::BlendStudy {
            variant,
            model,
            out,
            width,
            height,
            gather,
        } => {
            let results = commands::blend_study(&commands::BlendArgs {
                variant,
                models: model.many_or_default()?,
                out: Some(out),
                width,
                height,
                gather: gather.into(),
            })?;
            for r in results {
                println!(
                    "{:<28} center rgb {:.4} {:.4} {:.4}",
                    r.model.tag(),
                    r.center.x,
                    r.center.y,
                    r.center.z
                );
            }
        }
        Command::Render {
            scene,
            camera,
            model,
            background,
            out,
            gather,
        } => {
            let r = commands::render_files(&commands::RenderArgs {
                scene,
                camera,
                model: model.one()?,
                background: parse_rgb(&background)?,
                out,
                gather: gather.into(),
            })?;
            println!(
                "rendered {}x{}, total overdraw {}",
                r.rgb.width,
                r.rgb.height,
                r.overdraw.total()
            );
        }
        Command::Gradcheck {
            model,
            seed,
            rays,
            eps,
            out,
        } => {
            let report = commands::gradcheck(&commands::GradcheckArgs {
                model: model.one()?,
                seed: seed_or_entropy(seed),
                rays,
                eps,
            })?;
            println!(
                "{} ({:?}): {} rays checked, {} excluded at saturation, {} singular; max relative error {:.3e}",
                report.model.tag(),
                report.mode,
                report.rays_checked,
                report.excluded_saturation,
                report.excluded_singular,
                report.max_relative_error
            );
            if let Some(d) = report.linear_agreement {
                println!("linear adjoint agreement: {d:.3e}");
            }
            write_report(&out, "gradcheck.json", &report)?;
            if !report.passed {
                return Err(CliError::Check(format!(
                    "max relative error {:.3e} above {:.0e}",
                    report.max_relative_error,
                    commands::GRADCHECK_TOLERANCE
                )));
            }
        }
        Command::Fit {
            init,
            views,
            config,
            model,
            max_iterations,
            time_budget,
            out,
        } => {
            let mut cfg: TrainConfig = match &config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            if !model.models.is_empty() {
                cfg.model = model.one()?;
            }
            if let Some(n) = max_iterations {
                cfg.max_iterations = n;
            }
            if time_budget.is_some() {
                cfg.time_budget_s = time_budget;
            }
            let fit = commands::fit(&commands::FitArgs {
                init,
                views,
                config: cfg,
                out,
            })?;
            for (i, m) in fit.report.final_metrics.iter().enumerate() {
                println!("view {i}: psnr {:.2} dB  ssim {:.4}", m.psnr, m.ssim);
            }
            println!(
                "{} iterations, {} primitives",
                fit.report.iterations(),
                fit.scene.len()
            );
        }
        Command::StochasticCheck {
            model,
            seed,
            trials,
            out,
        } => {
            let report = commands::stochastic_check(&commands::StochasticArgs {
                models: model.many_or_default()?,
                seed: seed_or_entropy(seed),
                trials,
            })?;
            for c in &report.checks {
                println!(
                    "{:<28} {:<10} z = {:>6.2} {:>6.2} {:>6.2}  se = {:.2e} {:.2e} {:.2e}",
                    c.model.tag(),
                    c.ray,
                    c.z[0],
                    c.z[1],
                    c.z[2],
                    c.std_err[0],
                    c.std_err[1],
                    c.std_err[2]
                );
            }
            write_report(&out, "stochastic.json", &report)?;
            if report.passed() == Some(false) {
                return Err(CliError::Check(format!(
                    "max |z| {:.2} above {}",
                    report.max_abs_z(),
                    commands::Z_LIMIT
                )));
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    let pool = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run_args(std::env::args_os()))
}
