//! Command-line front end. `run` returns the process exit code:
//! 0 ok, 2 usage, 3 parse/validation, 4 numerical, 5 I/O.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{self, TrendConfig};
use crate::error::{Error, Result};
use crate::graph::{self, GaugeConfig, Key, SolverConfig};
use crate::io::{self, export, ScenarioSpec};
use crate::marginals::Marginals;

#[derive(Parser, Debug)]
#[command(name = "vocovar", version, about = "Pose covariance recovery for dense bundle-adjustment visual odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a dataset file.
    Validate { dataset: PathBuf },
    /// Optimize the graph and write the poses as CSV.
    Solve {
        dataset: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Optimize and write every keyframe's marginal covariance as CSV.
    Marginals {
        dataset: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Per-keyframe D-opt trend over growing keyframe windows.
    Trend {
        dataset: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
        /// SVG plot of the trend and the co-visibility matrix.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Write the co-visibility adjacency matrix as CSV.
    Covis {
        dataset: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a TOML scenario spec.
    Simulate {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SolveOpts {
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Rotation sigma of the gauge priors on the first two keyframes (rad).
    #[arg(long, default_value_t = 1e-4)]
    gauge_rot_sigma: f64,
    /// Translation sigma of the gauge priors (m).
    #[arg(long, default_value_t = 1e-4)]
    gauge_trans_sigma: f64,
    /// Do not add gauge priors.
    #[arg(long)]
    no_gauge: bool,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Plain Gauss-Newton steps without Levenberg-Marquardt damping.
    #[arg(long)]
    no_damping: bool,
}

impl SolveOpts {
    fn gauge(&self) -> GaugeConfig {
        GaugeConfig {
            enabled: !self.no_gauge,
            rot_sigma: self.gauge_rot_sigma,
            trans_sigma: self.gauge_trans_sigma,
            ..GaugeConfig::default()
        }
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig { tol: self.tol, max_iters: self.max_iters, damping: !self.no_damping, ..SolverConfig::default() }
    }
}

fn emit(output: Option<&Path>, content: &str, stdout: &mut dyn Write) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, content).map_err(|source| Error::Io { path: p.to_path_buf(), source }),
        None => {
            stdout.write_all(content.as_bytes()).map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn solve(path: &Path, opts: &SolveOpts, stderr: &mut dyn Write) -> Result<(graph::FactorGraph, graph::Values)> {
    let ds = io::load_dataset(path)?;
    let (g, x0) = graph::build_graph(&ds, &opts.gauge())?;
    let (x, report) = graph::gauss_newton_solve(&g, &x0, &opts.solver())?;
    let _ = writeln!(
        stderr,
        "solve: {} iterations, cost {:.6e} -> {:.6e}{}",
        report.iterations,
        report.initial_cost(),
        report.final_cost(),
        if report.converged { "" } else { " (not converged)" }
    );
    Ok((g, x))
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Validate { dataset } => {
            let ds = io::load_dataset(&dataset)?;
            let _ = writeln!(
                stdout,
                "ok: {} keyframes, {} samples, {} measurements",
                ds.keyframes.len(),
                ds.num_samples(),
                ds.measurements.len()
            );
            Ok(())
        }
        Command::Solve { dataset, opts } => {
            let (_, x) = solve(&dataset, &opts, stderr)?;
            emit(opts.output.as_deref(), &export::poses_csv(&x), stdout)
        }
        Command::Marginals { dataset, opts } => {
            let (g, x) = solve(&dataset, &opts, stderr)?;
            let m = Marginals::new(&g, &x)?;
            let keys: Vec<Key> = g.pose_ids().into_iter().map(Key::Pose).collect();
            let rows = m
                .marginals(&keys)?
                .into_iter()
                .map(|b| {
                    let id = match b.key {
                        Key::Pose(i) => i,
                        _ => unreachable!("only pose keys requested"),
                    };
                    let logdet = analysis::dopt(&b.cov)?;
                    Ok((id, b.cov, logdet))
                })
                .collect::<Result<Vec<_>>>()?;
            emit(opts.output.as_deref(), &export::marginals_csv(&rows), stdout)
        }
        Command::Trend { dataset, opts, plot } => {
            let ds = io::load_dataset(&dataset)?;
            let cfg = TrendConfig { solver: opts.solver(), gauge: opts.gauge() };
            let series = analysis::trend_series(&ds, &cfg)?;
            emit(opts.output.as_deref(), &export::trend_csv(&series), stdout)?;
            if let Some(p) = plot {
                let svg = export::trend_svg(&series, &analysis::dataset_covisibility(&ds));
                std::fs::write(&p, svg).map_err(|source| Error::Io { path: p, source })?;
            }
            Ok(())
        }
        Command::Covis { dataset, output } => {
            let ds = io::load_dataset(&dataset)?;
            emit(output.as_deref(), &export::adjacency_csv(&analysis::dataset_covisibility(&ds)), stdout)
        }
        Command::Simulate { spec, output } => {
            let text = std::fs::read_to_string(&spec).map_err(|source| Error::Io { path: spec.clone(), source })?;
            let spec = ScenarioSpec::from_toml(&text)?;
            let (ds, _) = io::simulate_scenario(&spec)?;
            io::save_dataset(&ds, &output)
        }
    }
}

pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
