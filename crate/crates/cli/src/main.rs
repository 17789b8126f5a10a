//! `circula` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Failures also print one JSON object on stderr:
//! `{"error":"<kind>","code":<n>,"message":"..."}`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use circula::cbmd::Families;
use circula::estimate::{estimate_cbmd, estimate_cbmd_exhaustive};
use circula::io::{self, AngleUnit, LoadOptions};
use circula::mixture::{message_length, mml_em_fit, FitMeta, MixtureModel, MmlConfig};
use circula::modes::count_modes;
use circula::synth::{run_rank1_benchmark, CorrelationSource, SpreadKind, SynthSpec};
use circula::{Error, ErrorKind, RandomSource};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "circula", version, about = "Circula-based distributions on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one distribution to a dataset and write a model file.
    Fit {
        #[command(flatten)]
        input: DataArgs,
        #[arg(long, default_value = "vm-wc")]
        families: Families,
        /// Search all sign vectors instead of the rank-one heuristic.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a mixture by message-length EM and write a model file.
    FitMixture {
        #[command(flatten)]
        input: DataArgs,
        #[arg(long, default_value = "vm-wc")]
        families: Families,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long, default_value_t = 1.0)]
        batch_fraction: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-row log densities of a dataset under a model, then the total.
    Logpdf {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: DataArgs,
        /// Write to a file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw samples from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Density of two coordinates on a regular grid, as CSV.
    Grid {
        #[arg(long)]
        model: PathBuf,
        /// Two 1-based coordinate indices, e.g. `1,2`.
        #[arg(long, default_value = "1,2")]
        dims: String,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Critical points of one mixture component, tallied by Morse index.
    Modes {
        #[arg(long)]
        model: PathBuf,
        /// 1-based component index.
        #[arg(long, default_value_t = 1)]
        component: usize,
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Rank-one heuristic against exhaustive sign search on synthetic data.
    BenchRank1 {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        /// CSV with one row per repeat and method.
        #[arg(long)]
        out: PathBuf,
        /// JSON report with per-method means.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Wrapped-normal synthetic dataset.
    Synth {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Overrides the unit directive of the data file.
    #[arg(long)]
    unit: Option<Unit>,
    #[arg(long)]
    weight_column: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Radians,
    Degrees,
}

#[derive(Clone, Copy, ValueEnum)]
enum Spread {
    Variance,
    Stddev,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LKJ shape parameter.
    #[arg(long, default_value_t = 1.0, conflicts_with = "factor")]
    eta: f64,
    /// Comma-separated loadings `w`; the correlation is `G(w)`.
    #[arg(long)]
    factor: Option<String>,
    /// Spreads are drawn uniformly from `[spread-min, spread-max]`.
    #[arg(long, default_value_t = 0.0)]
    spread_min: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    spread_max: f64,
    #[arg(long, value_enum, default_value = "variance")]
    spread: Spread,
}

impl SpecArgs {
    fn build(&self, repeats: usize) -> Result<SynthSpec, Error> {
        let correlation = match &self.factor {
            Some(text) => CorrelationSource::Factor(parse_list(text, "factor")?),
            None => CorrelationSource::Lkj { eta: self.eta },
        };
        Ok(SynthSpec {
            dim: self.dim,
            n_samples: self.n,
            n_repeats: repeats,
            correlation,
            spread_range: (self.spread_min, self.spread_max),
            spread_kind: match self.spread {
                Spread::Variance => SpreadKind::Variance,
                Spread::Stddev => SpreadKind::StdDev,
            },
            seed: self.seed,
        })
    }
}

fn usage(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.into(),
        reason: reason.into(),
    }
}

fn parse_list(text: &str, name: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| usage(name, format!("`{s}` is not a number"))))
        .collect()
}

fn load(input: &DataArgs) -> Result<circula::Dataset, Error> {
    let options = LoadOptions {
        unit: input.unit.map(|u| match u {
            Unit::Radians => AngleUnit::Radians,
            Unit::Degrees => AngleUnit::Degrees,
        }),
        weight_column: input.weight_column.clone(),
    };
    Ok(io::load_dataset(&input.data, &options)?.data)
}

fn run(command: Command) -> Result<String, Error> {
    let mut report = String::new();
    match command {
        Command::Fit {
            input,
            families,
            exhaustive,
            out,
        } => {
            let data = load(&input)?;
            let fit = if exhaustive {
                estimate_cbmd_exhaustive(&data, families)?
            } else {
                estimate_cbmd(&data, families)?
            };
            let model = MixtureModel::new(vec![1.0], vec![fit.params])?;
            let len = message_length(&model, &data)?;
            let model = model.with_meta(FitMeta {
                message_length_bits: len.total_bits,
                model_length_bits: len.model_bits,
                data_length_bits: len.data_bits,
                k_nz: 1,
                converged: fit.converged,
                seed: None,
                diagnostics: Vec::new(),
            });
            io::save_model(&out, &model)?;
            let _ = writeln!(report, "loglik\t{:.10}", fit.loglik);
            let _ = writeln!(report, "n\t{}", data.len());
            let _ = writeln!(report, "converged\t{}", fit.converged);
            let q: Vec<String> = model.components()[0].circula().q().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(report, "q\t{}", q.join(","));
        }
        Command::FitMixture {
            input,
            families,
            k_min,
            k_max,
            batch_fraction,
            max_iter,
            tol,
            seed,
            out,
        } => {
            let data = load(&input)?;
            let config = MmlConfig {
                families,
                k_min,
                k_max,
                batch_fraction,
                max_iter,
                tol,
                seed,
            };
            let model = mml_em_fit(&data, &config, &mut RandomSource::new(seed))?;
            io::save_model(&out, &model)?;
            let meta = model.meta();
            let _ = writeln!(report, "k_nz\t{}", meta.k_nz);
            let _ = writeln!(report, "message_length_bits\t{:.6}", meta.message_length_bits);
            let _ = writeln!(report, "model_length_bits\t{:.6}", meta.model_length_bits);
            let _ = writeln!(report, "data_length_bits\t{:.6}", meta.data_length_bits);
            let _ = writeln!(report, "converged\t{}", meta.converged);
        }
        Command::Logpdf { model, input, out } => {
            let model = io::load_model(&model)?;
            let data = load(&input)?;
            let mut text = String::from("row,logpdf\n");
            let mut total = 0.0;
            for (i, row) in data.rows().enumerate() {
                let l = model.logpdf(row)?;
                total += data.weight(i) * l;
                let _ = writeln!(text, "{},{:.16e}", i + 1, l);
            }
            let _ = writeln!(text, "total,{total:.16e}");
            match out {
                Some(path) => io::write_atomic(path, &text)?,
                None => report = text,
            }
        }
        Command::Sample { model, n, seed, out } => {
            let model = io::load_model(&model)?;
            let data = model.sample(&mut RandomSource::new(seed), n)?;
            io::save_dataset(&out, &data)?;
        }
        Command::Grid {
            model,
            dims,
            resolution,
            out,
        } => {
            let model = io::load_model(&model)?;
            let idx: Vec<usize> = dims
                .split(',')
                .map(|s| s.trim().parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
                .collect::<Option<_>>()
                .filter(|v: &Vec<usize>| v.len() == 2)
                .ok_or_else(|| usage("dims", "expected two 1-based indices such as `1,2`"))?;
            let grid = io::density_grid(&model, (idx[0], idx[1]), resolution)?;
            io::write_atomic(&out, &grid.to_csv())?;
            let _ = writeln!(report, "mass\t{:.8}", grid.mass());
        }
        Command::Modes { model, component, grid } => {
            let model = io::load_model(&model)?;
            let params = component
                .checked_sub(1)
                .and_then(|j| model.components().get(j))
                .ok_or_else(|| usage("component", format!("model has {} components", model.k())))?;
            let r = count_modes(params, grid)?;
            let _ = writeln!(report, "modes\t{}", r.modes());
            for (k, n) in r.counts_by_index.iter().enumerate() {
                let _ = writeln!(report, "index_{k}\t{n}");
            }
            let _ = writeln!(report, "alternating_sum\t{}", r.alternating_sum());
            let _ = writeln!(report, "plateau\t{}", r.plateau);
            for p in &r.critical_points {
                let pt: Vec<String> = p.point.iter().map(|v| format!("{v:.6}")).collect();
                let _ = writeln!(report, "point\t{}\t{}\t{:.8}", p.index, pt.join(","), p.log_density);
            }
        }
        Command::BenchRank1 {
            spec,
            repeats,
            out,
            summary,
        } => {
            let report_data = run_rank1_benchmark(&spec.build(repeats)?)?;
            io::write_atomic(&out, &report_data.to_csv())?;
            if let Some(path) = summary {
                io::write_atomic(path, &report_data.to_json())?;
            }
            for s in &report_data.summary {
                let _ = writeln!(
                    report,
                    "{}\tmean_loglik {:.6}\tmean_wall_seconds {:.6}",
                    s.method.tag(),
                    s.mean_loglik,
                    s.mean_wall_seconds
                );
            }
            let _ = writeln!(report, "failures\t{}", report_data.failures.len());
        }
        Command::Synth { spec, out } => {
            let data = spec.build(1)?.generate(0)?;
            io::save_dataset(&out, &data)?;
        }
    }
    Ok(report)
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "code": code, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", e.render());
            return fail("usage", 1, e.kind().as_str().unwrap_or("invalid arguments"));
        }
    };
    match run(cli.command) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::Usage => ("usage", 1),
                ErrorKind::Data => ("data", 2),
                ErrorKind::Numeric => ("numeric", 3),
            };
            fail(kind, code, &e.to_string())
        }
    }
}
