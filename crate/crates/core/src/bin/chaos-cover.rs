use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chaos_cover::chain::Chain;
use chaos_cover::config::{load_config, parse_number};
use chaos_cover::error::{Error, Result};
use chaos_cover::game::{estimate_mean_waiting, DEFAULT_STEP_CAP, MAX_NET_RATIO, SAMPLE_CSV_HEADER};
use chaos_cover::harness::{
    bounds_report, fit_exponent, net_for_delta, run_sweep, sweep_csv, theory_prediction, FitModel, SubsetSpec,
    SweepOptions,
};
use chaos_cover::hitting::{HittingSolver, RETURN_TIME_TOLERANCE};
use chaos_cover::ifs::IfsSystem;
use chaos_cover::partition::{MarkovCheck, Partition};
use chaos_cover::render::{render_orbit, write_pbm, StopRule};
use chaos_cover::report::fmt17;

#[derive(Parser)]
#[command(name = "chaos-cover", version, about = "Chaos game waiting times and cylinder-chain cover times")]
struct Cli {
    /// Worker threads for Monte Carlo trials (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SystemArg {
    /// IFS description file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Similarity dimension, exponent t and diameter estimate.
    Dims {
        #[command(flatten)]
        system: SystemArg,
    },
    /// Build and validate the cylinder partition at scale delta.
    Partition {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, value_parser = parse_scalar)]
        delta: f64,
        /// Write `word,ratio,prob` rows here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Build the transition matrix, verify it and print it as CSV.
    Chain {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, value_parser = parse_scalar)]
        delta: f64,
        /// Also check matrix-power positivity and every return time.
        #[arg(long)]
        check_all: bool,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matthews bounds against the exact or Monte Carlo cover time.
    Bounds {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, value_parser = parse_scalar)]
        delta: f64,
        /// all | constant | words:W1,W2,... | random:K:SEED
        #[arg(long, default_value = "all")]
        subset: String,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean waiting time until the orbit is delta-dense.
    Simulate {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, value_parser = parse_scalar)]
        delta: f64,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        /// Starting point as comma-separated coordinates.
        #[arg(long)]
        v0: Option<String>,
        #[arg(long, default_value_t = MAX_NET_RATIO, value_parser = parse_scalar)]
        net_ratio: f64,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: u64,
        /// Write per-trial `delta,seed,steps,censored` rows here.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Waiting-time sweep over several deltas, written as CSV.
    Sweep {
        #[command(flatten)]
        system: SystemArg,
        /// Comma-separated, e.g. `2^-3,2^-4,1/32`.
        #[arg(long)]
        deltas: String,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// pure-power | power-times-log
        #[arg(long)]
        fit: Option<String>,
        #[arg(long, default_value_t = MAX_NET_RATIO, value_parser = parse_scalar)]
        net_ratio: f64,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: u64,
    },
    /// Plot one orbit as a binary PBM image.
    Render {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, conflicts_with = "delta", required_unless_present = "delta")]
        steps: Option<u64>,
        #[arg(long, value_parser = parse_scalar)]
        delta: Option<f64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// WIDTHxHEIGHT
        #[arg(long, default_value = "512x512")]
        size: String,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: u64,
    },
}

/// Decimal, fraction `a/b` or power `b^e`.
fn parse_scalar(text: &str) -> std::result::Result<f64, String> {
    let text = text.trim();
    if let Some((base, exp)) = text.split_once('^') {
        let b = parse_number(base).map_err(|e| e.to_string())?;
        let e = parse_number(exp).map_err(|e| e.to_string())?;
        return Ok(b.powf(e));
    }
    parse_number(text).map_err(|e| e.to_string())
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| parse_scalar(t).map_err(Error::InvalidInput))
        .collect()
}

fn parse_size(text: &str) -> Result<(usize, usize)> {
    let (w, h) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::InvalidInput(format!("size must look like 512x512, got {text:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("bad image size {text:?}")))
    };
    Ok((parse(w)?, parse(h)?))
}

fn labels(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn load(arg: &SystemArg) -> Result<IfsSystem> {
    load_config(&arg.config)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

/// Returns `true` when some result was censored.
fn run(cli: Cli) -> Result<bool> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Dims { system } => {
            let sys = load(&system)?;
            let rep = sys.scalar_report(sys.affordable_depth(8))?;
            writeln!(out, "s = {}", fmt17(rep.s))?;
            writeln!(out, "t = {}", fmt17(rep.t))?;
            writeln!(out, "argmax = {}", labels(&rep.argmax_set))?;
            writeln!(out, "unique_max = {}", rep.unique_max)?;
            writeln!(out, "r_min = {}", fmt17(rep.r_min))?;
            writeln!(out, "r_max = {}", fmt17(rep.r_max))?;
            writeln!(out, "diameter = {}", fmt17(rep.diameter.estimate))?;
            writeln!(out, "diameter_upper = {}", fmt17(rep.diameter.upper_bound))?;
            writeln!(out, "diameter_depth = {}", rep.diameter.depth)?;
            Ok(false)
        }
        Command::Partition { system, delta, dump } => {
            let sys = load(&system)?;
            let part = Partition::build(&sys, delta)?;
            part.validate()?;
            let (lo, hi) = part.cardinality_bounds();
            let lb = part.length_bounds();
            writeln!(out, "delta = {}", fmt17(delta))?;
            writeln!(out, "N_delta = {}", part.len())?;
            writeln!(out, "cardinality_bounds = {} {}", fmt17(lo), fmt17(hi))?;
            writeln!(out, "min_length = {}", lb.ell)?;
            writeln!(out, "max_length = {}", lb.ell_max)?;
            writeln!(out, "length_formulas_agree = {}", lb.consistent())?;
            match part.verify_markov_property() {
                MarkovCheck::Holds => writeln!(out, "markov_property = holds")?,
                MarkovCheck::Fails { witness, .. } => {
                    writeln!(out, "markov_property = fails at {}", witness.label())?
                }
            }
            if let Some(path) = dump {
                write_file(&path, part.dump().as_bytes())?;
            }
            Ok(false)
        }
        Command::Chain {
            system,
            delta,
            check_all,
            out: path,
        } => {
            let sys = load(&system)?;
            let chain = Chain::build(Partition::build(&sys, delta)?)?;
            let mut report = String::new();
            report.push_str(&format!("# states = {}\n", chain.n_states()));
            report.push_str(&format!("# row_sum_residual = {}\n", fmt17(chain.row_sum_residual())));
            report.push_str(&format!("# stationary_residual = {}\n", fmt17(chain.verify_stationary())));
            report.push_str(&format!("# irreducible = {}\n", chain.is_irreducible()));
            if check_all {
                report.push_str(&format!("# power_positive = {}\n", chain.power_check()));
                let solver = HittingSolver::for_chain(&chain)?;
                let mut worst = 0.0f64;
                for j in 0..chain.n_states() {
                    let prof = solver.profile(j)?;
                    let want = 1.0 / chain.stationary()[j];
                    worst = worst.max((prof.expected_return - want).abs() / want);
                }
                report.push_str(&format!("# worst_return_time_error = {}\n", fmt17(worst)));
                if worst > RETURN_TIME_TOLERANCE {
                    return Err(Error::Numeric {
                        message: "return times disagree with 1/p_w".into(),
                        residual: worst,
                    });
                }
            }
            match path {
                Some(p) => {
                    write_file(&p, chain.dump_csv().as_bytes())?;
                    out.write_all(report.as_bytes())?;
                }
                None => {
                    out.write_all(report.as_bytes())?;
                    out.write_all(chain.dump_csv().as_bytes())?;
                }
            }
            Ok(false)
        }
        Command::Bounds {
            system,
            delta,
            subset,
            trials,
            seed,
        } => {
            let sys = load(&system)?;
            let chain = Chain::build(Partition::build(&sys, delta)?)?;
            let states = subset.parse::<SubsetSpec>()?.resolve(&sys, chain.partition())?;
            let rep = bounds_report(&chain, &states, trials, seed)?;
            out.write_all(rep.render(chain.partition()).as_bytes())?;
            if !rep.holds() {
                return Err(Error::Numeric {
                    message: "cover time falls outside the Matthews bounds".into(),
                    residual: rep.estimate,
                });
            }
            Ok(false)
        }
        Command::Simulate {
            system,
            delta,
            trials,
            seed,
            v0,
            net_ratio,
            cap,
            samples,
        } => {
            let sys = load(&system)?;
            let v0 = match v0 {
                Some(text) => parse_list(&text)?,
                None => sys.default_base_point(),
            };
            let net = net_for_delta(&sys, delta, net_ratio, &v0)?;
            let est = estimate_mean_waiting(&sys, &v0, delta, &net, trials, seed, cap)?;
            let exp = sys.exponent_t();
            writeln!(out, "delta = {}", fmt17(delta))?;
            writeln!(out, "trials = {trials}")?;
            writeln!(out, "net_points = {}", net.len())?;
            writeln!(out, "mean_W = {}", fmt17(est.mean))?;
            writeln!(out, "std_error = {}", fmt17(est.std_error))?;
            writeln!(out, "censored_fraction = {}", fmt17(est.censored_fraction))?;
            if let Ok(pred) = theory_prediction(delta, exp.t, exp.unique_max) {
                writeln!(out, "prediction = {} {}", fmt17(pred.lo), fmt17(pred.hi))?;
            }
            if let Some(path) = samples {
                let mut text = String::from(SAMPLE_CSV_HEADER);
                for s in &est.samples {
                    text.push_str(&s.csv_row());
                }
                write_file(&path, text.as_bytes())?;
            }
            Ok(est.censored_fraction > 0.0)
        }
        Command::Sweep {
            system,
            deltas,
            trials,
            seed,
            out: path,
            fit,
            net_ratio,
            cap,
        } => {
            let sys = load(&system)?;
            let deltas = parse_list(&deltas)?;
            let model = fit.map(|m| m.parse::<FitModel>()).transpose()?;
            let opts = SweepOptions {
                net_ratio,
                cap,
                ..SweepOptions::new(trials, seed)
            };
            let rows = run_sweep(&sys, &deltas, &opts)?;
            write_file(&path, sweep_csv(&rows).as_bytes())?;
            let censored = rows.iter().any(|r| r.is_censored());
            if let Some(model) = model {
                let f = fit_exponent(&rows, model)?;
                writeln!(out, "model = {}", f.model)?;
                writeln!(out, "rows_used = {}", f.rows_used)?;
                writeln!(out, "t_hat = {}", fmt17(f.t_hat))?;
                writeln!(out, "intercept = {}", fmt17(f.intercept))?;
                writeln!(out, "residual_rms = {}", fmt17(f.residual_rms))?;
            }
            Ok(censored)
        }
        Command::Render {
            system,
            steps,
            delta,
            seed,
            out: path,
            size,
            cap,
        } => {
            let sys = load(&system)?;
            let (w, h) = parse_size(&size)?;
            let rule = match (steps, delta) {
                (Some(m), _) => StopRule::Steps(m),
                (None, Some(delta)) => StopRule::Delta { delta, cap },
                (None, None) => return Err(Error::InvalidInput("give --steps or --delta".into())),
            };
            let r = render_orbit(&sys, rule, seed, w, h)?;
            write_pbm(&path, &r.bitmap)?;
            writeln!(out, "steps = {}", r.steps)?;
            writeln!(out, "lit_pixels = {}", r.bitmap.lit())?;
            writeln!(out, "censored = {}", r.censored)?;
            Ok(r.censored)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: some trials were censored");
            ExitCode::from(5)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
