use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use lrtrial_core::report::{format_sig, summary_to_csv, summary_to_table, sweep_to_csv};
use lrtrial_core::{
    directional_lr, lr_from_z, one_sided_p, run_batch, run_batch_with_threads, stop_boundary, sweep_mean_n, theta_grid,
    DesignParams, EffectDistribution, LikelihoodRatio, SimulationConfig, StandardizedEffect, TrialDesign,
};
use serde::Serialize;

use crate::{write_output, ConvertArgs, DesignArgs, Failure, Format, SeedArg};

/// Design flags for simulation, defaulting to the reference preset.
#[derive(Debug, Args)]
pub struct SimDesignArgs {
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = lrtrial_core::design::REFERENCE_Z_CRIT)]
    pub z_crit: f64,
    #[arg(long, default_value_t = lrtrial_core::design::DEFAULT_LR_UPPER)]
    pub lr_upper: f64,
    #[arg(long)]
    pub lr_lower: Option<f64>,
}

impl SimDesignArgs {
    fn build(&self) -> Result<TrialDesign, Failure> {
        DesignParams::new(self.delta)
            .z_crit(self.z_crit)
            .thresholds(self.lr_upper, self.lr_lower)
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    design: SimDesignArgs,
    /// Number of simulated trials.
    #[arg(long, default_value_t = lrtrial_core::sim::REFERENCE_TRIALS)]
    trials: u64,
    #[command(flatten)]
    seed: SeedArg,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Mean of the normal distribution of true effects.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    effect_mean: f64,
    /// Spread of the normal distribution of true effects.
    #[arg(long, default_value_t = 1.0)]
    effect_sd: f64,
    /// Use a single fixed true effect instead of a normal distribution.
    #[arg(long, allow_negative_numbers = true, conflicts_with_all = ["effect_mean", "effect_sd"])]
    effect_point: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    design: SimDesignArgs,
    #[arg(long, allow_negative_numbers = true, default_value_t = -1.0)]
    theta_min: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 2.0)]
    theta_max: f64,
    #[arg(long, default_value_t = 0.25)]
    step: f64,
    /// Replications per grid point.
    #[arg(long, default_value_t = 1_000)]
    reps: u64,
    #[command(flatten)]
    seed: SeedArg,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Boundary {
    lr: f64,
    /// Standard errors between the estimate and the dividing effect.
    z: f64,
    /// One-sided p-value against the dividing effect at the boundary.
    p: f64,
}

#[derive(Serialize)]
struct DesignReport<'a> {
    design: &'a TrialDesign,
    stop_high: Boundary,
    stop_low: Boundary,
}

fn design_report(design: &TrialDesign) -> Result<DesignReport<'_>, Failure> {
    let runtime = |e: lrtrial_core::Error| Failure::Runtime(e.to_string());
    let high = stop_boundary(design.lr_upper()).map_err(runtime)?;
    let low = stop_boundary(1.0 / design.lr_lower()).map_err(runtime)?;
    Ok(DesignReport {
        design,
        stop_high: Boundary {
            lr: design.lr_upper(),
            z: high.z,
            p: high.p,
        },
        stop_low: Boundary {
            lr: design.lr_lower(),
            z: -low.z,
            p: 1.0 - low.p,
        },
    })
}

pub fn design(args: &DesignArgs, format: Format) -> Result<ExitCode, Failure> {
    let design = args.build().map_err(Failure::Usage)?;
    let report = design_report(&design)?;
    match format {
        Format::Json => println!("{}", to_json(&report)?),
        Format::Table => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "delta {}  z_crit {}  thresholds {} / {}",
                design.delta(),
                design.z_crit(),
                format_sig(design.lr_upper(), 4),
                format_sig(design.lr_lower(), 4)
            );
            let _ = writeln!(out, "n_min  {}", design.n_min());
            let _ = writeln!(out, "n_max  {}", design.n_max());
            let h = &report.stop_high;
            let _ = writeln!(
                out,
                "stop high  LR >= {}  z >= {}  one-sided p <= {}",
                format_sig(h.lr, 4),
                format_sig(h.z, 5),
                format_sig(h.p, 4)
            );
            let l = &report.stop_low;
            let _ = writeln!(
                out,
                "stop low   LR <= {}  z <= {}  one-sided p >= {}",
                format_sig(l.lr, 4),
                format_sig(l.z, 5),
                format_sig(l.p, 4)
            );
            print!("{out}");
        }
        Format::Csv => return Err(Failure::Usage("design output is table or json".into())),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn simulate(args: &SimulateArgs) -> Result<ExitCode, Failure> {
    let effect_dist = match args.effect_point {
        Some(theta) => EffectDistribution::PointMass { theta },
        None => EffectDistribution::Normal {
            mean: args.effect_mean,
            sd: args.effect_sd,
        },
    };
    let config = SimulationConfig {
        design: args.design.build()?,
        effect_dist,
        n_trials: args.trials,
        master_seed: args.seed.seed,
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if args.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let summary = match args.threads {
        Some(t) => run_batch_with_threads(&config, t),
        None => run_batch(&config),
    }
    .map_err(|e| Failure::Runtime(e.to_string()))?;
    let text = match args.format {
        Format::Table => summary_to_table(&summary),
        Format::Json => to_json(&summary)? + "\n",
        Format::Csv => summary_to_csv(&summary),
    };
    write_output(args.output.as_ref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(args: &SweepArgs) -> Result<ExitCode, Failure> {
    let design = args.design.build()?;
    let grid = theta_grid(args.theta_min, args.theta_max, args.step).map_err(|e| Failure::Usage(e.to_string()))?;
    let points = sweep_mean_n(&grid, &design, args.reps, args.seed.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    write_output(args.output.as_ref(), &sweep_to_csv(&points))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Conversion {
    /// Standard errors between the estimate and the dividing effect.
    z_minus_delta: f64,
    p_one_sided: f64,
    log_lr: f64,
    lr: f64,
    interpretation: String,
}

fn interpret(lr: LikelihoodRatio) -> String {
    let v = lr.value();
    if v > 1.0 {
        format!(
            "The data are {} times as likely if the true effect exceeds the minimum clinically significant effect as if it does not.",
            format_sig(v, 4)
        )
    } else if v < 1.0 {
        format!(
            "The data are {} times as likely if the true effect falls short of the minimum clinically significant effect as if it exceeds it.",
            format_sig(1.0 / v, 4)
        )
    } else {
        "The data do not favour either side of the minimum clinically significant effect.".to_string()
    }
}

pub fn convert(args: &ConvertArgs) -> Result<ExitCode, Failure> {
    let usage = |e: lrtrial_core::Error| Failure::Usage(e.to_string());
    let (distance, lr) = match (args.z, args.estimate) {
        (Some(z), None) => {
            let d = args.delta_std.expect("clap requires --delta-std with --z");
            let lr = lr_from_z(StandardizedEffect::new(z).map_err(usage)?, d).map_err(usage)?;
            let lr = if z < d { lr.inverse() } else { lr };
            (z - d, lr)
        }
        (None, Some(est)) => {
            let se = args.se.expect("clap requires --se with --estimate");
            let delta = args.delta.expect("clap requires --delta with --estimate");
            let lr = directional_lr(est, delta, se).map_err(usage)?;
            ((est - delta) / se, lr)
        }
        _ => unreachable!("clap enforces exactly one input group"),
    };
    let p = one_sided_p(distance, 0.0, 1.0).map_err(usage)?;
    let report = Conversion {
        z_minus_delta: distance,
        p_one_sided: p.value(),
        log_lr: lr.log_value(),
        lr: lr.value(),
        interpretation: interpret(lr),
    };
    match args.format {
        Format::Json => println!("{}", to_json(&report)?),
        Format::Table => {
            println!("LR                {}", format_sig(report.lr, 4));
            println!("log LR            {}", format_sig(report.log_lr, 6));
            println!("z - delta         {}", format_sig(report.z_minus_delta, 5));
            println!("one-sided p       {}", format_sig(report.p_one_sided, 4));
            println!("{}", report.interpretation);
        }
        Format::Csv => return Err(Failure::Usage("convert output is table or json".into())),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))
}
