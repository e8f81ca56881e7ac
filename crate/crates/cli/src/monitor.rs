use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use lrtrial_core::report::format_sig;
use lrtrial_core::{Status, TrialState};
use serde::Serialize;

use crate::{DesignArgs, Failure, Format};

pub const EXIT_INCOMPLETE: u8 = 3;
pub const EXIT_STOP_HIGH: u8 = 10;
pub const EXIT_STOP_LOW: u8 = 11;
pub const EXIT_STOP_MAX_N: u8 = 12;

#[derive(Serialize)]
struct Step {
    n: u64,
    value: f64,
    theta_obs: f64,
    se: f64,
    log_lr: f64,
    lr: f64,
    ci_lower: f64,
    ci_upper: f64,
    status: Status,
}

fn exit_code(status: Status) -> u8 {
    match status {
        Status::StoppedHigh => EXIT_STOP_HIGH,
        Status::StoppedLow => EXIT_STOP_LOW,
        Status::StoppedMaxN => EXIT_STOP_MAX_N,
        Status::Collecting | Status::Continue => EXIT_INCOMPLETE,
    }
}

fn verdict(status: Status) -> &'static str {
    match status {
        Status::StoppedHigh => "STOP: evidence favours a clinically significant effect",
        Status::StoppedLow => "STOP: evidence favours an effect below the clinically significant threshold",
        Status::StoppedMaxN => "STOP: maximum sample size reached without conclusive evidence",
        Status::Collecting | Status::Continue => "INCOMPLETE: input ended before a stopping decision",
    }
}

pub fn run(args: &DesignArgs, format: Format) -> Result<ExitCode, Failure> {
    if format == Format::Csv {
        return Err(Failure::Usage("monitor output is table or json".into()));
    }
    let design = args.build().map_err(Failure::Usage)?;
    let mut state = TrialState::new(design);
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let io_err = |e: io::Error| Failure::Runtime(e.to_string());
    let mut skipped = 0u64;

    if format == Format::Table {
        writeln!(
            out,
            "{:>4}  {:>10}  {:>10}  {:>21}  status",
            "n", "theta_obs", "LR", "CI"
        )
        .map_err(io_err)?;
    }
    for (idx, line) in stdin.lock().lines().enumerate() {
        let line = line.map_err(io_err)?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value = match text.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                skipped += 1;
                eprintln!("warning: line {}: skipping non-numeric input {text:?}", idx + 1);
                continue;
            }
        };
        state.push(value).map_err(|e| Failure::Runtime(e.to_string()))?;
        let lr = state.lr().expect("at least one observation");
        let (ci_lower, ci_upper) = state
            .confidence_interval()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        let step = Step {
            n: state.n(),
            value,
            theta_obs: state.theta_obs().expect("at least one observation"),
            se: state.se().expect("at least one observation"),
            log_lr: lr.log_value(),
            lr: lr.value(),
            ci_lower,
            ci_upper,
            status: state.status(),
        };
        match format {
            Format::Json => {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&step).map_err(|e| Failure::Runtime(e.to_string()))?
                )
            }
            _ => writeln!(
                out,
                "{:>4}  {:>10}  {:>10}  {:>21}  {}",
                step.n,
                format_sig(step.theta_obs, 4),
                format_sig(step.lr, 4),
                format!("[{}, {}]", format_sig(ci_lower, 4), format_sig(ci_upper, 4)),
                step.status
            ),
        }
        .map_err(io_err)?;
        if state.status().is_stopped() {
            break;
        }
    }

    let status = state.status();
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} non-numeric line(s)");
    }
    if format == Format::Table {
        let lr = state.lr().map_or_else(|| "-".to_string(), |l| format_sig(l.value(), 4));
        writeln!(out, "{} (n = {}, LR = {lr})", verdict(status), state.n()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(ExitCode::from(exit_code(status)))
}
