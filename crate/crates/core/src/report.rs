//! Text and CSV renderings of simulation output.
//!
//! Numbers in CSV are written with Rust's shortest round-trip formatting, so
//! parsing a rendered summary gives back the identical value.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::design::DesignParams;
use crate::error::{Error, Result};
use crate::sim::{CategoryRow, EffectDistribution, OutcomeCategory, SimulationConfig, SimulationSummary, SweepPoint};

pub const SUMMARY_CSV_HEADER: [&str; 3] = ["category", "incidence", "mean_folded_lr"];
pub const SWEEP_CSV_HEADER: [&str; 4] = ["theta_T", "mean_n", "stop_early_rate", "replications"];

/// Formats to `sig` significant figures, switching to scientific notation
/// below 1e-3 or once the integer part needs more than `sig` digits.
pub fn format_sig(x: f64, sig: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", sig.saturating_sub(1), 0.0);
    }
    let mag = x.abs().log10().floor() as i32;
    if (-3..sig as i32).contains(&mag) {
        let decimals = (sig as i32 - 1 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can bump the magnitude (9.9996 -> "10.000")
        let rounded: f64 = s.parse().unwrap_or(x);
        if rounded.abs() < 10f64.powi(mag + 1) {
            return s;
        }
        if decimals > 0 {
            return format!("{x:.prec$}", prec = decimals - 1);
        }
    }
    format!("{x:.prec$e}", prec = sig.saturating_sub(1))
}

fn row_label(category: OutcomeCategory, n_max: u64) -> String {
    match category {
        OutcomeCategory::MisleadingEarly => format!("Misleading evidence, stopped early (N<{n_max})"),
        OutcomeCategory::CorrectEarly => format!("Correct evidence, stopped early (N<{n_max})"),
        OutcomeCategory::MisleadingMaxN => format!("Misleading evidence, stopped at N={n_max}"),
        OutcomeCategory::CorrectMaxN => format!("Correct evidence, stopped at N={n_max}"),
        OutcomeCategory::NeutralUnclassified => "Neutral / unclassified".to_string(),
    }
}

/// Outcome table layout: one line per outcome row with incidence in percent and
/// the mean folded likelihood ratio, followed by the overall figures.
pub fn summary_to_table(summary: &SimulationSummary) -> String {
    let n_max = summary.config.design.n_max();
    let mut lines = vec![("Result".to_string(), "Incidence (%)".to_string(), "Mean LR".to_string())];
    for row in &summary.rows {
        if row.category == OutcomeCategory::NeutralUnclassified && row.count == 0 {
            continue;
        }
        lines.push((
            row_label(row.category, n_max),
            format_sig(100.0 * row.incidence, 3),
            row.mean_folded_lr.map_or_else(|| "-".to_string(), |v| format_sig(v, 4)),
        ));
    }
    let w0 = lines.iter().map(|l| l.0.chars().count()).max().unwrap_or(0);
    let w1 = lines.iter().map(|l| l.1.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (a, b, c) in &lines {
        let pad = w0 - a.chars().count();
        let _ = writeln!(out, "{a}{:pad$}  {b:>w1$}  {c}", "");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Trials: {}  (seed {})", summary.n_trials, summary.master_seed);
    let _ = writeln!(out, "Mean sample size: {}", format_sig(summary.mean_n, 4));
    let _ = writeln!(
        out,
        "Misleading evidence overall: {}%",
        format_sig(100.0 * summary.misleading_total, 3)
    );
    out
}

fn effect_lines(dist: &EffectDistribution) -> Vec<(&'static str, String)> {
    match *dist {
        EffectDistribution::Normal { mean, sd } => vec![
            ("effect_kind", "normal".into()),
            ("effect_mean", mean.to_string()),
            ("effect_sd", sd.to_string()),
        ],
        EffectDistribution::PointMass { theta } => {
            vec![
                ("effect_kind", "point_mass".into()),
                ("effect_theta", theta.to_string()),
            ]
        }
    }
}

/// CSV form: `#`-prefixed `key=value` metadata lines echoing the config,
/// then one row per category and a closing `all` row.
pub fn summary_to_csv(summary: &SimulationSummary) -> String {
    let design = &summary.config.design;
    let mut meta: Vec<(&str, String)> = vec![
        ("delta", design.delta().to_string()),
        ("lr_upper", design.lr_upper().to_string()),
        ("lr_lower", design.lr_lower().to_string()),
        ("z_crit", design.z_crit().to_string()),
        ("label", design.label().replace(['\n', '\r'], " ")),
    ];
    meta.extend(effect_lines(&summary.config.effect_dist));
    meta.extend([
        ("n_trials", summary.n_trials.to_string()),
        ("master_seed", summary.master_seed.to_string()),
        ("mean_n", summary.mean_n.to_string()),
        ("misleading_total", summary.misleading_total.to_string()),
    ]);

    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_CSV_HEADER).expect("in-memory write");
    for row in &summary.rows {
        w.write_record([
            row.category.key().to_string(),
            row.incidence.to_string(),
            row.mean_folded_lr.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    let total: f64 = summary.rows.iter().map(|r| r.incidence).sum();
    w.write_record([
        "all".to_string(),
        total.to_string(),
        summary.mean_folded_lr_all.to_string(),
    ])
    .expect("in-memory write");
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8"));
    out
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{key}: cannot parse {v:?}")))
}

pub fn summary_from_csv(text: &str) -> Result<SimulationSummary> {
    let mut meta = std::collections::HashMap::new();
    for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
        if let Some((k, v)) = line.split_once('=') {
            meta.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| {
        meta.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Parse(format!("missing {k}")))
    };

    let design = DesignParams {
        delta: parse_num("delta", get("delta")?)?,
        lr_upper: parse_num("lr_upper", get("lr_upper")?)?,
        lr_lower: Some(parse_num("lr_lower", get("lr_lower")?)?),
        z_crit: parse_num("z_crit", get("z_crit")?)?,
        label: get("label")?.to_string(),
    }
    .build()?;
    let effect_dist = match get("effect_kind")? {
        "normal" => EffectDistribution::Normal {
            mean: parse_num("effect_mean", get("effect_mean")?)?,
            sd: parse_num("effect_sd", get("effect_sd")?)?,
        },
        "point_mass" => EffectDistribution::PointMass {
            theta: parse_num("effect_theta", get("effect_theta")?)?,
        },
        other => return Err(Error::Parse(format!("unknown effect kind {other:?}"))),
    };
    let n_trials: u64 = parse_num("n_trials", get("n_trials")?)?;
    let master_seed: u64 = parse_num("master_seed", get("master_seed")?)?;
    let mean_n: f64 = parse_num("mean_n", get("mean_n")?)?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if header.iter().ne(SUMMARY_CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let mut rows: Vec<CategoryRow> = Vec::new();
    let mut mean_all = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let key = &rec[0];
        let lr = &rec[2];
        if key == "all" {
            mean_all = Some(parse_num::<f64>("all", lr)?);
            continue;
        }
        let category =
            OutcomeCategory::from_key(key).ok_or_else(|| Error::Parse(format!("unknown category {key:?}")))?;
        let incidence: f64 = parse_num(key, &rec[1])?;
        rows.push(CategoryRow {
            category,
            count: (incidence * n_trials as f64).round() as u64,
            incidence,
            mean_folded_lr: if lr.is_empty() { None } else { Some(parse_num(key, lr)?) },
        });
    }
    if rows.iter().map(|r| r.category).ne(OutcomeCategory::ALL) {
        return Err(Error::Parse("category rows missing or out of order".into()));
    }
    let misleading: u64 = rows
        .iter()
        .filter(|r| r.category.is_misleading())
        .map(|r| r.count)
        .sum();
    Ok(SimulationSummary {
        config: SimulationConfig {
            design,
            effect_dist,
            n_trials,
            master_seed,
        },
        n_trials,
        master_seed,
        rows,
        mean_n,
        misleading_total: misleading as f64 / n_trials as f64,
        mean_folded_lr_all: mean_all.ok_or_else(|| Error::Parse("missing all row".into()))?,
    })
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER).expect("in-memory write");
    for p in points {
        w.write_record([
            p.theta_t.to_string(),
            p.mean_n.to_string(),
            p.stop_early_rate.to_string(),
            p.replications.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn sweep_from_csv(text: &str) -> Result<Vec<SweepPoint>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if header.iter().ne(SWEEP_CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            Ok(SweepPoint {
                theta_t: parse_num("theta_T", &rec[0])?,
                mean_n: parse_num("mean_n", &rec[1])?,
                stop_early_rate: parse_num("stop_early_rate", &rec[2])?,
                replications: parse_num("replications", &rec[3])?,
            })
        })
        .collect()
}
