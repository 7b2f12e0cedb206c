//! Report formatting.

use std::fmt::Write as _;
use std::io::Write;

use gvo::estimate::{volume_records, RankedConfig, RankingRecord};
use gvo::fit::{CalibrationReport, FitRole, ObservationSet};
use gvo::footprint::FootprintResult;
use gvo::perf::Limiter;
use gvo::Estimate;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

pub fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn csv_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(io_err)?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One row per level and kind, with the prediction repeated on each row.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EstimateRow<'a> {
    kernel: &'a str,
    config_key: &'a str,
    level: &'static str,
    kind: &'static str,
    comp: f64,
    red: f64,
    cap: f64,
    up: f64,
    down: f64,
    alloc: f64,
    t_dram: f64,
    t_l2: f64,
    t_l1: f64,
    t_fp: f64,
    limiter: Limiter,
    predicted_glups: f64,
}

pub fn config_key(e: &Estimate) -> String {
    let [x, y, z] = e.launch.block;
    format!("{x}x{y}x{z}_w{}", e.launch.work_per_thread)
}

pub fn estimate(e: &Estimate, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => Ok(json(e)),
        Format::Csv => {
            let key = config_key(e);
            let p = &e.perf;
            csv_rows(volume_records(&key, &e.volumes).into_iter().map(|v| EstimateRow {
                kernel: &e.kernel,
                config_key: &key,
                level: v.level,
                kind: v.kind,
                comp: v.comp,
                red: v.red,
                cap: v.cap,
                up: v.up,
                down: v.down,
                alloc: v.alloc,
                t_dram: p.t_dram,
                t_l2: p.t_l2,
                t_l1: p.t_l1,
                t_fp: p.t_fp,
                limiter: p.limiter,
                predicted_glups: p.predicted_glups,
            }))
        }
        Format::Table => Ok(estimate_table(e)),
    }
}

fn estimate_table(e: &Estimate) -> String {
    let v = &e.volumes;
    let l = &e.launch;
    let mut s = String::new();
    let _ = writeln!(s, "kernel        {}", e.kernel);
    let _ = writeln!(
        s,
        "launch        block {}x{}x{}, grid {}x{}x{}, {} LUP/thread",
        l.block[0], l.block[1], l.block[2], l.grid[0], l.grid[1], l.grid[2], l.work_per_thread
    );
    let _ = writeln!(s, "waves         {} of {} blocks", e.wave_count, e.blocks_per_wave);
    let _ = writeln!(
        s,
        "work          {} Flop/LUP, {} B/LUP minimal",
        e.flops_per_lup, e.minimal_bytes_per_lup
    );
    let coverage = v.coverage.map_or("-".to_string(), |c| format!("{c:.3}"));
    let _ = writeln!(
        s,
        "factors       O_L1 {:.3}, O_L2 {:.3}, C {coverage}",
        v.l1_oversubscription, v.l2_oversubscription
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<6} {:<6} {:>10} {:>10} {:>10} {:>10} {:>10}   B/LUP",
        "level", "kind", "comp", "red", "cap", "up", "down"
    );
    for r in volume_records("", v) {
        let _ = writeln!(
            s,
            "{:<6} {:<6} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            r.level, r.kind, r.comp, r.red, r.cap, r.up, r.down
        );
    }
    let _ = writeln!(s);
    let p = &e.perf;
    for lim in Limiter::ALL {
        let mark = if lim == p.limiter { "*" } else { " " };
        let _ = writeln!(s, "{mark} t_{:<5} {:>12.4} ns/LUP", lim.to_string(), p.time(lim) * 1e9);
    }
    let _ = writeln!(s, "limiter       {}", p.limiter);
    let _ = writeln!(s, "predicted     {:.2} GLUP/s", p.predicted_glups);
    s
}

pub fn ranking(rows: &[RankedConfig], format: Format) -> Result<String, CliError> {
    let records = rows.iter().enumerate().map(|(i, r)| RankingRecord::new(i + 1, r));
    match format {
        Format::Csv => csv_rows(records),
        Format::Json => Ok(json(&records.collect::<Vec<_>>())),
        Format::Table => {
            let mut s = format!(
                "{:>4}  {:<16} {:>10} {:>10} {:>8}  {}\n",
                "rank", "config", "DRAM B/LUP", "L2 B/LUP", "limiter", "GLUP/s"
            );
            for r in records {
                let _ = writeln!(
                    s,
                    "{:>4}  {:<16} {:>10.2} {:>10.2} {:>8}  {:.2}",
                    r.rank,
                    r.config_key,
                    r.dram_load_down + r.dram_store_down,
                    r.l2l1_load_down + r.l2l1_store_down,
                    r.limiter.to_string(),
                    r.predicted_glups
                );
            }
            Ok(s)
        }
    }
}

pub fn sweep_volumes(rows: &[RankedConfig]) -> Result<String, CliError> {
    csv_rows(
        rows.iter()
            .flat_map(|r| volume_records(&r.config.key(), &r.estimate.volumes)),
    )
}

pub fn footprint(result: &FootprintResult, format: Format) -> Result<String, CliError> {
    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    struct Row<'a> {
        field: &'a str,
        kind: gvo::AccessKind,
        granularity: u64,
        unique_lines: u64,
        unique_bytes: u64,
        total_access_bytes: u64,
    }
    let rows = result.entries.iter().map(|e| Row {
        field: &e.field,
        kind: e.kind,
        granularity: result.granularity,
        unique_lines: e.unique_lines,
        unique_bytes: e.unique_bytes,
        total_access_bytes: e.total_access_bytes,
    });
    match format {
        Format::Json => Ok(json(result)),
        Format::Csv => csv_rows(rows),
        Format::Table => {
            let mut s = format!(
                "{:<12} {:<6} {:>12} {:>12} {:>12}\n",
                "field", "kind", "lines", "unique B", "accessed B"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<12} {:<6} {:>12} {:>12} {:>12}",
                    r.field,
                    r.kind.to_string(),
                    r.unique_lines,
                    r.unique_bytes,
                    r.total_access_bytes
                );
            }
            let _ = writeln!(
                s,
                "{:<12} {:<6} {:>12} {:>12} {:>12}",
                "total",
                "",
                result.unique_lines(),
                result.unique_bytes(),
                result.total_access_bytes()
            );
            Ok(s)
        }
    }
}

/// Derived ratios next to the fitted curve, one row per observation.
pub fn observations(obs: &ObservationSet, report: &CalibrationReport) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Row {
        role: FitRole,
        x: f64,
        ratio: f64,
        weight: f64,
        fitted: f64,
    }
    let rows = FitRole::ALL.iter().flat_map(|&role| {
        let p = *report.fits.get(role);
        obs.get(role).iter().map(move |o| Row {
            role,
            x: o.x,
            ratio: o.ratio,
            weight: o.weight,
            fitted: p.miss_ratio(o.x),
        })
    });
    csv_rows(rows)
}

pub fn calibration(report: &CalibrationReport, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json | Format::Csv => Ok(json(report)),
        Format::Table => {
            let mut s = format!(
                "{:<9} {:>5} {:>10} {:>10} {:>10} {:>10}\n",
                "role", "obs", "a", "b", "c", "rms"
            );
            for r in &report.roles {
                let p = report.fits.get(r.role);
                let rms = r.calibration.map_or("-".to_string(), |c| format!("{:.4}", c.residual));
                let _ = writeln!(
                    s,
                    "{:<9} {:>5} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                    r.role.to_string(),
                    r.observations,
                    p.a,
                    p.b,
                    p.c,
                    rms
                );
                if let Some(n) = &r.note {
                    let _ = writeln!(s, "          {n}");
                }
            }
            Ok(s)
        }
    }
}

pub fn write_to(path: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io_err)?;
            out.flush().map_err(io_err)
        }
    }
}
