//! CSV and JSON artifacts. Every file carries the config hash and seed.

use crate::defense::AblationRow;
use crate::error::Result;
use crate::orchestrator::{RoundReport, ValidatorTrace};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ids(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub const ROUND_CSV_HEADER: &str =
    "config_hash,seed,round,attack_active,defense_enabled,ma,ba,tpr,tnr,fpr,fnr,precision,accepted,poisoned,skipped,local_ba";

pub fn write_rounds_csv(out: &mut impl Write, config_hash: &str, reports: &[RoundReport]) -> Result<()> {
    writeln!(out, "{ROUND_CSV_HEADER}")?;
    for r in reports {
        let d = &r.detection;
        writeln!(
            out,
            "{config_hash},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.round,
            r.attack_active,
            r.defense_enabled,
            r.ma,
            r.ba,
            opt(d.tpr),
            opt(d.tnr),
            opt(d.fpr),
            opt(d.fnr),
            opt(d.precision),
            ids(&r.accepted),
            ids(&r.poisoned),
            r.skipped,
            opt(r.local_ba)
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RoundsDocument<'a, C: Serialize> {
    config_hash: &'a str,
    seed: u64,
    config: &'a C,
    rounds: &'a [RoundReport],
}

pub fn write_rounds_json<C: Serialize>(
    out: &mut impl Write,
    config_hash: &str,
    seed: u64,
    config: &C,
    reports: &[RoundReport],
) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, &RoundsDocument { config_hash, seed, config, rounds: reports })?;
    writeln!(out)?;
    Ok(())
}

pub fn write_ablation_csv(out: &mut impl Write, config_hash: &str, seed: u64, rows: &[AblationRow]) -> Result<()> {
    writeln!(out, "config_hash,seed,scenario,rule,tpr,tnr")?;
    for r in rows {
        writeln!(out, "{config_hash},{seed},{},{},{:.1},{:.1}", r.scenario, r.rule.name(), r.tpr, r.tnr)?;
    }
    Ok(())
}

/// One point of a majority-risk curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypergeomPoint {
    pub population: u64,
    pub pmr: f64,
    pub validators: u64,
    pub probability: f64,
}

pub fn write_hypergeom_csv(
    out: &mut impl Write,
    config_hash: &str,
    seed: u64,
    points: &[HypergeomPoint],
) -> Result<()> {
    writeln!(out, "config_hash,seed,population,pmr,validators,probability")?;
    for p in points {
        writeln!(out, "{config_hash},{seed},{},{},{},{:e}", p.population, p.pmr, p.validators, p.probability)?;
    }
    Ok(())
}

/// Long-format HLBIM values of every validator and metric in one round.
pub fn write_hlbim_csv(out: &mut impl Write, config_hash: &str, report: &RoundReport) -> Result<()> {
    writeln!(out, "config_hash,seed,round,validator,metric,model,poisoned,label,layer,value")?;
    for t in &report.traces {
        for h in [&t.cosine_hlbim, &t.euclidean_hlbim] {
            for (m, row) in h.values.iter().enumerate() {
                let bad = report.poisoned.contains(&m);
                for ((label, layer), v) in h.columns.iter().zip(row) {
                    writeln!(
                        out,
                        "{config_hash},{},{},{},{},{m},{bad},{label},{layer},{v}",
                        report.seed,
                        report.round,
                        t.validator,
                        h.metric.name()
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// First-component scores and test outcomes of every pruning iteration.
pub fn write_pca_csv(out: &mut impl Write, config_hash: &str, report: &RoundReport) -> Result<()> {
    writeln!(
        out,
        "config_hash,seed,round,validator,metric,iteration,model,poisoned,score,explained_variance_ratio,\
pruned,significant,t_p,levene_p,ks_p,iqr,three_sigma,aborted"
    )?;
    for t in &report.traces {
        write_trace_rows(out, config_hash, report, t)?;
    }
    Ok(())
}

fn write_trace_rows(out: &mut impl Write, config_hash: &str, report: &RoundReport, t: &ValidatorTrace) -> Result<()> {
    for trace in [&t.cosine, &t.euclidean] {
        for (k, it) in trace.iterations.iter().enumerate() {
            let v = &it.verdict;
            for (&m, &score) in it.surviving.iter().zip(&it.scores) {
                writeln!(
                    out,
                    "{config_hash},{},{},{},{},{k},{m},{},{score},{},{},{},{},{},{},{},{},{}",
                    report.seed,
                    report.round,
                    t.validator,
                    trace.metric.name(),
                    report.poisoned.contains(&m),
                    it.explained_variance_ratio,
                    it.pruned.contains(&m),
                    v.significant,
                    v.t_p,
                    v.levene_p,
                    v.ks_p,
                    v.iqr_outlier,
                    v.three_sigma_outlier,
                    it.aborted
                )?;
            }
        }
    }
    Ok(())
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
