use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiment::ExperimentReport;
use crate::error::{Error, Result};

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes CMC curves, rank-1 matrices, a summary and run metadata. All
/// numbers use fixed precision so identical runs produce identical bytes.
pub fn write_report(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.results.is_empty() {
        return Err(Error::InvalidArgument("no results to report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let tag = |method: &str, variant: usize| {
        if report.variants.len() > 1 {
            format!("{method}_{}", report.variants[variant])
        } else {
            method.to_owned()
        }
    };

    let mut summary = String::from("method,variant,probe_shots,gallery_shots,rank1,rank5,rank10,rank20\n");
    for r in &report.results {
        let mut csv = String::from("rank,match_rate\n");
        for (k, v) in r.mean.rates.iter().enumerate() {
            writeln!(csv, "{},{:.6}", k + 1, v).unwrap();
        }
        let name = format!("cmc_{}_{}v{}.csv", tag(r.method.name(), r.variant), r.probe_shots, r.gallery_shots);
        write(out_dir.join(name), &csv, &mut written)?;
        let c = &r.mean;
        writeln!(
            summary,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.method.name(),
            report.variants[r.variant],
            r.probe_shots,
            r.gallery_shots,
            c.at(1),
            c.at(5),
            c.at(10),
            c.at(20)
        )
        .unwrap();
    }
    write(out_dir.join("summary.csv"), &summary, &mut written)?;

    let mut seen = Vec::new();
    for r in &report.results {
        if seen.contains(&(r.method, r.variant)) {
            continue;
        }
        seen.push((r.method, r.variant));
        let mine: Vec<_> = report.results.iter().filter(|x| x.method == r.method && x.variant == r.variant).collect();
        let rows = mine.iter().map(|x| x.probe_shots).max().unwrap_or(0);
        let cols = mine.iter().map(|x| x.gallery_shots).max().unwrap_or(0);
        let mut csv = String::from("m");
        for n in 1..=cols {
            write!(csv, ",n{n}").unwrap();
        }
        csv.push('\n');
        for m in 1..=rows {
            write!(csv, "{m}").unwrap();
            for n in 1..=cols {
                match mine.iter().find(|x| x.probe_shots == m && x.gallery_shots == n) {
                    Some(x) => write!(csv, ",{:.6}", x.mean.rank1()).unwrap(),
                    None => csv.push(','),
                }
            }
            csv.push('\n');
        }
        write(out_dir.join(format!("rank1_{}.csv", tag(r.method.name(), r.variant))), &csv, &mut written)?;
    }

    let mut meta = String::new();
    writeln!(meta, "format=reid-report-1").unwrap();
    writeln!(meta, "config_hash={}", report.config_hash).unwrap();
    writeln!(meta, "seed={}", report.seed.0).unwrap();
    writeln!(meta, "probe_camera={}", report.probe_camera.0).unwrap();
    writeln!(meta, "gallery_camera={}", report.gallery_camera.0).unwrap();
    writeln!(meta, "variants={}", report.variants.join(";")).unwrap();
    writeln!(meta, "trials={}", report.trials.len()).unwrap();
    for t in &report.trials {
        writeln!(meta, "trial.{}.seed={}", t.trial, t.seed.0).unwrap();
        writeln!(meta, "trial.{}.train_persons={}", t.trial, t.train_persons).unwrap();
        writeln!(meta, "trial.{}.test_persons={}", t.trial, t.test_persons).unwrap();
    }
    write(out_dir.join("metadata.txt"), &meta, &mut written)?;
    Ok(written)
}
