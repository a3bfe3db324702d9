//! Report files written into one directory:
//!
//! - `table.csv`: `variant,split,task,successes,rollouts,rate`, one row per
//!   (variant, split, task) in run order.
//! - `summary.txt`: per-variant split means and the overall mean (mean of
//!   task rates over every task), then the ordering check when all five
//!   variants are present.
//! - `plot_<axis>.csv` for each test axis: `variant,task,x,rate`, where `x`
//!   is the task's mean perturbation magnitude.
//! - `results.jsonl`: the per-episode rows.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, save_results, EpisodeRow, EvalError, ResultsMeta, SplitKind, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub variant: Variant,
    pub split: SplitKind,
    pub task: String,
    pub successes: usize,
    pub rollouts: usize,
    pub rate: f64,
}

/// Success counts per (variant, split, task), in order of first appearance.
pub fn summarize(rows: &[EpisodeRow]) -> Vec<TableRow> {
    let mut out: Vec<TableRow> = vec![];
    for r in rows {
        let pos = out
            .iter()
            .position(|t| t.variant == r.variant && t.split == r.split && t.task == r.task_id);
        let t = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push(TableRow {
                    variant: r.variant,
                    split: r.split,
                    task: r.task_id.clone(),
                    successes: 0,
                    rollouts: 0,
                    rate: 0.0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        t.rollouts += 1;
        t.successes += usize::from(r.success);
    }
    for t in &mut out {
        t.rate = t.successes as f64 / t.rollouts as f64;
    }
    out
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Mean task rate of `variant`, over `split` or over every task.
pub fn variant_mean(table: &[TableRow], variant: Variant, split: Option<SplitKind>) -> Option<f64> {
    mean(
        table
            .iter()
            .filter(|t| t.variant == variant && split.is_none_or(|s| t.split == s))
            .map(|t| t.rate),
    )
}

/// `complete > regular_skill > max(heatmap, no_canonicalization, action)`;
/// `None` unless all five variants are present.
pub fn ordering_holds(table: &[TableRow]) -> Option<bool> {
    let m = |v| variant_mean(table, v, None);
    let c = m(Variant::Complete)?;
    let r = m(Variant::RegularSkill)?;
    let rest = m(Variant::HeatmapInterface)?
        .max(m(Variant::NoCanonicalization)?)
        .max(m(Variant::ActionInterface)?);
    Some(c > r && r > rest)
}

fn summary_text(table: &[TableRow]) -> String {
    let mut variants: Vec<Variant> = vec![];
    for t in table {
        if !variants.contains(&t.variant) {
            variants.push(t.variant);
        }
    }
    let mut s = String::new();
    let _ = write!(s, "{:<20}", "variant");
    for k in SplitKind::ALL {
        let _ = write!(s, " {:>13}", k.token());
    }
    let _ = writeln!(s, " {:>13}", "mean");
    let cell = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    for v in &variants {
        let _ = write!(s, "{:<20}", v.token());
        for k in SplitKind::ALL {
            let _ = write!(s, " {:>13}", cell(variant_mean(table, *v, Some(*k))));
        }
        let _ = writeln!(s, " {:>13}", cell(variant_mean(table, *v, None)));
    }
    if let Some(ok) = ordering_holds(table) {
        let _ = writeln!(
            s,
            "ordering complete > regular_skill > max(heatmap_interface, no_canonicalization, action_interface): {}",
            if ok { "pass" } else { "fail" }
        );
        let m = |v| variant_mean(table, v, None).unwrap_or(0.0);
        let c = m(Variant::Complete);
        let _ = writeln!(
            s,
            "gap complete - no_canonicalization: {:.4}",
            c - m(Variant::NoCanonicalization)
        );
        let _ = writeln!(
            s,
            "gap complete - regular_skill: {:.4}",
            c - m(Variant::RegularSkill)
        );
    }
    s
}

fn table_csv(table: &[TableRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(vec![]);
    for t in table {
        w.serialize(t)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

#[derive(Serialize)]
struct PlotRow<'a> {
    variant: Variant,
    task: &'a str,
    x: f64,
    rate: f64,
}

fn plot_csv(
    table: &[TableRow],
    rows: &[EpisodeRow],
    axis: SplitKind,
) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(vec![]);
    w.write_record(["variant", "task", "x", "rate"])?;
    for t in table.iter().filter(|t| t.split == axis) {
        let x = mean(
            rows.iter()
                .filter(|r| r.variant == t.variant && r.split == axis && r.task_id == t.task)
                .map(|r| r.magnitude),
        )
        .unwrap_or(0.0);
        w.serialize(PlotRow {
            variant: t.variant,
            task: &t.task,
            x,
            rate: t.rate,
        })?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn write_report(
    dir: &Path,
    meta: &ResultsMeta,
    rows: &[EpisodeRow],
) -> Result<Vec<TableRow>, EvalError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    let table = summarize(rows);
    let csv_err = |p: &Path, e: csv::Error| EvalError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let p = dir.join("table.csv");
    let bytes = table_csv(&table).map_err(|e| csv_err(&p, e))?;
    std::fs::write(&p, bytes).map_err(io_error(&p))?;
    let p = dir.join("summary.txt");
    std::fs::write(&p, summary_text(&table)).map_err(io_error(&p))?;
    for axis in &SplitKind::ALL[1..] {
        let p = dir.join(format!("plot_{}.csv", axis.token()));
        let bytes = plot_csv(&table, rows, *axis).map_err(|e| csv_err(&p, e))?;
        std::fs::write(&p, bytes).map_err(io_error(&p))?;
    }
    save_results(&dir.join("results.jsonl"), meta, rows)?;
    Ok(table)
}

pub fn read_table(path: &Path) -> Result<Vec<TableRow>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let headers = r
        .headers()
        .map_err(|e| EvalError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>()
        != ["variant", "split", "task", "successes", "rollouts", "rate"]
    {
        return Err(EvalError::Parse {
            line: 1,
            message: format!("unexpected columns {headers:?}"),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| EvalError::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: Variant, task: &str, success: bool) -> TableRow {
        TableRow {
            variant,
            split: SplitKind::Train,
            task: task.into(),
            successes: usize::from(success),
            rollouts: 1,
            rate: if success { 1.0 } else { 0.0 },
        }
    }

    #[test]
    fn ordering_needs_all_variants() {
        assert_eq!(ordering_holds(&[row(Variant::Complete, "a", true)]), None);
        let t: Vec<TableRow> = vec![
            row(Variant::Complete, "a", true),
            row(Variant::Complete, "b", true),
            row(Variant::RegularSkill, "a", true),
            row(Variant::RegularSkill, "b", false),
            row(Variant::NoCanonicalization, "a", false),
            row(Variant::ActionInterface, "a", false),
            row(Variant::HeatmapInterface, "a", false),
        ];
        assert_eq!(ordering_holds(&t), Some(true));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = vec![
            TableRow {
                rate: 1.0 / 3.0,
                successes: 1,
                rollouts: 3,
                ..row(Variant::HeatmapInterface, "x,y", true)
            },
            row(Variant::Complete, "b", false),
        ];
        let p = dir.path().join("t.csv");
        std::fs::write(&p, table_csv(&t).unwrap()).unwrap();
        assert_eq!(read_table(&p).unwrap(), t);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("variant,split,task,successes,rollouts,rate\n"));
    }
}
