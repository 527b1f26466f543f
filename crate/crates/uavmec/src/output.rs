//! Machine-readable run outputs: per-step metrics CSV, experiment summary
//! table, and a self-describing per-window snapshot format with a parser.
//!
//! All numbers are written with Rust's shortest round-trip `f64` formatting,
//! so emitted files parse back to bit-identical values and identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{run, Approach, Metrics, SimConfig, SimError, Snapshot};
use crate::geometry::{Grid, Region};
use crate::taskfield::GridField;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("run failed for approach {approach} seed {seed}: {source}")]
    Run {
        approach: &'static str,
        seed: u64,
        #[source]
        source: SimError,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    std::fs::write(path, contents).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-step metrics CSV: step_index, time_s, one processed-bits column per
/// MCA, and the total queued bits across MSAs.
pub fn metrics_csv(metrics: &Metrics, num_mcas: usize) -> String {
    let mut out = String::from("step_index,time_s");
    for m in 0..num_mcas {
        write!(out, ",processed_bits_mca_{m}").unwrap();
    }
    out.push_str(",total_queued_bits\n");
    for step in &metrics.steps {
        write!(out, "{},{}", step.step, step.time).unwrap();
        for p in &step.processed {
            write!(out, ",{p}").unwrap();
        }
        writeln!(out, ",{}", step.total_queued).unwrap();
    }
    out
}

/// Per-iteration optimizer diagnostics CSV; absent quantities stay blank
/// (objective/disagreement are rate-max only, imbalance is balance only).
pub fn optimizer_csv(metrics: &Metrics) -> String {
    let mut out = String::from("window,algorithm,iteration,objective,disagreement,imbalance\n");
    let blank = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for rec in &metrics.optimizer {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            rec.window,
            rec.algorithm,
            rec.iteration,
            blank(rec.objective),
            blank(rec.disagreement),
            blank(rec.imbalance)
        )
        .unwrap();
    }
    out
}

/// One line of the experiment summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub approach: Approach,
    pub delta: f64,
    /// Seed-averaged totals, bits.
    pub cold_total: f64,
    pub warm_total: f64,
    /// Warm-start percent increase over Baseline; blank without a Baseline.
    pub pct_increase: Option<f64>,
}

/// Summary CSV matching the layout of the reference result tables:
/// approach, window length, cold/warm totals, and "% inc." over Baseline.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("approach,delta_s,cold_total_bits,warm_total_bits,pct_increase\n");
    for row in rows {
        let pct = row.pct_increase.map_or(String::new(), |p| p.to_string());
        writeln!(
            out,
            "{},{},{},{},{}",
            row.approach.name(),
            row.delta,
            row.cold_total,
            row.warm_total,
            pct
        )
        .unwrap();
    }
    out
}

fn field_block(out: &mut String, field: &GridField, grid: &Grid) {
    for iy in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx)
            .map(|ix| field.values[grid.index(ix, iy)].to_string())
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

/// Self-describing snapshot text: header (window, grid, region, M),
/// row-major field blocks at full precision, position list, owner map.
pub fn emit_snapshot(snapshot: &Snapshot) -> String {
    let grid = &snapshot.truth.grid;
    let r = &grid.region;
    let mut out = String::new();
    writeln!(out, "window {}", snapshot.window).unwrap();
    writeln!(out, "grid {} {} {}", grid.nx, grid.ny, grid.cell).unwrap();
    writeln!(
        out,
        "region {} {} {} {} {} {}",
        r.x_min, r.x_max, r.y_min, r.y_max, r.h_s, r.h_c
    )
    .unwrap();
    writeln!(out, "mcas {}", snapshot.mca_positions.len()).unwrap();
    out.push_str("positions\n");
    for p in &snapshot.mca_positions {
        writeln!(out, "{} {}", p.x, p.y).unwrap();
    }
    out.push_str("owner\n");
    for iy in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx)
            .map(|ix| snapshot.owner[grid.index(ix, iy)].to_string())
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    match &snapshot.estimated {
        Some(field) => {
            out.push_str("estimated\n");
            field_block(&mut out, field, grid);
        }
        None => out.push_str("estimated none\n"),
    }
    out.push_str("truth\n");
    field_block(&mut out, &snapshot.truth, grid);
    out.push_str("end\n");
    out
}

struct SnapshotLines<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> SnapshotLines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), OutputError> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or(OutputError::Parse { line: 0, message: "unexpected end of snapshot".into() })
    }

    fn expect_tag(&mut self, tag: &str) -> Result<(usize, Vec<String>), OutputError> {
        let (n, line) = self.next()?;
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != tag {
            return Err(OutputError::Parse {
                line: n,
                message: format!("expected '{tag}', found '{head}'"),
            });
        }
        Ok((n, parts.map(str::to_string).collect()))
    }
}

fn parse_nums<T: std::str::FromStr>(items: &[String], line: usize) -> Result<Vec<T>, OutputError> {
    items
        .iter()
        .map(|s| {
            s.parse().map_err(|_| OutputError::Parse {
                line,
                message: format!("bad number '{s}'"),
            })
        })
        .collect()
}

fn parse_grid_block<T: std::str::FromStr + Copy>(
    lines: &mut SnapshotLines,
    grid: &Grid,
) -> Result<Vec<T>, OutputError> {
    let mut values = vec![None; grid.num_cells()];
    for iy in 0..grid.ny {
        let (n, line) = lines.next()?;
        let row: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if row.len() != grid.nx {
            return Err(OutputError::Parse {
                line: n,
                message: format!("expected {} columns, found {}", grid.nx, row.len()),
            });
        }
        for (ix, v) in parse_nums::<T>(&row, n)?.into_iter().enumerate() {
            values[grid.index(ix, iy)] = Some(v);
        }
    }
    Ok(values.into_iter().map(|v| v.unwrap()).collect())
}

/// Parse a snapshot emitted by [`emit_snapshot`]; round-trips exactly.
pub fn parse_snapshot(text: &str) -> Result<Snapshot, OutputError> {
    let mut lines = SnapshotLines { lines: text.lines().enumerate() };
    let (n, args) = lines.expect_tag("window")?;
    let window: usize = parse_nums(&args, n)?.pop().ok_or(OutputError::Parse {
        line: n,
        message: "missing window index".into(),
    })?;
    let (n, args) = lines.expect_tag("grid")?;
    if args.len() != 3 {
        return Err(OutputError::Parse { line: n, message: "grid needs nx ny cell".into() });
    }
    let nx: usize = parse_nums(&args[..1], n)?[0];
    let ny: usize = parse_nums(&args[1..2], n)?[0];
    let cell: f64 = parse_nums(&args[2..], n)?[0];
    let (n, args) = lines.expect_tag("region")?;
    let bounds: Vec<f64> = parse_nums(&args, n)?;
    if bounds.len() != 6 {
        return Err(OutputError::Parse { line: n, message: "region needs 6 bounds".into() });
    }
    let region = Region::new(bounds[0], bounds[1], bounds[2], bounds[3], bounds[4], bounds[5])
        .map_err(|e| OutputError::Parse { line: n, message: e.to_string() })?;
    let grid = Grid::new(region, cell)
        .map_err(|e| OutputError::Parse { line: n, message: e.to_string() })?;
    if grid.nx != nx || grid.ny != ny {
        return Err(OutputError::Parse {
            line: n,
            message: format!("grid dims {}x{} inconsistent with region/cell", nx, ny),
        });
    }
    let (n, args) = lines.expect_tag("mcas")?;
    let m: usize = parse_nums(&args, n)?.pop().ok_or(OutputError::Parse {
        line: n,
        message: "missing MCA count".into(),
    })?;
    lines.expect_tag("positions")?;
    let mut positions = Vec::with_capacity(m);
    for _ in 0..m {
        let (n, line) = lines.next()?;
        let parts: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        let xy: Vec<f64> = parse_nums(&parts, n)?;
        if xy.len() != 2 {
            return Err(OutputError::Parse { line: n, message: "position needs x y".into() });
        }
        positions.push(Vec2::new(xy[0], xy[1]));
    }
    lines.expect_tag("owner")?;
    let owner: Vec<usize> = parse_grid_block(&mut lines, &grid)?;
    let (n, args) = lines.expect_tag("estimated")?;
    let estimated = if args.first().map(String::as_str) == Some("none") {
        None
    } else if args.is_empty() {
        let values: Vec<f64> = parse_grid_block(&mut lines, &grid)?;
        Some(GridField::new(grid.clone(), values).map_err(|e| OutputError::Parse {
            line: n,
            message: e.to_string(),
        })?)
    } else {
        return Err(OutputError::Parse { line: n, message: "bad estimated header".into() });
    };
    lines.expect_tag("truth")?;
    let values: Vec<f64> = parse_grid_block(&mut lines, &grid)?;
    let truth = GridField::new(grid, values)
        .map_err(|e| OutputError::Parse { line: 0, message: e.to_string() })?;
    lines.expect_tag("end")?;
    Ok(Snapshot { window, estimated, truth, mca_positions: positions, owner })
}

/// Outcome of one experiment batch.
#[derive(Debug)]
pub struct ExperimentResult {
    pub summary: Vec<SummaryRow>,
    pub metrics_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
}

/// Run `repetitions` seeded repetitions of each approach, write one metrics
/// file and one snapshots file per run plus a summary table, and return the
/// seed-averaged summary. Seeds are `seed_base + repetition`, shared across
/// approaches so comparisons are paired.
pub fn run_experiment(
    base: &SimConfig,
    approaches: &[Approach],
    repetitions: usize,
    seed_base: u64,
    out_dir: &Path,
) -> Result<ExperimentResult, OutputError> {
    std::fs::create_dir_all(out_dir).map_err(|source| OutputError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut metrics_files = Vec::new();
    let mut summary = Vec::new();
    let mut baseline_warm: Option<f64> = None;
    for &approach in approaches {
        let mut cold_sum = 0.0;
        let mut warm_sum = 0.0;
        for rep in 0..repetitions {
            let mut config = base.clone();
            config.approach = approach;
            config.seed = seed_base + rep as u64;
            let (metrics, snapshots) = run(config.clone()).map_err(|source| OutputError::Run {
                approach: approach.name(),
                seed: config.seed,
                source,
            })?;
            let metrics_path =
                out_dir.join(format!("metrics_{}_rep{}.csv", approach.name(), rep));
            write_file(&metrics_path, &metrics_csv(&metrics, config.capacities.len()))?;
            metrics_files.push(metrics_path);
            let snap_text: String = snapshots.iter().map(emit_snapshot).collect();
            write_file(
                &out_dir.join(format!("snapshots_{}_rep{}.txt", approach.name(), rep)),
                &snap_text,
            )?;
            write_file(
                &out_dir.join(format!("optimizer_{}_rep{}.csv", approach.name(), rep)),
                &optimizer_csv(&metrics),
            )?;
            cold_sum += metrics.cold_total;
            warm_sum += metrics.warm_total;
        }
        let cold = cold_sum / repetitions as f64;
        let warm = warm_sum / repetitions as f64;
        if approach == Approach::Baseline {
            baseline_warm = Some(warm);
        }
        let pct_increase = match (approach, baseline_warm) {
            (Approach::Baseline, _) => None,
            (_, Some(b)) if b > 0.0 => Some((warm - b) / b * 100.0),
            _ => None,
        };
        summary.push(SummaryRow {
            approach,
            delta: base.delta,
            cold_total: cold,
            warm_total: warm,
            pct_increase,
        });
    }
    let summary_file = out_dir.join("summary.csv");
    write_file(&summary_file, &summary_csv(&summary))?;
    Ok(ExperimentResult { summary, metrics_files, summary_file })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Metrics, StepRecord};

    fn sample_snapshot(with_estimate: bool) -> Snapshot {
        let region = Region::square(100.0, 50.0, 100.0).unwrap();
        let grid = Grid::new(region, 25.0).unwrap();
        let cells = grid.num_cells();
        let truth =
            GridField::new(grid.clone(), (0..cells).map(|i| i as f64 * 0.125 + 0.1).collect())
                .unwrap();
        let estimated = with_estimate.then(|| {
            GridField::new(grid.clone(), (0..cells).map(|i| (i as f64).sqrt()).collect()).unwrap()
        });
        Snapshot {
            window: 3,
            estimated,
            truth,
            mca_positions: vec![Vec2::new(12.5, 37.5), Vec2::new(62.5, 87.5)],
            owner: (0..cells).map(|i| i % 2).collect(),
        }
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        for with_estimate in [true, false] {
            let snap = sample_snapshot(with_estimate);
            let parsed = parse_snapshot(&emit_snapshot(&snap)).unwrap();
            assert_eq!(snap, parsed);
        }
    }

    #[test]
    fn zero_field_emits_all_zero_block() {
        let mut snap = sample_snapshot(false);
        let zeros = vec![0.0; snap.truth.grid.num_cells()];
        snap.truth = GridField::new(snap.truth.grid.clone(), zeros).unwrap();
        let text = emit_snapshot(&snap);
        let truth_block = text.split("truth\n").nth(1).unwrap();
        for token in truth_block.split_whitespace().take_while(|t| *t != "end") {
            assert_eq!(token, "0");
        }
    }

    #[test]
    fn truncated_snapshot_is_a_parse_error() {
        let text = emit_snapshot(&sample_snapshot(true));
        let cut = &text[..text.len() / 2];
        assert!(matches!(parse_snapshot(cut), Err(OutputError::Parse { .. })));
    }

    #[test]
    fn metrics_csv_has_one_column_per_mca() {
        let metrics = Metrics {
            steps: vec![StepRecord {
                step: 0,
                time: 0.1,
                processed: vec![1.5, 2.5, 0.0],
                total_queued: 10.25,
            }],
            ..Default::default()
        };
        let csv = metrics_csv(&metrics, 3);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step_index,time_s,processed_bits_mca_0,processed_bits_mca_1,processed_bits_mca_2,total_queued_bits"
        );
        assert_eq!(lines.next().unwrap(), "0,0.1,1.5,2.5,0,10.25");
    }

    #[test]
    fn optimizer_csv_blanks_inapplicable_columns() {
        let metrics = Metrics {
            optimizer: vec![
                crate::engine::OptimizerRecord {
                    window: 1,
                    algorithm: "ratemax",
                    iteration: 0,
                    objective: Some(2.5),
                    disagreement: Some(0.125),
                    imbalance: None,
                },
                crate::engine::OptimizerRecord {
                    window: 1,
                    algorithm: "balance",
                    iteration: 0,
                    objective: None,
                    disagreement: None,
                    imbalance: Some(0.75),
                },
            ],
            ..Default::default()
        };
        let csv = optimizer_csv(&metrics);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "window,algorithm,iteration,objective,disagreement,imbalance"
        );
        assert_eq!(lines.next().unwrap(), "1,ratemax,0,2.5,0.125,");
        assert_eq!(lines.next().unwrap(), "1,balance,0,,,0.75");
    }

    #[test]
    fn summary_pct_column_blank_without_baseline() {
        let rows = vec![SummaryRow {
            approach: Approach::Full,
            delta: 10.0,
            cold_total: 5.0,
            warm_total: 4.0,
            pct_increase: None,
        }];
        let csv = summary_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }
}
