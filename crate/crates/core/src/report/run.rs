use std::collections::BTreeMap;

use serde::Serialize;

use super::config::{ExperimentConfig, Format, RunMode};
use super::{csv, json, Report};
use crate::bound::{bound_schedule, BoundSummary};
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{critical_path, DependencyGraph};
use crate::hash::Mixer;
use crate::occsim::{
    determinism_probe, run_occ_classic_with, run_occ_da, run_occ_det_commit, JitterTiming, ProbeReport, RunSummary,
};
use crate::stats::{mean, overall_speedup, Histogram};
use crate::transforms::{apply_graph_steps, apply_workload_steps};
use crate::graph::build_graph;
use crate::workload::{emit_trace, TxId, Workload};

/// One workload after one variant's transform chain.
struct Prepared {
    index: usize,
    name: String,
    variant: String,
    workload: Workload,
    graph: DependencyGraph,
    has_graph_steps: bool,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Vec<Prepared>> {
    cfg.validate()?;
    let corpus = cfg.load_corpus()?;
    if corpus.is_empty() {
        return Err(Error::validation("corpus is empty"));
    }
    let variants = cfg.variants();
    let mode = cfg.conflict_mode();
    let cells = exec::map_range(cfg.strategy, corpus.len(), |index| {
        let (name, w) = &corpus[index];
        variants
            .iter()
            .map(|v| {
                let workload = apply_workload_steps(w, &v.transforms)?;
                let graph = apply_graph_steps(&build_graph(&workload, mode), &v.transforms);
                Ok(Prepared {
                    index,
                    name: name.clone(),
                    variant: v.name.clone(),
                    workload,
                    graph,
                    has_graph_steps: v.transforms.iter().any(|s| s.op.is_graph_step()),
                })
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::new();
    for cell in cells {
        out.extend(cell?);
    }
    Ok(out)
}

fn variant_order(cells: &[Prepared]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for c in cells {
        if !names.contains(&c.variant) {
            names.push(c.variant.clone());
        }
    }
    names
}

/// Speedup statistics over the workloads of one (variant, threads) series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub variant: String,
    pub threads: usize,
    pub workloads: usize,
    pub mean_speedup: f64,
    pub min_speedup: f64,
    pub max_speedup: f64,
    pub overall_speedup: f64,
    pub serial_total: u64,
    pub makespan_total: u64,
}

impl Aggregate {
    fn of(variant: &str, threads: usize, runs: &[(u64, u64, f64)]) -> Self {
        let speedups: Vec<f64> = runs.iter().map(|r| r.2).collect();
        Aggregate {
            variant: variant.to_owned(),
            threads,
            workloads: runs.len(),
            mean_speedup: mean(&speedups),
            min_speedup: speedups.iter().copied().fold(f64::INFINITY, f64::min),
            max_speedup: speedups.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            overall_speedup: overall_speedup(runs.iter().map(|r| (r.0, r.1))),
            serial_total: runs.iter().map(|r| r.0).sum(),
            makespan_total: runs.iter().map(|r| r.1).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreadBound {
    pub threads: usize,
    pub makespan: u64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeRow {
    pub name: String,
    pub variant: String,
    pub n: usize,
    pub edges: usize,
    pub serial: u64,
    pub critical_weight: u64,
    pub critical_path: Vec<TxId>,
    pub bounds: Vec<ThreadBound>,
}

#[derive(Serialize)]
struct AnalyzeCsvRow<'a> {
    name: &'a str,
    variant: &'a str,
    threads: usize,
    n: usize,
    edges: usize,
    serial: u64,
    critical_weight: u64,
    makespan: u64,
    speedup: f64,
    critical_path: String,
}

fn aggregates<'a>(
    order: &[String],
    threads: &[usize],
    rows: impl Iterator<Item = (&'a str, usize, u64, u64, f64)>,
) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, usize), Vec<(u64, u64, f64)>> = BTreeMap::new();
    for (variant, t, serial, makespan, speedup) in rows {
        let vi = order.iter().position(|v| v == variant).expect("known variant");
        let ti = threads.iter().position(|&x| x == t).expect("known thread count");
        groups.entry((vi, ti)).or_default().push((serial, makespan, speedup));
    }
    groups
        .into_iter()
        .map(|((vi, ti), runs)| Aggregate::of(&order[vi], threads[ti], &runs))
        .collect()
}

fn bound_rows(cfg: &ExperimentConfig, cells: &[Prepared]) -> Result<Vec<(AnalyzeRow, Vec<BoundSummary>)>> {
    let results = exec::map(cfg.strategy, cells, |c| {
        let path = critical_path(&c.graph);
        let mut bounds = Vec::with_capacity(cfg.threads.len());
        let mut summaries = Vec::with_capacity(cfg.threads.len());
        for &t in &cfg.threads {
            let r = bound_schedule(&c.graph, t)?;
            // the arithmetic ceiling every bound must respect
            if r.makespan < path.critical_weight || r.makespan * (t as u64) < r.serial_cost {
                return Err(Error::Invariant(format!(
                    "{} [{}] on {t} threads: makespan {} below critical weight {} or serial/threads",
                    c.name, c.variant, r.makespan, path.critical_weight
                )));
            }
            bounds.push(ThreadBound {
                threads: t,
                makespan: r.makespan,
                speedup: r.speedup,
            });
            summaries.push(r.summary(true));
        }
        Ok((
            AnalyzeRow {
                name: c.name.clone(),
                variant: c.variant.clone(),
                n: c.graph.len(),
                edges: c.graph.edge_count(),
                serial: path.total_weight,
                critical_weight: path.critical_weight,
                critical_path: path.critical_path,
                bounds,
            },
            summaries,
        ))
    });
    results.into_iter().collect()
}

fn bound_aggregates(cfg: &ExperimentConfig, cells: &[Prepared], rows: &[AnalyzeRow]) -> Vec<Aggregate> {
    aggregates(
        &variant_order(cells),
        &cfg.threads,
        rows.iter().flat_map(|r| {
            r.bounds
                .iter()
                .map(move |b| (r.variant.as_str(), b.threads, r.serial, b.makespan, b.speedup))
        }),
    )
}

/// Per-workload critical path and bound speedups, plus per-series aggregates.
pub fn analyze(cfg: &ExperimentConfig) -> Result<Report> {
    let cells = prepare(cfg)?;
    let rows: Vec<AnalyzeRow> = bound_rows(cfg, &cells)?.into_iter().map(|(r, _)| r).collect();
    let aggs = bound_aggregates(cfg, &cells, &rows);
    let mut report = Report::default();
    match cfg.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                workloads: &'a [AnalyzeRow],
                aggregates: &'a [Aggregate],
            }
            report.push(
                "analyze.json",
                json(&Doc {
                    workloads: &rows,
                    aggregates: &aggs,
                }),
            );
        }
        Format::Csv => {
            let flat = rows.iter().flat_map(|r| {
                let path = r.critical_path.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ");
                r.bounds.iter().map(move |b| AnalyzeCsvRow {
                    name: &r.name,
                    variant: &r.variant,
                    threads: b.threads,
                    n: r.n,
                    edges: r.edges,
                    serial: r.serial,
                    critical_weight: r.critical_weight,
                    makespan: b.makespan,
                    speedup: b.speedup,
                    critical_path: path.clone(),
                })
            });
            report.push("analyze.csv", csv(flat)?);
            report.push("analyze_aggregate.csv", csv(&aggs)?);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub name: String,
    pub variant: String,
    pub result: BoundSummary,
}

#[derive(Serialize)]
struct TimelineCsvRow<'a> {
    name: &'a str,
    variant: &'a str,
    threads: usize,
    thread: usize,
    tx: TxId,
    start: u64,
    end: u64,
}

/// Bound schedules with full timelines.
pub fn bound(cfg: &ExperimentConfig) -> Result<Report> {
    let cells = prepare(cfg)?;
    let both = bound_rows(cfg, &cells)?;
    let rows: Vec<AnalyzeRow> = both.iter().map(|(r, _)| r.clone()).collect();
    let aggs = bound_aggregates(cfg, &cells, &rows);
    let runs: Vec<BoundRow> = both
        .into_iter()
        .flat_map(|(r, sums)| {
            sums.into_iter().map(move |s| BoundRow {
                name: r.name.clone(),
                variant: r.variant.clone(),
                result: s,
            })
        })
        .collect();
    let mut report = Report::default();
    match cfg.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                runs: &'a [BoundRow],
                aggregates: &'a [Aggregate],
            }
            report.push(
                "bound.json",
                json(&Doc {
                    runs: &runs,
                    aggregates: &aggs,
                }),
            );
        }
        Format::Csv => {
            let flat = runs.iter().flat_map(|r| {
                let timeline = r.result.timeline.as_deref().unwrap_or(&[]);
                timeline.iter().enumerate().flat_map(move |(thread, slots)| {
                    slots.iter().map(move |s| TimelineCsvRow {
                        name: &r.name,
                        variant: &r.variant,
                        threads: r.result.threads,
                        thread,
                        tx: s.tx,
                        start: s.start,
                        end: s.end,
                    })
                })
            });
            report.push("bound_timeline.csv", csv(flat)?);
            report.push("bound_aggregate.csv", csv(&aggs)?);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub name: String,
    pub variant: String,
    pub threads: usize,
    pub mode: &'static str,
    pub makespan: u64,
    pub serial: u64,
    pub speedup: f64,
    pub aborts: usize,
    pub wasted_gas: u64,
}

#[derive(Serialize)]
struct SimJson<'a> {
    #[serde(flatten)]
    row: &'a SimRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<&'a RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimAggregate {
    pub variant: String,
    pub threads: usize,
    pub mode: &'static str,
    pub runs: usize,
    pub mean_speedup: f64,
    pub min_speedup: f64,
    pub max_speedup: f64,
    pub overall_speedup: f64,
    pub aborts: usize,
    pub wasted_gas: u64,
    /// Share of workloads whose makespan equals the baseline's exactly.
    pub identical_fraction: Option<f64>,
}

fn classic_seed(cfg: &ExperimentConfig, index: usize, threads: usize) -> u64 {
    Mixer::new()
        .u64(cfg.seed)
        .u64(index as u64)
        .u64(threads as u64)
        .bytes(b"occ-classic")
        .finish()
}

fn run_one(cfg: &ExperimentConfig, mode: RunMode, c: &Prepared, threads: usize) -> Result<(SimRow, Option<RunSummary>)> {
    let w = &c.workload;
    let conflict = cfg.conflict_mode();
    let run = match mode {
        RunMode::Bound => None,
        // random interleaving, exact gas durations, so speedups stay in gas units
        RunMode::OccClassic => Some(run_occ_classic_with(
            w,
            threads,
            &mut JitterTiming::with_spread(classic_seed(cfg, c.index, threads), 0.0),
        )?),
        RunMode::OccDetCommit => Some(run_occ_det_commit(w, threads, conflict)?),
        RunMode::OccDa => Some(run_occ_da(w, threads, &cfg.policy.build(&c.graph), conflict)?),
    };
    let row = |makespan: u64, speedup: f64, aborts: usize, wasted_gas: u64| SimRow {
        name: c.name.clone(),
        variant: c.variant.clone(),
        threads,
        mode: mode.name(),
        makespan,
        serial: w.serial_gas(),
        speedup,
        aborts,
        wasted_gas,
    };
    Ok(match run {
        None => {
            let b = bound_schedule(&c.graph, threads)?;
            (row(b.makespan, b.speedup, 0, 0), None)
        }
        Some(r) => (row(r.makespan, r.speedup, r.abort_count(), r.wasted_gas), Some(r.summary())),
    })
}

fn sim_aggregates(cfg: &ExperimentConfig, cells: &[Prepared], rows: &[SimRow], modes: &[RunMode]) -> Vec<SimAggregate> {
    let order = variant_order(cells);
    let mut out = Vec::new();
    for variant in &order {
        for &t in &cfg.threads {
            let series: Vec<Vec<&SimRow>> = modes
                .iter()
                .map(|m| {
                    rows.iter()
                        .filter(|r| &r.variant == variant && r.threads == t && r.mode == m.name())
                        .collect()
                })
                .collect();
            for (mi, runs) in series.iter().enumerate() {
                let speedups: Vec<f64> = runs.iter().map(|r| r.speedup).collect();
                let identical_fraction = (mi == 0 && modes.len() > 1).then(|| {
                    let same = runs
                        .iter()
                        .zip(&series[1])
                        .filter(|(a, b)| a.makespan == b.makespan)
                        .count();
                    same as f64 / runs.len().max(1) as f64
                });
                out.push(SimAggregate {
                    variant: variant.clone(),
                    threads: t,
                    mode: modes[mi].name(),
                    runs: runs.len(),
                    mean_speedup: mean(&speedups),
                    min_speedup: speedups.iter().copied().fold(f64::INFINITY, f64::min),
                    max_speedup: speedups.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    overall_speedup: overall_speedup(runs.iter().map(|r| (r.serial, r.makespan))),
                    aborts: runs.iter().map(|r| r.aborts).sum(),
                    wasted_gas: runs.iter().map(|r| r.wasted_gas).sum(),
                    identical_fraction,
                });
            }
        }
    }
    out
}

fn sim_modes(cfg: &ExperimentConfig) -> Vec<RunMode> {
    let mut modes = vec![cfg.mode];
    if let Some(b) = cfg.baseline {
        if b != cfg.mode {
            modes.push(b);
        }
    }
    modes
}

fn simulate_rows(cfg: &ExperimentConfig, cells: &[Prepared], modes: &[RunMode]) -> Result<Vec<(SimRow, Option<RunSummary>)>> {
    let per_cell = exec::map(cfg.strategy, cells, |c| {
        let mut out = Vec::new();
        for &t in &cfg.threads {
            for &m in modes {
                out.push(run_one(cfg, m, c, t)?);
            }
        }
        Ok(out)
    });
    let mut rows = Vec::new();
    for cell in per_cell {
        rows.extend(cell?);
    }
    Ok(rows)
}

/// Runs the configured scheduler (and the baseline, if any) on every
/// workload and thread count.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Report> {
    let cells = prepare(cfg)?;
    let modes = sim_modes(cfg);
    let rows = simulate_rows(cfg, &cells, &modes)?;
    let plain: Vec<SimRow> = rows.iter().map(|(r, _)| r.clone()).collect();
    let aggs = sim_aggregates(cfg, &cells, &plain, &modes);
    let mut report = Report::default();
    match cfg.format {
        Format::Json => {
            let runs: Vec<SimJson> = rows
                .iter()
                .map(|(row, run)| SimJson { row, run: run.as_ref() })
                .collect();
            report.push("simulate_runs.json", json(&runs));
        }
        Format::Csv => report.push("simulate_runs.csv", csv(&plain)?),
    }
    report.push("simulate_aggregate.csv", csv(&aggs)?);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub name: String,
    pub variant: String,
    pub threads: usize,
    pub trials: usize,
    pub occ_da_deterministic: bool,
    pub occ_da_patterns: usize,
    pub det_commit_deterministic: bool,
    pub det_commit_patterns: usize,
    pub serial_equivalent: bool,
    pub passed: bool,
}

#[derive(Serialize)]
struct ProbeJson<'a> {
    #[serde(flatten)]
    row: &'a ProbeRow,
    report: &'a ProbeReport,
}

fn probe_seed(cfg: &ExperimentConfig, index: usize, threads: usize) -> u64 {
    Mixer::new()
        .u64(cfg.seed)
        .u64(index as u64)
        .u64(threads as u64)
        .bytes(b"probe")
        .finish()
}

/// Determinism probe on every workload and thread count. Failing cells are
/// listed in [`Report::failures`].
pub fn probe(cfg: &ExperimentConfig) -> Result<Report> {
    let cells = prepare(cfg)?;
    let per_cell = exec::map(cfg.strategy, &cells, |c| {
        let policy = cfg.policy.build(&c.graph);
        cfg.threads
            .iter()
            .map(|&t| {
                let r = determinism_probe(
                    &c.workload,
                    t,
                    &policy,
                    cfg.conflict_mode(),
                    cfg.trials,
                    probe_seed(cfg, c.index, t),
                )?;
                let row = ProbeRow {
                    name: c.name.clone(),
                    variant: c.variant.clone(),
                    threads: t,
                    trials: r.trials,
                    occ_da_deterministic: r.occ_da.deterministic,
                    occ_da_patterns: r.occ_da.distinct_patterns,
                    det_commit_deterministic: r.det_commit.deterministic,
                    det_commit_patterns: r.det_commit.distinct_patterns,
                    serial_equivalent: r.occ_da.serial_equivalent && r.det_commit.serial_equivalent,
                    passed: r.passed(),
                };
                Ok((row, r))
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut rows = Vec::new();
    for cell in per_cell {
        rows.extend(cell?);
    }
    let mut report = Report::default();
    for (row, _) in &rows {
        if !row.passed {
            report
                .failures
                .push(format!("probe failed for {} [{}] on {} threads", row.name, row.variant, row.threads));
        }
    }
    match cfg.format {
        Format::Json => {
            let docs: Vec<ProbeJson> = rows.iter().map(|(row, report)| ProbeJson { row, report }).collect();
            report.push("probe.json", json(&docs));
        }
        Format::Csv => report.push("probe.csv", csv(rows.iter().map(|(r, _)| r))?),
    }
    Ok(report)
}

/// Speedup distribution, one series per (variant, thread count), all
/// series sharing the same bucket edges over `[0, max threads]`.
pub fn histogram(cfg: &ExperimentConfig) -> Result<Report> {
    let cells = prepare(cfg)?;
    let series_speedups: Vec<(String, usize, Vec<f64>)> = {
        let rows: Vec<(String, usize, f64)> = if cfg.mode == RunMode::Bound {
            bound_rows(cfg, &cells)?
                .into_iter()
                .flat_map(|(r, _)| {
                    let variant = r.variant;
                    r.bounds.into_iter().map(move |b| (variant.clone(), b.threads, b.speedup))
                })
                .collect()
        } else {
            simulate_rows(cfg, &cells, &[cfg.mode])?
                .into_iter()
                .map(|(r, _)| (r.variant, r.threads, r.speedup))
                .collect()
        };
        let mut out = Vec::new();
        for variant in variant_order(&cells) {
            for &t in &cfg.threads {
                let xs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.0 == variant && r.1 == t)
                    .map(|r| r.2)
                    .collect();
                out.push((variant.clone(), t, xs));
            }
        }
        out
    };
    if series_speedups.iter().all(|s| s.2.is_empty()) {
        return Err(Error::validation("no results to bucket"));
    }
    let top = *cfg.threads.iter().max().expect("validated nonempty");
    let buckets = cfg.buckets.unwrap_or(top);
    let histograms: Vec<(String, usize, Histogram)> = series_speedups
        .into_iter()
        .map(|(v, t, xs)| {
            let mut h = Histogram::uniform(0.0, top as f64, buckets);
            xs.iter().for_each(|&x| h.add(x));
            (v, t, h)
        })
        .collect();
    let edges = histograms[0].2.edges.clone();

    let mut report = Report::default();
    match cfg.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Series<'a> {
                variant: &'a str,
                threads: usize,
                counts: &'a [u64],
            }
            #[derive(Serialize)]
            struct Doc<'a> {
                edges: &'a [f64],
                series: Vec<Series<'a>>,
            }
            let doc = Doc {
                edges: &edges,
                series: histograms
                    .iter()
                    .map(|(v, t, h)| Series {
                        variant: v,
                        threads: *t,
                        counts: &h.counts,
                    })
                    .collect(),
            };
            report.push("histogram.json", json(&doc));
        }
        Format::Csv => {
            let mut wtr = ::csv::Writer::from_writer(Vec::new());
            let csv_err = |e: ::csv::Error| Error::Invariant(format!("csv: {e}"));
            let mut header = vec!["bucket_lo".to_string(), "bucket_hi".to_string()];
            header.extend(histograms.iter().map(|(v, t, _)| format!("{v}@{t}")));
            wtr.write_record(&header).map_err(csv_err)?;
            for b in 0..buckets {
                let mut rec = vec![edges[b].to_string(), edges[b + 1].to_string()];
                rec.extend(histograms.iter().map(|(_, _, h)| h.counts[b].to_string()));
                wtr.write_record(&rec).map_err(csv_err)?;
            }
            let bytes = wtr.into_inner().map_err(|e| Error::Invariant(format!("csv: {e}")))?;
            report.push("histogram.csv", String::from_utf8(bytes).expect("utf-8"));
        }
    }
    Ok(report)
}

fn trace_text(w: &Workload) -> String {
    let mut buf = Vec::new();
    emit_trace(w, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("traces are utf-8")
}

/// The corpus as trace files, one per workload.
pub fn generate(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let mut report = Report::default();
    for (name, w) in cfg.load_corpus()? {
        report.push(format!("{name}.trace"), trace_text(&w));
    }
    Ok(report)
}

/// Rewritten traces per variant; graph steps additionally emit the pruned
/// dependency graph as an edge list.
pub fn transform(cfg: &ExperimentConfig) -> Result<Report> {
    let cells = prepare(cfg)?;
    let single = variant_order(&cells).len() == 1;
    let mut report = Report::default();
    for c in &cells {
        let stem = if single {
            c.name.clone()
        } else {
            format!("{}.{}", c.variant, c.name)
        };
        report.push(format!("{stem}.trace"), trace_text(&c.workload));
        if c.has_graph_steps {
            report.push(format!("{stem}.edges"), c.graph.to_edge_list());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{CorpusSpec, InputSpec, PolicySpec};
    use crate::transforms::{Probability, Transform, TransformStep};
    use crate::workload::{GasModel, MixComponent, Pattern, StorageKey};

    fn corpus(count: usize) -> ExperimentConfig {
        let gas = GasModel::fixed(100);
        let mut cfg = ExperimentConfig::new(InputSpec::Generator(CorpusSpec {
            components: vec![
                MixComponent::new(Pattern::Payments { gas }, 1.0),
                MixComponent::new(Pattern::NftMint { gas }, 1.0),
            ],
            n: 12,
            n_min: Some(4),
            count,
        }));
        cfg.threads = vec![1, 2, 4];
        cfg
    }

    fn len_key() -> StorageKey {
        "m1:items.length".parse().unwrap()
    }

    #[test]
    fn analyze_aggregates_are_consistent() {
        let cfg = corpus(6);
        let report = analyze(&cfg).unwrap();
        let doc: serde_json::Value = serde_json::from_str(report.get("analyze.json").unwrap()).unwrap();
        let aggs = doc["aggregates"].as_array().unwrap();
        assert_eq!(aggs.len(), 3);
        for a in aggs {
            let (lo, m, hi) = (a["min_speedup"].as_f64().unwrap(), a["mean_speedup"].as_f64().unwrap(), a["max_speedup"].as_f64().unwrap());
            assert!(lo <= m && m <= hi);
            let overall = a["serial_total"].as_f64().unwrap() / a["makespan_total"].as_f64().unwrap();
            assert_eq!(overall, a["overall_speedup"].as_f64().unwrap());
        }
        // one thread is always serial
        assert_eq!(aggs[0]["overall_speedup"], 1.0);
    }

    #[test]
    fn csv_aggregate_recomputes_from_rows() {
        let mut cfg = corpus(5);
        cfg.format = Format::Csv;
        let report = analyze(&cfg).unwrap();
        let mut rdr = ::csv::Reader::from_reader(report.get("analyze.csv").unwrap().as_bytes());
        let (mut s, mut m) = (0u64, 0u64);
        for rec in rdr.records() {
            let rec = rec.unwrap();
            if &rec[2] == "4" {
                s += rec[5].parse::<u64>().unwrap();
                m += rec[7].parse::<u64>().unwrap();
            }
        }
        let mut agg = ::csv::Reader::from_reader(report.get("analyze_aggregate.csv").unwrap().as_bytes());
        let last = agg.records().last().unwrap().unwrap();
        assert_eq!(&last[1], "4");
        assert_eq!(last[6].parse::<f64>().unwrap(), s as f64 / m as f64);
    }

    #[test]
    fn outputs_are_reproducible() {
        let mut cfg = corpus(4);
        cfg.mode = RunMode::OccDa;
        cfg.baseline = Some(RunMode::OccDetCommit);
        for f in [Format::Json, Format::Csv] {
            cfg.format = f;
            assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
            assert_eq!(bound(&cfg).unwrap(), bound(&cfg).unwrap());
        }
        let mut seq = cfg.clone();
        seq.strategy = exec::Strategy::Sequential;
        assert_eq!(simulate(&seq).unwrap(), simulate(&cfg).unwrap());
    }

    #[test]
    fn one_thread_simulation_is_serial() {
        let mut cfg = corpus(3);
        cfg.threads = vec![1];
        cfg.policy = PolicySpec::DepGraph;
        cfg.format = Format::Csv;
        for mode in [RunMode::OccDa, RunMode::OccDetCommit, RunMode::OccClassic] {
            cfg.mode = mode;
            let r = simulate(&cfg).unwrap();
            let mut rdr = ::csv::Reader::from_reader(r.get("simulate_runs.csv").unwrap().as_bytes());
            for rec in rdr.records() {
                let rec = rec.unwrap();
                assert_eq!(&rec[6], "1.0", "{mode:?}");
                assert_eq!(&rec[7], "0", "{mode:?}");
            }
        }
    }

    #[test]
    fn identical_fraction_is_reported() {
        let mut cfg = corpus(4);
        cfg.mode = RunMode::OccDa;
        cfg.baseline = Some(RunMode::OccDetCommit);
        cfg.format = Format::Csv;
        let r = simulate(&cfg).unwrap();
        let text = r.get("simulate_aggregate.csv").unwrap();
        let mut rdr = ::csv::Reader::from_reader(text.as_bytes());
        let recs: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(recs.len(), 6);
        assert!(!recs[0][10].is_empty());
        assert!(recs[1][10].is_empty());
        assert_eq!(&recs[0][2], "occ-da");
    }

    #[test]
    fn histogram_series_share_edges() {
        let mut cfg = corpus(8);
        cfg.format = Format::Csv;
        cfg.variants = vec![
            super::super::Variant { name: "base".into(), transforms: vec![] },
            super::super::Variant {
                name: "pruned".into(),
                transforms: vec![TransformStep::seeded(
                    Transform::PruneEdges {
                        target_keys: [len_key()].into_iter().collect(),
                        probability: Probability::new(1, 1).unwrap(),
                    },
                    3,
                )],
            },
        ];
        let r = histogram(&cfg).unwrap();
        let text = r.get("histogram.csv").unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "bucket_lo,bucket_hi,base@1,base@2,base@4,pruned@1,pruned@2,pruned@4");
        assert_eq!(text.lines().count(), 5);
        // every series counts every workload
        let mut rdr = ::csv::Reader::from_reader(text.as_bytes());
        let mut totals = [0u64; 6];
        for rec in rdr.records() {
            let rec = rec.unwrap();
            for (i, t) in totals.iter_mut().enumerate() {
                *t += rec[i + 2].parse::<u64>().unwrap();
            }
        }
        assert_eq!(totals, [8; 6]);
    }

    #[test]
    fn probe_passes_on_corpus() {
        let mut cfg = corpus(3);
        cfg.trials = 4;
        let r = probe(&cfg).unwrap();
        assert!(r.failures.is_empty());
        assert!(r.clone().into_result().is_ok());
        let doc: serde_json::Value = serde_json::from_str(r.get("probe.json").unwrap()).unwrap();
        assert_eq!(doc.as_array().unwrap().len(), 9);
    }

    #[test]
    fn generate_and_transform_emit_files() {
        let mut cfg = corpus(3);
        let g = generate(&cfg).unwrap();
        assert_eq!(g.outputs.len(), 3);
        assert!(g.outputs[0].contents.starts_with("# txpar trace v1\n"));
        cfg.transforms = vec![TransformStep::new(Transform::PruneEdges {
            target_keys: [len_key()].into_iter().collect(),
            probability: Probability::new(1, 2).unwrap(),
        })];
        let t = transform(&cfg).unwrap();
        assert_eq!(t.outputs.len(), 6);
        assert_eq!(t.outputs[1].name, "w0000.edges");
    }
}
