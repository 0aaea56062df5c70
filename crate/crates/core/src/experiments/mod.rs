//! The built-in experiment sweeps: each one fixes a question (lookup
//! triggers, bandwidth, cache size, ...), a set of traces, and the cells
//! to run per trace. Cells are normalized against their group's baseline
//! cell run on the same trace with the same repetition seed.

pub mod csv;

pub use csv::{write_csv, ResultRow};

use crate::config::SimConfig;
use crate::error::{ConfigError, TraceError};
use crate::isa::MetaOp;
use crate::sim::{run_trace, RunError, RunOutput};
use crate::trace::gen::TraceSpec;
use crate::trace::instrument::{instrument_software_checks, SoftwareCheck};
use crate::trace::{strip_meta, Trace, TraceEvent};
use crate::types::{mix_seed, ClientId, TagId};
use rayon::prelude::*;

/// How a cell rewrites the experiment's trace before replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    None,
    /// Remove metadata operators: the "no metadata system" arm.
    StripMeta,
    /// Inject a CREATE+MAP pair before every `per`-th memory access.
    OpDensity { per: u64 },
    /// Replace plane protection with inline software checks.
    SoftwareBounds,
    SoftwareCanary,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub sweep_value: String,
    /// Cells normalize against the baseline cell of their group.
    pub group: String,
    pub baseline: bool,
    /// `key=value` config overrides for this cell.
    pub patch: Vec<(String, String)>,
    /// Replace the configured client list; `None` keeps the config's own.
    pub clients: Option<Vec<String>>,
    pub transform: Transform,
}

impl Cell {
    fn new(sweep_value: &str) -> Self {
        Cell {
            sweep_value: sweep_value.to_string(),
            group: String::new(),
            baseline: false,
            patch: Vec::new(),
            clients: Some(Vec::new()),
            transform: Transform::None,
        }
    }

    fn baseline(sweep_value: &str) -> Self {
        Cell {
            baseline: true,
            transform: Transform::StripMeta,
            ..Cell::new(sweep_value)
        }
    }

    fn clients(mut self, list: &[&str]) -> Self {
        self.clients = Some(list.iter().map(|s| s.to_string()).collect());
        self
    }

    fn set(mut self, key: &str, value: &str) -> Self {
        self.patch.push((key.to_string(), value.to_string()));
        self
    }

    fn group(mut self, g: &str) -> Self {
        self.group = g.to_string();
        self
    }

    fn transform(mut self, t: Transform) -> Self {
        self.transform = t;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentDef {
    pub name: String,
    pub sweep_param: String,
    pub traces: Vec<TraceSpec>,
    pub cells: Vec<Cell>,
}

pub const BUILT_IN_NAMES: [&str; 12] = [
    "single",
    "lookup_triggers",
    "bandwidth",
    "mmc_size",
    "granularity",
    "translation",
    "contention",
    "mitigation",
    "op_density",
    "usecase_prefetch",
    "usecase_bounds",
    "usecase_rap",
];

/// Look up a built-in sweep by name.
pub fn built_in(name: &str) -> Option<ExperimentDef> {
    let def = |sweep_param: &str, traces: Vec<TraceSpec>, cells: Vec<Cell>| ExperimentDef {
        name: name.to_string(),
        sweep_param: sweep_param.to_string(),
        traces,
        cells,
    };
    Some(match name {
        // One run of the configured machine over the given trace, as-is.
        "single" => def(
            "run",
            vec![],
            vec![Cell {
                baseline: true,
                clients: None,
                transform: Transform::None,
                ..Cell::new("run")
            }],
        ),

        "lookup_triggers" => def(
            "trigger",
            vec![
                TraceSpec::new("stream", 0),
                TraceSpec::new("array3d", 0),
                TraceSpec::new("linked_list", 0),
                TraceSpec::new("random", 0),
            ],
            vec![
                Cell::baseline("none"),
                Cell::new("miss_only").clients(&["null_miss"]),
                Cell::new("all_access").clients(&["null_all"]),
            ],
        ),

        "bandwidth" => {
            let mut cells = Vec::new();
            for (label, interval) in [("0.5x", 8u64), ("1x", 4), ("2x", 2)] {
                cells.push(
                    Cell::baseline(&format!("{label}:baseline"))
                        .group(label)
                        .set("mem_issue_interval_cycles", &interval.to_string()),
                );
                cells.push(
                    Cell::new(label)
                        .group(label)
                        .clients(&["null_all"])
                        .set("mem_issue_interval_cycles", &interval.to_string()),
                );
            }
            def("bandwidth", vec![TraceSpec::new("random", 0)], cells)
        }

        "mmc_size" => {
            let mut cells = vec![Cell::baseline("baseline")];
            for entries in [16u64, 32, 64, 128, 256, 512] {
                cells.push(
                    Cell::new(&entries.to_string())
                        .clients(&["null_all"])
                        .set("mmc_entries", &entries.to_string()),
                );
            }
            def(
                "mmc_entries",
                vec![
                    TraceSpec::new("stream", 0),
                    TraceSpec::new("linked_list", 0),
                    TraceSpec::new("random", 0),
                ],
                cells,
            )
        }

        "granularity" => {
            let mut cells = vec![Cell::baseline("baseline")];
            for bytes in [64u64, 128, 256, 512, 1024, 2048] {
                cells.push(
                    Cell::new(&bytes.to_string())
                        .clients(&["null_all"])
                        .set("granularity_bytes", &bytes.to_string()),
                );
            }
            def(
                "granularity_bytes",
                vec![
                    TraceSpec::new("stream", 0),
                    TraceSpec::new("linked_list", 0),
                    TraceSpec::new("random", 0),
                ],
                cells,
            )
        }

        "translation" => def(
            "translation",
            vec![TraceSpec::new("random", 0)
                .with("region_bytes", 8 << 20)
                .with("accesses", 30000)],
            vec![
                Cell::baseline("baseline"),
                Cell::new("physical")
                    .clients(&["null_all"])
                    .set("translation_mode", "physical"),
                Cell::new("virtual")
                    .clients(&["null_all"])
                    .set("translation_mode", "virtual"),
            ],
        ),

        "contention" => def(
            "clients",
            vec![TraceSpec::new("random", 0)],
            vec![
                Cell::baseline("baseline"),
                Cell::new("one_client").clients(&["null_all"]),
                Cell::new("two_clients").clients(&["null_all", "null_tlb_pte"]),
            ],
        ),

        "mitigation" => def(
            "policy",
            vec![
                TraceSpec::new("array3d", 0).with("dz", 1024),
                TraceSpec::new("random", 0),
            ],
            vec![
                Cell::baseline("baseline"),
                Cell::new("shared").clients(&["null_all", "null_tlb_pte"]),
                Cell::new("partitioned")
                    .clients(&["null_all", "null_tlb_pte"])
                    .set("mmc_mode", "partitioned"),
                Cell::new("prioritized")
                    .clients(&["null_all", "null_tlb_pte"])
                    .set("mmc_mode", "prioritized")
                    .set("sticky_client", "1"),
                Cell::new("no_stall")
                    .clients(&["null_all:no_stall", "null_tlb_pte:no_stall"]),
            ],
        ),

        "op_density" => def(
            "ops_per_accesses",
            vec![TraceSpec::new("stream", 0)],
            vec![
                Cell {
                    baseline: true,
                    transform: Transform::None,
                    ..Cell::new("none")
                }
                .clients(&["null_all"]),
                Cell::new("per_8")
                    .clients(&["null_all"])
                    .transform(Transform::OpDensity { per: 8 }),
                Cell::new("per_2")
                    .clients(&["null_all"])
                    .transform(Transform::OpDensity { per: 2 }),
            ],
        ),

        "usecase_prefetch" => def(
            "prefetcher",
            vec![TraceSpec::new("graph", 0)],
            vec![
                Cell::baseline("none"),
                Cell::new("stride")
                    .clients(&["stride_ref"])
                    .transform(Transform::StripMeta),
                Cell::new("ideal").clients(&["graph_prefetch_ideal"]),
                Cell::new("tagged").clients(&["graph_prefetch"]),
            ],
        ),

        "usecase_bounds" => def(
            "protection",
            vec![TraceSpec::new("safety_bounds", 0)
                .with("accesses", 20000)
                .with("array_bytes", 2048)],
            vec![
                Cell::baseline("none"),
                Cell::new("software")
                    .transform(Transform::SoftwareBounds),
                Cell::new("tagged")
                    .clients(&["bounds"])
                    .set("granularity_bytes", "64")
                    .set("traps_terminate", "false"),
            ],
        ),

        "usecase_rap" => def(
            "protection",
            vec![TraceSpec::new("safety_rap", 0)],
            vec![
                Cell::baseline("none"),
                Cell::new("canary").transform(Transform::SoftwareCanary),
                Cell::new("tagged")
                    .clients(&["rap"])
                    .set("granularity_bytes", "64")
                    .set("traps_terminate", "false"),
            ],
        ),

        _ => return None,
    })
}

/// Address the injected operators tag: a scratch region far from any
/// generator's data.
const OP_DENSITY_SCRATCH: u64 = 0x07E0_0000;

fn apply_transform(t: Transform, trace: &Trace, cfg: &SimConfig) -> Result<Trace, TraceError> {
    match t {
        Transform::None => Ok(trace.clone()),
        Transform::StripMeta => Ok(strip_meta(trace)),
        Transform::OpDensity { per } => Ok(inject_ops(trace, per)),
        Transform::SoftwareBounds => instrument_software_checks(
            trace,
            SoftwareCheck::Bounds {
                cost_instrs: cfg.software_check_instrs,
            },
        ),
        Transform::SoftwareCanary => instrument_software_checks(trace, SoftwareCheck::Canary),
    }
}

/// Insert a CREATE+MAP pair before every `per`-th memory access, aimed at
/// a scratch region so the workload's own tags stay untouched. A label
/// never gets separated from the access it marks.
fn inject_ops(trace: &Trace, per: u64) -> Trace {
    let mut t = trace.clone();
    let mut old_to_new = vec![None; trace.events.len()];
    let mut events = Vec::with_capacity(trace.events.len() + trace.events.len() / per as usize + 2);
    let mut seen = 0u64;
    let mut tag = 0u8;
    for (i, ev) in trace.events.iter().enumerate() {
        if let TraceEvent::MemAccess { .. } = ev {
            if seen.is_multiple_of(per) {
                tag = tag % 4 + 1;
                let insert_at = match events.last() {
                    Some(TraceEvent::Label { .. }) => events.len() - 1,
                    _ => events.len(),
                };
                events.insert(
                    insert_at,
                    TraceEvent::Meta(MetaOp::Create {
                        client: ClientId(0),
                        tag: TagId(tag),
                        metadata: vec![],
                    }),
                );
                events.insert(
                    insert_at + 1,
                    TraceEvent::Meta(MetaOp::Map {
                        tag: TagId(tag),
                        vstart: OP_DENSITY_SCRATCH,
                        size: 64,
                    }),
                );
            }
            seen += 1;
        }
        old_to_new[i] = Some(events.len() as u64);
        events.push(ev.clone());
    }
    t.events = events;
    crate::trace::remap_violations(&mut t.header.expected, &old_to_new);
    t.seal_aspace(4096);
    t
}

/// Formatted trap-log lines for one run, one per delivered trap.
fn trap_lines(row: &ResultRow, out: &RunOutput) -> Vec<String> {
    out.traps
        .iter()
        .map(|t| {
            format!(
                "{} {} {} rep={} kind={} vaddr={:#x} position={} expected={} cycle={}",
                row.experiment,
                row.trace,
                row.sweep_value,
                row.rep,
                t.kind,
                t.vaddr,
                t.position,
                t.expected,
                t.at_cycle
            )
        })
        .collect()
}

/// Everything one experiment invocation produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub trap_log: Vec<String>,
}

/// Run every (trace x cell x repetition) of the sweep. Repetition `r`
/// reuses one derived seed across all cells so baselines experience the
/// same machine randomness as the cells they normalize.
pub fn run_experiment(
    def: &ExperimentDef,
    base_cfg: &SimConfig,
    traces: &[(String, Trace)],
    seed: u64,
    reps: u64,
) -> Result<ExperimentOutcome, RunError> {
    if traces.is_empty() {
        return Err(ConfigError::new(format!(
            "experiment \"{}\" has no trace to run",
            def.name
        ))
        .into());
    }
    if !def.cells.iter().any(|c| c.baseline) {
        return Err(ConfigError::new("experiment has no baseline cell").into());
    }

    struct Job<'a> {
        t_idx: usize,
        c_idx: usize,
        rep: u64,
        trace_name: &'a str,
        trace: &'a Trace,
        cell: &'a Cell,
    }
    let mut jobs = Vec::new();
    for (t_idx, (trace_name, trace)) in traces.iter().enumerate() {
        for (c_idx, cell) in def.cells.iter().enumerate() {
            for rep in 0..reps {
                jobs.push(Job {
                    t_idx,
                    c_idx,
                    rep,
                    trace_name,
                    trace,
                    cell,
                });
            }
        }
    }

    let results: Vec<(ResultRow, Vec<String>)> = jobs
        .par_iter()
        .map(|job| -> Result<(ResultRow, Vec<String>), RunError> {
            let mut cfg = base_cfg.clone();
            if let Some(clients) = &job.cell.clients {
                cfg.clients = clients.clone();
            }
            for (k, v) in &job.cell.patch {
                cfg.set(k, v)?;
            }
            cfg.seed = mix_seed(seed, job.rep);
            let trace = apply_transform(job.cell.transform, job.trace, &cfg)
                .map_err(|e| ConfigError::new(e.to_string()))?;
            let out = run_trace(&cfg, &trace)?;
            let row = ResultRow {
                experiment: def.name.clone(),
                trace: job.trace_name.to_string(),
                sweep_param: def.sweep_param.clone(),
                sweep_value: job.cell.sweep_value.clone(),
                rep: job.rep,
                seed: cfg.seed,
                stats: out.stats.clone(),
                norm_time: 1.0,
                extra_mem_accesses: 0,
                norm_time_mean: 1.0,
                norm_time_min: 1.0,
                norm_time_max: 1.0,
            };
            let traps = trap_lines(&row, &out);
            Ok((row, traps))
        })
        .collect::<Result<_, _>>()?;

    let (mut rows, trap_log): (Vec<ResultRow>, Vec<Vec<String>>) = results.into_iter().unzip();

    // Normalize each row against its group's baseline on the same trace
    // and repetition.
    let job_key = |j: &Job| (j.t_idx, j.rep);
    for i in 0..rows.len() {
        let job = &jobs[i];
        if job.cell.baseline {
            continue;
        }
        let base_idx = jobs
            .iter()
            .position(|j| {
                j.cell.baseline && j.cell.group == job.cell.group && job_key(j) == job_key(job)
            })
            .expect("baseline presence checked above");
        let base = rows[base_idx].stats.clone();
        let row = &mut rows[i];
        row.norm_time = row.stats.cycles as f64 / base.cycles.max(1) as f64;
        row.extra_mem_accesses = row.stats.mem_accesses as i64 - base.mem_accesses as i64;
    }

    // Repetition summary per (trace, cell), stamped on each of its rows.
    for t_idx in 0..traces.len() {
        for c_idx in 0..def.cells.len() {
            let member = |i: usize| jobs[i].t_idx == t_idx && jobs[i].c_idx == c_idx;
            let norms: Vec<f64> = (0..rows.len())
                .filter(|&i| member(i))
                .map(|i| rows[i].norm_time)
                .collect();
            if norms.is_empty() {
                continue;
            }
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for i in (0..rows.len()).filter(|&i| member(i)) {
                rows[i].norm_time_mean = mean;
                rows[i].norm_time_min = min;
                rows[i].norm_time_max = max;
            }
        }
    }

    Ok(ExperimentOutcome {
        rows,
        trap_log: trap_log.into_iter().flatten().collect(),
    })
}

/// Build the def's own traces, seeded from the experiment seed.
pub fn build_traces(def: &ExperimentDef, seed: u64) -> Result<Vec<(String, Trace)>, TraceError> {
    def.traces
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut spec = spec.clone();
            spec.seed = mix_seed(seed, 0x7472_0000 + i as u64);
            Ok((spec.generator.clone(), spec.build()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_built_in_name_resolves() {
        for name in BUILT_IN_NAMES {
            let def = built_in(name).expect(name);
            assert!(!def.cells.is_empty());
            assert!(def.cells.iter().filter(|c| c.baseline).count() >= 1, "{name}");
        }
        assert!(built_in("frobnicate").is_none());
    }

    #[test]
    fn op_density_injection_counts_pairs() {
        let trace = TraceSpec::new("stream", 1)
            .with("bytes", 4096)
            .build()
            .unwrap();
        let dense = inject_ops(&trace, 8);
        let accesses = 4096 / 4;
        let metas = dense
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Meta(_)))
            .count();
        // one pair per 8 accesses plus the original stream map
        assert_eq!(metas, (accesses / 8) * 2 + 1);
    }

    #[test]
    fn lookup_triggers_runs_and_normalizes() {
        let def = built_in("lookup_triggers").unwrap();
        let def = ExperimentDef {
            traces: vec![TraceSpec::new("stream", 0).with("bytes", 8192)],
            ..def
        };
        let cfg = SimConfig::default();
        let traces = build_traces(&def, 42).unwrap();
        let out = run_experiment(&def, &cfg, &traces, 42, 2).unwrap();
        assert_eq!(out.rows.len(), 3 * 2);
        for row in &out.rows {
            if row.sweep_value == "none" {
                assert_eq!(row.norm_time, 1.0);
                assert_eq!(row.extra_mem_accesses, 0);
            } else {
                assert!(row.norm_time >= 1.0, "{}: {}", row.sweep_value, row.norm_time);
            }
            assert!(row.norm_time_min <= row.norm_time_mean);
            assert!(row.norm_time_mean <= row.norm_time_max);
        }
        // same seed, same outcome, including row order
        let again = run_experiment(&def, &cfg, &traces, 42, 2).unwrap();
        assert_eq!(write_csv(&out.rows), write_csv(&again.rows));
    }

    #[test]
    fn single_requires_a_trace() {
        let def = built_in("single").unwrap();
        let cfg = SimConfig::default();
        assert!(run_experiment(&def, &cfg, &[], 1, 1).is_err());
    }
}
