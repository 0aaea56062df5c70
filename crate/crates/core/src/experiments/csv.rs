//! Result rows and their CSV rendering. The column set is a stable
//! contract: all raw counters plus derived metrics, the latter recomputed
//! from the counters at render time.

use crate::machine::Stats;

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub experiment: String,
    pub trace: String,
    pub sweep_param: String,
    pub sweep_value: String,
    pub rep: u64,
    pub seed: u64,
    pub stats: Stats,
    /// Cycles relative to this row's baseline run (same trace, same rep).
    pub norm_time: f64,
    /// Memory requests beyond the baseline run's.
    pub extra_mem_accesses: i64,
    /// Repetition summary of `norm_time` for this cell, repeated per row.
    pub norm_time_mean: f64,
    pub norm_time_min: f64,
    pub norm_time_max: f64,
}

pub fn header() -> String {
    let mut cols = vec![
        "experiment",
        "trace",
        "sweep_param",
        "sweep_value",
        "rep",
        "seed",
    ];
    cols.extend(Stats::COUNTER_NAMES);
    cols.extend([
        "mmc_hit_rate",
        "norm_time",
        "extra_mem_accesses",
        "norm_time_mean",
        "norm_time_min",
        "norm_time_max",
    ]);
    cols.join(",")
}

fn render_row(r: &ResultRow) -> String {
    let mut fields = vec![
        r.experiment.clone(),
        r.trace.clone(),
        r.sweep_param.clone(),
        r.sweep_value.clone(),
        r.rep.to_string(),
        r.seed.to_string(),
    ];
    fields.extend(r.stats.counter_values().iter().map(|v| v.to_string()));
    fields.push(format!("{:.6}", r.stats.mmc_hit_rate()));
    fields.push(format!("{:.6}", r.norm_time));
    fields.push(r.extra_mem_accesses.to_string());
    fields.push(format!("{:.6}", r.norm_time_mean));
    fields.push(format!("{:.6}", r.norm_time_min));
    fields.push(format!("{:.6}", r.norm_time_max));
    fields.join(",")
}

pub fn write_csv(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    out.push_str(&header());
    out.push('\n');
    for r in rows {
        out.push_str(&render_row(r));
        out.push('\n');
    }
    out
}
