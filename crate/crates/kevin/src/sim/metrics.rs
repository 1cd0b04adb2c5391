//! Run metrics: JSON summary plus plot-ready CSV side files.

use serde::Serialize;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    pub flows_total: usize,
    pub flows_completed: usize,
    pub bytes_total: f64,
    pub bytes_delivered: f64,
    pub fct_mean: f64,
    pub fct_median: f64,
    pub fct_p99: f64,
    pub byte_weighted_mean_path_length: f64,
    pub reconfigurations: usize,
    pub protocol_messages: usize,
    /// Ten bins over [0, 1]; a link at full utilization lands in the last.
    pub link_utilization_histogram: [usize; 10],
    pub end_time: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// One completed-or-not flow for the per-flow CSV.
#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub id: u64,
    pub src: String,
    pub dst: String,
    pub bytes: f64,
    pub arrival: f64,
    pub completion: Option<f64>,
    pub path_len_first: usize,
    pub path_len_last: usize,
}

pub fn flow_csv(records: &[FlowRecord]) -> String {
    let mut out =
        String::from("id,src,dst,bytes,arrival,completion,path_len_first,path_len_last\n");
    for r in records {
        let completion = r.completion.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.id, r.src, r.dst, r.bytes, r.arrival, completion, r.path_len_first, r.path_len_last
        ));
    }
    out
}

/// One scheduler decision for the per-round CSV.
#[derive(Debug, Clone)]
pub struct SchedulerRecord {
    pub round: usize,
    pub demand_src: String,
    pub demand_dst: String,
    pub volume: f64,
    pub action: &'static str,
    pub sender: String,
    pub receiver: String,
    pub switch: String,
}

pub fn scheduler_csv(records: &[SchedulerRecord]) -> String {
    let mut out = String::from("round,demand_src,demand_dst,volume,action,sender,receiver,switch\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.round, r.demand_src, r.demand_dst, r.volume, r.action, r.sender, r.receiver, r.switch
        ));
    }
    out
}

/// Nearest-rank percentile of a sorted sample; 0 for an empty one.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
