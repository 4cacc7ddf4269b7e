//! Text artifacts of a search run. Floats use shortest round-trip
//! formatting, so equal runs give equal bytes.

use serde::Serialize;

use super::{GenerationStats, Individual, ParetoArchive, RefinementEvent};

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn generations_csv(rows: &[GenerationStats]) -> String {
    csv_string(rows)
}

#[derive(Serialize)]
struct IndividualRow<'a> {
    id: u64,
    born: usize,
    lineage: String,
    active_layers: usize,
    params: u64,
    val_loss: f64,
    e_tok_uj: f64,
    ttft_ms: f64,
    tpot_ms: f64,
    feasible: bool,
    violation: f64,
    fingerprint: &'a str,
}

/// One row per individual, in the given order.
pub fn individuals_csv(inds: &[Individual]) -> String {
    let fps: Vec<String> = inds
        .iter()
        .map(|i| format!("{:016x}", i.genome.fingerprint()))
        .collect();
    csv_string(inds.iter().zip(&fps).map(|(i, fp)| IndividualRow {
        id: i.id,
        born: i.born,
        lineage: i.lineage.tag(),
        active_layers: i.genome.active_count(),
        params: i.params,
        val_loss: i.objectives.val_loss,
        e_tok_uj: i.objectives.e_tok_uj,
        ttft_ms: i.objectives.ttft_ms,
        tpot_ms: i.objectives.tpot_ms,
        feasible: i.objectives.feasible,
        violation: i.objectives.violation,
        fingerprint: fp,
    }))
}

/// Archive members ordered by id.
pub fn archive_csv(archive: &ParetoArchive) -> String {
    let mut members = archive.members().to_vec();
    members.sort_by_key(|m| m.id);
    individuals_csv(&members)
}

pub fn events_jsonl(events: &[RefinementEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
        .collect()
}
