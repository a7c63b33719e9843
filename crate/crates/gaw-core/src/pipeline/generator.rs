//! Synthetic transaction generator with planted ground truth.
//!
//! Background transfers draw low amounts, planted cycles draw high amounts,
//! and a separability threshold sits strictly between the two bands, so the
//! set of cycles above the threshold is exact rather than statistical. The
//! manifest re-derives that set by enumeration instead of trusting the
//! construction, keeping downstream checks honest even if the bands ever
//! overlap.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::algo::{enumerate_cycles, CycleOptions, LENGTH_CAP};
use crate::construct::CsrGraph;

pub const DEFAULT_USERS: usize = 1446;
pub const DEFAULT_TXNS: usize = 17512;
pub const DEFAULT_THRESHOLD: f64 = 2750.0;
pub const DEFAULT_FOCUS_NAME: &str = "Maya Flores";

/// Background amounts live in [BACKGROUND_MIN, BACKGROUND_MAX); the
/// threshold must clear the ceiling for separability.
pub const BACKGROUND_MIN: f64 = 10.0;
pub const BACKGROUND_MAX: f64 = 900.0;

const PLANTED_MIN_DEFAULT: f64 = 5000.0;
const PLANTED_MAX_DEFAULT: f64 = 9500.0;

/// Timestamps spread over 90 days from 2026-01-01T00:00:00Z.
const TIME_BASE: i64 = 1_767_225_600;
const TIME_SPAN_SECS: i64 = 90 * 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSpec {
    pub length: usize,
    pub min_amount: f64,
    pub max_amount: f64,
}

impl CycleSpec {
    pub fn of_length(length: usize) -> Self {
        CycleSpec { length, min_amount: PLANTED_MIN_DEFAULT, max_amount: PLANTED_MAX_DEFAULT }
    }
}

/// Parses a comma-separated list of cycle lengths, e.g. "3,4,5,4,3".
pub fn parse_cycle_lengths(spec: &str) -> Result<Vec<CycleSpec>, PipelineError> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map(CycleSpec::of_length)
                .map_err(|_| PipelineError::Config(format!("bad cycle length {s:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_users: usize,
    pub n_txns: usize,
    pub cycles: Vec<CycleSpec>,
    /// Amount floor separating planted from background activity.
    pub threshold: f64,
    /// Display name of the account every planted cycle passes through.
    pub focus_name: String,
    pub seed: u64,
}

impl Default for DatasetSpec {
    /// The case-study shape: 1,446 users, 17,512 transactions, five planted
    /// cycles with lengths from three to five.
    fn default() -> Self {
        DatasetSpec {
            n_users: DEFAULT_USERS,
            n_txns: DEFAULT_TXNS,
            cycles: [3, 4, 5, 4, 3].into_iter().map(CycleSpec::of_length).collect(),
            threshold: DEFAULT_THRESHOLD,
            focus_name: DEFAULT_FOCUS_NAME.to_string(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCycle {
    /// Member user ids, rotated so the lexicographically smallest leads.
    pub members: Vec<String>,
    /// Edge amounts aligned with the rotated member order.
    pub amounts: Vec<f64>,
    pub total_flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_users: usize,
    pub n_txns: usize,
    pub threshold: f64,
    pub focus_user: String,
    pub focus_name: String,
    pub planted: Vec<PlantedCycle>,
    /// Every cycle whose edges all clear the threshold, re-derived from the
    /// emitted transactions by enumeration. Equals the planted set when the
    /// amount bands are separable, but is listed explicitly so checks never
    /// rest on that argument.
    pub cycles_above_threshold: Vec<Vec<String>>,
    pub planted_txns: usize,
    pub background_txns: usize,
}

struct Txn {
    src: usize,
    dst: usize,
    amount: f64,
    epoch: i64,
}

fn user_id(i: usize) -> String {
    format!("u{i:04}")
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Name pool for background users; the focus name is reserved and never
/// collides because neither of its words appears below.
const FIRST_NAMES: &[&str] = &[
    "Ava", "Ben", "Carla", "Dev", "Elena", "Felix", "Grace", "Hugo", "Ines", "Jonas", "Kira",
    "Liam", "Mona", "Nadia", "Omar", "Petra", "Quinn", "Rosa", "Sami", "Tara", "Ulrich", "Vera",
    "Wren", "Xenia", "Yara", "Zane",
];
const LAST_NAMES: &[&str] = &[
    "Abbott", "Becker", "Castillo", "Dunn", "Eriksen", "Fischer", "Grant", "Haddad", "Ivanov",
    "Jensen", "Kim", "Larsen", "Moreau", "Novak", "Okafor", "Park", "Qureshi", "Ramos", "Sato",
    "Tanaka", "Ueda", "Vargas", "Weiss", "Xu", "Yilmaz", "Zhang",
];
const COUNTRIES: &[&str] = &["AT", "BR", "CA", "DE", "ES", "FR", "JP", "NL", "PL", "US"];

fn display_name(i: usize) -> String {
    let first = FIRST_NAMES[i % FIRST_NAMES.len()];
    let last = LAST_NAMES[(i / FIRST_NAMES.len()) % LAST_NAMES.len()];
    // A numeric suffix keeps names unique past the pool product.
    let round = i / (FIRST_NAMES.len() * LAST_NAMES.len());
    if round == 0 {
        format!("{first} {last}")
    } else {
        format!("{first} {last} {}", round + 1)
    }
}

fn feasibility(spec: &DatasetSpec) -> Result<(), PipelineError> {
    let infeasible = |msg: String| Err(PipelineError::SpecInfeasible(msg));
    if spec.n_users < 2 {
        return infeasible("need at least 2 users".into());
    }
    if spec.focus_name.trim().is_empty() {
        return infeasible("focus name must be non-empty".into());
    }
    let mut planted_users = 1usize;
    let mut planted_txns = 0usize;
    for (i, c) in spec.cycles.iter().enumerate() {
        if !(2..=8).contains(&c.length) {
            return infeasible(format!("cycle {i}: length {} outside [2, 8]", c.length));
        }
        if c.min_amount > c.max_amount {
            return infeasible(format!("cycle {i}: empty amount range"));
        }
        if c.min_amount <= spec.threshold {
            return infeasible(format!(
                "cycle {i}: min amount {} does not clear the threshold {}",
                c.min_amount, spec.threshold
            ));
        }
        planted_users += c.length - 1;
        planted_txns += c.length;
    }
    if planted_users > spec.n_users {
        return infeasible(format!(
            "planted cycles need {planted_users} distinct users, only {} available",
            spec.n_users
        ));
    }
    if planted_txns > spec.n_txns {
        return infeasible(format!(
            "planted cycles need {planted_txns} transactions, only {} budgeted",
            spec.n_txns
        ));
    }
    if spec.threshold <= BACKGROUND_MAX {
        return infeasible(format!(
            "threshold {} must exceed the background ceiling {BACKGROUND_MAX}",
            spec.threshold
        ));
    }
    Ok(())
}

/// Rotates a cycle so its lexicographically smallest member leads; the
/// aligned amount list rotates with it.
fn canonicalize(members: &[String], amounts: &[f64]) -> (Vec<String>, Vec<f64>) {
    let pivot = (0..members.len())
        .min_by_key(|&i| &members[i])
        .expect("cycles are non-empty");
    let rot = |v: &[String]| -> Vec<String> {
        (0..v.len()).map(|i| v[(pivot + i) % v.len()].clone()).collect()
    };
    let rot_f = |v: &[f64]| -> Vec<f64> {
        (0..v.len()).map(|i| v[(pivot + i) % v.len()]).collect()
    };
    (rot(members), rot_f(amounts))
}

/// Writes `users.csv`, `transactions.csv`, `catalog.json`, and
/// `manifest.json` into `out`; returns the ground truth. Same spec and seed
/// produce byte-identical files.
pub fn generate_dataset(spec: &DatasetSpec, out: &Path) -> Result<GroundTruth, PipelineError> {
    feasibility(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Planted membership is positional: the focus account is user 0 and
    // cycle i claims the next length-1 fresh users, so cycles share only
    // the focus account.
    let mut next_free = 1usize;
    let mut txns: Vec<Txn> = Vec::with_capacity(spec.n_txns);
    let mut planted = Vec::with_capacity(spec.cycles.len());
    for c in &spec.cycles {
        let mut members = vec![0usize];
        for _ in 0..c.length - 1 {
            members.push(next_free);
            next_free += 1;
        }
        let mut amounts = Vec::with_capacity(c.length);
        for i in 0..c.length {
            let amount = round_cents(rng.gen_range(c.min_amount..=c.max_amount));
            amounts.push(amount);
            txns.push(Txn {
                src: members[i],
                dst: members[(i + 1) % c.length],
                amount,
                epoch: 0,
            });
        }
        let ids: Vec<String> = members.iter().map(|&m| user_id(m)).collect();
        let (members, amounts) = canonicalize(&ids, &amounts);
        let total_flow = round_cents(amounts.iter().sum());
        planted.push(PlantedCycle { members, amounts, total_flow });
    }
    let planted_txns = txns.len();

    let background_txns = spec.n_txns - planted_txns;
    for _ in 0..background_txns {
        let src = rng.gen_range(0..spec.n_users);
        let mut dst = rng.gen_range(0..spec.n_users - 1);
        if dst >= src {
            dst += 1;
        }
        let amount = round_cents(rng.gen_range(BACKGROUND_MIN..BACKGROUND_MAX));
        txns.push(Txn { src, dst, amount, epoch: 0 });
    }
    for t in &mut txns {
        t.epoch = TIME_BASE + rng.gen_range(0..TIME_SPAN_SECS);
    }
    // Chronological file order; the full key makes the sort total so output
    // bytes never depend on the unstable portion of sorting.
    txns.sort_by(|a, b| {
        (a.epoch, a.src, a.dst, a.amount.to_bits())
            .cmp(&(b.epoch, b.src, b.dst, b.amount.to_bits()))
    });

    std::fs::create_dir_all(out).map_err(super::io_err(out))?;
    write_users(spec, out)?;
    write_txns(&txns, out)?;
    write_catalog(out)?;

    let truth = GroundTruth {
        seed: spec.seed,
        n_users: spec.n_users,
        n_txns: spec.n_txns,
        threshold: spec.threshold,
        focus_user: user_id(0),
        focus_name: spec.focus_name.clone(),
        planted,
        cycles_above_threshold: cycles_above_threshold(spec, &txns),
        planted_txns,
        background_txns,
    };
    let manifest_path = out.join("manifest.json");
    let body = serde_json::to_string_pretty(&truth)
        .map_err(|e| PipelineError::Io(e.to_string()))?;
    std::fs::write(&manifest_path, body + "\n").map_err(super::io_err(&manifest_path))?;
    Ok(truth)
}

fn write_users(spec: &DatasetSpec, out: &Path) -> Result<(), PipelineError> {
    let path = out.join("users.csv");
    let mut w = csv::Writer::from_path(&path).map_err(super::io_err(&path))?;
    w.write_record(["user_id", "name", "country"]).map_err(super::io_err(&path))?;
    for i in 0..spec.n_users {
        let name = if i == 0 { spec.focus_name.clone() } else { display_name(i) };
        w.write_record([user_id(i).as_str(), &name, COUNTRIES[i % COUNTRIES.len()]])
            .map_err(super::io_err(&path))?;
    }
    w.flush().map_err(super::io_err(&path))?;
    Ok(())
}

fn write_txns(txns: &[Txn], out: &Path) -> Result<(), PipelineError> {
    let path = out.join("transactions.csv");
    let mut w = csv::Writer::from_path(&path).map_err(super::io_err(&path))?;
    w.write_record(["txn_id", "src_id", "dst_id", "amount", "timestamp"])
        .map_err(super::io_err(&path))?;
    for (i, t) in txns.iter().enumerate() {
        let stamp = chrono::DateTime::from_timestamp(t.epoch, 0)
            .expect("epoch within range")
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        w.write_record([
            format!("t{i:06}").as_str(),
            &user_id(t.src),
            &user_id(t.dst),
            &format!("{:.2}", t.amount),
            &stamp,
        ])
        .map_err(super::io_err(&path))?;
    }
    w.flush().map_err(super::io_err(&path))?;
    Ok(())
}

fn write_catalog(out: &Path) -> Result<(), PipelineError> {
    let path = out.join("catalog.json");
    let catalog = serde_json::json!({
        "sources": [
            {
                "id": "transactions",
                "file": "transactions.csv",
                "columns": [
                    {"name": "txn_id", "type": "String"},
                    {"name": "src_id", "type": "String", "role": "EntityKey"},
                    {"name": "dst_id", "type": "String", "role": "CounterpartyKey"},
                    {"name": "amount", "type": "Float", "role": "Weight"},
                    {"name": "timestamp", "type": "Timestamp", "role": "Time"}
                ]
            },
            {
                "id": "users",
                "file": "users.csv",
                "columns": [
                    {"name": "user_id", "type": "String", "role": "EntityKey"},
                    {"name": "name", "type": "String", "role": "Attribute"},
                    {"name": "country", "type": "String", "role": "Attribute"}
                ]
            }
        ]
    });
    let body = serde_json::to_string_pretty(&catalog)
        .map_err(|e| PipelineError::Io(e.to_string()))?;
    std::fs::write(&path, body + "\n").map_err(super::io_err(&path))?;
    Ok(())
}

/// Exact above-threshold cycle listing: build the subgraph of transactions
/// at or above the threshold and enumerate every simple cycle in it.
fn cycles_above_threshold(spec: &DatasetSpec, txns: &[Txn]) -> Vec<Vec<String>> {
    let keys: Vec<String> = (0..spec.n_users).map(user_id).collect();
    let key_refs: Vec<&str> = keys.iter().map(String::as_str).collect();
    let edges: Vec<(u32, u32, f64)> = txns
        .iter()
        .filter(|t| t.amount >= spec.threshold)
        .map(|t| (t.src as u32, t.dst as u32, t.amount))
        .collect();
    if edges.is_empty() {
        return Vec::new();
    }
    let graph = CsrGraph::from_edge_list(&key_refs, &edges, true, true);
    // Planted cycles never exceed the enumeration length cap (feasibility
    // bounds them at 8) and separable bands keep the subgraph to planted
    // edges, so the cap does not hide cycles.
    let options = CycleOptions { min_len: 2, max_len: LENGTH_CAP, ..CycleOptions::default() };
    let cycles = enumerate_cycles(&graph, &options).expect("threshold subgraph enumerates");
    assert!(!cycles.truncated, "above-threshold subgraph too dense for exact ground truth");
    let id_map: &Arc<crate::values::IdMap> = &cycles.id_map;
    cycles
        .cycles
        .iter()
        .map(|c| {
            let members: Vec<String> = c
                .nodes
                .iter()
                .map(|&n| id_map.key(n).expect("cycle node interned").to_string())
                .collect();
            canonicalize(&members, &vec![0.0; members.len()]).0
        })
        .collect()
}
