use serde::Serialize;
use serde_json::{json, Value};

use bia_core::bcgm::{scheme_dimensions, verify_alignment, BcgmScheme, SchemeParams};
use bia_core::mapreduce::{build_job, random_payloads, run_job, ShuffleConfig};
use bia_core::metrics::{dof_report, estimate_rate_curve, formula_dof, Setting};
use bia_core::sim::{simulate_bcgm, simulate_usi, RunConfig};
use bia_core::usi::{UsiLayout, UsiScheme};
use bia_core::verify::{check_alignment, check_decoding, check_identities, grid, seed_range, EXACT_TOL};
use bia_core::combinatorics::binomial;
use bia_core::{BiaError, Result};

use crate::config::ExperimentConfig;

pub const DEFAULT_SWEEP_SNR_DB: [f64; 3] = [20.0, 40.0, 60.0];
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_PAYLOAD_BYTES: usize = 32;
pub const DEFAULT_VERIFY_MAX_K: usize = 5;
pub const DEFAULT_VERIFY_SEEDS: usize = 20;

/// Records to print, whether every requested check passed, and an optional CSV body.
#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<Value>,
    pub passed: bool,
    pub csv: Option<String>,
}

fn record(command: &str, body: impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(body).map_err(|e| BiaError::InvalidRun(e.to_string()))?;
    match v.as_object_mut() {
        Some(map) => {
            map.insert("command".into(), command.into());
            Ok(v)
        }
        None => Ok(json!({ "command": command, "value": v })),
    }
}

fn layout_name(s: &UsiScheme) -> &'static str {
    match s.layout {
        UsiLayout::Aligned(_) => "aligned",
        UsiLayout::Schedule(_) => "schedule",
        UsiLayout::Central(_) => "central",
    }
}

fn usi_dims(users: usize, group_size: usize, modes: usize) -> Result<Value> {
    let s = UsiScheme::new(users, group_size, modes)?;
    Ok(json!({
        "layout": layout_name(&s),
        "effective_modes": s.table.effective_modes,
        "messages": s.table.message_count(),
        "symbols_per_message": s.message_len(),
        "slots": s.slots(),
    }))
}

pub fn dims(c: &ExperimentConfig) -> Result<Outcome> {
    let setting = c.setting()?;
    let report = dof_report(setting)?;
    let scheme = match setting {
        Setting::Bcgm { users, group_size, modes } => {
            let p = SchemeParams::new(users, group_size, modes)?;
            json!({ "params": p, "dimensions": scheme_dimensions(&p) })
        }
        Setting::Usi { users, group_size, modes } => usi_dims(users, group_size, modes)?,
        Setting::Mapreduce { users, load, modes } => {
            let mut v = usi_dims(users, load + 1, modes)?;
            let files = binomial(users as u64, load as u64).unwrap_or(0);
            v["files"] = json!(files);
            v["effective_ivas"] = json!((users - load) as u64 * files);
            v
        }
        Setting::Mimo { .. } => Value::Null,
    };
    let mut v = record("dims", &report)?;
    v["scheme"] = scheme;
    if let (Some(t), Some(r)) = (c.m_tx, c.m_rx) {
        v["tx_antennas"] = json!(t);
        v["rx_modes"] = json!(r);
    }
    Ok(Outcome { records: vec![v], passed: true, csv: None })
}

pub fn pattern(c: &ExperimentConfig) -> Result<Outcome> {
    let (users, modes, scheme) = match c.setting()? {
        Setting::Bcgm { users, group_size, modes } => {
            let p = SchemeParams::new(users, group_size, modes)?;
            (users, modes, if modes >= 2 { Some(BcgmScheme::new(p)?) } else { None })
        }
        Setting::Usi { users, group_size, modes } => {
            let s = UsiScheme::new(users, group_size, modes)?;
            let m = s.rx_modes();
            match s.layout {
                UsiLayout::Aligned(b) | UsiLayout::Central(Some(b)) => (users, m, Some(b)),
                _ => (users, m, None),
            }
        }
        _ => return Err(BiaError::param("pattern supports --mode bcgm or usi")),
    };
    let mut out = Outcome { passed: true, ..Default::default() };
    for rx in 1..=users {
        let v = match &scheme {
            Some(s) => {
                let p = s.pattern(rx);
                let verdict = verify_alignment(&p.first_phase, &p.desired, &s.params);
                out.passed &= verdict.passed();
                json!({
                    "command": "pattern",
                    "rx": rx,
                    "modes": modes,
                    "desired": p.desired,
                    "first_phase": p.first_phase,
                    "pattern": p.modes,
                    "verdict": if verdict.passed() { "pass" } else { "fail" },
                    "violations": verdict.violations.len(),
                })
            }
            None => json!({
                "command": "pattern",
                "rx": rx,
                "modes": modes,
                "first_phase": [],
                "verdict": "pass",
                "violations": 0,
            }),
        };
        out.records.push(v);
    }
    Ok(out)
}

pub fn simulate(c: &ExperimentConfig) -> Result<Outcome> {
    let config = RunConfig { seed: c.seed()?, snr_db: c.run_snr()? };
    let report = match c.setting()? {
        Setting::Bcgm { users, group_size, modes } => simulate_bcgm(users, group_size, modes, config)?,
        Setting::Usi { users, group_size, modes } => simulate_usi(users, group_size, modes, config)?,
        _ => return Err(BiaError::param("simulate supports --mode bcgm or usi")),
    };
    let passed = report.full_rank && (config.snr_db.is_some() || report.max_relative_error < EXACT_TOL);
    Ok(Outcome { records: vec![record("simulate", &report)?], passed, csv: None })
}

pub fn sweep(c: &ExperimentConfig) -> Result<Outcome> {
    let setting = c.setting()?;
    let snr = if c.snr_db.is_empty() { DEFAULT_SWEEP_SNR_DB.to_vec() } else { c.snr_db.clone() };
    let curve = estimate_rate_curve(setting, &snr, c.trials.unwrap_or(DEFAULT_TRIALS), c.seed()?)?;
    let dof = formula_dof(setting)?;
    let target = *dof.numer() as f64 / *dof.denom() as f64;
    let mut v = record("sweep", &curve)?;
    v["formula_dof"] = json!(format!("{}/{}", dof.numer(), dof.denom()));
    v["slope_relative_gap"] = json!((curve.slope.value - target) / target);
    Ok(Outcome { csv: Some(curve.to_csv()), records: vec![v], passed: true })
}

pub fn mapreduce_demo(c: &ExperimentConfig) -> Result<Outcome> {
    let Setting::Mapreduce { users, load, modes } = c.setting()? else {
        return Err(BiaError::param("mapreduce-demo needs --mode mapreduce"));
    };
    let seed = c.seed()?;
    let files = binomial(users as u64, load as u64).ok_or_else(|| BiaError::param("file count overflows"))? as usize;
    let job = build_job(users, load, random_payloads(files, c.payload_bytes.unwrap_or(DEFAULT_PAYLOAD_BYTES), seed))?;
    let run = run_job(&job, &ShuffleConfig { modes, seed, snr_db: c.run_snr()? })?;
    let records = vec![
        record("mapreduce-demo", json!({ "ledger": run.ledger }))?,
        record("mapreduce-demo", json!({ "reduce": run.outputs }))?,
        record("mapreduce-demo", json!({ "oracle": run.oracle }))?,
    ];
    Ok(Outcome { records, passed: run.oracle.passed, csv: None })
}

pub fn verify(c: &ExperimentConfig) -> Result<Outcome> {
    let seed = c.seed()?;
    let max_k = c.max_k.or(c.k).unwrap_or(DEFAULT_VERIFY_MAX_K);
    let modes: Vec<usize> = match c.m {
        Some(m) => vec![m],
        None => (1..=4).collect(),
    };
    let seeds = seed_range(seed, c.seeds.unwrap_or(DEFAULT_VERIFY_SEEDS));
    let mut out = Outcome { passed: true, ..Default::default() };
    let mut cases = 0;
    let mut failed = 0;
    for p in grid(2..=max_k, &modes) {
        let a = check_alignment(&p, seed)?;
        let d = check_decoding(&p, &seeds)?;
        cases += 1;
        if !(a.passed && d.passed) {
            failed += 1;
        }
        out.records.push(record("verify", json!({ "alignment": a, "decoding": d }))?);
    }
    let ids = check_identities(max_k, &modes)?;
    out.passed = failed == 0 && ids.passed;
    out.records.push(record("verify", json!({ "identities": ids }))?);
    out.records.push(record("verify", json!({ "cases": cases, "failed": failed, "passed": out.passed }))?);
    Ok(out)
}
