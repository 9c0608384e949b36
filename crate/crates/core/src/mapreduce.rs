//! A symmetric MapReduce job whose shuffle runs over the simulated wireless
//! channel.
//!
//! File `n` is stored at the `r` nodes of the `n`-th size-`r` subset. Every
//! node maps each stored file to `K` intermediate values (IVAs), one per
//! reducer. IVAs whose reducer already stores the file are redundant; the
//! rest are relabeled as side-information unicast messages with groups of
//! `r + 1` and sent by the nodes that computed them.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::channel::{draw_channels, power_scale, receive, substream, DOMAIN_PAYLOAD};
use crate::combinatorics::{ordered_subsets, GroupTable};
use crate::error::{BiaError, Result};
use crate::linalg::c64;
use crate::usi::{relabel_mapreduce_to_usi, SideInformation, UsiLayout, UsiScheme};
use crate::Rational;

/// `(reducer, file, payload) -> IVA`.
pub type MapFn = fn(usize, usize, &[u8]) -> Vec<u8>;
/// `(node, IVAs for files 1..=N in order) -> output`.
pub type ReduceFn = fn(usize, &[&[u8]]) -> Vec<u8>;

/// Bytes kept from the map digest.
pub const IVA_BYTES: usize = 16;

/// Decoded symbols farther than this from a constellation point fail a
/// noiseless shuffle.
pub const NOISELESS_TOLERANCE: f64 = 1e-6;

fn hex<S: Serializer>(bytes: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&bytes.iter().map(|b| format!("{b:02x}")).collect::<String>())
}

/// Keyed SHA-256 of the payload, truncated to [`IVA_BYTES`]; empty payloads map to empty IVAs.
pub fn default_map(reducer: usize, file: usize, payload: &[u8]) -> Vec<u8> {
    if payload.is_empty() {
        return Vec::new();
    }
    let mut h = Sha256::new();
    h.update((reducer as u64).to_le_bytes());
    h.update((file as u64).to_le_bytes());
    h.update(payload);
    h.finalize()[..IVA_BYTES].to_vec()
}

/// SHA-256 over the node id and its IVAs in file order.
pub fn default_reduce(node: usize, ivas: &[&[u8]]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update((node as u64).to_le_bytes());
    for a in ivas {
        h.update(a);
    }
    h.finalize().to_vec()
}

/// `count` payloads of `bytes` random bytes each.
pub fn random_payloads(count: usize, bytes: usize, seed: u64) -> Vec<Vec<u8>> {
    (0..count)
        .map(|n| {
            let mut buf = vec![0u8; bytes];
            substream(seed, DOMAIN_PAYLOAD, n as u64, 0).fill_bytes(&mut buf);
            buf
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MapReduceJob {
    pub nodes: usize,
    pub load: usize,
    /// `assignment.groups[n - 1]` stores file `n`.
    pub assignment: GroupTable,
    payloads: Vec<Vec<u8>>,
    map_fn: MapFn,
    reduce_fn: ReduceFn,
}

pub fn build_job(nodes: usize, load: usize, payloads: Vec<Vec<u8>>) -> Result<MapReduceJob> {
    let assignment = ordered_subsets(nodes, load)?;
    if payloads.len() != assignment.len() {
        return Err(BiaError::param(format!(
            "({nodes}, {load}) job needs {} files, got {}",
            assignment.len(),
            payloads.len()
        )));
    }
    Ok(MapReduceJob { nodes, load, assignment, payloads, map_fn: default_map, reduce_fn: default_reduce })
}

impl MapReduceJob {
    pub fn with_map(mut self, f: MapFn) -> Self {
        self.map_fn = f;
        self
    }

    pub fn with_reduce(mut self, f: ReduceFn) -> Self {
        self.reduce_fn = f;
        self
    }

    pub fn files(&self) -> usize {
        self.payloads.len()
    }

    pub fn payload(&self, file: usize) -> &[u8] {
        &self.payloads[file - 1]
    }

    pub fn holders(&self, file: usize) -> &[usize] {
        &self.assignment.groups[file - 1]
    }

    pub fn stores(&self, node: usize, file: usize) -> bool {
        self.assignment.contains(file, node)
    }

    pub fn stored_files(&self, node: usize) -> Vec<usize> {
        (1..=self.files()).filter(|&n| self.stores(node, n)).collect()
    }

    /// Evaluates the map function centrally, ignoring placement.
    pub fn compute(&self, reducer: usize, file: usize) -> Vec<u8> {
        (self.map_fn)(reducer, file, self.payload(file))
    }

    pub fn reduce(&self, node: usize, ivas: &[&[u8]]) -> Vec<u8> {
        (self.reduce_fn)(node, ivas)
    }
}

/// IVAs computed by one node, keyed by `(reducer, file)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeStore {
    pub node: usize,
    ivas: BTreeMap<(usize, usize), Vec<u8>>,
}

impl NodeStore {
    pub fn get(&self, reducer: usize, file: usize) -> Option<&[u8]> {
        self.ivas.get(&(reducer, file)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.ivas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ivas.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapOutput {
    pub stores: Vec<NodeStore>,
}

impl MapOutput {
    pub fn store(&self, node: usize) -> &NodeStore {
        &self.stores[node - 1]
    }
}

/// Every node computes all `K` IVAs of each file it stores.
pub fn map_phase(job: &MapReduceJob) -> MapOutput {
    let stores = (1..=job.nodes)
        .into_par_iter()
        .map(|node| {
            let work: Vec<(usize, usize)> = job
                .stored_files(node)
                .into_iter()
                .flat_map(|n| (1..=job.nodes).map(move |k| (k, n)))
                .collect();
            let ivas = work.into_par_iter().map(|(k, n)| ((k, n), job.compute(k, n))).collect();
            NodeStore { node, ivas }
        })
        .collect();
    MapOutput { stores }
}

const QAM_SCALE: f64 = 0.076_696_498_884_737_05; // 1 / sqrt(170)

/// One unit-average-power 256-QAM symbol per byte: high nibble on the real
/// axis, low nibble on the imaginary axis.
pub fn modulate(bytes: &[u8]) -> Vec<Complex64> {
    let level = |v: u8| (2 * v as i32 - 15) as f64 * QAM_SCALE;
    bytes.iter().map(|&b| Complex64::new(level(b >> 4), level(b & 15))).collect()
}

/// Nearest-point demodulation; also returns the largest distance to the chosen
/// points, in units of the constellation spacing.
pub fn demodulate(symbols: &[Complex64]) -> (Vec<u8>, f64) {
    let mut worst = 0.0f64;
    let mut nibble = |x: f64| {
        let u = (x / QAM_SCALE + 15.0) / 2.0;
        let v = u.round().clamp(0.0, 15.0);
        worst = worst.max((u - v).abs());
        v as u8
    };
    let bytes = symbols.iter().map(|z| (nibble(z.re) << 4) | nibble(z.im)).collect();
    (bytes, worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShuffleConfig {
    pub modes: usize,
    pub seed: u64,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct IvaId {
    pub node: usize,
    pub file: usize,
}

/// An IVA its reducer lacks, with its place in the unicast scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EffectiveIva {
    pub node: usize,
    pub file: usize,
    pub holders: Vec<usize>,
    pub group: usize,
    pub index: usize,
    pub senders: Vec<usize>,
    pub delivered: bool,
    pub symbol_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub node: usize,
    pub file: usize,
    #[serde(serialize_with = "hex")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShuffleLedger {
    pub nodes: usize,
    pub load: usize,
    pub modes: usize,
    pub layout: &'static str,
    pub iva_bytes: usize,
    pub symbols_per_run: usize,
    pub runs: usize,
    pub slots_per_run: usize,
    pub slots_used: usize,
    pub redundant: Vec<IvaId>,
    pub effective: Vec<EffectiveIva>,
    pub delivered: Vec<Delivery>,
    pub max_residual: f64,
    pub symbol_errors: usize,
    pub warnings: Vec<String>,
    #[serde(serialize_with = "crate::serialize_opt_rational")]
    pub achieved_dof: Option<Rational>,
}

impl ShuffleLedger {
    fn empty(job: &MapReduceJob, modes: usize, iva_bytes: usize) -> Self {
        ShuffleLedger {
            nodes: job.nodes,
            load: job.load,
            modes,
            layout: "none",
            iva_bytes,
            symbols_per_run: 0,
            runs: 0,
            slots_per_run: 0,
            slots_used: 0,
            redundant: Vec::new(),
            effective: Vec::new(),
            delivered: Vec::new(),
            max_residual: 0.0,
            symbol_errors: 0,
            warnings: Vec::new(),
            achieved_dof: None,
        }
    }

    pub fn delivered_to(&self, node: usize, file: usize) -> Option<&[u8]> {
        self.delivered.iter().find(|d| d.node == node && d.file == file).map(|d| d.payload.as_slice())
    }
}

fn iva_len(maps: &MapOutput) -> Result<usize> {
    let mut lens = maps.stores.iter().flat_map(|s| s.ivas.values().map(Vec::len));
    let first = lens.next().unwrap_or(0);
    if let Some(other) = lens.find(|&l| l != first) {
        return Err(BiaError::Shuffle(format!("IVAs must share one length, found {first} and {other} bytes")));
    }
    Ok(first)
}

/// Delivers every effective IVA to its reducer over the channel.
pub fn shuffle_phase(job: &MapReduceJob, maps: &MapOutput, config: &ShuffleConfig) -> Result<ShuffleLedger> {
    if config.modes == 0 {
        return Err(BiaError::param("mode count must be at least 1"));
    }
    if maps.stores.len() != job.nodes {
        return Err(BiaError::Shuffle(format!("map output covers {} of {} nodes", maps.stores.len(), job.nodes)));
    }
    let bytes = iva_len(maps)?;
    let mut ledger = ShuffleLedger::empty(job, config.modes, bytes);
    if bytes == 0 {
        return Ok(ledger);
    }
    for n in 1..=job.files() {
        for k in 1..=job.nodes {
            if job.stores(k, n) {
                ledger.redundant.push(IvaId { node: k, file: n });
            }
        }
    }
    if job.load == job.nodes {
        return Ok(ledger);
    }

    let relabel = relabel_mapreduce_to_usi(job.nodes, job.load)?;
    let scheme = UsiScheme::new(job.nodes, job.load + 1, config.modes)?;
    let table = &scheme.table;
    ledger.layout = match scheme.layout {
        UsiLayout::Aligned(_) => "aligned",
        UsiLayout::Schedule(_) => "schedule",
        UsiLayout::Central(_) => "central",
    };

    // Route each unicast message to the nodes that will transmit it and make
    // sure every one of them computed it.
    let mut truth = Vec::with_capacity(table.message_count());
    for e in table.entries() {
        let label = relabel.to_mapreduce(e.group, e.index);
        let file = job.assignment.group_index(&label.holders).ok_or_else(|| {
            BiaError::Shuffle(format!("holder set {:?} stores no file", label.holders))
        })?;
        let senders = match &scheme.layout {
            UsiLayout::Schedule(s) => vec![s[e.group - 1].senders[e.index - 1]],
            _ => e.support.clone(),
        };
        let mut value = None;
        for &tx in &senders {
            let iva = maps.store(tx).get(label.dest, file).ok_or_else(|| {
                BiaError::Shuffle(format!("node {tx} would transmit IVA ({}, {file}) it did not compute", label.dest))
            })?;
            value.get_or_insert(iva);
        }
        truth.push(value.expect("every message has a sender").to_vec());
        ledger.effective.push(EffectiveIva {
            node: label.dest,
            file,
            holders: label.holders.clone(),
            group: e.group,
            index: e.index,
            senders,
            delivered: false,
            symbol_errors: 0,
        });
    }

    let len = scheme.message_len();
    let slots = scheme.slots();
    let runs = bytes.div_ceil(len);
    let padded = |b: &[u8]| {
        let mut s = modulate(b);
        s.resize(runs * len, c64(0.0));
        s
    };
    let symbols: Vec<Vec<Complex64>> = truth.iter().map(|b| padded(b)).collect();
    let power = match config.snr_db {
        Some(db) => Some((power_scale(scheme.mean_energy(), 10f64.powf(db / 10.0))?, 1.0)),
        None => None,
    };
    let (scale, var) = power.unwrap_or((1.0, 0.0));

    let mut x = Vec::with_capacity(runs * slots * scheme.tx_count());
    for run in 0..runs {
        let part: Vec<Vec<Complex64>> = symbols.iter().map(|s| s[run * len..(run + 1) * len].to_vec()).collect();
        x.extend(scheme.transmit(&part)?.into_iter().map(|v| v * c64(scale)));
    }
    let book = draw_channels(job.nodes, scheme.rx_modes(), scheme.tx_count(), runs, slots, config.seed)?;

    let mut decoded: BTreeMap<usize, Vec<Complex64>> = BTreeMap::new();
    for k in 1..=job.nodes {
        let pattern: Vec<u32> = scheme.pattern(k).repeat(runs);
        let y = receive(&book, k, &pattern, &x, var, k as u64)?;
        let decoders = scheme.decoders(k)?;
        let store = maps.store(k);
        for run in 0..runs {
            // side information comes only from what this node mapped itself
            let mut side = SideInformation::new(k);
            for e in table.entries().iter().filter(|e| table.knows(k, e.group, e.index)) {
                let label = relabel.to_mapreduce(e.group, e.index);
                let file = job.assignment.group_index(&label.holders).expect("checked above");
                let own = store.get(label.dest, file).ok_or_else(|| {
                    BiaError::Shuffle(format!("node {k} is missing its own IVA ({}, {file})", label.dest))
                })?;
                let s = padded(own);
                side.insert(e.group, e.index, s[run * len..(run + 1) * len].iter().map(|v| v * c64(scale)).collect());
            }
            let out = scheme.decode(k, &y.samples[run * slots..(run + 1) * slots], &side, &decoders, &book, run + 1)?;
            ledger.warnings.extend(out.warnings.into_iter().map(|w| format!("node {k} run {}: {w}", run + 1)));
            for m in out.messages {
                decoded
                    .entry(table.index(m.group, m.index))
                    .or_default()
                    .extend(m.symbols.iter().map(|v| v / c64(scale)));
            }
        }
    }

    for (i, e) in ledger.effective.iter_mut().enumerate() {
        let symbols = decoded
            .get(&i)
            .ok_or_else(|| BiaError::Shuffle(format!("IVA ({}, {}) was never decoded", e.node, e.file)))?;
        let (payload, residual) = demodulate(&symbols[..bytes]);
        ledger.max_residual = ledger.max_residual.max(residual);
        e.symbol_errors = payload.iter().zip(&truth[i]).filter(|(a, b)| a != b).count();
        e.delivered = e.symbol_errors == 0;
        ledger.symbol_errors += e.symbol_errors;
        ledger.delivered.push(Delivery { node: e.node, file: e.file, payload });
    }
    ledger.delivered.sort_by_key(|d| (d.node, d.file));
    if config.snr_db.is_none() && ledger.max_residual > NOISELESS_TOLERANCE {
        return Err(BiaError::Shuffle(format!(
            "noiseless shuffle left residual {:.3e} (tolerance {NOISELESS_TOLERANCE:.0e}), {} symbol errors",
            ledger.max_residual, ledger.symbol_errors
        )));
    }
    ledger.symbols_per_run = len;
    ledger.runs = runs;
    ledger.slots_per_run = slots;
    ledger.slots_used = runs * slots;
    ledger.achieved_dof = Some(Rational::new((table.message_count() * len) as i128, slots as i128));
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReduceOutput {
    pub node: usize,
    #[serde(serialize_with = "hex")]
    pub output: Vec<u8>,
}

fn gathered<'a>(job: &MapReduceJob, maps: &'a MapOutput, ledger: &'a ShuffleLedger, node: usize) -> Result<Vec<&'a [u8]>> {
    (1..=job.files())
        .map(|n| {
            let local = if job.stores(node, n) {
                maps.store(node).get(node, n)
            } else if ledger.iva_bytes == 0 {
                Some(&[][..])
            } else {
                ledger.delivered_to(node, n)
            };
            local.ok_or_else(|| BiaError::Shuffle(format!("node {node} never obtained its IVA for file {n}")))
        })
        .collect()
}

/// Each node reduces its own IVAs together with the delivered ones.
pub fn reduce_phase(job: &MapReduceJob, maps: &MapOutput, ledger: &ShuffleLedger) -> Result<Vec<ReduceOutput>> {
    (1..=job.nodes)
        .into_par_iter()
        .map(|node| Ok(ReduceOutput { node, output: job.reduce(node, &gathered(job, maps, ledger, node)?) }))
        .collect()
}

/// Reduce outputs computed from all files at one place.
pub fn oracle_outputs(job: &MapReduceJob) -> Vec<ReduceOutput> {
    (1..=job.nodes)
        .into_par_iter()
        .map(|node| {
            let ivas: Vec<Vec<u8>> = (1..=job.files()).map(|n| job.compute(node, n)).collect();
            let refs: Vec<&[u8]> = ivas.iter().map(Vec::as_slice).collect();
            ReduceOutput { node, output: job.reduce(node, &refs) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub passed: bool,
    /// `(node, first differing file)` for every node whose output disagrees.
    pub mismatches: Vec<IvaId>,
}

pub fn oracle_report(job: &MapReduceJob, maps: &MapOutput, ledger: &ShuffleLedger) -> Result<OracleReport> {
    let outputs = reduce_phase(job, maps, ledger)?;
    let oracle = oracle_outputs(job);
    let mut mismatches = Vec::new();
    for (got, want) in outputs.iter().zip(&oracle) {
        if got.output != want.output {
            let ivas = gathered(job, maps, ledger, got.node)?;
            let file = (1..=job.files()).find(|&n| ivas[n - 1] != job.compute(got.node, n)).unwrap_or(0);
            mismatches.push(IvaId { node: got.node, file });
        }
    }
    Ok(OracleReport { passed: mismatches.is_empty(), mismatches })
}

/// Bit-exact comparison of distributed and central reduce outputs.
pub fn oracle_check(job: &MapReduceJob, maps: &MapOutput, ledger: &ShuffleLedger) -> Result<()> {
    match oracle_report(job, maps, ledger)?.mismatches.first() {
        None => Ok(()),
        Some(m) => Err(BiaError::Correctness { node: m.node, file: m.file }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReduceRun {
    pub ledger: ShuffleLedger,
    pub outputs: Vec<ReduceOutput>,
    pub oracle: OracleReport,
}

/// Map, shuffle, reduce and oracle comparison in one call.
pub fn run_job(job: &MapReduceJob, config: &ShuffleConfig) -> Result<MapReduceRun> {
    let maps = map_phase(job);
    let ledger = shuffle_phase(job, &maps, config)?;
    let outputs = reduce_phase(job, &maps, &ledger)?;
    let oracle = oracle_report(job, &maps, &ledger)?;
    Ok(MapReduceRun { ledger, outputs, oracle })
}
