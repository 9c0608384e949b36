//! Unicast with side information over `K` distributed single-antenna
//! transmitters.
//!
//! Super-message `n` bundles `G` messages `W_{n,g}`, one per member of group
//! `S_n`: `W_{n,g}` is wanted by `S_n(g)` and known to the other members.
//! With `M' = min(G - 1, M)` modes, the first `M'` knowing transmitters of
//! each message jointly play the `M'` antennas of the groupcast scheme, so
//! every receiver sees the groupcast signal structure with a per-message
//! channel and strips its siblings using side information. With a single mode
//! the messages of one super-message share a slot, each from a different
//! knowing transmitter.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::bcgm::{undo_block_channel, BcgmScheme, DecoderColumns, PrecoderSet, SchemeParams};
use crate::channel::ChannelBook;
use crate::combinatorics::{mod1, ordered_subsets, GroupTable};
use crate::error::{BiaError, Result};
use crate::linalg::{c64, singular_values, ComplexMatrix};

/// Block channels worse conditioned than this produce a warning.
pub const CONDITION_WARNING: f64 = 1e8;

/// Modes actually used for side-information unicast with group size `g`.
pub fn effective_modes(group_size: usize, modes: usize) -> usize {
    if group_size <= 1 {
        modes
    } else {
        modes.min(group_size - 1)
    }
}

/// Modes used when transmitter and receivers have different antenna counts.
pub fn effective_modes_asymmetric(tx_antennas: usize, rx_modes: usize) -> usize {
    tx_antennas.min(rx_modes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsiEntry {
    pub group: usize,
    pub index: usize,
    pub desired_rx: usize,
    pub knowing: Vec<usize>,
    /// Transmitters that carry this message, antenna `j` played by `support[j - 1]`.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsiMessageTable {
    pub users: usize,
    pub group_size: usize,
    pub modes: usize,
    pub effective_modes: usize,
    pub table: GroupTable,
    entries: Vec<UsiEntry>,
}

impl UsiMessageTable {
    pub fn new(users: usize, group_size: usize, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(BiaError::param("mode count must be at least 1"));
        }
        let table = ordered_subsets(users, group_size)?;
        let m_eff = effective_modes(group_size, modes);
        let width = m_eff.min(group_size - 1);
        let mut entries = Vec::with_capacity(table.len() * group_size);
        for (i, s) in table.groups.iter().enumerate() {
            for (g, &rx) in s.iter().enumerate() {
                let knowing: Vec<usize> = s.iter().copied().filter(|&t| t != rx).collect();
                entries.push(UsiEntry {
                    group: i + 1,
                    index: g + 1,
                    desired_rx: rx,
                    support: knowing[..width].to_vec(),
                    knowing,
                });
            }
        }
        Ok(UsiMessageTable { users, group_size, modes, effective_modes: m_eff, table, entries })
    }

    pub fn groups(&self) -> usize {
        self.table.len()
    }

    pub fn message_count(&self) -> usize {
        self.entries.len()
    }

    /// Flat position of `W_{n,g}` in message vectors.
    pub fn index(&self, n: usize, g: usize) -> usize {
        assert!((1..=self.groups()).contains(&n) && (1..=self.group_size).contains(&g));
        (n - 1) * self.group_size + g - 1
    }

    pub fn entry(&self, n: usize, g: usize) -> &UsiEntry {
        &self.entries[self.index(n, g)]
    }

    pub fn entries(&self) -> &[UsiEntry] {
        &self.entries
    }

    /// Mutable access for fault-injection tests of the knowledge check.
    #[doc(hidden)]
    pub fn entries_mut(&mut self) -> &mut [UsiEntry] {
        &mut self.entries
    }

    /// Whether transmitter `tx` holds `W_{n,g}` before transmission.
    pub fn knows(&self, tx: usize, n: usize, g: usize) -> bool {
        self.table.contains(n, tx) && self.table.groups[n - 1][g - 1] != tx
    }
}

pub fn tx_support(n: usize, g: usize, table: &UsiMessageTable) -> &[usize] {
    &table.entry(n, g).support
}

/// A message in the MapReduce view: the IVA computed by every node in
/// `holders`, needed by `dest`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct MapReduceLabel {
    pub holders: Vec<usize>,
    pub dest: usize,
}

/// Bijection between `(holders, dest)` labels and `(n, g)` message positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelabelMap {
    pub users: usize,
    pub load: usize,
    pub table: GroupTable,
    labels: Vec<MapReduceLabel>,
}

impl RelabelMap {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label of `W_{n,g}`.
    pub fn to_mapreduce(&self, n: usize, g: usize) -> &MapReduceLabel {
        &self.labels[(n - 1) * self.table.g + g - 1]
    }

    pub fn to_usi(&self, label: &MapReduceLabel) -> Result<(usize, usize)> {
        let bad = || BiaError::param(format!("label {label:?} is not a shuffle message"));
        if label.holders.len() != self.load || label.holders.contains(&label.dest) {
            return Err(bad());
        }
        let mut group = label.holders.clone();
        group.push(label.dest);
        group.sort_unstable();
        let n = self.table.group_index(&group).ok_or_else(bad)?;
        let g = group.binary_search(&label.dest).map_err(|_| bad())? + 1;
        Ok((n, g))
    }

    pub fn labels(&self) -> &[MapReduceLabel] {
        &self.labels
    }
}

/// Maps the shuffle of a `(K, r)` job onto side-information unicast with groups of `r + 1`.
pub fn relabel_mapreduce_to_usi(users: usize, load: usize) -> Result<RelabelMap> {
    if load == 0 || load >= users {
        return Err(BiaError::param(format!("need 1 <= r <= K-1, got K={users}, r={load}")));
    }
    let table = ordered_subsets(users, load + 1)?;
    let labels = table
        .groups
        .iter()
        .flat_map(|s| {
            s.iter().map(move |&dest| MapReduceLabel {
                holders: s.iter().copied().filter(|&t| t != dest).collect(),
                dest,
            })
        })
        .collect();
    Ok(RelabelMap { users, load, table, labels })
}

/// Single-mode schedule: slot `n` carries every `W_{n,g}`, sent by
/// `S_n(g + 1)` (cyclically).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleSlot {
    pub group: usize,
    /// `senders[g - 1]` transmits `W_{n,g}`.
    pub senders: Vec<usize>,
}

pub fn m1_schedule(users: usize, group_size: usize) -> Result<Vec<ScheduleSlot>> {
    if group_size < 2 {
        return Err(BiaError::param("the single-mode schedule needs G >= 2"));
    }
    let table = ordered_subsets(users, group_size)?;
    let g = group_size as i64;
    table
        .groups
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let senders = (1..=g)
                .map(|idx| Ok(s[mod1(idx + 1, g)? as usize - 1]))
                .collect::<Result<Vec<_>>>()?;
            Ok(ScheduleSlot { group: i + 1, senders })
        })
        .collect()
}

/// Transmit samples of `W_{n,g}` alone: `slots x users`, row-major.
///
/// Column `support[j - 1]` carries antenna `j` of the groupcast precoder applied
/// to `symbols`; all other columns stay zero.
pub fn distributed_signal(
    n: usize,
    symbols: &[Complex64],
    precoders: &PrecoderSet,
    support: &[usize],
    users: usize,
) -> Result<Vec<Complex64>> {
    let p = &precoders.params;
    if support.len() != p.modes {
        return Err(BiaError::param(format!(
            "support has {} transmitters, scheme needs {}",
            support.len(),
            p.modes
        )));
    }
    if let Some(&t) = support.iter().find(|&&t| t == 0 || t > users) {
        return Err(BiaError::param(format!("transmitter {t} outside 1..={users}")));
    }
    let streams = precoders.encode_one(n, symbols)?;
    let mut out = vec![c64(0.0); p.slots * users];
    for slot in 0..p.slots {
        for (j, &tx) in support.iter().enumerate() {
            out[slot * users + tx - 1] = streams[slot * p.modes + j];
        }
    }
    Ok(out)
}

/// Checks that every support transmitter already holds the message it is given.
pub fn check_knowledge(table: &UsiMessageTable) -> Result<()> {
    for e in table.entries() {
        if let Some(&tx) = e.support.iter().find(|&&tx| !table.knows(tx, e.group, e.index)) {
            return Err(BiaError::Encoding(format!(
                "transmitter {tx} is routed message ({}, {}) it does not know",
                e.group, e.index
            )));
        }
    }
    Ok(())
}

/// `X = sum over (n, g) of X_{n,g}`, `slots x users`, row-major. `messages` is
/// indexed by [`UsiMessageTable::index`].
pub fn usi_transmit_all(
    table: &UsiMessageTable,
    messages: &[Vec<Complex64>],
    precoders: &PrecoderSet,
) -> Result<Vec<Complex64>> {
    check_knowledge(table)?;
    if messages.len() != table.message_count() {
        return Err(BiaError::Encoding(format!(
            "{} messages supplied, table has {}",
            messages.len(),
            table.message_count()
        )));
    }
    let p = &precoders.params;
    let users = table.users;
    let mut x = vec![c64(0.0); p.slots * users];
    for e in table.entries() {
        let w = &messages[table.index(e.group, e.index)];
        let part = distributed_signal(e.group, w, precoders, &e.support, users)?;
        for (a, b) in x.iter_mut().zip(part) {
            *a += b;
        }
    }
    Ok(x)
}

/// Messages one receiver holds before transmission.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SideInformation {
    pub rx: usize,
    known: BTreeMap<(usize, usize), Vec<Complex64>>,
}

impl SideInformation {
    pub fn new(rx: usize) -> Self {
        SideInformation { rx, known: BTreeMap::new() }
    }

    pub fn insert(&mut self, n: usize, g: usize, symbols: Vec<Complex64>) {
        self.known.insert((n, g), symbols);
    }

    /// Everything `rx` knows out of the full message set.
    pub fn gather(rx: usize, table: &UsiMessageTable, messages: &[Vec<Complex64>]) -> Self {
        let known = table
            .entries()
            .iter()
            .filter(|e| table.knows(rx, e.group, e.index))
            .map(|e| ((e.group, e.index), messages[table.index(e.group, e.index)].clone()))
            .collect();
        SideInformation { rx, known }
    }

    pub fn get(&self, n: usize, g: usize) -> Option<&[Complex64]> {
        self.known.get(&(n, g)).map(Vec::as_slice)
    }

    pub fn remove(&mut self, n: usize, g: usize) -> Option<Vec<Complex64>> {
        self.known.remove(&(n, g))
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodedMessage {
    pub group: usize,
    pub index: usize,
    pub symbols: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsiDecoded {
    pub rx: usize,
    pub messages: Vec<DecodedMessage>,
    pub warnings: Vec<String>,
}

fn condition(h: &ComplexMatrix) -> f64 {
    let s = singular_values(h);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Recovers every message wanted by `k` from the aligned-scheme output `y`.
///
/// `decoders` are the groupcast decoders of `k` in wanted-group order, built for
/// the clipped mode count.
pub fn usi_decode(
    k: usize,
    y: &[Complex64],
    side: &SideInformation,
    decoders: &[DecoderColumns],
    table: &UsiMessageTable,
    book: &ChannelBook,
    block: usize,
) -> Result<UsiDecoded> {
    let modes = table.effective_modes;
    let mut messages = Vec::with_capacity(decoders.len());
    let mut warnings = Vec::new();
    for d in decoders {
        let n = d.msg;
        let own = table.table.member_position(n, k)?;
        let mut z = d.apply(y);
        for g in (1..=table.group_size).filter(|&g| g != own) {
            let w = side.get(n, g).ok_or_else(|| {
                BiaError::Decoding(format!("receiver {k} lacks side information for message ({n}, {g})"))
            })?;
            if w.len() != z.len() {
                return Err(BiaError::Decoding(format!(
                    "side information for ({n}, {g}) has {} symbols, expected {}",
                    w.len(),
                    z.len()
                )));
            }
            let h = book.mode_submatrix(k, block, modes, tx_support(n, g, table));
            for (zb, wb) in z.chunks_mut(modes).zip(w.chunks(modes)) {
                let hw = &h * ComplexMatrix::from_column_slice(modes, 1, wb);
                for (a, b) in zb.iter_mut().zip(hw.iter()) {
                    *a -= b;
                }
            }
        }
        let h = book.mode_submatrix(k, block, modes, tx_support(n, own, table));
        let c = condition(&h);
        if c > CONDITION_WARNING {
            warnings.push(format!("message ({n}, {own}) block channel condition number {c:.3e}"));
        }
        messages.push(DecodedMessage { group: n, index: own, symbols: undo_block_channel(&z, &h)? });
    }
    Ok(UsiDecoded { rx: k, messages, warnings })
}

/// How a side-information unicast run is carried out.
#[derive(Debug, Clone)]
pub enum UsiLayout {
    /// Distributed groupcast scheme on `min(G - 1, M)` modes.
    Aligned(BcgmScheme),
    /// One slot per super-message, single mode.
    Schedule(Vec<ScheduleSlot>),
    /// `G = 1`: no side information anywhere; a central `M`-antenna groupcast
    /// scheme, or one slot per message when `M = 1`.
    Central(Option<BcgmScheme>),
}

#[derive(Debug, Clone)]
pub struct UsiScheme {
    pub table: UsiMessageTable,
    pub layout: UsiLayout,
}

impl UsiScheme {
    pub fn new(users: usize, group_size: usize, modes: usize) -> Result<Self> {
        let table = UsiMessageTable::new(users, group_size, modes)?;
        let m = table.effective_modes;
        let layout = if group_size == 1 {
            if m >= 2 {
                UsiLayout::Central(Some(BcgmScheme::new(SchemeParams::new(users, 1, m)?)?))
            } else {
                SchemeParams::new(users, 1, 1)?;
                UsiLayout::Central(None)
            }
        } else if m == 1 {
            UsiLayout::Schedule(m1_schedule(users, group_size)?)
        } else {
            UsiLayout::Aligned(BcgmScheme::new(SchemeParams::new(users, group_size, m)?)?)
        };
        Ok(UsiScheme { table, layout })
    }

    /// Symbols each message carries per run.
    pub fn message_len(&self) -> usize {
        match &self.layout {
            UsiLayout::Aligned(s) | UsiLayout::Central(Some(s)) => s.params.streams,
            UsiLayout::Schedule(_) | UsiLayout::Central(None) => 1,
        }
    }

    pub fn slots(&self) -> usize {
        match &self.layout {
            UsiLayout::Aligned(s) | UsiLayout::Central(Some(s)) => s.params.slots,
            UsiLayout::Schedule(v) => v.len(),
            UsiLayout::Central(None) => self.table.groups(),
        }
    }

    /// Transmit antennas in the channel book: one per node, or the central array.
    pub fn tx_count(&self) -> usize {
        match &self.layout {
            UsiLayout::Aligned(_) | UsiLayout::Schedule(_) => self.table.users,
            UsiLayout::Central(Some(s)) => s.params.modes,
            UsiLayout::Central(None) => 1,
        }
    }

    /// Receive modes actually switched among.
    pub fn rx_modes(&self) -> usize {
        self.table.effective_modes.max(1)
    }

    pub fn pattern(&self, k: usize) -> Vec<u32> {
        match &self.layout {
            UsiLayout::Aligned(s) | UsiLayout::Central(Some(s)) => s.pattern(k).modes.clone(),
            _ => vec![1; self.slots()],
        }
    }

    /// Wanted `(n, g)` of receiver `k`.
    pub fn wanted(&self, k: usize) -> Vec<(usize, usize)> {
        self.table
            .entries()
            .iter()
            .filter(|e| e.desired_rx == k)
            .map(|e| (e.group, e.index))
            .collect()
    }

    /// Largest expected per-transmitter slot energy for unit-power symbols.
    pub fn peak_energy(&self) -> f64 {
        match &self.layout {
            UsiLayout::Aligned(s) => {
                let p = &s.params;
                let lambda = &s.precoders.lambda;
                let mut per_tx = vec![0.0f64; self.table.users];
                let mut peak = 0.0f64;
                for v in 1..=p.rounds {
                    per_tx.iter_mut().for_each(|e| *e = 0.0);
                    for e in self.table.entries() {
                        for &tx in &e.support {
                            per_tx[tx - 1] += lambda.coeff(v, e.group).norm_sqr();
                        }
                    }
                    peak = per_tx.iter().copied().fold(peak, f64::max);
                }
                for n in 1..=p.groups {
                    per_tx.iter_mut().for_each(|e| *e = 0.0);
                    for g in 1..=self.table.group_size {
                        for &tx in tx_support(n, g, &self.table) {
                            per_tx[tx - 1] += 1.0;
                        }
                    }
                    peak = per_tx.iter().copied().fold(peak, f64::max);
                }
                peak
            }
            UsiLayout::Central(Some(s)) => s.precoders.peak_slot_energy(),
            _ => 1.0,
        }
    }

    /// Largest per-transmitter energy averaged over the run, for unit-power symbols.
    pub fn mean_energy(&self) -> f64 {
        match &self.layout {
            UsiLayout::Aligned(s) => {
                let p = &s.params;
                let mut per_tx = vec![0.0f64; self.table.users];
                for e in self.table.entries() {
                    let rounds: f64 = (1..=p.rounds).map(|v| s.precoders.lambda.coeff(v, e.group).norm_sqr()).sum();
                    for &tx in &e.support {
                        per_tx[tx - 1] += rounds * p.phase_len() as f64 + p.blocks as f64;
                    }
                }
                per_tx.iter().copied().fold(0.0, f64::max) / p.slots as f64
            }
            UsiLayout::Schedule(schedule) => {
                let mut per_tx = vec![0.0f64; self.table.users];
                for slot in schedule {
                    for &tx in &slot.senders {
                        per_tx[tx - 1] += 1.0;
                    }
                }
                per_tx.iter().copied().fold(0.0, f64::max) / schedule.len() as f64
            }
            UsiLayout::Central(Some(s)) => s.precoders.mean_antenna_energy(),
            UsiLayout::Central(None) => 1.0,
        }
    }

    /// Transmit matrix `slots x tx_count`, row-major, for `messages` indexed by
    /// [`UsiMessageTable::index`], each of [`Self::message_len`] symbols.
    pub fn transmit(&self, messages: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
        if messages.len() != self.table.message_count() {
            return Err(BiaError::Encoding(format!(
                "{} messages supplied, table has {}",
                messages.len(),
                self.table.message_count()
            )));
        }
        if let Some(w) = messages.iter().find(|w| w.len() != self.message_len()) {
            return Err(BiaError::Encoding(format!(
                "message has {} symbols, expected {}",
                w.len(),
                self.message_len()
            )));
        }
        match &self.layout {
            UsiLayout::Aligned(s) => usi_transmit_all(&self.table, messages, &s.precoders),
            UsiLayout::Central(Some(s)) => s.precoders.encode(messages),
            UsiLayout::Central(None) => Ok(messages.iter().map(|w| w[0]).collect()),
            UsiLayout::Schedule(schedule) => {
                let users = self.table.users;
                let mut x = vec![c64(0.0); schedule.len() * users];
                for slot in schedule {
                    for (g, &tx) in slot.senders.iter().enumerate() {
                        if !self.table.knows(tx, slot.group, g + 1) {
                            return Err(BiaError::Encoding(format!(
                                "transmitter {tx} is scheduled message ({}, {}) it does not know",
                                slot.group,
                                g + 1
                            )));
                        }
                        x[(slot.group - 1) * users + tx - 1] += messages[self.table.index(slot.group, g + 1)][0];
                    }
                }
                Ok(x)
            }
        }
    }

    /// Decoders for receiver `k`; empty for layouts that need none.
    pub fn decoders(&self, k: usize) -> Result<Vec<DecoderColumns>> {
        match &self.layout {
            UsiLayout::Aligned(s) | UsiLayout::Central(Some(s)) => s.decoders(k),
            _ => Ok(Vec::new()),
        }
    }

    /// Recovers the messages wanted by `k` from its received samples.
    pub fn decode(
        &self,
        k: usize,
        y: &[Complex64],
        side: &SideInformation,
        decoders: &[DecoderColumns],
        book: &ChannelBook,
        block: usize,
    ) -> Result<UsiDecoded> {
        match &self.layout {
            UsiLayout::Aligned(_) => usi_decode(k, y, side, decoders, &self.table, book, block),
            UsiLayout::Central(Some(_)) => {
                let h = book.receiver_channel_matrix(k, block);
                let mut warnings = Vec::new();
                let c = condition(&h);
                if c > CONDITION_WARNING {
                    warnings.push(format!("mode channel condition number {c:.3e}"));
                }
                let messages = decoders
                    .iter()
                    .map(|d| {
                        Ok(DecodedMessage { group: d.msg, index: 1, symbols: undo_block_channel(&d.apply(y), &h)? })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(UsiDecoded { rx: k, messages, warnings })
            }
            UsiLayout::Central(None) => {
                let n = self.table.table.desired_indices(k)?[0];
                let h = book.vector(k, 1, block)[0];
                if h == c64(0.0) {
                    return Err(BiaError::Decoding("zero channel".into()));
                }
                let symbols = vec![y[n - 1] / h];
                Ok(UsiDecoded { rx: k, messages: vec![DecodedMessage { group: n, index: 1, symbols }], warnings: vec![] })
            }
            UsiLayout::Schedule(schedule) => {
                let mut messages = Vec::new();
                for n in self.table.table.desired_indices(k)? {
                    let own = self.table.table.member_position(n, k)?;
                    let senders = &schedule[n - 1].senders;
                    let h = book.vector(k, 1, block);
                    let mut z = y[n - 1];
                    for g in (1..=self.table.group_size).filter(|&g| g != own) {
                        let w = side.get(n, g).ok_or_else(|| {
                            BiaError::Decoding(format!(
                                "receiver {k} lacks side information for message ({n}, {g})"
                            ))
                        })?;
                        z -= h[senders[g - 1] - 1] * w[0];
                    }
                    let gain = h[senders[own - 1] - 1];
                    if gain == c64(0.0) {
                        return Err(BiaError::Decoding("zero channel".into()));
                    }
                    messages.push(DecodedMessage { group: n, index: own, symbols: vec![z / gain] });
                }
                Ok(UsiDecoded { rx: k, messages, warnings: vec![] })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcgm::effective_mode_matrix;
    use crate::channel::{draw_channels, random_symbols, receive};
    use crate::linalg::{kron, numeric_rank, DEFAULT_TOL};

    #[test]
    fn supports_follow_group_order() {
        let t = UsiMessageTable::new(4, 3, 2).unwrap();
        assert_eq!(tx_support(1, 2, &t), &[1, 3]);
        assert_eq!(tx_support(1, 3, &t), &[1, 2]);
        assert_eq!(tx_support(1, 1, &t), &[2, 3]);
        for e in t.entries() {
            assert_eq!(e.knowing.len(), 2);
            assert!(!e.knowing.contains(&e.desired_rx));
            assert!(e.support.iter().all(|s| e.knowing.contains(s)));
        }
        let wide = UsiMessageTable::new(5, 3, 4).unwrap();
        assert_eq!(wide.effective_modes, 2);
        assert_eq!(wide.entry(3, 1).support, wide.entry(3, 1).knowing);
    }

    #[test]
    fn mode_clipping() {
        assert_eq!(effective_modes(3, 2), 2);
        assert_eq!(effective_modes(2, 2), 1);
        assert_eq!(effective_modes(4, 5), 3);
        assert_eq!(effective_modes_asymmetric(4, 2), 2);
    }

    #[test]
    fn relabel_reference_case() {
        let map = relabel_mapreduce_to_usi(4, 2).unwrap();
        assert_eq!(map.len(), 12);
        let l = |h: &[usize], d| MapReduceLabel { holders: h.to_vec(), dest: d };
        assert_eq!(map.to_mapreduce(1, 1), &l(&[2, 3], 1));
        assert_eq!(map.to_mapreduce(1, 2), &l(&[1, 3], 2));
        assert_eq!(map.to_mapreduce(1, 3), &l(&[1, 2], 3));
        let small = relabel_mapreduce_to_usi(2, 1).unwrap();
        assert_eq!(small.labels(), &[l(&[2], 1), l(&[1], 2)]);
        assert!(relabel_mapreduce_to_usi(3, 3).is_err());
        assert!(map.to_usi(&l(&[1, 2], 2)).is_err());
    }

    #[test]
    fn relabel_round_trips() {
        for users in 2..=6 {
            for load in 1..users {
                let map = relabel_mapreduce_to_usi(users, load).unwrap();
                let expected = (users - load) as u64 * crate::combinatorics::binomial(users as u64, load as u64).unwrap();
                assert_eq!(map.len() as u64, expected);
                let mut seen = std::collections::BTreeSet::new();
                for n in 1..=map.table.len() {
                    for g in 1..=load + 1 {
                        let label = map.to_mapreduce(n, g);
                        assert_eq!(label.dest, map.table.groups[n - 1][g - 1]);
                        assert_eq!(map.to_usi(label).unwrap(), (n, g));
                        assert!(seen.insert(label.clone()));
                    }
                }
            }
        }
    }

    #[test]
    fn single_mode_schedule() {
        let s = m1_schedule(4, 3).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].senders, vec![2, 3, 1]);
        for slot in &s {
            let mut tx = slot.senders.clone();
            tx.sort_unstable();
            tx.dedup();
            assert_eq!(tx.len(), 3);
        }
        assert!(m1_schedule(4, 1).is_err());
    }

    fn aligned(k: usize, g: usize, m: usize) -> (UsiScheme, BcgmScheme) {
        let s = UsiScheme::new(k, g, m).unwrap();
        let UsiLayout::Aligned(b) = &s.layout else { panic!("expected aligned layout") };
        let b = b.clone();
        (s, b)
    }

    #[test]
    fn distributed_signal_layout() {
        let (s, b) = aligned(4, 3, 2);
        let w: Vec<_> = (1..=2).map(|i| c64(i as f64)).collect();
        let x = distributed_signal(1, &w, &b.precoders, tx_support(1, 1, &s.table), 4).unwrap();
        // slot 2, transmitter 2 carries antenna 1 of the first block
        assert_eq!(x[4 + 1], b.precoders.lambda.coeff(2, 1) * w[0]);
        for slot in 0..7 {
            assert_eq!(x[slot * 4], c64(0.0));
            assert_eq!(x[slot * 4 + 3], c64(0.0));
        }
        let zero = distributed_signal(1, &[c64(0.0); 2], &b.precoders, &[2, 3], 4).unwrap();
        assert!(zero.iter().all(|z| *z == c64(0.0)));
        assert!(distributed_signal(1, &w, &b.precoders, &[2], 4).is_err());
    }

    #[test]
    fn first_transmitter_slot_one_sums_its_messages() {
        let (s, b) = aligned(4, 3, 2);
        let msgs: Vec<Vec<Complex64>> =
            (0..12).map(|i| vec![Complex64::new(i as f64, 1.0), Complex64::new(-1.0, i as f64)]).collect();
        let x = usi_transmit_all(&s.table, &msgs, &b.precoders).unwrap();
        let w = |n, g| msgs[s.table.index(n, g)][0];
        let expected = w(1, 2) + w(1, 3) + w(2, 2) + w(2, 3) + w(3, 2) + w(3, 3);
        assert!((x[0] - expected).norm() < 1e-12);
        // one message alone reproduces its distributed signal
        let mut single = vec![vec![c64(0.0); 2]; 12];
        single[5] = msgs[5].clone();
        let e = &s.table.entries()[5];
        assert_eq!(
            usi_transmit_all(&s.table, &single, &b.precoders).unwrap(),
            distributed_signal(e.group, &msgs[5], &b.precoders, &e.support, 4).unwrap()
        );
    }

    #[test]
    fn routing_to_unaware_transmitter_is_refused() {
        let (mut s, b) = aligned(4, 3, 2);
        s.table.entries_mut()[0].support = vec![1, 3];
        let msgs = vec![vec![c64(1.0); 2]; 12];
        assert!(matches!(usi_transmit_all(&s.table, &msgs, &b.precoders), Err(BiaError::Encoding(_))));
    }

    fn noiseless_errors(k: usize, g: usize, m: usize, seed: u64) -> f64 {
        let s = UsiScheme::new(k, g, m).unwrap();
        let msgs: Vec<_> = (0..s.table.message_count())
            .map(|i| random_symbols(seed, 1, i as u64, s.message_len()))
            .collect();
        let x = s.transmit(&msgs).unwrap();
        let book = draw_channels(k, m, s.tx_count(), 1, s.slots(), seed).unwrap();
        let mut worst = 0.0f64;
        for rx in 1..=k {
            let y = receive(&book, rx, &s.pattern(rx), &x, 0.0, 0).unwrap();
            let side = SideInformation::gather(rx, &s.table, &msgs);
            let out = s.decode(rx, &y.samples, &side, &s.decoders(rx).unwrap(), &book, 1).unwrap();
            assert_eq!(out.messages.len(), s.wanted(rx).len());
            for d in out.messages {
                let w = &msgs[s.table.index(d.group, d.index)];
                let err: f64 = d.symbols.iter().zip(w).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let norm: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(err / norm);
            }
        }
        worst
    }

    #[test]
    fn noiseless_recovery_across_layouts() {
        for (k, g, m) in [(4, 3, 2), (4, 2, 2), (4, 3, 1), (3, 1, 2), (3, 1, 1), (5, 4, 3)] {
            let e = noiseless_errors(k, g, m, 17);
            assert!(e < 1e-8, "({k},{g},{m}): {e}");
        }
    }

    #[test]
    fn missing_side_information_is_reported() {
        let s = UsiScheme::new(4, 3, 2).unwrap();
        let msgs = vec![vec![c64(1.0); 2]; 12];
        let x = s.transmit(&msgs).unwrap();
        let book = draw_channels(4, 2, 4, 1, 7, 3).unwrap();
        let y = receive(&book, 1, &s.pattern(1), &x, 0.0, 0).unwrap();
        let mut side = SideInformation::gather(1, &s.table, &msgs);
        assert_eq!(side.len(), 6);
        side.remove(1, 2);
        let err = s.decode(1, &y.samples, &side, &s.decoders(1).unwrap(), &book, 1).unwrap_err();
        assert!(matches!(err, BiaError::Decoding(_)));
    }

    #[test]
    fn own_message_uses_support_columns() {
        let (s, _) = aligned(4, 3, 2);
        let book = draw_channels(4, 2, 4, 1, 7, 1).unwrap();
        let h = book.mode_submatrix(1, 1, 2, tx_support(1, 1, &s.table));
        assert_eq!(h[(0, 0)], book.vector(1, 1, 1)[1]);
        assert_eq!(h[(1, 1)], book.vector(1, 2, 1)[2]);
    }

    #[test]
    fn super_message_interference_fills_one_dimension_per_block() {
        for (k, g, m) in [(4, 3, 2), (5, 3, 2), (5, 4, 3)] {
            let (s, b) = aligned(k, g, m);
            let modes = s.table.effective_modes;
            let book = draw_channels(k, modes, k, 1, b.params.slots, 99).unwrap();
            for rx in 1..=k {
                for n in (1..=b.params.groups).filter(|&n| !b.table.contains(n, rx)) {
                    let e = effective_mode_matrix(b.pattern(rx), n, &b.precoders).unwrap();
                    let blocks: Vec<_> = (1..=g)
                        .map(|gg| {
                            let h = book.mode_submatrix(rx, 1, modes, tx_support(n, gg, &s.table));
                            &e * kron(&ComplexMatrix::identity(b.params.blocks, b.params.blocks), &h)
                        })
                        .collect();
                    let stacked = crate::linalg::hconcat(&blocks);
                    assert_eq!(numeric_rank(&stacked, DEFAULT_TOL), b.params.blocks, "({k},{g},{m}) rx {rx} n {n}");
                }
            }
        }
    }
}
