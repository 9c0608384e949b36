//! Degrees-of-freedom formulas, dimension counts of constructed schemes, and
//! Monte Carlo rate curves whose high-SNR slope estimates the DoF.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bcgm::{dense_guard, scheme_dimensions, BcgmScheme, DecoderColumns, SchemeParams};
use crate::channel::{draw_channels, substream};
use crate::combinatorics::{binomial, ordered_subsets};
use crate::error::{BiaError, Result};
use crate::linalg::{log2det_hermitian, ComplexMatrix};
use crate::usi::{tx_support, UsiLayout, UsiScheme};
use crate::{serialize_rational, Rational};

const DOMAIN_TRIAL: u64 = 4;

fn counts(users: usize, group_size: usize) -> Result<(i128, i128)> {
    if users == 0 || group_size == 0 || group_size > users {
        return Err(BiaError::param(format!("need 1 <= G <= K, got K={users}, G={group_size}")));
    }
    let groups = binomial(users as u64, group_size as u64).ok_or_else(|| BiaError::param("C(K,G) overflows"))?;
    let rounds = binomial(users as u64 - 1, group_size as u64 - 1).ok_or_else(|| BiaError::param("C(K-1,G-1) overflows"))?;
    Ok((groups as i128, rounds as i128))
}

/// Sum-DoF of groupcast broadcast: `N_g M / ((M - 1) nu_g + N_g)`.
pub fn dof_bcgm(users: usize, group_size: usize, modes: usize) -> Result<Rational> {
    if modes == 0 {
        return Err(BiaError::param("mode count must be at least 1"));
    }
    let (groups, rounds) = counts(users, group_size)?;
    let m = modes as i128;
    Ok(Rational::new(groups * m, (m - 1) * rounds + groups))
}

pub fn dof_bcgm_asym(users: usize, group_size: usize, tx_antennas: usize, rx_modes: usize) -> Result<Rational> {
    dof_bcgm(users, group_size, tx_antennas.min(rx_modes))
}

/// Achievable value and upper bound; equal where the sum-DoF is known exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DofBounds {
    #[serde(serialize_with = "serialize_rational")]
    pub achievable: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub upper: Rational,
}

impl DofBounds {
    pub fn exact(&self) -> bool {
        self.achievable == self.upper
    }
}

/// Sum-DoF bounds of side-information unicast.
pub fn dof_usi(users: usize, group_size: usize, modes: usize) -> Result<DofBounds> {
    if group_size == 1 {
        let d = dof_bcgm(users, 1, modes)?;
        return Ok(DofBounds { achievable: d, upper: d });
    }
    let g = Rational::from_integer(group_size as i128);
    let upper = g * dof_bcgm(users, group_size, modes)?;
    let achievable = if modes <= group_size - 1 { upper } else { g * dof_bcgm(users, group_size, group_size - 1)? };
    Ok(DofBounds { achievable, upper })
}

/// Sum-DoF bounds of the shuffle phase of a `(K, r)` MapReduce job.
pub fn dof_mapreduce(users: usize, load: usize, modes: usize) -> Result<DofBounds> {
    if load == 0 || load >= users {
        return Err(BiaError::param(format!("need 1 <= r <= K-1, got K={users}, r={load}")));
    }
    if modes == 0 {
        return Err(BiaError::param("mode count must be at least 1"));
    }
    let (k, r) = (users as i128, load as i128);
    let closed = |m: i128| Rational::new(k * (r + 1) * m, (m - 1) * (r + 1) + k);
    let m = modes as i128;
    Ok(DofBounds { achievable: closed(m.min(r)), upper: closed(m) })
}

/// Which system a report or rate curve refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "setting", rename_all = "lowercase")]
pub enum Setting {
    Bcgm { users: usize, group_size: usize, modes: usize },
    Usi { users: usize, group_size: usize, modes: usize },
    Mapreduce { users: usize, load: usize, modes: usize },
    /// Point-to-point `modes x modes` MIMO, a sanity control.
    Mimo { modes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeEstimate {
    pub value: f64,
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofReport {
    #[serde(flatten)]
    pub setting: Setting,
    #[serde(flatten)]
    pub bounds: DofBounds,
    /// Symbols delivered per slot by the constructed scheme.
    #[serde(serialize_with = "crate::serialize_opt_rational")]
    pub achieved: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<SlopeEstimate>,
}

/// Closed-form bounds plus the dimension count of the scheme this crate builds.
pub fn dof_report(setting: Setting) -> Result<DofReport> {
    let (bounds, achieved) = match setting {
        Setting::Bcgm { users, group_size, modes } => {
            let d = dof_bcgm(users, group_size, modes)?;
            let p = SchemeParams::new(users, group_size, modes)?;
            (DofBounds { achievable: d, upper: d }, Some(scheme_dimensions(&p).dof_sum))
        }
        Setting::Usi { users, group_size, modes } => {
            (dof_usi(users, group_size, modes)?, Some(usi_dimension_count(users, group_size, modes)?))
        }
        Setting::Mapreduce { users, load, modes } => {
            (dof_mapreduce(users, load, modes)?, Some(usi_dimension_count(users, load + 1, modes)?))
        }
        Setting::Mimo { modes } => {
            let m = Rational::from_integer(modes as i128);
            (DofBounds { achievable: m, upper: m }, None)
        }
    };
    Ok(DofReport { setting, bounds, achieved, slope: None })
}

/// Sum of symbols per slot of the side-information scheme, from its sizes alone.
fn usi_dimension_count(users: usize, group_size: usize, modes: usize) -> Result<Rational> {
    let table = ordered_subsets(users, group_size)?;
    let m = crate::usi::effective_modes(group_size, modes);
    let messages = (table.len() * group_size) as i128;
    if m == 1 {
        return Ok(Rational::new(messages, table.len() as i128));
    }
    let p = SchemeParams::new(users, group_size, m)?;
    Ok(Rational::new(messages * p.streams as i128, p.slots as i128))
}

/// Outcome of a completed run, as needed for counting dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDimensions {
    pub symbols_per_message: usize,
    pub messages: usize,
    pub slots: usize,
    /// Every decoder precondition held and every block channel was invertible.
    pub full_rank: bool,
}

/// Per-message and sum dimension counts of a completed noiseless run.
pub fn dimension_count(run: &RunDimensions) -> Result<(Rational, Rational)> {
    if !run.full_rank {
        return Err(BiaError::InvalidRun("rank diagnostics failed".into()));
    }
    if run.slots == 0 {
        return Err(BiaError::InvalidRun("run used no slots".into()));
    }
    let per = Rational::new(run.symbols_per_message as i128, run.slots as i128);
    Ok((per, per * Rational::from_integer(run.messages as i128)))
}

/// One receiver's view of one message after projection.
#[derive(Debug, Clone)]
struct Link {
    message: usize,
    rx: usize,
    /// Transmit antennas (1-based) the message leaves from.
    columns: Vec<usize>,
    blocks: usize,
    /// Covariance of the projected unit noise; identity when `None`.
    noise: Option<(ComplexMatrix, f64)>,
}

/// Everything channel-independent about a rate computation.
#[derive(Debug, Clone)]
struct RateModel {
    users: usize,
    modes: usize,
    antennas: usize,
    slots: usize,
    messages: usize,
    /// Per-antenna energy averaged over the run; transmit power is scaled by its inverse.
    energy: f64,
    links: Vec<Link>,
}

fn projected(d: &DecoderColumns) -> Result<Option<(ComplexMatrix, f64)>> {
    let q = d.noise_covariance()?;
    let ld = log2det_hermitian(&q).ok_or_else(|| BiaError::InvalidRun("projected noise is singular".into()))?;
    Ok(Some((q, ld)))
}

fn bcgm_links(scheme: &BcgmScheme, columns_of: impl Fn(usize, usize) -> Vec<usize>) -> Result<Vec<Link>> {
    let p = &scheme.params;
    dense_guard(p.streams, p.streams)?;
    let mut links = Vec::new();
    for rx in 1..=p.users {
        for d in scheme.decoders(rx)? {
            links.push(Link {
                message: d.msg,
                rx,
                columns: columns_of(d.msg, rx),
                blocks: p.blocks,
                noise: projected(&d)?,
            });
        }
    }
    Ok(links)
}

impl RateModel {
    fn new(setting: Setting) -> Result<Self> {
        match setting {
            Setting::Mimo { modes } => {
                if modes == 0 {
                    return Err(BiaError::param("mode count must be at least 1"));
                }
                Ok(RateModel {
                    users: 1,
                    modes,
                    antennas: modes,
                    slots: 1,
                    messages: 1,
                    energy: 1.0,
                    links: vec![Link { message: 1, rx: 1, columns: (1..=modes).collect(), blocks: 1, noise: None }],
                })
            }
            Setting::Bcgm { users, group_size, modes } => {
                let params = SchemeParams::new(users, group_size, modes)?;
                if modes == 1 {
                    let table = ordered_subsets(users, group_size)?;
                    let links = table
                        .groups
                        .iter()
                        .enumerate()
                        .flat_map(|(i, s)| {
                            s.iter().map(move |&rx| Link { message: i + 1, rx, columns: vec![1], blocks: 1, noise: None })
                        })
                        .collect();
                    return Ok(RateModel {
                        users,
                        modes: 1,
                        antennas: 1,
                        slots: params.slots,
                        messages: params.groups,
                        energy: 1.0,
                        links,
                    });
                }
                let scheme = BcgmScheme::new(params)?;
                let links = bcgm_links(&scheme, |_, _| (1..=modes).collect())?;
                Ok(RateModel {
                    users,
                    modes,
                    antennas: modes,
                    slots: params.slots,
                    messages: params.groups,
                    energy: scheme.precoders.mean_antenna_energy(),
                    links,
                })
            }
            Setting::Usi { users, group_size, modes } => Self::usi(users, group_size, modes),
            Setting::Mapreduce { users, load, modes } => Self::usi(users, load + 1, modes),
        }
    }

    fn usi(users: usize, group_size: usize, modes: usize) -> Result<Self> {
        let s = UsiScheme::new(users, group_size, modes)?;
        let t = &s.table;
        let links = match &s.layout {
            UsiLayout::Aligned(b) => {
                dense_guard(b.params.streams, b.params.streams)?;
                let mut links = Vec::new();
                for rx in 1..=users {
                    for d in b.decoders(rx)? {
                        let own = t.table.member_position(d.msg, rx)?;
                        links.push(Link {
                            message: t.index(d.msg, own) + 1,
                            rx,
                            columns: tx_support(d.msg, own, t).to_vec(),
                            blocks: b.params.blocks,
                            noise: projected(&d)?,
                        });
                    }
                }
                links
            }
            UsiLayout::Central(Some(b)) => bcgm_links(b, |_, _| (1..=b.params.modes).collect())?,
            UsiLayout::Central(None) => (1..=users)
                .map(|rx| Link { message: rx, rx, columns: vec![1], blocks: 1, noise: None })
                .collect(),
            UsiLayout::Schedule(schedule) => t
                .entries()
                .iter()
                .map(|e| Link {
                    message: t.index(e.group, e.index) + 1,
                    rx: e.desired_rx,
                    columns: vec![schedule[e.group - 1].senders[e.index - 1]],
                    blocks: 1,
                    noise: None,
                })
                .collect(),
        };
        Ok(RateModel {
            users,
            modes: s.rx_modes(),
            antennas: s.tx_count(),
            slots: s.slots(),
            messages: t.message_count(),
            energy: s.mean_energy(),
            links,
        })
    }

    /// Sum rate (bits per slot) at each SNR for one channel draw.
    fn trial(&self, seed: u64, snrs: &[f64]) -> Result<Vec<f64>> {
        let book = draw_channels(self.users, self.modes, self.antennas, 1, self.slots, seed)?;
        let mut out = Vec::with_capacity(snrs.len());
        for &snr_db in snrs {
            let s = 10f64.powf(snr_db / 10.0) / self.energy;
            let mut best = vec![f64::INFINITY; self.messages];
            for link in &self.links {
                let m = link.columns.len();
                let h = book.mode_submatrix(link.rx, 1, m, &link.columns);
                let hh = &h * h.adjoint() * Complex64::new(s, 0.0);
                let dim = m * link.blocks;
                let (mut a, base) = match &link.noise {
                    Some((q, ld)) => (q.clone(), *ld),
                    None => (ComplexMatrix::identity(dim, dim), 0.0),
                };
                for b in 0..link.blocks {
                    let mut view = a.view_mut((b * m, b * m), (m, m));
                    view += &hh;
                }
                let ld = log2det_hermitian(&a)
                    .ok_or_else(|| BiaError::InvalidRun("signal covariance is not positive definite".into()))?;
                let rate = (ld - base) / self.slots as f64;
                let slot = &mut best[link.message - 1];
                *slot = slot.min(rate);
            }
            out.push(best.iter().sum());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub snr_db: f64,
    pub mean_rate: f64,
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCurve {
    #[serde(flatten)]
    pub setting: Setting,
    pub trials: usize,
    pub seed: u64,
    pub points: Vec<RatePoint>,
    /// Rate increase per doubling of power between the two highest SNRs.
    pub slope: SlopeEstimate,
}

impl RateCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,mean_rate,ci_halfwidth\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.snr_db, p.mean_rate, p.ci_halfwidth));
        }
        out
    }
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Average sum rate over `trials` independent channel draws at every SNR, and
/// the slope `delta rate / delta log2(P)` between the two highest SNRs.
pub fn estimate_rate_curve(setting: Setting, snr_db: &[f64], trials: usize, seed: u64) -> Result<RateCurve> {
    if trials == 0 {
        return Err(BiaError::param("at least one trial is required"));
    }
    if snr_db.len() < 2 {
        return Err(BiaError::param("a slope needs at least two SNR points"));
    }
    let mut order: Vec<usize> = (0..snr_db.len()).collect();
    order.sort_by(|&a, &b| snr_db[a].total_cmp(&snr_db[b]));
    let (lo, hi) = (order[order.len() - 2], order[order.len() - 1]);
    let span = (snr_db[hi] - snr_db[lo]) / 10.0 * 10f64.log2();
    if span <= 0.0 {
        return Err(BiaError::param("the two highest SNR points must differ"));
    }
    let model = RateModel::new(setting)?;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            use rand::RngCore;
            let trial_seed = substream(seed, DOMAIN_TRIAL, i as u64, 0).next_u64();
            model.trial(trial_seed, snr_db)
        })
        .collect::<Result<_>>()?;
    let points = snr_db
        .iter()
        .enumerate()
        .map(|(j, &snr)| {
            let column: Vec<f64> = per_trial.iter().map(|r| r[j]).collect();
            let (mean_rate, ci_halfwidth) = mean_ci(&column);
            RatePoint { snr_db: snr, mean_rate, ci_halfwidth }
        })
        .collect();
    let slopes: Vec<f64> = per_trial.iter().map(|r| (r[hi] - r[lo]) / span).collect();
    let (value, ci_halfwidth) = mean_ci(&slopes);
    Ok(RateCurve { setting, trials, seed, points, slope: SlopeEstimate { value, ci_halfwidth } })
}

/// Closed-form DoF the slope of `setting` should approach.
pub fn formula_dof(setting: Setting) -> Result<Rational> {
    Ok(dof_report(setting)?.bounds.achievable)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn bcgm_values() {
        assert_eq!(dof_bcgm(4, 3, 2).unwrap(), q(8, 7));
        assert_eq!(dof_bcgm(3, 2, 3).unwrap(), q(9, 7));
        for (k, g) in [(3, 1), (4, 2), (5, 5)] {
            assert_eq!(dof_bcgm(k, g, 1).unwrap(), q(1, 1));
        }
        assert_eq!(dof_bcgm_asym(4, 3, 5, 2).unwrap(), q(8, 7));
        assert!(dof_bcgm(3, 4, 2).is_err());
    }

    #[test]
    fn usi_values() {
        let b = dof_usi(4, 3, 2).unwrap();
        assert_eq!((b.achievable, b.upper), (q(24, 7), q(24, 7)));
        let b = dof_usi(4, 2, 2).unwrap();
        assert_eq!(b.achievable, q(2, 1));
        assert_eq!(b.upper, q(2 * 6 * 2, 3 + 6));
        assert_eq!(b.upper, q(8, 3));
        for g in 1..=4 {
            assert_eq!(dof_usi(4, g, 1).unwrap().achievable, q(g as i128, 1));
        }
    }

    #[test]
    fn mapreduce_values() {
        assert_eq!(dof_mapreduce(4, 2, 1).unwrap().achievable, q(3, 1));
        assert_eq!(dof_mapreduce(4, 2, 2).unwrap().achievable, q(24, 7));
        let b = dof_mapreduce(4, 2, 3).unwrap();
        assert_eq!((b.achievable, b.upper), (q(24, 7), q(18, 5)));
        assert!(dof_mapreduce(4, 4, 2).is_err());
    }

    #[test]
    fn formula_identities_over_grid() {
        for k in 2..=8 {
            for g in 1..=k {
                for m in 1..=5 {
                    let usi = dof_usi(k, g, m).unwrap();
                    assert!(usi.achievable <= usi.upper);
                    if g >= 2 && m <= g - 1 {
                        let gain = Rational::from_integer(g as i128);
                        assert_eq!(usi.achievable, gain * dof_bcgm(k, g, m).unwrap());
                        assert!(usi.exact());
                    }
                    if g >= 2 && g - 1 < k {
                        assert_eq!(dof_mapreduce(k, g - 1, m).unwrap(), usi);
                    }
                }
            }
        }
    }

    #[test]
    fn reports_carry_the_built_scheme() {
        let r = dof_report(Setting::Bcgm { users: 4, group_size: 3, modes: 2 }).unwrap();
        assert_eq!(r.achieved, Some(q(8, 7)));
        let r = dof_report(Setting::Usi { users: 4, group_size: 2, modes: 2 }).unwrap();
        assert_eq!(r.achieved, Some(q(2, 1)));
        assert_eq!(r.bounds.upper, q(8, 3));
        let r = dof_report(Setting::Mapreduce { users: 4, load: 2, modes: 1 }).unwrap();
        assert_eq!(r.achieved, Some(q(3, 1)));
        let json = serde_json::to_string(&dof_report(Setting::Usi { users: 4, group_size: 3, modes: 2 }).unwrap()).unwrap();
        assert!(json.contains("\"achievable\":\"24/7\""), "{json}");
        assert!(json.contains("\"setting\":\"usi\""), "{json}");
    }

    #[test]
    fn dimension_counts() {
        let run = RunDimensions { symbols_per_message: 12, messages: 3, slots: 20, full_rank: true };
        assert_eq!(dimension_count(&run).unwrap(), (q(3, 5), q(9, 5)));
        let bad = RunDimensions { full_rank: false, ..run };
        assert!(matches!(dimension_count(&bad), Err(BiaError::InvalidRun(_))));
    }

    #[test]
    fn curve_is_deterministic_and_shrinks_with_trials() {
        let s = Setting::Mimo { modes: 2 };
        let a = estimate_rate_curve(s, &[20.0, 30.0], 100, 5).unwrap();
        let b = estimate_rate_curve(s, &[20.0, 30.0], 100, 5).unwrap();
        assert_eq!(a, b);
        let c = estimate_rate_curve(s, &[20.0, 30.0], 400, 5).unwrap();
        let ratio = a.points[1].ci_halfwidth / c.points[1].ci_halfwidth;
        assert!((1.5..2.7).contains(&ratio), "{ratio}");
        assert!(a.to_csv().starts_with("snr_db,mean_rate,ci_halfwidth\n"));
    }

    #[test]
    fn mimo_slope_near_antenna_count() {
        let c = estimate_rate_curve(Setting::Mimo { modes: 3 }, &[40.0, 60.0], 200, 1).unwrap();
        assert!((c.slope.value - 3.0).abs() < 0.3, "{:?}", c.slope);
    }
}
