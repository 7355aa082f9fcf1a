//! Discrete-event simulation of one mutual-authentication handshake in a
//! shared cell.
//!
//! Topology is a star: UEs reach the base station over one shared radio
//! queue; HAKF sits behind the core network. Each handshake message crosses
//! the shared queue once (FIFO at the configured capacity), then a fixed
//! propagation delay. Background constant-bitrate flows from every UE load
//! the same queue. Losses are Bernoulli with a probability set by offered
//! load and by the distance of the UEs involved from the base station.
//! A lost frame is resent after a timeout that doubles per attempt.
//!
//! Random draws come from independent streams keyed by `(seed, purpose,
//! index)`. Adding UEs adds background traffic without changing the loss
//! draws, the participants' trajectories or the phases of existing flows,
//! so per-seed results are comparable across sweep points.

mod event;
mod mobility;

pub use event::EventQueue;
pub use mobility::RandomWaypoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::handshake::MessageType;

pub const MIN_UES: usize = 2;
pub const MAX_UES: usize = 40;
/// Number of protocol messages in one handshake.
pub const MESSAGES: usize = 6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub area_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause_s: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            area_m: 500.0,
            speed_min_mps: 0.0,
            speed_max_mps: 20.0,
            pause_s: 0.0,
        }
    }
}

/// A constant-bitrate stream, per UE, in each of `directions` directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbrFlow {
    pub bits_per_s: f64,
    pub packet_bytes: u32,
    pub directions: u32,
}

impl CbrFlow {
    pub fn period_s(&self) -> f64 {
        self.packet_bytes as f64 * 8.0 / self.bits_per_s
    }

    pub fn bytes_per_s(&self) -> f64 {
        self.bits_per_s / 8.0 * self.directions as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub enabled: bool,
    pub voice: CbrFlow,
    pub video: CbrFlow,
    pub gaming: CbrFlow,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            enabled: true,
            voice: CbrFlow {
                bits_per_s: 64_000.0,
                packet_bytes: 160,
                directions: 2,
            },
            video: CbrFlow {
                bits_per_s: 2_000_000.0,
                packet_bytes: 1250,
                directions: 1,
            },
            gaming: CbrFlow {
                bits_per_s: 256_000.0,
                packet_bytes: 160,
                directions: 1,
            },
        }
    }
}

impl FlowConfig {
    fn all(&self) -> [CbrFlow; 3] {
        [self.voice, self.video, self.gaming]
    }

    /// Offered background bytes per second from one UE.
    pub fn per_ue_bytes_per_s(&self) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        self.all().iter().map(CbrFlow::bytes_per_s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossModel {
    None,
    /// The same loss probability on every transmission.
    Fixed { p: f64 },
    /// Load-driven loss scaled by distance from the base station.
    Congestion {
        knee_load: f64,
        knee_loss: f64,
        slope: f64,
        max_loss: f64,
        /// Loss multiplier is `1 + distance_gain * (d / d_max)^2`.
        distance_gain: f64,
    },
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel::Congestion {
            knee_load: 0.8,
            knee_loss: 0.01,
            slope: 1.0,
            max_loss: 0.9,
            distance_gain: 0.5,
        }
    }
}

/// Piecewise-linear load-to-loss curve: 0 at no load, rising linearly to
/// `knee_loss` at `knee_load`, then with `slope`, capped at `max_loss`.
pub fn congestion_loss(load: f64, knee_load: f64, knee_loss: f64, slope: f64, max_loss: f64) -> f64 {
    let load = load.max(0.0);
    let p = if load <= knee_load {
        knee_loss * load / knee_load
    } else {
        knee_loss + slope * (load - knee_load)
    };
    p.min(max_loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub one_way_delay_s: f64,
    pub capacity_bytes_per_s: f64,
    pub loss: LossModel,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            one_way_delay_s: 0.04,
            capacity_bytes_per_s: 12_500_000.0,
            loss: LossModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessingConfig {
    /// Compute time for each endpoint action.
    pub endpoint_s: f64,
    /// HAKF service time per request.
    pub hakf_s: f64,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        ProcessingConfig {
            endpoint_s: 0.001,
            hakf_s: crate::hakf::DEFAULT_SERVICE_TIME_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetransmissionConfig {
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff: f64,
}

impl Default for RetransmissionConfig {
    fn default() -> Self {
        RetransmissionConfig {
            timeout_s: 0.1,
            max_retries: 5,
            backoff: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ue_min: usize,
    pub ue_max: usize,
    pub ue_step: usize,
    pub repeats: u64,
    pub first_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ue_min: MIN_UES,
            ue_max: MAX_UES,
            ue_step: 2,
            repeats: 100,
            first_seed: 1,
        }
    }
}

impl SweepConfig {
    pub fn ue_values(&self) -> Vec<usize> {
        (self.ue_min..=self.ue_max).step_by(self.ue_step.max(1)).collect()
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats).map(|i| self.first_seed + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub n_ues: usize,
    pub seed: u64,
    pub warmup_s: f64,
    /// Bytes on the wire per handshake message.
    pub frame_bytes: u32,
    /// Extra one-way delay on legs to and from HAKF.
    pub hakf_extra_delay_s: f64,
    pub mobility: MobilityConfig,
    pub flows: FlowConfig,
    pub link: LinkConfig,
    pub processing: ProcessingConfig,
    pub retransmission: RetransmissionConfig,
    pub sweep: SweepConfig,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            n_ues: MIN_UES,
            seed: 1,
            warmup_s: 0.1,
            frame_bytes: crate::certs::FRAME_BYTES as u32,
            hakf_extra_delay_s: 0.0,
            mobility: MobilityConfig::default(),
            flows: FlowConfig::default(),
            link: LinkConfig::default(),
            processing: ProcessingConfig::default(),
            retransmission: RetransmissionConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl SimScenario {
    /// Default scenario with losses switched off.
    pub fn lossless() -> Self {
        let mut s = Self::default();
        s.link.loss = LossModel::None;
        s
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: SimScenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(MIN_UES..=MAX_UES).contains(&self.n_ues) {
            return bad(format!("n_ues must be in [{MIN_UES}, {MAX_UES}], got {}", self.n_ues));
        }
        let non_negative = [
            ("warmup_s", self.warmup_s),
            ("hakf_extra_delay_s", self.hakf_extra_delay_s),
            ("link.one_way_delay_s", self.link.one_way_delay_s),
            ("processing.endpoint_s", self.processing.endpoint_s),
            ("processing.hakf_s", self.processing.hakf_s),
            ("retransmission.timeout_s", self.retransmission.timeout_s),
            ("mobility.speed_min_mps", self.mobility.speed_min_mps),
            ("mobility.pause_s", self.mobility.pause_s),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(self.link.capacity_bytes_per_s.is_finite() && self.link.capacity_bytes_per_s > 0.0) {
            return bad("link.capacity_bytes_per_s must be > 0".into());
        }
        if !(self.mobility.area_m > 0.0) || self.mobility.speed_max_mps < self.mobility.speed_min_mps {
            return bad("mobility: need area_m > 0 and speed_max_mps >= speed_min_mps".into());
        }
        if self.frame_bytes == 0 {
            return bad("frame_bytes must be > 0".into());
        }
        if !(self.retransmission.backoff >= 1.0) {
            return bad("retransmission.backoff must be >= 1".into());
        }
        for (name, f) in [("voice", self.flows.voice), ("video", self.flows.video), ("gaming", self.flows.gaming)] {
            if !(f.bits_per_s > 0.0) || f.packet_bytes == 0 {
                return bad(format!("flows.{name}: need bits_per_s > 0 and packet_bytes > 0"));
            }
        }
        match self.link.loss {
            LossModel::None => {}
            LossModel::Fixed { p } if (0.0..=1.0).contains(&p) => {}
            LossModel::Fixed { p } => return bad(format!("link.loss.p must be in [0, 1], got {p}")),
            LossModel::Congestion {
                knee_load,
                knee_loss,
                slope,
                max_loss,
                distance_gain,
            } => {
                if !(knee_load > 0.0)
                    || !(0.0..=1.0).contains(&knee_loss)
                    || !(slope >= 0.0)
                    || !(0.0..1.0).contains(&max_loss)
                    || !(distance_gain >= 0.0)
                {
                    return bad("link.loss: need knee_load > 0, knee_loss in [0,1], slope >= 0, max_loss in [0,1), distance_gain >= 0".into());
                }
            }
        }
        let sw = &self.sweep;
        if sw.repeats == 0 || sw.ue_step == 0 || sw.ue_min < MIN_UES || sw.ue_max > MAX_UES || sw.ue_min > sw.ue_max {
            return bad(format!(
                "sweep: need repeats >= 1, ue_step >= 1 and {MIN_UES} <= ue_min <= ue_max <= {MAX_UES}"
            ));
        }
        Ok(())
    }

    /// Background offered load as a fraction of link capacity.
    pub fn offered_load(&self) -> f64 {
        self.n_ues as f64 * self.flows.per_ue_bytes_per_s() / self.link.capacity_bytes_per_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimMetrics {
    /// From the initiator's first M1 transmission to the later of the two
    /// `Established` events. For a failed run, the time until the sender
    /// gave up.
    pub handshake_latency_s: f64,
    /// Every handshake byte put on the wire, retransmissions included.
    pub auth_traffic_bytes: u64,
    pub retransmission_count: u64,
    pub success: bool,
    pub events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Party {
    Initiator,
    Responder,
    Hakf,
}

/// Sender, receiver and message type of each of the six legs.
const LEGS: [(Party, Party, MessageType); MESSAGES] = [
    (Party::Initiator, Party::Responder, MessageType::M1InitCert),
    (Party::Responder, Party::Hakf, MessageType::M2VerReq),
    (Party::Hakf, Party::Responder, MessageType::M3VerResp),
    (Party::Responder, Party::Initiator, MessageType::M4RespCertAndKem),
    (Party::Initiator, Party::Hakf, MessageType::M5VerReq),
    (Party::Hakf, Party::Initiator, MessageType::M6VerResp),
];

#[derive(Debug, Clone, Copy)]
enum Event {
    Background { flow: usize },
    Send { leg: usize, attempt: u32 },
    Timeout { leg: usize, attempt: u32 },
    Deliver { leg: usize },
}

const STREAM_LOSS: u64 = 1;
const STREAM_MOBILITY: u64 = 2;
const STREAM_FLOWS: u64 = 3;

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | index);
    rng
}

struct Radio {
    walker: RandomWaypoint,
    centre: f64,
    d_max: f64,
}

impl Radio {
    fn new(s: &SimScenario, ue: u64) -> Self {
        let m = &s.mobility;
        Radio {
            walker: RandomWaypoint::new(
                stream(s.seed, STREAM_MOBILITY, ue),
                m.area_m,
                m.speed_min_mps,
                m.speed_max_mps,
                m.pause_s,
            ),
            centre: m.area_m / 2.0,
            d_max: m.area_m / std::f64::consts::SQRT_2,
        }
    }

    fn loss(&mut self, t: f64, base: f64, gain: f64, cap: f64) -> f64 {
        let (x, y) = self.walker.position(t);
        let d = ((x - self.centre).powi(2) + (y - self.centre).powi(2)).sqrt();
        (base * (1.0 + gain * (d / self.d_max).powi(2))).min(cap)
    }
}

struct Sim<'a> {
    s: &'a SimScenario,
    queue: EventQueue<Event>,
    busy_until: f64,
    flows: Vec<CbrFlow>,
    radios: [Radio; 2],
    /// Uniform draw per (leg, attempt). Lost iff draw < loss probability.
    draws: Vec<Vec<f64>>,
    load: f64,
    bytes: u64,
    retx: u64,
    first_send: f64,
    responder_done: Option<f64>,
}

impl<'a> Sim<'a> {
    fn new(s: &'a SimScenario) -> Self {
        let attempts = s.retransmission.max_retries as usize + 1;
        let mut loss_rng = stream(s.seed, STREAM_LOSS, 0);
        let draws = (0..MESSAGES)
            .map(|_| (0..attempts).map(|_| loss_rng.gen::<f64>()).collect())
            .collect();
        let mut queue = EventQueue::new();
        let mut flows = Vec::new();
        if s.flows.enabled {
            for ue in 0..s.n_ues as u64 {
                let mut rng = stream(s.seed, STREAM_FLOWS, ue);
                for f in s.flows.all() {
                    for _ in 0..f.directions {
                        let phase = rng.gen::<f64>() * f.period_s();
                        queue.schedule(phase, Event::Background { flow: flows.len() });
                        flows.push(f);
                    }
                }
            }
        }
        Sim {
            s,
            queue,
            busy_until: 0.0,
            flows,
            radios: [Radio::new(s, 0), Radio::new(s, 1)],
            draws,
            load: s.offered_load(),
            bytes: 0,
            retx: 0,
            first_send: f64::NAN,
            responder_done: None,
        }
    }

    /// Enqueues `bytes` on the shared link at `t`; returns departure time.
    fn transmit(&mut self, t: f64, bytes: u32) -> f64 {
        let start = self.busy_until.max(t);
        self.busy_until = start + bytes as f64 / self.s.link.capacity_bytes_per_s;
        self.busy_until
    }

    fn loss_probability(&mut self, leg: usize, t: f64) -> f64 {
        let (from, to, _) = LEGS[leg];
        match self.s.link.loss {
            LossModel::None => 0.0,
            LossModel::Fixed { p } => p,
            LossModel::Congestion {
                knee_load,
                knee_loss,
                slope,
                max_loss,
                distance_gain,
            } => {
                let base = congestion_loss(self.load, knee_load, knee_loss, slope, max_loss);
                let mut keep = 1.0;
                for party in [from, to] {
                    let ue = match party {
                        Party::Initiator => 0,
                        Party::Responder => 1,
                        Party::Hakf => continue,
                    };
                    keep *= 1.0 - self.radios[ue].loss(t, base, distance_gain, max_loss);
                }
                1.0 - keep
            }
        }
    }

    fn delay(&self, leg: usize) -> f64 {
        let (from, to, _) = LEGS[leg];
        let hakf = from == Party::Hakf || to == Party::Hakf;
        self.s.link.one_way_delay_s + if hakf { self.s.hakf_extra_delay_s } else { 0.0 }
    }

    fn processing(&self, p: Party) -> f64 {
        match p {
            Party::Hakf => self.s.processing.hakf_s,
            _ => self.s.processing.endpoint_s,
        }
    }

    fn run(mut self) -> SimMetrics {
        let start = self.s.warmup_s + self.s.processing.endpoint_s;
        self.queue.schedule(start, Event::Send { leg: 0, attempt: 0 });
        let rt = self.s.retransmission.clone();
        while let Some((t, ev)) = self.queue.pop() {
            match ev {
                Event::Background { flow } => {
                    let f = self.flows[flow];
                    self.transmit(t, f.packet_bytes);
                    self.queue.schedule(t + f.period_s(), Event::Background { flow });
                }
                Event::Send { leg, attempt } => {
                    if leg == 0 && attempt == 0 {
                        self.first_send = t;
                    }
                    self.bytes += self.s.frame_bytes as u64;
                    if attempt > 0 {
                        self.retx += 1;
                    }
                    let depart = self.transmit(t, self.s.frame_bytes);
                    let p = self.loss_probability(leg, t);
                    if self.draws[leg][attempt as usize] < p {
                        let wait = rt.timeout_s * rt.backoff.powi(attempt as i32);
                        self.queue.schedule(t + wait, Event::Timeout { leg, attempt });
                    } else {
                        self.queue.schedule(depart + self.delay(leg), Event::Deliver { leg });
                    }
                }
                Event::Timeout { leg, attempt } => {
                    if attempt >= rt.max_retries {
                        return self.metrics(t, false);
                    }
                    self.queue.schedule(t, Event::Send { leg, attempt: attempt + 1 });
                }
                Event::Deliver { leg } => {
                    let (_, receiver, msg) = LEGS[leg];
                    let done = t + self.processing(receiver);
                    match msg {
                        MessageType::M3VerResp => self.responder_done = Some(done),
                        MessageType::M6VerResp => {
                            let end = done.max(self.responder_done.expect("M3 precedes M6"));
                            return self.metrics(end, true);
                        }
                        _ => {}
                    }
                    self.queue.schedule(done, Event::Send { leg: leg + 1, attempt: 0 });
                }
            }
        }
        unreachable!("background flows keep the queue non-empty")
    }

    fn metrics(&self, end: f64, success: bool) -> SimMetrics {
        SimMetrics {
            handshake_latency_s: end - self.first_send,
            auth_traffic_bytes: self.bytes,
            retransmission_count: self.retx,
            success,
            events: self.queue.dispatched(),
        }
    }
}

/// Simulates one handshake on `scenario`. Deterministic in the scenario,
/// including its seed.
pub fn run_once(scenario: &SimScenario) -> SimMetrics {
    Sim::new(scenario).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_ues: usize,
    pub seed: u64,
    pub latency_s: f64,
    pub overhead_bytes: u64,
    pub retx: u64,
    pub success: u8,
}

impl RunRecord {
    pub fn new(n_ues: usize, seed: u64, m: &SimMetrics) -> Self {
        RunRecord {
            n_ues,
            seed,
            latency_s: m.handshake_latency_s,
            overhead_bytes: m.auth_traffic_bytes,
            retx: m.retransmission_count,
            success: m.success as u8,
        }
    }
}

/// Runs `base` for every UE count and seed, in parallel. Records come back
/// sorted by `(n_ues, seed)` regardless of scheduling.
pub fn run_sweep(base: &SimScenario, ue_values: &[usize], seeds: &[u64]) -> Vec<RunRecord> {
    let jobs: Vec<(usize, u64)> = ue_values
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    jobs.par_iter()
        .map(|&(n, seed)| {
            let s = SimScenario {
                n_ues: n,
                seed,
                ..base.clone()
            };
            RunRecord::new(n, seed, &run_once(&s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_ues: usize,
    pub runs: usize,
    /// Mean over successful runs.
    pub mean_latency_s: f64,
    /// Mean over all runs.
    pub mean_overhead_bytes: f64,
    pub success_rate: f64,
}

/// Per-UE-count means, in ascending `n_ues`.
pub fn summarize(records: &[RunRecord]) -> Vec<SweepRow> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n_ues).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.n_ues == n).collect();
            let ok: Vec<&&RunRecord> = rs.iter().filter(|r| r.success == 1).collect();
            SweepRow {
                n_ues: n,
                runs: rs.len(),
                mean_latency_s: if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r.latency_s).sum::<f64>() / ok.len() as f64
                },
                mean_overhead_bytes: rs.iter().map(|r| r.overhead_bytes as f64).sum::<f64>() / rs.len() as f64,
                success_rate: ok.len() as f64 / rs.len() as f64,
            }
        })
        .collect()
}

pub const CSV_HEADER: &str = "n_ues,seed,latency_s,overhead_bytes,retx,success";

pub fn write_csv<W: std::io::Write>(records: &[RunRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<RunRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub const SUMMARY_CSV_HEADER: &str = "n_ues,runs,mean_latency_s,mean_overhead_bytes,success_rate";

pub fn write_summary_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
