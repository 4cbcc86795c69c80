//! BB84 over the network, with receivers compensating for the
//! quarter-wave-plate depth of their sorter path.
//!
//! Each photon carries its logical BB84 state as prepared by the sender.
//! After `d` plates the physical state is `P^d` of the logical one, which
//! swaps the diagonal and circular sets for odd `d` and flips the bit inside
//! each set for `d = 2 (mod 4)`. A compensating receiver measures in the
//! image of its logical basis and maps the outcome back.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    detect_preamble, sender_preamble, Delivery, InportMux, MirrorAngles, NetworkConfig, QuantumLink,
};
use crate::polarization::{canonical_state, decode_bb84, measure, Basis, Bb84State};
use crate::sorter::PhotonRecord;
use crate::SimRng;

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.1;
pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.11;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eavesdropper {
    #[default]
    None,
    InterceptResend { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub id: String,
    pub sender: String,
    pub receiver: String,
    pub photon_count: usize,
    pub eavesdropper: Eavesdropper,
    pub compensate_depth: bool,
    pub seed: u64,
    pub sample_fraction: f64,
    pub abort_threshold: f64,
}

impl SessionConfig {
    pub fn new(id: impl Into<String>, sender: impl Into<String>, receiver: impl Into<String>, photon_count: usize, seed: u64) -> Self {
        SessionConfig {
            id: id.into(),
            sender: sender.into(),
            receiver: receiver.into(),
            photon_count,
            eavesdropper: Eavesdropper::None,
            compensate_depth: true,
            seed,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            abort_threshold: DEFAULT_ABORT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.photon_count == 0 {
            return Err(Error::invalid("photons", "must be at least 1"));
        }
        if self.sender == self.receiver {
            return Err(Error::invalid("receiver", format!("session `{}` sends to its own sender", self.id)));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return Err(Error::invalid("sample_fraction", format!("{} is outside (0, 1)", self.sample_fraction)));
        }
        if !(0.0..=1.0).contains(&self.abort_threshold) {
            return Err(Error::invalid("abort_threshold", format!("{} is outside [0, 1]", self.abort_threshold)));
        }
        if let Eavesdropper::InterceptResend { fraction } = self.eavesdropper {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::invalid("eavesdropper.fraction", format!("{fraction} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ok,
    Abort,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Ok => "ok",
            Verdict::Abort => "abort",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bb84SessionResult {
    pub session_id: String,
    pub sender: String,
    pub receiver: String,
    pub seed: u64,
    pub photons_sent: usize,
    /// Signal photons detected by the intended receiver.
    pub raw_count: usize,
    pub sifted_count: usize,
    pub sample_size: usize,
    /// Disagreement on the disclosed sample.
    pub qber_estimate: f64,
    /// Disagreement over every sifted bit; simulator-side diagnostic.
    pub sifted_error_rate: f64,
    pub key_bits_sender: Vec<u8>,
    pub key_bits_receiver: Vec<u8>,
    pub sender_identified: bool,
    pub verdict: Verdict,
    pub transcript_id: String,
}

impl Bb84SessionResult {
    pub fn sift_fraction(&self) -> f64 {
        if self.raw_count == 0 {
            0.0
        } else {
            self.sifted_count as f64 / self.raw_count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonEvent {
    pub sequence: u64,
    pub bit: u8,
    pub basis: Basis,
    pub intercepted: bool,
    /// `None` when the photon was lost or reached another user.
    pub measured: Option<(Basis, u8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transcript {
    pub id: String,
    pub mirror: Option<MirrorAngles>,
    pub receiver_depth: u32,
    pub preamble: Vec<Option<Bb84State>>,
    pub photons: Vec<PhotonEvent>,
    pub sifted: Vec<usize>,
    pub sample: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionOutcome {
    pub result: Bb84SessionResult,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPhoton {
    pub bit: u8,
    pub basis: Basis,
    pub record: PhotonRecord,
}

fn random_basis<R: Rng + ?Sized>(rng: &mut R) -> Basis {
    if rng.random::<bool>() {
        Basis::Circular
    } else {
        Basis::Diagonal
    }
}

/// Uniform bit and basis per photon, addressed to `receiver`.
pub fn bb84_prepare<L: QuantumLink + ?Sized, R: Rng + ?Sized>(
    count: usize,
    sender: &str,
    receiver: &str,
    link: &L,
    rng: &mut R,
) -> Result<Vec<PreparedPhoton>> {
    let ell = link.encode_address(receiver)?;
    Ok((0..count)
        .map(|i| {
            let bit = rng.random::<bool>() as u8;
            let basis = random_basis(rng);
            let record = PhotonRecord::new(ell, canonical_state(Bb84State::new(basis, bit)), sender, i as u64);
            PreparedPhoton { bit, basis, record }
        })
        .collect())
}

/// Measures in `logical` basis at frame depth `depth`; returns the logical bit.
fn measure_logical<R: Rng + ?Sized>(
    record: &PhotonRecord,
    logical: Basis,
    depth: u32,
    compensate: bool,
    rng: &mut R,
) -> u8 {
    if !compensate {
        return measure(&record.polarization, logical, rng).0;
    }
    let physical = logical.after_depth(depth);
    let (bit, _) = measure(&record.polarization, physical, rng);
    let observed = canonical_state(Bb84State::new(physical, bit));
    decode_bb84(&observed, depth).expect("canonical state decodes at any depth").bit
}

/// Receiver side: uniform logical basis, then a (possibly compensated)
/// measurement. Returns `(logical basis, bit)`.
pub fn bb84_measure_incoming<R: Rng + ?Sized>(
    record: &PhotonRecord,
    depth: u32,
    compensate: bool,
    rng: &mut R,
) -> (Basis, u8) {
    let basis = random_basis(rng);
    (basis, measure_logical(record, basis, depth, compensate, rng))
}

/// Indices where the two basis strings agree.
pub fn sift(sender_bases: &[Basis], receiver_bases: &[Basis]) -> Result<Vec<usize>> {
    if sender_bases.len() != receiver_bases.len() {
        return Err(Error::LengthMismatch { left: sender_bases.len(), right: receiver_bases.len() });
    }
    Ok(sender_bases
        .iter()
        .zip(receiver_bases)
        .enumerate()
        .filter_map(|(i, (a, b))| (a == b).then_some(i))
        .collect())
}

/// Disagreement fraction on `sample` (indices into both bit strings).
pub fn estimate_qber(sender_bits: &[u8], receiver_bits: &[u8], sample: &[usize]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientSample { sifted: sender_bits.len().min(receiver_bits.len()) });
    }
    if sender_bits.len() != receiver_bits.len() {
        return Err(Error::LengthMismatch { left: sender_bits.len(), right: receiver_bits.len() });
    }
    let errors = sample.iter().filter(|&&i| sender_bits[i] != receiver_bits[i]).count();
    Ok(errors as f64 / sample.len() as f64)
}

/// Eve measures in a random basis of the photon's frame at `local_depth` and
/// re-emits the collapsed state, keeping `ell` and the plate count.
pub fn eavesdrop_intercept_resend<R: Rng + ?Sized>(mut record: PhotonRecord, local_depth: u32, rng: &mut R) -> PhotonRecord {
    let physical = random_basis(rng).after_depth(local_depth);
    let (_, collapsed) = measure(&record.polarization, physical, rng);
    record.polarization = collapsed;
    record
}

/// Runs one session over `network` while holding its in-port. Fails with
/// `InportBusy` if another sender holds the lease.
pub fn run_session(session: &SessionConfig, network: &NetworkConfig, mux: &InportMux) -> Result<SessionOutcome> {
    session.validate()?;
    network.user(&session.sender)?;
    network.user(&session.receiver)?;
    let lease = mux.try_acquire(&session.sender, network)?;
    let mut outcome = run_over_link(session, network)?;
    outcome.transcript.mirror = Some(lease.angles());
    Ok(outcome)
}

/// Same as [`run_session`] but waits for the in-port instead of failing.
pub fn run_session_blocking(session: &SessionConfig, network: &NetworkConfig, mux: &InportMux) -> Result<SessionOutcome> {
    session.validate()?;
    network.user(&session.sender)?;
    network.user(&session.receiver)?;
    let lease = mux.acquire(&session.sender, network)?;
    let mut outcome = run_over_link(session, network)?;
    outcome.transcript.mirror = Some(lease.angles());
    Ok(outcome)
}

/// The full pipeline over any link: preamble, preparation, transmission with
/// optional interception, measurement, sifting, sampling and key extraction.
pub fn run_over_link<L: QuantumLink + ?Sized>(session: &SessionConfig, link: &L) -> Result<SessionOutcome> {
    session.validate()?;
    let mut rng = SimRng::seed_from_u64(session.seed);
    let depth = link.frame_depth(&session.receiver)?;
    let compensate = session.compensate_depth;

    let mut preamble = Vec::with_capacity(2);
    for pulse in sender_preamble(&session.sender, &session.receiver, link)? {
        preamble.push(match link.deliver(pulse, &mut rng)? {
            Delivery::Arrived { user, record, .. } if user == session.receiver => {
                let bit = measure_logical(&record, Basis::Circular, depth, compensate, &mut rng);
                Some(Bb84State::new(Basis::Circular, bit))
            }
            _ => None,
        });
    }
    let sender_identified = preamble.iter().all(Option::is_some)
        && detect_preamble(&preamble.iter().flatten().copied().collect::<Vec<_>>());

    let prepared = bb84_prepare(session.photon_count, &session.sender, &session.receiver, link, &mut rng)?;
    let intercept_fraction = match session.eavesdropper {
        Eavesdropper::None => 0.0,
        Eavesdropper::InterceptResend { fraction } => fraction,
    };

    let mut events = Vec::with_capacity(prepared.len());
    for p in prepared {
        let mut record = p.record;
        let intercepted = intercept_fraction > 0.0 && rng.random::<f64>() < intercept_fraction;
        if intercepted {
            // Eve sits between the sender and the multiplexer
            let local_depth = record.qwp_depth;
            record = eavesdrop_intercept_resend(record, local_depth, &mut rng);
        }
        let measured = match link.deliver(record, &mut rng)? {
            Delivery::Arrived { user, record, .. } if user == session.receiver => {
                Some(bb84_measure_incoming(&record, depth, compensate, &mut rng))
            }
            _ => None,
        };
        events.push(PhotonEvent {
            sequence: events.len() as u64,
            bit: p.bit,
            basis: p.basis,
            intercepted,
            measured,
        });
    }

    let detected: Vec<&PhotonEvent> = events.iter().filter(|e| e.measured.is_some()).collect();
    let sender_bases: Vec<Basis> = detected.iter().map(|e| e.basis).collect();
    let receiver_bases: Vec<Basis> = detected.iter().map(|e| e.measured.unwrap().0).collect();
    let sifted = sift(&sender_bases, &receiver_bases)?;
    let sender_bits: Vec<u8> = sifted.iter().map(|&i| detected[i].bit).collect();
    let receiver_bits: Vec<u8> = sifted.iter().map(|&i| detected[i].measured.unwrap().1).collect();

    let sample_size = ((session.sample_fraction * sifted.len() as f64).ceil() as usize).min(sifted.len());
    let mut sample = index::sample(&mut rng, sifted.len(), sample_size).into_vec();
    sample.sort_unstable();
    let qber_estimate = estimate_qber(&sender_bits, &receiver_bits, &sample)
        .map_err(|_| Error::InsufficientSample { sifted: sifted.len() })?;
    let all: Vec<usize> = (0..sifted.len()).collect();
    let sifted_error_rate = estimate_qber(&sender_bits, &receiver_bits, &all)?;

    let mut disclosed = vec![false; sifted.len()];
    for &i in &sample {
        disclosed[i] = true;
    }
    let keep = |bits: &[u8]| -> Vec<u8> {
        bits.iter().zip(&disclosed).filter(|(_, d)| !**d).map(|(b, _)| *b).collect()
    };
    let key_bits_sender = keep(&sender_bits);
    let key_bits_receiver = keep(&receiver_bits);

    let verdict = if qber_estimate > session.abort_threshold { Verdict::Abort } else { Verdict::Ok };
    let transcript_id = format!("{}-{:016x}", session.id, session.seed);
    let result = Bb84SessionResult {
        session_id: session.id.clone(),
        sender: session.sender.clone(),
        receiver: session.receiver.clone(),
        seed: session.seed,
        photons_sent: session.photon_count,
        raw_count: detected.len(),
        sifted_count: sifted.len(),
        sample_size,
        qber_estimate,
        sifted_error_rate,
        key_bits_sender,
        key_bits_receiver,
        sender_identified,
        verdict,
        transcript_id: transcript_id.clone(),
    };
    let sifted_sequences = sifted.iter().map(|&i| detected[i].sequence as usize).collect();
    let transcript = Transcript {
        id: transcript_id,
        mirror: None,
        receiver_depth: depth,
        preamble,
        photons: events,
        sifted: sifted_sequences,
        sample,
    };
    Ok(SessionOutcome { result, transcript })
}
