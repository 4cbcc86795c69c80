//! Mode-division-multiplexed network: users addressed by `ell`, a rotating
//! mirror multiplexer in front of a single in-port, transport through the
//! sorter tree, and the sender-identification preamble.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Condvar, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::angle::PiAngle;
use crate::error::{Error, Result};
use crate::polarization::{canonical_state, decode_bb84, qwp_power, Bb84State};
use crate::sorter::{build_sorter_tree, route_photon, PhotonRecord, SorterTree};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub ell: i64,
}

impl User {
    pub fn new(id: impl Into<String>, ell: i64) -> Self {
        User { id: id.into(), ell }
    }
}

/// Settings of the two rotating mirrors that steer one sender into the in-port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorAngles {
    pub alpha1: PiAngle,
    pub alpha2: PiAngle,
}

impl MirrorAngles {
    pub fn new(alpha1: PiAngle, alpha2: PiAngle) -> Self {
        MirrorAngles { alpha1, alpha2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Probability that `ell` shifts by ±1 in transit, split evenly.
    #[serde(default)]
    pub ell_crosstalk_prob: f64,
    /// Probability of a bit flip within the arrival basis.
    #[serde(default)]
    pub pol_flip_prob: f64,
    /// Probability that the photon is never detected.
    #[serde(default)]
    pub loss_prob: f64,
}

impl NoiseModel {
    pub const NOISELESS: NoiseModel = NoiseModel {
        ell_crosstalk_prob: 0.0,
        pol_flip_prob: 0.0,
        loss_prob: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("noise.ell_crosstalk_prob", self.ell_crosstalk_prob),
            ("noise.pol_flip_prob", self.pol_flip_prob),
            ("noise.loss_prob", self.loss_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::invalid(name, format!("{value} is outside [0, 1]")));
            }
        }
        if self.ell_crosstalk_prob + self.loss_prob > 1.0 {
            return Err(Error::invalid(
                "noise",
                "ell_crosstalk_prob + loss_prob must not exceed 1",
            ));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        *self == NoiseModel::NOISELESS
    }
}

/// Static network description. Leaf depths of the sorter are public
/// topology, so receivers know how many quarter-wave plates their photons
/// pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    users: Vec<User>,
    mirror_table: BTreeMap<String, MirrorAngles>,
    sorter: SorterTree,
    noise: NoiseModel,
    max_abs_ell: u32,
}

impl NetworkConfig {
    pub fn new(
        users: Vec<User>,
        mirror_table: BTreeMap<String, MirrorAngles>,
        sorter: SorterTree,
        noise: NoiseModel,
        max_abs_ell: u32,
    ) -> Result<Self> {
        if max_abs_ell == 0 {
            return Err(Error::invalid("max_abs_ell", "must be positive"));
        }
        check_users(&users, max_abs_ell)?;
        for user in &users {
            if !mirror_table.contains_key(&user.id) {
                return Err(Error::invalid(
                    "mirrors",
                    format!("no mirror angles for user `{}`", user.id),
                ));
            }
        }
        if let Some(extra) = mirror_table.keys().find(|k| !users.iter().any(|u| &u.id == *k)) {
            return Err(Error::UnknownUser(extra.clone()));
        }
        let mut addresses: Vec<i64> = users.iter().map(|u| u.ell).collect();
        addresses.sort_unstable();
        if sorter.addresses() != addresses {
            return Err(Error::invalid(
                "sorter",
                format!("sorter addresses {:?} differ from user addresses {addresses:?}", sorter.addresses()),
            ));
        }
        if let Some(leaf) = sorter.leaves().iter().find(|l| l.ells.len() != 1) {
            return Err(Error::invalid(
                "sorter",
                format!("leaf {} holds several addresses {:?}", leaf.id, leaf.ells),
            ));
        }
        noise.validate()?;
        Ok(NetworkConfig { users, mirror_table, sorter, noise, max_abs_ell })
    }

    /// Builds the network with a synthesized sorter over the user addresses.
    pub fn with_synthesized_sorter(
        users: Vec<User>,
        mirror_table: BTreeMap<String, MirrorAngles>,
        noise: NoiseModel,
        max_abs_ell: u32,
        use_qwp: bool,
    ) -> Result<Self> {
        check_users(&users, max_abs_ell)?;
        let addresses: Vec<i64> = users.iter().map(|u| u.ell).collect();
        let sorter = build_sorter_tree(&addresses, use_qwp)?;
        Self::new(users, mirror_table, sorter, noise, max_abs_ell)
    }

    /// Alice ℓ=4, Bob ℓ=2, Charley ℓ=3, David ℓ=1, with the standard mirror
    /// table and TAM-sorter prisms.
    pub fn four_user() -> Self {
        let users = vec![
            User::new("Alice", 4),
            User::new("Bob", 2),
            User::new("Charley", 3),
            User::new("David", 1),
        ];
        Self::with_synthesized_sorter(users, default_mirror_table(), NoiseModel::NOISELESS, 8, true)
            .expect("four-user network is valid")
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn mirror_table(&self) -> &BTreeMap<String, MirrorAngles> {
        &self.mirror_table
    }

    pub fn sorter(&self) -> &SorterTree {
        &self.sorter
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn max_abs_ell(&self) -> u32 {
        self.max_abs_ell
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn user(&self, id: &str) -> Result<&User> {
        self.users
            .iter()
            .find(|u| u.id == id)
            .ok_or_else(|| Error::UnknownUser(id.to_string()))
    }

    /// The `ell` the sender's hologram imprints to reach `destination`.
    pub fn encode_address(&self, destination: &str) -> Result<i64> {
        Ok(self.user(destination)?.ell)
    }

    pub fn mirror_angles(&self, sender: &str) -> Result<MirrorAngles> {
        self.mirror_table
            .get(sender)
            .copied()
            .ok_or_else(|| Error::UnknownUser(sender.to_string()))
    }

    /// Quarter-wave plates a photon addressed to `user` passes on its way.
    pub fn frame_depth(&self, user: &str) -> Result<u32> {
        let ell = self.user(user)?.ell;
        let leaf = self.sorter.leaf_for(ell).expect("validated at construction");
        Ok(if self.sorter.use_qwp() { leaf.depth } else { 0 })
    }

    fn owner_of_leaf(&self, leaf: usize) -> &User {
        let ell = self.sorter.leaves()[leaf].ells[0];
        self.users.iter().find(|u| u.ell == ell).expect("leaves match users")
    }

    fn check_ell(&self, ell: i64) -> Result<()> {
        if ell.unsigned_abs() > self.max_abs_ell as u64 {
            Err(Error::EllOutOfRange { ell, cap: self.max_abs_ell })
        } else {
            Ok(())
        }
    }

    /// Sends one photon through the channel: loss, then `ell` crosstalk, then
    /// the sorter, then a polarization flip within the arrival basis.
    pub fn transmit<R: Rng + ?Sized>(&self, mut photon: PhotonRecord, rng: &mut R) -> Result<Delivery> {
        self.check_ell(photon.ell)?;
        let noise = self.noise;
        if noise.loss_prob > 0.0 && rng.random::<f64>() < noise.loss_prob {
            return Ok(Delivery::Lost);
        }
        let mut crosstalk = false;
        if noise.ell_crosstalk_prob > 0.0 && rng.random::<f64>() < noise.ell_crosstalk_prob {
            photon.ell += if rng.random::<bool>() { 1 } else { -1 };
            crosstalk = true;
        }
        let routed = route_photon(photon, &self.sorter, rng);
        let mut record = routed.record;
        if noise.pol_flip_prob > 0.0 && rng.random::<f64>() < noise.pol_flip_prob {
            flip_in_arrival_basis(&mut record);
        }
        Ok(Delivery::Arrived {
            user: self.owner_of_leaf(routed.leaf).id.clone(),
            record,
            stray: routed.stray,
            crosstalk,
        })
    }
}

fn check_users(users: &[User], max_abs_ell: u32) -> Result<()> {
    if users.is_empty() {
        return Err(Error::invalid("users", "at least one user is required"));
    }
    let mut ids = BTreeSet::new();
    for (i, user) in users.iter().enumerate() {
        if !ids.insert(user.id.as_str()) {
            return Err(Error::invalid("users", format!("duplicate user id `{}`", user.id)));
        }
        if let Some(first) = users[..i].iter().find(|u| u.ell == user.ell) {
            return Err(Error::DuplicateAddress {
                ell: user.ell,
                first: first.id.clone(),
                second: user.id.clone(),
            });
        }
        if user.ell.unsigned_abs() > max_abs_ell as u64 {
            return Err(Error::EllOutOfRange { ell: user.ell, cap: max_abs_ell });
        }
    }
    Ok(())
}

fn flip_in_arrival_basis(record: &mut PhotonRecord) {
    if let Ok(state) = decode_bb84(&record.polarization, 0) {
        record.polarization = canonical_state(state.flipped());
    }
}

pub fn default_mirror_table() -> BTreeMap<String, MirrorAngles> {
    [
        ("Charley", MirrorAngles::new(PiAngle::new(1, 4), PiAngle::new(-1, 4))),
        ("David", MirrorAngles::new(PiAngle::new(1, 4), PiAngle::new(-1, 2))),
        ("Bob", MirrorAngles::new(PiAngle::ZERO, PiAngle::new(-1, 2))),
        ("Alice", MirrorAngles::new(PiAngle::new(3, 4), PiAngle::new(-1, 2))),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Arrived {
        user: String,
        record: PhotonRecord,
        /// The arriving `ell` is not a configured address.
        stray: bool,
        /// `ell` was shifted by crosstalk in transit.
        crosstalk: bool,
    },
    Lost,
}

/// A channel that carries photons between users.
pub trait QuantumLink {
    fn encode_address(&self, destination: &str) -> Result<i64>;

    /// Quarter-wave-plate passes on the path to `receiver`.
    fn frame_depth(&self, receiver: &str) -> Result<u32>;

    fn deliver<R: Rng + ?Sized>(&self, photon: PhotonRecord, rng: &mut R) -> Result<Delivery>;
}

impl QuantumLink for NetworkConfig {
    fn encode_address(&self, destination: &str) -> Result<i64> {
        NetworkConfig::encode_address(self, destination)
    }

    fn frame_depth(&self, receiver: &str) -> Result<u32> {
        NetworkConfig::frame_depth(self, receiver)
    }

    fn deliver<R: Rng + ?Sized>(&self, photon: PhotonRecord, rng: &mut R) -> Result<Delivery> {
        self.transmit(photon, rng)
    }
}

/// Point-to-point link applying a fixed number of quarter-wave plates.
#[derive(Debug, Clone)]
pub struct FixedDepthLink {
    pub receiver: String,
    pub ell: i64,
    pub depth: u32,
}

impl QuantumLink for FixedDepthLink {
    fn encode_address(&self, destination: &str) -> Result<i64> {
        if destination == self.receiver {
            Ok(self.ell)
        } else {
            Err(Error::UnknownUser(destination.to_string()))
        }
    }

    fn frame_depth(&self, receiver: &str) -> Result<u32> {
        self.encode_address(receiver).map(|_| self.depth)
    }

    fn deliver<R: Rng + ?Sized>(&self, mut photon: PhotonRecord, _rng: &mut R) -> Result<Delivery> {
        photon.polarization = qwp_power(&photon.polarization, self.depth);
        photon.qwp_depth += self.depth;
        Ok(Delivery::Arrived {
            user: self.receiver.clone(),
            record: photon,
            stray: false,
            crosstalk: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MuxEvent {
    Granted { sender: String, alpha1: PiAngle, alpha2: PiAngle },
    Busy { requester: String, holder: String },
    Released { sender: String },
}

#[derive(Debug, Default)]
struct MuxState {
    holder: Option<String>,
    log: Vec<MuxEvent>,
}

/// The single in-port in front of the sorter. At most one sender holds it.
#[derive(Debug, Default)]
pub struct InportMux {
    state: Mutex<MuxState>,
    idle: Condvar,
}

impl InportMux {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn try_acquire(&self, sender: &str, config: &NetworkConfig) -> Result<InportLease<'_>> {
        let angles = config.mirror_angles(sender)?;
        let mut state = self.state.lock().expect("mux lock");
        if let Some(holder) = state.holder.clone() {
            state.log.push(MuxEvent::Busy { requester: sender.to_string(), holder: holder.clone() });
            return Err(Error::InportBusy { holder, requester: sender.to_string() });
        }
        Ok(self.grant(&mut state, sender, angles))
    }

    /// Waits until the in-port is idle, then takes it.
    pub fn acquire(&self, sender: &str, config: &NetworkConfig) -> Result<InportLease<'_>> {
        let angles = config.mirror_angles(sender)?;
        let mut state = self.state.lock().expect("mux lock");
        while state.holder.is_some() {
            state = self.idle.wait(state).expect("mux lock");
        }
        Ok(self.grant(&mut state, sender, angles))
    }

    fn grant(&self, state: &mut MuxState, sender: &str, angles: MirrorAngles) -> InportLease<'_> {
        state.holder = Some(sender.to_string());
        state.log.push(MuxEvent::Granted {
            sender: sender.to_string(),
            alpha1: angles.alpha1,
            alpha2: angles.alpha2,
        });
        InportLease { mux: self, sender: sender.to_string(), angles }
    }

    pub fn holder(&self) -> Option<String> {
        self.state.lock().expect("mux lock").holder.clone()
    }

    pub fn log(&self) -> Vec<MuxEvent> {
        self.state.lock().expect("mux lock").log.clone()
    }
}

/// Exclusive use of the in-port; released on drop.
#[derive(Debug)]
pub struct InportLease<'a> {
    mux: &'a InportMux,
    sender: String,
    angles: MirrorAngles,
}

impl InportLease<'_> {
    pub fn sender(&self) -> &str {
        &self.sender
    }

    pub fn angles(&self) -> MirrorAngles {
        self.angles
    }

    pub fn release(self) {}
}

impl Drop for InportLease<'_> {
    fn drop(&mut self) {
        let mut state = self.mux.state.lock().expect("mux lock");
        state.holder = None;
        state.log.push(MuxEvent::Released { sender: self.sender.clone() });
        self.mux.idle.notify_one();
    }
}

/// Two pulses, right- then left-handed, addressed to `receiver`, announcing
/// `sender`.
pub fn sender_preamble<L: QuantumLink + ?Sized>(
    sender: &str,
    receiver: &str,
    link: &L,
) -> Result<[PhotonRecord; 2]> {
    let ell = link.encode_address(receiver)?;
    let pulse = |state: Bb84State, sequence: u64| PhotonRecord {
        preamble: true,
        ..PhotonRecord::new(ell, canonical_state(state), sender, sequence)
    };
    Ok([pulse(Bb84State::R, 0), pulse(Bb84State::L, 1)])
}

/// True iff the first two decoded pulses are R then L.
pub fn detect_preamble(received: &[Bb84State]) -> bool {
    received.len() >= 2 && received[0] == Bb84State::R && received[1] == Bb84State::L
}
