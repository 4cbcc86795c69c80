//! Scenario files: a network description plus an ordered list of sessions.
//!
//! The format is TOML. Angles are written as rational multiples of π.
//!
//! ```toml
//! [network]
//! max_abs_ell = 8
//! use_qwp = true
//!
//! [[network.user]]
//! id = "Alice"
//! ell = 4
//!
//! [network.mirrors]
//! Alice = ["3/4 pi", "-1/2 pi"]
//!
//! [network.noise]            # optional, all default to 0
//! loss_prob = 0.0
//!
//! [[network.sorter]]         # optional; synthesized when absent
//! path = "root"
//! alpha = "pi"
//! delta_phi_c = "0"
//!
//! [[session]]
//! id = "alice-bob"
//! sender = "Alice"
//! receiver = "Bob"
//! photons = 10000
//! seed = 1
//! intercept_fraction = 1.0   # optional
//! compensate_depth = true    # optional
//! sample_fraction = 0.1      # optional
//! abort_threshold = 0.11     # optional
//!
//! [output]                   # optional
//! report = "report.tsv"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::angle::PiAngle;
use crate::error::{Error, Result};
use crate::network::{MirrorAngles, NetworkConfig, NoiseModel, User};
use crate::protocol::{Eavesdropper, SessionConfig, DEFAULT_ABORT_THRESHOLD, DEFAULT_SAMPLE_FRACTION};
use crate::sorter::{build_sorter_tree, SorterTree, StageSpec};

/// The bundled four-user scenario.
pub const FOUR_USER_SCENARIO: &str = include_str!("../scenarios/four_user.scenario");

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputTargets {
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub sessions: Vec<SessionConfig>,
    pub output: OutputTargets,
}

fn default_true() -> bool {
    true
}

fn default_max_abs_ell() -> u32 {
    8
}

fn default_sample_fraction() -> f64 {
    DEFAULT_SAMPLE_FRACTION
}

fn default_abort_threshold() -> f64 {
    DEFAULT_ABORT_THRESHOLD
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    network: Spanned<RawNetwork>,
    #[serde(default, rename = "session", skip_serializing_if = "Vec::is_empty")]
    sessions: Vec<Spanned<RawSession>>,
    #[serde(default, skip_serializing_if = "RawOutput::is_empty")]
    output: RawOutput,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    #[serde(default = "default_max_abs_ell")]
    max_abs_ell: u32,
    #[serde(default = "default_true")]
    use_qwp: bool,
    #[serde(rename = "user")]
    users: Vec<Spanned<User>>,
    mirrors: Spanned<BTreeMap<String, [PiAngle; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<Spanned<NoiseModel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sorter: Option<Vec<Spanned<StageSpec>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    sender: String,
    receiver: String,
    photons: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intercept_fraction: Option<f64>,
    #[serde(default = "default_true")]
    compensate_depth: bool,
    #[serde(default = "default_sample_fraction")]
    sample_fraction: f64,
    #[serde(default = "default_abort_threshold")]
    abort_threshold: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    report: Option<String>,
}

impl RawOutput {
    fn is_empty(&self) -> bool {
        self.report.is_none()
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_scenario_str(&text, &path.display().to_string())
}

/// Parses scenario text; `origin` names the source in diagnostics.
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<Scenario> {
    let at = |span: std::ops::Range<usize>, message: String| Error::Parse {
        path: origin.to_string(),
        line: line_of(text, span.start),
        message,
    };
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().trim().to_string(),
    })?;

    let net_span = raw.network.span();
    let net = raw.network.into_inner();
    let mut users: Vec<User> = Vec::with_capacity(net.users.len());
    for spanned in &net.users {
        let user = spanned.get_ref();
        if let Some(first) = users.iter().find(|u| u.ell == user.ell) {
            return Err(at(
                spanned.span(),
                format!(
                    "network.user: duplicate address ell = {} (users {} and {})",
                    user.ell, first.id, user.id
                ),
            ));
        }
        if users.iter().any(|u| u.id == user.id) {
            return Err(at(spanned.span(), format!("network.user: duplicate user id `{}`", user.id)));
        }
        if user.ell.unsigned_abs() > net.max_abs_ell as u64 {
            return Err(at(
                spanned.span(),
                format!("network.user.ell: |{}| exceeds max_abs_ell = {}", user.ell, net.max_abs_ell),
            ));
        }
        users.push(user.clone());
    }

    let mirror_span = net.mirrors.span();
    let mut mirror_table = BTreeMap::new();
    for (id, [a1, a2]) in net.mirrors.into_inner() {
        if !users.iter().any(|u| u.id == id) {
            return Err(at(mirror_span.clone(), format!("network.mirrors: unknown user `{id}`")));
        }
        mirror_table.insert(id, MirrorAngles::new(a1, a2));
    }
    if let Some(missing) = users.iter().find(|u| !mirror_table.contains_key(&u.id)) {
        return Err(at(mirror_span, format!("network.mirrors: no angles for user `{}`", missing.id)));
    }

    let noise = match net.noise {
        Some(spanned) => {
            let span = spanned.span();
            let noise = spanned.into_inner();
            noise.validate().map_err(|e| at(span, e.to_string()))?;
            noise
        }
        None => NoiseModel::NOISELESS,
    };

    let addresses: Vec<i64> = users.iter().map(|u| u.ell).collect();
    let sorter = match &net.sorter {
        None => build_sorter_tree(&addresses, net.use_qwp).map_err(|e| at(net_span.clone(), format!("network: {e}")))?,
        Some(stages) => {
            let specs: Vec<StageSpec> = stages.iter().map(|s| s.get_ref().clone()).collect();
            let first = stages.first().map(|s| s.span()).unwrap_or(net_span.clone());
            SorterTree::from_stages(&addresses, net.use_qwp, &specs)
                .map_err(|e| at(first, format!("network.sorter: {e}")))?
        }
    };
    let network = NetworkConfig::new(users, mirror_table, sorter, noise, net.max_abs_ell)
        .map_err(|e| at(net_span, format!("network: {e}")))?;

    let mut sessions: Vec<SessionConfig> = Vec::with_capacity(raw.sessions.len());
    for (index, spanned) in raw.sessions.iter().enumerate() {
        let s = spanned.get_ref();
        let session = SessionConfig {
            id: s.id.clone().unwrap_or_else(|| format!("s{index}")),
            sender: s.sender.clone(),
            receiver: s.receiver.clone(),
            photon_count: s.photons,
            eavesdropper: match s.intercept_fraction {
                Some(fraction) => Eavesdropper::InterceptResend { fraction },
                None => Eavesdropper::None,
            },
            compensate_depth: s.compensate_depth,
            seed: s.seed,
            sample_fraction: s.sample_fraction,
            abort_threshold: s.abort_threshold,
        };
        for user in [&session.sender, &session.receiver] {
            if network.user(user).is_err() {
                return Err(at(spanned.span(), format!("session `{}`: unknown user `{user}`", session.id)));
            }
        }
        if sessions.iter().any(|o| o.id == session.id) {
            return Err(at(spanned.span(), format!("session: duplicate id `{}`", session.id)));
        }
        session
            .validate()
            .map_err(|e| at(spanned.span(), format!("session `{}`: {e}", session.id)))?;
        sessions.push(session);
    }

    Ok(Scenario {
        network,
        sessions,
        output: OutputTargets { report: raw.output.report.map(PathBuf::from) },
    })
}

/// Writes `scenario` back out, including the sorter stages.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    fn bare<T>(value: T) -> Spanned<T> {
        Spanned::new(0..0, value)
    }
    let net = &scenario.network;
    let raw = RawScenario {
        network: bare(RawNetwork {
            max_abs_ell: net.max_abs_ell(),
            use_qwp: net.sorter().use_qwp(),
            users: net.users().iter().cloned().map(bare).collect(),
            mirrors: bare(
                net.mirror_table()
                    .iter()
                    .map(|(k, v)| (k.clone(), [v.alpha1, v.alpha2]))
                    .collect(),
            ),
            noise: Some(bare(net.noise())),
            sorter: Some(net.sorter().stages().into_iter().map(bare).collect()),
        }),
        sessions: scenario
            .sessions
            .iter()
            .map(|s| {
                bare(RawSession {
                        id: Some(s.id.clone()),
                        sender: s.sender.clone(),
                        receiver: s.receiver.clone(),
                        photons: s.photon_count,
                        seed: s.seed,
                        intercept_fraction: match s.eavesdropper {
                            Eavesdropper::None => None,
                            Eavesdropper::InterceptResend { fraction } => Some(fraction),
                        },
                        compensate_depth: s.compensate_depth,
                        sample_fraction: s.sample_fraction,
                        abort_threshold: s.abort_threshold,
                })
            })
            .collect(),
        output: RawOutput {
            report: scenario.output.report.as_ref().map(|p| p.display().to_string()),
        },
    };
    toml::to_string(&raw).expect("scenario serializes")
}
