//! DCX topology: sites, POPs, transceivers, alien access links and carrier
//! links made of spans, amplifiers and ROADMs.
//!
//! The JSON topology document deserializes directly into [`Topology`]; field
//! names carry their units and unknown keys are rejected. [`load_topology`]
//! parses and validates in one step.

mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modes::{ModeCatalog, TrxMode};
use crate::qot::TrxNoiseModel;

pub use validate::{pop_graph_connected, validate_topology, Violation};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(
    /// Identifier of a site (user data center or POP).
    SiteId
);
id_type!(
    /// Identifier of an optical link.
    LinkId
);
id_type!(
    /// Identifier of a transceiver unit.
    TrxId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SiteKind {
    /// Urban data center; may host carrier POP equipment.
    #[serde(rename = "UDC")]
    Udc,
    /// Suburban data center.
    #[serde(rename = "SDC")]
    Sdc,
    /// Dedicated carrier point of presence.
    #[serde(rename = "POP")]
    Pop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub id: SiteId,
    pub kind: SiteKind,
    #[serde(default)]
    pub trx_ids: Vec<TrxId>,
    /// Carrier POP equipment co-located in an urban DC.
    #[serde(default)]
    pub hosts_pop: bool,
}

impl Site {
    pub fn is_pop(&self) -> bool {
        self.kind == SiteKind::Pop || self.hosts_pop
    }

    /// User sites terminate alien access links with their own transceivers.
    pub fn is_user(&self) -> bool {
        self.kind != SiteKind::Pop
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrxUnit {
    pub id: TrxId,
    pub serial: String,
    pub site_id: SiteId,
    pub catalog_id: String,
    pub noise_model_id: String,
}

fn default_attenuation() -> f64 {
    0.2
}
fn default_dispersion() -> f64 {
    16.7
}
fn default_gamma() -> f64 {
    1.3
}

/// A fiber span with lumped connector losses at either end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpan {
    pub length_km: f64,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: f64,
    #[serde(default = "default_dispersion")]
    pub dispersion_ps_per_nm_km: f64,
    #[serde(default = "default_gamma")]
    pub gamma_per_w_km: f64,
    #[serde(default)]
    pub conn_in_db: f64,
    #[serde(default)]
    pub conn_out_db: f64,
    /// Spectral loss tilt across the grid, dB, positive when the
    /// highest-frequency channel sees more loss than the lowest.
    #[serde(default)]
    pub loss_tilt_db: f64,
}

impl FiberSpan {
    pub fn new(length_km: f64) -> Self {
        Self {
            length_km,
            attenuation_db_per_km: default_attenuation(),
            dispersion_ps_per_nm_km: default_dispersion(),
            gamma_per_w_km: default_gamma(),
            conn_in_db: 0.0,
            conn_out_db: 0.0,
            loss_tilt_db: 0.0,
        }
    }

    /// Fiber loss excluding connectors, dB.
    pub fn fiber_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.length_km
    }

    /// Total loss at the grid centre including connectors, dB.
    pub fn total_loss_db(&self) -> f64 {
        self.fiber_loss_db() + self.conn_in_db + self.conn_out_db
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monitors {
    #[serde(default = "yes")]
    pub input: bool,
    #[serde(default = "yes")]
    pub output: bool,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            input: true,
            output: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdfaUnit {
    pub id: String,
    pub gain_db: f64,
    #[serde(default)]
    pub tilt_db: f64,
    /// `(gain dB, NF dB)` points, gains strictly increasing.
    pub nf_curve: Vec<[f64; 2]>,
    pub gain_range_db: [f64; 2],
    pub tilt_range_db: [f64; 2],
    pub max_total_out_dbm: f64,
    #[serde(default)]
    pub monitors: Monitors,
}

impl EdfaUnit {
    /// Noise figure at `gain_db`, piecewise-linear with clamped extrapolation.
    pub fn nf_at(&self, gain_db: f64) -> f64 {
        nf_from_curve(&self.nf_curve, gain_db)
    }
}

/// Piecewise-linear interpolation on `(gain, nf)` points; outside the curve
/// the end values are held.
pub fn nf_from_curve(curve: &[[f64; 2]], gain_db: f64) -> f64 {
    match curve {
        [] => f64::NAN,
        [only] => only[1],
        _ => {
            let first = curve[0];
            let last = curve[curve.len() - 1];
            if gain_db <= first[0] {
                return first[1];
            }
            if gain_db >= last[0] {
                return last[1];
            }
            let k = curve.partition_point(|p| p[0] <= gain_db);
            let (a, b) = (curve[k - 1], curve[k]);
            let t = (gain_db - a[0]) / (b[0] - a[0]);
            a[1] + t * (b[1] - a[1])
        }
    }
}

/// Gain and tilt actuator values for one amplifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfaSetting {
    pub id: String,
    pub gain_db: f64,
    pub tilt_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadmUnit {
    pub id: String,
    pub insertion_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LineElement {
    Span(FiberSpan),
    Edfa(EdfaUnit),
    Roadm(RoadmUnit),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    /// Alien access link: user site to POP, parameters unknown a priori.
    #[serde(rename = "AAL")]
    Aal,
    /// Carrier-owned WDM link between POPs.
    CarrierLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalLink {
    pub id: LinkId,
    pub endpoints: [SiteId; 2],
    pub kind: LinkKind,
    pub elements: Vec<LineElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_known: Option<bool>,
}

impl OpticalLink {
    pub fn params_known(&self) -> bool {
        self.params_known.unwrap_or(self.kind == LinkKind::CarrierLink)
    }

    pub fn length_km(&self) -> f64 {
        self.spans().map(|s| s.length_km).sum()
    }

    pub fn spans(&self) -> impl Iterator<Item = &FiberSpan> {
        self.elements.iter().filter_map(|e| match e {
            LineElement::Span(s) => Some(s),
            _ => None,
        })
    }

    pub fn edfas(&self) -> impl Iterator<Item = &EdfaUnit> {
        self.elements.iter().filter_map(|e| match e {
            LineElement::Edfa(a) => Some(a),
            _ => None,
        })
    }

    pub fn edfa_mut(&mut self, id: &str) -> Option<&mut EdfaUnit> {
        self.elements.iter_mut().find_map(|e| match e {
            LineElement::Edfa(a) if a.id == id => Some(a),
            _ => None,
        })
    }

    /// Current gain/tilt of every amplifier, in line order.
    pub fn settings(&self) -> Vec<EdfaSetting> {
        self.edfas()
            .map(|a| EdfaSetting {
                id: a.id.clone(),
                gain_db: a.gain_db,
                tilt_db: a.tilt_db,
            })
            .collect()
    }

    /// Copy of the link with the given amplifier settings applied; unknown
    /// ids are ignored.
    pub fn with_settings(&self, settings: &[EdfaSetting]) -> OpticalLink {
        let mut out = self.clone();
        for s in settings {
            if let Some(a) = out.edfa_mut(&s.id) {
                a.gain_db = s.gain_db;
                a.tilt_db = s.tilt_db;
            }
        }
        out
    }

    pub fn connects(&self, a: &SiteId, b: &SiteId) -> bool {
        (&self.endpoints[0] == a && &self.endpoints[1] == b)
            || (&self.endpoints[0] == b && &self.endpoints[1] == a)
    }

    /// The endpoint opposite `site`, if `site` is an endpoint.
    pub fn other_end(&self, site: &SiteId) -> Option<&SiteId> {
        if &self.endpoints[0] == site {
            Some(&self.endpoints[1])
        } else if &self.endpoints[1] == site {
            Some(&self.endpoints[0])
        } else {
            None
        }
    }

    /// Concatenates several links into one element chain (used for segment
    /// and route level QoT).
    pub fn concatenate(id: &str, links: &[&OpticalLink]) -> OpticalLink {
        let first = links.first().map(|l| l.endpoints[0].clone());
        let last = links.last().map(|l| l.endpoints[1].clone());
        OpticalLink {
            id: LinkId::from(id),
            endpoints: [first.unwrap_or_default(), last.unwrap_or_default()],
            kind: LinkKind::CarrierLink,
            elements: links.iter().flat_map(|l| l.elements.iter().cloned()).collect(),
            params_known: None,
        }
    }
}

impl Default for SiteId {
    fn default() -> Self {
        SiteId(String::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelGrid {
    pub center_thz: f64,
    pub spacing_ghz: f64,
    pub count: usize,
    pub symbol_rate_gbaud: f64,
}

impl ChannelGrid {
    /// Centre frequency of channel `i`, Hz. Channels are placed symmetrically
    /// around `center_thz`.
    pub fn freq_hz(&self, i: usize) -> f64 {
        let offset = i as f64 - (self.count as f64 - 1.0) / 2.0;
        self.center_thz * 1e12 + offset * self.spacing_ghz * 1e9
    }

    pub fn freqs_hz(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.freq_hz(i)).collect()
    }

    /// Normalised spectral position in `[-0.5, 0.5]`, used for tilt.
    pub fn tilt_fraction(&self, i: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            i as f64 / (self.count as f64 - 1.0) - 0.5
        }
    }

    pub fn symbol_rate_hz(&self) -> f64 {
        self.symbol_rate_gbaud * 1e9
    }

    /// Occupied WDM bandwidth, Hz.
    pub fn wdm_bandwidth_hz(&self) -> f64 {
        self.count as f64 * self.spacing_ghz * 1e9
    }

    /// A one-channel grid at the frequency of channel `i` (AALs carry a
    /// single data channel).
    pub fn single_channel(&self, i: usize) -> ChannelGrid {
        ChannelGrid {
            center_thz: self.freq_hz(i) / 1e12,
            spacing_ghz: self.spacing_ghz,
            count: 1,
            symbol_rate_gbaud: self.symbol_rate_gbaud,
        }
    }
}

/// Named noise model entry of the topology document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModelEntry {
    pub id: String,
    pub snr_trx_const: f64,
    pub snr_p_coeff_per_mw: f64,
}

impl NoiseModelEntry {
    pub fn model(&self) -> TrxNoiseModel {
        TrxNoiseModel {
            snr_trx_const: self.snr_trx_const,
            snr_p_coeff: self.snr_p_coeff_per_mw,
        }
    }
}

/// Catalog entry of the topology document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub id: String,
    pub probe_mode_id: String,
    pub modes: Vec<TrxMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub grid: ChannelGrid,
    pub sites: Vec<Site>,
    #[serde(default)]
    pub trxs: Vec<TrxUnit>,
    #[serde(default)]
    pub catalogs: Vec<CatalogEntry>,
    #[serde(default)]
    pub noise_models: Vec<NoiseModelEntry>,
    pub links: Vec<OpticalLink>,
    #[serde(default)]
    pub allowlist: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("malformed topology document: {0}")]
    Parse(String),
    #[error("invalid topology at {}: {}", .0[0].path, .0[0].rule)]
    Validation(Vec<Violation>),
    #[error("unknown site {0}")]
    UnknownSite(SiteId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
}

/// Parses and validates a topology document.
pub fn load_topology(text: &str) -> Result<Topology, TopologyError> {
    let topology: Topology =
        serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
    let violations = validate_topology(&topology);
    if violations.is_empty() {
        Ok(topology)
    } else {
        Err(TopologyError::Validation(violations))
    }
}

impl Topology {
    /// Serializes back to the document form accepted by [`load_topology`].
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn site(&self, id: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.id.as_str() == id)
    }

    pub fn link(&self, id: &str) -> Option<&OpticalLink> {
        self.links.iter().find(|l| l.id.as_str() == id)
    }

    pub fn link_mut(&mut self, id: &str) -> Option<&mut OpticalLink> {
        self.links.iter_mut().find(|l| l.id.as_str() == id)
    }

    pub fn trx(&self, id: &str) -> Option<&TrxUnit> {
        self.trxs.iter().find(|t| t.id.as_str() == id)
    }

    pub fn noise_model(&self, id: &str) -> Option<TrxNoiseModel> {
        self.noise_models
            .iter()
            .find(|n| n.id == id)
            .map(NoiseModelEntry::model)
    }

    /// Noise model of transceiver `trx_id`.
    pub fn noise_model_for(&self, trx_id: &TrxId) -> Option<TrxNoiseModel> {
        self.noise_model(&self.trx(trx_id.as_str())?.noise_model_id)
    }

    /// The mode catalog advertised by transceiver `trx_id`.
    pub fn catalog_for(&self, trx_id: &TrxId) -> Option<ModeCatalog> {
        let trx = self.trx(trx_id.as_str())?;
        let entry = self.catalogs.iter().find(|c| c.id == trx.catalog_id)?;
        Some(ModeCatalog {
            trx_id: trx_id.clone(),
            modes: entry.modes.clone(),
            probe_mode_id: entry.probe_mode_id.clone(),
        })
    }

    pub fn pops(&self) -> impl Iterator<Item = &Site> {
        self.sites.iter().filter(|s| s.is_pop())
    }

    pub fn carrier_links(&self) -> impl Iterator<Item = &OpticalLink> {
        self.links.iter().filter(|l| l.kind == LinkKind::CarrierLink)
    }

    /// AALs attached to `site`, sorted by id.
    pub fn aals_of(&self, site: &SiteId) -> Vec<&OpticalLink> {
        let mut out: Vec<_> = self
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::Aal && l.endpoints.contains(site))
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// All links whose endpoint set is `{a, b}`, stable order by id.
    pub fn links_between(&self, a: &SiteId, b: &SiteId) -> Result<Vec<&OpticalLink>, TopologyError> {
        for s in [a, b] {
            if self.site(s.as_str()).is_none() {
                return Err(TopologyError::UnknownSite(s.clone()));
            }
        }
        let mut out: Vec<_> = self.links.iter().filter(|l| l.connects(a, b)).collect();
        out.sort_by(|x, y| x.id.cmp(&y.id));
        Ok(out)
    }

    /// Transceivers hosted at `site`, in the site's declared order.
    pub fn trxs_at(&self, site: &SiteId) -> Vec<&TrxUnit> {
        self.site(site.as_str())
            .map(|s| s.trx_ids.iter().filter_map(|t| self.trx(t.as_str())).collect())
            .unwrap_or_default()
    }
}
