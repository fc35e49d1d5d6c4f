//! Segment probing back ends.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linetwin::{propagate_chain, FaultSpec};
use crate::netmodel::{LinkId, Topology};
use crate::units::{db_to_lin, mw_to_dbm};

/// What a probe transmission over a segment reveals at the far end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReading {
    /// Line GSNR of the probed channel, linear.
    pub gsnr: f64,
    /// Received probe power, dBm.
    pub p_rx_dbm: f64,
}

pub trait ProbeOracle {
    fn probe(&self, links: &[LinkId], channel: usize, launch_dbm: f64) -> Result<ProbeReading, String>;
}

/// Fixed GSNR per segment, keyed by the segment's link ids joined with `+`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProber {
    pub gsnr_db: BTreeMap<String, f64>,
    /// GSNR for segments missing from the map.
    pub default_gsnr_db: f64,
    pub p_rx_dbm: f64,
}

impl SyntheticProber {
    pub fn new(default_gsnr_db: f64) -> Self {
        Self {
            gsnr_db: BTreeMap::new(),
            default_gsnr_db,
            p_rx_dbm: -5.0,
        }
    }

    pub fn with(mut self, key: &str, gsnr_db: f64) -> Self {
        self.gsnr_db.insert(key.to_owned(), gsnr_db);
        self
    }
}

pub(crate) fn segment_key(links: &[LinkId]) -> String {
    links.iter().map(LinkId::as_str).collect::<Vec<_>>().join("+")
}

impl ProbeOracle for SyntheticProber {
    fn probe(&self, links: &[LinkId], _channel: usize, _launch_dbm: f64) -> Result<ProbeReading, String> {
        let db = self.gsnr_db.get(&segment_key(links)).copied().unwrap_or(self.default_gsnr_db);
        Ok(ProbeReading {
            gsnr: db_to_lin(db),
            p_rx_dbm: self.p_rx_dbm,
        })
    }
}

/// Probes by propagating the full grid through the twin's links.
#[derive(Debug, Clone)]
pub struct TwinProber<'a> {
    pub topology: &'a Topology,
    pub faults: Vec<FaultSpec>,
}

impl<'a> TwinProber<'a> {
    pub fn new(topology: &'a Topology) -> Self {
        Self {
            topology,
            faults: Vec::new(),
        }
    }
}

impl ProbeOracle for TwinProber<'_> {
    fn probe(&self, links: &[LinkId], channel: usize, launch_dbm: f64) -> Result<ProbeReading, String> {
        let t = self.topology;
        let ls = links
            .iter()
            .map(|id| t.link(id.as_str()).ok_or_else(|| format!("unknown link {id}")))
            .collect::<Result<Vec<_>, _>>()?;
        if channel >= t.grid.count {
            return Err(format!("channel {channel} outside the grid"));
        }
        let launch = vec![launch_dbm; t.grid.count];
        let state = propagate_chain(&ls, &t.grid, &launch, &self.faults).map_err(|e| e.to_string())?;
        match state.output_record() {
            Some(r) => Ok(ProbeReading {
                gsnr: r.gsnr()[channel],
                p_rx_dbm: mw_to_dbm(r.signal_mw[channel]),
            }),
            None => Ok(ProbeReading {
                gsnr: f64::INFINITY,
                p_rx_dbm: launch_dbm,
            }),
        }
    }
}
