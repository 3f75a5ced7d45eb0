//! Long-haul backbone line: spans, amplifiers, the 50 GHz channel grid and
//! the transponders that light it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{db_sum, OpticalError};
use crate::domain::{DomainId, ElementId};

pub const GRID_SPACING_GHZ: f64 = 50.0;
pub const LIVE_BAUD_GBD: f64 = 63.9;
/// Reported by every monitor when no channel carries light.
pub const POWER_FLOOR_DBM: f64 = -99.0;
/// 10·log10(1 mW / (h·ν·B_ref)) at 1550 nm with a 0.1 nm reference bandwidth.
pub const OSNR_CONSTANT_DB: f64 = 58.0;

const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;
const DEFAULT_NF_DB: f64 = 5.0;
const GAIN_RANGE_DB: (f64, f64) = (0.0, 35.0);
const NF_RANGE_DB: (f64, f64) = (3.0, 10.0);
const SUPPORTED_RATES_GBPS: [u32; 2] = [400, 200];

fn default_loss() -> f64 {
    DEFAULT_LOSS_DB_PER_KM
}

fn default_nf() -> f64 {
    DEFAULT_NF_DB
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanConfig {
    pub id: String,
    pub domain: DomainId,
    pub length_km: f64,
    #[serde(default = "default_loss")]
    pub loss_db_per_km: f64,
    #[serde(default)]
    pub extra_loss_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdfaConfig {
    pub id: String,
    pub domain: DomainId,
    /// Omitted: compensate the loss of the span this amplifier follows
    /// (0 dB when another amplifier already sits after that span).
    #[serde(default)]
    pub gain_db: Option<f64>,
    #[serde(default = "default_nf")]
    pub nf_db: f64,
    /// Span this amplifier is placed after; `None` places it at the line input.
    #[serde(default)]
    pub after_span: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub index: u8,
    #[serde(default)]
    pub launch_power_dbm: f64,
    /// Whether the ASE dummy source fills this slot while no transponder uses it.
    #[serde(default = "default_true")]
    pub dummy_loading: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransponderConfig {
    pub id: String,
    pub domain: DomainId,
    #[serde(default)]
    pub channel: Option<u8>,
    #[serde(default)]
    pub rate_gbps: Option<u32>,
}

/// Backbone scenario description, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub spans: Vec<SpanConfig>,
    pub amplifiers: Vec<EdfaConfig>,
    pub channels: Vec<ChannelConfig>,
    #[serde(default)]
    pub transponders: Vec<TransponderConfig>,
}

impl Default for BackboneConfig {
    /// 440 km in four 110 km G.652D spans split over two domains, three
    /// amplifiers per domain, a 30-slot grid and six in-service transponders.
    fn default() -> Self {
        let span = |i: usize, domain| SpanConfig {
            id: format!("span{i}"),
            domain,
            length_km: 110.0,
            loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
            extra_loss_db: 0.0,
        };
        let amp = |i: usize, domain, gain: f64, after: usize| EdfaConfig {
            id: format!("edfa{i}"),
            domain,
            gain_db: Some(gain),
            nf_db: DEFAULT_NF_DB,
            after_span: Some(format!("span{after}")),
        };
        let (a, b) = (DomainId::BackboneA, DomainId::BackboneB);
        BackboneConfig {
            spans: vec![span(1, a), span(2, a), span(3, b), span(4, b)],
            amplifiers: vec![
                amp(1, a, 22.0, 1),
                amp(2, a, 22.0, 2),
                amp(3, a, 0.0, 2),
                amp(4, b, 22.0, 3),
                amp(5, b, 22.0, 4),
                amp(6, b, 0.0, 4),
            ],
            channels: (0..30)
                .map(|index| ChannelConfig {
                    index,
                    launch_power_dbm: 0.0,
                    dummy_loading: true,
                })
                .collect(),
            transponders: (1..=6u8)
                .map(|i| TransponderConfig {
                    id: format!("t{i}"),
                    domain: if i <= 3 { a } else { b },
                    channel: Some((i - 1) * 5),
                    rate_gbps: Some(if i % 2 == 1 { 400 } else { 200 }),
                })
                .collect(),
        }
    }
}

impl BackboneConfig {
    pub fn from_toml(text: &str) -> Result<Self, OpticalError> {
        toml::from_str(text).map_err(|e| OpticalError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("backbone config serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Live,
    Dummy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavelengthChannel {
    pub index: u8,
    /// Slots from the grid start, at [`GRID_SPACING_GHZ`] spacing.
    pub center_offset: u32,
    pub kind: ChannelKind,
    pub baud_gbd: Option<f64>,
    pub bitrate_gbps: Option<u32>,
    pub launch_power_dbm: f64,
    pub dummy_loading: bool,
    /// Whether the slot currently carries power into the line.
    pub lit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub id: ElementId,
    pub domain: DomainId,
    pub length_km: f64,
    pub loss_coeff_db_per_km: f64,
    pub extra_loss_db: f64,
}

impl Span {
    pub fn loss_db(&self) -> f64 {
        self.length_km * self.loss_coeff_db_per_km + self.extra_loss_db
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edfa {
    pub id: ElementId,
    pub domain: DomainId,
    pub gain_db: f64,
    pub nf_db: f64,
    /// 1-based ordinal along the propagation direction.
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transponder {
    pub id: ElementId,
    pub domain: DomainId,
    pub channel: Option<u8>,
    pub rate_gbps: Option<u32>,
    pub enabled: bool,
}

/// One hop of the line in propagation order; indices point into
/// [`BackboneModel::spans`] / [`BackboneModel::amplifiers`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum LineElement {
    Span(usize),
    Amp(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    Input,
    Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorReading {
    pub element_id: ElementId,
    pub port: Port,
    pub total_power_dbm: f64,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneModel {
    pub spans: Vec<Span>,
    pub amplifiers: Vec<Edfa>,
    pub line: Vec<LineElement>,
    pub channels: Vec<WavelengthChannel>,
    pub transponders: Vec<Transponder>,
    pub tick: u64,
}

/// Validates `config` and lays the line out in propagation order.
pub fn build_backbone(config: &BackboneConfig) -> Result<BackboneModel, OpticalError> {
    let mut span_ids = BTreeMap::new();
    let mut spans = Vec::with_capacity(config.spans.len());
    for (i, s) in config.spans.iter().enumerate() {
        let field = |f: &str| format!("spans[{i}].{f}");
        if s.id.trim().is_empty() {
            return Err(OpticalError::config(field("id"), "must not be empty"));
        }
        if span_ids.insert(s.id.clone(), i).is_some() {
            return Err(OpticalError::config(field("id"), "duplicate span id"));
        }
        if !s.domain.is_backbone() {
            return Err(OpticalError::config(
                field("domain"),
                "spans belong to a backbone domain",
            ));
        }
        if !(s.length_km.is_finite() && s.length_km > 0.0) {
            return Err(OpticalError::config(field("length_km"), "must be positive"));
        }
        if !(s.loss_db_per_km.is_finite() && s.loss_db_per_km >= 0.0) {
            return Err(OpticalError::config(
                field("loss_db_per_km"),
                "must be non-negative",
            ));
        }
        if !(s.extra_loss_db.is_finite() && s.extra_loss_db >= 0.0) {
            return Err(OpticalError::config(
                field("extra_loss_db"),
                "must be non-negative",
            ));
        }
        spans.push(Span {
            id: ElementId::new(&s.id),
            domain: s.domain,
            length_km: s.length_km,
            loss_coeff_db_per_km: s.loss_db_per_km,
            extra_loss_db: s.extra_loss_db,
        });
    }

    // Amplifiers grouped by the span they follow, keeping config order.
    let mut head = Vec::new();
    let mut after: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut amp_ids = BTreeSet::new();
    for (i, a) in config.amplifiers.iter().enumerate() {
        let field = |f: &str| format!("amplifiers[{i}].{f}");
        if a.id.trim().is_empty() {
            return Err(OpticalError::config(field("id"), "must not be empty"));
        }
        if !amp_ids.insert(a.id.clone()) || span_ids.contains_key(&a.id) {
            return Err(OpticalError::config(field("id"), "duplicate element id"));
        }
        if !a.domain.is_backbone() {
            return Err(OpticalError::config(
                field("domain"),
                "amplifiers belong to a backbone domain",
            ));
        }
        if let Some(g) = a.gain_db {
            if !(g.is_finite() && (GAIN_RANGE_DB.0..=GAIN_RANGE_DB.1).contains(&g)) {
                return Err(OpticalError::config(
                    field("gain_db"),
                    "must lie in [0, 35] dB",
                ));
            }
        }
        if !(a.nf_db.is_finite() && (NF_RANGE_DB.0..=NF_RANGE_DB.1).contains(&a.nf_db)) {
            return Err(OpticalError::config(
                field("nf_db"),
                "must lie in [3, 10] dB",
            ));
        }
        match &a.after_span {
            None => head.push(i),
            Some(sid) => match span_ids.get(sid) {
                Some(&si) => after.entry(si).or_default().push(i),
                None => {
                    return Err(OpticalError::config(
                        field("after_span"),
                        format!("unknown span `{sid}`"),
                    ))
                }
            },
        }
    }

    let mut line = Vec::new();
    let mut amplifiers = Vec::with_capacity(config.amplifiers.len());
    let mut place = |cfg_index: usize,
                     preceding: Option<&Span>,
                     first_after: bool,
                     line: &mut Vec<LineElement>| {
        let a = &config.amplifiers[cfg_index];
        let gain_db = a.gain_db.unwrap_or(match preceding {
            Some(s) if first_after => s.loss_db().min(GAIN_RANGE_DB.1),
            _ => 0.0,
        });
        line.push(LineElement::Amp(amplifiers.len()));
        amplifiers.push(Edfa {
            id: ElementId::new(&a.id),
            domain: a.domain,
            gain_db,
            nf_db: a.nf_db,
            position: amplifiers.len() + 1,
        });
    };
    for &i in &head {
        place(i, None, false, &mut line);
    }
    for (si, span) in spans.iter().enumerate() {
        line.push(LineElement::Span(si));
        for (k, &i) in after
            .get(&si)
            .map(Vec::as_slice)
            .unwrap_or(&[])
            .iter()
            .enumerate()
        {
            place(i, Some(span), k == 0, &mut line);
        }
    }

    let mut channel_cfg = BTreeMap::new();
    for (i, c) in config.channels.iter().enumerate() {
        if !c.launch_power_dbm.is_finite() {
            return Err(OpticalError::config(
                format!("channels[{i}].launch_power_dbm"),
                "must be finite",
            ));
        }
        if channel_cfg.insert(c.index, c).is_some() {
            return Err(OpticalError::config(
                format!("channels[{i}].index"),
                "duplicate channel index",
            ));
        }
    }

    let mut transponders = Vec::with_capacity(config.transponders.len());
    let mut tp_ids = BTreeSet::new();
    for (i, t) in config.transponders.iter().enumerate() {
        let field = |f: &str| format!("transponders[{i}].{f}");
        if !tp_ids.insert(t.id.clone()) {
            return Err(OpticalError::config(
                field("id"),
                "duplicate transponder id",
            ));
        }
        if !t.domain.is_backbone() {
            return Err(OpticalError::config(
                field("domain"),
                "transponders belong to a backbone domain",
            ));
        }
        if let Some(ch) = t.channel {
            if !channel_cfg.contains_key(&ch) {
                return Err(OpticalError::config(
                    field("channel"),
                    format!("no channel {ch} in the grid"),
                ));
            }
            match t.rate_gbps {
                Some(r) if SUPPORTED_RATES_GBPS.contains(&r) => {}
                _ => {
                    return Err(OpticalError::config(
                        field("rate_gbps"),
                        "tuned transponders run at 400 or 200 Gbps",
                    ))
                }
            }
            let clash = transponders
                .iter()
                .any(|o: &Transponder| o.domain == t.domain && o.channel == Some(ch));
            if clash {
                return Err(OpticalError::config(
                    field("channel"),
                    "channel already used by a transponder of this domain",
                ));
            }
        }
        transponders.push(Transponder {
            id: ElementId::new(&t.id),
            domain: t.domain,
            channel: t.channel,
            rate_gbps: t.channel.and(t.rate_gbps),
            enabled: true,
        });
    }

    let channels = channel_cfg
        .values()
        .map(|c| WavelengthChannel {
            index: c.index,
            center_offset: u32::from(c.index),
            kind: ChannelKind::Dummy,
            baud_gbd: None,
            bitrate_gbps: None,
            launch_power_dbm: c.launch_power_dbm,
            dummy_loading: c.dummy_loading,
            lit: c.dummy_loading,
        })
        .collect();

    let mut model = BackboneModel {
        spans,
        amplifiers,
        line,
        channels,
        transponders,
        tick: 0,
    };
    model.refresh_channels();
    Ok(model)
}

impl BackboneModel {
    /// Re-derives each slot's kind from the transponders tuned to it.
    pub fn refresh_channels(&mut self) {
        for ch in &mut self.channels {
            let tuned: Vec<&Transponder> = self
                .transponders
                .iter()
                .filter(|t| t.channel == Some(ch.index))
                .collect();
            if tuned.is_empty() {
                ch.kind = ChannelKind::Dummy;
                ch.baud_gbd = None;
                ch.bitrate_gbps = None;
                ch.lit = ch.dummy_loading;
            } else {
                ch.kind = ChannelKind::Live;
                ch.baud_gbd = Some(LIVE_BAUD_GBD);
                ch.bitrate_gbps = tuned.iter().filter_map(|t| t.rate_gbps).min();
                // Light is launched at the line input; any disabled end kills the path.
                ch.lit = tuned.iter().all(|t| t.enabled);
            }
        }
    }

    pub fn channel(&self, index: u8) -> Option<&WavelengthChannel> {
        self.channels.iter().find(|c| c.index == index)
    }

    pub fn span(&self, id: &str) -> Option<&Span> {
        self.spans.iter().find(|s| s.id.as_str() == id)
    }

    pub fn span_mut(&mut self, id: &str) -> Option<&mut Span> {
        self.spans.iter_mut().find(|s| s.id.as_str() == id)
    }

    pub fn amplifier(&self, id: &str) -> Option<&Edfa> {
        self.amplifiers.iter().find(|a| a.id.as_str() == id)
    }

    pub fn transponder(&self, id: &str) -> Option<&Transponder> {
        self.transponders.iter().find(|t| t.id.as_str() == id)
    }

    pub fn transponder_mut(&mut self, id: &str) -> Option<&mut Transponder> {
        self.transponders.iter_mut().find(|t| t.id.as_str() == id)
    }

    pub fn live_channels(&self) -> impl Iterator<Item = &WavelengthChannel> {
        self.channels.iter().filter(|c| c.kind == ChannelKind::Live)
    }

    /// Channels carrying no transponder signal; these can host new lightpaths.
    pub fn free_channels(&self) -> Vec<u8> {
        self.channels
            .iter()
            .filter(|c| c.kind == ChannelKind::Dummy)
            .map(|c| c.index)
            .collect()
    }

    /// Total launched power, or `None` when every slot is dark.
    pub fn launch_total_dbm(&self) -> Option<f64> {
        db_sum(
            self.channels
                .iter()
                .filter(|c| c.lit)
                .map(|c| c.launch_power_dbm),
        )
    }

    /// Net gain (dB) accumulated from the line input up to, but excluding,
    /// line element `upto`.
    pub fn net_gain_before(&self, upto: usize) -> f64 {
        self.line[..upto]
            .iter()
            .map(|e| match *e {
                LineElement::Span(i) => -self.spans[i].loss_db(),
                LineElement::Amp(i) => self.amplifiers[i].gain_db,
            })
            .sum()
    }

    /// Domain that owns the element with `id`, if it exists.
    pub fn owner_of(&self, id: &str) -> Option<DomainId> {
        self.span(id)
            .map(|s| s.domain)
            .or_else(|| self.amplifier(id).map(|a| a.domain))
            .or_else(|| self.transponder(id).map(|t| t.domain))
    }

    /// Span immediately upstream of line position `pos`, skipping amplifiers.
    pub fn span_upstream_of(&self, pos: usize) -> Option<&Span> {
        self.line[..pos].iter().rev().find_map(|e| match *e {
            LineElement::Span(i) => Some(&self.spans[i]),
            LineElement::Amp(_) => None,
        })
    }

    /// Line position of amplifier `amp_index`.
    pub fn line_position_of_amp(&self, amp_index: usize) -> usize {
        self.line
            .iter()
            .position(|e| *e == LineElement::Amp(amp_index))
            .expect("every amplifier is on the line")
    }
}

/// Monitor readings at the input and output of every amplifier, in
/// propagation order.
pub fn compute_power_profile(model: &BackboneModel) -> Vec<MonitorReading> {
    let launch = model.launch_total_dbm();
    let mut readings = Vec::with_capacity(model.amplifiers.len() * 2);
    let mut running = launch.unwrap_or(POWER_FLOOR_DBM);
    for element in &model.line {
        match *element {
            LineElement::Span(i) => running -= model.spans[i].loss_db(),
            LineElement::Amp(i) => {
                let amp = &model.amplifiers[i];
                let reading = |port, power: f64| MonitorReading {
                    element_id: amp.id.clone(),
                    port,
                    total_power_dbm: if launch.is_some() {
                        power
                    } else {
                        POWER_FLOOR_DBM
                    },
                    timestamp: model.tick,
                };
                readings.push(reading(Port::Input, running));
                running += amp.gain_db;
                readings.push(reading(Port::Output, running));
            }
        }
    }
    readings
}

/// OSNR (dB, 0.1 nm) of a live channel at the end of the line.
pub fn compute_osnr(model: &BackboneModel, channel: u8) -> Result<f64, OpticalError> {
    osnr_over(model, channel, |_| true)
}

/// OSNR accumulated over the amplifiers accepted by `include`; amplifiers at
/// unity gain add no ASE and are skipped.
pub(crate) fn osnr_over(
    model: &BackboneModel,
    channel: u8,
    include: impl Fn(&Edfa) -> bool,
) -> Result<f64, OpticalError> {
    let ch = model
        .channel(channel)
        .ok_or(OpticalError::NoSuchChannel(channel))?;
    if ch.kind != ChannelKind::Live {
        return Err(OpticalError::UnsupportedChannel(channel));
    }
    if !ch.lit {
        return Err(OpticalError::DarkChannel(channel));
    }
    let mut inverse = 0.0;
    for (pos, element) in model.line.iter().enumerate() {
        if let LineElement::Amp(i) = *element {
            let amp = &model.amplifiers[i];
            if amp.gain_db <= 0.0 || !include(amp) {
                continue;
            }
            let p_in = ch.launch_power_dbm + model.net_gain_before(pos);
            let osnr_i = OSNR_CONSTANT_DB + p_in - amp.nf_db;
            inverse += 10f64.powf(-osnr_i / 10.0);
        }
    }
    Ok(if inverse > 0.0 {
        -10.0 * inverse.log10()
    } else {
        f64::INFINITY
    })
}
