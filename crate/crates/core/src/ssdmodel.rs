//! SSD performance model: geometry, internal vs. host-link bandwidth, batch
//! fetching with double buffering, and block-set data placement.
//!
//! Sizes are bytes, bandwidths are decimal GB/s (1 GB = 10^9 bytes), times
//! are seconds unless a field name says otherwise.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GB: f64 = 1e9;
pub const MB: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SsdError {
    #[error("unknown SSD preset '{0}' (expected SSD-L, SSD-M or SSD-H)")]
    UnknownPreset(String),
    #[error("cannot read SSD config: {0}")]
    Io(#[from] io::Error),
    #[error("invalid SSD config: {0}")]
    Invalid(String),
}

/// SSD geometry and bandwidths.
///
/// Config files are TOML. Every field is optional; missing ones come from the
/// preset named by `base` (SSD-H when absent):
///
/// ```toml
/// base = "SSD-M"
/// channels = 32
/// external_bw_gbps = 14.0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsdConfig {
    pub name: String,
    pub channels: u32,
    pub dies_per_channel: u32,
    pub planes_per_die: u32,
    pub page_kib: u32,
    /// Per-channel bus bandwidth, GB/s.
    pub channel_bw_gbps: f64,
    /// Host-link sequential read bandwidth, GB/s.
    pub external_bw_gbps: f64,
    /// Multi-plane page read (array sensing) latency.
    pub nand_read_us: f64,
    pub dram_gib: f64,
    /// NAND block size used for data placement, decimal MB.
    pub block_mb: f64,
}

impl SsdConfig {
    fn base(name: &str, channels: u32, external_bw_gbps: f64) -> SsdConfig {
        SsdConfig {
            name: name.to_string(),
            channels,
            dies_per_channel: 4,
            planes_per_die: 2,
            page_kib: 16,
            channel_bw_gbps: 1.2,
            external_bw_gbps,
            nand_read_us: 45.0,
            dram_gib: 4.0,
            block_mb: 12.0,
        }
    }

    pub fn validate(&self) -> Result<(), SsdError> {
        let positive = [
            ("channels", self.channels as f64),
            ("dies_per_channel", self.dies_per_channel as f64),
            ("planes_per_die", self.planes_per_die as f64),
            ("page_kib", self.page_kib as f64),
            ("channel_bw_gbps", self.channel_bw_gbps),
            ("external_bw_gbps", self.external_bw_gbps),
            ("nand_read_us", self.nand_read_us),
            ("dram_gib", self.dram_gib),
            ("block_mb", self.block_mb),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SsdError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Aggregate flash-to-controller bandwidth, bytes/s.
    pub fn internal_bw(&self) -> f64 {
        self.channel_bw_gbps * GB * self.channels as f64
    }

    /// Host-link bandwidth, bytes/s.
    pub fn external_bw(&self) -> f64 {
        self.external_bw_gbps * GB
    }

    pub fn internal_to_external_ratio(&self) -> f64 {
        self.internal_bw() / self.external_bw()
    }

    pub fn dies_total(&self) -> u32 {
        self.channels * self.dies_per_channel
    }

    pub fn page_bytes(&self) -> u64 {
        self.page_kib as u64 * 1024
    }

    pub fn dram_bytes(&self) -> f64 {
        self.dram_gib * (1u64 << 30) as f64
    }

    pub fn batch_plan(&self) -> BatchPlan {
        let batch_bytes = self.dies_total() as u64 * self.planes_per_die as u64 * self.page_bytes();
        BatchPlan {
            batch_bytes,
            buffer_bytes: 2 * 2 * batch_bytes,
        }
    }

    /// True when dies can sense pages faster than the channel bus drains them.
    pub fn is_bandwidth_bound(&self) -> bool {
        let per_die_op = self.planes_per_die as f64 * self.page_bytes() as f64;
        let sense_rate = self.dies_per_channel as f64 * per_die_op / (self.nand_read_us * 1e-6);
        sense_rate >= self.channel_bw_gbps * GB
    }
}

pub const PRESET_NAMES: [&str; 3] = ["SSD-L", "SSD-M", "SSD-H"];

/// Built-in configurations: SATA (8 channels), PCIe Gen3 and Gen4 (16 channels).
pub fn preset(name: &str) -> Result<SsdConfig, SsdError> {
    match name.to_ascii_uppercase().as_str() {
        "SSD-L" => Ok(SsdConfig::base("SSD-L", 8, 0.5)),
        "SSD-M" => Ok(SsdConfig::base("SSD-M", 16, 3.5)),
        "SSD-H" => Ok(SsdConfig::base("SSD-H", 16, 7.0)),
        _ => Err(SsdError::UnknownPreset(name.to_string())),
    }
}

/// Parses a TOML config (see [`SsdConfig`]).
pub fn parse_config(text: &str) -> Result<SsdConfig, SsdError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| SsdError::Invalid(e.to_string()))?;
    let base_name = match table.remove("base") {
        Some(toml::Value::String(s)) => s,
        Some(other) => return Err(SsdError::Invalid(format!("base must be a string, got {other}"))),
        None => "SSD-H".to_string(),
    };
    let base = preset(&base_name)?;
    let mut merged = toml::Table::try_from(&base).map_err(|e| SsdError::Invalid(e.to_string()))?;
    if !table.contains_key("name") {
        merged.insert("name".into(), toml::Value::String(format!("{base_name}-custom")));
    }
    for (k, v) in table {
        // integers are accepted where floats are expected
        let v = match (&v, merged.get(&k)) {
            (toml::Value::Integer(i), Some(toml::Value::Float(_))) => toml::Value::Float(*i as f64),
            _ => v,
        };
        merged.insert(k, v);
    }
    let cfg: SsdConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| SsdError::Invalid(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A preset name or a path to a TOML config file.
pub fn load_config(spec: &str) -> Result<SsdConfig, SsdError> {
    if let Ok(cfg) = preset(spec) {
        return Ok(cfg);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(SsdError::UnknownPreset(spec.to_string()));
    }
    parse_config(&std::fs::read_to_string(path)?)
}

/// Data fetched per multi-plane read across every die, and the DRAM needed to
/// double-buffer two structures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BatchPlan {
    pub batch_bytes: u64,
    pub buffer_bytes: u64,
}

/// Batch-buffer total quoted for an 8-channel, four 2-plane dies per channel,
/// 16 KiB-page device. [`SsdConfig::batch_plan`] computes half of this for that
/// geometry; both are reported.
pub const QUOTED_BATCH_BUFFER_BYTES: u64 = 8 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TransferPath {
    Internal,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Bound {
    InternalBandwidth,
    FlashLatency,
    ExternalBandwidth,
    Idle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StreamTime {
    pub seconds: f64,
    pub bound: Bound,
}

/// Time to stream `bytes` sequentially over the given path.
///
/// Internally the device is limited either by the channel buses or by one
/// array read per batch, whichever is slower.
pub fn stream_time(bytes: f64, config: &SsdConfig, path: TransferPath) -> StreamTime {
    if bytes <= 0.0 {
        return StreamTime {
            seconds: 0.0,
            bound: Bound::Idle,
        };
    }
    match path {
        TransferPath::External => StreamTime {
            seconds: bytes / config.external_bw(),
            bound: Bound::ExternalBandwidth,
        },
        TransferPath::Internal => {
            let bw = bytes / config.internal_bw();
            let batches = (bytes / config.batch_plan().batch_bytes as f64).ceil();
            let flash = batches * config.nand_read_us * 1e-6;
            if flash > bw {
                StreamTime {
                    seconds: flash,
                    bound: Bound::FlashLatency,
                }
            } else {
                StreamTime {
                    seconds: bw,
                    bound: Bound::InternalBandwidth,
                }
            }
        }
    }
}

/// Event-level internal read: each die alternates array sensing and a bus
/// transfer of its multi-plane data; dies on a channel share that channel's bus.
/// Multi-plane operations are striped channel-first across all dies.
pub fn simulate_internal_stream(bytes: f64, config: &SsdConfig) -> f64 {
    if bytes <= 0.0 {
        return 0.0;
    }
    let op_bytes = config.planes_per_die as f64 * config.page_bytes() as f64;
    let ops = (bytes / op_bytes).ceil() as u64;
    let channels = config.channels as u64;
    let dies = config.dies_per_channel as u64;
    let t_read = config.nand_read_us * 1e-6;
    let xfer = op_bytes / (config.channel_bw_gbps * GB);
    let mut finish: f64 = 0.0;
    for c in 0..channels {
        // ops striped round robin: op i lands on channel i % C, die (i / C) % D
        let ch_ops = ops / channels + u64::from(c < ops % channels);
        if ch_ops == 0 {
            continue;
        }
        let mut remaining: Vec<u64> = (0..dies)
            .map(|d| ch_ops / dies + u64::from(d < ch_ops % dies))
            .collect();
        // (sense-complete time in ns, die)
        let mut ready: BinaryHeap<Reverse<(u64, u64)>> = BinaryHeap::new();
        let ns = |t: f64| (t * 1e9).round() as u64;
        for (d, r) in remaining.iter().enumerate() {
            if *r > 0 {
                ready.push(Reverse((ns(t_read), d as u64)));
            }
        }
        let mut bus_free = 0u64;
        while let Some(Reverse((t, d))) = ready.pop() {
            let start = t.max(bus_free);
            bus_free = start + ns(xfer);
            remaining[d as usize] -= 1;
            if remaining[d as usize] > 0 {
                ready.push(Reverse((bus_free + ns(t_read), d)));
            }
        }
        finish = finish.max(bus_free as f64 * 1e-9);
    }
    finish
}

/// Block-set placement of one structure: every die holds whole block sets
/// (same block offset on all planes), assigned round robin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockSetPlacement {
    pub block_mb: f64,
    pub dies_total: u32,
    pub set_bytes: f64,
    pub mapping_entries: u64,
    pub metadata_bytes: u64,
    pub min_sets_per_die: u64,
    pub max_sets_per_die: u64,
}

impl BlockSetPlacement {
    pub fn die_of_set(&self, set: u64) -> u32 {
        (set % self.dies_total as u64) as u32
    }
}

/// Bytes of mapping metadata needed to place `structure_bytes` in block sets.
pub fn placement_metadata(structure_bytes: f64, config: &SsdConfig, block_mb: f64) -> BlockSetPlacement {
    let set_bytes = block_mb * MB * config.planes_per_die as f64;
    let mapping_entries = ((structure_bytes / set_bytes).ceil() as u64).max(1);
    let dies = config.dies_total() as u64;
    BlockSetPlacement {
        block_mb,
        dies_total: config.dies_total(),
        set_bytes,
        mapping_entries,
        metadata_bytes: mapping_entries * 4,
        min_sets_per_die: mapping_entries / dies,
        max_sets_per_die: mapping_entries.div_ceil(dies),
    }
}

/// Conventional page-level mapping: 4 bytes per 4 KiB page.
pub fn page_mapping_bytes(capacity_bytes: f64) -> u64 {
    (capacity_bytes / 4096.0).ceil() as u64 * 4
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatchEvent {
    pub index: usize,
    pub bytes: u64,
    pub fetch_start: f64,
    pub fetch_end: f64,
    pub compute_start: f64,
    pub compute_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timeline {
    pub batches: Vec<BatchEvent>,
    pub total: f64,
    pub fetch_busy: f64,
    pub compute_busy: f64,
}

impl Timeline {
    pub fn flash_utilization(&self) -> f64 {
        if self.total > 0.0 {
            self.fetch_busy / self.total
        } else {
            0.0
        }
    }

    pub fn compute_utilization(&self) -> f64 {
        if self.total > 0.0 {
            self.compute_busy / self.total
        } else {
            0.0
        }
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "batch,bytes,fetch_start_s,fetch_end_s,compute_start_s,compute_end_s")?;
        for b in &self.batches {
            writeln!(
                out,
                "{},{},{:.9},{:.9},{:.9},{:.9}",
                b.index, b.bytes, b.fetch_start, b.fetch_end, b.compute_start, b.compute_end
            )?;
        }
        Ok(())
    }
}

/// Pipelined fetch/compute over batches with two buffers: batch `i+1` is
/// fetched while batch `i` is processed, and a fetch waits for a free buffer.
/// A short final batch gets proportionally less compute time.
pub fn double_buffer_schedule(total_bytes: u64, compute_time_per_batch: f64, config: &SsdConfig) -> Timeline {
    let batch = config.batch_plan().batch_bytes;
    let mut batches: Vec<BatchEvent> = Vec::new();
    let mut remaining = total_bytes;
    let mut fetch_busy = 0.0;
    let mut compute_busy = 0.0;
    while remaining > 0 {
        let bytes = remaining.min(batch);
        remaining -= bytes;
        let i = batches.len();
        let fetch_dur = stream_time(bytes as f64, config, TransferPath::Internal).seconds;
        let compute_dur = compute_time_per_batch * bytes as f64 / batch as f64;
        let prev_fetch_end = batches.last().map_or(0.0, |b| b.fetch_end);
        // buffer of batch i-2 must be released before fetching batch i
        let buffer_free = if i >= 2 { batches[i - 2].compute_end } else { 0.0 };
        let fetch_start = prev_fetch_end.max(buffer_free);
        let fetch_end = fetch_start + fetch_dur;
        let prev_compute_end = batches.last().map_or(0.0, |b| b.compute_end);
        let compute_start = fetch_end.max(prev_compute_end);
        batches.push(BatchEvent {
            index: i,
            bytes,
            fetch_start,
            fetch_end,
            compute_start,
            compute_end: compute_start + compute_dur,
        });
        fetch_busy += fetch_dur;
        compute_busy += compute_dur;
    }
    let total = batches.last().map_or(0.0, |b| b.compute_end);
    Timeline {
        batches,
        total,
        fetch_busy,
        compute_busy,
    }
}
