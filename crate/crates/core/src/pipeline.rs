//! End-to-end timing, data movement and energy of filtering inside the SSD
//! while the host maps whatever reads are forwarded to it.
//!
//! The host mapper is a throughput. Filtering overlaps with forwarding and
//! mapping, so an in-storage run costs
//! `t_io_ref + max(t_filter_internal, t_io_unfiltered, t_rm_unfiltered)`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emfilter::{em_filter_partitioned, EmDecision, EmError, EmStats, EmVerdict};
use crate::index::{IndexParams, KmerIndex, SkIndex, SrTable};
use crate::nmfilter::{nm_filter_all, NmDecision, NmError, NmParams, NmStats};
use crate::seqio::Read;
use crate::ssdmodel::{
    placement_metadata, stream_time, BatchPlan, BlockSetPlacement, Bound, SsdConfig, TransferPath, GB,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Description of the system speedups are measured against.
pub const BASELINE: &str =
    "outside-storage mapping: the reference and the entire read set cross the host link and the host maps every read";

/// Fixed EM split so decisions and comparator counts do not depend on the thread count.
pub const EM_PARTITIONS: usize = 64;

/// SKIndex size for a human reference with 150 bp reads, GB.
pub const HUMAN_SKINDEX_GB: f64 = 32.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("index does not match the filter input: {0}")]
    Mismatch(String),
    #[error("k-mer index needs {needed} bytes of SSD DRAM but only {available} are modeled")]
    Capacity { needed: u64, available: u64 },
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Nm(#[from] NmError),
    #[error("invalid model input: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    Em,
    Nm,
}

impl FromStr for FilterMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(FilterMode::Em),
            "nm" => Ok(FilterMode::Nm),
            _ => Err(format!("unknown filter mode '{s}' (expected em or nm)")),
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterMode::Em => "em",
            FilterMode::Nm => "nm",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HostKind {
    Software,
    HwShort,
    HwLong,
}

impl FromStr for HostKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "software" => Ok(HostKind::Software),
            "hw-short" => Ok(HostKind::HwShort),
            "hw-long" => Ok(HostKind::HwLong),
            _ => Err(format!("unknown host model '{s}' (expected software, hw-short or hw-long)")),
        }
    }
}

/// Read-mapping throughput of the host on unfiltered data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostMapperModel {
    pub kind: HostKind,
    pub throughput_gbps: f64,
}

impl HostMapperModel {
    /// Default throughputs: the software mapper is slower than every preset's
    /// host link, the hardware mappers are faster than SSD-H's link.
    pub fn preset(kind: HostKind) -> Self {
        let throughput_gbps = match kind {
            HostKind::Software => 0.5,
            HostKind::HwShort => 12.0,
            HostKind::HwLong => 8.0,
        };
        HostMapperModel { kind, throughput_gbps }
    }

    pub fn new(kind: HostKind, throughput_gbps: f64) -> Result<Self, PipelineError> {
        if !(throughput_gbps > 0.0 && throughput_gbps.is_finite()) {
            return Err(PipelineError::Invalid(format!("host throughput must be positive, got {throughput_gbps}")));
        }
        Ok(HostMapperModel { kind, throughput_gbps })
    }

    pub fn mapping_time(&self, bytes: f64) -> f64 {
        bytes / (self.throughput_gbps * GB)
    }
}

/// Inputs to the data-movement saving.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DmInputs {
    pub size_ref_gb: f64,
    pub size_readset_gb: f64,
    pub ratio_filter: f64,
}

impl DmInputs {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.size_ref_gb >= 0.0 && self.size_readset_gb >= 0.0) {
            return Err(PipelineError::Invalid("sizes must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.ratio_filter) {
            return Err(PipelineError::Invalid(format!("filter ratio {} outside [0, 1]", self.ratio_filter)));
        }
        Ok(())
    }
}

/// Reduction in bytes crossing the host link.
pub fn dm_saving(d: &DmInputs) -> f64 {
    let before = d.size_ref_gb + d.size_readset_gb;
    let after = d.size_ref_gb + d.size_readset_gb * (1.0 - d.ratio_filter);
    if after == 0.0 {
        return if before == 0.0 { 1.0 } else { f64::INFINITY };
    }
    before / after
}

/// Byte counts that drive the timing model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Workload {
    pub mode: FilterMode,
    pub ref_bytes: f64,
    /// Encoded size of the whole read set.
    pub read_bytes: f64,
    /// Encoded size of the reads the filter forwards.
    pub forwarded_bytes: f64,
    /// Bytes the filter streams out of flash.
    pub filter_stream_bytes: f64,
    /// Bytes the filter keeps resident in SSD DRAM.
    pub resident_bytes: f64,
}

impl Workload {
    /// Paper-scale inputs in GB. `filter_stream_gb` defaults to the read set
    /// plus a human SKIndex for EM and to the read set for NM.
    pub fn analytic(
        mode: FilterMode,
        ref_gb: f64,
        readset_gb: f64,
        ratio_filter: f64,
        filter_stream_gb: Option<f64>,
    ) -> Result<Workload, PipelineError> {
        DmInputs {
            size_ref_gb: ref_gb,
            size_readset_gb: readset_gb,
            ratio_filter,
        }
        .validate()?;
        let stream = filter_stream_gb.unwrap_or(match mode {
            FilterMode::Em => readset_gb + HUMAN_SKINDEX_GB,
            FilterMode::Nm => readset_gb,
        });
        Ok(Workload {
            mode,
            ref_bytes: ref_gb * GB,
            read_bytes: readset_gb * GB,
            forwarded_bytes: readset_gb * (1.0 - ratio_filter) * GB,
            filter_stream_bytes: stream * GB,
            resident_bytes: 0.0,
        })
    }

    pub fn ratio_filter(&self) -> f64 {
        if self.read_bytes > 0.0 {
            1.0 - self.forwarded_bytes / self.read_bytes
        } else {
            0.0
        }
    }

    pub fn dm_inputs(&self) -> DmInputs {
        DmInputs {
            size_ref_gb: self.ref_bytes / GB,
            size_readset_gb: self.read_bytes / GB,
            ratio_filter: self.ratio_filter(),
        }
    }
}

fn external(bytes: f64, ssd: &SsdConfig) -> f64 {
    stream_time(bytes, ssd, TransferPath::External).seconds
}

/// Ideal in-storage filter: filtering itself costs nothing.
pub fn t_ideal_isf(w: &Workload, ssd: &SsdConfig, host: &HostMapperModel) -> f64 {
    external(w.ref_bytes, ssd) + external(w.forwarded_bytes, ssd).max(host.mapping_time(w.forwarded_bytes))
}

/// Ideal filter running outside storage: every read still crosses the link.
pub fn t_ideal_osf(w: &Workload, ssd: &SsdConfig, host: &HostMapperModel) -> f64 {
    external(w.ref_bytes, ssd) + external(w.read_bytes, ssd).max(host.mapping_time(w.forwarded_bytes))
}

pub fn t_baseline(w: &Workload, ssd: &SsdConfig, host: &HostMapperModel) -> f64 {
    external(w.ref_bytes, ssd) + external(w.read_bytes, ssd).max(host.mapping_time(w.read_bytes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterCost {
    /// Filter time is the internal stream time of its structures.
    Streaming,
    /// Filter time is zero.
    Ideal,
}

/// Active seconds per component within a run of `total` seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Activity {
    pub total: f64,
    pub cpu: f64,
    pub ssd: f64,
    pub link: f64,
    pub accelerator: f64,
}

impl Activity {
    pub fn scaled(&self, f: f64) -> Activity {
        Activity {
            total: self.total * f,
            cpu: self.cpu * f,
            ssd: self.ssd * f,
            link: self.link * f,
            accelerator: self.accelerator * f,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentPower {
    pub active_w: f64,
    pub idle_w: f64,
}

impl ComponentPower {
    fn energy(&self, active: f64, total: f64) -> f64 {
        self.active_w * active + self.idle_w * (total - active).max(0.0)
    }
}

/// Idle and active power of every component that draws energy during a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub cpu: ComponentPower,
    pub host_dram: ComponentPower,
    pub ssd: ComponentPower,
    pub ssd_dram: ComponentPower,
    pub link: ComponentPower,
    pub accelerator: ComponentPower,
}

impl PowerTable {
    /// Server CPU and DDR4 host memory, a SATA-class SSD with LPDDR4, and the
    /// filter logic sized for the SSD's channel count.
    pub fn for_ssd(ssd: &SsdConfig) -> Self {
        PowerTable {
            cpu: ComponentPower { active_w: 225.0, idle_w: 70.0 },
            host_dram: ComponentPower { active_w: 20.0, idle_w: 6.0 },
            ssd: ComponentPower { active_w: 4.0, idle_w: 0.4 },
            ssd_dram: ComponentPower { active_w: 0.45, idle_w: 0.1 },
            link: ComponentPower { active_w: 1.5, idle_w: 0.2 },
            accelerator: ComponentPower {
                active_w: accelerator_power_mw(ssd.channels) * 1e-3,
                idle_w: 0.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitScaling {
    PerChannel(u32),
    /// One instance serves up to this many channels.
    Shared(u32),
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogicUnit {
    pub name: &'static str,
    pub scaling: UnitScaling,
    pub area_mm2: f64,
    pub power_mw: f64,
}

impl LogicUnit {
    pub fn instances(&self, channels: u32) -> u32 {
        match self.scaling {
            UnitScaling::PerChannel(n) => n * channels,
            UnitScaling::Shared(c) => channels.div_ceil(c),
            UnitScaling::Fixed => 1,
        }
    }
}

/// Filter logic, per instance, at 65 nm.
pub const LOGIC_UNITS: [LogicUnit; 7] = [
    LogicUnit { name: "comparator", scaling: UnitScaling::Shared(12), area_mm2: 0.0007, power_mw: 0.14 },
    LogicUnit { name: "kmer-window", scaling: UnitScaling::PerChannel(2), area_mm2: 0.0018, power_mw: 0.27 },
    LogicUnit { name: "hash-accelerator", scaling: UnitScaling::Shared(4), area_mm2: 0.008, power_mw: 1.8 },
    LogicUnit { name: "location-buffer", scaling: UnitScaling::PerChannel(1), area_mm2: 0.00725, power_mw: 0.37375 },
    LogicUnit { name: "chaining-buffer", scaling: UnitScaling::PerChannel(1), area_mm2: 0.008, power_mw: 0.95 },
    LogicUnit { name: "chaining-pe", scaling: UnitScaling::PerChannel(1), area_mm2: 0.004, power_mw: 0.98 },
    LogicUnit { name: "control", scaling: UnitScaling::Fixed, area_mm2: 0.0002, power_mw: 0.11 },
];

pub fn accelerator_power_mw(channels: u32) -> f64 {
    LOGIC_UNITS.iter().map(|u| u.instances(channels) as f64 * u.power_mw).sum()
}

pub fn accelerator_area_mm2(channels: u32) -> f64 {
    LOGIC_UNITS.iter().map(|u| u.instances(channels) as f64 * u.area_mm2).sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub cpu: f64,
    pub host_dram: f64,
    pub ssd: f64,
    pub ssd_dram: f64,
    pub link: f64,
    pub accelerator: f64,
    pub total: f64,
}

/// Joules spent by each component: active power while busy, idle power for
/// the rest of the run.
pub fn energy_of(a: &Activity, p: &PowerTable) -> EnergyBreakdown {
    let mut e = EnergyBreakdown {
        cpu: p.cpu.energy(a.cpu, a.total),
        host_dram: p.host_dram.energy(a.cpu, a.total),
        ssd: p.ssd.energy(a.ssd, a.total),
        ssd_dram: p.ssd_dram.energy(a.ssd, a.total),
        link: p.link.energy(a.link, a.total),
        accelerator: p.accelerator.energy(a.accelerator, a.total),
        total: 0.0,
    };
    e.total = e.cpu + e.host_dram + e.ssd + e.ssd_dram + e.link + e.accelerator;
    e
}

/// Energy of the in-storage run described by `report`.
pub fn energy_estimate(report: &PipelineReport, power: &PowerTable) -> f64 {
    energy_of(&report.activity, power).total
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub reads_total: u64,
    pub reads_filtered: u64,
    pub reads_forwarded: u64,
}

/// Parameters in effect, recorded for provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportParams {
    pub ssd: SsdConfig,
    pub host: HostMapperModel,
    pub power: PowerTable,
    pub read_len: Option<usize>,
    pub canonical: Option<bool>,
    pub index: Option<IndexParams>,
    pub nm: Option<NmParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub generator: String,
    pub baseline: String,
    pub mode: FilterMode,
    pub filter_cost: FilterCost,
    pub analytic: bool,
    pub params: ReportParams,
    pub counts: Counts,
    pub em_stats: Option<EmStats>,
    pub nm_stats: Option<NmStats>,
    pub bytes_ref: f64,
    pub bytes_reads: f64,
    pub bytes_forwarded: f64,
    pub bytes_internal: f64,
    pub bytes_external: f64,
    pub ratio_filter: f64,
    pub t_io_ref: f64,
    pub t_io_unfiltered: f64,
    pub t_io_all_reads: f64,
    pub t_filter_internal: f64,
    pub filter_bound: Bound,
    pub t_rm_unfiltered: f64,
    pub t_rm_all: f64,
    pub t_total: f64,
    pub t_baseline: f64,
    pub t_ideal_isf: f64,
    pub t_ideal_osf: f64,
    pub speedup: f64,
    pub dm_saving: f64,
    pub batch_plan: BatchPlan,
    pub placement: BlockSetPlacement,
    pub activity: Activity,
    pub baseline_activity: Activity,
    pub energy: EnergyBreakdown,
    pub baseline_energy: EnergyBreakdown,
    pub energy_j: f64,
    pub baseline_energy_j: f64,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// Times a workload. Counts and parameters start empty.
pub fn model(w: &Workload, ssd: &SsdConfig, host: &HostMapperModel, cost: FilterCost) -> PipelineReport {
    let filter = match cost {
        FilterCost::Streaming => stream_time(w.filter_stream_bytes, ssd, TransferPath::Internal),
        FilterCost::Ideal => stream_time(0.0, ssd, TransferPath::Internal),
    };
    let t_io_ref = external(w.ref_bytes, ssd);
    let t_io_unfiltered = external(w.forwarded_bytes, ssd);
    let t_io_all_reads = external(w.read_bytes, ssd);
    let t_rm_unfiltered = host.mapping_time(w.forwarded_bytes);
    let t_rm_all = host.mapping_time(w.read_bytes);
    let t_total = t_io_ref + filter.seconds.max(t_io_unfiltered).max(t_rm_unfiltered);
    let t_base = t_baseline(w, ssd, host);
    let activity = Activity {
        total: t_total,
        cpu: t_rm_unfiltered,
        ssd: t_io_ref + filter.seconds.max(t_io_unfiltered),
        link: t_io_ref + t_io_unfiltered,
        accelerator: filter.seconds,
    };
    let baseline_activity = Activity {
        total: t_base,
        cpu: t_rm_all,
        ssd: t_io_ref + t_io_all_reads,
        link: t_io_ref + t_io_all_reads,
        accelerator: 0.0,
    };
    let power = PowerTable::for_ssd(ssd);
    let energy = energy_of(&activity, &power);
    let baseline_energy = energy_of(&baseline_activity, &power);
    PipelineReport {
        schema_version: SCHEMA_VERSION,
        generator: concat!("genstore ", env!("CARGO_PKG_VERSION")).to_string(),
        baseline: BASELINE.to_string(),
        mode: w.mode,
        filter_cost: cost,
        analytic: true,
        params: ReportParams {
            ssd: ssd.clone(),
            host: *host,
            power,
            read_len: None,
            canonical: None,
            index: None,
            nm: None,
        },
        counts: Counts::default(),
        em_stats: None,
        nm_stats: None,
        bytes_ref: w.ref_bytes,
        bytes_reads: w.read_bytes,
        bytes_forwarded: w.forwarded_bytes,
        bytes_internal: w.filter_stream_bytes + w.ref_bytes,
        bytes_external: w.ref_bytes + w.forwarded_bytes,
        ratio_filter: w.ratio_filter(),
        t_io_ref,
        t_io_unfiltered,
        t_io_all_reads,
        t_filter_internal: filter.seconds,
        filter_bound: filter.bound,
        t_rm_unfiltered,
        t_rm_all,
        t_total,
        t_baseline: t_base,
        t_ideal_isf: t_ideal_isf(w, ssd, host),
        t_ideal_osf: t_ideal_osf(w, ssd, host),
        speedup: if t_total > 0.0 { t_base / t_total } else { 1.0 },
        dm_saving: dm_saving(&w.dm_inputs()),
        batch_plan: ssd.batch_plan(),
        placement: placement_metadata(w.filter_stream_bytes, ssd, ssd.block_mb),
        activity,
        baseline_activity,
        energy,
        baseline_energy,
        energy_j: energy.total,
        baseline_energy_j: baseline_energy.total,
    }
}

/// Indexes for the chosen filter.
#[derive(Clone, Copy, Debug)]
pub enum FilterInputs<'a> {
    Em { srtable: &'a SrTable, skindex: &'a SkIndex },
    Nm { index: &'a KmerIndex, params: &'a NmParams },
}

impl FilterInputs<'_> {
    pub fn mode(&self) -> FilterMode {
        match self {
            FilterInputs::Em { .. } => FilterMode::Em,
            FilterInputs::Nm { .. } => FilterMode::Nm,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: PipelineReport,
    /// Positions in the input read set of every forwarded read, ascending.
    pub forwarded: Vec<usize>,
    pub em_decisions: Vec<EmDecision>,
    pub nm_decisions: Vec<NmDecision>,
}

/// Bytes of one read in the SSD's read-set layout: id plus packed bases.
pub fn encoded_read_bytes(read: &Read) -> u64 {
    8 + read.seq.as_bytes().len() as u64
}

/// Runs the filter on real data and times it under the SSD model.
pub fn run_pipeline(
    reads: &[Read],
    reference_bases: u64,
    inputs: FilterInputs<'_>,
    ssd: &SsdConfig,
    host: &HostMapperModel,
    cost: FilterCost,
) -> Result<PipelineRun, PipelineError> {
    let read_bytes: u64 = reads.iter().map(encoded_read_bytes).sum();
    let ref_bytes = reference_bases.div_ceil(4);
    let mut em_decisions = Vec::new();
    let mut nm_decisions = Vec::new();
    let mut em_stats = None;
    let mut nm_stats = None;
    let (forwarded, filter_stream_bytes, resident_bytes) = match inputs {
        FilterInputs::Em { srtable, skindex } => {
            let ids: HashSet<u64> = reads.iter().map(|r| r.id).collect();
            if let Some(e) = srtable.entries.iter().find(|e| !ids.contains(&e.read_id)) {
                return Err(PipelineError::Mismatch(format!("SRTable read {} is not in the read set", e.read_id)));
            }
            let (d, s) = em_filter_partitioned(srtable, skindex, EM_PARTITIONS, false)?;
            let exact: HashSet<u64> = d
                .iter()
                .filter(|d| d.verdict == EmVerdict::ExactMatch)
                .map(|d| d.read_id)
                .collect();
            em_decisions = d;
            em_stats = Some(s);
            let fwd: Vec<usize> = (0..reads.len()).filter(|&i| !exact.contains(&reads[i].id)).collect();
            (fwd, srtable.stored_bytes() + skindex.stored_bytes(), 0)
        }
        FilterInputs::Nm { index, params } => {
            params.validate()?;
            if index.params.k != params.k || index.params.w != params.w {
                return Err(PipelineError::Mismatch(format!(
                    "k-mer index built with k={} w={}, filter expects k={} w={}",
                    index.params.k, index.params.w, params.k, params.w
                )));
            }
            let needed = index.resident_bytes();
            let available = ssd.dram_bytes() as u64;
            if needed > available {
                return Err(PipelineError::Capacity { needed, available });
            }
            let d = nm_filter_all(reads, index, params);
            nm_stats = Some(NmStats::from_decisions(&d));
            let fwd: Vec<usize> = (0..reads.len()).filter(|&i| d[i].verdict.is_forwarded()).collect();
            nm_decisions = d;
            (fwd, read_bytes, needed)
        }
    };
    let forwarded_bytes: u64 = forwarded.iter().map(|&i| encoded_read_bytes(&reads[i])).sum();
    let w = Workload {
        mode: inputs.mode(),
        ref_bytes: ref_bytes as f64,
        read_bytes: read_bytes as f64,
        forwarded_bytes: forwarded_bytes as f64,
        filter_stream_bytes: filter_stream_bytes as f64,
        resident_bytes: resident_bytes as f64,
    };
    let mut report = model(&w, ssd, host, cost);
    report.analytic = false;
    report.counts = Counts {
        reads_total: reads.len() as u64,
        reads_filtered: (reads.len() - forwarded.len()) as u64,
        reads_forwarded: forwarded.len() as u64,
    };
    report.em_stats = em_stats;
    report.nm_stats = nm_stats;
    match inputs {
        FilterInputs::Em { srtable, skindex } => {
            report.params.read_len = Some(skindex.k.max(srtable.read_len));
            report.params.canonical = Some(skindex.canonical);
        }
        FilterInputs::Nm { index, params } => {
            report.params.index = Some(index.params);
            report.params.nm = Some(*params);
        }
    }
    Ok(PipelineRun {
        report,
        forwarded,
        em_decisions,
        nm_decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_kmer_index, build_skindex, build_srtable};
    use crate::ssdmodel::preset;
    use crate::synth::{gen_longreads, gen_reads, gen_reference, LongReadSpec};
    use proptest::prelude::*;

    fn sw() -> HostMapperModel {
        HostMapperModel::preset(HostKind::Software)
    }

    #[test]
    fn dm_saving_examples() {
        let d = |r, s, f| dm_saving(&DmInputs { size_ref_gb: r, size_readset_gb: s, ratio_filter: f });
        assert_eq!(d(7.0, 22.0, 0.0), 1.0);
        assert!((d(7.0, 22.0, 0.8) - 29.0 / 11.4).abs() < 1e-12);
        assert!((d(7.0, 22.0, 0.8) - 2.544).abs() < 0.001);
        assert!((d(0.0146, 12.4, 0.9965) - 214.0).abs() < 2.0);
        assert_eq!(d(0.0, 0.0, 0.5), 1.0);
    }

    #[test]
    fn accelerator_table_totals() {
        assert!((accelerator_power_mw(8) - 26.6).abs() < 1e-9);
        assert!((accelerator_area_mm2(8) - 0.20).abs() < 0.001);
        let hash = LOGIC_UNITS[2];
        assert_eq!(hash.instances(8), 2);
        assert_eq!(hash.instances(16), 4);
        assert_eq!(LOGIC_UNITS[0].instances(16), 2);
        assert_eq!(LOGIC_UNITS[6].instances(16), 1);
        assert!(accelerator_power_mw(16) > accelerator_power_mw(8));
    }

    #[test]
    fn isf_degenerate_cases() {
        let ssd = preset("SSD-H").unwrap();
        let fast = HostMapperModel::new(HostKind::HwShort, 1e12).unwrap();
        let w = Workload::analytic(FilterMode::Em, 7.0, 22.0, 0.8, None).unwrap();
        let t = t_ideal_isf(&w, &ssd, &fast);
        assert!((t - (1.0 + 22.0 * 0.2 / 7.0)).abs() < 1e-6);
        let w = Workload::analytic(FilterMode::Em, 7.0, 22.0, 1.0, None).unwrap();
        assert_eq!(t_ideal_isf(&w, &ssd, &sw()), 1.0);
        let w = Workload::analytic(FilterMode::Em, 7.0, 22.0, 0.0, None).unwrap();
        assert_eq!(t_ideal_isf(&w, &ssd, &sw()), t_ideal_osf(&w, &ssd, &sw()));
    }

    #[test]
    fn full_filtering_leaves_reference_and_filter() {
        let ssd = preset("SSD-M").unwrap();
        let w = Workload::analytic(FilterMode::Nm, 0.5, 12.4, 1.0, None).unwrap();
        let r = model(&w, &ssd, &sw(), FilterCost::Streaming);
        assert_eq!(r.t_total, r.t_io_ref + r.t_filter_internal);
    }

    #[test]
    fn calibration_example() {
        // A reference of ~4.29 GB and ~3.76 GB of reads on SSD-H with a fast
        // hardware mapper give 0.72 s in storage and 1.15 s outside it.
        let ssd = preset("SSD-H").unwrap();
        let host = HostMapperModel::preset(HostKind::HwShort);
        let w = Workload::analytic(FilterMode::Em, 4.29, 3.76, 0.8, None).unwrap();
        let isf = t_ideal_isf(&w, &ssd, &host);
        let osf = t_ideal_osf(&w, &ssd, &host);
        assert!((isf - 0.72).abs() < 0.005, "{isf}");
        assert!((osf - 1.15).abs() < 0.005, "{osf}");
        assert!((osf / isf - 1.6).abs() < 0.01);
    }

    #[test]
    fn energy_basics() {
        let p = PowerTable::for_ssd(&preset("SSD-L").unwrap());
        assert_eq!(energy_of(&Activity::default(), &p).total, 0.0);
        let a = Activity { total: 3.0, cpu: 2.0, ssd: 1.0, link: 1.0, accelerator: 0.5 };
        let e1 = energy_of(&a, &p).total;
        let e2 = energy_of(&a.scaled(2.0), &p).total;
        assert!((e2 - 2.0 * e1).abs() < 1e-9 * e1);
        assert!((p.accelerator.active_w - 0.0266).abs() < 1e-12);
    }

    #[test]
    fn em_run_matches_counts_and_improves_on_baseline() {
        let reference = gen_reference(50_000, 3).unwrap();
        let reads = gen_reads(&reference, 150, 3000, 0.8, 0.01, 4).unwrap();
        let sk = build_skindex(&reference, 150, false).unwrap();
        let sr = build_srtable(&reads, false).unwrap();
        let ssd = preset("SSD-H").unwrap();
        let run = run_pipeline(
            &reads,
            reference.seq.len() as u64,
            FilterInputs::Em { srtable: &sr, skindex: &sk },
            &ssd,
            &sw(),
            FilterCost::Streaming,
        )
        .unwrap();
        let c = run.report.counts;
        assert_eq!(c.reads_total, c.reads_filtered + c.reads_forwarded);
        assert!(c.reads_filtered >= 2400 && c.reads_filtered <= 2460);
        assert!(run.forwarded.windows(2).all(|w| w[0] < w[1]));
        assert!(run.report.bytes_external <= run.report.bytes_internal);
        assert!(run.report.speedup > 1.0);
        assert!(run.report.energy_j < run.report.baseline_energy_j);
        assert!(run.report.t_total >= run.report.t_filter_internal);
        let json: serde_json::Value = serde_json::from_str(&run.report.to_json()).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["baseline"], BASELINE);
        assert_eq!(json["params"]["read_len"], 150);
    }

    #[test]
    fn em_rejects_foreign_srtable() {
        let reference = gen_reference(5_000, 3).unwrap();
        let reads = gen_reads(&reference, 50, 10, 1.0, 0.0, 4).unwrap();
        let other = gen_reads(&reference, 50, 20, 1.0, 0.0, 5).unwrap();
        let sk = build_skindex(&reference, 50, false).unwrap();
        let sr = build_srtable(&other, false).unwrap();
        let r = run_pipeline(
            &reads,
            5000,
            FilterInputs::Em { srtable: &sr, skindex: &sk },
            &preset("SSD-L").unwrap(),
            &sw(),
            FilterCost::Streaming,
        );
        assert!(matches!(r, Err(PipelineError::Mismatch(_))));
        let sk30 = build_skindex(&reference, 30, false).unwrap();
        let sr = build_srtable(&reads, false).unwrap();
        let r = run_pipeline(
            &reads,
            5000,
            FilterInputs::Em { srtable: &sr, skindex: &sk30 },
            &preset("SSD-L").unwrap(),
            &sw(),
            FilterCost::Streaming,
        );
        assert!(matches!(r, Err(PipelineError::Em(EmError::LengthMismatch { .. }))));
    }

    #[test]
    fn nm_capacity_and_mismatch() {
        let reference = gen_reference(100_000, 8).unwrap();
        let params = NmParams::default();
        let index = build_kmer_index(&reference, IndexParams::default()).unwrap();
        let reads = gen_longreads(&reference, &LongReadSpec::new(1000, 20, 0.5), 1).unwrap();
        let tiny = SsdConfig { dram_gib: 1e-6, ..preset("SSD-L").unwrap() };
        let r = run_pipeline(&reads, 100_000, FilterInputs::Nm { index: &index, params: &params }, &tiny, &sw(), FilterCost::Streaming);
        assert!(matches!(r, Err(PipelineError::Capacity { .. })));
        let other = NmParams { k: 19, ..params };
        let r = run_pipeline(
            &reads,
            100_000,
            FilterInputs::Nm { index: &index, params: &other },
            &preset("SSD-L").unwrap(),
            &sw(),
            FilterCost::Streaming,
        );
        assert!(matches!(r, Err(PipelineError::Mismatch(_))));
    }

    #[test]
    fn nm_forwarded_bytes_track_alignment_rate() {
        let reference = gen_reference(200_000, 8).unwrap();
        let params = NmParams::default();
        let index = build_kmer_index(&reference, IndexParams::default()).unwrap();
        let reads = gen_longreads(&reference, &LongReadSpec::new(2000, 400, 0.05), 2).unwrap();
        let run = run_pipeline(
            &reads,
            200_000,
            FilterInputs::Nm { index: &index, params: &params },
            &preset("SSD-H").unwrap(),
            &sw(),
            FilterCost::Streaming,
        )
        .unwrap();
        let r = &run.report;
        let fwd_share = r.bytes_forwarded / r.bytes_reads;
        assert!((fwd_share - 0.05).abs() < 0.03, "{fwd_share}");
        assert_eq!(r.bytes_external, r.bytes_ref + r.bytes_forwarded);
        assert!(r.params.nm.is_some());
    }

    fn workload() -> impl Strategy<Value = (Workload, SsdConfig, HostMapperModel)> {
        (
            prop_oneof![Just(FilterMode::Em), Just(FilterMode::Nm)],
            0.0f64..50.0,
            0.0f64..500.0,
            0.0f64..=1.0,
            0usize..3,
            0.05f64..20.0,
        )
            .prop_map(|(mode, r, s, f, p, h)| {
                let w = Workload::analytic(mode, r, s, f, None).unwrap();
                (w, preset(crate::ssdmodel::PRESET_NAMES[p]).unwrap(), HostMapperModel::new(HostKind::Software, h).unwrap())
            })
    }

    proptest! {
        #[test]
        fn ideal_filter_reproduces_closed_form((w, ssd, host) in workload()) {
            let r = model(&w, &ssd, &host, FilterCost::Ideal);
            prop_assert_eq!(r.t_total, t_ideal_isf(&w, &ssd, &host));
            prop_assert!(t_ideal_osf(&w, &ssd, &host) >= t_ideal_isf(&w, &ssd, &host));
            let r = model(&w, &ssd, &host, FilterCost::Streaming);
            prop_assert!(r.t_total >= r.t_filter_internal.max(r.t_io_unfiltered).max(r.t_rm_unfiltered));
            prop_assert!(r.bytes_external <= r.bytes_internal + 1e-6);
        }

        #[test]
        fn dm_saving_is_monotone(r in 0.001f64..50.0, s in 0.001f64..500.0, f in 0.001f64..0.999, df in 0.0f64..0.5, ds in 0.0f64..100.0) {
            let base = dm_saving(&DmInputs { size_ref_gb: r, size_readset_gb: s, ratio_filter: f });
            let more_f = dm_saving(&DmInputs { size_ref_gb: r, size_readset_gb: s, ratio_filter: (f + df).min(1.0) });
            let more_s = dm_saving(&DmInputs { size_ref_gb: r, size_readset_gb: s + ds, ratio_filter: f });
            prop_assert!(more_f >= base);
            prop_assert!(more_s >= base * (1.0 - 1e-12));
        }

        #[test]
        fn em_speedup_monotone_under_software_host(s in 1.0f64..200.0, ds in 0.0f64..200.0, f in 0.0f64..0.95, df in 0.0f64..0.05, p in 0usize..3) {
            let ssd = preset(crate::ssdmodel::PRESET_NAMES[p]).unwrap();
            let speed = |s: f64, f: f64| model(&Workload::analytic(FilterMode::Em, 7.0, s, f, None).unwrap(), &ssd, &sw(), FilterCost::Streaming).speedup;
            prop_assert!(speed(s + ds, f) >= speed(s, f) * (1.0 - 1e-12));
            prop_assert!(speed(s, f + df) >= speed(s, f) * (1.0 - 1e-12));
        }
    }
}
