//! The `genstore` command line.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 index/mode mismatch,
//! 4 modeled capacity exceeded.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::emfilter;
use crate::index::{build_kmer_index, build_skindex, build_srtable, FormatError, IndexError, IndexFile, IndexParams};
use crate::nmfilter::{self, NmParams};
use crate::pipeline::{
    model, run_pipeline, FilterCost, FilterInputs, FilterMode, HostKind, HostMapperModel, PipelineError,
    PipelineReport, PipelineRun, Workload,
};
use crate::seqio::{copy_fastq_records, open_maybe_gzip, parse_fasta, parse_fastq, write_fasta, write_fastq, ParseError, ReadSet, ReferenceGenome};
use crate::ssdmodel::{self, double_buffer_schedule, simulate_internal_stream, SsdError, TransferPath};
use crate::synth::{self, LongReadSpec, PresetKind, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn mismatch(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_MISMATCH,
            message: message.into(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<SsdError> for CliError {
    fn from(e: SsdError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::WrongKind { .. } => CliError::mismatch(e.to_string()),
            _ => CliError::usage(format!("{e} (format error {})", e.code())),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Mismatch(_) | PipelineError::Em(_) => EXIT_MISMATCH,
            PipelineError::Capacity { .. } => EXIT_CAPACITY,
            PipelineError::Nm(_) | PipelineError::Invalid(_) => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "genstore", version, about = "In-storage filtering of genomic reads")]
pub struct Cli {
    /// Worker threads (outputs do not depend on this)
    #[arg(long, global = true, env = "GENSTORE_THREADS")]
    pub threads: Option<usize>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the SKIndex (em) or the k-mer index (nm) of a reference
    BuildIndex(BuildIndexArgs),
    /// Build the SRTable of a short-read set
    PreprocessReads(PreprocessArgs),
    /// Filter a read set and write forwarded reads, decisions and a report
    Filter(FilterArgs),
    /// Model the end-to-end run time, data movement and energy
    Simulate(SimulateArgs),
    /// Generate synthetic references and reads
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Args, Debug)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub mode: FilterMode,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 150)]
    pub read_length: usize,
    /// Fingerprint both strands (must match preprocess-reads)
    #[arg(long)]
    pub canonical: bool,
    #[arg(short, default_value_t = 15)]
    pub k: usize,
    #[arg(short, default_value_t = 10)]
    pub w: usize,
    #[arg(long, default_value_t = 495)]
    pub max_locations: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub reads: PathBuf,
    #[arg(long)]
    pub canonical: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// SSD-L, SSD-M, SSD-H or a TOML config file
    #[arg(long, default_value = "SSD-H")]
    pub ssd: String,
    #[arg(long, default_value = "software")]
    pub host: HostKind,
    /// Override the host mapper throughput, GB/s
    #[arg(long)]
    pub host_gbps: Option<f64>,
    /// Treat in-storage filtering as free
    #[arg(long)]
    pub ideal_filter: bool,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub mode: FilterMode,
    /// FASTQ, optionally gzipped
    #[arg(long)]
    pub reads: PathBuf,
    /// SKIndex (em) or k-mer index (nm)
    #[arg(long)]
    pub index: PathBuf,
    /// SRTable for em; built from --reads when absent
    #[arg(long)]
    pub srtable: Option<PathBuf>,
    /// Reference FASTA, used for the reference transfer size
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub min_seeds: usize,
    #[arg(long, default_value_t = 64)]
    pub max_seeds: usize,
    #[arg(long, default_value_t = 50)]
    pub lookback: usize,
    #[arg(long, default_value_t = 40)]
    pub min_chain_score: i64,
    #[arg(long, default_value_t = 5000)]
    pub max_gap: u64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Receives forwarded.fastq, decisions.bin and report.json
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Print the SSD presets and exit
    #[arg(long)]
    pub show_presets: bool,
    /// Skip filtering; use --ratio and the size flags
    #[arg(long)]
    pub analytic_only: bool,
    #[arg(long)]
    pub mode: Option<FilterMode>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub readset_gb: Option<f64>,
    #[arg(long)]
    pub ref_gb: Option<f64>,
    /// Bytes the filter streams internally, GB (default: read set, plus a human SKIndex for em)
    #[arg(long)]
    pub filter_stream_gb: Option<f64>,
    #[arg(long)]
    pub reads: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub srtable: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write batch-level fetch/compute events of the filter stream as CSV
    #[arg(long)]
    pub event_csv: Option<PathBuf>,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Uniform random reference (FASTA)
    Reference {
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Short reads with a given exact-match fraction (FASTQ)
    Reads {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        read_length: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long)]
        exact_fraction: Option<f64>,
        #[arg(long)]
        subst_rate: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Long reads with a given aligning fraction (FASTQ)
    Longreads {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        mean_length: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        align_fraction: Option<f64>,
        #[arg(long)]
        error_rate: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        indel_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::BuildIndex(a) => build_index(a),
        Command::PreprocessReads(a) => preprocess(a),
        Command::Filter(a) => filter(a),
        Command::Simulate(a) => simulate(a),
        Command::Gen(g) => gen(g),
    }
}

fn open(path: &Path) -> CliResult<Box<dyn io::BufRead>> {
    let f = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(open_maybe_gzip(f)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let f = File::create(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn read_reference(path: &Path) -> CliResult<ReferenceGenome> {
    let r = parse_fasta(open(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    info!("reference {}: {} bases", path.display(), r.len());
    Ok(r)
}

fn read_reads(path: &Path) -> CliResult<ReadSet> {
    let r = parse_fastq(open(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    info!("reads {}: {} records", path.display(), r.len());
    Ok(r)
}

fn read_index(path: &Path) -> CliResult<IndexFile> {
    if !path.exists() {
        return Err(CliError::usage(format!("{}: no such file", path.display())));
    }
    Ok(IndexFile::read_from(path)?)
}

fn build_index(a: BuildIndexArgs) -> CliResult {
    let reference = read_reference(&a.reference)?;
    let file = match a.mode {
        FilterMode::Em => IndexFile::SkIndex(build_skindex(&reference, a.read_length, a.canonical)?),
        FilterMode::Nm => {
            let params = IndexParams {
                k: a.k,
                w: a.w,
                max_locations: a.max_locations,
            };
            let index = build_kmer_index(&reference, params)?;
            if index.is_empty() {
                warn!("k-mer index is empty (max-locations {})", a.max_locations);
            }
            IndexFile::Kmer(index)
        }
    };
    file.write_to(&a.out)?;
    println!("wrote {} index to {}", file.kind(), a.out.display());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> CliResult {
    let reads = read_reads(&a.reads)?;
    let table = build_srtable(&reads, a.canonical)?;
    let skipped = reads.len() - table.len();
    if skipped > 0 {
        warn!("{skipped} reads with ambiguous bases left out of the SRTable");
    }
    IndexFile::SrTable(table).write_to(&a.out)?;
    println!("wrote SRTable of {} reads to {}", reads.len() - skipped, a.out.display());
    Ok(())
}

fn ssd_and_host(m: &ModelArgs) -> CliResult<(ssdmodel::SsdConfig, HostMapperModel, FilterCost)> {
    let ssd = ssdmodel::load_config(&m.ssd)?;
    let host = match m.host_gbps {
        Some(g) => HostMapperModel::new(m.host, g)?,
        None => HostMapperModel::preset(m.host),
    };
    let cost = if m.ideal_filter {
        FilterCost::Ideal
    } else {
        FilterCost::Streaming
    };
    Ok((ssd, host, cost))
}

fn execute(r: &RunArgs) -> CliResult<(ReadSet, PipelineRun)> {
    let (ssd, host, cost) = ssd_and_host(&r.model)?;
    let reads = read_reads(&r.reads)?;
    let ref_bases = match &r.reference {
        Some(p) => read_reference(p)?.len() as u64,
        None => {
            warn!("no --reference given; reference transfer is modeled as empty");
            0
        }
    };
    let index = read_index(&r.index)?;
    let run = match r.mode {
        FilterMode::Em => {
            let skindex = index.into_skindex()?;
            let srtable = match &r.srtable {
                Some(p) => read_index(p)?.into_srtable()?,
                None => build_srtable(&reads, skindex.canonical)?,
            };
            run_pipeline(&reads, ref_bases, FilterInputs::Em { srtable: &srtable, skindex: &skindex }, &ssd, &host, cost)?
        }
        FilterMode::Nm => {
            let index = index.into_kmer_index()?;
            let params = NmParams {
                min_seeds: r.min_seeds,
                max_seeds: r.max_seeds,
                lookback: r.lookback,
                w: index.params.w,
                k: index.params.k,
                min_chain_score: r.min_chain_score,
                max_gap: r.max_gap,
            };
            run_pipeline(&reads, ref_bases, FilterInputs::Nm { index: &index, params: &params }, &ssd, &host, cost)?
        }
    };
    Ok((reads, run))
}

fn filter(a: FilterArgs) -> CliResult {
    let (reads, run) = execute(&a.run)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut keep = vec![false; reads.len()];
    for &i in &run.forwarded {
        keep[i] = true;
    }
    let mut out = create(&a.out_dir.join("forwarded.fastq"))?;
    copy_fastq_records(open(&a.run.reads)?, &mut out, |i| keep[i])?;
    out.flush()?;
    let mut out = create(&a.out_dir.join("decisions.bin"))?;
    match a.run.mode {
        FilterMode::Em => emfilter::write_decisions(&mut out, &run.em_decisions)?,
        FilterMode::Nm => nmfilter::write_decisions(&mut out, &run.nm_decisions)?,
    }
    out.flush()?;
    write_report(&run.report, Some(&a.out_dir.join("report.json")))?;
    let c = run.report.counts;
    println!(
        "reads_total={} filtered={} forwarded={}",
        c.reads_total, c.reads_filtered, c.reads_forwarded
    );
    Ok(())
}

fn write_report(report: &PipelineReport, path: Option<&Path>) -> CliResult {
    let json = report.to_json();
    match path {
        Some(p) => {
            let mut out = create(p)?;
            out.write_all(json.as_bytes())?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn show_presets() {
    println!("preset\tchannels\tinternal_gbps\texternal_gbps\tratio");
    for name in ssdmodel::PRESET_NAMES {
        let c = ssdmodel::preset(name).expect("built-in preset");
        println!(
            "{}\t{}\t{:.1}\t{:.1}\t{:.3}",
            c.name,
            c.channels,
            c.internal_bw() / ssdmodel::GB,
            c.external_bw_gbps,
            c.internal_to_external_ratio()
        );
    }
}

fn simulate(a: SimulateArgs) -> CliResult {
    if a.show_presets {
        show_presets();
        return Ok(());
    }
    let mode = a.mode.ok_or_else(|| CliError::usage("--mode is required"))?;
    let report = if a.analytic_only {
        let (ssd, host, cost) = ssd_and_host(&a.model)?;
        let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::usage(format!("--analytic-only needs {flag}")));
        let w = Workload::analytic(
            mode,
            need(a.ref_gb, "--ref-gb")?,
            need(a.readset_gb, "--readset-gb")?,
            need(a.ratio, "--ratio")?,
            a.filter_stream_gb,
        )?;
        model(&w, &ssd, &host, cost)
    } else {
        let need = |v: &Option<PathBuf>, flag: &str| {
            v.clone()
                .ok_or_else(|| CliError::usage(format!("{flag} is required without --analytic-only")))
        };
        let r = RunArgs {
            mode,
            reads: need(&a.reads, "--reads")?,
            index: need(&a.index, "--index")?,
            srtable: a.srtable.clone(),
            reference: a.reference.clone(),
            min_seeds: 3,
            max_seeds: 64,
            lookback: 50,
            min_chain_score: 40,
            max_gap: 5000,
            model: a.model.clone(),
        };
        execute(&r)?.1.report
    };
    if let Some(path) = &a.event_csv {
        let ssd = &report.params.ssd;
        let bytes = if report.filter_cost == FilterCost::Ideal {
            0
        } else {
            (report.bytes_internal - report.bytes_ref).round() as u64
        };
        // the filter logic keeps pace with the flash: one batch time per batch
        let batch = ssd.batch_plan().batch_bytes as f64;
        let per_batch = ssdmodel::stream_time(batch, ssd, TransferPath::Internal).seconds;
        let timeline = double_buffer_schedule(bytes, per_batch, ssd);
        let mut out = create(path)?;
        timeline.write_csv(&mut out)?;
        out.flush()?;
        info!(
            "event mode: {:.6} s pipelined, {:.6} s die-level stream, {:.6} s analytic",
            timeline.total,
            simulate_internal_stream(bytes as f64, ssd),
            report.t_filter_internal
        );
    }
    write_report(&report, a.report.as_deref())
}

fn gen(g: GenCommand) -> CliResult {
    match g {
        GenCommand::Reference { length, seed, out } => {
            let r = synth::gen_reference(length, seed)?;
            let mut w = create(&out)?;
            write_fasta(&mut w, &r.name, &r.seq)?;
            w.flush()?;
        }
        GenCommand::Reads {
            reference,
            preset,
            read_length,
            count,
            exact_fraction,
            subst_rate,
            seed,
            out,
        } => {
            let (mut len, mut exact, mut subst) = (150, 0.8, 0.01);
            if let Some(name) = preset {
                match synth::preset(&name)?.kind {
                    PresetKind::Short { read_len, exact_fraction, subst_rate } => {
                        (len, exact, subst) = (read_len, exact_fraction, subst_rate)
                    }
                    PresetKind::Long { .. } => return Err(CliError::usage(format!("{name} is a long-read preset"))),
                }
            }
            let reference = read_reference(&reference)?;
            let reads = synth::gen_reads(
                &reference,
                read_length.unwrap_or(len),
                count,
                exact_fraction.unwrap_or(exact),
                subst_rate.unwrap_or(subst),
                seed,
            )?;
            write_generated(&out, &reads, seed)?;
        }
        GenCommand::Longreads {
            reference,
            preset,
            mean_length,
            count,
            align_fraction,
            error_rate,
            indel_fraction,
            seed,
            out,
        } => {
            let (mut len, mut align, mut err) = (5000, 0.5, 0.10);
            if let Some(name) = preset {
                match synth::preset(&name)?.kind {
                    PresetKind::Long { mean_len, align_fraction, error_rate } => {
                        (len, align, err) = (mean_len, align_fraction, error_rate)
                    }
                    PresetKind::Short { .. } => return Err(CliError::usage(format!("{name} is a short-read preset"))),
                }
            }
            let reference = read_reference(&reference)?;
            let spec = LongReadSpec {
                mean_len: mean_length.unwrap_or(len),
                count,
                align_fraction: align_fraction.unwrap_or(align),
                error_rate: error_rate.unwrap_or(err),
                indel_fraction,
            };
            let reads = synth::gen_longreads(&reference, &spec, seed)?;
            write_generated(&out, &reads, seed)?;
        }
    }
    Ok(())
}

fn write_generated(path: &Path, reads: &ReadSet, seed: u64) -> CliResult {
    let mut w = create(path)?;
    write_fastq(&mut w, reads, |r| format!("r{} {} seed={seed}", r.id, synth::GENERATOR_VERSION))?;
    w.flush()?;
    Ok(())
}
