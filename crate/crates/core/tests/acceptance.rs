//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use genstore::emfilter::{em_filter, em_filter_batched, EmVerdict};
use genstore::index::{build_kmer_index, build_skindex, build_srtable, IndexParams};
use genstore::nmfilter::{
    chain_score_approx, chain_score_exact, minimizers, nm_filter, seed_find, sort_seeds, NmParams, Seed,
};
use genstore::pipeline::{
    dm_saving, model, run_pipeline, t_ideal_isf, t_ideal_osf, DmInputs, FilterCost, FilterInputs, FilterMode,
    HostKind, HostMapperModel, PipelineReport, Workload,
};
use genstore::refkit::{naive_chain, naive_minimizers, SubstringOracle};
use genstore::seqio::{Read, ReadSet, ReferenceGenome};
use genstore::ssdmodel::{
    placement_metadata, preset, simulate_internal_stream, stream_time, SsdConfig, TransferPath, GB, PRESET_NAMES,
};
use genstore::synth::{gen_longreads, gen_reads, gen_reference, LongReadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn software() -> HostMapperModel {
    HostMapperModel::preset(HostKind::Software)
}

fn c1_em_oracle() -> Outcome {
    let reference = gen_reference(1_000_000, 101).unwrap();
    let ascii = reference.seq.to_ascii();
    let oracle = SubstringOracle::new(&ascii, 150);
    let mut summary = Vec::new();
    let mut elapsed = 0.0;
    for (i, frac) in [0.75, 0.8, 0.85].into_iter().enumerate() {
        let reads = gen_reads(&reference, 150, 10_000, frac, 0.01, 200 + i as u64).unwrap();
        let t = Instant::now();
        let sk = build_skindex(&reference, 150, false).unwrap();
        let sr = build_srtable(&reads, false).unwrap();
        let (decisions, stats) = em_filter(&sr, &sk, true).unwrap();
        elapsed += t.elapsed().as_secs_f64();
        let mut disagreements = 0;
        for d in &decisions {
            let want = oracle.locations(&reads[d.read_id as usize].seq.to_ascii());
            let hit = d.verdict == EmVerdict::ExactMatch;
            if hit != !want.is_empty() || (hit && d.locations != want) {
                disagreements += 1;
            }
        }
        ensure(decisions.len() == reads.len(), || "not every read was classified".into())?;
        ensure(disagreements == 0, || format!("{disagreements} disagreements at exact fraction {frac}"))?;
        summary.push(format!("{frac}: {:.3} filtered", stats.reads_filtered as f64 / 1e4));
    }
    ensure(elapsed < 10.0, || format!("took {elapsed:.2} s"))?;
    Ok(format!("0 disagreements over 3×10^4 reads ({}), {elapsed:.2} s", summary.join(", ")))
}

fn random_ascii(rng: &mut ChaCha8Rng, len: usize, alphabet: &[u8]) -> Vec<u8> {
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

fn c2_em_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_steps_ratio: f64 = 0.0;
    for inst in 0..100 {
        let ref_len = rng.gen_range(200..5000);
        let read_len = rng.gen_range(8..40);
        let reference = ReferenceGenome::from_ascii("r", &random_ascii(&mut rng, ref_len, b"ACGT"));
        let canonical = rng.gen_bool(0.5);
        let count = rng.gen_range(1..400);
        let exact = rng.gen_range(0.0..1.0);
        let reads = gen_reads(&reference, read_len, count, exact, 0.05, inst).unwrap();
        let sk = build_skindex(&reference, read_len, canonical).unwrap();
        let sr = build_srtable(&reads, canonical).unwrap();
        let (full, stats) = em_filter(&sr, &sk, true).unwrap();
        let bound = (sr.len() + sk.len()) as u64;
        ensure(stats.comparator_steps <= bound, || {
            format!("instance {inst}: {} steps > {bound}", stats.comparator_steps)
        })?;
        max_steps_ratio = max_steps_ratio.max(stats.comparator_steps as f64 / bound as f64);
        // one 16 KiB page holds 682 fingerprint entries
        for batch in [1, 2, 7, 64, 682, usize::MAX] {
            let (b, s) = em_filter_batched(&sr, &sk, batch, batch, true).unwrap();
            ensure(b == full && s == stats, || format!("instance {inst}: batch size {batch} changed the output"))?;
        }
    }
    Ok(format!("100 instances, max steps/(|SR|+|SK|) = {max_steps_ratio:.3}, 6 batch sizes identical"))
}

fn random_seeds(rng: &mut ChaCha8Rng, n: usize) -> Vec<Seed> {
    let mut seeds = Vec::with_capacity(n);
    let mut x: u64 = rng.gen_range(20..1000);
    let mut y: u64 = rng.gen_range(20..200);
    for _ in 0..n {
        if rng.gen_bool(0.1) {
            // jump to an unrelated diagonal
            x = rng.gen_range(20..100_000);
            y = rng.gen_range(20..5000);
        } else {
            x += rng.gen_range(0..60);
            y = (y as i64 + rng.gen_range(-5i64..60)).max(15) as u64;
        }
        seeds.push(Seed {
            x,
            y,
            w: 15,
            rev: rng.gen_bool(0.2),
        });
    }
    sort_seeds(&mut seeds);
    seeds
}

fn c3_chaining() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = NmParams::default();
    let mut strictly_over = 0;
    for case in 0..10_000 {
        let n = rng.gen_range(3..64);
        let seeds = random_seeds(&mut rng, n);
        let exact = chain_score_exact(&seeds, &params).unwrap();
        let approx = chain_score_approx(&seeds, &params).unwrap();
        ensure(approx >= exact, || format!("case {case}: approx {approx} < exact {exact}"))?;
        strictly_over += usize::from(approx > exact);
        let wide = NmParams { lookback: n, ..params };
        let exact_wide = chain_score_exact(&seeds, &wide).unwrap();
        let naive = naive_chain(&seeds, &wide);
        ensure(exact_wide == naive, || format!("case {case}: exact {exact_wide} != naive {naive}"))?;
    }
    Ok(format!("10^4 seed lists, approx ≥ exact everywhere ({strictly_over} strictly above), h ≥ n matches oracle"))
}

fn c4_nm_containment() -> Outcome {
    let reference = gen_reference(1_000_000, 4).unwrap();
    let params = NmParams::default();
    let index = build_kmer_index(&reference, IndexParams::default()).unwrap();
    let mut reads: ReadSet = Vec::new();
    for (i, err) in [0.05, 0.15, 0.25, 0.35].into_iter().enumerate() {
        let spec = LongReadSpec {
            error_rate: err,
            ..LongReadSpec::new(300, 2500, 0.7)
        };
        reads.extend(gen_longreads(&reference, &spec, 40 + i as u64).unwrap());
    }
    let mut chained = 0;
    let mut passing = 0;
    for (i, read) in reads.iter().enumerate() {
        let mut seeds = seed_find(read, &index, &params);
        sort_seeds(&mut seeds);
        let decision = nm_filter(read, &index, &params);
        if seeds.len() >= params.min_seeds && seeds.len() < params.max_seeds {
            chained += 1;
        }
        let exact = chain_score_exact(&seeds, &params).unwrap();
        if exact >= params.min_chain_score {
            passing += 1;
            ensure(decision.verdict.is_forwarded(), || {
                format!("read {i}: exact score {exact} but verdict {:?}", decision.verdict)
            })?;
        }
    }
    ensure(chained > 1000, || format!("only {chained} reads reached chaining"))?;
    Ok(format!(
        "{} reads, {chained} chained, all {passing} with exact score ≥ {} forwarded",
        reads.len(),
        params.min_chain_score
    ))
}

fn c5_minimizers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut total = 0;
    for (k, w) in [(15, 10), (19, 10), (21, 11)] {
        for i in 0..1000 {
            let len = rng.gen_range(1..400);
            let alphabet: &[u8] = if i % 10 == 0 { b"ACGTACGTACGTACGTN" } else { b"ACGT" };
            let ascii = random_ascii(&mut rng, len, alphabet);
            let read = Read::from_ascii(i, &ascii);
            let got: Vec<(u64, usize, bool)> = minimizers(&read, k, w).iter().map(|m| (m.hash, m.end, m.rev)).collect();
            let want = naive_minimizers(&ascii, k, w);
            ensure(got == want, || format!("(k={k}, w={w}) read {i} differs"))?;
            total += got.len();
        }
    }
    Ok(format!("3×10^3 reads, {total} minimizers identical to the oracle"))
}

fn c6_constants() -> Outcome {
    let ratios: Vec<f64> = PRESET_NAMES
        .iter()
        .map(|n| preset(n).unwrap().internal_to_external_ratio())
        .collect();
    for (got, want) in ratios.iter().zip([19.2, 5.486, 2.743]) {
        ensure((got / want - 1.0).abs() <= 0.01, || format!("ratio {got} vs {want}"))?;
    }
    let ssd = SsdConfig {
        channels: 16,
        dies_per_channel: 8,
        planes_per_die: 2,
        ..preset("SSD-H").unwrap()
    };
    let p = placement_metadata(30.0 * GB, &ssd, 12.0);
    ensure(p.mapping_entries == 1250 && p.metadata_bytes == 5000, || {
        format!("{} entries / {} bytes", p.mapping_entries, p.metadata_bytes)
    })?;
    let short = dm_saving(&DmInputs { size_ref_gb: 7.0, size_readset_gb: 22.0, ratio_filter: 0.8 });
    let long = dm_saving(&DmInputs { size_ref_gb: 0.0146, size_readset_gb: 12.4, ratio_filter: 0.9965 });
    ensure((short - 2.544).abs() <= 0.001, || format!("dm_saving {short}"))?;
    ensure((long - 214.0).abs() <= 2.0, || format!("dm_saving {long}"))?;
    Ok(format!(
        "ratios {:.3}/{:.3}/{:.3}, 1250 entries / 5000 B, dm_saving {short:.4} and {long:.1}",
        ratios[0], ratios[1], ratios[2]
    ))
}

fn c7_identities() -> Outcome {
    let reference = gen_reference(100_000, 7).unwrap();
    let reads = gen_reads(&reference, 150, 5000, 0.8, 0.01, 7).unwrap();
    let sk = build_skindex(&reference, 150, false).unwrap();
    let sr = build_srtable(&reads, false).unwrap();
    for name in PRESET_NAMES {
        let ssd = preset(name).unwrap();
        for kind in [HostKind::Software, HostKind::HwShort, HostKind::HwLong] {
            let host = HostMapperModel::preset(kind);
            let run = run_pipeline(&reads, 100_000, FilterInputs::Em { srtable: &sr, skindex: &sk }, &ssd, &host, FilterCost::Ideal)
                .unwrap();
            let r = &run.report;
            ensure(r.t_total == r.t_ideal_isf, || format!("{name}: {} != {}", r.t_total, r.t_ideal_isf))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let ssd = preset(PRESET_NAMES[rng.gen_range(0..3)]).unwrap();
        let host = HostMapperModel::new(HostKind::Software, rng.gen_range(0.05..30.0)).unwrap();
        let mode = if rng.gen_bool(0.5) { FilterMode::Em } else { FilterMode::Nm };
        let w = Workload::analytic(mode, rng.gen_range(0.0..10.0), rng.gen_range(0.0..400.0), rng.gen_range(0.0..=1.0), None)
            .unwrap();
        let (isf, osf) = (t_ideal_isf(&w, &ssd, &host), t_ideal_osf(&w, &ssd, &host));
        ensure(osf >= isf, || format!("case {case}: osf {osf} < isf {isf}"))?;
        ensure(model(&w, &ssd, &host, FilterCost::Ideal).t_total == isf, || format!("case {case}: ideal model != isf"))?;
    }
    let mut worst: f64 = 0.0;
    for name in PRESET_NAMES {
        let ssd = preset(name).unwrap();
        for bytes in [1e9, 5e9, 2e10] {
            let a = stream_time(bytes, &ssd, TransferPath::Internal).seconds;
            let e = simulate_internal_stream(bytes, &ssd);
            worst = worst.max((e / a - 1.0).abs());
        }
    }
    ensure(worst < 0.01, || format!("analytic vs event differ by {:.3}%", worst * 100.0))?;
    Ok(format!(
        "ideal filter = closed form on 9 configs, OSF ≥ ISF on 10^3 cases, event vs analytic within {:.4}%",
        worst * 100.0
    ))
}

fn em_report(reference: &ReferenceGenome, reads: &ReadSet, ssd: &SsdConfig) -> PipelineReport {
    let sk = build_skindex(reference, 150, false).unwrap();
    let sr = build_srtable(reads, false).unwrap();
    run_pipeline(
        reads,
        reference.seq.len() as u64,
        FilterInputs::Em { srtable: &sr, skindex: &sk },
        ssd,
        &software(),
        FilterCost::Streaming,
    )
    .unwrap()
    .report
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn c8_trends() -> Outcome {
    let ssd = preset("SSD-H").unwrap();
    let reference = gen_reference(50_000, 8).unwrap();
    let mut reports = Vec::new();
    let scale: Vec<f64> = [2000, 20_000, 40_000]
        .iter()
        .map(|&n| {
            let r = em_report(&reference, &gen_reads(&reference, 150, n, 0.8, 0.01, 80).unwrap(), &ssd);
            let s = r.speedup;
            reports.push(r);
            s
        })
        .collect();
    ensure(strictly_increasing(&scale), || format!("EM speedup over readset scale: {scale:?}"))?;
    let exact: Vec<f64> = [0.75, 0.8, 0.85]
        .iter()
        .map(|&f| {
            let r = em_report(&reference, &gen_reads(&reference, 150, 20_000, f, 0.01, 81).unwrap(), &ssd);
            let s = r.speedup;
            reports.push(r);
            s
        })
        .collect();
    ensure(strictly_increasing(&exact), || format!("EM speedup over exact ratio: {exact:?}"))?;
    let paper: Vec<f64> = [1.0, 10.0, 20.0]
        .iter()
        .map(|&x| model(&Workload::analytic(FilterMode::Em, 7.0, 22.0 * x, 0.8, None).unwrap(), &ssd, &software(), FilterCost::Streaming).speedup)
        .collect();
    ensure(strictly_increasing(&paper), || format!("paper-scale EM speedup: {paper:?}"))?;

    let long_ref = gen_reference(500_000, 9).unwrap();
    let index = build_kmer_index(&long_ref, IndexParams::default()).unwrap();
    let params = NmParams::default();
    let nm: Vec<f64> = [0.37, 0.0035]
        .iter()
        .map(|&a| {
            let reads = gen_longreads(&long_ref, &LongReadSpec::new(2000, 1000, a), 90).unwrap();
            let r = run_pipeline(&reads, 500_000, FilterInputs::Nm { index: &index, params: &params }, &ssd, &software(), FilterCost::Streaming)
                .unwrap()
                .report;
            let s = r.speedup;
            reports.push(r);
            s
        })
        .collect();
    ensure(nm[1] > nm[0], || format!("NM speedup 37% -> 0.35%: {nm:?}"))?;

    let mut energy_cases = 0;
    for r in &reports {
        if r.ratio_filter > 0.0 {
            energy_cases += 1;
            ensure(r.energy_j < r.baseline_energy_j, || format!("energy {} ≥ baseline {}", r.energy_j, r.baseline_energy_j))?;
        }
    }
    for name in PRESET_NAMES {
        let ssd = preset(name).unwrap();
        for i in 1..=20 {
            let ratio = i as f64 / 20.0;
            for w in [
                Workload::analytic(FilterMode::Em, 7.0, 22.0, ratio, None).unwrap(),
                Workload::analytic(FilterMode::Nm, 0.0146, 12.4, ratio, None).unwrap(),
            ] {
                let r = model(&w, &ssd, &software(), FilterCost::Streaming);
                energy_cases += 1;
                ensure(r.energy_j < r.baseline_energy_j, || format!("{name} ratio {ratio}: energy not below baseline"))?;
            }
        }
    }
    Ok(format!(
        "EM scale {:.2}→{:.2}→{:.2}, exact {:.2}→{:.2}→{:.2}, NM {:.2}→{:.2}, energy below baseline in {energy_cases} cases",
        scale[0], scale[1], scale[2], exact[0], exact[1], exact[2], nm[0], nm[1]
    ))
}

fn genstore(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_genstore"))
        .args(args)
        .env("GENSTORE_THREADS", threads)
        .output()
        .expect("spawn genstore");
    assert!(out.status.success(), "genstore {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    genstore(&["gen", "reference", "--length", "300000", "--seed", "9", "--out", &p("ref.fa")], "1");
    genstore(&["gen", "reads", "--reference", &p("ref.fa"), "--count", "20000", "--seed", "9", "--out", &p("short.fq")], "1");
    genstore(
        &["gen", "longreads", "--reference", &p("ref.fa"), "--preset", "table1-noref-2", "--mean-length", "1500", "--count", "500", "--seed", "9", "--out", &p("long.fq")],
        "1",
    );
    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    for threads in ["1", "4", "16"] {
        let t = |name: &str| p(&format!("{name}.{threads}"));
        genstore(&["build-index", "--mode", "em", "--reference", &p("ref.fa"), "--out", &t("sk.gsi")], threads);
        genstore(&["build-index", "--mode", "nm", "--reference", &p("ref.fa"), "--out", &t("km.gsi")], threads);
        genstore(&["preprocess-reads", "--reads", &p("short.fq"), "--out", &t("sr.gsi")], threads);
        genstore(
            &["filter", "--mode", "em", "--reads", &p("short.fq"), "--index", &t("sk.gsi"), "--srtable", &t("sr.gsi"), "--reference", &p("ref.fa"), "--out-dir", &t("em")],
            threads,
        );
        genstore(
            &["filter", "--mode", "nm", "--reads", &p("long.fq"), "--index", &t("km.gsi"), "--reference", &p("ref.fa"), "--out-dir", &t("nm")],
            threads,
        );
        let sim = genstore(
            &["simulate", "--mode", "nm", "--ssd", "SSD-M", "--reads", &p("long.fq"), "--index", &t("km.gsi"), "--reference", &p("ref.fa")],
            threads,
        );
        let mut files = vec![sim];
        for f in ["sk.gsi", "km.gsi", "sr.gsi"] {
            files.push(std::fs::read(t(f)).unwrap());
        }
        for d in ["em", "nm"] {
            for f in ["decisions.bin", "forwarded.fastq", "report.json"] {
                files.push(std::fs::read(Path::new(&t(d)).join(f)).unwrap());
            }
        }
        outputs.push(files);
    }
    ensure(outputs[0] == outputs[1] && outputs[0] == outputs[2], || "outputs differ across thread counts".into())?;
    let bytes: usize = outputs[0].iter().map(Vec::len).sum();
    Ok(format!("threads 1/4/16: {} files, {bytes} bytes identical", outputs[0].len()))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("EM oracle equivalence", c1_em_oracle),
        ("EM linearity and batch independence", c2_em_linearity),
        ("chaining over-estimation", c3_chaining),
        ("NM accuracy containment", c4_nm_containment),
        ("minimizer correctness", c5_minimizers),
        ("reference constants", c6_constants),
        ("model identities", c7_identities),
        ("trend reproduction", c8_trends),
        ("determinism across thread counts", c9_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} [PASS] {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} [FAIL] {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
