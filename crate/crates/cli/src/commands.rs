use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bkc_core::bconv::{
    binarize, conv_packed, conv_reference, decode_output, encode_feature_map, encode_output,
    load_feature_map, BitFeatureMap, FeatureMap, FloatFeatureMap, IntFeatureMap,
};
use bkc_core::bintensor::{channel_pack, encode_kernel, encode_packed, BinaryKernel};
use bkc_core::cluster::{
    apply_substitution, build_substitution, substituted_table, ClusterConfig, SubstitutionReport,
};
use bkc_core::codec::{
    build_spec, compression_ratio, decode, encode, model_ratio, parse_compressed, write_compressed,
    CodecError, HuffmanSpec, RatioReport, BASELINE_BITS,
};
use bkc_core::dusim::{stage, DecodingUnit, RegisterSet, UnitParams};
use bkc_core::lanes;
use bkc_core::profiles::{block_profile, storage_shares};
use bkc_core::stats::{
    count_frequencies, synth_kernels, CoveragePoint, CoverageSummary, FrequencyTable, SynthConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, Result};
use crate::inputs::{self, AnyKernel};
use crate::manifest::{RunConfig, RunManifest};

/// Result of one command: the JSON report plus anything for stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub json: Value,
    /// Replaces the JSON on stdout when set.
    pub text: Option<String>,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(json: Value) -> Self {
        Self {
            json,
            text: None,
            exit_code: 0,
        }
    }
}

fn config(cli: &Cli) -> RunConfig {
    RunConfig {
        register_width: cli.register_width,
        layout: cli.layout.to_string(),
        m: None,
        n: None,
        seed: cli.seed,
        options: BTreeMap::new(),
    }
}

fn format_err(e: impl ToString) -> CliError {
    CliError::Format(e.to_string())
}

fn spec_for(t: &FrequencyTable, cli: &Cli) -> Result<HuffmanSpec> {
    build_spec(t, &cli.layout).map_err(|e| match e {
        CodecError::CapacityExceeded { overflow, capacity } => {
            CliError::Capacity { overflow, capacity }
        }
        other => format_err(other),
    })
}

fn cluster_config(m: usize, n: usize) -> Result<ClusterConfig> {
    ClusterConfig::new(m, n).map_err(|e| CliError::Usage(e.to_string()))
}

fn kernel_name(dir: &Path, i: usize, ext: &str) -> PathBuf {
    dir.join(format!("kernel_{i:04}.{ext}"))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    if cli.register_width == 0 {
        return Err(CliError::Usage("--register-width must be positive".into()));
    }
    match &cli.command {
        Command::Synth(a) => synth(cli, a).map(Outcome::ok),
        Command::SynthMap(a) => synth_map(cli, a).map(Outcome::ok),
        Command::Analyze(a) => analyze(cli, a).map(Outcome::ok),
        Command::Compress(a) => compress(cli, a).map(Outcome::ok),
        Command::Cluster(a) if a.sweep => sweep(cli, a).map(Outcome::ok),
        Command::Cluster(a) => cluster(cli, a).map(Outcome::ok),
        Command::Eval(a) => eval(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<Value> {
    let mut cfg = match (a.block, a.top64, a.top256) {
        (Some(b), _, _) => block_profile(b)
            .ok_or_else(|| CliError::Usage(format!("--block must be in 1..=13, got {b}")))?
            .synth_config(a.channels, cli.seed),
        (None, Some(t64), Some(t256)) => SynthConfig::new(
            vec![CoveragePoint::new(64, t64), CoveragePoint::new(256, t256)],
            a.channels,
            cli.seed,
        ),
        _ => {
            return Err(CliError::Usage(
                "give --block or both --top64 and --top256".into(),
            ))
        }
    };
    if let Some(t) = &a.tiers {
        cfg.tiers = Some(t.clone());
    }
    cfg.layout = a.rank_order.into();
    cfg.anchor_constants = a.anchors;
    cfg.in_channels = a.in_channels;
    cfg.out_channels = a.out_channels;
    let kernels = synth_kernels(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut rc = config(cli);
    rc.options.insert(
        "synth".into(),
        serde_json::to_value(&cfg).expect("config serializes"),
    );
    let mut manifest = RunManifest::new("synth", &[] as &[PathBuf], rc);
    for (i, k) in kernels.iter().enumerate() {
        manifest.write_output(
            &kernel_name(&a.output, i, inputs::KERNEL_EXT),
            &encode_kernel(k),
        )?;
    }
    let t = count_frequencies(&kernels).map_err(format_err)?;
    Ok(json!({
        "manifest": manifest,
        "channels": t.total(),
        "kernels": kernels.len(),
        "occupied": t.occupied().len(),
        "coverage": CoverageSummary::of(&t),
        "targets": cfg.points,
    }))
}

fn synth_map(cli: &Cli, a: &SynthMapArgs) -> Result<Value> {
    let n = a.channels * a.height * a.width;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let data: Vec<f32> = match a.fill {
        Some(v) => vec![v; n],
        None => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
    };
    let f = FloatFeatureMap::new(a.channels, a.height, a.width, data)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let map = if a.packed {
        FeatureMap::Bits(binarize(&f, cli.register_width).map_err(format_err)?)
    } else {
        FeatureMap::Float(f)
    };
    let mut rc = config(cli);
    rc.options
        .insert("dims".into(), json!([a.channels, a.height, a.width]));
    rc.options.insert("packed".into(), json!(a.packed));
    rc.options.insert("fill".into(), json!(a.fill));
    let mut manifest = RunManifest::new("synth-map", &[] as &[PathBuf], rc);
    manifest.write_output(&a.output, &encode_feature_map(&map))?;
    Ok(json!({ "manifest": manifest }))
}

fn analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<Value> {
    let mut groups = Vec::new();
    for p in &a.inputs {
        let files = inputs::expand(p)?;
        let kernels = files
            .iter()
            .map(|f| inputs::load_kernel(f))
            .collect::<Result<Vec<_>>>()?;
        let t = count_frequencies(&kernels).map_err(|e| CliError::input(p, e))?;
        groups.push(json!({
            "name": p.display().to_string(),
            "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
            "report": t.report(),
        }));
    }
    let manifest = RunManifest::new("analyze", &a.inputs, config(cli));
    Ok(json!({ "manifest": manifest, "groups": groups }))
}

#[derive(Serialize)]
struct CompressedFile {
    output: String,
    inputs: Vec<String>,
    ratio: RatioReport,
}

fn compress(cli: &Cli, a: &CompressArgs) -> Result<Value> {
    let loaded = inputs::load_kernels(&a.inputs)?;
    let names: Vec<String> = loaded
        .iter()
        .map(|(p, _)| p.display().to_string())
        .collect();
    let mut kernels: Vec<BinaryKernel> = loaded.into_iter().map(|(_, k)| k).collect();

    let mut rc = config(cli);
    rc.options.insert("per_kernel".into(), json!(a.per_kernel));
    rc.options.insert("cluster".into(), json!(a.cluster));
    let mut substitution = Value::Null;
    if a.cluster {
        rc.m = Some(a.m);
        rc.n = Some(a.n);
        let t = count_frequencies(&kernels).map_err(format_err)?;
        let map = build_substitution(&t, cluster_config(a.m, a.n)?);
        kernels = apply_substitution(&kernels, &map);
        substitution = json!({
            "pairs": map.pairs().len(),
            "untouched": map.untouched().len(),
            "replaced_mass": map.replaced_mass(&t),
            "untouched_mass": map.untouched_mass(&t),
        });
    }
    let mut manifest = RunManifest::new("compress", &a.inputs, rc);
    manifest.label = Some(
        a.label
            .clone()
            .unwrap_or_else(|| inputs::file_label(&a.inputs[0])),
    );

    let groups: Vec<(Vec<usize>, PathBuf)> = if a.per_kernel {
        (0..kernels.len())
            .map(|i| (vec![i], kernel_name(&a.output, i, "bnc")))
            .collect()
    } else {
        vec![((0..kernels.len()).collect(), a.output.clone())]
    };
    let mut files = Vec::new();
    let (mut channels, mut bits) = (0u64, 0u64);
    for (members, path) in groups {
        let ks: Vec<BinaryKernel> = members.iter().map(|&i| kernels[i].clone()).collect();
        let t = count_frequencies(&ks).map_err(format_err)?;
        let spec = spec_for(&t, cli)?;
        let stream = encode(&ks, &spec).map_err(format_err)?;
        manifest.write_output(&path, &write_compressed(&spec, &stream))?;
        let ratio = RatioReport::new(&t, &spec, &stream).map_err(format_err)?;
        if ratio.analytic_ratio != ratio.measured_ratio {
            return Err(CliError::Check(format!(
                "analytic ratio {} differs from measured {}",
                ratio.analytic_ratio, ratio.measured_ratio
            )));
        }
        channels += ratio.channels;
        bits += ratio.payload_bits;
        files.push(CompressedFile {
            output: path.display().to_string(),
            inputs: members.iter().map(|&i| names[i].clone()).collect(),
            ratio,
        });
    }
    let ratio = (BASELINE_BITS as u64 * channels) as f64 / bits as f64;
    let column = if a.cluster { "clustering" } else { "encoding" };
    manifest.result("channels", channels as f64);
    manifest.result(&format!("{column}_ratio"), ratio);
    manifest.result(&format!("{column}_payload_bits"), bits as f64);
    Ok(json!({
        "manifest": manifest,
        "granularity": if a.per_kernel { "kernel" } else { "block" },
        "substitution": substitution,
        "files": files,
        "aggregate": { "channels": channels, "payload_bits": bits, "ratio": ratio },
    }))
}

/// Ratio and encoded bits under the CLI layout, if the table fits.
fn try_ratio(t: &FrequencyTable, cli: &Cli) -> Option<(f64, u64)> {
    let spec = build_spec(t, &cli.layout).ok()?;
    Some((
        compression_ratio(t, &spec).ok()?,
        spec.encoded_bits(t).ok()?,
    ))
}

fn cluster(cli: &Cli, a: &ClusterArgs) -> Result<Value> {
    let out_dir = a
        .output
        .as_ref()
        .expect("clap requires --output without --sweep");
    let loaded = inputs::load_kernels(&a.inputs)?;
    let kernels: Vec<BinaryKernel> = loaded.into_iter().map(|(_, k)| k).collect();
    let t = count_frequencies(&kernels).map_err(format_err)?;
    let map = build_substitution(&t, cluster_config(a.m, a.n)?);
    let out = apply_substitution(&kernels, &map);

    let mut rc = config(cli);
    rc.m = Some(a.m);
    rc.n = Some(a.n);
    let mut manifest = RunManifest::new("cluster", &a.inputs, rc);
    manifest.label = Some(
        a.label
            .clone()
            .unwrap_or_else(|| inputs::file_label(&a.inputs[0])),
    );
    for (i, k) in out.iter().enumerate() {
        manifest.write_output(
            &kernel_name(out_dir, i, inputs::KERNEL_EXT),
            &encode_kernel(k),
        )?;
    }
    let after = substituted_table(&t, &map);
    let before_ratio = try_ratio(&t, cli);
    let after_ratio = try_ratio(&after, cli);
    manifest.result("channels", t.total() as f64);
    if let Some((r, bits)) = before_ratio {
        manifest.result("encoding_ratio", r);
        manifest.result("encoding_payload_bits", bits as f64);
    }
    if let Some((r, bits)) = after_ratio {
        manifest.result("clustering_ratio", r);
        manifest.result("clustering_payload_bits", bits as f64);
    }
    let node_usage = build_spec(&after, &cli.layout)
        .ok()
        .and_then(|s| s.node_usage(&after).ok());
    Ok(json!({
        "manifest": manifest,
        "config": { "m": a.m, "n": a.n },
        "substitution": SubstitutionReport::new(&t, &map),
        "ratio_before": before_ratio.map(|r| r.0),
        "ratio_after": after_ratio.map(|r| r.0),
        "node_usage_after": node_usage,
    }))
}

fn sweep(cli: &Cli, a: &ClusterArgs) -> Result<Value> {
    let loaded = inputs::load_kernels(&a.inputs)?;
    let kernels: Vec<BinaryKernel> = loaded.into_iter().map(|(_, k)| k).collect();
    let t = count_frequencies(&kernels).map_err(format_err)?;
    let mut grid = Vec::new();
    for &m in &a.m_values {
        for &n in &a.n_values {
            let map = build_substitution(&t, cluster_config(m, n)?);
            let after = substituted_table(&t, &map);
            grid.push(json!({
                "m": m,
                "n": n,
                "pairs": map.pairs().len(),
                "untouched": map.untouched().len(),
                "untouched_mass": map.untouched_mass(&t),
                "top32_after": after.topk_coverage(32),
                "ratio": try_ratio(&after, cli).map(|r| r.0),
            }));
        }
    }
    let mut rc = config(cli);
    rc.options.insert("m_values".into(), json!(a.m_values));
    rc.options.insert("n_values".into(), json!(a.n_values));
    let manifest = RunManifest::new("cluster-sweep", &a.inputs, rc);
    Ok(json!({
        "manifest": manifest,
        "ratio_before": try_ratio(&t, cli).map(|r| r.0),
        "grid": grid,
    }))
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<Outcome> {
    let kernel = AnyKernel::load(&a.kernel)?;
    let fm = load_feature_map(&a.input).map_err(|e| CliError::input(&a.input, e))?;
    let r = match &kernel {
        AnyKernel::Packed(p) => p.register_width,
        AnyKernel::Plain(_) => cli.register_width,
    };
    let x: BitFeatureMap = match fm {
        FeatureMap::Float(f) => binarize(&f, r).map_err(format_err)?,
        FeatureMap::Bits(b) if b.register_width() == r => b,
        FeatureMap::Bits(b) => {
            return Err(CliError::Format(format!(
                "feature map is packed at R={} but the kernel uses R={r}",
                b.register_width()
            )))
        }
    };
    let padding = a.padding.into();
    let packed = || -> Result<IntFeatureMap> {
        let p = match &kernel {
            AnyKernel::Packed(p) => p.clone(),
            AnyKernel::Plain(k) => channel_pack(k, r).map_err(format_err)?,
        };
        conv_packed(&p, &x, a.stride, padding).map_err(format_err)
    };
    let reference = || -> Result<IntFeatureMap> {
        conv_reference(&kernel.plain()?, &x, a.stride, padding).map_err(format_err)
    };
    let (mode, out, equal) = if a.mode.check {
        let p = packed()?;
        let eq = p == reference()?;
        ("check", p, Some(eq))
    } else if a.mode.reference {
        ("reference", reference()?, None)
    } else {
        ("packed", packed()?, None)
    };

    let mut rc = config(cli);
    rc.register_width = r;
    rc.options.insert("stride".into(), json!(a.stride));
    rc.options
        .insert("padding".into(), json!(format!("{:?}", a.padding)));
    rc.options.insert("mode".into(), json!(mode));
    let mut manifest = RunManifest::new("eval", &[&a.kernel, &a.input], rc);
    if let Some(path) = &a.output {
        manifest.write_output(path, &encode_output(&out))?;
    }
    let delta = match &a.baseline {
        None => Value::Null,
        Some(path) => {
            let base = decode_output(&inputs::read(path)?).map_err(|e| CliError::input(path, e))?;
            if base.dims() != out.dims() {
                return Err(CliError::Format(format!(
                    "baseline dims {:?} differ from output dims {:?}",
                    base.dims(),
                    out.dims()
                )));
            }
            let mut hist: BTreeMap<i32, u64> = BTreeMap::new();
            for (o, b) in out.data().iter().zip(base.data()) {
                *hist.entry(o - b).or_default() += 1;
            }
            let max_abs = hist.keys().map(|d| d.abs()).max().unwrap_or(0);
            let hist: BTreeMap<String, u64> =
                hist.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            json!({ "max_abs": max_abs, "histogram": hist })
        }
    };
    let (c, h, w) = out.dims();
    let json = json!({
        "manifest": manifest,
        "mode": mode,
        "dims": [c, h, w],
        "register_width": r,
        "equal": equal,
        "delta": delta,
    });
    if equal == Some(false) {
        return Ok(Outcome {
            json,
            text: None,
            exit_code: CliError::Check(String::new()).exit_code(),
        });
    }
    Ok(Outcome::ok(json))
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Usage(format!("--shape expects OUTxIN, got {s:?}"));
    let (o, i) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let o: usize = o.trim().parse().map_err(|_| bad())?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    if o == 0 || i == 0 {
        return Err(bad());
    }
    Ok((o, i))
}

fn set_sequences(sets: &[RegisterSet]) -> Vec<u16> {
    let mut out = Vec::new();
    for set in sets {
        for lane in 0..set.lanes {
            let mut idx = 0u16;
            for p in 0..9 {
                idx = (idx << 1) | lanes::get(&set.words[p], lane) as u16;
            }
            out.push(idx);
        }
    }
    out
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<Outcome> {
    let bytes = inputs::read(&a.input)?;
    let (spec, stream) = parse_compressed(&bytes).map_err(|e| CliError::input(&a.input, e))?;
    let shape = a.shape.as_deref().map(parse_shape).transpose()?;
    if let Some((o, i)) = shape {
        if o * i != stream.count as usize {
            return Err(CliError::Usage(format!(
                "--shape {o}x{i} does not match the {} sequences in the stream",
                stream.count
            )));
        }
    }
    let d = UnitParams::default();
    let params = UnitParams {
        register_width: cli.register_width,
        fetch_granularity: a.fetch_granularity.unwrap_or(d.fetch_granularity),
        input_buffer_size: a.input_buffer.unwrap_or(d.input_buffer_size),
        uncompressed_table_size: a.table_bytes.unwrap_or(d.uncompressed_table_size),
        register_file_size: a.register_file.unwrap_or(d.register_file_size),
        mem_latency: a.mem_latency.unwrap_or(d.mem_latency),
        consumer_cycles_per_set: a.consumer_cycles.unwrap_or(d.consumer_cycles_per_set),
        ..d
    };
    let (mem, at) = stage(&spec, &stream);
    let unit = DecodingUnit::lddu(at, mem, params).map_err(|fault| CliError::Fault { fault })?;
    let (_, sets, report) = unit
        .run_to_completion()
        .map_err(|fault| CliError::Fault { fault })?;

    let sim: Vec<u64> = sets.iter().flat_map(|s| s.flat()).collect();
    let decoded = decode(&stream, &spec);
    let (oracle_ok, mean_ok, analytic_mean, failure) = match &decoded {
        Err(e) => (
            false,
            false,
            None,
            Some(format!("software decode failed: {e}")),
        ),
        Ok(seqs) if seqs.is_empty() => (sim.is_empty(), true, None, None),
        Ok(seqs) => {
            let idx: Vec<u16> = seqs.iter().map(|s| s.index()).collect();
            let k = BinaryKernel::from_indices(1, idx.len(), &idx).map_err(format_err)?;
            let oracle = channel_pack(&k, params.register_width)
                .map_err(format_err)?
                .words;
            let t = FrequencyTable::from_sequences(seqs.iter()).map_err(format_err)?;
            let mean = spec.mean_code_length(&t).map_err(format_err)?;
            let eq = oracle == sim;
            let mean_eq = mean == report.mean_bits_per_sequence;
            let failure = (!eq)
                .then(|| {
                    "packed registers differ from channel_pack of the software decode".to_string()
                })
                .or_else(|| {
                    (!mean_eq)
                        .then(|| "mean bits per sequence differ from the analytic mean".into())
                });
            (eq, mean_eq, Some(mean), failure)
        }
    };
    let pass = oracle_ok && mean_ok;

    let mut rc = config(cli);
    rc.options.insert(
        "unit".into(),
        serde_json::to_value(params).expect("params serialize"),
    );
    if let Some(s) = &a.shape {
        rc.options.insert("shape".into(), json!(s));
    }
    let mut manifest = RunManifest::new("simulate", &[&a.input], rc);
    if let Some(path) = &a.output {
        let seqs = set_sequences(&sets);
        if !seqs.is_empty() {
            let (o, i) = shape.unwrap_or((1, seqs.len()));
            let k = BinaryKernel::from_indices(o, i, &seqs).map_err(format_err)?;
            let p = channel_pack(&k, params.register_width).map_err(format_err)?;
            manifest.write_output(path, &encode_packed(&p))?;
        }
    }
    let json = json!({
        "manifest": manifest,
        "status": if pass { "PASS" } else { "FAIL" },
        "failure": failure,
        "sequences": stream.count,
        "register_sets": sets.len(),
        "params": params,
        "report": report,
        "analytic_mean_code_length": analytic_mean,
    });
    Ok(Outcome {
        json,
        text: None,
        exit_code: if pass { 0 } else { 1 },
    })
}

#[derive(Debug, Default, Clone, Copy)]
struct Column {
    ratio: f64,
    channels: f64,
    bits: f64,
}

#[derive(Debug, Serialize)]
struct ReportRow {
    label: String,
    encoding_ratio: Option<f64>,
    clustering_ratio: Option<f64>,
}

const COLUMNS: [&str; 2] = ["encoding", "clustering"];

fn report(cli: &Cli, a: &ReportArgs) -> Result<Outcome> {
    let shares: BTreeMap<String, f64> = match &a.shares {
        Some(p) => serde_json::from_slice(&inputs::read(p)?).map_err(|e| CliError::input(p, e))?,
        None => storage_shares(),
    };
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, usize), Column> = BTreeMap::new();
    for path in &a.inputs {
        let v: Value =
            serde_json::from_slice(&inputs::read(path)?).map_err(|e| CliError::input(path, e))?;
        let m: RunManifest = serde_json::from_value(v.get("manifest").cloned().unwrap_or(v))
            .map_err(|e| CliError::input(path, format!("invalid manifest: {e}")))?;
        let label = m
            .label
            .clone()
            .ok_or_else(|| CliError::input(path, "manifest has no label"))?;
        let mut found = false;
        for (ci, col) in COLUMNS.iter().enumerate() {
            let Some(&ratio) = m.results.get(&format!("{col}_ratio")) else {
                continue;
            };
            let get = |key: &str| {
                m.results
                    .get(key)
                    .copied()
                    .ok_or_else(|| CliError::input(path, format!("manifest results lack {key:?}")))
            };
            let cell = Column {
                ratio,
                channels: get("channels")?,
                bits: get(&format!("{col}_payload_bits"))?,
            };
            cells.insert((label.clone(), ci), cell);
            found = true;
        }
        if !found {
            return Err(CliError::input(
                path,
                "manifest has no encoding_ratio or clustering_ratio",
            ));
        }
        if !order.contains(&label) {
            order.push(label);
        }
    }

    let rows: Vec<ReportRow> = order
        .iter()
        .map(|l| ReportRow {
            label: l.clone(),
            encoding_ratio: cells.get(&(l.clone(), 0)).map(|c| c.ratio),
            clustering_ratio: cells.get(&(l.clone(), 1)).map(|c| c.ratio),
        })
        .collect();
    let mut conv = [None, None];
    let mut model = [None, None];
    for ci in 0..COLUMNS.len() {
        let (ch, bits) = cells
            .iter()
            .filter(|((_, c), _)| *c == ci)
            .fold((0.0, 0.0), |(ch, b), (_, v)| (ch + v.channels, b + v.bits));
        if bits > 0.0 {
            let r = BASELINE_BITS as f64 * ch / bits;
            conv[ci] = Some(r);
            model[ci] = Some(model_ratio(&shares, r).map_err(format_err)?);
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(format_err)?;
    }
    w.serialize(ReportRow {
        label: "model".into(),
        encoding_ratio: model[0],
        clustering_ratio: model[1],
    })
    .map_err(format_err)?;
    let csv_bytes = w.into_inner().map_err(format_err)?;

    let mut rc = config(cli);
    rc.options.insert("shares".into(), json!(shares));
    let mut manifest = RunManifest::new("report", &a.inputs, rc);
    let text = match &a.csv {
        Some(p) => {
            manifest.write_output(p, &csv_bytes)?;
            None
        }
        None => Some(String::from_utf8(csv_bytes).expect("csv is utf-8")),
    };
    let json = json!({
        "manifest": manifest,
        "rows": rows,
        "conv3x3": { "encoding": conv[0], "clustering": conv[1] },
        "model": { "encoding": model[0], "clustering": model[1] },
    });
    Ok(Outcome {
        json,
        text,
        exit_code: 0,
    })
}

/// Serializes a report the way the binary writes it.
pub fn render(json: &Value) -> String {
    let mut s = serde_json::to_string_pretty(json).expect("json values serialize");
    s.push('\n');
    s
}

pub fn write_json(path: &Path, json: &Value) -> Result<()> {
    fs::write(path, render(json)).map_err(|e| CliError::input(path, e))
}
