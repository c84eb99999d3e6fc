//! End-to-end acceptance criteria. Each prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use bkc_core::bconv::{conv_packed, conv_reference, BitFeatureMap, Padding};
use bkc_core::bintensor::{channel_pack, BinaryKernel};
use bkc_core::cluster::{build_substitution, hamming, substituted_table, ClusterConfig};
use bkc_core::codec::{
    build_spec, decode, encode, model_ratio, parse_compressed, ratio_from_node_usage,
    read_compressed, write_compressed, HuffmanSpec, Layout,
};
use bkc_core::dusim::{stage, DecodingUnit, UnitParams};
use bkc_core::profiles::{block_profile, storage_shares, BLOCKS};
use bkc_core::stats::{count_frequencies, synth_kernels, FrequencyTable};
use common::{bkc, p};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Mean codeword length from first principles: 9 bits over the
/// usage-weighted codeword length.
fn oracle_ratio(fractions: &[f64], lengths: &[u32]) -> f64 {
    let mut mean = 0.0;
    for i in 0..fractions.len() {
        mean += fractions[i] * lengths[i] as f64;
    }
    9.0 / mean
}

fn criterion_1() -> Outcome {
    let f = [0.46, 0.24, 0.23, 0.05];
    let l = [6, 8, 9, 12];
    let r = ratio_from_node_usage(&f, &l);
    ensure(r == oracle_ratio(&f, &l), || {
        format!("{r} differs from oracle")
    })?;
    ensure((r - 9.0 / 7.35).abs() < 1e-12, || format!("{r} != 9/7.35"))?;
    ensure((1.18..=1.25).contains(&r), || {
        format!("{r} outside 1.18..=1.25")
    })?;
    let lens: Vec<u32> = Layout::default()
        .nodes()
        .iter()
        .map(|n| n.codeword_len())
        .collect();
    ensure(lens == l, || format!("default layout lengths {lens:?}"))?;
    Ok(format!("ratio {r:.4}"))
}

fn criterion_2() -> Outcome {
    let f = [0.65, 0.25, 0.08, 0.006];
    let l = [6, 8, 9, 12];
    let r = ratio_from_node_usage(&f, &l);
    ensure(r == oracle_ratio(&f, &l), || {
        format!("{r} differs from oracle")
    })?;
    ensure((r - 1.34).abs() <= 0.05, || {
        format!("{r} not within 1.34 +- 0.05")
    })?;
    Ok(format!("ratio {r:.4}"))
}

fn criterion_3() -> Outcome {
    let shares = storage_shares();
    let share = shares["conv3x3"];
    ensure(share == 0.68, || format!("conv3x3 share {share}"))?;
    let r = model_ratio(&shares, 1.32).map_err(|e| e.to_string())?;
    let oracle = 1.0 / (share / 1.32 + 1.0 - share);
    ensure((r - oracle).abs() < 1e-12, || {
        format!("{r} vs oracle {oracle}")
    })?;
    ensure((r - 1.20).abs() <= 0.01, || {
        format!("{r} not within 1.20 +- 0.01")
    })?;
    Ok(format!("model ratio {r:.4}"))
}

fn criterion_4() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut fails = Vec::new();
    let mut worst_cov: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for b in BLOCKS.iter() {
        let dir = tmp.path().join(format!("b{}", b.block));
        let s = bkc([
            "synth",
            "--block",
            &b.block.to_string(),
            "--channels",
            &(1usize << 17).to_string(),
            "-o",
            &p(&dir),
        ]);
        if s.code != 0 {
            return Err(format!("synth block {}: {}", b.block, s.stderr));
        }
        let kernels: Vec<BinaryKernel> = std::fs::read_dir(&dir)
            .map_err(|e| e.to_string())?
            .map(|e| common::read_kernel(&e.unwrap().path()))
            .collect();
        let t = count_frequencies(&kernels).map_err(|e| e.to_string())?;
        ensure(t.total() >= 1 << 17, || {
            format!("block {} has {} channels", b.block, t.total())
        })?;
        let d64 = (t.topk_coverage(64) - b.top64).abs() * 100.0;
        let d256 = (t.topk_coverage(256) - b.top256).abs() * 100.0;
        worst_cov = worst_cov.max(d64).max(d256);

        let c = bkc(["compress", &p(&dir), "-o", &p(&dir.with_extension("bnc"))]);
        if c.code != 0 {
            return Err(format!("compress block {}: {}", b.block, c.stderr));
        }
        let ratio = c.json()["aggregate"]["ratio"].as_f64().unwrap();
        let dr = (ratio - b.encoding_ratio).abs();
        worst_ratio = worst_ratio.max(dr);
        if d64 > 1.5 || d256 > 1.5 {
            fails.push(format!(
                "block {} coverage off by {:.2}/{:.2} pp",
                b.block, d64, d256
            ));
        }
        if dr > 0.06 {
            fails.push(format!(
                "block {} ratio {ratio:.3} vs {:.2} (off {dr:.3})",
                b.block, b.encoding_ratio
            ));
        }
    }
    let summary = format!("max coverage error {worst_cov:.2} pp, max ratio error {worst_ratio:.3}");
    if fails.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", fails.join("; ")))
    }
}

fn layouts() -> Vec<Layout> {
    [
        "0:5,10:6,110:6,1110:8",
        "0:4,10:6,110:7,111:8",
        "00:5,01:6,10:7,11:8",
        "0:8,1:8",
        "0:9",
        "1:2,01:5,001:7,000:9",
        "0:3,10:5,11:9",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect()
}

fn random_kernel(rng: &mut ChaCha8Rng, capacity: usize) -> BinaryKernel {
    let out = rng.gen_range(1..=8);
    let inp = rng.gen_range(1..=96);
    let mut alphabet: Vec<u16> = (0..512).collect();
    alphabet.shuffle(rng);
    alphabet.truncate(rng.gen_range(1..=capacity.min(512)));
    let skew = rng.gen_range(0.0..3.0f64);
    let idx: Vec<u16> = (0..out * inp)
        .map(|_| {
            let u: f64 = rng.gen();
            alphabet[((u.powf(1.0 + skew)) * alphabet.len() as f64) as usize % alphabet.len()]
        })
        .collect();
    BinaryKernel::from_indices(out, inp, &idx).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layouts = layouts();
    let mut checked = 0;
    for case in 0..1000 {
        let layout = &layouts[case % layouts.len()];
        let k = random_kernel(&mut rng, layout.capacity());
        let t = count_frequencies(std::slice::from_ref(&k)).map_err(|e| e.to_string())?;
        let spec = build_spec(&t, layout).map_err(|e| format!("case {case}: {e}"))?;
        let stream = encode(std::slice::from_ref(&k), &spec).map_err(|e| e.to_string())?;
        let file = write_compressed(&spec, &stream);
        let (spec2, stream2) = read_compressed(&file).map_err(|e| format!("case {case}: {e}"))?;
        ensure(spec2 == spec, || {
            format!("case {case}: spec block did not round-trip")
        })?;
        let decoded = decode(&stream2, &spec2).map_err(|e| format!("case {case}: {e}"))?;
        ensure(decoded == k.sequences(), || {
            format!("case {case}: decode(encode(K)) != K")
        })?;

        let (_, raw) = parse_compressed(&file).map_err(|e| e.to_string())?;
        let r = [64, 128][case % 2];
        let (mem, at) = stage(&spec, &raw);
        let params = UnitParams {
            register_width: r,
            ..UnitParams::default()
        };
        let unit = DecodingUnit::lddu(at, mem, params).map_err(|e| format!("case {case}: {e}"))?;
        let (_, sets, _) = unit
            .run_to_completion()
            .map_err(|e| format!("case {case}: {e}"))?;
        let got: Vec<u64> = sets.iter().flat_map(|s| s.flat()).collect();
        let idx: Vec<u16> = decoded.iter().map(|s| s.index()).collect();
        let row = BinaryKernel::from_indices(1, idx.len(), &idx).unwrap();
        let want = channel_pack(&row, r).map_err(|e| e.to_string())?.words;
        ensure(got == want, || {
            format!("case {case}: ldps concatenation != channel_pack(decode)")
        })?;
        checked += 1;
    }
    Ok(format!("{checked} kernels over {} layouts", layouts.len()))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    for case in 0..240 {
        let cin = rng.gen_range(1..=128);
        let cout = rng.gen_range(1..=8);
        let h = rng.gen_range(1..=16);
        let w = rng.gen_range(1..=16);
        let stride = [1, 2][case % 2];
        let padding = if case % 3 == 0 {
            Padding::Valid
        } else {
            Padding::MinusOne
        };
        if padding == Padding::Valid && (h < 3 || w < 3) {
            continue;
        }
        let r = [64, 128, 256][case % 3];
        let idx: Vec<u16> = (0..cout * cin).map(|_| rng.gen_range(0..512)).collect();
        let k = BinaryKernel::from_indices(cout, cin, &idx).unwrap();
        let x =
            BitFeatureMap::from_fn(cin, h, w, r, |_, _, _| rng.gen()).map_err(|e| e.to_string())?;
        let packed = channel_pack(&k, r).map_err(|e| e.to_string())?;
        let a =
            conv_packed(&packed, &x, stride, padding).map_err(|e| format!("case {case}: {e}"))?;
        let b = conv_reference(&k, &x, stride, padding).map_err(|e| format!("case {case}: {e}"))?;
        ensure(a == b, || format!("case {case}: packed != reference"))?;
        checked += 1;
    }
    ensure(checked >= 200, || format!("only {checked} instances"))?;
    Ok(format!("{checked} instances"))
}

fn random_table(rng: &mut ChaCha8Rng) -> FrequencyTable {
    let mut counts = vec![0u64; 512];
    let occupied = rng.gen_range(2..=416);
    let mut seqs: Vec<usize> = (0..512).collect();
    seqs.shuffle(rng);
    for (rank, &s) in seqs[..occupied].iter().enumerate() {
        counts[s] = 1 + (rng.gen_range(1.0..1e5f64) / (1.0 + rank as f64)) as u64;
    }
    FrequencyTable::from_counts(&counts).unwrap()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layout = Layout::default();
    let mut pairs_seen = 0;
    for case in 0..300 {
        let t = random_table(&mut rng);
        let cfg = ClusterConfig::new(rng.gen_range(1..=128), rng.gen_range(1..=416))
            .map_err(|e| e.to_string())?;
        let map = build_substitution(&t, cfg);
        for (&sa, &sb) in map.pairs() {
            ensure(hamming(sa, sb) == 1, || {
                format!("case {case}: {sa:?} -> {sb:?} not at distance 1")
            })?;
            ensure(t.count(sa) <= t.count(sb), || {
                format!("case {case}: frequency decreases")
            })?;
            pairs_seen += 1;
        }
        let after = substituted_table(&t, &map);
        let before_len = build_spec(&t, &layout)
            .and_then(|s| s.mean_code_length(&t))
            .map_err(|e| e.to_string())?;
        let after_len = build_spec(&after, &layout)
            .and_then(|s| s.mean_code_length(&after))
            .map_err(|e| e.to_string())?;
        ensure(after_len <= before_len + 1e-12, || {
            format!("case {case}: mean length {before_len} -> {after_len}")
        })?;
    }

    for case in 0..60 {
        let cin = rng.gen_range(1..=48);
        let cout = rng.gen_range(1..=4);
        let idx: Vec<u16> = (0..cout * cin).map(|_| rng.gen_range(0..512)).collect();
        let k = BinaryKernel::from_indices(cout, cin, &idx).unwrap();
        let (o, i) = (rng.gen_range(0..cout), rng.gen_range(0..cin));
        let mut k2 = k.clone();
        k2.set(o, i, k.get(o, i).flip(rng.gen_range(0..9)));
        let (h, w) = (rng.gen_range(3..=12), rng.gen_range(3..=12));
        let x = BitFeatureMap::from_fn(cin, h, w, 64, |_, _, _| rng.gen()).unwrap();
        for padding in [Padding::Valid, Padding::MinusOne] {
            let a = conv_reference(&k, &x, 1, padding).unwrap();
            let b = conv_reference(&k2, &x, 1, padding).unwrap();
            for (j, (u, v)) in a.data().iter().zip(b.data()).enumerate() {
                ensure([-2, 0, 2].contains(&(v - u)), || {
                    format!("case {case}: output {j} moved by {}", v - u)
                })?;
            }
        }
    }
    Ok(format!(
        "300 tables, {pairs_seen} pairs, 60 substitution perturbations"
    ))
}

fn criterion_8() -> Outcome {
    let mut min_overlap = f64::INFINITY;
    for b in BLOCKS.iter() {
        let profile = block_profile(b.block).unwrap();
        let kernels =
            synth_kernels(&profile.synth_config(1 << 15, 8)).map_err(|e| e.to_string())?;
        let t = count_frequencies(&kernels).map_err(|e| e.to_string())?;
        let spec: HuffmanSpec = build_spec(&t, &Layout::default()).map_err(|e| e.to_string())?;
        let stream = encode(&kernels, &spec).map_err(|e| e.to_string())?;
        let mut reports = Vec::new();
        for _ in 0..2 {
            let (mem, at) = stage(&spec, &stream);
            let unit =
                DecodingUnit::lddu(at, mem, UnitParams::default()).map_err(|e| e.to_string())?;
            let (_, _, report) = unit.run_to_completion().map_err(|e| e.to_string())?;
            reports.push(report);
        }
        ensure(reports[0] == reports[1], || {
            format!("block {}: cycle counts differ between runs", b.block)
        })?;
        let r = &reports[0];
        let oracle = r.hidden_fetch_cycles as f64 / r.fetch_cycles as f64;
        ensure((r.overlap - oracle).abs() < 1e-12, || {
            format!("block {}: overlap {} vs {oracle}", b.block, r.overlap)
        })?;
        ensure(r.overlap > 0.5, || {
            format!("block {}: overlap {:.3}", b.block, r.overlap)
        })?;
        min_overlap = min_overlap.min(r.overlap);
    }
    Ok(format!(
        "min overlap {min_overlap:.3} over {} blocks, deterministic",
        BLOCKS.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("analytic encoding ratio", criterion_1),
        ("analytic clustering ratio", criterion_2),
        ("whole-model ratio", criterion_3),
        (
            "synthetic coverage and encoding ratio per block",
            criterion_4,
        ),
        ("lossless round-trip and simulator equivalence", criterion_5),
        ("packed convolution matches reference", criterion_6),
        ("clustering properties", criterion_7),
        ("fetch/decode overlap and determinism", criterion_8),
    ];
    let mut failed = 0;
    let mut timings = BTreeMap::new();
    for (n, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        timings.insert(n + 1, start.elapsed());
        match outcome {
            Ok(detail) => println!(
                "PASS criterion {} ({name}): {detail} [{:.2?}]",
                n + 1,
                timings[&(n + 1)]
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "FAIL criterion {} ({name}): {detail} [{:.2?}]",
                    n + 1,
                    timings[&(n + 1)]
                );
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
