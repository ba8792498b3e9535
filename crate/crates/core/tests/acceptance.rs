//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ubnn::bitpack::{binary_dot, dot_words, BitStream, PackedBitTensor};
use ubnn::layers::{
    conv1d_binary_with, conv1d_int8_with, fold_batchnorm_binary, maxpool_binary, BatchNorm, BinaryConvLayer, Int8ConvLayer,
    Int8Tensor, NoProbe, OpCounter, ThresholdSpec, Unroll,
};
use ubnn::model::{conv_weight_footprint, format, Architecture, InputDomain, InputSpec, OpCountReport};
use ubnn::oracle::forward_trace_reference;
use ubnn::rf::{self, extract_features, FeatureQuantizer, Forest, Tree};
use ubnn::synth;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Runner {
    failed: usize,
}

impl Runner {
    fn check(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > budget => Err(format!("{detail}; took {:.2?}, budget {budget:?}", took)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({took:.2?})"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL  {name}: {detail} ({took:.2?})");
            }
        }
    }
}

fn pm_dot(a: &[bool], b: &[bool]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| (if x { 1 } else { -1 }) * (if y { 1 } else { -1 })).sum()
}

fn bits_of(v: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| v >> (n - 1 - i) & 1 == 1).collect()
}

/// Left-aligned single word with garbage below the `n` live bits.
fn word_of(v: u32, n: usize, garbage: u32) -> u32 {
    if n == 0 {
        garbage
    } else {
        (v << (32 - n)) | (garbage & (u32::MAX >> n))
    }
}

fn binary_dot_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut exhaustive = 0u64;
    // every pair for small N; above that, every xnor pattern with a random
    // embedding (the dot depends on the pair only through a xor b)
    for n in 0..=16usize {
        let full = 1u32.checked_shl(n as u32).unwrap_or(0).wrapping_sub(1);
        if n <= 10 {
            for x in 0..=full {
                for y in 0..=full {
                    let want = pm_dot(&bits_of(x, n), &bits_of(y, n));
                    let got = dot_words(&[word_of(x, n, rng.gen())], &[word_of(y, n, rng.gen())], n);
                    ensure(got == want, || format!("N={n} a={x:#x} b={y:#x}: {got} != {want}"))?;
                    exhaustive += 1;
                }
            }
        } else {
            for d in 0..=full {
                let x = rng.gen::<u32>() & full;
                let y = x ^ d;
                let want = pm_dot(&bits_of(x, n), &bits_of(y, n));
                let got = dot_words(&[word_of(x, n, rng.gen())], &[word_of(y, n, rng.gen())], n);
                ensure(got == want, || format!("N={n} a={x:#x} b={y:#x}: {got} != {want}"))?;
                exhaustive += 1;
            }
        }
    }
    for i in 0..100_000 {
        let n = if i % 10 == 0 { rng.gen_range(0..=4096) } else { rng.gen_range(0..=256) };
        let a: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let got = binary_dot(&BitStream::from_bits(a.iter().copied()), &BitStream::from_bits(b.iter().copied()))
            .map_err(|e| e.to_string())?;
        let want = pm_dot(&a, &b);
        ensure(got == want, || format!("random pair {i}, N={n}: {got} != {want}"))?;
    }
    Ok(format!("{exhaustive} small-N pairs, 100000 random pairs up to N=4096"))
}

fn footprint_reproduction() -> Outcome {
    let (raw, _, padded) = conv_weight_footprint(8, 4, 7);
    ensure(raw == 224, || format!("raw {raw} bits"))?;
    ensure(padded == 7168, || format!("padded {padded} bits"))?;
    ensure(padded - raw == 31 * raw, || "overhead is not 31x".into())?;

    let input = InputSpec {
        timesteps: 16,
        channels: 8,
        domain: InputDomain::Binary,
    };
    let arch: Architecture = "Conv(4,7), FC".parse().map_err(|e| format!("{e}"))?;
    let net = arch.instantiate(input, 2).map_err(|e| e.to_string())?;
    let layer = net.footprint().layers[0];
    ensure(layer.raw_weight_bits == 224 && layer.padded32_weight_bits == 7168, || format!("{layer:?}"))?;
    ensure(layer.padding_overhead() == 31.0, || format!("overhead {}", layer.padding_overhead()))?;
    Ok("224 raw bits, 7168 padded bits, 31x overhead".into())
}

fn threshold_folding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut negative = 0;
    let mut checked = 0u64;
    for draw in 0..10_000 {
        let n: i64 = rng.gen_range(1..=512);
        let gamma = {
            let g: f64 = rng.gen_range(0.01..4.0);
            if rng.gen() {
                g
            } else {
                -g
            }
        };
        let bn = if draw % 5 == 0 {
            // boundary exactly on an attainable accumulator value
            let p: i64 = rng.gen_range(0..=n);
            BatchNorm {
                mu: (2 * p - n) as f64,
                sigma: rng.gen_range(0.1..5.0),
                gamma,
                beta: 0.0,
            }
        } else {
            BatchNorm {
                mu: rng.gen_range(-1.2..1.2) * n as f64,
                sigma: rng.gen_range(0.01..10.0),
                gamma,
                beta: rng.gen_range(-3.0..3.0),
            }
        };
        negative += (gamma < 0.0) as usize;
        let spec = fold_batchnorm_binary(&bn, n as usize, 1).map_err(|e| e.to_string())?;
        for p in 0..=n {
            let y = (2 * p - n) as f64;
            let want = bn.gamma * (y - bn.mu) / bn.sigma + bn.beta >= 0.0;
            ensure(spec.fires(p) == want, || format!("draw {draw}: {bn:?} N={n} P={p}"))?;
            checked += 1;
        }
    }
    Ok(format!("10000 draws ({negative} with gamma < 0), {checked} accumulator values"))
}

fn end_to_end() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut stages = 0;
    for i in 0..1000 {
        let s = synth::random_network(&mut rng);
        let x = synth::random_input(&mut rng, &s.network);
        let packed = s.network.classify(&x).map_err(|e| e.to_string())?;
        let want = forward_trace_reference(&s.reference, &synth::dense_input(&s.network, &x)).map_err(|e| e.to_string())?;
        ensure(packed.stages.len() == want.stages.len(), || format!("network {i}: stage count"))?;
        for (k, (got, exp)) in packed.stages.iter().zip(&want.stages).enumerate() {
            let got: Vec<i64> = got.unpack().into_iter().map(i64::from).collect();
            ensure(got == exp.data, || format!("network {i} ({}): stage {k} differs", s.network.architecture()))?;
            stages += 1;
        }
        let scores: Vec<f64> = packed.scores.iter().map(|&v| v as f64 / 65536.0).collect();
        ensure(scores == want.scores, || format!("network {i}: scores {scores:?} vs {:?}", want.scores))?;
        ensure(packed.class == want.class, || format!("network {i}: class {} vs {}", packed.class, want.class))?;
    }
    Ok(format!("1000 networks, {stages} layer boundaries, argmax equal"))
}

fn random_filters(rng: &mut ChaCha8Rng, n: usize, c_out: usize) -> Vec<BitStream> {
    (0..c_out).map(|_| synth::random_bits(rng, n)).collect()
}

fn random_thresholds(rng: &mut ChaCha8Rng, lo: i32, hi: i32, c_out: usize) -> Vec<ThresholdSpec> {
    (0..c_out)
        .map(|_| {
            let t = rng.gen_range(lo..=hi);
            if rng.gen() {
                ThresholdSpec::geq(t)
            } else {
                ThresholdSpec::leq(t)
            }
        })
        .collect()
}

fn packed_input(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Result<PackedBitTensor, String> {
    PackedBitTensor::from_stream(synth::random_bits(rng, t * c), t, c).map_err(|e| e.to_string())
}

fn fusion_and_alignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unrolls = [Unroll::None, Unroll::TwoByTwo];
    for i in 0..500 {
        let c_in = synth::CHANNELS[rng.gen_range(0..6)];
        let c_out = synth::CHANNELS[rng.gen_range(0..6)];
        let k = synth::KERNELS[rng.gen_range(0..5)];
        let p = rng.gen_range(2..=8);
        let t = rng.gen_range(k + p - 1..=k + 80);
        let n = k * c_in;
        let filters = random_filters(&mut rng, n, c_out);
        let th = random_thresholds(&mut rng, 0, n as i32 + 1, c_out);
        let plain = BinaryConvLayer::from_filters(c_in, k, &filters, th.clone(), None).map_err(|e| e.to_string())?;
        let fused = BinaryConvLayer::from_filters(c_in, k, &filters, th, Some(p)).map_err(|e| e.to_string())?;
        let x = packed_input(&mut rng, t, c_in)?;
        for unroll in unrolls {
            let conv = conv1d_binary_with(&x, &plain, unroll, &mut NoProbe).map_err(|e| e.to_string())?;
            let separate = maxpool_binary(&conv, p, p).map_err(|e| e.to_string())?;
            let together = conv1d_binary_with(&x, &fused, unroll, &mut NoProbe).map_err(|e| e.to_string())?;
            ensure(together == separate, || format!("binary case {i}: C_in={c_in} C_out={c_out} K={k} pool={p} T={t}"))?;
        }

        // int8 first layer
        let c8 = rng.gen_range(1..=4);
        let t8 = rng.gen_range(k + p - 1..=k + 40);
        let filters = random_filters(&mut rng, k * c8, c_out);
        let bound = 127 * (k * c8) as i32;
        let th = random_thresholds(&mut rng, -bound / 4, bound / 4, c_out);
        let plain = Int8ConvLayer::from_filters(c8, k, &filters, th.clone(), None).map_err(|e| e.to_string())?;
        let fused = Int8ConvLayer::from_filters(c8, k, &filters, th, Some(p)).map_err(|e| e.to_string())?;
        let data: Vec<i8> = (0..t8 * c8).map(|_| rng.gen()).collect();
        let x8 = Int8Tensor::new(data, t8, c8).map_err(|e| e.to_string())?;
        let conv = conv1d_int8_with(&x8, &plain, &mut NoProbe).map_err(|e| e.to_string())?;
        let separate = maxpool_binary(&conv, p, p).map_err(|e| e.to_string())?;
        let together = conv1d_int8_with(&x8, &fused, &mut NoProbe).map_err(|e| e.to_string())?;
        ensure(together == separate, || format!("int8 case {i}: C_in={c8} K={k} pool={p}"))?;
    }

    // a prefix of `o` timesteps shifts the window start by o * C_in bits;
    // offsets 0..=32 reach every bit position within a word
    let mut offsets = 0;
    for i in 0..200 {
        let c_in = synth::CHANNELS[rng.gen_range(0..6)];
        let c_out = synth::CHANNELS[rng.gen_range(0..6)];
        let k = synth::KERNELS[rng.gen_range(0..5)];
        let t = rng.gen_range(k..=k + 40);
        let n = k * c_in;
        let filters = random_filters(&mut rng, n, c_out);
        let th = random_thresholds(&mut rng, 0, n as i32 + 1, c_out);
        let layer = BinaryConvLayer::from_filters(c_in, k, &filters, th, None).map_err(|e| e.to_string())?;
        let x = packed_input(&mut rng, t, c_in)?.unpack();
        let base = conv1d_binary_with(&PackedBitTensor::pack(&x, t, c_in).map_err(|e| e.to_string())?, &layer, Unroll::TwoByTwo, &mut NoProbe)
            .map_err(|e| e.to_string())?
            .unpack();
        let t_out = t - k + 1;
        for o in 0..=32usize {
            let mut shifted: Vec<i8> = (0..o * c_in).map(|_| if rng.gen() { 1 } else { -1 }).collect();
            shifted.extend_from_slice(&x);
            let xs = PackedBitTensor::pack(&shifted, t + o, c_in).map_err(|e| e.to_string())?;
            for unroll in unrolls {
                let out = conv1d_binary_with(&xs, &layer, unroll, &mut NoProbe).map_err(|e| e.to_string())?.unpack();
                ensure(out[o * c_out..] == base[..], || format!("alignment case {i}: C_in={c_in} K={k} offset {o}"))?;
                ensure(out.len() == (t_out + o) * c_out, || "output length".into())?;
            }
            offsets += 1;
        }
    }
    Ok(format!("1000 fused/unfused layers, {offsets} embedded offsets"))
}

fn recursive_votes(trees: &[Tree], x: &[i8], n_classes: usize) -> Vec<u32> {
    fn walk<'a>(t: &'a Tree, x: &[i8]) -> &'a [u8] {
        match t {
            Tree::Leaf(p) => p,
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature as usize] <= *threshold {
                    walk(left, x)
                } else {
                    walk(right, x)
                }
            }
        }
    }
    let mut v = vec![0u32; n_classes];
    for t in trees {
        for (s, &p) in v.iter_mut().zip(walk(t, x)) {
            *s += p as u32;
        }
    }
    v
}

fn argmax_first(v: &[u32]) -> usize {
    let best = *v.iter().max().expect("classes");
    v.iter().position(|&x| x == best).expect("present")
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

fn feature_definition(window: &[i32]) -> Vec<BigRational> {
    let mut out = Vec::new();
    for axis in 0..3 {
        let xs: Vec<i64> = (0..32).map(|t| window[t * 3 + axis] as i64).collect();
        let sum = xs.iter().fold(int(0), |acc, &v| acc + int(v));
        let sq = xs.iter().fold(int(0), |acc, &v| acc + int(v) * int(v));
        let mean = sum / int(32);
        let var = sq.clone() / int(32) - mean.clone() * mean.clone();
        let max = *xs.iter().max().expect("window");
        let min = *xs.iter().min().expect("window");
        let zc = xs.windows(2).filter(|w| (w[0] < 0 && w[1] > 0) || (w[0] > 0 && w[1] < 0)).count() as i64;
        out.extend([mean, var, sq, int(max), int(min), int(max - min), int(zc)]);
    }
    out
}

fn rf_parity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut vectors = 0;
    let mut biggest = (0, 0);
    for f in 0..20 {
        let n_classes = rng.gen_range(2..=8);
        let n_features = if f % 2 == 0 { rf::N_FEATURES } else { rng.gen_range(1..=40) };
        let trees = synth::random_trees(&mut rng, 64, 12, n_features, n_classes);
        let forest =
            Forest::from_trees(&trees, n_classes, n_features, FeatureQuantizer::identity(n_features)).map_err(|e| e.to_string())?;
        ensure(forest.roots().len() == trees.len(), || "root count".into())?;
        let depth = trees.iter().map(Tree::depth).max().unwrap_or(0);
        ensure(depth <= 12, || format!("depth {depth}"))?;
        biggest = biggest.max((trees.len(), forest.nodes().len()));
        for _ in 0..500 {
            let x: Vec<i8> = (0..n_features).map(|_| rng.gen()).collect();
            let want = recursive_votes(&trees, &x, n_classes);
            let got = forest.votes(&x).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("forest {f}: votes {got:?} vs {want:?}"))?;
            let class = forest.predict(&x).map_err(|e| e.to_string())?;
            ensure(class == argmax_first(&want), || format!("forest {f}: class {class}"))?;
            vectors += 1;
        }
    }
    for i in 0..10_000 {
        let bound = [128, 2048, 32768, 1 << 20][i % 4];
        let w: Vec<i32> = (0..96).map(|_| rng.gen_range(-bound..=bound)).collect();
        let got = extract_features(&w).map_err(|e| e.to_string())?;
        for (j, (g, want)) in got.iter().zip(feature_definition(&w)).enumerate() {
            let g = BigRational::from_float(*g).ok_or("non-finite feature")?;
            ensure(g == want, || format!("window {i}: feature {j}"))?;
        }
    }
    Ok(format!(
        "{vectors} vectors over 20 forests (up to {} trees, {} nodes); 10000 windows",
        biggest.0, biggest.1
    ))
}

fn format_stability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let net = synth::random_network(&mut rng).network;
        let bytes = format::to_bytes(&net).map_err(|e| e.to_string())?;
        let back = format::from_bytes(&bytes).map_err(|e| format!("network {i}: {e}"))?;
        ensure(back == net, || format!("network {i}: loaded network differs"))?;
        ensure(format::to_bytes(&back).map_err(|e| e.to_string())? == bytes, || format!("network {i}: bytes differ"))?;
    }
    let net = synth::walk_min(&mut rng);
    let bytes = format::to_bytes(&net).map_err(|e| e.to_string())?;
    let code = |b: &[u8]| format::from_bytes(b).err().map(|e| e.code());
    let mut cases: Vec<(&str, Vec<u8>, u32)> = Vec::new();
    let mut b = bytes.clone();
    b[0] = b'X';
    cases.push(("bad magic", b, 1));
    let mut b = bytes.clone();
    b[4] = 9;
    cases.push(("unsupported version", b, 2));
    for cut in [0, 5, 12, 20, bytes.len() - 1] {
        cases.push(("truncated", bytes[..cut].to_vec(), 3));
    }
    let mut b = bytes.clone();
    b.push(0);
    cases.push(("trailing bytes", b, 4));
    let mut b = bytes.clone();
    b[10] = 9;
    cases.push(("bad domain code", b, 5));
    for (what, b, want) in &cases {
        let got = code(b);
        ensure(got == Some(*want), || format!("UBN1 {what}: code {got:?}, expected {want}"))?;
    }

    for i in 0..100 {
        let n_classes = rng.gen_range(2..=6);
        let trees = synth::random_trees(&mut rng, 16, 8, rf::N_FEATURES, n_classes);
        let scale = (0..rf::N_FEATURES).map(|_| rng.gen_range(0.001f32..2.0)).collect();
        let zero = (0..rf::N_FEATURES).map(|_| rng.gen_range(-100f32..100.0)).collect();
        let q = FeatureQuantizer::new(scale, zero).map_err(|e| e.to_string())?;
        let forest = Forest::from_trees(&trees, n_classes, rf::N_FEATURES, q).map_err(|e| e.to_string())?;
        let bytes = rf::format::to_bytes(&forest).map_err(|e| e.to_string())?;
        let back = rf::format::from_bytes(&bytes).map_err(|e| format!("forest {i}: {e}"))?;
        ensure(back == forest, || format!("forest {i}: loaded forest differs"))?;
        ensure(rf::format::to_bytes(&back).map_err(|e| e.to_string())? == bytes, || format!("forest {i}: bytes differ"))?;
        if i == 0 {
            let code = |b: &[u8]| rf::format::from_bytes(b).err().map(|e| e.code());
            let mut b = bytes.clone();
            b[0] = b'X';
            ensure(code(&b) == Some(1), || "URF1 bad magic".into())?;
            let mut b = bytes.clone();
            b[4] = 9;
            ensure(code(&b) == Some(2), || "URF1 version".into())?;
            ensure(code(&bytes[..bytes.len() - 1]) == Some(3), || "URF1 truncated".into())?;
            let mut b = bytes.clone();
            b.push(0);
            ensure(code(&b) == Some(4), || "URF1 trailing".into())?;
            let mut b = bytes.clone();
            b[20..22].copy_from_slice(&u16::MAX.to_le_bytes());
            ensure(code(&b) == Some(7), || "URF1 bad root".into())?;
        }
    }
    Ok(format!("200 networks and 100 forests round-trip; {} UBN1 and 5 URF1 corruptions rejected", cases.len()))
}

fn op_count_proxy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let net = synth::random_network(&mut rng).network;
        let x = net.make_input(&synth::random_input(&mut rng, &net)).map_err(|e| e.to_string())?;
        for unroll in [Unroll::None, Unroll::TwoByTwo] {
            let mut counter = OpCounter::default();
            net.forward_with(&x, unroll, &mut counter).map_err(|e| e.to_string())?;
            let measured = OpCountReport::from(counter);
            let predicted = net.count_ops();
            ensure(measured == predicted, || format!("network {i}: {measured:?} vs {predicted:?}"))?;
        }
    }
    Ok("100 networks, counts equal under both schedules".into())
}

fn main() {
    let mut r = Runner { failed: 0 };
    let s = Duration::from_secs;
    r.check("binary dot soundness", s(10), binary_dot_soundness);
    r.check("footprint reproduction", s(1), footprint_reproduction);
    r.check("threshold folding", s(30), threshold_folding);
    r.check("end-to-end oracle equivalence", s(120), end_to_end);
    r.check("fusion and alignment", s(60), fusion_and_alignment);
    r.check("rf parity", s(60), rf_parity);
    r.check("format stability", s(5), format_stability);
    r.check("op-count proxy", s(60), op_count_proxy);
    if r.failed > 0 {
        println!("{} criteria failed", r.failed);
        std::process::exit(1);
    }
}
