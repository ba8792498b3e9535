//! The `ubnn` command-line tool.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 usage error or input
//! shape mismatch, 3 I/O error, 4 malformed or invalid model file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layers::{OpCounter, Unroll, Q16_ONE};
use crate::model::json::{Manifest, ManifestKind};
use crate::model::{format, json, Layer, LayerFootprint, Network, OpCountReport};
use crate::oracle::{forest_reference, forward_trace_reference, ReferenceNetwork};
use crate::rf::{self, extract_features, quantize_features, Forest};
use crate::synth;

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ubnn", version, about = "Packed binary neural network and random forest inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify every CSV row (time-major int8 window) with a network.
    Run {
        model: PathBuf,
        input: PathBuf,
        /// Also print the class scores.
        #[arg(long)]
        scores: bool,
        /// The last column of each row is the true class.
        #[arg(long)]
        labels: bool,
    },
    /// Check the packed engine against the reference on random inputs.
    Verify {
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also check the predictions recorded in an evaluation manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Complement threshold CHANNEL of layer LAYER in the packed copy.
        #[arg(long, hide = true, value_name = "LAYER:CHANNEL", value_parser = parse_fault)]
        inject_fault: Option<(usize, usize)>,
    },
    /// Print weight, threshold and buffer sizes per layer.
    Footprint {
        model: PathBuf,
        /// Compare against a layout padding channels to multiples of 32.
        #[arg(long)]
        padded32: bool,
    },
    /// Print word-level operation counts for one inference.
    Ops {
        model: PathBuf,
        /// Run one instrumented inference and require the counts to match.
        #[arg(long)]
        check: bool,
    },
    /// Classify every CSV row with a forest.
    RfRun {
        forest: PathBuf,
        input: PathBuf,
        /// Rows are raw 32 x 3 accelerometer windows, not int8 features.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        labels: bool,
    },
    /// Check flat forest traversal against the recursive reference.
    RfVerify {
        forest: PathBuf,
        /// Also check every row of this CSV.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Random trials and CSV rows are raw windows.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Convert interchange JSON to the UBN1 or URF1 binary format.
    Convert { input: PathBuf, output: PathBuf },
}

fn parse_fault(s: &str) -> Result<(usize, usize), String> {
    let (l, c) = s.split_once(':').ok_or("expected LAYER:CHANNEL")?;
    Ok((l.parse().map_err(|e| format!("{e}"))?, c.parse().map_err(|e| format!("{e}"))?))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Shape(String),
    Io(String),
    Format(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Shape(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Format(_) => EXIT_FORMAT,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Shape(m) | Failure::Io(m) | Failure::Format(m) => m,
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn format_failure(path: &Path, e: format::FormatError) -> Failure {
    match e {
        format::FormatError::Io(e) => io_failure(path, e),
        e => Failure::Format(format!("{}: {e} (code {})", path.display(), e.code())),
    }
}

fn is_json(bytes: &[u8]) -> bool {
    bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{')
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

/// Loads a `UBN1` file or interchange JSON.
fn load_model(path: &Path) -> Result<Network, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_failure(path, e))?;
    if is_json(&bytes) {
        let text = String::from_utf8(bytes).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))?;
        json::from_json(&text).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
    } else {
        format::from_bytes(&bytes).map_err(|e| format_failure(path, e))
    }
}

/// Loads a `URF1` file or interchange JSON.
fn load_forest(path: &Path) -> Result<Forest, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_failure(path, e))?;
    if is_json(&bytes) {
        let text = String::from_utf8(bytes).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))?;
        rf::json::from_json(&text).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
    } else {
        rf::format::from_bytes(&bytes).map_err(|e| format_failure(path, e))
    }
}

fn load_manifest(path: &Path, kind: ManifestKind) -> Result<Manifest, Failure> {
    let m = Manifest::from_json(&read_text(path)?).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))?;
    if m.kind != kind {
        return Err(Failure::Format(format!("{}: manifest is for a {:?} model", path.display(), m.kind)));
    }
    Ok(m)
}

struct Rows {
    values: Vec<Vec<i32>>,
    labels: Vec<usize>,
}

/// Reads integer CSV rows of exactly `width` values (plus a label column).
fn read_rows(path: &Path, width: usize, labels: Option<usize>, range: (i64, i64)) -> Result<Rows, Failure> {
    let file = std::fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let columns = width + labels.is_some() as usize;
    let mut rows = Rows {
        values: Vec::new(),
        labels: Vec::new(),
    };
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Failure::Io(format!("{}: {e}", path.display())),
            _ => Failure::Shape(format!("{}: {e}", path.display())),
        })?;
        let line = record.position().map_or(r + 1, |p| p.line() as usize);
        if record.len() != columns {
            return Err(Failure::Shape(format!(
                "{} line {line}: expected {columns} columns, found {}",
                path.display(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        for (c, field) in record.iter().enumerate() {
            let v: i64 = field.parse().map_err(|_| {
                Failure::Shape(format!("{} line {line}, column {}: `{field}` is not an integer", path.display(), c + 1))
            })?;
            if c == width {
                let n = labels.unwrap_or(0);
                if v < 0 || v as usize >= n {
                    return Err(Failure::Shape(format!("{} line {line}: label {v} is not a class in 0..{n}", path.display())));
                }
                rows.labels.push(v as usize);
            } else {
                if v < range.0 || v > range.1 {
                    return Err(Failure::Shape(format!(
                        "{} line {line}, column {}: {v} is outside [{}, {}]",
                        path.display(),
                        c + 1,
                        range.0,
                        range.1
                    )));
                }
                row.push(v as i32);
            }
        }
        rows.values.push(row);
    }
    Ok(rows)
}

const INT8: (i64, i64) = (i8::MIN as i64, i8::MAX as i64);
const INT32: (i64, i64) = (i32::MIN as i64, i32::MAX as i64);

fn to_i8(row: &[i32]) -> Vec<i8> {
    row.iter().map(|&v| v as i8).collect()
}

fn q16(v: i64) -> f64 {
    v as f64 / Q16_ONE as f64
}

fn accuracy_line(out: &mut String, predictions: &[usize], labels: &[usize]) {
    if labels.is_empty() {
        return;
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let n = labels.len();
    let _ = writeln!(out, "accuracy: {correct}/{n} = {:.4}", correct as f64 / n as f64);
}

fn cmd_run(model: &Path, input: &Path, scores: bool, labels: bool, out: &mut String) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let rows = read_rows(input, net.input_len(), labels.then_some(net.n_classes()), INT8)?;
    let mut predictions = Vec::with_capacity(rows.values.len());
    for row in &rows.values {
        let trace = net.classify(&to_i8(row)).map_err(|e| Failure::Shape(e.to_string()))?;
        if scores {
            let s: Vec<String> = trace.scores.iter().map(|&s| q16(s).to_string()).collect();
            let _ = writeln!(out, "{},{}", trace.class, s.join(","));
        } else {
            let _ = writeln!(out, "{}", trace.class);
        }
        predictions.push(trace.class);
    }
    accuracy_line(out, &predictions, &rows.labels);
    Ok(EXIT_OK)
}

fn layer_kind(layer: &Layer) -> &'static str {
    layer.kind()
}

/// First disagreement between the packed and reference runs of one input.
fn compare_run(net: &Network, reference: &ReferenceNetwork, x: &[i8]) -> Result<Option<String>, Failure> {
    let packed = net.classify(x).map_err(|e| Failure::Shape(e.to_string()))?;
    let want = forward_trace_reference(reference, &synth::dense_input(net, x)).map_err(|e| Failure::Format(e.to_string()))?;
    let convs: Vec<usize> = (0..net.layers().len()).filter(|&i| net.layers()[i].is_conv()).collect();
    for (k, (got, exp)) in packed.stages.iter().zip(&want.stages).enumerate() {
        let got = got.unpack();
        if let Some(bit) = (0..got.len()).find(|&i| got[i] as i64 != exp.data[i]) {
            let layer = convs[k];
            let c = exp.channels;
            return Ok(Some(format!(
                "layer {layer} ({}), bit {bit} (t={}, c={}): packed {:+}, reference {:+}",
                layer_kind(&net.layers()[layer]),
                bit / c,
                bit % c,
                got[bit],
                exp.data[bit]
            )));
        }
    }
    let fc = net.layers().len() - 1;
    for (m, (&s, &r)) in packed.scores.iter().zip(&want.scores).enumerate() {
        if q16(s) != r {
            return Ok(Some(format!("layer {fc} (fc), class {m} score: packed {}, reference {r}", q16(s))));
        }
    }
    if packed.class != want.class {
        return Ok(Some(format!("prediction: packed {}, reference {}", packed.class, want.class)));
    }
    Ok(None)
}

fn cmd_verify(
    model: &Path,
    trials: usize,
    seed: u64,
    manifest: Option<&Path>,
    fault: Option<(usize, usize)>,
    out: &mut String,
) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let reference = ReferenceNetwork::from_network(&net);
    let mut packed = net.clone();
    if let Some((layer, channel)) = fault {
        if !packed.corrupt_threshold(layer, channel) {
            return Err(Failure::Usage(format!("layer {layer} has no threshold {channel}")));
        }
    }
    let _ = writeln!(out, "network: {}", net.architecture());
    let _ = writeln!(out, "seed: {seed}");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    let mut first = None;
    for trial in 0..trials {
        let x = synth::random_input(&mut rng, &net);
        if let Some(what) = compare_run(&packed, &reference, &x)? {
            mismatches += 1;
            first.get_or_insert(format!("first mismatch: trial {trial}, {what}"));
        }
    }
    let _ = writeln!(out, "{mismatches} mismatches / {trials} trials");
    if let Some(f) = &first {
        let _ = writeln!(out, "{f}");
    }

    let mut manifest_mismatches = 0;
    if let Some(path) = manifest {
        let m = load_manifest(path, ManifestKind::Bnn)?;
        if m.row_len != net.input_len() {
            return Err(Failure::Shape(format!(
                "{}: rows have {} values, network takes {}",
                path.display(),
                m.row_len,
                net.input_len()
            )));
        }
        let mut first = None;
        for (r, (row, &expected)) in m.rows().zip(&m.expected).enumerate() {
            if row.iter().any(|&v| !(INT8.0..=INT8.1).contains(&(v as i64))) {
                return Err(Failure::Shape(format!("{}: row {r} has values outside int8", path.display())));
            }
            let x = to_i8(row);
            let got = packed.classify(&x).map_err(|e| Failure::Shape(e.to_string()))?.class;
            let oracle = forward_trace_reference(&reference, &synth::dense_input(&net, &x))
                .map_err(|e| Failure::Format(e.to_string()))?
                .class;
            if got != expected || oracle != expected {
                manifest_mismatches += 1;
                first.get_or_insert(format!("first manifest mismatch: row {r}, expected {expected}, packed {got}, reference {oracle}"));
            }
        }
        let _ = writeln!(out, "manifest: {manifest_mismatches} mismatches / {} rows", m.expected.len());
        if let Some(f) = first {
            let _ = writeln!(out, "{f}");
        }
    }
    Ok(if mismatches + manifest_mismatches > 0 { EXIT_MISMATCH } else { EXIT_OK })
}

fn bits_and_bytes(bits: u64) -> String {
    format!("{bits} bits ({} bytes)", bits.div_ceil(8))
}

/// `31x (3100%)`, or two decimals when not whole.
fn overhead(fp: &LayerFootprint) -> String {
    let o = fp.padding_overhead();
    let pct = o * 100.0;
    if o.fract() == 0.0 {
        format!("{o:.0}x ({pct:.0}%)")
    } else {
        format!("{o:.2}x ({pct:.1}%)")
    }
}

fn cmd_footprint(model: &Path, padded32: bool, out: &mut String) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let fp = net.footprint();
    let _ = writeln!(out, "network: {}", net.architecture());
    let _ = write!(out, "{:<6}{:<10}{:>12}{:>14}{:>16}{:>17}", "layer", "type", "raw_bits", "aligned_bits", "threshold_bits", "activation_bits");
    if padded32 {
        let _ = write!(out, "{:>16}{:>22}", "padded32_bits", "overhead");
    }
    let _ = writeln!(out);
    let row = |out: &mut String, name: &str, kind: &str, f: &LayerFootprint| {
        let _ = write!(
            out,
            "{name:<6}{kind:<10}{:>12}{:>14}{:>16}{:>17}",
            f.raw_weight_bits, f.aligned_weight_bits, f.threshold_bits, f.activation_buffer_bits
        );
        if padded32 {
            let _ = write!(out, "{:>16}{:>22}", f.padded32_weight_bits, overhead(f));
        }
        let _ = writeln!(out);
    };
    for (i, (layer, f)) in net.layers().iter().zip(&fp.layers).enumerate() {
        row(out, &i.to_string(), layer.kind(), f);
    }
    row(out, "total", "", &fp.total);
    let _ = writeln!(out, "input buffer: {}", bits_and_bytes(fp.input_buffer_bits));
    let _ = writeln!(out, "weights: raw {}, aligned {}", bits_and_bytes(fp.total.raw_weight_bits), bits_and_bytes(fp.total.aligned_weight_bits));
    let _ = writeln!(out, "thresholds: {}", bits_and_bytes(fp.total.threshold_bits));
    if padded32 {
        let _ = writeln!(out, "padded32 weights: {}, overhead {}", bits_and_bytes(fp.total.padded32_weight_bits), overhead(&fp.total));
    }
    Ok(EXIT_OK)
}

fn cmd_ops(model: &Path, check: bool, out: &mut String) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let per_layer = net.count_ops_per_layer();
    let total = net.count_ops();
    let _ = writeln!(out, "network: {}", net.architecture());
    let _ = writeln!(out, "{:<6}{:<10}{:>10}{:>10}{:>10}{:>10}{:>12}", "layer", "type", "xnor", "popcount", "compare", "or", "int8_mac");
    let row = |out: &mut String, name: &str, kind: &str, r: &OpCountReport| {
        let _ = writeln!(
            out,
            "{name:<6}{kind:<10}{:>10}{:>10}{:>10}{:>10}{:>12}",
            r.xnor_word_ops, r.popcount_ops, r.threshold_compares, r.or_ops, r.int8_mac_equivalents
        );
    };
    for (i, (layer, r)) in net.layers().iter().zip(&per_layer).enumerate() {
        row(out, &i.to_string(), layer.kind(), r);
    }
    row(out, "total", "", &total);
    if check {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = net.make_input(&synth::random_input(&mut rng, &net)).map_err(|e| Failure::Shape(e.to_string()))?;
        let mut counter = OpCounter::default();
        net.forward_with(&x, Unroll::default(), &mut counter).map_err(|e| Failure::Shape(e.to_string()))?;
        let measured = OpCountReport::from(counter);
        row(out, "ran", "", &measured);
        if measured != total {
            let _ = writeln!(out, "instrumented counts differ from the closed form");
            return Ok(EXIT_MISMATCH);
        }
        let _ = writeln!(out, "instrumented counts match");
    }
    Ok(EXIT_OK)
}

fn forest_features(forest: &Forest, row: &[i32], raw: bool) -> Result<Vec<i8>, Failure> {
    if raw {
        let f = extract_features(row).map_err(|e| Failure::Shape(e.to_string()))?;
        quantize_features(&f, forest.quantizer()).map_err(|e| Failure::Shape(e.to_string()))
    } else {
        Ok(to_i8(row))
    }
}

fn check_raw_forest(forest: &Forest, raw: bool) -> Result<(), Failure> {
    if raw && forest.n_features() != rf::N_FEATURES {
        return Err(Failure::Shape(format!(
            "--raw extracts {} features, forest takes {}",
            rf::N_FEATURES,
            forest.n_features()
        )));
    }
    Ok(())
}

fn row_spec(forest: &Forest, raw: bool) -> (usize, (i64, i64)) {
    if raw {
        (rf::WINDOW * rf::AXES, INT32)
    } else {
        (forest.n_features(), INT8)
    }
}

fn cmd_rf_run(path: &Path, input: &Path, raw: bool, labels: bool, out: &mut String) -> Result<i32, Failure> {
    let forest = load_forest(path)?;
    check_raw_forest(&forest, raw)?;
    let (width, range) = row_spec(&forest, raw);
    let rows = read_rows(input, width, labels.then_some(forest.n_classes()), range)?;
    let mut predictions = Vec::with_capacity(rows.values.len());
    for row in &rows.values {
        let x = forest_features(&forest, row, raw)?;
        let class = forest.predict(&x).map_err(|e| Failure::Format(e.to_string()))?;
        let _ = writeln!(out, "{class}");
        predictions.push(class);
    }
    accuracy_line(out, &predictions, &rows.labels);
    Ok(EXIT_OK)
}

fn cmd_rf_verify(
    path: &Path,
    input: Option<&Path>,
    raw: bool,
    trials: usize,
    seed: u64,
    manifest: Option<&Path>,
    out: &mut String,
) -> Result<i32, Failure> {
    let forest = load_forest(path)?;
    check_raw_forest(&forest, raw)?;
    let _ = writeln!(
        out,
        "forest: {} trees, {} nodes, {} leaves, {} classes",
        forest.roots().len(),
        forest.nodes().len(),
        forest.n_leaves(),
        forest.n_classes()
    );
    let _ = writeln!(out, "seed: {seed}");
    let check = |x: &[i8]| -> Result<Option<(usize, usize)>, Failure> {
        let got = forest.predict(x).map_err(|e| Failure::Format(e.to_string()))?;
        let want = forest_reference(&forest, x);
        Ok((got != want).then_some((got, want)))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0;
    let mut report = |out: &mut String, what: &str, n: usize, bad: usize, first: Option<String>| {
        total += bad;
        let _ = writeln!(out, "{what}: {bad} mismatches / {n}");
        if let Some(f) = first {
            let _ = writeln!(out, "{f}");
        }
    };

    let (mut bad, mut first) = (0, None);
    for trial in 0..trials {
        let x = if raw {
            let w: Vec<i32> = (0..rf::WINDOW * rf::AXES).map(|_| rng.gen_range(-2048..=2048)).collect();
            forest_features(&forest, &w, true)?
        } else {
            (0..forest.n_features()).map(|_| rng.gen()).collect()
        };
        if let Some((g, w)) = check(&x)? {
            bad += 1;
            first.get_or_insert(format!("first mismatch: trial {trial}, flat {g}, reference {w}"));
        }
    }
    report(out, "random", trials, bad, first);

    if let Some(input) = input {
        let (width, range) = row_spec(&forest, raw);
        let rows = read_rows(input, width, None, range)?;
        let (mut bad, mut first) = (0, None);
        for (r, row) in rows.values.iter().enumerate() {
            if let Some((g, w)) = check(&forest_features(&forest, row, raw)?)? {
                bad += 1;
                first.get_or_insert(format!("first mismatch: row {r}, flat {g}, reference {w}"));
            }
        }
        report(out, "input", rows.values.len(), bad, first);
    }

    if let Some(path) = manifest {
        let m = load_manifest(path, ManifestKind::Rf)?;
        check_raw_forest(&forest, m.raw)?;
        let (width, range) = row_spec(&forest, m.raw);
        if m.row_len != width {
            return Err(Failure::Shape(format!("{}: rows have {} values, expected {width}", path.display(), m.row_len)));
        }
        let (mut bad, mut first) = (0, None);
        for (r, (row, &expected)) in m.rows().zip(&m.expected).enumerate() {
            if row.iter().any(|&v| !(range.0..=range.1).contains(&(v as i64))) {
                return Err(Failure::Shape(format!("{}: row {r} has out-of-range values", path.display())));
            }
            let x = forest_features(&forest, row, m.raw)?;
            let got = forest.predict(&x).map_err(|e| Failure::Format(e.to_string()))?;
            let want = forest_reference(&forest, &x);
            if got != expected || want != expected {
                bad += 1;
                first.get_or_insert(format!("first mismatch: row {r}, expected {expected}, flat {got}, reference {want}"));
            }
        }
        report(out, "manifest", m.expected.len(), bad, first);
    }
    Ok(if total > 0 { EXIT_MISMATCH } else { EXIT_OK })
}

fn cmd_convert(input: &Path, output: &Path, out: &mut String) -> Result<i32, Failure> {
    let text = read_text(input)?;
    let bad = |e: json::JsonError| Failure::Format(format!("{}: {e}", input.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(json::JsonError { path: ".".into(), message: e.to_string() }))?;
    let (bytes, what) = match value.get("format").and_then(|f| f.as_str()) {
        Some(json::MODEL_FORMAT) => {
            let net = json::from_json(&text).map_err(bad)?;
            (format::to_bytes(&net).map_err(|e| format_failure(output, e))?, "UBN1")
        }
        Some(rf::json::FOREST_FORMAT) => {
            let forest = rf::json::from_json(&text).map_err(bad)?;
            (rf::format::to_bytes(&forest).map_err(|e| format_failure(output, e))?, "URF1")
        }
        other => {
            return Err(bad(json::JsonError {
                path: "format".into(),
                message: format!(
                    "expected \"{}\" or \"{}\", found {}",
                    json::MODEL_FORMAT,
                    rf::json::FOREST_FORMAT,
                    other.map_or("nothing".to_string(), |s| format!("\"{s}\""))
                ),
            }))
        }
    };
    std::fs::write(output, &bytes).map_err(|e| io_failure(output, e))?;
    let _ = writeln!(out, "wrote {what} ({} bytes) to {}", bytes.len(), output.display());
    Ok(EXIT_OK)
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    let mut out = String::new();
    let result = match &cli.command {
        Command::Run { model, input, scores, labels } => cmd_run(model, input, *scores, *labels, &mut out),
        Command::Verify {
            model,
            trials,
            seed,
            manifest,
            inject_fault,
        } => cmd_verify(model, *trials, *seed, manifest.as_deref(), *inject_fault, &mut out),
        Command::Footprint { model, padded32 } => cmd_footprint(model, *padded32, &mut out),
        Command::Ops { model, check } => cmd_ops(model, *check, &mut out),
        Command::RfRun { forest, input, raw, labels } => cmd_rf_run(forest, input, *raw, *labels, &mut out),
        Command::RfVerify {
            forest,
            input,
            raw,
            trials,
            seed,
            manifest,
        } => cmd_rf_verify(forest, input.as_deref(), *raw, *trials, *seed, manifest.as_deref(), &mut out),
        Command::Convert { input, output } => cmd_convert(input, output, &mut out),
    };
    let _ = stdout.write_all(out.as_bytes());
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}
