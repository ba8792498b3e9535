use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use ubnn::model::json::{Manifest, ManifestDtype, ManifestKind};
use ubnn::model::{format, json, Architecture, InputDomain, InputSpec, Network};
use ubnn::oracle::{forest_reference, forward_reference};
use ubnn::rf::{self, FeatureQuantizer, Forest};
use ubnn::synth;

fn ubnn(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubnn"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

struct Fixture {
    dir: TempDir,
    net: Network,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = synth::walk_min(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        format::save(&net, dir.path().join("walk.ubn")).unwrap();
        Self { dir, net }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn model(&self) -> PathBuf {
        self.path("walk.ubn")
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

fn csv(rows: &[Vec<i8>]) -> String {
    rows.iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

fn random_rows(net: &Network, n: usize, seed: u64) -> Vec<Vec<i8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| synth::random_input(&mut rng, net)).collect()
}

#[test]
fn run_matches_oracle_predictions() {
    let f = Fixture::new(1);
    let rows = random_rows(&f.net, 50, 2);
    let input = f.write("in.csv", &csv(&rows));
    let out = ubnn(&[&"run", &f.model(), &input]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines: Vec<usize> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(lines.len(), rows.len());
    for (row, &class) in rows.iter().zip(&lines) {
        assert_eq!(class, forward_reference(&f.net, &synth::dense_input(&f.net, row)).unwrap());
    }
}

#[test]
fn run_scores_and_labels() {
    let f = Fixture::new(3);
    let rows = random_rows(&f.net, 10, 4);
    let classes: Vec<usize> = rows.iter().map(|r| f.net.classify(r).unwrap().class).collect();
    let labelled: String = rows
        .iter()
        .zip(&classes)
        .enumerate()
        .map(|(i, (r, &c))| {
            // the first row gets the wrong label
            let label = if i == 0 { 1 - c } else { c };
            format!("{},{label}\n", r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        })
        .collect();
    let input = f.write("in.csv", &labelled);
    let out = ubnn(&[&"run", &f.model(), &input, &"--scores", &"--labels"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    for (line, (row, &c)) in lines.iter().zip(rows.iter().zip(&classes)) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0].parse::<usize>().unwrap(), c);
        let scores = f.net.classify(row).unwrap().scores;
        for (s, field) in scores.iter().zip(&fields[1..]) {
            assert_eq!(field.parse::<f64>().unwrap(), *s as f64 / 65536.0);
        }
    }
    assert_eq!(lines[10], "accuracy: 9/10 = 0.9000");
}

#[test]
fn run_shape_and_range_errors() {
    let f = Fixture::new(5);
    let short = f.write("short.csv", &vec!["1"; 95].join(","));
    let out = ubnn(&[&"run", &f.model(), &short]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("expected 96 columns, found 95"), "{}", stderr(&out));

    let mut row = vec!["0"; 96];
    row[4] = "128";
    let wide = f.write("range.csv", &row.join(","));
    assert_eq!(code(&ubnn(&[&"run", &f.model(), &wide])), 2);

    row[4] = "x";
    let text = f.write("text.csv", &row.join(","));
    assert_eq!(code(&ubnn(&[&"run", &f.model(), &text])), 2);

    row[4] = "0";
    let label = f.write("label.csv", &format!("{},2", row.join(",")));
    assert_eq!(code(&ubnn(&[&"run", &f.model(), &label, &"--labels"])), 2);
}

#[test]
fn load_and_io_errors() {
    let f = Fixture::new(6);
    let missing = f.path("missing.ubn");
    let input = f.write("in.csv", &csv(&random_rows(&f.net, 1, 0)));
    assert_eq!(code(&ubnn(&[&"run", &missing, &input])), 3);
    assert_eq!(code(&ubnn(&[&"run", &f.model(), &f.path("missing.csv")])), 3);

    let mut bytes = std::fs::read(f.model()).unwrap();
    bytes[0] = b'X';
    std::fs::write(f.path("bad.ubn"), &bytes).unwrap();
    let out = ubnn(&[&"run", &f.path("bad.ubn"), &input]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("code 1"), "{}", stderr(&out));

    let mut bytes = std::fs::read(f.model()).unwrap();
    bytes.push(0);
    std::fs::write(f.path("long.ubn"), &bytes).unwrap();
    assert_eq!(code(&ubnn(&[&"footprint", &f.path("long.ubn")])), 4);
}

#[test]
fn usage_errors() {
    assert_eq!(code(&ubnn(&[])), 2);
    assert_eq!(code(&ubnn(&[&"frobnicate"])), 2);
    assert_eq!(code(&ubnn(&[&"verify"])), 2);
    assert_eq!(code(&ubnn(&[&"verify", &"m", &"--trials", &"many"])), 2);
    assert_eq!(code(&ubnn(&[&"--help"])), 0);
}

#[test]
fn verify_healthy_and_deterministic() {
    let f = Fixture::new(7);
    let a = ubnn(&[&"verify", &f.model(), &"--trials", &"300", &"--seed", &"42"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert!(stdout(&a).contains("0 mismatches / 300 trials"), "{}", stdout(&a));
    let b = ubnn(&[&"verify", &f.model(), &"--trials", &"300", &"--seed", &"42"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_reports_injected_fault() {
    let f = Fixture::new(8);
    for layer in [0usize, 1] {
        let fault = format!("{layer}:1");
        let out = ubnn(&[&"verify", &f.model(), &"--trials", &"50", &"--inject-fault", &fault]);
        assert_eq!(code(&out), 1, "{}", stdout(&out));
        let text = stdout(&out);
        assert!(!text.contains("\n0 mismatches"), "{text}");
        // a complemented threshold flips every output of its channel
        assert!(text.contains(&format!("first mismatch: trial 0, layer {layer} (")), "{text}");
        assert!(text.contains("c=1"), "{text}");
    }
    let out = ubnn(&[&"verify", &f.model(), &"--inject-fault", &"2:0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_against_manifest() {
    let f = Fixture::new(9);
    let rows = random_rows(&f.net, 40, 10);
    let expected: Vec<usize> = rows
        .iter()
        .map(|r| forward_reference(&f.net, &synth::dense_input(&f.net, r)).unwrap())
        .collect();
    let mut m = Manifest {
        kind: ManifestKind::Bnn,
        dtype: ManifestDtype::I8,
        row_len: 96,
        raw: false,
        inputs: rows.iter().flatten().map(|&v| v as i32).collect(),
        expected,
    };
    let good = f.write("good.json", &m.to_json());
    let out = ubnn(&[&"verify", &f.model(), &"--trials", &"0", &"--manifest", &good]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("manifest: 0 mismatches / 40 rows"));

    m.expected[3] = 1 - m.expected[3];
    let bad = f.write("bad.json", &m.to_json());
    let out = ubnn(&[&"verify", &f.model(), &"--trials", &"0", &"--manifest", &bad]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("first manifest mismatch: row 3"), "{}", stdout(&out));

    m.kind = ManifestKind::Rf;
    let wrong = f.write("rf.json", &m.to_json());
    assert_eq!(code(&ubnn(&[&"verify", &f.model(), &"--manifest", &wrong])), 4);
}

fn footprint_table(out: &str, layer: &str) -> Vec<String> {
    out.lines()
        .find(|l| l.split_whitespace().next() == Some(layer))
        .unwrap_or_else(|| panic!("no row {layer} in\n{out}"))
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[test]
fn footprint_padding_overhead() {
    let dir = tempfile::tempdir().unwrap();
    let input = InputSpec {
        timesteps: 16,
        channels: 8,
        domain: InputDomain::Binary,
    };
    let net = Architecture::from_str_checked("Conv(4,7), FC").instantiate(input, 2).unwrap();
    let path = dir.path().join("narrow.ubn");
    format::save(&net, &path).unwrap();
    let out = ubnn(&[&"footprint", &path, &"--padded32"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let row = footprint_table(&text, "0");
    assert_eq!(row[1], "binconv");
    assert_eq!(row[2], "224");
    assert_eq!(row[6], "7168");
    assert_eq!(row[7], "31x");

    let wide = InputSpec { channels: 32, ..input };
    let net = Architecture::from_str_checked("Conv(32,7), FC").instantiate(wide, 2).unwrap();
    let path = dir.path().join("wide.ubn");
    format::save(&net, &path).unwrap();
    let text = stdout(&ubnn(&[&"footprint", &path, &"--padded32"]));
    assert!(text.contains("overhead 0x (0%)"), "{text}");
}

#[test]
fn footprint_totals_match_library() {
    let f = Fixture::new(11);
    let out = ubnn(&[&"footprint", &f.model()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let fp = f.net.footprint();
    let total = footprint_table(&text, "total");
    assert_eq!(total[1], fp.total.raw_weight_bits.to_string());
    assert_eq!(total[2], fp.total.aligned_weight_bits.to_string());
    assert_eq!(total[3], fp.total.threshold_bits.to_string());
    assert_eq!(total[4], fp.total.activation_buffer_bits.to_string());
    assert!(text.contains("input buffer: 768 bits (96 bytes)"));
}

#[test]
fn ops_check_passes() {
    let f = Fixture::new(12);
    let out = ubnn(&[&"ops", &f.model(), &"--check"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("instrumented counts match"));
    let ops = f.net.count_ops();
    let total = footprint_table(&text, "total");
    assert_eq!(total[1], ops.xnor_word_ops.to_string());
    assert_eq!(total[5], ops.int8_mac_equivalents.to_string());
}

#[test]
fn convert_model_json() {
    let f = Fixture::new(13);
    let text = json::to_json(&f.net);
    let src = f.write("walk.json", &text);
    let (a, b) = (f.path("a.ubn"), f.path("b.ubn"));
    assert_eq!(code(&ubnn(&[&"convert", &src, &a])), 0);
    assert_eq!(code(&ubnn(&[&"convert", &src, &b])), 0);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(format::from_bytes(&bytes).unwrap(), json::from_json(&text).unwrap());
    assert_eq!(bytes, std::fs::read(f.model()).unwrap());
    assert_eq!(code(&ubnn(&[&"verify", &a, &"--trials", &"50"])), 0);
    // JSON models load directly too
    let direct = ubnn(&[&"verify", &src, &"--trials", &"50"]);
    assert_eq!(direct.stdout, ubnn(&[&"verify", &a, &"--trials", &"50"]).stdout);
}

#[test]
fn convert_rejects_bad_channel_count() {
    let f = Fixture::new(14);
    let mut v: serde_json::Value = serde_json::from_str(&json::to_json(&f.net)).unwrap();
    v["layers"][1]["c_out"] = serde_json::json!(3);
    let src = f.write("bad.json", &v.to_string());
    let out = ubnn(&[&"convert", &src, &f.path("out.ubn")]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("layers[1].c_out"), "{}", stderr(&out));
    assert!(!f.path("out.ubn").exists());

    v["format"] = serde_json::json!("something");
    let src = f.write("other.json", &v.to_string());
    let out = ubnn(&[&"convert", &src, &f.path("out.ubn")]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("format"));
}

fn forest_fixture(dir: &Path, seed: u64) -> (Forest, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = synth::random_trees(&mut rng, 8, 6, rf::N_FEATURES, 4);
    let scale = (0..rf::N_FEATURES).map(|_| rng.gen_range(0.01f32..1.0)).collect();
    let zero = (0..rf::N_FEATURES).map(|_| rng.gen_range(-50.0f32..50.0)).collect();
    let q = FeatureQuantizer::new(scale, zero).unwrap();
    let forest = Forest::from_trees(&trees, 4, rf::N_FEATURES, q).unwrap();
    let path = dir.join("forest.urf");
    rf::format::save(&forest, &path).unwrap();
    (forest, path)
}

#[test]
fn rf_run_features_and_raw() {
    let dir = tempfile::tempdir().unwrap();
    let (forest, path) = forest_fixture(dir.path(), 20);
    let mut rng = ChaCha8Rng::seed_from_u64(21);

    let feats: Vec<Vec<i8>> = (0..30).map(|_| (0..rf::N_FEATURES).map(|_| rng.gen()).collect()).collect();
    let input = dir.path().join("f.csv");
    std::fs::write(&input, csv(&feats)).unwrap();
    let out = ubnn(&[&"rf-run", &path, &input]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let got: Vec<usize> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    let want: Vec<usize> = feats.iter().map(|x| forest_reference(&forest, x)).collect();
    assert_eq!(got, want);

    let windows: Vec<Vec<i32>> = (0..30).map(|_| (0..96).map(|_| rng.gen_range(-2000..2000)).collect()).collect();
    let text: String = windows
        .iter()
        .map(|w| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let raw = dir.path().join("raw.csv");
    std::fs::write(&raw, text).unwrap();
    let out = ubnn(&[&"rf-run", &path, &raw, &"--raw"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let got: Vec<usize> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    let want: Vec<usize> = windows.iter().map(|w| forest.classify_window(w).unwrap()).collect();
    assert_eq!(got, want);

    // raw windows without --raw have the wrong width
    assert_eq!(code(&ubnn(&[&"rf-run", &path, &raw])), 2);
}

#[test]
fn rf_verify_parity_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (forest, path) = forest_fixture(dir.path(), 22);
    let out = ubnn(&[&"rf-verify", &path, &"--trials", &"500"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("random: 0 mismatches / 500"));
    let again = ubnn(&[&"rf-verify", &path, &"--trials", &"500"]);
    assert_eq!(out.stdout, again.stdout);

    let out = ubnn(&[&"rf-verify", &path, &"--trials", &"200", &"--raw"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let windows: Vec<i32> = (0..20 * 96).map(|_| rng.gen_range(-3000..3000)).collect();
    let expected: Vec<usize> = windows.chunks(96).map(|w| forest.classify_window(w).unwrap()).collect();
    let mut m = Manifest {
        kind: ManifestKind::Rf,
        dtype: ManifestDtype::I32,
        row_len: 96,
        raw: true,
        inputs: windows,
        expected,
    };
    let mpath = dir.path().join("m.json");
    std::fs::write(&mpath, m.to_json()).unwrap();
    let out = ubnn(&[&"rf-verify", &path, &"--trials", &"0", &"--manifest", &mpath]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("manifest: 0 mismatches / 20"));

    m.expected[0] = (m.expected[0] + 1) % 4;
    std::fs::write(&mpath, m.to_json()).unwrap();
    assert_eq!(code(&ubnn(&[&"rf-verify", &path, &"--trials", &"0", &"--manifest", &mpath])), 1);
}

#[test]
fn convert_forest_json() {
    let dir = tempfile::tempdir().unwrap();
    let (forest, path) = forest_fixture(dir.path(), 24);
    let src = dir.path().join("forest.json");
    std::fs::write(&src, rf::json::to_json(&forest)).unwrap();
    let out_path = dir.path().join("converted.urf");
    let out = ubnn(&[&"convert", &src, &out_path]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("wrote URF1"));
    assert_eq!(std::fs::read(&out_path).unwrap(), std::fs::read(&path).unwrap());
}

trait FromStrChecked {
    fn from_str_checked(s: &str) -> Architecture;
}

impl FromStrChecked for Architecture {
    fn from_str_checked(s: &str) -> Architecture {
        s.parse().unwrap()
    }
}
