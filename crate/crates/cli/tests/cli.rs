use std::path::Path;
use std::process::{Command, Output};

use stegscrub::{load_image, lsb, synth, sweep, Image, LsbConfig};

fn stegscrub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stegscrub"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn embed_extract_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cover = dir.path().join("cover.pgm");
    let secret = dir.path().join("secret.pgm");
    let stego = dir.path().join("stego.pgm");
    let decoded = dir.path().join("decoded.pgm");
    let secret_img = synth::natural(16, 2);
    stegscrub::save_image(&synth::natural(16, 1), &cover).unwrap();
    stegscrub::save_image(&secret_img, &secret).unwrap();

    let out = stegscrub(&["embed", "--cover", p(&cover), "--secret", p(&secret), "--k", "3", "--out", p(&stego)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = stegscrub(&["extract", "--stego", p(&stego), "--k", "3", "--out", p(&decoded)]);
    assert_eq!(code(&out), 0);
    let cfg = LsbConfig::new(3).unwrap();
    assert_eq!(load_image(&decoded).unwrap(), secret_img.map(|v| cfg.quantize(v)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // usage: unknown flag, missing required value, bad k
    assert_eq!(code(&stegscrub(&["embed", "--bogus"])), 1);
    assert_eq!(code(&stegscrub(&["extract", "--k", "4"])), 1);
    let img = dir.path().join("a.pgm");
    stegscrub::save_image(&Image::filled(8, 8, 9).unwrap(), &img).unwrap();
    let out = dir.path().join("b.pgm");
    assert_eq!(code(&stegscrub(&["extract", "--stego", p(&img), "--k", "9", "--out", p(&out)])), 1);
    // data: missing file, malformed image
    let missing = dir.path().join("missing.pgm");
    assert_eq!(code(&stegscrub(&["extract", "--stego", p(&missing), "--out", p(&out)])), 2);
    let junk = dir.path().join("junk.pgm");
    std::fs::write(&junk, b"P2\n3 3\n255\n").unwrap();
    let run = stegscrub(&["extract", "--stego", p(&junk), "--out", p(&out)]);
    assert_eq!(code(&run), 2);
    // help is not an error
    assert_eq!(code(&stegscrub(&["--help"])), 0);
}

#[test]
fn bit_depth_error_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let deep = dir.path().join("deep.pgm");
    let mut bytes = b"P5\n3 3\n65535\n".to_vec();
    bytes.extend(std::iter::repeat_n(0u8, 18));
    std::fs::write(&deep, bytes).unwrap();
    let out = stegscrub(&["edges", "--input", p(&deep), "--out", p(&dir.path().join("e.pgm"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported bit depth"));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pgm");
    let noisy = dir.path().join("noisy.pgm");
    let img = synth::natural(16, 5);
    stegscrub::save_image(&img, &input).unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "[baseline]\nmethod = \"gaussian\"\nepsilon = 3\nseed = 4\ninput = {:?}\nout = {:?}\n",
            p(&input),
            p(&noisy)
        ),
    )
    .unwrap();
    let out = stegscrub(&["baseline", "--config", p(&config)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let expected = stegscrub::baselines::gaussian_noise(&img, 3, 4);
    assert_eq!(load_image(&noisy).unwrap(), expected);

    // command line overrides the file
    let out = stegscrub(&["baseline", "--config", p(&config), "--method", "median"]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        load_image(&noisy).unwrap(),
        stegscrub::baselines::median_filter(&img, 3).unwrap()
    );

    std::fs::write(&config, "[baseline]\nsigma = 3\n").unwrap();
    assert_eq!(code(&stegscrub(&["baseline", "--config", p(&config)])), 1);
    let absent = dir.path().join("absent.toml");
    assert_eq!(code(&stegscrub(&["baseline", "--config", p(&absent)])), 1);
}

#[test]
fn evaluate_prints_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let k = LsbConfig::default();
    let cover = synth::natural(16, 1);
    let secret = synth::natural(16, 2);
    let stego = lsb::embed(&cover, &secret, k).unwrap();
    let purified = stegscrub::baselines::gaussian_noise(&stego, 2, 0);
    let files = [
        ("cover", &cover),
        ("stego", &stego),
        ("purified", &purified),
        ("secret", &secret),
        ("decoded-original", &lsb::extract(&stego, k)),
        ("decoded-destroyed", &lsb::extract(&purified, k)),
    ];
    let mut args = vec!["evaluate".to_string()];
    for (flag, img) in files {
        let path = dir.path().join(format!("{flag}.pgm"));
        stegscrub::save_image(img, &path).unwrap();
        args.push(format!("--{flag}"));
        args.push(p(&path).to_string());
    }
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = stegscrub(&argv);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("psnr_cover_purified,"));
    let values: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 6);
    assert_eq!(values[1], stegscrub::metrics::psnr(&stego, &purified).unwrap());
}

#[test]
fn train_purify_and_sweep_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = stegscrub(&["gen-corpus", "--out", p(&data), "--count", "4", "--side", "12", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(sweep::load_dataset(&data).unwrap().len(), 4);

    let weights = dir.path().join("model.weights");
    let log = dir.path().join("train.csv");
    let out = stegscrub(&[
        "train", "--data", p(&data), "--out", p(&weights), "--log", p(&log), "--hidden", "4",
        "--residual-blocks", "1", "--components", "2", "--epochs", "2", "--batch-size", "4",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(log_text.lines().next().unwrap(), "epoch,L,L_I,L_E");
    assert_eq!(log_text.lines().count(), 3);

    let stego = data.join("img0000.cover.pgm");
    let purified = dir.path().join("purified.pgm");
    let dist = dir.path().join("dist.bin");
    let out = stegscrub(&[
        "purify", "--input", p(&stego), "--weights", p(&weights), "--epsilon", "2", "--out", p(&purified),
        "--dist-out", p(&dist),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let before = load_image(&stego).unwrap();
    let after = load_image(&purified).unwrap();
    assert!(before.pixels().iter().zip(after.pixels()).all(|(a, b)| a.abs_diff(*b) <= 4));
    assert_eq!(stegscrub::PixelDistribution::load(&dist).unwrap().dims(), (12, 12));

    let edges = dir.path().join("edges.pgm");
    assert_eq!(code(&stegscrub(&["edges", "--input", p(&stego), "--weights", p(&weights), "--out", p(&edges)])), 0);

    let results = dir.path().join("results.csv");
    let out = stegscrub(&[
        "sweep", "--dataset", p(&data), "--weights", p(&weights), "--epsilons", "1,2", "--methods",
        "ours-approx,gaussian,wiener", "--out", p(&results),
    ]);
    // 12x12 images are too small for SSIM: cells fail but the sweep completes
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&results).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 3 * 2);
    assert!(dir.path().join("results.summary.csv").exists());
    assert!(dir.path().join("results.timing.csv").exists());

    // eraser methods without weights are a usage error
    let out = stegscrub(&["sweep", "--dataset", p(&data), "--methods", "ours-approx", "--out", p(&results)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn ablate_and_time_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let pairs = sweep::synthetic_pairs(2, 16, 1, true);
    sweep::write_dataset(&data, &pairs).unwrap();
    let cfg = stegscrub::AnalyzerConfig {
        side: 16,
        hidden: 4,
        residual_blocks: 1,
        components: 2,
        ..Default::default()
    };
    let weights = dir.path().join("w.bin");
    let analyzer = stegscrub::Analyzer::initialized(&cfg).unwrap();
    stegscrub::analyzer::save_weights(analyzer.weights(), &weights).unwrap();

    let results = dir.path().join("ablation.csv");
    let out = stegscrub(&[
        "ablate", "--dataset", p(&data), "--weights", p(&weights), "--epsilons", "1,2", "--out", p(&results),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&results).unwrap();
    assert!(text.contains("ours-approx-noedge"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);

    let timing = dir.path().join("timing.csv");
    let out = stegscrub(&[
        "time", "--dataset", p(&data), "--weights", p(&weights), "--epsilons", "2", "--out", p(&timing),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&timing).unwrap();
    assert!(text.starts_with("image,epsilon,approx_ms,exact_ms"));
    assert_eq!(text.lines().count(), 3);
}
