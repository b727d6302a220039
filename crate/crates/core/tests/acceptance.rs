//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 1, 2 and 8 run with the normal test suite. The training
//! criteria are ignored by default; run everything with
//!
//! ```text
//! cargo test --release -p rpl --test acceptance -- --include-ignored --nocapture --test-threads=1
//! ```
//!
//! Data comes from `RPL_DATA_ROOT`, else the repository's `data/` directory.

mod common;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rpl::data::{dataset_available, parse_cifar, parse_idx_images, parse_idx_labels, DatasetName, LabeledImages};
use rpl::harness::{
    cmd_eval, cmd_train, cmd_trials, evaluate, f1_openness_sweep, train, trial_split, Checkpoint, RunConfig, RunData,
    TrialsReport, CHECKPOINT_FILE, DATA_ROOT_ENV, SPLIT_FILE,
};
use rpl::Error;

const GRADIENT_BUDGET: Duration = Duration::from_secs(120);
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_SETS: usize = 100;
const ORACLE_MAX_N: usize = 500;

const MNIST_TRIALS: usize = 5;
const MNIST_AUROC_FLOOR: f64 = 0.95;
const MNIST_BUDGET: Duration = Duration::from_secs(60 * 60);
const RPLPP_SLACK: f64 = 0.005;
const SEPARATION_FLOOR: f64 = 0.9;
const ABLATION_GAP: f64 = 0.03;
const SOFTMAX_SLACK: f64 = 0.005;
const ABLATION_BUDGET: Duration = Duration::from_secs(45 * 60);
const F1_LEVELS: [usize; 4] = [1, 2, 3, 4];
const F1_INVERSION: f64 = 0.005;

fn line(tag: &str, pass: bool, detail: impl AsRef<str>) -> bool {
    println!("{} {tag}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    pass
}

fn data_root() -> PathBuf {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

fn progress(msg: &str) {
    eprintln!("  {msg}");
}

/// The desk protocol shared by the training criteria: conv-small, 20 epochs,
/// Adam at 1e-3, batch 32.
fn protocol(extra: &str) -> RunConfig {
    RunConfig::parse(&format!(
        "preset=mnist-6/4\ndata_root={}\nencoder=conv-small\nepochs=20\nlr=0.001\nbatch_size=32\n\
         gamma=0.5\nlambda=0.1\nseed=0\n{extra}",
        data_root().display()
    ))
    .unwrap()
}

fn mean_auroc(r: &TrialsReport) -> f64 {
    r.auroc.expect("trials have unknowns").mean
}

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let mut worst = ("", 0.0f64);
    let mut bad = Vec::new();
    let cases = common::gradient_cases();
    for (name, make) in &cases {
        let r = common::run_gradient_case(name, *make, common::GRAD_INSTANCES);
        if r.max_rel_error > worst.1 {
            worst = (name, r.max_rel_error);
        }
        if r.max_rel_error > common::GRAD_TOL || r.checked == 0 {
            bad.push(format!("{name}={:.2e}", r.max_rel_error));
        }
    }
    let secs = start.elapsed();
    let pass = bad.is_empty() && secs <= GRADIENT_BUDGET;
    assert!(line(
        "criterion 1 (gradient suite)",
        pass,
        format!(
            "{} cases x {} instances, worst {} {:.2e} <= {:.0e}, {:.2}s <= {}s, failing {:?}",
            cases.len(),
            common::GRAD_INSTANCES,
            worst.0,
            worst.1,
            common::GRAD_TOL,
            secs.as_secs_f64(),
            GRADIENT_BUDGET.as_secs(),
            bad
        )
    ));
}

#[test]
fn criterion_2_metric_oracles() {
    let start = Instant::now();
    let r = common::run_metric_oracles(ORACLE_SETS, ORACLE_MAX_N, 7);
    let secs = start.elapsed();
    let pass = r.max_auroc_diff <= ORACLE_TOL && r.max_aupr_diff <= ORACLE_TOL && secs <= ORACLE_BUDGET;
    assert!(line(
        "criterion 2 (metric oracles)",
        pass,
        format!(
            "{} sets n<={ORACLE_MAX_N}, auroc diff {:.1e}, aupr diff {:.1e} (tol {ORACLE_TOL:.0e}), {:.2}s <= {}s",
            r.sets,
            r.max_auroc_diff,
            r.max_aupr_diff,
            secs.as_secs_f64(),
            ORACLE_BUDGET.as_secs()
        )
    ));
}

struct MnistRuns {
    rpl: TrialsReport,
    rpl_secs: f64,
    rplpp: TrialsReport,
}

fn mnist_runs() -> &'static Result<MnistRuns, String> {
    static RUNS: OnceLock<Result<MnistRuns, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        if !dataset_available(DatasetName::Mnist, &data_root()) {
            return Err(format!("blocked: mnist missing under {}", data_root().display()));
        }
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let start = Instant::now();
        let rpl = cmd_trials(&protocol("mode=rpl\n"), MNIST_TRIALS, &dir.path().join("rpl"), &mut progress)
            .map_err(|e| e.to_string())?;
        let rpl_secs = start.elapsed().as_secs_f64();
        let rplpp = cmd_trials(&protocol("mode=rpl++\n"), MNIST_TRIALS, &dir.path().join("rplpp"), &mut progress)
            .map_err(|e| e.to_string())?;
        Ok(MnistRuns { rpl, rpl_secs, rplpp })
    })
}

#[test]
#[ignore = "trains 5 conv-small models; run with --include-ignored"]
fn criterion_3_mnist_6_4_auroc() {
    let runs = match mnist_runs() {
        Ok(r) => r,
        Err(e) => panic!("{}", line("criterion 3 (MNIST 6/4 AUROC)", false, e)),
    };
    let per: Vec<String> = runs.rpl.trials.iter().map(|t| format!("{:.4}", t.auroc.unwrap())).collect();
    let a = runs.rpl.auroc.unwrap();
    let ok = line(
        "criterion 3 (MNIST 6/4 AUROC)",
        a.mean >= MNIST_AUROC_FLOOR && runs.rpl_secs <= MNIST_BUDGET.as_secs_f64(),
        format!(
            "mean {:.4} +- {:.4} >= {MNIST_AUROC_FLOOR} over {MNIST_TRIALS} trials [{}], closed acc {:.4}, {:.0}s <= {}s",
            a.mean,
            a.std,
            per.join(", "),
            runs.rpl.closed_accuracy.mean,
            runs.rpl_secs,
            MNIST_BUDGET.as_secs()
        ),
    );
    let sep = runs.rpl.separation.expect("rpl reports separation");
    let sep_ok = line(
        "property (reciprocal-point separation surrogate)",
        sep.mean >= SEPARATION_FLOOR,
        format!("mean fraction {:.4} >= {SEPARATION_FLOOR} over {MNIST_TRIALS} trials", sep.mean),
    );
    assert!(ok && sep_ok);
}

#[test]
#[ignore = "trains 10 conv-small models; run with --include-ignored"]
fn criterion_5_rplpp_non_inferior() {
    let runs = match mnist_runs() {
        Ok(r) => r,
        Err(e) => panic!("{}", line("criterion 5 (RPL++ vs RPL)", false, e)),
    };
    let (a, b) = (mean_auroc(&runs.rpl), mean_auroc(&runs.rplpp));
    assert!(line(
        "criterion 5 (RPL++ vs RPL)",
        b >= a - RPLPP_SLACK,
        format!("RPL++ {b:.4} >= RPL {a:.4} - {RPLPP_SLACK} (difference {:+.4})", b - a)
    ));
}

#[test]
#[ignore = "trains 2 conv-small models; run with --include-ignored"]
fn criterion_6_margin_grows_with_known_classes() {
    let root = data_root();
    if !dataset_available(DatasetName::Mnist, &root) {
        panic!("{}", line("criterion 6 (margin trend)", false, "blocked: mnist missing"));
    }
    let margin = |n: usize| {
        let cfg = protocol(&format!("mode=rpl\nn_known={n}\n"));
        let data = RunData::load(&cfg, &root).unwrap();
        let split = trial_split(&cfg, 0).unwrap();
        let out = train(&cfg, &data, &split, &mut |r| progress(&format!("known={n} {}", r.to_line()))).unwrap();
        out.model.reciprocal.as_ref().unwrap().mean_margin()
    };
    let (m2, m9) = (margin(2), margin(9));
    assert!(line(
        "criterion 6 (margin trend)",
        m9 > m2,
        format!("mean margin with 9 known {m9:.4} > with 2 known {m2:.4}, lambda 0.1, seed 0")
    ));
}

#[test]
#[ignore = "needs fashion-mnist; run with --include-ignored"]
fn criterion_4_ablation_ordering() {
    let root = data_root();
    let missing: Vec<&str> = [DatasetName::Mnist, DatasetName::FashionMnist]
        .into_iter()
        .filter(|&d| !dataset_available(d, &root))
        .map(|d| d.dir())
        .collect();
    if !missing.is_empty() {
        panic!(
            "{}",
            line(
                "criterion 4 (ablation ordering)",
                false,
                format!("blocked: {missing:?} missing under {}", root.display())
            )
        );
    }
    let start = Instant::now();
    let auroc = |extra: &str| {
        let cfg = protocol(&format!("dataset=mnist+fashion-mnist\nn_known=10\nn_unknown=10\n{extra}"));
        let dir = tempfile::tempdir().unwrap();
        cmd_trials(&cfg, 1, dir.path(), &mut progress).unwrap().auroc.unwrap().mean
    };
    let with = auroc("mode=rpl\nlambda=0.1\n");
    let without = auroc("mode=rpl\nlambda=0\n");
    let softmax = auroc("mode=softmax-baseline\n");
    let secs = start.elapsed();
    assert!(line(
        "criterion 4 (ablation ordering)",
        with - without >= ABLATION_GAP && with >= softmax - SOFTMAX_SLACK && secs <= ABLATION_BUDGET,
        format!(
            "lambda=0.1 {with:.4} - lambda=0 {without:.4} = {:+.4} >= {ABLATION_GAP}; RPL {with:.4} >= softmax {softmax:.4} - {SOFTMAX_SLACK}; {:.0}s <= {}s",
            with - without,
            secs.as_secs_f64(),
            ABLATION_BUDGET.as_secs()
        )
    ));
}

#[test]
#[ignore = "needs cifar-10; run with --include-ignored"]
fn criterion_7_f1_against_openness() {
    let root = data_root();
    if !dataset_available(DatasetName::Cifar10, &root) {
        panic!(
            "{}",
            line(
                "criterion 7 (F1 vs openness)",
                false,
                format!("blocked: cifar-10 missing under {}", root.display())
            )
        );
    }
    let cfg = RunConfig {
        dataset: rpl::harness::DatasetSpec::Single(DatasetName::Cifar10),
        ..protocol("mode=rpl\n")
    };
    let data = RunData::load(&cfg, &root).unwrap();
    let split = trial_split(&cfg, 0).unwrap();
    let out = train(&cfg, &data, &split, &mut |r| progress(&r.to_line())).unwrap();
    let eval = evaluate(&out.model, &data, &split).unwrap();
    let rows = f1_openness_sweep(&eval, &split, &F1_LEVELS).unwrap();
    let rises: Vec<f64> = rows.windows(2).map(|w| w[1].f1 - w[0].f1).filter(|&d| d > 0.0).collect();
    let pass = rows.len() >= 3 && (rises.is_empty() || (rises.len() == 1 && rises[0] <= F1_INVERSION));
    let shown: Vec<String> = rows.iter().map(|r| format!("{:.3}:{:.4}", r.openness, r.f1)).collect();
    assert!(line(
        "criterion 7 (F1 vs openness)",
        pass,
        format!("openness:F1 [{}], {} rise(s), allowed one <= {F1_INVERSION}", shown.join(", "), rises.len())
    ));
}

fn idx_fuzz(r: &mut impl Rng) -> Result<usize, String> {
    let mut images = Vec::new();
    for w in [rpl::data::IDX_IMAGE_MAGIC, 20, 28, 28] {
        images.extend(w.to_be_bytes());
    }
    images.extend((0..20 * 28 * 28).map(|_| r.gen::<u8>()));
    let mut cases = 0;
    let ok = |e: &Error| matches!(e, Error::Format(_)) || matches!(e, Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof);
    for _ in 0..500 {
        let cut = r.gen_range(0..images.len());
        match parse_idx_images(&images[..cut]) {
            Err(e) if ok(&e) => cases += 1,
            other => return Err(format!("IDX cut at {cut}: {other:?}")),
        }
        let mut bad = images.clone();
        bad[r.gen_range(0..4)] ^= 1 << r.gen_range(0..8);
        match parse_idx_images(&bad) {
            Err(Error::Format(_)) => cases += 1,
            other => return Err(format!("IDX magic: {:?}", other.map(|v| v.0))),
        }
        let noise: Vec<u8> = (0..r.gen_range(0..64)).map(|_| r.gen()).collect();
        let _ = parse_idx_labels(&noise);
    }
    Ok(cases)
}

fn cifar_fuzz(r: &mut impl Rng) -> Result<usize, String> {
    let rec = 1 + rpl::data::CIFAR_IMAGE_BYTES;
    let bytes: Vec<u8> = (0..3 * rec).map(|i| if i % rec == 0 { r.gen_range(0..10) } else { r.gen() }).collect();
    let mut cases = 0;
    for _ in 0..200 {
        let cut = r.gen_range(0..bytes.len());
        let mut into = LabeledImages {
            images: Vec::new(),
            dims: (3, 32, 32),
            labels: Vec::new(),
            classes: 10,
            source: "fuzz".into(),
        };
        match (cut % rec == 0, parse_cifar(&bytes[..cut], 1, 10, &mut into)) {
            (true, Ok(())) | (false, Err(Error::Format(_))) => cases += 1,
            (_, other) => return Err(format!("CIFAR cut at {cut}: {other:?}")),
        }
    }
    Ok(cases)
}

#[test]
fn criterion_8_determinism_and_formats() {
    let root = data_root();
    let mut notes = Vec::new();
    let mut pass = true;

    if dataset_available(DatasetName::Mnist, &root) {
        let cfg = RunConfig::parse(&format!(
            "preset=mnist-6/4\ndata_root={}\nmode=rpl\nencoder=mlp-small\nepochs=2\nbatch_size=32\n\
             train_per_class=40\ntest_per_class=20\nseed=11\n",
            root.display()
        ))
        .unwrap();
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            cmd_train(&cfg, dir.path(), &mut |_| {}).unwrap();
            let mut m = cmd_eval(&dir.path().join(CHECKPOINT_FILE), &root, &dir.path().join(SPLIT_FILE), &dir.path().join("e"))
                .unwrap();
            m.runtime_secs = 0.0;
            (m, std::fs::read(dir.path().join(CHECKPOINT_FILE)).unwrap())
        };
        let (m1, c1) = run();
        let (m2, c2) = run();
        let same_metrics = m1 == m2;
        let same_ckpt = c1 == c2;
        let round = Checkpoint::from_bytes(&c1).map(|c| c.to_bytes() == c1).unwrap_or(false);
        notes.push(format!(
            "metrics identical {same_metrics}, checkpoint bytes identical {same_ckpt}, round trip bit-exact {round}"
        ));
        pass &= same_metrics && same_ckpt && round;
        let mut flipped = c1.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0xff;
        let caught = matches!(Checkpoint::from_bytes(&flipped), Err(Error::Checksum { .. }));
        notes.push(format!("payload flip caught {caught}"));
        pass &= caught;
    } else {
        notes.push(format!("blocked: mnist missing under {}", root.display()));
        pass = false;
    }

    let mut r = common::rng(808);
    match (idx_fuzz(&mut r), cifar_fuzz(&mut r)) {
        (Ok(a), Ok(b)) => notes.push(format!("{} loader fuzz cases structured", a + b)),
        (a, b) => {
            pass = false;
            notes.push(format!("fuzz failure {:?} {:?}", a.err(), b.err()));
        }
    }
    assert!(line("criterion 8 (determinism and formats)", pass, notes.join("; ")));
}
