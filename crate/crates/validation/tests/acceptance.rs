//! Acceptance criteria. Each check prints one `PASS`/`FAIL` line; the
//! target exits non-zero if any line fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use gestalt_probe::canvas::Polarity;
use gestalt_probe::dots::{generate_layout, EfKind, EfParams, Task};
use gestalt_probe::learn::{self, export, LearnabilityConfig, SmallNet, Widths};
use gestalt_probe::metrics::{cosine_slices, network_ce, CeProtocol};
use gestalt_probe::model::load_model;
use gestalt_probe::pomerantz;
use gestalt_probe::rng;
use gestalt_probe::stats::{exact_permutation_p, spearman_rho, t_approximation_p};
use gestalt_probe::stimulus::sample_in_frame;
use gestalt_probe::transform::{sample_transform, TransformKind, TransformSpec};
use gestalt_probe_validation::report;
use rand::RngExt;

fn metric_cosine() -> bool {
    let mut r = rng::rng_from(1, &[rng::tag("cosine-acceptance")]);
    let (mut identity, mut symmetry, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let n = r.random_range(1..64usize);
        let a: Vec<f32> = (0..n).map(|_| r.random_range(-10.0f32..10.0)).collect();
        let b: Vec<f32> = (0..n).map(|_| r.random_range(-10.0f32..10.0)).collect();
        let k = r.random_range(0.001f32..1000.0);
        let ka: Vec<f32> = a.iter().map(|v| v * k).collect();
        let (Ok(ab), Ok(ba), Ok(aa), Ok(kab)) = (cosine_slices(&a, &b), cosine_slices(&b, &a), cosine_slices(&a, &a), cosine_slices(&ka, &b))
        else {
            continue;
        };
        identity = identity.max((aa - 1.0).abs());
        symmetry = symmetry.max((ab - ba).abs());
        scale = scale.max((kab - ab).abs());
    }
    let hand = cosine_slices(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
    let ok = report(
        identity <= 1e-12 && symmetry == 0.0 && scale <= 1e-6,
        "cosine properties (10^4 pairs)",
        format!("max |c(a,a)-1|={identity:.1e}, max asymmetry={symmetry:.1e}, max scale drift={scale:.1e}"),
    ) & report(
        (hand - expected).abs() <= 1e-9 && (hand - 0.9746318).abs() <= 1e-7,
        "cosine hand example",
        format!("cos((1,2,3),(4,5,6)) = {hand:.10}, expected {expected:.10}"),
    );
    ok
}

fn spearman_case(n: usize) -> bool {
    let mut r = rng::rng_from(n as u64, &[rng::tag("spearman-acceptance")]);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let rho = spearman_rho(&x, &y).unwrap();
        let gap = (t_approximation_p(rho, n) - exact_permutation_p(&x, &y).unwrap()).abs();
        worst = worst.max(gap);
        violations += usize::from(gap > 0.05);
    }
    report(
        violations == 0,
        &format!("spearman t-approximation vs exact, n={n}"),
        format!("worst |p_t - p_exact| = {worst:.4} (tolerance 0.05), {violations}/100 series over"),
    )
}

fn spearman_t_approximation() -> bool {
    (4..=8).map(spearman_case).fold(true, |a, b| a & b)
}

fn spearman_monotone_invariance() -> bool {
    let mut r = rng::rng_from(99, &[]);
    let mut all_equal = true;
    for _ in 0..200 {
        let n = r.random_range(4..20usize);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        all_equal &= spearman_rho(&x, &y).unwrap() == spearman_rho(&ex, &y).unwrap();
    }
    report(all_equal, "spearman monotone invariance", "rho(x, y) == rho(exp(x), y) over 200 series")
}

fn zero_context_null() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let model = load_model(export::write_builtin(dir.path(), 0).unwrap()).unwrap();
    let mut worst = 0.0f64;
    let mut cells = 0;
    for polarity in Polarity::ALL {
        for kind in TransformKind::ALL {
            let protocol =
                CeProtocol { repetitions: 4, transform: TransformSpec::of_kind(kind), polarity, seed: 5, canvas_size: None };
            for id in 1..=pomerantz::SET_COUNT {
                let set = pomerantz::build_set(id).unwrap().without_context();
                let rows =
                    network_ce(&model, &id.to_string(), |_| Ok((set.base.clone(), set.composite.clone())), &protocol).unwrap();
                for r in rows {
                    worst = worst.max(r.network_ce.abs());
                    cells += 1;
                }
            }
        }
    }
    report(
        worst == 0.0,
        "zero-context null",
        format!("max |CE| = {worst:e} over {cells} (set, probe, style, transform) cells of the internal SmallNet")
    )
}

fn shared_context_invariant() -> bool {
    let params = EfParams::default();
    let spec = TransformSpec::of_kind(TransformKind::Translate);
    let mut mismatches = 0;
    let mut checked = 0;
    for kind in EfKind::FEATURES {
        for i in 0..100u64 {
            let layout = generate_layout(kind, i, &params).unwrap();
            let (base, composite) = layout.pairs();
            let (_, moved) = sample_in_frame(&spec, i, &[&base, &composite]).unwrap();
            for (b, c) in [(&base, &composite), (&moved[0], &moved[1])] {
                let (ba, bb) = b.masks(224);
                let (ca, cb) = c.masks(224);
                let (da, db) = (ca.difference(&ba), cb.difference(&bb));
                mismatches += usize::from(da != db || da.count() == 0);
                checked += 1;
            }
        }
    }
    report(
        mismatches == 0,
        "shared-context invariant",
        format!("{mismatches} of {checked} composite pairs with differing (composite - base) masks")
    )
}

fn transform_protocol() -> bool {
    let spec = TransformSpec::of_kind(TransformKind::Translate);
    let mut max_px = 0.0f64;
    for i in 0..10_000 {
        let t = sample_transform(&spec, i).unwrap();
        let (dx, dy) = t.translation_px(224);
        max_px = max_px.max(dx.abs()).max(dy.abs());
    }
    let bound = report(max_px <= 40.32, "translation bound", format!("max |dx|,|dy| = {max_px:.3} px over 10^4 draws (limit 40.32)"));

    let mut mismatched = 0;
    let mut pairs = 0;
    for kind in TransformKind::ALL {
        let spec = TransformSpec::of_kind(kind);
        for set in pomerantz::all_sets() {
            let (t, moved) = sample_in_frame(&spec, set.set_id as u64, &[&set.base, &set.composite]).unwrap();
            for (orig, m) in [(&set.base, &moved[0]), (&set.composite, &moved[1])] {
                for (g, gm) in [(&orig.a, &m.a), (&orig.b, &m.b)] {
                    let expect: Vec<_> = g.primitives.iter().flat_map(|p| p.points().to_vec()).map(|p| t.apply_point(p)).collect();
                    let got: Vec<_> = gm.primitives.iter().flat_map(|p| p.points().to_vec()).collect();
                    mismatched += usize::from(expect != got);
                }
                pairs += 1;
            }
        }
    }
    let same = report(
        mismatched == 0,
        "identical transform within pairs",
        format!("{mismatched} glyphs off the shared transform across {pairs} pairs (vertex equality)"),
    );
    bound && same
}

fn gradient_check() -> bool {
    let small = learn::gradcheck::reference_check(3, false);
    let zero = learn::gradcheck::reference_check(3, true);
    let full = SmallNet::<f64>::new(16, 3, Widths::DEFAULT, 4).unwrap();
    let x = ndarray_input();
    let opts = learn::GradCheckOptions { samples_per_tensor: Some(64), seed: 4, ..Default::default() };
    let full_report = learn::gradient_check(&full, x.view(), 2, &opts);
    let describe = |r: &gestalt_probe::Result<learn::GradCheckReport>| match r {
        Ok(r) => format!("{}/{} within 1e-3, max rel err {:.2e}", r.within_tolerance, r.checked, r.max_rel_error),
        Err(e) => e.to_string(),
    };
    report(small.is_ok(), "gradient check, reduced SmallNet (all parameters)", describe(&small))
        & report(zero.is_ok(), "gradient check, zero input", describe(&zero))
        & report(full_report.is_ok(), "gradient check, full-width SmallNet (sampled)", describe(&full_report))
}

fn ndarray_input() -> ndarray::Array4<f64> {
    ndarray::Array4::from_shape_fn((1, 16, 16, 1), |(_, y, x, _)| if (x + 2 * y) % 5 == 0 { 1.0 } else { 0.1 * (x as f64).cos().abs() })
}

fn learnability_probe() -> bool {
    let cfg = LearnabilityConfig::default();
    let mut ok = true;
    for task in Task::ALL {
        let chance = 1.0 / task.class_count() as f64;
        let target = if task == Task::Linearity2 { 0.80 } else { 0.90 };
        let t0 = Instant::now();
        let trained = learn::run_learnability(task, &cfg, false).unwrap();
        let seconds = t0.elapsed().as_secs_f64();
        let control = learn::run_learnability(task, &cfg, true).unwrap();
        ok &= report(
            trained.evaluation.accuracy >= target,
            &format!("learnability {} accuracy", task.as_str()),
            format!("test accuracy {:.3} (target >= {target}), confusion {:?}", trained.evaluation.accuracy, trained.evaluation.confusion),
        );
        ok &= report(
            (control.evaluation.accuracy - chance).abs() <= 0.10,
            &format!("learnability {} shuffled-label control", task.as_str()),
            format!("test accuracy {:.3} (chance {chance:.3} +/- 0.10)", control.evaluation.accuracy),
        );
        ok &= report(
            seconds <= 15.0 * 60.0,
            &format!("learnability {} runtime", task.as_str()),
            format!("{seconds:.0} s (limit 900 s)"),
        );
    }
    ok
}

fn csv_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> bool {
    std::env::remove_var("GESTALT_PROBE_SEED");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let cfg = serde_json::json!({
            "models": ["builtin:smallnet"],
            "experiments": ["exp1", "exp2", "sanity", "learnability"],
            "styles": ["white_on_black", "black_on_random_pixels"],
            "transforms": ["none", "translate"],
            "repetitions": 10,
            "seed": 2024,
            "workers": 2,
            "output_dir": run,
            "learnability": {"n_train": 60, "n_test": 30, "train": {"epochs": 2}},
        });
        let path = dir.path().join(format!("{run}.json"));
        fs::write(&path, cfg.to_string()).unwrap();
        let code = gestalt_probe_cli::run_args(["gestalt-probe", "run", "--config", path.to_str().unwrap()]);
        if code != 0 {
            return report(false, "determinism", format!("CLI run `{run}` exited with {code}"));
        }
        outputs.push(csv_tree(&dir.path().join(run)));
    }
    let differing: Vec<&String> = outputs[0].keys().filter(|k| outputs[1].get(*k) != outputs[0].get(*k)).collect();
    report(
        differing.is_empty() && outputs[0].len() == outputs[1].len() && outputs[0].len() > 10,
        "determinism",
        format!("{} CSVs compared across two CLI runs, {} differ", outputs[0].len(), differing.len())
    )
}

fn main() -> ExitCode {
    let checks: [fn() -> bool; 9] = [
        metric_cosine,
        spearman_t_approximation,
        spearman_monotone_invariance,
        zero_context_null,
        shared_context_invariant,
        transform_protocol,
        gradient_check,
        determinism,
        learnability_probe,
    ];
    let failed = checks.iter().filter(|check| !check()).count();
    println!("acceptance: {} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
