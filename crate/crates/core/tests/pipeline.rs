use std::fs;

use gestalt_probe::canvas::Polarity;
use gestalt_probe::experiment::{plot, run_exp1, run_exp2, write_results, RESULTS_HEADER};
use gestalt_probe::learn::export;
use gestalt_probe::metrics::CeProtocol;
use gestalt_probe::model::{load_model, read_activations, write_activations};
use gestalt_probe::pomerantz;
use gestalt_probe::transform::{TransformKind, TransformSpec};

fn protocol(kind: TransformKind) -> CeProtocol {
    CeProtocol {
        repetitions: 2,
        transform: TransformSpec::of_kind(kind),
        polarity: Polarity::WhiteOnBlack,
        seed: 11,
        canvas_size: None,
    }
}

#[test]
fn exported_bundle_runs_both_experiments_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let model = load_model(export::write_builtin(dir.path(), 3).unwrap()).unwrap();
    let exp1 = run_exp1(&model, &[1, 4, 17], &protocol(TransformKind::Translate)).unwrap();
    let exp2 = run_exp2(&model, &protocol(TransformKind::None)).unwrap();
    assert_eq!(exp1.len(), 3 * model.probes().len());
    assert_eq!(exp2.len(), 3 * model.probes().len());
    for r in exp1.iter().chain(&exp2) {
        assert!(r.network_ce.is_finite() && (-2.0..=2.0).contains(&r.network_ce), "{r:?}");
        assert!((r.network_ce - (r.base_similarity - r.composite_similarity)).abs() < 1e-12);
    }

    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    write_results(&out.join("exp1_white_on_black_translate.csv"), model.name(), &exp1).unwrap();
    write_results(&out.join("exp2_white_on_black_none.csv"), model.name(), &exp2).unwrap();
    let text = fs::read_to_string(out.join("exp1_white_on_black_translate.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));

    let figures = plot::plot(&out).unwrap();
    assert!(!figures.is_empty());
    for f in figures {
        let svg = fs::read_to_string(out.join(&f)).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"), "{f}");
    }
}

#[test]
fn probe_dump_round_trips_real_activations() {
    let dir = tempfile::tempdir().unwrap();
    let model = load_model(export::write_builtin(dir.path(), 0).unwrap()).unwrap();
    let set = pomerantz::build_set(2).unwrap();
    let style = gestalt_probe::canvas::RenderStyle::new(Polarity::BlackOnRandomPixels, 1);
    let pair = set.composite.render(&style, model.meta().input_size).unwrap();
    let acts = model.forward_canvas(&pair.image_a).unwrap();
    let mut bytes = Vec::new();
    write_activations(&mut bytes, &acts.0).unwrap();
    assert_eq!(read_activations(bytes.as_slice()).unwrap(), acts.0);
}

#[test]
fn bundled_human_ce_covers_every_set() {
    let records = pomerantz::bundled_human_ce();
    let mut ids: Vec<u32> = records.iter().map(|r| r.set_id).collect();
    ids.sort_unstable();
    assert_eq!(ids, (1..=pomerantz::SET_COUNT).collect::<Vec<_>>());
}
