//! End-to-end pipeline behavior on small generated corpora.

use std::fs;

use bladeseg::io;
use bladeseg::metrics::{Metric, Step};
use bladeseg::pipeline::{
    evaluate_dirs, forest_refine, mask_file_name, read_forest_manifest, refine, run_pipeline, Manifest, PipelineConfig,
    ProbabilitySource,
};
use bladeseg::synthcorpus::{self, holes_enclosed, CorpusSpec};
use bladeseg::tta::soft_vote;
use bladeseg::tta::TtaBundle;

fn small(holes: usize, salt: f64) -> CorpusSpec {
    CorpusSpec {
        groups: 2,
        per_group: 3,
        height: 40,
        width: 48,
        holes,
        hole_size: (3, 3),
        salt_rate: salt,
        ..CorpusSpec::default()
    }
}

fn run(spec: &CorpusSpec, jobs: Option<usize>) -> bladeseg::pipeline::PipelineOutput {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthcorpus::generate(spec, dir.path()).unwrap();
    let cfg = PipelineConfig {
        jobs,
        ..PipelineConfig::default()
    };
    run_pipeline(&manifest, &cfg).unwrap()
}

#[test]
fn clean_corpus_scores_perfectly_at_every_step() {
    let out = run(&small(0, 0.0), None);
    assert!(out.failures.is_empty());
    assert_eq!(out.records.len(), 6 * 4);
    for r in &out.records {
        for m in Metric::ALL {
            assert_eq!(r.scores.get(m), Some(1.0), "{} {} {}", r.image_id, r.step, m.name());
        }
    }
}

#[test]
fn enclosed_holes_are_restored_by_first_fill() {
    let spec = small(1, 0.0);
    let images = synthcorpus::generate_images(&spec).unwrap();
    assert!(images.iter().all(holes_enclosed));
    let out = run(&spec, None);
    for r in out.records.iter().filter(|r| r.step == Step::H1) {
        assert_eq!(r.scores.recall, Some(1.0), "{}", r.image_id);
    }
    for r in out.records.iter().filter(|r| r.step == Step::Bu) {
        assert!(r.scores.recall.unwrap() < 1.0);
    }
}

#[test]
fn fill_stages_never_clear_foreground() {
    let out = run(&small(2, 0.03), None);
    for img in &out.images {
        assert!(img.masks.bu.is_subset_of(&img.masks.h1));
        assert!(img.masks.rf.is_subset_of(&img.masks.h2));
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let spec = small(2, 0.02);
    let base = run(&spec, Some(1));
    for jobs in [Some(2), Some(5), None] {
        assert_eq!(run(&spec, jobs), base, "jobs {jobs:?}");
    }
}

#[test]
fn merged_and_flip_sources_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = synthcorpus::generate(&small(1, 0.02), dir.path()).unwrap();
    let flipped = run_pipeline(&manifest, &PipelineConfig::default()).unwrap();
    for (k, row) in manifest.rows.iter_mut().enumerate() {
        let ProbabilitySource::Flips(paths) = &row.probability else {
            panic!("corpus rows carry flip maps")
        };
        let maps = paths.clone().map(|p| io::read_probability(&p).unwrap());
        let merged = dir.path().join(format!("merged{k}.bpr"));
        io::write_probability(&soft_vote(&TtaBundle::from_ordered(maps).unwrap()), &merged).unwrap();
        row.probability = ProbabilitySource::Merged(merged);
    }
    assert_eq!(run_pipeline(&manifest, &PipelineConfig::default()).unwrap(), flipped);
}

#[test]
fn unreadable_items_are_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthcorpus::generate(&small(1, 0.0), dir.path()).unwrap();
    fs::remove_file(&manifest.rows[1].rgb).unwrap();
    fs::write(manifest.rows[4].gt.as_ref().unwrap(), b"P5\n1 1\n255\n\x80").unwrap();
    let out = run_pipeline(&manifest, &PipelineConfig::default()).unwrap();
    let failed: Vec<_> = out.failures.iter().map(|f| f.image_id.as_str()).collect();
    assert_eq!(
        failed,
        [manifest.rows[1].image_id.as_str(), manifest.rows[4].image_id.as_str()]
    );
    assert_eq!(out.images.len(), 4);
    assert_eq!(out.forests.len(), 2);
}

#[test]
fn refine_writes_requested_layout() {
    let dir = tempfile::tempdir().unwrap();
    synthcorpus::generate(&small(1, 0.01), &dir.path().join("corpus")).unwrap();
    let out_dir = dir.path().join("out");
    let cfg = PipelineConfig {
        save_steps: vec![Step::H2, Step::Bu],
        ..PipelineConfig::default()
    };
    let outcome = refine(&dir.path().join("corpus/manifest.csv"), &out_dir, &cfg).unwrap();
    assert_eq!(outcome.written.len(), 2 * 6 + 4);
    assert!(out_dir.join("BU").join(mask_file_name("blade00", "img000")).exists());
    assert!(!out_dir.join("H1").exists());
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with(bladeseg::metrics::CSV_HEADER));
    assert_eq!(metrics.lines().filter(|l| l.starts_with("blade0")).count(), 24);
    assert!(metrics.contains("summary,median,H2,"));
    let table = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(table.starts_with("metric,BU,H1,RF,H2\n"));
    assert!(fs::read_to_string(out_dir.join("report.txt"))
        .unwrap()
        .contains("accuracy"));

    let (records, failures) = evaluate_dirs(&out_dir.join("H2"), &dir.path().join("corpus/gt"), Step::H2).unwrap();
    assert!(failures.is_empty());
    let from_run: Vec<_> = outcome
        .output
        .records
        .iter()
        .filter(|r| r.step == Step::H2)
        .cloned()
        .collect();
    assert_eq!(records, from_run);
}

#[test]
fn forest_refine_matches_pipeline_forest_stage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let manifest = synthcorpus::generate(&small(2, 0.02), &corpus).unwrap();
    let out = run_pipeline(&manifest, &PipelineConfig::default()).unwrap();
    let h1_dir = dir.path().join("h1");
    fs::create_dir(&h1_dir).unwrap();
    let mut csv = String::from("blade_id,image_path,h1_mask_path,gt_path\n");
    for (row, img) in manifest.rows.iter().zip(&out.images) {
        let h1 = h1_dir.join(mask_file_name(&img.blade_id, &img.image_id));
        io::write_mask(&img.masks.h1, &h1).unwrap();
        csv += &format!(
            "{},{},{},{}\n",
            row.blade_id,
            row.rgb.display(),
            h1.display(),
            row.gt.as_ref().unwrap().display()
        );
    }
    let fm = dir.path().join("forest.csv");
    fs::write(&fm, csv).unwrap();
    let groups = read_forest_manifest(&fm).unwrap();
    assert_eq!(groups.len(), 2);
    let rf_dir = dir.path().join("rf");
    let outcome = forest_refine(&groups, &rf_dir, &Default::default(), None).unwrap();
    assert_eq!(outcome.models, out.forests);
    for (row, img) in manifest.rows.iter().zip(&out.images) {
        let stem = row.rgb.file_stem().unwrap().to_string_lossy().into_owned();
        let written = io::read_mask(&rf_dir.join(mask_file_name(&row.blade_id, &stem))).unwrap();
        assert_eq!(written, img.masks.rf);
    }
    assert_eq!(outcome.records.len(), 6);
}

#[test]
fn manifest_round_trips_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthcorpus::generate(&small(0, 0.0), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert!(
        !text.contains(&*dir.path().to_string_lossy()),
        "paths should be stored relative"
    );
    assert_eq!(Manifest::read(&dir.path().join("manifest.csv")).unwrap(), manifest);
    let groups = manifest.groups();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0].0, "blade00");
}
