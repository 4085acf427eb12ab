mod common;

use fcsearch::bm25::read_candidates;
use fcsearch::model::read_checkpoint;
use fcsearch::pipeline::read_id_list;

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = common::run_pipeline(dir.path(), 20);
    for path in &run.artifacts {
        let meta = std::fs::metadata(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(meta.len() > 0, "{} is empty", path.display());
    }
    let s = &run.summary;
    let eligible = s.train + s.valid + s.test;
    assert_eq!(eligible + s.leftover, 40);
    assert_eq!(s.train, eligible * 8 / 10);
    assert_eq!(s.valid, eligible / 10);

    let leftover = read_id_list(&dir.path().join("leftover.txt")).unwrap();
    assert_eq!(leftover.len(), s.leftover);
    let report: fcsearch::eval::MetricReport = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("reports/leftover.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report.query_count, s.leftover);
    assert!(s.leftover > 0 && s.valid > 0 && s.test > 0);

    assert_eq!(run.test_report.query_count + run.test_report.excluded.len(), s.test);
    let v = run.valid_report.mean;
    for x in [v.ndcg1, v.ndcg3, v.ndcg5, v.hit1, v.hit3, v.hit5] {
        assert!((0.0..=1.0).contains(&x));
    }
    assert!(v.hit1 <= v.hit3 && v.hit3 <= v.hit5);

    let cands = read_candidates(&dir.path().join("candidates.tsv")).unwrap();
    assert_eq!(cands.len(), 40);
    assert!(cands.iter().all(|c| c.ranked.len() == 3));
    let model = read_checkpoint(&dir.path().join("run/model.ckpt")).unwrap();
    assert!(model.params.is_finite());
    let log = std::fs::read_to_string(dir.path().join("run/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    for name in ["S.csv", "G.csv", "A.csv", "C.csv"] {
        assert!(dir.path().join("matrices").join(name).exists());
    }
}
