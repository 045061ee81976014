use spinewalk::gait::GaitId;
use spinewalk::spine::StrategyId::{self, *};
use spinewalk::study::*;

fn fixture(name: &str) -> Vec<VoteRecord> {
    load_votes(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/study/").to_string() + name).unwrap()
}

#[test]
fn small_fixture_scores() {
    let recs = fixture("votes_small.csv");
    assert_eq!(recs.len(), 6);
    let (kept, dropped) = validate_participants(&recs, CONTRADICTION_THRESHOLD);
    assert!(dropped.is_empty());
    let rep = naturalness_scores(&kept, Fixed).unwrap();
    let score = |s: StrategyId| rep.scores[&s].score;
    assert!((score(Stiffness) - 1.0 / 3.0).abs() < 1e-15);
    assert!((score(TimeOpt) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(score(FootTracking), 0.0);
    assert_eq!(score(TimeReal), 0.0);
    assert!((rep.total - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(rep.per_gait[&GaitId::Walk].len(), 2);
    assert_eq!(rep.per_gait[&GaitId::Trot][&FootTracking].votes, 3);
    assert_eq!(rep.display_counts()[&Fixed], [0.5, 1.0, 0.5]);
    assert!((interact_match_rate(&kept).unwrap() - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn full_fixture_screening_and_match_rate() {
    let recs = fixture("votes.csv");
    assert_eq!(recs.len(), 50 * 18);
    let (kept, dropped) = validate_participants(&recs, CONTRADICTION_THRESHOLD);
    assert_eq!(dropped, vec!["p50".to_string()]);
    assert_eq!(kept.len(), 882);
    let matched = kept.iter().filter(|r| r.most_natural == r.most_interact).count();
    assert_eq!(matched, 862);
    let rate = interact_match_rate(&kept).unwrap();
    assert!((rate - 0.9773).abs() < 1e-4);

    let rep = naturalness_scores(&kept, Fixed).unwrap();
    assert_eq!(rep.scores.len(), 4);
    for (s, sc) in &rep.scores {
        assert!((-1.0..=1.0).contains(&sc.score), "{s:?}");
        // Each candidate appears in 3 of 6 pairs per gait.
        assert_eq!(sc.votes, 49 * 9);
    }
    assert_eq!(rep.per_gait.len(), 3);
}
