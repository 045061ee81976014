//! Subjective comparison study: vote ingestion, participant screening,
//! baseline-relative naturalness scores and the natural/interact match rate.
//!
//! Vote CSV schema, one row per (participant, video):
//!
//! ```text
//! participant,video,gait,shown_1,shown_2,shown_3,most_natural,least_natural,most_interact
//! p01,v03,walk,fixed,stiffness,time_opt,time_opt,stiffness,time_opt
//! ```
//!
//! Strategy columns use the strategy names (`fixed`, `stiffness`,
//! `foot_tracking`, `time_real`, `time_opt`); `gait` is `walk`, `trot` or
//! `turn`.
//!
//! The naturalness score is a reconstruction, not a published formula. For
//! a strategy S and the baseline B, each vote in a video showing S counts
//! +1 if S outranks B (S voted most natural, or B voted least natural), −1
//! in the mirrored case and 0 when neither or both hold. The score is the
//! sum over the number of such votes, so it lies in [−1, 1].

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::GaitId;
use crate::spine::StrategyId;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("reading votes: {0}")]
    Io(#[from] std::io::Error),
    #[error("video {video} does not show the baseline {baseline}")]
    BaselineMissing { video: String, baseline: String },
    #[error("no records")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub participant: String,
    pub video: String,
    pub gait: GaitId,
    pub shown: [StrategyId; 3],
    pub most_natural: StrategyId,
    pub least_natural: StrategyId,
    pub most_interact: StrategyId,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    participant: String,
    video: String,
    gait: String,
    shown_1: String,
    shown_2: String,
    shown_3: String,
    most_natural: String,
    least_natural: String,
    most_interact: String,
}

impl VoteRecord {
    /// Checks that the shown strategies are distinct and every vote names
    /// one of them.
    pub fn validate(&self) -> Result<(), String> {
        let [a, b, c] = self.shown;
        if a == b || b == c || a == c {
            return Err(format!("shown strategies are not distinct: {}, {}, {}", a.name(), b.name(), c.name()));
        }
        for (field, s) in [("most_natural", self.most_natural), ("least_natural", self.least_natural), ("most_interact", self.most_interact)]
        {
            if !self.shown.contains(&s) {
                return Err(format!("{field} = {} was not shown in video {}", s.name(), self.video));
            }
        }
        Ok(())
    }

    pub fn shows(&self, s: StrategyId) -> bool {
        self.shown.contains(&s)
    }

    /// Same strategy voted most and least natural.
    pub fn is_contradictory(&self) -> bool {
        self.most_natural == self.least_natural
    }

    fn to_row(&self) -> Row {
        Row {
            participant: self.participant.clone(),
            video: self.video.clone(),
            gait: self.gait.name().to_string(),
            shown_1: self.shown[0].name().to_string(),
            shown_2: self.shown[1].name().to_string(),
            shown_3: self.shown[2].name().to_string(),
            most_natural: self.most_natural.name().to_string(),
            least_natural: self.least_natural.name().to_string(),
            most_interact: self.most_interact.name().to_string(),
        }
    }
}

fn from_row(row: Row) -> Result<VoteRecord, String> {
    let strategy = |field: &str, s: &str| StrategyId::parse(s).map_err(|_| format!("{field}: unknown strategy {s:?}"));
    let gait = GaitId::parse(&row.gait).map_err(|_| format!("gait: unknown gait {:?}", row.gait))?;
    let rec = VoteRecord {
        participant: row.participant,
        video: row.video,
        gait,
        shown: [strategy("shown_1", &row.shown_1)?, strategy("shown_2", &row.shown_2)?, strategy("shown_3", &row.shown_3)?],
        most_natural: strategy("most_natural", &row.most_natural)?,
        least_natural: strategy("least_natural", &row.least_natural)?,
        most_interact: strategy("most_interact", &row.most_interact)?,
    };
    rec.validate()?;
    Ok(rec)
}

/// Reads and validates vote rows. Errors carry the 1-based file line.
pub fn parse_votes<R: Read>(r: R) -> Result<Vec<VoteRecord>, StudyError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    let headers = reader
        .headers()
        .map_err(|e| StudyError::Schema { line: 1, message: e.to_string() })?
        .clone();
    for rec in reader.records() {
        let schema = |e: csv::Error| StudyError::Schema { line: e.position().map_or(0, |p| p.line()), message: e.to_string() };
        let rec = rec.map_err(schema)?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| StudyError::Schema { line, message: e.to_string() })?;
        out.push(from_row(row).map_err(|message| StudyError::Schema { line, message })?);
    }
    Ok(out)
}

pub fn load_votes(path: impl AsRef<Path>) -> Result<Vec<VoteRecord>, StudyError> {
    parse_votes(std::fs::File::open(path)?)
}

pub fn write_votes<W: Write>(records: &[VoteRecord], w: W) -> Result<(), StudyError> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(r.to_row()).map_err(|e| StudyError::Io(std::io::Error::other(e)))?;
    }
    writer.flush()?;
    Ok(())
}

/// Default number of contradictory answers that disqualifies a participant.
pub const CONTRADICTION_THRESHOLD: usize = 2;

/// Drops every participant with at least `threshold` contradictory
/// answers. Returns the kept records in input order and the dropped ids,
/// sorted.
pub fn validate_participants(records: &[VoteRecord], threshold: usize) -> (Vec<VoteRecord>, Vec<String>) {
    let mut contradictions: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_contradictory()) {
        *contradictions.entry(r.participant.as_str()).or_default() += 1;
    }
    let dropped: BTreeSet<&str> = contradictions.into_iter().filter(|&(_, n)| n >= threshold).map(|(p, _)| p).collect();
    let kept = records.iter().filter(|r| !dropped.contains(r.participant.as_str())).cloned().collect();
    (kept, dropped.into_iter().map(str::to_string).collect())
}

/// +1, −1 or 0 for one vote comparing `s` with `baseline`.
pub fn pairwise_vote(r: &VoteRecord, s: StrategyId, baseline: StrategyId) -> i32 {
    let up = r.most_natural == s || r.least_natural == baseline;
    let down = r.most_natural == baseline || r.least_natural == s;
    i32::from(up) - i32::from(down)
}

/// Vote totals for one strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteCounts {
    pub most_natural: u32,
    pub least_natural: u32,
    pub most_interact: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyScore {
    pub score: f64,
    pub votes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub baseline: StrategyId,
    /// Pooled score per non-baseline strategy.
    pub scores: BTreeMap<StrategyId, StrategyScore>,
    /// Scores restricted to each gait.
    pub per_gait: BTreeMap<GaitId, BTreeMap<StrategyId, StrategyScore>>,
    /// Mean of the pooled scores over the scored strategies.
    pub total: f64,
    /// Raw counts, baseline included.
    pub counts: BTreeMap<StrategyId, VoteCounts>,
}

impl ScoreReport {
    /// Counts for display. The baseline appears in every video, twice as
    /// often as the others, so its counts are halved.
    pub fn display_counts(&self) -> BTreeMap<StrategyId, [f64; 3]> {
        self.counts
            .iter()
            .map(|(&s, c)| {
                let k = if s == self.baseline { 0.5 } else { 1.0 };
                (s, [c.most_natural as f64 * k, c.least_natural as f64 * k, c.most_interact as f64 * k])
            })
            .collect()
    }
}

fn score_of<'a>(records: impl Iterator<Item = &'a VoteRecord>, s: StrategyId, baseline: StrategyId) -> Option<StrategyScore> {
    let (mut sum, mut n) = (0i64, 0u32);
    for r in records.filter(|r| r.shows(s)) {
        sum += i64::from(pairwise_vote(r, s, baseline));
        n += 1;
    }
    (n > 0).then(|| StrategyScore { score: sum as f64 / f64::from(n), votes: n })
}

pub fn naturalness_scores(records: &[VoteRecord], baseline: StrategyId) -> Result<ScoreReport, StudyError> {
    if let Some(r) = records.iter().find(|r| !r.shows(baseline)) {
        return Err(StudyError::BaselineMissing { video: r.video.clone(), baseline: baseline.name().to_string() });
    }
    let candidates: BTreeSet<StrategyId> = records.iter().flat_map(|r| r.shown).filter(|&s| s != baseline).collect();
    let mut scores = BTreeMap::new();
    for &s in &candidates {
        if let Some(sc) = score_of(records.iter(), s, baseline) {
            scores.insert(s, sc);
        }
    }
    let gaits: BTreeSet<GaitId> = records.iter().map(|r| r.gait).collect();
    let mut per_gait = BTreeMap::new();
    for g in gaits {
        let mut row = BTreeMap::new();
        for &s in &candidates {
            if let Some(sc) = score_of(records.iter().filter(|r| r.gait == g), s, baseline) {
                row.insert(s, sc);
            }
        }
        per_gait.insert(g, row);
    }
    let total = if scores.is_empty() { 0.0 } else { scores.values().map(|s| s.score).sum::<f64>() / scores.len() as f64 };
    let mut counts: BTreeMap<StrategyId, VoteCounts> = BTreeMap::new();
    for r in records {
        counts.entry(r.most_natural).or_default().most_natural += 1;
        counts.entry(r.least_natural).or_default().least_natural += 1;
        counts.entry(r.most_interact).or_default().most_interact += 1;
    }
    Ok(ScoreReport { baseline, scores, per_gait, total, counts })
}

/// Fraction of records whose most-natural and most-interact votes agree.
pub fn interact_match_rate(records: &[VoteRecord]) -> Result<f64, StudyError> {
    if records.is_empty() {
        return Err(StudyError::EmptyInput);
    }
    let matched = records.iter().filter(|r| r.most_natural == r.most_interact).count();
    Ok(matched as f64 / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use StrategyId::*;

    const HEADER: &str = "participant,video,gait,shown_1,shown_2,shown_3,most_natural,least_natural,most_interact\n";

    fn vote(p: &str, v: &str, shown: [StrategyId; 3], most: StrategyId, least: StrategyId) -> VoteRecord {
        VoteRecord {
            participant: p.into(),
            video: v.into(),
            gait: GaitId::Walk,
            shown,
            most_natural: most,
            least_natural: least,
            most_interact: most,
        }
    }

    #[test]
    fn parse_examples() {
        assert!(parse_votes(HEADER.as_bytes()).unwrap().is_empty());
        let text = format!(
            "{HEADER}p1,v1,walk,fixed,stiffness,time_opt,time_opt,stiffness,time_opt\n\
             p1,v2,trot,fixed,foot_tracking,time_real,fixed,time_real,foot_tracking\n"
        );
        let recs = parse_votes(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].gait, GaitId::Trot);
        assert_eq!(recs[1].most_interact, FootTracking);
        let mut buf = Vec::new();
        write_votes(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let not_shown = format!("{HEADER}p1,v1,walk,fixed,stiffness,time_opt,time_opt,stiffness,time_opt\np1,v2,walk,fixed,stiffness,time_opt,time_real,fixed,fixed\n");
        match parse_votes(not_shown.as_bytes()) {
            Err(StudyError::Schema { line: 3, message }) => assert!(message.contains("most_natural")),
            other => panic!("{other:?}"),
        }
        let dup = format!("{HEADER}p1,v1,walk,fixed,fixed,time_opt,time_opt,fixed,time_opt\n");
        assert!(matches!(parse_votes(dup.as_bytes()), Err(StudyError::Schema { line: 2, .. })));
        let unknown = format!("{HEADER}p1,v1,walk,fixed,wiggle,time_opt,time_opt,fixed,time_opt\n");
        assert!(matches!(parse_votes(unknown.as_bytes()), Err(StudyError::Schema { line: 2, .. })));
        let short = format!("{HEADER}p1,v1,walk,fixed\n");
        assert!(matches!(parse_votes(short.as_bytes()), Err(StudyError::Schema { .. })));
    }

    #[test]
    fn participant_screening() {
        let shown = [Fixed, Stiffness, TimeOpt];
        let mut recs = Vec::new();
        for v in 0..18 {
            let vid = format!("v{v}");
            recs.push(vote("clean", &vid, shown, TimeOpt, Stiffness));
            let bad = if v < 3 { TimeOpt } else { Stiffness };
            recs.push(vote("thrice", &vid, shown, TimeOpt, bad));
            let once = if v == 7 { TimeOpt } else { Stiffness };
            recs.push(vote("once", &vid, shown, TimeOpt, once));
        }
        let (kept, dropped) = validate_participants(&recs, CONTRADICTION_THRESHOLD);
        assert_eq!(dropped, vec!["thrice".to_string()]);
        assert_eq!(kept.len(), 36);
        assert!(kept.iter().all(|r| r.participant != "thrice"));
        let (_, dropped) = validate_participants(&recs, 1);
        assert_eq!(dropped, vec!["once".to_string(), "thrice".to_string()]);
    }

    #[test]
    fn score_extremes() {
        let shown = [Fixed, Stiffness, TimeOpt];
        let best: Vec<_> = (0..5).map(|i| vote("p", &format!("v{i}"), shown, TimeOpt, Fixed)).collect();
        let rep = naturalness_scores(&best, Fixed).unwrap();
        assert_eq!(rep.scores[&TimeOpt].score, 1.0);
        let worst: Vec<_> = (0..5).map(|i| vote("p", &format!("v{i}"), shown, Fixed, Stiffness)).collect();
        let rep = naturalness_scores(&worst, Fixed).unwrap();
        assert_eq!(rep.scores[&TimeOpt].score, -1.0);
        assert_eq!(rep.scores[&Stiffness].score, -1.0);
        assert_eq!(rep.counts[&Fixed].most_natural, 5);
        assert_eq!(rep.display_counts()[&Fixed][0], 2.5);
    }

    #[test]
    fn baseline_missing() {
        let r = vec![vote("p", "v9", [Stiffness, TimeOpt, TimeReal], TimeOpt, TimeReal)];
        assert!(matches!(naturalness_scores(&r, Fixed), Err(StudyError::BaselineMissing { video, .. }) if video == "v9"));
    }

    // Exhaustive ranking oracle: rank 1 for most, −1 for least, 0 otherwise,
    // then compare ranks; contradictory ballots give both ranks and tie.
    fn oracle(r: &VoteRecord, s: StrategyId, b: StrategyId) -> i32 {
        let rank = |x: StrategyId| i32::from(r.most_natural == x) - i32::from(r.least_natural == x);
        (rank(s) - rank(b)).signum()
    }

    #[test]
    fn mixed_fixture_matches_enumeration() {
        let shown = [Fixed, FootTracking, TimeReal];
        let picks = [
            (FootTracking, Fixed),
            (Fixed, TimeReal),
            (TimeReal, FootTracking),
            (TimeReal, Fixed),
            (FootTracking, TimeReal),
            (Fixed, FootTracking),
            (FootTracking, FootTracking),
            (TimeReal, TimeReal),
            (Fixed, Fixed),
            (FootTracking, Fixed),
        ];
        let recs: Vec<_> = picks.iter().enumerate().map(|(i, &(m, l))| vote("p", &format!("v{i}"), shown, m, l)).collect();
        let rep = naturalness_scores(&recs, Fixed).unwrap();
        for s in [FootTracking, TimeReal] {
            let expected = recs.iter().map(|r| oracle(r, s, Fixed)).sum::<i32>() as f64 / 10.0;
            assert_eq!(rep.scores[&s].score, expected);
        }
        assert_eq!(rep.scores[&FootTracking].score, 0.1);
        assert_eq!(rep.scores[&TimeReal].score, 0.1);
        assert!((rep.total - (rep.scores[&FootTracking].score + rep.scores[&TimeReal].score) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn match_rate() {
        let shown = [Fixed, Stiffness, TimeOpt];
        let mut recs: Vec<_> = (0..4).map(|i| vote("p", &format!("v{i}"), shown, TimeOpt, Fixed)).collect();
        assert_eq!(interact_match_rate(&recs).unwrap(), 1.0);
        recs[0].most_interact = Stiffness;
        assert_eq!(interact_match_rate(&recs).unwrap(), 0.75);
        for r in &mut recs {
            r.most_interact = Fixed;
        }
        assert_eq!(interact_match_rate(&recs).unwrap(), 0.0);
        assert!(matches!(interact_match_rate(&[]), Err(StudyError::EmptyInput)));
    }

    fn any_vote() -> impl Strategy<Value = VoteRecord> {
        let others = [Stiffness, FootTracking, TimeReal, TimeOpt];
        (0usize..4, 1usize..4, 0usize..3, 0usize..3, 0usize..3, 0usize..5, prop_oneof![Just(GaitId::Walk), Just(GaitId::Trot), Just(GaitId::Turn)])
            .prop_map(move |(a, step, m, l, i, p, gait)| {
                let shown = [Fixed, others[a], others[(a + step) % 4]];
                VoteRecord {
                    participant: format!("p{p}"),
                    video: format!("v{a}{step}"),
                    gait,
                    shown,
                    most_natural: shown[m],
                    least_natural: shown[l],
                    most_interact: shown[i],
                }
            })
    }

    proptest! {
        #[test]
        fn rule_matches_oracle(r in any_vote(), k in 1usize..3) {
            prop_assert_eq!(pairwise_vote(&r, r.shown[k], Fixed), oracle(&r, r.shown[k], Fixed));
        }

        #[test]
        fn swapping_labels_negates(recs in proptest::collection::vec(any_vote(), 1..40)) {
            let rep = naturalness_scores(&recs, Fixed).unwrap();
            for (&s, sc) in &rep.scores {
                // Exchange S and the baseline in every ballot that shows S.
                let swap = |x: StrategyId| if x == s { Fixed } else if x == Fixed { s } else { x };
                let swapped: Vec<_> = recs.iter().map(|r| {
                    let mut r = r.clone();
                    if r.shows(s) {
                        r.most_natural = swap(r.most_natural);
                        r.least_natural = swap(r.least_natural);
                    }
                    r
                }).collect();
                let again = naturalness_scores(&swapped, Fixed).unwrap();
                prop_assert_eq!(again.scores[&s].score, -sc.score);
            }
        }

        #[test]
        fn unranked_vote_pulls_toward_zero(recs in proptest::collection::vec(any_vote(), 1..30)) {
            let rep = naturalness_scores(&recs, Fixed).unwrap();
            for (&s, sc) in &rep.scores {
                let third = recs.iter().find(|r| r.shows(s)).unwrap().shown.into_iter().find(|&x| x != s && x != Fixed).unwrap();
                let mut more = recs.clone();
                let mut extra = recs.iter().find(|r| r.shows(s)).unwrap().clone();
                extra.most_natural = third;
                extra.least_natural = third;
                more.push(extra);
                let after = naturalness_scores(&more, Fixed).unwrap().scores[&s].score;
                if sc.score == 0.0 {
                    prop_assert_eq!(after, 0.0);
                } else {
                    prop_assert!(after.abs() < sc.score.abs() && after.signum() == sc.score.signum());
                }
            }
        }

        #[test]
        fn order_does_not_matter(recs in proptest::collection::vec(any_vote(), 1..30), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(naturalness_scores(&recs, Fixed).unwrap(), naturalness_scores(&shuffled, Fixed).unwrap());
            prop_assert_eq!(interact_match_rate(&recs).unwrap(), interact_match_rate(&shuffled).unwrap());
            let (mut a, da) = validate_participants(&recs, 2);
            let (mut b, db) = validate_participants(&shuffled, 2);
            prop_assert_eq!(da, db);
            a.sort_by(|x, y| (&x.participant, &x.video).cmp(&(&y.participant, &y.video)));
            b.sort_by(|x, y| (&x.participant, &x.video).cmp(&(&y.participant, &y.video)));
            prop_assert_eq!(a.len(), b.len());
        }
    }
}
