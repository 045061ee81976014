//! CoT-versus-speed curves and the speed where trotting overtakes walking.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;

const BISECTION_TOL: f64 = 1e-6;

/// CoT sampled at increasing speeds, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotCurve {
    points: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    velocity: f64,
    cot: f64,
}

impl CotCurve {
    /// `points` are (velocity m/s, CoT); velocities must strictly increase
    /// and every CoT be finite and positive.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, MetricsError> {
        if points.len() < 2 {
            return Err(MetricsError::InvalidCurve(format!("need at least 2 points, got {}", points.len())));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(MetricsError::InvalidCurve(format!("velocities not increasing at {}", w[1].0)));
            }
        }
        if let Some(p) = points.iter().find(|p| !p.0.is_finite() || !(p.1 > 0.0) || !p.1.is_finite()) {
            return Err(MetricsError::InvalidCurve(format!("bad point {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Linear interpolation; `v` must lie within [`CotCurve::range`].
    pub fn eval(&self, v: f64) -> f64 {
        let p = &self.points;
        let i = p.partition_point(|q| q.0 <= v).clamp(1, p.len() - 1);
        let (a, b) = (p[i - 1], p[i]);
        a.1 + (b.1 - a.1) * (v - a.0) / (b.0 - a.0)
    }

    /// CSV with a `velocity,cot` header.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, MetricsError> {
        let mut reader = csv::Reader::from_reader(r);
        let mut points = Vec::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| MetricsError::InvalidCurve(e.to_string()))?;
            points.push((row.velocity, row.cot));
        }
        Self::new(points)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| MetricsError::InvalidCurve(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        for &(velocity, cot) in &self.points {
            writer.serialize(Row { velocity, cot }).map_err(std::io::Error::other)?;
        }
        writer.flush()
    }
}

/// Crossing speed of the walk and trot curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub velocity: f64,
    /// True when walking is cheaper below the crossing.
    pub trot_cheaper_above: bool,
}

/// Finds where `walk − trot` changes sign over the common speed range.
/// Each sign change is located by bisection on the interpolated curves.
pub fn gait_transition(walk: &CotCurve, trot: &CotCurve) -> Result<Transition, MetricsError> {
    let lo = walk.range().0.max(trot.range().0);
    let hi = walk.range().1.min(trot.range().1);
    if !(lo < hi) {
        return Err(MetricsError::NoCrossing);
    }
    let diff = |v: f64| walk.eval(v) - trot.eval(v);
    let mut knots: Vec<f64> = walk.points.iter().chain(&trot.points).map(|p| p.0).filter(|&v| v > lo && v < hi).collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    // Sign changes between consecutive knots with a non-zero difference.
    let mut crossings = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for &v in &knots {
        let d = diff(v);
        if d == 0.0 {
            continue;
        }
        if let Some((va, da)) = last {
            if da.signum() != d.signum() {
                crossings.push((bisect(&diff, va, v), da < 0.0));
            }
        }
        last = Some((v, d));
    }
    match crossings.as_slice() {
        [] => Err(MetricsError::NoCrossing),
        [(velocity, walk_cheaper)] => Ok(Transition { velocity: *velocity, trot_cheaper_above: *walk_cheaper }),
        many => Err(MetricsError::MultipleCrossings(many.iter().map(|c| c.0).collect())),
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    while b - a > BISECTION_TOL {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(f: impl Fn(f64) -> f64, vs: &[f64]) -> CotCurve {
        CotCurve::new(vs.iter().map(|&v| (v, f(v))).collect()).unwrap()
    }

    #[test]
    fn linear_curves_cross_at_half() {
        let vs = [0.1, 0.3, 0.6, 0.9];
        let t = gait_transition(&curve(|v| 1.0 + v, &vs), &curve(|v| 2.0 - v, &vs)).unwrap();
        assert!((t.velocity - 0.5).abs() < 1e-4);
        assert!(t.trot_cheaper_above);
    }

    #[test]
    fn identical_curves_never_cross() {
        let c = curve(|v| 1.0 + v * v, &[0.1, 0.2, 0.4]);
        assert!(matches!(gait_transition(&c, &c), Err(MetricsError::NoCrossing)));
        let far = curve(|v| 1.0 + v, &[1.0, 2.0]);
        assert!(matches!(gait_transition(&c, &far), Err(MetricsError::NoCrossing)));
    }

    #[test]
    fn multiple_crossings_are_reported() {
        let vs = [0.0, 0.25, 0.5, 0.75, 1.0];
        let walk = curve(|v| 1.0 + 0.2 * (6.0 * v).sin(), &vs);
        let trot = curve(|_| 1.0 + 1e-3, &vs);
        match gait_transition(&walk, &trot) {
            Err(MetricsError::MultipleCrossings(v)) => assert!(v.len() >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crossing_at_a_knot() {
        let vs = [0.1, 0.2, 0.3];
        let t = gait_transition(&curve(|v| 1.0 + v, &vs), &curve(|v| 1.4 - v, &vs)).unwrap();
        assert!((t.velocity - 0.2).abs() < 1e-4);
    }

    #[test]
    fn curve_validation_and_csv() {
        assert!(CotCurve::new(vec![(0.2, 1.0)]).is_err());
        assert!(CotCurve::new(vec![(0.2, 1.0), (0.2, 1.1)]).is_err());
        assert!(CotCurve::new(vec![(0.2, 1.0), (0.3, -1.0)]).is_err());
        let c = curve(|v| 1.0 / v, &[0.1, 0.25, 0.5]);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("velocity,cot\n"));
        assert_eq!(CotCurve::read_csv(&buf[..]).unwrap(), c);
        assert!(CotCurve::read_csv(&b"velocity,cot\n0.1,abc\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn regridding_keeps_the_crossing(extra in proptest::collection::vec(0.2f64..0.3, 1..8)) {
            let walk = CotCurve::new(vec![(0.2, 1.10), (0.3, 1.00)]).unwrap();
            let trot = CotCurve::new(vec![(0.2, 1.183), (0.3, 0.883)]).unwrap();
            let base = gait_transition(&walk, &trot).unwrap().velocity;
            let regrid = |c: &CotCurve| {
                let mut vs: Vec<f64> = c.points().iter().map(|p| p.0).chain(extra.iter().copied()).collect();
                vs.sort_by(f64::total_cmp);
                vs.dedup();
                CotCurve::new(vs.iter().map(|&v| (v, c.eval(v))).collect()).unwrap()
            };
            let moved = gait_transition(&regrid(&walk), &regrid(&trot)).unwrap().velocity;
            prop_assert!((moved - base).abs() < 1e-3);
        }
    }
}
