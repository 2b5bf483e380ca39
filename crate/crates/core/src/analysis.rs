//! Trajectory analysis on odd paths: bad paths, their endpoints, the dual
//! particle process and its gap.
//!
//! On an odd path the unique optimum selects exactly the even positions, so
//! a vertex *deviates* when its bit is 1 at an odd index or 0 at an even one.

use std::fmt::Write as _;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphInstance, InstanceKind, InstanceSpec, Vertex};
use crate::operators::{Hook, Proposal};
use crate::solution::{known_opt, BitString, Candidate};

fn require_odd(n: usize, bits: &BitString) -> Result<()> {
    if n.is_multiple_of(2) {
        return Err(Error::UnsupportedInstance(format!(
            "bad paths are defined on odd paths only, got n = {n}"
        )));
    }
    if bits.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: bits.len(),
        });
    }
    Ok(())
}

fn path_feasible(bits: &BitString) -> bool {
    (1..bits.len()).all(|v| bits.get(v) || bits.get(v + 1))
}

#[inline]
fn deviates(bits: &BitString, k: Vertex) -> bool {
    bits.get(k) != k.is_multiple_of(2)
}

/// Maximal intervals of deviating vertices, sorted and disjoint.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadPathReport {
    pub intervals: Vec<(Vertex, Vertex)>,
}

impl BadPathReport {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    /// `(l, r)` when there is exactly one interval.
    pub fn single(&self) -> Option<(Vertex, Vertex)> {
        match self.intervals.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }
}

pub fn bad_paths(n: usize, bits: &BitString) -> Result<BadPathReport> {
    require_odd(n, bits)?;
    let mut intervals = Vec::new();
    let mut open: Option<Vertex> = None;
    for k in 1..=n {
        match (deviates(bits, k), open) {
            (true, None) => open = Some(k),
            (false, Some(start)) => {
                intervals.push((start, k - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        intervals.push((start, n));
    }
    Ok(BadPathReport { intervals })
}

/// The dual particle string `X̃` and its largest interior gap `H`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualState {
    /// Indexed `0..=(n+1)/2`.
    pub dual_bits: Vec<bool>,
    /// Longest run of zeros strictly between two set bits.
    pub gap: Option<usize>,
}

impl DualState {
    pub fn to_bit_string(&self) -> String {
        self.dual_bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }
}

/// Longest zero run strictly between set bits; `None` with fewer than two.
pub fn longest_interior_gap(bits: &[bool]) -> Option<usize> {
    let mut last: Option<usize> = None;
    let mut best: Option<usize> = None;
    for (i, &b) in bits.iter().enumerate() {
        if b {
            if let Some(prev) = last {
                let run = i - prev - 1;
                best = Some(best.map_or(run, |m: usize| m.max(run)));
            }
            last = Some(i);
        }
    }
    best
}

/// Irreducibility of `bits` is the caller's responsibility.
pub fn dual(n: usize, bits: &BitString) -> Result<DualState> {
    require_odd(n, bits)?;
    if !path_feasible(bits) {
        return Err(Error::Precondition(format!("{bits} is not a cover of the path")));
    }
    let half = n.div_ceil(2);
    let mut dual_bits = vec![false; half + 1];
    dual_bits[0] = bits.get(1);
    dual_bits[half] = bits.get(n);
    for (i, slot) in dual_bits.iter_mut().enumerate().take(half).skip(1) {
        *slot = bits.get(2 * i) && (bits.get(2 * i - 1) || bits.get(2 * i + 1));
    }
    let gap = longest_interior_gap(&dual_bits);
    Ok(DualState { dual_bits, gap })
}

/// `(r - l + 1) / n` for the single bad interval, `0` at the optimum.
pub fn relative_bad_path_length(n: usize, bits: &BitString) -> Result<Ratio<usize>> {
    let report = bad_paths(n, bits)?;
    if !path_feasible(bits) {
        return Err(Error::Precondition(format!("{bits} is not a cover of the path")));
    }
    match report.intervals.as_slice() {
        [] => Ok(Ratio::from_integer(0)),
        [(i, j)] => Ok(Ratio::new(j - i + 1, n)),
        many => Err(Error::InvariantViolation(format!(
            "expected at most one bad path, found {}",
            many.len()
        ))),
    }
}

/// Feasible state with the single bad interval `(l, r)`; both ends odd.
pub fn single_bad_path_state(n: usize, l: Vertex, r: Vertex) -> Result<BitString> {
    if n.is_multiple_of(2) || l.is_multiple_of(2) || r.is_multiple_of(2) || l > r || r > n {
        return Err(Error::InvalidParameter(format!(
            "need odd n and odd 1 <= l <= r <= n, got n={n}, l={l}, r={r}"
        )));
    }
    Ok(BitString::from_fn(n, |k| {
        let optimal = k % 2 == 0;
        if (l..=r).contains(&k) {
            !optimal
        } else {
            optimal
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointPoint {
    pub t: u64,
    pub l: Vertex,
    pub r: Vertex,
    pub b: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointTrace {
    pub points: Vec<EndpointPoint>,
    /// Time of the first state with more than one bad interval, where the
    /// trace stops.
    pub truncated_at: Option<u64>,
}

/// Endpoints `(l, r, b)` along a trajectory of `(t, X_t)` pairs.
///
/// Once `B(X_t)` is empty both endpoints are pinned to
/// `m = l(X_0) + (r(X_0) - l(X_0)) / 2`, or to the middle vertex when the
/// trajectory starts at the optimum.
pub fn endpoint_trace(n: usize, trajectory: &[(u64, BitString)]) -> Result<EndpointTrace> {
    let mut out = EndpointTrace::default();
    let mut m: Option<Vertex> = None;
    for (t, bits) in trajectory {
        let report = bad_paths(n, bits)?;
        let (l, r) = match report.intervals.as_slice() {
            [(l, r)] => (*l, *r),
            [] => {
                let mid = *m.get_or_insert(n.div_ceil(2));
                (mid, mid)
            }
            _ => {
                out.truncated_at = Some(*t);
                break;
            }
        };
        m.get_or_insert(l + (r - l) / 2);
        out.points.push(EndpointPoint {
            t: *t,
            l,
            r,
            b: r as i64 - l as i64,
        });
    }
    Ok(out)
}

/// Endpoint moves measured inside the single-bad-path regime.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointTransitions {
    /// Iterations started from a state in the regime.
    pub measured: u64,
    pub l_up2: u64,
    pub l_down2: u64,
    pub r_up2: u64,
    pub r_down2: u64,
    /// Moves of either endpoint by more than 2.
    pub far: u64,
}

/// Hook measuring endpoint moves of `l` and `r` per iteration while the
/// current state has one bad interval with `l >= 3`, `r <= n - 2` and
/// `r - l >= 8`.
#[derive(Clone, Debug, Default)]
pub struct EndpointCounter {
    pub counts: EndpointTransitions,
    n: usize,
    current: Option<(Vertex, Vertex)>,
    /// Set once the regime is left; nothing is counted afterwards.
    pub left_regime_at: Option<u64>,
}

impl EndpointCounter {
    fn classify(&self, bits: &BitString) -> Option<(Vertex, Vertex)> {
        bad_paths(self.n, bits).ok()?.single()
    }

    fn in_regime(&self, (l, r): (Vertex, Vertex)) -> bool {
        l >= 3 && r + 2 <= self.n && r - l >= 8
    }
}

impl Hook for EndpointCounter {
    fn on_start(&mut self, g: &GraphInstance, state: &Candidate) {
        self.n = g.n();
        self.current = self.classify(state.bits());
        if !self.current.is_some_and(|lr| self.in_regime(lr)) {
            self.left_regime_at = Some(0);
        }
    }

    fn on_step(
        &mut self,
        _g: &GraphInstance,
        t: u64,
        proposal: &Proposal<'_>,
        accepted: bool,
        state: &Candidate,
    ) {
        if self.left_regime_at.is_some() {
            return;
        }
        let Some((l, r)) = self.current else { return };
        self.counts.measured += 1;
        if !accepted || proposal.flipped.is_empty() {
            return;
        }
        let next = self.classify(state.bits());
        if let Some((l2, r2)) = next {
            let dl = l2 as i64 - l as i64;
            let dr = r2 as i64 - r as i64;
            match dl {
                2 => self.counts.l_up2 += 1,
                -2 => self.counts.l_down2 += 1,
                _ => {}
            }
            match dr {
                2 => self.counts.r_up2 += 1,
                -2 => self.counts.r_down2 += 1,
                _ => {}
            }
            if dl.abs() > 2 || dr.abs() > 2 {
                self.counts.far += 1;
            }
        }
        self.current = next;
        if !next.is_some_and(|lr| self.in_regime(lr)) {
            self.left_regime_at = Some(t);
        }
    }
}

/// One row of the `analyze` output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub ones: usize,
    pub uncovered: usize,
    pub fitness: u64,
    pub level: Option<i64>,
    pub n_bad_intervals: Option<usize>,
    pub l: Option<Vertex>,
    pub r: Option<Vertex>,
    pub b: Option<i64>,
    pub h: Option<usize>,
}

pub const TRACE_COLUMNS: &str = "t,ones,uncovered,fitness,level,n_bad_intervals,l,r,b,H";

fn cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl TraceRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.ones,
            self.uncovered,
            self.fitness,
            cell(&self.level),
            cell(&self.n_bad_intervals),
            cell(&self.l),
            cell(&self.r),
            cell(&self.b),
            cell(&self.h)
        )
    }
}

/// Per-point statistics; path-specific columns are blank elsewhere.
pub fn analyze_trace(g: &GraphInstance, trajectory: &[(u64, BitString)]) -> Result<Vec<TraceRow>> {
    let opt = known_opt(g);
    let odd_path = g.kind() == InstanceKind::Path && g.n() % 2 == 1;
    let endpoints = if odd_path {
        Some(endpoint_trace(g.n(), trajectory)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(trajectory.len());
    for (idx, (t, bits)) in trajectory.iter().enumerate() {
        let c = Candidate::new(g, bits.clone())?;
        let mut row = TraceRow {
            t: *t,
            ones: c.ones(),
            uncovered: c.uncovered(),
            fitness: c.fitness(),
            level: opt
                .as_ref()
                .filter(|_| c.is_feasible())
                .map(|o| c.ones() as i64 - o.size as i64),
            n_bad_intervals: None,
            l: None,
            r: None,
            b: None,
            h: None,
        };
        if odd_path {
            row.n_bad_intervals = Some(bad_paths(g.n(), bits)?.len());
            if let Some(p) = endpoints.as_ref().and_then(|e| e.points.get(idx)) {
                row.l = Some(p.l);
                row.r = Some(p.r);
                row.b = Some(p.b);
            }
            if c.is_feasible() {
                row.h = dual(g.n(), bits)?.gap;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Trace file: a `# instance=<spec>` header and `t,bits` rows.
pub fn write_trace(spec: &InstanceSpec, points: &[(u64, BitString)]) -> String {
    let mut out = format!("# instance={spec}\nt,bits\n");
    for (t, bits) in points {
        let _ = writeln!(out, "{t},{bits}");
    }
    out
}

pub fn read_trace(text: &str) -> Result<(InstanceSpec, Vec<(u64, BitString)>)> {
    let mut spec = None;
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(s) = rest.trim().strip_prefix("instance=") {
                spec = Some(InstanceSpec::from_str(s.trim()).map_err(|e| parse_err(e.to_string()))?);
            }
            continue;
        }
        if line.is_empty() || line == "t,bits" {
            continue;
        }
        let (t, bits) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `t,bits`".into()))?;
        let t: u64 = t.trim().parse().map_err(|_| parse_err(format!("bad time `{t}`")))?;
        let bits: BitString = bits.trim().parse().map_err(|e: Error| parse_err(e.to_string()))?;
        points.push((t, bits));
    }
    let spec = spec.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing `# instance=` header".into(),
    })?;
    Ok((spec, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_path;
    use crate::operators::{balanced_flip_at, run, Algorithm, Init, RunSpec, StoppingCriterion};
    use crate::solution::fitness;

    fn bits(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn optimum(n: usize) -> BitString {
        BitString::from_fn(n, |v| v % 2 == 0)
    }

    #[test]
    fn bad_path_examples() {
        assert_eq!(
            bad_paths(11, &bits("01101010110")).unwrap().intervals,
            vec![(3, 9)]
        );
        assert!(bad_paths(11, &optimum(11)).unwrap().is_empty());
        assert_eq!(
            bad_paths(11, &optimum(11).complement()).unwrap().intervals,
            vec![(1, 11)]
        );
    }

    #[test]
    fn bad_paths_reject_even_and_mismatch() {
        assert!(matches!(
            bad_paths(10, &optimum(10)),
            Err(Error::UnsupportedInstance(_))
        ));
        assert!(matches!(
            bad_paths(11, &optimum(9)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn dual_examples() {
        let d = dual(11, &bits("01101010110")).unwrap();
        assert_eq!(d.to_bit_string(), "0100010");
        assert_eq!(d.gap, Some(3));

        // no particles anywhere at the optimum
        let d = dual(11, &optimum(11)).unwrap();
        assert_eq!(d.to_bit_string(), "0000000");
        assert_eq!(d.gap, None);
    }

    #[test]
    fn dual_requires_cover() {
        assert!(matches!(
            dual(5, &bits("00101")),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn interior_gap() {
        assert_eq!(longest_interior_gap(&[true, false, false, true]), Some(2));
        assert_eq!(longest_interior_gap(&[true, true]), Some(0));
        assert_eq!(longest_interior_gap(&[false, true, false]), None);
        assert_eq!(
            longest_interior_gap(&[true, false, true, false, false, false, true]),
            Some(3)
        );
    }

    #[test]
    fn relative_length_examples() {
        assert_eq!(
            relative_bad_path_length(11, &bits("01101010110")).unwrap(),
            Ratio::new(7, 11)
        );
        assert_eq!(
            relative_bad_path_length(11, &optimum(11)).unwrap(),
            Ratio::from_integer(0)
        );
        let x = single_bad_path_state(51, 1, 17).unwrap();
        assert_eq!(relative_bad_path_length(51, &x).unwrap(), Ratio::new(1, 3));
    }

    #[test]
    fn two_bad_paths_is_an_invariant_violation() {
        // intervals (1,3) and (7,9) on n = 11, still a cover
        let x = bits("10110110110");
        assert_eq!(bad_paths(11, &x).unwrap().len(), 2);
        assert!(matches!(
            relative_bad_path_length(11, &x),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn single_bad_path_state_is_one_above_optimum() {
        let g = make_path(21).unwrap();
        let x = single_bad_path_state(21, 5, 15).unwrap();
        assert_eq!(bad_paths(21, &x).unwrap().intervals, vec![(5, 15)]);
        assert_eq!(fitness(&g, &x).unwrap(), 11);
    }

    #[test]
    fn constant_trajectory_has_constant_endpoints() {
        let x = bits("01101010110");
        let traj: Vec<_> = (0..5).map(|t| (t, x.clone())).collect();
        let trace = endpoint_trace(11, &traj).unwrap();
        assert!(trace.points.iter().all(|p| (p.l, p.r, p.b) == (3, 9, 6)));
        assert_eq!(trace.truncated_at, None);
    }

    #[test]
    fn right_end_swap_moves_r_down_by_two() {
        let g = make_path(11).unwrap();
        let x0 = bits("01101010110");
        // vertex 9 hands its cover duty to vertex 8
        let step = balanced_flip_at(&g, &x0, 9, Some(8)).unwrap();
        assert_eq!(step.offspring.to_string(), "01101011010");
        assert_eq!(fitness(&g, &step.offspring).unwrap(), 6);
        let trace = endpoint_trace(11, &[(0, x0), (1, step.offspring)]).unwrap();
        let lr: Vec<_> = trace.points.iter().map(|p| (p.l, p.r, p.b)).collect();
        assert_eq!(lr, vec![(3, 9, 6), (3, 7, 4)]);
    }

    #[test]
    fn optimum_pins_endpoints_to_midpoint() {
        let traj = vec![
            (0, bits("01101010110")),
            (4, optimum(11)),
            (9, optimum(11)),
        ];
        let trace = endpoint_trace(11, &traj).unwrap();
        assert_eq!(trace.points[1].l, 6);
        assert_eq!(trace.points[1].r, 6);
        assert_eq!(trace.points[2].b, 0);

        let trace = endpoint_trace(11, &[(0, optimum(11))]).unwrap();
        assert_eq!((trace.points[0].l, trace.points[0].r), (6, 6));
    }

    #[test]
    fn trace_truncates_on_second_interval() {
        let traj = vec![(0, bits("01101010110")), (3, bits("10110110110"))];
        let trace = endpoint_trace(11, &traj).unwrap();
        assert_eq!(trace.points.len(), 1);
        assert_eq!(trace.truncated_at, Some(3));
    }

    /// All covers of the path from which no single vertex can be removed.
    fn irreducible_covers(n: usize) -> Vec<BitString> {
        (0u32..1 << n)
            .map(|mask| BitString::from_fn(n, |v| mask >> (v - 1) & 1 == 1))
            .filter(path_feasible)
            .filter(|x| {
                x.members().all(|v| {
                    let mut y = x.clone();
                    y.flip(v);
                    !path_feasible(&y)
                })
            })
            .collect()
    }

    #[test]
    fn dual_particles_match_bad_path_structure() {
        for n in [5usize, 7, 9, 11] {
            let covers = irreducible_covers(n);
            assert!(!covers.is_empty());
            for x in covers {
                let d = dual(n, &x).unwrap();
                let report = bad_paths(n, &x).unwrap();
                let inside = |k: Vertex| report.intervals.iter().any(|&(i, j)| i <= k && k <= j);
                for i in 1..n.div_ceil(2) {
                    // a particle is an even vertex covered twice: it sits
                    // right next to exactly one bad interval boundary
                    let k = 2 * i;
                    let expected = x.get(k) && (x.get(k - 1) || x.get(k + 1));
                    assert_eq!(d.dual_bits[i], expected);
                    if d.dual_bits[i] {
                        assert!(!inside(k), "{x}: particle at {k} inside a bad path");
                        assert!(
                            inside(k - 1) ^ inside(k + 1),
                            "{x}: particle at {k} not at a boundary"
                        );
                    }
                }
                // interior particles: two per bad path, minus ends at 1 or n
                let particles = d.dual_bits[1..n.div_ceil(2)].iter().filter(|&&b| b).count();
                let boundaries: usize = report
                    .intervals
                    .iter()
                    .map(|&(i, j)| usize::from(i > 1) + usize::from(j < n))
                    .sum();
                assert_eq!(particles, boundaries, "{x}");
                assert_eq!(d.dual_bits[0], inside(1));
                assert_eq!(d.dual_bits[n.div_ceil(2)], inside(n));
            }
        }
    }

    #[test]
    fn optimum_iff_feasible_without_bad_paths() {
        for n in [5usize, 7, 9] {
            for mask in 0u32..1 << n {
                let x = BitString::from_fn(n, |v| mask >> (v - 1) & 1 == 1);
                let is_opt = x == optimum(n);
                let criterion = path_feasible(&x) && bad_paths(n, &x).unwrap().is_empty();
                assert_eq!(is_opt, criterion);
            }
        }
    }

    #[test]
    fn one_above_optimum_has_one_bad_path() {
        for n in [5usize, 7, 9, 11] {
            let g = make_path(n).unwrap();
            let opt = (n - 1) / 2;
            for mask in 0u32..1 << n {
                let x = BitString::from_fn(n, |v| mask >> (v - 1) & 1 == 1);
                if fitness(&g, &x).unwrap() as usize == opt + 1 {
                    assert_eq!(bad_paths(n, &x).unwrap().len(), 1, "{x}");
                }
            }
        }
    }

    #[test]
    fn analyze_rows_on_path() {
        let g = make_path(11).unwrap();
        let traj = vec![(0, bits("01101010110")), (7, optimum(11))];
        let rows = analyze_trace(&g, &traj).unwrap();
        assert_eq!(
            rows[0].to_csv(),
            "0,6,0,6,1,1,3,9,6,3"
        );
        assert_eq!(rows[1].to_csv(), "7,5,0,5,0,0,6,6,0,");
    }

    #[test]
    fn analyze_infeasible_leaves_blanks() {
        let g = make_path(5).unwrap();
        let rows = analyze_trace(&g, &[(0, bits("00000"))]).unwrap();
        assert_eq!(rows[0].to_csv(), "0,0,4,24,,2,,,,");
    }

    #[test]
    fn trace_file_round_trip() {
        let spec: InstanceSpec = "path:11".parse().unwrap();
        let pts = vec![(0, bits("01101010110")), (12, optimum(11))];
        let text = write_trace(&spec, &pts);
        let (spec2, pts2) = read_trace(&text).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(pts2, pts);
        assert!(matches!(
            read_trace("t,bits\n0,010\n"),
            Err(Error::Parse { line: 0, .. })
        ));
        assert!(matches!(
            read_trace("# instance=path:3\n0,01x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn counter_stays_silent_outside_regime() {
        let g = make_path(11).unwrap();
        let spec = RunSpec::new(Algorithm::Ea, StoppingCriterion::budget(100))
            .with_init(Init::Fixed(bits("01101010110")));
        let mut counter = EndpointCounter::default();
        run(&g, &spec, 3, &mut counter).unwrap();
        // (3, 9) has r - l = 6 < 8
        assert_eq!(counter.counts.measured, 0);
        assert_eq!(counter.left_regime_at, Some(0));
    }

    #[test]
    fn counter_measures_inside_regime() {
        let g = make_path(31).unwrap();
        let x0 = single_bad_path_state(31, 7, 25).unwrap();
        let spec = RunSpec::new(Algorithm::Ea, StoppingCriterion::budget(20_000))
            .with_init(Init::Fixed(x0));
        let mut counter = EndpointCounter::default();
        run(&g, &spec, 5, &mut counter).unwrap();
        assert!(counter.counts.measured > 0);
        let c = &counter.counts;
        assert!(c.l_up2 + c.l_down2 + c.r_up2 + c.r_down2 + c.far <= c.measured);
    }
}
