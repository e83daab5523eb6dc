//! Linear complementarity problems with PSD matrices.
//!
//! Everything here runs on one homotopy engine. It follows the solution of
//!
//! ```text
//! w(θ) = a + θ b + M z(θ),   w, z ≥ 0,   ⟨w, z⟩ = 0
//! ```
//!
//! from `θ = 0`, where `a ≥ 0` makes `(w, z) = (a, 0)` a solution, up to a
//! target `θ_end`. The path is piecewise affine. On each piece, the indices
//! allowed to carry `z_i > 0` (the active set `A`) fix the direction through
//! `M_AA dz_A = −b_A`. A breakpoint is reached when an active `z_i` or an
//! inactive `w_i` hits zero. The next active set is then chosen among the
//! indices that sit at zero on both sides by enumerating subsets in
//! lexicographic order and keeping the first one whose direction is
//! complementary-feasible. This also settles ties between simultaneous
//! events.
//!
//! * [`trace_parametric_path`] uses `a = 𝟙`, `b = −r` (θ = s), which is the
//!   rescaled lasso LCP `w(s) = 𝟙 − s r + M z(s)`.
//! * [`solve_lcp`] is Lemke's method seen as a homotopy in the covering
//!   parameter: `w = q + t d + M z` with `t` decreasing from
//!   `max_i(−q_i/d_i)` to 0.
//!
//! Rank-deficient active systems are solved with the pseudo-inverse, which
//! selects the minimal-norm `z` direction.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{all_finite, gather, inf_norm, pinv_solve, principal_submatrix, Spectral, SPAN_CUTOFF};
use crate::output::{fmt_f64, opt_f64};

/// Tolerance used for the LCP solution invariants.
pub const LCP_TOL: f64 = 1e-9;

/// A solution `(w, z)` of `w = q + Mz`, `w, z ≥ 0`, `⟨w, z⟩ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub w: DVector<f64>,
    pub z: DVector<f64>,
    /// `{i : z_i > 0}`.
    pub active_set: Vec<usize>,
}

/// Raw residuals of a candidate LCP solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct LcpResiduals {
    /// `‖w − (q + Mz)‖∞`.
    pub equation: f64,
    pub min_w: f64,
    pub min_z: f64,
    /// `|⟨w, z⟩|`.
    pub complementarity: f64,
    /// `‖q‖∞`, `‖w‖ ‖z‖`: the scales used by [`LcpResiduals::satisfied`].
    pub q_scale: f64,
    pub wz_scale: f64,
}

impl LcpResiduals {
    pub fn compute(m: &DMatrix<f64>, q: &DVector<f64>, w: &DVector<f64>, z: &DVector<f64>) -> Self {
        let eq = w - (q + m * z);
        LcpResiduals {
            equation: inf_norm(&eq),
            min_w: w.min(),
            min_z: z.min(),
            complementarity: w.dot(z).abs(),
            q_scale: inf_norm(q),
            wz_scale: w.norm() * z.norm(),
        }
    }

    /// Largest violation, each term normalised as in the solution invariants.
    pub fn max_violation(&self) -> f64 {
        let eq = self.equation / (1.0 + self.q_scale);
        let neg = (-self.min_w).max(-self.min_z).max(0.0);
        let comp = self.complementarity / (1.0 + self.wz_scale);
        eq.max(neg).max(comp)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

impl LcpSolution {
    pub fn residuals(&self, m: &DMatrix<f64>, q: &DVector<f64>) -> LcpResiduals {
        LcpResiduals::compute(m, q, &self.w, &self.z)
    }

    /// `½⟨z, Mz⟩ + ⟨q, z⟩`.
    pub fn objective(&self, m: &DMatrix<f64>, q: &DVector<f64>) -> f64 {
        0.5 * self.z.dot(&(m * &self.z)) + q.dot(&self.z)
    }
}

/// One affine piece `z(s) = z_intercept + s z_slope`, `w(s) = w_intercept + s w_slope`
/// valid from `start` to the next segment's start.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub z_intercept: DVector<f64>,
    pub z_slope: DVector<f64>,
    pub w_intercept: DVector<f64>,
    pub w_slope: DVector<f64>,
    pub active_set: Vec<usize>,
}

impl Segment {
    pub fn z_at(&self, s: f64) -> DVector<f64> {
        &self.z_intercept + &self.z_slope * s
    }

    pub fn w_at(&self, s: f64) -> DVector<f64> {
        &self.w_intercept + &self.w_slope * s
    }
}

/// Exact piecewise-affine solution of a parametric LCP on `[0, s_max]`.
///
/// `s_max` may be `+∞` when the path was traced to completion; the last
/// segment then extends forever.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePath {
    segments: Vec<Segment>,
    s_max: f64,
}

impl PiecewisePath {
    /// Assembles a path from segments with strictly increasing starts, the first at 0.
    pub fn from_segments(segments: Vec<Segment>, s_max: f64) -> Result<Self> {
        if segments.is_empty() {
            return input("a path needs at least one segment");
        }
        if segments[0].start != 0.0 {
            return input("the first segment must start at s = 0");
        }
        if !(s_max > 0.0) {
            return input("s_max must be positive");
        }
        let dim = segments[0].z_intercept.len();
        for pair in segments.windows(2) {
            if !(pair[1].start > pair[0].start) {
                return input("segment starts must be strictly increasing");
            }
        }
        if segments.last().is_some_and(|s| s.start > s_max) {
            return input("a segment starts beyond s_max");
        }
        for seg in &segments {
            if [&seg.z_intercept, &seg.z_slope, &seg.w_intercept, &seg.w_slope]
                .iter()
                .any(|v| v.len() != dim)
            {
                return input("segment vectors have inconsistent lengths");
            }
        }
        Ok(PiecewisePath { segments, s_max })
    }

    pub fn dim(&self) -> usize {
        self.segments[0].z_intercept.len()
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Mutable access, for building perturbed paths in diagnostics.
    pub fn segments_mut(&mut self) -> &mut [Segment] {
        &mut self.segments
    }

    /// Segment starts `0 = s₀ < s₁ < … < s_K`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.start).collect()
    }

    /// `s₁`, if the path has more than one segment.
    pub fn first_breakpoint(&self) -> Option<f64> {
        self.segments.get(1).map(|s| s.start)
    }

    /// End of segment `k` (the next start, or `s_max`).
    pub fn segment_end(&self, k: usize) -> f64 {
        self.segments
            .get(k + 1)
            .map_or(self.s_max, |next| next.start)
    }

    /// Index of the segment used at `s`. At a breakpoint this is the right segment.
    pub fn segment_index(&self, s: f64) -> usize {
        self.segments
            .partition_point(|seg| seg.start <= s)
            .saturating_sub(1)
    }

    pub fn segment_at(&self, s: f64) -> &Segment {
        &self.segments[self.segment_index(s)]
    }

    pub fn z_at(&self, s: f64) -> DVector<f64> {
        self.segment_at(s).z_at(s)
    }

    pub fn w_at(&self, s: f64) -> DVector<f64> {
        self.segment_at(s).w_at(s)
    }

    /// Largest jump of `z` or `w` across a breakpoint.
    pub fn continuity_mismatch(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|pair| {
                let s = pair[1].start;
                let dz = inf_norm(&(pair[0].z_at(s) - pair[1].z_at(s)));
                let dw = inf_norm(&(pair[0].w_at(s) - pair[1].w_at(s)));
                dz.max(dw)
            })
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PathRecord::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: PathRecord = serde_json::from_str(text)?;
        rec.try_into()
    }

    /// CSV with columns `s, z_1..z_D, w_1..w_D` on the given grid.
    pub fn write_csv<W: Write>(&self, grid: &[f64], mut out: W) -> Result<()> {
        let d = self.dim();
        let mut header = vec!["s".to_string()];
        header.extend((1..=d).map(|i| format!("z_{i}")));
        header.extend((1..=d).map(|i| format!("w_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for &s in grid {
            let seg = self.segment_at(s);
            let mut row = vec![fmt_f64(s)];
            row.extend(seg.z_at(s).iter().map(|&v| fmt_f64(v)));
            row.extend(seg.w_at(s).iter().map(|&v| fmt_f64(v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRecord {
    z_intercept: Vec<f64>,
    z_slope: Vec<f64>,
    w_intercept: Vec<f64>,
    w_slope: Vec<f64>,
}

/// On-disk form of a [`PiecewisePath`]. `s_max` is `null` for a path traced to completion.
#[derive(Debug, Serialize, Deserialize)]
struct PathRecord {
    breakpoints: Vec<f64>,
    #[serde(with = "opt_f64")]
    s_max: f64,
    segments: Vec<SegmentRecord>,
    active_sets: Vec<Vec<usize>>,
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}

impl From<&PiecewisePath> for PathRecord {
    fn from(p: &PiecewisePath) -> Self {
        PathRecord {
            breakpoints: p.breakpoints(),
            s_max: p.s_max,
            segments: p
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    z_intercept: to_vec(&s.z_intercept),
                    z_slope: to_vec(&s.z_slope),
                    w_intercept: to_vec(&s.w_intercept),
                    w_slope: to_vec(&s.w_slope),
                })
                .collect(),
            active_sets: p.segments.iter().map(|s| s.active_set.clone()).collect(),
        }
    }
}

impl TryFrom<PathRecord> for PiecewisePath {
    type Error = Error;

    fn try_from(rec: PathRecord) -> Result<Self> {
        if rec.breakpoints.len() != rec.segments.len() || rec.active_sets.len() != rec.segments.len()
        {
            return input("path record has mismatched segment counts");
        }
        let segments = rec
            .segments
            .into_iter()
            .zip(rec.breakpoints)
            .zip(rec.active_sets)
            .map(|((s, start), active_set)| Segment {
                start,
                z_intercept: DVector::from_vec(s.z_intercept),
                z_slope: DVector::from_vec(s.z_slope),
                w_intercept: DVector::from_vec(s.w_intercept),
                w_slope: DVector::from_vec(s.w_slope),
                active_set,
            })
            .collect();
        PiecewisePath::from_segments(segments, rec.s_max)
    }
}

/// `10 · 2^d` pivots.
pub fn pivot_budget(d: usize) -> usize {
    10usize.saturating_mul(1usize << d.min(40))
}

fn validate_psd(m: &DMatrix<f64>, len: usize, what: &str) -> Result<()> {
    if m.nrows() != len || m.ncols() != len {
        return input(format!(
            "{what}: M is {}x{}, expected {len}x{len}",
            m.nrows(),
            m.ncols()
        ));
    }
    if !all_finite(m.iter().cloned()) {
        return input(format!("{what}: M has non-finite entries"));
    }
    let asym = (m - m.transpose()).amax();
    if asym > crate::problem::SYMMETRY_TOL {
        return input(format!("{what}: M is not symmetric (asymmetry {asym:e})"));
    }
    let spec = Spectral::new(m);
    if spec.min_eigenvalue() < -crate::problem::PSD_TOL * spec.max_eigenvalue() {
        return input(format!(
            "{what}: M is not positive semidefinite (min eigenvalue {:e})",
            spec.min_eigenvalue()
        ));
    }
    Ok(())
}

struct Direction {
    active: Vec<bool>,
    dz: DVector<f64>,
    dw: DVector<f64>,
}

struct Homotopy<'a> {
    m: &'a DMatrix<f64>,
    a: &'a DVector<f64>,
    b: &'a DVector<f64>,
    m_norm: f64,
    b_norm: f64,
}

impl<'a> Homotopy<'a> {
    fn new(m: &'a DMatrix<f64>, a: &'a DVector<f64>, b: &'a DVector<f64>) -> Self {
        let m_norm = (0..m.nrows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Homotopy {
            m,
            a,
            b,
            m_norm,
            b_norm: inf_norm(b),
        }
    }

    fn slope_tol(&self, dz: &DVector<f64>) -> f64 {
        1e-12 * (1.0 + self.b_norm + self.m_norm * inf_norm(dz))
    }

    /// Direction with active set `set`, or `None` if `M_AA dz = −b_A` is inconsistent.
    fn direction_for(&self, set: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let d = self.a.len();
        let mut dz = DVector::zeros(d);
        if !set.is_empty() {
            let maa = principal_submatrix(self.m, set);
            let rhs = -gather(self.b, set);
            let ls = pinv_solve(&maa, &rhs);
            let scale = 1.0 + rhs.norm() + self.m_norm * ls.x.norm();
            if ls.residual > 1e-9 * scale {
                return None;
            }
            for (k, &i) in set.iter().enumerate() {
                dz[i] = ls.x[k];
            }
        }
        let dw = self.b + self.m * &dz;
        Some((dz, dw))
    }

    /// First complementary-feasible direction over subsets of `degenerate`.
    fn choose_direction(&self, active: &[bool], degenerate: &[usize], theta: f64) -> Result<Direction> {
        let d = self.a.len();
        let fixed: Vec<usize> = (0..d)
            .filter(|i| active[*i] && !degenerate.contains(i))
            .collect();
        if degenerate.len() > 24 {
            return Err(Error::Solver(format!(
                "{} simultaneous degenerate indices at θ = {theta}",
                degenerate.len()
            )));
        }
        for mask in 0u64..(1u64 << degenerate.len()) {
            let mut set = fixed.clone();
            set.extend(
                degenerate
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| mask >> j & 1 == 1)
                    .map(|(_, &i)| i),
            );
            set.sort_unstable();
            let Some((dz, dw)) = self.direction_for(&set) else {
                continue;
            };
            let tol = self.slope_tol(&dz);
            let feasible = degenerate.iter().enumerate().all(|(j, &i)| {
                if mask >> j & 1 == 1 {
                    dz[i] >= -tol
                } else {
                    dw[i] >= -tol
                }
            });
            if feasible {
                let mut next = vec![false; d];
                for &i in &set {
                    next[i] = true;
                }
                return Ok(Direction {
                    active: next,
                    dz,
                    dw,
                });
            }
        }
        Err(Error::Solver(format!(
            "no complementary-feasible pivot at θ = {theta} (degenerate set {degenerate:?}); \
             the LCP may be infeasible or M not PSD"
        )))
    }

    /// Exchange at fixed θ for an entering index whose column depends on the
    /// active ones: moves `z` along `ker M` (so `w` is unchanged) until an
    /// active coordinate reaches zero. Returns the leaving index.
    fn exchange(&self, z: &mut DVector<f64>, active: &mut [bool], entering: usize) -> Option<usize> {
        let rest: Vec<usize> = (0..z.len()).filter(|&i| active[i] && i != entering).collect();
        if rest.is_empty() {
            return None;
        }
        let mrr = principal_submatrix(self.m, &rest);
        let col = DVector::from_iterator(rest.len(), rest.iter().map(|&i| -self.m[(i, entering)]));
        let ls = pinv_solve(&mrr, &col);
        let mut n = DVector::zeros(z.len());
        n[entering] = 1.0;
        for (k, &i) in rest.iter().enumerate() {
            n[i] = ls.x[k];
        }
        let mn = self.m * &n;
        if inf_norm(&mn) > 1e-9 * (1.0 + self.m_norm * inf_norm(&n)) {
            return None;
        }
        let (leave, t) = rest
            .iter()
            .filter(|&&i| n[i] < 0.0)
            .map(|&i| (i, z[i].max(0.0) / -n[i]))
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(a) if a.1 <= x.1 => Some(a),
                _ => Some(x),
            })?;
        *z += &n * t;
        z[leave] = 0.0;
        active[leave] = false;
        active[entering] = true;
        Some(leave)
    }

    /// Traces the path on `[0, theta_end]` (`theta_end` may be infinite).
    fn trace(&self, theta_end: f64, budget: usize) -> Result<Vec<Segment>> {
        let d = self.a.len();
        let a_scale = 1.0 + inf_norm(self.a);
        let mut theta = 0.0_f64;
        let mut z = DVector::<f64>::zeros(d);
        let mut active = vec![false; d];
        let mut degenerate: Vec<usize> = (0..d).filter(|&i| self.a[i] <= 1e-13 * a_scale).collect();
        let mut segments: Vec<Segment> = Vec::new();
        let mut pivots = 0usize;

        loop {
            let dir = match self.choose_direction(&active, &degenerate, theta) {
                Ok(dir) => dir,
                Err(e) => {
                    let entering: Vec<usize> = degenerate.iter().copied().filter(|&i| !active[i]).collect();
                    let swap = entering
                        .into_iter()
                        .find_map(|i| self.exchange(&mut z, &mut active, i).map(|l| (i, l)));
                    let Some((entering, leave)) = swap else {
                        return Err(e);
                    };
                    pivots += 1;
                    if pivots > budget {
                        return Err(Error::Solver(format!(
                            "pivot budget of {budget} exhausted at θ = {theta}"
                        )));
                    }
                    degenerate.retain(|&i| i != entering);
                    degenerate.push(leave);
                    continue;
                }
            };
            let w = self.a + self.b * theta + self.m * &z;
            let tol = self.slope_tol(&dir.dz);

            let mut step = f64::INFINITY;
            let mut candidates: Vec<(usize, f64)> = Vec::new();
            for i in 0..d {
                let t = if dir.active[i] {
                    (dir.dz[i] < -tol).then(|| z[i].max(0.0) / -dir.dz[i])
                } else {
                    (dir.dw[i] < -tol).then(|| w[i].max(0.0) / -dir.dw[i])
                };
                if let Some(t) = t {
                    candidates.push((i, t));
                    step = step.min(t);
                }
            }
            let tie = 1e-10 * (1.0 + step.abs());
            let events: Vec<usize> = candidates
                .iter()
                .filter(|(_, t)| *t <= step + tie)
                .map(|&(i, _)| i)
                .collect();

            let end = theta + step;
            let zero_length = step <= 1e-13 * (1.0 + theta);
            if !zero_length || segments.is_empty() && end >= theta_end {
                segments.push(Segment {
                    start: theta,
                    z_intercept: &z - &dir.dz * theta,
                    z_slope: dir.dz.clone(),
                    w_intercept: &w - &dir.dw * theta,
                    w_slope: dir.dw.clone(),
                    active_set: (0..d).filter(|&i| dir.active[i]).collect(),
                });
            }
            if end >= theta_end {
                return Ok(segments);
            }

            pivots += 1;
            if pivots > budget {
                return Err(Error::Solver(format!(
                    "pivot budget of {budget} exhausted at θ = {theta}"
                )));
            }

            theta = end;
            z += &dir.dz * step;
            active = dir.active;
            for &i in &events {
                if active[i] {
                    active[i] = false;
                    z[i] = 0.0;
                }
            }
            for i in 0..d {
                if !active[i] {
                    z[i] = 0.0;
                }
            }
            self.refresh(&mut z, &active, theta);
            degenerate = events;
        }
    }

    /// Re-solves `M_PP z_P = −(a + θ b)_P` on a nonsingular active block, to
    /// stop rounding from accumulating along the path.
    fn refresh(&self, z: &mut DVector<f64>, active: &[bool], theta: f64) {
        let set: Vec<usize> = (0..z.len()).filter(|&i| active[i]).collect();
        if set.is_empty() {
            return;
        }
        let maa = principal_submatrix(self.m, &set);
        let rhs = -(gather(self.a, &set) + gather(self.b, &set) * theta);
        let ls = pinv_solve(&maa, &rhs);
        if ls.rank < set.len() {
            return;
        }
        let current = gather(z, &set);
        let scale = 1e-8 * (1.0 + inf_norm(&current));
        if ls.x.iter().any(|&v| v < -scale) || inf_norm(&(&ls.x - &current)) > scale {
            return;
        }
        for (k, &i) in set.iter().enumerate() {
            z[i] = ls.x[k].max(0.0);
        }
    }
}

/// Solves the LCP `(M, q)` for a symmetric PSD `M` with the all-ones covering vector.
pub fn solve_lcp(m: &DMatrix<f64>, q: &DVector<f64>) -> Result<LcpSolution> {
    solve_lcp_with_covering(m, q, &DVector::from_element(q.len(), 1.0))
}

/// Lemke-type homotopy with covering vector `covering > 0`.
///
/// Different covering vectors give different pivot sequences; `w` is unique
/// for PSD `M`, so they agree on it.
pub fn solve_lcp_with_covering(
    m: &DMatrix<f64>,
    q: &DVector<f64>,
    covering: &DVector<f64>,
) -> Result<LcpSolution> {
    let d = q.len();
    if d == 0 {
        return input("empty LCP");
    }
    validate_psd(m, d, "solve_lcp")?;
    if !all_finite(q.iter().cloned()) {
        return input("solve_lcp: q has non-finite entries");
    }
    if covering.len() != d || covering.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
        return input("solve_lcp: covering vector must be positive with matching length");
    }

    let (lead, t0) = (0..d)
        .map(|i| (i, -q[i] / covering[i]))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if t0 <= 0.0 {
        return Ok(LcpSolution {
            w: q.clone(),
            z: DVector::zeros(d),
            active_set: Vec::new(),
        });
    }

    let mut a = q + covering * t0;
    a[lead] = 0.0;
    let b = -covering;
    let engine = Homotopy::new(m, &a, &b);
    let segments = engine.trace(t0, pivot_budget(d))?;
    let last = segments.last().expect("trace returns at least one segment");
    let mut z = last.z_at(t0);
    let ztol = 1e-12 * (1.0 + inf_norm(&z));
    for v in z.iter_mut() {
        if *v < ztol {
            *v = 0.0;
        }
    }

    // All solutions share Mz and vanish where w > 0; among those, prefer the
    // minimal-norm one whenever it is nonnegative. For v supported on S and
    // PSD M, Mv = 0 iff M_SS v_S = 0, so the principal block suffices.
    let w = q + m * &z;
    let tol = LCP_TOL * (1.0 + inf_norm(q));
    let support: Vec<usize> = (0..d).filter(|&i| w[i] <= tol).collect();
    if !support.is_empty() {
        let target = gather(&(m * &z), &support);
        let ls = pinv_solve(&principal_submatrix(m, &support), &target);
        let mut cand = DVector::zeros(d);
        for (k, &i) in support.iter().enumerate() {
            cand[i] = ls.x[k];
        }
        let cw = q + m * &cand;
        if cand.min() >= -tol && cw.min() >= -tol && cw.dot(&cand).abs() <= tol * (1.0 + cand.norm()) {
            z = cand.map(|v| v.max(0.0));
        }
    }
    let w = q + m * &z;
    let active_set = (0..d).filter(|&i| z[i] > 0.0).collect();
    Ok(LcpSolution { w, z, active_set })
}

/// Exact path of `w(s) = 𝟙 − s r + M z(s)` on `[0, s_max]`.
///
/// `s_max = +∞` traces until the active set stops changing.
pub fn trace_parametric_path(m: &DMatrix<f64>, r: &DVector<f64>, s_max: f64) -> Result<PiecewisePath> {
    let d = r.len();
    if d == 0 {
        return input("empty problem");
    }
    if !(s_max > 0.0) {
        return input(format!("s_max must be positive, got {s_max}"));
    }
    validate_psd(m, d, "trace_parametric_path")?;
    if !all_finite(r.iter().cloned()) {
        return input("r has non-finite entries");
    }
    let a = DVector::from_element(d, 1.0);
    let b = -r;
    let engine = Homotopy::new(m, &a, &b);
    let segments = engine.trace(s_max, pivot_budget(d))?;
    PiecewisePath::from_segments(segments, s_max)
}

/// Residual report produced by [`verify_path`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PathReport {
    /// Max over samples of `‖w − (𝟙 − s r + Mz)‖∞ / (1 + ‖𝟙 − s r‖∞)`.
    pub equation: f64,
    /// Max of `(−min w)₊`, `(−min z)₊` over samples.
    pub negativity: f64,
    /// Max of `|⟨w, z⟩| / (1 + ‖w‖‖z‖)`.
    pub complementarity: f64,
    pub continuity: f64,
    /// `‖w(0) − 𝟙‖∞ + ‖z(0)‖∞`.
    pub initial: f64,
    pub first_breakpoint: Option<f64>,
    /// `s₁ ≥ 1/‖r‖∞` (vacuous when there is no breakpoint).
    pub first_breakpoint_ok: bool,
    /// Max of `‖w(s) − w(s′)‖_{M†} / (|s − s′| ‖r‖_{M†})` over sampled pairs.
    pub lipschitz_ratio: f64,
    /// Max of `‖(I − P_span M)(w(s) − w(s′))‖ / (1 + ‖w(s) − w(s′)‖)`.
    pub span_residual: f64,
    pub pairs: usize,
}

impl PathReport {
    /// The largest LCP residual at sampled points.
    pub fn max_lcp_residual(&self) -> f64 {
        self.equation.max(self.negativity).max(self.complementarity)
    }

    /// True when every check is within `tol` (Lipschitz ratio within `1 + 1e-6`).
    pub fn passes(&self, tol: f64) -> bool {
        self.max_lcp_residual() <= tol
            && self.continuity <= 1e-8
            && self.initial <= tol
            && self.first_breakpoint_ok
            && self.lipschitz_ratio <= 1.0 + 1e-6
            && self.span_residual <= 1e-8
    }
}

/// Evaluates LCP residuals at `samples` stratified points per segment and
/// the Lipschitz bound of `w` in the `M†` seminorm on all sampled pairs.
pub fn verify_path(path: &PiecewisePath, m: &DMatrix<f64>, r: &DVector<f64>, samples: usize) -> PathReport {
    let d = path.dim();
    let ones = DVector::from_element(d, 1.0);
    let spec = Spectral::new(m);
    let span = Spectral::with_cutoff(m, SPAN_CUTOFF);
    let samples = samples.max(1);

    let mut points: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut rep = PathReport::default();
    for (k, seg) in path.segments().iter().enumerate() {
        let lo = seg.start;
        let hi = path.segment_end(k);
        let hi = if hi.is_finite() { hi } else { lo + lo.max(1.0) };
        for j in 0..samples {
            let s = lo + (j as f64 + 0.5) / samples as f64 * (hi - lo);
            let z = seg.z_at(s);
            let w = seg.w_at(s);
            let q = &ones - r * s;
            let res = LcpResiduals::compute(m, &q, &w, &z);
            rep.equation = rep.equation.max(res.equation / (1.0 + res.q_scale));
            rep.negativity = rep.negativity.max((-res.min_w).max(-res.min_z).max(0.0));
            rep.complementarity = rep
                .complementarity
                .max(res.complementarity / (1.0 + res.wz_scale));
            points.push((s, w));
        }
    }
    rep.continuity = path.continuity_mismatch();
    rep.initial = inf_norm(&(path.w_at(0.0) - &ones)) + inf_norm(&path.z_at(0.0));
    rep.first_breakpoint = path.first_breakpoint();
    let rmax = inf_norm(r);
    rep.first_breakpoint_ok = match rep.first_breakpoint {
        Some(s1) if rmax > 0.0 => s1 >= (1.0 / rmax) * (1.0 - 1e-12),
        Some(_) => false,
        None => true,
    };

    let r_norm = spec.pinv_seminorm(r);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (si, wi) = &points[i];
            let (sj, wj) = &points[j];
            let dw = wi - wj;
            let ds = (si - sj).abs();
            if ds == 0.0 {
                continue;
            }
            let lhs = spec.pinv_seminorm(&dw);
            let ratio = if r_norm > 0.0 {
                lhs / (ds * r_norm)
            } else if lhs <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            rep.lipschitz_ratio = rep.lipschitz_ratio.max(ratio);
            rep.span_residual = rep
                .span_residual
                .max(span.kernel_residual(&dw) / (1.0 + dw.norm()));
            rep.pairs += 1;
        }
    }
    rep
}
