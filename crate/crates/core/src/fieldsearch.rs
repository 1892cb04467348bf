//! Inverse spectroscopy: resonance fields at fixed probe frequency, angular
//! sweeps with crystal-subsite duplication, and low-field gradient maps for
//! clock-transition hunting.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consts::PhysicalConstants;
use crate::spinham::{
    self, build_hamiltonian, eigensolve, freq_gradient, FieldVector, LevelSet, SpinSystem,
    Transition,
};
use crate::{Error, Result};

/// Options for the bracketed resonance-field search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceOptions {
    /// Coarse scan density over the bracket.
    pub grid_points: usize,
    /// Bisection tolerance on |f(B) − f_target| (Hz).
    pub tolerance_hz: f64,
    /// Matrix-element threshold for reporting a solution.
    pub matrix_element_threshold: f64,
    /// Microwave drive direction for matrix elements; None applies the
    /// perpendicular-to-B rule from [`spinham::default_b1`].
    pub b1: Option<[f64; 3]>,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        Self {
            grid_points: 400,
            tolerance_hz: 1e3,
            matrix_element_threshold: 0.0,
            b1: None,
        }
    }
}

/// One resonance-field solution along a fixed direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceSolution {
    /// Unit field direction in (D1, D2, b).
    pub direction: Vector3<f64>,
    /// Field magnitude at resonance (T).
    pub field_t: f64,
    pub transition: Transition,
    /// |f(B) − f_target| at the returned field (Hz).
    pub residual_hz: f64,
    /// False when the eigenvector overlap across the final bracket fell
    /// below 0.5 (level reordering at the root).
    pub tracking_reliable: bool,
}

/// All fields in `[bracket.0, bracket.1]` where some level pair of `sys`
/// matches `f_target` along `direction`. Sign changes of f(B) − f_target are
/// located on a coarse grid per level pair and refined by bisection. No sign
/// change means no solution (empty list).
pub fn resonance_fields(
    sys: &SpinSystem,
    f_target: f64,
    direction: Vector3<f64>,
    bracket: (f64, f64),
    opts: &ResonanceOptions,
    consts: &PhysicalConstants,
) -> Result<Vec<ResonanceSolution>> {
    if f_target <= 0.0 || !f_target.is_finite() {
        return Err(Error::InvalidInput(
            "target frequency must be positive".into(),
        ));
    }
    let (bmin, bmax) = bracket;
    if !(bmin >= 0.0 && bmax > bmin) {
        return Err(Error::InvalidInput(format!(
            "bracket must satisfy 0 ≤ Bmin < Bmax, got [{bmin}, {bmax}]"
        )));
    }
    if opts.grid_points < 2 {
        return Err(Error::InvalidInput(
            "grid must have at least 2 points".into(),
        ));
    }
    let dir = direction.normalize();
    let dim = sys.dim();
    let npairs = dim * (dim - 1) / 2;

    // One eigensolve per grid node; every pair frequency falls out of it.
    let nodes = opts.grid_points;
    let mut fields = Vec::with_capacity(nodes);
    let mut freqs = vec![vec![0.0f64; npairs]; nodes];
    for (k, row) in freqs.iter_mut().enumerate() {
        let b = bmin + (bmax - bmin) * k as f64 / (nodes - 1) as f64;
        let levels = levels_at(sys, dir, b, consts)?;
        let mut pi = 0;
        for lo in 0..dim {
            for hi in (lo + 1)..dim {
                row[pi] = levels.energies[hi] - levels.energies[lo];
                pi += 1;
            }
        }
        fields.push(b);
    }

    let mut out = Vec::new();
    let mut pi = 0;
    for lo in 0..dim {
        for hi in (lo + 1)..dim {
            for k in 0..nodes - 1 {
                let fa = freqs[k][pi] - f_target;
                let fb = freqs[k + 1][pi] - f_target;
                if fa == 0.0 || fa * fb < 0.0 {
                    let root = bisect_pair(
                        sys,
                        dir,
                        (fields[k], fields[k + 1]),
                        lo,
                        hi,
                        f_target,
                        opts,
                        consts,
                    )?;
                    if let Some(sol) = root {
                        out.push(sol);
                    }
                }
            }
            pi += 1;
        }
    }
    out.retain(|s| s.transition.matrix_element >= opts.matrix_element_threshold);
    out.sort_by(|a, b| a.field_t.partial_cmp(&b.field_t).unwrap());
    Ok(out)
}

fn levels_at(
    sys: &SpinSystem,
    dir: Vector3<f64>,
    magnitude: f64,
    consts: &PhysicalConstants,
) -> Result<LevelSet> {
    let b = FieldVector::from_vector(dir * magnitude);
    eigensolve(&build_hamiltonian(sys, &b, consts)?)
}

fn pair_freq(levels: &LevelSet, lo: usize, hi: usize) -> f64 {
    levels.energies[hi] - levels.energies[lo]
}

#[allow(clippy::too_many_arguments)]
fn bisect_pair(
    sys: &SpinSystem,
    dir: Vector3<f64>,
    bracket: (f64, f64),
    lo: usize,
    hi: usize,
    f_target: f64,
    opts: &ResonanceOptions,
    consts: &PhysicalConstants,
) -> Result<Option<ResonanceSolution>> {
    let (mut a, mut b) = bracket;
    let mut la = levels_at(sys, dir, a, consts)?;
    let fa = pair_freq(&la, lo, hi) - f_target;
    if fa == 0.0 {
        return finish_solution(sys, dir, a, lo, hi, f_target, (a, b), opts, consts).map(Some);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let lm = levels_at(sys, dir, mid, consts)?;
        let fm = pair_freq(&lm, lo, hi) - f_target;
        let fa_now = pair_freq(&la, lo, hi) - f_target;
        if fa_now * fm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            la = lm;
        }
        if fm.abs() <= opts.tolerance_hz {
            return finish_solution(sys, dir, mid, lo, hi, f_target, (a, b), opts, consts)
                .map(Some);
        }
    }
    // The interval collapsed without meeting the frequency tolerance:
    // a discontinuous branch (level crossing); report nothing.
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn finish_solution(
    sys: &SpinSystem,
    dir: Vector3<f64>,
    field: f64,
    lo: usize,
    hi: usize,
    f_target: f64,
    final_bracket: (f64, f64),
    opts: &ResonanceOptions,
    consts: &PhysicalConstants,
) -> Result<ResonanceSolution> {
    let b = FieldVector::from_vector(dir * field);
    let levels = levels_at(sys, dir, field, consts)?;
    let freq = pair_freq(&levels, lo, hi);

    let b1 = opts
        .b1
        .map(|v| Vector3::new(v[0], v[1], v[2]).normalize())
        .unwrap_or_else(|| spinham::default_b1(&b));
    let all = spinham::transitions(sys, &b, Some(b1), 0.0, consts)?;
    let transition = all
        .into_iter()
        .find(|t| t.lower == lo && t.upper == hi)
        .ok_or_else(|| Error::InvalidInput("transition bookkeeping lost a level pair".into()))?;

    // Eigenvector overlap across the final bracket flags level reordering.
    let la = levels_at(sys, dir, final_bracket.0, consts)?;
    let lb = levels_at(sys, dir, final_bracket.1, consts)?;
    let reliable = overlap2(&la, &lb, lo) >= 0.5 && overlap2(&la, &lb, hi) >= 0.5;

    Ok(ResonanceSolution {
        direction: dir,
        field_t: field,
        transition,
        residual_hz: (freq - f_target).abs(),
        tracking_reliable: reliable,
    })
}

fn overlap2(a: &LevelSet, b: &LevelSet, idx: usize) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..a.dim() {
        acc += b.states.column(idx)[r].conj() * a.states.column(idx)[r];
    }
    acc.norm_sqr()
}

/// Plane for angle sweeps and gradient maps. `D1D2` is the polished crystal
/// face used throughout; angles are measured from D1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    D1D2,
    D2B,
    D1B,
}

impl Plane {
    /// Unit vector at `angle_deg` within the plane, with an optional tilt
    /// toward the plane normal.
    pub fn direction(&self, angle_deg: f64, tilt_deg: f64) -> Vector3<f64> {
        let th = angle_deg.to_radians();
        let tl = tilt_deg.to_radians();
        let (c, s, ct, st) = (th.cos(), th.sin(), tl.cos(), tl.sin());
        match self {
            Plane::D1D2 => Vector3::new(c * ct, s * ct, st),
            Plane::D2B => Vector3::new(st, c * ct, s * ct),
            Plane::D1B => Vector3::new(c * ct, st, s * ct),
        }
    }
}

/// Solutions at one sweep angle, both crystal subsites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub angle_deg: f64,
    /// "a" for the tabulated tensors, "b" for the C2-rotated subsite.
    pub subsite: String,
    pub solutions: Vec<ResonanceSolution>,
}

/// Angle-resolved resonance solutions over a plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngularSweep {
    pub plane: Plane,
    pub f_target_hz: f64,
    pub misalignment_deg: f64,
    pub entries: Vec<SweepEntry>,
}

/// Sweeps field angle in `plane`, solving the resonance problem for both
/// crystal subsites. A nonzero misalignment tilts the field toward the
/// remaining axis and lifts the subsite degeneracy.
#[allow(clippy::too_many_arguments)]
pub fn angular_sweep(
    sys: &SpinSystem,
    f_target: f64,
    plane: Plane,
    angles_deg: &[f64],
    misalignment_deg: f64,
    bracket: (f64, f64),
    opts: &ResonanceOptions,
    consts: &PhysicalConstants,
) -> Result<AngularSweep> {
    if angles_deg.iter().any(|a| !(-180.0..=180.0).contains(a)) {
        return Err(Error::InvalidInput(
            "angles must lie in [-180°, 180°]".into(),
        ));
    }
    let mut sorted = angles_deg.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    if sorted.len() != angles_deg.len() {
        return Err(Error::InvalidInput(
            "angles must be strictly increasing".into(),
        ));
    }

    let partner = sys.subsite_partner();
    let mut entries = Vec::with_capacity(angles_deg.len() * 2);
    for &angle in angles_deg {
        let dir = plane.direction(angle, misalignment_deg);
        for (label, system) in [("a", sys), ("b", &partner)] {
            let solutions = resonance_fields(system, f_target, dir, bracket, opts, consts)?;
            entries.push(SweepEntry {
                angle_deg: angle,
                subsite: label.to_string(),
                solutions,
            });
        }
    }
    Ok(AngularSweep {
        plane,
        f_target_hz: f_target,
        misalignment_deg,
        entries,
    })
}

/// Picks the level pair whose gradient the map follows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum TransitionSelector {
    /// Explicit level pair in the zero-field ordering.
    Pair { lower: usize, upper: usize },
    /// The pair whose zero-field frequency is closest to this value (Hz).
    NearestZeroField(f64),
}

/// ‖∇_B f‖ over a rectangular grid in a plane, plus the in-plane ray of
/// minimal average gradient through the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZefozMap {
    pub plane: Plane,
    /// Grid coordinate axis, tesla (shared by rows and columns).
    pub axis_t: Vec<f64>,
    /// ‖∇_B f‖ in Hz/T, row-major over (axis × axis); NaN marks points where
    /// the level pair could not be followed.
    pub gradient_hz_per_t: Vec<f64>,
    /// Angle (deg from the plane's first axis) minimising the mean gradient
    /// along rays through the origin.
    pub min_gradient_angle_deg: f64,
    pub lower: usize,
    pub upper: usize,
}

/// Maps the clock-transition field sensitivity at low field. The level pair
/// is fixed at B = 0 and followed across the grid by eigenvector overlap
/// against the zero-field eigenbasis.
pub fn zefoz_scan(
    sys: &SpinSystem,
    selector: TransitionSelector,
    plane: Plane,
    bmax_t: f64,
    grid_n: usize,
    consts: &PhysicalConstants,
) -> Result<ZefozMap> {
    if bmax_t <= 0.0 {
        return Err(Error::InvalidInput("Bmax must be positive".into()));
    }
    if grid_n < 3 {
        return Err(Error::InvalidInput(
            "grid must have at least 3 points".into(),
        ));
    }
    let zero = eigensolve(&build_hamiltonian(sys, &FieldVector::zero(), consts)?)?;
    let (lower, upper) = match selector {
        TransitionSelector::Pair { lower, upper } => {
            if lower >= upper || upper >= sys.dim() {
                return Err(Error::InvalidInput(format!(
                    "invalid level pair ({lower}, {upper})"
                )));
            }
            (lower, upper)
        }
        TransitionSelector::NearestZeroField(f) => nearest_pair(&zero, f)?,
    };

    let axis: Vec<f64> = (0..grid_n)
        .map(|k| -bmax_t + 2.0 * bmax_t * k as f64 / (grid_n - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(grid_n * grid_n);
    for &x in &axis {
        for &y in &axis {
            let dir_field = match plane {
                Plane::D1D2 => Vector3::new(x, y, 0.0),
                Plane::D2B => Vector3::new(0.0, x, y),
                Plane::D1B => Vector3::new(x, 0.0, y),
            };
            values.push(gradient_norm_tracked(
                sys, dir_field, &zero, lower, upper, consts,
            ));
        }
    }

    // Ray metric: mean gradient along each ray through the origin.
    let radii: Vec<f64> = (1..=4).map(|k| bmax_t * k as f64 / 4.0).collect();
    let mut best = (f64::INFINITY, 0.0);
    let mut angle = 0.0;
    while angle < 180.0 {
        let dir = plane.direction(angle, 0.0);
        let mut acc = 0.0;
        let mut count = 0usize;
        for &r in &radii {
            let v = gradient_norm_tracked(sys, dir * r, &zero, lower, upper, consts);
            if v.is_finite() {
                acc += v;
                count += 1;
            }
        }
        if count > 0 {
            let mean = acc / count as f64;
            if mean < best.0 {
                best = (mean, angle);
            }
        }
        angle += 0.5;
    }

    Ok(ZefozMap {
        plane,
        axis_t: axis,
        gradient_hz_per_t: values,
        min_gradient_angle_deg: best.1,
        lower,
        upper,
    })
}

fn nearest_pair(zero: &LevelSet, f: f64) -> Result<(usize, usize)> {
    let dim = zero.dim();
    let mut best: Option<(f64, usize, usize)> = None;
    for lo in 0..dim {
        for hi in (lo + 1)..dim {
            let gap = zero.energies[hi] - zero.energies[lo];
            let d = (gap - f).abs();
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, lo, hi));
            }
        }
    }
    best.map(|(_, lo, hi)| (lo, hi))
        .ok_or_else(|| Error::InvalidInput("system has fewer than two levels".into()))
}

/// ‖∇f‖ of the zero-field pair followed to `field`; NaN when tracking fails.
fn gradient_norm_tracked(
    sys: &SpinSystem,
    field: Vector3<f64>,
    zero: &LevelSet,
    lower: usize,
    upper: usize,
    consts: &PhysicalConstants,
) -> f64 {
    let b = FieldVector::from_vector(field);
    let here = match build_hamiltonian(sys, &b, consts).and_then(|h| eigensolve(&h)) {
        Ok(l) => l,
        Err(_) => return f64::NAN,
    };
    let lo = match match_level(zero, &here, lower, usize::MAX) {
        Some(k) => k,
        None => return f64::NAN,
    };
    let hi = match match_level(zero, &here, upper, lo) {
        Some(k) => k,
        None => return f64::NAN,
    };
    let (lo, hi) = if lo < hi { (lo, hi) } else { (hi, lo) };
    match freq_gradient(sys, &b, lo, hi, consts) {
        Ok(g) => g.vector.norm(),
        Err(_) => f64::NAN,
    }
}

fn match_level(
    reference: &LevelSet,
    here: &LevelSet,
    index: usize,
    exclude: usize,
) -> Option<usize> {
    let dim = reference.dim();
    let mut best = (usize::MAX, -1.0f64);
    for k in 0..dim {
        if k == exclude {
            continue;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..dim {
            acc += here.states.column(k)[r].conj() * reference.states.column(index)[r];
        }
        let o2 = acc.norm_sqr();
        if o2 > best.1 {
            best = (k, o2);
        }
    }
    if best.1 >= 0.5 {
        Some(best.0)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use nalgebra::Matrix3;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn free_spin(g: f64) -> SpinSystem {
        SpinSystem {
            label: "free".into(),
            electron_spin: 0.5,
            nuclear_spin: 0.0,
            g_tensor: Matrix3::identity() * g,
            a_tensor_mhz: Matrix3::zeros(),
            g_n: 0.0,
            include_nuclear_zeeman: false,
            concentration_per_m3: 1e24,
            abundance: 1.0,
            site: 1,
        }
    }

    #[test]
    fn free_spin_resonance_inverts_the_zeeman_slope() {
        let c = consts();
        let sys = free_spin(2.0);
        let f = 2.0 * c.zeeman_slope(); // resonance exactly at 1 T
        let sols = resonance_fields(
            &sys,
            f,
            Vector3::new(0.0, 0.0, 1.0),
            (0.0, 2.0),
            &ResonanceOptions::default(),
            &c,
        )
        .unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0].field_t - 1.0).abs() < 1e-6);
        assert!(sols[0].residual_hz <= 1e3);
        assert!(sols[0].tracking_reliable);
    }

    #[test]
    fn unreachable_frequency_returns_empty() {
        let c = consts();
        let sys = free_spin(2.0);
        let sols = resonance_fields(
            &sys,
            1e12,
            Vector3::new(0.0, 0.0, 1.0),
            (0.0, 1.0),
            &ResonanceOptions::default(),
            &c,
        )
        .unwrap();
        assert!(sols.is_empty());
    }

    #[test]
    fn roots_are_stable_under_grid_refinement() {
        let c = consts();
        let sys = presets::yb171_site2();
        let dir = Plane::D1D2.direction(-88.0, 0.0);
        let coarse = resonance_fields(
            &sys,
            2.43e9,
            dir,
            (0.0, 0.5),
            &ResonanceOptions::default(),
            &c,
        )
        .unwrap();
        let fine_opts = ResonanceOptions {
            grid_points: 800,
            ..ResonanceOptions::default()
        };
        let fine = resonance_fields(&sys, 2.43e9, dir, (0.0, 0.5), &fine_opts, &c).unwrap();
        assert_eq!(coarse.len(), fine.len());
        for (a, b) in coarse.iter().zip(fine.iter()) {
            // tol-equivalent field: tolerance_hz divided by the local slope.
            let slope = a
                .transition
                .gradient
                .map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt());
            let tol_field = 1e3 / slope.unwrap_or(1e9).max(1e6) + 1e-6;
            assert!((a.field_t - b.field_t).abs() <= tol_field);
        }
    }

    #[test]
    fn yb_site2_resonates_between_154_and_174_mt_near_d2() {
        // The branch driven hardest along b at -88° from D1 sits in the
        // measured window.
        let c = consts();
        let sys = presets::yb171_site2();
        let dir = Plane::D1D2.direction(-88.0, 0.0);
        let opts = ResonanceOptions {
            b1: Some([0.0, 0.0, 1.0]),
            ..ResonanceOptions::default()
        };
        let sols = resonance_fields(&sys, 2.43e9, dir, (0.0, 0.5), &opts, &c).unwrap();
        let strongest = sols
            .iter()
            .max_by(|a, b| {
                a.transition
                    .matrix_element
                    .partial_cmp(&b.transition.matrix_element)
                    .unwrap()
            })
            .unwrap();
        assert!(
            (0.154..=0.174).contains(&strongest.field_t),
            "field {} T",
            strongest.field_t
        );
    }

    #[test]
    fn zero_misalignment_subsites_coincide() {
        let c = consts();
        let sys = presets::yb171_site2();
        let sweep = angular_sweep(
            &sys,
            2.43e9,
            Plane::D1D2,
            &[-120.0, -88.0, -45.0],
            0.0,
            (0.0, 0.6),
            &ResonanceOptions::default(),
            &c,
        )
        .unwrap();
        for pair in sweep.entries.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert_eq!(a.angle_deg, b.angle_deg);
            assert_eq!(a.solutions.len(), b.solutions.len());
            for (sa, sb) in a.solutions.iter().zip(b.solutions.iter()) {
                assert!(
                    (sa.field_t - sb.field_t).abs() < 2e-5,
                    "subsites split without misalignment at {}°",
                    a.angle_deg
                );
            }
        }
    }

    #[test]
    fn misalignment_splits_the_subsites() {
        let c = consts();
        let sys = presets::yb171_site2();
        let sweep = angular_sweep(
            &sys,
            2.43e9,
            Plane::D1D2,
            &[-131.0],
            0.8,
            (0.0, 0.6),
            &ResonanceOptions::default(),
            &c,
        )
        .unwrap();
        let a = &sweep.entries[0];
        let b = &sweep.entries[1];
        let fa = a.solutions.last().unwrap().field_t;
        let fb = b.solutions.last().unwrap().field_t;
        assert!(
            (fa - fb).abs() > 1e-4,
            "0.8° tilt must lift the subsite degeneracy: {fa} vs {fb}"
        );
    }

    #[test]
    fn pure_zeeman_map_is_uniform() {
        let c = consts();
        let sys = free_spin(2.0);
        let map = zefoz_scan(
            &sys,
            TransitionSelector::Pair { lower: 0, upper: 1 },
            Plane::D1D2,
            0.01,
            5,
            &c,
        )
        .unwrap();
        let expected = 2.0 * c.zeeman_slope();
        for v in map.gradient_hz_per_t.iter().filter(|v| v.is_finite()) {
            assert!((v - expected).abs() / expected < 1e-6);
        }
    }

    #[test]
    fn clock_transition_map_minimum_sits_at_origin() {
        let c = consts();
        let sys = presets::yb171_site2();
        let map = zefoz_scan(
            &sys,
            TransitionSelector::NearestZeroField(2.370e9),
            Plane::D1D2,
            0.01,
            5,
            &c,
        )
        .unwrap();
        // Grid contains the origin (odd grid); the minimal finite value
        // must be at it.
        let n = map.axis_t.len();
        let centre = map.gradient_hz_per_t[(n / 2) * n + n / 2];
        for (k, v) in map.gradient_hz_per_t.iter().enumerate() {
            if v.is_finite() && k != (n / 2) * n + n / 2 {
                assert!(centre <= *v + 1.0);
            }
        }
        assert!(centre < 0.01 * 2.0 * c.zeeman_slope());
    }

    #[test]
    fn spectrum_is_even_under_field_reversal() {
        let c = consts();
        let sys = presets::yb171_site2();
        for (x, y) in [(0.004, -0.007), (0.01, 0.003)] {
            let plus = spinham::energies_at(&sys, &FieldVector::new(x, y, 0.0), &c).unwrap();
            let minus = spinham::energies_at(&sys, &FieldVector::new(-x, -y, 0.0), &c).unwrap();
            for k in 0..4 {
                let rel = (plus[k] - minus[k]).abs() / plus[k].abs().max(1.0);
                assert!(rel < 1e-9, "level {k}: {} vs {}", plus[k], minus[k]);
            }
        }
    }
}
