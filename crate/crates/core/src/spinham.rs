//! Electron–nuclear spin Hamiltonians in the (D1, D2, b) crystal frame.
//!
//! The Hamiltonian (in Hz, on the |m_S⟩⊗|m_I⟩ product basis) is
//!
//! ```text
//! H = S·Â·I + (μ_B/h)·B·ĝ·S − (μ_N/h)·g_n·B·I
//! ```
//!
//! with the nuclear Zeeman term optional. Ĝ and Â are arbitrary real 3×3
//! matrices; Â is stored in MHz as tabulated.

use nalgebra::{DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consts::PhysicalConstants;
use crate::linalg::{self, CMatrix};
use crate::{Error, Result};

/// Static magnetic field in tesla, components along (D1, D2, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub d1: f64,
    pub d2: f64,
    pub b: f64,
}

impl FieldVector {
    pub fn new(d1: f64, d2: f64, b: f64) -> Self {
        Self { d1, d2, b }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Direction at `angle_deg` from D1 in the D1–D2 plane, optionally tilted
    /// toward the b axis by `tilt_deg`.
    pub fn in_plane(angle_deg: f64, tilt_deg: f64, magnitude: f64) -> Self {
        let th = angle_deg.to_radians();
        let tilt = tilt_deg.to_radians();
        Self::new(
            magnitude * th.cos() * tilt.cos(),
            magnitude * th.sin() * tilt.cos(),
            magnitude * tilt.sin(),
        )
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.d1, self.d2, self.b)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn magnitude(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.d1.is_finite() && self.d2.is_finite() && self.b.is_finite()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.d1 * k, self.d2 * k, self.b * k)
    }
}

/// One paramagnetic species in the crystal: spin quantum numbers, interaction
/// tensors in the (D1, D2, b) frame, and sample bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinSystem {
    pub label: String,
    /// Electron spin quantum number; only S = 1/2 is supported.
    pub electron_spin: f64,
    /// Nuclear spin quantum number (0, 1/2 or 7/2 for the systems in scope).
    pub nuclear_spin: f64,
    /// Dimensionless g-tensor, rows/columns ordered (D1, D2, b).
    pub g_tensor: Matrix3<f64>,
    /// Hyperfine tensor in MHz, same frame.
    pub a_tensor_mhz: Matrix3<f64>,
    /// Nuclear g-factor (dimensionless, may be zero).
    pub g_n: f64,
    /// Include the −μ_N·g_n·B·I term; off by default since nuclear spin
    /// transitions are outside the measured windows.
    pub include_nuclear_zeeman: bool,
    /// Spins per m³ attributed to this system.
    pub concentration_per_m3: f64,
    /// Isotopic/site abundance fraction in [0, 1].
    pub abundance: f64,
    /// Crystallographic site, 1 or 2.
    pub site: u8,
}

impl SpinSystem {
    /// Hilbert-space dimension (2S+1)(2I+1).
    pub fn dim(&self) -> usize {
        let ds = (2.0 * self.electron_spin + 1.0).round() as usize;
        let di = (2.0 * self.nuclear_spin + 1.0).round() as usize;
        ds * di
    }

    pub fn validate(&self) -> Result<()> {
        if (self.electron_spin - 0.5).abs() > 1e-12 {
            return Err(Error::UnsupportedSpin(format!(
                "electron spin must be 1/2, got {}",
                self.electron_spin
            )));
        }
        let two_i = 2.0 * self.nuclear_spin;
        if self.nuclear_spin < 0.0 || (two_i - two_i.round()).abs() > 1e-12 {
            return Err(Error::UnsupportedSpin(format!(
                "nuclear spin must be a non-negative half-integer, got {}",
                self.nuclear_spin
            )));
        }
        if !matches!(self.dim(), 2 | 4 | 16) {
            return Err(Error::UnsupportedSpin(format!(
                "Hilbert dimension {} outside the supported set {{2, 4, 16}}",
                self.dim()
            )));
        }
        let finite = self.g_tensor.iter().all(|x| x.is_finite())
            && self.a_tensor_mhz.iter().all(|x| x.is_finite())
            && self.g_n.is_finite();
        if !finite {
            return Err(Error::InvalidInput("non-finite tensor entry".into()));
        }
        if self.concentration_per_m3 < 0.0 || !self.concentration_per_m3.is_finite() {
            return Err(Error::InvalidInput(
                "concentration must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.abundance) {
            return Err(Error::InvalidInput(format!(
                "abundance {} outside [0, 1]",
                self.abundance
            )));
        }
        if !matches!(self.site, 1 | 2) {
            return Err(Error::InvalidInput(format!(
                "site must be 1 or 2, got {}",
                self.site
            )));
        }
        Ok(())
    }

    /// Symmetrised copy of the g-tensor, (g + gᵀ)/2. The ¹⁴⁵Nd matrix is
    /// tabulated asymmetric; this switch is opt-in and never applied silently.
    pub fn with_symmetrized_g(mut self) -> Self {
        self.g_tensor = 0.5 * (self.g_tensor + self.g_tensor.transpose());
        self
    }

    /// Principal g-values as singular values of the g-matrix (descending).
    /// Basis-change safe even for an asymmetric matrix.
    pub fn principal_g_values(&self) -> [f64; 3] {
        let svd = self.g_tensor.svd(false, false);
        let mut sv = [
            svd.singular_values[0],
            svd.singular_values[1],
            svd.singular_values[2],
        ];
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    /// The C2-related magnetic subsite: tensors conjugated by a 180° rotation
    /// about the crystal b axis.
    pub fn subsite_partner(&self) -> Self {
        let r = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        let mut out = self.clone();
        out.g_tensor = r * self.g_tensor * r.transpose();
        out.a_tensor_mhz = r * self.a_tensor_mhz * r.transpose();
        out.label = format!("{}_subsite_b", self.label);
        out
    }

    /// Electron Zeeman magnitude |B̂ᵀ·ĝ| along a direction (the effective g
    /// of the I = 0 transition for that orientation).
    pub fn zeeman_g_along(&self, direction: Vector3<f64>) -> f64 {
        let d = direction.normalize();
        (self.g_tensor.transpose() * d).norm()
    }
}

/// Sorted eigenlevels (Hz) and the matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub energies: Vec<f64>,
    pub states: CMatrix,
}

impl LevelSet {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }
}

/// One eigenlevel pair: frequency, microwave matrix element, and (when the
/// stencil is non-degenerate) the field gradient of the frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub lower: usize,
    pub upper: usize,
    /// Transition frequency in Hz, E_upper − E_lower ≥ 0.
    pub frequency: f64,
    /// |⟨upper| b̂₁·ĝ·Ŝ |lower⟩|, dimensionless.
    pub matrix_element: f64,
    /// ∇_B f in Hz/T, absent when levels are degenerate within the stencil.
    pub gradient: Option<[f64; 3]>,
    /// h·‖∇_B f‖/μ_B, derived from the gradient.
    pub g_eff: Option<f64>,
    /// Two-step Richardson agreement to 1e-3 relative; false flags a
    /// questionable gradient.
    pub gradient_consistent: bool,
}

/// Spin operator triplet (Jx, Jy, Jz) for quantum number `j`, basis ordered
/// m = j, j−1, … −j. For j = 0 the operators are the 1×1 zero matrix.
pub fn spin_operators(j: f64) -> [CMatrix; 3] {
    let dim = (2.0 * j + 1.0).round() as usize;
    let mut jz = CMatrix::zeros(dim, dim);
    let mut jp = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        let m = j - k as f64;
        jz[(k, k)] = Complex64::new(m, 0.0);
        if k > 0 {
            // J+ |j,m> = sqrt(j(j+1) − m(m+1)) |j,m+1>
            let amp = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
            jp[(k - 1, k)] = Complex64::new(amp, 0.0);
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * Complex64::new(0.5, 0.0);
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    [jx, jy, jz]
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Builds the spin Hamiltonian in Hz at field `b`.
pub fn build_hamiltonian(
    sys: &SpinSystem,
    b: &FieldVector,
    consts: &PhysicalConstants,
) -> Result<CMatrix> {
    sys.validate()?;
    if !b.is_finite() {
        return Err(Error::InvalidInput("non-finite field component".into()));
    }
    let s_ops = spin_operators(sys.electron_spin);
    let i_ops = spin_operators(sys.nuclear_spin);
    let dim_s = s_ops[0].nrows();
    let dim_i = i_ops[0].nrows();
    let eye_s = CMatrix::identity(dim_s, dim_s);
    let eye_i = CMatrix::identity(dim_i, dim_i);

    let dim = dim_s * dim_i;
    let mut h = CMatrix::zeros(dim, dim);

    // Hyperfine S·Â·I, MHz -> Hz.
    for (a, s_op) in s_ops.iter().enumerate() {
        for (c, i_op) in i_ops.iter().enumerate() {
            let coeff = sys.a_tensor_mhz[(a, c)] * 1e6;
            if coeff != 0.0 {
                h += kron(s_op, i_op) * Complex64::new(coeff, 0.0);
            }
        }
    }

    // Electron Zeeman (μ_B/h)·B·ĝ·S.
    let field = b.as_vector();
    let zeeman_row = sys.g_tensor.transpose() * field;
    for c in 0..3 {
        let coeff = consts.mu_b / consts.h * zeeman_row[c];
        if coeff != 0.0 {
            h += kron(&s_ops[c], &eye_i) * Complex64::new(coeff, 0.0);
        }
    }

    // Nuclear Zeeman −(μ_N/h)·g_n·B·I, optional.
    if sys.include_nuclear_zeeman {
        for a in 0..3 {
            let coeff = -consts.mu_n / consts.h * sys.g_n * field[a];
            if coeff != 0.0 {
                h += kron(&eye_s, &i_ops[a]) * Complex64::new(coeff, 0.0);
            }
        }
    }
    Ok(h)
}

/// Diagonalises a Hermitian Hamiltonian into a [`LevelSet`].
pub fn eigensolve(h: &CMatrix) -> Result<LevelSet> {
    let (values, vectors) = linalg::eigh(h)?;
    Ok(LevelSet {
        energies: values.iter().copied().collect(),
        states: vectors,
    })
}

/// The microwave drive operator b̂₁·ĝ·Ŝ ⊗ 1 on the product basis.
fn drive_operator(sys: &SpinSystem, b1: Vector3<f64>) -> CMatrix {
    let s_ops = spin_operators(sys.electron_spin);
    let dim_i = (2.0 * sys.nuclear_spin + 1.0).round() as usize;
    let eye_i = CMatrix::identity(dim_i, dim_i);
    let row = sys.g_tensor.transpose() * b1;
    let dim_s = s_ops[0].nrows();
    let mut op = CMatrix::zeros(dim_s, dim_s);
    for c in 0..3 {
        if row[c] != 0.0 {
            op += &s_ops[c] * Complex64::new(row[c], 0.0);
        }
    }
    kron(&op, &eye_i)
}

/// Deterministic default drive direction: perpendicular to the static field
/// (resonator b₁ ⊥ B₀), falling back to D1 at zero field.
pub fn default_b1(b: &FieldVector) -> Vector3<f64> {
    let v = b.as_vector();
    if v.norm() == 0.0 {
        return Vector3::new(1.0, 0.0, 0.0);
    }
    let d = v.normalize();
    let axis = if d.z.abs() < 0.9 {
        Vector3::new(0.0, 0.0, 1.0)
    } else {
        Vector3::new(1.0, 0.0, 0.0)
    };
    axis.cross(&d).normalize()
}

/// All level pairs with matrix element ≥ `threshold`, sorted by frequency.
/// Gradients are filled by central differences reusing one stencil of
/// eigensolves for every pair.
pub fn transitions(
    sys: &SpinSystem,
    b: &FieldVector,
    b1: Option<Vector3<f64>>,
    threshold: f64,
    consts: &PhysicalConstants,
) -> Result<Vec<Transition>> {
    let b1 = match b1 {
        Some(v) => {
            let n = v.norm();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::InvalidInput(
                    "b1 direction must be a nonzero finite vector".into(),
                ));
            }
            v / n
        }
        None => default_b1(b),
    };
    let h = build_hamiltonian(sys, b, consts)?;
    let levels = eigensolve(&h)?;
    let op = drive_operator(sys, b1);
    let dim = levels.dim();

    let mut out = Vec::new();
    for lower in 0..dim {
        for upper in (lower + 1)..dim {
            let m = matrix_element(&levels, &op, lower, upper);
            if m >= threshold {
                let grad = freq_gradient(sys, b, lower, upper, consts);
                let (gradient, g_eff, consistent) = match grad {
                    Ok(g) => (
                        Some([g.vector.x, g.vector.y, g.vector.z]),
                        Some(g.g_eff),
                        g.richardson_consistent,
                    ),
                    Err(_) => (None, None, false),
                };
                out.push(Transition {
                    lower,
                    upper,
                    frequency: levels.energies[upper] - levels.energies[lower],
                    matrix_element: m,
                    gradient,
                    g_eff,
                    gradient_consistent: consistent,
                });
            }
        }
    }
    out.sort_by(|a, b| a.frequency.partial_cmp(&b.frequency).unwrap());
    Ok(out)
}

fn matrix_element(levels: &LevelSet, op: &CMatrix, lower: usize, upper: usize) -> f64 {
    let bra = levels.states.column(upper);
    let ket = levels.states.column(lower);
    let mut acc = Complex64::new(0.0, 0.0);
    let applied = op * ket;
    for r in 0..levels.dim() {
        acc += bra[r].conj() * applied[r];
    }
    acc.norm()
}

/// Field gradient of one transition frequency.
#[derive(Debug, Clone, Copy)]
pub struct Gradient {
    /// ∇_B f in Hz/T.
    pub vector: Vector3<f64>,
    /// h·‖∇_B f‖/μ_B.
    pub g_eff: f64,
    /// Agreement of the two finite-difference step sizes to 1e-3 relative.
    pub richardson_consistent: bool,
}

/// Central finite difference of f(B) per field component, evaluated at two
/// step sizes (δ and 10δ) with a Richardson consistency check. Level identity
/// across the stencil is resolved by eigenvector overlap; an ambiguous match
/// reports a degenerate-gradient condition instead of a value.
pub fn freq_gradient(
    sys: &SpinSystem,
    b: &FieldVector,
    lower: usize,
    upper: usize,
    consts: &PhysicalConstants,
) -> Result<Gradient> {
    let dim = sys.dim();
    if lower >= dim || upper >= dim || lower == upper {
        return Err(Error::InvalidInput(format!(
            "invalid level pair ({lower}, {upper}) for dimension {dim}"
        )));
    }
    let h0 = build_hamiltonian(sys, b, consts)?;
    let levels0 = eigensolve(&h0)?;

    let delta_small = 1e-6_f64.max(1e-6 * b.magnitude());
    let delta_large = 10.0 * delta_small;

    let diff_at = |delta: f64| -> Result<Vector3<f64>> {
        let mut g = Vector3::zeros();
        for axis in 0..3 {
            let mut step = [0.0; 3];
            step[axis] = delta;
            let bp = FieldVector::new(b.d1 + step[0], b.d2 + step[1], b.b + step[2]);
            let bm = FieldVector::new(b.d1 - step[0], b.d2 - step[1], b.b - step[2]);
            let lp = eigensolve(&build_hamiltonian(sys, &bp, consts)?)?;
            let lm = eigensolve(&build_hamiltonian(sys, &bm, consts)?)?;
            let degenerate = |_| Error::DegenerateGradient { lower, upper };
            let (lo_p, up_p) = track_pair(&levels0, &lp, lower, upper).map_err(degenerate)?;
            let (lo_m, up_m) = track_pair(&levels0, &lm, lower, upper).map_err(degenerate)?;
            let fp = lp.energies[up_p] - lp.energies[lo_p];
            let fm = lm.energies[up_m] - lm.energies[lo_m];
            g[axis] = (fp - fm) / (2.0 * delta);
        }
        Ok(g)
    };

    let g_small = diff_at(delta_small)?;
    let g_large = diff_at(delta_large)?;
    // Richardson extrapolation for O(δ²) central differences, step ratio 10.
    let extrapolated = (g_small * 100.0 - g_large) / 99.0;

    // Consistency floor: treat gradients below a 1e-6 effective-g scale as
    // zero for the relative comparison.
    let floor = 1e-6 * consts.zeeman_slope();
    let scale = g_small.norm().max(g_large.norm()).max(floor);
    let consistent = (g_small - g_large).norm() <= 1e-3 * scale;

    let g_eff = consts.h * extrapolated.norm() / consts.mu_b;
    Ok(Gradient {
        vector: extrapolated,
        g_eff,
        richardson_consistent: consistent,
    })
}

/// Maps the (lower, upper) pair of the reference level set onto the shifted
/// one by maximal eigenvector overlap. Overlap² below 0.5 means the branch
/// cannot be followed (degeneracy inside the stencil).
fn track_pair(
    reference: &LevelSet,
    shifted: &LevelSet,
    lower: usize,
    upper: usize,
) -> Result<(usize, usize)> {
    let lo = track_level(reference, shifted, lower, usize::MAX)?;
    let up = track_level(reference, shifted, upper, lo)?;
    Ok((lo, up))
}

fn track_level(
    reference: &LevelSet,
    shifted: &LevelSet,
    index: usize,
    exclude: usize,
) -> Result<usize> {
    let dim = reference.dim();
    let refv = reference.states.column(index);
    let mut best = (0usize, -1.0f64);
    for k in 0..dim {
        if k == exclude {
            continue;
        }
        let mut overlap = Complex64::new(0.0, 0.0);
        for r in 0..dim {
            overlap += shifted.states.column(k)[r].conj() * refv[r];
        }
        let o2 = overlap.norm_sqr();
        if o2 > best.1 {
            best = (k, o2);
        }
    }
    if best.1 < 0.5 {
        Err(Error::DegenerateGradient {
            lower: index,
            upper: index,
        })
    } else {
        Ok(best.0)
    }
}

/// Zeeman temperature T_Z = h·f/k_B of a transition at frequency `f` (Hz).
pub fn zeeman_temperature(f: f64, consts: &PhysicalConstants) -> Result<f64> {
    if f < 0.0 || !f.is_finite() {
        return Err(Error::InvalidInput(format!(
            "frequency must be non-negative and finite, got {f}"
        )));
    }
    Ok(consts.h * f / consts.k_b)
}

/// Energies of `sys` at `b` as a plain vector, convenience for sweeps.
pub fn energies_at(
    sys: &SpinSystem,
    b: &FieldVector,
    consts: &PhysicalConstants,
) -> Result<DVector<f64>> {
    let h = build_hamiltonian(sys, b, consts)?;
    let levels = eigensolve(&h)?;
    Ok(DVector::from_vec(levels.energies))
}
