//! Energy spectra on a micro-canonical shell and the no-resonance condition.
//!
//! A spectrum is an ascending list of `D` eigenvalues (with `ħ = 1`). The
//! no-resonance condition asks that all gaps `E_a - E_b` with `a != b` be
//! pairwise distinct. Exact equality is meaningless in floating point, so the
//! check is performed at an absolute tolerance: two gaps collide when they are
//! within `tol` of each other.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of a resonance check.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceCheck {
    pub resonance_free: bool,
    /// Indices `(a, b, a2, b2)` with `E_a - E_b ≈ E_a2 - E_b2`, when a
    /// collision was found. A zero gap (degenerate level) is reported as
    /// `(a, b, b, b)`.
    pub witness: Option<[usize; 4]>,
    /// Smallest distance between two gaps, or between a gap and zero.
    pub min_gap: f64,
}

/// Checks the no-resonance condition at tolerance `tol`.
///
/// Indices in the witness refer to positions in `eigenvalues`. Only the
/// `D(D-1)/2` non-negative gaps are enumerated; negative gaps are their mirror
/// images. Cost is `O(D² log D)`.
pub fn check_resonance_free(eigenvalues: &[f64], tol: f64) -> Result<ResonanceCheck> {
    if eigenvalues.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "resonance check needs at least two levels, got {}",
            eigenvalues.len()
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::Precondition(format!("resonance tolerance must be >= 0, got {tol}")));
    }

    let d = eigenvalues.len();
    let mut gaps: Vec<(f64, usize, usize)> = Vec::with_capacity(d * (d - 1) / 2);
    for a in 1..d {
        for b in 0..a {
            let diff = eigenvalues[a] - eigenvalues[b];
            if diff >= 0.0 {
                gaps.push((diff, a, b));
            } else {
                gaps.push((-diff, b, a));
            }
        }
    }
    gaps.sort_by(|x, y| x.0.total_cmp(&y.0));

    let (smallest, hi, lo) = gaps[0];
    let mut min_gap = smallest;
    let mut witness = (smallest <= tol).then_some([hi, lo, lo, lo]);

    for pair in gaps.windows(2) {
        let (g0, a0, b0) = pair[0];
        let (g1, a1, b1) = pair[1];
        let sep = g1 - g0;
        if sep < min_gap {
            min_gap = sep;
        }
        if witness.is_none() && sep <= tol {
            witness = Some([a0, b0, a1, b1]);
        }
    }

    Ok(ResonanceCheck { resonance_free: witness.is_none(), witness, min_gap })
}

#[derive(Deserialize)]
struct SpectrumRepr {
    eigenvalues: Vec<f64>,
    #[serde(default)]
    resonance_tolerance: f64,
}

/// Ordered eigenvalues of the Hamiltonian restricted to one energy shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumRepr")]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    resonance_tolerance: f64,
    #[serde(skip)]
    resonance_free: bool,
}

impl TryFrom<SpectrumRepr> for Spectrum {
    type Error = Error;

    fn try_from(repr: SpectrumRepr) -> Result<Self> {
        Spectrum::new(repr.eigenvalues, repr.resonance_tolerance)
    }
}

impl Spectrum {
    /// Sorts `eigenvalues` and records whether they are resonance-free at
    /// `tolerance`. A single level is trivially resonance-free.
    pub fn new(mut eigenvalues: Vec<f64>, tolerance: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::DegenerateInput("spectrum must contain at least one level".into()));
        }
        if eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::Precondition("eigenvalues must be finite".into()));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::Precondition(format!(
                "resonance tolerance must be >= 0, got {tolerance}"
            )));
        }
        eigenvalues.sort_by(f64::total_cmp);
        let resonance_free = if eigenvalues.len() < 2 {
            true
        } else {
            check_resonance_free(&eigenvalues, tolerance)?.resonance_free
        };
        Ok(Self { eigenvalues, resonance_tolerance: tolerance, resonance_free })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn resonance_tolerance(&self) -> f64 {
        self.resonance_tolerance
    }

    pub fn is_resonance_free(&self) -> bool {
        self.resonance_free
    }

    /// Full resonance report at the stored tolerance; `None` for one level.
    pub fn resonance_report(&self) -> Option<ResonanceCheck> {
        check_resonance_free(&self.eigenvalues, self.resonance_tolerance).ok()
    }

    /// Smallest spacing between adjacent levels; `None` for one level.
    pub fn min_level_spacing(&self) -> Option<f64> {
        self.eigenvalues.windows(2).map(|w| w[1] - w[0]).min_by(f64::total_cmp)
    }

    /// Default averaging horizon `100 / (min level spacing)`; 100 for a
    /// single level.
    pub fn default_horizon(&self) -> f64 {
        match self.min_level_spacing() {
            Some(gap) if gap > 0.0 => 100.0 / gap,
            _ => 100.0,
        }
    }

    pub(crate) fn ensure_resonance_free(&self) -> Result<()> {
        if self.resonance_free {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "spectrum has resonances at tolerance {:e}",
                self.resonance_tolerance
            )))
        }
    }

    pub(crate) fn ensure_nondegenerate(&self) -> Result<()> {
        match self.min_level_spacing() {
            Some(gap) if gap <= self.resonance_tolerance => Err(Error::Precondition(format!(
                "spectrum has degenerate levels (spacing {gap:e} <= tolerance {:e})",
                self.resonance_tolerance
            ))),
            _ => Ok(()),
        }
    }
}

/// Draws `dim` i.i.d. uniform levels in `window`, resampling until the set is
/// resonance-free at `tol`. At most `1 + max_retries` draws are made.
pub fn sample_nonresonant_spectrum<R: Rng + ?Sized>(
    dim: usize,
    window: (f64, f64),
    rng: &mut R,
    tol: f64,
    max_retries: usize,
) -> Result<Spectrum> {
    if dim == 0 {
        return Err(Error::DegenerateInput("spectrum dimension must be >= 1".into()));
    }
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Precondition(format!("empty energy window [{lo}, {hi}]")));
    }
    for _ in 0..=max_retries {
        let levels: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
        let spectrum = Spectrum::new(levels, tol)?;
        if spectrum.is_resonance_free() {
            return Ok(spectrum);
        }
    }
    Err(Error::SamplingFailure { attempts: max_retries + 1, tolerance: tol })
}
