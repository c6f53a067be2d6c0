//! Two-arm study summaries and the per-study mean difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-arm summary statistics for one study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub n_t: u32,
    pub mean_t: f64,
    /// Sample variance of the treatment arm.
    pub var_t: f64,
    pub n_c: u32,
    pub mean_c: f64,
    /// Sample variance of the control arm.
    pub var_c: f64,
}

/// Derived per-study quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    /// Estimated mean difference.
    pub y: f64,
    /// Unpooled variance of `y`.
    pub v2: f64,
    pub n_t: u32,
    pub n_c: u32,
    /// Effective sample size `n_t n_c / (n_t + n_c)`.
    pub eff_n: f64,
}

impl StudySummary {
    /// Check arm sizes and variances; `index` is used in the error.
    pub fn check(&self, index: usize) -> Result<()> {
        let fail = |field, reason: String| Err(Error::InvalidStudy { index, field, reason });
        if self.n_t < 2 {
            return fail("n_t", format!("need at least 2, got {}", self.n_t));
        }
        if self.n_c < 2 {
            return fail("n_c", format!("need at least 2, got {}", self.n_c));
        }
        if !self.mean_t.is_finite() {
            return fail("mean_t", format!("not finite ({})", self.mean_t));
        }
        if !self.mean_c.is_finite() {
            return fail("mean_c", format!("not finite ({})", self.mean_c));
        }
        if !(self.var_t > 0.0 && self.var_t.is_finite()) {
            return fail("var_t", format!("must be positive and finite, got {}", self.var_t));
        }
        if !(self.var_c > 0.0 && self.var_c.is_finite()) {
            return fail("var_c", format!("must be positive and finite, got {}", self.var_c));
        }
        Ok(())
    }

    /// Welch-type term `s⁴_T/(n_T²(n_T−1)) + s⁴_C/(n_C²(n_C−1))`.
    pub fn welch_g(&self) -> f64 {
        arm_g(self.var_t, self.n_t) + arm_g(self.var_c, self.n_c)
    }
}

fn arm_g(var: f64, n: u32) -> f64 {
    let n = n as f64;
    var * var / (n * n * (n - 1.0))
}

/// Mean difference, its unpooled variance and the effective sample size.
pub fn md_effect(study: &StudySummary) -> Result<EffectRow> {
    study.check(0)?;
    Ok(effect_unchecked(study))
}

fn effect_unchecked(s: &StudySummary) -> EffectRow {
    let (nt, nc) = (s.n_t as f64, s.n_c as f64);
    EffectRow {
        y: s.mean_t - s.mean_c,
        v2: s.var_t / nt + s.var_c / nc,
        n_t: s.n_t,
        n_c: s.n_c,
        eff_n: nt * nc / (nt + nc),
    }
}

/// A validated meta-analysis: effect rows plus the Welch-type terms `gᵢ`.
///
/// Columns are stored contiguously because every estimator sweeps over them
/// repeatedly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    studies: Vec<StudySummary>,
    effects: Vec<EffectRow>,
    y: Vec<f64>,
    v2: Vec<f64>,
    eff_n: Vec<f64>,
    g: Vec<f64>,
}

impl Dataset {
    /// Validate studies and derive effect rows.
    pub fn new(studies: Vec<StudySummary>) -> Result<Self> {
        if studies.len() < 2 {
            return Err(Error::InsufficientStudies(studies.len()));
        }
        for (i, s) in studies.iter().enumerate() {
            s.check(i)?;
        }
        let effects: Vec<EffectRow> = studies.iter().map(effect_unchecked).collect();
        let g = studies.iter().map(StudySummary::welch_g).collect();
        Ok(Self::assemble(studies, effects, g))
    }

    /// A dataset given directly by effects and variances, without arm data.
    ///
    /// Effective sizes are all 1 and the Welch-type terms are zero, so the
    /// corrected estimators reduce to their classical counterparts.
    pub fn from_effects(y: &[f64], v2: &[f64]) -> Result<Self> {
        if y.len() != v2.len() {
            return Err(Error::Parameter(format!(
                "{} effects but {} variances",
                y.len(),
                v2.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::InsufficientStudies(y.len()));
        }
        let mut effects = Vec::with_capacity(y.len());
        for (i, (&yi, &vi)) in y.iter().zip(v2).enumerate() {
            if !yi.is_finite() {
                return Err(Error::InvalidStudy { index: i, field: "y", reason: "not finite".into() });
            }
            if !(vi > 0.0 && vi.is_finite()) {
                return Err(Error::InvalidStudy {
                    index: i,
                    field: "v2",
                    reason: format!("must be positive and finite, got {vi}"),
                });
            }
            effects.push(EffectRow { y: yi, v2: vi, n_t: 0, n_c: 0, eff_n: 1.0 });
        }
        let g = vec![0.0; y.len()];
        Ok(Self::assemble(Vec::new(), effects, g))
    }

    fn assemble(studies: Vec<StudySummary>, effects: Vec<EffectRow>, g: Vec<f64>) -> Self {
        Dataset {
            y: effects.iter().map(|e| e.y).collect(),
            v2: effects.iter().map(|e| e.v2).collect(),
            eff_n: effects.iter().map(|e| e.eff_n).collect(),
            studies,
            effects,
            g,
        }
    }

    /// Replace the effective sample sizes (used by the SSW estimator).
    pub fn with_eff_n(mut self, eff_n: &[f64]) -> Result<Self> {
        if eff_n.len() != self.k() || eff_n.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(Error::Parameter("effective sizes must be positive, one per study".into()));
        }
        self.eff_n = eff_n.to_vec();
        for (e, &n) in self.effects.iter_mut().zip(eff_n) {
            e.eff_n = n;
        }
        Ok(self)
    }

    /// Replace the Welch-type terms, e.g. with zeros to recover the
    /// uncorrected estimators.
    pub fn with_g(mut self, g: &[f64]) -> Result<Self> {
        if g.len() != self.k() || g.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Parameter("g must be nonnegative, one per study".into()));
        }
        self.g = g.to_vec();
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.y.len()
    }

    pub fn studies(&self) -> &[StudySummary] {
        &self.studies
    }

    pub fn effects(&self) -> &[EffectRow] {
        &self.effects
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn v2(&self) -> &[f64] {
        &self.v2
    }

    pub fn eff_n(&self) -> &[f64] {
        &self.eff_n
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn max_v2(&self) -> f64 {
        self.v2.iter().cloned().fold(0.0, f64::max)
    }

    /// Unweighted sum of squares about the plain mean; bounds Q from above.
    pub(crate) fn raw_ss(&self) -> f64 {
        let mean = self.y.iter().sum::<f64>() / self.k() as f64;
        self.y.iter().map(|y| (y - mean) * (y - mean)).sum()
    }
}

/// Validate a list of studies and return their effect rows.
pub fn validate_dataset(studies: &[StudySummary]) -> Result<Dataset> {
    Dataset::new(studies.to_vec())
}

/// Map every arm mean `m ↦ scale·m` and add `shift` to treatment means;
/// variances scale by `scale²`. Each `y` therefore maps to `scale·y + shift`.
pub fn shift_scale(studies: &[StudySummary], shift: f64, scale: f64) -> Result<Vec<StudySummary>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain(format!("scale must be positive and finite, got {scale}")));
    }
    if !shift.is_finite() {
        return Err(Error::Domain(format!("shift must be finite, got {shift}")));
    }
    let s2 = scale * scale;
    Ok(studies
        .iter()
        .map(|s| StudySummary {
            n_t: s.n_t,
            mean_t: scale * s.mean_t + shift,
            var_t: s2 * s.var_t,
            n_c: s.n_c,
            mean_c: scale * s.mean_c,
            var_c: s2 * s.var_c,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study(n_t: u32, mean_t: f64, var_t: f64, n_c: u32, mean_c: f64, var_c: f64) -> StudySummary {
        StudySummary { n_t, mean_t, var_t, n_c, mean_c, var_c }
    }

    #[test]
    fn effect_arithmetic() {
        let e = md_effect(&study(4, 5.0, 4.0, 2, 3.0, 2.0)).unwrap();
        assert_eq!(e.y, 2.0);
        assert_eq!(e.v2, 2.0);
        assert!((e.eff_n - 8.0 / 6.0).abs() < 1e-15);

        let e = md_effect(&study(10, 0.0, 10.0, 30, 0.0, 10.0)).unwrap();
        assert!((e.v2 - 4.0 / 3.0).abs() < 1e-15);

        let e = md_effect(&study(7, 1.5, 1.0, 9, 1.5, 3.0)).unwrap();
        assert_eq!(e.y, 0.0);
    }

    #[test]
    fn validation_names_the_field() {
        let good = study(5, 1.0, 1.0, 5, 0.0, 1.0);
        assert!(matches!(
            validate_dataset(&[good]),
            Err(Error::InsufficientStudies(1))
        ));
        assert_eq!(validate_dataset(&[good, good]).unwrap().k(), 2);
        let bad = study(5, 1.0, 1.0, 5, 0.0, 0.0);
        match validate_dataset(&[good, bad]) {
            Err(Error::InvalidStudy { index, field, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(field, "var_c");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(md_effect(&study(1, 0.0, 1.0, 5, 0.0, 1.0)).is_err());
    }

    #[test]
    fn welch_g_values() {
        let s = study(2, 0.0, 1.0, 2, 0.0, 1.0);
        assert_eq!(s.welch_g(), 0.5);
        let scaled = shift_scale(&[s], 0.0, 3.0).unwrap()[0];
        assert!((scaled.welch_g() - 81.0 * 0.5).abs() < 1e-12);
        let big = study(100_000, 0.0, 1.0, 100_000, 0.0, 1.0);
        assert!(big.welch_g() < 1e-14);
    }

    #[test]
    fn shift_and_scale() {
        let base = vec![study(4, 5.0, 4.0, 2, 3.0, 2.0), study(6, -1.0, 1.0, 8, 0.5, 2.0)];
        assert_eq!(shift_scale(&base, 0.0, 1.0).unwrap(), base);
        let d0 = validate_dataset(&base).unwrap();
        let d1 = validate_dataset(&shift_scale(&base, 0.7, 1.0).unwrap()).unwrap();
        for (a, b) in d0.y().iter().zip(d1.y()) {
            assert!((b - a - 0.7).abs() < 1e-12);
        }
        assert_eq!(d0.v2(), d1.v2());
        let d2 = validate_dataset(&shift_scale(&base, 0.0, 2.0).unwrap()).unwrap();
        for i in 0..2 {
            assert_eq!(d2.y()[i], 2.0 * d0.y()[i]);
            assert_eq!(d2.v2()[i], 4.0 * d0.v2()[i]);
        }
        assert!(shift_scale(&base, 0.0, 0.0).is_err());
    }

    #[test]
    fn from_effects_checks_input() {
        assert!(Dataset::from_effects(&[1.0], &[1.0]).is_err());
        assert!(Dataset::from_effects(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        let d = Dataset::from_effects(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(d.g(), &[0.0, 0.0]);
        assert_eq!(d.raw_ss(), 2.0);
    }
}
