use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{normalize_in_place, Matrix};

/// Fused rows with a norm below this are rejected as degenerate.
pub const MIN_FUSED_NORM: f64 = 1e-9;

/// Averages paired image and text embeddings and renormalizes each fused row.
///
/// Rows are paired by position and ids must agree. The output keeps the image
/// ids, and the image labels when present (text labels otherwise).
pub fn ensemble_features(image: &EmbeddingSet, text: &EmbeddingSet) -> Result<EmbeddingSet> {
    if image.count() != text.count() || image.dim() != text.dim() {
        return Err(Error::shape(format!(
            "image set is {}x{}, text set is {}x{}",
            image.count(),
            image.dim(),
            text.count(),
            text.dim()
        )));
    }
    if let Some(i) = (0..image.count()).find(|&i| image.ids()[i] != text.ids()[i]) {
        return Err(Error::shape(format!(
            "row {i} pairs id {:?} with {:?}",
            image.ids()[i],
            text.ids()[i]
        )));
    }

    let d = image.dim();
    let mut fused = Matrix::zeros(image.count(), d);
    for i in 0..image.count() {
        let row = fused.row_mut(i);
        for ((o, &a), &b) in row.iter_mut().zip(image.row(i)).zip(text.row(i)) {
            *o = (f64::from(a) + f64::from(b)) / 2.0;
        }
        normalize_in_place(row, MIN_FUSED_NORM).ok_or(Error::DegenerateVector(i))?;
    }

    let labels = image.labels().or(text.labels()).map(<[i64]>::to_vec);
    EmbeddingSet::from_matrix(&fused, Some(image.ids().to_vec()), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_ids;

    fn set(rows: &[[f32; 3]]) -> EmbeddingSet {
        EmbeddingSet::new(3, rows.concat(), default_ids("p", rows.len()), None).unwrap()
    }

    #[test]
    fn identical_inputs_pass_through() {
        let u = [0.6, 0.0, 0.8];
        let out = ensemble_features(&set(&[u]), &set(&[u])).unwrap();
        assert_eq!(out.row(0), &u);
    }

    #[test]
    fn orthogonal_inputs_bisect() {
        let out = ensemble_features(&set(&[[1.0, 0.0, 0.0]]), &set(&[[0.0, 1.0, 0.0]])).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        assert_eq!(out.row(0), &[h, h, 0.0]);
    }

    #[test]
    fn antipodal_inputs_are_degenerate() {
        let r = ensemble_features(&set(&[[1.0, 0.0, 0.0]]), &set(&[[-1.0, 0.0, 0.0]]));
        assert!(matches!(r, Err(Error::DegenerateVector(0))));
    }

    #[test]
    fn shape_and_id_mismatches() {
        let a = set(&[[1.0, 0.0, 0.0]]);
        let b = EmbeddingSet::new(2, vec![1.0, 0.0], default_ids("p", 1), None).unwrap();
        assert!(matches!(ensemble_features(&a, &b), Err(Error::ShapeMismatch(_))));
        let c = EmbeddingSet::new(3, vec![1.0, 0.0, 0.0], vec!["other".into()], None).unwrap();
        assert!(matches!(ensemble_features(&a, &c), Err(Error::ShapeMismatch(_))));
    }
}
