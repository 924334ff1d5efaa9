use std::io::Write;

use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::uncertainty::{DifficultyCategory, PredictionTrace};

/// Mean true-class probability per category at every checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryCurves {
    /// Indexed by `DifficultyCategory::index`.
    pub curves: [Vec<f64>; 3],
    /// Categories with no nodes (their curve is all zeros).
    pub empty: [bool; 3],
}

impl CategoryCurves {
    pub fn get(&self, c: DifficultyCategory) -> &[f64] {
        &self.curves[c.index()]
    }
}

pub fn per_category_curves(
    trace: &PredictionTrace,
    labels: &LabelSet,
    categories: &[DifficultyCategory],
) -> Result<CategoryCurves> {
    let y = labels.require_single("category curves")?;
    if categories.len() != trace.num_nodes() || y.len() != trace.num_nodes() {
        return Err(Error::Invalid(format!(
            "trace covers {} nodes, got {} labels and {} categories",
            trace.num_nodes(),
            y.len(),
            categories.len()
        )));
    }
    let e = trace.num_checkpoints();
    let mut sums: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; e]);
    let mut sizes = [0usize; 3];
    for (v, c) in categories.iter().enumerate() {
        let k = c.index();
        sizes[k] += 1;
        for (slot, p) in sums[k].iter_mut().zip(trace.class_series(v, y[v])) {
            *slot += p;
        }
    }
    for k in 0..3 {
        if sizes[k] > 0 {
            for s in &mut sums[k] {
                *s /= sizes[k] as f64;
            }
        }
    }
    Ok(CategoryCurves {
        curves: sums,
        empty: sizes.map(|s| s == 0),
    })
}

/// `checkpoint,easy,ambiguous,hard`
pub fn write_curves_csv<W: Write>(curves: &CategoryCurves, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["checkpoint", "easy", "ambiguous", "hard"])?;
    for i in 0..curves.curves[0].len() {
        w.write_record([
            i.to_string(),
            curves.curves[0][i].to_string(),
            curves.curves[1][i].to_string(),
            curves.curves[2][i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::TraceMeta;
    use DifficultyCategory::*;

    fn trace(e: usize, true_probs: &[f32]) -> PredictionTrace {
        let n = true_probs.len() / e;
        let probs = true_probs.iter().flat_map(|&p| [p, 1.0 - p]).collect();
        let meta = TraceMeta {
            checkpoint_epochs: (1..=e as u64).collect(),
            ..Default::default()
        };
        PredictionTrace::new(e, n, 2, probs, meta).unwrap()
    }

    #[test]
    fn constant_easy_population() {
        let t = trace(3, &[0.9; 6]);
        let l = LabelSet::single(2, vec![0, 0]).unwrap();
        let c = per_category_curves(&t, &l, &[Easy, Easy]).unwrap();
        assert!(c.get(Easy).iter().all(|&p| (p - 0.9f32 as f64).abs() < 1e-15));
        assert_eq!(c.empty, [false, true, true]);
        assert_eq!(c.get(Hard), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn three_nodes_two_checkpoints() {
        // checkpoint 0: .8 .5 .25 ; checkpoint 1: .5 .75 .125
        let t = trace(2, &[0.8, 0.5, 0.25, 0.5, 0.75, 0.125]);
        let l = LabelSet::single(2, vec![0, 0, 0]).unwrap();
        let c = per_category_curves(&t, &l, &[Easy, Easy, Hard]).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-7);
        assert!(close(c.get(Easy), &[(0.8 + 0.5) / 2.0, (0.5 + 0.75) / 2.0]));
        assert!(close(c.get(Hard), &[0.25, 0.125]));
        assert!(c.empty[Ambiguous.index()]);
    }

    #[test]
    fn single_checkpoint_equals_category_means() {
        let t = trace(1, &[0.5, 0.25]);
        let l = LabelSet::single(2, vec![0, 0]).unwrap();
        let c = per_category_curves(&t, &l, &[Ambiguous, Ambiguous]).unwrap();
        assert_eq!(c.get(Ambiguous), &[0.375]);
        let mut buf = Vec::new();
        write_curves_csv(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "checkpoint,easy,ambiguous,hard\n0,0,0.375,0\n");
    }
}
