//! Named views over parameter tensors, shared by the optimizer, the
//! checkpoint writer and the gradient checker.

/// Read-only view of one parameter tensor.
#[derive(Debug)]
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Mutable view of one parameter tensor.
#[derive(Debug)]
pub struct ParamViewMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// A bundle of named parameter tensors, visited in a fixed order.
///
/// Gradients use the same type as the parameters they belong to, so the
/// visit order aligns parameters and gradients one to one.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>);

    fn views(&self) -> Vec<ParamView<'_>> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn views_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    fn num_scalars(&self) -> usize {
        self.views().iter().map(|v| v.data.len()).sum()
    }

    /// Flattened copy of every scalar, in visit order.
    fn flatten(&self) -> Vec<f64> {
        self.views().iter().flat_map(|v| v.data.iter().copied()).collect()
    }

    fn set_zero(&mut self) {
        for v in self.views_mut() {
            v.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// `self += other`, element-wise.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.views();
        for (dst, src) in self.views_mut().into_iter().zip(src) {
            debug_assert_eq!(dst.name, src.name);
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.views().iter().all(|v| v.data.iter().all(|x| x.is_finite()))
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
