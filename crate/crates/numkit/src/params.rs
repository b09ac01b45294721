use crate::checkpoint::Tensor;
use crate::{NumError, Result};

/// Anything that owns named, shaped f64 tensors.
///
/// Both visitors must walk the tensors in the same order; flattening and
/// the optimizer rely on it.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));
}

pub fn num_params<P: Parameters + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, _, d| n += d.len());
    n
}

pub fn flatten<P: Parameters + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit("", &mut |_, _, d| out.extend_from_slice(d));
    out
}

pub fn unflatten<P: Parameters + ?Sized>(p: &mut P, src: &[f64]) -> Result<()> {
    let expected = num_params(p);
    crate::check_len("unflatten", expected, src.len())?;
    let mut offset = 0;
    p.visit_mut("", &mut |_, _, d| {
        d.copy_from_slice(&src[offset..offset + d.len()]);
        offset += d.len();
    });
    Ok(())
}

/// A copy of `p` with every parameter set to zero; used as a gradient buffer.
pub fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.visit_mut("", &mut |_, _, d| d.iter_mut().for_each(|x| *x = 0.0));
    z
}

pub fn tensors<P: Parameters + ?Sized>(p: &P, prefix: &str) -> Vec<Tensor> {
    let mut out = Vec::new();
    p.visit(prefix, &mut |name, dims, data| {
        out.push(Tensor {
            name: name.to_string(),
            dims: dims.to_vec(),
            data: data.to_vec(),
        })
    });
    out
}

/// Fill every tensor of `p` from `src`, matched by name and shape.
pub fn load_tensors<P: Parameters + ?Sized>(p: &mut P, prefix: &str, src: &[Tensor]) -> Result<()> {
    let mut err = None;
    p.visit_mut(prefix, &mut |name, dims, data| {
        if err.is_some() {
            return;
        }
        match src.iter().find(|t| t.name == name) {
            None => err = Some(NumError::Format(format!("missing tensor {name}"))),
            Some(t) if t.dims != dims => {
                err = Some(NumError::Format(format!(
                    "tensor {name}: shape {:?} != expected {:?}",
                    t.dims, dims
                )))
            }
            Some(t) => data.copy_from_slice(&t.data),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<P: Parameters> Parameters for Vec<P> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// A free-standing named vector parameter (codebook rows, log-std, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamVec {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }
}

impl Parameters for ParamVec {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(prefix, &self.dims, &self.data);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        f(prefix, &self.dims, &mut self.data);
    }
}
