//! Named parameter storage and the small layers the model is assembled from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_err, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered, named trainable tensors. Order is the registration order and is
/// what checkpoints and the optimizer rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces all values, checking names and shapes line up.
    pub fn load(&mut self, names: &[String], values: Vec<Tensor<T>>) -> Result<()> {
        if names != self.names.as_slice() || values.len() != self.tensors.len() {
            return Err(shape_err!(
                "parameter layout mismatch: expected {:?}, got {:?}",
                self.names,
                names
            ));
        }
        for ((name, old), new) in self.names.iter().zip(&self.tensors).zip(&values) {
            if old.shape() != new.shape() {
                return Err(shape_err!(
                    "parameter {name}: expected shape {:?}, got {:?}",
                    old.shape(),
                    new.shape()
                ));
            }
        }
        self.tensors = values;
        Ok(())
    }

    /// Puts every tensor on `tape` as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.param(t.clone())).collect(),
        }
    }

    /// Puts every tensor on `tape` as a constant (inference only).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| tape.constant(t.clone()))
                .collect(),
        }
    }
}

/// Tape handles for every parameter of a [`ParamSet`], in the same order.
pub struct Bound<'t, T: Scalar> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn var(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }

    pub fn from_vars(vars: Vec<Var<'t, T>>) -> Self {
        Self { vars }
    }
}

/// Seeded weight initializer.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Glorot-uniform `[fan_out, fan_in]` matrix.
    pub fn glorot<T: Scalar>(&mut self, fan_out: usize, fan_in: usize) -> Tensor<T> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.uniform(&[fan_out, fan_in], a)
    }

    pub fn uniform<T: Scalar>(&mut self, shape: &[usize], bound: f64) -> Tensor<T> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(self.rng.random_range(-bound..=bound)))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("length matches shape")
    }

    pub fn normal<T: Scalar>(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut self.rng);
                T::of(std * x)
            })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("length matches shape")
    }
}

/// `y = x Wᵀ + b` with `W` stored `[out, in]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        init: &mut Init,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let w = params.add(format!("{name}.weight"), init.glorot(fan_out, fan_in));
        let b = params.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<'t, T: Scalar>(&self, x: Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        x.matmul(p.var(self.w).transpose()?)?.add_row(p.var(self.b))
    }
}

/// Two linear layers with a SiLU in between.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        init: &mut Init,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
    ) -> Self {
        Self {
            first: Linear::new(params, init, &format!("{name}.0"), fan_in, hidden),
            second: Linear::new(params, init, &format!("{name}.1"), hidden, fan_out),
        }
    }

    pub fn forward<'t, T: Scalar>(&self, x: Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        self.second.forward(self.first.forward(x, p)?.silu()?, p)
    }
}
