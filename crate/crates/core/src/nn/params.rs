use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::real::Real;

/// Whether a vector holds model parameters `w` or a model difference `u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Model,
    Update,
}

/// Flat parameter array tagged with its kind and the architecture it belongs to.
#[derive(Clone, Debug)]
pub struct ParamVector<T> {
    kind: PayloadKind,
    values: Vec<T>,
    layout: Arc<ModelSpec>,
}

impl<T: Real> PartialEq for ParamVector<T> {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.same_layout(other) && self.values == other.values
    }
}

impl<T: Real> ParamVector<T> {
    pub fn zeros(kind: PayloadKind, layout: Arc<ModelSpec>) -> Self {
        let values = vec![T::ZERO; layout.param_count()];
        ParamVector { kind, values, layout }
    }

    pub fn from_values(kind: PayloadKind, layout: Arc<ModelSpec>, values: Vec<T>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::layout(format!(
                "{} values for a model with {} parameters",
                values.len(),
                layout.param_count()
            )));
        }
        Ok(ParamVector { kind, values, layout })
    }

    pub fn kind(&self) -> PayloadKind {
        self.kind
    }

    pub fn layout(&self) -> &Arc<ModelSpec> {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same values under a different kind tag.
    pub fn with_kind(mut self, kind: PayloadKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn check_layout(&self, spec: &ModelSpec) -> Result<()> {
        if std::ptr::eq(Arc::as_ptr(&self.layout), spec) || *self.layout == *spec {
            Ok(())
        } else {
            Err(Error::layout("parameter vector belongs to a different architecture"))
        }
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::layout("parameter vectors have different architectures"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm, accumulated in double precision.
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt()
    }

    /// `self − base`, tagged as an update.
    pub fn difference(&self, base: &Self) -> Result<Self> {
        self.check_compatible(base)?;
        let values = self.values.iter().zip(&base.values).map(|(&a, &b)| a - b).collect();
        Ok(ParamVector { kind: PayloadKind::Update, values, layout: Arc::clone(&self.layout) })
    }

    /// Adds an update in place (`w ← w + u`).
    pub fn add_assign_update(&mut self, update: &Self) -> Result<()> {
        self.check_compatible(update)?;
        if update.kind != PayloadKind::Update {
            return Err(Error::Contract("only an update can be added to a payload".into()));
        }
        for (w, &u) in self.values.iter_mut().zip(&update.values) {
            *w += u;
        }
        Ok(())
    }

    /// Converts to another scalar type through `f64`.
    pub fn cast<U: Real>(&self) -> ParamVector<U> {
        ParamVector {
            kind: self.kind,
            values: self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            layout: Arc::clone(&self.layout),
        }
    }
}
