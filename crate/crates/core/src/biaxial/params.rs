use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::kernel::FEATURE_WIDTH;
use crate::neural::{LstmCellParams, ParamSet, Tensor};

/// Width of the (play, articulate) pair fed back along the note axis.
pub const FEEDBACK_WIDTH: usize = 2;

/// Layer sizes of both LSTM stacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiaxialShape {
    pub time_hidden: Vec<usize>,
    pub note_hidden: Vec<usize>,
}

impl Default for BiaxialShape {
    fn default() -> Self {
        Self {
            time_hidden: vec![64, 64],
            note_hidden: vec![64, 32],
        }
    }
}

impl BiaxialShape {
    pub fn new(time_hidden: Vec<usize>, note_hidden: Vec<usize>) -> Result<Self, ModelError> {
        let s = Self {
            time_hidden,
            note_hidden,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.time_hidden.is_empty() || self.note_hidden.is_empty() {
            return Err(ModelError::InvalidShape("both stacks need at least one layer".into()));
        }
        if self.time_hidden.iter().chain(&self.note_hidden).any(|&h| h == 0) {
            return Err(ModelError::InvalidShape("hidden sizes must be positive".into()));
        }
        Ok(())
    }

    /// `(input, hidden)` of every timewise layer.
    fn time_dims(&self) -> Vec<(usize, usize)> {
        stack_dims(FEATURE_WIDTH, &self.time_hidden)
    }

    fn note_dims(&self) -> Vec<(usize, usize)> {
        let top = *self.time_hidden.last().expect("validated");
        stack_dims(top + FEEDBACK_WIDTH, &self.note_hidden)
    }
}

fn stack_dims(input: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
    let mut prev = input;
    hidden
        .iter()
        .map(|&h| {
            let d = (prev, h);
            prev = h;
            d
        })
        .collect()
}

/// All weights of the bi-axial model. The weights are shared by every note
/// and every step, so the same parameters serve any pitch range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiaxialParams {
    pub time: Vec<LstmCellParams>,
    pub note: Vec<LstmCellParams>,
    /// `2 × last notewise hidden`.
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl BiaxialParams {
    pub fn zeros(shape: &BiaxialShape) -> Result<Self, ModelError> {
        shape.validate()?;
        let top = *shape.note_hidden.last().expect("validated");
        Ok(Self {
            time: shape.time_dims().into_iter().map(|(i, h)| LstmCellParams::zeros(i, h)).collect(),
            note: shape.note_dims().into_iter().map(|(i, h)| LstmCellParams::zeros(i, h)).collect(),
            out_w: Tensor::zeros(&[FEEDBACK_WIDTH, top]),
            out_b: Tensor::zeros(&[FEEDBACK_WIDTH]),
        })
    }

    pub fn init<R: Rng + ?Sized>(shape: &BiaxialShape, rng: &mut R) -> Result<Self, ModelError> {
        shape.validate()?;
        let top = *shape.note_hidden.last().expect("validated");
        let time = shape
            .time_dims()
            .into_iter()
            .map(|(i, h)| LstmCellParams::init(i, h, rng))
            .collect();
        let note = shape
            .note_dims()
            .into_iter()
            .map(|(i, h)| LstmCellParams::init(i, h, rng))
            .collect();
        let out_w = Tensor::uniform(&[FEEDBACK_WIDTH, top], 1.0 / (top as f64).sqrt(), rng);
        Ok(Self {
            time,
            note,
            out_w,
            out_b: Tensor::zeros(&[FEEDBACK_WIDTH]),
        })
    }

    pub fn shape(&self) -> BiaxialShape {
        BiaxialShape {
            time_hidden: self.time.iter().map(|l| l.hidden_size()).collect(),
            note_hidden: self.note.iter().map(|l| l.hidden_size()).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape()).expect("shape of existing params is valid")
    }

    pub fn time_top(&self) -> usize {
        self.time.last().map_or(0, |l| l.hidden_size())
    }

    pub fn note_top(&self) -> usize {
        self.note.last().map_or(0, |l| l.hidden_size())
    }

    /// Section names in traversal order, matching [`ParamSet::tensors`].
    pub fn section_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (l, _) in self.time.iter().enumerate() {
            names.push(format!("tw.{l}.w"));
            names.push(format!("tw.{l}.b"));
        }
        for (l, _) in self.note.iter().enumerate() {
            names.push(format!("nw.{l}.w"));
            names.push(format!("nw.{l}.b"));
        }
        names.push("out.w".into());
        names.push("out.b".into());
        names
    }

    /// Rebuilds parameters from named tensors in the order of
    /// [`BiaxialParams::section_names`].
    pub fn from_sections(shape: &BiaxialShape, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        let mut p = Self::zeros(shape)?;
        let slots = p.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(ModelError::InvalidShape(format!(
                "expected {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            t.check_shape(slot.shape())?;
            *slot = t;
        }
        Ok(p)
    }
}

impl ParamSet for BiaxialParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = Vec::new();
        for l in self.time.iter().chain(&self.note) {
            v.extend(l.tensors());
        }
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = Vec::new();
        for l in self.time.iter_mut().chain(self.note.iter_mut()) {
            v.extend(l.tensors_mut());
        }
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }
}
