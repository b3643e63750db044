//! Dense NHWC tensors in real or quantized integer form.

use crate::error::{Error, Result};
use crate::quant::QuantParams;

/// Extents in (batch, height, width, channels) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Shape {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(n: usize, h: usize, w: usize, c: usize) -> Self {
        Shape { n, h, w, c }
    }

    /// Single-image activation shape.
    pub const fn hwc(h: usize, w: usize, c: usize) -> Self {
        Shape { n: 1, h, w, c }
    }

    pub fn len(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    #[inline]
    pub fn offset(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        ((n * self.h + h) * self.w + w) * self.c + c
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.h, self.w, self.c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    I8,
    I32,
}

impl DType {
    pub fn is_integer(self) -> bool {
        !matches!(self, DType::F32)
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::I8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I8(Vec<i8>),
    I32(Vec<i32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::I8(_) => DType::I8,
            TensorData::I32(_) => DType::I32,
        }
    }
}

/// A 4-D tensor. Integer tensors always carry quantization parameters and
/// real tensors never do.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: TensorData,
    qparams: Option<QuantParams>,
}

impl Tensor {
    pub fn new(shape: Shape, data: TensorData, qparams: Option<QuantParams>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape} needs {} elements, got {}",
                shape.len(),
                data.len()
            )));
        }
        match (data.dtype().is_integer(), &qparams) {
            (true, None) => {
                return Err(Error::InvalidQuantParams(
                    "integer tensor requires quantization parameters".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidQuantParams(
                    "real tensor must not carry quantization parameters".into(),
                ))
            }
            (true, Some(q)) => {
                if q.is_per_channel() && q.len() != shape.c {
                    return Err(Error::InvalidQuantParams(format!(
                        "per-channel params have {} entries for {} channels",
                        q.len(),
                        shape.c
                    )));
                }
            }
            (false, None) => {}
        }
        Ok(Tensor {
            shape,
            data,
            qparams,
        })
    }

    pub fn from_f32(shape: Shape, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data), None)
    }

    pub fn from_i8(shape: Shape, data: Vec<i8>, qparams: QuantParams) -> Result<Self> {
        Self::new(shape, TensorData::I8(data), Some(qparams))
    }

    pub fn from_i32(shape: Shape, data: Vec<i32>, qparams: QuantParams) -> Result<Self> {
        Self::new(shape, TensorData::I32(data), Some(qparams))
    }

    pub fn zeros_f32(shape: Shape) -> Self {
        Tensor {
            shape,
            data: TensorData::F32(vec![0.0; shape.len()]),
            qparams: None,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn qparams(&self) -> Option<&QuantParams> {
        self.qparams.as_ref()
    }

    /// Quantization parameters of an integer tensor.
    pub fn quant(&self) -> Result<&QuantParams> {
        self.qparams
            .as_ref()
            .ok_or_else(|| Error::InvalidQuantParams("tensor is not quantized".into()))
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            other => Err(dtype_error(DType::F32, other.dtype())),
        }
    }

    pub fn as_i8(&self) -> Result<&[i8]> {
        match &self.data {
            TensorData::I8(v) => Ok(v),
            other => Err(dtype_error(DType::I8, other.dtype())),
        }
    }

    pub fn as_i32(&self) -> Result<&[i32]> {
        match &self.data {
            TensorData::I32(v) => Ok(v),
            other => Err(dtype_error(DType::I32, other.dtype())),
        }
    }

    pub fn as_f32_mut(&mut self) -> Result<&mut [f32]> {
        match &mut self.data {
            TensorData::F32(v) => Ok(v),
            other => Err(dtype_error(DType::F32, other.dtype())),
        }
    }

    pub fn as_i8_mut(&mut self) -> Result<&mut [i8]> {
        match &mut self.data {
            TensorData::I8(v) => Ok(v),
            other => Err(dtype_error(DType::I8, other.dtype())),
        }
    }

    /// Same data viewed under another shape with equal element count.
    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        if let Some(q) = &self.qparams {
            if q.is_per_channel() && shape.c != self.shape.c {
                return Err(Error::ShapeMismatch(
                    "reshape would move the per-channel axis".into(),
                ));
            }
        }
        self.shape = shape;
        Ok(self)
    }

    /// Real-valued copy; integer tensors are dequantized.
    pub fn to_real(&self) -> Tensor {
        match &self.data {
            TensorData::F32(_) => self.clone(),
            TensorData::I8(v) => {
                let q = self.qparams.as_ref().expect("integer tensor has qparams");
                let c = self.shape.c.max(1);
                let data = v
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| q.dequantize(x as i32, i % c) as f32)
                    .collect();
                Tensor::from_f32(self.shape, data).expect("same shape")
            }
            TensorData::I32(v) => {
                let q = self.qparams.as_ref().expect("integer tensor has qparams");
                let c = self.shape.c.max(1);
                let data = v
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| q.dequantize(x, i % c) as f32)
                    .collect();
                Tensor::from_f32(self.shape, data).expect("same shape")
            }
        }
    }
}

fn dtype_error(want: DType, got: DType) -> Error {
    Error::ShapeMismatch(format!("expected {want:?} tensor, got {got:?}"))
}
