//! Binary model file. All integers are little-endian.
//!
//! ```text
//! "MAIQ" | version u16 | mode u8 | input h,w,c u16x3 | layer count u16
//! | input qparams flag u8 [+ qparams]
//! | per layer: kind u8, spec fields, edge count u16 + qparams..., tensor count u16
//!              + per tensor (dtype u8, dims u32x4, qparams flag u8 [+ qparams], byte length u32)
//! | label count u16 + (length u16, UTF-8)...
//! | weight region (tensor payloads in descriptor order)
//! | CRC32 of everything before it
//! ```
//!
//! A qparams block is granularity u8, count u16, then `count` f64 scales and
//! `count` i8 zero points.

use std::fs;
use std::path::Path;

use super::{InputDesc, Layer, LayerSpec, LayerWeights, Mode, ModelGraph};
use crate::error::{Error, Result};
use crate::kernels::{
    Activation, BneckSpec, BneckWeights, ConvSpec, ConvWeights, Padding, SeWeights,
};
use crate::quant::{Granularity, QuantParams};
use crate::tensor::{DType, Shape, Tensor, TensorData};

pub const MAGIC: [u8; 4] = *b"MAIQ";
pub const FORMAT_VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: usize) {
        let v = u16::try_from(v).expect("value fits the u16 field");
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("value fits the u32 field");
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    fn qparams(&mut self, q: &QuantParams) {
        self.u8(match q.granularity() {
            Granularity::PerTensor => 0,
            Granularity::PerChannel => 1,
        });
        self.u16(q.len());
        for s in q.scales() {
            self.buf.extend_from_slice(&s.to_le_bytes());
        }
        for &z in q.zero_points() {
            self.buf.push(z as i8 as u8);
        }
    }

    fn activation(&mut self, a: Activation) {
        self.u8(match a {
            Activation::None => 0,
            Activation::Relu6 => 1,
        });
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedFile)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<usize> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]) as usize)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(malformed(format!("invalid flag byte {v}"))),
        }
    }

    fn qparams(&mut self) -> Result<QuantParams> {
        let granularity = match self.u8()? {
            0 => Granularity::PerTensor,
            1 => Granularity::PerChannel,
            v => return Err(malformed(format!("unknown granularity {v}"))),
        };
        let n = self.u16()?;
        let scales = self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let zps = self.take(n)?.iter().map(|&b| b as i8 as i32).collect();
        QuantParams::new(granularity, scales, zps)
    }

    fn activation(&mut self) -> Result<Activation> {
        match self.u8()? {
            0 => Ok(Activation::None),
            1 => Ok(Activation::Relu6),
            v => Err(malformed(format!("unknown activation {v}"))),
        }
    }
}

fn malformed(msg: String) -> Error {
    Error::MalformedModel(msg)
}

const KIND_CONV: u8 = 0;
const KIND_BNECK: u8 = 1;
const KIND_FC: u8 = 2;
const KIND_GAP: u8 = 3;
const KIND_SOFTMAX: u8 = 4;
const KIND_RESIZE: u8 = 5;
const KIND_MAXPOOL: u8 = 6;

fn write_spec(w: &mut Writer, spec: &LayerSpec) {
    match spec {
        LayerSpec::Conv { conv, activation } => {
            w.u8(KIND_CONV);
            w.u16(conv.kernel_h);
            w.u16(conv.kernel_w);
            w.u16(conv.stride);
            w.u8(match conv.padding {
                Padding::Same => 0,
                Padding::Valid => 1,
            });
            w.bool(conv.depthwise);
            w.u32(conv.out_channels);
            w.activation(*activation);
        }
        LayerSpec::Bneck(b) => {
            w.u8(KIND_BNECK);
            w.u32(b.expansion);
            w.u16(b.kernel);
            w.u16(b.stride);
            w.bool(b.use_se);
            w.u32(b.out_channels);
        }
        LayerSpec::Fc {
            out_features,
            activation,
        } => {
            w.u8(KIND_FC);
            w.u32(*out_features);
            w.activation(*activation);
        }
        LayerSpec::GlobalAvgPool => w.u8(KIND_GAP),
        LayerSpec::Softmax => w.u8(KIND_SOFTMAX),
        LayerSpec::Resize { height, width } => {
            w.u8(KIND_RESIZE);
            w.u16(*height);
            w.u16(*width);
        }
        LayerSpec::MaxPool { size } => {
            w.u8(KIND_MAXPOOL);
            w.u16(*size);
        }
    }
}

fn read_spec(r: &mut Reader<'_>) -> Result<LayerSpec> {
    let spec = match r.u8()? {
        KIND_CONV => {
            let kernel_h = r.u16()?;
            let kernel_w = r.u16()?;
            let stride = r.u16()?;
            let padding = match r.u8()? {
                0 => Padding::Same,
                1 => Padding::Valid,
                v => return Err(malformed(format!("unknown padding {v}"))),
            };
            let depthwise = r.bool()?;
            let out_channels = r.u32()?;
            let activation = r.activation()?;
            LayerSpec::Conv {
                conv: ConvSpec {
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                    depthwise,
                    out_channels,
                },
                activation,
            }
        }
        KIND_BNECK => LayerSpec::Bneck(BneckSpec {
            expansion: r.u32()?,
            kernel: r.u16()?,
            stride: r.u16()?,
            use_se: r.bool()?,
            out_channels: r.u32()?,
        }),
        KIND_FC => LayerSpec::Fc {
            out_features: r.u32()?,
            activation: r.activation()?,
        },
        KIND_GAP => LayerSpec::GlobalAvgPool,
        KIND_SOFTMAX => LayerSpec::Softmax,
        KIND_RESIZE => LayerSpec::Resize {
            height: r.u16()?,
            width: r.u16()?,
        },
        KIND_MAXPOOL => LayerSpec::MaxPool { size: r.u16()? },
        v => return Err(malformed(format!("unknown layer kind {v}"))),
    };
    Ok(spec)
}

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::F32 => 0,
        DType::I8 => 1,
        DType::I32 => 2,
    }
}

fn write_payload(buf: &mut Vec<u8>, t: &Tensor) {
    match t.data() {
        TensorData::F32(v) => v
            .iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        TensorData::I8(v) => buf.extend(v.iter().map(|&x| x as u8)),
        TensorData::I32(v) => v
            .iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
    }
}

/// Serializes `g`. The encoding is canonical: equal graphs give equal bytes.
pub fn to_bytes(g: &ModelGraph) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.u8(match g.mode {
        Mode::Real => 0,
        Mode::Quantized => 1,
    });
    w.u16(g.input.height);
    w.u16(g.input.width);
    w.u16(g.input.channels);
    w.u16(g.layers.len());
    match &g.input_params {
        Some(q) => {
            w.u8(1);
            w.qparams(q);
        }
        None => w.u8(0),
    }
    let mut payload = Vec::new();
    for l in &g.layers {
        write_spec(&mut w, &l.spec);
        w.u16(l.edges.len());
        for q in &l.edges {
            w.qparams(q);
        }
        let tensors = l.weights.tensors();
        w.u16(tensors.len());
        for t in tensors {
            w.u8(dtype_code(t.dtype()));
            for d in t.shape().dims() {
                w.u32(d);
            }
            match t.qparams() {
                Some(q) => {
                    w.u8(1);
                    w.qparams(q);
                }
                None => w.u8(0),
            }
            w.u32(t.len() * t.dtype().size_of());
            write_payload(&mut payload, t);
        }
    }
    w.u16(g.labels.len());
    for label in &g.labels {
        w.u16(label.len());
        w.buf.extend_from_slice(label.as_bytes());
    }
    w.buf.extend_from_slice(&payload);
    let crc = crc32fast::hash(&w.buf);
    w.buf.extend_from_slice(&crc.to_le_bytes());
    w.buf
}

struct TensorDesc {
    dtype: DType,
    shape: Shape,
    qparams: Option<QuantParams>,
    len: usize,
}

fn read_tensor_desc(r: &mut Reader<'_>) -> Result<TensorDesc> {
    let dtype = match r.u8()? {
        0 => DType::F32,
        1 => DType::I8,
        2 => DType::I32,
        v => return Err(malformed(format!("unknown dtype {v}"))),
    };
    let shape = Shape::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let qparams = if r.bool()? { Some(r.qparams()?) } else { None };
    let len = r.u32()?;
    Ok(TensorDesc {
        dtype,
        shape,
        qparams,
        len,
    })
}

fn read_payload(r: &mut Reader<'_>, d: TensorDesc) -> Result<Tensor> {
    let elems = d
        .shape
        .dims()
        .iter()
        .try_fold(1usize, |acc, &x| acc.checked_mul(x))
        .ok_or_else(|| malformed("tensor shape overflows".into()))?;
    if elems.checked_mul(d.dtype.size_of()) != Some(d.len) {
        return Err(malformed(format!(
            "tensor {} has {} payload bytes",
            d.shape, d.len
        )));
    }
    let bytes = r.take(d.len)?;
    let data = match d.dtype {
        DType::F32 => TensorData::F32(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect(),
        ),
        DType::I8 => TensorData::I8(bytes.iter().map(|&b| b as i8).collect()),
        DType::I32 => TensorData::I32(
            bytes
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect(),
        ),
    };
    Tensor::new(d.shape, data, d.qparams)
}

fn assemble_weights(spec: &LayerSpec, tensors: Vec<Tensor>) -> Result<LayerWeights> {
    let expected = match spec {
        LayerSpec::Conv { .. } | LayerSpec::Fc { .. } => 2,
        LayerSpec::Bneck(b) if b.use_se => 10,
        LayerSpec::Bneck(_) => 6,
        _ => 0,
    };
    if tensors.len() != expected {
        return Err(malformed(format!(
            "{:?} layer stores {} tensors, expected {expected}",
            spec.kind(),
            tensors.len()
        )));
    }
    let mut it = tensors.into_iter();
    let mut pair = || ConvWeights {
        weights: it.next().expect("count checked"),
        bias: it.next().expect("count checked"),
    };
    Ok(match spec {
        LayerSpec::Conv { .. } | LayerSpec::Fc { .. } => LayerWeights::Conv(pair()),
        LayerSpec::Bneck(b) => {
            let expand = pair();
            let depthwise = pair();
            let se = b.use_se.then(|| SeWeights {
                reduce: pair(),
                expand: pair(),
            });
            let project = pair();
            LayerWeights::Bneck(BneckWeights {
                expand,
                depthwise,
                se,
                project,
            })
        }
        _ => LayerWeights::None,
    })
}

struct Header {
    mode: Mode,
    input: InputDesc,
    input_params: Option<QuantParams>,
    layers: Vec<(LayerSpec, Vec<QuantParams>, Vec<TensorDesc>)>,
    labels: Vec<String>,
}

impl Header {
    fn payload_len(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|(_, _, d)| d)
            .fold(0usize, |acc, d| acc.saturating_add(d.len))
    }
}

/// Reads everything up to the weight region.
fn read_header(r: &mut Reader<'_>) -> Result<Header> {
    r.pos = 6;
    let mode = match r.u8()? {
        0 => Mode::Real,
        1 => Mode::Quantized,
        v => return Err(malformed(format!("unknown mode {v}"))),
    };
    let input = InputDesc {
        height: r.u16()?,
        width: r.u16()?,
        channels: r.u16()?,
    };
    let layer_count = r.u16()?;
    let input_params = if r.bool()? { Some(r.qparams()?) } else { None };
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let spec = read_spec(r)?;
        let edges = (0..r.u16()?)
            .map(|_| r.qparams())
            .collect::<Result<Vec<_>>>()?;
        let descs = (0..r.u16()?)
            .map(|_| read_tensor_desc(r))
            .collect::<Result<Vec<_>>>()?;
        layers.push((spec, edges, descs));
    }
    let labels = (0..r.u16()?)
        .map(|_| {
            let n = r.u16()?;
            String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| malformed("label is not UTF-8".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Header {
        mode,
        input,
        input_params,
        layers,
        labels,
    })
}

/// Whether the header describes more bytes than the file holds.
fn looks_truncated(bytes: &[u8]) -> bool {
    let mut r = Reader { buf: bytes, pos: 6 };
    match read_header(&mut r) {
        Err(Error::TruncatedFile) => true,
        Err(_) => false,
        Ok(h) => r.pos.saturating_add(h.payload_len()).saturating_add(4) > bytes.len(),
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelGraph> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::TruncatedFile);
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 10 {
        return Err(Error::TruncatedFile);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        if looks_truncated(bytes) {
            return Err(Error::TruncatedFile);
        }
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 6 };
    let h = read_header(&mut r)?;
    let mut layers = Vec::with_capacity(h.layers.len());
    for (spec, edges, descs) in h.layers {
        let tensors = descs
            .into_iter()
            .map(|d| read_payload(&mut r, d))
            .collect::<Result<Vec<_>>>()?;
        layers.push(Layer {
            spec,
            weights: assemble_weights(&spec, tensors)?,
            edges,
        });
    }
    if r.pos != body.len() {
        return Err(malformed(format!("{} trailing bytes", body.len() - r.pos)));
    }
    ModelGraph::new(h.input, layers, h.mode, h.labels, h.input_params)
}

pub fn save(g: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(g))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelGraph> {
    from_bytes(&fs::read(path)?)
}
