//! `EIDM` model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "EIDM" | u16 version | u16 tensor_count | u32 descriptor_len | descriptor JSON
//! per tensor:
//!   u16 name_len | name (UTF-8) | u8 dtype (0 = f32, 1 = i8)
//!   u8 encoding (0 = dense, 1 = bitmap-sparse) | u8 rank | u32 dims[rank]
//!   [i8 only: f32 scale | i32 zero_point]
//!   u32 payload_len | payload | u32 CRC-32 (IEEE) of payload
//! ```
//!
//! A bitmap-sparse payload is `ceil(N / 8)` bytes of presence bits (element
//! `i` is bit `i % 8` of byte `i / 8`) followed by the present values packed
//! in index order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lstm::{Architecture, NetError, NetworkParams, SlotKind};
use crate::pruning::SparsityMask;
use crate::quantizer::{QuantConfig, QuantParams, QuantSlot, QuantizedModel, QuantizedTensor};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"EIDM";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    VersionUnsupported(u16),
    #[error("CRC mismatch in tensor `{0}`")]
    CrcMismatch(String),
    #[error("masked weight in tensor `{0}` is not zero")]
    MaskViolation(String),
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("expected a {expected} model, found {found}")]
    WrongKind { expected: &'static str, found: &'static str },
    #[error(transparent)]
    Net(#[from] NetError),
}

fn malformed(m: impl Into<String>) -> StoreError {
    StoreError::Malformed(m.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dense,
    Sparse,
    Quantized,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Dense => "dense",
            ModelKind::Sparse => "sparse",
            ModelKind::Quantized => "quantized",
        }
    }
}

/// JSON block that makes a file self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Descriptor {
    pub kind: ModelKind,
    pub architecture: Architecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<QuantConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Dense(NetworkParams),
    Sparse { net: NetworkParams, mask: SparsityMask },
    Quantized(QuantizedModel),
}

impl StoredModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            StoredModel::Dense(_) => ModelKind::Dense,
            StoredModel::Sparse { .. } => ModelKind::Sparse,
            StoredModel::Quantized(_) => ModelKind::Quantized,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        match self {
            StoredModel::Dense(n) | StoredModel::Sparse { net: n, .. } => &n.arch,
            StoredModel::Quantized(q) => &q.arch,
        }
    }

    /// Float parameters used for inference (dequantized for int8 models).
    pub fn inference_params(&self) -> Result<NetworkParams, StoreError> {
        match self {
            StoredModel::Dense(n) | StoredModel::Sparse { net: n, .. } => Ok(n.clone()),
            StoredModel::Quantized(q) => q
                .dequantize()
                .map_err(|e| malformed(e.to_string())),
        }
    }

    pub fn mask(&self) -> Option<&SparsityMask> {
        match self {
            StoredModel::Dense(_) => None,
            StoredModel::Sparse { mask, .. } => Some(mask),
            StoredModel::Quantized(q) => q.mask.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    I8 = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Encoding {
    Dense = 0,
    Bitmap = 1,
}

/// One entry of the tensor table, without the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub dtype: DType,
    pub encoding: Encoding,
    pub dims: Vec<u32>,
    pub quant: Option<(f32, i32)>,
    pub payload_len: u32,
    pub crc: u32,
}

struct RawTensor {
    info: TensorInfo,
    payload: Vec<u8>,
}

fn bitmap(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, _) in mask.iter().enumerate().filter(|(_, &k)| k) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

fn unpack_bitmap(bytes: &[u8], n: usize) -> Result<Vec<bool>, StoreError> {
    if bytes.len() != n.div_ceil(8) {
        return Err(malformed("bitmap length"));
    }
    let mask: Vec<bool> = (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect();
    if !n.is_multiple_of(8) && bytes[n / 8] >> (n % 8) != 0 {
        return Err(malformed("bitmap padding bits set"));
    }
    Ok(mask)
}

fn f32_payload(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn dims_of(shape: &[usize]) -> Vec<u32> {
    shape.iter().map(|&d| d as u32).collect()
}

fn raw_tensor(
    name: &str,
    dtype: DType,
    encoding: Encoding,
    shape: &[usize],
    quant: Option<(f32, i32)>,
    payload: Vec<u8>,
) -> RawTensor {
    RawTensor {
        info: TensorInfo {
            name: name.to_string(),
            dtype,
            encoding,
            dims: dims_of(shape),
            quant,
            payload_len: payload.len() as u32,
            crc: crc32fast::hash(&payload),
        },
        payload,
    }
}

fn float_tensor(name: &str, t: &Tensor, mask: Option<&[bool]>) -> RawTensor {
    match mask {
        None => raw_tensor(name, DType::F32, Encoding::Dense, t.shape(), None, f32_payload(t.data().iter().copied())),
        Some(m) => {
            let mut payload = bitmap(m);
            payload.extend(f32_payload(
                t.data().iter().zip(m).filter(|(_, &k)| k).map(|(&v, _)| v),
            ));
            raw_tensor(name, DType::F32, Encoding::Bitmap, t.shape(), None, payload)
        }
    }
}

fn int8_tensor(name: &str, qt: &QuantizedTensor, mask: Option<&[bool]>) -> RawTensor {
    let quant = Some((qt.params.scale, qt.params.zero_point));
    match mask {
        None => raw_tensor(
            name,
            DType::I8,
            Encoding::Dense,
            &qt.shape,
            quant,
            qt.values.iter().map(|&q| q as u8).collect(),
        ),
        Some(m) => {
            let mut payload = bitmap(m);
            payload.extend(qt.values.iter().zip(m).filter(|(_, &k)| k).map(|(&q, _)| q as u8));
            raw_tensor(name, DType::I8, Encoding::Bitmap, &qt.shape, quant, payload)
        }
    }
}

fn encode_file(descriptor: &Descriptor, tensors: &[RawTensor]) -> Result<Vec<u8>, StoreError> {
    let json = serde_json::to_vec(descriptor).map_err(|e| malformed(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u16).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        let i = &t.info;
        out.extend_from_slice(&(i.name.len() as u16).to_le_bytes());
        out.extend_from_slice(i.name.as_bytes());
        out.push(i.dtype as u8);
        out.push(i.encoding as u8);
        out.push(i.dims.len() as u8);
        for d in &i.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        if let Some((scale, zp)) = i.quant {
            out.extend_from_slice(&scale.to_le_bytes());
            out.extend_from_slice(&zp.to_le_bytes());
        }
        out.extend_from_slice(&i.payload_len.to_le_bytes());
        out.extend_from_slice(&t.payload);
        out.extend_from_slice(&i.crc.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| malformed("unexpected end of file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, StoreError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, StoreError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn decode_file(bytes: &[u8]) -> Result<(Descriptor, Vec<RawTensor>), StoreError> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(StoreError::BadMagic);
    }
    let mut c = Cursor { buf: bytes, pos: 4 };
    let version = c.u16()?;
    if version != MODEL_VERSION {
        return Err(StoreError::VersionUnsupported(version));
    }
    let count = c.u16()? as usize;
    let json_len = c.u32()? as usize;
    let descriptor: Descriptor =
        serde_json::from_slice(c.take(json_len)?).map_err(|e| malformed(format!("descriptor: {e}")))?;

    let mut tensors: Vec<RawTensor> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| malformed("tensor name is not UTF-8"))?
            .to_string();
        if tensors.iter().any(|t| t.info.name == name) {
            return Err(malformed(format!("duplicate tensor `{name}`")));
        }
        let dtype = match c.u8()? {
            0 => DType::F32,
            1 => DType::I8,
            d => return Err(malformed(format!("unknown dtype {d}"))),
        };
        let encoding = match c.u8()? {
            0 => Encoding::Dense,
            1 => Encoding::Bitmap,
            e => return Err(malformed(format!("unknown encoding {e}"))),
        };
        let rank = c.u8()? as usize;
        let dims = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
        let quant = match dtype {
            DType::I8 => Some((c.f32()?, c.i32()?)),
            DType::F32 => None,
        };
        let payload_len = c.u32()?;
        let payload = c.take(payload_len as usize)?.to_vec();
        let crc = c.u32()?;
        if crc32fast::hash(&payload) != crc {
            return Err(StoreError::CrcMismatch(name));
        }
        tensors.push(RawTensor {
            info: TensorInfo {
                name,
                dtype,
                encoding,
                dims,
                quant,
                payload_len,
                crc,
            },
            payload,
        });
    }
    if c.pos != bytes.len() {
        return Err(malformed("trailing bytes after last tensor"));
    }
    Ok((descriptor, tensors))
}

/// Splits a payload into (presence mask, packed values).
fn split_payload(t: &RawTensor, elem: usize) -> Result<(Option<Vec<bool>>, &[u8]), StoreError> {
    let n: usize = t.info.dims.iter().map(|&d| d as usize).product();
    match t.info.encoding {
        Encoding::Dense => {
            if t.payload.len() != n * elem {
                return Err(malformed(format!("payload length of `{}`", t.info.name)));
            }
            Ok((None, &t.payload))
        }
        Encoding::Bitmap => {
            let nb = n.div_ceil(8);
            if t.payload.len() < nb {
                return Err(malformed(format!("payload length of `{}`", t.info.name)));
            }
            let mask = unpack_bitmap(&t.payload[..nb], n)?;
            let kept = mask.iter().filter(|&&k| k).count();
            if t.payload.len() != nb + kept * elem {
                return Err(malformed(format!("payload length of `{}`", t.info.name)));
            }
            Ok((Some(mask), &t.payload[nb..]))
        }
    }
}

fn scatter<T: Copy>(mask: Option<&[bool]>, packed: Vec<T>, fill: T, n: usize) -> Vec<T> {
    match mask {
        None => packed,
        Some(m) => {
            let mut it = packed.into_iter();
            (0..n).map(|i| if m[i] { it.next().unwrap_or(fill) } else { fill }).collect()
        }
    }
}

fn check_layout(net: &NetworkParams, tensors: &[RawTensor]) -> Result<(), StoreError> {
    let slots = net.slots();
    if slots.len() != tensors.len() {
        return Err(malformed(format!(
            "expected {} tensors for the architecture, found {}",
            slots.len(),
            tensors.len()
        )));
    }
    for (s, t) in slots.iter().zip(tensors) {
        if s.name != t.info.name || dims_of(&s.shape) != t.info.dims {
            return Err(malformed(format!("tensor `{}` does not match the architecture", t.info.name)));
        }
    }
    Ok(())
}

pub fn encode_model(model: &StoredModel) -> Result<Vec<u8>, StoreError> {
    match model {
        StoredModel::Dense(net) => {
            let tensors: Vec<RawTensor> = net
                .slots()
                .iter()
                .zip(net.tensors())
                .map(|(s, t)| float_tensor(&s.name, t, None))
                .collect();
            let d = Descriptor {
                kind: ModelKind::Dense,
                architecture: net.arch.clone(),
                sparsity: None,
                quantization: None,
            };
            encode_file(&d, &tensors)
        }
        StoredModel::Sparse { net, mask } => {
            if !mask.is_satisfied_by(net) {
                let name = net
                    .slots()
                    .iter()
                    .zip(net.tensors())
                    .zip(&mask.masks)
                    .find(|((_, t), m)| {
                        m.as_ref().is_some_and(|m| {
                            t.data().iter().zip(m).any(|(v, &k)| !k && v.to_bits() != 0)
                        })
                    })
                    .map(|((s, _), _)| s.name.clone())
                    .unwrap_or_default();
                return Err(StoreError::MaskViolation(name));
            }
            let tensors: Vec<RawTensor> = net
                .slots()
                .iter()
                .zip(net.tensors())
                .zip(&mask.masks)
                .map(|((s, t), m)| float_tensor(&s.name, t, m.as_deref()))
                .collect();
            let d = Descriptor {
                kind: ModelKind::Sparse,
                architecture: net.arch.clone(),
                sparsity: Some(mask.sparsity),
                quantization: None,
            };
            encode_file(&d, &tensors)
        }
        StoredModel::Quantized(qm) => {
            let net = NetworkParams::zeros(&qm.arch)?;
            let slots = net.slots();
            if slots.len() != qm.slots.len() {
                return Err(malformed("quantized model does not match its architecture"));
            }
            let masks: Vec<Option<&[bool]>> = match &qm.mask {
                Some(m) => m.masks.iter().map(|m| m.as_deref()).collect(),
                None => vec![None; slots.len()],
            };
            let tensors: Vec<RawTensor> = slots
                .iter()
                .zip(&qm.slots)
                .zip(masks)
                .map(|((s, q), m)| match q {
                    QuantSlot::Int8(qt) => int8_tensor(&s.name, qt, m),
                    QuantSlot::Float(t) => float_tensor(&s.name, t, None),
                })
                .collect();
            let d = Descriptor {
                kind: ModelKind::Quantized,
                architecture: qm.arch.clone(),
                sparsity: qm.mask.as_ref().map(|m| m.sparsity),
                quantization: Some(qm.config),
            };
            encode_file(&d, &tensors)
        }
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<StoredModel, StoreError> {
    let (d, raw) = decode_file(bytes)?;
    let template = NetworkParams::zeros(&d.architecture)?;
    check_layout(&template, &raw)?;
    let slots = template.slots();

    match d.kind {
        ModelKind::Dense | ModelKind::Sparse => {
            let mut tensors = Vec::with_capacity(raw.len());
            let mut masks = Vec::with_capacity(raw.len());
            for (s, t) in slots.iter().zip(&raw) {
                if t.info.dtype != DType::F32 {
                    return Err(malformed(format!("`{}` must be float32", s.name)));
                }
                let (mask, packed) = split_payload(t, 4)?;
                let values: Vec<f64> = packed
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect();
                let n = s.shape.iter().product();
                let data = scatter(mask.as_deref(), values, 0.0, n);
                tensors.push(Tensor::from_vec(&s.shape, data).ok_or_else(|| malformed("shape"))?);
                masks.push(match (s.kind, mask) {
                    (SlotKind::Weight, Some(m)) => Some(m),
                    (SlotKind::Weight, None) => Some(vec![true; n]),
                    (SlotKind::Bias, None) => None,
                    (SlotKind::Bias, Some(_)) => return Err(malformed("biases are never sparse")),
                });
            }
            let net = NetworkParams::from_tensors(&d.architecture, tensors)?;
            if d.kind == ModelKind::Dense {
                Ok(StoredModel::Dense(net))
            } else {
                let mask = SparsityMask {
                    masks,
                    sparsity: d.sparsity.unwrap_or(0.0),
                };
                Ok(StoredModel::Sparse { net, mask })
            }
        }
        ModelKind::Quantized => {
            let config = d.quantization.unwrap_or_default();
            let mut out = Vec::with_capacity(raw.len());
            let mut masks = Vec::with_capacity(raw.len());
            let mut any_sparse = false;
            for (s, t) in slots.iter().zip(&raw) {
                let n: usize = s.shape.iter().product();
                match (s.kind, t.info.dtype) {
                    (SlotKind::Weight, DType::I8) => {
                        let (scale, zp) = t.info.quant.expect("int8 carries params");
                        let params = QuantParams::from_stored(scale, zp, config.q_min, config.q_max);
                        let (mask, packed) = split_payload(t, 1)?;
                        any_sparse |= mask.is_some();
                        let values = scatter(
                            mask.as_deref(),
                            packed.iter().map(|&b| b as i8).collect(),
                            zp as i8,
                            n,
                        );
                        out.push(QuantSlot::Int8(QuantizedTensor {
                            values,
                            shape: s.shape.clone(),
                            params,
                        }));
                        masks.push(Some(mask.unwrap_or_else(|| vec![true; n])));
                    }
                    (SlotKind::Bias, DType::F32) => {
                        let (mask, packed) = split_payload(t, 4)?;
                        if mask.is_some() {
                            return Err(malformed("biases are never sparse"));
                        }
                        let data = packed
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                            .collect();
                        out.push(QuantSlot::Float(
                            Tensor::from_vec(&s.shape, data).ok_or_else(|| malformed("shape"))?,
                        ));
                        masks.push(None);
                    }
                    _ => return Err(malformed(format!("unexpected dtype for `{}`", s.name))),
                }
            }
            let mask = any_sparse.then(|| SparsityMask {
                masks,
                sparsity: d.sparsity.unwrap_or(0.0),
            });
            Ok(StoredModel::Quantized(QuantizedModel {
                arch: d.architecture,
                config,
                slots: out,
                mask,
            }))
        }
    }
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn save_model(model: &StoredModel, path: &Path) -> Result<(), StoreError> {
    write_atomic(path, &encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<StoredModel, StoreError> {
    decode_model(&fs::read(path)?)
}

pub fn save_dense(net: &NetworkParams, path: &Path) -> Result<(), StoreError> {
    save_model(&StoredModel::Dense(net.clone()), path)
}

pub fn load_dense(path: &Path) -> Result<NetworkParams, StoreError> {
    match load_model(path)? {
        StoredModel::Dense(n) => Ok(n),
        other => Err(StoreError::WrongKind {
            expected: "dense",
            found: other.kind().name(),
        }),
    }
}

pub fn save_sparse(net: &NetworkParams, mask: &SparsityMask, path: &Path) -> Result<(), StoreError> {
    save_model(
        &StoredModel::Sparse {
            net: net.clone(),
            mask: mask.clone(),
        },
        path,
    )
}

pub fn load_sparse(path: &Path) -> Result<(NetworkParams, SparsityMask), StoreError> {
    match load_model(path)? {
        StoredModel::Sparse { net, mask } => Ok((net, mask)),
        other => Err(StoreError::WrongKind {
            expected: "sparse",
            found: other.kind().name(),
        }),
    }
}

pub fn save_quantized(qm: &QuantizedModel, path: &Path) -> Result<(), StoreError> {
    save_model(&StoredModel::Quantized(qm.clone()), path)
}

pub fn load_quantized(path: &Path) -> Result<QuantizedModel, StoreError> {
    match load_model(path)? {
        StoredModel::Quantized(q) => Ok(q),
        other => Err(StoreError::WrongKind {
            expected: "quantized",
            found: other.kind().name(),
        }),
    }
}

/// Header and tensor table of a model file, for `dump`.
pub fn inspect(bytes: &[u8]) -> Result<(Descriptor, Vec<TensorInfo>), StoreError> {
    let (d, raw) = decode_file(bytes)?;
    Ok((d, raw.into_iter().map(|t| t.info).collect()))
}

pub fn dump(path: &Path) -> Result<String, StoreError> {
    let bytes = fs::read(path)?;
    let (d, infos) = inspect(&bytes)?;
    let mut s = format!(
        "{}: {} model, {} tensors, {} bytes\narchitecture: {}\n",
        path.display(),
        d.kind.name(),
        infos.len(),
        bytes.len(),
        serde_json::to_string(&d.architecture).unwrap_or_default()
    );
    s.push_str("name\tdtype\tencoding\tdims\tscale\tzero_point\tpayload\tcrc32\n");
    for i in infos {
        let dims: Vec<String> = i.dims.iter().map(u32::to_string).collect();
        let (scale, zp) = match i.quant {
            Some((sc, z)) => (format!("{sc:e}"), z.to_string()),
            None => ("-".into(), "-".into()),
        };
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:08x}\n",
            i.name,
            match i.dtype {
                DType::F32 => "f32",
                DType::I8 => "i8",
            },
            match i.encoding {
                Encoding::Dense => "dense",
                Encoding::Bitmap => "bitmap",
            },
            dims.join("x"),
            scale,
            zp,
            i.payload_len,
            i.crc
        ));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub name: String,
    pub path: PathBuf,
    pub bytes: u64,
    /// `baseline_bytes / bytes`.
    pub ratio: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeReport {
    pub baseline_bytes: u64,
    pub rows: Vec<SizeRow>,
}

/// File sizes of `baseline` followed by `others`, with their reduction
/// ratio against the baseline.
pub fn size_report(baseline: &Path, others: &[PathBuf]) -> Result<SizeReport, StoreError> {
    let baseline_bytes = fs::metadata(baseline)?.len();
    let mut rows = Vec::with_capacity(others.len() + 1);
    for p in std::iter::once(baseline).chain(others.iter().map(PathBuf::as_path)) {
        let bytes = fs::metadata(p)?.len();
        rows.push(SizeRow {
            name: p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            path: p.to_path_buf(),
            bytes,
            ratio: if bytes == 0 { 0.0 } else { baseline_bytes as f64 / bytes as f64 },
            accuracy: None,
        });
    }
    Ok(SizeReport { baseline_bytes, rows })
}

impl SizeReport {
    /// CSV with a signed reduction column: `-r` when the model is `r` times
    /// smaller than the baseline, blank for the baseline itself.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,accuracy_pct,size_bytes,ratio,size_change\n");
        for (i, r) in self.rows.iter().enumerate() {
            let acc = r.accuracy.map(|a| format!("{:.4}", a * 100.0)).unwrap_or_default();
            let change = if i == 0 {
                String::new()
            } else if r.ratio >= 1.0 {
                format!("-{:.2}", r.ratio)
            } else {
                format!("+{:.2}", 1.0 / r.ratio)
            };
            s.push_str(&format!("{},{},{},{:.4},{}\n", csv_field(&r.name), acc, r.bytes, r.ratio, change));
        }
        s
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
