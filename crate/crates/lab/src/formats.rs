//! On-disk formats: the binary dataset container, CSV datasets and parameter
//! checkpoints. All integers are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use qcbnn_core::autodiff::Tensor;
use qcbnn_core::data::Dataset;

use crate::error::{LabError, Result};

pub const DATA_MAGIC: &[u8; 8] = b"QBNNDATA";
pub const CKPT_MAGIC: &[u8; 8] = b"QBNNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Binary,
    Csv,
}

impl DataFormat {
    /// `.csv` means CSV, anything else the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(LabError::Format(format!(
                "truncated {}: needed {n} bytes at offset {}, {} left",
                self.what,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let got = self.take(8)?;
        if got != magic {
            return Err(LabError::Format(format!(
                "magic mismatch: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got)
            )));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(LabError::Format(format!("unsupported {} version {version}", self.what)));
        }
        Ok(())
    }
}

/// Parses a dataset container. Pixels stay raw (0–255).
pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0, what: "container" };
    r.magic(DATA_MAGIC)?;
    let count = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let labels = r.take(count)?.to_vec();
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
        return Err(LabError::Format(format!("label {l} of sample {i} outside {{0,1}}")));
    }
    let pixels = r.take(count * h * w)?;
    if r.pos != bytes.len() {
        return Err(LabError::Format(format!(
            "dimension mismatch: {} trailing bytes after {count} images of {h}x{w}",
            bytes.len() - r.pos
        )));
    }
    let images = pixels.chunks(h * w).map(|c| c.iter().map(|&b| b as f64).collect()).collect();
    Ok(Dataset::new(h, w, images, labels)?)
}

/// Serializes raw pixels; every pixel must be an integer in `0..=255`.
pub fn encode_dataset(data: &Dataset) -> Result<Vec<u8>> {
    let n = data.len();
    let mut out = Vec::with_capacity(24 + n * (1 + data.height() * data.width()));
    out.extend_from_slice(DATA_MAGIC);
    for v in [FORMAT_VERSION, n as u32, data.height() as u32, data.width() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(data.labels());
    for (i, img) in data.images().iter().enumerate() {
        for &p in img {
            if !(0.0..=255.0).contains(&p) || p.fract() != 0.0 {
                return Err(LabError::Format(format!("sample {i}: pixel {p} is not a byte value")));
            }
            out.push(p as u8);
        }
    }
    Ok(out)
}

/// Maps `[0, 1]` pixels onto bytes for storage.
pub fn quantize(data: &Dataset) -> Result<Dataset> {
    let images = data.images().iter().map(|img| img.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round()).collect()).collect();
    Ok(Dataset::new(data.height(), data.width(), images, data.labels().to_vec())?)
}

/// Parses `label,p0,…,p{H·W−1}`. Square images are assumed unless `shape`
/// is given.
pub fn decode_csv(text: &str, shape: Option<(usize, usize)>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(LabError::Format(String::from("truncated container: empty CSV")));
    }
    if &header[0] != "label" {
        return Err(LabError::Format(format!("column 0: expected \"label\", found {:?}", &header[0])));
    }
    for (k, name) in header.iter().enumerate().skip(1) {
        if name != format!("p{}", k - 1) {
            return Err(LabError::Format(format!("column {k}: expected \"p{}\", found {name:?}", k - 1)));
        }
    }
    let n_pix = header.len() - 1;
    let (h, w) = match shape {
        Some((h, w)) if h * w == n_pix => (h, w),
        Some((h, w)) => {
            return Err(LabError::Format(format!("dimension mismatch: {n_pix} pixel columns for {h}x{w} images")))
        }
        None => {
            let side = (n_pix as f64).sqrt().round() as usize;
            if side * side != n_pix {
                return Err(LabError::Format(format!("{n_pix} pixel columns do not form a square image")));
            }
            (side, side)
        }
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label: u8 = rec[0]
            .trim()
            .parse()
            .ok()
            .filter(|&l| l <= 1)
            .ok_or_else(|| LabError::Format(format!("row {}: label {:?} outside {{0,1}}", row + 1, &rec[0])))?;
        let px = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(k, v)| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|p| p.is_finite() && *p >= 0.0)
                    .ok_or_else(|| LabError::Format(format!("row {}, column p{k}: bad pixel {v:?}", row + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        labels.push(label);
        images.push(px);
    }
    Ok(Dataset::new(h, w, images, labels)?)
}

pub fn encode_csv(data: &Dataset) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let n_pix = data.height() * data.width();
    let mut header = vec![String::from("label")];
    header.extend((0..n_pix).map(|k| format!("p{k}")));
    wtr.write_record(&header)?;
    for (img, &l) in data.images().iter().zip(data.labels()) {
        let mut row = vec![l.to_string()];
        row.extend(img.iter().map(|p| p.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.into_inner().map_err(|e| LabError::Format(e.to_string()))
}

pub fn load_dataset(path: &Path, format: DataFormat, shape: Option<(usize, usize)>) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    match format {
        DataFormat::Binary => decode_dataset(&bytes),
        DataFormat::Csv => decode_csv(&String::from_utf8_lossy(&bytes), shape),
    }
}

pub fn save_dataset(path: &Path, data: &Dataset, format: DataFormat) -> Result<()> {
    let bytes = match format {
        DataFormat::Binary => encode_dataset(data)?,
        DataFormat::Csv => encode_csv(data)?,
    };
    write_file(path, &bytes)
}

pub fn encode_checkpoint(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0, what: "checkpoint" };
    r.magic(CKPT_MAGIC)?;
    let blocks = r.u32()?;
    let mut out = Vec::with_capacity(blocks as usize);
    for _ in 0..blocks {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| LabError::Format(String::from("checkpoint tensor name is not UTF-8")))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = r.take(n * 8)?.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(LabError::Format(format!("{} trailing bytes after checkpoint blocks", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    f.write_all(bytes).map_err(|e| LabError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use qcbnn_core::data::{synth_generate, SynthSpec};

    fn sample() -> Dataset {
        let d = synth_generate(&SynthSpec { n_samples: 6, height: 4, width: 5, ..SynthSpec::default() }).unwrap();
        quantize(&d).unwrap()
    }

    #[test]
    fn container_round_trip_is_byte_identical() {
        let bytes = encode_dataset(&sample()).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!((back.height(), back.width()), (4, 5));
        assert_eq!(encode_dataset(&back).unwrap(), bytes);
    }

    #[test]
    fn container_errors() {
        let msg = |b: &[u8]| decode_dataset(b).unwrap_err().to_string();
        assert!(msg(b"").contains("truncated container"));
        assert!(msg(b"QBNNDATX\x01\0\0\0").contains("magic mismatch"));
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(msg(&bytes).contains("truncated"));
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes[24] = 2;
        assert!(msg(&bytes).contains("outside {0,1}"));
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes.push(0);
        assert!(msg(&bytes).contains("dimension mismatch"));
    }

    #[test]
    fn container_with_780_samples() {
        let d = synth_generate(&SynthSpec { n_samples: 780, ..SynthSpec::default() }).unwrap();
        let back = decode_dataset(&encode_dataset(&quantize(&d).unwrap()).unwrap()).unwrap();
        assert_eq!((back.len(), back.height(), back.width()), (780, 28, 28));
    }

    #[test]
    fn csv_round_trip_and_header_errors() {
        let d = sample();
        let text = String::from_utf8(encode_csv(&d).unwrap()).unwrap();
        assert_eq!(decode_csv(&text, Some((4, 5))).unwrap(), d);
        let err = decode_csv("label,p0,p2,p3\n1,0,0,0\n", None).unwrap_err().to_string();
        assert!(err.contains("column 2") && err.contains("\"p2\""), "{err}");
        let err = decode_csv("lbl,p0\n", None).unwrap_err().to_string();
        assert!(err.contains("column 0"), "{err}");
        assert!(decode_csv("label,p0,p1,p2,p3\n3,0,0,0,0\n", None).is_err());
        assert!(decode_csv("", None).unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn checkpoint_round_trip() {
        let items = vec![
            (String::from("a"), Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, f64::MIN_POSITIVE, 7.0]).unwrap()),
            (String::from("bias"), Tensor::vector(vec![0.25])),
        ];
        let bytes = encode_checkpoint(&items);
        assert_eq!(&bytes[..8], CKPT_MAGIC);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), items);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_checkpoint(b"QBNNDATA\x01\0\0\0\0\0\0\0").is_err());
    }
}
