//! Point cloud files: CSV `x,y,z[,intensity]` and binary little-endian PLY.

use std::fs;
use std::path::Path;

use super::{Point, PointCloud};
use crate::error::{EccError, Result};
use crate::tensor::Tensor;

fn read(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(EccError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

fn integrity(path: &Path, message: impl Into<String>) -> EccError {
    EccError::Integrity {
        file: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads `x,y,z[,intensity]` rows. A first line that does not parse as
/// numbers is treated as a header. Blank lines and `#` comments are skipped.
pub fn read_csv(path: &Path) -> Result<PointCloud> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| integrity(path, "not valid UTF-8"))?;
    parse_csv(&text).map_err(|m| integrity(path, m))
}

fn parse_csv(text: &str) -> std::result::Result<PointCloud, String> {
    let mut points = Vec::new();
    let mut intensity = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) if points.is_empty() && width.is_none() => {
                width = Some(0);
                continue;
            }
            Err(e) => return Err(format!("line {}: {e}", lineno + 1)),
        };
        if !(3..=4).contains(&values.len()) {
            return Err(format!("line {}: expected 3 or 4 columns, got {}", lineno + 1, values.len()));
        }
        match width {
            Some(w) if w != 0 && w != values.len() => {
                return Err(format!("line {}: column count changed from {w} to {}", lineno + 1, values.len()));
            }
            _ => width = Some(values.len()),
        }
        points.push([values[0], values[1], values[2]]);
        if values.len() == 4 {
            intensity.push(values[3]);
        }
    }
    let features = (!intensity.is_empty()).then(|| Tensor::new(&[intensity.len(), 1], intensity).expect("sized"));
    PointCloud::new(points, features).map_err(|e| e.to_string())
}

pub fn write_csv(path: &Path, pc: &PointCloud) -> Result<()> {
    let mut out = String::new();
    for (i, p) in pc.points().iter().enumerate() {
        out.push_str(&format!("{},{},{}", p[0], p[1], p[2]));
        if let Some(f) = pc.features() {
            out.push_str(&format!(",{}", f.row(i)[0]));
        }
        out.push('\n');
    }
    Ok(fs::write(path, out)?)
}

fn scalar_size(ty: &str) -> Option<usize> {
    match ty {
        "char" | "uchar" | "int8" | "uint8" => Some(1),
        "short" | "ushort" | "int16" | "uint16" => Some(2),
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => Some(4),
        "double" | "float64" => Some(8),
        _ => None,
    }
}

/// Reads the `vertex` element of a `binary_little_endian` PLY file. `x, y, z`
/// must be `float`; an optional `uchar intensity` becomes the feature.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = read(path)?;
    parse_ply(&bytes).map_err(|m| integrity(path, m))
}

fn parse_ply(bytes: &[u8]) -> std::result::Result<PointCloud, String> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or("missing end_header")?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| "header is not ASCII")?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err("missing ply magic".into());
    }
    let mut format_ok = false;
    let mut elements: Vec<(String, usize, Vec<(String, String)>)> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, _] => return Err(format!("unsupported format {other}")),
            ["element", name, count] => {
                let count = count.parse().map_err(|_| format!("bad element count {count}"))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", ..] => return Err("list properties are not supported".into()),
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.2.push((ty.to_string(), name.to_string()));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(format!("unexpected header line {line:?}")),
        }
    }
    if !format_ok {
        return Err("missing format line".into());
    }
    let mut offset = end + END.len();
    for (name, count, props) in &elements {
        let sizes: Vec<usize> = props
            .iter()
            .map(|(ty, _)| scalar_size(ty).ok_or(format!("unknown property type {ty}")))
            .collect::<std::result::Result<_, _>>()?;
        let stride: usize = sizes.iter().sum();
        if name != "vertex" {
            offset += stride * count;
            continue;
        }
        let find = |p: &str| props.iter().position(|(_, n)| n == p);
        let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err("vertex element lacks x, y or z".into()),
        };
        for &k in &[ix, iy, iz] {
            if props[k].0 != "float" && props[k].0 != "float32" {
                return Err(format!("coordinate {} must be float", props[k].1));
            }
        }
        let inten = find("intensity");
        if let Some(k) = inten {
            if sizes[k] != 1 {
                return Err("intensity must be uchar".into());
            }
        }
        let starts: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                let at = *acc;
                *acc += s;
                Some(at)
            })
            .collect();
        if bytes.len() < offset + stride * count {
            return Err(format!("truncated: {count} vertices need {} bytes", stride * count));
        }
        let mut points: Vec<Point> = Vec::with_capacity(*count);
        let mut feats = Vec::new();
        for v in 0..*count {
            let base = offset + v * stride;
            let f32_at = |k: usize| {
                let s = base + starts[k];
                f32::from_le_bytes(bytes[s..s + 4].try_into().expect("4 bytes")) as f64
            };
            points.push([f32_at(ix), f32_at(iy), f32_at(iz)]);
            if let Some(k) = inten {
                feats.push(bytes[base + starts[k]] as f64);
            }
        }
        let features = inten.map(|_| Tensor::new(&[*count, 1], feats).expect("sized"));
        return PointCloud::new(points, features).map_err(|e| e.to_string());
    }
    Err("no vertex element".into())
}

pub fn write_ply(path: &Path, pc: &PointCloud) -> Result<()> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        pc.len()
    );
    if pc.features().is_some() {
        out.push_str("property uchar intensity\n");
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for (i, p) in pc.points().iter().enumerate() {
        for c in p {
            bytes.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(f) = pc.features() {
            bytes.push(f.row(i)[0].round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(fs::write(path, bytes)?)
}
