//! PLY point clouds with per-point semantic and instance labels.
//!
//! Reads ASCII and binary little-endian files. Writes binary little-endian
//! with either `float` or `double` coordinates.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{PointCloud, Vec3};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            IoError::Io { path, .. } | IoError::Format { path, .. } => path,
        }
    }
}

/// A point cloud with a category label and an instance id per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub labels: Vec<i32>,
    pub instances: Vec<i32>,
}

impl LabeledCloud {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Appends `cloud`, giving every new point the same label and instance.
    pub fn push_instance(&mut self, cloud: &PointCloud, label: i32, instance: i32) {
        self.cloud.extend(cloud);
        self.labels.extend(std::iter::repeat_n(label, cloud.len()));
        self.instances.extend(std::iter::repeat_n(instance, cloud.len()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
}

fn read_header<R: BufRead>(r: &mut R, path: &Path) -> Result<Header, IoError> {
    let mut line = String::new();
    let mut next = |r: &mut R| -> Result<String, IoError> {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| IoError::io(path, e))?;
        if n == 0 {
            return Err(IoError::format(path, "unexpected end of header"));
        }
        Ok(line.trim().to_string())
    };
    if next(r)? != "ply" {
        return Err(IoError::format(path, "missing `ply` magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let l = next(r)?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("format") => {
                encoding = Some(match parts.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    other => {
                        return Err(IoError::format(
                            path,
                            format!("unsupported format {}", other.unwrap_or("")),
                        ))
                    }
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = parts.next().unwrap_or("").to_string();
                let count = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| IoError::format(path, format!("bad element line `{l}`")))?;
                elements.push(Element {
                    name,
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| IoError::format(path, "property before element"))?;
                let ty = parts.next().unwrap_or("");
                if ty == "list" {
                    el.props.push(Property::List);
                } else {
                    let scalar = Scalar::parse(ty)
                        .ok_or_else(|| IoError::format(path, format!("unknown type `{ty}`")))?;
                    el.props
                        .push(Property::Scalar(parts.next().unwrap_or("").to_string(), scalar));
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(IoError::format(path, format!("unexpected header keyword `{other}`")))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| IoError::format(path, "missing format line"))?;
    Ok(Header { encoding, elements })
}

#[derive(Default)]
struct Columns {
    x: Option<usize>,
    y: Option<usize>,
    z: Option<usize>,
    rgb: Option<[usize; 3]>,
    normal: Option<[usize; 3]>,
    label: Option<usize>,
    instance: Option<usize>,
}

impl Columns {
    fn locate(props: &[Property]) -> Self {
        let find = |names: &[&str]| {
            props.iter().position(|p| match p {
                Property::Scalar(n, _) => names.contains(&n.as_str()),
                Property::List => false,
            })
        };
        let triple = |a: &[&str], b: &[&str], c: &[&str]| match (find(a), find(b), find(c)) {
            (Some(i), Some(j), Some(k)) => Some([i, j, k]),
            _ => None,
        };
        Columns {
            x: find(&["x"]),
            y: find(&["y"]),
            z: find(&["z"]),
            rgb: triple(&["red", "r"], &["green", "g"], &["blue", "b"]),
            normal: triple(&["nx"], &["ny"], &["nz"]),
            label: find(&["label", "semantic", "class"]),
            instance: find(&["instance", "instance_id"]),
        }
    }
}

/// Reads a labeled PLY file. Every vertex must carry `x`, `y`, `z`, `label`
/// and `instance`; colors and normals are picked up when present.
pub fn read_ply(path: &Path) -> Result<LabeledCloud, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    read_ply_from(&mut BufReader::new(file), path)
}

/// Like [`read_ply`] over an arbitrary reader; `path` is only used in errors.
pub fn read_ply_from<R: BufRead>(r: &mut R, path: &Path) -> Result<LabeledCloud, IoError> {
    let header = read_header(r, path)?;
    let mut out = None;
    for el in &header.elements {
        if el.name == "vertex" {
            out = Some(read_vertices(r, path, header.encoding, el)?);
            break;
        }
        skip_element(r, path, header.encoding, el)?;
    }
    out.ok_or_else(|| IoError::format(path, "no vertex element"))
}

fn skip_element<R: BufRead>(r: &mut R, path: &Path, enc: Encoding, el: &Element) -> Result<(), IoError> {
    match enc {
        Encoding::Ascii => {
            let mut line = String::new();
            for _ in 0..el.count {
                line.clear();
                if r.read_line(&mut line).map_err(|e| IoError::io(path, e))? == 0 {
                    return Err(IoError::format(path, "unexpected end of data"));
                }
            }
            Ok(())
        }
        Encoding::BinaryLe => {
            let mut width = 0;
            for p in &el.props {
                match p {
                    Property::Scalar(_, s) => width += s.size(),
                    Property::List => {
                        return Err(IoError::format(
                            path,
                            format!("cannot skip list element `{}` before vertices", el.name),
                        ))
                    }
                }
            }
            let mut buf = vec![0u8; width];
            for _ in 0..el.count {
                read_exact(r, &mut buf, path)?;
            }
            Ok(())
        }
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &Path) -> Result<(), IoError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            IoError::format(path, "unexpected end of data")
        } else {
            IoError::io(path, e)
        }
    })
}

fn read_vertices<R: BufRead>(
    r: &mut R,
    path: &Path,
    enc: Encoding,
    el: &Element,
) -> Result<LabeledCloud, IoError> {
    let cols = Columns::locate(&el.props);
    let (Some(x), Some(y), Some(z)) = (cols.x, cols.y, cols.z) else {
        return Err(IoError::format(path, "vertex element lacks x, y or z"));
    };
    let label = cols
        .label
        .ok_or_else(|| IoError::format(path, "vertex element lacks `label`"))?;
    let instance = cols
        .instance
        .ok_or_else(|| IoError::format(path, "vertex element lacks `instance`"))?;
    if enc == Encoding::BinaryLe && el.props.iter().any(|p| matches!(p, Property::List)) {
        return Err(IoError::format(path, "list properties on vertices are not supported"));
    }

    let n = el.count;
    let mut out = LabeledCloud {
        cloud: PointCloud {
            points: Vec::with_capacity(n),
            colors: cols.rgb.map(|_| Vec::with_capacity(n)),
            normals: cols.normal.map(|_| Vec::with_capacity(n)),
        },
        labels: Vec::with_capacity(n),
        instances: Vec::with_capacity(n),
    };
    let mut row = vec![0.0f64; el.props.len()];
    let mut line = String::new();
    let widths: Vec<(usize, Scalar)> = el
        .props
        .iter()
        .map(|p| match p {
            Property::Scalar(_, s) => (s.size(), *s),
            Property::List => (0, Scalar::U8),
        })
        .collect();
    let stride: usize = widths.iter().map(|w| w.0).sum();
    let mut buf = vec![0u8; stride];

    for i in 0..n {
        match enc {
            Encoding::Ascii => {
                line.clear();
                if r.read_line(&mut line).map_err(|e| IoError::io(path, e))? == 0 {
                    return Err(IoError::format(path, format!("unexpected end of data at vertex {i}")));
                }
                let mut toks = line.split_whitespace();
                for (j, p) in el.props.iter().enumerate() {
                    let tok = toks
                        .next()
                        .ok_or_else(|| IoError::format(path, format!("short row at vertex {i}")))?;
                    match p {
                        Property::Scalar(..) => {
                            row[j] = tok.parse().map_err(|_| {
                                IoError::format(path, format!("bad number `{tok}` at vertex {i}"))
                            })?;
                        }
                        Property::List => {
                            let len: usize = tok.parse().map_err(|_| {
                                IoError::format(path, format!("bad list length at vertex {i}"))
                            })?;
                            for _ in 0..len {
                                toks.next();
                            }
                        }
                    }
                }
            }
            Encoding::BinaryLe => {
                read_exact(r, &mut buf, path)?;
                let mut at = 0;
                for (j, (w, s)) in widths.iter().enumerate() {
                    row[j] = s.decode(&buf[at..at + w]);
                    at += w;
                }
            }
        }
        let p = Vec3::new(row[x], row[y], row[z]);
        if !p.iter().all(|v| v.is_finite()) {
            return Err(IoError::format(path, format!("non-finite coordinate at vertex {i}")));
        }
        out.cloud.points.push(p);
        if let (Some(c), Some(colors)) = (cols.rgb, out.cloud.colors.as_mut()) {
            colors.push(c.map(|k| row[k].clamp(0.0, 255.0) as u8));
        }
        if let (Some(c), Some(normals)) = (cols.normal, out.cloud.normals.as_mut()) {
            normals.push(Vec3::new(row[c[0]], row[c[1]], row[c[2]]));
        }
        out.labels.push(row[label] as i32);
        out.instances.push(row[instance] as i32);
    }
    Ok(out)
}

/// Writes binary little-endian PLY with the `x y z [red green blue]
/// [nx ny nz] label instance` vertex layout.
pub fn write_ply(path: &Path, data: &LabeledCloud, precision: Precision) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply_to(&mut w, data, precision).map_err(|e| IoError::io(path, e))?;
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn write_ply_to<W: Write>(w: &mut W, data: &LabeledCloud, precision: Precision) -> std::io::Result<()> {
    let cloud = &data.cloud;
    let ty = match precision {
        Precision::F32 => "float",
        Precision::F64 => "double",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for c in ["x", "y", "z"] {
        writeln!(w, "property {ty} {c}")?;
    }
    if cloud.colors.is_some() {
        for c in ["red", "green", "blue"] {
            writeln!(w, "property uchar {c}")?;
        }
    }
    if cloud.normals.is_some() {
        for c in ["nx", "ny", "nz"] {
            writeln!(w, "property {ty} {c}")?;
        }
    }
    writeln!(w, "property int label")?;
    writeln!(w, "property int instance")?;
    writeln!(w, "end_header")?;
    let put = |w: &mut W, v: f64| match precision {
        Precision::F32 => w.write_all(&(v as f32).to_le_bytes()),
        Precision::F64 => w.write_all(&v.to_le_bytes()),
    };
    for i in 0..cloud.len() {
        for v in cloud.points[i].iter() {
            put(w, *v)?;
        }
        if let Some(c) = &cloud.colors {
            w.write_all(&c[i])?;
        }
        if let Some(n) = &cloud.normals {
            for v in n[i].iter() {
                put(w, *v)?;
            }
        }
        w.write_all(&data.labels[i].to_le_bytes())?;
        w.write_all(&data.instances[i].to_le_bytes())?;
    }
    Ok(())
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| IoError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}
