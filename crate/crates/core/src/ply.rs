//! Minimal binary little-endian PLY reader and writer.
//!
//! Values are carried as `f64`, which holds every supported scalar type
//! exactly, so a read-write cycle is lossless.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
#[error("ply error at byte {offset}: {message}")]
pub struct PlyError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, PlyError> {
    Err(PlyError {
        offset,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    Char,
    UChar,
    Short,
    UShort,
    Int,
    UInt,
    Float,
    Double,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::Char,
            "uchar" | "uint8" => Self::UChar,
            "short" | "int16" => Self::Short,
            "ushort" | "uint16" => Self::UShort,
            "int" | "int32" => Self::Int,
            "uint" | "uint32" => Self::UInt,
            "float" | "float32" => Self::Float,
            "double" | "float64" => Self::Double,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::Char | Self::UChar => 1,
            Self::Short | Self::UShort => 2,
            Self::Int | Self::UInt | Self::Float => 4,
            Self::Double => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::Char => b[0] as i8 as f64,
            Self::UChar => b[0] as f64,
            Self::Short => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::UShort => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::Int => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::UInt => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::Float => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::Double => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn write(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::Char => out.push(v as i8 as u8),
            Self::UChar => out.push(v as u8),
            Self::Short => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Self::UShort => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Self::Int => out.extend_from_slice(&(v as i32).to_le_bytes()),
            Self::UInt => out.extend_from_slice(&(v as u32).to_le_bytes()),
            Self::Float => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Self::Double => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Char => "char",
            Self::UChar => "uchar",
            Self::Short => "short",
            Self::UShort => "ushort",
            Self::Int => "int",
            Self::UInt => "uint",
            Self::Float => "float",
            Self::Double => "double",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Scalar(ScalarType, Vec<f64>),
    List {
        count: ScalarType,
        item: ScalarType,
        data: Vec<Vec<f64>>,
    },
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Scalar(_, v) => v.len(),
            Column::List { data, .. } => data.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub count: usize,
    pub columns: Vec<(String, Column)>,
}

impl Element {
    pub fn new(name: &str, count: usize) -> Self {
        Element {
            name: name.to_string(),
            count,
            columns: Vec::new(),
        }
    }

    pub fn scalar(mut self, name: &str, ty: ScalarType, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.count, "column {name} length");
        self.columns.push((name.to_string(), Column::Scalar(ty, values)));
        self
    }

    pub fn list(mut self, name: &str, count: ScalarType, item: ScalarType, data: Vec<Vec<f64>>) -> Self {
        assert_eq!(data.len(), self.count, "column {name} length");
        self.columns
            .push((name.to_string(), Column::List { count, item, data }));
        self
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Scalar column values by name.
    pub fn values(&self, name: &str) -> Option<&[f64]> {
        match self.column(name)? {
            Column::Scalar(_, v) => Some(v),
            Column::List { .. } => None,
        }
    }

    pub fn scalar_type(&self, name: &str) -> Option<ScalarType> {
        match self.column(name)? {
            Column::Scalar(t, _) => Some(*t),
            Column::List { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyFile {
    pub comments: Vec<String>,
    pub elements: Vec<Element>,
}

impl PlyFile {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
        for c in &self.comments {
            h.push_str(&format!("comment {c}\n"));
        }
        for e in &self.elements {
            h.push_str(&format!("element {} {}\n", e.name, e.count));
            for (name, col) in &e.columns {
                match col {
                    Column::Scalar(t, _) => h.push_str(&format!("property {t} {name}\n")),
                    Column::List { count, item, .. } => {
                        h.push_str(&format!("property list {count} {item} {name}\n"))
                    }
                }
            }
        }
        h.push_str("end_header\n");
        let mut out = h.into_bytes();
        for e in &self.elements {
            for row in 0..e.count {
                for (_, col) in &e.columns {
                    match col {
                        Column::Scalar(t, v) => t.write(v[row], &mut out),
                        Column::List { count, item, data } => {
                            count.write(data[row].len() as f64, &mut out);
                            for &x in &data[row] {
                                item.write(x, &mut out);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PlyFile, PlyError> {
        let mut pos = 0;
        let next_line = |pos: &mut usize| -> Result<String, PlyError> {
            let start = *pos;
            let Some(nl) = bytes[start..].iter().position(|&b| b == b'\n') else {
                return err(start, "unterminated header");
            };
            *pos = start + nl + 1;
            String::from_utf8(bytes[start..start + nl].to_vec())
                .map(|s| s.trim_end_matches('\r').to_string())
                .or_else(|_| err(start, "header is not valid UTF-8"))
        };
        if next_line(&mut pos)? != "ply" {
            return err(0, "missing 'ply' magic");
        }
        let mut file = PlyFile::default();
        let mut format_seen = false;
        // (element, property types) as declared
        let mut decls: Vec<(Element, Vec<(String, Option<ScalarType>, ScalarType)>)> = Vec::new();
        loop {
            let at = pos;
            let line = next_line(&mut pos)?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["end_header"] => break,
                ["format", "binary_little_endian", _] => format_seen = true,
                ["format", f, _] => return err(at, format!("unsupported format '{f}'")),
                ["comment", ..] => file
                    .comments
                    .push(line.trim_start_matches("comment").trim_start().to_string()),
                ["obj_info", ..] => {}
                ["element", name, count] => {
                    let count: usize = count
                        .parse()
                        .or_else(|_| err(at, format!("bad element count '{count}'")))?;
                    decls.push((Element::new(name, count), Vec::new()));
                }
                ["property", "list", c, i, name] => {
                    let (Some(c), Some(i)) = (ScalarType::parse(c), ScalarType::parse(i)) else {
                        return err(at, "unknown list property type");
                    };
                    let Some(d) = decls.last_mut() else {
                        return err(at, "property before element");
                    };
                    d.1.push((name.to_string(), Some(c), i));
                }
                ["property", t, name] => {
                    let Some(t) = ScalarType::parse(t) else {
                        return err(at, format!("unknown property type '{t}'"));
                    };
                    let Some(d) = decls.last_mut() else {
                        return err(at, "property before element");
                    };
                    d.1.push((name.to_string(), None, t));
                }
                _ => return err(at, format!("unrecognized header line '{line}'")),
            }
        }
        if !format_seen {
            return err(0, "missing format line");
        }
        for (mut elem, props) in decls {
            let mut cols: Vec<Column> = props
                .iter()
                .map(|(_, c, t)| match c {
                    None => Column::Scalar(*t, Vec::with_capacity(elem.count)),
                    Some(c) => Column::List {
                        count: *c,
                        item: *t,
                        data: Vec::with_capacity(elem.count),
                    },
                })
                .collect();
            for _ in 0..elem.count {
                for col in cols.iter_mut() {
                    match col {
                        Column::Scalar(t, v) => {
                            v.push(read_scalar(bytes, &mut pos, *t, &elem.name)?);
                        }
                        Column::List { count, item, data } => {
                            let n = read_scalar(bytes, &mut pos, *count, &elem.name)?;
                            if !(0.0..=1e9).contains(&n) {
                                return err(pos, format!("bad list length {n}"));
                            }
                            let mut row = Vec::with_capacity(n as usize);
                            for _ in 0..n as usize {
                                row.push(read_scalar(bytes, &mut pos, *item, &elem.name)?);
                            }
                            data.push(row);
                        }
                    }
                }
            }
            elem.columns = props.into_iter().map(|p| p.0).zip(cols).collect();
            debug_assert!(elem.columns.iter().all(|(_, c)| c.len() == elem.count));
            file.elements.push(elem);
        }
        if pos != bytes.len() {
            return err(pos, format!("{} trailing bytes after last element", bytes.len() - pos));
        }
        Ok(file)
    }
}

fn read_scalar(bytes: &[u8], pos: &mut usize, t: ScalarType, elem: &str) -> Result<f64, PlyError> {
    let n = t.size();
    if *pos + n > bytes.len() {
        return err(*pos, format!("truncated data in element '{elem}'"));
    }
    let v = t.read(&bytes[*pos..*pos + n]);
    *pos += n;
    Ok(v)
}
