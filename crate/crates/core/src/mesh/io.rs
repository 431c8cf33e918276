//! OBJ and PLY (ascii / binary little-endian) reading and writing.
//!
//! Floating-point values are written with Rust's shortest round-trip
//! formatting in the text formats and as `double` in binary PLY, so
//! `parse(serialize(m)) == m` holds bit for bit in every format.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Location, Mesh, MeshError, Result, Triangle, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFormat {
    Obj,
    PlyAscii,
    PlyBinary,
}

impl MeshFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Obj => "obj",
            MeshFormat::PlyAscii | MeshFormat::PlyBinary => "ply",
        }
    }

    /// Guesses the format from a file extension and, for `.ply`, the header.
    pub fn detect(path: &std::path::Path, bytes: &[u8]) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => {
                let head = &bytes[..bytes.len().min(256)];
                let head = String::from_utf8_lossy(head);
                if head.contains("format ascii") {
                    Some(MeshFormat::PlyAscii)
                } else {
                    Some(MeshFormat::PlyBinary)
                }
            }
            _ => None,
        }
    }
}

/// Things the parser fixed up rather than rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// Polygons with more than three corners that were fan-triangulated.
    pub fan_triangulated: usize,
    /// Faces dropped because they repeat a vertex index.
    pub degenerate_dropped: usize,
    /// OBJ vertices referenced with more than one `vt`/`vn` index; the first
    /// reference wins.
    pub attribute_conflicts: usize,
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<Mesh> {
    let (mesh, report) = parse_mesh_with_report(bytes, format)?;
    if report != ParseReport::default() {
        log::warn!("mesh input repaired: {report:?}");
    }
    Ok(mesh)
}

pub fn parse_mesh_with_report(bytes: &[u8], format: MeshFormat) -> Result<(Mesh, ParseReport)> {
    match format {
        MeshFormat::Obj => parse_obj(bytes),
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => parse_ply(bytes),
    }
}

pub fn serialize_mesh(mesh: &Mesh, format: MeshFormat) -> Vec<u8> {
    match format {
        MeshFormat::Obj => write_obj(mesh),
        MeshFormat::PlyAscii => write_ply(mesh, false),
        MeshFormat::PlyBinary => write_ply(mesh, true),
    }
}

fn syntax(location: Location, message: impl Into<String>) -> MeshError {
    MeshError::Syntax {
        location,
        message: message.into(),
    }
}

/// Appends a polygon as a triangle fan, dropping degenerate pieces.
fn push_polygon(
    poly: &[u32],
    triangles: &mut Vec<Triangle>,
    report: &mut ParseReport,
    location: Location,
) -> Result<()> {
    if poly.len() < 3 {
        return Err(syntax(location, format!("face with {} vertices", poly.len())));
    }
    if poly.len() > 3 {
        report.fan_triangulated += 1;
    }
    for k in 1..poly.len() - 1 {
        let t = [poly[0], poly[k], poly[k + 1]];
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            report.degenerate_dropped += 1;
        } else {
            triangles.push(t);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// OBJ

fn parse_obj(bytes: &[u8]) -> Result<(Mesh, ParseReport)> {
    let text = std::str::from_utf8(bytes).map_err(|e| syntax(Location::Offset(e.valid_up_to()), "invalid UTF-8"))?;
    let mut report = ParseReport::default();

    let mut vertices = Vec::new();
    let mut colors: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    // Per-vertex attribute index, first reference wins.
    let mut vt_of: HashMap<u32, u32> = HashMap::new();
    let mut vn_of: HashMap<u32, u32> = HashMap::new();
    let mut any_vt = false;
    let mut any_vn = false;

    // Face records may precede the vertices they use only with relative
    // indices, which resolve against the count seen so far.
    let mut pending_faces: Vec<(usize, Vec<(i64, Option<i64>, Option<i64>)>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let loc = Location::Line(line_no);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or("");
        let nums = |parts: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            parts
                .map(|s| s.parse::<f64>().map_err(|_| syntax(loc, format!("bad number {s:?}"))))
                .collect()
        };
        match tag {
            "v" => {
                let vals = nums(parts)?;
                match vals.len() {
                    3 | 4 => vertices.push(Vec3::new(vals[0], vals[1], vals[2])),
                    6 | 7 => {
                        let c = if vals.len() == 6 { 3 } else { 4 };
                        vertices.push(Vec3::new(vals[0], vals[1], vals[2]));
                        if colors.len() + 1 != vertices.len() {
                            return Err(syntax(loc, "vertex colors must be given for every vertex"));
                        }
                        colors.push(Vec3::new(vals[c], vals[c + 1], vals[c + 2]));
                    }
                    n => return Err(syntax(loc, format!("vertex record with {n} values"))),
                }
            }
            "vt" => {
                let vals = nums(parts)?;
                if vals.len() < 2 || vals.len() > 3 {
                    return Err(syntax(loc, "texture coordinate needs 2 or 3 values"));
                }
                texcoords.push([vals[0], vals[1]]);
            }
            "vn" => {
                let vals = nums(parts)?;
                if vals.len() != 3 {
                    return Err(syntax(loc, "normal needs 3 values"));
                }
                normals.push(Vec3::new(vals[0], vals[1], vals[2]));
            }
            "f" => {
                let mut refs = Vec::new();
                for tok in parts {
                    let mut it = tok.split('/');
                    let parse_idx = |s: Option<&str>| -> Result<Option<i64>> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => s
                                .parse::<i64>()
                                .map(Some)
                                .map_err(|_| syntax(loc, format!("bad index {s:?}"))),
                        }
                    };
                    let v = parse_idx(it.next())?.ok_or_else(|| syntax(loc, "face corner without vertex index"))?;
                    let vt = parse_idx(it.next())?;
                    let vn = parse_idx(it.next())?;
                    // Relative indices resolve now.
                    let resolve = |i: i64, count: usize| if i < 0 { count as i64 + i + 1 } else { i };
                    refs.push((
                        resolve(v, vertices.len()),
                        vt.map(|i| resolve(i, texcoords.len())),
                        vn.map(|i| resolve(i, normals.len())),
                    ));
                }
                pending_faces.push((line_no, refs));
            }
            "l" | "p" => return Err(MeshError::Unsupported(format!("OBJ {tag} record at line {line_no}"))),
            // Groups, materials and smoothing carry no geometry we keep.
            "o" | "g" | "s" | "usemtl" | "mtllib" | "vp" => {}
            other => {
                return Err(syntax(loc, format!("unknown record {other:?}")));
            }
        }
    }

    let nv = vertices.len();
    for (line_no, refs) in pending_faces {
        let loc = Location::Line(line_no);
        let mut poly = Vec::with_capacity(refs.len());
        for (v, vt, vn) in refs {
            if v < 1 || v as usize > nv {
                return Err(MeshError::IndexOutOfRange {
                    triangle: triangles.len(),
                    index: v - 1,
                    vertex_count: nv,
                });
            }
            let vi = (v - 1) as u32;
            if let Some(t) = vt {
                if t < 1 || t as usize > texcoords.len() {
                    return Err(syntax(loc, format!("texture index {t} out of range")));
                }
                any_vt = true;
                let prev = *vt_of.entry(vi).or_insert((t - 1) as u32);
                if prev != (t - 1) as u32 && texcoords[prev as usize] != texcoords[(t - 1) as usize] {
                    report.attribute_conflicts += 1;
                }
            }
            if let Some(n) = vn {
                if n < 1 || n as usize > normals.len() {
                    return Err(syntax(loc, format!("normal index {n} out of range")));
                }
                any_vn = true;
                let prev = *vn_of.entry(vi).or_insert((n - 1) as u32);
                if prev != (n - 1) as u32 && normals[prev as usize] != normals[(n - 1) as usize] {
                    report.attribute_conflicts += 1;
                }
            }
            poly.push(vi);
        }
        push_polygon(&poly, &mut triangles, &mut report, loc)?;
    }

    // A vertex no face references takes the record at its own index when
    // the file has one record per vertex, else a default.
    let uvs = any_vt.then(|| {
        (0..nv as u32)
            .map(|v| match vt_of.get(&v) {
                Some(&t) => texcoords[t as usize],
                None if texcoords.len() == nv => texcoords[v as usize],
                None => [0.0, 0.0],
            })
            .collect()
    });
    let vnormals = any_vn.then(|| {
        (0..nv as u32)
            .map(|v| match vn_of.get(&v) {
                Some(&n) => normals[n as usize],
                None if normals.len() == nv => normals[v as usize],
                None => Vec3::z(),
            })
            .collect()
    });

    let mesh = Mesh {
        vertices,
        triangles,
        normals: vnormals,
        uvs,
        colors: (!colors.is_empty()).then_some(colors),
    };
    mesh.validate()?;
    Ok((mesh, report))
}

fn write_obj(mesh: &Mesh) -> Vec<u8> {
    let mut out = String::with_capacity(mesh.vertices.len() * 48 + mesh.triangles.len() * 24);
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = write!(out, "v {} {} {}", v.x, v.y, v.z);
        if let Some(c) = &mesh.colors {
            let c = c[i];
            let _ = write!(out, " {} {} {}", c.x, c.y, c.z);
        }
        out.push('\n');
    }
    if let Some(uvs) = &mesh.uvs {
        for uv in uvs {
            let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
        }
    }
    if let Some(ns) = &mesh.normals {
        for n in ns {
            let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
        }
    }
    let (has_t, has_n) = (mesh.uvs.is_some(), mesh.normals.is_some());
    for tri in &mesh.triangles {
        out.push('f');
        for &i in tri {
            let i = i + 1;
            let _ = match (has_t, has_n) {
                (false, false) => write!(out, " {i}"),
                (true, false) => write!(out, " {i}/{i}"),
                (false, true) => write!(out, " {i}//{i}"),
                (true, true) => write!(out, " {i}/{i}/{i}"),
            };
        }
        out.push('\n');
    }
    out.into_bytes()
}

// ---------------------------------------------------------------------------
// PLY

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

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    /// Full-scale value used to map integer color channels into `[0, 1]`.
    fn color_scale(self) -> f64 {
        match self {
            Scalar::I8 => 127.0,
            Scalar::U8 => 255.0,
            Scalar::I16 => 32767.0,
            Scalar::U16 => 65535.0,
            Scalar::I32 => 2147483647.0,
            Scalar::U32 => 4294967295.0,
            Scalar::F32 | Scalar::F64 => 1.0,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, Default)]
struct VertexLayout {
    pos: [Option<usize>; 3],
    normal: [Option<usize>; 3],
    uv: [Option<usize>; 2],
    color: [Option<usize>; 3],
}

fn vertex_layout(el: &Element) -> VertexLayout {
    let mut l = VertexLayout::default();
    for (i, p) in el.props.iter().enumerate() {
        let Property::Scalar { name, .. } = p else { continue };
        match name.as_str() {
            "x" => l.pos[0] = Some(i),
            "y" => l.pos[1] = Some(i),
            "z" => l.pos[2] = Some(i),
            "nx" => l.normal[0] = Some(i),
            "ny" => l.normal[1] = Some(i),
            "nz" => l.normal[2] = Some(i),
            "u" | "s" | "texture_u" => l.uv[0] = Some(i),
            "v" | "t" | "texture_v" => l.uv[1] = Some(i),
            "red" | "r" | "diffuse_red" => l.color[0] = Some(i),
            "green" | "g" | "diffuse_green" => l.color[1] = Some(i),
            "blue" | "b" | "diffuse_blue" => l.color[2] = Some(i),
            _ => {}
        }
    }
    l
}

struct Header {
    binary: bool,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let mut pos = 0;
    let mut line_no = 0;
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line_no += 1;
        let loc = Location::Line(line_no);
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| syntax(loc, "unterminated PLY header"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| syntax(loc, "non-UTF-8 header line"))?
            .trim_end_matches('\r');
        pos += nl + 1;
        let mut parts = line.split_whitespace();
        let first = parts.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(syntax(loc, "missing 'ply' magic"));
            }
            continue;
        }
        match first {
            "format" => {
                binary = Some(match parts.next() {
                    Some("ascii") => false,
                    Some("binary_little_endian") => true,
                    Some(other) => return Err(MeshError::Unsupported(format!("PLY format {other}"))),
                    None => return Err(syntax(loc, "format line without a format")),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = parts.next().ok_or_else(|| syntax(loc, "element without a name"))?;
                let count = parts
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| syntax(loc, "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let el = elements.last_mut().ok_or_else(|| syntax(loc, "property before element"))?;
                let ty = parts.next().ok_or_else(|| syntax(loc, "property without type"))?;
                let prop = if ty == "list" {
                    let count = parts.next().and_then(Scalar::parse);
                    let item = parts.next().and_then(Scalar::parse);
                    let name = parts.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) if !count.is_float() => Property::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(syntax(loc, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(|| syntax(loc, format!("unknown type {ty:?}")))?;
                    let name = parts.next().ok_or_else(|| syntax(loc, "property without name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                el.props.push(prop);
            }
            _ if line.as_bytes() == END => break,
            other => return Err(syntax(loc, format!("unknown header keyword {other:?}"))),
        }
    }
    Ok(Header {
        binary: binary.ok_or_else(|| syntax(Location::Line(2), "missing format line"))?,
        elements,
        body_offset: pos,
        body_line: line_no + 1,
    })
}

/// One decoded element instance: scalar values and list payloads in
/// property order.
#[derive(Default)]
struct Record {
    scalars: Vec<f64>,
    lists: Vec<Vec<f64>>,
}

trait RecordSource {
    fn next_record(&mut self, el: &Element, out: &mut Record) -> Result<()>;
    fn finish(&self) -> Result<()>;
}

struct AsciiSource<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    first_line: usize,
}

impl RecordSource for AsciiSource<'_> {
    fn next_record(&mut self, el: &Element, out: &mut Record) -> Result<()> {
        let (idx, line) = loop {
            match self.lines.next() {
                Some((i, l)) if l.trim().is_empty() => {
                    let _ = i;
                    continue;
                }
                Some(x) => break x,
                None => return Err(syntax(Location::Line(self.first_line), format!("missing {} records", el.name))),
            }
        };
        let loc = Location::Line(self.first_line + idx);
        let mut toks = line.split_whitespace();
        let mut num = |what: &str| -> Result<f64> {
            toks.next()
                .ok_or_else(|| syntax(loc, format!("missing {what}")))?
                .parse::<f64>()
                .map_err(|_| syntax(loc, format!("bad number in {what}")))
        };
        out.scalars.clear();
        out.lists.clear();
        for p in &el.props {
            match p {
                Property::Scalar { name, .. } => out.scalars.push(num(name)?),
                Property::List { name, .. } => {
                    let n = num(name)?;
                    if n < 0.0 || n.fract() != 0.0 {
                        return Err(syntax(loc, "bad list length"));
                    }
                    let items = (0..n as usize).map(|_| num(name)).collect::<Result<Vec<_>>>()?;
                    out.lists.push(items);
                }
            }
        }
        if toks.next().is_some() {
            return Err(syntax(loc, format!("trailing values in {} record", el.name)));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        Ok(())
    }
}

struct BinarySource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BinarySource<'_> {
    fn take(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return Err(syntax(Location::Offset(self.pos), "unexpected end of binary body"));
        }
        let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }
}

impl RecordSource for BinarySource<'_> {
    fn next_record(&mut self, el: &Element, out: &mut Record) -> Result<()> {
        out.scalars.clear();
        out.lists.clear();
        for p in &el.props {
            match *p {
                Property::Scalar { ty, .. } => {
                    let v = self.take(ty)?;
                    out.scalars.push(v);
                }
                Property::List { count, item, .. } => {
                    let at = self.pos;
                    let n = self.take(count)?;
                    if n < 0.0 {
                        return Err(syntax(Location::Offset(at), "negative list length"));
                    }
                    let items = (0..n as usize).map(|_| self.take(item)).collect::<Result<Vec<_>>>()?;
                    out.lists.push(items);
                }
            }
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(syntax(Location::Offset(self.pos), "trailing bytes after last element"));
        }
        Ok(())
    }
}

fn parse_ply(bytes: &[u8]) -> Result<(Mesh, ParseReport)> {
    let header = parse_ply_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let mut source: Box<dyn RecordSource> = if header.binary {
        Box::new(BinarySource {
            bytes,
            pos: header.body_offset,
        })
    } else {
        let text = std::str::from_utf8(body)
            .map_err(|e| syntax(Location::Offset(header.body_offset + e.valid_up_to()), "invalid UTF-8"))?;
        Box::new(AsciiSource {
            lines: text.lines().enumerate().peekable(),
            first_line: header.body_line,
        })
    };

    let mut report = ParseReport::default();
    let mut mesh = Mesh::default();
    let mut rec = Record::default();
    let mut saw_vertex = false;
    for el in &header.elements {
        match el.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                let l = vertex_layout(el);
                let [Some(x), Some(y), Some(z)] = l.pos else {
                    return Err(MeshError::Unsupported("PLY vertex element without x/y/z".into()));
                };
                // Scalar-property index -> position among scalars.
                let scalar_slot: Vec<Option<usize>> = {
                    let mut k = 0;
                    el.props
                        .iter()
                        .map(|p| match p {
                            Property::Scalar { .. } => {
                                k += 1;
                                Some(k - 1)
                            }
                            Property::List { .. } => None,
                        })
                        .collect()
                };
                let slot = |i: usize| scalar_slot[i].expect("vertex attribute is scalar");
                let color_scale: Vec<f64> = l
                    .color
                    .iter()
                    .map(|c| match c.map(|i| &el.props[i]) {
                        Some(Property::Scalar { ty, .. }) => ty.color_scale(),
                        _ => 1.0,
                    })
                    .collect();
                let all3 = |a: [Option<usize>; 3]| -> Option<[usize; 3]> { Some([slot(a[0]?), slot(a[1]?), slot(a[2]?)]) };
                let nslots = all3(l.normal);
                let cslots = all3(l.color);
                let uvslots = match l.uv {
                    [Some(u), Some(v)] => Some([slot(u), slot(v)]),
                    _ => None,
                };
                let (xs, ys, zs) = (slot(x), slot(y), slot(z));
                let mut normals = nslots.map(|_| Vec::with_capacity(el.count));
                let mut colors = cslots.map(|_| Vec::with_capacity(el.count));
                let mut uvs = uvslots.map(|_| Vec::with_capacity(el.count));
                mesh.vertices.reserve(el.count);
                for _ in 0..el.count {
                    source.next_record(el, &mut rec)?;
                    let s = &rec.scalars;
                    mesh.vertices.push(Vec3::new(s[xs], s[ys], s[zs]));
                    if let (Some(n), Some(out)) = (nslots, normals.as_mut()) {
                        out.push(Vec3::new(s[n[0]], s[n[1]], s[n[2]]));
                    }
                    if let (Some(c), Some(out)) = (cslots, colors.as_mut()) {
                        out.push(Vec3::new(
                            s[c[0]] / color_scale[0],
                            s[c[1]] / color_scale[1],
                            s[c[2]] / color_scale[2],
                        ));
                    }
                    if let (Some(t), Some(out)) = (uvslots, uvs.as_mut()) {
                        out.push([s[t[0]], s[t[1]]]);
                    }
                }
                mesh.normals = normals;
                mesh.colors = colors;
                mesh.uvs = uvs;
            }
            "face" => {
                let list_pos = el
                    .props
                    .iter()
                    .filter(|p| matches!(p, Property::List { .. }))
                    .position(|p| matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index"))
                    .ok_or_else(|| MeshError::Unsupported("PLY face element without vertex_indices".into()))?;
                for _ in 0..el.count {
                    source.next_record(el, &mut rec)?;
                    let loc = Location::Line(0);
                    let nv = mesh.vertices.len();
                    let mut poly = Vec::with_capacity(rec.lists[list_pos].len());
                    for &i in &rec.lists[list_pos] {
                        if i < 0.0 || i as usize >= nv || !saw_vertex {
                            return Err(MeshError::IndexOutOfRange {
                                triangle: mesh.triangles.len(),
                                index: i as i64,
                                vertex_count: nv,
                            });
                        }
                        poly.push(i as u32);
                    }
                    push_polygon(&poly, &mut mesh.triangles, &mut report, loc)?;
                }
            }
            "edge" | "line" => {
                if el.count > 0 {
                    return Err(MeshError::Unsupported(format!("PLY {} element", el.name)));
                }
            }
            _ => {
                for _ in 0..el.count {
                    source.next_record(el, &mut rec)?;
                }
            }
        }
    }
    source.finish()?;
    mesh.validate()?;
    Ok((mesh, report))
}

fn write_ply(mesh: &Mesh, binary: bool) -> Vec<u8> {
    let mut head = String::new();
    head.push_str("ply\n");
    head.push_str(if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    });
    let _ = writeln!(head, "element vertex {}", mesh.vertices.len());
    let mut names: Vec<&str> = vec!["x", "y", "z"];
    if mesh.normals.is_some() {
        names.extend(["nx", "ny", "nz"]);
    }
    if mesh.uvs.is_some() {
        names.extend(["u", "v"]);
    }
    if mesh.colors.is_some() {
        names.extend(["red", "green", "blue"]);
    }
    for n in &names {
        let _ = writeln!(head, "property double {n}");
    }
    let _ = writeln!(head, "element face {}", mesh.triangles.len());
    head.push_str("property list uchar int vertex_indices\nend_header\n");

    let row = |i: usize, out: &mut Vec<f64>| {
        out.clear();
        out.extend(mesh.vertices[i].iter());
        if let Some(n) = &mesh.normals {
            out.extend(n[i].iter());
        }
        if let Some(uv) = &mesh.uvs {
            out.extend(uv[i]);
        }
        if let Some(c) = &mesh.colors {
            out.extend(c[i].iter());
        }
    };

    let mut out = head.into_bytes();
    let mut vals = Vec::with_capacity(names.len());
    if binary {
        for i in 0..mesh.vertices.len() {
            row(i, &mut vals);
            for v in &vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for tri in &mesh.triangles {
            out.push(3);
            for &i in tri {
                out.extend_from_slice(&(i as i32).to_le_bytes());
            }
        }
    } else {
        let mut s = String::new();
        for i in 0..mesh.vertices.len() {
            row(i, &mut vals);
            for (k, v) in vals.iter().enumerate() {
                if k > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
        for tri in &mesh.triangles {
            let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
        }
        out.extend_from_slice(s.as_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_obj() {
        let m = parse_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", MeshFormat::Obj).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert!(m.uvs.is_none() && m.normals.is_none() && m.colors.is_none());
    }

    #[test]
    fn obj_index_out_of_range() {
        let err = parse_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 5\n", MeshFormat::Obj).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 4, vertex_count: 4, .. }));
    }

    #[test]
    fn obj_quads_are_fanned_and_reported() {
        let src = b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let (m, report) = parse_mesh_with_report(src, MeshFormat::Obj).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(report.fan_triangulated, 1);
    }

    #[test]
    fn obj_polyline_rejected() {
        let err = parse_mesh(b"v 0 0 0\nv 1 0 0\nl 1 2\n", MeshFormat::Obj).unwrap_err();
        assert!(matches!(err, MeshError::Unsupported(_)));
    }

    #[test]
    fn obj_syntax_error_has_line() {
        let err = parse_mesh(b"v 0 0 0\nv 1 zero 0\n", MeshFormat::Obj).unwrap_err();
        assert!(matches!(err, MeshError::Syntax { location: Location::Line(2), .. }));
    }

    #[test]
    fn obj_relative_indices_and_colors() {
        let m = parse_mesh(b"v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nf -3 -2 -1\n", MeshFormat::Obj).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert_eq!(m.colors.unwrap()[1], Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn obj_writes_vt_and_vn_per_vertex() {
        let mut m = Mesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        m.uvs = Some(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        m.normals = Some(vec![Vec3::z(); 3]);
        let text = String::from_utf8(serialize_mesh(&m, MeshFormat::Obj)).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("vt ")).count(), 3);
        assert_eq!(text.lines().filter(|l| l.starts_with("vn ")).count(), 3);
        assert!(text.contains("f 1/1/1 2/2/2 3/3/3"));
        assert_eq!(parse_mesh(text.as_bytes(), MeshFormat::Obj).unwrap(), m);
    }

    #[test]
    fn unit_triangle_roundtrips_in_every_format() {
        let m = Mesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        for f in [MeshFormat::Obj, MeshFormat::PlyAscii, MeshFormat::PlyBinary] {
            assert_eq!(parse_mesh(&serialize_mesh(&m, f), f).unwrap(), m, "{f:?}");
        }
    }

    /// Unit cube written the way common PLY exporters do it: float32
    /// coordinates, uchar/int face lists, a comment and an extra element.
    fn cube_binary_ply() -> (Vec<u8>, Vec<Vec3>, Vec<Triangle>) {
        let verts: Vec<[f32; 3]> = (0..8)
            .map(|i| [(i & 1) as f32, ((i >> 1) & 1) as f32, ((i >> 2) & 1) as f32])
            .collect();
        let tris: Vec<[i32; 3]> = vec![
            [0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6],
            [0, 1, 4], [1, 5, 4], [2, 6, 3], [3, 6, 7],
            [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5],
        ];
        let mut out = b"ply\nformat binary_little_endian 1.0\ncomment reference fixture\n\
element vertex 8\nproperty float x\nproperty float y\nproperty float z\n\
element face 12\nproperty list uchar int vertex_indices\n\
element material 1\nproperty uchar id\nend_header\n"
            .to_vec();
        for v in &verts {
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        for t in &tris {
            out.push(3);
            for i in t {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        out.push(7);
        (
            out,
            verts.iter().map(|v| Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64)).collect(),
            tris.iter().map(|t| [t[0] as u32, t[1] as u32, t[2] as u32]).collect(),
        )
    }

    #[test]
    fn binary_ply_cube_fixture_roundtrips() {
        let (bytes, verts, tris) = cube_binary_ply();
        let m = parse_mesh(&bytes, MeshFormat::PlyBinary).unwrap();
        assert_eq!(m.vertices, verts);
        assert_eq!(m.triangles, tris);
        let again = parse_mesh(&serialize_mesh(&m, MeshFormat::PlyBinary), MeshFormat::PlyBinary).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn binary_ply_truncation_is_located() {
        let (bytes, _, _) = cube_binary_ply();
        let err = parse_mesh(&bytes[..bytes.len() - 10], MeshFormat::PlyBinary).unwrap_err();
        assert!(matches!(err, MeshError::Syntax { location: Location::Offset(_), .. }));
    }

    #[test]
    fn ply_uchar_colors_scale_to_unit_range() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
property uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\n\
property list uchar int vertex_indices\nend_header\n0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 51\n3 0 1 2\n";
        let m = parse_mesh(src, MeshFormat::PlyAscii).unwrap();
        let c = m.colors.unwrap();
        assert_eq!(c[0], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(c[2], Vec3::new(0.0, 0.0, 0.2));
    }

    #[test]
    fn ply_big_endian_unsupported() {
        let err = parse_mesh(b"ply\nformat binary_big_endian 1.0\nend_header\n", MeshFormat::PlyBinary).unwrap_err();
        assert!(matches!(err, MeshError::Unsupported(_)));
    }
}
