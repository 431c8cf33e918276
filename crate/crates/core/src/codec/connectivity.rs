//! Connectivity coding.
//!
//! Edge-manifold, consistently oriented meshes are coded by a region-growing
//! traversal: a stack of cut-border loops (closed vertex cycles bounding the
//! decoded region) and a gate edge on the top loop. Each step attaches the
//! triangle beyond the gate and records how its third vertex relates to the
//! border:
//!
//! * `C` new vertex
//! * `L` / `R` the border vertex just before / after the gate
//! * `E` both (the loop closes)
//! * `S` another vertex of the same loop, which splits it (offset coded)
//! * `M` a vertex of a loop further down the stack, which merges the two
//!   (depth and offset coded)
//! * `B` no triangle: the gate is a mesh boundary edge
//!
//! Anything else (non-manifold vertices, inconsistent orientation) falls
//! back to delta-coded index triples.

use crate::mesh::{build_corner_table, CornerTable, BOUNDARY};
use crate::mesh::Triangle;

use super::bits::{ByteReader, ByteWriter};
use super::stream;
use super::CodecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ConnectivityMode {
    Traversal = 0,
    Raw = 1,
}

impl ConnectivityMode {
    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Traversal),
            1 => Some(Self::Raw),
            _ => None,
        }
    }
}

/// Byte breakdown of a coded connectivity blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConnectivityStats {
    /// Opcodes, offsets and component sizes.
    pub traversal_bytes: usize,
    /// Map from traversal order back to the original vertex order.
    pub order_bytes: usize,
    pub total_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct EncodedConnectivity {
    pub mode: ConnectivityMode,
    pub bytes: Vec<u8>,
    pub stats: ConnectivityStats,
}

const C: u32 = 0;
const L: u32 = 1;
const E: u32 = 2;
const R: u32 = 3;
const S: u32 = 4;
const M: u32 = 5;
const B: u32 = 6;
const OPCODES: usize = 7;

/// Traversal coding when possible, raw coding otherwise.
pub fn encode_connectivity(triangles: &[Triangle], vertex_count: usize) -> EncodedConnectivity {
    match encode_traversal(triangles, vertex_count) {
        Ok(enc) => enc,
        Err(reason) => {
            log::info!("connectivity falls back to raw coding: {reason}");
            encode_raw(triangles)
        }
    }
}

/// Decodes a whole connectivity blob.
pub fn decode_connectivity(mode: ConnectivityMode, bytes: &[u8], vertex_count: usize) -> Result<Vec<Triangle>, CodecError> {
    read_connectivity(mode, &mut ByteReader::new(bytes, 0), vertex_count)
}

pub(crate) fn read_connectivity(
    mode: ConnectivityMode,
    r: &mut ByteReader,
    vertex_count: usize,
) -> Result<Vec<Triangle>, CodecError> {
    match mode {
        ConnectivityMode::Traversal => decode_traversal(r, vertex_count),
        ConnectivityMode::Raw => decode_raw(r, vertex_count),
    }
}

pub fn encode_raw(triangles: &[Triangle]) -> EncodedConnectivity {
    let mut w = ByteWriter::new();
    w.varint(triangles.len() as u64);
    let mut prev = 0i64;
    let deltas: Vec<i64> = triangles
        .iter()
        .flatten()
        .map(|&i| {
            let d = i64::from(i) - prev;
            prev = i64::from(i);
            d
        })
        .collect();
    w.short_blob(&stream::encode_signed(&deltas));
    let total = w.len();
    EncodedConnectivity {
        mode: ConnectivityMode::Raw,
        bytes: w.buf,
        stats: ConnectivityStats {
            traversal_bytes: total,
            order_bytes: 0,
            total_bytes: total,
        },
    }
}

fn decode_raw(r: &mut ByteReader, vertex_count: usize) -> Result<Vec<Triangle>, CodecError> {
    let offset = r.offset();
    let n = r.bounded(super::MAX_ELEMENTS as u64 / 3, "triangle count")? as usize;
    let mut s = r.short_blob("index stream")?;
    let deltas = stream::read_signed(&mut s, 3 * n)?;
    r.finish("raw connectivity")?;
    let mut prev = 0i64;
    let mut out = Vec::with_capacity(n);
    for (t, chunk) in deltas.chunks_exact(3).enumerate() {
        let mut tri = [0u32; 3];
        for (k, d) in chunk.iter().enumerate() {
            let v = prev.checked_add(*d).filter(|v| (0..vertex_count as i64).contains(v));
            let Some(v) = v else {
                return Err(CodecError::Corrupt {
                    offset,
                    reason: "raw index out of range",
                });
            };
            tri[k] = v as u32;
            prev = v;
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            log::debug!("degenerate decoded triangle {t}");
            return Err(CodecError::Corrupt {
                offset,
                reason: "degenerate triangle",
            });
        }
        out.push(tri);
    }
    Ok(out)
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    vertex: u32,
    next: u32,
    prev: u32,
    /// The outgoing border edge was found to be a mesh boundary.
    dead: bool,
    /// Encoder only: corner facing the outgoing border edge inside the
    /// decoded triangle that owns it.
    corner: u32,
}

/// Cut-border loops shared by encoder and decoder.
#[derive(Debug, Default)]
struct Border {
    nodes: Vec<Node>,
    /// Gate node of each loop; the last entry is the active loop.
    stack: Vec<u32>,
}

impl Border {
    fn add(&mut self, vertex: u32, corner: u32) -> u32 {
        self.nodes.push(Node {
            vertex,
            next: NIL,
            prev: NIL,
            dead: false,
            corner,
        });
        (self.nodes.len() - 1) as u32
    }

    fn link(&mut self, a: u32, b: u32) {
        self.nodes[a as usize].next = b;
        self.nodes[b as usize].prev = a;
    }

    fn next(&self, n: u32) -> u32 {
        self.nodes[n as usize].next
    }

    fn prev(&self, n: u32) -> u32 {
        self.nodes[n as usize].prev
    }

    fn vertex(&self, n: u32) -> u32 {
        self.nodes[n as usize].vertex
    }

    fn start_loop(&mut self, v: [u32; 3], corners: [u32; 3]) -> [u32; 3] {
        let n = [self.add(v[0], corners[0]), self.add(v[1], corners[1]), self.add(v[2], corners[2])];
        self.link(n[0], n[1]);
        self.link(n[1], n[2]);
        self.link(n[2], n[0]);
        self.stack.push(n[0]);
        n
    }

    fn loop_nodes(&self, start: u32) -> Vec<u32> {
        let mut out = vec![start];
        let mut n = self.next(start);
        while n != start {
            out.push(n);
            n = self.next(n);
        }
        out
    }

    /// Steps `k` nodes forward from `from`, failing if `stop` is reached
    /// first (or at the end).
    fn walk(&self, from: u32, k: u64, stop: u32) -> Option<u32> {
        let mut n = from;
        for _ in 0..k {
            n = self.next(n);
            if n == stop {
                return None;
            }
        }
        Some(n)
    }

    /// Steps from `from` to `target`, counting, giving up at `stop`.
    fn distance(&self, from: u32, target: u32, stop: u32) -> Option<u64> {
        let mut n = from;
        let mut k = 0;
        while n != target {
            n = self.next(n);
            k += 1;
            if n == stop {
                return None;
            }
        }
        Some(k)
    }

    /// Marks the gate as boundary and moves to the next live edge of the
    /// active loop, dropping the loop when none is left. Returns the nodes
    /// of a dropped loop.
    fn boundary(&mut self) -> Option<Vec<u32>> {
        let g = self.stack.pop().expect("active loop");
        self.nodes[g as usize].dead = true;
        let mut n = self.next(g);
        while n != g {
            if !self.nodes[n as usize].dead {
                self.stack.push(n);
                return None;
            }
            n = self.next(n);
        }
        Some(self.loop_nodes(g))
    }

    /// Splits at `xn` (new triangle `a, x, b` over gate `g -> h`), leaving
    /// `[a, x', ...]` below and `[b, ..., x]` active. Returns the new node.
    fn split(&mut self, g: u32, xn: u32) -> u32 {
        let h = self.next(g);
        let x = self.vertex(xn);
        let old = self.nodes[xn as usize];
        let x2 = self.add(x, old.corner);
        self.nodes[x2 as usize].dead = old.dead;
        let after = old.next;
        self.link(g, x2);
        self.link(x2, after);
        self.link(xn, h);
        self.nodes[xn as usize].dead = false;
        self.nodes[g as usize].dead = false;
        x2
    }
}

/// Encoder-side failure; triggers the raw fallback.
#[derive(Debug, thiserror::Error)]
enum TraversalError {
    #[error("mesh is not an oriented edge-manifold")]
    NotManifold,
    #[error("vertex {0} is shared by separate triangle fans")]
    NonManifoldVertex(u32),
    #[error("more than {} vertices", u32::MAX)]
    TooLarge,
}

struct Encoder<'a> {
    ct: &'a CornerTable,
    border: Border,
    done: Vec<bool>,
    order: Vec<u32>,
    visited: Vec<bool>,
    /// Live border nodes per vertex.
    occurrences: Vec<Vec<u32>>,
    symbols: Vec<u32>,
    split_offsets: Vec<u64>,
    merge_depths: Vec<u64>,
    merge_offsets: Vec<u64>,
}

impl Encoder<'_> {
    fn node(&mut self, vertex: u32, corner: u32) -> u32 {
        let n = self.border.add(vertex, corner);
        self.occurrences[vertex as usize].push(n);
        n
    }

    fn forget(&mut self, n: u32) {
        let v = self.border.vertex(n) as usize;
        if let Some(i) = self.occurrences[v].iter().position(|&m| m == n) {
            self.occurrences[v].swap_remove(i);
        }
    }

    fn visit(&mut self, v: u32) -> Result<(), TraversalError> {
        if std::mem::replace(&mut self.visited[v as usize], true) {
            return Err(TraversalError::NonManifoldVertex(v));
        }
        self.order.push(v);
        Ok(())
    }

    fn processed(&self, corner: u32) -> bool {
        corner != BOUNDARY && self.done[CornerTable::triangle(corner) as usize]
    }

    /// Border node of `x` whose wedge contains the triangle at corner `cx`:
    /// swing around `x` through undecoded triangles until a decoded one
    /// shows which border edge bounds the wedge.
    fn occurrence(&self, cx: u32) -> Result<u32, TraversalError> {
        let ct = self.ct;
        let x = ct.vertex(cx);
        let start = CornerTable::triangle(cx);
        let find = |pred: &dyn Fn(u32) -> bool| {
            self.occurrences[x as usize]
                .iter()
                .copied()
                .find(|&n| pred(n))
                .ok_or(TraversalError::NonManifoldVertex(x))
        };
        let mut c = cx;
        loop {
            let y = ct.vertex(CornerTable::prev(c));
            let o = ct.opposite(CornerTable::next(c));
            if o == BOUNDARY {
                break;
            }
            if self.processed(o) {
                return find(&|n| self.border.vertex(self.border.next(n)) == y);
            }
            c = CornerTable::next(o);
            if CornerTable::triangle(c) == start {
                return Err(TraversalError::NonManifoldVertex(x));
            }
        }
        let mut c = cx;
        loop {
            let z = ct.vertex(CornerTable::next(c));
            let o = ct.opposite(CornerTable::prev(c));
            if o == BOUNDARY {
                return Err(TraversalError::NonManifoldVertex(x));
            }
            if self.processed(o) {
                return find(&|n| self.border.vertex(self.border.prev(n)) == z);
            }
            c = CornerTable::prev(o);
            if CornerTable::triangle(c) == start {
                return Err(TraversalError::NonManifoldVertex(x));
            }
        }
    }

    fn drop_loop(&mut self, nodes: Vec<u32>) {
        for n in nodes {
            self.forget(n);
        }
    }

    /// Codes one edge-connected component seeded at triangle `t`; returns
    /// its triangle count.
    fn component(&mut self, t: u32) -> Result<u64, TraversalError> {
        let ct = self.ct;
        let c0 = 3 * t;
        let corners = [c0, c0 + 1, c0 + 2];
        let v = corners.map(|c| ct.vertex(c));
        for &x in &v {
            self.visit(x)?;
        }
        self.done[t as usize] = true;
        // Edge v0->v1 faces corner c2, v1->v2 faces c0, v2->v0 faces c1.
        let nodes = self.border.start_loop(v, [corners[2], corners[0], corners[1]]);
        for n in nodes {
            self.occurrences[self.border.vertex(n) as usize].push(n);
        }
        let mut count = 1u64;
        let mut last_triangle_symbol = self.symbols.len();

        while let Some(&g) = self.border.stack.last() {
            let h = self.border.next(g);
            let cx = ct.opposite(self.border.nodes[g as usize].corner);
            if cx == BOUNDARY {
                self.symbols.push(B);
                if let Some(nodes) = self.border.boundary() {
                    self.drop_loop(nodes);
                }
                continue;
            }
            let tri = CornerTable::triangle(cx);
            if self.done[tri as usize] {
                return Err(TraversalError::NotManifold);
            }
            let x = ct.vertex(cx);
            // Corners facing the new border edges a->x and x->b.
            let (c_ax, c_xb) = (CornerTable::next(cx), CornerTable::prev(cx));
            if !self.visited[x as usize] {
                self.visit(x)?;
                let n = self.node(x, c_xb);
                self.border.link(g, n);
                self.border.link(n, h);
                self.border.nodes[g as usize].corner = c_ax;
                *self.border.stack.last_mut().unwrap() = n;
                self.symbols.push(C);
            } else {
                let left = self.processed(ct.opposite(c_ax));
                let right = self.processed(ct.opposite(c_xb));
                let p = self.border.prev(g);
                let q = self.border.next(h);
                match (left, right) {
                    (true, true) => {
                        if p != q || self.border.vertex(p) != x {
                            return Err(TraversalError::NonManifoldVertex(x));
                        }
                        let nodes = self.border.loop_nodes(g);
                        self.border.stack.pop();
                        self.drop_loop(nodes);
                        self.symbols.push(E);
                    }
                    (true, false) => {
                        if self.border.vertex(p) != x || p == q {
                            return Err(TraversalError::NonManifoldVertex(x));
                        }
                        self.forget(g);
                        self.border.link(p, h);
                        self.border.nodes[p as usize].corner = c_xb;
                        *self.border.stack.last_mut().unwrap() = p;
                        self.symbols.push(L);
                    }
                    (false, true) => {
                        if self.border.vertex(q) != x || p == q {
                            return Err(TraversalError::NonManifoldVertex(x));
                        }
                        self.forget(h);
                        self.border.link(g, q);
                        self.border.nodes[g as usize].corner = c_ax;
                        self.symbols.push(R);
                    }
                    (false, false) => {
                        let xn = self.occurrence(cx)?;
                        if let Some(k) = self.border.distance(h, xn, g) {
                            let x2 = self.border.split(g, xn);
                            self.occurrences[x as usize].push(x2);
                            self.border.nodes[g as usize].corner = c_ax;
                            self.border.nodes[xn as usize].corner = c_xb;
                            self.border.stack.pop();
                            self.border.stack.push(g);
                            self.border.stack.push(xn);
                            self.symbols.push(S);
                            self.split_offsets.push(k);
                        } else {
                            let depth = self.border.stack.len();
                            let found = (1..depth).find_map(|d| {
                                let og = self.border.stack[depth - 1 - d];
                                let k = if og == xn {
                                    Some(0)
                                } else {
                                    self.border.distance(self.border.next(og), xn, og).map(|k| k + 1)
                                };
                                k.map(|k| (d, k))
                            });
                            let Some((d, k)) = found else {
                                return Err(TraversalError::NonManifoldVertex(x));
                            };
                            let x2 = self.border.split(g, xn);
                            self.occurrences[x as usize].push(x2);
                            self.border.nodes[g as usize].corner = c_ax;
                            self.border.nodes[xn as usize].corner = c_xb;
                            self.border.stack.remove(depth - 1 - d);
                            *self.border.stack.last_mut().unwrap() = xn;
                            self.symbols.push(M);
                            self.merge_depths.push(d as u64);
                            self.merge_offsets.push(k);
                        }
                    }
                }
            }
            self.done[tri as usize] = true;
            count += 1;
            last_triangle_symbol = self.symbols.len();
        }
        // Boundary steps after the last triangle carry no information.
        self.symbols.truncate(last_triangle_symbol);
        Ok(count)
    }
}

fn encode_traversal(triangles: &[Triangle], vertex_count: usize) -> Result<EncodedConnectivity, TraversalError> {
    if vertex_count > u32::MAX as usize {
        return Err(TraversalError::TooLarge);
    }
    let mesh = crate::mesh::Mesh {
        vertices: Vec::new(),
        triangles: triangles.to_vec(),
        ..Default::default()
    };
    let ct = build_corner_table(&mesh).map_err(|_| TraversalError::NotManifold)?;
    let mut enc = Encoder {
        ct: &ct,
        border: Border::default(),
        done: vec![false; triangles.len()],
        order: Vec::with_capacity(vertex_count),
        visited: vec![false; vertex_count],
        occurrences: vec![Vec::new(); vertex_count],
        symbols: Vec::with_capacity(triangles.len()),
        split_offsets: Vec::new(),
        merge_depths: Vec::new(),
        merge_offsets: Vec::new(),
    };
    let mut components = Vec::new();
    for t in 0..triangles.len() {
        if !enc.done[t] {
            components.push(enc.component(t as u32)?);
        }
    }
    for v in 0..vertex_count as u32 {
        if !enc.visited[v as usize] {
            enc.order.push(v);
        }
    }

    let mut w = ByteWriter::new();
    w.varint(components.len() as u64);
    for &c in &components {
        w.varint(c);
    }
    w.varint(enc.symbols.len() as u64);
    w.short_blob(&stream::symbol_stream(&enc.symbols, OPCODES));
    w.short_blob(&stream::encode_unsigned(&enc.split_offsets));
    w.short_blob(&stream::encode_unsigned(&enc.merge_depths));
    w.short_blob(&stream::encode_unsigned(&enc.merge_offsets));
    let traversal_bytes = w.len();
    let mut prev = 0i64;
    let deltas: Vec<i64> = enc
        .order
        .iter()
        .map(|&v| {
            let d = i64::from(v) - prev;
            prev = i64::from(v);
            d
        })
        .collect();
    w.short_blob(&stream::encode_signed(&deltas));
    let total_bytes = w.len();
    Ok(EncodedConnectivity {
        mode: ConnectivityMode::Traversal,
        bytes: w.buf,
        stats: ConnectivityStats {
            traversal_bytes,
            order_bytes: total_bytes - traversal_bytes,
            total_bytes,
        },
    })
}

fn decode_traversal(r: &mut ByteReader, vertex_count: usize) -> Result<Vec<Triangle>, CodecError> {
    let start = r.offset();
    let limit = super::MAX_ELEMENTS as u64;
    let n_components = r.bounded(limit, "component count")? as usize;
    let mut sizes = Vec::with_capacity(n_components.min(1 << 16));
    let mut total = 0u64;
    for _ in 0..n_components {
        let s = r.bounded(limit, "component size")?;
        total += s;
        if s == 0 || total > limit {
            return Err(CodecError::Corrupt {
                offset: r.offset(),
                reason: "component size out of range",
            });
        }
        sizes.push(s);
    }
    let n_symbols = r.bounded(limit, "opcode count")? as usize;
    let symbols = stream::read_symbols(&mut r.short_blob("opcodes")?, n_symbols, OPCODES)?;
    let count = |s| symbols.iter().filter(|&&x| x == s).count();
    let splits = stream::read_unsigned(&mut r.short_blob("split offsets")?, count(S))?;
    let merge_depths = stream::read_unsigned(&mut r.short_blob("merge depths")?, count(M))?;
    let merge_offsets = stream::read_unsigned(&mut r.short_blob("merge offsets")?, count(M))?;
    let order_at = r.offset();
    let deltas = stream::read_signed(&mut r.short_blob("vertex order")?, vertex_count)?;
    r.finish("traversal connectivity")?;

    let corrupt = |reason| CodecError::Corrupt { offset: start, reason };

    let mut order = Vec::with_capacity(vertex_count);
    let mut seen = vec![false; vertex_count];
    let mut prev = 0i64;
    for d in deltas {
        let v = prev
            .checked_add(d)
            .filter(|v| (0..vertex_count as i64).contains(v))
            .ok_or(CodecError::Corrupt {
                offset: order_at,
                reason: "vertex order out of range",
            })?;
        if std::mem::replace(&mut seen[v as usize], true) {
            return Err(CodecError::Corrupt {
                offset: order_at,
                reason: "vertex order repeats a vertex",
            });
        }
        order.push(v as u32);
        prev = v;
    }

    let mut border = Border::default();
    let mut triangles: Vec<Triangle> = Vec::with_capacity(total as usize);
    let mut next_vertex = 0usize;
    let mut sym = symbols.iter();
    let mut splits = splits.into_iter();
    let mut merges = merge_depths.into_iter().zip(merge_offsets);
    let mut new_vertex = || {
        let v = next_vertex;
        next_vertex += 1;
        (v < vertex_count).then_some(v as u32).ok_or(corrupt("more vertices than declared"))
    };

    for &size in &sizes {
        border.stack.clear();
        let v = [new_vertex()?, new_vertex()?, new_vertex()?];
        border.start_loop(v, [NIL; 3]);
        triangles.push(v);
        let mut placed = 1u64;
        while placed < size {
            let &s = sym.next().ok_or(corrupt("opcodes end early"))?;
            let &g = border.stack.last().ok_or(corrupt("no active border"))?;
            let h = border.next(g);
            let (a, b) = (border.vertex(g), border.vertex(h));
            let p = border.prev(g);
            let q = border.next(h);
            let x = match s {
                C => {
                    let x = new_vertex()?;
                    let n = border.add(x, NIL);
                    border.link(g, n);
                    border.link(n, h);
                    *border.stack.last_mut().unwrap() = n;
                    x
                }
                L => {
                    if p == q {
                        return Err(corrupt("left step on a closing loop"));
                    }
                    border.link(p, h);
                    border.nodes[p as usize].dead = false;
                    *border.stack.last_mut().unwrap() = p;
                    border.vertex(p)
                }
                R => {
                    if p == q {
                        return Err(corrupt("right step on a closing loop"));
                    }
                    border.link(g, q);
                    border.vertex(q)
                }
                E => {
                    if p != q {
                        return Err(corrupt("end step on an open loop"));
                    }
                    border.stack.pop();
                    border.vertex(p)
                }
                S => {
                    let k = splits.next().ok_or(corrupt("split offsets end early"))?;
                    let xn = border
                        .walk(h, k, g)
                        .filter(|&n| k >= 2 && n != p)
                        .ok_or(corrupt("split offset out of range"))?;
                    border.split(g, xn);
                    border.stack.pop();
                    border.stack.push(g);
                    border.stack.push(xn);
                    border.vertex(xn)
                }
                M => {
                    let (d, k) = merges.next().ok_or(corrupt("merge offsets end early"))?;
                    let depth = border.stack.len();
                    if d == 0 || d as usize >= depth {
                        return Err(corrupt("merge depth out of range"));
                    }
                    let og = border.stack[depth - 1 - d as usize];
                    let xn = if k == 0 {
                        og
                    } else {
                        border
                            .walk(border.next(og), k - 1, og)
                            .ok_or(corrupt("merge offset out of range"))?
                    };
                    border.split(g, xn);
                    border.stack.remove(depth - 1 - d as usize);
                    *border.stack.last_mut().unwrap() = xn;
                    border.vertex(xn)
                }
                B => {
                    border.boundary();
                    continue;
                }
                _ => return Err(corrupt("unknown opcode")),
            };
            if x == a || x == b {
                return Err(corrupt("degenerate triangle"));
            }
            triangles.push([b, a, x]);
            placed += 1;
        }
    }
    if sym.next().is_some() || splits.next().is_some() || merges.next().is_some() {
        return Err(corrupt("unused traversal data"));
    }
    Ok(triangles
        .into_iter()
        .map(|t| t.map(|v| order[v as usize]))
        .collect())
}
